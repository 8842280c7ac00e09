//! Fixtures shared by the benchmarks: the desk scenario's networks.

use std::path::{Path, PathBuf};

use tdsim_core::grid::{parse_grid_file, ParseMode};
use tdsim_core::GridModel;

pub fn desk_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/desk")
}

pub fn desk_grid(name: &str, mode: ParseMode) -> GridModel {
    let text = std::fs::read_to_string(desk_dir().join(name)).expect("desk scenario grid");
    parse_grid_file(&text, mode).expect("desk grid parses")
}
