use num_complex::Complex64;

use super::PowerFlowError;
use crate::grid::{ZipKind, ZipLoad};

/// `|V|^n` scaling of the load law for `kind`.
pub fn zip_scale(kind: ZipKind, v_mag: f64) -> f64 {
    match kind {
        ZipKind::ConstantPower => 1.0,
        ZipKind::ConstantCurrent => v_mag,
        ZipKind::ConstantImpedance => v_mag * v_mag,
    }
}

/// Complex power drawn by `load` at voltage `v`, in per-unit on `base_kva`.
pub fn evaluate_zip(load: &ZipLoad, v: Complex64, base_kva: f64) -> Result<Complex64, PowerFlowError> {
    let mag = v.norm();
    if mag == 0.0 || !mag.is_finite() {
        return Err(PowerFlowError::ZeroVoltage);
    }
    let rated = Complex64::new(load.rated_p, load.rated_q) / base_kva;
    Ok(rated * zip_scale(load.kind, mag))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PhaseSet;

    fn load(kind: ZipKind) -> ZipLoad {
        ZipLoad { bus: "1".into(), phases: PhaseSet::ABC, kind, rated_p: 800.0, rated_q: 300.0 }
    }

    #[test]
    fn constant_power_is_rated() {
        let v = Complex64::from_polar(0.9, (-2.0f64).to_radians());
        let s = evaluate_zip(&load(ZipKind::ConstantPower), v, 1000.0).unwrap();
        assert_eq!(s, Complex64::new(0.8, 0.3));
    }

    #[test]
    fn constant_impedance_scales_with_square() {
        let s = evaluate_zip(&load(ZipKind::ConstantImpedance), Complex64::new(0.95, 0.0), 1000.0)
            .unwrap();
        assert!((s.re - 0.9025 * 0.8).abs() < 1e-15);
        assert!((s.im - 0.9025 * 0.3).abs() < 1e-15);
        // power factor preserved
        assert!((s.im / s.re - 0.3 / 0.8).abs() < 1e-12);
    }

    #[test]
    fn constant_current_nominal() {
        let s = evaluate_zip(&load(ZipKind::ConstantCurrent), Complex64::new(1.0, 0.0), 1000.0)
            .unwrap();
        assert_eq!(s, Complex64::new(0.8, 0.3));
        let s = evaluate_zip(&load(ZipKind::ConstantCurrent), Complex64::new(0.0, 1.02), 1000.0)
            .unwrap();
        assert!((s.re - 0.8 * 1.02).abs() < 1e-15);
    }

    #[test]
    fn zero_voltage_rejected() {
        assert_eq!(
            evaluate_zip(&load(ZipKind::ConstantPower), Complex64::new(0.0, 0.0), 1.0),
            Err(PowerFlowError::ZeroVoltage)
        );
    }
}
