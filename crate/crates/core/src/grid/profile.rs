use super::{GridError, ZipLoad};

/// Spacing of every profile series, in seconds.
pub const PROFILE_STEP_S: f64 = 300.0;

/// Disaggregated shares are rounded to this many kW before the residual is
/// assigned to the last load.
const SHARE_QUANTUM_KW: f64 = 0.01;

/// Time series sampled every [`PROFILE_STEP_S`], held constant between
/// samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    values: Vec<f64>,
}

impl Profile {
    pub fn new(values: Vec<f64>) -> Result<Self, GridError> {
        if values.is_empty() {
            return Err(GridError::Profile("profile has no samples".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GridError::Profile("profile has non-finite samples".into()));
        }
        Ok(Profile { values })
    }

    /// Parses `time_s,value` CSV; times must be 0, 300, 600, ...
    pub fn from_csv(text: &str) -> Result<Self, GridError> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| GridError::Profile(e.to_string()))?;
        if headers.len() != 2 || &headers[0] != "time_s" || &headers[1] != "value" {
            return Err(GridError::Profile("header must be `time_s,value`".into()));
        }
        let mut values = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| GridError::Profile(e.to_string()))?;
            let row = i + 2;
            let num = |k: usize| -> Result<f64, GridError> {
                rec.get(k)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| GridError::Profile(format!("row {row}: bad number")))
            };
            let t = num(0)?;
            let expected = i as f64 * PROFILE_STEP_S;
            if (t - expected).abs() > 1e-6 {
                return Err(GridError::Profile(format!(
                    "row {row}: time {t} breaks the {PROFILE_STEP_S} s spacing (expected {expected})"
                )));
            }
            values.push(num(1)?);
        }
        Profile::new(values)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,value\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i as f64 * PROFILE_STEP_S, v));
        }
        out
    }

    pub fn index_at(&self, t: f64) -> usize {
        let i = (t.max(0.0) / PROFILE_STEP_S).floor() as usize;
        i.min(self.values.len() - 1)
    }

    pub fn value_at(&self, t: f64) -> f64 {
        self.values[self.index_at(t)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Splits a feeder-head kW series over `loads` in proportion to their rated
/// kW. Every load but the last gets its share rounded to 0.01 kW; the last
/// takes the residual `head - (s_0 + ... + s_{n-2})`, summed in file order.
/// Adding the last share back onto that partial sum reproduces the head value
/// to within one ulp; decimal shares cannot always hit it exactly in binary
/// floating point.
pub fn disaggregate_feeder_profile(
    head: &[f64],
    loads: &[ZipLoad],
) -> Result<Vec<Vec<f64>>, GridError> {
    if loads.is_empty() {
        return Err(GridError::Disaggregation("no loads to disaggregate over".into()));
    }
    let total: f64 = loads.iter().map(|l| l.rated_p).sum();
    if total <= 0.0 {
        return Err(GridError::Disaggregation("total rated power is zero".into()));
    }
    let last = loads.len() - 1;
    let mut out = vec![Vec::with_capacity(head.len()); loads.len()];
    for &h in head {
        let mut assigned = 0.0;
        for (i, load) in loads[..last].iter().enumerate() {
            let share = (h * load.rated_p / total / SHARE_QUANTUM_KW).round() * SHARE_QUANTUM_KW;
            assigned += share;
            out[i].push(share);
        }
        out[last].push(h - assigned);
    }
    Ok(out)
}
