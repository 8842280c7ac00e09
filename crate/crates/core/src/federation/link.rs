//! Simulated communication links.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::MessageFrame;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Latency {
    Fixed(f64),
    Uniform { lo: f64, hi: f64 },
    /// Normal, truncated at zero by `max(0, ·)`.
    Normal { mean: f64, sd: f64 },
}

impl Latency {
    /// Expected value before truncation.
    pub fn nominal_mean(&self) -> f64 {
        match *self {
            Latency::Fixed(x) => x,
            Latency::Uniform { lo, hi } => 0.5 * (lo + hi),
            Latency::Normal { mean, .. } => mean,
        }
    }

    fn validate(&self) -> Result<(), LinkError> {
        let ok = match *self {
            Latency::Fixed(x) => x.is_finite() && x >= 0.0,
            Latency::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi,
            Latency::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(LinkError::Latency(format!("{self:?}")))
        }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum LinkError {
    #[error("invalid latency distribution {0}")]
    Latency(String),
    #[error("drop probability {0} outside [0, 1]")]
    DropProb(f64),
    #[error("sever window [{0}, {1}) is empty or reversed")]
    Window(f64, f64),
    #[error("unknown link preset `{0}`")]
    Preset(String),
}

/// Configuration of one directed channel.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkModel {
    pub latency: Latency,
    pub drop_prob: f64,
    /// Half-open `[start, end)` windows in simulation seconds.
    pub sever_windows: Vec<(f64, f64)>,
    pub rng_seed: u64,
}

impl LinkModel {
    pub fn new(
        latency: Latency,
        drop_prob: f64,
        sever_windows: Vec<(f64, f64)>,
        rng_seed: u64,
    ) -> Result<Self, LinkError> {
        latency.validate()?;
        if !(0.0..=1.0).contains(&drop_prob) {
            return Err(LinkError::DropProb(drop_prob));
        }
        for &(a, b) in &sever_windows {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(LinkError::Window(a, b));
            }
        }
        Ok(LinkModel { latency, drop_prob, sever_windows, rng_seed })
    }

    /// VPN tunnel: normal(0.110 s, 0.02 s).
    pub fn vpn(seed: u64) -> Self {
        LinkModel::new(Latency::Normal { mean: 0.110, sd: 0.02 }, 0.0, Vec::new(), seed).unwrap()
    }

    /// Shared-file exchange: uniform(30 s, 90 s).
    pub fn fileshare(seed: u64) -> Self {
        LinkModel::new(Latency::Uniform { lo: 30.0, hi: 90.0 }, 0.0, Vec::new(), seed).unwrap()
    }

    pub fn ideal(seed: u64) -> Self {
        LinkModel::new(Latency::Fixed(0.0), 0.0, Vec::new(), seed).unwrap()
    }

    pub fn preset(name: &str, seed: u64) -> Result<Self, LinkError> {
        match name {
            "vpn" => Ok(LinkModel::vpn(seed)),
            "fileshare" => Ok(LinkModel::fileshare(seed)),
            "ideal" => Ok(LinkModel::ideal(seed)),
            other => Err(LinkError::Preset(other.to_string())),
        }
    }

    pub fn is_severed(&self, t: f64) -> bool {
        self.sever_windows.iter().any(|&(a, b)| t >= a && t < b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DropReason {
    Severed,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinkDecision {
    Deliver { at: f64, sampled_latency: f64 },
    Drop(DropReason),
}

/// A link in operation: its model, random stream and FIFO watermark.
#[derive(Debug, Clone)]
pub struct Link {
    pub model: LinkModel,
    rng: ChaCha8Rng,
    last_delivery: f64,
}

impl Link {
    pub fn new(model: LinkModel) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(model.rng_seed);
        Link { model, rng, last_delivery: f64::NEG_INFINITY }
    }

    /// Decides the fate of a message sent at `send_time`. Every call draws
    /// exactly one drop variate and one latency variate, so sever windows and
    /// drops never shift the stream seen by later messages.
    pub fn send(&mut self, send_time: f64) -> LinkDecision {
        let u: f64 = self.rng.random();
        let sampled = self.sample_latency().max(0.0);
        if self.model.is_severed(send_time) {
            return LinkDecision::Drop(DropReason::Severed);
        }
        if u < self.model.drop_prob {
            return LinkDecision::Drop(DropReason::Random);
        }
        let at = (send_time + sampled).max(self.last_delivery);
        self.last_delivery = at;
        LinkDecision::Deliver { at, sampled_latency: sampled }
    }

    fn sample_latency(&mut self) -> f64 {
        match self.model.latency {
            Latency::Fixed(x) => {
                let _: f64 = self.rng.random();
                x
            }
            Latency::Uniform { lo, hi } => {
                let u: f64 = self.rng.random();
                lo + (hi - lo) * u
            }
            Latency::Normal { mean, sd } => {
                // validated at construction
                Normal::new(mean, sd).expect("valid normal").sample(&mut self.rng)
            }
        }
    }
}

/// Functional form of [`Link::send`]; the frame itself does not influence
/// the decision.
pub fn link_send(link: &mut Link, _frame: &MessageFrame, send_time: f64) -> LinkDecision {
    link.send(send_time)
}
