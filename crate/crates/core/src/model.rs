//! Domain types shared by every allocator.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::multidim::MdDistribution;
use crate::weighted::WeightModel;

/// Comparison slack for estimated gaps and estimate levels, in units of the
/// per-ball weight scale. Loads and estimates are sums of multiples of
/// `1/d`, so exact float comparisons would flip on rounding noise.
pub const GAP_TOLERANCE: f64 = 1e-9;

/// One bin: its load and its running estimate of the system average.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BinState {
    pub load: f64,
    pub est_avg: f64,
}

impl BinState {
    #[inline]
    pub fn estimated_gap(&self) -> f64 {
        self.load - self.est_avg
    }
}

/// Load minus estimated average.
#[inline]
pub fn estimated_gap(bin: &BinState) -> f64 {
    bin.estimated_gap()
}

/// How bins decide whether a candidacy should raise their estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Balls carry their arrival number; estimates are gated on `ceil(j/n)`.
    Numbered,
    /// Bins poll random peers before crossing an integer level.
    Sampled,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Numbered => "numbered",
            Mode::Sampled => "sampled",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "numbered" => Ok(Mode::Numbered),
            "sampled" => Ok(Mode::Sampled),
            other => Err(ConfigError::Parse {
                input: other.to_owned(),
                reason: "expected `numbered` or `sampled`".into(),
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "idea")]
    Idea,
    #[serde(rename = "one")]
    OneChoice,
    #[serde(rename = "greedy")]
    GreedyD,
    #[serde(rename = "beta")]
    OnePlusBeta,
    #[serde(rename = "greedy-retry")]
    GreedyDRetry,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Idea,
        Algorithm::OneChoice,
        Algorithm::GreedyD,
        Algorithm::OnePlusBeta,
        Algorithm::GreedyDRetry,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Idea => "idea",
            Algorithm::OneChoice => "one",
            Algorithm::GreedyD => "greedy",
            Algorithm::OnePlusBeta => "beta",
            Algorithm::GreedyDRetry => "greedy-retry",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| ConfigError::Parse {
                input: s.to_owned(),
                reason: "expected one of idea, one, greedy, beta, greedy-retry".into(),
            })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Unweighted,
    Weighted(WeightModel),
    MultiDim {
        dims: usize,
        populated: usize,
        #[serde(default)]
        dist: MdDistribution,
    },
    Parallel,
}

impl Variant {
    pub fn label(&self) -> &'static str {
        match self {
            Variant::Unweighted => "unweighted",
            Variant::Weighted(_) => "weighted",
            Variant::MultiDim { .. } => "multidim",
            Variant::Parallel => "parallel",
        }
    }
}

fn default_epsilon() -> f64 {
    0.05
}

fn default_large_sample() -> usize {
    8
}

fn default_catch_up() -> bool {
    true
}

/// Full description of one experiment cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub m: u64,
    pub d: usize,
    pub gamma_max: u32,
    pub mode: Mode,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub beta: Option<f64>,
    pub seed: u64,
    pub trials: u32,
    pub variant: Variant,
    /// Sampled-mode tolerance on the peer average.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Peer sample size once `n * ceil(log2 n)` balls have been placed.
    #[serde(default = "default_large_sample")]
    pub sample_size_large: usize,
    /// Numbered mode: raise a lagging estimate to the number of completed
    /// batches of `n` balls when the bin is next chosen.
    #[serde(default = "default_catch_up")]
    pub catch_up: bool,
}

/// `ceil(log2 n)`, at least 1.
pub fn ceil_log2(n: usize) -> u32 {
    if n <= 2 {
        1
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

impl SimConfig {
    /// IDEA in numbered mode with the default retry cap `ceil(log2 n)`.
    pub fn new(n: usize, m: u64, d: usize) -> Self {
        Self {
            n,
            m,
            d,
            gamma_max: ceil_log2(n),
            mode: Mode::Numbered,
            algorithm: Algorithm::Idea,
            beta: None,
            seed: 0,
            trials: 1,
            variant: Variant::Unweighted,
            epsilon: default_epsilon(),
            sample_size_large: default_large_sample(),
            catch_up: default_catch_up(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_algorithm(mut self, algorithm: Algorithm) -> Self {
        self.algorithm = algorithm;
        self
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_trials(mut self, trials: u32) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_gamma_max(mut self, gamma_max: u32) -> Self {
        self.gamma_max = gamma_max;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = Some(beta);
        self
    }

    /// The parallel protocol has no global ball order, so it always runs
    /// the sampled policy.
    pub fn effective_mode(&self) -> Mode {
        match self.variant {
            Variant::Parallel => Mode::Sampled,
            _ => self.mode,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n == 0 {
            return Err(ConfigError::NoBins);
        }
        if self.d == 0 {
            return Err(ConfigError::NoChoices);
        }
        if self.d > self.n {
            return Err(ConfigError::TooManyChoices {
                d: self.d,
                n: self.n,
            });
        }
        if self.gamma_max == 0 {
            return Err(ConfigError::ZeroRetryCap);
        }
        if self.trials == 0 {
            return Err(ConfigError::NoTrials);
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(ConfigError::InvalidPolicy(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.sample_size_large == 0 {
            return Err(ConfigError::InvalidPolicy(
                "sample size must be at least 1".into(),
            ));
        }
        match self.algorithm {
            Algorithm::OnePlusBeta => match self.beta {
                None => return Err(ConfigError::MissingBeta),
                Some(b) if !(b > 0.0 && b < 1.0) => return Err(ConfigError::InvalidBeta(b)),
                Some(_) => {}
            },
            _ => {
                if let Some(b) = self.beta {
                    if !(b > 0.0 && b < 1.0) {
                        return Err(ConfigError::InvalidBeta(b));
                    }
                }
            }
        }
        if self.algorithm == Algorithm::OnePlusBeta && self.d != 2 && self.n >= 2 {
            // the process is defined on two choices
            return Err(ConfigError::UnsupportedVariant {
                algorithm: format!("beta with d={}", self.d),
                variant: self.variant.label().into(),
            });
        }
        match &self.variant {
            Variant::Unweighted => {}
            Variant::Weighted(model) => model.validate()?,
            Variant::MultiDim {
                dims,
                populated,
                dist,
            } => {
                if *populated == 0 || populated > dims {
                    return Err(ConfigError::InvalidDims {
                        dims: *dims,
                        populated: *populated,
                    });
                }
                dist.validate(*dims)?;
            }
            Variant::Parallel => {}
        }
        if self.algorithm != Algorithm::Idea && self.variant != Variant::Unweighted {
            return Err(ConfigError::UnsupportedVariant {
                algorithm: self.algorithm.to_string(),
                variant: self.variant.label().into(),
            });
        }
        Ok(())
    }
}

/// Record of one ball's passage through an allocator.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationOutcome {
    /// 1-based arrival number.
    pub ball_index: u64,
    /// Number of candidate sets drawn.
    pub retries_used: u32,
    pub candidates: Vec<Vec<usize>>,
    pub destination: usize,
    pub found_nonpositive: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimated_gap_examples() {
        let empty = BinState::default();
        assert_eq!(estimated_gap(&empty), 0.0);
        let b = BinState {
            load: 3.0,
            est_avg: 2.5,
        };
        assert_eq!(estimated_gap(&b), 0.5);
        let once = BinState {
            load: 1.0,
            est_avg: 0.5,
        };
        assert_eq!(estimated_gap(&once), 0.5);
    }

    #[test]
    fn ceil_log2_values() {
        assert_eq!(ceil_log2(1), 1);
        assert_eq!(ceil_log2(2), 1);
        assert_eq!(ceil_log2(3), 2);
        assert_eq!(ceil_log2(1024), 10);
        assert_eq!(ceil_log2(1000), 10);
        assert_eq!(ceil_log2(10_000), 14);
    }

    #[test]
    fn validation_catches_bad_configs() {
        assert_eq!(
            SimConfig::new(3, 10, 4).validate(),
            Err(ConfigError::TooManyChoices { d: 4, n: 3 })
        );
        assert_eq!(
            SimConfig::new(0, 10, 1).validate(),
            Err(ConfigError::NoBins)
        );
        let beta = SimConfig::new(10, 10, 2).with_algorithm(Algorithm::OnePlusBeta);
        assert_eq!(beta.validate(), Err(ConfigError::MissingBeta));
        assert_eq!(
            beta.clone().with_beta(1.0).validate(),
            Err(ConfigError::InvalidBeta(1.0))
        );
        assert!(beta.with_beta(0.5).validate().is_ok());
        let md = SimConfig::new(10, 10, 2).with_variant(Variant::MultiDim {
            dims: 3,
            populated: 4,
            dist: MdDistribution::Uniform,
        });
        assert!(matches!(
            md.validate(),
            Err(ConfigError::InvalidDims { .. })
        ));
        let bad = SimConfig::new(10, 10, 2)
            .with_algorithm(Algorithm::GreedyD)
            .with_variant(Variant::Parallel);
        assert!(matches!(
            bad.validate(),
            Err(ConfigError::UnsupportedVariant { .. })
        ));
    }

    #[test]
    fn names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.as_str().parse::<Algorithm>().unwrap(), a);
        }
        assert_eq!("sampled".parse::<Mode>().unwrap(), Mode::Sampled);
        assert!("fast".parse::<Mode>().is_err());
    }

    proptest::proptest! {
        #[test]
        fn estimated_gap_is_linear_in_load(load in 0.0f64..1e6, est in 0.0f64..1e6, delta in -1e3f64..1e3) {
            let a = BinState { load, est_avg: est };
            let b = BinState { load: load + delta, est_avg: est };
            let lhs = estimated_gap(&b);
            let rhs = estimated_gap(&a) + delta;
            proptest::prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + load.abs() + est.abs()));
        }
    }
}
