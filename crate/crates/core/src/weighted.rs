//! Weighted balls: bounded weights with mean `w_star`, estimates rising by
//! `W / d` per candidacy.

use std::fmt;
use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Result};
use crate::idea::{drive_sequential, BallSource, Engine, SystemState};
use crate::model::{AllocationOutcome, SimConfig};
use crate::rng::SimRng;
use crate::sim::{RunOptions, RunOutput};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightShape {
    /// Uniform on `[w_star - k, w_star + k]`.
    Uniform,
    /// Normal around `w_star`, rejected outside the bound.
    TruncatedNormal { sigma: f64 },
    /// Two values with mean `w_star`; `p` is the chance of the high one.
    /// The rarer side sits at distance `k`, the other side is scaled so the
    /// mean stays at `w_star`.
    TwoPoint { p: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightModel {
    pub w_star: f64,
    pub k: f64,
    pub shape: WeightShape,
}

impl WeightModel {
    pub fn uniform(w_star: f64, k: f64) -> Self {
        Self {
            w_star,
            k,
            shape: WeightShape::Uniform,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::InvalidWeightModel(msg));
        if !(self.w_star > 0.0 && self.w_star.is_finite()) {
            return bad(format!("w_star must be positive, got {}", self.w_star));
        }
        if !(self.k >= 0.0 && self.k < self.w_star) {
            return bad(format!(
                "k must satisfy 0 <= k < w_star, got k={} w_star={}",
                self.k, self.w_star
            ));
        }
        match self.shape {
            WeightShape::Uniform => Ok(()),
            WeightShape::TruncatedNormal { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                bad(format!("sigma must be positive, got {sigma}"))
            }
            WeightShape::TwoPoint { p } if !(p > 0.0 && p < 1.0) => {
                bad(format!("p must lie in (0, 1), got {p}"))
            }
            _ => Ok(()),
        }
    }

    /// Same law with every weight multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let shape = match self.shape {
            WeightShape::TruncatedNormal { sigma } => {
                WeightShape::TruncatedNormal { sigma: sigma * s }
            }
            other => other,
        };
        Self {
            w_star: self.w_star * s,
            k: self.k * s,
            shape,
        }
    }

    pub fn lower(&self) -> f64 {
        self.w_star - self.k
    }

    pub fn upper(&self) -> f64 {
        self.w_star + self.k
    }
}

impl fmt::Display for WeightModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.shape {
            WeightShape::Uniform => write!(f, "uniform:{},{}", self.w_star, self.k),
            WeightShape::TwoPoint { p } => write!(f, "twopoint:{},{},{}", self.w_star, self.k, p),
            WeightShape::TruncatedNormal { sigma } => {
                write!(f, "tnormal:{},{},{}", self.w_star, self.k, sigma)
            }
        }
    }
}

/// Parses `uniform:w_star,k`, `twopoint:w_star,k,p` or
/// `tnormal:w_star,k,sigma`.
impl FromStr for WeightModel {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = |reason: &str| ConfigError::Parse {
            input: s.to_owned(),
            reason: reason.to_owned(),
        };
        let (kind, args) = s.split_once(':').ok_or_else(|| err("missing `:`"))?;
        let nums = args
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| err("arguments must be numbers"))?;
        let model = match (kind, nums.as_slice()) {
            ("uniform", [w, k]) => WeightModel::uniform(*w, *k),
            ("twopoint", [w, k, p]) => WeightModel {
                w_star: *w,
                k: *k,
                shape: WeightShape::TwoPoint { p: *p },
            },
            ("tnormal", [w, k, sigma]) => WeightModel {
                w_star: *w,
                k: *k,
                shape: WeightShape::TruncatedNormal { sigma: *sigma },
            },
            ("uniform" | "twopoint" | "tnormal", _) => {
                return Err(err("wrong number of arguments"))
            }
            _ => return Err(err("unknown distribution")),
        };
        model.validate()?;
        Ok(model)
    }
}

/// Draws one weight from `model`.
pub fn sample_weight(model: &WeightModel, rng: &mut SimRng) -> Result<f64, ConfigError> {
    model.validate()?;
    Ok(draw(model, rng))
}

pub(crate) fn draw(model: &WeightModel, rng: &mut SimRng) -> f64 {
    let WeightModel { w_star, k, shape } = *model;
    if k == 0.0 {
        return w_star;
    }
    match shape {
        WeightShape::Uniform => w_star + k * (2.0 * rng.unit() - 1.0),
        WeightShape::TwoPoint { p } => {
            let high = rng.unit() < p;
            if p <= 0.5 {
                if high {
                    w_star + k
                } else {
                    w_star - k * p / (1.0 - p)
                }
            } else if high {
                w_star + k * (1.0 - p) / p
            } else {
                w_star - k
            }
        }
        WeightShape::TruncatedNormal { sigma } => loop {
            let z: f64 = StandardNormal.sample(rng);
            let w = w_star + sigma * z;
            if (w - w_star).abs() <= k {
                break w;
            }
        },
    }
}

/// Allocates one weighted ball; the weight is drawn before the candidates.
pub fn allocate_weighted_ball(
    state: &mut SystemState,
    rng: &mut SimRng,
    cfg: &SimConfig,
    model: &WeightModel,
) -> Result<(AllocationOutcome, f64), ConfigError> {
    model.validate()?;
    let weight = draw(model, rng);
    let mut engine = Engine::new(cfg);
    let mut candidates = Vec::new();
    let ball_index = state.balls_placed + 1;
    let step = engine.step(state, rng, weight, Some(&mut candidates));
    Ok((
        AllocationOutcome {
            ball_index,
            retries_used: step.retries,
            candidates,
            destination: step.destination,
            found_nonpositive: step.found_nonpositive,
        },
        weight,
    ))
}

struct WeightedBalls<'a> {
    model: &'a WeightModel,
}

impl BallSource for WeightedBalls<'_> {
    fn next_weight(&mut self, rng: &mut SimRng) -> f64 {
        draw(self.model, rng)
    }
}

/// Runs `cfg.m` weighted balls. Estimate levels are multiples of `w_star`.
pub fn run_weighted(cfg: &SimConfig, model: &WeightModel, opts: &RunOptions) -> Result<RunOutput> {
    model.validate()?;
    let mut source = WeightedBalls { model };
    drive_sequential(cfg, opts, model.w_star, &mut source).map(|(_, out)| out)
}
