//! Multi-dimensional 0-1 balls.
//!
//! A ball populates `f` of `D` dimensions. Allocation runs on the scalar
//! reduction (the sum of a bin's dimension loads), so every ball weighs `f`
//! and estimates move in steps of `f / d`. Per-dimension gaps are measured
//! against the analytic average `balls * f / (n * D)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error, Result};
use crate::idea::{drive_sequential, BallSource, Engine, SystemState};
use crate::model::{AllocationOutcome, SimConfig, Variant};
use crate::rng::SimRng;
use crate::sim::{RunOptions, RunOutput};

/// How populated dimensions are picked.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MdDistribution {
    /// Uniform over all `f`-subsets.
    #[default]
    Uniform,
    /// Successive draws without replacement, proportional to the weights.
    /// Outside the proven regime: runs report no claim.
    Custom { weights: Vec<f64> },
}

impl MdDistribution {
    pub fn validate(&self, dims: usize) -> Result<(), ConfigError> {
        match self {
            MdDistribution::Uniform => Ok(()),
            MdDistribution::Custom { weights } => {
                if weights.len() != dims {
                    return Err(ConfigError::InvalidDimDistribution(format!(
                        "{} weights for {dims} dimensions",
                        weights.len()
                    )));
                }
                if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
                    return Err(ConfigError::InvalidDimDistribution(
                        "weights must be positive and finite".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Reads whitespace- or comma-separated weights from a file.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            cell: None,
            source,
        })?;
        let weights = text
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>().map_err(|_| ConfigError::Parse {
                    input: t.to_owned(),
                    reason: format!("not a number in {}", path.display()),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MdDistribution::Custom { weights })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MdBall {
    pub dims: usize,
    /// Sorted, distinct.
    pub populated: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdBinState {
    pub dim_loads: Vec<u32>,
    pub est_avg: f64,
}

impl MdBinState {
    pub fn scalar_load(&self) -> u64 {
        self.dim_loads.iter().map(|&x| x as u64).sum()
    }
}

/// Uniform `f`-subset of `0..dims`.
pub fn generate_md_ball(
    dims: usize,
    populated: usize,
    rng: &mut SimRng,
) -> Result<MdBall, ConfigError> {
    if populated == 0 || populated > dims {
        return Err(ConfigError::InvalidDims { dims, populated });
    }
    let mut set = Vec::with_capacity(populated);
    draw_ball(dims, populated, &MdDistribution::Uniform, rng, &mut set);
    Ok(MdBall {
        dims,
        populated: set,
    })
}

pub(crate) fn draw_ball(
    dims: usize,
    populated: usize,
    dist: &MdDistribution,
    rng: &mut SimRng,
    out: &mut Vec<usize>,
) {
    if populated == dims {
        // forced: no draw, so D = f = 1 replays the unweighted stream
        out.clear();
        out.extend(0..dims);
        return;
    }
    match dist {
        MdDistribution::Uniform => rng.fill_candidates(dims, populated, out),
        MdDistribution::Custom { weights } => {
            out.clear();
            let mut remaining: f64 = weights.iter().sum();
            for _ in 0..populated {
                let mut target = rng.unit() * remaining;
                let mut pick = None;
                for (i, w) in weights.iter().enumerate() {
                    if out.contains(&i) {
                        continue;
                    }
                    pick = Some(i);
                    if target < *w {
                        break;
                    }
                    target -= w;
                }
                let i = pick.expect("fewer dimensions than populated entries");
                remaining -= weights[i];
                out.push(i);
            }
        }
    }
    out.sort_unstable();
}

/// Bins of a multi-dimensional run: scalar state plus per-dimension loads.
#[derive(Clone, Debug)]
pub struct MdSystem {
    pub scalar: SystemState,
    pub dims: usize,
    dim_loads: Vec<u32>,
}

impl MdSystem {
    pub fn new(n: usize, dims: usize, populated: usize) -> Self {
        Self {
            scalar: SystemState::with_unit(n, populated as f64),
            dims,
            dim_loads: vec![0; n * dims],
        }
    }

    pub fn dim_loads(&self, bin: usize) -> &[u32] {
        &self.dim_loads[bin * self.dims..(bin + 1) * self.dims]
    }

    fn add(&mut self, bin: usize, populated: &[usize]) {
        for &q in populated {
            self.dim_loads[bin * self.dims + q] += 1;
        }
    }

    pub fn bins(&self) -> Vec<MdBinState> {
        (0..self.scalar.n())
            .map(|b| MdBinState {
                dim_loads: self.dim_loads(b).to_vec(),
                est_avg: self.scalar.bins[b].est_avg,
            })
            .collect()
    }
}

/// Places one ball on the scalar reduction.
pub fn allocate_md_ball(
    system: &mut MdSystem,
    ball: &MdBall,
    rng: &mut SimRng,
    cfg: &SimConfig,
) -> AllocationOutcome {
    let mut engine = Engine::new(cfg);
    let mut candidates = Vec::new();
    let ball_index = system.scalar.balls_placed + 1;
    let weight = ball.populated.len() as f64;
    let step = engine.step(&mut system.scalar, rng, weight, Some(&mut candidates));
    system.add(step.destination, &ball.populated);
    AllocationOutcome {
        ball_index,
        retries_used: step.retries,
        candidates,
        destination: step.destination,
        found_nonpositive: step.found_nonpositive,
    }
}

/// Largest excess of any bin in any dimension over `balls * f / (n * D)`.
pub fn md_gap(bins: &[MdBinState], balls_thrown: u64, dims: usize, populated: usize) -> f64 {
    if bins.is_empty() || dims == 0 {
        return 0.0;
    }
    let avg = balls_thrown as f64 * populated as f64 / (bins.len() as f64 * dims as f64);
    (0..dims)
        .map(|a| {
            let top = bins.iter().map(|b| b.dim_loads[a]).max().unwrap_or(0);
            top as f64 - avg
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

pub(crate) struct MdBalls<'a> {
    pub dims: usize,
    pub populated: usize,
    pub dist: &'a MdDistribution,
    pub relabel: Option<&'a [usize]>,
    pub current: Vec<usize>,
    pub dim_loads: Vec<u32>,
}

impl BallSource for MdBalls<'_> {
    fn next_weight(&mut self, rng: &mut SimRng) -> f64 {
        draw_ball(self.dims, self.populated, self.dist, rng, &mut self.current);
        if let Some(perm) = self.relabel {
            for q in self.current.iter_mut() {
                *q = perm[*q];
            }
        }
        self.populated as f64
    }

    fn placed(&mut self, destination: usize) {
        for &q in &self.current {
            self.dim_loads[destination * self.dims + q] += 1;
        }
    }
}

pub(crate) fn run_md_relabelled(
    cfg: &SimConfig,
    opts: &RunOptions,
    relabel: Option<&[usize]>,
) -> Result<(RunOutput, Vec<MdBinState>)> {
    let Variant::MultiDim {
        dims,
        populated,
        dist,
    } = &cfg.variant
    else {
        return Err(ConfigError::UnsupportedVariant {
            algorithm: cfg.algorithm.to_string(),
            variant: cfg.variant.label().into(),
        }
        .into());
    };
    let mut source = MdBalls {
        dims: *dims,
        populated: *populated,
        dist,
        relabel,
        current: Vec::with_capacity(*populated),
        dim_loads: vec![0; cfg.n * dims],
    };
    let (state, mut out) = drive_sequential(cfg, opts, *populated as f64, &mut source)?;
    let bins: Vec<MdBinState> = (0..cfg.n)
        .map(|b| MdBinState {
            dim_loads: source.dim_loads[b * dims..(b + 1) * dims].to_vec(),
            est_avg: state.bins[b].est_avg,
        })
        .collect();
    out.md_gap = Some(md_gap(&bins, cfg.m, *dims, *populated));
    out.claim = matches!(dist, MdDistribution::Uniform);
    Ok((out, bins))
}

/// Runs `cfg.m` multi-dimensional balls; `cfg.variant` must be `MultiDim`.
pub fn run_multidim(cfg: &SimConfig, opts: &RunOptions) -> Result<RunOutput> {
    run_md_relabelled(cfg, opts, None).map(|(out, _)| out)
}
