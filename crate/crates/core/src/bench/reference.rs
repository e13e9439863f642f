//! Slow, direct re-statement of every allocator for trace comparison.
//!
//! Written against the algorithm descriptions rather than the optimized
//! code: dense shuffles, full rescans, no cached counts. It consumes the
//! random stream in the same order, so its hash chain must match the main
//! allocators ball for ball.

use crate::error::ConfigError;
use crate::model::{ceil_log2, Algorithm, BinState, Mode, SimConfig, Variant};
use crate::multidim::MdDistribution;
use crate::rng::SimRng;
use crate::trace::{chain_state_hash, TraceRecord, CHAIN_START};

pub const MAX_BINS: usize = 64;
pub const MAX_BALLS: u64 = 1000;

/// Trace plus final bins of a reference run.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceRun {
    pub trace: Vec<TraceRecord>,
    pub bins: Vec<BinState>,
}

/// Trace of `cfg` computed by the reference implementation.
pub fn reference_allocate(cfg: &SimConfig) -> Result<Vec<TraceRecord>, ConfigError> {
    reference_run(cfg).map(|r| r.trace)
}

pub fn reference_run(cfg: &SimConfig) -> Result<ReferenceRun, ConfigError> {
    cfg.validate()?;
    if cfg.n > MAX_BINS || cfg.m > MAX_BALLS {
        return Err(ConfigError::InstanceTooLarge { n: cfg.n, m: cfg.m });
    }
    let mut r = Ref::new(cfg);
    match (cfg.algorithm, &cfg.variant) {
        (Algorithm::Idea, Variant::Parallel) => r.parallel(),
        (Algorithm::Idea, _) => r.sequential(),
        _ => r.baseline(),
    }
    Ok(ReferenceRun {
        trace: r.trace,
        bins: r.bins,
    })
}

struct Ref<'a> {
    cfg: &'a SimConfig,
    rng: SimRng,
    bins: Vec<BinState>,
    unit: f64,
    placed: u64,
    hash: u64,
    trace: Vec<TraceRecord>,
}

impl<'a> Ref<'a> {
    fn new(cfg: &'a SimConfig) -> Self {
        let unit = match &cfg.variant {
            Variant::Weighted(w) => w.w_star,
            Variant::MultiDim { populated, .. } => *populated as f64,
            _ => 1.0,
        };
        Self {
            cfg,
            rng: SimRng::new(cfg.seed),
            bins: vec![BinState::default(); cfg.n],
            unit,
            placed: 0,
            hash: CHAIN_START,
            trace: Vec::new(),
        }
    }

    fn tol(&self) -> f64 {
        1e-9 * self.unit
    }

    fn shuffle_pick(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut a: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.rng.below(n - i);
            a.swap(i, j);
        }
        a.truncate(k);
        a
    }

    fn argmin(&mut self, set: &[usize], key: &dyn Fn(usize) -> f64) -> usize {
        let tol = self.tol();
        let mut best = f64::INFINITY;
        for &b in set {
            if key(b) < best {
                best = key(b);
            }
        }
        let tied: Vec<usize> = set
            .iter()
            .copied()
            .filter(|&b| key(b) <= best + tol)
            .collect();
        if tied.len() == 1 {
            tied[0]
        } else {
            tied[self.rng.below(tied.len())]
        }
    }

    /// Retry loop over gaps given by `gaps`; returns all sets drawn.
    fn draw_sets(&mut self, gaps: &[f64]) -> (Vec<Vec<usize>>, bool) {
        let tol = self.tol();
        let mut sets = Vec::new();
        loop {
            let set = self.shuffle_pick(self.cfg.n, self.cfg.d);
            let found = set.iter().any(|&b| gaps[b] <= tol);
            sets.push(set);
            if found || sets.len() as u32 == self.cfg.gamma_max + 1 {
                return (sets, found);
            }
        }
    }

    fn gaps(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.load - b.est_avg).collect()
    }

    fn next_weight(&mut self) -> f64 {
        match &self.cfg.variant {
            Variant::Weighted(w) => crate::weighted::draw(w, &mut self.rng),
            Variant::MultiDim {
                dims,
                populated,
                dist,
            } => {
                // the drawn dimensions do not feed back into decisions
                let mut scratch = Vec::new();
                let dist: &MdDistribution = dist;
                crate::multidim::draw_ball(*dims, *populated, dist, &mut self.rng, &mut scratch);
                *populated as f64
            }
            _ => 1.0,
        }
    }

    fn raise_estimate(&mut self, bin: usize, inc: f64, j: u64, mode: Mode) {
        let unit = self.unit;
        let tol = self.tol();
        match mode {
            Mode::Numbered => {
                let cap = (j as f64 / self.cfg.n as f64).ceil() * unit;
                if self.cfg.catch_up && self.bins[bin].est_avg < cap - unit - tol {
                    self.bins[bin].est_avg = cap - unit;
                }
                if self.bins[bin].est_avg <= cap + tol {
                    self.bins[bin].est_avg += inc;
                }
            }
            Mode::Sampled => {
                let est = self.bins[bin].est_avg;
                let level = (est / unit - 1e-9).ceil();
                let crosses = level >= 1.0 && (est + inc) / unit > level + 1e-9;
                if crosses {
                    let n = self.cfg.n;
                    let size = if self.placed < n as u64 * ceil_log2(n) as u64 {
                        ceil_log2(n) as usize
                    } else {
                        self.cfg.sample_size_large
                    };
                    let mut total = 0.0;
                    for _ in 0..size {
                        let peer = self.rng.below(n);
                        total += self.bins[peer].est_avg;
                    }
                    if total / size as f64 / unit < level - self.cfg.epsilon {
                        return;
                    }
                }
                self.bins[bin].est_avg += inc;
            }
        }
    }

    fn record(
        &mut self,
        ball: u64,
        sets: Vec<Vec<usize>>,
        dest: usize,
        found: bool,
        round: Option<u32>,
    ) {
        self.hash = chain_state_hash(self.hash, &self.bins);
        self.trace.push(TraceRecord {
            ball,
            retries: sets.len() as u32,
            candidates: sets,
            dest,
            found_nonpositive: found,
            state_hash: self.hash,
            round,
        });
    }

    fn sequential(&mut self) {
        let mode = self.cfg.effective_mode();
        for j in 1..=self.cfg.m {
            let w = self.next_weight();
            let gaps = self.gaps();
            let (sets, found) = self.draw_sets(&gaps);
            let last = sets.last().unwrap().clone();
            let dest = self.argmin(&last, &|b| gaps[b]);
            self.bins[dest].load += w;
            for &c in &last {
                self.raise_estimate(c, w / self.cfg.d as f64, j, mode);
            }
            self.placed = j;
            self.record(j, sets, dest, found, None);
        }
    }

    fn parallel(&mut self) {
        let n = self.cfg.n;
        let mut waiting: Vec<u64> = (1..=self.cfg.m).collect();
        let mut round = 0;
        while !waiting.is_empty() {
            round += 1;
            let gaps = self.gaps();
            let mut tries = Vec::new();
            for &ball in &waiting {
                let (sets, found) = self.draw_sets(&gaps);
                let last = sets.last().unwrap().clone();
                let target = self.argmin(&last, &|b| gaps[b]);
                tries.push((ball, sets, found, target));
            }
            let mut winner = vec![None; n];
            for (bin, slot) in winner.iter_mut().enumerate() {
                let asking: Vec<usize> = (0..tries.len()).filter(|&t| tries[t].3 == bin).collect();
                *slot = match asking.len() {
                    0 => None,
                    1 => Some(asking[0]),
                    k => Some(asking[self.rng.below(k)]),
                };
            }
            let mut next = Vec::new();
            for (t, (ball, sets, found, target)) in tries.into_iter().enumerate() {
                if winner[target] != Some(t) {
                    next.push(ball);
                    continue;
                }
                self.bins[target].load += 1.0;
                let j = self.placed + 1;
                for c in sets.last().unwrap().clone() {
                    self.raise_estimate(c, 1.0 / self.cfg.d as f64, j, Mode::Sampled);
                }
                self.placed = j;
                self.record(ball, sets, target, found, Some(round));
            }
            waiting = next;
        }
    }

    fn baseline(&mut self) {
        let n = self.cfg.n;
        let d = self.cfg.d;
        for j in 1..=self.cfg.m {
            let loads: Vec<f64> = self.bins.iter().map(|b| b.load).collect();
            let sets = match self.cfg.algorithm {
                Algorithm::OneChoice => vec![vec![self.rng.below(n)]],
                Algorithm::GreedyD => vec![self.shuffle_pick(n, d)],
                Algorithm::OnePlusBeta => {
                    if self.rng.unit() < self.cfg.beta.unwrap() {
                        vec![self.shuffle_pick(n, n.min(2))]
                    } else {
                        vec![vec![self.rng.below(n)]]
                    }
                }
                Algorithm::GreedyDRetry => (0..self.cfg.gamma_max)
                    .map(|_| self.shuffle_pick(n, d))
                    .collect(),
                Algorithm::Idea => unreachable!(),
            };
            let mut pool: Vec<usize> = Vec::new();
            for s in &sets {
                for &b in s {
                    if !pool.contains(&b) {
                        pool.push(b);
                    }
                }
            }
            // load ties use an absolute tolerance
            let saved = self.unit;
            self.unit = 1.0;
            let dest = self.argmin(&pool, &|b| loads[b]);
            self.unit = saved;
            self.bins[dest].load += 1.0;
            self.placed = j;
            self.record(j, sets, dest, false, None);
        }
    }
}
