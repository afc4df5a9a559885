//! Noise realisations on a uniform time grid and their coarsening.

use std::ops::Range;

use nalgebra::DMatrix;

use super::fbm::FbmGenerator;
use super::jumps::{sample_jump_path, JumpEvent, JumpLaw};
use super::rng::{fbm_pair_channel, stream, JUMP_CHANNEL};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::param("horizon", "T must be positive"));
        }
        if steps == 0 {
            return Err(Error::param("steps", "need at least one time step"));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// `t_m = m T / M`.
    pub fn time(&self, m: usize) -> f64 {
        m as f64 * self.horizon / self.steps as f64
    }

    /// Step `m` with `t ∈ (t_m, t_{m+1}]`.
    pub fn step_of(&self, t: f64) -> usize {
        let s = (t / self.dt()).ceil() as usize;
        s.clamp(1, self.steps) - 1
    }

    pub fn coarsen(&self, factor: usize) -> Result<TimeGrid> {
        if factor == 0 || !self.steps.is_multiple_of(factor) {
            return Err(Error::Coarsening {
                factor,
                steps: self.steps,
            });
        }
        Ok(TimeGrid {
            horizon: self.horizon,
            steps: self.steps / factor,
        })
    }

    pub fn same_as(&self, other: &TimeGrid) -> bool {
        self.steps == other.steps && (self.horizon - other.horizon).abs() <= 1e-14 * self.horizon
    }
}

/// One realisation of the driving noise.
#[derive(Debug, Clone)]
pub struct NoisePath {
    grid: TimeGrid,
    /// `n_modes × steps`; column `m` holds `Δβ_i^H(m)` for every mode
    increments: DMatrix<f64>,
    events: Vec<JumpEvent>,
    /// start index into `events` for each step, plus a final sentinel
    step_starts: Vec<usize>,
    origin: u64,
}

impl NoisePath {
    pub fn new(grid: TimeGrid, increments: DMatrix<f64>, events: Vec<JumpEvent>) -> Result<Self> {
        if increments.ncols() != grid.steps() {
            return Err(Error::Grid(format!(
                "{} increment columns for {} steps",
                increments.ncols(),
                grid.steps()
            )));
        }
        if events.windows(2).any(|w| w[0].time > w[1].time) {
            return Err(Error::param("events", "jump times must be sorted"));
        }
        if events.iter().any(|e| !(e.time > 0.0 && e.time <= grid.horizon())) {
            return Err(Error::param("events", "jump times must lie in (0, T]"));
        }
        let step_starts = bin_events(&grid, &events);
        let mut path = Self {
            grid,
            increments,
            events,
            step_starts,
            origin: 0,
        };
        path.origin = path.fingerprint();
        Ok(path)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_modes(&self) -> usize {
        self.increments.nrows()
    }

    pub fn increments(&self) -> &DMatrix<f64> {
        &self.increments
    }

    /// Per-mode increments of step `m`.
    pub fn step_increments(&self, m: usize) -> &[f64] {
        let n = self.n_modes();
        &self.increments.as_slice()[m * n..(m + 1) * n]
    }

    pub fn events(&self) -> &[JumpEvent] {
        &self.events
    }

    /// Jump events with time in `(t_m, t_{m+1}]`.
    pub fn step_events(&self, m: usize) -> &[JumpEvent] {
        &self.events[self.step_range(m)]
    }

    fn step_range(&self, m: usize) -> Range<usize> {
        self.step_starts[m]..self.step_starts[m + 1]
    }

    /// Fingerprint of the finest path this one was coarsened from.
    pub fn origin(&self) -> u64 {
        self.origin
    }

    /// FNV-1a hash over the raw bits of increments and events.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bits: u64| {
            for b in bits.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        eat(self.grid.steps() as u64);
        eat(self.grid.horizon().to_bits());
        for v in self.increments.iter() {
            eat(v.to_bits());
        }
        for e in &self.events {
            eat(e.time.to_bits());
            eat(e.mark.to_bits());
        }
        h
    }

    /// Sums fBm increments in blocks of `factor`; jump events are kept and
    /// re-binned on the coarser grid.
    pub fn coarsen(&self, factor: usize) -> Result<NoisePath> {
        let grid = self.grid.coarsen(factor)?;
        if factor == 1 {
            return Ok(self.clone());
        }
        let n = self.n_modes();
        let mut inc = DMatrix::zeros(n, grid.steps());
        for (c, mut col) in inc.column_iter_mut().enumerate() {
            for k in 0..factor {
                col += self.increments.column(c * factor + k);
            }
        }
        let step_starts = bin_events(&grid, &self.events);
        Ok(NoisePath {
            grid,
            increments: inc,
            events: self.events.clone(),
            step_starts,
            origin: self.origin,
        })
    }
}

fn bin_events(grid: &TimeGrid, events: &[JumpEvent]) -> Vec<usize> {
    let mut starts = vec![0usize; grid.steps() + 1];
    // count per step, then prefix sums
    for e in events {
        starts[grid.step_of(e.time) + 1] += 1;
    }
    for m in 0..grid.steps() {
        starts[m + 1] += starts[m];
    }
    starts
}

/// Draws noise paths sample by sample from per-sample random streams.
#[derive(Debug)]
pub struct NoiseSampler {
    grid: TimeGrid,
    n_modes: usize,
    fbm: Option<FbmGenerator>,
    jumps: JumpLaw,
    seed: u64,
}

impl NoiseSampler {
    /// `n_modes = 0` or `hurst = None` disables the fBm part.
    pub fn new(grid: TimeGrid, hurst: Option<f64>, n_modes: usize, jumps: JumpLaw, seed: u64) -> Result<Self> {
        let fbm = match hurst {
            Some(h) if n_modes > 0 => Some(FbmGenerator::new(h, grid.steps(), grid.dt())?),
            _ => None,
        };
        Ok(Self {
            grid,
            n_modes,
            fbm,
            jumps,
            seed,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn sample(&self, index: u64) -> NoisePath {
        let steps = self.grid.steps();
        let mut inc = DMatrix::zeros(self.n_modes, steps);
        if let Some(fbm) = &self.fbm {
            for pair in 0..self.n_modes.div_ceil(2) {
                let mut rng = stream(self.seed, index, fbm_pair_channel(pair));
                let (a, b) = fbm.sample_pair(&mut rng);
                for (row, values) in [(2 * pair, a), (2 * pair + 1, b)] {
                    if row < self.n_modes {
                        for (m, v) in values.into_iter().enumerate() {
                            inc[(row, m)] = v;
                        }
                    }
                }
            }
        }
        let mut rng = stream(self.seed, index, JUMP_CHANNEL);
        let events = sample_jump_path(&self.jumps, self.grid.horizon(), &mut rng);
        NoisePath::new(self.grid, inc, events).expect("sampled paths are well formed")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::jumps::MarkLaw;

    fn sampler(steps: usize) -> NoiseSampler {
        let grid = TimeGrid::new(1.0, steps).unwrap();
        let law = JumpLaw::new(6.0, MarkLaw::Normal { mean: 0.0, std: 1.0 }).unwrap();
        NoiseSampler::new(grid, Some(0.75), 5, law, 42).unwrap()
    }

    #[test]
    fn grid_times_and_bins() {
        let g = TimeGrid::new(2.0, 8).unwrap();
        assert_eq!(g.dt(), 0.25);
        assert_eq!(g.time(8), 2.0);
        assert_eq!(g.step_of(0.25), 0);
        assert_eq!(g.step_of(0.2500001), 1);
        assert_eq!(g.step_of(2.0), 7);
        assert!(g.coarsen(3).is_err());
        assert_eq!(g.coarsen(4).unwrap().steps(), 2);
    }

    #[test]
    fn identity_coarsening() {
        let p = sampler(16).sample(0);
        let q = p.coarsen(1).unwrap();
        assert_eq!(p.increments(), q.increments());
        assert_eq!(p.events(), q.events());
        assert_eq!(p.fingerprint(), q.fingerprint());
    }

    #[test]
    fn coarsening_preserves_totals_and_events() {
        let p = sampler(64).sample(3);
        let q = p.coarsen(8).unwrap();
        assert_eq!(q.grid().steps(), 8);
        for mode in 0..5 {
            let fine: f64 = p.increments().row(mode).iter().sum();
            let coarse: f64 = q.increments().row(mode).iter().sum();
            assert!((fine - coarse).abs() <= 1e-12);
        }
        assert_eq!(p.events(), q.events());
        assert_eq!(q.origin(), p.fingerprint());
        let total: usize = (0..8).map(|m| q.step_events(m).len()).sum();
        assert_eq!(total, q.events().len());
        for m in 0..8 {
            for e in q.step_events(m) {
                assert!(e.time > q.grid().time(m) && e.time <= q.grid().time(m + 1));
            }
        }
        assert!(p.coarsen(5).is_err());
    }

    #[test]
    fn samples_are_reproducible_and_independent_of_order() {
        let s = sampler(32);
        let a = s.sample(7);
        let _ = s.sample(1);
        let b = s.sample(7);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), s.sample(8).fingerprint());
    }

    #[test]
    fn unsorted_events_rejected() {
        let g = TimeGrid::new(1.0, 2).unwrap();
        let ev = vec![JumpEvent { time: 0.9, mark: 0.0 }, JumpEvent { time: 0.1, mark: 0.0 }];
        assert!(NoisePath::new(g, DMatrix::zeros(1, 2), ev).is_err());
    }
}
