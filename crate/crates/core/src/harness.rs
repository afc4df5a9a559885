//! Monte-Carlo strong-error studies in time and space and rate fitting.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{l2_error, prolongate, SpaceFn};
use crate::linalg::Tridiagonal;
use crate::model::{ModelSpec, Problem};
use crate::noise::{NoisePath, NoiseSampler, TimeGrid};
use crate::schemes::{check_divisibility, final_states, run_batch, Recording, Scheme};

/// Samples per batch. Fixed, so results do not depend on the thread count.
pub const DEFAULT_CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyMode {
    Temporal,
    Spatial,
}

impl fmt::Display for StudyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StudyMode::Temporal => "temporal",
            StudyMode::Spatial => "spatial",
        })
    }
}

#[derive(Clone)]
pub struct StudyConfig {
    pub scheme: Scheme,
    pub mode: StudyMode,
    /// time steps `M` (temporal) or interior node counts (spatial)
    pub resolutions: Vec<usize>,
    /// `M_ref` or the reference node count
    pub reference: usize,
    /// mesh of a temporal study
    pub n_interior: usize,
    /// time grid of a spatial study
    pub steps: usize,
    pub samples: usize,
    pub seed: u64,
    pub chunk: usize,
    /// `None` uses the ambient rayon pool
    pub threads: Option<usize>,
    /// spatial studies only: exact solution at `T` replacing the fine-mesh reference
    pub exact: Option<SpaceFn>,
}

impl fmt::Debug for StudyConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StudyConfig")
            .field("scheme", &self.scheme)
            .field("mode", &self.mode)
            .field("resolutions", &self.resolutions)
            .field("reference", &self.reference)
            .field("n_interior", &self.n_interior)
            .field("steps", &self.steps)
            .field("samples", &self.samples)
            .field("seed", &self.seed)
            .field("exact", &self.exact.is_some())
            .finish()
    }
}

impl StudyConfig {
    pub fn temporal(
        scheme: Scheme,
        resolutions: Vec<usize>,
        reference: usize,
        n_interior: usize,
        samples: usize,
        seed: u64,
    ) -> Self {
        Self {
            scheme,
            mode: StudyMode::Temporal,
            resolutions,
            reference,
            n_interior,
            steps: reference,
            samples,
            seed,
            chunk: DEFAULT_CHUNK,
            threads: None,
            exact: None,
        }
    }

    pub fn spatial(
        scheme: Scheme,
        resolutions: Vec<usize>,
        reference: usize,
        steps: usize,
        samples: usize,
        seed: u64,
    ) -> Self {
        Self {
            scheme,
            mode: StudyMode::Spatial,
            resolutions,
            reference,
            n_interior: reference,
            steps,
            samples,
            seed,
            chunk: DEFAULT_CHUNK,
            threads: None,
            exact: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::param("samples", "need at least two Monte-Carlo samples"));
        }
        if self.chunk == 0 {
            return Err(Error::param("chunk", "must be positive"));
        }
        if self.resolutions.is_empty() {
            return Err(Error::param("resolutions", "empty resolution list"));
        }
        if self.resolutions.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("resolutions", "must be strictly increasing"));
        }
        if self.mode == StudyMode::Temporal {
            check_divisibility(self.reference, &self.resolutions)?;
        }
        Ok(())
    }
}

/// Running `(count, Σx, Σx²)`; merging is associative up to rounding and
/// always applied in sample order.
#[derive(Debug, Default, Clone, Copy, PartialEq)]
pub struct Accumulator {
    pub count: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &Accumulator) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        let n = self.count as f64;
        if self.count < 2 {
            return f64::NAN;
        }
        let var = ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub resolution: usize,
    /// `Δt` or `h`
    pub dt_or_h: f64,
    /// `sqrt(mean ‖X_ref(T) − X(T)‖²)`
    pub rms_error: f64,
    /// standard error of `rms_error` (delta method)
    pub stderr: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    /// zero for an exactly determined two-point fit
    pub stderr: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub mode: StudyMode,
    pub scheme: Scheme,
    pub rows: Vec<ErrorRow>,
    pub fit: Option<RateFit>,
    /// every error sits at round-off level, so no rate can be read off
    pub floor_limited: bool,
    /// coarse paths verified to descend from the sample's fine path
    pub common_noise_checks: usize,
}

impl ErrorTable {
    fn from_accumulators(
        cfg: &StudyConfig,
        steps: Vec<f64>,
        acc: Vec<Accumulator>,
        scale: f64,
        checks: usize,
    ) -> Result<Self> {
        let rows: Vec<ErrorRow> = cfg
            .resolutions
            .iter()
            .zip(steps)
            .zip(&acc)
            .map(|((&resolution, dt_or_h), a)| {
                let rms = a.mean().max(0.0).sqrt();
                ErrorRow {
                    resolution,
                    dt_or_h,
                    rms_error: rms,
                    stderr: if rms > 0.0 { a.stderr() / (2.0 * rms) } else { 0.0 },
                    samples: a.count,
                }
            })
            .collect();
        let floor = 1e-11 * scale.max(f64::MIN_POSITIVE);
        let floor_limited = rows.iter().all(|r| r.rms_error <= floor);
        let fit = if floor_limited {
            None
        } else {
            Some(estimate_rate(
                &rows.iter().map(|r| (r.dt_or_h, r.rms_error)).collect::<Vec<_>>(),
            )?)
        };
        Ok(Self {
            mode: cfg.mode,
            scheme: cfg.scheme,
            rows,
            fit,
            floor_limited,
            common_noise_checks: checks,
        })
    }

    pub fn slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }
}

/// Ordinary least squares of `log e` on `log Δ`.
pub fn estimate_rate(rows: &[(f64, f64)]) -> Result<RateFit> {
    if rows.len() < 2 {
        return Err(Error::RateFit(format!("{} row(s)", rows.len())));
    }
    if let Some((d, e)) = rows.iter().find(|(d, e)| !(*d > 0.0) || !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::RateFit(format!("non-positive entry (Δ = {d}, error = {e})")));
    }
    let n = rows.len() as f64;
    let xs: Vec<f64> = rows.iter().map(|(d, _)| d.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|(_, e)| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::RateFit("all step sizes are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if rows.len() > 2 {
        let ssr: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (ssr / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(RateFit {
        slope,
        stderr,
        intercept,
    })
}

/// Runs `work` on each chunk of sample indices, in parallel when enabled,
/// and returns the results in chunk order.
fn map_chunks<T: Send>(
    samples: usize,
    chunk: usize,
    threads: Option<usize>,
    work: impl Fn(std::ops::Range<usize>) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    let ranges: Vec<_> = (0..samples.div_ceil(chunk))
        .map(|c| c * chunk..((c + 1) * chunk).min(samples))
        .collect();
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let run = || ranges.into_par_iter().map(&work).collect::<Result<Vec<T>>>();
        match threads {
            Some(k) => rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| Error::param("threads", e.to_string()))?
                .install(run),
            None => run(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        ranges.into_iter().map(work).collect()
    }
}

fn column_errors(mass: &Tridiagonal, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    (0..a.ncols())
        .map(|j| {
            let d: Vec<f64> = a.column(j).iter().zip(b.column(j).iter()).map(|(x, y)| x - y).collect();
            mass.bilinear(&d, &d)
        })
        .collect()
}

fn reduce(per_chunk: Vec<Vec<Vec<f64>>>, levels: usize) -> Vec<Accumulator> {
    let mut acc = vec![Accumulator::default(); levels];
    for chunk in per_chunk {
        for (a, errors) in acc.iter_mut().zip(chunk) {
            let mut local = Accumulator::default();
            errors.into_iter().for_each(|e| local.push(e));
            a.merge(&local);
        }
    }
    acc
}

fn sampler(problem: &Problem, grid: TimeGrid, seed: u64) -> Result<NoiseSampler> {
    NoiseSampler::new(grid, problem.hurst(), problem.n_modes(), problem.jumps, seed)
}

/// Strong error at `T` against an exponential-integrator reference on the
/// finest time grid, one mesh throughout.
pub fn temporal_study(problem: &Problem, cfg: &StudyConfig) -> Result<ErrorTable> {
    cfg.validate()?;
    let model = problem.discretize(cfg.n_interior)?;
    // build the shared eigenbasis before the workers need it
    model.kernels_at(0.0, Scheme::Smti.kernel_mode())?;
    let grid = TimeGrid::new(problem.horizon, cfg.reference)?;
    let noise = sampler(problem, grid, cfg.seed)?;
    let per_chunk = map_chunks(cfg.samples, cfg.chunk, cfg.threads, |range| {
        let fine: Vec<NoisePath> = range.map(|s| noise.sample(s as u64)).collect();
        let reference = final_states(&model, Scheme::Smti, &fine)?;
        let mut out = Vec::with_capacity(cfg.resolutions.len());
        for &m in &cfg.resolutions {
            let coarse = fine
                .iter()
                .map(|p| p.coarsen(cfg.reference / m))
                .collect::<Result<Vec<_>>>()?;
            verify_common_noise(&fine, &coarse)?;
            let x = final_states(&model, cfg.scheme, &coarse)?;
            out.push(column_errors(&model.mass, &reference, &x));
        }
        Ok(out)
    })?;
    let acc = reduce(per_chunk, cfg.resolutions.len());
    let steps = cfg.resolutions.iter().map(|&m| problem.horizon / m as f64).collect();
    let scale = model.x0.norm().max(1.0);
    let checks = cfg.samples * cfg.resolutions.len();
    ErrorTable::from_accumulators(cfg, steps, acc, scale, checks)
}

fn verify_common_noise(fine: &[NoisePath], coarse: &[NoisePath]) -> Result<()> {
    for (f, c) in fine.iter().zip(coarse) {
        if c.origin() != f.fingerprint() {
            return Err(Error::Grid(
                "coarse path does not descend from the sample's fine path".into(),
            ));
        }
    }
    Ok(())
}

/// Strong error at `T` on nested meshes with a fixed time grid; coarse
/// solutions are prolongated to the reference mesh.
pub fn spatial_study(problem: &Problem, cfg: &StudyConfig) -> Result<ErrorTable> {
    cfg.validate()?;
    let reference = problem.discretize(cfg.reference)?;
    let models = cfg
        .resolutions
        .iter()
        .map(|&n| {
            let m = problem.discretize(n)?;
            if n >= cfg.reference || !m.mesh.is_nested_in(&reference.mesh) {
                return Err(Error::InvalidMesh(format!(
                    "{} is not a strict coarsening of {}",
                    m.mesh, reference.mesh
                )));
            }
            m.kernels_at(0.0, cfg.scheme.kernel_mode())?;
            Ok(m)
        })
        .collect::<Result<Vec<ModelSpec>>>()?;
    reference.kernels_at(0.0, cfg.scheme.kernel_mode())?;
    let grid = TimeGrid::new(problem.horizon, cfg.steps)?;
    let noise = sampler(problem, grid, cfg.seed)?;
    let per_chunk = map_chunks(cfg.samples, cfg.chunk, cfg.threads, |range| {
        let paths: Vec<NoisePath> = range.map(|s| noise.sample(s as u64)).collect();
        let fine = match cfg.exact {
            Some(_) => None,
            None => Some(final_states(&reference, cfg.scheme, &paths)?),
        };
        let mut out = Vec::with_capacity(models.len());
        for model in &models {
            let x = final_states(model, cfg.scheme, &paths)?;
            let errors = match (&cfg.exact, &fine) {
                (Some(u), _) => (0..x.ncols())
                    .map(|j| l2_error(&model.mesh, &x.column(j).into_owned(), |s| u(s)).powi(2))
                    .collect(),
                (None, Some(fine)) => {
                    let mut lifted = DMatrix::zeros(reference.dim(), x.ncols());
                    for j in 0..x.ncols() {
                        let p = prolongate(&model.mesh, &reference.mesh, &x.column(j).into_owned())?;
                        lifted.column_mut(j).copy_from(&p);
                    }
                    column_errors(&reference.mass, fine, &lifted)
                }
                (None, None) => unreachable!(),
            };
            out.push(errors);
        }
        Ok(out)
    })?;
    let acc = reduce(per_chunk, models.len());
    let steps = models.iter().map(|m| m.mesh.h()).collect();
    let scale = reference.x0.norm().max(1.0);
    ErrorTable::from_accumulators(cfg, steps, acc, scale, 0)
}

pub fn run_study(problem: &Problem, cfg: &StudyConfig) -> Result<ErrorTable> {
    match cfg.mode {
        StudyMode::Temporal => temporal_study(problem, cfg),
        StudyMode::Spatial => spatial_study(problem, cfg),
    }
}

#[derive(Debug, Clone)]
pub struct HolderConfig {
    pub scheme: Scheme,
    pub n_interior: usize,
    pub steps: usize,
    /// separations in units of `Δt`
    pub lags: Vec<usize>,
    /// pairs start at or after this level
    pub start: usize,
    pub samples: usize,
    pub seed: u64,
    pub chunk: usize,
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub separations: Vec<f64>,
    /// `E‖X(t + τ) − X(t)‖²` averaged over admissible `t`
    pub mean_square_increments: Vec<f64>,
    pub stderr: Vec<f64>,
    pub fit: RateFit,
}

/// Exponent of `τ ↦ E‖X(t+τ) − X(t)‖²` along simulated trajectories.
pub fn holder_check(problem: &Problem, cfg: &HolderConfig) -> Result<HolderEstimate> {
    if cfg.samples < 2 {
        return Err(Error::param("samples", "need at least two Monte-Carlo samples"));
    }
    let max_lag = cfg.lags.iter().copied().max().unwrap_or(0);
    if cfg.lags.is_empty() || cfg.lags.contains(&0) || cfg.start + max_lag > cfg.steps {
        return Err(Error::param(
            "lags",
            "lags must be positive and fit after the start level",
        ));
    }
    let model = problem.discretize(cfg.n_interior)?;
    model.kernels_at(0.0, cfg.scheme.kernel_mode())?;
    let grid = TimeGrid::new(problem.horizon, cfg.steps)?;
    let noise = sampler(problem, grid, cfg.seed)?;
    let keep: Vec<usize> = (cfg.start..=cfg.steps).collect();
    let per_chunk = map_chunks(cfg.samples, cfg.chunk.max(1), cfg.threads, |range| {
        let paths: Vec<NoisePath> = range.map(|s| noise.sample(s as u64)).collect();
        let x0 = DMatrix::from_fn(model.dim(), paths.len(), |i, _| model.x0[i]);
        let mut states = Vec::with_capacity(keep.len());
        run_batch(
            &model,
            cfg.scheme,
            &paths,
            &x0,
            |_, x| states.push(x.clone()),
            &Recording::Steps(keep.clone()),
        )?;
        // per sample, the mean over start times for each lag
        let mut out = vec![vec![0.0; paths.len()]; cfg.lags.len()];
        for (l, &lag) in cfg.lags.iter().enumerate() {
            let pairs = states.len() - lag;
            for i in 0..pairs {
                let errs = column_errors(&model.mass, &states[i + lag], &states[i]);
                for (o, e) in out[l].iter_mut().zip(errs) {
                    *o += e / pairs as f64;
                }
            }
        }
        Ok(out)
    })?;
    let acc = reduce(per_chunk, cfg.lags.len());
    let dt = grid.dt();
    let separations: Vec<f64> = cfg.lags.iter().map(|&l| l as f64 * dt).collect();
    let means: Vec<f64> = acc.iter().map(Accumulator::mean).collect();
    let fit = estimate_rate(
        &separations
            .iter()
            .copied()
            .zip(means.iter().copied())
            .collect::<Vec<_>>(),
    )?;
    Ok(HolderEstimate {
        separations,
        mean_square_increments: means,
        stderr: acc.iter().map(Accumulator::stderr).collect(),
        fit,
    })
}
