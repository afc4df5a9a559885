//! Statistical checks of the noise generators against their exact laws.
//!
//! Each check compares a Monte-Carlo estimate with its exact value and
//! passes when the discrepancy stays inside the stated band (a multiple of
//! the estimated standard error, or a relative tolerance).

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson as PoissonPmf};

use super::fbm::{increment_autocovariance, FbmGenerator};
use super::field::{FbmSpec, FieldProjector};
use super::jumps::{compensated_increment, sample_jump_path, JumpLaw, JumpSpec};
use super::path::{NoiseSampler, TimeGrid};
use super::rng::stream;
use crate::error::Result;
use crate::fem::{assemble_mass, l2_project, Mesh1D, SpaceFn};
use crate::linalg::{m_dot, m_norm_sq};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub estimate: f64,
    pub expected: f64,
    pub stderr: f64,
    /// human-readable acceptance band
    pub band: String,
    pub samples: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseReport {
    pub checks: Vec<Check>,
    pub all_passed: bool,
}

#[derive(Clone)]
pub struct ValidationConfig {
    pub hurst: f64,
    pub seed: u64,
    /// samples for the fBm and Itô-isometry checks
    pub samples: usize,
    /// samples for the field-energy and Poisson-count checks
    pub field_samples: usize,
    pub steps: usize,
    pub dt: f64,
    pub n_modes: usize,
    pub mode_decay: f64,
    pub jumps: JumpLaw,
    /// `g` in `ψ(z) = z·g`
    pub jump_profile: SpaceFn,
}

/// Sample mean and standard error of the mean.
#[derive(Debug, Default, Clone, Copy)]
struct Moments {
    n: usize,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    fn stderr(&self) -> f64 {
        let n = self.n as f64;
        let var = (self.sum_sq / n - self.mean().powi(2)).max(0.0) * n / (n - 1.0);
        (var / n).sqrt()
    }
}

fn z_check(name: impl Into<String>, m: &Moments, expected: f64, k: f64) -> Check {
    let estimate = m.mean();
    let stderr = m.stderr();
    Check {
        name: name.into(),
        estimate,
        expected,
        stderr,
        band: format!("|estimate − expected| ≤ {k}·stderr"),
        samples: m.n,
        passed: (estimate - expected).abs() <= k * stderr,
    }
}

impl NoiseReport {
    fn new(checks: Vec<Check>) -> Self {
        let all_passed = checks.iter().all(|c| c.passed);
        Self { checks, all_passed }
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Variance, lag correlations and full covariance of fBm increments.
pub fn fbm_checks(hurst: f64, steps: usize, dt: f64, samples: usize, seed: u64) -> Result<Vec<Check>> {
    let gen = FbmGenerator::new(hurst, steps, dt)?;
    let var = increment_autocovariance(hurst, dt, 0);
    // products x_j x_k of one draw, normalised by the exact variance
    let mut cov = vec![Moments::default(); steps * steps];
    let mut lag = vec![Moments::default(); steps.min(4)];
    let mut drawn = 0;
    let mut idx = 0u64;
    while drawn < samples {
        let mut rng = stream(seed, idx, 1);
        idx += 1;
        let (a, b) = gen.sample_pair(&mut rng);
        for path in [a, b] {
            if drawn == samples {
                break;
            }
            drawn += 1;
            for j in 0..steps {
                for k in 0..steps {
                    cov[j * steps + k].push(path[j] * path[k] / var);
                }
            }
            for (l, m) in lag.iter_mut().enumerate() {
                m.push(path[0] * path[l] / var);
            }
        }
    }
    let mut checks = vec![];
    let v = lag[0];
    checks.push(Check {
        expected: dt.powf(2.0 * hurst),
        estimate: v.mean() * var,
        stderr: v.stderr() * var,
        ..z_check("fbm_increment_variance", &v, 1.0, 3.0)
    });
    for (l, m) in lag.iter().enumerate().skip(1) {
        let exact = increment_autocovariance(hurst, dt, l) / var;
        checks.push(z_check(format!("fbm_lag{l}_correlation"), m, exact, 3.0));
    }
    let mut worst = 0.0_f64;
    let mut failures = 0;
    for j in 0..steps {
        for k in j..steps {
            let m = &cov[j * steps + k];
            let exact = increment_autocovariance(hurst, dt, j.abs_diff(k)) / var;
            let z = (m.mean() - exact).abs() / m.stderr();
            worst = worst.max(z);
            if z > 3.0 {
                failures += 1;
            }
        }
    }
    checks.push(Check {
        name: format!("fbm_covariance_{steps}x{steps}_max_z"),
        estimate: worst,
        expected: 0.0,
        stderr: 1.0,
        band: "every entry within 3·stderr of the exact covariance".into(),
        samples,
        passed: failures == 0,
    });
    Ok(checks)
}

/// Increments at `H → 1/2⁺` are uncorrelated.
pub fn brownian_limit_check(steps: usize, dt: f64, samples: usize, seed: u64) -> Result<Check> {
    let gen = FbmGenerator::new(0.5 + 1e-12, steps.max(2), dt)?;
    let var = increment_autocovariance(0.5 + 1e-12, dt, 0);
    let mut m = Moments::default();
    let mut idx = 0;
    while m.n < samples {
        let mut rng = stream(seed, idx, 2);
        idx += 1;
        let (a, b) = gen.sample_pair(&mut rng);
        m.push(a[0] * a[1] / var);
        if m.n < samples {
            m.push(b[0] * b[1] / var);
        }
    }
    let bound = 3.0 / (samples as f64).sqrt();
    Ok(Check {
        name: "fbm_brownian_limit_lag1".into(),
        estimate: m.mean(),
        expected: 0.0,
        stderr: m.stderr(),
        band: format!("|ρ̂| ≤ 3/√n = {bound:.3e}"),
        samples,
        passed: m.mean().abs() <= bound,
    })
}

/// `E‖ΔB^H‖²_{L²} = dt^{2H} Σ q_i` for the projected field.
pub fn field_energy_check(hurst: f64, n_modes: usize, decay: f64, dt: f64, samples: usize, seed: u64) -> Result<Check> {
    let spec = FbmSpec::power_law(hurst, n_modes, 1.0, decay)?;
    // modes well resolved so that P_h e_i is orthonormal up to O(h²)
    let mesh = Mesh1D::unit(32 * n_modes.max(4) - 1)?;
    let mass = assemble_mass(&mesh);
    let proj = FieldProjector::new(&spec, &mesh, &mass)?;
    let grid = TimeGrid::new(dt, 1)?;
    let sampler = NoiseSampler::new(grid, Some(hurst), n_modes, JumpLaw::none(), seed)?;
    let mut m = Moments::default();
    for s in 0..samples {
        let path = sampler.sample(s as u64);
        let f = proj.field_increment(path.step_increments(0))?;
        m.push(m_norm_sq(&mass, &f));
    }
    Ok(z_check("field_energy", &m, dt.powf(2.0 * hurst) * spec.trace(), 3.0))
}

/// Poisson mean count and goodness of fit of per-bin counts.
pub fn poisson_checks(law: &JumpLaw, horizon: f64, samples: usize, seed: u64) -> Vec<Check> {
    const BINS: usize = 4;
    let mut count = Moments::default();
    let mut per_bin: Vec<[usize; BINS]> = Vec::with_capacity(samples);
    for s in 0..samples {
        let mut rng = stream(seed, s as u64, 3);
        let ev = sample_jump_path(law, horizon, &mut rng);
        count.push(ev.len() as f64);
        let mut bins = [0usize; BINS];
        for e in &ev {
            let b = ((e.time / horizon * BINS as f64).ceil() as usize).clamp(1, BINS) - 1;
            bins[b] += 1;
        }
        per_bin.push(bins);
    }
    let rate = law.intensity * horizon;
    let mut checks = vec![Check {
        band: "|estimate − λT| ≤ 3·√(λT/n)".into(),
        passed: (count.mean() - rate).abs() <= 3.0 * (rate / samples as f64).sqrt(),
        stderr: (rate / samples as f64).sqrt(),
        ..z_check("jump_count_mean", &count, rate, 3.0)
    }];

    // chi-square goodness of fit of the pooled bin counts to Poisson(λT/4)
    let bin_rate = rate / BINS as f64;
    let categories = 5;
    let mut observed = vec![0.0; categories];
    for bins in &per_bin {
        for &c in bins {
            observed[c.min(categories - 1)] += 1.0;
        }
    }
    let total = (samples * BINS) as f64;
    let pmf = PoissonPmf::new(bin_rate.max(1e-300)).expect("positive rate");
    let mut probs: Vec<f64> = (0..categories - 1).map(|k| pmf.pmf(k as u64)).collect();
    probs.push(1.0 - probs.iter().sum::<f64>());
    let stat: f64 = observed
        .iter()
        .zip(&probs)
        .filter(|(_, p)| **p > 0.0)
        .map(|(o, p)| (o - total * p).powi(2) / (total * p))
        .sum();
    let critical = ChiSquared::new((categories - 1) as f64)
        .expect("positive dof")
        .inverse_cdf(0.99);
    checks.push(Check {
        name: "jump_bin_counts_chi_square".into(),
        estimate: stat,
        expected: (categories - 1) as f64,
        stderr: (2.0 * (categories - 1) as f64).sqrt(),
        band: format!("statistic ≤ χ²₀.₉₉({}) = {critical:.3}", categories - 1),
        samples,
        passed: stat <= critical,
    });

    // counts in disjoint bins are uncorrelated
    let mut cross = Moments::default();
    for bins in &per_bin {
        let a = bins[0] as f64 - bin_rate;
        let b = bins[1] as f64 - bin_rate;
        cross.push(a * b);
    }
    checks.push(z_check("jump_disjoint_bins_covariance", &cross, 0.0, 3.0));
    checks
}

/// Itô isometry, decorrelation over disjoint steps and compensator consistency.
pub fn jump_isometry_checks(
    law: &JumpLaw,
    profile: &dyn Fn(f64) -> f64,
    dt: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<Check>> {
    let mesh = Mesh1D::unit(63)?;
    let mass = assemble_mass(&mesh);
    let g = l2_project(&mesh, &mass, profile)?;
    let spec = JumpSpec::scaled_profile(*law, g, &mass)?;
    let grid = TimeGrid::new(2.0 * dt, 2)?;
    let mut energy = Moments::default();
    let mut cross = Moments::default();
    for s in 0..samples {
        let mut rng = stream(seed, s as u64, 4);
        let ev = sample_jump_path(law, grid.horizon(), &mut rng);
        let split = ev.partition_point(|e| grid.step_of(e.time) == 0);
        let j0 = compensated_increment(&spec, &ev[..split], dt);
        let j1 = compensated_increment(&spec, &ev[split..], dt);
        energy.push(m_norm_sq(&mass, &j0));
        cross.push(m_dot(&mass, &j0, &j1));
    }
    let expected = dt * spec.second_moment;
    let rel = (energy.mean() - expected).abs() / expected;
    let mut checks = vec![Check {
        band: "relative error ≤ 5%".into(),
        passed: rel <= 0.05,
        ..z_check("jump_ito_isometry", &energy, expected, 3.0)
    }];
    checks.push(z_check("jump_disjoint_steps_cross_moment", &cross, 0.0, 3.0));
    let mut rng = stream(seed, 0, 5);
    let z = spec.compensator_z_score(&mut rng, samples);
    checks.push(Check {
        name: "jump_compensator_consistency_max_z".into(),
        estimate: z,
        expected: 0.0,
        stderr: 1.0,
        band: "every component within 3·stderr".into(),
        samples,
        passed: z <= 3.0,
    });
    Ok(checks)
}

/// Coarsening to one step gives `Var B^H(T) = T^{2H}`; coarsening by 4
/// reproduces the exact covariance on the coarse grid.
pub fn coarsening_checks(hurst: f64, samples: usize, seed: u64) -> Result<Vec<Check>> {
    let horizon = 1.0;
    let fine = TimeGrid::new(horizon, 32)?;
    let sampler = NoiseSampler::new(fine, Some(hurst), 1, JumpLaw::none(), seed)?;
    let coarse_steps = 8;
    let coarse_dt = horizon / coarse_steps as f64;
    let var = increment_autocovariance(hurst, coarse_dt, 0);
    let mut total = Moments::default();
    let mut cov = vec![Moments::default(); coarse_steps * coarse_steps];
    for s in 0..samples {
        let path = sampler.sample(s as u64);
        let one = path.coarsen(32)?;
        total.push(one.increments()[(0, 0)].powi(2));
        let c = path.coarsen(4)?;
        let row: Vec<f64> = c.increments().row(0).iter().copied().collect();
        for j in 0..coarse_steps {
            for k in 0..coarse_steps {
                cov[j * coarse_steps + k].push(row[j] * row[k] / var);
            }
        }
    }
    let mut checks = vec![z_check("coarsen_full_variance", &total, horizon.powf(2.0 * hurst), 3.0)];
    let mut worst = 0.0_f64;
    let mut failures = 0;
    for j in 0..coarse_steps {
        for k in j..coarse_steps {
            let m = &cov[j * coarse_steps + k];
            let exact = increment_autocovariance(hurst, coarse_dt, j.abs_diff(k)) / var;
            let z = (m.mean() - exact).abs() / m.stderr();
            worst = worst.max(z);
            failures += usize::from(z > 3.0);
        }
    }
    checks.push(Check {
        name: "coarsen_covariance_max_z".into(),
        estimate: worst,
        expected: 0.0,
        stderr: 1.0,
        band: "every entry within 3·stderr of the coarse-grid covariance".into(),
        samples,
        passed: failures == 0,
    });
    Ok(checks)
}

/// Runs the whole statistical suite.
pub fn validate_noise(cfg: &ValidationConfig) -> Result<NoiseReport> {
    let mut checks = fbm_checks(cfg.hurst, cfg.steps, cfg.dt, cfg.samples, cfg.seed)?;
    checks.push(brownian_limit_check(cfg.steps, cfg.dt, cfg.samples, cfg.seed)?);
    checks.push(field_energy_check(
        cfg.hurst,
        cfg.n_modes,
        cfg.mode_decay,
        cfg.dt,
        cfg.field_samples,
        cfg.seed,
    )?);
    // horizon chosen so that λT = 4
    let horizon = if cfg.jumps.intensity > 0.0 {
        4.0 / cfg.jumps.intensity
    } else {
        1.0
    };
    checks.extend(poisson_checks(&cfg.jumps, horizon, cfg.field_samples, cfg.seed));
    checks.extend(jump_isometry_checks(
        &cfg.jumps,
        cfg.jump_profile.as_ref(),
        cfg.dt,
        cfg.samples,
        cfg.seed,
    )?);
    checks.extend(coarsening_checks(cfg.hurst, cfg.samples, cfg.seed)?);
    Ok(NoiseReport::new(checks))
}
