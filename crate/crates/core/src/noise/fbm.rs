//! Exact sampling of fractional Gaussian noise (fBm increments on a uniform
//! grid) by circulant embedding, with a Cholesky fallback.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub fn check_hurst(hurst: f64) -> Result<()> {
    if hurst > 0.5 && hurst < 1.0 {
        Ok(())
    } else {
        Err(Error::Hurst(hurst))
    }
}

/// `Cov(B^H(t), B^H(s)) = ½(|t|^{2H} + |s|^{2H} − |t−s|^{2H})`.
pub fn fbm_covariance(hurst: f64, t: f64, s: f64) -> f64 {
    let p = 2.0 * hurst;
    0.5 * (t.abs().powf(p) + s.abs().powf(p) - (t - s).abs().powf(p))
}

/// Autocovariance of increments at lag `k` on a grid of spacing `dt`.
pub fn increment_autocovariance(hurst: f64, dt: f64, k: usize) -> f64 {
    let p = 2.0 * hurst;
    let k = k as f64;
    0.5 * dt.powf(p) * ((k + 1.0).powf(p) + (k - 1.0).abs().powf(p) - 2.0 * k.powf(p))
}

enum Sampler {
    Circulant {
        /// `sqrt(λ_j / 2M)` for the embedding eigenvalues
        weights: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
    },
    Cholesky(DMatrix<f64>),
}

/// Sampler of `M` consecutive fBm increments with a fixed `(H, dt)`.
///
/// Construction does the spectral work once; each draw costs one FFT of
/// length `2M`.
pub struct FbmGenerator {
    hurst: f64,
    steps: usize,
    dt: f64,
    sampler: Sampler,
}

impl fmt::Debug for FbmGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FbmGenerator")
            .field("hurst", &self.hurst)
            .field("steps", &self.steps)
            .field("dt", &self.dt)
            .field("circulant", &self.is_circulant())
            .finish()
    }
}

impl FbmGenerator {
    pub fn new(hurst: f64, steps: usize, dt: f64) -> Result<Self> {
        Self::validate(hurst, steps, dt)?;
        let n = 2 * steps;
        let mut row: Vec<Complex64> = (0..n)
            .map(|j| {
                let lag = if j <= steps { j } else { n - j };
                Complex64::new(increment_autocovariance(hurst, dt, lag), 0.0)
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(n);
        fft.process(&mut row);
        let largest = row.iter().fold(0.0_f64, |m, c| m.max(c.re.abs()));
        if row.iter().any(|c| c.re < -1e-10 * largest) {
            return Self::cholesky(hurst, steps, dt);
        }
        let weights = row.iter().map(|c| (c.re.max(0.0) / n as f64).sqrt()).collect();
        Ok(Self {
            hurst,
            steps,
            dt,
            sampler: Sampler::Circulant { weights, fft },
        })
    }

    /// Sampler based on the Cholesky factor of the full `M × M` covariance.
    pub fn cholesky(hurst: f64, steps: usize, dt: f64) -> Result<Self> {
        Self::validate(hurst, steps, dt)?;
        let cov = DMatrix::from_fn(steps, steps, |i, j| increment_autocovariance(hurst, dt, i.abs_diff(j)));
        let l = cov.cholesky().ok_or(Error::Singular)?.l();
        Ok(Self {
            hurst,
            steps,
            dt,
            sampler: Sampler::Cholesky(l),
        })
    }

    fn validate(hurst: f64, steps: usize, dt: f64) -> Result<()> {
        check_hurst(hurst)?;
        if steps == 0 {
            return Err(Error::param("steps", "need at least one step"));
        }
        if !(dt > 0.0) {
            return Err(Error::NonPositiveStep(dt));
        }
        Ok(())
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn is_circulant(&self) -> bool {
        matches!(self.sampler, Sampler::Circulant { .. })
    }

    /// Two independent increment sequences from one draw.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        match &self.sampler {
            Sampler::Circulant { weights, fft } => {
                let mut buf: Vec<Complex64> = weights
                    .iter()
                    .map(|w| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        Complex64::new(w * re, w * im)
                    })
                    .collect();
                fft.process(&mut buf);
                let first = buf[..self.steps].iter().map(|c| c.re).collect();
                let second = buf[..self.steps].iter().map(|c| c.im).collect();
                (first, second)
            }
            Sampler::Cholesky(l) => {
                let mut draw = || {
                    let z = DVector::from_fn(self.steps, |_, _| rng.sample::<f64, _>(StandardNormal));
                    (l * z).as_slice().to_vec()
                };
                let first = draw();
                let second = draw();
                (first, second)
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.sample_pair(rng).0
    }
}

/// `M` exact fBm increments on a grid of spacing `dt`.
pub fn fbm_increments<R: Rng + ?Sized>(hurst: f64, steps: usize, dt: f64, rng: &mut R) -> Result<Vec<f64>> {
    Ok(FbmGenerator::new(hurst, steps, dt)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::rng::stream;
    use approx::assert_relative_eq;

    #[test]
    fn hurst_is_validated() {
        let mut rng = stream(0, 0, 0);
        for h in [0.5, 0.3, 1.0, 1.2, f64::NAN] {
            assert!(matches!(fbm_increments(h, 4, 0.1, &mut rng), Err(Error::Hurst(_))));
        }
        assert!(fbm_increments(0.5 + 1e-12, 4, 0.1, &mut rng).is_ok());
    }

    #[test]
    fn lag_one_correlation_closed_form() {
        let h = 0.75;
        let rho = increment_autocovariance(h, 0.3, 1) / increment_autocovariance(h, 0.3, 0);
        assert_relative_eq!(rho, 2f64.sqrt() - 1.0, max_relative = 1e-14);
        assert_relative_eq!(rho, 2f64.powf(2.0 * h - 1.0) - 1.0, max_relative = 1e-14);
    }

    #[test]
    fn autocovariance_matches_brute_force_covariance_of_positions() {
        let (h, dt) = (0.7, 0.25);
        for k in 0..6usize {
            for m in 0..4usize {
                // Cov(B(t_{m+1}) − B(t_m), B(t_{m+k+1}) − B(t_{m+k}))
                let t = |j: usize| j as f64 * dt;
                let c = |a: usize, b: usize| fbm_covariance(h, t(a), t(b));
                let brute = c(m + 1, m + k + 1) - c(m + 1, m + k) - c(m, m + k + 1) + c(m, m + k);
                assert_relative_eq!(increment_autocovariance(h, dt, k), brute, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn embedding_is_nonnegative_across_hurst_range() {
        for h in [0.5 + 1e-12, 0.55, 0.75, 0.9, 0.99] {
            for steps in [1, 2, 7, 64, 1000] {
                assert!(FbmGenerator::new(h, steps, 0.01).unwrap().is_circulant());
            }
        }
    }

    #[test]
    fn circulant_and_cholesky_agree_in_second_moments() {
        // the exact covariance of the circulant draw, computed from the weights
        let (h, steps, dt) = (0.8, 6, 0.5);
        let g = FbmGenerator::new(h, steps, dt).unwrap();
        let Sampler::Circulant { weights, .. } = &g.sampler else {
            panic!("expected circulant")
        };
        let n = 2 * steps;
        for j in 0..steps {
            for k in 0..steps {
                let cov: f64 = (0..n)
                    .map(|q| {
                        let theta = 2.0 * std::f64::consts::PI * (q * (j + n - k)) as f64 / n as f64;
                        weights[q] * weights[q] * theta.cos()
                    })
                    .sum();
                assert_relative_eq!(cov, increment_autocovariance(h, dt, j.abs_diff(k)), epsilon = 1e-12);
            }
        }
        let chol = FbmGenerator::cholesky(h, steps, dt).unwrap();
        let mut rng = stream(1, 0, 0);
        assert_eq!(chol.sample(&mut rng).len(), steps);
    }
}
