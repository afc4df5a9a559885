//! Finite-activity compensated Poisson random measure.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{m_norm_sq, Tridiagonal};

/// Law of the scalar marks, `ν / λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarkLaw {
    Normal { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
    Constant { value: f64 },
}

impl MarkLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MarkLaw::Normal { mean, std } if mean.is_finite() && std >= 0.0 && std.is_finite() => Ok(()),
            MarkLaw::Uniform { low, high } if low.is_finite() && high.is_finite() && low < high => Ok(()),
            MarkLaw::Constant { value } if value.is_finite() => Ok(()),
            _ => Err(Error::param("marks", format!("invalid mark law {self:?}"))),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            MarkLaw::Normal { mean, std } => Normal::new(mean, std).expect("validated").sample(rng),
            MarkLaw::Uniform { low, high } => Uniform::new(low, high).expect("validated").sample(rng),
            MarkLaw::Constant { value } => value,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            MarkLaw::Normal { mean, .. } => mean,
            MarkLaw::Uniform { low, high } => 0.5 * (low + high),
            MarkLaw::Constant { value } => value,
        }
    }

    /// `E[z²]`.
    pub fn second_moment(&self) -> f64 {
        match *self {
            MarkLaw::Normal { mean, std } => mean * mean + std * std,
            MarkLaw::Uniform { low, high } => (low * low + low * high + high * high) / 3.0,
            MarkLaw::Constant { value } => value * value,
        }
    }
}

/// Mesh-independent part of the jump noise: intensity `λ = ν(χ)` and marks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpLaw {
    pub intensity: f64,
    pub marks: MarkLaw,
}

impl JumpLaw {
    pub fn new(intensity: f64, marks: MarkLaw) -> Result<Self> {
        if !(intensity >= 0.0) || !intensity.is_finite() {
            return Err(Error::param("intensity", "need a finite λ ≥ 0"));
        }
        marks.validate()?;
        Ok(Self { intensity, marks })
    }

    pub fn none() -> Self {
        Self {
            intensity: 0.0,
            marks: MarkLaw::Constant { value: 0.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    pub mark: f64,
}

pub type JumpMap = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

/// Jump noise on a particular mesh: `ψ(z)` in FE coordinates plus its
/// first two moments under `ν`.
#[derive(Clone)]
pub struct JumpSpec {
    pub law: JumpLaw,
    psi: JumpMap,
    /// `∫ ψ(z) ν(dz)`
    pub compensator_mean: DVector<f64>,
    /// `∫ ‖ψ(z)‖² ν(dz)` in the mass norm
    pub second_moment: f64,
}

impl fmt::Debug for JumpSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("JumpSpec")
            .field("law", &self.law)
            .field("second_moment", &self.second_moment)
            .finish_non_exhaustive()
    }
}

impl JumpSpec {
    pub fn new(law: JumpLaw, psi: JumpMap, compensator_mean: DVector<f64>, second_moment: f64) -> Result<Self> {
        if !(second_moment >= 0.0) {
            return Err(Error::param("second_moment", "must be non-negative"));
        }
        Ok(Self {
            law,
            psi,
            compensator_mean,
            second_moment,
        })
    }

    /// `ψ(z) = z · g` for a fixed FE profile `g`; moments in closed form.
    pub fn scaled_profile(law: JumpLaw, profile: DVector<f64>, mass: &Tridiagonal) -> Result<Self> {
        let compensator_mean = &profile * (law.intensity * law.marks.mean());
        let second_moment = law.intensity * law.marks.second_moment() * m_norm_sq(mass, &profile);
        let g = profile.clone();
        Self::new(law, Arc::new(move |z| &g * z), compensator_mean, second_moment)
    }

    /// No jumps on an `n`-dimensional space.
    pub fn none(n: usize) -> Self {
        Self {
            law: JumpLaw::none(),
            psi: Arc::new(move |_| DVector::zeros(n)),
            compensator_mean: DVector::zeros(n),
            second_moment: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.compensator_mean.len()
    }

    pub fn psi(&self, mark: f64) -> DVector<f64> {
        (self.psi)(mark)
    }

    /// Monte-Carlo check of `compensator_mean` against the sampled marks:
    /// returns the largest `|estimate − mean| / stderr` over components.
    pub fn compensator_z_score<R: Rng + ?Sized>(&self, rng: &mut R, samples: usize) -> f64 {
        let n = self.dim();
        let mut sum = DVector::zeros(n);
        let mut sum_sq = DVector::zeros(n);
        for _ in 0..samples {
            let v = self.psi(self.law.marks.sample(rng)) * self.law.intensity;
            sum_sq += v.component_mul(&v);
            sum += v;
        }
        let s = samples as f64;
        (0..n)
            .map(|i| {
                let mean = sum[i] / s;
                let var = (sum_sq[i] / s - mean * mean).max(0.0);
                let se = (var / s).sqrt();
                let diff = (mean - self.compensator_mean[i]).abs();
                if se > 0.0 {
                    diff / se
                } else if diff <= 1e-12 * (1.0 + mean.abs()) {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max)
    }
}

/// Poisson number of events on `[0, T]`, uniform sorted times, i.i.d. marks.
pub fn sample_jump_path<R: Rng + ?Sized>(law: &JumpLaw, horizon: f64, rng: &mut R) -> Vec<JumpEvent> {
    let rate = law.intensity * horizon;
    if rate <= 0.0 {
        return Vec::new();
    }
    let count = Poisson::new(rate).expect("positive rate").sample(rng) as usize;
    let mut events: Vec<JumpEvent> = (0..count)
        .map(|_| {
            // (0, T]: events at exactly t = 0 would fall outside every step
            let time = horizon * (1.0 - rng.random::<f64>());
            let mark = law.marks.sample(rng);
            JumpEvent { time, mark }
        })
        .collect();
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    events
}

/// `Σ_k ψ(z_k) − dt ∫ψ dν` over the events of one step.
pub fn compensated_increment(spec: &JumpSpec, events: &[JumpEvent], dt: f64) -> DVector<f64> {
    let mut inc = &spec.compensator_mean * -dt;
    for e in events {
        inc += spec.psi(e.mark);
    }
    inc
}
