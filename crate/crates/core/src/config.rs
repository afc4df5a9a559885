//! Run configuration: a TOML document with named presets for every
//! function-valued input. Unknown keys are rejected.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{Coefficient, Mesh1D, OperatorFamily, SpaceFn};
use crate::harness::{HolderConfig, StudyConfig, StudyMode, DEFAULT_CHUNK};
use crate::model::{Drift, Problem};
use crate::noise::validate::ValidationConfig;
use crate::noise::{Basis, FbmSpec, JumpLaw, MarkLaw};
use crate::schemes::Scheme;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub noise: NoiseConfig,
    pub discretization: DiscretizationConfig,
    pub study: StudyBlock,
    pub simulate: SimulateConfig,
    pub validation: ValidationBlock,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    pub domain: [f64; 2],
    pub horizon: f64,
    pub diffusion: DiffusionPreset,
    /// constant advection speed `b`; non-zero makes `A(t)` non-self-adjoint
    pub advection: f64,
    pub drift: DriftPreset,
    pub initial: ProfilePreset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionPreset {
    /// `q ≡ 1`
    Constant,
    /// `q(t) = 1 + ½ sin(2πt/T)`
    Sinusoidal,
    /// `q(x) = 1 + ½ x̂(1 − x̂)` on the normalised coordinate `x̂`
    SpatiallyVarying,
    /// product of the two above
    Default,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftPreset {
    Zero,
    Constant {
        value: f64,
    },
    /// `scale · sin(u)`
    Sine {
        scale: f64,
    },
}

/// Functions of `x` on the domain, in the normalised coordinate `x̂ ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfilePreset {
    Zero,
    /// `amplitude · sin(mode π x̂)`
    Sine {
        amplitude: f64,
        mode: u32,
    },
    /// `amplitude · 4x̂(1 − x̂)`
    Parabola {
        amplitude: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SchedulePreset {
    Constant {
        value: f64,
    },
    /// `mean + amplitude · sin(2πt/T)`
    Sinusoidal {
        mean: f64,
        amplitude: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub hurst: f64,
    /// `q_i = mode_scale · i^{−mode_decay}`
    pub mode_decay: f64,
    pub mode_scale: f64,
    pub n_modes: usize,
    /// eigenfunctions `e_i` of `Q`
    pub basis: Basis,
    /// regularity index of the noise, used for the theoretical rates
    pub beta: f64,
    pub amplitude: SchedulePreset,
    pub jumps: JumpConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JumpConfig {
    pub intensity: f64,
    pub marks: MarkLaw,
    pub profile: ProfilePreset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscretizationConfig {
    pub scheme: Scheme,
    /// mesh of temporal studies and of `simulate`
    pub n_interior: usize,
    /// `M` values of a temporal study
    pub steps: Vec<usize>,
    pub reference_steps: usize,
    /// interior node counts of a spatial study
    pub meshes: Vec<usize>,
    pub reference_mesh: usize,
    /// fixed time grid of a spatial study
    pub spatial_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyBlock {
    pub mode: StudyMode,
    pub samples: usize,
    pub seed: u64,
    /// accepted slope interval; unset bounds default by mode and scheme
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band_low: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band_high: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub steps: usize,
    /// output times, snapped to the nearest grid level; empty means quarters of T
    pub times: Vec<f64>,
    /// which Monte-Carlo sample to draw
    pub sample: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationBlock {
    pub samples: usize,
    pub field_samples: usize,
    pub steps: usize,
    pub dt: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: String,
    pub formats: Vec<Format>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            domain: [0.0, 1.0],
            horizon: 1.0,
            diffusion: DiffusionPreset::Default,
            advection: 0.0,
            drift: DriftPreset::Sine { scale: 1.0 },
            initial: ProfilePreset::Sine {
                amplitude: 1.0,
                mode: 1,
            },
        }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            hurst: 0.75,
            mode_decay: 1.1,
            mode_scale: 1.0,
            n_modes: 64,
            basis: Basis::Sine,
            beta: 1.0,
            amplitude: SchedulePreset::Constant { value: 1.0 },
            jumps: JumpConfig::default(),
        }
    }
}

impl Default for JumpConfig {
    fn default() -> Self {
        Self {
            intensity: 5.0,
            marks: MarkLaw::Normal { mean: 0.0, std: 1.0 },
            profile: ProfilePreset::Sine {
                amplitude: 0.25,
                mode: 1,
            },
        }
    }
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Smti,
            n_interior: 255,
            steps: vec![16, 32, 64, 128, 256],
            reference_steps: 4096,
            meshes: vec![15, 31, 63, 127],
            reference_mesh: 511,
            spatial_steps: 1024,
        }
    }
}

impl Default for StudyBlock {
    fn default() -> Self {
        Self {
            mode: StudyMode::Temporal,
            samples: 200,
            seed: 1234,
            band_low: None,
            band_high: None,
        }
    }
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            steps: 256,
            times: Vec::new(),
            sample: 0,
        }
    }
}

impl Default for ValidationBlock {
    fn default() -> Self {
        Self {
            samples: 100_000,
            field_samples: 10_000,
            steps: 8,
            dt: 0.1,
            seed: 7,
        }
    }
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: "out".into(),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

impl ProfilePreset {
    pub fn function(self, domain: [f64; 2]) -> SpaceFn {
        let [a, b] = domain;
        let len = b - a;
        match self {
            ProfilePreset::Zero => Arc::new(|_| 0.0),
            ProfilePreset::Sine { amplitude, mode } => {
                Arc::new(move |x| amplitude * (mode as f64 * PI * (x - a) / len).sin())
            }
            ProfilePreset::Parabola { amplitude } => Arc::new(move |x| {
                let s = (x - a) / len;
                amplitude * 4.0 * s * (1.0 - s)
            }),
        }
    }
}

impl SchedulePreset {
    pub fn function(self, horizon: f64) -> SpaceFn {
        match self {
            SchedulePreset::Constant { value } => Arc::new(move |_| value),
            SchedulePreset::Sinusoidal { mean, amplitude } => {
                Arc::new(move |t| mean + amplitude * (2.0 * PI * t / horizon).sin())
            }
        }
    }
}

impl DriftPreset {
    pub fn drift(self) -> Drift {
        match self {
            DriftPreset::Zero => Drift::zero(),
            DriftPreset::Constant { value } => Drift::constant(value),
            DriftPreset::Sine { scale } => Drift::sine(scale),
        }
    }
}

fn operator(p: &ProblemConfig) -> Result<OperatorFamily> {
    let [a, b] = p.domain;
    let len = b - a;
    let period = p.horizon;
    let space = move |x: f64| {
        let s = (x - a) / len;
        1.0 + 0.5 * s * (1.0 - s)
    };
    let time = move |t: f64| 1.0 + 0.5 * (2.0 * PI * t / period).sin();
    let diffusion = match p.diffusion {
        DiffusionPreset::Constant => Coefficient::constant(1.0),
        DiffusionPreset::Sinusoidal => Coefficient::separable(|_| 1.0, time),
        DiffusionPreset::SpatiallyVarying => Coefficient::separable(space, |_| 1.0),
        DiffusionPreset::Default => Coefficient::separable(space, time),
    };
    let advection = if p.advection == 0.0 {
        Coefficient::Zero
    } else {
        let c = p.advection;
        Coefficient::general(move |_, _| c)
    };
    // every preset keeps q ≥ 1/2
    OperatorFamily::new(diffusion, advection, 0.25)
}

fn check(ok: bool, path: &str, message: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(path, message))
    }
}

impl RunConfig {
    /// Parses and validates a TOML document.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let path = e
                .span()
                .map(|s| format!("bytes {}..{}", s.start, s.end))
                .unwrap_or_default();
            Error::config(&path, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Spatial study defaults: short horizon, fine time grid, many modes.
    pub fn spatial_preset() -> Self {
        let mut cfg = Self::default();
        cfg.problem.horizon = 1.0 / 64.0;
        cfg.problem.initial = ProfilePreset::Sine {
            amplitude: 0.1,
            mode: 1,
        };
        cfg.noise.n_modes = 512;
        cfg.discretization.scheme = Scheme::Implicit;
        cfg.study.mode = StudyMode::Spatial;
        cfg.study.samples = 100;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        check(
            p.domain[0].is_finite() && p.domain[1].is_finite() && p.domain[0] < p.domain[1],
            "problem.domain",
            "need a < b",
        )?;
        check(
            p.horizon > 0.0 && p.horizon.is_finite(),
            "problem.horizon",
            "T must be positive",
        )?;
        check(p.advection.is_finite(), "problem.advection", "must be finite")?;
        if let ProfilePreset::Sine { mode: 0, .. } = p.initial {
            return Err(Error::config("problem.initial.mode", "modes start at 1"));
        }

        let n = &self.noise;
        check(
            n.hurst > 0.5 && n.hurst < 1.0,
            "noise.hurst",
            format!("H = {} is outside the admissible interval (1/2, 1)", n.hurst),
        )?;
        check(
            n.mode_scale >= 0.0 && n.mode_scale.is_finite(),
            "noise.mode_scale",
            "need q scale ≥ 0",
        )?;
        check(
            n.mode_decay > 1.0,
            "noise.mode_decay",
            "need decay > 1 for a trace-class Q",
        )?;
        check(
            n.beta > 0.0 && n.beta <= 2.0,
            "noise.beta",
            "regularity index must lie in (0, 2]",
        )?;
        check(
            n.jumps.intensity >= 0.0 && n.jumps.intensity.is_finite(),
            "noise.jumps.intensity",
            "need finite λ ≥ 0",
        )?;
        n.jumps
            .marks
            .validate()
            .map_err(|e| Error::config("noise.jumps.marks", e.to_string()))?;

        let d = &self.discretization;
        check(
            d.n_interior > 0,
            "discretization.n_interior",
            "need at least one interior node",
        )?;
        check(!d.steps.is_empty(), "discretization.steps", "empty list")?;
        check(
            d.steps.windows(2).all(|w| w[0] < w[1]),
            "discretization.steps",
            "must be strictly increasing",
        )?;
        for &m in &d.steps {
            check(
                m > 0 && m < d.reference_steps && d.reference_steps.is_multiple_of(m),
                "discretization.reference_steps",
                format!("{} is not a strict multiple of M = {m}", d.reference_steps),
            )?;
        }
        check(!d.meshes.is_empty(), "discretization.meshes", "empty list")?;
        check(
            d.meshes.windows(2).all(|w| w[0] < w[1]),
            "discretization.meshes",
            "must be strictly increasing",
        )?;
        let fine = Mesh1D::new(p.domain[0], p.domain[1], d.reference_mesh.max(1))?;
        for &m in &d.meshes {
            let coarse = Mesh1D::new(p.domain[0], p.domain[1], m.max(1))?;
            check(
                m > 0 && m < d.reference_mesh && coarse.is_nested_in(&fine),
                "discretization.meshes",
                format!(
                    "{m} interior nodes do not nest in the reference mesh of {}",
                    d.reference_mesh
                ),
            )?;
        }
        check(
            d.spatial_steps > 0,
            "discretization.spatial_steps",
            "need at least one step",
        )?;

        let s = &self.study;
        check(s.samples >= 2, "study.samples", "need at least two Monte-Carlo samples")?;
        if let (Some(lo), Some(hi)) = (s.band_low, s.band_high) {
            check(lo <= hi, "study.band_low", "lower bound exceeds upper bound")?;
        }
        check(self.simulate.steps > 0, "simulate.steps", "need at least one step")?;
        check(
            self.simulate.times.iter().all(|t| *t >= 0.0 && *t <= p.horizon),
            "simulate.times",
            "times must lie in [0, T]",
        )?;
        let v = &self.validation;
        check(
            v.samples >= 2 && v.field_samples >= 2,
            "validation.samples",
            "need at least two samples",
        )?;
        check(v.steps >= 2, "validation.steps", "need at least two steps")?;
        check(v.dt > 0.0, "validation.dt", "must be positive")?;
        check(!self.output.formats.is_empty(), "output.formats", "empty list")?;
        Ok(())
    }

    /// Fully materialised configuration, defaults included.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn to_problem(&self) -> Result<Problem> {
        let p = &self.problem;
        let n = &self.noise;
        let fbm = if n.n_modes > 0 {
            let mut spec = FbmSpec::power_law(n.hurst, n.n_modes, n.mode_scale, n.mode_decay)?;
            spec.basis = n.basis;
            Some(spec)
        } else {
            None
        };
        Ok(Problem {
            domain: (p.domain[0], p.domain[1]),
            ops: operator(p)?,
            drift: p.drift.drift(),
            amplitude: n.amplitude.function(p.horizon),
            fbm,
            jumps: JumpLaw::new(n.jumps.intensity, n.jumps.marks)?,
            jump_profile: n.jumps.profile.function(p.domain),
            initial: p.initial.function(p.domain),
            horizon: p.horizon,
        })
    }

    pub fn study_config(&self, threads: Option<usize>) -> StudyConfig {
        let d = &self.discretization;
        let s = &self.study;
        let mut cfg = match s.mode {
            StudyMode::Temporal => StudyConfig::temporal(
                d.scheme,
                d.steps.clone(),
                d.reference_steps,
                d.n_interior,
                s.samples,
                s.seed,
            ),
            StudyMode::Spatial => StudyConfig::spatial(
                d.scheme,
                d.meshes.clone(),
                d.reference_mesh,
                d.spatial_steps,
                s.samples,
                s.seed,
            ),
        };
        cfg.chunk = DEFAULT_CHUNK;
        cfg.threads = threads;
        cfg
    }

    /// Predicted strong rate: `(2H + β − 1)/2` in time, `2H + β − 1` in space.
    pub fn theoretical_rate(&self) -> f64 {
        let r = 2.0 * self.noise.hurst + self.noise.beta - 1.0;
        match self.study.mode {
            StudyMode::Temporal => 0.5 * r,
            StudyMode::Spatial => r,
        }
    }

    /// Accepted slope interval, `None` meaning unbounded on that side.
    pub fn band(&self) -> (Option<f64>, Option<f64>) {
        let r = self.theoretical_rate();
        let (lo, hi) = match (self.study.mode, self.discretization.scheme) {
            (StudyMode::Temporal, Scheme::Smti) => (Some(r - 0.15), Some(r + 0.15)),
            (StudyMode::Temporal, Scheme::Implicit) => (Some(r - 0.2), None),
            (StudyMode::Spatial, _) => (Some(r - 0.3), Some(r + 0.3)),
        };
        (self.study.band_low.or(lo), self.study.band_high.or(hi))
    }

    pub fn holder_config(&self, threads: Option<usize>) -> HolderConfig {
        let steps = self.discretization.spatial_steps;
        HolderConfig {
            scheme: Scheme::Smti,
            n_interior: 63,
            steps,
            lags: (0..7).map(|k| 1 << k).collect(),
            start: steps / 2,
            samples: 100,
            seed: self.study.seed,
            chunk: DEFAULT_CHUNK,
            threads,
        }
    }

    pub fn validation_config(&self) -> Result<ValidationConfig> {
        let n = &self.noise;
        let v = &self.validation;
        Ok(ValidationConfig {
            hurst: n.hurst,
            seed: v.seed,
            samples: v.samples,
            field_samples: v.field_samples,
            steps: v.steps,
            dt: v.dt,
            n_modes: n.n_modes.clamp(1, 16),
            mode_decay: n.mode_decay,
            jumps: JumpLaw::new(n.jumps.intensity, n.jumps.marks)?,
            // checks run on the unit interval
            jump_profile: n.jumps.profile.function([0.0, 1.0]),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_materialises_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        let echo = cfg.echo();
        for key in ["hurst", "reference_steps", "samples", "intensity", "formats"] {
            assert!(echo.contains(key), "{key} missing from echo");
        }
        assert_eq!(RunConfig::parse(&echo).unwrap(), cfg);
    }

    #[test]
    fn hurst_out_of_range_names_the_field() {
        let err = RunConfig::parse("[noise]\nhurst = 0.4\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("noise.hurst") && msg.contains("(1/2, 1)"), "{msg}");
    }

    #[test]
    fn indivisible_reference_is_rejected() {
        let err = RunConfig::parse("[discretization]\nsteps = [16, 48]\nreference_steps = 4096\n").unwrap_err();
        assert!(err.to_string().contains("discretization.reference_steps"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("[noise]\nhurts = 0.7\n").is_err());
        assert!(RunConfig::parse("[problem]\ndiffusion = \"cubic\"\n").is_err());
    }

    #[test]
    fn non_nested_meshes_are_rejected() {
        let err = RunConfig::parse("[discretization]\nmeshes = [14, 31]\n").unwrap_err();
        assert!(err.to_string().contains("discretization.meshes"));
    }

    #[test]
    fn presets_build_problems() {
        let text = r#"
            [problem]
            diffusion = "sinusoidal"
            advection = 0.5
            drift = { kind = "constant", value = 2.0 }
            initial = { kind = "parabola", amplitude = 1.0 }
            [noise]
            amplitude = { kind = "sinusoidal", mean = 1.0, amplitude = 0.5 }
            [noise.jumps]
            marks = { law = "uniform", low = -1.0, high = 1.0 }
        "#;
        let cfg = RunConfig::parse(text).unwrap();
        let p = cfg.to_problem().unwrap();
        assert!(!p.ops.is_self_adjoint());
        assert!(((p.initial)(0.5) - 1.0).abs() < 1e-15);
        assert!(((p.amplitude)(0.25) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn default_bands_follow_the_predicted_rates() {
        let mut cfg = RunConfig::default();
        assert!((cfg.theoretical_rate() - 0.75).abs() < 1e-15);
        let (lo, hi) = cfg.band();
        assert!((lo.unwrap() - 0.6).abs() < 1e-12 && (hi.unwrap() - 0.9).abs() < 1e-12);
        cfg.discretization.scheme = Scheme::Implicit;
        assert_eq!(cfg.band().1, None);
        let s = RunConfig::spatial_preset();
        assert!((s.theoretical_rate() - 1.5).abs() < 1e-15);
    }
}
