use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use regret_control::system::Signal;
use regret_control::{Error, Result};
use serde::{Deserialize, Serialize};

/// One experiment: a system, the records driving it, and the policies to
/// compare. Unknown keys are rejected so typos fail loudly instead of being
/// silently ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    pub system: SystemSource,
    /// Process-side disturbance record (the control `w`, or the input `u`
    /// driving an estimation system).
    pub disturbance: DisturbanceSpec,
    /// Measurement-noise record for estimation systems; ignored by control
    /// systems and defaults to zeros when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<DisturbanceSpec>,
    pub policies: Vec<String>,
    pub steps: usize,
    /// Receding-window length for the built-in control benchmark; defaults
    /// to `steps`. File-backed systems fix their own horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_tol: Option<f64>,
    /// Output directory; the `--out` flag takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// Where the system matrices come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemSource {
    /// Built-in inverted pendulum (unit parameters, step 0.1) driven through
    /// the receding-horizon control loop.
    Pendulum,
    /// Built-in frequency-modulation demodulator (unit parameters, step 0.1)
    /// driven through the filtering loop.
    Fm,
    /// Linear control system loaded from JSON
    /// (`{"T", "A", "Bu", "Bw", "Q", "R"}`, each matrix constant or per-step).
    Control { path: PathBuf },
    /// Linear estimation system loaded from JSON
    /// (`{"T", "A", "B", "C", "L"}`).
    Estimation { path: PathBuf },
}

/// Deterministic disturbance-record generators. Every kind is a pure
/// function of its parameters (and seed), so reruns are byte-identical.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceSpec {
    /// Independent standard normal samples from a seeded ChaCha8 stream.
    Gaussian { seed: u64 },
    /// Periodic ramp from -amplitude to +amplitude, phased to start near
    /// zero on the rising edge.
    Sawtooth {
        #[serde(default = "default_period")]
        period: usize,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
    },
    /// `amplitude * wave(frequency * k * delta)`.
    Sinusoid {
        frequency: f64,
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        #[serde(default)]
        wave: Wave,
    },
    /// Sum of sinusoidal terms.
    SinusoidSum { terms: Vec<SinusoidTerm> },
    /// Record loaded from JSON (`{"values": [[..], ..]}`), resolved
    /// relative to the config file.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Wave {
    #[default]
    Sin,
    Cos,
}

impl Wave {
    fn eval(self, phase: f64) -> f64 {
        match self {
            Wave::Sin => phase.sin(),
            Wave::Cos => phase.cos(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinusoidTerm {
    #[serde(default)]
    pub wave: Wave,
    pub frequency: f64,
    #[serde(default = "default_amplitude")]
    pub amplitude: f64,
}

fn default_period() -> usize {
    10
}

fn default_amplitude() -> f64 {
    1.0
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("cannot read config {}: {e}", path.display())))?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Validation(format!("config {}: {e}", path.display())))?;
    if cfg.steps == 0 {
        return Err(Error::Validation("steps must be at least 1".into()));
    }
    if cfg.policies.is_empty() {
        return Err(Error::Validation("policy list must not be empty".into()));
    }
    Ok(cfg)
}

impl DisturbanceSpec {
    /// Replace stochastic seeds with a command-line override. The noise
    /// record, when seeded, gets `seed + 1` so the two streams stay distinct.
    pub fn override_seed(&mut self, seed: u64) {
        if let DisturbanceSpec::Gaussian { seed: s } = self {
            *s = seed;
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            DisturbanceSpec::Gaussian { seed } => Some(*seed),
            _ => None,
        }
    }
}

/// Materialize a disturbance record of `steps` samples of width `dim`.
/// Scalar-valued kinds replicate their value across all components; `delta`
/// converts the step index into the time fed to the sinusoids.
pub fn gen_disturbance(
    spec: &DisturbanceSpec,
    steps: usize,
    dim: usize,
    delta: f64,
    base_dir: &Path,
) -> Result<Signal> {
    if steps == 0 || dim == 0 {
        return Err(Error::Validation("disturbance record must be non-empty".into()));
    }
    let scalar = |f: &dyn Fn(usize) -> f64| -> Result<Signal> {
        Signal::new((0..steps).map(|k| DVector::from_element(dim, f(k))).collect())
    };
    match spec {
        DisturbanceSpec::Gaussian { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Signal::new(
                (0..steps)
                    .map(|_| DVector::from_fn(dim, |_, _| rng.sample(StandardNormal)))
                    .collect(),
            )
        }
        DisturbanceSpec::Sawtooth { period, amplitude } => {
            let period = *period;
            if period < 2 {
                return Err(Error::Validation(format!(
                    "sawtooth period must be at least 2, got {period}"
                )));
            }
            let amp = *amplitude;
            scalar(&|k| {
                let phase = (k + period / 2) % period;
                amp * (2.0 * phase as f64 / (period - 1) as f64 - 1.0)
            })
        }
        DisturbanceSpec::Sinusoid { frequency, amplitude, wave } => {
            scalar(&|k| amplitude * wave.eval(frequency * k as f64 * delta))
        }
        DisturbanceSpec::SinusoidSum { terms } => {
            if terms.is_empty() {
                return Err(Error::Validation("sinusoid_sum needs at least one term".into()));
            }
            let terms = terms.clone();
            scalar(&|k| {
                let t = k as f64 * delta;
                terms.iter().map(|s| s.amplitude * s.wave.eval(s.frequency * t)).sum()
            })
        }
        DisturbanceSpec::File { path } => {
            let full = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
            let text = std::fs::read_to_string(&full).map_err(|e| {
                Error::Validation(format!("cannot read disturbance file {}: {e}", full.display()))
            })?;
            #[derive(Deserialize)]
            #[serde(deny_unknown_fields)]
            struct Record {
                values: Vec<Vec<f64>>,
            }
            let record: Record = serde_json::from_str(&text).map_err(|e| {
                Error::Validation(format!("disturbance file {}: {e}", full.display()))
            })?;
            if record.values.len() < steps {
                return Err(Error::Validation(format!(
                    "disturbance file {} has {} samples, need {steps}",
                    full.display(),
                    record.values.len()
                )));
            }
            let values = record.values[..steps]
                .iter()
                .enumerate()
                .map(|(k, row)| {
                    if row.len() != dim {
                        return Err(Error::Validation(format!(
                            "disturbance file {} sample {k} has width {}, need {dim}",
                            full.display(),
                            row.len()
                        )));
                    }
                    Ok(DVector::from_column_slice(row))
                })
                .collect::<Result<Vec<_>>>()?;
            Signal::new(values)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gen(spec: &DisturbanceSpec, steps: usize, dim: usize, delta: f64) -> Signal {
        gen_disturbance(spec, steps, dim, delta, Path::new(".")).unwrap()
    }

    #[test]
    fn sinusoid_sum_evaluates_term_by_term() {
        let spec = DisturbanceSpec::SinusoidSum {
            terms: vec![
                SinusoidTerm { wave: Wave::Sin, frequency: 10.0, amplitude: 1.0 },
                SinusoidTerm { wave: Wave::Cos, frequency: 30.0, amplitude: 2.0 },
            ],
        };
        let w = gen(&spec, 3, 1, 0.1);
        assert!((w.values[0][0] - 2.0).abs() < 1e-15);
        let k1 = (10.0 * 0.1_f64).sin() + 2.0 * (30.0 * 0.1_f64).cos();
        assert!((w.values[1][0] - k1).abs() < 1e-12);
    }

    #[test]
    fn sawtooth_starts_on_the_rising_edge_near_zero() {
        let spec = DisturbanceSpec::Sawtooth { period: 10, amplitude: 1.0 };
        let w = gen(&spec, 20, 1, 0.1);
        for (k, v) in w.values.iter().enumerate() {
            let expected = 2.0 * (((k + 5) % 10) as f64) / 9.0 - 1.0;
            assert!((v[0] - expected).abs() < 1e-15, "sample {k}");
        }
        assert!((w.values[0][0] - 1.0 / 9.0).abs() < 1e-15);
        assert!((w.values[4][0] - 1.0).abs() < 1e-15);
        assert!((w.values[5][0] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn gaussian_records_are_reproducible_and_seed_sensitive() {
        let spec = DisturbanceSpec::Gaussian { seed: 3 };
        let a = gen(&spec, 8, 2, 1.0);
        let b = gen(&spec, 8, 2, 1.0);
        assert_eq!(a.stacked(), b.stacked());
        let other = gen(&DisturbanceSpec::Gaussian { seed: 4 }, 8, 2, 1.0);
        assert_ne!(a.stacked(), other.stacked());
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let text = r#"{
            "id": "x",
            "system": {"kind": "pendulum"},
            "disturbance": {"kind": "gaussian", "seed": 1},
            "policies": ["h2"],
            "steps": 5,
            "surprise": true
        }"#;
        let err = serde_json::from_str::<ExperimentConfig>(text).unwrap_err();
        assert!(err.to_string().contains("surprise"));
    }

    #[test]
    fn unknown_disturbance_kind_is_rejected() {
        let err = serde_json::from_str::<DisturbanceSpec>(r#"{"kind": "pink"}"#).unwrap_err();
        assert!(err.to_string().contains("pink"));
    }
}
