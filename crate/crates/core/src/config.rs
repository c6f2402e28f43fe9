//! Scenario configuration: one JSON document pins an experiment.
//!
//! The schema is strict (unknown keys are errors) so that an experiment is
//! exactly reproducible from the config file alone: the domain, kernel,
//! force, integrator, structural constants, seed and output routing all live
//! here, and [`ScenarioConfig::config_hash`] fingerprints the parsed content
//! for the run summaries.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::{State, StepperConfig, System};
use crate::error::{Error, Result};
use crate::functionals::StructuralConstants;
use crate::history::{BackendKind, HistoryState};
use crate::kernel::{KernelRequest, KernelSpec};
use crate::persist::Fnv;
use crate::spectral::{Basis, DomainSpec, ForceData, SpectralField};

/// Kernel source block: rates/weights for a Prony sum or the support length
/// of a truncated linear ramp. Weights and the fading rate are optional; the
/// kernel is always renormalized to unit first moment on construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    Prony {
        rates: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<f64>,
    },
    TruncatedLinear {
        s0: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<f64>,
    },
}

impl KernelConfig {
    pub fn build(&self) -> Result<KernelSpec> {
        match self {
            KernelConfig::Prony { rates, weights, delta } => {
                if let Some(w) = weights {
                    if w.len() != rates.len() {
                        return Err(Error::Config(format!(
                            "kernel.weights has {} entries for {} rates",
                            w.len(),
                            rates.len()
                        )));
                    }
                }
                let rates_and_weights = rates
                    .iter()
                    .enumerate()
                    .map(|(i, r)| (*r, weights.as_ref().map(|w| w[i])))
                    .collect();
                KernelSpec::make(KernelRequest::Prony { rates_and_weights, delta: *delta })
            }
            KernelConfig::TruncatedLinear { s0, delta } => {
                KernelSpec::make(KernelRequest::TruncatedLinear { s0: *s0, delta: *delta })
            }
        }
    }
}

/// History backend selection; `ds` defaults to the integrator step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryConfig {
    #[serde(default = "default_backend")]
    pub backend: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ds: Option<f64>,
}

fn default_backend() -> BackendKind {
    BackendKind::Quadrature
}

impl Default for HistoryConfig {
    fn default() -> Self {
        HistoryConfig { backend: default_backend(), ds: None }
    }
}

/// Force as a sparse sine-coefficient list, optionally rescaled to a target
/// ‖F‖ (the norm of the force primitive used by the smallness threshold).
/// Empty list = unforced.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceConfig {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modes: Vec<(usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_f: Option<f64>,
}

impl ForceConfig {
    pub fn build(&self, basis: &Basis) -> Result<ForceData> {
        if self.modes.is_empty() {
            if let Some(nf) = self.norm_f {
                if nf != 0.0 {
                    return Err(Error::Config(format!(
                        "force.norm_f = {nf} cannot be met without force.modes"
                    )));
                }
            }
            return Ok(ForceData::zero(basis));
        }
        let n = basis.n_modes();
        let mut field = SpectralField::zeros(n);
        for (k, c) in &self.modes {
            if *k < 1 || *k > n {
                return Err(Error::Config(format!(
                    "force.modes index {k} outside 1..={n} for this domain"
                )));
            }
            if field.coeffs()[*k - 1] != 0.0 {
                return Err(Error::Config(format!("force.modes lists mode {k} twice")));
            }
            field.coeffs_mut()[*k - 1] = *c;
        }
        let data = ForceData::new(basis, field)?;
        match self.norm_f {
            Some(target) => data.scaled_to_norm_f(basis, target),
            None => Ok(data),
        }
    }
}

/// Initial field as a sparse sine-coefficient list, optionally rescaled so
/// the initial ‖z‖_H (history starts empty) hits `norm_h`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modes: Vec<(usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_h: Option<f64>,
}

impl InitialConfig {
    pub fn build_field(&self, basis: &Basis) -> Result<SpectralField> {
        let n = basis.n_modes();
        let mut field = SpectralField::zeros(n);
        for (k, c) in &self.modes {
            if *k < 1 || *k > n {
                return Err(Error::Config(format!(
                    "initial.modes index {k} outside 1..={n} for this domain"
                )));
            }
            field.coeffs_mut()[*k - 1] += *c;
        }
        if let Some(target) = self.norm_h {
            if !(target >= 0.0) || !target.is_finite() {
                return Err(Error::Config(format!(
                    "initial.norm_h must be nonnegative and finite, got {target}"
                )));
            }
            let tri = basis.triple_norm(&field, 1);
            if tri == 0.0 && target > 0.0 {
                return Err(Error::Config(format!(
                    "initial.norm_h = {target} cannot be met without initial.modes"
                )));
            }
            if tri > 0.0 {
                field.scale(target / tri);
            }
        }
        Ok(field)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Overrides integrator.record_stride when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub domain: DomainSpec,
    pub kernel: KernelConfig,
    #[serde(default)]
    pub history: HistoryConfig,
    #[serde(default)]
    pub force: ForceConfig,
    pub integrator: StepperConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<StructuralConstants>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Prefix a configuration error with the block it came from; messages from
/// the force/initial builders already carry their field path and skip this.
fn in_block(block: &str, e: Error) -> Error {
    match e {
        Error::Config(msg) => Error::Config(format!("{block}: {msg}")),
        other => other,
    }
}

/// Everything a subcommand needs, assembled and validated.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub system: System,
    pub constants: Option<StructuralConstants>,
    pub initial: State,
    pub stepper: StepperConfig,
    pub backend: BackendKind,
    pub ds: f64,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("config parse error: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// FNV-1a fingerprint of the canonical serialization, in hex.
    pub fn config_hash(&self) -> Result<String> {
        let canonical = serde_json::to_string(self)?;
        let mut h = Fnv::new();
        h.write_bytes(canonical.as_bytes());
        Ok(format!("{:016x}", h.finish()))
    }

    /// Build and validate every sub-block. Field-level problems name the
    /// offending config path.
    pub fn assemble(&self) -> Result<Scenario> {
        let basis = Basis::new(self.domain)?;
        let kernel = self.kernel.build().map_err(|e| in_block("kernel", e))?;
        self.integrator.validate().map_err(|e| in_block("integrator", e))?;
        let ds = match self.history.ds {
            Some(ds) if ds > 0.0 && ds.is_finite() => ds,
            Some(ds) => {
                return Err(Error::Config(format!("history.ds must be positive, got {ds}")))
            }
            None => self.integrator.dt,
        };
        if self.history.backend == BackendKind::Markovian && !kernel.is_prony() {
            return Err(Error::Config(
                "history.backend = markovian needs a prony kernel; the exponential-mode \
                 reduction does not exist for other families"
                    .into(),
            ));
        }
        let force = self.force.build(&basis)?;
        if let Some(c) = &self.constants {
            c.validate(basis.omega()).map_err(|e| in_block("constants", e))?;
        }
        let u0 = self.initial.build_field(&basis)?;
        let history = match self.history.backend {
            BackendKind::Quadrature => {
                HistoryState::quadrature_zero(&kernel, basis.n_modes(), ds)?
            }
            BackendKind::Markovian => HistoryState::markovian_zero(&kernel, basis.n_modes())?,
        };
        let mut stepper = self.integrator;
        if let Some(stride) = self.output.stride {
            if stride == 0 {
                return Err(Error::Config("output.stride must be at least 1".into()));
            }
            stepper.record_stride = stride;
        }
        let system = System::new(basis, kernel, force);
        Ok(Scenario {
            system,
            constants: self.constants,
            initial: State::new(u0, history),
            stepper,
            backend: self.history.backend,
            ds,
            seed: self.seed,
            out_dir: self.output.dir.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_text() -> &'static str {
        r#"{
            "domain": { "a": 0.0, "b": 3.141592653589793, "n_modes": 8, "n_grid": 12 },
            "kernel": { "family": "prony", "rates": [1.0, 3.0] },
            "force": { "modes": [[1, 1.0]], "norm_f": 0.1 },
            "integrator": { "dt": 0.01, "scheme": "imex2", "t_final": 1.0, "record_stride": 5 }
        }"#
    }

    #[test]
    fn minimal_config_parses_and_assembles() {
        let cfg = ScenarioConfig::parse(minimal_text()).unwrap();
        let scenario = cfg.assemble().unwrap();
        assert_eq!(scenario.system.n_modes(), 8);
        assert!((scenario.system.force.norm_f() - 0.1).abs() < 1e-12);
        assert_eq!(scenario.backend, BackendKind::Quadrature);
        assert_eq!(scenario.ds, 0.01, "ds defaults to the integrator step");
        assert_eq!(scenario.initial.u.coeffs(), &[0.0; 8], "default initial state is zero");
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_named_field() {
        let bad = minimal_text().replace(
            "\"integrator\"",
            "\"unexpected_knob\": 3, \"integrator\"",
        );
        let err = ScenarioConfig::parse(&bad).unwrap_err();
        let msg = format!("{err}");
        assert!(msg.contains("unexpected_knob"), "diagnostic should name the key: {msg}");
    }

    #[test]
    fn round_trip_is_semantically_idempotent() {
        let cfg = ScenarioConfig::parse(minimal_text()).unwrap();
        let text2 = cfg.to_json().unwrap();
        let cfg2 = ScenarioConfig::parse(&text2).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(cfg.config_hash().unwrap(), cfg2.config_hash().unwrap());
    }

    #[test]
    fn hash_distinguishes_semantic_changes() {
        let a = ScenarioConfig::parse(minimal_text()).unwrap();
        let text = minimal_text().replace("\"dt\": 0.01", "\"dt\": 0.02");
        let b = ScenarioConfig::parse(&text).unwrap();
        assert_ne!(a.config_hash().unwrap(), b.config_hash().unwrap());
    }

    #[test]
    fn markovian_backend_requires_a_prony_kernel() {
        let text = minimal_text().replace(
            "{ \"family\": \"prony\", \"rates\": [1.0, 3.0] }",
            "{ \"family\": \"truncated_linear\", \"s0\": 2.0 }",
        );
        let with_backend = text.replace(
            "\"force\"",
            "\"history\": { \"backend\": \"markovian\" }, \"force\"",
        );
        let cfg = ScenarioConfig::parse(&with_backend).unwrap();
        let err = cfg.assemble().unwrap_err();
        assert!(format!("{err}").contains("markovian"));
    }

    #[test]
    fn field_level_errors_name_their_block() {
        let bad_force = minimal_text().replace("[[1, 1.0]]", "[[99, 1.0]]");
        let err = ScenarioConfig::parse(&bad_force).unwrap().assemble().unwrap_err();
        assert!(format!("{err}").contains("force.modes index 99"), "{err}");

        let bad_kernel = minimal_text().replace("[1.0, 3.0]", "[-1.0]");
        let err = ScenarioConfig::parse(&bad_kernel).unwrap().assemble().unwrap_err();
        assert!(format!("{err}").starts_with("configuration: kernel:"), "{err}");
    }

    #[test]
    fn initial_block_builds_and_rescales() {
        let text = minimal_text().replace(
            "\"integrator\"",
            "\"initial\": { \"modes\": [[1, 1.0], [2, 0.5]], \"norm_h\": 2.0 }, \"integrator\"",
        );
        let scenario = ScenarioConfig::parse(&text).unwrap().assemble().unwrap();
        let tri = scenario.system.basis.triple_norm(&scenario.initial.u, 1);
        assert!((tri - 2.0).abs() < 1e-12, "initial norm {tri}");
    }
}
