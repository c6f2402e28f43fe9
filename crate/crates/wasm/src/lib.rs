//! Browser bindings for the interactive demo page.
//!
//! Three operations cross the JavaScript boundary:
//!
//! - a stateful [`Simulator`] that advances the memory-coupled flow and
//!   reports energy, dissipation and physical-space profiles frame by frame,
//! - a Riccati comparison explorer ([`riccati_params_json`] /
//!   [`riccati_curve_json`]) for the quadratic barrier picture,
//! - a Lyapunov functional probe ([`lambda_probe_json`]) that evaluates the
//!   weighted functional and its two-sided geometric bounds on a synthetic
//!   state.
//!
//! Payloads are JSON strings so the page needs no generated glue beyond the
//! `wasm-bindgen` loader and the same entry points run natively under
//! `cargo test`.

use bbmm_core::dynamics::{Scheme, State, System};
use bbmm_core::functionals::{lambda_terms, LambdaTerms};
use bbmm_core::history::{BackendKind, HistoryState};
use bbmm_core::kernel::{KernelRequest, KernelSpec};
use bbmm_core::riccati;
use bbmm_core::{Basis, DomainSpec, Error, ForceData, Result, SpectralField};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use wasm_bindgen::prelude::*;

/// Most points a single curve payload will carry; longer series are thinned.
const MAX_CURVE_POINTS: usize = 600;

fn js_err(e: Error) -> JsError {
    JsError::new(&e.to_string())
}

// ---------------------------------------------------------------------------
// Simulator
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemoConfig {
    #[serde(default = "default_n_modes")]
    n_modes: usize,
    /// Prony relaxation rates; weights are share-normalized automatically.
    #[serde(default = "default_rates")]
    rates: Vec<f64>,
    /// Coefficient of the first sine mode of the forcing.
    #[serde(default)]
    force_amplitude: f64,
    /// Initial field size measured in the B-weighted norm.
    #[serde(default = "default_initial_amplitude")]
    initial_amplitude: f64,
    #[serde(default = "default_dt")]
    dt: f64,
}

fn default_n_modes() -> usize {
    24
}

fn default_rates() -> Vec<f64> {
    vec![1.0, 3.0]
}

fn default_initial_amplitude() -> f64 {
    0.3
}

fn default_dt() -> f64 {
    0.01
}

/// One display frame: scalars plus the field and memory-force profiles
/// sampled on the quadrature grid.
#[derive(Debug, Serialize)]
struct Frame {
    t: f64,
    /// E = |||u|||₁² + ‖η‖²_M.
    energy: f64,
    gamma: f64,
    work: f64,
    x: Vec<f64>,
    u: Vec<f64>,
    memory_force: Vec<f64>,
}

/// Initial shape used by the demo: first mode plus a 30% second-mode ripple.
fn demo_shape(n_modes: usize) -> SpectralField {
    let mut f = SpectralField::mode(n_modes, 1, 1.0);
    f.axpy(0.3, &SpectralField::mode(n_modes, 2, 1.0));
    f
}

fn build_simulator(config_json: &str) -> Result<Simulator> {
    let cfg: DemoConfig = serde_json::from_str(config_json)
        .map_err(|e| Error::Config(format!("demo configuration: {e}")))?;
    if cfg.dt <= 0.0 || !cfg.dt.is_finite() {
        return Err(Error::Config(format!("dt must be positive, got {}", cfg.dt)));
    }
    let basis = Basis::new(DomainSpec::with_min_grid(0.0, PI, cfg.n_modes))?;
    let kernel = KernelSpec::make(KernelRequest::Prony {
        rates_and_weights: cfg.rates.iter().map(|&d| (d, None)).collect(),
        delta: None,
    })?;
    let force = if cfg.force_amplitude == 0.0 {
        ForceData::zero(&basis)
    } else {
        ForceData::new(&basis, SpectralField::mode(cfg.n_modes, 1, cfg.force_amplitude))?
    };

    let mut u = demo_shape(cfg.n_modes);
    let size = basis.triple_norm(&u, 1);
    if cfg.initial_amplitude > 0.0 {
        u.scale(cfg.initial_amplitude / size);
    } else {
        u.set_zero();
    }
    let history = HistoryState::markovian_zero(&kernel, cfg.n_modes)?;
    let state = State::new(u, history);

    let system = System::new(basis, kernel, force);
    Ok(Simulator { initial: state.clone(), state, system, dt: cfg.dt })
}

/// Interactive integrator handle held by the page between animation frames.
#[derive(Debug)]
#[wasm_bindgen]
pub struct Simulator {
    system: System,
    state: State,
    initial: State,
    dt: f64,
}

impl Simulator {
    fn advance_impl(&mut self, steps: u32) -> Result<()> {
        for _ in 0..steps {
            self.system.step(&mut self.state, self.dt, Scheme::Imex2)?;
        }
        Ok(())
    }

    fn frame_impl(&self) -> Result<Frame> {
        let basis = &self.system.basis;
        let mem = self.state.history.memory_force(basis, &self.system.kernel);
        Ok(Frame {
            t: self.state.t,
            energy: self.system.energy(&self.state)?,
            gamma: self.state.history.gamma(basis, &self.system.kernel),
            work: self.system.forcing_work(&self.state),
            x: basis.nodes().to_vec(),
            u: basis.eval_grid(&self.state.u),
            memory_force: basis.eval_grid(&mem),
        })
    }
}

#[wasm_bindgen]
impl Simulator {
    /// Build a simulator from a JSON configuration; unknown keys are errors.
    #[wasm_bindgen(constructor)]
    pub fn new(config_json: &str) -> std::result::Result<Simulator, JsError> {
        build_simulator(config_json).map_err(js_err)
    }

    /// Take `steps` integrator steps of the configured dt.
    pub fn advance(&mut self, steps: u32) -> std::result::Result<(), JsError> {
        self.advance_impl(steps).map_err(js_err)
    }

    /// Current time, energy, dissipation, forcing work and grid profiles.
    pub fn frame_json(&self) -> std::result::Result<String, JsError> {
        let frame = self.frame_impl().map_err(js_err)?;
        serde_json::to_string(&frame).map_err(|e| JsError::new(&e.to_string()))
    }

    /// Return to the initial state without rebuilding the discretization.
    pub fn reset(&mut self) {
        self.state = self.initial.clone();
    }

    pub fn time(&self) -> f64 {
        self.state.t
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }
}

// ---------------------------------------------------------------------------
// Riccati explorer
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct CurvePayload {
    times: Vec<f64>,
    values: Vec<f64>,
    sup: f64,
    blow_up: Option<f64>,
}

fn riccati_params_impl(a: f64, b: f64, c: f64) -> Result<String> {
    let p = riccati::derive(a, b, c)?;
    serde_json::to_string(&p).map_err(|e| Error::Inconsistency(e.to_string()))
}

fn riccati_curve_impl(a: f64, b: f64, c: f64, l0: f64, t_final: f64) -> Result<String> {
    let p = riccati::derive(a, b, c)?;
    let traj = riccati::integrate_worst_case(&p, l0, t_final, p.oracle_dt())?;
    let stride = traj.times.len().div_ceil(MAX_CURVE_POINTS).max(1);
    let times: Vec<f64> = traj.times.iter().copied().step_by(stride).collect();
    let values: Vec<f64> = traj.values.iter().copied().step_by(stride).collect();
    let payload = CurvePayload { times, values, sup: traj.sup, blow_up: traj.blow_up };
    serde_json::to_string(&payload).map_err(|e| Error::Inconsistency(e.to_string()))
}

/// Derived comparison data (roots, contraction rate, deadline) for
/// L' ≤ c - 2bL + aL² as a JSON object, or an error when b ≤ √(ac).
#[wasm_bindgen]
pub fn riccati_params_json(a: f64, b: f64, c: f64) -> std::result::Result<String, JsError> {
    riccati_params_impl(a, b, c).map_err(js_err)
}

/// Worst-case trajectory from L(0) = l0 over [0, t_final], thinned for
/// plotting. `blow_up` reports the first time the trajectory left the basin.
#[wasm_bindgen]
pub fn riccati_curve_json(
    a: f64,
    b: f64,
    c: f64,
    l0: f64,
    t_final: f64,
) -> std::result::Result<String, JsError> {
    riccati_curve_impl(a, b, c, l0, t_final).map_err(js_err)
}

// ---------------------------------------------------------------------------
// Lyapunov functional probe
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct LambdaProbe {
    eps: f64,
    eps_cap: f64,
    lambda: f64,
    /// (1-εω)/2·‖z‖² evaluated at this state.
    lower_bound: f64,
    /// (3+εω)/2·‖z‖² + (4/κ)‖F‖² evaluated at this state.
    upper_bound: f64,
    h_norm_sq: f64,
    terms: LambdaTerms,
}

fn lambda_probe_impl(eps_frac: f64, amplitude: f64, force_amplitude: f64) -> Result<String> {
    if !(0.0 < eps_frac && eps_frac < 1.0) {
        return Err(Error::Precondition(format!(
            "eps fraction must lie strictly between 0 and 1, got {eps_frac}"
        )));
    }
    let n = 16;
    let basis = Basis::new(DomainSpec::with_min_grid(0.0, PI, n))?;
    let kernel = KernelSpec::make(KernelRequest::Prony {
        rates_and_weights: vec![(1.0, None), (3.0, None)],
        delta: None,
    })?;
    let force = if force_amplitude == 0.0 {
        ForceData::zero(&basis)
    } else {
        ForceData::new(&basis, SpectralField::mode(n, 1, force_amplitude))?
    };

    let mut u = demo_shape(n);
    let size = basis.triple_norm(&u, 1);
    if amplitude > 0.0 {
        u.scale(amplitude / size);
    } else {
        u.set_zero();
    }
    // Give the probe a non-trivial past: a partially relaxed copy of the
    // field shape, built consistently on the exact backend.
    let history = HistoryState::from_exponential_profile(
        &kernel,
        &basis,
        &[(1.0, u.scaled(0.5))],
        BackendKind::Markovian,
        0.01,
    )?;
    let state = State::new(u, history);
    let sys = System::new(basis, kernel, force);

    let omega = sys.basis.omega();
    let eps_cap = 1.0 / (2.0 * omega);
    let eps = eps_frac * eps_cap;
    let terms = lambda_terms(&sys, &state, eps)?;
    let h_norm_sq = sys.h_norm_sq(&state)?;
    let norm_f = sys.force.norm_f();
    let kappa = sys.kernel.kappa();
    let probe = LambdaProbe {
        eps,
        eps_cap,
        lambda: terms.total(),
        lower_bound: (1.0 - eps * omega) / 2.0 * h_norm_sq,
        upper_bound: (3.0 + eps * omega) / 2.0 * h_norm_sq + 4.0 / kappa * norm_f * norm_f,
        h_norm_sq,
        terms,
    };
    serde_json::to_string(&probe).map_err(|e| Error::Inconsistency(e.to_string()))
}

/// Evaluate the weighted Lyapunov functional on a synthetic state of the
/// requested size, together with its two-sided geometric envelope.
/// `eps_frac` is the fraction of the admissible ε range (0, 1/(2ω)).
#[wasm_bindgen]
pub fn lambda_probe_json(
    eps_frac: f64,
    amplitude: f64,
    force_amplitude: f64,
) -> std::result::Result<String, JsError> {
    lambda_probe_impl(eps_frac, amplitude, force_amplitude).map_err(js_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simulator_runs_and_reports_finite_decreasing_energy_without_forcing() {
        let mut sim = build_simulator(r#"{"force_amplitude": 0.0, "initial_amplitude": 0.3}"#)
            .expect("default unforced config builds");
        let first = sim.frame_impl().expect("frame at t = 0");
        sim.advance_impl(200).expect("200 steps of dt = 0.01");
        let last = sim.frame_impl().expect("frame at t = 2");
        assert!(
            (last.t - 2.0).abs() < 1e-12,
            "200 steps of dt 0.01 should land at t = 2, got {}",
            last.t
        );
        assert!(
            last.energy.is_finite() && last.energy < first.energy,
            "unforced energy must decay: E(0) = {}, E(2) = {}",
            first.energy,
            last.energy
        );
        assert_eq!(
            first.x.len(),
            first.u.len(),
            "profile must be sampled exactly on the reported grid"
        );
        sim.reset();
        let back = sim.frame_impl().expect("frame after reset");
        assert_eq!(back.t, 0.0, "reset must return the clock to zero");
        assert_eq!(back.energy, first.energy, "reset must restore the initial energy exactly");
    }

    #[test]
    fn simulator_rejects_unknown_configuration_keys() {
        let err = build_simulator(r#"{"dampening": 1.0}"#).unwrap_err();
        assert!(
            err.to_string().contains("dampening"),
            "unknown key should be named in the error, got: {err}"
        );
    }

    #[test]
    fn riccati_payloads_match_the_derived_roots() {
        let params: serde_json::Value =
            serde_json::from_str(&riccati_params_impl(1.0, 2.0, 1.0).unwrap()).unwrap();
        let lm = params["lambda_minus"].as_f64().unwrap();
        let lp = params["lambda_plus"].as_f64().unwrap();
        assert!(
            (lm - (2.0 - 3.0_f64.sqrt())).abs() < 1e-12,
            "(1,2,1) smaller root should be 2 - sqrt(3), got {lm}"
        );
        let curve: serde_json::Value =
            serde_json::from_str(&riccati_curve_impl(1.0, 2.0, 1.0, 0.5 * lm, 20.0).unwrap())
                .unwrap();
        let sup = curve["sup"].as_f64().unwrap();
        assert!(
            sup < lm + 1e-9,
            "a start below the attracting root must stay below it: sup = {sup}, root = {lm}"
        );
        assert!(curve["blow_up"].is_null(), "no blow-up expected below the barrier");
        let n = curve["times"].as_array().unwrap().len();
        assert!(
            n <= MAX_CURVE_POINTS,
            "curve payload must be thinned for plotting, got {n} points"
        );

        let above: serde_json::Value =
            serde_json::from_str(&riccati_curve_impl(1.0, 2.0, 1.0, 1.05 * lp, 40.0).unwrap())
                .unwrap();
        assert!(
            above["blow_up"].as_f64().is_some(),
            "a start above the repelling root must leave the basin"
        );
    }

    #[test]
    fn lambda_probe_sits_inside_its_geometric_envelope() {
        for (ef, amp, f) in [(0.3, 0.4, 0.1), (0.8, 1.2, 0.0), (0.05, 0.05, 0.3)] {
            let probe: serde_json::Value =
                serde_json::from_str(&lambda_probe_impl(ef, amp, f).unwrap()).unwrap();
            let lambda = probe["lambda"].as_f64().unwrap();
            let lo = probe["lower_bound"].as_f64().unwrap();
            let hi = probe["upper_bound"].as_f64().unwrap();
            let scale = 1.0 + lambda.abs() + hi;
            assert!(
                lo - 1e-12 * scale <= lambda && lambda <= hi + 1e-12 * scale,
                "Lambda must sit inside its envelope: {lo} <= {lambda} <= {hi} \
                 (eps_frac {ef}, amplitude {amp}, force {f})"
            );
        }
        let err = lambda_probe_impl(1.5, 0.1, 0.0).unwrap_err();
        assert!(
            err.to_string().contains("between 0 and 1"),
            "out-of-range eps fraction should be refused, got: {err}"
        );
    }
}
