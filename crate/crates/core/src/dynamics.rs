//! The solution semigroup: advance the coupled field/history system
//!
//!   B u_t + u_x + ∫₀^∞ μ(s) A η(s) ds + u u_x = f,   η_t = -η_s + u,
//!
//! record trajectories, and audit the energy identity dE/dt + Γ[η] = 2⟨f,u⟩
//! along them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::history::{BackendKind, HistoryState, MarkovianHistory};
use crate::kernel::KernelSpec;
use crate::spectral::{Basis, DiagonalOp, ForceData, SpectralField};

/// Norm threshold beyond which a trajectory is declared divergent. Theory
/// covers small-force regimes; anything this large is a genuine blow-up or a
/// step-size violation and must fail loudly rather than produce numbers.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct State {
    pub u: SpectralField,
    pub history: HistoryState,
    pub t: f64,
}

impl State {
    pub fn new(u: SpectralField, history: HistoryState) -> Self {
        State { u, history, t: 0.0 }
    }

    pub fn zero(n_modes: usize, kernel: &KernelSpec, backend: BackendKind, ds: f64) -> Result<Self> {
        let history = match backend {
            BackendKind::Quadrature => HistoryState::quadrature_zero(kernel, n_modes, ds)?,
            BackendKind::Markovian => HistoryState::markovian_zero(kernel, n_modes)?,
        };
        Ok(State { u: SpectralField::zeros(n_modes), history, t: 0.0 })
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.history.is_finite()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Two-stage second-order step: explicit Heun combination for the field,
    /// memory advanced exactly along the linear in-step path. Works on both
    /// history backends.
    #[default]
    Imex2,
    /// Classical fourth-order Runge-Kutta on the coupled field/moment system.
    /// Markovian backend only: the lattice transport cannot take the
    /// fractional stage steps this scheme needs.
    Rk4Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperConfig {
    pub dt: f64,
    #[serde(default)]
    pub scheme: Scheme,
    pub t_final: f64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
}

fn default_stride() -> usize {
    1
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt must be positive and finite, got {}", self.dt)));
        }
        if !self.t_final.is_finite() || self.t_final < 0.0 {
            return Err(Error::Config(format!("t_final must be nonnegative, got {}", self.t_final)));
        }
        if self.record_stride == 0 {
            return Err(Error::Config("record_stride must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// E(t) = |||u|||₁² + ‖η‖²_M (twice the physical energy).
    pub energies: Vec<f64>,
    pub gammas: Vec<f64>,
    /// 2⟨f, u⟩.
    pub forcing_work: Vec<f64>,
    pub norm_u_triple1: Vec<f64>,
    pub norm_eta_m: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn push(&mut self, t: f64, tri: f64, eta_m: f64, gamma: f64, work: f64) {
        self.times.push(t);
        self.energies.push(tri * tri + eta_m * eta_m);
        self.gammas.push(gamma);
        self.forcing_work.push(work);
        self.norm_u_triple1.push(tri);
        self.norm_eta_m.push(eta_m);
    }

    /// Centered-difference audit of dE/dt + Γ = 2⟨f,u⟩ at interior samples.
    /// Second-order accurate in the recording interval.
    pub fn energy_identity_residuals(&self) -> Result<Vec<f64>> {
        let n = self.times.len();
        if n < 3 {
            return Err(Error::Precondition(format!(
                "energy audit needs at least 3 samples, record has {n}"
            )));
        }
        let mut out = Vec::with_capacity(n - 2);
        for i in 1..n - 1 {
            let span = self.times[i + 1] - self.times[i - 1];
            let dedt = (self.energies[i + 1] - self.energies[i - 1]) / span;
            out.push(dedt + self.gammas[i] - self.forcing_work[i]);
        }
        Ok(out)
    }

    pub fn max_energy_identity_residual(&self) -> Result<f64> {
        Ok(self
            .energy_identity_residuals()?
            .into_iter()
            .fold(0.0_f64, |acc, r| acc.max(r.abs())))
    }

    /// |E(T) − E(0) + ∫Γ − ∫2⟨f,u⟩| with trapezoid quadrature over the
    /// recorded samples. The balance holds exactly for the continuous flow;
    /// what survives discretization is O(dt²) + O(recording interval²).
    pub fn integrated_identity_defect(&self) -> Result<f64> {
        let n = self.times.len();
        if n < 2 {
            return Err(Error::Precondition(format!(
                "integrated energy audit needs at least 2 samples, record has {n}"
            )));
        }
        let mut dissipated = 0.0;
        let mut injected = 0.0;
        for i in 0..n - 1 {
            let h = 0.5 * (self.times[i + 1] - self.times[i]);
            dissipated += h * (self.gammas[i] + self.gammas[i + 1]);
            injected += h * (self.forcing_work[i] + self.forcing_work[i + 1]);
        }
        Ok((self.energies[n - 1] - self.energies[0] + dissipated - injected).abs())
    }
}

/// Everything fixed along a trajectory: the spatial discretization, the
/// memory kernel, and the (autonomous) forcing.
#[derive(Debug, Clone)]
pub struct System {
    pub basis: Basis,
    pub kernel: KernelSpec,
    pub force: ForceData,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RhsFlavor {
    Full,
    /// Drops u u_x; used by the linear-regime dependence probe.
    Linearized,
}

impl System {
    pub fn new(basis: Basis, kernel: KernelSpec, force: ForceData) -> Self {
        System { basis, kernel, force }
    }

    pub fn n_modes(&self) -> usize {
        self.basis.n_modes()
    }

    /// ‖z‖²_H = |||u|||₁² + ‖η‖²_M.
    pub fn h_norm_sq(&self, state: &State) -> Result<f64> {
        let tri = self.basis.triple_norm_sq(&state.u, 1);
        let eta = state.history.norm_m_sq(&self.basis, &self.kernel, 0)?;
        Ok(tri + eta)
    }

    pub fn energy(&self, state: &State) -> Result<f64> {
        self.h_norm_sq(state)
    }

    pub fn gamma(&self, state: &State) -> f64 {
        state.history.gamma(&self.basis, &self.kernel)
    }

    /// 2⟨f, u⟩.
    pub fn forcing_work(&self, state: &State) -> f64 {
        2.0 * self.force.work(&state.u)
    }

    /// du/dt given the field and the memory force already assembled.
    pub(crate) fn field_rhs(
        &self,
        u: &SpectralField,
        memory_force: &SpectralField,
        flavor: RhsFlavor,
    ) -> SpectralField {
        let mut rhs = self.force.field().clone();
        rhs.axpy(-1.0, &self.basis.ddx_projected(u));
        rhs.axpy(-1.0, memory_force);
        if flavor == RhsFlavor::Full {
            let nl = self
                .basis
                .nonlinear_term(u)
                .expect("field dimensions are fixed by the system");
            rhs.axpy(-1.0, &nl);
        }
        self.basis.apply_in_place(DiagonalOp::BInverse, &mut rhs);
        rhs
    }

    fn step_imex2(&self, state: &mut State, dt: f64, flavor: RhsFlavor) -> Result<()> {
        let mf = state.history.memory_force(&self.basis, &self.kernel);
        let k1 = self.field_rhs(&state.u, &mf, flavor);
        let mut trial = state.u.clone();
        trial.axpy(dt, &k1);
        let mf_trial =
            state
                .history
                .advanced_memory_force(&self.basis, &self.kernel, &state.u, &trial, dt)?;
        let k2 = self.field_rhs(&trial, &mf_trial, flavor);
        let mut next = state.u.clone();
        next.axpy(0.5 * dt, &k1);
        next.axpy(0.5 * dt, &k2);
        state.history.advance(&self.basis, &self.kernel, &state.u, &next, dt)?;
        state.u = next;
        state.t += dt;
        Ok(())
    }

    fn markovian_rhs(
        &self,
        u: &SpectralField,
        psi: &[SpectralField],
        q: &[f64],
        flavor: RhsFlavor,
    ) -> Result<(SpectralField, Vec<SpectralField>, Vec<f64>)> {
        let modes = self.kernel.prony_modes()?;
        let mut mf = SpectralField::zeros(u.n_modes());
        for (m, p) in modes.iter().zip(psi) {
            mf.axpy(m.weight / m.rate, p);
        }
        self.basis.apply_in_place(DiagonalOp::A, &mut mf);
        let du = self.field_rhs(u, &mf, flavor);
        let mut dpsi = Vec::with_capacity(psi.len());
        let mut dq = Vec::with_capacity(q.len());
        for ((m, p), qi) in modes.iter().zip(psi).zip(q) {
            let mut d = u.clone();
            d.axpy(-m.rate, p);
            dpsi.push(d);
            dq.push(-m.rate * qi + 2.0 / m.rate * self.basis.inner_r(u, p, 1));
        }
        Ok((du, dpsi, dq))
    }

    fn step_rk4(&self, state: &mut State, dt: f64, flavor: RhsFlavor) -> Result<()> {
        let HistoryState::Markovian(hist) = &state.history else {
            return Err(Error::Unsupported(
                "rk4_explicit integrates the moment system and needs the markovian backend".into(),
            ));
        };
        let psi0: Vec<SpectralField> = hist.psi().to_vec();
        let q0: Vec<f64> = hist.channels().to_vec();
        let u0 = state.u.clone();

        let shifted = |base_u: &SpectralField,
                       base_psi: &[SpectralField],
                       base_q: &[f64],
                       k: &(SpectralField, Vec<SpectralField>, Vec<f64>),
                       h: f64| {
            let mut u = base_u.clone();
            u.axpy(h, &k.0);
            let psi: Vec<SpectralField> = base_psi
                .iter()
                .zip(&k.1)
                .map(|(p, d)| {
                    let mut n = p.clone();
                    n.axpy(h, d);
                    n
                })
                .collect();
            let q: Vec<f64> = base_q.iter().zip(&k.2).map(|(v, d)| v + h * d).collect();
            (u, psi, q)
        };

        let k1 = self.markovian_rhs(&u0, &psi0, &q0, flavor)?;
        let (u_a, psi_a, q_a) = shifted(&u0, &psi0, &q0, &k1, 0.5 * dt);
        let k2 = self.markovian_rhs(&u_a, &psi_a, &q_a, flavor)?;
        let (u_b, psi_b, q_b) = shifted(&u0, &psi0, &q0, &k2, 0.5 * dt);
        let k3 = self.markovian_rhs(&u_b, &psi_b, &q_b, flavor)?;
        let (u_c, psi_c, q_c) = shifted(&u0, &psi0, &q0, &k3, dt);
        let k4 = self.markovian_rhs(&u_c, &psi_c, &q_c, flavor)?;

        let sixth = dt / 6.0;
        let mut u = u0;
        u.axpy(sixth, &k1.0);
        u.axpy(2.0 * sixth, &k2.0);
        u.axpy(2.0 * sixth, &k3.0);
        u.axpy(sixth, &k4.0);
        let mut psi = psi0;
        for (i, p) in psi.iter_mut().enumerate() {
            p.axpy(sixth, &k1.1[i]);
            p.axpy(2.0 * sixth, &k2.1[i]);
            p.axpy(2.0 * sixth, &k3.1[i]);
            p.axpy(sixth, &k4.1[i]);
        }
        let mut q = q0;
        for (i, v) in q.iter_mut().enumerate() {
            *v += sixth * (k1.2[i] + 2.0 * k2.2[i] + 2.0 * k3.2[i] + k4.2[i]);
            *v = v.max(0.0);
        }
        state.u = u;
        state.history =
            HistoryState::Markovian(MarkovianHistory::from_parts(&self.kernel, psi, q)?);
        state.t += dt;
        Ok(())
    }

    fn step_flavored(&self, state: &mut State, dt: f64, scheme: Scheme, flavor: RhsFlavor) -> Result<()> {
        match scheme {
            Scheme::Imex2 => self.step_imex2(state, dt, flavor)?,
            Scheme::Rk4Explicit => self.step_rk4(state, dt, flavor)?,
        }
        let norm = self.basis.triple_norm(&state.u, 1);
        if !state.is_finite() || norm > DIVERGENCE_THRESHOLD {
            return Err(Error::Divergence { t: state.t, norm });
        }
        Ok(())
    }

    /// One deterministic time step; identical inputs give bit-identical outputs.
    pub fn step(&self, state: &mut State, dt: f64, scheme: Scheme) -> Result<()> {
        self.step_flavored(state, dt, scheme, RhsFlavor::Full)
    }

    /// Advance to cfg.t_final, recording the standard observables every
    /// record_stride steps (and always at the first and last sample).
    pub fn evolve(&self, state: &mut State, cfg: &StepperConfig) -> Result<TrajectoryRecord> {
        self.evolve_with(state, cfg, |_| Ok(()))
    }

    /// `evolve` with a callback invoked at every recorded sample (after
    /// completed steps only, plus the initial state).
    pub fn evolve_with<F>(
        &self,
        state: &mut State,
        cfg: &StepperConfig,
        mut observer: F,
    ) -> Result<TrajectoryRecord>
    where
        F: FnMut(&State) -> Result<()>,
    {
        cfg.validate()?;
        let span = cfg.t_final - state.t;
        if span < -1e-12 {
            return Err(Error::Precondition(format!(
                "state is already past t_final ({} > {})",
                state.t, cfg.t_final
            )));
        }
        let steps = (span / cfg.dt).round().max(0.0) as usize;
        let mut rec = TrajectoryRecord::default();
        let record = |sys: &System, st: &State, rec: &mut TrajectoryRecord| -> Result<()> {
            let tri = sys.basis.triple_norm(&st.u, 1);
            let eta = st.history.norm_m_sq(&sys.basis, &sys.kernel, 0)?.max(0.0).sqrt();
            rec.push(st.t, tri, eta, sys.gamma(st), sys.forcing_work(st));
            Ok(())
        };
        record(self, state, &mut rec)?;
        observer(state)?;
        for n in 1..=steps {
            self.step(state, cfg.dt, cfg.scheme)?;
            if n % cfg.record_stride == 0 || n == steps {
                record(self, state, &mut rec)?;
                observer(state)?;
            }
        }
        Ok(rec)
    }

    /// Conservative explicit-stability estimate: the field right-hand side has
    /// Lipschitz constant of order ‖B⁻¹∂ₓ‖ + κ + amplitude, and the two-stage
    /// scheme tolerates roughly z ≤ 2 on the negative real axis. Heuristic,
    /// not a guarantee; divergence detection remains the backstop.
    pub fn stability_dt_bound(&self, state: &State) -> f64 {
        let amp = self.basis.triple_norm(&state.u, 1);
        2.0 / (0.5 + self.kernel.kappa() + amp)
    }

    /// Empirical continuous-dependence (Lipschitz) measurement: evolve both
    /// states with the same scheme and report ‖S(t)z₁ − S(t)z₂‖_H relative to
    /// the initial distance at every recorded time. With `linearized` the
    /// quadratic transport term is dropped on both trajectories, making the
    /// ratio exactly independent of the perturbation size.
    pub fn continuous_dependence_probe(
        &self,
        z1: &State,
        z2: &State,
        cfg: &StepperConfig,
        linearized: bool,
    ) -> Result<DependenceProbe> {
        cfg.validate()?;
        let dist = |a: &State, b: &State| -> Result<f64> {
            let du = a.u.sub(&b.u);
            let tri = self.basis.triple_norm_sq(&du, 1);
            let deta = a.history.diff_norm_m_sq(&b.history, &self.basis)?;
            Ok((tri + deta).max(0.0).sqrt())
        };
        let d0 = dist(z1, z2)?;
        if d0 == 0.0 {
            return Err(Error::Degenerate(
                "continuous dependence probe needs distinct initial states".into(),
            ));
        }
        let flavor = if linearized { RhsFlavor::Linearized } else { RhsFlavor::Full };
        let mut a = z1.clone();
        let mut b = z2.clone();
        let steps = ((cfg.t_final - a.t) / cfg.dt).round().max(0.0) as usize;
        let mut times = vec![a.t];
        let mut ratios = vec![1.0];
        for n in 1..=steps {
            self.step_flavored(&mut a, cfg.dt, cfg.scheme, flavor)?;
            self.step_flavored(&mut b, cfg.dt, cfg.scheme, flavor)?;
            if n % cfg.record_stride == 0 || n == steps {
                times.push(a.t);
                ratios.push(dist(&a, &b)? / d0);
            }
        }
        let max_ratio = ratios.iter().cloned().fold(0.0_f64, f64::max);
        Ok(DependenceProbe { times, ratios, max_ratio, initial_distance: d0 })
    }
}

/// Growth of a state perturbation along the flow, normalized by its initial
/// H-distance; `max_ratio` is the empirical Lipschitz bound over the horizon.
#[derive(Debug, Clone, Serialize)]
pub struct DependenceProbe {
    pub times: Vec<f64>,
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub initial_distance: f64,
}
