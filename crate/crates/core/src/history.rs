//! Memory (history) state η and its two interchangeable backends.
//!
//! η^t(x, s) is the integrated past of u: η^t(s) = ∫₀^s u(t - y) dy, advanced
//! by the transport law η_t = -η_s + u. Within one time step the driving field
//! is taken as the linear interpolant between the step endpoints, and both
//! backends integrate that path *exactly*:
//!
//! * `Quadrature`: η sampled on the uniform lattice s_i = i·ds, advanced by a
//!   pure index shift plus the path integral (no numerical diffusion in s).
//!   Weighted integrals use composite Simpson atoms rescaled so the discrete
//!   kernel mass equals the closed-form κ, with the kernel tail beyond the
//!   cutoff folded into the last atom. Time steps must satisfy dt = m·ds.
//! * `Markovian` (Prony kernels only): per exponential component the moment
//!   ψ_i = d_i ∫ e^{-d_i s} η(s) ds obeys ψ_i' = -d_i ψ_i + u and is advanced
//!   by the exact exponential integrator. A scalar channel
//!   q_i = ∫ e^{-d_i s} ‖η(s)‖₁² ds rides along for the quadratic functionals
//!   (M-norm and dissipation); quadratic queries outside that channel are
//!   unsupported on this backend.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::spectral::{Basis, DiagonalOp, SpectralField};

/// Relative slack when checking that dt is an integer multiple of ds.
const LATTICE_TOL: f64 = 1e-9;

/// Kernel-tail tolerance fixing the lattice cutoff S_max.
const TAIL_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub enum HistoryState {
    Quadrature(QuadratureHistory),
    Markovian(MarkovianHistory),
}

#[derive(Debug, Clone)]
pub struct QuadratureHistory {
    ds: f64,
    /// η at s_i = i·ds for i = 0..=K; nodes[0] is identically zero.
    nodes: Vec<SpectralField>,
    /// Quadrature atoms for ∫ μ(s) · ds; last atom carries the analytic tail.
    w_mu: Vec<f64>,
    /// Atoms for ∫ (-μ'(s)) · ds; last atom carries the tail μ(S_max).
    w_dis: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MarkovianHistory {
    psi: Vec<SpectralField>,
    q: Vec<f64>,
}

fn simpson_pattern(k: usize) -> Vec<f64> {
    // k is even; weights 1,4,2,4,...,2,4,1 scaled by 1/3 (ds applied later).
    debug_assert!(k >= 2 && k.is_multiple_of(2));
    let mut w = vec![0.0; k + 1];
    w[0] = 1.0 / 3.0;
    w[k] = 1.0 / 3.0;
    for (i, wi) in w.iter_mut().enumerate().take(k).skip(1) {
        *wi = if i % 2 == 1 { 4.0 / 3.0 } else { 2.0 / 3.0 };
    }
    w
}

impl QuadratureHistory {
    fn weights(kernel: &KernelSpec, ds: f64, k: usize) -> (Vec<f64>, Vec<f64>) {
        let pattern = simpson_pattern(k);
        let s_end = k as f64 * ds;
        let mut w_mu: Vec<f64> = pattern
            .iter()
            .enumerate()
            .map(|(i, w)| w * ds * kernel.mu(i as f64 * ds))
            .collect();
        let mut w_dis: Vec<f64> = pattern
            .iter()
            .enumerate()
            .map(|(i, w)| w * ds * (-kernel.mu_prime(i as f64 * ds)))
            .collect();
        // One shared rescale pins the lattice mass to κ - tail exactly; using the
        // same factor for both vectors keeps the pointwise domination
        // -μ' ≥ δμ true atom by atom (it is an equality for single-rate kernels).
        let tail = kernel.tail_mass(s_end);
        let lattice_mass: f64 = w_mu.iter().sum();
        let alpha = (kernel.kappa() - tail) / lattice_mass;
        for w in w_mu.iter_mut().chain(w_dis.iter_mut()) {
            *w *= alpha;
        }
        w_mu[k] += tail;
        w_dis[k] += kernel.tail_dissipation_mass(s_end);
        (w_mu, w_dis)
    }

    fn lattice_size(kernel: &KernelSpec, ds: f64) -> usize {
        let s_max = kernel.support_cutoff(TAIL_TOL);
        let mut k = (s_max / ds).ceil() as usize;
        k = k.max(2);
        if k % 2 == 1 {
            k += 1;
        }
        k
    }

    pub fn zero(kernel: &KernelSpec, n_modes: usize, ds: f64) -> Result<Self> {
        if !(ds > 0.0) || !ds.is_finite() {
            return Err(Error::Config(format!("history lattice spacing must be positive, got {ds}")));
        }
        let k = Self::lattice_size(kernel, ds);
        let (w_mu, w_dis) = Self::weights(kernel, ds, k);
        Ok(QuadratureHistory {
            ds,
            nodes: vec![SpectralField::zeros(n_modes); k + 1],
            w_mu,
            w_dis,
        })
    }

    pub fn from_nodes(kernel: &KernelSpec, ds: f64, nodes: Vec<SpectralField>) -> Result<Self> {
        if !(ds > 0.0) || !ds.is_finite() {
            return Err(Error::Config(format!("history lattice spacing must be positive, got {ds}")));
        }
        if nodes.len() < 3 || (nodes.len() - 1) % 2 == 1 {
            return Err(Error::Config(format!(
                "history lattice needs an even node interval count, got {} nodes",
                nodes.len()
            )));
        }
        let n = nodes[0].n_modes();
        if nodes.iter().any(|f| f.n_modes() != n) {
            return Err(Error::Inconsistency("history nodes have mixed mode counts".into()));
        }
        let k = nodes.len() - 1;
        let (w_mu, w_dis) = Self::weights(kernel, ds, k);
        Ok(QuadratureHistory { ds, nodes, w_mu, w_dis })
    }

    pub fn ds(&self) -> f64 {
        self.ds
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[SpectralField] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [SpectralField] {
        &mut self.nodes
    }

    pub fn node_s(&self, i: usize) -> f64 {
        i as f64 * self.ds
    }

    /// Quadrature atoms for ∫ μ(s) · ds over the lattice (tail folded into the
    /// last atom); they sum to κ exactly.
    pub fn mu_weights(&self) -> &[f64] {
        &self.w_mu
    }

    pub fn mass(&self) -> f64 {
        self.w_mu.iter().sum()
    }

    pub fn memory_force(&self, basis: &Basis) -> SpectralField {
        let mut acc = SpectralField::zeros(self.nodes[0].n_modes());
        for (w, f) in self.w_mu.iter().zip(&self.nodes) {
            if *w != 0.0 {
                acc.axpy(*w, f);
            }
        }
        basis.apply_in_place(DiagonalOp::A, &mut acc);
        acc
    }

    pub fn norm_m_sq(&self, basis: &Basis, r: i32) -> f64 {
        self.w_mu
            .iter()
            .zip(&self.nodes)
            .map(|(w, f)| w * basis.sobolev_norm_sq(f, r + 1))
            .sum()
    }

    pub fn gamma(&self, basis: &Basis) -> f64 {
        self.w_dis
            .iter()
            .zip(&self.nodes)
            .map(|(w, f)| w * basis.sobolev_norm_sq(f, 1))
            .sum()
    }

    /// ∫ μ(s) (u, η(s))_r ds with the B-weighted inner product.
    pub fn mixed_b_inner(&self, basis: &Basis, u: &SpectralField, r: i32) -> f64 {
        self.w_mu
            .iter()
            .zip(&self.nodes)
            .map(|(w, f)| w * basis.b_inner_r(u, f, r))
            .sum()
    }

    /// ∫ μ(s) ⟨g, η(s)⟩ ds with the plain L² pairing.
    pub fn pair_l2(&self, g: &SpectralField) -> f64 {
        self.w_mu.iter().zip(&self.nodes).map(|(w, f)| w * g.dot(f)).sum()
    }

    fn shift_multiple(&self, dt: f64) -> Result<usize> {
        let ratio = dt / self.ds;
        let m = ratio.round();
        if m < 1.0 || (ratio - m).abs() > LATTICE_TOL * ratio.max(1.0) {
            return Err(Error::Precondition(format!(
                "dt = {dt} is not an integer multiple of the history lattice spacing ds = {}",
                self.ds
            )));
        }
        Ok(m as usize)
    }

    /// ∫ of the linear path from u0 to u1 over its trailing window of length s.
    fn partial_path_integral(u0: &SpectralField, delta: &SpectralField, s: f64, dt: f64) -> SpectralField {
        let mut v = u0.clone();
        v.axpy(1.0 - s / (2.0 * dt), delta);
        v.scale(s);
        v
    }

    /// Exact shift along characteristics for the linear in-step path from u0 to u1.
    pub fn advance(&mut self, u0: &SpectralField, u1: &SpectralField, dt: f64) -> Result<()> {
        let m = self.shift_multiple(dt)?;
        let k = self.nodes.len() - 1;
        let mut full = u0.clone();
        full.axpy(1.0, u1);
        full.scale(0.5 * dt); // ∫ of the linear path over the whole step
        let mut delta = u1.clone();
        delta.axpy(-1.0, u0);
        if m <= k {
            // Survivors move up m slots and gain the whole-step integral; the
            // rotation only shuffles buffer pointers.
            self.nodes.rotate_right(m);
            for node in self.nodes.iter_mut().skip(m) {
                node.axpy(1.0, &full);
            }
        }
        for i in 1..m.min(k + 1) {
            self.nodes[i] = Self::partial_path_integral(u0, &delta, i as f64 * self.ds, dt);
        }
        self.nodes[0].set_zero();
        Ok(())
    }

    /// Memory force of the state `advance(u0, u1, dt)` would produce, computed
    /// in one weighted pass without materializing the advanced history. Lets a
    /// two-stage scheme evaluate its trial stage without cloning the lattice.
    pub fn advanced_memory_force(
        &self,
        basis: &Basis,
        u0: &SpectralField,
        u1: &SpectralField,
        dt: f64,
    ) -> Result<SpectralField> {
        let m = self.shift_multiple(dt)?;
        let k = self.nodes.len() - 1;
        let mut acc = SpectralField::zeros(self.nodes[0].n_modes());
        let mut surviving_weight = 0.0;
        for i in m..=k {
            let w = self.w_mu[i];
            if w != 0.0 {
                acc.axpy(w, &self.nodes[i - m]);
                surviving_weight += w;
            }
        }
        let mut full = u0.clone();
        full.axpy(1.0, u1);
        full.scale(0.5 * dt);
        acc.axpy(surviving_weight, &full);
        let mut delta = u1.clone();
        delta.axpy(-1.0, u0);
        for i in 1..m.min(k + 1) {
            let w = self.w_mu[i];
            if w != 0.0 {
                let v = Self::partial_path_integral(u0, &delta, i as f64 * self.ds, dt);
                acc.axpy(w, &v);
            }
        }
        basis.apply_in_place(DiagonalOp::A, &mut acc);
        Ok(acc)
    }
}

fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-5 {
        1.0 + z / 2.0 + z * z / 6.0 + z * z * z / 24.0
    } else {
        z.exp_m1() / z
    }
}

fn phi2(z: f64) -> f64 {
    if z.abs() < 1e-3 {
        0.5 + z / 6.0 + z * z / 24.0 + z * z * z / 120.0
    } else {
        (z.exp_m1() - z) / (z * z)
    }
}

impl MarkovianHistory {
    pub fn zero(kernel: &KernelSpec, n_modes: usize) -> Result<Self> {
        let modes = kernel.prony_modes()?;
        Ok(MarkovianHistory {
            psi: vec![SpectralField::zeros(n_modes); modes.len()],
            q: vec![0.0; modes.len()],
        })
    }

    pub fn from_parts(kernel: &KernelSpec, psi: Vec<SpectralField>, q: Vec<f64>) -> Result<Self> {
        let modes = kernel.prony_modes()?;
        if psi.len() != modes.len() || q.len() != modes.len() {
            return Err(Error::Inconsistency(format!(
                "markovian history needs {} components, got {} fields / {} channels",
                modes.len(),
                psi.len(),
                q.len()
            )));
        }
        Ok(MarkovianHistory { psi, q })
    }

    pub fn mode_count(&self) -> usize {
        self.psi.len()
    }

    pub fn psi(&self) -> &[SpectralField] {
        &self.psi
    }

    pub fn psi_mut(&mut self) -> &mut [SpectralField] {
        &mut self.psi
    }

    pub fn channels(&self) -> &[f64] {
        &self.q
    }

    pub fn channels_mut(&mut self) -> &mut [f64] {
        &mut self.q
    }

    pub fn memory_force(&self, basis: &Basis, kernel: &KernelSpec) -> SpectralField {
        let modes = kernel.prony_modes().expect("markovian history implies prony kernel");
        let mut acc = SpectralField::zeros(self.psi[0].n_modes());
        for (m, psi) in modes.iter().zip(&self.psi) {
            acc.axpy(m.weight / m.rate, psi);
        }
        basis.apply_in_place(DiagonalOp::A, &mut acc);
        acc
    }

    pub fn norm_m_sq(&self, kernel: &KernelSpec, r: i32) -> Result<f64> {
        if r != 0 {
            return Err(Error::Unsupported(format!(
                "markovian backend stores the level-0 quadratic channel only; requested r = {r}"
            )));
        }
        let modes = kernel.prony_modes()?;
        Ok(modes.iter().zip(&self.q).map(|(m, q)| m.weight * q).sum())
    }

    pub fn gamma(&self, kernel: &KernelSpec) -> f64 {
        let modes = kernel.prony_modes().expect("markovian history implies prony kernel");
        modes.iter().zip(&self.q).map(|(m, q)| m.weight * m.rate * q).sum()
    }

    pub fn mixed_b_inner(
        &self,
        basis: &Basis,
        kernel: &KernelSpec,
        u: &SpectralField,
        r: i32,
    ) -> f64 {
        let modes = kernel.prony_modes().expect("markovian history implies prony kernel");
        modes
            .iter()
            .zip(&self.psi)
            .map(|(m, psi)| m.weight / m.rate * basis.b_inner_r(u, psi, r))
            .sum()
    }

    pub fn pair_l2(&self, kernel: &KernelSpec, g: &SpectralField) -> f64 {
        let modes = kernel.prony_modes().expect("markovian history implies prony kernel");
        modes
            .iter()
            .zip(&self.psi)
            .map(|(m, psi)| m.weight / m.rate * g.dot(psi))
            .sum()
    }

    /// Exact exponential update for the linear in-step path; the quadratic
    /// channel integrates its known closed-form integrand by Simpson (O(h⁵)
    /// local error, far below the stepper's own order).
    pub fn advance(
        &mut self,
        basis: &Basis,
        kernel: &KernelSpec,
        u0: &SpectralField,
        u1: &SpectralField,
        dt: f64,
    ) -> Result<()> {
        let modes = kernel.prony_modes()?;
        let mut umid = u0.clone();
        umid.axpy(1.0, u1);
        umid.scale(0.5);
        let mut delta = u1.clone();
        delta.axpy(-1.0, u0);
        for ((m, psi), q) in modes.iter().zip(&mut self.psi).zip(&mut self.q) {
            let d = m.rate;
            let step = |psi0: &SpectralField, b0: &SpectralField, db: &SpectralField, h: f64| {
                let z = -d * h;
                let mut out = psi0.scaled(z.exp());
                out.axpy(h * phi1(z), b0);
                out.axpy(h * phi2(z), db);
                out
            };
            // Half-path endpoints are (u0, umid); slope halves accordingly.
            let mut half_delta = delta.clone();
            half_delta.scale(0.5);
            let psi_half = step(psi, u0, &half_delta, 0.5 * dt);
            let psi_full = step(psi, u0, &delta, dt);
            let g0 = 2.0 / d * basis.inner_r(u0, psi, 1);
            let gm = 2.0 / d * basis.inner_r(&umid, &psi_half, 1);
            let g1 = 2.0 / d * basis.inner_r(u1, &psi_full, 1);
            let eh = (-d * dt).exp();
            let em = (-d * 0.5 * dt).exp();
            let integral = dt / 6.0 * (eh * g0 + 4.0 * em * gm + g1);
            *q = (eh * *q + integral).max(0.0);
            *psi = psi_full;
        }
        Ok(())
    }

    /// Memory force after `advance(u0, u1, dt)`, skipping the quadratic
    /// channel update (which does not feed back into the dynamics).
    pub fn advanced_memory_force(
        &self,
        basis: &Basis,
        kernel: &KernelSpec,
        u0: &SpectralField,
        u1: &SpectralField,
        dt: f64,
    ) -> Result<SpectralField> {
        let modes = kernel.prony_modes()?;
        let mut delta = u1.clone();
        delta.axpy(-1.0, u0);
        let mut acc = SpectralField::zeros(self.psi[0].n_modes());
        for (m, psi) in modes.iter().zip(&self.psi) {
            let z = -m.rate * dt;
            let mut adv = psi.scaled(z.exp());
            adv.axpy(dt * phi1(z), u0);
            adv.axpy(dt * phi2(z), &delta);
            acc.axpy(m.weight / m.rate, &adv);
        }
        basis.apply_in_place(DiagonalOp::A, &mut acc);
        Ok(acc)
    }
}

impl HistoryState {
    pub fn quadrature_zero(kernel: &KernelSpec, n_modes: usize, ds: f64) -> Result<Self> {
        Ok(HistoryState::Quadrature(QuadratureHistory::zero(kernel, n_modes, ds)?))
    }

    pub fn quadrature_from_nodes(
        kernel: &KernelSpec,
        ds: f64,
        nodes: Vec<SpectralField>,
    ) -> Result<Self> {
        Ok(HistoryState::Quadrature(QuadratureHistory::from_nodes(kernel, ds, nodes)?))
    }

    pub fn markovian_zero(kernel: &KernelSpec, n_modes: usize) -> Result<Self> {
        Ok(HistoryState::Markovian(MarkovianHistory::zero(kernel, n_modes)?))
    }

    pub fn markovian_from_parts(
        kernel: &KernelSpec,
        psi: Vec<SpectralField>,
        q: Vec<f64>,
    ) -> Result<Self> {
        Ok(HistoryState::Markovian(MarkovianHistory::from_parts(kernel, psi, q)?))
    }

    /// Consistent construction of η(s) = Σ_p (1 - e^{-c_p s}) f_p on either
    /// backend; on the markovian side both ψ and the quadratic channel come
    /// from the closed forms, so structural inequalities hold exactly.
    pub fn from_exponential_profile(
        kernel: &KernelSpec,
        basis: &Basis,
        profiles: &[(f64, SpectralField)],
        backend: BackendKind,
        ds: f64,
    ) -> Result<Self> {
        for (c, _) in profiles {
            if !(*c > 0.0) {
                return Err(Error::Config(format!("profile rate must be positive, got {c}")));
            }
        }
        match backend {
            BackendKind::Quadrature => {
                let mut h = QuadratureHistory::zero(kernel, basis.n_modes(), ds)?;
                let count = h.node_count();
                for i in 0..count {
                    let s = h.node_s(i);
                    let mut f = SpectralField::zeros(basis.n_modes());
                    for (c, fld) in profiles {
                        f.axpy(1.0 - (-c * s).exp(), fld);
                    }
                    h.nodes_mut()[i] = f;
                }
                Ok(HistoryState::Quadrature(h))
            }
            BackendKind::Markovian => {
                let modes = kernel.prony_modes()?;
                let mut psi = Vec::with_capacity(modes.len());
                let mut q = Vec::with_capacity(modes.len());
                for m in modes {
                    let d = m.rate;
                    let mut p = SpectralField::zeros(basis.n_modes());
                    for (c, fld) in profiles {
                        p.axpy(c / (d + c), fld);
                    }
                    let mut qv = 0.0;
                    for (cp, fp) in profiles {
                        for (cr, fr) in profiles {
                            let factor = 1.0 / d - 1.0 / (d + cp) - 1.0 / (d + cr)
                                + 1.0 / (d + cp + cr);
                            qv += basis.inner_r(fp, fr, 1) * factor;
                        }
                    }
                    psi.push(p);
                    q.push(qv);
                }
                Ok(HistoryState::Markovian(MarkovianHistory { psi, q }))
            }
        }
    }

    pub fn backend_kind(&self) -> BackendKind {
        match self {
            HistoryState::Quadrature(_) => BackendKind::Quadrature,
            HistoryState::Markovian(_) => BackendKind::Markovian,
        }
    }

    pub fn n_modes(&self) -> usize {
        match self {
            HistoryState::Quadrature(q) => q.nodes[0].n_modes(),
            HistoryState::Markovian(m) => m.psi[0].n_modes(),
        }
    }

    /// ∫ μ(s) A η(s) ds.
    pub fn memory_force(&self, basis: &Basis, kernel: &KernelSpec) -> SpectralField {
        match self {
            HistoryState::Quadrature(q) => q.memory_force(basis),
            HistoryState::Markovian(m) => m.memory_force(basis, kernel),
        }
    }

    /// ‖η‖²_{M^r} = ∫ μ(s) ‖η(s)‖²_{r+1} ds.
    pub fn norm_m_sq(&self, basis: &Basis, kernel: &KernelSpec, r: i32) -> Result<f64> {
        match self {
            HistoryState::Quadrature(q) => Ok(q.norm_m_sq(basis, r)),
            HistoryState::Markovian(m) => m.norm_m_sq(kernel, r),
        }
    }

    /// Γ[η] = -∫ μ'(s) ‖η(s)‖₁² ds ≥ δ ‖η‖²_M.
    pub fn gamma(&self, basis: &Basis, kernel: &KernelSpec) -> f64 {
        match self {
            HistoryState::Quadrature(q) => q.gamma(basis),
            HistoryState::Markovian(m) => m.gamma(kernel),
        }
    }

    /// ∫ μ(s) (u, η(s))_r ds.
    pub fn mixed_b_inner(
        &self,
        basis: &Basis,
        kernel: &KernelSpec,
        u: &SpectralField,
        r: i32,
    ) -> f64 {
        match self {
            HistoryState::Quadrature(q) => q.mixed_b_inner(basis, u, r),
            HistoryState::Markovian(m) => m.mixed_b_inner(basis, kernel, u, r),
        }
    }

    /// ∫ μ(s) ⟨g, η(s)⟩ ds.
    pub fn pair_l2(&self, kernel: &KernelSpec, g: &SpectralField) -> f64 {
        match self {
            HistoryState::Quadrature(q) => q.pair_l2(g),
            HistoryState::Markovian(m) => m.pair_l2(kernel, g),
        }
    }

    /// The discrete kernel mass seen by this state's functionals (equals the
    /// closed-form κ on either backend by construction).
    pub fn mass(&self, kernel: &KernelSpec) -> f64 {
        match self {
            HistoryState::Quadrature(q) => q.mass(),
            HistoryState::Markovian(_) => kernel.kappa(),
        }
    }

    pub fn advance(
        &mut self,
        basis: &Basis,
        kernel: &KernelSpec,
        u0: &SpectralField,
        u1: &SpectralField,
        dt: f64,
    ) -> Result<()> {
        match self {
            HistoryState::Quadrature(q) => q.advance(u0, u1, dt),
            HistoryState::Markovian(m) => m.advance(basis, kernel, u0, u1, dt),
        }
    }

    /// Memory force of the advanced state without committing the advance.
    pub fn advanced_memory_force(
        &self,
        basis: &Basis,
        kernel: &KernelSpec,
        u0: &SpectralField,
        u1: &SpectralField,
        dt: f64,
    ) -> Result<SpectralField> {
        match self {
            HistoryState::Quadrature(q) => q.advanced_memory_force(basis, u0, u1, dt),
            HistoryState::Markovian(m) => m.advanced_memory_force(basis, kernel, u0, u1, dt),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            HistoryState::Quadrature(q) => q.nodes.iter().all(|f| f.is_finite()),
            HistoryState::Markovian(m) => {
                m.psi.iter().all(|f| f.is_finite()) && m.q.iter().all(|v| v.is_finite())
            }
        }
    }

    /// H-norm difference ‖η₁ - η₂‖_M between two histories. Needs pointwise
    /// node access, so both must be quadrature states on the same lattice.
    pub fn diff_norm_m_sq(&self, other: &HistoryState, basis: &Basis) -> Result<f64> {
        let (HistoryState::Quadrature(a), HistoryState::Quadrature(b)) = (self, other) else {
            return Err(Error::Unsupported(
                "history differences need the quadrature backend on both sides".into(),
            ));
        };
        if a.ds != b.ds || a.nodes.len() != b.nodes.len() {
            return Err(Error::Inconsistency(
                "history lattices differ; distances are defined on a common discretization".into(),
            ));
        }
        let mut acc = 0.0;
        for ((w, fa), fb) in a.w_mu.iter().zip(&a.nodes).zip(&b.nodes) {
            if *w == 0.0 {
                continue;
            }
            let d = fa.sub(fb);
            acc += w * basis.sobolev_norm_sq(&d, 1);
        }
        Ok(acc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Quadrature,
    Markovian,
}

impl BackendKind {
    pub fn name(self) -> &'static str {
        match self {
            BackendKind::Quadrature => "quadrature",
            BackendKind::Markovian => "markovian",
        }
    }
}
