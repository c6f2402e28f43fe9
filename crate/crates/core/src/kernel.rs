//! Memory kernels μ: nonnegative, nonincreasing, absolutely continuous
//! weights on (0, ∞) with finite μ(0), total mass κ = ∫μ, unit first moment
//! ∫ s μ(s) ds = 1, and an exponential-domination rate δ > 0 such that
//! μ' + δμ ≤ 0 almost everywhere.
//!
//! Two families are provided: finite Prony sums μ(s) = Σ aᵢ e^{-dᵢ s}, which
//! admit the exact exponential-mode (markovian) history reduction, and the
//! compactly supported truncated-linear ramp μ(s) = m₀ (1 - s/s₀)⁺. Weights
//! are normalized at construction so the first moment is exactly 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One exponential component a e^{-d s}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PronyMode {
    pub weight: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelFamily {
    Prony { modes: Vec<PronyMode> },
    /// μ(s) = m0 (1 - s/s0) on (0, s0), zero beyond.
    TruncatedLinear { m0: f64, s0: f64 },
}

/// A validated, normalized kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    family: KernelFamily,
    delta: f64,
    kappa: f64,
}

/// Construction input: Prony rates with optional weights (all or none), or a
/// ramp support length. `delta` defaults to the family's maximal valid rate.
#[derive(Debug, Clone)]
pub enum KernelRequest {
    Prony { rates_and_weights: Vec<(f64, Option<f64>)>, delta: Option<f64> },
    TruncatedLinear { s0: f64, delta: Option<f64> },
}

impl KernelSpec {
    pub fn make(req: KernelRequest) -> Result<Self> {
        match req {
            KernelRequest::Prony { rates_and_weights, delta } => {
                if rates_and_weights.is_empty() {
                    return Err(Error::Config("prony kernel needs at least one mode".into()));
                }
                for &(d, w) in &rates_and_weights {
                    if !(d > 0.0) || !d.is_finite() {
                        return Err(Error::Config(format!("prony rate must be positive, got {d}")));
                    }
                    if let Some(w) = w {
                        if !(w > 0.0) || !w.is_finite() {
                            return Err(Error::Config(format!(
                                "prony weight must be positive, got {w}"
                            )));
                        }
                    }
                }
                let given: Vec<bool> = rates_and_weights.iter().map(|(_, w)| w.is_some()).collect();
                if given.iter().any(|&g| g) && !given.iter().all(|&g| g) {
                    return Err(Error::Config(
                        "prony weights must be given for all modes or none".into(),
                    ));
                }
                let n = rates_and_weights.len() as f64;
                let mut modes: Vec<PronyMode> = rates_and_weights
                    .iter()
                    .map(|&(d, w)| PronyMode {
                        // Default weights d²/n already give unit first moment.
                        weight: w.unwrap_or(d * d / n),
                        rate: d,
                    })
                    .collect();
                // Normalize the first moment Σ aᵢ/dᵢ² to exactly 1.
                let m1: f64 = modes.iter().map(|m| m.weight / (m.rate * m.rate)).sum();
                for m in &mut modes {
                    m.weight /= m1;
                }
                let d_min = modes.iter().map(|m| m.rate).fold(f64::INFINITY, f64::min);
                let delta = delta.unwrap_or(d_min);
                if !(delta > 0.0) || delta > d_min * (1.0 + 1e-12) {
                    return Err(Error::Config(format!(
                        "delta = {delta} violates μ' + δμ ≤ 0; maximal rate for these modes is {d_min}"
                    )));
                }
                let kappa = modes.iter().map(|m| m.weight / m.rate).sum();
                Ok(KernelSpec { family: KernelFamily::Prony { modes }, delta: delta.min(d_min), kappa })
            }
            KernelRequest::TruncatedLinear { s0, delta } => {
                if !(s0 > 0.0) || !s0.is_finite() {
                    return Err(Error::Config(format!("ramp support must be positive, got {s0}")));
                }
                // ∫ s m0 (1 - s/s0) ds = m0 s0²/6 = 1.
                let m0 = 6.0 / (s0 * s0);
                let d_max = 1.0 / s0;
                let delta = delta.unwrap_or(d_max);
                if !(delta > 0.0) || delta > d_max * (1.0 + 1e-12) {
                    return Err(Error::Config(format!(
                        "delta = {delta} violates μ' + δμ ≤ 0; maximal rate for s0 = {s0} is {d_max}"
                    )));
                }
                Ok(KernelSpec {
                    family: KernelFamily::TruncatedLinear { m0, s0 },
                    delta: delta.min(d_max),
                    kappa: m0 * s0 / 2.0,
                })
            }
        }
    }

    /// Single-rate Prony kernel a = d², κ = d (after normalization).
    pub fn prony_single(rate: f64) -> Result<Self> {
        KernelSpec::make(KernelRequest::Prony {
            rates_and_weights: vec![(rate, None)],
            delta: None,
        })
    }

    pub fn family(&self) -> &KernelFamily {
        &self.family
    }

    /// Prony components, or an unsupported-query error for other families.
    pub fn prony_modes(&self) -> Result<&[PronyMode]> {
        match &self.family {
            KernelFamily::Prony { modes } => Ok(modes),
            _ => Err(Error::Unsupported(
                "exponential-mode reduction requires a prony kernel".into(),
            )),
        }
    }

    pub fn is_prony(&self) -> bool {
        matches!(self.family, KernelFamily::Prony { .. })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Total mass κ = ∫₀^∞ μ (closed form).
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn mu(&self, s: f64) -> f64 {
        if s < 0.0 {
            return 0.0;
        }
        match &self.family {
            KernelFamily::Prony { modes } => {
                modes.iter().map(|m| m.weight * (-m.rate * s).exp()).sum()
            }
            KernelFamily::TruncatedLinear { m0, s0 } => {
                if s < *s0 {
                    m0 * (1.0 - s / s0)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn mu_at_zero(&self) -> f64 {
        self.mu(0.0)
    }

    /// μ'(s) (the a.e. derivative; at the ramp's kink the left value is used).
    pub fn mu_prime(&self, s: f64) -> f64 {
        if s < 0.0 {
            return 0.0;
        }
        match &self.family {
            KernelFamily::Prony { modes } => {
                modes.iter().map(|m| -m.weight * m.rate * (-m.rate * s).exp()).sum()
            }
            KernelFamily::TruncatedLinear { m0, s0 } => {
                // Left value at the kink, so a quadrature node landing exactly
                // on s0 still carries the ramp's full dissipation weight.
                if s <= *s0 {
                    -m0 / s0
                } else {
                    0.0
                }
            }
        }
    }

    /// ∫_S^∞ μ (closed form).
    pub fn tail_mass(&self, s: f64) -> f64 {
        match &self.family {
            KernelFamily::Prony { modes } => {
                modes.iter().map(|m| m.weight / m.rate * (-m.rate * s).exp()).sum()
            }
            KernelFamily::TruncatedLinear { m0, s0 } => {
                if s < *s0 {
                    0.5 * m0 / s0 * (s0 - s) * (s0 - s)
                } else {
                    0.0
                }
            }
        }
    }

    /// ∫_S^∞ (-μ') = μ(S).
    pub fn tail_dissipation_mass(&self, s: f64) -> f64 {
        self.mu(s)
    }

    /// Smallest S with ∫_S^∞ μ ≤ tol·κ (support end for the ramp family).
    pub fn support_cutoff(&self, tol: f64) -> f64 {
        match &self.family {
            KernelFamily::TruncatedLinear { s0, .. } => *s0,
            KernelFamily::Prony { .. } => {
                let target = tol * self.kappa;
                let mut lo = 0.0f64;
                let mut hi = 1.0f64;
                while self.tail_mass(hi) > target {
                    hi *= 2.0;
                    if hi > 1e9 {
                        break;
                    }
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.tail_mass(mid) > target {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi
            }
        }
    }

    /// Stable hash of the kernel's defining data, for state-file compatibility
    /// checks.
    pub fn hash(&self) -> u64 {
        let mut h = crate::persist::Fnv::new();
        match &self.family {
            KernelFamily::Prony { modes } => {
                h.write_u64(1);
                for m in modes {
                    h.write_f64(m.weight);
                    h.write_f64(m.rate);
                }
            }
            KernelFamily::TruncatedLinear { m0, s0 } => {
                h.write_u64(2);
                h.write_f64(*m0);
                h.write_f64(*s0);
            }
        }
        h.write_f64(self.delta);
        h.finish()
    }
}

/// Independent moment/shape audit of a kernel, computed by quadrature rather
/// than the closed forms used at construction.
#[derive(Debug, Clone, Serialize)]
pub struct KernelAudit {
    pub mass: f64,
    pub first_moment: f64,
    pub mu_at_zero: f64,
    pub delta: f64,
    /// max over sample nodes of μ' + δμ (should be ≤ 0 up to rounding).
    pub domination_defect: f64,
    /// max over consecutive samples of μ(s_{i+1}) - μ(s_i) (should be ≤ 0).
    pub monotonicity_defect: f64,
}

impl KernelAudit {
    pub fn passes(&self, moment_tol: f64) -> bool {
        (self.first_moment - 1.0).abs() <= moment_tol
            && self.domination_defect <= 1e-12 * self.mu_at_zero.max(1.0)
            && self.monotonicity_defect <= 1e-12 * self.mu_at_zero.max(1.0)
            && self.mu_at_zero.is_finite()
    }
}

/// Quadrature audit on geometric panels with the Prony tail added in closed
/// form. Four-point Gauss–Legendre per panel keeps the moment error far below
/// the 1e-10 acceptance threshold.
pub fn kernel_audit(kernel: &KernelSpec) -> KernelAudit {
    // Panels cluster near s = 0 (geometric growth) to resolve μ(0⁺).
    let s_end = kernel.support_cutoff(1e-16);
    let n_panels = 400usize;
    // Geometric panel edges from s_end * r^{n} .. s_end with first edge at 0.
    let ratio = 1.06f64;
    let mut edges = Vec::with_capacity(n_panels + 1);
    let mut w = 1.0f64;
    let mut acc = 0.0f64;
    let mut widths = Vec::with_capacity(n_panels);
    for _ in 0..n_panels {
        widths.push(w);
        acc += w;
        w *= ratio;
    }
    let scale = s_end / acc;
    edges.push(0.0);
    let mut s = 0.0;
    for w in &widths {
        s += w * scale;
        edges.push(s);
    }
    // 4-point Gauss–Legendre nodes on [-1, 1].
    let gl_x = [
        -0.8611363115940526,
        -0.3399810435848563,
        0.3399810435848563,
        0.8611363115940526,
    ];
    let gl_w = [
        0.3478548451374538,
        0.6521451548625461,
        0.6521451548625461,
        0.3478548451374538,
    ];
    let mut mass = 0.0;
    let mut first = 0.0;
    let mut dom = f64::NEG_INFINITY;
    for p in 0..n_panels {
        let (a, b) = (edges[p], edges[p + 1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (xi, wi) in gl_x.iter().zip(&gl_w) {
            let sv = mid + half * xi;
            let mu = kernel.mu(sv);
            mass += wi * half * mu;
            first += wi * half * sv * mu;
            dom = dom.max(kernel.mu_prime(sv) + kernel.delta() * mu);
        }
    }
    // Prony tail beyond the cutoff in closed form: ∫_S^∞ μ and ∫_S^∞ s μ.
    if let KernelFamily::Prony { modes } = kernel.family() {
        for m in modes {
            let e = (-m.rate * s_end).exp();
            mass += m.weight / m.rate * e;
            first += m.weight * e * (s_end / m.rate + 1.0 / (m.rate * m.rate));
        }
    }
    let mut mono = f64::NEG_INFINITY;
    let samples = 2000usize;
    let mut prev = kernel.mu(0.0);
    for i in 1..=samples {
        let sv = s_end * i as f64 / samples as f64;
        let cur = kernel.mu(sv);
        mono = mono.max(cur - prev);
        prev = cur;
    }
    KernelAudit {
        mass,
        first_moment: first,
        mu_at_zero: kernel.mu_at_zero(),
        delta: kernel.delta(),
        domination_defect: dom,
        monotonicity_defect: mono,
    }
}
