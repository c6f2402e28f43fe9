//! Spectral discretization on an interval with homogeneous Dirichlet conditions.
//!
//! Everything is expressed in the orthonormal sine eigenbasis of A = -d²/dx²,
//!   e_k(x) = sqrt(2/(b-a)) sin(k π (x-a)/(b-a)),   A e_k = λ_k e_k,
//! so A, B = I + A and all Sobolev norms are diagonal. The quadratic term
//! u u_x is a pure sine series with at most 2N wavenumbers, so evaluating it
//! pointwise on a grid of at least 3N/2 interior nodes and transforming back
//! yields the exact Galerkin projection (no aliasing). The advection term u_x
//! is a cosine series; its projection onto the sine basis uses the closed-form
//! skew-symmetric coupling matrix rather than grid quadrature.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interval, spectral resolution and quadrature grid size.
///
/// `n_grid` counts interior collocation nodes; the de-aliasing requirement for
/// the quadratic nonlinearity is 2(n_grid + 1) > 3 n_modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub a: f64,
    pub b: f64,
    pub n_modes: usize,
    pub n_grid: usize,
}

impl DomainSpec {
    /// Standard desk-scale setup on (a, b) with the minimal alias-free grid.
    pub fn with_min_grid(a: f64, b: f64, n_modes: usize) -> Self {
        let n_grid = (3 * n_modes).div_ceil(2);
        DomainSpec { a, b, n_modes, n_grid }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.a.is_finite() || !self.b.is_finite() || self.b <= self.a {
            return Err(Error::Config(format!(
                "domain must satisfy a < b with finite endpoints (got a = {}, b = {})",
                self.a, self.b
            )));
        }
        if self.n_modes == 0 {
            return Err(Error::Config("n_modes must be at least 1".into()));
        }
        if 2 * (self.n_grid + 1) <= 3 * self.n_modes {
            return Err(Error::Config(format!(
                "n_grid = {} aliases the quadratic term for n_modes = {}; need 2(n_grid+1) > 3 n_modes",
                self.n_grid, self.n_modes
            )));
        }
        Ok(())
    }

    pub fn length(&self) -> f64 {
        self.b - self.a
    }
}

/// Coefficient vector in the sine eigenbasis; index 0 holds wavenumber k = 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    c: Vec<f64>,
}

impl SpectralField {
    pub fn zeros(n_modes: usize) -> Self {
        SpectralField { c: vec![0.0; n_modes] }
    }

    pub fn from_coeffs(c: Vec<f64>) -> Self {
        SpectralField { c }
    }

    /// Single basis mode `amp * e_k` (k is 1-based).
    pub fn mode(n_modes: usize, k: usize, amp: f64) -> Self {
        assert!(k >= 1 && k <= n_modes, "mode index {k} out of range 1..={n_modes}");
        let mut c = vec![0.0; n_modes];
        c[k - 1] = amp;
        SpectralField { c }
    }

    pub fn n_modes(&self) -> usize {
        self.c.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.c
    }

    pub fn coeff(&self, k: usize) -> f64 {
        self.c[k - 1]
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.c {
            *v *= s;
        }
    }

    pub fn set_zero(&mut self) {
        self.c.fill(0.0);
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    /// self += s * other
    pub fn axpy(&mut self, s: f64, other: &SpectralField) {
        assert_eq!(self.c.len(), other.c.len(), "mode count mismatch");
        for (a, b) in self.c.iter_mut().zip(&other.c) {
            *a += s * b;
        }
    }

    pub fn add(&self, other: &SpectralField) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &SpectralField) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Plain L² pairing of coefficient vectors (= ⟨u, v⟩ by orthonormality).
    pub fn dot(&self, other: &SpectralField) -> f64 {
        assert_eq!(self.c.len(), other.c.len(), "mode count mismatch");
        self.c.iter().zip(&other.c).map(|(a, b)| a * b).sum()
    }
}

/// Diagonal operators available on spectral fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagonalOp {
    /// A = -d²/dx² (Dirichlet).
    A,
    /// B = I + A.
    B,
    /// B⁻¹.
    BInverse,
}

/// Precomputed tables for one domain: eigenvalues, collocation nodes, sine and
/// cosine evaluation tables, the projected-derivative coupling matrix and
/// quadrature scalings.
#[derive(Debug, Clone)]
pub struct Basis {
    spec: DomainSpec,
    len: f64,
    lam: Vec<f64>,
    x: Vec<f64>,
    /// sin(k π (j+1) / (M+1)), row-major [k][j], k = 0..N-1, j = 0..M-1.
    sin_kj: Vec<f64>,
    /// cos(k π (j+1) / (M+1)), same layout.
    cos_kj: Vec<f64>,
    /// d[k][m] = ⟨e_{m+1}', e_{k+1}⟩, skew-symmetric, row-major N×N.
    dmat: Vec<f64>,
    /// Interior quadrature weight ℓ/(M+1).
    quad_w: f64,
    /// Forward transform scale sqrt(2ℓ)/(M+1).
    fwd_scale: f64,
    /// Pointwise basis amplitude sqrt(2/ℓ).
    amp: f64,
}

impl Basis {
    pub fn new(spec: DomainSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_modes;
        let m = spec.n_grid;
        let len = spec.length();
        let lam: Vec<f64> = (1..=n)
            .map(|k| {
                let w = k as f64 * std::f64::consts::PI / len;
                w * w
            })
            .collect();
        let x: Vec<f64> = (1..=m)
            .map(|j| spec.a + len * j as f64 / (m as f64 + 1.0))
            .collect();
        let mut sin_kj = vec![0.0; n * m];
        let mut cos_kj = vec![0.0; n * m];
        for k in 0..n {
            for j in 0..m {
                let theta = (k + 1) as f64 * (j + 1) as f64 * std::f64::consts::PI
                    / (m as f64 + 1.0);
                sin_kj[k * m + j] = theta.sin();
                cos_kj[k * m + j] = theta.cos();
            }
        }
        // ⟨e_m', e_k⟩ = 4 k m / (ℓ (k² - m²)) when k+m is odd, else 0.
        let mut dmat = vec![0.0; n * n];
        for k in 1..=n {
            for mm in 1..=n {
                if (k + mm) % 2 == 1 {
                    let kk = k as f64;
                    let mf = mm as f64;
                    dmat[(k - 1) * n + (mm - 1)] = 4.0 * kk * mf / (len * (kk * kk - mf * mf));
                }
            }
        }
        Ok(Basis {
            spec,
            len,
            lam,
            x,
            sin_kj,
            cos_kj,
            dmat,
            quad_w: len / (m as f64 + 1.0),
            fwd_scale: (2.0 * len).sqrt() / (m as f64 + 1.0),
            amp: (2.0 / len).sqrt(),
        })
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn n_modes(&self) -> usize {
        self.spec.n_modes
    }

    pub fn n_grid(&self) -> usize {
        self.spec.n_grid
    }

    /// Eigenvalue λ_k of A (k is 1-based).
    pub fn eigenvalue(&self, k: usize) -> f64 {
        self.lam[k - 1]
    }

    pub fn lambda1(&self) -> f64 {
        self.lam[0]
    }

    /// Norm-equivalence constant ω = sqrt((1+λ₁)/λ₁) relating |||·|||_r and ‖·‖_r.
    pub fn omega(&self) -> f64 {
        ((1.0 + self.lam[0]) / self.lam[0]).sqrt()
    }

    /// Interior collocation nodes.
    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    /// Interior quadrature weight ℓ/(M+1); exact for products that stay below
    /// the grid's alias limit.
    pub fn interior_weight(&self) -> f64 {
        self.quad_w
    }

    fn check(&self, f: &SpectralField) -> Result<()> {
        if f.n_modes() != self.spec.n_modes {
            return Err(Error::Inconsistency(format!(
                "field has {} modes, basis expects {}",
                f.n_modes(),
                self.spec.n_modes
            )));
        }
        Ok(())
    }

    /// Evaluate the sine series at the interior nodes.
    pub fn eval_grid(&self, f: &SpectralField) -> Vec<f64> {
        let n = self.spec.n_modes;
        let m = self.spec.n_grid;
        let mut out = vec![0.0; m];
        for k in 0..n {
            let ck = f.coeffs()[k] * self.amp;
            if ck == 0.0 {
                continue;
            }
            let row = &self.sin_kj[k * m..(k + 1) * m];
            for (o, s) in out.iter_mut().zip(row) {
                *o += ck * s;
            }
        }
        out
    }

    /// Project interior-node samples onto the retained modes. Exact whenever the
    /// sampled function is a sine series of fewer than 2(M+1) - n_modes wavenumbers.
    pub fn project_grid(&self, vals: &[f64]) -> Result<SpectralField> {
        let n = self.spec.n_modes;
        let m = self.spec.n_grid;
        if vals.len() != m {
            return Err(Error::Inconsistency(format!(
                "grid sample count {} does not match n_grid {}",
                vals.len(),
                m
            )));
        }
        let mut c = vec![0.0; n];
        for (k, ck) in c.iter_mut().enumerate() {
            let row = &self.sin_kj[k * m..(k + 1) * m];
            let mut acc = 0.0;
            for (v, s) in vals.iter().zip(row) {
                acc += v * s;
            }
            *ck = acc * self.fwd_scale;
        }
        Ok(SpectralField::from_coeffs(c))
    }

    /// Pointwise derivative (cosine series) at the interior nodes.
    pub fn ddx_grid(&self, f: &SpectralField) -> Vec<f64> {
        let n = self.spec.n_modes;
        let m = self.spec.n_grid;
        let mut out = vec![0.0; m];
        for k in 0..n {
            let ck = f.coeffs()[k] * self.amp * (k + 1) as f64 * std::f64::consts::PI / self.len;
            if ck == 0.0 {
                continue;
            }
            let row = &self.cos_kj[k * m..(k + 1) * m];
            for (o, s) in out.iter_mut().zip(row) {
                *o += ck * s;
            }
        }
        out
    }

    /// Galerkin projection of u_x onto the sine basis via the closed-form
    /// coupling matrix. Skew-symmetric: ⟨proj(u_x), u⟩ = 0 exactly.
    pub fn ddx_projected(&self, f: &SpectralField) -> SpectralField {
        let n = self.spec.n_modes;
        let mut c = vec![0.0; n];
        for (k, ck) in c.iter_mut().enumerate() {
            let row = &self.dmat[k * n..(k + 1) * n];
            let mut acc = 0.0;
            for (cm, d) in f.coeffs().iter().zip(row) {
                acc += cm * d;
            }
            *ck = acc;
        }
        SpectralField::from_coeffs(c)
    }

    /// Apply a diagonal operator.
    pub fn apply(&self, op: DiagonalOp, f: &SpectralField) -> SpectralField {
        let mut out = f.clone();
        self.apply_in_place(op, &mut out);
        out
    }

    pub fn apply_in_place(&self, op: DiagonalOp, f: &mut SpectralField) {
        for (c, l) in f.coeffs_mut().iter_mut().zip(&self.lam) {
            *c *= match op {
                DiagonalOp::A => *l,
                DiagonalOp::B => 1.0 + *l,
                DiagonalOp::BInverse => 1.0 / (1.0 + *l),
            };
        }
    }

    /// ‖u‖_r = ‖A^{r/2} u‖. Negative r is diagnostic only.
    pub fn sobolev_norm(&self, f: &SpectralField, r: i32) -> f64 {
        self.sobolev_norm_sq(f, r).sqrt()
    }

    pub fn sobolev_norm_sq(&self, f: &SpectralField, r: i32) -> f64 {
        f.coeffs()
            .iter()
            .zip(&self.lam)
            .map(|(c, l)| c * c * l.powi(r))
            .sum()
    }

    /// |||u|||_r² = ‖u‖_{r-1}² + ‖u‖_r² (the B-weighted norm at level r).
    pub fn triple_norm_sq(&self, f: &SpectralField, r: i32) -> f64 {
        f.coeffs()
            .iter()
            .zip(&self.lam)
            .map(|(c, l)| c * c * (l.powi(r - 1) + l.powi(r)))
            .sum()
    }

    pub fn triple_norm(&self, f: &SpectralField, r: i32) -> f64 {
        self.triple_norm_sq(f, r).sqrt()
    }

    /// ⟨u, v⟩_r = ⟨A^{r/2}u, A^{r/2}v⟩.
    pub fn inner_r(&self, f: &SpectralField, g: &SpectralField, r: i32) -> f64 {
        f.coeffs()
            .iter()
            .zip(g.coeffs())
            .zip(&self.lam)
            .map(|((a, b), l)| a * b * l.powi(r))
            .sum()
    }

    /// (u, v)_r = ⟨u, v⟩_{r-1} + ⟨u, v⟩_r, the inner product of |||·|||_r.
    pub fn b_inner_r(&self, f: &SpectralField, g: &SpectralField, r: i32) -> f64 {
        f.coeffs()
            .iter()
            .zip(g.coeffs())
            .zip(&self.lam)
            .map(|((a, b), l)| a * b * (l.powi(r - 1) + l.powi(r)))
            .sum()
    }

    /// Exact Galerkin projection of u u_x, computed pseudo-spectrally on the
    /// alias-free grid. Zero-boundary cancellation gives ⟨uu_x, u⟩ = 0.
    pub fn nonlinear_term(&self, f: &SpectralField) -> Result<SpectralField> {
        self.check(f)?;
        let u = self.eval_grid(f);
        let ux = self.ddx_grid(f);
        let prod: Vec<f64> = u.iter().zip(&ux).map(|(a, b)| a * b).collect();
        self.project_grid(&prod)
    }
}

/// A forcing term together with its primitive F(x) = ∫_a^x f and ‖F‖.
///
/// F lives on the full grid (it does not vanish at b, so it has no sine
/// expansion); pairings of F against sine-space partners are always rewritten
/// through integration by parts, so only ‖F‖ is consumed numerically.
#[derive(Debug, Clone)]
pub struct ForceData {
    f: SpectralField,
    /// F at a, the interior nodes, and b (n_grid + 2 values).
    big_f: Vec<f64>,
    norm_f: f64,
}

impl ForceData {
    /// Build from a spectral forcing. The primitive on the grid comes from
    /// cumulative trapezoids (display/diagnostic use); ‖F‖ comes from the
    /// closed form ‖F‖² = Σ f_k²/λ_k + 2(Σ f_k/√λ_k)², obtained by expanding
    /// the primitive of each sine mode in 1 - cos terms. The exact value keeps
    /// the functional bounds that compare against ‖F‖ free of grid error.
    pub fn new(basis: &Basis, f: SpectralField) -> Result<Self> {
        basis.check(&f)?;
        let m = basis.n_grid();
        let h = basis.interior_weight();
        // Sample f on endpoints (0 there) and interior nodes.
        let mut fv = vec![0.0; m + 2];
        let interior = basis.eval_grid(&f);
        fv[1..=m].copy_from_slice(&interior);
        let mut big_f = vec![0.0; m + 2];
        for j in 1..m + 2 {
            big_f[j] = big_f[j - 1] + 0.5 * h * (fv[j - 1] + fv[j]);
        }
        let mut dual = 0.0; // Σ f_k²/λ_k
        let mut mean = 0.0; // Σ f_k/√λ_k
        for (k, c) in f.coeffs().iter().enumerate() {
            let lam = basis.eigenvalue(k + 1);
            dual += c * c / lam;
            mean += c / lam.sqrt();
        }
        let nf2 = dual + 2.0 * mean * mean;
        Ok(ForceData { f, big_f, norm_f: nf2.sqrt() })
    }

    pub fn zero(basis: &Basis) -> Self {
        ForceData {
            f: SpectralField::zeros(basis.n_modes()),
            big_f: vec![0.0; basis.n_grid() + 2],
            norm_f: 0.0,
        }
    }

    pub fn field(&self) -> &SpectralField {
        &self.f
    }

    /// F on the full grid (a, interior nodes, b).
    pub fn primitive(&self) -> &[f64] {
        &self.big_f
    }

    pub fn norm_f(&self) -> f64 {
        self.norm_f
    }

    pub fn is_zero(&self) -> bool {
        self.f.coeffs().iter().all(|&c| c == 0.0)
    }

    /// Forcing work ⟨f, u⟩ (= -⟨F, u_x⟩ by parts).
    pub fn work(&self, u: &SpectralField) -> f64 {
        self.f.dot(u)
    }

    /// Rescale so that ‖F‖ equals the given target. Errors when f ≡ 0 but a
    /// nonzero target is requested.
    pub fn scaled_to_norm_f(&self, basis: &Basis, target: f64) -> Result<ForceData> {
        if target < 0.0 || !target.is_finite() {
            return Err(Error::Config(format!("‖F‖ target must be finite and >= 0, got {target}")));
        }
        if self.norm_f == 0.0 {
            if target == 0.0 {
                return Ok(self.clone());
            }
            return Err(Error::Inconsistency(
                "cannot rescale a zero force to a nonzero ‖F‖ target".into(),
            ));
        }
        ForceData::new(basis, self.f.scaled(target / self.norm_f))
    }
}
