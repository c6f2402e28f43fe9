//! Ensemble evolution and empirical attractor evidence.
//!
//! The long-time dynamics contracts bounded families of states onto a compact
//! attracting set. This module makes that observable: it samples clouds of
//! initial states on several invariant-set levels, evolves every member to a
//! set of checkpoints, and reports one-sided Hausdorff semidistances,
//! union-cloud diameters, and the final cloud's norms. Shrinking diameters
//! and small mutual semidistances between clouds started on distinct levels
//! are the empirical witnesses of attraction and of the attractor's
//! independence from the level used to trap it.
//!
//! Distances are measured in the natural energy norm of the extended state
//! (field at the first Sobolev level plus the μ-weighted history), which
//! requires the quadrature history backend; the moment reduction cannot
//! compare two histories pointwise.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Scheme, State, StepperConfig, System};
use crate::error::{Error, Result};
use crate::functionals::{admissibility, eps_for_bounded_set, StructuralConstants};
use crate::history::HistoryState;
use crate::kernel::KernelSpec;
use crate::spectral::{Basis, SpectralField};

/// A finite set of states sampled at a common time on a common discretization.
#[derive(Debug, Clone)]
pub struct PointCloud {
    states: Vec<State>,
}

impl PointCloud {
    /// Validates that the cloud is nonempty and every member shares the mode
    /// count and history discretization of the first.
    pub fn new(states: Vec<State>) -> Result<Self> {
        let Some(first) = states.first() else {
            return Err(Error::Precondition("a point cloud must be nonempty".into()));
        };
        let n = first.u.n_modes();
        let head_ds = quadrature_ds(first)?;
        for (i, s) in states.iter().enumerate().skip(1) {
            if s.u.n_modes() != n {
                return Err(Error::Precondition(format!(
                    "point cloud members must share a discretization: member {i} has \
                     {} modes, member 0 has {n}",
                    s.u.n_modes()
                )));
            }
            let ds = quadrature_ds(s)?;
            if (ds - head_ds).abs() > 1e-12 * head_ds {
                return Err(Error::Precondition(format!(
                    "point cloud members must share a history lattice: member {i} has \
                     ds = {ds}, member 0 has ds = {head_ds}"
                )));
            }
        }
        Ok(PointCloud { states })
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

fn quadrature_ds(s: &State) -> Result<f64> {
    match &s.history {
        HistoryState::Quadrature(q) => Ok(q.ds()),
        HistoryState::Markovian(_) => Err(Error::Unsupported(
            "cloud distances need pointwise history comparison; use the quadrature backend"
                .into(),
        )),
    }
}

/// ‖z₁ − z₂‖_H: field difference in the level-1 triple norm plus history
/// difference in the μ-weighted norm.
pub fn h_distance(basis: &Basis, a: &State, b: &State) -> Result<f64> {
    let mut du = a.u.clone();
    du.axpy(-1.0, &b.u);
    let field = basis.triple_norm_sq(&du, 1);
    let hist = a.history.diff_norm_m_sq(&b.history, basis)?;
    Ok((field + hist).max(0.0).sqrt())
}

/// One-sided Hausdorff semidistance sup over c1 of inf over c2 of ‖z₁−z₂‖_H.
/// Zero when c1 ⊆ c2; not symmetric.
pub fn semidistance(basis: &Basis, c1: &PointCloud, c2: &PointCloud) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for z1 in &c1.states {
        let mut inf = f64::INFINITY;
        for z2 in &c2.states {
            let d = h_distance(basis, z1, z2)?;
            if d < inf {
                inf = d;
            }
        }
        if inf > sup {
            sup = inf;
        }
    }
    Ok(sup)
}

/// Largest pairwise ‖·‖_H distance within the cloud.
pub fn diameter(basis: &Basis, c: &PointCloud) -> Result<f64> {
    let mut max: f64 = 0.0;
    for (i, z1) in c.states.iter().enumerate() {
        for z2 in &c.states[i + 1..] {
            let d = h_distance(basis, z1, z2)?;
            if d > max {
                max = d;
            }
        }
    }
    Ok(max)
}

/// Random smooth initial state: sine coefficients ξ_k/k² with ξ_k uniform in
/// [−1, 1], rescaled so ‖z‖_H hits `target_h` exactly, with zero history.
pub fn sample_initial_state(
    basis: &Basis,
    kernel: &KernelSpec,
    ds: f64,
    target_h: f64,
    rng: &mut ChaCha8Rng,
) -> Result<State> {
    let n = basis.n_modes();
    let mut coeffs = Vec::with_capacity(n);
    for k in 1..=n {
        let xi: f64 = rng.gen_range(-1.0..1.0);
        coeffs.push(xi / (k * k) as f64);
    }
    let mut u = SpectralField::from_coeffs(coeffs);
    let tri = basis.triple_norm(&u, 1);
    if tri > 0.0 {
        u.scale(target_h / tri);
    } else {
        u.set_zero();
    }
    let history = HistoryState::quadrature_zero(kernel, n, ds)?;
    Ok(State::new(u, history))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleOptions {
    /// Total member count M ≥ 2, split as evenly as possible across levels.
    pub members: usize,
    /// Target ‖z‖_H radii of the invariant-set levels to start from.
    pub level_radii: Vec<f64>,
    pub horizon: f64,
    /// Snapshot times; T/2 and T are always included.
    pub checkpoints: Vec<f64>,
    pub seed: u64,
    pub dt: f64,
    /// History lattice spacing shared by every member.
    pub ds: f64,
    pub scheme: Scheme,
}

/// Per-level sampling plan: the radius, the certified ε for that radius, and
/// how many members start there.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LevelPlan {
    pub radius: f64,
    pub eps: f64,
    pub members: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub levels: Vec<LevelPlan>,
    pub checkpoint_times: Vec<f64>,
    /// Union-cloud diameter at each checkpoint time.
    pub union_diameters: Vec<f64>,
    pub initial_diameter: f64,
    /// δ(cloud at T, cloud at T/2): how far the final cloud sits from the
    /// halfway one; small values witness settling.
    pub attraction: f64,
    /// max ‖z‖_H over the final cloud.
    pub final_max_h: f64,
    /// max H¹ norm √(triple₂² + ‖η‖²_{M¹}) over the final cloud.
    pub final_max_h1: f64,
    /// max over ordered level pairs of δ(final cloud of one level, final
    /// cloud of another): small values witness level independence.
    pub cross_level_semidistance: f64,
}

/// Sample, evolve, and measure an ensemble. Refuses inadmissible forces and
/// degenerate member counts. Deterministic given (options, system).
pub fn attractor_ensemble(
    sys: &System,
    constants: &StructuralConstants,
    opts: &EnsembleOptions,
) -> Result<EnsembleReport> {
    if opts.members < 2 {
        return Err(Error::Precondition(format!(
            "an ensemble needs at least 2 members, got {}",
            opts.members
        )));
    }
    if opts.level_radii.is_empty() {
        return Err(Error::Precondition("at least one level radius is required".into()));
    }
    if opts.level_radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(Error::Precondition(format!(
            "level radii must be positive and finite, got {:?}",
            opts.level_radii
        )));
    }
    if !(opts.horizon > 0.0) || !(opts.dt > 0.0) || !(opts.ds > 0.0) {
        return Err(Error::Precondition(format!(
            "horizon, dt and ds must be positive, got {}, {}, {}",
            opts.horizon, opts.dt, opts.ds
        )));
    }
    constants.validate(sys.basis.omega())?;
    let adm = admissibility(constants, &sys.force)?;
    if !adm.admissible {
        return Err(Error::Precondition(format!(
            "force refused by the admissibility gate: ‖F‖ = {:.6} is not below the \
             smallness threshold 𝔠 = {:.6} (ρ = {:.4})",
            adm.norm_f, adm.frak_c, adm.rho
        )));
    }

    // Snap checkpoints to the step grid, always including T/2 and T.
    let snap = |t: f64| (t / opts.dt).round() * opts.dt;
    let mut times: Vec<f64> = opts
        .checkpoints
        .iter()
        .copied()
        .chain([opts.horizon / 2.0, opts.horizon])
        .map(snap)
        .filter(|t| *t > 0.0 && *t <= opts.horizon + 0.5 * opts.dt)
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).expect("checkpoint times are finite"));
    times.dedup_by(|a, b| (*a - *b).abs() < 0.5 * opts.dt);

    let kappa = sys.kernel.kappa();
    let mut levels = Vec::new();
    let per = opts.members / opts.level_radii.len();
    let extra = opts.members % opts.level_radii.len();
    for (i, r) in opts.level_radii.iter().enumerate() {
        let count = per + usize::from(i < extra);
        if count == 0 {
            return Err(Error::Precondition(format!(
                "{} members cannot cover {} levels",
                opts.members,
                opts.level_radii.len()
            )));
        }
        levels.push(LevelPlan {
            radius: *r,
            eps: eps_for_bounded_set(*r, &adm, constants, kappa),
            members: count,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut seeds: Vec<(usize, State)> = Vec::with_capacity(opts.members);
    for (li, level) in levels.iter().enumerate() {
        for _ in 0..level.members {
            let z = sample_initial_state(&sys.basis, &sys.kernel, opts.ds, level.radius, &mut rng)?;
            seeds.push((li, z));
        }
    }

    let run_member = |(li, mut z): (usize, State)| -> Result<(usize, Vec<State>)> {
        let mut snaps = Vec::with_capacity(times.len());
        for t in &times {
            let cfg = StepperConfig {
                dt: opts.dt,
                scheme: opts.scheme,
                t_final: *t,
                record_stride: usize::MAX,
            };
            sys.evolve(&mut z, &cfg)?;
            snaps.push(z.clone());
        }
        Ok((li, snaps))
    };

    #[cfg(feature = "parallel")]
    let evolved: Result<Vec<(usize, Vec<State>)>> = {
        use rayon::prelude::*;
        seeds.clone().into_par_iter().map(run_member).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let evolved: Result<Vec<(usize, Vec<State>)>> = seeds.clone().into_iter().map(run_member).collect();
    let evolved = evolved?;

    let initial_cloud = PointCloud::new(seeds.iter().map(|(_, z)| z.clone()).collect())?;
    let initial_diameter = diameter(&sys.basis, &initial_cloud)?;

    let mut union_diameters = Vec::with_capacity(times.len());
    for (ci, _) in times.iter().enumerate() {
        let cloud = PointCloud::new(evolved.iter().map(|(_, s)| s[ci].clone()).collect())?;
        union_diameters.push(diameter(&sys.basis, &cloud)?);
    }

    let last = times.len() - 1;
    let mid = times
        .iter()
        .position(|t| (*t - opts.horizon / 2.0).abs() < 0.75 * opts.dt)
        .unwrap_or(last / 2);
    let final_cloud = PointCloud::new(evolved.iter().map(|(_, s)| s[last].clone()).collect())?;
    let mid_cloud = PointCloud::new(evolved.iter().map(|(_, s)| s[mid].clone()).collect())?;
    let attraction = semidistance(&sys.basis, &final_cloud, &mid_cloud)?;

    let mut final_max_h: f64 = 0.0;
    let mut final_max_h1: f64 = 0.0;
    for z in final_cloud.states() {
        let h = sys.h_norm_sq(z)?.max(0.0).sqrt();
        let h1 = (sys.basis.triple_norm_sq(&z.u, 2)
            + z.history.norm_m_sq(&sys.basis, &sys.kernel, 1)?)
        .max(0.0)
        .sqrt();
        final_max_h = final_max_h.max(h);
        final_max_h1 = final_max_h1.max(h1);
    }

    let mut cross: f64 = 0.0;
    if levels.len() > 1 {
        let mut per_level: Vec<Vec<State>> = vec![Vec::new(); levels.len()];
        for (li, snaps) in &evolved {
            per_level[*li].push(snaps[last].clone());
        }
        let clouds: Result<Vec<PointCloud>> = per_level.into_iter().map(PointCloud::new).collect();
        let clouds = clouds?;
        for (i, a) in clouds.iter().enumerate() {
            for (j, b) in clouds.iter().enumerate() {
                if i != j {
                    cross = cross.max(semidistance(&sys.basis, a, b)?);
                }
            }
        }
    }

    Ok(EnsembleReport {
        levels,
        checkpoint_times: times,
        union_diameters,
        initial_diameter,
        attraction,
        final_max_h,
        final_max_h1,
        cross_level_semidistance: cross,
    })
}
