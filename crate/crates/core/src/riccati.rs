//! Scalar Riccati comparison machinery: for the differential inequality
//! L' + 2bL ≤ c + aL² with b/√(ac) > 1, the extremal solution (the equation
//! with equality) dominates every admissible L from the same initial value.
//! This module derives the roots λ±, the contraction time t_ρ, integrates the
//! extremal equation as a brute-force oracle, and verifies the barrier and
//! contraction claims against it.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RiccatiParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// ρ = b/√(ac) > 1.
    pub rho: f64,
    /// Smaller root of aλ² - 2bλ + c = 0 (attracting fixed point).
    pub lambda_minus: f64,
    /// Larger root (repelling; basin boundary).
    pub lambda_plus: f64,
    /// r = ρ + √(ρ²-1).
    pub r: f64,
    /// Dimensionless contraction time; physical deadline is t_ρ/√(ac).
    pub t_rho: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RiccatiTrajectory {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub sup: f64,
    /// First time the blow-up criterion L > 1e8·λ₊ fired, if it did.
    pub blow_up: Option<f64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BarrierCheck {
    pub lambda: f64,
    pub l0: f64,
    pub sup: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ContractionCheck {
    pub l0: f64,
    pub deadline: f64,
    pub threshold: f64,
    pub sup_after_deadline: f64,
    pub pass: bool,
}

pub fn derive(a: f64, b: f64, c: f64) -> Result<RiccatiParams> {
    for (name, v) in [("a", a), ("b", b), ("c", c)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Precondition(format!(
                "riccati coefficient {name} must be positive and finite, got {v}"
            )));
        }
    }
    let rho = b / (a * c).sqrt();
    if rho <= 1.0 {
        return Err(Error::Precondition(format!(
            "structural constraint b/√(ac) > 1 violated: ρ = {rho}"
        )));
    }
    let disc = (rho * rho - 1.0).sqrt();
    let r = rho + disc;
    let scale = (c / a).sqrt();
    // ρ - √(ρ²-1) = 1/r avoids the cancellation in the small root.
    let lambda_minus = scale / r;
    let lambda_plus = scale * r;
    let p = 2.0 * rho - 1.0 - r;
    let num = r + 1.0 - 2.0 * rho;
    let den = 4.0 * rho * r * (rho - 1.0) + r + 1.0 - 2.0 * rho;
    let t_rho = (num / den).ln() / p;
    if !(t_rho > 0.0) {
        return Err(Error::Inconsistency(format!("derived contraction time t_ρ = {t_rho} ≤ 0")));
    }
    // t_ρ is defined as the solution of a transcendental equation; certify it.
    let lhs = (2.0 * rho - 1.0 - 1.0 / r) * (p * t_rho).exp();
    let rhs = 1.0 / (2.0 * rho - 1.0) - 1.0 / r;
    if (lhs - rhs).abs() > 1e-10 * rhs.abs().max(1.0) {
        return Err(Error::Inconsistency(format!(
            "contraction time fails its defining equation: {lhs} vs {rhs}"
        )));
    }
    Ok(RiccatiParams { a, b, c, rho, lambda_minus, lambda_plus, r, t_rho })
}

impl RiccatiParams {
    /// Step size making the 4th-order oracle overwhelmingly accurate.
    pub fn oracle_dt(&self) -> f64 {
        1e-3 / (self.a * self.c).sqrt()
    }

    /// Horizon covering both lemmas' transients with generous margin.
    pub fn default_horizon(&self) -> f64 {
        (10.0 * self.t_rho / (self.a * self.c).sqrt()).max(100.0 / self.b)
    }
}

/// Integrate the extremal equation L' = c - 2bL + aL² with a classical
/// 4th-order scheme. Any function satisfying the inequality with the same
/// initial value is dominated by this trajectory.
pub fn integrate_worst_case(
    p: &RiccatiParams,
    l0: f64,
    t_final: f64,
    dt: f64,
) -> Result<RiccatiTrajectory> {
    if !(dt > 0.0) || !dt.is_finite() || !(t_final >= 0.0) {
        return Err(Error::Precondition(format!(
            "oracle integration needs dt > 0 and T ≥ 0, got dt = {dt}, T = {t_final}"
        )));
    }
    let rhs = |l: f64| p.c - 2.0 * p.b * l + p.a * l * l;
    let cap = 1e8 * p.lambda_plus;
    let steps = (t_final / dt).ceil() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    let mut l = l0;
    let mut sup = l0;
    let mut blow_up = None;
    times.push(0.0);
    values.push(l);
    for n in 0..steps {
        let t = n as f64 * dt;
        let h = dt.min(t_final - t).max(0.0);
        if h == 0.0 {
            break;
        }
        let k1 = rhs(l);
        let k2 = rhs(l + 0.5 * h * k1);
        let k3 = rhs(l + 0.5 * h * k2);
        let k4 = rhs(l + h * k3);
        l += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        let t_next = t + h;
        if !l.is_finite() || l > cap {
            blow_up = Some(t_next);
            times.push(t_next);
            values.push(l);
            break;
        }
        sup = sup.max(l);
        times.push(t_next);
        values.push(l);
    }
    Ok(RiccatiTrajectory { times, values, sup, blow_up })
}

/// Integrate at the oracle step and at half of it; refuse to certify anything
/// if the two disagree (step-halving acceptance).
fn certified_sup(p: &RiccatiParams, l0: f64, t_final: f64) -> Result<RiccatiTrajectory> {
    let coarse = integrate_worst_case(p, l0, t_final, p.oracle_dt())?;
    let fine = integrate_worst_case(p, l0, t_final, 0.5 * p.oracle_dt())?;
    if coarse.blow_up.is_some() != fine.blow_up.is_some() {
        return Err(Error::Inconsistency(
            "oracle step-halving disagrees on blow-up; result not certified".into(),
        ));
    }
    if coarse.blow_up.is_none()
        && (coarse.sup - fine.sup).abs() > 1e-9 * (1.0 + coarse.sup.abs())
    {
        return Err(Error::Inconsistency(format!(
            "oracle sup not converged under step halving: {} vs {}",
            coarse.sup, fine.sup
        )));
    }
    Ok(fine)
}

/// L(0) ≤ λ with λ ∈ (λ₋, λ₊) implies sup_t L(t) ≤ λ.
pub fn verify_barrier(p: &RiccatiParams, lambda: f64, l0: f64, t_final: f64) -> Result<BarrierCheck> {
    if !(lambda > p.lambda_minus && lambda < p.lambda_plus) {
        return Err(Error::Precondition(format!(
            "barrier level λ = {lambda} outside the open root interval ({}, {})",
            p.lambda_minus, p.lambda_plus
        )));
    }
    if l0 > lambda {
        return Err(Error::Precondition(format!(
            "barrier hypothesis needs L(0) ≤ λ, got {l0} > {lambda}"
        )));
    }
    let traj = certified_sup(p, l0, t_final)?;
    if traj.blow_up.is_some() {
        return Ok(BarrierCheck { lambda, l0, sup: f64::INFINITY, pass: false });
    }
    Ok(BarrierCheck { lambda, l0, sup: traj.sup, pass: traj.sup <= lambda + 1e-9 })
}

/// From L(0) = √(c/a)(2ρ-1), the solution drops below √(c/a)/(2ρ-1) by the
/// deadline t_ρ/√(ac) and stays there.
pub fn verify_contraction(p: &RiccatiParams, t_final: f64) -> Result<ContractionCheck> {
    let scale = (p.c / p.a).sqrt();
    let l0 = scale * (2.0 * p.rho - 1.0);
    let deadline = p.t_rho / (p.a * p.c).sqrt();
    let threshold = scale / (2.0 * p.rho - 1.0);
    if t_final < deadline {
        return Err(Error::Precondition(format!(
            "horizon {t_final} ends before the contraction deadline {deadline}"
        )));
    }
    let traj = certified_sup(p, l0, t_final)?;
    if traj.blow_up.is_some() {
        return Ok(ContractionCheck {
            l0,
            deadline,
            threshold,
            sup_after_deadline: f64::INFINITY,
            pass: false,
        });
    }
    let sup_after: f64 = traj
        .times
        .iter()
        .zip(&traj.values)
        .filter(|(t, _)| **t >= deadline)
        .map(|(_, v)| *v)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ContractionCheck {
        l0,
        deadline,
        threshold,
        sup_after_deadline: sup_after,
        pass: sup_after <= threshold + 1e-9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn reference_params() -> RiccatiParams {
        derive(1.0, 2.0, 1.0).unwrap()
    }

    fn random_admissible(rng: &mut ChaCha8Rng) -> RiccatiParams {
        let a = 10f64.powf(rng.gen_range(-1.0..1.0));
        let c = 10f64.powf(rng.gen_range(-1.0..1.0));
        let rho = rng.gen_range(1.05..5.0);
        derive(a, rho * (a * c).sqrt(), c).unwrap()
    }

    #[test]
    fn reference_triple_closed_forms() {
        let p = reference_params();
        assert!((p.rho - 2.0).abs() < 1e-15);
        assert!((p.lambda_minus - (2.0 - 3f64.sqrt())).abs() < 1e-14, "λ₋ = {}", p.lambda_minus);
        assert!((p.lambda_plus - (2.0 + 3f64.sqrt())).abs() < 1e-14, "λ₊ = {}", p.lambda_plus);
        assert!((p.r - (2.0 + 3f64.sqrt())).abs() < 1e-14);
        assert!((p.t_rho - 5.0988).abs() < 1e-4, "t_ρ = {}", p.t_rho);
    }

    #[test]
    fn subcritical_rho_is_rejected() {
        assert!(matches!(derive(1.0, 1.0, 1.0), Err(Error::Precondition(_))));
        assert!(matches!(derive(1.0, 0.5, 1.0), Err(Error::Precondition(_))));
        assert!(matches!(derive(-1.0, 2.0, 1.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn roots_satisfy_quadratic_for_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let p = random_admissible(&mut rng);
            for lam in [p.lambda_minus, p.lambda_plus] {
                let residual = p.a * lam * lam - 2.0 * p.b * lam + p.c;
                let scale = p.a * lam * lam + 2.0 * p.b * lam + p.c;
                assert!(
                    residual.abs() <= 1e-12 * scale,
                    "root residual {residual} at scale {scale} for (a,b,c) = ({}, {}, {})",
                    p.a,
                    p.b,
                    p.c
                );
            }
            assert!(p.lambda_minus < p.lambda_plus);
            assert!(p.r > 2.0 * p.rho - 1.0 && 2.0 * p.rho - 1.0 > 1.0);
        }
    }

    #[test]
    fn scaling_preserves_rho_and_contraction_time() {
        let p = reference_params();
        let q = derive(4.0, 4.0, 1.0).unwrap();
        assert!((q.rho - p.rho).abs() < 1e-14);
        assert!((q.t_rho - p.t_rho).abs() < 1e-12);
        assert!((q.lambda_minus - 0.5 * p.lambda_minus).abs() < 1e-14);
        assert!((q.lambda_plus - 0.5 * p.lambda_plus).abs() < 1e-14);
    }

    #[test]
    fn small_root_is_a_fixed_point() {
        let p = reference_params();
        let traj = integrate_worst_case(&p, p.lambda_minus, 20.0, p.oracle_dt()).unwrap();
        assert!(traj.blow_up.is_none());
        let drift = traj
            .values
            .iter()
            .map(|v| (v - p.lambda_minus).abs())
            .fold(0.0_f64, f64::max);
        assert!(drift < 1e-12, "fixed point drifted by {drift}");
    }

    #[test]
    fn interior_start_decays_monotonically_to_small_root() {
        let p = reference_params();
        let traj = integrate_worst_case(&p, 1.0, 30.0, p.oracle_dt()).unwrap();
        assert!(traj.blow_up.is_none());
        for w in traj.values.windows(2) {
            assert!(w[1] <= w[0] + 1e-14, "worst case not monotone: {} -> {}", w[0], w[1]);
        }
        let last = *traj.values.last().unwrap();
        assert!((last - p.lambda_minus).abs() < 1e-6, "limit {last} vs λ₋ {}", p.lambda_minus);
    }

    #[test]
    fn start_beyond_large_root_blows_up() {
        let p = reference_params();
        let traj = integrate_worst_case(&p, 4.0, 50.0, p.oracle_dt()).unwrap();
        let t = traj.blow_up.expect("L0 = 4 > λ₊ must blow up in finite time");
        assert!(t > 0.0 && t < 50.0);
    }

    #[test]
    fn named_barrier_cases() {
        let p = reference_params();
        let t = p.default_horizon();
        assert!(verify_barrier(&p, 1.0, 1.0, t).unwrap().pass);
        assert!(verify_barrier(&p, 3.7, 3.7, t).unwrap().pass);
        assert!(matches!(verify_barrier(&p, 0.2, 0.1, t), Err(Error::Precondition(_))));
    }

    #[test]
    fn named_contraction_cases() {
        for (a, b, c) in [(1.0, 2.0, 1.0), (1.0, 1.5, 1.0), (1.0, 1.001, 1.0)] {
            let p = derive(a, b, c).unwrap();
            let check = verify_contraction(&p, p.default_horizon()).unwrap();
            assert!(
                check.pass,
                "contraction failed for (a,b,c) = ({a},{b},{c}): sup after deadline {} vs {}",
                check.sup_after_deadline, check.threshold
            );
        }
        let p = derive(1.0, 1.5, 1.0).unwrap();
        let check = verify_contraction(&p, p.default_horizon()).unwrap();
        assert!((check.l0 - 2.0).abs() < 1e-12 && (check.threshold - 0.5).abs() < 1e-12);
    }

    #[test]
    fn barrier_property_holds_for_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let p = random_admissible(&mut rng);
            let span = p.lambda_plus - p.lambda_minus;
            let lambda = p.lambda_minus + rng.gen_range(0.05..0.95) * span;
            let l0 = lambda * rng.gen_range(0.0..1.0);
            let horizon = (3.0 * p.t_rho / (p.a * p.c).sqrt()).max(10.0 / p.b);
            let check = verify_barrier(&p, lambda, l0, horizon).unwrap();
            assert!(
                check.pass,
                "barrier violated: sup {} > λ {} for (a,b,c) = ({}, {}, {})",
                check.sup, lambda, p.a, p.b, p.c
            );
        }
    }

    #[test]
    fn contraction_property_holds_for_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..200 {
            let p = random_admissible(&mut rng);
            let horizon = (3.0 * p.t_rho / (p.a * p.c).sqrt()).max(10.0 / p.b);
            let check = verify_contraction(&p, horizon).unwrap();
            assert!(
                check.pass,
                "contraction violated for (a,b,c) = ({}, {}, {}): {} > {}",
                p.a, p.b, p.c, check.sup_after_deadline, check.threshold
            );
        }
    }

    #[test]
    fn worst_case_trajectories_never_cross() {
        let p = reference_params();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let lo = rng.gen_range(0.0..p.lambda_plus * 0.9);
            let hi = lo + rng.gen_range(1e-6..0.5);
            let ta = integrate_worst_case(&p, lo, 10.0, p.oracle_dt()).unwrap();
            let tb = integrate_worst_case(&p, hi, 10.0, p.oracle_dt()).unwrap();
            for (va, vb) in ta.values.iter().zip(&tb.values) {
                if !va.is_finite() || !vb.is_finite() {
                    break;
                }
                assert!(va <= &(vb + 1e-12), "ordering lost: {va} > {vb} (L0 {lo} vs {hi})");
            }
        }
    }
}
