//! Real branches of the Lambert W function.
//!
//! W(x) inverts w ↦ w·e^w. Two real branches exist: the principal branch
//! W0 on [-1/e, ∞) with W0(x) ≥ -1, and the lower branch W-1 on [-1/e, 0)
//! with W-1(x) ≤ -1. Both meet at the branch point (-1/e, -1).
//!
//! Evaluation uses Halley's iteration seeded from branch-appropriate
//! asymptotic guesses, with a bisection fallback for the rare case where
//! the iteration stalls. The contract is the residual: for every accepted
//! result, |w·e^w - x| ≤ tol·max(1, |x|).

use thiserror::Error;

/// The branch point -1/e, left edge of both real branches.
pub const BRANCH_POINT: f64 = -0.36787944117144233;

/// Slack below -1/e inside which arguments are treated as sitting exactly
/// on the branch point. Closed forms that place a network on the saturation
/// boundary produce arguments a few ulps outside the domain.
pub const DOMAIN_SLACK: f64 = 1e-15;

/// Default residual tolerance: |w·e^w - x| ≤ RESIDUAL_TOL·max(1, |x|).
pub const RESIDUAL_TOL: f64 = 1e-12;

const MAX_HALLEY: usize = 60;
const MAX_BISECT: usize = 200;

/// Argument outside the real domain of the requested branch.
#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum DomainError {
    #[error("lambert W0 domain error: x = {0:e} < -1/e")]
    BelowBranchPoint(f64),
    #[error("lambert W-1 domain error: x = {0:e} not in [-1/e, 0)")]
    OutsideLowerBranch(f64),
}

/// Principal branch W0 on [-1/e, ∞).
///
/// Arguments within [`DOMAIN_SLACK`] below -1/e are clamped to the branch
/// point and return exactly -1.
pub fn lambert_w0(x: f64) -> Result<f64, DomainError> {
    lambert_w0_tol(x, RESIDUAL_TOL)
}

/// W0 with an explicit residual tolerance.
pub fn lambert_w0_tol(x: f64, tol: f64) -> Result<f64, DomainError> {
    if !x.is_finite() {
        return Err(DomainError::BelowBranchPoint(x));
    }
    if x < BRANCH_POINT {
        if x >= BRANCH_POINT - DOMAIN_SLACK {
            return Ok(-1.0);
        }
        return Err(DomainError::BelowBranchPoint(x));
    }
    if x == BRANCH_POINT {
        return Ok(-1.0);
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let w0 = initial_w0(x);
    Ok(refine(x, w0, Branch::Principal, tol))
}

/// Lower branch W-1 on [-1/e, 0).
///
/// Arguments within [`DOMAIN_SLACK`] below -1/e are clamped to the branch
/// point and return exactly -1.
pub fn lambert_wm1(x: f64) -> Result<f64, DomainError> {
    lambert_wm1_tol(x, RESIDUAL_TOL)
}

/// W-1 with an explicit residual tolerance.
pub fn lambert_wm1_tol(x: f64, tol: f64) -> Result<f64, DomainError> {
    if x.is_nan() || x >= 0.0 {
        return Err(DomainError::OutsideLowerBranch(x));
    }
    if x < BRANCH_POINT {
        if x >= BRANCH_POINT - DOMAIN_SLACK {
            return Ok(-1.0);
        }
        return Err(DomainError::OutsideLowerBranch(x));
    }
    if x == BRANCH_POINT {
        return Ok(-1.0);
    }
    let w0 = initial_wm1(x);
    Ok(refine(x, w0, Branch::Lower, tol))
}

#[derive(Clone, Copy, PartialEq)]
enum Branch {
    Principal,
    Lower,
}

/// Series about the branch point: w = -1 + p - p²/3 + 11p³/72, p = ±√(2(e·x+1)).
fn branch_series(x: f64, sign: f64) -> f64 {
    let p = sign * (2.0 * (std::f64::consts::E * x + 1.0)).max(0.0).sqrt();
    -1.0 + p - p * p / 3.0 + 11.0 * p * p * p / 72.0
}

fn initial_w0(x: f64) -> f64 {
    if x < -0.30 {
        branch_series(x, 1.0)
    } else if x <= std::f64::consts::E {
        // Padé-flavoured guess, adequate anywhere Halley converges from.
        x / (1.0 + x.max(-0.5))
    } else {
        // w ≈ ln x - ln ln x for large x.
        let l = x.ln();
        l - l.ln()
    }
}

fn initial_wm1(x: f64) -> f64 {
    if x < -0.30 {
        branch_series(x, -1.0)
    } else {
        // de Bruijn asymptotic toward 0⁻.
        let l1 = (-x).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    }
}

fn residual(w: f64, x: f64) -> f64 {
    w * w.exp() - x
}

fn converged(r: f64, x: f64, tol: f64) -> bool {
    r.abs() <= tol * x.abs().max(1.0)
}

fn refine(x: f64, mut w: f64, branch: Branch, tol: f64) -> f64 {
    // Target somewhat below the contract so the last Halley step lands well
    // inside it; cubic convergence makes the final step essentially free.
    let target = (tol * 0.01).max(1e-16);
    for _ in 0..MAX_HALLEY {
        let r = residual(w, x);
        if converged(r, x, target) {
            return w;
        }
        let ew = w.exp();
        let d1 = (w + 1.0) * ew;
        if d1 == 0.0 {
            break;
        }
        // Halley: w' = w - f / (f' - f·f''/(2 f')).
        let denom = d1 - r * (w + 2.0) / (2.0 * (w + 1.0));
        let step = if denom != 0.0 { r / denom } else { r / d1 };
        let next = w - step;
        let next = match branch {
            Branch::Principal => next.max(-1.0),
            Branch::Lower => next.min(-1.0),
        };
        if next == w {
            break;
        }
        w = next;
    }
    if converged(residual(w, x), x, tol) {
        return w;
    }
    bisect(x, branch, tol)
}

/// Unconditionally convergent fallback. g(w) = w·e^w is monotone on each
/// branch's range, so a sign-changing bracket always exists.
fn bisect(x: f64, branch: Branch, tol: f64) -> f64 {
    let (mut lo, mut hi) = match branch {
        Branch::Principal => {
            let mut hi = 1.0_f64;
            while residual(hi, x) < 0.0 {
                hi *= 2.0;
            }
            (-1.0, hi)
        }
        Branch::Lower => {
            // g decreasing on (-∞, -1]: g(-1) = -1/e ≤ x, find lo with g(lo) ≥ x.
            let mut lo = -2.0_f64;
            while residual(lo, x) < 0.0 {
                lo *= 2.0;
            }
            (lo, -1.0)
        }
    };
    for _ in 0..MAX_BISECT {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let r = residual(mid, x);
        if converged(r, x, tol * 0.5) {
            return mid;
        }
        // On both branches g(w) - x changes sign from lo (≤0 / ≥0) to hi.
        let increasing = matches!(branch, Branch::Principal);
        if (r > 0.0) == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent oracle: bisection on w·e^w = x over a caller-supplied
    /// monotone bracket, to 1e-14 in w.
    fn bisect_oracle(x: f64, mut lo: f64, mut hi: f64, increasing: bool) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let r = mid * mid.exp() - x;
            if (r > 0.0) == increasing {
                hi = mid;
            } else {
                lo = mid;
            }
            if (hi - lo).abs() < 1e-14 {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    fn assert_residual(w: f64, x: f64) {
        let r = (w * w.exp() - x).abs();
        assert!(
            r <= RESIDUAL_TOL * x.abs().max(1.0),
            "residual {r:e} too large at x = {x:e}, w = {w:e}"
        );
    }

    #[test]
    fn w0_fixed_points() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert_eq!(lambert_w0(BRANCH_POINT).unwrap(), -1.0);
        // W0(e) = 1 exactly by definition.
        let w = lambert_w0(std::f64::consts::E).unwrap();
        assert!((w - 1.0).abs() < 1e-14);
    }

    #[test]
    fn w0_of_one_matches_bisection_oracle() {
        let oracle = bisect_oracle(1.0, 0.0, 1.0, true);
        assert!((oracle - 0.5671432904).abs() < 1e-9);
        let w = lambert_w0(1.0).unwrap();
        assert!((w - oracle).abs() < 1e-12);
    }

    #[test]
    fn wm1_fixed_points() {
        assert_eq!(lambert_wm1(BRANCH_POINT).unwrap(), -1.0);
        // w = -2 satisfies w·e^w = -2e^{-2}.
        let x = -2.0 * (-2.0_f64).exp();
        let w = lambert_wm1(x).unwrap();
        assert!((w + 2.0).abs() < 1e-12);
    }

    #[test]
    fn wm1_of_minus_tenth_matches_bisection_oracle() {
        let oracle = bisect_oracle(-0.1, -50.0, -1.0, false);
        assert!((oracle + 3.5771520639).abs() < 1e-9);
        let w = lambert_wm1(-0.1).unwrap();
        assert!((w - oracle).abs() < 1e-11);
    }

    #[test]
    fn branch_point_slack_is_clamped() {
        assert_eq!(lambert_w0(BRANCH_POINT - 1e-15).unwrap(), -1.0);
        assert_eq!(lambert_wm1(BRANCH_POINT - 1e-15).unwrap(), -1.0);
        assert!(lambert_w0(BRANCH_POINT - 1e-13).is_err());
        assert!(lambert_wm1(BRANCH_POINT - 1e-13).is_err());
    }

    #[test]
    fn domain_errors() {
        assert_eq!(
            lambert_w0(-1.0),
            Err(DomainError::BelowBranchPoint(-1.0))
        );
        assert!(lambert_wm1(0.0).is_err());
        assert!(lambert_wm1(0.5).is_err());
        assert!(lambert_wm1(-1.0).is_err());
    }

    #[test]
    fn branches_agree_at_branch_point() {
        let x = BRANCH_POINT + 1e-15;
        let w0 = lambert_w0(x).unwrap();
        let wm1 = lambert_wm1(x).unwrap();
        assert!((w0 + 1.0).abs() < 1e-6);
        assert!((wm1 + 1.0).abs() < 1e-6);
        assert!((w0 - wm1).abs() < 1e-5);
    }

    #[test]
    fn near_branch_point_residuals() {
        for k in 0..60 {
            let t = 1e-15 * 2f64.powi(k);
            let x = BRANCH_POINT + t;
            if x >= 0.0 {
                break;
            }
            assert_residual(lambert_w0(x).unwrap(), x);
            assert_residual(lambert_wm1(x).unwrap(), x);
        }
    }

    #[test]
    fn huge_and_tiny_arguments() {
        for &x in &[1e-300, 1e-30, 1e30, 1e300] {
            assert_residual(lambert_w0(x).unwrap(), x);
        }
        for &x in &[-1e-300, -1e-30, -1e-3] {
            assert_residual(lambert_wm1(x).unwrap(), x);
        }
    }

    proptest! {
        #[test]
        fn w0_residual_invariant(t in -36.0f64..300.0) {
            // Log-spaced positive arguments.
            let x = 10f64.powf(t);
            assert_residual(lambert_w0(x).unwrap(), x);
        }

        #[test]
        fn w0_negative_residual_invariant(u in 0.0f64..1.0) {
            // Sweep the whole negative domain (-1/e, 0).
            let x = BRANCH_POINT * (1.0 - u) - 1e-18;
            if x > BRANCH_POINT && x < 0.0 {
                assert_residual(lambert_w0(x).unwrap(), x);
            }
        }

        #[test]
        fn wm1_residual_invariant(t in -300.0f64..-0.435) {
            // x from near the branch point down to -1e-300.
            let x = -10f64.powf(t);
            if x >= BRANCH_POINT {
                assert_residual(lambert_wm1(x).unwrap(), x);
            }
        }

        #[test]
        fn w0_monotone_increasing(a in -0.36f64..10.0, d in 1e-6f64..1.0) {
            let w1 = lambert_w0(a).unwrap();
            let w2 = lambert_w0(a + d).unwrap();
            prop_assert!(w2 >= w1 - 1e-12);
        }

        #[test]
        fn wm1_monotone_decreasing(a in -0.36f64..-1e-6, f in 0.01f64..0.99) {
            // Second point strictly between a and 0.
            let b = a * f;
            if (BRANCH_POINT..0.0).contains(&b) {
                let w1 = lambert_wm1(a).unwrap();
                let w2 = lambert_wm1(b).unwrap();
                prop_assert!(w2 <= w1 + 1e-12);
            }
        }
    }
}
