//! Classification-calibration machinery for the scaled margin surrogate:
//! the conditional risk, its exact minimizer via cubic first-order
//! conditions, the resulting transform linking excess surrogate risk to
//! excess misclassification risk, and a grid-based approximate inverse.

use crate::cubic::{solve_cubic, CubicPoly};
use crate::error::{Error, Result};
use crate::loss::{psi, rho, surrogate_phi, ScaledLoss, PSI_BOUND};

use std::f64::consts::SQRT_2;
use std::io::Write;

const CUBIC_TOL: f64 = 1e-9;

/// Generalized conditional risk `C_eta(u) = eta phi(u) + (1 - eta) phi(-u)`.
pub fn conditional_risk(u: f64, eta: f64, loss: &ScaledLoss) -> Result<f64> {
    check_eta(eta)?;
    Ok(eta * surrogate_phi(u, loss) + (1.0 - eta) * surrogate_phi(-u, loss))
}

fn check_eta(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) || !eta.is_finite() {
        return Err(Error::InvalidInput(format!(
            "eta must lie in [0,1], got {eta}"
        )));
    }
    Ok(())
}

fn check_gamma(loss: &ScaledLoss) -> Result<()> {
    if loss.gamma.is_nan() || loss.gamma <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "calibration requires gamma > 0, got {}",
            loss.gamma
        )));
    }
    Ok(())
}

/// Which cubic first-order condition pins the minimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Condition {
    /// Both loss arguments inside the knots.
    Double,
    /// The `u + gamma` argument saturated (minimizer above `delta`).
    Minus,
    /// The `u - gamma` argument saturated (minimizer below `-delta`).
    Plus,
}

/// First-order-condition residual in the unit-scale problem,
/// `eta psi(gamma - u) - (1 - eta) psi(gamma + u)`.
fn foc_residual(u: f64, eta: f64, gamma: f64) -> f64 {
    eta * psi(gamma - u) - (1.0 - eta) * psi(gamma + u)
}

/// Minimize the conditional risk over the scores.
///
/// Returns `(H, u_star)` with `H = C_eta(u_star)`. The problem reduces to
/// unit scale via `gamma_t = gamma / s`; the minimizer there is a root of
/// one of three cubic conditions, selected by regime over `gamma_t` and the
/// saturation tests at `delta_t = |sqrt(2) - gamma_t|`, and maps back as
/// `u_star = s * u'`.
pub fn optimal_conditional_risk(eta: f64, loss: &ScaledLoss) -> Result<(f64, f64)> {
    check_eta(eta)?;
    check_gamma(loss)?;
    let (s, gamma) = (loss.s, loss.gamma);

    if eta == 0.0 {
        return Ok((0.0, -gamma));
    }
    if eta == 1.0 {
        return Ok((0.0, gamma));
    }
    if eta == 0.5 {
        return Ok((s * s * rho(gamma / s), 0.0));
    }

    let gt = gamma / s;
    let alpha = (eta - 1.0) / eta; // always negative here
    let dt = (SQRT_2 - gt).abs();

    let condition = if gt <= SQRT_2 / 2.0 {
        Condition::Double
    } else if gt < SQRT_2 {
        // saturation test at the edge u = sign(eta - 1/2) * delta_t;
        // equality falls through to the double condition
        let edge_ratio = psi(dt - gt) / psi(dt + gt);
        if eta > 0.5 {
            if edge_ratio < alpha {
                Condition::Minus
            } else {
                Condition::Double
            }
        } else if edge_ratio < 1.0 / alpha {
            Condition::Plus
        } else {
            Condition::Double
        }
    } else if eta > 0.5 {
        Condition::Minus
    } else {
        Condition::Plus
    };

    let (poly, lo, hi) = match condition {
        Condition::Double => (
            CubicPoly::new(
                1.0 - alpha,
                -3.0 * gt * (1.0 + alpha),
                3.0 * (1.0 - alpha) * (gt * gt - 2.0),
                (1.0 + alpha) * (6.0 * gt - gt * gt * gt),
            )?,
            -gt,
            gt,
        ),
        Condition::Minus => (
            CubicPoly::new(
                1.0,
                -3.0 * gt,
                3.0 * gt * gt - 6.0,
                6.0 * gt - gt * gt * gt + 6.0 * alpha * PSI_BOUND,
            )?,
            dt,
            gt,
        ),
        Condition::Plus => (
            CubicPoly::new(
                1.0,
                3.0 * gt,
                3.0 * gt * gt - 6.0,
                gt * gt * gt - 6.0 * gt - 6.0 * PSI_BOUND / alpha,
            )?,
            -gt,
            -dt,
        ),
    };

    let roots = solve_cubic(&poly, CUBIC_TOL)?;
    let slack = 1e-12 * gt;
    let mut candidates: Vec<f64> = roots
        .values()
        .into_iter()
        .filter(|r| *r > lo - slack && *r < hi + slack)
        .collect();
    let u_prime = match candidates.len() {
        0 => {
            return Err(Error::Internal(format!(
                "no admissible root in ({lo}, {hi}) for eta={eta}, gamma_t={gt} ({condition:?})"
            )))
        }
        1 => candidates[0],
        _ => {
            // only the root satisfying the true (saturating) first-order
            // condition survives; pick by residual
            candidates.sort_by(|a, b| {
                foc_residual(*a, eta, gt)
                    .abs()
                    .partial_cmp(&foc_residual(*b, eta, gt).abs())
                    .unwrap()
            });
            candidates[0]
        }
    };

    let u_star = s * u_prime;
    let h = conditional_risk(u_star, eta, loss)?;
    Ok((h, u_star))
}

/// The calibration transform
/// `Psi(u) = s^2 rho(gamma/s) - H((1 + u) / 2)` for `u` in `[0, 1]`.
pub fn psi_transform(u: f64, loss: &ScaledLoss) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::InvalidInput(format!(
            "transform argument must lie in [0,1], got {u}"
        )));
    }
    check_gamma(loss)?;
    let peak = loss.s * loss.s * rho(loss.gamma / loss.s);
    let (h, _) = optimal_conditional_risk((1.0 + u) / 2.0, loss)?;
    Ok(peak - h)
}

/// Sampled transform on a uniform grid over `[0, 1]`, supporting the
/// max-index approximate inverse.
#[derive(Debug, Clone)]
pub struct PsiTable {
    pub s: f64,
    pub gamma: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

pub const DEFAULT_GRID_SIZE: usize = 2500;

/// Evaluate the transform on a `k`-point uniform grid.
pub fn build_psi_table(loss: &ScaledLoss, k: usize) -> Result<PsiTable> {
    if k < 2 {
        return Err(Error::InvalidInput(format!(
            "grid needs at least 2 points, got {k}"
        )));
    }
    check_gamma(loss)?;
    let mut grid = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k);
    for i in 0..k {
        let u = i as f64 / (k - 1) as f64;
        grid.push(u);
        values.push(psi_transform(u, loss)?);
    }
    Ok(PsiTable {
        s: loss.s,
        gamma: loss.gamma,
        grid,
        values,
    })
}

/// Approximate inverse: the grid point at the largest index whose transform
/// value does not exceed `a`. Saturates at 1 for `a` past the last value.
pub fn psi_inverse(a: f64, table: &PsiTable) -> Result<f64> {
    if a.is_nan() || a < 0.0 {
        return Err(Error::InvalidInput(format!(
            "inverse argument must be non-negative, got {a}"
        )));
    }
    let k_star = table.values.iter().rposition(|&v| v <= a).ok_or_else(|| {
        Error::Internal("transform table has no value <= a; first entry should be 0".into())
    })?;
    Ok(table.grid[k_star])
}

impl PsiTable {
    /// Dump as CSV with header `u,psi`.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "u,psi")?;
        for (u, v) in self.grid.iter().zip(&self.values) {
            writeln!(
                out,
                "{},{}",
                crate::data::fmt_f64(*u),
                crate::data::fmt_f64(*v)
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Flat-scan minimizer of the conditional risk over `[-gamma, gamma]`.
    fn grid_min_conditional(eta: f64, loss: &ScaledLoss, resolution: f64) -> f64 {
        let gamma = loss.gamma;
        let steps = (2.0 * gamma / resolution).ceil() as usize;
        let mut best = f64::INFINITY;
        for k in 0..=steps {
            let u = -gamma + 2.0 * gamma * k as f64 / steps as f64;
            let v = conditional_risk(u, eta, loss).unwrap();
            if v < best {
                best = v;
            }
        }
        best
    }

    #[test]
    fn conditional_risk_examples() {
        let loss = ScaledLoss::new(1.0, 1.0).unwrap();
        assert_eq!(conditional_risk(loss.gamma, 1.0, &loss).unwrap(), 0.0);
        for eta in [0.0, 0.25, 0.5, 0.9] {
            let v = conditional_risk(0.0, eta, &loss).unwrap();
            assert!((v - rho(loss.gamma)).abs() < 1e-15);
        }
        assert_eq!(conditional_risk(-loss.gamma, 0.0, &loss).unwrap(), 0.0);
        assert!(conditional_risk(0.0, 1.2, &loss).is_err());
    }

    #[test]
    fn endpoint_and_midpoint_identities() {
        for &(s, gamma) in &[(1.0, 0.5), (1.0, 1.0), (2.0, 3.0), (0.5, 0.4)] {
            let loss = ScaledLoss::new(s, gamma).unwrap();
            let (h0, u0) = optimal_conditional_risk(0.0, &loss).unwrap();
            assert_eq!((h0, u0), (0.0, -gamma));
            let (h1, u1) = optimal_conditional_risk(1.0, &loss).unwrap();
            assert_eq!((h1, u1), (0.0, gamma));
            let (hm, um) = optimal_conditional_risk(0.5, &loss).unwrap();
            assert_eq!(um, 0.0);
            assert!((hm - s * s * rho(gamma / s)).abs() < 1e-12);
        }
    }

    #[test]
    fn double_cube_case_small_gamma() {
        let loss = ScaledLoss::new(1.0, 0.5).unwrap();
        let eta = 0.8;
        let (h, u_star) = optimal_conditional_risk(eta, &loss).unwrap();
        assert!(u_star > 0.0 && u_star < loss.gamma);
        // ratio form of the first-order condition
        let ratio = psi(u_star - loss.gamma) / psi(u_star + loss.gamma);
        assert!((ratio - (eta - 1.0) / eta).abs() < 1e-8, "ratio {ratio}");
        let oracle = grid_min_conditional(eta, &loss, 1e-6);
        assert!((h - oracle).abs() < 1e-8);
    }

    #[test]
    fn single_cube_case_large_gamma() {
        let loss = ScaledLoss::new(1.0, 2.0).unwrap();
        let eta = 0.9;
        let (h, u_star) = optimal_conditional_risk(eta, &loss).unwrap();
        let dt = loss.gamma - SQRT_2;
        assert!(u_star > dt && u_star < loss.gamma);
        assert!(foc_residual(u_star, eta, loss.gamma).abs() < 1e-8);
        let oracle = grid_min_conditional(eta, &loss, 1e-5 * loss.gamma);
        assert!((h - oracle).abs() < 1e-8);
    }

    #[test]
    fn middle_regime_both_branches() {
        // gamma between sqrt(2)/2 and sqrt(2): near 1/2 stays double-cube,
        // extreme eta saturates into the single-cube branch
        let loss = ScaledLoss::new(1.0, 1.2).unwrap();
        for eta in [0.52, 0.65, 0.8, 0.95, 0.48, 0.35, 0.2, 0.05] {
            let (h, u_star) = optimal_conditional_risk(eta, &loss).unwrap();
            assert!(u_star.abs() < loss.gamma);
            assert!(
                foc_residual(u_star, eta, loss.gamma).abs() < 1e-8,
                "eta {eta}: residual {}",
                foc_residual(u_star, eta, loss.gamma)
            );
            let oracle = grid_min_conditional(eta, &loss, 1e-5 * loss.gamma);
            assert!((h - oracle).abs() < 1e-8, "eta {eta}");
        }
    }

    #[test]
    fn optimizer_symmetry_and_scale_reduction() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let gamma = rng.random_range(0.1..4.0);
            let s = rng.random_range(0.25..4.0);
            let eta = rng.random_range(0.01..0.99);
            let loss = ScaledLoss::new(s, gamma).unwrap();
            let (_, u) = optimal_conditional_risk(eta, &loss).unwrap();
            let (_, u_mirror) = optimal_conditional_risk(1.0 - eta, &loss).unwrap();
            assert!((u + u_mirror).abs() < 1e-8 * (1.0 + u.abs()), "eta {eta}");
            let reduced = ScaledLoss::new(1.0, gamma / s).unwrap();
            let (_, u_reduced) = optimal_conditional_risk(eta, &reduced).unwrap();
            assert!((u - s * u_reduced).abs() < 1e-8 * (1.0 + u.abs()));
        }
    }

    #[test]
    fn transform_endpoints() {
        for &(s, gamma) in &[(1.0, 0.5), (1.0, 2.0), (3.0, 1.0)] {
            let loss = ScaledLoss::new(s, gamma).unwrap();
            assert_eq!(psi_transform(0.0, &loss).unwrap(), 0.0);
            let top = psi_transform(1.0, &loss).unwrap();
            assert!((top - s * s * rho(gamma / s)).abs() < 1e-12);
            assert!(psi_transform(-0.1, &loss).is_err());
            assert!(psi_transform(1.1, &loss).is_err());
        }
    }

    #[test]
    fn transform_midpoint_against_oracle() {
        let loss = ScaledLoss::new(1.0, 1.0).unwrap();
        let got = psi_transform(0.5, &loss).unwrap();
        let want = rho(1.0) - grid_min_conditional(0.75, &loss, 1e-6);
        assert!((got - want).abs() < 1e-8);
    }

    #[test]
    fn table_invariants_and_inverse() {
        let loss = ScaledLoss::new(1.0, SQRT_2 / 2.0).unwrap();
        let table = build_psi_table(&loss, 2500).unwrap();
        assert!(table.values[0].abs() < 1e-10);
        for w in table.values.windows(2) {
            assert!(w[1] >= w[0] - 1e-12, "table must be nondecreasing");
        }
        let peak = loss.s * loss.s * rho(loss.gamma / loss.s);
        assert!(*table.values.last().unwrap() <= peak + 1e-10);
        // discrete convexity
        for w in table.values.windows(3) {
            assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-9);
        }

        assert_eq!(psi_inverse(0.0, &table).unwrap(), 0.0);
        assert_eq!(psi_inverse(peak + 1.0, &table).unwrap(), 1.0);
        assert!(psi_inverse(-0.5, &table).is_err());
    }

    #[test]
    fn tiny_table_has_exact_endpoints() {
        let loss = ScaledLoss::new(2.0, 1.5).unwrap();
        let table = build_psi_table(&loss, 2).unwrap();
        assert_eq!(table.grid, vec![0.0, 1.0]);
        assert_eq!(table.values[0], 0.0);
        assert!((table.values[1] - 4.0 * rho(0.75)).abs() < 1e-12);
    }

    #[test]
    fn inverse_matches_construction_point() {
        let loss = ScaledLoss::new(1.0, 1.0).unwrap();
        let table = build_psi_table(&loss, 2500).unwrap();
        let a = psi_transform(0.3, &loss).unwrap();
        let inv = psi_inverse(a, &table).unwrap();
        // nearest grid point at or below 0.3
        assert!(inv <= 0.3 + 1e-12);
        assert!(0.3 - inv < 2.0 / 2499.0);
    }

    #[test]
    fn inverse_monotone_in_gamma() {
        let gammas = [0.5, 0.8, 1.2, 2.0, 2.8];
        let tables: Vec<PsiTable> = gammas
            .iter()
            .map(|&g| build_psi_table(&ScaledLoss::new(1.0, g).unwrap(), 800).unwrap())
            .collect();
        let a_max = rho(0.5); // smallest peak across the sweep
        for frac in [0.1, 0.3, 0.6, 0.9] {
            let a = frac * a_max;
            let invs: Vec<f64> = tables.iter().map(|t| psi_inverse(a, t).unwrap()).collect();
            for w in invs.windows(2) {
                assert!(
                    w[0] >= w[1] - 1e-12,
                    "inverse must not increase with gamma: {invs:?}"
                );
            }
        }
    }

    #[test]
    fn csv_dump_shape() {
        let loss = ScaledLoss::new(1.0, 1.0).unwrap();
        let table = build_psi_table(&loss, 5).unwrap();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "u,psi");
        assert_eq!(lines.len(), 6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn first_order_condition_residual(
            eta in 0.005f64..0.995,
            gamma_t in 0.05f64..4.0,
            s in 0.25f64..4.0,
        ) {
            prop_assume!((eta - 0.5).abs() > 1e-3);
            let loss = ScaledLoss::new(s, gamma_t * s).unwrap();
            let (_, u_star) = optimal_conditional_risk(eta, &loss).unwrap();
            let u_prime = u_star / s;
            prop_assert!(foc_residual(u_prime, eta, gamma_t).abs() <= 1e-8);
        }
    }
}
