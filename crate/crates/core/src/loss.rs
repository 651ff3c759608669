//! The scaled soft-truncation loss family and the sample objective.
//!
//! `psi` is a bounded, odd influence function; `rho` is its antiderivative,
//! a convex even loss that is quadratic-like near zero and linear in the
//! tails. The surrogate `phi(u) = s^2 * rho((gamma - u) / s)` penalizes
//! margins away from the target level `gamma` on either side, with the
//! scale `s` controlling how wide the quadratic region is.

use crate::data::Dataset;
use crate::error::{Error, Result};

use std::f64::consts::SQRT_2;

/// Saturation value of `psi`: `2 * sqrt(2) / 3`.
pub const PSI_BOUND: f64 = 2.0 * SQRT_2 / 3.0;

/// The `(s, gamma)` pair parameterizing the loss and objective.
///
/// `s > 0` is the re-scaling parameter; `gamma` is the margin level the
/// training procedure drives the margin distribution toward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledLoss {
    pub s: f64,
    pub gamma: f64,
}

impl ScaledLoss {
    pub fn new(s: f64, gamma: f64) -> Result<Self> {
        if s.is_nan() || s <= 0.0 || !s.is_finite() {
            return Err(Error::InvalidInput(format!(
                "scale s must be positive and finite, got {s}"
            )));
        }
        if !gamma.is_finite() {
            return Err(Error::InvalidInput(format!(
                "gamma must be finite, got {gamma}"
            )));
        }
        Ok(ScaledLoss { s, gamma })
    }
}

/// A linear scoring rule `h(x) = <w, x>`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(dim: usize) -> Self {
        LinearModel {
            weights: vec![0.0; dim],
        }
    }

    pub fn from_weights(weights: Vec<f64>) -> Self {
        LinearModel { weights }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }
}

/// Soft truncation influence function.
///
/// Cubic `u - u^3/6` on `[-sqrt(2), sqrt(2)]` (knot included), saturated at
/// `+/- 2 sqrt(2) / 3` outside. Odd and nondecreasing.
pub fn psi(u: f64) -> f64 {
    if u > SQRT_2 {
        PSI_BOUND
    } else if u < -SQRT_2 {
        -PSI_BOUND
    } else {
        u - u * u * u / 6.0
    }
}

/// Antiderivative of `psi` with `rho(0) = 0`.
///
/// `u^2/2 - u^4/24` for `|u| <= sqrt(2)`, `|u| * 2 sqrt(2)/3 - 1/2` outside.
/// Even, non-negative, and Lipschitz with constant `2 sqrt(2) / 3`.
pub fn rho(u: f64) -> f64 {
    let a = u.abs();
    if a <= SQRT_2 {
        let u2 = u * u;
        u2 / 2.0 - u2 * u2 / 24.0
    } else {
        a * PSI_BOUND - 0.5
    }
}

/// Second derivative of `rho`: `1 - u^2/2` inside the knots, zero outside.
pub fn rho_second(u: f64) -> f64 {
    if u.abs() <= SQRT_2 {
        1.0 - u * u / 2.0
    } else {
        0.0
    }
}

/// The margin surrogate `phi(u) = s^2 * rho((gamma - u) / s)`.
///
/// Convex in `u`, zero exactly at `u = gamma`, with negative derivative at
/// zero whenever `gamma > 0`.
pub fn surrogate_phi(u: f64, loss: &ScaledLoss) -> f64 {
    loss.s * loss.s * rho((loss.gamma - u) / loss.s)
}

/// Derivative of the surrogate in `u`: `-s * psi((gamma - u) / s)`.
pub fn surrogate_phi_deriv(u: f64, loss: &ScaledLoss) -> f64 {
    -loss.s * psi((loss.gamma - u) / loss.s)
}

fn check_dims(w: &LinearModel, data: &Dataset) -> Result<()> {
    if data.n() == 0 {
        return Err(Error::InvalidInput("dataset is empty".into()));
    }
    if w.dim() != data.dim() {
        return Err(Error::InvalidInput(format!(
            "model dimension {} does not match dataset dimension {}",
            w.dim(),
            data.dim()
        )));
    }
    Ok(())
}

/// Sample objective: mean of `surrogate_phi` over the margins `y_i <w, x_i>`.
pub fn objective(w: &LinearModel, data: &Dataset, loss: &ScaledLoss) -> Result<f64> {
    check_dims(w, data)?;
    let n = data.n();
    let mut total = 0.0;
    for i in 0..n {
        total += surrogate_phi(data.margin(w, i), loss);
    }
    Ok(total / n as f64)
}

/// Gradient of [`objective`] in the weights:
/// `-(s/n) * sum_i psi((gamma - y_i <w, x_i>) / s) * y_i x_i`.
///
/// A steepest-descent step is then exactly `w - alpha * gradient`.
pub fn objective_gradient(w: &LinearModel, data: &Dataset, loss: &ScaledLoss) -> Result<Vec<f64>> {
    check_dims(w, data)?;
    let n = data.n();
    let mut grad = vec![0.0; w.dim()];
    let scale = -loss.s / n as f64;
    for i in 0..n {
        let m = data.margin(w, i);
        let coef = scale * psi((loss.gamma - m) / loss.s) * data.label(i);
        data.add_row_scaled(i, coef, &mut grad);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_dataset(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Dataset {
        let values: Vec<f64> = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let labels: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        Dataset::dense(values, labels, d).unwrap()
    }

    /// Independent oracle for the objective: per-point surrogate values
    /// accumulated with Kahan compensated summation.
    fn objective_oracle(w: &LinearModel, data: &Dataset, loss: &ScaledLoss) -> f64 {
        let mut sum = 0.0;
        let mut comp = 0.0;
        for i in 0..data.n() {
            let m = data.margin(w, i);
            let term = loss.s * loss.s * rho((loss.gamma - m) / loss.s);
            let y = term - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        sum / data.n() as f64
    }

    #[test]
    fn psi_spot_values() {
        assert_eq!(psi(0.0), 0.0);
        assert!((psi(SQRT_2) - PSI_BOUND).abs() < 1e-15);
        assert!((psi(1.0) - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(psi(-3.0), -PSI_BOUND);
        assert_eq!(psi(100.0), PSI_BOUND);
    }

    #[test]
    fn rho_spot_values() {
        assert_eq!(rho(0.0), 0.0);
        assert!((rho(SQRT_2) - 5.0 / 6.0).abs() < 1e-15);
        // linear branch continuity at the knot
        assert!((SQRT_2 * PSI_BOUND - 0.5 - 5.0 / 6.0).abs() < 1e-15);
        assert!((rho(2.0) - (4.0 * SQRT_2 / 3.0 - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn rho_second_spot_values() {
        assert_eq!(rho_second(0.0), 1.0);
        assert!(rho_second(SQRT_2).abs() < 1e-15);
        assert_eq!(rho_second(5.0), 0.0);
    }

    #[test]
    fn surrogate_spot_values() {
        let loss = ScaledLoss::new(1.0, 1.0).unwrap();
        assert_eq!(surrogate_phi(1.0, &loss), 0.0);
        assert!((surrogate_phi(0.0, &loss) - 11.0 / 24.0).abs() < 1e-15);
        let loss = ScaledLoss::new(0.7, 2.5).unwrap();
        assert_eq!(surrogate_phi(loss.gamma, &loss), 0.0);
        let knot = loss.gamma - SQRT_2 * loss.s;
        assert!((surrogate_phi(knot, &loss) - loss.s * loss.s * 5.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn scaled_loss_rejects_bad_scale() {
        assert!(ScaledLoss::new(0.0, 1.0).is_err());
        assert!(ScaledLoss::new(-1.0, 1.0).is_err());
        assert!(ScaledLoss::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn derivative_relation_rho_psi() {
        let h = 1e-6;
        for k in 0..=1000 {
            let u = -5.0 + 10.0 * k as f64 / 1000.0;
            let fd = (rho(u + h) - rho(u - h)) / (2.0 * h);
            let denom = psi(u).abs().max(1.0);
            assert!(
                (fd - psi(u)).abs() / denom < 1e-6,
                "rho' != psi at u = {u}: fd = {fd}, psi = {}",
                psi(u)
            );
        }
    }

    #[test]
    fn objective_on_exact_margins_is_zero() {
        // one point x = e1 with label +1; w chosen so the margin is exactly gamma
        let loss = ScaledLoss::new(0.5, 1.5).unwrap();
        let data = Dataset::dense(vec![1.0, 0.0], vec![1.0], 2).unwrap();
        let w = LinearModel::from_weights(vec![1.5, 3.0]);
        assert_eq!(objective(&w, &data, &loss).unwrap(), 0.0);
        let g = objective_gradient(&w, &data, &loss).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn objective_single_point_margin_gamma_minus_s() {
        let loss = ScaledLoss::new(0.8, 1.0).unwrap();
        // margin = gamma - s
        let data = Dataset::dense(vec![loss.gamma - loss.s], vec![1.0], 1).unwrap();
        let w = LinearModel::from_weights(vec![1.0]);
        let expect = loss.s * loss.s * rho(1.0);
        assert!((objective(&w, &data, &loss).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn gradient_single_point_hand_value() {
        // x = e1, y = +1, w = 0 so margin 0; s = 1, gamma = 1.
        let loss = ScaledLoss::new(1.0, 1.0).unwrap();
        let data = Dataset::dense(vec![1.0, 0.0, 0.0], vec![1.0], 3).unwrap();
        let w = LinearModel::zeros(3);
        let g = objective_gradient(&w, &data, &loss).unwrap();
        assert!((g[0] + 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(&g[1..], &[0.0, 0.0]);
    }

    #[test]
    fn objective_matches_kahan_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = rng.random_range(1..20);
            let d = rng.random_range(1..8);
            let data = small_dataset(&mut rng, n, d);
            let w =
                LinearModel::from_weights((0..d).map(|_| rng.random_range(-1.0..1.0)).collect());
            let loss =
                ScaledLoss::new(rng.random_range(0.2..3.0), rng.random_range(-1.0..2.0)).unwrap();
            let got = objective(&w, &data, &loss).unwrap();
            let want = objective_oracle(&w, &data, &loss);
            assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()));
        }
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let n = rng.random_range(1..=20);
            let d = rng.random_range(1..=10);
            let data = small_dataset(&mut rng, n, d);
            let w =
                LinearModel::from_weights((0..d).map(|_| rng.random_range(-1.0..1.0)).collect());
            let loss =
                ScaledLoss::new(rng.random_range(0.3..2.0), rng.random_range(0.1..2.0)).unwrap();
            let grad = objective_gradient(&w, &data, &loss).unwrap();
            for j in 0..d {
                let h = 1e-6 * (1.0 + w.weights[j].abs());
                let mut wp = w.clone();
                wp.weights[j] += h;
                let mut wm = w.clone();
                wm.weights[j] -= h;
                let fd = (objective(&wp, &data, &loss).unwrap()
                    - objective(&wm, &data, &loss).unwrap())
                    / (2.0 * h);
                let denom = grad[j].abs().max(1e-3);
                assert!(
                    (fd - grad[j]).abs() / denom < 1e-6,
                    "coordinate {j}: fd {fd} vs grad {}",
                    grad[j]
                );
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_input_error() {
        let loss = ScaledLoss::new(1.0, 1.0).unwrap();
        let data = Dataset::dense(vec![1.0, 0.0], vec![1.0], 2).unwrap();
        let w = LinearModel::zeros(3);
        assert!(matches!(
            objective(&w, &data, &loss),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            objective_gradient(&w, &data, &loss),
            Err(Error::InvalidInput(_))
        ));
    }

    proptest! {
        #[test]
        fn psi_odd_and_bounded(u in -50.0f64..50.0) {
            prop_assert!((psi(-u) + psi(u)).abs() < 1e-15);
            prop_assert!(psi(u).abs() <= PSI_BOUND + 1e-15);
        }

        #[test]
        fn rho_even_nonneg_lipschitz(u in -50.0f64..50.0, v in -50.0f64..50.0) {
            prop_assert!(rho(u) >= 0.0);
            prop_assert!((rho(u) - rho(-u)).abs() < 1e-12);
            prop_assert!((rho(u) - rho(v)).abs() <= PSI_BOUND * (u - v).abs() + 1e-12);
        }

        #[test]
        fn rho_second_in_unit_interval(u in -50.0f64..50.0) {
            prop_assert!((0.0..=1.0).contains(&rho_second(u)));
        }

        #[test]
        fn objective_convex_along_segments(seed in 0u64..1000, t in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = 4;
            let data = small_dataset(&mut rng, 6, d);
            let loss = ScaledLoss::new(1.0, 1.0).unwrap();
            let w1 = LinearModel::from_weights((0..d).map(|_| rng.random_range(-1.0..1.0)).collect());
            let w2 = LinearModel::from_weights((0..d).map(|_| rng.random_range(-1.0..1.0)).collect());
            let mix = LinearModel::from_weights(
                (0..d).map(|j| t * w1.weights[j] + (1.0 - t) * w2.weights[j]).collect(),
            );
            let lhs = objective(&mix, &data, &loss).unwrap();
            let rhs = t * objective(&w1, &data, &loss).unwrap()
                + (1.0 - t) * objective(&w2, &data, &loss).unwrap();
            prop_assert!(lhs <= rhs + 1e-12);
        }
    }
}
