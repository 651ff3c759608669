//! Exact real-root solver for cubic polynomials `a u^3 + b u^2 + c u + d`,
//! dispatching on the sign of the discriminant.
//!
//! Negative discriminant: single real root from the Cardano-style closed
//! form. Zero discriminant: repeated roots from the degenerate formulas.
//! Positive discriminant: three distinct real roots from the trigonometric
//! (Viete) method. Each simple root gets one Newton polish step.

use crate::error::{Error, Result};

use std::f64::consts::PI;

/// Relative band (on the degree-4 homogeneous scale) inside which the
/// discriminant is treated as zero.
const DISCRIMINANT_EPS: f64 = 1e-12;

/// Cubic coefficients with a nonzero leading term.
#[derive(Debug, Clone, Copy)]
pub struct CubicPoly {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl CubicPoly {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Result<Self> {
        if a == 0.0 || !a.is_finite() {
            return Err(Error::InvalidInput(format!(
                "leading coefficient must be nonzero, got {a}"
            )));
        }
        if ![b, c, d].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("coefficients must be finite".into()));
        }
        Ok(CubicPoly { a, b, c, d })
    }

    pub fn eval(&self, u: f64) -> f64 {
        ((self.a * u + self.b) * u + self.c) * u + self.d
    }

    pub fn eval_deriv(&self, u: f64) -> f64 {
        (3.0 * self.a * u + 2.0 * self.b) * u + self.c
    }

    /// `18abcd - 4b^3 d + b^2 c^2 - 4ac^3 - 27a^2 d^2`.
    pub fn discriminant(&self) -> f64 {
        let (a, b, c, d) = (self.a, self.b, self.c, self.d);
        18.0 * a * b * c * d - 4.0 * b * b * b * d + b * b * c * c
            - 4.0 * a * c * c * c
            - 27.0 * a * a * d * d
    }

    fn coeff_scale(&self) -> f64 {
        self.a.abs() + self.b.abs() + self.c.abs() + self.d.abs()
    }
}

/// Real roots with multiplicity, plus the discriminant used for dispatch.
#[derive(Debug, Clone)]
pub struct RootSet {
    /// `(value, multiplicity)` sorted ascending by value; multiplicities sum
    /// to 1 (one real root) or 3.
    pub roots: Vec<(f64, u8)>,
    pub discriminant: f64,
}

impl RootSet {
    pub fn distinct_count(&self) -> usize {
        self.roots.len()
    }

    pub fn values(&self) -> Vec<f64> {
        self.roots.iter().map(|&(v, _)| v).collect()
    }
}

/// One Newton step, kept only when it reduces the residual.
fn polish(p: &CubicPoly, root: f64) -> f64 {
    let deriv = p.eval_deriv(root);
    if deriv == 0.0 {
        return root;
    }
    let candidate = root - p.eval(root) / deriv;
    if candidate.is_finite() && p.eval(candidate).abs() <= p.eval(root).abs() {
        candidate
    } else {
        root
    }
}

/// Find all real roots.
///
/// Every returned root `r` satisfies
/// `|P(r)| <= tol * (|a|+|b|+|c|+|d|) * max(1, |r|)^3`.
pub fn solve_cubic(p: &CubicPoly, tol: f64) -> Result<RootSet> {
    let (a, b, c, d) = (p.a, p.b, p.c, p.d);
    let scale = p.coeff_scale();
    let delta = p.discriminant();

    let delta0 = b * b - 3.0 * a * c;
    let delta1 = 2.0 * b * b * b - 9.0 * a * b * c + 27.0 * a * a * d;

    let mut roots: Vec<(f64, u8)> = if delta.abs() <= DISCRIMINANT_EPS * scale.powi(4) {
        // repeated roots; sub-dispatch on delta0 with the matching degree-2 band
        if delta0.abs() <= DISCRIMINANT_EPS * scale * scale {
            vec![(-b / (3.0 * a), 3)]
        } else {
            let double = (9.0 * a * d - b * c) / (2.0 * delta0);
            let single = polish(
                p,
                (4.0 * a * b * c - 9.0 * a * a * d - b * b * b) / (a * delta0),
            );
            vec![(double, 2), (single, 1)]
        }
    } else if delta < 0.0 {
        // one real root via the closed-form C. The two square-root branches
        // give the same root (their C values multiply to delta0); pick the
        // one matching the sign of delta1 so the sum never cancels.
        let sq = (delta1 * delta1 - 4.0 * delta0 * delta0 * delta0).sqrt();
        let sum = if delta1 >= 0.0 {
            delta1 + sq
        } else {
            delta1 - sq
        };
        let c_val = (sum / 2.0).cbrt();
        let root = polish(p, -(b + c_val + delta0 / c_val) / (3.0 * a));
        vec![(root, 1)]
    } else {
        // three distinct real roots via the trigonometric identity;
        // delta > 0 forces p_dep < 0 so k is well defined
        let p_dep = (3.0 * a * c - b * b) / (3.0 * a * a);
        let q_dep = (2.0 * b * b * b - 9.0 * a * b * c + 27.0 * a * a * d) / (27.0 * a * a * a);
        let k = (-p_dep / 3.0).sqrt();
        let arg = (-q_dep / (2.0 * k * k * k)).clamp(-1.0, 1.0);
        let x = arg.acos() / 3.0;
        let shift = -b / (3.0 * a);
        let mut rs: Vec<(f64, u8)> = [x, 2.0 * PI / 3.0 + x, 2.0 * PI / 3.0 - x]
            .iter()
            .map(|&angle| (polish(p, 2.0 * k * angle.cos() + shift), 1))
            .collect();
        rs.sort_by(|l, r| l.0.partial_cmp(&r.0).unwrap());
        rs
    };

    roots.sort_by(|l, r| l.0.partial_cmp(&r.0).unwrap());
    for &(root, _) in &roots {
        let bound = tol * scale * root.abs().max(1.0).powi(3);
        if p.eval(root).abs() > bound {
            return Err(Error::Internal(format!(
                "root {root} residual {} exceeds bound {bound}",
                p.eval(root)
            )));
        }
    }
    Ok(RootSet {
        roots,
        discriminant: delta,
    })
}
