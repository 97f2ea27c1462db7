//! The 3-dimensional exponential-cone barrier and its derivatives.
//!
//! The primal cone is `{(a₁,a₂,a₃) : a₃ ≤ a₂·ln(a₁/a₂), a₁ > 0, a₂ > 0}`
//! together with the closure ray `{(a₁, 0, a₃) : a₁ ≥ 0, a₃ ≤ 0}`. Its
//! logarithmically homogeneous barrier is
//!
//! ```text
//! f(s) = −ln(s₂·ln(s₁/s₂) − s₃) − ln s₁ − ln s₂
//! ```
//!
//! with barrier parameter 3. The interior-point solver needs `f`'s gradient
//! and Hessian at strictly interior points, an interior test for the dual
//! cone, and a canonical interior starting point.

use nalgebra::{Matrix3, Vector3};

/// Canonical starting triple: the unique point with `−∇f(s) = s`, so the
/// symmetric initialization `z = s` starts exactly on the central path.
pub const EXP_INIT: [f64; 3] = [1.290_928, 0.805_102, -0.827_838];

/// Residual of the defining inequality, `r(s) = s₂·ln(s₁/s₂) − s₃`.
/// Positive iff `s` is strictly inside the cone (given `s₁, s₂ > 0`).
pub fn exp_residual(s: &[f64]) -> f64 {
    s[1] * (s[0] / s[1]).ln() - s[2]
}

/// Strict interior test for the primal exponential cone.
pub fn exp_interior(s: &[f64]) -> bool {
    s[0] > 0.0 && s[1] > 0.0 && exp_residual(s) > 0.0
}

/// Strict interior test for the dual cone
/// `{(b₁,b₂,b₃) : b₁ > −b₃·e^{b₂/b₃ − 1}, b₁ > 0, b₃ < 0}`, evaluated in
/// the log domain so extreme ratios cannot overflow.
pub fn exp_dual_interior(b: &[f64]) -> bool {
    b[2] < 0.0 && b[0] > 0.0 && b[0].ln() - (-b[2]).ln() > b[1] / b[2] - 1.0
}

/// Barrier gradient `∇f(s)` at a strictly interior point.
pub fn exp_grad(s: &[f64]) -> Vector3<f64> {
    let r = exp_residual(s);
    let dr = Vector3::new(s[1] / s[0], (s[0] / s[1]).ln() - 1.0, -1.0);
    -dr / r - Vector3::new(1.0 / s[0], 1.0 / s[1], 0.0)
}

/// Barrier Hessian `∇²f(s)` at a strictly interior point.
pub fn exp_hess(s: &[f64]) -> Matrix3<f64> {
    let r = exp_residual(s);
    let dr = Vector3::new(s[1] / s[0], (s[0] / s[1]).ln() - 1.0, -1.0);
    let d2r = Matrix3::new(
        -s[1] / (s[0] * s[0]),
        1.0 / s[0],
        0.0,
        1.0 / s[0],
        -1.0 / s[1],
        0.0,
        0.0,
        0.0,
        0.0,
    );
    dr * dr.transpose() / (r * r) - d2r / r
        + Matrix3::from_diagonal(&Vector3::new(1.0 / (s[0] * s[0]), 1.0 / (s[1] * s[1]), 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn init_point_is_the_barrier_fixed_point() {
        let g = exp_grad(&EXP_INIT);
        for i in 0..3 {
            assert_abs_diff_eq!(-g[i], EXP_INIT[i], epsilon = 5e-6);
        }
        assert!(exp_interior(&EXP_INIT));
        assert!(exp_dual_interior(&EXP_INIT));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = [1.3, 0.7, -0.2];
        let f = |p: &[f64]| -exp_residual(p).ln() - p[0].ln() - p[1].ln();
        let g = exp_grad(&s);
        let eps = 1e-6;
        for i in 0..3 {
            let mut hi = s;
            let mut lo = s;
            hi[i] += eps;
            lo[i] -= eps;
            let fd = (f(&hi) - f(&lo)) / (2.0 * eps);
            assert_abs_diff_eq!(g[i], fd, epsilon = 1e-6 * (1.0 + fd.abs()));
        }
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let s = [0.9, 1.4, -0.5];
        let h = exp_hess(&s);
        let eps = 1e-5;
        for i in 0..3 {
            let mut hi = s;
            let mut lo = s;
            hi[i] += eps;
            lo[i] -= eps;
            let col = (exp_grad(&hi) - exp_grad(&lo)) / (2.0 * eps);
            for r in 0..3 {
                assert_abs_diff_eq!(h[(r, i)], col[r], epsilon = 1e-5 * (1.0 + col[r].abs()));
            }
        }
    }

    #[test]
    fn hessian_is_positive_definite_inside() {
        let h = exp_hess(&[2.0, 0.5, -1.0]);
        let chol = h.cholesky();
        assert!(chol.is_some());
    }

    #[test]
    fn logarithmic_homogeneity_degree_three() {
        // ∇f(s)·s = −ν with ν = 3.
        let s = [1.7, 0.4, -0.9];
        let g = exp_grad(&s);
        let dot: f64 = (0..3).map(|i| g[i] * s[i]).sum();
        assert_abs_diff_eq!(dot, -3.0, epsilon = 1e-10);
    }
}
