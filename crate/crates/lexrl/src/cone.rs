//! Hypercones and minimum-rotation projection onto them.
//!
//! A hypercone here is the set of directions within angle `π/2 − delta` of an
//! axis vector (plus the zero vector). For `delta = 0` that is the closed
//! positive halfspace of the axis; growing `delta` narrows the cone and keeps
//! projected directions pointing more firmly along the axis. Gradient steps
//! taken inside the cone of a protected gradient cannot decrease the protected
//! objective to first order, with `delta` controlling the guaranteed ascent
//! margin.
//!
//! All angle comparisons carry a small slack ([`EPS_ANGLE`]) so that vectors
//! produced by [`project_cone`] — which land exactly on the cone boundary —
//! test as members under floating-point arithmetic.

use crate::{Error, Result};

/// Slack applied to angle comparisons so boundary cases are stable.
pub const EPS_ANGLE: f64 = 1e-7;

/// Euclidean dot product.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Angle between two non-zero vectors, in `[0, π]`.
///
/// The cosine is clamped to `[-1, 1]` before `acos`, so near-parallel inputs
/// cannot produce NaN. Errors on zero-norm input or mismatched lengths.
pub fn angle_between(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "angle_between: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 {
        return Err(Error::ZeroNorm("angle_between: first argument"));
    }
    if nb == 0.0 {
        return Err(Error::ZeroNorm("angle_between: second argument"));
    }
    let cos = (dot(a, b) / (na * nb)).clamp(-1.0, 1.0);
    Ok(cos.acos())
}

/// A hypercone of directions around `axis`: all `x` with
/// `angle(x, axis) ≤ π/2 − delta`, together with the zero vector.
#[derive(Debug, Clone)]
pub struct Hypercone {
    axis: Vec<f64>,
    delta: f64,
}

impl Hypercone {
    /// Builds a cone around a non-zero axis with aperture parameter
    /// `delta ∈ [0, π/2)`.
    pub fn new(axis: Vec<f64>, delta: f64) -> Result<Self> {
        if norm(&axis) == 0.0 {
            return Err(Error::ZeroNorm("Hypercone::new: axis"));
        }
        if !delta.is_finite() || !(0.0..std::f64::consts::FRAC_PI_2).contains(&delta) {
            return Err(Error::InvalidParameter(format!(
                "Hypercone::new: delta must lie in [0, π/2), got {delta}"
            )));
        }
        Ok(Self { axis, delta })
    }

    /// The cone's axis vector.
    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    /// The aperture parameter; the half-angle of the cone is `π/2 − delta`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Membership test (with [`EPS_ANGLE`] slack). The zero vector is a member.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        if x.len() != self.axis.len() {
            return Err(Error::DimensionMismatch(format!(
                "Hypercone::contains: {} vs {}",
                x.len(),
                self.axis.len()
            )));
        }
        if norm(x) == 0.0 {
            return Ok(true);
        }
        let phi = angle_between(x, &self.axis)?;
        Ok(phi <= std::f64::consts::FRAC_PI_2 - self.delta + EPS_ANGLE)
    }
}

/// Projects `g` into the cone by the minimum rotation within the plane
/// spanned by `g` and the axis, rescaled so no feasible direction with a
/// larger component along `g` exists.
///
/// Behavior by the angle `φ` between `g` and the axis:
/// - `g` already in the cone: returned unchanged.
/// - `φ ≥ π − delta` (at or beyond the polar cone): the zero vector — no
///   direction in the cone retains any positive component along `g`.
/// - otherwise: the rotated-and-scaled vector on the cone boundary, with norm
///   `‖g‖ · sin(delta + φ)`.
pub fn project_cone(g: &[f64], cone: &Hypercone) -> Result<Vec<f64>> {
    if cone.contains(g)? {
        return Ok(g.to_vec());
    }
    // Not contained, so ‖g‖ > 0 and φ > π/2 − delta: sin φ is bounded away
    // from zero on the remaining domain.
    let phi = angle_between(g, cone.axis())?;
    if phi >= std::f64::consts::PI - cone.delta() {
        return Ok(vec![0.0; g.len()]);
    }
    let (sin_phi, cos_phi) = phi.sin_cos();
    let norm_g = norm(g);
    let norm_a = norm(cone.axis());
    // Tilt g toward the axis until it reaches the boundary, then scale so the
    // result keeps the largest possible component along g: the optimal length
    // for a boundary direction is ‖g‖·sin(delta + φ).
    let alpha = (norm_g / norm_a) * (sin_phi * cone.delta().tan() - cos_phi);
    let k = (cone.delta().cos() / sin_phi) * (cone.delta() + phi).sin();
    Ok(g.iter()
        .zip(cone.axis())
        .map(|(gi, ai)| k * (gi + alpha * ai))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn assert_vec_close(got: &[f64], want: &[f64], tol: f64) {
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(want) {
            assert!(
                (g - w).abs() <= tol,
                "expected {want:?}, got {got:?} (tol {tol})"
            );
        }
    }

    #[test]
    fn angle_of_orthogonal_vectors_is_right() {
        let a = angle_between(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((a - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn angle_of_back_diagonal_is_three_quarters_pi() {
        let a = angle_between(&[1.0, 0.0], &[-1.0, 1.0]).unwrap();
        assert!((a - 3.0 * FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn angle_rejects_zero_and_mismatched_inputs() {
        assert!(matches!(
            angle_between(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::ZeroNorm(_))
        ));
        assert!(matches!(
            angle_between(&[1.0], &[1.0, 0.0]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn angle_clamps_near_parallel_cosine() {
        // Same direction, different scale: cosine can exceed 1 by rounding.
        let a = angle_between(&[1e-8, 2e-8, 3e-8], &[1e8, 2e8, 3e8]).unwrap();
        assert!(a >= 0.0 && a < 1e-6);
    }

    #[test]
    fn cone_requires_nonzero_axis_and_valid_delta() {
        assert!(Hypercone::new(vec![0.0, 0.0], 0.1).is_err());
        assert!(Hypercone::new(vec![1.0, 0.0], FRAC_PI_2).is_err());
        assert!(Hypercone::new(vec![1.0, 0.0], -0.1).is_err());
        assert!(Hypercone::new(vec![1.0, 0.0], f64::NAN).is_err());
    }

    #[test]
    fn zero_vector_is_member() {
        let cone = Hypercone::new(vec![1.0, 0.0], 0.3).unwrap();
        assert!(cone.contains(&[0.0, 0.0]).unwrap());
    }

    #[test]
    fn halfspace_projection_drops_opposing_component() {
        // delta = 0 makes the cone the positive halfspace of the axis;
        // projecting (-1, 1) onto the halfspace of (1, 0) leaves (0, 1).
        let cone = Hypercone::new(vec![1.0, 0.0], 0.0).unwrap();
        let p = project_cone(&[-1.0, 1.0], &cone).unwrap();
        assert_vec_close(&p, &[0.0, 1.0], 1e-12);
    }

    #[test]
    fn quarter_cone_projection_of_orthogonal_vector() {
        let cone = Hypercone::new(vec![1.0, 0.0], FRAC_PI_4).unwrap();
        let p = project_cone(&[0.0, 1.0], &cone).unwrap();
        assert_vec_close(&p, &[0.5, 0.5], 1e-12);
    }

    #[test]
    fn member_is_returned_unchanged() {
        let cone = Hypercone::new(vec![1.0, 0.0], 0.2).unwrap();
        let g = vec![3.0, 1.0];
        let p = project_cone(&g, &cone).unwrap();
        assert_eq!(p, g);
    }

    #[test]
    fn projection_is_idempotent() {
        let cone = Hypercone::new(vec![1.0, 2.0, -0.5], 0.35).unwrap();
        let p1 = project_cone(&[-2.0, 0.5, 1.0], &cone).unwrap();
        let p2 = project_cone(&p1, &cone).unwrap();
        assert_vec_close(&p2, &p1, 1e-9);
    }

    #[test]
    fn antiparallel_input_projects_to_zero() {
        let cone = Hypercone::new(vec![1.0, 0.0], 0.0).unwrap();
        let p = project_cone(&[-1.0, 0.0], &cone).unwrap();
        assert_vec_close(&p, &[0.0, 0.0], 0.0);
        // Anything at angle ≥ π − delta is cut to zero as well.
        let cone = Hypercone::new(vec![1.0, 0.0], 0.3).unwrap();
        let g = [(PI - 0.2).cos(), (PI - 0.2).sin()];
        let p = project_cone(&g, &cone).unwrap();
        assert_vec_close(&p, &[0.0, 0.0], 0.0);
    }

    #[test]
    fn projection_lands_on_boundary_with_expected_norm() {
        let cone = Hypercone::new(vec![0.3, -1.2, 0.4, 2.0], 0.5).unwrap();
        let g = vec![-1.0, 0.7, 2.2, -0.4];
        let phi = angle_between(&g, cone.axis()).unwrap();
        assert!(phi > FRAC_PI_2 - cone.delta()); // genuinely outside
        let p = project_cone(&g, &cone).unwrap();
        let want_norm = norm(&g) * (cone.delta() + phi).sin();
        assert!((norm(&p) - want_norm).abs() < 1e-9);
        let boundary = FRAC_PI_2 - cone.delta();
        let angle = angle_between(&p, cone.axis()).unwrap();
        assert!((angle - boundary).abs() < 1e-7);
    }

    #[test]
    fn projection_stays_in_input_plane() {
        let cone = Hypercone::new(vec![1.0, 0.0, 0.0], 0.25).unwrap();
        let g = vec![-0.5, 2.0, 0.0];
        let p = project_cone(&g, &cone).unwrap();
        // Third coordinate never leaves zero: the result lives in span{g, axis}.
        assert_eq!(p[2], 0.0);
    }

    #[test]
    fn projection_scales_with_input() {
        let cone = Hypercone::new(vec![2.0, 1.0, 0.0], 0.4).unwrap();
        let g = vec![-1.0, 3.0, 0.5];
        let p1 = project_cone(&g, &cone).unwrap();
        let scaled: Vec<f64> = g.iter().map(|x| 3.5 * x).collect();
        let p2 = project_cone(&scaled, &cone).unwrap();
        for (a, b) in p1.iter().zip(&p2) {
            assert!((3.5 * a - b).abs() < 1e-9);
        }
    }
}
