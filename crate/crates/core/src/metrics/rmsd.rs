use nalgebra::{Matrix3, Vector3};

use super::MetricError;
use crate::corpus::Point3;

fn centered(points: &[Point3]) -> Vec<Vector3<f64>> {
    let n = points.len() as f64;
    let c = points
        .iter()
        .fold(Vector3::zeros(), |acc, p| acc + Vector3::from(*p))
        / n;
    points.iter().map(|p| Vector3::from(*p) - c).collect()
}

/// RMSD after optimal rigid superposition of `a` onto `b`.
///
/// The rotation comes from the SVD of the covariance `H = U S V^T` as
/// `R = V diag(1, 1, d) U^T` with `d = sign(det(V U^T))`, so reflections are
/// never used; a rank-deficient `H` (planar or collinear sets) goes through
/// the same rule.
pub fn kabsch_rmsd(a: &[Point3], b: &[Point3]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < 3 {
        return Err(MetricError::TooFew {
            needed: 3,
            got: a.len(),
        });
    }
    if a.iter().chain(b).flatten().any(|v| !v.is_finite()) {
        return Err(MetricError::DegenerateConfiguration("non-finite coordinate".into()));
    }
    let (pa, pb) = (centered(a), centered(b));
    let h: Matrix3<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y.transpose()).sum();
    let svd = h.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(MetricError::DegenerateConfiguration("SVD did not converge".into())),
    };
    let v = v_t.transpose();
    let d = if (v * u.transpose()).determinant() < 0.0 { -1.0 } else { 1.0 };
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose();
    let sq: f64 = pa.iter().zip(&pb).map(|(x, y)| (r * x - y).norm_squared()).sum();
    Ok((sq / a.len() as f64).sqrt())
}
