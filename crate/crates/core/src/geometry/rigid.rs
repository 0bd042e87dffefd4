use nalgebra::Matrix3;

use super::{CloudPoint, GeometryError, Vec3};

/// Vectors at or below this norm cannot define a rotation.
pub const DEGENERATE_NORM: f64 = 1e-9;

/// `sin(theta)` below this counts as (anti)parallel.
const PARALLEL_SINE: f64 = 1e-9;

fn cross_matrix(u: &Vec3) -> Matrix3<f64> {
    Matrix3::new(0.0, -u.z, u.y, u.z, 0.0, -u.x, -u.y, u.x, 0.0)
}

/// Rotation taking the direction of `from` onto the direction of `to`:
/// `R = I + sin(theta) K + (1 - cos(theta)) K^2`, with `K` the cross-product
/// matrix of the unit axis `from x to`.
///
/// Parallel inputs give the identity; antiparallel inputs have no unique
/// axis and are rejected.
pub fn rodrigues_rotation(from: &Vec3, to: &Vec3) -> Result<Matrix3<f64>, GeometryError> {
    let (na, nb) = (from.norm(), to.norm());
    if na <= DEGENERATE_NORM {
        return Err(GeometryError::DegenerateVector(na));
    }
    if nb <= DEGENERATE_NORM {
        return Err(GeometryError::DegenerateVector(nb));
    }
    let cross = from.cross(to);
    let sine = cross.norm() / (na * nb);
    let cosine = (from.dot(to) / (na * nb)).clamp(-1.0, 1.0);
    if sine <= PARALLEL_SINE {
        return if cosine > 0.0 {
            Ok(Matrix3::identity())
        } else {
            Err(GeometryError::AmbiguousAxis)
        };
    }
    let axis = cross / cross.norm();
    let theta = cosine.acos();
    let k = cross_matrix(&axis);
    Ok(Matrix3::identity() + k * theta.sin() + k * k * (1.0 - theta.cos()))
}

/// `p -> R p + alpha (b1 - R a1)` for every point; source labels are kept.
pub fn rigid_transform(
    points: &[CloudPoint],
    rotation: &Matrix3<f64>,
    a1: &Vec3,
    b1: &Vec3,
    alpha: f64,
) -> Vec<CloudPoint> {
    let translation = (b1 - rotation * a1) * alpha;
    points
        .iter()
        .map(|p| CloudPoint {
            pos: rotation * p.pos + translation,
            src: p.src,
        })
        .collect()
}
