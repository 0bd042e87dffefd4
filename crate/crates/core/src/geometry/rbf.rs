use super::{GeometryError, Vec3};

/// Pivots smaller than this in magnitude make the system singular.
pub const PIVOT_TOLERANCE: f64 = 1e-12;

/// Distances at or below this are treated as coincident when picking anchors.
const COINCIDENT: f64 = 1e-9;

/// Multiquadric kernel `sqrt(1 + (mu r)^2)`.
pub fn multiquadric(p: &Vec3, q: &Vec3, mu: f64) -> f64 {
    let r = (p - q).norm();
    (1.0 + (mu * r) * (mu * r)).sqrt()
}

/// Displacement field `s(p) = sum_k w_k phi(p, c_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RbfField {
    pub control_points: Vec<Vec3>,
    pub weights: Vec<Vec3>,
    pub mu: f64,
}

impl RbfField {
    pub fn zero(control_points: Vec<Vec3>, mu: f64) -> Self {
        let weights = vec![Vec3::zeros(); control_points.len()];
        Self {
            control_points,
            weights,
            mu,
        }
    }
}

pub fn eval_rbf(field: &RbfField, p: &Vec3) -> Vec3 {
    field
        .control_points
        .iter()
        .zip(&field.weights)
        .fold(Vec3::zeros(), |acc, (c, w)| {
            acc + w * multiquadric(p, c, field.mu)
        })
}

/// Farthest-point sampling of up to `k` anchors from `movable`.
///
/// Each pick maximises the minimum distance to the handles and to the
/// anchors already chosen; ties go to the earlier point. Points coinciding
/// with a handle or a previous pick are never chosen, so fewer than `k`
/// anchors come back when the set runs out.
pub fn select_fixed_points(movable: &[Vec3], handles: &[Vec3], k: usize) -> Vec<Vec3> {
    let mut min_dist: Vec<f64> = movable
        .iter()
        .map(|p| {
            handles
                .iter()
                .map(|h| (p - h).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut chosen = Vec::with_capacity(k.min(movable.len()));
    while chosen.len() < k {
        let mut best: Option<usize> = None;
        for (i, &d) in min_dist.iter().enumerate() {
            if d > COINCIDENT && best.is_none_or(|b| d > min_dist[b]) {
                best = Some(i);
            }
        }
        let Some(b) = best else { break };
        let pick = movable[b];
        chosen.push(pick);
        for (d, p) in min_dist.iter_mut().zip(movable) {
            *d = d.min((p - pick).norm());
        }
    }
    chosen
}

/// Solves for multiquadric weights so the field reproduces `b - a` at each
/// handle `a` and zero at each fixed point.
pub fn solve_rbf(
    handles: &[(Vec3, Vec3)],
    fixed: &[Vec3],
    mu: f64,
) -> Result<RbfField, GeometryError> {
    let control: Vec<Vec3> = handles.iter().map(|(a, _)| *a).chain(fixed.iter().copied()).collect();
    let n = control.len();
    if n == 0 {
        return Err(GeometryError::InvalidDrag("no control points".into()));
    }
    for i in 0..n {
        for j in i + 1..n {
            if control[i] == control[j] {
                return Err(GeometryError::DuplicateControlPoint(i, j));
            }
        }
    }
    let width = n + 3;
    // Augmented [Phi | S], row-major.
    let mut m = vec![0.0; n * width];
    for i in 0..n {
        for k in 0..n {
            m[i * width + k] = multiquadric(&control[i], &control[k], mu);
        }
        if let Some((a, b)) = handles.get(i) {
            let s = b - a;
            m[i * width + n..i * width + n + 3].copy_from_slice(s.as_slice());
        }
    }
    gauss_eliminate(&mut m, n, 3)?;
    let weights = (0..n)
        .map(|i| Vec3::new(m[i * width + n], m[i * width + n + 1], m[i * width + n + 2]))
        .collect();
    Ok(RbfField {
        control_points: control,
        weights,
        mu,
    })
}

/// In-place Gauss-Jordan elimination with partial pivoting on an `n x (n + rhs)`
/// row-major augmented matrix; the solution ends up in the right-hand block.
fn gauss_eliminate(m: &mut [f64], n: usize, rhs: usize) -> Result<(), GeometryError> {
    let width = n + rhs;
    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|r| (r, m[r * width + col]))
            .fold((col, 0.0f64), |best, (r, v)| {
                if v.abs() > best.1.abs() {
                    (r, v)
                } else {
                    best
                }
            });
        if pivot.abs() < PIVOT_TOLERANCE {
            return Err(GeometryError::SingularSystem(pivot.abs()));
        }
        if pivot_row != col {
            for c in 0..width {
                m.swap(col * width + c, pivot_row * width + c);
            }
        }
        for c in col..width {
            m[col * width + c] /= pivot;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = m[r * width + col];
            if factor == 0.0 {
                continue;
            }
            for c in col..width {
                m[r * width + c] -= factor * m[col * width + c];
            }
        }
    }
    Ok(())
}

/// Localisation weight `min_F / (min_A + min_F)`: 1 on handles, 0 on anchors.
/// With no anchors the field applies in full.
pub fn gamma_weight(p: &Vec3, handles: &[Vec3], fixed: &[Vec3]) -> f64 {
    if fixed.is_empty() {
        return 1.0;
    }
    let nearest = |set: &[Vec3]| set.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min);
    let (to_handle, to_fixed) = (nearest(handles), nearest(fixed));
    let total = to_handle + to_fixed;
    if total == 0.0 {
        1.0
    } else {
        to_fixed / total
    }
}
