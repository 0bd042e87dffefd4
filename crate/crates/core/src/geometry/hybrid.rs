use nalgebra::Matrix3;

use crate::grid::{DepthMap, DragPair};
use crate::params::PcddParams;

use super::rbf::{eval_rbf, gamma_weight, select_fixed_points, solve_rbf, RbfField};
use super::rigid::rodrigues_rotation;
use super::{CloudPoint, DragPartition, GeometryError, Vec3};

/// Lifts a screen-space drag into local 3D coordinates. Both endpoints take
/// the depth at the handle's cell, so the drag vector stays parallel to the
/// image plane.
pub fn lift_pair(pair: &DragPair, depth: &DepthMap, origin: &Vec3) -> (Vec3, Vec3) {
    let z = depth.at_nearest(pair.handle[0], pair.handle[1]);
    let a = Vec3::new(pair.handle[0], pair.handle[1], z) - origin;
    let b = Vec3::new(pair.target[0], pair.target[1], z) - origin;
    (a, b)
}

/// Rigid motion from the primary pair followed by a localised RBF
/// refinement driven by every pair.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridDeformation {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
    pub field: RbfField,
    pub handles: Vec<Vec3>,
    pub fixed: Vec<Vec3>,
    pub beta: f64,
}

impl HybridDeformation {
    pub fn plan(
        partition: &DragPartition,
        pairs: &[DragPair],
        params: &PcddParams,
        depth: &DepthMap,
    ) -> Result<Self, GeometryError> {
        let lifted: Vec<(Vec3, Vec3)> = pairs
            .iter()
            .map(|p| lift_pair(p, depth, &partition.origin))
            .collect();
        let &(a1, b1) = lifted
            .first()
            .ok_or_else(|| GeometryError::InvalidDrag("no drag pairs".into()))?;

        let rotation = match rodrigues_rotation(&a1, &b1) {
            Ok(r) => r,
            Err(GeometryError::DegenerateVector(_) | GeometryError::AmbiguousAxis) => {
                Matrix3::identity()
            }
            Err(e) => return Err(e),
        };
        let translation = (b1 - rotation * a1) * params.alpha;

        let handles: Vec<Vec3> = lifted.iter().map(|(a, _)| *a).collect();
        let movable: Vec<Vec3> = partition.movable.iter().map(|p| p.pos).collect();
        let fixed = select_fixed_points(&movable, &handles, params.fixed_point_count);
        let control: Vec<[f64; 3]> = handles
            .iter()
            .chain(&fixed)
            .map(|v| [v.x, v.y, v.z])
            .collect();
        let mu = params.mu.resolve(&control);
        let field = solve_rbf(&lifted, &fixed, mu)?;

        Ok(Self {
            rotation,
            translation,
            field,
            handles,
            fixed,
            beta: params.beta,
        })
    }

    pub fn rigid(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// `P_rigid + beta * gamma(P_rigid) * s(P_rigid)`.
    pub fn apply(&self, p: &Vec3) -> Vec3 {
        let r = self.rigid(p);
        let s = eval_rbf(&self.field, &r);
        if s == Vec3::zeros() {
            return r;
        }
        r + s * (self.beta * gamma_weight(&r, &self.handles, &self.fixed))
    }
}

/// Deformed positions of the movable points, source labels preserved.
pub fn hybrid_drag(
    partition: &DragPartition,
    pairs: &[DragPair],
    params: &PcddParams,
    depth: &DepthMap,
) -> Result<Vec<CloudPoint>, GeometryError> {
    let deformation = HybridDeformation::plan(partition, pairs, params, depth)?;
    Ok(partition
        .movable
        .iter()
        .map(|p| CloudPoint {
            pos: deformation.apply(&p.pos),
            src: p.src,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_point_cloud, estimate_origin, filter_drag_subject};
    use crate::grid::Mask;
    use crate::params::MuSetting;

    fn scene() -> (DragPartition, DepthMap) {
        let (h, w) = (12, 12);
        let cells: Vec<(usize, usize)> = (3..9).flat_map(|y| (2..8).map(move |x| (x, y))).collect();
        let mask = Mask::from_cells(h, w, &cells).unwrap();
        let depth = DepthMap::new(h, w, (0..h * w).map(|i| 30.0 + (i % 7) as f64).collect()).unwrap();
        let origin = estimate_origin(&mask, &depth, 20.0).unwrap();
        let cloud = build_point_cloud(&mask, &depth, origin).unwrap();
        let part = filter_drag_subject(&cloud, &DragPair::new([4.0, 5.0], [4.0, 5.0]), 30.0).unwrap();
        (part, depth)
    }

    #[test]
    fn null_drags_are_exact_identity() {
        let (part, depth) = scene();
        let pairs = [
            DragPair::new([4.0, 5.0], [4.0, 5.0]),
            DragPair::new([6.5, 3.2], [6.5, 3.2]),
        ];
        let out = hybrid_drag(&part, &pairs, &PcddParams::default(), &depth).unwrap();
        assert_eq!(out, part.movable);
    }

    #[test]
    fn zero_beta_is_pure_rigid() {
        let (part, depth) = scene();
        let pairs = [DragPair::new([4.0, 5.0], [8.0, 6.0])];
        let params = PcddParams {
            beta: 0.0,
            ..Default::default()
        };
        let plan = HybridDeformation::plan(&part, &pairs, &params, &depth).unwrap();
        let out = hybrid_drag(&part, &pairs, &params, &depth).unwrap();
        for (p, q) in part.movable.iter().zip(&out) {
            assert_eq!(q.pos, plan.rigid(&p.pos));
        }
    }

    #[test]
    fn full_alpha_single_handle_end_to_end() {
        let (part, depth) = scene();
        let pair = DragPair::new([4.0, 5.0], [9.0, 7.0]);
        let beta = 0.4;
        let params = PcddParams {
            alpha: 1.0,
            beta,
            fixed_point_count: 0,
            mu: MuSetting::Fixed(0.25),
            ..Default::default()
        };
        let plan = HybridDeformation::plan(&part, &[pair], &params, &depth).unwrap();
        let (a1, b1) = lift_pair(&pair, &depth, &part.origin);
        let landed = plan.apply(&a1);

        // independent oracle: single-constraint multiquadric has weight b1-a1
        // (phi(0) = 1) and gamma = 1 without anchors
        let r = (b1 - a1).norm();
        let s_at_b1 = (b1 - a1) * (1.0 + (0.25 * r).powi(2)).sqrt();
        let expected = b1 + s_at_b1 * beta;
        assert!((landed - expected).abs().max() < 1e-9, "{landed} vs {expected}");
    }

    #[test]
    fn secondary_pairs_do_not_drive_rigid_stage() {
        let (part, depth) = scene();
        let primary = DragPair::new([4.0, 5.0], [6.0, 5.0]);
        let one = HybridDeformation::plan(&part, &[primary], &PcddParams::default(), &depth).unwrap();
        let two = HybridDeformation::plan(
            &part,
            &[primary, DragPair::new([3.0, 7.0], [2.0, 8.0])],
            &PcddParams::default(),
            &depth,
        )
        .unwrap();
        assert_eq!(one.rotation, two.rotation);
        assert_eq!(one.translation, two.translation);
        assert_eq!(two.handles.len(), 2);
    }

    #[test]
    fn duplicate_handles_fail() {
        let (part, depth) = scene();
        let pairs = [
            DragPair::new([4.0, 5.0], [6.0, 5.0]),
            DragPair::new([4.0, 5.0], [2.0, 5.0]),
        ];
        assert!(matches!(
            hybrid_drag(&part, &pairs, &PcddParams::default(), &depth),
            Err(GeometryError::DuplicateControlPoint(0, 1))
        ));
    }
}
