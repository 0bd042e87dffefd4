//! End-to-end drag warp of a feature grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    build_point_cloud, estimate_origin, filter_drag_subject, lift_pair, rescale_depth,
    GeometryError, HybridDeformation,
};
use crate::grid::{DepthMap, DragPair, FeatureGrid, GridError, Mask};
use crate::params::{ParamsError, PcddParams};
use crate::projection::{
    assemble_warped_grid, bnni_fill, project_zbuffer, Diagnostics, ProjectionError, TargetCellMap,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Projection(#[from] ProjectionError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("no drag pairs")]
    NoPairs,
    #[error("drag {index}: {detail}")]
    DragOutOfBounds { index: usize, detail: String },
}

impl PipelineError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            PipelineError::Params(_) => "invalid_params",
            PipelineError::NoPairs => "invalid_drags",
            PipelineError::DragOutOfBounds { .. } => "drag_out_of_bounds",
            PipelineError::Geometry(g) => match g {
                GeometryError::HandleOutsideMask { .. } => "handle_outside_mask",
                GeometryError::EmptyMask => "empty_mask",
                GeometryError::DuplicateControlPoint(..) => "duplicate_control_point",
                GeometryError::SingularSystem(_) => "singular_system",
                GeometryError::ShapeMismatch(_) => "shape_mismatch",
                _ => "geometry_error",
            },
            PipelineError::Projection(ProjectionError::AllVoid) => "all_void",
            PipelineError::Projection(_) | PipelineError::Grid(_) => "shape_mismatch",
        }
    }
}

/// Where a drag's handle ended up, in grid coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landing {
    pub handle: [f64; 2],
    pub target: [f64; 2],
    pub landing: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarpOutcome {
    pub grid: FeatureGrid,
    pub diagnostics: Diagnostics,
    pub landings: Vec<Landing>,
    pub cells: TargetCellMap,
}

/// Rescales `depth` to the grid. A constant depth map has no range to
/// rescale; it is treated as a flat scene at `dp_min`.
pub fn grid_depth(
    depth: &DepthMap,
    shape: (usize, usize),
    params: &PcddParams,
) -> Result<DepthMap, PipelineError> {
    match rescale_depth(depth, shape, params.dp_min, params.dp_max) {
        Err(GeometryError::DegenerateDepthRange(_)) => {
            Ok(DepthMap::filled(shape.0, shape.1, params.dp_min)?)
        }
        other => Ok(other?),
    }
}

/// Warps `grid` by the drags. `depth` may have any resolution; `mask`
/// defaults to every cell.
pub fn warp_grid(
    grid: &FeatureGrid,
    depth: &DepthMap,
    mask: Option<&Mask>,
    pairs: &[DragPair],
    params: &PcddParams,
) -> Result<WarpOutcome, PipelineError> {
    params.validate()?;
    if pairs.is_empty() {
        return Err(PipelineError::NoPairs);
    }
    let shape = grid.shape();
    for (index, p) in pairs.iter().enumerate() {
        p.check_bounds(shape.0, shape.1)
            .map_err(|e| PipelineError::DragOutOfBounds {
                index,
                detail: e.to_string(),
            })?;
    }
    let full;
    let mask = match mask {
        Some(m) => m,
        None => {
            full = Mask::full(shape.0, shape.1)?;
            &full
        }
    };
    if mask.shape() != shape {
        return Err(GeometryError::ShapeMismatch(format!(
            "mask {:?} vs grid {:?}",
            mask.shape(),
            shape
        ))
        .into());
    }

    let depth = grid_depth(depth, shape, params)?;
    let origin = estimate_origin(mask, &depth, params.d_o)?;
    let cloud = build_point_cloud(mask, &depth, origin)?;
    let partition = filter_drag_subject(&cloud, &pairs[0], params.d_shield)?;
    let deformation = HybridDeformation::plan(&partition, pairs, params, &depth)?;
    let moved: Vec<_> = partition
        .movable
        .iter()
        .map(|p| crate::geometry::CloudPoint {
            pos: deformation.apply(&p.pos),
            src: p.src,
        })
        .collect();

    let projection = project_zbuffer(&moved, &origin, shape);
    let (voided, cells) = assemble_warped_grid(grid, mask, &partition, &projection)?;
    let (filled, voids_filled) = bnni_fill(&voided)?;

    let landings = pairs
        .iter()
        .map(|p| {
            let (a, _) = lift_pair(p, &depth, &origin);
            let g = deformation.apply(&a) + origin;
            Landing {
                handle: p.handle,
                target: p.target,
                landing: [g.x, g.y],
            }
        })
        .collect();

    Ok(WarpOutcome {
        grid: filled,
        diagnostics: Diagnostics {
            moved: partition.movable.len(),
            static_count: partition.static_pts.len(),
            voids_filled,
            out_of_bounds: projection.out_of_bounds,
            collisions: projection.collisions,
        },
        landings,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::NoiseStream;

    fn gradient(h: usize, w: usize) -> (FeatureGrid, DepthMap) {
        let mut data = Vec::new();
        let mut depth = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let v = (x + y) as f64 / (h + w) as f64;
                data.extend_from_slice(&[v, 1.0 - v, 0.5]);
                depth.push(v);
            }
        }
        (
            FeatureGrid::new(h, w, 3, data).unwrap(),
            DepthMap::new(h, w, depth).unwrap(),
        )
    }

    #[test]
    fn null_drag_is_identity() {
        let (g, d) = gradient(9, 11);
        let pairs = [DragPair::new([3.0, 4.0], [3.0, 4.0])];
        let out = warp_grid(&g, &d, None, &pairs, &PcddParams::default()).unwrap();
        assert_eq!(out.grid, g);
        assert_eq!(out.diagnostics.voids_filled, 0);
        assert_eq!(out.diagnostics.moved + out.diagnostics.static_count, 99);
        assert_eq!(out.landings[0].landing, [3.0, 4.0]);
    }

    #[test]
    fn flat_depth_still_warps() {
        let g = NoiseStream::new(1, 1).normal_grid(6, 6, 2).unwrap();
        let d = DepthMap::filled(6, 6, 0.4).unwrap();
        let pairs = [DragPair::new([2.0, 2.0], [2.0, 2.0])];
        let out = warp_grid(&g, &d, None, &pairs, &PcddParams::default()).unwrap();
        assert_eq!(out.grid, g);
        assert_eq!(out.diagnostics.static_count, 0);
    }

    #[test]
    fn rigid_landing_blends_rotated_handle_and_target() {
        // flat depth: origin sits at the mask centroid (7, 10), 20 behind the
        // surface, so a1 = (0, 0, 20) and b1 = (10, 0, 20). With beta = 0 the
        // handle lands at R a1 + 0.7 (b1 - R a1), and R a1 = |a1| b1 / |b1|.
        let (g, _) = gradient(21, 31);
        let d = DepthMap::filled(21, 31, 0.5).unwrap();
        let cells: Vec<_> = (8..13).flat_map(|y| (5..10).map(move |x| (x, y))).collect();
        let mask = Mask::from_cells(21, 31, &cells).unwrap();
        let params = PcddParams {
            beta: 0.0,
            ..Default::default()
        };
        let pairs = [DragPair::new([7.0, 10.0], [17.0, 10.0])];
        let out = warp_grid(&g, &d, Some(&mask), &pairs, &params).unwrap();
        let (na, nb) = (20.0f64, 500.0f64.sqrt());
        let along = 0.3 * na + 0.7 * nb;
        let expected_x = 7.0 + 10.0 / nb * along;
        let l = out.landings[0].landing;
        assert!((l[0] - expected_x).abs() < 1e-9 && (l[1] - 10.0).abs() < 1e-9, "{l:?}");
        assert!((l[0] - 17.0).abs() < 1.0);
    }

    #[test]
    fn handle_off_grid_is_rejected() {
        let (g, d) = gradient(5, 5);
        let err = warp_grid(&g, &d, None, &[DragPair::new([5.0, 1.0], [1.0, 1.0])], &PcddParams::default())
            .unwrap_err();
        assert_eq!(err.code(), "drag_out_of_bounds");
    }

    #[test]
    fn handle_outside_mask_is_rejected() {
        let (g, d) = gradient(5, 5);
        let mask = Mask::from_cells(5, 5, &[(0, 0), (1, 0)]).unwrap();
        let err = warp_grid(&g, &d, Some(&mask), &[DragPair::new([3.0, 3.0], [1.0, 1.0])], &PcddParams::default())
            .unwrap_err();
        assert_eq!(err.code(), "handle_outside_mask");
    }
}
