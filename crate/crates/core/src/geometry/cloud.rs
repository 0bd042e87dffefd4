use crate::grid::{DepthMap, DragPair, Mask};

use super::{GeometryError, Vec3};

/// One masked cell lifted to 3D, in local coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudPoint {
    pub pos: Vec3,
    /// Source cell `(x, y)`.
    pub src: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<CloudPoint>,
    /// Global position of the local frame's origin.
    pub origin: Vec3,
}

/// Masked points split by the depth shield around the primary handle.
#[derive(Debug, Clone, PartialEq)]
pub struct DragPartition {
    pub movable: Vec<CloudPoint>,
    pub static_pts: Vec<CloudPoint>,
    pub origin: Vec3,
}

fn bilinear_resize(depth: &DepthMap, height: usize, width: usize) -> Vec<f64> {
    let (in_h, in_w) = depth.shape();
    if (in_h, in_w) == (height, width) {
        return depth.values().to_vec();
    }
    // Half-pixel centres, edge-clamped.
    let sy = in_h as f64 / height as f64;
    let sx = in_w as f64 / width as f64;
    let mut out = Vec::with_capacity(height * width);
    for y in 0..height {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (in_h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(in_h - 1);
        let ty = fy - y0 as f64;
        for x in 0..width {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (in_w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(in_w - 1);
            let tx = fx - x0 as f64;
            let top = depth.at(x0, y0) * (1.0 - tx) + depth.at(x1, y0) * tx;
            let bottom = depth.at(x0, y1) * (1.0 - tx) + depth.at(x1, y1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

/// Bilinearly resizes `depth` to `target` and maps its range affinely onto
/// `[dp_min, dp_max]`.
pub fn rescale_depth(
    depth: &DepthMap,
    target: (usize, usize),
    dp_min: f64,
    dp_max: f64,
) -> Result<DepthMap, GeometryError> {
    let (height, width) = target;
    if height == 0 || width == 0 {
        return Err(GeometryError::ShapeMismatch(format!(
            "target shape {height}x{width}"
        )));
    }
    if !(dp_max > dp_min) {
        return Err(GeometryError::ShapeMismatch(format!(
            "dp range [{dp_min}, {dp_max}] is empty"
        )));
    }
    let resized = bilinear_resize(depth, height, width);
    let (lo, hi) = resized
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !(hi > lo) {
        return Err(GeometryError::DegenerateDepthRange(lo));
    }
    let span = dp_max - dp_min;
    let values = resized
        .into_iter()
        .map(|v| dp_min + (v - lo) / (hi - lo) * span)
        .collect();
    DepthMap::new(height, width, values).map_err(|e| GeometryError::ShapeMismatch(e.to_string()))
}

/// Centroid of the masked cell centres; `z` is the depth of the masked cell
/// nearest that centroid, pushed back by the slack distance `d_o`.
pub fn estimate_origin(mask: &Mask, depth: &DepthMap, d_o: f64) -> Result<Vec3, GeometryError> {
    if mask.shape() != depth.shape() {
        return Err(GeometryError::ShapeMismatch(format!(
            "mask {:?} vs depth {:?}",
            mask.shape(),
            depth.shape()
        )));
    }
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for (x, y) in mask.cells() {
        sx += x as f64;
        sy += y as f64;
        n += 1;
    }
    if n == 0 {
        return Err(GeometryError::EmptyMask);
    }
    let (cx, cy) = (sx / n as f64, sy / n as f64);
    let mut nearest = None;
    let mut best = f64::INFINITY;
    for (x, y) in mask.cells() {
        let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
        if d2 < best {
            best = d2;
            nearest = Some((x, y));
        }
    }
    let (nx, ny) = nearest.expect("mask is nonempty");
    Ok(Vec3::new(cx, cy, depth.at(nx, ny) - d_o))
}

/// Lifts every masked cell to `(x, y, depth) - origin`, row-major.
pub fn build_point_cloud(
    mask: &Mask,
    depth: &DepthMap,
    origin: Vec3,
) -> Result<PointCloud, GeometryError> {
    if mask.shape() != depth.shape() {
        return Err(GeometryError::ShapeMismatch(format!(
            "mask {:?} vs depth {:?}",
            mask.shape(),
            depth.shape()
        )));
    }
    let points = mask
        .cells()
        .map(|(x, y)| CloudPoint {
            pos: Vec3::new(x as f64, y as f64, depth.at(x, y)) - origin,
            src: (x, y),
        })
        .collect();
    Ok(PointCloud { points, origin })
}

/// Points whose local depth is within `d_shield` of the primary handle's
/// are movable; the rest of the mask stays put.
pub fn filter_drag_subject(
    cloud: &PointCloud,
    primary: &DragPair,
    d_shield: f64,
) -> Result<DragPartition, GeometryError> {
    let [hx, hy] = primary.handle;
    let outside = GeometryError::HandleOutsideMask { x: hx, y: hy };
    if !(hx.is_finite() && hy.is_finite()) {
        return Err(outside);
    }
    let cell = (hx.round(), hy.round());
    if cell.0 < 0.0 || cell.1 < 0.0 {
        return Err(outside);
    }
    let cell = (cell.0 as usize, cell.1 as usize);
    let handle_z = cloud
        .points
        .iter()
        .find(|p| p.src == cell)
        .map(|p| p.pos.z)
        .ok_or(outside)?;
    let (movable, static_pts) = cloud
        .points
        .iter()
        .partition(|p| (p.pos.z - handle_z).abs() <= d_shield);
    Ok(DragPartition {
        movable,
        static_pts,
        origin: cloud.origin,
    })
}
