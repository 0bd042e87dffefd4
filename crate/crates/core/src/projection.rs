//! Projection of deformed points back onto the grid, warped-grid assembly and
//! void filling.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CloudPoint, DragPartition, Vec3};
use crate::grid::{FeatureGrid, GridError, Mask};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProjectionError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("every cell is void")]
    AllVoid,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// The winning point for a target cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Claim {
    pub src: (usize, usize),
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellState {
    Dragged { src: (usize, usize), z: f64 },
    StaticCopy,
    Outside,
    Void,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetCellMap {
    pub height: usize,
    pub width: usize,
    pub cells: Vec<CellState>,
}

impl TargetCellMap {
    pub fn get(&self, x: usize, y: usize) -> CellState {
        self.cells[y * self.width + x]
    }

    pub fn count(&self, pred: impl Fn(&CellState) -> bool) -> usize {
        self.cells.iter().filter(|c| pred(c)).count()
    }
}

/// Output of z-buffered projection: at most one claim per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub height: usize,
    pub width: usize,
    pub claims: Vec<Option<Claim>>,
    pub out_of_bounds: usize,
    /// Points that lost their cell to a nearer one.
    pub collisions: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub moved: usize,
    #[serde(rename = "static")]
    pub static_count: usize,
    pub voids_filled: usize,
    pub out_of_bounds: usize,
    pub collisions: usize,
}

fn beats(candidate: &Claim, current: &Claim, width: usize) -> bool {
    let key = |c: &Claim| c.src.1 * width + c.src.0;
    candidate.z > current.z || (candidate.z == current.z && key(candidate) < key(current))
}

/// Rounds each point's global `(x, y)` to a cell and keeps the largest `z`
/// per cell; equal `z` goes to the smaller row-major source index.
pub fn project_zbuffer(points: &[CloudPoint], origin: &Vec3, shape: (usize, usize)) -> Projection {
    let (height, width) = shape;
    let mut claims: Vec<Option<Claim>> = vec![None; height * width];
    let mut out_of_bounds = 0;
    let mut collisions = 0;
    for p in points {
        let global = p.pos + origin;
        let (x, y) = (global.x.round(), global.y.round());
        if !(x >= 0.0 && y >= 0.0 && x < width as f64 && y < height as f64) {
            out_of_bounds += 1;
            continue;
        }
        let slot = &mut claims[y as usize * width + x as usize];
        let claim = Claim {
            src: p.src,
            z: global.z,
        };
        match slot {
            None => *slot = Some(claim),
            Some(current) => {
                collisions += 1;
                if beats(&claim, current, width) {
                    *current = claim;
                }
            }
        }
    }
    Projection {
        height,
        width,
        claims,
        out_of_bounds,
        collisions,
    }
}

/// A grid in which some cells carry no feature yet.
#[derive(Debug, Clone, PartialEq)]
pub struct VoidGrid {
    pub grid: FeatureGrid,
    pub void: Vec<bool>,
}

impl VoidGrid {
    pub fn void_count(&self) -> usize {
        self.void.iter().filter(|v| **v).count()
    }
}

/// Dragged cells take the feature of their winning source; unclaimed cells
/// outside the mask or in the static set keep their own feature; the rest of
/// the movable footprint becomes void.
pub fn assemble_warped_grid(
    src: &FeatureGrid,
    mask: &Mask,
    partition: &DragPartition,
    projection: &Projection,
) -> Result<(VoidGrid, TargetCellMap), ProjectionError> {
    let shape = src.shape();
    if mask.shape() != shape || (projection.height, projection.width) != shape {
        return Err(ProjectionError::ShapeMismatch(format!(
            "grid {:?}, mask {:?}, projection {:?}",
            shape,
            mask.shape(),
            (projection.height, projection.width)
        )));
    }
    let (height, width) = shape;
    let mut is_static = vec![false; height * width];
    for p in &partition.static_pts {
        let (x, y) = p.src;
        if x >= width || y >= height {
            return Err(ProjectionError::ShapeMismatch(format!(
                "static point ({x}, {y}) off grid"
            )));
        }
        is_static[y * width + x] = true;
    }
    let d = src.channels();
    let mut data = Vec::with_capacity(src.data().len());
    let mut void = vec![false; height * width];
    let mut cells = Vec::with_capacity(height * width);
    for (i, claim) in projection.claims.iter().enumerate() {
        let state = match claim {
            Some(c) => CellState::Dragged { src: c.src, z: c.z },
            None if !mask.bits()[i] => CellState::Outside,
            None if is_static[i] => CellState::StaticCopy,
            None => CellState::Void,
        };
        match state {
            CellState::Dragged { src: (sx, sy), .. } => data.extend_from_slice(src.cell(sx, sy)),
            CellState::Void => {
                void[i] = true;
                data.extend(std::iter::repeat_n(0.0, d));
            }
            _ => data.extend_from_slice(src.cell_at(i)),
        }
        cells.push(state);
    }
    Ok((
        VoidGrid {
            grid: src.with_data(data)?,
            void,
        },
        TargetCellMap {
            height,
            width,
            cells,
        },
    ))
}

/// Nearest non-void cell along each axis direction, as `(index, distance)`.
struct Neighbours {
    up: Vec<Option<(usize, usize)>>,
    down: Vec<Option<(usize, usize)>>,
    left: Vec<Option<(usize, usize)>>,
    right: Vec<Option<(usize, usize)>>,
}

fn scan_neighbours(void: &[bool], height: usize, width: usize) -> Neighbours {
    let n = height * width;
    let mut nb = Neighbours {
        up: vec![None; n],
        down: vec![None; n],
        left: vec![None; n],
        right: vec![None; n],
    };
    for x in 0..width {
        let mut last: Option<usize> = None;
        for y in 0..height {
            let i = y * width + x;
            nb.up[i] = last.map(|ly| (ly * width + x, y - ly));
            if !void[i] {
                last = Some(y);
            }
        }
        last = None;
        for y in (0..height).rev() {
            let i = y * width + x;
            nb.down[i] = last.map(|ly| (ly * width + x, ly - y));
            if !void[i] {
                last = Some(y);
            }
        }
    }
    for y in 0..height {
        let mut last: Option<usize> = None;
        for x in 0..width {
            let i = y * width + x;
            nb.left[i] = last.map(|lx| (y * width + lx, x - lx));
            if !void[i] {
                last = Some(x);
            }
        }
        last = None;
        for x in (0..width).rev() {
            let i = y * width + x;
            nb.right[i] = last.map(|lx| (y * width + lx, lx - x));
            if !void[i] {
                last = Some(x);
            }
        }
    }
    nb
}

/// Bidirectional nearest-neighbour interpolation. Each void takes the
/// inverse-distance weighted mean of the nearest non-void cell up, right,
/// down and left of it. A void with no such cell copies the Euclidean
/// nearest non-void cell. Only pre-fill features are read.
pub fn bnni_fill(input: &VoidGrid) -> Result<(FeatureGrid, usize), ProjectionError> {
    let grid = &input.grid;
    let (height, width) = grid.shape();
    if input.void.len() != height * width {
        return Err(ProjectionError::ShapeMismatch(format!(
            "{} void flags for {height}x{width} grid",
            input.void.len()
        )));
    }
    let filled_cells = input.void_count();
    if filled_cells == 0 {
        return Ok((grid.clone(), 0));
    }
    if filled_cells == height * width {
        return Err(ProjectionError::AllVoid);
    }
    let nb = scan_neighbours(&input.void, height, width);
    let d = grid.channels();
    let mut data = grid.data().to_vec();
    let mut isolated = Vec::new();
    for i in (0..height * width).filter(|&i| input.void[i]) {
        let found: Vec<(usize, usize)> = [nb.up[i], nb.right[i], nb.down[i], nb.left[i]]
            .into_iter()
            .flatten()
            .collect();
        if found.is_empty() {
            isolated.push(i);
            continue;
        }
        let norm: f64 = found.iter().map(|&(_, len)| 1.0 / len as f64).sum();
        let out = &mut data[i * d..(i + 1) * d];
        out.fill(0.0);
        for &(j, len) in &found {
            let w = (1.0 / len as f64) / norm;
            for (o, v) in out.iter_mut().zip(grid.cell_at(j)) {
                *o += w * v;
            }
        }
    }
    if !isolated.is_empty() {
        let sources: Vec<usize> = (0..height * width).filter(|&i| !input.void[i]).collect();
        for i in isolated {
            let (x, y) = ((i % width) as i64, (i / width) as i64);
            let nearest = sources
                .iter()
                .copied()
                .min_by_key(|&j| {
                    let (jx, jy) = ((j % width) as i64, (j / width) as i64);
                    ((jx - x).pow(2) + (jy - y).pow(2), j)
                })
                .expect("at least one non-void cell");
            data[i * d..(i + 1) * d].copy_from_slice(grid.cell_at(nearest));
        }
    }
    Ok((grid.with_data(data)?, filled_cells))
}
