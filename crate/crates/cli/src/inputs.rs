//! Loading grids, depth maps, masks and drag specs from files.

use std::path::{Path, PathBuf};

use dragwarp_core::fgrid::{read_fgrid, write_fgrid, MAGIC};
use dragwarp_core::grid::{DepthMap, FeatureGrid, Mask};
use dragwarp_core::imageio::{depth_from_png, image_to_grid, luminance_depth, mask_from_png};
use dragwarp_core::params::{DragSpec, PcddOverrides};

use crate::error::CliError;

const PNG_MAGIC: &[u8] = b"\x89PNG";

pub fn read_file(path: &Path, missing_code: &str) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            CliError::user(missing_code, format!("{}: not found", path.display()))
        } else {
            CliError::user("unreadable_file", format!("{}: {e}", path.display()))
        }
    })
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes)
        .map_err(|e| CliError::user("write_failed", format!("{}: {e}", path.display())))
}

/// PNG (RGB in `[0, 1]`) or FGRID, told apart by magic bytes.
pub fn load_grid(path: &Path) -> Result<FeatureGrid, CliError> {
    let bytes = read_file(path, "file_not_found")?;
    if bytes.starts_with(PNG_MAGIC) {
        image_to_grid(&bytes).map_err(|e| CliError::user("bad_image", e))
    } else if bytes.starts_with(MAGIC) {
        read_fgrid(&bytes).map_err(|e| CliError::user("bad_fgrid", e))
    } else {
        Err(CliError::user(
            "unknown_format",
            format!("{}: neither PNG nor FGRID", path.display()),
        ))
    }
}

pub fn save_grid(path: &Path, grid: &FeatureGrid) -> Result<(), CliError> {
    write_file(path, &write_fgrid(grid))
}

/// Depth from a file (single-channel FGRID or grayscale PNG), or the
/// luminance of `image` when `spec` is `auto`.
pub fn load_depth(spec: &str, image: &FeatureGrid) -> Result<DepthMap, CliError> {
    if spec == "auto" {
        return luminance_depth(image).map_err(|e| CliError::user("depth_required", e));
    }
    load_depth_file(Path::new(spec))
}

/// Single-channel FGRID or grayscale PNG.
pub fn load_depth_file(path: &Path) -> Result<DepthMap, CliError> {
    let bytes = read_file(path, "depth_not_found")?;
    if bytes.starts_with(PNG_MAGIC) {
        return depth_from_png(&bytes).map_err(|e| CliError::user("bad_depth", e));
    }
    let grid = read_fgrid(&bytes).map_err(|e| CliError::user("bad_depth", e))?;
    if grid.channels() != 1 {
        return Err(CliError::user(
            "bad_depth",
            format!("depth grid has {} channels, expected 1", grid.channels()),
        ));
    }
    DepthMap::new(grid.height(), grid.width(), grid.into_data())
        .map_err(|e| CliError::user("bad_depth", e))
}

/// The spec plus its mask, read relative to the spec's directory.
pub fn load_drags(path: &Path) -> Result<(DragSpec, Option<Mask>), CliError> {
    let bytes = read_file(path, "drags_not_found")?;
    let spec = DragSpec::from_json(&bytes).map_err(|e| CliError::user("invalid_drags", e))?;
    let mask = match &spec.mask {
        None => None,
        Some(rel) => {
            let mask_path = resolve_beside(path, rel);
            let bytes = read_file(&mask_path, "mask_not_found")?;
            Some(mask_from_png(&bytes).map_err(|e| CliError::user("bad_mask", e))?)
        }
    };
    Ok((spec, mask))
}

fn resolve_beside(anchor: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        return p.to_path_buf();
    }
    anchor.parent().map_or_else(|| p.to_path_buf(), |dir| dir.join(p))
}

pub fn load_overrides(path: &Path) -> Result<PcddOverrides, CliError> {
    let bytes = read_file(path, "params_not_found")?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::user("invalid_params", e))
}
