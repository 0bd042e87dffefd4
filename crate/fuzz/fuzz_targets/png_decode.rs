#![no_main]

use dragwarp_core::imageio::{depth_from_png, image_to_grid, luminance_depth, mask_from_png};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(grid) = image_to_grid(data) {
        let _ = luminance_depth(&grid);
    }
    let _ = mask_from_png(data);
    let _ = depth_from_png(data);
});
