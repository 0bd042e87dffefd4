#![no_main]

use dragwarp_core::fgrid::{read_fgrid, write_fgrid};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(grid) = read_fgrid(data) {
        let again = read_fgrid(&write_fgrid(&grid)).expect("re-encoded grid parses");
        assert_eq!(again, grid);
    }
});
