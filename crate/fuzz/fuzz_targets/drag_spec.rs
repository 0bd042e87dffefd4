#![no_main]

use dragwarp_core::params::{DragSpec, PcddOverrides, PcddParams};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(spec) = DragSpec::from_json(data) {
        let _ = spec.check();
        let _ = spec.params.apply(PcddParams::default()).validate();
        let again = DragSpec::from_json(spec.to_json().as_bytes()).expect("re-encoded spec parses");
        assert_eq!(again, spec);
    }
    if let Ok(overrides) = serde_json::from_slice::<PcddOverrides>(data) {
        let _ = overrides.apply(PcddParams::default()).validate();
    }
});
