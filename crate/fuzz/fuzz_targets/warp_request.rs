#![no_main]

use dragwarp_core::api::{decode_inline_mask, WarpRequest};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(request) = WarpRequest::from_json(data) {
        let _ = request.effective_params().validate();
        if let Some(mask) = &request.drags.mask {
            let _ = decode_inline_mask(mask);
        }
    }
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = decode_inline_mask(text);
    }
});
