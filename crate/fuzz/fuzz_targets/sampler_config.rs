#![no_main]

use dragwarp_core::sampler::SamplerConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(config) = SamplerConfig::from_json(data) {
        if config.validate().is_ok() {
            let _ = config.start_step();
        }
        let again = SamplerConfig::from_json(config.to_json_pretty().as_bytes())
            .expect("re-encoded config parses");
        assert_eq!(again, config);
    }
});
