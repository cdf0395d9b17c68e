#![no_main]

use libfuzzer_sys::fuzz_target;
use perturbed_sde::cli::config::{parse_config_str, RunConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // must never panic; errors are fine
    if let Ok(map) = parse_config_str(text) {
        let _ = RunConfig::from_map(&map);
    }
});
