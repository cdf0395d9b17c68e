#![no_main]

use libfuzzer_sys::fuzz_target;
use perturbed_sde::models::{Coefficient, MaxDriftCoefficient};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // must never panic; errors are fine
    let _ = Coefficient::parse(text);
    let _ = MaxDriftCoefficient::parse(text);
});
