#![no_main]

use addmimo::experiment::ExperimentSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    match ExperimentSpec::from_toml_str(text) {
        Ok(spec) => {
            let again = spec.to_toml_string().expect("valid spec serialises");
            assert_eq!(ExperimentSpec::from_toml_str(&again).expect("round trip parses"), spec);
        }
        Err(e) => {
            if let Some(line) = e.line {
                assert!(line >= 1 && line <= text.lines().count() + 1);
            }
        }
    }
});
