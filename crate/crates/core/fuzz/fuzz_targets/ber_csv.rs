#![no_main]

use addmimo::experiment::read_ber_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = read_ber_csv(data) {
        for r in rows {
            assert!(r.errors <= r.bits);
            assert!(r.ci_lo <= r.ber && r.ber <= r.ci_hi);
        }
    }
});
