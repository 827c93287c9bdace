#![no_main]

use addmimo::experiment::{locate_json, locate_toml, PathSeg};
use libfuzzer_sys::fuzz_target;

const KEYS: [&str; 6] = ["name", "ber", "timing", "detectors", "kind", "snr_db"];

// First byte: path length. Then one byte per segment: even = index,
// odd = key from a fixed set. The rest is the document.
fuzz_target!(|data: &[u8]| {
    let Some((&len, rest)) = data.split_first() else {
        return;
    };
    let len = (len as usize % 6).min(rest.len());
    let (segs, doc) = rest.split_at(len);
    let path: Vec<PathSeg> = segs
        .iter()
        .map(|&b| {
            if b % 2 == 0 {
                PathSeg::Index((b / 2) as usize % 8)
            } else {
                PathSeg::Key(KEYS[(b / 2) as usize % KEYS.len()].to_string())
            }
        })
        .collect();
    let Ok(text) = std::str::from_utf8(doc) else {
        return;
    };
    let lines = text.lines().count() + 1;
    if let Some(l) = locate_json(text, &path) {
        assert!(l >= 1 && l <= lines);
    }
    if let Some(l) = locate_toml(text, &path) {
        assert!(l >= 1 && l <= lines);
    }
});
