#![no_main]

use libfuzzer_sys::fuzz_target;
use recognizability::io::remap_text;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = remap_text(text);
    }
});
