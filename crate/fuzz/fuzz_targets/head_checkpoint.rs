#![no_main]

use libfuzzer_sys::fuzz_target;
use recognizability::io::{encode_head, parse_head};

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = parse_head(data) {
        assert_eq!(encode_head(&ckpt), data);
    }
});
