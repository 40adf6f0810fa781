#![no_main]

use libfuzzer_sys::fuzz_target;
use recognizability::io::{format_embeddings_text, parse_embeddings_text};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(records) = parse_embeddings_text(text) {
        if records
            .iter()
            .all(|r| r.vector.iter().all(|x| x.is_finite()))
        {
            let again = parse_embeddings_text(&format_embeddings_text(&records).unwrap()).unwrap();
            assert_eq!(again, records);
        }
    }
});
