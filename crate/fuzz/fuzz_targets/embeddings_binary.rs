#![no_main]

use libfuzzer_sys::fuzz_target;
use recognizability::io::{
    encode_embeddings, parse_embeddings, parse_header, FLAG_ROLE, FLAG_TEMPLATE,
};

fuzz_target!(|data: &[u8]| {
    let Ok(records) = parse_embeddings(data) else {
        return;
    };
    let header = parse_header(data).unwrap();
    // the writer always sets both flags and takes dim from the first record
    let canonical =
        header.flags == FLAG_TEMPLATE | FLAG_ROLE && (!records.is_empty() || header.dim == 0);
    if canonical {
        assert_eq!(encode_embeddings(&records).unwrap(), data);
    }
});
