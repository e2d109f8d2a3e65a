#![no_main]

use libfuzzer_sys::fuzz_target;
use prompt_stability::store::ingest_csv;

fuzz_target!(|data: &[u8]| {
    let _ = ingest_csv(std::io::Cursor::new(data), Some("id"), "text");
    let _ = ingest_csv(std::io::Cursor::new(data), None, "text");
});
