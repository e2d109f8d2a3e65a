#![no_main]

use libfuzzer_sys::fuzz_target;
use prompt_stability::annotate::parse_cache_line;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = parse_cache_line(s);
    }
});
