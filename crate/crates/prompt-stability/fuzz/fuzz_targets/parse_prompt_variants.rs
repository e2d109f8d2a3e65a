#![no_main]

use libfuzzer_sys::fuzz_target;
use prompt_stability::paraphrase::{parse_prompt_variants, FixedCorpus};

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let _ = parse_prompt_variants(s);
        let _ = FixedCorpus::from_str(s);
    }
});
