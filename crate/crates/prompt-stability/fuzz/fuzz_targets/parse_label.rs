#![no_main]

use libfuzzer_sys::fuzz_target;
use prompt_stability::annotate::{parse_label, OutputSchema};

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let categorical = OutputSchema::Categorical {
            allowed: vec!["0".into(), "1".into(), "yes".into(), "no".into()],
        };
        let _ = parse_label(s, &categorical);
        let range = OutputSchema::IntegerRange { low: -10, high: 10 };
        let _ = parse_label(s, &range);
    }
});
