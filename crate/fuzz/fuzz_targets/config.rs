#![no_main]

use libfuzzer_sys::fuzz_target;
use privgaze_train::TrainConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    // first line doubles as an override, the rest as the file
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    for overrides in [vec![], vec![first.to_string()]] {
        if let Ok(c) = TrainConfig::from_toml_with_overrides(rest, &overrides) {
            let again = TrainConfig::from_toml_with_overrides(&c.to_toml(), &[]).expect("re-parse");
            assert_eq!(again.to_toml(), c.to_toml());
        }
    }
});
