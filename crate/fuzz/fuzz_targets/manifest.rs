#![no_main]

use libfuzzer_sys::fuzz_target;
use privgaze_core::data::DatasetManifest;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(m) = DatasetManifest::parse(text, "/nonexistent") {
        // accepted manifests serialize back to an equivalent manifest
        let again = DatasetManifest::parse(&m.to_text(), "/nonexistent").expect("re-parse");
        assert_eq!(again, m);
    }
});
