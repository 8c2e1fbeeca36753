#![no_main]

use libfuzzer_sys::fuzz_target;
use privgaze_core::pose::{format_keypoints, normalize_keypoints, parse_keypoints};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(kp) = parse_keypoints(text) {
        let again = parse_keypoints(&format_keypoints(&kp)).expect("re-parse");
        assert_eq!(again, kp);
        let _ = normalize_keypoints(&kp);
    }
});
