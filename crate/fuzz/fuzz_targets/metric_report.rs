#![no_main]

use libfuzzer_sys::fuzz_target;
use privgaze_core::supervision::MetricReport;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(r) = text.parse::<MetricReport>() {
        assert_eq!(r.to_string().parse::<MetricReport>().expect("re-parse"), r);
    }
});
