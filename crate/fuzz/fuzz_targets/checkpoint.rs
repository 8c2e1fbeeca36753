#![no_main]

use libfuzzer_sys::fuzz_target;
use privgaze_train::archive::Archive;
use privgaze_train::TrainState;

fuzz_target!(|data: &[u8]| {
    if let Ok(a) = Archive::decode(data) {
        let bytes = a.encode();
        assert_eq!(Archive::decode(&bytes).expect("re-decode").encode(), bytes);
    }
    let _ = TrainState::from_bytes(data);
});
