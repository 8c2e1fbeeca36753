use privgaze_train::archive::Archive;
use privgaze_train::{TrainConfig, TrainState};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn archive_decoding_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..512)) {
        let _ = Archive::decode(&bytes);
        let _ = TrainState::from_bytes(&bytes);
    }

    #[test]
    fn archive_bit_flips_are_rejected(pos in 0usize..4096, bit in 0u8..8) {
        let mut a = Archive::new(serde_json::json!({"k": 1}));
        a.push("param", "w", privgaze_nn::Tensor::new(vec![3, 4], (0..12).map(|i| i as f64 * 0.1).collect()).unwrap());
        let mut bytes = a.encode();
        let i = pos % bytes.len();
        bytes[i] ^= 1 << bit;
        prop_assert!(Archive::decode(&bytes).is_err());
    }

    #[test]
    fn config_parsing_never_panics(text in "[a-z_.=\\[\\] \"0-9\n]{0,80}", key in "[a-z_.]{0,24}", val in "[a-z0-9.\"-]{0,8}") {
        let _ = TrainConfig::from_toml_with_overrides(&text, &[format!("{key}={val}")]);
    }

    #[test]
    fn numeric_overrides_are_type_checked(epochs in 0i64..1000, lr in -1.0f64..1.0) {
        let r = TrainConfig::from_toml_with_overrides("", &[format!("full_stage.epochs={epochs}"), format!("full_stage.lr={lr:?}")]);
        match r {
            Ok(c) => {
                prop_assert!(epochs > 0 && lr >= 0.0);
                prop_assert_eq!(c.full_stage.epochs, epochs as usize);
                prop_assert_eq!(c.full_stage.lr, lr);
            }
            Err(_) => prop_assert!(epochs == 0 || lr < 0.0),
        }
    }
}

fn corpus(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

// Seeds should exercise the accepting path of each fuzz target.
#[test]
fn fuzz_seeds_are_accepted() {
    use privgaze_core::data::DatasetManifest;
    use privgaze_core::pose::parse_keypoints;
    use privgaze_core::supervision::MetricReport;

    for (name, bytes) in corpus("checkpoint") {
        let a = Archive::decode(&bytes).unwrap_or_else(|e| panic!("checkpoint/{name}: {e}"));
        assert_eq!(a.encode(), bytes, "checkpoint/{name}");
    }
    for (name, bytes) in corpus("manifest") {
        DatasetManifest::parse(std::str::from_utf8(&bytes).unwrap(), "/nonexistent")
            .unwrap_or_else(|e| panic!("manifest/{name}: {e}"));
    }
    for (name, bytes) in corpus("keypoints") {
        parse_keypoints(std::str::from_utf8(&bytes).unwrap()).unwrap_or_else(|e| panic!("keypoints/{name}: {e}"));
    }
    for (name, bytes) in corpus("metric_report") {
        std::str::from_utf8(&bytes)
            .unwrap()
            .parse::<MetricReport>()
            .unwrap_or_else(|e| panic!("metric_report/{name}: {e}"));
    }
    for (name, bytes) in corpus("config") {
        let text = std::str::from_utf8(&bytes).unwrap();
        let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
        TrainConfig::from_toml_with_overrides(rest, &[first.to_string()]).unwrap_or_else(|e| panic!("config/{name}: {e}"));
    }
}
