use hfio::config::RunConfig;
use proptest::prelude::*;
use serde_json::json;

proptest! {
    #[test]
    fn positive_h_lists_parse_and_hash_stably(h in prop::collection::vec(1e-3f64..2.0, 1..5), seed in any::<u64>()) {
        let text = json!({
            "phase": { "preset": "chirp" },
            "amplitude": { "preset": "lambda_m", "m": -1.0 },
            "h_list": h,
            "seed": seed
        })
        .to_string();
        let cfg = RunConfig::parse(&text).unwrap();
        let again = RunConfig::parse(&serde_json::to_string(&cfg).unwrap()).unwrap();
        prop_assert_eq!(&cfg, &again);
        prop_assert_eq!(cfg.hash(), again.hash());
    }

    #[test]
    fn nonpositive_h_is_rejected(bad in -2.0f64..=0.0) {
        let text = json!({ "phase": { "preset": "identity" }, "amplitude": { "preset": "one" }, "h_list": [0.1, bad] });
        prop_assert!(RunConfig::parse(&text.to_string()).is_err());
    }
}
