use acnlab::config::parse_config_str;
use acnlab::experiments::{self, Variant};

#[test]
fn desk_mixer_acn_fits_training_set() {
    let cfg = parse_config_str(r#"{"preset": "desk-mixer", "train": {"epochs": 2}}"#).unwrap();
    let data = experiments::load_data(&cfg).unwrap();
    let (_, log) = experiments::train_one(&cfg, &Variant::parse("acn").unwrap(), &data, 0).unwrap();
    let best = log.epochs.iter().filter_map(|e| e.train.map(|m| m.accuracy)).fold(0.0, f64::max);
    assert!(best > 0.9, "train accuracy {best}");
}

#[test]
fn paper_mixer_preset_values() {
    let cfg = parse_config_str(r#"{"preset": "paper-mixer"}"#).unwrap();
    let n = &cfg.network;
    assert_eq!((n.depth, n.width, n.patch, n.d_c, n.d_s), (16, 128, 4, 512, 64));
    assert_eq!((cfg.train.optim.lr_max, cfg.train.batch_size), (1e-3, 64));
}
