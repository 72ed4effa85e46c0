//! Dataset generation, caching and corruption.

use acn_core::data::{
    add_gaussian_noise, add_salt_pepper, parse_cifar10, salt_pepper_count, subset_per_class, synth_classification, Dataset,
    Render, Split, SynthKind, SynthSpec, CIFAR_RECORD,
};
use proptest::prelude::*;

fn images(seed: u64) -> Dataset {
    let spec = SynthSpec {
        kind: SynthKind::Blobs,
        classes: 3,
        per_class: 4,
        dim: 8,
        render: Some(Render { size: 6, channels: 3 }),
        ..Default::default()
    };
    synth_classification(&spec, seed, 0, Split::Test).unwrap()
}

#[test]
fn zero_noise_is_bitwise_identity() {
    let ds = images(1);
    assert_eq!(add_gaussian_noise(&ds, 0.0, 3).unwrap(), ds);
    assert_eq!(add_salt_pepper(&ds, 0.0, 3).unwrap(), ds);
    assert!(add_gaussian_noise(&ds, -0.1, 3).is_err());
    assert!(add_salt_pepper(&ds, 1.5, 3).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn salt_pepper_alters_exact_positions(p in 0.0f64..1.0, seed in 0u64..500) {
        let ds = images(seed % 7);
        let noisy = add_salt_pepper(&ds, p, seed).unwrap();
        let pixels = 36;
        let k = salt_pepper_count(p, pixels);
        for (a, b) in ds.inputs().data().chunks(3 * pixels).zip(noisy.inputs().data().chunks(3 * pixels)) {
            let mut hit = 0;
            for pos in 0..pixels {
                let vals: Vec<f64> = (0..3).map(|c| b[c * pixels + pos]).collect();
                let salted = vals.iter().all(|&v| v == vals[0] && (v == 0.0 || v == 1.0));
                let changed = (0..3).any(|c| a[c * pixels + pos] != b[c * pixels + pos]);
                if changed {
                    prop_assert!(salted);
                }
                hit += salted as usize;
            }
            // Salted positions may coincide with an original pixel of the same value.
            prop_assert!(hit >= k);
        }
        prop_assert_eq!(noisy.labels(), ds.labels());
    }

    #[test]
    fn gaussian_noise_clamps_images(sigma in 0.01f64..2.0, seed in 0u64..500) {
        let noisy = add_gaussian_noise(&images(2), sigma, seed).unwrap();
        prop_assert!(noisy.inputs().data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn subsets_are_balanced(n in 1usize..5, seed in 0u64..100) {
        let sub = subset_per_class(&images(3), n, seed).unwrap();
        prop_assert_eq!(sub.class_counts(), vec![n; 3]);
    }
}

#[test]
fn synthetic_draws_differ_but_repeat() {
    let spec = SynthSpec { kind: SynthKind::Spirals, classes: 4, per_class: 10, dim: 5, noise: 0.05, ..Default::default() };
    let a = synth_classification(&spec, 1, 0, Split::Train).unwrap();
    let b = synth_classification(&spec, 1, 0, Split::Train).unwrap();
    let c = synth_classification(&spec, 1, 1, Split::Test).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.inputs().data(), c.inputs().data());
    assert_eq!(a.len(), 40);
    assert_eq!(a.example_shape(), &[5]);
}

#[test]
fn cache_file_round_trip() {
    let ds = images(4);
    let mut buf = Vec::new();
    ds.write_to(&mut buf).unwrap();
    assert_eq!(Dataset::read_from(&buf[..]).unwrap(), ds);
    assert!(Dataset::read_from(&buf[..buf.len() - 1]).is_err());
}

#[test]
fn cifar_records() {
    let mut bytes = vec![0u8; 2 * CIFAR_RECORD];
    bytes[0] = 7;
    bytes[1] = 255;
    bytes[CIFAR_RECORD] = 2;
    let (x, y) = parse_cifar10(&bytes).unwrap();
    assert_eq!(y, vec![7, 2]);
    assert_eq!(x.len(), 2 * 3072);
    assert_eq!(x[0], 1.0);
    assert!(parse_cifar10(&bytes[..CIFAR_RECORD + 5]).is_err());
    bytes[0] = 10;
    assert!(parse_cifar10(&bytes).is_err());
}
