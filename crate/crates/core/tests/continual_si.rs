//! Synaptic-intelligence algebra and the task-sequence runner.

use acn_core::continual::{metrics, si_accumulate, si_consolidate, si_penalty, si_penalty_grad, SIState};
use proptest::prelude::*;

fn shapes() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 1..5), 1..4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn penalty_vanishes_at_anchor(theta in shapes(), imp in 0.0f64..10.0, lambda in 0.0f64..100.0) {
        let mut s = SIState::new(&theta, 0.1, lambda);
        s.importance = theta.iter().map(|p| vec![imp; p.len()]).collect();
        prop_assert_eq!(si_penalty(&s, &theta).unwrap(), 0.0);
        prop_assert!(si_penalty_grad(&s, &theta).unwrap().iter().flatten().all(|&g| g == 0.0));
    }

    #[test]
    fn importance_non_negative_under_plain_descent(
        theta in shapes(),
        steps in 1usize..20,
        lr in 0.001f64..0.5,
        seed in 0u64..u64::MAX,
        tasks in 1usize..4,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut theta = theta;
        let mut s = SIState::new(&theta, 0.1, 1.0);
        for _ in 0..tasks {
            for _ in 0..steps {
                let g: Vec<Vec<f64>> = theta.iter().map(|p| p.iter().map(|_| rng.gen_range(-3.0..3.0)).collect()).collect();
                let d: Vec<Vec<f64>> = g.iter().map(|p| p.iter().map(|x| -lr * x).collect()).collect();
                si_accumulate(&mut s, &d, &g).unwrap();
                for (t, dp) in theta.iter_mut().zip(&d) {
                    for (x, dx) in t.iter_mut().zip(dp) {
                        *x += dx;
                    }
                }
            }
            si_consolidate(&mut s, &theta).unwrap();
            prop_assert!(s.importance.iter().flatten().all(|&o| o >= 0.0));
            prop_assert!(s.omega.iter().flatten().all(|&o| o == 0.0));
            prop_assert_eq!(&s.anchor, &theta);
        }
    }

    #[test]
    fn penalty_gradient_matches_difference(theta in shapes(), shift in -1.0f64..1.0, imp in 0.0f64..5.0) {
        let mut s = SIState::new(&theta, 0.1, 0.7);
        s.importance = theta.iter().map(|p| vec![imp; p.len()]).collect();
        let moved: Vec<Vec<f64>> = theta.iter().map(|p| p.iter().map(|x| x + shift).collect()).collect();
        let g = si_penalty_grad(&s, &moved).unwrap();
        let h = 1e-6;
        let p0 = si_penalty(&s, &moved).unwrap();
        let mut bumped = moved.clone();
        bumped[0][0] += h;
        let fd = (si_penalty(&s, &bumped).unwrap() - p0) / h;
        prop_assert!((fd - g[0][0]).abs() < 1e-4 * (1.0 + fd.abs()));
    }
}

#[test]
fn scalar_penalty_example() {
    let mut s = SIState::new(&[vec![0.0]], 0.1, 1.0);
    s.importance = vec![vec![2.0]];
    assert_eq!(si_penalty(&s, &[vec![0.5]]).unwrap(), 0.5);
}

#[test]
fn zero_path_integral_leaves_importance() {
    let mut s = SIState::new(&[vec![1.0, 2.0]], 0.1, 1.0);
    s.importance = vec![vec![0.5, 0.25]];
    si_consolidate(&mut s, &[vec![3.0, -1.0]]).unwrap();
    assert_eq!(s.importance, vec![vec![0.5, 0.25]]);
}

#[test]
fn shape_mismatch_is_rejected() {
    let mut s = SIState::new(&[vec![1.0, 2.0]], 0.1, 1.0);
    assert!(si_penalty(&s, &[vec![1.0]]).is_err());
    assert!(si_accumulate(&mut s, &[vec![1.0]], &[vec![1.0, 2.0]]).is_err());
}

#[test]
fn forgetting_metric() {
    let a = vec![vec![Some(0.9), Some(0.7), Some(0.5)], vec![None, Some(0.8), Some(0.8)], vec![None, None, Some(0.6)]];
    let (avg, fgt) = metrics(&a).unwrap();
    assert!((avg - (0.5 + 0.8 + 0.6) / 3.0).abs() < 1e-12);
    assert!((fgt - (0.4 + 0.0) / 2.0).abs() < 1e-12);
    assert_eq!(metrics(&[vec![Some(0.3)]]).unwrap(), (0.3, 0.0));
}
