//! Gradient split measured on networks against the scalar-chain algebra.

use acn_core::autodiff::Tensor;
use acn_core::chain::{decompose_gradient, Arch, Chain1D};
use acn_core::net::{Activation, BlockKind, Connectivity, EmbedSpec, HeadSpec, Network, NetworkConfig};
use acn_core::train::{grad_split_with, measure_dg_fg};
use proptest::prelude::*;

/// A width-1 linear chain `x_i = w_i x_{i-1}` as a network.
fn scalar_net(conn: Connectivity, weights: &[f64]) -> Network {
    let cfg = NetworkConfig {
        depth: weights.len(),
        block: BlockKind::Dense { width: 1, hidden: None, activation: Activation::Identity, norm: false, bias: false },
        connectivity: conn,
        dirac: false,
        embed: EmbedSpec::Identity,
        head: HeadSpec { classes: 2, heads: 1, norm: false },
        init_std: 0.02,
        ln_eps: 1e-5,
    };
    let mut net = Network::build(&cfg, 0).unwrap();
    for (i, &w) in weights.iter().enumerate() {
        let r = net.block_params(i + 1);
        assert_eq!(r.len(), 1);
        net.params_mut()[r.start].data_mut()[0] = w;
    }
    net
}

fn split(conn: Connectivity, chain: &Chain1D) -> (Vec<f64>, Vec<f64>) {
    let net = scalar_net(conn, chain.weights());
    let input = Tensor::new(vec![1, 1], vec![chain.x0()]).unwrap();
    let v = grad_split_with(&net, &input, &|_, tape, _, y| tape.sum(y)).unwrap();
    (v.fg.iter().map(|g| g[0]).collect(), v.dg.iter().map(|g| g[0]).collect())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn network_split_matches_chain_algebra(
        w in (1usize..=12).prop_flat_map(|l| prop::collection::vec(-1.0f64..1.0, l)),
        x0 in -1.0f64..1.0,
    ) {
        let chain = Chain1D::new(w, x0).unwrap();
        for (conn, arch) in [(Connectivity::Acn, Arch::Acn), (Connectivity::Residual, Arch::ResNet)] {
            let (fg, dg) = split(conn, &chain);
            for i in 1..=chain.depth() {
                let s = decompose_gradient(arch, &chain, i).unwrap();
                prop_assert!(close(fg[i - 1], s.fg), "{arch} i={i} fg {} vs {}", fg[i - 1], s.fg);
                prop_assert!(close(dg[i - 1], s.dg), "{arch} i={i} dg {} vs {}", dg[i - 1], s.dg);
            }
        }
    }
}

#[test]
fn last_layer_gradient_is_all_direct() {
    let cfg = NetworkConfig {
        depth: 3,
        block: BlockKind::Dense { width: 6, hidden: Some(8), activation: Activation::Gelu, norm: true, bias: true },
        connectivity: Connectivity::Acn,
        dirac: false,
        embed: EmbedSpec::Linear { in_dim: 4 },
        head: HeadSpec { classes: 3, heads: 1, norm: true },
        init_std: 0.2,
        ln_eps: 1e-5,
    };
    let net = Network::build(&cfg, 3).unwrap();
    let input = Tensor::new(vec![5, 4], (0..20).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
    let d = measure_dg_fg(&net, &input, &[0, 1, 2, 0, 1], 0).unwrap();
    assert_eq!(d.layers.len(), 3);
    let last = &d.layers[2];
    assert!(close(last.dg_norm, last.fg_norm));
    for l in &d.layers {
        assert!(l.fg_norm > 0.0 && l.dg_norm > 0.0);
    }
}
