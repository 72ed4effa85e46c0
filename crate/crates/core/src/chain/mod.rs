//! Exact analysis of 1D linear chains.
//!
//! With scalar weights `w_1..w_L` and input `x_0` every architecture has a
//! closed-form output and gradient. The gradient for `w_i` factors into a
//! forward term (signal reaching layer `i`) and a backward term that is a sum
//! over distinct multiplicative paths from the output back to layer `i`:
//!
//! | arch   | output                         | backward paths |
//! |--------|--------------------------------|----------------|
//! | FFN    | `prod w_i x_0`                 | 1              |
//! | ResNet | `prod (1 + w_i) x_0`           | `2^(L-i)`      |
//! | ACN    | `(1 + sum_i prod_{j<=i} w_j) x_0` | `L - i + 1` |

mod paths;
mod toy;

pub use paths::{enumerate_backward_paths, path_set_inclusion, Inclusion, PathSet, MAX_ENUMERATION};
pub use toy::{run_toy_experiment, summarize_toy, ArchSummary, ToyConfig, ToyInit, ToyRun, ToySummary};

use crate::autodiff::{Tape, Tensor};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Connectivity of a 1D chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Ffn,
    ResNet,
    Acn,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Ffn, Arch::ResNet, Arch::Acn];

    pub fn as_str(self) -> &'static str {
        match self {
            Arch::Ffn => "ffn",
            Arch::ResNet => "resnet",
            Arch::Acn => "acn",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Arch {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ffn" => Ok(Arch::Ffn),
            "resnet" | "residual" => Ok(Arch::ResNet),
            "acn" => Ok(Arch::Acn),
            other => Err(Error::Input(format!("unknown architecture {other:?}"))),
        }
    }
}

/// Scalar chain `w_1..w_L` applied to `x_0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Chain1D {
    weights: Vec<f64>,
    x0: f64,
}

impl Chain1D {
    pub fn new(weights: Vec<f64>, x0: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Input("a chain needs at least one layer".into()));
        }
        Ok(Chain1D { weights, x0 })
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    /// Weight of layer `i` (1-based).
    fn w(&self, i: usize) -> f64 {
        self.weights[i - 1]
    }

    fn check_layer(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.depth() {
            return Err(Error::Input(format!("layer {i} outside 1..={}", self.depth())));
        }
        Ok(())
    }
}

/// Network output for the chain.
pub fn forward_1d(arch: Arch, chain: &Chain1D) -> f64 {
    let w = chain.weights();
    match arch {
        Arch::Ffn => w.iter().product::<f64>() * chain.x0,
        Arch::ResNet => w.iter().map(|v| 1.0 + v).product::<f64>() * chain.x0,
        Arch::Acn => {
            let mut acc = 1.0;
            let mut prefix = 1.0;
            for v in w {
                prefix *= v;
                acc += prefix;
            }
            acc * chain.x0
        }
    }
}

/// Signal reaching layer `i`: the product over layers `1..i-1`.
pub fn forward_term(arch: Arch, chain: &Chain1D, i: usize) -> Result<f64> {
    chain.check_layer(i)?;
    Ok(match arch {
        Arch::Ffn | Arch::Acn => (1..i).map(|m| chain.w(m)).product(),
        Arch::ResNet => (1..i).map(|m| 1.0 + chain.w(m)).product(),
    })
}

/// Backward term for layer `i` as written in closed form.
pub fn backward_term(arch: Arch, chain: &Chain1D, i: usize) -> Result<f64> {
    chain.check_layer(i)?;
    let l = chain.depth();
    Ok(match arch {
        Arch::Ffn => (i + 1..=l).map(|k| chain.w(k)).product(),
        Arch::ResNet => (i + 1..=l).map(|k| 1.0 + chain.w(k)).product(),
        Arch::Acn => {
            let mut acc = 1.0;
            let mut prefix = 1.0;
            for k in i + 1..=l {
                prefix *= chain.w(k);
                acc += prefix;
            }
            acc
        }
    })
}

/// `d y / d w_i` from the closed-form backward and forward terms.
pub fn grad_closed_form(arch: Arch, chain: &Chain1D, i: usize) -> Result<f64> {
    Ok(backward_term(arch, chain, i)? * forward_term(arch, chain, i)? * chain.x0)
}

/// Gradient for layer `i` as a sum over enumerated backward paths.
pub fn grad_by_paths(arch: Arch, chain: &Chain1D, i: usize) -> Result<f64> {
    chain.check_layer(i)?;
    let set = enumerate_backward_paths(arch, chain.depth(), i)?;
    let fwd = forward_term(arch, chain, i)?;
    let backward = path_sum(chain, set.iter());
    Ok(backward * fwd * chain.x0)
}

/// Sum of path products in double-double arithmetic. Residual path sums
/// have up to `2^L` signed terms that can cancel to far below their
/// magnitudes, so plain summation loses the digits the oracle is meant to
/// check.
fn path_sum<'a>(chain: &Chain1D, paths: impl Iterator<Item = &'a [usize]>) -> f64 {
    let mut acc = (0.0, 0.0);
    for p in paths {
        let mut prod = (1.0, 0.0);
        for &k in p {
            prod = dd_mul(prod, chain.w(k));
        }
        acc = dd_add(acc, prod);
    }
    acc.0 + acc.1
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn dd_add(a: (f64, f64), b: (f64, f64)) -> (f64, f64) {
    let (s, e) = two_sum(a.0, b.0);
    let (s, e2) = two_sum(s, e + a.1 + b.1);
    (s, e2)
}

fn dd_mul(a: (f64, f64), b: f64) -> (f64, f64) {
    let p = a.0 * b;
    let e = a.0.mul_add(b, -p);
    two_sum(p, e + a.1 * b)
}

/// Direct / network-mediated / full split of one layer's gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradSplit {
    pub dg: f64,
    pub ng: f64,
    pub fg: f64,
}

/// Split the gradient of layer `i` into the direct term (the empty path,
/// the "1" of the backward term) and everything routed through later
/// layers. FFN has no direct term, so its whole gradient is network-mediated.
pub fn decompose_gradient(arch: Arch, chain: &Chain1D, i: usize) -> Result<GradSplit> {
    chain.check_layer(i)?;
    let scale = forward_term(arch, chain, i)? * chain.x0;
    let set = enumerate_backward_paths(arch, chain.depth(), i)?;
    let (dg, ng) = match arch {
        Arch::Ffn => (0.0, path_sum(chain, set.iter()) * scale),
        Arch::ResNet | Arch::Acn => {
            let ng = path_sum(chain, set.iter().filter(|p| !p.is_empty()));
            (scale, ng * scale)
        }
    };
    // Summed over all paths at once so cancellation between `dg` and `ng`
    // does not cost precision.
    let fg = path_sum(chain, set.iter()) * scale;
    Ok(GradSplit { dg, ng, fg })
}

/// Build the chain on the autodiff tape and return `d y / d w_i` for all `i`.
pub fn grads_autodiff(arch: Arch, chain: &Chain1D) -> Result<Vec<f64>> {
    let mut params = chain
        .weights()
        .iter()
        .map(|&w| Tensor::param(vec![1], vec![w]))
        .collect::<Result<Vec<_>>>()?;
    let mut tape = Tape::new();
    let x0 = tape.leaf(&Tensor::scalar(chain.x0))?;
    let ws = params
        .iter()
        .enumerate()
        .map(|(i, p)| tape.param(i, p))
        .collect::<Result<Vec<_>>>()?;
    let mut x = x0;
    let mut y = x0;
    for &w in &ws {
        let wx = tape.mul(w, x)?;
        x = match arch {
            Arch::Ffn | Arch::Acn => wx,
            Arch::ResNet => tape.add(x, wx)?,
        };
        if arch == Arch::Acn {
            y = tape.add(y, x)?;
        }
    }
    if arch != Arch::Acn {
        y = x;
    }
    tape.backward(y, &mut params)?;
    Ok(params.iter().map(|p| p.grad().map_or(0.0, |g| g[0])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(w: &[f64], x0: f64) -> Chain1D {
        Chain1D::new(w.to_vec(), x0).unwrap()
    }

    #[test]
    fn forward_reference_values() {
        assert_eq!(forward_1d(Arch::Acn, &chain(&[1., 0., 0.], 1.)), 2.0);
        assert_eq!(forward_1d(Arch::ResNet, &chain(&[0., 0., 0.], 5.)), 5.0);
        assert_eq!(forward_1d(Arch::Ffn, &chain(&[2., 3.], 1.)), 6.0);
        assert!(Chain1D::new(vec![], 1.0).is_err());
    }

    #[test]
    fn closed_form_reference_values() {
        let g = grad_closed_form(Arch::Acn, &chain(&[0.9, 0.11, 0.], 1.), 1).unwrap();
        assert!((g - 1.11).abs() < 1e-15);
        let g = grad_closed_form(Arch::ResNet, &chain(&[1., 1., 1.], 1.), 2).unwrap();
        assert_eq!(g, 4.0);
        let g = grad_closed_form(Arch::Ffn, &chain(&[0.5, 0., 2., 3.], 1.), 4).unwrap();
        assert_eq!(g, 0.0);
        assert!(matches!(
            grad_closed_form(Arch::Ffn, &chain(&[1.], 1.), 2),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn decomposition_reference_values() {
        let s = decompose_gradient(Arch::Acn, &chain(&[0., 0., 0.], 1.), 1).unwrap();
        assert_eq!((s.dg, s.ng, s.fg), (1.0, 0.0, 1.0));
        let s = decompose_gradient(Arch::Acn, &chain(&[0.9, 0.11, 0.], 1.), 1).unwrap();
        assert_eq!(s.dg, 1.0);
        assert!((s.ng - 0.11).abs() < 1e-15 && (s.fg - 1.11).abs() < 1e-15);
        let s = decompose_gradient(Arch::ResNet, &chain(&[0.26, 0.26, 0.26], 1.), 1).unwrap();
        assert_eq!(s.dg, 1.0);
        assert!((s.fg - 1.26f64.powi(2)).abs() < 1e-14);
        let s = decompose_gradient(Arch::Ffn, &chain(&[0.5, 2.], 1.), 1).unwrap();
        assert_eq!((s.dg, s.ng), (0.0, 2.0));
    }

    #[test]
    fn autodiff_matches_closed_form_on_small_chain() {
        let c = chain(&[0.3, -0.7, 1.2], 0.8);
        for arch in Arch::ALL {
            let ad = grads_autodiff(arch, &c).unwrap();
            for i in 1..=3 {
                let cf = grad_closed_form(arch, &c, i).unwrap();
                assert!((ad[i - 1] - cf).abs() <= 1e-12 * cf.abs().max(1.0));
            }
        }
    }

    #[test]
    fn symmetric_resnet_fixed_point_solves_doubling() {
        let w = 2f64.powf(1.0 / 3.0) - 1.0;
        let y = forward_1d(Arch::ResNet, &chain(&[w, w, w], 1.0));
        assert!((y - 2.0).abs() < 1e-14);
    }

    #[test]
    fn arch_parses() {
        assert_eq!("ACN".parse::<Arch>().unwrap(), Arch::Acn);
        assert_eq!("residual".parse::<Arch>().unwrap(), Arch::ResNet);
        assert!("cnn".parse::<Arch>().is_err());
    }
}
