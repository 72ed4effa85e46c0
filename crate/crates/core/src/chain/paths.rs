use super::Arch;
use crate::{Error, Result};
use std::collections::BTreeSet;

/// Largest `L - i` for which enumeration is allowed (ResNet sets double per layer).
pub const MAX_ENUMERATION: usize = 24;

/// Backward paths for one layer. Each path is the ascending list of weight
/// indices it multiplies through; the empty path is the direct term.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PathSet {
    paths: BTreeSet<Vec<usize>>,
}

impl PathSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn contains(&self, path: &[usize]) -> bool {
        self.paths.contains(path)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.paths.iter().map(Vec::as_slice)
    }

    pub fn is_subset(&self, other: &PathSet) -> bool {
        self.paths.is_subset(&other.paths)
    }
}

/// Enumerate every backward path reaching layer `i` of an `L`-layer chain.
pub fn enumerate_backward_paths(arch: Arch, depth: usize, i: usize) -> Result<PathSet> {
    if i == 0 || i > depth {
        return Err(Error::Input(format!("layer {i} outside 1..={depth}")));
    }
    let span = depth - i;
    if span > MAX_ENUMERATION {
        return Err(Error::EnumerationSize(span));
    }
    let mut paths = BTreeSet::new();
    match arch {
        Arch::Ffn => {
            paths.insert((i + 1..=depth).collect());
        }
        Arch::Acn => {
            paths.insert(Vec::new());
            for j in i + 1..=depth {
                paths.insert((i + 1..=j).collect());
            }
        }
        Arch::ResNet => {
            for mask in 0u32..(1u32 << span) {
                let p = (0..span).filter(|b| mask >> b & 1 == 1).map(|b| i + 1 + b).collect();
                paths.insert(p);
            }
        }
    }
    Ok(PathSet { paths })
}

/// Subset relations between the three architectures' path sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Inclusion {
    pub ffn_in_acn: bool,
    pub acn_in_resnet: bool,
    pub ffn_acn_strict: bool,
    pub acn_resnet_strict: bool,
}

impl Inclusion {
    pub fn strict(&self) -> bool {
        self.ffn_acn_strict && self.acn_resnet_strict
    }
}

/// Check `B_FFN ⊆ B_ACN ⊆ B_ResNet` on the enumerated sets for layer `i`.
pub fn path_set_inclusion(depth: usize, i: usize) -> Result<Inclusion> {
    let f = enumerate_backward_paths(Arch::Ffn, depth, i)?;
    let a = enumerate_backward_paths(Arch::Acn, depth, i)?;
    let r = enumerate_backward_paths(Arch::ResNet, depth, i)?;
    let ffn_in_acn = f.is_subset(&a);
    let acn_in_resnet = a.is_subset(&r);
    Ok(Inclusion {
        ffn_in_acn,
        acn_in_resnet,
        ffn_acn_strict: ffn_in_acn && f.len() < a.len(),
        acn_resnet_strict: acn_in_resnet && a.len() < r.len(),
    })
}
