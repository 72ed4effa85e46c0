//! Dataset provisioning: CIFAR-10 binary ingest, synthetic generators,
//! per-class subsetting and input-noise injection.

use crate::autodiff::Tensor;
use crate::rng::{stream, tags};
use crate::{Error, Result};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Labelled examples. Inputs are `[n, features]` vectors or `[n, c, h, w]`
/// images with pixels in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Tensor,
    labels: Vec<usize>,
    classes: usize,
    split: Split,
}

impl Dataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, classes: usize, split: Split) -> Result<Self> {
        let shape = inputs.shape();
        if !(shape.len() == 2 || shape.len() == 4) {
            return Err(Error::Dimension(format!("dataset inputs must be rank 2 or 4, got {shape:?}")));
        }
        if shape[0] != labels.len() {
            return Err(Error::Dimension(format!(
                "{} inputs but {} labels",
                shape[0],
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Input(format!("label {bad} outside [0, {classes})")));
        }
        Ok(Dataset { inputs, labels, classes, split })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn inputs(&self) -> &Tensor {
        &self.inputs
    }

    /// Shape of one example.
    pub fn example_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    pub fn example_len(&self) -> usize {
        self.example_shape().iter().product()
    }

    pub fn is_image(&self) -> bool {
        self.inputs.shape().len() == 4
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.classes];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    /// Inputs and labels of the examples at `idx`, in that order.
    pub fn gather(&self, idx: &[usize]) -> (Tensor, Vec<usize>) {
        let e = self.example_len();
        let src = self.inputs.data();
        let mut data = Vec::with_capacity(idx.len() * e);
        for &i in idx {
            data.extend_from_slice(&src[i * e..(i + 1) * e]);
        }
        let mut shape = self.inputs.shape().to_vec();
        shape[0] = idx.len().max(1);
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        if idx.is_empty() {
            return (Tensor::zeros(shape), labels);
        }
        (Tensor::new(shape, data).expect("gathered shape is consistent"), labels)
    }

    /// New dataset holding the examples at `idx`.
    pub fn select(&self, idx: &[usize]) -> Result<Dataset> {
        if idx.is_empty() {
            return Err(Error::Input("cannot select an empty subset".into()));
        }
        let (inputs, labels) = self.gather(idx);
        Dataset::new(inputs, labels, self.classes, self.split)
    }

    /// Keep only `classes` (in that order) and relabel them `0..classes.len()`.
    pub fn restrict_classes(&self, classes: &[usize]) -> Result<Dataset> {
        let mut map = vec![None; self.classes];
        for (new, &old) in classes.iter().enumerate() {
            if old >= self.classes {
                return Err(Error::Input(format!("class {old} outside [0, {})", self.classes)));
            }
            map[old] = Some(new);
        }
        let idx: Vec<usize> = (0..self.len()).filter(|&i| map[self.labels[i]].is_some()).collect();
        if idx.is_empty() {
            return Err(Error::Input(format!("no examples for classes {classes:?}")));
        }
        let (inputs, labels) = self.gather(&idx);
        let labels = labels.into_iter().map(|l| map[l].unwrap()).collect();
        Dataset::new(inputs, labels, classes.len(), self.split)
    }

    fn with_inputs(&self, data: Vec<f64>) -> Dataset {
        let inputs = Tensor::new(self.inputs.shape().to_vec(), data).expect("same shape");
        Dataset { inputs, labels: self.labels.clone(), classes: self.classes, split: self.split }
    }

    /// `(channels, pixels per channel)`; vectors count as one channel.
    fn pixel_layout(&self) -> (usize, usize) {
        let s = self.example_shape();
        if s.len() == 3 {
            (s[0], s[1] * s[2])
        } else {
            (1, s[0])
        }
    }

    const MAGIC: &'static [u8; 8] = b"ACNDS001";

    /// Header + little-endian `f64` cache format.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(Self::MAGIC)?;
        let shape = self.inputs.shape();
        let split = match self.split {
            Split::Train => 0u64,
            Split::Test => 1,
        };
        for v in [self.classes as u64, split, shape.len() as u64] {
            w.write_all(&v.to_le_bytes())?;
        }
        for &d in shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &l in &self.labels {
            w.write_all(&(l as u64).to_le_bytes())?;
        }
        for v in self.inputs.data() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Dataset> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(Error::Format("not a dataset cache file".into()));
        }
        let mut u = || -> Result<u64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(u64::from_le_bytes(b))
        };
        let classes = u()? as usize;
        let split = match u()? {
            0 => Split::Train,
            1 => Split::Test,
            s => return Err(Error::Format(format!("unknown split tag {s}"))),
        };
        let rank = u()? as usize;
        if !(rank == 2 || rank == 4) {
            return Err(Error::Format(format!("unsupported rank {rank}")));
        }
        let shape = (0..rank).map(|_| u().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let labels = (0..shape[0]).map(|_| u().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let mut bytes = vec![0u8; n * 8];
        r.read_exact(&mut bytes)?;
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Dataset::new(Tensor::new(shape, data)?, labels, classes, split)
    }
}

pub const CIFAR_RECORD: usize = 3073;
pub const CIFAR_SIDE: usize = 32;

/// Parse concatenated CIFAR-10 binary records.
pub fn parse_cifar10(bytes: &[u8]) -> Result<(Vec<f64>, Vec<usize>)> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(Error::Format(format!(
            "CIFAR-10 data length {} is not a positive multiple of {CIFAR_RECORD}",
            bytes.len()
        )));
    }
    let n = bytes.len() / CIFAR_RECORD;
    let mut pixels = Vec::with_capacity(n * (CIFAR_RECORD - 1));
    let mut labels = Vec::with_capacity(n);
    for rec in bytes.chunks_exact(CIFAR_RECORD) {
        if rec[0] > 9 {
            return Err(Error::Format(format!("CIFAR-10 label {} > 9", rec[0])));
        }
        labels.push(rec[0] as usize);
        pixels.extend(rec[1..].iter().map(|&b| b as f64 / 255.0));
    }
    Ok((pixels, labels))
}

fn cifar_from_files(dir: &Path, files: &[&str], split: Split) -> Result<Dataset> {
    let mut pixels = Vec::new();
    let mut labels = Vec::new();
    for f in files {
        let bytes = std::fs::read(dir.join(f))?;
        let (p, l) = parse_cifar10(&bytes).map_err(|e| Error::Format(format!("{f}: {e}")))?;
        pixels.extend(p);
        labels.extend(l);
    }
    let inputs = Tensor::new(vec![labels.len(), 3, CIFAR_SIDE, CIFAR_SIDE], pixels)?;
    Dataset::new(inputs, labels, 10, split)
}

/// Load the standard binary batches (`data_batch_{1..5}.bin`, `test_batch.bin`).
pub fn load_cifar10(dir: impl AsRef<Path>) -> Result<(Dataset, Dataset)> {
    let dir = dir.as_ref();
    let train = cifar_from_files(
        dir,
        &["data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin", "data_batch_5.bin"],
        Split::Train,
    )?;
    let test = cifar_from_files(dir, &["test_batch.bin"], Split::Test)?;
    Ok((train, test))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    /// Gaussian clusters around random class means.
    Blobs,
    /// Interleaved 2D spiral arms, lifted to `dim` by a fixed random map.
    Spirals,
}

/// Optional rendering of synthetic examples as single-channel images.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Render {
    pub size: usize,
    pub channels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// Scale of the class means (blobs) or radius (spirals).
    pub separation: f64,
    /// Within-class standard deviation.
    pub noise: f64,
    /// Spiral turns.
    pub turns: f64,
    pub render: Option<Render>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            kind: SynthKind::Blobs,
            classes: 10,
            per_class: 200,
            dim: 32,
            separation: 1.0,
            noise: 1.0,
            turns: 1.0,
            render: None,
        }
    }
}

fn normal(rng: &mut crate::rng::Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Deterministic synthetic classification data, grouped by class. The
/// `seed` fixes the class geometry; `draw` selects an independent sample
/// from the same distribution (use distinct draws for train and test).
pub fn synth_classification(spec: &SynthSpec, seed: u64, draw: u64, split: Split) -> Result<Dataset> {
    if spec.classes == 0 || spec.per_class == 0 || spec.dim == 0 {
        return Err(Error::Config("synthetic data needs positive classes, per_class and dim".into()));
    }
    if let Some(r) = spec.render {
        if r.size == 0 || r.channels == 0 {
            return Err(Error::Config("render size and channels must be positive".into()));
        }
    }
    let mut geo = stream(seed, tags::DATA);
    let mut rng = stream(seed ^ 0x5EED_0000_0000_0000, tags::DATA.wrapping_add(draw.wrapping_mul(7919)));
    let n = spec.classes * spec.per_class;
    let (feat_dim, shape) = match spec.render {
        Some(r) => (r.channels * r.size * r.size, vec![n, r.channels, r.size, r.size]),
        None => (spec.dim, vec![n, spec.dim]),
    };
    let mut data = Vec::with_capacity(n * feat_dim);
    let mut labels = Vec::with_capacity(n);
    match spec.kind {
        SynthKind::Blobs => {
            let means: Vec<Vec<f64>> = (0..spec.classes)
                .map(|_| (0..feat_dim).map(|_| spec.separation * normal(&mut geo)).collect())
                .collect();
            for (c, mean) in means.iter().enumerate() {
                for _ in 0..spec.per_class {
                    for m in mean {
                        let v = m + spec.noise * normal(&mut rng);
                        data.push(if spec.render.is_some() { (0.5 + 0.25 * v).clamp(0.0, 1.0) } else { v });
                    }
                    labels.push(c);
                }
            }
        }
        SynthKind::Spirals => {
            let lift: Vec<[f64; 2]> = (0..spec.dim).map(|_| [normal(&mut geo), normal(&mut geo)]).collect();
            for c in 0..spec.classes {
                for _ in 0..spec.per_class {
                    let t: f64 = rng.gen_range(0.05..1.0);
                    let theta = 2.0 * std::f64::consts::PI * (spec.turns * t + c as f64 / spec.classes as f64);
                    // libm keeps the bits independent of whether sin/cos get fused into sincos
                    let p = [
                        spec.separation * t * libm::cos(theta) + spec.noise * normal(&mut rng),
                        spec.separation * t * libm::sin(theta) + spec.noise * normal(&mut rng),
                    ];
                    match spec.render {
                        None => data.extend(lift.iter().map(|l| l[0] * p[0] + l[1] * p[1])),
                        Some(r) => render_point(&mut data, p, spec.separation, r),
                    }
                    labels.push(c);
                }
            }
        }
    }
    Dataset::new(Tensor::new(shape, data)?, labels, spec.classes, split)
}

/// Gaussian bump at the point's location, repeated over channels.
fn render_point(out: &mut Vec<f64>, p: [f64; 2], extent: f64, r: Render) {
    let s = r.size as f64;
    let to_px = |v: f64| (v / (2.0 * extent.max(1e-9)) + 0.5) * (s - 1.0);
    let (px, py) = (to_px(p[0]), to_px(p[1]));
    let width = (s / 8.0).max(0.75);
    for _ in 0..r.channels {
        for y in 0..r.size {
            for x in 0..r.size {
                let (dx, dy) = (x as f64 - px, y as f64 - py);
                let d2 = dx * dx + dy * dy;
                out.push((-d2 / (2.0 * width * width)).exp());
            }
        }
    }
}

/// First `n` examples of every class after a seeded shuffle, grouped by class.
pub fn subset_per_class(ds: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.classes()];
    for (i, &l) in ds.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    if let Some((c, have)) = by_class.iter().enumerate().find(|(_, v)| v.len() < n) {
        return Err(Error::Input(format!("class {c} has {} examples, need {n}", have.len())));
    }
    let mut rng = stream(seed, tags::SUBSET);
    let mut idx = Vec::with_capacity(n * ds.classes());
    for mut members in by_class {
        members.shuffle(&mut rng);
        idx.extend_from_slice(&members[..n]);
    }
    ds.select(&idx)
}

/// `x' = clamp(x + e, 0, 1)` with `e ~ N(0, sigma^2)`; vector datasets are
/// left unclamped.
pub fn add_gaussian_noise(ds: &Dataset, sigma: f64, seed: u64) -> Result<Dataset> {
    if !(sigma >= 0.0) {
        return Err(Error::Input(format!("sigma must be non-negative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(ds.clone());
    }
    let mut rng = stream(seed, tags::NOISE);
    let clamp = ds.is_image();
    let data = ds
        .inputs()
        .data()
        .iter()
        .map(|&x| {
            let v = x + sigma * normal(&mut rng);
            if clamp {
                v.clamp(0.0, 1.0)
            } else {
                v
            }
        })
        .collect();
    Ok(ds.with_inputs(data))
}

/// Pre-clamp noise draws used by [`add_gaussian_noise`], for statistics.
pub fn gaussian_noise_samples(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, tags::NOISE);
    (0..n).map(|_| sigma * normal(&mut rng)).collect()
}

/// Number of pixels altered per image by [`add_salt_pepper`].
pub fn salt_pepper_count(p: f64, pixels: usize) -> usize {
    (p * pixels as f64).round() as usize
}

/// Set exactly `round(p * pixels)` distinct pixel positions per image to 0
/// or 1 (fair coin), all channels at a chosen position together.
pub fn add_salt_pepper(ds: &Dataset, p: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Input(format!("salt-and-pepper fraction must lie in [0, 1], got {p}")));
    }
    if p == 0.0 {
        return Ok(ds.clone());
    }
    let (channels, pixels) = ds.pixel_layout();
    let k = salt_pepper_count(p, pixels);
    let mut rng = stream(seed, tags::NOISE.wrapping_add(1));
    let mut data = ds.inputs().data().to_vec();
    for img in data.chunks_exact_mut(channels * pixels) {
        for pos in sample(&mut rng, pixels, k).into_iter() {
            let v = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
            for ch in 0..channels {
                img[ch * pixels + pos] = v;
            }
        }
    }
    Ok(ds.with_inputs(data))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_images() -> Dataset {
        let spec = SynthSpec {
            classes: 3,
            per_class: 5,
            render: Some(Render { size: 32, channels: 3 }),
            ..SynthSpec::default()
        };
        synth_classification(&spec, 1, 0, Split::Train).unwrap()
    }

    #[test]
    fn cifar_record_parsing() {
        let mut bytes = vec![0u8; 2 * CIFAR_RECORD];
        bytes[0] = 3;
        bytes[1] = 255;
        bytes[CIFAR_RECORD] = 9;
        let (px, labels) = parse_cifar10(&bytes).unwrap();
        assert_eq!(labels, vec![3, 9]);
        assert_eq!(px.len(), 2 * 3072);
        assert_eq!(px[0], 1.0);
        assert!(px.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(matches!(parse_cifar10(&bytes[..100]), Err(Error::Format(_))));
        bytes[0] = 10;
        assert!(matches!(parse_cifar10(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn synthetic_is_deterministic_and_sized() {
        let spec = SynthSpec { classes: 4, per_class: 7, ..SynthSpec::default() };
        let a = synth_classification(&spec, 3, 0, Split::Train).unwrap();
        let b = synth_classification(&spec, 3, 0, Split::Train).unwrap();
        let c = synth_classification(&spec, 3, 1, Split::Train).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 28);
        assert_eq!(a.class_counts(), vec![7; 4]);
        let spirals = SynthSpec { kind: SynthKind::Spirals, ..spec };
        assert_eq!(synth_classification(&spirals, 3, 0, Split::Test).unwrap().len(), 28);
    }

    #[test]
    fn subset_counts_and_full_permutation() {
        let ds = tiny_images();
        let s = subset_per_class(&ds, 2, 9).unwrap();
        assert_eq!(s.class_counts(), vec![2, 2, 2]);
        assert_eq!(s, subset_per_class(&ds, 2, 9).unwrap());
        let full = subset_per_class(&ds, 5, 9).unwrap();
        let mut a: Vec<Vec<u64>> = (0..ds.len())
            .map(|i| ds.gather(&[i]).0.data().iter().map(|v| v.to_bits()).collect())
            .collect();
        let mut b: Vec<Vec<u64>> = (0..full.len())
            .map(|i| full.gather(&[i]).0.data().iter().map(|v| v.to_bits()).collect())
            .collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        assert!(matches!(subset_per_class(&ds, 6, 9), Err(Error::Input(_))));
    }

    #[test]
    fn noise_preserves_shape_and_labels() {
        let ds = tiny_images();
        assert_eq!(add_gaussian_noise(&ds, 0.0, 1).unwrap(), ds);
        assert_eq!(add_salt_pepper(&ds, 0.0, 1).unwrap(), ds);
        let g = add_gaussian_noise(&ds, 0.4, 1).unwrap();
        assert_eq!(g.labels(), ds.labels());
        assert_eq!(g.inputs().shape(), ds.inputs().shape());
        assert!(g.inputs().data().iter().all(|v| (0.0..=1.0).contains(v)));
        let sp = add_salt_pepper(&ds, 1.0, 1).unwrap();
        assert!(sp.inputs().data().iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(add_salt_pepper(&ds, 1.5, 1).is_err());
        assert!(add_gaussian_noise(&ds, -1.0, 1).is_err());
    }

    #[test]
    fn salt_pepper_alters_exact_pixel_count() {
        // a mid-grey image makes every altered pixel visible
        let n = 4;
        let inputs = Tensor::new(vec![n, 3, 32, 32], vec![0.5; n * 3 * 1024]).unwrap();
        let ds = Dataset::new(inputs, vec![0; n], 1, Split::Test).unwrap();
        for p in [0.01, 0.05, 0.1] {
            let out = add_salt_pepper(&ds, p, 4).unwrap();
            for img in out.inputs().data().chunks_exact(3 * 1024) {
                let altered = (0..1024).filter(|&px| img[px] != 0.5).count();
                assert_eq!(altered, salt_pepper_count(p, 1024));
                for px in 0..1024 {
                    assert!(img[px] == img[1024 + px] && img[px] == img[2048 + px]);
                }
            }
        }
    }

    #[test]
    fn cache_round_trip() {
        let ds = tiny_images();
        let mut buf = Vec::new();
        ds.write_to(&mut buf).unwrap();
        assert_eq!(Dataset::read_from(buf.as_slice()).unwrap(), ds);
        buf[0] = b'X';
        assert!(matches!(Dataset::read_from(buf.as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn restrict_relabels() {
        let ds = tiny_images();
        let r = ds.restrict_classes(&[2, 0]).unwrap();
        assert_eq!(r.classes(), 2);
        assert_eq!(r.len(), 10);
        assert_eq!(r.class_counts(), vec![5, 5]);
    }
}
