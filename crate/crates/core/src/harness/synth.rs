//! Synthetic image corpora generated from a planted tree dictionary.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dictionary::Dictionary;
use crate::dictlearn::TrainingSet;
use crate::error::{Error, Result};
use crate::harness::compare::{CompareInputs, Split, TestImage};
use crate::linalg::random_orthonormal;
use crate::tree::{make_tree, random_tree_sparse, TreeSparseVector};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub side: usize,
    /// Depth of the planted binary tree; `p = 2^depth - 1`.
    pub depth: usize,
    pub count: usize,
    pub k: usize,
    pub amp_min: f64,
    pub amp_max: f64,
    /// Magnitudes shrink by this factor per tree level.
    pub decay: f64,
    /// Constant gray level added to every image.
    pub offset: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            side: 64,
            depth: 7,
            count: 160,
            k: 24,
            amp_min: 1.0,
            amp_max: 2.0,
            decay: 0.85,
            offset: 0.5,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub side: usize,
    /// Column-major images, one per column.
    pub images: DMatrix<f64>,
    pub dictionary: Dictionary,
    pub codes: Vec<TreeSparseVector>,
}

impl SyntheticCorpus {
    pub fn training_set(&self) -> Result<TrainingSet> {
        TrainingSet::from_columns(self.images.clone())
    }

    pub fn image(&self, i: usize) -> Vec<f64> {
        self.images.column(i).iter().copied().collect()
    }
}

pub fn synthetic_corpus(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    if cfg.side == 0 || !cfg.side.is_power_of_two() {
        return Err(Error::arg(format!("side {} is not a power of two", cfg.side)));
    }
    if cfg.count == 0 {
        return Err(Error::arg("corpus needs at least one image"));
    }
    let tree = make_tree(2, cfg.depth)?;
    let n = cfg.side * cfg.side;
    if tree.len() > n {
        return Err(Error::arg(format!("{} atoms do not fit in {n} pixels", tree.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let atoms = random_orthonormal(n, tree.len(), &mut rng);
    let dictionary = Dictionary::new(atoms, tree.clone())?;
    let mut images = DMatrix::zeros(n, cfg.count);
    let mut codes = Vec::with_capacity(cfg.count);
    for i in 0..cfg.count {
        let a = random_tree_sparse(&tree, cfg.k, cfg.amp_min, cfg.amp_max, &mut rng)?;
        let scaled: Vec<f64> = a
            .values()
            .iter()
            .enumerate()
            .map(|(j, v)| v * cfg.decay.powi(tree.level_of(j) as i32))
            .collect();
        let x = dictionary.synthesize(&scaled);
        for (dst, v) in images.column_mut(i).iter_mut().zip(x) {
            *dst = cfg.offset + v;
        }
        codes.push(TreeSparseVector::from_values(scaled, &tree)?);
    }
    Ok(SyntheticCorpus {
        side: cfg.side,
        images,
        dictionary,
        codes,
    })
}

/// Comparison inputs built on a planted corpus. The first `train` images
/// form the training set and the first `in_sample` of them are tested; the
/// next `held_out` images are tested as held-out data and one more tunes
/// the Lasso weight. The planted dictionary is the one sensed with.
/// `cfg.count` is ignored.
pub fn planted_compare_inputs(cfg: &SyntheticConfig, train: usize, in_sample: usize, held_out: usize) -> Result<(CompareInputs, SyntheticCorpus)> {
    if train == 0 || in_sample > train {
        return Err(Error::arg(format!("cannot test {in_sample} of {train} training images")));
    }
    let syn = synthetic_corpus(&SyntheticConfig {
        count: train + held_out + 1,
        ..cfg.clone()
    })?;
    let training = TrainingSet::from_columns(syn.images.columns(0, train).clone_owned())?;
    let images = (0..in_sample)
        .map(|i| (i, Split::InSample))
        .chain((train..train + held_out).map(|i| (i, Split::HeldOut)))
        .map(|(i, split)| TestImage {
            label: format!("synthetic{i:03}"),
            split,
            pixels: syn.image(i),
        })
        .collect();
    let inputs = CompareInputs {
        dictionary: syn.dictionary.clone(),
        mean: training.mean().to_vec(),
        tuning: syn.image(train + held_out),
        training,
        images,
    };
    Ok((inputs, syn))
}
