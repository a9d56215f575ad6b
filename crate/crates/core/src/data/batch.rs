//! In-memory dataset with seeded epoch batching.

use rand::seq::SliceRandom;

use crate::data::image::GrayImage;
use crate::data::manifest::{DatasetManifest, Split};
use crate::data::preprocess::{test_preprocess, train_preprocess, PreprocessConfig};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

/// A manifest with every referenced image decoded once up front. Corpora at
/// desk scale fit comfortably in memory, and batching then never touches
/// the disk.
pub struct LoadedDataset {
    pub manifest: DatasetManifest,
    images: Vec<GrayImage>,
    labels: Vec<usize>,
}

impl LoadedDataset {
    pub fn load(manifest: DatasetManifest) -> Result<LoadedDataset> {
        manifest.validate()?;
        let mut images = Vec::with_capacity(manifest.records.len());
        let mut labels = Vec::with_capacity(manifest.records.len());
        for record in &manifest.records {
            let path = manifest.resolve(record);
            let (img, _) = GrayImage::load(&path)?;
            images.push(img);
            labels.push(
                manifest
                    .class_index(&record.label)
                    .expect("validated label"),
            );
        }
        Ok(LoadedDataset {
            manifest,
            images,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image(&self, index: usize) -> &GrayImage {
        &self.images[index]
    }

    pub fn label(&self, index: usize) -> usize {
        self.labels[index]
    }

    fn split_indices(&self, split: Split) -> Vec<usize> {
        self.manifest
            .records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// Batches for one training epoch.
    ///
    /// The train split is reshuffled per (seed, epoch) and runs through
    /// [`train_preprocess`] with a per-(epoch, record) rng stream; the test
    /// split keeps manifest order and uses the deterministic
    /// [`test_preprocess`]. The final short batch is emitted.
    pub fn batches(
        &self,
        split: Split,
        batch_size: usize,
        cfg: &PreprocessConfig,
        seed: u64,
        epoch: usize,
    ) -> Result<BatchIter<'_>> {
        self.batches_impl(split, batch_size, cfg, seed, epoch, split == Split::Train)
    }

    /// Batches for evaluation: manifest order, deterministic test
    /// preprocessing regardless of which split is being scored.
    pub fn eval_batches(
        &self,
        split: Split,
        batch_size: usize,
        target_side: usize,
    ) -> Result<BatchIter<'_>> {
        let cfg = PreprocessConfig {
            target_side,
            scale_min: target_side,
            scale_max: target_side,
        };
        self.batches_impl(split, batch_size, &cfg, 0, 0, false)
    }

    fn batches_impl(
        &self,
        split: Split,
        batch_size: usize,
        cfg: &PreprocessConfig,
        seed: u64,
        epoch: usize,
        augment: bool,
    ) -> Result<BatchIter<'_>> {
        if batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        let mut indices = self.split_indices(split);
        if augment {
            let mut shuffle_rng = rng::derive_indexed(seed, rng::stream::SHUFFLE, epoch as u64);
            indices.shuffle(&mut shuffle_rng);
        }
        Ok(BatchIter {
            dataset: self,
            indices,
            cursor: 0,
            batch_size,
            cfg: *cfg,
            augment,
            seed,
            epoch,
        })
    }
}

pub struct BatchIter<'a> {
    dataset: &'a LoadedDataset,
    indices: Vec<usize>,
    cursor: usize,
    batch_size: usize,
    cfg: PreprocessConfig,
    augment: bool,
    seed: u64,
    epoch: usize,
}

impl Iterator for BatchIter<'_> {
    type Item = (Tensor, Vec<usize>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.cursor >= self.indices.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.indices.len());
        let members = &self.indices[self.cursor..end];
        self.cursor = end;

        let side = self.cfg.target_side;
        let mut batch = Tensor::zeros(members.len(), 1, side, side);
        let mut labels = Vec::with_capacity(members.len());
        for (slot, &idx) in members.iter().enumerate() {
            let img = self.dataset.image(idx);
            let tensor = if self.augment {
                let stream = ((self.epoch as u64) << 32) | idx as u64;
                let mut rng = rng::derive_indexed(self.seed, rng::stream::AUGMENT, stream);
                train_preprocess(img, &self.cfg, &mut rng)
            } else {
                test_preprocess(img, side)
            };
            batch.sample_mut(slot).copy_from_slice(tensor.data());
            labels.push(self.dataset.label(idx));
        }
        Some((batch, labels))
    }
}
