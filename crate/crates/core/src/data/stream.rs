//! Streaming batch generator.
//!
//! Worker threads decode images in epoch order into bounded channels; the
//! consumer assembles batches strictly in order. A shared [`Residency`]
//! counter tracks how many decoded images are alive: an image counts from
//! the moment it is decoded until the [`Batch`] holding it is dropped.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{sync_channel, Receiver};
use std::sync::Arc;
use std::thread;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::image::{load_and_preprocess, IMAGE_SIDE};
use super::SampleRef;
use crate::class::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Live and peak counts of decoded images.
#[derive(Debug, Default)]
pub struct Residency {
    live: AtomicUsize,
    peak: AtomicUsize,
}

impl Residency {
    fn acquire(&self, n: usize) {
        let now = self.live.fetch_add(n, Ordering::SeqCst) + n;
        self.peak.fetch_max(now, Ordering::SeqCst);
    }

    fn release(&self, n: usize) {
        self.live.fetch_sub(n, Ordering::SeqCst);
    }

    pub fn live(&self) -> usize {
        self.live.load(Ordering::SeqCst)
    }

    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamOptions {
    /// Decoded images allowed to exist beyond the batch being assembled.
    pub prefetch_depth: usize,
    /// Decoder threads; capped at `prefetch_depth`.
    pub workers: usize,
}

impl Default for StreamOptions {
    fn default() -> Self {
        Self {
            prefetch_depth: 8,
            workers: 2,
        }
    }
}

pub struct Batch {
    /// B×224×224×3.
    pub images: Tensor<f32>,
    /// B×4 one-hot.
    pub labels: Tensor<f32>,
    pub samples: Vec<SampleRef>,
    residency: Arc<Residency>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn image(&self, i: usize) -> Tensor<f32> {
        self.images.sample(i)
    }
}

impl Drop for Batch {
    fn drop(&mut self) {
        self.residency.release(self.samples.len());
    }
}

impl std::fmt::Debug for Batch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Batch").field("len", &self.samples.len()).finish()
    }
}

type Decoded = std::result::Result<Tensor<f32>, (PathBuf, String)>;

pub struct BatchStream {
    order: Vec<SampleRef>,
    receivers: Vec<Receiver<Decoded>>,
    next: usize,
    batch_size: usize,
    residency: Arc<Residency>,
    skipped: Vec<PathBuf>,
}

impl BatchStream {
    pub fn residency(&self) -> Arc<Residency> {
        Arc::clone(&self.residency)
    }

    /// Samples whose decode failed so far this epoch.
    pub fn skipped(&self) -> &[PathBuf] {
        &self.skipped
    }

    /// Number of samples in the epoch, including any that fail to decode.
    pub fn epoch_len(&self) -> usize {
        self.order.len()
    }
}

impl Iterator for BatchStream {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        let per = IMAGE_SIDE * IMAGE_SIDE * 3;
        let mut pixels = Vec::new();
        let mut labels = Vec::new();
        let mut samples = Vec::new();
        while samples.len() < self.batch_size && self.next < self.order.len() {
            let pos = self.next;
            self.next += 1;
            let rx = &self.receivers[pos % self.receivers.len()];
            match rx.recv() {
                Ok(Ok(img)) => {
                    if pixels.is_empty() {
                        pixels.reserve(self.batch_size * per);
                    }
                    pixels.extend_from_slice(img.data());
                    let sample = self.order[pos].clone();
                    labels.extend_from_slice(&sample.label.one_hot());
                    samples.push(sample);
                }
                Ok(Err((path, reason))) => {
                    log::warn!("skipping {}: {reason}", path.display());
                    self.skipped.push(path);
                }
                Err(_) => {
                    log::error!("decoder thread exited early");
                    self.next = self.order.len();
                }
            }
        }
        if samples.is_empty() {
            return None;
        }
        let b = samples.len();
        Some(Batch {
            images: Tensor::new(&[b, IMAGE_SIDE, IMAGE_SIDE, 3], pixels).expect("batch shape"),
            labels: Tensor::new(&[b, NUM_CLASSES], labels).expect("label shape"),
            samples,
            residency: Arc::clone(&self.residency),
        })
    }
}

/// Epoch order: the split shuffled with a generator seeded by `epoch_seed`.
pub fn epoch_order(split: &[SampleRef], epoch_seed: u64) -> Vec<SampleRef> {
    let mut order = split.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
    order
}

/// Streams one epoch over `split` in batches of `batch_size`; the last batch
/// may be short. Undecodable samples are logged and skipped.
pub fn batches(split: &[SampleRef], batch_size: usize, epoch_seed: u64, options: StreamOptions) -> Result<BatchStream> {
    if batch_size == 0 {
        return Err(Error::Parameter("batch size must be at least 1".into()));
    }
    if options.prefetch_depth == 0 {
        return Err(Error::Parameter("prefetch depth must be at least 1".into()));
    }
    let order = epoch_order(split, epoch_seed);
    let residency = Arc::new(Residency::default());
    let workers = options.workers.clamp(1, options.prefetch_depth);
    // Each worker may hold one image blocked in `send` plus `capacity` queued.
    let capacity = options.prefetch_depth / workers - 1;
    let mut receivers = Vec::with_capacity(workers);
    for w in 0..workers {
        let (tx, rx) = sync_channel::<Decoded>(capacity);
        let paths: Vec<PathBuf> = order.iter().skip(w).step_by(workers).map(|s| s.path.clone()).collect();
        let residency = Arc::clone(&residency);
        thread::Builder::new()
            .name(format!("octx-decode-{w}"))
            .spawn(move || {
                for path in paths {
                    let item = match load_and_preprocess(&path) {
                        Ok(img) => {
                            residency.acquire(1);
                            Ok(img)
                        }
                        Err(e) => Err((path, e.to_string())),
                    };
                    let counted = item.is_ok();
                    if tx.send(item).is_err() {
                        if counted {
                            residency.release(1);
                        }
                        break;
                    }
                }
            })
            .map_err(|e| Error::io("decoder thread", e))?;
        receivers.push(rx);
    }
    Ok(BatchStream {
        order,
        receivers,
        next: 0,
        batch_size,
        residency,
        skipped: Vec::new(),
    })
}
