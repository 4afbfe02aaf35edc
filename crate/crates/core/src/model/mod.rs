//! The two classifier architectures behind one handle: construction,
//! forward/backward, prediction, and the weight archive.

mod archive;
mod resnet;
mod squeezenet;

pub use archive::{read_archive, Archive, ArchiveEntry, ArchiveHeader};

use crate::domain::{Collage, GradeLabel};
use crate::rng::seed_rng;
use ndarray::{Array2, Array3, Array4};
use rand_chacha::ChaCha8Rng;
use resnet::ResNet18Net;
use serde::{Deserialize, Serialize};
use squeezenet::SqueezeNetNet;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("weights file missing: {0}")]
    WeightsFileMissing(PathBuf),
    #[error("weight shape mismatch for {name}: expected {expected:?}, found {found:?}")]
    WeightShapeMismatch { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("archive is missing parameter {0:?}")]
    MissingParameter(String),
    #[error("corrupt weight archive: {0}")]
    ArchiveCorrupt(String),
    #[error("archive architecture mismatch: expected {expected}, found {found}")]
    ArchitectureMismatch { expected: String, found: String },
    #[error("input shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("i/o error at {0}: {1}")]
    Io(PathBuf, String),
}

/// Exactly two supported architectures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchitectureKind {
    ResNet18,
    SqueezeNet,
}

impl ArchitectureKind {
    pub fn display_name(self) -> &'static str {
        match self {
            ArchitectureKind::ResNet18 => "ResNet-18",
            ArchitectureKind::SqueezeNet => "SqueezeNet",
        }
    }

    pub fn cli_name(self) -> &'static str {
        match self {
            ArchitectureKind::ResNet18 => "resnet18",
            ArchitectureKind::SqueezeNet => "squeezenet",
        }
    }
}

impl std::fmt::Display for ArchitectureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.cli_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum SqueezeNetVersion {
    #[serde(rename = "v1_0")]
    V1_0,
    #[serde(rename = "v1_1")]
    #[default]
    V1_1,
}

enum NetworkImpl {
    ResNet18(ResNet18Net),
    SqueezeNet(SqueezeNetNet),
}

/// A built classifier: architecture, parameters, and metadata.
pub struct ModelHandle {
    kind: ArchitectureKind,
    squeezenet_version: SqueezeNetVersion,
    num_classes: usize,
    pretrained: bool,
    net: NetworkImpl,
}

/// Build a classifier. With `pretrained` set, backbone parameters are loaded
/// from the archive at `weights_path` while the classification head is
/// freshly initialized from `seed`; otherwise all parameters come from the
/// seed.
pub fn build_model(
    kind: ArchitectureKind,
    num_classes: usize,
    pretrained: bool,
    weights_path: Option<&Path>,
    seed: u64,
) -> Result<ModelHandle, ModelError> {
    build_model_with_version(kind, SqueezeNetVersion::default(), num_classes, pretrained, weights_path, seed)
}

pub fn build_model_with_version(
    kind: ArchitectureKind,
    squeezenet_version: SqueezeNetVersion,
    num_classes: usize,
    pretrained: bool,
    weights_path: Option<&Path>,
    seed: u64,
) -> Result<ModelHandle, ModelError> {
    assert!(num_classes >= 1, "num_classes must be positive");
    let mut rng = seed_rng(seed, "model_init", arch_seed_index(kind, squeezenet_version));
    let net = match kind {
        ArchitectureKind::ResNet18 => NetworkImpl::ResNet18(ResNet18Net::new(num_classes, &mut rng)),
        ArchitectureKind::SqueezeNet => {
            NetworkImpl::SqueezeNet(SqueezeNetNet::new(squeezenet_version, num_classes, &mut rng))
        }
    };
    let mut model = ModelHandle { kind, squeezenet_version, num_classes, pretrained, net };
    if pretrained {
        let path = weights_path
            .ok_or_else(|| ModelError::WeightsFileMissing(PathBuf::from("<none given>")))?;
        let archive = archive::read_archive(path)?;
        if archive.header.kind != kind
            || (kind == ArchitectureKind::SqueezeNet
                && archive.header.squeezenet_version != squeezenet_version)
        {
            return Err(ModelError::ArchitectureMismatch {
                expected: format!("{kind:?}/{squeezenet_version:?}"),
                found: format!(
                    "{:?}/{:?}",
                    archive.header.kind, archive.header.squeezenet_version
                ),
            });
        }
        model.load_backbone(&archive)?;
    }
    Ok(model)
}

fn arch_seed_index(kind: ArchitectureKind, v: SqueezeNetVersion) -> u64 {
    match (kind, v) {
        (ArchitectureKind::ResNet18, _) => 0,
        (ArchitectureKind::SqueezeNet, SqueezeNetVersion::V1_1) => 1,
        (ArchitectureKind::SqueezeNet, SqueezeNetVersion::V1_0) => 2,
    }
}

impl ModelHandle {
    pub fn kind(&self) -> ArchitectureKind {
        self.kind
    }

    pub fn squeezenet_version(&self) -> SqueezeNetVersion {
        self.squeezenet_version
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn is_pretrained(&self) -> bool {
        self.pretrained
    }

    /// Nominal production input geometry (channels, height, width). Forward
    /// accepts any spatial size the architecture supports, since both end in
    /// global average pooling.
    pub fn input_spec(&self) -> (usize, usize, usize) {
        (3, 300, 2500)
    }

    /// Whether a (height, width) input survives the downsampling chain.
    pub fn input_supported(&self, height: usize, width: usize) -> bool {
        match &self.net {
            NetworkImpl::ResNet18(n) => n.spatial_ok(height, width),
            NetworkImpl::SqueezeNet(n) => n.spatial_ok(height, width),
        }
    }

    fn validate_batch(&self, batch: &Array4<f32>) -> Result<(), ModelError> {
        let (n, c, h, w) = batch.dim();
        if n == 0 {
            return Err(ModelError::ShapeMismatch("batch is empty".into()));
        }
        if c != 3 {
            return Err(ModelError::ShapeMismatch(format!("expected 3 channels, got {c}")));
        }
        if !self.input_supported(h, w) {
            return Err(ModelError::ShapeMismatch(format!(
                "spatial size {h}x{w} collapses to zero inside {}",
                self.kind.display_name()
            )));
        }
        Ok(())
    }

    /// Inference-mode forward: deterministic, no side effects.
    pub fn forward(&self, batch: &Array4<f32>) -> Result<Array2<f32>, ModelError> {
        self.validate_batch(batch)?;
        Ok(match &self.net {
            NetworkImpl::ResNet18(n) => n.forward_eval(batch),
            NetworkImpl::SqueezeNet(n) => n.forward_eval(batch),
        })
    }

    /// Training-mode forward: batch-norm batch statistics, dropout active,
    /// caches retained for `backward`.
    pub fn forward_train(&mut self, batch: Array4<f32>) -> Result<Array2<f32>, ModelError> {
        self.validate_batch(&batch)?;
        Ok(match &mut self.net {
            NetworkImpl::ResNet18(n) => n.forward_train(batch),
            NetworkImpl::SqueezeNet(n) => n.forward_train(batch),
        })
    }

    /// Accumulate parameter gradients from logit gradients.
    pub fn backward(&mut self, dlogits: &Array2<f32>) {
        match &mut self.net {
            NetworkImpl::ResNet18(n) => n.backward(dlogits),
            NetworkImpl::SqueezeNet(n) => n.backward(dlogits),
        }
    }

    /// Reset the dropout stream (used at the start of a training run).
    pub fn seed_dropout(&mut self, rng: ChaCha8Rng) {
        if let NetworkImpl::SqueezeNet(n) = &mut self.net {
            n.reseed_dropout(rng);
        }
    }

    /// Visit every tensor (parameters, then for batch norm the running
    /// buffers) in a stable order.
    pub fn visit_tensors(&mut self, f: crate::nn::VisitFn<'_>) {
        match &mut self.net {
            NetworkImpl::ResNet18(n) => n.visit(f),
            NetworkImpl::SqueezeNet(n) => n.visit(f),
        }
    }

    pub fn zero_grad(&mut self) {
        self.visit_tensors(&mut |_, t| {
            if let Some(g) = t.grad {
                g.fill(0.0);
            }
        });
    }

    /// Names and shapes of the trainable parameters, in registry order.
    pub fn parameter_manifest(&mut self) -> Vec<(String, Vec<usize>)> {
        let mut manifest = Vec::new();
        self.visit_tensors(&mut |name, t| {
            if t.grad.is_some() {
                manifest.push((name.to_string(), t.shape.to_vec()));
            }
        });
        manifest
    }

    /// Total trainable parameter count.
    pub fn parameter_count(&mut self) -> usize {
        self.parameter_manifest().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }

    /// Normalize an 8-bit collage to the model's floating-point input:
    /// per-channel ImageNet statistics when pretrained, `x/255 - 0.5` when
    /// trained from scratch.
    pub fn normalize_collage(&self, collage: &Collage) -> Array3<f32> {
        let img = &collage.image;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut out = Array3::zeros((3, h, w));
        let pixels = img.pixels();
        for c in 0..3 {
            let (scale, shift) = if self.pretrained {
                (1.0 / (255.0 * IMAGENET_STD[c]), -IMAGENET_MEAN[c] / IMAGENET_STD[c])
            } else {
                (1.0 / 255.0, -0.5)
            };
            let plane = &mut out.as_slice_mut().unwrap()[c * h * w..(c + 1) * h * w];
            for (i, p) in plane.iter_mut().enumerate() {
                *p = pixels[i * 3 + c] as f32 * scale + shift;
            }
        }
        out
    }

    /// Classify one collage: softmax probabilities and the argmax label,
    /// ties broken toward the lowest class index.
    pub fn predict(&self, collage: &Collage) -> (GradeLabel, [f32; 3]) {
        let input = self.normalize_collage(collage);
        let (c, h, w) = input.dim();
        let batch = input.into_shape_with_order((1, c, h, w)).expect("reshape");
        let logits = self.forward(&batch).expect("collage geometry unsupported by model");
        let probs = softmax3(&[logits[(0, 0)], logits[(0, 1)], logits[(0, 2)]]);
        let mut best = 0;
        for i in 1..3 {
            if probs[i] > probs[best] {
                best = i;
            }
        }
        (GradeLabel::from_index(best).unwrap(), probs)
    }

    /// Serialize all tensors to the archive format at `path`.
    pub fn save(&mut self, path: &Path) -> Result<(), ModelError> {
        let mut entries: Vec<(String, Vec<usize>, Vec<f32>)> = Vec::new();
        self.visit_tensors(&mut |name, t| {
            entries.push((name.to_string(), t.shape.to_vec(), t.data.to_vec()));
        });
        let header = ArchiveHeader {
            kind: self.kind,
            squeezenet_version: self.squeezenet_version,
            pretrained: self.pretrained,
            num_classes: self.num_classes,
        };
        archive::write_archive(path, &header, &entries)
    }

    fn head_prefix(kind: ArchitectureKind) -> &'static str {
        match kind {
            ArchitectureKind::ResNet18 => "fc.",
            ArchitectureKind::SqueezeNet => "classifier.1.",
        }
    }

    /// Copy every non-head tensor from the archive into this model.
    fn load_backbone(&mut self, archive: &Archive) -> Result<(), ModelError> {
        let by_name = archive.by_name();
        let head = Self::head_prefix(self.kind);
        let mut error: Option<ModelError> = None;
        self.visit_tensors(&mut |name, t| {
            if error.is_some() || name.starts_with(head) {
                return;
            }
            match by_name.get(name) {
                None => error = Some(ModelError::MissingParameter(name.to_string())),
                Some(entry) if entry.shape != t.shape => {
                    error = Some(ModelError::WeightShapeMismatch {
                        name: name.to_string(),
                        expected: t.shape.to_vec(),
                        found: entry.shape.clone(),
                    });
                }
                Some(entry) => t.data.copy_from_slice(&entry.data),
            }
        });
        match error {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Fill every tensor (head included) from the archive; used by `load_model`.
    fn load_all(&mut self, archive: &Archive) -> Result<(), ModelError> {
        let by_name = archive.by_name();
        let mut seen = 0usize;
        let mut error: Option<ModelError> = None;
        self.visit_tensors(&mut |name, t| {
            if error.is_some() {
                return;
            }
            match by_name.get(name) {
                None => error = Some(ModelError::MissingParameter(name.to_string())),
                Some(entry) if entry.shape != t.shape => {
                    error = Some(ModelError::WeightShapeMismatch {
                        name: name.to_string(),
                        expected: t.shape.to_vec(),
                        found: entry.shape.clone(),
                    });
                }
                Some(entry) => {
                    t.data.copy_from_slice(&entry.data);
                    seen += 1;
                }
            }
        });
        if let Some(e) = error {
            return Err(e);
        }
        if seen != archive.entries.len() {
            return Err(ModelError::ArchiveCorrupt(format!(
                "archive holds {} entries but the model has {seen} tensors",
                archive.entries.len()
            )));
        }
        Ok(())
    }
}

/// Rebuild a model from an archive written by `ModelHandle::save`.
pub fn load_model(path: &Path) -> Result<ModelHandle, ModelError> {
    let archive = archive::read_archive(path)?;
    let h = &archive.header;
    let mut rng = seed_rng(0, "model_init", arch_seed_index(h.kind, h.squeezenet_version));
    let net = match h.kind {
        ArchitectureKind::ResNet18 => NetworkImpl::ResNet18(ResNet18Net::new(h.num_classes, &mut rng)),
        ArchitectureKind::SqueezeNet => {
            NetworkImpl::SqueezeNet(SqueezeNetNet::new(h.squeezenet_version, h.num_classes, &mut rng))
        }
    };
    let mut model = ModelHandle {
        kind: h.kind,
        squeezenet_version: h.squeezenet_version,
        num_classes: h.num_classes,
        pretrained: h.pretrained,
        net,
    };
    model.load_all(&archive)?;
    Ok(model)
}

/// Numerically stable softmax over three logits.
pub fn softmax3(logits: &[f32; 3]) -> [f32; 3] {
    let m = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exps: Vec<f64> = logits.iter().map(|&l| ((l as f64) - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    [
        (exps[0] / sum) as f32,
        (exps[1] / sum) as f32,
        (exps[2] / sum) as f32,
    ]
}
