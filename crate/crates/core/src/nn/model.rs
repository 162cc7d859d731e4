use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::activation::{activate, activation_backward, Activation};
use super::conv::{Conv, Init};
use super::head::{build_head, Head, HeadCache, HeadSpec};
use super::tensor::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::geom::Grid2D;
use crate::maps::PredictionMaps;

/// Dense stand-in for a sparse 3D backbone: a stack of
/// `conv3x3(stride) -> leaky ReLU` blocks over the BEV feature plane.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneSpec {
    pub in_channels: usize,
    /// `(output channels, stride)` per block.
    pub blocks: Vec<(usize, usize)>,
}

impl Default for BackboneSpec {
    fn default() -> Self {
        Self {
            in_channels: crate::voxelize::BEV_CHANNELS,
            blocks: vec![(32, 2), (64, 2), (64, 1)],
        }
    }
}

impl BackboneSpec {
    pub fn stride(&self) -> usize {
        self.blocks.iter().map(|b| b.1).product()
    }

    pub fn out_channels(&self) -> usize {
        self.blocks.last().map_or(self.in_channels, |b| b.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.blocks.iter().any(|&(c, s)| c == 0 || s == 0) {
            return Err(Error::Config("backbone channels and strides must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    pub params: ParamStore,
    pub backbone: Vec<Conv>,
    pub head: Head,
}

/// Activations kept from a forward pass.
#[derive(Debug, Clone)]
pub struct DetectorCache {
    /// Pre-activation and post-activation output of each backbone block.
    blocks: Vec<(Grid2D, Grid2D)>,
    head: HeadCache,
}

impl Detector {
    /// Builds a detector; `head.in_channels` is overwritten by the backbone
    /// output width.
    pub fn new(backbone: &BackboneSpec, head: &HeadSpec, seed: u64) -> Result<Self> {
        backbone.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::default();
        let mut convs = Vec::new();
        let mut cin = backbone.in_channels;
        for (i, &(cout, stride)) in backbone.blocks.iter().enumerate() {
            convs.push(Conv::build(&mut params, &format!("backbone.{i}"), 3, cin, cout, stride, Init::LeakyFanIn, &mut rng));
            cin = cout;
        }
        let mut head_spec = head.clone();
        head_spec.in_channels = cin;
        let head = build_head(&head_spec, &mut params, &mut rng)?;
        Ok(Self {
            params,
            backbone: convs,
            head,
        })
    }

    pub fn stride(&self) -> usize {
        self.backbone.iter().map(|c| c.stride).product()
    }

    pub fn forward(&self, input: &Grid2D) -> Result<(PredictionMaps, DetectorCache)> {
        let mut blocks: Vec<(Grid2D, Grid2D)> = Vec::with_capacity(self.backbone.len());
        for conv in &self.backbone {
            let x = blocks.last().map_or(input, |b| &b.1);
            let pre = conv.forward(&self.params, x)?;
            let post = activate(&pre, Activation::LeakyRelu);
            blocks.push((pre, post));
        }
        let feat = blocks.last().map_or(input, |b| &b.1);
        let (maps, head) = self.head.forward(&self.params, feat)?;
        Ok((maps, DetectorCache { blocks, head }))
    }

    pub fn predict(&self, input: &Grid2D) -> Result<PredictionMaps> {
        Ok(self.forward(input)?.0)
    }

    /// Accumulates parameter gradients for the output gradient `grad` into
    /// `grads` (shaped like `self.params`).
    pub fn backward(&self, input: &Grid2D, cache: &DetectorCache, grad: &PredictionMaps, grads: &mut [Tensor]) -> Result<()> {
        if grads.len() != self.params.tensors.len() {
            return Err(Error::Shape("gradient buffer does not match parameters".into()));
        }
        let feat = cache.blocks.last().map_or(input, |b| &b.1);
        let mut g = self.head.backward(&self.params, feat, &cache.head, grad, grads)?;
        for i in (0..self.backbone.len()).rev() {
            let (pre, post) = &cache.blocks[i];
            let g_pre = activation_backward(pre, post, &g, Activation::LeakyRelu)?;
            let x = if i == 0 { input } else { &cache.blocks[i - 1].1 };
            match self.backbone[i].backward(&self.params, x, &g_pre, grads, i > 0)? {
                Some(gx) => g = gx,
                None => break,
            }
        }
        Ok(())
    }
}
