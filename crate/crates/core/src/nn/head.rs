use std::str::FromStr;

use rand::Rng;

use super::activation::{activate, activate_channels, activate_channels_backward, activation_backward, logit, Activation};
use super::conv::{Conv, Init};
use super::tensor::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::geom::Grid2D;
use crate::maps::{PredictionMaps, RegressionMaps};

/// Initial probability of the heatmap branches.
pub const HEAT_PRIOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadVariant {
    /// One branch per regression quantity.
    Split,
    /// A single eight-channel box branch.
    Merge,
}

impl FromStr for HeadVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "split" => Ok(HeadVariant::Split),
            "merge" => Ok(HeadVariant::Merge),
            _ => Err(Error::Config(format!("unknown head variant `{s}` (split | merge)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchKind {
    Center,
    Offset,
    Z,
    Size,
    Direction,
    Box,
    Corner,
}

impl BranchKind {
    pub fn name(self) -> &'static str {
        match self {
            BranchKind::Center => "center",
            BranchKind::Offset => "offset",
            BranchKind::Z => "z",
            BranchKind::Size => "size",
            BranchKind::Direction => "direction",
            BranchKind::Box => "box",
            BranchKind::Corner => "corner",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadSpec {
    pub variant: HeadVariant,
    pub in_channels: usize,
    pub hidden: usize,
    pub num_classes: usize,
    /// Builds the corner branch.
    pub corner: bool,
    /// Initial bias of the z output.
    pub z_prior: f64,
    /// Initial biases of the `(l, w, h)` outputs.
    pub size_prior: [f64; 3],
}

impl HeadSpec {
    pub fn new(variant: HeadVariant, in_channels: usize, num_classes: usize) -> Self {
        Self {
            variant,
            in_channels,
            hidden: 64,
            num_classes,
            corner: true,
            z_prior: 0.0,
            size_prior: [0.0; 3],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.hidden == 0 || self.num_classes == 0 {
            return Err(Error::Config("head channel counts must be >= 1".into()));
        }
        if !self.z_prior.is_finite() || self.size_prior.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("head prior"));
        }
        Ok(())
    }

    /// Branches in output order with their per-channel activations.
    pub fn branches(&self) -> Vec<(BranchKind, Vec<Activation>)> {
        use Activation::*;
        let c = self.num_classes;
        let mut out = vec![(BranchKind::Center, vec![Logistic; c])];
        match self.variant {
            HeadVariant::Split => {
                out.push((BranchKind::Offset, vec![Logistic; 2]));
                out.push((BranchKind::Z, vec![Identity]));
                out.push((BranchKind::Size, vec![Identity; 3]));
                out.push((BranchKind::Direction, vec![Tanh; 2]));
            }
            HeadVariant::Merge => out.push((
                BranchKind::Box,
                vec![Logistic, Logistic, Identity, Identity, Identity, Identity, Tanh, Tanh],
            )),
        }
        if self.corner {
            out.push((BranchKind::Corner, vec![Logistic; c]));
        }
        out
    }

    /// Output channel count per branch, in output order.
    pub fn output_channels(&self) -> Vec<usize> {
        self.branches().iter().map(|(_, a)| a.len()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub kind: BranchKind,
    pub conv3: Conv,
    pub conv1: Conv,
    pub activations: Vec<Activation>,
}

/// Detection head: per branch `conv3x3 -> leaky ReLU -> conv1x1 -> activation`.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub spec: HeadSpec,
    pub branches: Vec<Branch>,
}

#[derive(Debug, Clone)]
struct BranchCache {
    pre: Grid2D,
    hidden: Grid2D,
    logits: Grid2D,
    out: Grid2D,
}

/// Intermediate values of a head forward pass, needed by the backward pass.
#[derive(Debug, Clone)]
pub struct HeadCache {
    branches: Vec<BranchCache>,
}

/// Registers the head parameters under `head.<branch>.*` and returns the
/// module.
pub fn build_head<R: Rng>(spec: &HeadSpec, params: &mut ParamStore, rng: &mut R) -> Result<Head> {
    spec.validate()?;
    let mut branches = Vec::new();
    for (kind, activations) in spec.branches() {
        let name = format!("head.{}", kind.name());
        let conv3 = Conv::build(params, &format!("{name}.conv3"), 3, spec.in_channels, spec.hidden, 1, Init::LeakyFanIn, rng);
        let conv1 = Conv::build(params, &format!("{name}.conv1"), 1, spec.hidden, activations.len(), 1, Init::FanIn, rng);
        let bias = &mut params.tensors[conv1.bias];
        init_bias(kind, spec, bias);
        branches.push(Branch {
            kind,
            conv3,
            conv1,
            activations,
        });
    }
    Ok(Head {
        spec: spec.clone(),
        branches,
    })
}

fn init_bias(kind: BranchKind, spec: &HeadSpec, bias: &mut Tensor) {
    let heat = logit(HEAT_PRIOR);
    let [l, w, h] = spec.size_prior;
    match kind {
        BranchKind::Center | BranchKind::Corner => bias.data.iter_mut().for_each(|b| *b = heat),
        BranchKind::Z => bias.data[0] = spec.z_prior,
        BranchKind::Size => bias.data.copy_from_slice(&[l, w, h]),
        BranchKind::Box => {
            bias.data[2] = spec.z_prior;
            bias.data[3..6].copy_from_slice(&[l, w, h]);
        }
        BranchKind::Offset | BranchKind::Direction => {}
    }
}

impl Head {
    pub fn forward(&self, params: &ParamStore, x: &Grid2D) -> Result<(PredictionMaps, HeadCache)> {
        if x.channels != self.spec.in_channels {
            return Err(Error::Shape(format!(
                "head expects {} input channels, got {}",
                self.spec.in_channels, x.channels
            )));
        }
        let mut caches = Vec::with_capacity(self.branches.len());
        for b in &self.branches {
            let pre = b.conv3.forward(params, x)?;
            let hidden = activate(&pre, Activation::LeakyRelu);
            let logits = b.conv1.forward(params, &hidden)?;
            let out = activate_channels(&logits, &b.activations)?;
            caches.push(BranchCache { pre, hidden, logits, out });
        }
        let (h, w) = (x.height, x.width);
        let mut maps = PredictionMaps {
            center_heat: Grid2D::zeros(h, w, self.spec.num_classes),
            corner_heat: None,
            reg: RegressionMaps::zeros(h, w),
        };
        for (b, c) in self.branches.iter().zip(&caches) {
            let out = c.out.clone();
            match b.kind {
                BranchKind::Center => maps.center_heat = out,
                BranchKind::Corner => maps.corner_heat = Some(out),
                BranchKind::Offset => maps.reg.offset = out,
                BranchKind::Z => maps.reg.z = out,
                BranchKind::Size => maps.reg.size = out,
                BranchKind::Direction => maps.reg.direction = out,
                BranchKind::Box => {
                    maps.reg.offset = out.slice_channels(0, 2);
                    maps.reg.z = out.slice_channels(2, 1);
                    maps.reg.size = out.slice_channels(3, 3);
                    maps.reg.direction = out.slice_channels(6, 2);
                }
            }
        }
        Ok((maps, HeadCache { branches: caches }))
    }

    /// Back-propagates gradients on the head outputs. Parameter gradients
    /// accumulate into `grads`; the return value is the input gradient.
    pub fn backward(
        &self,
        params: &ParamStore,
        x: &Grid2D,
        cache: &HeadCache,
        grad: &PredictionMaps,
        grads: &mut [Tensor],
    ) -> Result<Grid2D> {
        let mut gin = Grid2D::zeros(x.height, x.width, x.channels);
        for (b, c) in self.branches.iter().zip(&cache.branches) {
            let g_out = match b.kind {
                BranchKind::Center => grad.center_heat.clone(),
                BranchKind::Corner => match &grad.corner_heat {
                    Some(g) => g.clone(),
                    None => Grid2D::zeros(c.out.height, c.out.width, c.out.channels),
                },
                BranchKind::Offset => grad.reg.offset.clone(),
                BranchKind::Z => grad.reg.z.clone(),
                BranchKind::Size => grad.reg.size.clone(),
                BranchKind::Direction => grad.reg.direction.clone(),
                BranchKind::Box => Grid2D::concat_channels(&[
                    &grad.reg.offset,
                    &grad.reg.z,
                    &grad.reg.size,
                    &grad.reg.direction,
                ])?,
            };
            let g_logits = activate_channels_backward(&c.logits, &c.out, &g_out, &b.activations)?;
            let g_hidden = b
                .conv1
                .backward(params, &c.hidden, &g_logits, grads, true)?
                .expect("input gradient requested");
            let g_pre = activation_backward(&c.pre, &c.hidden, &g_hidden, Activation::LeakyRelu)?;
            let g_x = b
                .conv3
                .backward(params, x, &g_pre, grads, true)?
                .expect("input gradient requested");
            for (a, v) in gin.data.iter_mut().zip(&g_x.data) {
                *a += v;
            }
        }
        Ok(gin)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::activation::logistic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn split_and_merge_channel_layout() {
        let s = HeadSpec::new(HeadVariant::Split, 8, 2);
        assert_eq!(s.output_channels(), vec![2, 2, 1, 3, 2, 2]);
        let m = HeadSpec::new(HeadVariant::Merge, 8, 2);
        assert_eq!(m.output_channels(), vec![2, 8, 2]);
        assert!("sideways".parse::<HeadVariant>().is_err());
        assert_eq!("Merge".parse::<HeadVariant>().unwrap(), HeadVariant::Merge);
    }

    #[test]
    fn zero_input_gives_bias_heatmap() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for variant in [HeadVariant::Split, HeadVariant::Merge] {
            let mut spec = HeadSpec::new(variant, 4, 2);
            spec.hidden = 8;
            spec.size_prior = [3.9, 1.6, 1.5];
            spec.z_prior = -1.0;
            let mut params = ParamStore::default();
            let head = build_head(&spec, &mut params, &mut rng).unwrap();
            for b in &head.branches {
                params.tensors[b.conv1.kernel].data.iter_mut().for_each(|v| *v = 0.0);
            }
            let (maps, _) = head.forward(&params, &Grid2D::zeros(5, 6, 4)).unwrap();
            maps.validate().unwrap();
            assert!(maps.center_heat.data.iter().all(|&v| (v - logistic(logit(0.01))).abs() < 1e-15));
            assert!(maps.corner_heat.unwrap().data.iter().all(|&v| (v - 0.01).abs() < 1e-12));
            assert_eq!(maps.reg.vector_at(2, 3), [0.5, 0.5, -1.0, 3.9, 1.6, 1.5, 0.0, 0.0]);
        }
    }

    #[test]
    fn corner_branch_optional() {
        let mut spec = HeadSpec::new(HeadVariant::Split, 4, 1);
        spec.corner = false;
        assert_eq!(spec.output_channels(), vec![1, 2, 1, 3, 2]);
        let head = build_head(&spec, &mut ParamStore::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(head.branches.iter().all(|b| b.kind != BranchKind::Corner));
    }
}
