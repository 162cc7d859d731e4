use crate::error::{Error, Result};
use crate::geom::Grid2D;

pub const LEAKY_SLOPE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    LeakyRelu,
    Logistic,
    Tanh,
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`logistic`].
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Logistic => logistic(x),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative at input `x` with output `y = apply(x)`.
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Logistic => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

pub fn activate(x: &Grid2D, kind: Activation) -> Grid2D {
    let mut y = x.clone();
    y.data.iter_mut().for_each(|v| *v = kind.apply(*v));
    y
}

pub fn activation_backward(x: &Grid2D, y: &Grid2D, grad: &Grid2D, kind: Activation) -> Result<Grid2D> {
    x.ensure_shape(y, "activation output")?;
    x.ensure_shape(grad, "activation gradient")?;
    let mut g = grad.clone();
    for ((g, &x), &y) in g.data.iter_mut().zip(&x.data).zip(&y.data) {
        *g *= kind.derivative(x, y);
    }
    Ok(g)
}

/// Applies `kinds[c]` to channel `c`.
pub fn activate_channels(x: &Grid2D, kinds: &[Activation]) -> Result<Grid2D> {
    check_channels(x, kinds)?;
    let mut y = x.clone();
    for px in y.data.chunks_exact_mut(x.channels) {
        for (v, k) in px.iter_mut().zip(kinds) {
            *v = k.apply(*v);
        }
    }
    Ok(y)
}

pub fn activate_channels_backward(x: &Grid2D, y: &Grid2D, grad: &Grid2D, kinds: &[Activation]) -> Result<Grid2D> {
    check_channels(x, kinds)?;
    x.ensure_shape(y, "activation output")?;
    x.ensure_shape(grad, "activation gradient")?;
    let c = x.channels;
    let mut g = grad.clone();
    for ((gp, xp), yp) in g.data.chunks_exact_mut(c).zip(x.data.chunks_exact(c)).zip(y.data.chunks_exact(c)) {
        for i in 0..c {
            gp[i] *= kinds[i].derivative(xp[i], yp[i]);
        }
    }
    Ok(g)
}

fn check_channels(x: &Grid2D, kinds: &[Activation]) -> Result<()> {
    if kinds.len() != x.channels {
        return Err(Error::Shape(format!(
            "{} activations for {} channels",
            kinds.len(),
            x.channels
        )));
    }
    Ok(())
}
