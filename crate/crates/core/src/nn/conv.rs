use rand::Rng;

use super::tensor::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::geom::Grid2D;

/// `c = a * b + beta * c` for row-major `a: m x k`, `b: k x n`, `c: m x n`,
/// with optional transposition of `a` or `b` given as stored matrices.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, beta: f64, c: &mut [f64]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every access made with these strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Output height and width of a convolution.
pub fn conv_output_size(h: usize, w: usize, k: usize, stride: usize, padding: usize) -> Result<(usize, usize)> {
    if k == 0 || stride == 0 {
        return Err(Error::Shape("kernel size and stride must be >= 1".into()));
    }
    let (ph, pw) = (h + 2 * padding, w + 2 * padding);
    if ph < k || pw < k {
        return Err(Error::Shape(format!(
            "{h}x{w} input with padding {padding} is smaller than a {k}x{k} kernel"
        )));
    }
    Ok(((ph - k) / stride + 1, (pw - k) / stride + 1))
}

fn kernel_dims(kernel: &Tensor, cin: usize) -> Result<(usize, usize)> {
    match kernel.shape[..] {
        [k, k2, ci, co] if k == k2 && ci == cin => Ok((k, co)),
        _ => Err(Error::Shape(format!(
            "kernel {:?} does not fit a {cin}-channel input (want k x k x {cin} x Cout)",
            kernel.shape
        ))),
    }
}

/// Patch matrix with one row per output pixel and columns ordered
/// `(ky, kx, cin)`, matching the kernel layout.
fn im2col(x: &Grid2D, k: usize, stride: usize, padding: usize, ho: usize, wo: usize) -> Vec<f64> {
    let cin = x.channels;
    let kc = k * k * cin;
    let mut cols = vec![0.0; ho * wo * kc];
    for oy in 0..ho {
        for ox in 0..wo {
            let row = &mut cols[(oy * wo + ox) * kc..][..kc];
            for ky in 0..k {
                let iy = (oy * stride + ky) as isize - padding as isize;
                if iy < 0 || iy >= x.height as isize {
                    continue;
                }
                for kx in 0..k {
                    let ix = (ox * stride + kx) as isize - padding as isize;
                    if ix < 0 || ix >= x.width as isize {
                        continue;
                    }
                    let src = x.index(iy as usize, ix as usize, 0);
                    row[(ky * k + kx) * cin..][..cin].copy_from_slice(&x.data[src..src + cin]);
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], out: &mut Grid2D, k: usize, stride: usize, padding: usize, ho: usize, wo: usize) {
    let cin = out.channels;
    let kc = k * k * cin;
    for oy in 0..ho {
        for ox in 0..wo {
            let row = &cols[(oy * wo + ox) * kc..][..kc];
            for ky in 0..k {
                let iy = (oy * stride + ky) as isize - padding as isize;
                if iy < 0 || iy >= out.height as isize {
                    continue;
                }
                for kx in 0..k {
                    let ix = (ox * stride + kx) as isize - padding as isize;
                    if ix < 0 || ix >= out.width as isize {
                        continue;
                    }
                    let dst = out.index(iy as usize, ix as usize, 0);
                    let src = &row[(ky * k + kx) * cin..][..cin];
                    for (o, s) in out.data[dst..dst + cin].iter_mut().zip(src) {
                        *o += s;
                    }
                }
            }
        }
    }
}

fn is_pointwise(k: usize, stride: usize, padding: usize) -> bool {
    k == 1 && stride == 1 && padding == 0
}

/// Cross-correlation of an `H x W x Cin` input with a `k x k x Cin x Cout`
/// kernel, zero padding, optional per-output-channel bias.
pub fn conv2d(input: &Grid2D, kernel: &Tensor, bias: Option<&Tensor>, stride: usize, padding: usize) -> Result<Grid2D> {
    let (k, cout) = kernel_dims(kernel, input.channels)?;
    let (ho, wo) = conv_output_size(input.height, input.width, k, stride, padding)?;
    let mut out = Grid2D::zeros(ho, wo, cout);
    if let Some(b) = bias {
        if b.len() != cout {
            return Err(Error::Shape(format!("bias has {} values for {cout} channels", b.len())));
        }
        for px in out.data.chunks_exact_mut(cout) {
            px.copy_from_slice(&b.data);
        }
    }
    let kc = k * k * input.channels;
    if is_pointwise(k, stride, padding) {
        gemm(ho * wo, kc, cout, &input.data, false, &kernel.data, false, 1.0, &mut out.data);
    } else {
        let cols = im2col(input, k, stride, padding, ho, wo);
        gemm(ho * wo, kc, cout, &cols, false, &kernel.data, false, 1.0, &mut out.data);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Grid2D,
    pub kernel: Tensor,
    pub bias: Tensor,
}

/// Gradients of a loss with respect to the input, kernel and bias of
/// [`conv2d`], given the gradient at its output.
pub fn conv2d_backward(
    input: &Grid2D,
    kernel: &Tensor,
    grad_out: &Grid2D,
    stride: usize,
    padding: usize,
) -> Result<ConvGrads> {
    let mut g = ConvGrads {
        input: Grid2D::zeros(input.height, input.width, input.channels),
        kernel: kernel.zeros_like(),
        bias: Tensor::zeros(&[kernel.shape.last().copied().unwrap_or(0)]),
    };
    conv2d_backward_into(input, kernel, grad_out, stride, padding, &mut g.kernel, &mut g.bias, Some(&mut g.input))?;
    Ok(g)
}

/// Accumulates kernel and bias gradients into the given tensors and, if
/// requested, writes the input gradient.
#[allow(clippy::too_many_arguments)]
fn conv2d_backward_into(
    input: &Grid2D,
    kernel: &Tensor,
    grad_out: &Grid2D,
    stride: usize,
    padding: usize,
    grad_kernel: &mut Tensor,
    grad_bias: &mut Tensor,
    grad_input: Option<&mut Grid2D>,
) -> Result<()> {
    let (k, cout) = kernel_dims(kernel, input.channels)?;
    let (ho, wo) = conv_output_size(input.height, input.width, k, stride, padding)?;
    if grad_out.shape() != (ho, wo, cout) {
        return Err(Error::Shape(format!(
            "output gradient is {:?}, expected ({ho}, {wo}, {cout})",
            grad_out.shape()
        )));
    }
    let kc = k * k * input.channels;
    let p = ho * wo;
    for px in grad_out.data.chunks_exact(cout) {
        for (b, g) in grad_bias.data.iter_mut().zip(px) {
            *b += g;
        }
    }
    let pointwise = is_pointwise(k, stride, padding);
    let cols_owned;
    let cols: &[f64] = if pointwise {
        &input.data
    } else {
        cols_owned = im2col(input, k, stride, padding, ho, wo);
        &cols_owned
    };
    gemm(kc, p, cout, cols, true, &grad_out.data, false, 1.0, &mut grad_kernel.data);
    if let Some(gin) = grad_input {
        if pointwise {
            gemm(p, cout, kc, &grad_out.data, false, &kernel.data, true, 0.0, &mut gin.data);
        } else {
            let mut gcols = vec![0.0; p * kc];
            gemm(p, cout, kc, &grad_out.data, false, &kernel.data, true, 0.0, &mut gcols);
            gin.data.iter_mut().for_each(|v| *v = 0.0);
            col2im(&gcols, gin, k, stride, padding, ho, wo);
        }
    }
    Ok(())
}

/// How a freshly built convolution draws its kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform with bound `sqrt(6 / ((1 + slope^2) * fan_in))`, for layers
    /// followed by a leaky ReLU.
    LeakyFanIn,
    /// Uniform with bound `1 / sqrt(fan_in)`.
    FanIn,
    Zeros,
}

/// A convolution layer whose kernel and bias live in a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub k: usize,
    pub cin: usize,
    pub cout: usize,
    pub stride: usize,
    pub padding: usize,
}

impl Conv {
    /// Registers a `k x k` convolution under `name.kernel` / `name.bias`.
    #[allow(clippy::too_many_arguments)]
    pub fn build<R: Rng>(
        params: &mut ParamStore,
        name: &str,
        k: usize,
        cin: usize,
        cout: usize,
        stride: usize,
        init: Init,
        rng: &mut R,
    ) -> Self {
        let fan_in = (k * k * cin) as f64;
        let bound = match init {
            Init::LeakyFanIn => (6.0 / ((1.0 + super::LEAKY_SLOPE * super::LEAKY_SLOPE) * fan_in)).sqrt(),
            Init::FanIn => 1.0 / fan_in.sqrt(),
            Init::Zeros => 0.0,
        };
        let mut kernel = Tensor::zeros(&[k, k, cin, cout]);
        if bound > 0.0 {
            for v in &mut kernel.data {
                *v = rng.gen_range(-bound..bound);
            }
        }
        Self {
            kernel: params.add(format!("{name}.kernel"), kernel),
            bias: params.add(format!("{name}.bias"), Tensor::zeros(&[cout])),
            k,
            cin,
            cout,
            stride,
            padding: k / 2,
        }
    }

    pub fn forward(&self, params: &ParamStore, x: &Grid2D) -> Result<Grid2D> {
        conv2d(x, params.get(self.kernel), Some(params.get(self.bias)), self.stride, self.padding)
    }

    /// Accumulates parameter gradients into `grads` and returns the input
    /// gradient when `need_input` is set.
    pub fn backward(
        &self,
        params: &ParamStore,
        x: &Grid2D,
        grad_out: &Grid2D,
        grads: &mut [Tensor],
        need_input: bool,
    ) -> Result<Option<Grid2D>> {
        let (gk, gb) = two_mut(grads, self.kernel, self.bias);
        let mut gin = need_input.then(|| Grid2D::zeros(x.height, x.width, x.channels));
        conv2d_backward_into(
            x,
            params.get(self.kernel),
            grad_out,
            self.stride,
            self.padding,
            gk,
            gb,
            gin.as_mut(),
        )?;
        Ok(gin)
    }
}

fn two_mut(v: &mut [Tensor], a: usize, b: usize) -> (&mut Tensor, &mut Tensor) {
    assert!(a < b, "kernel is registered before bias");
    let (lo, hi) = v.split_at_mut(b);
    (&mut lo[a], &mut hi[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn direct(input: &Grid2D, kernel: &Tensor, stride: usize, padding: usize) -> Grid2D {
        let (k, cout) = (kernel.shape[0], kernel.shape[3]);
        let cin = input.channels;
        let (ho, wo) = conv_output_size(input.height, input.width, k, stride, padding).unwrap();
        let mut out = Grid2D::zeros(ho, wo, cout);
        for oy in 0..ho {
            for ox in 0..wo {
                for co in 0..cout {
                    let mut s = 0.0;
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - padding as isize;
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if iy < 0 || ix < 0 || iy >= input.height as isize || ix >= input.width as isize {
                                continue;
                            }
                            for ci in 0..cin {
                                s += input.get(iy as usize, ix as usize, ci)
                                    * kernel.data[((ky * k + kx) * cin + ci) * cout + co];
                            }
                        }
                    }
                    out.set(oy, ox, co, s);
                }
            }
        }
        out
    }

    fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Grid2D {
        let data = (0..h * w * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Grid2D::from_vec(h, w, c, data).unwrap()
    }

    #[test]
    fn identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_grid(&mut rng, 4, 5, 3);
        let mut k = Tensor::zeros(&[1, 1, 3, 3]);
        for c in 0..3 {
            k.data[c * 3 + c] = 1.0;
        }
        assert_eq!(conv2d(&x, &k, None, 1, 0).unwrap(), x);
    }

    #[test]
    fn ones_kernel_on_one_hot() {
        let mut x = Grid2D::zeros(5, 5, 1);
        x.set(2, 2, 0, 1.0);
        let k = Tensor::from_vec(&[3, 3, 1, 1], vec![1.0; 9]).unwrap();
        let y = conv2d(&x, &k, None, 1, 1).unwrap();
        for r in 0..5 {
            for c in 0..5 {
                let want = if (1..=3).contains(&r) && (1..=3).contains(&c) { 1.0 } else { 0.0 };
                assert_eq!(y.get(r, c, 0), want);
            }
        }
    }

    #[test]
    fn matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for &(h, w, cin, cout, k, s, p) in &[(7, 6, 3, 4, 3, 1, 1), (8, 9, 2, 5, 3, 2, 1), (5, 5, 4, 2, 1, 1, 0), (6, 7, 2, 3, 1, 2, 0)] {
            let x = random_grid(&mut rng, h, w, cin);
            let kern = Tensor::from_vec(&[k, k, cin, cout], (0..k * k * cin * cout).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let got = conv2d(&x, &kern, None, s, p).unwrap();
            let want = direct(&x, &kern, s, p);
            for (a, b) in got.data.iter().zip(&want.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let x = Grid2D::zeros(4, 4, 2);
        assert!(conv2d(&x, &Tensor::zeros(&[3, 3, 3, 1]), None, 1, 1).is_err());
        assert!(conv2d(&x, &Tensor::zeros(&[3, 3, 2, 1]), Some(&Tensor::zeros(&[2])), 1, 1).is_err());
        assert!(conv2d(&Grid2D::zeros(1, 1, 2), &Tensor::zeros(&[3, 3, 2, 1]), None, 1, 0).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (h, w, cin, cout, k, s, p) = (6, 5, 2, 3, 3, 2, 1);
        let x = random_grid(&mut rng, h, w, cin);
        let kern = Tensor::from_vec(&[k, k, cin, cout], (0..k * k * cin * cout).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let y = conv2d(&x, &kern, None, s, p).unwrap();
        let wts = random_grid(&mut rng, y.height, y.width, y.channels);
        let loss = |x: &Grid2D, kk: &Tensor| -> f64 {
            let y = conv2d(x, kk, None, s, p).unwrap();
            y.data.iter().zip(&wts.data).map(|(a, b)| a * b).sum()
        };
        let g = conv2d_backward(&x, &kern, &wts, s, p).unwrap();
        let e = 1e-6;
        for i in 0..x.data.len() {
            let (mut a, mut b) = (x.clone(), x.clone());
            a.data[i] += e;
            b.data[i] -= e;
            let fd = (loss(&a, &kern) - loss(&b, &kern)) / (2.0 * e);
            assert!((fd - g.input.data[i]).abs() < 1e-7);
        }
        for i in 0..kern.data.len() {
            let (mut a, mut b) = (kern.clone(), kern.clone());
            a.data[i] += e;
            b.data[i] -= e;
            let fd = (loss(&x, &a) - loss(&x, &b)) / (2.0 * e);
            assert!((fd - g.kernel.data[i]).abs() < 1e-7);
        }
        let bias_sum: Vec<f64> = (0..cout).map(|c| (0..y.height * y.width).map(|i| wts.data[i * cout + c]).sum()).collect();
        for c in 0..cout {
            assert!((bias_sum[c] - g.bias.data[c]).abs() < 1e-12);
        }
    }
}
