//! Forward kernels shared by the tape and the tape-free inference path.

use super::Array;
use crate::error::{Error, Result};

/// `c = op(a)·op(b) + beta·c` on row-major buffers.
///
/// `a` is stored `[m,k]`, or `[k,m]` when `trans_a`; `b` is stored `[k,n]`,
/// or `[n,k]` when `trans_b`; `c` is `[m,n]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if trans_a { (1, m) } else { (k, 1) };
    let (rsb, csb) = if trans_b { (1, k) } else { (n, 1) };
    // SAFETY: the asserts above bound every access dgemm makes through
    // these strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a stride-1, zero-padded ("same") convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub h: usize,
    pub w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub cout: usize,
}

impl ConvGeom {
    pub fn new(input: &[usize], kernel: &[usize]) -> Result<Self> {
        if input.len() != 3 || kernel.len() != 4 {
            return Err(Error::shape(format!(
                "conv2d wants input [h,w,cin] and kernel [kh,kw,cin,cout], got {input:?} and {kernel:?}"
            )));
        }
        let g = ConvGeom {
            h: input[0],
            w: input[1],
            cin: input[2],
            kh: kernel[0],
            kw: kernel[1],
            cout: kernel[3],
        };
        if kernel[2] != g.cin {
            return Err(Error::shape(format!(
                "conv2d channel mismatch: input has {} channels, kernel expects {}",
                g.cin, kernel[2]
            )));
        }
        if g.kh % 2 == 0 || g.kw % 2 == 0 {
            return Err(Error::shape(format!(
                "conv2d kernel extents must be odd, got {}x{}",
                g.kh, g.kw
            )));
        }
        Ok(g)
    }

    pub fn patch(&self) -> usize {
        self.kh * self.kw * self.cin
    }

    pub fn pixels(&self) -> usize {
        self.h * self.w
    }

    pub fn in_len(&self) -> usize {
        self.pixels() * self.cin
    }

    pub fn out_len(&self) -> usize {
        self.pixels() * self.cout
    }

    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let (ph, pw) = (self.kh / 2, self.kw / 2);
        let patch = self.patch();
        for y in 0..self.h {
            for xx in 0..self.w {
                let row = &mut cols[(y * self.w + xx) * patch..][..patch];
                for dy in 0..self.kh {
                    let iy = (y + dy).wrapping_sub(ph);
                    for dx in 0..self.kw {
                        let ix = (xx + dx).wrapping_sub(pw);
                        let dst = &mut row[(dy * self.kw + dx) * self.cin..][..self.cin];
                        if iy < self.h && ix < self.w {
                            dst.copy_from_slice(&x[(iy * self.w + ix) * self.cin..][..self.cin]);
                        } else {
                            dst.fill(0.0);
                        }
                    }
                }
            }
        }
    }

    fn col2im_add(&self, cols: &[f64], dx_img: &mut [f64]) {
        let (ph, pw) = (self.kh / 2, self.kw / 2);
        let patch = self.patch();
        for y in 0..self.h {
            for xx in 0..self.w {
                let row = &cols[(y * self.w + xx) * patch..][..patch];
                for dy in 0..self.kh {
                    let iy = (y + dy).wrapping_sub(ph);
                    if iy >= self.h {
                        continue;
                    }
                    for dx in 0..self.kw {
                        let ix = (xx + dx).wrapping_sub(pw);
                        if ix >= self.w {
                            continue;
                        }
                        let src = &row[(dy * self.kw + dx) * self.cin..][..self.cin];
                        let dst = &mut dx_img[(iy * self.w + ix) * self.cin..][..self.cin];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }

    /// `out[i] = conv(x[i], kernel)` for `n` images; `out` is overwritten.
    pub fn forward(&self, n: usize, x: &[f64], kernel: &[f64], out: &mut [f64]) {
        let mut cols = vec![0.0; self.pixels() * self.patch()];
        for i in 0..n {
            self.im2col(&x[i * self.in_len()..][..self.in_len()], &mut cols);
            gemm(
                self.pixels(),
                self.patch(),
                self.cout,
                &cols,
                false,
                kernel,
                false,
                0.0,
                &mut out[i * self.out_len()..][..self.out_len()],
            );
        }
    }

    /// Accumulates input and/or kernel gradients given the output gradient `g`.
    pub fn backward(
        &self,
        n: usize,
        x: &[f64],
        kernel: &[f64],
        g: &[f64],
        mut dx: Option<&mut [f64]>,
        mut dk: Option<&mut [f64]>,
    ) {
        let mut cols = vec![0.0; self.pixels() * self.patch()];
        let mut dcols = vec![0.0; self.pixels() * self.patch()];
        for i in 0..n {
            let gi = &g[i * self.out_len()..][..self.out_len()];
            if let Some(dk) = dk.as_deref_mut() {
                self.im2col(&x[i * self.in_len()..][..self.in_len()], &mut cols);
                // dK[p,c] += Σ_pixels cols[pix,p] g[pix,c]
                gemm(
                    self.patch(),
                    self.pixels(),
                    self.cout,
                    &cols,
                    true,
                    gi,
                    false,
                    1.0,
                    dk,
                );
            }
            if let Some(dx) = dx.as_deref_mut() {
                gemm(
                    self.pixels(),
                    self.cout,
                    self.patch(),
                    gi,
                    false,
                    kernel,
                    true,
                    0.0,
                    &mut dcols,
                );
                self.col2im_add(&dcols, &mut dx[i * self.in_len()..][..self.in_len()]);
            }
        }
    }
}

/// Splits an activation extent into (batch, per-image extents), accepting
/// either a single `[h,w,c]` image or a `[n,h,w,c]` batch.
fn split_batch(extents: &[usize]) -> Result<(usize, [usize; 3], bool)> {
    match *extents {
        [h, w, c] => Ok((1, [h, w, c], false)),
        [n, h, w, c] => Ok((n, [h, w, c], true)),
        _ => Err(Error::shape(format!(
            "expected [h,w,c] or [n,h,w,c], got {extents:?}"
        ))),
    }
}

fn with_batch(batched: bool, n: usize, rest: &[usize]) -> Vec<usize> {
    let mut e = Vec::with_capacity(rest.len() + 1);
    if batched {
        e.push(n);
    }
    e.extend_from_slice(rest);
    e
}

/// Same-padded, stride-1 2-D convolution over `[h,w,cin]` or `[n,h,w,cin]`.
pub fn conv2d(input: &Array, kernel: &Array, bias: &Array) -> Result<Array> {
    let (n, img, batched) = split_batch(input.extents())?;
    let geom = ConvGeom::new(&img, kernel.extents())?;
    if bias.extents() != [geom.cout] {
        return Err(Error::shape(format!(
            "conv2d bias must be [{}], got {:?}",
            geom.cout,
            bias.extents()
        )));
    }
    let mut out = vec![0.0; n * geom.out_len()];
    geom.forward(n, input.data(), kernel.data(), &mut out);
    add_channel_bias(&mut out, bias.data());
    Array::new(with_batch(batched, n, &[geom.h, geom.w, geom.cout]), out)
}

pub(crate) fn add_channel_bias(out: &mut [f64], bias: &[f64]) {
    for row in out.chunks_exact_mut(bias.len()) {
        for (o, b) in row.iter_mut().zip(bias) {
            *o += b;
        }
    }
}

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
/// Also returns, per output value, the flat input index it came from.
pub(crate) fn maxpool_with_argmax(input: &Array) -> Result<(Array, Vec<usize>)> {
    let (n, [h, w, c], batched) = split_batch(input.extents())?;
    if h < 2 || w < 2 {
        return Err(Error::shape(format!(
            "maxpool2d needs spatial extent >= 2x2, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(n * oh * ow * c);
    let mut arg = Vec::with_capacity(out.capacity());
    for i in 0..n {
        let base = i * h * w * c;
        for y in 0..oh {
            for xx in 0..ow {
                for ch in 0..c {
                    let mut best = usize::MAX;
                    for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                        let idx = base + ((2 * y + dy) * w + 2 * xx + dx) * c + ch;
                        if best == usize::MAX || x[idx] > x[best] {
                            best = idx;
                        }
                    }
                    out.push(x[best]);
                    arg.push(best);
                }
            }
        }
    }
    Ok((Array::new(with_batch(batched, n, &[oh, ow, c]), out)?, arg))
}

pub fn maxpool2d(input: &Array) -> Result<Array> {
    maxpool_with_argmax(input).map(|(a, _)| a)
}

/// `input·weight + bias`, row-wise.
pub fn dense_affine(input: &Array, weight: &Array, bias: &Array) -> Result<Array> {
    let (n, din) = match *input.extents() {
        [n, d] => (n, d),
        _ => return Err(Error::shape(format!("dense input must be 2-D, got {:?}", input.extents()))),
    };
    let dout = match *weight.extents() {
        [d, o] if d == din => o,
        _ => {
            return Err(Error::shape(format!(
                "dense weight {:?} incompatible with input width {din}",
                weight.extents()
            )))
        }
    };
    if bias.extents() != [dout] {
        return Err(Error::shape(format!(
            "dense bias must be [{dout}], got {:?}",
            bias.extents()
        )));
    }
    let mut out = vec![0.0; n * dout];
    gemm(n, din, dout, input.data(), false, weight.data(), false, 0.0, &mut out);
    add_channel_bias(&mut out, bias.data());
    Array::new(vec![n, dout], out)
}

pub fn relu(input: &Array) -> Array {
    input.map(|x| x.max(0.0))
}

/// Row-wise softmax with max subtraction.
pub fn softmax(logits: &Array) -> Result<Array> {
    if logits.ndim() != 2 {
        return Err(Error::shape(format!(
            "softmax wants [n,N] logits, got {:?}",
            logits.extents()
        )));
    }
    if logits.data().iter().any(|x| x.is_nan()) {
        return Err(Error::numeric("softmax received a NaN logit"));
    }
    let cols = logits.extents()[1];
    let mut out = logits.data().to_vec();
    for row in out.chunks_exact_mut(cols.max(1)) {
        softmax_in_place(row);
    }
    Array::new(logits.extents().to_vec(), out)
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arr(extents: &[usize], data: &[f64]) -> Array {
        Array::new(extents.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let input = Array::new(vec![5, 5, 1], (0..25).map(f64::from).collect()).unwrap();
        let mut k = Array::zeros(&[3, 3, 1, 1]);
        k.set(&[1, 1, 0, 0], 1.0);
        let out = conv2d(&input, &k, &Array::zeros(&[1])).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn one_by_one_kernel_scales() {
        let input = arr(&[2, 2, 1], &[1., 2., 3., 4.]);
        let out = conv2d(&input, &arr(&[1, 1, 1, 1], &[2.0]), &Array::zeros(&[1])).unwrap();
        assert_eq!(out.data(), &[2., 4., 6., 8.]);
    }

    #[test]
    fn zero_padding_counts_in_bounds_taps() {
        let input = Array::full(&[3, 3, 1], 1.0);
        let k = Array::full(&[3, 3, 1, 1], 1.0);
        let out = conv2d(&input, &k, &Array::zeros(&[1])).unwrap();
        assert_eq!(out.data(), &[4., 6., 4., 6., 9., 6., 4., 6., 4.]);
    }

    #[test]
    fn conv_channel_mismatch_is_shape_error() {
        let input = Array::zeros(&[4, 4, 2]);
        let k = Array::zeros(&[3, 3, 1, 4]);
        assert!(matches!(
            conv2d(&input, &k, &Array::zeros(&[4])),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn conv_matches_direct_sum_with_channels() {
        // Direct quadruple loop as an oracle for the im2col path.
        let (h, w, cin, cout) = (4, 5, 2, 3);
        let input = Array::new(
            vec![h, w, cin],
            (0..h * w * cin).map(|i| ((i * 7) % 11) as f64 - 5.0).collect(),
        )
        .unwrap();
        let kernel = Array::new(
            vec![3, 3, cin, cout],
            (0..9 * cin * cout).map(|i| ((i * 5) % 7) as f64 / 7.0 - 0.4).collect(),
        )
        .unwrap();
        let bias = arr(&[cout], &[0.1, -0.2, 0.3]);
        let out = conv2d(&input, &kernel, &bias).unwrap();
        for y in 0..h {
            for x in 0..w {
                for co in 0..cout {
                    let mut s = bias.data()[co];
                    for dy in 0..3 {
                        for dx in 0..3 {
                            let (iy, ix) = (y as isize + dy as isize - 1, x as isize + dx as isize - 1);
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            for ci in 0..cin {
                                s += input.get(&[iy as usize, ix as usize, ci])
                                    * kernel.get(&[dy, dx, ci, co]);
                            }
                        }
                    }
                    assert!((out.get(&[y, x, co]) - s).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn maxpool_single_window() {
        let out = maxpool2d(&arr(&[2, 2, 1], &[1., 2., 3., 4.])).unwrap();
        assert_eq!(out.extents(), &[1, 1, 1]);
        assert_eq!(out.data(), &[4.0]);
    }

    #[test]
    fn maxpool_drops_odd_trailing_row() {
        let out = maxpool2d(&arr(&[3, 3, 1], &[1., 2., 0., 3., 4., 0., 99., 99., 99.])).unwrap();
        assert_eq!(out.data(), &[4.0]);
    }

    #[test]
    fn maxpool_matches_window_scan() {
        let vals: Vec<f64> = (0..16).map(|i| ((i * 7) % 16) as f64).collect();
        let input = arr(&[4, 4, 1], &vals);
        let out = maxpool2d(&input).unwrap();
        for oy in 0..2 {
            for ox in 0..2 {
                let mut m = f64::MIN;
                for y in 2 * oy..2 * oy + 2 {
                    for x in 2 * ox..2 * ox + 2 {
                        m = m.max(input.get(&[y, x, 0]));
                    }
                }
                assert_eq!(out.get(&[oy, ox, 0]), m);
            }
        }
    }

    #[test]
    fn maxpool_rejects_tiny_inputs() {
        assert!(maxpool2d(&Array::zeros(&[1, 4, 1])).is_err());
    }

    #[test]
    fn dense_examples() {
        let eye = arr(&[2, 2], &[1., 0., 0., 1.]);
        let x = arr(&[1, 2], &[1., 2.]);
        assert_eq!(dense_affine(&x, &eye, &Array::zeros(&[2])).unwrap().data(), &[1., 2.]);
        assert_eq!(
            dense_affine(&x, &eye, &arr(&[2], &[1., 1.])).unwrap().data(),
            &[2., 3.]
        );
        let zero = Array::zeros(&[3, 2]);
        let b = arr(&[2], &[0.5, -1.5]);
        let out = dense_affine(&zero, &eye, &b).unwrap();
        assert_eq!(out.data(), &[0.5, -1.5, 0.5, -1.5, 0.5, -1.5]);
        assert!(dense_affine(&x, &Array::zeros(&[3, 2]), &Array::zeros(&[2])).is_err());
    }

    #[test]
    fn relu_examples() {
        assert_eq!(relu(&arr(&[2], &[-1., 2.])).data(), &[0., 2.]);
        assert_eq!(relu(&arr(&[3], &[-1., -2., -0.5])).data(), &[0., 0., 0.]);
        let nonneg = arr(&[3], &[0., 1., 2.5]);
        assert_eq!(relu(&nonneg), nonneg);
    }

    #[test]
    fn softmax_examples() {
        let u = softmax(&arr(&[1, 4], &[0., 0., 0., 0.])).unwrap();
        assert_eq!(u.data(), &[0.25; 4]);
        let p = softmax(&arr(&[1, 2], &[2f64.ln(), 0.])).unwrap();
        assert!((p.data()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.data()[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            softmax(&arr(&[1, 2], &[f64::NAN, 0.])),
            Err(Error::Numeric(_))
        ));
    }
}
