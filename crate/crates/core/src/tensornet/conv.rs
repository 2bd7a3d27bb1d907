//! im2col + GEMM kernels for cubic-kernel 3D (transposed) convolution.
//!
//! Both operators share one geometry: a convolution maps a "big" grid with
//! `c_big` channels to a "small" grid with `c_small` channels; the transposed
//! convolution maps small back to big. The weight matrix is always
//! `[c_small, c_big * k^3]`, which is `[out, in, k, k, k]` for a convolution
//! and `[in, out, k, k, k]` for a transposed convolution.

use super::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Geometry {
    pub c_big: usize,
    pub c_small: usize,
    pub big: [usize; 3],
    pub small: [usize; 3],
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

/// Output side of a convolution, `None` when the kernel does not fit.
pub fn conv_output_side(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || input + 2 * pad < k {
        return None;
    }
    Some((input + 2 * pad - k) / stride + 1)
}

/// Output side of a transposed convolution with `output_padding = stride - 1`.
pub fn conv_transpose_output_side(input: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || input == 0 {
        return None;
    }
    let out = ((input - 1) * stride + k + stride - 1).checked_sub(2 * pad)?;
    // The forward convolution with the same parameters must map back.
    (conv_output_side(out, k, stride, pad) == Some(input)).then_some(out)
}

impl Geometry {
    pub fn big_len(&self) -> usize {
        self.big.iter().product()
    }

    pub fn small_len(&self) -> usize {
        self.small.iter().product()
    }

    pub fn col_rows(&self) -> usize {
        self.c_big * self.k * self.k * self.k
    }

    /// Valid output index range along one axis for kernel tap `kt`.
    #[inline]
    fn valid(&self, axis: usize, kt: usize) -> (usize, usize) {
        let (s, p, big, small) = (self.stride, self.pad, self.big[axis], self.small[axis]);
        let lo = if p > kt { (p - kt).div_ceil(s) } else { 0 };
        let hi = if big + p > kt {
            ((big - 1 + p - kt) / s + 1).min(small)
        } else {
            0
        };
        (lo.min(small), hi.max(lo.min(small)))
    }

    /// `col[(c, kd, kh, kw), o] = big[c, o * s + kt - p]` (zero outside).
    pub fn im2col<T: Scalar>(&self, big: &[T], col: &mut [T]) {
        let k = self.k;
        let [bd, bh, bw] = self.big;
        let [_, sh, sw] = self.small;
        let s = self.stride;
        let small_len = self.small_len();
        debug_assert_eq!(big.len(), self.c_big * self.big_len());
        debug_assert_eq!(col.len(), self.col_rows() * small_len);
        for c in 0..self.c_big {
            let plane = &big[c * bd * bh * bw..(c + 1) * bd * bh * bw];
            for kd in 0..k {
                let (d_lo, d_hi) = self.valid(0, kd);
                for kh in 0..k {
                    let (h_lo, h_hi) = self.valid(1, kh);
                    for kw in 0..k {
                        let (w_lo, w_hi) = self.valid(2, kw);
                        let row = ((c * k + kd) * k + kh) * k + kw;
                        let dst = &mut col[row * small_len..(row + 1) * small_len];
                        dst.fill(T::zero());
                        for od in d_lo..d_hi {
                            let id = od * s + kd - self.pad;
                            for oh in h_lo..h_hi {
                                let ih = oh * s + kh - self.pad;
                                let src = &plane[(id * bh + ih) * bw..(id * bh + ih + 1) * bw];
                                let out = &mut dst[(od * sh + oh) * sw..(od * sh + oh + 1) * sw];
                                if s == 1 {
                                    let off = w_lo + kw - self.pad;
                                    out[w_lo..w_hi].copy_from_slice(&src[off..off + (w_hi - w_lo)]);
                                } else {
                                    for ow in w_lo..w_hi {
                                        out[ow] = src[ow * s + kw - self.pad];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Geometry::im2col`]: scatters `col` back and accumulates into `big`.
    pub fn col2im<T: Scalar>(&self, col: &[T], big: &mut [T]) {
        let k = self.k;
        let [bd, bh, bw] = self.big;
        let [_, sh, sw] = self.small;
        let s = self.stride;
        let small_len = self.small_len();
        for c in 0..self.c_big {
            let plane = &mut big[c * bd * bh * bw..(c + 1) * bd * bh * bw];
            for kd in 0..k {
                let (d_lo, d_hi) = self.valid(0, kd);
                for kh in 0..k {
                    let (h_lo, h_hi) = self.valid(1, kh);
                    for kw in 0..k {
                        let (w_lo, w_hi) = self.valid(2, kw);
                        let row = ((c * k + kd) * k + kh) * k + kw;
                        let src = &col[row * small_len..(row + 1) * small_len];
                        for od in d_lo..d_hi {
                            let id = od * s + kd - self.pad;
                            for oh in h_lo..h_hi {
                                let ih = oh * s + kh - self.pad;
                                let dst = &mut plane[(id * bh + ih) * bw..(id * bh + ih + 1) * bw];
                                let inp = &src[(od * sh + oh) * sw..(od * sh + oh + 1) * sw];
                                if s == 1 {
                                    let off = w_lo + kw - self.pad;
                                    for (d, &v) in dst[off..off + (w_hi - w_lo)].iter_mut().zip(&inp[w_lo..w_hi]) {
                                        *d += v;
                                    }
                                } else {
                                    for ow in w_lo..w_hi {
                                        dst[ow * s + kw - self.pad] += inp[ow];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Row-major GEMM `c = a' * b' + beta * c` where `'` applies the transpose flags.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_trans: bool,
    b: &[T],
    b_trans: bool,
    beta: T,
    c: &mut [T],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above bound every access by the strides chosen.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
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

/// Convolution forward for one batch item: `out[c_small, small]`.
pub(crate) fn conv_forward<T: Scalar>(
    g: &Geometry,
    x: &[T],
    w: &[T],
    bias: Option<&[T]>,
    col: &mut Vec<T>,
    out: &mut [T],
) {
    col.resize(g.col_rows() * g.small_len(), T::zero());
    g.im2col(x, col);
    gemm(
        g.c_small,
        g.col_rows(),
        g.small_len(),
        w,
        false,
        col,
        false,
        T::zero(),
        out,
    );
    if let Some(b) = bias {
        add_channel_bias(out, b, g.small_len());
    }
}

/// Transposed convolution forward for one batch item: `out[c_big, big]`.
pub(crate) fn conv_transpose_forward<T: Scalar>(
    g: &Geometry,
    x: &[T],
    w: &[T],
    bias: Option<&[T]>,
    col: &mut Vec<T>,
    out: &mut [T],
) {
    col.resize(g.col_rows() * g.small_len(), T::zero());
    gemm(
        g.col_rows(),
        g.c_small,
        g.small_len(),
        w,
        true,
        x,
        false,
        T::zero(),
        col,
    );
    out.fill(T::zero());
    g.col2im(col, out);
    if let Some(b) = bias {
        add_channel_bias(out, b, g.big_len());
    }
}

/// Accumulates data and weight gradients of a convolution for one item.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<T: Scalar>(
    g: &Geometry,
    x: &[T],
    w: &[T],
    gout: &[T],
    gx: Option<&mut [T]>,
    gw: Option<&mut [T]>,
    col: &mut Vec<T>,
) {
    col.resize(g.col_rows() * g.small_len(), T::zero());
    if let Some(gw) = gw {
        g.im2col(x, col);
        gemm(
            g.c_small,
            g.small_len(),
            g.col_rows(),
            gout,
            false,
            col,
            true,
            T::one(),
            gw,
        );
    }
    if let Some(gx) = gx {
        gemm(
            g.col_rows(),
            g.c_small,
            g.small_len(),
            w,
            true,
            gout,
            false,
            T::zero(),
            col,
        );
        g.col2im(col, gx);
    }
}

/// Accumulates data and weight gradients of a transposed convolution.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_transpose_backward<T: Scalar>(
    g: &Geometry,
    x: &[T],
    w: &[T],
    gout: &[T],
    gx: Option<&mut [T]>,
    gw: Option<&mut [T]>,
    col: &mut Vec<T>,
) {
    if gx.is_none() && gw.is_none() {
        return;
    }
    col.resize(g.col_rows() * g.small_len(), T::zero());
    g.im2col(gout, col);
    if let Some(gx) = gx {
        gemm(
            g.c_small,
            g.col_rows(),
            g.small_len(),
            w,
            false,
            col,
            false,
            T::one(),
            gx,
        );
    }
    if let Some(gw) = gw {
        gemm(
            g.c_small,
            g.small_len(),
            g.col_rows(),
            x,
            false,
            col,
            true,
            T::one(),
            gw,
        );
    }
}

fn add_channel_bias<T: Scalar>(out: &mut [T], bias: &[T], plane: usize) {
    for (c, &b) in bias.iter().enumerate() {
        for v in &mut out[c * plane..(c + 1) * plane] {
            *v += b;
        }
    }
}

/// Per-channel sums of `gout` accumulated into `gb`.
pub(crate) fn bias_backward<T: Scalar>(gout: &[T], gb: &mut [T], plane: usize) {
    for (c, b) in gb.iter_mut().enumerate() {
        let s: f64 = gout[c * plane..(c + 1) * plane].iter().map(|v| v.f64()).sum();
        *b += T::of(s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_sides() {
        assert_eq!(conv_output_side(16, 3, 2, 1), Some(8));
        assert_eq!(conv_output_side(16, 3, 1, 1), Some(16));
        assert_eq!(conv_output_side(1, 3, 1, 0), None);
        assert_eq!(conv_transpose_output_side(4, 3, 2, 1), Some(8));
        assert_eq!(conv_transpose_output_side(8, 3, 2, 1), Some(16));
        assert_eq!(conv_transpose_output_side(5, 3, 1, 1), Some(5));
    }

    #[test]
    fn im2col_col2im_are_adjoint() {
        use rand::Rng;
        let g = Geometry {
            c_big: 2,
            c_small: 3,
            big: [5, 6, 7],
            small: [3, 3, 4],
            k: 3,
            stride: 2,
            pad: 1,
        };
        let mut rng = crate::seed::rng(5);
        let x: Vec<f64> = (0..g.c_big * g.big_len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let y: Vec<f64> = (0..g.col_rows() * g.small_len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let mut col = vec![0.0; y.len()];
        g.im2col(&x, &mut col);
        let mut back = vec![0.0; x.len()];
        g.col2im(&y, &mut back);
        let lhs: f64 = col.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
