//! Forward and backward kernels on raw buffers.
//!
//! The tape owns bookkeeping; everything here is a pure function of its
//! slices so the oracles in the test suite can target single kernels.

use crate::element::Element;

/// Geometry of one strided, zero-padded square-kernel window sweep.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn rows(&self) -> usize {
        self.channels * self.k * self.k
    }

    pub fn cols(&self) -> usize {
        self.oh * self.ow
    }
}

/// Output extent of a convolution, or `None` when the kernel does not fit.
pub(crate) fn conv_out(size: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    if stride == 0 || padded < k {
        return None;
    }
    Some((padded - k) / stride + 1)
}

/// Output extent of a transposed convolution.
pub(crate) fn conv_transpose_out(size: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    if size == 0 || stride == 0 {
        return None;
    }
    ((size - 1) * stride + k).checked_sub(2 * pad).filter(|&v| v > 0)
}

/// Unfolds one image `[channels, h, w]` into `[channels*k*k, oh*ow]`.
pub(crate) fn im2col<T: Element>(img: &[T], g: &ConvGeom, col: &mut [T]) {
    let cols = g.cols();
    for c in 0..g.channels {
        let plane = &img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for kh in 0..g.k {
            for kw in 0..g.k {
                let row = (c * g.k + kh) * g.k + kw;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + kh) as isize - g.pad as isize;
                    let out_row = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        out_row.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in out_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kw) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.w as isize { T::zero() } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-adds columns back into `img`.
pub(crate) fn col2im<T: Element>(col: &[T], g: &ConvGeom, img: &mut [T]) {
    let cols = g.cols();
    for c in 0..g.channels {
        let plane = &mut img[c * g.h * g.w..(c + 1) * g.h * g.w];
        for kh in 0..g.k {
            for kw in 0..g.k {
                let row = (c * g.k + kh) * g.k + kw;
                let src = &col[row * cols..(row + 1) * cols];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + kh) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kw) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid<T: Element>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Numerically stable `max(l,0) - l*t + ln(1 + exp(-|l|))`.
#[inline]
pub(crate) fn bce_logit<T: Element>(l: T, t: T) -> T {
    l.max(T::zero()) - l * t + (-l.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_extent_formulas() {
        assert_eq!(conv_out(64, 4, 2, 1), Some(32));
        assert_eq!(conv_out(3, 3, 1, 0), Some(1));
        assert_eq!(conv_out(2, 3, 1, 0), None);
        assert_eq!(conv_transpose_out(32, 4, 2, 1), Some(64));
        assert_eq!(conv_transpose_out(5, 1, 1, 0), Some(5));
    }

    #[test]
    fn bce_at_zero_logit_is_ln2() {
        assert!((bce_logit(0.0f64, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce_logit(0.0f64, 0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        // large logits stay finite
        assert!(bce_logit(1e4f32, 0.0).is_finite());
        assert!(bce_logit(-1e4f32, 1.0).is_finite());
    }
}
