use cartogan_autograd::{Shape, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Direct nested-loop cross-correlation, independent of im2col/GEMM.
fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64], stride: usize, pad: usize) -> Tensor<f64> {
    let xs = x.shape();
    let ws = w.shape();
    let k = ws.h;
    let oh = (xs.h + 2 * pad - k) / stride + 1;
    let ow = (xs.w + 2 * pad - k) / stride + 1;
    let mut out = Tensor::zeros(Shape::new(xs.n, ws.n, oh, ow));
    let os = out.shape();
    for n in 0..xs.n {
        for co in 0..ws.n {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = b[co];
                    for ci in 0..xs.c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy >= 0 && ix >= 0 && (iy as usize) < xs.h && (ix as usize) < xs.w {
                                    acc += x.get(n, ci, iy as usize, ix as usize) * w.get(co, ci, ky, kx);
                                }
                            }
                        }
                    }
                    out.data_mut()[((n * os.c + co) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    out
}

/// Scatter-form transposed convolution.
fn naive_conv_transpose(y: &Tensor<f64>, w: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let ys = y.shape();
    let ws = w.shape();
    let k = ws.h;
    let oh = (ys.h - 1) * stride + k - 2 * pad;
    let ow = (ys.w - 1) * stride + k - 2 * pad;
    let mut out = Tensor::zeros(Shape::new(ys.n, ws.c, oh, ow));
    for n in 0..ys.n {
        for ci in 0..ys.c {
            for iy in 0..ys.h {
                for ix in 0..ys.w {
                    let v = y.get(n, ci, iy, ix);
                    for co in 0..ws.c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let oy = (iy * stride + ky) as isize - pad as isize;
                                let ox = (ix * stride + kx) as isize - pad as isize;
                                if oy >= 0 && ox >= 0 && (oy as usize) < oh && (ox as usize) < ow {
                                    let idx = ((n * ws.c + co) * oh + oy as usize) * ow + ox as usize;
                                    out.data_mut()[idx] += v * w.get(ci, co, ky, kx);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn run_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: Option<&Tensor<f64>>, stride: usize, pad: usize) -> Tensor<f64> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let wv = tape.constant(w.clone());
    let bv = b.map(|b| tape.constant(b.clone()));
    let out = tape.conv2d(xv, wv, bv, stride, pad).unwrap();
    tape.value(out).clone()
}

fn run_conv_t(y: &Tensor<f64>, w: &Tensor<f64>, stride: usize, pad: usize) -> Tensor<f64> {
    let mut tape = Tape::new();
    let yv = tape.constant(y.clone());
    let wv = tape.constant(w.clone());
    let out = tape.conv2d_transpose(yv, wv, None, stride, pad).unwrap();
    tape.value(out).clone()
}

#[test]
fn identity_kernel_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Tensor::<f64>::randn(Shape::new(2, 1, 5, 4), 0.0, 1.0, &mut rng);
    let w = Tensor::full(Shape::new(1, 1, 1, 1), 1.0);
    assert_eq!(run_conv(&x, &w, None, 1, 0), x);
    assert_eq!(run_conv_t(&x, &w, 1, 0), x);
}

#[test]
fn ones_kernel_sums_window() {
    let x = Tensor::<f64>::full(Shape::new(1, 1, 3, 3), 1.0);
    let w = Tensor::full(Shape::new(1, 1, 3, 3), 1.0);
    let out = run_conv(&x, &w, None, 1, 0);
    assert_eq!(out.shape(), Shape::new(1, 1, 1, 1));
    assert_eq!(out.item(), 9.0);
}

#[test]
fn conv_matches_nested_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for &(stride, pad, k) in &[(1, 0, 3), (1, 1, 3), (2, 1, 4), (2, 0, 3), (1, 2, 5)] {
        let x = Tensor::<f64>::randn(Shape::new(2, 3, 8, 8), 0.0, 1.0, &mut rng);
        let w = Tensor::<f64>::randn(Shape::new(4, 3, k, k), 0.0, 1.0, &mut rng);
        let b = Tensor::<f64>::randn(Shape::new(1, 4, 1, 1), 0.0, 1.0, &mut rng);
        let got = run_conv(&x, &w, Some(&b), stride, pad);
        let want = naive_conv(&x, &w, b.data(), stride, pad);
        assert_eq!(got.shape(), want.shape());
        assert!(got.max_abs_diff(&want) < 1e-5, "k={k} s={stride} p={pad}");

        // the f32 training path agrees too
        let mut tape = Tape::<f32>::new();
        let (xv, wv, bv) = (tape.constant(x.cast()), tape.constant(w.cast()), tape.constant(b.cast()));
        let out = tape.conv2d(xv, wv, Some(bv), stride, pad).unwrap();
        assert!(tape.value(out).cast::<f64>().max_abs_diff(&want) < 1e-4);
    }
}

#[test]
fn conv_transpose_matches_scatter_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for &(stride, pad, k) in &[(2, 1, 4), (1, 0, 3), (1, 1, 3), (3, 0, 3)] {
        let y = Tensor::<f64>::randn(Shape::new(2, 3, 5, 4), 0.0, 1.0, &mut rng);
        let w = Tensor::<f64>::randn(Shape::new(3, 2, k, k), 0.0, 1.0, &mut rng);
        let got = run_conv_t(&y, &w, stride, pad);
        let want = naive_conv_transpose(&y, &w, stride, pad);
        assert_eq!(got.shape(), want.shape());
        assert!(got.max_abs_diff(&want) < 1e-9);
    }
}

#[test]
fn stride_two_kernel_four_doubles() {
    let y = Tensor::<f64>::zeros(Shape::new(1, 2, 8, 8));
    let w = Tensor::<f64>::zeros(Shape::new(2, 3, 4, 4));
    assert_eq!(run_conv_t(&y, &w, 2, 1).shape(), Shape::new(1, 3, 16, 16));
}

#[test]
fn shape_formulas_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..40 {
        let k = rng.random_range(1..=5);
        let s = rng.random_range(1..=3);
        let p = rng.random_range(0..=2);
        let h = rng.random_range(k..k + 9);
        let x = Tensor::<f32>::zeros(Shape::new(1, 2, h, h + 1));
        let w = Tensor::<f32>::zeros(Shape::new(3, 2, k, k));
        let mut tape = Tape::new();
        let (xv, wv) = (tape.constant(x), tape.constant(w.clone()));
        let out = tape.conv2d(xv, wv, None, s, p).unwrap();
        let os = tape.shape(out);
        assert_eq!(os.h, (h + 2 * p - k) / s + 1);
        assert_eq!(os.w, (h + 1 + 2 * p - k) / s + 1);
        if (h - 1) * s + k > 2 * p {
            let back = tape.conv2d_transpose(out, wv, None, s, p).unwrap();
            assert_eq!(tape.shape(back).h, (os.h - 1) * s + k - 2 * p);
        }
    }
}

/// <conv(x), y> = <x, convT(y)> with shared weights.
#[test]
fn conv_and_transpose_are_adjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut configs = 0;
    while configs < 20 {
        let k: usize = rng.random_range(1..=5);
        let s = rng.random_range(1..=3);
        let p = rng.random_range(0..k);
        let oh = rng.random_range(1..6);
        let ow = rng.random_range(1..6);
        // input extents for which conv output is exactly (oh, ow)
        let (Some(h), Some(w_)) = (((oh - 1) * s + k).checked_sub(2 * p), ((ow - 1) * s + k).checked_sub(2 * p)) else {
            continue;
        };
        if h == 0 || w_ == 0 {
            continue;
        }
        configs += 1;
        let (ci, co) = (rng.random_range(1..4), rng.random_range(1..4));
        let x = Tensor::<f64>::randn(Shape::new(1, ci, h, w_), 0.0, 1.0, &mut rng);
        let wt = Tensor::<f64>::randn(Shape::new(co, ci, k, k), 0.0, 1.0, &mut rng);
        let cx = run_conv(&x, &wt, None, s, p);
        let y = Tensor::<f64>::randn(cx.shape(), 0.0, 1.0, &mut rng);
        let ty = run_conv_t(&y, &wt, s, p);
        assert_eq!(ty.shape(), x.shape());
        let lhs = cx.dot(&y);
        let rhs = x.dot(&ty);
        assert!((lhs - rhs).abs() <= 1e-4 * lhs.abs().max(rhs.abs()).max(1.0));
    }
}

#[test]
fn conv_rejects_channel_mismatch() {
    let mut tape = Tape::<f32>::new();
    let x = tape.constant(Tensor::zeros(Shape::new(1, 3, 4, 4)));
    let w = tape.constant(Tensor::zeros(Shape::new(2, 2, 3, 3)));
    assert!(tape.conv2d(x, w, None, 1, 0).is_err());
    let w = tape.constant(Tensor::zeros(Shape::new(2, 3, 5, 5)));
    assert!(tape.conv2d(x, w, None, 1, 0).is_err());
    let bad_bias = tape.constant(Tensor::zeros(Shape::new(1, 3, 1, 1)));
    let w = tape.constant(Tensor::zeros(Shape::new(2, 3, 3, 3)));
    assert!(tape.conv2d(x, w, Some(bad_bias), 1, 0).is_err());
    let wt = tape.constant(Tensor::zeros(Shape::new(2, 3, 3, 3)));
    assert!(tape.conv2d_transpose(x, wt, None, 1, 0).is_err());
}
