//! 3D convolution via im2col + GEMM, with the matching backward passes.

use ndarray::{Array2, ArrayD, ArrayViewD, Ix4, Ix5};

/// GEMM outputs can come back in non-standard layout for degenerate shapes
/// (single-voxel outputs); normalize before reshaping or slicing.
fn standardize<F: Scalar>(a: Array2<F>) -> Array2<F> {
    if a.is_standard_layout() {
        a
    } else {
        a.as_standard_layout().into_owned()
    }
}

use super::Scalar;

/// Output spatial size of a convolution along one axis.
#[inline]
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

/// Unfolds `x` (Cin, D, H, W) into a (Cin·k³, Do·Ho·Wo) matrix.
fn im2col<F: Scalar>(
    x: &[F],
    cin: usize,
    dims: [usize; 3],
    k: usize,
    stride: [usize; 3],
    pad: usize,
    out: [usize; 3],
) -> Array2<F> {
    let [d, h, w] = dims;
    let [od, oh, ow] = out;
    let n = od * oh * ow;
    let mut col = Array2::<F>::zeros((cin * k * k * k, n));
    let col_s = col.as_slice_mut().expect("freshly allocated");
    for c in 0..cin {
        let x_c = &x[c * d * h * w..(c + 1) * d * h * w];
        for kz in 0..k {
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((c * k + kz) * k + ky) * k + kx;
                    let dst_row = &mut col_s[row * n..(row + 1) * n];
                    for oz in 0..od {
                        let iz = (oz * stride[0] + kz) as isize - pad as isize;
                        if iz < 0 || iz >= d as isize {
                            continue;
                        }
                        for oy in 0..oh {
                            let iy = (oy * stride[1] + ky) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let dst_base = (oz * oh + oy) * ow;
                            let src_base = (iz as usize * h + iy as usize) * w;
                            // valid ox range: 0 <= ox*s + kx - pad < w
                            let lo = pad.saturating_sub(kx).div_ceil(stride[2]);
                            let hi_excl = (w + pad - kx + stride[2] - 1) / stride[2];
                            let hi = hi_excl.min(ow);
                            if stride[2] == 1 {
                                let ix0 = (lo + kx) as isize - pad as isize;
                                debug_assert!(ix0 >= 0);
                                let len = hi.saturating_sub(lo);
                                if len > 0 {
                                    dst_row[dst_base + lo..dst_base + lo + len].copy_from_slice(
                                        &x_c[src_base + ix0 as usize
                                            ..src_base + ix0 as usize + len],
                                    );
                                }
                            } else {
                                for ox in lo..hi {
                                    let ix = ox * stride[2] + kx - pad;
                                    dst_row[dst_base + ox] = x_c[src_base + ix];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    col
}

/// Folds a (Cin·k³, N) gradient matrix back onto the input, accumulating
/// overlapping contributions. Exact adjoint of [`im2col`].
fn col2im_accumulate<F: Scalar>(
    col: &Array2<F>,
    cin: usize,
    dims: [usize; 3],
    k: usize,
    stride: [usize; 3],
    pad: usize,
    out: [usize; 3],
    dx: &mut [F],
) {
    let [d, h, w] = dims;
    let [od, oh, ow] = out;
    let n = od * oh * ow;
    let col_s = col.as_slice().expect("standard layout");
    for c in 0..cin {
        let dx_c = &mut dx[c * d * h * w..(c + 1) * d * h * w];
        for kz in 0..k {
            for ky in 0..k {
                for kx in 0..k {
                    let row = ((c * k + kz) * k + ky) * k + kx;
                    let src_row = &col_s[row * n..(row + 1) * n];
                    for oz in 0..od {
                        let iz = (oz * stride[0] + kz) as isize - pad as isize;
                        if iz < 0 || iz >= d as isize {
                            continue;
                        }
                        for oy in 0..oh {
                            let iy = (oy * stride[1] + ky) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let src_base = (oz * oh + oy) * ow;
                            let dst_base = (iz as usize * h + iy as usize) * w;
                            let lo = pad.saturating_sub(kx).div_ceil(stride[2]);
                            let hi = ((w + pad - kx + stride[2] - 1) / stride[2]).min(ow);
                            if stride[2] == 1 && hi > lo {
                                let ix0 = lo + kx - pad;
                                let dst = &mut dx_c[dst_base + ix0..dst_base + ix0 + hi - lo];
                                let src = &src_row[src_base + lo..src_base + hi];
                                for (d, &s) in dst.iter_mut().zip(src.iter()) {
                                    *d = *d + s;
                                }
                            } else {
                                for ox in lo..hi {
                                    let ix = ox * stride[2] + kx - pad;
                                    dx_c[dst_base + ix] =
                                        dx_c[dst_base + ix] + src_row[src_base + ox];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Forward 3D convolution. `x`: (Cin, D, H, W); `w`: (Cout, Cin, k, k, k).
pub fn conv3d_forward<F: Scalar>(
    x: &ArrayViewD<'_, F>,
    w: &ArrayViewD<'_, F>,
    b: Option<&ArrayViewD<'_, F>>,
    stride: [usize; 3],
    pad: usize,
) -> ArrayD<F> {
    let xs = x.view().into_dimensionality::<Ix4>().expect("x is 4-d");
    let ws = w.view().into_dimensionality::<Ix5>().expect("w is 5-d");
    let (cin, d, h, ww) = xs.dim();
    let (cout, cin_w, k, _, _) = ws.dim();
    assert_eq!(cin, cin_w, "channel mismatch");
    let out = [
        conv_out_dim(d, k, stride[0], pad),
        conv_out_dim(h, k, stride[1], pad),
        conv_out_dim(ww, k, stride[2], pad),
    ];
    let x_slice = xs.as_slice().expect("standard layout");
    let col = im2col(x_slice, cin, [d, h, ww], k, stride, pad, out);
    let wmat = ws
        .into_shape_with_order((cout, cin * k * k * k))
        .expect("weight reshape");
    let mut y = standardize(wmat.dot(&col)); // (Cout, N)
    if let Some(b) = b {
        let bs = b.as_slice().expect("bias contiguous");
        for (mut row, &bv) in y.rows_mut().into_iter().zip(bs.iter()) {
            row.mapv_inplace(|v| v + bv);
        }
    }
    y.into_shape_with_order(ndarray::IxDyn(&[cout, out[0], out[1], out[2]]))
        .expect("output reshape")
        .into_owned()
}

/// Gradients of a 3D convolution: `(dx, dw, db)`. `dx` is skipped when the
/// caller does not need it (`with_dx = false`).
pub fn conv3d_backward<F: Scalar>(
    grad_out: &ArrayViewD<'_, F>,
    x: &ArrayViewD<'_, F>,
    w: &ArrayViewD<'_, F>,
    stride: [usize; 3],
    pad: usize,
    with_bias: bool,
    with_dx: bool,
) -> (Option<ArrayD<F>>, ArrayD<F>, Option<ArrayD<F>>) {
    let xs = x.view().into_dimensionality::<Ix4>().expect("x is 4-d");
    let ws = w.view().into_dimensionality::<Ix5>().expect("w is 5-d");
    let gs = grad_out.view().into_dimensionality::<Ix4>().expect("grad is 4-d");
    let (cin, d, h, ww) = xs.dim();
    let (cout, _, k, _, _) = ws.dim();
    let (gc, god, goh, gow) = gs.dim();
    assert_eq!(gc, cout);
    let out = [god, goh, gow];
    let n = god * goh * gow;

    let g_mat = gs
        .into_shape_with_order((cout, n))
        .expect("grad reshape");
    let x_slice = xs.as_slice().expect("standard layout");
    let col = im2col(x_slice, cin, [d, h, ww], k, stride, pad, out);

    // dW = g · colᵀ
    let dw = standardize(g_mat.dot(&col.t()));
    let dw = dw
        .into_shape_with_order(ndarray::IxDyn(&[cout, cin, k, k, k]))
        .expect("dw reshape")
        .into_owned();

    // db = row sums of g
    let db = if with_bias {
        let mut db = ndarray::Array1::<F>::zeros(cout);
        for (dst, row) in db.iter_mut().zip(g_mat.rows()) {
            *dst = row.fold(F::zero(), |a, &v| a + v);
        }
        Some(db.into_dyn())
    } else {
        None
    };

    // dX = col2im(wᵀ · g)
    let dx = if with_dx {
        let wmat = ws
            .into_shape_with_order((cout, cin * k * k * k))
            .expect("weight reshape");
        let col_grad = standardize(wmat.t().dot(&g_mat)); // (Cin·k³, N)
        let mut dx = vec![F::zero(); cin * d * h * ww];
        col2im_accumulate(&col_grad, cin, [d, h, ww], k, stride, pad, out, &mut dx);
        Some(ArrayD::from_shape_vec(ndarray::IxDyn(&[cin, d, h, ww]), dx).expect("dx shape"))
    } else {
        None
    };
    (dx, dw, db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{ArrayD, IxDyn};
    use rand::prelude::*;
    use rand_distr::StandardNormal;

    fn randn(shape: &[usize], rng: &mut impl Rng) -> ArrayD<f64> {
        ArrayD::from_shape_simple_fn(IxDyn(shape), || rng.sample(StandardNormal))
    }

    /// Direct 7-loop convolution oracle.
    fn conv_oracle(
        x: &ArrayD<f64>,
        w: &ArrayD<f64>,
        b: Option<&ArrayD<f64>>,
        stride: [usize; 3],
        pad: usize,
    ) -> ArrayD<f64> {
        let (cin, d, h, ww) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (cout, k) = (w.shape()[0], w.shape()[2]);
        let od = conv_out_dim(d, k, stride[0], pad);
        let oh = conv_out_dim(h, k, stride[1], pad);
        let ow = conv_out_dim(ww, k, stride[2], pad);
        let mut y = ArrayD::zeros(IxDyn(&[cout, od, oh, ow]));
        for co in 0..cout {
            for oz in 0..od {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut acc = b.map(|b| b[[co]]).unwrap_or(0.0);
                        for ci in 0..cin {
                            for kz in 0..k {
                                for ky in 0..k {
                                    for kx in 0..k {
                                        let iz = (oz * stride[0] + kz) as isize - pad as isize;
                                        let iy = (oy * stride[1] + ky) as isize - pad as isize;
                                        let ix = (ox * stride[2] + kx) as isize - pad as isize;
                                        if iz >= 0
                                            && iy >= 0
                                            && ix >= 0
                                            && (iz as usize) < d
                                            && (iy as usize) < h
                                            && (ix as usize) < ww
                                        {
                                            acc += x
                                                [[ci, iz as usize, iy as usize, ix as usize]]
                                                * w[[co, ci, kz, ky, kx]];
                                        }
                                    }
                                }
                            }
                        }
                        y[[co, oz, oy, ox]] = acc;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn forward_matches_loop_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for (k, pad, stride) in [
            (3, 1, [1, 1, 1]),
            (3, 1, [2, 2, 2]),
            (3, 1, [1, 2, 2]),
            (1, 0, [1, 1, 1]),
        ] {
            let x = randn(&[3, 6, 6, 6], &mut rng);
            let w = randn(&[4, 3, k, k, k], &mut rng);
            let b = randn(&[4], &mut rng);
            let got = conv3d_forward(&x.view(), &w.view(), Some(&b.view()), stride, pad);
            let want = conv_oracle(&x, &w, Some(&b), stride, pad);
            assert_eq!(got.shape(), want.shape());
            for (g, wv) in got.iter().zip(want.iter()) {
                assert!((g - wv).abs() < 1e-12, "k={k} stride={stride:?}");
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for (k, pad, stride) in [(3, 1, [1, 1, 1]), (3, 1, [2, 1, 2]), (1, 0, [1, 1, 1])] {
            let x = randn(&[2, 4, 5, 4], &mut rng);
            let w = randn(&[3, 2, k, k, k], &mut rng);
            let b = randn(&[3], &mut rng);
            let y = conv3d_forward(&x.view(), &w.view(), Some(&b.view()), stride, pad);
            // Scalar objective: weighted sum of outputs with fixed weights.
            let c = randn(y.shape(), &mut rng);
            let (dx, dw, db) =
                conv3d_backward(&c.view(), &x.view(), &w.view(), stride, pad, true, true);
            let dx = dx.unwrap();
            let f = |x: &ArrayD<f64>, w: &ArrayD<f64>, b: &ArrayD<f64>| -> f64 {
                let y = conv3d_forward(&x.view(), &w.view(), Some(&b.view()), stride, pad);
                (&y * &c).sum()
            };
            let h = 1e-6;
            // Spot-check a sample of coordinates in each tensor.
            let mut check = |arr: &ArrayD<f64>, grad: &ArrayD<f64>, which: usize| {
                let len = arr.len();
                for t in 0..8.min(len) {
                    let idx = (t * 7919) % len;
                    let mut ap = arr.clone();
                    let mut am = arr.clone();
                    ap.as_slice_mut().unwrap()[idx] += h;
                    am.as_slice_mut().unwrap()[idx] -= h;
                    let (fp, fm) = match which {
                        0 => (f(&ap, &w, &b), f(&am, &w, &b)),
                        1 => (f(&x, &ap, &b), f(&x, &am, &b)),
                        _ => (f(&x, &w, &ap), f(&x, &w, &am)),
                    };
                    let fd = (fp - fm) / (2.0 * h);
                    let an = grad.as_slice().unwrap()[idx];
                    assert!(
                        (fd - an).abs() <= 1e-5 * (1.0 + fd.abs().max(an.abs())),
                        "which={which} idx={idx}: fd={fd} analytic={an}"
                    );
                }
            };
            check(&x, &dx, 0);
            check(&w, &dw, 1);
            check(&b, &db.unwrap(), 2);
        }
    }
}
