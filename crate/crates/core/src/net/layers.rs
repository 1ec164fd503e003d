//! Convolution, pooling and head primitives with explicit backward passes.
//!
//! Convolutions run as strip-wise im2col + GEMM so the column buffer stays
//! bounded at high resolutions.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, Array4, ArrayView2, Axis};

pub(crate) fn out_side(in_side: usize, k: usize, stride: usize, pad: usize) -> usize {
    (in_side + 2 * pad - k) / stride + 1
}

const STRIP_POSITIONS: usize = 8192;

/// Writes the im2col matrix for output rows `r0..r1` into `cols`
/// (row-major, `in_ch * k * k` rows by `(r1 - r0) * wo` columns).
#[allow(clippy::too_many_arguments)]
fn fill_cols(
    cols: &mut [f64],
    x: &Array3<f64>,
    r0: usize,
    r1: usize,
    wo: usize,
    k: usize,
    stride: usize,
    pad: usize,
) {
    let (in_ch, h, w) = x.dim();
    let xs = x.as_slice().expect("contiguous input");
    let ncols = (r1 - r0) * wo;
    let pad = pad as isize;
    for i in 0..in_ch {
        for ky in 0..k {
            for kx in 0..k {
                let row = (i * k + ky) * k + kx;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                let mut j = 0usize;
                for r in r0..r1 {
                    let sy = (r * stride + ky) as isize - pad;
                    if sy < 0 || sy >= h as isize {
                        dst[j..j + wo].fill(0.0);
                        j += wo;
                        continue;
                    }
                    let src = &xs[(i * h + sy as usize) * w..(i * h + sy as usize + 1) * w];
                    let off = kx as isize - pad;
                    if stride == 1 {
                        // In-range output columns form one contiguous run.
                        let left = (-off).max(0) as usize;
                        let stop = (w as isize - off).clamp(0, wo as isize) as usize;
                        dst[j..j + left.min(wo)].fill(0.0);
                        if stop > left {
                            dst[j + left..j + stop].copy_from_slice(
                                &src[(left as isize + off) as usize..][..stop - left],
                            );
                        }
                        if stop < wo {
                            dst[j + stop..j + wo].fill(0.0);
                        }
                        j += wo;
                    } else {
                        for c in 0..wo {
                            let sx = (c * stride) as isize + off;
                            dst[j] = if sx >= 0 && sx < w as isize {
                                src[sx as usize]
                            } else {
                                0.0
                            };
                            j += 1;
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds an im2col-layout gradient back onto the input image.
#[allow(clippy::too_many_arguments)]
fn scatter_cols(
    dcols: &[f64],
    dx: &mut Array3<f64>,
    r0: usize,
    r1: usize,
    wo: usize,
    k: usize,
    stride: usize,
    pad: usize,
) {
    let (in_ch, h, w) = dx.dim();
    let dxs = dx.as_slice_mut().expect("contiguous gradient");
    let ncols = (r1 - r0) * wo;
    let pad = pad as isize;
    for i in 0..in_ch {
        for ky in 0..k {
            for kx in 0..k {
                let row = (i * k + ky) * k + kx;
                let src = &dcols[row * ncols..(row + 1) * ncols];
                let mut j = 0usize;
                for r in r0..r1 {
                    let sy = (r * stride + ky) as isize - pad;
                    if sy < 0 || sy >= h as isize {
                        j += wo;
                        continue;
                    }
                    let dst = &mut dxs[(i * h + sy as usize) * w..(i * h + sy as usize + 1) * w];
                    let off = kx as isize - pad;
                    if stride == 1 {
                        let left = (-off).max(0) as usize;
                        let stop = (w as isize - off).clamp(0, wo as isize) as usize;
                        for c in left..stop {
                            dst[(c as isize + off) as usize] += src[j + c];
                        }
                        j += wo;
                    } else {
                        for c in 0..wo {
                            let sx = (c * stride) as isize + off;
                            if sx >= 0 && sx < w as isize {
                                dst[sx as usize] += src[j];
                            }
                            j += 1;
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation of `x` (`[in, h, w]`) with `weight`
/// (`[out, in, k, k]`) plus bias; no activation applied.
pub(crate) fn conv_forward(
    x: &Array3<f64>,
    weight: &Array4<f64>,
    bias: &Array1<f64>,
    stride: usize,
    pad: usize,
) -> Array3<f64> {
    let (in_ch, h, w) = x.dim();
    let (out_ch, wic, k, _) = weight.dim();
    assert_eq!(in_ch, wic, "channel mismatch");
    let ho = out_side(h, k, stride, pad);
    let wo = out_side(w, k, stride, pad);
    let ikk = in_ch * k * k;
    let w_mat = weight.to_shape((out_ch, ikk)).expect("contiguous weight");

    let mut out_mat = Array2::<f64>::zeros((out_ch, ho * wo));
    let strip_rows = (STRIP_POSITIONS / wo).clamp(1, ho);
    let mut cols = vec![0.0f64; ikk * strip_rows * wo];
    let mut r0 = 0;
    while r0 < ho {
        let r1 = (r0 + strip_rows).min(ho);
        let ncols = (r1 - r0) * wo;
        fill_cols(&mut cols[..ikk * ncols], x, r0, r1, wo, k, stride, pad);
        let cols_view =
            ArrayView2::from_shape((ikk, ncols), &cols[..ikk * ncols]).expect("cols buffer shape");
        let mut out_slice = out_mat.slice_mut(s![.., (r0 * wo)..(r1 * wo)]);
        general_mat_mul(1.0, &w_mat.view(), &cols_view, 0.0, &mut out_slice);
        r0 = r1;
    }
    for o in 0..out_ch {
        let b = bias[o];
        out_mat.row_mut(o).mapv_inplace(|v| v + b);
    }
    out_mat
        .into_shape_with_order((out_ch, ho, wo))
        .expect("conv output reshape")
}

/// Gradients of a convolution given `dpre` (gradient at the pre-activation
/// output). Returns `(d_weight, d_bias, d_input)`; `d_input` is skipped when
/// the caller does not need it (first layer).
pub(crate) fn conv_backward(
    x: &Array3<f64>,
    weight: &Array4<f64>,
    dpre: &Array3<f64>,
    stride: usize,
    pad: usize,
    need_dx: bool,
) -> (Array4<f64>, Array1<f64>, Option<Array3<f64>>) {
    let (in_ch, h, w) = x.dim();
    let (out_ch, _, k, _) = weight.dim();
    let (dc, ho, wo) = dpre.dim();
    assert_eq!(dc, out_ch);
    let ikk = in_ch * k * k;

    let db = dpre.sum_axis(Axis(2)).sum_axis(Axis(1));
    let w_mat = weight.to_shape((out_ch, ikk)).expect("contiguous weight");
    let dy_mat = dpre.to_shape((out_ch, ho * wo)).expect("contiguous dpre");

    let mut dw_mat = Array2::<f64>::zeros((out_ch, ikk));
    let mut dx = need_dx.then(|| Array3::<f64>::zeros((in_ch, h, w)));

    let strip_rows = (STRIP_POSITIONS / wo).clamp(1, ho);
    let mut cols = vec![0.0f64; ikk * strip_rows * wo];
    let mut dcols = vec![0.0f64; ikk * strip_rows * wo];
    let mut r0 = 0;
    while r0 < ho {
        let r1 = (r0 + strip_rows).min(ho);
        let ncols = (r1 - r0) * wo;
        fill_cols(&mut cols[..ikk * ncols], x, r0, r1, wo, k, stride, pad);
        let cols_view =
            ArrayView2::from_shape((ikk, ncols), &cols[..ikk * ncols]).expect("cols shape");
        let dy_slice = dy_mat.slice(s![.., (r0 * wo)..(r1 * wo)]);
        general_mat_mul(1.0, &dy_slice, &cols_view.t(), 1.0, &mut dw_mat.view_mut());

        if let Some(dx) = dx.as_mut() {
            let dcols_buf = &mut dcols[..ikk * ncols];
            {
                let mut dcols_view =
                    ndarray::ArrayViewMut2::from_shape((ikk, ncols), &mut *dcols_buf)
                        .expect("dcols shape");
                general_mat_mul(1.0, &w_mat.view().t(), &dy_slice, 0.0, &mut dcols_view);
            }
            scatter_cols(dcols_buf, dx, r0, r1, wo, k, stride, pad);
        }
        r0 = r1;
    }

    let dw = dw_mat
        .into_shape_with_order((out_ch, in_ch, k, k))
        .expect("weight grad reshape");
    (dw, db, dx)
}

/// 2x2 stride-2 max-pool. Input sides must be even. The returned argmax map
/// stores the winning position inside each 2x2 block (`dy * 2 + dx`); ties go
/// to the earliest position.
pub(crate) fn maxpool2_forward(x: &Array3<f64>) -> (Array3<f64>, Array3<u8>) {
    let (ch, h, w) = x.dim();
    assert!(h % 2 == 0 && w % 2 == 0, "pool input must have even sides");
    let (ho, wo) = (h / 2, w / 2);
    let mut y = Array3::zeros((ch, ho, wo));
    let mut arg = Array3::zeros((ch, ho, wo));
    for c in 0..ch {
        for r in 0..ho {
            for q in 0..wo {
                let mut best = f64::NEG_INFINITY;
                let mut best_at = 0u8;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let v = x[(c, 2 * r + dy, 2 * q + dx)];
                        if v > best {
                            best = v;
                            best_at = (dy * 2 + dx) as u8;
                        }
                    }
                }
                y[(c, r, q)] = best;
                arg[(c, r, q)] = best_at;
            }
        }
    }
    (y, arg)
}

pub(crate) fn maxpool2_backward(
    dy: &Array3<f64>,
    arg: &Array3<u8>,
    in_h: usize,
    in_w: usize,
) -> Array3<f64> {
    let (ch, ho, wo) = dy.dim();
    let mut dx = Array3::zeros((ch, in_h, in_w));
    for c in 0..ch {
        for r in 0..ho {
            for q in 0..wo {
                let a = arg[(c, r, q)] as usize;
                dx[(c, 2 * r + a / 2, 2 * q + a % 2)] += dy[(c, r, q)];
            }
        }
    }
    dx
}

/// Mean across channels at every spatial position.
pub(crate) fn channel_mean(x: &Array3<f64>) -> Array2<f64> {
    let ch = x.dim().0 as f64;
    x.sum_axis(Axis(0)) / ch
}

pub(crate) fn channel_mean_backward(dz: &Array2<f64>, channels: usize) -> Array3<f64> {
    let (h, w) = dz.dim();
    let scaled = dz / channels as f64;
    let mut dx = Array3::zeros((channels, h, w));
    for c in 0..channels {
        dx.index_axis_mut(Axis(0), c).assign(&scaled);
    }
    dx
}

/// Softmax over all spatial positions, stabilized by max subtraction.
pub(crate) fn spatial_softmax(z: &Array2<f64>) -> Array2<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp = z.mapv(|v| (v - max).exp());
    let sum = exp.sum();
    exp / sum
}

/// Gradient through the spatial softmax:
/// `dz = p * (dp - sum(dp * p))`.
pub(crate) fn spatial_softmax_backward(p: &Array2<f64>, dp: &Array2<f64>) -> Array2<f64> {
    let inner: f64 = p.iter().zip(dp.iter()).map(|(&a, &b)| a * b).sum();
    let mut dz = Array2::zeros(p.raw_dim());
    for ((o, &pv), &gv) in dz.iter_mut().zip(p.iter()).zip(dp.iter()) {
        *o = pv * (gv - inner);
    }
    dz
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_array3(rng: &mut ChaCha8Rng, dim: (usize, usize, usize)) -> Array3<f64> {
        Array3::from_shape_fn(dim, |_| rng.random_range(-1.0..1.0))
    }

    /// Direct quadruple-loop convolution, the oracle for the GEMM path.
    fn conv_naive(
        x: &Array3<f64>,
        weight: &Array4<f64>,
        bias: &Array1<f64>,
        stride: usize,
        pad: usize,
    ) -> Array3<f64> {
        let (in_ch, h, w) = x.dim();
        let (out_ch, _, k, _) = weight.dim();
        let ho = out_side(h, k, stride, pad);
        let wo = out_side(w, k, stride, pad);
        let mut y = Array3::zeros((out_ch, ho, wo));
        for o in 0..out_ch {
            for r in 0..ho {
                for q in 0..wo {
                    let mut acc = bias[o];
                    for i in 0..in_ch {
                        for ky in 0..k {
                            for kx in 0..k {
                                let sy = (r * stride + ky) as isize - pad as isize;
                                let sx = (q * stride + kx) as isize - pad as isize;
                                if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                                    acc +=
                                        x[(i, sy as usize, sx as usize)] * weight[(o, i, ky, kx)];
                                }
                            }
                        }
                    }
                    y[(o, r, q)] = acc;
                }
            }
        }
        y
    }

    #[test]
    fn conv_forward_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for &(in_ch, out_ch, hw, k, stride, pad) in &[
            (3usize, 4usize, 11usize, 3usize, 1usize, 1usize),
            (2, 3, 8, 2, 2, 0),
            (1, 1, 56, 3, 1, 1),
            (4, 2, 14, 2, 2, 0),
        ] {
            let x = random_array3(&mut rng, (in_ch, hw, hw));
            let weight =
                Array4::from_shape_fn((out_ch, in_ch, k, k), |_| rng.random_range(-1.0..1.0));
            let bias = Array1::from_shape_fn(out_ch, |_| rng.random_range(-0.5..0.5));
            let fast = conv_forward(&x, &weight, &bias, stride, pad);
            let slow = conv_naive(&x, &weight, &bias, stride, pad);
            let diff = (&fast - &slow).iter().fold(0.0f64, |a, v| a.max(v.abs()));
            assert!(diff < 1e-12, "k{k} s{stride} p{pad}: diff {diff}");
        }
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        conv_backward_fd_case(2, 3, 6, 3, 1, 1);
        conv_backward_fd_case(3, 2, 8, 2, 2, 0);
    }

    fn conv_backward_fd_case(
        in_ch: usize,
        out_ch: usize,
        hw: usize,
        k: usize,
        stride: usize,
        pad: usize,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let x = random_array3(&mut rng, (in_ch, hw, hw));
        let weight = Array4::from_shape_fn((out_ch, in_ch, k, k), |_| rng.random_range(-1.0..1.0));
        let bias = Array1::from_shape_fn(out_ch, |_| rng.random_range(-0.5..0.5));
        // Scalar objective: weighted sum of outputs.
        let so = out_side(hw, k, stride, pad);
        let w_out = random_array3(&mut rng, (out_ch, so, so));
        let objective = |xx: &Array3<f64>, ww: &Array4<f64>, bb: &Array1<f64>| -> f64 {
            (conv_forward(xx, ww, bb, stride, pad) * &w_out).sum()
        };

        let (dw, db, dx) = conv_backward(&x, &weight, &w_out, stride, pad, true);
        let dx = dx.unwrap();
        let h = 1e-6;

        for _ in 0..20 {
            let idx = (
                rng.random_range(0..out_ch),
                rng.random_range(0..in_ch),
                rng.random_range(0..k),
                rng.random_range(0..k),
            );
            let mut wp = weight.clone();
            let mut wm = weight.clone();
            wp[idx] += h;
            wm[idx] -= h;
            let fd = (objective(&x, &wp, &bias) - objective(&x, &wm, &bias)) / (2.0 * h);
            assert!((fd - dw[idx]).abs() < 1e-6, "dw at {idx:?}");
        }
        for o in 0..out_ch {
            let mut bp = bias.clone();
            let mut bm = bias.clone();
            bp[o] += h;
            bm[o] -= h;
            let fd = (objective(&x, &weight, &bp) - objective(&x, &weight, &bm)) / (2.0 * h);
            assert!((fd - db[o]).abs() < 1e-6, "db at {o}");
        }
        for _ in 0..20 {
            let idx = (
                rng.random_range(0..in_ch),
                rng.random_range(0..hw),
                rng.random_range(0..hw),
            );
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[idx] += h;
            xm[idx] -= h;
            let fd = (objective(&xp, &weight, &bias) - objective(&xm, &weight, &bias)) / (2.0 * h);
            assert!((fd - dx[idx]).abs() < 1e-6, "dx at {idx:?}");
        }
    }

    #[test]
    fn maxpool_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let x = random_array3(&mut rng, (3, 8, 8));
        let (y, arg) = maxpool2_forward(&x);
        assert_eq!(y.dim(), (3, 4, 4));
        // Every pooled value is the max of its block.
        for c in 0..3 {
            for r in 0..4 {
                for q in 0..4 {
                    let mut m = f64::NEG_INFINITY;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            m = m.max(x[(c, 2 * r + dy, 2 * q + dx)]);
                        }
                    }
                    assert_eq!(y[(c, r, q)], m);
                }
            }
        }
        // Backward routes gradient only to the winners.
        let dy = random_array3(&mut rng, (3, 4, 4));
        let dx = maxpool2_backward(&dy, &arg, 8, 8);
        assert_eq!(dx.iter().filter(|v| **v != 0.0).count(), 3 * 4 * 4);
        assert!((dx.sum() - dy.sum()).abs() < 1e-12);
    }

    #[test]
    fn softmax_normalizes_and_backward_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let z = Array2::from_shape_fn((5, 5), |_| rng.random_range(-3.0..3.0));
        let p = spatial_softmax(&z);
        assert!((p.sum() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));

        let dp = Array2::from_shape_fn((5, 5), |_| rng.random_range(-1.0..1.0));
        let dz = spatial_softmax_backward(&p, &dp);
        let h = 1e-7;
        for _ in 0..15 {
            let idx = (rng.random_range(0..5), rng.random_range(0..5));
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[idx] += h;
            zm[idx] -= h;
            let obj = |zz: &Array2<f64>| (spatial_softmax(zz) * &dp).sum();
            let fd = (obj(&zp) - obj(&zm)) / (2.0 * h);
            assert!((fd - dz[idx]).abs() < 1e-6, "dz at {idx:?}");
        }
    }

    #[test]
    fn channel_mean_and_backward() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = random_array3(&mut rng, (4, 3, 3));
        let z = channel_mean(&x);
        assert!((z[(1, 2)] - (0..4).map(|c| x[(c, 1, 2)]).sum::<f64>() / 4.0).abs() < 1e-12);
        let dz = Array2::from_shape_fn((3, 3), |_| rng.random_range(-1.0..1.0));
        let dx = channel_mean_backward(&dz, 4);
        assert!((dx[(2, 0, 1)] - dz[(0, 1)] / 4.0).abs() < 1e-15);
    }
}
