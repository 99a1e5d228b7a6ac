//! Forward and backward passes for the network's layer types. Everything is
//! f64 and allocation-straightforward; convolutions go through im2col and a
//! small hand-rolled matmul.

use ndarray::{Array1, Array2, Array3, Array4};

/// C[i,j] = sum_k A[i,k] B[k,j], ikj order so the inner loop is contiguous.
pub fn matmul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (m, ka) = a.dim();
    let (kb, n) = b.dim();
    assert_eq!(ka, kb);
    let mut c = Array2::<f64>::zeros((m, n));
    let asl = a.as_slice().unwrap();
    let bsl = b.as_slice().unwrap();
    let csl = c.as_slice_mut().unwrap();
    for i in 0..m {
        let crow = &mut csl[i * n..(i + 1) * n];
        for k in 0..ka {
            let aik = asl[i * ka + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &bsl[k * n..(k + 1) * n];
            for j in 0..n {
                crow[j] += aik * brow[j];
            }
        }
    }
    c
}

/// C = A * B^T.
pub fn matmul_nt(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (m, ka) = a.dim();
    let (n, kb) = b.dim();
    assert_eq!(ka, kb);
    let mut c = Array2::<f64>::zeros((m, n));
    let asl = a.as_slice().unwrap();
    let bsl = b.as_slice().unwrap();
    for i in 0..m {
        let arow = &asl[i * ka..(i + 1) * ka];
        for j in 0..n {
            let brow = &bsl[j * kb..(j + 1) * kb];
            let mut acc = 0.0;
            for k in 0..ka {
                acc += arow[k] * brow[k];
            }
            c[[i, j]] = acc;
        }
    }
    c
}

/// C = A^T * B.
pub fn matmul_tn(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (ka, m) = a.dim();
    let (kb, n) = b.dim();
    assert_eq!(ka, kb);
    let mut c = Array2::<f64>::zeros((m, n));
    let asl = a.as_slice().unwrap();
    let bsl = b.as_slice().unwrap();
    let csl = c.as_slice_mut().unwrap();
    for k in 0..ka {
        let arow = &asl[k * m..(k + 1) * m];
        let brow = &bsl[k * n..(k + 1) * n];
        for i in 0..m {
            let aki = arow[i];
            if aki == 0.0 {
                continue;
            }
            let crow = &mut csl[i * n..(i + 1) * n];
            for j in 0..n {
                crow[j] += aki * brow[j];
            }
        }
    }
    c
}

/// Unfolds 3x3 zero-padded patches: (C, H, W) -> (C*9, H*W).
pub fn im2col3(x: &Array3<f64>) -> Array2<f64> {
    let (c, h, w) = x.dim();
    let mut out = Array2::<f64>::zeros((c * 9, h * w));
    for ch in 0..c {
        for ky in 0..3usize {
            for kx in 0..3usize {
                let row = ch * 9 + ky * 3 + kx;
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for xx in 0..w {
                        let sx = xx as isize + kx as isize - 1;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        out[[row, y * w + xx]] = x[[ch, sy as usize, sx as usize]];
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col3`]: folds patch-gradients back onto the image grid.
pub fn col2im3(cols: &Array2<f64>, c: usize, h: usize, w: usize) -> Array3<f64> {
    let mut out = Array3::<f64>::zeros((c, h, w));
    for ch in 0..c {
        for ky in 0..3usize {
            for kx in 0..3usize {
                let row = ch * 9 + ky * 3 + kx;
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for xx in 0..w {
                        let sx = xx as isize + kx as isize - 1;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        out[[ch, sy as usize, sx as usize]] += cols[[row, y * w + xx]];
                    }
                }
            }
        }
    }
    out
}

/// Cross-channel local response normalization parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LrnParams {
    pub window: usize,
    pub alpha: f64,
    pub beta: f64,
    pub k: f64,
}

impl Default for LrnParams {
    fn default() -> Self {
        LrnParams {
            window: 5,
            alpha: 1e-4,
            beta: 0.75,
            k: 2.0,
        }
    }
}

/// y_c = a_c / (k + alpha * sum_{|c'-c| <= w/2} a_{c'}^2)^beta, per pixel.
pub fn lrn_forward(a: &Array3<f64>, p: &LrnParams) -> (Array3<f64>, Array3<f64>) {
    let (c, h, w) = a.dim();
    let half = p.window / 2;
    let mut den = Array3::<f64>::zeros((c, h, w));
    let mut out = Array3::<f64>::zeros((c, h, w));
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let lo = ch.saturating_sub(half);
                let hi = (ch + half).min(c - 1);
                let mut s = 0.0;
                for cc in lo..=hi {
                    s += a[[cc, y, x]] * a[[cc, y, x]];
                }
                let d = p.k + p.alpha * s;
                den[[ch, y, x]] = d;
                out[[ch, y, x]] = a[[ch, y, x]] * d.powf(-p.beta);
            }
        }
    }
    (out, den)
}

/// Exact gradient through LRN. `a` is the layer input, `den` the cached
/// denominators, `dy` the upstream gradient.
pub fn lrn_backward(
    a: &Array3<f64>,
    den: &Array3<f64>,
    dy: &Array3<f64>,
    p: &LrnParams,
) -> Array3<f64> {
    let (c, h, w) = a.dim();
    let half = p.window / 2;
    let mut da = Array3::<f64>::zeros((c, h, w));
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let d = den[[ch, y, x]];
                // diagonal term
                let mut g = dy[[ch, y, x]] * d.powf(-p.beta);
                // cross terms: every c' whose window contains ch
                let lo = ch.saturating_sub(half);
                let hi = (ch + half).min(c - 1);
                let mut cross = 0.0;
                for cc in lo..=hi {
                    let dcc = den[[cc, y, x]];
                    cross += dy[[cc, y, x]] * a[[cc, y, x]] * dcc.powf(-p.beta - 1.0);
                }
                g -= 2.0 * p.alpha * p.beta * a[[ch, y, x]] * cross;
                da[[ch, y, x]] = g;
            }
        }
    }
    da
}

/// 2x2 stride-2 max pooling, odd tails dropped. Returns output and the index
/// of the winning source pixel per output cell.
pub fn maxpool2_forward(x: &Array3<f64>) -> (Array3<f64>, Array3<usize>) {
    let (c, h, w) = x.dim();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Array3::<f64>::zeros((c, oh, ow));
    let mut idx = Array3::<usize>::zeros((c, oh, ow));
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut bi = 0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let (sy, sx) = (2 * y + dy, 2 * xx + dx);
                        let v = x[[ch, sy, sx]];
                        if v > best {
                            best = v;
                            bi = sy * w + sx;
                        }
                    }
                }
                out[[ch, y, xx]] = best;
                idx[[ch, y, xx]] = bi;
            }
        }
    }
    (out, idx)
}

pub fn maxpool2_backward(
    dy: &Array3<f64>,
    idx: &Array3<usize>,
    in_dim: (usize, usize, usize),
) -> Array3<f64> {
    let (c, h, w) = in_dim;
    let mut dx = Array3::<f64>::zeros((c, h, w));
    let (_, oh, ow) = dy.dim();
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let flat = idx[[ch, y, xx]];
                dx[[ch, flat / w, flat % w]] += dy[[ch, y, xx]];
            }
        }
    }
    dx
}

/// One convolution block's parameters.
#[derive(Debug, Clone)]
pub struct ConvLayer {
    /// (out_channels, in_channels, 3, 3)
    pub weight: Array4<f64>,
    pub bias: Array1<f64>,
}

impl ConvLayer {
    pub fn weight_matrix(&self) -> Array2<f64> {
        let (o, i, _, _) = self.weight.dim();
        let mut m = Array2::zeros((o, i * 9));
        for oo in 0..o {
            for ii in 0..i {
                for ky in 0..3 {
                    for kx in 0..3 {
                        m[[oo, ii * 9 + ky * 3 + kx]] = self.weight[[oo, ii, ky, kx]];
                    }
                }
            }
        }
        m
    }

    pub fn set_from_matrix(&mut self, m: &Array2<f64>) {
        let (o, i, _, _) = self.weight.dim();
        for oo in 0..o {
            for ii in 0..i {
                for ky in 0..3 {
                    for kx in 0..3 {
                        self.weight[[oo, ii, ky, kx]] = m[[oo, ii * 9 + ky * 3 + kx]];
                    }
                }
            }
        }
    }
}

/// Fully connected layer.
#[derive(Debug, Clone)]
pub struct FcLayer {
    /// (out, in)
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl FcLayer {
    pub fn forward(&self, x: &Array1<f64>) -> Array1<f64> {
        let (o, i) = self.weight.dim();
        let xs = x.as_slice().unwrap();
        let ws = self.weight.as_slice().unwrap();
        let mut out = Array1::<f64>::zeros(o);
        for oo in 0..o {
            let row = &ws[oo * i..(oo + 1) * i];
            let mut acc = self.bias[oo];
            for k in 0..i {
                acc += row[k] * xs[k];
            }
            out[oo] = acc;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matmul_variants_agree_with_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = Array2::from_shape_fn((4, 6), |_| rng.gen_range(-1.0..1.0));
        let b = Array2::from_shape_fn((6, 5), |_| rng.gen_range(-1.0..1.0));
        let c = matmul(&a, &b);
        for i in 0..4 {
            for j in 0..5 {
                let want: f64 = (0..6).map(|k| a[[i, k]] * b[[k, j]]).sum();
                assert!((c[[i, j]] - want).abs() < 1e-12);
            }
        }
        let bt = Array2::from_shape_fn((5, 6), |(i, j)| b[[j, i]]);
        let c2 = matmul_nt(&a, &bt);
        assert!(c
            .iter()
            .zip(c2.iter())
            .all(|(x, y)| (x - y).abs() < 1e-12));
        let at = Array2::from_shape_fn((6, 4), |(i, j)| a[[j, i]]);
        let c3 = matmul_tn(&at, &b);
        assert!(c
            .iter()
            .zip(c3.iter())
            .all(|(x, y)| (x - y).abs() < 1e-12));
    }

    #[test]
    fn im2col_col2im_are_adjoint() {
        // <im2col(x), y> == <x, col2im(y)> for random x, y
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Array3::from_shape_fn((3, 5, 4), |_| rng.gen_range(-1.0..1.0));
        let y = Array2::from_shape_fn((27, 20), |_| rng.gen_range(-1.0..1.0));
        let lhs: f64 = im2col3(&x).iter().zip(y.iter()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x
            .iter()
            .zip(col2im3(&y, 3, 5, 4).iter())
            .map(|(a, b)| a * b)
            .sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn maxpool_drops_odd_tail_and_routes_gradient() {
        let mut x = Array3::<f64>::zeros((1, 5, 5));
        x[[0, 1, 0]] = 3.0;
        let (y, idx) = maxpool2_forward(&x);
        assert_eq!(y.dim(), (1, 2, 2));
        assert_eq!(y[[0, 0, 0]], 3.0);
        let mut dy = Array3::<f64>::zeros((1, 2, 2));
        dy[[0, 0, 0]] = 1.0;
        let dx = maxpool2_backward(&dy, &idx, (1, 5, 5));
        assert_eq!(dx[[0, 1, 0]], 1.0);
        assert_eq!(dx.iter().filter(|&&v| v != 0.0).count(), 1);
    }

    #[test]
    fn lrn_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = LrnParams::default();
        let a = Array3::from_shape_fn((7, 3, 2), |_| rng.gen_range(-1.0..1.0));
        let dy = Array3::from_shape_fn((7, 3, 2), |_| rng.gen_range(-1.0..1.0));
        let (_, den) = lrn_forward(&a, &p);
        let da = lrn_backward(&a, &den, &dy, &p);
        let eps = 1e-6;
        for probe in [(0usize, 0usize, 0usize), (3, 1, 1), (6, 2, 0)] {
            let mut ap = a.clone();
            ap[probe] += eps;
            let mut am = a.clone();
            am[probe] -= eps;
            let lp: f64 = lrn_forward(&ap, &p).0.iter().zip(dy.iter()).map(|(x, g)| x * g).sum();
            let lm: f64 = lrn_forward(&am, &p).0.iter().zip(dy.iter()).map(|(x, g)| x * g).sum();
            let fd = (lp - lm) / (2.0 * eps);
            let rel = (da[probe] - fd).abs() / fd.abs().max(1e-8);
            assert!(rel < 1e-5, "probe {probe:?}: analytic {} fd {}", da[probe], fd);
        }
    }
}
