//! Unsupervised PCA structural priors for the convolution layers.
//!
//! Patches are sampled from feature stacks, mean-removed, and the leading
//! eigenvectors of their covariance become orthonormal filters. Filters
//! dominated by checkerboard (Nyquist-alternating) energy are rejected and
//! replaced by the next eigenvectors. Priors for layer n+1 are learned on the
//! outputs of the network truncated after layer n with earlier priors already
//! installed.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::net::layers::matmul_nt;
use crate::net::{NetConfig, RegressionNet};
use crate::{DssError, Result};

/// Mean-removed vectorized patches, one per column.
#[derive(Debug, Clone)]
pub struct PatchMatrix {
    pub patch_rows: usize,
    pub patch_cols: usize,
    pub channels: usize,
    /// (patch_rows * patch_cols * channels, N)
    pub columns: Array2<f64>,
}

impl PatchMatrix {
    pub fn dim(&self) -> usize {
        self.patch_rows * self.patch_cols * self.channels
    }

    pub fn num_patches(&self) -> usize {
        self.columns.ncols()
    }
}

/// Draws `count` patches of size z1 x z2 (full channel depth) at uniformly
/// random positions from the given feature stacks; each column has its own
/// mean removed.
pub fn sample_patches(
    features: &[Array3<f64>],
    z1: usize,
    z2: usize,
    count: usize,
    seed: u64,
) -> Result<PatchMatrix> {
    if features.is_empty() || count == 0 {
        return Err(DssError::param("need at least one stack and one patch"));
    }
    let (c, h, w) = features[0].dim();
    if h < z1 || w < z2 {
        return Err(DssError::dim(format!(
            "feature maps {h}x{w} smaller than patch {z1}x{z2}"
        )));
    }
    for f in features {
        if f.dim() != (c, h, w) {
            return Err(DssError::dim("feature stacks must share one shape"));
        }
    }
    let dim = z1 * z2 * c;
    let mut cols = Array2::<f64>::zeros((dim, count));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for n in 0..count {
        let fi = rng.gen_range(0..features.len());
        let y0 = rng.gen_range(0..=h - z1);
        let x0 = rng.gen_range(0..=w - z2);
        let stack = &features[fi];
        let mut mean = 0.0;
        for ch in 0..c {
            for dy in 0..z1 {
                for dx in 0..z2 {
                    mean += stack[[ch, y0 + dy, x0 + dx]];
                }
            }
        }
        mean /= dim as f64;
        for ch in 0..c {
            for dy in 0..z1 {
                for dx in 0..z2 {
                    // layout matches filter reshape: (dy, dx, ch)
                    cols[[(dy * z2 + dx) * c + ch, n]] =
                        stack[[ch, y0 + dy, x0 + dx]] - mean;
                }
            }
        }
    }
    Ok(PatchMatrix {
        patch_rows: z1,
        patch_cols: z2,
        channels: c,
        columns: cols,
    })
}

/// Orthonormal eigenvectors of the patch covariance, descending eigenvalue
/// order, sign-fixed so each vector's largest-magnitude entry is positive.
#[derive(Debug, Clone)]
pub struct PcaFilters {
    pub vectors: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// Number of requested filters beyond the numerical rank.
    pub rank_shortfall: usize,
}

/// Computes the top-k principal filters of X X^T.
pub fn learn_pca_filters(x: &PatchMatrix, k: usize) -> Result<PcaFilters> {
    let dim = x.dim();
    if k == 0 || k > dim {
        return Err(DssError::param(format!("k = {k} outside [1, {dim}]")));
    }
    let cov = matmul_nt(&x.columns, &x.columns);
    let m = nalgebra::DMatrix::from_fn(dim, dim, |i, j| cov[[i, j]]);
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let max_ev = eig.eigenvalues[order[0]].max(0.0);
    let rank_tol = max_ev * 1e-12;
    let mut vectors = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    let mut shortfall = 0usize;
    for &oi in order.iter().take(k) {
        let ev = eig.eigenvalues[oi];
        if ev <= rank_tol {
            shortfall += 1;
            continue;
        }
        let col = eig.eigenvectors.column(oi);
        let mut v: Vec<f64> = col.iter().copied().collect();
        // sign convention: largest-magnitude entry positive
        let mut arg = 0usize;
        for (i, val) in v.iter().enumerate() {
            if val.abs() > v[arg].abs() {
                arg = i;
            }
        }
        if v[arg] < 0.0 {
            for val in &mut v {
                *val = -*val;
            }
        }
        vectors.push(v);
        eigenvalues.push(ev);
    }
    Ok(PcaFilters {
        vectors,
        eigenvalues,
        rank_shortfall: shortfall,
    })
}

/// True when more than half of the spectral energy of `grid` sits in the
/// highest-frequency quadrant (both folded frequencies above a quarter of the
/// sampling rate) -- the signature of a checkerboard pattern.
pub fn detect_checkerboard(grid: &Array2<f64>) -> bool {
    checkerboard_energy_fraction(&[grid.clone()]) > 0.5
}

/// High-frequency quadrant energy fraction of the summed multi-channel 2-D
/// spectrum.
pub fn checkerboard_energy_fraction(planes: &[Array2<f64>]) -> f64 {
    let (n1, n2) = planes[0].dim();
    let mut total = 0.0;
    let mut high = 0.0;
    let folded = |f: usize, n: usize| -> f64 { f.min(n - f) as f64 };
    for f1 in 0..n1 {
        for f2 in 0..n2 {
            let mut energy = 0.0;
            for p in planes {
                let mut re = 0.0;
                let mut im = 0.0;
                for y in 0..n1 {
                    for x in 0..n2 {
                        let ph = -2.0 * std::f64::consts::PI
                            * (f1 as f64 * y as f64 / n1 as f64
                                + f2 as f64 * x as f64 / n2 as f64);
                        re += p[[y, x]] * ph.cos();
                        im += p[[y, x]] * ph.sin();
                    }
                }
                energy += re * re + im * im;
            }
            total += energy;
            if folded(f1, n1) > n1 as f64 / 4.0 && folded(f2, n2) > n2 as f64 / 4.0 {
                high += energy;
            }
        }
    }
    if total > 0.0 {
        high / total
    } else {
        0.0
    }
}

/// Multi-channel filter checkerboard test: channel spectra are summed.
pub fn is_checkerboard_filter(filter: &Array3<f64>) -> bool {
    let (z1, z2, c) = filter.dim();
    let planes: Vec<Array2<f64>> = (0..c)
        .map(|ch| Array2::from_shape_fn((z1, z2), |(y, x)| filter[[y, x, ch]]))
        .collect();
    checkerboard_energy_fraction(&planes) > 0.5
}

/// Orthonormal filters ready to initialize one convolution layer.
#[derive(Debug, Clone)]
pub struct PriorFilterSet {
    /// 3 for the first convolution block (L3) through 6 (L6).
    pub layer_id: u8,
    pub patch_rows: usize,
    pub patch_cols: usize,
    pub channels: usize,
    /// K filters, each (patch_rows, patch_cols, channels), orthonormal as
    /// flattened vectors.
    pub filters: Vec<Array3<f64>>,
    /// Checkerboard eigenvectors skipped while collecting the K filters.
    pub rejected_count: usize,
    /// Requested filters beyond the achievable rank, padded with random
    /// orthonormal complements.
    pub rank_shortfall: usize,
    /// Multiplier applied at installation so kernels match He-initialization
    /// RMS for their fan-in; the stored filters stay orthonormal.
    pub install_gain: f64,
}

impl PriorFilterSet {
    /// Largest deviation of the flattened-filter Gram matrix from identity.
    pub fn orthonormality_error(&self) -> f64 {
        let k = self.filters.len();
        let flat: Vec<Vec<f64>> = self
            .filters
            .iter()
            .map(|f| f.iter().copied().collect())
            .collect();
        let mut worst = 0.0f64;
        for i in 0..k {
            for j in 0..k {
                let dot: f64 = flat[i].iter().zip(&flat[j]).map(|(a, b)| a * b).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

fn reshape_filter(v: &[f64], z1: usize, z2: usize, c: usize) -> Array3<f64> {
    Array3::from_shape_fn((z1, z2, c), |(dy, dx, ch)| v[(dy * z2 + dx) * c + ch])
}

/// Gram-Schmidt a random vector against `existing`; retries until the
/// residual is well-conditioned.
fn random_orthonormal_complement(
    existing: &[Vec<f64>],
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for e in existing {
            let dot: f64 = v.iter().zip(e).map(|(a, b)| a * b).sum();
            for (vi, ei) in v.iter_mut().zip(e) {
                *vi -= dot * ei;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            for vi in &mut v {
                *vi /= norm;
            }
            return v;
        }
    }
}

/// Learns one layer's prior set from patch data: eigenvectors in order,
/// checkerboards skipped, shortfall padded with random orthonormal vectors.
pub fn prior_set_from_patches(
    patches: &PatchMatrix,
    k: usize,
    layer_id: u8,
    seed: u64,
) -> Result<PriorFilterSet> {
    let dim = patches.dim();
    // over-request so rejected checkerboards can be replaced by later vectors
    let request = (2 * k).min(dim);
    let pca = learn_pca_filters(patches, request)?;
    let (z1, z2, c) = (patches.patch_rows, patches.patch_cols, patches.channels);

    let mut kept: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut filters = Vec::with_capacity(k);
    let mut rejected = 0usize;
    for v in &pca.vectors {
        if filters.len() == k {
            break;
        }
        let f = reshape_filter(v, z1, z2, c);
        if is_checkerboard_filter(&f) {
            rejected += 1;
            continue;
        }
        kept.push(v.clone());
        filters.push(f);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut shortfall = 0usize;
    while filters.len() < k {
        // redraw pads that themselves look like checkerboards
        let (v, f) = loop {
            let v = random_orthonormal_complement(&kept, dim, &mut rng);
            let f = reshape_filter(&v, z1, z2, c);
            if !is_checkerboard_filter(&f) {
                break (v, f);
            }
        };
        filters.push(f);
        kept.push(v);
        shortfall += 1;
    }
    // unit-norm vectors of dimension d have RMS 1/sqrt(d); He init has RMS
    // sqrt(2/d) for fan-in d, so installation scales by sqrt(2).
    let install_gain = std::f64::consts::SQRT_2;
    Ok(PriorFilterSet {
        layer_id,
        patch_rows: z1,
        patch_cols: z2,
        channels: c,
        filters,
        rejected_count: rejected,
        rank_shortfall: shortfall,
        install_gain,
    })
}

/// Patches per layer used by [`assemble_priors`].
pub const DEFAULT_PATCHES_PER_LAYER: usize = 10_000;

/// Learns the four prior sets hierarchically: the first from the scattering
/// feature stacks, each subsequent one from the truncated forward pass of a
/// network whose earlier layers already carry their priors.
pub fn assemble_priors(
    scatter_features: &[Array3<f64>],
    net_config: &NetConfig,
    patches_per_layer: usize,
    seed: u64,
) -> Result<Vec<PriorFilterSet>> {
    if scatter_features.is_empty() {
        return Err(DssError::param("no training feature stacks supplied"));
    }
    net_config.validate()?;
    let mut net = RegressionNet::new_random(net_config.clone(), seed)?;
    let mut sets: Vec<PriorFilterSet> = Vec::with_capacity(4);
    for layer in 0..4usize {
        let inputs: Vec<Array3<f64>> = if layer == 0 {
            scatter_features.to_vec()
        } else {
            scatter_features
                .iter()
                .map(|x| net.forward_conv_blocks(x, layer))
                .collect::<Result<Vec<_>>>()?
        };
        let k = net_config.conv_widths[layer];
        let patches = sample_patches(
            &inputs,
            3,
            3,
            patches_per_layer,
            seed.wrapping_add(layer as u64 * 101),
        )?;
        let set = prior_set_from_patches(
            &patches,
            k,
            3 + layer as u8,
            seed.wrapping_add(layer as u64 * 101),
        )?;
        // install this layer's priors before computing the next layer's inputs
        let partial: Vec<PriorFilterSet> = sets
            .iter()
            .cloned()
            .chain(std::iter::once(set.clone()))
            .chain((layer + 1..4).map(|l| placeholder_set(&net, l)))
            .collect();
        net = net.init_with_priors(&partial)?;
        sets.push(set);
    }
    Ok(sets)
}

/// Identity-shaped stand-in built from the net's current random kernels, used
/// only to satisfy `init_with_priors` for layers not yet learned.
fn placeholder_set(net: &RegressionNet, layer: usize) -> PriorFilterSet {
    let (o, i, _, _) = net.conv[layer].weight.dim();
    let filters: Vec<Array3<f64>> = (0..o)
        .map(|oo| {
            Array3::from_shape_fn((3, 3, i), |(ky, kx, ii)| {
                net.conv[layer].weight[[oo, ii, ky, kx]]
            })
        })
        .collect();
    PriorFilterSet {
        layer_id: 3 + layer as u8,
        patch_rows: 3,
        patch_cols: 3,
        channels: i,
        filters,
        rejected_count: 0,
        rank_shortfall: 0,
        install_gain: 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::layers::LrnParams;

    fn random_stacks(n: usize, c: usize, h: usize, w: usize, seed: u64) -> Vec<Array3<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Array3::from_shape_fn((c, h, w), |_| rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn constant_maps_give_zero_columns() {
        let stacks = vec![Array3::from_elem((2, 8, 8), 3.0)];
        let p = sample_patches(&stacks, 3, 3, 10, 0).unwrap();
        assert!(p.columns.iter().all(|&v| v.abs() < 1e-9));
    }

    #[test]
    fn same_seed_same_patches() {
        let stacks = random_stacks(3, 4, 10, 9, 1);
        let a = sample_patches(&stacks, 3, 3, 50, 7).unwrap();
        let b = sample_patches(&stacks, 3, 3, 50, 7).unwrap();
        assert_eq!(a.columns, b.columns);
    }

    #[test]
    fn patch_matrix_shape() {
        let stacks = random_stacks(2, 147, 28, 18, 2);
        let p = sample_patches(&stacks, 3, 3, 5000, 3).unwrap();
        assert_eq!(p.columns.dim(), (3 * 3 * 147, 5000));
        // per-column mean removed
        for col in p.columns.columns() {
            let m: f64 = col.iter().sum::<f64>() / col.len() as f64;
            assert!(m.abs() < 1e-9);
        }
    }

    #[test]
    fn patch_too_large_is_dim_error() {
        let stacks = random_stacks(1, 2, 2, 2, 0);
        assert!(sample_patches(&stacks, 3, 3, 5, 0).is_err());
    }

    #[test]
    fn rank_one_data_recovers_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dim = 18;
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut v {
            *x /= n;
        }
        let cols = Array2::from_shape_fn((dim, 40), |(i, j)| v[i] * ((j as f64) - 19.5));
        let p = PatchMatrix {
            patch_rows: 3,
            patch_cols: 3,
            channels: 2,
            columns: cols,
        };
        let pca = learn_pca_filters(&p, 3).unwrap();
        // only one nonzero eigenvalue survives the rank filter
        assert_eq!(pca.vectors.len(), 1);
        assert_eq!(pca.rank_shortfall, 2);
        let dot: f64 = pca.vectors[0].iter().zip(&v).map(|(a, b)| a * b).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-9, "overlap {dot}");
    }

    #[test]
    fn reconstruction_error_equals_discarded_eigenvalue_sum() {
        let stacks = random_stacks(4, 3, 12, 12, 5);
        let p = sample_patches(&stacks, 3, 3, 300, 6).unwrap();
        let dim = p.dim();
        let k = 8;
        let pca = learn_pca_filters(&p, dim).unwrap();
        let top = learn_pca_filters(&p, k).unwrap();
        // ||X - V V' X||_F^2 against the sum of discarded eigenvalues
        let x = &p.columns;
        let mut recon_err = 0.0;
        for j in 0..x.ncols() {
            let col: Vec<f64> = (0..dim).map(|d| x[[d, j]]).collect();
            let mut proj = vec![0.0; dim];
            for v in &top.vectors {
                let dot: f64 = v.iter().zip(&col).map(|(a, b)| a * b).sum();
                for (pp, vi) in proj.iter_mut().zip(v) {
                    *pp += dot * vi;
                }
            }
            for d in 0..dim {
                let r = col[d] - proj[d];
                recon_err += r * r;
            }
        }
        let discarded: f64 = pca.eigenvalues.iter().skip(k).sum();
        let x_norm2: f64 = x.iter().map(|v| v * v).sum();
        assert!(
            (recon_err - discarded).abs() <= 1e-6 * x_norm2,
            "recon {recon_err} vs discarded {discarded}"
        );
    }

    #[test]
    fn projector_is_idempotent() {
        let stacks = random_stacks(2, 2, 10, 10, 7);
        let p = sample_patches(&stacks, 3, 3, 120, 8).unwrap();
        let pca = learn_pca_filters(&p, 6).unwrap();
        let dim = p.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let proj = |x: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; dim];
            for v in &pca.vectors {
                let dot: f64 = v.iter().zip(x).map(|(a, b)| a * b).sum();
                for (o, vi) in out.iter_mut().zip(v) {
                    *o += dot * vi;
                }
            }
            out
        };
        let p1 = proj(&x);
        let p2 = proj(&p1);
        let err: f64 = p1
            .iter()
            .zip(&p2)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-8);
    }

    #[test]
    fn checkerboard_patterns_detected() {
        let cb = Array2::from_shape_fn((3, 3), |(y, x)| if (y + x) % 2 == 0 { 1.0 } else { -1.0 });
        assert!(detect_checkerboard(&cb));
        let cb8 = Array2::from_shape_fn((8, 8), |(y, x)| if (y + x) % 2 == 0 { 1.0 } else { -1.0 });
        assert!(detect_checkerboard(&cb8));
    }

    #[test]
    fn gaussian_blob_not_checkerboard() {
        let g = Array2::from_shape_fn((5, 5), |(y, x)| {
            let dy = y as f64 - 2.0;
            let dx = x as f64 - 2.0;
            (-(dy * dy + dx * dx) / 2.0).exp()
        });
        assert!(!detect_checkerboard(&g));
    }

    #[test]
    fn oriented_edge_filter_not_checkerboard() {
        // first derivative of a gaussian along x
        let g = Array2::from_shape_fn((5, 5), |(y, x)| {
            let dy = y as f64 - 2.0;
            let dx = x as f64 - 2.0;
            -dx * (-(dy * dy + dx * dx) / 2.0).exp()
        });
        let frac = checkerboard_energy_fraction(&[g.clone()]);
        assert!(frac < 0.5, "edge filter fraction {frac}");
        assert!(!detect_checkerboard(&g));
    }

    fn tiny_net_config() -> NetConfig {
        NetConfig {
            input_channels: 6,
            input_rows: 16,
            input_cols: 12,
            conv_widths: [8, 8, 12, 12],
            fc1_width: 16,
            output_width: 28,
            pool_after: [true, false, true, false],
            lrn: LrnParams::default(),
            dropout_keep: 0.5,
        }
    }

    #[test]
    fn assemble_priors_shapes_and_determinism() {
        let cfg = tiny_net_config();
        let stacks = random_stacks(3, 6, 16, 12, 11);
        let a = assemble_priors(&stacks, &cfg, 400, 42).unwrap();
        assert_eq!(a.len(), 4);
        for (i, set) in a.iter().enumerate() {
            assert_eq!(set.filters.len(), cfg.conv_widths[i]);
            assert_eq!(set.layer_id, 3 + i as u8);
            assert!(
                set.orthonormality_error() < 1e-6,
                "layer {i} gram error {}",
                set.orthonormality_error()
            );
            for f in &set.filters {
                assert!(!is_checkerboard_filter(f), "layer {i} emitted a checkerboard");
            }
        }
        // hierarchy: channel depths chain through the conv widths
        assert_eq!(a[0].channels, cfg.input_channels);
        assert_eq!(a[1].channels, cfg.conv_widths[0]);
        assert_eq!(a[2].channels, cfg.conv_widths[1]);
        assert_eq!(a[3].channels, cfg.conv_widths[2]);

        let b = assemble_priors(&stacks, &cfg, 400, 42).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for (fx, fy) in x.filters.iter().zip(&y.filters) {
                assert_eq!(fx, fy, "assembled priors must be deterministic");
            }
        }
    }

    #[test]
    fn priors_install_and_forward_stays_finite() {
        let cfg = tiny_net_config();
        let stacks = random_stacks(3, 6, 16, 12, 13);
        let sets = assemble_priors(&stacks, &cfg, 300, 1).unwrap();
        let net = RegressionNet::new_random(cfg.clone(), 2).unwrap();
        let primed = net.init_with_priors(&sets).unwrap();
        assert_eq!(primed.init_mode, crate::net::InitMode::StructuralPrior);
        // kernels equal scaled priors
        let g = sets[0].install_gain;
        for (oo, f) in sets[0].filters.iter().enumerate() {
            for ii in 0..cfg.input_channels {
                for ky in 0..3 {
                    for kx in 0..3 {
                        let w = primed.conv[0].weight[[oo, ii, ky, kx]];
                        assert!((w - g * f[[ky, kx, ii]]).abs() < 1e-12);
                    }
                }
            }
        }
        let out = primed.forward(&stacks[0], false, 0).unwrap();
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn mismatched_prior_width_is_rejected() {
        let cfg = tiny_net_config();
        let stacks = random_stacks(2, 6, 16, 12, 17);
        let mut sets = assemble_priors(&stacks, &cfg, 200, 3).unwrap();
        sets[1].filters.pop();
        let net = RegressionNet::new_random(cfg, 4).unwrap();
        let before = net.flatten_weights();
        assert!(net.init_with_priors(&sets).is_err());
        assert_eq!(before, net.flatten_weights(), "net must stay unchanged");
    }

    /// PCA optimality: the learned projector beats 100 random orthonormal
    /// bases of the same size on reconstruction error.
    #[test]
    fn pca_beats_random_orthonormal_bases() {
        let stacks = random_stacks(3, 2, 12, 12, 19);
        let p = sample_patches(&stacks, 3, 3, 200, 20).unwrap();
        let dim = p.dim();
        let k = 5;
        let pca = learn_pca_filters(&p, k).unwrap();
        let recon = |basis: &[Vec<f64>]| -> f64 {
            let x = &p.columns;
            let mut err = 0.0;
            for j in 0..x.ncols() {
                let col: Vec<f64> = (0..dim).map(|d| x[[d, j]]).collect();
                let mut proj = vec![0.0; dim];
                for v in basis {
                    let dot: f64 = v.iter().zip(&col).map(|(a, b)| a * b).sum();
                    for (pp, vi) in proj.iter_mut().zip(v) {
                        *pp += dot * vi;
                    }
                }
                for d in 0..dim {
                    let r = col[d] - proj[d];
                    err += r * r;
                }
            }
            err
        };
        let pca_err = recon(&pca.vectors);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..100 {
            let mut basis: Vec<Vec<f64>> = Vec::new();
            for _ in 0..k {
                basis.push(random_orthonormal_complement(&basis, dim, &mut rng));
            }
            let r = recon(&basis);
            assert!(
                pca_err <= r + 1e-9,
                "trial {trial}: pca {pca_err} worse than random {r}"
            );
        }
    }
}
