//! 2-D dual-tree complex wavelet transform.
//!
//! Level 1 filters the image without decimation using the linear-phase 13/19
//! pair under whole-point symmetric extension; the four polyphases of each
//! highpass field are the four trees, combined into complex coefficients by
//! [`quads_to_complex`]. Levels two and deeper run four critically-sampled
//! trees (one per polyphase of the undecimated level-1 lowpass) with the
//! quarter-shift filters, using circular extension so each tree's synthesis is
//! the exact adjoint of its analysis.
//!
//! Six oriented subbands per level, ordered by ascending orientation angle:
//! 15, 45, 75, 105, 135, 165 degrees.

use ndarray::Array2;

use super::filters::DtcwtFilterBank;
use crate::{DssError, Result};

/// The six subband orientations in storage order.
pub const ORIENTATIONS_DEG: [u16; 6] = [15, 45, 75, 105, 135, 165];

const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// One complex oriented subband at scale `scale` (subsampled by 2^scale).
#[derive(Debug, Clone)]
pub struct ComplexSubband {
    /// Decomposition level j >= 1.
    pub scale: usize,
    /// Orientation in degrees, one of [`ORIENTATIONS_DEG`].
    pub orientation: u16,
    pub real: Array2<f64>,
    pub imag: Array2<f64>,
}

impl ComplexSubband {
    pub fn magnitude(&self) -> Array2<f64> {
        let mut out = Array2::zeros(self.real.dim());
        ndarray::Zip::from(&mut out)
            .and(&self.real)
            .and(&self.imag)
            .for_each(|o, &re, &im| *o = (re * re + im * im).sqrt());
        out
    }

    pub fn energy(&self) -> f64 {
        self.real.iter().map(|v| v * v).sum::<f64>()
            + self.imag.iter().map(|v| v * v).sum::<f64>()
    }
}

/// Full decomposition: `levels[j-1]` holds the six subbands of level j; the
/// final lowpass is kept per polyphase tree, indexed `[row_parity][col_parity]`.
#[derive(Debug, Clone)]
pub struct DtcwtPyramid {
    pub levels: Vec<Vec<ComplexSubband>>,
    pub lowpass_trees: [Array2<f64>; 4],
}

impl DtcwtPyramid {
    /// Total coefficient energy (subbands plus retained lowpass trees).
    pub fn energy(&self) -> f64 {
        let sub: f64 = self.levels.iter().flatten().map(|s| s.energy()).sum();
        let low: f64 = self
            .lowpass_trees
            .iter()
            .map(|t| t.iter().map(|v| v * v).sum::<f64>())
            .sum();
        sub + low
    }
}

/// Whole-point symmetric index: reflects i into [0, n).
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * n - 2 - i;
        } else {
            return i as usize;
        }
    }
}

/// Zero-phase undecimated filtering along rows (axis 1), symmetric extension.
fn filt_sym_rows(x: &Array2<f64>, h: &[f64]) -> Array2<f64> {
    let (rows, cols) = x.dim();
    let c = (h.len() - 1) / 2;
    let mut out = Array2::zeros((rows, cols));
    // Extended row buffer reused across rows.
    let mut ext = vec![0.0; cols + 2 * c];
    for r in 0..rows {
        let row = x.row(r);
        for (k, e) in ext.iter_mut().enumerate() {
            *e = row[reflect(k as isize - c as isize, cols)];
        }
        let orow = out.row_mut(r);
        let orow = orow.into_slice().expect("contiguous row");
        for (m, &hm) in h.iter().enumerate() {
            // y[i] += h[m] * x_ext[i + 2c - m]  (zero-phase for symmetric h)
            let off = 2 * c - m;
            for i in 0..cols {
                orow[i] += hm * ext[i + off];
            }
        }
    }
    out
}

fn transpose(x: &Array2<f64>) -> Array2<f64> {
    let (r, c) = x.dim();
    let mut out = Array2::zeros((c, r));
    for i in 0..r {
        for j in 0..c {
            out[[j, i]] = x[[i, j]];
        }
    }
    out
}

/// Zero-phase undecimated filtering along columns (axis 0).
fn filt_sym_cols(x: &Array2<f64>, h: &[f64]) -> Array2<f64> {
    transpose(&filt_sym_rows(&transpose(x), h))
}

/// Circular decimated filtering along rows: y[k] = sum_m h[m] x[(2k - m) mod n].
fn decim_rows(x: &Array2<f64>, h: &[f64]) -> Array2<f64> {
    let (rows, cols) = x.dim();
    let half = cols / 2;
    let mut out = Array2::zeros((rows, half));
    for r in 0..rows {
        let row = x.row(r);
        let mut orow = out.row_mut(r);
        for k in 0..half {
            let base = 2 * k as isize;
            let mut acc = 0.0;
            for (m, &hm) in h.iter().enumerate() {
                let mut idx = base - m as isize;
                while idx < 0 {
                    idx += cols as isize;
                }
                acc += hm * row[idx as usize];
            }
            orow[k] = acc;
        }
    }
    out
}

fn decim_cols(x: &Array2<f64>, h: &[f64]) -> Array2<f64> {
    transpose(&decim_rows(&transpose(x), h))
}

/// Adjoint of [`decim_rows`]: scatters y back onto a width-n grid.
fn adjoint_rows(y: &Array2<f64>, h: &[f64], n: usize) -> Array2<f64> {
    let (rows, half) = y.dim();
    let mut out = Array2::zeros((rows, n));
    for r in 0..rows {
        let yrow = y.row(r);
        let mut orow = out.row_mut(r);
        for k in 0..half {
            let v = yrow[k];
            let base = 2 * k as isize;
            for (m, &hm) in h.iter().enumerate() {
                let mut idx = base - m as isize;
                while idx < 0 {
                    idx += n as isize;
                }
                orow[idx as usize] += hm * v;
            }
        }
    }
    out
}

fn adjoint_cols(y: &Array2<f64>, h: &[f64], n: usize) -> Array2<f64> {
    transpose(&adjoint_rows(&transpose(y), h, n))
}

/// Splits an even-dimensioned field into its four polyphases
/// (row parity u, column parity v) -> index 2u + v.
fn polyphase_split(x: &Array2<f64>) -> [Array2<f64>; 4] {
    let (rows, cols) = x.dim();
    let (hr, hc) = (rows / 2, cols / 2);
    let mut out = [
        Array2::zeros((hr, hc)),
        Array2::zeros((hr, hc)),
        Array2::zeros((hr, hc)),
        Array2::zeros((hr, hc)),
    ];
    for i in 0..rows {
        for j in 0..cols {
            out[2 * (i % 2) + (j % 2)][[i / 2, j / 2]] = x[[i, j]];
        }
    }
    out
}

fn polyphase_merge(parts: &[Array2<f64>; 4]) -> Array2<f64> {
    let (hr, hc) = parts[0].dim();
    let mut out = Array2::zeros((2 * hr, 2 * hc));
    for u in 0..2 {
        for v in 0..2 {
            let p = &parts[2 * u + v];
            for i in 0..hr {
                for j in 0..hc {
                    out[[2 * i + u, 2 * j + v]] = p[[i, j]];
                }
            }
        }
    }
    out
}

/// Combines the four polyphases of an undecimated highpass field (or the four
/// tree subbands at deeper levels) into the two oppositely-oriented complex
/// subbands: z1 = ((a - d) + i(b + c))/sqrt2, z2 = ((a + d) + i(b - c))/sqrt2
/// with a,b,c,d the (row,col)-parity components (0,0),(0,1),(1,0),(1,1).
fn quads_to_complex(parts: &[Array2<f64>; 4]) -> (ComplexSubbandRaw, ComplexSubbandRaw) {
    let (a, b, c, d) = (&parts[0], &parts[1], &parts[2], &parts[3]);
    let z1 = ComplexSubbandRaw {
        real: (a - d) * SQRT_HALF,
        imag: (b + c) * SQRT_HALF,
    };
    let z2 = ComplexSubbandRaw {
        real: (a + d) * SQRT_HALF,
        imag: (b - c) * SQRT_HALF,
    };
    (z1, z2)
}

/// Inverse of [`quads_to_complex`].
fn complex_to_quads(z1: &ComplexSubbandRaw, z2: &ComplexSubbandRaw) -> [Array2<f64>; 4] {
    [
        (&z1.real + &z2.real) * SQRT_HALF,
        (&z1.imag + &z2.imag) * SQRT_HALF,
        (&z1.imag - &z2.imag) * SQRT_HALF,
        (&z2.real - &z1.real) * SQRT_HALF,
    ]
}

struct ComplexSubbandRaw {
    real: Array2<f64>,
    imag: Array2<f64>,
}

/// Maps the three highpass field types (LoHi, HiLo, HiHi) and their two
/// complex combinations onto the angle-ordered subband slots.
/// (field index, combination index) -> position in [`ORIENTATIONS_DEG`].
const SLOT_OF: [[usize; 2]; 3] = [
    [0, 5], // LoHi: z1 -> 15 deg, z2 -> 165 deg
    [2, 3], // HiLo: z1 -> 75 deg, z2 -> 105 deg
    [1, 4], // HiHi: z1 -> 45 deg, z2 -> 135 deg
];

fn qshift_filters(bank: &DtcwtFilterBank, parity: usize) -> (&[f64], &[f64]) {
    if parity == 0 {
        (&bank.qshift_lowpass_even, &bank.qshift_highpass_even)
    } else {
        (&bank.qshift_lowpass_odd, &bank.qshift_highpass_odd)
    }
}

/// Forward transform over `levels` decomposition levels.
///
/// Image dimensions must be divisible by 2^levels (callers pad symmetrically
/// beforehand) and large enough that every tree keeps at least two samples.
pub fn dtcwt_forward(
    image: &Array2<f64>,
    bank: &DtcwtFilterBank,
    levels: usize,
) -> Result<DtcwtPyramid> {
    let (rows, cols) = image.dim();
    if levels == 0 {
        return Err(DssError::param("levels must be >= 1"));
    }
    let div = 1usize << levels;
    if rows % div != 0 || cols % div != 0 {
        return Err(DssError::dim(format!(
            "image {rows}x{cols} not divisible by 2^{levels}"
        )));
    }
    if rows / div < 2 || cols / div < 2 {
        return Err(DssError::dim(format!(
            "image {rows}x{cols} too small for {levels} levels"
        )));
    }

    // Level 1: undecimated linear-phase filtering; polyphases form the trees.
    let lo_v = filt_sym_cols(image, &bank.level1_lowpass);
    let hi_v = filt_sym_cols(image, &bank.level1_highpass);
    let lo_lo = filt_sym_rows(&lo_v, &bank.level1_lowpass);
    let fields = [
        filt_sym_rows(&lo_v, &bank.level1_highpass), // LoHi
        filt_sym_rows(&hi_v, &bank.level1_lowpass),  // HiLo
        filt_sym_rows(&hi_v, &bank.level1_highpass), // HiHi
    ];

    let mut level1: Vec<Option<ComplexSubband>> = (0..6).map(|_| None).collect();
    for (f, field) in fields.iter().enumerate() {
        let parts = polyphase_split(field);
        let (z1, z2) = quads_to_complex(&parts);
        for (ci, z) in [z1, z2].into_iter().enumerate() {
            let slot = SLOT_OF[f][ci];
            level1[slot] = Some(ComplexSubband {
                scale: 1,
                orientation: ORIENTATIONS_DEG[slot],
                real: z.real,
                imag: z.imag,
            });
        }
    }
    let mut levels_out = vec![level1.into_iter().map(Option::unwrap).collect::<Vec<_>>()];

    // Deeper levels: four critically-sampled quarter-shift trees.
    let mut trees = polyphase_split(&lo_lo);
    for j in 2..=levels {
        // per tree: (LL, LH, HL, HH)
        let mut subs: [[Array2<f64>; 3]; 4] = std::array::from_fn(|_| {
            std::array::from_fn(|_| Array2::zeros((0, 0)))
        });
        for u in 0..2 {
            for v in 0..2 {
                let t = &trees[2 * u + v];
                let (lo_u, hi_u) = qshift_filters(bank, u);
                let (lo_vf, hi_vf) = qshift_filters(bank, v);
                let l = decim_cols(t, lo_u);
                let h = decim_cols(t, hi_u);
                let ll = decim_rows(&l, lo_vf);
                subs[2 * u + v] = [
                    decim_rows(&l, hi_vf),  // LoHi
                    decim_rows(&h, lo_vf),  // HiLo
                    decim_rows(&h, hi_vf),  // HiHi
                ];
                trees[2 * u + v] = ll;
            }
        }
        let mut lvl: Vec<Option<ComplexSubband>> = (0..6).map(|_| None).collect();
        for f in 0..3 {
            let parts: [Array2<f64>; 4] = std::array::from_fn(|t| subs[t][f].clone());
            let (z1, z2) = quads_to_complex(&parts);
            for (ci, z) in [z1, z2].into_iter().enumerate() {
                let slot = SLOT_OF[f][ci];
                lvl[slot] = Some(ComplexSubband {
                    scale: j,
                    orientation: ORIENTATIONS_DEG[slot],
                    real: z.real,
                    imag: z.imag,
                });
            }
        }
        levels_out.push(lvl.into_iter().map(Option::unwrap).collect());
    }

    Ok(DtcwtPyramid {
        levels: levels_out,
        lowpass_trees: trees,
    })
}

/// Inverse transform; exact up to the coefficient precision of the bank.
pub fn dtcwt_inverse(pyramid: &DtcwtPyramid, bank: &DtcwtFilterBank) -> Result<Array2<f64>> {
    let levels = pyramid.levels.len();
    if levels == 0 {
        return Err(DssError::param("empty pyramid"));
    }
    let mut trees = pyramid.lowpass_trees.clone();

    for j in (2..=levels).rev() {
        let lvl = &pyramid.levels[j - 1];
        // Reassemble per-tree highpass subbands from the complex pairs.
        let mut fields: [[Array2<f64>; 4]; 3] = std::array::from_fn(|f| {
            let (s1, s2) = (SLOT_OF[f][0], SLOT_OF[f][1]);
            let z1 = ComplexSubbandRaw {
                real: lvl[s1].real.clone(),
                imag: lvl[s1].imag.clone(),
            };
            let z2 = ComplexSubbandRaw {
                real: lvl[s2].real.clone(),
                imag: lvl[s2].imag.clone(),
            };
            complex_to_quads(&z1, &z2)
        });
        for u in 0..2 {
            for v in 0..2 {
                let ti = 2 * u + v;
                let (lo_u, hi_u) = qshift_filters(bank, u);
                let (lo_vf, hi_vf) = qshift_filters(bank, v);
                let ll = &trees[ti];
                let (hr, hc) = ll.dim();
                let w = hc * 2;
                let l = adjoint_rows(ll, lo_vf, w)
                    + adjoint_rows(&std::mem::take(&mut fields[0][ti]), hi_vf, w);
                let h = adjoint_rows(&std::mem::take(&mut fields[1][ti]), lo_vf, w)
                    + adjoint_rows(&std::mem::take(&mut fields[2][ti]), hi_vf, w);
                let full_h = hr * 2;
                trees[ti] = adjoint_cols(&l, lo_u, full_h) + adjoint_cols(&h, hi_u, full_h);
            }
        }
    }

    let lo_lo = polyphase_merge(&trees);
    let lvl1 = &pyramid.levels[0];
    let mut fields: Vec<Array2<f64>> = Vec::with_capacity(3);
    for f in 0..3 {
        let (s1, s2) = (SLOT_OF[f][0], SLOT_OF[f][1]);
        let z1 = ComplexSubbandRaw {
            real: lvl1[s1].real.clone(),
            imag: lvl1[s1].imag.clone(),
        };
        let z2 = ComplexSubbandRaw {
            real: lvl1[s2].real.clone(),
            imag: lvl1[s2].imag.clone(),
        };
        fields.push(polyphase_merge(&complex_to_quads(&z1, &z2)));
    }

    // Undecimated dual synthesis: x = (g0 * rowpart_lo + g1 * rowpart_hi) / 4,
    // one factor of 2 per axis from the half-band distortion product.
    let row_lo = filt_sym_rows(&lo_lo, &bank.level1_syn_lowpass)
        + filt_sym_rows(&fields[0], &bank.level1_syn_highpass);
    let row_hi = filt_sym_rows(&fields[1], &bank.level1_syn_lowpass)
        + filt_sym_rows(&fields[2], &bank.level1_syn_highpass);
    let out = (filt_sym_cols(&row_lo, &bank.level1_syn_lowpass)
        + filt_sym_cols(&row_hi, &bank.level1_syn_highpass))
        / 4.0;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scatter::filters::build_filter_bank;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_image(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
    }

    fn rel_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
        let num: f64 = (a - b).iter().map(|v| v * v).sum::<f64>().sqrt();
        let den: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        num / den
    }

    #[test]
    fn round_trip_is_near_perfect() {
        let bank = build_filter_bank();
        for seed in 0..5 {
            let x = random_image(64, 64, seed);
            let pyr = dtcwt_forward(&x, &bank, 2).unwrap();
            let xr = dtcwt_inverse(&pyr, &bank).unwrap();
            let e = rel_err(&x, &xr);
            assert!(e < 1e-5, "seed {seed}: reconstruction error {e}");
        }
        // non-square, three levels
        let x = random_image(32, 48, 99);
        let pyr = dtcwt_forward(&x, &bank, 3).unwrap();
        assert_eq!(pyr.levels.len(), 3);
        let xr = dtcwt_inverse(&pyr, &bank).unwrap();
        assert!(rel_err(&x, &xr) < 1e-5);
    }

    #[test]
    fn constant_image_has_silent_subbands() {
        let bank = build_filter_bank();
        let x = Array2::from_elem((32, 32), 3.25);
        let pyr = dtcwt_forward(&x, &bank, 2).unwrap();
        for sub in pyr.levels.iter().flatten() {
            let m = sub.magnitude();
            let peak = m.iter().cloned().fold(0.0, f64::max);
            assert!(peak < 1e-8, "level {} peak {}", sub.scale, peak);
        }
    }

    #[test]
    fn impulse_energy_matches_frame_redundancy() {
        // The transform is a near-tight frame of redundancy 4: coefficient
        // energy must equal 4x the input energy within 2%.
        let bank = build_filter_bank();
        let mut x = Array2::zeros((64, 64));
        x[[32, 30]] = 1.0;
        let pyr = dtcwt_forward(&x, &bank, 2).unwrap();
        let ratio = pyr.energy() / 1.0;
        assert!((ratio / 4.0 - 1.0).abs() < 0.02, "energy ratio {ratio}");
        // and for random images
        for seed in 0..5 {
            let x = random_image(64, 64, seed);
            let ex: f64 = x.iter().map(|v| v * v).sum();
            let pyr = dtcwt_forward(&x, &bank, 2).unwrap();
            let ratio = pyr.energy() / ex;
            assert!((ratio / 4.0 - 1.0).abs() < 0.02, "energy ratio {ratio}");
        }
    }

    #[test]
    fn rejects_bad_dimensions() {
        let bank = build_filter_bank();
        let x = random_image(30, 32, 0);
        assert!(dtcwt_forward(&x, &bank, 2).is_err());
        let tiny = random_image(4, 4, 0);
        assert!(dtcwt_forward(&tiny, &bank, 2).is_err());
    }

    #[test]
    fn six_subbands_at_expected_resolutions() {
        let bank = build_filter_bank();
        let x = random_image(64, 48, 3);
        let pyr = dtcwt_forward(&x, &bank, 2).unwrap();
        assert_eq!(pyr.levels[0].len(), 6);
        assert_eq!(pyr.levels[1].len(), 6);
        for s in &pyr.levels[0] {
            assert_eq!(s.real.dim(), (32, 24));
            assert_eq!(s.real.dim(), s.imag.dim());
        }
        for s in &pyr.levels[1] {
            assert_eq!(s.real.dim(), (16, 12));
        }
        let angles: Vec<u16> = pyr.levels[0].iter().map(|s| s.orientation).collect();
        assert_eq!(angles, vec![15, 45, 75, 105, 135, 165]);
    }

    /// An oriented grating must concentrate energy in the matching subband and
    /// have a nearly flat magnitude there (the analytic-signal property).
    #[test]
    fn gratings_select_matching_orientation() {
        let bank = build_filter_bank();
        let band_center = 3.0 * std::f64::consts::PI / 8.0;
        for (slot, ang) in ORIENTATIONS_DEG.iter().enumerate() {
            let th = (*ang as f64).to_radians();
            let lam = th.sin().abs().max(th.cos().abs()) * 2.0 * std::f64::consts::PI / band_center;
            let x = Array2::from_shape_fn((64, 64), |(i, j)| {
                (2.0 * std::f64::consts::PI / lam * (th.sin() * i as f64 + th.cos() * j as f64)
                    + 0.7)
                    .cos()
            });
            let pyr = dtcwt_forward(&x, &bank, 2).unwrap();
            let energies: Vec<f64> = pyr.levels[1].iter().map(|s| s.energy()).collect();
            let best = energies
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(best, slot, "grating {ang} deg peaked in slot {best}");
            // flat magnitude away from boundaries
            let m = pyr.levels[1][slot].magnitude();
            let (r, c) = m.dim();
            let inner = m.slice(ndarray::s![3..r - 3, 3..c - 3]);
            let mean = inner.mean().unwrap();
            let var = inner.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / inner.len() as f64;
            let cv = var.sqrt() / mean;
            assert!(cv < 0.12, "angle {ang}: magnitude cv {cv}");
        }
    }
}
