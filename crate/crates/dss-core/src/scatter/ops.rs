//! Pointwise nonlinearities and the local averaging stage.

use ndarray::Array2;

use super::dtcwt::ComplexSubband;
use crate::{DssError, Result};

/// Pointwise complex modulus of a subband.
pub fn complex_modulus(subband: &ComplexSubband) -> Array2<f64> {
    subband.magnitude()
}

/// Parametric log transform: `out = ln(envelope + k)`, `k > 0`.
///
/// Compresses the heavy upper tail of wavelet envelopes so their distribution
/// becomes closer to symmetric.
pub fn parametric_log(envelope: &Array2<f64>, k: f64) -> Result<Array2<f64>> {
    if !(k > 0.0) {
        return Err(DssError::param(format!("log offset k must be > 0, got {k}")));
    }
    Ok(envelope.mapv(|v| (v + k).ln()))
}

/// Shifted variant used inside the scattering pipeline: `ln(1 + envelope/k)`.
///
/// Identical to [`parametric_log`] up to the constant `ln k`, chosen so a zero
/// envelope maps to exactly zero features.
pub fn parametric_log_shifted(envelope: &Array2<f64>, k: f64) -> Result<Array2<f64>> {
    if !(k > 0.0) {
        return Err(DssError::param(format!("log offset k must be > 0, got {k}")));
    }
    Ok(envelope.mapv(|v| (v / k).ln_1p()))
}

/// Triangular averaging kernel for a given stride: half-width `3*stride`,
/// which tiles to a constant under stride-`s` sampling (each polyphase sums to
/// `1/s`), so constants and interior mass are preserved exactly.
pub(crate) fn averaging_kernel(stride: usize) -> Vec<f64> {
    let h = (3 * stride) as isize;
    let denom = (h * h) as f64;
    (-(h - 1)..h).map(|m| (h - m.abs()) as f64 / denom).collect()
}

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

fn smooth_rows(x: &Array2<f64>, k: &[f64]) -> Array2<f64> {
    let (rows, cols) = x.dim();
    let c = (k.len() - 1) / 2;
    let mut out = Array2::zeros((rows, cols));
    let mut ext = vec![0.0; cols + 2 * c];
    for r in 0..rows {
        let row = x.row(r);
        for (i, e) in ext.iter_mut().enumerate() {
            *e = row[reflect(i as isize - c as isize, cols)];
        }
        let orow = out.row_mut(r).into_slice().expect("contiguous");
        for (m, &km) in k.iter().enumerate() {
            let off = 2 * c - m;
            for i in 0..cols {
                orow[i] += km * ext[i + off];
            }
        }
    }
    out
}

fn transpose(x: &Array2<f64>) -> Array2<f64> {
    let (r, c) = x.dim();
    Array2::from_shape_fn((c, r), |(i, j)| x[[j, i]])
}

/// Low-pass smoothing followed by stride-`s` sampling with a one-sample border
/// crop: output size `floor(n/s) - 2` per axis, sample centers at `s*(i+1)`.
///
/// The averaging kernel has unit DC gain, so constants pass through exactly;
/// because its polyphases tile, the area-weighted output mass `sum(out)*s^2`
/// equals the input mass for sources away from the border.
pub fn local_average(envelope: &Array2<f64>, stride: usize) -> Result<Array2<f64>> {
    let (rows, cols) = envelope.dim();
    if stride == 0 {
        return Err(DssError::param("stride must be >= 1"));
    }
    let (or, oc) = (rows / stride, cols / stride);
    if or < 3 || oc < 3 {
        return Err(DssError::dim(format!(
            "grid {rows}x{cols} too small for stride {stride} averaging"
        )));
    }
    let k = averaging_kernel(stride);
    let sm = transpose(&smooth_rows(&transpose(&smooth_rows(envelope, &k)), &k));
    let mut out = Array2::zeros((or - 2, oc - 2));
    for i in 0..or - 2 {
        for j in 0..oc - 2 {
            out[[i, j]] = sm[[stride * (i + 1), stride * (j + 1)]];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scatter::dtcwt::ComplexSubband;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn modulus_matches_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let re = Array2::from_shape_fn((9, 7), |_| rng.gen_range(-2.0..2.0));
        let im = Array2::from_shape_fn((9, 7), |_| rng.gen_range(-2.0..2.0));
        let sub = ComplexSubband {
            scale: 1,
            orientation: 15,
            real: re.clone(),
            imag: im.clone(),
        };
        let m = complex_modulus(&sub);
        for ((i, j), &v) in m.indexed_iter() {
            let want = (re[[i, j]] * re[[i, j]] + im[[i, j]] * im[[i, j]]).sqrt();
            assert!((v - want).abs() < 1e-12);
        }
        assert!(m.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn modulus_three_four_five() {
        let mut re = Array2::zeros((8, 8));
        let mut im = Array2::zeros((8, 8));
        re[[3, 4]] = 3.0;
        im[[3, 4]] = 4.0;
        let sub = ComplexSubband {
            scale: 1,
            orientation: 45,
            real: re,
            imag: im,
        };
        assert_eq!(complex_modulus(&sub)[[3, 4]], 5.0);
    }

    #[test]
    fn log_of_zero_with_unit_offset_is_zero() {
        let z = Array2::zeros((4, 4));
        let out = parametric_log(&z, 1.0).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn log_rejects_nonpositive_offset() {
        let z = Array2::zeros((4, 4));
        assert!(parametric_log(&z, 0.0).is_err());
        assert!(parametric_log(&z, -1.0).is_err());
    }

    #[test]
    fn log_is_monotone() {
        let mut g = Array2::zeros((1, 2));
        g[[0, 0]] = 0.3;
        g[[0, 1]] = 0.7;
        let out = parametric_log(&g, 0.05).unwrap();
        assert!(out[[0, 0]] < out[[0, 1]]);
    }

    fn sample_skewness(v: &[f64]) -> f64 {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let m3 = v.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
        m3 / m2.powf(1.5)
    }

    #[test]
    fn log_reduces_skewness_of_lognormal_envelope() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // log-normal sample via exp of gaussian
        let vals: Vec<f64> = (0..4096)
            .map(|_| {
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                let g = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                (0.8 * g).exp()
            })
            .collect();
        let env = Array2::from_shape_vec((64, 64), vals).unwrap();
        let k = 1e-3 * env.mean().unwrap();
        let out = parametric_log(&env, k).unwrap();
        let s_in = sample_skewness(env.as_slice().unwrap()).abs();
        let s_out = sample_skewness(out.as_slice().unwrap()).abs();
        assert!(
            s_out < s_in,
            "skewness must shrink: {s_in} -> {s_out}"
        );
    }

    #[test]
    fn average_preserves_constants() {
        let g = Array2::from_elem((32, 24), 2.5);
        let out = local_average(&g, 4).unwrap();
        assert_eq!(out.dim(), (6, 4));
        for &v in out.iter() {
            assert!((v - 2.5).abs() < 1e-12);
        }
    }

    #[test]
    fn average_preserves_interior_impulse_mass() {
        for stride in [1usize, 2, 4] {
            let mut g = Array2::zeros((48, 48));
            g[[24, 23]] = 1.0;
            let out = local_average(&g, stride).unwrap();
            let mass: f64 = out.iter().sum::<f64>() * (stride * stride) as f64;
            assert!((mass - 1.0).abs() < 1e-6, "stride {stride}: mass {mass}");
        }
    }

    #[test]
    fn average_tolerates_small_translations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // smooth envelope: squared-magnitude style field, low-pass by box
        let raw = Array2::from_shape_fn((70, 70), |_| rng.gen_range(0.0..1.0));
        let k = averaging_kernel(2);
        let smooth = |x: &Array2<f64>| {
            transpose(&smooth_rows(&transpose(&smooth_rows(x, &k)), &k))
        };
        let env = smooth(&smooth(&raw));
        let a = env.slice(ndarray::s![2..66, 2..66]).to_owned();
        let b = env.slice(ndarray::s![2..66, 0..64]).to_owned(); // 2px translate
        let oa = local_average(&a, 4).unwrap();
        let ob = local_average(&b, 4).unwrap();
        let num: f64 = (&oa - &ob).iter().map(|v| v * v).sum::<f64>().sqrt();
        let den: f64 = oa.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(num / den < 0.05, "translate sensitivity {}", num / den);
    }
}
