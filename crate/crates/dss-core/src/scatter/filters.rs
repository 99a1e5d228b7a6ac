//! Dual-tree filter bank construction.
//!
//! Level 1 uses a biorthogonal near-symmetric 13/19-tap pair; levels two and
//! deeper use a 14-tap quarter-shift orthonormal filter whose time reverse
//! serves the second tree. Both sets are standard published coefficients,
//! re-normalized here so every lowpass sums to sqrt(2).

use crate::{DssError, Result};

/// 13-tap level-1 analysis lowpass (unnormalized, DC gain ~1).
const H0_RAW: [f64; 13] = [
    -0.0017581, 0.0, 0.0222656, -0.0468750, -0.0482422, 0.2968750, 0.5554688, 0.2968750,
    -0.0482422, -0.0468750, 0.0222656, 0.0, -0.0017581,
];

/// 19-tap level-1 analysis highpass (unnormalized).
const H1_RAW: [f64; 19] = [
    -0.0000706, 0.0, 0.0013419, -0.0018834, -0.0071568, 0.0238560, 0.0556431, -0.0516881,
    -0.2997576, 0.5594308, -0.2997576, -0.0516881, 0.0556431, 0.0238560, -0.0071568, -0.0018834,
    0.0013419, 0.0, -0.0000706,
];

/// 14-tap quarter-shift lowpass, group delay ~6.25 samples (unnormalized).
const QSHIFT_RAW: [f64; 14] = [
    0.00325314, -0.00388321, 0.03466035, -0.03887280, -0.11720389, 0.27529538, 0.75614564,
    0.56881042, 0.01186609, -0.10671180, 0.02382538, 0.01702522, -0.00543948, -0.00455690,
];

/// Analysis and synthesis filters for the dual-tree transform.
///
/// `level1_*` are linear-phase odd-length filters applied without decimation
/// at the first level. `qshift_*` are the even-length quarter-shift filters
/// for the two polyphase trees at deeper levels: `even` holds the pair whose
/// lowpass has the larger (~L/2 + 1/4) group delay, `odd` the time-reversed
/// pair, so that the trees sit half a sample apart at every level.
#[derive(Debug, Clone, PartialEq)]
pub struct DtcwtFilterBank {
    pub level1_lowpass: Vec<f64>,
    pub level1_highpass: Vec<f64>,
    pub level1_syn_lowpass: Vec<f64>,
    pub level1_syn_highpass: Vec<f64>,
    pub qshift_lowpass_even: Vec<f64>,
    pub qshift_highpass_even: Vec<f64>,
    pub qshift_lowpass_odd: Vec<f64>,
    pub qshift_highpass_odd: Vec<f64>,
}

/// Orthonormal mate of an even-length lowpass: `h1[n] = (-1)^n h0[N-1-n]`.
fn quadrature_mate(h: &[f64]) -> Vec<f64> {
    let n = h.len();
    remove_dc(
        (0..n)
            .map(|i| if i % 2 == 0 { h[n - 1 - i] } else { -h[n - 1 - i] })
            .collect(),
    )
}

/// Removes the residual DC left by coefficient truncation (~1e-8 per tap) so
/// highpass filters annihilate constants exactly.
fn remove_dc(mut h: Vec<f64>) -> Vec<f64> {
    let mean = h.iter().sum::<f64>() / h.len() as f64;
    for v in &mut h {
        *v -= mean;
    }
    h
}

/// Builds the fixed filter bank. Deterministic; same bank on every call.
pub fn build_filter_bank() -> DtcwtFilterBank {
    let root2 = std::f64::consts::SQRT_2;

    let s0 = root2 / H0_RAW.iter().sum::<f64>();
    let h0: Vec<f64> = H0_RAW.iter().map(|&v| v * s0).collect();

    // Synthesis lowpass is the modulated analysis highpass; normalize its DC
    // gain to sqrt(2) as well, then rebuild the highpass from it so the alias
    // cancellation stays structurally exact.
    let g0_raw: Vec<f64> = H1_RAW
        .iter()
        .enumerate()
        .map(|(n, &v)| if n % 2 == 0 { -v } else { v })
        .collect();
    let sg = root2 / g0_raw.iter().sum::<f64>();
    let g0: Vec<f64> = g0_raw.iter().map(|&v| v * sg).collect();
    let h1: Vec<f64> = remove_dc(
        g0.iter()
            .enumerate()
            .map(|(n, &v)| if n % 2 == 0 { -v } else { v })
            .collect(),
    );
    let g1: Vec<f64> = remove_dc(
        h0.iter()
            .enumerate()
            .map(|(n, &v)| if n % 2 == 0 { v } else { -v })
            .collect(),
    );

    let sq = root2 / QSHIFT_RAW.iter().sum::<f64>();
    let q_adv: Vec<f64> = QSHIFT_RAW.iter().map(|&v| v * sq).collect();
    let q_del: Vec<f64> = q_adv.iter().rev().copied().collect();

    DtcwtFilterBank {
        level1_lowpass: h0,
        level1_highpass: h1,
        level1_syn_lowpass: g0,
        level1_syn_highpass: g1,
        qshift_highpass_even: quadrature_mate(&q_del),
        qshift_lowpass_even: q_del,
        qshift_highpass_odd: quadrature_mate(&q_adv),
        qshift_lowpass_odd: q_adv,
    }
}

impl DtcwtFilterBank {
    /// Checks the structural invariants the transform relies on.
    pub fn validate(&self) -> Result<()> {
        let root2 = std::f64::consts::SQRT_2;
        for (name, f) in [
            ("level1_lowpass", &self.level1_lowpass),
            ("qshift_lowpass_even", &self.qshift_lowpass_even),
            ("qshift_lowpass_odd", &self.qshift_lowpass_odd),
        ] {
            let s: f64 = f.iter().sum();
            if (s - root2).abs() > 1e-6 {
                return Err(DssError::param(format!(
                    "{name} DC gain {s} deviates from sqrt(2)"
                )));
            }
        }
        if self.level1_lowpass.len() != 13 || self.level1_highpass.len() != 19 {
            return Err(DssError::param("level-1 pair must be 13/19 taps"));
        }
        if self.qshift_lowpass_even.len() != 14 {
            return Err(DssError::param("quarter-shift filters must be 14 taps"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bank_is_deterministic_and_valid() {
        let a = build_filter_bank();
        let b = build_filter_bank();
        assert_eq!(a, b, "repeated calls must be bit-identical");
        a.validate().unwrap();
    }

    #[test]
    fn lowpass_dc_gains() {
        let bank = build_filter_bank();
        let root2 = std::f64::consts::SQRT_2;
        assert!((bank.level1_lowpass.iter().sum::<f64>() - root2).abs() < 1e-6);
        assert!((bank.level1_syn_lowpass.iter().sum::<f64>() - root2).abs() < 1e-6);
        assert!((bank.qshift_lowpass_even.iter().sum::<f64>() - root2).abs() < 1e-6);
        // highpass filters reject DC
        assert!(bank.level1_highpass.iter().sum::<f64>().abs() < 1e-6);
        assert!(bank.qshift_highpass_even.iter().sum::<f64>().abs() < 1e-6);
    }

    #[test]
    fn qshift_orthonormality() {
        let bank = build_filter_bank();
        let h = &bank.qshift_lowpass_even;
        let n2: f64 = h.iter().map(|v| v * v).sum();
        assert!((n2 - 1.0).abs() < 1e-6, "norm^2 = {n2}");
        for k in 1..7 {
            let dot: f64 = (0..h.len() - 2 * k).map(|i| h[i] * h[i + 2 * k]).sum();
            assert!(dot.abs() < 1e-6, "lag {} inner product {}", 2 * k, dot);
        }
    }

    /// Distortion product of the level-1 pair must be flat (half-band) and the
    /// alias product must vanish: this is the reconstruction property *on the
    /// coefficients themselves*, independent of the transform code.
    #[test]
    fn level1_pair_is_perfect_reconstruction() {
        let bank = build_filter_bank();
        let conv = |a: &[f64], b: &[f64]| {
            let mut out = vec![0.0; a.len() + b.len() - 1];
            for (i, &ai) in a.iter().enumerate() {
                for (j, &bj) in b.iter().enumerate() {
                    out[i + j] += ai * bj;
                }
            }
            out
        };
        let p00 = conv(&bank.level1_lowpass, &bank.level1_syn_lowpass);
        let p11 = conv(&bank.level1_highpass, &bank.level1_syn_highpass);
        let t: Vec<f64> = p00.iter().zip(&p11).map(|(a, b)| a + b).collect();
        let center = (t.len() - 1) / 2;
        assert!((t[center] - 2.0).abs() < 1e-5, "distortion center {}", t[center]);
        for (i, &v) in t.iter().enumerate() {
            if i != center {
                assert!(v.abs() < 1e-5, "distortion residue {v} at {i}");
            }
        }
    }
}
