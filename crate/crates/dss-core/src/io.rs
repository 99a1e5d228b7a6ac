//! On-disk formats: little-endian f32 arrays with JSON sidecar headers for
//! features and priors, JSON-manifest checkpoints for the network and the
//! SVM, grayscale PNG images, and small CSV reports.

use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::net::{InitMode, NetConfig, RegressionNet};
use crate::priors::PriorFilterSet;
use crate::scatter::{ChannelDesc, ScatterFeatures};
use crate::svm::SvmModel;
use crate::{DssError, Result};

/// Writes a flat little-endian f32 array.
pub fn write_f32(path: &Path, data: &[f32]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for v in data {
        f.write_all(&v.to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_f32(path: &Path) -> Result<Vec<f32>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(DssError::param(format!(
            "{} length {} is not a multiple of 4",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn with_ext(base: &Path, ext: &str) -> PathBuf {
    let mut p = base.as_os_str().to_owned();
    p.push(ext);
    PathBuf::from(p)
}

/// Sidecar entry for one feature channel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelHeader {
    #[serde(flatten)]
    pub desc: ChannelDesc,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureHeader {
    pub channels: Vec<ChannelHeader>,
}

/// Exports scattering features as `<base>.f32` + `<base>.json`, channels in
/// order, each map row-major.
pub fn write_features(base: &Path, features: &ScatterFeatures) -> Result<()> {
    let (rows, cols) = features.map_dim();
    let header = FeatureHeader {
        channels: features
            .channels
            .iter()
            .map(|desc| ChannelHeader {
                desc: desc.clone(),
                rows,
                cols,
            })
            .collect(),
    };
    std::fs::write(
        with_ext(base, ".json"),
        serde_json::to_string_pretty(&header)?,
    )?;
    write_f32(&with_ext(base, ".f32"), &features.to_f32())
}

pub fn read_features(base: &Path) -> Result<ScatterFeatures> {
    let header: FeatureHeader =
        serde_json::from_str(&std::fs::read_to_string(with_ext(base, ".json"))?)?;
    let data = read_f32(&with_ext(base, ".f32"))?;
    let mut maps = Vec::with_capacity(header.channels.len());
    let mut pos = 0usize;
    for ch in &header.channels {
        let n = ch.rows * ch.cols;
        if pos + n > data.len() {
            return Err(DssError::param("feature array shorter than header"));
        }
        maps.push(Array2::from_shape_fn((ch.rows, ch.cols), |(i, j)| {
            data[pos + i * ch.cols + j] as f64
        }));
        pos += n;
    }
    Ok(ScatterFeatures {
        channels: header.channels.into_iter().map(|c| c.desc).collect(),
        maps,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorHeader {
    pub layer_id: u8,
    pub k: usize,
    pub z1: usize,
    pub z2: usize,
    pub c: usize,
    pub rejected_count: usize,
    pub rank_shortfall: usize,
    pub install_gain: f64,
}

/// Exports a prior filter set as `<base>.f32` + `<base>.json`; filters in
/// order, each (z1, z2, c) row-major.
pub fn write_priors(base: &Path, set: &PriorFilterSet) -> Result<()> {
    let header = PriorHeader {
        layer_id: set.layer_id,
        k: set.filters.len(),
        z1: set.patch_rows,
        z2: set.patch_cols,
        c: set.channels,
        rejected_count: set.rejected_count,
        rank_shortfall: set.rank_shortfall,
        install_gain: set.install_gain,
    };
    std::fs::write(
        with_ext(base, ".json"),
        serde_json::to_string_pretty(&header)?,
    )?;
    let mut flat = Vec::new();
    for f in &set.filters {
        flat.extend(f.iter().map(|&v| v as f32));
    }
    write_f32(&with_ext(base, ".f32"), &flat)
}

pub fn read_priors(base: &Path) -> Result<PriorFilterSet> {
    let h: PriorHeader =
        serde_json::from_str(&std::fs::read_to_string(with_ext(base, ".json"))?)?;
    let data = read_f32(&with_ext(base, ".f32"))?;
    let per = h.z1 * h.z2 * h.c;
    if data.len() != per * h.k {
        return Err(DssError::param("prior array length mismatch"));
    }
    let filters = (0..h.k)
        .map(|i| {
            Array3::from_shape_fn((h.z1, h.z2, h.c), |(a, b, c)| {
                data[i * per + (a * h.z2 + b) * h.c + c] as f64
            })
        })
        .collect();
    Ok(PriorFilterSet {
        layer_id: h.layer_id,
        patch_rows: h.z1,
        patch_cols: h.z2,
        channels: h.c,
        filters,
        rejected_count: h.rejected_count,
        rank_shortfall: h.rank_shortfall,
        install_gain: h.install_gain,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub config: NetConfig,
    pub init_mode: InitMode,
    pub epoch: usize,
    pub val_loss: f64,
    pub seed: u64,
}

/// Saves a model checkpoint: JSON manifest + `<base>.f32` weights in declared
/// layer order.
pub fn write_checkpoint(
    base: &Path,
    net: &RegressionNet,
    epoch: usize,
    val_loss: f64,
    seed: u64,
) -> Result<()> {
    let manifest = CheckpointManifest {
        config: net.config.clone(),
        init_mode: net.init_mode,
        epoch,
        val_loss,
        seed,
    };
    std::fs::write(
        with_ext(base, ".json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    write_f32(&with_ext(base, ".f32"), &net.flatten_weights())
}

pub fn read_checkpoint(base: &Path) -> Result<(RegressionNet, CheckpointManifest)> {
    let manifest: CheckpointManifest =
        serde_json::from_str(&std::fs::read_to_string(with_ext(base, ".json"))?)?;
    let weights = read_f32(&with_ext(base, ".f32"))?;
    let net = RegressionNet::from_flat_weights(manifest.config.clone(), manifest.init_mode, &weights)?;
    Ok((net, manifest))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SvmPairHeader {
    a: crate::svm::ActivityLabel,
    b: crate::svm::ActivityLabel,
    num_sv: usize,
    bias: f64,
    dual_objective: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SvmManifest {
    hyperparams: crate::svm::SvmHyperparams,
    standardizer: crate::svm::Standardizer,
    feature_dim: usize,
    pairs: Vec<SvmPairHeader>,
    skipped_pairs: Vec<(crate::svm::ActivityLabel, crate::svm::ActivityLabel)>,
}

/// Saves an SVM model: JSON manifest + one f32 array holding, per pair, the
/// support vectors then their dual coefficients.
pub fn write_svm(base: &Path, model: &SvmModel) -> Result<()> {
    let manifest = SvmManifest {
        hyperparams: model.hyperparams,
        standardizer: model.standardizer.clone(),
        feature_dim: model.feature_dim,
        pairs: model
            .pairs
            .iter()
            .map(|(a, b, m)| SvmPairHeader {
                a: *a,
                b: *b,
                num_sv: m.support_vectors.len(),
                bias: m.bias,
                dual_objective: m.dual_objective,
            })
            .collect(),
        skipped_pairs: model.skipped_pairs.clone(),
    };
    std::fs::write(
        with_ext(base, ".json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    let mut flat: Vec<f32> = Vec::new();
    for (_, _, m) in &model.pairs {
        for sv in &m.support_vectors {
            flat.extend(sv.iter().map(|&v| v as f32));
        }
        flat.extend(m.coefficients.iter().map(|&v| v as f32));
    }
    write_f32(&with_ext(base, ".f32"), &flat)
}

pub fn read_svm(base: &Path) -> Result<SvmModel> {
    let manifest: SvmManifest =
        serde_json::from_str(&std::fs::read_to_string(with_ext(base, ".json"))?)?;
    let data = read_f32(&with_ext(base, ".f32"))?;
    let dim = manifest.feature_dim;
    let mut pos = 0usize;
    let mut pairs = Vec::with_capacity(manifest.pairs.len());
    for p in &manifest.pairs {
        let mut svs = Vec::with_capacity(p.num_sv);
        for _ in 0..p.num_sv {
            svs.push(data[pos..pos + dim].iter().map(|&v| v as f64).collect());
            pos += dim;
        }
        let coefs: Vec<f64> = data[pos..pos + p.num_sv].iter().map(|&v| v as f64).collect();
        pos += p.num_sv;
        pairs.push((
            p.a,
            p.b,
            crate::svm::smo::BinaryModel {
                support_vectors: svs,
                coefficients: coefs,
                bias: p.bias,
                dual_objective: p.dual_objective,
            },
        ));
    }
    if pos != data.len() {
        return Err(DssError::param("svm array has trailing data"));
    }
    Ok(SvmModel {
        hyperparams: manifest.hyperparams,
        standardizer: manifest.standardizer,
        pairs,
        skipped_pairs: manifest.skipped_pairs,
        feature_dim: dim,
    })
}

/// Saves a [0,1] image as 8-bit grayscale PNG.
pub fn write_gray_png(path: &Path, img: &Array2<f64>) -> Result<()> {
    let (rows, cols) = img.dim();
    let buf: Vec<u8> = img
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let im = image::GrayImage::from_raw(cols as u32, rows as u32, buf)
        .ok_or_else(|| DssError::Image("buffer size mismatch".into()))?;
    im.save(path).map_err(|e| DssError::Image(e.to_string()))
}

pub fn read_gray_png(path: &Path) -> Result<Array2<f64>> {
    let im = image::open(path)
        .map_err(|e| DssError::Image(format!("{}: {e}", path.display())))?
        .to_luma8();
    let (w, h) = (im.width() as usize, im.height() as usize);
    Ok(Array2::from_shape_fn((h, w), |(y, x)| {
        im.get_pixel(x as u32, y as u32).0[0] as f64 / 255.0
    }))
}

/// Writes a CSV file with one header row; floats are rendered with enough
/// digits to round-trip deterministically.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{}", header.join(","))?;
    for row in rows {
        writeln!(f, "{}", row.join(","))?;
    }
    f.flush()?;
    Ok(())
}

pub fn fmt_float(v: f64) -> String {
    format!("{v:.6}")
}
