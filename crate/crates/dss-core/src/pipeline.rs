//! End-to-end orchestration shared by the CLI and the acceptance suite:
//! region extraction, feature building, the training and evaluation commands,
//! and single-image inference over a detection-box file.

use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::data::{
    generate_dataset, load_annotations, save_annotations, split_regions, AnnotationRecord,
    DatasetSplit, RegionRef, SyntheticConfig,
};
use crate::io;
use crate::net::train::{train, FeatureDataset, FeatureSample, TrainOutcome};
use crate::net::{NetConfig, RegressionNet, TrainConfig};
use crate::pose::{
    build_skeleton, decode_keypoints, orientation_vector, pck_at_d, KeypointSet,
    KEYPOINT_NAMES, NUM_KEYPOINTS, REGION_OF_KEYPOINT,
};
use crate::priors::{assemble_priors, PriorFilterSet};
use crate::scatter::{
    build_filter_bank, imgops::resize_bilinear, scatter, DtcwtFilterBank, GrayImage,
    ScatterConfig,
};
use crate::svm::{predict, train_multiclass, ActivityLabel, SvmHyperparams, SvmModel, ALL_LABELS};
use crate::{DssError, Result};

/// Person regions are resized to this fixed portrait shape before the
/// scattering front-end: 120 rows by 80 columns.
pub const REGION_ROWS: usize = 120;
pub const REGION_COLS: usize = 80;

/// Full pipeline configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub scatter: ScatterConfig,
    pub net: NetConfig,
    pub train: TrainConfig,
    pub svm: SvmHyperparams,
    pub synth: SyntheticConfig,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            scatter: ScatterConfig::default(),
            net: NetConfig::default(),
            train: TrainConfig::default(),
            svm: SvmHyperparams::default(),
            synth: SyntheticConfig::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.scatter.validate()?;
        self.net.validate()?;
        self.train.validate()?;
        self.svm.validate()?;
        self.synth.validate()?;
        if self.net.input_channels != self.scatter.total_channels() {
            return Err(DssError::config(format!(
                "net expects {} input channels but the scatter config produces {}",
                self.net.input_channels,
                self.scatter.total_channels()
            )));
        }
        Ok(())
    }

    /// Parses a plain `key = value` config file with dotted section prefixes;
    /// unknown keys are rejected. Lines starting with `#` are comments.
    pub fn from_config_text(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| DssError::Schema {
                line: ln + 1,
                msg: format!("expected 'key = value', got '{line}'"),
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.set_key(key, value).map_err(|e| DssError::Schema {
                line: ln + 1,
                msg: e.to_string(),
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set_key(&mut self, key: &str, value: &str) -> Result<()> {
        let pf = |v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| DssError::param(format!("bad float '{v}'")))
        };
        let pu = |v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| DssError::param(format!("bad integer '{v}'")))
        };
        let pu64 = |v: &str| -> Result<u64> {
            v.parse()
                .map_err(|_| DssError::param(format!("bad integer '{v}'")))
        };
        let pb = |v: &str| -> Result<bool> {
            v.parse()
                .map_err(|_| DssError::param(format!("bad bool '{v}'")))
        };
        match key {
            "seed" => self.seed = pu64(value)?,
            "scatter.num_scales" => self.scatter.num_scales = pu(value)?,
            "scatter.log_offsets" => {
                self.scatter.log_offsets = value
                    .split(',')
                    .map(|s| pf(s.trim()))
                    .collect::<Result<Vec<_>>>()?
            }
            "scatter.resolution_factors" => {
                self.scatter.resolution_factors = value
                    .split(',')
                    .map(|s| pf(s.trim()))
                    .collect::<Result<Vec<_>>>()?
            }
            "scatter.joint_invariance_enabled" => {
                self.scatter.joint_invariance_enabled = pb(value)?
            }
            "net.fc1_width" => self.net.fc1_width = pu(value)?,
            "net.dropout_keep" => self.net.dropout_keep = pf(value)?,
            "train.base_lr" => self.train.base_lr = pf(value)?,
            "train.lr_after_drop" => self.train.lr_after_drop = pf(value)?,
            "train.drop_epoch" => self.train.drop_epoch = pu(value)?,
            "train.dropout_keep" => self.train.dropout_keep = pf(value)?,
            "train.batch_size" => self.train.batch_size = pu(value)?,
            "train.epochs" => self.train.epochs = pu(value)?,
            "train.seed" => self.train.seed = pu64(value)?,
            "svm.c" => self.svm.c = pf(value)?,
            "svm.gamma" => self.svm.gamma = pf(value)?,
            "svm.kkt_tolerance" => self.svm.kkt_tolerance = pf(value)?,
            "synth.persons_min" => self.synth.persons_min = pu(value)?,
            "synth.persons_max" => self.synth.persons_max = pu(value)?,
            "synth.violent_fraction" => self.synth.violent_fraction = pf(value)?,
            "synth.seed" => self.synth.seed = pu64(value)?,
            "synth.scene_rows" => self.synth.scene_rows = pu(value)?,
            "synth.scene_cols" => self.synth.scene_cols = pu(value)?,
            "synth.person_height_px" => self.synth.person_height_px = pf(value)?,
            _ => return Err(DssError::param(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }
}

/// Crops a detection box out of a scene (clamped to bounds), resizes it to the
/// fixed 120x80 region and normalizes to zero mean / unit variance.
pub fn extract_region(scene: &Array2<f64>, bbox: [f64; 4]) -> Result<GrayImage> {
    let (rows, cols) = scene.dim();
    let x0 = bbox[0].max(0.0).floor() as usize;
    let y0 = bbox[1].max(0.0).floor() as usize;
    let x1 = ((bbox[0] + bbox[2]).ceil() as usize).min(cols);
    let y1 = ((bbox[1] + bbox[3]).ceil() as usize).min(rows);
    if x1 <= x0 + 1 || y1 <= y0 + 1 {
        return Err(DssError::dim(format!("box {bbox:?} outside the image")));
    }
    let crop = scene.slice(ndarray::s![y0..y1, x0..x1]).to_owned();
    let resized = resize_bilinear(&crop, REGION_ROWS, REGION_COLS);
    GrayImage::normalized(resized)
}

/// Normalized keypoint targets of a person relative to its box.
pub fn region_targets(person: &crate::data::PersonAnnotation) -> [f64; 28] {
    let [bx, by, bw, bh] = person.bbox;
    let mut t = [0.0; 28];
    for (i, k) in person.keypoints.iter().enumerate() {
        t[2 * i] = ((k[0] - bx) / bw).clamp(0.0, 1.0);
        t[2 * i + 1] = ((k[1] - by) / bh).clamp(0.0, 1.0);
    }
    t
}

/// Access to scene images either in memory (generation order) or from PNG
/// files next to the annotation file.
pub enum ImageStore {
    Memory(Vec<Array2<f64>>),
    Dir(PathBuf),
}

impl ImageStore {
    pub fn get(&self, record_idx: usize, record: &AnnotationRecord) -> Result<Array2<f64>> {
        match self {
            ImageStore::Memory(v) => v
                .get(record_idx)
                .cloned()
                .ok_or_else(|| DssError::param("record index outside image store")),
            ImageStore::Dir(dir) => io::read_gray_png(&dir.join(&record.image_path)),
        }
    }
}

/// Computes scattering features for every referenced region.
pub fn build_feature_dataset(
    records: &[AnnotationRecord],
    images: &ImageStore,
    refs: &[RegionRef],
    bank: &DtcwtFilterBank,
    config: &ScatterConfig,
) -> Result<FeatureDataset> {
    let mut shape = None;
    let mut samples = Vec::with_capacity(refs.len());
    let mut scene_cache: Option<(usize, Array2<f64>)> = None;
    for r in refs {
        let record = &records[r.record];
        let scene = match &scene_cache {
            Some((idx, img)) if *idx == r.record => img.clone(),
            _ => {
                let img = images.get(r.record, record)?;
                scene_cache = Some((r.record, img.clone()));
                img
            }
        };
        let person = &record.persons[r.person];
        let region = extract_region(&scene, person.bbox)?;
        let feats = scatter(&region, bank, config)?;
        let (rows, cols) = feats.map_dim();
        let this_shape = (feats.num_channels(), rows, cols);
        match shape {
            None => shape = Some(this_shape),
            Some(s) if s == this_shape => {}
            Some(s) => {
                return Err(DssError::dim(format!(
                    "inconsistent feature shapes {s:?} vs {this_shape:?}"
                )))
            }
        }
        samples.push(FeatureSample {
            features: feats.to_f32(),
            target: region_targets(person),
        });
    }
    let shape = shape.ok_or_else(|| DssError::param("no regions referenced"))?;
    Ok(FeatureDataset { shape, samples })
}

/// Generates the synthetic dataset and writes PNGs plus `annotations.jsonl`
/// under `out_dir`.
pub fn cmd_generate_data(
    config: &SyntheticConfig,
    size: usize,
    out_dir: &Path,
) -> Result<Vec<AnnotationRecord>> {
    let data = generate_dataset(config, size)?;
    std::fs::create_dir_all(out_dir.join("images"))?;
    let mut records = Vec::with_capacity(data.len());
    for (rec, img) in data {
        io::write_gray_png(&out_dir.join(&rec.image_path), &img)?;
        records.push(rec);
    }
    save_annotations(&out_dir.join("annotations.jsonl"), &records)?;
    Ok(records)
}

/// Learns the four structural prior sets from the training split and writes
/// them as `priors_l3` .. `priors_l6`.
pub fn cmd_train_priors(
    records: &[AnnotationRecord],
    images: &ImageStore,
    cfg: &PipelineConfig,
    patches_per_layer: usize,
    prior_regions: usize,
    out_dir: &Path,
) -> Result<Vec<PriorFilterSet>> {
    let bank = build_filter_bank();
    let split = split_regions(records, cfg.seed)?;
    let refs: Vec<RegionRef> = split.train.iter().take(prior_regions).copied().collect();
    let ds = build_feature_dataset(records, images, &refs, &bank, &cfg.scatter)?;
    let stacks: Vec<Array3<f64>> = (0..ds.len()).map(|i| ds.tensor(i)).collect();
    let sets = assemble_priors(&stacks, &cfg.net, patches_per_layer, cfg.seed)?;
    std::fs::create_dir_all(out_dir)?;
    for set in &sets {
        io::write_priors(&out_dir.join(format!("priors_l{}", set.layer_id)), set)?;
    }
    Ok(sets)
}

/// Result bundle of a pose-training run.
pub struct PoseTrainResult {
    pub outcome: TrainOutcome,
    pub split: DatasetSplit,
}

/// Trains the pose network on the 60% split, validating on the 20% split;
/// writes `pose_model` checkpoint and `loss_curve.csv`.
pub fn cmd_train_pose(
    records: &[AnnotationRecord],
    images: &ImageStore,
    cfg: &PipelineConfig,
    priors: Option<&[PriorFilterSet]>,
    out_dir: &Path,
) -> Result<PoseTrainResult> {
    cfg.validate()?;
    let bank = build_filter_bank();
    let split = split_regions(records, cfg.seed)?;
    let train_ds = build_feature_dataset(records, images, &split.train, &bank, &cfg.scatter)?;
    let val_ds = build_feature_dataset(records, images, &split.val, &bank, &cfg.scatter)?;

    let base = RegressionNet::new_random(cfg.net.clone(), cfg.seed)?;
    let net0 = match priors {
        Some(sets) => base.init_with_priors(sets)?,
        None => base,
    };
    let outcome = train(&net0, &train_ds, &val_ds, &cfg.train)?;

    std::fs::create_dir_all(out_dir)?;
    let rows: Vec<Vec<String>> = outcome
        .curve
        .iter()
        .map(|e| {
            vec![
                e.epoch.to_string(),
                io::fmt_float(e.train_loss),
                io::fmt_float(e.val_loss),
            ]
        })
        .collect();
    io::write_csv(&out_dir.join("loss_curve.csv"), &["epoch", "train_loss", "val_loss"], &rows)?;
    let best_val = outcome
        .curve
        .iter()
        .map(|e| e.val_loss)
        .fold(f64::INFINITY, f64::min);
    io::write_checkpoint(
        &out_dir.join("pose_model"),
        &outcome.net,
        outcome.curve.len(),
        best_val,
        cfg.seed,
    )?;
    Ok(PoseTrainResult { outcome, split })
}

/// Predicted keypoints for one region reference.
pub fn predict_keypoints(
    net: &RegressionNet,
    records: &[AnnotationRecord],
    images: &ImageStore,
    r: RegionRef,
    bank: &DtcwtFilterBank,
    scfg: &ScatterConfig,
) -> Result<KeypointSet> {
    let record = &records[r.record];
    let scene = images.get(r.record, record)?;
    let person = &record.persons[r.person];
    let region = extract_region(&scene, person.bbox)?;
    let feats = scatter(&region, bank, scfg)?;
    let (rows, cols) = feats.map_dim();
    let x = Array3::from_shape_vec(
        (feats.num_channels(), rows, cols),
        feats.maps.iter().flat_map(|m| m.iter().copied()).collect(),
    )
    .expect("feature tensor");
    let out = net.forward(&x, false, 0)?;
    // decode in box coordinates
    let [bx, by, bw, bh] = person.bbox;
    let norm = decode_keypoints(out.as_slice().unwrap(), 1.0, 1.0)?;
    let mut pts = norm.points;
    for p in &mut pts {
        p.0 = bx + p.0 * bw;
        p.1 = by + p.1 * bh;
    }
    Ok(KeypointSet::new(pts))
}

/// Distances are measured in the 120x80 region frame regardless of the box's
/// native size, matching the fixed network input.
pub fn region_frame(kps: &KeypointSet, bbox: [f64; 4]) -> KeypointSet {
    let [bx, by, bw, bh] = bbox;
    let mut pts = kps.points;
    for p in &mut pts {
        p.0 = (p.0 - bx) / bw * REGION_COLS as f64;
        p.1 = (p.1 - by) / bh * REGION_ROWS as f64;
    }
    KeypointSet::new(pts)
}

/// Pose evaluation over a region list: per-keypoint and mean accuracy at every
/// requested distance, plus facial/arms/legs group summaries; written to
/// `pck_report.csv`.
pub fn cmd_eval_pose(
    net: &RegressionNet,
    records: &[AnnotationRecord],
    images: &ImageStore,
    refs: &[RegionRef],
    d_list: &[f64],
    scfg: &ScatterConfig,
    out_path: &Path,
) -> Result<Vec<(f64, f64)>> {
    let bank = build_filter_bank();
    // predictions once, evaluation per distance
    let mut pairs: Vec<(KeypointSet, KeypointSet)> = Vec::with_capacity(refs.len());
    for &r in refs {
        let pred = predict_keypoints(net, records, images, r, &bank, scfg)?;
        let person = &records[r.record].persons[r.person];
        let truth = person.keypoint_set();
        pairs.push((
            region_frame(&pred, person.bbox),
            region_frame(&truth, person.bbox),
        ));
    }
    let mut rows = Vec::new();
    let mut mean_curve = Vec::new();
    for &d in d_list {
        let mut per_kp = [0usize; NUM_KEYPOINTS];
        for (pred, truth) in &pairs {
            let res = pck_at_d(pred, truth, d);
            for (i, &h) in res.hits.iter().enumerate() {
                if h {
                    per_kp[i] += 1;
                }
            }
        }
        let n = pairs.len() as f64;
        let acc: Vec<f64> = per_kp.iter().map(|&c| c as f64 / n).collect();
        let group = |name: &str| -> f64 {
            let idx: Vec<usize> = (0..NUM_KEYPOINTS)
                .filter(|&i| REGION_OF_KEYPOINT[i] == name)
                .collect();
            idx.iter().map(|&i| acc[i]).sum::<f64>() / idx.len() as f64
        };
        let mean = acc.iter().sum::<f64>() / NUM_KEYPOINTS as f64;
        mean_curve.push((d, mean));
        let mut row = vec![io::fmt_float(d)];
        row.extend(acc.iter().map(|&a| io::fmt_float(a)));
        row.push(io::fmt_float(group("facial")));
        row.push(io::fmt_float(group("arms")));
        row.push(io::fmt_float(group("legs")));
        row.push(io::fmt_float(mean));
        rows.push(row);
    }
    let mut header: Vec<String> = vec!["d".into()];
    header.extend(KEYPOINT_NAMES.iter().map(|s| s.to_string()));
    header.extend(["facial", "arms", "legs", "mean"].iter().map(|s| s.to_string()));
    let header_refs: Vec<&str> = header.iter().map(|s| s.as_str()).collect();
    io::write_csv(out_path, &header_refs, &rows)?;
    Ok(mean_curve)
}

/// Source of the poses used to build SVM angle features.
pub enum PoseSource<'a> {
    GroundTruth,
    Model(&'a RegressionNet),
}

/// Angle vector of a person region (values only).
pub fn angle_features(kps: &KeypointSet) -> Vec<f64> {
    orientation_vector(&build_skeleton(kps)).values
}

/// Trains the activity SVM on the training split's angle vectors; optional
/// (C, gamma) grid search by cross-validation; saves `svm_model`.
#[allow(clippy::too_many_arguments)]
pub fn cmd_train_svm(
    records: &[AnnotationRecord],
    images: &ImageStore,
    cfg: &PipelineConfig,
    source: PoseSource<'_>,
    grid: Option<(&[f64], &[f64])>,
    out_dir: &Path,
) -> Result<SvmModel> {
    let bank = build_filter_bank();
    let split = split_regions(records, cfg.seed)?;
    let mut data: Vec<(Vec<f64>, ActivityLabel)> = Vec::with_capacity(split.train.len());
    for &r in &split.train {
        let person = &records[r.record].persons[r.person];
        let kps = match &source {
            PoseSource::GroundTruth => person.keypoint_set(),
            PoseSource::Model(net) => {
                predict_keypoints(net, records, images, r, &bank, &cfg.scatter)?
            }
        };
        data.push((angle_features(&kps), person.label));
    }
    if data.is_empty() {
        return Err(DssError::Training("no labeled regions to train on".into()));
    }
    let hp = match grid {
        Some((cs, gs)) => crate::svm::cross_validate(&data, cs, gs, 5, cfg.seed)?,
        None => cfg.svm,
    };
    let model = train_multiclass(&data, &hp)?;
    std::fs::create_dir_all(out_dir)?;
    io::write_svm(&out_dir.join("svm_model"), &model)?;
    Ok(model)
}

/// Activity evaluation artifacts.
pub struct ActivityReport {
    pub overall_accuracy: f64,
    pub per_class: Vec<(ActivityLabel, f64)>,
    /// (persons in the image, accuracy over its regions)
    pub per_person_count: Vec<(usize, f64)>,
}

/// Evaluates activity classification over the test split, emitting the
/// per-class table and the accuracy-vs-persons-per-image table.
pub fn cmd_eval_activity(
    records: &[AnnotationRecord],
    images: &ImageStore,
    cfg: &PipelineConfig,
    source: PoseSource<'_>,
    svm_model: &SvmModel,
    refs: &[RegionRef],
    out_dir: &Path,
) -> Result<ActivityReport> {
    let bank = build_filter_bank();
    let mut class_hit = [0usize; 6];
    let mut class_total = [0usize; 6];
    let mut by_count: std::collections::BTreeMap<usize, (usize, usize)> =
        std::collections::BTreeMap::new();
    for &r in refs {
        let record = &records[r.record];
        let person = &record.persons[r.person];
        let kps = match &source {
            PoseSource::GroundTruth => person.keypoint_set(),
            PoseSource::Model(net) => {
                predict_keypoints(net, records, images, r, &bank, &cfg.scatter)?
            }
        };
        let pred = predict(svm_model, &angle_features(&kps))?;
        let hit = pred.label == person.label;
        let ci = person.label.index();
        class_total[ci] += 1;
        if hit {
            class_hit[ci] += 1;
        }
        let entry = by_count.entry(record.persons.len()).or_insert((0, 0));
        entry.1 += 1;
        if hit {
            entry.0 += 1;
        }
    }
    let total: usize = class_total.iter().sum();
    let hits: usize = class_hit.iter().sum();
    let per_class: Vec<(ActivityLabel, f64)> = ALL_LABELS
        .iter()
        .enumerate()
        .filter(|(i, _)| class_total[*i] > 0)
        .map(|(i, &l)| (l, class_hit[i] as f64 / class_total[i] as f64))
        .collect();
    let per_person_count: Vec<(usize, f64)> = by_count
        .iter()
        .map(|(&k, &(h, t))| (k, h as f64 / t as f64))
        .collect();

    std::fs::create_dir_all(out_dir)?;
    io::write_csv(
        &out_dir.join("activity_per_class.csv"),
        &["label", "accuracy", "count"],
        &per_class
            .iter()
            .map(|(l, a)| {
                vec![
                    l.to_string(),
                    io::fmt_float(*a),
                    class_total[l.index()].to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    io::write_csv(
        &out_dir.join("activity_by_person_count.csv"),
        &["persons_per_image", "accuracy", "count"],
        &per_person_count
            .iter()
            .map(|(k, a)| vec![k.to_string(), io::fmt_float(*a), by_count[k].1.to_string()])
            .collect::<Vec<_>>(),
    )?;
    Ok(ActivityReport {
        overall_accuracy: hits as f64 / total as f64,
        per_class,
        per_person_count,
    })
}

/// One line of a detection-box file: `{"image": path, "boxes": [[x,y,w,h]]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionStubRecord {
    pub image: String,
    pub boxes: Vec<[f64; 4]>,
}

pub fn load_boxes(path: &Path) -> Result<Vec<DetectionStubRecord>> {
    use std::io::BufRead;
    let file = std::fs::File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| DssError::Schema {
                line: i + 1,
                msg: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

/// Per-person result of [`cmd_infer`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferredPerson {
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub keypoints: Vec<[f64; 2]>,
    pub label: ActivityLabel,
    pub violent: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferenceResult {
    pub image: String,
    pub persons: Vec<InferredPerson>,
    /// Processed regions per second, reported for runtime accounting.
    pub regions_per_second: f64,
}

/// Runs the full pipeline on one image with externally supplied person boxes:
/// crop, resize to 120x80, normalize, scatter, regress keypoints, classify.
/// Boxes outside the image are skipped with a warning entry in the log.
pub fn cmd_infer(
    scene: &Array2<f64>,
    image_name: &str,
    boxes: &[[f64; 4]],
    net: &RegressionNet,
    svm_model: &SvmModel,
    scfg: &ScatterConfig,
) -> Result<(InferenceResult, Vec<String>)> {
    let bank = build_filter_bank();
    let start = std::time::Instant::now();
    let mut persons = Vec::new();
    let mut warnings = Vec::new();
    for (bi, &bbox) in boxes.iter().enumerate() {
        let region = match extract_region(scene, bbox) {
            Ok(r) => r,
            Err(e) => {
                warnings.push(format!("box {bi} skipped: {e}"));
                continue;
            }
        };
        let feats = scatter(&region, &bank, scfg)?;
        let (rows, cols) = feats.map_dim();
        let x = Array3::from_shape_vec(
            (feats.num_channels(), rows, cols),
            feats.maps.iter().flat_map(|m| m.iter().copied()).collect(),
        )
        .expect("feature tensor");
        let out = net.forward(&x, false, 0)?;
        let norm = decode_keypoints(out.as_slice().unwrap(), 1.0, 1.0)?;
        let mut pts = Vec::with_capacity(NUM_KEYPOINTS);
        let [bx, by, bw, bh] = bbox;
        let mut kps_abs = [(0.0, 0.0); NUM_KEYPOINTS];
        for (i, &(nx, ny)) in norm.points.iter().enumerate() {
            let p = (bx + nx * bw, by + ny * bh);
            kps_abs[i] = p;
            pts.push([p.0, p.1]);
        }
        let pred = predict(svm_model, &angle_features(&KeypointSet::new(kps_abs)))?;
        persons.push(InferredPerson {
            bbox,
            keypoints: pts,
            label: pred.label,
            violent: pred.label.is_violent(),
        });
    }
    let elapsed = start.elapsed().as_secs_f64();
    let rps = if elapsed > 0.0 {
        persons.len() as f64 / elapsed
    } else {
        0.0
    };
    Ok((
        InferenceResult {
            image: image_name.to_string(),
            persons,
            regions_per_second: rps,
        },
        warnings,
    ))
}

/// Convenience loader: reads annotations and pairs them with a PNG directory
/// store. Exits with a dataset error when the file is missing.
pub fn open_dataset(dir: &Path) -> Result<(Vec<AnnotationRecord>, ImageStore)> {
    let ann = dir.join("annotations.jsonl");
    if !ann.exists() {
        return Err(DssError::param(format!(
            "dataset not found: {} is missing",
            ann.display()
        )));
    }
    let records = load_annotations(&ann)?;
    Ok((records, ImageStore::Dir(dir.to_path_buf())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_text_round_trip() {
        let text = "\
# pipeline settings
seed = 7
train.epochs = 30
train.drop_epoch = 10
train.base_lr = 0.002
svm.c = 14
svm.gamma = 0.00002
synth.persons_min = 2
synth.persons_max = 6
";
        let cfg = PipelineConfig::from_config_text(text).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.epochs, 30);
        assert_eq!(cfg.train.base_lr, 0.002);
        assert_eq!(cfg.svm.c, 14.0);
        assert_eq!(cfg.synth.persons_max, 6);
    }

    #[test]
    fn config_rejects_unknown_keys_with_line() {
        let err = PipelineConfig::from_config_text("x.y = 1\n").unwrap_err();
        match err {
            DssError::Schema { line, .. } => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn extract_region_shape_and_normalization() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let scene = Array2::from_shape_fn((300, 400), |_| rng.gen_range(0.0..1.0));
        let region = extract_region(&scene, [50.0, 40.0, 90.0, 140.0]).unwrap();
        assert_eq!(region.data.dim(), (REGION_ROWS, REGION_COLS));
        assert!(region.data.mean().unwrap().abs() < 1e-9);
        // out-of-image box errors
        assert!(extract_region(&scene, [500.0, 500.0, 50.0, 50.0]).is_err());
    }

    #[test]
    fn region_targets_stay_normalized() {
        let p = crate::data::PersonAnnotation {
            bbox: [10.0, 20.0, 50.0, 100.0],
            keypoints: (0..14).map(|i| [15.0 + i as f64, 30.0 + i as f64 * 5.0]).collect(),
            label: ActivityLabel::Neutral,
        };
        let t = region_targets(&p);
        assert!(t.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!((t[0] - 0.1).abs() < 1e-12);
    }
}
