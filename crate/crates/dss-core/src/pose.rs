//! Keypoint decoding, skeleton construction, limb-orientation features, and
//! keypoint-distance scoring.
//!
//! The 14 keypoints follow a fixed naming: P1 head, P2 neck, P3/P6 shoulders
//! (right/left), P4/P7 elbows, P5/P8 wrists, P9/P12 hips, P10/P13 knees,
//! P11/P14 ankles. Angles use a mathematical y-up convention: the y axis is
//! flipped before `atan2`, so a limb pointing "up" in image coordinates has
//! absolute angle 90 degrees.

use serde::{Deserialize, Serialize};

use crate::{DssError, Result};

pub const NUM_KEYPOINTS: usize = 14;

pub const KEYPOINT_NAMES: [&str; NUM_KEYPOINTS] = [
    "head",
    "neck",
    "r_shoulder",
    "r_elbow",
    "r_wrist",
    "l_shoulder",
    "l_elbow",
    "l_wrist",
    "r_hip",
    "r_knee",
    "r_ankle",
    "l_hip",
    "l_knee",
    "l_ankle",
];

/// Body-region grouping used by the evaluation reports.
pub const REGION_OF_KEYPOINT: [&str; NUM_KEYPOINTS] = [
    "facial", "facial", "arms", "arms", "arms", "arms", "arms", "arms", "legs", "legs", "legs",
    "legs", "legs", "legs",
];

/// The fixed 14-edge skeleton, as (from, to) zero-based keypoint indices:
/// head-neck, the two arm chains, torso sides, the hip cross-bar, and the two
/// leg chains.
pub const SKELETON_EDGES: [(usize, usize); 14] = [
    (0, 1),   // E1  head - neck
    (1, 2),   // E2  neck - r_shoulder
    (2, 3),   // E3  r_shoulder - r_elbow
    (3, 4),   // E4  r_elbow - r_wrist
    (1, 5),   // E5  neck - l_shoulder
    (5, 6),   // E6  l_shoulder - l_elbow
    (6, 7),   // E7  l_elbow - l_wrist
    (2, 8),   // E8  r_shoulder - r_hip
    (5, 11),  // E9  l_shoulder - l_hip
    (8, 11),  // E10 r_hip - l_hip
    (8, 9),   // E11 r_hip - r_knee
    (9, 10),  // E12 r_knee - r_ankle
    (11, 12), // E13 l_hip - l_knee
    (12, 13), // E14 l_knee - l_ankle
];

/// The 13 adjacent-edge pairs whose relative angles feed the classifier
/// (indices into [`SKELETON_EDGES`]); each pair shares a joint keypoint.
pub const JOINT_EDGE_PAIRS: [(usize, usize); 13] = [
    (0, 1),   // head-neck vs neck-r_shoulder
    (1, 2),   // right shoulder joint
    (2, 3),   // right elbow
    (4, 5),   // left shoulder joint
    (5, 6),   // left elbow
    (1, 7),   // neck-r_shoulder vs r torso side
    (4, 8),   // neck-l_shoulder vs l torso side
    (7, 10),  // r torso side vs r thigh
    (8, 12),  // l torso side vs l thigh
    (10, 11), // right knee
    (12, 13), // left knee
    (9, 10),  // hip bar vs r thigh
    (9, 12),  // hip bar vs l thigh
];

/// Number of entries in an [`AngleVector`]: 14 absolute + 13 relative angles.
pub const ANGLE_VECTOR_LEN: usize = SKELETON_EDGES.len() + JOINT_EDGE_PAIRS.len();

/// 14 named body keypoints in region pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointSet {
    pub points: [(f64, f64); NUM_KEYPOINTS],
}

impl KeypointSet {
    pub fn new(points: [(f64, f64); NUM_KEYPOINTS]) -> Self {
        KeypointSet { points }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        let mut p = self.points;
        for q in &mut p {
            q.0 += dx;
            q.1 += dy;
        }
        KeypointSet { points: p }
    }

    /// Rotation by `deg` counter-clockwise in the y-up sense about `center`
    /// (image coordinates, y down).
    pub fn rotated(&self, deg: f64, center: (f64, f64)) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        let mut p = self.points;
        for q in &mut p {
            let dx = q.0 - center.0;
            let dy = center.1 - q.1; // to y-up
            let rx = c * dx - s * dy;
            let ry = s * dx + c * dy;
            q.0 = center.0 + rx;
            q.1 = center.1 - ry;
        }
        KeypointSet { points: p }
    }

    pub fn scaled(&self, factor: f64, center: (f64, f64)) -> Self {
        let mut p = self.points;
        for q in &mut p {
            q.0 = center.0 + (q.0 - center.0) * factor;
            q.1 = center.1 + (q.1 - center.1) * factor;
        }
        KeypointSet { points: p }
    }

    pub fn centroid(&self) -> (f64, f64) {
        let n = NUM_KEYPOINTS as f64;
        let sx: f64 = self.points.iter().map(|p| p.0).sum();
        let sy: f64 = self.points.iter().map(|p| p.1).sum();
        (sx / n, sy / n)
    }

    /// Encodes to the 28-element normalized vector (inverse of
    /// [`decode_keypoints`]).
    pub fn encode(&self, region_w: f64, region_h: f64) -> [f64; 28] {
        let mut v = [0.0; 28];
        for (i, &(x, y)) in self.points.iter().enumerate() {
            v[2 * i] = (x / region_w).clamp(0.0, 1.0);
            v[2 * i + 1] = (y / region_h).clamp(0.0, 1.0);
        }
        v
    }
}

/// Decodes a 28-element normalized coordinate vector into keypoints, clamping
/// to the region bounds: (x_i, y_i) = (v[2i]*w, v[2i+1]*h).
pub fn decode_keypoints(output: &[f64], region_w: f64, region_h: f64) -> Result<KeypointSet> {
    if output.len() != 2 * NUM_KEYPOINTS {
        return Err(DssError::dim(format!(
            "keypoint vector must have 28 entries, got {}",
            output.len()
        )));
    }
    let mut points = [(0.0, 0.0); NUM_KEYPOINTS];
    for (i, p) in points.iter_mut().enumerate() {
        p.0 = (output[2 * i] * region_w).clamp(0.0, region_w);
        p.1 = (output[2 * i + 1] * region_h).clamp(0.0, region_h);
    }
    Ok(KeypointSet { points })
}

/// Keypoints plus the fixed limb edge list.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub keypoints: KeypointSet,
    /// Edges flagged degenerate (coincident endpoints).
    pub degenerate: [bool; SKELETON_EDGES.len()],
}

/// Attaches the fixed edge list; flags zero-length limbs.
pub fn build_skeleton(kps: &KeypointSet) -> Skeleton {
    let mut degenerate = [false; SKELETON_EDGES.len()];
    for (e, &(a, b)) in SKELETON_EDGES.iter().enumerate() {
        let (ax, ay) = kps.points[a];
        let (bx, by) = kps.points[b];
        degenerate[e] = (ax - bx).abs() < 1e-12 && (ay - by).abs() < 1e-12;
    }
    Skeleton {
        keypoints: kps.clone(),
        degenerate,
    }
}

/// Limb-orientation feature vector: absolute limb angles (degrees in [0, 360))
/// for each edge in order, then the relative angle (folded to [0, 180]) for
/// each joint pair in [`JOINT_EDGE_PAIRS`] order. Degenerate limbs contribute
/// angle 0 and set their mask bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleVector {
    pub values: Vec<f64>,
    pub degenerate_mask: Vec<bool>,
}

/// Absolute angle of the edge from keypoint a to b, y-up convention.
fn edge_angle(kps: &KeypointSet, edge: usize) -> f64 {
    let (a, b) = SKELETON_EDGES[edge];
    let (ax, ay) = kps.points[a];
    let (bx, by) = kps.points[b];
    let dx = bx - ax;
    let dy = ay - by; // flip image y so "up" is positive
    let deg = dy.atan2(dx).to_degrees();
    let deg = if deg < 0.0 { deg + 360.0 } else { deg };
    if deg >= 360.0 {
        deg - 360.0
    } else {
        deg
    }
}

/// Computes the orientation feature vector of a skeleton.
pub fn orientation_vector(skel: &Skeleton) -> AngleVector {
    let mut values = Vec::with_capacity(ANGLE_VECTOR_LEN);
    let mut mask = vec![false; SKELETON_EDGES.len()];
    let mut abs = [0.0; SKELETON_EDGES.len()];
    for e in 0..SKELETON_EDGES.len() {
        if skel.degenerate[e] {
            mask[e] = true;
            abs[e] = 0.0;
        } else {
            abs[e] = edge_angle(&skel.keypoints, e);
        }
        values.push(abs[e]);
    }
    for &(e1, e2) in &JOINT_EDGE_PAIRS {
        if skel.degenerate[e1] || skel.degenerate[e2] {
            values.push(0.0);
        } else {
            let mut d = (abs[e1] - abs[e2]).abs() % 360.0;
            if d > 180.0 {
                d = 360.0 - d;
            }
            values.push(d);
        }
    }
    AngleVector {
        values,
        degenerate_mask: mask,
    }
}

/// Per-keypoint hit flags and mean accuracy at pixel distance `d`.
#[derive(Debug, Clone)]
pub struct PckResult {
    pub hits: [bool; NUM_KEYPOINTS],
    pub accuracy: f64,
}

/// A keypoint counts as correct when its Euclidean distance to the reference
/// is at most `d` pixels.
pub fn pck_at_d(pred: &KeypointSet, truth: &KeypointSet, d: f64) -> PckResult {
    let mut hits = [false; NUM_KEYPOINTS];
    let mut n = 0usize;
    for i in 0..NUM_KEYPOINTS {
        let dx = pred.points[i].0 - truth.points[i].0;
        let dy = pred.points[i].1 - truth.points[i].1;
        if (dx * dx + dy * dy).sqrt() <= d {
            hits[i] = true;
            n += 1;
        }
    }
    PckResult {
        hits,
        accuracy: n as f64 / NUM_KEYPOINTS as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_kps(seed: u64) -> KeypointSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = [(0.0, 0.0); NUM_KEYPOINTS];
        for p in &mut pts {
            p.0 = rng.gen_range(5.0..75.0);
            p.1 = rng.gen_range(5.0..115.0);
        }
        KeypointSet::new(pts)
    }

    #[test]
    fn decode_center() {
        let v = [0.5; 28];
        let kps = decode_keypoints(&v, 120.0, 80.0).unwrap();
        for &(x, y) in &kps.points {
            assert_eq!((x, y), (60.0, 40.0));
        }
    }

    #[test]
    fn decode_clamps_out_of_range() {
        let mut v = [0.5; 28];
        v[0] = 1.2;
        v[1] = -0.1;
        let kps = decode_keypoints(&v, 120.0, 80.0).unwrap();
        assert_eq!(kps.points[0], (120.0, 0.0));
    }

    #[test]
    fn decode_rejects_wrong_length() {
        assert!(decode_keypoints(&[0.0; 27], 120.0, 80.0).is_err());
    }

    #[test]
    fn encode_decode_round_trip_equals_clamp() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v: Vec<f64> = (0..28).map(|_| rng.gen_range(-0.3..1.3)).collect();
        let kps = decode_keypoints(&v, 120.0, 80.0).unwrap();
        let enc = kps.encode(120.0, 80.0);
        for i in 0..28 {
            assert!((enc[i] - v[i].clamp(0.0, 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn skeleton_has_fixed_14_edges() {
        let s1 = build_skeleton(&random_kps(1));
        assert_eq!(SKELETON_EDGES.len(), 14);
        assert_eq!(s1.degenerate.len(), 14);
        for &(a, b) in &SKELETON_EDGES {
            assert!(a < NUM_KEYPOINTS && b < NUM_KEYPOINTS && a != b);
        }
        // two calls produce identical edge interpretation
        let s2 = build_skeleton(&s1.keypoints);
        assert_eq!(s1, s2);
    }

    #[test]
    fn coincident_points_flag_degenerate_edge() {
        let mut kps = random_kps(3);
        kps.points[1] = kps.points[0]; // neck == head
        let skel = build_skeleton(&kps);
        assert!(skel.degenerate[0]);
        let av = orientation_vector(&skel);
        assert_eq!(av.values[0], 0.0);
        assert!(av.degenerate_mask[0]);
    }

    #[test]
    fn vertical_limb_has_angle_90_under_y_up() {
        // Limb from (0,0) to (0,-5) in image coords (y down) points upward,
        // so its absolute angle is 90 degrees.
        let mut kps = random_kps(4);
        kps.points[0] = (0.0, -5.0); // head
        kps.points[1] = (0.0, 0.0); // neck
        let av = orientation_vector(&build_skeleton(&kps));
        // E1 runs head -> neck (downward): 270. The neck -> head direction is 90.
        assert!((av.values[0] - 270.0).abs() < 1e-9);
        let mut kps2 = kps.clone();
        kps2.points[0] = (0.0, 0.0);
        kps2.points[1] = (0.0, -5.0);
        let av2 = orientation_vector(&build_skeleton(&kps2));
        assert!((av2.values[0] - 90.0).abs() < 1e-9);
    }

    #[test]
    fn angle_vector_has_documented_length() {
        let av = orientation_vector(&build_skeleton(&random_kps(5)));
        assert_eq!(av.values.len(), ANGLE_VECTOR_LEN);
        assert_eq!(ANGLE_VECTOR_LEN, 27);
        assert!(av.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rotation_shifts_absolute_angles_and_fixes_relative() {
        for seed in 0..50 {
            let kps = random_kps(seed);
            let skel = build_skeleton(&kps);
            let av = orientation_vector(&skel);
            let rot = kps.rotated(30.0, kps.centroid());
            let avr = orientation_vector(&build_skeleton(&rot));
            for e in 0..14 {
                let d = (avr.values[e] - av.values[e] - 30.0).rem_euclid(360.0);
                let d = d.min(360.0 - d);
                assert!(d < 1e-9, "edge {e}: {} vs {}", av.values[e], avr.values[e]);
            }
            for k in 14..27 {
                assert!((avr.values[k] - av.values[k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn pck_exact_match_and_displacement() {
        let kps = random_kps(6);
        let r = pck_at_d(&kps, &kps, 0.0);
        assert_eq!(r.accuracy, 1.0);
        let mut pred = kps.clone();
        pred.points[4].0 += 6.0;
        let r5 = pck_at_d(&pred, &kps, 5.0);
        assert!((r5.accuracy - 13.0 / 14.0).abs() < 1e-12);
        assert!(!r5.hits[4]);
        let r6 = pck_at_d(&pred, &kps, 6.0);
        assert_eq!(r6.accuracy, 1.0);
    }

    proptest! {
        #[test]
        fn translation_leaves_angles_exactly(seed in 0u64..200, dx in -50.0f64..50.0, dy in -50.0f64..50.0) {
            let kps = random_kps(seed);
            let a = orientation_vector(&build_skeleton(&kps));
            let b = orientation_vector(&build_skeleton(&kps.translated(dx, dy)));
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn uniform_scaling_leaves_angles(seed in 0u64..200, f in 0.1f64..5.0, cx in 0.0f64..80.0, cy in 0.0f64..120.0) {
            let kps = random_kps(seed);
            let a = orientation_vector(&build_skeleton(&kps));
            let b = orientation_vector(&build_skeleton(&kps.scaled(f, (cx, cy))));
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn pck_monotone_in_d(seed in 0u64..100, d1 in 0.0f64..20.0, d2 in 0.0f64..20.0) {
            let truth = random_kps(seed);
            let pred = random_kps(seed + 1000);
            let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            let a = pck_at_d(&pred, &truth, lo).accuracy;
            let b = pck_at_d(&pred, &truth, hi).accuracy;
            prop_assert!(a <= b);
        }
    }
}
