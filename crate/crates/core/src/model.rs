//! Domain types shared by every stage of the tracker.
//!
//! Frames are 1-based. Boxes use a top-left origin with `y` growing downward,
//! the MOT file convention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box in image pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn center(&self) -> [f64; 2] {
        [self.x + 0.5 * self.w, self.y + 0.5 * self.h]
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let ix = (self.x + self.w).min(other.x + other.w) - self.x.max(other.x);
        let iy = (self.y + self.h).min(other.y + other.h) - self.y.max(other.y);
        if ix <= 0.0 || iy <= 0.0 {
            0.0
        } else {
            ix * iy
        }
    }

    pub fn from_center(center: [f64; 2], w: f64, h: f64) -> Self {
        Self::new(center[0] - 0.5 * w, center[1] - 0.5 * h, w, h)
    }

    /// Componentwise linear blend, `t = 0` gives `self`.
    pub fn lerp(&self, other: &BBox, t: f64) -> BBox {
        BBox {
            x: self.x + (other.x - self.x) * t,
            y: self.y + (other.y - self.y) * t,
            w: self.w + (other.w - self.w) * t,
            h: self.h + (other.h - self.h) * t,
        }
    }
}

/// Intersection over union of two boxes with positive extent.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// One detector response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: u32,
    pub bbox: BBox,
    pub score: f64,
    pub feature: Option<Vec<f64>>,
    /// Ground-truth identity; only set by the synthesizer or evaluation helpers.
    pub id_hint: Option<u64>,
}

impl Detection {
    pub fn new(frame: u32, bbox: BBox, score: f64) -> Self {
        Self {
            frame,
            bbox,
            score,
            feature: None,
            id_hint: None,
        }
    }

    pub fn with_feature(mut self, feature: Vec<f64>) -> Self {
        self.feature = Some(feature);
        self
    }

    pub fn with_hint(mut self, id: u64) -> Self {
        self.id_hint = Some(id);
        self
    }
}

/// A gapless, frame-ordered run of detections presumed to share one identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tracklet {
    id: u64,
    detections: Vec<Detection>,
}

impl Tracklet {
    /// Fails unless `detections` is non-empty with exactly one detection per frame.
    pub fn new(id: u64, detections: Vec<Detection>) -> Result<Self> {
        if detections.is_empty() {
            return Err(Error::Config(format!("tracklet {id} has no detections")));
        }
        for pair in detections.windows(2) {
            if pair[1].frame != pair[0].frame + 1 {
                return Err(Error::Config(format!(
                    "tracklet {id} is not gapless: frame {} followed by {}",
                    pair[0].frame, pair[1].frame
                )));
            }
        }
        Ok(Self { id, detections })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn detections(&self) -> &[Detection] {
        &self.detections
    }

    pub fn start(&self) -> u32 {
        self.detections[0].frame
    }

    pub fn end(&self) -> u32 {
        self.detections[self.detections.len() - 1].frame
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    pub fn first(&self) -> &Detection {
        &self.detections[0]
    }

    pub fn last(&self) -> &Detection {
        &self.detections[self.detections.len() - 1]
    }

    pub fn at_frame(&self, frame: u32) -> Option<&Detection> {
        if frame < self.start() || frame > self.end() {
            return None;
        }
        self.detections.get((frame - self.start()) as usize)
    }

    pub fn centers(&self) -> Vec<[f64; 2]> {
        self.detections.iter().map(|d| d.bbox.center()).collect()
    }

    pub fn has_features(&self) -> bool {
        self.detections.iter().all(|d| d.feature.is_some())
    }

    /// Splits before `frame`; returns `(head, tail)` with the given new ids.
    /// Either side is `None` when it would be empty.
    pub fn split_at_frame(
        &self,
        frame: u32,
        head_id: u64,
        tail_id: u64,
    ) -> (Option<Tracklet>, Option<Tracklet>) {
        let cut = frame.saturating_sub(self.start()) as usize;
        let cut = cut.min(self.detections.len());
        let (head, tail) = self.detections.split_at(cut);
        let head = (!head.is_empty()).then(|| Tracklet {
            id: head_id,
            detections: head.to_vec(),
        });
        let tail = (!tail.is_empty()).then(|| Tracklet {
            id: tail_id,
            detections: tail.to_vec(),
        });
        (head, tail)
    }
}

/// True iff the frame spans of `a` and `b` intersect.
pub fn temporal_overlap(a: &Tracklet, b: &Tracklet) -> bool {
    a.start() <= b.end() && b.start() <= a.end()
}

/// Number of empty frames strictly between `a` and a later `b`.
pub fn gap_frames(a: &Tracklet, b: &Tracklet) -> Result<u32> {
    if b.start() <= a.end() {
        return Err(Error::Ordering {
            earlier: a.id(),
            later: b.id(),
        });
    }
    Ok(b.start() - a.end() - 1)
}

/// A linked chain of tracklets plus its gap-filled per-frame boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: u64,
    pub tracklet_ids: Vec<u64>,
    pub boxes: Vec<(u32, BBox)>,
}

impl Trajectory {
    /// Concatenates ordered, pairwise-disjoint tracklets and fills gaps by
    /// linear interpolation of the bounding boxes.
    pub fn from_tracklets(id: u64, members: &[&Tracklet]) -> Result<Self> {
        let mut boxes: Vec<(u32, BBox)> = Vec::new();
        for (k, t) in members.iter().enumerate() {
            if k > 0 {
                let prev = members[k - 1];
                gap_frames(prev, t)?;
                let (f0, b0) = (prev.end(), prev.last().bbox);
                let (f1, b1) = (t.start(), t.first().bbox);
                let span = (f1 - f0) as f64;
                for f in f0 + 1..f1 {
                    boxes.push((f, b0.lerp(&b1, (f - f0) as f64 / span)));
                }
            }
            boxes.extend(t.detections().iter().map(|d| (d.frame, d.bbox)));
        }
        Ok(Self {
            id,
            tracklet_ids: members.iter().map(|t| t.id()).collect(),
            boxes,
        })
    }

    pub fn start(&self) -> Option<u32> {
        self.boxes.first().map(|b| b.0)
    }

    pub fn end(&self) -> Option<u32> {
        self.boxes.last().map(|b| b.0)
    }
}

/// Run-wide tuning knobs. Field names double as config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub segment_len: u32,
    pub probe_window: usize,
    pub strongest_q: usize,
    pub split_run: usize,
    pub refine_iters: usize,
    /// Refinement split threshold; `None` derives it from each metric's
    /// positive-pair distances.
    pub distance_threshold: Option<f64>,
    pub rank_tol: f64,
    pub overlap_eta: f64,
    pub gap_bound: u32,
    pub lambda1: f64,
    pub lambda2: f64,
    pub exit_band_frac: f64,
    pub entry_exit_prob: f64,
    pub feature_dim: usize,
    pub rng_seed: u64,
    pub det_threshold: f64,
    pub frame_width: f64,
    pub frame_height: f64,
    pub pair_cap: usize,
    pub max_rank: usize,
    pub use_appearance: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            segment_len: 50,
            probe_window: 8,
            strongest_q: 4,
            split_run: 5,
            refine_iters: 2,
            distance_threshold: None,
            rank_tol: 0.01,
            overlap_eta: 0.3,
            gap_bound: 20,
            lambda1: 0.5,
            lambda2: 0.2,
            exit_band_frac: 0.05,
            entry_exit_prob: 0.1,
            feature_dim: 32,
            rng_seed: 0,
            det_threshold: 0.6,
            frame_width: 640.0,
            frame_height: 480.0,
            pair_cap: 2000,
            max_rank: 32,
            use_appearance: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.lambda1) || !(0.0..=1.0).contains(&self.lambda2) {
            return fail("lambda1 and lambda2 must lie in [0, 1]");
        }
        if self.probe_window == 0 {
            return fail("probe_window must be positive");
        }
        if (self.segment_len as usize) < 2 * self.probe_window {
            return fail("segment_len must be at least 2 * probe_window");
        }
        if !(self.overlap_eta > 0.0 && self.overlap_eta < 1.0) {
            return fail("overlap_eta must lie in (0, 1)");
        }
        if self.rank_tol <= 0.0 {
            return fail("rank_tol must be positive");
        }
        if let Some(w) = self.distance_threshold {
            if w <= 0.0 || !w.is_finite() {
                return fail("distance_threshold must be positive");
            }
        }
        if !(self.entry_exit_prob > 0.0 && self.entry_exit_prob < 1.0) {
            return fail("entry_exit_prob must lie in (0, 1)");
        }
        if !(self.det_threshold > 0.0 && self.det_threshold < 1.0) {
            return fail("det_threshold must lie in (0, 1)");
        }
        if self.strongest_q < 2 {
            return fail("strongest_q must be at least 2");
        }
        if self.split_run == 0 {
            return fail("split_run must be positive");
        }
        if self.feature_dim == 0 || self.max_rank == 0 || self.pair_cap == 0 {
            return fail("feature_dim, max_rank and pair_cap must be positive");
        }
        if self.frame_width <= 0.0 || self.frame_height <= 0.0 {
            return fail("frame dimensions must be positive");
        }
        if !(0.0..0.5).contains(&self.exit_band_frac) {
            return fail("exit_band_frac must lie in [0, 0.5)");
        }
        Ok(())
    }

    /// Entry and exit cost, `-log(epsilon)`.
    pub fn entry_exit_cost(&self) -> f64 {
        -self.entry_exit_prob.ln()
    }
}
