//! Tracklet affinities: appearance, limiting constraints, difficult-situation
//! flags, weighted fusion and transition costs.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::fmt_real;
use crate::metric::{distance, AppearanceModel};
use crate::model::{temporal_overlap, RunConfig, Tracklet};

/// Scores below this produce no graph edge.
pub const SCORE_FLOOR: f64 = 1e-12;

/// Static exit area: a band along the image border.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitMap {
    pub width: f64,
    pub height: f64,
    pub band: f64,
}

impl ExitMap {
    pub fn new(width: f64, height: f64, band_frac: f64) -> Self {
        Self {
            width,
            height,
            band: (band_frac * width.min(height)).max(1.0),
        }
    }

    pub fn from_config(cfg: &RunConfig) -> Self {
        Self::new(cfg.frame_width, cfg.frame_height, cfg.exit_band_frac)
    }

    /// Points on or outside the border band count as exited.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] < self.band || p[1] < self.band || p[0] > self.width - self.band || p[1] > self.height - self.band
    }
}

/// `C_t * C_e` for the link `from -> to`.
pub fn limiting(from: &Tracklet, to: &Tracklet, exits: &ExitMap) -> u8 {
    if temporal_overlap(from, to) || to.start() <= from.end() {
        return 0;
    }
    u8::from(!exits.contains(from.last().bbox.center()))
}

/// Mean distance of `t`'s detections to `probe` under `t`'s own metric.
pub fn mean_probe_distance(t: &Tracklet, model: &AppearanceModel, probe_of: u64) -> Result<f64> {
    let metric = model.metrics.get(&t.id()).ok_or(Error::MissingModel(t.id()))?;
    let probe = model.probes.get(probe_of).ok_or(Error::MissingModel(probe_of))?;
    let mut sum = 0.0;
    for d in t.detections() {
        let z = d.feature.as_deref().ok_or(Error::MissingFeatures(t.id()))?;
        sum += distance(metric, z, probe)?;
    }
    Ok(sum / t.len() as f64)
}

/// Mean distance to the other tracklet's probe in units of the mean distance
/// to its own probe, so metrics of different scale become comparable.
pub fn relative_probe_distance(t: &Tracklet, model: &AppearanceModel, probe_of: u64) -> Result<f64> {
    let cross = mean_probe_distance(t, model, probe_of)?;
    let own = mean_probe_distance(t, model, t.id())?;
    Ok(if own > 0.0 { cross / own } else { cross })
}

/// `d_ab * d_ba`, the unnormalised inverse appearance affinity.
pub fn appearance_product(a: &Tracklet, b: &Tracklet, model: &AppearanceModel) -> Result<f64> {
    Ok(relative_probe_distance(a, model, b.id())? * relative_probe_distance(b, model, a.id())?)
}

/// `gamma / (d_ab d_ba)`, capped at one; a zero product is a perfect match.
pub fn appearance_affinity(product: f64, gamma: f64) -> f64 {
    if product <= 0.0 {
        1.0
    } else {
        (gamma / product).min(1.0)
    }
}

/// Normalisation making the best admissible pair score one: the smallest
/// positive product, or one when there is none.
pub fn gamma_for(products: impl IntoIterator<Item = f64>) -> f64 {
    products
        .into_iter()
        .filter(|p| *p > 0.0)
        .min_by(f64::total_cmp)
        .unwrap_or(1.0)
}

fn boxes_overlap_heavily(a: &Tracklet, b: &Tracklet, frame: u32, eta: f64) -> bool {
    match (a.at_frame(frame), b.at_frame(frame)) {
        (Some(da), Some(db)) => {
            let inter = da.bbox.intersection_area(&db.bbox);
            inter >= eta * da.bbox.area().min(db.bbox.area())
        }
        _ => false,
    }
}

/// Ids of tracklets involved in an occlusion: some pair whose boxes overlap
/// by at least `eta` of the smaller area at a frame where one of the two
/// starts or ends.
pub fn assess_difficult(tracklets: &[Tracklet], cfg: &RunConfig) -> BTreeSet<u64> {
    let mut flagged = BTreeSet::new();
    for (i, a) in tracklets.iter().enumerate() {
        for b in &tracklets[i + 1..] {
            if !temporal_overlap(a, b) {
                continue;
            }
            let frames = [a.start(), a.end(), b.start(), b.end()];
            if frames.iter().any(|&f| boxes_overlap_heavily(a, b, f, cfg.overlap_eta)) {
                flagged.insert(a.id());
                flagged.insert(b.id());
            }
        }
    }
    flagged
}

/// Motion exponent for a candidate link.
pub fn lambda_for(flagged: bool, gap: u32, lambda1: f64, lambda2: f64, gap_bound: u32) -> f64 {
    if !flagged || gap == 0 {
        1.0
    } else if gap <= gap_bound {
        lambda1
    } else {
        lambda2
    }
}

/// `P_m^lambda * P_a * C`, zero on a motion conflict or a failed constraint.
pub fn fused_score(pm: f64, pa: f64, c: u8, lambda: f64) -> f64 {
    if c == 0 || pm == f64::NEG_INFINITY {
        return 0.0;
    }
    // powf already gives 0^0 = 1.
    pm.powf(lambda) * pa
}

/// `-ln S`, or `None` when the link should not exist.
pub fn transition_cost(score: f64) -> Option<f64> {
    (score >= SCORE_FLOOR).then(|| -score.ln())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AffinityRow {
    pub segment: usize,
    pub from: u64,
    pub to: u64,
    pub gap: u32,
    pub motion: f64,
    pub appearance: f64,
    pub temporal: u8,
    pub exit: u8,
    pub flagged: bool,
    pub lambda: f64,
    pub score: f64,
    pub cost: Option<f64>,
}

impl AffinityRow {
    pub fn limiting(&self) -> u8 {
        self.temporal * self.exit
    }

    /// Recomputes `lambda`, `score` and `cost` for new weights.
    pub fn reweight(&mut self, lambda1: f64, lambda2: f64, gap_bound: u32) {
        self.lambda = lambda_for(self.flagged, self.gap, lambda1, lambda2, gap_bound);
        self.score = fused_score(self.motion, self.appearance, self.limiting(), self.lambda);
        self.cost = transition_cost(self.score);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct AffinityTable {
    pub rows: Vec<AffinityRow>,
}

impl AffinityTable {
    pub fn reweight(&mut self, lambda1: f64, lambda2: f64, gap_bound: u32) {
        for r in &mut self.rows {
            r.reweight(lambda1, lambda2, gap_bound);
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("segment,from,to,gap,motion,appearance,temporal,exit,flagged,lambda,score,cost\n");
        for r in &self.rows {
            let motion = if r.motion == f64::NEG_INFINITY {
                "-inf".to_string()
            } else {
                fmt_real(r.motion)
            };
            let cost = r.cost.map_or_else(|| "inf".to_string(), fmt_real);
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.segment,
                r.from,
                r.to,
                r.gap,
                motion,
                fmt_real(r.appearance),
                r.temporal,
                r.exit,
                u8::from(r.flagged),
                fmt_real(r.lambda),
                fmt_real(r.score),
                cost
            )
            .expect("writing to a String");
        }
        s
    }
}
