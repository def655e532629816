//! CLEAR MOT evaluation and supervised learning of the motion weights.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::Serialize;

use crate::affinity::AffinityTable;
use crate::association::associate;
use crate::error::{Error, Result};
use crate::io::{trajectories_to_trackset, TrackSet};
use crate::model::{iou, BBox, RunConfig, Tracklet};

/// IoU a match must exceed.
pub const MATCH_IOU: f64 = 0.5;
pub const MOSTLY_TRACKED: f64 = 0.8;
pub const MOSTLY_LOST: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub mota: f64,
    pub motp: f64,
    pub recall: f64,
    pub precision: f64,
    pub faf: f64,
    pub gt: usize,
    pub mt: usize,
    pub pt: usize,
    pub ml: usize,
    pub frag: usize,
    pub ids: usize,
    pub fp: usize,
    pub fn_: usize,
    pub gt_detections: usize,
    pub matched_count: usize,
    pub ids_per_match: f64,
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: [(&str, String); 15] = [
            ("MOTA", format!("{:.4}", self.mota)),
            ("MOTP", format!("{:.4}", self.motp)),
            ("Recall", format!("{:.4}", self.recall)),
            ("Precision", format!("{:.4}", self.precision)),
            ("FAF", format!("{:.4}", self.faf)),
            ("GT", self.gt.to_string()),
            ("MT", self.mt.to_string()),
            ("PT", self.pt.to_string()),
            ("ML", self.ml.to_string()),
            ("Frag", self.frag.to_string()),
            ("IDS", self.ids.to_string()),
            ("FP", self.fp.to_string()),
            ("FN", self.fn_.to_string()),
            ("Matched", self.matched_count.to_string()),
            ("IDS/match", format!("{:.4}", self.ids_per_match)),
        ];
        for (name, value) in rows {
            writeln!(f, "{name:<10} {value:>10}")?;
        }
        Ok(())
    }
}

fn by_frame(tracks: &TrackSet) -> BTreeMap<u32, Vec<(u64, BBox)>> {
    let mut out: BTreeMap<u32, Vec<(u64, BBox)>> = BTreeMap::new();
    for (&id, boxes) in tracks {
        for &(f, b) in boxes {
            out.entry(f).or_default().push((id, b));
        }
    }
    out
}

const IOU_SCALE: f64 = 1e9;

/// Maximum-IoU assignment between the listed GT and hypothesis boxes, keeping
/// only pairs above the match threshold.
fn hungarian(gt: &[(u64, BBox)], hyp: &[(u64, BBox)]) -> Vec<(usize, usize)> {
    if gt.is_empty() || hyp.is_empty() {
        return Vec::new();
    }
    let transpose = gt.len() > hyp.len();
    let (rows, cols) = if transpose { (hyp, gt) } else { (gt, hyp) };
    let weight = |r: &BBox, c: &BBox| {
        let v = iou(r, c);
        if v > MATCH_IOU { (v * IOU_SCALE).round() as i64 } else { 0 }
    };
    let m = Matrix::from_rows(rows.iter().map(|(_, r)| cols.iter().map(|(_, c)| weight(r, c)).collect::<Vec<_>>()))
        .expect("rectangular rows");
    let (_, assign) = kuhn_munkres(&m);
    assign
        .into_iter()
        .enumerate()
        .filter(|&(r, c)| m[(r, c)] > 0)
        .map(|(r, c)| if transpose { (c, r) } else { (r, c) })
        .collect()
}

/// CLEAR MOT metrics of `result` against `truth`.
pub fn evaluate(result: &TrackSet, truth: &TrackSet) -> Result<MetricReport> {
    let gt_frames = by_frame(truth);
    if gt_frames.is_empty() {
        return Err(Error::EmptyGroundTruth);
    }
    let hyp_frames = by_frame(result);
    let frames: BTreeSet<u32> = gt_frames.keys().chain(hyp_frames.keys()).copied().collect();

    let mut prev: BTreeMap<u64, u64> = BTreeMap::new();
    let mut last_hyp: BTreeMap<u64, u64> = BTreeMap::new();
    let mut tracked: BTreeMap<u64, Vec<bool>> = BTreeMap::new();
    let (mut fp, mut fn_, mut ids, mut matches, mut iou_sum, mut gt_total) = (0, 0, 0, 0, 0.0, 0);
    let empty = Vec::new();

    for f in &frames {
        let g = gt_frames.get(f).unwrap_or(&empty);
        let h = hyp_frames.get(f).unwrap_or(&empty);
        gt_total += g.len();
        let mut current: BTreeMap<u64, (u64, f64)> = BTreeMap::new();
        let mut used_h: BTreeSet<u64> = BTreeSet::new();
        for (gid, gb) in g {
            let Some(&hid) = prev.get(gid) else { continue };
            if let Some((_, hb)) = h.iter().find(|(id, _)| *id == hid) {
                let v = iou(gb, hb);
                if v > MATCH_IOU {
                    current.insert(*gid, (hid, v));
                    used_h.insert(hid);
                }
            }
        }
        let free_g: Vec<(u64, BBox)> = g.iter().filter(|(id, _)| !current.contains_key(id)).copied().collect();
        let free_h: Vec<(u64, BBox)> = h.iter().filter(|(id, _)| !used_h.contains(id)).copied().collect();
        for (gi, hi) in hungarian(&free_g, &free_h) {
            current.insert(free_g[gi].0, (free_h[hi].0, iou(&free_g[gi].1, &free_h[hi].1)));
        }
        for (gid, _) in g {
            let hit = current.contains_key(gid);
            tracked.entry(*gid).or_default().push(hit);
        }
        for (gid, &(hid, v)) in &current {
            if last_hyp.get(gid).is_some_and(|&old| old != hid) {
                ids += 1;
            }
            last_hyp.insert(*gid, hid);
            iou_sum += v;
        }
        matches += current.len();
        fn_ += g.len() - current.len();
        fp += h.len() - current.len();
        prev = current.into_iter().map(|(g, (h, _))| (g, h)).collect();
    }

    let (mut mt, mut pt, mut ml, mut frag) = (0, 0, 0, 0);
    for hits in tracked.values() {
        let cover = hits.iter().filter(|&&x| x).count() as f64 / hits.len() as f64;
        if cover >= MOSTLY_TRACKED {
            mt += 1;
        } else if cover < MOSTLY_LOST {
            ml += 1;
        } else {
            pt += 1;
        }
        let runs = hits.iter().enumerate().filter(|&(k, &x)| x && (k == 0 || !hits[k - 1])).count();
        frag += runs.saturating_sub(1);
    }
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    Ok(MetricReport {
        mota: 1.0 - (fn_ + fp + ids) as f64 / gt_total as f64,
        motp: ratio(iou_sum, matches as f64),
        recall: ratio(matches as f64, gt_total as f64),
        precision: ratio(matches as f64, (matches + fp) as f64),
        faf: ratio(fp as f64, frames.len() as f64),
        gt: tracked.len(),
        mt,
        pt,
        ml,
        frag,
        ids,
        fp,
        fn_,
        gt_detections: gt_total,
        matched_count: matches,
        ids_per_match: ratio(ids as f64, matches as f64),
    })
}

/// One association run of the weight sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub level: u8,
    pub lambda1: f64,
    pub lambda2: f64,
    pub mota: f64,
    pub ids: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightLearning {
    pub lambda1: f64,
    pub lambda2: f64,
    pub solves: usize,
    pub sweep: Vec<SweepPoint>,
    pub report: MetricReport,
}

fn better(a: &MetricReport, incumbent: Option<&MetricReport>) -> bool {
    match incumbent {
        None => true,
        Some(b) => a.mota > b.mota || (a.mota == b.mota && a.ids < b.ids),
    }
}

/// Greedy per-level grid search over `{0, 0.1, ..., 1}`: level one first with
/// level two at zero, then level two with the learned level-one weight.
pub fn learn_weights(
    tracklets: &[Tracklet],
    table: &AffinityTable,
    truth: &TrackSet,
    cfg: &RunConfig,
) -> Result<WeightLearning> {
    let mut lambdas = [0.0f64, 0.0];
    let mut sweep = Vec::with_capacity(22);
    let mut best: Option<MetricReport> = None;
    let mut table = table.clone();
    for level in 0..2 {
        let mut chosen = lambdas[level];
        for step in 0..=10 {
            let mut trial = lambdas;
            trial[level] = f64::from(step) / 10.0;
            table.reweight(trial[0], trial[1], cfg.gap_bound);
            let assoc = associate(tracklets, &table, cfg)?;
            let report = evaluate(&trajectories_to_trackset(&assoc.trajectories), truth)?;
            sweep.push(SweepPoint {
                level: level as u8 + 1,
                lambda1: trial[0],
                lambda2: trial[1],
                mota: report.mota,
                ids: report.ids,
            });
            if better(&report, best.as_ref()) {
                chosen = trial[level];
                best = Some(report);
            }
        }
        lambdas[level] = chosen;
    }
    Ok(WeightLearning {
        lambda1: lambdas[0],
        lambda2: lambdas[1],
        solves: sweep.len(),
        sweep,
        report: best.expect("at least one sweep point"),
    })
}
