//! Online target-specific metric learning and tracklet refinement.
//!
//! Each tracklet gets a projection `W` (`N_d x r`) defining the distance
//! `D(x) = ||W^T x||^2` on absolute feature differences `x = |z - z'|`. `W` is
//! learned by minimising the summed logistic loss
//! `log(1 + exp(D(x_p) - D(x_n)))` over (positive, negative) difference pairs,
//! one orthogonal column at a time.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::affinity::ExitMap;
use crate::error::{Error, Result};
use crate::model::{temporal_overlap, RunConfig, Tracklet};
use crate::tracklet_gen::IdSource;

const ARMIJO_C: f64 = 1e-4;
const COLUMN_MIN_GAIN: f64 = 1e-4;
const STEP_TOL: f64 = 1e-7;
const MAX_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Samples from the first `probe_window` frames only.
    Initial,
    /// Samples from the whole tracklet.
    Reliable,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairSet {
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetMetric {
    pub tracklet_id: u64,
    columns: Vec<Vec<f64>>,
    /// Total loss after each accepted column.
    pub column_losses: Vec<f64>,
    /// Loss after every accepted gradient step, per column.
    pub step_losses: Vec<Vec<f64>>,
}

impl TargetMetric {
    pub fn identity(tracklet_id: u64, dim: usize) -> Self {
        let columns = (0..dim)
            .map(|k| {
                let mut c = vec![0.0; dim];
                c[k] = 1.0;
                c
            })
            .collect();
        Self {
            tracklet_id,
            columns,
            column_losses: Vec::new(),
            step_losses: Vec::new(),
        }
    }

    pub fn from_columns(tracklet_id: u64, columns: Vec<Vec<f64>>) -> Self {
        assert!(!columns.is_empty(), "a metric needs at least one column");
        Self {
            tracklet_id,
            columns,
            column_losses: Vec::new(),
            step_losses: Vec::new(),
        }
    }

    pub fn rank(&self) -> usize {
        self.columns.len()
    }

    pub fn dim(&self) -> usize {
        self.columns[0].len()
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn w(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim(), self.rank(), |r, c| self.columns[c][r])
    }

    /// `||W^T x||^2` for a difference vector.
    pub fn project_sq(&self, x: &[f64]) -> f64 {
        self.columns.iter().map(|c| dot(c, x).powi(2)).sum()
    }

    /// Largest `|w_i . w_j|` over distinct columns.
    pub fn max_column_overlap(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.columns.len() {
            for j in i + 1..self.columns.len() {
                worst = worst.max(dot(&self.columns[i], &self.columns[j]).abs());
            }
        }
        worst
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.column_losses.last().copied()
    }
}

/// `||W^T |a - b| ||^2`.
pub fn distance(metric: &TargetMetric, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != metric.dim() || b.len() != metric.dim() {
        let got = if a.len() != metric.dim() { a.len() } else { b.len() };
        return Err(Error::Dimension {
            expected: metric.dim(),
            got,
        });
    }
    Ok(metric.project_sq(&abs_diff(a, b)))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn abs_diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect()
}

fn softplus(a: f64) -> f64 {
    if a > 0.0 {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// Features of the `q` strongest detections within the phase's window,
/// ties broken by earlier frame.
pub fn strongest_samples<'a>(t: &'a Tracklet, phase: Phase, cfg: &RunConfig) -> Result<Vec<&'a [f64]>> {
    let window = match phase {
        Phase::Initial => cfg.probe_window.min(t.len()),
        Phase::Reliable => t.len(),
    };
    let mut idx: Vec<usize> = (0..window).collect();
    let dets = t.detections();
    idx.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    idx.truncate(cfg.strongest_q);
    idx.sort_unstable();
    idx.into_iter()
        .map(|i| dets[i].feature.as_deref().ok_or(Error::MissingFeatures(t.id())))
        .collect()
}

/// Whether `other` is known to be a different person than `target`: it is
/// visible at the same time, or one of the two left through the exit band
/// before the other appeared.
pub fn is_negative_candidate(target: &Tracklet, other: &Tracklet, exits: &ExitMap) -> bool {
    if temporal_overlap(target, other) {
        return true;
    }
    if other.end() < target.start() {
        return exits.contains(other.last().bbox.center());
    }
    exits.contains(target.last().bbox.center())
}

pub fn collect_pairs(
    target: &Tracklet,
    others: &[&Tracklet],
    phase: Phase,
    exits: &ExitMap,
    cfg: &RunConfig,
) -> Result<PairSet> {
    if !target.has_features() {
        return Err(Error::MissingFeatures(target.id()));
    }
    let own = strongest_samples(target, phase, cfg)?;
    let mut pairs = PairSet::default();
    for i in 0..own.len() {
        for j in i + 1..own.len() {
            pairs.positives.push(abs_diff(own[i], own[j]));
        }
    }
    for other in others {
        if other.id() == target.id() {
            continue;
        }
        if !other.has_features() {
            return Err(Error::MissingFeatures(other.id()));
        }
        if !is_negative_candidate(target, other, exits) {
            continue;
        }
        let theirs = strongest_samples(other, phase, cfg)?;
        for a in &own {
            for b in &theirs {
                pairs.negatives.push(abs_diff(a, b));
            }
        }
    }
    Ok(pairs)
}

/// Loss bookkeeping for one column search: accumulated `||W^T x||^2` of the
/// already accepted columns and the sampled (positive, negative) index pairs.
struct Objective<'a> {
    pos: &'a [Vec<f64>],
    neg: &'a [Vec<f64>],
    pairs: &'a [(usize, usize)],
    base_p: Vec<f64>,
    base_n: Vec<f64>,
}

impl Objective<'_> {
    fn projections(&self, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (
            self.pos.iter().map(|p| dot(w, p)).collect(),
            self.neg.iter().map(|n| dot(w, n)).collect(),
        )
    }

    fn loss(&self, w: &[f64]) -> f64 {
        let (u, v) = self.projections(w);
        self.pairs
            .iter()
            .map(|&(i, j)| softplus(self.base_p[i] + u[i] * u[i] - self.base_n[j] - v[j] * v[j]))
            .sum()
    }

    fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let (u, v) = self.projections(w);
        let mut cp = vec![0.0; self.pos.len()];
        let mut cn = vec![0.0; self.neg.len()];
        for &(i, j) in self.pairs {
            let s = sigmoid(self.base_p[i] + u[i] * u[i] - self.base_n[j] - v[j] * v[j]);
            cp[i] += s;
            cn[j] += s;
        }
        let mut g = vec![0.0; w.len()];
        for (i, p) in self.pos.iter().enumerate() {
            let k = 2.0 * cp[i] * u[i];
            g.iter_mut().zip(p).for_each(|(g, x)| *g += k * x);
        }
        for (j, n) in self.neg.iter().enumerate() {
            let k = 2.0 * cn[j] * v[j];
            g.iter_mut().zip(n).for_each(|(g, x)| *g -= k * x);
        }
        g
    }

    fn accept(&mut self, w: &[f64]) {
        let (u, v) = self.projections(w);
        self.base_p.iter_mut().zip(&u).for_each(|(b, x)| *b += x * x);
        self.base_n.iter_mut().zip(&v).for_each(|(b, x)| *b += x * x);
    }
}

/// Removes the components of `v` along the orthonormal `basis`, twice for
/// numerical safety.
fn project_out(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
    }
}

fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let n = dot(v, v).sqrt();
    (n > 1e-12).then(|| v.iter().map(|x| x / n).collect())
}

/// Dominant eigenvector of `P (mean n n^T - mean p p^T) P`, `P` projecting
/// onto the complement of `basis`.
fn initial_direction(pos: &[Vec<f64>], neg: &[Vec<f64>], basis: &[Vec<f64>], dim: usize) -> Option<Vec<f64>> {
    let mut c = DMatrix::<f64>::zeros(dim, dim);
    let wn = 1.0 / neg.len() as f64;
    let wp = 1.0 / pos.len() as f64;
    for n in neg {
        for r in 0..dim {
            for s in 0..dim {
                c[(r, s)] += wn * n[r] * n[s];
            }
        }
    }
    for p in pos {
        for r in 0..dim {
            for s in 0..dim {
                c[(r, s)] -= wp * p[r] * p[s];
            }
        }
    }
    let mut proj = DMatrix::<f64>::identity(dim, dim);
    for b in basis {
        for r in 0..dim {
            for s in 0..dim {
                proj[(r, s)] -= b[r] * b[s];
            }
        }
    }
    let m = &proj * c * &proj;
    let m = (&m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    for k in order {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        project_out(&mut v, basis);
        if let Some(mut v) = normalized(&v) {
            // Sign convention: largest-magnitude entry positive.
            let (imax, _) = v
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |acc, (i, x)| if x.abs() > acc.1 { (i, x.abs()) } else { acc });
            if v[imax] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            return Some(v);
        }
    }
    None
}

fn sample_pairs(p: usize, n: usize, cap: usize, seed: u64) -> Vec<(usize, usize)> {
    let total = p * n;
    if total <= cap {
        return (0..total).map(|k| (k / n, k % n)).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, total, cap).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|k| (k / n, k % n)).collect()
}

pub fn learn_metric(tracklet_id: u64, pairs: &PairSet, cfg: &RunConfig) -> Result<TargetMetric> {
    if pairs.positives.is_empty() || pairs.negatives.is_empty() {
        return Err(Error::EmptyPairs);
    }
    let dim = pairs.positives[0].len();
    for v in pairs.positives.iter().chain(&pairs.negatives) {
        if v.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                got: v.len(),
            });
        }
    }
    let seed = cfg.rng_seed ^ tracklet_id.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let index = sample_pairs(pairs.positives.len(), pairs.negatives.len(), cfg.pair_cap, seed);
    let mut obj = Objective {
        pos: &pairs.positives,
        neg: &pairs.negatives,
        pairs: &index,
        base_p: vec![0.0; pairs.positives.len()],
        base_n: vec![0.0; pairs.negatives.len()],
    };
    let r_max = dim.min(cfg.max_rank);
    let mut metric = TargetMetric {
        tracklet_id,
        columns: Vec::new(),
        column_losses: Vec::new(),
        step_losses: Vec::new(),
    };
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut prev_loss = index.len() as f64 * std::f64::consts::LN_2;

    for _ in 0..r_max {
        let Some(dir) = initial_direction(&pairs.positives, &pairs.negatives, &basis, dim) else {
            break;
        };
        let (w, steps) = optimise_column(&obj, dir, &basis)?;
        let loss = *steps.last().expect("at least the starting loss");
        let gain = (prev_loss - loss) / prev_loss.max(f64::MIN_POSITIVE);
        if !metric.columns.is_empty() && (gain < COLUMN_MIN_GAIN || loss > prev_loss) {
            break;
        }
        obj.accept(&w);
        basis.push(normalized(&w).unwrap_or_else(|| w.clone()));
        metric.columns.push(w);
        metric.column_losses.push(loss);
        metric.step_losses.push(steps);
        prev_loss = loss;
        if loss <= 0.0 {
            break;
        }
    }
    if metric.columns.is_empty() {
        return Err(Error::EmptyPairs);
    }
    Ok(metric)
}

/// Gradient descent for one column inside the orthogonal complement of
/// `basis`. Returns the column and the loss after each accepted step.
fn optimise_column(obj: &Objective<'_>, dir: Vec<f64>, basis: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    // Pick the starting scale from a coarse grid over ||w||^2.
    let typical: f64 = {
        let sum: f64 = obj.pos.iter().chain(obj.neg).map(|x| dot(&dir, x).powi(2)).sum();
        let mean = sum / (obj.pos.len() + obj.neg.len()) as f64;
        if mean > 0.0 { 1.0 / mean } else { 1.0 }
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for e in -4..=4 {
        let scale = (typical * 10f64.powi(e)).sqrt();
        let w: Vec<f64> = dir.iter().map(|x| x * scale).collect();
        let l = obj.loss(&w);
        if !l.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|(bl, _)| l < *bl) {
            best = Some((l, w));
        }
    }
    let (mut loss, mut w) = best.ok_or(Error::NonFiniteLoss)?;
    let mut steps = vec![loss];
    for _ in 0..MAX_STEPS {
        let mut g = obj.gradient(&w);
        project_out(&mut g, basis);
        let gsq = dot(&g, &g);
        if !gsq.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        if gsq <= 1e-30 {
            break;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = w.iter().zip(&g).map(|(x, d)| x - t * d).collect();
            let l = obj.loss(&cand);
            if l.is_finite() && l <= loss - ARMIJO_C * t * gsq {
                accepted = Some((l, cand));
                break;
            }
            t *= 0.5;
        }
        let Some((l, cand)) = accepted else { break };
        let rel = (loss - l) / loss.max(f64::MIN_POSITIVE);
        w = cand;
        loss = l;
        steps.push(loss);
        if rel < STEP_TOL {
            break;
        }
    }
    project_out(&mut w, basis);
    let final_loss = obj.loss(&w);
    if !final_loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    // Re-projection moves w by rounding error only; keep the history monotone.
    if final_loss <= loss {
        if final_loss < loss {
            steps.push(final_loss);
        }
    } else {
        *steps.last_mut().expect("non-empty") = final_loss.max(loss);
    }
    Ok((w, steps))
}

/// One probe feature per tracklet.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProbeSet {
    pub probes: BTreeMap<u64, Vec<f64>>,
}

impl ProbeSet {
    pub fn get(&self, id: u64) -> Option<&[f64]> {
        self.probes.get(&id).map(Vec::as_slice)
    }
}

/// Index of the strongest detection in the first `probe_window` frames,
/// earliest frame on ties.
pub fn probe_index(t: &Tracklet, cfg: &RunConfig) -> usize {
    let window = cfg.probe_window.min(t.len());
    let dets = t.detections();
    (0..window)
        .max_by(|&a, &b| dets[a].score.total_cmp(&dets[b].score).then(b.cmp(&a)))
        .unwrap_or(0)
}

pub fn build_probe_set(tracklets: &[Tracklet], cfg: &RunConfig) -> Result<ProbeSet> {
    let mut set = ProbeSet::default();
    for t in tracklets {
        let i = probe_index(t, cfg);
        let f = t.detections()[i]
            .feature
            .clone()
            .ok_or(Error::MissingFeatures(t.id()))?;
        set.probes.insert(t.id(), f);
    }
    Ok(set)
}

/// Metrics and probes for one set of tracklets.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AppearanceModel {
    pub metrics: BTreeMap<u64, TargetMetric>,
    pub probes: ProbeSet,
}

impl AppearanceModel {
    pub fn merge(&mut self, other: AppearanceModel) {
        self.metrics.extend(other.metrics);
        self.probes.probes.extend(other.probes.probes);
    }
}

/// Learns a metric per tracklet against the others in `group`. A tracklet
/// with no admissible negatives falls back to the Euclidean metric.
pub fn learn_models(group: &[Tracklet], phase: Phase, exits: &ExitMap, cfg: &RunConfig) -> Result<AppearanceModel> {
    let refs: Vec<&Tracklet> = group.iter().collect();
    let mut model = AppearanceModel {
        metrics: BTreeMap::new(),
        probes: build_probe_set(group, cfg)?,
    };
    for t in group {
        let pairs = collect_pairs(t, &refs, phase, exits, cfg)?;
        let metric = if pairs.negatives.is_empty() || pairs.positives.is_empty() {
            TargetMetric::identity(t.id(), t.first().feature.as_ref().map_or(cfg.feature_dim, Vec::len))
        } else {
            learn_metric(t.id(), &pairs, cfg)?
        };
        model.metrics.insert(t.id(), metric);
    }
    Ok(model)
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Split threshold for one tracklet: the configured value, or median plus
/// three interquartile ranges of the metric's distances between all pairs of
/// samples in the reliable leading window.
pub fn split_threshold(metric: &TargetMetric, t: &Tracklet, cfg: &RunConfig) -> Result<f64> {
    if let Some(w) = cfg.distance_threshold {
        return Ok(w);
    }
    let window = cfg.probe_window.min(t.len());
    let feats: Vec<&[f64]> = t.detections()[..window]
        .iter()
        .map(|d| d.feature.as_deref().ok_or(Error::MissingFeatures(t.id())))
        .collect::<Result<_>>()?;
    let mut d = Vec::new();
    for i in 0..feats.len() {
        for j in i + 1..feats.len() {
            d.push(distance(metric, feats[i], feats[j])?);
        }
    }
    if d.is_empty() {
        return Ok(f64::INFINITY);
    }
    d.sort_by(|a, b| a.total_cmp(b));
    let iqr = quantile(&d, 0.75) - quantile(&d, 0.25);
    Ok(quantile(&d, 0.5) + 3.0 * iqr)
}

/// Distances of every detection to the tracklet's probe.
pub fn probe_distances(t: &Tracklet, metric: &TargetMetric, probe: &[f64]) -> Result<Vec<f64>> {
    t.detections()
        .iter()
        .map(|d| {
            let z = d.feature.as_deref().ok_or(Error::MissingFeatures(t.id()))?;
            distance(metric, z, probe)
        })
        .collect()
}

/// Start index of the first run of `k` consecutive values above `omega`.
pub fn first_run_above(values: &[f64], omega: f64, k: usize) -> Option<usize> {
    let mut run = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > omega {
            run += 1;
            if run == k {
                return Some(i + 1 - k);
            }
        } else {
            run = 0;
        }
    }
    None
}

/// One refinement pass: each tracklet is split before its first run of
/// `split_run` consecutive probe distances above its threshold. Parts shorter
/// than two frames are dropped; the head keeps the original id.
pub fn refine_tracklets(
    tracklets: &[Tracklet],
    model: &AppearanceModel,
    cfg: &RunConfig,
    ids: &mut IdSource,
) -> Result<(Vec<Tracklet>, usize)> {
    let mut out = Vec::with_capacity(tracklets.len());
    let mut splits = 0;
    for t in tracklets {
        let metric = model.metrics.get(&t.id()).ok_or(Error::MissingModel(t.id()))?;
        let probe = model.probes.get(t.id()).ok_or(Error::MissingModel(t.id()))?;
        let dists = probe_distances(t, metric, probe)?;
        let omega = split_threshold(metric, t, cfg)?;
        match first_run_above(&dists, omega, cfg.split_run) {
            Some(r) if r > 0 => {
                splits += 1;
                let (head, tail) = t.split_at_frame(t.start() + r as u32, t.id(), ids.next_id());
                out.extend(head.into_iter().chain(tail).filter(|p| p.len() >= 2));
            }
            _ => out.push(t.clone()),
        }
    }
    Ok((out, splits))
}

/// Repeated refinement with metrics and probes re-learned before each pass.
pub fn refine_group(
    tracklets: Vec<Tracklet>,
    exits: &ExitMap,
    cfg: &RunConfig,
    ids: &mut IdSource,
) -> Result<Vec<Tracklet>> {
    let mut current = tracklets;
    for _ in 0..cfg.refine_iters {
        if current.is_empty() {
            break;
        }
        let model = learn_models(&current, Phase::Initial, exits, cfg)?;
        let (next, splits) = refine_tracklets(&current, &model, cfg, ids)?;
        current = next;
        if splits == 0 {
            break;
        }
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BBox, Detection};

    fn feature_tracklet(id: u64, start: u32, feats: &[Vec<f64>], scores: &[f64], x: f64) -> Tracklet {
        let dets = feats
            .iter()
            .zip(scores)
            .enumerate()
            .map(|(k, (f, &s))| {
                Detection::new(start + k as u32, BBox::new(x, 200.0, 20.0, 40.0), s).with_feature(f.clone())
            })
            .collect();
        Tracklet::new(id, dets).unwrap()
    }

    fn exits() -> ExitMap {
        ExitMap::new(640.0, 480.0, 0.05)
    }

    #[test]
    fn positive_and_negative_counts() {
        let cfg = RunConfig::default();
        let f: Vec<Vec<f64>> = (0..10).map(|k| vec![k as f64, 0.0]).collect();
        let s = vec![0.9; 10];
        let target = feature_tracklet(1, 1, &f, &s, 300.0);
        let overlapping = feature_tracklet(2, 3, &f, &s, 100.0);
        let pairs = collect_pairs(&target, &[&target, &overlapping], Phase::Initial, &exits(), &cfg).unwrap();
        assert_eq!(pairs.positives.len(), 6);
        assert_eq!(pairs.negatives.len(), 16);
    }

    #[test]
    fn exit_constraint_selects_negatives() {
        let cfg = RunConfig::default();
        let f: Vec<Vec<f64>> = (0..6).map(|k| vec![k as f64, 1.0]).collect();
        let s = vec![0.9; 6];
        let target = feature_tracklet(1, 20, &f, &s, 300.0);
        // Ends inside the left border band before the target starts.
        let exited = feature_tracklet(2, 1, &f, &s, 0.0);
        // Ends in the interior: could be the same person.
        let interior = feature_tracklet(3, 1, &f, &s, 300.0);
        let p = collect_pairs(&target, &[&exited], Phase::Initial, &exits(), &cfg).unwrap();
        assert_eq!(p.negatives.len(), 16);
        let p = collect_pairs(&target, &[&interior], Phase::Initial, &exits(), &cfg).unwrap();
        assert_eq!(p.negatives.len(), 0);
    }

    #[test]
    fn missing_features_error() {
        let cfg = RunConfig::default();
        let dets = (1..=3)
            .map(|f| Detection::new(f, BBox::new(0.0, 0.0, 1.0, 1.0), 0.9))
            .collect();
        let t = Tracklet::new(1, dets).unwrap();
        assert!(matches!(
            collect_pairs(&t, &[], Phase::Initial, &exits(), &cfg),
            Err(Error::MissingFeatures(1))
        ));
    }

    #[test]
    fn identical_pair_sets_stay_at_log_two() {
        let cfg = RunConfig::default();
        let vs: Vec<Vec<f64>> = vec![vec![1.0, 0.5, 0.2], vec![0.3, 0.9, 0.1], vec![0.7, 0.7, 0.7]];
        let pairs = PairSet {
            positives: vs.clone(),
            negatives: vs,
        };
        let m = learn_metric(1, &pairs, &cfg).unwrap();
        assert_eq!(m.rank(), 1);
        let per_pair = m.final_loss().unwrap() / 9.0;
        assert!((per_pair - std::f64::consts::LN_2).abs() < 1e-3, "{per_pair}");
    }

    #[test]
    fn empty_side_rejected() {
        let pairs = PairSet {
            positives: vec![vec![1.0]],
            negatives: vec![],
        };
        assert!(matches!(learn_metric(1, &pairs, &RunConfig::default()), Err(Error::EmptyPairs)));
    }

    #[test]
    fn separable_toy_orders_pairs() {
        let cfg = RunConfig::default();
        let pairs = PairSet {
            positives: (0..6).map(|k| vec![1.0 + 0.1 * k as f64, 0.1]).collect(),
            negatives: (0..6).map(|k| vec![0.1, 1.0 + 0.1 * k as f64]).collect(),
        };
        let m = learn_metric(1, &pairs, &cfg).unwrap();
        for p in &pairs.positives {
            for n in &pairs.negatives {
                assert!(m.project_sq(p) < m.project_sq(n));
            }
        }
        assert!(m.max_column_overlap() <= 1e-8);
        for steps in &m.step_losses {
            assert!(steps.windows(2).all(|w| w[1] <= w[0]));
        }
        assert!(m.column_losses.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn distance_basics() {
        let m = TargetMetric::identity(1, 3);
        assert_eq!(distance(&m, &[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(distance(&m, &[0.0, 0.0, 0.0], &[1.0, 2.0, 2.0]).unwrap(), 9.0);
        assert!(distance(&m, &[0.0], &[1.0, 2.0, 2.0]).is_err());
    }

    #[test]
    fn probe_selection() {
        let cfg = RunConfig::default();
        let f: Vec<Vec<f64>> = (0..3).map(|k| vec![k as f64]).collect();
        let t = feature_tracklet(1, 1, &f, &[0.5, 0.9, 0.7], 100.0);
        assert_eq!(probe_index(&t, &cfg), 1);
        let t = feature_tracklet(1, 1, &f, &[0.8, 0.8, 0.8], 100.0);
        assert_eq!(probe_index(&t, &cfg), 0);
        // Outside the window the strongest detection is ignored.
        let f: Vec<Vec<f64>> = (0..10).map(|k| vec![k as f64]).collect();
        let mut s = vec![0.7; 10];
        s[9] = 0.99;
        s[3] = 0.8;
        let t = feature_tracklet(1, 1, &f, &s, 100.0);
        assert_eq!(probe_index(&t, &cfg), 3);
        let ps = build_probe_set(&[t], &cfg).unwrap();
        assert_eq!(ps.get(1).unwrap(), &[3.0]);
    }

    #[test]
    fn run_detection() {
        let d = [0.0, 1.0, 5.0, 5.0, 5.0, 5.0, 1.0, 5.0, 5.0, 5.0, 5.0, 5.0];
        assert_eq!(first_run_above(&d, 2.0, 5), Some(7));
        assert_eq!(first_run_above(&d, 2.0, 4), Some(2));
        assert_eq!(first_run_above(&d, 10.0, 1), None);
    }

    #[test]
    fn refinement_splits_on_run() {
        let cfg = RunConfig {
            distance_threshold: Some(1.0),
            ..RunConfig::default()
        };
        let f: Vec<Vec<f64>> = (0..20).map(|k| vec![if k < 10 { 0.0 } else { 5.0 }]).collect();
        let t = feature_tracklet(7, 1, &f, &[0.9; 20], 100.0);
        let mut model = AppearanceModel::default();
        model.metrics.insert(7, TargetMetric::identity(7, 1));
        model.probes = build_probe_set(std::slice::from_ref(&t), &cfg).unwrap();
        let (out, splits) = refine_tracklets(std::slice::from_ref(&t), &model, &cfg, &mut IdSource::starting_at(100)).unwrap();
        assert_eq!(splits, 1);
        assert_eq!((out[0].start(), out[0].end()), (1, 10));
        assert_eq!((out[1].start(), out[1].end()), (11, 20));

        // Clean tracklet unchanged.
        let clean: Vec<Vec<f64>> = vec![vec![0.0]; 20];
        let t = feature_tracklet(8, 1, &clean, &[0.9; 20], 100.0);
        model.metrics.insert(8, TargetMetric::identity(8, 1));
        model.probes = build_probe_set(std::slice::from_ref(&t), &cfg).unwrap();
        let (out, splits) = refine_tracklets(std::slice::from_ref(&t), &model, &cfg, &mut IdSource::starting_at(100)).unwrap();
        assert_eq!(splits, 0);
        assert_eq!(out, vec![t]);
    }
}
