//! Segment partitioning, affinity-table assembly and the global tracklet
//! association solve.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::affinity::{
    appearance_affinity, appearance_product, gamma_for, limiting, AffinityRow, AffinityTable, ExitMap,
};
use crate::dynamics::motion_similarity;
use crate::error::{Error, Result};
use crate::flow::{solve_paths, FlowGraph, Mode, Vertex};
use crate::metric::AppearanceModel;
use crate::model::{gap_frames, temporal_overlap, RunConfig, Trajectory, Tracklet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub index: usize,
    pub start: u32,
    pub end: u32,
}

/// Consecutive windows of `len` frames covering `1..=frames`.
pub fn partition_segments(frames: u32, len: u32) -> Vec<Segment> {
    assert!(len >= 1, "segment length must be positive");
    (0..frames.div_ceil(len))
        .map(|k| Segment {
            index: k as usize,
            start: k * len + 1,
            end: ((k + 1) * len).min(frames),
        })
        .collect()
}

/// Index of the segment holding `frame`.
pub fn segment_index(frame: u32, len: u32) -> usize {
    ((frame.max(1) - 1) / len) as usize
}

/// Ordered index pairs `(i, j)` worth scoring: `j` starts after `i` ends and
/// both start in the same segment, or `j` opens the next segment within
/// `gap_bound` frames of the boundary while `i` closes the previous one
/// within `gap_bound` frames.
pub fn candidate_pairs(tracklets: &[Tracklet], cfg: &RunConfig) -> Vec<(usize, usize)> {
    let s = cfg.segment_len;
    let b = cfg.gap_bound;
    let mut out = Vec::new();
    for (i, a) in tracklets.iter().enumerate() {
        let sa = segment_index(a.start(), s);
        for (j, c) in tracklets.iter().enumerate() {
            if i == j || c.start() <= a.end() {
                continue;
            }
            let sc = segment_index(c.start(), s);
            let keep = if sa == sc {
                true
            } else if sc == sa + 1 {
                let boundary = sc as u32 * s;
                a.end() + b > boundary && c.start() <= boundary + b
            } else {
                false
            };
            if keep {
                out.push((i, j));
            }
        }
    }
    out
}

/// Scores every candidate pair. Without a model the appearance term is one.
pub fn build_affinity(
    tracklets: &[Tracklet],
    model: Option<&AppearanceModel>,
    exits: &ExitMap,
    flagged: &BTreeSet<u64>,
    cfg: &RunConfig,
) -> Result<AffinityTable> {
    let pairs = candidate_pairs(tracklets, cfg);
    let mut rows = Vec::with_capacity(pairs.len());
    let mut products = Vec::with_capacity(pairs.len());
    for &(i, j) in &pairs {
        let (a, b) = (&tracklets[i], &tracklets[j]);
        let temporal = u8::from(!temporal_overlap(a, b));
        let exit = u8::from(!exits.contains(a.last().bbox.center()));
        debug_assert_eq!(temporal * exit, limiting(a, b, exits));
        let motion = motion_similarity(a, b, cfg.rank_tol);
        let admissible = temporal * exit == 1 && motion != f64::NEG_INFINITY;
        let product = match model {
            Some(m) if admissible => Some(appearance_product(a, b, m)?),
            _ => None,
        };
        products.push(product);
        rows.push(AffinityRow {
            segment: segment_index(a.start(), cfg.segment_len),
            from: a.id(),
            to: b.id(),
            gap: gap_frames(a, b)?,
            motion,
            appearance: 1.0,
            temporal,
            exit,
            flagged: flagged.contains(&a.id()) || flagged.contains(&b.id()),
            lambda: 1.0,
            score: 0.0,
            cost: None,
        });
    }
    let mut gammas: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for (row, p) in rows.iter().zip(&products) {
        if let Some(p) = p {
            gammas.entry(row.segment).or_default().push(*p);
        }
    }
    let gammas: BTreeMap<usize, f64> = gammas.into_iter().map(|(k, v)| (k, gamma_for(v))).collect();
    for (row, p) in rows.iter_mut().zip(products) {
        if let Some(p) = p {
            row.appearance = appearance_affinity(p, gammas[&row.segment]);
        }
        row.reweight(cfg.lambda1, cfg.lambda2, cfg.gap_bound);
    }
    Ok(AffinityTable { rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Association {
    pub trajectories: Vec<Trajectory>,
    pub cost: f64,
}

/// Links every tracklet into exactly one trajectory by a cover-all min-cost
/// flow over the table's finite-cost edges.
pub fn associate(tracklets: &[Tracklet], table: &AffinityTable, cfg: &RunConfig) -> Result<Association> {
    let mut order: Vec<usize> = (0..tracklets.len()).collect();
    order.sort_by_key(|&i| (tracklets[i].start(), tracklets[i].id()));
    let mut node_of: BTreeMap<u64, usize> = BTreeMap::new();
    let mut g = FlowGraph::new();
    let entry = cfg.entry_exit_cost();
    for &i in &order {
        let v = g.add_node(0.0, true);
        node_of.insert(tracklets[i].id(), v);
        g.add_edge(Vertex::Source, Vertex::Node(v), entry);
        g.add_edge(Vertex::Node(v), Vertex::Sink, entry);
    }
    for r in &table.rows {
        if let (Some(c), Some(&u), Some(&v)) = (r.cost, node_of.get(&r.from), node_of.get(&r.to)) {
            g.add_edge(Vertex::Node(u), Vertex::Node(v), c);
        }
    }
    let sol = solve_paths(&g, Mode::CoverAll)?;
    let mut trajectories = Vec::with_capacity(sol.paths.len());
    for (k, path) in sol.paths.iter().enumerate() {
        let members: Vec<&Tracklet> = path.iter().map(|&v| &tracklets[order[v]]).collect();
        trajectories.push(Trajectory::from_tracklets(k as u64 + 1, &members)?);
    }
    let covered: usize = trajectories.iter().map(|t| t.tracklet_ids.len()).sum();
    if covered != tracklets.len() {
        return Err(Error::Infeasible(Vec::new()));
    }
    Ok(Association {
        trajectories,
        cost: sol.cost,
    })
}

#[derive(Debug, Serialize)]
struct TrajectorySummary<'a> {
    id: u64,
    tracklets: &'a [u64],
    start: Option<u32>,
    end: Option<u32>,
    link_costs: Vec<Option<f64>>,
}

/// Per-trajectory JSON summary: member tracklets and their link costs.
pub fn summary_json(assoc: &Association, table: &AffinityTable) -> Result<String> {
    let costs: BTreeMap<(u64, u64), Option<f64>> = table.rows.iter().map(|r| ((r.from, r.to), r.cost)).collect();
    let items: Vec<TrajectorySummary<'_>> = assoc
        .trajectories
        .iter()
        .map(|t| TrajectorySummary {
            id: t.id,
            tracklets: &t.tracklet_ids,
            start: t.start(),
            end: t.end(),
            link_costs: t
                .tracklet_ids
                .windows(2)
                .map(|w| costs.get(&(w[0], w[1])).copied().flatten())
                .collect(),
        })
        .collect();
    Ok(serde_json::to_string_pretty(&serde_json::json!({
        "total_cost": assoc.cost,
        "trajectories": items,
    }))?)
}
