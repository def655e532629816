//! Initial tracklet generation from raw detections.
//!
//! Each confident detection is a node whose cost is the negative log-odds of
//! its score. Only detections in consecutive frames whose centers fall inside
//! a gating radius are linkable, at zero cost. Chains are extracted greedily:
//! a frame-staged dynamic program finds the cheapest source-to-sink chain, its
//! nodes are removed, and the process repeats while the best chain is
//! profitable.

use crate::error::{Error, Result};
use crate::flow::{FlowGraph, Vertex};
use crate::io::FrameDetections;
use crate::model::{Detection, RunConfig, Tracklet};

/// Monotone id source for tracklets created anywhere in the pipeline; the
/// default starts at 1.
#[derive(Debug, Clone)]
pub struct IdSource {
    next: u64,
}

impl Default for IdSource {
    fn default() -> Self {
        Self::starting_at(1)
    }
}

impl IdSource {
    /// The first id handed out is `first`.
    pub fn starting_at(first: u64) -> Self {
        Self { next: first }
    }

    pub fn next_id(&mut self) -> u64 {
        let id = self.next;
        self.next += 1;
        id
    }
}

/// `-log(score / (1 - score))`; negative for scores above one half.
pub fn detection_cost(score: f64) -> Result<f64> {
    if !(score > 0.0 && score < 1.0) {
        return Err(Error::Score(score));
    }
    Ok(-(score / (1.0 - score)).ln())
}

pub fn within_gate(a: &Detection, b: &Detection) -> bool {
    let ca = a.bbox.center();
    let cb = b.bbox.center();
    let d = ((ca[0] - cb[0]).powi(2) + (ca[1] - cb[1]).powi(2)).sqrt();
    d < 0.5 * (a.bbox.w + b.bbox.w)
}

/// Confident detections in frame order with their node costs.
struct Stage<'a> {
    frame: u32,
    dets: Vec<(&'a Detection, f64)>,
}

fn stages<'a>(frames: &'a FrameDetections, cfg: &RunConfig) -> Vec<Stage<'a>> {
    frames
        .iter()
        .map(|(&frame, dets)| Stage {
            frame,
            dets: dets
                .iter()
                .filter(|d| d.score > cfg.det_threshold && d.score < 1.0)
                .map(|d| (d, detection_cost(d.score).expect("score checked")))
                .collect(),
        })
        .collect()
}

/// The flow graph the generator approximates, with node order matching a
/// frame-major walk over confident detections. Used for cross-checking.
pub fn generation_graph(frames: &FrameDetections, cfg: &RunConfig) -> (FlowGraph, Vec<(u32, usize)>) {
    let st = stages(frames, cfg);
    let entry = cfg.entry_exit_cost();
    let mut g = FlowGraph::new();
    let mut index = Vec::new();
    let mut ids: Vec<Vec<usize>> = Vec::with_capacity(st.len());
    for (k, stage) in st.iter().enumerate() {
        let mut row = Vec::with_capacity(stage.dets.len());
        for (j, (det, cost)) in stage.dets.iter().enumerate() {
            let v = g.add_node(*cost, false);
            index.push((stage.frame, j));
            g.add_edge(Vertex::Source, Vertex::Node(v), entry);
            g.add_edge(Vertex::Node(v), Vertex::Sink, entry);
            if k > 0 && st[k - 1].frame + 1 == stage.frame {
                for (i, (prev, _)) in st[k - 1].dets.iter().enumerate() {
                    if within_gate(prev, det) {
                        g.add_edge(Vertex::Node(ids[k - 1][i]), Vertex::Node(v), 0.0);
                    }
                }
            }
            row.push(v);
        }
        ids.push(row);
    }
    (g, index)
}

/// Extracted tracklets plus the cost of every chain taken, short ones included.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub tracklets: Vec<Tracklet>,
    pub chain_costs: Vec<f64>,
}

pub fn generate_initial_tracklets(
    frames: &FrameDetections,
    cfg: &RunConfig,
    ids: &mut IdSource,
) -> Vec<Tracklet> {
    generate_with_costs(frames, cfg, ids).tracklets
}

pub fn generate_with_costs(frames: &FrameDetections, cfg: &RunConfig, ids: &mut IdSource) -> Generation {
    let st = stages(frames, cfg);
    let entry = cfg.entry_exit_cost();
    let mut alive: Vec<Vec<bool>> = st.iter().map(|s| vec![true; s.dets.len()]).collect();
    let mut out = Generation {
        tracklets: Vec::new(),
        chain_costs: Vec::new(),
    };

    loop {
        // best[k][j]: cheapest chain cost from the source through node (k, j).
        let mut best: Vec<Vec<f64>> = st.iter().map(|s| vec![f64::INFINITY; s.dets.len()]).collect();
        let mut pred: Vec<Vec<Option<usize>>> = st.iter().map(|s| vec![None; s.dets.len()]).collect();
        let mut end: Option<(f64, usize, usize)> = None;
        for k in 0..st.len() {
            let linked = k > 0 && st[k - 1].frame + 1 == st[k].frame;
            for j in 0..st[k].dets.len() {
                if !alive[k][j] {
                    continue;
                }
                let (det, cost) = st[k].dets[j];
                let mut acc = entry;
                let mut from = None;
                if linked {
                    for (i, (prev, _)) in st[k - 1].dets.iter().enumerate() {
                        if alive[k - 1][i] && best[k - 1][i] < acc && within_gate(prev, det) {
                            acc = best[k - 1][i];
                            from = Some(i);
                        }
                    }
                }
                best[k][j] = acc + cost;
                pred[k][j] = from;
                let total = best[k][j] + entry;
                if end.is_none_or(|(c, _, _)| total < c) {
                    end = Some((total, k, j));
                }
            }
        }
        let Some((total, mut k, mut j)) = end else { break };
        if total >= 0.0 {
            break;
        }
        let mut chain = Vec::new();
        loop {
            alive[k][j] = false;
            chain.push(st[k].dets[j].0.clone());
            match pred[k][j] {
                Some(i) => {
                    k -= 1;
                    j = i;
                }
                None => break,
            }
        }
        chain.reverse();
        out.chain_costs.push(total);
        if chain.len() >= 2 {
            let t = Tracklet::new(ids.next_id(), chain).expect("chains are frame-consecutive");
            out.tracklets.push(t);
        }
    }
    out
}
