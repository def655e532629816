//! Independent oracles and fixtures shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;

use trackflow::evaluation::MetricReport;
use trackflow::flow::{FlowGraph, Mode, Vertex};
use trackflow::io::TrackSet;
use trackflow::model::{BBox, Detection, Tracklet};

/// Integer costs are stored in hundredths.
pub const COST_SCALE: f64 = 100.0;

/// A small DAG with integer costs; node indices are a topological order.
#[derive(Debug, Clone)]
pub struct IntDag {
    pub node: Vec<i64>,
    pub must: Vec<bool>,
    pub source: Vec<Option<i64>>,
    pub sink: Vec<Option<i64>>,
    pub arcs: Vec<(usize, usize, i64)>,
}

impl IntDag {
    pub fn len(&self) -> usize {
        self.node.len()
    }

    pub fn to_graph(&self) -> FlowGraph {
        let mut g = FlowGraph::new();
        for (c, m) in self.node.iter().zip(&self.must) {
            g.add_node(*c as f64 / COST_SCALE, *m);
        }
        for v in 0..self.len() {
            if let Some(c) = self.source[v] {
                g.add_edge(Vertex::Source, Vertex::Node(v), c as f64 / COST_SCALE);
            }
            if let Some(c) = self.sink[v] {
                g.add_edge(Vertex::Node(v), Vertex::Sink, c as f64 / COST_SCALE);
            }
        }
        for &(u, v, c) in &self.arcs {
            g.add_edge(Vertex::Node(u), Vertex::Node(v), c as f64 / COST_SCALE);
        }
        g
    }

    fn arc(&self, u: usize, v: usize) -> Option<i64> {
        self.arcs.iter().find(|a| a.0 == u && a.1 == v).map(|a| a.2)
    }

    /// Cost of a set of paths in hundredths, or `None` if a path is not
    /// realisable or two paths share a node.
    pub fn paths_cost(&self, paths: &[Vec<usize>]) -> Option<i64> {
        let mut seen = vec![false; self.len()];
        let mut total = 0;
        for p in paths {
            let first = *p.first()?;
            total += self.source[first]?;
            for w in p.windows(2) {
                total += self.arc(w[0], w[1])?;
            }
            total += self.sink[*p.last()?]?;
            for &v in p {
                if std::mem::replace(&mut seen[v], true) {
                    return None;
                }
                total += self.node[v];
            }
        }
        Some(total)
    }
}

/// Random DAG with `1..=max_nodes` nodes, arcs only from lower to higher
/// index, costs in `[-200, 200]` hundredths.
pub fn random_dag<R: Rng>(rng: &mut R, max_nodes: usize) -> IntDag {
    let n = rng.random_range(1..=max_nodes);
    let cost = |rng: &mut R| rng.random_range(-200i64..=200);
    let node = (0..n).map(|_| cost(rng)).collect();
    let must = (0..n).map(|_| rng.random_bool(0.4)).collect();
    let source = (0..n).map(|_| rng.random_bool(0.6).then(|| cost(rng))).collect();
    let sink = (0..n).map(|_| rng.random_bool(0.6).then(|| cost(rng))).collect();
    let mut arcs = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(0.35) {
                arcs.push((u, v, cost(rng)));
            }
        }
    }
    IntDag {
        node,
        must,
        source,
        sink,
        arcs,
    }
}

/// Exhaustive minimum over all node-disjoint path covers. In `CoverAll`
/// mode every `must` node has to be used; `None` when that is impossible.
pub fn brute_force_cost(g: &IntDag, mode: Mode) -> Option<i64> {
    // succ_free[u]: u is used and nothing follows it yet.
    fn go(g: &IntDag, mode: Mode, v: usize, succ_free: &mut Vec<bool>, used: &mut Vec<bool>, acc: i64, best: &mut Option<i64>) {
        if v == g.len() {
            for u in 0..g.len() {
                if used[u] && succ_free[u] && g.sink[u].is_none() {
                    return;
                }
            }
            let closing: i64 = (0..g.len()).filter(|&u| used[u] && succ_free[u]).map(|u| g.sink[u].unwrap()).sum();
            let total = acc + closing;
            if best.is_none_or(|b| total < b) {
                *best = Some(total);
            }
            return;
        }
        if !(mode == Mode::CoverAll && g.must[v]) {
            go(g, mode, v + 1, succ_free, used, acc, best);
        }
        used[v] = true;
        succ_free[v] = true;
        if let Some(c) = g.source[v] {
            go(g, mode, v + 1, succ_free, used, acc + c + g.node[v], best);
        }
        for &(u, w, c) in &g.arcs {
            if w == v && used[u] && succ_free[u] {
                succ_free[u] = false;
                go(g, mode, v + 1, succ_free, used, acc + c + g.node[v], best);
                succ_free[u] = true;
            }
        }
        used[v] = false;
        succ_free[v] = false;
    }
    let mut best = None;
    go(g, mode, 0, &mut vec![false; g.len()], &mut vec![false; g.len()], 0, &mut best);
    best
}

pub fn constant(_t: f64) -> [f64; 2] {
    [320.0, 240.0]
}

pub fn linear(t: f64) -> [f64; 2] {
    [100.0 + 3.0 * t, 200.0 + t]
}

/// Curved enough that the third singular value clears a 1% threshold.
pub fn quadratic(t: f64) -> [f64; 2] {
    [320.0 + 8.0 * t - 0.3 * t * t, 240.0 - 6.0 * t + 0.2 * t * t]
}

pub fn sample(f: fn(f64) -> [f64; 2], frames: std::ops::RangeInclusive<u32>) -> Vec<[f64; 2]> {
    frames.map(|t| f(f64::from(t))).collect()
}

/// Block Hankel matrix built directly from its definition.
pub fn hankel_oracle(points: &[[f64; 2]]) -> DMatrix<f64> {
    let l = points.len();
    let n = l - l.div_ceil(3) + 1;
    let m = l - n + 1;
    let mut h = DMatrix::zeros(2 * m, n);
    for i in 0..m {
        for j in 0..n {
            h[(2 * i, j)] = points[i + j][0];
            h[(2 * i + 1, j)] = points[i + j][1];
        }
    }
    h
}

/// Singular values from the eigenvalues of `H^T H`, descending.
pub fn singular_values_oracle(h: &DMatrix<f64>) -> Vec<f64> {
    let gram = h.transpose() * h;
    let mut ev: Vec<f64> = SymmetricEigen::new(gram).eigenvalues.iter().map(|x| x.max(0.0).sqrt()).collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

pub fn rank_oracle(points: &[[f64; 2]], tol: f64) -> usize {
    let sv = singular_values_oracle(&hankel_oracle(points));
    sv.iter().filter(|&&s| s > tol * sv[0]).count()
}

/// Tracklet whose box centers are `pts`, starting at `start`.
pub fn tracklet_from_centers(id: u64, start: u32, pts: &[[f64; 2]]) -> Tracklet {
    let dets = pts
        .iter()
        .enumerate()
        .map(|(k, p)| Detection::new(start + k as u32, BBox::from_center(*p, 30.0, 70.0), 0.9))
        .collect();
    Tracklet::new(id, dets).expect("consecutive frames")
}

/// Tracklet carrying one feature per frame and a fixed box.
pub fn feature_tracklet(id: u64, start: u32, x: f64, feats: Vec<Vec<f64>>, scores: &[f64]) -> Tracklet {
    let dets = feats
        .into_iter()
        .zip(scores)
        .enumerate()
        .map(|(k, (f, &s))| Detection::new(start + k as u32, BBox::new(x, 200.0, 30.0, 70.0), s).with_feature(f))
        .collect();
    Tracklet::new(id, dets).expect("consecutive frames")
}

/// Unit vectors on a grid of angles over the half circle.
pub fn unit_grid(steps: usize) -> Vec<[f64; 2]> {
    (0..steps)
        .map(|k| {
            let a = std::f64::consts::PI * k as f64 / steps as f64;
            [a.cos(), a.sin()]
        })
        .collect()
}

/// Hand-scored CLEAR MOT fixture.
pub struct EvalCase {
    pub name: &'static str,
    pub truth: TrackSet,
    pub hyp: TrackSet,
    pub fp: usize,
    pub fn_: usize,
    pub ids: usize,
    pub frag: usize,
    pub mt: usize,
    pub ml: usize,
    pub mota: f64,
    pub motp: f64,
}

fn lane_box(x: f64, y: f64) -> BBox {
    BBox::new(x, y, 12.0, 10.0)
}

fn shifted(track: &[(u32, BBox)], dx: f64) -> Vec<(u32, BBox)> {
    track.iter().map(|&(f, b)| (f, lane_box(b.x + dx, b.y))).collect()
}

/// Two targets in parallel lanes over 20 frames, 12 x 10 boxes.
pub fn two_lanes() -> TrackSet {
    let mut gt = TrackSet::new();
    gt.insert(1, (1..=20).map(|f| (f, lane_box(20.0 * f as f64, 0.0))).collect());
    gt.insert(2, (1..=20).map(|f| (f, lane_box(20.0 * f as f64, 100.0))).collect());
    gt
}

pub fn eval_cases() -> Vec<EvalCase> {
    let mut out = Vec::new();

    // Target 1 shifted by 1 px; target 2 lost for frames 9..=12 and picked
    // up again under a new id; a stray box in frames 1..=5.
    let truth = two_lanes();
    let mut hyp = TrackSet::new();
    hyp.insert(1, shifted(&truth[&1], 1.0));
    hyp.insert(2, truth[&2].iter().filter(|(f, _)| *f <= 8).copied().collect());
    hyp.insert(3, truth[&2].iter().filter(|(f, _)| *f >= 13).copied().collect());
    hyp.insert(4, (1..=5).map(|f| (f, lane_box(500.0, 500.0))).collect());
    out.push(EvalCase {
        name: "gap, new id and clutter",
        truth,
        hyp,
        fp: 5,
        fn_: 4,
        ids: 1,
        frag: 1,
        mt: 2,
        ml: 0,
        mota: 1.0 - 10.0 / 40.0,
        motp: (20.0 * 110.0 / 130.0 + 16.0) / 36.0,
    });

    // The hypotheses trade targets halfway.
    let truth = two_lanes();
    let mut hyp = TrackSet::new();
    let (a, b) = (&truth[&1], &truth[&2]);
    hyp.insert(7, a[..10].iter().chain(&b[10..]).copied().collect());
    hyp.insert(9, b[..10].iter().chain(&a[10..]).copied().collect());
    out.push(EvalCase {
        name: "identity swap",
        truth,
        hyp,
        fp: 0,
        fn_: 0,
        ids: 2,
        frag: 0,
        mt: 2,
        ml: 0,
        mota: 1.0 - 2.0 / 40.0,
        motp: 1.0,
    });

    // A 4 px offset overlaps at exactly one half, which is not a match.
    let truth = two_lanes();
    let mut hyp = truth.clone();
    hyp.insert(1, shifted(&truth[&1], 4.0));
    out.push(EvalCase {
        name: "half overlap is a miss",
        truth,
        hyp,
        fp: 20,
        fn_: 20,
        ids: 0,
        frag: 0,
        mt: 1,
        ml: 1,
        mota: 0.0,
        motp: 1.0,
    });

    // An established match at IoU 0.6 survives an exact newcomer.
    let truth = two_lanes();
    let mut hyp = truth.clone();
    hyp.insert(1, shifted(&truth[&1], 3.0));
    hyp.insert(3, truth[&1][10..].to_vec());
    out.push(EvalCase {
        name: "carry-over beats a closer box",
        truth,
        hyp,
        fp: 10,
        fn_: 0,
        ids: 0,
        frag: 0,
        mt: 2,
        ml: 0,
        mota: 0.75,
        motp: 0.8,
    });

    // Target 2 drops out for two frames under the same id.
    let truth = two_lanes();
    let mut hyp = truth.clone();
    hyp.get_mut(&2).unwrap().retain(|(f, _)| !(5..=6).contains(f));
    out.push(EvalCase {
        name: "fragment without switch",
        truth,
        hyp,
        fp: 0,
        fn_: 2,
        ids: 0,
        frag: 1,
        mt: 2,
        ml: 0,
        mota: 1.0 - 2.0 / 40.0,
        motp: 1.0,
    });
    out
}
/// Mismatches between a report and the hand-scored expectation.
pub fn eval_mismatches(case: &EvalCase, r: &MetricReport) -> Vec<String> {
    let mut bad = Vec::new();
    let counts = [
        ("FP", r.fp, case.fp),
        ("FN", r.fn_, case.fn_),
        ("IDS", r.ids, case.ids),
        ("Frag", r.frag, case.frag),
        ("MT", r.mt, case.mt),
        ("ML", r.ml, case.ml),
    ];
    for (name, got, want) in counts {
        if got != want {
            bad.push(format!("{name} {got} != {want}"));
        }
    }
    for (name, got, want) in [("MOTA", r.mota, case.mota), ("MOTP", r.motp, case.motp)] {
        if (got - want).abs() > 1e-6 {
            bad.push(format!("{name} {got} != {want}"));
        }
    }
    bad
}
