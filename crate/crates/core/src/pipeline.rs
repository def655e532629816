//! End-to-end tracking: per-segment tracklet generation and refinement,
//! second-step appearance models, affinities and the global association.

use std::collections::BTreeSet;

use log::{debug, info};

use crate::affinity::{assess_difficult, AffinityTable, ExitMap};
use crate::association::{associate, build_affinity, partition_segments, Association, Segment};
use crate::error::Result;
use crate::io::FrameDetections;
use crate::metric::{learn_models, refine_group, AppearanceModel, Phase};
use crate::model::{RunConfig, Tracklet};
use crate::tracklet_gen::{generate_initial_tracklets, IdSource};

/// Everything needed to run (or re-run) the association step.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub segments: Vec<Segment>,
    pub tracklets: Vec<Tracklet>,
    pub model: Option<AppearanceModel>,
    pub flagged: BTreeSet<u64>,
    pub table: AffinityTable,
}

pub fn prepare(frames: &FrameDetections, cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let last = frames.keys().next_back().copied().unwrap_or(0);
    let segments = partition_segments(last, cfg.segment_len);
    let exits = ExitMap::from_config(cfg);
    let mut ids = IdSource::default();
    let mut tracklets = Vec::new();
    let mut model = cfg.use_appearance.then(AppearanceModel::default);

    for seg in &segments {
        let window: FrameDetections = frames.range(seg.start..=seg.end).map(|(f, d)| (*f, d.clone())).collect();
        let initial = generate_initial_tracklets(&window, cfg, &mut ids);
        let count = initial.len();
        let reliable = match model.as_mut() {
            Some(m) => {
                let refined = refine_group(initial, &exits, cfg, &mut ids)?;
                m.merge(learn_models(&refined, Phase::Reliable, &exits, cfg)?);
                refined
            }
            None => initial,
        };
        debug!(
            "segment {} [{}, {}]: {} initial, {} reliable tracklets",
            seg.index,
            seg.start,
            seg.end,
            count,
            reliable.len()
        );
        tracklets.extend(reliable);
    }

    let flagged = assess_difficult(&tracklets, cfg);
    let table = build_affinity(&tracklets, model.as_ref(), &exits, &flagged, cfg)?;
    info!(
        "{} segments, {} tracklets, {} flagged, {} candidate links",
        segments.len(),
        tracklets.len(),
        flagged.len(),
        table.rows.len()
    );
    Ok(Prepared {
        segments,
        tracklets,
        model,
        flagged,
        table,
    })
}

pub fn track(frames: &FrameDetections, cfg: &RunConfig) -> Result<(Prepared, Association)> {
    let prepared = prepare(frames, cfg)?;
    let assoc = associate(&prepared.tracklets, &prepared.table, cfg)?;
    Ok((prepared, assoc))
}
