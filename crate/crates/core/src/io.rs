//! File formats: MOT-Challenge CSV for detections, ground truth and results,
//! a feature sidecar CSV, and a flat `key = value` run configuration.
//!
//! Reals are written with six significant digits and LF line endings so that
//! equal inputs always produce byte-identical files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{BBox, Detection, RunConfig, Trajectory};

/// Detections grouped by frame, each frame sorted by `(x, y)`.
pub type FrameDetections = BTreeMap<u32, Vec<Detection>>;

/// Identity-labelled boxes: identity -> frame-ordered `(frame, box)`.
pub type TrackSet = BTreeMap<u64, Vec<(u32, BBox)>>;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Formats a real with at most six significant digits, `%g` style.
pub fn fmt_real(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x == 0.0 { "0".into() } else { format!("{x}") };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    let s = trim_zeros(&format!("{x:.decimals$}"));
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

fn parse_fields(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}

fn is_blank(line: &str) -> bool {
    let t = line.trim();
    t.is_empty() || t.starts_with('#')
}

struct RowParser<'a> {
    path: &'a Path,
    line: usize,
}

impl RowParser<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn real(&self, fields: &[&str], k: usize, name: &str) -> Result<f64> {
        let raw = fields
            .get(k)
            .ok_or_else(|| self.err(format!("missing column {name}")))?;
        let v: f64 = raw
            .parse()
            .map_err(|_| self.err(format!("column {name}: cannot parse {raw:?}")))?;
        if !v.is_finite() {
            return Err(self.err(format!("column {name}: non-finite value")));
        }
        Ok(v)
    }

    fn frame(&self, fields: &[&str]) -> Result<u32> {
        let f = self.real(fields, 0, "frame")?;
        if f < 1.0 || f.fract() != 0.0 || f > u32::MAX as f64 {
            return Err(self.err(format!("frame must be an integer >= 1, got {f}")));
        }
        Ok(f as u32)
    }

    fn bbox(&self, fields: &[&str]) -> Result<BBox> {
        let b = BBox::new(
            self.real(fields, 2, "x")?,
            self.real(fields, 3, "y")?,
            self.real(fields, 4, "w")?,
            self.real(fields, 5, "h")?,
        );
        if b.w <= 0.0 || b.h <= 0.0 {
            return Err(self.err(format!("box width and height must be positive, got w={} h={}", b.w, b.h)));
        }
        Ok(b)
    }
}

/// Parses a detection CSV. Rows are `frame, id, x, y, w, h, score[, ...]`;
/// scores must already be normalised to `(0, 1)`.
///
/// Returned entries keep the within-frame file order index alongside each
/// detection so a sidecar can be attached before sorting.
fn parse_detection_rows(path: &Path, text: &str) -> Result<BTreeMap<u32, Vec<Detection>>> {
    let mut frames: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        if is_blank(line) {
            continue;
        }
        let p = RowParser { path, line: k + 1 };
        let fields = parse_fields(line);
        let frame = p.frame(&fields)?;
        let bbox = p.bbox(&fields)?;
        let score = p.real(&fields, 6, "score")?;
        if !(score > 0.0 && score < 1.0) {
            return Err(p.err(format!("score must lie in (0, 1), got {score}")));
        }
        frames
            .entry(frame)
            .or_default()
            .push(Detection::new(frame, bbox, score));
    }
    Ok(frames)
}

fn sort_frames(frames: &mut FrameDetections) {
    for dets in frames.values_mut() {
        dets.sort_by(|a, b| {
            a.bbox
                .x
                .total_cmp(&b.bbox.x)
                .then(a.bbox.y.total_cmp(&b.bbox.y))
        });
    }
}

/// Parses a feature sidecar: `frame, index, v_1..v_d` where `index` is the
/// 0-based position of the detection among that frame's rows in file order.
fn attach_sidecar(
    frames: &mut BTreeMap<u32, Vec<Detection>>,
    path: &Path,
    text: &str,
    dim: Option<usize>,
) -> Result<()> {
    let mut dim = dim;
    for (k, line) in text.lines().enumerate() {
        if is_blank(line) {
            continue;
        }
        let p = RowParser { path, line: k + 1 };
        let fields = parse_fields(line);
        let frame = p.frame(&fields)?;
        let idx = p.real(&fields, 1, "index")?;
        if idx < 0.0 || idx.fract() != 0.0 {
            return Err(p.err("index must be a non-negative integer"));
        }
        let values = fields[2..]
            .iter()
            .enumerate()
            .map(|(j, _)| p.real(&fields, j + 2, "feature"))
            .collect::<Result<Vec<f64>>>()?;
        let expected = *dim.get_or_insert(values.len());
        if values.len() != expected || expected == 0 {
            return Err(p.err(format!(
                "feature dimension mismatch: expected {expected}, got {}",
                values.len()
            )));
        }
        let det = frames
            .get_mut(&frame)
            .and_then(|d| d.get_mut(idx as usize))
            .ok_or_else(|| p.err(format!("no detection {idx} in frame {frame}")))?;
        if det.feature.is_some() {
            return Err(p.err(format!("duplicate feature row for frame {frame} index {idx}")));
        }
        det.feature = Some(values);
    }
    for (frame, dets) in frames.iter() {
        if let Some(i) = dets.iter().position(|d| d.feature.is_none()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                msg: format!("missing feature row for frame {frame} index {i}"),
            });
        }
    }
    Ok(())
}

pub fn parse_detections(
    det_path: &Path,
    det_text: &str,
    sidecar: Option<(&Path, &str)>,
    feature_dim: Option<usize>,
) -> Result<FrameDetections> {
    let mut frames = parse_detection_rows(det_path, det_text)?;
    if let Some((path, text)) = sidecar {
        attach_sidecar(&mut frames, path, text, feature_dim)?;
    }
    sort_frames(&mut frames);
    Ok(frames)
}

pub fn load_detections(
    path: &Path,
    sidecar: Option<&Path>,
    feature_dim: Option<usize>,
) -> Result<FrameDetections> {
    let det_text = read(path)?;
    let side = match sidecar {
        Some(p) => Some((p, read(p)?)),
        None => None,
    };
    parse_detections(path, &det_text, side.as_ref().map(|(p, t)| (*p, t.as_str())), feature_dim)
}

/// Parses identity-labelled rows (`frame, id, x, y, w, h[, conf, ...]`).
/// Rows with an explicit confidence of 0 are ignored, as in MOT ground truth.
pub fn parse_ground_truth(path: &Path, text: &str) -> Result<TrackSet> {
    let mut tracks: TrackSet = BTreeMap::new();
    for (k, line) in text.lines().enumerate() {
        if is_blank(line) {
            continue;
        }
        let p = RowParser { path, line: k + 1 };
        let fields = parse_fields(line);
        let frame = p.frame(&fields)?;
        let id = p.real(&fields, 1, "id")?;
        if id < 1.0 || id.fract() != 0.0 {
            return Err(p.err(format!("identity must be an integer >= 1, got {id}")));
        }
        let bbox = p.bbox(&fields)?;
        if fields.len() > 6 && p.real(&fields, 6, "conf")? == 0.0 {
            continue;
        }
        let boxes = tracks.entry(id as u64).or_default();
        if boxes.iter().any(|(f, _)| *f == frame) {
            return Err(p.err(format!("duplicate row for frame {frame} id {id}")));
        }
        boxes.push((frame, bbox));
    }
    for boxes in tracks.values_mut() {
        boxes.sort_by_key(|b| b.0);
    }
    Ok(tracks)
}

pub fn load_ground_truth(path: &Path) -> Result<TrackSet> {
    parse_ground_truth(path, &read(path)?)
}

pub fn trajectories_to_trackset(trajectories: &[Trajectory]) -> TrackSet {
    trajectories
        .iter()
        .map(|t| (t.id, t.boxes.clone()))
        .collect()
}

/// Renders a track set as MOT result rows sorted by `(frame, id)`.
pub fn format_tracks(tracks: &TrackSet) -> String {
    let mut rows: Vec<(u32, u64, BBox)> = tracks
        .iter()
        .flat_map(|(&id, boxes)| boxes.iter().map(move |&(f, b)| (f, id, b)))
        .collect();
    rows.sort_by_key(|a| (a.0, a.1));
    let mut out = String::new();
    for (f, id, b) in rows {
        let _ = writeln!(
            out,
            "{f},{id},{},{},{},{},1,-1,-1,-1",
            fmt_real(b.x),
            fmt_real(b.y),
            fmt_real(b.w),
            fmt_real(b.h)
        );
    }
    out
}

pub fn write_trajectories(trajectories: &[Trajectory], path: &Path) -> Result<()> {
    write(path, &format_tracks(&trajectories_to_trackset(trajectories)))
}

pub fn write_ground_truth(tracks: &TrackSet, path: &Path) -> Result<()> {
    write(path, &format_tracks(tracks))
}

/// Renders detections (`frame, -1, x, y, w, h, score, -1, -1, -1`) and, when
/// every detection carries one, the matching feature sidecar.
pub fn format_detections(frames: &FrameDetections) -> (String, Option<String>) {
    let mut det = String::new();
    let mut side = String::new();
    let mut all_features = true;
    for (f, dets) in frames {
        for (i, d) in dets.iter().enumerate() {
            let b = d.bbox;
            let _ = writeln!(
                det,
                "{f},-1,{},{},{},{},{},-1,-1,-1",
                fmt_real(b.x),
                fmt_real(b.y),
                fmt_real(b.w),
                fmt_real(b.h),
                fmt_real(d.score)
            );
            match &d.feature {
                Some(v) => {
                    let _ = write!(side, "{f},{i}");
                    for x in v {
                        let _ = write!(side, ",{}", fmt_real(*x));
                    }
                    side.push('\n');
                }
                None => all_features = false,
            }
        }
    }
    (det, all_features.then_some(side))
}

pub fn write_detections(frames: &FrameDetections, det_path: &Path, sidecar: Option<&Path>) -> Result<()> {
    let (det, side) = format_detections(frames);
    write(det_path, &det)?;
    if let Some(p) = sidecar {
        let side = side.ok_or_else(|| Error::Config("detections lack features for a sidecar".into()))?;
        write(p, &side)?;
    }
    Ok(())
}

pub fn parse_config(path: &Path, text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (k, line) in text.lines().enumerate() {
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            msg,
        };
        let (key, value) = body
            .split_once('=')
            .ok_or_else(|| err(format!("expected key = value, got {body:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        apply_config_value(&mut cfg, key, value).map_err(err)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    parse_config(path, &read(path)?)
}

fn apply_config_value(cfg: &mut RunConfig, key: &str, value: &str) -> std::result::Result<(), String> {
    fn num<T: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
        value
            .parse()
            .map_err(|_| format!("{key}: cannot parse {value:?}"))
    }
    match key {
        "segment_len" => cfg.segment_len = num(key, value)?,
        "probe_window" => cfg.probe_window = num(key, value)?,
        "strongest_q" => cfg.strongest_q = num(key, value)?,
        "split_run" => cfg.split_run = num(key, value)?,
        "refine_iters" => cfg.refine_iters = num(key, value)?,
        "distance_threshold" => {
            cfg.distance_threshold = if value == "auto" {
                None
            } else {
                Some(num(key, value)?)
            }
        }
        "rank_tol" => cfg.rank_tol = num(key, value)?,
        "overlap_eta" => cfg.overlap_eta = num(key, value)?,
        "gap_bound" => cfg.gap_bound = num(key, value)?,
        "lambda1" => cfg.lambda1 = num(key, value)?,
        "lambda2" => cfg.lambda2 = num(key, value)?,
        "exit_band_frac" => cfg.exit_band_frac = num(key, value)?,
        "entry_exit_prob" => cfg.entry_exit_prob = num(key, value)?,
        "feature_dim" => cfg.feature_dim = num(key, value)?,
        "rng_seed" => cfg.rng_seed = num(key, value)?,
        "det_threshold" => cfg.det_threshold = num(key, value)?,
        "frame_width" => cfg.frame_width = num(key, value)?,
        "frame_height" => cfg.frame_height = num(key, value)?,
        "pair_cap" => cfg.pair_cap = num(key, value)?,
        "max_rank" => cfg.max_rank = num(key, value)?,
        "use_appearance" => cfg.use_appearance = num(key, value)?,
        _ => return Err(format!("unknown configuration key {key:?}")),
    }
    Ok(())
}

/// Serialises a configuration in the same `key = value` format.
pub fn format_config(cfg: &RunConfig) -> String {
    let omega = cfg
        .distance_threshold
        .map(fmt_real)
        .unwrap_or_else(|| "auto".into());
    format!(
        "segment_len = {}\nprobe_window = {}\nstrongest_q = {}\nsplit_run = {}\nrefine_iters = {}\n\
         distance_threshold = {omega}\nrank_tol = {}\noverlap_eta = {}\ngap_bound = {}\nlambda1 = {}\n\
         lambda2 = {}\nexit_band_frac = {}\nentry_exit_prob = {}\nfeature_dim = {}\nrng_seed = {}\n\
         det_threshold = {}\nframe_width = {}\nframe_height = {}\npair_cap = {}\nmax_rank = {}\n\
         use_appearance = {}\n",
        cfg.segment_len,
        cfg.probe_window,
        cfg.strongest_q,
        cfg.split_run,
        cfg.refine_iters,
        cfg.rank_tol,
        cfg.overlap_eta,
        cfg.gap_bound,
        cfg.lambda1,
        cfg.lambda2,
        cfg.exit_band_frac,
        cfg.entry_exit_prob,
        cfg.feature_dim,
        cfg.rng_seed,
        cfg.det_threshold,
        cfg.frame_width,
        cfg.frame_height,
        cfg.pair_cap,
        cfg.max_rank,
        cfg.use_appearance,
    )
}
