//! Seeded synthetic scenarios: ground-truth trajectories, noisy detections and
//! per-identity Gaussian appearance features.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{write_detections, write_ground_truth, FrameDetections, TrackSet};
use crate::model::{BBox, Detection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motion {
    Constant {
        position: [f64; 2],
    },
    ConstantVelocity {
        origin: [f64; 2],
        velocity: [f64; 2],
    },
    Quadratic {
        origin: [f64; 2],
        velocity: [f64; 2],
        accel: [f64; 2],
    },
    /// Piecewise-linear path through `(frame, center)` knots, held constant
    /// outside them.
    Waypoints {
        points: Vec<(u32, [f64; 2])>,
    },
}

impl Motion {
    /// Center at `frame` for a target that appears at `start`.
    pub fn position(&self, start: u32, frame: u32) -> [f64; 2] {
        let t = f64::from(frame) - f64::from(start);
        match self {
            Motion::Constant { position } => *position,
            Motion::ConstantVelocity { origin, velocity } => {
                [origin[0] + velocity[0] * t, origin[1] + velocity[1] * t]
            }
            Motion::Quadratic { origin, velocity, accel } => [
                origin[0] + velocity[0] * t + 0.5 * accel[0] * t * t,
                origin[1] + velocity[1] * t + 0.5 * accel[1] * t * t,
            ],
            Motion::Waypoints { points } => {
                let Some(first) = points.first() else {
                    return [0.0, 0.0];
                };
                if frame <= first.0 {
                    return first.1;
                }
                for w in points.windows(2) {
                    let ((f0, p0), (f1, p1)) = (w[0], w[1]);
                    if frame <= f1 {
                        let s = f64::from(frame - f0) / f64::from(f1 - f0);
                        return [p0[0] + (p1[0] - p0[0]) * s, p0[1] + (p1[1] - p0[1]) * s];
                    }
                }
                points.last().expect("non-empty").1
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub id: u64,
    pub start: u32,
    pub end: u32,
    /// Box width and height.
    pub size: [f64; 2],
    pub motion: Motion,
}

/// Frames in which `occluded` produces no detection. With merge noise the
/// occluder's detections drift toward the hidden target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Occlusion {
    pub occluded: u64,
    #[serde(default)]
    pub occluder: Option<u64>,
    pub start: u32,
    pub end: u32,
}

fn default_scores() -> [f64; 2] {
    [0.7, 0.95]
}

fn default_jitter() -> f64 {
    0.03
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub frames: u32,
    pub width: f64,
    pub height: f64,
    pub feature_dim: usize,
    /// Radius of the sphere carrying the identity cluster centers.
    pub separation: f64,
    pub feature_noise: f64,
    pub position_noise: f64,
    pub miss_prob: f64,
    /// Each target draws a base score from this range once.
    #[serde(default = "default_scores")]
    pub score_range: [f64; 2],
    /// Per-frame uniform perturbation of the base score, clamped to the range.
    #[serde(default = "default_jitter")]
    pub score_jitter: f64,
    /// Fraction of the way an occluder's box moves toward the hidden target.
    #[serde(default)]
    pub merge_noise: f64,
    pub targets: Vec<TargetSpec>,
    #[serde(default)]
    pub occlusions: Vec<Occlusion>,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let mut ids = BTreeSet::new();
        for t in &self.targets {
            if !ids.insert(t.id) {
                return Err(Error::Scenario(format!("duplicate target id {}", t.id)));
            }
            if t.id == 0 || t.start == 0 || t.start > t.end || t.end > self.frames {
                return Err(Error::Scenario(format!("target {} has an invalid frame range", t.id)));
            }
            if !(t.size[0] > 0.0 && t.size[1] > 0.0) {
                return Err(Error::Scenario(format!("target {} needs a positive size", t.id)));
            }
        }
        for o in &self.occlusions {
            if !ids.contains(&o.occluded) || o.occluder.is_some_and(|id| !ids.contains(&id)) {
                return Err(Error::Scenario("occlusion names an unknown target".into()));
            }
            if o.start > o.end {
                return Err(Error::Scenario("occlusion window is empty".into()));
            }
        }
        let probs_ok = (0.0..=1.0).contains(&self.miss_prob) && (0.0..=1.0).contains(&self.merge_noise);
        let scores_ok = self.score_range[0] > 0.0 && self.score_range[0] <= self.score_range[1] && self.score_range[1] < 1.0;
        if !probs_ok || !scores_ok {
            return Err(Error::Scenario("probabilities and scores must lie in [0, 1]".into()));
        }
        if self.feature_dim == 0 || self.feature_noise < 0.0 || self.position_noise < 0.0 || self.score_jitter < 0.0 {
            return Err(Error::Scenario("feature_dim must be positive and noise non-negative".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Identity cluster centers on a sphere of radius `separation`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureClusters {
    pub centers: Vec<Vec<f64>>,
}

impl FeatureClusters {
    pub fn new<R: Rng>(count: usize, dim: usize, separation: f64, rng: &mut R) -> Self {
        let centers = (0..count)
            .map(|_| {
                let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                v.into_iter().map(|x| x * separation / n).collect()
            })
            .collect();
        Self { centers }
    }

    pub fn sample<R: Rng>(&self, cluster: usize, noise: f64, rng: &mut R) -> Vec<f64> {
        self.centers[cluster]
            .iter()
            .map(|c| {
                let e: f64 = StandardNormal.sample(rng);
                c + noise * e
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub detections: FrameDetections,
    pub truth: TrackSet,
}

pub fn generate(spec: &ScenarioSpec, seed: u64) -> Result<Scenario> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clusters = FeatureClusters::new(spec.targets.len(), spec.feature_dim, spec.separation, &mut rng);
    let [lo, hi] = spec.score_range;
    let base_scores: Vec<f64> = spec.targets.iter().map(|_| rng.random_range(lo..=hi)).collect();
    let pos_noise = Normal::new(0.0, spec.position_noise.max(0.0)).map_err(|e| Error::Scenario(e.to_string()))?;
    let hidden = |id: u64, f: u32| {
        spec.occlusions
            .iter()
            .any(|o| o.occluded == id && (o.start..=o.end).contains(&f))
    };
    let mut out = Scenario {
        detections: FrameDetections::new(),
        truth: TrackSet::new(),
    };
    for f in 1..=spec.frames {
        let mut dets = Vec::new();
        for (k, t) in spec.targets.iter().enumerate() {
            if !(t.start..=t.end).contains(&f) {
                continue;
            }
            let truth = BBox::from_center(t.motion.position(t.start, f), t.size[0], t.size[1]);
            out.truth.entry(t.id).or_default().push((f, truth));
            // Draw every random quantity up front so streams do not depend on drops.
            let miss = rng.random::<f64>() < spec.miss_prob;
            let dx = if spec.position_noise > 0.0 { pos_noise.sample(&mut rng) } else { 0.0 };
            let dy = if spec.position_noise > 0.0 { pos_noise.sample(&mut rng) } else { 0.0 };
            let jitter: f64 = rng.random_range(-1.0..=1.0);
            let score = (base_scores[k] + spec.score_jitter * jitter).clamp(lo, hi);
            let feature = clusters.sample(k, spec.feature_noise, &mut rng);
            if miss || hidden(t.id, f) {
                continue;
            }
            let mut center = truth.center();
            if spec.merge_noise > 0.0 {
                for o in &spec.occlusions {
                    if o.occluder == Some(t.id) && (o.start..=o.end).contains(&f) {
                        if let Some(h) = spec.targets.iter().find(|h| h.id == o.occluded) {
                            let p = h.motion.position(h.start, f);
                            center[0] += spec.merge_noise * (p[0] - center[0]);
                            center[1] += spec.merge_noise * (p[1] - center[1]);
                        }
                    }
                }
            }
            let bbox = BBox::from_center([center[0] + dx, center[1] + dy], t.size[0], t.size[1]);
            dets.push(Detection::new(f, bbox, score).with_feature(feature).with_hint(t.id));
        }
        if !dets.is_empty() {
            dets.sort_by(|a, b| a.bbox.x.total_cmp(&b.bbox.x).then(a.bbox.y.total_cmp(&b.bbox.y)));
            out.detections.insert(f, dets);
        }
    }
    Ok(out)
}

/// Writes detections, the feature sidecar and the ground truth.
pub fn write_scenario(s: &Scenario, det: &Path, features: &Path, truth: &Path) -> Result<()> {
    write_detections(&s.detections, det, Some(features))?;
    write_ground_truth(&s.truth, truth)
}

fn base(frames: u32) -> ScenarioSpec {
    ScenarioSpec {
        frames,
        width: 640.0,
        height: 480.0,
        feature_dim: 32,
        separation: 4.0,
        feature_noise: 1.0,
        position_noise: 0.5,
        miss_prob: 0.0,
        score_range: default_scores(),
        score_jitter: default_jitter(),
        merge_noise: 0.0,
        targets: Vec::new(),
        occlusions: Vec::new(),
    }
}

/// Two targets crossing at frame 50; the second is hidden for ten frames
/// around the crossing.
pub fn crossing(seed: u64) -> ScenarioSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xC805_5106);
    let mut spec = base(100);
    let meet = [320.0 + rng.random_range(-20.0..20.0), 240.0 + rng.random_range(-20.0..20.0)];
    let speed = rng.random_range(3.5..4.5);
    let tilt1 = rng.random_range(0.2..0.8);
    let tilt2 = rng.random_range(-0.8..-0.2);
    for (id, v) in [(1u64, [speed, tilt1]), (2, [-speed, tilt2])] {
        spec.targets.push(TargetSpec {
            id,
            start: 1,
            end: 100,
            size: [30.0, 70.0],
            motion: Motion::ConstantVelocity {
                origin: [meet[0] - 49.0 * v[0], meet[1] - 49.0 * v[1]],
                velocity: v,
            },
        });
    }
    spec.occlusions.push(Occlusion {
        occluded: 2,
        occluder: Some(1),
        start: 45,
        end: 54,
    });
    spec
}

/// Like [`crossing`], but both targets move at the same velocity and cross
/// from one lane into the other while mutually occluded.
pub fn crossing_similar(seed: u64) -> ScenarioSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5_1A11);
    let mut spec = base(100);
    let vx = rng.random_range(3.5..4.5);
    let x0 = rng.random_range(100.0..140.0);
    let y0 = rng.random_range(200.0..260.0);
    let lane = rng.random_range(36.0..44.0);
    let (hide_start, hide_end) = (45, 54);
    let x = |f: u32| x0 + vx * f64::from(f - 1);
    for (id, from, to) in [(1u64, y0, y0 + lane), (2, y0 + lane, y0)] {
        spec.targets.push(TargetSpec {
            id,
            start: 1,
            end: 100,
            size: [30.0, 70.0],
            motion: Motion::Waypoints {
                points: vec![
                    (1, [x(1), from]),
                    (hide_start, [x(hide_start), from]),
                    (hide_end, [x(hide_end), to]),
                    (100, [x(100), to]),
                ],
            },
        });
        spec.occlusions.push(Occlusion {
            occluded: id,
            occluder: None,
            start: hide_start,
            end: hide_end,
        });
    }
    spec
}

/// Two targets walking in neighbouring lanes swap lanes while both are hidden,
/// so the straightest continuation across the gap is the wrong one.
pub fn motion_unreliable(seed: u64) -> ScenarioSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0DD_D1CE);
    let mut spec = base(80);
    let vx = rng.random_range(2.5..3.5);
    let x0 = rng.random_range(90.0..130.0);
    let y0 = rng.random_range(200.0..260.0);
    let lane = rng.random_range(36.0..44.0);
    let hide_start = 36;
    let hide_end = hide_start + rng.random_range(6..=12);
    let x = |f: u32| x0 + vx * f64::from(f - 1);
    for (id, from, to) in [(1u64, y0, y0 + lane), (2, y0 + lane, y0)] {
        spec.targets.push(TargetSpec {
            id,
            start: 1,
            end: 80,
            size: [30.0, 70.0],
            motion: Motion::Waypoints {
                points: vec![
                    (1, [x(1), from]),
                    (hide_start, [x(hide_start), from]),
                    (hide_end, [x(hide_end), to]),
                    (80, [x(80), to]),
                ],
            },
        });
        spec.occlusions.push(Occlusion {
            occluded: id,
            occluder: None,
            start: hide_start,
            end: hide_end,
        });
    }
    spec
}

/// A small mixed suite: linear, quadratic and stationary targets with misses
/// and occlusions.
pub fn standard_suite(seed: u64) -> Vec<ScenarioSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5_7A4D);
    let mut out = vec![crossing(seed)];

    let mut s = base(120);
    s.miss_prob = 0.03;
    let n = 4;
    for id in 1..=n {
        let y = 80.0 + 90.0 * id as f64;
        let vx = rng.random_range(2.0..4.0) * if id % 2 == 0 { -1.0 } else { 1.0 };
        let x0 = if vx > 0.0 { 60.0 } else { 580.0 };
        let motion = if id == 3 {
            Motion::Quadratic {
                origin: [x0, y],
                velocity: [vx, -1.0],
                accel: [0.0, 0.02],
            }
        } else {
            Motion::ConstantVelocity {
                origin: [x0, y],
                velocity: [vx, rng.random_range(-0.3..0.3)],
            }
        };
        s.targets.push(TargetSpec {
            id,
            start: 1,
            end: 120,
            size: [28.0, 64.0],
            motion,
        });
    }
    s.occlusions.push(Occlusion {
        occluded: 2,
        occluder: None,
        start: 40,
        end: 47,
    });
    s.occlusions.push(Occlusion {
        occluded: 4,
        occluder: None,
        start: 70,
        end: 81,
    });
    out.push(s);

    let mut s = base(90);
    s.targets.push(TargetSpec {
        id: 1,
        start: 1,
        end: 90,
        size: [30.0, 70.0],
        motion: Motion::Constant {
            position: [200.0, 240.0],
        },
    });
    s.targets.push(TargetSpec {
        id: 2,
        start: 10,
        end: 90,
        size: [30.0, 70.0],
        motion: Motion::ConstantVelocity {
            origin: [560.0, 120.0],
            velocity: [-3.0, 2.0],
        },
    });
    s.occlusions.push(Occlusion {
        occluded: 2,
        occluder: None,
        start: 50,
        end: 58,
    });
    out.push(s);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_detections_match_truth() {
        let mut spec = crossing(1);
        spec.position_noise = 0.0;
        spec.occlusions.clear();
        let s = generate(&spec, 5).unwrap();
        for dets in s.detections.values() {
            for d in dets {
                let truth = &s.truth[&d.id_hint.unwrap()];
                let (_, b) = truth.iter().find(|(f, _)| *f == d.frame).unwrap();
                assert_eq!(&d.bbox, b);
            }
        }
    }

    #[test]
    fn occlusion_leaves_hole() {
        let s = generate(&crossing(3), 3).unwrap();
        assert_eq!(s.truth.len(), 2);
        let frames_of_2: Vec<u32> = s
            .detections
            .values()
            .flatten()
            .filter(|d| d.id_hint == Some(2))
            .map(|d| d.frame)
            .collect();
        assert_eq!(frames_of_2.len(), 90);
        assert!(frames_of_2.iter().all(|f| !(45..=54).contains(f)));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut spec = crossing(1);
        spec.targets[1].id = 1;
        assert!(matches!(generate(&spec, 1), Err(Error::Scenario(_))));
    }

    #[test]
    fn json_round_trip() {
        let spec = motion_unreliable(4);
        assert_eq!(ScenarioSpec::from_json(&spec.to_json().unwrap()).unwrap(), spec);
    }

    #[test]
    fn waypoints_interpolate() {
        let m = Motion::Waypoints {
            points: vec![(1, [0.0, 0.0]), (11, [10.0, 20.0])],
        };
        assert_eq!(m.position(1, 6), [5.0, 10.0]);
        assert_eq!(m.position(1, 30), [10.0, 20.0]);
    }
}
