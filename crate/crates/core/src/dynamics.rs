//! Hankel-rank motion dynamics.
//!
//! A tracklet's box centers form a sequence `y_s..y_e`. Its block Hankel
//! matrix has two-row blocks (x then y) and `n = l - ceil(l/3) + 1` columns;
//! entry `(block i, column j)` is `y_{s+i+j}` (0-based), so anti-diagonal
//! blocks are constant. The numerical rank of that matrix estimates the order
//! of the smallest linear recurrence generating the sequence.
//!
//! Rank is estimated by counting singular values above `tol * sigma_1`. An
//! iterative Hankel total-least-squares estimator could slot in behind
//! [`estimate_rank`] without touching callers.

use log::warn;
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{gap_frames, temporal_overlap, Tracklet};

/// Similarity used when either tracklet is too short for a Hankel window.
pub const SHORT_TRACKLET_SIMILARITY: f64 = 0.5;

/// Frame-ordered, gapless 2-D positions.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicSequence {
    pub start: u32,
    pub points: Vec<[f64; 2]>,
}

impl DynamicSequence {
    pub fn from_tracklet(t: &Tracklet) -> Self {
        Self {
            start: t.start(),
            points: t.centers(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HankelMatrix {
    pub blocks: usize,
    pub columns: usize,
    pub matrix: DMatrix<f64>,
}

pub fn hankel_columns(len: usize) -> usize {
    len - len.div_ceil(3) + 1
}

pub fn build_hankel(points: &[[f64; 2]]) -> Result<HankelMatrix> {
    let l = points.len();
    if l < 3 {
        return Err(Error::ShortSequence(l));
    }
    let columns = hankel_columns(l);
    let blocks = l - columns + 1;
    let matrix = DMatrix::from_fn(2 * blocks, columns, |r, c| points[r / 2 + c][r % 2]);
    Ok(HankelMatrix {
        blocks,
        columns,
        matrix,
    })
}

/// Singular values in descending order.
pub fn singular_values(h: &HankelMatrix) -> Vec<f64> {
    let mut sv: Vec<f64> = h.matrix.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Number of singular values strictly above `tol * sigma_1`; zero for a zero matrix.
pub fn estimate_rank(h: &HankelMatrix, tol: f64) -> usize {
    let sv = singular_values(h);
    let top = sv.first().copied().unwrap_or(0.0);
    if top <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * top).count()
}

pub fn sequence_rank(points: &[[f64; 2]], tol: f64) -> Result<usize> {
    Ok(estimate_rank(&build_hankel(points)?, tol))
}

/// Joins `a`, the linearly interpolated gap centers, and `b`.
pub fn interpolate_gap(a: &Tracklet, b: &Tracklet) -> Result<DynamicSequence> {
    let gap = gap_frames(a, b)?;
    let mut points = a.centers();
    let p0 = a.last().bbox.center();
    let p1 = b.first().bbox.center();
    let span = (gap + 1) as f64;
    for k in 1..=gap {
        let t = k as f64 / span;
        points.push([p0[0] + (p1[0] - p0[0]) * t, p0[1] + (p1[1] - p0[1]) * t]);
    }
    points.extend(b.centers());
    Ok(DynamicSequence {
        start: a.start(),
        points,
    })
}

/// Rank-ratio similarity `(r_a + r_b) / r_ab - 1`, clamped to `[0, 1]`.
///
/// Returns `-inf` when the tracklets overlap in time or `b` does not start
/// after `a` ends.
pub fn motion_similarity(a: &Tracklet, b: &Tracklet, tol: f64) -> f64 {
    if temporal_overlap(a, b) || b.start() <= a.end() {
        return f64::NEG_INFINITY;
    }
    if a.len() < 3 || b.len() < 3 {
        return SHORT_TRACKLET_SIMILARITY;
    }
    let joint = match interpolate_gap(a, b) {
        Ok(j) => j,
        Err(_) => return f64::NEG_INFINITY,
    };
    let ranks = (
        sequence_rank(&a.centers(), tol),
        sequence_rank(&b.centers(), tol),
        sequence_rank(&joint.points, tol),
    );
    match ranks {
        (Ok(ra), Ok(rb), Ok(rab)) => {
            if rab == 0 {
                // Only possible when every position is the origin.
                return 1.0;
            }
            let raw = (ra + rb) as f64 / rab as f64 - 1.0;
            if raw > 1.05 {
                warn!(
                    "motion similarity {raw:.3} above 1 for tracklets {} -> {} (ranks {ra}, {rb}, {rab})",
                    a.id(),
                    b.id()
                );
            }
            raw.clamp(0.0, 1.0)
        }
        _ => SHORT_TRACKLET_SIMILARITY,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BBox, Detection};

    fn tracklet_from_centers(id: u64, start: u32, pts: &[[f64; 2]]) -> Tracklet {
        let dets = pts
            .iter()
            .enumerate()
            .map(|(k, p)| Detection::new(start + k as u32, BBox::from_center(*p, 10.0, 20.0), 0.9))
            .collect();
        Tracklet::new(id, dets).unwrap()
    }

    #[test]
    fn column_counts() {
        assert_eq!(hankel_columns(9), 7);
        assert_eq!(hankel_columns(10), 7);
        let h = build_hankel(&[[1.0, 2.0]; 9]).unwrap();
        assert_eq!(h.matrix.nrows(), 2 * (9 - 7 + 1));
        assert_eq!(h.matrix.ncols(), 7);
    }

    #[test]
    fn hankel_layout_is_anti_diagonal_constant() {
        let pts: Vec<[f64; 2]> = (0..10).map(|t| [t as f64, 100.0 + t as f64]).collect();
        let h = build_hankel(&pts).unwrap();
        for i in 0..h.blocks {
            for j in 0..h.columns {
                assert_eq!(h.matrix[(2 * i, j)], pts[i + j][0]);
                assert_eq!(h.matrix[(2 * i + 1, j)], pts[i + j][1]);
            }
        }
    }

    #[test]
    fn constant_sequence_columns_identical() {
        let h = build_hankel(&[[5.0, 5.0]; 8]).unwrap();
        for j in 1..h.columns {
            assert_eq!(h.matrix.column(j), h.matrix.column(0));
        }
        assert_eq!(estimate_rank(&h, 0.01), 1);
    }

    #[test]
    fn short_sequence_rejected() {
        assert!(matches!(
            build_hankel(&[[0.0, 0.0], [1.0, 1.0]]),
            Err(Error::ShortSequence(2))
        ));
    }

    #[test]
    fn constant_velocity_rank_two() {
        let pts: Vec<[f64; 2]> = (1..=12).map(|t| [t as f64, 2.0 * t as f64]).collect();
        assert_eq!(sequence_rank(&pts, 0.01).unwrap(), 2);
    }

    #[test]
    fn zero_matrix_rank_zero() {
        let h = build_hankel(&[[0.0, 0.0]; 6]).unwrap();
        assert_eq!(estimate_rank(&h, 0.01), 0);
    }

    #[test]
    fn gap_interpolation() {
        let a = tracklet_from_centers(1, 9, &[[-2.0, -2.0], [0.0, 0.0]]);
        let b = tracklet_from_centers(2, 12, &[[4.0, 4.0], [6.0, 6.0]]);
        let j = interpolate_gap(&a, &b).unwrap();
        assert_eq!(j.len(), 13 - 9 + 1);
        assert_eq!(j.points[2], [2.0, 2.0]);

        let a = tracklet_from_centers(1, 1, &[[0.0, 0.0]]);
        let b = tracklet_from_centers(2, 5, &[[8.0, 0.0]]);
        let j = interpolate_gap(&a, &b).unwrap();
        assert_eq!(&j.points[1..4], &[[2.0, 0.0], [4.0, 0.0], [6.0, 0.0]]);

        let a = tracklet_from_centers(1, 1, &[[0.0, 0.0], [1.0, 0.0]]);
        let b = tracklet_from_centers(2, 3, &[[9.0, 9.0]]);
        let j = interpolate_gap(&a, &b).unwrap();
        assert_eq!(j.points, vec![[0.0, 0.0], [1.0, 0.0], [9.0, 9.0]]);
        assert!(interpolate_gap(&b, &a).is_err());
    }

    #[test]
    fn split_line_scores_one() {
        let pts: Vec<[f64; 2]> = (1..=60).map(|t| [3.0 * (t - 30) as f64, 2.0 * (t - 30) as f64]).collect();
        let a = tracklet_from_centers(1, 1, &pts[..25]);
        let b = tracklet_from_centers(2, 36, &pts[35..]);
        assert_eq!(motion_similarity(&a, &b, 0.01), 1.0);
    }

    #[test]
    fn different_headings_score_zero() {
        let a_pts: Vec<[f64; 2]> = (0..12).map(|t| [100.0 + 4.0 * t as f64, 200.0]).collect();
        let b_pts: Vec<[f64; 2]> = (0..12).map(|t| [150.0, 300.0 - 5.0 * t as f64]).collect();
        let a = tracklet_from_centers(1, 1, &a_pts);
        let b = tracklet_from_centers(2, 16, &b_pts);
        assert!(motion_similarity(&a, &b, 0.01) <= 0.1);
    }

    #[test]
    fn overlap_is_conflict() {
        let pts: Vec<[f64; 2]> = (0..10).map(|t| [t as f64, 0.0]).collect();
        let a = tracklet_from_centers(1, 1, &pts);
        let b = tracklet_from_centers(2, 5, &pts);
        assert_eq!(motion_similarity(&a, &b, 0.01), f64::NEG_INFINITY);
        assert_eq!(motion_similarity(&b, &a, 0.01), f64::NEG_INFINITY);
    }

    #[test]
    fn short_tracklets_fall_back() {
        let a = tracklet_from_centers(1, 1, &[[0.0, 0.0], [1.0, 0.0]]);
        let b = tracklet_from_centers(2, 5, &[[4.0, 0.0], [5.0, 0.0], [6.0, 0.0]]);
        assert_eq!(motion_similarity(&a, &b, 0.01), SHORT_TRACKLET_SIMILARITY);
    }
}
