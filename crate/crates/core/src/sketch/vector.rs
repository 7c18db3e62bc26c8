//! Stroke-5 vector sketches.
//!
//! A [`VectorSketch`] stores absolute, normalized coordinates with a one-hot
//! pen state per point. The pen state of point `t` describes the pen between
//! point `t` and point `t + 1`: `Down` draws a segment, `Up` lifts the pen and
//! `End` terminates the sketch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of points kept per sketch, terminal included.
pub const DEFAULT_MAX_POINTS: usize = 196;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenState {
    Down,
    Up,
    End,
}

impl PenState {
    pub fn index(self) -> usize {
        match self {
            PenState::Down => 0,
            PenState::Up => 1,
            PenState::End => 2,
        }
    }

    pub fn one_hot(self) -> [f64; 3] {
        let mut q = [0.0; 3];
        q[self.index()] = 1.0;
        q
    }

    fn from_one_hot(q: [f64; 3]) -> Option<Self> {
        let states = [PenState::Down, PenState::Up, PenState::End];
        let mut found = None;
        for (bit, state) in q.iter().zip(states) {
            if *bit == 1.0 {
                if found.is_some() {
                    return None;
                }
                found = Some(state);
            } else if *bit != 0.0 {
                return None;
            }
        }
        found
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrokePoint {
    pub x: f64,
    pub y: f64,
    pub pen: PenState,
}

impl StrokePoint {
    pub fn new(x: f64, y: f64, pen: PenState) -> Self {
        Self { x, y, pen }
    }

    pub fn to_stroke5(&self) -> [f64; 5] {
        let q = self.pen.one_hot();
        [self.x, self.y, q[0], q[1], q[2]]
    }
}

/// An ordered stroke-5 point sequence that always ends with exactly one
/// end-of-sketch point and keeps every coordinate in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 5]>", into = "Vec<[f64; 5]>")]
pub struct VectorSketch {
    points: Vec<StrokePoint>,
}

impl VectorSketch {
    /// Validates an already-normalized point list.
    pub fn new(points: Vec<StrokePoint>) -> Result<Self> {
        let invalid = |index: usize, reason: &str| Error::MalformedRecord {
            index,
            reason: reason.to_string(),
        };
        let Some(last) = points.last() else {
            return Err(invalid(0, "vector sketch has no points"));
        };
        if last.pen != PenState::End {
            return Err(invalid(points.len() - 1, "final point must carry the end-of-sketch state"));
        }
        for (i, p) in points.iter().enumerate() {
            if !(0.0..=1.0).contains(&p.x) || !(0.0..=1.0).contains(&p.y) {
                return Err(invalid(i, "coordinate outside [0, 1]"));
            }
            if p.pen == PenState::End && i + 1 != points.len() {
                return Err(invalid(i, "end-of-sketch state before the final point"));
            }
        }
        Ok(Self { points })
    }

    /// Builds a sketch from stroke-3 offsets `(dx, dy, lifted)`, where
    /// `lifted` marks the last point of a stroke.
    pub fn from_stroke3(deltas: &[(f64, f64, bool)], max_points: usize) -> Result<Self> {
        let mut x = 0.0;
        let mut y = 0.0;
        let raw = deltas
            .iter()
            .map(|&(dx, dy, lifted)| {
                x += dx;
                y += dy;
                let pen = if lifted { PenState::Up } else { PenState::Down };
                StrokePoint::new(x, y, pen)
            })
            .collect();
        Self::from_absolute(raw, max_points)
    }

    /// Builds a sketch from absolute points in arbitrary units: truncates at
    /// the last whole stroke that fits, terminates, and normalizes into the
    /// unit square preserving aspect ratio.
    ///
    /// A trailing `Down` point is turned into the terminal point; a trailing
    /// `Up` point gets an extra terminal point at the same location.
    pub fn from_absolute(mut raw: Vec<StrokePoint>, max_points: usize) -> Result<Self> {
        if max_points < 2 {
            return Err(Error::Config(format!("max_points must be >= 2, got {max_points}")));
        }
        if raw.is_empty() {
            return Err(Error::MalformedRecord {
                index: 0,
                reason: "sketch has no points".into(),
            });
        }
        for (i, p) in raw.iter().enumerate() {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(Error::MalformedRecord {
                    index: i,
                    reason: "non-finite coordinate".into(),
                });
            }
            if p.pen == PenState::End && i + 1 != raw.len() {
                return Err(Error::MalformedRecord {
                    index: i,
                    reason: "end-of-sketch state before the final point".into(),
                });
            }
        }

        let terminated_len = |pts: &[StrokePoint]| match pts.last().map(|p| p.pen) {
            Some(PenState::Up) => pts.len() + 1,
            _ => pts.len(),
        };
        if terminated_len(&raw) > max_points {
            // Keep whole strokes that leave room for the terminal point.
            let cut = raw[..max_points - 1]
                .iter()
                .rposition(|p| p.pen == PenState::Up)
                .map(|i| i + 1)
                .unwrap_or(max_points - 1);
            raw.truncate(cut);
            if let Some(last) = raw.last_mut() {
                last.pen = PenState::Up;
            }
        }
        match raw.last().map(|p| p.pen) {
            Some(PenState::Down) => raw.last_mut().unwrap().pen = PenState::End,
            Some(PenState::Up) => {
                let last = *raw.last().unwrap();
                raw.push(StrokePoint::new(last.x, last.y, PenState::End));
            }
            _ => {}
        }

        normalize_in_place(&mut raw);
        Self::new(raw)
    }

    /// Parses absolute stroke-5 rows, checking the one-hot pen state.
    pub fn from_stroke5_rows(rows: &[[f64; 5]], max_points: usize) -> Result<Self> {
        let raw = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let pen = PenState::from_one_hot([r[2], r[3], r[4]]).ok_or_else(|| {
                    Error::MalformedRecord {
                        index: i,
                        reason: format!("pen state {:?} is not one-hot", &r[2..]),
                    }
                })?;
                Ok(StrokePoint::new(r[0], r[1], pen))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_absolute(raw, max_points)
    }

    pub fn points(&self) -> &[StrokePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_stroke5_rows(&self) -> Vec<[f64; 5]> {
        self.points.iter().map(StrokePoint::to_stroke5).collect()
    }

    /// Line segments drawn with the pen down, as `((x0, y0), (x1, y1))`.
    pub fn pen_down_segments(&self) -> impl Iterator<Item = ((f64, f64), (f64, f64))> + '_ {
        self.points
            .windows(2)
            .filter(|w| w[0].pen == PenState::Down)
            .map(|w| ((w[0].x, w[0].y), (w[1].x, w[1].y)))
    }

    pub fn stroke_count(&self) -> usize {
        let lifted = self.points.iter().filter(|p| p.pen == PenState::Up).count();
        let n = self.points.len();
        let open_tail = n >= 2 && self.points[n - 2].pen == PenState::Down;
        lifted + usize::from(open_tail)
    }
}

impl TryFrom<Vec<[f64; 5]>> for VectorSketch {
    type Error = Error;

    fn try_from(rows: Vec<[f64; 5]>) -> Result<Self> {
        let points = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                PenState::from_one_hot([r[2], r[3], r[4]])
                    .map(|pen| StrokePoint::new(r[0], r[1], pen))
                    .ok_or_else(|| Error::MalformedRecord {
                        index: i,
                        reason: "pen state is not one-hot".into(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }
}

impl From<VectorSketch> for Vec<[f64; 5]> {
    fn from(v: VectorSketch) -> Self {
        v.to_stroke5_rows()
    }
}

/// Min-max normalization into `[0, 1]` with the longer side spanning the unit
/// interval and the shorter side centered. Degenerate extents map to 0.5.
fn normalize_in_place(points: &mut [StrokePoint]) {
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in points.iter() {
        min_x = min_x.min(p.x);
        max_x = max_x.max(p.x);
        min_y = min_y.min(p.y);
        max_y = max_y.max(p.y);
    }
    let extent = (max_x - min_x).max(max_y - min_y);
    if extent <= 0.0 {
        for p in points.iter_mut() {
            p.x = 0.5;
            p.y = 0.5;
        }
        return;
    }
    let scale = 1.0 / extent;
    let pad_x = (1.0 - (max_x - min_x) * scale) / 2.0;
    let pad_y = (1.0 - (max_y - min_y) * scale) / 2.0;
    for p in points.iter_mut() {
        p.x = ((p.x - min_x) * scale + pad_x).clamp(0.0, 1.0);
        p.y = ((p.y - min_y) * scale + pad_y).clamp(0.0, 1.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_maps_to_center_with_end_state() {
        let v = VectorSketch::from_stroke3(&[(0.0, 0.0, false)], DEFAULT_MAX_POINTS).unwrap();
        assert_eq!(v.to_stroke5_rows(), vec![[0.5, 0.5, 0.0, 0.0, 1.0]]);
    }

    #[test]
    fn lifted_tail_gets_explicit_terminal() {
        let v = VectorSketch::from_stroke3(
            &[(0.0, 0.0, false), (1.0, 0.0, false), (0.0, 1.0, true)],
            DEFAULT_MAX_POINTS,
        )
        .unwrap();
        assert_eq!(v.len(), 4);
        let last = v.points()[3];
        assert_eq!(last.pen, PenState::End);
        assert_eq!((last.x, last.y), (v.points()[2].x, v.points()[2].y));
    }

    #[test]
    fn aspect_ratio_preserved_and_centered() {
        let v = VectorSketch::from_stroke3(&[(0.0, 0.0, false), (4.0, 2.0, true)], 10).unwrap();
        let p = v.points();
        assert_eq!((p[0].x, p[0].y), (0.0, 0.25));
        assert_eq!((p[1].x, p[1].y), (1.0, 0.75));
    }

    #[test]
    fn truncation_keeps_whole_strokes() {
        // three strokes of 3 points each
        let mut d = Vec::new();
        for _ in 0..3 {
            d.push((1.0, 0.0, false));
            d.push((1.0, 1.0, false));
            d.push((0.0, 1.0, true));
        }
        let v = VectorSketch::from_stroke3(&d, 8).unwrap();
        // 6 points of two strokes + terminal
        assert_eq!(v.len(), 7);
        assert_eq!(v.stroke_count(), 2);
        assert_eq!(v.points()[5].pen, PenState::Up);
    }

    #[test]
    fn overlong_single_stroke_is_hard_cut() {
        let d: Vec<_> = (0..20).map(|i| (i as f64, 0.0, i == 19)).collect();
        let v = VectorSketch::from_stroke3(&d, 5).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.points()[3].pen, PenState::Up);
    }

    #[test]
    fn rejects_non_one_hot_pen() {
        let err = VectorSketch::from_stroke5_rows(&[[0.0, 0.0, 1.0, 1.0, 0.0]], 10).unwrap_err();
        assert!(matches!(err, Error::MalformedRecord { index: 0, .. }));
    }

    #[test]
    fn rejects_early_end() {
        let rows = [[0.0, 0.0, 0.0, 0.0, 1.0], [1.0, 1.0, 0.0, 0.0, 1.0]];
        assert!(VectorSketch::from_stroke5_rows(&rows, 10).is_err());
    }

    #[test]
    fn serde_round_trip_as_rows() {
        let v = VectorSketch::from_stroke3(&[(0.0, 0.0, false), (3.0, 1.0, true)], 10).unwrap();
        let json = serde_json::to_string(&v).unwrap();
        let back: VectorSketch = serde_json::from_str(&json).unwrap();
        assert_eq!(v, back);
    }
}
