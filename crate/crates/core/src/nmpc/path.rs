//! Reference paths as polylines in the local north/east frame.

use serde::{Deserialize, Serialize};

use super::NmpcError;

/// Vertices used to sample a lemniscate.
pub const FIGURE_EIGHT_SAMPLES: usize = 720;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathSpec {
    /// `(north, east)` vertices in metres.
    Waypoints { points: Vec<(f64, f64)>, closed: bool },
    /// Gerono lemniscate `north = A sin t`, `east = A sin t cos t` about
    /// `center`.
    FigureEight { amplitude: f64, center: (f64, f64) },
}

impl PathSpec {
    pub fn figure_eight(amplitude: f64) -> Self {
        PathSpec::FigureEight {
            amplitude,
            center: (0.0, 0.0),
        }
    }

    pub fn build(&self) -> Result<Path, NmpcError> {
        match self {
            PathSpec::Waypoints { points, closed } => Path::new(points.clone(), *closed),
            PathSpec::FigureEight { amplitude, center } => {
                if !(amplitude.is_finite() && *amplitude > 0.0) {
                    return Err(NmpcError::Config(format!("amplitude must be > 0, got {amplitude}")));
                }
                let pts = (0..FIGURE_EIGHT_SAMPLES)
                    .map(|i| {
                        let t = i as f64 / FIGURE_EIGHT_SAMPLES as f64 * std::f64::consts::TAU;
                        (center.0 + amplitude * t.sin(), center.1 + amplitude * t.sin() * t.cos())
                    })
                    .collect();
                Path::new(pts, true)
            }
        }
    }
}

/// Nearest point on a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub segment: usize,
    /// Position along the segment in [0, 1].
    pub t: f64,
    pub point: (f64, f64),
    /// Arc length of `point` from the path start, m.
    pub s: f64,
    /// Signed distance, positive to port of the path direction.
    pub cross_track: f64,
    /// Path direction at `point`, rad from north, clockwise.
    pub heading: f64,
    /// Gradient of `cross_track` with respect to (north, east).
    pub grad: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    points: Vec<(f64, f64)>,
    closed: bool,
    /// Arc length at the start of each segment, plus the total at the end.
    cum: Vec<f64>,
    /// Segments with nonzero length.
    live: Vec<usize>,
}

impl Path {
    pub fn new(points: Vec<(f64, f64)>, closed: bool) -> Result<Self, NmpcError> {
        if points.len() < 2 {
            return Err(NmpcError::Config("a path needs at least 2 waypoints".into()));
        }
        if points.iter().any(|p| !(p.0.is_finite() && p.1.is_finite())) {
            return Err(NmpcError::Config("non-finite waypoint".into()));
        }
        let mut path = Self {
            points,
            closed,
            cum: Vec::new(),
            live: Vec::new(),
        };
        let mut acc = 0.0;
        for i in 0..path.segment_count() {
            path.cum.push(acc);
            let (a, b) = path.segment(i);
            let len = (b.0 - a.0).hypot(b.1 - a.1);
            if len > 1e-9 {
                path.live.push(i);
            }
            acc += len;
        }
        path.cum.push(acc);
        if path.live.is_empty() {
            return Err(NmpcError::Config("path has zero length".into()));
        }
        Ok(path)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn length(&self) -> f64 {
        *self.cum.last().expect("cum is never empty")
    }

    pub fn segment_count(&self) -> usize {
        if self.closed {
            self.points.len()
        } else {
            self.points.len() - 1
        }
    }

    pub fn segment(&self, i: usize) -> ((f64, f64), (f64, f64)) {
        let n = self.points.len();
        (self.points[i], self.points[(i + 1) % n])
    }

    pub fn start(&self) -> (f64, f64) {
        self.points[0]
    }

    pub fn end(&self) -> (f64, f64) {
        if self.closed {
            self.points[0]
        } else {
            self.points[self.points.len() - 1]
        }
    }

    /// Direction of the first nonzero segment, rad.
    pub fn start_heading(&self) -> f64 {
        self.project_on(self.live[0], self.points[self.live[0]]).heading
    }

    pub fn project_on(&self, seg: usize, p: (f64, f64)) -> Projection {
        let (a, b) = self.segment(seg);
        let (dn, de) = (b.0 - a.0, b.1 - a.1);
        let len2 = dn * dn + de * de;
        let len = len2.sqrt();
        let heading = crate::sim::wrap_2pi(de.atan2(dn));
        let t_raw = ((p.0 - a.0) * dn + (p.1 - a.1) * de) / len2;
        let t = t_raw.clamp(0.0, 1.0);
        let q = (a.0 + t * dn, a.1 + t * de);
        let cross = (p.0 - a.0) * de - (p.1 - a.1) * dn;
        let sign = if cross >= 0.0 { 1.0 } else { -1.0 };
        let (cross_track, grad) = if t_raw > 0.0 && t_raw < 1.0 {
            (cross / len, (de / len, -dn / len))
        } else {
            let (rn, re) = (p.0 - q.0, p.1 - q.1);
            let d = rn.hypot(re);
            if d < 1e-12 {
                (0.0, (de / len, -dn / len))
            } else {
                (sign * d, (sign * rn / d, sign * re / d))
            }
        };
        Projection {
            segment: seg,
            t,
            point: q,
            s: self.cum[seg] + t * len,
            cross_track,
            heading,
            grad,
        }
    }

    /// Nearest point over the whole path.
    pub fn project(&self, p: (f64, f64)) -> Projection {
        self.nearest_of(self.live.iter().copied(), p)
            .expect("live segments are never empty")
    }

    /// Nearest point among segments whose span overlaps `[s_lo, s_hi]` of arc
    /// length. Closed paths wrap.
    pub fn project_window(&self, p: (f64, f64), s_lo: f64, s_hi: f64) -> Projection {
        self.nearest_of(self.window_segments(s_lo, s_hi).into_iter(), p)
            .unwrap_or_else(|| self.project(p))
    }

    fn nearest_of(&self, segs: impl Iterator<Item = usize>, p: (f64, f64)) -> Option<Projection> {
        let mut best: Option<(f64, Projection)> = None;
        for seg in segs {
            let pr = self.project_on(seg, p);
            let d = (p.0 - pr.point.0).hypot(p.1 - pr.point.1);
            if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
                best = Some((d, pr));
            }
        }
        best.map(|(_, pr)| pr)
    }

    /// Live segment indices covering an arc-length window, in path order.
    pub fn window_segments(&self, s_lo: f64, s_hi: f64) -> Vec<usize> {
        let total = self.length();
        let nseg = self.segment_count();
        let (s_lo, s_hi) = if self.closed {
            if s_hi - s_lo >= total {
                return self.live.clone();
            }
            (s_lo, s_hi)
        } else {
            (s_lo.max(0.0), s_hi.min(total))
        };
        let start = self.segment_at(s_lo);
        let mut out = Vec::new();
        let mut i = start;
        let mut base = s_lo - self.wrapped(s_lo);
        for _ in 0..nseg {
            if self.cum[i] + base > s_hi {
                break;
            }
            if self.cum[i + 1] > self.cum[i] {
                out.push(i);
            }
            i += 1;
            if i == nseg {
                if !self.closed {
                    break;
                }
                i = 0;
                base += total;
            }
        }
        out
    }

    fn wrapped(&self, s: f64) -> f64 {
        if self.closed {
            s.rem_euclid(self.length())
        } else {
            s.clamp(0.0, self.length())
        }
    }

    /// Segment containing arc length `s`.
    pub fn segment_at(&self, s: f64) -> usize {
        let s = self.wrapped(s);
        let nseg = self.segment_count();
        match self.cum[..nseg].partition_point(|c| *c <= s) {
            0 => 0,
            k => k - 1,
        }
    }

    /// Point at arc length `s`. Closed paths wrap; open paths clamp.
    pub fn point_at(&self, s: f64) -> (f64, f64) {
        let s = self.wrapped(s);
        let seg = self.segment_at(s);
        let (a, b) = self.segment(seg);
        let len = self.cum[seg + 1] - self.cum[seg];
        let t = if len > 0.0 { ((s - self.cum[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
    }
}

/// Signed distance to the nearest segment, positive to port.
pub fn cross_track_error(position: (f64, f64), path: &Path) -> f64 {
    path.project(position).cross_track
}

/// Tracks progress along a path with a local search window, so that
/// self-intersecting paths resolve to the branch being followed.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgressTracker {
    /// Unwrapped arc length travelled.
    progress: f64,
    last: Option<Projection>,
    back: f64,
    ahead: f64,
}

impl ProgressTracker {
    pub fn new() -> Self {
        Self::with_window(5.0, 15.0)
    }

    pub fn with_window(back: f64, ahead: f64) -> Self {
        Self {
            progress: 0.0,
            last: None,
            back,
            ahead,
        }
    }

    /// Unwrapped arc length, m. Grows past the path length on closed paths.
    pub fn progress(&self) -> f64 {
        self.progress
    }

    pub fn last(&self) -> Option<&Projection> {
        self.last.as_ref()
    }

    pub fn laps(&self, path: &Path) -> f64 {
        self.progress / path.length()
    }

    pub fn update(&mut self, path: &Path, p: (f64, f64)) -> Projection {
        let pr = match &self.last {
            None => {
                // Start from the beginning of the path when it is close by.
                let head = path.project_window(p, -self.back, self.ahead);
                let global = path.project(p);
                if head.cross_track.abs() <= global.cross_track.abs() + 1.0 {
                    head
                } else {
                    global
                }
            }
            Some(last) => path.project_window(p, last.s - self.back, last.s + self.ahead),
        };
        if let Some(last) = &self.last {
            let mut ds = pr.s - last.s;
            if path.is_closed() {
                let total = path.length();
                if ds > total / 2.0 {
                    ds -= total;
                } else if ds < -total / 2.0 {
                    ds += total;
                }
            }
            self.progress += ds;
        } else {
            let mut s = pr.s;
            if path.is_closed() && s > path.length() / 2.0 {
                s -= path.length();
            }
            self.progress = s;
        }
        self.last = Some(pr);
        pr
    }
}

impl Default for ProgressTracker {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn east_line() -> Path {
        Path::new(vec![(0.0, 0.0), (0.0, 100.0)], false).unwrap()
    }

    #[test]
    fn port_side_is_positive() {
        assert!((cross_track_error((3.0, 10.0), &east_line()) - 3.0).abs() < 1e-12);
        assert!((cross_track_error((-2.0, 50.0), &east_line()) + 2.0).abs() < 1e-12);
        assert_eq!(cross_track_error((0.0, 42.0), &east_line()), 0.0);
    }

    #[test]
    fn diagonal_segment_distance() {
        let p = Path::new(vec![(0.0, 0.0), (10.0, 10.0)], false).unwrap();
        // Oracle: |(10,0) - (5,5)|.
        assert!((cross_track_error((10.0, 0.0), &p).abs() - 7.071067811865476).abs() < 1e-12);
    }

    #[test]
    fn endpoint_clamps_to_euclidean() {
        let d = cross_track_error((4.0, 103.0), &east_line());
        assert!((d - 5.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_segments_skipped() {
        let p = Path::new(vec![(0.0, 0.0), (0.0, 0.0), (0.0, 10.0)], false).unwrap();
        assert!((cross_track_error((1.0, 5.0), &p) - 1.0).abs() < 1e-12);
        assert!(Path::new(vec![(1.0, 1.0), (1.0, 1.0)], false).is_err());
        assert!(Path::new(vec![(1.0, 1.0)], false).is_err());
    }

    #[test]
    fn lemniscate_length_and_shape() {
        let p = PathSpec::figure_eight(20.0).build().unwrap();
        // Oracle: numerical arc length of the continuous curve, 6.097223 A.
        assert!((p.length() - 6.097223 * 20.0).abs() < 0.01, "{}", p.length());
        assert!((p.start_heading() - std::f64::consts::FRAC_PI_4).abs() < 0.01);
        assert!(PathSpec::figure_eight(0.0).build().is_err());
    }

    #[test]
    fn tracker_follows_branch_through_crossing() {
        let path = PathSpec::figure_eight(20.0).build().unwrap();
        let mut tr = ProgressTracker::new();
        let n = 2000;
        for i in 0..=n {
            let s = path.length() * i as f64 / n as f64;
            let pt = path.point_at(s);
            let pr = tr.update(&path, pt);
            assert!(pr.cross_track.abs() < 1e-6);
        }
        assert!((tr.laps(&path) - 1.0).abs() < 1e-6, "{}", tr.laps(&path));
    }

    #[test]
    fn window_wraps_on_closed_path() {
        let path = Path::new(vec![(0.0, 0.0), (0.0, 10.0), (10.0, 10.0), (10.0, 0.0)], true).unwrap();
        assert_eq!(path.window_segments(35.0, 45.0), vec![3, 0]);
        assert_eq!(path.window_segments(-5.0, 5.0), vec![3, 0]);
        assert_eq!(path.point_at(45.0), (0.0, 5.0));
    }
}
