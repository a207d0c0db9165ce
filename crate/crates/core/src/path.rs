//! Reference path of the ego vehicle.
//!
//! The path is a chain of straight lines and cubic Bézier turns, parameterized
//! by arc length `s`. It provides the curvature `κ(s)` used by the bicycle
//! model and converts world points to road-aligned `(s, d)` coordinates, with
//! `d` positive to the left of the path tangent.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::PathError;

pub type Vec2 = Vector2<f64>;

/// Spacing of the arc-length → Bézier-parameter lookup table.
const TABLE_STEP: f64 = 0.1;
/// Spacing of the cached samples used for the coarse projection search.
const COARSE_STEP: f64 = 1.0;
/// Default half-width of the corridor inside which projections are accepted.
pub const DEFAULT_CORRIDOR: f64 = 20.0;

// 8-point Gauss-Legendre nodes/weights on [-1, 1].
const GL_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

fn unit(heading: f64) -> Vec2 {
    Vec2::new(heading.cos(), heading.sin())
}

fn left_normal(t: &Vec2) -> Vec2 {
    Vec2::new(-t.y, t.x)
}

fn cross(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Cubic Bézier with an arc-length lookup table.
#[derive(Debug, Clone)]
pub struct Bezier {
    ctrl: [Vec2; 4],
    length: f64,
    // Parameter t at s = j * TABLE_STEP.
    table: Vec<f64>,
}

impl Bezier {
    pub fn new(ctrl: [Vec2; 4]) -> Result<Self, PathError> {
        let mut bz = Bezier { ctrl, length: 0.0, table: Vec::new() };
        const PIECES: usize = 1000;
        let mut total = 0.0;
        for i in 0..PIECES {
            let a = i as f64 / PIECES as f64;
            let b = (i + 1) as f64 / PIECES as f64;
            total += bz.arc_between(a, b);
        }
        if !(total > 1e-9) {
            return Err(PathError::Geometry("degenerate Bézier segment".into()));
        }
        for i in 0..=PIECES {
            let t = i as f64 / PIECES as f64;
            if bz.derivative(t).norm() < 1e-9 {
                return Err(PathError::Geometry("Bézier segment has a cusp (zero speed)".into()));
            }
        }
        bz.length = total;
        let entries = (total / TABLE_STEP).floor() as usize;
        let mut table = Vec::with_capacity(entries + 1);
        table.push(0.0);
        let mut t_prev = 0.0;
        for j in 1..=entries {
            let t = bz.invert_from(t_prev, (j - 1) as f64 * TABLE_STEP, j as f64 * TABLE_STEP);
            table.push(t);
            t_prev = t;
        }
        bz.table = table;
        Ok(bz)
    }

    pub fn control_points(&self) -> &[Vec2; 4] {
        &self.ctrl
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn eval(&self, t: f64) -> Vec2 {
        let [p0, p1, p2, p3] = &self.ctrl;
        let u = 1.0 - t;
        p0 * (u * u * u) + p1 * (3.0 * u * u * t) + p2 * (3.0 * u * t * t) + p3 * (t * t * t)
    }

    pub fn derivative(&self, t: f64) -> Vec2 {
        let [p0, p1, p2, p3] = &self.ctrl;
        let u = 1.0 - t;
        ((p1 - p0) * (u * u) + (p2 - p1) * (2.0 * u * t) + (p3 - p2) * (t * t)) * 3.0
    }

    pub fn second_derivative(&self, t: f64) -> Vec2 {
        let [p0, p1, p2, p3] = &self.ctrl;
        ((p2 - p1 * 2.0 + p0) * (1.0 - t) + (p3 - p2 * 2.0 + p1) * t) * 6.0
    }

    /// Signed curvature at parameter `t` (left turns positive).
    pub fn curvature_param(&self, t: f64) -> f64 {
        let d1 = self.derivative(t);
        let d2 = self.second_derivative(t);
        cross(&d1, &d2) / d1.norm().powi(3)
    }

    fn arc_between(&self, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        GL_NODES.iter().zip(GL_WEIGHTS.iter()).map(|(x, w)| w * self.derivative(mid + half * x).norm()).sum::<f64>()
            * half
    }

    // Newton iteration from a known (t_ref, s_ref) pair to arc length `s`.
    fn invert_from(&self, t_ref: f64, s_ref: f64, s: f64) -> f64 {
        let mut t = (t_ref + (s - s_ref) / self.derivative(t_ref).norm()).clamp(0.0, 1.0);
        for _ in 0..50 {
            let err = s_ref + self.arc_between(t_ref, t) - s;
            if err.abs() < 1e-11 {
                break;
            }
            t = (t - err / self.derivative(t).norm()).clamp(0.0, 1.0);
        }
        t
    }

    /// Bézier parameter at local arc length `s` (monotone inversion).
    pub fn param_at(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        if s >= self.length {
            return 1.0;
        }
        let j = ((s / TABLE_STEP).floor() as usize).min(self.table.len() - 1);
        self.invert_from(self.table[j], j as f64 * TABLE_STEP, s)
    }
}

/// One piece of the reference path.
#[derive(Debug, Clone)]
pub enum Segment {
    Line { start: Vec2, heading: f64, length: f64 },
    Bezier(Bezier),
}

impl Segment {
    pub fn length(&self) -> f64 {
        match self {
            Segment::Line { length, .. } => *length,
            Segment::Bezier(b) => b.length(),
        }
    }

    /// Point, unit tangent and signed curvature at local arc length.
    fn frame(&self, s: f64) -> (Vec2, Vec2, f64) {
        match self {
            Segment::Line { start, heading, .. } => {
                let t = unit(*heading);
                (start + t * s, t, 0.0)
            }
            Segment::Bezier(b) => {
                let u = b.param_at(s);
                let d = b.derivative(u);
                (b.eval(u), d / d.norm(), b.curvature_param(u))
            }
        }
    }

    fn start_frame(&self) -> (Vec2, Vec2) {
        let (p, t, _) = self.frame(0.0);
        (p, t)
    }

    fn end_frame(&self) -> (Vec2, Vec2) {
        let (p, t, _) = self.frame(self.length());
        (p, t)
    }
}

/// Cubic turn whose inner control points sit on the lane tangents at half the
/// chord length from the endpoints.
pub fn half_chord_turn(start: Vec2, start_heading: f64, end: Vec2, end_heading: f64) -> Result<Bezier, PathError> {
    let half = 0.5 * (end - start).norm();
    Bezier::new([start, start + unit(start_heading) * half, end - unit(end_heading) * half, end])
}

/// Cubic approximation of a circular arc (control distance `4/3·tan(θ/4)·R`).
pub fn circular_arc_bezier(start: Vec2, heading: f64, radius: f64, angle: f64) -> Result<Bezier, PathError> {
    if !(radius > 0.0) || angle == 0.0 {
        return Err(PathError::Geometry("arc needs positive radius and nonzero angle".into()));
    }
    let sign = angle.signum();
    let n0 = left_normal(&unit(heading));
    let center = start + n0 * (sign * radius);
    let end_heading = heading + angle;
    let end = center - left_normal(&unit(end_heading)) * (sign * radius);
    let k = 4.0 / 3.0 * (angle.abs() / 4.0).tan() * radius;
    Bezier::new([start, start + unit(heading) * k, end - unit(end_heading) * k, end])
}

/// Road-aligned pose of a world point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvilinearPose {
    pub s: f64,
    pub d: f64,
    pub heading_of_path: f64,
}

/// Axis-aligned world rectangle marking an intersection conflict zone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConflictZone {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl ConflictZone {
    pub fn contains(&self, p: &Vec2, margin: f64) -> bool {
        p.x >= self.x_min - margin
            && p.x <= self.x_max + margin
            && p.y >= self.y_min - margin
            && p.y <= self.y_max + margin
    }

    /// Arc-length interval during which the path centerline, widened by
    /// `half_width`, lies inside the zone.
    pub fn s_interval(&self, path: &ReferencePath, half_width: f64) -> Option<(f64, f64)> {
        let inside = |s: f64| self.contains(&path.point_at(s), half_width);
        let step = 0.05;
        let n = (path.total_length() / step).ceil() as usize;
        let samples: Vec<f64> = (0..=n).map(|i| (i as f64 * step).min(path.total_length())).collect();
        let first = samples.iter().position(|&s| inside(s))?;
        let last = samples.iter().rposition(|&s| inside(s))?;
        let refine = |mut lo: f64, mut hi: f64, want_inside_hi: bool| {
            // invariant: inside(lo) != inside(hi)
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if inside(mid) == want_inside_hi {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let entry = if first == 0 { 0.0 } else { refine(samples[first - 1], samples[first], true) };
        let exit = if last == samples.len() - 1 {
            path.total_length()
        } else {
            refine(samples[last + 1], samples[last], true)
        };
        Some((entry, exit))
    }
}

/// The ego vehicle's fixed reference path.
#[derive(Debug, Clone)]
pub struct ReferencePath {
    segments: Vec<Segment>,
    offsets: Vec<f64>,
    total_length: f64,
    intersection_entry_s: f64,
    intersection_exit_s: f64,
    max_curvature: f64,
    corridor: f64,
    conflict_zone: Option<ConflictZone>,
    coarse: Vec<(f64, Vec2)>,
}

impl ReferencePath {
    /// Builds a path and checks continuity. The intersection interval is
    /// initially empty at the path end; set it with [`Self::with_intersection`].
    pub fn new(segments: Vec<Segment>) -> Result<Self, PathError> {
        if segments.is_empty() {
            return Err(PathError::Geometry("path needs at least one segment".into()));
        }
        for (i, seg) in segments.iter().enumerate() {
            if !(seg.length() > 0.0) {
                return Err(PathError::Geometry(format!("segment {i} has non-positive length")));
            }
        }
        for (i, pair) in segments.windows(2).enumerate() {
            let (pe, te) = pair[0].end_frame();
            let (ps, ts) = pair[1].start_frame();
            if (pe - ps).norm() > 1e-9 {
                return Err(PathError::Geometry(format!(
                    "segments {i} and {} are not C0-continuous (gap {:e} m)",
                    i + 1,
                    (pe - ps).norm()
                )));
            }
            let mismatch = cross(&te, &ts).atan2(te.dot(&ts)).abs();
            if mismatch > 1e-6 {
                return Err(PathError::Geometry(format!(
                    "segments {i} and {} are not C1-continuous (tangent mismatch {mismatch:e} rad)",
                    i + 1
                )));
            }
        }
        let mut offsets = Vec::with_capacity(segments.len());
        let mut acc = 0.0;
        for seg in &segments {
            offsets.push(acc);
            acc += seg.length();
        }
        let mut path = ReferencePath {
            segments,
            offsets,
            total_length: acc,
            intersection_entry_s: acc,
            intersection_exit_s: acc,
            max_curvature: 0.0,
            corridor: DEFAULT_CORRIDOR,
            conflict_zone: None,
            coarse: Vec::new(),
        };
        let n = (acc / COARSE_STEP).floor() as usize;
        let mut coarse: Vec<(f64, Vec2)> = (0..=n)
            .map(|i| {
                let s = i as f64 * COARSE_STEP;
                (s, path.point_at(s))
            })
            .collect();
        if acc - n as f64 * COARSE_STEP > 1e-9 {
            coarse.push((acc, path.point_at(acc)));
        }
        path.coarse = coarse;
        let mut kmax: f64 = 0.0;
        for seg in &path.segments {
            if let Segment::Bezier(b) = seg {
                for i in 0..=2000 {
                    kmax = kmax.max(b.curvature_param(i as f64 / 2000.0).abs());
                }
            }
        }
        path.max_curvature = kmax;
        Ok(path)
    }

    pub fn with_intersection(mut self, entry_s: f64, exit_s: f64) -> Result<Self, PathError> {
        if !(0.0 <= entry_s && entry_s < exit_s && exit_s <= self.total_length) {
            return Err(PathError::Geometry(format!(
                "intersection interval [{entry_s}, {exit_s}] is not inside [0, {}]",
                self.total_length
            )));
        }
        self.intersection_entry_s = entry_s;
        self.intersection_exit_s = exit_s;
        Ok(self)
    }

    pub fn with_corridor(mut self, corridor: f64) -> Self {
        self.corridor = corridor;
        self
    }

    pub fn with_conflict_zone(mut self, zone: ConflictZone) -> Self {
        self.conflict_zone = Some(zone);
        self
    }

    pub fn conflict_zone(&self) -> Option<&ConflictZone> {
        self.conflict_zone.as_ref()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn intersection_entry_s(&self) -> f64 {
        self.intersection_entry_s
    }

    pub fn intersection_exit_s(&self) -> f64 {
        self.intersection_exit_s
    }

    pub fn max_curvature(&self) -> f64 {
        self.max_curvature
    }

    pub fn corridor(&self) -> f64 {
        self.corridor
    }

    /// Index of the segment that contains `s`, plus the local arc length.
    fn locate(&self, s: f64) -> (usize, f64) {
        let s = s.clamp(0.0, self.total_length);
        let idx = match self.offsets.binary_search_by(|o| o.total_cmp(&s)) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        (idx, s - self.offsets[idx])
    }

    fn frame(&self, s: f64) -> (Vec2, Vec2, f64) {
        let (i, local) = self.locate(s);
        self.segments[i].frame(local)
    }

    fn check_range(&self, s: f64) -> Result<(), PathError> {
        if !(0.0..=self.total_length).contains(&s) {
            return Err(PathError::OutOfRange { s, length: self.total_length });
        }
        Ok(())
    }

    /// Whether `s` lies on a turn segment.
    pub fn is_turn_at(&self, s: f64) -> bool {
        matches!(self.segments[self.locate(s).0], Segment::Bezier(_))
    }

    /// Signed curvature at arc length `s`.
    pub fn curvature_at(&self, s: f64) -> Result<f64, PathError> {
        self.check_range(s)?;
        Ok(self.frame(s).2)
    }

    /// Curvature with `s` clamped into the path range; used inside integrators
    /// that may step marginally past the end.
    pub fn curvature_clamped(&self, s: f64) -> f64 {
        self.frame(s).2
    }

    /// World point at arc length `s` (clamped to the path).
    pub fn point_at(&self, s: f64) -> Vec2 {
        self.frame(s).0
    }

    /// Unit tangent at arc length `s` (clamped to the path).
    pub fn tangent_at(&self, s: f64) -> Vec2 {
        self.frame(s).1
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        let t = self.tangent_at(s);
        t.y.atan2(t.x)
    }

    pub fn curvilinear_to_world(&self, pose: &CurvilinearPose) -> Result<Vec2, PathError> {
        self.check_range(pose.s)?;
        let (p, t, _) = self.frame(pose.s);
        Ok(p + left_normal(&t) * pose.d)
    }

    /// Projects a world point onto the path: the closest path point, with the
    /// smallest `s` among equidistant candidates.
    pub fn world_to_curvilinear(&self, p: &Vec2) -> Result<CurvilinearPose, PathError> {
        let no_proj = || PathError::NoProjection { x: p.x, y: p.y };
        let dist: Vec<f64> = self.coarse.iter().map(|(_, q)| (p - q).norm()).collect();
        let best_coarse = dist.iter().cloned().fold(f64::INFINITY, f64::min);
        if best_coarse > self.corridor + COARSE_STEP {
            return Err(no_proj());
        }
        let n = dist.len();
        let mut best: Option<(f64, f64, f64)> = None; // (distance, s, gradient)
        for i in 0..n {
            let local_min = (i == 0 || dist[i] <= dist[i - 1]) && (i + 1 == n || dist[i] <= dist[i + 1]);
            if !local_min || dist[i] > best_coarse + COARSE_STEP + 1e-9 {
                continue;
            }
            let lo = self.coarse[i.saturating_sub(1)].0;
            let hi = self.coarse[(i + 1).min(n - 1)].0;
            let (s, g) = self.refine_projection(p, lo, hi);
            let d = (p - self.point_at(s)).norm();
            let better = match best {
                None => true,
                Some((bd, bs, _)) => d < bd - 1e-9 || ((d - bd).abs() <= 1e-9 && s < bs),
            };
            if better {
                best = Some((d, s, g));
            }
        }
        let (_, s, g) = best.ok_or_else(no_proj)?;
        if g.abs() > 1e-6 {
            // closest point is a path endpoint with the point beyond it
            return Err(no_proj());
        }
        let (q, t, _) = self.frame(s);
        let d = (p - q).dot(&left_normal(&t));
        if d.abs() > self.corridor {
            return Err(no_proj());
        }
        Ok(CurvilinearPose { s, d, heading_of_path: t.y.atan2(t.x) })
    }

    // Minimizes |p - c(s)|^2 on [lo, hi]; returns (s*, gradient at s*), where
    // the gradient is (c(s) - p)·t(s).
    fn refine_projection(&self, p: &Vec2, lo: f64, hi: f64) -> (f64, f64) {
        let grad = |s: f64| {
            let (q, t, k) = self.frame(s);
            let r = q - p;
            (r.dot(&t), 1.0 + k * r.dot(&left_normal(&t)))
        };
        let (ga, _) = grad(lo);
        let (gb, _) = grad(hi);
        if ga >= 0.0 && gb >= 0.0 && ga.abs() > 1e-12 {
            return (lo, ga);
        }
        if ga <= 0.0 && gb <= 0.0 && gb.abs() > 1e-12 {
            return (hi, gb);
        }
        if ga.abs() <= 1e-12 {
            return (lo, ga);
        }
        if gb.abs() <= 1e-12 {
            return (hi, gb);
        }
        // Sign change ga < 0 < gb: safeguarded Newton.
        let (mut a, mut b) = (lo, hi);
        let mut s = 0.5 * (a + b);
        let mut g_s = 0.0;
        for _ in 0..100 {
            let (g, dg) = grad(s);
            g_s = g;
            if g.abs() < 1e-12 {
                break;
            }
            if g < 0.0 {
                a = s;
            } else {
                b = s;
            }
            let newton = s - g / dg;
            s = if dg > 0.0 && newton > a && newton < b { newton } else { 0.5 * (a + b) };
            if b - a < 1e-14 {
                g_s = grad(s).0;
                break;
            }
        }
        (s, g_s)
    }
}

/// Declarative path segment used in scenario files. Segments chain from the
/// end of the previous one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentSpec {
    Line {
        length: f64,
    },
    /// Half-chord cubic turn ending at `end` with heading `end_heading_deg`.
    Turn {
        end: [f64; 2],
        end_heading_deg: f64,
    },
    /// Cubic approximation of a circular arc; positive angle turns left.
    Arc {
        radius: f64,
        angle_deg: f64,
    },
}

/// Declarative path description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub start: [f64; 2],
    pub heading_deg: f64,
    pub segments: Vec<SegmentSpec>,
    pub conflict_zone: ConflictZone,
    #[serde(default = "default_corridor")]
    pub corridor: f64,
}

fn default_corridor() -> f64 {
    DEFAULT_CORRIDOR
}

impl PathSpec {
    /// Builds the path. The intersection interval is where the centerline,
    /// widened by `ego_half_width`, overlaps the conflict zone.
    pub fn build(&self, ego_half_width: f64) -> Result<ReferencePath, PathError> {
        let mut pos = Vec2::new(self.start[0], self.start[1]);
        let mut heading = self.heading_deg.to_radians();
        let mut segments = Vec::with_capacity(self.segments.len());
        for spec in &self.segments {
            let seg = match spec {
                SegmentSpec::Line { length } => Segment::Line { start: pos, heading, length: *length },
                SegmentSpec::Turn { end, end_heading_deg } => Segment::Bezier(half_chord_turn(
                    pos,
                    heading,
                    Vec2::new(end[0], end[1]),
                    end_heading_deg.to_radians(),
                )?),
                SegmentSpec::Arc { radius, angle_deg } => {
                    Segment::Bezier(circular_arc_bezier(pos, heading, *radius, angle_deg.to_radians())?)
                }
            };
            let (p, t) = seg.end_frame();
            pos = p;
            heading = t.y.atan2(t.x);
            segments.push(seg);
        }
        let path = ReferencePath::new(segments)?.with_corridor(self.corridor);
        let (entry, exit) = self
            .conflict_zone
            .s_interval(&path, ego_half_width)
            .ok_or_else(|| PathError::Geometry("path never enters the conflict zone".into()))?;
        Ok(path.with_intersection(entry, exit)?.with_conflict_zone(self.conflict_zone))
    }
}
