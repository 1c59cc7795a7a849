//! Minimal sketch-extrude kernel.
//!
//! Solids are never turned into a boundary representation. Membership of a
//! point is decided by folding the boolean operations over per-body tests, and
//! surface samples are kept only where membership flips across the candidate
//! surface.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cad::{
    validate_cad_sequence, BooleanOp, CadCommand, CadKind, CadSequence, ExtentMode, Violation, SLOT_ALPHA,
    SLOT_BOOL, SLOT_E1, SLOT_E2, SLOT_FLAG, SLOT_GAMMA, SLOT_MODE, SLOT_PS, SLOT_PX, SLOT_PY, SLOT_R, SLOT_S,
    SLOT_THETA, SLOT_X, SLOT_Y,
};
use crate::error::{Error, Result};
use crate::ingest::Point2;

/// Default number of surface samples per shape.
pub const DEFAULT_SAMPLES: usize = 2000;
/// Chord tolerance for curve flattening, relative to the loop's bounding-box diagonal.
pub const CHORD_TOLERANCE: f64 = 1e-3;
/// On-surface tolerance, relative to the solid's bounding-box diagonal.
pub const ON_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Orthonormal sketch frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub x_axis: Vec3,
    pub y_axis: Vec3,
    pub normal: Vec3,
}

impl Frame {
    /// `Rz(γ)·Ry(θ)` applied to the standard basis: θ tilts the normal from +z
    /// toward +x, γ then spins the tilted frame about +z.
    pub fn from_angles(theta: f64, gamma: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sg, cg) = gamma.sin_cos();
        Frame {
            x_axis: Vec3::new(ct * cg, ct * sg, -st),
            y_axis: Vec3::new(-sg, cg, 0.0),
            normal: Vec3::new(st * cg, st * sg, ct),
        }
    }
}

/// Closed polyline loops of one sketch; the first loop has the largest area.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub loops: Vec<Vec<Point2>>,
}

fn loop_area(l: &[Point2]) -> f64 {
    let n = l.len();
    0.5 * (0..n).map(|i| l[i].x * l[(i + 1) % n].y - l[(i + 1) % n].x * l[i].y).sum::<f64>()
}

fn seg_dist(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    Point2::new(a.x + t * dx, a.y + t * dy).dist(p)
}

fn ray_crossings(p: Point2, l: &[Point2]) -> usize {
    let n = l.len();
    let mut c = 0;
    for i in 0..n {
        let (a, b) = (l[i], l[(i + 1) % n]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                c += 1;
            }
        }
    }
    c
}

impl Profile {
    pub fn new(mut loops: Vec<Vec<Point2>>) -> Self {
        loops.sort_by(|a, b| loop_area(b).abs().total_cmp(&loop_area(a).abs()));
        Profile { loops }
    }

    pub fn bbox(&self) -> (Point2, Point2) {
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in self.loops.iter().flatten() {
            lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        (lo, hi)
    }

    pub fn default_tolerance(&self) -> f64 {
        let (lo, hi) = self.bbox();
        ON_TOLERANCE * lo.dist(hi)
    }

    pub fn distance_to_boundary(&self, p: Point2) -> f64 {
        self.loops
            .iter()
            .flat_map(|l| (0..l.len()).map(move |i| seg_dist(p, l[i], l[(i + 1) % l.len()])))
            .fold(f64::INFINITY, f64::min)
    }

    /// Even-odd membership; points within `tol` of an edge count as inside.
    pub fn contains(&self, p: Point2, tol: f64) -> bool {
        if self.distance_to_boundary(p) <= tol {
            return true;
        }
        self.loops.iter().map(|l| ray_crossings(p, l)).sum::<usize>() % 2 == 1
    }

    /// Area under the even-odd rule, assuming loops do not cross.
    pub fn area(&self) -> f64 {
        self.loops
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let depth = self
                    .loops
                    .iter()
                    .enumerate()
                    .filter(|&(j, o)| j != i && ray_crossings(l[0], o) % 2 == 1)
                    .count();
                let a = loop_area(l).abs();
                if depth % 2 == 0 {
                    a
                } else {
                    -a
                }
            })
            .sum::<f64>()
            .max(0.0)
    }
}

pub fn point_in_profile(pt: Point2, profile: &Profile) -> bool {
    profile.contains(pt, profile.default_tolerance())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtrusionBody {
    pub profile: Profile,
    pub origin: Vec3,
    pub theta: f64,
    pub gamma: f64,
    pub scale: f64,
    pub e1: f64,
    pub e2: f64,
    pub op: BooleanOp,
    pub mode: ExtentMode,
}

impl ExtrusionBody {
    pub fn frame(&self) -> Frame {
        Frame::from_angles(self.theta, self.gamma)
    }

    /// Signed interval along the sketch normal.
    pub fn extent(&self) -> (f64, f64) {
        let (a, b) = match self.mode {
            ExtentMode::OneSided => (0.0, self.e1),
            ExtentMode::Symmetric => (-self.e1 / 2.0, self.e1 / 2.0),
            ExtentMode::TwoSided => (-self.e2, self.e1),
        };
        (a.min(b), a.max(b))
    }

    pub fn to_world(&self, uv: Point2, w: f64) -> Vec3 {
        let f = self.frame();
        self.origin + f.x_axis * (self.scale * uv.x) + f.y_axis * (self.scale * uv.y) + f.normal * w
    }

    pub fn to_local(&self, p: Vec3) -> (Point2, f64) {
        let f = self.frame();
        let d = p - self.origin;
        (Point2::new(d.dot(f.x_axis) / self.scale, d.dot(f.y_axis) / self.scale), d.dot(f.normal))
    }

    pub fn contains(&self, p: Vec3, tol: f64) -> bool {
        let (uv, w) = self.to_local(p);
        let (lo, hi) = self.extent();
        w >= lo - tol && w <= hi + tol && self.profile.contains(uv, tol / self.scale)
    }

    pub fn bbox(&self) -> (Vec3, Vec3) {
        let (plo, phi) = self.profile.bbox();
        let (lo, hi) = self.extent();
        let mut bmin = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut bmax = -bmin;
        for u in [plo.x, phi.x] {
            for v in [plo.y, phi.y] {
                for w in [lo, hi] {
                    let c = self.to_world(Point2::new(u, v), w);
                    bmin = Vec3::new(bmin.x.min(c.x), bmin.y.min(c.y), bmin.z.min(c.z));
                    bmax = Vec3::new(bmax.x.max(c.x), bmax.y.max(c.y), bmax.z.max(c.z));
                }
            }
        }
        (bmin, bmax)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solid {
    pub bodies: Vec<ExtrusionBody>,
}

impl Solid {
    pub fn bbox(&self) -> (Vec3, Vec3) {
        let mut bmin = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut bmax = -bmin;
        for b in &self.bodies {
            let (lo, hi) = b.bbox();
            bmin = Vec3::new(bmin.x.min(lo.x), bmin.y.min(lo.y), bmin.z.min(lo.z));
            bmax = Vec3::new(bmax.x.max(hi.x), bmax.y.max(hi.y), bmax.z.max(hi.z));
        }
        (bmin, bmax)
    }

    /// Offset across the surface used to classify sampled points.
    pub fn on_tolerance(&self) -> f64 {
        let (lo, hi) = self.bbox();
        ON_TOLERANCE * (hi - lo).norm()
    }

    /// Slack for inside/outside tests of points near the surface.
    pub fn membership_tolerance(&self) -> f64 {
        0.25 * self.on_tolerance()
    }

    pub fn contains_tol(&self, p: Vec3, tol: f64) -> bool {
        let mut inside = false;
        for (i, b) in self.bodies.iter().enumerate() {
            let m = b.contains(p, tol);
            inside = if i == 0 {
                m
            } else {
                match b.op {
                    BooleanOp::NewBody | BooleanOp::Join => inside || m,
                    BooleanOp::Cut => inside && !m,
                    BooleanOp::Intersect => inside && m,
                }
            };
        }
        inside
    }
}

pub fn point_in_solid(pt: Vec3, solid: &Solid) -> bool {
    solid.contains_tol(pt, solid.membership_tolerance())
}

#[derive(Debug, Clone, PartialEq)]
pub enum InvalidityReason {
    Grammar(Vec<Violation>),
    Degenerate(String),
}

impl InvalidityReason {
    pub fn codes(&self) -> Vec<&'static str> {
        match self {
            InvalidityReason::Grammar(v) => v.iter().map(Violation::code).collect(),
            InvalidityReason::Degenerate(_) => vec!["degenerate-body"],
        }
    }
}

impl fmt::Display for InvalidityReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InvalidityReason::Grammar(v) => {
                let s: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "{}", s.join("; "))
            }
            InvalidityReason::Degenerate(m) => write!(f, "degenerate-body: {m}"),
        }
    }
}

fn flatten_arc(start: Point2, end: Point2, sweep: f64, ccw: bool, out: &mut Vec<Point2>) {
    let chord = start.dist(end);
    if sweep.abs() < 1e-9 || chord == 0.0 {
        return;
    }
    let r = chord / (2.0 * (sweep / 2.0).sin());
    let mid = Point2::new((start.x + end.x) / 2.0, (start.y + end.y) / 2.0);
    let (tx, ty) = ((end.x - start.x) / chord, (end.y - start.y) / chord);
    let side = if ccw { 1.0 } else { -1.0 };
    let h = side * r * (sweep / 2.0).cos();
    let center = Point2::new(mid.x - ty * h, mid.y + tx * h);
    let a0 = (start.y - center.y).atan2(start.x - center.x);
    let tol = CHORD_TOLERANCE * 2.0 * r.abs() * std::f64::consts::SQRT_2;
    let step = 2.0 * (1.0 - tol / r.abs()).clamp(-1.0, 1.0).acos();
    let n = ((sweep / step).ceil() as usize).clamp(2, 4096);
    for k in 1..n {
        let a = a0 + side * sweep * k as f64 / n as f64;
        out.push(Point2::new(center.x + r.abs() * a.cos(), center.y + r.abs() * a.sin()));
    }
}

fn flatten_circle(c: Point2, r: f64) -> Vec<Point2> {
    let tol = CHORD_TOLERANCE * 2.0 * r * std::f64::consts::SQRT_2;
    let step = 2.0 * (1.0 - tol / r).clamp(-1.0, 1.0).acos();
    let n = ((2.0 * std::f64::consts::PI / step).ceil() as usize).clamp(8, 4096);
    (0..n)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            Point2::new(c.x + r * a.cos(), c.y + r * a.sin())
        })
        .collect()
}

fn val(c: &CadCommand, slot: usize) -> f64 {
    c.value(slot).expect("validated slot")
}

fn loop_polyline(curves: &[CadCommand]) -> Vec<Point2> {
    if curves[0].kind == CadKind::Circle {
        let c = &curves[0];
        return flatten_circle(Point2::new(val(c, SLOT_X), val(c, SLOT_Y)), val(c, SLOT_R));
    }
    let end = |c: &CadCommand| Point2::new(val(c, SLOT_X), val(c, SLOT_Y));
    let mut out = Vec::new();
    let mut prev = end(&curves[curves.len() - 1]);
    for c in curves {
        let e = end(c);
        out.push(prev);
        if c.kind == CadKind::Arc {
            // Sweep in [0, 2π): α + π.
            let sweep = val(c, SLOT_ALPHA) + std::f64::consts::PI;
            flatten_arc(prev, e, sweep, c.params.0[SLOT_FLAG] == 1, &mut out);
        }
        prev = e;
    }
    out.dedup_by(|a, b| a.dist(*b) == 0.0);
    out
}

/// Validates, dequantizes and assembles the extrusion bodies of a sequence.
pub fn reconstruct(seq: &CadSequence) -> std::result::Result<Solid, InvalidityReason> {
    let violations = validate_cad_sequence(seq);
    if !violations.is_empty() {
        return Err(InvalidityReason::Grammar(violations));
    }
    let mut bodies = Vec::new();
    let mut loops: Vec<Vec<Point2>> = Vec::new();
    let mut current: Vec<CadCommand> = Vec::new();
    for c in seq.content() {
        match c.kind {
            CadKind::Sol => {
                if !current.is_empty() {
                    loops.push(loop_polyline(&current));
                    current.clear();
                }
            }
            k if k.is_curve() => current.push(*c),
            CadKind::Extrude => {
                if !current.is_empty() {
                    loops.push(loop_polyline(&current));
                    current.clear();
                }
                let profile = Profile::new(std::mem::take(&mut loops));
                let body = ExtrusionBody {
                    profile,
                    origin: Vec3::new(val(c, SLOT_PX), val(c, SLOT_PY), val(c, SLOT_PS)),
                    theta: val(c, SLOT_THETA),
                    gamma: val(c, SLOT_GAMMA),
                    scale: val(c, SLOT_S),
                    e1: val(c, SLOT_E1),
                    e2: val(c, SLOT_E2),
                    op: BooleanOp::from_bin(c.params.0[SLOT_BOOL]).expect("validated"),
                    mode: ExtentMode::from_bin(c.params.0[SLOT_MODE]).expect("validated"),
                };
                if body.scale <= 0.0 {
                    return Err(InvalidityReason::Degenerate("zero sketch scale".into()));
                }
                let (lo, hi) = body.extent();
                if hi - lo <= 0.0 {
                    return Err(InvalidityReason::Degenerate("zero extrusion extent".into()));
                }
                if body.profile.area() <= 0.0 {
                    return Err(InvalidityReason::Degenerate("zero profile area".into()));
                }
                bodies.push(body);
            }
            _ => {}
        }
    }
    Ok(Solid { bodies })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// One `x y z` triple per line.
    pub fn to_text(&self) -> String {
        self.points.iter().map(|p| format!("{} {} {}\n", p.x, p.y, p.z)).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() }))
                .collect::<Result<_>>()?;
            if v.len() != 3 {
                return Err(Error::Parse { line: i + 1, msg: format!("expected 3 values, got {}", v.len()) });
            }
            points.push(Vec3::new(v[0], v[1], v[2]));
        }
        Ok(PointCloud { points })
    }

    /// Translates to the center of `reference`'s bounding box and divides by its
    /// largest side, so `reference` fits the unit cube.
    pub fn normalized_by(&self, reference: &PointCloud) -> PointCloud {
        let (lo, hi) = bounds(&reference.points);
        let center = (lo + hi) * 0.5;
        let d = hi - lo;
        let side = d.x.max(d.y).max(d.z);
        let s = if side > 0.0 { 1.0 / side } else { 1.0 };
        PointCloud { points: self.points.iter().map(|&p| (p - center) * s).collect() }
    }
}

fn bounds(pts: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let mut hi = -lo;
    for p in pts {
        lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
        hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
    }
    (lo, hi)
}

enum Patch<'a> {
    Wall { body: &'a ExtrusionBody, a: Point2, b: Point2, lo: f64, hi: f64, normal: Vec3 },
    Cap { body: &'a ExtrusionBody, w: f64, normal: Vec3 },
}

fn surface_patches(solid: &Solid) -> (Vec<Patch<'_>>, Vec<f64>) {
    let mut patches = Vec::new();
    let mut areas = Vec::new();
    for body in &solid.bodies {
        let f = body.frame();
        let (lo, hi) = body.extent();
        for l in &body.profile.loops {
            for i in 0..l.len() {
                let (a, b) = (l[i], l[(i + 1) % l.len()]);
                let len = a.dist(b);
                if len == 0.0 {
                    continue;
                }
                let (nx, ny) = ((b.y - a.y) / len, -(b.x - a.x) / len);
                patches.push(Patch::Wall { body, a, b, lo, hi, normal: f.x_axis * nx + f.y_axis * ny });
                areas.push(body.scale * len * (hi - lo));
            }
        }
        let cap_area = body.profile.area() * body.scale * body.scale;
        for (w, n) in [(lo, -f.normal), (hi, f.normal)] {
            patches.push(Patch::Cap { body, w, normal: n });
            areas.push(cap_area);
        }
    }
    (patches, areas)
}

fn sample_patch(p: &Patch<'_>, rng: &mut ChaCha8Rng) -> Option<(Vec3, Vec3)> {
    match *p {
        Patch::Wall { body, a, b, lo, hi, normal } => {
            let t: f64 = rng.gen();
            let h: f64 = rng.gen();
            let uv = Point2::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t);
            Some((body.to_world(uv, lo + (hi - lo) * h), normal))
        }
        Patch::Cap { body, w, normal } => {
            let (plo, phi) = body.profile.bbox();
            for _ in 0..64 {
                let uv = Point2::new(rng.gen_range(plo.x..=phi.x), rng.gen_range(plo.y..=phi.y));
                if body.profile.contains(uv, 0.0) {
                    return Some((body.to_world(uv, w), normal));
                }
            }
            None
        }
    }
}

/// `k` points on the boundary of the composed solid, deterministic in `seed`.
pub fn sample_shape(solid: &Solid, k: usize, seed: u64) -> Result<PointCloud> {
    if k == 0 {
        return Err(Error::Contract("sample count must be positive".into()));
    }
    let (patches, areas) = surface_patches(solid);
    let total: f64 = areas.iter().sum();
    if patches.is_empty() || total <= 0.0 {
        return Err(Error::Sampling("solid has no surface area".into()));
    }
    let cumulative: Vec<f64> = areas
        .iter()
        .scan(0.0, |acc, a| {
            *acc += a;
            Some(*acc)
        })
        .collect();
    let tau = solid.on_tolerance();
    let mtol = solid.membership_tolerance();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(k);
    let budget = 200 * k + 10_000;
    for _ in 0..budget {
        if points.len() == k {
            break;
        }
        let r = rng.gen::<f64>() * total;
        let idx = cumulative.partition_point(|&c| c <= r).min(patches.len() - 1);
        let Some((p, n)) = sample_patch(&patches[idx], &mut rng) else { continue };
        if solid.contains_tol(p + n * tau, mtol) != solid.contains_tol(p - n * tau, mtol) {
            points.push(p);
        }
    }
    if points.is_empty() {
        return Err(Error::Sampling("boundary-empty: composition leaves no surface".into()));
    }
    if points.len() < k {
        return Err(Error::Sampling(format!("only {} of {k} surface points found", points.len())));
    }
    Ok(PointCloud { points })
}
