//! Synthetic paired data: random sketch-and-extrude models and their four
//! projected views.
//!
//! Every parameter is drawn directly as a quantization bin, so the ground-truth
//! sequence is exactly representable. Wireframes are projected without hidden
//! line removal.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_6;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cad::{
    CadCommand, CadKind, CadSequence, BooleanOp, ExtentMode, DEFAULT_SEQ_LEN, SLOT_E1, SLOT_E2, SLOT_GAMMA,
    SLOT_MODE, SLOT_PS, SLOT_PX, SLOT_PY, SLOT_R, SLOT_S, SLOT_THETA, SLOT_X, SLOT_Y,
};
use crate::error::{contract, Error, Result};
use crate::geom::{reconstruct, sample_shape, Frame, Vec3};
use crate::ingest::{normalize_viewbox, snap_to_bins, tokens_from_segments, Point2, Segment, ViewBox};
use crate::record::Record;
use crate::seed::derive_seed;
use crate::svg::{DrawingSequence, ViewLabel};

/// Sketch plane, named by the two world axes it spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Plane {
    Xy,
    Xz,
    Yz,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::Xy, Plane::Xz, Plane::Yz];

    /// `(theta, gamma)` bins giving this plane's frame.
    pub fn angle_bins(self) -> (u16, u16) {
        // Periodic bins: 128 is 0, 192 is π/2.
        match self {
            Plane::Xy => (128, 128),
            Plane::Yz => (192, 128),
            Plane::Xz => (192, 192),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Plane::Xy => "xy",
            Plane::Xz => "xz",
            Plane::Yz => "yz",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Plane::ALL.into_iter().find(|p| p.name().eq_ignore_ascii_case(s.trim()))
    }
}

/// Generator vocabulary and size ranges (all in bins).
#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub min_extrusions: usize,
    pub max_extrusions: usize,
    pub rectangles: bool,
    pub circles: bool,
    pub planes: Vec<Plane>,
    /// Operations allowed for extrusions after the first.
    pub later_ops: Vec<BooleanOp>,
    /// Smallest rectangle side / circle diameter in sketch bins.
    pub min_feature: u16,
    pub cad_len: usize,
}

impl Default for GenSpec {
    fn default() -> Self {
        GenSpec {
            min_extrusions: 1,
            max_extrusions: 2,
            rectangles: true,
            circles: true,
            planes: Plane::ALL.to_vec(),
            later_ops: vec![BooleanOp::Join, BooleanOp::Cut],
            min_feature: 48,
            cad_len: DEFAULT_SEQ_LEN,
        }
    }
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.min_extrusions >= 1
            && self.min_extrusions <= self.max_extrusions
            && self.max_extrusions <= 2
            && (self.rectangles || self.circles)
            && !self.planes.is_empty()
            && (self.max_extrusions == 1 || !self.later_ops.is_empty())
            && self.later_ops.iter().all(|o| matches!(o, BooleanOp::Join | BooleanOp::Cut))
            && (8..=200).contains(&self.min_feature)
            && self.cad_len > 2 * 7;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid generator spec {self:?}")))
        }
    }

    /// Parses `key = value` lines; unknown keys are errors.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut spec = GenSpec::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, msg: "expected key = value".into() })?;
            let (k, v) = (k.trim(), v.trim());
            let bad = || Error::Parse { line: i + 1, msg: format!("bad value '{v}' for {k}") };
            let flag = |v: &str| match v {
                "true" | "on" | "1" => Ok(true),
                "false" | "off" | "0" => Ok(false),
                _ => Err(bad()),
            };
            match k {
                "min_extrusions" => spec.min_extrusions = v.parse().map_err(|_| bad())?,
                "max_extrusions" => spec.max_extrusions = v.parse().map_err(|_| bad())?,
                "rectangles" => spec.rectangles = flag(v)?,
                "circles" => spec.circles = flag(v)?,
                "min_feature" => spec.min_feature = v.parse().map_err(|_| bad())?,
                "cad_len" => spec.cad_len = v.parse().map_err(|_| bad())?,
                "planes" => {
                    spec.planes = v.split(',').map(|p| Plane::from_name(p).ok_or_else(bad)).collect::<Result<_>>()?
                }
                "later_ops" => {
                    spec.later_ops = v
                        .split(',')
                        .map(|p| match p.trim() {
                            "join" => Ok(BooleanOp::Join),
                            "cut" => Ok(BooleanOp::Cut),
                            _ => Err(bad()),
                        })
                        .collect::<Result<_>>()?
                }
                _ => return Err(Error::Parse { line: i + 1, msg: format!("unknown key '{k}'") }),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn one_extrusion(spec: &GenSpec, rng: &mut ChaCha8Rng, op: BooleanOp, out: &mut Vec<CadCommand>) {
    let lo = 32u16;
    let hi = 223u16;
    let feature = spec.min_feature;
    let use_circle = match (spec.rectangles, spec.circles) {
        (true, true) => rng.gen_bool(0.5),
        (r, _) => !r,
    };
    out.push(CadCommand::SOL);
    if use_circle {
        // A radius step (1/255) is half a coordinate step (2/255), so a radius
        // of `r` bins gives a diameter of `r` coordinate bins.
        let r = rng.gen_range(feature..=hi - lo - 4);
        let cx = rng.gen_range(lo + r / 2 + 1..=hi - r / 2 - 1);
        let cy = rng.gen_range(lo + r / 2 + 1..=hi - r / 2 - 1);
        out.push(CadCommand::circle(cx, cy, r));
    } else {
        let w = rng.gen_range(feature..=hi - lo);
        let h = rng.gen_range(feature..=hi - lo);
        let x0 = rng.gen_range(lo..=hi - w);
        let y0 = rng.gen_range(lo..=hi - h);
        let (x1, y1) = (x0 + w, y0 + h);
        for (x, y) in [(x1, y0), (x1, y1), (x0, y1), (x0, y0)] {
            out.push(CadCommand::line(x, y));
        }
    }
    let plane = *spec.planes.choose(rng).expect("nonempty planes");
    let (theta, gamma) = plane.angle_bins();
    let px = rng.gen_range(112..=144);
    let py = rng.gen_range(112..=144);
    let ps = rng.gen_range(112..=144);
    let s = rng.gen_range(56..=72);
    let e1 = rng.gen_range(160..=224);
    let mode = if rng.gen_bool(0.5) { ExtentMode::OneSided } else { ExtentMode::Symmetric };
    out.push(CadCommand::extrude([theta, gamma, px, py, ps, s, e1, 128, op as u16, mode as u16]));
}

/// Random valid sequence; deterministic in `(spec, seed)`.
pub fn random_cad_sequence(spec: &GenSpec, seed: u64) -> Result<CadSequence> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(spec.min_extrusions..=spec.max_extrusions);
    let mut cmds = Vec::new();
    for i in 0..n {
        let op = if i == 0 { BooleanOp::NewBody } else { *spec.later_ops.choose(&mut rng).expect("nonempty") };
        one_extrusion(spec, &mut rng, op, &mut cmds);
    }
    CadSequence::from_content(&cmds, spec.cad_len)
}

/// A wireframe edge in world space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Edge3 {
    Segment(Vec3, Vec3),
    /// Circle `center + radius·(cos t·u + sin t·v)`.
    Circle { center: Vec3, radius: f64, u: Vec3, v: Vec3 },
}

/// One extruded primitive, kept analytic for drawing.
#[derive(Debug, Clone, PartialEq)]
struct Primitive {
    origin: Vec3,
    frame: Frame,
    scale: f64,
    lo: f64,
    hi: f64,
    shape: Shape,
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Polygon(Vec<Point2>),
    Circle(Point2, f64),
}

impl Primitive {
    fn at(&self, p: Point2, w: f64) -> Vec3 {
        self.origin + self.frame.x_axis * (self.scale * p.x) + self.frame.y_axis * (self.scale * p.y) + self.frame.normal * w
    }
}

fn val(c: &CadCommand, slot: usize) -> f64 {
    c.value(slot).expect("used slot")
}

fn primitives(seq: &CadSequence) -> Result<Vec<Primitive>> {
    reconstruct(seq).map_err(|e| Error::Geometry(format!("sequence does not reconstruct: {e}")))?;
    let mut out = Vec::new();
    let mut shape: Option<Shape> = None;
    let mut poly: Vec<Point2> = Vec::new();
    for c in seq.content() {
        match c.kind {
            CadKind::Sol => {}
            CadKind::Line => poly.push(Point2::new(val(c, SLOT_X), val(c, SLOT_Y))),
            CadKind::Circle => shape = Some(Shape::Circle(Point2::new(val(c, SLOT_X), val(c, SLOT_Y)), val(c, SLOT_R))),
            CadKind::Arc => return Err(Error::Geometry("arcs are outside the generator vocabulary".into())),
            CadKind::Extrude => {
                let shape = match shape.take() {
                    Some(s) if poly.is_empty() => s,
                    None if poly.len() >= 3 => Shape::Polygon(std::mem::take(&mut poly)),
                    _ => return Err(Error::Geometry("only single-loop profiles are drawn".into())),
                };
                let e1 = val(c, SLOT_E1);
                let (lo, hi) = match ExtentMode::from_bin(c.params.0[SLOT_MODE]).expect("validated") {
                    ExtentMode::OneSided => (0.0, e1),
                    ExtentMode::Symmetric => (-e1 / 2.0, e1 / 2.0),
                    ExtentMode::TwoSided => (-val(c, SLOT_E2), e1),
                };
                out.push(Primitive {
                    origin: Vec3::new(val(c, SLOT_PX), val(c, SLOT_PY), val(c, SLOT_PS)),
                    frame: Frame::from_angles(val(c, SLOT_THETA), val(c, SLOT_GAMMA)),
                    scale: val(c, SLOT_S),
                    lo: lo.min(hi),
                    hi: lo.max(hi),
                    shape,
                });
            }
            CadKind::Eos => break,
        }
    }
    Ok(out)
}

/// Profile edges at both end planes plus lateral edges at polygon vertices.
/// Cylinder silhouettes depend on the view and are added during projection.
pub fn wireframe_edges(seq: &CadSequence) -> Result<Vec<Edge3>> {
    Ok(primitives(seq)?.iter().flat_map(primitive_edges).collect())
}

fn primitive_edges(p: &Primitive) -> Vec<Edge3> {
    let mut out = Vec::new();
    match &p.shape {
        Shape::Polygon(pts) => {
            for w in [p.lo, p.hi] {
                for i in 0..pts.len() {
                    out.push(Edge3::Segment(p.at(pts[i], w), p.at(pts[(i + 1) % pts.len()], w)));
                }
            }
            for &v in pts {
                out.push(Edge3::Segment(p.at(v, p.lo), p.at(v, p.hi)));
            }
        }
        Shape::Circle(c, r) => {
            for w in [p.lo, p.hi] {
                out.push(Edge3::Circle {
                    center: p.at(*c, w),
                    radius: p.scale * r,
                    u: p.frame.x_axis,
                    v: p.frame.y_axis,
                });
            }
        }
    }
    out
}

/// A 2D linear projection with its viewing direction.
#[derive(Debug, Clone, Copy)]
struct Projection {
    row_u: Vec3,
    row_v: Vec3,
    direction: Vec3,
}

impl Projection {
    fn for_view(view: ViewLabel) -> Self {
        let (c, s) = (FRAC_PI_6.cos(), FRAC_PI_6.sin());
        match view {
            ViewLabel::Front => Projection { row_u: Vec3::new(1.0, 0.0, 0.0), row_v: Vec3::new(0.0, 0.0, 1.0), direction: Vec3::new(0.0, 1.0, 0.0) },
            ViewLabel::Top => Projection { row_u: Vec3::new(1.0, 0.0, 0.0), row_v: Vec3::new(0.0, 1.0, 0.0), direction: Vec3::new(0.0, 0.0, 1.0) },
            ViewLabel::Right => Projection { row_u: Vec3::new(0.0, 1.0, 0.0), row_v: Vec3::new(0.0, 0.0, 1.0), direction: Vec3::new(1.0, 0.0, 0.0) },
            ViewLabel::Isometric => Projection { row_u: Vec3::new(c, -c, 0.0), row_v: Vec3::new(s, s, -1.0), direction: Vec3::new(1.0, 1.0, 1.0) },
        }
    }

    fn point(&self, p: Vec3) -> Point2 {
        Point2::new(self.row_u.dot(p), self.row_v.dot(p))
    }

    fn vector(&self, v: Vec3) -> Point2 {
        self.point(v)
    }
}

/// Projected edge: a segment or an ellipse given by conjugate semi-diameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Edge2 {
    Segment(Point2, Point2),
    Ellipse { center: Point2, a: Point2, b: Point2 },
}

fn project_edges(edges: &[Edge3], proj: &Projection) -> Vec<Edge2> {
    edges
        .iter()
        .map(|e| match *e {
            Edge3::Segment(a, b) => Edge2::Segment(proj.point(a), proj.point(b)),
            Edge3::Circle { center, radius, u, v } => {
                let c = proj.point(center);
                let a = proj.vector(u * radius);
                let b = proj.vector(v * radius);
                let area = (a.x * b.y - a.y * b.x).abs();
                let scale = a.norm().max(b.norm());
                if area <= 1e-9 * scale * scale {
                    // Edge-on circle: a segment across the full projected width.
                    let dir = if a.norm() >= b.norm() { a } else { b };
                    let dir = Point2::new(dir.x / dir.norm(), dir.y / dir.norm());
                    let half = (a.x * dir.x + a.y * dir.y).hypot(b.x * dir.x + b.y * dir.y);
                    Edge2::Segment(
                        Point2::new(c.x - half * dir.x, c.y - half * dir.y),
                        Point2::new(c.x + half * dir.x, c.y + half * dir.y),
                    )
                } else {
                    Edge2::Ellipse { center: c, a, b }
                }
            }
        })
        .collect()
}

/// Orthographic projection: Front keeps (x, z), Top (x, y), Right (y, z).
pub fn project_orthographic(edges: &[Edge3], view: ViewLabel) -> Result<Vec<Edge2>> {
    if view == ViewLabel::Isometric {
        return Err(contract("isometric is not an orthographic view"));
    }
    Ok(project_edges(edges, &Projection::for_view(view)))
}

/// Isometric projection `u = (x - y)·cos 30°, v = (x + y)·sin 30° - z`.
pub fn project_isometric(edges: &[Edge3]) -> Vec<Edge2> {
    project_edges(edges, &Projection::for_view(ViewLabel::Isometric))
}

/// Quarter-arc cubic handle length for circles.
pub const KAPPA: f64 = 0.552_284_749_830_793_4;

/// Four cubics tracing `center + cos t·a + sin t·b`.
pub fn conjugate_ellipse_to_beziers(center: Point2, a: Point2, b: Point2) -> [Segment; 4] {
    let at = |ca: f64, cb: f64| Point2::new(center.x + ca * a.x + cb * b.x, center.y + ca * a.y + cb * b.y);
    let quads = [(1.0, 0.0, 0.0, 1.0), (0.0, 1.0, -1.0, 0.0), (-1.0, 0.0, 0.0, -1.0), (0.0, -1.0, 1.0, 0.0)];
    quads.map(|(sa, sb, ea, eb)| Segment::Cubic {
        start: at(sa, sb),
        c1: at(sa + KAPPA * ea, sb + KAPPA * eb),
        c2: at(ea + KAPPA * sa, eb + KAPPA * sb),
        end: at(ea, eb),
    })
}

/// Four-cubic approximation of an ellipse with semi-axes `(rx, ry)` rotated by
/// `rotation` radians.
pub fn ellipse_to_beziers(center: Point2, semi_axes: (f64, f64), rotation: f64) -> Result<[Segment; 4]> {
    let (rx, ry) = semi_axes;
    if !(rx > 0.0 && ry > 0.0) {
        return Err(contract(format!("ellipse semi-axes must be positive, got ({rx}, {ry})")));
    }
    let (s, c) = rotation.sin_cos();
    Ok(conjugate_ellipse_to_beziers(center, Point2::new(rx * c, rx * s), Point2::new(-ry * s, ry * c)))
}

fn cylinder_silhouettes(p: &Primitive, direction: Vec3) -> Vec<Edge3> {
    let Shape::Circle(c, r) = &p.shape else { return Vec::new() };
    let n = p.frame.normal;
    let m = Vec3::new(n.y * direction.z - n.z * direction.y, n.z * direction.x - n.x * direction.z, n.x * direction.y - n.y * direction.x);
    let len = m.norm();
    if len < 1e-9 * direction.norm() {
        return Vec::new();
    }
    let m = m * (1.0 / len);
    let radius = p.scale * r;
    [1.0, -1.0]
        .into_iter()
        .map(|side| {
            let base = p.at(*c, 0.0) + m * (side * radius);
            Edge3::Segment(base + n * p.lo, base + n * p.hi)
        })
        .collect()
}

fn edge2_segments(edges: &[Edge2]) -> Vec<Segment> {
    let mut out = Vec::new();
    for e in edges {
        match *e {
            Edge2::Segment(a, b) => out.push(Segment::Line { start: a, end: b }),
            Edge2::Ellipse { center, a, b } => out.extend(conjugate_ellipse_to_beziers(center, a, b)),
        }
    }
    out
}

fn bounds(segs: &[Segment]) -> (Point2, Point2) {
    let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
    let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in segs.iter().flat_map(Segment::points) {
        lo = Point2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    (lo, hi)
}

/// Margin around the drawing, as a fraction of its largest extent.
const MARGIN: f64 = 0.1;

fn square_box(center: Point2, side: f64) -> ViewBox {
    let side = side * (1.0 + 2.0 * MARGIN);
    ViewBox::new(center.x - side / 2.0, center.y - side / 2.0, side, side)
}

fn same_points(a: &Segment, b: &Segment) -> bool {
    a.points() == b.points() || a.points() == b.reversed().points()
}

fn to_drawing(segs: &[Segment], vb: ViewBox, view: ViewLabel) -> Result<DrawingSequence> {
    let snapped = snap_to_bins(&normalize_viewbox(segs, vb)?)?;
    let mut unique: Vec<Segment> = Vec::with_capacity(snapped.len());
    for s in snapped {
        if !unique.iter().any(|u| same_points(u, &s)) {
            unique.push(s);
        }
    }
    tokens_from_segments(&unique, view)
}

/// Projected 2D segments (before normalization) of every view.
pub fn view_segments(seq: &CadSequence) -> Result<BTreeMap<ViewLabel, Vec<Segment>>> {
    let prims = primitives(seq)?;
    let mut out = BTreeMap::new();
    for view in ViewLabel::ALL {
        let proj = Projection::for_view(view);
        let mut edges: Vec<Edge3> = prims.iter().flat_map(primitive_edges).collect();
        for p in &prims {
            edges.extend(cylinder_silhouettes(p, proj.direction));
        }
        out.insert(view, edge2_segments(&project_edges(&edges, &proj)));
    }
    Ok(out)
}

/// The four views of a sequence. The orthographic views share one scale so
/// their extents agree; the isometric view is framed on its own.
pub fn render_views(seq: &CadSequence) -> Result<BTreeMap<ViewLabel, DrawingSequence>> {
    let segs = view_segments(seq)?;
    let ortho_side = [ViewLabel::Front, ViewLabel::Top, ViewLabel::Right]
        .iter()
        .map(|v| {
            let (lo, hi) = bounds(&segs[v]);
            (hi.x - lo.x).max(hi.y - lo.y)
        })
        .fold(0.0, f64::max);
    let mut out = BTreeMap::new();
    for (view, s) in &segs {
        let (lo, hi) = bounds(s);
        let center = Point2::new((lo.x + hi.x) / 2.0, (lo.y + hi.y) / 2.0);
        let side = if *view == ViewLabel::Isometric { (hi.x - lo.x).max(hi.y - lo.y) } else { ortho_side };
        out.insert(*view, to_drawing(s, square_box(center, side), *view)?);
    }
    Ok(out)
}

/// Viewbox used by [`render_views`] for `view`, for standalone SVG export.
pub fn view_box(seq: &CadSequence, view: ViewLabel) -> Result<ViewBox> {
    let segs = view_segments(seq)?;
    let side_of = |v: &ViewLabel| {
        let (lo, hi) = bounds(&segs[v]);
        (hi.x - lo.x).max(hi.y - lo.y)
    };
    let side = if view == ViewLabel::Isometric {
        side_of(&view)
    } else {
        [ViewLabel::Front, ViewLabel::Top, ViewLabel::Right].iter().map(side_of).fold(0.0, f64::max)
    };
    let (lo, hi) = bounds(&segs[&view]);
    Ok(square_box(Point2::new((lo.x + hi.x) / 2.0, (lo.y + hi.y) / 2.0), side))
}

/// One paired record. Draws are retried (with derived seeds) until the solid
/// has a samplable surface and every view fits the token budget.
pub fn generate_record(spec: &GenSpec, seed: u64, id: String) -> Result<Record> {
    for attempt in 0..64u64 {
        let s = derive_seed(seed, &[attempt]);
        let seq = random_cad_sequence(spec, s)?;
        let Ok(solid) = reconstruct(&seq) else { continue };
        if sample_shape(&solid, 64, s).is_err() {
            continue;
        }
        match render_views(&seq) {
            Ok(views) => return Ok(Record { id, views, cad: seq }),
            Err(Error::LengthExceeded { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Geometry(format!("no usable sample for seed {seed} after 64 draws")))
}

/// `count` records with ids `s{index}` and per-record derived seeds.
pub fn generate_dataset(spec: &GenSpec, count: usize, seed: u64) -> Result<Vec<Record>> {
    use rayon::prelude::*;
    (0..count)
        .into_par_iter()
        .map(|i| generate_record(spec, derive_seed(seed, &[i as u64]), format!("s{i}")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cad::validate_cad_sequence;
    use crate::svg::{SvgKind, UNUSED};

    fn cube() -> CadSequence {
        CadSequence::from_content(
            &[
                CadCommand::SOL,
                CadCommand::line(192, 64),
                CadCommand::line(192, 192),
                CadCommand::line(64, 192),
                CadCommand::line(64, 64),
                CadCommand::extrude([128, 128, 128, 128, 128, 128, 191, 128, 0, 1]),
            ],
            DEFAULT_SEQ_LEN,
        )
        .unwrap()
    }

    fn cylinder() -> CadSequence {
        CadSequence::from_content(
            &[CadCommand::SOL, CadCommand::circle(128, 128, 100), CadCommand::extrude([128, 128, 128, 128, 128, 128, 191, 128, 0, 0])],
            DEFAULT_SEQ_LEN,
        )
        .unwrap()
    }

    #[test]
    fn deterministic_and_valid() {
        let spec = GenSpec::default();
        assert_eq!(random_cad_sequence(&spec, 9).unwrap(), random_cad_sequence(&spec, 9).unwrap());
        for seed in 0..10_000 {
            let seq = random_cad_sequence(&spec, seed).unwrap();
            assert!(validate_cad_sequence(&seq).is_empty(), "seed {seed}: {:?}", validate_cad_sequence(&seq));
        }
    }

    #[test]
    fn rectangle_grammar() {
        let spec = GenSpec { max_extrusions: 1, circles: false, ..GenSpec::default() };
        let seq = random_cad_sequence(&spec, 4).unwrap();
        let kinds: Vec<CadKind> = seq.content().iter().map(|c| c.kind).collect();
        assert_eq!(kinds, [CadKind::Sol, CadKind::Line, CadKind::Line, CadKind::Line, CadKind::Line, CadKind::Extrude]);
        assert!(seq.commands()[6..].iter().all(|c| *c == CadCommand::EOS));
    }

    #[test]
    fn wireframe_counts() {
        let edges = wireframe_edges(&cube()).unwrap();
        assert_eq!(edges.len(), 12);
        assert!(edges.iter().all(|e| matches!(e, Edge3::Segment(..))));
        let edges = wireframe_edges(&cylinder()).unwrap();
        assert_eq!(edges.len(), 2);
        assert!(edges.iter().all(|e| matches!(e, Edge3::Circle { .. })));
        let mut two = cube().content().to_vec();
        two.extend(cube().content().iter().map(|c| {
            let mut c = *c;
            if c.kind == CadKind::Extrude {
                c.params.0[SLOT_PX] = 250;
                c.params.0[crate::cad::SLOT_BOOL] = BooleanOp::Join as u16;
            }
            c
        }));
        let two = CadSequence::from_content(&two, DEFAULT_SEQ_LEN).unwrap();
        assert_eq!(wireframe_edges(&two).unwrap().len(), 24);
    }

    #[test]
    fn isometric_axes() {
        let proj = Projection::for_view(ViewLabel::Isometric);
        let p = proj.point(Vec3::new(1.0, 0.0, 0.0));
        assert!((p.x - 0.8660254).abs() < 1e-6 && (p.y - 0.5).abs() < 1e-12);
        let p = proj.point(Vec3::new(0.0, 0.0, 1.0));
        assert_eq!((p.x, p.y), (0.0, -1.0));
        let p = proj.point(Vec3::new(0.0, 1.0, 0.0));
        assert!((p.x + 0.8660254).abs() < 1e-6 && (p.y - 0.5).abs() < 1e-12);
    }

    #[test]
    fn orthographic_axes() {
        let e = [Edge3::Segment(Vec3::new(1.0, 2.0, 3.0), Vec3::new(0.0, 0.0, 0.0))];
        let front = project_orthographic(&e, ViewLabel::Front).unwrap();
        assert_eq!(front[0], Edge2::Segment(Point2::new(1.0, 3.0), Point2::new(0.0, 0.0)));
        let top = project_orthographic(&e, ViewLabel::Top).unwrap();
        assert_eq!(top[0], Edge2::Segment(Point2::new(1.0, 2.0), Point2::new(0.0, 0.0)));
        let right = project_orthographic(&e, ViewLabel::Right).unwrap();
        assert_eq!(right[0], Edge2::Segment(Point2::new(2.0, 3.0), Point2::new(0.0, 0.0)));
        assert!(project_orthographic(&e, ViewLabel::Isometric).is_err());
    }

    fn ellipse_radius_error(rx: f64, ry: f64, rot: f64) -> f64 {
        let segs = ellipse_to_beziers(Point2::new(0.3, -0.2), (rx, ry), rot).unwrap();
        let (s, c) = rot.sin_cos();
        let mut worst: f64 = 0.0;
        for seg in &segs {
            for i in 0..=2500 {
                let p = seg.eval(i as f64 / 2500.0);
                let (dx, dy) = (p.x - 0.3, p.y + 0.2);
                let (u, v) = (dx * c + dy * s, -dx * s + dy * c);
                worst = worst.max(((u / rx).powi(2) + (v / ry).powi(2)).sqrt() - 1.0);
            }
        }
        worst.abs()
    }

    #[test]
    fn bezier_circle_accuracy() {
        // Relative radial error of the four-cubic construction.
        assert!(ellipse_radius_error(1.0, 1.0, 0.0) <= 2.8e-4);
        assert!(ellipse_radius_error(2.0, 0.5, 0.7) <= 2.8e-4);
        assert!(ellipse_to_beziers(Point2::new(0.0, 0.0), (0.0, 1.0), 0.0).is_err());
        let segs = ellipse_to_beziers(Point2::new(0.0, 0.0), (1.0, 1.0), 0.0).unwrap();
        for i in 0..4 {
            assert_eq!(segs[i].end(), segs[(i + 1) % 4].start());
        }
    }

    #[test]
    fn cube_views() {
        let views = render_views(&cube()).unwrap();
        for v in [ViewLabel::Front, ViewLabel::Top, ViewLabel::Right] {
            let content = views[&v].content();
            assert_eq!(content.len(), 4, "{v:?}");
            assert!(content.iter().all(|t| t.kind == SvgKind::LineTo));
        }
        // Isometric wireframe shows all twelve edges; none coincide.
        assert_eq!(views[&ViewLabel::Isometric].content().len(), 12);
    }

    #[test]
    fn cylinder_views() {
        let views = render_views(&cylinder()).unwrap();
        // Top: circle of four cubics, both caps coincide.
        let top = views[&ViewLabel::Top].content();
        assert_eq!(top.len(), 4);
        assert!(top.iter().all(|t| t.kind == SvgKind::CubicBezier));
        // Front: rectangle of two cap edges and two silhouettes.
        let front = views[&ViewLabel::Front].content();
        assert_eq!(front.len(), 4);
        assert!(front.iter().all(|t| t.kind == SvgKind::LineTo));
    }

    #[test]
    fn ortho_views_share_scale() {
        let seq = random_cad_sequence(&GenSpec { max_extrusions: 1, ..GenSpec::default() }, 21).unwrap();
        let views = render_views(&seq).unwrap();
        let xs = |v: ViewLabel| {
            let pts: Vec<u16> = views[&v]
                .content()
                .iter()
                .flat_map(|t| [t.params.0[0], t.params.0[6]])
                .filter(|b| *b != UNUSED)
                .collect();
            (*pts.iter().min().unwrap(), *pts.iter().max().unwrap())
        };
        let (f, t) = (xs(ViewLabel::Front), xs(ViewLabel::Top));
        assert!((f.1 as i32 - f.0 as i32 - (t.1 as i32 - t.0 as i32)).abs() <= 1, "{f:?} {t:?}");
    }

    #[test]
    fn records_fit_budget() {
        let spec = GenSpec::default();
        let data = generate_dataset(&spec, 200, 7).unwrap();
        assert_eq!(data.len(), 200);
        for r in &data {
            assert_eq!(r.views.len(), 4);
            assert!(validate_cad_sequence(&r.cad).is_empty());
        }
        let again = generate_dataset(&spec, 200, 7).unwrap();
        assert_eq!(data, again);
    }

    #[test]
    fn spec_text() {
        let s = GenSpec::from_text("max_extrusions = 1\nplanes = xy, yz # comment\ncircles = off\n").unwrap();
        assert_eq!(s.max_extrusions, 1);
        assert_eq!(s.planes, [Plane::Xy, Plane::Yz]);
        assert!(!s.circles);
        assert!(GenSpec::from_text("bogus = 1").is_err());
        assert!(GenSpec::from_text("rectangles = off\ncircles = off").is_err());
    }
}
