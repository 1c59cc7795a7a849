//! SVG path ingestion: parse, normalize to the 200×200 box, chain segments into
//! contours and put them in canonical order.
//!
//! The output depends only on the set of input segments, never on their order
//! in the file.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::svg::{
    dequantize_coord, pad_drawing, quantize_coord, DrawingSequence, SvgKind, SvgToken, ViewLabel, UNUSED,
    VIEWBOX_SIZE,
};

/// Endpoint matching tolerance in normalized drawing units.
pub const JOIN_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn dist(self, o: Point2) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    fn key(self) -> (f64, f64) {
        (self.y, self.x)
    }

    fn map(self, f: impl Fn(f64, f64) -> (f64, f64)) -> Self {
        let (x, y) = f(self.x, self.y);
        Point2 { x, y }
    }
}

fn cmp_f(a: f64, b: f64) -> Ordering {
    a.total_cmp(&b)
}

fn cmp_pt(a: Point2, b: Point2) -> Ordering {
    cmp_f(a.y, b.y).then(cmp_f(a.x, b.x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Segment {
    Line { start: Point2, end: Point2 },
    Cubic { start: Point2, c1: Point2, c2: Point2, end: Point2 },
}

impl Segment {
    pub fn start(&self) -> Point2 {
        match *self {
            Segment::Line { start, .. } | Segment::Cubic { start, .. } => start,
        }
    }

    pub fn end(&self) -> Point2 {
        match *self {
            Segment::Line { end, .. } | Segment::Cubic { end, .. } => end,
        }
    }

    pub fn reversed(&self) -> Segment {
        match *self {
            Segment::Line { start, end } => Segment::Line { start: end, end: start },
            Segment::Cubic { start, c1, c2, end } => Segment::Cubic { start: end, c1: c2, c2: c1, end: start },
        }
    }

    pub fn points(&self) -> Vec<Point2> {
        match *self {
            Segment::Line { start, end } => vec![start, end],
            Segment::Cubic { start, c1, c2, end } => vec![start, c1, c2, end],
        }
    }

    fn map(&self, f: impl Fn(f64, f64) -> (f64, f64) + Copy) -> Segment {
        match *self {
            Segment::Line { start, end } => Segment::Line { start: start.map(f), end: end.map(f) },
            Segment::Cubic { start, c1, c2, end } => {
                Segment::Cubic { start: start.map(f), c1: c1.map(f), c2: c2.map(f), end: end.map(f) }
            }
        }
    }

    pub fn eval(&self, t: f64) -> Point2 {
        match *self {
            Segment::Line { start, end } => {
                Point2::new(start.x + (end.x - start.x) * t, start.y + (end.y - start.y) * t)
            }
            Segment::Cubic { start, c1, c2, end } => {
                let u = 1.0 - t;
                let (a, b, c, d) = (u * u * u, 3.0 * u * u * t, 3.0 * u * t * t, t * t * t);
                Point2::new(
                    a * start.x + b * c1.x + c * c2.x + d * end.x,
                    a * start.y + b * c1.y + c * c2.y + d * end.y,
                )
            }
        }
    }

    fn is_degenerate(&self) -> bool {
        let p = self.points();
        p.iter().all(|q| q.dist(p[0]) == 0.0)
    }

    /// Orientation-independent ordering key used to canonicalize segment sets.
    fn canonical(&self) -> Segment {
        let r = self.reversed();
        if cmp_seg(self, &r) == Ordering::Greater {
            r
        } else {
            *self
        }
    }

    fn tokenize(&self) -> Result<SvgToken> {
        let q = |p: Point2| -> Result<(u16, u16)> { Ok((quantize_coord(p.x)?, quantize_coord(p.y)?)) };
        match *self {
            Segment::Line { start, end } => {
                let (x1, y1) = q(start)?;
                let (x2, y2) = q(end)?;
                SvgToken::from_bins(SvgKind::LineTo, [x1, y1, UNUSED, UNUSED, UNUSED, UNUSED, x2, y2])
            }
            Segment::Cubic { start, c1, c2, end } => {
                let (x1, y1) = q(start)?;
                let (a, b) = q(c1)?;
                let (c, d) = q(c2)?;
                let (x2, y2) = q(end)?;
                SvgToken::from_bins(SvgKind::CubicBezier, [x1, y1, a, b, c, d, x2, y2])
            }
        }
    }
}

fn cmp_seg(a: &Segment, b: &Segment) -> Ordering {
    let kind = |s: &Segment| matches!(s, Segment::Cubic { .. }) as u8;
    kind(a).cmp(&kind(b)).then_with(|| {
        a.points().iter().zip(b.points().iter()).map(|(p, q)| cmp_pt(*p, *q)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
    })
}

// ---------------------------------------------------------------------------
// Path grammar

struct PathLexer<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> PathLexer<'a> {
    fn skip_sep(&mut self) {
        while self.pos < self.s.len() && (self.s[self.pos].is_ascii_whitespace() || self.s[self.pos] == b',') {
            self.pos += 1;
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_sep();
        self.pos >= self.s.len()
    }

    fn peek_is_number(&mut self) -> bool {
        self.skip_sep();
        self.pos < self.s.len() && matches!(self.s[self.pos], b'0'..=b'9' | b'-' | b'+' | b'.')
    }

    fn command(&mut self) -> Result<u8> {
        self.skip_sep();
        let c = self.s[self.pos];
        if c.is_ascii_alphabetic() {
            self.pos += 1;
            Ok(c)
        } else {
            Err(Error::PathParse { offset: self.pos, msg: format!("expected command, found '{}'", c as char) })
        }
    }

    fn number(&mut self) -> Result<f64> {
        self.skip_sep();
        let start = self.pos;
        let s = self.s;
        let mut i = self.pos;
        if i < s.len() && (s[i] == b'+' || s[i] == b'-') {
            i += 1;
        }
        let mut digits = 0;
        while i < s.len() && s[i].is_ascii_digit() {
            i += 1;
            digits += 1;
        }
        if i < s.len() && s[i] == b'.' {
            i += 1;
            while i < s.len() && s[i].is_ascii_digit() {
                i += 1;
                digits += 1;
            }
        }
        if digits == 0 {
            return Err(Error::PathParse { offset: start, msg: "malformed number".into() });
        }
        if i < s.len() && (s[i] == b'e' || s[i] == b'E') {
            let mut j = i + 1;
            if j < s.len() && (s[j] == b'+' || s[j] == b'-') {
                j += 1;
            }
            let exp_start = j;
            while j < s.len() && s[j].is_ascii_digit() {
                j += 1;
            }
            if j == exp_start {
                return Err(Error::PathParse { offset: start, msg: "malformed exponent".into() });
            }
            i = j;
        }
        let text = std::str::from_utf8(&s[start..i]).expect("ascii");
        let v: f64 = text.parse().map_err(|_| Error::PathParse { offset: start, msg: format!("bad number '{text}'") })?;
        if !v.is_finite() {
            return Err(Error::PathParse { offset: start, msg: "non-finite number".into() });
        }
        self.pos = i;
        Ok(v)
    }
}

/// Parses `M L H V C Z` (both cases) into absolute segments.
pub fn parse_path_data(d: &str) -> Result<Vec<Segment>> {
    let mut lx = PathLexer { s: d.as_bytes(), pos: 0 };
    let mut out = Vec::new();
    let mut cur = Point2::default();
    let mut subpath_start = Point2::default();
    let mut have_point = false;

    while !lx.at_end() {
        let at = lx.pos;
        let cmd = lx.command()?;
        let rel = cmd.is_ascii_lowercase();
        let upper = cmd.to_ascii_uppercase();
        if !matches!(upper, b'M' | b'L' | b'H' | b'V' | b'C' | b'Z') {
            return Err(Error::UnsupportedCommand(cmd as char));
        }
        if upper != b'M' && !have_point {
            return Err(Error::PathParse { offset: at, msg: "path must start with moveto".into() });
        }
        let off = |p: Point2, base: Point2| if rel { Point2::new(p.x + base.x, p.y + base.y) } else { p };
        match upper {
            b'Z' => {
                if cur.dist(subpath_start) > 0.0 {
                    out.push(Segment::Line { start: cur, end: subpath_start });
                }
                cur = subpath_start;
            }
            b'M' => {
                let p = Point2::new(lx.number()?, lx.number()?);
                cur = off(p, cur);
                subpath_start = cur;
                have_point = true;
                // Extra coordinate pairs after a moveto are implicit linetos.
                while lx.peek_is_number() {
                    let p = off(Point2::new(lx.number()?, lx.number()?), cur);
                    out.push(Segment::Line { start: cur, end: p });
                    cur = p;
                }
            }
            _ => loop {
                match upper {
                    b'L' => {
                        let p = off(Point2::new(lx.number()?, lx.number()?), cur);
                        out.push(Segment::Line { start: cur, end: p });
                        cur = p;
                    }
                    b'H' => {
                        let x = lx.number()?;
                        let p = Point2::new(if rel { cur.x + x } else { x }, cur.y);
                        out.push(Segment::Line { start: cur, end: p });
                        cur = p;
                    }
                    b'V' => {
                        let y = lx.number()?;
                        let p = Point2::new(cur.x, if rel { cur.y + y } else { y });
                        out.push(Segment::Line { start: cur, end: p });
                        cur = p;
                    }
                    b'C' => {
                        let c1 = off(Point2::new(lx.number()?, lx.number()?), cur);
                        let c2 = off(Point2::new(lx.number()?, lx.number()?), cur);
                        let e = off(Point2::new(lx.number()?, lx.number()?), cur);
                        out.push(Segment::Cubic { start: cur, c1, c2, end: e });
                        cur = e;
                    }
                    _ => unreachable!(),
                }
                if !lx.peek_is_number() {
                    break;
                }
            },
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Normalization

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewBox {
    pub min_x: f64,
    pub min_y: f64,
    pub width: f64,
    pub height: f64,
}

impl ViewBox {
    pub fn new(min_x: f64, min_y: f64, width: f64, height: f64) -> Self {
        ViewBox { min_x, min_y, width, height }
    }
}

/// Uniform scale into `[0,200]²`, centered along the shorter axis.
pub fn normalize_viewbox(segments: &[Segment], vb: ViewBox) -> Result<Vec<Segment>> {
    if !(vb.width > 0.0 && vb.height > 0.0) || !vb.min_x.is_finite() || !vb.min_y.is_finite() {
        return Err(Error::Geometry(format!("degenerate viewbox {vb:?}")));
    }
    let s = VIEWBOX_SIZE / vb.width.max(vb.height);
    let ox = (VIEWBOX_SIZE - vb.width * s) / 2.0;
    let oy = (VIEWBOX_SIZE - vb.height * s) / 2.0;
    let slack = 1e-6 * VIEWBOX_SIZE;
    let mut out = Vec::with_capacity(segments.len());
    for seg in segments {
        let m = seg.map(|x, y| ((x - vb.min_x) * s + ox, (y - vb.min_y) * s + oy));
        for p in m.points() {
            if !(p.x >= -slack && p.x <= VIEWBOX_SIZE + slack && p.y >= -slack && p.y <= VIEWBOX_SIZE + slack) {
                return Err(Error::Geometry(format!("point ({:.3}, {:.3}) falls outside the viewbox", p.x, p.y)));
            }
        }
        out.push(m.map(|x, y| (x.clamp(0.0, VIEWBOX_SIZE), y.clamp(0.0, VIEWBOX_SIZE))));
    }
    Ok(out)
}

/// Moves every coordinate onto the center of its quantization bin.
pub fn snap_to_bins(segments: &[Segment]) -> Result<Vec<Segment>> {
    let mut out = Vec::with_capacity(segments.len());
    for seg in segments {
        for p in seg.points() {
            quantize_coord(p.x)?;
            quantize_coord(p.y)?;
        }
        let snap = |v: f64| dequantize_coord(quantize_coord(v).expect("checked")).expect("in range");
        out.push(seg.map(|x, y| (snap(x), snap(y))));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Contours

#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    pub segments: Vec<Segment>,
    pub closed: bool,
}

impl Contour {
    pub fn vertices(&self) -> Vec<Point2> {
        self.segments.iter().map(Segment::start).collect()
    }

    /// Shoelace signed area over a flattened outline (y-down frame: positive = clockwise).
    pub fn signed_area(&self) -> f64 {
        let mut pts = Vec::new();
        for s in &self.segments {
            match s {
                Segment::Line { start, .. } => pts.push(*start),
                Segment::Cubic { .. } => {
                    for i in 0..32 {
                        pts.push(s.eval(i as f64 / 32.0));
                    }
                }
            }
        }
        let n = pts.len();
        if n < 2 {
            return 0.0;
        }
        0.5 * (0..n).map(|i| pts[i].x * pts[(i + 1) % n].y - pts[(i + 1) % n].x * pts[i].y).sum::<f64>()
    }

    fn reversed(&self) -> Contour {
        Contour { segments: self.segments.iter().rev().map(Segment::reversed).collect(), closed: self.closed }
    }

    fn endpoints(&self) -> impl Iterator<Item = Point2> + '_ {
        self.segments.iter().flat_map(|s| [s.start(), s.end()])
    }

    /// Closest endpoint to the origin, ties broken by (y, x).
    fn nearest_point(&self) -> Point2 {
        self.endpoints()
            .min_by(|a, b| cmp_f(a.norm(), b.norm()).then(cmp_pt(*a, *b)))
            .unwrap_or_default()
    }
}

fn cmp_contour(a: &Contour, b: &Contour) -> Ordering {
    a.segments
        .iter()
        .zip(&b.segments)
        .map(|(x, y)| cmp_seg(x, y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.segments.len().cmp(&b.segments.len()))
        .then(a.closed.cmp(&b.closed))
}

struct Clusters {
    parent: Vec<usize>,
}

impl Clusters {
    fn find(&mut self, i: usize) -> usize {
        let mut r = i;
        while self.parent[r] != r {
            r = self.parent[r];
        }
        let mut i = i;
        while self.parent[i] != r {
            let n = self.parent[i];
            self.parent[i] = r;
            i = n;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Chains segments into maximal trails over the endpoint-adjacency graph.
pub fn build_contours(segments: &[Segment], join_tol: f64) -> Vec<Contour> {
    let mut segs: Vec<Segment> =
        segments.iter().filter(|s| !s.is_degenerate()).map(Segment::canonical).collect();
    segs.sort_by(cmp_seg);
    let n = segs.len();
    if n == 0 {
        return Vec::new();
    }

    // Endpoint 2i is the start of segment i, 2i+1 its end.
    let pts: Vec<Point2> = segs.iter().flat_map(|s| [s.start(), s.end()]).collect();
    let mut uf = Clusters { parent: (0..pts.len()).collect() };
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            if pts[i].dist(pts[j]) <= join_tol {
                uf.union(i, j);
            }
        }
    }
    let vertex: Vec<usize> = (0..pts.len()).map(|i| uf.find(i)).collect();
    // Cluster key: its smallest member point.
    let mut key = vec![Point2::new(f64::INFINITY, f64::INFINITY); pts.len()];
    for (i, &v) in vertex.iter().enumerate() {
        if cmp_pt(pts[i], key[v]) == Ordering::Less {
            key[v] = pts[i];
        }
    }

    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); pts.len()];
    for e in 0..n {
        incident[vertex[2 * e]].push(e);
        if vertex[2 * e + 1] != vertex[2 * e] {
            incident[vertex[2 * e + 1]].push(e);
        }
    }
    let mut used = vec![false; n];
    let degree = |v: usize, used: &[bool]| -> usize {
        incident[v]
            .iter()
            .filter(|&&e| !used[e])
            .map(|&e| if vertex[2 * e] == vertex[2 * e + 1] { 2 } else { 1 })
            .sum()
    };

    let mut contours = Vec::new();
    while let Some(first) = (0..n).find(|&e| !used[e]) {
        // Gather the component's vertices reachable through unused edges.
        let mut comp = vec![vertex[2 * first]];
        let mut seen = std::collections::BTreeSet::from([vertex[2 * first]]);
        let mut k = 0;
        while k < comp.len() {
            let v = comp[k];
            for &e in &incident[v] {
                if used[e] {
                    continue;
                }
                for w in [vertex[2 * e], vertex[2 * e + 1]] {
                    if seen.insert(w) {
                        comp.push(w);
                    }
                }
            }
            k += 1;
        }
        let odd: Vec<usize> = comp.iter().copied().filter(|&v| degree(v, &used) % 2 == 1).collect();
        let pool = if odd.is_empty() { comp.clone() } else { odd };
        let start = pool
            .into_iter()
            .filter(|&v| degree(v, &used) > 0)
            .min_by(|&a, &b| cmp_f(key[a].norm(), key[b].norm()).then(cmp_pt(key[a], key[b])))
            .expect("component has an unused edge");

        let mut chain = Vec::new();
        let mut at = start;
        while let Some(&e) = incident[at].iter().find(|&&e| !used[e]) {
            used[e] = true;
            if vertex[2 * e] == at {
                chain.push(segs[e]);
                at = vertex[2 * e + 1];
            } else {
                chain.push(segs[e].reversed());
                at = vertex[2 * e];
            }
        }
        contours.push(Contour { segments: chain, closed: at == start });
    }
    contours
}

fn rotate_to_nearest(c: &Contour) -> Contour {
    let verts = c.vertices();
    let best = verts
        .iter()
        .map(|p| (p.norm(), p.key()))
        .min_by(|a, b| cmp_f(a.0, b.0).then(cmp_f(a.1 .0, b.1 .0)).then(cmp_f(a.1 .1, b.1 .1)))
        .expect("nonempty");
    let mut best_rot: Option<Contour> = None;
    for (i, p) in verts.iter().enumerate() {
        if (p.norm(), p.key()) != best {
            continue;
        }
        let mut segs = c.segments[i..].to_vec();
        segs.extend_from_slice(&c.segments[..i]);
        let cand = Contour { segments: segs, closed: true };
        if best_rot.as_ref().is_none_or(|b| cmp_contour(&cand, b) == Ordering::Less) {
            best_rot = Some(cand);
        }
    }
    best_rot.expect("at least one candidate")
}

fn normalize_contour(c: &Contour) -> Contour {
    if c.segments.is_empty() {
        return c.clone();
    }
    if c.closed {
        let oriented = if c.signed_area() < 0.0 { c.reversed() } else { c.clone() };
        let mut best = rotate_to_nearest(&oriented);
        // Zero-area loops have no preferred direction; take the smaller encoding.
        if oriented.signed_area() == 0.0 {
            let other = rotate_to_nearest(&oriented.reversed());
            if cmp_contour(&other, &best) == Ordering::Less {
                best = other;
            }
        }
        best
    } else {
        let first = c.segments[0].start();
        let last = c.segments[c.segments.len() - 1].end();
        let flip = match cmp_f(last.norm(), first.norm()).then(cmp_pt(last, first)) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => cmp_contour(&c.reversed(), c) == Ordering::Less,
        };
        if flip {
            c.reversed()
        } else {
            c.clone()
        }
    }
}

/// Orients closed contours clockwise (y-down), starts them at the vertex nearest
/// the origin, and sorts contours by distance from the origin.
pub fn reorder_contours(contours: &[Contour]) -> Vec<Contour> {
    let mut out: Vec<Contour> = contours.iter().map(normalize_contour).collect();
    out.sort_by(|a, b| {
        let (pa, pb) = (a.nearest_point(), b.nearest_point());
        cmp_f(pa.norm(), pb.norm()).then(cmp_pt(pa, pb)).then_with(|| cmp_contour(a, b))
    });
    out
}

// ---------------------------------------------------------------------------
// Whole pipeline

/// Segments of already-normalized geometry to padded tokens.
pub fn tokens_from_segments(segments: &[Segment], view: ViewLabel) -> Result<DrawingSequence> {
    let snapped = snap_to_bins(segments)?;
    let contours = reorder_contours(&build_contours(&snapped, JOIN_TOLERANCE));
    let tokens: Vec<SvgToken> =
        contours.iter().flat_map(|c| c.segments.iter()).map(Segment::tokenize).collect::<Result<_>>()?;
    pad_drawing(&tokens, view)
}

/// Runs normalize → contour → reorder → quantize → pad on raw segments.
pub fn drawing_from_segments(segments: &[Segment], vb: ViewBox, view: ViewLabel) -> Result<DrawingSequence> {
    tokens_from_segments(&normalize_viewbox(segments, vb)?, view)
}

fn parse_viewbox(root: roxmltree::Node<'_, '_>) -> Result<ViewBox> {
    if let Some(vb) = root.attribute("viewBox") {
        let nums: Vec<f64> = vb
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| Error::Svg(format!("bad viewBox '{vb}'"))))
            .collect::<Result<_>>()?;
        if nums.len() != 4 {
            return Err(Error::Svg(format!("viewBox needs 4 numbers, got '{vb}'")));
        }
        return Ok(ViewBox::new(nums[0], nums[1], nums[2], nums[3]));
    }
    let dim = |name: &str| -> Result<f64> {
        let raw = root.attribute(name).ok_or_else(|| Error::Svg("missing viewBox".into()))?;
        raw.trim_end_matches("px").parse().map_err(|_| Error::Svg(format!("bad {name} '{raw}'")))
    };
    Ok(ViewBox::new(0.0, 0.0, dim("width")?, dim("height")?))
}

/// Path segments and viewbox of an SVG document; other elements are ignored.
pub fn parse_svg_document(text: &str) -> Result<(Vec<Segment>, ViewBox)> {
    let doc = roxmltree::Document::parse(text).map_err(|e| Error::Svg(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "svg" {
        return Err(Error::Svg(format!("root element is <{}>", root.tag_name().name())));
    }
    let vb = parse_viewbox(root)?;
    let mut segs = Vec::new();
    for node in root.descendants().filter(|n| n.is_element() && n.tag_name().name() == "path") {
        if let Some(d) = node.attribute("d") {
            segs.extend(parse_path_data(d)?);
        }
    }
    Ok((segs, vb))
}

pub fn drawing_from_svg(text: &str, view: ViewLabel) -> Result<DrawingSequence> {
    let (segs, vb) = parse_svg_document(text)?;
    drawing_from_segments(&segs, vb, view)
}

pub fn drawing_from_svg_file(path: &std::path::Path, view: ViewLabel) -> Result<DrawingSequence> {
    drawing_from_svg(&std::fs::read_to_string(path)?, view)
}

/// Dequantized segments of a drawing's content.
pub fn drawing_segments(d: &DrawingSequence) -> Vec<Segment> {
    let pt = |x: u16, y: u16| Point2::new(dequantize_coord(x).unwrap_or(0.0), dequantize_coord(y).unwrap_or(0.0));
    d.content()
        .iter()
        .filter_map(|t| {
            let p = t.params.0;
            match t.kind {
                SvgKind::LineTo => Some(Segment::Line { start: pt(p[0], p[1]), end: pt(p[6], p[7]) }),
                SvgKind::CubicBezier => Some(Segment::Cubic {
                    start: pt(p[0], p[1]),
                    c1: pt(p[2], p[3]),
                    c2: pt(p[4], p[5]),
                    end: pt(p[6], p[7]),
                }),
                _ => None,
            }
        })
        .collect()
}

/// Renders segments as an SVG document, one `<path>` per chained run.
pub fn segments_to_svg(segments: &[Segment], vb: ViewBox) -> String {
    let mut paths: Vec<String> = Vec::new();
    let mut cur = String::new();
    let mut last: Option<Point2> = None;
    let mut run_start = Point2::default();
    for s in segments {
        if last.is_none_or(|p| p.dist(s.start()) > JOIN_TOLERANCE) {
            if !cur.is_empty() {
                paths.push(std::mem::take(&mut cur));
            }
            run_start = s.start();
            cur.push_str(&format!("M {} {}", s.start().x, s.start().y));
        }
        match s {
            Segment::Line { end, .. } if end.dist(run_start) <= JOIN_TOLERANCE && !cur.ends_with('Z') => {
                cur.push_str(&format!(" L {} {} Z", end.x, end.y));
            }
            Segment::Line { end, .. } => cur.push_str(&format!(" L {} {}", end.x, end.y)),
            Segment::Cubic { c1, c2, end, .. } => {
                cur.push_str(&format!(" C {} {} {} {} {} {}", c1.x, c1.y, c2.x, c2.y, end.x, end.y))
            }
        }
        last = Some(s.end());
    }
    if !cur.is_empty() {
        paths.push(cur);
    }
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{} {} {} {}\">\n",
        vb.min_x, vb.min_y, vb.width, vb.height
    );
    for p in paths {
        out.push_str(&format!("  <path d=\"{p}\" fill=\"none\" stroke=\"black\"/>\n"));
    }
    out.push_str("</svg>\n");
    out
}

pub fn drawing_to_svg(d: &DrawingSequence) -> String {
    segments_to_svg(&drawing_segments(d), ViewBox::new(0.0, 0.0, VIEWBOX_SIZE, VIEWBOX_SIZE))
}
