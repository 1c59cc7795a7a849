//! Sketch-and-extrude CAD operation sequences.
//!
//! Every command carries a 15-slot quantized parameter vector
//! `[x, y, sweep, flag, radius, tilt, spin, origin x/y/z, scale, extent1,
//! extent2, boolean, extent mode]`. A command kind uses
//! a fixed subset of the slots; the rest hold [`UNUSED`].
//!
//! Curves store only their end point. A loop starts at `SOL`, and its first
//! curve begins where its last curve ends, so Line/Arc loops close by
//! construction. A circle is a loop on its own.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::svg::UNUSED;

pub const CAD_PARAM_COUNT: usize = 15;
/// Default model sequence length.
pub const DEFAULT_SEQ_LEN: usize = 60;

pub const SLOT_X: usize = 0;
pub const SLOT_Y: usize = 1;
pub const SLOT_ALPHA: usize = 2;
pub const SLOT_FLAG: usize = 3;
pub const SLOT_R: usize = 4;
pub const SLOT_THETA: usize = 5;
pub const SLOT_GAMMA: usize = 6;
pub const SLOT_PX: usize = 7;
pub const SLOT_PY: usize = 8;
pub const SLOT_PS: usize = 9;
pub const SLOT_S: usize = 10;
pub const SLOT_E1: usize = 11;
pub const SLOT_E2: usize = 12;
pub const SLOT_BOOL: usize = 13;
pub const SLOT_MODE: usize = 14;

pub const SLOT_NAMES: [&str; CAD_PARAM_COUNT] =
    ["x", "y", "alpha", "f", "r", "theta", "gamma", "px", "py", "ps", "s", "e1", "e2", "b", "mu"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CadKind {
    Sol,
    Line,
    Arc,
    Circle,
    Extrude,
    Eos,
}

impl CadKind {
    pub const ALL: [CadKind; 6] =
        [CadKind::Sol, CadKind::Line, CadKind::Arc, CadKind::Circle, CadKind::Extrude, CadKind::Eos];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            CadKind::Sol => "SOL",
            CadKind::Line => "Line",
            CadKind::Arc => "Arc",
            CadKind::Circle => "Circle",
            CadKind::Extrude => "Extrude",
            CadKind::Eos => "EOS",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(s))
    }

    pub fn is_curve(self) -> bool {
        matches!(self, CadKind::Line | CadKind::Arc | CadKind::Circle)
    }

    pub fn usage_mask(self) -> [bool; CAD_PARAM_COUNT] {
        let mut m = [false; CAD_PARAM_COUNT];
        let used: &[usize] = match self {
            CadKind::Line => &[SLOT_X, SLOT_Y],
            CadKind::Arc => &[SLOT_X, SLOT_Y, SLOT_ALPHA, SLOT_FLAG],
            CadKind::Circle => &[SLOT_X, SLOT_Y, SLOT_R],
            CadKind::Extrude => &[
                SLOT_THETA, SLOT_GAMMA, SLOT_PX, SLOT_PY, SLOT_PS, SLOT_S, SLOT_E1, SLOT_E2, SLOT_BOOL,
                SLOT_MODE,
            ],
            CadKind::Sol | CadKind::Eos => &[],
        };
        for &i in used {
            m[i] = true;
        }
        m
    }
}

impl fmt::Display for CadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Boolean operation of an extrusion, stored in slot `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BooleanOp {
    NewBody = 0,
    Join = 1,
    Cut = 2,
    Intersect = 3,
}

impl BooleanOp {
    pub fn from_bin(b: u16) -> Option<Self> {
        match b {
            0 => Some(Self::NewBody),
            1 => Some(Self::Join),
            2 => Some(Self::Cut),
            3 => Some(Self::Intersect),
            _ => None,
        }
    }
}

/// Extent type of an extrusion, stored in slot [`SLOT_MODE`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtentMode {
    OneSided = 0,
    Symmetric = 1,
    TwoSided = 2,
}

impl ExtentMode {
    pub fn from_bin(b: u16) -> Option<Self> {
        match b {
            0 => Some(Self::OneSided),
            1 => Some(Self::Symmetric),
            2 => Some(Self::TwoSided),
            _ => None,
        }
    }
}

/// Physical meaning of one parameter slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlotRange {
    /// `low + idx * (high - low) / 255`.
    Continuous { low: f64, high: f64 },
    /// Angles: `low + idx * (high - low) / 256`, so the period is not double-counted
    /// and 0, ±π/2 land exactly on bins.
    Periodic { low: f64, high: f64 },
    Enumeration { count: u16 },
}

impl SlotRange {
    pub fn bounds(self) -> Option<(f64, f64)> {
        match self {
            SlotRange::Continuous { low, high } | SlotRange::Periodic { low, high } => Some((low, high)),
            SlotRange::Enumeration { .. } => None,
        }
    }

    fn step(self) -> Option<f64> {
        match self {
            SlotRange::Continuous { low, high } => Some((high - low) / 255.0),
            SlotRange::Periodic { low, high } => Some((high - low) / 256.0),
            SlotRange::Enumeration { .. } => None,
        }
    }

    pub fn dequantize(self, idx: u16) -> Option<f64> {
        let (low, _) = self.bounds()?;
        Some(low + idx as f64 * self.step()?)
    }

    /// Nearest bin for a physical value, clamped into `0..=255`.
    pub fn quantize(self, v: f64) -> Option<u16> {
        let (low, _) = self.bounds()?;
        let q = ((v - low) / self.step()?).round();
        Some(q.clamp(0.0, 255.0) as u16)
    }
}

/// Swappable normalization convention for every slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamRanges(pub [SlotRange; CAD_PARAM_COUNT]);

impl Default for ParamRanges {
    fn default() -> Self {
        use SlotRange::*;
        let unit = Continuous { low: -1.0, high: 1.0 };
        let angle = Periodic { low: -PI, high: PI };
        ParamRanges([
            unit,                               // x
            unit,                               // y
            angle,                              // alpha
            Enumeration { count: 2 },           // f
            Continuous { low: 0.0, high: 1.0 }, // r
            angle,                              // theta
            angle,                              // gamma
            unit,                               // px
            unit,                               // py
            unit,                               // ps
            Continuous { low: 0.0, high: 2.0 }, // s
            unit,                               // e1
            unit,                               // e2
            Enumeration { count: 4 },           // b
            Enumeration { count: 3 },           // mu
        ])
    }
}

pub fn param_range(slot: usize) -> Result<SlotRange> {
    ParamRanges::default()
        .0
        .get(slot)
        .copied()
        .ok_or_else(|| Error::Contract(format!("slot {slot} out of range 0..15")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CadParams(pub [u16; CAD_PARAM_COUNT]);

impl CadParams {
    pub const UNUSED_ALL: CadParams = CadParams([UNUSED; CAD_PARAM_COUNT]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CadCommand {
    pub kind: CadKind,
    pub params: CadParams,
}

impl CadCommand {
    pub const EOS: CadCommand = CadCommand { kind: CadKind::Eos, params: CadParams::UNUSED_ALL };
    pub const SOL: CadCommand = CadCommand { kind: CadKind::Sol, params: CadParams::UNUSED_ALL };

    /// Applies the kind's usage mask to a full argument vector.
    pub fn masked(kind: CadKind, args: [u16; CAD_PARAM_COUNT]) -> Self {
        let mask = kind.usage_mask();
        let mut p = [UNUSED; CAD_PARAM_COUNT];
        for i in 0..CAD_PARAM_COUNT {
            if mask[i] {
                p[i] = args[i];
            }
        }
        CadCommand { kind, params: CadParams(p) }
    }

    pub fn line(x: u16, y: u16) -> Self {
        let mut p = [UNUSED; CAD_PARAM_COUNT];
        p[SLOT_X] = x;
        p[SLOT_Y] = y;
        CadCommand { kind: CadKind::Line, params: CadParams(p) }
    }

    pub fn arc(x: u16, y: u16, alpha: u16, flag: u16) -> Self {
        let mut p = [UNUSED; CAD_PARAM_COUNT];
        p[SLOT_X] = x;
        p[SLOT_Y] = y;
        p[SLOT_ALPHA] = alpha;
        p[SLOT_FLAG] = flag;
        CadCommand { kind: CadKind::Arc, params: CadParams(p) }
    }

    pub fn circle(x: u16, y: u16, r: u16) -> Self {
        let mut p = [UNUSED; CAD_PARAM_COUNT];
        p[SLOT_X] = x;
        p[SLOT_Y] = y;
        p[SLOT_R] = r;
        CadCommand { kind: CadKind::Circle, params: CadParams(p) }
    }

    /// `ext` holds the ten extrusion slots in order: tilt, spin, origin x/y/z,
    /// scale, extent1, extent2, boolean, extent mode.
    pub fn extrude(ext: [u16; 10]) -> Self {
        let mut p = [UNUSED; CAD_PARAM_COUNT];
        p[SLOT_THETA..=SLOT_MODE].copy_from_slice(&ext);
        CadCommand { kind: CadKind::Extrude, params: CadParams(p) }
    }

    /// Physical value of a continuous slot, `None` for unused or enumerated slots.
    pub fn value(&self, slot: usize) -> Option<f64> {
        let b = self.params.0[slot];
        if b == UNUSED {
            return None;
        }
        ParamRanges::default().0[slot].dequantize(b)
    }
}

/// A fixed-length command sequence whose content ends at the first EOS.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CadSequence {
    commands: Vec<CadCommand>,
}

impl CadSequence {
    /// Pads `content` with EOS to `len`; content stops at its own first EOS.
    pub fn from_content(content: &[CadCommand], len: usize) -> Result<Self> {
        let end = content.iter().position(|c| c.kind == CadKind::Eos).unwrap_or(content.len());
        if end >= len {
            return Err(Error::LengthExceeded { len: end, limit: len.saturating_sub(1) });
        }
        let mut commands = content[..end].to_vec();
        commands.resize(len, CadCommand::EOS);
        Ok(CadSequence { commands })
    }

    pub fn commands(&self) -> &[CadCommand] {
        &self.commands
    }

    pub fn len(&self) -> usize {
        self.commands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commands.is_empty()
    }

    pub fn content(&self) -> &[CadCommand] {
        let end = self.commands.iter().position(|c| c.kind == CadKind::Eos).unwrap_or(self.commands.len());
        &self.commands[..end]
    }

    pub fn kinds(&self) -> Vec<CadKind> {
        self.commands.iter().map(|c| c.kind).collect()
    }

    /// One command per line: kind name followed by the 15 bins.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.commands {
            s.push_str(c.kind.name());
            for b in c.params.0 {
                s.push(' ');
                s.push_str(&b.to_string());
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut commands = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: n + 1, msg };
            let mut it = line.split_whitespace();
            let name = it.next().unwrap_or_default();
            let kind = CadKind::from_name(name).ok_or_else(|| perr(format!("unknown command '{name}'")))?;
            let vals: Vec<u16> = it
                .map(|t| t.parse::<u16>().map_err(|e| perr(format!("bad bin '{t}': {e}"))))
                .collect::<Result<_>>()?;
            let params: [u16; CAD_PARAM_COUNT] = vals
                .try_into()
                .map_err(|v: Vec<u16>| perr(format!("expected 15 bins, got {}", v.len())))?;
            commands.push(CadCommand { kind, params: CadParams(params) });
        }
        if commands.is_empty() {
            return Err(Error::Parse { line: 0, msg: "no commands".into() });
        }
        let len = commands.len();
        let content_end = commands.iter().position(|c| c.kind == CadKind::Eos).unwrap_or(len);
        let mut padded = commands[..content_end].to_vec();
        padded.resize(len.max(content_end + 1), CadCommand::EOS);
        Ok(CadSequence { commands: padded })
    }
}

/// Gap tolerance for loop closure and degeneracy checks, in bins.
pub const CLOSE_TOLERANCE_BINS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyContent,
    ExtrudeWithoutLoop { position: usize },
    OpenLoop { position: usize },
    CurveOutsideLoop { position: usize },
    EnumOutOfRange { position: usize, slot: usize, value: u16 },
    MaskViolation { position: usize, slot: usize },
    FirstExtrudeNotNewBody { position: usize },
    DanglingSketch { position: usize },
}

impl Violation {
    pub fn code(&self) -> &'static str {
        match self {
            Violation::EmptyContent => "empty-content",
            Violation::ExtrudeWithoutLoop { .. } => "extrude-without-loop",
            Violation::OpenLoop { .. } => "open-loop",
            Violation::CurveOutsideLoop { .. } => "curve-outside-loop",
            Violation::EnumOutOfRange { .. } => "enum-out-of-range",
            Violation::MaskViolation { .. } => "mask-violation",
            Violation::FirstExtrudeNotNewBody { .. } => "first-extrude-not-new-body",
            Violation::DanglingSketch { .. } => "dangling-sketch",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyContent => write!(f, "empty-content"),
            Violation::EnumOutOfRange { position, slot, value } => {
                write!(f, "enum-out-of-range at {position}: {}={value}", SLOT_NAMES[*slot])
            }
            Violation::MaskViolation { position, slot } => {
                write!(f, "mask-violation at {position}: slot {}", SLOT_NAMES[*slot])
            }
            Violation::ExtrudeWithoutLoop { position }
            | Violation::OpenLoop { position }
            | Violation::CurveOutsideLoop { position }
            | Violation::FirstExtrudeNotNewBody { position }
            | Violation::DanglingSketch { position } => write!(f, "{} at {position}", self.code()),
        }
    }
}

fn check_loop(cmds: &[CadCommand]) -> bool {
    if cmds.is_empty() {
        return false;
    }
    if cmds.iter().any(|c| c.kind == CadKind::Circle) {
        return cmds.len() == 1 && cmds[0].params.0[SLOT_R] > 0;
    }
    // Vertices in bin units; the loop is traced v_last -> v_0 -> v_1 -> ...
    let verts: Vec<(f64, f64)> =
        cmds.iter().map(|c| (c.params.0[SLOT_X] as f64, c.params.0[SLOT_Y] as f64)).collect();
    let has_arc = cmds.iter().any(|c| c.kind == CadKind::Arc);
    let distinct = verts.iter().any(|&(x, y)| {
        let (x0, y0) = verts[0];
        ((x - x0).powi(2) + (y - y0).powi(2)).sqrt() > CLOSE_TOLERANCE_BINS
    });
    if has_arc {
        // A single arc returning to its own start is a degenerate (zero-chord) arc.
        return distinct;
    }
    // A pure polyline loop must enclose area; a back-and-forth segment does not.
    let n = verts.len();
    let area2: f64 = (0..n)
        .map(|i| {
            let (x0, y0) = verts[i];
            let (x1, y1) = verts[(i + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum();
    distinct && area2.abs() > CLOSE_TOLERANCE_BINS * CLOSE_TOLERANCE_BINS
}

/// Checks the sketch-extrude grammar; an empty vector means valid.
pub fn validate_cad_sequence(seq: &CadSequence) -> Vec<Violation> {
    let content = seq.content();
    let mut out = Vec::new();
    if content.is_empty() {
        out.push(Violation::EmptyContent);
        return out;
    }
    for (i, c) in content.iter().enumerate() {
        let mask = c.kind.usage_mask();
        for s in 0..CAD_PARAM_COUNT {
            let b = c.params.0[s];
            if mask[s] == (b == UNUSED) {
                out.push(Violation::MaskViolation { position: i, slot: s });
            }
        }
        if mask[SLOT_FLAG] && c.params.0[SLOT_FLAG] != UNUSED && c.params.0[SLOT_FLAG] > 1 {
            out.push(Violation::EnumOutOfRange { position: i, slot: SLOT_FLAG, value: c.params.0[SLOT_FLAG] });
        }
        if c.kind == CadKind::Extrude {
            let b = c.params.0[SLOT_BOOL];
            if b != UNUSED && BooleanOp::from_bin(b).is_none() {
                out.push(Violation::EnumOutOfRange { position: i, slot: SLOT_BOOL, value: b });
            }
            let m = c.params.0[SLOT_MODE];
            if m != UNUSED && ExtentMode::from_bin(m).is_none() {
                out.push(Violation::EnumOutOfRange { position: i, slot: SLOT_MODE, value: m });
            }
        }
    }

    let mut in_loop = false;
    let mut loop_start = 0;
    let mut complete_loops = 0usize;
    let mut seen_extrude = false;
    let close_loop = |start: usize, end: usize, out: &mut Vec<Violation>, complete: &mut usize| {
        let curves = &content[start + 1..end];
        if !curves.is_empty() {
            if check_loop(curves) {
                *complete += 1;
            } else {
                out.push(Violation::OpenLoop { position: start });
            }
        }
    };
    for (i, c) in content.iter().enumerate() {
        match c.kind {
            CadKind::Sol => {
                if in_loop {
                    close_loop(loop_start, i, &mut out, &mut complete_loops);
                }
                in_loop = true;
                loop_start = i;
            }
            k if k.is_curve() => {
                if !in_loop {
                    out.push(Violation::CurveOutsideLoop { position: i });
                }
            }
            CadKind::Extrude => {
                if in_loop {
                    close_loop(loop_start, i, &mut out, &mut complete_loops);
                    in_loop = false;
                }
                if complete_loops == 0 {
                    out.push(Violation::ExtrudeWithoutLoop { position: i });
                }
                if !seen_extrude && c.params.0[SLOT_BOOL] != BooleanOp::NewBody as u16 {
                    out.push(Violation::FirstExtrudeNotNewBody { position: i });
                }
                seen_extrude = true;
                complete_loops = 0;
            }
            _ => {}
        }
    }
    if in_loop {
        close_loop(loop_start, content.len(), &mut out, &mut complete_loops);
        out.push(Violation::DanglingSketch { position: loop_start });
    } else if complete_loops > 0 || !seen_extrude {
        out.push(Violation::DanglingSketch { position: content.len() });
    }
    out
}

/// Masks each position's arguments by its kind, then truncates at the first EOS.
pub fn merge_outputs(kinds: &[CadKind], args: &[[u16; CAD_PARAM_COUNT]]) -> Result<CadSequence> {
    if kinds.len() != args.len() {
        return Err(Error::Contract(format!("{} kinds vs {} argument rows", kinds.len(), args.len())));
    }
    if kinds.is_empty() {
        return Err(Error::Contract("empty decoder output".into()));
    }
    let end = kinds.iter().position(|&k| k == CadKind::Eos).unwrap_or(kinds.len());
    let mut commands: Vec<CadCommand> =
        kinds[..end].iter().zip(&args[..end]).map(|(&k, &a)| CadCommand::masked(k, a)).collect();
    // A sequence with no EOS at all keeps every position.
    commands.resize(kinds.len(), CadCommand::EOS);
    Ok(CadSequence { commands })
}

/// Same kinds everywhere and every used slot within `eta` (strict).
pub fn sequence_equal_within(a: &CadSequence, b: &CadSequence, eta: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    a.commands.iter().zip(&b.commands).all(|(ca, cb)| {
        ca.kind == cb.kind
            && ca.kind.usage_mask().iter().enumerate().filter(|(_, &u)| u).all(|(s, _)| {
                let (pa, pb) = (ca.params.0[s], cb.params.0[s]);
                (pa == UNUSED) == (pb == UNUSED) && ((pa as f64) - (pb as f64)).abs() < eta
            })
    })
}
