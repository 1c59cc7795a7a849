//! Newline-delimited JSON dataset records.
//!
//! ```text
//! {"schema":1,"id":"s0","views":{"front":[{"kind":"L","params":[..8]}],..},"cad":[{"kind":"SOL","params":[..15]},..]}
//! ```
//! Only content tokens are stored; padding is restored on read.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::cad::{CadCommand, CadKind, CadParams, CadSequence, CAD_PARAM_COUNT};
use crate::error::{Error, Result};
use crate::svg::{pad_drawing, DrawingSequence, SvgKind, SvgToken, ViewLabel, SVG_PARAM_COUNT};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub id: String,
    pub views: BTreeMap<ViewLabel, DrawingSequence>,
    pub cad: CadSequence,
}

#[derive(Serialize, Deserialize)]
struct RawSvgToken {
    kind: String,
    params: Vec<u16>,
}

#[derive(Serialize, Deserialize)]
struct RawCadCommand {
    kind: String,
    params: Vec<u16>,
}

#[derive(Serialize, Deserialize)]
struct RawRecord {
    schema: u32,
    id: String,
    views: BTreeMap<String, Vec<RawSvgToken>>,
    cad: Vec<RawCadCommand>,
}

impl Record {
    fn to_raw(&self) -> RawRecord {
        let views = self
            .views
            .iter()
            .map(|(v, d)| {
                let toks = d
                    .content()
                    .iter()
                    .map(|t| RawSvgToken { kind: t.kind.name().to_string(), params: t.params.0.to_vec() })
                    .collect();
                (v.name().to_string(), toks)
            })
            .collect();
        let cad = self
            .cad
            .content()
            .iter()
            .map(|c| RawCadCommand { kind: c.kind.name().to_string(), params: c.params.0.to_vec() })
            .collect();
        RawRecord { schema: SCHEMA_VERSION, id: self.id.clone(), views, cad }
    }

    fn from_raw(raw: RawRecord, cad_len: usize) -> std::result::Result<Self, String> {
        if raw.schema != SCHEMA_VERSION {
            return Err(format!("unsupported schema {}", raw.schema));
        }
        let mut views = BTreeMap::new();
        for (name, toks) in raw.views {
            let view = ViewLabel::from_name(&name).ok_or_else(|| format!("unknown view '{name}'"))?;
            let tokens = toks
                .into_iter()
                .map(|t| {
                    let kind = SvgKind::from_name(&t.kind).ok_or_else(|| format!("unknown svg kind '{}'", t.kind))?;
                    let bins: [u16; SVG_PARAM_COUNT] =
                        t.params.try_into().map_err(|_| "svg token needs 8 params".to_string())?;
                    SvgToken::from_bins(kind, bins).map_err(|e| e.to_string())
                })
                .collect::<std::result::Result<Vec<_>, _>>()?;
            views.insert(view, pad_drawing(&tokens, view).map_err(|e| e.to_string())?);
        }
        let cmds = raw
            .cad
            .into_iter()
            .map(|c| {
                let kind = CadKind::from_name(&c.kind).ok_or_else(|| format!("unknown cad kind '{}'", c.kind))?;
                let p: [u16; CAD_PARAM_COUNT] =
                    c.params.try_into().map_err(|_| "cad command needs 15 params".to_string())?;
                Ok(CadCommand { kind, params: CadParams(p) })
            })
            .collect::<std::result::Result<Vec<_>, String>>()?;
        let cad = CadSequence::from_content(&cmds, cad_len).map_err(|e| e.to_string())?;
        Ok(Record { id: raw.id, views, cad })
    }

    /// Views in stacking order, restricted to `wanted`.
    pub fn views_in_order(&self, wanted: &[ViewLabel]) -> Result<Vec<&DrawingSequence>> {
        wanted
            .iter()
            .map(|v| self.views.get(v).ok_or_else(|| Error::Schema(format!("record '{}' lacks view {v}", self.id))))
            .collect()
    }
}

pub fn write_record<W: Write>(w: &mut W, rec: &Record) -> Result<()> {
    serde_json::to_writer(&mut *w, &rec.to_raw())?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Parses one line; `line_no` is 1-based and only used for error messages.
pub fn parse_record(line: &str, line_no: usize, cad_len: usize, required: &[ViewLabel]) -> Result<Record> {
    let raw: RawRecord =
        serde_json::from_str(line).map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })?;
    let rec = Record::from_raw(raw, cad_len).map_err(|msg| Error::Parse { line: line_no, msg })?;
    for v in required {
        if !rec.views.contains_key(v) {
            return Err(Error::Schema(format!("line {line_no}: record '{}' missing view {v}", rec.id)));
        }
    }
    Ok(rec)
}

pub fn read_records<R: BufRead>(r: R, cad_len: usize, required: &[ViewLabel]) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_record(&line, i + 1, cad_len, required)?);
    }
    Ok(out)
}

pub fn write_records<W: Write>(w: &mut W, recs: &[Record]) -> Result<()> {
    for r in recs {
        write_record(w, r)?;
    }
    Ok(())
}
