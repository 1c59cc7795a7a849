//! Drawing encoder and dual CAD decoder.
//!
//! Tokens of the stacked views are embedded from their view, command kind and
//! eight quantized arguments, run through a pre-norm Transformer encoder and
//! mean-pooled into a latent vector. Two non-autoregressive decoders start from
//! learned constant queries, cross-attend to the latent, and feed a command
//! head and an argument head. With guidance on, the command decoder's output
//! is added to the argument decoder's output before the argument head.

use std::fmt;
use std::str::FromStr;

use ndarray::Axis;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tape::{Mat, ParamStore, Tape, Var};
use crate::cad::{merge_outputs, CadKind, CadSequence, CAD_PARAM_COUNT};
use crate::error::{contract, Error, Result};
use crate::loss::{arg_targets, ARG_CLASSES};
use crate::svg::{DrawingSequence, SvgToken, ViewLabel, DRAWING_LEN, SVG_PARAM_COUNT};

pub const CAD_KINDS: usize = 6;
pub const SVG_KINDS: usize = 4;
pub const VIEW_COUNT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewMode {
    /// Isometric view only; the view embedding is dropped.
    Iso,
    /// Front, top and right.
    Ortho,
    /// The three orthographic views followed by the isometric view.
    All,
}

impl ViewMode {
    pub fn views(self) -> &'static [ViewLabel] {
        match self {
            ViewMode::Iso => &[ViewLabel::Isometric],
            ViewMode::Ortho => &[ViewLabel::Front, ViewLabel::Top, ViewLabel::Right],
            ViewMode::All => &ViewLabel::ALL,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ViewMode::Iso => "iso",
            ViewMode::Ortho => "ortho",
            ViewMode::All => "all",
        }
    }

    pub fn uses_view_embedding(self) -> bool {
        self != ViewMode::Iso
    }
}

impl FromStr for ViewMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iso" | "1x" => Ok(ViewMode::Iso),
            "ortho" | "3x" => Ok(ViewMode::Ortho),
            "all" | "4x" => Ok(ViewMode::All),
            _ => Err(Error::Config(format!("unknown view mode '{s}'"))),
        }
    }
}

impl fmt::Display for ViewMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fusion {
    /// Concatenate the field embeddings and apply an affine map back to width d.
    Concat,
    /// Sum the field embeddings.
    Add,
}

impl FromStr for Fusion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "concat" => Ok(Fusion::Concat),
            "add" => Ok(Fusion::Add),
            _ => Err(Error::Config(format!("unknown fusion '{s}'"))),
        }
    }
}

impl fmt::Display for Fusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Fusion::Concat => "concat",
            Fusion::Add => "add",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub d_model: usize,
    pub enc_blocks: usize,
    pub dec_blocks: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub dropout: f64,
    pub view_mode: ViewMode,
    /// Token slots per view; sets the positional offset of each stacked view.
    pub drawing_len: usize,
    pub cad_len: usize,
    pub fusion: Fusion,
    pub guidance: bool,
}

impl ModelConfig {
    pub fn full() -> Self {
        ModelConfig {
            d_model: 256,
            enc_blocks: 4,
            dec_blocks: 4,
            heads: 8,
            ffn_dim: 512,
            dropout: 0.1,
            view_mode: ViewMode::All,
            drawing_len: DRAWING_LEN,
            cad_len: crate::cad::DEFAULT_SEQ_LEN,
            fusion: Fusion::Concat,
            guidance: true,
        }
    }

    pub fn desk() -> Self {
        ModelConfig { d_model: 64, enc_blocks: 2, dec_blocks: 2, heads: 4, ffn_dim: 128, ..Self::full() }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [self.d_model, self.enc_blocks, self.dec_blocks, self.heads, self.ffn_dim, self.drawing_len, self.cad_len];
        if counts.contains(&0) {
            return Err(Error::Config("model sizes must be at least 1".into()));
        }
        if !self.d_model.is_multiple_of(self.heads) {
            return Err(Error::Config(format!("d_model {} not divisible by heads {}", self.d_model, self.heads)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Sets one field from its textual `key = value` form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn num<T: FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("bad value '{v}' for {k}")))
        }
        match key {
            "d_model" => self.d_model = num(key, value)?,
            "enc_blocks" => self.enc_blocks = num(key, value)?,
            "dec_blocks" => self.dec_blocks = num(key, value)?,
            "heads" => self.heads = num(key, value)?,
            "ffn_dim" => self.ffn_dim = num(key, value)?,
            "dropout" => self.dropout = num(key, value)?,
            "view_mode" => self.view_mode = value.parse()?,
            "drawing_len" => self.drawing_len = num(key, value)?,
            "cad_len" => self.cad_len = num(key, value)?,
            "fusion" => self.fusion = value.parse()?,
            "guidance" => {
                self.guidance = match value {
                    "on" | "true" => true,
                    "off" | "false" => false,
                    _ => return Err(Error::Config(format!("bad value '{value}' for guidance"))),
                }
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("d_model", self.d_model.to_string()),
            ("enc_blocks", self.enc_blocks.to_string()),
            ("dec_blocks", self.dec_blocks.to_string()),
            ("heads", self.heads.to_string()),
            ("ffn_dim", self.ffn_dim.to_string()),
            ("dropout", format!("{:?}", self.dropout)),
            ("view_mode", self.view_mode.to_string()),
            ("drawing_len", self.drawing_len.to_string()),
            ("cad_len", self.cad_len.to_string()),
            ("fusion", self.fusion.to_string()),
            ("guidance", if self.guidance { "on" } else { "off" }.to_string()),
        ]
    }
}

/// Sinusoidal position code: `sin` on even dimensions, `cos` on odd ones.
pub fn positional_encoding(i: usize, d: usize) -> Vec<f64> {
    (0..d)
        .map(|k| {
            let angle = i as f64 / 10000f64.powf((k - k % 2) as f64 / d as f64);
            if k % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct Linear {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct Norm {
    g: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
}

#[derive(Debug, Clone)]
struct EncoderBlock {
    ln1: Norm,
    attn: Attention,
    ln2: Norm,
    ff1: Linear,
    ff2: Linear,
}

#[derive(Debug, Clone)]
struct DecoderBlock {
    ln1: Norm,
    self_attn: Attention,
    ln2: Norm,
    cross_attn: Attention,
    ln3: Norm,
    ff1: Linear,
    ff2: Linear,
}

#[derive(Debug, Clone)]
struct Decoder {
    queries: usize,
    blocks: Vec<DecoderBlock>,
    ln: Norm,
}

#[derive(Debug, Clone)]
struct Layout {
    view: Option<usize>,
    cmd: usize,
    param_b: usize,
    param_a: usize,
    fusion: Option<Linear>,
    encoder: Vec<EncoderBlock>,
    enc_ln: Norm,
    cmd_decoder: Decoder,
    arg_decoder: Decoder,
    cmd_head: Linear,
    arg_head: Linear,
}

struct Builder<'a> {
    store: &'a mut ParamStore,
    rng: ChaCha8Rng,
}

impl Builder<'_> {
    fn uniform(&mut self, name: String, rows: usize, cols: usize) -> usize {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let rng = &mut self.rng;
        let m = Mat::from_shape_fn((rows, cols), |_| rng.gen_range(-a..a));
        self.store.add(name, m)
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Linear {
        let w = self.uniform(format!("{name}.weight"), fan_in, fan_out);
        let b = self.store.add(format!("{name}.bias"), Mat::zeros((1, fan_out)));
        Linear { w, b }
    }

    fn norm(&mut self, name: &str, d: usize) -> Norm {
        let g = self.store.add(format!("{name}.gamma"), Mat::ones((1, d)));
        let b = self.store.add(format!("{name}.beta"), Mat::zeros((1, d)));
        Norm { g, b }
    }

    fn attention(&mut self, name: &str, d: usize) -> Attention {
        Attention {
            q: self.linear(&format!("{name}.q"), d, d),
            k: self.linear(&format!("{name}.k"), d, d),
            v: self.linear(&format!("{name}.v"), d, d),
            o: self.linear(&format!("{name}.o"), d, d),
        }
    }

    fn decoder(&mut self, name: &str, c: &ModelConfig) -> Decoder {
        let d = c.d_model;
        let queries = self.uniform(format!("{name}.queries"), c.cad_len, d);
        let blocks = (0..c.dec_blocks)
            .map(|i| {
                let p = format!("{name}.block{i}");
                DecoderBlock {
                    ln1: self.norm(&format!("{p}.ln1"), d),
                    self_attn: self.attention(&format!("{p}.self_attn"), d),
                    ln2: self.norm(&format!("{p}.ln2"), d),
                    cross_attn: self.attention(&format!("{p}.cross_attn"), d),
                    ln3: self.norm(&format!("{p}.ln3"), d),
                    ff1: self.linear(&format!("{p}.ff1"), d, c.ffn_dim),
                    ff2: self.linear(&format!("{p}.ff2"), c.ffn_dim, d),
                }
            })
            .collect();
        let ln = self.norm(&format!("{name}.ln"), d);
        Decoder { queries, blocks, ln }
    }
}

/// One encoder input token: kind, view and argument indices plus its global
/// position in the stacked drawing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenInput {
    pub kind: usize,
    pub view: usize,
    pub bins: [usize; SVG_PARAM_COUNT],
    pub position: usize,
}

impl TokenInput {
    pub fn new(token: &SvgToken, view: ViewLabel, position: usize) -> Self {
        let mut bins = [0; SVG_PARAM_COUNT];
        for (b, p) in bins.iter_mut().zip(token.params.0) {
            *b = p as usize;
        }
        TokenInput { kind: token.kind.index(), view: view.index(), bins, position }
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    layout: Layout,
}

/// Dropout state for one forward pass; `None` means evaluation mode.
pub struct Dropout {
    rng: Option<ChaCha8Rng>,
    p: f64,
}

impl Dropout {
    pub fn eval() -> Self {
        Dropout { rng: None, p: 0.0 }
    }

    pub fn train(p: f64, seed: u64) -> Self {
        Dropout { rng: Some(ChaCha8Rng::seed_from_u64(seed)), p }
    }

    fn apply(&mut self, t: &mut Tape, x: Var) -> Var {
        match &mut self.rng {
            Some(rng) if self.p > 0.0 => {
                let keep = 1.0 - self.p;
                let dim = t.value(x).raw_dim();
                let mask = Mat::from_shape_fn(dim, |_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 });
                t.dropout(x, mask)
            }
            _ => x,
        }
    }
}

impl Model {
    /// Fresh parameters: Xavier-uniform weights, zero biases, unit norms.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::default();
        let mut b = Builder { store: &mut params, rng: ChaCha8Rng::seed_from_u64(seed) };
        let d = config.d_model;
        let view = config.view_mode.uses_view_embedding().then(|| b.uniform("embed.view".into(), VIEW_COUNT, d));
        let cmd = b.uniform("embed.cmd".into(), SVG_KINDS, d);
        let param_b = b.uniform("embed.param_b".into(), ARG_CLASSES, d);
        let param_a = b.uniform("embed.param_a".into(), SVG_PARAM_COUNT * d, d);
        let fields = if view.is_some() { 3 } else { 2 };
        let fusion = (config.fusion == Fusion::Concat).then(|| b.linear("embed.fusion", fields * d, d));
        let encoder = (0..config.enc_blocks)
            .map(|i| {
                let p = format!("encoder.block{i}");
                EncoderBlock {
                    ln1: b.norm(&format!("{p}.ln1"), d),
                    attn: b.attention(&format!("{p}.attn"), d),
                    ln2: b.norm(&format!("{p}.ln2"), d),
                    ff1: b.linear(&format!("{p}.ff1"), d, config.ffn_dim),
                    ff2: b.linear(&format!("{p}.ff2"), config.ffn_dim, d),
                }
            })
            .collect();
        let enc_ln = b.norm("encoder.ln", d);
        let cmd_decoder = b.decoder("cmd_decoder", &config);
        let arg_decoder = b.decoder("arg_decoder", &config);
        let cmd_head = b.linear("cmd_head", d, CAD_KINDS);
        let arg_head = b.linear("arg_head", d, CAD_PARAM_COUNT * ARG_CLASSES);
        let layout = Layout {
            view,
            cmd,
            param_b,
            param_a,
            fusion,
            encoder,
            enc_ln,
            cmd_decoder,
            arg_decoder,
            cmd_head,
            arg_head,
        };
        Ok(Model { config, params, layout })
    }

    /// Rebuilds a model from named tensors, checking names and shapes.
    pub fn from_named(config: ModelConfig, named: Vec<(String, Mat)>) -> Result<Self> {
        let mut model = Model::new(config, 0)?;
        let mut seen = vec![false; model.params.len()];
        for (name, m) in named {
            let idx = model
                .params
                .index_of(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected tensor '{name}'")))?;
            if model.params.values[idx].dim() != m.dim() {
                return Err(Error::Checkpoint(format!(
                    "tensor '{name}' has shape {:?}, config expects {:?}",
                    m.dim(),
                    model.params.values[idx].dim()
                )));
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::Checkpoint(format!("tensor '{name}' has non-finite values")));
            }
            model.params.values[idx] = m;
            seen[idx] = true;
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return Err(Error::Checkpoint(format!("missing tensor '{}'", model.params.names[i])));
        }
        Ok(model)
    }

    fn linear(&self, t: &mut Tape, x: Var, l: Linear) -> Var {
        let w = t.param(l.w);
        let b = t.param(l.b);
        let y = t.matmul(x, w);
        t.add_row(y, b)
    }

    fn norm(&self, t: &mut Tape, x: Var, n: Norm) -> Var {
        let g = t.param(n.g);
        let b = t.param(n.b);
        t.layer_norm(x, g, b)
    }

    fn attention(&self, t: &mut Tape, xq: Var, xkv: Var, a: &Attention) -> Var {
        let q = self.linear(t, xq, a.q);
        let k = self.linear(t, xkv, a.k);
        let v = self.linear(t, xkv, a.v);
        let dh = self.config.d_model / self.config.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let outs: Vec<Var> = (0..self.config.heads)
            .map(|h| {
                let qh = t.slice_cols(q, h * dh, dh);
                let kh = t.slice_cols(k, h * dh, dh);
                let vh = t.slice_cols(v, h * dh, dh);
                let s = t.matmul_bt(qh, kh);
                let s = t.scale(s, scale);
                let p = t.softmax(s);
                t.matmul(p, vh)
            })
            .collect();
        let o = if outs.len() == 1 { outs[0] } else { t.concat_cols(&outs) };
        self.linear(t, o, a.o)
    }

    fn feed_forward(&self, t: &mut Tape, x: Var, ff1: Linear, ff2: Linear) -> Var {
        let h = self.linear(t, x, ff1);
        let h = t.gelu(h);
        self.linear(t, h, ff2)
    }

    /// Token embeddings (rows) for `tokens`, positional code included.
    pub fn embed_on(&self, t: &mut Tape, tokens: &[TokenInput]) -> Result<Var> {
        let l = &self.layout;
        for tok in tokens {
            if tok.kind >= SVG_KINDS || tok.view >= VIEW_COUNT || tok.bins.iter().any(|&b| b >= ARG_CLASSES) {
                return Err(contract(format!("token indices out of range: {tok:?}")));
            }
        }
        let cmd_table = t.param(l.cmd);
        let kinds: Vec<usize> = tokens.iter().map(|k| k.kind).collect();
        let e_cmd = t.gather_rows(cmd_table, &kinds);
        let table_b = t.param(l.param_b);
        let slots: Vec<Var> = (0..SVG_PARAM_COUNT)
            .map(|j| {
                let idx: Vec<usize> = tokens.iter().map(|k| k.bins[j]).collect();
                t.gather_rows(table_b, &idx)
            })
            .collect();
        let flat = t.concat_cols(&slots);
        let wa = t.param(l.param_a);
        let e_param = t.matmul(flat, wa);
        let mut fields = Vec::with_capacity(3);
        if let Some(v) = l.view {
            let table = t.param(v);
            let idx: Vec<usize> = tokens.iter().map(|k| k.view).collect();
            fields.push(t.gather_rows(table, &idx));
        }
        fields.push(e_cmd);
        fields.push(e_param);
        let fused = match l.fusion {
            Some(f) => {
                let cat = t.concat_cols(&fields);
                self.linear(t, cat, f)
            }
            None => t.sum(&fields),
        };
        let d = self.config.d_model;
        let mut pe = Mat::zeros((tokens.len(), d));
        for (r, tok) in tokens.iter().enumerate() {
            for (c, v) in positional_encoding(tok.position, d).into_iter().enumerate() {
                pe[[r, c]] = v;
            }
        }
        let pe = t.input(pe);
        Ok(t.add(fused, pe))
    }

    /// Encoder stack and mean pooling; returns the `1×d` latent.
    pub fn encode_on(&self, t: &mut Tape, x: Var, drop: &mut Dropout) -> Var {
        let mut x = drop.apply(t, x);
        for b in &self.layout.encoder {
            let h = self.norm(t, x, b.ln1);
            let a = self.attention(t, h, h, &b.attn);
            let a = drop.apply(t, a);
            x = t.add(x, a);
            let h = self.norm(t, x, b.ln2);
            let f = self.feed_forward(t, h, b.ff1, b.ff2);
            let f = drop.apply(t, f);
            x = t.add(x, f);
        }
        let x = self.norm(t, x, self.layout.enc_ln);
        t.mean_rows(x)
    }

    fn run_decoder(&self, t: &mut Tape, dec: &Decoder, z: Var, drop: &mut Dropout) -> Var {
        let mut x = t.param(dec.queries);
        for b in &dec.blocks {
            let h = self.norm(t, x, b.ln1);
            let a = self.attention(t, h, h, &b.self_attn);
            let a = drop.apply(t, a);
            x = t.add(x, a);
            let h = self.norm(t, x, b.ln2);
            let c = self.attention(t, h, z, &b.cross_attn);
            let c = drop.apply(t, c);
            x = t.add(x, c);
            let h = self.norm(t, x, b.ln3);
            let f = self.feed_forward(t, h, b.ff1, b.ff2);
            let f = drop.apply(t, f);
            x = t.add(x, f);
        }
        self.norm(t, x, dec.ln)
    }

    /// Hidden state fed to the argument head.
    fn guided(&self, t: &mut Tape, h_arg: Var, h_cmd: Var) -> Var {
        if self.config.guidance {
            t.add(h_arg, h_cmd)
        } else {
            h_arg
        }
    }

    /// `(cmd_logits N_c×6, arg_logits N_c×(15·257))` from the `1×d` latent.
    pub fn decode_on(&self, t: &mut Tape, z: Var, drop: &mut Dropout) -> (Var, Var) {
        let h_cmd = self.run_decoder(t, &self.layout.cmd_decoder, z, drop);
        let h_arg = self.run_decoder(t, &self.layout.arg_decoder, z, drop);
        let cmd_logits = self.linear(t, h_cmd, self.layout.cmd_head);
        let h = self.guided(t, h_arg, h_cmd);
        let arg_logits = self.linear(t, h, self.layout.arg_head);
        (cmd_logits, arg_logits)
    }

    /// Checks that `views` are exactly the configured views in stacking order.
    pub fn check_views(&self, views: &[&DrawingSequence]) -> Result<()> {
        let want = self.config.view_mode.views();
        let got: Vec<ViewLabel> = views.iter().map(|v| v.view()).collect();
        if got != want {
            return Err(contract(format!(
                "view mode {} expects views {:?}, got {:?}",
                self.config.view_mode, want, got
            )));
        }
        Ok(())
    }

    /// Encoder inputs: the content tokens of each view plus its first EOS.
    /// Padding positions past that EOS are left out of attention and pooling.
    pub fn encoder_tokens(&self, views: &[&DrawingSequence]) -> Result<Vec<TokenInput>> {
        self.check_views(views)?;
        let mut out = Vec::new();
        for (slot, d) in views.iter().enumerate() {
            let n = (d.content_len() + 1).min(d.tokens().len());
            if n > self.config.drawing_len {
                return Err(Error::LengthExceeded { len: n, limit: self.config.drawing_len });
            }
            for (i, tok) in d.tokens()[..n].iter().enumerate() {
                out.push(TokenInput::new(tok, d.view(), slot * self.config.drawing_len + i));
            }
        }
        Ok(out)
    }

    /// Raw logits for one drawing in evaluation mode.
    pub fn logits(&self, views: &[&DrawingSequence]) -> Result<(Mat, Mat)> {
        let tokens = self.encoder_tokens(views)?;
        let mut t = Tape::new(&self.params);
        let mut drop = Dropout::eval();
        let x = self.embed_on(&mut t, &tokens)?;
        let z = self.encode_on(&mut t, x, &mut drop);
        let (c, a) = self.decode_on(&mut t, z, &mut drop);
        Ok((t.value(c).clone(), t.value(a).clone()))
    }

    pub fn infer(&self, views: &[&DrawingSequence]) -> Result<CadSequence> {
        let (c, a) = self.logits(views)?;
        predict(&c, &a)
    }
}

/// One prepared training pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub tokens: Vec<TokenInput>,
    pub kinds: Vec<usize>,
    pub arg_targets: Vec<(usize, usize, f64)>,
}

impl Sample {
    pub fn new(model: &Model, views: &[&DrawingSequence], gt: &CadSequence, alpha: f64, tol: u16) -> Result<Self> {
        if gt.len() != model.config.cad_len {
            return Err(contract(format!("target length {} but model decodes {}", gt.len(), model.config.cad_len)));
        }
        Ok(Sample {
            tokens: model.encoder_tokens(views)?,
            kinds: gt.commands().iter().map(|c| c.kind.index()).collect(),
            arg_targets: arg_targets(gt, alpha, tol),
        })
    }
}

impl Model {
    /// `cmd_loss + beta·args_loss` for one sample, recorded on `t`.
    pub fn loss_on(&self, t: &mut Tape, sample: &Sample, beta: f64, drop: &mut Dropout) -> Result<Var> {
        let n = self.config.cad_len;
        let x = self.embed_on(t, &sample.tokens)?;
        let z = self.encode_on(t, x, drop);
        let (c, a) = self.decode_on(t, z, drop);
        let cmd_targets = sample.kinds.iter().enumerate().map(|(i, &k)| (i, k, 1.0)).collect();
        let cmd = t.soft_cross_entropy(c, cmd_targets, CAD_KINDS, 1.0 / n as f64);
        let args = t.soft_cross_entropy(a, sample.arg_targets.clone(), ARG_CLASSES, beta / (n * CAD_PARAM_COUNT) as f64);
        Ok(t.add(cmd, args))
    }

    /// Loss value and parameter gradients (untouched parameters get zeros).
    pub fn loss_and_grads(&self, sample: &Sample, beta: f64, drop: &mut Dropout) -> Result<(f64, Vec<Mat>)> {
        let mut t = Tape::new(&self.params);
        let root = self.loss_on(&mut t, sample, beta, drop)?;
        let loss = t.scalar(root);
        let grads = t
            .backward(root)
            .into_iter()
            .zip(&self.params.values)
            .map(|(g, v)| g.unwrap_or_else(|| Mat::zeros(v.raw_dim())))
            .collect();
        Ok((loss, grads))
    }
}

/// Embedding of a single token at global position `position`.
pub fn embed_token(model: &Model, token: &SvgToken, view: ViewLabel, position: usize) -> Result<Vec<f64>> {
    let mut t = Tape::new(&model.params);
    let x = model.embed_on(&mut t, &[TokenInput::new(token, view, position)])?;
    Ok(t.value(x).row(0).to_vec())
}

/// `L×d` embeddings of every slot (padding included) of the stacked views.
pub fn embed_drawing(model: &Model, views: &[&DrawingSequence]) -> Result<Mat> {
    model.check_views(views)?;
    let len = model.config.drawing_len;
    let mut tokens = Vec::with_capacity(len * views.len());
    for (slot, d) in views.iter().enumerate() {
        if d.content_len() + 1 > len {
            return Err(Error::LengthExceeded { len: d.content_len() + 1, limit: len });
        }
        for i in 0..len {
            let tok = d.tokens().get(i).unwrap_or(&SvgToken::EOS);
            tokens.push(TokenInput::new(tok, d.view(), slot * len + i));
        }
    }
    let mut t = Tape::new(&model.params);
    let x = model.embed_on(&mut t, &tokens)?;
    Ok(t.value(x).clone())
}

/// Latent vector of an embedding matrix (evaluation mode).
pub fn encode(model: &Model, embeddings: &Mat) -> Result<Vec<f64>> {
    if embeddings.ncols() != model.config.d_model || embeddings.nrows() == 0 {
        return Err(contract(format!("embeddings {:?} for width {}", embeddings.dim(), model.config.d_model)));
    }
    let mut t = Tape::new(&model.params);
    let x = t.input(embeddings.clone());
    let z = model.encode_on(&mut t, x, &mut Dropout::eval());
    Ok(t.value(z).row(0).to_vec())
}

/// Command and argument logits for a latent vector (evaluation mode).
pub fn decode(model: &Model, z: &[f64]) -> Result<(Mat, Mat)> {
    if z.len() != model.config.d_model || z.iter().any(|v| !v.is_finite()) {
        return Err(contract("latent must be finite with width d_model"));
    }
    let mut t = Tape::new(&model.params);
    let zv = t.input(Mat::from_shape_vec((1, z.len()), z.to_vec()).expect("shape"));
    let (c, a) = model.decode_on(&mut t, zv, &mut Dropout::eval());
    Ok((t.value(c).clone(), t.value(a).clone()))
}

/// First index of the maximum; NaN never wins.
fn argmax(xs: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in xs.enumerate() {
        if x > best.1 {
            best = (i, x);
        }
    }
    best.0
}

/// Greedy decoding: per-position argmax of kinds and per-slot argmax of
/// argument categories, then masked and truncated at the first EOS.
pub fn predict(cmd_logits: &Mat, arg_logits: &Mat) -> Result<CadSequence> {
    let n = cmd_logits.nrows();
    if cmd_logits.ncols() != CAD_KINDS || arg_logits.dim() != (n, CAD_PARAM_COUNT * ARG_CLASSES) {
        return Err(contract(format!("logit shapes {:?} / {:?}", cmd_logits.dim(), arg_logits.dim())));
    }
    let kinds: Vec<CadKind> = cmd_logits
        .axis_iter(Axis(0))
        .map(|r| CadKind::from_index(argmax(r.iter().copied())).expect("six kinds"))
        .collect();
    let args: Vec<[u16; CAD_PARAM_COUNT]> = arg_logits
        .axis_iter(Axis(0))
        .map(|r| {
            let mut out = [0u16; CAD_PARAM_COUNT];
            for (j, o) in out.iter_mut().enumerate() {
                *o = argmax(r.iter().skip(j * ARG_CLASSES).take(ARG_CLASSES).copied()) as u16;
            }
            out
        })
        .collect();
    merge_outputs(&kinds, &args)
}
