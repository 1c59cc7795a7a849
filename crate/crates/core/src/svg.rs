//! Quantized SVG command tokens and fixed-length drawing sequences.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Side length of the normalized drawing viewbox.
pub const VIEWBOX_SIZE: f64 = 200.0;
/// Number of numeric quantization levels.
pub const NUM_BINS: u16 = 256;
/// Sentinel bin for slots a command does not use.
pub const UNUSED: u16 = 256;
/// Fixed token count of one view.
pub const DRAWING_LEN: usize = 100;
pub const SVG_PARAM_COUNT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SvgKind {
    Sos,
    LineTo,
    CubicBezier,
    Eos,
}

impl SvgKind {
    pub const ALL: [SvgKind; 4] = [SvgKind::Sos, SvgKind::LineTo, SvgKind::CubicBezier, SvgKind::Eos];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SvgKind::Sos => "SOS",
            SvgKind::LineTo => "L",
            SvgKind::CubicBezier => "C",
            SvgKind::Eos => "EOS",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    /// Slots carrying coordinates for this kind: x1 y1 cx1 cy1 cx2 cy2 x2 y2.
    pub fn usage_mask(self) -> [bool; SVG_PARAM_COUNT] {
        match self {
            SvgKind::LineTo => [true, true, false, false, false, false, true, true],
            SvgKind::CubicBezier => [true; SVG_PARAM_COUNT],
            SvgKind::Sos | SvgKind::Eos => [false; SVG_PARAM_COUNT],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ViewLabel {
    Front,
    Top,
    Right,
    Isometric,
}

impl ViewLabel {
    /// Stacking order used by the encoder.
    pub const ALL: [ViewLabel; 4] = [ViewLabel::Front, ViewLabel::Top, ViewLabel::Right, ViewLabel::Isometric];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ViewLabel::Front => "front",
            ViewLabel::Top => "top",
            ViewLabel::Right => "right",
            ViewLabel::Isometric => "isometric",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        let s = s.to_ascii_lowercase();
        match s.as_str() {
            "iso" => Some(ViewLabel::Isometric),
            _ => Self::ALL.into_iter().find(|v| v.name() == s),
        }
    }
}

impl std::fmt::Display for ViewLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SvgParams(pub [u16; SVG_PARAM_COUNT]);

impl SvgParams {
    pub const UNUSED_ALL: SvgParams = SvgParams([UNUSED; SVG_PARAM_COUNT]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SvgToken {
    pub kind: SvgKind,
    pub params: SvgParams,
}

impl SvgToken {
    pub const EOS: SvgToken = SvgToken { kind: SvgKind::Eos, params: SvgParams::UNUSED_ALL };

    /// Builds a token from already-quantized bins, checking the masking rules.
    pub fn from_bins(kind: SvgKind, bins: [u16; SVG_PARAM_COUNT]) -> Result<Self> {
        let mask = kind.usage_mask();
        for (slot, (&used, &b)) in mask.iter().zip(bins.iter()).enumerate() {
            let ok = if used { b < NUM_BINS } else { b == UNUSED };
            if !ok {
                return Err(contract(format!("{} token slot {slot} holds bin {b}", kind.name())));
            }
        }
        Ok(SvgToken { kind, params: SvgParams(bins) })
    }

    pub fn is_eos(&self) -> bool {
        self.kind == SvgKind::Eos
    }
}

/// Maps a drawing coordinate in `[0, 200]` to a bin in `0..=255`.
pub fn quantize_coord(v: f64) -> Result<u16> {
    if !(0.0..=VIEWBOX_SIZE).contains(&v) {
        return Err(Error::Range { value: v, low: 0.0, high: VIEWBOX_SIZE });
    }
    // f64::round is half-away-from-zero.
    Ok((v / VIEWBOX_SIZE * 255.0).round() as u16)
}

pub fn dequantize_coord(b: u16) -> Result<f64> {
    if b == UNUSED {
        return Err(Error::Sentinel(b));
    }
    if b >= NUM_BINS {
        return Err(Error::Range { value: b as f64, low: 0.0, high: 255.0 });
    }
    Ok(b as f64 * VIEWBOX_SIZE / 255.0)
}

/// Quantizes the used slots of `raw`; slots a kind does not use are ignored.
pub fn make_token(kind: SvgKind, raw: Option<[f64; SVG_PARAM_COUNT]>) -> Result<SvgToken> {
    match (kind, raw) {
        (SvgKind::Sos | SvgKind::Eos, None) => Ok(SvgToken { kind, params: SvgParams::UNUSED_ALL }),
        (SvgKind::Sos | SvgKind::Eos, Some(_)) => {
            Err(contract(format!("{} token takes no parameters", kind.name())))
        }
        (_, None) => Err(contract(format!("{} token requires parameters", kind.name()))),
        (_, Some(raw)) => {
            let mask = kind.usage_mask();
            let mut bins = [UNUSED; SVG_PARAM_COUNT];
            for i in 0..SVG_PARAM_COUNT {
                if mask[i] {
                    bins[i] = quantize_coord(raw[i])?;
                }
            }
            Ok(SvgToken { kind, params: SvgParams(bins) })
        }
    }
}

/// One view: exactly [`DRAWING_LEN`] tokens, EOS-terminated and EOS-padded.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DrawingSequence {
    view: ViewLabel,
    tokens: Vec<SvgToken>,
}

impl DrawingSequence {
    pub fn view(&self) -> ViewLabel {
        self.view
    }

    pub fn tokens(&self) -> &[SvgToken] {
        &self.tokens
    }

    /// Tokens before the first EOS.
    pub fn content(&self) -> &[SvgToken] {
        let end = self.tokens.iter().position(SvgToken::is_eos).unwrap_or(self.tokens.len());
        &self.tokens[..end]
    }

    pub fn content_len(&self) -> usize {
        self.content().len()
    }
}

/// Appends EOS and pads with EOS to [`DRAWING_LEN`].
pub fn pad_drawing(tokens: &[SvgToken], view: ViewLabel) -> Result<DrawingSequence> {
    if tokens.len() + 1 > DRAWING_LEN {
        return Err(Error::LengthExceeded { len: tokens.len(), limit: DRAWING_LEN - 1 });
    }
    if let Some(i) = tokens.iter().position(|t| matches!(t.kind, SvgKind::Eos | SvgKind::Sos)) {
        return Err(contract(format!("content token {i} is a marker")));
    }
    for t in tokens {
        SvgToken::from_bins(t.kind, t.params.0)?;
    }
    let mut out = Vec::with_capacity(DRAWING_LEN);
    out.extend_from_slice(tokens);
    out.resize(DRAWING_LEN, SvgToken::EOS);
    Ok(DrawingSequence { view, tokens: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize_coord(0.0).unwrap(), 0);
        assert_eq!(quantize_coord(200.0).unwrap(), 255);
        assert_eq!(quantize_coord(100.0).unwrap(), 128);
        assert!(matches!(quantize_coord(-0.1), Err(Error::Range { .. })));
        assert!(matches!(quantize_coord(200.5), Err(Error::Range { .. })));
        assert!(quantize_coord(f64::NAN).is_err());
    }

    #[test]
    fn dequantize_examples() {
        assert_eq!(dequantize_coord(0).unwrap(), 0.0);
        assert_eq!(dequantize_coord(255).unwrap(), 200.0);
        assert!((dequantize_coord(128).unwrap() - 128.0 * 200.0 / 255.0).abs() < 1e-12);
        assert!(matches!(dequantize_coord(UNUSED), Err(Error::Sentinel(256))));
    }

    #[test]
    fn make_token_examples() {
        let nan = f64::NAN;
        let t = make_token(SvgKind::LineTo, Some([0.0, 0.0, nan, nan, nan, nan, 200.0, 200.0])).unwrap();
        assert_eq!(t.params.0, [0, 0, UNUSED, UNUSED, UNUSED, UNUSED, 255, 255]);
        let t = make_token(SvgKind::Eos, None).unwrap();
        assert_eq!(t.params, SvgParams::UNUSED_ALL);
        let t = make_token(SvgKind::CubicBezier, Some([100.0; 8])).unwrap();
        assert_eq!(t.params.0, [128; 8]);
        assert!(make_token(SvgKind::Eos, Some([0.0; 8])).is_err());
        assert!(make_token(SvgKind::LineTo, None).is_err());
    }

    #[test]
    fn pad_examples() {
        let line = make_token(SvgKind::LineTo, Some([1.0; 8])).unwrap();
        let d = pad_drawing(&vec![line; 99], ViewLabel::Top).unwrap();
        assert_eq!(d.tokens().len(), DRAWING_LEN);
        assert_eq!(d.content_len(), 99);
        assert!(d.tokens()[99].is_eos());

        let d = pad_drawing(&[], ViewLabel::Front).unwrap();
        assert!(d.tokens().iter().all(SvgToken::is_eos));
        assert_eq!(d.tokens().len(), DRAWING_LEN);

        assert!(matches!(
            pad_drawing(&vec![line; 101], ViewLabel::Front),
            Err(Error::LengthExceeded { .. })
        ));
        assert!(pad_drawing(&vec![line; 100], ViewLabel::Front).is_err());
    }

    #[test]
    fn bins_roundtrip_exhaustive() {
        for b in 0..NUM_BINS {
            assert_eq!(quantize_coord(dequantize_coord(b).unwrap()).unwrap(), b);
        }
    }

    fn arb_token() -> impl Strategy<Value = SvgToken> {
        (prop::bool::ANY, prop::array::uniform8(0.0f64..=200.0)).prop_map(|(cubic, raw)| {
            let kind = if cubic { SvgKind::CubicBezier } else { SvgKind::LineTo };
            make_token(kind, Some(raw)).unwrap()
        })
    }

    proptest! {
        #[test]
        fn half_bin_bound(v in 0.0f64..=200.0) {
            let back = dequantize_coord(quantize_coord(v).unwrap()).unwrap();
            prop_assert!((back - v).abs() <= 100.0 / 255.0 + 1e-9);
        }

        #[test]
        fn masking_holds(t in arb_token()) {
            let mask = t.kind.usage_mask();
            for i in 0..8 {
                prop_assert_eq!(mask[i], t.params.0[i] != UNUSED);
            }
        }

        #[test]
        fn padding_idempotent(tokens in prop::collection::vec(arb_token(), 0..99)) {
            let d = pad_drawing(&tokens, ViewLabel::Right).unwrap();
            let again = pad_drawing(d.content(), ViewLabel::Right).unwrap();
            prop_assert_eq!(d, again);
        }
    }
}
