//! Token-level attention masks that bind each box's condition tokens to the
//! noun tokens of its object.
//!
//! The token sequence is `[p | x_t | z | v]`: prompt tokens, image tokens,
//! condition-image tokens and (optionally) appearance tokens. `x_t` and `z`
//! share one spatial grid. Entry `(q, k)` of a mask is `true` when query `q`
//! may attend key `k`.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Mask;
use crate::render::{render_oscr, RenderOptions};
use crate::scene::{NounSpan, SceneLayout};

/// Latent downsampling (8) times patchify (2).
pub const DEFAULT_PATCH_PX: u32 = 16;

const MAGIC: &[u8; 4] = b"OSCM";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Sector {
    #[serde(rename = "p")]
    Prompt,
    #[serde(rename = "x_t")]
    Image,
    #[serde(rename = "z")]
    Condition,
    #[serde(rename = "v")]
    Appearance,
}

impl Sector {
    pub const ALL: [Sector; 4] = [
        Sector::Prompt,
        Sector::Image,
        Sector::Condition,
        Sector::Appearance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Sector::Prompt => "p",
            Sector::Image => "x_t",
            Sector::Condition => "z",
            Sector::Appearance => "v",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenLayout {
    pub n_prompt: usize,
    pub rows: usize,
    pub cols: usize,
    pub n_appearance: usize,
    pub patch_px: u32,
}

impl TokenLayout {
    /// Grid for an image of the given size; both sides must be multiples of
    /// `patch_px`.
    pub fn for_image(
        n_prompt: usize,
        width: u32,
        height: u32,
        patch_px: u32,
        n_appearance: usize,
    ) -> Result<Self> {
        if patch_px == 0 || !width.is_multiple_of(patch_px) || !height.is_multiple_of(patch_px) {
            return Err(Error::DimensionMismatch(format!(
                "image {width}x{height} is not divisible into {patch_px}px patches"
            )));
        }
        Ok(Self {
            n_prompt,
            rows: (height / patch_px) as usize,
            cols: (width / patch_px) as usize,
            n_appearance,
            patch_px,
        })
    }

    pub fn n_spatial(&self) -> usize {
        self.rows * self.cols
    }

    pub fn total(&self) -> usize {
        self.n_prompt + 2 * self.n_spatial() + self.n_appearance
    }

    pub fn range(&self, sector: Sector) -> Range<usize> {
        let n = self.n_spatial();
        let p = self.n_prompt;
        match sector {
            Sector::Prompt => 0..p,
            Sector::Image => p..p + n,
            Sector::Condition => p + n..p + 2 * n,
            Sector::Appearance => p + 2 * n..self.total(),
        }
    }

    pub fn sectors(&self) -> Vec<(String, Range<usize>)> {
        Sector::ALL
            .iter()
            .map(|&s| (s.name().to_string(), self.range(s)))
            .collect()
    }

    /// Sequence index of the condition token at grid cell `g`.
    pub fn condition_token(&self, g: usize) -> usize {
        self.n_prompt + self.n_spatial() + g
    }
}

/// Spatial tokens covered by one box.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TokenMask {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<bool>,
}

impl TokenMask {
    pub fn empty(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            cells: vec![false; rows * cols],
        }
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            cells: vec![true; rows * cols],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.cols + col]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

/// A token is covered when any pixel of its patch is set.
pub fn token_mask_from_pixels(mask: &Mask, patch_px: u32) -> Result<TokenMask> {
    if patch_px == 0 || !mask.width.is_multiple_of(patch_px) || !mask.height.is_multiple_of(patch_px) {
        return Err(Error::DimensionMismatch(format!(
            "mask {}x{} is not divisible into {patch_px}px patches",
            mask.width, mask.height
        )));
    }
    let cols = (mask.width / patch_px) as usize;
    let rows = (mask.height / patch_px) as usize;
    let mut tm = TokenMask::empty(rows, cols);
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.get(x, y) {
                tm.cells[(y / patch_px) as usize * cols + (x / patch_px) as usize] = true;
            }
        }
    }
    Ok(tm)
}

/// Dense square boolean matrix, one bit per entry.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AttentionMask {
    n: usize,
    words_per_row: usize,
    words: Vec<u64>,
}

impl AttentionMask {
    pub fn filled(n: usize, value: bool) -> Self {
        let words_per_row = n.div_ceil(64);
        let mut m = Self {
            n,
            words_per_row,
            words: vec![0; n * words_per_row],
        };
        if value {
            for q in 0..n {
                m.set_range(q, 0..n, true);
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, q: usize, k: usize) -> bool {
        assert!(q < self.n && k < self.n, "mask index out of range");
        self.words[q * self.words_per_row + k / 64] >> (k % 64) & 1 == 1
    }

    pub fn set(&mut self, q: usize, k: usize, v: bool) {
        assert!(q < self.n && k < self.n, "mask index out of range");
        let w = &mut self.words[q * self.words_per_row + k / 64];
        if v {
            *w |= 1 << (k % 64);
        } else {
            *w &= !(1 << (k % 64));
        }
    }

    pub fn set_range(&mut self, q: usize, keys: Range<usize>, v: bool) {
        for k in keys {
            self.set(q, k, v);
        }
    }

    /// Allowed entries in the block `queries x keys`.
    pub fn count(&self, queries: Range<usize>, keys: Range<usize>) -> usize {
        queries
            .map(|q| keys.clone().filter(|&k| self.get(q, k)).count())
            .sum()
    }

    pub fn count_allowed(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// `OSCM` magic, rows and cols as little-endian u16, then row-major bits,
    /// least significant bit first within each byte, zero padded at the end.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let n16 = u16::try_from(self.n)
            .map_err(|_| Error::DimensionMismatch(format!("{} tokens exceed the file format", self.n)))?;
        let mut out = Vec::with_capacity(8 + (self.n * self.n).div_ceil(8));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&n16.to_le_bytes());
        out.extend_from_slice(&n16.to_le_bytes());
        let mut byte = 0u8;
        let mut nbits = 0;
        for q in 0..self.n {
            for k in 0..self.n {
                if self.get(q, k) {
                    byte |= 1 << nbits;
                }
                nbits += 1;
                if nbits == 8 {
                    out.push(byte);
                    byte = 0;
                    nbits = 0;
                }
            }
        }
        if nbits > 0 {
            out.push(byte);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::schema("mask", m);
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(bad("missing OSCM header"));
        }
        let rows = u16::from_le_bytes([bytes[4], bytes[5]]) as usize;
        let cols = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
        if rows != cols {
            return Err(bad("mask is not square"));
        }
        let body = &bytes[8..];
        if body.len() != (rows * cols).div_ceil(8) {
            return Err(bad("payload length does not match header"));
        }
        let mut m = Self::filled(rows, false);
        for q in 0..rows {
            for k in 0..cols {
                let i = q * cols + k;
                if body[i / 8] >> (i % 8) & 1 == 1 {
                    m.set(q, k, true);
                }
            }
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::image::write_file(path, &self.to_bytes()?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn check_spans(tokens: &TokenLayout, spans: &[NounSpan]) -> Result<()> {
    for (i, s) in spans.iter().enumerate() {
        if s.is_empty() || s.end > tokens.n_prompt {
            return Err(Error::SpanOutOfRange {
                index: i,
                n_prompt: tokens.n_prompt,
            });
        }
        for (j, o) in spans[..i].iter().enumerate() {
            if s.overlaps(o) {
                return Err(Error::SpanOverlap { a: j, b: i });
            }
        }
    }
    Ok(())
}

fn check_grid(tokens: &TokenLayout, masks: &[TokenMask]) -> Result<()> {
    for m in masks {
        if m.rows != tokens.rows || m.cols != tokens.cols {
            return Err(Error::DimensionMismatch(format!(
                "token mask {}x{} does not match the {}x{} token grid",
                m.rows, m.cols, tokens.rows, tokens.cols
            )));
        }
    }
    Ok(())
}

/// Builds the binding mask.
///
/// Starting from all-allowed: condition tokens never attend image tokens; a
/// condition token may attend box `i`'s noun span only if it lies inside
/// box `i`'s token mask, so tokens in an intersection see every covering
/// box's nouns and tokens outside all boxes see no noun at all. Non-noun
/// prompt tokens stay visible to every condition token, and all other
/// sectors are left untouched.
pub fn build_attention_mask(
    tokens: &TokenLayout,
    token_masks: &[TokenMask],
    noun_spans: &[NounSpan],
) -> Result<AttentionMask> {
    if token_masks.len() != noun_spans.len() {
        return Err(Error::MissingMask {
            masks: token_masks.len(),
            spans: noun_spans.len(),
        });
    }
    check_spans(tokens, noun_spans)?;
    check_grid(tokens, token_masks)?;

    let mut m = AttentionMask::filled(tokens.total(), true);
    let image = tokens.range(Sector::Image);
    for g in 0..tokens.n_spatial() {
        let q = tokens.condition_token(g);
        m.set_range(q, image.clone(), false);
        for (tm, span) in token_masks.iter().zip(noun_spans) {
            if !tm.cells[g] {
                m.set_range(q, span.start..span.end, false);
            }
        }
    }
    Ok(m)
}

/// One reference object: its appearance tokens are bound to the box whose
/// token mask is given.
#[derive(Clone, Debug)]
pub struct AppearanceTarget<'a> {
    pub token_mask: &'a TokenMask,
    pub n_tokens: usize,
}

/// Binds appearance tokens to boxes. The appearance sector is split into
/// consecutive segments, one per target; condition tokens inside a target's
/// mask may attend its segment and nothing else in `v`. Appearance queries
/// are blocked from image tokens. Entries outside the `v` rows and columns
/// are copied from `base` unchanged.
pub fn build_personalization_mask(
    base: &AttentionMask,
    tokens: &TokenLayout,
    targets: &[AppearanceTarget<'_>],
) -> Result<AttentionMask> {
    let n_tokens: usize = targets.iter().map(|t| t.n_tokens).sum();
    if tokens.n_appearance == 0 || targets.is_empty() || n_tokens == 0 {
        return Err(Error::NoAppearanceTokens);
    }
    if n_tokens != tokens.n_appearance {
        return Err(Error::DimensionMismatch(format!(
            "targets carry {n_tokens} appearance tokens, layout has {}",
            tokens.n_appearance
        )));
    }
    if base.len() != tokens.total() {
        return Err(Error::DimensionMismatch(format!(
            "base mask has {} tokens, layout has {}",
            base.len(),
            tokens.total()
        )));
    }
    for t in targets {
        check_grid(tokens, std::slice::from_ref(t.token_mask))?;
    }

    let mut m = base.clone();
    let appearance = tokens.range(Sector::Appearance);
    let mut start = appearance.start;
    for t in targets {
        let segment = start..start + t.n_tokens;
        for g in 0..tokens.n_spatial() {
            m.set_range(tokens.condition_token(g), segment.clone(), t.token_mask.cells[g]);
        }
        start = segment.end;
    }
    for q in appearance {
        m.set_range(q, tokens.range(Sector::Image), false);
    }
    Ok(m)
}

/// Renders `layout`, derives per-box token masks from the amodal silhouettes
/// and builds the binding mask. With `personalize` non-empty the
/// `n_appearance` tokens are split evenly over those box ids (earlier ids
/// take the remainder) and bound to their boxes.
pub fn layout_attention_mask(
    layout: &SceneLayout,
    patch_px: u32,
    personalize: &[u32],
    n_appearance: usize,
) -> Result<(AttentionMask, TokenLayout)> {
    let tokens = TokenLayout::for_image(
        layout.prompt_token_count(),
        layout.camera.width,
        layout.camera.height,
        patch_px,
        n_appearance,
    )?;
    let out = render_oscr(layout, &RenderOptions::default())?;
    let token_masks = out
        .amodal_masks
        .iter()
        .map(|m| token_mask_from_pixels(m, patch_px))
        .collect::<Result<Vec<_>>>()?;
    let spans: Vec<NounSpan> = out
        .box_ids()
        .iter()
        .filter_map(|&id| layout.box_by_id(id).map(|b| b.noun_span))
        .collect();
    let base = build_attention_mask(&tokens, &token_masks, &spans)?;
    if personalize.is_empty() {
        if n_appearance > 0 {
            return Err(Error::DimensionMismatch(format!(
                "{n_appearance} appearance tokens but no personalization target"
            )));
        }
        return Ok((base, tokens));
    }
    let k = personalize.len();
    let mut targets = Vec::with_capacity(k);
    for (i, &id) in personalize.iter().enumerate() {
        let idx = out.index_of(id).ok_or(Error::UnknownBox(id))?;
        let n_tokens = n_appearance / k + usize::from(i < n_appearance % k);
        if n_tokens == 0 {
            return Err(Error::NoAppearanceTokens);
        }
        targets.push(AppearanceTarget {
            token_mask: &token_masks[idx],
            n_tokens,
        });
    }
    let mask = build_personalization_mask(&base, &tokens, &targets)?;
    Ok((mask, tokens))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectorSpan {
    pub name: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSummary {
    pub tokens: usize,
    pub allowed: usize,
    pub sectors: Vec<SectorSpan>,
    /// Allowed entries per `"query->key"` sector pair.
    pub pairs: BTreeMap<String, usize>,
}

impl MaskSummary {
    pub fn pair(&self, query: &str, key: &str) -> Option<usize> {
        self.pairs.get(&format!("{query}->{key}")).copied()
    }
}

/// Counts allowed entries for every pair of the given sectors.
pub fn summarize_mask(mask: &AttentionMask, sectors: &[(String, Range<usize>)]) -> MaskSummary {
    let mut pairs = BTreeMap::new();
    for (qn, qr) in sectors {
        for (kn, kr) in sectors {
            pairs.insert(format!("{qn}->{kn}"), mask.count(qr.clone(), kr.clone()));
        }
    }
    MaskSummary {
        tokens: mask.len(),
        allowed: mask.count_allowed(),
        sectors: sectors
            .iter()
            .map(|(name, r)| SectorSpan {
                name: name.clone(),
                start: r.start,
                end: r.end,
            })
            .collect(),
        pairs,
    }
}
