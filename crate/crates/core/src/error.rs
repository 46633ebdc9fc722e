use std::path::PathBuf;

use thiserror::Error;

use crate::scene::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Camera looks straight down: the world up vector is parallel to the
    /// viewing direction and the look-at basis is undefined.
    #[error("degenerate camera pose: elevation {elevation} makes +Z parallel to the view direction")]
    DegeneratePose { elevation: f64 },

    #[error("invalid layout: {}", summarize_violations(.0))]
    InvalidLayout(Vec<Violation>),

    #[error("box {0} has no projected area")]
    OffscreenBox(u32),

    #[error("no box with id {0}")]
    UnknownBox(u32),

    #[error("alpha must lie strictly inside (0, 1), got {0}")]
    InvalidAlpha(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("noun spans of boxes {a} and {b} overlap")]
    SpanOverlap { a: usize, b: usize },

    #[error("noun span of box {index} is outside the {n_prompt} prompt tokens")]
    SpanOutOfRange { index: usize, n_prompt: usize },

    #[error("{masks} token masks supplied for {spans} noun spans")]
    MissingMask { masks: usize, spans: usize },

    #[error("personalization requires at least one appearance token")]
    NoAppearanceTokens,

    #[error("invalid generation config: {0}")]
    InvalidConfig(String),

    #[error("rejection budget exhausted after {accepted} accepted scenes ({consecutive} consecutive rejections)")]
    BudgetExhausted { accepted: usize, consecutive: usize },

    #[error("manifest has no scenes")]
    EmptyManifest,

    #[error("no scene yields an evaluable object pair")]
    NoPairs,

    #[error("{file}: {msg}")]
    Schema { file: String, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("png encoding: {0}")]
    Png(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn schema(file: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Schema {
            file: file.into(),
            msg: msg.into(),
        }
    }

    /// Stable snake_case name of the variant, for machine-readable output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DegeneratePose { .. } => "degenerate_pose",
            Error::InvalidLayout(_) => "invalid_layout",
            Error::OffscreenBox(_) => "offscreen_box",
            Error::UnknownBox(_) => "unknown_box",
            Error::InvalidAlpha(_) => "invalid_alpha",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::SpanOverlap { .. } => "span_overlap",
            Error::SpanOutOfRange { .. } => "span_out_of_range",
            Error::MissingMask { .. } => "missing_mask",
            Error::NoAppearanceTokens => "no_appearance_tokens",
            Error::InvalidConfig(_) => "invalid_config",
            Error::BudgetExhausted { .. } => "budget_exhausted",
            Error::EmptyManifest => "empty_manifest",
            Error::NoPairs => "no_pairs",
            Error::Schema { .. } => "schema",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Png(_) => "png",
        }
    }
}

fn summarize_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
