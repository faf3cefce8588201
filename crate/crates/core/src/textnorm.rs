//! Text normalization applied identically to inputs, gold and model outputs.

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

/// Normalization switches. One configuration is used for a whole run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NormConfig {
    /// Replace each newline (`\n`, `\r\n` or `\r`) with a single space.
    pub strip_inner_newlines: bool,
    /// Apply Unicode canonical composition (NFC).
    pub unicode_nfc: bool,
    /// Collapse runs of spaces into one. Off by default: extra spaces can be
    /// the very error a gold span marks.
    pub collapse_spaces: bool,
}

impl Default for NormConfig {
    fn default() -> Self {
        NormConfig {
            strip_inner_newlines: true,
            unicode_nfc: true,
            collapse_spaces: false,
        }
    }
}

impl NormConfig {
    /// All transformations disabled.
    pub fn identity() -> Self {
        NormConfig {
            strip_inner_newlines: false,
            unicode_nfc: false,
            collapse_spaces: false,
        }
    }
}

pub fn normalize(text: &str, cfg: &NormConfig) -> String {
    let mut out = if cfg.strip_inner_newlines {
        replace_newlines(text)
    } else {
        text.to_owned()
    };
    if cfg.unicode_nfc {
        out = out.nfc().collect();
    }
    if cfg.collapse_spaces {
        out = collapse_spaces(&out);
    }
    out
}

fn replace_newlines(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\r' => {
                chars.next_if_eq(&'\n');
                out.push(' ');
            }
            '\n' => out.push(' '),
            _ => out.push(c),
        }
    }
    out
}

fn collapse_spaces(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut prev_space = false;
    for c in text.chars() {
        if c == ' ' && prev_space {
            continue;
        }
        prev_space = c == ' ';
        out.push(c);
    }
    out
}
