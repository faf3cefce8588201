//! Character-level token helpers shared by rule matching, mining and word repair.

use crate::corpus::MARKER;

/// Characters that delimit a whole token: whitespace, ASCII punctuation, the
/// Bangla danda/double danda and general punctuation.
pub(crate) fn is_boundary(c: char) -> bool {
    c.is_whitespace()
        || (c.is_ascii_punctuation() && c != MARKER)
        || matches!(
            c,
            '\u{0964}' | '\u{0965}' | '\u{2010}'..='\u{205E}' | '\u{00AB}' | '\u{00BB}'
        )
}

/// `(start, end)` char ranges of maximal non-whitespace runs.
pub(crate) fn whitespace_tokens(chars: &[char]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in chars.iter().enumerate() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, chars.len()));
    }
    out
}

/// Start indices of non-overlapping occurrences of `needle` in `hay`, scanning
/// left to right. With `whole_token`, an occurrence must be flanked by a
/// boundary character or a string edge on both sides.
pub(crate) fn find_occurrences(hay: &[char], needle: &[char], whole_token: bool) -> Vec<usize> {
    let mut out = Vec::new();
    if needle.is_empty() || needle.len() > hay.len() {
        return out;
    }
    let mut i = 0;
    while i + needle.len() <= hay.len() {
        let end = i + needle.len();
        let hit = hay[i..end] == *needle
            && (!whole_token
                || ((i == 0 || is_boundary(hay[i - 1]))
                    && (end == hay.len() || is_boundary(hay[end]))));
        if hit {
            out.push(i);
            i = end;
        } else {
            i += 1;
        }
    }
    out
}

/// A whitespace token split into leading markers, body and trailing markers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct MarkedToken<'a> {
    pub leading: &'a str,
    pub body: &'a str,
    pub trailing: &'a str,
}

impl<'a> MarkedToken<'a> {
    pub fn split(token: &'a str) -> Self {
        let body_start = token.len() - token.trim_start_matches(MARKER).len();
        let (leading, rest) = token.split_at(body_start);
        let body = rest.trim_end_matches(MARKER);
        let trailing = &rest[body.len()..];
        MarkedToken {
            leading,
            body,
            trailing,
        }
    }

    /// True when the token is nothing but markers.
    pub fn is_marker_only(&self) -> bool {
        self.body.is_empty()
    }

    /// True when a marker sits strictly inside the body (`ca$t$`).
    pub fn has_inner_marker(&self) -> bool {
        self.body.contains(MARKER)
    }
}
