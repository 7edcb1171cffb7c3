//! Deterministic text cleaning.
//!
//! [`clean`] applies a fixed rule order so cleaned output is reproducible
//! byte for byte:
//!
//! 1. email removal (whole whitespace-delimited tokens),
//! 2. URL removal,
//! 3. IP-address removal,
//! 4. lowercasing,
//! 5. digit removal,
//! 6. removal of every remaining character outside `a-z`, `'`, whitespace,
//! 7. whitespace collapse to single spaces plus trim.
//!
//! Token patterns are deliberately simple: an email is a token with exactly
//! one `@`, non-empty sides, and a dot in the right side; a URL is a token
//! starting with `http://`, `https://`, or `www.` (ASCII case-insensitive);
//! an IP is a token of four dot-separated 1-3 digit groups. Apostrophes are
//! kept so contractions like "n't" and "'re" survive.

/// Counts of what [`clean`] removed from one input.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct CleaningReport {
    pub emails_removed: usize,
    pub urls_removed: usize,
    pub ips_removed: usize,
    /// Characters dropped by the digit and disallowed-character rules.
    pub chars_dropped: usize,
}

fn is_email(token: &str) -> bool {
    let mut parts = token.split('@');
    let (left, right) = match (parts.next(), parts.next(), parts.next()) {
        (Some(l), Some(r), None) => (l, r),
        _ => return false,
    };
    !left.is_empty() && !right.is_empty() && right.contains('.')
}

fn is_url(token: &str) -> bool {
    let lower = token.to_ascii_lowercase();
    lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
}

fn is_ip(token: &str) -> bool {
    let groups: Vec<&str> = token.split('.').collect();
    groups.len() == 4
        && groups
            .iter()
            .all(|g| (1..=3).contains(&g.len()) && g.bytes().all(|b| b.is_ascii_digit()))
}

/// Clean one paragraph. Total function: any UTF-8 input maps to a string
/// over the alphabet `{a-z, space, '}` with no leading, trailing, or
/// repeated spaces, plus a report of what was removed.
pub fn clean(text: &str) -> (String, CleaningReport) {
    let mut report = CleaningReport::default();

    // Rules 1-3 remove whole tokens, first matching rule wins.
    let mut kept: Vec<&str> = Vec::new();
    for token in text.split_whitespace() {
        if is_email(token) {
            report.emails_removed += 1;
        } else if is_url(token) {
            report.urls_removed += 1;
        } else if is_ip(token) {
            report.ips_removed += 1;
        } else {
            kept.push(token);
        }
    }

    // Rules 4-6 are per-character passes over the surviving tokens.
    let mut cleaned = String::new();
    for token in kept {
        let mut emitted = false;
        for c in token.chars().flat_map(char::to_lowercase) {
            if c.is_ascii_lowercase() || c == '\'' {
                if !emitted && !cleaned.is_empty() {
                    cleaned.push(' ');
                }
                emitted = true;
                cleaned.push(c);
            } else {
                report.chars_dropped += 1;
            }
        }
    }
    (cleaned, report)
}

/// True when `text` is already in cleaned form (a fixed point of [`clean`]).
pub fn is_clean(text: &str) -> bool {
    clean(text).0 == text
}
