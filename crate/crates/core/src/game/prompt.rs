//! Prompt rendering and response parsing.

use std::fmt::Write;

pub const SYSTEM_PROMPT: &str = "You are a helpful assistant helping play the Wikipedia link game.";

/// User prompt for one step. `history` is the visit order including the
/// current page.
pub fn render_user_prompt<H: AsRef<str>, L: AsRef<str>>(current: &str, target: &str, history: &[H], links: &[L]) -> String {
    let mut out = String::new();
    let _ = write!(
        out,
        "You are playing a game where you start at Wikipedia page \"{current}\" and want to reach page \"{target}\" by clicking links.\n\n"
    );
    out.push_str("So far, you have visited the following pages in order:\n");
    for page in history {
        out.push_str(page.as_ref());
        out.push('\n');
    }
    out.push_str("\nYou see the following possible links from the current page:\n\n");
    for (i, link) in links.iter().enumerate() {
        let _ = writeln!(out, "{i}. {}", link.as_ref());
    }
    let max = links.len().saturating_sub(1);
    let _ = write!(
        out,
        "\nWhich link should you click to get closer to the target? Reply with the number of your choice (0 to {max})."
    );
    out
}

/// Line appended to the prompt when a reply could not be parsed.
pub fn format_reminder(max_index: usize) -> String {
    format!("\n\nReply with only the number of your choice (0 to {max_index}).")
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Contents of every `\boxed{...}` in order.
pub(crate) fn boxed_contents(raw: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = raw;
    while let Some(pos) = rest.find("\\boxed{") {
        let after = &rest[pos + "\\boxed{".len()..];
        match after.find('}') {
            Some(end) => {
                out.push(&after[..end]);
                rest = &after[end + 1..];
            }
            None => break,
        }
    }
    out
}

fn parse_index(s: &str) -> Option<u64> {
    let s = s.trim().trim_start_matches('#').trim();
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

/// Standalone integers: digit runs not touching a letter, digit or
/// underscore on either side.
fn standalone_integers(raw: &str) -> impl Iterator<Item = u64> + '_ {
    let chars: Vec<(usize, char)> = raw.char_indices().collect();
    let mut found = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].1.is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && chars[i].1.is_ascii_digit() {
            i += 1;
        }
        let before_ok = start == 0 || !is_word(chars[start - 1].1);
        let after_ok = i == chars.len() || !is_word(chars[i].1);
        if before_ok && after_ok {
            let lo = chars[start].0;
            let hi = chars.get(i).map_or(raw.len(), |c| c.0);
            if let Ok(v) = raw[lo..hi].parse::<u64>() {
                found.push(v);
            }
        }
    }
    found.into_iter()
}

/// Extracts the chosen link index from a free-form reply.
///
/// A `\boxed{n}` answer wins when one is in range (the last such). Otherwise
/// the last standalone integer in `[0, max_index]` is taken.
pub fn parse_choice(raw: &str, max_index: usize) -> Option<usize> {
    let in_range = |v: u64| v <= max_index as u64;
    if let Some(v) = boxed_contents(raw)
        .into_iter()
        .rev()
        .filter_map(parse_index)
        .find(|&v| in_range(v))
    {
        return Some(v as usize);
    }
    standalone_integers(raw)
        .filter(|&v| in_range(v))
        .last()
        .map(|v| v as usize)
}

pub const REWARD_CORRECT: f64 = 1.0;
pub const REWARD_WRONG: f64 = 0.0;
pub const REWARD_UNFORMATTED: f64 = -0.5;

/// One-step training reward: format adherence plus agreement with the
/// optimal link.
pub fn score_response(raw: &str, optimal_index: usize, max_index: usize) -> f64 {
    match parse_choice(raw, max_index) {
        Some(i) if i == optimal_index => REWARD_CORRECT,
        Some(_) => REWARD_WRONG,
        None => REWARD_UNFORMATTED,
    }
}
