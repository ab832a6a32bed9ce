//! Score extraction from free-form judge replies.
//!
//! The score is the first integer token that is not scale furniture. Skipped
//! tokens: both ends of a range (`1-10`, `1 to 10`), denominators (`/10`,
//! `out of 10`), percentages, numbers glued to letters (`GPT4`, `3rd`) and
//! line-leading list markers when the reply is a numbered list.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("reply contains no score")]
    NoScore,
    #[error("score `{0}` is not an integer")]
    Fractional(String),
    #[error("score {0} is outside 1..=10")]
    OutOfRange(i64),
}

impl ParseError {
    /// Unparseable replies earn one stricter re-ask; a clear out-of-range
    /// score does not.
    pub fn is_unparseable(&self) -> bool {
        !matches!(self, ParseError::OutOfRange(_))
    }
}

pub fn parse_score(reply: &str) -> Result<u8, ParseError> {
    let chars: Vec<char> = reply.chars().collect();
    let n = chars.len();
    let numbered_list = count_list_markers(&chars) >= 2;
    let mut skip_next = false;
    let mut i = 0;
    while i < n {
        if !chars[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && chars[i].is_ascii_digit() {
            i += 1;
        }
        let int_end = i;
        let mut fractional = false;
        if i + 1 < n && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
            i += 1;
            while i < n && chars[i].is_ascii_digit() {
                fractional |= chars[i] != '0';
                i += 1;
            }
        }
        let end = i;

        let glued_before = start > 0 && is_word_char(chars[start - 1]);
        let glued_after = end < n && is_word_char(chars[end]);
        if glued_before || glued_after {
            continue;
        }
        if std::mem::take(&mut skip_next) {
            continue;
        }
        if starts_range(&chars, end) {
            skip_next = true;
            continue;
        }
        if is_denominator(&chars, start) || next_non_space(&chars, end) == Some('%') {
            continue;
        }
        if numbered_list && is_list_marker(&chars, start, int_end) {
            continue;
        }
        if fractional {
            return Err(ParseError::Fractional(chars[start..end].iter().collect()));
        }

        let digits: String = chars[start..int_end].iter().collect();
        let magnitude = digits.parse::<i64>().unwrap_or(i64::MAX);
        let value = if is_negated(&chars, start) {
            -magnitude
        } else {
            magnitude
        };
        return match u8::try_from(value) {
            Ok(v) if (1..=10).contains(&v) => Ok(v),
            _ => Err(ParseError::OutOfRange(value)),
        };
    }
    Err(ParseError::NoScore)
}

fn is_word_char(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_dash(c: char) -> bool {
    matches!(c, '-' | '\u{2013}' | '\u{2014}' | '\u{2212}')
}

fn next_non_space(chars: &[char], from: usize) -> Option<char> {
    chars[from..].iter().copied().find(|c| !c.is_whitespace() || *c == '\n')
}

fn skip_inline_space(chars: &[char], mut i: usize) -> usize {
    while i < chars.len() && chars[i] != '\n' && chars[i].is_whitespace() {
        i += 1;
    }
    i
}

fn starts_range(chars: &[char], end: usize) -> bool {
    let i = skip_inline_space(chars, end);
    let after_sep = if i < chars.len() && is_dash(chars[i]) {
        i + 1
    } else if chars[i..].starts_with(&['t', 'o']) && chars.get(i + 2).is_some_and(|c| c.is_whitespace()) {
        i + 2
    } else {
        return false;
    };
    let j = skip_inline_space(chars, after_sep);
    chars.get(j).is_some_and(|c| c.is_ascii_digit())
}

fn is_denominator(chars: &[char], start: usize) -> bool {
    let before: String = chars[..start].iter().collect();
    let before = before.trim_end();
    before.ends_with('/') || before.to_lowercase().ends_with("out of")
}

fn is_negated(chars: &[char], start: usize) -> bool {
    start > 0 && is_dash(chars[start - 1]) && (start < 2 || !chars[start - 2].is_alphanumeric())
}

fn at_line_start(chars: &[char], start: usize) -> bool {
    chars[..start]
        .iter()
        .rev()
        .take_while(|c| **c != '\n')
        .all(|c| c.is_whitespace())
}

fn is_list_marker(chars: &[char], start: usize, int_end: usize) -> bool {
    at_line_start(chars, start)
        && matches!(chars.get(int_end), Some('.' | ')'))
        && chars.get(int_end + 1).is_some_and(|c| c.is_whitespace())
}

fn count_list_markers(chars: &[char]) -> usize {
    let mut count = 0;
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_ascii_digit() && (i == 0 || !chars[i - 1].is_ascii_digit()) && at_line_start(chars, i) {
            let mut j = i;
            while j < chars.len() && chars[j].is_ascii_digit() {
                j += 1;
            }
            if is_list_marker(chars, i, j) {
                count += 1;
            }
            i = j;
        } else {
            i += 1;
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_then_score() {
        assert_eq!(parse_score("1 to 10: 6"), Ok(6));
        assert_eq!(parse_score("1-10 → 6"), Ok(6));
    }

    #[test]
    fn trailing_period_is_not_a_decimal() {
        assert_eq!(parse_score("Score: 7."), Ok(7));
    }

    #[test]
    fn single_leading_number_is_a_score_not_a_list() {
        assert_eq!(parse_score("7. The reply lost most of its content."), Ok(7));
    }

    #[test]
    fn hyphenated_word_is_not_negation() {
        assert_eq!(parse_score("grade-3"), Ok(3));
        assert_eq!(parse_score("x -3"), Err(ParseError::OutOfRange(-3)));
    }
}
