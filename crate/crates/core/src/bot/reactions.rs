//! Reaction symbols and how a reaction on a suggestion prompt is read.
//!
//! A prompt for a single-sentence message takes a bare symbol. For longer
//! messages the symbol must be prefixed with the sentence number, either as
//! a keycap emoji (`2️⃣👍`) or a plain digit (`2👍`). Numbers run from 1 to 9.

use serde::{Deserialize, Serialize};

use crate::model::LabelClass;

/// Sentences beyond this number cannot be addressed by a reaction.
pub const MAX_ADDRESSABLE: usize = 9;

const KEYCAP: &str = "\u{FE0F}\u{20E3}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReactionAlphabet {
    pub accept: String,
    pub reject: String,
    pub confirm: String,
    pub problem: String,
    pub cause: String,
    pub solution: String,
    pub other: String,
}

impl Default for ReactionAlphabet {
    fn default() -> Self {
        Self {
            accept: "✅".into(),
            reject: "❌".into(),
            confirm: "👍".into(),
            problem: "❗".into(),
            cause: "🔍".into(),
            solution: "🔧".into(),
            other: "💬".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReactionIntent {
    Confirm,
    Label(LabelClass),
}

impl ReactionAlphabet {
    pub fn symbol(&self, label: LabelClass) -> &str {
        match label {
            LabelClass::Problem => &self.problem,
            LabelClass::Cause => &self.cause,
            LabelClass::Solution => &self.solution,
            LabelClass::Other => &self.other,
        }
    }

    /// Every symbol must be non-empty, distinct and not start with a digit.
    pub fn validate(&self) -> Result<(), String> {
        let all = [&self.accept, &self.reject, &self.confirm, &self.problem, &self.cause, &self.solution, &self.other];
        for (i, s) in all.iter().enumerate() {
            if s.trim().is_empty() {
                return Err("reaction symbols must not be empty".into());
            }
            if s.starts_with(|c: char| c.is_ascii_digit()) {
                return Err(format!("reaction symbol {s:?} starts with a digit"));
            }
            if all[..i].contains(s) {
                return Err(format!("reaction symbol {s:?} is used twice"));
            }
        }
        Ok(())
    }

    fn intent(&self, symbol: &str) -> Option<ReactionIntent> {
        if symbol == self.confirm {
            return Some(ReactionIntent::Confirm);
        }
        LabelClass::ALL
            .into_iter()
            .find(|l| self.symbol(*l) == symbol)
            .map(ReactionIntent::Label)
    }

    /// Reads a reaction on a prompt covering `sentences` sentences. Returns
    /// the 0-based sentence index and the intent, or `None` if the reaction
    /// does not address exactly one sentence.
    pub fn parse(&self, raw: &str, sentences: usize) -> Option<(usize, ReactionIntent)> {
        let raw = raw.trim();
        let (ordinal, rest) = match raw.chars().next() {
            Some(c @ '1'..='9') => {
                let rest = &raw[1..];
                (Some(c as usize - '0' as usize), rest.strip_prefix(KEYCAP).unwrap_or(rest))
            }
            _ => (None, raw),
        };
        let intent = self.intent(rest)?;
        let index = match (ordinal, sentences) {
            (None, 1) => 0,
            (None, _) => return None,
            (Some(n), _) if n <= sentences => n - 1,
            (Some(_), _) => return None,
        };
        Some((index, intent))
    }

    /// The symbol a user would send for sentence `index` of a prompt.
    pub fn compose(&self, index: usize, sentences: usize, symbol: &str) -> String {
        if sentences == 1 {
            symbol.to_string()
        } else {
            format!("{}{KEYCAP}{symbol}", index + 1)
        }
    }
}
