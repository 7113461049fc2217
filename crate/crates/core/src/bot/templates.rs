//! Text of the messages the bot sends, loaded from a TOML file with named
//! `{placeholder}`s. The bundled defaults live in `templates/default.toml`.

use serde::Deserialize;

use super::reactions::{ReactionAlphabet, MAX_ADDRESSABLE};
use crate::model::{LabelClass, Sentence};

const DEFAULT: &str = include_str!("../../templates/default.toml");

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Templates {
    pub consent_prompt: String,
    pub notification: String,
    pub suggestion_header: String,
    pub suggestion_single: String,
    pub suggestion_line: String,
    pub suggestion_multi_hint: String,
    pub suggestion_overflow: String,
    pub degraded_header: String,
    pub degraded_line: String,
}

impl Default for Templates {
    fn default() -> Self {
        Self::parse(DEFAULT).expect("bundled templates are valid")
    }
}

/// Replaces each `{key}` with its value. Unknown placeholders stay as they are.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

impl Templates {
    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    fn symbols(alphabet: &ReactionAlphabet) -> [(&'static str, &str); 7] {
        [
            ("accept", &alphabet.accept),
            ("reject", &alphabet.reject),
            ("confirm", &alphabet.confirm),
            ("problem", &alphabet.problem),
            ("cause", &alphabet.cause),
            ("solution", &alphabet.solution),
            ("other", &alphabet.other),
        ]
    }

    pub fn consent_prompt(&self, alphabet: &ReactionAlphabet) -> String {
        render(&self.consent_prompt, &Self::symbols(alphabet))
    }

    pub fn notification(&self, alphabet: &ReactionAlphabet) -> String {
        render(&self.notification, &Self::symbols(alphabet))
    }

    /// The prompt for one message. `labels[i]` is the suggestion for
    /// sentence `i`; `None` for all of them gives the degraded prompt.
    pub fn suggestion_prompt(
        &self,
        alphabet: &ReactionAlphabet,
        sentences: &[Sentence],
        labels: Option<&[LabelClass]>,
    ) -> String {
        let symbols = Self::symbols(alphabet);
        let (header, line) = match labels {
            Some(_) if sentences.len() == 1 => (&self.suggestion_header, &self.suggestion_single),
            Some(_) => (&self.suggestion_header, &self.suggestion_line),
            None => (&self.degraded_header, &self.degraded_line),
        };
        let mut lines = vec![render(header, &symbols)];
        for (i, s) in sentences.iter().enumerate().take(MAX_ADDRESSABLE) {
            let n = (i + 1).to_string();
            let (label, symbol) = match labels {
                Some(ls) => (ls[i].name(), alphabet.symbol(ls[i])),
                None => ("", ""),
            };
            let mut vars = vec![("n", n.as_str()), ("sentence", s.text.as_str()), ("label", label), ("symbol", symbol)];
            vars.extend(symbols);
            lines.push(render(line, &vars));
        }
        if sentences.len() > 1 {
            lines.push(render(&self.suggestion_multi_hint, &symbols));
        }
        if sentences.len() > MAX_ADDRESSABLE {
            lines.push(render(&self.suggestion_overflow, &symbols));
        }
        lines.join("\n")
    }
}
