use std::ops::Range;

use super::tokenize::Token;

/// Window-based negation scope rules.
#[derive(Debug, Clone, PartialEq)]
pub struct NegationRules {
    pub triggers: Vec<String>,
    pub terminators: Vec<String>,
    /// How many tokens before a mention are searched for a trigger.
    pub window: usize,
}

impl Default for NegationRules {
    fn default() -> Self {
        NegationRules {
            triggers: ["no", "denies", "without", "absent", "negative"]
                .map(String::from)
                .to_vec(),
            terminators: ["but", "however"].map(String::from).to_vec(),
            window: 4,
        }
    }
}

impl NegationRules {
    /// True iff a trigger occurs among the `window` tokens before `mention`
    /// in the same sentence, with no terminator between it and the mention.
    ///
    /// # Panics
    /// If `mention` is empty or out of bounds.
    pub fn is_negated(&self, tokens: &[Token], mention: Range<usize>) -> bool {
        assert!(mention.start < mention.end && mention.end <= tokens.len());
        let sentence = tokens[mention.start].sentence;
        let lo = mention.start.saturating_sub(self.window);
        for tok in tokens[lo..mention.start].iter().rev() {
            if tok.sentence != sentence || self.terminators.contains(&tok.text) {
                return false;
            }
            if self.triggers.contains(&tok.text) {
                return true;
            }
        }
        false
    }
}

/// [`NegationRules::is_negated`] with the default rules.
pub fn detect_negation(tokens: &[Token], mention: Range<usize>) -> bool {
    NegationRules::default().is_negated(tokens, mention)
}
