//! Clinical-text tokenizer.
//!
//! Text is lowercased and split on every non-alphanumeric character, except
//! that `#` starts a token and stays attached to it (`#85`). Spans are byte
//! offsets into the original string. `.` and `;` close a sentence unless the
//! period was consumed by an abbreviation such as `periap.`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    /// Byte offset of the first character.
    pub start: usize,
    /// Byte offset one past the last character.
    pub end: usize,
    /// Zero-based sentence index within the tokenized text.
    pub sentence: usize,
}

fn is_boundary(c: char) -> bool {
    c == '.' || c == ';'
}

/// Splits without abbreviation expansion. All tokens carry sentence 0 plus
/// the number of `.`/`;` characters seen before them.
pub fn raw_tokens(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut cur: Option<(usize, String)> = None;
    let mut sentence = 0;
    let flush = |cur: &mut Option<(usize, String)>, end: usize, sentence: usize, out: &mut Vec<Token>| {
        if let Some((start, text)) = cur.take() {
            if text != "#" {
                out.push(Token {
                    text,
                    start,
                    end,
                    sentence,
                });
            }
        }
    };
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            let (_, buf) = cur.get_or_insert_with(|| (i, String::new()));
            buf.extend(c.to_lowercase());
        } else if c == '#' {
            flush(&mut cur, i, sentence, &mut out);
            cur = Some((i, "#".to_owned()));
        } else {
            flush(&mut cur, i, sentence, &mut out);
            if is_boundary(c) {
                sentence += 1;
            }
        }
    }
    flush(&mut cur, text.len(), sentence, &mut out);
    out
}

/// Abbreviation table: lowercase key (optionally ending in `.`) to its
/// expansion tokens.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Abbreviations {
    table: HashMap<String, Vec<String>>,
}

impl Abbreviations {
    /// Parses the two-column `abbrev<TAB>expansion` format. Blank lines and
    /// lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut table = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (abbrev, expansion) = line
                .split_once('\t')
                .ok_or_else(|| format!("line {}: expected abbrev<TAB>expansion", i + 1))?;
            let key = abbrev.trim().to_lowercase();
            let words: Vec<String> = raw_tokens(expansion).into_iter().map(|t| t.text).collect();
            if key.is_empty() || words.is_empty() {
                return Err(format!("line {}: empty abbreviation or expansion", i + 1));
            }
            table.insert(key, words);
        }
        Ok(Abbreviations { table })
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&[String]> {
        self.table.get(key).map(Vec::as_slice)
    }
}

/// Tokenizer with an abbreviation table applied after splitting.
#[derive(Debug, Clone, Default)]
pub struct Tokenizer {
    abbreviations: Abbreviations,
}

impl Tokenizer {
    pub fn new(abbreviations: Abbreviations) -> Self {
        Tokenizer { abbreviations }
    }

    /// Tokenizer over the bundled abbreviation table.
    pub fn bundled() -> Self {
        Tokenizer::new(
            Abbreviations::parse(crate::fixtures::ABBREVIATIONS).expect("bundled abbreviations"),
        )
    }

    pub fn abbreviations(&self) -> &Abbreviations {
        &self.abbreviations
    }

    pub fn tokenize(&self, text: &str) -> Vec<Token> {
        let raw = raw_tokens(text);
        if self.abbreviations.is_empty() {
            return raw;
        }
        let bytes = text.as_bytes();
        let mut expanded = Vec::with_capacity(raw.len());
        // Periods swallowed by an abbreviation do not end the sentence.
        let mut swallowed = 0;
        for tok in raw {
            let dotted = bytes.get(tok.end) == Some(&b'.');
            let hit = dotted
                .then(|| self.abbreviations.get(&format!("{}.", tok.text)))
                .flatten()
                .map(|w| (w, tok.end + 1))
                .or_else(|| self.abbreviations.get(&tok.text).map(|w| (w, tok.end)));
            let sentence = tok.sentence - swallowed;
            match hit {
                Some((words, end)) => {
                    for w in words {
                        expanded.push(Token {
                            text: w.clone(),
                            start: tok.start,
                            end,
                            sentence,
                        });
                    }
                    if end > tok.end {
                        swallowed += 1;
                    }
                }
                None => expanded.push(Token { sentence, ..tok }),
            }
        }
        expanded
    }
}
