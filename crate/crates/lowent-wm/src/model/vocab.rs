//! Vocabularies, tokenization and corpus ingestion.
//!
//! Two built-in tokenizers cover desk-scale experiments: a
//! whitespace+punctuation splitter (words and single punctuation marks become
//! tokens, ids assigned in first-appearance order) and a byte-level tokenizer
//! (each byte is its own id, vocabulary fixed at 256). Corpora are UTF-8 text
//! files (one document per non-empty line) or JSONL files with a `text`
//! field per line.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TokenId;
use crate::error::{Error, Result};

/// How surface strings are joined when translating ids back to text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JoinRule {
    /// Single space between tokens (whitespace+punctuation tokenizer).
    SpaceSeparated,
    /// Byte-exact concatenation (byte-level tokenizer).
    Concat,
}

/// Built-in tokenizer selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerKind {
    WhitespacePunct,
    ByteLevel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VocabularyRepr {
    tokenizer: TokenizerKind,
    join: JoinRule,
    surfaces: Vec<String>,
}

/// Bijective mapping between dense token ids and surface strings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokenizer: TokenizerKind,
    join: JoinRule,
    surfaces: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, TokenId>,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(repr: VocabularyRepr) -> Self {
        let index = repr
            .surfaces
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as TokenId))
            .collect();
        Vocabulary {
            tokenizer: repr.tokenizer,
            join: repr.join,
            surfaces: repr.surfaces,
            index,
        }
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            tokenizer: v.tokenizer,
            join: v.join,
            surfaces: v.surfaces,
        }
    }
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.tokenizer == other.tokenizer
            && self.join == other.join
            && self.surfaces == other.surfaces
    }
}

impl Vocabulary {
    /// Builds a vocabulary and tokenized documents from a corpus in one pass.
    /// Ids are assigned in first-appearance order, so the result is
    /// deterministic in the document order.
    pub fn build(kind: TokenizerKind, docs: &[String]) -> Result<(Vocabulary, Vec<Vec<TokenId>>)> {
        match kind {
            TokenizerKind::ByteLevel => {
                let vocab = Vocabulary::byte_level();
                let seqs = docs
                    .iter()
                    .map(|d| d.bytes().map(|b| b as TokenId).collect())
                    .collect();
                Ok((vocab, seqs))
            }
            TokenizerKind::WhitespacePunct => {
                let mut surfaces: Vec<String> = Vec::new();
                let mut index: HashMap<String, TokenId> = HashMap::new();
                let mut seqs = Vec::with_capacity(docs.len());
                for doc in docs {
                    let mut ids = Vec::new();
                    for piece in split_whitespace_punct(doc) {
                        let id = *index.entry(piece.to_string()).or_insert_with(|| {
                            surfaces.push(piece.to_string());
                            (surfaces.len() - 1) as TokenId
                        });
                        ids.push(id);
                    }
                    seqs.push(ids);
                }
                if surfaces.is_empty() {
                    return Err(Error::input("corpus produced an empty vocabulary"));
                }
                Ok((
                    Vocabulary {
                        tokenizer: TokenizerKind::WhitespacePunct,
                        join: JoinRule::SpaceSeparated,
                        surfaces,
                        index,
                    },
                    seqs,
                ))
            }
        }
    }

    /// Fixed 256-entry byte vocabulary. Surfaces are display forms only;
    /// translation works on the raw byte values.
    pub fn byte_level() -> Vocabulary {
        let surfaces: Vec<String> = (0u16..256)
            .map(|b| {
                let b = b as u8;
                if b.is_ascii_graphic() || b == b' ' {
                    (b as char).to_string()
                } else {
                    format!("\\x{b:02x}")
                }
            })
            .collect();
        let index = surfaces
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as TokenId))
            .collect();
        Vocabulary {
            tokenizer: TokenizerKind::ByteLevel,
            join: JoinRule::Concat,
            surfaces,
            index,
        }
    }

    /// Placeholder vocabulary ("t0", "t1", ...) for synthetic models.
    pub fn synthetic(size: usize) -> Vocabulary {
        let surfaces: Vec<String> = (0..size).map(|i| format!("t{i}")).collect();
        let index = surfaces
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as TokenId))
            .collect();
        Vocabulary {
            tokenizer: TokenizerKind::WhitespacePunct,
            join: JoinRule::SpaceSeparated,
            surfaces,
            index,
        }
    }

    pub fn size(&self) -> usize {
        self.surfaces.len()
    }

    pub fn join_rule(&self) -> JoinRule {
        self.join
    }

    pub fn tokenizer_kind(&self) -> TokenizerKind {
        self.tokenizer
    }

    pub fn surface(&self, id: TokenId) -> Result<&str> {
        self.surfaces
            .get(id as usize)
            .map(String::as_str)
            .ok_or_else(|| {
                Error::input(format!(
                    "token id {id} out of range for vocabulary of size {}",
                    self.surfaces.len()
                ))
            })
    }

    pub fn id_of(&self, surface: &str) -> Option<TokenId> {
        self.index.get(surface).copied()
    }

    /// Tokenizes text into ids of this vocabulary. Unknown pieces are input
    /// errors (the vocabulary is closed).
    pub fn tokenize(&self, text: &str) -> Result<Vec<TokenId>> {
        match self.tokenizer {
            TokenizerKind::ByteLevel => Ok(text.bytes().map(|b| b as TokenId).collect()),
            TokenizerKind::WhitespacePunct => split_whitespace_punct(text)
                .into_iter()
                .map(|piece| {
                    self.id_of(&piece)
                        .ok_or_else(|| Error::input(format!("unknown token {piece:?}")))
                })
                .collect(),
        }
    }

    /// Maps ids back to text using the vocabulary's join rule. The result
    /// re-tokenizes to the same id sequence.
    pub fn translate(&self, tokens: &[TokenId]) -> Result<String> {
        match self.tokenizer {
            TokenizerKind::ByteLevel => {
                let mut bytes = Vec::with_capacity(tokens.len());
                for &t in tokens {
                    if t >= 256 {
                        return Err(Error::input(format!(
                            "token id {t} out of range for byte vocabulary"
                        )));
                    }
                    bytes.push(t as u8);
                }
                String::from_utf8(bytes)
                    .map_err(|e| Error::format(format!("byte tokens are not valid UTF-8: {e}")))
            }
            TokenizerKind::WhitespacePunct => {
                let mut pieces = Vec::with_capacity(tokens.len());
                for &t in tokens {
                    pieces.push(self.surface(t)?);
                }
                Ok(match self.join {
                    JoinRule::SpaceSeparated => pieces.join(" "),
                    JoinRule::Concat => pieces.concat(),
                })
            }
        }
    }
}

/// Splits text into word tokens (alphanumeric/underscore runs) and
/// single-character punctuation tokens; whitespace separates and is dropped.
fn split_whitespace_punct(text: &str) -> Vec<String> {
    let mut pieces = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() || ch == '_' {
            word.push(ch);
        } else {
            if !word.is_empty() {
                pieces.push(std::mem::take(&mut word));
            }
            if !ch.is_whitespace() {
                pieces.push(ch.to_string());
            }
        }
    }
    if !word.is_empty() {
        pieces.push(word);
    }
    pieces
}

/// Reads a corpus file: `.jsonl` (or a first line starting with `{`) is
/// parsed as JSONL with a `text` field; anything else is plain UTF-8 text
/// with one document per non-empty line.
pub fn read_corpus(path: &Path) -> Result<Vec<String>> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
    let looks_jsonl = path.extension().map(|e| e == "jsonl").unwrap_or(false)
        || raw.trim_start().starts_with('{');
    let mut docs = Vec::new();
    if looks_jsonl {
        for (lineno, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value = serde_json::from_str(line).map_err(|e| {
                Error::format(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
            let text = value.get("text").and_then(|v| v.as_str()).ok_or_else(|| {
                Error::format(format!(
                    "{}:{}: missing string field \"text\"",
                    path.display(),
                    lineno + 1
                ))
            })?;
            docs.push(text.to_string());
        }
    } else {
        for line in raw.lines() {
            if !line.trim().is_empty() {
                docs.push(line.to_string());
            }
        }
    }
    if docs.is_empty() {
        return Err(Error::input(format!(
            "{}: corpus contains no documents",
            path.display()
        )));
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn word_vocab(text: &str) -> (Vocabulary, Vec<Vec<TokenId>>) {
        Vocabulary::build(TokenizerKind::WhitespacePunct, &[text.to_string()]).unwrap()
    }

    #[test]
    fn translate_empty_is_empty_string() {
        let (vocab, _) = word_vocab("a b");
        assert_eq!(vocab.translate(&[]).unwrap(), "");
    }

    #[test]
    fn translate_joins_with_spaces() {
        let (vocab, seqs) = word_vocab("import numpy as");
        assert_eq!(vocab.translate(&seqs[0]).unwrap(), "import numpy as");
    }

    #[test]
    fn punctuation_becomes_its_own_token() {
        let (vocab, seqs) = word_vocab("f(x, y)");
        let pieces: Vec<&str> = seqs[0].iter().map(|&t| vocab.surface(t).unwrap()).collect();
        assert_eq!(pieces, vec!["f", "(", "x", ",", "y", ")"]);
    }

    #[test]
    fn tokenize_translate_round_trips_token_ids() {
        let (vocab, seqs) = word_vocab("one two three , four ! five");
        let text = vocab.translate(&seqs[0]).unwrap();
        assert_eq!(vocab.tokenize(&text).unwrap(), seqs[0]);
    }

    #[test]
    fn byte_level_round_trips_exactly() {
        let doc = "fn main() {}\n".to_string();
        let (vocab, seqs) = Vocabulary::build(TokenizerKind::ByteLevel, &[doc.clone()]).unwrap();
        assert_eq!(vocab.size(), 256);
        assert_eq!(vocab.translate(&seqs[0]).unwrap(), doc);
        assert_eq!(vocab.tokenize(&doc).unwrap(), seqs[0]);
    }

    #[test]
    fn unknown_id_is_an_input_error() {
        let (vocab, _) = word_vocab("a b c");
        assert!(vocab.translate(&[999]).is_err());
    }

    #[test]
    fn unknown_word_is_an_input_error() {
        let (vocab, _) = word_vocab("a b c");
        assert!(vocab.tokenize("a d").is_err());
    }

    #[test]
    fn vocabulary_serde_round_trip() {
        let (vocab, _) = word_vocab("alpha beta , gamma");
        let json = serde_json::to_string(&vocab).unwrap();
        let back: Vocabulary = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vocab);
        assert_eq!(back.id_of("beta"), vocab.id_of("beta"));
    }

    #[test]
    fn corpus_jsonl_and_plain_text() {
        let dir = tempfile::tempdir().unwrap();
        let txt = dir.path().join("docs.txt");
        std::fs::write(&txt, "first doc\n\nsecond doc\n").unwrap();
        assert_eq!(read_corpus(&txt).unwrap(), vec!["first doc", "second doc"]);

        let jsonl = dir.path().join("docs.jsonl");
        std::fs::write(&jsonl, "{\"text\": \"one\"}\n{\"text\": \"two\"}\n").unwrap();
        assert_eq!(read_corpus(&jsonl).unwrap(), vec!["one", "two"]);

        let bad = dir.path().join("bad.jsonl");
        std::fs::write(&bad, "{\"note\": \"no text field\"}\n").unwrap();
        assert!(matches!(read_corpus(&bad), Err(Error::Format(_))));
    }
}
