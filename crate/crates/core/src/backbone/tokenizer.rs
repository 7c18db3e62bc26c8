//! Category-name tokenizers.
//!
//! The toy backbone uses raw UTF-8 bytes after whitespace normalization. The
//! CLIP adapter uses CLIP's byte-level BPE, read from the `vocab.json` and
//! `merges.txt` files shipped next to the weights.

use std::collections::HashMap;
use std::path::Path;

use regex::Regex;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub enum Tokenizer {
    Bytes(ByteTokenizer),
    Bpe(ClipBpe),
}

impl Tokenizer {
    /// Token ids for the text, without start/end markers.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        match self {
            Tokenizer::Bytes(t) => t.encode(text),
            Tokenizer::Bpe(t) => t.encode(text),
        }
    }

    pub fn start_token(&self) -> u32 {
        match self {
            Tokenizer::Bytes(_) => ByteTokenizer::START,
            Tokenizer::Bpe(t) => t.start,
        }
    }

    pub fn end_token(&self) -> u32 {
        match self {
            Tokenizer::Bytes(_) => ByteTokenizer::END,
            Tokenizer::Bpe(t) => t.end,
        }
    }
}

/// Bytes 0..=255 map to themselves; 256 and 257 mark start and end.
#[derive(Clone, Debug, Default)]
pub struct ByteTokenizer;

impl ByteTokenizer {
    pub const START: u32 = 256;
    pub const END: u32 = 257;
    pub const VOCAB_SIZE: usize = 258;

    pub fn encode(&self, text: &str) -> Vec<u32> {
        let joined = text.split_whitespace().collect::<Vec<_>>().join(" ");
        joined.bytes().map(u32::from).collect()
    }
}

/// CLIP's lower-cased byte-level BPE with `</w>` word endings.
#[derive(Clone, Debug)]
pub struct ClipBpe {
    encoder: HashMap<String, u32>,
    ranks: HashMap<(String, String), usize>,
    byte_map: [char; 256],
    pattern: Regex,
    start: u32,
    end: u32,
}

impl ClipBpe {
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let vocab_path = dir.join("vocab.json");
        let merges_path = dir.join("merges.txt");
        let vocab = std::fs::read_to_string(&vocab_path).map_err(|e| Error::io(&vocab_path, e))?;
        let merges = std::fs::read_to_string(&merges_path).map_err(|e| Error::io(&merges_path, e))?;
        let encoder: HashMap<String, u32> = serde_json::from_str(&vocab)?;
        Self::new(encoder, &merges)
    }

    pub fn new(encoder: HashMap<String, u32>, merges: &str) -> Result<Self> {
        let ranks = merges
            .lines()
            .filter(|l| !l.starts_with("#version") && !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                let mut parts = l.split_whitespace();
                match (parts.next(), parts.next()) {
                    (Some(a), Some(b)) => Ok(((a.to_string(), b.to_string()), i)),
                    _ => Err(Error::InvalidInput(format!("bad merge rule `{l}`"))),
                }
            })
            .collect::<Result<HashMap<_, _>>>()?;
        let special = |name: &str| {
            encoder
                .get(name)
                .copied()
                .ok_or_else(|| Error::InvalidInput(format!("vocabulary lacks `{name}`")))
        };
        let start = special("<|startoftext|>")?;
        let end = special("<|endoftext|>")?;
        let pattern = Regex::new(
            r"(?i)<\|startoftext\|>|<\|endoftext\|>|'s|'t|'re|'ve|'m|'ll|'d|[\p{L}]+|[\p{N}]|[^\s\p{L}\p{N}]+",
        )
        .expect("valid pattern");
        Ok(Self {
            encoder,
            ranks,
            byte_map: bytes_to_unicode(),
            pattern,
            start,
            end,
        })
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        let cleaned = text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        let mut ids = Vec::new();
        for m in self.pattern.find_iter(&cleaned) {
            let word: String = m.as_str().bytes().map(|b| self.byte_map[b as usize]).collect();
            for piece in self.bpe(&word) {
                if let Some(&id) = self.encoder.get(&piece) {
                    ids.push(id);
                }
            }
        }
        ids
    }

    fn bpe(&self, word: &str) -> Vec<String> {
        let chars: Vec<char> = word.chars().collect();
        let Some((last, head)) = chars.split_last() else { return vec![] };
        let mut parts: Vec<String> = head.iter().map(|c| c.to_string()).collect();
        parts.push(format!("{last}</w>"));
        loop {
            let best = parts
                .windows(2)
                .filter_map(|w| {
                    let pair = (w[0].clone(), w[1].clone());
                    self.ranks.get(&pair).map(|&rank| (rank, pair))
                })
                .min_by_key(|(rank, _)| *rank);
            let Some((_, (rank_pair_a, rank_pair_b))) = best else { break };
            let mut merged = Vec::with_capacity(parts.len());
            let mut i = 0;
            while i < parts.len() {
                if i + 1 < parts.len() && parts[i] == rank_pair_a && parts[i + 1] == rank_pair_b {
                    merged.push(format!("{}{}", parts[i], parts[i + 1]));
                    i += 2;
                } else {
                    merged.push(parts[i].clone());
                    i += 1;
                }
            }
            parts = merged;
            if parts.len() == 1 {
                break;
            }
        }
        parts
    }
}

/// GPT-2 style reversible byte to printable-character table.
fn bytes_to_unicode() -> [char; 256] {
    let mut printable: Vec<u32> = (u32::from(b'!')..=u32::from(b'~')).collect();
    printable.extend(0xA1..=0xAC);
    printable.extend(0xAE..=0xFF);
    let mut table = ['\0'; 256];
    let mut extra = 0;
    for b in 0..256u32 {
        table[b as usize] = if printable.contains(&b) {
            char::from_u32(b).unwrap()
        } else {
            extra += 1;
            char::from_u32(255 + extra).unwrap()
        };
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_tokenizer_normalizes_whitespace() {
        let t = ByteTokenizer;
        assert_eq!(t.encode("  hot   air "), t.encode("hot air"));
        assert_eq!(t.encode("ab"), vec![97, 98]);
    }

    fn fixture() -> ClipBpe {
        let vocab: HashMap<String, u32> = [
            ("c", 0),
            ("a", 1),
            ("t</w>", 2),
            ("ca", 3),
            ("cat</w>", 4),
            ("s", 5),
            ("s</w>", 6),
            ("<|startoftext|>", 7),
            ("<|endoftext|>", 8),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        ClipBpe::new(vocab, "#version: 0.2\nc a\nca t</w>\n").unwrap()
    }

    #[test]
    fn bpe_applies_merges_by_rank() {
        let t = fixture();
        assert_eq!(t.encode("Cat"), vec![4]);
        assert_eq!(t.encode("cat s"), vec![4, 6]);
        assert_eq!(t.start, 7);
        assert_eq!(t.end, 8);
    }

    #[test]
    fn byte_table_is_a_bijection() {
        let table = bytes_to_unicode();
        let unique: std::collections::HashSet<_> = table.iter().collect();
        assert_eq!(unique.len(), 256);
        assert_eq!(table[b'a' as usize], 'a');
    }
}
