//! SMILES tokenization and vocabulary management.
//!
//! Token ids are defined by the vocabulary file: one token per line, the
//! specials GO, EOS, PAD first, then the sorted corpus tokens.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use thiserror::Error;

pub const GO_TOKEN: &str = "GO";
pub const EOS_TOKEN: &str = "EOS";
pub const PAD_TOKEN: &str = "PAD";
pub const SPECIALS: [&str; 3] = [GO_TOKEN, EOS_TOKEN, PAD_TOKEN];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VocabError {
    #[error("unterminated bracket atom at byte {0}")]
    UnterminatedBracket(usize),
    #[error("`%` ring closure without two digits at byte {0}")]
    MalformedPercent(usize),
    #[error("corpus has no tokenizable lines")]
    EmptyCorpus,
    #[error("token `{0}` is not in the vocabulary")]
    UnknownToken(String),
    #[error("id {0} is out of range for vocabulary of size {1}")]
    UnknownId(u32, usize),
    #[error("bad vocabulary file: {0}")]
    BadFile(String),
}

/// Longest-match SMILES tokenization: bracket atoms, `Cl`/`Br`, and `%nn`
/// are single tokens; every other character stands alone.
pub fn tokenize(smiles: &str) -> Result<Vec<String>, VocabError> {
    let bytes = smiles.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'[' => {
                let close = bytes[i..]
                    .iter()
                    .position(|&b| b == b']')
                    .ok_or(VocabError::UnterminatedBracket(i))?;
                tokens.push(smiles[i..i + close + 1].to_string());
                i += close + 1;
            }
            b'C' if bytes.get(i + 1) == Some(&b'l') => {
                tokens.push("Cl".to_string());
                i += 2;
            }
            b'B' if bytes.get(i + 1) == Some(&b'r') => {
                tokens.push("Br".to_string());
                i += 2;
            }
            b'%' => {
                let two_digits = bytes.get(i + 1).is_some_and(u8::is_ascii_digit)
                    && bytes.get(i + 2).is_some_and(u8::is_ascii_digit);
                if !two_digits {
                    return Err(VocabError::MalformedPercent(i));
                }
                tokens.push(smiles[i..i + 3].to_string());
                i += 3;
            }
            _ => {
                let ch = smiles[i..].chars().next().expect("in bounds");
                tokens.push(ch.to_string());
                i += ch.len_utf8();
            }
        }
    }
    Ok(tokens)
}

/// Bijective token <-> id map with GO/EOS/PAD specials at ids 0, 1, 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Build from explicit token lists (specials are added here).
    pub fn from_token_set(corpus_tokens: impl IntoIterator<Item = String>) -> Vocabulary {
        let mut unique: Vec<String> = corpus_tokens
            .into_iter()
            .filter(|t| !SPECIALS.contains(&t.as_str()))
            .collect();
        unique.sort();
        unique.dedup();
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(unique);
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary { tokens, index }
    }

    /// Collect the unique tokens of every tokenizable line; lines that fail
    /// to tokenize are skipped.
    pub fn build(lines: impl IntoIterator<Item = impl AsRef<str>>) -> Result<Vocabulary, VocabError> {
        let mut all = Vec::new();
        let mut any = false;
        for line in lines {
            if let Ok(tokens) = tokenize(line.as_ref()) {
                any = true;
                all.extend(tokens);
            }
        }
        if !any {
            return Err(VocabError::EmptyCorpus);
        }
        Ok(Vocabulary::from_token_set(all))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Number of legal actions: every token except GO and PAD.
    pub fn action_count(&self) -> usize {
        self.tokens.len() - 2
    }

    pub fn go(&self) -> u32 {
        0
    }

    pub fn eos(&self) -> u32 {
        1
    }

    pub fn pad(&self) -> u32 {
        2
    }

    pub fn is_special(&self, id: u32) -> bool {
        id < 3
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: u32) -> Result<&str, VocabError> {
        self.tokens
            .get(id as usize)
            .map(String::as_str)
            .ok_or(VocabError::UnknownId(id, self.tokens.len()))
    }

    pub fn id(&self, token: &str) -> Result<u32, VocabError> {
        self.index
            .get(token)
            .copied()
            .ok_or_else(|| VocabError::UnknownToken(token.to_string()))
    }

    pub fn encode(&self, tokens: &[String]) -> Result<Vec<u32>, VocabError> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// Tokenize then encode.
    pub fn encode_smiles(&self, smiles: &str) -> Result<Vec<u32>, VocabError> {
        self.encode(&tokenize(smiles)?)
    }

    /// Concatenate tokens, stripping GO/EOS/PAD.
    pub fn decode(&self, ids: &[u32]) -> Result<String, VocabError> {
        let mut out = String::new();
        for &id in ids {
            let tok = self.token(id)?;
            if !self.is_special(id) {
                out.push_str(tok);
            }
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text)
    }

    pub fn load(path: &Path) -> Result<Vocabulary, VocabError> {
        let text =
            fs::read_to_string(path).map_err(|e| VocabError::BadFile(format!("{e}")))?;
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        Vocabulary::from_lines(tokens)
    }

    /// Rebuild from an ordered token list (line order defines ids).
    pub fn from_lines(tokens: Vec<String>) -> Result<Vocabulary, VocabError> {
        if tokens.len() < 3 || tokens[0] != GO_TOKEN || tokens[1] != EOS_TOKEN || tokens[2] != PAD_TOKEN
        {
            return Err(VocabError::BadFile(
                "first three lines must be GO, EOS, PAD".to_string(),
            ));
        }
        if tokens.iter().any(String::is_empty) {
            return Err(VocabError::BadFile("empty token".to_string()));
        }
        let mut index = HashMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(VocabError::BadFile(format!("duplicate token `{t}`")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }
}

impl fmt::Display for Vocabulary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "vocabulary of {} tokens", self.tokens.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn longest_match_rules() {
        assert_eq!(tokenize("CClBr").unwrap(), vec!["C", "Cl", "Br"]);
        assert_eq!(tokenize("[nH]").unwrap(), vec!["[nH]"]);
        assert_eq!(tokenize("C%12C").unwrap(), vec!["C", "%12", "C"]);
        assert_eq!(
            tokenize("c1cc(=O)[O-]").unwrap(),
            vec!["c", "1", "c", "c", "(", "=", "O", ")", "[O-]"]
        );
    }

    #[test]
    fn tokenize_errors() {
        assert_eq!(
            tokenize("C[nH").unwrap_err(),
            VocabError::UnterminatedBracket(1)
        );
        assert_eq!(tokenize("C%1C").unwrap_err(), VocabError::MalformedPercent(1));
    }

    #[test]
    fn build_collects_sorted_unique_tokens() {
        let v = Vocabulary::build(["CC", "CO"]).unwrap();
        assert_eq!(v.len(), 5); // GO, EOS, PAD, C, O
        assert_eq!(v.tokens()[3..], ["C".to_string(), "O".to_string()]);
        let again = Vocabulary::build(["CC", "CO"]).unwrap();
        assert_eq!(v, again);
    }

    #[test]
    fn bracket_tokens_are_kept_verbatim() {
        let v = Vocabulary::build(["C[nH]"]).unwrap();
        assert!(v.id("[nH]").is_ok());
    }

    #[test]
    fn encode_decode_round_trip() {
        let v = Vocabulary::build(["c1ccccc1", "CCO"]).unwrap();
        let ids = v.encode_smiles("c1ccccc1").unwrap();
        assert_eq!(v.decode(&ids).unwrap(), "c1ccccc1");
        assert!(matches!(
            v.encode(&["Zn".to_string()]),
            Err(VocabError::UnknownToken(_))
        ));
    }

    #[test]
    fn decode_strips_specials() {
        let v = Vocabulary::build(["cC"]).unwrap();
        let go = v.go();
        let eos = v.eos();
        let c = v.id("c").unwrap();
        assert_eq!(v.decode(&[go, c, eos]).unwrap(), "c");
    }

    #[test]
    fn file_round_trip_preserves_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        let v = Vocabulary::build(["CCO", "c1ccccc1", "[nH]"]).unwrap();
        v.save(&path).unwrap();
        let loaded = Vocabulary::load(&path).unwrap();
        assert_eq!(v, loaded);
    }

    #[test]
    fn bad_files_are_rejected() {
        assert!(Vocabulary::from_lines(vec!["EOS".into(), "GO".into(), "PAD".into()]).is_err());
        assert!(Vocabulary::from_lines(vec![
            "GO".into(),
            "EOS".into(),
            "PAD".into(),
            "C".into(),
            "C".into()
        ])
        .is_err());
    }
}
