use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grpo::TokenId;
use crate::parser::{ANSWER_CLOSE, ANSWER_OPEN, CORRECT_KEYWORDS, OVERFITTING_KEYWORDS, THINK_CLOSE, THINK_OPEN};

pub const EOS: &str = "<eos>";
pub const HINT_CORRECT: &str = "HINT_C";
pub const HINT_OVERFITTING: &str = "HINT_O";
pub const FILLER: [&str; 8] = ["alpha", "beta", "gamma", "delta", "omega", "sigma", "kappa", "lambda"];
pub const MAX_VOCAB: usize = 64;

/// Ordered, duplicate-free token list. Serializes as a plain JSON list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    eos: TokenId,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() > MAX_VOCAB {
            return Err(Error::invalid(format!(
                "vocabulary has {} tokens, limit is {MAX_VOCAB}",
                tokens.len()
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate vocabulary token `{t}`")));
            }
        }
        let eos = *index
            .get(EOS)
            .ok_or_else(|| Error::invalid("vocabulary has no end-of-sequence token"))?;
        Ok(Vocabulary { tokens, index, eos })
    }

    /// End-of-sequence, tags, verdict keywords, class hints and filler words.
    pub fn standard() -> Self {
        let mut tokens: Vec<String> = vec![EOS.into()];
        tokens.extend([THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE].map(String::from));
        tokens.extend(CORRECT_KEYWORDS.iter().chain(&OVERFITTING_KEYWORDS).map(|s| s.to_string()));
        tokens.extend([HINT_CORRECT, HINT_OVERFITTING].map(String::from));
        tokens.extend(FILLER.map(String::from));
        Vocabulary::new(tokens).expect("standard vocabulary is valid")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn id(&self, token: &str) -> Result<TokenId> {
        self.index
            .get(token)
            .copied()
            .ok_or_else(|| Error::UnknownToken(token.to_string()))
    }

    pub fn token(&self, id: TokenId) -> Result<&str> {
        self.tokens
            .get(id)
            .map(String::as_str)
            .ok_or(Error::TokenOutOfRange(id))
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, tokens: &[&str]) -> Result<Vec<TokenId>> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// Joins surface forms with single spaces. End-of-sequence renders as nothing.
    pub fn detokenize(&self, completion: &[TokenId]) -> Result<String> {
        let mut parts = Vec::with_capacity(completion.len());
        for &id in completion {
            let tok = self.token(id)?;
            if id != self.eos {
                parts.push(tok);
            }
        }
        Ok(parts.join(" "))
    }
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Vocabulary::new(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Verdict;
    use crate::parser::parse;

    #[test]
    fn standard_vocab_shape() {
        let v = Vocabulary::standard();
        assert!(v.len() <= MAX_VOCAB);
        for t in [THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE, "wrong", HINT_OVERFITTING, EOS] {
            v.id(t).unwrap();
        }
    }

    #[test]
    fn rejects_duplicates_and_missing_eos() {
        assert!(Vocabulary::new(vec!["a".into(), "a".into(), EOS.into()]).is_err());
        assert!(Vocabulary::new(vec!["a".into()]).is_err());
    }

    #[test]
    fn json_is_a_list() {
        let v = Vocabulary::standard();
        let text = serde_json::to_string(&v).unwrap();
        assert!(text.starts_with("[\"<eos>\""));
        let back: Vocabulary = serde_json::from_str(&text).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn detokenized_tags_parse() {
        let v = Vocabulary::standard();
        let good = v
            .encode(&[THINK_OPEN, "alpha", THINK_CLOSE, ANSWER_OPEN, "correct", ANSWER_CLOSE, EOS])
            .unwrap();
        let p = parse(&v.detokenize(&good).unwrap());
        assert!(p.is_wellformed());
        assert_eq!(p.verdict, Some(Verdict::Correct));

        assert_eq!(v.detokenize(&[]).unwrap(), "");

        let no_think = v.encode(&[ANSWER_OPEN, "overfitting", ANSWER_CLOSE]).unwrap();
        let p = parse(&v.detokenize(&no_think).unwrap());
        assert_eq!(p.verdict, Some(Verdict::Overfitting));
        assert!(!p.is_wellformed());
    }

    #[test]
    fn out_of_range_token() {
        let v = Vocabulary::standard();
        assert!(matches!(v.detokenize(&[999]), Err(Error::TokenOutOfRange(999))));
    }
}
