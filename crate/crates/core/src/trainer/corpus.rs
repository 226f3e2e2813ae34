//! Annotated corpus reading and feature projection.
//!
//! The annotated format is one token per line, `wordform\tlemma\tpos`, with a
//! blank line between sentences. Plain corpora hold one space-tokenized
//! sentence per line and only support the wordform feature.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::{Result, TrainError};
use crate::vstore::FeatureKind;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedToken {
    pub wordform: String,
    pub lemma: String,
    pub pos: String,
}

pub type Sentence = Vec<AnnotatedToken>;

/// Parses the tab-separated annotated format.
pub fn read_annotated<R: BufRead>(reader: R) -> Result<Vec<Sentence>> {
    let mut sentences = Vec::new();
    let mut current = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            if !current.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(wordform), Some(lemma), Some(pos), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(TrainError::MalformedRecord(i + 1));
        };
        let (wordform, lemma) = (wordform.trim(), lemma.trim());
        if wordform.is_empty()
            || lemma.is_empty()
            || wordform.contains(char::is_whitespace)
            || lemma.contains(char::is_whitespace)
        {
            return Err(TrainError::MalformedRecord(i + 1));
        }
        current.push(AnnotatedToken {
            wordform: wordform.to_string(),
            lemma: lemma.to_string(),
            pos: pos.trim().to_string(),
        });
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    Ok(sentences)
}

/// Parses a plain corpus: one sentence per line, whitespace-separated.
pub fn read_plain<R: BufRead>(reader: R) -> Result<Vec<Vec<String>>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let sent: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        if !sent.is_empty() {
            out.push(sent);
        }
    }
    Ok(out)
}

/// Projects every annotated token onto one feature, preserving sentences.
pub fn extract_tokens(corpus: &[Sentence], feature: FeatureKind) -> Vec<Vec<String>> {
    corpus
        .iter()
        .map(|s| {
            s.iter()
                .map(|t| match feature {
                    FeatureKind::Wordform => t.wordform.clone(),
                    FeatureKind::LemmaCased => t.lemma.clone(),
                    FeatureKind::LemmaLower => t.lemma.to_lowercase(),
                })
                .collect()
        })
        .collect()
}

/// Reads a corpus in either format and returns token sentences for `feature`.
/// The format is annotated when the first non-blank line contains a tab.
pub fn load_corpus<R: BufRead>(mut reader: R, feature: FeatureKind) -> Result<Vec<Vec<String>>> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let annotated = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| l.contains('\t'));
    if annotated {
        Ok(extract_tokens(&read_annotated(text.as_bytes())?, feature))
    } else if feature == FeatureKind::Wordform {
        read_plain(text.as_bytes())
    } else {
        Err(TrainError::PlainCorpusNeedsWordform(feature))
    }
}
