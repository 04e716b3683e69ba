//! Function records, tokenization, vocabulary, splitting and the synthetic
//! pattern-planting generator.

mod split;
mod synthetic;
mod tokenize;
mod vocab;

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use split::{split_corpus, SplitRatios};
pub use synthetic::{generate_synthetic, pattern_templates, SyntheticConfig};
pub use tokenize::{detokenize, tokenize_statement};
pub use vocab::{Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};

/// One source function with its function-level label and, when known, the
/// indices of the statements that make it vulnerable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionRecord {
    pub id: String,
    pub statements: Vec<String>,
    pub label: u8,
    #[serde(rename = "vuln_lines", default)]
    pub vuln_indices: BTreeSet<usize>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub origin: String,
}

impl FunctionRecord {
    pub fn new(
        id: impl Into<String>,
        statements: Vec<String>,
        label: u8,
        vuln_indices: impl IntoIterator<Item = usize>,
    ) -> Result<Self> {
        let rec = FunctionRecord {
            id: id.into(),
            statements,
            label,
            vuln_indices: vuln_indices.into_iter().collect(),
            origin: String::new(),
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn with_origin(mut self, origin: impl Into<String>) -> Self {
        self.origin = origin.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.statements.is_empty() {
            return Err(Error::data(format!("function {:?} has no statements", self.id)));
        }
        if self.label > 1 {
            return Err(Error::data(format!("function {:?} has label {}", self.id, self.label)));
        }
        if let Some(&bad) = self.vuln_indices.iter().find(|&&i| i >= self.statements.len()) {
            return Err(Error::data(format!(
                "function {:?}: vulnerable index {bad} out of range for {} statements",
                self.id,
                self.statements.len()
            )));
        }
        if !self.vuln_indices.is_empty() && self.label != 1 {
            return Err(Error::data(format!(
                "function {:?} lists vulnerable statements but is labeled benign",
                self.id
            )));
        }
        Ok(())
    }

    pub fn is_vulnerable(&self) -> bool {
        self.label == 1
    }
}

/// Reads a JSON-lines dataset. Blank lines are skipped; every record is validated.
pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<FunctionRecord>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FunctionRecord = serde_json::from_str(&line).map_err(|e| {
            Error::data(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl(path: impl AsRef<Path>, records: &[FunctionRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// A function encoded as an `L x T` matrix of token indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizedFunction {
    pub id: String,
    pub tokens: Array2<u32>,
    /// 1 for real statements, 0 for padding rows. Always a prefix of ones.
    pub statement_mask: Vec<u8>,
    pub label: u8,
    /// Ground-truth indices that survived truncation, ascending.
    pub vuln_indices: Vec<usize>,
    /// True when some ground-truth index fell beyond `L`.
    pub truncated_truth: bool,
    /// Size of the ground truth before truncation.
    pub original_truth_len: usize,
}

impl TokenizedFunction {
    pub fn max_statements(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn max_tokens(&self) -> usize {
        self.tokens.ncols()
    }

    pub fn n_real(&self) -> usize {
        self.statement_mask.iter().filter(|&&m| m == 1).count()
    }

    pub fn is_vulnerable(&self) -> bool {
        self.label == 1
    }
}

/// Tokenizes and pads/truncates a record to `max_statements x max_tokens`.
pub fn encode_function(
    rec: &FunctionRecord,
    vocab: &Vocabulary,
    max_statements: usize,
    max_tokens: usize,
) -> Result<TokenizedFunction> {
    if max_statements == 0 || max_tokens == 0 {
        return Err(Error::config("L and T must be at least 1"));
    }
    let mut tokens = Array2::from_elem((max_statements, max_tokens), PAD);
    let kept = rec.statements.len().min(max_statements);
    for (i, stmt) in rec.statements.iter().take(kept).enumerate() {
        for (j, tok) in tokenize_statement(stmt).iter().take(max_tokens).enumerate() {
            tokens[[i, j]] = vocab.index_of(tok);
        }
    }
    let mut statement_mask = vec![0u8; max_statements];
    statement_mask[..kept].fill(1);
    let vuln_indices: Vec<usize> = rec.vuln_indices.iter().copied().filter(|&i| i < max_statements).collect();
    Ok(TokenizedFunction {
        id: rec.id.clone(),
        tokens,
        statement_mask,
        label: rec.label,
        truncated_truth: vuln_indices.len() < rec.vuln_indices.len(),
        original_truth_len: rec.vuln_indices.len(),
        vuln_indices,
    })
}

pub fn encode_corpus(
    records: &[FunctionRecord],
    vocab: &Vocabulary,
    max_statements: usize,
    max_tokens: usize,
) -> Result<Vec<TokenizedFunction>> {
    records
        .iter()
        .map(|r| encode_function(r, vocab, max_statements, max_tokens))
        .collect()
}
