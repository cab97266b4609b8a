//! Chain files: one JSON object per line, one line per block.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::block::{Block, BlockHeader};
use super::tx::Transaction;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

#[derive(Serialize, Deserialize)]
struct BlockRecord {
    height: u64,
    header: BlockHeader,
    #[serde(default)]
    timestamp_display: String,
    transactions: Vec<Transaction>,
}

pub fn write_chain_jsonl<W: Write>(chain: &[Block], mut out: W) -> Result<(), ExportError> {
    for b in chain {
        let rec = BlockRecord {
            height: b.height,
            header: b.header.clone(),
            timestamp_display: b.header.timestamp_display(),
            transactions: b.transactions.clone(),
        };
        let line = serde_json::to_string(&rec).map_err(|source| ExportError::Json { line: b.height as usize + 1, source })?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Reads blocks back verbatim. No validation happens here; run
/// `verify_chain` on the result.
pub fn read_chain_jsonl<R: BufRead>(input: R) -> Result<Vec<Block>, ExportError> {
    let mut chain = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: BlockRecord = serde_json::from_str(&line).map_err(|source| ExportError::Json { line: k + 1, source })?;
        chain.push(Block {
            height: rec.height,
            header: rec.header,
            transactions: rec.transactions,
        });
    }
    Ok(chain)
}
