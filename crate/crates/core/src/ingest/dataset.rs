use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree_model::StreamingTree;

/// Where a tree came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeMeta {
    pub hostname: String,
    /// Window start in seconds since the Unix epoch.
    pub window_start: f64,
    pub root_id: String,
    /// The root process was never seen being created.
    #[serde(default)]
    pub orphan: bool,
    /// Log events folded into the tree.
    #[serde(default)]
    pub n_events: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledDataset {
    pub trees: Vec<StreamingTree>,
    pub labels: Vec<u8>,
    pub meta: Vec<TreeMeta>,
}

#[derive(Serialize, Deserialize)]
struct Record {
    tree: StreamingTree,
    label: u8,
    meta: TreeMeta,
}

impl LabeledDataset {
    pub fn new(trees: Vec<StreamingTree>, labels: Vec<u8>, meta: Vec<TreeMeta>) -> Result<Self> {
        if trees.len() != labels.len() || trees.len() != meta.len() {
            return Err(Error::LengthMismatch {
                expected: trees.len(),
                actual: labels.len().min(meta.len()),
            });
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::InvalidParameter(format!("labels must be 0 or 1, got {bad}")));
        }
        Ok(Self { trees, labels, meta })
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn push(&mut self, tree: StreamingTree, label: u8, meta: TreeMeta) {
        self.trees.push(tree);
        self.labels.push(label);
        self.meta.push(meta);
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        [self.labels.len() - pos, pos]
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            trees: indices.iter().map(|&i| self.trees[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            meta: indices.iter().map(|&i| self.meta[i].clone()).collect(),
        }
    }

    /// One `{tree, label, meta}` JSON object per line.
    pub fn write_jsonl(&self, mut out: impl Write) -> Result<()> {
        for ((tree, &label), meta) in self.trees.iter().zip(&self.labels).zip(&self.meta) {
            let rec = Record {
                tree: tree.clone(),
                label,
                meta: meta.clone(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl(input: impl BufRead) -> Result<Self> {
        let mut ds = LabeledDataset::default();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Format(format!("dataset line {}: {e}", i + 1)))?;
            if rec.label > 1 {
                return Err(Error::Format(format!("dataset line {}: label {} is not binary", i + 1, rec.label)));
            }
            ds.push(rec.tree, rec.label, rec.meta);
        }
        Ok(ds)
    }
}
