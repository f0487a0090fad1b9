//! Versioned binary forest format.
//!
//! ```text
//! "FRF1"                      4 bytes magic
//! version                     u16
//! n_trees, n_features,        u32 each
//! n_classes
//! feature names               n_features x (u32 byte length, UTF-8)
//! label names                 n_classes  x (u32 byte length, UTF-8)
//! per tree:
//!   node count                u32
//!   per node:
//!     feature_index           i32, -1 for a leaf
//!     threshold               f64 (IEEE-754 bits)
//!     left, right             u32 each
//!     class_counts            n_classes x u32
//! ```
//!
//! All integers and floats are little-endian. Leaves carry threshold `0.0`
//! and zero child indices, so every forest has exactly one encoding and
//! decoding rejects anything else. Hyperparameters are not part of the
//! format: a decoded forest carries default parameters with `n_estimators`
//! set to its tree count.

use thiserror::Error;

use crate::forest::{ForestParams, RandomForest};
use crate::tree::{DecisionTree, TreeNode, LEAF};

pub const MAGIC: &[u8; 4] = b"FRF1";
pub const FORMAT_VERSION: u16 = 1;

const HEADER_LEN: usize = 4 + 2 + 4 * 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("payload truncated")]
    TruncatedPayload,
    #[error("corrupt index: {0}")]
    CorruptIndex(String),
    #[error("invalid node: {0}")]
    InvalidNode(String),
    #[error("name is not valid UTF-8")]
    InvalidName,
    #[error("{0} trailing bytes after the last tree")]
    TrailingBytes(usize),
    #[error("forest has no trees")]
    EmptyForest,
}

/// Canonical bytes for `forest`.
pub fn encode_forest(forest: &RandomForest) -> Vec<u8> {
    let n_classes = forest.n_classes();
    let node_len = 4 + 8 + 4 + 4 + 4 * n_classes;
    let nodes: usize = forest.trees.iter().map(|t| t.nodes.len()).sum();
    let mut out = Vec::with_capacity(HEADER_LEN + nodes * node_len + forest.len() * 4 + 256);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_u32(&mut out, forest.len());
    put_u32(&mut out, forest.n_features());
    put_u32(&mut out, n_classes);
    for name in forest.feature_names.iter().chain(&forest.label_names) {
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
    }
    for tree in &forest.trees {
        put_u32(&mut out, tree.nodes.len());
        for node in &tree.nodes {
            out.extend_from_slice(&node.feature_index.to_le_bytes());
            out.extend_from_slice(&node.threshold.to_le_bytes());
            out.extend_from_slice(&node.left.to_le_bytes());
            out.extend_from_slice(&node.right.to_le_bytes());
            for &c in &node.class_counts {
                out.extend_from_slice(&c.to_le_bytes());
            }
        }
    }
    out
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("count exceeds u32").to_le_bytes());
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self
            .pos
            .checked_add(n)
            .ok_or(CodecError::TruncatedPayload)?;
        let s = self
            .buf
            .get(self.pos..end)
            .ok_or(CodecError::TruncatedPayload)?;
        self.pos = end;
        Ok(s)
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32, CodecError> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CodecError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// A count of items that each need at least `min_len` more bytes.
    fn count(&mut self, min_len: usize) -> Result<usize, CodecError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_len) > self.remaining() {
            return Err(CodecError::TruncatedPayload);
        }
        Ok(n)
    }

    fn names(&mut self, n: usize) -> Result<Vec<String>, CodecError> {
        if n.saturating_mul(4) > self.remaining() {
            return Err(CodecError::TruncatedPayload);
        }
        (0..n)
            .map(|_| {
                let len = self.u32()? as usize;
                let bytes = self.take(len)?;
                String::from_utf8(bytes.to_vec()).map_err(|_| CodecError::InvalidName)
            })
            .collect()
    }
}

/// Parses and validates a forest blob.
pub fn decode_forest(bytes: &[u8]) -> Result<RandomForest, CodecError> {
    if bytes.len() < MAGIC.len() {
        return Err(if MAGIC.starts_with(bytes) {
            CodecError::TruncatedPayload
        } else {
            CodecError::BadMagic
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(CodecError::BadMagic);
    }
    let mut cur = Cursor { buf: bytes, pos: 4 };
    let version = cur.u16()?;
    if version != FORMAT_VERSION {
        return Err(CodecError::UnsupportedVersion(version));
    }
    let n_trees = cur.u32()? as usize;
    let n_features = cur.u32()? as usize;
    let n_classes = cur.u32()? as usize;
    if n_trees == 0 {
        return Err(CodecError::EmptyForest);
    }
    if n_features == 0 || n_classes == 0 {
        return Err(CodecError::CorruptIndex(format!(
            "{n_features} features, {n_classes} classes"
        )));
    }
    if n_trees.saturating_mul(4) > cur.remaining() {
        return Err(CodecError::TruncatedPayload);
    }
    let feature_names = cur.names(n_features)?;
    let label_names = cur.names(n_classes)?;

    let node_len = 4 + 8 + 4 + 4 + 4usize.saturating_mul(n_classes);
    let mut trees = Vec::with_capacity(n_trees);
    for t in 0..n_trees {
        let n_nodes = cur.count(node_len)?;
        if n_nodes == 0 {
            return Err(CodecError::InvalidNode(format!("tree {t} has no nodes")));
        }
        let mut nodes = Vec::with_capacity(n_nodes);
        for _ in 0..n_nodes {
            let feature_index = cur.i32()?;
            let threshold = cur.f64()?;
            let left = cur.u32()?;
            let right = cur.u32()?;
            let class_counts = (0..n_classes)
                .map(|_| cur.u32())
                .collect::<Result<Vec<_>, _>>()?;
            nodes.push(TreeNode {
                feature_index,
                threshold,
                left,
                right,
                class_counts,
            });
        }
        let tree = DecisionTree {
            nodes,
            n_features,
            n_classes,
        };
        check_tree(&tree).map_err(|e| match e {
            CodecError::CorruptIndex(m) => CodecError::CorruptIndex(format!("tree {t}: {m}")),
            CodecError::InvalidNode(m) => CodecError::InvalidNode(format!("tree {t}: {m}")),
            other => other,
        })?;
        trees.push(tree);
    }
    if cur.remaining() != 0 {
        return Err(CodecError::TrailingBytes(cur.remaining()));
    }
    Ok(RandomForest {
        params: ForestParams {
            n_estimators: trees.len(),
            ..ForestParams::default()
        },
        trees,
        label_names,
        feature_names,
    })
}

fn check_tree(tree: &DecisionTree) -> Result<(), CodecError> {
    let len = tree.nodes.len();
    for (i, n) in tree.nodes.iter().enumerate() {
        if n.feature_index == LEAF {
            if n.threshold.to_bits() != 0 || n.left != 0 || n.right != 0 {
                return Err(CodecError::InvalidNode(format!(
                    "leaf {i} is not canonical"
                )));
            }
            continue;
        }
        if n.feature_index < 0 || n.feature_index as usize >= tree.n_features {
            return Err(CodecError::CorruptIndex(format!(
                "node {i}: feature {}",
                n.feature_index
            )));
        }
        for child in [n.left, n.right] {
            if child as usize <= i || child as usize >= len {
                return Err(CodecError::CorruptIndex(format!("node {i}: child {child}")));
            }
        }
    }
    tree.validate().map_err(CodecError::InvalidNode)
}
