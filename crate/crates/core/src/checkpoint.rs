//! Head checkpoints: one JSON document per head.
//!
//! Layout:
//!
//! ```json
//! {
//!   "format": "kac-head-checkpoint",
//!   "version": 1,
//!   "input_dim": 32,
//!   "num_classes": 20,
//!   "head": { "kind": "kac", "n": 32, "grid": {...}, "ln": {...},
//!             "weights": { "rows": 20, "cols": 128, "data": "<base64>" },
//!             "task_blocks": [4, 4, 4, 4, 4] }
//! }
//! ```
//!
//! Every parameter tensor is base64 of little-endian `f64` bytes, so a
//! save/load round trip is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{KacError, Result};
use crate::heads::{ClassifierHead, Head};

pub const CHECKPOINT_FORMAT: &str = "kac-head-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format: String,
    version: u32,
    input_dim: usize,
    num_classes: usize,
    head: ClassifierHead,
}

pub fn to_json(head: &ClassifierHead) -> Result<String> {
    let doc = Document {
        format: CHECKPOINT_FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        input_dim: head.input_dim(),
        num_classes: head.num_classes(),
        head: head.clone(),
    };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    Ok(text)
}

pub fn from_json(text: &str) -> Result<ClassifierHead> {
    let doc: Document = serde_json::from_str(text)?;
    if doc.format != CHECKPOINT_FORMAT {
        return Err(KacError::Checkpoint(format!("unknown format {:?}", doc.format)));
    }
    if doc.version != CHECKPOINT_VERSION {
        return Err(KacError::Checkpoint(format!("unsupported version {}", doc.version)));
    }
    doc.head.validate()?;
    if doc.head.input_dim() != doc.input_dim || doc.head.num_classes() != doc.num_classes {
        return Err(KacError::Checkpoint(format!(
            "header says {}x{} but head is {}x{}",
            doc.input_dim,
            doc.num_classes,
            doc.head.input_dim(),
            doc.head.num_classes()
        )));
    }
    Ok(doc.head)
}

pub fn save(path: &Path, head: &ClassifierHead) -> Result<()> {
    fs::write(path, to_json(head)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ClassifierHead> {
    from_json(&fs::read_to_string(path)?)
}
