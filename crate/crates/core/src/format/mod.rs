//! The `.efsm` model language: a block-structured rendering of an app's
//! state table and state transition table.
//!
//! ```text
//! app "camera" {
//!     vars {
//!         video_mode: bool = false
//!     }
//!     states {
//!         home*, settings
//!     }
//!     functions {
//!         take_photo: "Take a photo."
//!     }
//!     transitions {
//!         t3: home -> home
//!             on "Tap the shutter button."
//!             when video_mode == false
//!             does take_photo
//!     }
//! }
//! ```

mod lexer;
mod parser;
mod writer;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

pub use lexer::is_keyword;
pub use parser::{parse_model, parse_model_in, ModelDocument};
pub use writer::{serialize_model, write_raw};

use crate::diagnostics::Diagnostics;
use crate::model::{validate_all, KnowledgeBase, RawMachine};

/// File extension of model sources.
pub const MODEL_EXTENSION: &str = "efsm";

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Invalid(Diagnostics),
}

/// Parses and validates model text into a knowledge base.
pub fn load_str(file: &Path, text: &str) -> Result<KnowledgeBase, Diagnostics> {
    let doc = parse_model_in(file, text)?;
    validate_all(&doc.apps)
}

/// Expands files and directories into the list of model files, directories
/// contributing their `.efsm` entries in name order.
pub fn model_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>, LoadError> {
    let mut files = Vec::new();
    for path in paths {
        let meta = fs::metadata(path).map_err(|source| LoadError::Io {
            path: path.clone(),
            source,
        })?;
        if meta.is_dir() {
            let entries = fs::read_dir(path).map_err(|source| LoadError::Io {
                path: path.clone(),
                source,
            })?;
            let mut found: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == MODEL_EXTENSION))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(path.clone());
        }
    }
    Ok(files)
}

/// Reads every model file under `paths` and validates them together.
/// Syntax and validation diagnostics from all files are reported at once.
pub fn load_paths(paths: &[PathBuf]) -> Result<KnowledgeBase, LoadError> {
    let mut raws: Vec<RawMachine> = Vec::new();
    let mut diags = Vec::new();
    for file in model_files(paths)? {
        let text = fs::read_to_string(&file).map_err(|source| LoadError::Io {
            path: file.clone(),
            source,
        })?;
        match parse_model_in(&file, &text) {
            Ok(doc) => raws.extend(doc.apps),
            Err(d) => diags.extend(d),
        }
    }
    if !diags.is_empty() {
        return Err(LoadError::Invalid(Diagnostics(diags)));
    }
    validate_all(&raws).map_err(LoadError::Invalid)
}
