use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use super::{Hypothesis, HypothesisSource};
use crate::error::{Error, Result};
use crate::textnorm::Normalizer;

#[derive(Deserialize)]
struct CtcLine {
    id: String,
    text: String,
}

/// Loads externally produced CTC transcripts, one `{"id", "text"}` object
/// per line.
pub fn ingest_ctc(path: &Path, normalizer: &Normalizer) -> Result<BTreeMap<String, Hypothesis>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: CtcLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        if out.contains_key(&parsed.id) {
            return Err(Error::DuplicateId(parsed.id));
        }
        let hyp = Hypothesis::new(parsed.id.clone(), normalizer.normalize(&parsed.text), HypothesisSource::Ctc);
        out.insert(parsed.id, hyp);
    }
    Ok(out)
}
