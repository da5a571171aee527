//! Object-detection evaluation datasets: one `EvalFrame` per line.

use std::io::BufRead;
use std::path::Path;

use proctorline_core::objectgate::EvalFrame;

use crate::sessionlog::LogError;

pub fn parse_eval_dataset<R: BufRead>(reader: R) -> Result<Vec<EvalFrame>, LogError> {
    let mut frames = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f = serde_json::from_str(&line)
            .map_err(|e| LogError::MalformedRecord { line: i + 1, message: e.to_string() })?;
        frames.push(f);
    }
    Ok(frames)
}

pub fn read_eval_dataset(path: &Path) -> Result<Vec<EvalFrame>, LogError> {
    parse_eval_dataset(std::io::BufReader::new(std::fs::File::open(path)?))
}
