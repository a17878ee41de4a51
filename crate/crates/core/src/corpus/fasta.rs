use std::fmt::Write as _;
use std::path::Path;

use super::{read_to_string, CorpusError, SequenceRecord};

const LINE_WIDTH: usize = 60;

/// Splits FASTA text into `(header, body)` pairs without validating the body
/// alphabet. Gap characters survive, so aligned files can use this too.
pub fn read_fasta_entries(text: &str) -> Result<Vec<(String, String)>, CorpusError> {
    let mut entries: Vec<(String, String, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(header) = line.strip_prefix('>') {
            if let Some((id, body, at)) = entries.last() {
                if body.is_empty() {
                    return Err(CorpusError::Malformed {
                        line: *at,
                        reason: format!("record {id:?} has an empty body"),
                    });
                }
            }
            entries.push((header.trim().to_string(), String::new(), i + 1));
        } else {
            match entries.last_mut() {
                Some((_, body, _)) => body.push_str(line),
                None => {
                    return Err(CorpusError::Malformed {
                        line: i + 1,
                        reason: "sequence data before the first header".into(),
                    })
                }
            }
        }
    }
    if let Some((id, body, at)) = entries.last() {
        if body.is_empty() {
            return Err(CorpusError::Malformed {
                line: *at,
                reason: format!("record {id:?} has an empty body"),
            });
        }
    }
    Ok(entries.into_iter().map(|(h, b, _)| (h, b)).collect())
}

pub fn parse_fasta_str(text: &str) -> Result<Vec<SequenceRecord>, CorpusError> {
    read_fasta_entries(text)?
        .into_iter()
        .map(|(id, seq)| SequenceRecord::new(id, seq))
        .collect()
}

pub fn parse_fasta(path: impl AsRef<Path>) -> Result<Vec<SequenceRecord>, CorpusError> {
    parse_fasta_str(&read_to_string(path.as_ref())?)
}

pub fn write_fasta_string(records: &[SequenceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(out, ">{}", r.id);
        for chunk in r.sequence.as_bytes().chunks(LINE_WIDTH) {
            out.push_str(std::str::from_utf8(chunk).expect("ascii residues"));
            out.push('\n');
        }
    }
    out
}

pub fn write_fasta(path: impl AsRef<Path>, records: &[SequenceRecord]) -> Result<(), CorpusError> {
    let path = path.as_ref();
    std::fs::write(path, write_fasta_string(records)).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}
