use std::collections::HashMap;
use std::path::Path;

use super::{read_to_string, CorpusError, Labels, SequenceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelKind {
    PerProtein,
    PerResidue,
}

/// Parses `id<TAB>label` lines. Blank lines and `#` comments are skipped.
pub fn parse_labels_str(text: &str) -> Result<Vec<(String, String)>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, label) = line.split_once('\t').ok_or_else(|| CorpusError::Malformed {
            line: i + 1,
            reason: "expected id<TAB>label".into(),
        })?;
        out.push((id.trim().to_string(), label.trim().to_string()));
    }
    Ok(out)
}

pub fn parse_labels(path: impl AsRef<Path>) -> Result<Vec<(String, String)>, CorpusError> {
    parse_labels_str(&read_to_string(path.as_ref())?)
}

/// Attaches labels to records by id. Every record must receive a label, and
/// per-residue label strings must match the sequence length.
pub fn attach_labels(
    records: &mut [SequenceRecord],
    labels: &[(String, String)],
    kind: LabelKind,
) -> Result<(), CorpusError> {
    let by_id: HashMap<&str, &str> = labels
        .iter()
        .map(|(i, l)| (i.as_str(), l.as_str()))
        .collect();
    for r in records.iter_mut() {
        let label = by_id
            .get(r.id.as_str())
            .ok_or_else(|| CorpusError::InvalidRecord {
                id: r.id.clone(),
                reason: "no label".into(),
            })?;
        r.labels = Some(match kind {
            LabelKind::PerProtein => Labels::PerProtein(label.to_string()),
            LabelKind::PerResidue => Labels::PerResidue(label.to_string()),
        });
        r.validate()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_residue_length_checked() {
        let mut recs = vec![SequenceRecord::new("a", "ACD").unwrap()];
        let labels = parse_labels_str("a\tHHE\n").unwrap();
        attach_labels(&mut recs, &labels, LabelKind::PerResidue).unwrap();
        assert_eq!(recs[0].labels, Some(Labels::PerResidue("HHE".into())));

        let bad = parse_labels_str("a\tHH\n").unwrap();
        assert!(attach_labels(&mut recs, &bad, LabelKind::PerResidue).is_err());
    }

    #[test]
    fn missing_tab_is_malformed() {
        assert!(matches!(
            parse_labels_str("a HHE\n"),
            Err(CorpusError::Malformed { line: 1, .. })
        ));
    }
}
