use std::path::Path;

use super::{read_to_string, CorpusError};

pub type Point3 = [f64; 3];

/// Reads a C-alpha trace from either plain `x y z` lines or PDB `ATOM`
/// records. For PDB input only the first model and the first chain that
/// carries a CA atom are used; alternate locations other than blank/`A`
/// are skipped.
pub fn parse_coords(path: impl AsRef<Path>) -> Result<Vec<Point3>, CorpusError> {
    parse_coords_str(&read_to_string(path.as_ref())?)
}

pub fn parse_coords_str(text: &str) -> Result<Vec<Point3>, CorpusError> {
    let is_pdb = text.lines().any(|l| {
        ["ATOM", "HETATM", "MODEL", "HEADER", "ENDMDL"]
            .iter()
            .any(|p| l.starts_with(p))
    });
    if is_pdb {
        parse_pdb_ca(text)
    } else {
        parse_xyz(text)
    }
}

fn parse_xyz(text: &str) -> Result<Vec<Point3>, CorpusError> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(CorpusError::Malformed {
                line: i + 1,
                reason: format!("expected 3 coordinates, found {}", fields.len()),
            });
        }
        let mut p = [0.0; 3];
        for (slot, f) in p.iter_mut().zip(&fields) {
            *slot = f.parse().map_err(|_| CorpusError::Malformed {
                line: i + 1,
                reason: format!("not a number: {f:?}"),
            })?;
        }
        points.push(p);
    }
    if points.is_empty() {
        return Err(CorpusError::Malformed {
            line: 0,
            reason: "no coordinates".into(),
        });
    }
    Ok(points)
}

fn column(line: &str, from: usize, to: usize) -> &str {
    // 1-based inclusive PDB columns; short lines yield "".
    let start = (from - 1).min(line.len());
    let end = to.min(line.len());
    line.get(start..end).unwrap_or("")
}

fn parse_pdb_ca(text: &str) -> Result<Vec<Point3>, CorpusError> {
    let mut points = Vec::new();
    let mut chain: Option<String> = None;
    let mut last_residue: Option<String> = None;
    for (i, line) in text.lines().enumerate() {
        if line.starts_with("ENDMDL") {
            break;
        }
        if !line.starts_with("ATOM") {
            continue;
        }
        if column(line, 13, 16).trim() != "CA" {
            continue;
        }
        let alt = column(line, 17, 17).trim();
        if !(alt.is_empty() || alt == "A") {
            continue;
        }
        let this_chain = column(line, 22, 22).to_string();
        match &chain {
            None => chain = Some(this_chain.clone()),
            Some(c) if *c != this_chain => continue,
            Some(_) => {}
        }
        let residue = column(line, 23, 27).to_string();
        if last_residue.as_deref() == Some(residue.as_str()) {
            continue;
        }
        let mut p = [0.0; 3];
        for (slot, (from, to)) in p.iter_mut().zip([(31, 38), (39, 46), (47, 54)]) {
            let field = column(line, from, to).trim();
            *slot = field.parse().map_err(|_| CorpusError::Malformed {
                line: i + 1,
                reason: format!("bad coordinate field {field:?}"),
            })?;
        }
        points.push(p);
        last_residue = Some(residue);
    }
    if points.is_empty() {
        return Err(CorpusError::NoCaAtoms);
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PDB: &str = "\
HEADER    TEST
ATOM      1  N   MET A   1      11.104   6.134  -6.504  1.00  0.00           N
ATOM      2  CA  MET A   1      11.639   6.071  -5.147  1.00  0.00           C
ATOM      3  C   MET A   1      10.977   7.151  -4.292  1.00  0.00           C
ATOM      4  CA  LYS A   2       9.581   8.220  -2.498  1.00  0.00           C
ATOM      5  CA  VAL A   3       8.026  10.914  -0.379  1.00  0.00           C
ATOM      6  CA  GLY B   1      99.000  99.000  99.000  1.00  0.00           C
ENDMDL
ATOM      7  CA  MET A   1       0.000   0.000   0.000  1.00  0.00           C
";

    #[test]
    fn xyz_lines() {
        let p = parse_coords_str("0 0 0\n1 0 0\n").unwrap();
        assert_eq!(p, vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]);
    }

    #[test]
    fn pdb_ca_of_first_chain_and_model() {
        // Expected values sliced by hand from columns 31-38, 39-46, 47-54.
        let p = parse_coords_str(PDB).unwrap();
        assert_eq!(
            p,
            vec![
                [11.639, 6.071, -5.147],
                [9.581, 8.220, -2.498],
                [8.026, 10.914, -0.379]
            ]
        );
    }

    #[test]
    fn pdb_without_ca() {
        let text = "ATOM      1  N   MET A   1      11.104   6.134  -6.504  1.00  0.00           N\n";
        assert!(matches!(parse_coords_str(text), Err(CorpusError::NoCaAtoms)));
    }

    #[test]
    fn bad_xyz_line() {
        assert!(matches!(
            parse_coords_str("0 0\n"),
            Err(CorpusError::Malformed { line: 1, .. })
        ));
        assert!(matches!(
            parse_coords_str("0 0 z\n"),
            Err(CorpusError::Malformed { line: 1, .. })
        ));
    }
}
