use std::path::Path;
use std::str::FromStr;

use super::HarnessError;

/// One task column of a report row.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskScore {
    pub task: String,
    pub metric: String,
    pub value: f64,
    /// Percent-valued scores enter Avg./Med.; correlations do not.
    pub percent: bool,
}

/// Results of one experiment: one row of an ablation table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub experiment: String,
    pub scores: Vec<TaskScore>,
    /// Mean loss of the last pre-training epoch.
    pub final_loss: Option<f64>,
    pub steps: usize,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

impl MetricReport {
    fn percent_values(&self) -> Vec<f64> {
        self.scores.iter().filter(|s| s.percent).map(|s| s.value).collect()
    }

    pub fn average(&self) -> Option<f64> {
        let v = self.percent_values();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn median(&self) -> Option<f64> {
        let mut v = self.percent_values();
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(median(&v))
    }

    pub fn score(&self, task: &str) -> Option<&TaskScore> {
        self.scores.iter().find(|s| s.task == task)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Tsv,
    Table,
}

impl FromStr for ReportFormat {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsv" => Ok(ReportFormat::Tsv),
            "table" => Ok(ReportFormat::Table),
            other => Err(HarnessError::Config(format!("unknown report format {other:?}"))),
        }
    }
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Tsv => "tsv",
            ReportFormat::Table => "txt",
        }
    }
}

/// Task columns in order of first appearance across reports.
fn columns(reports: &[MetricReport]) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = Vec::new();
    for r in reports {
        for s in &r.scores {
            if !out.iter().any(|(t, _)| *t == s.task) {
                out.push((s.task.clone(), s.metric.clone()));
            }
        }
    }
    out
}

/// Renders reports as rows `Exp., <tasks...>, Avg., Med.`. TSV cells hold
/// full-precision numbers; the table shows one decimal for percentages
/// and three for correlations. Missing cells are `-`.
pub fn render_report(reports: &[MetricReport], format: ReportFormat) -> Result<String, HarnessError> {
    if reports.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    let cols = columns(reports);
    let mut header = vec!["Exp.".to_string()];
    header.extend(cols.iter().map(|(t, m)| format!("{t} ({m})")));
    header.push("Avg.".into());
    header.push("Med.".into());

    let cell = |v: Option<f64>, percent: bool| match (v, format) {
        (None, _) => "-".to_string(),
        (Some(v), ReportFormat::Tsv) => format!("{v}"),
        (Some(v), ReportFormat::Table) if percent => format!("{v:.1}%"),
        (Some(v), ReportFormat::Table) => format!("{v:.3}"),
    };
    let mut rows = vec![header];
    for r in reports {
        let mut row = vec![r.experiment.clone()];
        for (task, _) in &cols {
            let s = r.score(task);
            row.push(cell(s.map(|s| s.value), s.is_none_or(|s| s.percent)));
        }
        row.push(cell(r.average(), true));
        row.push(cell(r.median(), true));
        rows.push(row);
    }
    Ok(match format {
        ReportFormat::Tsv => rows.iter().map(|r| r.join("\t") + "\n").collect(),
        ReportFormat::Table => {
            let widths: Vec<usize> = (0..rows[0].len())
                .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
                .collect();
            let mut out = String::new();
            for (i, r) in rows.iter().enumerate() {
                let line: Vec<String> = r
                    .iter()
                    .zip(&widths)
                    .enumerate()
                    .map(|(c, (v, w))| if c == 0 { format!("{v:<w$}") } else { format!("{v:>w$}") })
                    .collect();
                out.push_str(line.join("  ").trim_end());
                out.push('\n');
                if i == 0 {
                    let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
                    out.push_str(&"-".repeat(total));
                    out.push('\n');
                }
            }
            out
        }
    })
}

pub fn emit_report(
    reports: &[MetricReport],
    format: ReportFormat,
    path: impl AsRef<Path>,
) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let text = render_report(reports, format)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// A parsed TSV report: header cells and, per row, the experiment id with
/// its numeric cells (`None` for `-`).
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReport {
    pub header: Vec<String>,
    pub rows: Vec<(String, Vec<Option<f64>>)>,
}

pub fn parse_report_tsv(text: &str) -> Result<ParsedReport, HarnessError> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or(HarnessError::EmptyReport)?
        .split('\t')
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for line in lines {
        let mut cells = line.split('\t');
        let id = cells.next().unwrap_or_default().to_string();
        let values = cells
            .map(|c| match c {
                "-" => Ok(None),
                c => c
                    .parse()
                    .map(Some)
                    .map_err(|_| HarnessError::Config(format!("bad report cell {c:?}"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if values.len() + 1 != header.len() {
            return Err(HarnessError::Config(format!("row {id:?} has {} cells", values.len() + 1)));
        }
        rows.push((id, values));
    }
    Ok(ParsedReport { header, rows })
}
