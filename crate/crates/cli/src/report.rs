//! Side-by-side comparison of summary files at shared checkpoints.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use nonconvex_da::fit_slope;

use crate::experiment::SummaryRow;
use crate::format::number;

/// One summary file.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub label: String,
    pub rows: Vec<SummaryRow>,
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    ensure!(
        header == ["algorithm", "dim", "t", "mean_regret", "std_regret", "slope"],
        "{}: unexpected header {:?}",
        path.display(),
        header
    );
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let parse = |k: usize| -> Result<f64> {
            field(k).parse().with_context(|| format!("{} line {line}: bad number `{}`", path.display(), field(k)))
        };
        rows.push(SummaryRow {
            algorithm: field(0).to_string(),
            dim: field(1).parse().with_context(|| format!("{} line {line}: bad dim", path.display()))?,
            t: field(2).parse().with_context(|| format!("{} line {line}: bad checkpoint", path.display()))?,
            mean_regret: parse(3)?,
            std_regret: parse(4)?,
            slope: if field(5).is_empty() { None } else { Some(parse(5)?) },
        });
    }
    ensure!(!rows.is_empty(), "{}: no rows", path.display());
    Ok(Summary { label: rows[0].algorithm.clone(), rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub header: Vec<String>,
    pub checkpoints: Vec<usize>,
    /// One row per checkpoint, aligned with `header[1..]`.
    pub columns: Vec<Vec<f64>>,
    /// `(label, slope)` fitted on each mean column.
    pub slopes: Vec<(String, Option<f64>)>,
    pub bound_exponent: f64,
}

/// Aligns the summaries, which must share dimension and checkpoints. Columns per summary are
/// mean and std, then the difference to the first summary's mean, then the bound
/// `c T^{(d+2)/(d+3)}` with `c` matching the first mean at the first checkpoint.
pub fn build_report(summaries: &[Summary]) -> Result<Report> {
    ensure!(!summaries.is_empty(), "report needs at least one summary");
    let base = &summaries[0];
    let checkpoints: Vec<usize> = base.rows.iter().map(|r| r.t).collect();
    let dim = base.rows[0].dim;
    let mut labels: Vec<String> = Vec::new();
    for s in summaries {
        let ts: Vec<usize> = s.rows.iter().map(|r| r.t).collect();
        if ts != checkpoints {
            bail!("checkpoints of `{}` do not align with those of `{}`", s.label, base.label);
        }
        if s.rows.iter().any(|r| r.dim != dim) {
            bail!("`{}` has a different dimension than `{}`", s.label, base.label);
        }
        let mut label = s.label.clone();
        let mut k = 2;
        while labels.contains(&label) {
            label = format!("{}_{k}", s.label);
            k += 1;
        }
        labels.push(label);
    }

    let mut header = vec!["t".to_string()];
    for (i, l) in labels.iter().enumerate() {
        header.push(format!("mean_{l}"));
        header.push(format!("std_{l}"));
        if i > 0 {
            header.push(format!("diff_{l}"));
        }
    }
    header.push("bound".into());

    let exponent = (dim as f64 + 2.0) / (dim as f64 + 3.0);
    let c = base.rows[0].mean_regret / (checkpoints[0] as f64).powf(exponent);
    let columns = (0..checkpoints.len())
        .map(|j| {
            let mut row = Vec::new();
            for (i, s) in summaries.iter().enumerate() {
                row.push(s.rows[j].mean_regret);
                row.push(s.rows[j].std_regret);
                if i > 0 {
                    row.push(s.rows[j].mean_regret - base.rows[j].mean_regret);
                }
            }
            row.push(c * (checkpoints[j] as f64).powf(exponent));
            row
        })
        .collect();
    let slopes = labels
        .into_iter()
        .zip(summaries)
        .map(|(l, s)| {
            let means: Vec<f64> = s.rows.iter().map(|r| r.mean_regret).collect();
            (l, fit_slope(&checkpoints, &means).ok().map(|f| f.slope))
        })
        .collect();
    Ok(Report { header, checkpoints, columns, slopes, bound_exponent: exponent })
}

impl Report {
    fn cells(&self) -> Vec<Vec<String>> {
        self.checkpoints
            .iter()
            .zip(&self.columns)
            .map(|(t, row)| std::iter::once(t.to_string()).chain(row.iter().map(|v| number(*v))).collect())
            .collect()
    }

    /// Fixed-width table followed by one slope line per summary.
    pub fn to_text(&self) -> String {
        let cells = self.cells();
        let widths: Vec<usize> = (0..self.header.len())
            .map(|k| cells.iter().map(|r| r[k].len()).chain([self.header[k].len()]).max().unwrap_or(0))
            .collect();
        let fmt_row = |row: &[String]| {
            row.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect::<Vec<_>>().join("  ")
        };
        let mut out = fmt_row(&self.header);
        out.push('\n');
        for r in &cells {
            out.push_str(&fmt_row(r));
            out.push('\n');
        }
        out.push_str(&format!("bound exponent {}\n", number(self.bound_exponent)));
        for (l, s) in &self.slopes {
            match s {
                Some(s) => out.push_str(&format!("slope {l} {}\n", number(*s))),
                None => out.push_str(&format!("slope {l} unavailable\n")),
            }
        }
        out
    }

    /// CSV form: the table plus one `slope_<label>` column per summary.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .with_context(|| format!("creating {}", path.display()))?;
        let mut header = self.header.clone();
        header.extend(self.slopes.iter().map(|(l, _)| format!("slope_{l}")));
        w.write_record(&header)?;
        for mut row in self.cells() {
            row.extend(self.slopes.iter().map(|(_, s)| s.map(number).unwrap_or_default()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
