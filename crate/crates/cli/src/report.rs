use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use evbattery::capacity::CapacityReport;
use evbattery::evalkit::EvalReport;

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub algorithm: String,
    pub metric: &'static str,
    /// `mean±std`, as stored in the run's report.
    pub summary: String,
    pub rounds: Vec<f64>,
    pub run: String,
}

fn read<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<Option<T>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?))
}

/// Rows from every run, ordered by algorithm then metric then run.
pub fn collect_rows(runs: &[PathBuf]) -> anyhow::Result<Vec<TableRow>> {
    let mut rows = Vec::new();
    for dir in runs {
        let run = dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned());
        let mut found = false;
        if let Some(r) = read::<EvalReport>(&dir.join("report.json"))? {
            rows.push(TableRow {
                algorithm: r.algorithm.clone(),
                metric: "AUROC (%)",
                summary: r.summary.clone(),
                rounds: r.rounds.iter().map(|x| x.auroc * 100.0).collect(),
                run: run.clone(),
            });
            found = true;
        }
        if let Some(r) = read::<CapacityReport>(&dir.join("capacity_report.json"))? {
            rows.push(TableRow {
                algorithm: r.regressor.clone(),
                metric: "RMSE (A·h)",
                summary: r.summary.clone(),
                rounds: r.rounds.iter().map(|x| x.rmse).collect(),
                run,
            });
            found = true;
        }
        if !found {
            bail!("{} holds neither report.json nor capacity_report.json", dir.display());
        }
    }
    rows.sort_by(|a, b| (&a.algorithm, a.metric, &a.run).cmp(&(&b.algorithm, b.metric, &b.run)));
    Ok(rows)
}

fn rounds_text(r: &TableRow) -> String {
    let decimals = if r.metric.starts_with("AUROC") { 1 } else { 2 };
    r.rounds.iter().map(|v| format!("{v:.decimals$}")).collect::<Vec<_>>().join(" ")
}

pub fn render_text(rows: &[TableRow]) -> String {
    let header = ["algorithm", "metric", "mean±std", "rounds", "run"];
    let cells: Vec<[String; 5]> = rows
        .iter()
        .map(|r| [r.algorithm.clone(), r.metric.to_string(), r.summary.clone(), rounds_text(r), r.run.clone()])
        .collect();
    let mut widths = header.map(|h| h.chars().count());
    for c in &cells {
        for (w, s) in widths.iter_mut().zip(c) {
            *w = (*w).max(s.chars().count());
        }
    }
    let mut out = String::new();
    let mut line = |fields: &[String]| {
        let padded: Vec<String> = fields
            .iter()
            .zip(&widths)
            .map(|(s, &w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(&header.map(String::from));
    for c in &cells {
        line(c);
    }
    out
}

pub fn write_csv(path: &Path, rows: &[TableRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["algorithm", "metric", "mean_std", "rounds", "run"])?;
    for r in rows {
        w.write_record([r.algorithm.as_str(), r.metric, &r.summary, &rounds_text(r), &r.run])?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_report(runs: &[PathBuf], out: &Path) -> anyhow::Result<()> {
    let rows = collect_rows(runs)?;
    fs::create_dir_all(out)?;
    write_csv(&out.join("report_table.csv"), &rows)?;
    let text = render_text(&rows);
    fs::write(out.join("report_table.txt"), &text)?;
    print!("{text}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(alg: &str, run: &str) -> TableRow {
        TableRow {
            algorithm: alg.into(),
            metric: "AUROC (%)",
            summary: "77.9±5.0".into(),
            rounds: vec![70.0, 80.26],
            run: run.into(),
        }
    }

    #[test]
    fn text_table_is_aligned() {
        let t = render_text(&[row("ae", "r1"), row("dyad", "r2")]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("ae         AUROC (%)  77.9±5.0  70.0 80.3"), "{t}");
        assert_eq!(lines[1].find("AUROC"), lines[2].find("AUROC"));
    }
}
