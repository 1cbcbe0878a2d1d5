use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::LearnerKind;
use super::diagram::emit_nemenyi_diagram;
use super::runner::{RunReport, ALPHA};
use crate::error::{KrvError, Result};
use crate::stats::{paired_t_test, PairedTTest};

/// Paired t-test of k-RV against ker-NN on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TTestRow {
    pub dataset: String,
    pub test: PairedTTest,
}

/// k-RV vs ker-NN on every dataset where both ran, over the per-fold
/// accuracies of their best cells (identical folds).
pub fn ttest_rows(report: &RunReport) -> Result<Vec<TTestRow>> {
    let mut rows = Vec::new();
    for d in &report.datasets {
        let (Some(a), Some(b)) = (
            report.result(d, LearnerKind::Krv),
            report.result(d, LearnerKind::Kernn),
        ) else {
            continue;
        };
        if a.fold_accuracies.len() < 2 {
            continue;
        }
        rows.push(TTestRow {
            dataset: d.clone(),
            test: paired_t_test(&a.fold_accuracies, &b.fold_accuracies, ALPHA)?,
        });
    }
    Ok(rows)
}

pub fn ttest_csv(rows: &[TTestRow]) -> String {
    let mut out = String::from("dataset,t,df,critical,S\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.dataset,
            r.test.statistic,
            r.test.df,
            r.test.critical,
            r.test.decision()
        );
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

pub fn accuracy_csv(report: &RunReport) -> String {
    let mut out = String::from("dataset");
    for l in &report.learners {
        let _ = write!(out, ",{l}");
    }
    out.push('\n');
    for (d, row) in report.datasets.iter().zip(report.accuracy_matrix()) {
        out.push_str(d);
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

fn aligned(header: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(String::len).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| {
                if i == 0 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(header);
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

pub fn accuracy_text(report: &RunReport) -> String {
    let header: Vec<String> = std::iter::once("dataset".to_string())
        .chain(report.learners.iter().map(|l| l.to_string()))
        .collect();
    let rows: Vec<Vec<String>> = report
        .datasets
        .iter()
        .map(|d| {
            std::iter::once(d.clone())
                .chain(report.learners.iter().map(|&l| match report.result(d, l) {
                    Some(r) => format!("{:.4} ± {:.4}", r.mean_accuracy, r.std_accuracy),
                    None => "-".to_string(),
                }))
                .collect()
        })
        .collect();
    aligned(&header, &rows)
}

pub fn best_csv(report: &RunReport) -> String {
    let mut out =
        String::from("dataset,learner,k,width,delta,mean_accuracy,std_accuracy,seed,cells\n");
    for r in &report.results {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.dataset,
            r.learner,
            r.best.k.map_or(String::new(), |k| k.to_string()),
            opt(r.best.width),
            opt(r.best.delta),
            r.mean_accuracy,
            r.std_accuracy,
            r.seed,
            r.cells
        );
    }
    out
}

pub fn sparsity_csv(report: &RunReport) -> String {
    let mut out = String::from("dataset,learner,rv_count,width,delta,used_fraction,k,seed\n");
    for r in report.results.iter().filter(|r| r.learner.is_sparse()) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.dataset,
            r.learner,
            opt(r.rv_count),
            opt(r.best.width),
            opt(r.best.delta),
            opt(r.used_fraction),
            r.best.k.map_or(String::new(), |k| k.to_string()),
            r.seed
        );
    }
    out
}

/// `(# RV, width, delta, # used)` per dataset and sparse learner.
pub fn sparsity_text(report: &RunReport) -> String {
    let header: Vec<String> = ["dataset", "learner", "(# RV, width, delta, # used)"]
        .map(String::from)
        .to_vec();
    let rows: Vec<Vec<String>> = report
        .results
        .iter()
        .filter(|r| r.learner.is_sparse())
        .map(|r| {
            vec![
                r.dataset.clone(),
                r.learner.to_string(),
                format!(
                    "({:.1}, {}, {}, {:.4})",
                    r.rv_count.unwrap_or(f64::NAN),
                    r.best.width.map_or("-".to_string(), |w| w.to_string()),
                    r.best.delta.map_or("-".to_string(), |d| format!("{d:e}")),
                    r.used_fraction.unwrap_or(f64::NAN)
                ),
            ]
        })
        .collect();
    aligned(&header, &rows)
}

pub fn folds_csv(report: &RunReport) -> String {
    let mut out = String::from("dataset,learner,run,fold,seed,accuracy\n");
    for r in &report.results {
        for (i, a) in r.fold_accuracies.iter().enumerate() {
            let run = i / report.folds;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.dataset,
                r.learner,
                run,
                i % report.folds,
                r.seed.wrapping_add(run as u64),
                a
            );
        }
    }
    out
}

pub fn timings_csv(report: &RunReport) -> String {
    let mut out = String::from("dataset,learner,train_secs,test_secs\n");
    for t in &report.timings {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6}",
            t.dataset, t.learner, t.train_secs, t.test_secs
        );
    }
    out
}

pub fn summary_text(report: &RunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "kernel: {}", report.kernel);
    let _ = writeln!(
        out,
        "protocol: {} run(s) of {}-fold cross validation, seed {}",
        report.runs, report.folds, report.seed
    );
    let _ = writeln!(out, "evaluated grid cells: {}", report.evaluated_cells);
    out.push_str(
        "note: hyperparameters are selected on the same cross validation that \
         reports accuracy, so accuracies are optimistic\n",
    );
    for (path, reason) in &report.skipped {
        let _ = writeln!(out, "skipped {path}: {reason}");
    }
    out
}

fn write(dir: &Path, name: &str, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| KrvError::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes every report table (CSV and aligned text), the rank statistics
/// and the Nemenyi diagram into `dir`. Everything except `timings.csv` is
/// a pure function of the report values.
pub fn emit_tables(report: &RunReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| KrvError::io(dir, e))?;
    let mut written = Vec::new();
    write(dir, "accuracy.csv", &accuracy_csv(report), &mut written)?;
    write(dir, "accuracy.txt", &accuracy_text(report), &mut written)?;
    write(dir, "best.csv", &best_csv(report), &mut written)?;
    write(dir, "sparsity.csv", &sparsity_csv(report), &mut written)?;
    write(dir, "sparsity.txt", &sparsity_text(report), &mut written)?;
    write(dir, "folds.csv", &folds_csv(report), &mut written)?;
    let tt = ttest_rows(report)?;
    if !tt.is_empty() {
        write(dir, "ttest.csv", &ttest_csv(&tt), &mut written)?;
    }
    if let Some(ranks) = &report.ranks {
        write(dir, "ranks.csv", &ranks.to_csv(), &mut written)?;
        write(dir, "ranks.txt", &ranks.to_text(), &mut written)?;
        let svg = dir.join("nemenyi.svg");
        emit_nemenyi_diagram(ranks, &svg)?;
        written.push(svg);
    }
    write(dir, "summary.txt", &summary_text(report), &mut written)?;
    write(dir, "timings.csv", &timings_csv(report), &mut written)?;
    Ok(written)
}

/// Learner names, dataset names and the dataset-major accuracy rows.
pub type AccuracyTable = (Vec<String>, Vec<String>, Vec<Vec<f64>>);

/// Reads the learner x dataset table written as `accuracy.csv`.
pub fn read_accuracy_csv(path: impl AsRef<Path>) -> Result<AccuracyTable> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| KrvError::Config(format!("{}: {e}", path.display())))?;
    let header = reader
        .headers()
        .map_err(|e| KrvError::Config(e.to_string()))?
        .clone();
    let learners: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut datasets = Vec::new();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| KrvError::Config(e.to_string()))?;
        if rec.len() != learners.len() + 1 {
            return Err(KrvError::RaggedRow {
                row: i + 1,
                expected: learners.len() + 1,
                found: rec.len(),
            });
        }
        datasets.push(rec[0].to_string());
        let row = rec
            .iter()
            .skip(1)
            .enumerate()
            .map(|(c, v)| {
                v.parse::<f64>().map_err(|_| KrvError::NonNumeric {
                    row: i + 1,
                    column: c + 1,
                    value: v.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((learners, datasets, rows))
}
