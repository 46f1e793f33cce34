//! CSV tables (and optional SVG charts) regenerated from run manifests.
//! Output is a pure function of the manifests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::ssl::{MetaEpochRecord, RunResult};

pub const CURVES_CSV: &str = "curves.csv";
pub const COMPARISON_CSV: &str = "comparison.csv";
pub const UNLABELED_CSV: &str = "unlabeled.csv";
pub const SWEEP_CSV: &str = "sweep.csv";

/// A manifest and the name it is reported under.
#[derive(Debug, Clone)]
pub struct NamedRun {
    pub name: String,
    pub result: RunResult,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportBundle {
    pub curves: PathBuf,
    pub comparison: PathBuf,
    pub unlabeled: PathBuf,
    pub sweep: PathBuf,
    pub charts: Vec<PathBuf>,
}

/// Loads manifests, naming each run after its file stem.
pub fn load_runs(paths: &[PathBuf]) -> Result<Vec<NamedRun>> {
    paths
        .iter()
        .map(|p| {
            Ok(NamedRun {
                name: p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| p.display().to_string()),
                result: RunResult::load(p)?,
            })
        })
        .collect()
}

fn f(v: f64) -> String {
    format!("{v:.6}")
}

fn opt(v: Option<f64>) -> String {
    v.map(f).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(&row)?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn run_columns(run: &NamedRun) -> Vec<String> {
    let r = &run.result;
    vec![
        run.name.clone(),
        r.framework().to_string(),
        r.seed().to_string(),
        r.manifest.split.labeled_fraction.to_string(),
    ]
}

fn curve_row(run: &NamedRun, rec: &MetaEpochRecord) -> Vec<String> {
    let q = rec.quadrant_ratios;
    let mut row = run_columns(run);
    row.extend([
        rec.meta_epoch.to_string(),
        f(rec.test_accuracy_rand),
        f(rec.test_accuracy_emb),
        opt(q.map(|q| q.tt)),
        opt(q.map(|q| q.tf)),
        opt(q.map(|q| q.ft)),
        opt(q.map(|q| q.ff)),
        rec.n_selected.to_string(),
        rec.pool_remaining.to_string(),
    ]);
    row
}

/// Test accuracies (rand, emb) reported as the run's final row.
fn final_accuracies(r: &RunResult) -> (f64, f64) {
    match &r.output.flood {
        Some(flood) => (flood.test_accuracy_rand, flood.test_accuracy_emb),
        None => {
            let best = &r.output.records[r.output.best_meta_epoch];
            (best.test_accuracy_rand, r.output.final_test_accuracy)
        }
    }
}

pub fn emit_reports(runs: &[NamedRun], out_dir: &Path, svg: bool) -> Result<ReportBundle> {
    if runs.is_empty() {
        return Err(Error::NoRuns);
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let head = ["run", "framework", "seed", "labeled_fraction"];

    let mut curves = Vec::new();
    let mut comparison = Vec::new();
    let mut unlabeled = Vec::new();
    let mut sweep = Vec::new();
    for run in runs {
        let r = &run.result;
        for rec in &r.output.records {
            curves.push(curve_row(run, rec));
            let mut row = run_columns(run);
            row.extend([
                rec.meta_epoch.to_string(),
                f(rec.dev_accuracy_emb),
                f(rec.test_accuracy_emb),
            ]);
            comparison.push(row);
        }
        let (final_rand, final_emb) = final_accuracies(r);
        let mut row = run_columns(run);
        row.extend([
            "final".to_string(),
            f(final_rand),
            f(final_emb),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            r.output
                .flood
                .as_ref()
                .map(|fl| fl.n_flooded)
                .unwrap_or(0)
                .to_string(),
            "0".to_string(),
        ]);
        curves.push(row);
        let mut row = run_columns(run);
        let final_dev = r
            .output
            .flood
            .as_ref()
            .map(|fl| fl.dev_accuracy_emb)
            .unwrap_or(r.output.records[r.output.best_meta_epoch].dev_accuracy_emb);
        row.extend([
            "final".to_string(),
            f(final_dev),
            f(r.output.final_test_accuracy),
        ]);
        comparison.push(row);

        let start = r
            .output
            .records
            .first()
            .and_then(|rec| rec.unlabeled_accuracy_emb);
        for rec in &r.output.records {
            let mut row = run_columns(run);
            let drop = start.zip(rec.unlabeled_accuracy_emb).map(|(s, a)| s - a);
            row.extend([
                rec.meta_epoch.to_string(),
                opt(rec.unlabeled_accuracy_rand),
                opt(rec.unlabeled_accuracy_emb),
                opt(drop),
            ]);
            unlabeled.push(row);
        }

        let mut row = run_columns(run);
        row.extend([
            r.manifest.split.train_size.to_string(),
            r.output.best_meta_epoch.to_string(),
            f(r.output.records[r.output.best_meta_epoch].test_accuracy_emb),
            f(r.output.final_test_accuracy),
        ]);
        sweep.push(row);
    }

    let with = |extra: &[&'static str]| -> Vec<&'static str> {
        head.iter().chain(extra).copied().collect()
    };
    let bundle = ReportBundle {
        curves: out_dir.join(CURVES_CSV),
        comparison: out_dir.join(COMPARISON_CSV),
        unlabeled: out_dir.join(UNLABELED_CSV),
        sweep: out_dir.join(SWEEP_CSV),
        charts: if svg {
            runs.iter()
                .map(|r| out_dir.join(format!("{}.svg", r.name)))
                .collect()
        } else {
            Vec::new()
        },
    };
    write_csv(
        &bundle.curves,
        &with(&[
            "meta_epoch",
            "acc_rand_test",
            "acc_emb_test",
            "TT",
            "TF",
            "FT",
            "FF",
            "n_selected",
            "pool_remaining",
        ]),
        curves,
    )?;
    write_csv(
        &bundle.comparison,
        &with(&["meta_epoch", "acc_emb_dev", "acc_emb_test"]),
        comparison,
    )?;
    write_csv(
        &bundle.unlabeled,
        &with(&[
            "meta_epoch",
            "acc_rand_unlabeled",
            "acc_emb_unlabeled",
            "drop_from_start",
        ]),
        unlabeled,
    )?;
    write_csv(
        &bundle.sweep,
        &with(&[
            "train_size",
            "best_meta_epoch",
            "best_test_accuracy",
            "final_test_accuracy",
        ]),
        sweep,
    )?;
    for (run, path) in runs.iter().zip(&bundle.charts) {
        fs::write(path, run_chart(run)).map_err(|e| Error::io(path, e))?;
    }
    Ok(bundle)
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;

/// Test accuracy of both sides plus the TF and FT pool ratios, over
/// meta-epochs, on a shared [0, 1] axis.
pub fn run_chart(run: &NamedRun) -> String {
    let records = &run.result.output.records;
    let series: [(&str, &str, Vec<Option<f64>>); 4] = [
        (
            "acc_rand_test",
            "#1f77b4",
            records.iter().map(|r| Some(r.test_accuracy_rand)).collect(),
        ),
        (
            "acc_emb_test",
            "#d62728",
            records.iter().map(|r| Some(r.test_accuracy_emb)).collect(),
        ),
        (
            "TF",
            "#2ca02c",
            records
                .iter()
                .map(|r| r.quadrant_ratios.map(|q| q.tf))
                .collect(),
        ),
        (
            "FT",
            "#9467bd",
            records
                .iter()
                .map(|r| r.quadrant_ratios.map(|q| q.ft))
                .collect(),
        ),
    ];
    let n = records.len().max(2) - 1;
    let x = |i: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / n as f64;
    let y = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * v.clamp(0.0, 1.0);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN}" y="24" font-family="sans-serif" font-size="14">{} ({}, seed {})</text>"#,
        run.name,
        run.result.framework(),
        run.result.seed()
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{MARGIN},{MARGIN} V{} H{}" stroke="black" fill="none"/>"#,
        HEIGHT - MARGIN,
        WIDTH - MARGIN
    );
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="end">{v:.2}</text>"#,
            MARGIN - 4.0,
            y(v) + 3.0
        );
    }
    for (i, rec) in records.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{}" font-family="sans-serif" font-size="10" text-anchor="middle">{}</text>"#,
            x(i),
            HEIGHT - MARGIN + 14.0,
            rec.meta_epoch
        );
    }
    for (k, (name, color, values)) in series.iter().enumerate() {
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| format!("{:.1},{:.1}", x(i), y(v))))
            .collect();
        if !points.is_empty() {
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" stroke="{color}" stroke-width="2" fill="none"/>"#,
                points.join(" ")
            );
        }
        let ly = MARGIN + 14.0 * k as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{ly}" font-family="sans-serif" font-size="11" fill="{color}">{name}</text>"#,
            WIDTH - MARGIN - 80.0
        );
    }
    if let Some(flood) = &run.result.output.flood {
        let _ = writeln!(
            svg,
            r##"<line x1="{MARGIN}" x2="{}" y1="{:.1}" y2="{:.1}" stroke="#d62728" stroke-dasharray="4 3"/>"##,
            WIDTH - MARGIN,
            y(flood.test_accuracy_emb),
            y(flood.test_accuracy_emb)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
