use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use setreg::dataset::pairwise_error;
use setreg::Shift;

use crate::register::{run_on_dir, RegisterOpts};

/// CSV columns, in order:
/// set_id, n, status, fitness, mean_error, baseline_error, reduction_pct,
/// repr_ms, tables_ms, ascent_ms, total_ms, message.
/// One row per set, then an `aggregate` footer row (means over the
/// successful sets). status is `ok` or `error`; numeric fields are empty
/// when unavailable (no ground truth, no baseline, failed set).
#[derive(Args, Debug)]
#[command(verbatim_doc_comment)]
pub struct EvalArgs {
    /// Directory whose sub-directories are image sets.
    #[arg(long)]
    pub sets: PathBuf,
    #[command(flatten)]
    pub opts: RegisterOpts,
    /// Register only the first K images of each set.
    #[arg(long)]
    pub subset: Option<usize>,
    /// Name of a per-set baseline offsets file (truth.json format) to
    /// compute the error-reduction column against.
    #[arg(long)]
    pub baseline: Option<String>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

const COLUMNS: [&str; 12] = [
    "set_id",
    "n",
    "status",
    "fitness",
    "mean_error",
    "baseline_error",
    "reduction_pct",
    "repr_ms",
    "tables_ms",
    "ascent_ms",
    "total_ms",
    "message",
];

fn fmt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

// Baseline offsets read from a truth.json-format sidecar, aligned to ids.
fn load_baseline(dir: &Path, name: &str, ids: &[String]) -> Result<Vec<Shift>> {
    let path = dir.join(name);
    let text =
        fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let map: BTreeMap<String, (i32, i32)> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    ids.iter()
        .map(|id| match map.get(id) {
            Some(&(dx, dy)) => Ok(Shift::new(dx, dy)),
            None if id == &ids[0] => Ok(Shift::new(0, 0)),
            None => bail!("{}: no entry for image '{id}'", path.display()),
        })
        .collect()
}

struct Row {
    set_id: String,
    n: Option<usize>,
    fitness: Option<f64>,
    mean_error: Option<f64>,
    baseline_error: Option<f64>,
    reduction_pct: Option<f64>,
    repr_ms: Option<f64>,
    tables_ms: Option<f64>,
    ascent_ms: Option<f64>,
    total_ms: Option<f64>,
    message: Option<String>,
}

fn eval_one(dir: &Path, args: &EvalArgs) -> Result<Row> {
    let outcome = run_on_dir(dir, &args.opts, args.subset)?;
    let report = &outcome.report;
    let mean_error = report.errors.as_ref().map(|e| e.mean);
    let (baseline_error, reduction_pct) = match (&args.baseline, &outcome.truth) {
        (Some(name), Some(truth)) => {
            let ids: Vec<String> = report.offsets.keys().cloned().collect();
            let baseline = load_baseline(dir, name, &ids)?;
            let base_err = pairwise_error(&baseline, truth)?.mean;
            let ours = mean_error.expect("truth present");
            let reduction = if base_err > 0.0 {
                (base_err - ours) / base_err * 100.0
            } else {
                0.0
            };
            (Some(base_err), Some(reduction))
        }
        _ => (None, None),
    };
    Ok(Row {
        set_id: report.set_id.clone(),
        n: Some(report.n),
        fitness: Some(report.fitness),
        mean_error,
        baseline_error,
        reduction_pct,
        repr_ms: Some(report.timings_ms.representation),
        tables_ms: Some(report.timings_ms.tables),
        ascent_ms: Some(report.timings_ms.ascent),
        total_ms: Some(report.timings_ms.total),
        message: None,
    })
}

pub fn run(args: EvalArgs) -> Result<()> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(&args.sets)
        .with_context(|| format!("reading {}", args.sets.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        bail!("{}: no set directories found", args.sets.display());
    }

    let mut rows = Vec::new();
    let mut failures = 0usize;
    for dir in &dirs {
        let set_id = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        match eval_one(dir, &args) {
            Ok(row) => rows.push(row),
            Err(err) => {
                failures += 1;
                rows.push(Row {
                    set_id,
                    n: None,
                    fitness: None,
                    mean_error: None,
                    baseline_error: None,
                    reduction_pct: None,
                    repr_ms: None,
                    tables_ms: None,
                    ascent_ms: None,
                    total_ms: None,
                    message: Some(format!("{err:#}")),
                });
            }
        }
    }

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(COLUMNS)?;
    for row in &rows {
        writer.write_record([
            row.set_id.clone(),
            row.n.map(|n| n.to_string()).unwrap_or_default(),
            if row.message.is_none() { "ok" } else { "error" }.to_string(),
            fmt(row.fitness),
            fmt(row.mean_error),
            fmt(row.baseline_error),
            fmt(row.reduction_pct),
            fmt(row.repr_ms),
            fmt(row.tables_ms),
            fmt(row.ascent_ms),
            fmt(row.total_ms),
            row.message.clone().unwrap_or_default(),
        ])?;
    }
    // aggregate footer over the successful rows
    let ok_rows: Vec<&Row> = rows.iter().filter(|r| r.message.is_none()).collect();
    let mean_of = |f: fn(&Row) -> Option<f64>| -> Option<f64> {
        let values: Vec<f64> = ok_rows.iter().filter_map(|r| f(r)).collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    };
    writer.write_record([
        "aggregate".to_string(),
        ok_rows.len().to_string(),
        if failures == 0 { "ok" } else { "error" }.to_string(),
        fmt(mean_of(|r| r.fitness)),
        fmt(mean_of(|r| r.mean_error)),
        fmt(mean_of(|r| r.baseline_error)),
        fmt(mean_of(|r| r.reduction_pct)),
        fmt(mean_of(|r| r.repr_ms)),
        fmt(mean_of(|r| r.tables_ms)),
        fmt(mean_of(|r| r.ascent_ms)),
        fmt(mean_of(|r| r.total_ms)),
        format!("{failures} failed"),
    ])?;
    let csv_text = String::from_utf8(writer.into_inner()?)?;
    match &args.out {
        Some(path) => {
            fs::write(path, &csv_text).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{csv_text}"),
    }
    if failures > 0 {
        bail!("{failures} of {} sets failed", rows.len());
    }
    Ok(())
}
