use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;
use setreg::dataset::{load_set, registration_error, GroundTruth, PairwiseErrors};
use setreg::graph::{build_graph, distance_matrix, GraphConfig, GraphScheme};
use setreg::io::save_pgm_normalized;
use setreg::optimizer::{register_set_with_diagnostics, LevelTrace, OptimizerConfig};
use setreg::representation::{abs_highpass, PyramidSchedule};
use setreg::{CorrelationParams, ImageSet, Shift};

/// Registration options shared by `register` and `eval`.
#[derive(Args, Debug, Clone)]
pub struct RegisterOpts {
    /// Blur bandwidth schedule, coarse to fine.
    #[arg(long, value_delimiter = ',', default_values_t = [40.0, 20.0, 8.0, 3.0])]
    pub sigmas: Vec<f64>,
    /// Active graph schemes: knn, threshold-near, kfurthest, threshold-far.
    #[arg(long, value_delimiter = ',', default_values_t = [String::from("knn"), String::from("kfurthest")])]
    pub schemes: Vec<String>,
    #[arg(long, default_value_t = 3)]
    pub k_near: usize,
    #[arg(long, default_value_t = 3)]
    pub k_far: usize,
    /// Proximity threshold for threshold-near.
    #[arg(long)]
    pub d_near: Option<f64>,
    /// Remoteness threshold for threshold-far.
    #[arg(long)]
    pub d_far: Option<f64>,
    /// Search-window bound in pixels.
    #[arg(long, default_value_t = 128)]
    pub max_shift: i32,
    /// Minimum overlap as a fraction of image area.
    #[arg(long, default_value_t = 0.25)]
    pub min_overlap: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iterations: usize,
}

#[derive(Args, Debug)]
pub struct RegisterArgs {
    /// Directory holding the image set (PNG/PGM files + optional truth.json).
    pub set_dir: PathBuf,
    #[command(flatten)]
    pub opts: RegisterOpts,
    /// Register only the first K images of the set.
    #[arg(long)]
    pub subset: Option<usize>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write the constraints graph (nodes, edges, distances) as JSON.
    #[arg(long)]
    pub dump_graph: Option<PathBuf>,
    /// Write per-level ABS-HP representations as PGM files into this
    /// directory.
    #[arg(long)]
    pub dump_representations: Option<PathBuf>,
}

/// Effective, fully-resolved configuration echoed into every report.
#[derive(Debug, Serialize)]
pub struct ConfigEcho {
    pub sigmas: Vec<f64>,
    pub schemes: Vec<String>,
    pub k_near: usize,
    pub k_far: usize,
    pub d_near: Option<f64>,
    pub d_far: Option<f64>,
    pub max_shift: i32,
    pub min_overlap: f64,
    pub max_iterations: usize,
    pub subset: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct TimingsMs {
    pub representation: f64,
    pub tables: f64,
    pub ascent: f64,
    pub total: f64,
}

/// Machine-readable result of one registration run.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub set_id: String,
    pub n: usize,
    pub config: ConfigEcho,
    pub offsets: BTreeMap<String, Shift>,
    pub fitness: f64,
    pub trace: Vec<LevelTrace>,
    pub errors: Option<PairwiseErrors>,
    pub timings_ms: TimingsMs,
    pub warnings: Vec<String>,
}

pub fn parse_schemes(names: &[String]) -> Result<Vec<GraphScheme>> {
    names
        .iter()
        .map(|s| match s.as_str() {
            "knn" => Ok(GraphScheme::Knn),
            "threshold-near" => Ok(GraphScheme::ThresholdNear),
            "kfurthest" => Ok(GraphScheme::KFurthest),
            "threshold-far" => Ok(GraphScheme::ThresholdFar),
            other => bail!(
                "unknown scheme '{other}' (expected knn, threshold-near, kfurthest, threshold-far)"
            ),
        })
        .collect()
}

pub struct RunOutcome {
    pub report: RunReport,
    pub truth: Option<GroundTruth>,
}

/// Loads, optionally subsets, registers and scores one set directory.
pub fn run_on_dir(dir: &Path, opts: &RegisterOpts, subset: Option<usize>) -> Result<RunOutcome> {
    let (full_set, full_truth) = load_set(dir)?;
    let (set, truth) = match subset {
        Some(k) => {
            if k < 2 || k > full_set.len() {
                bail!(
                    "--subset {k} outside 2..={} for {}",
                    full_set.len(),
                    dir.display()
                );
            }
            let truth = match &full_truth {
                Some(t) => Some(GroundTruth::new(t.offsets[..k].to_vec())?),
                None => None,
            };
            (full_set.head(k)?, truth)
        }
        None => (full_set, full_truth),
    };

    let mut warnings = Vec::new();
    let requested = GraphConfig {
        schemes: parse_schemes(&opts.schemes)?,
        k_near: opts.k_near,
        k_far: opts.k_far,
        d_thres_near: opts.d_near,
        d_thres_far: opts.d_far,
    };
    let gcfg = requested.clamped_for(set.len());
    if gcfg.k_near != requested.k_near || gcfg.k_far != requested.k_far {
        warnings.push(format!(
            "neighbour counts clamped to n-1={}: k_near {} -> {}, k_far {} -> {}",
            set.len() - 1,
            requested.k_near,
            gcfg.k_near,
            requested.k_far,
            gcfg.k_far
        ));
    }
    let ocfg = OptimizerConfig {
        schedule: PyramidSchedule::new(opts.sigmas.clone())?,
        max_iterations_per_level: opts.max_iterations,
    };
    let ccfg = CorrelationParams {
        max_shift: opts.max_shift,
        min_overlap_frac: opts.min_overlap,
    };

    let (solution, diagnostics) = register_set_with_diagnostics(&set, &gcfg, &ocfg, ccfg)?;
    if !diagnostics.isolated_nodes.is_empty() {
        warnings.push(format!(
            "isolated nodes (no incident edges): {:?}",
            diagnostics.isolated_nodes
        ));
    }
    if diagnostics.component_count > 1 {
        warnings.push(format!(
            "graph has {} weakly-connected components; each converges in its own gauge",
            diagnostics.component_count
        ));
    }

    let errors = match &truth {
        Some(t) => Some(registration_error(&solution, t)?),
        None => None,
    };
    let report = RunReport {
        set_id: dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string()),
        n: set.len(),
        config: ConfigEcho {
            sigmas: opts.sigmas.clone(),
            schemes: opts.schemes.clone(),
            k_near: gcfg.k_near,
            k_far: gcfg.k_far,
            d_near: opts.d_near,
            d_far: opts.d_far,
            max_shift: opts.max_shift,
            min_overlap: opts.min_overlap,
            max_iterations: opts.max_iterations,
            subset,
        },
        offsets: set
            .ids()
            .iter()
            .cloned()
            .zip(solution.offsets.iter().copied())
            .collect(),
        fitness: solution.fitness,
        trace: solution.trace.clone(),
        errors,
        timings_ms: TimingsMs {
            representation: diagnostics.representation_ms,
            tables: diagnostics.tables_ms,
            ascent: diagnostics.ascent_ms,
            total: diagnostics.representation_ms + diagnostics.tables_ms + diagnostics.ascent_ms,
        },
        warnings,
    };
    Ok(RunOutcome { report, truth })
}

fn dump_graph(set: &ImageSet, opts: &RegisterOpts, path: &Path) -> Result<()> {
    let gcfg = GraphConfig {
        schemes: parse_schemes(&opts.schemes)?,
        k_near: opts.k_near,
        k_far: opts.k_far,
        d_thres_near: opts.d_near,
        d_thres_far: opts.d_far,
    }
    .clamped_for(set.len());
    let dist = distance_matrix(set)?;
    let graph = build_graph(&dist, &gcfg)?;
    let json = graph.dump_json(set.ids());
    fs::write(path, serde_json::to_string_pretty(&json)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn dump_representations(set: &ImageSet, sigmas: &[f64], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for &sigma in sigmas {
        for (img, id) in set.images().iter().zip(set.ids()) {
            let rep = abs_highpass(img, sigma, id.clone())?;
            let stem = id.trim_end_matches(".png").trim_end_matches(".pgm");
            save_pgm_normalized(rep.grid(), dir.join(format!("{stem}_sigma{sigma}.pgm")))?;
        }
    }
    Ok(())
}

pub fn run(args: RegisterArgs) -> Result<()> {
    let outcome = run_on_dir(&args.set_dir, &args.opts, args.subset)?;

    if args.dump_graph.is_some() || args.dump_representations.is_some() {
        let (full_set, _) = load_set(&args.set_dir)?;
        let set = match args.subset {
            Some(k) => full_set.head(k)?,
            None => full_set,
        };
        if let Some(path) = &args.dump_graph {
            dump_graph(&set, &args.opts, path)?;
        }
        if let Some(dir) = &args.dump_representations {
            dump_representations(&set, &args.opts.sigmas, dir)?;
        }
    }

    let json = serde_json::to_string_pretty(&outcome.report)?;
    match &args.out {
        Some(path) => {
            fs::write(path, &json).with_context(|| format!("writing {}", path.display()))?
        }
        None => println!("{json}"),
    }
    for warning in &outcome.report.warnings {
        eprintln!("warning: {warning}");
    }
    if let Some(errors) = &outcome.report.errors {
        eprintln!(
            "mean pairwise error: {:.3} px over {} pairs",
            errors.mean,
            errors.pairs.len()
        );
    }
    Ok(())
}
