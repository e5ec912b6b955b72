//! Fitness evaluation and its maximization: greedy best-single-move ascent
//! over the integer shift lattice, wrapped in the coarse-to-fine bandwidth
//! schedule. Image 1 is pinned at zero shift throughout.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::correlation::{build_tables, CorrelationParams, EdgeTables};
use crate::error::{Result, SetRegError};
use crate::graph::{build_graph, distance_matrix, ConstraintsGraph, GraphConfig};
use crate::grid::{ImageSet, Shift, ZERO_SHIFT};
use crate::representation::{representations, PyramidSchedule};

/// Candidate unit moves in tie-break order: N, NE, E, SE, S, SW, W, NW
/// (y grows downwards).
pub const KING_MOVES: [Shift; 8] = [
    Shift { dx: 0, dy: -1 },
    Shift { dx: 1, dy: -1 },
    Shift { dx: 1, dy: 0 },
    Shift { dx: 1, dy: 1 },
    Shift { dx: 0, dy: 1 },
    Shift { dx: -1, dy: 1 },
    Shift { dx: -1, dy: 0 },
    Shift { dx: -1, dy: -1 },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub schedule: PyramidSchedule,
    pub max_iterations_per_level: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            schedule: PyramidSchedule::default(),
            max_iterations_per_level: 10_000,
        }
    }
}

impl OptimizerConfig {
    fn validate(&self) -> Result<()> {
        if self.max_iterations_per_level == 0 {
            return Err(SetRegError::InvalidConfig(
                "max_iterations_per_level must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Convergence record for one bandwidth level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTrace {
    pub sigma: f64,
    pub iterations: usize,
    /// Fitness at level start, then after each accepted move.
    pub fitness_history: Vec<f64>,
    pub fitness: f64,
    pub converged: bool,
}

/// Result of one ascent run at a fixed bandwidth.
#[derive(Debug, Clone)]
pub struct LevelAscent {
    pub offsets: Vec<Shift>,
    pub iterations: usize,
    pub fitness_history: Vec<f64>,
    pub converged: bool,
}

/// Joint registration of a set: per-image offsets relative to image 1,
/// final fitness and the per-level convergence trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationSolution {
    pub offsets: Vec<Shift>,
    pub fitness: f64,
    pub trace: Vec<LevelTrace>,
}

impl RegistrationSolution {
    /// JSON view pairing each image id with its offset.
    pub fn to_json(&self, ids: &[String]) -> serde_json::Value {
        let offsets: serde_json::Map<String, serde_json::Value> = ids
            .iter()
            .zip(&self.offsets)
            .map(|(id, s)| (id.clone(), serde_json::json!([s.dx, s.dy])))
            .collect();
        serde_json::json!({
            "offsets": offsets,
            "fitness": self.fitness,
            "trace": self.trace,
        })
    }
}

/// Per-stage wall-clock accumulated across levels, plus graph diagnostics.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub representation_ms: f64,
    pub tables_ms: f64,
    pub ascent_ms: f64,
    pub isolated_nodes: Vec<usize>,
    pub component_count: usize,
}

/// Fitness of an offset assignment: the sum over all active edges (i, j) of
/// the correlation coefficient at relative shift `offsets[i] - offsets[j]`.
pub fn fitness(offsets: &[Shift], graph: &ConstraintsGraph, tables: &EdgeTables) -> Result<f64> {
    if offsets.len() != graph.n() {
        return Err(SetRegError::InvalidInput(format!(
            "{} offsets for a {}-node graph",
            offsets.len(),
            graph.n()
        )));
    }
    let mut total = 0.0;
    for (i, j) in graph.edges() {
        total += tables
            .rho(i, j, offsets[i] - offsets[j])
            .ok_or(SetRegError::MissingTable(i, j))?;
    }
    Ok(total)
}

// Directed edges incident to each variable, split by orientation.
struct Incidence {
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
}

impl Incidence {
    fn new(graph: &ConstraintsGraph) -> Self {
        let n = graph.n();
        let mut out_edges = vec![Vec::new(); n];
        let mut in_edges = vec![Vec::new(); n];
        for (i, j) in graph.edges() {
            out_edges[i].push(j);
            in_edges[j].push(i);
        }
        Incidence {
            out_edges,
            in_edges,
        }
    }

    // Fitness change from moving variable k by `step`, touching only the
    // terms incident to k. Edges to `frozen` are skipped (used for paired
    // moves, where the internal term is unchanged).
    fn delta(
        &self,
        tables: &EdgeTables,
        offsets: &[Shift],
        k: usize,
        step: Shift,
        frozen: Option<usize>,
    ) -> Result<f64> {
        let mut delta = 0.0;
        for &j in &self.out_edges[k] {
            if Some(j) == frozen {
                continue;
            }
            let old = offsets[k] - offsets[j];
            delta += tables.rho(k, j, old + step).ok_or(SetRegError::MissingTable(k, j))?
                - tables.rho(k, j, old).ok_or(SetRegError::MissingTable(k, j))?;
        }
        for &i in &self.in_edges[k] {
            if Some(i) == frozen {
                continue;
            }
            let old = offsets[i] - offsets[k];
            delta += tables.rho(i, k, old - step).ok_or(SetRegError::MissingTable(i, k))?
                - tables.rho(i, k, old).ok_or(SetRegError::MissingTable(i, k))?;
        }
        Ok(delta)
    }

    // Fitness change from moving variables k and l together by `step`.
    // The relative shift between k and l is unchanged, so their mutual
    // edges drop out.
    fn pair_delta(
        &self,
        tables: &EdgeTables,
        offsets: &[Shift],
        k: usize,
        l: usize,
        step: Shift,
    ) -> Result<f64> {
        Ok(self.delta(tables, offsets, k, step, Some(l))?
            + self.delta(tables, offsets, l, step, Some(k))?)
    }

    // Fitness change from moving every member of `group` rigidly by `step`.
    // Only edges crossing the group boundary contribute.
    fn group_delta(
        &self,
        tables: &EdgeTables,
        offsets: &[Shift],
        group: &[bool],
        step: Shift,
    ) -> Result<f64> {
        let mut delta = 0.0;
        for (k, &inside) in group.iter().enumerate() {
            if !inside {
                continue;
            }
            for &j in &self.out_edges[k] {
                if group[j] {
                    continue;
                }
                let old = offsets[k] - offsets[j];
                delta += tables.rho(k, j, old + step).ok_or(SetRegError::MissingTable(k, j))?
                    - tables.rho(k, j, old).ok_or(SetRegError::MissingTable(k, j))?;
            }
            for &i in &self.in_edges[k] {
                if group[i] {
                    continue;
                }
                let old = offsets[i] - offsets[k];
                delta += tables.rho(i, k, old - step).ok_or(SetRegError::MissingTable(i, k))?
                    - tables.rho(i, k, old).ok_or(SetRegError::MissingTable(i, k))?;
            }
        }
        Ok(delta)
    }

    // Sum of the terms incident to variable k with k placed at `at`.
    fn conditional_value(
        &self,
        tables: &EdgeTables,
        offsets: &[Shift],
        k: usize,
        at: Shift,
    ) -> Result<f64> {
        let mut total = 0.0;
        for &j in &self.out_edges[k] {
            total += tables
                .rho(k, j, at - offsets[j])
                .ok_or(SetRegError::MissingTable(k, j))?;
        }
        for &i in &self.in_edges[k] {
            total += tables
                .rho(i, k, offsets[i] - at)
                .ok_or(SetRegError::MissingTable(i, k))?;
        }
        Ok(total)
    }

    // Undirected canonical edges incident anywhere in the graph.
    fn canonical_edges(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::new();
        for (i, outs) in self.out_edges.iter().enumerate() {
            for &j in outs {
                let e = (i.min(j), i.max(j));
                if !edges.contains(&e) {
                    edges.push(e);
                }
            }
        }
        edges.sort_unstable();
        edges
    }
}

// In-window argmax of every canonical pair table; independent of the
// current offsets, so it is computed once per level and reused.
fn edge_argmaxes(
    incidence: &Incidence,
    tables: &EdgeTables,
) -> Result<std::collections::BTreeMap<(usize, usize), Shift>> {
    let mut map = std::collections::BTreeMap::new();
    for (i, j) in incidence.canonical_edges() {
        let table = tables.get(i, j).ok_or(SetRegError::MissingTable(i, j))?;
        map.insert((i, j), table.argmax().0);
    }
    Ok(map)
}

// Connected components over edges sitting exactly at their in-window peak.
// A rigidly displaced group keeps all its internal edges at their peaks
// while its boundary edges are off-peak; moving the whole component is the
// escape direction.
fn peak_components(
    argmaxes: &std::collections::BTreeMap<(usize, usize), Shift>,
    offsets: &[Shift],
) -> Vec<Vec<usize>> {
    let n = offsets.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, x: usize) -> usize {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = x;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for (&(i, j), &peak) in argmaxes {
        if offsets[i] - offsets[j] == peak {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri != rj {
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for v in 0..n {
        let r = find(&mut parent, v);
        groups.entry(r).or_default().push(v);
    }
    groups.into_values().collect()
}

/// Steepest ascent at one bandwidth level: repeatedly applies the single
/// unit move (over variables 2..n and the eight king moves) with the largest
/// strictly positive fitness gain, until no move improves or the iteration
/// cap is hit. Ties break to the lowest variable index, then move order.
///
/// When no single-variable move improves, three escape tiers run before
/// declaring convergence, cheapest first:
/// 1. rigid pair moves (coupled variables deadlock one pixel off the joint
///    optimum: each separate move loses more on the mutual edge than it
///    gains, while a rigid move keeps that term fixed);
/// 2. rigid moves of whole taut components (mutually peaked cliques);
/// 3. single-variable jumps to the conditional optimum over the full
///    window (variables captured by a distant false peak).
/// Any accepted escape strictly increases the fitness, so ascent remains
/// monotone and terminating.
pub fn ascend_level(
    start: &[Shift],
    graph: &ConstraintsGraph,
    tables: &EdgeTables,
    cfg: &OptimizerConfig,
) -> Result<LevelAscent> {
    cfg.validate()?;
    let max_shift = tables.params().max_shift;
    let mut offsets = start.to_vec();
    let mut current = fitness(&offsets, graph, tables)?;
    let mut history = vec![current];
    let incidence = Incidence::new(graph);
    let mut argmaxes = None; // computed on first deadlock, constant per level
    let mut iterations = 0;
    let mut converged = false;
    let in_window = |s: Shift| s.dx.abs() <= max_shift && s.dy.abs() <= max_shift;
    while iterations < cfg.max_iterations_per_level {
        let mut best: Option<(usize, Shift, f64)> = None;
        for k in 1..offsets.len() {
            for &step in &KING_MOVES {
                if !in_window(offsets[k] + step) {
                    continue;
                }
                let delta = incidence.delta(tables, &offsets, k, step, None)?;
                if delta > 0.0 && best.map_or(true, |(_, _, b)| delta > b) {
                    best = Some((k, step, delta));
                }
            }
        }
        if let Some((k, step, delta)) = best {
            offsets[k] = offsets[k] + step;
            current += delta;
            history.push(current);
            iterations += 1;
            continue;
        }
        // deadlock escape: rigid pair moves (lowest k, then l, then move order)
        let mut pair_best: Option<(usize, usize, Shift, f64)> = None;
        for k in 1..offsets.len() {
            for l in k + 1..offsets.len() {
                for &step in &KING_MOVES {
                    if !in_window(offsets[k] + step) || !in_window(offsets[l] + step) {
                        continue;
                    }
                    let delta = incidence.pair_delta(tables, &offsets, k, l, step)?;
                    if delta > 0.0 && pair_best.map_or(true, |(_, _, _, b)| delta > b) {
                        pair_best = Some((k, l, step, delta));
                    }
                }
            }
        }
        if let Some((k, l, step, delta)) = pair_best {
            offsets[k] = offsets[k] + step;
            offsets[l] = offsets[l] + step;
            current += delta;
            history.push(current);
            iterations += 1;
            continue;
        }
        // deadlock escape: rigid moves of whole peak components (mutually
        // peaked cliques), which pair moves cannot unlock
        if argmaxes.is_none() {
            argmaxes = Some(edge_argmaxes(&incidence, tables)?);
        }
        let peaks = argmaxes.as_ref().expect("computed above");
        let mut group_best: Option<(Vec<bool>, Shift, f64)> = None;
        for component in peak_components(peaks, &offsets) {
            if component.contains(&0) || component.len() < 3 {
                continue;
            }
            let mut mask = vec![false; offsets.len()];
            for &v in &component {
                mask[v] = true;
            }
            for &step in &KING_MOVES {
                if component.iter().any(|&v| !in_window(offsets[v] + step)) {
                    continue;
                }
                let delta = incidence.group_delta(tables, &offsets, &mask, step)?;
                if delta > 0.0 && group_best.as_ref().map_or(true, |(_, _, b)| delta > *b) {
                    group_best = Some((mask.clone(), step, delta));
                }
            }
        }
        if let Some((mask, step, delta)) = group_best {
            for (k, &inside) in mask.iter().enumerate() {
                if inside {
                    offsets[k] = offsets[k] + step;
                }
            }
            current += delta;
            history.push(current);
            iterations += 1;
            continue;
        }
        // deadlock escape: jump one variable to its conditional optimum
        // within the level's spatial reach (3 sigma), freeing variables
        // captured by a false peak. The reach bound keeps a fine level from
        // claiming influence its filter responses do not have.
        let reach = ((3.0 * tables.sigma()).ceil() as i32).min(max_shift);
        let mut jump_best: Option<(usize, Shift, f64)> = None;
        for k in 1..offsets.len() {
            let here = incidence.conditional_value(tables, &offsets, k, offsets[k])?;
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    let cand = offsets[k] + Shift::new(dx, dy);
                    if (dx == 0 && dy == 0) || !in_window(cand) {
                        continue;
                    }
                    let delta =
                        incidence.conditional_value(tables, &offsets, k, cand)? - here;
                    if delta > 0.0 && jump_best.map_or(true, |(_, _, b)| delta > b) {
                        jump_best = Some((k, cand - offsets[k], delta));
                    }
                }
            }
        }
        if let Some((k, step, delta)) = jump_best {
            offsets[k] = offsets[k] + step;
            current += delta;
            history.push(current);
            iterations += 1;
            continue;
        }
        // deadlock escape: jump a whole taut component by the reach-bounded
        // vector that best serves its boundary terms. A rigidly displaced
        // group keeps every internal edge at its peak, so neither unit
        // steps nor single-variable jumps can walk it home.
        let mut cjump_best: Option<(Vec<usize>, Shift, f64)> = None;
        for component in peak_components(peaks, &offsets) {
            if component.contains(&0) || component.len() < 2 {
                continue;
            }
            let mut mask = vec![false; offsets.len()];
            for &v in &component {
                mask[v] = true;
            }
            // directed edges crossing the component boundary
            let mut boundary: Vec<(usize, usize)> = Vec::new();
            for &v in &component {
                for &j in &incidence.out_edges[v] {
                    if !mask[j] {
                        boundary.push((v, j));
                    }
                }
                for &i in &incidence.in_edges[v] {
                    if !mask[i] {
                        boundary.push((i, v));
                    }
                }
            }
            if boundary.is_empty() {
                continue;
            }
            let term = |step: Shift| -> Result<f64> {
                let mut total = 0.0;
                for &(i, j) in &boundary {
                    let d = if mask[i] {
                        (offsets[i] + step) - offsets[j]
                    } else {
                        offsets[i] - (offsets[j] + step)
                    };
                    total += tables.rho(i, j, d).ok_or(SetRegError::MissingTable(i, j))?;
                }
                Ok(total)
            };
            let base = term(ZERO_SHIFT)?;
            // step range keeping every member inside the window
            let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) =
                (-max_shift, max_shift, -max_shift, max_shift);
            for &v in &component {
                x_lo = x_lo.max(-max_shift - offsets[v].dx);
                x_hi = x_hi.min(max_shift - offsets[v].dx);
                y_lo = y_lo.max(-max_shift - offsets[v].dy);
                y_hi = y_hi.min(max_shift - offsets[v].dy);
            }
            for dy in y_lo.max(-reach)..=y_hi.min(reach) {
                for dx in x_lo.max(-reach)..=x_hi.min(reach) {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let step = Shift::new(dx, dy);
                    let delta = term(step)? - base;
                    if delta > 0.0 && cjump_best.as_ref().map_or(true, |(_, _, b)| delta > *b) {
                        cjump_best = Some((component.clone(), step, delta));
                    }
                }
            }
        }
        match cjump_best {
            Some((component, step, delta)) => {
                for &v in &component {
                    offsets[v] = offsets[v] + step;
                }
                current += delta;
                history.push(current);
                iterations += 1;
            }
            None => {
                converged = true;
                break;
            }
        }
    }
    Ok(LevelAscent {
        offsets,
        iterations,
        fitness_history: history,
        converged,
    })
}

/// Full coarse-to-fine registration: for each scheduled bandwidth, rebuild
/// the representations and active-edge tables and ascend, warm-starting from
/// the previous level. Returns the final offsets, fitness and trace.
pub fn register_set(
    set: &ImageSet,
    gcfg: &GraphConfig,
    ocfg: &OptimizerConfig,
    ccfg: CorrelationParams,
) -> Result<RegistrationSolution> {
    register_set_with_diagnostics(set, gcfg, ocfg, ccfg).map(|(solution, _)| solution)
}

/// As [`register_set`], also reporting per-stage timings and graph
/// diagnostics.
pub fn register_set_with_diagnostics(
    set: &ImageSet,
    gcfg: &GraphConfig,
    ocfg: &OptimizerConfig,
    ccfg: CorrelationParams,
) -> Result<(RegistrationSolution, RunDiagnostics)> {
    ocfg.validate()?;
    let dist = distance_matrix(set)?;
    let graph = build_graph(&dist, gcfg)?;
    let edges = graph.edges();

    let mut diagnostics = RunDiagnostics {
        isolated_nodes: graph.isolated_nodes(),
        component_count: graph.component_count(),
        ..RunDiagnostics::default()
    };

    let mut offsets = vec![ZERO_SHIFT; set.len()];
    let mut trace = Vec::with_capacity(ocfg.schedule.sigmas().len());
    let mut final_fitness = 0.0;
    for &sigma in ocfg.schedule.sigmas() {
        let t0 = Instant::now();
        let reps = representations(set, sigma)?;
        let t1 = Instant::now();
        let tables = build_tables(&reps, &edges, ccfg)?;
        let t2 = Instant::now();
        let level = ascend_level(&offsets, &graph, &tables, ocfg)?;
        let t3 = Instant::now();

        diagnostics.representation_ms += (t1 - t0).as_secs_f64() * 1e3;
        diagnostics.tables_ms += (t2 - t1).as_secs_f64() * 1e3;
        diagnostics.ascent_ms += (t3 - t2).as_secs_f64() * 1e3;

        offsets = level.offsets;
        final_fitness = *level.fitness_history.last().expect("history never empty");
        trace.push(LevelTrace {
            sigma,
            iterations: level.iterations,
            fitness_history: level.fitness_history,
            fitness: final_fitness,
            converged: level.converged,
        });
    }
    Ok((
        RegistrationSolution {
            offsets,
            fitness: final_fitness,
            trace,
        },
        diagnostics,
    ))
}
