//! Worst-case maximal accuracy, per-attack accuracy curves and
//! `f` x heterogeneity heatmaps.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use robustfl_sim::datadist::DistributionKind;

use crate::error::{io, Error, Result};
use crate::grid::ExperimentKey;
use crate::results::{read_all, write_atomic, ExperimentResult};
use crate::svg;

/// `per_attack[a][s]` is the accuracy series of attack `a`, seed `s`.
/// Per attack, the seed mean of the per-seed maxima; then the minimum over
/// attacks.
pub fn worst_case_maximal_accuracy(per_attack: &[Vec<Vec<f64>>]) -> Result<f64> {
    if per_attack.is_empty() {
        return Err(Error::NoResults);
    }
    let mut worst = f64::INFINITY;
    for seeds in per_attack {
        if seeds.is_empty() || seeds.iter().any(Vec::is_empty) {
            return Err(Error::NoResults);
        }
        let total: f64 = seeds
            .iter()
            .map(|s| s.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .sum();
        worst = worst.min(total / seeds.len() as f64);
    }
    Ok(worst)
}

/// Everything but the attack and the seed.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CellId {
    pub pipeline: String,
    pub f: usize,
    pub column: Column,
}

/// Distribution and parameter; ordered by distribution kind, then
/// parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub distribution: String,
    pub parameter: Option<f64>,
    pub label: String,
}

impl Eq for Column {}

impl PartialOrd for Column {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Column {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        let rank = |c: &Column| {
            c.distribution
                .parse::<DistributionKind>()
                .map_or(usize::MAX, |k| DistributionKind::ALL.iter().position(|&x| x == k).unwrap_or(usize::MAX))
        };
        rank(self)
            .cmp(&rank(other))
            .then_with(|| self.distribution.cmp(&other.distribution))
            .then_with(|| {
                let a = self.parameter.unwrap_or(f64::NEG_INFINITY);
                let b = other.parameter.unwrap_or(f64::NEG_INFINITY);
                a.total_cmp(&b)
            })
    }
}

impl CellId {
    fn of(key: &ExperimentKey) -> Self {
        Self {
            pipeline: key.pipeline_label(),
            f: key.f,
            column: Column {
                distribution: key.distribution.clone(),
                parameter: key.distribution_parameter,
                label: key.distribution_label(),
            },
        }
    }

    pub fn id(&self) -> String {
        format!("{}_f{}_{}", self.pipeline, self.f, self.column.label)
    }
}

/// attack -> seed -> result, per cell.
pub type Cells<'a> = BTreeMap<CellId, BTreeMap<String, BTreeMap<u64, &'a ExperimentResult>>>;

pub fn group_cells(results: &[ExperimentResult]) -> Cells<'_> {
    let mut cells: Cells<'_> = BTreeMap::new();
    for r in results {
        cells
            .entry(CellId::of(&r.key))
            .or_default()
            .entry(r.key.attack.clone())
            .or_default()
            .insert(r.key.seed, r);
    }
    cells
}

/// Selects which cells get curves; `None` fields match anything.
#[derive(Debug, Clone, Default)]
pub struct CellFilter {
    /// Matches the aggregator name or the full pipeline label.
    pub aggregator: Option<String>,
    pub f: Option<usize>,
    /// Matches the distribution label, e.g. `gamma0.33`.
    pub distribution: Option<String>,
}

impl CellFilter {
    pub fn matches(&self, cell: &CellId) -> bool {
        let agg_ok = self.aggregator.as_ref().is_none_or(|a| {
            cell.pipeline == *a || cell.pipeline.split('_').next() == Some(a.as_str())
        });
        agg_ok
            && self.f.is_none_or(|f| f == cell.f)
            && self.distribution.as_ref().is_none_or(|d| *d == cell.column.label)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub warnings: usize,
}

fn write_file(path: PathBuf, contents: &str, report: &mut Report) -> Result<()> {
    write_atomic(&path, contents.as_bytes())?;
    report.files.push(path);
    Ok(())
}

fn load(results_dir: &Path, out_dir: &Path) -> Result<(Vec<ExperimentResult>, Report)> {
    let (results, unreadable) = read_all(results_dir)?;
    let mut report = Report {
        files: Vec::new(),
        warnings: unreadable,
    };
    if results.is_empty() {
        log::warn!("no results under {}", results_dir.display());
        report.warnings += 1;
    } else {
        fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    }
    Ok((results, report))
}

pub type CurveSeries = (String, Vec<Option<f64>>);

/// Seed-mean accuracy per attack on the union of recorded steps. A step
/// missing from some seeds averages the seeds that have it.
pub fn curve_table(attacks: &BTreeMap<String, BTreeMap<u64, &ExperimentResult>>) -> (Vec<usize>, Vec<CurveSeries>) {
    let steps: BTreeSet<usize> = attacks
        .values()
        .flat_map(|seeds| seeds.values().flat_map(|r| r.series.iter().map(|row| row.step)))
        .collect();
    let steps: Vec<usize> = steps.into_iter().collect();
    let columns = attacks
        .iter()
        .map(|(attack, seeds)| {
            let col = steps
                .iter()
                .map(|&step| {
                    let vals: Vec<f64> = seeds
                        .values()
                        .filter_map(|r| r.series.iter().find(|row| row.step == step).map(|row| row.test_accuracy))
                        .collect();
                    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
                })
                .collect();
            (attack.clone(), col)
        })
        .collect();
    (steps, columns)
}

/// `curve_<id>.csv` (step plus one column per attack) and `curve_<id>.svg`
/// for every selected cell.
pub fn emit_curves(results_dir: &Path, out_dir: &Path, filter: &CellFilter) -> Result<Report> {
    let (results, mut report) = load(results_dir, out_dir)?;
    for (cell, attacks) in group_cells(&results) {
        if !filter.matches(&cell) {
            continue;
        }
        let (steps, columns) = curve_table(&attacks);
        let mut csv = String::from("step");
        for (attack, _) in &columns {
            csv.push(',');
            csv.push_str(attack);
        }
        csv.push('\n');
        for (i, step) in steps.iter().enumerate() {
            csv.push_str(&step.to_string());
            for (_, col) in &columns {
                csv.push(',');
                if let Some(v) = col[i] {
                    csv.push_str(&v.to_string());
                }
            }
            csv.push('\n');
        }
        let series: Vec<(String, Vec<(f64, f64)>)> = columns
            .iter()
            .map(|(attack, col)| {
                let pts = steps
                    .iter()
                    .zip(col)
                    .filter_map(|(&s, v)| v.map(|v| (s as f64, v)))
                    .collect();
                (attack.clone(), pts)
            })
            .collect();
        let id = cell.id();
        let title = format!("{} | f = {} | {}", cell.pipeline, cell.f, cell.column.label);
        write_file(out_dir.join(format!("curve_{id}.csv")), &csv, &mut report)?;
        let chart = svg::line_chart(&title, "step", "test accuracy", &series);
        write_file(out_dir.join(format!("curve_{id}.svg")), &chart, &mut report)?;
    }
    if report.files.is_empty() && !results.is_empty() {
        log::warn!("no cell matched the filter");
        report.warnings += 1;
    }
    Ok(report)
}

/// Rows `f`, columns distribution parameters, cells the worst-case
/// maximal accuracy; `None` where some (attack, seed) run is missing.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapGrid {
    pub pipeline: String,
    pub rows: Vec<usize>,
    pub cols: Vec<Column>,
    pub cells: Vec<Vec<Option<f64>>>,
}

pub fn heatmap_grids(results: &[ExperimentResult]) -> Result<Vec<HeatmapGrid>> {
    let cells = group_cells(results);
    let mut by_pipeline: BTreeMap<&str, Vec<(&CellId, _)>> = BTreeMap::new();
    for (cell, attacks) in &cells {
        by_pipeline.entry(cell.pipeline.as_str()).or_default().push((cell, attacks));
    }
    let mut grids = Vec::new();
    for (pipeline, entries) in by_pipeline {
        let rows: Vec<usize> = entries.iter().map(|(c, _)| c.f).collect::<BTreeSet<_>>().into_iter().collect();
        let cols: Vec<Column> = entries
            .iter()
            .map(|(c, _)| c.column.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let all_attacks: BTreeSet<&String> = entries.iter().flat_map(|(_, a)| a.keys()).collect();
        let all_seeds: BTreeSet<u64> = entries
            .iter()
            .flat_map(|(_, a)| a.values().flat_map(|s| s.keys().copied()))
            .collect();
        let mut table = vec![vec![None; cols.len()]; rows.len()];
        for (cell, attacks) in entries {
            let complete = all_attacks.iter().all(|a| {
                attacks
                    .get(*a)
                    .is_some_and(|seeds| all_seeds.iter().all(|s| seeds.contains_key(s)))
            });
            if !complete {
                log::warn!("cell {} lacks some runs", cell.id());
                continue;
            }
            let per_attack: Vec<Vec<Vec<f64>>> = attacks
                .values()
                .map(|seeds| seeds.values().map(|r| r.accuracies()).collect())
                .collect();
            let r = rows.iter().position(|&f| f == cell.f).expect("row collected above");
            let c = cols.iter().position(|c| *c == cell.column).expect("column collected above");
            table[r][c] = Some(worst_case_maximal_accuracy(&per_attack)?);
        }
        grids.push(HeatmapGrid {
            pipeline: pipeline.to_string(),
            rows,
            cols,
            cells: table,
        });
    }
    Ok(grids)
}

pub fn heatmap_csv(grid: &HeatmapGrid) -> String {
    let mut csv = String::from("f");
    for c in &grid.cols {
        csv.push(',');
        csv.push_str(&c.label);
    }
    csv.push('\n');
    for (f, row) in grid.rows.iter().zip(&grid.cells) {
        csv.push_str(&f.to_string());
        for cell in row {
            csv.push(',');
            if let Some(v) = cell {
                csv.push_str(&v.to_string());
            }
        }
        csv.push('\n');
    }
    csv
}

/// `heatmap_<pipeline>.csv` and `.svg` for every pipeline in the results.
pub fn emit_heatmap(results_dir: &Path, out_dir: &Path) -> Result<Report> {
    let (results, mut report) = load(results_dir, out_dir)?;
    for grid in heatmap_grids(&results)? {
        report.warnings += grid.cells.iter().flatten().filter(|c| c.is_none()).count();
        let rows: Vec<String> = grid.rows.iter().map(ToString::to_string).collect();
        let cols: Vec<String> = grid.cols.iter().map(|c| c.label.clone()).collect();
        let col_axis = grid
            .cols
            .first()
            .map_or("distribution".to_string(), |c| c.distribution.clone());
        let title = format!("{}: worst-case maximal accuracy", grid.pipeline);
        let chart = svg::heatmap(&title, "f", &col_axis, &rows, &cols, &grid.cells);
        write_file(out_dir.join(format!("heatmap_{}.csv", grid.pipeline)), &heatmap_csv(&grid), &mut report)?;
        write_file(out_dir.join(format!("heatmap_{}.svg", grid.pipeline)), &chart, &mut report)?;
    }
    Ok(report)
}
