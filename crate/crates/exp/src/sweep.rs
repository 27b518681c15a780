//! The cost sweep: one training run per (cost, algorithm, information, seed)
//! cell, each verified and measured against the analytic benchmark.

use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use oligopoly::{
    mix_seed, train_selfplay, Algorithm, Information, LearnedProfile, MarketConfig, TrainConfig,
    VerifyOptions,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{one_line, TrainOverrides};
use crate::error::{ExpError, Result};
use crate::evaluate::{evaluate, Evaluation};
use crate::results::{compact_results, read_results, CellStatus, ResultRow, ResultsWriter, RESULTS_VERSION};

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

/// Grid of firm 0's cost against two rivals of equal cost, crossed with
/// algorithms, information settings and seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub c0_min: f64,
    pub c0_max: f64,
    pub c0_points: usize,
    /// Subset of grid indices to run; all when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c0_indices: Option<Vec<usize>>,
    pub rival_cost: f64,
    pub initial_demand: f64,
    pub n_agents: usize,
    pub horizon: usize,
    pub dropouts: bool,
    pub seeds: Vec<u64>,
    pub algorithms: Vec<Algorithm>,
    pub information: Vec<Information>,
    pub base_seed: u64,
    pub k: usize,
    pub train: TrainOverrides,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            c0_min: 0.42,
            c0_max: 0.95,
            c0_points: 60,
            c0_indices: None,
            rival_cost: 0.8,
            initial_demand: 1.0,
            n_agents: 3,
            horizon: 4,
            dropouts: true,
            seeds: default_seeds(),
            algorithms: Algorithm::ALL.to_vec(),
            information: vec![Information::FullyObservable, Information::PartiallyObservable],
            base_seed: 0,
            k: 32,
            train: TrainOverrides::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub c0_index: usize,
    pub c0: f64,
    pub algorithm: Algorithm,
    pub information: Information,
    pub seed: u64,
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<Self> {
        let text = crate::error::read_input(path)?;
        let spec: Self = toml::from_str(&text).map_err(|e| ExpError::Parse {
            path: path.display().to_string(),
            message: one_line(&e.to_string()),
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("sweep spec serializes")
    }

    /// Keeps `count` grid points spread evenly over the range, both ends
    /// included.
    pub fn thinned(mut self, count: usize) -> Self {
        let last = self.c0_points.saturating_sub(1);
        let count = count.clamp(1, self.c0_points.max(1));
        let mut idx: Vec<usize> = (0..count)
            .map(|j| if count == 1 { 0 } else { (j * last + (count - 1) / 2) / (count - 1) })
            .collect();
        idx.dedup();
        self.c0_indices = Some(idx);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ExpError::InvalidConfig(m));
        if self.c0_points < 2 || !(self.c0_min < self.c0_max) {
            return bad("c0 grid needs two points and c0_min < c0_max".into());
        }
        if let Some(idx) = &self.c0_indices {
            if let Some(i) = idx.iter().find(|&&i| i >= self.c0_points) {
                return bad(format!("c0 index {i} outside grid of {}", self.c0_points));
            }
        }
        if self.n_agents < 1 || self.horizon < 1 || self.k < 2 {
            return bad("n_agents, horizon must be positive and k at least 2".into());
        }
        if self.seeds.is_empty() || self.algorithms.is_empty() || self.information.is_empty() {
            return bad("seeds, algorithms and information must be non-empty".into());
        }
        for c0 in [self.c0_min, self.c0_max] {
            self.market(c0, self.information[0]).validate()?;
        }
        self.train.resolve(Algorithm::Ppo, 0).validate()?;
        Ok(())
    }

    /// Equidistant costs; the endpoints are exact.
    pub fn c0_grid(&self) -> Vec<f64> {
        let last = self.c0_points - 1;
        (0..self.c0_points)
            .map(|i| {
                if i == last {
                    self.c0_max
                } else {
                    self.c0_min + (self.c0_max - self.c0_min) * i as f64 / last as f64
                }
            })
            .collect()
    }

    pub fn market(&self, c0: f64, information: Information) -> MarketConfig<f64> {
        let mut costs = vec![self.rival_cost; self.n_agents];
        costs[0] = c0;
        MarketConfig::new(costs, vec![self.initial_demand; self.n_agents], self.horizon)
            .with_dropouts(self.dropouts)
            .with_information(information)
    }

    pub fn cells(&self) -> Vec<Cell> {
        let grid = self.c0_grid();
        let indices: Vec<usize> = self.c0_indices.clone().unwrap_or_else(|| (0..self.c0_points).collect());
        let mut cells = Vec::new();
        for &c0_index in &indices {
            for &algorithm in &self.algorithms {
                for &information in &self.information {
                    for &seed in &self.seeds {
                        cells.push(Cell { c0_index, c0: grid[c0_index], algorithm, information, seed });
                    }
                }
            }
        }
        cells
    }

    /// Training seed of a cell, derived from every coordinate so that cells
    /// are uncorrelated and independent of execution order.
    pub fn cell_seed(&self, cell: &Cell) -> u64 {
        let algo = Algorithm::ALL.iter().position(|&a| a == cell.algorithm).unwrap_or(0) as u64;
        let info = match cell.information {
            Information::FullyObservable => 0,
            Information::PartiallyObservable => 1,
        };
        mix_seed(self.base_seed, &[cell.c0_index as u64, algo, info, cell.seed])
    }

    pub fn train_config(&self, cell: &Cell) -> TrainConfig {
        self.train.resolve(cell.algorithm, self.cell_seed(cell))
    }

    /// Hash of everything that determines a cell's result.
    pub fn cell_key(&self, cell: &Cell) -> String {
        #[derive(Serialize)]
        struct Keyed<'a> {
            version: u32,
            market: &'a MarketConfig<f64>,
            algorithm: Algorithm,
            train: &'a TrainConfig,
            k: usize,
        }
        let market = self.market(cell.c0, cell.information);
        let train = self.train_config(cell);
        let text = serde_json::to_string(&Keyed {
            version: RESULTS_VERSION,
            market: &market,
            algorithm: cell.algorithm,
            train: &train,
            k: self.k,
        })
        .expect("key serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Trained profile and its evaluation for one cell.
pub struct CellRun {
    pub learned: LearnedProfile<f32>,
    pub evaluation: Evaluation,
}

pub fn run_cell(spec: &SweepSpec, cell: &Cell) -> Result<CellRun> {
    let market = spec.market(cell.c0, cell.information);
    let learned = train_selfplay::<f32>(&market, cell.algorithm, &spec.train_config(cell))?;
    let evaluation = evaluate(&learned.profile(), &market, &VerifyOptions::with_k(spec.k))?;
    Ok(CellRun { learned, evaluation })
}

fn result_row(spec: &SweepSpec, cell: &Cell, outcome: &Result<CellRun>) -> ResultRow {
    let mut row = ResultRow {
        c0: cell.c0,
        algo: cell.algorithm,
        information: cell.information,
        seed: cell.seed,
        regime: None,
        pi_0: None,
        pi_1: None,
        pi_2: None,
        ps: None,
        cs: None,
        w: None,
        d_ps: None,
        d_cs: None,
        d_w: None,
        epsilon: None,
        loss_agent0: None,
        loss_agents12: None,
        c0_index: cell.c0_index,
        cell_key: spec.cell_key(cell),
        status: CellStatus::Failed,
        exits: String::new(),
        message: String::new(),
    };
    match outcome {
        Ok(run) => {
            let ev = &run.evaluation;
            let pi = |i: usize| ev.predation.get(i).map(|r| r.pi);
            let sum = |v: &[f64]| v.iter().sum::<f64>();
            row.regime = Some(ev.regime);
            (row.pi_0, row.pi_1, row.pi_2) = (pi(0), pi(1), pi(2));
            row.ps = Some(sum(&ev.welfare.producer_surplus));
            row.cs = Some(sum(&ev.welfare.consumer_surplus));
            row.w = Some(ev.welfare.total_welfare);
            row.d_ps = Some(ev.welfare.delta_ps);
            row.d_cs = Some(ev.welfare.delta_cs);
            row.d_w = Some(ev.welfare.delta_w);
            row.epsilon = Some(ev.report.epsilon);
            row.loss_agent0 = Some(ev.loss(0));
            row.loss_agents12 = (1..ev.report.agents.len()).map(|i| ev.loss(i)).reduce(f64::max);
            row.status = CellStatus::Ok;
            row.exits = ev.exits();
        }
        Err(e) => row.message = format!("{}: {}", e.code(), one_line(&e.to_string())),
    }
    row
}

/// Writes a cell's profile, trajectory and training log under `dir`.
pub fn save_cell(run: &CellRun, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    run.learned.save(&dir.join("profile.json"))?;
    run.evaluation.trajectory.write_csv(std::fs::File::create(dir.join("trajectory.csv"))?)?;
    run.learned.write_log_csv(std::fs::File::create(dir.join("log.csv"))?)?;
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepSummary {
    pub cells: usize,
    /// Cells found complete in an earlier run.
    pub skipped: usize,
    pub completed: usize,
    pub failed: usize,
    pub rows: Vec<ResultRow>,
}

pub fn results_path(out_dir: &Path) -> PathBuf {
    out_dir.join("results.csv")
}

pub fn cell_dir(out_dir: &Path, key: &str) -> PathBuf {
    out_dir.join("cells").join(key)
}

/// Runs every cell not already recorded as successful in
/// `out_dir/results.csv`, on `workers` threads. Failed cells are recorded and
/// retried on the next run; they do not stop the sweep.
pub fn run_sweep(spec: &SweepSpec, workers: usize, out_dir: &Path, verbose: bool) -> Result<SweepSummary> {
    spec.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let path = results_path(out_dir);
    let done: Vec<String> = if path.exists() {
        read_results(&path)?.into_iter().filter(ResultRow::is_ok).map(|r| r.cell_key).collect()
    } else {
        Vec::new()
    };
    let cells = spec.cells();
    let todo: Vec<&Cell> = cells.iter().filter(|c| !done.contains(&spec.cell_key(c))).collect();
    let writer = Mutex::new(ResultsWriter::open(&path)?);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| ExpError::InvalidConfig(e.to_string()))?;
    let start = Instant::now();
    let statuses: Vec<Result<CellStatus>> = pool.install(|| {
        todo.par_iter()
            .map(|cell| {
                let outcome = run_cell(spec, cell);
                if let Ok(run) = &outcome {
                    save_cell(run, &cell_dir(out_dir, &spec.cell_key(cell)))?;
                }
                let row = result_row(spec, cell, &outcome);
                if verbose {
                    eprintln!(
                        "c0={:.4} {} {} seed={} -> {} {} [{:.0}s]",
                        cell.c0,
                        cell.algorithm,
                        cell.information,
                        cell.seed,
                        row.regime.map_or("-", |r| r.as_str()),
                        if row.is_ok() { "" } else { &row.message },
                        start.elapsed().as_secs_f64()
                    );
                }
                writer.lock().expect("results writer").append(&row)?;
                Ok(row.status)
            })
            .collect()
    });
    drop(writer);
    let mut summary = SweepSummary { cells: cells.len(), skipped: cells.len() - todo.len(), ..Default::default() };
    for s in statuses {
        match s? {
            CellStatus::Ok => summary.completed += 1,
            CellStatus::Failed => summary.failed += 1,
        }
    }
    summary.rows = compact_results(&path)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints_and_spacing() {
        let spec = SweepSpec::default();
        let grid = spec.c0_grid();
        assert_eq!(grid.len(), 60);
        assert_eq!(grid[0], 0.42);
        assert_eq!(grid[59], 0.95);
        for w in grid.windows(2) {
            assert!((w[1] - w[0] - 0.53 / 59.0).abs() < 1e-12);
        }
    }

    #[test]
    fn full_spec_has_1200_cells() {
        assert_eq!(SweepSpec::default().cells().len(), 1200);
    }

    #[test]
    fn small_spec_cell_count() {
        let spec = SweepSpec {
            c0_indices: Some(vec![3, 40]),
            seeds: vec![0],
            algorithms: vec![Algorithm::Ppo],
            information: vec![Information::PartiallyObservable],
            ..SweepSpec::default()
        };
        assert_eq!(spec.cells().len(), 2);
    }

    #[test]
    fn thinning_keeps_both_ends() {
        let spec = SweepSpec::default().thinned(6);
        assert_eq!(spec.c0_indices, Some(vec![0, 12, 24, 35, 47, 59]));
        assert_eq!(SweepSpec::default().thinned(1).c0_indices, Some(vec![0]));
    }

    #[test]
    fn cell_seeds_and_keys_are_distinct() {
        let spec = SweepSpec::default();
        let cells = spec.cells();
        let mut seeds: Vec<u64> = cells.iter().map(|c| spec.cell_seed(c)).collect();
        let mut keys: Vec<String> = cells.iter().map(|c| spec.cell_key(c)).collect();
        seeds.sort();
        seeds.dedup();
        keys.sort();
        keys.dedup();
        assert_eq!((seeds.len(), keys.len()), (1200, 1200));
        let other = SweepSpec { k: 16, ..SweepSpec::default() };
        assert_ne!(spec.cell_key(&cells[0]), other.cell_key(&cells[0]));
    }

    #[test]
    fn spec_round_trips_through_toml() {
        let spec = SweepSpec { train: TrainOverrides::desk(), ..SweepSpec::default().thinned(6) };
        let back: SweepSpec = toml::from_str(&spec.to_toml_string()).unwrap();
        assert_eq!(back, spec);
    }
}
