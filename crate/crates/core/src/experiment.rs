//! Solver registry, parameter sweeps and timing runs.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{
    broadcast_solve, dp_solve, kmeanspp_solve, marginal_util_solve, unicast_solve, BaselineConfig,
};
use crate::instance::{evaluate_plan, ProblemInstance};
use crate::oracle::{oracle_solve, OracleError, DEFAULT_ENUMERATION_CAP};
use crate::scenario::{generate, GenParams, ScenarioError};
use crate::solvers::{accelerated_greedy, refined_greedy, SolveResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverId {
    Greedy,
    GreedyAccel,
    Broadcast,
    Unicast,
    MarginalUtil,
    Kmeanspp,
    Dp,
    DpFair,
    Oracle,
}

impl SolverId {
    pub const ALL: [SolverId; 9] = [
        SolverId::Greedy,
        SolverId::GreedyAccel,
        SolverId::Broadcast,
        SolverId::Unicast,
        SolverId::MarginalUtil,
        SolverId::Kmeanspp,
        SolverId::Dp,
        SolverId::DpFair,
        SolverId::Oracle,
    ];

    /// Every solver except the exponential oracle.
    pub const SCALABLE: [SolverId; 8] = [
        SolverId::Greedy,
        SolverId::GreedyAccel,
        SolverId::Broadcast,
        SolverId::Unicast,
        SolverId::MarginalUtil,
        SolverId::Kmeanspp,
        SolverId::Dp,
        SolverId::DpFair,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SolverId::Greedy => "greedy",
            SolverId::GreedyAccel => "greedy_accel",
            SolverId::Broadcast => "broadcast",
            SolverId::Unicast => "unicast",
            SolverId::MarginalUtil => "marginal_util",
            SolverId::Kmeanspp => "kmeanspp",
            SolverId::Dp => "dp",
            SolverId::DpFair => "dp_fair",
            SolverId::Oracle => "oracle",
        }
    }

    pub fn is_greedy(self) -> bool {
        matches!(self, SolverId::Greedy | SolverId::GreedyAccel)
    }

    pub fn available() -> String {
        Self::ALL.map(|s| s.as_str()).join(", ")
    }
}

impl fmt::Display for SolverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("unknown solver `{0}` (available: {avail})", avail = SolverId::available())]
pub struct UnknownSolver(pub String);

impl FromStr for SolverId {
    type Err = UnknownSolver;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| UnknownSolver(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub baseline: BaselineConfig,
    pub oracle_cap: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            baseline: BaselineConfig::default(),
            oracle_cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

pub fn run_solver(
    id: SolverId,
    inst: &ProblemInstance,
    cfg: &SolverConfig,
) -> Result<SolveResult, OracleError> {
    Ok(match id {
        SolverId::Greedy => refined_greedy(inst),
        SolverId::GreedyAccel => accelerated_greedy(inst),
        SolverId::Broadcast => broadcast_solve(inst),
        SolverId::Unicast => unicast_solve(inst),
        SolverId::MarginalUtil => marginal_util_solve(inst),
        SolverId::Kmeanspp => kmeanspp_solve(inst, &cfg.baseline),
        SolverId::Dp => dp_solve(inst, &cfg.baseline, false),
        SolverId::DpFair => dp_solve(inst, &cfg.baseline, true),
        SolverId::Oracle => oracle_solve(inst, cfg.oracle_cap)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Latency budget in seconds.
    Budget,
    /// Bandwidth in Hz.
    Bandwidth,
    NUsers,
    /// Total grid count; must be a multiple of the map height.
    NGrids,
}

impl SweepVariable {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVariable::Budget => "budget",
            SweepVariable::Bandwidth => "bandwidth",
            SweepVariable::NUsers => "n_users",
            SweepVariable::NGrids => "n_grids",
        }
    }
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid sweep: {0}")]
    Invalid(String),
    #[error(transparent)]
    Solver(#[from] UnknownSolver),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    #[serde(default)]
    pub params: GenParams,
    pub solvers: Vec<String>,
    #[serde(default = "one")]
    pub repetitions: usize,
    /// Repetition `r` generates its scene with `seed + r`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub config: SolverConfig,
}

fn one() -> usize {
    1
}

impl SweepSpec {
    pub fn solver_ids(&self) -> Result<Vec<SolverId>, SweepError> {
        if self.solvers.is_empty() {
            return Err(SweepError::Invalid("solver list is empty".into()));
        }
        Ok(self
            .solvers
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<_>, _>>()?)
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        if self.values.is_empty() {
            return Err(SweepError::Invalid("value list is empty".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(SweepError::Invalid(format!("value {v} is not positive")));
        }
        if self.repetitions == 0 {
            return Err(SweepError::Invalid("repetitions must be at least 1".into()));
        }
        if matches!(self.variable, SweepVariable::NUsers | SweepVariable::NGrids) {
            if let Some(v) = self.values.iter().find(|v| v.fract() != 0.0) {
                return Err(SweepError::Invalid(format!("count {v} is not an integer")));
            }
        }
        if self.variable == SweepVariable::NGrids {
            let h = self.params.height as f64;
            if let Some(v) = self.values.iter().find(|v| *v % h != 0.0) {
                return Err(SweepError::Invalid(format!(
                    "grid count {v} is not a multiple of the map height {h}"
                )));
            }
        }
        self.solver_ids()?;
        self.params.validate()?;
        Ok(())
    }

    /// Generation parameters of one cell.
    pub fn cell_params(&self, value: f64, rep: usize) -> GenParams {
        let mut p = self.params.clone();
        p.seed = self.seed.wrapping_add(rep as u64);
        match self.variable {
            SweepVariable::Budget => p.budget_s = value,
            SweepVariable::Bandwidth => p.bandwidth_hz = value,
            SweepVariable::NUsers => p.n_users = value as usize,
            SweepVariable::NGrids => p.width = value as usize / p.height,
        }
        p
    }
}

/// One solver run in a sweep.
///
/// CSV columns, in order: `solver, variable, value, seed, utility,
/// latency_s, wall_time_s, gain_evaluations, feasible, error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub solver: String,
    pub variable: String,
    pub value: f64,
    pub seed: u64,
    pub utility: f64,
    pub latency_s: f64,
    pub wall_time_s: f64,
    pub gain_evaluations: u64,
    pub feasible: bool,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryPoint {
    pub value: f64,
    /// Mean utility over repetitions, per solver.
    pub mean_utility: BTreeMap<String, f64>,
    /// Per baseline: whether the reference greedy's mean is at least as high.
    pub reference_dominates: BTreeMap<String, bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub variable: String,
    pub reference: Option<String>,
    pub points: Vec<SummaryPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub rows: Vec<ResultRow>,
    pub summary: SweepSummary,
}

fn run_cell(spec: &SweepSpec, ids: &[SolverId], value: f64, rep: usize) -> Vec<ResultRow> {
    let params = spec.cell_params(value, rep);
    let base = |solver: SolverId| ResultRow {
        solver: solver.as_str().to_string(),
        variable: spec.variable.as_str().to_string(),
        value,
        seed: params.seed,
        utility: f64::NAN,
        latency_s: f64::NAN,
        wall_time_s: f64::NAN,
        gain_evaluations: 0,
        feasible: false,
        error: String::new(),
    };
    let inst = match generate(&params) {
        Ok((_, inst)) => inst,
        Err(e) => {
            return ids
                .iter()
                .map(|&s| ResultRow {
                    error: e.to_string(),
                    ..base(s)
                })
                .collect()
        }
    };
    ids.iter()
        .map(|&s| match run_solver(s, &inst, &spec.config) {
            Ok(r) => {
                let feasible = evaluate_plan(&inst, &r.plan).is_ok_and(|ev| ev.feasible);
                ResultRow {
                    utility: r.utility,
                    latency_s: r.latency_s,
                    wall_time_s: r.wall_time_s,
                    gain_evaluations: r.gain_evaluations,
                    feasible,
                    ..base(s)
                }
            }
            Err(e) => ResultRow {
                error: e.to_string(),
                ..base(s)
            },
        })
        .collect()
}

/// Runs every `(value, repetition)` cell on up to `jobs` threads.
///
/// Rows come back sorted by `(solver, value, seed)` whatever the completion
/// order. A cell that fails records the error in its rows and the sweep
/// continues.
pub fn run_sweep(spec: &SweepSpec, jobs: usize) -> Result<SweepOutput, SweepError> {
    spec.validate()?;
    let ids = spec.solver_ids()?;
    let cells: Vec<(f64, usize)> = spec
        .values
        .iter()
        .flat_map(|&v| (0..spec.repetitions).map(move |r| (v, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| SweepError::Invalid(format!("thread pool: {e}")))?;
    let mut rows: Vec<ResultRow> = pool.install(|| {
        cells
            .par_iter()
            .flat_map_iter(|&(v, r)| run_cell(spec, &ids, v, r))
            .collect()
    });
    let order: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    rows.sort_by(|a, b| {
        order[a.solver.as_str()]
            .cmp(&order[b.solver.as_str()])
            .then(a.value.total_cmp(&b.value))
            .then(a.seed.cmp(&b.seed))
    });
    let summary = summarize(spec, &ids, &rows);
    Ok(SweepOutput { rows, summary })
}

fn summarize(spec: &SweepSpec, ids: &[SolverId], rows: &[ResultRow]) -> SweepSummary {
    let reference = ids.iter().copied().find(|s| s.is_greedy());
    let mut values = spec.values.clone();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let points = values
        .iter()
        .map(|&value| {
            let mean_utility: BTreeMap<String, f64> = ids
                .iter()
                .map(|s| {
                    let us: Vec<f64> = rows
                        .iter()
                        .filter(|r| r.solver == s.as_str() && r.value == value && r.error.is_empty())
                        .map(|r| r.utility)
                        .collect();
                    let mean = if us.is_empty() {
                        f64::NAN
                    } else {
                        us.iter().sum::<f64>() / us.len() as f64
                    };
                    (s.as_str().to_string(), mean)
                })
                .collect();
            let reference_dominates = match reference {
                None => BTreeMap::new(),
                Some(r) => ids
                    .iter()
                    .filter(|s| !s.is_greedy())
                    .map(|s| {
                        (
                            s.as_str().to_string(),
                            mean_utility[r.as_str()] >= mean_utility[s.as_str()],
                        )
                    })
                    .collect(),
            };
            SummaryPoint {
                value,
                mean_utility,
                reference_dominates,
            }
        })
        .collect();
    SweepSummary {
        variable: spec.variable.as_str().to_string(),
        reference: reference.map(|r| r.as_str().to_string()),
        points,
    }
}

/// Timing grid: an `n_users` sweep at the base grid count and an `n_grids`
/// sweep at the base user count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSpec {
    pub n_users: Vec<usize>,
    pub n_grids: Vec<usize>,
    #[serde(default)]
    pub params: GenParams,
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            n_users: vec![4, 8, 12, 16, 20, 24],
            n_grids: vec![50, 100, 150, 200, 250],
            params: GenParams::default(),
            repetitions: 10,
            seed: 0,
        }
    }
}

/// Timing CSV columns, in order: `solver, n_users, n_grids, repetitions,
/// median_wall_s, p95_wall_s, median_gain_evaluations, p95_gain_evaluations`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub solver: String,
    pub n_users: usize,
    pub n_grids: usize,
    pub repetitions: usize,
    pub median_wall_s: f64,
    pub p95_wall_s: f64,
    pub median_gain_evaluations: f64,
    pub p95_gain_evaluations: f64,
}

/// Nearest-rank percentile of an unsorted sample, `q` in `[0, 1]`.
pub fn percentile(sample: &[f64], q: f64) -> f64 {
    assert!(!sample.is_empty());
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = (q * s.len() as f64).ceil() as usize;
    s[rank.clamp(1, s.len()) - 1]
}

/// Median; the mean of the middle pair for even sizes.
pub fn median(sample: &[f64]) -> f64 {
    assert!(!sample.is_empty());
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

/// Sequential timing of both greedy solvers.
pub fn run_bench(spec: &BenchSpec) -> Result<Vec<BenchRow>, SweepError> {
    if spec.repetitions == 0 {
        return Err(SweepError::Invalid("repetitions must be at least 1".into()));
    }
    let base_l = spec.params.n_grids();
    let mut configs: Vec<(usize, usize)> = spec.n_users.iter().map(|&n| (n, base_l)).collect();
    for &l in &spec.n_grids {
        if l % spec.params.height != 0 {
            return Err(SweepError::Invalid(format!(
                "grid count {l} is not a multiple of the map height {}",
                spec.params.height
            )));
        }
        configs.push((spec.params.n_users, l));
    }
    let mut seen = std::collections::BTreeSet::new();
    configs.retain(|c| seen.insert(*c));

    let mut rows = Vec::new();
    for (n, l) in configs {
        let mut samples: BTreeMap<SolverId, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for rep in 0..spec.repetitions {
            let params = GenParams {
                n_users: n,
                width: l / spec.params.height,
                seed: spec.seed.wrapping_add(rep as u64),
                ..spec.params.clone()
            };
            let (_, inst) = generate(&params)?;
            for (id, r) in [
                (SolverId::Greedy, refined_greedy(&inst)),
                (SolverId::GreedyAccel, accelerated_greedy(&inst)),
            ] {
                let e = samples.entry(id).or_default();
                e.0.push(r.wall_time_s);
                e.1.push(r.gain_evaluations as f64);
            }
        }
        for (id, (wall, evals)) in samples {
            rows.push(BenchRow {
                solver: id.as_str().to_string(),
                n_users: n,
                n_grids: l,
                repetitions: spec.repetitions,
                median_wall_s: median(&wall),
                p95_wall_s: percentile(&wall, 0.95),
                median_gain_evaluations: median(&evals),
                p95_gain_evaluations: percentile(&evals, 0.95),
            });
        }
    }
    Ok(rows)
}
