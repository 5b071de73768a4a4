//! Comparison schedulers.
//!
//! Every baseline fixes its multicast groups first and then fills the
//! latency budget greedily with `(grid, group)` transmissions. They differ
//! only in how the groups are formed:
//!
//! | id              | groups                                                  |
//! |-----------------|---------------------------------------------------------|
//! | `broadcast`     | one group of every decodable user at the weakest rate  |
//! | `unicast`       | one group per user at that user's own rate              |
//! | `marginal_util` | implicit, one rate per grid chosen by utility per second|
//! | `kmeanspp`      | 1-D K-means++ on user rates, best K of a sweep          |
//! | `dp`, `dp_fair` | contiguous partition of rate-sorted users by DP         |
//!
//! The DP valuation of a candidate group is the utility it would reach on
//! its own with `T / K` of airtime; the winning partition is then scheduled
//! jointly under the full budget `T`. With `dp_fair`, a group is admissible
//! only if each member with nonzero interest gets at least `phi` of its
//! total MoI mass in that valuation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::transmission_time;
use crate::instance::{
    bottleneck_rate, evaluate_plan, plan_from_selection, selection_cost, selection_from_plan,
    utility, within_budget, CoverageState, Item, MulticastPlan, ProblemInstance, Selection,
};
use crate::solvers::SolveResult;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("fairness floor must lie in [0, 1], got {0}")]
    BadFairness(f64),
    #[error("k-means range {0}..={1} is empty or starts at zero")]
    BadKRange(usize, usize),
    #[error("dp_max_groups must be at least 1")]
    BadMaxGroups,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub kmeans_k_min: usize,
    pub kmeans_k_max: usize,
    pub dp_max_groups: usize,
    /// Minimum served fraction of each user's MoI mass under `dp_fair`.
    pub fairness_floor: f64,
    pub rng_seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            kmeans_k_min: 1,
            kmeans_k_max: 6,
            dp_max_groups: 6,
            fairness_floor: 0.1,
            rng_seed: 0,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<(), BaselineError> {
        if !(0.0..=1.0).contains(&self.fairness_floor) {
            return Err(BaselineError::BadFairness(self.fairness_floor));
        }
        if self.kmeans_k_min == 0 || self.kmeans_k_min > self.kmeans_k_max {
            return Err(BaselineError::BadKRange(self.kmeans_k_min, self.kmeans_k_max));
        }
        if self.dp_max_groups == 0 {
            return Err(BaselineError::BadMaxGroups);
        }
        Ok(())
    }
}

const KMEANS_MAX_ITERS: usize = 100;
const KMEANS_TOL: f64 = 1e-9;

/// Users that decode at least the lowest rate.
fn decodable_users(inst: &ProblemInstance) -> Vec<usize> {
    (0..inst.n_users())
        .filter(|&u| inst.max_rate_index(u).is_some())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
struct Group {
    members: Vec<usize>,
    rate_bps: f64,
}

impl Group {
    fn new(inst: &ProblemInstance, members: Vec<usize>) -> Option<Self> {
        let rate_bps = bottleneck_rate(inst, &members)?;
        Some(Self { members, rate_bps })
    }
}

#[derive(Debug, Clone, Copy)]
struct GroupEntry {
    ratio: f64,
    grid: usize,
    group: usize,
}

impl PartialEq for GroupEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for GroupEntry {}

impl PartialOrd for GroupEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for GroupEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ratio
            .total_cmp(&other.ratio)
            .then_with(|| (other.grid, other.group).cmp(&(self.grid, self.group)))
    }
}

/// Lazy greedy over `(grid, group)` transmissions under `budget_s`.
///
/// The gain of sending a grid to a group is the interest of members that
/// do not hold it yet. Returns the plan and the number of gain evaluations.
fn schedule_groups(
    inst: &ProblemInstance,
    groups: &[Group],
    budget_s: f64,
) -> (MulticastPlan, u64) {
    let (n, l) = (inst.n_users(), inst.n_grids());
    let mut received = vec![false; n * l];
    let mut masks = vec![vec![false; l]; groups.len()];
    let mut evaluations = 0u64;
    let costs: Vec<f64> = groups
        .iter()
        .map(|g| transmission_time(inst.grid_bytes(), g.rate_bps))
        .collect();

    let gain = |received: &[bool], grid: usize, group: usize| -> f64 {
        let mut s = 0.0;
        for &u in &groups[group].members {
            if !received[u * l + grid] {
                s += inst.weight(u, grid);
            }
        }
        s
    };

    let mut heap = BinaryHeap::new();
    for grid in 0..l {
        for (k, &c) in costs.iter().enumerate() {
            evaluations += 1;
            let ratio = gain(&received, grid, k) / c;
            if ratio > 0.0 && within_budget(c, budget_s) {
                heap.push(GroupEntry { ratio, grid, group: k });
            }
        }
    }

    let mut used = 0.0;
    while used < budget_s {
        let Some(top) = heap.pop() else { break };
        let c = costs[top.group];
        if !within_budget(used + c, budget_s) || masks[top.group][top.grid] {
            continue;
        }
        evaluations += 1;
        let g = gain(&received, top.grid, top.group);
        let ratio = g / c;
        let leads = heap.peek().is_none_or(|next| {
            GroupEntry { ratio, ..top }.cmp(next) == Ordering::Greater
        });
        if !leads {
            if ratio > 0.0 {
                heap.push(GroupEntry { ratio, ..top });
            }
            continue;
        }
        if ratio <= 0.0 {
            break;
        }
        masks[top.group][top.grid] = true;
        used += c;
        for &u in &groups[top.group].members {
            received[u * l + top.grid] = true;
        }
    }

    let plan = MulticastPlan {
        groups: groups.iter().map(|g| g.members.clone()).collect(),
        masks,
        rate_bps: groups.iter().map(|g| g.rate_bps).collect(),
    };
    (plan.prune_empty(), evaluations)
}

fn empty_plan() -> MulticastPlan {
    MulticastPlan {
        groups: Vec::new(),
        masks: Vec::new(),
        rate_bps: Vec::new(),
    }
}

fn result_from_plan(
    inst: &ProblemInstance,
    solver: &str,
    plan: MulticastPlan,
    gain_evaluations: u64,
    started: Instant,
) -> SolveResult {
    let ev = evaluate_plan(inst, &plan).expect("baseline plans are well formed");
    let selection = selection_from_plan(inst, &plan).expect("baseline groups decode their rate");
    SolveResult {
        solver: solver.to_string(),
        selection,
        plan,
        utility: ev.utility,
        latency_s: ev.latency_s,
        gain_evaluations,
        wall_time_s: started.elapsed().as_secs_f64(),
        greedy: None,
        flags: Vec::new(),
    }
}

/// Single group of every decodable user at the weakest member's rate.
pub fn broadcast_solve(inst: &ProblemInstance) -> SolveResult {
    let started = Instant::now();
    let members = decodable_users(inst);
    if members.len() < inst.n_users() {
        warn!(
            "broadcast: dropping {} users that decode no rate",
            inst.n_users() - members.len()
        );
    }
    let Some(group) = Group::new(inst, members) else {
        return result_from_plan(inst, "broadcast", empty_plan(), 0, started);
    };
    let (plan, evals) = schedule_groups(inst, &[group], inst.budget());
    result_from_plan(inst, "broadcast", plan, evals, started)
}

/// Dedicated link per user; each transmission serves exactly one user.
pub fn unicast_solve(inst: &ProblemInstance) -> SolveResult {
    let started = Instant::now();
    let groups: Vec<Group> = decodable_users(inst)
        .into_iter()
        .filter_map(|u| Group::new(inst, vec![u]))
        .collect();
    let (plan, evals) = schedule_groups(inst, &groups, inst.budget());
    result_from_plan(inst, "unicast", plan, evals, started)
}

/// Utility-per-second greedy over grid-rate pairs that commits each grid to
/// the first rate it is sent at.
pub fn marginal_util_solve(inst: &ProblemInstance) -> SolveResult {
    let started = Instant::now();
    let mut state = CoverageState::new(inst);
    let mut sel = Selection::new();
    let mut taken = vec![false; inst.n_grids()];
    let mut evaluations = 0u64;
    let mut used = 0.0;
    let budget = inst.budget();

    #[derive(PartialEq)]
    struct Entry(f64, Item);
    impl Eq for Entry {}
    impl PartialOrd for Entry {
        fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Entry {
        fn cmp(&self, other: &Self) -> Ordering {
            self.0.total_cmp(&other.0).then_with(|| other.1.cmp(&self.1))
        }
    }

    let mut heap = BinaryHeap::new();
    for e in inst.ground_set() {
        evaluations += 1;
        let c = inst.cost(e.rate);
        let ratio = state.marginal_gain(inst, e) / c;
        if ratio > 0.0 && within_budget(c, budget) {
            heap.push(Entry(ratio, e));
        }
    }
    while used < budget {
        let Some(Entry(_, e)) = heap.pop() else { break };
        let c = inst.cost(e.rate);
        if taken[e.grid] || !within_budget(used + c, budget) {
            continue;
        }
        evaluations += 1;
        let ratio = state.marginal_gain(inst, e) / c;
        let leads = heap
            .peek()
            .is_none_or(|next| Entry(ratio, e).cmp(next) == Ordering::Greater);
        if !leads {
            heap.push(Entry(ratio, e));
            continue;
        }
        if ratio <= 0.0 {
            break;
        }
        taken[e.grid] = true;
        sel.insert(e);
        state.apply_item(inst, e);
        used += c;
    }

    let plan = plan_from_selection(inst, &sel).expect("greedy respects the budget");
    SolveResult {
        solver: "marginal_util".to_string(),
        utility: utility(inst, &sel),
        latency_s: selection_cost(inst, &sel),
        selection: sel,
        plan,
        gain_evaluations: evaluations,
        wall_time_s: started.elapsed().as_secs_f64(),
        greedy: None,
        flags: Vec::new(),
    }
}

/// 1-D K-means with K-means++ seeding. Returns a cluster index per value.
///
/// Deterministic for a given `seed`. Clusters may come back empty when there
/// are fewer distinct values than `k`.
pub fn kmeans_1d(values: &[f64], k: usize, seed: u64) -> Vec<usize> {
    assert!(k >= 1 && !values.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = Vec::with_capacity(k);
    centers.push(values[rng.gen_range(0..values.len())]);
    while centers.len() < k {
        let d2: Vec<f64> = values
            .iter()
            .map(|&v| {
                centers
                    .iter()
                    .map(|&c| (v - c) * (v - c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            // every value already sits on a center
            centers.push(centers[centers.len() - 1]);
            continue;
        }
        let mut target = rng.gen::<f64>() * total;
        let mut pick = values.len() - 1;
        for (i, &d) in d2.iter().enumerate() {
            if target < d {
                pick = i;
                break;
            }
            target -= d;
        }
        centers.push(values[pick]);
    }

    let nearest = |centers: &[f64], v: f64| -> usize {
        let mut best = 0;
        for (c, &x) in centers.iter().enumerate() {
            if (v - x).abs() < (v - centers[best]).abs() {
                best = c;
            }
        }
        best
    };

    let mut assign: Vec<usize> = values.iter().map(|&v| nearest(&centers, v)).collect();
    for _ in 0..KMEANS_MAX_ITERS {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for (&v, &a) in values.iter().zip(&assign) {
            sums[a] += v;
            counts[a] += 1;
        }
        let mut moved: f64 = 0.0;
        for c in 0..k {
            if counts[c] > 0 {
                let next = sums[c] / counts[c] as f64;
                moved = moved.max((next - centers[c]).abs());
                centers[c] = next;
            }
        }
        assign = values.iter().map(|&v| nearest(&centers, v)).collect();
        if moved <= KMEANS_TOL {
            break;
        }
    }
    assign
}

/// Groups from K-means++ clustering of user rates, best K of the sweep.
pub fn kmeanspp_solve(inst: &ProblemInstance, cfg: &BaselineConfig) -> SolveResult {
    let started = Instant::now();
    let users = decodable_users(inst);
    if users.is_empty() {
        return result_from_plan(inst, "kmeanspp", empty_plan(), 0, started);
    }
    // cluster in Mbit/s for numeric comfort
    let rates: Vec<f64> = users
        .iter()
        .map(|&u| inst.user_rate_bps(u).unwrap() / 1e6)
        .collect();
    let k_max = cfg.kmeans_k_max.min(users.len()).min(inst.n_rates());
    let k_min = cfg.kmeans_k_min.min(k_max).max(1);
    let mut best: Option<(f64, MulticastPlan)> = None;
    let mut evaluations = 0;
    for k in k_min..=k_max {
        let assign = kmeans_1d(&rates, k, cfg.rng_seed.wrapping_add(k as u64));
        let groups: Vec<Group> = (0..k)
            .filter_map(|c| {
                let members: Vec<usize> = users
                    .iter()
                    .zip(&assign)
                    .filter(|(_, &a)| a == c)
                    .map(|(&u, _)| u)
                    .collect();
                if members.is_empty() {
                    None
                } else {
                    Group::new(inst, members)
                }
            })
            .collect();
        let (plan, evals) = schedule_groups(inst, &groups, inst.budget());
        evaluations += evals;
        let u = evaluate_plan(inst, &plan).expect("well formed").utility;
        if best.as_ref().is_none_or(|(bu, _)| u > *bu) {
            best = Some((u, plan));
        }
    }
    let (_, plan) = best.expect("at least one K evaluated");
    result_from_plan(inst, "kmeanspp", plan, evaluations, started)
}

/// Standalone value of one contiguous group, see [`dp_solve`].
struct GroupValuation {
    /// Grid indices by descending group interest (positive only).
    order: Vec<usize>,
    weights: Vec<f64>,
    cost: f64,
}

impl GroupValuation {
    fn new(inst: &ProblemInstance, members: &[usize], rate_bps: f64) -> Self {
        let mut scored: Vec<(usize, f64)> = (0..inst.n_grids())
            .map(|l| (l, members.iter().map(|&u| inst.weight(u, l)).sum::<f64>()))
            .filter(|&(_, w)| w > 0.0)
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Self {
            order: scored.iter().map(|s| s.0).collect(),
            weights: scored.iter().map(|s| s.1).collect(),
            cost: transmission_time(inst.grid_bytes(), rate_bps),
        }
    }

    fn affordable(&self, budget_s: f64) -> usize {
        let mut count = 0;
        while count < self.order.len() && within_budget((count + 1) as f64 * self.cost, budget_s) {
            count += 1;
        }
        count
    }

    /// Value under `budget_s`, or `None` when some member misses `floor`.
    fn value(
        &self,
        inst: &ProblemInstance,
        members: &[usize],
        budget_s: f64,
        floor: f64,
    ) -> Option<f64> {
        let count = self.affordable(budget_s);
        if floor > 0.0 {
            for &u in members {
                let mass = inst.user_mass(u);
                if mass <= 0.0 {
                    continue;
                }
                let served: f64 = self.order[..count].iter().map(|&l| inst.weight(u, l)).sum();
                if served < floor * mass {
                    return None;
                }
            }
        }
        Some(self.weights[..count].iter().sum())
    }
}

/// Best partition of `sorted` users into exactly `k` contiguous groups.
fn dp_partition(
    inst: &ProblemInstance,
    sorted: &[usize],
    valuations: &[Vec<Option<GroupValuation>>],
    k: usize,
    floor: f64,
) -> Option<Vec<(usize, usize)>> {
    let n = sorted.len();
    let budget_k = inst.budget() / k as f64;
    // value[i][j] for users sorted[i..j]
    let mut value = vec![vec![None; n + 1]; n + 1];
    for i in 0..n {
        for j in i + 1..=n {
            if let Some(v) = &valuations[i][j] {
                value[i][j] = v.value(inst, &sorted[i..j], budget_k, floor);
            }
        }
    }
    let mut best = vec![vec![None::<f64>; n + 1]; k + 1];
    let mut back = vec![vec![0usize; n + 1]; k + 1];
    best[0][0] = Some(0.0);
    for g in 1..=k {
        for j in g..=n {
            for i in (g - 1)..j {
                let (Some(prev), Some(v)) = (best[g - 1][i], value[i][j]) else {
                    continue;
                };
                let cand = prev + v;
                if best[g][j].is_none_or(|b| cand > b) {
                    best[g][j] = Some(cand);
                    back[g][j] = i;
                }
            }
        }
    }
    best[k][n]?;
    let mut bounds = Vec::with_capacity(k);
    let mut j = n;
    for g in (1..=k).rev() {
        let i = back[g][j];
        bounds.push((i, j));
        j = i;
    }
    bounds.reverse();
    Some(bounds)
}

/// Rate-sorted contiguous grouping by dynamic programming.
///
/// `fair` enforces the configured fairness floor during partitioning. If no
/// partition satisfies it, the unconstrained result is returned with the
/// `infeasible_fair` flag.
pub fn dp_solve(inst: &ProblemInstance, cfg: &BaselineConfig, fair: bool) -> SolveResult {
    let started = Instant::now();
    let id = if fair { "dp_fair" } else { "dp" };
    let mut users = decodable_users(inst);
    if users.is_empty() {
        return result_from_plan(inst, id, empty_plan(), 0, started);
    }
    users.sort_by(|&a, &b| {
        inst.user_rate_bps(b)
            .unwrap()
            .total_cmp(&inst.user_rate_bps(a).unwrap())
            .then(a.cmp(&b))
    });
    let n = users.len();
    let valuations: Vec<Vec<Option<GroupValuation>>> = (0..=n)
        .map(|i| {
            (0..=n)
                .map(|j| {
                    if j <= i {
                        return None;
                    }
                    let rate = bottleneck_rate(inst, &users[i..j])?;
                    Some(GroupValuation::new(inst, &users[i..j], rate))
                })
                .collect()
        })
        .collect();

    let run = |floor: f64| -> (Option<MulticastPlan>, u64) {
        let mut best: Option<(f64, MulticastPlan)> = None;
        let mut evaluations = 0;
        for k in 1..=cfg.dp_max_groups.min(n) {
            let Some(bounds) = dp_partition(inst, &users, &valuations, k, floor) else {
                continue;
            };
            let groups: Vec<Group> = bounds
                .iter()
                .filter_map(|&(i, j)| Group::new(inst, users[i..j].to_vec()))
                .collect();
            let (plan, evals) = schedule_groups(inst, &groups, inst.budget());
            evaluations += evals;
            let u = evaluate_plan(inst, &plan).expect("well formed").utility;
            if best.as_ref().is_none_or(|(bu, _)| u > *bu) {
                best = Some((u, plan));
            }
        }
        (best.map(|b| b.1), evaluations)
    };

    let floor = if fair { cfg.fairness_floor } else { 0.0 };
    let (plan, evals) = run(floor);
    match plan {
        Some(plan) => result_from_plan(inst, id, plan, evals, started),
        None => {
            let (plan, more) = run(0.0);
            let mut r = result_from_plan(
                inst,
                id,
                plan.expect("unconstrained DP always has a partition"),
                evals + more,
                started,
            );
            r.flags.push("infeasible_fair".to_string());
            r
        }
    }
}

/// Contiguous groups (in `dp` order) of a plan, for inspection.
pub fn is_contiguous_in_rate_order(inst: &ProblemInstance, plan: &MulticastPlan) -> bool {
    let mut ranges: Vec<(f64, f64)> = plan
        .groups
        .iter()
        .filter(|g| !g.is_empty())
        .map(|g| {
            let rates: Vec<f64> = g.iter().map(|&u| inst.user_rate_bps(u).unwrap()).collect();
            (
                rates.iter().copied().fold(f64::INFINITY, f64::min),
                rates.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            )
        })
        .collect();
    ranges.sort_by(|a, b| a.0.total_cmp(&b.0));
    // ranges may touch (equal rates split across groups) but not interleave
    ranges.windows(2).all(|w| w[0].1 <= w[1].0)
}
