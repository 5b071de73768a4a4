//! Exact optimum for small instances.
//!
//! Some optimal selection sends each grid at most once, at a single rate,
//! so the search ranges over per-grid assignments in `{none, 0..M}^L`
//! instead of all item subsets. Depth-first search prunes on the budget and
//! on an optimistic bound. Two unpruned modes exist purely for self-checks.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{
    bottleneck_rate, evaluate_plan, plan_from_selection, selection_cost, selection_from_plan,
    utility, within_budget, Item, MulticastPlan, ProblemInstance, Selection,
};
use crate::solvers::SolveResult;

/// Default limit on `(M + 1)^L`.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1 << 22;

/// Limit on `L * M` for the unrestricted subset enumeration.
pub const SUBSET_ENUMERATION_MAX_ITEMS: usize = 24;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("search space {size:.3e} exceeds the enumeration cap {cap}")]
    TooLarge { size: f64, cap: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub opt_utility: f64,
    pub opt_selection: Selection,
    pub nodes_explored: u64,
}

/// Size of the per-grid assignment space, `(M + 1)^L`.
pub fn assignment_space(inst: &ProblemInstance) -> f64 {
    ((inst.n_rates() + 1) as f64).powi(inst.n_grids() as i32)
}

fn check_size(size: f64, cap: u64) -> Result<(), OracleError> {
    if size > cap as f64 {
        Err(OracleError::TooLarge { size, cap })
    } else {
        Ok(())
    }
}

/// Per-grid options: value of sending grid `l` at rate `m` alone.
struct GridOptions {
    /// `(rate, value)` with value > 0, lowest rate first.
    options: Vec<(usize, f64)>,
    best: f64,
}

fn grid_options(inst: &ProblemInstance, grid: usize, prune: bool) -> GridOptions {
    let values: Vec<f64> = (0..inst.n_rates())
        .map(|m| {
            (0..inst.n_users())
                .filter(|&u| inst.decodes(u, m))
                .map(|u| inst.weight(u, grid))
                .sum()
        })
        .collect();
    let options = (0..inst.n_rates())
        .filter(|&m| {
            if !prune {
                return true;
            }
            // worthless, or matched by a cheaper higher rate
            values[m] > 0.0 && !(m + 1 < values.len() && values[m + 1] >= values[m])
        })
        .map(|m| (m, values[m]))
        .collect();
    GridOptions {
        options,
        best: values.iter().copied().fold(0.0, f64::max),
    }
}

struct Search<'a> {
    inst: &'a ProblemInstance,
    order: Vec<usize>,
    grids: Vec<GridOptions>,
    /// `suffix_bound[i]` = sum of best values of `order[i..]`.
    suffix_bound: Vec<f64>,
    prune: bool,
    tol: f64,
    chosen: Vec<Item>,
    best: Option<(f64, Selection)>,
    nodes: u64,
}

impl Search<'_> {
    fn dfs(&mut self, depth: usize, value: f64, cost: f64) {
        self.nodes += 1;
        if self.prune {
            if let Some((inc, _)) = &self.best {
                if value + self.suffix_bound[depth] < *inc - self.tol {
                    return;
                }
            }
        }
        if depth == self.order.len() {
            self.offer(value);
            return;
        }
        let l = self.order[depth];
        for k in 0..self.grids[l].options.len() {
            let (m, v) = self.grids[l].options[k];
            let c = cost + self.inst.cost(m);
            if !within_budget(c, self.inst.budget()) {
                continue;
            }
            self.chosen.push(Item::new(l, m));
            self.dfs(depth + 1, value + v, c);
            self.chosen.pop();
        }
        self.dfs(depth + 1, value, cost);
    }

    fn offer(&mut self, value: f64) {
        let better = match &self.best {
            None => true,
            Some((inc, _)) if value > inc + self.tol => true,
            Some((inc, _)) if value < inc - self.tol => false,
            Some((_, inc_sel)) => {
                // near-tie: decide with canonical sums, then lexicographically
                let sel: Selection = self.chosen.iter().copied().collect();
                let exact = utility(self.inst, &sel);
                let inc_exact = utility(self.inst, inc_sel);
                if exact != inc_exact {
                    exact > inc_exact
                } else {
                    sel.iter().lt(inc_sel.iter())
                }
            }
        };
        if better {
            let sel: Selection = self.chosen.iter().copied().collect();
            self.best = Some((value, sel));
        }
    }
}

fn run_search(inst: &ProblemInstance, prune: bool) -> OracleResult {
    let grids: Vec<GridOptions> = (0..inst.n_grids())
        .map(|l| grid_options(inst, l, prune))
        .collect();
    let mut order: Vec<usize> = (0..inst.n_grids()).collect();
    if prune {
        order.sort_by(|&a, &b| grids[b].best.total_cmp(&grids[a].best).then(a.cmp(&b)));
    }
    let mut suffix_bound = vec![0.0; order.len() + 1];
    for i in (0..order.len()).rev() {
        suffix_bound[i] = suffix_bound[i + 1] + grids[order[i]].best;
    }
    let total = suffix_bound[0];
    let mut search = Search {
        inst,
        order,
        grids,
        suffix_bound,
        prune,
        tol: 1e-12 * total.max(1.0),
        chosen: Vec::new(),
        best: None,
        nodes: 0,
    };
    search.dfs(0, 0.0, 0.0);
    let (_, opt_selection) = search.best.expect("the empty assignment is always feasible");
    OracleResult {
        opt_utility: utility(inst, &opt_selection),
        opt_selection,
        nodes_explored: search.nodes,
    }
}

/// Exact optimum by pruned depth-first search over per-grid assignments.
pub fn exact_solve(inst: &ProblemInstance) -> Result<OracleResult, OracleError> {
    exact_solve_capped(inst, DEFAULT_ENUMERATION_CAP)
}

pub fn exact_solve_capped(inst: &ProblemInstance, cap: u64) -> Result<OracleResult, OracleError> {
    check_size(assignment_space(inst), cap)?;
    Ok(run_search(inst, true))
}

/// Every per-grid assignment visited, no pruning beyond feasibility.
pub fn exhaustive_assignments(
    inst: &ProblemInstance,
    cap: u64,
) -> Result<OracleResult, OracleError> {
    check_size(assignment_space(inst), cap)?;
    Ok(run_search(inst, false))
}

/// Every subset of the `L * M` items, with no one-rate-per-grid restriction.
pub fn exhaustive_subsets(inst: &ProblemInstance) -> Result<OracleResult, OracleError> {
    let items: Vec<Item> = inst.ground_set().collect();
    if items.len() > SUBSET_ENUMERATION_MAX_ITEMS {
        return Err(OracleError::TooLarge {
            size: 2f64.powi(items.len() as i32),
            cap: 1 << SUBSET_ENUMERATION_MAX_ITEMS,
        });
    }
    let mut best = (0.0, Selection::new());
    let mut nodes = 0;
    for mask in 0u64..(1u64 << items.len()) {
        nodes += 1;
        let sel: Selection = items
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, &e)| e)
            .collect();
        if !within_budget(selection_cost(inst, &sel), inst.budget()) {
            continue;
        }
        let u = utility(inst, &sel);
        if u > best.0 {
            best = (u, sel);
        }
    }
    Ok(OracleResult {
        opt_utility: best.0,
        opt_selection: best.1,
        nodes_explored: nodes,
    })
}

/// Oracle output in the common solver result shape.
pub fn oracle_solve(inst: &ProblemInstance, cap: u64) -> Result<SolveResult, OracleError> {
    let started = Instant::now();
    let r = exact_solve_capped(inst, cap)?;
    let plan = plan_from_selection(inst, &r.opt_selection).expect("optimum is feasible");
    Ok(SolveResult {
        solver: "oracle".to_string(),
        latency_s: selection_cost(inst, &r.opt_selection),
        utility: r.opt_utility,
        selection: r.opt_selection,
        plan,
        gain_evaluations: r.nodes_explored,
        wall_time_s: started.elapsed().as_secs_f64(),
        greedy: None,
        flags: Vec::new(),
    })
}

/// Result of randomized round-trips between selections and plans.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub trials: usize,
    pub violations: Vec<String>,
}

impl EquivalenceReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

fn random_selection(inst: &ProblemInstance, rng: &mut ChaCha8Rng) -> Selection {
    let mut items: Vec<Item> = inst.ground_set().collect();
    items.shuffle(rng);
    let keep = rng.gen_range(0..=items.len());
    let mut sel = Selection::new();
    let mut used = 0.0;
    for e in items.into_iter().take(keep) {
        let c = inst.cost(e.rate);
        if within_budget(used + c, inst.budget()) {
            sel.insert(e);
            used += c;
        }
    }
    sel
}

/// Random plan whose groups are the full decoder sets of random rates.
fn random_maximal_plan(inst: &ProblemInstance, rng: &mut ChaCha8Rng) -> MulticastPlan {
    let mut groups = Vec::new();
    let mut rates = Vec::new();
    let mut masks = Vec::new();
    let mut used = 0.0;
    for m in 0..inst.n_rates() {
        if !rng.gen_bool(0.6) {
            continue;
        }
        let members: Vec<usize> = (0..inst.n_users()).filter(|&u| inst.decodes(u, m)).collect();
        let Some(rate) = bottleneck_rate(inst, &members) else {
            continue;
        };
        let cost = crate::channel::transmission_time(inst.grid_bytes(), rate);
        let mut mask = vec![false; inst.n_grids()];
        for slot in mask.iter_mut() {
            if rng.gen_bool(0.4) && within_budget(used + cost, inst.budget()) {
                *slot = true;
                used += cost;
            }
        }
        groups.push(members);
        rates.push(rate);
        masks.push(mask);
    }
    MulticastPlan {
        groups,
        masks,
        rate_bps: rates,
    }
}

/// Random plan with arbitrary nonempty decodable groups.
fn random_plan(inst: &ProblemInstance, rng: &mut ChaCha8Rng) -> MulticastPlan {
    let decodable: Vec<usize> = (0..inst.n_users())
        .filter(|&u| inst.max_rate_index(u).is_some())
        .collect();
    let mut plan = MulticastPlan {
        groups: Vec::new(),
        masks: Vec::new(),
        rate_bps: Vec::new(),
    };
    if decodable.is_empty() {
        return plan;
    }
    let mut used = 0.0;
    for _ in 0..rng.gen_range(1..=inst.n_users().max(1)) {
        let mut members: Vec<usize> = decodable.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
        if members.is_empty() {
            members.push(*decodable.choose(rng).unwrap());
        }
        let rate = bottleneck_rate(inst, &members).unwrap();
        let cost = crate::channel::transmission_time(inst.grid_bytes(), rate);
        let mut mask = vec![false; inst.n_grids()];
        for slot in mask.iter_mut() {
            if rng.gen_bool(0.4) && within_budget(used + cost, inst.budget()) {
                *slot = true;
                used += cost;
            }
        }
        plan.groups.push(members);
        plan.masks.push(mask);
        plan.rate_bps.push(rate);
    }
    plan
}

/// Randomized round-trip checks of the selection/plan correspondence.
///
/// Each trial draws a feasible selection, a plan built from full decoder
/// groups, and an arbitrary plan. Selections and full-group plans must keep
/// their objective exactly through the round-trip; arbitrary plans may only
/// gain (a smaller group wastes coverage its rate could have reached). Cost
/// must never increase.
pub fn verify_equivalence(inst: &ProblemInstance, trials: usize, seed: u64) -> EquivalenceReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = Vec::new();
    for t in 0..trials {
        let sel = random_selection(inst, &mut rng);
        let u = utility(inst, &sel);
        let c = selection_cost(inst, &sel);
        match plan_from_selection(inst, &sel) {
            Err(e) => violations.push(format!("trial {t}: selection rejected: {e}")),
            Ok(plan) => {
                let ev = evaluate_plan(inst, &plan).expect("canonical plans are valid");
                if ev.utility != u {
                    violations.push(format!(
                        "trial {t}: selection utility {u} became {} as a plan",
                        ev.utility
                    ));
                }
                if ev.latency_s > c {
                    violations.push(format!(
                        "trial {t}: selection cost {c} grew to {} as a plan",
                        ev.latency_s
                    ));
                }
                if !ev.feasible {
                    violations.push(format!("trial {t}: canonical plan infeasible"));
                }
            }
        }

        for (kind, plan, exact) in [
            ("full-group", random_maximal_plan(inst, &mut rng), true),
            ("arbitrary", random_plan(inst, &mut rng), false),
        ] {
            let ev = evaluate_plan(inst, &plan).expect("random plans are valid");
            let back = match selection_from_plan(inst, &plan) {
                Ok(s) => s,
                Err(e) => {
                    violations.push(format!("trial {t}: {kind} plan rejected: {e}"));
                    continue;
                }
            };
            let bu = utility(inst, &back);
            let bc = selection_cost(inst, &back);
            let utility_ok = if exact { bu == ev.utility } else { bu >= ev.utility };
            if !utility_ok {
                violations.push(format!(
                    "trial {t}: {kind} plan utility {} mapped to {bu}",
                    ev.utility
                ));
            }
            if bc > ev.latency_s {
                violations.push(format!(
                    "trial {t}: {kind} plan cost {} mapped to {bc}",
                    ev.latency_s
                ));
            }
        }
    }
    EquivalenceReport { trials, violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::McsTable;
    use crate::instance::InstanceData;

    fn inst(moi: Vec<Vec<f64>>, snr: Vec<f64>, budget: f64) -> ProblemInstance {
        let table = McsTable::from_pairs(&[(1.0, 0.0), (2.0, 10.0), (4.0, 20.0)]).unwrap();
        ProblemInstance::new(InstanceData {
            n_users: moi.len(),
            n_grids: moi[0].len(),
            mcs_table: table,
            snr_db: snr,
            moi,
            grid_bytes: 1000.0,
            bandwidth_hz: 1e6,
            budget_s: budget,
        })
        .unwrap()
    }

    #[test]
    fn single_item_optimum() {
        let table = McsTable::from_pairs(&[(1.0, 0.0)]).unwrap();
        let i = ProblemInstance::new(InstanceData {
            n_users: 1,
            n_grids: 1,
            mcs_table: table,
            snr_db: vec![5.0],
            moi: vec![vec![0.7]],
            grid_bytes: 1000.0,
            bandwidth_hz: 1e6,
            budget_s: 0.008,
        })
        .unwrap();
        let r = exact_solve(&i).unwrap();
        assert_eq!(r.opt_utility, 0.7);
        assert_eq!(r.opt_selection.iter().collect::<Vec<_>>(), vec![Item::new(0, 0)]);
    }

    #[test]
    fn zero_budget_is_empty() {
        let i = inst(vec![vec![0.5, 0.4]], vec![25.0], 0.0);
        let r = exact_solve(&i).unwrap();
        assert_eq!(r.opt_utility, 0.0);
        assert!(r.opt_selection.is_empty());
    }

    #[test]
    fn too_large_is_rejected() {
        let i = inst(vec![vec![0.1; 30]], vec![25.0], 0.01);
        assert!(matches!(exact_solve(&i), Err(OracleError::TooLarge { .. })));
    }

    #[test]
    fn strong_and_weak_share_grid() {
        // grid 0 at the lowest rate reaches both users
        let i = inst(vec![vec![1.0, 0.0], vec![0.8, 0.1]], vec![25.0, 3.0], 0.0101);
        let r = exact_solve(&i).unwrap();
        let full = exhaustive_subsets(&i).unwrap();
        assert!((r.opt_utility - 1.8).abs() < 1e-12);
        assert_eq!(r.opt_utility, full.opt_utility);
    }

    #[test]
    fn modes_agree_on_fixture() {
        let i = inst(
            vec![vec![0.3, 0.9, 0.2], vec![0.5, 0.0, 0.4], vec![0.1, 0.6, 0.8]],
            vec![25.0, 12.0, 3.0],
            0.014,
        );
        let a = exact_solve(&i).unwrap();
        let b = exhaustive_assignments(&i, 1 << 12).unwrap();
        let c = exhaustive_subsets(&i).unwrap();
        assert_eq!(a.opt_utility, b.opt_utility);
        assert_eq!(a.opt_utility, c.opt_utility);
        assert!(a.nodes_explored < b.nodes_explored);
    }

    #[test]
    fn ties_pick_smallest_selection() {
        let i = inst(vec![vec![0.5, 0.5]], vec![3.0], 0.008);
        let r = exact_solve(&i).unwrap();
        assert_eq!(r.opt_selection.iter().collect::<Vec<_>>(), vec![Item::new(0, 0)]);
    }

    #[test]
    fn equivalence_round_trips() {
        let i = inst(
            vec![vec![0.3, 0.9, 0.2], vec![0.5, 0.0, 0.4], vec![0.1, 0.6, 0.8]],
            vec![25.0, 12.0, 3.0],
            0.02,
        );
        let rep = verify_equivalence(&i, 200, 5);
        assert_eq!(rep.trials, 200);
        assert!(rep.is_clean(), "{:?}", rep.violations);

        let empty = Selection::new();
        let plan = plan_from_selection(&i, &empty).unwrap();
        let ev = evaluate_plan(&i, &plan).unwrap();
        assert_eq!((ev.utility, ev.latency_s), (0.0, 0.0));
    }
}
