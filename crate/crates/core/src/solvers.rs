//! Greedy solvers for the grid-rate problem.
//!
//! Both solvers run the same two-pass schedule:
//!
//! 1. greedy selection by marginal utility per second of airtime,
//! 2. redundant-item removal (keep only the lowest rate per grid) and, if
//!    that freed any airtime, a second greedy pass over the refreshed pool,
//! 3. a best-single-item check against the greedy set.
//!
//! [`refined_greedy`] re-scores every candidate each step. [`accelerated_greedy`]
//! keeps stale scores in a max-heap as upper bounds and drops items that a
//! lower-rate copy of the same grid already dominates. Ratio ties are broken
//! towards the lower `(grid, rate)` pair in both, so they select the same
//! items in the same order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::instance::{
    plan_from_selection, selection_cost, utility, within_budget, CoverageState, Item,
    MulticastPlan, ProblemInstance, Selection,
};

/// Output shared by every solver and baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub solver: String,
    pub selection: Selection,
    pub plan: MulticastPlan,
    pub utility: f64,
    pub latency_s: f64,
    pub gain_evaluations: u64,
    pub wall_time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub greedy: Option<GreedyStats>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

/// Intermediate values of the two-pass greedy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GreedyStats {
    /// Utility after the first greedy pass.
    pub pass1_utility: f64,
    /// Redundant items dropped between the passes.
    pub removed_items: usize,
    /// Airtime recovered by the removal.
    pub reclaimed_s: f64,
    /// Whether the second pass ran.
    pub reinvested: bool,
    /// Utility of the greedy set before the single-item check.
    pub greedy_utility: f64,
    /// Whether the best single item beat the greedy set.
    pub used_single_item: bool,
}

/// Counts marginal-gain evaluations.
#[derive(Debug, Default)]
struct GainCounter {
    evaluations: u64,
}

impl GainCounter {
    #[inline]
    fn gain(&mut self, inst: &ProblemInstance, state: &CoverageState, item: Item) -> f64 {
        self.evaluations += 1;
        state.marginal_gain(inst, item)
    }
}

/// Spent airtime against the budget.
#[derive(Debug, Clone, Copy)]
struct Budget {
    limit: f64,
    used: f64,
}

impl Budget {
    fn new(limit: f64) -> Self {
        Self { limit, used: 0.0 }
    }

    fn fits(&self, cost: f64) -> bool {
        within_budget(self.used + cost, self.limit)
    }

    fn has_room(&self) -> bool {
        self.used < self.limit
    }
}

/// `(ratio, item)` ordering: higher ratio first, then lower item.
#[inline]
fn outranks(ratio: f64, item: Item, other_ratio: f64, other: Item) -> bool {
    match ratio.total_cmp(&other_ratio) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => item < other,
    }
}

/// Heap entry carrying the last computed ratio of an item.
#[derive(Debug, Clone, Copy)]
pub struct LazyQueueEntry {
    pub item: Item,
    pub cached_ratio: f64,
}

impl PartialEq for LazyQueueEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for LazyQueueEntry {}

impl PartialOrd for LazyQueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for LazyQueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.cached_ratio
            .total_cmp(&other.cached_ratio)
            .then_with(|| other.item.cmp(&self.item))
    }
}

/// Keep only the lowest-rate item per grid.
///
/// Returns the reduced selection and the airtime of the dropped items.
/// Coverage is unchanged: the lowest rate reaches a superset of the users.
pub fn remove_redundant(inst: &ProblemInstance, sel: &Selection) -> (Selection, f64) {
    let mut kept = Selection::new();
    let mut reclaimed = 0.0;
    let mut last_grid = None;
    // items iterate sorted by (grid, rate): the first per grid is the lowest
    for it in sel.iter() {
        if last_grid == Some(it.grid) {
            reclaimed += inst.cost(it.rate);
        } else {
            kept.insert(it);
            last_grid = Some(it.grid);
        }
    }
    (kept, reclaimed)
}

/// Best feasible single item by standalone utility, with its utility.
pub fn best_single_item(inst: &ProblemInstance) -> (Option<Item>, f64) {
    let mut counter = GainCounter::default();
    best_single(inst, &mut counter)
}

fn best_single(inst: &ProblemInstance, counter: &mut GainCounter) -> (Option<Item>, f64) {
    let empty = CoverageState::new(inst);
    let mut best: Option<(Item, f64)> = None;
    for e in inst.ground_set() {
        if !within_budget(inst.cost(e.rate), inst.budget()) {
            continue;
        }
        let g = counter.gain(inst, &empty, e);
        if g > 0.0 && best.is_none_or(|(_, bg)| g > bg) {
            best = Some((e, g));
        }
    }
    match best {
        Some((e, g)) => (Some(e), g),
        None => (None, 0.0),
    }
}

/// Greedy working set shared by both solvers.
struct GreedyRun<'a> {
    inst: &'a ProblemInstance,
    sel: Selection,
    state: CoverageState,
    budget: Budget,
    counter: GainCounter,
}

impl<'a> GreedyRun<'a> {
    fn new(inst: &'a ProblemInstance) -> Self {
        Self {
            inst,
            sel: Selection::new(),
            state: CoverageState::new(inst),
            budget: Budget::new(inst.budget()),
            counter: GainCounter::default(),
        }
    }

    fn accept(&mut self, e: Item) {
        self.sel.insert(e);
        self.state.apply_item(self.inst, e);
        self.budget.used += self.inst.cost(e.rate);
    }

    /// Drops redundant items; returns `(removed, reclaimed)`.
    fn consolidate(&mut self) -> (usize, f64) {
        let before = self.sel.len();
        let (kept, reclaimed) = remove_redundant(self.inst, &self.sel);
        self.sel = kept;
        self.budget.used = selection_cost(self.inst, &self.sel);
        debug_assert_eq!(self.state, CoverageState::from_selection(self.inst, &self.sel));
        (before - self.sel.len(), reclaimed)
    }

    /// One full-rescan greedy pass over `candidates`.
    fn standard_pass(&mut self, candidates: &mut Vec<Item>) {
        while !candidates.is_empty() && self.budget.has_room() {
            let mut best_idx = 0;
            let mut best_gain = 0.0;
            let mut best_ratio = f64::NEG_INFINITY;
            for (idx, &e) in candidates.iter().enumerate() {
                let g = self.counter.gain(self.inst, &self.state, e);
                let ratio = g / self.inst.cost(e.rate);
                if idx == 0 || outranks(ratio, e, best_ratio, candidates[best_idx]) {
                    best_idx = idx;
                    best_gain = g;
                    best_ratio = ratio;
                }
            }
            if best_gain <= 0.0 {
                break;
            }
            let e = candidates.swap_remove(best_idx);
            if self.budget.fits(self.inst.cost(e.rate)) {
                self.accept(e);
            }
        }
    }

    fn remaining_pool(&self) -> Vec<Item> {
        self.inst
            .ground_set()
            .filter(|e| !self.sel.contains(e))
            .collect()
    }

    /// Push `e` with its current ratio if it is affordable and useful.
    fn seed_queue(&mut self, queue: &mut BinaryHeap<LazyQueueEntry>, pool: impl Iterator<Item = Item>) {
        for e in pool {
            let c = self.inst.cost(e.rate);
            let ratio = self.counter.gain(self.inst, &self.state, e) / c;
            if self.budget.fits(c) && ratio > 0.0 {
                queue.push(LazyQueueEntry {
                    item: e,
                    cached_ratio: ratio,
                });
            }
        }
    }

    /// Pop entries dominated by an accepted lower-rate copy of their grid.
    fn discard_dominated(&self, queue: &mut BinaryHeap<LazyQueueEntry>) {
        while let Some(top) = queue.peek() {
            if self.state.is_dominated(top.item) {
                queue.pop();
            } else {
                break;
            }
        }
    }

    /// One lazy-evaluation greedy pass draining `queue`.
    fn lazy_pass(&mut self, queue: &mut BinaryHeap<LazyQueueEntry>) {
        while self.budget.has_room() {
            self.discard_dominated(queue);
            let Some(entry) = queue.pop() else { break };
            let e = entry.item;
            let c = self.inst.cost(e.rate);
            if !self.budget.fits(c) {
                continue;
            }
            let ratio = self.counter.gain(self.inst, &self.state, e) / c;
            self.discard_dominated(queue);
            let leads = match queue.peek() {
                None => true,
                Some(top) => outranks(ratio, e, top.cached_ratio, top.item),
            };
            if leads {
                if ratio <= 0.0 {
                    break;
                }
                // accepting (l, m) retires every queued (l, m') with m' > m;
                // discard_dominated drops them as they surface
                self.accept(e);
            } else {
                queue.push(LazyQueueEntry {
                    item: e,
                    cached_ratio: ratio,
                });
            }
        }
    }

    fn finish(mut self, solver: &str, mut stats: GreedyStats, started: Instant) -> SolveResult {
        let greedy_utility = utility(self.inst, &self.sel);
        stats.greedy_utility = greedy_utility;
        let (single, single_utility) = best_single(self.inst, &mut self.counter);
        let selection = match single {
            Some(e) if single_utility > greedy_utility => {
                stats.used_single_item = true;
                [e].into_iter().collect()
            }
            _ => self.sel,
        };
        let plan = plan_from_selection(self.inst, &selection)
            .expect("greedy selections respect the budget");
        let result_utility = utility(self.inst, &selection);
        let latency_s = selection_cost(self.inst, &selection);
        SolveResult {
            solver: solver.to_string(),
            selection,
            plan,
            utility: result_utility,
            latency_s,
            gain_evaluations: self.counter.evaluations,
            wall_time_s: started.elapsed().as_secs_f64(),
            greedy: Some(stats),
            flags: Vec::new(),
        }
    }
}

/// Two-pass greedy with full re-evaluation of every candidate per step.
pub fn refined_greedy(inst: &ProblemInstance) -> SolveResult {
    let started = Instant::now();
    let mut run = GreedyRun::new(inst);
    let mut stats = GreedyStats::default();
    let mut candidates: Vec<Item> = inst.ground_set().collect();

    run.standard_pass(&mut candidates);
    stats.pass1_utility = utility(inst, &run.sel);

    let (removed, reclaimed) = run.consolidate();
    stats.removed_items = removed;
    stats.reclaimed_s = reclaimed;
    if removed > 0 {
        stats.reinvested = true;
        let mut candidates = run.remaining_pool();
        run.standard_pass(&mut candidates);
    }
    run.finish("greedy", stats, started)
}

/// Two-pass greedy with lazy evaluation and dominated-item pruning.
pub fn accelerated_greedy(inst: &ProblemInstance) -> SolveResult {
    let started = Instant::now();
    let mut run = GreedyRun::new(inst);
    let mut stats = GreedyStats::default();
    let mut queue = BinaryHeap::with_capacity(inst.n_grids() * inst.n_rates());
    run.seed_queue(&mut queue, inst.ground_set());

    run.lazy_pass(&mut queue);
    stats.pass1_utility = utility(inst, &run.sel);

    let (removed, reclaimed) = run.consolidate();
    stats.removed_items = removed;
    stats.reclaimed_s = reclaimed;
    if removed > 0 {
        stats.reinvested = true;
        queue.clear();
        let pool = run.remaining_pool();
        run.seed_queue(&mut queue, pool.into_iter());
        run.lazy_pass(&mut queue);
    }
    run.finish("greedy_accel", stats, started)
}

/// First greedy pass only, without removal, reinvestment or the single-item
/// check. Used to check that the refinements never lose utility.
pub fn plain_greedy_selection(inst: &ProblemInstance) -> Selection {
    let mut run = GreedyRun::new(inst);
    let mut candidates: Vec<Item> = inst.ground_set().collect();
    run.standard_pass(&mut candidates);
    run.sel
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::McsTable;
    use crate::instance::{evaluate_plan, InstanceData};

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
    fn tiny_budget_gives_empty() {
        // cheapest item costs 2 ms
        let i = inst(vec![vec![1.0, 1.0]], vec![25.0], 0.001);
        for r in [refined_greedy(&i), accelerated_greedy(&i)] {
            assert!(r.selection.is_empty());
            assert_eq!(r.utility, 0.0);
            assert!(r.plan.prune_empty().groups.is_empty());
        }
        assert_eq!(best_single_item(&i), (None, 0.0));
    }

    #[test]
    fn single_user_takes_highest_decodable_rate() {
        let i = inst(vec![vec![1.0]], vec![15.0], 1.0);
        for r in [refined_greedy(&i), accelerated_greedy(&i)] {
            let items: Vec<Item> = r.selection.iter().collect();
            assert_eq!(items, vec![Item::new(0, 1)]);
            assert_eq!(r.utility, 1.0);
        }
    }

    #[test]
    fn remove_redundant_rules() {
        let i = inst(vec![vec![1.0, 1.0]], vec![25.0], 1.0);
        let s: Selection = [Item::new(0, 0), Item::new(1, 2)].into_iter().collect();
        assert_eq!(remove_redundant(&i, &s), (s.clone(), 0.0));

        let s: Selection = [Item::new(0, 1), Item::new(0, 2)].into_iter().collect();
        let (kept, reclaimed) = remove_redundant(&i, &s);
        assert_eq!(kept.iter().collect::<Vec<_>>(), vec![Item::new(0, 1)]);
        assert_eq!(reclaimed, i.cost(2));
        assert_eq!(utility(&i, &kept), utility(&i, &s));
    }

    #[test]
    fn best_single_item_prefers_low_index_on_ties() {
        let i = inst(vec![vec![0.5, 0.5], vec![0.5, 0.5]], vec![25.0, 25.0], 1.0);
        assert_eq!(best_single_item(&i), (Some(Item::new(0, 0)), 1.0));
    }

    #[test]
    fn best_single_item_ignores_cost() {
        // weak user only decodes rate 0, which costs 8 ms
        let i = inst(vec![vec![0.4, 0.0], vec![0.4, 0.0]], vec![25.0, 5.0], 0.01);
        assert_eq!(best_single_item(&i), (Some(Item::new(0, 0)), 0.8));
    }

    #[test]
    fn single_item_check_rescues_greedy() {
        // Greedy prefers the dense cheap item, then cannot afford the big one.
        // Rates: 8 ms, 4 ms, 2 ms per grid.
        let i = inst(
            vec![vec![0.3, 0.0], vec![0.0, 0.5], vec![0.0, 0.5]],
            vec![25.0, 5.0, 5.0],
            0.009,
        );
        let r = refined_greedy(&i);
        let stats = r.greedy.unwrap();
        assert!(stats.used_single_item);
        assert_eq!(stats.greedy_utility, 0.3);
        assert_eq!(r.utility, 1.0);
        assert_eq!(accelerated_greedy(&i).utility, 1.0);
    }

    #[test]
    fn reinvestment_recovers_airtime() {
        // Grid 0 goes out at rate 2 (2 ms) first, later at rate 0 (8 ms) for
        // the weak user; dropping the rate-2 copy pays for grid 3.
        let i = inst(
            vec![
                vec![1.0, 0.0, 0.0, 0.1],
                vec![0.9, 0.0, 0.0, 0.0],
                vec![0.0, 0.6, 0.55, 0.0],
            ],
            vec![25.0, 5.0, 25.0],
            0.0145,
        );
        let r = refined_greedy(&i);
        let stats = r.greedy.unwrap();
        assert_eq!(stats.removed_items, 1);
        assert!(stats.reinvested);
        assert!((stats.pass1_utility - 3.05).abs() < 1e-12);
        assert!((r.utility - 3.15).abs() < 1e-12);
        assert!(r.selection.contains(&Item::new(3, 2)));
        assert!(!r.selection.contains(&Item::new(0, 2)));
        let a = accelerated_greedy(&i);
        assert_eq!(a.selection, r.selection);
        assert!(a.gain_evaluations <= r.gain_evaluations);
    }

    #[test]
    fn outputs_are_feasible_and_consistent() {
        let i = inst(
            vec![
                vec![0.2, 0.7, 0.1, 0.0],
                vec![0.5, 0.0, 0.3, 0.9],
                vec![0.0, 0.4, 0.8, 0.2],
            ],
            vec![3.0, 14.0, 26.0],
            0.012,
        );
        for r in [refined_greedy(&i), accelerated_greedy(&i)] {
            let ev = evaluate_plan(&i, &r.plan).unwrap();
            assert!(ev.feasible);
            assert_eq!(ev.utility, r.utility);
            assert!(r.latency_s <= i.budget() * (1.0 + 1e-9));
            let mut grids: Vec<usize> = r.selection.iter().map(|e| e.grid).collect();
            grids.dedup();
            assert_eq!(grids.len(), r.selection.len());
        }
    }

    #[test]
    fn deterministic() {
        let i = inst(
            vec![vec![0.2, 0.7, 0.1], vec![0.5, 0.0, 0.3]],
            vec![3.0, 14.0],
            0.01,
        );
        assert_eq!(refined_greedy(&i).selection, refined_greedy(&i).selection);
        assert_eq!(accelerated_greedy(&i).selection, accelerated_greedy(&i).selection);
    }

    #[test]
    fn queue_entry_order() {
        let a = LazyQueueEntry { item: Item::new(0, 1), cached_ratio: 2.0 };
        let b = LazyQueueEntry { item: Item::new(0, 0), cached_ratio: 2.0 };
        let c = LazyQueueEntry { item: Item::new(5, 5), cached_ratio: 3.0 };
        let mut h: BinaryHeap<_> = [a, b, c].into_iter().collect();
        assert_eq!(h.pop().unwrap().item, Item::new(5, 5));
        assert_eq!(h.pop().unwrap().item, Item::new(0, 0));
        assert_eq!(h.pop().unwrap().item, Item::new(0, 1));
    }
}
