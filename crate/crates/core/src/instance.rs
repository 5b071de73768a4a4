//! Grid-rate problem instance, weighted-coverage utility, and the mappings
//! between grid-rate selections and explicit multicast plans.
//!
//! Indices are zero-based throughout: users `0..N`, grids `0..L` (row-major
//! over the BEV map) and rates `0..M` (ascending spectral efficiency).
//!
//! Utilities are always accumulated in the canonical `(user, grid)` order.
//! Any two representations that cover the same `(user, grid)` pairs therefore
//! produce bit-identical totals.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{transmission_time, ChannelError, McsTable};

/// Relative slack applied when comparing accumulated latency to the budget.
pub const BUDGET_RTOL: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum InstanceError {
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("instance must have at least one user and one grid")]
    Empty,
    #[error("snr_db has {got} entries, expected {expected}")]
    SnrLength { expected: usize, got: usize },
    #[error("snr of user {0} is not finite")]
    SnrNotFinite(usize),
    #[error("moi has {got} rows, expected {expected}")]
    MoiRows { expected: usize, got: usize },
    #[error("moi row {user} has {got} entries, expected {expected}")]
    MoiCols {
        user: usize,
        expected: usize,
        got: usize,
    },
    #[error("moi weight for user {user}, grid {grid} must be finite and non-negative")]
    BadWeight { user: usize, grid: usize },
    #[error("grid_bytes must be positive and finite")]
    BadGridBytes,
    #[error("bandwidth_hz must be positive and finite")]
    BadBandwidth,
    #[error("budget_s must be non-negative and finite")]
    BadBudget,
    #[error("item ({grid}, {rate}) out of range")]
    ItemOutOfRange { grid: usize, rate: usize },
    #[error("selection costs {cost} s, over the {budget} s budget")]
    OverBudget { cost: f64, budget: f64 },
    #[error("malformed plan: {0}")]
    MalformedPlan(String),
    #[error("user {user} in group {group} cannot decode {rate_bps} bit/s")]
    Undecodable {
        user: usize,
        group: usize,
        rate_bps: f64,
    },
}

/// True when `used` fits in `budget` up to the accumulated-rounding slack.
#[inline]
pub fn within_budget(used: f64, budget: f64) -> bool {
    used <= budget + BUDGET_RTOL * budget.abs()
}

/// Serializable instance description; decodability is derived on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceData {
    pub n_users: usize,
    pub n_grids: usize,
    pub mcs_table: McsTable,
    pub snr_db: Vec<f64>,
    pub moi: Vec<Vec<f64>>,
    pub grid_bytes: f64,
    pub bandwidth_hz: f64,
    pub budget_s: f64,
}

/// Validated grid-rate allocation problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceData", into = "InstanceData")]
pub struct ProblemInstance {
    data: InstanceData,
    /// Highest decodable rate index per user.
    max_rate: Vec<Option<usize>>,
    /// Per-rate item cost in seconds.
    costs: Vec<f64>,
}

impl TryFrom<InstanceData> for ProblemInstance {
    type Error = InstanceError;

    fn try_from(data: InstanceData) -> Result<Self, Self::Error> {
        ProblemInstance::new(data)
    }
}

impl From<ProblemInstance> for InstanceData {
    fn from(inst: ProblemInstance) -> Self {
        inst.data
    }
}

impl ProblemInstance {
    pub fn new(data: InstanceData) -> Result<Self, InstanceError> {
        let (n, l) = (data.n_users, data.n_grids);
        if n == 0 || l == 0 {
            return Err(InstanceError::Empty);
        }
        if data.snr_db.len() != n {
            return Err(InstanceError::SnrLength {
                expected: n,
                got: data.snr_db.len(),
            });
        }
        if let Some(u) = data.snr_db.iter().position(|s| !s.is_finite()) {
            return Err(InstanceError::SnrNotFinite(u));
        }
        if data.moi.len() != n {
            return Err(InstanceError::MoiRows {
                expected: n,
                got: data.moi.len(),
            });
        }
        for (user, row) in data.moi.iter().enumerate() {
            if row.len() != l {
                return Err(InstanceError::MoiCols {
                    user,
                    expected: l,
                    got: row.len(),
                });
            }
            if let Some(grid) = row.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
                return Err(InstanceError::BadWeight { user, grid });
            }
        }
        if !(data.grid_bytes.is_finite() && data.grid_bytes > 0.0) {
            return Err(InstanceError::BadGridBytes);
        }
        if !(data.bandwidth_hz.is_finite() && data.bandwidth_hz > 0.0) {
            return Err(InstanceError::BadBandwidth);
        }
        if !(data.budget_s.is_finite() && data.budget_s >= 0.0) {
            return Err(InstanceError::BadBudget);
        }
        let max_rate = data
            .snr_db
            .iter()
            .map(|&s| data.mcs_table.max_rate_index(s))
            .collect();
        let costs = (0..data.mcs_table.len())
            .map(|m| transmission_time(data.grid_bytes, data.bandwidth_hz * data.mcs_table.rate(m)))
            .collect();
        Ok(Self {
            data,
            max_rate,
            costs,
        })
    }

    pub fn data(&self) -> &InstanceData {
        &self.data
    }

    pub fn n_users(&self) -> usize {
        self.data.n_users
    }

    pub fn n_grids(&self) -> usize {
        self.data.n_grids
    }

    pub fn n_rates(&self) -> usize {
        self.data.mcs_table.len()
    }

    pub fn mcs_table(&self) -> &McsTable {
        &self.data.mcs_table
    }

    pub fn budget(&self) -> f64 {
        self.data.budget_s
    }

    pub fn bandwidth(&self) -> f64 {
        self.data.bandwidth_hz
    }

    pub fn grid_bytes(&self) -> f64 {
        self.data.grid_bytes
    }

    pub fn snr_db(&self, user: usize) -> f64 {
        self.data.snr_db[user]
    }

    #[inline]
    pub fn weight(&self, user: usize, grid: usize) -> f64 {
        self.data.moi[user][grid]
    }

    pub fn moi_row(&self, user: usize) -> &[f64] {
        &self.data.moi[user]
    }

    /// Highest rate index `user` decodes, if any.
    #[inline]
    pub fn max_rate_index(&self, user: usize) -> Option<usize> {
        self.max_rate[user]
    }

    /// Decodability indicator alpha[n][m].
    #[inline]
    pub fn decodes(&self, user: usize, rate: usize) -> bool {
        matches!(self.max_rate[user], Some(k) if rate <= k)
    }

    /// Data rate `B * r_m` in bit/s.
    pub fn rate_bps(&self, rate: usize) -> f64 {
        self.data.bandwidth_hz * self.data.mcs_table.rate(rate)
    }

    /// User's maximum achievable data rate, if any rate decodes.
    pub fn user_rate_bps(&self, user: usize) -> Option<f64> {
        self.max_rate[user].map(|m| self.rate_bps(m))
    }

    /// Cost `c_m` of sending one grid at rate `m`.
    #[inline]
    pub fn cost(&self, rate: usize) -> f64 {
        self.costs[rate]
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    /// Dense N x M decodability matrix.
    pub fn alpha_matrix(&self) -> Vec<Vec<bool>> {
        (0..self.n_users())
            .map(|n| (0..self.n_rates()).map(|m| self.decodes(n, m)).collect())
            .collect()
    }

    pub fn contains(&self, item: Item) -> bool {
        item.grid < self.n_grids() && item.rate < self.n_rates()
    }

    /// Every grid-rate pair (the ground set), grid-major.
    pub fn ground_set(&self) -> impl Iterator<Item = Item> + '_ {
        let m = self.n_rates();
        (0..self.n_grids()).flat_map(move |l| (0..m).map(move |r| Item::new(l, r)))
    }

    /// Copy with a different latency budget.
    pub fn with_budget(&self, budget_s: f64) -> Result<Self, InstanceError> {
        let mut data = self.data.clone();
        data.budget_s = budget_s;
        Self::new(data)
    }

    /// Copy with a different bandwidth (costs rescale).
    pub fn with_bandwidth(&self, bandwidth_hz: f64) -> Result<Self, InstanceError> {
        let mut data = self.data.clone();
        data.bandwidth_hz = bandwidth_hz;
        Self::new(data)
    }

    /// Total MoI mass of one user.
    pub fn user_mass(&self, user: usize) -> f64 {
        self.data.moi[user].iter().sum()
    }

    fn check_items(&self, sel: &Selection) -> Result<(), InstanceError> {
        match sel.iter().find(|&it| !self.contains(it)) {
            Some(it) => Err(InstanceError::ItemOutOfRange {
                grid: it.grid,
                rate: it.rate,
            }),
            None => Ok(()),
        }
    }
}

/// A grid-rate pair: send grid `grid` at rate index `rate`.
///
/// Serialized as a two-element array `[grid, rate]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Item {
    pub grid: usize,
    pub rate: usize,
}

impl Item {
    pub const fn new(grid: usize, rate: usize) -> Self {
        Self { grid, rate }
    }
}

impl From<(usize, usize)> for Item {
    fn from((grid, rate): (usize, usize)) -> Self {
        Self { grid, rate }
    }
}

impl From<Item> for (usize, usize) {
    fn from(it: Item) -> Self {
        (it.grid, it.rate)
    }
}

/// Set of grid-rate items, kept sorted by `(grid, rate)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Selection {
    items: BTreeSet<Item>,
}

impl Selection {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, item: Item) -> bool {
        self.items.insert(item)
    }

    pub fn remove(&mut self, item: &Item) -> bool {
        self.items.remove(item)
    }

    pub fn contains(&self, item: &Item) -> bool {
        self.items.contains(item)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Item> + '_ {
        self.items.iter().copied()
    }

    pub fn union(&self, other: &Selection) -> Selection {
        self.items.union(&other.items).copied().collect()
    }

    pub fn is_subset(&self, other: &Selection) -> bool {
        self.items.is_subset(&other.items)
    }

    /// Dense L x M decision matrix.
    pub fn to_matrix(&self, n_grids: usize, n_rates: usize) -> Vec<Vec<bool>> {
        let mut x = vec![vec![false; n_rates]; n_grids];
        for it in self.iter() {
            x[it.grid][it.rate] = true;
        }
        x
    }

    pub fn from_matrix(x: &[Vec<bool>]) -> Selection {
        x.iter()
            .enumerate()
            .flat_map(|(l, row)| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &v)| v)
                    .map(move |(m, _)| Item::new(l, m))
            })
            .collect()
    }
}

impl FromIterator<Item> for Selection {
    fn from_iter<I: IntoIterator<Item = Item>>(iter: I) -> Self {
        Self {
            items: iter.into_iter().collect(),
        }
    }
}

impl<'a> IntoIterator for &'a Selection {
    type Item = &'a Item;
    type IntoIter = std::collections::btree_set::Iter<'a, Item>;

    fn into_iter(self) -> Self::IntoIter {
        self.items.iter()
    }
}

/// Which users already hold which grids.
///
/// Caches the lowest selected rate per grid: with nested decodability a grid
/// sent at rate `k` reaches exactly the users whose best rate is `>= k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageState {
    n_grids: usize,
    covered: Vec<bool>,
    min_rate: Vec<Option<usize>>,
}

impl CoverageState {
    pub fn new(inst: &ProblemInstance) -> Self {
        Self {
            n_grids: inst.n_grids(),
            covered: vec![false; inst.n_users() * inst.n_grids()],
            min_rate: vec![None; inst.n_grids()],
        }
    }

    pub fn from_selection(inst: &ProblemInstance, sel: &Selection) -> Self {
        let mut s = Self::new(inst);
        for it in sel.iter() {
            s.apply_item(inst, it);
        }
        s
    }

    #[inline]
    pub fn is_covered(&self, user: usize, grid: usize) -> bool {
        self.covered[user * self.n_grids + grid]
    }

    pub fn min_rate(&self, grid: usize) -> Option<usize> {
        self.min_rate[grid]
    }

    /// True when `item` cannot add anything: the grid already goes out at
    /// the same or a lower rate.
    #[inline]
    pub fn is_dominated(&self, item: Item) -> bool {
        matches!(self.min_rate[item.grid], Some(k) if k <= item.rate)
    }

    /// Gain of adding `item`, touching only that grid's column.
    pub fn marginal_gain(&self, inst: &ProblemInstance, item: Item) -> f64 {
        if self.is_dominated(item) {
            return 0.0;
        }
        let mut gain = 0.0;
        for n in 0..inst.n_users() {
            if inst.decodes(n, item.rate) && !self.is_covered(n, item.grid) {
                gain += inst.weight(n, item.grid);
            }
        }
        gain
    }

    /// Record `item` as sent. Re-applying an item is a no-op.
    pub fn apply_item(&mut self, inst: &ProblemInstance, item: Item) {
        if self.is_dominated(item) {
            return;
        }
        self.min_rate[item.grid] = Some(item.rate);
        for n in 0..inst.n_users() {
            if inst.decodes(n, item.rate) {
                self.covered[n * self.n_grids + item.grid] = true;
            }
        }
    }

    /// Weighted coverage in canonical order.
    pub fn utility(&self, inst: &ProblemInstance) -> f64 {
        let mut total = 0.0;
        for n in 0..inst.n_users() {
            for l in 0..inst.n_grids() {
                if self.is_covered(n, l) {
                    total += inst.weight(n, l);
                }
            }
        }
        total
    }
}

/// Weighted coverage `F(S)`: each user counts each grid it can decode at
/// least once.
pub fn utility(inst: &ProblemInstance, sel: &Selection) -> f64 {
    CoverageState::from_selection(inst, sel).utility(inst)
}

/// `F(S + e) - F(S)` for the set summarised by `state`.
pub fn marginal_gain(inst: &ProblemInstance, state: &CoverageState, item: Item) -> f64 {
    state.marginal_gain(inst, item)
}

/// Total airtime of a selection.
///
/// Accumulated per rate as `count_m * c_m` so the result does not depend on
/// item order and matches [`evaluate_plan`] on mapped plans.
pub fn selection_cost(inst: &ProblemInstance, sel: &Selection) -> f64 {
    let mut counts = vec![0usize; inst.n_rates()];
    for it in sel.iter() {
        counts[it.rate] += 1;
    }
    counts
        .iter()
        .enumerate()
        .map(|(m, &c)| c as f64 * inst.cost(m))
        .sum()
}

/// Explicit multicast schedule: groups, per-group grid masks, group rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticastPlan {
    pub groups: Vec<Vec<usize>>,
    pub masks: Vec<Vec<bool>>,
    pub rate_bps: Vec<f64>,
}

impl MulticastPlan {
    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    /// Drop groups with no members or no grids.
    pub fn prune_empty(&self) -> MulticastPlan {
        let keep: Vec<usize> = (0..self.n_groups())
            .filter(|&k| !self.groups[k].is_empty() && self.masks[k].iter().any(|&b| b))
            .collect();
        MulticastPlan {
            groups: keep.iter().map(|&k| self.groups[k].clone()).collect(),
            masks: keep.iter().map(|&k| self.masks[k].clone()).collect(),
            rate_bps: keep.iter().map(|&k| self.rate_bps[k]).collect(),
        }
    }

    pub fn validate(&self, inst: &ProblemInstance) -> Result<(), InstanceError> {
        let k = self.groups.len();
        if self.masks.len() != k || self.rate_bps.len() != k {
            return Err(InstanceError::MalformedPlan(format!(
                "{} groups, {} masks, {} rates",
                k,
                self.masks.len(),
                self.rate_bps.len()
            )));
        }
        for g in 0..k {
            if self.masks[g].len() != inst.n_grids() {
                return Err(InstanceError::MalformedPlan(format!(
                    "mask {g} has {} grids, expected {}",
                    self.masks[g].len(),
                    inst.n_grids()
                )));
            }
            if !(self.rate_bps[g].is_finite() && self.rate_bps[g] > 0.0) {
                return Err(InstanceError::MalformedPlan(format!(
                    "group {g} rate must be positive"
                )));
            }
            if let Some(&u) = self.groups[g].iter().find(|&&u| u >= inst.n_users()) {
                return Err(InstanceError::MalformedPlan(format!(
                    "group {g} names unknown user {u}"
                )));
            }
        }
        Ok(())
    }
}

fn rates_match(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs())
}

/// Bottleneck rate of a set of users, `min R_n`, or `None` if any member
/// decodes nothing or the set is empty.
pub fn bottleneck_rate(inst: &ProblemInstance, members: &[usize]) -> Option<f64> {
    let mut rate: Option<f64> = None;
    for &u in members {
        let r = inst.user_rate_bps(u)?;
        rate = Some(rate.map_or(r, |x: f64| x.min(r)));
    }
    rate
}

/// Outcome of checking a plan against the original problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanEvaluation {
    pub utility: f64,
    pub latency_s: f64,
    /// Every nonempty group runs exactly at its weakest member's rate.
    pub rate_consistent: bool,
    pub within_budget: bool,
    pub feasible: bool,
}

/// Objective, latency and feasibility of a plan.
///
/// A user receiving the same grid through several groups counts once.
pub fn evaluate_plan(
    inst: &ProblemInstance,
    plan: &MulticastPlan,
) -> Result<PlanEvaluation, InstanceError> {
    plan.validate(inst)?;
    let (n, l) = (inst.n_users(), inst.n_grids());
    let mut received = vec![false; n * l];
    for (members, mask) in plan.groups.iter().zip(&plan.masks) {
        for &u in members {
            for (g, &on) in mask.iter().enumerate() {
                if on {
                    received[u * l + g] = true;
                }
            }
        }
    }
    let mut utility = 0.0;
    for u in 0..n {
        for g in 0..l {
            if received[u * l + g] {
                utility += inst.weight(u, g);
            }
        }
    }
    // transmissions per distinct rate, slowest first, like selection_cost
    let mut per_rate: Vec<(f64, usize)> = plan
        .masks
        .iter()
        .zip(&plan.rate_bps)
        .map(|(mask, &r)| (r, mask.iter().filter(|&&b| b).count()))
        .collect();
    per_rate.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut latency_s = 0.0;
    let mut k = 0;
    while k < per_rate.len() {
        let r = per_rate[k].0;
        let mut count = 0;
        while k < per_rate.len() && per_rate[k].0 == r {
            count += per_rate[k].1;
            k += 1;
        }
        latency_s += count as f64 * transmission_time(inst.grid_bytes(), r);
    }
    let rate_consistent = plan.groups.iter().zip(&plan.rate_bps).all(|(members, &r)| {
        members.is_empty()
            || matches!(bottleneck_rate(inst, members), Some(b) if rates_match(b, r))
    });
    let within = within_budget(latency_s, inst.budget());
    Ok(PlanEvaluation {
        utility,
        latency_s,
        rate_consistent,
        within_budget: within,
        feasible: within && rate_consistent,
    })
}

/// Canonical mapping of a selection to a plan: one group per rate index,
/// holding every user that decodes it, sending that rate's column of X.
///
/// Group rates follow the bottleneck definition `min R_n` over members;
/// groups nobody can join keep the nominal `B * r_m`. Empty groups are kept
/// so the plan always has `M` groups (see [`MulticastPlan::prune_empty`]).
pub fn plan_from_selection(
    inst: &ProblemInstance,
    sel: &Selection,
) -> Result<MulticastPlan, InstanceError> {
    inst.check_items(sel)?;
    let cost = selection_cost(inst, sel);
    if !within_budget(cost, inst.budget()) {
        return Err(InstanceError::OverBudget {
            cost,
            budget: inst.budget(),
        });
    }
    let m_count = inst.n_rates();
    let mut groups = Vec::with_capacity(m_count);
    let mut masks = vec![vec![false; inst.n_grids()]; m_count];
    let mut rate_bps = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let members: Vec<usize> = (0..inst.n_users()).filter(|&u| inst.decodes(u, m)).collect();
        rate_bps.push(bottleneck_rate(inst, &members).unwrap_or_else(|| inst.rate_bps(m)));
        groups.push(members);
    }
    for it in sel.iter() {
        masks[it.rate][it.grid] = true;
    }
    Ok(MulticastPlan {
        groups,
        masks,
        rate_bps,
    })
}

/// Map a plan to grid-rate items: every grid a group sends becomes an item
/// at the group's rate index. Duplicate pairs collapse.
pub fn selection_from_plan(
    inst: &ProblemInstance,
    plan: &MulticastPlan,
) -> Result<Selection, InstanceError> {
    plan.validate(inst)?;
    let mut sel = Selection::new();
    for (k, ((members, mask), &r)) in plan
        .groups
        .iter()
        .zip(&plan.masks)
        .zip(&plan.rate_bps)
        .enumerate()
    {
        for &u in members {
            match inst.user_rate_bps(u) {
                Some(ru) if ru >= r || rates_match(ru, r) => {}
                _ => {
                    return Err(InstanceError::Undecodable {
                        user: u,
                        group: k,
                        rate_bps: r,
                    })
                }
            }
        }
        if !mask.iter().any(|&b| b) {
            continue;
        }
        let m = (0..inst.n_rates())
            .find(|&m| rates_match(inst.rate_bps(m), r))
            .ok_or_else(|| {
                InstanceError::MalformedPlan(format!("group {k} rate {r} is not an MCS rate"))
            })?;
        for (g, &on) in mask.iter().enumerate() {
            if on {
                sel.insert(Item::new(g, m));
            }
        }
    }
    Ok(sel)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny(moi: Vec<Vec<f64>>, snr: Vec<f64>, budget: f64) -> ProblemInstance {
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
    fn empty_selection_has_zero_utility_and_cost() {
        let inst = tiny(vec![vec![0.5, 0.2]], vec![15.0], 1.0);
        let s = Selection::new();
        assert_eq!(utility(&inst, &s), 0.0);
        assert_eq!(selection_cost(&inst, &s), 0.0);
    }

    #[test]
    fn single_cell_utility() {
        let inst = tiny(vec![vec![0.8]], vec![0.0], 1.0);
        let s: Selection = [Item::new(0, 0)].into_iter().collect();
        assert_eq!(utility(&inst, &s), 0.8);
    }

    #[test]
    fn only_strong_user_decodes_high_rate() {
        // user 0 decodes rates 0 and 1, user 1 only rate 0
        let inst = tiny(vec![vec![1.0], vec![1.0]], vec![12.0, 5.0], 1.0);
        let s: Selection = [Item::new(0, 1)].into_iter().collect();
        assert_eq!(utility(&inst, &s), 1.0);
        let s: Selection = [Item::new(0, 0)].into_iter().collect();
        assert_eq!(utility(&inst, &s), 2.0);
    }

    #[test]
    fn gain_on_empty_state_is_decodable_sum() {
        let inst = tiny(vec![vec![0.3], vec![0.4], vec![0.5]], vec![25.0, 12.0, 1.0], 1.0);
        let st = CoverageState::new(&inst);
        assert_eq!(st.marginal_gain(&inst, Item::new(0, 0)), 0.3 + 0.4 + 0.5);
        assert_eq!(st.marginal_gain(&inst, Item::new(0, 1)), 0.3 + 0.4);
        assert_eq!(st.marginal_gain(&inst, Item::new(0, 2)), 0.3);
    }

    #[test]
    fn saturated_grid_gives_zero() {
        let inst = tiny(vec![vec![0.3], vec![0.4]], vec![25.0, 12.0], 1.0);
        let mut st = CoverageState::new(&inst);
        st.apply_item(&inst, Item::new(0, 1));
        assert_eq!(st.marginal_gain(&inst, Item::new(0, 0)), 0.0);
        assert_eq!(st.marginal_gain(&inst, Item::new(0, 2)), 0.0);
        assert!(st.is_dominated(Item::new(0, 2)));
        assert!(!st.is_dominated(Item::new(0, 0)));
    }

    #[test]
    fn lower_rate_after_higher_covers_superset() {
        let inst = tiny(vec![vec![0.3], vec![0.4]], vec![25.0, 5.0], 1.0);
        let mut st = CoverageState::new(&inst);
        st.apply_item(&inst, Item::new(0, 2));
        assert!(st.is_covered(0, 0) && !st.is_covered(1, 0));
        let before = st.clone();
        st.apply_item(&inst, Item::new(0, 0));
        assert!(st.is_covered(0, 0) && st.is_covered(1, 0));
        // duplicate apply is a no-op
        st.apply_item(&inst, Item::new(0, 0));
        assert_ne!(before, st);
        assert_eq!(st.min_rate(0), Some(0));
    }

    #[test]
    fn item_cost_and_selection_cost() {
        let table = McsTable::default();
        let inst = ProblemInstance::new(InstanceData {
            n_users: 1,
            n_grids: 2,
            mcs_table: table,
            snr_db: vec![40.0],
            moi: vec![vec![1.0, 1.0]],
            grid_bytes: 1600.0,
            bandwidth_hz: 100e6,
            budget_s: 0.03,
        })
        .unwrap();
        let one: Selection = [Item::new(0, 13)].into_iter().collect();
        assert!((selection_cost(&inst, &one) * 1e6 - 24.0).abs() < 0.05);
        let other: Selection = [Item::new(1, 0)].into_iter().collect();
        let both = one.union(&other);
        let sum = selection_cost(&inst, &one) + selection_cost(&inst, &other);
        assert!((selection_cost(&inst, &both) - sum).abs() < 1e-18);
    }

    #[test]
    fn rejects_bad_instances() {
        let good = tiny(vec![vec![0.5]], vec![5.0], 1.0).data().clone();
        let mut d = good.clone();
        d.moi[0][0] = -1.0;
        assert!(matches!(ProblemInstance::new(d), Err(InstanceError::BadWeight { .. })));
        let mut d = good.clone();
        d.snr_db.push(1.0);
        assert!(matches!(ProblemInstance::new(d), Err(InstanceError::SnrLength { .. })));
        let mut d = good.clone();
        d.budget_s = -1.0;
        assert_eq!(ProblemInstance::new(d), Err(InstanceError::BadBudget));
        let mut d = good;
        d.bandwidth_hz = 0.0;
        assert_eq!(ProblemInstance::new(d), Err(InstanceError::BadBandwidth));
    }

    #[test]
    fn json_omits_derived_fields() {
        let inst = tiny(vec![vec![0.5, 0.25]], vec![5.0], 1.0);
        let v: serde_json::Value = serde_json::to_value(&inst).unwrap();
        let keys: BTreeSet<_> = v.as_object().unwrap().keys().cloned().collect();
        let expected: BTreeSet<String> = [
            "n_users",
            "n_grids",
            "mcs_table",
            "snr_db",
            "moi",
            "grid_bytes",
            "bandwidth_hz",
            "budget_s",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        assert_eq!(keys, expected);
        let back: ProblemInstance = serde_json::from_value(v).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn selection_json_is_pair_list() {
        let s: Selection = [Item::new(3, 1), Item::new(0, 2)].into_iter().collect();
        assert_eq!(serde_json::to_string(&s).unwrap(), "[[0,2],[3,1]]");
    }

    #[test]
    fn matrix_roundtrip() {
        let s: Selection = [Item::new(1, 0), Item::new(1, 2), Item::new(2, 1)]
            .into_iter()
            .collect();
        let x = s.to_matrix(3, 3);
        assert!(x[1][0] && x[1][2] && x[2][1] && !x[0][0]);
        assert_eq!(Selection::from_matrix(&x), s);
    }

    #[test]
    fn plan_from_empty_selection() {
        let inst = tiny(vec![vec![0.5, 0.5]], vec![25.0], 1.0);
        let plan = plan_from_selection(&inst, &Selection::new()).unwrap();
        assert_eq!(plan.n_groups(), 3);
        let ev = evaluate_plan(&inst, &plan).unwrap();
        assert_eq!((ev.utility, ev.latency_s), (0.0, 0.0));
        assert!(ev.feasible);
        assert_eq!(plan.prune_empty().n_groups(), 0);
    }

    #[test]
    fn plan_from_single_item() {
        let inst = tiny(
            vec![vec![0.5, 0.1], vec![0.2, 0.3], vec![0.9, 0.9]],
            vec![25.0, 12.0, 3.0],
            1.0,
        );
        let s: Selection = [Item::new(1, 1)].into_iter().collect();
        let plan = plan_from_selection(&inst, &s).unwrap();
        let pruned = plan.prune_empty();
        assert_eq!(pruned.groups, vec![vec![0, 1]]);
        assert_eq!(pruned.masks, vec![vec![false, true]]);
        assert_eq!(pruned.rate_bps, vec![inst.rate_bps(1)]);
        let ev = evaluate_plan(&inst, &plan).unwrap();
        assert_eq!(ev.utility, utility(&inst, &s));
        assert_eq!(ev.latency_s, selection_cost(&inst, &s));
        assert!(ev.feasible);
    }

    #[test]
    fn over_budget_selection_rejected() {
        let inst = tiny(vec![vec![0.5, 0.5]], vec![25.0], 0.001);
        let s: Selection = [Item::new(0, 0), Item::new(1, 0)].into_iter().collect();
        assert!(matches!(
            plan_from_selection(&inst, &s),
            Err(InstanceError::OverBudget { .. })
        ));
    }

    #[test]
    fn evaluate_counts_grid_once_across_groups() {
        let inst = tiny(vec![vec![0.5, 0.25]], vec![25.0], 1.0);
        let r = inst.user_rate_bps(0).unwrap();
        let plan = MulticastPlan {
            groups: vec![vec![0], vec![0]],
            masks: vec![vec![true, false], vec![true, true]],
            rate_bps: vec![r, r],
        };
        let ev = evaluate_plan(&inst, &plan).unwrap();
        assert_eq!(ev.utility, 0.75);
        assert!(ev.feasible);
        let sel = selection_from_plan(&inst, &plan).unwrap();
        assert_eq!(sel.len(), 2);
        assert!(selection_cost(&inst, &sel) <= ev.latency_s);
    }

    #[test]
    fn evaluate_flags_budget_and_rate() {
        let inst = tiny(vec![vec![0.5, 0.25], vec![0.1, 0.1]], vec![25.0, 5.0], 0.009);
        let slow = inst.rate_bps(0);
        let plan = MulticastPlan {
            groups: vec![vec![0, 1]],
            masks: vec![vec![true, false]],
            rate_bps: vec![slow],
        };
        let ev = evaluate_plan(&inst, &plan).unwrap();
        assert!(ev.feasible);
        let heavy = MulticastPlan {
            masks: vec![vec![true, true]],
            ..plan.clone()
        };
        let ev = evaluate_plan(&inst, &heavy).unwrap();
        assert!(!ev.within_budget && !ev.feasible);
        let wrong_rate = MulticastPlan {
            groups: vec![vec![0]],
            ..plan.clone()
        };
        let ev = evaluate_plan(&inst, &wrong_rate).unwrap();
        assert!(!ev.rate_consistent && !ev.feasible);
    }

    #[test]
    fn selection_from_plan_rejects_undecodable_member() {
        let inst = tiny(vec![vec![0.5], vec![0.5]], vec![25.0, 5.0], 1.0);
        let plan = MulticastPlan {
            groups: vec![vec![0, 1]],
            masks: vec![vec![true]],
            rate_bps: vec![inst.rate_bps(2)],
        };
        assert!(matches!(
            selection_from_plan(&inst, &plan),
            Err(InstanceError::Undecodable { user: 1, .. })
        ));
    }

    #[test]
    fn broadcast_plan_maps_to_bottleneck_items() {
        let inst = tiny(
            vec![vec![0.5, 0.1, 0.0], vec![0.2, 0.3, 0.4]],
            vec![25.0, 12.0],
            1.0,
        );
        let plan = MulticastPlan {
            groups: vec![vec![0, 1]],
            masks: vec![vec![true, false, true]],
            rate_bps: vec![inst.rate_bps(1)],
        };
        let sel = selection_from_plan(&inst, &plan).unwrap();
        let expected: Selection = [Item::new(0, 1), Item::new(2, 1)].into_iter().collect();
        assert_eq!(sel, expected);
        let ev = evaluate_plan(&inst, &plan).unwrap();
        assert_eq!(utility(&inst, &sel), ev.utility);
        let back = plan_from_selection(&inst, &sel).unwrap();
        assert_eq!(evaluate_plan(&inst, &back).unwrap().utility, ev.utility);
    }

    #[test]
    fn malformed_plan_rejected() {
        let inst = tiny(vec![vec![0.5]], vec![25.0], 1.0);
        let plan = MulticastPlan {
            groups: vec![vec![0]],
            masks: vec![],
            rate_bps: vec![1e6],
        };
        assert!(evaluate_plan(&inst, &plan).is_err());
        let plan = MulticastPlan {
            groups: vec![vec![5]],
            masks: vec![vec![true]],
            rate_bps: vec![1e6],
        };
        assert!(evaluate_plan(&inst, &plan).is_err());
    }
}
