//! Robust estimation in the Huber model: choose which measurements to trust
//! (binary selection with a cardinality budget) jointly with the state.
//!
//! The search is a depth-first branch-and-bound over selection binaries.
//! Every mask is scored by the same deterministic multistart least-squares
//! solve, so the enumeration oracle and the tree search agree on what a
//! mask costs.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{
    best_of, estimate_wls, multistart_inits, objective_cost, EstimateResult, EstimationProblem,
    WlsOptions,
};
use crate::measurement::StateVector;

/// How the budget d constrains the selection weight 2‖β‖₁ + Σ‖γ‖₁.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetMode {
    #[default]
    Exact,
    AtLeast,
}

/// Which entries share one selection binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// One binary per measurement entry.
    #[default]
    PerEntry,
    /// One binary per bus: all entries located at a bus (branch quantities
    /// at their metered end) are kept or dropped together.
    PerBus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustOptions {
    pub inner_starts: usize,
    pub seed: u64,
    pub wls: WlsOptions,
    pub budget_mode: BudgetMode,
    pub grouping: Grouping,
    pub node_limit: usize,
    pub time_limit: Option<Duration>,
    /// Relative optimality gap at which the search stops.
    pub gap: f64,
    /// Maximum concentration steps per node.
    pub c_steps: usize,
}

impl Default for RobustOptions {
    fn default() -> Self {
        Self {
            inner_starts: 4,
            seed: 0,
            wls: WlsOptions::default(),
            budget_mode: BudgetMode::Exact,
            grouping: Grouping::PerEntry,
            node_limit: 200,
            time_limit: None,
            gap: 1e-6,
            c_steps: 10,
        }
    }
}

/// The β (PMU) and γ (SCADA) selection variables, stored per entry in
/// measurement order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct SelectionMask {
    pub selected: Vec<bool>,
    pub budget: usize,
}

impl SelectionMask {
    /// 2·Σβ + Σγ for the given problem.
    pub fn weight(&self, prob: &EstimationProblem) -> usize {
        self.selected
            .iter()
            .zip(&prob.ms.entries)
            .filter(|(s, _)| **s)
            .map(|(_, m)| entry_weight(m.kind.is_pmu()))
            .sum()
    }

    pub fn beta(&self, prob: &EstimationProblem) -> Vec<bool> {
        self.split(prob, true)
    }

    pub fn gamma(&self, prob: &EstimationProblem) -> Vec<bool> {
        self.split(prob, false)
    }

    fn split(&self, prob: &EstimationProblem, pmu: bool) -> Vec<bool> {
        self.selected
            .iter()
            .zip(&prob.ms.entries)
            .filter(|(_, m)| m.kind.is_pmu() == pmu)
            .map(|(s, _)| *s)
            .collect()
    }

    pub fn as_weights(&self) -> Vec<f64> {
        self.selected.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RobustResult {
    pub state: StateVector,
    pub mask: SelectionMask,
    pub cost: f64,
    pub nodes_explored: usize,
    pub lower_bound: f64,
    /// (cost − lower_bound) / max(cost, 1); 0 when the search completed.
    pub bound_gap: f64,
    pub completed: bool,
    pub wall_time: f64,
}

fn entry_weight(pmu: bool) -> usize {
    if pmu {
        2
    } else {
        1
    }
}

/// Selection binaries: member entries and weight of each.
struct Groups {
    members: Vec<Vec<usize>>,
    weight: Vec<usize>,
}

impl Groups {
    fn new(prob: &EstimationProblem, grouping: Grouping) -> Self {
        let entries = &prob.ms.entries;
        let members: Vec<Vec<usize>> = match grouping {
            Grouping::PerEntry => (0..entries.len()).map(|j| vec![j]).collect(),
            Grouping::PerBus => {
                let mut by_bus: Vec<Vec<usize>> = vec![Vec::new(); prob.n_buses()];
                for (j, m) in entries.iter().enumerate() {
                    let bus = if m.kind.on_branch() {
                        let br = &prob.model.net.branches[m.target];
                        match m.kind {
                            crate::MeasurementKind::PTo
                            | crate::MeasurementKind::QTo
                            | crate::MeasurementKind::ITo => br.to_bus,
                            _ => br.from_bus,
                        }
                    } else {
                        m.target
                    };
                    by_bus[bus].push(j);
                }
                by_bus.into_iter().filter(|g| !g.is_empty()).collect()
            }
        };
        let weight = members
            .iter()
            .map(|g| g.iter().map(|&j| entry_weight(entries[j].kind.is_pmu())).sum())
            .collect();
        Self { members, weight }
    }

    fn len(&self) -> usize {
        self.members.len()
    }

    fn total(&self) -> usize {
        self.weight.iter().sum()
    }

    fn to_entries(&self, on: &[bool], n_entries: usize) -> Vec<bool> {
        let mut sel = vec![false; n_entries];
        for (g, &o) in on.iter().enumerate() {
            if o {
                for &j in &self.members[g] {
                    sel[j] = true;
                }
            }
        }
        sel
    }
}

fn feasible(weight: usize, d: usize, mode: BudgetMode) -> bool {
    match mode {
        BudgetMode::Exact => weight == d,
        BudgetMode::AtLeast => weight >= d,
    }
}

fn tie_tol(best: f64) -> f64 {
    1e-9 * best.abs().max(1.0)
}

/// Picks min cost; among costs within the tie tolerance, the
/// lexicographically smallest mask (false < true).
fn pick_winner<'a, I>(candidates: I) -> Option<(&'a Vec<bool>, &'a (f64, StateVector))>
where
    I: Iterator<Item = (&'a Vec<bool>, &'a (f64, StateVector))> + Clone,
{
    let min = candidates.clone().map(|(_, (c, _))| *c).fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    candidates
        .filter(|(_, (c, _))| *c <= min + tie_tol(min))
        .min_by(|a, b| a.0.cmp(b.0))
}

/// Scores masks by a fixed multistart solve and caches the results.
struct Scorer<'a> {
    prob: &'a EstimationProblem,
    inits: Vec<StateVector>,
    wls: WlsOptions,
    cache: HashMap<Vec<bool>, (f64, StateVector)>,
}

impl<'a> Scorer<'a> {
    fn new(prob: &'a EstimationProblem, opts: &RobustOptions) -> Self {
        let inits = multistart_inits(prob.n_buses(), prob.reference(), opts.inner_starts.max(1), opts.seed);
        Self { prob, inits, wls: opts.wls, cache: HashMap::new() }
    }

    fn score(&mut self, sel: &[bool]) -> Result<(f64, StateVector)> {
        if let Some(hit) = self.cache.get(sel) {
            return Ok(hit.clone());
        }
        let out = if sel.iter().any(|s| *s) {
            let p = self.prob.with_selection(sel.iter().map(|&s| f64::from(u8::from(s))).collect())?;
            let r = best_of(&p, &self.inits, &self.wls)?;
            (r.cost, r.state)
        } else {
            (0.0, StateVector::flat(self.prob.n_buses()))
        };
        self.cache.insert(sel.to_vec(), out.clone());
        Ok(out)
    }

    /// min over every state seen so far of the cost restricted to `sel`.
    /// The minimizer for `sel` itself is among them, so this never exceeds
    /// its score; including the other states guards against a multistart
    /// that missed the global minimum of the subset.
    fn subset_bound(&mut self, sel: &[bool]) -> Result<f64> {
        let own = self.score(sel)?.0;
        let weights: Vec<f64> = sel.iter().map(|&s| f64::from(u8::from(s))).collect();
        let p = self.prob.with_selection(weights)?;
        let seen = self.cache.values().map(|(_, v)| objective_cost(v, &p)).fold(f64::INFINITY, f64::min);
        Ok(own.min(seen))
    }
}

#[derive(Clone)]
struct Node {
    /// Per group: Some(true) fixed in, Some(false) fixed out, None free.
    fixed: Vec<Option<bool>>,
    /// State used to rank free binaries.
    hint: StateVector,
}

struct Search<'a, 'b> {
    prob: &'a EstimationProblem,
    groups: Groups,
    d: usize,
    opts: &'b RobustOptions,
    scorer: Scorer<'a>,
    leaves: HashMap<Vec<bool>, (f64, StateVector)>,
    best: f64,
}

impl Search<'_, '_> {
    fn n_entries(&self) -> usize {
        self.prob.ms.len()
    }

    fn leaf(&mut self, on: &[bool]) -> Result<()> {
        let sel = self.groups.to_entries(on, self.n_entries());
        if self.leaves.contains_key(&sel) {
            return Ok(());
        }
        let scored = self.scorer.score(&sel)?;
        self.best = self.best.min(scored.0);
        self.leaves.insert(sel, scored);
        Ok(())
    }

    /// Per-group penalty at `v`: the sum of the member terms.
    fn group_terms(&self, v: &StateVector) -> Vec<f64> {
        let t = self.prob.term_values(v);
        self.groups.members.iter().map(|g| g.iter().map(|&j| t[j]).sum()).collect()
    }

    /// Fills the budget greedily with the free groups of smallest penalty
    /// per unit weight. Returns the completion and the fractional group, if
    /// the fill could not be made exactly.
    fn complete(&self, fixed: &[Option<bool>], terms: &[f64]) -> (Option<Vec<bool>>, Option<usize>) {
        let mut on: Vec<bool> = fixed.iter().map(|f| *f == Some(true)).collect();
        let mut weight: usize = on.iter().zip(&self.groups.weight).filter(|(o, _)| **o).map(|(_, w)| w).sum();
        let mut free: Vec<usize> = (0..fixed.len()).filter(|&g| fixed[g].is_none()).collect();
        free.sort_by(|&a, &b| {
            let ra = terms[a] / self.groups.weight[a] as f64;
            let rb = terms[b] / self.groups.weight[b] as f64;
            ra.total_cmp(&rb).then(a.cmp(&b))
        });
        let mut fractional = None;
        for &g in &free {
            let w = self.groups.weight[g];
            if weight >= self.d {
                if self.opts.budget_mode == BudgetMode::AtLeast && terms[g] == 0.0 {
                    on[g] = true;
                }
                continue;
            }
            if weight + w <= self.d {
                on[g] = true;
                weight += w;
            } else if fractional.is_none() {
                fractional = Some(g);
            }
        }
        let ok = feasible(weight, self.d, self.opts.budget_mode);
        (ok.then_some(on), fractional)
    }

    /// Concentration steps: fit the completion, re-rank by the new
    /// residuals, refit, until the completion repeats.
    fn c_steps(&mut self, fixed: &[Option<bool>], start: &StateVector) -> Result<(StateVector, Option<usize>)> {
        let mut v = start.clone();
        let mut last: Option<Vec<bool>> = None;
        let mut fractional = None;
        for _ in 0..self.opts.c_steps.max(1) {
            let terms = self.group_terms(&v);
            let (completion, frac) = self.complete(fixed, &terms);
            fractional = frac;
            let Some(on) = completion else { break };
            if last.as_ref() == Some(&on) {
                break;
            }
            self.leaf(&on)?;
            let sel = self.groups.to_entries(&on, self.n_entries());
            v = self.leaves[&sel].1.clone();
            last = Some(on);
        }
        Ok((v, fractional))
    }

    fn weight_where(&self, fixed: &[Option<bool>], pred: impl Fn(Option<bool>) -> bool) -> usize {
        fixed.iter().zip(&self.groups.weight).filter(|(f, _)| pred(**f)).map(|(_, w)| w).sum()
    }
}

fn check_budget(prob: &EstimationProblem, groups: &Groups, d: usize) -> Result<()> {
    let total = groups.total();
    if d == 0 || d > total {
        return Err(Error::InfeasibleBudget { d, total });
    }
    let n = prob.n_buses();
    if d <= 2 * n - 1 {
        log::warn!("budget d = {d} leaves at most {d} real measurements for {} unknowns", 2 * n - 1);
    }
    Ok(())
}

/// Branch-and-bound over the selection binaries.
///
/// Each node carries the bound "cost of the fixed-in measurements alone",
/// which no completion can undercut because every term is non-negative.
/// Incumbents come from concentration steps at every node. The search
/// stops at the node or time limit and then reports the remaining gap.
pub fn solve_robust(prob: &EstimationProblem, d: usize, opts: &RobustOptions) -> Result<RobustResult> {
    let start = Instant::now();
    let groups = Groups::new(prob, opts.grouping);
    check_budget(prob, &groups, d)?;
    let g = groups.len();
    let mut s = Search {
        prob,
        groups,
        d,
        opts,
        scorer: Scorer::new(prob, opts),
        leaves: HashMap::new(),
        best: f64::INFINITY,
    };

    let all = s.groups.to_entries(&vec![true; g], prob.ms.len());
    let root_hint = s.scorer.score(&all)?.1;
    let mut stack = vec![Node { fixed: vec![None; g], hint: root_hint }];
    let mut nodes = 0;
    let mut open_bound = f64::INFINITY;
    let mut completed = true;

    while let Some(node) = stack.pop() {
        let over_time = opts.time_limit.is_some_and(|t| start.elapsed() >= t);
        if nodes >= opts.node_limit || over_time {
            completed = false;
            // Remaining open nodes bound the unexplored region.
            for n in std::iter::once(&node).chain(stack.iter()) {
                let sel = s.groups.to_entries(&n.fixed.iter().map(|f| *f == Some(true)).collect::<Vec<_>>(), prob.ms.len());
                open_bound = open_bound.min(s.scorer.subset_bound(&sel)?);
            }
            break;
        }
        nodes += 1;

        let w_in = s.weight_where(&node.fixed, |f| f == Some(true));
        let w_max = s.weight_where(&node.fixed, |f| f != Some(false));
        let infeasible = match opts.budget_mode {
            BudgetMode::Exact => w_in > d || w_max < d,
            BudgetMode::AtLeast => w_max < d,
        };
        if infeasible {
            continue;
        }
        let in_sel: Vec<bool> = node.fixed.iter().map(|f| *f == Some(true)).collect();
        let lb = s.scorer.subset_bound(&s.groups.to_entries(&in_sel, prob.ms.len()))?;
        if lb > s.best + tie_tol(s.best) {
            continue;
        }

        let free: Vec<usize> = (0..g).filter(|&i| node.fixed[i].is_none()).collect();
        if free.is_empty() {
            s.leaf(&in_sel)?;
            continue;
        }
        if opts.budget_mode == BudgetMode::Exact && w_in == d {
            s.leaf(&in_sel)?;
            continue;
        }
        if w_max == d {
            let on: Vec<bool> = node.fixed.iter().map(|f| *f != Some(false)).collect();
            s.leaf(&on)?;
            continue;
        }

        let (hint, fractional) = s.c_steps(&node.fixed, &node.hint)?;
        let branch = fractional.unwrap_or_else(|| {
            let terms = s.group_terms(&hint);
            *free
                .iter()
                .max_by(|&&a, &&b| terms[a].total_cmp(&terms[b]).then(b.cmp(&a)))
                .expect("free is non-empty")
        });
        let mut child_in = node.fixed.clone();
        child_in[branch] = Some(true);
        let mut child_out = node.fixed;
        child_out[branch] = Some(false);
        // Depth-first, dropping the suspect binary first.
        stack.push(Node { fixed: child_in, hint: hint.clone() });
        stack.push(Node { fixed: child_out, hint });
    }

    let (sel, (cost, state)) = pick_winner(s.leaves.iter()).ok_or(Error::AllStartsFailed(opts.inner_starts))?;
    let (sel, cost, state) = (sel.clone(), *cost, state.clone());
    let lower_bound = if completed { cost } else { open_bound.min(cost) };
    let bound_gap = if completed { 0.0 } else { (cost - lower_bound).max(0.0) / cost.abs().max(1.0) };
    Ok(RobustResult {
        state,
        mask: SelectionMask { selected: sel, budget: d },
        cost,
        nodes_explored: nodes,
        lower_bound,
        bound_gap,
        completed: completed || bound_gap <= opts.gap,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Largest number of selection binaries the oracle will enumerate.
pub const ORACLE_LIMIT: usize = 20;

/// Scores every feasible mask. Exact reference for [`solve_robust`] under
/// the same inner solve.
pub fn enumerate_oracle(prob: &EstimationProblem, d: usize, opts: &RobustOptions) -> Result<RobustResult> {
    let start = Instant::now();
    let groups = Groups::new(prob, opts.grouping);
    if groups.len() > ORACLE_LIMIT {
        return Err(Error::TooManyBinaries { count: groups.len(), limit: ORACLE_LIMIT });
    }
    check_budget(prob, &groups, d)?;
    let mut scorer = Scorer::new(prob, opts);
    let mut scored: HashMap<Vec<bool>, (f64, StateVector)> = HashMap::new();
    let g = groups.len();
    for bits in 0u32..(1u32 << g) {
        let on: Vec<bool> = (0..g).map(|i| bits & (1 << i) != 0).collect();
        let w: usize = on.iter().zip(&groups.weight).filter(|(o, _)| **o).map(|(_, w)| w).sum();
        if !feasible(w, d, opts.budget_mode) {
            continue;
        }
        let sel = groups.to_entries(&on, prob.ms.len());
        let r = scorer.score(&sel)?;
        scored.insert(sel, r);
    }
    let n_masks = scored.len();
    let (sel, (cost, state)) = pick_winner(scored.iter()).ok_or(Error::AllStartsFailed(opts.inner_starts))?;
    Ok(RobustResult {
        state: state.clone(),
        mask: SelectionMask { selected: sel.clone(), budget: d },
        cost: *cost,
        nodes_explored: n_masks,
        lower_bound: *cost,
        bound_gap: 0.0,
        completed: true,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LassoResult {
    pub estimate: EstimateResult,
    /// Selection per entry after the last threshold step (0 or 1).
    pub selection: Vec<f64>,
    /// Σ s_j t_j + r Σ w_j (1 − s_j).
    pub objective: f64,
    pub rounds: usize,
}

/// The drop penalty r·w_j(1 − s_j) for each discarded entry, minimized by
/// alternating a least-squares state step with the closed-form selection
/// step s_j = 0 if t_j > r·w_j else 1 (ties keep the entry).
pub fn solve_lasso(prob: &EstimationProblem, r: f64, opts: &RobustOptions) -> Result<LassoResult> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(format!("lasso weight r must be positive, got {r}")));
    }
    let w: Vec<f64> = prob.ms.entries.iter().map(|m| entry_weight(m.kind.is_pmu()) as f64).collect();
    let inits = multistart_inits(prob.n_buses(), prob.reference(), opts.inner_starts.max(1), opts.seed);
    let mut selection = vec![1.0; prob.ms.len()];
    let mut est = best_of(prob, &inits, &opts.wls)?;
    let mut rounds = 0;
    let objective = |est: &EstimateResult, sel: &[f64]| -> f64 {
        let t = prob.term_values(&est.state);
        t.iter().zip(sel).zip(&w).map(|((t, s), w)| s * t + r * w * (1.0 - s)).sum()
    };
    loop {
        rounds += 1;
        let t = prob.term_values(&est.state);
        let next: Vec<f64> = t.iter().zip(&w).map(|(t, w)| if *t > r * w { 0.0 } else { 1.0 }).collect();
        if next == selection || rounds > 50 {
            break;
        }
        let p = prob.with_selection(next.clone())?;
        let refit = estimate_wls(&p, &est.state, &opts.wls)?;
        if objective(&refit, &next) > objective(&est, &selection) {
            break;
        }
        selection = next;
        est = refit;
    }
    let p = prob.with_selection(selection.clone())?;
    est.cost = objective_cost(&est.state, &p);
    let obj = objective(&est, &selection);
    Ok(LassoResult { estimate: est, selection, objective: obj, rounds })
}
