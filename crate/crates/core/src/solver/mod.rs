//! Exact top-N identification by branch and bound over material
//! assignments, with masked-residual lower bounds and an exhaustive
//! reference solver.

mod eval;

use std::cmp::Ordering as CmpOrdering;
use std::collections::BinaryHeap;
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{fit_gain_scatter, loss, Assignment, FitResult, Radiograph};
use crate::geometry::PathLengthSet;
use crate::materials::{MaterialTable, SpectrumResponse};

pub(crate) use eval::Evaluator;

/// Default cap on `M^K` for [`solve_exhaustive`].
pub const DEFAULT_EXHAUSTIVE_BUDGET: u64 = 10_000_000;

/// Relative slack on the pruning threshold. Pruning requires the bound to
/// exceed `J*` by more than accumulated rounding, so near-ties are explored.
const PRUNE_RTOL: f64 = 1e-12;

/// Order in which the search frontier is expanded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchOrdering {
    /// Depth first; siblings visited from lowest bound to highest.
    #[default]
    SortedDepthFirst,
    /// Depth first; siblings visited in material order.
    DepthFirst,
    /// Global priority queue on bound.
    BestFirst,
}

/// Which unassigned object is branched on next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BranchOrder {
    /// Scene order.
    #[default]
    Scene,
    /// Largest projected support first. Changes node counts, never results.
    SupportArea,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Size of the returned list.
    pub top_n: usize,
    /// Scatter polynomial order.
    pub order: usize,
    /// Restricted alphabet solved first to seed the top list.
    pub warm_start_materials: Option<Vec<String>>,
    pub ordering: SearchOrdering,
    /// Maximum concurrent sibling evaluations; 1 is sequential.
    pub parallel_width: usize,
    pub branch_order: BranchOrder,
    /// Stop after this many bound plus full evaluations and report the
    /// best-so-far list as incomplete.
    pub node_limit: Option<u64>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            top_n: 20,
            order: 2,
            warm_start_materials: None,
            ordering: SearchOrdering::default(),
            parallel_width: 1,
            branch_order: BranchOrder::default(),
            node_limit: None,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self, table: &MaterialTable) -> Result<()> {
        if self.top_n == 0 {
            return Err(Error::invalid("top-N size must be at least 1"));
        }
        if self.parallel_width == 0 {
            return Err(Error::invalid("parallel width must be at least 1"));
        }
        if let Some(w) = &self.warm_start_materials {
            if w.is_empty() {
                return Err(Error::invalid("warm-start alphabet is empty"));
            }
            table.indices_of(w)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub full_evaluations: u64,
    pub bound_evaluations: u64,
    pub pruned_subtrees: u64,
    pub wall_time_s: f64,
}

impl SearchStats {
    fn add(&mut self, other: &SearchStats) {
        self.full_evaluations += other.full_evaluations;
        self.bound_evaluations += other.bound_evaluations;
        self.pruned_subtrees += other.pruned_subtrees;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAssignment {
    pub assignment: Assignment,
    pub fit: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    /// Ascending by sse, ties broken lexicographically on material indices.
    pub ranked: Vec<RankedAssignment>,
    /// Counts for the main search (after any warm start).
    pub stats: SearchStats,
    /// Counts for the restricted-alphabet warm start, if any.
    pub warm_start_stats: Option<SearchStats>,
    /// False when a node limit stopped the search early.
    pub complete: bool,
}

impl SolveResult {
    /// Main search plus warm start.
    pub fn total_stats(&self) -> SearchStats {
        let mut s = self.stats.clone();
        if let Some(w) = &self.warm_start_stats {
            s.add(w);
            s.wall_time_s += w.wall_time_s;
        }
        s
    }

    /// 1-based rank of `x`, if listed.
    pub fn rank_of(&self, x: &Assignment) -> Option<usize> {
        self.ranked.iter().position(|r| &r.assignment == x).map(|i| i + 1)
    }
}

/// Everything fixed for one identification problem.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub radiograph: &'a Radiograph,
    pub paths: &'a PathLengthSet,
    pub table: &'a MaterialTable,
    pub q: &'a SpectrumResponse,
}

/// Children of `x` obtained by assigning each material of `omega` to the
/// first unassigned object.
pub fn branch(x: &Assignment, omega: &[usize]) -> Result<Vec<Assignment>> {
    let n = x
        .first_unassigned()
        .ok_or_else(|| Error::invalid("cannot branch a full assignment"))?;
    Ok(branch_at(x, n, omega))
}

fn branch_at(x: &Assignment, n: usize, omega: &[usize]) -> Vec<Assignment> {
    omega
        .iter()
        .map(|&m| {
            let mut c = x.clone();
            c.set(n, Some(m));
            c
        })
        .collect()
}

/// Pixels whose present objects are all assigned in `x`.
pub fn mask_for(x: &Assignment, paths: &PathLengthSet) -> Result<Array2<bool>> {
    if x.len() != paths.len() {
        return Err(Error::invalid(format!(
            "assignment has {} entries for {} objects",
            x.len(),
            paths.len()
        )));
    }
    let mut mask = Array2::from_elem(paths.dim(), true);
    for (n, e) in x.entries().iter().enumerate() {
        if e.is_none() {
            mask.zip_mut_with(paths.get(n), |m, &l| *m &= l <= 0.0);
        }
    }
    Ok(mask)
}

/// Masked lower bound on `J` over all full descendants of `x`, computed by a
/// direct fit on the masked pixels with `filler` in every unassigned slot.
/// Returns 0 when the mask leaves too few pixels to constrain the fit.
pub fn bound_with_filler(x: &Assignment, problem: &Problem, order: usize, filler: usize) -> Result<f64> {
    let mask = mask_for(x, problem.paths)?;
    let y0 = x.filled_with(filler);
    let d = crate::forward::direct(&y0, problem.paths, problem.table, problem.q)?;
    match fit_gain_scatter(problem.radiograph, &d, order, Some(&mask)) {
        Ok(fit) => Ok(fit.sse),
        Err(Error::RankDeficient(_)) => Ok(0.0),
        Err(e) => Err(e),
    }
}

/// [`bound_with_filler`] with the first material as filler.
pub fn bound(x: &Assignment, problem: &Problem, order: usize) -> Result<f64> {
    bound_with_filler(x, problem, order, 0)
}

/// Ordered top-N list keyed on `(J, assignment)`.
struct TopList {
    n: usize,
    items: Vec<(f64, Assignment)>,
}

fn key_cmp(a: &(f64, Assignment), b: &(f64, Assignment)) -> CmpOrdering {
    a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1))
}

impl TopList {
    fn new(n: usize) -> Self {
        Self { n, items: Vec::with_capacity(n + 1) }
    }

    /// Threshold `J*`: infinite until the list is full.
    fn threshold(&self) -> f64 {
        if self.items.len() < self.n {
            f64::INFINITY
        } else {
            self.items.last().map_or(f64::INFINITY, |w| w.0)
        }
    }

    fn offer(&mut self, j: f64, x: &Assignment) {
        let item = (j, x.clone());
        if self.items.len() == self.n && key_cmp(&item, self.items.last().expect("nonempty")) != CmpOrdering::Less {
            return;
        }
        match self.items.binary_search_by(|probe| key_cmp(probe, &item)) {
            Ok(_) => {}
            Err(pos) => {
                self.items.insert(pos, item);
                self.items.truncate(self.n);
            }
        }
    }
}

/// Frontier node with its bound (or loss, when full).
#[derive(Debug, Clone)]
struct Node {
    value: f64,
    x: Assignment,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == CmpOrdering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<CmpOrdering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // reversed so BinaryHeap pops the smallest (value, x)
    fn cmp(&self, other: &Self) -> CmpOrdering {
        other.value.total_cmp(&self.value).then_with(|| other.x.cmp(&self.x))
    }
}

enum Frontier {
    Stack(Vec<Node>),
    Heap(BinaryHeap<Node>),
}

impl Frontier {
    fn pop(&mut self) -> Option<Node> {
        match self {
            Frontier::Stack(s) => s.pop(),
            Frontier::Heap(h) => h.pop(),
        }
    }
}

struct Search<'e, 'a> {
    eval: &'e Evaluator<'a>,
    omega: Vec<usize>,
    filler: usize,
    branch_positions: Vec<usize>,
    config: &'e SearchConfig,
    pool: Option<rayon::ThreadPool>,
    slack: f64,
}

impl Search<'_, '_> {
    fn next_position(&self, x: &Assignment) -> Option<usize> {
        self.branch_positions.iter().copied().find(|&n| x.get(n).is_none())
    }

    fn evaluate(&self, x: &Assignment) -> f64 {
        if x.is_full() {
            self.eval.loss(x)
        } else {
            self.eval.bound(x, self.filler)
        }
    }

    fn evaluate_all(&self, children: Vec<Assignment>) -> Vec<Node> {
        let run = || -> Vec<Node> {
            children
                .par_iter()
                .map(|x| Node { value: self.evaluate(x), x: x.clone() })
                .collect()
        };
        match &self.pool {
            Some(pool) => pool.install(run),
            None => children.into_iter().map(|x| Node { value: self.evaluate(&x), x }).collect(),
        }
    }

    fn prunes(&self, value: f64, threshold: f64) -> bool {
        value > threshold + PRUNE_RTOL * threshold + self.slack
    }

    /// Runs the search; returns `complete`.
    fn run(&self, top: &mut TopList, stats: &mut SearchStats, mut pruned: Option<&mut Vec<Assignment>>) -> bool {
        let k = self.eval.n_objects();
        let root = Node { value: 0.0, x: Assignment::unassigned(k) };
        let mut frontier = match self.config.ordering {
            SearchOrdering::BestFirst => Frontier::Heap(BinaryHeap::from(vec![root])),
            _ => Frontier::Stack(vec![root]),
        };
        let limit = self.config.node_limit.unwrap_or(u64::MAX);
        while let Some(node) = frontier.pop() {
            let threshold = top.threshold();
            if node.x.is_full() {
                if node.value <= threshold {
                    top.offer(node.value, &node.x);
                }
                continue;
            }
            if self.prunes(node.value, threshold) {
                stats.pruned_subtrees += 1;
                if let Some(log) = pruned.as_deref_mut() {
                    log.push(node.x);
                }
                continue;
            }
            if stats.full_evaluations + stats.bound_evaluations >= limit {
                return false;
            }
            let pos = self.next_position(&node.x).expect("partial node has an unassigned entry");
            let children = branch_at(&node.x, pos, &self.omega);
            let mut nodes = self.evaluate_all(children);
            for c in &nodes {
                if c.x.is_full() {
                    stats.full_evaluations += 1;
                } else {
                    stats.bound_evaluations += 1;
                }
            }
            match &mut frontier {
                Frontier::Heap(h) => h.extend(nodes),
                Frontier::Stack(s) => {
                    if self.config.ordering == SearchOrdering::SortedDepthFirst {
                        // best child ends up on top
                        nodes.sort_by(|a, b| b.value.total_cmp(&a.value).then_with(|| b.x.cmp(&a.x)));
                    } else {
                        nodes.reverse();
                    }
                    s.extend(nodes);
                }
            }
        }
        true
    }
}

fn support_order(paths: &PathLengthSet, mode: BranchOrder) -> Vec<usize> {
    let mut order: Vec<usize> = (0..paths.len()).collect();
    if mode == BranchOrder::SupportArea {
        let area: Vec<usize> = (0..paths.len()).map(|n| paths.get(n).iter().filter(|&&l| l > 0.0).count()).collect();
        order.sort_by(|&a, &b| area[b].cmp(&area[a]).then(a.cmp(&b)));
    }
    order
}

fn finalize(problem: &Problem, order: usize, items: Vec<(f64, Assignment)>) -> Result<Vec<RankedAssignment>> {
    let mut ranked = items
        .into_iter()
        .map(|(_, x)| {
            let fit = loss(&x, problem.radiograph, problem.paths, problem.table, problem.q, order)?;
            Ok(RankedAssignment { assignment: x, fit })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| a.fit.sse.total_cmp(&b.fit.sse).then_with(|| a.assignment.cmp(&b.assignment)));
    Ok(ranked)
}

fn thread_pool(width: usize) -> Result<Option<rayon::ThreadPool>> {
    if width <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(width)
        .build()
        .map(Some)
        .map_err(|e| Error::invalid(format!("cannot start {width} worker threads: {e}")))
}

fn check_problem(problem: &Problem) -> Result<()> {
    if problem.paths.is_empty() {
        return Err(Error::invalid("scene has no objects"));
    }
    if problem.table.is_empty() {
        return Err(Error::invalid("material table is empty"));
    }
    Ok(())
}

/// Exact top-N assignments by branch and bound.
pub fn solve_top_n(problem: &Problem, config: &SearchConfig) -> Result<SolveResult> {
    solve_top_n_logged(problem, config, None)
}

/// [`solve_top_n`], also returning the root of every pruned subtree.
pub fn solve_top_n_with_pruned(problem: &Problem, config: &SearchConfig) -> Result<(SolveResult, Vec<Assignment>)> {
    let mut log = Vec::new();
    let r = solve_top_n_logged(problem, config, Some(&mut log))?;
    Ok((r, log))
}

fn solve_top_n_logged(
    problem: &Problem,
    config: &SearchConfig,
    mut pruned: Option<&mut Vec<Assignment>>,
) -> Result<SolveResult> {
    config.validate(problem.table)?;
    check_problem(problem)?;
    let eval = Evaluator::new(problem.radiograph, problem.paths, problem.table, problem.q, config.order)?;
    let pool = thread_pool(config.parallel_width)?;
    let slack = PRUNE_RTOL * eval.t_energy();
    let mut search = Search {
        eval: &eval,
        omega: (0..problem.table.len()).collect(),
        filler: 0,
        branch_positions: support_order(problem.paths, config.branch_order),
        config,
        pool,
        slack,
    };
    let mut top = TopList::new(config.top_n);

    let warm_start_stats = match &config.warm_start_materials {
        Some(names) => {
            let start = Instant::now();
            let mut restricted = problem.table.indices_of(names)?;
            restricted.sort_unstable();
            restricted.dedup();
            let all = std::mem::replace(&mut search.omega, restricted);
            let mut ws = SearchStats::default();
            let done = search.run(&mut top, &mut ws, pruned.as_deref_mut());
            search.omega = all;
            ws.wall_time_s = start.elapsed().as_secs_f64();
            if !done {
                let ranked = finalize(problem, config.order, top.items)?;
                return Ok(SolveResult {
                    ranked,
                    stats: SearchStats::default(),
                    warm_start_stats: Some(ws),
                    complete: false,
                });
            }
            Some(ws)
        }
        None => None,
    };

    let start = Instant::now();
    let mut stats = SearchStats::default();
    let complete = search.run(&mut top, &mut stats, pruned);
    stats.wall_time_s = start.elapsed().as_secs_f64();
    let ranked = finalize(problem, config.order, top.items)?;
    Ok(SolveResult { ranked, stats, warm_start_stats, complete })
}

/// Reference solver: evaluates all `M^K` assignments.
pub fn solve_exhaustive(problem: &Problem, top_n: usize, order: usize, budget: u64) -> Result<SolveResult> {
    if top_n == 0 {
        return Err(Error::invalid("top-N size must be at least 1"));
    }
    check_problem(problem)?;
    let k = problem.paths.len();
    let m = problem.table.len();
    let total = (m as u64).checked_pow(k as u32).filter(|&t| t <= budget).ok_or_else(|| {
        Error::Budget(format!(
            "exhaustive search over {m}^{k} assignments exceeds the budget of {budget}; use branch and bound"
        ))
    })?;
    let start = Instant::now();
    let eval = Evaluator::new(problem.radiograph, problem.paths, problem.table, problem.q, order)?;
    let mut top = TopList::new(top_n);
    let mut digits = vec![0usize; k];
    for _ in 0..total {
        let x = Assignment::full(digits.clone());
        top.offer(eval.loss(&x), &x);
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < m {
                break;
            }
            *d = 0;
        }
    }
    let stats = SearchStats {
        full_evaluations: total,
        bound_evaluations: 0,
        pruned_subtrees: 0,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let ranked = finalize(problem, order, top.items)?;
    Ok(SolveResult { ranked, stats, warm_start_stats: None, complete: true })
}

/// `J` for every full assignment, in odometer order (last object fastest).
pub fn all_losses(problem: &Problem, order: usize, budget: u64) -> Result<Vec<(Assignment, f64)>> {
    check_problem(problem)?;
    let k = problem.paths.len();
    let m = problem.table.len();
    let total = (m as u64)
        .checked_pow(k as u32)
        .filter(|&t| t <= budget)
        .ok_or_else(|| Error::Budget(format!("{m}^{k} assignments exceed the budget of {budget}")))?;
    let eval = Evaluator::new(problem.radiograph, problem.paths, problem.table, problem.q, order)?;
    let mut out = Vec::with_capacity(total as usize);
    let mut digits = vec![0usize; k];
    for _ in 0..total {
        let x = Assignment::full(digits.clone());
        let j = eval.loss(&x);
        out.push((x, j));
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < m {
                break;
            }
            *d = 0;
        }
    }
    Ok(out)
}

/// Fast masked bound and loss for repeated queries on one problem.
pub struct BoundOracle<'a> {
    eval: Evaluator<'a>,
}

impl<'a> BoundOracle<'a> {
    pub fn new(problem: &Problem<'a>, order: usize) -> Result<Self> {
        check_problem(problem)?;
        Ok(Self { eval: Evaluator::new(problem.radiograph, problem.paths, problem.table, problem.q, order)? })
    }

    /// `J(x)` for full `x`.
    pub fn loss(&self, x: &Assignment) -> f64 {
        self.eval.loss(x)
    }

    /// Masked bound with the given filler material.
    pub fn bound(&self, x: &Assignment, filler: usize) -> f64 {
        if x.is_full() {
            self.eval.loss(x)
        } else {
            self.eval.bound(x, filler)
        }
    }
}
