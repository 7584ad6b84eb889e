//! Sweeps over scatter order and object thickness, reported as the rank and
//! error of a known ground truth.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::{loss, Assignment};
use crate::simulate::{simulate_radiograph, thickness_sweep, AnalogOptions};
use crate::solver::{all_losses, solve_top_n, Problem, SearchConfig};

/// 1-based rank of `truth` among `(assignment, J)` pairs, ties broken
/// lexicographically.
pub fn rank_in(losses: &[(Assignment, f64)], truth: &Assignment) -> Result<usize> {
    let jt = losses
        .iter()
        .find(|(x, _)| x == truth)
        .map(|(_, j)| *j)
        .ok_or_else(|| Error::invalid(format!("assignment {truth} not among the candidates")))?;
    let better = losses
        .iter()
        .filter(|(x, j)| j.total_cmp(&jt).then_with(|| x.cmp(truth)).is_lt())
        .count();
    Ok(better + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSweepRow {
    pub order: usize,
    pub truth_rank: usize,
    pub truth_sse: f64,
    pub truth_rmse: f64,
    /// RMSE of the best incorrect assignments, ascending.
    pub incorrect_rmse: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSweep {
    pub rows: Vec<OrderSweepRow>,
    /// Number of fitted pixels, for RMSE.
    pub n_pixels: usize,
    /// `J` of every assignment per order, odometer order.
    #[serde(skip)]
    pub losses: Vec<Vec<(Assignment, f64)>>,
}

/// Evaluate every assignment at each scatter order in `orders`.
pub fn order_sweep(
    problem: &Problem,
    truth: &Assignment,
    orders: impl IntoIterator<Item = usize>,
    n_incorrect: usize,
    budget: u64,
) -> Result<OrderSweep> {
    let n_pixels = problem.radiograph.n_valid();
    let mut rows = Vec::new();
    let mut all = Vec::new();
    for order in orders {
        let losses = all_losses(problem, order, budget)?;
        let truth_rank = rank_in(&losses, truth)?;
        let truth_sse = losses.iter().find(|(x, _)| x == truth).map(|(_, j)| *j).expect("rank_in found it");
        let mut wrong: Vec<f64> = losses.iter().filter(|(x, _)| x != truth).map(|(_, j)| *j).collect();
        wrong.sort_by(f64::total_cmp);
        wrong.truncate(n_incorrect);
        let rmse = |j: f64| (j / n_pixels as f64).sqrt();
        rows.push(OrderSweepRow {
            order,
            truth_rank,
            truth_sse,
            truth_rmse: rmse(truth_sse),
            incorrect_rmse: wrong.into_iter().map(rmse).collect(),
        });
        all.push(losses);
    }
    Ok(OrderSweep { rows, n_pixels, losses: all })
}

impl OrderSweep {
    /// `order,truth_rank,truth_sse,truth_rmse,incorrect_rmse_1,...`
    pub fn to_csv(&self) -> String {
        let width = self.rows.iter().map(|r| r.incorrect_rmse.len()).max().unwrap_or(0);
        let mut out = String::from("order,truth_rank,truth_sse,truth_rmse");
        for i in 1..=width {
            write!(out, ",incorrect_rmse_{i}").unwrap();
        }
        out.push('\n');
        for r in &self.rows {
            write!(out, "{},{},{:?},{:?}", r.order, r.truth_rank, r.truth_sse, r.truth_rmse).unwrap();
            for i in 0..width {
                match r.incorrect_rmse.get(i) {
                    Some(v) => write!(out, ",{v:?}").unwrap(),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Assignments whose `J` increases from one order to the next by more
    /// than `rtol` relative.
    pub fn monotonicity_violations(&self, rtol: f64) -> Vec<(Assignment, usize, f64, f64)> {
        let mut out = Vec::new();
        for (k, pair) in self.losses.windows(2).enumerate() {
            for ((x, lo), (_, hi)) in pair[0].iter().zip(&pair[1]) {
                if *hi > lo * (1.0 + rtol) {
                    out.push((x.clone(), self.rows[k + 1].order, *lo, *hi));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThicknessSweepRow {
    pub thickness_cm: f64,
    pub seed: u64,
    /// `None` when the truth is outside the top list.
    pub truth_rank: Option<usize>,
    pub truth_rmse: f64,
    pub top_n: usize,
}

/// Solve the five-shell phantom at each thickness and seed.
pub fn run_thickness_sweep(
    thicknesses_cm: &[f64],
    seeds: impl IntoIterator<Item = u64> + Clone,
    opts: &AnalogOptions,
    config: &SearchConfig,
) -> Result<Vec<ThicknessSweepRow>> {
    let mut rows = Vec::new();
    for &th in thicknesses_cm {
        for seed in seeds.clone() {
            let spec = thickness_sweep(th, &AnalogOptions { seed, ..opts.clone() })?;
            let sim = simulate_radiograph(&spec)?;
            let p = Problem { radiograph: &sim.radiograph, paths: &sim.paths, table: &sim.table, q: &sim.q };
            let r = solve_top_n(&p, config)?;
            let fit = loss(&sim.truth, &sim.radiograph, &sim.paths, &sim.table, &sim.q, config.order)?;
            rows.push(ThicknessSweepRow {
                thickness_cm: th,
                seed,
                truth_rank: r.rank_of(&sim.truth),
                truth_rmse: fit.rmse,
                top_n: config.top_n,
            });
        }
    }
    Ok(rows)
}

/// Mean rank per thickness, counting "outside the top N" as `N + 1`.
pub fn mean_ranks(rows: &[ThicknessSweepRow]) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64, usize)> = Vec::new();
    for r in rows {
        let rank = r.truth_rank.unwrap_or(r.top_n + 1) as f64;
        match out.iter_mut().find(|(t, _, _)| *t == r.thickness_cm) {
            Some(e) => {
                e.1 += rank;
                e.2 += 1;
            }
            None => out.push((r.thickness_cm, rank, 1)),
        }
    }
    out.into_iter().map(|(t, s, n)| (t, s / n as f64)).collect()
}

/// `thickness_cm,seed,truth_rank,truth_rmse`; rank is empty when outside
/// the top list.
pub fn thickness_sweep_csv(rows: &[ThicknessSweepRow]) -> String {
    let mut out = String::from("thickness_cm,seed,truth_rank,truth_rmse\n");
    for r in rows {
        let rank = r.truth_rank.map(|k| k.to_string()).unwrap_or_default();
        writeln!(out, "{:?},{},{},{:?}", r.thickness_cm, r.seed, rank, r.truth_rmse).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::make_analog;
    use crate::solver::DEFAULT_EXHAUSTIVE_BUDGET;

    #[test]
    fn rank_counts_strictly_better_and_lexicographic_ties() {
        let a = Assignment::full(vec![0]);
        let b = Assignment::full(vec![1]);
        let c = Assignment::full(vec![2]);
        let losses = vec![(a.clone(), 1.0), (b.clone(), 0.5), (c.clone(), 1.0)];
        assert_eq!(rank_in(&losses, &b).unwrap(), 1);
        assert_eq!(rank_in(&losses, &a).unwrap(), 2);
        assert_eq!(rank_in(&losses, &c).unwrap(), 3);
        assert!(rank_in(&losses, &Assignment::full(vec![3])).is_err());
    }

    #[test]
    fn order_sweep_is_monotone_and_csv_shaped() {
        let opts = AnalogOptions { grid_px: 24, bins: 9, sigma: 0.001, ..Default::default() };
        let spec = make_analog("al-cu-shells", &opts).unwrap().remove(0);
        let sim = simulate_radiograph(&spec).unwrap();
        let table = sim.table.subset(&["aluminum", "copper", "iron", "lead"]).unwrap();
        let truth = Assignment::from_names(&["aluminum", "copper"], &table).unwrap();
        let p = Problem { radiograph: &sim.radiograph, paths: &sim.paths, table: &table, q: &sim.q };
        let sweep = order_sweep(&p, &truth, 0..=4, 10, DEFAULT_EXHAUSTIVE_BUDGET).unwrap();
        assert!(sweep.monotonicity_violations(1e-12).is_empty());
        let csv = sweep.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 6);
        assert!(lines[0].starts_with("order,truth_rank,truth_sse,truth_rmse,incorrect_rmse_1"));
        assert!(lines[0].ends_with("incorrect_rmse_10"));
        assert_eq!(lines[1].split(',').count(), 14);
    }

    #[test]
    fn mean_rank_treats_misses_as_n_plus_one() {
        let row = |t, r| ThicknessSweepRow { thickness_cm: t, seed: 0, truth_rank: r, truth_rmse: 0.0, top_n: 20 };
        let m = mean_ranks(&[row(1.0, Some(1)), row(1.0, Some(3)), row(2.0, None)]);
        assert_eq!(m, vec![(1.0, 2.0), (2.0, 21.0)]);
        let csv = thickness_sweep_csv(&[row(2.0, None)]);
        assert_eq!(csv.lines().nth(1).unwrap(), "2.0,0,,0.0");
    }
}
