//! Acceptance suite: ten criteria, each reported as one PASS/FAIL line.
//!
//! Run with `cargo test --release --test acceptance -- --nocapture` to see
//! the lines; the test fails if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::{all_assignments, dense_fit, random_instance};
use matid::analysis::{mean_ranks, order_sweep, run_thickness_sweep, thickness_sweep_csv};
use matid::calibrate::{
    fit_pixel_calibration, preprocess, ExposureSet, SpectrumObjective, DEFAULT_R2_THRESHOLD,
};
use matid::calibrate::{calibrate_spectrum, SpectrumCalibrationOptions};
use matid::forward::{direct, fit_gain_scatter, loss, Assignment, Radiograph};
use matid::materials::SpectrumResponse;
use matid::simulate::{
    make_analog, simulate_radiograph, synthesize_frames, AnalogOptions, DetectorSpec, Simulation,
    SWEEP_THICKNESSES_CM,
};
use matid::solver::{
    all_losses, bound, branch, solve_exhaustive, solve_top_n, BoundOracle, Problem, SearchConfig,
    DEFAULT_EXHAUSTIVE_BUDGET,
};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relative slack for comparisons that are exact in real arithmetic.
const FLOAT_RTOL: f64 = 1e-12;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: String) -> Outcome {
    if cond {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn problem(sim: &Simulation) -> Problem<'_> {
    Problem { radiograph: &sim.radiograph, paths: &sim.paths, table: &sim.table, q: &sim.q }
}

fn warm_start() -> SearchConfig {
    SearchConfig {
        warm_start_materials: Some(vec!["lithium".into(), "tin".into(), "uranium".into()]),
        ..Default::default()
    }
}

/// Branch and bound returns the same ranked list as exhaustive enumeration.
fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut instances, mut mismatches) = (0, Vec::new());
    for seed in 0..240u64 {
        let k = 1 + (seed % 4) as usize;
        let m = 2 + ((seed / 4) % 5) as usize;
        let top_n = [1, 5, 10][(seed % 3) as usize];
        let order = ((seed / 3) % 3) as usize;
        let size = if seed % 20 == 0 { 64 } else { rng.random_range(8..=32) };
        let inst = random_instance(1000 + seed, k, m, size);
        let p = inst.problem();
        let config = SearchConfig { top_n, order, ..Default::default() };
        let bb = solve_top_n(&p, &config).map_err(|e| e.to_string())?;
        let ex = solve_exhaustive(&p, top_n, order, DEFAULT_EXHAUSTIVE_BUDGET).map_err(|e| e.to_string())?;
        let keys = |r: &matid::SolveResult| r.ranked.iter().map(|e| e.assignment.clone()).collect::<Vec<_>>();
        if keys(&bb) != keys(&ex) {
            mismatches.push(seed);
        }
        instances += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        mismatches.is_empty() && instances >= 200 && secs < 300.0,
        format!("{instances} instances, {} mismatches {mismatches:?}, {secs:.1} s", mismatches.len()),
    )
}

/// Two fully overlapping shells, 20 materials: every leaf and every
/// depth-one node is evaluated and nothing is pruned.
fn combinatorial_counts() -> Outcome {
    let opts = AnalogOptions { grid_px: 128, sigma: 0.005, ..Default::default() };
    let sim = simulate_radiograph(&make_analog("al-cu-shells", &opts).unwrap()[0]).unwrap();
    // the inner shell's support lies inside the outer shell's
    let inner = sim.paths.support(1);
    let overlap = ndarray::Zip::from(&inner).and(&sim.paths.support(0)).all(|&a, &b| !a || b);
    let t = sim.radiograph.cropped(&inner).unwrap();
    let p = Problem { radiograph: &t, paths: &sim.paths, table: &sim.table, q: &sim.q };
    let r = solve_top_n(&p, &SearchConfig::default()).map_err(|e| e.to_string())?;
    let s = &r.stats;
    check(
        overlap && s.full_evaluations == 400 && s.bound_evaluations == 20,
        format!(
            "{} full, {} partial evaluations on {} cropped pixels",
            s.full_evaluations,
            s.bound_evaluations,
            t.n_valid()
        ),
    )
}

/// Eight disjoint slabs at 256x256: pruning keeps the search far below the
/// 20^8 leaves and the warm start never costs extra main-search leaves.
fn pruning_effectiveness(cubes: &Simulation) -> Outcome {
    let p = problem(cubes);
    let start = Instant::now();
    let warm = solve_top_n(&p, &warm_start()).map_err(|e| e.to_string())?;
    let cold = solve_top_n(&p, &SearchConfig::default()).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let total = 20f64.powi(8);
    let frac = warm.stats.full_evaluations as f64 / total;
    let extra = warm.warm_start_stats.as_ref().map_or(0, |w| w.full_evaluations);
    check(
        frac < 0.05 && warm.stats.full_evaluations <= cold.stats.full_evaluations && secs < 1800.0,
        format!(
            "warm {} (+{extra} in the warm-start pass) vs cold {} full evaluations; {:.2e} of 20^8; {secs:.1} s",
            warm.stats.full_evaluations, cold.stats.full_evaluations, frac
        ),
    )
}

/// Lower bounds never exceed any descendant's loss and never decrease down
/// a branch.
fn bound_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut pairs, mut violations) = (0u64, 0u64);
    let mut seed = 0;
    while pairs < 12_000 {
        seed += 1;
        let k = rng.random_range(2..=4);
        let m = rng.random_range(2..=4);
        let order = rng.random_range(0..=2);
        let inst = random_instance(5000 + seed, k, m, rng.random_range(8..=16));
        let p = inst.problem();
        let oracle = BoundOracle::new(&p, order).map_err(|e| e.to_string())?;
        let omega: Vec<usize> = (0..m).collect();
        // (y, explicit-fit J, fast-evaluator J)
        let losses: Vec<(Assignment, f64, f64)> = all_assignments(k, m)
            .into_iter()
            .map(|y| {
                let j = loss(&y, p.radiograph, p.paths, p.table, p.q, order).unwrap().sse;
                let fast = oracle.loss(&y);
                (y, j, fast)
            })
            .collect();
        // random chain from the root to a leaf
        for _ in 0..4 {
            let mut x = Assignment::unassigned(k);
            let (mut prev, mut prev_fast) = (0.0f64, 0.0f64);
            while !x.is_full() {
                let kids = branch(&x, &omega).unwrap();
                x = kids[rng.random_range(0..kids.len())].clone();
                let b = bound(&x, &p, order).map_err(|e| e.to_string())?;
                let fast = oracle.bound(&x, 0);
                let slack = |v: f64| FLOAT_RTOL * v.abs().max(1e-300);
                let fast_prev = prev_fast;
                prev_fast = fast;
                if b + slack(b) < prev || fast + slack(fast) < fast_prev || (b - fast).abs() > 1e-9 * b.max(1e-12) {
                    violations += 1;
                }
                prev = b;
                for (y, jy, jy_fast) in &losses {
                    let desc = x.entries().iter().zip(y.entries()).all(|(a, c)| a.is_none() || a == c);
                    if desc {
                        pairs += 1;
                        if b > jy + slack(*jy) || fast > jy_fast + slack(*jy_fast) {
                            violations += 1;
                        }
                    }
                }
            }
        }
    }
    check(violations == 0, format!("{pairs} (bound, descendant) pairs over {seed} instances, {violations} violations"))
}

/// Analog scenes at 0.5% noise with in-model scatter.
fn synthetic_identification(cubes: &Simulation) -> Outcome {
    let opts = AnalogOptions { grid_px: 256, sigma: 0.005, ..Default::default() };
    let mut parts = Vec::new();
    let mut ok = true;
    for name in ["al-cu-shells", "al-cu-cu-shells"] {
        let sim = simulate_radiograph(&make_analog(name, &opts).unwrap()[0]).unwrap();
        let r = solve_top_n(&problem(&sim), &SearchConfig::default()).map_err(|e| e.to_string())?;
        let rank = r.rank_of(&sim.truth);
        ok &= rank == Some(1);
        parts.push(format!("{name} rank {rank:?}"));
    }
    let r = solve_top_n(&problem(cubes), &warm_start()).map_err(|e| e.to_string())?;
    let rank = r.rank_of(&cubes.truth);
    ok &= rank.is_some_and(|k| k <= 20);
    parts.push(format!("eight-cubes rank {rank:?}"));
    check(ok, parts.join(", "))
}

/// Truth rank is best at intermediate thickness, averaged over 10 seeds.
fn thickness_sweep() -> Outcome {
    let opts = AnalogOptions { grid_px: 48, bins: 31, sigma: 0.005, ..Default::default() };
    let rows = run_thickness_sweep(&SWEEP_THICKNESSES_CM, 0..10, &opts, &SearchConfig::default())
        .map_err(|e| e.to_string())?;
    let path = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("thickness_sweep.csv");
    std::fs::write(&path, thickness_sweep_csv(&rows)).map_err(|e| e.to_string())?;
    let means = mean_ranks(&rows);
    let at = |t: f64| means.iter().find(|(x, _)| *x == t).map(|(_, r)| *r).unwrap();
    let (thin, mid, thick) = (at(0.1), at(1.0), at(2.0));
    let summary = means.iter().map(|(t, r)| format!("{t} cm: {r:.1}")).collect::<Vec<_>>().join(", ");
    check(mid <= thin && mid <= thick, format!("mean rank (miss = 21) {summary}"))
}

/// Per-assignment loss is nonincreasing in scatter order; CSV emitted.
fn order_sweep_monotone() -> Outcome {
    let opts = AnalogOptions { grid_px: 48, bins: 21, sigma: 0.005, ..Default::default() };
    let sim = simulate_radiograph(&make_analog("order-sweep", &opts).unwrap()[0]).unwrap();
    let sweep = order_sweep(&problem(&sim), &sim.truth, 0..=10, 10, DEFAULT_EXHAUSTIVE_BUDGET)
        .map_err(|e| e.to_string())?;
    let violations = sweep.monotonicity_violations(FLOAT_RTOL);
    let csv = sweep.to_csv();
    let path = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("order_sweep.csv");
    std::fs::write(&path, &csv).map_err(|e| e.to_string())?;
    let header_ok = csv.starts_with("order,truth_rank,truth_sse,truth_rmse,incorrect_rmse_1,")
        && csv.lines().count() == 12;
    let ranks: Vec<String> = sweep.rows.iter().map(|r| r.truth_rank.to_string()).collect();
    check(
        violations.is_empty() && header_ok,
        format!(
            "{} assignments x 11 orders, {} violations; truth rank by order [{}]; {}",
            sweep.losses[0].len(),
            violations.len(),
            ranks.join(" "),
            path.display()
        ),
    )
}

/// Pixel calibration, preprocessing and spectrum calibration round trips.
fn calibration_round_trips() -> Outcome {
    let start = Instant::now();
    let mut spec = make_analog("al-cu-shells", &AnalogOptions { grid_px: 64, sigma: 0.0, ..Default::default() })
        .unwrap()
        .remove(0);
    let det = DetectorSpec {
        gain_counts_per_s: 2000.0,
        gain_falloff: 0.2,
        dark_rate_counts_per_s: 15.0,
        offset_counts: 100.0,
        dark_times_s: vec![1.0, 4.0, 16.0],
        flat_times_s: vec![1.0, 2.0, 4.0, 8.0],
        object_time_s: 8.0,
        read_noise_counts: 0.0,
    };
    spec.detector = Some(det.clone());
    let sim = simulate_radiograph(&spec).unwrap();
    let mut frames = synthesize_frames(&spec, &sim).unwrap();
    let (_, object) = frames.pop().unwrap();
    let set = ExposureSet::new(frames.into_iter().map(|(_, f)| f).collect()).map_err(|e| e.to_string())?;
    let cal = fit_pixel_calibration(&set, DEFAULT_R2_THRESHOLD).map_err(|e| e.to_string())?;
    let dim = set.dim();
    let rel = |a: &Array2<f64>, b: &Array2<f64>| {
        a.iter().zip(b).map(|(x, y)| (x - y).abs() / y.abs()).fold(0.0f64, f64::max)
    };
    let pixel_err = rel(&cal.gain_profile, &det.gain_profile(dim))
        .max(rel(&cal.dark_rate, &det.dark_rate(dim)))
        .max(rel(&cal.offset, &det.offset(dim)));
    let t = preprocess(&object.image, object.exposure_s, &cal).map_err(|e| e.to_string())?;
    let pre_err = rel(t.values(), sim.radiograph.values());

    let small = AnalogOptions { grid_px: 48, bins: 6, sigma: 0.0, ..Default::default() };
    let sim = simulate_radiograph(&make_analog("al-cu-cu-shells", &small).unwrap()[0]).unwrap();
    let obj = SpectrumObjective::new(&sim.radiograph, &sim.paths, &sim.table, &sim.truth, 2).map_err(|e| e.to_string())?;
    let q: Vec<f64> = (0..sim.q.len()).map(|i| 0.1 + 0.05 * i as f64).collect();
    let (_, g) = obj.value_and_gradient(&q).map_err(|e| e.to_string())?;
    let h = 1e-6;
    let mut grad_err = 0.0f64;
    let gmax = g.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    for i in 0..q.len() {
        let (mut qp, mut qm) = (q.clone(), q.clone());
        qp[i] += h;
        qm[i] -= h;
        let fd = (obj.value(&qp).unwrap() - obj.value(&qm).unwrap()) / (2.0 * h);
        grad_err = grad_err.max((fd - g[i]).abs() / gmax);
    }
    let (q0, _) = SpectrumResponse::normalized(sim.q.grid().clone(), vec![1.0; sim.q.len()]).unwrap();
    let opts = SpectrumCalibrationOptions { iterations: 200, ..Default::default() };
    let (_, run) = calibrate_spectrum(&sim.radiograph, &sim.paths, &sim.table, &sim.truth, &q0, &opts)
        .map_err(|e| e.to_string())?;
    let nonincreasing = run.history.windows(2).all(|w| w[1] <= w[0]);
    let secs = start.elapsed().as_secs_f64();
    check(
        pixel_err <= 1e-9 && pre_err <= FLOAT_RTOL && grad_err <= 1e-5 && nonincreasing && run.final_loss <= run.initial_loss,
        format!(
            "pixel rel err {pixel_err:.1e}, preprocess rel err {pre_err:.1e}, gradient rel err {grad_err:.1e}, \
             J {:.3e} -> {:.3e} monotone {nonincreasing}, {secs:.1} s",
            run.initial_loss, run.final_loss
        ),
    )
}

/// The gain + scatter fit matches a dense SVD least-squares solve.
fn fit_optimality() -> Outcome {
    let mut worst = 0.0f64;
    let mut n = 0;
    for seed in 0..120u64 {
        let order = (seed % 5) as usize;
        let inst = random_instance(9000 + seed, 1 + (seed % 3) as usize, 3, 8 + (seed % 17) as usize);
        let d = direct(&inst.truth, &inst.paths, &inst.table, &inst.q).unwrap();
        let fit = fit_gain_scatter(&inst.t, &d, order, None).map_err(|e| e.to_string())?;
        let (sse, _) = dense_fit(inst.t.values(), inst.t.valid(), &d, order);
        worst = worst.max((fit.sse - sse).abs() / sse);
        n += 1;
    }
    check(worst <= 1e-9, format!("{n} fits, worst relative sse difference {worst:.2e}"))
}

/// Scaling the radiograph by c > 0 leaves the ordering of J unchanged.
fn rescaling_invariance() -> Outcome {
    let mut checked = 0;
    let mut bad = Vec::new();
    for seed in 0..12u64 {
        let inst = random_instance(7000 + seed, 2 + (seed % 3) as usize, 4, 12);
        let base = all_losses(&inst.problem(), 2, DEFAULT_EXHAUSTIVE_BUDGET).map_err(|e| e.to_string())?;
        let mut order: Vec<usize> = (0..base.len()).collect();
        order.sort_by(|&a, &b| base[a].1.total_cmp(&base[b].1).then_with(|| base[a].0.cmp(&base[b].0)));
        for c in [1e-3, 0.37, 2.0, 1e4] {
            let scaled = Radiograph::from_values(inst.t.values() * c).unwrap();
            let p = Problem { radiograph: &scaled, ..inst.problem() };
            let j = all_losses(&p, 2, DEFAULT_EXHAUSTIVE_BUDGET).map_err(|e| e.to_string())?;
            // adjacent entries of the original order must stay ordered, up
            // to pairs equal within rounding
            let flipped = order.windows(2).any(|w| {
                let (a, b) = (w[0], w[1]);
                j[a].1 > j[b].1 && base[b].1 - base[a].1 > FLOAT_RTOL * base[b].1
            });
            if flipped {
                bad.push((seed, c));
            }
            checked += 1;
        }
    }
    check(bad.is_empty(), format!("{checked} (instance, scale) pairs, {} order changes {bad:?}", bad.len()))
}

#[test]
fn acceptance() {
    let cubes = simulate_radiograph(
        &make_analog("eight-cubes", &AnalogOptions { grid_px: 256, sigma: 0.005, ..Default::default() }).unwrap()[0],
    )
    .unwrap();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("1 oracle equivalence", Box::new(oracle_equivalence)),
        ("2 combinatorial counts", Box::new(combinatorial_counts)),
        ("3 pruning effectiveness", Box::new(|| pruning_effectiveness(&cubes))),
        ("4 bound admissibility and monotonicity", Box::new(bound_properties)),
        ("5 synthetic identification", Box::new(|| synthetic_identification(&cubes))),
        ("6 thickness sweep", Box::new(thickness_sweep)),
        ("7 polynomial-order sweep", Box::new(order_sweep_monotone)),
        ("8 calibration round trips", Box::new(calibration_round_trips)),
        ("9 least-squares optimality", Box::new(fit_optimality)),
        ("10 rescaling invariance", Box::new(rescaling_invariance)),
    ];
    let mut failed = Vec::new();
    for (name, run) in &criteria {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(msg) => println!("PASS criterion {name}: {msg}"),
            Err(msg) => {
                println!("FAIL criterion {name}: {msg}");
                failed.push(*name);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
