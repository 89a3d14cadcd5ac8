//! End-to-end acceptance checks. Prints one `[PASS]` or `[FAIL]` line per
//! criterion and exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use cox_subgroup::algos::{grow_box, Method};
use cox_subgroup::cox::fit_cox;
use cox_subgroup::crs::{fast_log_rank_probs, naive_log_rank_probs};
use cox_subgroup::metrics::{empirical_epe, MetricError};
use cox_subgroup::synth::{gen_counter, gen_plain_cox, CounterParams, SynthSpec};
use cox_subgroup::{Region, SurvivalDataset};
use cox_subgroup_harness::config::{DatasetSource, ExperimentConfig, Selection};
use cox_subgroup_harness::load_dataset;
use cox_subgroup_harness::report::{summarize, MethodSummary};
use cox_subgroup_harness::sweep::run_sweep;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn sweep_summaries(config: &ExperimentConfig) -> Vec<MethodSummary> {
    let (data, truth) = load_dataset(config).expect("dataset loads");
    let out = run_sweep(config, &data, truth.as_ref()).expect("sweep runs");
    summarize(&out.selected, &config.methods)
}

fn mean(s: &[MethodSummary], method: Method, metric: &str) -> f64 {
    s.iter()
        .find(|m| m.method == method.name())
        .and_then(|m| m.metric(metric))
        .map_or(f64::NAN, |m| m.mean)
}

/// n = 4000 split evenly into training and test, minimum training EPE with
/// the 10% size filter, 10 replicates.
fn nonlinear_table() -> Outcome {
    let mut c = ExperimentConfig::new(DatasetSource::Synthetic(SynthSpec::nonlinear(4000, 2, 0)));
    c.methods = vec![Method::Base, Method::DDGroup, Method::DDGroupNE];
    c.test_fraction = 0.5;
    c.workers = workers();
    let s = sweep_summaries(&c);
    let base_f1 = mean(&s, Method::Base, "f1");
    let base_epe = mean(&s, Method::Base, "test_epe");
    let dg_f1 = mean(&s, Method::DDGroup, "f1");
    let dg_epe = mean(&s, Method::DDGroup, "test_epe");
    let ne_epe = mean(&s, Method::DDGroupNE, "test_epe");
    check(
        dg_f1 >= 0.90 && base_f1 <= 0.35 && (base_epe - 0.69).abs() <= 0.02 && dg_epe <= 0.45 && ne_epe <= dg_epe,
        format!(
            "DG F1 {dg_f1:.3}, Base F1 {base_f1:.3}, Base EPE {base_epe:.3}, DG EPE {dg_epe:.3}, DG-NE EPE {ne_epe:.3}"
        ),
    )
}

/// 4000 training points (5000 generated, 20% held out), best F1 over each
/// method's grid, 10 replicates.
fn counter_table() -> Outcome {
    let mut c = ExperimentConfig::new(DatasetSource::Synthetic(SynthSpec::counter(5000, 0)));
    c.methods = vec![
        Method::Base,
        Method::DDGroup,
        Method::DDGroupCI,
        Method::DDGroupPL,
    ];
    c.selection = Selection::BestF1;
    c.workers = workers();
    let s = sweep_summaries(&c);
    let dg = mean(&s, Method::DDGroup, "f1");
    let ci = mean(&s, Method::DDGroupCI, "f1");
    let pl = mean(&s, Method::DDGroupPL, "f1");
    let base = mean(&s, Method::Base, "f1");
    check(
        dg >= 0.88 && ci <= 0.85 && pl <= 0.90 && (base - 0.75).abs() <= 0.02,
        format!("DG {dg:.3}, DG-CI {ci:.3}, DG-PL {pl:.3}, Base {base:.3}"),
    )
}

fn random_beta(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()
}

fn unit_box(d: usize) -> Region {
    Region::new(vec![-1.0; d], vec![1.0; d]).unwrap()
}

fn crs_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let start = Instant::now();
    let mut worst = 0.0f64;
    for inst in 0..500u64 {
        let n = rng.random_range(1..=50);
        let d = rng.random_range(1..=3);
        let censoring = [0.0, 0.3, 0.8][inst as usize % 3];
        let beta = random_beta(&mut rng, d);
        let core =
            gen_plain_cox(n, &beta, &unit_box(d), censoring, inst).map_err(|e| e.to_string())?;
        let x_star: Array1<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = fast_log_rank_probs(&beta, &core, x_star.view()).map_err(|e| e.to_string())?;
        let slow = naive_log_rank_probs(&beta, &core, x_star.view()).map_err(|e| e.to_string())?;
        for (a, b) in fast.log_r.iter().zip(&slow.log_r) {
            let diff = if a == b { 0.0 } else { (a - b).abs() };
            worst = worst.max(if diff.is_nan() { f64::INFINITY } else { diff });
        }
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-8 && elapsed < Duration::from_secs(10),
        format!("max |Δ log r| {worst:.2e} in {:.2}s", elapsed.as_secs_f64()),
    )
}

fn null_epe() -> Outcome {
    let mut checked = 0;
    let mut worst = 0.0f64;
    let mut datasets: Vec<SurvivalDataset> = Vec::new();
    for seed in 0..5u64 {
        for n in [1, 2, 3, 10, 100, 1000] {
            datasets.push(
                gen_counter(&CounterParams::default(), n, seed)
                    .map_err(|e| e.to_string())?
                    .0,
            );
            datasets.push(
                SynthSpec::nonlinear(n, 3, seed)
                    .generate()
                    .map_err(|e| e.to_string())?
                    .0,
            );
            datasets.push(
                gen_plain_cox(n, &[1.0, -0.5], &unit_box(2), 0.4, seed)
                    .map_err(|e| e.to_string())?,
            );
        }
    }
    for data in &datasets {
        match empirical_epe(&vec![0.0; data.d_adjust()], data) {
            Ok(epe) => {
                checked += 1;
                worst = worst.max((epe - std::f64::consts::LN_2).abs());
            }
            // No comparable pair: nothing to average.
            Err(MetricError::NoComparablePairs) => {}
            Err(e) => return Err(e.to_string()),
        }
    }
    check(
        worst <= 1e-12 && checked > 0,
        format!("{checked} datasets with comparable pairs, max |EPE - log 2| {worst:.1e}"),
    )
}

fn proper_scoring() -> Outcome {
    let beta = [1.0, -1.0];
    let grid = [0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 4.0];
    let mut hits = 0;
    for seed in 0..10 {
        let data =
            gen_plain_cox(4000, &beta, &unit_box(2), 0.0, 500 + seed).map_err(|e| e.to_string())?;
        let best = grid
            .iter()
            .map(|c| empirical_epe(&[c * beta[0], c * beta[1]], &data).unwrap())
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0;
        hits += usize::from(grid[best] == 1.0);
    }
    check(hits >= 9, format!("minimum at c = 1 in {hits}/10 seeds"))
}

fn fitted_epe(data: &SurvivalDataset, region: &Region) -> Result<f64, String> {
    let sub = data.subset(&data.members(region));
    let model = fit_cox(&sub, 0.0).map_err(|e| e.to_string())?;
    empirical_epe(&model.beta, &sub).map_err(|e| e.to_string())
}

fn region_monotonicity() -> Outcome {
    let boxes = [
        Region::new(vec![-0.5, -0.5], vec![0.5, 0.5]).unwrap(),
        Region::new(vec![-0.75, -0.75], vec![0.75, 0.75]).unwrap(),
        unit_box(2),
    ];
    let mut hits = 0;
    for seed in 0..10 {
        let data = gen_plain_cox(4000, &[1.5, -1.0], &unit_box(2), 0.2, 700 + seed)
            .map_err(|e| e.to_string())?;
        let epes: Vec<f64> = boxes
            .iter()
            .map(|b| fitted_epe(&data, b))
            .collect::<Result<_, _>>()?;
        hits += usize::from(epes.windows(2).all(|w| w[1] <= w[0] + 0.02));
    }
    check(
        hits >= 9,
        format!("nested boxes ordered in {hits}/10 seeds"),
    )
}

fn counterexample() -> Outcome {
    let mut hits = 0;
    for seed in 0..10 {
        let (data, truth) =
            gen_counter(&CounterParams::default(), 4000, 900 + seed).map_err(|e| e.to_string())?;
        let whole = fitted_epe(&data, &data.bounding_box())?;
        let part = fitted_epe(&data, &truth)?;
        hits += usize::from(whole < part);
    }
    check(hits >= 9, format!("whole interval wins in {hits}/10 seeds"))
}

/// Literal box growth: repeatedly take the live rejected point of smallest
/// directed norm over the remaining directions, record the half-space
/// `u*·(x - c) <= a*` through it, drop the direction, and keep only points
/// strictly inside. Direction `u` for face `2j` is `-e_j / s`, for `2j + 1`
/// it is `e_j / s`. Returns the region and the recorded levels with the
/// norms of every point live at each step.
fn grow_box_oracle(
    points: &[Vec<f64>],
    center: &[f64],
    speeds: &[f64],
    bounds: &Region,
) -> (Region, Vec<(f64, Vec<f64>)>) {
    let d = center.len();
    let dot = |f: usize, p: &[f64]| {
        let j = f / 2;
        let y = (p[j] - center[j]) / speeds[f];
        if f % 2 == 1 {
            y
        } else {
            -y
        }
    };
    let mut dirs: Vec<usize> = (0..2 * d).collect();
    let mut live: Vec<&Vec<f64>> = points.iter().collect();
    let mut halfspaces: Vec<(usize, f64)> = Vec::new();
    let mut trace = Vec::new();
    while !live.is_empty() && !dirs.is_empty() {
        let norm = |p: &[f64]| {
            dirs.iter()
                .map(|&f| dot(f, p))
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let norms: Vec<f64> = live.iter().map(|p| norm(p)).collect();
        let mut k = 0;
        for (i, &v) in norms.iter().enumerate() {
            if v < norms[k] {
                k = i;
            }
        }
        let a = norms[k];
        let x_star = live[k];
        let mut u = dirs[0];
        for &f in &dirs {
            if dot(f, x_star) > dot(u, x_star) {
                u = f;
            }
        }
        trace.push((a, norms));
        let j = u / 2;
        let edge = if u % 2 == 1 {
            center[j] + speeds[u] * a
        } else {
            center[j] - speeds[u] * a
        };
        halfspaces.push((u, edge));
        dirs.retain(|&f| f != u);
        live.retain(|p| dot(u, p) < a);
    }
    let mut lower = bounds.lower().to_vec();
    let mut upper = bounds.upper().to_vec();
    for (f, coord) in halfspaces {
        let j = f / 2;
        if f % 2 == 1 {
            upper[j] = upper[j].min(coord.max(bounds.lower()[j]));
        } else {
            lower[j] = lower[j].max(coord.min(bounds.upper()[j]));
        }
    }
    for j in 0..d {
        if lower[j] > upper[j] {
            let mid = 0.5 * (lower[j] + upper[j]);
            (lower[j], upper[j]) = (mid, mid);
        }
    }
    (Region::new(lower, upper).unwrap(), trace)
}

fn grow_box_safety() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut mismatches = 0;
    let mut violations = 0;
    for _ in 0..500 {
        let d = rng.random_range(1..=4);
        let n = rng.random_range(0..=40);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let rejected: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        let center: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
        let speeds: Vec<f64> = (0..2 * d).map(|_| rng.random_range(0.2..3.0)).collect();
        let bounds = unit_box(d);
        let x = Array2::from_shape_fn((n, d), |(i, j)| rows[i][j]);
        let got =
            grow_box(x.view(), &rejected, &bounds, &center, &speeds).map_err(|e| e.to_string())?;
        let rej_rows: Vec<Vec<f64>> = rows
            .iter()
            .zip(&rejected)
            .filter(|(_, &r)| r)
            .map(|(p, _)| p.clone())
            .collect();
        let (want, trace) = grow_box_oracle(&rej_rows, &center, &speeds, &bounds);
        let same = (0..d).all(|j| {
            (got.lower()[j] - want.lower()[j]).abs() <= 1e-12
                && (got.upper()[j] - want.upper()[j]).abs() <= 1e-12
        });
        mismatches += usize::from(!same);
        // Each recorded level is the smallest norm among the points still
        // live, so no rejected point could have stopped a face earlier.
        let ordered = trace.iter().all(|(a, norms)| norms.iter().all(|v| v >= a));
        let empty_interior = rej_rows.iter().all(|p| !got.interior_contains(p));
        violations += usize::from(!ordered || !empty_interior || !got.is_subset_of(&bounds));
    }
    check(
        mismatches == 0 && violations == 0,
        format!("500 instances: {mismatches} oracle mismatches, {violations} safety violations"),
    )
}

fn median_time(data: &SurvivalDataset, beta: &[f64], x_star: &Array1<f64>, reps: usize) -> f64 {
    let mut times: Vec<f64> = (0..reps)
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(fast_log_rank_probs(beta, data, x_star.view()).unwrap());
            t.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[reps / 2]
}

fn crs_scaling() -> Outcome {
    let beta = [0.8, -0.4, 0.3];
    let x_star = Array1::from(vec![0.1, 0.2, -0.3]);
    let small = gen_plain_cox(10_000, &beta, &unit_box(3), 0.3, 1).map_err(|e| e.to_string())?;
    let large = gen_plain_cox(20_000, &beta, &unit_box(3), 0.3, 2).map_err(|e| e.to_string())?;
    // Warm up caches and the allocator before timing.
    median_time(&small, &beta, &x_star, 5);
    median_time(&large, &beta, &x_star, 5);
    let t_small = median_time(&small, &beta, &x_star, 41);
    let t_large = median_time(&large, &beta, &x_star, 41);
    let ratio = t_large / t_small;
    check(
        ratio <= 1.8,
        format!(
            "n=20000 {:.3} ms, n=10000 {:.3} ms, ratio {ratio:.2}",
            t_large * 1e3,
            t_small * 1e3
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("crs oracle equivalence", crs_oracle),
        ("null-model EPE is log 2", null_epe),
        ("EPE is a proper score", proper_scoring),
        ("EPE favours larger nested regions", region_monotonicity),
        (
            "whole interval beats truth on the counterexample",
            counterexample,
        ),
        ("box growth safety", grow_box_safety),
        ("fast CRS scales linearly", crs_scaling),
        ("nonlinear benchmark table", nonlinear_table),
        ("counter benchmark table", counter_table),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] {name}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {name}: {detail} ({secs:.1}s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
