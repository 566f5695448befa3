//! One PASS/FAIL line per acceptance criterion.
//!
//! The process exits successfully even when a criterion fails, so that the
//! report is always produced; set `ACCEPTANCE_STRICT=1` to turn failures into
//! a nonzero exit status.

use std::time::Instant;

use halsx::bench::{rrmse, run_method, simulate, ExperimentSpec, Method, SamplingScheme, SplitSpec, SyntheticSpec};
use halsx::identifiability::{construct_certified_features, is_strongly_boundary_close, rank4_display, Verdict, DEFAULT_CAP, DEFAULT_TOL};
use halsx::linalg::numerical_rank;
use halsx::linkmodels::{FeatureSet, Features, Kernel, LinkFitter, LinkSpec, Smoothing};
use halsx::operators::{
    make_periodic_aggregates, make_random_aggregates, random_completion, random_gaussian_sensing, random_rank_one,
    MaskKind, MeasurementOperator, ProjectionOptions, Span,
};
use halsx::solver::{fit, fit2, fit_from, update_column, SolverConfig, StopReason};
use halsx::Error;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>())
}

const FAMILIES: [MaskKind; 5] = [
    MaskKind::Complete,
    MaskKind::Completion,
    MaskKind::GaussianSensing,
    MaskKind::RankOne,
    MaskKind::TemporalAggregate,
];

/// Spans covering a random subset of each column with random lengths.
fn random_partial_aggregates(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> MeasurementOperator {
    let mut spans = Vec::new();
    for column in 0..cols {
        let mut start = 0;
        while start < rows {
            let len = rng.random_range(1..=rows - start);
            if rng.random::<f64>() < 0.7 {
                spans.push(Span { column, start, len });
            }
            start += len;
        }
    }
    if spans.is_empty() {
        spans.push(Span { column: 0, start: 0, len: rows });
    }
    MeasurementOperator::temporal_aggregate(rows, cols, spans).unwrap()
}

fn random_operator(kind: MaskKind, rows: usize, cols: usize, count: usize, rng: &mut ChaCha8Rng) -> MeasurementOperator {
    match kind {
        MaskKind::Complete => MeasurementOperator::complete(rows, cols),
        MaskKind::Completion => {
            let mut cells: Vec<(usize, usize)> = (0..rows).flat_map(|i| (0..cols).map(move |j| (i, j))).collect();
            cells.shuffle(rng);
            cells.truncate(count.clamp(1, rows * cols));
            MeasurementOperator::completion(rows, cols, cells).unwrap()
        }
        MaskKind::GaussianSensing => random_gaussian_sensing(rows, cols, count, rng),
        MaskKind::RankOne => random_rank_one(rows, cols, count, rng),
        MaskKind::TemporalAggregate => random_partial_aggregates(rows, cols, rng),
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0_f64;
    for kind in FAMILIES {
        for _ in 0..100 {
            let (rows, cols) = (rng.random_range(1..=9), rng.random_range(1..=9));
            let op = random_operator(kind, rows, cols, rng.random_range(1..=12), &mut rng);
            let m = gaussian(rows, cols, &mut rng);
            let b = DVector::from_fn(op.len(), |_, _| rng.sample(StandardNormal));
            let lhs = op.apply(&m).unwrap().dot(&b);
            let rhs = m.dot(&op.adjoint(&b).unwrap());
            let scale = m.norm() * b.norm();
            worst = worst.max((lhs - rhs).abs() / scale.max(f64::MIN_POSITIVE));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-10 && secs < 5.0, format!("max relative gap {worst:.1e}, {secs:.2}s"))
}

/// Matrix of the operator acting on the column-major vectorization.
fn operator_matrix(op: &MeasurementOperator) -> DMatrix<f64> {
    let (rows, cols) = op.shape();
    let mut a = DMatrix::zeros(op.len(), rows * cols);
    for c in 0..rows * cols {
        let mut e = DMatrix::zeros(rows, cols);
        e[(c % rows, c / rows)] = 1.0;
        a.set_column(c, &op.apply(&e).unwrap());
    }
    a
}

/// Exact minimizer of `||v - w||^2` over `{A v = b, v >= 0}` by enumerating
/// the zero set; each candidate solves the equality-constrained problem on
/// the free coordinates through the pseudo-inverse.
fn qp_oracle(a: &DMatrix<f64>, b: &DVector<f64>, w: &DVector<f64>) -> Option<DVector<f64>> {
    let n = w.len();
    let mut best: Option<(f64, DVector<f64>)> = None;
    for zeros in 0u32..(1 << n) {
        let free: Vec<usize> = (0..n).filter(|&i| zeros & (1 << i) == 0).collect();
        let mut v = DVector::zeros(n);
        if !free.is_empty() {
            let af = DMatrix::from_fn(a.nrows(), free.len(), |r, c| a[(r, free[c])]);
            let wf = DVector::from_fn(free.len(), |c, _| w[free[c]]);
            let gap = b - &af * &wf;
            let pinv = (&af * af.transpose()).pseudo_inverse(1e-12).unwrap();
            let vf = &wf + af.transpose() * (pinv * gap);
            for (c, &i) in free.iter().enumerate() {
                v[i] = vf[c];
            }
        }
        if (a * &v - b).amax() > 1e-10 || v.iter().any(|&x| x < -1e-12) {
            continue;
        }
        let obj = (&v - w).norm_squared();
        if best.as_ref().is_none_or(|(o, _)| obj < *o) {
            best = Some((obj, v));
        }
    }
    best.map(|(_, v)| v)
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let opts = ProjectionOptions { max_iter: 20_000, ..ProjectionOptions::default() };
    let mut worst_neg = 0.0_f64;
    let mut worst_res = 0.0_f64;
    let mut failures = 0;
    for kind in FAMILIES {
        for _ in 0..50 {
            let (rows, cols) = (rng.random_range(2..=6), rng.random_range(2..=6));
            let count = rng.random_range(1..=(rows * cols / 2).max(1));
            let op = random_operator(kind, rows, cols, count, &mut rng);
            let b = op.apply(&uniform(rows, cols, &mut rng)).unwrap();
            let w = gaussian(rows, cols, &mut rng);
            match op.project_polytope(&b, &w, &opts) {
                Ok(p) => {
                    worst_neg = worst_neg.max(-p.matrix.min());
                    worst_res = worst_res.max((op.apply(&p.matrix).unwrap() - &b).amax());
                }
                Err(_) => failures += 1,
            }
        }
    }
    let mut worst_gap = 0.0_f64;
    for kind in [MaskKind::Completion, MaskKind::TemporalAggregate] {
        for _ in 0..50 {
            let (rows, cols) = if rng.random::<bool>() { (2, 2) } else { (rng.random_range(1..=4), 1) };
            let op = random_operator(kind, rows, cols, rng.random_range(1..=rows * cols), &mut rng);
            let b = op.apply(&uniform(rows, cols, &mut rng)).unwrap();
            let w = gaussian(rows, cols, &mut rng);
            let fast = op.project_polytope(&b, &w, &ProjectionOptions::default()).unwrap().matrix;
            let oracle = qp_oracle(&operator_matrix(&op), &b, &DVector::from_column_slice(w.as_slice())).unwrap();
            worst_gap = worst_gap.max((DVector::from_column_slice(fast.as_slice()) - oracle).amax());
        }
    }
    outcome(
        failures == 0 && worst_neg <= 1e-12 && worst_res <= 1e-8 && worst_gap <= 1e-8,
        format!(
            "{failures} failed projections, min entry {:.1e}, max residual {worst_res:.1e}, fast path vs QP oracle {worst_gap:.1e}",
            -worst_neg
        ),
    )
}

/// Classical HALS written against `V H` and `H^T H` (no explicit residual).
fn hals_reference(v: &DMatrix<f64>, mut w: DMatrix<f64>, mut h: DMatrix<f64>, iters: usize) -> Vec<f64> {
    let k = w.ncols();
    let mut objectives = vec![(v - &w * h.transpose()).norm_squared()];
    for _ in 0..iters {
        let vh = v * &h;
        let hth = h.transpose() * &h;
        for i in 0..k {
            let mut col = vh.column(i) - &w * hth.column(i) + w.column(i) * hth[(i, i)];
            col /= hth[(i, i)];
            w.set_column(i, &col.map(|x| x.max(0.0)));
        }
        let vtw = v.transpose() * &w;
        let wtw = w.transpose() * &w;
        for i in 0..k {
            let mut col = vtw.column(i) - &h * wtw.column(i) + h.column(i) * wtw[(i, i)];
            col /= wtw[(i, i)];
            h.set_column(i, &col.map(|x| x.max(0.0)));
        }
        objectives.push((v - &w * h.transpose()).norm_squared());
    }
    objectives
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0_f64;
    for _ in 0..20 {
        let v = uniform(10, 3, &mut rng) * uniform(8, 3, &mut rng).transpose();
        let (w0, h0) = (uniform(10, 3, &mut rng), uniform(8, 3, &mut rng));
        let op = MeasurementOperator::complete(10, 8);
        let b = op.apply(&v).unwrap();
        let cfg = SolverConfig {
            rank: 3,
            max_iter: 50,
            kkt_epsilon: 0.0,
            row_link: LinkSpec::Identity,
            col_link: LinkSpec::Identity,
            ..SolverConfig::default()
        };
        let model = fit_from(&op, &b, &FeatureSet::identity(10, 8), &cfg, (w0.clone(), h0.clone())).unwrap();
        let reference = hals_reference(&v, w0, h0, 50);
        let ours = model.trace.objectives();
        if ours.len() != reference.len() {
            return outcome(false, format!("trace length {} vs {}", ours.len(), reference.len()));
        }
        let scale = v.norm_squared();
        for (a, r) in ours.iter().zip(&reference) {
            worst = worst.max((a - r).abs() / scale);
        }
    }
    outcome(worst <= 1e-12, format!("max trace gap {worst:.1e} (relative to ||V||^2)"))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (n1, n2) = (24, 20);
    let truth = uniform(n1, 3, &mut rng) * uniform(n2, 3, &mut rng).transpose();
    let xr = gaussian(n1, 2, &mut rng);
    let xc = gaussian(n2, 2, &mut rng);
    let features = FeatureSet::new(Features::new(xr).unwrap(), Features::new(xc).unwrap());
    let operators = vec![
        ("complete", MeasurementOperator::complete(n1, n2)),
        ("completion", random_completion(n1, n2, 0.6, 4).unwrap()),
        ("periodic", make_periodic_aggregates(n1, n2, 3).unwrap()),
        ("random_aggregate", make_random_aggregates(n1, n2, 0.3, 4).unwrap()),
    ];
    let links = vec![
        ("identity", LinkSpec::Identity),
        ("linear", LinkSpec::Linear),
        ("spline", LinkSpec::spline()),
        ("kernel", LinkSpec::kernel_ridge()),
    ];
    let mut runs = 0;
    let mut offenders = Vec::new();
    let mut later = 0;
    let mut worst = 0.0_f64;
    for (mask, op) in &operators {
        let b = op.apply(&truth).unwrap();
        for (name, link) in &links {
            for seed in 0..3 {
                let cfg = SolverConfig {
                    rank: 3,
                    max_iter: 60,
                    kkt_epsilon: 0.0,
                    row_link: link.clone(),
                    col_link: link.clone(),
                    record_blocks: true,
                    seed,
                    ..SolverConfig::default()
                };
                let model = fit(op, &b, &features, &cfg).unwrap();
                runs += 1;
                let obj = &model.trace.block_objectives;
                let rise = obj.windows(2).map(|p| p[1] - p[0]).fold(0.0_f64, f64::max);
                worst = worst.max(rise);
                if rise > 1e-10 {
                    offenders.push(format!("{mask}/{name}/seed{seed} +{rise:.1e}"));
                }
                // entries per sweep: the value after the slack step plus one per block
                let sweep = 2 * cfg.rank + 1;
                later += obj[sweep..].windows(2).any(|p| p[1] - p[0] > 1e-10) as usize;
            }
        }
    }
    let by_family: Vec<String> = links
        .iter()
        .map(|(name, _)| {
            let hits = offenders.iter().filter(|o| o.split('/').nth(1) == Some(*name)).count();
            format!("{name} {hits}/{}", operators.len() * 3)
        })
        .collect();
    outcome(
        offenders.is_empty(),
        format!(
            "{runs} runs, largest block increase {worst:.1e}, {} offending runs ({later} with increases after the first sweep); offending runs per link family {by_family:?}",
            offenders.len()
        ),
    )
}

/// Minimum of `||R - f p^T||^2` over `f >= 0`, one coordinate at a time by
/// golden-section search.
fn nonneg_oracle(r: &DMatrix<f64>, p: &DVector<f64>) -> f64 {
    let bound = r.norm() / p.norm() * 2.0 + 1.0;
    let mut total = 0.0;
    for i in 0..r.nrows() {
        let row = r.row(i).transpose();
        let obj = |t: f64| (&row - p * t).norm_squared();
        let (mut lo, mut hi) = (0.0, bound);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let a = hi - g * (hi - lo);
            let c = lo + g * (hi - lo);
            if obj(a) <= obj(c) {
                hi = c;
            } else {
                lo = a;
            }
        }
        total += obj(0.5 * (lo + hi)).min(obj(0.0));
    }
    total
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    for family in ["identity", "linear", "spline", "kernel"] {
        let mut count = 0;
        while count < 50 {
            let n = if family == "spline" { rng.random_range(4..=6) } else { rng.random_range(1..=6) };
            let m = rng.random_range(1..=5);
            let r = gaussian(n, m, &mut rng);
            let partner = DVector::from_fn(m, |_, _| 0.1 + rng.random::<f64>());
            let fitter = match family {
                "identity" => LinkFitter::prepare(&LinkSpec::Identity, &Features::identity(n)),
                "linear" => Features::new(gaussian(n, n, &mut rng)).and_then(|f| LinkFitter::prepare(&LinkSpec::Linear, &f)),
                "spline" => {
                    let x = DMatrix::from_fn(n, 1, |i, _| i as f64 + 0.8 * rng.random::<f64>());
                    let spec = LinkSpec::Spline { basis_dim: n, smoothing: Smoothing::Fixed { lambda: 0.0 } };
                    Features::new(x).and_then(|f| LinkFitter::prepare(&spec, &f))
                }
                _ => {
                    let spec = LinkSpec::KernelRidge { kernel: Kernel::Rbf { bandwidth: None }, ridge: 0.0 };
                    Features::new(gaussian(n, 2, &mut rng)).and_then(|f| LinkFitter::prepare(&spec, &f))
                }
            };
            // ill-conditioned random draws are redrawn
            let Ok(fitter) = fitter else { continue };
            let Ok((col, _)) = update_column(&r, &partner, &fitter, 0.0) else { continue };
            count += 1;
            let ours = (&r - &col * partner.transpose()).norm_squared();
            let gap = ours - nonneg_oracle(&r, &partner);
            worst = worst.max(gap);
            if gap > 1e-6 {
                failures.push(format!("{family} {n}x{m} gap {gap:.1e}"));
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!("200 subproblems, largest excess over oracle {worst:.1e}; failures {failures:?}"),
    )
}

fn recovery_problem() -> (halsx::bench::SyntheticData, MeasurementOperator, DVector<f64>, FeatureSet) {
    let spec = SyntheticSpec { n1: 40, n2: 48, rank: 3, weight_low: 0.0, seed: 0, ..SyntheticSpec::default() };
    let data = simulate(&spec).unwrap();
    let op = MeasurementOperator::complete(40, 48);
    let b = op.apply(&data.matrix).unwrap();
    let features = FeatureSet::new(
        Features::new(data.row_features.clone()).unwrap(),
        Features::new(data.col_features.clone()).unwrap(),
    );
    (data, op, b, features)
}

fn recovery_config(max_iter: usize) -> SolverConfig {
    SolverConfig {
        rank: 3,
        max_iter,
        row_link: LinkSpec::spline(),
        col_link: LinkSpec::spline(),
        ..SolverConfig::default()
    }
}

fn criterion_6() -> Outcome {
    let (data, op, b, features) = recovery_problem();
    let start = Instant::now();
    let model = fit(&op, &b, &features, &recovery_config(200)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let err = rrmse(&model.reconstruction(), &data.matrix).unwrap();
    outcome(
        err < 1e-4 && model.iterations() <= 200 && secs < 30.0,
        format!("recovery RRMSE {err:.2e} after {} iterations ({:?}), {secs:.2}s", model.iterations(), model.stop),
    )
}

fn criterion_7() -> Outcome {
    let mut wins = 0;
    let mut notes = Vec::new();
    for seed in 0..5 {
        let data = simulate(&SyntheticSpec { seed, ..SyntheticSpec::default() }).unwrap();
        let blocks = SplitSpec::default().blocks(&data).unwrap();
        let config = SolverConfig { rank: 5, ..ExperimentSpec::default().solver };
        let mut seed_wins = true;
        for rate in [0.3, 0.5] {
            let op = SamplingScheme::Periodic.operator(40, 48, rate, seed).unwrap();
            let b = op.apply(&blocks.train).unwrap();
            let errors = |m: Method| {
                let out = run_method(m, &op, &b, &blocks, &config).unwrap();
                [
                    rrmse(out.rows.as_ref().unwrap(), &blocks.rows).unwrap(),
                    rrmse(out.cols.as_ref().unwrap(), &blocks.cols).unwrap(),
                    rrmse(out.both.as_ref().unwrap(), &blocks.both).unwrap(),
                ]
            };
            let ours = errors(Method::HalsxSpline);
            let individual = errors(Method::IndividualGam);
            let factor = errors(Method::FactorGam);
            let better = (0..3).all(|i| ours[i] < individual[i] && ours[i] < factor[i]);
            seed_wins &= better;
            if !better {
                notes.push(format!(
                    "seed {seed} rate {rate}: halsx {:.3?} individual {:.3?} factor {:.3?}",
                    ours, individual, factor
                ));
            }
        }
        wins += seed_wins as usize;
    }
    outcome(wins >= 4, format!("{wins}/5 seeds better on all blocks at both rates; misses: {notes:?}"))
}

fn criterion_8() -> Outcome {
    let mut worse = 0;
    let mut pairs = Vec::new();
    let mut worst_trace = 0.0_f64;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = uniform(40, 5, &mut rng) * uniform(48, 5, &mut rng).transpose();
        let features = FeatureSet::identity(40, 48);
        let cfg = SolverConfig {
            rank: 5,
            row_link: LinkSpec::Identity,
            col_link: LinkSpec::Identity,
            seed: 1000 + seed,
            ..SolverConfig::default()
        };
        let op = make_random_aggregates(40, 48, 0.1, seed).unwrap();
        let b = op.apply(&truth).unwrap();
        let slack = rrmse(&fit(&op, &b, &features, &cfg).unwrap().reconstruction(), &truth).unwrap();
        let sampled = match fit2(&op, &b, &features, &cfg) {
            Ok(m) => m,
            Err(Error::Diverged { model, .. }) => *model,
            Err(e) => return outcome(false, format!("fit2 failed: {e}")),
        };
        let sampled = rrmse(&sampled.reconstruction(), &truth).unwrap();
        worse += (sampled > slack) as usize;
        pairs.push(format!("{slack:.3}/{sampled:.3}"));

        let complete = MeasurementOperator::complete(40, 48);
        let bc = complete.apply(&truth).unwrap();
        let short = SolverConfig { max_iter: 50, kkt_epsilon: 0.0, ..cfg };
        let a = fit(&complete, &bc, &features, &short).unwrap().trace.objectives();
        let c = fit2(&complete, &bc, &features, &short).unwrap().trace.objectives();
        if a.len() != c.len() {
            return outcome(false, format!("trace lengths differ: {} vs {}", a.len(), c.len()));
        }
        let scale = bc.norm_squared();
        worst_trace = worst_trace.max(a.iter().zip(&c).map(|(x, y)| (x - y).abs() / scale).fold(0.0, f64::max));
    }
    outcome(
        worse >= 4 && worst_trace <= 1e-10,
        format!("fit2 worse on {worse}/5 seeds (fit/fit2 RRMSE {pairs:?}); complete-observation trace gap {worst_trace:.1e} relative to ||b||^2"),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let truth = uniform(40, 5, &mut rng) * uniform(48, 5, &mut rng).transpose();
    let features = FeatureSet::identity(40, 48);
    let cfg = SolverConfig {
        rank: 5,
        max_iter: 8,
        kkt_epsilon: 0.0,
        divergence_window: 0,
        row_link: LinkSpec::Identity,
        col_link: LinkSpec::Identity,
        ..SolverConfig::default()
    };
    let mut times = Vec::new();
    for count in [120usize, 240, 480, 960] {
        let op = random_completion(40, 48, count as f64 / 1920.0, 9).unwrap();
        let b = op.apply(&truth).unwrap();
        let model = fit2(&op, &b, &features, &cfg).unwrap();
        let mut per = model.trace.iteration_seconds();
        per.sort_by(|a, b| a.total_cmp(b));
        times.push((op.len(), per[per.len() / 2]));
    }
    let increasing = times.windows(2).all(|w| w[1].1 > w[0].1);
    let shown: Vec<String> = times.iter().map(|(n, t)| format!("N={n}: {:.2}ms", t * 1e3)).collect();
    outcome(increasing, format!("median seconds per iteration {shown:?}"))
}

/// Largest relative entry gap between column-normalized factors under the
/// best column permutation.
fn permutation_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let normalize = |m: &DMatrix<f64>| {
        let mut m = m.clone();
        for mut c in m.column_iter_mut() {
            let n = c.norm();
            if n > 0.0 {
                c /= n;
            }
        }
        m
    };
    let (a, b) = (normalize(a), normalize(b));
    let k = a.ncols();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = f64::INFINITY;
    permutations(&mut perm, 0, &mut |p| {
        let gap = (0..k).map(|j| (a.column(j) - b.column(p[j])).amax()).fold(0.0, f64::max);
        best = best.min(gap);
    });
    best
}

fn permutations(p: &mut Vec<usize>, start: usize, visit: &mut dyn FnMut(&[usize])) {
    if start == p.len() {
        visit(p);
        return;
    }
    for i in start..p.len() {
        p.swap(start, i);
        permutations(p, start + 1, visit);
        p.swap(start, i);
    }
}

fn criterion_10() -> Outcome {
    let mut constructed = 0;
    let mut constructor_failures = Vec::new();
    for k in 2..=6 {
        for seed in 0..20 {
            let c = construct_certified_features(k, seed).unwrap();
            let report = is_strongly_boundary_close(&c.f, DEFAULT_TOL, DEFAULT_CAP).unwrap();
            let full_rank = numerical_rank(&c.x, 1e-10) == c.x.ncols();
            constructed += 1;
            if report.verdict != Verdict::Holds || !full_rank {
                constructor_failures.push((k, seed));
            }
        }
    }

    let display = rank4_display();
    let display_report = is_strongly_boundary_close(&display.f, DEFAULT_TOL, DEFAULT_CAP).unwrap();
    let display_rank = numerical_rank(&display.x, 1e-10);
    let display_ok = display_report.verdict == Verdict::Holds && display_rank == display.x.ncols();

    let cert = construct_certified_features(3, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut fc = DMatrix::<f64>::identity(6, 3);
    for i in 3..6 {
        for j in 0..3 {
            fc[(i, j)] = 0.2 + rng.random::<f64>();
        }
    }
    let fr = &cert.f / cert.f.max();
    let truth = &fr * fc.transpose();
    let (n1, n2) = truth.shape();
    let op = MeasurementOperator::complete(n1, n2);
    let b = op.apply(&truth).unwrap();
    let features = FeatureSet::new(Features::new(cert.x.clone()).unwrap(), Features::identity(n2));
    let mut exact = 0;
    let mut worst = 0.0_f64;
    for seed in 0..20 {
        let cfg = SolverConfig {
            rank: 3,
            max_iter: 5000,
            kkt_epsilon: 0.0,
            row_link: LinkSpec::Linear,
            col_link: LinkSpec::Identity,
            seed,
            ..SolverConfig::default()
        };
        let model = fit(&op, &b, &features, &cfg).unwrap();
        if *model.trace.objectives().last().unwrap() < 1e-10 {
            exact += 1;
            worst = worst.max(permutation_gap(&model.row_factors, &fr)).max(permutation_gap(&model.col_factors, &fc));
        }
    }
    let unique = exact > 0 && worst <= 1e-4;
    outcome(
        constructor_failures.is_empty() && display_ok && unique,
        format!(
            "constructor {}/{constructed} certified; displayed rank-4 matrices: verdict {:?}, missing pairs {:?}, rank(X) {display_rank}/7; uniqueness: {exact}/20 starts below 1e-10, largest factor gap {worst:.1e}",
            constructed - constructor_failures.len(),
            display_report.verdict,
            display_report.missing_pairs,
        ),
    )
}

fn criterion_11() -> Outcome {
    let (_, op, b, features) = recovery_problem();
    let capped = fit(&op, &b, &features, &recovery_config(200)).unwrap();
    let model = fit(&op, &b, &features, &recovery_config(5000)).unwrap();
    let ratio = model.trace.final_kkt() / model.trace.initial_kkt();
    let capped_ratio = capped.trace.final_kkt() / capped.trace.initial_kkt();
    outcome(
        model.stop == StopReason::Converged && ratio <= 1e-4,
        format!(
            "stopped {:?} at iteration {} with KKT ratio {ratio:.2e} (ratio after 200 iterations {capped_ratio:.2e})",
            model.stop,
            model.iterations()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("adjointness", criterion_1),
        ("projection feasibility and fast paths", criterion_2),
        ("reduction to classical HALS", criterion_3),
        ("monotone block descent", criterion_4),
        ("ramp optimality", criterion_5),
        ("exact recovery", criterion_6),
        ("prediction gain", criterion_7),
        ("sampling-error solver behaviour", criterion_8),
        ("per-iteration cost trend", criterion_9),
        ("identifiability", criterion_10),
        ("KKT stopping", criterion_11),
    ];
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.contains(&(i + 1)) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        failed += (!o.pass) as usize;
        println!(
            "{} criterion {:>2} ({name}): {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {failed} criteria failed");
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
