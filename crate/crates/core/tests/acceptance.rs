//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line per
//! criterion and exits non-zero if any criterion fails.

use std::time::Instant;

use capalloc_core::allocation::{mc_shapley_allocation, shapley_allocation};
use capalloc_core::cost::{AdditiveMaxCost, ComponentPair, HierarchyComponents, NestedMaxCost};
use capalloc_core::experiments::{self, SWEEP_SIZES};
use capalloc_core::optimizer::{single_max_components, Provenance};
use capalloc_core::permutation::{indicator_moments, sample_indicator_moments, substream_rng};
use capalloc_core::stats::correlation;
use capalloc_core::{
    euler_allocation, exchange_rate_jacobian, hierarchy_allocation, hierarchy_joint_probabilities,
    linear_max_allocation, solve_crude, solve_local_optimum, standalone_allocation, AllocationModel,
    CovarianceModel, OptimizationProblem, Portfolio,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Rounds half away from zero after snapping to a 1e-6 grid, so exact
/// halves such as 217.5 do not fall below by a float ulp.
fn rounded(v: &[f64]) -> Vec<i64> {
    v.iter().map(|x| ((x * 1e6).round() / 1e6).round() as i64).collect()
}

/// Shapley values by averaging increments over all `n!` orders.
fn brute_force_shapley(n: usize, cost: impl Fn(&[usize]) -> f64) -> Vec<f64> {
    fn permute(k: usize, order: &mut Vec<usize>, visit: &mut dyn FnMut(&[usize])) {
        if k == order.len() {
            visit(order);
            return;
        }
        for i in k..order.len() {
            order.swap(k, i);
            permute(k + 1, order, visit);
            order.swap(k, i);
        }
    }
    let mut total = vec![0.0; n];
    let mut count = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    permute(0, &mut order, &mut |o| {
        let mut prev = 0.0;
        for j in 0..n {
            let c = cost(&o[..=j]);
            total[o[j]] += c - prev;
            prev = c;
        }
        count += 1.0;
    });
    total.iter().map(|t| t / count).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let t = experiments::table1().unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let (a, b) = (t.rwa.clone(), t.lbs.clone());
    let oracle = brute_force_shapley(5, |s| {
        let sa: f64 = s.iter().map(|&k| a[k]).sum();
        let sb: f64 = s.iter().map(|&k| b[k]).sum();
        sa.max(sb)
    });
    let oracle_agrees = oracle.iter().zip(&t.shapley.values).all(|(x, y)| (x - y).abs() < 1e-9);

    let columns = [
        ("linear", rounded(&t.linear.allocation.values), vec![179, 218, 227, 185, 191]),
        ("shapley", rounded(&t.shapley.values), vec![179, 218, 228, 186, 188]),
        ("euler", rounded(&t.euler.values), vec![150, 250, 250, 150, 200]),
        ("standalone", rounded(&t.standalone.values), vec![195, 212, 212, 212, 169]),
    ];
    let totals_ok = [&t.linear.allocation, &t.shapley, &t.euler, &t.standalone]
        .iter()
        .all(|c| (c.total() - 1000.0).abs() <= 1e-9);
    let mut detail = Vec::new();
    let mut pass = totals_ok && oracle_agrees && elapsed < 1.0;
    for (name, got, want) in &columns {
        if got != want {
            pass = false;
            detail.push(format!("{name} {got:?} != {want:?}"));
        }
    }
    detail.push(format!(
        "exact shapley {:?}, permutation oracle agrees: {oracle_agrees}, totals 1000: {totals_ok}, {elapsed:.3}s",
        t.shapley.values
    ));
    outcome(pass, detail.join("; "))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let points = experiments::fig1(7, 100_000, &SWEEP_SIZES, 20).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let pass = points
        .iter()
        .all(|p| p.mean >= 0.995 && (p.n < 20 || p.mean >= 0.999))
        && elapsed < 180.0;
    let means: Vec<String> = points.iter().map(|p| format!("n={}:{:.5}", p.n, p.mean)).collect();
    outcome(pass, format!("mean corr {}; {elapsed:.1}s", means.join(" ")))
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let points = experiments::fig2(
        7,
        experiments::DEFAULT_VAR_MC_SAMPLES,
        &SWEEP_SIZES,
        20,
        experiments::PREFIXES_PER_DRAW,
    )
    .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let pass = points.iter().all(|p| {
        if p.n == 5 {
            p.mean >= 0.98
        } else if p.n >= 20 {
            p.mean >= 0.995
        } else {
            true
        }
    }) && elapsed < 180.0;
    let means: Vec<String> = points.iter().map(|p| format!("n={}:{:.4}", p.n, p.mean)).collect();
    outcome(pass, format!("mean corr {}; {elapsed:.1}s", means.join(" ")))
}

fn criterion_4() -> Outcome {
    let points = experiments::fig3().unwrap();
    let mid = points.iter().find(|p| p.total_rwa == 1000.0).unwrap();
    let mid_ok = (mid.w_rwa - 0.5).abs() <= 1e-12
        && (mid.w_lbs - 0.5).abs() <= 1e-12
        && (mid.beta - 1.0).abs() <= 1e-12;
    let monotone = points.windows(2).all(|w| {
        let (lo, hi) = (&w[0], &w[1]);
        // The dominant side is LBS below parity and RWA above it.
        if hi.total_rwa <= 1000.0 {
            hi.w_lbs < lo.w_lbs
        } else {
            hi.w_rwa > lo.w_rwa
        }
    });
    outcome(
        mid_ok && monotone,
        format!(
            "at 1000: w = ({}, {}), beta = {}; dominant-side rate strictly monotone: {monotone}",
            mid.w_rwa, mid.w_lbs, mid.beta
        ),
    )
}

fn criterion_5() -> Outcome {
    let t = experiments::table2().unwrap();
    // Independent recomputation of the revenue model.
    let p = Portfolio::table1();
    let returns_ok = p
        .units()
        .iter()
        .zip(&t.returns)
        .all(|(u, r)| (r - u.revenue / (u.rwa_capital + u.lbs_capital)).abs() < 1e-15);
    let pass = returns_ok
        && (t.lambda - 8.28).abs() <= 0.05
        && (t.thresholds[0] - 0.0365).abs() <= 0.0005
        && (t.thresholds[1] - 0.0879).abs() <= 0.0005;
    outcome(
        pass,
        format!(
            "lambda {:.4}, thresholds ({:.5}, {:.5}), returns match revenue/(a+b): {returns_ok}",
            t.lambda, t.thresholds[0], t.thresholds[1]
        ),
    )
}

fn criterion_6() -> Outcome {
    let panels = experiments::table3(experiments::DEFAULT_EPSILON).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for panel in &panels {
        let r = &panel.report;
        let s = &r.solution;
        let ok = match panel.label {
            "identity_z0" => {
                let rwa_up = (0..5).all(|k| s.delta[2 * k] > 0.0);
                let lbs_down = (0..5).all(|k| s.delta[2 * k + 1] < 0.0);
                rwa_up && lbs_down && s.capital_change < 0.0
            }
            "rho095_z0" => {
                let change = r.allocation_change();
                let argmax = (0..5).max_by(|&i, &j| change[i].total_cmp(&change[j])).unwrap();
                let argmin = (0..5).min_by(|&i, &j| change[i].total_cmp(&change[j])).unwrap();
                r.unit_ids[argmax] == "B" && r.unit_ids[argmin] == "E"
            }
            _ => s.capital_change > 0.0,
        };
        pass &= ok;
        detail.push(format!(
            "{}/{} {} (w.delta {:.4})",
            panel.label,
            r.solver,
            if ok { "ok" } else { "violated" },
            s.capital_change
        ));
    }
    outcome(pass, detail.join(", "))
}

fn random_spd(m: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let g: DMatrix<f64> = DMatrix::from_fn(m, m, |_, _| StandardNormal.sample(rng));
    &g * g.transpose() / m as f64 + DMatrix::identity(m, m) * 0.2
}

/// Solves the bordered system `[[J + eps V^-1, -r], [r^T, 0]] [delta; lambda]
/// = [-(w + J h); z]` directly.
fn kkt_oracle(p: &OptimizationProblem) -> (DVector<f64>, f64) {
    let m = p.h.len();
    let v_inv = p.covariance.matrix().clone().try_inverse().unwrap();
    let mut k = DMatrix::zeros(m + 1, m + 1);
    k.view_mut((0, 0), (m, m)).copy_from(&(&p.jacobian + v_inv * p.epsilon));
    for i in 0..m {
        k[(i, m)] = -p.r[i];
        k[(m, i)] = p.r[i];
    }
    let mut rhs = DVector::zeros(m + 1);
    rhs.rows_mut(0, m).copy_from(&(-(&p.w + &p.jacobian * &p.h)));
    rhs[m] = p.z;
    let x = k.lu().solve(&rhs).unwrap();
    (x.rows(0, m).into_owned(), x[m])
}

fn criterion_7() -> Outcome {
    let mut rng = substream_rng(2024, 0);
    let m = 10;
    let mut worst_kkt = 0.0f64;
    let mut worst_crude = 0.0f64;
    let mut worst_residual = 0.0f64;
    let mut pass = true;
    for inst in 0..100 {
        let epsilon = [0.01, 0.1, 1.0][inst % 3];
        let g: DMatrix<f64> = DMatrix::from_fn(m, m, |_, _| StandardNormal.sample(&mut rng));
        let jacobian = (&g + g.transpose()) * 0.05;
        let z = 4.0 * (rng.random::<f64>() - 0.5);
        let cov = CovarianceModel::new(random_spd(m, &mut rng), Provenance::Synthetic).unwrap();
        let problem = OptimizationProblem::new(
            DVector::from_fn(m, |_, _| 1.0 + rng.random::<f64>()),
            DVector::from_fn(m, |_, _| 0.01 + 0.2 * rng.random::<f64>()),
            cov,
            epsilon,
            z,
            DVector::from_fn(m, |_, _| rng.random::<f64>()),
            jacobian,
        )
        .unwrap();
        let sol = solve_local_optimum(&problem).unwrap();
        let (delta, lambda) = kkt_oracle(&problem);
        let err = (&sol.delta - &delta).amax() / (1.0 + delta.amax());
        let lerr = (sol.lambda - lambda).abs() / (1.0 + lambda.abs());
        worst_kkt = worst_kkt.max(err).max(lerr);
        worst_residual = worst_residual.max(sol.constraint_residual / (1.0 + z.abs()));

        let mut flat = problem.clone();
        flat.jacobian = DMatrix::zeros(m, m);
        let full = solve_local_optimum(&flat).unwrap();
        let crude = solve_crude(&flat.h, &flat.r, &flat.covariance, &flat.w, flat.z, flat.epsilon).unwrap();
        let cerr = (&full.delta - &crude.delta).amax() / (1.0 + full.delta.amax());
        worst_crude = worst_crude.max(cerr).max((full.lambda - crude.lambda).abs() / (1.0 + full.lambda.abs()));
        worst_residual = worst_residual
            .max(full.constraint_residual / (1.0 + z.abs()))
            .max(crude.constraint_residual / (1.0 + z.abs()));
    }
    pass &= worst_kkt <= 1e-8 && worst_crude <= 1e-10 && worst_residual <= 1e-8;
    outcome(
        pass,
        format!(
            "100 instances: max rel KKT diff {worst_kkt:.2e}, max crude-vs-full {worst_crude:.2e}, max residual/(1+|z|) {worst_residual:.2e}"
        ),
    )
}

fn criterion_8() -> Outcome {
    let exact = indicator_moments(6).unwrap();
    let exact_ok = exact.mean == 0.5 && exact.pair_second_moment == 1.0 / 3.0 && exact.pair_covariance == 1.0 / 12.0;
    let s = sample_indicator_moments(6, 100_000, 8).unwrap();
    let z = [
        (s.estimate.mean - 0.5) / s.stderr.mean,
        (s.estimate.pair_second_moment - 1.0 / 3.0) / s.stderr.pair_second_moment,
        (s.estimate.pair_covariance - 1.0 / 12.0) / s.stderr.pair_covariance,
    ];
    let within = z.iter().all(|v| v.abs() <= 3.0);
    outcome(
        exact_ok && within,
        format!(
            "exact values returned exactly: {exact_ok}; sampled ({:.5}, {:.5}, {:.5}) with z-scores ({:.2}, {:.2}, {:.2})",
            s.estimate.mean, s.estimate.pair_second_moment, s.estimate.pair_covariance, z[0], z[1], z[2]
        ),
    )
}

fn random_hierarchy(rng: &mut impl Rng) -> HierarchyComponents {
    let mut draw = || rng.random_range(50.0..=250.0);
    let consolidated = ComponentPair {
        f: (0..4).map(|_| draw()).collect(),
        g: (0..4).map(|_| draw()).collect(),
    };
    let membership = vec![Some(0), Some(0), Some(1), Some(1)];
    let subsidiaries = (0..2)
        .map(|e| {
            let mut f = vec![0.0; 4];
            let mut g = vec![0.0; 4];
            for k in 0..4 {
                if membership[k] == Some(e) {
                    f[k] = draw();
                    g[k] = draw();
                }
            }
            ComponentPair { f, g }
        })
        .collect();
    HierarchyComponents::new(consolidated, subsidiaries, membership).unwrap()
}

fn criterion_9() -> Outcome {
    let mut rng = substream_rng(99, 0);
    let mut failures = Vec::new();
    let rel = |x: f64, y: f64| (x - y).abs() <= 1e-10 * y.abs().max(1.0);

    for fixture in 0..10 {
        let n = 3 + fixture % 6;
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..100.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..100.0)).collect();
        let total = a.iter().sum::<f64>().max(b.iter().sum());
        let cost = AdditiveMaxCost::new(a.clone(), b.clone()).unwrap();
        let allocations = [
            standalone_allocation(&a, &b).unwrap(),
            euler_allocation(&a, &b).unwrap(),
            shapley_allocation(&cost).unwrap(),
            mc_shapley_allocation(&cost, 5_000, fixture as u64).unwrap().0,
            linear_max_allocation(&a, &b).unwrap().allocation,
        ];
        for alloc in &allocations {
            if !rel(alloc.total(), total) {
                failures.push(format!("efficiency {} fixture {fixture}", alloc.method));
            }
        }

        let base = linear_max_allocation(&a, &b).unwrap();
        for t in [0.1, 3.0] {
            let sa: Vec<f64> = a.iter().map(|x| x * t).collect();
            let sb: Vec<f64> = b.iter().map(|x| x * t).collect();
            let scaled = linear_max_allocation(&sa, &sb).unwrap();
            let same = |x: f64, y: f64| (x - y).abs() <= 1e-12 * y.abs().max(1.0);
            let ok = same(scaled.stats.p, base.stats.p)
                && same(scaled.rates.beta, base.rates.beta)
                && scaled.rates.weights.iter().zip(&base.rates.weights).all(|(x, y)| same(*x, *y));
            if !ok {
                failures.push(format!("scale invariance t={t} fixture {fixture}"));
            }
        }

        let h = single_max_components(&a, &b);
        let w = AllocationModel::SingleMax.exchange_rates(&h).unwrap();
        let j = exchange_rate_jacobian(&h, &AllocationModel::SingleMax).unwrap();
        let jh = (&j * &h).norm();
        if jh > 1e-8 * w.norm() {
            failures.push(format!("J h = {jh:e} fixture {fixture}"));
        }
    }

    for fixture in 0..10u64 {
        let comps = random_hierarchy(&mut rng);
        let total = comps.total_cost();
        let (alloc, rates) = hierarchy_allocation(&comps, 20_000, fixture).unwrap();
        if !rel(alloc.total(), total) {
            failures.push(format!("efficiency hierarchy fixture {fixture}"));
        }
        for t in [0.1, 3.0] {
            let scale = |p: &ComponentPair| ComponentPair {
                f: p.f.iter().map(|x| x * t).collect(),
                g: p.g.iter().map(|x| x * t).collect(),
            };
            let scaled = HierarchyComponents::new(
                scale(&comps.consolidated),
                comps.subsidiaries.iter().map(scale).collect(),
                comps.membership.clone(),
            )
            .unwrap();
            let (_, sr) = hierarchy_allocation(&scaled, 20_000, fixture).unwrap();
            let ok = (sr.beta - rates.beta).abs() <= 1e-12 * rates.beta.abs()
                && sr.weights.iter().zip(&rates.weights).all(|(x, y)| (x - y).abs() <= 1e-12 * y.abs().max(1.0));
            if !ok {
                failures.push(format!("hierarchy scale invariance t={t} fixture {fixture}"));
            }
        }
        let jp = hierarchy_joint_probabilities(&comps, 20_000, fixture).unwrap();
        let hc = &jp.half_counts;
        let regimes = hc[0] + hc[1] + hc[2] + hc[3];
        if regimes != 2 * jp.samples || hc[2] + hc[3] != hc[4] + hc[5] {
            failures.push(format!("partition identities fixture {fixture}: {hc:?}"));
        }
    }
    let pass = failures.is_empty();
    let detail = if pass {
        "efficiency (6 methods), scale invariance t in {0.1, 3}, J h = 0, partition identities: all hold".to_string()
    } else {
        failures.join("; ")
    };
    outcome(pass, detail)
}

fn criterion_10() -> Outcome {
    let mut rng = substream_rng(7, 0);
    let mut corrs = Vec::new();
    let mut all_lin = Vec::new();
    let mut all_exact = Vec::new();
    for fixture in 0..20u64 {
        let comps = random_hierarchy(&mut rng);
        let cost = NestedMaxCost::new(comps.clone());
        // 2^4 cached subset costs, 4! orders.
        let cached: Vec<f64> = (0..16u32)
            .map(|mask| {
                let members: Vec<usize> = (0..4).filter(|k| mask & (1 << k) != 0).collect();
                capalloc_core::SetCost::cost(&cost, &members)
            })
            .collect();
        let exact = brute_force_shapley(4, |s| cached[s.iter().fold(0usize, |m, &k| m | 1 << k)]);
        let (alloc, _) = hierarchy_allocation(&comps, 100_000, fixture).unwrap();
        corrs.push(correlation(&alloc.values, &exact));
        all_lin.extend(alloc.values);
        all_exact.extend(exact);
    }
    let mean = corrs.iter().sum::<f64>() / corrs.len() as f64;
    let min = corrs.iter().copied().fold(f64::INFINITY, f64::min);
    let pooled = correlation(&all_lin, &all_exact);
    outcome(
        mean >= 0.99,
        format!("mean per-fixture corr {mean:.4} (min {min:.4}); pooled corr over all units {pooled:.4}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("1 five-unit golden columns", criterion_1),
        ("2 linear vs Shapley correlation sweep", criterion_2),
        ("3 VaR linearization correlation sweep", criterion_3),
        ("4 exchange-rate sweep", criterion_4),
        ("5 RoC thresholds and lambda", criterion_5),
        ("6 optimization sign properties", criterion_6),
        ("7 optimizer against dense KKT oracle", criterion_7),
        ("8 indicator moments", criterion_8),
        ("9 invariant suite", criterion_9),
        ("10 hierarchy accuracy", criterion_10),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!("[{}] criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
