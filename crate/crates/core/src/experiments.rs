//! Reproducible experiments and the run drivers behind the command line.
//!
//! Every experiment returns structured results and writes plain CSV files.
//! Random draws come from [`substream_rng`] keyed on the experiment seed, so
//! a fixed `(name, seed, samples)` always yields identical files.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DVector;

use crate::allocation::{
    euler_allocation, hierarchy_allocation, linear_max_allocation, mc_shapley_allocation,
    shapley_allocation, standalone_allocation, ComponentAllocation, LinearMaxAllocation,
};
use crate::cost::{AdditiveMaxCost, HierarchyComponents, NestedMaxCost, PnlGenerator, VarCost};
use crate::error::{Error, Result};
use crate::optimizer::{
    estimate_covariance, hierarchy_components_vector, read_series_csv, roc_vector,
    single_max_components, synthetic_covariance, AllocationModel, CovarianceModel,
    OptimizationProblem,
};
use crate::permutation::{exact_shapley, mc_shapley, random_prefix, substream_rng, SetCost, DEFAULT_ENUMERATION_CAP};
use crate::portfolio::Portfolio;
use crate::report::{create, num, AllocationReport, OptimizationReport};
use crate::stats::{correlation, mean, std_dev};

pub const DEFAULT_MC_SAMPLES: u64 = 100_000;
/// Monte Carlo draws per VaR allocation in the VaR linearization sweep.
pub const DEFAULT_VAR_MC_SAMPLES: u64 = 2_000;
pub const DEFAULT_EPSILON: f64 = 0.1;
pub const VAR_LEVEL: f64 = 0.99;
pub const SWEEP_SIZES: [usize; 10] = [5, 10, 15, 20, 25, 30, 35, 40, 45, 50];
pub const DRAWS_PER_SIZE: usize = 20;
pub const PREFIXES_PER_DRAW: usize = 2_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentName {
    Table1,
    Table2,
    Table3,
    Fig1,
    Fig2,
    Fig3,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 6] = [
        ExperimentName::Table1,
        ExperimentName::Table2,
        ExperimentName::Table3,
        ExperimentName::Fig1,
        ExperimentName::Fig2,
        ExperimentName::Fig3,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentName::Table1 => "table1",
            ExperimentName::Table2 => "table2",
            ExperimentName::Table3 => "table3",
            ExperimentName::Fig1 => "fig1",
            ExperimentName::Fig2 => "fig2",
            ExperimentName::Fig3 => "fig3",
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| {
                Error::validation(format!(
                    "unknown experiment `{s}` (expected one of table1, table2, table3, fig1, fig2, fig3)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: ExperimentName,
    pub seed: u64,
    /// Monte Carlo sample count; `None` picks the experiment's default.
    pub samples: Option<u64>,
    pub out_dir: PathBuf,
}

/// Runs one experiment and returns the files written.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<PathBuf>> {
    let dir = spec.out_dir.as_path();
    std::fs::create_dir_all(dir)?;
    match spec.name {
        ExperimentName::Table1 => write_table1(&table1()?, dir),
        ExperimentName::Table2 => write_table2(&table2()?, dir),
        ExperimentName::Table3 => write_table3(&table3(DEFAULT_EPSILON)?, dir),
        ExperimentName::Fig1 => {
            let samples = spec.samples.unwrap_or(DEFAULT_MC_SAMPLES);
            let points = fig1(spec.seed, samples, &SWEEP_SIZES, DRAWS_PER_SIZE)?;
            write_correlation_points(&points, &dir.join("fig1.csv"))
        }
        ExperimentName::Fig2 => {
            let samples = spec.samples.unwrap_or(DEFAULT_VAR_MC_SAMPLES);
            let points = fig2(spec.seed, samples, &SWEEP_SIZES, DRAWS_PER_SIZE, PREFIXES_PER_DRAW)?;
            write_correlation_points(&points, &dir.join("fig2.csv"))
        }
        ExperimentName::Fig3 => write_fig3(&fig3()?, dir),
    }
}

#[derive(Debug, Clone)]
pub struct Table1Result {
    pub ids: Vec<String>,
    pub revenue: Vec<f64>,
    pub rwa: Vec<f64>,
    pub lbs: Vec<f64>,
    pub standalone: ComponentAllocation,
    pub euler: ComponentAllocation,
    pub shapley: ComponentAllocation,
    pub linear: LinearMaxAllocation,
}

pub fn table1() -> Result<Table1Result> {
    let p = Portfolio::table1();
    let (a, b) = (p.rwa_capital(), p.lbs_capital());
    Ok(Table1Result {
        ids: p.ids(),
        revenue: p.revenue(),
        standalone: standalone_allocation(&a, &b)?,
        euler: euler_allocation(&a, &b)?,
        shapley: shapley_allocation(&AdditiveMaxCost::new(a.clone(), b.clone())?)?,
        linear: linear_max_allocation(&a, &b)?,
        rwa: a,
        lbs: b,
    })
}

fn write_table1(t: &Table1Result, dir: &Path) -> Result<Vec<PathBuf>> {
    let path = dir.join("table1.csv");
    let mut out = create(&path)?;
    let columns = [&t.standalone, &t.euler, &t.shapley, &t.linear.allocation];
    out.write_record([
        "unit_id", "revenue", "rwa", "lbs", "standalone", "euler", "shapley", "linear",
        "roc_standalone", "roc_euler", "roc_shapley", "roc_linear",
    ])?;
    let rocs: Vec<Vec<f64>> = columns.iter().map(|c| c.roc(&t.revenue)).collect();
    for k in 0..t.ids.len() {
        let mut row = vec![t.ids[k].clone(), num(t.revenue[k]), num(t.rwa[k]), num(t.lbs[k])];
        row.extend(columns.iter().map(|c| num(c.values[k])));
        row.extend(rocs.iter().map(|r| num(r[k])));
        out.write_record(&row)?;
    }
    let revenue: f64 = t.revenue.iter().sum();
    let mut row = vec![
        "total".to_string(),
        num(revenue),
        num(t.rwa.iter().sum()),
        num(t.lbs.iter().sum()),
    ];
    row.extend(columns.iter().map(|c| num(c.total())));
    row.extend(columns.iter().map(|c| num(revenue / c.total())));
    out.write_record(&row)?;
    out.flush()?;
    Ok(vec![path])
}

#[derive(Debug, Clone)]
pub struct Table2Result {
    pub ids: Vec<String>,
    /// Return per unit, shared by its RWA and LBS components.
    pub returns: Vec<f64>,
    /// `[w_rwa, w_lbs]`.
    pub weights: [f64; 2],
    pub lambda: f64,
    /// `[w_rwa / lambda, w_lbs / lambda]`.
    pub thresholds: [f64; 2],
}

/// Crude solve on the built-in five-unit portfolio with `V = I`, `z = 0`, `eps = 0.1`.
pub fn table2() -> Result<Table2Result> {
    let p = Portfolio::table1();
    let report = optimize_portfolio(
        &p,
        &CovarianceSource::Identity,
        DEFAULT_EPSILON,
        0.0,
        Solver::Crude,
        &RunConfig::default(),
    )?;
    let lambda = report.solution.lambda;
    let weights = [report.w[0], report.w[1]];
    Ok(Table2Result {
        ids: p.ids(),
        returns: report.r.iter().step_by(2).copied().collect(),
        weights,
        lambda,
        thresholds: [weights[0] / lambda, weights[1] / lambda],
    })
}

fn write_table2(t: &Table2Result, dir: &Path) -> Result<Vec<PathBuf>> {
    let path = dir.join("table2.csv");
    let mut out = create(&path)?;
    out.write_record(["unit_id", "return", "above_rwa_threshold", "above_lbs_threshold"])?;
    for (id, r) in t.ids.iter().zip(&t.returns) {
        out.write_record([
            id.clone(),
            num(*r),
            (*r > t.thresholds[0]).to_string(),
            (*r > t.thresholds[1]).to_string(),
        ])?;
    }
    out.flush()?;
    let summary = dir.join("table2_summary.csv");
    let mut out = create(&summary)?;
    out.write_record(["key", "value"])?;
    for (k, v) in [
        ("lambda", t.lambda),
        ("w_rwa", t.weights[0]),
        ("w_lbs", t.weights[1]),
        ("threshold_rwa", t.thresholds[0]),
        ("threshold_lbs", t.thresholds[1]),
    ] {
        out.write_record([k.to_string(), num(v)])?;
    }
    out.flush()?;
    Ok(vec![path, summary])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Full,
    Crude,
}

impl Solver {
    pub fn as_str(&self) -> &'static str {
        match self {
            Solver::Full => "full",
            Solver::Crude => "crude",
        }
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Solver::Full),
            "crude" => Ok(Solver::Crude),
            other => Err(Error::validation(format!(
                "unknown solver `{other}` (expected full or crude)"
            ))),
        }
    }
}

/// Where the optimizer's covariance comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum CovarianceSource {
    Identity,
    /// Per-pair correlation `rho` with unit variances.
    Rho(f64),
    /// Historical component series, one column per component in `h` order.
    File(PathBuf),
}

impl FromStr for CovarianceSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "identity" {
            return Ok(CovarianceSource::Identity);
        }
        if let Some(rho) = s.strip_prefix("rho=") {
            return rho
                .parse()
                .map(CovarianceSource::Rho)
                .map_err(|_| Error::validation(format!("bad correlation in `{s}`")));
        }
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(CovarianceSource::File(PathBuf::from(path)));
        }
        Err(Error::validation(format!(
            "unknown covariance source `{s}` (expected identity, rho=<value> or file:<path>)"
        )))
    }
}

impl CovarianceSource {
    pub fn resolve(&self, dim: usize, shrinkage: f64) -> Result<CovarianceModel> {
        match self {
            CovarianceSource::Identity => Ok(CovarianceModel::identity(dim)),
            CovarianceSource::Rho(rho) => {
                if dim % 2 != 0 {
                    return Err(Error::validation("pairwise covariance needs an even dimension"));
                }
                synthetic_covariance(dim / 2, *rho, 1.0)
            }
            CovarianceSource::File(path) => {
                let (ids, series) = read_series_csv(path)?;
                if ids.len() != dim {
                    return Err(Error::DimensionMismatch {
                        context: "covariance series columns",
                        expected: dim,
                        found: ids.len(),
                    });
                }
                estimate_covariance(&series, shrinkage)
            }
        }
    }
}

/// Sampling settings for hierarchy models and covariance estimation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub samples: u64,
    pub seed: u64,
    pub shrinkage: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            samples: DEFAULT_MC_SAMPLES,
            seed: 0,
            shrinkage: 0.0,
        }
    }
}

/// Component vector, allocation model and per-unit component labels of a
/// portfolio: the nested model when it has subsidiaries, the single max
/// otherwise.
pub fn portfolio_model(p: &Portfolio, config: &RunConfig) -> Result<(DVector<f64>, AllocationModel, Vec<String>)> {
    if p.has_hierarchy() {
        let comps = HierarchyComponents::from_portfolio(p)?;
        let labels = comps.component_names(&p.tree().subsidiaries);
        let model = AllocationModel::Hierarchy {
            membership: comps.membership.clone(),
            subsidiaries: comps.subsidiaries.len(),
            samples: config.samples,
            seed: config.seed,
        };
        Ok((hierarchy_components_vector(&comps), model, labels))
    } else {
        Ok((
            single_max_components(&p.rwa_capital(), &p.lbs_capital()),
            AllocationModel::SingleMax,
            vec!["rwa".into(), "lbs".into()],
        ))
    }
}

/// Runs the local capital optimization on a portfolio.
pub fn optimize_portfolio(
    p: &Portfolio,
    cov: &CovarianceSource,
    epsilon: f64,
    z: f64,
    solver: Solver,
    config: &RunConfig,
) -> Result<OptimizationReport> {
    let (h, model, labels) = portfolio_model(p, config)?;
    let (r, _) = roc_vector(&p.revenue(), &h, labels.len())?;
    let covariance = cov.resolve(h.len(), config.shrinkage)?;
    let problem = match solver {
        Solver::Full => OptimizationProblem::from_model(h.clone(), r.clone(), covariance, epsilon, z, &model)?,
        Solver::Crude => {
            let w = model.exchange_rates(&h)?;
            let m = h.len();
            OptimizationProblem::new(h.clone(), r.clone(), covariance, epsilon, z, w, nalgebra::DMatrix::zeros(m, m))?
        }
    };
    let solution = match solver {
        Solver::Full => problem.solve()?,
        Solver::Crude => problem.solve_crude()?,
    };
    let moved = &h + &solution.delta;
    let allocation_before = model.unit_allocations(&h)?;
    let allocation_after = model.unit_allocations(&moved)?;
    let realized_change = model.total_capital(&moved)? - model.total_capital(&h)?;
    Ok(OptimizationReport {
        solver: solver.as_str().to_string(),
        unit_ids: p.ids(),
        component_labels: labels,
        h,
        w: problem.w,
        r,
        solution,
        allocation_before,
        allocation_after,
        realized_change,
    })
}

/// Allocation method selectable from the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AllocateMethod {
    Standalone,
    Euler,
    Shapley,
    Mc,
    Linear,
    Hierarchy,
}

impl FromStr for AllocateMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "standalone" => AllocateMethod::Standalone,
            "euler" => AllocateMethod::Euler,
            "shapley" => AllocateMethod::Shapley,
            "mc" => AllocateMethod::Mc,
            "linear" => AllocateMethod::Linear,
            "hierarchy" => AllocateMethod::Hierarchy,
            other => {
                return Err(Error::validation(format!(
                    "unknown method `{other}` (expected standalone, euler, shapley, mc, linear or hierarchy)"
                )))
            }
        })
    }
}

/// Allocates a portfolio's capital with `method`. Shapley methods use the
/// nested cost when the portfolio has subsidiaries.
pub fn allocate_portfolio(p: &Portfolio, method: AllocateMethod, config: &RunConfig) -> Result<AllocationReport> {
    let (a, b) = (p.rwa_capital(), p.lbs_capital());
    let single = |allocation, rates| AllocationReport {
        unit_ids: p.ids(),
        component_names: vec!["rwa".into(), "lbs".into()],
        inputs: vec![a.clone(), b.clone()],
        allocation,
        stderr: None,
        rates,
    };
    let hierarchy = |allocation, stderr, rates| -> Result<AllocationReport> {
        let comps = HierarchyComponents::from_portfolio(p)?;
        Ok(AllocationReport {
            unit_ids: p.ids(),
            component_names: comps.component_names(&p.tree().subsidiaries),
            inputs: (0..comps.n_components()).map(|j| comps.component(j).to_vec()).collect(),
            allocation,
            stderr,
            rates,
        })
    };
    match method {
        AllocateMethod::Standalone => Ok(single(standalone_allocation(&a, &b)?, None)),
        AllocateMethod::Euler => Ok(single(euler_allocation(&a, &b)?, None)),
        AllocateMethod::Linear => {
            let lin = linear_max_allocation(&a, &b)?;
            Ok(single(lin.allocation, Some(lin.rates)))
        }
        AllocateMethod::Hierarchy => {
            let comps = HierarchyComponents::from_portfolio(p)?;
            let (alloc, rates) = hierarchy_allocation(&comps, config.samples, config.seed)?;
            hierarchy(alloc, None, Some(rates))
        }
        AllocateMethod::Shapley | AllocateMethod::Mc => {
            let nested;
            let additive;
            let cost: &dyn SetCost = if p.has_hierarchy() {
                nested = NestedMaxCost::new(HierarchyComponents::from_portfolio(p)?);
                &nested
            } else {
                additive = AdditiveMaxCost::new(a.clone(), b.clone())?;
                &additive
            };
            let (alloc, stderr) = if method == AllocateMethod::Shapley {
                (shapley_allocation(cost)?, None)
            } else {
                let (alloc, est) = mc_shapley_allocation(cost, config.samples, config.seed)?;
                (alloc, Some(est.stderr))
            };
            if p.has_hierarchy() {
                hierarchy(alloc, stderr, None)
            } else {
                let mut report = single(alloc, None);
                report.stderr = stderr;
                Ok(report)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table3Panel {
    pub label: &'static str,
    pub rho: f64,
    pub z: f64,
    pub report: OptimizationReport,
}

pub const TABLE3_PANELS: [(&str, f64, f64); 3] = [
    ("identity_z0", 0.0, 0.0),
    ("rho095_z0", 0.95, 0.0),
    ("rho095_z2", 0.95, 2.0),
];

/// The three optimization panels on the built-in five-unit portfolio, each with the
/// full and the crude solver.
pub fn table3(epsilon: f64) -> Result<Vec<Table3Panel>> {
    let p = Portfolio::table1();
    let mut panels = Vec::new();
    for (label, rho, z) in TABLE3_PANELS {
        let cov = if rho == 0.0 {
            CovarianceSource::Identity
        } else {
            CovarianceSource::Rho(rho)
        };
        for solver in [Solver::Full, Solver::Crude] {
            panels.push(Table3Panel {
                label,
                rho,
                z,
                report: optimize_portfolio(&p, &cov, epsilon, z, solver, &RunConfig::default())?,
            });
        }
    }
    Ok(panels)
}

fn write_table3(panels: &[Table3Panel], dir: &Path) -> Result<Vec<PathBuf>> {
    let path = dir.join("table3.csv");
    let mut out = create(&path)?;
    out.write_record(["panel", "solver", "unit_id", "delta_rwa", "delta_lbs", "delta_total", "allocation_change"])?;
    for panel in panels {
        let r = &panel.report;
        let change = r.allocation_change();
        for (k, id) in r.unit_ids.iter().enumerate() {
            let (da, db) = (r.solution.delta[2 * k], r.solution.delta[2 * k + 1]);
            out.write_record([
                panel.label.to_string(),
                r.solver.clone(),
                id.clone(),
                num(da),
                num(db),
                num(da + db),
                num(change[k]),
            ])?;
        }
    }
    out.flush()?;
    let summary = dir.join("table3_summary.csv");
    let mut out = create(&summary)?;
    out.write_record(["panel", "solver", "rho", "z", "lambda", "capital_change", "realized_change", "kkt_stationarity", "constraint_residual", "mahalanobis"])?;
    for panel in panels {
        let s = &panel.report.solution;
        out.write_record([
            panel.label.to_string(),
            panel.report.solver.clone(),
            num(panel.rho),
            num(panel.z),
            num(s.lambda),
            num(s.capital_change),
            num(panel.report.realized_change),
            num(s.kkt_stationarity),
            num(s.constraint_residual),
            num(s.mahalanobis),
        ])?;
    }
    out.flush()?;
    Ok(vec![path, summary])
}

/// Summary of per-draw correlations at one portfolio size.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationPoint {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub draws: usize,
}

fn summarize(n: usize, corr: &[f64]) -> CorrelationPoint {
    CorrelationPoint {
        n,
        mean: mean(corr),
        std: if corr.len() > 1 { std_dev(corr) } else { 0.0 },
        min: corr.iter().copied().fold(f64::INFINITY, f64::min),
        draws: corr.len(),
    }
}

fn draw_stream(n: usize, draw: usize) -> u64 {
    (n as u64) << 32 | draw as u64
}

fn shapley_values(cost: &dyn SetCost, samples: u64, seed: u64) -> Result<Vec<f64>> {
    if cost.len() <= DEFAULT_ENUMERATION_CAP {
        Ok(exact_shapley(cost)?.values)
    } else {
        Ok(mc_shapley(cost, samples, seed)?.values)
    }
}

/// Correlation between the linear allocation and the Shapley allocation
/// (exact up to the enumeration cap, Monte Carlo beyond) for portfolios with
/// i.i.d. uniform(0, 1) components.
pub fn fig1(seed: u64, samples: u64, sizes: &[usize], draws: usize) -> Result<Vec<CorrelationPoint>> {
    use rand::Rng;
    sizes
        .iter()
        .map(|&n| {
            let corr = (0..draws)
                .map(|d| {
                    let stream = draw_stream(n, d);
                    let mut rng = substream_rng(seed, stream);
                    let a: Vec<f64> = (0..n).map(|_| rng.random()).collect();
                    let b: Vec<f64> = (0..n).map(|_| rng.random()).collect();
                    let lin = linear_max_allocation(&a, &b)?;
                    let cost = AdditiveMaxCost::new(a, b)?;
                    let shap = shapley_values(&cost, samples, seed ^ stream)?;
                    Ok(correlation(&lin.allocation.values, &shap))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(summarize(n, &corr))
        })
        .collect()
}

/// Correlation between historical VaR `c(S)` and its linearization
/// `l(S) = sum_{k in S} alpha_k` over random permutation prefixes, where
/// `alpha` is the Shapley allocation of VaR on the full portfolio.
pub fn fig2(seed: u64, samples: u64, sizes: &[usize], draws: usize, prefixes: usize) -> Result<Vec<CorrelationPoint>> {
    let generator = PnlGenerator::default();
    sizes
        .iter()
        .map(|&n| {
            let corr = (0..draws)
                .map(|d| {
                    let stream = draw_stream(n, d);
                    let mut rng = substream_rng(seed, stream);
                    let cost = VarCost::new(generator.generate(n, &mut rng)?, VAR_LEVEL)?;
                    let alpha = shapley_values(&cost, samples, seed ^ stream)?;
                    let mut order: Vec<usize> = (0..n).collect();
                    let mut c = Vec::with_capacity(prefixes);
                    let mut l = Vec::with_capacity(prefixes);
                    for _ in 0..prefixes {
                        let cut = random_prefix(&mut rng, &mut order, false);
                        let members = &order[..cut];
                        c.push(cost.cost(members));
                        l.push(members.iter().map(|&k| alpha[k]).sum());
                    }
                    Ok(correlation(&c, &l))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(summarize(n, &corr))
        })
        .collect()
}

fn write_correlation_points(points: &[CorrelationPoint], path: &Path) -> Result<Vec<PathBuf>> {
    let mut out = create(path)?;
    out.write_record(["n", "mean_correlation", "std_correlation", "min_correlation", "draws"])?;
    for p in points {
        out.write_record([p.n.to_string(), num(p.mean), num(p.std), num(p.min), p.draws.to_string()])?;
    }
    out.flush()?;
    Ok(vec![path.to_path_buf()])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fig3Point {
    pub total_rwa: f64,
    pub total_lbs: f64,
    pub p: f64,
    pub beta: f64,
    pub w_rwa: f64,
    pub w_lbs: f64,
}

/// Exchange rates as the built-in portfolio's RWA capital is rescaled to totals
/// 500, 550, ..., 1500 with LBS capital fixed.
pub fn fig3() -> Result<Vec<Fig3Point>> {
    let p = Portfolio::table1();
    let base = p.rwa_capital();
    let base_total: f64 = base.iter().sum();
    let lbs = p.lbs_capital();
    let total_lbs: f64 = lbs.iter().sum();
    (0..=20)
        .map(|i| {
            let target = 500.0 + 50.0 * i as f64;
            let mut a: Vec<f64> = base.iter().map(|x| x * target / base_total).collect();
            let last = a.len() - 1;
            a[last] = target - a[..last].iter().sum::<f64>();
            let lin = linear_max_allocation(&a, &lbs)?;
            Ok(Fig3Point {
                total_rwa: target,
                total_lbs,
                p: lin.stats.p,
                beta: lin.rates.beta,
                w_rwa: lin.rates.weights[0],
                w_lbs: lin.rates.weights[1],
            })
        })
        .collect()
}

fn write_fig3(points: &[Fig3Point], dir: &Path) -> Result<Vec<PathBuf>> {
    let path = dir.join("fig3.csv");
    let mut out = create(&path)?;
    out.write_record(["total_rwa", "total_lbs", "p", "beta", "w_rwa", "w_lbs"])?;
    for q in points {
        out.write_record([q.total_rwa, q.total_lbs, q.p, q.beta, q.w_rwa, q.w_lbs].map(num))?;
    }
    out.flush()?;
    Ok(vec![path])
}
