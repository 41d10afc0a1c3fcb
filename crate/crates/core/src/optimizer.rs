//! Reduced-form local capital optimization.
//!
//! Minimizes `w^T (h + delta) + eps/2 delta^T V^-1 delta` subject to
//! `r^T delta = z`, where `h` stacks the allocated capital components of
//! every unit, `w` are the exchange rates at `h`, `r` the returns on each
//! component and `V` the covariance of daily component changes.
//!
//! Vectors over components are unit-major: for the single-entity model
//! `h = [rwa_1, lbs_1, rwa_2, lbs_2, ...]`, so `V` built per unit is block
//! diagonal.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::allocation::{hierarchy_allocation, linear_max_allocation};
use crate::cost::{nested_value, ComponentPair, HierarchyComponents};
use crate::error::{Error, Result};
use crate::stats::normal_pdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Historical,
    Synthetic,
}

/// Symmetric positive-definite covariance of component changes.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    matrix: DMatrix<f64>,
    provenance: Provenance,
    /// Diagonal ridge added to reach positive definiteness.
    ridge: f64,
}

impl CovarianceModel {
    pub fn new(matrix: DMatrix<f64>, provenance: Provenance) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::validation("covariance matrix must be square and non-empty"));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("covariance matrix has non-finite entries"));
        }
        let scale = matrix.amax().max(1.0);
        let m = matrix.nrows();
        for i in 0..m {
            for j in 0..i {
                if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::validation(format!(
                        "covariance matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let sym = (&matrix + matrix.transpose()) * 0.5;
        let (matrix, ridge) = regularize(sym)?;
        Ok(CovarianceModel {
            matrix,
            provenance,
            ridge,
        })
    }

    pub fn identity(m: usize) -> Self {
        CovarianceModel {
            matrix: DMatrix::identity(m, m),
            provenance: Provenance::Synthetic,
            ridge: 0.0,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        self.matrix
            .clone()
            .cholesky()
            .map(|c| c.inverse())
            .ok_or_else(|| Error::SingularSystem("covariance is not positive definite".into()))
    }
}

/// Adds `1e-10 * trace` (or `1e-10` for a zero trace) to the diagonal,
/// growing tenfold until a Cholesky factorization succeeds.
fn regularize(matrix: DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if matrix.clone().cholesky().is_some() {
        return Ok((matrix, 0.0));
    }
    let trace = matrix.trace();
    let mut ridge = if trace > 0.0 { 1e-10 * trace } else { 1e-10 };
    for _ in 0..16 {
        let mut candidate = matrix.clone();
        for i in 0..candidate.nrows() {
            candidate[(i, i)] += ridge;
        }
        if candidate.clone().cholesky().is_some() {
            return Ok((candidate, ridge));
        }
        ridge *= 10.0;
    }
    Err(Error::SingularSystem(
        "covariance could not be regularized to positive definite".into(),
    ))
}

/// Sample covariance of first differences of `series` (rows are dates,
/// columns components), shrunk toward its diagonal by `shrinkage`.
pub fn estimate_covariance(series: &DMatrix<f64>, shrinkage: f64) -> Result<CovarianceModel> {
    if series.nrows() < 2 {
        return Err(Error::validation(format!(
            "covariance estimation needs at least 2 observations (got {})",
            series.nrows()
        )));
    }
    if series.ncols() == 0 {
        return Err(Error::validation("series has no components"));
    }
    if !(0.0..=1.0).contains(&shrinkage) {
        return Err(Error::validation(format!(
            "shrinkage must lie in [0, 1] (got {shrinkage})"
        )));
    }
    let diffs = series.rows(1, series.nrows() - 1) - series.rows(0, series.nrows() - 1);
    let obs = diffs.nrows();
    let means = diffs.row_mean();
    let mut centered = diffs.clone();
    for mut row in centered.row_iter_mut() {
        row -= &means;
    }
    // A single difference has no unbiased estimate; fall back to 1/N.
    let divisor = if obs > 1 { (obs - 1) as f64 } else { 1.0 };
    let sample = centered.transpose() * &centered / divisor;
    let mut shrunk = sample.clone() * (1.0 - shrinkage);
    for i in 0..shrunk.nrows() {
        shrunk[(i, i)] = sample[(i, i)];
    }
    CovarianceModel::new(shrunk, Provenance::Historical)
}

/// Reads a component time series: header of component ids, one row per date.
pub fn read_series_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let ids: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let mut values = Vec::new();
    let mut rows = 0;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != ids.len() {
            return Err(Error::DimensionMismatch {
                context: "series CSV row",
                expected: ids.len(),
                found: rec.len(),
            });
        }
        for field in rec.iter() {
            values.push(field.trim().parse::<f64>().map_err(|_| {
                Error::Parse(format!("series CSV row {}: bad number `{field}`", line + 1))
            })?);
        }
        rows += 1;
    }
    let cols = ids.len();
    Ok((ids, DMatrix::from_row_slice(rows, cols, &values)))
}

/// Block-diagonal covariance with one `[[s, rho s], [rho s, s]]` block per unit.
pub fn synthetic_covariance(n_units: usize, rho: f64, scale: f64) -> Result<CovarianceModel> {
    if !(rho.abs() < 1.0) {
        return Err(Error::validation(format!("|rho| must be < 1 (got {rho})")));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::validation(format!("scale must be positive (got {scale})")));
    }
    if n_units == 0 {
        return Err(Error::validation("synthetic covariance needs at least one unit"));
    }
    let m = 2 * n_units;
    let mut v = DMatrix::zeros(m, m);
    for k in 0..n_units {
        let i = 2 * k;
        v[(i, i)] = scale;
        v[(i + 1, i + 1)] = scale;
        v[(i, i + 1)] = rho * scale;
        v[(i + 1, i)] = rho * scale;
    }
    Ok(CovarianceModel {
        matrix: v,
        provenance: Provenance::Synthetic,
        ridge: 0.0,
    })
}

/// How exchange rates depend on the component vector `h`.
#[derive(Debug, Clone, PartialEq)]
pub enum AllocationModel {
    /// One legal entity; `h = [rwa_1, lbs_1, ...]`.
    SingleMax,
    /// Consolidated entity plus subsidiaries; each unit contributes
    /// `[f_θ, g_θ, f_1, g_1, ..., f_K, g_K]`. Joint probabilities are
    /// re-sampled with the same seed at every evaluation.
    Hierarchy {
        membership: Vec<Option<usize>>,
        subsidiaries: usize,
        samples: u64,
        seed: u64,
    },
}

impl AllocationModel {
    pub fn components_per_unit(&self) -> usize {
        match self {
            AllocationModel::SingleMax => 2,
            AllocationModel::Hierarchy { subsidiaries, .. } => 2 + 2 * subsidiaries,
        }
    }

    fn units(&self, h: &DVector<f64>) -> Result<usize> {
        let per = self.components_per_unit();
        if h.is_empty() || h.len() % per != 0 {
            return Err(Error::DimensionMismatch {
                context: "component vector (multiple of components per unit)",
                expected: per * (h.len() / per).max(1),
                found: h.len(),
            });
        }
        let n = h.len() / per;
        if let AllocationModel::Hierarchy { membership, .. } = self {
            if membership.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "hierarchy membership",
                    expected: n,
                    found: membership.len(),
                });
            }
        }
        Ok(n)
    }

    /// Whether component `idx` of `h` is a free variable. Subsidiary
    /// components of non-member units are structurally zero.
    pub fn is_free(&self, idx: usize) -> bool {
        match self {
            AllocationModel::SingleMax => true,
            AllocationModel::Hierarchy { membership, subsidiaries, .. } => {
                let per = 2 + 2 * subsidiaries;
                let (unit, j) = (idx / per, idx % per);
                j < 2 || membership.get(unit).copied().flatten() == Some((j - 2) / 2)
            }
        }
    }

    /// Per-component weights `w` (rates), one per entry of `h`.
    pub fn exchange_rates(&self, h: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.units(h)?;
        let per = self.components_per_unit();
        let weights = self.rate_weights(h, n)?;
        Ok(DVector::from_fn(n * per, |i, _| weights[i % per]))
    }

    fn rate_weights(&self, h: &DVector<f64>, n: usize) -> Result<Vec<f64>> {
        match self {
            AllocationModel::SingleMax => {
                let (a, b) = split_pairs(h, n);
                Ok(linear_max_allocation(&a, &b)?.rates.weights)
            }
            AllocationModel::Hierarchy { samples, seed, .. } => {
                let comps = self.hierarchy_components(h, n);
                Ok(hierarchy_allocation(&comps, *samples, *seed)?.1.weights)
            }
        }
    }

    fn hierarchy_components(&self, h: &DVector<f64>, n: usize) -> HierarchyComponents {
        let AllocationModel::Hierarchy { membership, subsidiaries, .. } = self else {
            unreachable!("hierarchy components requested for a single-entity model")
        };
        let per = 2 + 2 * subsidiaries;
        let column = |j: usize| (0..n).map(|k| h[k * per + j]).collect::<Vec<_>>();
        HierarchyComponents {
            consolidated: ComponentPair { f: column(0), g: column(1) },
            subsidiaries: (0..*subsidiaries)
                .map(|e| ComponentPair {
                    f: column(2 + 2 * e),
                    g: column(3 + 2 * e),
                })
                .collect(),
            membership: membership.clone(),
        }
    }

    /// Allocated capital per unit: `alpha_k = sum_j w_j h_{k,j}`.
    pub fn unit_allocations(&self, h: &DVector<f64>) -> Result<Vec<f64>> {
        let w = self.exchange_rates(h)?;
        let per = self.components_per_unit();
        Ok(h.as_slice()
            .chunks(per)
            .zip(w.as_slice().chunks(per))
            .map(|(hk, wk)| hk.iter().zip(wk).map(|(x, y)| x * y).sum())
            .collect())
    }

    /// Total capital of the position `h`.
    pub fn total_capital(&self, h: &DVector<f64>) -> Result<f64> {
        let n = self.units(h)?;
        Ok(match self {
            AllocationModel::SingleMax => {
                let (a, b) = split_pairs(h, n);
                a.iter().sum::<f64>().max(b.iter().sum())
            }
            AllocationModel::Hierarchy { .. } => {
                nested_value(&self.hierarchy_components(h, n).totals())
            }
        })
    }
}

/// Gradient of the nested max in the component totals, splitting ties 1/2.
fn nested_gradient(t: &[f64]) -> Vec<f64> {
    let split = |x: f64, y: f64| if x > y { (1.0, 0.0) } else if x < y { (0.0, 1.0) } else { (0.5, 0.5) };
    let theta = t[0].max(t[1]);
    let subs: f64 = t[2..].chunks(2).map(|p| p[0].max(p[1])).sum();
    let (on_theta, on_subs) = split(theta, subs);
    let mut grad = vec![0.0; t.len()];
    for (pair, g) in t.chunks(2).zip(grad.chunks_mut(2)) {
        let (gf, gg) = split(pair[0], pair[1]);
        g[0] = gf;
        g[1] = gg;
    }
    for (j, g) in grad.iter_mut().enumerate() {
        *g *= if j < 2 { on_theta } else { on_subs };
    }
    grad
}

fn split_pairs(h: &DVector<f64>, n: usize) -> (Vec<f64>, Vec<f64>) {
    ((0..n).map(|k| h[2 * k]).collect(), (0..n).map(|k| h[2 * k + 1]).collect())
}

/// Stacks a portfolio's RWA and LBS capital unit-major.
pub fn single_max_components(rwa: &[f64], lbs: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        2 * rwa.len(),
        rwa.iter().zip(lbs).flat_map(|(a, b)| [*a, *b]),
    )
}

/// Stacks hierarchy components unit-major.
pub fn hierarchy_components_vector(c: &HierarchyComponents) -> DVector<f64> {
    let per = c.n_components();
    DVector::from_fn(c.len() * per, |i, _| c.component(i % per)[i / per])
}

/// Returns per component, with every component of a unit earning
/// `revenue_k / sum_j h_{k,j}`. Units with zero capital get 0 and are
/// listed in the second return value.
pub fn roc_vector(revenue: &[f64], h: &DVector<f64>, per_unit: usize) -> Result<(DVector<f64>, Vec<usize>)> {
    if h.len() != revenue.len() * per_unit {
        return Err(Error::DimensionMismatch {
            context: "revenue vs components",
            expected: revenue.len() * per_unit,
            found: h.len(),
        });
    }
    let mut flagged = Vec::new();
    let mut r = DVector::zeros(h.len());
    for (k, rev) in revenue.iter().enumerate() {
        let capital: f64 = (0..per_unit).map(|j| h[k * per_unit + j]).sum();
        let ret = if capital == 0.0 {
            flagged.push(k);
            0.0
        } else {
            rev / capital
        };
        for j in 0..per_unit {
            r[k * per_unit + j] = ret;
        }
    }
    Ok((r, flagged))
}

/// Jacobian `J = dw/dh`.
///
/// Single-entity rates use central finite differences with steps
/// `max(1e-6 |h_i|, 1e-8)`. Nested-model probabilities are Monte Carlo
/// frequencies, piecewise constant in `h`, so they are held fixed and only
/// `beta` is differentiated. Structurally-zero components get zero columns.
pub fn exchange_rate_jacobian(h: &DVector<f64>, model: &AllocationModel) -> Result<DMatrix<f64>> {
    let n = model.units(h)?;
    match model {
        AllocationModel::SingleMax => finite_difference_jacobian(h, model, |_| true),
        AllocationModel::Hierarchy { .. } => {
            if model.hierarchy_components(h, n).is_degenerate() {
                // Delegates to the single max on the consolidated pair.
                let per = model.components_per_unit();
                finite_difference_jacobian(h, model, |i| i % per < 2)
            } else {
                frozen_probability_jacobian(h, model, n)
            }
        }
    }
}

fn finite_difference_jacobian(
    h: &DVector<f64>,
    model: &AllocationModel,
    perturb: impl Fn(usize) -> bool,
) -> Result<DMatrix<f64>> {
    let m = h.len();
    model.exchange_rates(h)?;
    let mut jac = DMatrix::zeros(m, m);
    for i in (0..m).filter(|&i| model.is_free(i) && perturb(i)) {
        let step = (1e-6 * h[i].abs()).max(1e-8);
        let at = |sign: f64| {
            let mut x = h.clone();
            x[i] += sign * step;
            model.exchange_rates(&x).map_err(|e| match e {
                Error::SingularScale(msg) => {
                    Error::SingularScale(format!("perturbing component {i}: {msg}"))
                }
                other => other,
            })
        };
        let col = (at(1.0)? - at(-1.0)?) / (2.0 * step);
        jac.set_column(i, &col);
    }
    Ok(jac)
}

/// `w_j = beta p_j` with `beta = c(T) / sum_i p_i T_i`, `T` the component
/// totals; differentiates `beta` through `c` and `T` with `p` fixed.
fn frozen_probability_jacobian(h: &DVector<f64>, model: &AllocationModel, n: usize) -> Result<DMatrix<f64>> {
    let AllocationModel::Hierarchy { samples, seed, .. } = model else {
        unreachable!("frozen-probability Jacobian needs the nested model")
    };
    let per = model.components_per_unit();
    let comps = model.hierarchy_components(h, n);
    let rates = hierarchy_allocation(&comps, *samples, *seed)?.1;
    let totals = comps.totals();
    let cost = nested_value(&totals);
    let probs: Vec<f64> = rates.weights.iter().map(|w| w / rates.beta).collect();
    let unscaled: f64 = probs.iter().zip(&totals).map(|(p, t)| p * t).sum();
    let grad = nested_gradient(&totals);
    let m = h.len();
    let mut jac = DMatrix::zeros(m, m);
    for col in (0..m).filter(|&c| model.is_free(c)) {
        let i = col % per;
        let dbeta = (grad[i] * unscaled - cost * probs[i]) / (unscaled * unscaled);
        for row in 0..m {
            jac[(row, col)] = probs[row % per] * dbeta;
        }
    }
    Ok(jac)
}

/// Analytic Jacobian of the single-entity exchange rates, by the chain rule
/// through `Phi`, `mu_s`, `sigma_s` and `beta`. At an exact RWA/LBS tie the
/// derivative of the max uses the midpoint 1/2.
pub fn analytic_jacobian(h: &DVector<f64>) -> Result<DMatrix<f64>> {
    let model = AllocationModel::SingleMax;
    let n = model.units(h)?;
    let (a, b) = split_pairs(h, n);
    let lin = linear_max_allocation(&a, &b)?;
    let (mu, sigma, p) = (lin.stats.mu_s, lin.stats.sigma_s, lin.stats.p);
    if sigma == 0.0 {
        return Err(Error::SingularScale(
            "analytic Jacobian undefined at sigma_s = 0".into(),
        ));
    }
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    let d_total = sa - sb;
    let big_m = sa.max(sb);
    let den = sa - p * d_total;
    let beta = big_m / den;
    let t = -mu / sigma;
    let phi = normal_pdf(t);
    let dm_da = if sa > sb { 1.0 } else if sa < sb { 0.0 } else { 0.5 };
    let dm_db = 1.0 - dm_da;

    let mut jac = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        let d_i = a[i] - b[i];
        for (col, sign, dm, da) in [(2 * i, 1.0, dm_da, 1.0), (2 * i + 1, -1.0, dm_db, 0.0)] {
            let dd = sign;
            let dmu = 0.5 * sign;
            let dsigma = sign * (d_i / 3.0 + d_total / 6.0) / (2.0 * sigma);
            let dt = -(dmu * sigma - mu * dsigma) / (sigma * sigma);
            let dp = phi * dt;
            let dden = da - dp * d_total - p * dd;
            let dbeta = (dm * den - big_m * dden) / (den * den);
            let dwa = dbeta * (1.0 - p) - beta * dp;
            let dwb = dbeta * p + beta * dp;
            for k in 0..n {
                jac[(2 * k, col)] = dwa;
                jac[(2 * k + 1, col)] = dwb;
            }
        }
    }
    Ok(jac)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationProblem {
    pub h: DVector<f64>,
    pub r: DVector<f64>,
    pub covariance: CovarianceModel,
    pub epsilon: f64,
    pub z: f64,
    pub w: DVector<f64>,
    pub jacobian: DMatrix<f64>,
}

impl OptimizationProblem {
    pub fn new(
        h: DVector<f64>,
        r: DVector<f64>,
        covariance: CovarianceModel,
        epsilon: f64,
        z: f64,
        w: DVector<f64>,
        jacobian: DMatrix<f64>,
    ) -> Result<Self> {
        let m = h.len();
        let dims = [
            ("returns", r.len()),
            ("exchange rates", w.len()),
            ("covariance", covariance.dim()),
            ("jacobian rows", jacobian.nrows()),
            ("jacobian cols", jacobian.ncols()),
        ];
        for (context, found) in dims {
            if found != m {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: m,
                    found,
                });
            }
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::validation(format!("epsilon must be > 0 (got {epsilon})")));
        }
        if !z.is_finite() {
            return Err(Error::validation("revenue target z must be finite"));
        }
        Ok(OptimizationProblem {
            h,
            r,
            covariance,
            epsilon,
            z,
            w,
            jacobian,
        })
    }

    /// Builds the problem at `h`, evaluating `w` and `J` from `model`.
    pub fn from_model(
        h: DVector<f64>,
        r: DVector<f64>,
        covariance: CovarianceModel,
        epsilon: f64,
        z: f64,
        model: &AllocationModel,
    ) -> Result<Self> {
        let w = model.exchange_rates(&h)?;
        let jacobian = exchange_rate_jacobian(&h, model)?;
        Self::new(h, r, covariance, epsilon, z, w, jacobian)
    }

    pub fn solve(&self) -> Result<OptimizationSolution> {
        solve_local_optimum(self)
    }

    pub fn solve_crude(&self) -> Result<OptimizationSolution> {
        solve_crude(&self.h, &self.r, &self.covariance, &self.w, self.z, self.epsilon)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationSolution {
    pub delta: DVector<f64>,
    pub lambda: f64,
    /// `|| w + J (h + delta) + eps V^-1 delta - lambda r ||`.
    pub kkt_stationarity: f64,
    /// `| r^T delta - z |`.
    pub constraint_residual: f64,
    /// First-order capital change `w^T delta`.
    pub capital_change: f64,
    /// `sqrt(delta^T V^-1 delta)`.
    pub mahalanobis: f64,
}

impl OptimizationSolution {
    /// RoC thresholds `w / lambda`.
    pub fn thresholds(&self, w: &DVector<f64>) -> DVector<f64> {
        w / self.lambda
    }
}

#[allow(clippy::too_many_arguments)]
fn finish(
    delta: DVector<f64>,
    lambda: f64,
    h: &DVector<f64>,
    r: &DVector<f64>,
    w: &DVector<f64>,
    jacobian: Option<&DMatrix<f64>>,
    v_inv: &DMatrix<f64>,
    epsilon: f64,
    z: f64,
) -> OptimizationSolution {
    let (kkt_stationarity, constraint_residual) =
        residuals(h, r, w, jacobian, v_inv, epsilon, z, &delta, lambda);
    let mahalanobis = delta.dot(&(v_inv * &delta)).max(0.0).sqrt();
    OptimizationSolution {
        capital_change: w.dot(&delta),
        delta,
        lambda,
        kkt_stationarity,
        constraint_residual,
        mahalanobis,
    }
}

#[allow(clippy::too_many_arguments)]
fn residuals(
    h: &DVector<f64>,
    r: &DVector<f64>,
    w: &DVector<f64>,
    jacobian: Option<&DMatrix<f64>>,
    v_inv: &DMatrix<f64>,
    epsilon: f64,
    z: f64,
    delta: &DVector<f64>,
    lambda: f64,
) -> (f64, f64) {
    let mut grad = w + v_inv * delta * epsilon - r * lambda;
    if let Some(j) = jacobian {
        grad += j * (h + delta);
    }
    (grad.norm(), (r.dot(delta) - z).abs())
}

/// Closed-form Lagrange solution:
/// `delta = (J + eps V^-1)^-1 (lambda r - w - J h)`, with `lambda` fixed by
/// `r^T delta = z`.
pub fn solve_local_optimum(problem: &OptimizationProblem) -> Result<OptimizationSolution> {
    let OptimizationProblem {
        h,
        r,
        covariance,
        epsilon,
        z,
        w,
        jacobian,
    } = problem;
    let v_inv = covariance.inverse()?;
    let system = jacobian + &v_inv * *epsilon;

    let sv = system.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 0.0) || smax / smin > 1e12 {
        return Err(Error::SingularSystem(format!(
            "J + eps V^-1 has condition number {:e}",
            smax / smin
        )));
    }
    let lu = system.lu();
    let solve = |rhs: &DVector<f64>| {
        lu.solve(rhs)
            .ok_or_else(|| Error::SingularSystem("LU solve failed for J + eps V^-1".into()))
    };
    let jh = jacobian * h;
    let a_r = solve(r)?;
    let a_w = solve(w)?;
    let a_jh = solve(&jh)?;
    let denom = r.dot(&a_r);
    if denom.abs() < 1e-14 {
        return Err(Error::SingularSystem(format!(
            "r^T (J + eps V^-1)^-1 r = {denom:e} is numerically zero"
        )));
    }
    let lambda = (z + r.dot(&a_w) + r.dot(&a_jh)) / denom;
    let delta = &a_r * lambda - a_w - a_jh;
    Ok(finish(delta, lambda, h, r, w, Some(jacobian), &v_inv, *epsilon, *z))
}

/// The `J = 0` limit: `delta = V (lambda r - w) / eps` with
/// `lambda = (eps z + r^T V w) / (r^T V r)`.
pub fn solve_crude(
    h: &DVector<f64>,
    r: &DVector<f64>,
    covariance: &CovarianceModel,
    w: &DVector<f64>,
    z: f64,
    epsilon: f64,
) -> Result<OptimizationSolution> {
    let m = h.len();
    for (context, found) in [("returns", r.len()), ("exchange rates", w.len()), ("covariance", covariance.dim())] {
        if found != m {
            return Err(Error::DimensionMismatch {
                context,
                expected: m,
                found,
            });
        }
    }
    if !(epsilon > 0.0) {
        return Err(Error::validation(format!("epsilon must be > 0 (got {epsilon})")));
    }
    let v = covariance.matrix();
    let vr = v * r;
    let denom = r.dot(&vr);
    if denom.abs() < 1e-14 {
        return Err(Error::SingularSystem(format!(
            "r^T V r = {denom:e} is numerically zero"
        )));
    }
    let lambda = (epsilon * z + vr.dot(w)) / denom;
    let delta = (vr * lambda - v * w) / epsilon;
    let v_inv = covariance.inverse()?;
    Ok(finish(delta, lambda, h, r, w, None, &v_inv, epsilon, z))
}

/// Stationarity and constraint residuals of `solution` under `problem`
/// (including its Jacobian).
pub fn kkt_residual(problem: &OptimizationProblem, solution: &OptimizationSolution) -> Result<(f64, f64)> {
    if solution.delta.len() != problem.h.len() {
        return Err(Error::DimensionMismatch {
            context: "solution delta",
            expected: problem.h.len(),
            found: solution.delta.len(),
        });
    }
    let v_inv = problem.covariance.inverse()?;
    Ok(residuals(
        &problem.h,
        &problem.r,
        &problem.w,
        Some(&problem.jacobian),
        &v_inv,
        problem.epsilon,
        problem.z,
        &solution.delta,
        solution.lambda,
    ))
}
