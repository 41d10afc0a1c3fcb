//! Concrete [`SetCost`] implementations.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::permutation::SetCost;
use crate::portfolio::Portfolio;

fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        });
    }
    Ok(())
}

/// `c(S) = max(sum_S a, sum_S b)` over two additive components.
#[derive(Debug, Clone)]
pub struct AdditiveMaxCost {
    a: Vec<f64>,
    b: Vec<f64>,
}

impl AdditiveMaxCost {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        check_len("additive max cost", a.len(), b.len())?;
        Ok(AdditiveMaxCost { a, b })
    }

    /// RWA capital as `a`, LBS capital as `b`.
    pub fn from_portfolio(p: &Portfolio) -> Self {
        AdditiveMaxCost {
            a: p.rwa_capital(),
            b: p.lbs_capital(),
        }
    }
}

pub fn additive_max_cost(p: &Portfolio) -> AdditiveMaxCost {
    AdditiveMaxCost::from_portfolio(p)
}

impl SetCost for AdditiveMaxCost {
    fn len(&self) -> usize {
        self.a.len()
    }

    fn cost(&self, members: &[usize]) -> f64 {
        let sa: f64 = members.iter().map(|&i| self.a[i]).sum();
        let sb: f64 = members.iter().map(|&i| self.b[i]).sum();
        sa.max(sb)
    }

    fn prefix_costs(&self, order: &[usize], out: &mut [f64]) {
        let (mut sa, mut sb) = (0.0, 0.0);
        for (j, &i) in order.iter().enumerate() {
            sa += self.a[i];
            sb += self.b[i];
            out[j] = sa.max(sb);
        }
    }
}

/// A pair of per-unit capital components: `f` (LBS) and `g` (RWA).
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentPair {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

/// Per-unit capital components of a consolidated entity and its
/// subsidiaries.
///
/// Components are indexed `f_θ, g_θ, f_1, g_1, ..., f_K, g_K`. Subsidiary
/// components are zero for units outside that subsidiary.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyComponents {
    pub consolidated: ComponentPair,
    pub subsidiaries: Vec<ComponentPair>,
    pub membership: Vec<Option<usize>>,
}

impl HierarchyComponents {
    pub fn new(
        consolidated: ComponentPair,
        subsidiaries: Vec<ComponentPair>,
        membership: Vec<Option<usize>>,
    ) -> Result<Self> {
        let n = consolidated.f.len();
        check_len("consolidated components", n, consolidated.g.len())?;
        check_len("hierarchy membership", n, membership.len())?;
        for (e, pair) in subsidiaries.iter().enumerate() {
            check_len("subsidiary components", n, pair.f.len())?;
            check_len("subsidiary components", n, pair.g.len())?;
            for k in 0..n {
                if membership[k] != Some(e) && (pair.f[k] != 0.0 || pair.g[k] != 0.0) {
                    return Err(Error::validation(format!(
                        "unit {k} has nonzero components for subsidiary {e} it is not a member of"
                    )));
                }
            }
        }
        if let Some(bad) = membership.iter().flatten().find(|&&e| e >= subsidiaries.len()) {
            return Err(Error::validation(format!("membership refers to unknown subsidiary {bad}")));
        }
        let all = std::iter::once(&consolidated).chain(&subsidiaries);
        for pair in all {
            if pair.f.iter().chain(&pair.g).any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::validation("capital components must be finite and >= 0"));
            }
        }
        Ok(HierarchyComponents {
            consolidated,
            subsidiaries,
            membership,
        })
    }

    /// Consolidated `(LBS, RWA)` plus each member's subsidiary-level
    /// `(sub_lbs_capital, sub_rwa_capital)`.
    pub fn from_portfolio(p: &Portfolio) -> Result<Self> {
        let tree = p.tree();
        if tree.subsidiaries.is_empty() {
            return Err(Error::validation(
                "nested cost needs at least one subsidiary in the legal-entity tree",
            ));
        }
        let n = p.len();
        let mut subs = vec![
            ComponentPair {
                f: vec![0.0; n],
                g: vec![0.0; n],
            };
            tree.subsidiaries.len()
        ];
        for (k, unit) in p.units().iter().enumerate() {
            if let Some(e) = tree.membership[k] {
                subs[e].f[k] = unit.sub_lbs_capital;
                subs[e].g[k] = unit.sub_rwa_capital;
            }
        }
        HierarchyComponents::new(
            ComponentPair {
                f: p.lbs_capital(),
                g: p.rwa_capital(),
            },
            subs,
            tree.membership.clone(),
        )
    }

    pub fn len(&self) -> usize {
        self.consolidated.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_components(&self) -> usize {
        2 + 2 * self.subsidiaries.len()
    }

    pub fn component(&self, j: usize) -> &[f64] {
        let pair = if j < 2 {
            &self.consolidated
        } else {
            &self.subsidiaries[(j - 2) / 2]
        };
        if j % 2 == 0 {
            &pair.f
        } else {
            &pair.g
        }
    }

    /// Names in component order: `f_theta, g_theta, f_<sub>, g_<sub>, ...`.
    pub fn component_names(&self, subsidiaries: &[String]) -> Vec<String> {
        let mut names = vec!["f_theta".to_string(), "g_theta".to_string()];
        for e in 0..self.subsidiaries.len() {
            let label = subsidiaries.get(e).cloned().unwrap_or_else(|| e.to_string());
            names.push(format!("f_{label}"));
            names.push(format!("g_{label}"));
        }
        names
    }

    /// Whether every subsidiary component is zero.
    pub fn is_degenerate(&self) -> bool {
        self.subsidiaries
            .iter()
            .all(|p| p.f.iter().chain(&p.g).all(|&v| v == 0.0))
    }

    /// Component sums over the whole portfolio.
    pub fn totals(&self) -> Vec<f64> {
        (0..self.n_components())
            .map(|j| self.component(j).iter().sum())
            .collect()
    }

    /// Cost of the full portfolio.
    pub fn total_cost(&self) -> f64 {
        nested_value(&self.totals())
    }
}

/// `max(max(f_θ, g_θ), Σ_e max(f_e, g_e))` on component sums.
pub(crate) fn nested_value(sums: &[f64]) -> f64 {
    let theta = sums[0].max(sums[1]);
    let subs: f64 = sums[2..].chunks(2).map(|p| p[0].max(p[1])).sum();
    theta.max(subs)
}

/// Legal-entity cost: the larger of consolidated capital and the sum of
/// subsidiary capitals, each being the max of its two components.
#[derive(Debug, Clone)]
pub struct NestedMaxCost {
    components: HierarchyComponents,
}

impl NestedMaxCost {
    pub fn new(components: HierarchyComponents) -> Self {
        NestedMaxCost { components }
    }

    pub fn components(&self) -> &HierarchyComponents {
        &self.components
    }
}

pub fn nested_max_cost(p: &Portfolio) -> Result<NestedMaxCost> {
    Ok(NestedMaxCost::new(HierarchyComponents::from_portfolio(p)?))
}

impl SetCost for NestedMaxCost {
    fn len(&self) -> usize {
        self.components.len()
    }

    fn cost(&self, members: &[usize]) -> f64 {
        let c = &self.components;
        let sums: Vec<f64> = (0..c.n_components())
            .map(|j| {
                let comp = c.component(j);
                members.iter().map(|&i| comp[i]).sum()
            })
            .collect();
        nested_value(&sums)
    }

    fn prefix_costs(&self, order: &[usize], out: &mut [f64]) {
        let c = &self.components;
        let mut sums = vec![0.0; c.n_components()];
        for (j, &i) in order.iter().enumerate() {
            for (jj, s) in sums.iter_mut().enumerate() {
                *s += c.component(jj)[i];
            }
            out[j] = nested_value(&sums);
        }
    }
}

/// Scenario-by-unit profit and loss.
#[derive(Debug, Clone, PartialEq)]
pub struct PnLMatrix {
    ids: Vec<String>,
    data: DMatrix<f64>,
}

impl PnLMatrix {
    pub fn new(ids: Vec<String>, data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 {
            return Err(Error::validation("PnL matrix needs at least one scenario"));
        }
        check_len("PnL matrix columns", ids.len(), data.ncols())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("PnL matrix contains non-finite values"));
        }
        Ok(PnLMatrix { ids, data })
    }

    pub fn scenarios(&self) -> usize {
        self.data.nrows()
    }

    pub fn units(&self) -> usize {
        self.data.ncols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Reads a CSV with a header row of unit ids and one row per scenario.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let ids: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let mut values = Vec::new();
        let mut rows = 0;
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            check_len("PnL CSV row", ids.len(), rec.len())?;
            for field in rec.iter() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::Parse(format!("PnL CSV row {}: bad number `{field}`", line + 1))
                })?;
                values.push(v);
            }
            rows += 1;
        }
        let data = DMatrix::from_row_slice(rows, ids.len(), &values);
        PnLMatrix::new(ids, data)
    }

    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.ids)?;
        for row in self.data.row_iter() {
            w.write_record(row.iter().map(|v| format!("{v}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Number of tail scenarios: `ceil((1 - level) * m)`, clamped to `1..=m`.
///
/// A small tolerance absorbs representation error, e.g. `(1 - 0.99) * 100`.
pub fn tail_rank(level: f64, scenarios: usize) -> usize {
    let k = ((1.0 - level) * scenarios as f64 - 1e-9).ceil() as usize;
    k.clamp(1, scenarios)
}

/// `k`-th largest value (1-based). Reorders `values`.
pub fn kth_largest(values: &mut [f64], k: usize) -> f64 {
    debug_assert!(k >= 1 && k <= values.len());
    if k <= 8 {
        let mut top = [f64::NEG_INFINITY; 8];
        let top = &mut top[..k];
        for &v in values.iter() {
            if v > top[k - 1] {
                let mut pos = k - 1;
                while pos > 0 && top[pos - 1] < v {
                    top[pos] = top[pos - 1];
                    pos -= 1;
                }
                top[pos] = v;
            }
        }
        return top[k - 1];
    }
    let (_, kth, _) = values.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    *kth
}

/// Empirical value-at-risk of a loss sample.
pub fn empirical_var(losses: &[f64], level: f64) -> f64 {
    let mut scratch = losses.to_vec();
    kth_largest(&mut scratch, tail_rank(level, losses.len()))
}

/// Historical-simulation VaR of the subset's summed PnL.
///
/// Losses are negated PnL sums; the result is the `ceil((1-level) m)`-th
/// largest loss.
#[derive(Debug, Clone)]
pub struct VarCost {
    pnl: PnLMatrix,
    level: f64,
    rank: usize,
}

impl VarCost {
    pub fn new(pnl: PnLMatrix, level: f64) -> Result<Self> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::validation(format!(
                "VaR level must lie in (0, 1) (got {level})"
            )));
        }
        let rank = tail_rank(level, pnl.scenarios());
        Ok(VarCost { pnl, level, rank })
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn pnl(&self) -> &PnLMatrix {
        &self.pnl
    }
}

pub fn var_cost(pnl: PnLMatrix, level: f64) -> Result<VarCost> {
    VarCost::new(pnl, level)
}

impl SetCost for VarCost {
    fn len(&self) -> usize {
        self.pnl.units()
    }

    fn cost(&self, members: &[usize]) -> f64 {
        if members.is_empty() {
            return 0.0;
        }
        let m = self.pnl.scenarios();
        let mut losses = vec![0.0; m];
        for &i in members {
            for (l, v) in losses.iter_mut().zip(self.pnl.data.column(i).iter()) {
                *l -= v;
            }
        }
        kth_largest(&mut losses, self.rank)
    }

    fn prefix_costs(&self, order: &[usize], out: &mut [f64]) {
        let m = self.pnl.scenarios();
        let mut losses = vec![0.0; m];
        let mut scratch = vec![0.0; m];
        for (j, &i) in order.iter().enumerate() {
            for (l, v) in losses.iter_mut().zip(self.pnl.data.column(i).iter()) {
                *l -= v;
            }
            scratch.copy_from_slice(&losses);
            out[j] = kth_largest(&mut scratch, self.rank);
        }
    }
}

/// `l(S) = max(sum_S alpha_f, sum_S alpha_g)`: the max cost with both
/// arguments replaced by their allocations.
#[derive(Debug, Clone)]
pub struct LinearizedCost {
    inner: AdditiveMaxCost,
}

impl LinearizedCost {
    pub fn new(alpha_f: Vec<f64>, alpha_g: Vec<f64>) -> Result<Self> {
        check_len("linearized cost", alpha_f.len(), alpha_g.len())?;
        Ok(LinearizedCost {
            inner: AdditiveMaxCost {
                a: alpha_f,
                b: alpha_g,
            },
        })
    }
}

pub fn linearized_cost(alpha_f: Vec<f64>, alpha_g: Vec<f64>) -> Result<LinearizedCost> {
    LinearizedCost::new(alpha_f, alpha_g)
}

impl SetCost for LinearizedCost {
    fn len(&self) -> usize {
        self.inner.len()
    }

    fn cost(&self, members: &[usize]) -> f64 {
        self.inner.cost(members)
    }

    fn prefix_costs(&self, order: &[usize], out: &mut [f64]) {
        self.inner.prefix_costs(order, out)
    }
}

/// Seedable stand-in for randomized PnL with random volatilities and
/// correlations: a one-factor Gaussian model.
///
/// Unit `i` has volatility `v_i ~ U[vol_range]` and factor loading
/// `l_i ~ U[loading_range]`; scenario `j` is
/// `v_i (l_i F_j + sqrt(1 - l_i^2) e_ji)` with `F, e` standard normal, so
/// pairwise correlations are `l_i l_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnlGenerator {
    pub scenarios: usize,
    pub vol_range: (f64, f64),
    pub loading_range: (f64, f64),
}

impl Default for PnlGenerator {
    fn default() -> Self {
        PnlGenerator {
            scenarios: 250,
            vol_range: (0.5, 2.0),
            loading_range: (-0.8, 0.8),
        }
    }
}

impl PnlGenerator {
    pub fn generate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<PnLMatrix> {
        let (vlo, vhi) = self.vol_range;
        let (llo, lhi) = self.loading_range;
        if !(vlo > 0.0 && vlo <= vhi) || !(-1.0 <= llo && llo <= lhi && lhi <= 1.0) {
            return Err(Error::validation("invalid PnL generator ranges"));
        }
        let vol = Uniform::new_inclusive(vlo, vhi).map_err(|e| Error::validation(e.to_string()))?;
        let load = Uniform::new_inclusive(llo, lhi).map_err(|e| Error::validation(e.to_string()))?;
        let vols: Vec<f64> = (0..n).map(|_| vol.sample(rng)).collect();
        let loads: Vec<f64> = (0..n).map(|_| load.sample(rng)).collect();
        let m = self.scenarios;
        let mut data = DMatrix::zeros(m, n);
        for j in 0..m {
            let factor: f64 = StandardNormal.sample(rng);
            for i in 0..n {
                let eps: f64 = StandardNormal.sample(rng);
                let l = loads[i];
                data[(j, i)] = vols[i] * (l * factor + (1.0 - l * l).sqrt() * eps);
            }
        }
        PnLMatrix::new((0..n).map(|i| format!("U{i}")).collect(), data)
    }
}
