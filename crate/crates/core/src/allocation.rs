//! Allocation engines: standalone, Euler, Shapley, and the linear
//! normal-approximation allocations with their exchange rates.
//!
//! Component conventions: single-max routines take `a` (RWA capital) and
//! `b` (LBS capital); their exchange rates are `[w_a, w_b]`. Hierarchy
//! routines use the component order of [`HierarchyComponents`].

use std::fmt;

use crate::cost::{nested_value, HierarchyComponents};
use crate::error::{Error, Result};
use crate::permutation::{exact_shapley, mc_shapley, random_prefix, run_substreams, AllocationEstimate, SetCost};
use crate::stats::normal_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Standalone,
    Euler,
    ShapleyExact,
    ShapleyMc,
    Linear,
    HierarchyLinear,
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::Standalone => "standalone",
            Method::Euler => "euler",
            Method::ShapleyExact => "shapley-exact",
            Method::ShapleyMc => "shapley-mc",
            Method::Linear => "linear",
            Method::HierarchyLinear => "hierarchy-linear",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentAllocation {
    pub method: Method,
    pub values: Vec<f64>,
}

impl ComponentAllocation {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Return on allocated capital, `revenue / allocation` per unit.
    pub fn roc(&self, revenue: &[f64]) -> Vec<f64> {
        self.values
            .iter()
            .zip(revenue)
            .map(|(a, r)| if *a == 0.0 { 0.0 } else { r / a })
            .collect()
    }
}

/// Linear weights turning component amounts into allocated capital.
#[derive(Debug, Clone, PartialEq)]
pub struct ExchangeRates {
    pub beta: f64,
    pub weights: Vec<f64>,
}

impl ExchangeRates {
    /// `alpha_k = sum_j w_j * components[j][k]`.
    pub fn apply(&self, components: &[&[f64]]) -> Vec<f64> {
        assert_eq!(components.len(), self.weights.len(), "one weight per component");
        let n = components.first().map_or(0, |c| c.len());
        (0..n)
            .map(|k| {
                self.weights
                    .iter()
                    .zip(components)
                    .map(|(w, c)| w * c[k])
                    .sum()
            })
            .collect()
    }
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "component vectors",
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::validation("component vectors are empty"));
    }
    Ok(())
}

/// Pro-rata allocation by standalone capital `max(a_k, b_k)`.
pub fn standalone_allocation(a: &[f64], b: &[f64]) -> Result<ComponentAllocation> {
    check_pair(a, b)?;
    let standalone: Vec<f64> = a.iter().zip(b).map(|(x, y)| x.max(*y)).collect();
    let sum: f64 = standalone.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::validation(
            "standalone allocation needs positive total standalone capital",
        ));
    }
    let total = a.iter().sum::<f64>().max(b.iter().sum());
    Ok(ComponentAllocation {
        method: Method::Standalone,
        values: standalone.iter().map(|s| s * total / sum).collect(),
    })
}

/// Euler allocation of the max: the binding component as-is. On an exact
/// tie the subgradient midpoint `(a_k + b_k) / 2` is used.
pub fn euler_allocation(a: &[f64], b: &[f64]) -> Result<ComponentAllocation> {
    check_pair(a, b)?;
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    let values = if sb > sa {
        b.to_vec()
    } else if sa > sb {
        a.to_vec()
    } else {
        a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect()
    };
    Ok(ComponentAllocation {
        method: Method::Euler,
        values,
    })
}

/// Normal moment-matching statistics of the random prefix sum
/// `s = sum_i 1_i (a_i - b_i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominanceStats {
    pub mu_s: f64,
    pub sigma_s: f64,
    /// Probability that the `b` running sum dominates.
    pub p: f64,
}

/// `mu = sum(d)/2`, `sigma^2 = sum(d^2)/6 + sum(d)^2/12`, `p = Phi(-mu/sigma)`
/// with `d = a - b`. For `sigma = 0`, `p` is the step limit of `Phi`.
pub fn dominance_probability(a: &[f64], b: &[f64]) -> Result<DominanceStats> {
    check_pair(a, b)?;
    let (mut sum_d, mut sum_d2) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        sum_d += d;
        sum_d2 += d * d;
    }
    let mu_s = 0.5 * sum_d;
    let sigma_s = (sum_d2 / 6.0 + sum_d * sum_d / 12.0).sqrt();
    let p = if sigma_s > 0.0 {
        normal_cdf(-mu_s / sigma_s)
    } else if mu_s == 0.0 {
        0.5
    } else if mu_s < 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(DominanceStats { mu_s, sigma_s, p })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearMaxAllocation {
    pub allocation: ComponentAllocation,
    pub rates: ExchangeRates,
    pub stats: DominanceStats,
}

/// Linear approximation to the Shapley allocation of `max(sum a, sum b)`:
/// `alpha_k = beta ((1-p) a_k + p b_k)` with
/// `beta = max(sum a, sum b) / (sum a - 2 p mu_s)`.
pub fn linear_max_allocation(a: &[f64], b: &[f64]) -> Result<LinearMaxAllocation> {
    let stats = dominance_probability(a, b)?;
    let sa: f64 = a.iter().sum();
    let sb: f64 = b.iter().sum();
    let total = sa.max(sb);
    let denom = sa - 2.0 * stats.p * stats.mu_s;
    if denom.abs() < 1e-9 * total.max(1.0) {
        return Err(Error::SingularScale(format!(
            "sum a - 2 p mu_s = {denom:e} vanishes (sum a = {sa}, sum b = {sb})"
        )));
    }
    let beta = total / denom;
    let rates = ExchangeRates {
        beta,
        weights: vec![beta * (1.0 - stats.p), beta * stats.p],
    };
    let values = rates.apply(&[a, b]);
    Ok(LinearMaxAllocation {
        allocation: ComponentAllocation {
            method: Method::Linear,
            values,
        },
        rates,
        stats,
    })
}

/// Approximate Shapley allocation of `max(f, g)` from efficient allocations
/// of `f` and `g` separately.
pub fn two_function_allocation(
    alpha_f: &[f64],
    alpha_g: &[f64],
) -> Result<(ComponentAllocation, ExchangeRates)> {
    let lin = linear_max_allocation(alpha_f, alpha_g)?;
    Ok((lin.allocation, lin.rates))
}

/// Exact Shapley allocation as a [`ComponentAllocation`].
pub fn shapley_allocation(cost: &dyn SetCost) -> Result<ComponentAllocation> {
    Ok(ComponentAllocation {
        method: Method::ShapleyExact,
        values: exact_shapley(cost)?.values,
    })
}

/// Monte Carlo Shapley allocation, keeping the raw estimate for its errors.
pub fn mc_shapley_allocation(
    cost: &dyn SetCost,
    samples: u64,
    seed: u64,
) -> Result<(ComponentAllocation, AllocationEstimate)> {
    let est = mc_shapley(cost, samples, seed)?;
    Ok((
        ComponentAllocation {
            method: Method::ShapleyMc,
            values: est.values.clone(),
        },
        est,
    ))
}

/// Frequencies of the joint events weighting each hierarchy component.
///
/// Index `0, 1`: consolidated side binds and `f_θ > g_θ` / `f_θ < g_θ`.
/// Index `2 + 2e, 3 + 2e`: subsidiaries bind and `f_e > g_e` / `f_e < g_e`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointProbabilities {
    pub probabilities: Vec<f64>,
    /// Event tallies in half-draw units; ties add 1 to each side.
    pub half_counts: Vec<u64>,
    pub samples: u64,
}

impl JointProbabilities {
    /// `P(θ > sum of subsidiaries)`.
    pub fn consolidated(&self) -> f64 {
        self.probabilities[0] + self.probabilities[1]
    }
}

fn tally_pair(f: f64, g: f64, weight: u64, slot_f: &mut u64, slot_g: &mut u64) {
    if f > g {
        *slot_f += 2 * weight;
    } else if f < g {
        *slot_g += 2 * weight;
    } else {
        *slot_f += weight;
        *slot_g += weight;
    }
}

/// Monte Carlo joint probabilities of the running-sum orderings over random
/// (permutation, cut in `0..=n`) prefixes.
///
/// When consolidated and subsidiary capital tie the draw counts toward the
/// consolidated side; `f`/`g` ties split evenly.
pub fn hierarchy_joint_probabilities(
    components: &HierarchyComponents,
    samples: u64,
    seed: u64,
) -> Result<JointProbabilities> {
    if samples == 0 {
        return Err(Error::validation("joint probabilities need at least one sample"));
    }
    let n = components.len();
    if n == 0 {
        return Err(Error::validation("cannot allocate over zero units"));
    }
    let m = components.n_components();
    let comps: Vec<&[f64]> = (0..m).map(|j| components.component(j)).collect();

    let chunks = run_substreams(samples, seed, |rng, count| {
        let mut counts = vec![0u64; m];
        let mut order: Vec<usize> = (0..n).collect();
        let mut sums = vec![0.0; m];
        for _ in 0..count {
            let cut = random_prefix(rng, &mut order, true);
            sums.iter_mut().for_each(|s| *s = 0.0);
            for &i in &order[..cut] {
                for (s, c) in sums.iter_mut().zip(&comps) {
                    *s += c[i];
                }
            }
            let theta = sums[0].max(sums[1]);
            let subs: f64 = sums[2..].chunks(2).map(|p| p[0].max(p[1])).sum();
            if theta >= subs {
                let (head, tail) = counts.split_at_mut(1);
                tally_pair(sums[0], sums[1], 1, &mut head[0], &mut tail[0]);
            } else {
                for e in 0..components.subsidiaries.len() {
                    let j = 2 + 2 * e;
                    let (head, tail) = counts.split_at_mut(j + 1);
                    tally_pair(sums[j], sums[j + 1], 1, &mut head[j], &mut tail[0]);
                }
            }
        }
        counts
    });

    let mut half_counts = vec![0u64; m];
    for chunk in chunks {
        for (h, c) in half_counts.iter_mut().zip(chunk) {
            *h += c;
        }
    }
    let denom = 2.0 * samples as f64;
    Ok(JointProbabilities {
        probabilities: half_counts.iter().map(|&c| c as f64 / denom).collect(),
        half_counts,
        samples,
    })
}

/// Linear allocation of the nested legal-entity max.
///
/// Unscaled `alpha_k = sum_j p_j c_j[k]`; `beta` rescales to the nested
/// cost of the full portfolio, and `w_j = beta p_j` are shared by all units.
/// With no subsidiary capital the cost is a single max, and the analytic
/// two-function allocation on the consolidated pair is returned.
pub fn hierarchy_allocation(
    components: &HierarchyComponents,
    samples: u64,
    seed: u64,
) -> Result<(ComponentAllocation, ExchangeRates)> {
    let m = components.n_components();
    if components.is_degenerate() {
        let (alloc, rates) =
            two_function_allocation(&components.consolidated.f, &components.consolidated.g)?;
        let mut weights = rates.weights;
        weights.resize(m, 0.0);
        return Ok((
            ComponentAllocation {
                method: Method::HierarchyLinear,
                values: alloc.values,
            },
            ExchangeRates {
                beta: rates.beta,
                weights,
            },
        ));
    }

    let probs = hierarchy_joint_probabilities(components, samples, seed)?;
    let comps: Vec<&[f64]> = (0..m).map(|j| components.component(j)).collect();
    let unscaled = ExchangeRates {
        beta: 1.0,
        weights: probs.probabilities.clone(),
    }
    .apply(&comps);
    let unscaled_total: f64 = unscaled.iter().sum();
    if unscaled_total.abs() < 1e-9 {
        return Err(Error::SingularScale(format!(
            "unscaled hierarchy allocation sums to {unscaled_total:e}"
        )));
    }
    let total = nested_value(&components.totals());
    let beta = total / unscaled_total;
    let rates = ExchangeRates {
        beta,
        weights: probs.probabilities.iter().map(|p| beta * p).collect(),
    };
    let values = rates.apply(&comps);
    Ok((
        ComponentAllocation {
            method: Method::HierarchyLinear,
            values,
        },
        rates,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{AdditiveMaxCost, ComponentPair, NestedMaxCost, PnlGenerator, VarCost};
    use crate::permutation::{exact_shapley, substream_rng};
    use crate::portfolio::Portfolio;
    use proptest::prelude::*;
    use rand::Rng;

    fn table1() -> (Vec<f64>, Vec<f64>) {
        let p = Portfolio::table1();
        (p.rwa_capital(), p.lbs_capital())
    }

    fn rounded(v: &[f64]) -> Vec<i64> {
        v.iter().map(|x| x.round() as i64).collect()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn standalone_table1() {
        let (a, b) = table1();
        let s = standalone_allocation(&a, &b).unwrap();
        assert_eq!(rounded(&s.values), vec![195, 212, 212, 212, 169]);
        assert!(close(s.total(), 1000.0, 1e-10 * 1000.0));

        let one = standalone_allocation(&[3.0], &[7.0]).unwrap();
        assert_eq!(one.values, vec![7.0]);
        let same = standalone_allocation(&[2.0; 4], &[5.0; 4]).unwrap();
        assert!(same.values.iter().all(|v| close(*v, 5.0, 1e-12)));
        assert!(standalone_allocation(&[0.0, 0.0], &[0.0, 0.0]).is_err());
    }

    #[test]
    fn euler_table1_swap_and_tie() {
        let (a, b) = table1();
        let e = euler_allocation(&a, &b).unwrap();
        assert_eq!(e.values, vec![150.0, 250.0, 250.0, 150.0, 200.0]);
        let swapped = euler_allocation(&b, &a).unwrap();
        assert_eq!(swapped.values, vec![150.0, 250.0, 250.0, 150.0, 200.0]);
        let rwa_binding = euler_allocation(&[230.0, 120.0, 150.0, 250.0, 260.0], &b).unwrap();
        assert_eq!(rwa_binding.values, vec![230.0, 120.0, 150.0, 250.0, 260.0]);
        let tie = euler_allocation(&[4.0, 6.0], &[8.0, 2.0]).unwrap();
        assert_eq!(tie.values, vec![6.0, 4.0]);
    }

    #[test]
    fn dominance_table1_against_reference() {
        // Reference values from an independent double-precision evaluation
        // with scipy.stats.norm.cdf.
        let (a, b) = table1();
        let s = dominance_probability(&a, &b).unwrap();
        assert_eq!(s.mu_s, -50.0);
        assert!(close(s.sigma_s, 92.014_491_612_281_73, 1e-10));
        assert!(close(s.p, 0.706_570_263_243_821_3, 1e-12));
    }

    #[test]
    fn dominance_matches_prefix_frequency() {
        // MC oracle: frequency of sum_{i in prefix}(a_i - b_i) < 0 for a
        // uniform cut in 0..=n; the normal approximation should be close.
        let (a, b) = table1();
        let p = dominance_probability(&a, &b).unwrap().p;
        let mut rng = substream_rng(2024, 0);
        let mut order: Vec<usize> = (0..5).collect();
        let draws = 200_000;
        let mut below = 0.0;
        for _ in 0..draws {
            let cut = random_prefix(&mut rng, &mut order, true);
            let s: f64 = order[..cut].iter().map(|&i| a[i] - b[i]).sum();
            if s < 0.0 {
                below += 1.0;
            } else if s == 0.0 {
                below += 0.5;
            }
        }
        let freq = below / draws as f64;
        assert!((freq - p).abs() < 0.03, "freq {freq} vs p {p}");
    }

    #[test]
    fn dominance_edge_cases() {
        let s = dominance_probability(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((s.mu_s, s.sigma_s, s.p), (0.0, 0.0, 0.5));
        let s = dominance_probability(&[2.0], &[1.0]).unwrap();
        assert_eq!(s.mu_s, 0.5);
        assert!(close(s.sigma_s, 0.5, 1e-15));
        assert!(close(s.p, 0.158_655_253_931_457_05, 1e-15));
        assert!(dominance_probability(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn linear_table1() {
        let (a, b) = table1();
        let lin = linear_max_allocation(&a, &b).unwrap();
        assert_eq!(rounded(&lin.allocation.values), vec![179, 218, 227, 185, 191]);
        assert!(close(lin.rates.beta, 1.030_230_012_125_633_8, 1e-12));
        assert!(close(lin.rates.weights[0], 0.302_300_121_256_339_5, 1e-12));
        assert!(close(lin.rates.weights[1], 0.727_929_890_869_294_3, 1e-12));
        assert!(close(lin.allocation.total(), 1000.0, 1e-10 * 1000.0));
    }

    #[test]
    fn linear_ranking_matches_exact_shapley_on_table1() {
        let (a, b) = table1();
        let lin = linear_max_allocation(&a, &b).unwrap().allocation.values;
        let exact = exact_shapley(&AdditiveMaxCost::new(a, b).unwrap()).unwrap().values;
        let order = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
            idx
        };
        assert_eq!(order(&lin), order(&exact));
    }

    #[test]
    fn linear_single_unit_and_parity() {
        let lin = linear_max_allocation(&[3.0], &[7.0]).unwrap();
        assert!(close(lin.allocation.values[0], 7.0, 1e-12));

        let a = [4.0, 1.0, 2.5];
        let lin = linear_max_allocation(&a, &a).unwrap();
        assert_eq!(lin.rates.beta, 1.0);
        assert_eq!(lin.rates.weights, vec![0.5, 0.5]);
        assert_eq!(lin.allocation.values, a.to_vec());

        assert!(matches!(
            linear_max_allocation(&[0.0, 0.0], &[0.0, 0.0]),
            Err(Error::SingularScale(_))
        ));
    }

    #[test]
    fn two_function_consistency() {
        let (a, b) = table1();
        let (alloc, rates) = two_function_allocation(&a, &b).unwrap();
        let lin = linear_max_allocation(&a, &b).unwrap();
        assert_eq!(alloc.values, lin.allocation.values);
        assert_eq!(rates, lin.rates);

        let f = [10.0, 20.0, 5.0];
        let (same, _) = two_function_allocation(&f, &f).unwrap();
        assert_eq!(same.values, f.to_vec());
    }

    #[test]
    fn two_function_tracks_exact_shapley_of_var_max() {
        struct MaxOf<'a>(&'a VarCost, &'a VarCost);
        impl SetCost for MaxOf<'_> {
            fn len(&self) -> usize {
                self.0.len()
            }
            fn cost(&self, s: &[usize]) -> f64 {
                self.0.cost(s).max(self.1.cost(s))
            }
        }

        // RMS error relative to the total cost, averaged over 20 draws.
        let gen = PnlGenerator::default();
        let errors: Vec<f64> = (0..20)
            .map(|seed| {
                let mut rng = substream_rng(seed, 0);
                let f = VarCost::new(gen.generate(6, &mut rng).unwrap(), 0.99).unwrap();
                let g = VarCost::new(gen.generate(6, &mut rng).unwrap(), 0.99).unwrap();
                let af = exact_shapley(&f).unwrap().values;
                let ag = exact_shapley(&g).unwrap().values;
                let (approx, _) = two_function_allocation(&af, &ag).unwrap();
                let exact = exact_shapley(&MaxOf(&f, &g)).unwrap().values;
                let rms = (approx
                    .values
                    .iter()
                    .zip(&exact)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    / 6.0)
                    .sqrt();
                rms / exact.iter().sum::<f64>()
            })
            .collect();
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        assert!(mean <= 0.02, "mean relative RMS {mean}: {errors:?}");
    }

    fn random_hierarchy(rng: &mut impl Rng) -> HierarchyComponents {
        let mut draw = || rng.random_range(50.0..=250.0);
        let consolidated = ComponentPair {
            f: (0..4).map(|_| draw()).collect(),
            g: (0..4).map(|_| draw()).collect(),
        };
        let mut x = ComponentPair {
            f: vec![0.0; 4],
            g: vec![0.0; 4],
        };
        let mut y = x.clone();
        for k in 0..2 {
            x.f[k] = draw();
            x.g[k] = draw();
        }
        for k in 2..4 {
            y.f[k] = draw();
            y.g[k] = draw();
        }
        HierarchyComponents::new(consolidated, vec![x, y], vec![Some(0), Some(0), Some(1), Some(1)])
            .unwrap()
    }

    #[test]
    fn joint_probability_partition_is_exact() {
        let mut rng = substream_rng(3, 0);
        for seed in 0..5 {
            let h = random_hierarchy(&mut rng);
            let jp = hierarchy_joint_probabilities(&h, 20_001, seed).unwrap();
            let c = &jp.half_counts;
            assert_eq!(c[0] + c[1] + c[2] + c[3], 2 * jp.samples);
            assert_eq!(c[2] + c[3], c[4] + c[5]);
            let p = &jp.probabilities;
            assert!((p[0] + p[1] + p[2] + p[3] - 1.0).abs() <= 4.0 * f64::EPSILON);
            assert!((p[2] + p[3] - (p[4] + p[5])).abs() <= 4.0 * f64::EPSILON);
        }
    }

    #[test]
    fn degenerate_hierarchy_probabilities() {
        let (a, b) = table1();
        let zero = ComponentPair {
            f: vec![0.0; 5],
            g: vec![0.0; 5],
        };
        let h = HierarchyComponents::new(
            ComponentPair { f: a.clone(), g: b.clone() },
            vec![zero.clone(), zero],
            vec![Some(0), Some(0), Some(1), Some(1), None],
        )
        .unwrap();
        let jp = hierarchy_joint_probabilities(&h, 100_000, 9).unwrap();
        assert_eq!(jp.consolidated(), 1.0);
        let s = dominance_probability(&a, &b).unwrap();
        // theta pair approximates (1 - p, p) of the normal approximation.
        assert!((jp.probabilities[0] - (1.0 - s.p)).abs() < 0.05);
        assert!((jp.probabilities[1] - s.p).abs() < 0.05);

        let (alloc, rates) = hierarchy_allocation(&h, 1000, 1).unwrap();
        let (two, two_rates) = two_function_allocation(&a, &b).unwrap();
        assert_eq!(alloc.values, two.values);
        assert_eq!(&rates.weights[..2], &two_rates.weights[..]);
        assert!(rates.weights[2..].iter().all(|&w| w == 0.0));
    }

    #[test]
    fn equal_components_split_evenly() {
        let v = vec![5.0, 7.0, 3.0, 9.0];
        let h = HierarchyComponents::new(
            ComponentPair { f: v.clone(), g: v.clone() },
            vec![
                ComponentPair { f: vec![6.0, 2.0, 0.0, 0.0], g: vec![6.0, 2.0, 0.0, 0.0] },
                ComponentPair { f: vec![0.0, 0.0, 8.0, 4.0], g: vec![0.0, 0.0, 8.0, 4.0] },
            ],
            vec![Some(0), Some(0), Some(1), Some(1)],
        )
        .unwrap();
        let jp = hierarchy_joint_probabilities(&h, 10_000, 4).unwrap();
        let c = &jp.half_counts;
        assert_eq!(c[0], c[1]);
        assert_eq!(c[2], c[3]);
        assert_eq!(c[4], c[5]);
    }

    #[test]
    fn joint_probabilities_agree_across_seeds() {
        let mut rng = substream_rng(17, 0);
        let h = random_hierarchy(&mut rng);
        let n = 100_000u64;
        let p1 = hierarchy_joint_probabilities(&h, n, 1).unwrap().probabilities;
        let p2 = hierarchy_joint_probabilities(&h, n, 2).unwrap().probabilities;
        for (x, y) in p1.iter().zip(&p2) {
            let pbar = 0.5 * (x + y);
            let se = (2.0 * pbar * (1.0 - pbar) / n as f64).sqrt();
            assert!((x - y).abs() <= 3.0 * se.max(1e-12), "{x} vs {y}");
        }
    }

    #[test]
    fn hierarchy_allocation_is_efficient_and_membership_aware() {
        let mut rng = substream_rng(7, 0);
        let h = random_hierarchy(&mut rng);
        let (alloc, rates) = hierarchy_allocation(&h, 50_000, 7).unwrap();
        let total = NestedMaxCost::new(h.clone()).cost(&[0, 1, 2, 3]);
        assert!((alloc.total() - total).abs() <= 1e-10 * total);
        // Unit 0 sits in X: its Y components are zero, so w_fy, w_gy contribute nothing.
        let manual: f64 = (0..4).map(|j| rates.weights[j] * h.component(j)[0]).sum();
        assert!((manual - alloc.values[0]).abs() < 1e-9);
        assert_eq!(h.component(4)[0], 0.0);
        assert_eq!(h.component(5)[0], 0.0);
        assert!(hierarchy_joint_probabilities(&h, 0, 1).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn rates_are_scale_invariant(
            rows in prop::collection::vec((0.1f64..100.0, 0.1f64..100.0), 1..12),
            t in prop::sample::select(vec![0.1f64, 3.0]),
        ) {
            let (a, b): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
            let base = linear_max_allocation(&a, &b).unwrap();
            let sa: Vec<f64> = a.iter().map(|x| x * t).collect();
            let sb: Vec<f64> = b.iter().map(|x| x * t).collect();
            let scaled = linear_max_allocation(&sa, &sb).unwrap();
            prop_assert!((base.stats.p - scaled.stats.p).abs() < 1e-12);
            prop_assert!((base.rates.beta - scaled.rates.beta).abs() < 1e-10 * base.rates.beta);
            for (w0, w1) in base.rates.weights.iter().zip(&scaled.rates.weights) {
                prop_assert!((w0 - w1).abs() < 1e-10 * w0.abs().max(1e-12));
            }
            for (x0, x1) in base.allocation.values.iter().zip(&scaled.allocation.values) {
                prop_assert!((x0 * t - x1).abs() < 1e-9 * x1.abs().max(1.0));
            }
        }

        #[test]
        fn every_method_is_efficient(
            rows in prop::collection::vec((0.0f64..100.0, 0.0f64..100.0), 1..9)
        ) {
            let (a, b): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
            let total = a.iter().sum::<f64>().max(b.iter().sum());
            prop_assume!(total > 1e-6);
            let tol = 1e-10 * total;
            prop_assert!((standalone_allocation(&a, &b).unwrap().total() - total).abs() <= tol);
            prop_assert!((euler_allocation(&a, &b).unwrap().total() - total).abs() <= tol);
            if let Ok(lin) = linear_max_allocation(&a, &b) {
                prop_assert!((lin.allocation.total() - total).abs() <= tol);
            }
            let cost = AdditiveMaxCost::new(a, b).unwrap();
            prop_assert!((shapley_allocation(&cost).unwrap().total() - total).abs() <= tol);
        }
    }
}
