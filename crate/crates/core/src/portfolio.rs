//! Business units, capital components and legal-entity membership.
//!
//! Everything is stored as capital amounts. Files may instead carry raw
//! exposures together with capital ratios; those are converted on load.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default identifier of the consolidated (top-level) legal entity.
pub const CONSOLIDATED: &str = "consolidated";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapitalRatios {
    pub cet1: f64,
    pub t1: f64,
}

impl CapitalRatios {
    pub fn new(cet1: f64, t1: f64) -> Result<Self> {
        let ratios = CapitalRatios { cet1, t1 };
        ratios.validate()?;
        Ok(ratios)
    }

    /// Basel III minima: 4.5% CET1 on RWA, 3% T1 on LBS.
    pub fn basel_minimum() -> Self {
        CapitalRatios {
            cet1: 0.045,
            t1: 0.03,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [("cet1", self.cet1), ("t1", self.t1)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::validation(format!(
                    "ratios: field `{name}` must lie in (0, 1) (got {v})"
                )));
            }
        }
        Ok(())
    }
}

/// RWA and LBS capital of a single entity or unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapitalPair {
    pub rwa: f64,
    pub lbs: f64,
}

impl CapitalPair {
    /// The capital requirement actually in force: the larger component.
    pub fn binding(&self) -> f64 {
        self.rwa.max(self.lbs)
    }
}

/// Converts exposures to capital: `CET1 x RWA` and `T1 x LBS`.
pub fn capital_from_exposures(
    rwa_exposure: f64,
    lbs_exposure: f64,
    ratios: CapitalRatios,
) -> Result<CapitalPair> {
    ratios.validate()?;
    for (name, v) in [("rwa_exposure", rwa_exposure), ("lbs_exposure", lbs_exposure)] {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::validation(format!(
                "field `{name}` must be a finite amount >= 0 (got {v})"
            )));
        }
    }
    Ok(CapitalPair {
        rwa: ratios.cet1 * rwa_exposure,
        lbs: ratios.t1 * lbs_exposure,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusinessUnit {
    pub id: String,
    pub name: String,
    pub rwa_capital: f64,
    pub lbs_capital: f64,
    pub revenue: f64,
    /// Subsidiary the unit books into; `None` for consolidated-only units.
    pub entity: Option<String>,
    /// RWA capital measured under the subsidiary's own regulator.
    pub sub_rwa_capital: f64,
    /// LBS capital measured under the subsidiary's own regulator.
    pub sub_lbs_capital: f64,
}

impl BusinessUnit {
    pub fn new(id: &str, rwa_capital: f64, lbs_capital: f64, revenue: f64) -> Self {
        BusinessUnit {
            id: id.to_string(),
            name: id.to_string(),
            rwa_capital,
            lbs_capital,
            revenue,
            entity: None,
            sub_rwa_capital: 0.0,
            sub_lbs_capital: 0.0,
        }
    }

    pub fn capital(&self) -> CapitalPair {
        CapitalPair {
            rwa: self.rwa_capital,
            lbs: self.lbs_capital,
        }
    }

    pub fn standalone(&self) -> f64 {
        self.capital().binding()
    }

    fn has_subsidiary_components(&self) -> bool {
        self.sub_rwa_capital != 0.0 || self.sub_lbs_capital != 0.0
    }
}

/// Consolidated entity plus pairwise-disjoint subsidiaries.
#[derive(Debug, Clone, PartialEq)]
pub struct LegalEntityTree {
    pub consolidated: String,
    pub subsidiaries: Vec<String>,
    /// Per unit, the index into `subsidiaries` (or `None`).
    pub membership: Vec<Option<usize>>,
}

impl LegalEntityTree {
    pub fn members(&self, subsidiary: usize) -> Vec<usize> {
        self.membership
            .iter()
            .enumerate()
            .filter_map(|(i, m)| (*m == Some(subsidiary)).then_some(i))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    units: Vec<BusinessUnit>,
    tree: LegalEntityTree,
    ratios: Option<CapitalRatios>,
}

impl Portfolio {
    /// Builds and validates a portfolio. Unit order is preserved.
    pub fn new(
        units: Vec<BusinessUnit>,
        subsidiaries: Vec<String>,
        ratios: Option<CapitalRatios>,
    ) -> Result<Self> {
        Self::with_consolidated(units, CONSOLIDATED.to_string(), subsidiaries, ratios)
    }

    pub fn with_consolidated(
        units: Vec<BusinessUnit>,
        consolidated: String,
        subsidiaries: Vec<String>,
        ratios: Option<CapitalRatios>,
    ) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::validation("portfolio has an empty unit list"));
        }
        if let Some(r) = &ratios {
            r.validate()?;
        }
        let mut seen_subs = HashSet::new();
        for s in &subsidiaries {
            if s == &consolidated {
                return Err(Error::validation(format!(
                    "subsidiary `{s}` has the same id as the consolidated entity"
                )));
            }
            if !seen_subs.insert(s.as_str()) {
                return Err(Error::validation(format!("subsidiary `{s}` listed twice")));
            }
        }

        let mut ids = HashSet::new();
        let mut membership = Vec::with_capacity(units.len());
        for u in &units {
            if !ids.insert(u.id.as_str()) {
                return Err(Error::validation(format!("duplicate unit id `{}`", u.id)));
            }
            for (field, v) in [
                ("rwa_capital", u.rwa_capital),
                ("lbs_capital", u.lbs_capital),
                ("sub_rwa_capital", u.sub_rwa_capital),
                ("sub_lbs_capital", u.sub_lbs_capital),
            ] {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::validation(format!(
                        "unit `{}`: field `{field}` must be a finite amount >= 0 (got {v})",
                        u.id
                    )));
                }
            }
            if !u.revenue.is_finite() {
                return Err(Error::validation(format!(
                    "unit `{}`: field `revenue` must be finite",
                    u.id
                )));
            }
            let member = match u.entity.as_deref() {
                None => None,
                Some(e) if e == consolidated || e.is_empty() => None,
                Some(e) => match subsidiaries.iter().position(|s| s == e) {
                    Some(idx) => Some(idx),
                    None => {
                        return Err(Error::validation(format!(
                            "unit `{}`: field `entity` names unknown subsidiary `{e}`",
                            u.id
                        )))
                    }
                },
            };
            if member.is_none() && u.has_subsidiary_components() {
                return Err(Error::validation(format!(
                    "unit `{}`: has subsidiary capital components but no subsidiary membership",
                    u.id
                )));
            }
            membership.push(member);
        }

        Ok(Portfolio {
            units,
            tree: LegalEntityTree {
                consolidated,
                subsidiaries,
                membership,
            },
            ratios,
        })
    }

    /// The five-unit stylized bank used throughout the documentation.
    pub fn table1() -> Self {
        let rows = [
            ("A", 230.0, 150.0, 23.0),
            ("B", 120.0, 250.0, 25.0),
            ("C", 150.0, 250.0, 25.0),
            ("D", 250.0, 150.0, 25.0),
            ("E", 150.0, 200.0, 20.0),
        ];
        let units = rows
            .iter()
            .map(|&(id, rwa, lbs, rev)| BusinessUnit::new(id, rwa, lbs, rev))
            .collect();
        Portfolio::new(units, Vec::new(), None).expect("built-in fixture is valid")
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn units(&self) -> &[BusinessUnit] {
        &self.units
    }

    pub fn tree(&self) -> &LegalEntityTree {
        &self.tree
    }

    pub fn ratios(&self) -> Option<CapitalRatios> {
        self.ratios
    }

    pub fn ids(&self) -> Vec<String> {
        self.units.iter().map(|u| u.id.clone()).collect()
    }

    pub fn rwa_capital(&self) -> Vec<f64> {
        self.units.iter().map(|u| u.rwa_capital).collect()
    }

    pub fn lbs_capital(&self) -> Vec<f64> {
        self.units.iter().map(|u| u.lbs_capital).collect()
    }

    pub fn revenue(&self) -> Vec<f64> {
        self.units.iter().map(|u| u.revenue).collect()
    }

    pub fn total_rwa(&self) -> f64 {
        self.units.iter().map(|u| u.rwa_capital).sum()
    }

    pub fn total_lbs(&self) -> f64 {
        self.units.iter().map(|u| u.lbs_capital).sum()
    }

    /// Whether any unit carries subsidiary-level capital components.
    pub fn has_hierarchy(&self) -> bool {
        !self.tree.subsidiaries.is_empty()
            && self.units.iter().any(|u| u.has_subsidiary_components())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: RawPortfolio = serde_json::from_str(s)?;
        raw.into_portfolio()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&RawPortfolio::from(self))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json_string()?)?;
        Ok(())
    }
}

pub fn load_portfolio(path: impl AsRef<Path>) -> Result<Portfolio> {
    Portfolio::load(path)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RawEntity {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Serialize, Deserialize)]
struct RawUnit {
    id: String,
    #[serde(default)]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rwa_capital: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lbs_capital: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rwa_exposure: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lbs_exposure: Option<f64>,
    #[serde(default)]
    revenue: f64,
    #[serde(default)]
    entity: Option<RawEntity>,
    #[serde(default, skip_serializing_if = "is_zero")]
    sub_rwa_capital: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    sub_lbs_capital: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

#[derive(Debug, Serialize, Deserialize)]
struct RawPortfolio {
    units: Vec<RawUnit>,
    #[serde(default)]
    subsidiaries: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    consolidated: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ratios: Option<CapitalRatios>,
}

impl RawPortfolio {
    fn into_portfolio(self) -> Result<Portfolio> {
        let ratios = match self.ratios {
            Some(r) => Some(CapitalRatios::new(r.cet1, r.t1)?),
            None => None,
        };
        let mut units = Vec::with_capacity(self.units.len());
        for raw in self.units {
            let rwa = component(&raw.id, "rwa", raw.rwa_capital, raw.rwa_exposure, ratios)?;
            let lbs = component(&raw.id, "lbs", raw.lbs_capital, raw.lbs_exposure, ratios)?;
            let entity = match raw.entity {
                None => None,
                Some(RawEntity::One(e)) => Some(e),
                Some(RawEntity::Many(list)) => {
                    let mut distinct: Vec<String> = Vec::new();
                    for e in list {
                        if !distinct.contains(&e) {
                            distinct.push(e);
                        }
                    }
                    match distinct.len() {
                        0 => None,
                        1 => distinct.pop(),
                        _ => {
                            return Err(Error::validation(format!(
                                "unit `{}`: field `entity` lists overlapping subsidiaries {}",
                                raw.id,
                                distinct.join(", ")
                            )))
                        }
                    }
                }
            };
            units.push(BusinessUnit {
                name: raw.name.unwrap_or_else(|| raw.id.clone()),
                id: raw.id,
                rwa_capital: rwa,
                lbs_capital: lbs,
                revenue: raw.revenue,
                entity,
                sub_rwa_capital: raw.sub_rwa_capital,
                sub_lbs_capital: raw.sub_lbs_capital,
            });
        }
        Portfolio::with_consolidated(
            units,
            self.consolidated.unwrap_or_else(|| CONSOLIDATED.to_string()),
            self.subsidiaries,
            ratios,
        )
    }
}

fn component(
    id: &str,
    which: &str,
    capital: Option<f64>,
    exposure: Option<f64>,
    ratios: Option<CapitalRatios>,
) -> Result<f64> {
    match (capital, exposure) {
        (Some(c), _) => Ok(c),
        (None, Some(x)) => {
            let ratios = ratios.ok_or_else(|| {
                Error::validation(format!(
                    "unit `{id}`: field `{which}_exposure` given without portfolio `ratios`"
                ))
            })?;
            if !(x >= 0.0) {
                return Err(Error::validation(format!(
                    "unit `{id}`: field `{which}_exposure` must be >= 0 (got {x})"
                )));
            }
            let pair = if which == "rwa" {
                capital_from_exposures(x, 0.0, ratios)?.rwa
            } else {
                capital_from_exposures(0.0, x, ratios)?.lbs
            };
            Ok(pair)
        }
        (None, None) => Err(Error::validation(format!(
            "unit `{id}`: field `{which}_capital` is missing"
        ))),
    }
}

impl From<&Portfolio> for RawPortfolio {
    fn from(p: &Portfolio) -> Self {
        RawPortfolio {
            units: p
                .units
                .iter()
                .map(|u| RawUnit {
                    id: u.id.clone(),
                    name: Some(u.name.clone()),
                    rwa_capital: Some(u.rwa_capital),
                    lbs_capital: Some(u.lbs_capital),
                    rwa_exposure: None,
                    lbs_exposure: None,
                    revenue: u.revenue,
                    entity: u.entity.clone().map(RawEntity::One),
                    sub_rwa_capital: u.sub_rwa_capital,
                    sub_lbs_capital: u.sub_lbs_capital,
                })
                .collect(),
            subsidiaries: p.tree.subsidiaries.clone(),
            consolidated: (p.tree.consolidated != CONSOLIDATED).then(|| p.tree.consolidated.clone()),
            ratios: p.ratios,
        }
    }
}
