use serde::{Deserialize, Serialize};

use crate::conditioning::{conditional_state, fidelity, wigner, ConditioningMethod, WignerGrid};
use crate::error::{Error, Result};
use crate::stategen::{ideal_cat, spdc_state, CatKind};

use super::config::{round_sig, CatConfig, Party, SweepConfig};
use super::sweep::{provenance, Provenance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatSummary {
    pub name: String,
    pub xi: f64,
    pub order: usize,
    pub target: f64,
    pub alpha: f64,
    pub components: usize,
    pub probability: f64,
    pub fidelity: f64,
    pub method: ConditioningMethod,
    pub wigner_min: f64,
    pub wigner_integral: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CatResult {
    pub summary: CatSummary,
    pub wigner: WignerGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatReport {
    pub cats: Vec<CatSummary>,
    pub provenance: Provenance,
}

pub fn run_cat_entry(cfg: &SweepConfig, cat: &CatConfig) -> Result<CatResult> {
    let state = spdc_state(&cfg.spdc_params(cat.xi)).map_err(|e| e.at("xi", cat.xi))?;
    let (measured, cutoff) = match cat.measured {
        Party::A => (0, cfg.cutoffs.b),
        Party::B => (1, cfg.cutoffs.a),
    };
    let cond = conditional_state(&state, measured, cat.order, cat.quadrature, cat.target, &cat.settings())
        .map_err(|e| e.at("target", cat.target))?;
    let ideal = ideal_cat(cat.alpha, CatKind::from_components(cat.components)?, cutoff)?;
    let f = fidelity(&cond.state, &ideal)?;
    let grid = wigner(&cond.state, &cat.grid)?;
    let wigner_min = grid.values.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    Ok(CatResult {
        summary: CatSummary {
            name: cat.name.clone(),
            xi: cat.xi,
            order: cat.order,
            target: cat.target,
            alpha: cat.alpha,
            components: cat.components,
            probability: round_sig(cond.probability),
            fidelity: round_sig(f),
            method: cond.method,
            wigner_min: round_sig(wigner_min),
            wigner_integral: round_sig(grid.integral),
        },
        wigner: grid,
    })
}

/// Every `[[cat]]` entry of the config, in order.
pub fn run_cat(cfg: &SweepConfig) -> Result<(CatReport, Vec<WignerGrid>)> {
    cfg.validate()?;
    if cfg.cat.is_empty() {
        return Err(Error::Config("config has no [[cat]] entries".into()));
    }
    let results = cfg
        .cat
        .iter()
        .map(|c| run_cat_entry(cfg, c))
        .collect::<Result<Vec<_>>>()?;
    let (cats, grids) = results.into_iter().map(|r| (r.summary, r.wigner)).unzip();
    Ok((
        CatReport {
            cats,
            provenance: provenance(cfg)?,
        },
        grids,
    ))
}

/// Wigner grid as a CSV matrix: header `x\p,p_0,…`, then one row per `x`.
pub fn wigner_csv(grid: &WignerGrid) -> String {
    let mut out = String::from("x\\p");
    for p in grid.spec.ps() {
        out.push(',');
        out.push_str(&round_sig(p).to_string());
    }
    out.push('\n');
    for (x, row) in grid.spec.xs().iter().zip(&grid.values) {
        out.push_str(&round_sig(*x).to_string());
        for v in row {
            out.push(',');
            out.push_str(&round_sig(*v).to_string());
        }
        out.push('\n');
    }
    out
}

pub fn fidelity_csv(report: &CatReport) -> String {
    let mut out = String::from("name,xi,order,target,alpha,components,probability,fidelity,wigner_min\n");
    for c in &report.cats {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            c.name, c.xi, c.order, c.target, c.alpha, c.components, c.probability, c.fidelity, c.wigner_min
        ));
    }
    out
}
