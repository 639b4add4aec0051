use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditioning::s_cr;
use crate::criteria::{evaluate, EvalOptions, SteeringDirection, SIGN_BAND};
use crate::error::{Error, Result};
use crate::fock::{DensityOperator, LEAKAGE_FAIL, LEAKAGE_WARN};
use crate::stategen::{mixture_state, photon_subtracted_tmsv, spdc_state, MixtureParams, PumpModel};

use super::config::{round_sig, Family, SweepConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WitnessId {
    Cm,
    Hz,
    Lr,
    Cr,
}

impl std::str::FromStr for WitnessId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cm" => Ok(WitnessId::Cm),
            "hz" => Ok(WitnessId::Hz),
            "lr" => Ok(WitnessId::Lr),
            "cr" => Ok(WitnessId::Cr),
            _ => Err(Error::Config(format!("unknown witness {s:?} (expected cm, hz, lr or cr)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowDiagnostics {
    pub g_x: f64,
    pub g_p: f64,
    pub w_lr: f64,
    pub w_hz: f64,
    pub c1: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: f64,
    pub s_cm: f64,
    pub s_hz: f64,
    pub s_lr: f64,
    /// One entry per CR column; `None` off the CR sub-grid.
    pub s_cr: Vec<Option<f64>>,
    pub diagnostics: RowDiagnostics,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub witness: String,
    pub value: f64,
    /// Adjacent sweep points whose witness signs differ.
    pub bracket: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub sign_band: f64,
    pub threshold: f64,
    pub leakage_warn: f64,
    pub leakage_fail: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub software: String,
    pub experiment: String,
    pub family: Family,
    pub parameter: String,
    pub cutoffs: [usize; 2],
    pub direction: String,
    pub hz_frame: String,
    pub bin_width: f64,
    pub probability_floor: f64,
    pub cr_every: usize,
    pub classical_pump: bool,
    pub approximations: Vec<String>,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// `s_cr`, or `s_cr_<tag>` per order pair when several are requested.
    pub cr_columns: Vec<String>,
    pub rows: Vec<SweepRow>,
    pub thresholds: Vec<Threshold>,
    pub provenance: Provenance,
}

/// `3rd`, `6th`, …
pub fn ordinal(n: usize) -> String {
    let suffix = match (n % 10, n % 100) {
        (_, 11..=13) => "th",
        (1, _) => "st",
        (2, _) => "nd",
        (3, _) => "rd",
        _ => "th",
    };
    format!("{n}{suffix}")
}

fn cr_directions(cfg: &SweepConfig) -> Result<(Vec<String>, Vec<SteeringDirection>)> {
    let spec = cfg.direction_spec()?;
    if cfg.cr_orders.is_empty() {
        return Ok((vec!["s_cr".into()], vec![spec.direction()]));
    }
    Ok(cfg
        .cr_orders
        .iter()
        .map(|&[k, l]| (format!("s_cr_{}", ordinal(k + l)), spec.with_orders(k, l)))
        .unzip())
}

pub fn provenance(cfg: &SweepConfig) -> Result<Provenance> {
    let family = cfg.family()?;
    let mut approximations = vec![format!("fock_truncation({},{})", cfg.cutoffs.a, cfg.cutoffs.b)];
    let classical = family == Family::Spdc && cfg.physics.pump == PumpModel::Classical;
    if family == Family::Spdc {
        let alpha = cfg.physics.alpha_p.unwrap_or(5.0);
        approximations.push(if classical {
            format!("classical_pump(alpha_p={alpha})")
        } else {
            format!("quantized_pump(alpha_p={alpha})")
        });
    }
    let hz_frame = serde_json::to_value(cfg.hz_frame)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default();
    Ok(Provenance {
        software: format!("hqsteer-core {}", env!("CARGO_PKG_VERSION")),
        experiment: format!("{:?}", cfg.experiment).to_lowercase(),
        family,
        parameter: family.parameter().name().into(),
        cutoffs: [cfg.cutoffs.a, cfg.cutoffs.b],
        direction: cfg.direction.map(|d| d.direction().label()).unwrap_or_default(),
        hz_frame,
        bin_width: cfg.binning.bin_width,
        probability_floor: cfg.binning.probability_floor,
        cr_every: cfg.binning.cr_every,
        classical_pump: classical,
        approximations,
        tolerances: Tolerances {
            sign_band: SIGN_BAND,
            threshold: cfg.threshold.tolerance,
            leakage_warn: LEAKAGE_WARN,
            leakage_fail: LEAKAGE_FAIL,
        },
    })
}

/// The configured family's state at swept parameter value `x`.
pub fn build_state(cfg: &SweepConfig, x: f64) -> Result<DensityOperator> {
    let (ca, cb) = (cfg.cutoffs.a, cfg.cutoffs.b);
    let r = cfg.physics.r.unwrap_or_default();
    match cfg.family()? {
        Family::Spdc => spdc_state(&cfg.spdc_params(x)),
        Family::PhotonSubtracted => Ok(photon_subtracted_tmsv(r, x, x, ca, cb)?.0),
        Family::Mixture => mixture_state(
            &MixtureParams {
                p_tmsv: x,
                r,
                r_a: cfg.physics.r_a.unwrap_or_default(),
                r_b: cfg.physics.r_b.unwrap_or_default(),
            },
            ca,
            cb,
        ),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Column {
    Cm,
    Hz,
    Lr,
    Cr(usize),
}

fn moment_row(cfg: &SweepConfig, x: f64, state: &DensityOperator) -> Result<SweepRow> {
    let dir = cfg.direction_spec()?.direction();
    let opts = EvalOptions {
        hz_frame: cfg.hz_frame,
        conditioning: None,
    };
    let rep = evaluate(state, &dir, &opts)?;
    let d = &rep.diagnostics;
    let mut flags: Vec<String> = state
        .truncation_warnings()
        .iter()
        .map(|w| format!("leak_{}={:.2e}", if w.mode == 0 { "A" } else { "B" }, w.population))
        .collect();
    flags.dedup();
    Ok(SweepRow {
        param: x,
        s_cm: round_sig(rep.s_cm),
        s_hz: round_sig(rep.s_hz),
        s_lr: round_sig(rep.s_lr),
        s_cr: Vec::new(),
        diagnostics: RowDiagnostics {
            g_x: round_sig(d.g_x),
            g_p: round_sig(d.g_p),
            w_lr: round_sig(d.w_lr),
            w_hz: round_sig(d.w_hz),
            c1: round_sig(d.c1),
            c2: round_sig(d.c2),
        },
        flags,
    })
}

fn cr_value(cfg: &SweepConfig, state: &DensityOperator, dir: &SteeringDirection) -> Result<f64> {
    Ok(round_sig(s_cr(state, dir, &cfg.binning.settings())?.value))
}

fn column_value(cfg: &SweepConfig, col: Column, x: f64, crs: &[SteeringDirection]) -> Result<f64> {
    let name = cfg.family()?.parameter().name();
    let inner = || -> Result<f64> {
        let state = build_state(cfg, x)?;
        match col {
            Column::Cr(i) => cr_value(cfg, &state, &crs[i]),
            _ => {
                let row = moment_row(cfg, x, &state)?;
                Ok(match col {
                    Column::Cm => row.s_cm,
                    Column::Hz => row.s_hz,
                    _ => row.s_lr,
                })
            }
        }
    };
    inner().map_err(|e| e.at(name, x))
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

/// Finds a sign change of `f` in `[lo, hi]`, where `f(lo)` and `f(hi)`
/// already have opposite signs, to within `tol`.
pub fn bisect(mut f: impl FnMut(f64) -> Result<f64>, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let neg_lo = f(lo)? < 0.0;
    if (f(hi)? < 0.0) == neg_lo {
        return Err(Error::NoSignChange {
            witness: "bisection".into(),
            lo,
            hi,
        });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if (f(mid)? < 0.0) == neg_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Same as [`bisect`] with the endpoint signs already known.
fn bisect_known(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut lo: f64,
    mut hi: f64,
    neg_lo: bool,
    tol: f64,
) -> Result<f64> {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if (f(mid)? < 0.0) == neg_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(round_sig(0.5 * (lo + hi)))
}

fn crossings(xs: &[f64], vs: &[Option<f64>]) -> Vec<(f64, f64, bool)> {
    let known: Vec<(f64, f64)> = xs.iter().zip(vs).filter_map(|(&x, v)| v.map(|v| (x, v))).collect();
    known
        .windows(2)
        .filter(|w| (w[0].1 < 0.0) != (w[1].1 < 0.0))
        .map(|w| (w[0].0, w[1].0, w[0].1 < 0.0))
        .collect()
}

/// Evaluates the configured sweep. `workers = 0` uses the global pool.
pub fn run_sweep(cfg: &SweepConfig, workers: usize) -> Result<SweepResult> {
    cfg.validate()?;
    let range = cfg.sweep_range()?;
    let name = cfg.family()?.parameter().name();
    let xs = range.points();
    let (cr_columns, crs) = cr_directions(cfg)?;
    let every = cfg.binning.cr_every;
    let on_subgrid = |i: usize| every > 0 && (i.is_multiple_of(every) || i + 1 == xs.len());

    with_pool(workers, || -> Result<SweepResult> {
        let mut rows: Vec<SweepRow> = xs
            .par_iter()
            .enumerate()
            .map(|(i, &x)| {
                log::debug!("evaluating {name} = {x}");
                let state = build_state(cfg, x).map_err(|e| e.at(name, x))?;
                let mut row = moment_row(cfg, x, &state).map_err(|e| e.at(name, x))?;
                row.s_cr = if on_subgrid(i) {
                    crs.iter()
                        .map(|d| cr_value(cfg, &state, d).map(Some).map_err(|e| e.at(name, x)))
                        .collect::<Result<_>>()?
                } else {
                    vec![None; crs.len()]
                };
                Ok(row)
            })
            .collect::<Result<_>>()?;

        // Fill CR between sub-grid points whose signs differ.
        if every > 1 {
            let mut fill: Vec<(usize, usize)> = Vec::new();
            for c in 0..crs.len() {
                let vals: Vec<Option<f64>> = rows.iter().map(|r| r.s_cr[c]).collect();
                for (lo, hi, _) in crossings(&xs, &vals) {
                    for (i, &x) in xs.iter().enumerate() {
                        if x > lo && x < hi {
                            fill.push((i, c));
                        }
                    }
                }
            }
            let filled: Vec<(usize, usize, f64)> = fill
                .par_iter()
                .map(|&(i, c)| Ok((i, c, column_value(cfg, Column::Cr(c), xs[i], &crs)?)))
                .collect::<Result<_>>()?;
            for (i, c, v) in filled {
                rows[i].s_cr[c] = Some(v);
            }
        }
        let leaky = rows.iter().filter(|r| r.flags.iter().any(|f| f.starts_with("leak_"))).count();
        if leaky > 0 {
            log::warn!("{leaky} of {} points carry top-level populations above {LEAKAGE_WARN:.0e}", rows.len());
        }
        for (i, row) in rows.iter_mut().enumerate() {
            if row.s_cr.iter().any(Option::is_none) && !on_subgrid(i) {
                row.flags.push("cr_skipped".into());
            }
        }

        let mut thresholds = Vec::new();
        if cfg.threshold.refine {
            let mut columns: Vec<(String, Column, Vec<Option<f64>>)> = vec![
                ("cm".into(), Column::Cm, rows.iter().map(|r| Some(r.s_cm)).collect()),
                ("hz".into(), Column::Hz, rows.iter().map(|r| Some(r.s_hz)).collect()),
                ("lr".into(), Column::Lr, rows.iter().map(|r| Some(r.s_lr)).collect()),
            ];
            for (c, label) in cr_columns.iter().enumerate() {
                let id = label.trim_start_matches("s_").to_string();
                columns.push((id, Column::Cr(c), rows.iter().map(|r| r.s_cr[c]).collect()));
            }
            let jobs: Vec<(String, Column, f64, f64, bool)> = columns
                .into_iter()
                .flat_map(|(id, col, vals)| {
                    crossings(&xs, &vals)
                        .into_iter()
                        .map(move |(lo, hi, neg)| (id.clone(), col, lo, hi, neg))
                })
                .collect();
            thresholds = jobs
                .par_iter()
                .map(|(id, col, lo, hi, neg)| {
                    let f = |x: f64| column_value(cfg, *col, x, &crs);
                    Ok(Threshold {
                        witness: id.clone(),
                        value: bisect_known(f, *lo, *hi, *neg, cfg.threshold.tolerance)?,
                        bracket: [*lo, *hi],
                    })
                })
                .collect::<Result<_>>()?;
        }

        Ok(SweepResult {
            cr_columns,
            rows,
            thresholds,
            provenance: provenance(cfg)?,
        })
    })?
}

/// Locates the first sign change of one witness along the configured sweep
/// and refines it by bisection.
pub fn find_threshold(cfg: &SweepConfig, witness: WitnessId, workers: usize) -> Result<f64> {
    cfg.validate()?;
    let range = cfg.sweep_range()?;
    let xs = range.points();
    let (_, crs) = cr_directions(cfg)?;
    let crs = if cfg.cr_orders.is_empty() {
        crs
    } else {
        vec![cfg.direction_spec()?.direction()]
    };
    let col = match witness {
        WitnessId::Cm => Column::Cm,
        WitnessId::Hz => Column::Hz,
        WitnessId::Lr => Column::Lr,
        WitnessId::Cr => Column::Cr(0),
    };
    with_pool(workers, || -> Result<f64> {
        let vals: Vec<Option<f64>> = xs
            .par_iter()
            .map(|&x| column_value(cfg, col, x, &crs).map(Some))
            .collect::<Result<_>>()?;
        let (lo, hi, neg) = crossings(&xs, &vals)
            .into_iter()
            .next()
            .ok_or_else(|| Error::NoSignChange {
                witness: format!("{witness:?}").to_lowercase(),
                lo: range.start,
                hi: range.stop,
            })?;
        bisect_known(|x| column_value(cfg, col, x, &crs), lo, hi, neg, cfg.threshold.tolerance)
    })?
}
