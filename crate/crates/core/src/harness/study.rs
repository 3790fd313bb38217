use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use crate::covariance::{exact_tau_n_sq, Covariogram};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorPlan, FieldSample};
use crate::fieldsim::{build_generator, sample_field, substream, Generator};
use crate::geometry::{lattice_sites, Region, Scheme, SubsampleSpec};
use crate::scaling::{default_candidates, hj_scaling, npi_scaling, ScalingPlan};

use super::config::Study;

/// Normalized MSE of one (region, model, scheme, sub template, scale) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MseRow {
    pub region: String,
    pub model: String,
    pub scheme: Scheme,
    pub sub_template: String,
    pub s_lambda: f64,
    pub mse: Option<f64>,
    pub mc_se: Option<f64>,
    pub reps: usize,
    /// `ok`, or the error code and message that aborted the cell.
    pub status: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MseTable {
    pub rows: Vec<MseRow>,
}

/// Empirical optimal scale of one column of an [`MseTable`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRow {
    pub region: String,
    pub model: String,
    pub scheme: Scheme,
    pub sub_template: String,
    pub s_lambda_opt: Option<f64>,
    pub mse: Option<f64>,
    pub mc_se: Option<f64>,
    pub reps: usize,
    pub status: String,
}

/// Selector performance `E(φ²)` and the distribution of its integer output.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiRow {
    pub region: String,
    pub model: String,
    pub scheme: Scheme,
    pub selector: String,
    pub setting: String,
    pub s_lambda_opt: Option<f64>,
    pub e_phi_sq: Option<f64>,
    pub mc_se: Option<f64>,
    pub reps: usize,
    /// Integer estimate to count; failed replicates are not counted here.
    pub frequencies: BTreeMap<u64, usize>,
    pub failures: usize,
    pub status: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhiTable {
    pub rows: Vec<PhiRow>,
}

/// Mean and `sd / sqrt(n)` by two passes, summing in input order.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt() / n.sqrt())
}

fn status_of(e: &Error) -> String {
    format!("{}: {e}", e.code())
}

/// Runs `f` on a pool of `threads` workers, or the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

struct Field<'a> {
    region: &'a Region,
    generator: Generator,
    tau_n_sq: f64,
}

fn prepare<'a>(study: &Study, region: &'a Region, cov: &Covariogram) -> Result<Field<'a>> {
    let window = lattice_sites(region)?;
    let generator = build_generator(cov, &window, study.method)?;
    let tau_n_sq = match study.tau_n_sq {
        Some(t) => t,
        None => exact_tau_n_sq(region, cov)?,
    };
    Ok(Field {
        region,
        generator,
        tau_n_sq,
    })
}

fn draw(study: &Study, field: &Field, replicate: usize) -> Result<FieldSample> {
    let mut stream = substream(study.seed, replicate as u64);
    study.transform.apply(&sample_field(&field.generator, &mut stream))
}

fn plan_for(
    field: &Field,
    sub: Option<&crate::geometry::Template>,
    scale: f64,
    scheme: Scheme,
) -> Result<EstimatorPlan> {
    let template = sub.unwrap_or(field.region.template()).clone();
    let spec = SubsampleSpec::new(template, scale, scheme)?;
    EstimatorPlan::new(field.generator.window(), field.region, &spec)
}

/// Per replicate: one field, then every cell. Squared relative errors are
/// averaged in replicate order.
pub fn mse_study(study: &Study) -> Result<MseTable> {
    with_threads(study.threads, || mse_rows(study))
}

fn mse_rows(study: &Study) -> MseTable {
    let mut rows = Vec::new();
    for (rname, region) in &study.regions {
        for (mname, cov) in &study.models {
            let mut cells = Vec::new();
            for &scheme in &study.schemes {
                for sub in &study.sub_templates {
                    let sub_name = sub.as_ref().unwrap_or(region.template()).to_string();
                    for &s in &study.grid {
                        cells.push((scheme, sub.as_ref(), sub_name.clone(), s));
                    }
                }
            }
            let row = |scheme, sub_name: &str, s, status: String| MseRow {
                region: rname.clone(),
                model: mname.clone(),
                scheme,
                sub_template: sub_name.to_string(),
                s_lambda: s,
                mse: None,
                mc_se: None,
                reps: 0,
                status,
            };
            let field = match prepare(study, region, cov) {
                Ok(f) => f,
                Err(e) => {
                    for (scheme, _, name, s) in &cells {
                        rows.push(row(*scheme, name, *s, status_of(&e)));
                    }
                    continue;
                }
            };
            let plans: Vec<Result<EstimatorPlan>> = cells
                .iter()
                .map(|(scheme, sub, _, s)| plan_for(&field, *sub, *s, *scheme))
                .collect();
            let per_rep: Vec<Vec<Result<f64>>> = (0..study.replicates)
                .into_par_iter()
                .map(|r| {
                    let sample = draw(study, &field, r);
                    plans
                        .iter()
                        .map(|plan| {
                            let plan = plan.as_ref().map_err(Clone::clone)?;
                            let sample = sample.as_ref().map_err(Clone::clone)?;
                            let t = plan.estimate(sample, study.statistic, false)?.tau_hat_sq;
                            let rel = t / field.tau_n_sq - 1.0;
                            Ok(rel * rel)
                        })
                        .collect()
                })
                .collect();
            for (c, (scheme, _, name, s)) in cells.iter().enumerate() {
                let devs: Result<Vec<f64>> = per_rep.iter().map(|v| v[c].clone()).collect();
                match devs {
                    Ok(devs) => {
                        let (mse, se) = mean_and_se(&devs);
                        let mut r = row(*scheme, name, *s, "ok".into());
                        r.mse = Some(mse);
                        r.mc_se = Some(se);
                        r.reps = devs.len();
                        rows.push(r);
                    }
                    Err(e) => rows.push(row(*scheme, name, *s, status_of(&e))),
                }
            }
        }
    }
    MseTable { rows }
}

impl MseTable {
    /// Column-wise argmin over the scale; ties go to the smallest scale.
    pub fn argmins(&self) -> Vec<ScalingRow> {
        let mut order: Vec<(String, String, Scheme, String)> = Vec::new();
        let mut best: HashMap<(String, String, Scheme, String), &MseRow> = HashMap::new();
        for row in &self.rows {
            let key = (row.region.clone(), row.model.clone(), row.scheme, row.sub_template.clone());
            if !order.contains(&key) {
                order.push(key.clone());
            }
            let Some(m) = row.mse else { continue };
            match best.get(&key) {
                Some(b) if !(m < b.mse.unwrap() || (m == b.mse.unwrap() && row.s_lambda < b.s_lambda)) => {}
                _ => {
                    best.insert(key, row);
                }
            }
        }
        order
            .into_iter()
            .map(|key| {
                let b = best.get(&key);
                ScalingRow {
                    region: key.0.clone(),
                    model: key.1.clone(),
                    scheme: key.2,
                    sub_template: key.3.clone(),
                    s_lambda_opt: b.map(|r| r.s_lambda),
                    mse: b.and_then(|r| r.mse),
                    mc_se: b.and_then(|r| r.mc_se),
                    reps: b.map_or(0, |r| r.reps),
                    status: if b.is_some() {
                        "ok".into()
                    } else {
                        "no_valid_cell: every scale failed".into()
                    },
                }
            })
            .collect()
    }
}

/// Runs the sweep and reports each column's argmin.
pub fn optimal_scaling_study(study: &Study) -> Result<(MseTable, Vec<ScalingRow>)> {
    let table = mse_study(study)?;
    let optima = table.argmins();
    Ok((table, optima))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Selector {
    Npi { c1: f64, c2: f64 },
    Hj { lambda_m: f64 },
}

impl Selector {
    fn name(&self) -> &'static str {
        match self {
            Selector::Npi { .. } => "npi",
            Selector::Hj { .. } => "hj",
        }
    }

    fn setting(&self) -> String {
        match self {
            Selector::Npi { c1, c2 } => format!("c1={c1};c2={c2}"),
            Selector::Hj { lambda_m } => format!("lambda_m={lambda_m}"),
        }
    }
}

fn oracle_scale(study: &Study, optima: &[ScalingRow], region: &str, model: &str, scheme: Scheme, own: &str) -> Option<f64> {
    study
        .oracle
        .iter()
        .find(|(r, m, s, _)| r == region && m == model && *s == scheme)
        .map(|o| o.3)
        .or_else(|| {
            optima
                .iter()
                .find(|o| o.region == region && o.model == model && o.scheme == scheme && o.sub_template == own)
                .and_then(|o| o.s_lambda_opt)
        })
}

/// `φ = (τ̂²(ŝλ) - τ̂²(sλ_opt)) / τ_n²` per replicate and selector, with
/// `sλ_opt` from the configured oracle or else from `optima`.
pub fn phi_study(study: &Study, optima: &[ScalingRow]) -> Result<PhiTable> {
    with_threads(study.threads, || phi_rows(study, optima))
}

fn phi_rows(study: &Study, optima: &[ScalingRow]) -> PhiTable {
    let mut selectors: Vec<Selector> = study.npi.iter().map(|&(c1, c2)| Selector::Npi { c1, c2 }).collect();
    selectors.extend(study.hj.iter().map(|&lambda_m| Selector::Hj { lambda_m }));
    let mut rows = Vec::new();
    for (rname, region) in &study.regions {
        let own = region.template().to_string();
        for (mname, cov) in &study.models {
            for &scheme in &study.schemes {
                let row = |sel: &Selector, opt: Option<f64>, status: String| PhiRow {
                    region: rname.clone(),
                    model: mname.clone(),
                    scheme,
                    selector: sel.name().into(),
                    setting: sel.setting(),
                    s_lambda_opt: opt,
                    e_phi_sq: None,
                    mc_se: None,
                    reps: 0,
                    frequencies: BTreeMap::new(),
                    failures: 0,
                    status,
                };
                let Some(opt) = oracle_scale(study, optima, rname, mname, scheme, &own) else {
                    for sel in &selectors {
                        rows.push(row(sel, None, "no_oracle: optimal scale unavailable".into()));
                    }
                    continue;
                };
                let prepared = prepare(study, region, cov).and_then(|f| {
                    let p = plan_for(&f, None, opt, scheme)?;
                    Ok((f, p))
                });
                let (field, oracle_plan) = match prepared {
                    Ok(v) => v,
                    Err(e) => {
                        for sel in &selectors {
                            rows.push(row(sel, Some(opt), status_of(&e)));
                        }
                        continue;
                    }
                };
                let per_rep: Vec<Vec<Result<(u64, f64)>>> = (0..study.replicates)
                    .into_par_iter()
                    .map(|r| {
                        let sample = match draw(study, &field, r) {
                            Ok(s) => s,
                            Err(e) => return selectors.iter().map(|_| Err(e.clone())).collect(),
                        };
                        let base = oracle_plan.estimate(&sample, study.statistic, false).map(|e| e.tau_hat_sq);
                        let mut cache: HashMap<u64, Result<f64>> = HashMap::new();
                        selectors
                            .iter()
                            .map(|sel| {
                                let base = base.clone()?;
                                let plan = run_selector(study, &sample, region, *sel, scheme)?;
                                let k = plan.lambda_opt_int;
                                let t = cache
                                    .entry(k)
                                    .or_insert_with(|| {
                                        plan_for(&field, None, k as f64, scheme)
                                            .and_then(|p| p.estimate(&sample, study.statistic, false))
                                            .map(|e| e.tau_hat_sq)
                                    })
                                    .clone()?;
                                Ok((k, (t - base) / field.tau_n_sq))
                            })
                            .collect()
                    })
                    .collect();
                for (c, sel) in selectors.iter().enumerate() {
                    let mut r = row(sel, Some(opt), "ok".into());
                    let mut sq = Vec::with_capacity(study.replicates);
                    let mut first_err = None;
                    for rep in &per_rep {
                        match &rep[c] {
                            Ok((k, phi)) => {
                                *r.frequencies.entry(*k).or_insert(0) += 1;
                                sq.push(phi * phi);
                            }
                            Err(e) => {
                                r.failures += 1;
                                first_err.get_or_insert_with(|| e.clone());
                            }
                        }
                    }
                    if let Some(e) = first_err {
                        r.status = format!("{} of {} replicates failed; {}", r.failures, study.replicates, status_of(&e));
                    } else {
                        let (m, se) = mean_and_se(&sq);
                        r.e_phi_sq = Some(m);
                        r.mc_se = Some(se);
                        r.reps = sq.len();
                    }
                    rows.push(r);
                }
            }
        }
    }
    PhiTable { rows }
}

fn run_selector(
    study: &Study,
    sample: &FieldSample,
    region: &Region,
    sel: Selector,
    scheme: Scheme,
) -> Result<ScalingPlan> {
    match sel {
        Selector::Npi { c1, c2 } => npi_scaling(sample, region, study.statistic, c1, c2, scheme),
        Selector::Hj { lambda_m } => {
            let candidates = match &study.hj_candidates {
                Some(c) => c.iter().copied().filter(|&c| c < lambda_m).collect(),
                None => default_candidates(lambda_m),
            };
            hj_scaling(sample, region, study.statistic, lambda_m, &candidates, scheme)
        }
    }
}
