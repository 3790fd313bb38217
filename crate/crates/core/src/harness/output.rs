use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Scheme;

use super::study::{MseRow, MseTable, PhiRow, PhiTable, ScalingRow};

const NA: &str = "NA";

fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_float(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), float)
}

fn read_opt(s: &str) -> Result<Option<f64>> {
    if s == NA {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|e| Error::parse(s, format!("bad number: {e}")))
}

fn read_num<T: std::str::FromStr>(s: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| Error::parse(s, format!("bad number: {e}")))
}

/// A table with a fixed header and one record per row.
pub trait CsvTable: Sized {
    fn header() -> &'static [&'static str];
    fn records(&self) -> Vec<Vec<String>>;
    fn from_records(records: Vec<Vec<String>>) -> Result<Self>;
}

impl CsvTable for MseTable {
    fn header() -> &'static [&'static str] {
        &["region", "model", "scheme", "sub_template", "s_lambda", "mse", "mc_se", "reps", "status"]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.region.clone(),
                    r.model.clone(),
                    r.scheme.to_string(),
                    r.sub_template.clone(),
                    r.s_lambda.to_string(),
                    opt_float(r.mse),
                    opt_float(r.mc_se),
                    r.reps.to_string(),
                    r.status.clone(),
                ]
            })
            .collect()
    }

    fn from_records(records: Vec<Vec<String>>) -> Result<Self> {
        let rows = records
            .into_iter()
            .map(|f| {
                Ok(MseRow {
                    region: f[0].clone(),
                    model: f[1].clone(),
                    scheme: f[2].parse()?,
                    sub_template: f[3].clone(),
                    s_lambda: read_num(&f[4])?,
                    mse: read_opt(&f[5])?,
                    mc_se: read_opt(&f[6])?,
                    reps: read_num(&f[7])?,
                    status: f[8].clone(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(MseTable { rows })
    }
}

/// Argmin rows as emitted to the scaling CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScalingTable {
    pub rows: Vec<ScalingRow>,
}

impl CsvTable for ScalingTable {
    fn header() -> &'static [&'static str] {
        &["region", "model", "scheme", "sub_template", "s_lambda_opt", "mse", "mc_se", "reps", "status"]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.region.clone(),
                    r.model.clone(),
                    r.scheme.to_string(),
                    r.sub_template.clone(),
                    r.s_lambda_opt.map_or_else(|| NA.to_string(), |s| s.to_string()),
                    opt_float(r.mse),
                    opt_float(r.mc_se),
                    r.reps.to_string(),
                    r.status.clone(),
                ]
            })
            .collect()
    }

    fn from_records(records: Vec<Vec<String>>) -> Result<Self> {
        let rows = records
            .into_iter()
            .map(|f| {
                Ok(ScalingRow {
                    region: f[0].clone(),
                    model: f[1].clone(),
                    scheme: f[2].parse()?,
                    sub_template: f[3].clone(),
                    s_lambda_opt: read_opt(&f[4])?,
                    mse: read_opt(&f[5])?,
                    mc_se: read_opt(&f[6])?,
                    reps: read_num(&f[7])?,
                    status: f[8].clone(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(ScalingTable { rows })
    }
}

fn frequencies_to_string(f: &BTreeMap<u64, usize>, failures: usize) -> String {
    let mut parts: Vec<String> = f.iter().map(|(k, n)| format!("{k}:{n}")).collect();
    if failures > 0 {
        parts.push(format!("{NA}:{failures}"));
    }
    parts.join(";")
}

fn frequencies_from_str(s: &str) -> Result<BTreeMap<u64, usize>> {
    let mut out = BTreeMap::new();
    for part in s.split(';').filter(|p| !p.is_empty()) {
        let (k, n) = part
            .split_once(':')
            .ok_or_else(|| Error::parse(s, "expected value:count pairs"))?;
        if k == NA {
            continue;
        }
        out.insert(read_num(k)?, read_num(n)?);
    }
    Ok(out)
}

impl CsvTable for PhiTable {
    fn header() -> &'static [&'static str] {
        &[
            "region",
            "model",
            "scheme",
            "selector",
            "setting",
            "s_lambda_opt",
            "e_phi_sq",
            "mc_se",
            "reps",
            "failures",
            "frequencies",
            "status",
        ]
    }

    fn records(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    r.region.clone(),
                    r.model.clone(),
                    r.scheme.to_string(),
                    r.selector.clone(),
                    r.setting.clone(),
                    r.s_lambda_opt.map_or_else(|| NA.to_string(), |s| s.to_string()),
                    opt_float(r.e_phi_sq),
                    opt_float(r.mc_se),
                    r.reps.to_string(),
                    r.failures.to_string(),
                    frequencies_to_string(&r.frequencies, r.failures),
                    r.status.clone(),
                ]
            })
            .collect()
    }

    fn from_records(records: Vec<Vec<String>>) -> Result<Self> {
        let rows = records
            .into_iter()
            .map(|f| {
                Ok(PhiRow {
                    region: f[0].clone(),
                    model: f[1].clone(),
                    scheme: f[2].parse::<Scheme>()?,
                    selector: f[3].clone(),
                    setting: f[4].clone(),
                    s_lambda_opt: read_opt(&f[5])?,
                    e_phi_sq: read_opt(&f[6])?,
                    mc_se: read_opt(&f[7])?,
                    reps: read_num(&f[8])?,
                    failures: read_num(&f[9])?,
                    frequencies: frequencies_from_str(&f[10])?,
                    status: f[11].clone(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(PhiTable { rows })
    }
}

/// CSV text with LF line endings and quoting only where needed.
pub fn to_csv_string<T: CsvTable>(table: &T) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let err = |e: csv::Error| Error::io("formatting CSV", e);
    w.write_record(T::header()).map_err(err)?;
    for rec in table.records() {
        w.write_record(&rec).map_err(err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::io("formatting CSV", e.error()))?;
    String::from_utf8(bytes).map_err(|e| Error::io("formatting CSV", e))
}

/// Writes the table atomically: a failed write leaves no partial file.
pub fn emit_csv<T: CsvTable>(table: &T, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, to_csv_string(table)?.as_bytes())
}

pub fn read_csv<T: CsvTable>(path: &Path) -> Result<T> {
    let ctx = || format!("reading {}", path.display());
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(ctx(), e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::io(ctx(), e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != T::header() {
        return Err(Error::parse(&header.join(","), "unexpected CSV header"));
    }
    let records = r
        .records()
        .map(|rec| {
            rec.map(|rec| rec.iter().map(str::to_string).collect())
                .map_err(|e| Error::io(ctx(), e))
        })
        .collect::<Result<Vec<Vec<String>>>>()?;
    T::from_records(records)
}
