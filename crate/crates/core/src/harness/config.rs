use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::covariance::Covariogram;
use crate::error::{Error, Result};
use crate::estimators::SmoothStatistic;
use crate::fieldsim::{Method, Transform};
use crate::geometry::{Region, Scheme, Template};

/// Smallest replicate count a study accepts.
pub const MIN_REPLICATES: usize = 100;

fn default_statistic() -> String {
    "mean".into()
}

fn default_schemes() -> Vec<String> {
    vec!["ol".into()]
}

fn default_replicates() -> usize {
    1000
}

/// Study file as written by the user (TOML).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub regions: Vec<RegionConfig>,
    pub covariograms: Vec<String>,
    #[serde(default = "default_statistic")]
    pub statistic: String,
    /// `identity`, `moments`, or `shifted:a,b`; defaults by statistic arity.
    #[serde(default)]
    pub transform: Option<String>,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<String>,
    /// Subsample templates; empty means each region's own template.
    #[serde(default)]
    pub sub_templates: Vec<String>,
    #[serde(default)]
    pub s_lambda_grid: Vec<f64>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// May instead be given on the command line.
    #[serde(default)]
    pub seed: Option<u64>,
    /// `auto`, `cholesky` or `circulant`.
    #[serde(default)]
    pub method: Option<String>,
    /// Required when the statistic is not the mean.
    #[serde(default)]
    pub tau_n_sq: Option<f64>,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub selectors: SelectorConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    pub template: String,
    pub scale: Vec<f64>,
    #[serde(default)]
    pub shift: Option<Vec<f64>>,
    #[serde(default)]
    pub name: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectorConfig {
    #[serde(default)]
    pub npi: Option<NpiConfig>,
    #[serde(default)]
    pub hj: Option<HjConfig>,
    /// Known optimal scales; cells without one are taken from the MSE sweep.
    #[serde(default)]
    pub oracle: Vec<OracleConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NpiConfig {
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HjConfig {
    pub lambda_m: Vec<f64>,
    #[serde(default)]
    pub candidates: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub region: String,
    pub model: String,
    #[serde(default)]
    pub scheme: Option<String>,
    pub s_lambda: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub mse_csv: Option<PathBuf>,
    #[serde(default)]
    pub scaling_csv: Option<PathBuf>,
    #[serde(default)]
    pub phi_csv: Option<PathBuf>,
}

/// A validated study with every specification parsed.
#[derive(Debug, Clone)]
pub struct Study {
    pub regions: Vec<(String, Region)>,
    pub models: Vec<(String, Covariogram)>,
    pub statistic: SmoothStatistic,
    pub transform: Transform,
    pub schemes: Vec<Scheme>,
    /// `None` stands for the region's own template.
    pub sub_templates: Vec<Option<Template>>,
    pub grid: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub method: Method,
    pub tau_n_sq: Option<f64>,
    pub threads: Option<usize>,
    pub npi: Vec<(f64, f64)>,
    pub hj: Vec<f64>,
    pub hj_candidates: Option<Vec<f64>>,
    pub oracle: Vec<(String, String, Scheme, f64)>,
    pub outputs: OutputConfig,
}

fn cfg<T>(r: Result<T>, what: &str) -> Result<T> {
    r.map_err(|e| Error::Config(format!("{what}: {e}")))
}

fn parse_transform(s: &str) -> Result<Transform> {
    let t = s.trim();
    match t {
        "identity" => Ok(Transform::Identity),
        "moments" => Ok(Transform::Moments),
        _ => {
            let rest = t
                .strip_prefix("shifted:")
                .ok_or_else(|| Error::parse(s, "expected identity, moments or shifted:a,b"))?;
            let parts: Vec<f64> = rest
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(s, e.to_string()))?;
            match parts[..] {
                [a, b] if a.is_finite() && b.is_finite() => Ok(Transform::ShiftedMoments { a, b }),
                _ => Err(Error::parse(s, "expected two finite shifts")),
            }
        }
    }
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml(&text)
    }

    /// Checks the whole schema; nothing is simulated before this succeeds.
    pub fn validate(&self) -> Result<Study> {
        if self.regions.is_empty() {
            return Err(Error::Config("at least one region is required".into()));
        }
        if self.covariograms.is_empty() {
            return Err(Error::Config("at least one covariogram is required".into()));
        }
        if self.replicates < MIN_REPLICATES {
            return Err(Error::Config(format!(
                "replicates must be at least {MIN_REPLICATES}, got {}",
                self.replicates
            )));
        }
        let seed = self
            .seed
            .ok_or_else(|| Error::Config("a seed is required".into()))?;
        let mut regions = Vec::new();
        for r in &self.regions {
            let template: Template = cfg(r.template.parse(), "region template")?;
            let shift = r.shift.clone().unwrap_or_else(|| vec![0.0; template.dim()]);
            let region = cfg(Region::new(template, r.scale.clone(), shift), "region")?;
            let name = r.name.clone().unwrap_or_else(|| region.to_string());
            if regions.iter().any(|(n, _)| *n == name) {
                return Err(Error::Config(format!("duplicate region name `{name}`")));
            }
            regions.push((name, region));
        }
        let mut models = Vec::new();
        for m in &self.covariograms {
            let cov: Covariogram = cfg(m.parse(), "covariogram")?;
            models.push((m.trim().to_string(), cov));
        }
        for (name, region) in &regions {
            for (m, cov) in &models {
                if cov.dim() != region.dim() {
                    return Err(Error::Config(format!(
                        "covariogram `{m}` has dimension {} but region `{name}` has {}",
                        cov.dim(),
                        region.dim()
                    )));
                }
            }
        }
        let statistic: SmoothStatistic = cfg(self.statistic.parse(), "statistic")?;
        let transform = match &self.transform {
            Some(t) => cfg(parse_transform(t), "transform")?,
            None if statistic.arity() == 1 => Transform::Identity,
            None => Transform::Moments,
        };
        if transform.arity() != statistic.arity() {
            return Err(Error::Config(format!(
                "transform produces {} values per site but `{statistic}` needs {}",
                transform.arity(),
                statistic.arity()
            )));
        }
        if let Some(t) = self.tau_n_sq {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Config(format!("tau_n_sq must be positive, got {t}")));
            }
        } else if !statistic.is_linear() {
            return Err(Error::Config(format!(
                "statistic `{statistic}` has no exact variance; set tau_n_sq"
            )));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("at least one scheme is required".into()));
        }
        let schemes = self
            .schemes
            .iter()
            .map(|s| cfg(s.parse(), "scheme"))
            .collect::<Result<Vec<Scheme>>>()?;
        let mut sub_templates = Vec::new();
        for s in &self.sub_templates {
            let t: Template = cfg(s.parse(), "sub template")?;
            if let Some((name, _)) = regions.iter().find(|(_, r)| r.dim() != t.dim()) {
                return Err(Error::Config(format!(
                    "sub template `{s}` does not match the dimension of region `{name}`"
                )));
            }
            sub_templates.push(Some(t));
        }
        if sub_templates.is_empty() {
            sub_templates.push(None);
        }
        for &s in &self.s_lambda_grid {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Config(format!("scale {s} in s_lambda_grid is not positive")));
            }
            if let Some((name, r)) = regions.iter().find(|(_, r)| s >= r.min_scale()) {
                return Err(Error::Config(format!(
                    "scale {s} is not below the smallest side {} of region `{name}`",
                    r.min_scale()
                )));
            }
        }
        let method = match &self.method {
            Some(m) => cfg(m.parse(), "method")?,
            None => Method::Auto,
        };
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        let mut npi = Vec::new();
        if let Some(n) = &self.selectors.npi {
            for &c1 in &n.c1 {
                for &c2 in &n.c2 {
                    if !(c1 > 0.0 && c2 > 0.0 && c1.is_finite() && c2.is_finite()) {
                        return Err(Error::Config(format!("NPI constants must be positive: ({c1}, {c2})")));
                    }
                    npi.push((c1, c2));
                }
            }
        }
        let (hj, hj_candidates) = match &self.selectors.hj {
            Some(h) => {
                for &l in &h.lambda_m {
                    if let Some((name, r)) = regions.iter().find(|(_, r)| !(l > 0.0 && l < r.min_scale())) {
                        return Err(Error::Config(format!(
                            "lambda_m {l} is not in (0, {}) for region `{name}`",
                            r.min_scale()
                        )));
                    }
                }
                (h.lambda_m.clone(), h.candidates.clone())
            }
            None => (Vec::new(), None),
        };
        let mut oracle = Vec::new();
        for o in &self.selectors.oracle {
            if !regions.iter().any(|(n, _)| *n == o.region) {
                return Err(Error::Config(format!("oracle names unknown region `{}`", o.region)));
            }
            if !models.iter().any(|(m, _)| *m == o.model.trim()) {
                return Err(Error::Config(format!("oracle names unknown model `{}`", o.model)));
            }
            let scheme = match &o.scheme {
                Some(s) => cfg(s.parse(), "oracle scheme")?,
                None => Scheme::Ol,
            };
            if !(o.s_lambda > 0.0 && o.s_lambda.is_finite()) {
                return Err(Error::Config(format!("oracle scale {} is not positive", o.s_lambda)));
            }
            oracle.push((o.region.clone(), o.model.trim().to_string(), scheme, o.s_lambda));
        }
        let needs_grid = self.outputs.mse_csv.is_some()
            || self.outputs.scaling_csv.is_some()
            || (self.outputs.phi_csv.is_some() && oracle.is_empty());
        if needs_grid && self.s_lambda_grid.is_empty() {
            return Err(Error::Config("s_lambda_grid must not be empty".into()));
        }
        Ok(Study {
            regions,
            models,
            statistic,
            transform,
            schemes,
            sub_templates,
            grid: self.s_lambda_grid.clone(),
            replicates: self.replicates,
            seed,
            method,
            tau_n_sq: self.tau_n_sq,
            threads: self.threads,
            npi,
            hj,
            hj_candidates,
            oracle,
            outputs: self.outputs.clone(),
        })
    }
}
