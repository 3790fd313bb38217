//! Covariogram models of the scalar field, the long-run variance `τ² = Σ σ(k)`
//! and the exact finite-window variance of the normalised sample mean.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::{lattice_sites, split_spec, LatticeWindow, Params, Region};

/// Default relative tolerance of the shell truncation rule.
pub const DEFAULT_REL_TOL: f64 = 1e-10;
/// Largest shell radius visited before giving up.
pub const SHELL_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    /// `exp(-Σ β_i |k_i|)`.
    ExpSeparable { betas: Vec<f64> },
    /// `exp(-Σ β_i k_i²)`.
    GaussSeparable { betas: Vec<f64> },
    /// `exp(-β ‖k‖²)`.
    GaussIsotropic { beta: f64 },
    /// `σ(0) = 1`, zero elsewhere.
    WhiteNoise,
    /// Finite symmetric table, zero off-table.
    Tabulated {
        values: BTreeMap<Vec<i64>, f64>,
        source: String,
    },
}

/// A validated covariogram in a fixed dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariogram {
    model: Model,
    dim: usize,
}

fn check_betas(betas: &[f64]) -> Result<()> {
    if betas.is_empty() {
        return Err(Error::InvalidParameter("at least one decay rate is required".into()));
    }
    if betas.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
        return Err(Error::InvalidParameter("decay rates must be positive".into()));
    }
    Ok(())
}

impl Covariogram {
    pub fn exp_separable(betas: Vec<f64>) -> Result<Self> {
        check_betas(&betas)?;
        Ok(Covariogram {
            dim: betas.len(),
            model: Model::ExpSeparable { betas },
        })
    }

    pub fn gauss_separable(betas: Vec<f64>) -> Result<Self> {
        check_betas(&betas)?;
        Ok(Covariogram {
            dim: betas.len(),
            model: Model::GaussSeparable { betas },
        })
    }

    pub fn gauss_isotropic(beta: f64, dim: usize) -> Result<Self> {
        check_betas(&[beta])?;
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        Ok(Covariogram {
            dim,
            model: Model::GaussIsotropic { beta },
        })
    }

    pub fn white_noise(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        Ok(Covariogram {
            dim,
            model: Model::WhiteNoise,
        })
    }

    /// Table of `(k, σ(k))`; must contain `k = 0` with a positive value and be
    /// symmetric under `k -> -k`.
    pub fn tabulated(
        dim: usize,
        entries: impl IntoIterator<Item = (Vec<i64>, f64)>,
        source: impl Into<String>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        let mut values = BTreeMap::new();
        for (k, v) in entries {
            if k.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: k.len(),
                });
            }
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("σ{k:?} is not finite")));
            }
            if values.insert(k.clone(), v).is_some() {
                return Err(Error::InvalidParameter(format!("lag {k:?} listed twice")));
            }
        }
        match values.get(&vec![0; dim]) {
            Some(v) if *v > 0.0 => {}
            _ => {
                return Err(Error::InvalidParameter(
                    "table must give a positive value at lag 0".into(),
                ))
            }
        }
        for (k, v) in &values {
            let neg: Vec<i64> = k.iter().map(|x| -x).collect();
            match values.get(&neg) {
                Some(w) if (v - w).abs() <= 1e-12 * v.abs().max(w.abs()) => {}
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "table is not symmetric at lag {k:?}"
                    )))
                }
            }
        }
        Ok(Covariogram {
            dim,
            model: Model::Tabulated {
                values,
                source: source.into(),
            },
        })
    }

    /// Reads a table from CSV with header `k1,...,kd,sigma`.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let ctx = || format!("reading covariogram table {}", path.display());
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::io(ctx(), e))?;
        let headers = reader.headers().map_err(|e| Error::io(ctx(), e))?.clone();
        let dim = headers.len().saturating_sub(1);
        let expected: Vec<String> = (1..=dim)
            .map(|i| format!("k{i}"))
            .chain(std::iter::once("sigma".to_string()))
            .collect();
        if dim == 0 || headers.iter().map(str::to_ascii_lowercase).ne(expected.iter().cloned()) {
            return Err(Error::parse(
                &path.display().to_string(),
                format!("expected header {}", expected.join(",")),
            ));
        }
        let mut entries = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::io(ctx(), e))?;
            let bad = |what: &str| {
                Error::parse(
                    &path.display().to_string(),
                    format!("row {}: invalid {what}", line + 2),
                )
            };
            let k = (0..dim)
                .map(|j| rec[j].parse::<i64>().map_err(|_| bad("lag")))
                .collect::<Result<Vec<_>>>()?;
            let v = rec[dim].parse::<f64>().map_err(|_| bad("sigma"))?;
            entries.push((k, v));
        }
        Self::tabulated(dim, entries, path.display().to_string())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn is_white_noise(&self) -> bool {
        matches!(self.model, Model::WhiteNoise)
    }

    /// `σ(k)`.
    pub fn sigma(&self, k: &[i64]) -> Result<f64> {
        if k.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: k.len(),
            });
        }
        Ok(self.sigma_unchecked(k))
    }

    #[inline]
    pub(crate) fn sigma_unchecked(&self, k: &[i64]) -> f64 {
        match &self.model {
            Model::ExpSeparable { betas } => (-betas
                .iter()
                .zip(k)
                .map(|(b, &x)| b * x.unsigned_abs() as f64)
                .sum::<f64>())
            .exp(),
            Model::GaussSeparable { betas } => (-betas
                .iter()
                .zip(k)
                .map(|(b, &x)| b * (x * x) as f64)
                .sum::<f64>())
            .exp(),
            Model::GaussIsotropic { beta } => {
                (-beta * k.iter().map(|&x| (x * x) as f64).sum::<f64>()).exp()
            }
            Model::WhiteNoise => {
                if k.iter().all(|&x| x == 0) {
                    1.0
                } else {
                    0.0
                }
            }
            Model::Tabulated { values, .. } => values.get(k).copied().unwrap_or(0.0),
        }
    }

    /// Per-axis factors `f_i` with `σ(k) = Π f_i(k_i)`, for separable models.
    fn axis_factor(&self, axis: usize, k: i64) -> Option<f64> {
        let k = k as f64;
        match &self.model {
            Model::ExpSeparable { betas } => Some((-betas[axis] * k.abs()).exp()),
            Model::GaussSeparable { betas } => Some((-betas[axis] * k * k).exp()),
            Model::GaussIsotropic { beta } => Some((-beta * k * k).exp()),
            _ => None,
        }
    }

    /// `τ² = Σ_k σ(k)`, truncated at the first shell contributing less than
    /// `rel_tol` of the partial sum.
    pub fn tau_sq(&self, rel_tol: f64) -> Result<f64> {
        check_tol(rel_tol)?;
        match &self.model {
            Model::WhiteNoise => Ok(1.0),
            Model::Tabulated { values, .. } => Ok(values.values().sum()),
            _ => {
                let mut total = 1.0;
                for axis in 0..self.dim {
                    let mut partial = 1.0;
                    let mut k = 1;
                    loop {
                        if k > SHELL_CAP {
                            return Err(Error::NonConvergent { cap: SHELL_CAP });
                        }
                        let shell = 2.0 * self.axis_factor(axis, k as i64).expect("separable");
                        partial += shell;
                        if shell <= rel_tol * partial {
                            break;
                        }
                        k += 1;
                    }
                    total *= partial;
                }
                Ok(total)
            }
        }
    }

    /// `Σ_k w(k) σ(k)` over `Z^d` using the shell rule on `|w(k) σ(k)|`.
    /// Tables are summed exactly.
    pub fn weighted_sum<F>(&self, rel_tol: f64, mut weight: F) -> Result<f64>
    where
        F: FnMut(&[i64]) -> Result<f64>,
    {
        check_tol(rel_tol)?;
        match &self.model {
            Model::Tabulated { values, .. } => {
                let mut sum = 0.0;
                for (k, v) in values {
                    sum += weight(k)? * v;
                }
                Ok(sum)
            }
            Model::WhiteNoise => Ok(weight(&vec![0; self.dim])?),
            _ => {
                let d = self.dim;
                let mut partial = weight(&vec![0; d])? * self.sigma_unchecked(&vec![0; d]);
                let mut abs_partial = partial.abs();
                for radius in 1..=SHELL_CAP {
                    let mut shell = 0.0;
                    let mut abs_shell = 0.0;
                    let mut failure = None;
                    for_each_shell_point(d, radius as i64, |k| {
                        if failure.is_some() {
                            return;
                        }
                        let s = self.sigma_unchecked(k);
                        if s == 0.0 {
                            return;
                        }
                        match weight(k) {
                            Ok(w) => {
                                shell += w * s;
                                abs_shell += (w * s).abs();
                            }
                            Err(e) => failure = Some(e),
                        }
                    });
                    if let Some(e) = failure {
                        return Err(e);
                    }
                    partial += shell;
                    abs_partial += abs_shell;
                    if abs_shell <= rel_tol * abs_partial {
                        return Ok(partial);
                    }
                }
                Err(Error::NonConvergent { cap: SHELL_CAP })
            }
        }
    }
}

fn check_tol(rel_tol: f64) -> Result<()> {
    if !(rel_tol.is_finite() && rel_tol > 0.0) {
        return Err(Error::InvalidParameter("rel_tol must be positive".into()));
    }
    Ok(())
}

/// Visits the lattice points with `‖k‖_∞ = radius` in lexicographic order.
pub(crate) fn for_each_shell_point(dim: usize, radius: i64, mut f: impl FnMut(&[i64])) {
    let mut k = vec![-radius; dim];
    loop {
        if k.iter().any(|x| x.abs() == radius) {
            f(&k);
        }
        let mut j = dim;
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            if k[j] < radius {
                k[j] += 1;
                break;
            }
            k[j] = -radius;
        }
    }
}

fn format_betas(f: &mut fmt::Formatter<'_>, kind: &str, betas: &[f64]) -> fmt::Result {
    write!(f, "{kind}:")?;
    for (i, b) in betas.iter().enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        write!(f, "b{}={b}", i + 1)?;
    }
    Ok(())
}

impl fmt::Display for Covariogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.model {
            Model::ExpSeparable { betas } => format_betas(f, "expsep", betas),
            Model::GaussSeparable { betas } => format_betas(f, "gausssep", betas),
            Model::GaussIsotropic { beta } => write!(f, "gaussiso:b={beta},d={}", self.dim),
            Model::WhiteNoise => write!(f, "white:d={}", self.dim),
            Model::Tabulated { source, .. } => write!(f, "table:@{source}"),
        }
    }
}

fn parse_betas(spec: &str, p: &mut Params<'_>) -> Result<Vec<f64>> {
    let mut betas = Vec::new();
    while let Some(b) = p.num(&format!("b{}", betas.len() + 1))? {
        betas.push(b);
    }
    if betas.is_empty() {
        return Err(Error::parse(spec, "expected decay rates b1, b2, ..."));
    }
    Ok(betas)
}

fn parse_dim(spec: &str, p: &mut Params<'_>) -> Result<usize> {
    let d = p.num("d")?.unwrap_or(2.0);
    if d.fract() != 0.0 || d < 1.0 {
        return Err(Error::parse(spec, "d must be a positive integer"));
    }
    Ok(d as usize)
}

impl FromStr for Covariogram {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let trimmed = spec.trim();
        if let Some(path) = trimmed
            .strip_prefix("table:@")
            .or_else(|| trimmed.strip_prefix("table:"))
        {
            return Self::from_csv(Path::new(path));
        }
        let (kind, items) = split_spec(spec)?;
        let mut p = Params::new(spec, items);
        let cov = match kind.as_str() {
            "expsep" | "exp" => Self::exp_separable(parse_betas(spec, &mut p)?),
            "gausssep" | "gauss" => Self::gauss_separable(parse_betas(spec, &mut p)?),
            "gaussiso" => {
                let beta = p.req("b")?;
                Self::gauss_isotropic(beta, parse_dim(spec, &mut p)?)
            }
            "white" => Self::white_noise(parse_dim(spec, &mut p)?),
            other => return Err(Error::parse(spec, format!("unknown covariogram `{other}`"))),
        }
        .map_err(|e| match e {
            Error::InvalidParameter(reason) => Error::parse(spec, reason),
            e => e,
        })?;
        p.finish()?;
        Ok(cov)
    }
}

/// Evaluation path of the exact finite-window variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactMethod {
    /// `N⁻¹ Σ_k N(k) σ(k)` with lag counts `N(k)`.
    LagCount,
    /// `N⁻¹ Σ_i Σ_j σ(s_i - s_j)`.
    PairSum,
}

/// Exact `N Var(sample mean)` for a unit-variance-normalised linear statistic
/// over the region's sites.
pub fn exact_tau_n_sq(region: &Region, cov: &Covariogram) -> Result<f64> {
    let window = lattice_sites(region)?;
    exact_tau_n_sq_window(&window, cov, ExactMethod::LagCount)
}

pub fn exact_tau_n_sq_window(
    window: &LatticeWindow,
    cov: &Covariogram,
    method: ExactMethod,
) -> Result<f64> {
    if window.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let d = window.dim();
    if d != cov.dim() {
        return Err(Error::DimensionMismatch {
            expected: cov.dim(),
            got: d,
        });
    }
    let n = window.len() as f64;
    match method {
        ExactMethod::PairSum => {
            let mut lag = vec![0i64; d];
            let mut total = 0.0;
            for a in window.sites() {
                let mut row = 0.0;
                for b in window.sites() {
                    for j in 0..d {
                        lag[j] = a[j] - b[j];
                    }
                    row += cov.sigma_unchecked(&lag);
                }
                total += row;
            }
            Ok(total / n)
        }
        ExactMethod::LagCount => {
            let (lo, hi) = window.bounding_box();
            let ext: Vec<usize> = (0..d).map(|j| (hi[j] - lo[j]) as usize).collect();
            let side: Vec<usize> = ext.iter().map(|e| 2 * e + 1).collect();
            let cells: usize = side.iter().product();
            let index = |lag: &[i64]| {
                let mut idx = 0usize;
                for j in 0..d {
                    idx = idx * side[j] + (lag[j] + ext[j] as i64) as usize;
                }
                idx
            };
            let mut counts = vec![0u64; cells];
            if window.is_full_box() {
                fill_box_counts(&ext, &mut counts);
            } else {
                let mut lag = vec![0i64; d];
                for a in window.sites() {
                    for b in window.sites() {
                        for j in 0..d {
                            lag[j] = a[j] - b[j];
                        }
                        counts[index(&lag)] += 1;
                    }
                }
            }
            let mut total = 0.0;
            let mut lag = vec![0i64; d];
            for (cell, &c) in counts.iter().enumerate() {
                if c == 0 {
                    continue;
                }
                let mut rem = cell;
                for j in (0..d).rev() {
                    lag[j] = (rem % side[j]) as i64 - ext[j] as i64;
                    rem /= side[j];
                }
                total += c as f64 * cov.sigma_unchecked(&lag);
            }
            Ok(total / n)
        }
    }
}

/// `N(k) = Π_j (n_j - |k_j|)` for a full box with `n_j = ext_j + 1` sites per axis.
fn fill_box_counts(ext: &[usize], counts: &mut [u64]) {
    let d = ext.len();
    let side: Vec<usize> = ext.iter().map(|e| 2 * e + 1).collect();
    for (cell, c) in counts.iter_mut().enumerate() {
        let mut rem = cell;
        let mut prod = 1u64;
        for j in (0..d).rev() {
            let lag = (rem % side[j]) as i64 - ext[j] as i64;
            rem /= side[j];
            prod *= (ext[j] as i64 + 1 - lag.abs()) as u64;
        }
        *c = prod;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Template;
    use std::f64::consts::E;

    fn cov(spec: &str) -> Covariogram {
        spec.parse().unwrap()
    }

    #[test]
    fn model_values() {
        let c = cov("expsep:b1=1,b2=1");
        assert!((c.sigma(&[1, 0]).unwrap() - 0.367879).abs() < 1e-6);
        assert_eq!(c.sigma(&[0, 0]).unwrap(), 1.0);
        let g = cov("gaussiso:b=0.2");
        assert!((g.sigma(&[1, 1]).unwrap() - 0.670320).abs() < 1e-6);
        assert!(c.sigma(&[1]).is_err());
        assert_eq!(cov("white").sigma(&[0, 3]).unwrap(), 0.0);
    }

    #[test]
    fn tau_sq_closed_forms() {
        let one = (1.0 + 1.0 / E) / (1.0 - 1.0 / E);
        let t = cov("expsep:b1=1,b2=1").tau_sq(DEFAULT_REL_TOL).unwrap();
        assert!((t - one * one).abs() < 1e-9 * t);
        assert!((t - 4.68269).abs() < 1e-5);
        let axis = |b: f64| (1.0 + (-b).exp()) / (1.0 - (-b).exp());
        let t = cov("expsep:b1=0.5,b2=0.3").tau_sq(DEFAULT_REL_TOL).unwrap();
        assert!((t - axis(0.5) * axis(0.3)).abs() < 1e-9 * t);
        assert_eq!(cov("white").tau_sq(DEFAULT_REL_TOL).unwrap(), 1.0);
    }

    #[test]
    fn tau_sq_non_convergent() {
        let c = Covariogram::exp_separable(vec![1e-6]).unwrap();
        assert_eq!(c.tau_sq(1e-10), Err(Error::NonConvergent { cap: SHELL_CAP }));
    }

    #[test]
    fn weighted_sum_matches_tau_sq() {
        for spec in ["expsep:b1=1,b2=1", "gausssep:b1=0.5,b2=0.3", "gaussiso:b=2"] {
            let c = cov(spec);
            let direct = c.weighted_sum(1e-13, |_| Ok(1.0)).unwrap();
            let tau = c.tau_sq(1e-13).unwrap();
            assert!((direct - tau).abs() < 1e-10 * tau, "{spec}");
        }
    }

    #[test]
    fn grammar() {
        assert_eq!(cov("expsep:b1=1,b2=1").dim(), 2);
        assert_eq!(cov("gaussiso:b=2").dim(), 2);
        assert_eq!(cov("white:d=3").dim(), 3);
        for bad in ["expsep", "expsep:b2=1", "gausssep:b1=-1", "gaussiso:b=1,q=2", "matern"] {
            assert!(bad.parse::<Covariogram>().is_err(), "{bad}");
        }
        for spec in ["expsep:b1=1,b2=0.5", "gausssep:b1=0.5,b2=0.3", "gaussiso:b=2,d=2", "white:d=2"] {
            assert_eq!(cov(spec).to_string(), spec);
        }
    }

    #[test]
    fn tables_must_be_symmetric() {
        let ok = Covariogram::tabulated(
            1,
            vec![(vec![0], 1.0), (vec![1], 0.5), (vec![-1], 0.5)],
            "inline",
        )
        .unwrap();
        assert_eq!(ok.tau_sq(1e-10).unwrap(), 2.0);
        assert_eq!(ok.sigma(&[7]).unwrap(), 0.0);
        let bad = Covariogram::tabulated(1, vec![(vec![0], 1.0), (vec![1], 0.5)], "inline");
        assert!(matches!(bad, Err(Error::InvalidParameter(_))));
        let no_zero = Covariogram::tabulated(1, vec![(vec![1], 0.5), (vec![-1], 0.5)], "inline");
        assert!(no_zero.is_err());
    }

    #[test]
    fn table_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cov.csv");
        std::fs::write(&path, "k1,k2,sigma\n0,0,1\n1,0,0.25\n-1,0,0.25\n").unwrap();
        let c = Covariogram::from_csv(&path).unwrap();
        assert_eq!(c.dim(), 2);
        assert_eq!(c.sigma(&[-1, 0]).unwrap(), 0.25);
        let spec = format!("table:@{}", path.display());
        assert_eq!(cov(&spec).tau_sq(1e-10).unwrap(), 1.5);
        std::fs::write(&path, "k1,sigma\n0,1\n2,0.1\n").unwrap();
        assert!(Covariogram::from_csv(&path).is_err());
    }

    #[test]
    fn exact_variance_small_window() {
        let c = cov("expsep:b1=1,b2=1");
        let w = LatticeWindow::from_sites(2, vec![0, 0, 0, 1, 1, 0, 1, 1]).unwrap();
        let expected = (1.0 + 1.0 / E).powi(2);
        for m in [ExactMethod::LagCount, ExactMethod::PairSum] {
            let v = exact_tau_n_sq_window(&w, &c, m).unwrap();
            assert!((v - expected).abs() < 1e-12, "{m:?}: {v}");
        }
        let r = Region::unshifted(Template::hypercube(2).unwrap(), vec![7.0, 9.0]).unwrap();
        assert_eq!(exact_tau_n_sq(&r, &cov("white")).unwrap(), 1.0);
    }

    #[test]
    fn exact_variance_paths_agree_on_disk() {
        let r = Region::unshifted("circle".parse().unwrap(), vec![11.0, 11.0]).unwrap();
        let w = lattice_sites(&r).unwrap();
        assert!(!w.is_full_box());
        let c = cov("gausssep:b1=0.5,b2=0.3");
        let a = exact_tau_n_sq_window(&w, &c, ExactMethod::LagCount).unwrap();
        let b = exact_tau_n_sq_window(&w, &c, ExactMethod::PairSum).unwrap();
        assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn shell_points() {
        let mut n = 0;
        for_each_shell_point(2, 2, |k| {
            assert_eq!(k.iter().map(|x| x.abs()).max(), Some(2));
            n += 1;
        });
        assert_eq!(n, 16);
    }
}
