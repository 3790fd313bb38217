//! Smooth-function statistics and the OL / NOL subsample variance estimators.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    enumerate, lattice_sites, LatticeWindow, Region, Scheme, SubsampleIndexSet, SubsampleSpec,
};

/// `H` applied to the mean vector of a `p`-variate field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SmoothStatistic {
    /// `H(x) = x`.
    Mean,
    /// `H(x) = x1 / x2`.
    Ratio,
    /// `H(x) = x2 - x1²`, the variance from first and second moments.
    MomentVariance,
}

impl SmoothStatistic {
    pub fn arity(&self) -> usize {
        match self {
            SmoothStatistic::Mean => 1,
            _ => 2,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, SmoothStatistic::Mean)
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arity() {
            return Err(Error::DimensionMismatch {
                expected: self.arity(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        let value = match self {
            SmoothStatistic::Mean => x[0],
            SmoothStatistic::Ratio => {
                if x[1] == 0.0 {
                    return Err(Error::StatisticDomain {
                        point: x.to_vec(),
                        reason: "zero denominator".into(),
                    });
                }
                x[0] / x[1]
            }
            SmoothStatistic::MomentVariance => x[1] - x[0] * x[0],
        };
        if !value.is_finite() {
            return Err(Error::StatisticDomain {
                point: x.to_vec(),
                reason: "non-finite value".into(),
            });
        }
        Ok(value)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        Ok(match self {
            SmoothStatistic::Mean => vec![1.0],
            SmoothStatistic::Ratio => {
                if x[1] == 0.0 {
                    return Err(Error::StatisticDomain {
                        point: x.to_vec(),
                        reason: "zero denominator".into(),
                    });
                }
                vec![1.0 / x[1], -x[0] / (x[1] * x[1])]
            }
            SmoothStatistic::MomentVariance => vec![-2.0 * x[0], 1.0],
        })
    }
}

impl fmt::Display for SmoothStatistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SmoothStatistic::Mean => "mean",
            SmoothStatistic::Ratio => "ratio",
            SmoothStatistic::MomentVariance => "momvar",
        })
    }
}

impl FromStr for SmoothStatistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mean" => Ok(SmoothStatistic::Mean),
            "ratio" => Ok(SmoothStatistic::Ratio),
            "momvar" => Ok(SmoothStatistic::MomentVariance),
            other => Err(Error::parse(s, format!("unknown statistic `{other}`"))),
        }
    }
}

/// Observed values, one `p`-vector per site of a lattice window.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    window: LatticeWindow,
    arity: usize,
    values: Vec<f64>,
}

impl FieldSample {
    /// `values` holds `arity` entries per site, in the window's site order.
    pub fn new(window: LatticeWindow, arity: usize, values: Vec<f64>) -> Result<Self> {
        if arity == 0 || values.len() != window.len() * arity {
            return Err(Error::InvalidParameter(format!(
                "expected {} values for {} sites of arity {arity}, got {}",
                window.len() * arity,
                window.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("field values must be finite".into()));
        }
        Ok(FieldSample {
            window,
            arity,
            values,
        })
    }

    /// Builds a sample from unordered `(site, values)` rows.
    pub fn from_rows(dim: usize, arity: usize, mut rows: Vec<(Vec<i64>, Vec<f64>)>) -> Result<Self> {
        if rows.iter().any(|(s, v)| s.len() != dim || v.len() != arity) {
            return Err(Error::InvalidParameter("row has the wrong number of entries".into()));
        }
        rows.sort_by(|a, b| a.0.cmp(&b.0));
        let coords: Vec<i64> = rows.iter().flat_map(|(s, _)| s.iter().copied()).collect();
        let values: Vec<f64> = rows.iter().flat_map(|(_, v)| v.iter().copied()).collect();
        Self::new(LatticeWindow::from_sites(dim, coords)?, arity, values)
    }

    pub fn window(&self) -> &LatticeWindow {
        &self.window
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, site: usize) -> &[f64] {
        &self.values[site * self.arity..(site + 1) * self.arity]
    }

    /// Same values on sites moved by `-offset`.
    pub fn translated(&self, offset: &[i64]) -> Result<Self> {
        let d = self.window.dim();
        let coords: Vec<i64> = self
            .window
            .coords()
            .iter()
            .enumerate()
            .map(|(i, c)| c - offset[i % d])
            .collect();
        Self::new(
            LatticeWindow::from_sites(d, coords)?,
            self.arity,
            self.values.clone(),
        )
    }

    /// The sub-sample on the listed window positions (kept in window order).
    pub fn restricted(&self, positions: &[usize]) -> Result<Self> {
        let d = self.window.dim();
        let mut coords = Vec::with_capacity(positions.len() * d);
        let mut values = Vec::with_capacity(positions.len() * self.arity);
        for &i in positions {
            coords.extend_from_slice(self.window.site(i));
            values.extend_from_slice(self.value(i));
        }
        Self::new(LatticeWindow::from_sites(d, coords)?, self.arity, values)
    }

    /// Reads `s1..sd,v1..vp` CSV; row order is irrelevant.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let ctx = || format!("reading field {}", path.display());
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::io(ctx(), e))?;
        let headers = reader.headers().map_err(|e| Error::io(ctx(), e))?.clone();
        let names: Vec<String> = headers.iter().map(str::to_ascii_lowercase).collect();
        let dim = names.iter().take_while(|h| h.starts_with('s')).count();
        let arity = names.len() - dim;
        let expected: Vec<String> = (1..=dim)
            .map(|i| format!("s{i}"))
            .chain((1..=arity).map(|i| format!("v{i}")))
            .collect();
        let spec = path.display().to_string();
        if dim == 0 || arity == 0 || names != expected {
            return Err(Error::parse(&spec, "expected header s1,...,sd,v1,...,vp"));
        }
        let mut rows = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::io(ctx(), e))?;
            let bad = |what: &str| Error::parse(&spec, format!("row {}: invalid {what}", line + 2));
            let site = (0..dim)
                .map(|j| rec[j].parse::<i64>().map_err(|_| bad("site coordinate")))
                .collect::<Result<Vec<_>>>()?;
            let vals = (dim..dim + arity)
                .map(|j| rec[j].parse::<f64>().map_err(|_| bad("value")))
                .collect::<Result<Vec<_>>>()?;
            rows.push((site, vals));
        }
        Self::from_rows(dim, arity, rows)
    }

    /// Writes the sample as CSV in window order with round-trip float formatting.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let ctx = || format!("writing field {}", path.display());
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        let d = self.window.dim();
        let header: Vec<String> = (1..=d)
            .map(|i| format!("s{i}"))
            .chain((1..=self.arity).map(|i| format!("v{i}")))
            .collect();
        w.write_record(&header).map_err(|e| Error::io(ctx(), e))?;
        for i in 0..self.window.len() {
            let rec: Vec<String> = self
                .window
                .site(i)
                .iter()
                .map(|c| c.to_string())
                .chain(self.value(i).iter().map(|v| format!("{v:?}")))
                .collect();
            w.write_record(&rec).map_err(|e| Error::io(ctx(), e))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io(ctx(), e.error()))?;
        crate::io::write_atomic(path, &bytes)
    }
}

/// Output of a subsample variance estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorResult {
    pub tau_hat_sq: f64,
    pub scheme: Scheme,
    /// `|J|`.
    pub subsamples: usize,
    /// Site count of each subsample, in offset order.
    pub site_counts: Vec<usize>,
    /// `θ̃`, the average of the subsample statistics.
    pub grand_mean: f64,
    /// `θ̂_i`, when retention was requested.
    pub theta_hats: Option<Vec<f64>>,
    /// False for NOL designs with a non-integer scale.
    pub integer_scale: bool,
}

/// `H` of the mean vector over the given window positions. Means are
/// accumulated in the order given, then divided by the count.
pub fn evaluate_statistic(
    stat: SmoothStatistic,
    sample: &FieldSample,
    sites: &[usize],
) -> Result<f64> {
    if sites.is_empty() {
        return Err(Error::InvalidParameter("empty site subset".into()));
    }
    if sample.arity() != stat.arity() {
        return Err(Error::DimensionMismatch {
            expected: stat.arity(),
            got: sample.arity(),
        });
    }
    let mut mean = [0.0; 2];
    let p = stat.arity();
    for &i in sites {
        let v = sample.value(i);
        for j in 0..p {
            mean[j] += v[j];
        }
    }
    for m in mean.iter_mut().take(p) {
        *m /= sites.len() as f64;
    }
    stat.eval(&mean[..p])
}

/// Subsamples resolved to positions in a sample window, reusable across
/// samples that share the window (e.g. simulation replicates).
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorPlan {
    scheme: Scheme,
    positions: Vec<usize>,
    starts: Vec<usize>,
    integer_scale: bool,
}

/// Checks that the window holds every site of the region.
pub fn check_coverage(window: &LatticeWindow, region: &Region) -> Result<()> {
    let sites = lattice_sites(region)?;
    for s in sites.sites() {
        if window.index_of(s).is_none() {
            return Err(Error::MissingSites { site: s.to_vec() });
        }
    }
    Ok(())
}

impl EstimatorPlan {
    pub fn new(window: &LatticeWindow, region: &Region, spec: &SubsampleSpec) -> Result<Self> {
        if window.dim() != region.dim() {
            return Err(Error::DimensionMismatch {
                expected: region.dim(),
                got: window.dim(),
            });
        }
        let set = enumerate(region, spec)?;
        if set.len() < 2 {
            return Err(Error::DegenerateSubsampling { count: set.len() });
        }
        check_coverage(window, region)?;
        Self::from_index_set(window, &set)
    }

    pub fn from_index_set(window: &LatticeWindow, set: &SubsampleIndexSet) -> Result<Self> {
        let d = set.dim();
        let mut positions = Vec::new();
        let mut starts = vec![0];
        for j in 0..set.len() {
            for s in set.members(j).chunks(d) {
                let pos = window
                    .index_of(s)
                    .ok_or_else(|| Error::MissingSites { site: s.to_vec() })?;
                positions.push(pos);
            }
            starts.push(positions.len());
        }
        Ok(EstimatorPlan {
            scheme: set.scheme(),
            positions,
            starts,
            integer_scale: set.integer_scale(),
        })
    }

    pub fn subsamples(&self) -> usize {
        self.starts.len() - 1
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn members(&self, j: usize) -> &[usize] {
        &self.positions[self.starts[j]..self.starts[j + 1]]
    }

    /// Subsample statistics `θ̂_i` in offset order.
    pub fn theta_hats(&self, sample: &FieldSample, stat: SmoothStatistic) -> Result<Vec<f64>> {
        let eval = |j: usize| evaluate_statistic(stat, sample, self.members(j));
        if self.subsamples() >= 256 {
            (0..self.subsamples()).into_par_iter().map(eval).collect()
        } else {
            (0..self.subsamples()).map(eval).collect()
        }
    }

    /// `(θ̃, τ̂²)` from the subsample statistics, summed in offset order.
    fn reduce(&self, thetas: &[f64]) -> (f64, f64) {
        let count = thetas.len() as f64;
        let grand = thetas.iter().sum::<f64>() / count;
        let mut acc = 0.0;
        for (j, t) in thetas.iter().enumerate() {
            let diff = t - grand;
            acc += (self.starts[j + 1] - self.starts[j]) as f64 * diff * diff;
        }
        (grand, acc / count)
    }

    /// `τ̂²` with every plan position `p` read from `sample` at `map[p]`.
    /// Equals `estimate` on the gathered sample, bit for bit.
    pub fn tau_hat_sq_mapped(
        &self,
        sample: &FieldSample,
        stat: SmoothStatistic,
        map: &[usize],
    ) -> Result<f64> {
        let count = self.subsamples();
        if count < 2 {
            return Err(Error::DegenerateSubsampling { count });
        }
        let mut sites = Vec::new();
        let thetas = (0..count)
            .map(|j| {
                sites.clear();
                sites.extend(self.members(j).iter().map(|&p| map[p]));
                evaluate_statistic(stat, sample, &sites)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(self.reduce(&thetas).1)
    }

    pub fn estimate(
        &self,
        sample: &FieldSample,
        stat: SmoothStatistic,
        retain: bool,
    ) -> Result<EstimatorResult> {
        let count = self.subsamples();
        if count < 2 {
            return Err(Error::DegenerateSubsampling { count });
        }
        let thetas = self.theta_hats(sample, stat)?;
        let (grand, tau) = self.reduce(&thetas);
        Ok(EstimatorResult {
            tau_hat_sq: tau,
            scheme: self.scheme,
            subsamples: count,
            site_counts: (0..count).map(|j| self.starts[j + 1] - self.starts[j]).collect(),
            grand_mean: grand,
            theta_hats: retain.then_some(thetas),
            integer_scale: self.integer_scale,
        })
    }
}

fn run(
    sample: &FieldSample,
    region: &Region,
    spec: &SubsampleSpec,
    stat: SmoothStatistic,
    scheme: Scheme,
) -> Result<EstimatorResult> {
    if spec.scheme != scheme {
        return Err(Error::InvalidParameter(format!(
            "expected a {scheme} specification, got {}",
            spec.scheme
        )));
    }
    EstimatorPlan::new(sample.window(), region, spec)?.estimate(sample, stat, false)
}

/// `τ̂²_OL = |J|⁻¹ Σ sN (θ̂_i - θ̃)²` over all integer translates.
pub fn ol_estimate(
    sample: &FieldSample,
    region: &Region,
    spec: &SubsampleSpec,
    stat: SmoothStatistic,
) -> Result<EstimatorResult> {
    run(sample, region, spec, stat, Scheme::Ol)
}

/// `τ̂²_NOL = |J|⁻¹ Σ sN_i (θ̂_i - θ̃)²` over the disjoint blocks.
pub fn nol_estimate(
    sample: &FieldSample,
    region: &Region,
    spec: &SubsampleSpec,
    stat: SmoothStatistic,
) -> Result<EstimatorResult> {
    run(sample, region, spec, stat, Scheme::Nol)
}

/// Dispatches on the specification's scheme.
pub fn estimate(
    sample: &FieldSample,
    region: &Region,
    spec: &SubsampleSpec,
    stat: SmoothStatistic,
) -> Result<EstimatorResult> {
    run(sample, region, spec, stat, spec.scheme)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Template;

    fn line_sample(values: &[f64]) -> FieldSample {
        let coords: Vec<i64> = (0..values.len() as i64).collect();
        FieldSample::new(LatticeWindow::from_sites(1, coords).unwrap(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn statistic_examples() {
        let s = line_sample(&[1.0, 2.0, 3.0]);
        assert_eq!(evaluate_statistic(SmoothStatistic::Mean, &s, &[0, 1, 2]).unwrap(), 2.0);
        let w = LatticeWindow::from_sites(1, vec![0, 1]).unwrap();
        let pairs = FieldSample::new(w.clone(), 2, vec![2.0, 1.0, 4.0, 2.0]).unwrap();
        assert_eq!(evaluate_statistic(SmoothStatistic::Ratio, &pairs, &[0, 1]).unwrap(), 2.0);
        let mom = FieldSample::new(w.clone(), 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(
            evaluate_statistic(SmoothStatistic::MomentVariance, &mom, &[0, 1]).unwrap(),
            0.25
        );
        let zero = FieldSample::new(w, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(matches!(
            evaluate_statistic(SmoothStatistic::Ratio, &zero, &[0, 1]),
            Err(Error::StatisticDomain { .. })
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let points = [[0.7, 1.3], [-0.4, 2.5], [1.9, -0.8]];
        for stat in [SmoothStatistic::Ratio, SmoothStatistic::MomentVariance] {
            for x in points {
                let g = stat.gradient(&x).unwrap();
                for j in 0..2 {
                    let h = 1e-6;
                    let mut up = x;
                    let mut dn = x;
                    up[j] += h;
                    dn[j] -= h;
                    let fd = (stat.eval(&up).unwrap() - stat.eval(&dn).unwrap()) / (2.0 * h);
                    assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1.0), "{stat} {x:?}");
                }
            }
        }
        assert_eq!(SmoothStatistic::Mean.gradient(&[3.0]).unwrap(), vec![1.0]);
    }

    fn square_sample(n: i64, f: impl Fn(i64, i64) -> f64) -> (FieldSample, Region) {
        let region =
            Region::unshifted(Template::hypercube(2).unwrap(), vec![n as f64, n as f64]).unwrap();
        let w = lattice_sites(&region).unwrap();
        let values = w.sites().map(|s| f(s[0], s[1])).collect();
        (FieldSample::new(w, 1, values).unwrap(), region)
    }

    #[test]
    fn constant_field_has_zero_estimate() {
        let (s, r) = square_sample(8, |_, _| 3.5);
        let cube = Template::hypercube(2).unwrap();
        for scheme in [Scheme::Ol, Scheme::Nol] {
            let spec = SubsampleSpec::new(cube.clone(), 2.0, scheme).unwrap();
            assert_eq!(estimate(&s, &r, &spec, SmoothStatistic::Mean).unwrap().tau_hat_sq, 0.0);
        }
    }

    #[test]
    fn degenerate_and_missing() {
        let (s, r) = square_sample(10, |a, b| (a * 7 + b) as f64);
        let cube = Template::hypercube(2).unwrap();
        let full = SubsampleSpec::new(cube.clone(), 10.0, Scheme::Ol).unwrap();
        assert_eq!(
            ol_estimate(&s, &r, &full, SmoothStatistic::Mean),
            Err(Error::DegenerateSubsampling { count: 1 })
        );
        let nol = SubsampleSpec::new(cube.clone(), 4.0, Scheme::Nol).unwrap();
        assert_eq!(
            nol_estimate(&s, &r, &nol, SmoothStatistic::Mean),
            Err(Error::DegenerateSubsampling { count: 1 })
        );
        let partial = s.restricted(&(1..100).collect::<Vec<_>>()).unwrap();
        let spec = SubsampleSpec::new(cube, 3.0, Scheme::Ol).unwrap();
        assert_eq!(
            ol_estimate(&partial, &r, &spec, SmoothStatistic::Mean),
            Err(Error::MissingSites { site: vec![-4, -4] })
        );
    }

    #[test]
    fn field_csv_round_trip() {
        let (s, _) = square_sample(4, |a, b| (a as f64).sin() * 1e-3 + b as f64 / 3.0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.csv");
        s.write_csv(&path).unwrap();
        let back = FieldSample::read_csv(&path).unwrap();
        assert_eq!(back, s);
        std::fs::write(&path, "s2,s1,v1\n0,0,1\n").unwrap();
        assert!(FieldSample::read_csv(&path).is_err());
    }

    #[test]
    fn rows_are_sorted() {
        let rows = vec![(vec![1], vec![5.0]), (vec![0], vec![4.0])];
        let s = FieldSample::from_rows(1, 1, rows).unwrap();
        assert_eq!(s.values(), &[4.0, 5.0]);
    }
}
