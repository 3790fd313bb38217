//! Shape constants `K0`, `K1`, bias weights `V(k)`, the bias constant `B0`
//! and the OL/NOL asymptotic relative efficiency.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};

use crate::covariance::Covariogram;
use crate::error::{Error, Result};
use crate::geometry::{chord_set_covariance, default_resolution, grid_k0, Shape, Template};

/// Where a constant came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Analytic,
    Numeric,
}

/// Which weight path to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightSource {
    /// Analytic registry when available, numeric otherwise.
    #[default]
    Auto,
    Analytic,
    Numeric,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeConstants {
    pub k0: f64,
    pub k1: f64,
    pub volume: f64,
    pub source: Source,
}

impl ShapeConstants {
    fn new(k0: f64, volume: f64, source: Source) -> Self {
        ShapeConstants {
            k0,
            k1: k0 * volume,
            volume,
            source,
        }
    }
}

fn disk_k0() -> f64 {
    1.0 - 16.0 / (3.0 * PI * PI)
}

/// Registered closed form of `K0`, if any.
pub fn k0_analytic(template: &Template) -> Option<f64> {
    Some(match template.shape() {
        Shape::Hypercube { dim } => (2.0f64 / 3.0).powi(*dim as i32),
        Shape::RotatedRectangle { .. } | Shape::Parallelogram { .. } => 4.0 / 9.0,
        Shape::Circle { .. } => disk_k0(),
        Shape::RightTriangle | Shape::IsoscelesTriangle => 0.4,
        Shape::Trapezoid { b1, b2, .. } => {
            let rho = b2 / b1;
            let c = (1.0 + 2.0 * (rho - 1.0) / (rho + 1.0)) / (rho + 1.0).powi(2);
            0.4 * (1.0 + 4.0 * c / 9.0)
        }
        Shape::Hexagon { .. } => 37.0 / 81.0,
        Shape::Sphere { .. } => 34.0 / 105.0,
        Shape::Cylinder { .. } => 2.0 / 3.0 * disk_k0(),
        // K0 is invariant under invertible linear maps.
        Shape::Affine { base, .. } => k0_analytic(base)?,
    })
}

/// `K0` by grid quadrature with the given step (default per dimension).
pub fn k0_numeric(template: &Template, resolution: Option<f64>) -> Result<ShapeConstants> {
    let step = resolution.unwrap_or_else(|| default_resolution(template.dim()));
    let k0 = grid_k0(template, step)?;
    Ok(ShapeConstants::new(k0, template.volume(), Source::Numeric))
}

/// `K0`, `K1` and `|R0|`, analytic when registered.
pub fn k0(template: &Template) -> Result<ShapeConstants> {
    match k0_analytic(template) {
        Some(k0) => Ok(ShapeConstants::new(k0, template.volume(), Source::Analytic)),
        None => k0_numeric(template, None),
    }
}

/// `K1 = K0 |R0|`, the OL:NOL variance ratio.
pub fn k1(template: &Template) -> Result<f64> {
    Ok(k0(template)?.k1)
}

/// `ARE = K1^{2/(d+2)}`.
pub fn are(template: &Template) -> Result<f64> {
    let d = template.dim() as f64;
    Ok(k1(template)?.powf(2.0 / (d + 2.0)))
}

fn norm2(k: &[f64]) -> f64 {
    k.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Registered closed form of `V(k)` in template coordinates, if any.
pub fn v_weight_analytic(template: &Template, k: &[f64]) -> Option<f64> {
    if k.len() != template.dim() {
        return None;
    }
    let a = |i: usize| k[i].abs();
    Some(match template.shape() {
        Shape::Hypercube { .. } => k.iter().map(|x| x.abs()).sum(),
        Shape::RotatedRectangle { theta, l1, l2 } => {
            let (s, c) = theta.sin_cos();
            let u = k[0] * c - k[1] * s;
            let v = k[0] * s + k[1] * c;
            l2 * u.abs() + l1 * v.abs()
        }
        Shape::Circle { r } => 2.0 * r * norm2(k),
        Shape::RightTriangle => {
            if k[0] * k[1] > 0.0 {
                a(0) + a(1)
            } else {
                a(0).max(a(1))
            }
        }
        Shape::IsoscelesTriangle => (a(1) + (2.0 * a(0)).max(a(1))) / 2.0,
        Shape::Hexagon { side } => side * (a(1) + (3f64.sqrt() * a(0)).max(a(1))),
        Shape::Sphere { r } => PI * r * r * norm2(k),
        Shape::Cylinder { r, h } => a(2) * PI * r * r + 2.0 * r * h * k[0].hypot(k[1]),
        Shape::Trapezoid { .. } | Shape::Parallelogram { .. } | Shape::Affine { .. } => {
            return None
        }
    })
}

/// `(sin θ, cos θ)`, exact at multiples of `π/4`.
fn sin_cos_snapped(theta: f64) -> (f64, f64) {
    let m = theta / FRAC_PI_4;
    let r = m.round();
    if (m - r).abs() > 1e-12 {
        return theta.sin_cos();
    }
    let h = FRAC_1_SQRT_2;
    match (r as i64).rem_euclid(8) {
        0 => (0.0, 1.0),
        1 => (h, h),
        2 => (1.0, 0.0),
        3 => (h, -h),
        4 => (0.0, -1.0),
        5 => (-h, -h),
        6 => (-1.0, 0.0),
        _ => (-h, h),
    }
}

/// Closed form of the bias weight `V(k) / |R0|`, if registered. Rotated
/// rectangles use `|k·e1| / l1 + |k·e2| / l2` with the side lengths divided
/// out first, so a diamond gives `2‖k‖_∞` without rounding.
pub fn b0_weight_analytic(template: &Template, k: &[f64]) -> Option<f64> {
    if let Shape::RotatedRectangle { theta, l1, l2 } = template.shape() {
        if k.len() != 2 {
            return None;
        }
        let (s, c) = sin_cos_snapped(*theta);
        let u = k[0] * (c / l1) - k[1] * (s / l1);
        let v = k[0] * (s / l2) + k[1] * (c / l2);
        return Some(u.abs() + v.abs());
    }
    v_weight_analytic(template, k).map(|v| v / template.volume())
}

/// Secant steps for the numeric `V`.
const EPS: [f64; 2] = [1e-2, 5e-3];

fn chord_rows(dim: usize) -> usize {
    match dim {
        1 => 1,
        2 => 1 << 15,
        _ => 512,
    }
}

/// `V(u)` for a unit direction `u`: Richardson extrapolation of the secants
/// `(g(0) - g(εu))/ε` at the two steps in [`EPS`].
fn v_unit_numeric(template: &Template, u: &[f64]) -> Result<f64> {
    let rows = chord_rows(template.dim());
    let zero = vec![0.0; u.len()];
    let g0 = chord_set_covariance(template, &zero, rows)?;
    let secant = |eps: f64| -> Result<f64> {
        let x: Vec<f64> = u.iter().map(|v| v * eps).collect();
        Ok((g0 - chord_set_covariance(template, &x, rows)?) / eps)
    };
    let coarse = secant(EPS[0])?;
    let fine = secant(EPS[1])?;
    let ratio = EPS[0] / EPS[1];
    Ok(((ratio * fine - coarse) / (ratio - 1.0)).max(0.0))
}

/// Numeric `V(k)` by set-covariance secants, using positive homogeneity
/// `V(k) = ‖k‖ V(k/‖k‖)`.
pub fn v_weight_numeric(template: &Template, k: &[f64]) -> Result<f64> {
    check_dim(template, k.len())?;
    let n = norm2(k);
    if n == 0.0 {
        return Ok(0.0);
    }
    let u: Vec<f64> = k.iter().map(|x| x / n).collect();
    Ok(n * v_unit_numeric(template, &u)?)
}

fn check_dim(template: &Template, got: usize) -> Result<()> {
    if got != template.dim() {
        return Err(Error::DimensionMismatch {
            expected: template.dim(),
            got,
        });
    }
    Ok(())
}

/// `V(k)`, analytic when registered.
pub fn v_weight(template: &Template, k: &[i64]) -> Result<f64> {
    v_weight_with(template, k, WeightSource::Auto)
}

pub fn v_weight_with(template: &Template, k: &[i64], source: WeightSource) -> Result<f64> {
    check_dim(template, k.len())?;
    let kf: Vec<f64> = k.iter().map(|&x| x as f64).collect();
    if k.iter().all(|&x| x == 0) {
        return Ok(0.0);
    }
    match source {
        WeightSource::Numeric => v_weight_numeric(template, &kf),
        WeightSource::Analytic => v_weight_analytic(template, &kf)
            .ok_or_else(|| Error::UnsupportedShape(format!("no analytic weights for {template}"))),
        WeightSource::Auto => match v_weight_analytic(template, &kf) {
            Some(v) => Ok(v),
            None => v_weight_numeric(template, &kf),
        },
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Evaluates `V` on integer lags, caching numeric values per primitive direction.
struct WeightCache<'a> {
    template: &'a Template,
    source: WeightSource,
    analytic: bool,
    unit: HashMap<Vec<i64>, f64>,
}

impl<'a> WeightCache<'a> {
    fn new(template: &'a Template, source: WeightSource) -> Result<Self> {
        let probe = vec![1.0; template.dim()];
        let has_analytic = v_weight_analytic(template, &probe).is_some();
        let analytic = match source {
            WeightSource::Auto => has_analytic,
            WeightSource::Analytic if !has_analytic => {
                return Err(Error::UnsupportedShape(format!(
                    "no analytic weights for {template}"
                )))
            }
            WeightSource::Analytic => true,
            WeightSource::Numeric => false,
        };
        Ok(WeightCache {
            template,
            source,
            analytic,
            unit: HashMap::new(),
        })
    }

    fn get(&mut self, k: &[i64]) -> Result<f64> {
        if self.analytic {
            return v_weight_with(self.template, k, self.source);
        }
        self.numeric(k)
    }

    /// `V(k) / |R0|`.
    fn get_b0(&mut self, k: &[i64]) -> Result<f64> {
        if self.analytic {
            if k.iter().all(|&x| x == 0) {
                return Ok(0.0);
            }
            let kf: Vec<f64> = k.iter().map(|&x| x as f64).collect();
            return b0_weight_analytic(self.template, &kf)
                .ok_or_else(|| Error::UnsupportedShape(format!("no analytic weights for {}", self.template)));
        }
        Ok(self.numeric(k)? / self.template.volume())
    }

    fn numeric(&mut self, k: &[i64]) -> Result<f64> {
        let g = k.iter().fold(0u64, |acc, &x| gcd(acc, x.unsigned_abs()));
        if g == 0 {
            return Ok(0.0);
        }
        let prim: Vec<i64> = k.iter().map(|&x| x / g as i64).collect();
        let per = match self.unit.get(&prim) {
            Some(v) => *v,
            None => {
                let kf: Vec<f64> = prim.iter().map(|&x| x as f64).collect();
                let v = v_weight_numeric(self.template, &kf)?;
                self.unit.insert(prim, v);
                v
            }
        };
        Ok(g as f64 * per)
    }
}

/// Weights on the lags `‖k‖_∞ <= radius`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasWeights {
    pub weights: BTreeMap<Vec<i64>, f64>,
    pub source: Source,
}

/// `V(k)` on the lags `‖k‖_∞ <= radius`.
pub fn bias_weights(template: &Template, radius: i64, source: WeightSource) -> Result<BiasWeights> {
    lag_table(template, radius, source, false)
}

/// `V(k) / |R0|`, the coefficients of `σ(k)` in `B0`.
pub fn b0_weights(template: &Template, radius: i64, source: WeightSource) -> Result<BiasWeights> {
    lag_table(template, radius, source, true)
}

fn lag_table(template: &Template, radius: i64, source: WeightSource, normalized: bool) -> Result<BiasWeights> {
    let mut cache = WeightCache::new(template, source)?;
    let d = template.dim();
    let mut weights = BTreeMap::new();
    let mut k = vec![-radius; d];
    loop {
        let w = if normalized { cache.get_b0(&k)? } else { cache.get(&k)? };
        weights.insert(k.clone(), w);
        let mut j = d;
        loop {
            if j == 0 {
                return Ok(BiasWeights {
                    weights,
                    source: if cache.analytic {
                        Source::Analytic
                    } else {
                        Source::Numeric
                    },
                });
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

/// `B0 = Σ_k V(k) σ(k) / |R0|` for a linear statistic.
pub fn b0(template: &Template, cov: &Covariogram, rel_tol: f64) -> Result<f64> {
    b0_with(template, cov, rel_tol, true, WeightSource::Auto)
}

/// `B0` with an explicit weight path. In one dimension the bias of nonlinear
/// statistics carries an extra term that is not supported.
pub fn b0_with(
    template: &Template,
    cov: &Covariogram,
    rel_tol: f64,
    linear_statistic: bool,
    source: WeightSource,
) -> Result<f64> {
    check_dim(template, cov.dim())?;
    if template.dim() == 1 && !linear_statistic {
        return Err(Error::UnsupportedD1Nonlinear);
    }
    let mut cache = WeightCache::new(template, source)?;
    cov.weighted_sum(rel_tol, |k| cache.get_b0(k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::DEFAULT_REL_TOL;

    fn t(spec: &str) -> Template {
        spec.parse().unwrap()
    }

    #[test]
    fn analytic_k0_values() {
        assert!((k0(&t("hypercube:d=3")).unwrap().k0 - 8.0 / 27.0).abs() < 1e-15);
        assert!((k1(&t("circle")).unwrap() - (PI / 4.0 - 4.0 / (3.0 * PI))).abs() < 1e-12);
        assert!((k1(&t("sphere")).unwrap() - 17.0 * PI / 315.0).abs() < 1e-12);
        assert!((k1(&t("rtriangle")).unwrap() - 0.2).abs() < 1e-15);
        assert!((k1(&t("diamond")).unwrap() - 2.0 / 9.0).abs() < 1e-12);
        let trap = k0(&t("trapezoid:b1=0.5,b2=0.5")).unwrap().k0;
        assert!((trap - 4.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn are_values() {
        assert!((are(&t("hypercube:d=2")).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!((are(&t("circle")).unwrap() - 0.600820).abs() < 1e-6);
    }

    #[test]
    fn numeric_k0_of_trapezoid() {
        let tpl = t("trapezoid:b1=0.3,b2=0.9");
        let num = k0_numeric(&tpl, None).unwrap().k0;
        let ana = k0_analytic(&tpl).unwrap();
        assert!((num - ana).abs() < 1e-3, "{num} vs {ana}");
    }

    #[test]
    fn numeric_weights_match_registry() {
        for spec in ["hypercube", "circle:r=0.4", "itriangle", "hex:l=0.4", "rtriangle"] {
            let tpl = t(spec);
            for k in [[1i64, 0], [1, 1], [-2, 1], [0, 3]] {
                let a = v_weight_with(&tpl, &k, WeightSource::Analytic).unwrap();
                let n = v_weight_with(&tpl, &k, WeightSource::Numeric).unwrap();
                assert!((a - n).abs() < 1e-3, "{spec} {k:?}: {a} vs {n}");
            }
        }
    }

    #[test]
    fn hypercube_b0_closed_form() {
        let e = (-1.0f64).exp();
        let s0 = (1.0 + e) / (1.0 - e);
        let s1 = 2.0 * e / (1.0 - e).powi(2);
        let cov: Covariogram = "expsep:b1=1,b2=1".parse().unwrap();
        let b = b0(&t("hypercube"), &cov, DEFAULT_REL_TOL).unwrap();
        assert!((b - 2.0 * s1 * s0).abs() < 1e-8, "{b}");
    }

    #[test]
    fn b0_edge_cases() {
        let white: Covariogram = "white".parse().unwrap();
        assert_eq!(b0(&t("circle"), &white, DEFAULT_REL_TOL).unwrap(), 0.0);
        let line = Covariogram::exp_separable(vec![1.0]).unwrap();
        let seg = t("hypercube:d=1");
        assert!(b0(&seg, &line, DEFAULT_REL_TOL).is_ok());
        assert_eq!(
            b0_with(&seg, &line, DEFAULT_REL_TOL, false, WeightSource::Auto),
            Err(Error::UnsupportedD1Nonlinear)
        );
        let cov: Covariogram = "expsep:b1=1,b2=1".parse().unwrap();
        assert!(b0(&t("sphere"), &cov, DEFAULT_REL_TOL).is_err());
    }

    #[test]
    fn numeric_b0_for_parallelogram() {
        let cov: Covariogram = "expsep:b1=1,b2=1".parse().unwrap();
        let tpl = t("parallelogram:gamma=1.2,l1=0.5,l2=0.5");
        let b = b0(&tpl, &cov, 1e-8).unwrap();
        // Cauchy projection formula for a parallelogram: |e1 x k| + |e2 x k|
        let (s, c) = 1.2f64.sin_cos();
        let direct = cov
            .weighted_sum(1e-10, |k| {
                let (k1, k2) = (k[0] as f64, k[1] as f64);
                Ok(0.5 * k2.abs() + 0.5 * (c * k2 - s * k1).abs())
            })
            .unwrap()
            / tpl.volume();
        assert!((b - direct).abs() < 1e-3 * direct, "{b} vs {direct}");
    }

    #[test]
    fn diamond_b0_weights_are_exact() {
        let rot = t(&format!("rotrect:theta={},l1={},l2={}", FRAC_PI_4, FRAC_1_SQRT_2, FRAC_1_SQRT_2));
        let w = b0_weights(&rot, 5, WeightSource::Analytic).unwrap();
        for (k, v) in &w.weights {
            let inf = k.iter().map(|x| x.abs()).max().unwrap() as f64;
            assert_eq!(*v, 2.0 * inf, "{k:?}");
        }
    }
}
