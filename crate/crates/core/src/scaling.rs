//! Optimal subsample scales: the asymptotic formula and the plug-in (NPI) and
//! subsample-MSE (HJ) selectors.

use rayon::prelude::*;

use crate::constants::{k0, ShapeConstants};
use crate::error::{Error, Result};
use crate::estimators::{EstimatorPlan, FieldSample, SmoothStatistic};
use crate::geometry::{
    enumerate_ol, lattice_sites, LatticeWindow, Region, Scheme, SubsampleSpec,
};

/// Fewest candidate scales HJ accepts.
pub const MIN_HJ_CANDIDATES: usize = 5;

/// Inputs and intermediate values behind a plan.
#[derive(Debug, Clone, PartialEq)]
pub enum Diagnostics {
    Theory {
        dim: usize,
        det: f64,
        b0: f64,
        tau_sq: f64,
        k0: f64,
        volume: f64,
    },
    Npi {
        c1: f64,
        c2: f64,
        /// Rounded pilot scales `sλ⁽¹⁾`, `sλ⁽²⁾`.
        s1: u64,
        s2: u64,
        tau_sq_hat: f64,
        b0_hat: f64,
    },
    Hj {
        lambda_m: f64,
        candidates: Vec<f64>,
        /// Empirical MSE per candidate; `None` where the candidate admits
        /// fewer than two subsamples inside `λ_m R0`.
        mse: Vec<Option<f64>>,
        argmin: f64,
        /// `|R_n| / |λ_m R0|`.
        volume_ratio: f64,
        proxy: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingPlan {
    pub scheme: Scheme,
    pub lambda_opt_real: f64,
    pub lambda_opt_int: u64,
    pub diagnostics: Diagnostics,
}

impl ScalingPlan {
    /// Key-value lines, one per field.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let mut out = vec![
            ("scheme".to_string(), self.scheme.to_string()),
            ("lambda_opt_real".to_string(), format!("{:.16e}", self.lambda_opt_real)),
            ("lambda_opt_int".to_string(), self.lambda_opt_int.to_string()),
        ];
        let mut push = |k: &str, v: String| out.push((k.to_string(), v));
        match &self.diagnostics {
            Diagnostics::Theory {
                dim,
                det,
                b0,
                tau_sq,
                k0,
                volume,
            } => {
                push("method", "theory".into());
                push("d", dim.to_string());
                push("det", format!("{det}"));
                push("b0", format!("{b0}"));
                push("tau2", format!("{tau_sq}"));
                push("k0", format!("{k0}"));
                push("volume", format!("{volume}"));
            }
            Diagnostics::Npi {
                c1,
                c2,
                s1,
                s2,
                tau_sq_hat,
                b0_hat,
            } => {
                push("method", "npi".into());
                push("c1", format!("{c1}"));
                push("c2", format!("{c2}"));
                push("s1", s1.to_string());
                push("s2", s2.to_string());
                push("tau2_hat", format!("{tau_sq_hat}"));
                push("b0_hat", format!("{b0_hat}"));
            }
            Diagnostics::Hj {
                lambda_m,
                candidates,
                mse,
                argmin,
                volume_ratio,
                proxy,
            } => {
                push("method", "hj".into());
                push("lambda_m", format!("{lambda_m}"));
                push("proxy_tau2", format!("{proxy}"));
                push("volume_ratio", format!("{volume_ratio}"));
                push("argmin", format!("{argmin}"));
                for (c, m) in candidates.iter().zip(mse) {
                    let v = m.map_or_else(|| "NA".to_string(), |m| format!("{m}"));
                    push(&format!("mse[{c}]"), v);
                }
            }
        }
        out
    }
}

pub(crate) fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Largest integer scale strictly below `min_scale`, at least 1.
fn upper_clamp(min_scale: f64) -> u64 {
    ((min_scale.ceil() - 1.0).max(1.0)) as u64
}

fn to_int(real: f64, upper: Option<u64>) -> u64 {
    let r = round_half_up(real).max(1.0);
    let r = if r.is_finite() { r as u64 } else { u64::MAX };
    upper.map_or(r, |u| r.min(u))
}

/// `λ_OL = (detΔ B0² / (d K0 τ⁴))^{1/(d+2)}`,
/// `λ_NOL = (detΔ |R0| B0² / (d τ⁴))^{1/(d+2)}`.
pub fn theoretical_scaling(
    dim: usize,
    det: f64,
    b0: f64,
    tau_sq: f64,
    shape: &ShapeConstants,
    scheme: Scheme,
) -> Result<ScalingPlan> {
    if dim == 0 {
        return Err(Error::InvalidParameter("dimension must be positive".into()));
    }
    if !(det.is_finite() && det > 0.0) {
        return Err(Error::InvalidParameter(format!("det must be positive, got {det}")));
    }
    if !b0.is_finite() {
        return Err(Error::InvalidParameter(format!("b0 must be finite, got {b0}")));
    }
    if b0 == 0.0 {
        return Err(Error::ZeroBiasConstant);
    }
    if !(tau_sq.is_finite() && tau_sq > 0.0) {
        return Err(Error::InvalidParameter(format!("tau2 must be positive, got {tau_sq}")));
    }
    let d = dim as f64;
    let base = match scheme {
        Scheme::Ol => det * b0 * b0 / (d * shape.k0 * tau_sq * tau_sq),
        Scheme::Nol => det * shape.volume * b0 * b0 / (d * tau_sq * tau_sq),
    };
    let real = base.powf(1.0 / (d + 2.0));
    Ok(ScalingPlan {
        scheme,
        lambda_opt_real: real,
        lambda_opt_int: to_int(real, None),
        diagnostics: Diagnostics::Theory {
            dim,
            det,
            b0,
            tau_sq,
            k0: shape.k0,
            volume: shape.volume,
        },
    })
}

fn estimate_at(
    sample: &FieldSample,
    region: &Region,
    stat: SmoothStatistic,
    scale: f64,
    scheme: Scheme,
) -> Result<f64> {
    let spec = SubsampleSpec::new(region.template().clone(), scale, scheme)?;
    Ok(EstimatorPlan::new(sample.window(), region, &spec)?
        .estimate(sample, stat, false)?
        .tau_hat_sq)
}

/// Two-scale bias estimate `2s (τ̂²(2s) - τ̂²(s))`.
pub fn npi_bias(tau_at_s: f64, tau_at_2s: f64, s: f64) -> f64 {
    2.0 * s * (tau_at_2s - tau_at_s)
}

/// Plug-in selector: `τ̂²` at `c1 |R_n|^{1/(d+2)}`, `B̂0` from scales
/// `s, 2s` with `s = c2 |R_n|^{1/(d+4)}`, both rounded half up.
pub fn npi_scaling(
    sample: &FieldSample,
    region: &Region,
    stat: SmoothStatistic,
    c1: f64,
    c2: f64,
    scheme: Scheme,
) -> Result<ScalingPlan> {
    npi_from_curve(region, c1, c2, scheme, |s| estimate_at(sample, region, stat, s, scheme))
}

/// The plug-in rule applied to an arbitrary estimator curve `s -> τ̂²(s)`.
pub fn npi_from_curve<F>(region: &Region, c1: f64, c2: f64, scheme: Scheme, mut curve: F) -> Result<ScalingPlan>
where
    F: FnMut(f64) -> Result<f64>,
{
    for (name, c) in [("c1", c1), ("c2", c2)] {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidParameter(format!("{name} must be positive, got {c}")));
        }
    }
    let (s1, s2) = npi_pilots(region, c1, c2);
    let tau_sq_hat = curve(s1 as f64)?;
    let low = curve(s2 as f64)?;
    let high = curve(2.0 * s2 as f64)?;
    let b0_hat = npi_bias(low, high, s2 as f64);
    let shape = k0(region.template())?;
    let theory = theoretical_scaling(region.dim(), region.det(), b0_hat, tau_sq_hat, &shape, scheme)?;
    Ok(ScalingPlan {
        scheme,
        lambda_opt_real: theory.lambda_opt_real,
        lambda_opt_int: to_int(theory.lambda_opt_real, Some(upper_clamp(region.min_scale()))),
        diagnostics: Diagnostics::Npi {
            c1,
            c2,
            s1,
            s2,
            tau_sq_hat,
            b0_hat,
        },
    })
}

/// Rounded pilot scales `(sλ⁽¹⁾, sλ⁽²⁾)`, each at least 1.
pub fn npi_pilots(region: &Region, c1: f64, c2: f64) -> (u64, u64) {
    let d = region.dim() as f64;
    let vol = region.volume();
    let s1 = round_half_up(c1 * vol.powf(1.0 / (d + 2.0))).max(1.0);
    let s2 = round_half_up(c2 * vol.powf(1.0 / (d + 4.0))).max(1.0);
    (s1 as u64, s2 as u64)
}

/// Default HJ grid `{2, ..., λ_m - 1}`.
pub fn default_candidates(lambda_m: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut c = 2.0;
    while c < lambda_m {
        out.push(c);
        c += 1.0;
    }
    out
}

/// `ŝλ_m (|R_n| / |λ_m R0|)^{1/(d+2)}`.
pub fn hj_recalibrate(argmin: f64, volume_ratio: f64, dim: usize) -> f64 {
    argmin * volume_ratio.powf(1.0 / (dim as f64 + 2.0))
}

/// Subsample-MSE selector. Every OL subregion `i + λ_m R0` is treated as a
/// sampling region; the scheme's estimator at each candidate scale is
/// compared with the full-region estimate at scale `λ_m`.
pub fn hj_scaling(
    sample: &FieldSample,
    region: &Region,
    stat: SmoothStatistic,
    lambda_m: f64,
    candidates: &[f64],
    scheme: Scheme,
) -> Result<ScalingPlan> {
    let d = region.dim();
    if !(lambda_m.is_finite() && lambda_m > 0.0 && lambda_m < region.min_scale()) {
        return Err(Error::InvalidParameter(format!(
            "lambda_m must lie in (0, {}), got {lambda_m}",
            region.min_scale()
        )));
    }
    let mut grid = candidates.to_vec();
    if let Some(c) = grid.iter().find(|c| !(c.is_finite() && **c > 0.0 && **c < lambda_m)) {
        return Err(Error::InvalidParameter(format!(
            "candidate {c} is not in (0, {lambda_m})"
        )));
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    if grid.len() < MIN_HJ_CANDIDATES {
        return Err(Error::InsufficientCandidates {
            required: MIN_HJ_CANDIDATES,
            got: grid.len(),
        });
    }
    let template = region.template().clone();
    let window = sample.window();

    let outer_spec = SubsampleSpec::new(template.clone(), lambda_m, Scheme::Ol)?;
    let outer = enumerate_ol(region, &outer_spec)?;
    if outer.len() < 2 {
        return Err(Error::DegenerateSubsampling { count: outer.len() });
    }
    let proxy = estimate_at(sample, region, stat, lambda_m, scheme)?;

    let local = Region::new(template.clone(), vec![lambda_m; d], region.shift().to_vec())?;
    let local_window = lattice_sites(&local)?;
    let maps = subregion_maps(window, &local_window, &outer)?;

    let mut mse = Vec::with_capacity(grid.len());
    let mut largest = 0;
    for &c in &grid {
        let spec = SubsampleSpec::new(template.clone(), c, scheme)?;
        let plan = match EstimatorPlan::new(&local_window, &local, &spec) {
            Ok(p) => p,
            Err(Error::DegenerateSubsampling { count }) => {
                largest = largest.max(count);
                mse.push(None);
                continue;
            }
            Err(e) => return Err(e),
        };
        let devs = maps
            .par_iter()
            .map(|map| plan.tau_hat_sq_mapped(sample, stat, map).map(|t| (t - proxy) * (t - proxy)))
            .collect::<Result<Vec<f64>>>()?;
        mse.push(Some(devs.iter().sum::<f64>() / devs.len() as f64));
    }

    let mut best: Option<(f64, f64)> = None;
    for (&c, m) in grid.iter().zip(&mse) {
        if let Some(m) = *m {
            if best.is_none_or(|(_, b)| m < b) {
                best = Some((c, m));
            }
        }
    }
    let Some((argmin, _)) = best else {
        return Err(Error::DegenerateSubsampling { count: largest });
    };
    let volume_ratio = region.det() / lambda_m.powi(d as i32);
    let real = hj_recalibrate(argmin, volume_ratio, d);
    Ok(ScalingPlan {
        scheme,
        lambda_opt_real: real,
        lambda_opt_int: to_int(real, Some(upper_clamp(region.min_scale()))),
        diagnostics: Diagnostics::Hj {
            lambda_m,
            candidates: grid,
            mse,
            argmin,
            volume_ratio,
            proxy,
        },
    })
}

/// For each outer offset `i`, the sample position of `i + s` for every site
/// `s` of the local window.
fn subregion_maps(
    window: &LatticeWindow,
    local: &LatticeWindow,
    outer: &crate::geometry::SubsampleIndexSet,
) -> Result<Vec<Vec<usize>>> {
    let d = window.dim();
    let mut moved = vec![0i64; d];
    (0..outer.len())
        .map(|j| {
            let off = outer.offset(j);
            local
                .sites()
                .map(|s| {
                    for k in 0..d {
                        moved[k] = s[k] + off[k];
                    }
                    window
                        .index_of(&moved)
                        .ok_or_else(|| Error::MissingSites { site: moved.clone() })
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Template;

    fn square() -> ShapeConstants {
        k0(&Template::hypercube(2).unwrap()).unwrap()
    }

    #[test]
    fn theory_value_for_the_large_rectangle() {
        let p = theoretical_scaling(2, 1260.0, 7.9695, 4.6827, &square(), Scheme::Ol).unwrap();
        let expected = (1260.0 * 7.9695f64.powi(2) / (2.0 * (4.0 / 9.0) * 4.6827f64.powi(2))).powf(0.25);
        assert_eq!(p.lambda_opt_real, expected);
        assert!((p.lambda_opt_real - 8.0).abs() < 0.01);
        assert_eq!(p.lambda_opt_int, 8);
    }

    #[test]
    fn theory_errors() {
        assert_eq!(
            theoretical_scaling(2, 100.0, 0.0, 1.0, &square(), Scheme::Ol).unwrap_err(),
            Error::ZeroBiasConstant
        );
        assert!(theoretical_scaling(2, 100.0, 1.0, 0.0, &square(), Scheme::Ol).is_err());
        assert!(theoretical_scaling(2, -1.0, 1.0, 1.0, &square(), Scheme::Ol).is_err());
    }

    #[test]
    fn recalibration_arithmetic() {
        assert_eq!(hj_recalibrate(3.0, 16.0, 2), 6.0);
        assert_eq!(to_int(6.0, Some(13)), 6);
        assert_eq!(to_int(2.5, None), 3);
        assert_eq!(to_int(0.2, None), 1);
        assert_eq!(to_int(40.0, Some(13)), 13);
        assert_eq!(upper_clamp(14.0), 13);
        assert_eq!(upper_clamp(14.5), 14);
    }

    #[test]
    fn default_grid() {
        assert_eq!(default_candidates(7.0), vec![2.0, 3.0, 4.0, 5.0, 6.0]);
        assert!(default_candidates(2.0).is_empty());
    }
}
