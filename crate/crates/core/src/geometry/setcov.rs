//! Set covariance `g(x) = |R0 ∩ (x + R0)|` by grid quadrature, by exact row
//! chords, and the grid autocorrelation behind the numeric `K0`.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

use super::template::{Body, Template};

/// Default grid steps for the quadrature paths.
pub fn default_resolution(dim: usize) -> f64 {
    match dim {
        1 => 1.0 / 4096.0,
        2 => 1.0 / 512.0,
        _ => 1.0 / 96.0,
    }
}

/// Largest padded grid (in cells) the FFT path will allocate.
pub const GRID_BUDGET: usize = 1 << 24;

fn check_point(template: &Template, x: &[f64]) -> Result<()> {
    if x.len() != template.dim() {
        return Err(Error::DimensionMismatch {
            expected: template.dim(),
            got: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("lag has non-finite coordinates".into()));
    }
    Ok(())
}

fn cells_per_axis(resolution: f64) -> Result<usize> {
    if !(resolution.is_finite() && resolution > 0.0 && resolution <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "grid step must lie in (0, 1], got {resolution}"
        )));
    }
    Ok((1.0 / resolution).round().max(1.0) as usize)
}

/// `g(x)` by counting grid cells whose centres lie in both sets; exact product
/// formula for the hypercube.
pub fn set_covariance(template: &Template, x: &[f64], resolution: f64) -> Result<f64> {
    check_point(template, x)?;
    let n = cells_per_axis(resolution)?;
    if template.is_hypercube() {
        return Ok(x.iter().map(|v| (1.0 - v.abs()).max(0.0)).product());
    }
    let d = template.dim();
    if x.iter().map(|v| v * v).sum::<f64>().sqrt() > template.diameter() + 1e-12 {
        return Ok(0.0);
    }
    let h = 1.0 / n as f64;
    let total = n.pow(d as u32);
    let mut c = vec![0.0; d];
    let mut shifted = vec![0.0; d];
    let mut count = 0usize;
    for cell in 0..total {
        let mut rem = cell;
        for j in (0..d).rev() {
            c[j] = -0.5 + ((rem % n) as f64 + 0.5) * h;
            rem /= n;
        }
        if !template.contains_unchecked(&c) {
            continue;
        }
        for j in 0..d {
            shifted[j] = c[j] - x[j];
        }
        if template.contains_unchecked(&shifted) {
            count += 1;
        }
    }
    Ok(count as f64 * h.powi(d as i32))
}

/// `g(x)` integrated along rows parallel to the first axis: the overlap of the
/// two chords is exact, the remaining coordinates use the midpoint rule with
/// `rows` nodes per axis.
pub(crate) fn chord_set_covariance(template: &Template, x: &[f64], rows: usize) -> Result<f64> {
    check_point(template, x)?;
    if matches!(template.body(), Body::MembershipOnly) {
        return Err(Error::UnsupportedShape(format!("row chords for {template}")));
    }
    let d = template.dim();
    if d == 2 {
        return Ok(planar_rows(template, x, rows));
    }
    let m = d - 1;
    let h = 1.0 / rows as f64;
    let total = rows.pow(m as u32);
    let mut rest = vec![0.0; m];
    let mut moved = vec![0.0; m];
    let mut sum = 0.0;
    for cell in 0..total {
        let mut rem = cell;
        for j in (0..m).rev() {
            rest[j] = -0.5 + ((rem % rows) as f64 + 0.5) * h;
            rem /= rows;
        }
        let Some((a0, a1)) = template.chord(&rest) else {
            continue;
        };
        for j in 0..m {
            moved[j] = rest[j] - x[j + 1];
        }
        let Some((b0, b1)) = template.chord(&moved) else {
            continue;
        };
        let len = a1.min(b1 + x[0]) - a0.max(b0 + x[0]);
        if len > 0.0 {
            sum += len;
        }
    }
    Ok(sum * h.powi(m as i32))
}

/// Planar case: rows are restricted to the common `y` extent of both sets, so
/// the integrand has no jumps and the midpoint rule converges quadratically.
fn planar_rows(template: &Template, x: &[f64], rows: usize) -> f64 {
    let top = template.support(&[0.0, 1.0]);
    let bottom = -template.support(&[0.0, -1.0]);
    let lo = bottom.max(bottom + x[1]);
    let hi = top.min(top + x[1]);
    if hi <= lo {
        return 0.0;
    }
    let h = (hi - lo) / rows as f64;
    let mut sum = 0.0;
    for r in 0..rows {
        let y = lo + (r as f64 + 0.5) * h;
        let (Some((a0, a1)), Some((b0, b1))) = (template.chord(&[y]), template.chord(&[y - x[1]]))
        else {
            continue;
        };
        let len = a1.min(b1 + x[0]) - a0.max(b0 + x[0]);
        if len > 0.0 {
            sum += len;
        }
    }
    sum * h
}

/// Multi-dimensional FFT over a cube of side `m`, in place.
fn fft_nd(data: &mut [Complex<f64>], m: usize, d: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let fft = if inverse {
        planner.plan_fft_inverse(m)
    } else {
        planner.plan_fft_forward(m)
    };
    let mut line = vec![Complex::new(0.0, 0.0); m];
    let total = data.len();
    for axis in 0..d {
        let stride = m.pow((d - 1 - axis) as u32);
        let block = stride * m;
        for base in (0..total).step_by(block) {
            for off in 0..stride {
                let start = base + off;
                for (k, v) in line.iter_mut().enumerate() {
                    *v = data[start + k * stride];
                }
                fft.process(&mut line);
                for (k, v) in line.iter().enumerate() {
                    data[start + k * stride] = *v;
                }
            }
        }
    }
}

/// `sum_m c_m^2 / c_0^3` where `c_m` counts pairs of grid cells (step
/// `resolution`) inside the template at lag `m`. This is the cell-centre
/// quadrature of `∫ g^2 / |R0|^3`, evaluated for all lags at once.
pub(crate) fn grid_k0(template: &Template, resolution: f64) -> Result<f64> {
    let d = template.dim();
    let n = cells_per_axis(resolution)?;
    let m = 2 * n;
    let cells = m
        .checked_pow(d as u32)
        .filter(|&c| c <= GRID_BUDGET)
        .ok_or_else(|| {
            Error::QuadratureBudgetExceeded(format!(
                "grid of {m}^{d} cells exceeds the budget of {GRID_BUDGET}"
            ))
        })?;
    let h = 1.0 / n as f64;
    let mut data = vec![Complex::new(0.0, 0.0); cells];
    let mut c = vec![0.0; d];
    for cell in 0..n.pow(d as u32) {
        let mut rem = cell;
        let mut idx = 0;
        let mut stride = 1;
        for j in (0..d).rev() {
            let k = rem % n;
            rem /= n;
            c[j] = -0.5 + (k as f64 + 0.5) * h;
            idx += k * stride;
            stride *= m;
        }
        if template.contains_unchecked(&c) {
            data[idx].re = 1.0;
        }
    }
    fft_nd(&mut data, m, d, false);
    for v in data.iter_mut() {
        *v = Complex::new(v.norm_sqr(), 0.0);
    }
    fft_nd(&mut data, m, d, true);
    let scale = cells as f64;
    let c0 = (data[0].re / scale).round();
    if c0 <= 0.0 {
        return Err(Error::QuadratureBudgetExceeded(
            "grid too coarse to resolve the template".into(),
        ));
    }
    let sum_sq: f64 = data
        .iter()
        .map(|v| {
            let c = (v.re / scale).round();
            c * c
        })
        .sum();
    Ok(sum_sq / (c0 * c0 * c0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn lens(r: f64, t: f64) -> f64 {
        2.0 * r * r * (t / (2.0 * r)).acos() - t / 2.0 * (4.0 * r * r - t * t).sqrt()
    }

    #[test]
    fn hypercube_product_formula() {
        let sq = Template::hypercube(2).unwrap();
        assert_eq!(set_covariance(&sq, &[0.0, 0.0], 1.0 / 512.0).unwrap(), 1.0);
        assert_eq!(set_covariance(&sq, &[0.5, 0.0], 1.0 / 512.0).unwrap(), 0.5);
        assert_eq!(set_covariance(&sq, &[1.5, 0.0], 1.0 / 512.0).unwrap(), 0.0);
    }

    #[test]
    fn disk_lens_area() {
        let disk = Template::circle(0.5).unwrap();
        let exact = lens(0.5, 0.5);
        assert!((exact - 0.307092).abs() < 1e-6);
        let grid = set_covariance(&disk, &[0.5, 0.0], 1.0 / 512.0).unwrap();
        assert!((grid - exact).abs() < 1e-3, "{grid} vs {exact}");
        let rows = chord_set_covariance(&disk, &[0.3, 0.4], 1 << 14).unwrap();
        assert!((rows - exact).abs() < 1e-6, "{rows} vs {exact}");
        let g0 = set_covariance(&disk, &[0.0, 0.0], 1.0 / 512.0).unwrap();
        assert!((g0 - PI / 4.0).abs() < 1e-3);
    }

    #[test]
    fn grid_k0_of_square_and_disk() {
        let sq = Template::hypercube(2).unwrap();
        let k0 = grid_k0(&sq, 1.0 / 512.0).unwrap();
        assert!((k0 - 4.0 / 9.0).abs() < 1e-5, "{k0}");
        let disk = Template::circle(0.5).unwrap();
        let k0 = grid_k0(&disk, 1.0 / 512.0).unwrap();
        let exact = 1.0 - 16.0 / (3.0 * PI * PI);
        assert!((k0 - exact).abs() < 1e-3, "{k0} vs {exact}");
    }

    #[test]
    fn budget_is_enforced() {
        let sq = Template::hypercube(3).unwrap();
        assert!(matches!(
            grid_k0(&sq, 1.0 / 1024.0),
            Err(Error::QuadratureBudgetExceeded(_))
        ));
    }

    #[test]
    fn bad_resolution() {
        let sq = Template::hypercube(2).unwrap();
        assert!(set_covariance(&sq, &[0.0, 0.0], 0.0).is_err());
        assert!(set_covariance(&sq, &[0.0], 0.1).is_err());
    }
}
