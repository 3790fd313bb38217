//! Exact simulation of stationary Gaussian fields on lattice windows.
//!
//! Every replicate draws from its own ChaCha20 stream, selected by
//! `(seed, replicate)`, so fields do not depend on scheduling. Normals come
//! from the inverse CDF, one uniform per normal.

use nalgebra::{DMatrix, DVector};
use rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::covariance::Covariogram;
use crate::error::{Error, Result};
use crate::estimators::FieldSample;
use crate::geometry::LatticeWindow;

/// Default largest window for the Cholesky path.
pub const DEFAULT_CHOLESKY_CAP: usize = 5000;

/// Random stream of one replicate.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    replicate: u64,
    rng: ChaCha20Rng,
    normal: Normal,
}

/// Stream for `replicate` under `master`; a pure function of both.
pub fn substream(master: u64, replicate: u64) -> RngStream {
    let mut rng = ChaCha20Rng::seed_from_u64(master);
    rng.set_stream(replicate);
    RngStream {
        seed: master,
        replicate,
        rng,
        normal: Normal::new(0.0, 1.0).expect("standard normal"),
    }
}

impl RngStream {
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn replicate(&self) -> u64 {
        self.replicate
    }

    /// Position in the stream, in 32-bit words.
    pub fn counter(&self) -> u128 {
        self.rng.get_word_pos()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on the open interval `(0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    pub fn standard_normal(&mut self) -> f64 {
        let u = self.uniform();
        self.normal.inverse_cdf(u)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.standard_normal();
        }
    }
}

/// Factorisation strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    /// Cholesky up to the site cap, circulant embedding beyond it.
    #[default]
    Auto,
    Cholesky,
    Circulant,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "auto" => Ok(Method::Auto),
            "cholesky" => Ok(Method::Cholesky),
            "circulant" => Ok(Method::Circulant),
            other => Err(Error::parse(s, format!("unknown simulation method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
enum Factor {
    Identity,
    Cholesky(DMatrix<f64>),
    Circulant(Circulant),
}

#[derive(Debug, Clone)]
struct Circulant {
    /// Embedding size per axis.
    sizes: Vec<usize>,
    /// Sites per axis of the window box.
    box_sides: Vec<usize>,
    /// `sqrt(λ / M)` per embedding cell.
    root: Vec<f64>,
}

/// Which path a generator ended up using.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorInfo {
    pub method: Method,
    pub fallback: Option<String>,
}

/// A factorised covariance over a fixed window.
#[derive(Debug, Clone)]
pub struct Generator {
    window: LatticeWindow,
    factor: Factor,
    info: GeneratorInfo,
}

/// Builds a generator with the default site cap.
pub fn build_generator(cov: &Covariogram, window: &LatticeWindow, method: Method) -> Result<Generator> {
    build_generator_capped(cov, window, method, DEFAULT_CHOLESKY_CAP)
}

pub fn build_generator_capped(
    cov: &Covariogram,
    window: &LatticeWindow,
    method: Method,
    cholesky_cap: usize,
) -> Result<Generator> {
    if window.is_empty() {
        return Err(Error::EmptyWindow);
    }
    if window.dim() != cov.dim() {
        return Err(Error::DimensionMismatch {
            expected: cov.dim(),
            got: window.dim(),
        });
    }
    let done = |factor, method, fallback| {
        Ok(Generator {
            window: window.clone(),
            factor,
            info: GeneratorInfo { method, fallback },
        })
    };
    if cov.is_white_noise() {
        return done(Factor::Identity, Method::Cholesky, None);
    }
    let use_circulant = match method {
        Method::Cholesky => false,
        Method::Circulant => true,
        Method::Auto => window.len() > cholesky_cap,
    };
    let mut fallback = None;
    if use_circulant {
        if !window.is_full_box() {
            fallback = Some("window is not a full rectangle".to_string());
        } else {
            match circulant(cov, window) {
                Ok(c) => return done(Factor::Circulant(c), Method::Circulant, None),
                Err(reason) => fallback = Some(reason),
            }
        }
        log::info!(
            "circulant embedding unavailable ({}); using Cholesky",
            fallback.as_deref().unwrap_or("")
        );
    }
    if window.len() > cholesky_cap {
        return Err(Error::WindowTooLarge {
            sites: window.len(),
            cap: cholesky_cap,
        });
    }
    let l = cholesky(cov, window)?;
    done(Factor::Cholesky(l), Method::Cholesky, fallback)
}

/// Site-pair covariance matrix in window order.
pub fn covariance_matrix(cov: &Covariogram, window: &LatticeWindow) -> DMatrix<f64> {
    let n = window.len();
    let d = window.dim();
    let mut lag = vec![0i64; d];
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let a = window.site(i);
        for j in 0..=i {
            let b = window.site(j);
            for k in 0..d {
                lag[k] = a[k] - b[k];
            }
            let s = cov.sigma_unchecked(&lag);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
    m
}

fn cholesky(cov: &Covariogram, window: &LatticeWindow) -> Result<DMatrix<f64>> {
    covariance_matrix(cov, window)
        .cholesky()
        .map(|c| c.l())
        .ok_or(Error::NotPositiveDefinite)
}

fn fft_axes(data: &mut [Complex<f64>], sizes: &[usize], inverse: bool) {
    let d = sizes.len();
    let total = data.len();
    let mut planner = FftPlanner::new();
    for axis in 0..d {
        let m = sizes[axis];
        if m == 1 {
            continue;
        }
        let fft = if inverse {
            planner.plan_fft_inverse(m)
        } else {
            planner.plan_fft_forward(m)
        };
        let stride: usize = sizes[axis + 1..].iter().product();
        let block = stride * m;
        let mut line = vec![Complex::new(0.0, 0.0); m];
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

/// Minimal embedding, doubled up to three times until the spectrum is
/// nonnegative.
fn circulant(cov: &Covariogram, window: &LatticeWindow) -> std::result::Result<Circulant, String> {
    let d = window.dim();
    let (lo, hi) = window.bounding_box();
    let box_sides: Vec<usize> = (0..d).map(|j| (hi[j] - lo[j] + 1) as usize).collect();
    let mut sizes: Vec<usize> = box_sides.iter().map(|&n| (2 * (n - 1)).max(1)).collect();
    for _ in 0..4 {
        let total: usize = sizes.iter().product();
        if total > crate::geometry::GRID_BUDGET {
            return Err("embedding exceeds the grid budget".into());
        }
        let mut data = vec![Complex::new(0.0, 0.0); total];
        let mut lag = vec![0i64; d];
        for (cell, v) in data.iter_mut().enumerate() {
            let mut rem = cell;
            for j in (0..d).rev() {
                let k = rem % sizes[j];
                rem /= sizes[j];
                lag[j] = if k <= sizes[j] / 2 {
                    k as i64
                } else {
                    k as i64 - sizes[j] as i64
                };
            }
            *v = Complex::new(cov.sigma_unchecked(&lag), 0.0);
        }
        fft_axes(&mut data, &sizes, false);
        let max = data.iter().map(|v| v.re).fold(f64::NEG_INFINITY, f64::max);
        let min = data.iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
        if min >= -1e-10 * max {
            let root = data
                .iter()
                .map(|v| (v.re.max(0.0) / total as f64).sqrt())
                .collect();
            return Ok(Circulant {
                sizes,
                box_sides,
                root,
            });
        }
        for s in sizes.iter_mut() {
            *s *= 2;
        }
    }
    Err("embedding is not nonnegative definite".into())
}

impl Generator {
    pub fn window(&self) -> &LatticeWindow {
        &self.window
    }

    pub fn info(&self) -> &GeneratorInfo {
        &self.info
    }

    /// Lower-triangular factor, when the Cholesky path is in use.
    pub fn cholesky_factor(&self) -> Option<&DMatrix<f64>> {
        match &self.factor {
            Factor::Cholesky(l) => Some(l),
            _ => None,
        }
    }

    /// One draw in window order.
    pub fn sample_values(&self, stream: &mut RngStream) -> Vec<f64> {
        let n = self.window.len();
        match &self.factor {
            Factor::Identity => {
                let mut z = vec![0.0; n];
                stream.fill_normal(&mut z);
                z
            }
            Factor::Cholesky(l) => {
                let mut z = vec![0.0; n];
                stream.fill_normal(&mut z);
                let z = DVector::from_vec(z);
                (l * z).data.into()
            }
            Factor::Circulant(c) => {
                let total = c.root.len();
                let mut data: Vec<Complex<f64>> = c
                    .root
                    .iter()
                    .map(|r| {
                        let a = stream.standard_normal();
                        let b = stream.standard_normal();
                        Complex::new(r * a, r * b)
                    })
                    .collect();
                fft_axes(&mut data, &c.sizes, false);
                debug_assert_eq!(data.len(), total);
                let d = c.sizes.len();
                let mut out = Vec::with_capacity(n);
                for site in 0..n {
                    let mut rem = site;
                    let mut idx = 0;
                    let mut stride = 1;
                    for j in (0..d).rev() {
                        let k = rem % c.box_sides[j];
                        rem /= c.box_sides[j];
                        idx += k * stride;
                        stride *= c.sizes[j];
                    }
                    out.push(data[idx].re);
                }
                out
            }
        }
    }
}

/// One mean-zero Gaussian field with the generator's covariance.
pub fn sample_field(gen: &Generator, stream: &mut RngStream) -> FieldSample {
    FieldSample::new(gen.window.clone(), 1, gen.sample_values(stream))
        .expect("generated values are finite")
}

/// Deterministic per-site maps from the scalar field to `p`-variate data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    /// `X`.
    Identity,
    /// `(X, X²)`, for the moment-variance statistic.
    Moments,
    /// `(a + X, b + X²)`, for ratio-of-means with a positive denominator mean.
    ShiftedMoments { a: f64, b: f64 },
}

impl Transform {
    pub fn arity(&self) -> usize {
        match self {
            Transform::Identity => 1,
            _ => 2,
        }
    }

    pub fn apply_value(&self, x: f64, out: &mut Vec<f64>) {
        match *self {
            Transform::Identity => out.push(x),
            Transform::Moments => {
                out.push(x);
                out.push(x * x);
            }
            Transform::ShiftedMoments { a, b } => {
                out.push(a + x);
                out.push(b + x * x);
            }
        }
    }

    pub fn apply(&self, scalar: &FieldSample) -> Result<FieldSample> {
        if scalar.arity() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: scalar.arity(),
            });
        }
        let mut values = Vec::with_capacity(scalar.values().len() * self.arity());
        for &x in scalar.values() {
            self.apply_value(x, &mut values);
        }
        FieldSample::new(scalar.window().clone(), self.arity(), values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{lattice_sites, Region, Template};

    fn rect(a: f64, b: f64) -> LatticeWindow {
        let r = Region::unshifted(Template::hypercube(2).unwrap(), vec![a, b]).unwrap();
        lattice_sites(&r).unwrap()
    }

    #[test]
    fn substreams_differ_and_repeat() {
        let mut a = substream(7, 0);
        let mut b = substream(7, 1);
        let xs: Vec<u64> = (0..64).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..64).map(|_| b.next_u64()).collect();
        assert_ne!(xs, ys);
        let mut again = substream(7, 0);
        let zs: Vec<u64> = (0..64).map(|_| again.next_u64()).collect();
        assert_eq!(xs, zs);
        assert_eq!(again.counter(), 128);
    }

    #[test]
    fn white_noise_uses_identity() {
        let w = rect(4.0, 4.0);
        let g = build_generator(&"white".parse().unwrap(), &w, Method::Auto).unwrap();
        assert!(g.cholesky_factor().is_none());
        let mut s = substream(1, 0);
        let direct: Vec<f64> = (0..16).map(|_| s.standard_normal()).collect();
        assert_eq!(g.sample_values(&mut substream(1, 0)), direct);
    }

    #[test]
    fn cholesky_reconstructs_covariance() {
        let w = rect(6.0, 7.0);
        let cov: Covariogram = "expsep:b1=1,b2=1".parse().unwrap();
        let g = build_generator(&cov, &w, Method::Cholesky).unwrap();
        let l = g.cholesky_factor().unwrap();
        let c = covariance_matrix(&cov, &w);
        let err = (l * l.transpose() - &c).norm() / c.norm();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn circulant_covariance_is_exact() {
        // Cov(X_u, X_v) = Σ_k root_k² cos(2π k·(u - v) / m)
        let w = rect(9.0, 7.0);
        let cov: Covariogram = "gausssep:b1=0.5,b2=0.3".parse().unwrap();
        let g = build_generator(&cov, &w, Method::Circulant).unwrap();
        let Factor::Circulant(c) = &g.factor else {
            panic!("expected the circulant path")
        };
        let mut data: Vec<Complex<f64>> = c.root.iter().map(|r| Complex::new(r * r, 0.0)).collect();
        fft_axes(&mut data, &c.sizes, false);
        for k0 in 0..c.box_sides[0] {
            for k1 in 0..c.box_sides[1] {
                let got = data[k0 * c.sizes[1] + k1].re;
                let want = cov.sigma(&[k0 as i64, k1 as i64]).unwrap();
                assert!((got - want).abs() < 1e-12, "lag ({k0},{k1}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn cap_and_fallback() {
        let w = rect(10.0, 10.0);
        let cov: Covariogram = "gausssep:b1=0.5,b2=0.3".parse().unwrap();
        assert_eq!(
            build_generator_capped(&cov, &w, Method::Cholesky, 50).unwrap_err(),
            Error::WindowTooLarge { sites: 100, cap: 50 }
        );
        let g = build_generator_capped(&cov, &w, Method::Auto, 50).unwrap();
        assert_eq!(g.info().method, Method::Circulant);
        let disk = lattice_sites(&Region::unshifted("circle".parse().unwrap(), vec![8.0, 8.0]).unwrap())
            .unwrap();
        let g = build_generator(&cov, &disk, Method::Circulant).unwrap();
        assert_eq!(g.info().method, Method::Cholesky);
        assert!(g.info().fallback.is_some());
    }

    #[test]
    fn tables_that_are_not_positive_definite() {
        let cov = Covariogram::tabulated(
            1,
            vec![(vec![0], 1.0), (vec![1], 0.9), (vec![-1], 0.9)],
            "inline",
        )
        .unwrap();
        let w = LatticeWindow::from_sites(1, (0..6).collect()).unwrap();
        assert_eq!(
            build_generator(&cov, &w, Method::Cholesky).unwrap_err(),
            Error::NotPositiveDefinite
        );
    }

    #[test]
    fn transforms() {
        let w = LatticeWindow::from_sites(1, vec![0, 1]).unwrap();
        let s = FieldSample::new(w, 1, vec![2.0, -1.0]).unwrap();
        let m = Transform::Moments.apply(&s).unwrap();
        assert_eq!(m.values(), &[2.0, 4.0, -1.0, 1.0]);
        let r = Transform::ShiftedMoments { a: 1.0, b: 3.0 }.apply(&s).unwrap();
        assert_eq!(r.values(), &[3.0, 7.0, 0.0, 4.0]);
        assert!(Transform::Moments.apply(&m).is_err());
    }
}
