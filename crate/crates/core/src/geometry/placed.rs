//! Templates placed in sampling space as `center + diag(scale) R0`, with the
//! exact convex containment test used by subsample enumeration.

use crate::error::{Error, Result};

use super::template::{dot, Body, Template};

#[derive(Debug, Clone)]
pub(crate) struct Placed<'a> {
    pub template: &'a Template,
    pub scale: Vec<f64>,
    pub center: Vec<f64>,
}

impl<'a> Placed<'a> {
    pub fn new(template: &'a Template, scale: Vec<f64>, center: Vec<f64>) -> Self {
        debug_assert_eq!(scale.len(), template.dim());
        debug_assert_eq!(center.len(), template.dim());
        Placed {
            template,
            scale,
            center,
        }
    }

    pub fn uniform(template: &'a Template, scale: f64, center: Vec<f64>) -> Self {
        let d = template.dim();
        Self::new(template, vec![scale; d], center)
    }

    fn dim(&self) -> usize {
        self.scale.len()
    }

    fn to_template(&self, p: &[f64], out: &mut [f64]) {
        for j in 0..p.len() {
            out[j] = (p[j] - self.center[j]) / self.scale[j];
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        let mut y = vec![0.0; p.len()];
        self.to_template(p, &mut y);
        self.template.contains_unchecked(&y)
    }

    pub fn support(&self, u: &[f64]) -> f64 {
        let su: Vec<f64> = u.iter().zip(&self.scale).map(|(a, s)| a * s).collect();
        dot(u, &self.center) + self.template.support(&su)
    }

    /// Inclusive extent of the closure along axis `j`.
    pub fn extent(&self, j: usize) -> (f64, f64) {
        let mut e = vec![0.0; self.dim()];
        e[j] = 1.0;
        let hi = self.support(&e);
        e[j] = -1.0;
        let lo = -self.support(&e);
        (lo, hi)
    }

    fn vertices(&self) -> Option<Vec<Vec<f64>>> {
        match self.template.body() {
            Body::Polytope(p) => Some(
                p.vertices
                    .iter()
                    .map(|v| {
                        v.iter()
                            .zip(self.scale.iter().zip(&self.center))
                            .map(|(x, (s, c))| c + s * x)
                            .collect()
                    })
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Whether the supremum of `u . x` over the closure is attained by a point
    /// of the set itself. Curved bodies are closed, so they always attain it.
    fn attains(&self, u: &[f64], tol: f64) -> bool {
        let Some(verts) = self.vertices() else {
            return true;
        };
        let vals: Vec<f64> = verts.iter().map(|v| dot(u, v)).collect();
        let best = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let face: Vec<&Vec<f64>> = verts
            .iter()
            .zip(&vals)
            .filter(|(_, &v)| v >= best - tol)
            .map(|(v, _)| v)
            .collect();
        if face.iter().any(|v| self.contains(v)) {
            return true;
        }
        let d = self.dim();
        let mut centroid = vec![0.0; d];
        for v in &face {
            for j in 0..d {
                centroid[j] += v[j] / face.len() as f64;
            }
        }
        self.contains(&centroid)
    }

    /// Maximum over the closure of `sum_j q_j x_{axes[j]}^2` (an axis-aligned
    /// quadratic centred at the origin).
    fn max_quadratic(&self, axes: &[usize], q: &[f64]) -> Result<f64> {
        if let Some(verts) = self.vertices() {
            return Ok(verts
                .iter()
                .map(|v| axes.iter().zip(q).map(|(&a, qa)| qa * v[a] * v[a]).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max));
        }
        let s = self.scale[0];
        match *self.template.body() {
            Body::Ball { r } => {
                let c: Vec<f64> = axes.iter().map(|&a| self.center[a]).collect();
                Ok(max_quadratic_on_ball(q, &c, s * r))
            }
            Body::Cylinder { r, h } => {
                let mut total = 0.0;
                let mut disk_q = Vec::new();
                let mut disk_c = Vec::new();
                for (&a, &qa) in axes.iter().zip(q) {
                    if a == 2 {
                        let z = self.center[2].abs() + s * h / 2.0;
                        total += qa * z * z;
                    } else {
                        disk_q.push(qa);
                        disk_c.push(self.center[a]);
                    }
                }
                if !disk_q.is_empty() {
                    total += max_quadratic_on_ball(&disk_q, &disk_c, s * r);
                }
                Ok(total)
            }
            _ => Err(Error::UnsupportedShape(format!(
                "containment for {}",
                self.template
            ))),
        }
    }

    /// Exact test `self ⊂ outer` for convex bodies. Curved inner bodies must be
    /// uniformly scaled (true for every subsample placement).
    pub fn is_inside(&self, outer: &Placed<'_>) -> Result<bool> {
        let d = self.dim();
        match outer.template.body() {
            Body::Polytope(poly) => {
                for f in &poly.faces {
                    // Face a.y <= b in template coordinates becomes n.x <= off.
                    let n: Vec<f64> = f.normal.iter().zip(&outer.scale).map(|(a, s)| a / s).collect();
                    let norm = dot(&n, &n).sqrt();
                    let n: Vec<f64> = n.iter().map(|a| a / norm).collect();
                    let off = (f.offset + dot(&n, &outer.center) * norm) / norm;
                    let tol = 1e-9 * off.abs().max(1.0);
                    let gap = self.support(&n) - off;
                    if gap > tol {
                        return Ok(false);
                    }
                    if gap >= -tol && !f.closed && self.attains(&n, tol) {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Body::Ball { r } => {
                let axes: Vec<usize> = (0..d).collect();
                let q: Vec<f64> = outer
                    .scale
                    .iter()
                    .map(|s| 1.0 / (s * r).powi(2))
                    .collect();
                let shifted = self.shifted(&outer.center);
                Ok(shifted.max_quadratic(&axes, &q)? <= 1.0 + 1e-9)
            }
            Body::Cylinder { r, h } => {
                let q = [
                    1.0 / (outer.scale[0] * r).powi(2),
                    1.0 / (outer.scale[1] * r).powi(2),
                ];
                let shifted = self.shifted(&outer.center);
                if shifted.max_quadratic(&[0, 1], &q)? > 1.0 + 1e-9 {
                    return Ok(false);
                }
                let (lo, hi) = shifted.extent(2);
                let half = outer.scale[2] * h / 2.0;
                let tol = 1e-9 * half.max(1.0);
                Ok(hi <= half + tol && lo >= -half - tol)
            }
            Body::MembershipOnly => Err(Error::UnsupportedShape(format!(
                "containment in {}",
                outer.template
            ))),
        }
    }

    fn shifted(&self, by: &[f64]) -> Placed<'a> {
        Placed {
            template: self.template,
            scale: self.scale.clone(),
            center: self.center.iter().zip(by).map(|(c, b)| c - b).collect(),
        }
    }

    /// Integer points `z` (lexicographic) with `shift + z` inside the body.
    pub fn lattice_points(&self, shift: &[f64]) -> Vec<i64> {
        let d = self.dim();
        let mut lo = vec![0i64; d];
        let mut hi = vec![0i64; d];
        for j in 0..d {
            let (a, b) = self.extent(j);
            lo[j] = (a - shift[j] - 1e-7).ceil() as i64;
            hi[j] = (b - shift[j] + 1e-7).floor() as i64;
            if hi[j] < lo[j] {
                return Vec::new();
            }
        }
        let mut out = Vec::new();
        let mut z = lo.clone();
        let mut p = vec![0.0; d];
        loop {
            for j in 0..d {
                p[j] = shift[j] + z[j] as f64;
            }
            if self.contains(&p) {
                out.extend_from_slice(&z);
            }
            // odometer, last axis fastest
            let mut j = d;
            loop {
                if j == 0 {
                    return out;
                }
                j -= 1;
                if z[j] < hi[j] {
                    z[j] += 1;
                    break;
                }
                z[j] = lo[j];
            }
        }
    }
}

/// `max_{|u| <= 1} sum_i q_i (c_i + rho u_i)^2` for `q_i > 0`.
pub(crate) fn max_quadratic_on_ball(q: &[f64], c: &[f64], rho: f64) -> f64 {
    let value = |u: &[f64]| -> f64 {
        q.iter()
            .zip(c)
            .zip(u)
            .map(|((qi, ci), ui)| qi * (ci + rho * ui).powi(2))
            .sum()
    };
    let qmax = q.iter().cloned().fold(0.0, f64::max);
    let floor = rho * rho * qmax;
    // Stationary points satisfy (nu - rho^2 q_i) u_i = rho q_i c_i; the global
    // maximiser has nu >= rho^2 q_max.
    let w: Vec<f64> = q.iter().zip(c).map(|(qi, ci)| rho * qi * ci).collect();
    let norm_at = |nu: f64| -> f64 {
        w.iter()
            .zip(q)
            .map(|(wi, qi)| {
                let den = nu - rho * rho * qi;
                if wi.abs() == 0.0 {
                    0.0
                } else {
                    (wi / den).powi(2)
                }
            })
            .sum()
    };
    let top_tied = q
        .iter()
        .zip(&w)
        .any(|(qi, wi)| (qi - qmax).abs() <= 1e-14 * qmax && wi.abs() > 0.0);
    let hard_case = !top_tied && {
        let nu = floor * (1.0 + 1e-15) + f64::MIN_POSITIVE;
        norm_at(nu) <= 1.0
    };
    let mut best = f64::NEG_INFINITY;
    if hard_case {
        let nu = floor;
        let mut u = vec![0.0; q.len()];
        let mut used = 0.0;
        let mut top = None;
        for i in 0..q.len() {
            if (q[i] - qmax).abs() <= 1e-14 * qmax {
                top.get_or_insert(i);
            } else {
                u[i] = w[i] / (nu - rho * rho * q[i]);
                used += u[i] * u[i];
            }
        }
        if let Some(i) = top {
            u[i] = (1.0 - used).max(0.0).sqrt();
        }
        best = best.max(value(&u));
    } else {
        let mut lo = floor;
        let mut hi = floor + rho * w.iter().map(|x| x.abs()).sum::<f64>().max(1e-300) + 1.0;
        while norm_at(hi) > 1.0 {
            hi = floor + 2.0 * (hi - floor);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if norm_at(mid) > 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let u: Vec<f64> = w
            .iter()
            .zip(q)
            .map(|(wi, qi)| wi / (hi - rho * rho * qi))
            .collect();
        best = best.max(value(&u));
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_max_uniform_weights() {
        // q = 1: max |c + rho u|^2 = (|c| + rho)^2
        let v = max_quadratic_on_ball(&[1.0, 1.0], &[3.0, 4.0], 2.0);
        assert!((v - 49.0).abs() < 1e-9, "{v}");
        let v = max_quadratic_on_ball(&[1.0, 1.0], &[0.0, 0.0], 2.0);
        assert!((v - 4.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn quadratic_max_matches_dense_scan() {
        let cases = [
            ([1.0, 0.25], [0.0, 0.0], 1.0),
            ([1.0, 0.25], [0.3, 0.0], 1.0),
            ([0.2, 0.9], [1.0, -2.0], 0.7),
            ([0.5, 0.5], [0.0, 1.0], 3.0),
        ];
        for (q, c, rho) in cases {
            let mut scan = f64::NEG_INFINITY;
            for k in 0..200_000 {
                let t = k as f64 / 200_000.0 * std::f64::consts::TAU;
                let (s, co) = t.sin_cos();
                let v = q[0] * (c[0] + rho * co).powi(2) + q[1] * (c[1] + rho * s).powi(2);
                scan = scan.max(v);
            }
            let got = max_quadratic_on_ball(&q, &c, rho);
            assert!((got - scan).abs() < 1e-6 * scan.max(1.0), "{q:?} {c:?}: {got} vs {scan}");
        }
    }

    #[test]
    fn half_open_cube_containment() {
        let cube = Template::hypercube(2).unwrap();
        let region = Placed::new(&cube, vec![10.0, 10.0], vec![0.0, 0.0]);
        let sub = |i: f64, j: f64| Placed::uniform(&cube, 4.0, vec![i, j]);
        assert!(sub(3.0, -3.0).is_inside(&region).unwrap());
        assert!(!sub(4.0, 0.0).is_inside(&region).unwrap());
        assert!(!sub(-4.0, 0.0).is_inside(&region).unwrap());
        // equal sets are nested
        let same = Placed::uniform(&cube, 10.0, vec![0.0, 0.0]);
        assert!(same.is_inside(&region).unwrap());
        // closed disk touching an open face is not inside
        let disk = Template::circle(0.5).unwrap();
        let touching = Placed::uniform(&disk, 2.0, vec![-4.0, 0.0]);
        assert!(!touching.is_inside(&region).unwrap());
        let touching_closed = Placed::uniform(&disk, 2.0, vec![4.0, 0.0]);
        assert!(touching_closed.is_inside(&region).unwrap());
    }

    #[test]
    fn disk_in_disk() {
        let disk = Template::circle(0.5).unwrap();
        let region = Placed::uniform(&disk, 18.0, vec![0.0, 0.0]);
        assert!(Placed::uniform(&disk, 3.0, vec![7.0, 0.0]).is_inside(&region).unwrap());
        assert!(Placed::uniform(&disk, 3.0, vec![7.5, 0.0]).is_inside(&region).unwrap());
        assert!(!Placed::uniform(&disk, 3.0, vec![7.5, 0.1]).is_inside(&region).unwrap());
        assert!(Placed::uniform(&disk, 3.0, vec![5.0, 5.0]).is_inside(&region).unwrap());
    }

    #[test]
    fn lattice_points_of_small_disk() {
        let disk = Template::circle(0.5).unwrap();
        let p = Placed::uniform(&disk, 2.0, vec![0.0, 0.0]);
        let pts = p.lattice_points(&[0.0, 0.0]);
        assert_eq!(pts, vec![-1, 0, 0, -1, 0, 0, 0, 1, 1, 0]);
    }
}
