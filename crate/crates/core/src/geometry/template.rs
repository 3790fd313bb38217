//! Template shapes `R0` living inside the half-open unit cube.
//!
//! Every registered shape is convex and is stored internally as one of three
//! bodies: an intersection of half-spaces (each face either closed or open),
//! a closed ball, or a closed upright cylinder. Membership, support values and
//! line chords are answered from that body, so the containment tests used for
//! subsample enumeration never have to sample points.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Absolute slack used when comparing template coordinates against faces.
pub(crate) const MEMBERSHIP_EPS: f64 = 1e-9;

/// The registered shape families and their parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// `(-1/2, 1/2]^d`.
    Hypercube { dim: usize },
    /// The unit square mapped by side lengths `l1`, `l2` and rotation `theta`.
    RotatedRectangle { theta: f64, l1: f64, l2: f64 },
    /// Closed disk of radius `r` centred at the origin.
    Circle { r: f64 },
    /// Vertices `(-1/2,-1/2)`, `(1/2,-1/2)`, `(-1/2,1/2)`.
    RightTriangle,
    /// Base 1 on `y = -1/2`, apex at `(0, 1/2)`.
    IsoscelesTriangle,
    /// Right trapezoid with horizontal parallel sides `b1 <= b2`, height `height`.
    Trapezoid { b1: f64, b2: f64, height: f64 },
    /// Regular hexagon with side `side`, vertices at `(±side, 0)`.
    Hexagon { side: f64 },
    /// Sides `(l1, 0)` and `l2 (cos gamma, sin gamma)`, centred at the origin.
    Parallelogram { gamma: f64, l1: f64, l2: f64 },
    /// Closed ball of radius `r` in three dimensions.
    Sphere { r: f64 },
    /// Closed cylinder with circular base of radius `r` in the x-y plane and height `h`.
    Cylinder { r: f64, h: f64 },
    /// Image of a planar template under an invertible linear map (row-major 2x2).
    Affine { base: Box<Template>, matrix: [f64; 4] },
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct HalfSpace {
    /// Unit outward normal.
    pub normal: Vec<f64>,
    pub offset: f64,
    pub closed: bool,
}

impl HalfSpace {
    fn new(normal: Vec<f64>, offset: f64, closed: bool) -> Self {
        let norm = normal.iter().map(|a| a * a).sum::<f64>().sqrt();
        HalfSpace {
            normal: normal.iter().map(|a| a / norm).collect(),
            offset: offset / norm,
            closed,
        }
    }

    #[inline]
    pub fn admits(&self, p: &[f64]) -> bool {
        let v = dot(&self.normal, p) - self.offset;
        if self.closed {
            v <= MEMBERSHIP_EPS
        } else {
            v < -MEMBERSHIP_EPS
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Polytope {
    pub faces: Vec<HalfSpace>,
    /// Vertices of the closure.
    pub vertices: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Body {
    Polytope(Polytope),
    Ball { r: f64 },
    Cylinder { r: f64, h: f64 },
    /// Affine image of a curved body; only membership is available.
    MembershipOnly,
}

/// A validated template `R0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    shape: Shape,
    dim: usize,
    body: Body,
    volume: f64,
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

/// Convex polygon from counter-clockwise vertices. Faces whose outward normal
/// has a negative first nonzero component are open, matching `(-1/2, 1/2]^2`.
fn polygon(vertices: Vec<[f64; 2]>, all_closed: bool) -> Polytope {
    let n = vertices.len();
    let mut faces = Vec::with_capacity(n);
    for i in 0..n {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        let normal = [b[1] - a[1], a[0] - b[0]];
        let offset = normal[0] * a[0] + normal[1] * a[1];
        let lead = if normal[0].abs() > 1e-12 { normal[0] } else { normal[1] };
        faces.push(HalfSpace::new(
            normal.to_vec(),
            offset,
            all_closed || lead > 0.0,
        ));
    }
    Polytope {
        faces,
        vertices: vertices.iter().map(|v| v.to_vec()).collect(),
    }
}

/// Image `M (-1/2, 1/2]^2` of the half-open square under a 2x2 matrix; the
/// boundary convention is inherited through the preimage.
fn square_image(m: [f64; 4]) -> Result<Polytope> {
    let det = m[0] * m[3] - m[1] * m[2];
    if det.abs() < 1e-14 {
        return Err(invalid("degenerate linear map"));
    }
    // Rows of M^{-1}.
    let rows = [[m[3] / det, -m[1] / det], [-m[2] / det, m[0] / det]];
    let mut faces = Vec::with_capacity(4);
    for r in rows {
        faces.push(HalfSpace::new(r.to_vec(), 0.5, true));
        faces.push(HalfSpace::new(vec![-r[0], -r[1]], 0.5, false));
    }
    let vertices = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]
        .iter()
        .map(|&(a, b)| vec![m[0] * a + m[1] * b, m[2] * a + m[3] * b])
        .collect();
    Ok(Polytope { faces, vertices })
}

fn hypercube_body(dim: usize) -> Polytope {
    let mut faces = Vec::with_capacity(2 * dim);
    for j in 0..dim {
        let mut e = vec![0.0; dim];
        e[j] = 1.0;
        faces.push(HalfSpace::new(e.clone(), 0.5, true));
        e[j] = -1.0;
        faces.push(HalfSpace::new(e, 0.5, false));
    }
    let vertices = (0..1usize << dim)
        .map(|mask| {
            (0..dim)
                .map(|j| if mask >> j & 1 == 1 { 0.5 } else { -0.5 })
                .collect()
        })
        .collect();
    Polytope { faces, vertices }
}

impl Template {
    pub fn new(shape: Shape) -> Result<Self> {
        let (dim, body, volume) = match &shape {
            Shape::Hypercube { dim } => {
                if *dim == 0 || *dim > 12 {
                    return Err(invalid(format!("hypercube dimension {dim} outside 1..=12")));
                }
                (*dim, Body::Polytope(hypercube_body(*dim)), 1.0)
            }
            Shape::RotatedRectangle { theta, l1, l2 } => {
                if !(0.0..=PI).contains(theta) {
                    return Err(invalid("rotated rectangle needs theta in [0, pi]"));
                }
                if !(*l1 > 0.0 && *l2 > 0.0) {
                    return Err(invalid("rotated rectangle needs l1, l2 > 0"));
                }
                let (s, c) = theta.sin_cos();
                let body = square_image([l1 * c, l2 * s, -l1 * s, l2 * c])?;
                (2, Body::Polytope(body), l1 * l2)
            }
            Shape::Circle { r } => {
                if !(*r > 0.0 && *r <= 0.5) {
                    return Err(invalid("circle needs 0 < r <= 1/2"));
                }
                (2, Body::Ball { r: *r }, PI * r * r)
            }
            Shape::RightTriangle => (
                2,
                Body::Polytope(polygon(
                    vec![[-0.5, -0.5], [0.5, -0.5], [-0.5, 0.5]],
                    false,
                )),
                0.5,
            ),
            Shape::IsoscelesTriangle => (
                2,
                Body::Polytope(polygon(vec![[-0.5, -0.5], [0.5, -0.5], [0.0, 0.5]], false)),
                0.5,
            ),
            Shape::Trapezoid { b1, b2, height } => {
                if !(*b1 > 0.0 && b2 >= b1 && *b2 <= 1.0) {
                    return Err(invalid("trapezoid needs 0 < b1 <= b2 <= 1"));
                }
                if !(*height > 0.0 && *height <= 1.0) {
                    return Err(invalid("trapezoid needs 0 < h <= 1"));
                }
                let (x0, y0) = (-b2 / 2.0, -height / 2.0);
                let body = polygon(
                    vec![
                        [x0, y0],
                        [b2 / 2.0, y0],
                        [x0 + b1, -y0],
                        [x0, -y0],
                    ],
                    false,
                );
                (2, Body::Polytope(body), (b1 + b2) * height / 2.0)
            }
            Shape::Hexagon { side } => {
                if !(*side > 0.0 && *side <= 0.5) {
                    return Err(invalid("hexagon needs 0 < l <= 1/2"));
                }
                let h = side * 3f64.sqrt() / 2.0;
                let verts = vec![
                    [*side, 0.0],
                    [side / 2.0, h],
                    [-side / 2.0, h],
                    [-side, 0.0],
                    [-side / 2.0, -h],
                    [side / 2.0, -h],
                ];
                (
                    2,
                    Body::Polytope(polygon(verts, true)),
                    1.5 * 3f64.sqrt() * side * side,
                )
            }
            Shape::Parallelogram { gamma, l1, l2 } => {
                if !(*gamma > 0.0 && *gamma < PI) {
                    return Err(invalid("parallelogram needs gamma in (0, pi)"));
                }
                if !(*l1 > 0.0 && *l2 > 0.0) {
                    return Err(invalid("parallelogram needs l1, l2 > 0"));
                }
                let (s, c) = gamma.sin_cos();
                let body = square_image([*l1, l2 * c, 0.0, l2 * s])?;
                (2, Body::Polytope(body), l1 * l2 * s)
            }
            Shape::Sphere { r } => {
                if !(*r > 0.0 && *r <= 0.5) {
                    return Err(invalid("sphere needs 0 < r <= 1/2"));
                }
                (3, Body::Ball { r: *r }, 4.0 / 3.0 * PI * r.powi(3))
            }
            Shape::Cylinder { r, h } => {
                if !(*r > 0.0 && *r <= 0.5 && *h > 0.0 && *h <= 1.0) {
                    return Err(invalid("cylinder needs 0 < r <= 1/2 and 0 < h <= 1"));
                }
                (3, Body::Cylinder { r: *r, h: *h }, PI * r * r * h)
            }
            Shape::Affine { base, matrix } => {
                if base.dim != 2 {
                    return Err(invalid("affine images are supported for planar templates"));
                }
                let m = *matrix;
                let det = m[0] * m[3] - m[1] * m[2];
                if det.abs() < 1e-14 {
                    return Err(invalid("degenerate linear map"));
                }
                let body = match &base.body {
                    Body::Polytope(p) => {
                        // Faces transform with the inverse transpose.
                        let inv_t = [m[3] / det, -m[2] / det, -m[1] / det, m[0] / det];
                        let faces = p
                            .faces
                            .iter()
                            .map(|f| {
                                let n = &f.normal;
                                HalfSpace::new(
                                    vec![
                                        inv_t[0] * n[0] + inv_t[1] * n[1],
                                        inv_t[2] * n[0] + inv_t[3] * n[1],
                                    ],
                                    f.offset,
                                    f.closed,
                                )
                            })
                            .collect();
                        let vertices = p
                            .vertices
                            .iter()
                            .map(|v| vec![m[0] * v[0] + m[1] * v[1], m[2] * v[0] + m[3] * v[1]])
                            .collect();
                        Body::Polytope(Polytope { faces, vertices })
                    }
                    _ => Body::MembershipOnly,
                };
                (2, body, det.abs() * base.volume)
            }
        };
        let t = Template {
            shape,
            dim,
            body,
            volume,
        };
        t.check_placement()?;
        Ok(t)
    }

    pub fn hypercube(dim: usize) -> Result<Self> {
        Self::new(Shape::Hypercube { dim })
    }

    pub fn circle(r: f64) -> Result<Self> {
        Self::new(Shape::Circle { r })
    }

    /// The rotated square with vertices on the axes, `theta = pi/4`, `l = 1/sqrt 2`.
    pub fn diamond() -> Self {
        Self::new(Shape::RotatedRectangle {
            theta: FRAC_PI_4,
            l1: FRAC_1_SQRT_2,
            l2: FRAC_1_SQRT_2,
        })
        .expect("diamond parameters are valid")
    }

    /// Image of this planar template under `matrix` (row-major). The result
    /// must still fit inside the unit cube.
    pub fn affine_image(&self, matrix: [f64; 4]) -> Result<Self> {
        Self::new(Shape::Affine {
            base: Box::new(self.clone()),
            matrix,
        })
    }

    fn check_placement(&self) -> Result<()> {
        for j in 0..self.dim {
            let mut e = vec![0.0; self.dim];
            e[j] = 1.0;
            let hi = self.support(&e);
            e[j] = -1.0;
            let lo = self.support(&e);
            if hi > 0.5 + 1e-12 || lo > 0.5 + 1e-12 {
                return Err(invalid("template does not fit inside the unit cube"));
            }
        }
        if !self.closure_contains(&vec![0.0; self.dim]) {
            return Err(invalid("template must contain the origin"));
        }
        Ok(())
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Lebesgue volume `|R0|`.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub(crate) fn body(&self) -> &Body {
        &self.body
    }

    pub fn is_hypercube(&self) -> bool {
        matches!(self.shape, Shape::Hypercube { .. })
    }

    /// Membership under the shape's boundary rule.
    pub fn contains(&self, point: &[f64]) -> Result<bool> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: point.len(),
            });
        }
        if point.iter().any(|x| !x.is_finite()) {
            return Err(invalid("point has non-finite coordinates"));
        }
        Ok(self.contains_unchecked(point))
    }

    #[inline]
    pub(crate) fn contains_unchecked(&self, p: &[f64]) -> bool {
        match &self.body {
            Body::Polytope(poly) => poly.faces.iter().all(|f| f.admits(p)),
            Body::Ball { r } => {
                p.iter().map(|x| x * x).sum::<f64>() <= r * r + MEMBERSHIP_EPS
            }
            Body::Cylinder { r, h } => {
                p[0] * p[0] + p[1] * p[1] <= r * r + MEMBERSHIP_EPS
                    && p[2].abs() <= h / 2.0 + MEMBERSHIP_EPS
            }
            Body::MembershipOnly => {
                let Shape::Affine { base, matrix: m } = &self.shape else {
                    unreachable!()
                };
                let det = m[0] * m[3] - m[1] * m[2];
                let q = [
                    (m[3] * p[0] - m[1] * p[1]) / det,
                    (-m[2] * p[0] + m[0] * p[1]) / det,
                ];
                base.contains_unchecked(&q)
            }
        }
    }

    /// Membership in the closure.
    pub(crate) fn closure_contains(&self, p: &[f64]) -> bool {
        match &self.body {
            Body::Polytope(poly) => poly
                .faces
                .iter()
                .all(|f| dot(&f.normal, p) - f.offset <= MEMBERSHIP_EPS),
            _ => self.contains_unchecked(p),
        }
    }

    /// Support function `sup { u . x : x in closure(R0) }`.
    pub(crate) fn support(&self, u: &[f64]) -> f64 {
        match &self.body {
            Body::Polytope(poly) => poly
                .vertices
                .iter()
                .map(|v| dot(u, v))
                .fold(f64::NEG_INFINITY, f64::max),
            Body::Ball { r } => r * dot(u, u).sqrt(),
            Body::Cylinder { r, h } => r * u[0].hypot(u[1]) + h / 2.0 * u[2].abs(),
            Body::MembershipOnly => {
                let Shape::Affine { base, matrix: m } = &self.shape else {
                    unreachable!()
                };
                // sup over M B of u.x = sup over B of (M^T u).y
                base.support(&[m[0] * u[0] + m[2] * u[1], m[1] * u[0] + m[3] * u[1]])
            }
        }
    }

    /// Interval of the first coordinate `x0` such that `(x0, rest)` lies in
    /// the closure, or `None` when the line misses the body.
    pub(crate) fn chord(&self, rest: &[f64]) -> Option<(f64, f64)> {
        match &self.body {
            Body::Polytope(poly) => {
                let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
                for f in &poly.faces {
                    let a0 = f.normal[0];
                    let rhs = f.offset - dot(&f.normal[1..], rest);
                    if a0.abs() < 1e-15 {
                        if rhs < 0.0 {
                            return None;
                        }
                    } else if a0 > 0.0 {
                        hi = hi.min(rhs / a0);
                    } else {
                        lo = lo.max(rhs / a0);
                    }
                }
                (lo < hi).then_some((lo, hi))
            }
            Body::Ball { r } => {
                let w = r * r - dot(rest, rest);
                (w > 0.0).then(|| (-w.sqrt(), w.sqrt()))
            }
            Body::Cylinder { r, h } => {
                let w = r * r - rest[0] * rest[0];
                (w > 0.0 && rest[1].abs() <= h / 2.0).then(|| (-w.sqrt(), w.sqrt()))
            }
            Body::MembershipOnly => None,
        }
    }

    /// Largest Euclidean diameter bound of the closure (used to bound lag supports).
    pub fn diameter(&self) -> f64 {
        match &self.body {
            Body::Polytope(poly) => {
                let mut best: f64 = 0.0;
                for a in &poly.vertices {
                    for b in &poly.vertices {
                        let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                        best = best.max(d2.sqrt());
                    }
                }
                best
            }
            Body::Ball { r } => 2.0 * r,
            Body::Cylinder { r, h } => (4.0 * r * r + h * h).sqrt(),
            Body::MembershipOnly => (self.dim as f64).sqrt(),
        }
    }
}

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.shape {
            Shape::Hypercube { dim } => write!(f, "hypercube:d={dim}"),
            Shape::RotatedRectangle { theta, l1, l2 } => write!(
                f,
                "rotrect:theta={},l1={},l2={}",
                fmt_num(*theta),
                fmt_num(*l1),
                fmt_num(*l2)
            ),
            Shape::Circle { r } => write!(f, "circle:r={}", fmt_num(*r)),
            Shape::RightTriangle => write!(f, "rtriangle"),
            Shape::IsoscelesTriangle => write!(f, "itriangle"),
            Shape::Trapezoid { b1, b2, height } => write!(
                f,
                "trapezoid:b1={},b2={},h={}",
                fmt_num(*b1),
                fmt_num(*b2),
                fmt_num(*height)
            ),
            Shape::Hexagon { side } => write!(f, "hex:l={}", fmt_num(*side)),
            Shape::Parallelogram { gamma, l1, l2 } => write!(
                f,
                "parallelogram:gamma={},l1={},l2={}",
                fmt_num(*gamma),
                fmt_num(*l1),
                fmt_num(*l2)
            ),
            Shape::Sphere { r } => write!(f, "sphere:r={}", fmt_num(*r)),
            Shape::Cylinder { r, h } => {
                write!(f, "cylinder:r={},h={}", fmt_num(*r), fmt_num(*h))
            }
            Shape::Affine { base, matrix } => write!(
                f,
                "affine({base};{},{},{},{})",
                matrix[0], matrix[1], matrix[2], matrix[3]
            ),
        }
    }
}

/// Parses `kind[:key=value,...]` into its kind and key-value pairs.
pub(crate) fn split_spec(spec: &str) -> Result<(String, Vec<(String, String)>)> {
    let spec = spec.trim();
    let (kind, rest) = match spec.split_once(':') {
        Some((k, r)) => (k, r),
        None => (spec, ""),
    };
    let mut params = Vec::new();
    for item in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::parse(spec, format!("expected key=value, got `{item}`")))?;
        params.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
    }
    Ok((kind.trim().to_ascii_lowercase(), params))
}

pub(crate) struct Params<'a> {
    spec: &'a str,
    items: Vec<(String, String)>,
    used: Vec<bool>,
}

impl<'a> Params<'a> {
    pub(crate) fn new(spec: &'a str, items: Vec<(String, String)>) -> Self {
        let used = vec![false; items.len()];
        Params { spec, items, used }
    }

    pub(crate) fn raw(&mut self, key: &str) -> Option<String> {
        let pos = self.items.iter().position(|(k, _)| k == key)?;
        self.used[pos] = true;
        Some(self.items[pos].1.clone())
    }

    pub(crate) fn num(&mut self, key: &str) -> Result<Option<f64>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<f64>()
                .map(Some)
                .map_err(|_| Error::parse(self.spec, format!("`{key}` is not a number: {v}"))),
        }
    }

    pub(crate) fn req(&mut self, key: &str) -> Result<f64> {
        self.num(key)?
            .ok_or_else(|| Error::parse(self.spec, format!("missing parameter `{key}`")))
    }

    pub(crate) fn finish(self) -> Result<()> {
        match self.used.iter().position(|u| !u) {
            Some(i) => Err(Error::parse(
                self.spec,
                format!("unknown parameter `{}`", self.items[i].0),
            )),
            None => Ok(()),
        }
    }
}

impl FromStr for Template {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let (kind, items) = split_spec(spec)?;
        let mut p = Params::new(spec, items);
        let shape = match kind.as_str() {
            "hypercube" | "cube" | "rect" => {
                let d = p.num("d")?.unwrap_or(2.0);
                if d.fract() != 0.0 || d < 1.0 {
                    return Err(Error::parse(spec, "d must be a positive integer"));
                }
                Shape::Hypercube { dim: d as usize }
            }
            "rotrect" => Shape::RotatedRectangle {
                theta: p.req("theta")?,
                l1: p.req("l1")?,
                l2: p.req("l2")?,
            },
            "diamond" => Shape::RotatedRectangle {
                theta: FRAC_PI_4,
                l1: FRAC_1_SQRT_2,
                l2: FRAC_1_SQRT_2,
            },
            "circle" => Shape::Circle {
                r: p.num("r")?.unwrap_or(0.5),
            },
            "rtriangle" | "right-triangle" => Shape::RightTriangle,
            "itriangle" | "isoceles-triangle" | "isosceles-triangle" => Shape::IsoscelesTriangle,
            "trapezoid" => Shape::Trapezoid {
                b1: p.req("b1")?,
                b2: p.req("b2")?,
                height: p.num("h")?.unwrap_or(1.0),
            },
            "hex" | "hexagon" => Shape::Hexagon {
                side: p.num("l")?.unwrap_or(0.5),
            },
            "parallelogram" => Shape::Parallelogram {
                gamma: p.req("gamma")?,
                l1: p.req("l1")?,
                l2: p.req("l2")?,
            },
            "sphere" => Shape::Sphere {
                r: p.num("r")?.unwrap_or(0.5),
            },
            "cylinder" => Shape::Cylinder {
                r: p.req("r")?,
                h: p.req("h")?,
            },
            other => return Err(Error::parse(spec, format!("unknown template kind `{other}`"))),
        };
        p.finish()?;
        Template::new(shape)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(spec: &str) -> Template {
        spec.parse().unwrap()
    }

    #[test]
    fn hypercube_is_half_open() {
        let sq = t("hypercube:d=2");
        assert!(sq.contains(&[0.5, 0.5]).unwrap());
        assert!(!sq.contains(&[-0.5, 0.0]).unwrap());
        assert!(sq.contains(&[-0.4999, 0.0]).unwrap());
    }

    #[test]
    fn circle_boundary_is_closed() {
        let c = t("circle:r=0.5");
        assert!(c.contains(&[0.5, 0.0]).unwrap());
        assert!(!c.contains(&[0.36, 0.36]).unwrap());
    }

    #[test]
    fn right_triangle_half_plane() {
        let tri = t("rtriangle");
        // x + y = 0.6 > 0 lies above the hypotenuse
        assert!(!tri.contains(&[0.3, 0.3]).unwrap());
        assert!(tri.contains(&[-0.3, 0.3]).unwrap());
        assert!(tri.contains(&[0.0, 0.0]).unwrap());
        assert!(!tri.contains(&[-0.5, 0.0]).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let err = t("hypercube:d=3").contains(&[0.0, 0.0]).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 3, got: 2 });
    }

    #[test]
    fn parameter_ranges_are_validated() {
        assert!("circle:r=0.6".parse::<Template>().is_err());
        assert!("hex:l=0.51".parse::<Template>().is_err());
        assert!("trapezoid:b1=0.5,b2=0.3".parse::<Template>().is_err());
        assert!("rotrect:theta=4,l1=0.5,l2=0.5".parse::<Template>().is_err());
        assert!("parallelogram:gamma=0,l1=0.5,l2=0.5".parse::<Template>().is_err());
        // rotated square too large to fit
        assert!("rotrect:theta=0.7854,l1=0.9,l2=0.9".parse::<Template>().is_err());
        assert!("circle:r=0.5,q=1".parse::<Template>().is_err());
        assert!("blob".parse::<Template>().is_err());
    }

    #[test]
    fn grammar_examples_parse() {
        for spec in [
            "hypercube:d=2",
            "circle:r=0.5",
            "rotrect:theta=0.7854,l1=0.7071,l2=0.7071",
            "hex:l=0.5",
            "trapezoid:b1=0.3,b2=0.6",
            "sphere:r=0.5",
            "cylinder:r=0.4,h=0.9",
            "parallelogram:gamma=1.2,l1=0.5,l2=0.5",
            "rtriangle",
            "itriangle",
            "diamond",
        ] {
            let tpl = t(spec);
            let again: Template = tpl.to_string().parse().unwrap();
            assert_eq!(again.shape(), tpl.shape(), "{spec}");
        }
    }

    #[test]
    fn volumes() {
        assert!((t("circle:r=0.5").volume() - PI / 4.0).abs() < 1e-15);
        assert!((t("sphere").volume() - PI / 6.0).abs() < 1e-15);
        assert!((t("diamond").volume() - 0.5).abs() < 1e-12);
        assert!((t("hex:l=0.5").volume() - 3.0 * 3f64.sqrt() / 8.0).abs() < 1e-15);
        assert!((t("trapezoid:b1=0.3,b2=0.6").volume() - 0.45).abs() < 1e-15);
    }

    #[test]
    fn chords_match_membership() {
        for spec in ["hex:l=0.5", "itriangle", "trapezoid:b1=0.3,b2=0.6", "diamond"] {
            let tpl = t(spec);
            let (lo, hi) = tpl.chord(&[0.1]).unwrap();
            assert!(tpl.closure_contains(&[lo + 1e-9, 0.1]));
            assert!(tpl.closure_contains(&[hi - 1e-9, 0.1]));
            assert!(!tpl.closure_contains(&[hi + 1e-6, 0.1]));
            assert!(!tpl.closure_contains(&[lo - 1e-6, 0.1]));
        }
    }

    #[test]
    fn affine_image_of_polygon() {
        let hex = t("hex:l=0.5");
        let (s, c) = 0.4f64.sin_cos();
        let m = [0.6 * c, -0.9 * s, 0.6 * s, 0.9 * c];
        let img = hex.affine_image(m).unwrap();
        assert!((img.volume() - hex.volume() * 0.54).abs() < 1e-12);
        assert!(matches!(img.body(), Body::Polytope(_)));
        // a vertex of the base maps to a vertex of the image
        let v = [m[0] * 0.5, m[2] * 0.5];
        assert!(img.closure_contains(&v));
    }
}
