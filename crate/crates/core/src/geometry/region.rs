use std::fmt;

use crate::error::{Error, Result};

use super::placed::Placed;
use super::template::Template;

/// Sampling region `Δ R0` observed on the shifted lattice `t + Z^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    template: Template,
    scaling: Vec<f64>,
    shift: Vec<f64>,
}

impl Region {
    pub fn new(template: Template, scaling: Vec<f64>, shift: Vec<f64>) -> Result<Self> {
        let d = template.dim();
        if scaling.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: scaling.len(),
            });
        }
        if shift.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: shift.len(),
            });
        }
        if scaling.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::InvalidParameter(
                "region scaling factors must be positive".into(),
            ));
        }
        if shift.iter().any(|t| !(-0.5..=0.5).contains(t)) {
            return Err(Error::InvalidParameter(
                "lattice shift must lie in [-1/2, 1/2]^d".into(),
            ));
        }
        Ok(Region {
            template,
            scaling,
            shift,
        })
    }

    /// Region on the unshifted lattice `Z^d`.
    pub fn unshifted(template: Template, scaling: Vec<f64>) -> Result<Self> {
        let d = template.dim();
        Self::new(template, scaling, vec![0.0; d])
    }

    pub fn template(&self) -> &Template {
        &self.template
    }

    pub fn scaling(&self) -> &[f64] {
        &self.scaling
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    pub fn dim(&self) -> usize {
        self.template.dim()
    }

    /// `det(Δ)`.
    pub fn det(&self) -> f64 {
        self.scaling.iter().product()
    }

    /// Lebesgue volume `|R_n| = det(Δ) |R0|`.
    pub fn volume(&self) -> f64 {
        self.det() * self.template.volume()
    }

    pub fn min_scale(&self) -> f64 {
        self.scaling.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub(crate) fn placed(&self) -> Placed<'_> {
        Placed::new(
            &self.template,
            self.scaling.clone(),
            vec![0.0; self.dim()],
        )
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let scales: Vec<String> = self.scaling.iter().map(|s| format!("{s}")).collect();
        write!(f, "{}@{}", self.template, scales.join("x"))
    }
}

/// Lexicographically ordered integer sites of a window, with a dense lookup
/// table over the bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeWindow {
    dim: usize,
    coords: Vec<i64>,
    lo: Vec<i64>,
    hi: Vec<i64>,
    lookup: Vec<u32>,
}

const ABSENT: u32 = u32::MAX;

impl LatticeWindow {
    /// Builds a window from flat coordinates; sites are sorted and must be distinct.
    pub fn from_sites(dim: usize, mut coords: Vec<i64>) -> Result<Self> {
        if dim == 0 || !coords.len().is_multiple_of(dim) {
            return Err(Error::InvalidParameter(
                "site coordinates do not match the dimension".into(),
            ));
        }
        if coords.is_empty() {
            return Err(Error::EmptyWindow);
        }
        let n = coords.len() / dim;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| coords[a * dim..(a + 1) * dim].cmp(&coords[b * dim..(b + 1) * dim]));
        let sorted: Vec<i64> = order
            .iter()
            .flat_map(|&i| coords[i * dim..(i + 1) * dim].iter().copied())
            .collect();
        coords = sorted;
        for i in 1..n {
            if coords[(i - 1) * dim..i * dim] == coords[i * dim..(i + 1) * dim] {
                return Err(Error::InvalidParameter(format!(
                    "duplicate site {:?}",
                    &coords[i * dim..(i + 1) * dim]
                )));
            }
        }
        let mut lo = vec![i64::MAX; dim];
        let mut hi = vec![i64::MIN; dim];
        for s in coords.chunks(dim) {
            for j in 0..dim {
                lo[j] = lo[j].min(s[j]);
                hi[j] = hi[j].max(s[j]);
            }
        }
        let cells: usize = (0..dim).map(|j| (hi[j] - lo[j] + 1) as usize).product();
        let mut w = LatticeWindow {
            dim,
            coords,
            lo,
            hi,
            lookup: vec![ABSENT; cells],
        };
        for i in 0..n {
            let cell = w.cell(&w.coords[i * dim..(i + 1) * dim]).expect("inside box");
            w.lookup[cell] = i as u32;
        }
        Ok(w)
    }

    #[inline]
    fn cell(&self, s: &[i64]) -> Option<usize> {
        if s.len() != self.dim {
            return None;
        }
        let mut idx = 0usize;
        for ((&x, &lo), &hi) in s.iter().zip(&self.lo).zip(&self.hi) {
            if x < lo || x > hi {
                return None;
            }
            idx = idx * (hi - lo + 1) as usize + (x - lo) as usize;
        }
        Some(idx)
    }

    /// Position of a site in the lexicographic order.
    #[inline]
    pub fn index_of(&self, s: &[i64]) -> Option<usize> {
        let c = self.cell(s)?;
        match self.lookup[c] {
            ABSENT => None,
            i => Some(i as usize),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn site(&self, i: usize) -> &[i64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn sites(&self) -> impl Iterator<Item = &[i64]> {
        self.coords.chunks(self.dim)
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords
    }

    /// Inclusive bounding box `(lo, hi)`.
    pub fn bounding_box(&self) -> (&[i64], &[i64]) {
        (&self.lo, &self.hi)
    }

    /// True when every point of the bounding box is a site.
    pub fn is_full_box(&self) -> bool {
        self.len() == self.lookup.len()
    }
}

/// All sites `(t + Z^d) ∩ Δ R0`, reported as integer offsets from `t`.
pub fn lattice_sites(region: &Region) -> Result<LatticeWindow> {
    let coords = region.placed().lattice_points(region.shift());
    if coords.is_empty() {
        return Err(Error::EmptyWindow);
    }
    LatticeWindow::from_sites(region.dim(), coords)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region(spec: &str, scales: &[f64]) -> Region {
        Region::unshifted(spec.parse().unwrap(), scales.to_vec()).unwrap()
    }

    #[test]
    fn square_window_has_hundred_sites() {
        let w = lattice_sites(&region("hypercube:d=2", &[10.0, 10.0])).unwrap();
        assert_eq!(w.len(), 100);
        assert_eq!(w.bounding_box(), (&[-4i64, -4][..], &[5i64, 5][..]));
        assert!(w.is_full_box());
        assert_eq!(w.site(0), &[-4, -4]);
        assert_eq!(w.site(1), &[-4, -3]);
    }

    #[test]
    fn small_disk_has_five_sites() {
        let w = lattice_sites(&region("circle:r=0.5", &[2.0, 2.0])).unwrap();
        assert_eq!(w.len(), 5);
        for s in [[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1]] {
            assert!(w.index_of(&s).is_some());
        }
    }

    #[test]
    fn study_regions_have_expected_counts() {
        assert_eq!(lattice_sites(&region("hypercube", &[14.0, 18.0])).unwrap().len(), 252);
        // radius-9 disk: one more site than the 14 x 18 rectangle
        assert_eq!(lattice_sites(&region("circle", &[18.0, 18.0])).unwrap().len(), 253);
        assert_eq!(lattice_sites(&region("hypercube", &[30.0, 42.0])).unwrap().len(), 1260);
        // radius-20 disk: three fewer sites than the 30 x 42 rectangle
        assert_eq!(lattice_sites(&region("circle", &[40.0, 40.0])).unwrap().len(), 1257);
    }

    #[test]
    fn shifted_lattice() {
        let r = Region::new("hypercube:d=1".parse().unwrap(), vec![4.0], vec![0.5]).unwrap();
        // sites 0.5 + z in (-2, 2]: z in {-2, -1, 0, 1}
        let w = lattice_sites(&r).unwrap();
        assert_eq!(w.coords(), &[-2, -1, 0, 1]);
    }

    #[test]
    fn invalid_regions() {
        let t: Template = "hypercube:d=2".parse().unwrap();
        assert!(Region::unshifted(t.clone(), vec![1.0]).is_err());
        assert!(Region::unshifted(t.clone(), vec![1.0, -1.0]).is_err());
        assert!(Region::new(t, vec![1.0, 1.0], vec![0.7, 0.0]).is_err());
        let tiny = region("circle:r=0.1", &[1.0, 1.0]);
        assert_eq!(lattice_sites(&tiny).unwrap().len(), 1);
    }

    #[test]
    fn window_rejects_duplicates_and_sorts() {
        let w = LatticeWindow::from_sites(2, vec![1, 0, 0, 0]).unwrap();
        assert_eq!(w.coords(), &[0, 0, 1, 0]);
        assert!(LatticeWindow::from_sites(2, vec![1, 0, 1, 0]).is_err());
        assert_eq!(LatticeWindow::from_sites(2, vec![]), Err(Error::EmptyWindow));
    }
}
