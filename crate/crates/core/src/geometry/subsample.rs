use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::placed::Placed;
use super::region::Region;
use super::template::Template;

/// Subsampling design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    /// All integer translates of the scaled template inside the region.
    Ol,
    /// Scaled templates inscribed in disjoint cubes tiling the region.
    Nol,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Ol => "ol",
            Scheme::Nol => "nol",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ol" => Ok(Scheme::Ol),
            "nol" => Ok(Scheme::Nol),
            other => Err(Error::parse(s, format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsampleSpec {
    pub template: Template,
    pub scale: f64,
    pub scheme: Scheme,
}

impl SubsampleSpec {
    pub fn new(template: Template, scale: f64, scheme: Scheme) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "subsample scale must be positive, got {scale}"
            )));
        }
        Ok(SubsampleSpec {
            template,
            scale,
            scheme,
        })
    }

    /// Integer scales are required by the NOL bias theory.
    pub fn has_integer_scale(&self) -> bool {
        self.scale.fract() == 0.0
    }

    fn check(&self, region: &Region, scheme: Scheme) -> Result<()> {
        if self.scheme != scheme {
            return Err(Error::InvalidParameter(format!(
                "expected a {scheme} specification, got {}",
                self.scheme
            )));
        }
        if self.template.dim() != region.dim() {
            return Err(Error::DimensionMismatch {
                expected: region.dim(),
                got: self.template.dim(),
            });
        }
        if self.scale > region.min_scale() {
            return Err(Error::InvalidParameter(format!(
                "subsample scale {} exceeds the smallest region scale {}",
                self.scale,
                region.min_scale()
            )));
        }
        Ok(())
    }
}

/// Enumerated subsamples: offsets plus the integer sites (relative to the
/// lattice shift) belonging to each subsample, in lexicographic order.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsampleIndexSet {
    scheme: Scheme,
    dim: usize,
    offsets: Vec<i64>,
    members: Vec<i64>,
    starts: Vec<usize>,
    integer_scale: bool,
}

impl SubsampleIndexSet {
    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of subsamples `|J|`.
    pub fn len(&self) -> usize {
        self.starts.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn offset(&self, j: usize) -> &[i64] {
        &self.offsets[j * self.dim..(j + 1) * self.dim]
    }

    pub fn offsets(&self) -> impl Iterator<Item = &[i64]> {
        self.offsets.chunks(self.dim)
    }

    /// Flat coordinates of the sites in subsample `j`.
    pub fn members(&self, j: usize) -> &[i64] {
        &self.members[self.starts[j] * self.dim..self.starts[j + 1] * self.dim]
    }

    pub fn site_count(&self, j: usize) -> usize {
        self.starts[j + 1] - self.starts[j]
    }

    pub fn site_counts(&self) -> Vec<usize> {
        (0..self.len()).map(|j| self.site_count(j)).collect()
    }

    /// False for NOL designs with a non-integer scale.
    pub fn integer_scale(&self) -> bool {
        self.integer_scale
    }

    fn build(scheme: Scheme, dim: usize, integer_scale: bool) -> Self {
        SubsampleIndexSet {
            scheme,
            dim,
            offsets: Vec::new(),
            members: Vec::new(),
            starts: vec![0],
            integer_scale,
        }
    }

    fn push(&mut self, offset: &[i64], sites: &[i64]) {
        self.offsets.extend_from_slice(offset);
        self.members.extend_from_slice(sites);
        self.starts.push(self.members.len() / self.dim);
    }
}

/// Odometer over the integer box `[lo, hi]`, last axis fastest.
fn for_each_point(lo: &[i64], hi: &[i64], mut f: impl FnMut(&[i64]) -> Result<()>) -> Result<()> {
    let d = lo.len();
    if (0..d).any(|j| hi[j] < lo[j]) {
        return Ok(());
    }
    let mut z = lo.to_vec();
    loop {
        f(&z)?;
        let mut j = d;
        loop {
            if j == 0 {
                return Ok(());
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

const RANGE_SLACK: f64 = 1e-7;

/// `J_OL`: integer offsets `i` with `i + sλ R_sub ⊂ R_n`.
pub fn enumerate_ol(region: &Region, spec: &SubsampleSpec) -> Result<SubsampleIndexSet> {
    spec.check(region, Scheme::Ol)?;
    let d = region.dim();
    let outer = region.placed();
    let base = Placed::uniform(&spec.template, spec.scale, vec![0.0; d]);
    let pattern = base.lattice_points(region.shift());
    let mut lo = vec![0i64; d];
    let mut hi = vec![0i64; d];
    for j in 0..d {
        let (olo, ohi) = outer.extent(j);
        let (ilo, ihi) = base.extent(j);
        lo[j] = (olo - ilo - RANGE_SLACK).ceil() as i64;
        hi[j] = (ohi - ihi + RANGE_SLACK).floor() as i64;
    }
    let mut set = SubsampleIndexSet::build(Scheme::Ol, d, true);
    let mut sites = vec![0i64; pattern.len()];
    for_each_point(&lo, &hi, |i| {
        let center: Vec<f64> = i.iter().map(|&x| x as f64).collect();
        let inner = Placed::uniform(&spec.template, spec.scale, center);
        if inner.is_inside(&outer)? {
            for (k, s) in sites.iter_mut().enumerate() {
                *s = pattern[k] + i[k % d];
            }
            set.push(i, &sites);
        }
        Ok(())
    })?;
    if set.is_empty() {
        return Err(Error::EmptySubsampleSet);
    }
    Ok(set)
}

/// `J_NOL`: offsets `i` whose cube `sλ (i + (-1/2, 1/2]^d)` lies in `R_n`; the
/// subregion is `sλ (i + R_sub)` with its own site count.
pub fn enumerate_nol(region: &Region, spec: &SubsampleSpec) -> Result<SubsampleIndexSet> {
    spec.check(region, Scheme::Nol)?;
    let d = region.dim();
    let s = spec.scale;
    let integer_scale = spec.has_integer_scale();
    if !integer_scale {
        log::warn!("NOL subsampling with non-integer scale {s}; bias theory assumes integer scales");
    }
    let outer = region.placed();
    let cube = Template::hypercube(d)?;
    let mut lo = vec![0i64; d];
    let mut hi = vec![0i64; d];
    for j in 0..d {
        let (olo, ohi) = outer.extent(j);
        lo[j] = ((olo + s / 2.0) / s - RANGE_SLACK).ceil() as i64;
        hi[j] = ((ohi - s / 2.0) / s + RANGE_SLACK).floor() as i64;
    }
    let mut set = SubsampleIndexSet::build(Scheme::Nol, d, integer_scale);
    for_each_point(&lo, &hi, |i| {
        let center: Vec<f64> = i.iter().map(|&x| s * x as f64).collect();
        let block = Placed::uniform(&cube, s, center.clone());
        if block.is_inside(&outer)? {
            let sub = Placed::uniform(&spec.template, s, center);
            set.push(i, &sub.lattice_points(region.shift()));
        }
        Ok(())
    })?;
    if set.is_empty() {
        return Err(Error::EmptySubsampleSet);
    }
    Ok(set)
}

/// Dispatches on the specification's scheme.
pub fn enumerate(region: &Region, spec: &SubsampleSpec) -> Result<SubsampleIndexSet> {
    match spec.scheme {
        Scheme::Ol => enumerate_ol(region, spec),
        Scheme::Nol => enumerate_nol(region, spec),
    }
}

/// `C(k) = |Z^d ∩ sR ∩ (k + sR)|` on the lattice shifted by `shift`.
pub fn overlap_count(template: &Template, scale: f64, k: &[i64], shift: &[f64]) -> Result<usize> {
    let d = template.dim();
    for len in [k.len(), shift.len()] {
        if len != d {
            return Err(Error::DimensionMismatch { expected: d, got: len });
        }
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidParameter("scale must be positive".into()));
    }
    let pts = Placed::uniform(template, scale, vec![0.0; d]).lattice_points(shift);
    let set: HashSet<&[i64]> = pts.chunks(d).collect();
    let mut moved = vec![0i64; d];
    let mut count = 0;
    for p in pts.chunks(d) {
        for j in 0..d {
            moved[j] = p[j] - k[j];
        }
        if set.contains(moved.as_slice()) {
            count += 1;
        }
    }
    Ok(count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(l: f64) -> Region {
        Region::unshifted(Template::hypercube(2).unwrap(), vec![l, l]).unwrap()
    }

    fn spec(t: &str, s: f64, scheme: Scheme) -> SubsampleSpec {
        SubsampleSpec::new(t.parse().unwrap(), s, scheme).unwrap()
    }

    #[test]
    fn ol_offsets_in_square() {
        let set = enumerate_ol(&square(10.0), &spec("hypercube", 4.0, Scheme::Ol)).unwrap();
        assert_eq!(set.len(), 49);
        assert_eq!(set.offset(0), &[-3, -3]);
        assert_eq!(set.offset(48), &[3, 3]);
        assert!(set.site_counts().iter().all(|&c| c == 16));
        assert_eq!(set.members(0)[..2], [-4, -4]);
    }

    #[test]
    fn nol_offsets_in_square() {
        let set = enumerate_nol(&square(10.0), &spec("hypercube", 3.0, Scheme::Nol)).unwrap();
        assert_eq!(set.len(), 9);
        assert_eq!(set.offset(0), &[-1, -1]);
        assert!(set.site_counts().iter().all(|&c| c == 9));
        let set = enumerate_nol(&square(10.0), &spec("hypercube", 4.0, Scheme::Nol)).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.offset(0), &[0, 0]);
    }

    #[test]
    fn nol_non_integer_scale_is_flagged() {
        let set = enumerate_nol(&square(10.0), &spec("hypercube", 2.5, Scheme::Nol)).unwrap();
        assert!(!set.integer_scale());
        assert_eq!(set.len(), 9);
        let counts = set.site_counts();
        assert!(counts.iter().any(|&c| c != counts[0]));
    }

    #[test]
    fn full_scale_subsample_is_identity() {
        let region = Region::unshifted(Template::hypercube(2).unwrap(), vec![6.0, 6.5]).unwrap();
        let set = enumerate_ol(&region, &spec("hypercube", 6.0, Scheme::Ol)).unwrap();
        assert!(set.offsets().any(|o| o == [0, 0]));
        let disk = Region::unshifted("circle".parse().unwrap(), vec![18.0, 18.5]).unwrap();
        let set = enumerate_ol(&disk, &spec("circle", 18.0, Scheme::Ol)).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.offset(0), &[0, 0]);
    }

    #[test]
    fn scale_must_be_below_region() {
        assert!(enumerate_ol(&square(10.0), &spec("hypercube", 10.5, Scheme::Ol)).is_err());
        assert_eq!(enumerate_ol(&square(10.0), &spec("hypercube", 10.0, Scheme::Ol)).unwrap().len(), 1);
        assert!(enumerate_ol(&square(10.0), &spec("hypercube", 3.0, Scheme::Nol)).is_err());
    }

    #[test]
    fn overlap_counts() {
        let sq = Template::hypercube(2).unwrap();
        assert_eq!(overlap_count(&sq, 3.0, &[0, 0], &[0.0, 0.0]).unwrap(), 9);
        assert_eq!(overlap_count(&sq, 3.0, &[1, 0], &[0.0, 0.0]).unwrap(), 6);
        assert_eq!(overlap_count(&sq, 3.0, &[4, 0], &[0.0, 0.0]).unwrap(), 0);
    }

    #[test]
    fn circle_subsamples_in_square() {
        // radius-1.5 disk holds the same 3x3 sites as the side-3 square
        let region = square(20.0);
        let rect = enumerate_ol(&region, &spec("hypercube", 3.0, Scheme::Ol)).unwrap();
        let disk = enumerate_ol(&region, &spec("circle", 3.0, Scheme::Ol)).unwrap();
        assert_eq!(rect.len(), 17 * 17);
        assert_eq!(rect, SubsampleIndexSet { scheme: Scheme::Ol, ..disk });
    }
}
