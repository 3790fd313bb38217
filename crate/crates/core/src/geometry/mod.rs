//! Templates, scaled sampling regions, lattice windows and subsample designs.

mod placed;
mod region;
mod setcov;
mod subsample;
mod template;

pub(crate) use setcov::{chord_set_covariance, grid_k0};
pub(crate) use template::{split_spec, Params};

pub use region::{lattice_sites, LatticeWindow, Region};
pub use setcov::{default_resolution, set_covariance, GRID_BUDGET};
pub use subsample::{
    enumerate, enumerate_nol, enumerate_ol, overlap_count, Scheme, SubsampleIndexSet,
    SubsampleSpec,
};
pub use template::{Shape, Template};
