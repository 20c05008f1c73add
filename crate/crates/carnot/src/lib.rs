//! Numerical laboratory for intrinsic Lipschitz graphs on step-2 Carnot
//! groups: group algebra, intrinsic (Burgers-type) derivative operators,
//! characteristic ODEs with minimal/maximal solution selection, Lagrangian
//! parameterizations, and verification of the three equivalent notions of
//! solution at desk scale.

pub mod characteristics;
pub mod error;
pub mod field;
pub mod graph;
pub mod group;
pub mod intrinsic;
pub mod lagrangian;
pub mod scenario;
pub mod report;

pub use error::{Error, Result};

/// The long-form guide from `book/`, embedded so its code blocks run as
/// doc-tests (`cargo test --doc`) and cannot drift from the library.
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/groups.md")]
    pub mod groups {}
    #[doc = include_str!("../../../book/src/intrinsic.md")]
    pub mod intrinsic {}
    #[doc = include_str!("../../../book/src/characteristics.md")]
    pub mod characteristics {}
    #[doc = include_str!("../../../book/src/lagrangian.md")]
    pub mod lagrangian {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    pub mod scenarios {}
}
