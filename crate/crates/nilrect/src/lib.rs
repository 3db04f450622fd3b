//! Exact rectangle algebra, charts, and orthogonal equivalence relations on
//! finitely generated nilpotent groups and their finite actions.

pub mod array;
pub mod charts;
pub mod e0;
pub mod frame;
pub mod group_catalog;
pub mod lattice;
pub mod markers;
pub mod ortho;
pub mod rect_algebra;
pub mod rough;
pub mod scenario;
pub mod window;
