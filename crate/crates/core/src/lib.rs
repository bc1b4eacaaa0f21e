//! Potential theory and divisor theory on augmented metric graphs, with
//! exact rational arithmetic throughout.

pub mod divisor;
pub mod experiment;
pub mod fixtures;
pub mod graph;
pub mod linalg;
pub mod measure;
pub mod okounkov;
pub mod plfunction;
pub mod potential;
pub mod rational;
pub mod rank;
pub mod reduction;
pub mod slope;
pub mod weierstrass;

pub use divisor::{Divisor, DivisorSpec, QDivisor};
pub use graph::{GraphError, GraphSpec, MetricGraph, Point, PointSpec, TangentDirection};
pub use measure::{Measure, MeasureSpec};
pub use plfunction::PLFunction;
pub use potential::Resistance;
pub use rational::Q;
