pub mod boxes;
pub mod error;
pub mod geom;
pub mod guided;
pub mod objmatch;
pub mod rectify;
pub mod scalar;
pub mod synth;
pub mod vanishing;

pub use error::{Error, Result};
pub use scalar::Real;

// Double-precision instantiations used by the command-line tools.
pub type Point = geom::Point<f64>;
pub type HomPoint = geom::HomPoint<f64>;
pub type LineSegment = geom::LineSegment<f64>;
pub type Homography = geom::Homography<f64>;
pub type DetBox = geom::DetBox<f64>;
pub type QuadBox = geom::QuadBox<f64>;
pub type VanishingPoint = vanishing::VanishingPoint<f64>;
pub type Rectifier = rectify::Rectifier<f64>;
pub type Feature = objmatch::Feature<f64>;
pub type ObjectGroup = objmatch::ObjectGroup<f64>;
pub type Match = guided::Match<f64>;
pub type MatchSet = guided::MatchSet<f64>;
pub type ImageInputs = guided::ImageInputs<f64>;
pub type PipelineParams = guided::PipelineParams<f64>;
