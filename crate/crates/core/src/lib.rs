pub mod benchmark;
pub mod centering;
pub mod error;
pub mod estimate;
pub mod gp;
pub mod mixture;
pub mod model;
pub mod sampler;
pub mod simulate;
pub mod special;
