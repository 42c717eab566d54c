pub mod audit;
pub mod eval;
pub mod preprocess;
pub mod report;
pub mod synth;
pub mod train;
