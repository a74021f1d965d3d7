pub mod des;
pub mod parallel;
pub mod quantum;
pub mod rng;
pub mod mbqc;
pub mod net;
pub mod compiler;
pub mod protocols;
pub mod scenario;
