pub mod closure;
pub mod data;
pub mod dag;
pub mod enumerate;
pub mod error;
pub mod estimate;
pub mod experiment;
pub mod io;
pub mod joint;
pub mod network;
pub mod path;
pub mod pdag;
pub mod rng;
pub mod sampler;
pub mod score;
pub mod search;
