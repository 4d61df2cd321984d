pub mod autodiff;
pub mod baselines;
pub mod cli;
pub mod ingest;
pub mod metrics_eval;
pub mod model;
pub mod predictions;
pub mod road_graph;
pub mod synth_bench;
pub mod training;
