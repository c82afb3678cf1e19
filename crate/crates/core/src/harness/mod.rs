//! Data ingestion, training plumbing, experiment orchestration and report
//! emission: everything the CLI drives.

mod config;
mod experiment;
mod io;
mod mf;
mod ratings;
mod synth;

pub use config::{ExperimentConfig, GraphParams, HullParams, MfMode, MfParams, SynthParams};
pub use experiment::{
    build_graph_for_config, emit_report_csv, emit_report_json, fmt_sig6, parse_report_json,
    run_experiment, select_with_method, write_report, EmitOptions, EvalReport, EvalRow,
    ExperimentInputs, MethodContext, Population, REPORT_SCHEMA,
};
pub use io::{
    digest_bytes, digest_file, digest_matrix, load_embeddings, load_selection, read_embeddings_text,
    save_embeddings_binary, save_embeddings_text, save_selection, write_embeddings_text,
};
pub use mf::{fit_cold_users, train_mf, ColdFit, TrainLog};
pub use ratings::{load_ratings, split_users, RatingTriple, RatingsTable};
pub use synth::{gen_synthetic, MixtureSpec, NormSkewSpec};
