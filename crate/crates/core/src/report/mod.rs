//! Run reports, tables, confusion-matrix figures and feature projections.

mod embed;
mod emit;
mod svg;
pub mod tsne;

pub use embed::{EmbeddingSet, Subset};
pub use emit::{
    ablation_table, artifact_path, from_json, history_table, loss_table, read_json, run_id, sweep_table, to_json,
    write_json, write_text, RunReport, Table,
};
pub use svg::render_confusion;
pub use tsne::{affinities, tsne, Affinities, TsneConfig, TsneResult};
