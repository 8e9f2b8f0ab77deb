//! Expression, label and embedding files, preprocessing, the synthetic
//! linear-SEM generator and report documents.

mod io;
mod preprocess;
mod report;
mod synth;
mod types;

pub use io::{
    check_tf_flags, load_embeddings, load_expression, load_labels, load_matrix, write_embeddings, write_expression,
    write_labels, write_matrix,
};
pub use preprocess::preprocess;
pub use report::{parse_report, read_report, write_report, ReportDocument, REPORT_SCHEMA_VERSION};
pub use synth::{
    biased_labels, embedding_scores, generate_synthetic, spectral_radius_bound, synthetic_gene_names, BiasConfig,
    GenConfig, SyntheticDataset, SPECTRAL_CAP,
};
pub use types::{Edge, EmbeddingMatrix, ExpressionMatrix, LabeledEdges};
