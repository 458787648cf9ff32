//! Data pipeline: shared schema validation, rule-based filtering, global
//! normalization from a calibration set, synthetic multi-client data
//! generation, and the line-delimited on-disk record format.

mod io;
mod normalize;
mod schema;
mod synth;

pub use io::{load_filtered, read_records, read_schema, write_records, write_schema};
pub use normalize::{fit_normalization, normalize, normalize_dataset, NormalizationParams};
pub use schema::{
    filter_dataset, validate_record, FieldKind, FieldSpec, RecordSchema, SchemaViolation,
    StudentRecord,
};
pub use synth::{generate_clients, HeterogeneityProfile, SyntheticWorld};
