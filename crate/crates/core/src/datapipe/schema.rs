//! Shared record schema and rule-based structural filtering.
//!
//! Every participant validates records against the same schema version;
//! violations mark a record invalid but are data, not faults. A version
//! mismatch between participants aborts a run before any training.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    RealVector,
    BitVector,
    StringId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub name: String,
    pub kind: FieldKind,
    /// Element count for vector fields; 1 for scalar-like fields.
    pub arity: usize,
}

/// Schema for scored student responses: a prompt id, a fixed-arity feature
/// vector, and one bit per rubric dimension.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordSchema {
    pub version: String,
    pub fields: Vec<FieldSpec>,
}

impl RecordSchema {
    pub fn for_student_records(version: impl Into<String>, d_in: usize, k: usize) -> Self {
        Self {
            version: version.into(),
            fields: vec![
                FieldSpec {
                    name: "prompt_id".into(),
                    kind: FieldKind::StringId,
                    arity: 1,
                },
                FieldSpec {
                    name: "features".into(),
                    kind: FieldKind::RealVector,
                    arity: d_in,
                },
                FieldSpec {
                    name: "rubric_labels".into(),
                    kind: FieldKind::BitVector,
                    arity: k,
                },
            ],
        }
    }

    fn arity_of(&self, name: &str) -> Option<usize> {
        self.fields.iter().find(|f| f.name == name).map(|f| f.arity)
    }

    /// Feature arity d_in.
    pub fn d_in(&self) -> usize {
        self.arity_of("features").unwrap_or(0)
    }

    /// Label arity k.
    pub fn k(&self) -> usize {
        self.arity_of("rubric_labels").unwrap_or(0)
    }
}

/// One student response: surrogate feature vector plus rubric bits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "", deserialize = ""))]
pub struct StudentRecord<F: Scalar> {
    pub prompt_id: String,
    pub features: Vec<F>,
    pub rubric_labels: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SchemaViolation {
    MissingField { name: String },
    FeatureArity { expected: usize, actual: usize },
    LabelArity { expected: usize, actual: usize },
    NonFiniteFeature { index: usize },
    NonBinaryLabel { index: usize },
    EmptyPromptId,
}

/// Structural validation of a record against the schema; an empty result
/// means the record conforms.
pub fn validate_record<F: Scalar>(
    rec: &StudentRecord<F>,
    schema: &RecordSchema,
) -> Vec<SchemaViolation> {
    let mut violations = Vec::new();
    if rec.prompt_id.is_empty() {
        violations.push(SchemaViolation::EmptyPromptId);
    }
    let d_in = schema.d_in();
    if rec.features.len() != d_in {
        violations.push(SchemaViolation::FeatureArity {
            expected: d_in,
            actual: rec.features.len(),
        });
    }
    for (index, v) in rec.features.iter().enumerate() {
        if !v.is_finite() {
            violations.push(SchemaViolation::NonFiniteFeature { index });
        }
    }
    let k = schema.k();
    if rec.rubric_labels.len() != k {
        violations.push(SchemaViolation::LabelArity {
            expected: k,
            actual: rec.rubric_labels.len(),
        });
    }
    for (index, v) in rec.rubric_labels.iter().enumerate() {
        if *v > 1 {
            violations.push(SchemaViolation::NonBinaryLabel { index });
        }
    }
    violations
}

/// Keep the records that pass [`validate_record`], in their original order;
/// returns the clean list and the number rejected. Deterministic.
pub fn filter_dataset<F: Scalar>(
    recs: Vec<StudentRecord<F>>,
    schema: &RecordSchema,
) -> (Vec<StudentRecord<F>>, usize) {
    let before = recs.len();
    let clean: Vec<_> = recs
        .into_iter()
        .filter(|r| validate_record(r, schema).is_empty())
        .collect();
    let rejected = before - clean.len();
    (clean, rejected)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> RecordSchema {
        RecordSchema::for_student_records("v1", 3, 2)
    }

    fn good(i: usize) -> StudentRecord<f64> {
        StudentRecord {
            prompt_id: format!("p-{i}"),
            features: vec![0.1, -2.0, 3.5],
            rubric_labels: vec![1, 0],
        }
    }

    #[test]
    fn conforming_record_is_ok() {
        assert!(validate_record(&good(0), &schema()).is_empty());
    }

    #[test]
    fn short_features_flag_arity() {
        let mut r = good(0);
        r.features.pop();
        assert_eq!(
            validate_record(&r, &schema()),
            vec![SchemaViolation::FeatureArity {
                expected: 3,
                actual: 2
            }]
        );
    }

    #[test]
    fn nan_feature_flags_non_finite() {
        let mut r = good(0);
        r.features[1] = f64::NAN;
        assert_eq!(
            validate_record(&r, &schema()),
            vec![SchemaViolation::NonFiniteFeature { index: 1 }]
        );
    }

    #[test]
    fn bad_label_and_empty_id_flagged() {
        let mut r = good(0);
        r.prompt_id.clear();
        r.rubric_labels[0] = 7;
        let v = validate_record(&r, &schema());
        assert!(v.contains(&SchemaViolation::EmptyPromptId));
        assert!(v.contains(&SchemaViolation::NonBinaryLabel { index: 0 }));
    }

    #[test]
    fn filter_keeps_all_valid() {
        let recs: Vec<_> = (0..10).map(good).collect();
        let (clean, rejected) = filter_dataset(recs.clone(), &schema());
        assert_eq!(clean, recs);
        assert_eq!(rejected, 0);
    }

    #[test]
    fn filter_drops_invalid_preserving_order() {
        let mut recs: Vec<_> = (0..10).map(good).collect();
        recs[4].features[0] = f64::INFINITY;
        let (clean, rejected) = filter_dataset(recs, &schema());
        assert_eq!(clean.len(), 9);
        assert_eq!(rejected, 1);
        let ids: Vec<_> = clean.iter().map(|r| r.prompt_id.as_str()).collect();
        assert_eq!(
            ids,
            vec!["p-0", "p-1", "p-2", "p-3", "p-5", "p-6", "p-7", "p-8", "p-9"]
        );
    }

    #[test]
    fn filter_empty_input() {
        let (clean, rejected) = filter_dataset::<f64>(vec![], &schema());
        assert!(clean.is_empty());
        assert_eq!(rejected, 0);
    }

    #[test]
    fn filter_is_deterministic() {
        let mut recs: Vec<_> = (0..20).map(good).collect();
        recs[3].rubric_labels.push(1);
        recs[11].features[2] = f64::NAN;
        let (a, ra) = filter_dataset(recs.clone(), &schema());
        let (b, rb) = filter_dataset(recs, &schema());
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }
}
