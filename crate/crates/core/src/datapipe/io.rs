//! On-disk formats: line-delimited JSON records (one `StudentRecord` per
//! line) and a JSON schema file carrying `version`, `d_in`, `k`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schema::{validate_record, RecordSchema, StudentRecord};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Serialize, Deserialize)]
struct SchemaFile {
    version: String,
    d_in: usize,
    k: usize,
}

pub fn write_schema(path: impl AsRef<Path>, schema: &RecordSchema) -> Result<()> {
    let file = SchemaFile {
        version: schema.version.clone(),
        d_in: schema.d_in(),
        k: schema.k(),
    };
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut out, &file).map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn read_schema(path: impl AsRef<Path>) -> Result<RecordSchema> {
    let data = std::fs::read_to_string(path)?;
    let file: SchemaFile = serde_json::from_str(&data).map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    Ok(RecordSchema::for_student_records(
        file.version,
        file.d_in,
        file.k,
    ))
}

pub fn write_records<F: Scalar>(
    path: impl AsRef<Path>,
    records: &[StudentRecord<F>],
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for rec in records {
        serde_json::to_writer(&mut out, rec).map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Strict read: any malformed line is an error.
pub fn read_records<F: Scalar>(path: impl AsRef<Path>) -> Result<Vec<StudentRecord<F>>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: StudentRecord<F> = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Lenient ingest: lines that fail to parse or violate the schema are
/// counted as rejected instead of failing the read.
pub fn load_filtered<F: Scalar>(
    path: impl AsRef<Path>,
    schema: &RecordSchema,
) -> Result<(Vec<StudentRecord<F>>, usize)> {
    let reader = BufReader::new(File::open(path)?);
    let mut clean = Vec::new();
    let mut rejected = 0usize;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<StudentRecord<F>>(&line) {
            Ok(rec) if validate_record(&rec, schema).is_empty() => clean.push(rec),
            _ => rejected += 1,
        }
    }
    Ok((clean, rejected))
}
