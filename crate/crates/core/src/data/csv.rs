//! Delimited text pools.
//!
//! Column contract: a header row; `id` is required (unsigned integer), `label`
//! (`0`, `1`, or empty for unlabeled) and `domain` are optional, and every other
//! column is a numeric feature, in header order.

use std::collections::HashSet;
use std::path::Path;

use super::sample::{DomainPool, Sample, SampleId};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn parse_label(raw: &str, row: usize) -> Result<Option<u8>> {
    match raw.trim() {
        "" => Ok(None),
        "0" => Ok(Some(0)),
        "1" => Ok(Some(1)),
        other => Err(Error::Data(format!("row {row}: label {other:?} is not 0, 1 or empty"))),
    }
}

/// Reads a pool from any reader; `name` labels the pool and fills missing
/// domain cells.
pub fn read_pool<T: Scalar, R: std::io::Read>(reader: R, name: &str) -> Result<DomainPool<T>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |col: &str| headers.iter().position(|h| h.trim() == col);
    let id_col = find("id").ok_or_else(|| Error::Data("missing required column \"id\"".into()))?;
    let label_col = find("label");
    let domain_col = find("domain");
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != id_col && Some(c) != label_col && Some(c) != domain_col)
        .collect();

    let mut seen = HashSet::new();
    let mut samples = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| Error::Data(format!("row {row}: {e}")))?;
        let id: u64 = rec[id_col]
            .trim()
            .parse()
            .map_err(|_| Error::Data(format!("row {row}: bad id {:?}", &rec[id_col])))?;
        if !seen.insert(id) {
            return Err(Error::Data(format!("row {row}: duplicate id {id}")));
        }
        let features = feature_cols
            .iter()
            .map(|&c| {
                rec[c]
                    .trim()
                    .parse::<f64>()
                    .map(T::of)
                    .map_err(|_| Error::Data(format!("row {row}: non-numeric feature {:?}", &rec[c])))
            })
            .collect::<Result<Vec<T>>>()?;
        let label = label_col.map(|c| parse_label(&rec[c], row)).transpose()?.flatten();
        let domain = domain_col
            .map(|c| rec[c].trim().to_string())
            .filter(|d| !d.is_empty())
            .unwrap_or_else(|| name.to_string());
        samples.push(Sample {
            id: SampleId(id),
            features,
            label,
            domain,
        });
    }
    DomainPool::new(name, samples)
}

/// Loads a pool named after the file stem.
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<DomainPool<T>> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = std::fs::File::open(path)?;
    read_pool(file, &name)
}

pub fn write_pool<T: Scalar, W: std::io::Write>(pool: &DomainPool<T>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let dim = pool.dim().unwrap_or(0);
    let mut header = vec!["id".to_string()];
    header.extend((0..dim).map(|j| format!("x{j}")));
    header.push("label".into());
    header.push("domain".into());
    w.write_record(&header)?;
    for s in &pool.samples {
        let mut rec = Vec::with_capacity(dim + 3);
        rec.push(s.id.to_string());
        // Shortest round-trip formatting keeps reloads lossless.
        rec.extend(s.features.iter().map(|v| v.to_string()));
        rec.push(s.label.map(|l| l.to_string()).unwrap_or_default());
        rec.push(s.domain.clone());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv<T: Scalar>(pool: &DomainPool<T>, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_pool(pool, file)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_only() {
        let pool: DomainPool<f64> = read_pool("id,a,b,label\n".as_bytes(), "x").unwrap();
        assert!(pool.is_empty());
    }

    #[test]
    fn three_rows_one_unlabeled() {
        let text = "id,f1,f2,label\n1,0.5,1.5,1\n2,-1,2,\n3,0,0,0\n";
        let pool: DomainPool<f64> = read_pool(text.as_bytes(), "HA").unwrap();
        assert_eq!(pool.labeled().count(), 2);
        assert_eq!(pool.unlabeled().count(), 1);
        assert_eq!(pool.samples[1].features, vec![-1.0, 2.0]);
        assert_eq!(pool.samples[0].domain, "HA");
    }

    #[test]
    fn malformed_inputs() {
        let bad = [
            "id,a\n1,0.5\n1,0.7\n",
            "id,a,b\n1,0.5\n",
            "id,a\n1,abc\n",
            "a,b\n0.1,0.2\n",
            "id,a,label\n1,0.1,2\n",
        ];
        for text in bad {
            assert!(read_pool::<f64, _>(text.as_bytes(), "x").is_err(), "{text:?}");
        }
    }
}
