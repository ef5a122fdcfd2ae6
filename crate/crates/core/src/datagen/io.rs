//! CSV files for datasets, adjacency matrices and segment manifests.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write/read cycle is bit-exact.

use std::fs;
use std::path::{Path, PathBuf};

use super::dataset::{GroundTruth, Segment, TimeSeriesDataset};
use crate::error::{io_err, parse_err, Result, UncleError};
use crate::graph::CausalMatrix;

pub const MANIFEST_HEADER: [&str; 3] = ["t_start", "t_end", "adjacency_file"];

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> UncleError + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(source) => UncleError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => parse_err(path, format!("{other:?}")),
    }
}

fn parse_f64(path: &Path, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| parse_err(path, format!("not a number: {s:?}")))
}

/// Header of variable names, then one row per time step.
pub fn write_dataset(path: &Path, data: &TimeSeriesDataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(&data.var_names).map_err(csv_err(path))?;
    let mut rec = Vec::with_capacity(data.num_vars());
    for t in 0..data.steps() {
        rec.clear();
        rec.extend((0..data.num_vars()).map(|v| data.get(v, t).to_string()));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_dataset(path: &Path) -> Result<TimeSeriesDataset> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let names: Vec<String> = r.headers().map_err(csv_err(path))?.iter().map(|s| s.trim().to_string()).collect();
    let mut rows = vec![Vec::new(); names.len()];
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        for (row, field) in rows.iter_mut().zip(rec.iter()) {
            row.push(parse_f64(path, field)?);
        }
    }
    if rows.first().map_or(true, Vec::is_empty) {
        return Err(parse_err(path, "dataset has no rows"));
    }
    TimeSeriesDataset::new(rows, names).map_err(|e| parse_err(path, e.to_string()))
}

/// Headerless `N x N` matrix; row `j`, column `i` is the edge `j -> i`.
pub fn write_matrix(path: &Path, m: &CausalMatrix) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_err(path))?;
    for row in m.rows() {
        w.write_record(row.iter().map(f64::to_string)).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_matrix(path: &Path) -> Result<CausalMatrix> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path).map_err(csv_err(path))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        rows.push(rec.iter().map(|f| parse_f64(path, f)).collect::<Result<Vec<_>>>()?);
    }
    CausalMatrix::from_rows(rows).map_err(|e| parse_err(path, e.to_string()))
}

/// Writes the truth into `dir`: `truth.csv` when static, otherwise
/// `truth_manifest.csv` plus one `truth_segment<k>.csv` per segment.
/// Returns the file to pass back to [`read_truth`].
pub fn write_truth(dir: &Path, truth: &GroundTruth) -> Result<PathBuf> {
    match truth {
        GroundTruth::Static(m) => {
            let path = dir.join("truth.csv");
            write_matrix(&path, m)?;
            Ok(path)
        }
        GroundTruth::Dynamic(segs) => {
            let path = dir.join("truth_manifest.csv");
            let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
            w.write_record(MANIFEST_HEADER).map_err(csv_err(&path))?;
            for (k, s) in segs.iter().enumerate() {
                let name = format!("truth_segment{k}.csv");
                write_matrix(&dir.join(&name), &s.adjacency)?;
                w.write_record([s.t_start.to_string(), s.t_end.to_string(), name])
                    .map_err(csv_err(&path))?;
            }
            w.flush().map_err(io_err(&path))?;
            Ok(path)
        }
    }
}

/// Whether `path` is a segment manifest rather than a plain matrix.
pub fn is_manifest(path: &Path) -> Result<bool> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let first = text.lines().next().unwrap_or("");
    Ok(first.split(',').map(str::trim).eq(MANIFEST_HEADER))
}

/// Reads a segment manifest; segment files are resolved relative to it.
pub fn read_manifest(path: &Path) -> Result<GroundTruth> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut segments = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        if rec.len() != 3 {
            return Err(parse_err(path, format!("manifest rows need 3 fields, got {}", rec.len())));
        }
        let num = |s: &str| s.trim().parse::<usize>().map_err(|_| parse_err(path, format!("bad time index {s:?}")));
        segments.push(Segment {
            t_start: num(&rec[0])?,
            t_end: num(&rec[1])?,
            adjacency: read_matrix(&dir.join(rec[2].trim()))?,
        });
    }
    let steps = segments.last().map_or(0, |s| s.t_end);
    GroundTruth::dynamic(segments, steps).map_err(|e| parse_err(path, e.to_string()))
}

/// Reads either a static matrix or a dynamic manifest.
pub fn read_truth(path: &Path) -> Result<GroundTruth> {
    if is_manifest(path)? {
        read_manifest(path)
    } else {
        read_matrix(path).map(GroundTruth::Static)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gen_tvsem, lorenz96_truth};

    #[test]
    fn dataset_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let (data, _) = gen_tvsem(400, 2).unwrap();
        let path = dir.path().join("d.csv");
        write_dataset(&path, &data).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back.values(), data.values());
        assert_eq!(back.var_names, ["X", "Y"]);
        let header = fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("X,Y\n"));
        assert_eq!(header.lines().count(), 401);
    }

    #[test]
    fn truth_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let st = GroundTruth::Static(lorenz96_truth(6));
        let p = write_truth(dir.path(), &st).unwrap();
        assert!(!is_manifest(&p).unwrap());
        assert_eq!(read_truth(&p).unwrap(), st);

        let (_, dy) = gen_tvsem(2000, 0).unwrap();
        let p = write_truth(dir.path(), &dy).unwrap();
        assert!(is_manifest(&p).unwrap());
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 6);
        assert_eq!(read_truth(&p).unwrap(), dy);
    }

    #[test]
    fn malformed_files_are_parse_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        fs::write(&p, "a,b\n1,zz\n").unwrap();
        assert!(matches!(read_dataset(&p), Err(UncleError::Parse { .. })));
        fs::write(&p, "1,0\n0\n").unwrap();
        assert!(read_matrix(&p).is_err());
        assert!(matches!(read_dataset(&dir.path().join("missing.csv")), Err(UncleError::Io { .. })));
    }
}
