use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::{Dataset, Partition};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn parse_err(row: usize, msg: impl Into<String>) -> Error {
    Error::Parse { row, msg: msg.into() }
}

/// Fisher's Iris measurements (150 × 4, three species), shipped with the crate.
pub fn iris<T: Scalar>() -> Result<Dataset<T>> {
    parse_csv(include_str!("../../data/iris.csv"), "iris")
}

/// Reads a headed CSV file; a final column named `label` holds integer ground truth.
pub fn load_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let name = path.file_stem().map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    parse_csv(&text, name)
}

/// Parses CSV text. Row numbers in errors are 1-based file lines (the header is row 1).
pub fn parse_csv<T: Scalar>(text: &str, name: impl Into<String>) -> Result<Dataset<T>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(text.as_bytes());
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r?,
        None => return Err(parse_err(1, "empty file, header row required")),
    };
    if header.iter().all(|cell| cell.trim().parse::<f64>().is_ok()) {
        return Err(parse_err(1, "missing header row"));
    }
    let width = header.len();
    let has_label = header.iter().next_back().is_some_and(|h| h.trim().eq_ignore_ascii_case("label"));
    let p = if has_label { width - 1 } else { width };
    if p == 0 {
        return Err(parse_err(1, "no feature columns"));
    }

    let mut flat: Vec<T> = Vec::new();
    let mut labels = Vec::new();
    let mut n = 0;
    for (i, rec) in records.enumerate() {
        let row = i + 2;
        let rec = rec?;
        if rec.len() == 1 && rec.get(0).is_some_and(|c| c.trim().is_empty()) {
            continue;
        }
        if rec.len() != width {
            return Err(parse_err(row, format!("expected {width} fields, found {}", rec.len())));
        }
        for (c, cell) in rec.iter().take(p).enumerate() {
            let v: T = cell
                .trim()
                .parse()
                .map_err(|_| parse_err(row, format!("column {}: not a number: {cell:?}", c + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(row, format!("column {}: non-finite value", c + 1)));
            }
            flat.push(v);
        }
        if has_label {
            let cell = rec.get(p).unwrap_or_default().trim();
            let label: usize = cell.parse().map_err(|_| parse_err(row, format!("label is not a non-negative integer: {cell:?}")))?;
            labels.push(label);
        }
        n += 1;
    }
    if n == 0 {
        return Err(parse_err(2, "no data rows"));
    }
    let points = ndarray::Array2::from_shape_vec((n, p), flat).map_err(|e| parse_err(0, e.to_string()))?;
    Dataset::new(points, has_label.then_some(labels), name)
}

/// Serializes with shortest round-trip decimal formatting, so `parse_csv` recovers
/// every coordinate bit-exactly.
pub fn to_csv_string<T: Scalar>(ds: &Dataset<T>) -> String {
    let mut out = String::new();
    let header: Vec<String> = (1..=ds.p()).map(|c| format!("x{c}")).collect();
    out.push_str(&header.join(","));
    if ds.labels().is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for j in 0..ds.n() {
        for (c, v) in ds.row(j).iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            write!(out, "{v}").expect("write to string");
        }
        if let Some(labels) = ds.labels() {
            write!(out, ",{}", labels[j]).expect("write to string");
        }
        out.push('\n');
    }
    out
}

pub fn save_csv<T: Scalar>(path: impl AsRef<Path>, ds: &Dataset<T>) -> Result<()> {
    write_atomic(path, to_csv_string(ds).as_bytes())
}

/// Per-sample assignments as `sample,cluster`, both 1-based.
pub fn save_assignments(path: impl AsRef<Path>, partition: &Partition) -> Result<()> {
    let mut out = String::from("sample,cluster\n");
    for (j, c) in partition.one_based().iter().enumerate() {
        writeln!(out, "{},{c}", j + 1).expect("write to string");
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_json<S: Serialize>(path: impl AsRef<Path>, value: &S) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Writes through a temporary file in the target directory and renames it into place.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn plain_file() {
        let ds: Dataset<f64> = parse_csv("x1,x2\n0,0\n1,1\n", "t").unwrap();
        assert_eq!((ds.n(), ds.p()), (2, 2));
        assert!(ds.labels().is_none());
        assert_eq!(ds.row(1), &[1.0, 1.0]);
    }

    #[test]
    fn label_column_kept() {
        let ds: Dataset<f64> = parse_csv("a,b,label\n0,0,1\n1,1,2\n2,2,1\n", "t").unwrap();
        assert_eq!(ds.p(), 2);
        assert_eq!(ds.labels().unwrap(), &[1, 2, 1]);
    }

    #[test]
    fn errors_carry_row_numbers() {
        let err = parse_csv::<f64>("x1,x2\n0,0\n1\n", "t").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 3, .. }), "{err}");
        let err = parse_csv::<f64>("x1,x2\n0,0\n1,abc\n", "t").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 3, .. }), "{err}");
        let err = parse_csv::<f64>("0,0\n1,1\n", "t").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, .. }), "{err}");
        let err = parse_csv::<f64>("x,label\n0,1.5\n", "t").unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }), "{err}");
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let ds: Dataset<f64> =
            crate::dataset::generate_synthetic(&"gaussian-grid:2,2,10,0.3".parse().unwrap(), 4).unwrap();
        save_csv(&path, &ds).unwrap();
        let back: Dataset<f64> = load_csv(&path).unwrap();
        assert_eq!(back.points(), ds.points());
        assert_eq!(back.labels(), ds.labels());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_bit_exact(
            rows in prop::collection::vec(prop::collection::vec(-1e300f64..1e300, 3), 1..20),
        ) {
            let ds = Dataset::from_rows(&rows, None, "p").unwrap();
            let back: Dataset<f64> = parse_csv(&to_csv_string(&ds), "p").unwrap();
            for (a, b) in back.points().iter().zip(ds.points().iter()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }

        #[test]
        fn csv_round_trip_f32(rows in prop::collection::vec(prop::collection::vec(any::<f32>().prop_filter("finite", |x| x.is_finite()), 2), 1..10)) {
            let ds = Dataset::from_rows(&rows, None, "p").unwrap();
            let back: Dataset<f32> = parse_csv(&to_csv_string(&ds), "p").unwrap();
            prop_assert_eq!(back.points(), ds.points());
        }
    }
}
