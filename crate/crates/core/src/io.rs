//! CSV and JSON plumbing for the command-line front end.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::simulate::SampleSet;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => io_err(path, source),
        other => Error::data(format!("{}: {other:?}", path.display())),
    }
}

#[derive(Debug, serde::Deserialize)]
struct SampleRecord {
    s: f64,
    x: f64,
}

/// Reads an `s,x` CSV. The domain length defaults to `ceil(max s)`
/// (at least 1).
pub fn read_sample_csv(path: &Path, domain_length: Option<f64>) -> Result<SampleSet> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["s", "x"] {
        return Err(Error::data(format!(
            "{}: expected header 's,x', found '{}'",
            path.display(),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut locs = Vec::new();
    let mut vals = Vec::new();
    for (line, rec) in reader.deserialize::<SampleRecord>().enumerate() {
        let rec = rec.map_err(|e| Error::data(format!("{} row {}: {e}", path.display(), line + 2)))?;
        locs.push(rec.s);
        vals.push(rec.x);
    }
    if locs.is_empty() {
        return Err(Error::data(format!("{}: no observations", path.display())));
    }
    if let Some(bad) = locs.iter().chain(&vals).find(|v| !v.is_finite()) {
        return Err(Error::data(format!("{}: non-finite entry {bad}", path.display())));
    }
    let length = match domain_length {
        Some(l) => l,
        None => locs.iter().cloned().fold(f64::NEG_INFINITY, f64::max).ceil().max(1.0),
    };
    SampleSet::new(locs, vals, length).map_err(|e| match e {
        Error::Parameter(m) | Error::Domain(m) => Error::data(m),
        other => other,
    })
}

pub fn write_sample_csv(path: &Path, sample: &SampleSet) -> Result<()> {
    let rows = sample
        .locations()
        .iter()
        .zip(sample.values())
        .map(|(&s, &x)| SampleRecordOut { s, x });
    write_csv(path, rows)
}

#[derive(Serialize)]
struct SampleRecordOut {
    s: f64,
    x: f64,
}

/// Writes serializable rows with a header taken from the field names.
/// Floats use the shortest representation that parses back exactly.
pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a one-column CSV of prediction targets with header `s`.
pub fn read_targets_csv(path: &Path) -> Result<Vec<f64>> {
    #[derive(serde::Deserialize)]
    struct Row {
        s: f64,
    }
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let mut out = Vec::new();
    for rec in reader.deserialize::<Row>() {
        let r = rec.map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        out.push(r.s);
    }
    if out.is_empty() {
        return Err(Error::data(format!("{}: no targets", path.display())));
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    use std::io::Write;
    w.write_all(b"\n").map_err(|e| io_err(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
}

pub fn read_toml_table(path: &Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.parse::<toml::Table>()
        .map_err(|e| Error::parameter(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_csv_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        let s = SampleSet::new(vec![0.1, 2.0 / 3.0, 7.25], vec![-1e-300, 1.0 / 3.0, 5e17], 8.0).unwrap();
        write_sample_csv(&p, &s).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("s,x\n"));
        let back = read_sample_csv(&p, Some(8.0)).unwrap();
        assert_eq!(back.locations(), s.locations());
        assert_eq!(back.values(), s.values());
        assert_eq!(read_sample_csv(&p, None).unwrap().domain_length(), 8.0);
    }

    #[test]
    fn bad_inputs_are_data_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        std::fs::write(&p, "s,x\n").unwrap();
        assert!(matches!(read_sample_csv(&p, None), Err(Error::Data(_))));
        std::fs::write(&p, "a,b\n1,2\n").unwrap();
        assert!(matches!(read_sample_csv(&p, None), Err(Error::Data(_))));
        std::fs::write(&p, "s,x\n1,oops\n").unwrap();
        assert!(matches!(read_sample_csv(&p, None), Err(Error::Data(_))));
        std::fs::write(&p, "s,x\n5,1\n").unwrap();
        assert!(matches!(read_sample_csv(&p, Some(2.0)), Err(Error::Data(_))));
        assert!(matches!(
            read_sample_csv(&dir.path().join("missing.csv"), None),
            Err(Error::Io { .. })
        ));
    }
}
