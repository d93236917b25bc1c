//! In-memory data files, written once per run.

use std::path::Path;

use serde::Serialize;

use crate::CliError;

#[derive(Clone, Debug)]
pub struct DataFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Shortest round-trip decimal; exponent form outside `[1e-4, 1e15)`.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

/// RFC 4180 CSV; floats go through [`fmt_f64`], so equal inputs give
/// byte-identical files.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(header).expect("in-memory writer");
        Self { writer }
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        self.writer.write_record(fields).expect("in-memory writer");
    }

    pub fn nums(&mut self, values: &[f64]) {
        self.row(values.iter().map(|&v| fmt_f64(v)));
    }

    pub fn into_file(self, name: &str) -> DataFile {
        DataFile {
            name: name.into(),
            bytes: self.writer.into_inner().expect("in-memory writer"),
        }
    }
}

/// One JSON object per line.
pub fn ndjson<T: Serialize>(name: &str, items: &[T]) -> DataFile {
    let mut bytes = Vec::new();
    for item in items {
        bytes.extend(serde_json::to_vec(item).expect("serializable"));
        bytes.push(b'\n');
    }
    DataFile { name: name.into(), bytes }
}

pub fn write_all(dir: &Path, files: &[DataFile]) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    for f in files {
        let path = dir.join(&f.name);
        std::fs::write(&path, &f.bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quoting_and_floats() {
        let mut t = Table::new(&["a", "b"]);
        t.row(["x,y", "1"]);
        t.nums(&[0.1, 1e-300]);
        let f = t.into_file("t.csv");
        assert_eq!(String::from_utf8(f.bytes).unwrap(), "a,b\n\"x,y\",1\n0.1,1e-300\n");
    }
}
