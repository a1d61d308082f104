use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// A typed CSV column. `None` marks a missing cell (empty or `NA`).
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Int(Vec<Option<i64>>),
    Float(Vec<Option<f64>>),
    Str(Vec<Option<String>>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Int(v) => v.len(),
            Column::Float(v) => v.len(),
            Column::Str(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_missing(&self, row: usize) -> bool {
        match self {
            Column::Int(v) => v[row].is_none(),
            Column::Float(v) => v[row].is_none(),
            Column::Str(v) => v[row].is_none(),
        }
    }

    pub fn is_numeric(&self) -> bool {
        !matches!(self, Column::Str(_))
    }

    pub fn as_f64(&self, row: usize) -> Option<f64> {
        match self {
            Column::Int(v) => v[row].map(|x| x as f64),
            Column::Float(v) => v[row],
            Column::Str(_) => None,
        }
    }

    /// Cell rendered back to text; `None` when missing.
    pub fn text(&self, row: usize) -> Option<String> {
        match self {
            Column::Int(v) => v[row].map(|x| x.to_string()),
            Column::Float(v) => v[row].map(|x| x.to_string()),
            Column::Str(v) => v[row].clone(),
        }
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Int(v) => Column::Int(rows.iter().map(|&r| v[r]).collect()),
            Column::Float(v) => Column::Float(rows.iter().map(|&r| v[r]).collect()),
            Column::Str(v) => Column::Str(rows.iter().map(|&r| v[r].clone()).collect()),
        }
    }

    /// Infers the narrowest type that parses every non-missing cell.
    pub fn infer(cells: Vec<Option<String>>) -> Column {
        if cells
            .iter()
            .flatten()
            .all(|s| s.parse::<i64>().is_ok())
        {
            return Column::Int(
                cells
                    .iter()
                    .map(|c| c.as_ref().map(|s| s.parse().unwrap()))
                    .collect(),
            );
        }
        if cells
            .iter()
            .flatten()
            .all(|s| s.parse::<f64>().is_ok_and(f64::is_finite))
        {
            return Column::Float(
                cells
                    .iter()
                    .map(|c| c.as_ref().map(|s| s.parse().unwrap()))
                    .collect(),
            );
        }
        Column::Str(cells)
    }
}

fn is_missing_token(s: &str) -> bool {
    let t = s.trim();
    t.is_empty() || t == "NA"
}

/// Named, typed columns in input order. Row order is preserved.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawTable {
    columns: Vec<(String, Column)>,
    n_rows: usize,
}

impl RawTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics on a length mismatch with existing columns.
    pub fn push_column(&mut self, name: impl Into<String>, col: Column) {
        if self.columns.is_empty() {
            self.n_rows = col.len();
        }
        assert_eq!(col.len(), self.n_rows, "column length mismatch");
        self.columns.push((name.into(), col));
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn select_rows(&self, rows: &[usize]) -> RawTable {
        RawTable {
            columns: self
                .columns
                .iter()
                .map(|(n, c)| (n.clone(), c.select(rows)))
                .collect(),
            n_rows: rows.len(),
        }
    }

    /// Reads a headered RFC-4180 CSV, keeping only `wanted` columns (all
    /// columns when `wanted` is empty).
    pub fn from_reader<R: Read>(reader: R, wanted: &[&str]) -> Result<RawTable> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Format(e.to_string()))?
            .clone();
        let header_names: Vec<&str> = headers.iter().collect();

        let mut picked: Vec<(String, usize)> = Vec::new();
        if wanted.is_empty() {
            for (i, h) in header_names.iter().enumerate() {
                picked.push((h.to_string(), i));
            }
        } else {
            for w in wanted {
                if picked.iter().any(|(n, _)| n == w) {
                    continue;
                }
                let idx = header_names
                    .iter()
                    .position(|h| h == w)
                    .ok_or_else(|| Error::MissingColumn(w.to_string()))?;
                picked.push((w.to_string(), idx));
            }
        }

        let mut cells: Vec<Vec<Option<String>>> = vec![Vec::new(); picked.len()];
        for record in rdr.records() {
            let record = record.map_err(|e| Error::Format(e.to_string()))?;
            for (slot, (_, idx)) in cells.iter_mut().zip(&picked) {
                let raw = record.get(*idx).unwrap_or("");
                slot.push(if is_missing_token(raw) {
                    None
                } else {
                    Some(raw.trim().to_string())
                });
            }
        }

        let mut table = RawTable::new();
        let n_rows = cells.first().map_or(0, Vec::len);
        for ((name, _), col) in picked.into_iter().zip(cells) {
            table.push_column(name, Column::infer(col));
        }
        table.n_rows = n_rows;
        Ok(table)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.names())
            .map_err(|e| Error::Format(e.to_string()))?;
        for r in 0..self.n_rows {
            let rec: Vec<String> = self
                .columns
                .iter()
                .map(|(_, c)| c.text(r).unwrap_or_else(|| "NA".to_string()))
                .collect();
            w.write_record(&rec).map_err(|e| Error::Format(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Loads the columns a model needs from a CSV file.
pub fn load_csv(
    path: impl AsRef<Path>,
    item_cols: &[String],
    group_col: Option<&str>,
    z_cols: &[String],
    zh_cols: &[String],
) -> Result<RawTable> {
    let file = std::fs::File::open(path.as_ref())?;
    let mut wanted: Vec<&str> = item_cols.iter().map(String::as_str).collect();
    wanted.extend(group_col);
    wanted.extend(z_cols.iter().map(String::as_str));
    wanted.extend(zh_cols.iter().map(String::as_str));
    if wanted.is_empty() {
        return Err(Error::InvalidSpec("no columns requested".into()));
    }
    RawTable::from_reader(std::io::BufReader::new(file), &wanted)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "COUNTRY,obey,party,female,gdp\nBGR,1,0,1,9.8\nBGR,1,,0,9.8\nITA,0,1,NA,10.5\n";

    #[test]
    fn typed_columns() {
        let t = RawTable::from_reader(CSV.as_bytes(), &[]).unwrap();
        assert_eq!(t.n_rows(), 3);
        assert!(matches!(t.column("COUNTRY").unwrap(), Column::Str(_)));
        assert!(matches!(t.column("obey").unwrap(), Column::Int(_)));
        assert!(matches!(t.column("gdp").unwrap(), Column::Float(_)));
        assert!(t.column("party").unwrap().is_missing(1));
        assert!(t.column("female").unwrap().is_missing(2));
    }

    #[test]
    fn one_row_table() {
        let t = RawTable::from_reader("a,b\n1,x\n".as_bytes(), &["a", "b"]).unwrap();
        assert_eq!(t.n_rows(), 1);
    }

    #[test]
    fn missing_named_column() {
        let err = RawTable::from_reader(CSV.as_bytes(), &["obey", "vote"]).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "vote"));
    }

    #[test]
    fn ragged_csv_is_format_error() {
        let err = RawTable::from_reader("a,b\n1\n".as_bytes(), &[]).unwrap_err();
        assert!(matches!(err, Error::Format(_)));
    }

    #[test]
    fn write_then_read_preserves_cells() {
        let t = RawTable::from_reader(CSV.as_bytes(), &[]).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = RawTable::from_reader(buf.as_slice(), &[]).unwrap();
        assert_eq!(t, back);
    }
}
