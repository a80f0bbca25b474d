//! Complete categorical datasets.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Column-major matrix of state indices with per-variable arities.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    names: Vec<String>,
    arities: Vec<usize>,
    columns: Vec<Vec<u16>>,
    rows: usize,
}

impl Dataset {
    pub fn new(names: Vec<String>, arities: Vec<usize>, columns: Vec<Vec<u16>>) -> Result<Self> {
        if names.len() != arities.len() || names.len() != columns.len() {
            return Err(Error::Arity(format!(
                "{} names, {} arities, {} columns",
                names.len(),
                arities.len(),
                columns.len()
            )));
        }
        let rows = columns.first().map_or(0, |c| c.len());
        for (i, col) in columns.iter().enumerate() {
            if col.len() != rows {
                return Err(Error::Arity(format!("column {} has {} rows, expected {rows}", names[i], col.len())));
            }
            if arities[i] < 2 || arities[i] > u16::MAX as usize {
                return Err(Error::Arity(format!("variable {} has arity {}", names[i], arities[i])));
            }
            if let Some(&bad) = col.iter().find(|&&v| v as usize >= arities[i]) {
                return Err(Error::Arity(format!(
                    "variable {} has state {bad} but arity {}",
                    names[i], arities[i]
                )));
            }
        }
        Ok(Dataset {
            names,
            arities,
            columns,
            rows,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.names.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn arities(&self) -> &[usize] {
        &self.arities
    }

    pub fn arity(&self, var: usize) -> usize {
        self.arities[var]
    }

    pub fn column(&self, var: usize) -> &[u16] {
        &self.columns[var]
    }

    /// Same data with different arities; they must still cover every state.
    pub fn with_arities(self, arities: Vec<usize>) -> Result<Dataset> {
        Dataset::new(self.names, arities, self.columns)
    }

    /// The first `rows` rows.
    pub fn head(&self, rows: usize) -> Dataset {
        let rows = rows.min(self.rows);
        Dataset {
            names: self.names.clone(),
            arities: self.arities.clone(),
            columns: self.columns.iter().map(|c| c[..rows].to_vec()).collect(),
            rows,
        }
    }

    /// Reads a CSV with a header of variable names and integer states.
    /// Arities are taken from `arities` when given (aligned with the header),
    /// otherwise inferred as the largest state plus one, and at least 2.
    pub fn read_csv<R: Read>(reader: R, arities: Option<&[usize]>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let names: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let mut columns: Vec<Vec<u16>> = vec![Vec::new(); names.len()];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != names.len() {
                return Err(Error::Parse(format!("row {} has {} fields", line + 1, rec.len())));
            }
            for (col, field) in columns.iter_mut().zip(rec.iter()) {
                let v: u16 = field
                    .parse()
                    .map_err(|_| Error::Parse(format!("row {}: {field:?} is not a state index", line + 1)))?;
                col.push(v);
            }
        }
        let arities = match arities {
            Some(a) => {
                if a.len() != names.len() {
                    return Err(Error::Arity(format!("{} arities for {} columns", a.len(), names.len())));
                }
                a.to_vec()
            }
            None => columns
                .iter()
                .map(|c| c.iter().map(|&v| v as usize + 1).max().unwrap_or(0).max(2))
                .collect(),
        };
        Dataset::new(names, arities, columns)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.names)?;
        let mut rec = Vec::with_capacity(self.n_vars());
        for r in 0..self.rows {
            rec.clear();
            rec.extend(self.columns.iter().map(|c| c[r].to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_and_inference() {
        let text = "A,B\n0,1\n2,0\n1,1\n";
        let d = Dataset::read_csv(text.as_bytes(), None).unwrap();
        assert_eq!(d.arities(), &[3, 2]);
        assert_eq!(d.n_rows(), 3);
        let mut out = Vec::new();
        d.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
        assert_eq!(d.head(1).column(0), &[0]);
    }

    #[test]
    fn declared_arities_are_checked() {
        let text = "A,B\n0,3\n";
        assert!(Dataset::read_csv(text.as_bytes(), Some(&[2, 3])).is_err());
        assert!(Dataset::read_csv(text.as_bytes(), Some(&[2, 4])).is_ok());
        assert!(Dataset::read_csv("A\nx\n".as_bytes(), None).is_err());
    }

    #[test]
    fn header_only_is_empty() {
        let d = Dataset::read_csv("A,B\n".as_bytes(), None).unwrap();
        assert_eq!(d.n_rows(), 0);
        assert_eq!(d.arities(), &[2, 2]);
    }
}
