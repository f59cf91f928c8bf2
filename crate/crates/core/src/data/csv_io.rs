use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::Matrix;

/// Tokens read as a missing value; rows containing one are dropped.
pub const MISSING_TOKENS: [&str; 8] = ["", "NA", "na", "N/A", "NaN", "nan", "?", "null"];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

impl From<usize> for ColumnRef {
    fn from(i: usize) -> Self {
        ColumnRef::Index(i)
    }
}

impl From<&str> for ColumnRef {
    fn from(s: &str) -> Self {
        ColumnRef::Name(s.to_string())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Delimiter {
    /// Comma if the first line contains one, whitespace otherwise.
    #[default]
    Auto,
    Comma,
    Whitespace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvOptions {
    pub target: ColumnRef,
    #[serde(default)]
    pub header: bool,
    /// Feature columns in order; all non-target columns when absent.
    #[serde(default)]
    pub features: Option<Vec<ColumnRef>>,
    #[serde(default)]
    pub delimiter: Delimiter,
}

impl CsvOptions {
    pub fn new(target: impl Into<ColumnRef>, header: bool) -> Self {
        Self {
            target: target.into(),
            header,
            features: None,
            delimiter: Delimiter::Auto,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LoadedCsv {
    pub dataset: Dataset,
    /// 1-based line numbers of rows dropped for missing values.
    pub dropped_rows: Vec<usize>,
}

fn split_line(line: &str, delimiter: Delimiter) -> Result<Vec<String>> {
    match delimiter {
        Delimiter::Whitespace => Ok(line.split_whitespace().map(str::to_string).collect()),
        _ => {
            let mut r = csv::ReaderBuilder::new()
                .has_headers(false)
                .flexible(true)
                .trim(csv::Trim::All)
                .from_reader(line.as_bytes());
            match r.records().next() {
                Some(rec) => Ok(rec.map_err(|e| Error::Format(e.to_string()))?.iter().map(str::to_string).collect()),
                None => Ok(Vec::new()),
            }
        }
    }
}

fn resolve(col: &ColumnRef, names: &[String], width: usize) -> Result<usize> {
    match col {
        ColumnRef::Index(i) if *i < width => Ok(*i),
        ColumnRef::Index(i) => Err(Error::MissingColumn(format!("column {i} (file has {width})"))),
        ColumnRef::Name(n) => names
            .iter()
            .position(|c| c == n)
            .ok_or_else(|| Error::MissingColumn(n.clone())),
    }
}

/// Reads a numeric table. Blank lines are skipped; rows with a missing
/// value are dropped and reported; any other unparsable cell is an error.
pub fn load_csv_with(path: &Path, opts: &CsvOptions) -> Result<LoadedCsv> {
    let text = fs::read_to_string(path)?;
    parse_table(&text, opts)
}

pub fn load_csv(path: &Path, target: impl Into<ColumnRef>, header: bool) -> Result<LoadedCsv> {
    load_csv_with(path, &CsvOptions::new(target, header))
}

pub fn parse_table(text: &str, opts: &CsvOptions) -> Result<LoadedCsv> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let delimiter = match opts.delimiter {
        Delimiter::Auto => match text.lines().find(|l| !l.trim().is_empty()) {
            Some(l) if l.contains(',') => Delimiter::Comma,
            _ => Delimiter::Whitespace,
        },
        d => d,
    };
    let mut first: Option<(usize, Vec<String>)> = None;
    let names: Vec<String> = if opts.header {
        let (_, h) = lines.next().ok_or(Error::EmptyInput("csv header"))?;
        split_line(h, delimiter)?
    } else {
        let Some((n, l)) = lines.next() else {
            return Err(Error::EmptyInput("csv file"));
        };
        let cells = split_line(l, delimiter)?;
        let names = (0..cells.len()).map(|j| format!("x{j}")).collect();
        first = Some((n, cells));
        names
    };
    let width = names.len();
    let target = resolve(&opts.target, &names, width)?;
    let features: Vec<usize> = match &opts.features {
        Some(cols) => cols.iter().map(|c| resolve(c, &names, width)).collect::<Result<_>>()?,
        None => (0..width).filter(|&j| j != target).collect(),
    };
    if features.contains(&target) {
        return Err(Error::invalid("target column is also listed as a feature"));
    }

    let mut data = Vec::new();
    let mut targets = Vec::new();
    let mut dropped = Vec::new();
    let rest = lines.map(|(n, l)| split_line(l, delimiter).map(|c| (n, c)));
    for row in first.map(Ok).into_iter().chain(rest) {
        let (n, cells) = row?;
        let line = n + 1;
        if cells.len() != width {
            return Err(Error::Parse {
                row: line,
                column: cells.len().min(width),
                message: format!("expected {width} fields, found {}", cells.len()),
            });
        }
        let mut values = vec![0.0; width];
        let mut missing = false;
        for (j, cell) in cells.iter().enumerate() {
            if !features.contains(&j) && j != target {
                continue;
            }
            if MISSING_TOKENS.contains(&cell.as_str()) {
                missing = true;
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: line,
                column: j,
                message: format!("cannot parse {cell:?} in column {:?} as a number", names[j]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: line,
                    column: j,
                    message: format!("non-finite value {cell:?}"),
                });
            }
            values[j] = v;
        }
        if missing {
            dropped.push(line);
            continue;
        }
        data.extend(features.iter().map(|&j| values[j]));
        targets.push(values[target]);
    }
    if !dropped.is_empty() {
        log::warn!("dropped {} rows with missing values", dropped.len());
    }
    if targets.is_empty() {
        return Err(Error::EmptyInput("csv file has no complete rows"));
    }
    let n = targets.len();
    let dataset = Dataset::new(Matrix::from_vec(n, features.len(), data)?, targets)?
        .with_names(features.iter().map(|&j| names[j].clone()).collect(), names[target].clone())?;
    Ok(LoadedCsv {
        dataset,
        dropped_rows: dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(target: impl Into<ColumnRef>, header: bool) -> CsvOptions {
        CsvOptions::new(target, header)
    }

    #[test]
    fn two_by_two() {
        let l = parse_table("x,y\n1,2\n3,4\n", &opts("y", true)).unwrap();
        assert_eq!(l.dataset.len(), 2);
        assert_eq!(l.dataset.n_features(), 1);
        assert_eq!(l.dataset.targets, vec![2.0, 4.0]);
        assert_eq!(l.dataset.feature_names, vec!["x"]);
    }

    #[test]
    fn bad_cell_located() {
        let e = parse_table("a,b\n1,2\n3,oops\n", &opts(1usize, true)).unwrap_err();
        match e {
            Error::Parse { row, column, .. } => assert_eq!((row, column), (3, 1)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_rows_dropped_and_counted() {
        let l = parse_table("1 2 3\n4 NA 6\n7 8 9\n", &opts(2usize, false)).unwrap();
        assert_eq!(l.dataset.len(), 2);
        assert_eq!(l.dropped_rows, vec![2]);
        assert_eq!(l.dataset.x(1), &[7.0, 8.0]);
    }

    #[test]
    fn column_selection_and_errors() {
        let mut o = opts(2usize, false);
        o.features = Some(vec![ColumnRef::Index(0)]);
        let l = parse_table("1 2 3 4\n5 6 7 8\n", &o).unwrap();
        assert_eq!(l.dataset.features.as_slice(), &[1.0, 5.0]);
        assert!(matches!(parse_table("a,b\n1,2\n", &opts("z", true)), Err(Error::MissingColumn(_))));
        assert!(matches!(parse_table("1,2\n3\n", &opts(1usize, false)), Err(Error::Parse { row: 2, .. })));
    }
}
