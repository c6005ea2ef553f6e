//! Tab-separated manifests: the only contract between pipeline stages.
//!
//! The first column is always `utterance_id`. An optional header line starting with `#`
//! names the columns; without one the columns are `utterance_id` and `path`. Relative
//! paths resolve against the manifest's own directory.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const ID_COLUMN: &str = "utterance_id";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
    base_dir: PathBuf,
}

impl Manifest {
    pub fn new(columns: Vec<String>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        if columns.first().map(String::as_str) != Some(ID_COLUMN) {
            return Err(Error::InvalidArgument(format!("first manifest column must be {ID_COLUMN}")));
        }
        Ok(Self {
            columns,
            rows: Vec::new(),
            base_dir: base_dir.into(),
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.is_file() {
            return Err(Error::MissingInput(format!("manifest {} does not exist", path.display())));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base).map_err(|e| match e {
            Error::InvalidArgument(m) => Error::InvalidArgument(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut columns = None;
        let mut rows = Vec::new();
        let mut seen = HashSet::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            if let Some(header) = line.strip_prefix('#') {
                if columns.is_none() && rows.is_empty() {
                    columns = Some(header.trim().split('\t').map(str::to_string).collect::<Vec<_>>());
                }
                continue;
            }
            let fields: Vec<String> = line.split('\t').map(str::to_string).collect();
            let cols = columns.get_or_insert_with(|| vec![ID_COLUMN.to_string(), "path".to_string()]);
            if fields.len() != cols.len() {
                return Err(Error::InvalidArgument(format!(
                    "line {}: {} fields, header has {}",
                    lineno + 1,
                    fields.len(),
                    cols.len()
                )));
            }
            if !seen.insert(fields[0].clone()) {
                return Err(Error::InvalidArgument(format!("line {}: duplicate id {}", lineno + 1, fields[0])));
            }
            rows.push(fields);
        }
        let columns = columns.unwrap_or_else(|| vec![ID_COLUMN.to_string(), "path".to_string()]);
        let mut m = Self::new(columns, base_dir)?;
        m.rows = rows;
        Ok(m)
    }

    pub fn push(&mut self, fields: Vec<String>) -> Result<()> {
        if fields.len() != self.columns.len() {
            return Err(Error::InvalidArgument(format!(
                "{} fields for {} columns",
                fields.len(),
                self.columns.len()
            )));
        }
        if fields.iter().any(|f| f.contains('\t') || f.contains('\n')) {
            return Err(Error::InvalidArgument("manifest fields cannot contain tabs or newlines".into()));
        }
        self.rows.push(fields);
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = format!("#{}\n", self.columns.join("\t"));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join("\t"));
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.rows.iter().map(|r| r[0].as_str())
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::MissingInput(format!("manifest has no column {name}")))
    }

    pub fn get(&self, row: usize, column: &str) -> Result<&str> {
        Ok(&self.rows[row][self.column_index(column)?])
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.rows.iter().position(|r| r[0] == id)
    }

    /// Resolves a path-valued cell against the manifest directory.
    pub fn path(&self, row: usize, column: &str) -> Result<PathBuf> {
        let raw = Path::new(self.get(row, column)?);
        Ok(if raw.is_absolute() { raw.to_path_buf() } else { self.base_dir.join(raw) })
    }

    /// Same ids in any order; reports the ids missing from and extra in `other`.
    pub fn check_aligned(&self, other: &Manifest, what: &str) -> Result<()> {
        let mine: HashSet<&str> = self.ids().collect();
        let theirs: HashSet<&str> = other.ids().collect();
        let mut missing: Vec<&str> = mine.difference(&theirs).copied().collect();
        let mut extra: Vec<&str> = theirs.difference(&mine).copied().collect();
        if missing.is_empty() && extra.is_empty() {
            return Ok(());
        }
        missing.sort_unstable();
        extra.sort_unstable();
        Err(Error::MissingInput(format!(
            "{what}: missing ids [{}], extra ids [{}]",
            missing.join(", "),
            extra.join(", ")
        )))
    }
}
