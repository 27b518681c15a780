//! The per-cell results table.
//!
//! The file starts with a `#`-prefixed version line followed by an ordinary
//! CSV header. Columns are only ever appended, so older readers keep working.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use oligopoly::{Algorithm, Information, RegimeLabel};
use serde::{Deserialize, Serialize};

use crate::error::{ExpError, Result};

pub const RESULTS_VERSION: u32 = 1;
pub const VERSION_LINE: &str = "#oligopoly-results v1";

/// Columns every results table must carry, in order.
pub const REQUIRED_COLUMNS: [&str; 17] = [
    "c0",
    "algo",
    "information",
    "seed",
    "regime",
    "PI_0",
    "PI_1",
    "PI_2",
    "PS",
    "CS",
    "W",
    "dPS",
    "dCS",
    "dW",
    "epsilon",
    "loss_agent0",
    "loss_agents12",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub c0: f64,
    pub algo: Algorithm,
    pub information: Information,
    pub seed: u64,
    pub regime: Option<RegimeLabel>,
    #[serde(rename = "PI_0")]
    pub pi_0: Option<f64>,
    #[serde(rename = "PI_1")]
    pub pi_1: Option<f64>,
    #[serde(rename = "PI_2")]
    pub pi_2: Option<f64>,
    #[serde(rename = "PS")]
    pub ps: Option<f64>,
    #[serde(rename = "CS")]
    pub cs: Option<f64>,
    #[serde(rename = "W")]
    pub w: Option<f64>,
    #[serde(rename = "dPS")]
    pub d_ps: Option<f64>,
    #[serde(rename = "dCS")]
    pub d_cs: Option<f64>,
    #[serde(rename = "dW")]
    pub d_w: Option<f64>,
    pub epsilon: Option<f64>,
    pub loss_agent0: Option<f64>,
    pub loss_agents12: Option<f64>,
    pub c0_index: usize,
    pub cell_key: String,
    pub status: CellStatus,
    /// `agent:stage` pairs separated by `;`, stage being the last one played.
    pub exits: String,
    pub message: String,
}

impl ResultRow {
    pub fn is_ok(&self) -> bool {
        self.status == CellStatus::Ok
    }

    pub fn pi(&self, agent: usize) -> Option<f64> {
        match agent {
            0 => self.pi_0,
            1 => self.pi_1,
            2 => self.pi_2,
            _ => None,
        }
    }

    /// Parsed `exits` column.
    pub fn exit_stages(&self) -> Vec<(usize, usize)> {
        self.exits
            .split(';')
            .filter_map(|pair| {
                let (a, s) = pair.split_once(':')?;
                Some((a.trim().parse().ok()?, s.trim().parse().ok()?))
            })
            .collect()
    }

    fn sort_key(&self) -> (usize, &'static str, String, u64) {
        (self.c0_index, self.algo.as_str(), self.information.to_string(), self.seed)
    }
}

fn csv_reader(file: File) -> csv::Reader<File> {
    csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file)
}

/// Reads every row, checking the required columns first.
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv_reader(crate::error::open_input(path)?);
    let headers = reader.headers()?.clone();
    for col in REQUIRED_COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(ExpError::MissingColumns(col.to_string()));
        }
    }
    let mut rows = Vec::new();
    for rec in reader.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

/// Appends rows to a results file, writing the version line and header when
/// the file is new or empty.
pub struct ResultsWriter {
    writer: csv::Writer<File>,
}

impl ResultsWriter {
    pub fn open(path: &Path) -> Result<Self> {
        let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        if !fresh {
            let mut first = String::new();
            BufReader::new(File::open(path)?).read_line(&mut first)?;
            if first.trim_end() != VERSION_LINE {
                return Err(ExpError::Parse {
                    path: path.display().to_string(),
                    message: format!("expected '{VERSION_LINE}' on the first line"),
                });
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        if fresh {
            writeln!(file, "{VERSION_LINE}")?;
        }
        let writer = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
        Ok(Self { writer })
    }

    pub fn append(&mut self, row: &ResultRow) -> Result<()> {
        self.writer.serialize(row)?;
        self.writer.flush()?;
        Ok(())
    }
}

/// Rewrites `path` with one row per cell key (the last successful row wins,
/// else the last row) in a canonical order.
pub fn compact_results(path: &Path) -> Result<Vec<ResultRow>> {
    let rows = read_results(path)?;
    let mut kept: Vec<ResultRow> = Vec::new();
    for row in rows {
        match kept.iter_mut().find(|r| r.cell_key == row.cell_key) {
            Some(slot) if row.is_ok() || !slot.is_ok() => *slot = row,
            Some(_) => {}
            None => kept.push(row),
        }
    }
    kept.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
    let tmp = path.with_extension("csv.tmp");
    {
        let _ = std::fs::remove_file(&tmp);
        let mut w = ResultsWriter::open(&tmp)?;
        for row in &kept {
            w.append(row)?;
        }
    }
    std::fs::rename(&tmp, path)?;
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn row(key: &str, c0_index: usize, status: CellStatus) -> ResultRow {
        ResultRow {
            c0: 0.42 + c0_index as f64 * 0.01,
            algo: Algorithm::Ppo,
            information: Information::PartiallyObservable,
            seed: 0,
            regime: (status == CellStatus::Ok).then_some(RegimeLabel::Predation),
            pi_0: Some(0.1),
            pi_1: Some(0.0),
            pi_2: None,
            ps: Some(0.5),
            cs: Some(1.0),
            w: Some(1.5),
            d_ps: Some(0.2),
            d_cs: Some(-0.1),
            d_w: Some(0.1),
            epsilon: Some(0.01),
            loss_agent0: Some(0.01),
            loss_agents12: Some(0.002),
            c0_index,
            cell_key: key.to_string(),
            status,
            exits: "2:2".to_string(),
            message: String::new(),
        }
    }

    #[test]
    fn append_read_and_compact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        let mut w = ResultsWriter::open(&path).unwrap();
        w.append(&row("b", 1, CellStatus::Failed)).unwrap();
        w.append(&row("a", 0, CellStatus::Ok)).unwrap();
        drop(w);
        let mut w = ResultsWriter::open(&path).unwrap();
        w.append(&row("b", 1, CellStatus::Ok)).unwrap();
        w.append(&row("a", 0, CellStatus::Failed)).unwrap();
        drop(w);

        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(VERSION_LINE));
        assert_eq!(text.matches("c0,algo").count(), 1);
        assert_eq!(read_results(&path).unwrap().len(), 4);

        let kept = compact_results(&path).unwrap();
        assert_eq!(kept.iter().map(|r| r.cell_key.as_str()).collect::<Vec<_>>(), ["a", "b"]);
        assert!(kept.iter().all(ResultRow::is_ok));
        assert_eq!(read_results(&path).unwrap(), kept);
        assert_eq!(kept[0].exit_stages(), vec![(2, 2)]);
        assert_eq!(kept[0].pi_2, None);
    }

    #[test]
    fn missing_column_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "c0,algo\n0.5,ppo\n").unwrap();
        assert!(matches!(read_results(&path), Err(ExpError::MissingColumns(c)) if c == "information"));
    }
}
