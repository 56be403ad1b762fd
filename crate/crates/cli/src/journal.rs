//! Append-only record of finished backtest blocks, so an interrupted run can
//! resume where it stopped.
//!
//! Each finished block is appended in a single write: one `R` row per score
//! followed by a `D` row marking the block complete. Blocks without their
//! `D` row (a write cut short) are ignored on reload.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use volcast::backtest::{BlockKey, BlockOutput};
use volcast::scoring::ScoreRecord;

use crate::CliError;

pub struct Journal {
    file: File,
}

/// What a previous run left behind.
#[derive(Debug, Default)]
pub struct Progress {
    pub done: HashSet<BlockKey>,
    pub records: Vec<ScoreRecord>,
    /// Bytes up to the end of the last complete block.
    pub valid_len: u64,
}

impl Journal {
    /// Starts a new journal, replacing any existing one.
    pub fn create(path: &Path, header: &str) -> Result<Self, CliError> {
        let mut file = File::create(path)?;
        writeln!(file, "{header}")?;
        file.sync_data()?;
        Ok(Self { file })
    }

    /// Reopens a journal for appending, dropping any torn tail past
    /// `valid_len` first.
    pub fn append_to(path: &Path, valid_len: u64) -> Result<Self, CliError> {
        OpenOptions::new().write(true).open(path)?.set_len(valid_len)?;
        Ok(Self {
            file: OpenOptions::new().append(true).open(path)?,
        })
    }

    pub fn record(&mut self, out: &BlockOutput) -> Result<(), CliError> {
        let k = &out.key;
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_writer(Vec::new());
        for r in &out.records {
            w.write_record([
                "R",
                &k.series_id,
                &k.model,
                &k.refit_origin.to_string(),
                &r.series_id,
                &r.model_id,
                r.weight.name(),
                &r.horizon.to_string(),
                &r.target_date.to_string(),
                &r.value.to_string(),
                &r.truncated.to_string(),
            ])?;
        }
        w.write_record(["D", &k.series_id, &k.model, &k.refit_origin.to_string()])?;
        let buf = w.into_inner().map_err(|e| CliError::runtime(e.to_string()))?;
        self.file.write_all(&buf)?;
        self.file.sync_data()?;
        Ok(())
    }
}

/// Reads the header line and the finished blocks.
pub fn load(path: &Path) -> Result<(String, Progress), CliError> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut header = String::new();
    reader.read_line(&mut header)?;
    let bad = |msg: String| CliError::usage(format!("{}: {msg}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut pending: HashMap<BlockKey, Vec<ScoreRecord>> = HashMap::new();
    let mut progress = Progress {
        valid_len: header.len() as u64,
        ..Progress::default()
    };
    let mut row = csv::StringRecord::new();
    while let Ok(true) = rdr.read_record(&mut row) {
        let key = |row: &csv::StringRecord| -> Result<BlockKey, CliError> {
            Ok(BlockKey {
                series_id: row[1].to_owned(),
                model: row[2].to_owned(),
                refit_origin: row[3].parse().map_err(|_| bad(format!("bad origin `{}`", &row[3])))?,
            })
        };
        match (row.get(0), row.len()) {
            (Some("R"), 11) => {
                let rec = ScoreRecord {
                    series_id: row[4].to_owned(),
                    model_id: row[5].to_owned(),
                    weight: row[6].parse()?,
                    horizon: row[7].parse().map_err(|_| bad(format!("bad horizon `{}`", &row[7])))?,
                    target_date: row[8].parse().map_err(|_| bad(format!("bad date `{}`", &row[8])))?,
                    value: row[9].parse().map_err(|_| bad(format!("bad value `{}`", &row[9])))?,
                    truncated: row[10].parse().map_err(|_| bad(format!("bad flag `{}`", &row[10])))?,
                };
                pending.entry(key(&row)?).or_default().push(rec);
            }
            (Some("D"), 4) => {
                let k = key(&row)?;
                progress.records.extend(pending.remove(&k).unwrap_or_default());
                progress.done.insert(k);
                progress.valid_len = header.len() as u64 + rdr.position().byte();
            }
            // a torn final line
            _ => break,
        }
    }
    Ok((header.trim_end().to_owned(), progress))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use volcast::scoring::WeightKind;

    fn output(origin: usize, n: usize) -> BlockOutput {
        BlockOutput {
            key: BlockKey {
                series_id: "s".into(),
                model: "tegarch".into(),
                refit_origin: origin,
            },
            converged: true,
            records: (0..n)
                .map(|i| ScoreRecord {
                    series_id: "s".into(),
                    model_id: "tegarch".into(),
                    weight: WeightKind::Center,
                    horizon: 1,
                    target_date: NaiveDate::from_ymd_opt(2010, 1, 1 + i as u32).unwrap(),
                    value: 0.1 + 1e-17 * i as f64 + 1.0 / 3.0,
                    truncated: i % 2 == 0,
                })
                .collect(),
        }
    }

    #[test]
    fn round_trip_and_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.csv");
        let mut j = Journal::create(&path, "# head").unwrap();
        j.record(&output(10, 3)).unwrap();
        drop(j);
        let (_, p) = load(&path).unwrap();
        let mut j = Journal::append_to(&path, p.valid_len).unwrap();
        j.record(&output(20, 2)).unwrap();
        drop(j);
        // a block cut off before its D row
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        write!(f, "R,s,tegarch,30,s,tegarch,center,1,2010-01-01,0.5,false\nR,s,teg").unwrap();
        drop(f);

        let (header, p) = load(&path).unwrap();
        assert_eq!(header, "# head");
        assert_eq!(p.done.len(), 2);
        let mut expected = output(10, 3).records;
        expected.extend(output(20, 2).records);
        assert_eq!(p.records, expected);

        // resuming drops the torn tail before appending
        let mut j = Journal::append_to(&path, p.valid_len).unwrap();
        j.record(&output(40, 1)).unwrap();
        drop(j);
        let (_, p) = load(&path).unwrap();
        assert_eq!(p.done.len(), 3);
        expected.extend(output(40, 1).records);
        assert_eq!(p.records, expected);
    }
}
