use std::fs::File;
use std::io::{self, Write};
use std::path::Path;
use std::time::Duration;

use crate::spec::{Experiment, Structure};
use crate::BenchError;

/// Outcome of one fill (or the fill part of a longer run).
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub experiment: Experiment,
    pub structure: Structure,
    pub capacity: usize,
    pub seed: u64,
    pub p: f64,
    pub k: usize,
    pub t: usize,
    pub bpe: usize,
    pub run: usize,
    pub max_stash: usize,
    pub final_stash: usize,
    pub h1_frac: f64,
    pub h2_frac: f64,
    pub avg_iterations: f64,
    pub failed: bool,
    /// Not written to CSV so that output stays byte-reproducible.
    pub wall_time: Duration,
}

/// One measurement window of a churn run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChurnRecord {
    pub run: RunRecord,
    /// `None` when the run had no replacements.
    pub window: Option<usize>,
    pub window_max_stash: Option<usize>,
}

/// Fresh-insertion cost at one load point.
#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub run: RunRecord,
    pub load: f64,
    pub mean_iterations: f64,
    /// Stash size at the end of each measurement window.
    pub window_stash: Vec<usize>,
}

/// A CSV row type.
pub trait Row {
    fn header() -> Vec<&'static str>;
    fn fields(&self) -> Vec<String>;
}

const BASE_HEADER: [&str; 15] = [
    "experiment",
    "mode",
    "capacity",
    "seed",
    "p",
    "k",
    "t",
    "bpe",
    "run",
    "max_stash",
    "final_stash",
    "h1_frac",
    "h2_frac",
    "avg_iterations",
    "failed",
];

impl Row for RunRecord {
    fn header() -> Vec<&'static str> {
        BASE_HEADER.to_vec()
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.experiment.as_str().to_string(),
            self.structure.as_str().to_string(),
            self.capacity.to_string(),
            self.seed.to_string(),
            self.p.to_string(),
            self.k.to_string(),
            self.t.to_string(),
            self.bpe.to_string(),
            self.run.to_string(),
            self.max_stash.to_string(),
            self.final_stash.to_string(),
            self.h1_frac.to_string(),
            self.h2_frac.to_string(),
            self.avg_iterations.to_string(),
            self.failed.to_string(),
        ]
    }
}

fn opt(v: Option<usize>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl Row for ChurnRecord {
    fn header() -> Vec<&'static str> {
        let mut h = BASE_HEADER.to_vec();
        h.extend(["window", "window_max_stash"]);
        h
    }

    fn fields(&self) -> Vec<String> {
        let mut f = self.run.fields();
        f.push(opt(self.window));
        f.push(opt(self.window_max_stash));
        f
    }
}

impl Row for IterRecord {
    fn header() -> Vec<&'static str> {
        let mut h = BASE_HEADER.to_vec();
        h.extend(["load", "mean_iterations"]);
        h
    }

    fn fields(&self) -> Vec<String> {
        let mut f = self.run.fields();
        f.push(self.load.to_string());
        f.push(self.mean_iterations.to_string());
        f
    }
}

/// Writes a header and one line per record, in the given order.
pub fn write_csv<R: Row, W: Write>(records: &[R], out: W) -> Result<(), BenchError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(R::header())?;
    for r in records {
        w.write_record(r.fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Writes to `out_path`, or to standard output when no path is given.
pub fn emit_csv<R: Row>(records: &[R], out_path: Option<&Path>) -> Result<(), BenchError> {
    match out_path {
        Some(path) => write_csv(records, io::BufWriter::new(File::create(path)?)),
        None => write_csv(records, io::stdout().lock()),
    }
}
