use std::ops::Range;
use std::time::Instant;

use emoma::hash::splitmix64;
use emoma::{CuckooBaseline, Dictionary, Emoma, EmomaConfig, Key};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::record::{ChurnRecord, IterRecord, RunRecord};
use crate::spec::{Experiment, ExperimentSpec, Structure};
use crate::BenchError;

/// Churn output is split into this many equal windows of replacements.
pub const CHURN_WINDOWS: usize = 16;

/// Fresh insertions per itertime point, as a fraction of capacity.
pub const ITERTIME_FRACTION: usize = 8;

/// Itertime reports the stash at the end of this many windows.
pub const ITERTIME_WINDOWS: usize = 8;

/// Iteration budget of the itertime fill; the swept `t` applies to the
/// fresh insertions only.
pub const ITERTIME_FILL_T: usize = 100;

const VICTIM_TAG: u64 = 0x7e11;

/// Seed of run `run` under master seed `master`.
pub fn run_seed(master: u64, run: usize) -> u64 {
    splitmix64(master, run as u64)
}

/// Distinct keys for one run. `splitmix64(seed, i)` is a bijection of `i`,
/// so no key ever repeats within a run.
#[derive(Debug, Clone)]
pub struct KeyStream {
    seed: u64,
    next: u64,
}

impl KeyStream {
    pub fn new(seed: u64) -> Self {
        KeyStream { seed, next: 0 }
    }
}

impl Iterator for KeyStream {
    type Item = Key;

    fn next(&mut self) -> Option<Key> {
        let key = splitmix64(self.seed, self.next);
        self.next += 1;
        Some(key)
    }
}

pub fn build(structure: Structure, config: EmomaConfig) -> Result<Box<dyn Dictionary>, BenchError> {
    Ok(match structure {
        Structure::Baseline => Box::new(CuckooBaseline::new(config)?),
        Structure::Single | Structure::Double => Box::new(Emoma::new(config)?),
    })
}

/// Elements that must sit in the table for `load` to be reached.
pub fn target(capacity: usize, load: f64) -> usize {
    (load * capacity as f64).ceil() as usize
}

#[derive(Debug, Default, Clone, Copy)]
struct Tally {
    inserts: usize,
    iterations: usize,
    failed: bool,
}

impl Tally {
    fn mean(&self) -> f64 {
        if self.inserts == 0 {
            0.0
        } else {
            self.iterations as f64 / self.inserts as f64
        }
    }

    fn insert(&mut self, d: &mut dyn Dictionary, key: Key) -> Result<(), BenchError> {
        let out = d.insert(key, key)?;
        self.inserts += 1;
        self.iterations += out.iterations_used;
        self.failed |= out.failed;
        Ok(())
    }
}

/// Inserts keys until `target` elements are in the table (stash excluded).
fn fill(
    d: &mut dyn Dictionary,
    keys: &mut KeyStream,
    target: usize,
    live: &mut Vec<Key>,
) -> Result<Tally, BenchError> {
    let mut tally = Tally::default();
    while d.table_len() < target && !tally.failed {
        let key = keys.next().unwrap();
        tally.insert(d, key)?;
        live.push(key);
    }
    Ok(tally)
}

/// One live run with the record fields that do not depend on the
/// experiment's later phases.
struct Run {
    dict: Box<dyn Dictionary>,
    keys: KeyStream,
    live: Vec<Key>,
    config: EmomaConfig,
    started: Instant,
    run: usize,
    fill: Tally,
}

impl Run {
    fn start(
        spec: &ExperimentSpec,
        capacity: usize,
        run: usize,
        load: f64,
    ) -> Result<Self, BenchError> {
        let seed = run_seed(spec.seed, run);
        let config = spec.config(capacity, seed);
        let started = Instant::now();
        let mut dict = build(spec.structure, config.clone())?;
        let mut keys = KeyStream::new(seed);
        let mut live = Vec::new();
        let fill = fill(dict.as_mut(), &mut keys, target(capacity, load), &mut live)?;
        Ok(Run {
            dict,
            keys,
            live,
            config,
            started,
            run,
            fill,
        })
    }

    /// Removes a uniformly chosen live element and inserts a fresh one.
    fn replace(&mut self, rng: &mut ChaCha8Rng, tally: &mut Tally) -> Result<(), BenchError> {
        let i = rng.gen_range(0..self.live.len());
        let gone = self.live.swap_remove(i);
        let removed = self.dict.remove(gone);
        debug_assert!(removed, "live key missing");
        let key = self.keys.next().unwrap();
        tally.insert(self.dict.as_mut(), key)?;
        self.live.push(key);
        Ok(())
    }

    fn failed(&self) -> bool {
        self.dict.is_failed()
    }

    fn record(
        &self,
        experiment: Experiment,
        structure: Structure,
        avg: f64,
    ) -> Result<RunRecord, BenchError> {
        let failed = self.failed();
        if !failed {
            let report = self.dict.verify_invariants();
            if !report.is_clean() {
                return Err(BenchError::Invariant {
                    run: self.run,
                    violations: format!("{:?}", report.violations),
                });
            }
        }
        let m = self.dict.metrics();
        Ok(RunRecord {
            experiment,
            structure,
            capacity: self.dict.capacity(),
            seed: self.config.seed,
            p: self.config.p,
            k: self.config.k,
            t: self.config.t,
            bpe: self.config.bpe,
            run: self.run,
            max_stash: m.stash_watermark,
            final_stash: m.stash_len,
            h1_frac: m.h1_fraction(),
            h2_frac: m.h2_fraction(),
            avg_iterations: avg,
            failed,
            wall_time: self.started.elapsed(),
        })
    }
}

fn fill_record(
    spec: &ExperimentSpec,
    capacity: usize,
    run: usize,
) -> Result<RunRecord, BenchError> {
    let r = Run::start(spec, capacity, run, spec.load)?;
    r.record(spec.experiment, spec.structure, r.fill.mean())
}

fn parallel_runs<T: Send>(
    runs: usize,
    f: impl Fn(usize) -> Result<T, BenchError> + Sync + Send,
) -> Result<Vec<T>, BenchError> {
    (0..runs).into_par_iter().map(f).collect()
}

/// Fills `spec.runs` fresh dictionaries to `spec.load`.
pub fn run_fill(spec: &ExperimentSpec) -> Result<Vec<RunRecord>, BenchError> {
    run_fill_range(spec, 0..spec.runs)
}

/// Fill runs with the given run indices. Run `i` is identical to row `i` of
/// `run_fill` for the same spec.
pub fn run_fill_range(
    spec: &ExperimentSpec,
    runs: Range<usize>,
) -> Result<Vec<RunRecord>, BenchError> {
    spec.validate()?;
    runs.into_par_iter()
        .map(|run| fill_record(spec, spec.capacity, run))
        .collect()
}

/// Fill runs at every point of the P or k sweep. Rows are ordered by run
/// index, then sweep point; a run uses the same seed at every point.
pub fn run_sweeps(spec: &ExperimentSpec) -> Result<Vec<RunRecord>, BenchError> {
    spec.validate()?;
    let points: Vec<ExperimentSpec> = match spec.experiment {
        Experiment::SweepP => spec
            .p_list
            .iter()
            .map(|&p| ExperimentSpec { p, ..spec.clone() })
            .collect(),
        Experiment::SweepK => spec
            .k_list
            .iter()
            .map(|&k| ExperimentSpec {
                k: Some(k),
                ..spec.clone()
            })
            .collect(),
        other => {
            return Err(BenchError::InvalidSpec(format!(
                "{} is not a sweep",
                other.as_str()
            )))
        }
    };
    let jobs: Vec<(usize, &ExperimentSpec)> = (0..spec.runs)
        .flat_map(|run| points.iter().map(move |p| (run, p)))
        .collect();
    jobs.par_iter()
        .map(|&(run, point)| fill_record(point, point.capacity, run))
        .collect()
}

/// Mean of per-run maximum stash sizes for each sweep point, in sweep
/// order.
pub fn sweep_means(spec: &ExperimentSpec, records: &[RunRecord]) -> Vec<(f64, f64)> {
    let key = |r: &RunRecord| match spec.experiment {
        Experiment::SweepK => r.k as f64,
        _ => r.p,
    };
    let points: Vec<f64> = match spec.experiment {
        Experiment::SweepK => spec.k_list.iter().map(|&k| k as f64).collect(),
        _ => spec.p_list.clone(),
    };
    points
        .into_iter()
        .map(|x| {
            let hits: Vec<f64> = records
                .iter()
                .filter(|r| key(r) == x)
                .map(|r| r.max_stash as f64)
                .collect();
            (x, hits.iter().sum::<f64>() / hits.len().max(1) as f64)
        })
        .collect()
}

/// Fill, then `spec.replacements` remove-then-insert pairs split into
/// equal windows. One row per run and window.
pub fn run_churn(spec: &ExperimentSpec) -> Result<Vec<ChurnRecord>, BenchError> {
    spec.validate()?;
    let per_run = parallel_runs(spec.runs, |run| churn_one(spec, run))?;
    Ok(per_run.into_iter().flatten().collect())
}

fn churn_one(spec: &ExperimentSpec, run: usize) -> Result<Vec<ChurnRecord>, BenchError> {
    let mut r = Run::start(spec, spec.capacity, run, spec.load)?;
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(r.config.seed, VICTIM_TAG));
    let mut tally = Tally::default();
    let mut windows = Vec::new();
    let fill_mark = r.dict.stash_watermark();
    if spec.replacements > 0 && !r.failed() {
        for w in 0..CHURN_WINDOWS {
            let len = window_len(spec.replacements, CHURN_WINDOWS, w);
            r.dict.reset_stash_watermark();
            for _ in 0..len {
                if r.failed() {
                    break;
                }
                r.replace(&mut rng, &mut tally)?;
            }
            windows.push(r.dict.stash_watermark());
            if r.failed() {
                break;
            }
        }
    }
    let avg = if windows.is_empty() {
        r.fill.mean()
    } else {
        tally.mean()
    };
    let mut base = r.record(spec.experiment, spec.structure, avg)?;
    if windows.is_empty() {
        return Ok(vec![ChurnRecord {
            run: base,
            window: None,
            window_max_stash: None,
        }]);
    }
    // Per-window resets lose the fill peak.
    base.max_stash = windows.iter().copied().fold(fill_mark, usize::max);
    Ok(windows
        .into_iter()
        .enumerate()
        .map(|(w, m)| ChurnRecord {
            run: base.clone(),
            window: Some(w),
            window_max_stash: Some(m),
        })
        .collect())
}

/// Length of window `w` when `total` items are split into `n` windows; the
/// remainder goes to the last window.
fn window_len(total: usize, n: usize, w: usize) -> usize {
    let base = total / n;
    if w + 1 == n {
        total - base * (n - 1)
    } else {
        base
    }
}

/// For every `t` and load point: fill, then capacity/8 fresh insertions via
/// the replacement process. Rows are ordered by `t`, load, then run.
pub fn run_itertime(spec: &ExperimentSpec) -> Result<Vec<IterRecord>, BenchError> {
    spec.validate()?;
    let mut jobs = Vec::new();
    for &t in &spec.t_list {
        for &load in &spec.loads {
            for run in 0..spec.runs {
                jobs.push((t, load, run));
            }
        }
    }
    jobs.par_iter()
        .map(|&(t, load, run)| itertime_one(&ExperimentSpec { t, ..spec.clone() }, load, run))
        .collect()
}

/// Fresh insertions measured per itertime point.
pub fn fresh_insertions(capacity: usize) -> usize {
    capacity / ITERTIME_FRACTION
}

fn itertime_one(spec: &ExperimentSpec, load: f64, run: usize) -> Result<IterRecord, BenchError> {
    let fill_spec = ExperimentSpec {
        t: ITERTIME_FILL_T,
        ..spec.clone()
    };
    let mut r = Run::start(&fill_spec, spec.capacity, run, load)?;
    r.dict.set_max_iterations(spec.t);
    r.config.t = spec.t;
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(r.config.seed, VICTIM_TAG));
    let mut tally = Tally::default();
    let mut window_stash = Vec::new();
    let fresh = fresh_insertions(spec.capacity);
    if !r.failed() {
        r.dict.reset_stash_watermark();
        'windows: for w in 0..ITERTIME_WINDOWS {
            for _ in 0..window_len(fresh, ITERTIME_WINDOWS, w) {
                if r.failed() {
                    break 'windows;
                }
                r.replace(&mut rng, &mut tally)?;
            }
            window_stash.push(r.dict.stash_len());
        }
    }
    let mean = tally.mean();
    let run_record = r.record(Experiment::Itertime, spec.structure, mean)?;
    Ok(IterRecord {
        run: run_record,
        load,
        mean_iterations: mean,
        window_stash,
    })
}

/// Fill runs at every size. Rows are ordered by size, then run.
pub fn run_scaling(spec: &ExperimentSpec) -> Result<Vec<RunRecord>, BenchError> {
    spec.validate()?;
    let jobs: Vec<(usize, usize)> = spec
        .sizes
        .iter()
        .flat_map(|&size| (0..spec.runs).map(move |run| (size, run)))
        .collect();
    jobs.par_iter()
        .map(|&(size, run)| fill_record(spec, size, run))
        .collect()
}

/// Watermark statistics for one table size.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingSummary {
    pub capacity: usize,
    pub runs: usize,
    pub mean: f64,
    pub max: usize,
    /// `histogram[w]` = number of runs whose maximum stash size was `w`.
    pub histogram: Vec<usize>,
}

pub fn scaling_summary(records: &[RunRecord]) -> Vec<ScalingSummary> {
    let mut sizes: Vec<usize> = records.iter().map(|r| r.capacity).collect();
    sizes.dedup();
    sizes
        .into_iter()
        .map(|capacity| {
            let marks: Vec<usize> = records
                .iter()
                .filter(|r| r.capacity == capacity)
                .map(|r| r.max_stash)
                .collect();
            let max = marks.iter().copied().max().unwrap_or(0);
            let mut histogram = vec![0; max + 1];
            for &m in &marks {
                histogram[m] += 1;
            }
            ScalingSummary {
                capacity,
                runs: marks.len(),
                mean: marks.iter().sum::<usize>() as f64 / marks.len().max(1) as f64,
                max,
                histogram,
            }
        })
        .collect()
}

/// Least-squares slope of `y` against `x`.
pub fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn small(experiment: Experiment) -> ExperimentSpec {
        let mut s = ExperimentSpec::new(experiment, false);
        s.capacity = 1 << 10;
        s.runs = 3;
        s.replacements = 320;
        s.sizes = vec![1 << 10, 1 << 11];
        s.t_list = vec![10, 100];
        s.loads = vec![0.5, 0.9];
        s.p_list = vec![0.5, 1.0];
        s.k_list = vec![1, 3];
        s
    }

    #[test]
    fn key_stream_is_distinct() {
        let keys: HashSet<Key> = KeyStream::new(5).take(100_000).collect();
        assert_eq!(keys.len(), 100_000);
    }

    #[test]
    fn window_lengths_cover_total() {
        for total in [0, 1, 15, 16, 17, 1000] {
            let sum: usize = (0..16).map(|w| window_len(total, 16, w)).sum();
            assert_eq!(sum, total);
        }
    }

    #[test]
    fn half_load_fill_is_easy() {
        let mut s = small(Experiment::Fill);
        s.load = 0.5;
        s.capacity = 1 << 15;
        for r in run_fill(&s).unwrap() {
            assert!(!r.failed);
            assert!(r.max_stash <= 2, "{r:?}");
            assert!((r.h1_frac + r.h2_frac - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn fill_records_are_ordered_and_complete() {
        for structure in [Structure::Single, Structure::Double, Structure::Baseline] {
            let s = ExperimentSpec {
                structure,
                ..small(Experiment::Fill)
            };
            let records = run_fill(&s).unwrap();
            assert_eq!(
                records.iter().map(|r| r.run).collect::<Vec<_>>(),
                vec![0, 1, 2]
            );
            for r in &records {
                assert!(!r.failed);
                assert_eq!(r.seed, run_seed(s.seed, r.run));
            }
        }
    }

    #[test]
    fn sweeps_order_by_run_then_point() {
        let s = small(Experiment::SweepK);
        let records = run_sweeps(&s).unwrap();
        let order: Vec<(usize, usize)> = records.iter().map(|r| (r.run, r.k)).collect();
        assert_eq!(order, vec![(0, 1), (0, 3), (1, 1), (1, 3), (2, 1), (2, 3)]);
        let means = sweep_means(&s, &records);
        assert_eq!(means.len(), 2);
        let p = small(Experiment::SweepP);
        let records = run_sweeps(&p).unwrap();
        assert!(records.iter().all(|r| r.k == 4));
        assert_eq!(
            sweep_means(&p, &records)
                .iter()
                .map(|m| m.0)
                .collect::<Vec<_>>(),
            vec![0.5, 1.0]
        );
    }

    #[test]
    fn churn_windows() {
        let s = small(Experiment::Churn);
        let records = run_churn(&s).unwrap();
        assert_eq!(records.len(), 3 * CHURN_WINDOWS);
        assert!(records.iter().all(|r| r.window.is_some() && !r.run.failed));
        let none = run_churn(&ExperimentSpec {
            replacements: 0,
            ..s
        })
        .unwrap();
        assert_eq!(none.len(), 3);
        assert!(none.iter().all(|r| r.window.is_none()));
    }

    #[test]
    fn itertime_at_half_load_is_immediate() {
        let s = small(Experiment::Itertime);
        let records = run_itertime(&s).unwrap();
        assert_eq!(records.len(), 2 * 2 * 3);
        for r in &records {
            assert_eq!(r.window_stash.len(), ITERTIME_WINDOWS);
            if r.load == 0.5 {
                assert!(r.mean_iterations < 1.2, "{r:?}");
            }
        }
    }

    #[test]
    fn scaling_summary_counts_runs() {
        let s = small(Experiment::Scaling);
        let records = run_scaling(&s).unwrap();
        let summary = scaling_summary(&records);
        assert_eq!(summary.len(), 2);
        for row in summary {
            assert_eq!(row.runs, 3);
            assert_eq!(row.histogram.iter().sum::<usize>(), 3);
            assert!(row.histogram[row.max] > 0);
        }
        let one = run_scaling(&ExperimentSpec {
            runs: 1,
            sizes: vec![1 << 10],
            ..s
        })
        .unwrap();
        let summary = scaling_summary(&one);
        assert_eq!(summary[0].histogram.iter().filter(|&&c| c > 0).count(), 1);
    }

    #[test]
    fn slope_of_a_line() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, 2.0 + 0.5 * i as f64)).collect();
        assert!((slope(&pts) - 0.5).abs() < 1e-12);
    }
}
