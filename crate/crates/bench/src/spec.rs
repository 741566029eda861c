use clap::ValueEnum;
use emoma::{EmomaConfig, Mode};

use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Experiment {
    SweepP,
    SweepK,
    Fill,
    Churn,
    Itertime,
    Scaling,
}

impl Experiment {
    pub fn as_str(self) -> &'static str {
        match self {
            Experiment::SweepP => "sweep_p",
            Experiment::SweepK => "sweep_k",
            Experiment::Fill => "fill",
            Experiment::Churn => "churn",
            Experiment::Itertime => "itertime",
            Experiment::Scaling => "scaling",
        }
    }
}

/// Which dictionary a run drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, ValueEnum)]
pub enum Structure {
    Single,
    Double,
    Baseline,
}

impl Structure {
    pub fn as_str(self) -> &'static str {
        match self {
            Structure::Single => "single",
            Structure::Double => "double",
            Structure::Baseline => "baseline",
        }
    }

    /// Table layout; the baseline uses one shared table.
    pub fn mode(self) -> Mode {
        match self {
            Structure::Double => Mode::Double,
            Structure::Single | Structure::Baseline => Mode::Single,
        }
    }
}

pub const DEFAULT_LOADS: [f64; 7] = [0.5, 0.6, 0.7, 0.8, 0.85, 0.9, 0.95];

/// Everything needed to reproduce one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub structure: Structure,
    /// Table capacity in elements (four per bucket).
    pub capacity: usize,
    pub bpe: usize,
    /// `None` keeps the per-mode default (3 single, 4 double).
    pub k: Option<usize>,
    pub p: f64,
    pub t: usize,
    pub stash: usize,
    /// Fill target for fill, churn, sweeps and scaling.
    pub load: f64,
    /// Load grid for itertime.
    pub loads: Vec<f64>,
    pub runs: usize,
    pub replacements: usize,
    pub sizes: Vec<usize>,
    pub t_list: Vec<usize>,
    pub p_list: Vec<f64>,
    pub k_list: Vec<usize>,
    pub seed: u64,
}

impl ExperimentSpec {
    /// Desk-scale defaults; `extended` switches to the large settings
    /// (8M-element tables, 10000 scaling runs).
    pub fn new(experiment: Experiment, extended: bool) -> Self {
        let big = if extended { 1 << 23 } else { 1 << 20 };
        let capacity = match experiment {
            Experiment::Churn | Experiment::Itertime => big,
            _ => 1 << 15,
        };
        let runs = match experiment {
            Experiment::Churn => 10,
            Experiment::Itertime => 1,
            Experiment::Scaling if extended => 10_000,
            _ => 1000,
        };
        let top = if extended { 1 << 23 } else { 1 << 19 };
        ExperimentSpec {
            experiment,
            structure: Structure::Single,
            capacity,
            bpe: 4,
            k: (experiment == Experiment::SweepP).then_some(4),
            p: 0.99,
            t: 100,
            stash: 64,
            load: 0.95,
            loads: DEFAULT_LOADS.to_vec(),
            runs,
            replacements: 2 * capacity,
            sizes: (15..)
                .map(|s| 1usize << s)
                .take_while(|&s| s <= top)
                .collect(),
            t_list: vec![10, 50, 100, 500],
            p_list: vec![0.0, 0.5, 0.9, 0.95, 0.99, 1.0],
            k_list: (1..=8).collect(),
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let fail = |m: &str| Err(BenchError::InvalidSpec(m.to_string()));
        if self.runs == 0 {
            return fail("runs must be at least 1");
        }
        let in_range = |l: f64| l > 0.0 && l <= 1.0;
        if !in_range(self.load) || !self.loads.iter().copied().all(in_range) {
            return fail("loads must lie in (0, 1]");
        }
        let empty = match self.experiment {
            Experiment::SweepP => self.p_list.is_empty(),
            Experiment::SweepK => self.k_list.is_empty(),
            Experiment::Itertime => self.t_list.is_empty() || self.loads.is_empty(),
            Experiment::Scaling => self.sizes.is_empty(),
            Experiment::Fill | Experiment::Churn => false,
        };
        if empty {
            return fail("sweep list is empty");
        }
        if self.experiment == Experiment::Scaling
            && (!self.sizes.iter().all(|s| s.is_power_of_two())
                || !self.sizes.windows(2).all(|w| w[0] < w[1]))
        {
            return fail("sizes must be ascending powers of two");
        }
        // Surface configuration errors before any run starts.
        let capacities: Vec<usize> = match self.experiment {
            Experiment::Scaling => self.sizes.clone(),
            _ => vec![self.capacity],
        };
        for capacity in capacities {
            self.config(capacity, self.seed).validate()?;
        }
        Ok(())
    }

    /// Dictionary configuration for one run.
    pub fn config(&self, capacity: usize, seed: u64) -> EmomaConfig {
        let mut c = EmomaConfig::with_capacity(self.structure.mode(), capacity).seed(seed);
        c.bpe = self.bpe;
        if let Some(k) = self.k {
            c.k = k;
        }
        c.p = self.p;
        c.t = self.t;
        c.stash_capacity = self.stash;
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for e in [
            Experiment::SweepP,
            Experiment::SweepK,
            Experiment::Fill,
            Experiment::Churn,
            Experiment::Itertime,
            Experiment::Scaling,
        ] {
            ExperimentSpec::new(e, false).validate().unwrap();
            ExperimentSpec::new(e, true).validate().unwrap();
        }
    }

    #[test]
    fn extended_defaults_reach_large_tables() {
        let s = ExperimentSpec::new(Experiment::Scaling, true);
        assert_eq!(*s.sizes.last().unwrap(), 1 << 23);
        assert_eq!(s.runs, 10_000);
        assert_eq!(
            ExperimentSpec::new(Experiment::Churn, true).capacity,
            1 << 23
        );
        assert_eq!(
            ExperimentSpec::new(Experiment::Scaling, false).sizes.len(),
            5
        );
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = ExperimentSpec::new(Experiment::Fill, false);
        s.runs = 0;
        assert!(s.validate().is_err());
        let mut s = ExperimentSpec::new(Experiment::Fill, false);
        s.load = 1.5;
        assert!(s.validate().is_err());
        let mut s = ExperimentSpec::new(Experiment::SweepK, false);
        s.k_list.clear();
        assert!(s.validate().is_err());
        let mut s = ExperimentSpec::new(Experiment::Scaling, false);
        s.sizes = vec![1 << 16, 1 << 15];
        assert!(s.validate().is_err());
        let mut s = ExperimentSpec::new(Experiment::Fill, false);
        s.capacity = 1000;
        assert!(s.validate().is_err());
    }
}
