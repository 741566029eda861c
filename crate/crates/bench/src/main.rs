use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use emoma_bench::experiments::{fresh_insertions, ITERTIME_FILL_T, ITERTIME_WINDOWS};
use emoma_bench::{
    emit_csv, run_churn, run_fill, run_itertime, run_scaling, run_sweeps, scaling_summary,
    sweep_means, BenchError, Experiment, ExperimentSpec, Structure,
};

/// Runs one experiment and writes its rows as CSV.
#[derive(Debug, Parser)]
#[command(name = "emoma-bench", version)]
struct Cli {
    experiment: Experiment,
    #[arg(long, value_enum, default_value = "single")]
    mode: Structure,
    /// Table capacity in elements.
    #[arg(long)]
    capacity: Option<usize>,
    /// Filter bits per table cell.
    #[arg(long)]
    bpe: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    /// Maximum iterations per insertion.
    #[arg(long)]
    t: Option<usize>,
    /// Stash capacity.
    #[arg(long)]
    stash: Option<usize>,
    /// Fill target; for itertime, a single-point load grid.
    #[arg(long)]
    load: Option<f64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Remove-then-insert pairs after the fill (churn).
    #[arg(long)]
    replacements: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    t_list: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    p_list: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    k_list: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Large tables and run counts.
    #[arg(long)]
    extended: bool,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Cli {
    fn spec(&self) -> ExperimentSpec {
        let mut s = ExperimentSpec::new(self.experiment, self.extended);
        s.structure = self.mode;
        if let Some(c) = self.capacity {
            s.capacity = c;
            s.replacements = 2 * c;
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &self.$field {
                    s.$field = v.clone();
                }
            )*};
        }
        set!(
            bpe,
            p,
            t,
            stash,
            runs,
            replacements,
            sizes,
            t_list,
            p_list,
            k_list,
            seed
        );
        if self.k.is_some() {
            s.k = self.k;
        }
        if let Some(l) = self.load {
            s.load = l;
            s.loads = vec![l];
        }
        s
    }
}

fn itertime_note(spec: &ExperimentSpec) -> String {
    format!(
        "itertime: {} fresh insertions per point (capacity/8) in {} windows, \
         replacing a fixed 1M count at 8M capacity; fill at t={}, stash capacity {}\n",
        fresh_insertions(spec.capacity),
        ITERTIME_WINDOWS,
        ITERTIME_FILL_T,
        spec.stash
    )
}

fn meta_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta");
    PathBuf::from(name)
}

fn run(cli: &Cli) -> Result<(), BenchError> {
    let spec = cli.spec();
    let out = cli.out.as_deref();
    match spec.experiment {
        Experiment::Fill => emit_csv(&run_fill(&spec)?, out),
        Experiment::SweepP | Experiment::SweepK => {
            let records = run_sweeps(&spec)?;
            emit_csv(&records, out)?;
            for (x, mean) in sweep_means(&spec, &records) {
                eprintln!("{x}\tmean max stash {mean:.3}");
            }
            Ok(())
        }
        Experiment::Churn => emit_csv(&run_churn(&spec)?, out),
        Experiment::Itertime => {
            let records = run_itertime(&spec)?;
            emit_csv(&records, out)?;
            let note = itertime_note(&spec);
            match out {
                Some(path) => fs::write(meta_path(path), note)?,
                None => eprint!("{note}"),
            }
            Ok(())
        }
        Experiment::Scaling => {
            let records = run_scaling(&spec)?;
            emit_csv(&records, out)?;
            for row in scaling_summary(&records) {
                eprintln!(
                    "{}\truns {}\tmean {:.3}\tmax {}\thistogram {:?}",
                    row.capacity, row.runs, row.mean, row.max, row.histogram
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("emoma-bench: {e}");
            ExitCode::FAILURE
        }
    }
}
