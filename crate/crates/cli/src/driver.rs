//! The parallel Monte Carlo driver: replications of the empirical-size study
//! with deterministic per-replication substreams, optional checkpointing, and
//! schedule-independent aggregation.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use kboot::bootstrap::{
    critical_value, double_bootstrap, empirical_bootstrap_draws, wild_bootstrap_draws,
    MultiplierLaw,
};
use kboot::rng::Stream;
use kboot::sampling::{sample_copula_gamma, sample_gaussian, Case, DataMatrix};
use kboot::stats::{kth_order_stat, normalized_sum};

use crate::checkpoint::{config_hash, CellProgress, Checkpoint};
use crate::config::{ExperimentConfig, Method};
use crate::table::{SizeRow, SizeTable};
use crate::HarnessError;

// Stream roles below one replication.
const ROLE_DATA: u64 = 0;

/// Rejection indicators and per-method timings of a single replication.
struct RepOutcome {
    rep: u32,
    rejects: Vec<bool>,
    seconds: Vec<f64>,
}

fn draw_data(cfg: &ExperimentConfig, seed: u64) -> Result<DataMatrix, HarnessError> {
    let spec = cfg.design.correlation_spec(cfg.d, cfg.rho);
    let case = cfg.case.to_case();
    let data = if case == Case::Gaussian {
        sample_gaussian(cfg.n, &spec, seed)
    } else {
        sample_copula_gamma(cfg.n, &spec, cfg.theta, case, seed)
    };
    data.map_err(|e| HarnessError::Runtime(format!("data draw failed: {e}")))
}

fn method_law(cfg: &ExperimentConfig, m: Method) -> Option<MultiplierLaw> {
    match m {
        Method::GB => Some(MultiplierLaw::Gaussian),
        Method::MB => Some(MultiplierLaw::Mammen),
        Method::RB => Some(MultiplierLaw::Rademacher),
        Method::BB => Some(MultiplierLaw::Beta { nu: cfg.beta_nu }),
        Method::EB | Method::DB => None,
    }
}

fn run_replication(cfg: &ExperimentConfig, cell_stream: Stream, rep: u32) -> RepOutcome {
    let rep_stream = cell_stream.child(rep as u64);
    let data = draw_data(cfg, rep_stream.child(ROLE_DATA).key()).expect("validated config");
    let t_obs = kth_order_stat(&normalized_sum(&data).s, cfg.k).expect("validated k");

    let mut rejects = Vec::with_capacity(cfg.methods.len());
    let mut seconds = Vec::with_capacity(cfg.methods.len());
    for &m in &cfg.methods {
        let start = Instant::now();
        let method_stream = rep_stream.child(m.stream_role());
        let critical = match m {
            Method::EB => {
                let draws = empirical_bootstrap_draws(&data, cfg.b1, cfg.k, method_stream)
                    .expect("validated config");
                critical_value(&draws, 1.0 - cfg.alpha).expect("b1 >= 1")
            }
            Method::DB => {
                let out = double_bootstrap(
                    &data,
                    cfg.db_law1.to_law(cfg.beta_nu),
                    cfg.db_law2.to_law(cfg.beta_nu),
                    cfg.b1,
                    cfg.b2,
                    cfg.alpha,
                    cfg.k,
                    method_stream,
                )
                .expect("validated config");
                out.critical
            }
            _ => {
                let law = method_law(cfg, m).expect("wild method");
                let draws = wild_bootstrap_draws(&data, law, cfg.b1, cfg.k, method_stream)
                    .expect("validated config");
                critical_value(&draws, 1.0 - cfg.alpha).expect("b1 >= 1")
            }
        };
        rejects.push(t_obs >= critical);
        seconds.push(start.elapsed().as_secs_f64());
    }
    RepOutcome { rep, rejects, seconds }
}

fn cell_rows(cfg: &ExperimentConfig, progress: &CellProgress) -> Vec<SizeRow> {
    cfg.methods
        .iter()
        .map(|m| {
            let rejects = progress.rejects.get(m.name()).map_or(0, |v| v.len());
            let rate = rejects as f64 / cfg.reps as f64;
            SizeRow {
                design: cfg.design,
                case: cfg.case,
                n: cfg.n,
                rho: cfg.rho,
                method: *m,
                k: cfg.k,
                alpha: cfg.alpha,
                reps: cfg.reps,
                rate,
                se: (rate * (1.0 - rate) / cfg.reps as f64).sqrt(),
                runtime_s: progress.runtime_s.get(m.name()).copied().unwrap_or(0.0),
            }
        })
        .collect()
}

fn run_cell(
    cfg: &ExperimentConfig,
    progress: &mut CellProgress,
    mut on_chunk: impl FnMut(&CellProgress) -> Result<(), HarnessError>,
) -> Result<(), HarnessError> {
    cfg.validate()?;
    let cell_stream = Stream::new(cfg.master_seed).child_named(&cfg.cell_key());
    let done: std::collections::BTreeSet<u32> = progress.completed.iter().copied().collect();
    let pending: Vec<u32> = (0..cfg.reps as u32).filter(|r| !done.contains(r)).collect();
    for chunk in pending.chunks(cfg.checkpoint_every) {
        let outcomes: Vec<RepOutcome> = chunk
            .par_iter()
            .map(|&rep| run_replication(cfg, cell_stream, rep))
            .collect();
        for out in outcomes {
            progress.completed.push(out.rep);
            for (i, &m) in cfg.methods.iter().enumerate() {
                if out.rejects[i] {
                    progress.rejects.entry(m.name().to_string()).or_default().push(out.rep);
                }
                *progress.runtime_s.entry(m.name().to_string()).or_default() += out.seconds[i];
            }
        }
        progress.completed.sort_unstable();
        for v in progress.rejects.values_mut() {
            v.sort_unstable();
        }
        on_chunk(progress)?;
    }
    Ok(())
}

/// Run every cell of a sweep, optionally checkpointed, inside a thread pool
/// sized by the first cell's `threads` field (0 = rayon default). The final
/// table is a pure function of (config, master_seed) regardless of the
/// schedule; wall-clock runtimes are reported but excluded from that
/// contract.
pub fn run_sweep(
    cells: &[ExperimentConfig],
    checkpoint_path: Option<&Path>,
) -> Result<SizeTable, HarnessError> {
    if cells.is_empty() {
        return Err(HarnessError::Config("no cells to run".into()));
    }
    for c in cells {
        c.validate()?;
    }
    let threads = cells[0].threads;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Runtime(format!("thread pool: {e}")))?;
    pool.install(|| run_sweep_inner(cells, checkpoint_path))
}

fn run_sweep_inner(
    cells: &[ExperimentConfig],
    checkpoint_path: Option<&Path>,
) -> Result<SizeTable, HarnessError> {
    let keys: Vec<String> = cells.iter().map(|c| c.cell_key()).collect();
    let hash = config_hash(&keys);
    let mut checkpoint = match checkpoint_path {
        Some(p) => Checkpoint::load(p, &hash)?.unwrap_or_else(|| Checkpoint::new(hash.clone())),
        None => Checkpoint::new(hash.clone()),
    };

    let mut table = SizeTable::default();
    for (cfg, key) in cells.iter().zip(&keys) {
        let mut progress = checkpoint.cells.get(key).cloned().unwrap_or_default();
        run_cell(cfg, &mut progress, |p| {
            if let Some(path) = checkpoint_path {
                checkpoint.cells.insert(key.clone(), p.clone());
                checkpoint.save(path)?;
            }
            Ok(())
        })?;
        checkpoint.cells.insert(key.clone(), progress.clone());
        if let Some(path) = checkpoint_path {
            checkpoint.save(path)?;
        }
        table.rows.extend(cell_rows(cfg, &progress));
    }
    table.sort();
    Ok(table)
}

/// Single-cell convenience wrapper.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SizeTable, HarnessError> {
    run_sweep(std::slice::from_ref(cfg), None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{CaseName, Design, MultiplierName};

    fn tiny_cfg() -> ExperimentConfig {
        ExperimentConfig {
            design: Design::I,
            rho: 0.2,
            n: 40,
            d: 8,
            k: 2,
            case: CaseName::Asymmetric,
            theta: 1.0,
            methods: vec![Method::EB, Method::GB, Method::RB, Method::DB],
            alpha: 0.1,
            b1: 49,
            b2: 9,
            reps: 24,
            master_seed: 11,
            threads: 0,
            beta_nu: 0.1,
            db_law1: MultiplierName::Gaussian,
            db_law2: MultiplierName::Beta,
            checkpoint_every: 7,
        }
    }

    #[test]
    fn thread_counts_give_identical_tables() {
        let mut a = tiny_cfg();
        a.threads = 1;
        let mut b = tiny_cfg();
        b.threads = 4;
        let ta = run_experiment(&a).unwrap();
        let tb = run_experiment(&b).unwrap();
        assert_eq!(
            ta.to_csv_string_deterministic(),
            tb.to_csv_string_deterministic()
        );
    }

    #[test]
    fn checkpoint_resume_reproduces_table() {
        let dir = std::env::temp_dir().join(format!("kboot-drv-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("cp.json");
        let cfg = tiny_cfg();
        let full = run_experiment(&cfg).unwrap();

        // run only the first chunk by checkpointing, then abandon and resume
        let keys = vec![cfg.cell_key()];
        let hash = config_hash(&keys);
        let mut partial = Checkpoint::new(hash.clone());
        let cell_stream = Stream::new(cfg.master_seed).child_named(&cfg.cell_key());
        let mut progress = CellProgress::default();
        for rep in 0..10u32 {
            let out = run_replication(&cfg, cell_stream, rep);
            progress.completed.push(out.rep);
            for (i, &m) in cfg.methods.iter().enumerate() {
                if out.rejects[i] {
                    progress.rejects.entry(m.name().into()).or_default().push(out.rep);
                }
                *progress.runtime_s.entry(m.name().into()).or_default() += out.seconds[i];
            }
        }
        partial.cells.insert(cfg.cell_key(), progress);
        partial.save(&path).unwrap();

        let resumed = run_sweep(std::slice::from_ref(&cfg), Some(&path)).unwrap();
        assert_eq!(
            resumed.to_csv_string_deterministic(),
            full.to_csv_string_deterministic()
        );
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn degenerate_methods_have_distinct_streams() {
        // two methods on the same replication must not share multipliers:
        // identical data, different critical values almost surely
        let mut cfg = tiny_cfg();
        cfg.methods = vec![Method::GB, Method::MB];
        cfg.reps = 4;
        let t = run_experiment(&cfg).unwrap();
        assert_eq!(t.rows.len(), 2);
    }

    #[test]
    fn gaussian_case_runs() {
        let mut cfg = tiny_cfg();
        cfg.case = CaseName::Gaussian;
        cfg.theta = f64::NAN;
        cfg.methods = vec![Method::GB];
        cfg.reps = 8;
        let t = run_experiment(&cfg).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert!(t.rows[0].rate >= 0.0 && t.rows[0].rate <= 1.0);
    }
}
