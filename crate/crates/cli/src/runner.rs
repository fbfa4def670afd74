//! Bounded-parallel execution of parameter sweeps.
//!
//! Jobs are laid out in their canonical (point, seed) order before any of
//! them runs, and results come back in that same order no matter how the
//! pool interleaves them, so output files never depend on scheduling. A
//! failing job is recorded and skipped; the sweep keeps going.

use rayon::prelude::*;

use crate::output::Failure;

/// Runs `run` over all jobs on a pool of `threads` workers.
///
/// Returns the successes as `(job index, value)` in job order, plus the
/// failures (described through `describe`) in job order.
pub fn run_jobs<J, V>(
    threads: usize,
    jobs: &[J],
    run: impl Fn(&J) -> Result<V, String> + Sync,
    describe: impl Fn(&J) -> (String, u64),
) -> Result<(Vec<(usize, V)>, Vec<Failure>), String>
where
    J: Sync,
    V: Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| format!("worker pool: {e}"))?;
    let outcomes: Vec<Result<V, String>> =
        pool.install(|| jobs.par_iter().map(&run).collect());
    let mut ok = Vec::with_capacity(jobs.len());
    let mut failures = Vec::new();
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(v) => ok.push((i, v)),
            Err(error) => {
                let (point, seed) = describe(&jobs[i]);
                eprintln!("job failed at {point}, seed {seed}: {error}");
                failures.push(Failure { point, seed, error });
            }
        }
    }
    Ok((ok, failures))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn results_keep_job_order_regardless_of_threads() {
        let jobs: Vec<u64> = (0..40).collect();
        let run = |j: &u64| -> Result<u64, String> {
            // stagger finish times so completion order scrambles
            std::thread::sleep(std::time::Duration::from_micros(1000 - 20 * *j));
            Ok(j * j)
        };
        let describe = |j: &u64| (format!("job {j}"), *j);
        let (serial, _) = run_jobs(1, &jobs, run, describe).unwrap();
        let (parallel, _) = run_jobs(4, &jobs, run, describe).unwrap();
        assert_eq!(serial, parallel);
        assert_eq!(serial[5], (5, 25));
    }

    #[test]
    fn failures_are_recorded_and_skipped() {
        let jobs: Vec<u64> = (0..6).collect();
        let run = |j: &u64| {
            if j % 3 == 1 {
                Err(format!("seed {j} broke"))
            } else {
                Ok(*j)
            }
        };
        let (ok, failures) = run_jobs(2, &jobs, run, |j| ("p".into(), *j)).unwrap();
        assert_eq!(ok.iter().map(|(i, _)| *i).collect::<Vec<_>>(), vec![0, 2, 3, 5]);
        assert_eq!(failures.len(), 2);
        assert_eq!(failures[0].seed, 1);
        assert!(failures[1].error.contains("seed 4"));
    }
}
