//! Parallel drivers for cross-validation and chance estimation.
//!
//! Work items are indexed and collected in index order, and the first error
//! reported is the one with the lowest index, so results and failures do not
//! depend on the thread count.

use errp_core::eval::{self, ChanceLevel, CvResult, FoldPlan, Hyperparams, Method};
use errp_core::signal::EpochSet;
use rayon::prelude::*;
use rayon::ThreadPool;

use crate::error::{CliError, Result};

/// A pool of `threads` workers; 0 uses rayon's default.
pub fn pool(threads: usize) -> Result<ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| CliError::Internal(format!("thread pool: {e}")))
}

fn first_error<T>(items: Vec<errp_core::Result<T>>) -> errp_core::Result<Vec<T>> {
    items.into_iter().collect()
}

pub fn run_cv(pool: &ThreadPool, set: &EpochSet, method: Method, plan: &FoldPlan, hp: &Hyperparams) -> Result<CvResult> {
    eval::check_plan(set, plan)?;
    let splits: Vec<(usize, usize)> = plan.splits().collect();
    let outcomes =
        pool.install(|| splits.par_iter().map(|&(rep, fold)| eval::evaluate_fold(set, method, plan, rep, fold, hp)).collect::<Vec<_>>());
    Ok(CvResult::from_outcomes(method, plan, first_error(outcomes)?)?)
}

/// Parallel counterpart of [`eval::chance_level`], equal to it bit for bit.
pub fn chance_level(
    pool: &ThreadPool,
    set: &EpochSet,
    k: usize,
    r: usize,
    seed: u64,
    n_shuffles: usize,
    hp: &Hyperparams,
) -> Result<ChanceLevel> {
    let means = pool.install(|| {
        (0..n_shuffles)
            .into_par_iter()
            .map(|i| {
                let (shuffled, plan) = eval::shuffle_case(set, k, r, seed, i)?;
                Ok(eval::run_cv(&shuffled, Method::Benchmark, &plan, hp)?.mean())
            })
            .collect::<Vec<_>>()
    });
    Ok(ChanceLevel::from_means(first_error(means)?)?)
}
