//! Wall-clock benchmarks of the generation engines.

use std::time::Instant;

use crate::engines::{Algo, GenParams, Generator};
use crate::error::{Error, Result};
use crate::stats::median;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub algo: Algo,
    pub n: u64,
    pub workers: usize,
    pub threshold: usize,
    pub seed: u64,
    pub repeat: usize,
    pub seconds: f64,
    pub median_seconds: f64,
    pub nodes: u64,
    pub nodes_per_sec: f64,
}

impl BenchRow {
    pub const CSV_HEADER: &'static str =
        "algo,n,workers,threshold,seed,repeat,seconds,median_seconds,nodes,nodes_per_sec";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.6},{:.6},{},{:.0}",
            self.algo.name(),
            self.n,
            self.workers,
            self.threshold,
            self.seed,
            self.repeat,
            self.seconds,
            self.median_seconds,
            self.nodes,
            self.nodes_per_sec
        )
    }
}

/// Generation parameters for one benchmark cell.
pub fn bench_params(algo: Algo, n: u64, workers: usize, threshold: usize) -> GenParams {
    let pooled = matches!(algo, Algo::Parallel | Algo::Hybrid);
    GenParams {
        algo,
        threshold,
        hybrid_switch: threshold.max(1024),
        workers: if pooled { workers } else { 1 },
        max_nodes: 2 * n,
        ..GenParams::default()
    }
}

/// First seed from `start` whose tree has between `n/2` and `2n` nodes.
/// Free critical trees are mostly tiny, so a size target needs a search.
pub fn find_seed(params: &GenParams, n: u64, start: u64, max_tries: u64) -> Result<(u64, u64)> {
    let mut p = params.clone();
    p.max_nodes = 2 * n;
    let mut gen = Generator::new(p)?;
    for seed in start..start.saturating_add(max_tries) {
        gen.set_seed(seed);
        let outcome = gen.generate()?;
        let size = outcome.nodes_generated;
        if let Some(tree) = outcome.into_tree() {
            if size >= n / 2 {
                gen.recycle(tree);
                return Ok((seed, size));
            }
            gen.recycle(tree);
        }
    }
    Err(Error::Overflow(max_tries))
}

/// Times `repeats` generations of the tree grown from `seed`, after one
/// untimed warm-up. The generator's store is recycled between runs.
pub fn bench_seed(params: &GenParams, n: u64, seed: u64, repeats: usize) -> Result<Vec<BenchRow>> {
    if repeats == 0 {
        return Err(Error::InvalidParams("repeats must be positive".into()));
    }
    let mut p = params.clone();
    p.seed = seed;
    let mut gen = Generator::new(p.clone())?;
    let warm = gen.generate()?;
    let nodes = warm.nodes_generated;
    if let Some(t) = warm.into_tree() {
        gen.recycle(t);
    }
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let outcome = gen.generate()?;
        times.push(start.elapsed().as_secs_f64());
        if let Some(t) = outcome.into_tree() {
            gen.recycle(t);
        }
    }
    let med = median(&times);
    Ok(times
        .iter()
        .enumerate()
        .map(|(i, &s)| BenchRow {
            algo: p.algo,
            n,
            workers: p.workers,
            threshold: p.threshold,
            seed,
            repeat: i,
            seconds: s,
            median_seconds: med,
            nodes,
            nodes_per_sec: nodes as f64 / s.max(1e-12),
        })
        .collect())
}

/// Seed search followed by [`bench_seed`].
pub fn bench(algo: Algo, n: u64, workers: usize, threshold: usize, repeats: usize, start_seed: u64) -> Result<Vec<BenchRow>> {
    let params = bench_params(algo, n, workers, threshold);
    let (seed, _) = find_seed(&params, n, start_seed, 1_000_000)?;
    bench_seed(&params, n, seed, repeats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_search_hits_the_size_window() {
        let p = bench_params(Algo::Iterative, 10_000, 1, 64);
        let (seed, size) = find_seed(&p, 10_000, 0, 1_000_000).unwrap();
        assert!((5_000..=20_000).contains(&size));
        let again = Generator::new(GenParams { seed, ..p }).unwrap().generate().unwrap();
        assert_eq!(again.nodes_generated, size);
    }

    #[test]
    fn one_row_per_repeat() {
        let rows = bench(Algo::Hybrid, 2_000, 2, 8, 5, 0).unwrap();
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|r| r.nodes >= 1_000 && r.median_seconds == rows[0].median_seconds));
        assert_eq!(rows[0].to_csv().split(',').count(), BenchRow::CSV_HEADER.split(',').count());
        assert!(bench(Algo::Naive, 2_000, 1, 8, 0, 0).is_err());
    }
}
