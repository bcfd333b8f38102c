//! Verification suites behind `gwgen verify`. Each suite returns one
//! [`Check`] per verdict; the caller decides how to print them.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use num_rational::BigRational;

use crate::bitsource::BitSource;
use crate::engines::{Algo, ConditionedSampler, GenParams, Generator, RngMode, SampleMethod};
use crate::error::{Error, Result};
use crate::oracle;
use crate::replay::{self, Order, WindowReport};
use crate::stats::{self, EmpiricalDist};
use crate::treestore::Tree;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    /// Reported value with no pass/fail gate.
    Info,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Info => "info",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub observed: String,
    pub reference: String,
    pub tolerance: String,
    pub verdict: Verdict,
}

impl Check {
    pub const CSV_HEADER: &'static str = "check,observed,reference,tolerance,verdict";

    pub fn new(
        name: impl Into<String>,
        observed: impl fmt::Display,
        reference: impl fmt::Display,
        tolerance: impl Into<String>,
        verdict: Verdict,
    ) -> Self {
        Check {
            name: name.into(),
            observed: observed.to_string(),
            reference: reference.to_string(),
            tolerance: tolerance.into(),
            verdict,
        }
    }

    pub fn info(name: impl Into<String>, observed: impl fmt::Display, reference: impl fmt::Display) -> Self {
        Check::new(name, observed, reference, "", Verdict::Info)
    }

    pub fn to_csv(&self) -> String {
        [&self.name, &self.observed, &self.reference, &self.tolerance]
            .iter()
            .map(|f| csv_field(f))
            .chain(std::iter::once(self.verdict.as_str().to_string()))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn failed(&self) -> bool {
        self.verdict == Verdict::Fail
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Uniform,
    Lifetime,
    Peak,
    Time,
    Determinism,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Uniform, Suite::Lifetime, Suite::Peak, Suite::Time, Suite::Determinism];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Uniform => "uniform",
            Suite::Lifetime => "lifetime",
            Suite::Peak => "peak",
            Suite::Time => "time",
            Suite::Determinism => "determinism",
        }
    }

    /// Sizes used when none are given.
    pub fn default_sizes(self) -> Vec<u64> {
        match self {
            Suite::Uniform => vec![9],
            Suite::Lifetime => (1..=15).step_by(2).collect(),
            Suite::Peak | Suite::Time => vec![1001, 10_001, 100_001],
            Suite::Determinism => vec![],
        }
    }

    pub fn default_samples(self) -> u64 {
        match self {
            Suite::Uniform => 200_000,
            Suite::Lifetime => 200_000,
            Suite::Peak => 10_000,
            Suite::Time => 1_000,
            Suite::Determinism => 10,
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown suite {s:?}")))
    }
}

#[derive(Clone, Debug)]
pub struct VerifyConfig {
    pub sizes: Vec<u64>,
    pub samples: u64,
    pub threshold: usize,
    pub seed: u64,
    pub workers: usize,
}

impl VerifyConfig {
    pub fn defaults(suite: Suite, seed: u64) -> Self {
        VerifyConfig {
            sizes: suite.default_sizes(),
            samples: suite.default_samples(),
            threshold: 1,
            seed,
            workers: 4,
        }
    }
}

pub const P_VALUE_FLOOR: f64 = 0.001;
pub const TVD_TOLERANCE: f64 = 0.01;
pub const EXPONENT_TOLERANCE: f64 = 0.03;

pub fn run_suite(suite: Suite, cfg: &VerifyConfig) -> Result<Vec<Check>> {
    if cfg.samples == 0 && suite != Suite::Lifetime {
        return Err(Error::InvalidParams("samples must be positive".into()));
    }
    match suite {
        Suite::Uniform => uniform(cfg),
        Suite::Lifetime => lifetime(cfg),
        Suite::Peak => peak(cfg),
        Suite::Time => time(cfg),
        Suite::Determinism => determinism(cfg),
    }
}

/// Cycle-lemma sampler for stream `stream` of `seed`.
pub fn cycle_sampler(seed: u64, stream: u64) -> ConditionedSampler {
    ConditionedSampler::cycle_lemma(BitSource::new(seed, &[stream]))
}

/// Shape counts of `samples` trees of size `n`, indexed by the position of
/// each preorder word in [`oracle::enumerate_words`].
pub fn shape_counts(words: &[String], index: &HashMap<String, usize>) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; index.len()];
    for w in words {
        let i = index
            .get(w)
            .ok_or_else(|| Error::InvalidParams(format!("sampled word {w} has the wrong size")))?;
        counts[*i] += 1;
    }
    Ok(counts)
}

fn uniform(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let n = *cfg.sizes.first().unwrap_or(&9);
    let all = oracle::enumerate_words(n)?;
    let index: HashMap<String, usize> = all.iter().cloned().enumerate().map(|(i, w)| (w, i)).collect();
    let mut checks = Vec::new();
    let mut first_counts: Vec<Vec<u64>> = Vec::new();
    let rejection_params = GenParams {
        algo: Algo::Parallel,
        threshold: cfg.threshold,
        workers: cfg.workers,
        ..GenParams::default()
    };
    let samplers: [(&str, SampleMethod); 2] = [("cycle", SampleMethod::CycleLemma), ("rejection", SampleMethod::Rejection)];
    for (label, method) in samplers {
        let mut votes = Vec::new();
        let mut ps = Vec::new();
        for i in 0..3u64 {
            let seed = cfg.seed.wrapping_add(i);
            let mut sampler = match method {
                SampleMethod::CycleLemma => cycle_sampler(seed, 0),
                SampleMethod::Rejection => ConditionedSampler::new(GenParams { seed, ..rejection_params.clone() }, method)?,
            };
            let words = sampler.encodings(n, cfg.samples)?;
            let counts = shape_counts(&words, &index)?;
            let chi = stats::chi_square_uniform(&counts)?;
            votes.push(chi.p_value >= P_VALUE_FLOOR);
            ps.push(format!("{:.4}", chi.p_value));
            if i == 0 {
                let seen = counts.iter().filter(|&&c| c > 0).count();
                checks.push(Check::new(
                    format!("uniform.{label}.shapes_seen.n{n}"),
                    seen,
                    all.len(),
                    "all",
                    Verdict::from_bool(seen == all.len()),
                ));
                first_counts.push(counts);
            }
        }
        checks.push(Check::new(
            format!("uniform.{label}.chi_square.n{n}"),
            ps.join(" "),
            format!("p >= {P_VALUE_FLOOR}"),
            "majority of 3 seeds",
            Verdict::from_bool(stats::majority(&votes)),
        ));
    }
    let dist = |c: &[u64]| -> EmpiricalDist {
        let mut d = EmpiricalDist::new();
        for (i, &k) in c.iter().enumerate() {
            d.counts.insert(i as u64, k);
            d.total += k;
        }
        d
    };
    let d = stats::tvd_empirical(&dist(&first_counts[0]), &dist(&first_counts[1]));
    checks.push(Check::new(
        format!("uniform.cross_sampler_tvd.n{n}"),
        format!("{d:.5}"),
        0,
        format!("<= {TVD_TOLERANCE}"),
        Verdict::from_bool(d <= TVD_TOLERANCE),
    ));
    Ok(checks)
}

fn lifetime(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    let t = cfg.threshold;
    if !matches!(t, 1 | 2) {
        return Err(Error::UnsupportedThreshold(t));
    }
    let mut checks = Vec::new();
    for &n in &cfg.sizes {
        if n > oracle::MAX_ENUMERATION_SIZE {
            checks.push(limit_convergence(n, t, cfg.samples, cfg.seed)?);
            continue;
        }
        let brute = oracle::exact_pmf_lifetime(n, t)?;
        let formula = oracle::mean_lifetime_exact(n, t)?;
        let mean = brute.mean();
        checks.push(Check::new(
            format!("lifetime.t{t}.mean.n{n}"),
            &mean,
            &formula,
            "exact",
            Verdict::from_bool(mean == formula),
        ));
        if n < 3 {
            continue;
        }
        if t == 1 {
            let closed = oracle::closed_pmf_lifetime(n)?;
            let same = closed.entries == brute.entries;
            checks.push(Check::new(
                format!("lifetime.t1.pmf_closed_form.n{n}"),
                if same { "equal" } else { "differs" },
                "brute force",
                "exact",
                Verdict::from_bool(same),
            ));
        } else {
            let rows = oracle::tnk_discrepancies(n, 2)?;
            let here: Vec<String> = rows
                .iter()
                .filter(|r| r.n == n)
                .map(|r| format!("k={}:{}vs{}", r.k, r.closed, r.enumerated))
                .collect();
            checks.push(Check::info(
                format!("lifetime.t2.tnk_closed_form_mismatches.n{n}"),
                if here.is_empty() { "none".to_string() } else { here.join(" ") },
                "brute force",
            ));
        }
    }
    for lt in [1usize, 2, 4] {
        let m = oracle::limit_mean(lt)?;
        let expect = BigRational::from_integer([4, 17, 69][[1, 2, 4].iter().position(|&x| x == lt).unwrap()].into());
        checks.push(Check::new(
            format!("lifetime.limit_mean.t{lt}"),
            &m,
            &expect,
            "exact",
            Verdict::from_bool(m == expect),
        ));
    }
    Ok(checks)
}

/// Empirical first-thread lifetime at size `n` from `samples` cycle-lemma
/// trees.
pub fn sampled_lifetimes(n: u64, threshold: usize, samples: u64, seed: u64) -> Result<EmpiricalDist> {
    let mut dist = EmpiricalDist::new();
    let mut err = None;
    cycle_sampler(seed, threshold as u64).for_each(n, samples, |tree| match replay::mark_lifetime(tree, threshold) {
        Ok(k) => dist.add(k),
        Err(e) => err = Some(e),
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(dist),
    }
}

/// TVD between sampled lifetimes at size `n` and the limiting law.
pub fn limit_convergence(n: u64, threshold: usize, samples: u64, seed: u64) -> Result<Check> {
    let dist = sampled_lifetimes(n, threshold, samples, seed)?;
    let horizon = n.min(oracle::MAX_SERIES_HORIZON);
    let limit = oracle::limit_pmf_f64(threshold, horizon)?;
    let d = stats::tvd(&dist, &limit);
    Ok(Check::new(
        format!("lifetime.t{threshold}.limit_tvd.n{n}"),
        format!("{d:.5}"),
        0,
        format!("<= {TVD_TOLERANCE}"),
        Verdict::from_bool(d <= TVD_TOLERANCE),
    ))
}

fn need_three_sizes(sizes: &[u64]) -> Result<()> {
    if sizes.len() < 3 {
        return Err(Error::InvalidParams(format!(
            "a scaling fit needs at least 3 sizes, got {}",
            sizes.len()
        )));
    }
    for &n in sizes {
        if n % 2 == 0 {
            return Err(Error::InvalidSize(n));
        }
    }
    Ok(())
}

/// Mean BFS and DFS peak loads at one size.
pub fn mean_peak_loads(n: u64, samples: u64, seed: u64) -> Result<(f64, f64)> {
    let (mut bfs, mut dfs) = (0u64, 0u64);
    cycle_sampler(seed, n).for_each(n, samples, |tree| {
        bfs += replay::peak_load(tree, Order::Bfs);
        dfs += replay::peak_load(tree, Order::Dfs);
    })?;
    Ok((bfs as f64 / samples as f64, dfs as f64 / samples as f64))
}

fn peak(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    need_three_sizes(&cfg.sizes)?;
    let mut checks = Vec::new();
    let mut points = Vec::new();
    let mut dfs_points = Vec::new();
    for &n in &cfg.sizes {
        let (bfs, dfs) = mean_peak_loads(n, cfg.samples, cfg.seed)?;
        let c = bfs / (n as f64).sqrt();
        checks.push(Check::info(
            format!("peak.bfs.constant.n{n}"),
            format!("{c:.4} (deviation {:+.4})", c - std::f64::consts::PI.sqrt()),
            format!("{:.4}", std::f64::consts::PI.sqrt()),
        ));
        let per_internal = bfs / (((n - 1) / 2) as f64).sqrt();
        checks.push(Check::info(
            format!("peak.bfs.constant_per_internal_node.n{n}"),
            format!("{per_internal:.4} (deviation {:+.4})", per_internal - std::f64::consts::PI.sqrt()),
            format!("{:.4}", std::f64::consts::PI.sqrt()),
        ));
        checks.push(Check::info(format!("peak.dfs.mean.n{n}"), format!("{dfs:.2}"), ""));
        points.push((n as f64, bfs));
        dfs_points.push((n as f64, dfs));
    }
    let slope = stats::fit_exponent(&points)?;
    checks.push(Check::new(
        "peak.bfs.exponent",
        format!("{slope:.4}"),
        0.5,
        "[0.47, 0.53]",
        Verdict::from_bool((0.47..=0.53).contains(&slope)),
    ));
    checks.push(Check::info(
        "peak.dfs.exponent",
        format!("{:.4}", stats::fit_exponent(&dfs_points)?),
        0.5,
    ));
    Ok(checks)
}

/// Per-size summary of the fully parallel schedule.
#[derive(Clone, Debug, Default)]
pub struct TimeSummary {
    pub trees: u64,
    pub t1_equals_height: u64,
    pub t2_within_twice_height: u64,
    pub mean_t1: f64,
    pub mean_t2: f64,
    pub window: WindowReport,
}

pub fn time_summary(n: u64, samples: u64, seed: u64) -> Result<TimeSummary> {
    let mut s = TimeSummary::default();
    let (mut sum1, mut sum2) = (0u64, 0u64);
    let mut err = None;
    let mut visit = |tree: &Tree| -> Result<()> {
        let h = tree.height_nodes();
        let t1 = replay::parallel_time(tree, 1)?;
        let t2 = replay::parallel_time(tree, 2)?;
        s.trees += 1;
        s.t1_equals_height += u64::from(t1 == h);
        s.t2_within_twice_height += u64::from(t2 <= 2 * h);
        sum1 += t1;
        sum2 += t2;
        s.window.merge(&replay::window_report(tree));
        Ok(())
    };
    cycle_sampler(seed, n ^ 0x7153).for_each(n, samples, |t| {
        if let Err(e) = visit(t) {
            err.get_or_insert(e);
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    s.mean_t1 = sum1 as f64 / samples as f64;
    s.mean_t2 = sum2 as f64 / samples as f64;
    Ok(s)
}

fn time(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    need_three_sizes(&cfg.sizes)?;
    let mut checks = Vec::new();
    let mut p1 = Vec::new();
    let mut p2 = Vec::new();
    for &n in &cfg.sizes {
        let s = time_summary(n, cfg.samples, cfg.seed)?;
        checks.push(Check::new(
            format!("time.t1_equals_height.n{n}"),
            format!("{}/{}", s.t1_equals_height, s.trees),
            "all",
            "exact",
            Verdict::from_bool(s.t1_equals_height == s.trees),
        ));
        checks.push(Check::new(
            format!("time.t2_within_twice_height.n{n}"),
            format!("{}/{}", s.t2_within_twice_height, s.trees),
            "all",
            "exact",
            Verdict::from_bool(s.t2_within_twice_height == s.trees),
        ));
        checks.push(Check::info(
            format!("time.t2_window_violation_rate.n{n}"),
            format!(
                "{:.5} ({} late, max offset {})",
                s.window.violation_rate(),
                s.window.late,
                s.window.max_offset
            ),
            "2h-1 or 2h",
        ));
        p1.push((n as f64, s.mean_t1));
        p2.push((n as f64, s.mean_t2));
    }
    for (label, pts) in [("t1", &p1), ("t2", &p2)] {
        let slope = stats::fit_exponent(pts)?;
        checks.push(Check::new(
            format!("time.{label}.exponent"),
            format!("{slope:.4}"),
            0.5,
            format!("+/- {EXPONENT_TOLERANCE}"),
            Verdict::from_bool((slope - 0.5).abs() <= EXPONENT_TOLERANCE),
        ));
    }
    Ok(checks)
}

/// Preorder words (or `overflow`) from the same seed for each worker count.
pub fn encodings_by_workers(
    algo: Algo,
    seed: u64,
    workers: &[usize],
    threshold: usize,
    max_nodes: u64,
) -> Result<BTreeMap<usize, (String, u64)>> {
    let mut out = BTreeMap::new();
    for &w in workers {
        let params = GenParams {
            algo,
            threshold,
            hybrid_switch: threshold.max(64),
            workers: w,
            seed,
            max_nodes,
            rng_mode: RngMode::SplitDeterministic,
            ..GenParams::default()
        };
        let outcome = Generator::new(params)?.generate()?;
        let spawned = outcome.tasks_spawned;
        let word = match outcome.tree() {
            Some(t) => t.encode_bits(),
            None => "overflow".to_string(),
        };
        out.insert(w, (word, spawned));
    }
    Ok(out)
}

/// Size targeted by the determinism suite; free trees from arbitrary seeds
/// are mostly too small to spawn tasks.
pub const DETERMINISM_TARGET: u64 = 20_001;

/// `count` seeds from `start` whose trees under `params` reach `target / 2`
/// nodes.
pub fn large_tree_seeds(params: &GenParams, target: u64, start: u64, count: u64) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    let mut next = start;
    for _ in 0..count {
        let (seed, _) = crate::bench::find_seed(params, target, next, 1_000_000)?;
        seeds.push(seed);
        next = seed.wrapping_add(1);
    }
    Ok(seeds)
}

fn determinism(cfg: &VerifyConfig) -> Result<Vec<Check>> {
    const WORKERS: [usize; 3] = [1, 2, 8];
    let threshold = cfg.threshold.max(1);
    let mut checks = Vec::new();
    for algo in [Algo::Parallel, Algo::Hybrid] {
        let params = crate::bench::bench_params(algo, DETERMINISM_TARGET, 1, threshold);
        let seeds = large_tree_seeds(&params, DETERMINISM_TARGET, cfg.seed, cfg.samples)?;
        let mut identical = 0;
        let mut spawned = 0;
        for &seed in &seeds {
            let runs = encodings_by_workers(algo, seed, &WORKERS, threshold, 4 * DETERMINISM_TARGET)?;
            let first = &runs[&WORKERS[0]].0;
            identical += u64::from(runs.values().all(|(w, _)| w == first));
            spawned += runs.values().map(|r| r.1).sum::<u64>();
        }
        checks.push(Check::new(
            format!("determinism.{}.identical_across_workers", algo.name()),
            format!("{identical}/{} (tasks spawned {spawned})", cfg.samples),
            "all",
            "byte-identical",
            Verdict::from_bool(identical == cfg.samples),
        ));
    }
    let params = crate::bench::bench_params(Algo::Iterative, DETERMINISM_TARGET, 1, threshold);
    let mut same = 0;
    for seed in large_tree_seeds(&params, DETERMINISM_TARGET, cfg.seed, cfg.samples)? {
        let words: Vec<String> = [Algo::Naive, Algo::Iterative]
            .into_iter()
            .map(|a| encodings_by_workers(a, seed, &[1], 1, 4 * DETERMINISM_TARGET).map(|m| m[&1].0.clone()))
            .collect::<Result<_>>()?;
        same += u64::from(words[0] == words[1]);
    }
    checks.push(Check::new(
        "determinism.naive_equals_iterative",
        format!("{same}/{}", cfg.samples),
        "all",
        "byte-identical",
        Verdict::from_bool(same == cfg.samples),
    ));
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_quoting() {
        let c = Check::new("a", "x,y", "\"q\"", "", Verdict::Pass);
        assert_eq!(c.to_csv(), "a,\"x,y\",\"\"\"q\"\"\",,pass");
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn lifetime_suite_small_sizes_pass() {
        for t in [1, 2] {
            let cfg = VerifyConfig {
                threshold: t,
                ..VerifyConfig::defaults(Suite::Lifetime, 1)
            };
            let checks = run_suite(Suite::Lifetime, &cfg).unwrap();
            assert!(checks.iter().all(|c| !c.failed()), "{checks:?}");
        }
    }

    #[test]
    fn scaling_suites_need_three_sizes() {
        for suite in [Suite::Peak, Suite::Time] {
            let cfg = VerifyConfig {
                sizes: vec![1001],
                ..VerifyConfig::defaults(suite, 1)
            };
            assert!(matches!(run_suite(suite, &cfg), Err(Error::InvalidParams(_))));
        }
    }

    #[test]
    fn determinism_suite_passes() {
        let cfg = VerifyConfig {
            samples: 4,
            threshold: 4,
            ..VerifyConfig::defaults(Suite::Determinism, 3)
        };
        let checks = run_suite(Suite::Determinism, &cfg).unwrap();
        assert!(checks.iter().all(|c| c.verdict == Verdict::Pass), "{checks:?}");
    }

    #[test]
    fn small_uniform_suite_runs() {
        let cfg = VerifyConfig {
            sizes: vec![5],
            samples: 50_000,
            threshold: 2,
            workers: 2,
            seed: 11,
        };
        let checks = run_suite(Suite::Uniform, &cfg).unwrap();
        assert_eq!(checks.len(), 5);
        assert!(checks.iter().all(|c| !c.failed()), "{checks:?}");
    }
}
