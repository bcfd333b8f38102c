//! Critical binary Galton-Watson generators.
//!
//! Every node draws one bit: `1` gives it two children, `0` makes it a leaf.
//! Four engines share that process and differ only in how pending nodes are
//! scheduled:
//!
//! * [`Algo::Naive`]: double recursion.
//! * [`Algo::Iterative`]: one explicit stack, left child first. Bits are
//!   consumed in the same preorder as the naive engine, so equal sources give
//!   equal trees.
//! * [`Algo::Parallel`]: every task owns two stacks. New children go to the
//!   first until it holds `threshold` nodes, then to the second; once the
//!   second reaches `threshold` nodes it is handed to a freshly spawned task.
//! * [`Algo::Hybrid`]: iterative until `hybrid_switch` nodes are pending, then
//!   the pending stack seeds a parallel task.
//!
//! In [`RngMode::SplitDeterministic`] each spawned task receives a source
//! split off its parent's in spawn order, which makes the output a function of
//! `(seed, threshold, max_nodes)` alone.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crate::bitsource::{BitSource, SourceUsage, WORD_BITS};
use crate::error::{Error, Result};
use crate::treestore::{decode_bits_into, NodeHandle, NodeStore, Tree, WorkerArena, DEFAULT_SLAB_CAPACITY};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algo {
    Naive,
    Iterative,
    Parallel,
    Hybrid,
}

impl Algo {
    pub const ALL: [Algo; 4] = [Algo::Naive, Algo::Iterative, Algo::Parallel, Algo::Hybrid];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Naive => "naive",
            Algo::Iterative => "iterative",
            Algo::Parallel => "parallel",
            Algo::Hybrid => "hybrid",
        }
    }

    fn uses_pool(self) -> bool {
        matches!(self, Algo::Parallel | Algo::Hybrid)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RngMode {
    /// Task sources derived from the task lineage; scheduler-independent.
    SplitDeterministic,
    /// One generator per worker seeded by worker id; output depends on which
    /// worker ran which task.
    PerWorker,
}

#[derive(Clone, Debug)]
pub struct GenParams {
    pub algo: Algo,
    pub threshold: usize,
    /// Pending nodes at which the hybrid engine goes parallel.
    pub hybrid_switch: usize,
    pub max_nodes: u64,
    pub workers: usize,
    pub seed: u64,
    pub rng_mode: RngMode,
    pub slab_capacity: usize,
    /// Upper bound of a random delay, in microseconds, injected before each
    /// parallel task starts. Zero disables it; used to perturb scheduling.
    pub start_jitter_us: u32,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            algo: Algo::Iterative,
            threshold: 64,
            hybrid_switch: 1024,
            max_nodes: 1 << 31,
            workers: 1,
            seed: 0,
            rng_mode: RngMode::SplitDeterministic,
            slab_capacity: DEFAULT_SLAB_CAPACITY,
            start_jitter_us: 0,
        }
    }
}

impl GenParams {
    pub fn new(algo: Algo) -> Self {
        GenParams {
            algo,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.threshold < 1 {
            return bad("threshold must be at least 1".into());
        }
        if self.hybrid_switch < self.threshold {
            return bad(format!(
                "hybrid switch ({}) must be at least the threshold ({})",
                self.hybrid_switch, self.threshold
            ));
        }
        if self.max_nodes < 1 {
            return bad("max_nodes must be at least 1".into());
        }
        if self.workers < 1 || self.workers > crate::treestore::MAX_WORKERS {
            return bad(format!("workers must be in [1, {}]", crate::treestore::MAX_WORKERS));
        }
        if self.rng_mode == RngMode::PerWorker && !self.algo.uses_pool() {
            return bad("per-worker generators only apply to the parallel and hybrid engines".into());
        }
        Ok(())
    }
}

#[derive(Debug)]
pub enum GenResult {
    Tree(Tree),
    Overflow,
}

#[derive(Debug)]
pub struct GenOutcome {
    pub result: GenResult,
    pub nodes_generated: u64,
    pub tasks_spawned: u64,
    pub bits_consumed: u64,
    pub rng: SourceUsage,
    /// Parent links into another worker's slab, written after the join.
    pub deferred_links: u64,
}

impl GenOutcome {
    pub fn tree(&self) -> Option<&Tree> {
        match &self.result {
            GenResult::Tree(t) => Some(t),
            GenResult::Overflow => None,
        }
    }

    pub fn into_tree(self) -> Option<Tree> {
        match self.result {
            GenResult::Tree(t) => Some(t),
            GenResult::Overflow => None,
        }
    }

    pub fn is_overflow(&self) -> bool {
        matches!(self.result, GenResult::Overflow)
    }
}

/// Anything that can feed the generators one bit at a time.
pub trait RandomBits: Send + Sized {
    fn next_bit(&mut self) -> bool;
    /// A source for a newly spawned task; successive calls must differ.
    fn fork(&mut self) -> Self;
    fn usage(&self) -> SourceUsage;
}

impl RandomBits for BitSource {
    #[inline]
    fn next_bit(&mut self) -> bool {
        BitSource::next_bit(self)
    }

    fn fork(&mut self) -> Self {
        self.spawn_child()
    }

    fn usage(&self) -> SourceUsage {
        BitSource::usage(self)
    }
}

/// A fixed bit prefix followed by zeros. Forked streams are all zeros.
#[derive(Clone, Debug)]
pub struct ForcedBits {
    bits: Vec<bool>,
    pos: usize,
}

impl ForcedBits {
    /// Parses a string of '0'/'1'; other characters are ignored.
    pub fn new(pattern: &str) -> Self {
        ForcedBits {
            bits: pattern.bytes().filter_map(|c| match c {
                b'0' => Some(false),
                b'1' => Some(true),
                _ => None,
            })
            .collect(),
            pos: 0,
        }
    }

    pub fn consumed(&self) -> usize {
        self.pos
    }
}

impl RandomBits for ForcedBits {
    fn next_bit(&mut self) -> bool {
        let b = self.bits.get(self.pos).copied().unwrap_or(false);
        self.pos += 1;
        b
    }

    fn fork(&mut self) -> Self {
        ForcedBits { bits: Vec::new(), pos: 0 }
    }

    fn usage(&self) -> SourceUsage {
        let words = (self.pos as u64).div_ceil(WORD_BITS as u64);
        SourceUsage {
            sources: 1,
            words_drawn: words,
            bits_consumed: self.pos as u64,
            max_waste_bits: words * WORD_BITS as u64 - self.pos as u64,
        }
    }
}

enum Stop {
    Overflow,
    Failed(Error),
}

impl From<Error> for Stop {
    fn from(e: Error) -> Self {
        Stop::Failed(e)
    }
}

// Deep recursion in the naive engine grows the stack on demand; checked once
// every STACK_CHECK_INTERVAL levels.
const STACK_CHECK_INTERVAL: u32 = 1024;
const STACK_RED_ZONE: usize = 4 << 20;
const STACK_SEGMENT: usize = 64 << 20;

struct SeqCtx<'a, B> {
    bits: &'a mut B,
    arena: &'a mut WorkerArena,
    nodes: u64,
    cap: u64,
}

fn naive_node<B: RandomBits>(ctx: &mut SeqCtx<'_, B>, node: NodeHandle, depth: u32) -> Result<(), Stop> {
    if ctx.bits.next_bit() {
        if ctx.nodes + 2 > ctx.cap {
            return Err(Stop::Overflow);
        }
        let (l, r) = ctx.arena.alloc_pair()?;
        ctx.arena.set_first_child(node, l);
        ctx.nodes += 2;
        if depth % STACK_CHECK_INTERVAL == STACK_CHECK_INTERVAL - 1 {
            stacker::maybe_grow(STACK_RED_ZONE, STACK_SEGMENT, || naive_node(ctx, l, depth + 1))?;
        } else {
            naive_node(ctx, l, depth + 1)?;
        }
        naive_node(ctx, r, depth + 1)?;
    }
    Ok(())
}

fn iterative_from<B: RandomBits>(ctx: &mut SeqCtx<'_, B>, root: NodeHandle) -> Result<(), Stop> {
    // The left child is kept in `node` instead of being pushed and popped
    // straight back; the pop order is the same as a left-first stack.
    let mut stack: Vec<NodeHandle> = Vec::new();
    let mut node = root;
    loop {
        if ctx.bits.next_bit() {
            if ctx.nodes + 2 > ctx.cap {
                return Err(Stop::Overflow);
            }
            let (l, r) = ctx.arena.alloc_pair()?;
            ctx.arena.set_first_child(node, l);
            ctx.nodes += 2;
            stack.push(r);
            node = l;
        } else {
            match stack.pop() {
                Some(n) => node = n,
                None => return Ok(()),
            }
        }
    }
}

struct WorkerSlot<B> {
    arena: WorkerArena,
    source: Option<B>,
    links: Vec<(NodeHandle, NodeHandle)>,
    usage: SourceUsage,
}

struct Shared<B> {
    threshold: usize,
    hybrid_switch: usize,
    cap: u64,
    flush_every: u64,
    jitter_us: u32,
    budget: AtomicU64,
    overflow: AtomicBool,
    tasks: AtomicU64,
    failure: Mutex<Option<Error>>,
    slots: Vec<Mutex<WorkerSlot<B>>>,
}

impl<B> Shared<B> {
    fn fail(&self, e: Error) {
        self.failure.lock().unwrap().get_or_insert(e);
        self.overflow.store(true, Ordering::Relaxed);
    }
}

/// Local view of the shared node budget. Counts are published in batches so
/// tasks do not contend on the counter for every node.
struct Budget<'a> {
    shared: &'a AtomicU64,
    cap: u64,
    flush_every: u64,
    seen: u64,
    local: u64,
}

impl<'a> Budget<'a> {
    fn new(shared: &'a AtomicU64, cap: u64, flush_every: u64) -> Self {
        Budget {
            shared,
            cap,
            flush_every,
            seen: shared.load(Ordering::Relaxed),
            local: 0,
        }
    }

    /// Records `n` new nodes; false once the budget is known to be exceeded.
    #[inline]
    fn add(&mut self, n: u64) -> bool {
        self.local += n;
        if self.local >= self.flush_every || self.seen + self.local > self.cap {
            return self.flush();
        }
        true
    }

    fn flush(&mut self) -> bool {
        if self.local > 0 {
            self.seen = self.shared.fetch_add(self.local, Ordering::Relaxed) + self.local;
            self.local = 0;
        }
        self.seen <= self.cap
    }
}

fn jitter(max_us: u32) {
    if max_us == 0 {
        return;
    }
    use std::hash::{BuildHasher, Hasher};
    let mut h = std::collections::hash_map::RandomState::new().build_hasher();
    h.write_u64(0);
    let us = h.finish() % (max_us as u64 + 1);
    if us % 3 == 0 {
        std::thread::yield_now();
    } else {
        std::thread::sleep(Duration::from_micros(us));
    }
}

fn current_worker() -> usize {
    rayon::current_thread_index().unwrap_or(0)
}

/// One task of the threshold-parallel engine.
fn parallel_task<'s, B: RandomBits + 's>(
    shared: &'s Shared<B>,
    scope: &rayon::Scope<'s>,
    mut lds1: Vec<NodeHandle>,
    mut own: Option<B>,
) {
    jitter(shared.jitter_us);
    let worker = current_worker();
    let mut guard = shared.slots[worker]
        .try_lock()
        .expect("a worker slot is only ever held by the task running on it");
    let WorkerSlot {
        arena,
        source,
        links,
        usage,
    } = &mut *guard;
    let t = shared.threshold;
    let mut budget = Budget::new(&shared.budget, shared.cap, shared.flush_every);
    let mut lds2: Vec<NodeHandle> = Vec::with_capacity(t + 1);

    loop {
        if shared.overflow.load(Ordering::Relaxed) {
            break;
        }
        let node = match lds2.pop() {
            Some(n) => n,
            None => match lds1.pop() {
                Some(n) => n,
                None => break,
            },
        };
        let bits = match own.as_mut() {
            Some(b) => b,
            None => source.as_mut().expect("per-worker source"),
        };
        if !bits.next_bit() {
            continue;
        }
        if !budget.add(2) {
            shared.overflow.store(true, Ordering::Relaxed);
            break;
        }
        let (l, r) = match arena.alloc_pair() {
            Ok(p) => p,
            Err(e) => {
                shared.fail(e);
                break;
            }
        };
        if node.worker_id() == worker {
            arena.set_first_child(node, l);
        } else {
            links.push((node, l));
        }
        if lds1.len() < t {
            lds1.push(r);
            lds1.push(l);
        } else {
            debug_assert!(!lds2.is_empty() || lds1.len() >= t);
            lds2.push(r);
            lds2.push(l);
            if lds2.len() >= t {
                let batch = std::mem::replace(&mut lds2, Vec::with_capacity(t + 1));
                let child = own.as_mut().map(RandomBits::fork);
                shared.tasks.fetch_add(1, Ordering::Relaxed);
                scope.spawn(move |s| parallel_task(shared, s, batch, child));
            }
        }
    }
    if !budget.flush() {
        shared.overflow.store(true, Ordering::Relaxed);
    }
    if let Some(b) = own {
        usage.merge(&b.usage());
    }
}

/// Sequential phase of the hybrid engine: the literal stack loop, stopped as
/// soon as `switch` nodes are pending.
fn hybrid_sequential<B: RandomBits>(
    shared: &Shared<B>,
    root: NodeHandle,
    own: &mut Option<B>,
) -> Vec<NodeHandle> {
    let worker = current_worker();
    let mut guard = shared.slots[worker].try_lock().expect("worker slot");
    let WorkerSlot { arena, source, .. } = &mut *guard;
    let mut budget = Budget::new(&shared.budget, shared.cap, shared.flush_every);
    let mut stack = vec![root];
    while stack.len() < shared.hybrid_switch {
        let Some(node) = stack.pop() else { break };
        let bits = match own.as_mut() {
            Some(b) => b,
            None => source.as_mut().expect("per-worker source"),
        };
        if !bits.next_bit() {
            continue;
        }
        if !budget.add(2) {
            shared.overflow.store(true, Ordering::Relaxed);
            break;
        }
        match arena.alloc_pair() {
            Ok((l, r)) => {
                arena.set_first_child(node, l);
                stack.push(r);
                stack.push(l);
            }
            Err(e) => {
                shared.fail(e);
                break;
            }
        }
    }
    if !budget.flush() {
        shared.overflow.store(true, Ordering::Relaxed);
    }
    stack
}

/// A reusable generator: keeps its worker pool, node store and per-worker
/// sources across calls.
pub struct Generator {
    params: GenParams,
    pool: Option<Arc<rayon::ThreadPool>>,
    store: Option<NodeStore>,
    worker_sources: Vec<BitSource>,
}

impl Generator {
    pub fn new(params: GenParams) -> Result<Self> {
        params.validate()?;
        let pool = if params.algo.uses_pool() {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(params.workers)
                .thread_name(|i| format!("gw-worker-{i}"))
                .build()
                .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?;
            Some(Arc::new(pool))
        } else {
            None
        };
        let worker_sources = match params.rng_mode {
            RngMode::PerWorker => (0..params.workers).map(|w| BitSource::for_worker(params.seed, w)).collect(),
            RngMode::SplitDeterministic => Vec::new(),
        };
        let workers = if params.algo.uses_pool() { params.workers } else { 1 };
        let store = NodeStore::new(workers, params.slab_capacity)?;
        Ok(Generator {
            params,
            pool,
            store: Some(store),
            worker_sources,
        })
    }

    pub fn params(&self) -> &GenParams {
        &self.params
    }

    /// Changes the seed, reseeding per-worker generators if there are any.
    pub fn set_seed(&mut self, seed: u64) {
        self.params.seed = seed;
        if self.params.rng_mode == RngMode::PerWorker {
            self.worker_sources = (0..self.params.workers).map(|w| BitSource::for_worker(seed, w)).collect();
        }
    }

    /// Generates one tree from the root source `(seed, [])`.
    pub fn generate(&mut self) -> Result<GenOutcome> {
        let src = BitSource::new(self.params.seed, &[]);
        self.generate_from(src)
    }

    /// Generates one tree using `source` as the root task's bit stream. In
    /// per-worker mode the worker generators are used instead.
    pub fn generate_from(&mut self, source: BitSource) -> Result<GenOutcome> {
        let cap = self.params.max_nodes;
        self.run(source, cap)
    }

    /// Runs the engine on a forced bit prefix (then zeros). Spawned tasks
    /// receive all-zero streams.
    pub fn generate_forced(&mut self, bits: ForcedBits) -> Result<GenOutcome> {
        if self.params.rng_mode == RngMode::PerWorker {
            return Err(Error::InvalidParams("forced bits need split-deterministic mode".into()));
        }
        let cap = self.params.max_nodes;
        self.run_generic(bits, Vec::new(), cap).0
    }

    /// Returns a tree's store to the generator so its memory is reused.
    pub fn recycle(&mut self, tree: Tree) {
        let store = tree.into_store();
        if store.workers() >= self.required_workers() && store.slab_capacity() == self.params.slab_capacity {
            self.store = Some(store);
        }
    }

    fn required_workers(&self) -> usize {
        if self.params.algo.uses_pool() {
            self.params.workers
        } else {
            1
        }
    }

    fn run(&mut self, source: BitSource, cap: u64) -> Result<GenOutcome> {
        let worker_sources = std::mem::take(&mut self.worker_sources);
        let (outcome, returned) = self.run_generic(source, worker_sources, cap);
        self.worker_sources = returned;
        outcome
    }

    fn on_own_pool(&self) -> bool {
        self.pool.as_ref().is_some_and(|p| p.current_thread_index().is_some())
    }

    /// Runs `f` on a pool worker (or inline for sequential engines) so that
    /// repeated generations skip the cross-thread hand-off.
    pub fn with_pool<R: Send>(&mut self, f: impl FnOnce(&mut Generator) -> R + Send) -> R {
        match self.pool.clone() {
            Some(pool) if !self.on_own_pool() => pool.install(|| f(self)),
            _ => f(self),
        }
    }

    fn take_store(&mut self) -> Result<NodeStore> {
        match self.store.take() {
            Some(mut s) => {
                s.reset();
                Ok(s)
            }
            None => NodeStore::new(self.required_workers(), self.params.slab_capacity),
        }
    }

    fn run_generic<B: RandomBits>(
        &mut self,
        root_bits: B,
        worker_sources: Vec<B>,
        cap: u64,
    ) -> (Result<GenOutcome>, Vec<B>) {
        let store = match self.take_store() {
            Ok(s) => s,
            Err(e) => return (Err(e), worker_sources),
        };
        match self.params.algo {
            Algo::Naive | Algo::Iterative => (self.run_sequential(store, root_bits, cap), worker_sources),
            Algo::Parallel | Algo::Hybrid => {
                let pool = self.pool.clone().expect("pool for parallel engines");
                let params = &self.params;
                if self.on_own_pool() {
                    run_parallel(params, store, root_bits, worker_sources, cap)
                } else {
                    pool.install(|| run_parallel(params, store, root_bits, worker_sources, cap))
                }
            }
        }
    }

    fn run_sequential<B: RandomBits>(&mut self, mut store: NodeStore, mut bits: B, cap: u64) -> Result<GenOutcome> {
        let root = store.alloc_root(0)?;
        let arena = store.arena_mut(0)?;
        let mut ctx = SeqCtx {
            bits: &mut bits,
            arena,
            nodes: 1,
            cap,
        };
        let status = match self.params.algo {
            Algo::Naive => naive_node(&mut ctx, root, 0),
            _ => iterative_from(&mut ctx, root),
        };
        let nodes = ctx.nodes;
        let usage = bits.usage();
        let result = match status {
            Ok(()) => GenResult::Tree(Tree::from_parts(store, root, nodes)),
            Err(Stop::Overflow) => {
                store.reset();
                self.store = Some(store);
                GenResult::Overflow
            }
            Err(Stop::Failed(e)) => return Err(e),
        };
        Ok(GenOutcome {
            result,
            nodes_generated: nodes,
            tasks_spawned: 0,
            bits_consumed: usage.bits_consumed,
            rng: usage,
            deferred_links: 0,
        })
    }

    /// Uniform tree with exactly `n` nodes by rejection: runs this engine
    /// with the node cap set to `n` until a run ends at exactly `n` nodes.
    /// Each attempt uses the next child of `master`.
    pub fn sample_rejection(&mut self, master: &mut BitSource, n: u64, retry_budget: u64) -> Result<(Tree, u64)> {
        check_size(n)?;
        self.with_pool(|g| {
            for attempt in 1..=retry_budget {
                let src = master.spawn_child();
                let outcome = g.run(src, n)?;
                match outcome.result {
                    GenResult::Tree(t) if t.size() == n => return Ok((t, attempt)),
                    GenResult::Tree(t) => g.recycle(t),
                    GenResult::Overflow => {}
                }
            }
            Err(Error::Overflow(retry_budget))
        })
    }
}

fn run_parallel<B: RandomBits>(
    params: &GenParams,
    mut store: NodeStore,
    root_bits: B,
    worker_sources: Vec<B>,
    cap: u64,
) -> (Result<GenOutcome>, Vec<B>) {
    let workers = params.workers;
    if let Err(e) = store.ensure_workers(workers) {
        return (Err(e), worker_sources);
    }
    let here = current_worker();
    let root = match store.alloc_root(here) {
        Ok(r) => r,
        Err(e) => return (Err(e), worker_sources),
    };
    let per_worker = params.rng_mode == RngMode::PerWorker;
    // Worker sources persist across runs; only this run's draws are reported.
    let before: Vec<SourceUsage> = worker_sources.iter().map(RandomBits::usage).collect();
    let mut sources: Vec<Option<B>> = worker_sources.into_iter().map(Some).collect();
    sources.resize_with(workers, || None);
    let slots = store
        .take_arenas()
        .into_iter()
        .zip(sources)
        .map(|(arena, source)| {
            Mutex::new(WorkerSlot {
                arena,
                source,
                links: Vec::new(),
                usage: SourceUsage::default(),
            })
        })
        .collect();
    let shared = Shared {
        threshold: params.threshold,
        hybrid_switch: params.hybrid_switch,
        cap,
        flush_every: (params.threshold as u64).max(64),
        jitter_us: params.start_jitter_us,
        budget: AtomicU64::new(1),
        overflow: AtomicBool::new(cap < 1),
        tasks: AtomicU64::new(0),
        failure: Mutex::new(None),
        slots,
    };
    let mut own = if per_worker { None } else { Some(root_bits) };

    let lds1 = match params.algo {
        Algo::Hybrid => hybrid_sequential(&shared, root, &mut own),
        _ => vec![root],
    };
    if !lds1.is_empty() && !shared.overflow.load(Ordering::Relaxed) {
        rayon::scope(|s| parallel_task(&shared, s, lds1, own.take()));
    }

    let Shared {
        budget,
        overflow,
        tasks,
        failure,
        slots,
        ..
    } = shared;
    let mut usage = SourceUsage::default();
    if let Some(b) = own {
        usage.merge(&b.usage());
    }
    let mut arenas = Vec::with_capacity(workers);
    let mut links = Vec::new();
    let mut returned = Vec::new();
    for (i, slot) in slots.into_iter().enumerate() {
        let slot = slot.into_inner().unwrap();
        arenas.push(slot.arena);
        links.extend(slot.links);
        usage.merge(&slot.usage);
        if let Some(src) = slot.source {
            let now = src.usage();
            usage.merge(&before.get(i).map_or(now, |b| now.since(b)));
            returned.push(src);
        }
    }
    store.restore_arenas(arenas);
    if let Some(e) = failure.into_inner().unwrap() {
        return (Err(e), returned);
    }
    let nodes = budget.into_inner();
    let overflowed = overflow.into_inner() || nodes > cap;
    let deferred_links = links.len() as u64;
    let result = if overflowed {
        store.reset();
        GenResult::Overflow
    } else {
        for (parent, child) in links {
            store.set_first_child(parent, child);
        }
        GenResult::Tree(Tree::from_parts(store, root, nodes))
    };
    let outcome = GenOutcome {
        result,
        nodes_generated: nodes,
        tasks_spawned: tasks.into_inner(),
        bits_consumed: usage.bits_consumed,
        rng: usage,
        deferred_links,
    };
    (Ok(outcome), returned)
}

/// One tree with the engine selected in `params`.
pub fn generate(params: &GenParams) -> Result<GenOutcome> {
    Generator::new(params.clone())?.generate()
}

pub fn generate_naive(params: &GenParams) -> Result<GenOutcome> {
    expect_algo(params, Algo::Naive)?;
    generate(params)
}

pub fn generate_iterative(params: &GenParams) -> Result<GenOutcome> {
    expect_algo(params, Algo::Iterative)?;
    generate(params)
}

pub fn generate_parallel(params: &GenParams) -> Result<GenOutcome> {
    expect_algo(params, Algo::Parallel)?;
    generate(params)
}

pub fn generate_hybrid(params: &GenParams) -> Result<GenOutcome> {
    expect_algo(params, Algo::Hybrid)?;
    generate(params)
}

fn expect_algo(params: &GenParams, algo: Algo) -> Result<()> {
    if params.algo != algo {
        return Err(Error::InvalidParams(format!(
            "expected algo {}, got {}",
            algo.name(),
            params.algo.name()
        )));
    }
    Ok(())
}

fn check_size(n: u64) -> Result<()> {
    if n == 0 || n % 2 == 0 {
        return Err(Error::InvalidSize(n));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleMethod {
    Rejection,
    CycleLemma,
}

/// A uniformly random preorder word with `n` letters (`n` odd): shuffle
/// `(n-1)/2` ones and `(n+1)/2` zeros, then rotate to start right after the
/// first position where the running +1/-1 sum hits its minimum. Exactly one
/// rotation of such a word is a valid preorder word.
pub fn cycle_lemma_word(src: &mut BitSource, n: u64) -> Result<Vec<u8>> {
    check_size(n)?;
    let n = n as usize;
    let ones = (n - 1) / 2;
    let mut word: Vec<u8> = std::iter::repeat(b'1')
        .take(ones)
        .chain(std::iter::repeat(b'0').take(n - ones))
        .collect();
    for i in (1..n).rev() {
        let j = src.next_below(i as u64 + 1) as usize;
        word.swap(i, j);
    }
    let mut sum = 0i64;
    let mut min = i64::MAX;
    let mut cut = 0;
    for (i, &c) in word.iter().enumerate() {
        sum += if c == b'1' { 1 } else { -1 };
        if sum < min {
            min = sum;
            cut = i + 1;
        }
    }
    word.rotate_left(cut % n);
    Ok(word)
}

/// Draws uniform trees of a fixed size, reusing one generator and store.
pub struct ConditionedSampler {
    method: SampleMethod,
    generator: Option<Generator>,
    master: BitSource,
    store: Option<NodeStore>,
    pub retry_budget: u64,
    attempts: u64,
}

impl ConditionedSampler {
    pub fn new(params: GenParams, method: SampleMethod) -> Result<Self> {
        params.validate()?;
        let master = BitSource::new(params.seed, &[]);
        let generator = match method {
            SampleMethod::Rejection => Some(Generator::new(params)?),
            SampleMethod::CycleLemma => None,
        };
        Ok(ConditionedSampler {
            method,
            generator,
            master,
            store: None,
            retry_budget: 100_000_000,
            attempts: 0,
        })
    }

    /// Cycle-lemma sampler driven directly by `master`.
    pub fn cycle_lemma(master: BitSource) -> Self {
        ConditionedSampler {
            method: SampleMethod::CycleLemma,
            generator: None,
            master,
            store: None,
            retry_budget: 0,
            attempts: 0,
        }
    }

    pub fn method(&self) -> SampleMethod {
        self.method
    }

    /// Engine runs so far (rejection) or samples drawn (cycle lemma).
    pub fn attempts(&self) -> u64 {
        self.attempts
    }

    pub fn bits_consumed(&self) -> u64 {
        self.master.bits_consumed()
    }

    /// Usage of the master source only; rejection attempts draw from its
    /// children.
    pub fn master_usage(&self) -> SourceUsage {
        self.master.usage()
    }

    pub fn sample(&mut self, n: u64) -> Result<Tree> {
        check_size(n)?;
        match self.method {
            SampleMethod::CycleLemma => {
                let word = cycle_lemma_word(&mut self.master, n)?;
                self.attempts += 1;
                let store = match self.store.take() {
                    Some(s) => s,
                    None => NodeStore::new(1, DEFAULT_SLAB_CAPACITY)?,
                };
                // The word is ASCII by construction.
                decode_bits_into(store, std::str::from_utf8(&word).expect("ascii word"))
            }
            SampleMethod::Rejection => {
                let gen = self.generator.as_mut().expect("rejection sampler has a generator");
                let (tree, tries) = gen.sample_rejection(&mut self.master, n, self.retry_budget)?;
                self.attempts += tries;
                Ok(tree)
            }
        }
    }

    /// Returns a sampled tree's memory for reuse.
    pub fn recycle(&mut self, tree: Tree) {
        match self.generator.as_mut() {
            Some(g) => g.recycle(tree),
            None => self.store = Some(tree.into_store()),
        }
    }

    /// Draws `count` samples and hands each to `f` before recycling it.
    pub fn for_each(&mut self, n: u64, count: u64, mut f: impl FnMut(&Tree) + Send) -> Result<()> {
        for _ in 0..count {
            let t = self.sample(n)?;
            f(&t);
            self.recycle(t);
        }
        Ok(())
    }

    /// Draws `count` preorder words of length `n`.
    pub fn encodings(&mut self, n: u64, count: u64) -> Result<Vec<String>> {
        if let (SampleMethod::Rejection, Some(gen)) = (self.method, self.generator.as_mut()) {
            check_size(n)?;
            let master = &mut self.master;
            let budget = self.retry_budget;
            let (words, tries) = gen.with_pool(|g| -> Result<(Vec<String>, u64)> {
                let mut out = Vec::with_capacity(count as usize);
                let mut tries = 0;
                for _ in 0..count {
                    let (t, k) = g.sample_rejection(master, n, budget)?;
                    tries += k;
                    out.push(t.encode_bits());
                    g.recycle(t);
                }
                Ok((out, tries))
            })?;
            self.attempts += tries;
            return Ok(words);
        }
        let mut out = Vec::with_capacity(count as usize);
        self.for_each(n, count, |t| out.push(t.encode_bits()))?;
        Ok(out)
    }
}

/// One uniformly random tree with exactly `n` nodes.
pub fn sample_conditioned(params: &GenParams, n: u64, method: SampleMethod) -> Result<Tree> {
    ConditionedSampler::new(params.clone(), method)?.sample(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::treestore::is_valid_encoding;

    fn params(algo: Algo) -> GenParams {
        GenParams::new(algo)
    }

    fn forced(algo: Algo, bits: &str) -> GenOutcome {
        let mut p = params(algo);
        if algo == Algo::Hybrid || algo == Algo::Parallel {
            p.threshold = 1;
            p.hybrid_switch = 1;
        }
        Generator::new(p).unwrap().generate_forced(ForcedBits::new(bits)).unwrap()
    }

    #[test]
    fn forced_streams_give_small_trees() {
        for algo in Algo::ALL {
            let leaf = forced(algo, "0");
            assert_eq!(leaf.tree().unwrap().encode_bits(), "0", "{algo:?}");
            let three = forced(algo, "100");
            assert_eq!(three.tree().unwrap().encode_bits(), "100", "{algo:?}");
        }
        for algo in [Algo::Naive, Algo::Iterative] {
            let five = forced(algo, "10100");
            assert_eq!(five.tree().unwrap().encode_bits(), "10100");
            assert_eq!(five.bits_consumed, 5);
        }
    }

    #[test]
    fn threshold_one_three_node_tree_spawns_nothing() {
        let out = forced(Algo::Parallel, "100");
        assert_eq!(out.tasks_spawned, 0);
        assert_eq!(out.nodes_generated, 3);
    }

    #[test]
    fn naive_and_iterative_agree() {
        for seed in 0..100 {
            let mut p = params(Algo::Naive);
            p.seed = seed;
            p.max_nodes = 1 << 20;
            let a = generate(&p).unwrap();
            p.algo = Algo::Iterative;
            let b = generate(&p).unwrap();
            assert_eq!(a.bits_consumed, b.bits_consumed);
            match (a.tree(), b.tree()) {
                (Some(x), Some(y)) => assert_eq!(x.encode_bits(), y.encode_bits()),
                (None, None) => {}
                _ => panic!("seed {seed}: engines disagree on overflow"),
            }
        }
    }

    #[test]
    fn conservation_and_parity() {
        for algo in Algo::ALL {
            for seed in 0..40 {
                let mut p = params(algo);
                p.seed = seed;
                p.threshold = 4;
                p.hybrid_switch = 8;
                p.workers = 2;
                p.max_nodes = 1 << 18;
                let out = generate(&p).unwrap();
                if let Some(t) = out.tree() {
                    let word = t.encode_bits();
                    assert!(is_valid_encoding(&word));
                    let ones = word.bytes().filter(|&c| c == b'1').count() as u64;
                    assert_eq!(out.nodes_generated, 1 + 2 * ones);
                    assert_eq!(out.nodes_generated, t.size());
                    assert_eq!(out.bits_consumed, t.size());
                }
            }
        }
    }

    #[test]
    fn overflow_is_exact_at_the_cap() {
        for algo in Algo::ALL {
            let mut p = params(algo);
            p.threshold = 2;
            p.hybrid_switch = 4;
            p.workers = 2;
            p.max_nodes = 1 << 22;
            let (seed, size) = (0..)
                .find_map(|s| {
                    p.seed = s;
                    let size = generate(&p).unwrap().tree().map(Tree::size)?;
                    (size > 101).then_some((s, size))
                })
                .unwrap();
            p.seed = seed;
            p.max_nodes = size;
            assert_eq!(generate(&p).unwrap().tree().unwrap().size(), size, "{algo:?}");
            p.max_nodes = size - 1;
            assert!(generate(&p).unwrap().is_overflow(), "{algo:?}");
        }
    }

    #[test]
    fn hybrid_without_switch_matches_iterative() {
        for seed in 0..50 {
            let mut p = params(Algo::Iterative);
            p.seed = seed;
            p.max_nodes = 1 << 20;
            let a = generate(&p).unwrap();
            p.algo = Algo::Hybrid;
            p.hybrid_switch = usize::MAX;
            p.workers = 2;
            let b = generate(&p).unwrap();
            assert_eq!(b.tasks_spawned, 0);
            assert_eq!(a.tree().map(Tree::encode_bits), b.tree().map(Tree::encode_bits));
        }
    }

    #[test]
    fn hybrid_switch_one_matches_parallel() {
        for seed in 0..50 {
            let mut p = params(Algo::Parallel);
            p.seed = seed;
            p.threshold = 1;
            p.hybrid_switch = 1;
            p.workers = 3;
            p.max_nodes = 1 << 20;
            let a = generate(&p).unwrap();
            p.algo = Algo::Hybrid;
            let b = generate(&p).unwrap();
            assert_eq!(a.tasks_spawned, b.tasks_spawned);
            assert_eq!(a.tree().map(Tree::encode_bits), b.tree().map(Tree::encode_bits));
        }
    }

    #[test]
    fn small_hybrid_trees_spawn_nothing() {
        for seed in 0..200 {
            let mut p = params(Algo::Hybrid);
            p.seed = seed;
            p.threshold = 2;
            p.hybrid_switch = 64;
            p.workers = 2;
            p.max_nodes = 1 << 20;
            let out = generate(&p).unwrap();
            // Fewer than 64 nodes means fewer than 64 were ever pending.
            if out.nodes_generated < 64 {
                assert_eq!(out.tasks_spawned, 0);
            }
        }
    }

    #[test]
    fn parallel_output_independent_of_workers() {
        for seed in 0..30 {
            let mut words = Vec::new();
            for workers in [1, 2, 8] {
                let mut p = params(Algo::Parallel);
                p.seed = seed;
                p.threshold = 2;
                p.workers = workers;
                p.max_nodes = 1 << 20;
                p.start_jitter_us = if workers == 8 { 50 } else { 0 };
                let out = generate(&p).unwrap();
                words.push(out.tree().map(Tree::encode_bits));
            }
            assert_eq!(words[0], words[1], "seed {seed}");
            assert_eq!(words[0], words[2], "seed {seed}");
        }
    }

    #[test]
    fn per_worker_mode_generates_valid_trees() {
        let mut p = params(Algo::Parallel);
        p.rng_mode = RngMode::PerWorker;
        p.workers = 3;
        p.threshold = 2;
        p.max_nodes = 1 << 16;
        let mut g = Generator::new(p).unwrap();
        for _ in 0..50 {
            let out = g.generate().unwrap();
            if let Some(t) = out.tree() {
                assert!(is_valid_encoding(&t.encode_bits()));
                assert_eq!(t.size(), out.nodes_generated);
            }
            if let Some(t) = out.into_tree() {
                g.recycle(t);
            }
        }
        // Sources persist: per-worker state survives across trees.
        assert_eq!(g.worker_sources.len(), 3);
        assert!(g.worker_sources.iter().any(|s| s.bits_consumed() > 0));
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = params(Algo::Hybrid);
        p.threshold = 8;
        p.hybrid_switch = 4;
        assert!(Generator::new(p).is_err());
        let mut p = params(Algo::Parallel);
        p.threshold = 0;
        assert!(Generator::new(p).is_err());
        let mut p = params(Algo::Naive);
        p.rng_mode = RngMode::PerWorker;
        assert!(Generator::new(p).is_err());
        assert!(generate_naive(&params(Algo::Iterative)).is_err());
    }

    #[test]
    fn conditioned_sizes() {
        let p = params(Algo::Iterative);
        for method in [SampleMethod::Rejection, SampleMethod::CycleLemma] {
            assert_eq!(sample_conditioned(&p, 1, method).unwrap().encode_bits(), "0");
            assert_eq!(sample_conditioned(&p, 8, method).unwrap_err(), Error::InvalidSize(8));
            assert_eq!(sample_conditioned(&p, 0, method).unwrap_err(), Error::InvalidSize(0));
            let mut s = ConditionedSampler::new(p.clone(), method).unwrap();
            for _ in 0..20 {
                let t = s.sample(15).unwrap();
                assert_eq!(t.size(), 15);
                s.recycle(t);
            }
        }
    }

    #[test]
    fn rejection_budget_exhaustion() {
        let mut s = ConditionedSampler::new(params(Algo::Iterative), SampleMethod::Rejection).unwrap();
        s.retry_budget = 1;
        // A 10001-node tree in one attempt is essentially impossible.
        assert_eq!(s.sample(10_001).unwrap_err(), Error::Overflow(1));
    }

    #[test]
    fn cycle_lemma_words_are_valid() {
        let mut src = BitSource::new(11, &[]);
        for n in [1u64, 3, 5, 9, 101, 2001] {
            for _ in 0..20 {
                let w = cycle_lemma_word(&mut src, n).unwrap();
                assert_eq!(w.len() as u64, n);
                assert!(is_valid_encoding(std::str::from_utf8(&w).unwrap()));
            }
        }
    }
}
