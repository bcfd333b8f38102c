//! Slab storage for binary trees.
//!
//! Each worker owns a chain of fixed-capacity slabs. Children are always
//! allocated as an adjacent pair in one slab, so a node record only stores
//! the handle of its first child; the second child sits at the next offset.

use std::collections::VecDeque;
use std::fmt::{self, Write as _};

use crate::error::{Error, Result};

pub const DEFAULT_SLAB_CAPACITY: usize = 1 << 16;

const WORKER_BITS: u32 = 16;
const SLAB_BITS: u32 = 24;
const OFFSET_BITS: u32 = 24;
const MAX_SLABS: usize = 1 << SLAB_BITS;
pub const MAX_SLAB_CAPACITY: usize = 1 << OFFSET_BITS;
pub const MAX_WORKERS: usize = 1 << WORKER_BITS;

// Record value of a leaf; no valid handle packs to all ones because offsets
// of first children are even.
const NIL: u64 = u64::MAX;

/// Address of one node record: `(worker, slab, offset)` packed into 64 bits.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeHandle(u64);

impl NodeHandle {
    pub fn new(worker_id: usize, slab_index: usize, offset: usize) -> Self {
        debug_assert!(worker_id < MAX_WORKERS && slab_index < MAX_SLABS && offset < MAX_SLAB_CAPACITY);
        NodeHandle(((worker_id as u64) << (SLAB_BITS + OFFSET_BITS)) | ((slab_index as u64) << OFFSET_BITS) | offset as u64)
    }

    #[inline]
    pub fn worker_id(self) -> usize {
        (self.0 >> (SLAB_BITS + OFFSET_BITS)) as usize
    }

    #[inline]
    pub fn slab_index(self) -> usize {
        ((self.0 >> OFFSET_BITS) & ((1 << SLAB_BITS) - 1)) as usize
    }

    #[inline]
    pub fn offset(self) -> usize {
        (self.0 & ((1 << OFFSET_BITS) - 1)) as usize
    }

    /// The second node of the pair whose first node is `self`.
    #[inline]
    pub fn sibling(self) -> Self {
        NodeHandle(self.0 + 1)
    }
}

impl fmt::Debug for NodeHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeHandle({}:{}:{})", self.worker_id(), self.slab_index(), self.offset())
    }
}

/// Read-only view of one slab in a worker's chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SlabInfo {
    pub owner_worker: usize,
    pub capacity: usize,
    pub used: usize,
    /// Index of the successor slab in the owner's chain.
    pub next: Option<usize>,
}

/// The slab chain of one worker. Only the owner writes to it while a tree is
/// being generated.
#[derive(Debug)]
pub struct WorkerArena {
    owner: usize,
    capacity: usize,
    slabs: Vec<Vec<u64>>,
    // Slabs in use; the rest are retained for reuse after a reset.
    active: usize,
}

impl WorkerArena {
    fn new(owner: usize, capacity: usize) -> Self {
        WorkerArena {
            owner,
            capacity,
            slabs: Vec::new(),
            active: 0,
        }
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    fn open_slab(&mut self) -> Result<()> {
        if self.active == self.slabs.len() {
            if self.slabs.len() == MAX_SLABS {
                return Err(Error::StoreExhausted("slab index space"));
            }
            let mut slab = Vec::new();
            slab.try_reserve_exact(self.capacity)
                .map_err(|_| Error::StoreExhausted("slab allocation failed"))?;
            self.slabs.push(slab);
        } else {
            self.slabs[self.active].clear();
        }
        self.active += 1;
        Ok(())
    }

    /// Two adjacent leaf records in the current slab, opening a new slab when
    /// the current one is full.
    #[inline]
    pub fn alloc_pair(&mut self) -> Result<(NodeHandle, NodeHandle)> {
        if self.active == 0 || self.slabs[self.active - 1].len() + 2 > self.capacity {
            self.open_slab()?;
        }
        let slab_index = self.active - 1;
        let slab = &mut self.slabs[slab_index];
        let offset = slab.len();
        slab.push(NIL);
        slab.push(NIL);
        let first = NodeHandle::new(self.owner, slab_index, offset);
        Ok((first, first.sibling()))
    }

    #[inline]
    pub fn set_first_child(&mut self, parent: NodeHandle, first_child: NodeHandle) {
        debug_assert_eq!(parent.worker_id(), self.owner, "write into a foreign slab");
        self.slabs[parent.slab_index()][parent.offset()] = first_child.0;
    }

    #[inline]
    fn first_child(&self, node: NodeHandle) -> Option<NodeHandle> {
        match self.slabs[node.slab_index()][node.offset()] {
            NIL => None,
            raw => Some(NodeHandle(raw)),
        }
    }

    pub fn slab_count(&self) -> usize {
        self.active
    }

    pub fn records_used(&self) -> usize {
        self.slabs[..self.active].iter().map(Vec::len).sum()
    }

    pub fn slab_info(&self, index: usize) -> Option<SlabInfo> {
        (index < self.active).then(|| SlabInfo {
            owner_worker: self.owner,
            capacity: self.capacity,
            used: self.slabs[index].len(),
            next: (index + 1 < self.active).then_some(index + 1),
        })
    }

    fn reset(&mut self) {
        for slab in &mut self.slabs[..self.active] {
            slab.clear();
        }
        self.active = 0;
    }
}

/// Per-worker slab chains. Memory is kept across [`reset`](Self::reset) so a
/// process can generate many trees without returning to the allocator.
#[derive(Debug)]
pub struct NodeStore {
    capacity: usize,
    arenas: Vec<WorkerArena>,
}

impl NodeStore {
    pub fn new(workers: usize, slab_capacity: usize) -> Result<Self> {
        if slab_capacity < 2 || slab_capacity % 2 != 0 || slab_capacity > MAX_SLAB_CAPACITY {
            return Err(Error::InvalidParams(format!(
                "slab capacity must be even and in [2, {MAX_SLAB_CAPACITY}], got {slab_capacity}"
            )));
        }
        let mut store = NodeStore {
            capacity: slab_capacity,
            arenas: Vec::new(),
        };
        store.ensure_workers(workers.max(1))?;
        Ok(store)
    }

    /// Registers workers `0..workers` if they are not already known.
    pub fn ensure_workers(&mut self, workers: usize) -> Result<()> {
        if workers > MAX_WORKERS {
            return Err(Error::InvalidParams(format!("at most {MAX_WORKERS} workers")));
        }
        while self.arenas.len() < workers {
            let id = self.arenas.len();
            self.arenas.push(WorkerArena::new(id, self.capacity));
        }
        Ok(())
    }

    pub fn workers(&self) -> usize {
        self.arenas.len()
    }

    pub fn slab_capacity(&self) -> usize {
        self.capacity
    }

    pub fn alloc_pair(&mut self, worker_id: usize) -> Result<(NodeHandle, NodeHandle)> {
        self.arena_mut(worker_id)?.alloc_pair()
    }

    /// A root record. Takes a whole pair so later pairs stay even-aligned;
    /// the sibling slot is left unused.
    pub fn alloc_root(&mut self, worker_id: usize) -> Result<NodeHandle> {
        Ok(self.alloc_pair(worker_id)?.0)
    }

    pub fn arena(&self, worker_id: usize) -> Result<&WorkerArena> {
        self.arenas.get(worker_id).ok_or(Error::UnknownWorker(worker_id))
    }

    pub fn arena_mut(&mut self, worker_id: usize) -> Result<&mut WorkerArena> {
        self.arenas.get_mut(worker_id).ok_or(Error::UnknownWorker(worker_id))
    }

    pub(crate) fn take_arenas(&mut self) -> Vec<WorkerArena> {
        std::mem::take(&mut self.arenas)
    }

    pub(crate) fn restore_arenas(&mut self, arenas: Vec<WorkerArena>) {
        debug_assert!(self.arenas.is_empty());
        self.arenas = arenas;
    }

    #[inline]
    pub fn first_child(&self, node: NodeHandle) -> Option<NodeHandle> {
        self.arenas[node.worker_id()].first_child(node)
    }

    pub fn set_first_child(&mut self, parent: NodeHandle, first_child: NodeHandle) {
        self.arenas[parent.worker_id()].set_first_child(parent, first_child);
    }

    pub fn slab_count(&self, worker_id: usize) -> usize {
        self.arenas.get(worker_id).map_or(0, WorkerArena::slab_count)
    }

    pub fn total_slabs(&self) -> usize {
        self.arenas.iter().map(WorkerArena::slab_count).sum()
    }

    pub fn reset(&mut self) {
        self.arenas.iter_mut().for_each(WorkerArena::reset);
    }
}

/// An immutable binary tree together with the store holding its records.
pub struct Tree {
    store: NodeStore,
    root: NodeHandle,
    node_count: u64,
}

impl Tree {
    pub(crate) fn from_parts(store: NodeStore, root: NodeHandle, node_count: u64) -> Self {
        debug_assert!(node_count % 2 == 1);
        Tree {
            store,
            root,
            node_count,
        }
    }

    pub fn root(&self) -> NodeHandle {
        self.root
    }

    pub fn size(&self) -> u64 {
        self.node_count
    }

    pub fn internal_count(&self) -> u64 {
        self.node_count / 2
    }

    pub fn leaf_count(&self) -> u64 {
        self.node_count / 2 + 1
    }

    pub fn store(&self) -> &NodeStore {
        &self.store
    }

    /// Gives the store back for reuse; its contents are reset.
    pub fn into_store(mut self) -> NodeStore {
        self.store.reset();
        self.store
    }

    #[inline]
    pub fn children(&self, node: NodeHandle) -> Option<(NodeHandle, NodeHandle)> {
        self.store.first_child(node).map(|c| (c, c.sibling()))
    }

    #[inline]
    pub fn is_leaf(&self, node: NodeHandle) -> bool {
        self.store.first_child(node).is_none()
    }

    /// Handles in depth-first preorder, left before right.
    pub fn preorder(&self) -> Preorder<'_> {
        Preorder {
            tree: self,
            stack: vec![self.root],
        }
    }

    /// Preorder word: '1' per internal node, '0' per leaf.
    pub fn encode_bits(&self) -> String {
        let mut out = String::with_capacity(self.node_count as usize);
        for node in self.preorder() {
            out.push(if self.is_leaf(node) { '0' } else { '1' });
        }
        out
    }

    /// Number of nodes on the longest root-to-leaf path.
    pub fn height_nodes(&self) -> u64 {
        let mut best = 0;
        let mut stack = vec![(self.root, 1u64)];
        while let Some((node, depth)) = stack.pop() {
            match self.children(node) {
                Some((l, r)) => {
                    stack.push((r, depth + 1));
                    stack.push((l, depth + 1));
                }
                None => best = best.max(depth),
            }
        }
        best
    }

    /// Nodes on the always-go-left path, terminating leaf included.
    pub fn left_spine(&self) -> u64 {
        let mut len = 1;
        let mut node = self.root;
        while let Some((l, _)) = self.children(node) {
            len += 1;
            node = l;
        }
        len
    }

    /// Number of nodes on each level, root level first.
    pub fn level_widths(&self) -> Vec<u64> {
        let mut widths = Vec::new();
        let mut frontier = VecDeque::from([(self.root, 0usize)]);
        while let Some((node, level)) = frontier.pop_front() {
            if widths.len() == level {
                widths.push(0);
            }
            widths[level] += 1;
            if let Some((l, r)) = self.children(node) {
                frontier.push_back((l, level + 1));
                frontier.push_back((r, level + 1));
            }
        }
        widths
    }

    /// DOT digraph with nodes numbered in preorder.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph tree {\n");
        let mut next_id = 0u64;
        let mut stack = vec![(self.root, None::<u64>)];
        while let Some((node, parent)) = stack.pop() {
            let id = next_id;
            next_id += 1;
            let shape = if self.is_leaf(node) { "box" } else { "circle" };
            let _ = writeln!(out, "  n{id} [shape={shape}];");
            if let Some(p) = parent {
                let _ = writeln!(out, "  n{p} -> n{id};");
            }
            if let Some((l, r)) = self.children(node) {
                stack.push((r, Some(id)));
                stack.push((l, Some(id)));
            }
        }
        out.push_str("}\n");
        out
    }
}

impl fmt::Debug for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tree")
            .field("root", &self.root)
            .field("node_count", &self.node_count)
            .finish()
    }
}

pub struct Preorder<'a> {
    tree: &'a Tree,
    stack: Vec<NodeHandle>,
}

impl Iterator for Preorder<'_> {
    type Item = NodeHandle;

    fn next(&mut self) -> Option<NodeHandle> {
        let node = self.stack.pop()?;
        if let Some((l, r)) = self.tree.children(node) {
            self.stack.push(r);
            self.stack.push(l);
        }
        Some(node)
    }
}

/// Parses a preorder word into a fresh single-worker store.
pub fn decode_bits(s: &str) -> Result<Tree> {
    let capacity = (s.len() + 1).next_power_of_two().clamp(2, DEFAULT_SLAB_CAPACITY);
    decode_bits_into(NodeStore::new(1, capacity)?, s)
}

/// Parses a preorder word into `store` (reset first), using worker 0.
///
/// Accepts `s` iff every proper prefix has no more '0's than '1's and the
/// whole word has exactly one more '0' than '1'.
pub fn decode_bits_into(mut store: NodeStore, s: &str) -> Result<Tree> {
    store.reset();
    let bytes = s.as_bytes();
    if bytes.is_empty() {
        return Err(Error::MalformedEncoding {
            index: 0,
            reason: "empty word",
        });
    }
    let root = store.alloc_root(0)?;
    let arena = store.arena_mut(0)?;
    let mut pending = vec![root];
    for (index, &c) in bytes.iter().enumerate() {
        let node = pending.pop().ok_or(Error::MalformedEncoding {
            index,
            reason: "characters after the tree is complete",
        })?;
        match c {
            b'0' => {}
            b'1' => {
                let (l, r) = arena.alloc_pair()?;
                arena.set_first_child(node, l);
                pending.push(r);
                pending.push(l);
            }
            _ => {
                return Err(Error::MalformedEncoding {
                    index,
                    reason: "expected '0' or '1'",
                })
            }
        }
    }
    if !pending.is_empty() {
        return Err(Error::MalformedEncoding {
            index: bytes.len(),
            reason: "word ended with pending leaves",
        });
    }
    Ok(Tree::from_parts(store, root, bytes.len() as u64))
}

/// True iff `s` is a valid preorder word.
pub fn is_valid_encoding(s: &str) -> bool {
    let mut pending = 1i64;
    for c in s.bytes() {
        if pending == 0 {
            return false;
        }
        pending += match c {
            b'1' => 1,
            b'0' => -1,
            _ => return false,
        };
    }
    pending == 0 && !s.is_empty()
}
