//! Capacity-bounded experience tables with pluggable samplers and removers
//! and an optional samples-per-insert rate limiter.
//!
//! A [`Table`] is shared by reference between workers. Blocking calls wait
//! on a condition variable and never hold the table lock while waiting;
//! [`Table::close`] wakes every waiter with [`Error::Closed`].

mod rate_limiter;
mod sum_tree;

pub use rate_limiter::{admit, Decision, Event, RateLimiterConfig};
pub use sum_tree::SumTree;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::adders::ItemSink;
use crate::error::{Error, Result};

/// Default priority exponent for prioritized sampling.
pub const DEFAULT_PRIORITY_EXPONENT: f64 = 0.6;
pub const DEFAULT_CAPACITY: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Sampler {
    /// Queue: oldest item first, removed once sampled.
    Fifo,
    /// Stack: newest item first, removed once sampled.
    Lifo,
    Uniform,
    /// Probability proportional to `priority^exponent`.
    PriorityWeighted { exponent: f64 },
}

impl Sampler {
    pub fn prioritized() -> Self {
        Sampler::PriorityWeighted { exponent: DEFAULT_PRIORITY_EXPONENT }
    }

    /// Queue-like samplers hand out each item exactly once.
    pub fn is_consuming(&self) -> bool {
        matches!(self, Sampler::Fifo | Sampler::Lifo)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Remover {
    #[default]
    Fifo,
    Lifo,
    LowestPriority,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableConfig {
    pub capacity: usize,
    pub sampler: Sampler,
    pub remover: Remover,
    pub rate_limiter: Option<RateLimiterConfig>,
    pub min_size_to_sample: usize,
    pub seed: u64,
}

impl TableConfig {
    pub fn uniform(capacity: usize) -> Self {
        Self {
            capacity,
            sampler: Sampler::Uniform,
            remover: Remover::Fifo,
            rate_limiter: None,
            min_size_to_sample: 1,
            seed: 0,
        }
    }

    pub fn prioritized(capacity: usize, exponent: f64) -> Self {
        Self { sampler: Sampler::PriorityWeighted { exponent }, ..Self::uniform(capacity) }
    }

    pub fn queue(capacity: usize) -> Self {
        Self { sampler: Sampler::Fifo, ..Self::uniform(capacity) }
    }

    pub fn with_rate_limiter(mut self, limiter: RateLimiterConfig) -> Self {
        self.rate_limiter = Some(limiter);
        self
    }

    pub fn with_min_size(mut self, min_size: usize) -> Self {
        self.min_size_to_sample = min_size;
        self
    }

    pub fn with_remover(mut self, remover: Remover) -> Self {
        self.remover = remover;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return Err(Error::Config("table capacity must be >= 1".into()));
        }
        if self.min_size_to_sample == 0 || self.min_size_to_sample > self.capacity {
            return Err(Error::Config(format!(
                "min_size_to_sample {} must be in 1..={}",
                self.min_size_to_sample, self.capacity
            )));
        }
        if let Sampler::PriorityWeighted { exponent } = self.sampler {
            if !(exponent >= 0.0 && exponent.is_finite()) {
                return Err(Error::Config(format!("priority exponent must be >= 0, got {exponent}")));
            }
        }
        if let Some(rl) = &self.rate_limiter {
            rl.validate()?;
            if rl.min_size_to_sample > self.capacity {
                return Err(Error::Config("rate limiter min size exceeds capacity".into()));
            }
        }
        Ok(())
    }

    fn min_size(&self) -> usize {
        self.rate_limiter.map_or(self.min_size_to_sample, |rl| rl.min_size_to_sample.max(self.min_size_to_sample))
    }
}

#[derive(Clone, Debug)]
pub struct SampledItem {
    pub key: u64,
    pub payload: Arc<[u8]>,
    pub priority: f64,
}

#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub items: Vec<SampledItem>,
    /// Selection probability of each item at the instant it was drawn.
    pub probabilities: Vec<f64>,
    /// Table size when the first item was drawn.
    pub table_size: usize,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn keys(&self) -> Vec<u64> {
        self.items.iter().map(|i| i.key).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TableStats {
    pub size: usize,
    pub capacity: usize,
    pub total_inserts: u64,
    pub total_sampled_items: u64,
    pub evictions: u64,
    /// Sampled items per insert; 0 before the first insert.
    pub current_ratio: f64,
}

#[derive(Debug)]
struct Item {
    payload: Arc<[u8]>,
    priority: f64,
    insert_index: u64,
    slot: usize,
}

#[derive(Debug)]
struct Inner {
    items: HashMap<u64, Item>,
    /// Dense list of keys; `items[k].slot` indexes it and the sum tree.
    slots: Vec<u64>,
    weights: SumTree,
    by_insertion: BTreeMap<u64, u64>,
    by_priority: BTreeSet<(u64, u64)>,
    next_key: u64,
    inserts: u64,
    sampled: u64,
    evictions: u64,
    closed: bool,
    rng: StdRng,
}

impl Inner {
    fn size(&self) -> usize {
        self.items.len()
    }

    fn remove(&mut self, key: u64) -> Item {
        let item = self.items.remove(&key).expect("key present");
        let last = self.slots.len() - 1;
        if item.slot != last {
            let moved = self.slots[last];
            self.slots[item.slot] = moved;
            let w = self.weights.get(last);
            self.weights.set(item.slot, w);
            self.items.get_mut(&moved).expect("moved key").slot = item.slot;
        }
        self.slots.pop();
        self.weights.pop();
        self.by_insertion.remove(&item.insert_index);
        self.by_priority.remove(&(item.priority.to_bits(), item.insert_index));
        item
    }
}

fn weight(sampler: Sampler, priority: f64) -> f64 {
    match sampler {
        Sampler::PriorityWeighted { exponent } if exponent == 0.0 => 1.0,
        Sampler::PriorityWeighted { exponent } => priority.powf(exponent),
        _ => 1.0,
    }
}

pub struct Table {
    config: TableConfig,
    inner: Mutex<Inner>,
    changed: Condvar,
}

impl std::fmt::Debug for Table {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Table").field("config", &self.config).field("stats", &self.stats()).finish()
    }
}

impl Table {
    pub fn new(config: TableConfig) -> Result<Self> {
        config.validate()?;
        let rng = StdRng::seed_from_u64(config.seed);
        Ok(Self {
            config,
            inner: Mutex::new(Inner {
                items: HashMap::new(),
                slots: Vec::new(),
                weights: SumTree::new(),
                by_insertion: BTreeMap::new(),
                by_priority: BTreeSet::new(),
                next_key: 0,
                inserts: 0,
                sampled: 0,
                evictions: 0,
                closed: false,
                rng,
            }),
            changed: Condvar::new(),
        })
    }

    pub fn config(&self) -> &TableConfig {
        &self.config
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn insert_allowed(&self, inner: &Inner) -> bool {
        if self.config.sampler.is_consuming() && inner.size() >= self.config.capacity {
            return false;
        }
        admit(self.config.rate_limiter.as_ref(), inner.inserts, inner.sampled, inner.size(), Event::Insert)
            == Decision::Allow
    }

    /// The minimum size gates the start of a batch; a consuming sampler may
    /// then drain below it to finish the batch.
    fn sample_allowed(&self, inner: &Inner, started: bool) -> bool {
        let draining = started && self.config.sampler.is_consuming();
        let size = inner.size();
        if size == 0 || (!draining && size < self.config.min_size()) {
            return false;
        }
        let size = if draining { size.max(self.config.min_size()) } else { size };
        admit(self.config.rate_limiter.as_ref(), inner.inserts, inner.sampled, size, Event::Sample) == Decision::Allow
    }

    /// Inserts an item, blocking while the rate limiter (or a full queue)
    /// refuses it. Returns the new key.
    pub fn insert(&self, payload: impl Into<Arc<[u8]>>, priority: f64) -> Result<u64> {
        self.insert_until(payload.into(), priority, None)?.ok_or(Error::Closed)
    }

    /// Like [`Table::insert`] but gives up after `timeout`, returning `None`.
    pub fn insert_timeout(&self, payload: impl Into<Arc<[u8]>>, priority: f64, timeout: Duration) -> Result<Option<u64>> {
        self.insert_until(payload.into(), priority, Some(Instant::now() + timeout))
    }

    fn insert_until(&self, payload: Arc<[u8]>, priority: f64, deadline: Option<Instant>) -> Result<Option<u64>> {
        if !(priority >= 0.0 && priority.is_finite()) {
            return Err(Error::InvalidArgument(format!("priority must be finite and >= 0, got {priority}")));
        }
        let mut inner = self.lock();
        loop {
            if inner.closed {
                return Err(Error::Closed);
            }
            if self.insert_allowed(&inner) {
                break;
            }
            match self.wait(inner, deadline) {
                Some(guard) => inner = guard,
                None => return Ok(None),
            }
        }
        if inner.size() >= self.config.capacity {
            let victim = match self.config.remover {
                Remover::Fifo => *inner.by_insertion.values().next().expect("non-empty"),
                Remover::Lifo => *inner.by_insertion.values().next_back().expect("non-empty"),
                Remover::LowestPriority => {
                    let (_, index) = *inner.by_priority.iter().next().expect("non-empty");
                    inner.by_insertion[&index]
                }
            };
            inner.remove(victim);
            inner.evictions += 1;
        }
        let key = inner.next_key;
        inner.next_key += 1;
        let insert_index = inner.inserts;
        inner.inserts += 1;
        let slot = inner.slots.len();
        inner.slots.push(key);
        inner.weights.push(weight(self.config.sampler, priority));
        inner.by_insertion.insert(insert_index, key);
        inner.by_priority.insert((priority.to_bits(), insert_index));
        inner.items.insert(key, Item { payload, priority, insert_index, slot });
        drop(inner);
        self.changed.notify_all();
        Ok(Some(key))
    }

    /// Draws `batch_size` items, blocking until each one is admitted.
    /// Never returns a short batch.
    pub fn sample(&self, batch_size: usize) -> Result<SampleBatch> {
        self.sample_until(batch_size, None)?.ok_or(Error::Closed)
    }

    /// Like [`Table::sample`] but gives up after `timeout`. Items drawn
    /// before the timeout are still counted as sampled.
    pub fn sample_timeout(&self, batch_size: usize, timeout: Duration) -> Result<Option<SampleBatch>> {
        self.sample_until(batch_size, Some(Instant::now() + timeout))
    }

    /// Whether `batch_size` items could be sampled right now without blocking.
    pub fn can_sample(&self, batch_size: usize) -> bool {
        let inner = self.lock();
        if inner.closed || inner.size() < self.config.min_size() {
            return false;
        }
        if self.config.sampler.is_consuming() && inner.size() < batch_size {
            return false;
        }
        let extra = batch_size.saturating_sub(1) as u64;
        admit(self.config.rate_limiter.as_ref(), inner.inserts, inner.sampled + extra, inner.size(), Event::Sample)
            == Decision::Allow
    }

    fn sample_until(&self, batch_size: usize, deadline: Option<Instant>) -> Result<Option<SampleBatch>> {
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        let mut items = Vec::with_capacity(batch_size);
        let mut probabilities = Vec::with_capacity(batch_size);
        let mut table_size = 0;
        let mut inner = self.lock();
        while items.len() < batch_size {
            if inner.closed {
                return Err(Error::Closed);
            }
            if !self.sample_allowed(&inner, !items.is_empty()) {
                match self.wait(inner, deadline) {
                    Some(guard) => inner = guard,
                    None => return Ok(None),
                }
                continue;
            }
            if items.is_empty() {
                table_size = inner.size();
            }
            let (item, probability) = self.draw(&mut inner);
            items.push(item);
            probabilities.push(probability);
            inner.sampled += 1;
            // Let blocked inserters re-check between items.
            self.changed.notify_all();
        }
        drop(inner);
        Ok(Some(SampleBatch { items, probabilities, table_size }))
    }

    fn draw(&self, inner: &mut Inner) -> (SampledItem, f64) {
        let n = inner.size();
        let (key, probability) = match self.config.sampler {
            Sampler::Fifo => (*inner.by_insertion.values().next().expect("non-empty"), 1.0),
            Sampler::Lifo => (*inner.by_insertion.values().next_back().expect("non-empty"), 1.0),
            Sampler::Uniform => (inner.slots[inner.rng.gen_range(0..n)], 1.0 / n as f64),
            Sampler::PriorityWeighted { .. } => {
                let total = inner.weights.total();
                if total > 0.0 {
                    let mass = inner.rng.gen::<f64>() * total;
                    let slot = inner.weights.find(mass);
                    (inner.slots[slot], inner.weights.get(slot) / total)
                } else {
                    (inner.slots[inner.rng.gen_range(0..n)], 1.0 / n as f64)
                }
            }
        };
        let sampled = if self.config.sampler.is_consuming() {
            let item = inner.remove(key);
            SampledItem { key, payload: item.payload, priority: item.priority }
        } else {
            let item = &inner.items[&key];
            SampledItem { key, payload: item.payload.clone(), priority: item.priority }
        };
        (sampled, probability)
    }

    /// Waits for a state change. Returns `None` once the deadline passes.
    fn wait<'a>(&'a self, guard: MutexGuard<'a, Inner>, deadline: Option<Instant>) -> Option<MutexGuard<'a, Inner>> {
        match deadline {
            None => Some(self.changed.wait(guard).unwrap_or_else(|e| e.into_inner())),
            Some(deadline) => {
                let now = Instant::now();
                if now >= deadline {
                    return None;
                }
                let (guard, _) = self.changed.wait_timeout(guard, deadline - now).unwrap_or_else(|e| e.into_inner());
                Some(guard)
            }
        }
    }

    /// Sets new priorities for the keys still present. Returns how many
    /// were updated; evicted keys are skipped.
    pub fn update_priorities(&self, keys: &[u64], priorities: &[f64]) -> Result<usize> {
        if keys.len() != priorities.len() {
            return Err(Error::Shape(format!("{} keys but {} priorities", keys.len(), priorities.len())));
        }
        if let Some(p) = priorities.iter().find(|p| !(**p >= 0.0 && p.is_finite())) {
            return Err(Error::InvalidArgument(format!("priority must be finite and >= 0, got {p}")));
        }
        let mut inner = self.lock();
        let mut updated = 0;
        for (key, priority) in keys.iter().zip(priorities) {
            let Some(item) = inner.items.get_mut(key) else {
                continue;
            };
            let old = (item.priority.to_bits(), item.insert_index);
            item.priority = *priority;
            let (slot, index) = (item.slot, item.insert_index);
            inner.by_priority.remove(&old);
            inner.by_priority.insert((priority.to_bits(), index));
            inner.weights.set(slot, weight(self.config.sampler, *priority));
            updated += 1;
        }
        Ok(updated)
    }

    pub fn stats(&self) -> TableStats {
        let inner = self.lock();
        TableStats {
            size: inner.size(),
            capacity: self.config.capacity,
            total_inserts: inner.inserts,
            total_sampled_items: inner.sampled,
            evictions: inner.evictions,
            current_ratio: if inner.inserts == 0 { 0.0 } else { inner.sampled as f64 / inner.inserts as f64 },
        }
    }

    pub fn size(&self) -> usize {
        self.lock().size()
    }

    /// Every item currently stored, oldest first.
    pub fn snapshot_items(&self) -> Vec<SampledItem> {
        let inner = self.lock();
        inner
            .by_insertion
            .values()
            .map(|k| {
                let item = &inner.items[k];
                SampledItem { key: *k, payload: item.payload.clone(), priority: item.priority }
            })
            .collect()
    }

    /// Exact selection probability of every stored key under the sampler.
    pub fn selection_probabilities(&self) -> Vec<(u64, f64)> {
        let inner = self.lock();
        let n = inner.size();
        let total = inner.weights.total();
        inner
            .by_insertion
            .values()
            .enumerate()
            .map(|(rank, key)| {
                let p = match self.config.sampler {
                    Sampler::Fifo => (rank == 0) as u8 as f64,
                    Sampler::Lifo => (rank + 1 == n) as u8 as f64,
                    Sampler::Uniform => 1.0 / n as f64,
                    Sampler::PriorityWeighted { .. } if total > 0.0 => {
                        inner.weights.get(inner.items[key].slot) / total
                    }
                    Sampler::PriorityWeighted { .. } => 1.0 / n as f64,
                };
                (*key, p)
            })
            .collect()
    }

    /// Shuts the table down; all current and future blocking calls fail
    /// with [`Error::Closed`].
    pub fn close(&self) {
        self.lock().closed = true;
        self.changed.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.lock().closed
    }
}

impl ItemSink for Table {
    fn insert_item(&self, payload: Vec<u8>, priority: f64) -> Result<u64> {
        self.insert(payload, priority)
    }
}
