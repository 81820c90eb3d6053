use std::sync::{Arc, Mutex};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;

use crate::adders::Payload;
use crate::error::{Error, Result};
use crate::replay::{SampleBatch, Table};

/// A learner batch: encoded items plus what the learner needs for
/// importance correction and priority updates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperienceBatch {
    pub keys: Vec<u64>,
    pub payloads: Vec<Arc<[u8]>>,
    /// Probability with which each item was selected.
    pub probabilities: Vec<f64>,
    /// Size of the table each item came from, at sampling time.
    pub table_sizes: Vec<usize>,
    /// Provenance: true for items drawn from the demonstration table.
    pub from_demo: Vec<bool>,
}

impl ExperienceBatch {
    pub fn from_sample(batch: SampleBatch, from_demo: bool) -> Self {
        let n = batch.items.len();
        Self {
            keys: batch.items.iter().map(|i| i.key).collect(),
            payloads: batch.items.into_iter().map(|i| i.payload).collect(),
            probabilities: batch.probabilities,
            table_sizes: vec![batch.table_size; n],
            from_demo: vec![from_demo; n],
        }
    }

    pub fn len(&self) -> usize {
        self.payloads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payloads.is_empty()
    }

    pub fn extend(&mut self, other: ExperienceBatch) {
        self.keys.extend(other.keys);
        self.payloads.extend(other.payloads);
        self.probabilities.extend(other.probabilities);
        self.table_sizes.extend(other.table_sizes);
        self.from_demo.extend(other.from_demo);
    }

    pub fn decode<T: Payload>(&self) -> Result<Vec<T>> {
        self.payloads.iter().map(|p| T::decode(p)).collect()
    }

    /// `(1 / (N p_i))^beta` per item. Uniform sampling gives all ones.
    pub fn importance_weights(&self, beta: f64) -> Vec<f64> {
        self.probabilities
            .iter()
            .zip(&self.table_sizes)
            .map(|(p, n)| {
                let np = *n as f64 * p;
                if beta == 0.0 || np == 1.0 {
                    1.0
                } else {
                    (1.0 / np).powf(beta)
                }
            })
            .collect()
    }
}

/// Where a learner draws its batches from.
pub trait ExperienceSource: Send + Sync {
    /// Blocks until a batch is available (or the source is closed).
    fn sample(&self, batch_size: usize) -> Result<ExperienceBatch>;

    fn update_priorities(&self, batch: &ExperienceBatch, priorities: &[f64]) -> Result<()>;

    fn can_sample(&self, batch_size: usize) -> bool;
}

/// Samples from one replay table.
pub struct TableSource {
    table: Arc<Table>,
}

impl TableSource {
    pub fn new(table: Arc<Table>) -> Self {
        Self { table }
    }

    pub fn table(&self) -> &Arc<Table> {
        &self.table
    }
}

impl ExperienceSource for TableSource {
    fn sample(&self, batch_size: usize) -> Result<ExperienceBatch> {
        Ok(ExperienceBatch::from_sample(self.table.sample(batch_size)?, false))
    }

    fn update_priorities(&self, batch: &ExperienceBatch, priorities: &[f64]) -> Result<()> {
        self.table.update_priorities(&batch.keys, priorities)?;
        Ok(())
    }

    fn can_sample(&self, batch_size: usize) -> bool {
        self.table.can_sample(batch_size)
    }
}

/// Interleaves a static demonstration table with the agent's own table:
/// `ceil(demo_ratio * B)` items come from the demonstrations.
pub struct MixedSource {
    agent: Arc<Table>,
    demo: Arc<Table>,
    demo_ratio: f64,
}

impl MixedSource {
    pub fn new(agent: Arc<Table>, demo: Arc<Table>, demo_ratio: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&demo_ratio) {
            return Err(Error::Config(format!("demo_ratio {demo_ratio} not in [0, 1]")));
        }
        if demo_ratio > 0.0 && demo.size() == 0 {
            return Err(Error::Config("demonstration table is empty but demo_ratio > 0".into()));
        }
        Ok(Self { agent, demo, demo_ratio })
    }

    /// Number of demonstration items in a batch of `batch_size`.
    pub fn demo_count(&self, batch_size: usize) -> usize {
        ((self.demo_ratio * batch_size as f64).ceil() as usize).min(batch_size)
    }

    pub fn agent_table(&self) -> &Arc<Table> {
        &self.agent
    }
}

impl ExperienceSource for MixedSource {
    fn sample(&self, batch_size: usize) -> Result<ExperienceBatch> {
        let k = self.demo_count(batch_size);
        let mut batch = if k < batch_size {
            ExperienceBatch::from_sample(self.agent.sample(batch_size - k)?, false)
        } else {
            ExperienceBatch::default()
        };
        if k > 0 {
            batch.extend(ExperienceBatch::from_sample(self.demo.sample(k)?, true));
        }
        Ok(batch)
    }

    fn update_priorities(&self, batch: &ExperienceBatch, priorities: &[f64]) -> Result<()> {
        for (table, demo) in [(&self.agent, false), (&self.demo, true)] {
            let (keys, prios): (Vec<u64>, Vec<f64>) = batch
                .keys
                .iter()
                .zip(priorities)
                .zip(&batch.from_demo)
                .filter(|(_, d)| **d == demo)
                .map(|((k, p), _)| (*k, *p))
                .unzip();
            table.update_priorities(&keys, &prios)?;
        }
        Ok(())
    }

    fn can_sample(&self, batch_size: usize) -> bool {
        let k = self.demo_count(batch_size);
        (k == batch_size || self.agent.can_sample(batch_size - k)) && (k == 0 || self.demo.can_sample(k))
    }
}

/// Streams shuffled minibatches from a fixed in-memory dataset, one
/// permutation per epoch.
pub struct DatasetSource {
    records: Vec<Arc<[u8]>>,
    state: Mutex<(StdRng, Vec<usize>, usize)>,
}

impl DatasetSource {
    pub fn new(records: Vec<Vec<u8>>, seed: u64) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let records: Vec<Arc<[u8]>> = records.into_iter().map(Arc::from).collect();
        let mut rng = StdRng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..records.len()).collect();
        order.shuffle(&mut rng);
        Ok(Self { records, state: Mutex::new((rng, order, 0)) })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl ExperienceSource for DatasetSource {
    fn sample(&self, batch_size: usize) -> Result<ExperienceBatch> {
        let mut guard = self.state.lock().expect("dataset lock poisoned");
        let (rng, order, cursor) = &mut *guard;
        let n = self.records.len();
        let mut batch = ExperienceBatch::default();
        for _ in 0..batch_size {
            if *cursor == n {
                order.shuffle(rng);
                *cursor = 0;
            }
            let i = order[*cursor];
            *cursor += 1;
            batch.keys.push(i as u64);
            batch.payloads.push(self.records[i].clone());
            batch.probabilities.push(1.0 / n as f64);
            batch.table_sizes.push(n);
            batch.from_demo.push(false);
        }
        Ok(batch)
    }

    fn update_priorities(&self, _batch: &ExperienceBatch, _priorities: &[f64]) -> Result<()> {
        Ok(())
    }

    fn can_sample(&self, _batch_size: usize) -> bool {
        true
    }
}
