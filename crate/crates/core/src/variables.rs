//! Parameter distribution from learner to actors.
//!
//! The learner publishes immutable [`ParameterSnapshot`]s into a
//! [`VariableServer`]; actors hold a [`VariableClient`] that polls it on a
//! fixed period. Distribution is pull-based.

use std::sync::{Arc, RwLock};
use std::thread;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::interfaces::ParameterSnapshot;

pub const DEFAULT_FETCH_PERIOD: u64 = 100;

pub trait VariableSource: Send + Sync {
    fn latest(&self) -> Result<Arc<ParameterSnapshot>>;
}

/// Holds the most recently published snapshot.
pub struct VariableServer {
    current: RwLock<Arc<ParameterSnapshot>>,
}

impl VariableServer {
    pub fn new(initial: ParameterSnapshot) -> Self {
        Self { current: RwLock::new(Arc::new(initial)) }
    }

    /// Replaces the current snapshot. Versions must strictly increase and the
    /// tensor layout must not change once set.
    pub fn publish(&self, snapshot: ParameterSnapshot) -> Result<()> {
        let mut guard = self.current.write().expect("variable server lock poisoned");
        if snapshot.version <= guard.version && !(guard.tensors.is_empty() && guard.version == 0) {
            return Err(Error::InvalidArgument(format!(
                "snapshot version {} does not exceed published version {}",
                snapshot.version, guard.version
            )));
        }
        if !guard.tensors.is_empty() && !guard.same_layout(&snapshot) {
            return Err(Error::Shape("published snapshot changed tensor layout".into()));
        }
        *guard = Arc::new(snapshot);
        Ok(())
    }

    pub fn version(&self) -> u64 {
        self.current.read().expect("variable server lock poisoned").version
    }
}

impl VariableSource for VariableServer {
    fn latest(&self) -> Result<Arc<ParameterSnapshot>> {
        Ok(self.current.read().expect("variable server lock poisoned").clone())
    }
}

/// Actor-side poller. Fetches every `period` calls and only hands back a
/// snapshot when its version exceeds the one already held.
pub struct VariableClient {
    source: Arc<dyn VariableSource>,
    period: u64,
    calls: u64,
    held_version: Option<u64>,
    max_retries: u32,
}

impl VariableClient {
    pub fn new(source: Arc<dyn VariableSource>, period: u64) -> Self {
        Self { source, period: period.max(1), calls: 0, held_version: None, max_retries: 5 }
    }

    pub fn held_version(&self) -> Option<u64> {
        self.held_version
    }

    /// Counts one call; fetches when the period elapses (or nothing is held yet).
    pub fn poll(&mut self) -> Result<Option<Arc<ParameterSnapshot>>> {
        self.calls += 1;
        if self.held_version.is_some() && self.calls % self.period != 0 {
            return Ok(None);
        }
        self.fetch()
    }

    /// Fetches unconditionally, returning the snapshot only if it is newer.
    pub fn fetch(&mut self) -> Result<Option<Arc<ParameterSnapshot>>> {
        let mut attempt = 0;
        let snapshot = loop {
            match self.source.latest() {
                Ok(s) => break s,
                Err(Error::Transient(msg)) => {
                    attempt += 1;
                    if attempt > self.max_retries {
                        return Err(Error::Transient(format!(
                            "variable source unreachable after {attempt} attempts: {msg}"
                        )));
                    }
                    thread::sleep(Duration::from_millis(2 << attempt.min(6)));
                }
                Err(e) => return Err(e),
            }
        };
        if snapshot.tensors.is_empty() {
            return Ok(None);
        }
        match self.held_version {
            Some(v) if snapshot.version <= v => Ok(None),
            _ => {
                self.held_version = Some(snapshot.version);
                Ok(Some(snapshot))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interfaces::NamedTensor;
    use std::sync::atomic::{AtomicU32, Ordering};

    fn snap(version: u64, value: f64) -> ParameterSnapshot {
        ParameterSnapshot { version, tensors: vec![NamedTensor::new("w", vec![2], vec![value, -value])] }
    }

    #[test]
    fn equal_version_is_noop() {
        let server = Arc::new(VariableServer::new(snap(1, 1.0)));
        let mut client = VariableClient::new(server.clone(), 1);
        assert!(client.poll().unwrap().is_some());
        assert!(client.poll().unwrap().is_none());
        assert_eq!(client.held_version(), Some(1));
    }

    #[test]
    fn newer_version_is_fetched_bytewise() {
        let server = Arc::new(VariableServer::new(snap(1, 1.0)));
        let mut client = VariableClient::new(server.clone(), 1);
        client.poll().unwrap();
        server.publish(snap(2, 0.125)).unwrap();
        let got = client.poll().unwrap().unwrap();
        assert_eq!(*got, snap(2, 0.125));
    }

    #[test]
    fn publish_rejects_stale_versions_and_layout_changes() {
        let server = VariableServer::new(snap(3, 1.0));
        assert!(server.publish(snap(3, 2.0)).is_err());
        let bad = ParameterSnapshot { version: 4, tensors: vec![NamedTensor::new("w", vec![3], vec![0.0; 3])] };
        assert!(server.publish(bad).is_err());
        assert!(server.publish(snap(4, 2.0)).is_ok());
    }

    #[test]
    fn period_limits_fetches() {
        let server = Arc::new(VariableServer::new(snap(1, 1.0)));
        let mut client = VariableClient::new(server.clone(), 3);
        client.poll().unwrap();
        server.publish(snap(2, 1.0)).unwrap();
        assert!(client.poll().unwrap().is_none());
        assert!(client.poll().unwrap().is_some());
    }

    struct Flaky {
        failures: AtomicU32,
        limit: u32,
    }

    impl VariableSource for Flaky {
        fn latest(&self) -> Result<Arc<ParameterSnapshot>> {
            if self.failures.fetch_add(1, Ordering::SeqCst) < self.limit {
                Err(Error::Transient("down".into()))
            } else {
                Ok(Arc::new(snap(7, 1.0)))
            }
        }
    }

    #[test]
    fn transient_failures_are_retried_then_surfaced() {
        let mut ok = VariableClient::new(Arc::new(Flaky { failures: AtomicU32::new(0), limit: 2 }), 1);
        assert_eq!(ok.fetch().unwrap().unwrap().version, 7);
        let mut down = VariableClient::new(Arc::new(Flaky { failures: AtomicU32::new(0), limit: 100 }), 1);
        assert!(matches!(down.fetch(), Err(Error::Transient(_))));
        assert_eq!(down.held_version(), None);
    }
}
