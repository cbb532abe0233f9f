//! Interest-drift detection over recent queries.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::query::SpjQuery;

pub const DEFAULT_TRIGGER_COUNT: usize = 3;
pub const DEFAULT_CONFIDENCE: f64 = 0.8;
pub const DEFAULT_WINDOW: usize = 20;

#[derive(Clone, Debug, PartialEq)]
pub struct DriftEntry {
    pub query: SpjQuery,
    pub confidence: f64,
    /// Position in the session's query sequence.
    pub tick: u64,
}

/// A sliding window of the most recent queries. Fires once the window holds
/// `trigger_count` entries whose confidence exceeds `confidence`, then
/// clears.
#[derive(Clone, Debug)]
pub struct DriftState {
    window: VecDeque<DriftEntry>,
    capacity: usize,
    trigger_count: usize,
    confidence: f64,
    tick: u64,
}

impl Default for DriftState {
    fn default() -> Self {
        DriftState::new(DEFAULT_WINDOW, DEFAULT_TRIGGER_COUNT, DEFAULT_CONFIDENCE)
            .expect("defaults are valid")
    }
}

impl DriftState {
    pub fn new(capacity: usize, trigger_count: usize, confidence: f64) -> Result<DriftState> {
        if trigger_count == 0 || capacity < trigger_count {
            return Err(Error::Config(format!(
                "drift window of {capacity} cannot hold {trigger_count} triggering queries"
            )));
        }
        if !(0.0..1.0).contains(&confidence) {
            return Err(Error::Config(format!(
                "drift confidence must lie in [0, 1), got {confidence}"
            )));
        }
        Ok(DriftState {
            window: VecDeque::new(),
            capacity,
            trigger_count,
            confidence,
            tick: 0,
        })
    }

    pub fn window(&self) -> impl Iterator<Item = &DriftEntry> {
        self.window.iter()
    }

    pub fn deviating(&self) -> usize {
        self.window
            .iter()
            .filter(|e| e.confidence > self.confidence)
            .count()
    }

    pub fn clear(&mut self) {
        self.window.clear();
    }

    /// Appends `q` with its deviation confidence. Returns the deviating
    /// queries of the window, oldest first, when this entry fires the trigger.
    pub fn record(&mut self, q: &SpjQuery, confidence: f64) -> Option<Vec<SpjQuery>> {
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(DriftEntry {
            query: q.clone(),
            confidence,
            tick: self.tick,
        });
        self.tick += 1;
        if self.deviating() < self.trigger_count {
            return None;
        }
        let out = self
            .window
            .drain(..)
            .filter(|e| e.confidence > self.confidence)
            .map(|e| e.query)
            .collect();
        Some(out)
    }
}
