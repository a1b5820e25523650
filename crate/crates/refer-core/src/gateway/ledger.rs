//! Usage and cost accounting per (method, model).

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::score::Rational;

use super::{ChatResponse, ModelHandle};

/// Accumulated usage for one (method, model) pair.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// Exact monetary cost: Σ tokens × price-per-1k / 1000.
    #[serde(default)]
    pub cost: Rational,
    pub wall_time_ms: u64,
}

/// One serialized ledger row, as persisted in run summaries.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub method: String,
    pub model: String,
    #[serde(flatten)]
    pub entry: LedgerEntry,
}

/// Thread-safe cost ledger keyed by (method, model).
#[derive(Debug, Default)]
pub struct CostLedger {
    entries: Mutex<BTreeMap<(String, String), LedgerEntry>>,
}

impl CostLedger {
    pub fn new() -> Self {
        CostLedger::default()
    }

    pub fn from_rows(rows: impl IntoIterator<Item = LedgerRow>) -> Self {
        let ledger = CostLedger::new();
        {
            let mut entries = ledger.entries.lock().unwrap();
            for row in rows {
                let e = entries
                    .entry((row.method, row.model))
                    .or_default();
                e.calls += row.entry.calls;
                e.input_tokens += row.entry.input_tokens;
                e.output_tokens += row.entry.output_tokens;
                e.cost += row.entry.cost;
                e.wall_time_ms += row.entry.wall_time_ms;
            }
        }
        ledger
    }

    /// Accumulates one response's usage under `method`. Cost increases by
    /// exactly `input/1000 × input_price + output/1000 × output_price`.
    pub fn record(&self, method: &str, handle: &ModelHandle, response: &ChatResponse) {
        let mut entries = self.entries.lock().unwrap();
        let entry = entries
            .entry((method.to_string(), handle.model_id.clone()))
            .or_default();
        entry.calls += 1;
        entry.input_tokens += response.usage.input_tokens;
        entry.output_tokens += response.usage.output_tokens;
        let thousand = Rational::from_integer(1000);
        entry.cost += Rational::from_integer(response.usage.input_tokens as i64) / thousand
            * handle.pricing.input_cost_per_1k
            + Rational::from_integer(response.usage.output_tokens as i64) / thousand
                * handle.pricing.output_cost_per_1k;
        entry.wall_time_ms += response.latency.as_millis() as u64;
    }

    pub fn rows(&self) -> Vec<LedgerRow> {
        self.entries
            .lock()
            .unwrap()
            .iter()
            .map(|((method, model), entry)| LedgerRow {
                method: method.clone(),
                model: model.clone(),
                entry: entry.clone(),
            })
            .collect()
    }

    pub fn total_cost(&self) -> Rational {
        self.entries
            .lock()
            .unwrap()
            .values()
            .map(|e| e.cost)
            .sum()
    }

    pub fn cost_by_method(&self) -> BTreeMap<String, Rational> {
        let mut out: BTreeMap<String, Rational> = BTreeMap::new();
        for ((method, _), entry) in self.entries.lock().unwrap().iter() {
            *out.entry(method.clone()).or_insert(Rational::ZERO) += entry.cost;
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.entries.lock().unwrap().is_empty()
    }
}
