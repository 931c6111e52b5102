//! Synthetic transaction logs drawn from the five lifecycle archetypes.

use std::io::Write;

use chrono::{Duration, NaiveDateTime};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ingest::{Transaction, WeekId};
use crate::lifecycle::{archetype, Stage};
use crate::rng::seeded;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoSpec {
    pub entities: usize,
    pub weeks: usize,
    /// Multiplicative noise level on the weekly amount.
    pub noise: f64,
    /// Log-normal spread of per-entity volume.
    pub scale_spread: f64,
    /// Largest time shift of an entity's archetype, in weeks.
    pub max_shift: usize,
    /// Base weekly volume in currency units.
    pub volume: f64,
    /// Depth of each archetype's ordering cadence.
    pub cadence: f64,
}

impl Default for DemoSpec {
    fn default() -> Self {
        Self { entities: 60, weeks: 52, noise: 0.2, scale_spread: 0.1, max_shift: 1, volume: 1000.0, cadence: 0.5 }
    }
}

#[derive(Debug, Clone)]
pub struct DemoData {
    pub transactions: Vec<Transaction>,
    /// `(entity, archetype)` sorted by entity name.
    pub truth: Vec<(String, Stage)>,
    pub grid_start: WeekId,
}

pub fn demo_grid_start() -> WeekId {
    WeekId::new(2017, 18).expect("valid week")
}

/// Entities are spread evenly over the archetypes and named `C001`, ...
/// in shuffled order so names carry no label information.
pub fn generate(seed: u64, spec: &DemoSpec) -> DemoData {
    let mut rng = seeded(seed);
    let start = demo_grid_start().monday().and_hms_opt(0, 0, 0).expect("midnight");
    let mut stages: Vec<Stage> = (0..spec.entities).map(|i| Stage::ALL[i % Stage::ALL.len()]).collect();
    stages.shuffle(&mut rng);
    let noise = Normal::new(0.0, spec.noise.max(0.0)).expect("finite sd");
    let spread = Normal::new(0.0, spec.scale_spread.max(0.0)).expect("finite sd");

    let mut transactions = Vec::new();
    let mut truth = Vec::with_capacity(spec.entities);
    for (i, &stage) in stages.iter().enumerate() {
        let name = format!("C{:03}", i + 1);
        let scale = spec.volume * spread.sample(&mut rng).exp();
        let shift = rng.random_range(0..=2 * spec.max_shift) as i64 - spec.max_shift as i64;
        let base = archetype(stage, spec.weeks);
        for t in 0..spec.weeks {
            let src = (t as i64 - shift).clamp(0, spec.weeks as i64 - 1) as usize;
            let cycle = cadence_period(stage)
                .map_or(1.0, |p| 1.0 + spec.cadence * (2.0 * std::f64::consts::PI * t as f64 / p).cos());
            let amount = base[src] * cycle * scale * (1.0 + noise.sample(&mut rng)).max(0.0);
            if amount <= 0.0 {
                continue;
            }
            // Split the week into one to three purchases on random days.
            let parts = rng.random_range(1..=3usize);
            let mut weights: Vec<f64> = (0..parts).map(|_| rng.random_range(0.2..1.0)).collect();
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            for w in weights {
                let offset = Duration::weeks(t as i64)
                    + Duration::days(rng.random_range(0..7))
                    + Duration::seconds(rng.random_range(8 * 3600..18 * 3600));
                transactions.push(Transaction {
                    entity_name: name.clone(),
                    amount: (amount * w * 100.0).round() / 100.0,
                    timestamp: start + offset,
                });
            }
        }
        truth.push((name, stage));
    }
    DemoData { transactions, truth, grid_start: demo_grid_start() }
}

/// Calendar-locked ordering cycle (in weeks) of each archetype; `None`
/// means no cycle.
fn cadence_period(stage: Stage) -> Option<f64> {
    match stage {
        Stage::Acquisition => Some(4.0),
        Stage::Promotion => Some(2.0),
        Stage::Maturity => Some(13.0),
        Stage::Recession => Some(6.0),
        Stage::Departure => None,
    }
}

fn fmt_time(t: &NaiveDateTime) -> String {
    t.format("%Y-%m-%d %H:%M:%S").to_string()
}

impl DemoData {
    /// Transaction log with the default column names.
    pub fn write_transactions<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["ORGFULLNAME", "REAL_PRICE", "CREATE_TIME"])?;
        for t in &self.transactions {
            w.write_record([t.entity_name.clone(), format!("{:.2}", t.amount), fmt_time(&t.timestamp)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `entity,stage`.
    pub fn write_truth<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["entity", "stage"])?;
        for (name, stage) in &self.truth {
            w.write_record([name.as_str(), stage.tag()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Ground-truth class index per entity, in entity-name order.
    pub fn truth_assignment(&self) -> Vec<usize> {
        self.truth.iter().map(|(_, s)| Stage::ALL.iter().position(|x| x == s).expect("known stage")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{aggregate_weekly, WeekSpan};

    #[test]
    fn shape_and_determinism() {
        let spec = DemoSpec::default();
        let a = generate(3, &spec);
        let b = generate(3, &spec);
        assert_eq!(a.transactions, b.transactions);
        assert_eq!(a.truth.len(), 60);
        for st in Stage::ALL {
            assert_eq!(a.truth.iter().filter(|(_, s)| *s == st).count(), 12);
        }
        let span = WeekSpan { start: a.grid_start, end: a.grid_start.offset(51) };
        let sm = aggregate_weekly(&a.transactions, Some(span)).unwrap();
        assert_eq!((sm.n(), sm.t()), (60, 52));
        assert_eq!(sm.labels(), a.truth.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>());
        assert_ne!(generate(4, &spec).transactions, a.transactions);
    }
}
