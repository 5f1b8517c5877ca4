//! Navigation metrics aggregated over episodes.

use serde::{Deserialize, Serialize};

use super::episode::EpisodeRecord;
use crate::error::{Error, Result};

/// Mean metrics; SR, OSR and SPL are percentages, TL and NE in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub sr: f64,
    pub osr: f64,
    pub spl: f64,
    pub tl: f64,
    pub ne: f64,
}

/// Averages records in episode-id order, so presentation order does not
/// change the floating-point result.
pub fn evaluate(records: &[EpisodeRecord]) -> Result<MetricsRow> {
    if records.is_empty() {
        return Err(Error::InvalidData("cannot evaluate zero records".into()));
    }
    let mut sorted: Vec<&EpisodeRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.id);
    let n = sorted.len() as f64;
    let mean = |f: &dyn Fn(&EpisodeRecord) -> f64| sorted.iter().map(|r| f(r)).sum::<f64>() / n;
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    Ok(MetricsRow {
        sr: 100.0 * mean(&|r| flag(r.success)),
        osr: 100.0 * mean(&|r| flag(r.oracle_success)),
        spl: 100.0 * mean(&|r| r.spl),
        tl: mean(&|r| r.tl),
        ne: mean(&|r| r.ne),
    })
}
