//! Mapping from averaged SINR to peak rate.

use serde::{Deserialize, Serialize};

use super::channel::{db_to_linear, linear_to_db};
use crate::error::{Error, Result};

/// Peak rate as a function of SINR, nondecreasing and strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum RateMap {
    /// `efficiency * log2(1 + sinr)` with the SINR clamped to
    /// `[min_sinr_db, max_sinr_db]`. Users below the floor keep the lowest
    /// rate instead of dropping out.
    TruncatedShannon { efficiency: f64, min_sinr_db: f64, max_sinr_db: f64 },
    /// Step function: `rates[i]` for SINR in `[thresholds_db[i], thresholds_db[i + 1])`,
    /// and `rates[0]` below the first threshold.
    Table { thresholds_db: Vec<f64>, rates: Vec<f64> },
}

impl Default for RateMap {
    fn default() -> Self {
        RateMap::TruncatedShannon { efficiency: 0.6, min_sinr_db: -10.0, max_sinr_db: 22.0 }
    }
}

impl RateMap {
    pub fn validate(&self) -> Result<()> {
        match self {
            RateMap::TruncatedShannon { efficiency, min_sinr_db, max_sinr_db } => {
                if !(*efficiency > 0.0) || !(min_sinr_db < max_sinr_db) {
                    return Err(Error::InvalidModel("Shannon map needs positive efficiency and min < max".into()));
                }
            }
            RateMap::Table { thresholds_db, rates } => {
                let increasing = thresholds_db.windows(2).all(|w| w[0] < w[1]);
                let monotone = rates.windows(2).all(|w| w[0] <= w[1]);
                if thresholds_db.is_empty() || thresholds_db.len() != rates.len() || !increasing || !monotone {
                    return Err(Error::InvalidModel("rate table needs increasing thresholds and nondecreasing rates".into()));
                }
                if !(rates[0] > 0.0) {
                    return Err(Error::InvalidModel("rate table must start with a positive rate".into()));
                }
            }
        }
        Ok(())
    }

    pub fn rate(&self, sinr: f64) -> f64 {
        match self {
            RateMap::TruncatedShannon { efficiency, min_sinr_db, max_sinr_db } => {
                let db = linear_to_db(sinr).clamp(*min_sinr_db, *max_sinr_db);
                efficiency * (1.0 + db_to_linear(db)).log2()
            }
            RateMap::Table { thresholds_db, rates } => {
                let db = linear_to_db(sinr);
                let k = thresholds_db.partition_point(|t| *t <= db);
                rates[k.saturating_sub(1)]
            }
        }
    }
}
