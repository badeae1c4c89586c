//! Long-format result tables.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One measured or computed value. `slice` is empty for network-wide rows and
/// `stderr` for exact values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub slice: Option<usize>,
    pub scheme: String,
    pub sweep_value: f64,
    pub metric: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub config_hash: String,
    pub seed: Option<u64>,
}

/// Rows sharing a scenario name, configuration hash and seed.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ResultTable {
    pub scenario: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn new(scenario: &str, config_hash: &str, seed: Option<u64>) -> Self {
        Self { scenario: scenario.into(), config_hash: config_hash.into(), seed, rows: Vec::new() }
    }

    pub fn push(&mut self, slice: Option<usize>, scheme: &str, sweep_value: f64, metric: &str, value: f64, stderr: Option<f64>) {
        self.rows.push(ResultRow {
            scenario: self.scenario.clone(),
            slice,
            scheme: scheme.into(),
            sweep_value,
            metric: metric.into(),
            value,
            stderr,
            config_hash: self.config_hash.clone(),
            seed: self.seed,
        });
    }

    /// Rows matching `metric`, optionally restricted to one slice and scheme.
    pub fn select<'a>(&'a self, metric: &'a str, slice: Option<usize>, scheme: Option<&'a str>) -> impl Iterator<Item = &'a ResultRow> + 'a {
        self.rows.iter().filter(move |r| {
            r.metric == metric && (slice.is_none() || r.slice == slice) && scheme.is_none_or(|s| r.scheme == s)
        })
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<ResultRow>> {
        let mut r = csv::Reader::from_reader(input);
        Ok(r.deserialize().collect::<std::result::Result<Vec<ResultRow>, _>>()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_with_empty_cells() {
        let mut t = ResultTable::new("s", "abcd", Some(3));
        t.push(Some(1), "ss", 0.5, "gain", 1.25, None);
        t.push(None, "scpf", 0.5, "btd", 2.0, Some(0.01));
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), "scenario,slice,scheme,sweep_value,metric,value,stderr,config_hash,seed");
        assert!(text.contains("s,,scpf,0.5,btd,2.0,0.01,abcd,3"), "{text}");
        assert_eq!(ResultTable::read_csv(buf.as_slice()).unwrap(), t.rows);
        assert_eq!(t.select("gain", Some(1), Some("ss")).count(), 1);
        assert_eq!(t.select("gain", Some(0), None).count(), 0);
    }
}
