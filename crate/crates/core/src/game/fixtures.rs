//! Small slice and model builders shared by the game tests.

use crate::model::{BaseStationSet, SliceSpec, TrafficModel};

/// Slice whose routing is a lazy random walk on a ring; symmetric so the
/// uniform load is reachable.
pub fn ring_slice(b: usize, share: f64, stay: f64, gamma: f64) -> SliceSpec {
    let mut q = vec![vec![0.0; b]; b];
    for i in 0..b {
        q[i][i] = stay;
        q[i][(i + 1) % b] += (0.9 - stay) / 2.0;
        q[i][(i + b - 1) % b] += (0.9 - stay) / 2.0;
    }
    SliceSpec::without_routing(share, vec![gamma; b], vec![1.0; b]).with_routing(q)
}

/// Slice that drifts toward station 0.
pub fn drifting_slice(b: usize, share: f64, gamma: Vec<f64>, mu: Vec<f64>) -> SliceSpec {
    let mut q = vec![vec![0.0; b]; b];
    for (i, row) in q.iter_mut().enumerate() {
        if i > 0 {
            row[i - 1] = 0.6;
            row[i] = 0.2;
        } else {
            row[0] = 0.5;
        }
    }
    SliceSpec::without_routing(share, gamma, mu).with_routing(q)
}

pub fn model(slices: Vec<SliceSpec>) -> TrafficModel {
    let b = slices[0].gamma.len();
    TrafficModel::new(BaseStationSet::new(b).unwrap(), slices).unwrap()
}
