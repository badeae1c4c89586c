use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, LogNormal, Poisson};

use super::stats::{replicate, McEstimate};
use crate::allocation::{Scheme, Snapshot};
use crate::error::{Error, Result};
use crate::model::{CapacityModel, LoadProfile};

/// One Poisson draw; zero mean gives zero.
pub fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

/// Draws a peak rate whose reciprocal has mean `delta`.
pub fn sample_capacity<R: Rng + ?Sized>(model: CapacityModel, delta: f64, rng: &mut R) -> f64 {
    match model {
        CapacityModel::Deterministic => 1.0 / delta,
        CapacityModel::Lognormal { sigma } if sigma > 0.0 => {
            let reciprocal = LogNormal::new(delta.ln() - 0.5 * sigma * sigma, sigma)
                .expect("valid lognormal parameters")
                .sample(rng);
            1.0 / reciprocal
        }
        CapacityModel::Lognormal { .. } => 1.0 / delta,
    }
}

/// Stationary snapshot: independent Poisson counts per (slice, station) with
/// capacities drawn from each slice's capacity model.
pub fn sample_stationary_snapshot<R: Rng + ?Sized>(
    profile: &LoadProfile,
    capacity: &[CapacityModel],
    rng: &mut R,
) -> Snapshot {
    let mut snap = Snapshot::empty(profile.num_slices(), profile.num_stations());
    for v in 0..profile.num_slices() {
        let delta = profile.delta(v);
        for (b, &rho) in profile.loads(v).iter().enumerate() {
            for _ in 0..poisson(rho, rng) {
                snap.push(v, b, sample_capacity(capacity[v], delta[b], rng));
            }
        }
    }
    snap
}

/// Palm estimate of a typical slice-`v` user's mean BTD with deterministic
/// capacities.
pub fn palm_estimate_btd(profile: &LoadProfile, v: usize, scheme: Scheme, reps: usize, seed: u64) -> Result<McEstimate> {
    let capacity = vec![CapacityModel::Deterministic; profile.num_slices()];
    palm_estimate_btd_with(profile, &capacity, v, scheme, reps, seed)
}

/// Palm estimate: pick the tagged user's station with probability equal to
/// the slice's relative load there, draw a stationary snapshot, add the
/// tagged user and record the reciprocal of its allocated rate.
pub fn palm_estimate_btd_with(
    profile: &LoadProfile,
    capacity: &[CapacityModel],
    v: usize,
    scheme: Scheme,
    reps: usize,
    seed: u64,
) -> Result<McEstimate> {
    let rel = profile.relative(v)?;
    let station = WeightedIndex::new(rel).map_err(|_| Error::UndefinedRelativeLoad { slice: v })?;
    let shares = profile.shares();
    Ok(replicate(reps, seed, |rng| {
        let b = station.sample(rng);
        let mut snap = sample_stationary_snapshot(profile, capacity, rng);
        snap.push(v, b, sample_capacity(capacity[v], profile.delta(v)[b], rng));
        let alloc = scheme.allocate(&snap, shares);
        1.0 / *alloc.rates[v][b].last().expect("tagged user present")
    }))
}

/// Estimates `E[N_i / sum_j N_j | sum_j N_j > 0]` for independent Poisson
/// `N_j` with the given means. Draws with an empty sum are rejected and
/// redrawn, so `reps` counts accepted samples.
pub fn conditional_ratio_oracle(means: &[f64], i: usize, reps: usize, seed: u64) -> Result<McEstimate> {
    if means.iter().all(|m| *m <= 0.0) {
        return Err(Error::AllZero);
    }
    if i >= means.len() {
        return Err(Error::InvalidModel(format!("index {i} out of range")));
    }
    Ok(replicate(reps, seed, |rng| loop {
        let draws: Vec<u64> = means.iter().map(|&m| poisson(m, rng)).collect();
        let total: u64 = draws.iter().sum();
        if total > 0 {
            break draws[i] as f64 / total as f64;
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::btd;
    use crate::mc::stats::{substream, RunningStats};

    #[test]
    fn poisson_moments() {
        let mut rng = substream(3, 0);
        let mut stats = RunningStats::default();
        for _ in 0..100_000 {
            stats.push(poisson(4.0, &mut rng) as f64);
        }
        assert!((stats.mean() - 4.0).abs() <= 3.0 * 2.0 / (1e5f64).sqrt());
        assert!((stats.variance() - 4.0).abs() < 0.1);
        assert_eq!(poisson(0.0, &mut rng), 0);
    }

    #[test]
    fn zero_load_cells_stay_empty() {
        let p = LoadProfile::from_loads(vec![1.0], vec![vec![0.0, 3.0]], vec![vec![1.0; 2]]).unwrap();
        let mut rng = substream(5, 0);
        for _ in 0..1000 {
            let s = sample_stationary_snapshot(&p, &[CapacityModel::Deterministic], &mut rng);
            assert_eq!(s.count(0, 0), 0);
        }
    }

    #[test]
    fn lognormal_capacity_keeps_reciprocal_mean() {
        let mut rng = substream(9, 0);
        let mut stats = RunningStats::default();
        for _ in 0..200_000 {
            stats.push(1.0 / sample_capacity(CapacityModel::Lognormal { sigma: 0.6 }, 2.5, &mut rng));
        }
        assert!((stats.mean() - 2.5).abs() < 4.0 * stats.std_error());
    }

    #[test]
    fn single_cell_matches_closed_form() {
        let p = LoadProfile::from_loads(vec![1.0], vec![vec![2.0]], vec![vec![1.0]]).unwrap();
        for scheme in Scheme::ALL {
            let est = palm_estimate_btd(&p, 0, scheme, 50_000, 1).unwrap();
            assert!(est.covers(3.0, 3.0), "{scheme}: {est:?}");
        }
    }

    #[test]
    fn orthogonal_scpf_matches_theorem() {
        let p = LoadProfile::from_relative(vec![0.5, 0.5], &[vec![1.0, 0.0], vec![0.0, 1.0]], &[4.0, 4.0], vec![vec![1.0; 2]; 2])
            .unwrap();
        let est = palm_estimate_btd(&p, 0, Scheme::Scpf, 100_000, 2).unwrap();
        let exact = btd::mean_btd_scpf(&p, 0).unwrap();
        assert!(est.covers(exact, 3.0), "{est:?} vs {exact}");
    }

    #[test]
    fn capacity_law_does_not_move_the_mean() {
        let p = LoadProfile::from_relative(
            vec![0.4, 0.6],
            &[vec![0.5, 0.5], vec![0.2, 0.8]],
            &[3.0, 2.0],
            vec![vec![1.0, 2.0], vec![0.5, 1.0]],
        )
        .unwrap();
        let models = [CapacityModel::Lognormal { sigma: 0.8 }; 2];
        let est = palm_estimate_btd_with(&p, &models, 0, Scheme::Ss, 100_000, 4).unwrap();
        let exact = btd::mean_btd_ss(&p, 0).unwrap();
        assert!(est.covers(exact, 3.0), "{est:?} vs {exact}");
    }

    #[test]
    fn ratio_oracle() {
        let est = conditional_ratio_oracle(&[5.0, 5.0, 5.0], 0, 100_000, 1).unwrap();
        assert!(est.covers(1.0 / 3.0, 3.0));
        let est = conditional_ratio_oracle(&[0.3, 0.7], 0, 200_000, 2).unwrap();
        assert!(est.covers(0.3, 3.0), "{est:?}");
        assert!(matches!(conditional_ratio_oracle(&[0.0, 0.0], 0, 10, 1), Err(Error::AllZero)));
    }

    #[test]
    fn same_seed_same_estimate() {
        let p = LoadProfile::from_loads(vec![0.5, 0.5], vec![vec![1.0, 2.0], vec![2.0, 1.0]], vec![vec![1.0; 2]; 2]).unwrap();
        let a = palm_estimate_btd(&p, 1, Scheme::Gps, 20_000, 99).unwrap();
        let b = palm_estimate_btd(&p, 1, Scheme::Gps, 20_000, 99).unwrap();
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
    }
}
