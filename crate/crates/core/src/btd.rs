//! Closed-form mean bit transmission delay (BTD) for a typical slice user and
//! the gains of SCPF over static slicing and GPS.

use serde::Serialize;

use crate::allocation::Scheme;
use crate::error::{Error, Result};
use crate::linalg::weighted_dot;
use crate::model::LoadProfile;

/// Denominators smaller than this are treated as zero.
pub const DEGENERATE_THRESHOLD: f64 = 1e-300;

fn guard(x: f64, what: &'static str) -> Result<f64> {
    if x.abs() < DEGENERATE_THRESHOLD || !x.is_finite() {
        Err(Error::DegenerateGeometry(what))
    } else {
        Ok(x)
    }
}

/// Mean BTD of a slice-`v` user conditioned on being at each station.
pub fn station_btd(profile: &LoadProfile, v: usize, scheme: Scheme) -> Result<Vec<f64>> {
    let rel = profile.relative(v)?;
    let delta = profile.delta(v);
    let s = profile.share(v);
    let out = match scheme {
        Scheme::Scpf => {
            let total = profile.total(v);
            let g = profile.active_aggregate();
            let own_idle = (-total).exp();
            (0..rel.len())
                .map(|b| delta[b] * (1.0 - rel[b] + (total + 1.0) * (g[b] / s + own_idle * rel[b])))
                .collect()
        }
        Scheme::Ss => {
            let rho = profile.loads(v);
            (0..rel.len()).map(|b| delta[b] * (rho[b] + 1.0) / s).collect()
        }
        Scheme::Gps => {
            let rho = profile.loads(v);
            let idle = profile.idle_shares(v);
            (0..rel.len())
                .map(|b| delta[b] * (rho[b] + 1.0) * (1.0 - idle[b]) / s)
                .collect()
        }
    };
    Ok(out)
}

/// Mean BTD of a typical slice-`v` user under `scheme`.
pub fn mean_btd(profile: &LoadProfile, v: usize, scheme: Scheme) -> Result<f64> {
    let rel = profile.relative(v)?;
    let per_station = station_btd(profile, v, scheme)?;
    Ok(rel.iter().zip(&per_station).map(|(r, e)| r * e).sum())
}

pub fn mean_btd_scpf(profile: &LoadProfile, v: usize) -> Result<f64> {
    mean_btd(profile, v, Scheme::Scpf)
}

pub fn mean_btd_ss(profile: &LoadProfile, v: usize) -> Result<f64> {
    mean_btd(profile, v, Scheme::Ss)
}

pub fn mean_btd_gps(profile: &LoadProfile, v: usize) -> Result<f64> {
    mean_btd(profile, v, Scheme::Gps)
}

/// Leading term of the SCPF mean BTD as the slice load grows:
/// `(rho / s) <rel, g>_delta`.
pub fn mean_btd_scpf_asymptotic(profile: &LoadProfile, v: usize) -> Result<f64> {
    let rel = profile.relative(v)?;
    let g = profile.aggregate()?;
    Ok(profile.total(v) / profile.share(v) * weighted_dot(rel, g, profile.delta(v)))
}

/// BTD gain of SCPF over static slicing.
pub fn gain_ss(profile: &LoadProfile, v: usize) -> Result<f64> {
    let scpf = guard(mean_btd_scpf(profile, v)?, "SCPF mean BTD")?;
    Ok(mean_btd_ss(profile, v)? / scpf)
}

/// BTD gain of SCPF over GPS.
pub fn gain_gps(profile: &LoadProfile, v: usize) -> Result<f64> {
    let scpf = guard(mean_btd_scpf(profile, v)?, "SCPF mean BTD")?;
    Ok(mean_btd_gps(profile, v)? / scpf)
}

/// Common denominator of the closed-form gains.
fn gain_denominator(profile: &LoadProfile, v: usize) -> Result<f64> {
    let rel = profile.relative(v)?;
    let delta = profile.delta(v);
    let s = profile.share(v);
    let rho = profile.total(v);
    let mean_delta = weighted_dot(delta, rel, &vec![1.0; rel.len()]);
    let sq = weighted_dot(rel, rel, delta);
    let cross = weighted_dot(profile.active_aggregate(), rel, delta);
    guard(
        s * mean_delta - s * (1.0 - (rho + 1.0) * (-rho).exp()) * sq + (rho + 1.0) * cross,
        "gain denominator",
    )
}

/// Gain over static slicing written directly in inner products, without
/// forming either mean BTD.
pub fn gain_ss_closed_form(profile: &LoadProfile, v: usize) -> Result<f64> {
    let rel = profile.relative(v)?;
    let delta = profile.delta(v);
    let num = profile.total(v) * weighted_dot(rel, rel, delta) + weighted_dot(delta, rel, &vec![1.0; rel.len()]);
    Ok(num / gain_denominator(profile, v)?)
}

/// Gain over GPS written directly in inner products.
pub fn gain_gps_closed_form(profile: &LoadProfile, v: usize) -> Result<f64> {
    let rel = profile.relative(v)?;
    let delta = profile.delta(v);
    let idle = profile.idle_shares(v);
    let busy: Vec<f64> = idle.iter().map(|x| 1.0 - x).collect();
    let weighted_idle: Vec<f64> = delta.iter().zip(idle).map(|(d, i)| d * i).collect();
    let num = profile.total(v) * (weighted_dot(rel, rel, delta) - weighted_dot(rel, rel, &weighted_idle))
        + weighted_dot(rel, &busy, delta);
    Ok(num / gain_denominator(profile, v)?)
}

/// Light- and heavy-load limits of the per-slice gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainLimits {
    pub ss_light: f64,
    pub ss_heavy: f64,
    pub gps_light: f64,
    pub gps_heavy: f64,
}

/// Limits of the gains for slice `v` at the profile's relative loads.
///
/// The light-load forms are the exact `rho_v -> 0` limits with the other
/// slices' totals held fixed, so slice `v`'s own activity term vanishes from
/// the aggregate. The heavy-load forms use the finite idle shares of the
/// supplied profile.
pub fn gain_limits(profile: &LoadProfile, v: usize) -> Result<GainLimits> {
    let rel = profile.relative(v)?;
    let g = profile.aggregate()?;
    let delta = profile.delta(v);
    let s = profile.share(v);
    let ones = vec![1.0; rel.len()];
    let idle = profile.idle_shares(v);
    let busy: Vec<f64> = idle.iter().map(|x| 1.0 - x).collect();
    let weighted_idle: Vec<f64> = delta.iter().zip(idle).map(|(d, i)| d * i).collect();

    let mean_delta = weighted_dot(delta, rel, &ones);
    let others = profile.active_aggregate_excluding(v);
    let light_den = guard(s * mean_delta + weighted_dot(&others, rel, delta), "light-load denominator")?;
    let heavy_den = guard(weighted_dot(g, rel, delta), "<g, rel>")?;
    let sq = weighted_dot(rel, rel, delta);

    Ok(GainLimits {
        ss_light: mean_delta / light_den,
        ss_heavy: sq / heavy_den,
        gps_light: weighted_dot(rel, &busy, delta) / light_den,
        gps_heavy: (sq - weighted_dot(rel, rel, &weighted_idle)) / heavy_den,
    })
}

/// Heavy-load gain over static slicing from norms and the angle between a
/// slice's relative load and the aggregate, for homogeneous capacities.
pub fn heavy_gain_from_geometry(relative_norm: f64, aggregate_norm: f64, angle_deg: f64) -> f64 {
    relative_norm / (aggregate_norm * angle_deg.to_radians().cos())
}

/// Mean BTD normalized by share, load and per-station capacity.
pub fn normalized_btd(profile: &LoadProfile, v: usize, scheme: Scheme) -> Result<f64> {
    let rel = profile.relative(v)?;
    let rho = guard(profile.total(v), "slice total load")?;
    let per_station = station_btd(profile, v, scheme)?;
    let delta = profile.delta(v);
    let sum: f64 = (0..rel.len()).map(|b| rel[b] * per_station[b] / delta[b]).sum();
    Ok(profile.share(v) / rho * sum)
}

/// Share-weighted network-wide gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverallGains {
    pub ss: f64,
    pub gps: f64,
    pub ss_heavy: f64,
    pub gps_heavy: f64,
}

pub fn overall_gains(profile: &LoadProfile) -> Result<OverallGains> {
    let mut weighted = [0.0; 3];
    for v in 0..profile.num_slices() {
        for (slot, scheme) in Scheme::ALL.into_iter().enumerate() {
            weighted[slot] += profile.share(v) * normalized_btd(profile, v, scheme)?;
        }
    }
    let (ss_heavy, gps_heavy) = overall_heavy_gains(profile)?;
    let scpf = guard(weighted[0], "weighted SCPF BTD")?;
    Ok(OverallGains { ss: weighted[1] / scpf, gps: weighted[2] / scpf, ss_heavy, gps_heavy })
}

/// Heavy-load overall gains over static slicing and GPS.
pub fn overall_heavy_gains(profile: &LoadProfile) -> Result<(f64, f64)> {
    let g = profile.aggregate()?;
    let ones = vec![1.0; profile.num_stations()];
    let (mut ss_num, mut gps_num, mut den) = (0.0, 0.0, 0.0);
    for v in 0..profile.num_slices() {
        let rel = profile.relative(v)?;
        let s = profile.share(v);
        let busy: Vec<f64> = profile.idle_shares(v).iter().map(|x| 1.0 - x).collect();
        ss_num += s * weighted_dot(rel, rel, &ones);
        gps_num += s * weighted_dot(rel, rel, &busy);
        den += s * weighted_dot(g, rel, &ones);
    }
    let den = guard(den, "weighted <g, rel>")?;
    Ok((ss_num / den, gps_num / den))
}

/// Everything above for one slice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceBtd {
    pub slice: usize,
    pub scpf: f64,
    pub ss: f64,
    pub gps: f64,
    pub scpf_asymptotic: f64,
    pub normalized_scpf: f64,
    pub normalized_ss: f64,
    pub normalized_gps: f64,
    pub gain_ss: f64,
    pub gain_gps: f64,
    pub limits: GainLimits,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BtdReport {
    pub slices: Vec<SliceBtd>,
    pub overall: OverallGains,
}

/// Evaluates every per-slice and overall quantity. Needs every slice to carry
/// positive load.
pub fn btd_report(profile: &LoadProfile) -> Result<BtdReport> {
    let mut slices = Vec::with_capacity(profile.num_slices());
    for v in 0..profile.num_slices() {
        slices.push(SliceBtd {
            slice: v,
            scpf: mean_btd_scpf(profile, v)?,
            ss: mean_btd_ss(profile, v)?,
            gps: mean_btd_gps(profile, v)?,
            scpf_asymptotic: mean_btd_scpf_asymptotic(profile, v)?,
            normalized_scpf: normalized_btd(profile, v, Scheme::Scpf)?,
            normalized_ss: normalized_btd(profile, v, Scheme::Ss)?,
            normalized_gps: normalized_btd(profile, v, Scheme::Gps)?,
            gain_ss: gain_ss(profile, v)?,
            gain_gps: gain_gps(profile, v)?,
            limits: gain_limits(profile, v)?,
        });
    }
    Ok(BtdReport { slices, overall: overall_gains(profile)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn single(total: f64) -> LoadProfile {
        LoadProfile::from_relative(vec![1.0], &[vec![1.0]], &[total], vec![vec![1.0]]).unwrap()
    }

    fn orthogonal(total: f64) -> LoadProfile {
        LoadProfile::from_relative(
            vec![0.5, 0.5],
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            &[total, total],
            vec![vec![1.0; 2]; 2],
        )
        .unwrap()
    }

    /// Independent route to the SCPF mean: own contribution through
    /// `<delta, rel> + rho |rel|^2`, everyone else through the aggregate with
    /// slice `v` removed.
    fn scpf_oracle(p: &LoadProfile, v: usize) -> f64 {
        let rel = p.relative(v).unwrap();
        let delta = p.delta(v);
        let ones = vec![1.0; rel.len()];
        let rho = p.total(v);
        weighted_dot(delta, rel, &ones)
            + rho * weighted_dot(rel, rel, delta)
            + (rho + 1.0) / p.share(v) * weighted_dot(&p.active_aggregate_excluding(v), rel, delta)
    }

    #[test]
    fn single_station_single_slice() {
        assert_relative_eq!(mean_btd_scpf(&single(2.0), 0).unwrap(), 3.0, epsilon = 1e-14);
        assert_relative_eq!(mean_btd_scpf(&single(0.0), 0).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(mean_btd_ss(&single(2.0), 0).unwrap(), 3.0, epsilon = 1e-15);
        assert_relative_eq!(mean_btd_gps(&single(2.0), 0).unwrap(), 3.0, epsilon = 1e-15);
        assert_relative_eq!(mean_btd_scpf_asymptotic(&single(10.0), 0).unwrap(), 10.0);
    }

    #[test]
    fn orthogonal_asymptotic_value() {
        // <(1,0), (1/2,1/2)> = 1/2, so (20 / 0.5) * 0.5
        assert_relative_eq!(mean_btd_scpf_asymptotic(&orthogonal(20.0), 0).unwrap(), 20.0, epsilon = 1e-12);
    }

    #[test]
    fn asymptotic_is_leading_term() {
        let p = single(200.0);
        let ratio = mean_btd_scpf_asymptotic(&p, 0).unwrap() / mean_btd_scpf(&p, 0).unwrap();
        assert!((ratio - 1.0).abs() < 0.02);

        // relative gap shrinks like 1/rho on a two-slice instance
        let base = LoadProfile::from_relative(
            vec![0.4, 0.6],
            &[vec![0.7, 0.2, 0.1], vec![0.2, 0.3, 0.5]],
            &[5.0, 5.0],
            vec![vec![1.0, 2.0, 0.5], vec![1.0; 3]],
        )
        .unwrap();
        let gaps: Vec<(f64, f64)> = [10.0, 20.0, 40.0, 80.0, 160.0, 320.0]
            .iter()
            .map(|&r| {
                let p = base.with_uniform_total(r).unwrap();
                let exact = mean_btd_scpf(&p, 0).unwrap();
                (r, (exact - mean_btd_scpf_asymptotic(&p, 0).unwrap()).abs() / exact)
            })
            .collect();
        let c = gaps.iter().map(|(r, g)| r * g).fold(0.0, f64::max);
        for (r, g) in gaps {
            assert!(g <= c / r + 1e-15);
        }
        assert!(c < 10.0);
    }

    #[test]
    fn gps_strictly_below_ss_when_other_slice_absent() {
        let p = orthogonal(3.0);
        let ss = mean_btd_ss(&p, 0).unwrap();
        let gps = mean_btd_gps(&p, 0).unwrap();
        let idle = p.idle_shares(0)[0];
        assert!(gps < ss);
        assert_relative_eq!(gps, ss * (1.0 - idle), epsilon = 1e-14);
    }

    #[test]
    fn single_slice_gains_are_one() {
        let p = LoadProfile::from_relative(vec![1.0], &[vec![0.3, 0.7]], &[4.0], vec![vec![1.0, 2.0]]).unwrap();
        let scpf = mean_btd_scpf(&p, 0).unwrap();
        assert_relative_eq!(mean_btd_ss(&p, 0).unwrap(), scpf, max_relative = 1e-12);
        assert_relative_eq!(mean_btd_gps(&p, 0).unwrap(), scpf, max_relative = 1e-12);
        assert_relative_eq!(gain_ss(&p, 0).unwrap(), 1.0, max_relative = 1e-12);
        let o = overall_gains(&p).unwrap();
        assert_relative_eq!(o.ss, 1.0, max_relative = 1e-12);
        assert_relative_eq!(o.gps, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn orthogonal_heavy_gain_tends_to_two() {
        let p = orthogonal(1e6);
        assert_relative_eq!(gain_ss(&p, 0).unwrap(), 2.0, max_relative = 1e-5);
        assert_relative_eq!(gain_limits(&p, 0).unwrap().ss_heavy, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn identical_relative_loads_have_unit_heavy_gain() {
        let rel = vec![0.1, 0.6, 0.3];
        let p = LoadProfile::from_relative(vec![0.2, 0.3, 0.5], &[rel.clone(), rel.clone(), rel], &[3.0, 4.0, 5.0], vec![vec![1.0; 3]; 3])
            .unwrap();
        for v in 0..3 {
            assert_relative_eq!(gain_limits(&p, v).unwrap().ss_heavy, 1.0, epsilon = 1e-12);
        }
        assert_relative_eq!(overall_heavy_gains(&p).unwrap().0, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn orthogonal_overall_heavy_gain_equals_slice_count() {
        for n in 2..6 {
            let rel: Vec<Vec<f64>> = (0..n).map(|v| (0..n).map(|b| if b == v { 1.0 } else { 0.0 }).collect()).collect();
            let p = LoadProfile::from_relative(vec![1.0 / n as f64; n], &rel, &vec![10.0; n], vec![vec![1.0; n]; n]).unwrap();
            assert_relative_eq!(overall_heavy_gains(&p).unwrap().0, n as f64, max_relative = 1e-12);
        }
    }

    #[test]
    fn table_scenario_three_heavy_gain() {
        let g = heavy_gain_from_geometry(0.36, 0.26, 41.78);
        assert!((g - 1.83).abs() / 1.83 < 0.05, "{g}");
    }

    #[test]
    fn geometry_form_matches_inner_products() {
        let p = LoadProfile::from_relative(
            vec![0.25; 4],
            &[vec![0.5, 0.3, 0.2, 0.0], vec![0.0, 0.2, 0.3, 0.5], vec![0.25; 4], vec![0.1, 0.4, 0.4, 0.1]],
            &[9.0; 4],
            vec![vec![1.0; 4]; 4],
        )
        .unwrap();
        for v in 0..4 {
            let geo = crate::model::load_geometry(&p, v).unwrap();
            let from_geo = heavy_gain_from_geometry(geo.relative_norm, geo.aggregate_norm, geo.angle_deg);
            assert_relative_eq!(from_geo, gain_limits(&p, v).unwrap().ss_heavy, max_relative = 1e-12);
        }
    }

    #[test]
    fn gps_heavy_approaches_ss_heavy() {
        let p = LoadProfile::from_relative(
            vec![0.5, 0.5],
            &[vec![0.6, 0.4], vec![0.3, 0.7]],
            &[50.0 / 0.3, 50.0 / 0.3],
            vec![vec![1.0; 2]; 2],
        )
        .unwrap();
        let l = gain_limits(&p, 0).unwrap();
        assert_relative_eq!(l.gps_heavy, l.ss_heavy, max_relative = 1e-12);
    }

    #[test]
    fn light_limit_is_the_zero_load_gain() {
        let p = LoadProfile::from_relative(
            vec![0.3, 0.7],
            &[vec![0.6, 0.4], vec![0.1, 0.9]],
            &[0.0, 2.0],
            vec![vec![1.5, 0.5], vec![1.0; 2]],
        )
        .unwrap();
        let l = gain_limits(&p, 0).unwrap();
        assert_relative_eq!(gain_ss(&p, 0).unwrap(), l.ss_light, max_relative = 1e-13);
        assert_relative_eq!(gain_gps(&p, 0).unwrap(), l.gps_light, max_relative = 1e-13);
        // and the limits do not depend on slice 0's own total
        let far = gain_limits(&p.with_slice_total(0, 30.0).unwrap(), 0).unwrap();
        assert_relative_eq!(far.ss_light, l.ss_light, max_relative = 1e-13);
    }

    #[test]
    fn undefined_relative_load_is_rejected() {
        let p = LoadProfile::from_loads(vec![0.5, 0.5], vec![vec![1.0], vec![0.0]], vec![vec![1.0]; 2]).unwrap();
        assert!(matches!(mean_btd_scpf(&p, 1), Err(Error::UndefinedRelativeLoad { slice: 1 })));
    }

    fn random_profile() -> impl Strategy<Value = LoadProfile> {
        (2usize..5, 1usize..7).prop_flat_map(|(v, b)| {
            (
                proptest::collection::vec(0.05f64..1.0, v),
                proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, b), v),
                proptest::collection::vec(0.1f64..20.0, v),
                proptest::collection::vec(proptest::collection::vec(0.2f64..3.0, b), v),
            )
                .prop_filter_map("nonzero relative loads", |(raw, rel, totals, deltas)| {
                    if rel.iter().any(|r| r.iter().sum::<f64>() <= 1e-3) {
                        return None;
                    }
                    let sum: f64 = raw.iter().sum();
                    let shares = raw.iter().map(|x| x / sum).collect();
                    LoadProfile::from_relative(shares, &rel, &totals, deltas).ok()
                })
        })
    }

    proptest! {
        #[test]
        fn gains_are_btd_ratios(p in random_profile()) {
            for v in 0..p.num_slices() {
                let ss = gain_ss(&p, v).unwrap();
                let gps = gain_gps(&p, v).unwrap();
                prop_assert!((ss - gain_ss_closed_form(&p, v).unwrap()).abs() <= 1e-12 * ss);
                prop_assert!((gps - gain_gps_closed_form(&p, v).unwrap()).abs() <= 1e-12 * gps);
                let scpf = mean_btd_scpf(&p, v).unwrap();
                prop_assert!((scpf - scpf_oracle(&p, v)).abs() <= 1e-12 * scpf);
            }
        }

        #[test]
        fn light_gain_exceeds_one(p in random_profile()) {
            for v in 0..p.num_slices() {
                prop_assert!(gain_limits(&p, v).unwrap().ss_light > 1.0);
            }
        }

        #[test]
        fn gain_is_nonincreasing_in_own_load(p in random_profile(), v in 0usize..4) {
            let v = v % p.num_slices();
            let grid: Vec<f64> = (0..20).map(|i| 0.1 * (1000f64).powf(i as f64 / 19.0)).collect();
            let gains: Vec<f64> = grid
                .iter()
                .map(|&r| gain_ss(&p.with_slice_total(v, r).unwrap(), v).unwrap())
                .collect();
            for w in gains.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12), "{:?}", gains);
            }
        }

        #[test]
        fn overall_heavy_gains_at_least_one(p in random_profile(), heavy in 50f64..500.0) {
            let p = p.with_uniform_total(heavy).unwrap();
            let (ss, gps) = overall_heavy_gains(&p).unwrap();
            prop_assert!(ss >= 1.0 - 1e-9);
            prop_assert!(gps >= 1.0 - 1e-9);
        }
    }
}
