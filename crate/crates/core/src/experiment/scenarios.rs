//! Built-in scenarios.

use crate::error::Result;
use crate::model::{derive_load_profile, BaseStationSet, LoadProfile, SliceSpec, TrafficModel};
use crate::radio::{Hotspot, MobilityModel, RadioScenario, RadioSlice};

/// Normalized BTD targets of the three slices in [`shaping_scenario`].
pub const SHAPING_TARGETS: [f64; 3] = [10.0, 12.0, 15.0];

fn hotspots(centers: &[(f64, f64)], spread: f64) -> MobilityModel {
    MobilityModel::hotspots(centers.iter().map(|&(x, y)| Hotspot { x, y, spread, weight: 1.0 }).collect())
}

/// Hotspots over a broad background cluster, so that every sector still sees
/// some traffic.
fn hotspots_with_background(centers: &[(f64, f64)], spread: f64, background: f64) -> MobilityModel {
    let mut spots: Vec<Hotspot> = centers.iter().map(|&(x, y)| Hotspot { x, y, spread, weight: 1.0 }).collect();
    spots.push(Hotspot { x: 0.0, y: 0.0, spread: 400.0, weight: background * centers.len() as f64 });
    MobilityModel::hotspots(spots)
}

/// The four spatial-load patterns with four equal-share slices on the
/// default 57-sector layout.
///
/// 1. every slice roughly uniform,
/// 2. every slice concentrated on the same hotspots,
/// 3. every slice concentrated on its own part of the network,
/// 4. two concentrated slices on separate hotspots and two uniform slices.
pub fn spatial_scenario(kind: usize, users_per_slice: usize) -> RadioScenario {
    const SPREAD: f64 = 130.0;
    const BACKGROUND: f64 = 0.3;
    let uniform = MobilityModel::random_waypoint;
    let shared = || hotspots_with_background(&[(180.0, 120.0), (-220.0, -60.0)], SPREAD, BACKGROUND);
    let own = |k: usize| {
        let centers: [[(f64, f64); 2]; 4] = [
            [(250.0, 180.0), (120.0, 320.0)],
            [(-250.0, 180.0), (-320.0, 40.0)],
            [(-230.0, -220.0), (-60.0, -330.0)],
            [(260.0, -200.0), (330.0, -40.0)],
        ];
        hotspots_with_background(&centers[k], SPREAD, BACKGROUND)
    };
    let mobility: Vec<MobilityModel> = match kind {
        1 => (0..4).map(|_| uniform()).collect(),
        2 => (0..4).map(|_| shared()).collect(),
        3 => (0..4).map(own).collect(),
        4 => vec![own(0), own(2), uniform(), uniform()],
        _ => panic!("spatial scenarios are numbered 1 to 4, got {kind}"),
    };
    RadioScenario::new(
        mobility.into_iter().map(|mobility| RadioSlice { share: 0.25, users: users_per_slice, mobility }).collect(),
    )
}

/// Three equal-share slices for the traffic-shaping game: one uniform and
/// two on separate pairs of hotspots.
pub fn shaping_scenario() -> RadioScenario {
    const SPREAD: f64 = 160.0;
    let share = 1.0 / 3.0;
    let mut sc = RadioScenario::new(vec![
        RadioSlice { share, users: 60, mobility: MobilityModel::random_waypoint() },
        RadioSlice { share, users: 60, mobility: hotspots(&[(200.0, 150.0), (-250.0, 50.0)], SPREAD) },
        RadioSlice { share, users: 60, mobility: hotspots(&[(-100.0, -300.0), (300.0, -150.0)], SPREAD) },
    ]);
    sc.horizon_s = 1500.0;
    sc
}

/// Two slices on three stations with handoffs and unequal capacities.
pub fn regression_model() -> TrafficModel {
    let slices = vec![
        SliceSpec::without_routing(0.4, vec![0.6, 0.3, 0.1], vec![1.0, 0.8, 1.2])
            .with_routing(vec![vec![0.0, 0.3, 0.1], vec![0.2, 0.0, 0.2], vec![0.1, 0.1, 0.0]])
            .with_delta(vec![1.0, 1.5, 2.0]),
        SliceSpec::without_routing(0.6, vec![0.1, 0.3, 0.6], vec![0.9, 1.0, 1.1])
            .with_routing(vec![vec![0.0, 0.2, 0.2], vec![0.1, 0.0, 0.3], vec![0.1, 0.2, 0.0]])
            .with_delta(vec![0.8, 1.2, 1.0]),
    ];
    TrafficModel::new(BaseStationSet::new(3).expect("three stations"), slices).expect("valid regression model")
}

/// [`regression_model`]'s relative loads with `total` split evenly between
/// the two slices.
pub fn regression_profile(total: f64) -> Result<LoadProfile> {
    derive_load_profile(&regression_model())?.with_uniform_total(total / 2.0)
}
