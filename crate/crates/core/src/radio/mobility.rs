//! Waypoint mobility inside the layout's disc.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layout::Point;
use crate::error::{Error, Result};

/// Gaussian cluster that hotspot waypoints are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hotspot {
    pub x: f64,
    pub y: f64,
    /// Standard deviation in meters of each coordinate.
    pub spread: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum MobilityModel {
    /// Waypoints uniform over the disc.
    RandomWaypoint { speed_range: [f64; 2], pause_range: [f64; 2] },
    /// Waypoints from a mixture of hotspots, redrawn until they fall inside
    /// the disc.
    HotspotWaypoint { speed_range: [f64; 2], pause_range: [f64; 2], hotspots: Vec<Hotspot> },
}

impl Default for MobilityModel {
    fn default() -> Self {
        MobilityModel::RandomWaypoint { speed_range: [2.0, 10.0], pause_range: [0.0, 5.0] }
    }
}

/// Attempts at drawing an inside hotspot waypoint before falling back to a
/// uniform one.
const MAX_REDRAWS: usize = 64;

impl MobilityModel {
    pub fn random_waypoint() -> Self {
        Self::default()
    }

    pub fn hotspots(hotspots: Vec<Hotspot>) -> Self {
        MobilityModel::HotspotWaypoint { speed_range: [2.0, 10.0], pause_range: [0.0, 5.0], hotspots }
    }

    fn ranges(&self) -> ([f64; 2], [f64; 2]) {
        match self {
            MobilityModel::RandomWaypoint { speed_range, pause_range }
            | MobilityModel::HotspotWaypoint { speed_range, pause_range, .. } => (*speed_range, *pause_range),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (speed, pause) = self.ranges();
        if !(speed[0] > 0.0 && speed[0] <= speed[1]) || !(pause[0] >= 0.0 && pause[0] <= pause[1]) {
            return Err(Error::InvalidModel("mobility needs 0 < min speed <= max speed and 0 <= min pause <= max pause".into()));
        }
        if let MobilityModel::HotspotWaypoint { hotspots, .. } = self {
            if hotspots.is_empty() || hotspots.iter().any(|h| !(h.spread > 0.0) || !(h.weight > 0.0)) {
                return Err(Error::InvalidModel("hotspots need positive spreads and weights".into()));
            }
        }
        Ok(())
    }

    /// Draws a waypoint inside the disc of radius `radius`.
    pub fn waypoint<R: Rng + ?Sized>(&self, radius: f64, rng: &mut R) -> Point {
        if let MobilityModel::HotspotWaypoint { hotspots, .. } = self {
            let total: f64 = hotspots.iter().map(|h| h.weight).sum();
            for _ in 0..MAX_REDRAWS {
                let mut pick = rng.random::<f64>() * total;
                let h = hotspots
                    .iter()
                    .find(|h| {
                        pick -= h.weight;
                        pick < 0.0
                    })
                    .unwrap_or(&hotspots[hotspots.len() - 1]);
                let normal = Normal::new(0.0, h.spread).expect("positive spread");
                let p = Point::new(h.x + normal.sample(rng), h.y + normal.sample(rng));
                if p.norm() <= radius {
                    return p;
                }
            }
        }
        uniform_in_disc(radius, rng)
    }
}

pub fn uniform_in_disc<R: Rng + ?Sized>(radius: f64, rng: &mut R) -> Point {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = std::f64::consts::TAU * rng.random::<f64>();
    Point::new(r * theta.cos(), r * theta.sin())
}

/// One user moving between waypoints with a pause at each.
#[derive(Debug, Clone)]
pub struct Walker {
    pub position: Point,
    target: Point,
    speed: f64,
    pause_left: f64,
}

impl Walker {
    pub fn new<R: Rng + ?Sized>(model: &MobilityModel, radius: f64, rng: &mut R) -> Self {
        let position = model.waypoint(radius, rng);
        let mut w = Walker { position, target: position, speed: 0.0, pause_left: 0.0 };
        w.next_leg(model, radius, rng);
        w
    }

    fn next_leg<R: Rng + ?Sized>(&mut self, model: &MobilityModel, radius: f64, rng: &mut R) {
        let (speed, _) = model.ranges();
        self.target = model.waypoint(radius, rng);
        self.speed = rng.random_range(speed[0]..=speed[1]);
    }

    /// Advances the walker by `dt` seconds.
    pub fn step<R: Rng + ?Sized>(&mut self, model: &MobilityModel, radius: f64, dt: f64, rng: &mut R) {
        let mut left = dt;
        while left > 0.0 {
            if self.pause_left > 0.0 {
                let wait = self.pause_left.min(left);
                self.pause_left -= wait;
                left -= wait;
                if self.pause_left > 0.0 {
                    break;
                }
                self.next_leg(model, radius, rng);
                continue;
            }
            let dx = self.target.x - self.position.x;
            let dy = self.target.y - self.position.y;
            let dist = dx.hypot(dy);
            let reach = self.speed * left;
            if reach < dist {
                self.position = Point::new(self.position.x + dx * reach / dist, self.position.y + dy * reach / dist);
                break;
            }
            self.position = self.target;
            left -= dist / self.speed;
            let (_, pause) = model.ranges();
            self.pause_left = rng.random_range(pause[0]..=pause[1]);
            if self.pause_left == 0.0 {
                self.next_leg(model, radius, rng);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hotspot_model() -> MobilityModel {
        MobilityModel::hotspots(vec![
            Hotspot { x: 150.0, y: 100.0, spread: 40.0, weight: 2.0 },
            Hotspot { x: -300.0, y: -200.0, spread: 60.0, weight: 1.0 },
        ])
    }

    #[test]
    fn walker_moves_at_its_speed() {
        let model = MobilityModel::RandomWaypoint { speed_range: [5.0, 5.0], pause_range: [0.0, 0.0] };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut w = Walker::new(&model, 500.0, &mut rng);
        for _ in 0..200 {
            let before = w.position;
            w.step(&model, 500.0, 1.0, &mut rng);
            // a turn at a waypoint can only shorten the displacement
            assert!(before.distance(w.position) <= 5.0 + 1e-9);
        }
    }

    #[test]
    fn hotspot_waypoints_cluster() {
        let model = hotspot_model();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let near = (0..4000)
            .map(|_| model.waypoint(500.0, &mut rng))
            .filter(|p| p.distance(Point::new(150.0, 100.0)) < 120.0)
            .count();
        // the heavier cluster holds 2/3 of the waypoints, nearly all within 3 spreads
        assert!(near > 2500, "{near}");
    }

    #[test]
    fn invalid_models_are_rejected() {
        assert!(MobilityModel::default().validate().is_ok());
        assert!(hotspot_model().validate().is_ok());
        let bad = MobilityModel::RandomWaypoint { speed_range: [0.0, 1.0], pause_range: [0.0, 0.0] };
        assert!(bad.validate().is_err());
        assert!(MobilityModel::hotspots(vec![]).validate().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn trajectories_stay_in_the_disc(seed in 0u64..1000, hot in any::<bool>()) {
            let model = if hot { hotspot_model() } else { MobilityModel::default() };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut w = Walker::new(&model, 500.0, &mut rng);
            for _ in 0..300 {
                w.step(&model, 500.0, 1.0, &mut rng);
                prop_assert!(w.position.norm() <= 500.0 + 1e-9);
            }
        }
    }
}
