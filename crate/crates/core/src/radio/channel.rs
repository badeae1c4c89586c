//! Downlink channel: path loss, sector antenna pattern, shadowing, fading
//! and SINR with strongest-sector association.
//!
//! Transmit power and noise are given on one common dB scale; only their
//! difference affects the SINR.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use super::layout::{Point, Sector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Fading {
    None,
    /// Rayleigh power fading averaged over `samples` draws per shadowing
    /// period.
    Rayleigh { samples: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelParams {
    pub noise_db: f64,
    pub tx_power_db: f64,
    pub carrier_ghz: f64,
    pub antenna_gain_dbi: f64,
    /// Half-power beamwidth of the sector pattern.
    pub beamwidth_deg: f64,
    /// Attenuation floor of the sector pattern.
    pub front_to_back_db: f64,
    pub shadowing_std_db: f64,
    pub shadowing_period_s: f64,
    pub fading: Fading,
    /// Distances below this are clamped before applying path loss.
    pub min_distance_m: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            noise_db: -104.0,
            tx_power_db: 41.0,
            carrier_ghz: 2.5,
            antenna_gain_dbi: 17.0,
            beamwidth_deg: 70.0,
            front_to_back_db: 20.0,
            shadowing_std_db: 8.0,
            shadowing_period_s: 1.0,
            fading: Fading::Rayleigh { samples: 8 },
            min_distance_m: 10.0,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.carrier_ghz > 0.0
            && self.beamwidth_deg > 0.0
            && self.front_to_back_db >= 0.0
            && self.shadowing_std_db >= 0.0
            && self.shadowing_period_s > 0.0
            && self.min_distance_m > 0.0
            && !matches!(self.fading, Fading::Rayleigh { samples: 0 });
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidModel("channel parameters out of range".into()))
        }
    }

    pub fn noise_linear(&self) -> f64 {
        db_to_linear(self.noise_db)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// `36.7 log10(d) + 22.7 + 26 log10(f_c)` with `d` in meters and `f_c` in GHz.
pub fn path_loss_db(distance_m: f64, carrier_ghz: f64) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(Error::NonpositiveDistance(distance_m));
    }
    Ok(36.7 * distance_m.log10() + 22.7 + 26.0 * carrier_ghz.log10())
}

/// Parabolic sector pattern `peak - min(12 (offset / beamwidth)^2, floor)`.
pub fn antenna_gain_db(params: &ChannelParams, offset_deg: f64) -> f64 {
    let t = offset_deg / params.beamwidth_deg;
    params.antenna_gain_dbi - (12.0 * t * t).min(params.front_to_back_db)
}

/// Smallest angle between the boresight and the direction to `p`, in degrees.
pub fn offset_angle_deg(sector: &Sector, p: Point) -> f64 {
    let bearing = (p.y - sector.position.y).atan2(p.x - sector.position.x).to_degrees();
    let diff = (bearing - sector.azimuth_deg).rem_euclid(360.0);
    diff.min(360.0 - diff)
}

/// Deterministic gain in dB from a sector to `p`: antenna minus path loss.
pub fn mean_gain_db(params: &ChannelParams, sector: &Sector, p: Point) -> f64 {
    let d = sector.position.distance(p).max(params.min_distance_m);
    let loss = path_loss_db(d, params.carrier_ghz).expect("clamped distance is positive");
    antenna_gain_db(params, offset_angle_deg(sector, p)) - loss
}

/// Signal over interference plus noise for the `serving` entry of the
/// received powers.
pub fn sinr(received: &[f64], serving: usize, noise: f64) -> f64 {
    let total: f64 = received.iter().sum();
    received[serving] / (total - received[serving] + noise)
}

/// Index of the strongest received power, which also maximizes the SINR.
pub fn strongest(received: &[f64]) -> usize {
    received.iter().enumerate().fold(0, |best, (i, p)| if *p > received[best] { i } else { best })
}

/// Per-site shadowing in dB, shared by a site's sectors.
pub fn draw_shadowing<R: Rng + ?Sized>(params: &ChannelParams, sites: usize, rng: &mut R) -> Vec<f64> {
    if params.shadowing_std_db == 0.0 {
        return vec![0.0; sites];
    }
    let normal = Normal::new(0.0, params.shadowing_std_db).expect("finite std");
    (0..sites).map(|_| normal.sample(rng)).collect()
}

/// Fading power gain averaged over one period. The mean of `k` unit
/// exponentials is drawn directly as a Gamma(k, 1/k) variate.
pub fn draw_fading<R: Rng + ?Sized>(params: &ChannelParams, rng: &mut R) -> f64 {
    match params.fading {
        Fading::None => 1.0,
        Fading::Rayleigh { samples } => {
            let k = samples as f64;
            Gamma::new(k, 1.0 / k).expect("positive shape").sample(rng)
        }
    }
}

/// Linear received powers from every sector at `p`.
pub fn received_powers<R: Rng + ?Sized>(
    params: &ChannelParams,
    sectors: &[Sector],
    p: Point,
    shadowing_db: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    sectors
        .iter()
        .map(|s| {
            let db = params.tx_power_db + mean_gain_db(params, s, p) + shadowing_db[s.site];
            db_to_linear(db) * draw_fading(params, rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::layout::HexLayout;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn path_loss_values() {
        assert!((path_loss_db(1.0, 1.0).unwrap() - 22.7).abs() < 1e-12);
        // 36.7 * log10(200) + 22.7 + 26 * log10(2.5)
        let hand = 36.7 * 2.301_029_995_663_981 + 22.7 + 26.0 * 0.397_940_008_672_037_6;
        let pl = path_loss_db(200.0, 2.5).unwrap();
        assert!((pl - hand).abs() < 1e-9);
        assert!((pl - 117.50).abs() < 0.01);
        let step = path_loss_db(350.0, 2.5).unwrap() - path_loss_db(35.0, 2.5).unwrap();
        assert!((step - 36.7).abs() < 1e-9);
        assert!(matches!(path_loss_db(0.0, 2.5), Err(Error::NonpositiveDistance(_))));
        assert!(path_loss_db(-3.0, 2.5).is_err());
    }

    #[test]
    fn antenna_pattern_shape() {
        let p = ChannelParams::default();
        assert_eq!(antenna_gain_db(&p, 0.0), 17.0);
        // half-power beamwidth: 3 dB down at half the width either side
        assert!((antenna_gain_db(&p, 35.0) - 14.0).abs() < 1e-12);
        assert_eq!(antenna_gain_db(&p, 180.0), -3.0);
        let s = Sector { site: 0, position: Point::new(0.0, 0.0), azimuth_deg: 350.0 };
        assert!((offset_angle_deg(&s, Point::new(1.0, 0.0)) - 10.0).abs() < 1e-9);
        assert!((offset_angle_deg(&s, Point::new(-1.0, 0.0)) - 170.0).abs() < 1e-9);
    }

    #[test]
    fn lone_sector_sinr_is_signal_over_noise() {
        let received = [db_to_linear(41.0)];
        let s = sinr(&received, 0, db_to_linear(-104.0));
        assert!((linear_to_db(s) - 145.0).abs() < 1e-9);
    }

    #[test]
    fn symmetric_cells_give_zero_db_when_noise_is_negligible() {
        let pg = db_to_linear(41.0 - 100.0);
        let s = sinr(&[pg, pg], 0, db_to_linear(-104.0));
        assert!(s < 1.0);
        assert!(linear_to_db(s).abs() < 0.01);
    }

    #[test]
    fn sinr_falls_from_center_to_edge() {
        let params = ChannelParams { shadowing_std_db: 0.0, fading: Fading::None, ..ChannelParams::default() };
        let layout = HexLayout::default();
        let sectors = layout.sectors();
        let shadow = vec![0.0; layout.num_sites()];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // along sector 0's boresight from the center site toward the cell edge
        let dir = sectors[0].azimuth_deg.to_radians();
        let mut last = f64::INFINITY;
        for k in 1..=10 {
            let r = 10.0 * k as f64;
            let p = Point::new(r * dir.cos(), r * dir.sin());
            let rx = received_powers(&params, &sectors, p, &shadow, &mut rng);
            assert_eq!(strongest(&rx), 0);
            let s = sinr(&rx, 0, params.noise_linear());
            assert!(s < last);
            last = s;
        }
    }

    #[test]
    fn averaged_fading_has_unit_mean() {
        let params = ChannelParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let mean: f64 = (0..n).map(|_| draw_fading(&params, &mut rng)).sum::<f64>() / n as f64;
        // each draw averages 8 unit exponentials: variance 1/8
        assert!((mean - 1.0).abs() < 4.0 * (0.125f64 / n as f64).sqrt());
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(ChannelParams::default().validate().is_ok());
        let bad = ChannelParams { fading: Fading::Rayleigh { samples: 0 }, ..ChannelParams::default() };
        assert!(bad.validate().is_err());
    }
}
