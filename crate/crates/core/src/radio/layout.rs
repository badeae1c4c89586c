//! Hexagonal multi-sector site layout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    pub site: usize,
    pub position: Point,
    /// Boresight direction in degrees, counterclockwise from the x axis.
    pub azimuth_deg: f64,
}

/// Sites on a hexagonal lattice: a center site plus `rings` rings around it,
/// each site split into equally spaced sectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HexLayout {
    pub rings: usize,
    pub inter_site_distance: f64,
    pub sectors_per_site: usize,
    /// Boresight of each site's first sector.
    pub azimuth_offset_deg: f64,
}

impl Default for HexLayout {
    fn default() -> Self {
        Self { rings: 2, inter_site_distance: 200.0, sectors_per_site: 3, azimuth_offset_deg: 30.0 }
    }
}

impl HexLayout {
    pub fn validate(&self) -> Result<()> {
        if !(self.inter_site_distance > 0.0) || self.sectors_per_site == 0 {
            return Err(Error::InvalidModel("layout needs a positive site distance and at least one sector".into()));
        }
        Ok(())
    }

    /// `1 + 3 rings (rings + 1)` site centers, center site first.
    pub fn sites(&self) -> Vec<Point> {
        let r = self.rings as i64;
        let d = self.inter_site_distance;
        let mut out = Vec::new();
        // axial coordinates (q, s) with |q|, |s|, |q + s| <= rings
        for ring in 0..=r {
            for q in -r..=r {
                for s in -r..=r {
                    let dist = q.abs().max(s.abs()).max((q + s).abs());
                    if dist == ring {
                        let x = d * (q as f64 + 0.5 * s as f64);
                        let y = d * (3f64.sqrt() / 2.0) * s as f64;
                        out.push(Point::new(x, y));
                    }
                }
            }
        }
        out
    }

    pub fn sectors(&self) -> Vec<Sector> {
        let step = 360.0 / self.sectors_per_site as f64;
        self.sites()
            .into_iter()
            .enumerate()
            .flat_map(|(site, position)| {
                (0..self.sectors_per_site).map(move |k| Sector {
                    site,
                    position,
                    azimuth_deg: self.azimuth_offset_deg + step * k as f64,
                })
            })
            .collect()
    }

    pub fn num_sites(&self) -> usize {
        1 + 3 * self.rings * (self.rings + 1)
    }

    pub fn num_sectors(&self) -> usize {
        self.num_sites() * self.sectors_per_site
    }

    /// Radius of the disc users move in: the outer ring plus half a site
    /// distance.
    pub fn radius(&self) -> f64 {
        (self.rings as f64 + 0.5) * self.inter_site_distance
    }

    pub fn contains(&self, p: Point) -> bool {
        p.norm() <= self.radius()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_has_nineteen_sites_and_57_sectors() {
        let l = HexLayout::default();
        assert_eq!(l.sites().len(), 19);
        assert_eq!(l.num_sites(), 19);
        assert_eq!(l.sectors().len(), 57);
        assert_eq!(l.num_sectors(), 57);
    }

    #[test]
    fn neighbours_sit_one_site_distance_apart() {
        let l = HexLayout::default();
        let sites = l.sites();
        assert_eq!(sites[0], Point::new(0.0, 0.0));
        let first_ring: Vec<_> = sites.iter().filter(|p| (p.norm() - 200.0).abs() < 1e-9).collect();
        assert_eq!(first_ring.len(), 6);
        // every site's nearest other site is exactly one distance away
        for (i, a) in sites.iter().enumerate() {
            let nearest = sites
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| a.distance(*b))
                .fold(f64::INFINITY, f64::min);
            assert!((nearest - 200.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sectors_share_site_positions() {
        let l = HexLayout { rings: 1, ..HexLayout::default() };
        let sectors = l.sectors();
        assert_eq!(sectors.len(), 21);
        assert_eq!(sectors[1].position, sectors[2].position);
        assert_eq!([sectors[0].azimuth_deg, sectors[1].azimuth_deg, sectors[2].azimuth_deg], [30.0, 150.0, 270.0]);
        assert!(l.contains(Point::new(0.0, 299.0)) && !l.contains(Point::new(0.0, 301.0)));
    }
}
