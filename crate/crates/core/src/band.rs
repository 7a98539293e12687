//! Band identifiers and the two sensor families they belong to.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Spectral and radar bands carried by a scene.
///
/// Optical bands follow the Sentinel-2 naming used throughout
/// (`re1`..`re4` are the red-edge bands B5, B6, B7 and B8A); `vv` and
/// `vh` are the two Sentinel-1 backscatter polarizations in linear
/// power units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Blue,
    Green,
    Red,
    Re1,
    Re2,
    Re3,
    Nir,
    Re4,
    Swir1,
    Swir2,
    Vv,
    Vh,
}

/// Sensor family a band is acquired by. Optical and radar observations
/// live on separate time grids and carry separate validity masks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sensor {
    Optical,
    Radar,
}

impl Band {
    /// Every band in canonical order. Feature vectors, scene bundles,
    /// and sample sidecars all serialize bands in this order.
    pub const ALL: [Band; 12] = [
        Band::Blue,
        Band::Green,
        Band::Red,
        Band::Re1,
        Band::Re2,
        Band::Re3,
        Band::Nir,
        Band::Re4,
        Band::Swir1,
        Band::Swir2,
        Band::Vv,
        Band::Vh,
    ];

    pub const OPTICAL: [Band; 10] = [
        Band::Blue,
        Band::Green,
        Band::Red,
        Band::Re1,
        Band::Re2,
        Band::Re3,
        Band::Nir,
        Band::Re4,
        Band::Swir1,
        Band::Swir2,
    ];

    pub const RADAR: [Band; 2] = [Band::Vv, Band::Vh];

    pub fn sensor(self) -> Sensor {
        match self {
            Band::Vv | Band::Vh => Sensor::Radar,
            _ => Sensor::Optical,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Band::Blue => "blue",
            Band::Green => "green",
            Band::Red => "red",
            Band::Re1 => "re1",
            Band::Re2 => "re2",
            Band::Re3 => "re3",
            Band::Nir => "nir",
            Band::Re4 => "re4",
            Band::Swir1 => "swir1",
            Band::Swir2 => "swir2",
            Band::Vv => "vv",
            Band::Vh => "vh",
        }
    }

    pub fn from_name(name: &str) -> Option<Band> {
        Band::ALL.iter().copied().find(|b| b.name() == name)
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for band in Band::ALL {
            assert_eq!(Band::from_name(band.name()), Some(band));
        }
        assert_eq!(Band::from_name("b42"), None);
    }

    #[test]
    fn sensor_split_covers_all_bands() {
        let optical = Band::ALL.iter().filter(|b| b.sensor() == Sensor::Optical);
        let radar = Band::ALL.iter().filter(|b| b.sensor() == Sensor::Radar);
        assert_eq!(optical.count(), Band::OPTICAL.len());
        assert_eq!(radar.count(), Band::RADAR.len());
    }

    #[test]
    fn serde_uses_short_names() {
        let json = serde_json::to_string(&Band::Re4).unwrap();
        assert_eq!(json, "\"re4\"");
        let back: Band = serde_json::from_str("\"swir2\"").unwrap();
        assert_eq!(back, Band::Swir2);
    }
}
