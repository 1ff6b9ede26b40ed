//! Geohash codec and the 8-neighbor lattice.
//!
//! Bits are interleaved longitude first, five bits per base-32 character.

use serde::{Deserialize, Serialize};

use super::point::GeoPoint;
use crate::error::{Error, Result};

pub const ALPHABET: &[u8; 32] = b"0123456789bcdefghjkmnpqrstuvwxyz";
pub const MAX_LEVEL: usize = 12;

/// Compass order used for neighbor lists.
pub const DIRECTIONS: [&str; 8] = ["N", "NE", "E", "SE", "S", "SW", "W", "NW"];
/// `(dlat, dlon)` offsets in cell units matching [`DIRECTIONS`].
const OFFSETS: [(i32, i32); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

/// Bounding box in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BBox {
    pub fn contains(&self, p: &GeoPoint) -> bool {
        (self.lat_min..=self.lat_max).contains(&p.lat) && (self.lon_min..=self.lon_max).contains(&p.lon)
    }

    pub fn center(&self) -> GeoPoint {
        GeoPoint {
            lat: 0.5 * (self.lat_min + self.lat_max),
            lon: 0.5 * (self.lon_min + self.lon_max),
        }
    }

    pub fn lat_span(&self) -> f64 {
        self.lat_max - self.lat_min
    }

    pub fn lon_span(&self) -> f64 {
        self.lon_max - self.lon_min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeohashCell {
    pub code: String,
    pub level: usize,
    pub bbox: BBox,
}

impl GeohashCell {
    pub fn center(&self) -> GeoPoint {
        self.bbox.center()
    }
}

fn alphabet_index(c: char) -> Option<u8> {
    ALPHABET.iter().position(|&a| a as char == c).map(|i| i as u8)
}

pub fn encode(p: &GeoPoint, level: usize) -> Result<GeohashCell> {
    p.validate()?;
    if !(1..=MAX_LEVEL).contains(&level) {
        return Err(Error::invalid(format!("geohash level {level} outside [1, {MAX_LEVEL}]")));
    }
    let (mut lat_lo, mut lat_hi) = (-90.0f64, 90.0f64);
    let (mut lon_lo, mut lon_hi) = (-180.0f64, 180.0f64);
    let mut code = String::with_capacity(level);
    let mut even = true;
    for _ in 0..level {
        let mut idx = 0u8;
        for _ in 0..5 {
            idx <<= 1;
            if even {
                let mid = 0.5 * (lon_lo + lon_hi);
                if p.lon >= mid {
                    idx |= 1;
                    lon_lo = mid;
                } else {
                    lon_hi = mid;
                }
            } else {
                let mid = 0.5 * (lat_lo + lat_hi);
                if p.lat >= mid {
                    idx |= 1;
                    lat_lo = mid;
                } else {
                    lat_hi = mid;
                }
            }
            even = !even;
        }
        code.push(ALPHABET[idx as usize] as char);
    }
    Ok(GeohashCell {
        code,
        level,
        bbox: BBox {
            lat_min: lat_lo,
            lat_max: lat_hi,
            lon_min: lon_lo,
            lon_max: lon_hi,
        },
    })
}

pub fn decode(code: &str) -> Result<GeohashCell> {
    if code.is_empty() {
        return Err(Error::Parse("empty geohash".into()));
    }
    let (mut lat_lo, mut lat_hi) = (-90.0f64, 90.0f64);
    let (mut lon_lo, mut lon_hi) = (-180.0f64, 180.0f64);
    let mut even = true;
    for c in code.chars() {
        let idx = alphabet_index(c)
            .ok_or_else(|| Error::Parse(format!("illegal geohash character {c:?} in {code:?}")))?;
        for shift in (0..5).rev() {
            let bit = (idx >> shift) & 1 == 1;
            if even {
                let mid = 0.5 * (lon_lo + lon_hi);
                if bit {
                    lon_lo = mid;
                } else {
                    lon_hi = mid;
                }
            } else {
                let mid = 0.5 * (lat_lo + lat_hi);
                if bit {
                    lat_lo = mid;
                } else {
                    lat_hi = mid;
                }
            }
            even = !even;
        }
    }
    Ok(GeohashCell {
        code: code.to_string(),
        level: code.chars().count(),
        bbox: BBox {
            lat_min: lat_lo,
            lat_max: lat_hi,
            lon_min: lon_lo,
            lon_max: lon_hi,
        },
    })
}

fn wrap_lon(lon: f64) -> f64 {
    if lon > 180.0 {
        lon - 360.0
    } else if lon < -180.0 {
        lon + 360.0
    } else {
        lon
    }
}

/// The cell `(dlat, dlon)` cells away from `cell`, or `None` past a pole.
pub fn offset(cell: &GeohashCell, dlat: i32, dlon: i32) -> Option<String> {
    let c = cell.center();
    let lat = c.lat + f64::from(dlat) * cell.bbox.lat_span();
    if !(-90.0..=90.0).contains(&lat) {
        return None;
    }
    let lon = wrap_lon(c.lon + f64::from(dlon) * cell.bbox.lon_span());
    encode(&GeoPoint { lat, lon }, cell.level).ok().map(|g| g.code)
}

/// The 8 neighbors in (N, NE, E, SE, S, SW, W, NW) order.
///
/// Cells whose box touches a pole produce [`Error::PartialNeighborhood`].
pub fn neighbors(code: &str) -> Result<[String; 8]> {
    let cell = decode(code)?;
    let mut missing = Vec::new();
    let mut out: [String; 8] = Default::default();
    for (k, &(dlat, dlon)) in OFFSETS.iter().enumerate() {
        match offset(&cell, dlat, dlon) {
            Some(c) => out[k] = c,
            None => missing.push(DIRECTIONS[k]),
        }
    }
    if !missing.is_empty() {
        return Err(Error::PartialNeighborhood {
            code: code.to_string(),
            missing,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent bit-level oracle: interleave the integer cell coordinates.
    fn oracle_encode(lat: f64, lon: f64, level: usize) -> String {
        let bits = level * 5;
        let lon_bits = (bits + 1) / 2;
        let lat_bits = bits / 2;
        let lon_cells = (1u64 << lon_bits) as f64;
        let lat_cells = (1u64 << lat_bits) as f64;
        let xi = (((lon + 180.0) / 360.0 * lon_cells).floor() as u64).min((1 << lon_bits) - 1);
        let yi = (((lat + 90.0) / 180.0 * lat_cells).floor() as u64).min((1 << lat_bits) - 1);
        let mut word = 0u64;
        let (mut xb, mut yb) = (lon_bits, lat_bits);
        for i in 0..bits {
            word <<= 1;
            if i % 2 == 0 {
                xb -= 1;
                word |= (xi >> xb) & 1;
            } else {
                yb -= 1;
                word |= (yi >> yb) & 1;
            }
        }
        (0..level)
            .rev()
            .map(|c| ALPHABET[((word >> (5 * c)) & 31) as usize] as char)
            .collect()
    }

    #[test]
    fn origin_level_one_is_s() {
        // lon bits 1,1,0 and lat bits 1,0 interleave to 11000 = 24 -> 's'
        assert_eq!(oracle_encode(0.0, 0.0, 1), "s");
        assert_eq!(encode(&GeoPoint { lat: 0.0, lon: 0.0 }, 1).unwrap().code, "s");
    }

    #[test]
    fn decode_s_box() {
        let b = decode("s").unwrap().bbox;
        assert_eq!((b.lat_min, b.lat_max, b.lon_min, b.lon_max), (0.0, 45.0, 0.0, 45.0));
    }

    #[test]
    fn encode_matches_bit_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let lat = rng.gen_range(-89.9..89.9);
            let lon = rng.gen_range(-179.9..179.9);
            let level = rng.gen_range(1..=MAX_LEVEL);
            let p = GeoPoint { lat, lon };
            assert_eq!(encode(&p, level).unwrap().code, oracle_encode(lat, lon, level));
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(decode(""), Err(Error::Parse(_))));
        assert!(matches!(decode("sa"), Err(Error::Parse(_))));
        assert!(encode(&GeoPoint { lat: 0.0, lon: 0.0 }, 0).is_err());
        assert!(encode(&GeoPoint { lat: 0.0, lon: 0.0 }, 13).is_err());
        assert!(encode(&GeoPoint { lat: 95.0, lon: 0.0 }, 5).is_err());
    }

    #[test]
    fn decode_is_idempotent_under_reencode() {
        for code in ["s", "tdr1w", "9q8yyk8yuv12", "dr5ru7"] {
            let cell = decode(code).unwrap();
            let again = decode(&encode(&cell.center(), cell.level).unwrap().code).unwrap();
            assert_eq!(again, cell);
        }
    }

    #[test]
    fn level_one_neighbors_of_s() {
        // Offsets of the (22.5, 22.5) center by one 45-degree cell, encoded by the oracle.
        let expect: Vec<String> = [(67.5, 22.5), (67.5, 67.5), (22.5, 67.5), (-22.5, 67.5), (-22.5, 22.5),
            (-22.5, -22.5), (22.5, -22.5), (67.5, -22.5)]
            .iter()
            .map(|&(lat, lon)| oracle_encode(lat, lon, 1))
            .collect();
        assert_eq!(expect, ["u", "v", "t", "m", "k", "7", "e", "g"]);
        assert_eq!(neighbors("s").unwrap().to_vec(), expect);
    }

    #[test]
    fn neighbors_share_edge_or_corner_and_are_reciprocal() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let p = GeoPoint {
                lat: rng.gen_range(-60.0..60.0),
                lon: rng.gen_range(-180.0..180.0),
            };
            let level = rng.gen_range(2..=9);
            let cell = encode(&p, level).unwrap();
            let ns = neighbors(&cell.code).unwrap();
            let mut uniq = ns.to_vec();
            uniq.sort();
            uniq.dedup();
            assert_eq!(uniq.len(), 8);
            for n in &ns {
                let nb = decode(n).unwrap().bbox;
                let b = cell.bbox;
                let eps = 1e-9;
                let lat_touch = nb.lat_min <= b.lat_max + eps && nb.lat_max >= b.lat_min - eps;
                let lon_touch = (nb.lon_min <= b.lon_max + eps && nb.lon_max >= b.lon_min - eps)
                    || (b.lon_max >= 180.0 - eps && nb.lon_min <= -180.0 + eps)
                    || (b.lon_min <= -180.0 + eps && nb.lon_max >= 180.0 - eps);
                assert!(lat_touch && lon_touch, "{n} does not touch {}", cell.code);
                assert!(neighbors(n).unwrap().contains(&cell.code));
            }
        }
    }

    #[test]
    fn antimeridian_wraps() {
        let cell = encode(&GeoPoint { lat: 10.0, lon: 179.99 }, 4).unwrap();
        let ns = neighbors(&cell.code).unwrap();
        let east = decode(&ns[2]).unwrap();
        assert!(east.bbox.lon_min <= -179.9);
    }

    #[test]
    fn pole_cells_report_missing_directions() {
        let cell = encode(&GeoPoint { lat: 89.99, lon: 0.0 }, 2).unwrap();
        match neighbors(&cell.code) {
            Err(Error::PartialNeighborhood { missing, .. }) => assert_eq!(missing, vec!["N", "NE", "NW"]),
            other => panic!("expected partial neighborhood, got {other:?}"),
        }
    }
}
