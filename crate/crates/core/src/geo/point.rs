use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius in kilometers.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// A latitude/longitude pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        let p = Self { lat, lon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lat.is_finite() || !(-90.0..=90.0).contains(&self.lat) {
            return Err(Error::invalid(format!("latitude {} out of range", self.lat)));
        }
        if !self.lon.is_finite() || !(-180.0..=180.0).contains(&self.lon) {
            return Err(Error::invalid(format!("longitude {} out of range", self.lon)));
        }
        Ok(())
    }
}

/// Planar coordinates in kilometers.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub x_km: f64,
    pub y_km: f64,
}

impl ProjectedPoint {
    pub fn new(x_km: f64, y_km: f64) -> Self {
        Self { x_km, y_km }
    }

    pub fn dist2(&self, other: &ProjectedPoint) -> f64 {
        let dx = self.x_km - other.x_km;
        let dy = self.y_km - other.y_km;
        dx * dx + dy * dy
    }
}

/// Equirectangular projection about a reference origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub origin: GeoPoint,
}

impl Projection {
    pub fn new(origin: GeoPoint) -> Self {
        Self { origin }
    }

    /// Projection centered on the arithmetic mean of `points`.
    pub fn about_centroid(points: &[GeoPoint]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("cannot center a projection on zero points"));
        }
        let n = points.len() as f64;
        let lat = points.iter().map(|p| p.lat).sum::<f64>() / n;
        let lon = points.iter().map(|p| p.lon).sum::<f64>() / n;
        Ok(Self::new(GeoPoint { lat, lon }))
    }

    fn cos_ref(&self) -> f64 {
        self.origin.lat.to_radians().cos()
    }

    pub fn project(&self, p: &GeoPoint) -> ProjectedPoint {
        let dlon = (p.lon - self.origin.lon).to_radians();
        let dlat = (p.lat - self.origin.lat).to_radians();
        ProjectedPoint {
            x_km: EARTH_RADIUS_KM * dlon * self.cos_ref(),
            y_km: EARTH_RADIUS_KM * dlat,
        }
    }

    pub fn unproject(&self, p: &ProjectedPoint) -> GeoPoint {
        let dlon = p.x_km / (EARTH_RADIUS_KM * self.cos_ref());
        let dlat = p.y_km / EARTH_RADIUS_KM;
        GeoPoint {
            lat: self.origin.lat + dlat.to_degrees(),
            lon: self.origin.lon + dlon.to_degrees(),
        }
    }
}
