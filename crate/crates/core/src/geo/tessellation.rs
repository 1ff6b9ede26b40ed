//! Region sets built by either tessellation scheme, and their JSON form.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::geohash::{self, GeohashCell};
use super::kmeans::{self, KMeansResult};
use super::point::{GeoPoint, Projection};
use super::delaunay::voronoi_adjacency;
use crate::error::{Error, Result};
use crate::graph::AdjacencyMatrix;
use crate::provenance::Provenance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Geohash,
    Voronoi,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Geohash => "geohash",
            Scheme::Voronoi => "voronoi",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "geohash" | "g" => Ok(Scheme::Geohash),
            "voronoi" | "v" => Ok(Scheme::Voronoi),
            other => Err(Error::invalid(format!("unknown tessellation scheme {other:?}"))),
        }
    }
}

/// Rectangular block of same-level geohash cells; row 0 is the northern edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeohashGrid {
    pub level: usize,
    pub rows: usize,
    pub cols: usize,
}

/// A partition of the study area into `n` regions with first-order adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct Tessellation {
    pub scheme: Scheme,
    pub region_ids: Vec<String>,
    pub centroids: Vec<GeoPoint>,
    pub adjacency: AdjacencyMatrix,
    pub grid: Option<GeohashGrid>,
    pub projection: Option<Projection>,
    pub provenance: Option<Provenance>,
    index: HashMap<String, usize>,
}

impl Tessellation {
    fn assemble(
        scheme: Scheme,
        region_ids: Vec<String>,
        centroids: Vec<GeoPoint>,
        adjacency: AdjacencyMatrix,
        grid: Option<GeohashGrid>,
        projection: Option<Projection>,
    ) -> Self {
        let index = region_ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        Self {
            scheme,
            region_ids,
            centroids,
            adjacency,
            grid,
            projection,
            provenance: None,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.region_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.region_ids.is_empty()
    }

    pub fn with_provenance(mut self, p: Provenance) -> Self {
        self.provenance = Some(p);
        self
    }

    /// Geohash grid covering `bbox_points`, expanded to whole cells.
    pub fn geohash_grid(bbox_points: &[GeoPoint], level: usize) -> Result<Self> {
        if bbox_points.is_empty() {
            return Err(Error::invalid("geohash grid needs at least one point"));
        }
        let (mut lat_lo, mut lat_hi, mut lon_lo, mut lon_hi) = (90.0f64, -90.0f64, 180.0f64, -180.0f64);
        for p in bbox_points {
            p.validate()?;
            lat_lo = lat_lo.min(p.lat);
            lat_hi = lat_hi.max(p.lat);
            lon_lo = lon_lo.min(p.lon);
            lon_hi = lon_hi.max(p.lon);
        }
        let sw = geohash::encode(&GeoPoint { lat: lat_lo, lon: lon_lo }, level)?;
        let ne = geohash::encode(&GeoPoint { lat: lat_hi, lon: lon_hi }, level)?;
        let dlat = sw.bbox.lat_span();
        let dlon = sw.bbox.lon_span();
        let rows = ((ne.bbox.lat_min - sw.bbox.lat_min) / dlat).round() as usize + 1;
        let cols = ((ne.bbox.lon_min - sw.bbox.lon_min) / dlon).round() as usize + 1;
        let mut ids = Vec::with_capacity(rows * cols);
        let mut centroids = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let lat = ne.bbox.lat_min + 0.5 * dlat - r as f64 * dlat;
                let lon = sw.bbox.lon_min + 0.5 * dlon + c as f64 * dlon;
                let cell = geohash::encode(&GeoPoint { lat, lon }, level)?;
                centroids.push(cell.center());
                ids.push(cell.code);
            }
        }
        let grid = GeohashGrid { level, rows, cols };
        let adjacency = lattice_adjacency(rows, cols);
        Ok(Self::assemble(Scheme::Geohash, ids, centroids, adjacency, Some(grid), None))
    }

    /// K-Means on projected points, then Voronoi adjacency of the centroids.
    pub fn voronoi(points: &[GeoPoint], k: usize, seed: u64) -> Result<(Self, KMeansResult)> {
        for p in points {
            p.validate()?;
        }
        let projection = Projection::about_centroid(points)?;
        let projected: Vec<_> = points.iter().map(|p| projection.project(p)).collect();
        let km = kmeans::kmeans_cluster(&projected, k, seed)?;
        let tess = Self::voronoi_from_centroids(
            km.centroids.iter().map(|c| projection.unproject(c)).collect(),
            projection,
        )?;
        Ok((tess, km))
    }

    pub fn voronoi_from_centroids(centroids: Vec<GeoPoint>, projection: Projection) -> Result<Self> {
        let projected: Vec<_> = centroids.iter().map(|c| projection.project(c)).collect();
        let adjacency = if centroids.len() >= 3 {
            voronoi_adjacency(&projected)?
        } else {
            // two sites always share their bisector
            AdjacencyMatrix::from_edges(centroids.len(), if centroids.len() == 2 { &[(0, 1)] } else { &[] })?
        };
        let ids = (0..centroids.len()).map(|i| format!("v{i}")).collect();
        Ok(Self::assemble(Scheme::Voronoi, ids, centroids, adjacency, None, Some(projection)))
    }

    pub fn index_of(&self, region_id: &str) -> Option<usize> {
        self.index.get(region_id).copied()
    }

    /// Region containing `p`: the geohash cell if it lies on the grid, or the
    /// nearest centroid for Voronoi cells.
    pub fn locate(&self, p: &GeoPoint) -> Option<usize> {
        match self.scheme {
            Scheme::Geohash => {
                let level = self.grid.as_ref()?.level;
                let cell = geohash::encode(p, level).ok()?;
                self.index_of(&cell.code)
            }
            Scheme::Voronoi => {
                let proj = self.projection?;
                let q = proj.project(p);
                let cs: Vec<_> = self.centroids.iter().map(|c| proj.project(c)).collect();
                kmeans::assign_nearest(&q, &cs).ok()
            }
        }
    }

    /// Locate many points; reuses the projected centroids.
    pub fn locate_all(&self, points: &[GeoPoint]) -> Vec<Option<usize>> {
        match (self.scheme, self.projection) {
            (Scheme::Voronoi, Some(proj)) => {
                let cs: Vec<_> = self.centroids.iter().map(|c| proj.project(c)).collect();
                points
                    .iter()
                    .map(|p| kmeans::assign_nearest(&proj.project(p), &cs).ok())
                    .collect()
            }
            _ => points.iter().map(|p| self.locate(p)).collect(),
        }
    }

    /// Lattice neighbors of a geohash region in (N, NE, E, SE, S, SW, W, NW)
    /// order; `None` marks slots that fall off the grid.
    pub fn lattice_neighbors(&self, region: usize) -> Result<[Option<usize>; 8]> {
        let grid = self
            .grid
            .as_ref()
            .ok_or_else(|| Error::invalid("lattice neighbors require a geohash tessellation"))?;
        if region >= self.len() {
            return Err(Error::invalid(format!("region {region} out of range")));
        }
        let (r, c) = ((region / grid.cols) as i64, (region % grid.cols) as i64);
        let mut out = [None; 8];
        for (k, (dr, dc)) in LATTICE_OFFSETS.iter().enumerate() {
            let (rr, cc) = (r + dr, c + dc);
            if rr >= 0 && cc >= 0 && (rr as usize) < grid.rows && (cc as usize) < grid.cols {
                out[k] = Some(rr as usize * grid.cols + cc as usize);
            }
        }
        Ok(out)
    }

    /// Geohash cell record for a region (geohash scheme only).
    pub fn cell(&self, region: usize) -> Result<GeohashCell> {
        match self.scheme {
            Scheme::Geohash => geohash::decode(&self.region_ids[region]),
            Scheme::Voronoi => Err(Error::invalid("voronoi regions have no geohash cell")),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&TessellationDoc::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TessellationDoc = serde_json::from_str(text)?;
        doc.try_into()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Row/column offsets in compass order; row 0 is north.
const LATTICE_OFFSETS: [(i64, i64); 8] = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)];

fn lattice_adjacency(rows: usize, cols: usize) -> AdjacencyMatrix {
    let mut adj = AdjacencyMatrix::empty(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            for (dr, dc) in LATTICE_OFFSETS {
                let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                if rr >= 0 && cc >= 0 && (rr as usize) < rows && (cc as usize) < cols {
                    adj.connect(i, rr as usize * cols + cc as usize);
                }
            }
        }
    }
    adj
}

/// On-disk layout of a tessellation.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TessellationDoc {
    scheme: Scheme,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    level: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    cols: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    origin: Option<[f64; 2]>,
    region_ids: Vec<String>,
    centroids: Vec<[f64; 2]>,
    adjacency: Vec<[usize; 2]>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    provenance: Option<Provenance>,
}

impl From<&Tessellation> for TessellationDoc {
    fn from(t: &Tessellation) -> Self {
        Self {
            scheme: t.scheme,
            level: t.grid.as_ref().map(|g| g.level),
            k: (t.scheme == Scheme::Voronoi).then_some(t.len()),
            rows: t.grid.as_ref().map(|g| g.rows),
            cols: t.grid.as_ref().map(|g| g.cols),
            origin: t.projection.map(|p| [p.origin.lat, p.origin.lon]),
            region_ids: t.region_ids.clone(),
            centroids: t.centroids.iter().map(|c| [c.lat, c.lon]).collect(),
            adjacency: t.adjacency.edge_list().into_iter().map(|(i, j)| [i, j]).collect(),
            provenance: t.provenance.clone(),
        }
    }
}

impl TryFrom<TessellationDoc> for Tessellation {
    type Error = Error;

    fn try_from(doc: TessellationDoc) -> Result<Self> {
        let n = doc.centroids.len();
        if doc.region_ids.len() != n {
            return Err(Error::Format(format!(
                "{} region ids for {n} centroids",
                doc.region_ids.len()
            )));
        }
        let centroids = doc
            .centroids
            .iter()
            .map(|&[lat, lon]| GeoPoint::new(lat, lon))
            .collect::<Result<Vec<_>>>()?;
        let edges: Vec<(usize, usize)> = doc.adjacency.iter().map(|&[i, j]| (i, j)).collect();
        let adjacency = AdjacencyMatrix::from_edges(n, &edges)?;
        let grid = match (doc.scheme, doc.level, doc.rows, doc.cols) {
            (Scheme::Geohash, Some(level), Some(rows), Some(cols)) if rows * cols == n => {
                Some(GeohashGrid { level, rows, cols })
            }
            (Scheme::Geohash, ..) => {
                return Err(Error::Format("geohash tessellation needs level, rows and cols".into()))
            }
            _ => None,
        };
        let projection = match (doc.scheme, doc.origin) {
            (Scheme::Voronoi, Some([lat, lon])) => Some(Projection::new(GeoPoint::new(lat, lon)?)),
            (Scheme::Voronoi, None) => Some(Projection::about_centroid(&centroids)?),
            _ => None,
        };
        let mut t = Tessellation::assemble(doc.scheme, doc.region_ids, centroids, adjacency, grid, projection);
        t.provenance = doc.provenance;
        Ok(t)
    }
}

/// Heat-map rows `(cell_id, lat, lon, count)`.
pub fn heatmap_rows(t: &Tessellation, counts: &[f64]) -> Vec<(String, f64, f64, f64)> {
    t.region_ids
        .iter()
        .zip(&t.centroids)
        .zip(counts)
        .map(|((id, c), &n)| (id.clone(), c.lat, c.lon, n))
        .collect()
}

pub fn write_heatmap(path: &Path, t: &Tessellation, counts: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["cell_id", "lat", "lon", "count"])?;
    for (id, lat, lon, n) in heatmap_rows(t, counts) {
        w.write_record([id, lat.to_string(), lon.to_string(), n.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
