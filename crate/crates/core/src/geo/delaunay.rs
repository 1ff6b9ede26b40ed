//! Bowyer–Watson Delaunay triangulation and the Voronoi adjacency it induces.
//!
//! Orientation and in-circle tests use adaptive exact predicates. Points are
//! inserted in index order and the in-circle test is strict, so cocircular
//! configurations resolve deterministically in favor of earlier indices.

use std::collections::BTreeMap;

use robust::{incircle, orient2d, Coord};

use super::point::ProjectedPoint;
use crate::error::{Error, Result};
use crate::graph::AdjacencyMatrix;

/// Super-triangle vertices sit this many bounding-box extents away.
const SUPER_SCALE: f64 = 1e10;

#[derive(Debug, Clone)]
pub struct Triangulation {
    /// Counter-clockwise triangles over input indices only.
    pub triangles: Vec<[usize; 3]>,
    /// Every edge `(i, j)` with `i < j`, together with the vertices opposite it.
    /// Super-triangle vertices appear as `None`.
    pub edges: BTreeMap<(usize, usize), Vec<Option<usize>>>,
}

fn coord(p: &ProjectedPoint) -> Coord<f64> {
    Coord { x: p.x_km, y: p.y_km }
}

fn check_input(points: &[ProjectedPoint]) -> Result<()> {
    if points.len() < 3 {
        return Err(Error::Geometry(format!("need at least 3 sites, got {}", points.len())));
    }
    if points.iter().any(|p| !p.x_km.is_finite() || !p.y_km.is_finite()) {
        return Err(Error::Geometry("non-finite site coordinates".into()));
    }
    let mut keys: Vec<(u64, u64)> = points.iter().map(|p| (p.x_km.to_bits(), p.y_km.to_bits())).collect();
    keys.sort_unstable();
    if keys.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Geometry("duplicate sites".into()));
    }
    let a = coord(&points[0]);
    let b = coord(&points[1]);
    if points[2..].iter().all(|p| orient2d(a, b, coord(p)) == 0.0) {
        return Err(Error::Geometry("all sites are collinear".into()));
    }
    Ok(())
}

pub fn triangulate(points: &[ProjectedPoint]) -> Result<Triangulation> {
    check_input(points)?;
    let n = points.len();
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in points {
        xmin = xmin.min(p.x_km);
        xmax = xmax.max(p.x_km);
        ymin = ymin.min(p.y_km);
        ymax = ymax.max(p.y_km);
    }
    let extent = (xmax - xmin).max(ymax - ymin).max(1e-12);
    let (cx, cy) = (0.5 * (xmin + xmax), 0.5 * (ymin + ymax));
    let big = SUPER_SCALE * extent;
    let mut verts: Vec<Coord<f64>> = points.iter().map(coord).collect();
    verts.push(Coord { x: cx - 2.0 * big, y: cy - big });
    verts.push(Coord { x: cx + 2.0 * big, y: cy - big });
    verts.push(Coord { x: cx, y: cy + 2.0 * big });

    let mut tris: Vec<[usize; 3]> = vec![[n, n + 1, n + 2]];
    for p in 0..n {
        let pc = verts[p];
        let mut boundary: BTreeMap<(usize, usize), (usize, usize, usize)> = BTreeMap::new();
        let mut keep = Vec::with_capacity(tris.len() + 2);
        for t in tris.drain(..) {
            let [a, b, c] = t;
            if incircle(verts[a], verts[b], verts[c], pc) > 0.0 {
                for (u, v) in [(a, b), (b, c), (c, a)] {
                    let key = (u.min(v), u.max(v));
                    if boundary.remove(&key).is_none() {
                        boundary.insert(key, (u, v, 0));
                    }
                }
            } else {
                keep.push(t);
            }
        }
        if boundary.is_empty() {
            return Err(Error::Geometry(format!("site {p} fell outside the triangulation")));
        }
        for (u, v, _) in boundary.into_values() {
            // cavity boundary edges keep the orientation of their removed triangle
            keep.push([u, v, p]);
        }
        tris = keep;
    }

    let mut edges: BTreeMap<(usize, usize), Vec<Option<usize>>> = BTreeMap::new();
    let mut triangles = Vec::new();
    for &[a, b, c] in &tris {
        for (u, v, w) in [(a, b, c), (b, c, a), (c, a, b)] {
            if u < n && v < n {
                edges
                    .entry((u.min(v), u.max(v)))
                    .or_default()
                    .push((w < n).then_some(w));
            }
        }
        if a < n && b < n && c < n {
            triangles.push([a, b, c]);
        }
    }
    Ok(Triangulation { triangles, edges })
}

/// First-order Voronoi neighbors: Delaunay edges whose dual Voronoi edge has
/// positive length. Interior edges between two cocircular triangles have a
/// degenerate (point) dual and are dropped.
pub fn voronoi_adjacency(points: &[ProjectedPoint]) -> Result<AdjacencyMatrix> {
    let tri = triangulate(points)?;
    let n = points.len();
    let mut adj = AdjacencyMatrix::empty(n);
    for (&(i, j), opposite) in &tri.edges {
        let degenerate = match opposite.as_slice() {
            [Some(w1), Some(w2)] => {
                let (a, b, c) = (coord(&points[i]), coord(&points[j]), coord(&points[*w1]));
                let (a, b) = if orient2d(a, b, c) > 0.0 { (a, b) } else { (b, a) };
                incircle(a, b, c, coord(&points[*w2])) == 0.0
            }
            _ => false,
        };
        if !degenerate {
            adj.connect(i, j);
        }
    }
    Ok(adj)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> Vec<ProjectedPoint> {
        v.iter().map(|&(x, y)| ProjectedPoint::new(x, y)).collect()
    }

    #[test]
    fn triangle_is_complete_graph() {
        let adj = voronoi_adjacency(&pts(&[(0.0, 0.0), (1.0, 0.0), (0.3, 0.8)])).unwrap();
        assert_eq!(adj.edge_list(), vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn unit_square_drops_point_contact_diagonal() {
        let sq = pts(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        let tri = triangulate(&sq).unwrap();
        assert_eq!(tri.triangles.len(), 2);
        // the triangulation itself contains exactly one diagonal
        let diagonals = [(0, 3), (1, 2)].iter().filter(|e| tri.edges.contains_key(e)).count();
        assert_eq!(diagonals, 1);
        let adj = voronoi_adjacency(&sq).unwrap();
        assert_eq!(adj.edge_list(), vec![(0, 1), (0, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(matches!(
            voronoi_adjacency(&pts(&[(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (3.0, 3.0)])),
            Err(Error::Geometry(_))
        ));
        assert!(voronoi_adjacency(&pts(&[(0.0, 0.0), (1.0, 1.0)])).is_err());
        assert!(voronoi_adjacency(&pts(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 0.0)])).is_err());
    }

    #[test]
    fn triangles_are_counter_clockwise_and_empty() {
        let p = pts(&[(0.0, 0.0), (4.0, 0.5), (1.5, 3.0), (2.2, 1.1), (3.7, 2.9), (0.4, 2.0), (2.9, -1.0)]);
        let tri = triangulate(&p).unwrap();
        for &[a, b, c] in &tri.triangles {
            assert!(orient2d(coord(&p[a]), coord(&p[b]), coord(&p[c])) > 0.0);
            for (k, q) in p.iter().enumerate() {
                if k != a && k != b && k != c {
                    assert!(incircle(coord(&p[a]), coord(&p[b]), coord(&p[c]), coord(q)) <= 0.0);
                }
            }
        }
    }
}
