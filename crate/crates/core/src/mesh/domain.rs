use crate::error::{Error, Result};

use super::Point;

/// A simple polygon, stored counter-clockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonDomain {
    boundary: Vec<Point>,
}

impl PolygonDomain {
    /// Builds a domain from a closed polyline (the closing segment is implicit).
    ///
    /// Clockwise input is reversed. Fails on fewer than three vertices, repeated
    /// vertices, zero area or self-intersections.
    pub fn new(mut boundary: Vec<Point>) -> Result<Self> {
        if boundary.len() > 3 && boundary.first() == boundary.last() {
            boundary.pop();
        }
        let n = boundary.len();
        if n < 3 {
            return Err(Error::InvalidDomain(format!("{n} boundary vertices")));
        }
        if boundary.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("domain boundary"));
        }
        for i in 0..n {
            for j in i + 1..n {
                if boundary[i] == boundary[j] {
                    return Err(Error::InvalidDomain(format!("vertices {i} and {j} coincide")));
                }
            }
        }
        let area = signed_polygon_area(&boundary);
        if area == 0.0 {
            return Err(Error::InvalidDomain("zero area".into()));
        }
        if area < 0.0 {
            boundary.reverse();
        }
        for i in 0..n {
            for j in i + 1..n {
                // adjacent segments share an endpoint by construction
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (a, b) = (boundary[i], boundary[(i + 1) % n]);
                let (c, d) = (boundary[j], boundary[(j + 1) % n]);
                if segments_intersect(a, b, c, d) {
                    return Err(Error::InvalidDomain(format!("segments {i} and {j} intersect")));
                }
            }
        }
        Ok(Self { boundary })
    }

    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self> {
        Self::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    pub fn unit_square() -> Self {
        Self::rectangle(0.0, 0.0, 1.0, 1.0).expect("unit square is valid")
    }

    /// The square `[-1, 1]²` used by the benchmark problems.
    pub fn reference_square() -> Self {
        Self::rectangle(-1.0, -1.0, 1.0, 1.0).expect("reference square is valid")
    }

    pub fn vertices(&self) -> &[Point] {
        &self.boundary
    }

    pub fn segments(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.boundary.len();
        (0..n).map(move |i| (self.boundary[i], self.boundary[(i + 1) % n]))
    }

    pub fn area(&self) -> f64 {
        signed_polygon_area(&self.boundary)
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, p) in self.boundary.iter().enumerate() {
            for q in &self.boundary[i + 1..] {
                d = d.max(dist(*p, *q));
            }
        }
        d
    }

    /// Exact distance from `x` to the boundary polyline.
    pub fn boundary_distance(&self, x: Point) -> f64 {
        self.segments()
            .map(|(a, b)| point_segment_distance(x, a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Even-odd point-in-polygon test; boundary points count as inside.
    pub fn contains(&self, x: Point) -> bool {
        if self.boundary_distance(x) == 0.0 {
            return true;
        }
        let mut inside = false;
        for (a, b) in self.segments() {
            if (a[1] > x[1]) != (b[1] > x[1]) {
                let xi = a[0] + (x[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if x[0] < xi {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Ear-clipping triangulation of the polygon using only its own vertices.
    /// Triangles are counter-clockwise and index into [`Self::vertices`].
    pub fn triangulate(&self) -> Vec<[usize; 3]> {
        let pts = &self.boundary;
        let mut remaining: Vec<usize> = (0..pts.len()).collect();
        let mut tris = Vec::with_capacity(pts.len() - 2);
        while remaining.len() > 3 {
            let m = remaining.len();
            let ear = (0..m).find(|&i| {
                let (a, b, c) = (remaining[(i + m - 1) % m], remaining[i], remaining[(i + 1) % m]);
                if orient(pts[a], pts[b], pts[c]) <= 0.0 {
                    return false;
                }
                remaining
                    .iter()
                    .filter(|&&v| v != a && v != b && v != c)
                    .all(|&v| !point_in_triangle(pts[v], pts[a], pts[b], pts[c]))
            });
            // a simple polygon always has an ear; fall back to the first
            // vertex only to guarantee progress under round-off
            let i = ear.unwrap_or(0);
            tris.push([remaining[(i + m - 1) % m], remaining[i], remaining[(i + 1) % m]]);
            remaining.remove(i);
        }
        tris.push([remaining[0], remaining[1], remaining[2]]);
        tris
    }
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Twice the signed area of `abc`; positive when counter-clockwise.
pub(crate) fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn signed_polygon_area(p: &[Point]) -> f64 {
    let n = p.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (p[i], p[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
}

pub(crate) fn point_segment_distance(x: Point, a: Point, b: Point) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ax = [x[0] - a[0], x[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ax[0] * ab[0] + ax[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    if t == 0.0 {
        return dist(x, a);
    }
    if t == 1.0 {
        return dist(x, b);
    }
    // |ab × ax| / |ab| is exactly zero for points on the segment
    (ab[0] * ax[1] - ab[1] * ax[0]).abs() / len2.sqrt()
}

fn point_in_triangle(p: Point, a: Point, b: Point, c: Point) -> bool {
    orient(a, b, p) >= 0.0 && orient(b, c, p) >= 0.0 && orient(c, a, p) >= 0.0
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |p: Point, q: Point, r: Point| {
        r[0] >= p[0].min(q[0]) && r[0] <= p[0].max(q[0]) && r[1] >= p[1].min(q[1]) && r[1] <= p[1].max(q[1])
    };
    (d1 == 0.0 && on(c, d, a)) || (d2 == 0.0 && on(c, d, b)) || (d3 == 0.0 && on(a, b, c)) || (d4 == 0.0 && on(a, b, d))
}
