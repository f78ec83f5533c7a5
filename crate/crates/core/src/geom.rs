//! Planar polygon primitives shared by the rasterizer, the zone
//! assigner, and the synthetic city generator.
//!
//! Coordinates are projected meters. Containment uses the even-odd rule
//! with half-open edge handling: an edge contributes a crossing for a
//! query row `y` when `min(y1,y2) <= y < max(y1,y2)`, and only crossings
//! strictly to the right of the query point count. Together with
//! cell-center sampling this makes every point belong to exactly one
//! region even on shared boundaries.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

/// A closed ring: first vertex equals the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Ring(Vec<Point>);

impl Ring {
    /// Builds a ring, validating closure and minimum length.
    pub fn new(points: Vec<Point>) -> Result<Self, GeomError> {
        if points.len() < 4 {
            return Err(GeomError::Degenerate(points.len()));
        }
        let first = points[0];
        let last = points[points.len() - 1];
        if first != last {
            return Err(GeomError::Unclosed);
        }
        if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        Ok(Ring(points))
    }

    /// Convenience constructor that appends the closing vertex.
    pub fn closed(mut points: Vec<Point>) -> Result<Self, GeomError> {
        if let Some(&first) = points.first() {
            if points.last() != Some(&first) {
                points.push(first);
            }
        }
        Ring::new(points)
    }

    pub fn points(&self) -> &[Point] {
        &self.0
    }

    /// Edges as (start, end) pairs, excluding the closing duplicate.
    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        self.0.windows(2).map(|w| (w[0], w[1]))
    }
}

/// A polygon as a set of rings interpreted with the even-odd rule, so
/// holes are just additional rings.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub rings: Vec<Ring>,
}

impl Polygon {
    pub fn new(rings: Vec<Ring>) -> Result<Self, GeomError> {
        if rings.is_empty() {
            return Err(GeomError::Empty);
        }
        Ok(Polygon { rings })
    }

    /// Axis-aligned rectangle helper.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        let ring = Ring::new(vec![
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
            Point::new(x0, y0),
        ])
        .expect("rectangle ring is closed");
        Polygon { rings: vec![ring] }
    }

    /// Even-odd containment over all rings.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let mut inside = false;
        for ring in &self.rings {
            for (a, b) in ring.edges() {
                if crosses(a, b, x, y) {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// (min_x, min_y, max_x, max_y) over all rings.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for ring in &self.rings {
            for p in ring.points() {
                b.0 = b.0.min(p.x);
                b.1 = b.1.min(p.y);
                b.2 = b.2.max(p.x);
                b.3 = b.3.max(p.y);
            }
        }
        b
    }
}

/// Half-open upward/downward crossing test used by both the scanline
/// fill and point classification, so the two can never disagree on
/// boundary points.
fn crosses(a: Point, b: Point, x: f64, y: f64) -> bool {
    let spans = (a.y <= y && y < b.y) || (b.y <= y && y < a.y);
    if !spans {
        return false;
    }
    let xi = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
    xi > x
}

/// Containment in a multipolygon: inside any member polygon.
pub fn multi_contains(polygons: &[Polygon], x: f64, y: f64) -> bool {
    polygons.iter().any(|p| p.contains(x, y))
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GeomError {
    #[error("ring is not closed (first vertex != last vertex)")]
    Unclosed,
    #[error("degenerate ring with {0} vertices (need at least 4 including closure)")]
    Degenerate(usize),
    #[error("ring contains a non-finite coordinate")]
    NonFinite,
    #[error("polygon has no rings")]
    Empty,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rect_contains_center_not_outside() {
        let r = Polygon::rect(0.0, 0.0, 10.0, 10.0);
        assert!(r.contains(5.0, 5.0));
        assert!(!r.contains(15.0, 5.0));
        assert!(!r.contains(5.0, -0.1));
    }

    #[test]
    fn half_open_boundaries() {
        let r = Polygon::rect(0.0, 0.0, 10.0, 10.0);
        // left/bottom edges are inside, right/top are outside
        assert!(r.contains(0.0, 5.0));
        assert!(!r.contains(10.0, 5.0));
        assert!(r.contains(5.0, 0.0));
        assert!(!r.contains(5.0, 10.0));
    }

    #[test]
    fn hole_is_outside() {
        let outer = Ring::new(vec![
            Point::new(0.0, 0.0),
            Point::new(10.0, 0.0),
            Point::new(10.0, 10.0),
            Point::new(0.0, 10.0),
            Point::new(0.0, 0.0),
        ])
        .unwrap();
        let hole = Ring::new(vec![
            Point::new(4.0, 4.0),
            Point::new(6.0, 4.0),
            Point::new(6.0, 6.0),
            Point::new(4.0, 6.0),
            Point::new(4.0, 4.0),
        ])
        .unwrap();
        let p = Polygon::new(vec![outer, hole]).unwrap();
        assert!(p.contains(1.0, 1.0));
        assert!(!p.contains(5.0, 5.0));
        assert!(!p.contains(11.0, 5.0));
    }

    #[test]
    fn unclosed_ring_rejected() {
        let err = Ring::new(vec![
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ])
        .unwrap_err();
        assert_eq!(err, GeomError::Unclosed);
    }

    #[test]
    fn tiny_ring_rejected() {
        let err = Ring::new(vec![Point::new(0.0, 0.0), Point::new(0.0, 0.0)]).unwrap_err();
        assert!(matches!(err, GeomError::Degenerate(_)));
    }
}
