//! Points and polygon sets for area-of-interest filtering.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Self {
        GeoPoint { lon, lat }
    }
}

/// A set of simple polygons. Rings are implicitly closed; the stored
/// vertex list never repeats the first vertex at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct PolygonSet {
    pub rings: Vec<Vec<GeoPoint>>,
}

impl PolygonSet {
    /// Parse one ring per non-comment line as whitespace-separated
    /// `lon lat` pairs. `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rings = Vec::new();
        for (i, raw) in text.split('\n').enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = i + 1;
            let tokens: Vec<&str> = line.split_whitespace().collect();
            if tokens.len() % 2 != 0 {
                return Err(Error::parse(
                    lineno,
                    format!("odd number of coordinates ({})", tokens.len()),
                ));
            }
            let mut ring = Vec::with_capacity(tokens.len() / 2);
            for pair in tokens.chunks(2) {
                let lon: f64 = pair[0].parse().map_err(|_| {
                    Error::parse(lineno, format!("expected number, found `{}`", pair[0]))
                })?;
                let lat: f64 = pair[1].parse().map_err(|_| {
                    Error::parse(lineno, format!("expected number, found `{}`", pair[1]))
                })?;
                if !lon.is_finite() || !lat.is_finite() {
                    return Err(Error::parse(lineno, "coordinates must be finite"));
                }
                ring.push(GeoPoint::new(lon, lat));
            }
            if ring.len() > 1 && ring.first() == ring.last() {
                ring.pop();
            }
            let mut distinct = ring.clone();
            distinct.sort_by(|a, b| {
                a.lon
                    .partial_cmp(&b.lon)
                    .unwrap()
                    .then(a.lat.partial_cmp(&b.lat).unwrap())
            });
            distinct.dedup();
            if distinct.len() < 3 {
                return Err(Error::parse(
                    lineno,
                    format!("polygon needs at least 3 distinct vertices, found {}", distinct.len()),
                ));
            }
            rings.push(ring);
        }
        Ok(PolygonSet { rings })
    }

    /// True when the point lies inside any ring or exactly on any edge.
    pub fn contains(&self, p: GeoPoint) -> bool {
        self.rings.iter().any(|ring| ring_contains(ring, p))
    }

    pub fn is_empty(&self) -> bool {
        self.rings.is_empty()
    }
}

/// Even-odd ray cast with an exact on-edge pre-check; points on the
/// boundary count as inside.
fn ring_contains(ring: &[GeoPoint], p: GeoPoint) -> bool {
    let n = ring.len();
    for i in 0..n {
        if on_segment(ring[i], ring[(i + 1) % n], p) {
            return true;
        }
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a.lat > p.lat) != (b.lat > p.lat) {
            let x = a.lon + (p.lat - a.lat) / (b.lat - a.lat) * (b.lon - a.lon);
            if p.lon < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn on_segment(a: GeoPoint, b: GeoPoint, p: GeoPoint) -> bool {
    let cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon);
    if cross != 0.0 {
        return false;
    }
    p.lon >= a.lon.min(b.lon)
        && p.lon <= a.lon.max(b.lon)
        && p.lat >= a.lat.min(b.lat)
        && p.lat <= a.lat.max(b.lat)
}
