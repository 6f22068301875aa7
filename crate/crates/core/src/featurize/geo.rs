//! Mobility summaries over a subscriber's tower set.

use crate::aggregate::LocationSet;
use crate::cdr::PointOfInterest;

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Great-circle distance by the haversine formula.
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GeoSummary {
    pub tower_count: Option<f64>,
    pub max_pairwise_km: Option<f64>,
    /// Event-weighted radius of gyration around the event-weighted centroid.
    pub radius_km: Option<f64>,
    /// Distance from the centroid to each point of interest.
    pub poi_km: Vec<Option<f64>>,
    /// Number of location clusters used on enough distinct days.
    pub important_places: Option<f64>,
}

/// Clustering and importance thresholds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaceRule {
    pub cluster_km: f64,
    /// Minimum share of observed days a cluster must be used on.
    pub min_day_share: f64,
    pub min_days: u32,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Single-linkage clusters: points within `cluster_km` of each other share
/// a cluster, transitively. Returns a cluster label per point.
pub fn single_linkage(points: &[(f64, f64)], cluster_km: f64) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..points.len()).collect();
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            if haversine_km(points[i].0, points[i].1, points[j].0, points[j].1) <= cluster_km {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    (0..points.len()).map(|i| find(&mut parent, i)).collect()
}

pub fn geo_summary(set: &LocationSet, pois: &[PointOfInterest], rule: PlaceRule) -> GeoSummary {
    let pts = &set.points;
    if pts.is_empty() {
        return GeoSummary {
            poi_km: vec![None; pois.len()],
            ..GeoSummary::default()
        };
    }
    let mut max_pair: f64 = 0.0;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            max_pair = max_pair.max(haversine_km(a.lat, a.lon, b.lat, b.lon));
        }
    }

    let total: f64 = pts.iter().map(|p| p.events as f64).sum();
    let c_lat = pts.iter().map(|p| p.lat * p.events as f64).sum::<f64>() / total;
    let c_lon = pts.iter().map(|p| p.lon * p.events as f64).sum::<f64>() / total;
    let msd = pts
        .iter()
        .map(|p| p.events as f64 * haversine_km(p.lat, p.lon, c_lat, c_lon).powi(2))
        .sum::<f64>()
        / total;

    let coords: Vec<(f64, f64)> = pts.iter().map(|p| (p.lat, p.lon)).collect();
    let labels = single_linkage(&coords, rule.cluster_km);
    let mut cluster_days: std::collections::BTreeMap<usize, std::collections::BTreeSet<i64>> = Default::default();
    for (p, l) in pts.iter().zip(&labels) {
        cluster_days.entry(*l).or_default().extend(p.days.iter().copied());
    }
    let needed = (rule.min_day_share * set.observed_days as f64)
        .ceil()
        .max(rule.min_days as f64);
    let important = cluster_days.values().filter(|d| d.len() as f64 >= needed).count();

    GeoSummary {
        tower_count: Some(pts.len() as f64),
        max_pairwise_km: Some(max_pair),
        radius_km: Some(msd.sqrt()),
        poi_km: pois
            .iter()
            .map(|p| Some(haversine_km(c_lat, c_lon, p.lat, p.lon)))
            .collect(),
        important_places: Some(important as f64),
    }
}
