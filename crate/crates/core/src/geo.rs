//! Great-circle distances and the customer anchor policy.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{CustomerProfile, GeoPoint, MerchantProfile, VisitMatrix};
use crate::{Error, Id, Result};

/// Mean Earth radius (IUGG), km.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

pub fn haversine_km(a: &GeoPoint, b: &GeoPoint) -> f64 {
    let (lat1, lat2) = (a.latitude().to_radians(), b.latitude().to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.longitude() - a.longitude()).to_radians();
    let s_lat = libm::sin(dlat / 2.0);
    let s_lon = libm::sin(dlon / 2.0);
    let h = s_lat * s_lat + libm::cos(lat1) * libm::cos(lat2) * s_lon * s_lon;
    2.0 * EARTH_RADIUS_KM * libm::asin(libm::sqrt(h.min(1.0)))
}

/// Which customer location a distance is measured from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Anchor {
    HomeOnly,
    WorkOnly,
    /// The closer of home and work.
    #[default]
    MinHomeWork,
}

impl core::str::FromStr for Anchor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "home" | "home_only" => Ok(Anchor::HomeOnly),
            "work" | "work_only" => Ok(Anchor::WorkOnly),
            "min" | "min_home_work" => Ok(Anchor::MinHomeWork),
            other => Err(Error::InvalidInput(format!("unknown anchor '{other}' (expected home, work or min)"))),
        }
    }
}

impl core::fmt::Display for Anchor {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Anchor::HomeOnly => "home",
            Anchor::WorkOnly => "work",
            Anchor::MinHomeWork => "min",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistancePolicy {
    anchor: Anchor,
    floor_km: f64,
}

impl DistancePolicy {
    pub const DEFAULT_FLOOR_KM: f64 = 0.05;

    pub fn new(anchor: Anchor, floor_km: f64) -> Result<Self> {
        if !(floor_km.is_finite() && floor_km > 0.0) {
            return Err(Error::InvalidInput(format!("floor_km must be positive, got {floor_km}")));
        }
        Ok(Self { anchor, floor_km })
    }

    pub fn anchor(&self) -> Anchor {
        self.anchor
    }

    pub fn floor_km(&self) -> f64 {
        self.floor_km
    }
}

impl Default for DistancePolicy {
    fn default() -> Self {
        Self { anchor: Anchor::MinHomeWork, floor_km: Self::DEFAULT_FLOOR_KM }
    }
}

/// Distance from a customer to a merchant under `policy`, never below the floor.
/// A missing work location falls back to home.
pub fn customer_merchant_distance(
    customer: &CustomerProfile,
    merchant: &MerchantProfile,
    policy: &DistancePolicy,
) -> f64 {
    let from_home = || haversine_km(&customer.home, &merchant.location);
    let d = match (policy.anchor, customer.work.as_ref()) {
        (Anchor::HomeOnly, _) | (_, None) => from_home(),
        (Anchor::WorkOnly, Some(w)) => haversine_km(w, &merchant.location),
        (Anchor::MinHomeWork, Some(w)) => from_home().min(haversine_km(w, &merchant.location)),
    };
    d.max(policy.floor_km)
}

/// Row-major customers × merchants distance matrix.
pub fn distance_matrix(
    customers: &[&CustomerProfile],
    merchants: &[MerchantProfile],
    policy: &DistancePolicy,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(customers.len() * merchants.len());
    for c in customers {
        out.extend(merchants.iter().map(|m| customer_merchant_distance(c, m, policy)));
    }
    out
}

/// Visit-weighted distance histogram for one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceHistogram {
    pub district_id: Id,
    pub category_id: Id,
    /// `counts.len() + 1` strictly increasing edges starting at 0.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub mean_km: f64,
}

impl DistanceHistogram {
    pub fn total_weight(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Bins every visit of the cell by its customer–merchant distance.
pub fn distance_distribution(
    district_id: Id,
    category_id: Id,
    distances: &[f64],
    visits: &VisitMatrix,
    bin_width_km: f64,
) -> Result<DistanceHistogram> {
    if !(bin_width_km.is_finite() && bin_width_km > 0.0) {
        return Err(Error::InvalidInput(format!("bin width must be positive, got {bin_width_km}")));
    }
    let n_m = visits.n_merchants();
    if distances.len() != visits.n_customers() * n_m {
        return Err(Error::InvalidInput("distance matrix does not match visit matrix".into()));
    }
    let mut weighted = 0.0;
    let mut total = 0u64;
    let mut max_d: f64 = 0.0;
    for (k, &d) in distances.iter().enumerate() {
        let v = visits.get(k / n_m.max(1), k % n_m.max(1));
        if v > 0 {
            weighted += d * f64::from(v);
            total += u64::from(v);
            max_d = max_d.max(d);
        }
    }
    let n_bins = (max_d / bin_width_km) as usize + 1;
    let mut counts = vec![0u64; n_bins];
    for (k, &d) in distances.iter().enumerate() {
        let v = visits.get(k / n_m, k % n_m);
        if v > 0 {
            let b = ((d / bin_width_km) as usize).min(n_bins - 1);
            counts[b] += u64::from(v);
        }
    }
    let bin_edges = (0..=n_bins).map(|b| b as f64 * bin_width_km).collect();
    let mean_km = if total > 0 { weighted / total as f64 } else { 0.0 };
    Ok(DistanceHistogram { district_id, category_id, bin_edges, counts, mean_km })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Money;

    fn p(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint::new(lat, lon).unwrap()
    }

    fn customer(home: GeoPoint, work: Option<GeoPoint>) -> CustomerProfile {
        CustomerProfile {
            customer_id: "c".into(),
            age: Some(30),
            gender: None,
            marital_status: None,
            education_level: None,
            work_status: None,
            income: Money::ZERO,
            home,
            work,
        }
    }

    fn merchant(at: GeoPoint) -> MerchantProfile {
        MerchantProfile {
            merchant_id: "m".into(),
            category_id: "5411".into(),
            district_id: "d".into(),
            location: at,
            revenue: Money::ZERO,
        }
    }

    #[test]
    fn identical_points() {
        assert_eq!(haversine_km(&p(41.0, 29.0), &p(41.0, 29.0)), 0.0);
    }

    #[test]
    fn antipodal_on_equator() {
        let d = haversine_km(&p(0.0, 0.0), &p(0.0, 180.0));
        assert!((d - 20015.1).abs() <= 0.5, "{d}");
        assert!((d - core::f64::consts::PI * EARTH_RADIUS_KM).abs() < 1e-9);
    }

    #[test]
    fn matches_spherical_law_of_cosines() {
        let (a, b) = (p(41.015, 28.979), p(40.99, 29.12));
        let (l1, l2) = (a.latitude().to_radians(), b.latitude().to_radians());
        let dl = (b.longitude() - a.longitude()).to_radians();
        let cos_c = libm::sin(l1) * libm::sin(l2) + libm::cos(l1) * libm::cos(l2) * libm::cos(dl);
        let oracle = EARTH_RADIUS_KM * libm::acos(cos_c);
        let d = haversine_km(&a, &b);
        assert!(((d - oracle) / oracle).abs() < 1e-3);
    }

    #[test]
    fn anchor_min_takes_closer_location() {
        // One degree of latitude is ~111.2 km; use small offsets along a meridian.
        let m = merchant(p(0.0, 0.0));
        let km = |deg: f64| deg.to_radians() * EARTH_RADIUS_KM;
        let home = p(2.0 / km(1.0), 0.0);
        let work = p(5.0 / km(1.0), 0.0);
        let c = customer(home, Some(work));
        let d = customer_merchant_distance(&c, &m, &DistancePolicy::default());
        assert!((d - 2.0).abs() < 1e-9, "{d}");
        let w = customer_merchant_distance(&c, &m, &DistancePolicy::new(Anchor::WorkOnly, 0.05).unwrap());
        assert!((w - 5.0).abs() < 1e-9);
        let no_work = customer(home, None);
        let fallback = customer_merchant_distance(&no_work, &m, &DistancePolicy::new(Anchor::WorkOnly, 0.05).unwrap());
        assert!((fallback - 2.0).abs() < 1e-9);
    }

    #[test]
    fn colocated_is_clamped_to_floor() {
        let c = customer(p(41.0, 29.0), None);
        let d = customer_merchant_distance(&c, &merchant(p(41.0, 29.0)), &DistancePolicy::default());
        assert_eq!(d, 0.05);
    }

    #[test]
    fn policy_rejects_non_positive_floor() {
        assert!(DistancePolicy::new(Anchor::HomeOnly, 0.0).is_err());
        assert!("sideways".parse::<Anchor>().is_err());
        assert_eq!("min".parse::<Anchor>().unwrap(), Anchor::MinHomeWork);
    }

    #[test]
    fn histogram_single_pair() {
        let v = VisitMatrix::from_rows(1, 1, vec![4]).unwrap();
        let h = distance_distribution("d".into(), "c".into(), &[3.0], &v, 1.0).unwrap();
        assert_eq!(h.total_weight(), 4);
        assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
        assert_eq!(h.counts[3], 4);
        assert_eq!(h.mean_km, 3.0);
        assert!(distance_distribution("d".into(), "c".into(), &[3.0], &v, 0.0).is_err());
    }
}
