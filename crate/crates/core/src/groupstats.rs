//! Shot-group geometry.
//!
//! A group is the set of valid impacts fired at one experimental level. All
//! metrics are measured from the group center (the componentwise mean), in
//! whatever length unit the coordinates were recorded in.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroupError {
    #[error("empty group")]
    Empty,
    #[error("non-finite coordinate at shot {index}")]
    NonFinite { index: usize },
}

/// A point of impact in target-local coordinates (bulls-eye at the origin).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpactPoint {
    pub x: f64,
    pub y: f64,
}

impl ImpactPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &ImpactPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Distance from the target origin.
    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Summary metrics of one shot group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub center: ImpactPoint,
    pub n: usize,
    pub mean_radius: f64,
    pub extreme_spread: f64,
    pub radii: Vec<f64>,
    /// Set for single-shot groups, whose metrics are trivially zero.
    pub single_shot: bool,
}

fn check(points: &[ImpactPoint]) -> Result<(), GroupError> {
    if points.is_empty() {
        return Err(GroupError::Empty);
    }
    match points
        .iter()
        .position(|p| !p.x.is_finite() || !p.y.is_finite())
    {
        Some(index) => Err(GroupError::NonFinite { index }),
        None => Ok(()),
    }
}

/// Two-pass mean: the correction term recovers most of the rounding lost in
/// the first sum when coordinates sit far from the origin.
fn mean(values: impl Iterator<Item = f64> + Clone, n: usize) -> f64 {
    let n = n as f64;
    let first = values.clone().sum::<f64>() / n;
    let correction = values.map(|v| v - first).sum::<f64>() / n;
    first + correction
}

pub fn group_center(points: &[ImpactPoint]) -> Result<ImpactPoint, GroupError> {
    check(points)?;
    Ok(ImpactPoint {
        x: mean(points.iter().map(|p| p.x), points.len()),
        y: mean(points.iter().map(|p| p.y), points.len()),
    })
}

/// Per-shot distances to the group center, in input order.
pub fn radial_deviations(points: &[ImpactPoint]) -> Result<Vec<f64>, GroupError> {
    let center = group_center(points)?;
    Ok(points.iter().map(|p| p.distance(&center)).collect())
}

/// Average distance from each shot to the group center.
pub fn mean_radius(points: &[ImpactPoint]) -> Result<f64, GroupError> {
    let radii = radial_deviations(points)?;
    Ok(radii.iter().sum::<f64>() / radii.len() as f64)
}

/// Largest distance between any two shots of the group.
pub fn extreme_spread(points: &[ImpactPoint]) -> Result<f64, GroupError> {
    check(points)?;
    let mut best = 0.0_f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max(a.distance(b));
        }
    }
    Ok(best)
}

pub fn summarize(points: &[ImpactPoint]) -> Result<GroupSummary, GroupError> {
    let center = group_center(points)?;
    let radii: Vec<f64> = points.iter().map(|p| p.distance(&center)).collect();
    let mean_radius = radii.iter().sum::<f64>() / radii.len() as f64;
    Ok(GroupSummary {
        center,
        n: points.len(),
        mean_radius,
        extreme_spread: extreme_spread(points)?,
        radii,
        single_shot: points.len() == 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(raw: &[(f64, f64)]) -> Vec<ImpactPoint> {
        raw.iter().map(|&(x, y)| ImpactPoint::new(x, y)).collect()
    }

    #[test]
    fn center_of_single_point_and_pair() {
        assert_eq!(
            group_center(&pts(&[(3.0, 4.0)])).unwrap(),
            ImpactPoint::new(3.0, 4.0)
        );
        assert_eq!(
            group_center(&pts(&[(0.0, 0.0), (2.0, 0.0)])).unwrap(),
            ImpactPoint::new(1.0, 0.0)
        );
    }

    #[test]
    fn center_of_five_points_matches_hand_sum() {
        let p = pts(&[
            (1.5, -2.0),
            (3.25, 0.5),
            (-0.75, 4.0),
            (2.0, 2.0),
            (0.5, -1.5),
        ]);
        // x: 1.5 + 3.25 - 0.75 + 2.0 + 0.5 = 6.5 ; y: -2 + 0.5 + 4 + 2 - 1.5 = 3.0
        let c = group_center(&p).unwrap();
        assert!((c.x - 6.5 / 5.0).abs() < 1e-15);
        assert!((c.y - 3.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn mean_radius_cases() {
        assert_eq!(mean_radius(&pts(&[(5.0, 5.0)])).unwrap(), 0.0);
        assert_eq!(mean_radius(&pts(&[(0.0, 0.0), (2.0, 0.0)])).unwrap(), 1.0);
        let square = pts(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]);
        let mr = mean_radius(&square).unwrap();
        assert!((mr - 2f64.sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn extreme_spread_cases() {
        assert_eq!(extreme_spread(&pts(&[(0.0, 0.0)])).unwrap(), 0.0);
        assert_eq!(
            extreme_spread(&pts(&[(0.0, 0.0), (3.0, 4.0)])).unwrap(),
            5.0
        );
    }

    #[test]
    fn radial_deviation_cases() {
        assert_eq!(
            radial_deviations(&pts(&[(0.0, 0.0), (2.0, 0.0)])).unwrap(),
            vec![1.0, 1.0]
        );
        assert_eq!(radial_deviations(&pts(&[(5.0, 5.0)])).unwrap(), vec![0.0]);
    }

    #[test]
    fn empty_group_is_rejected() {
        assert_eq!(group_center(&[]), Err(GroupError::Empty));
        assert_eq!(mean_radius(&[]), Err(GroupError::Empty));
        assert_eq!(extreme_spread(&[]), Err(GroupError::Empty));
        assert_eq!(radial_deviations(&[]), Err(GroupError::Empty));
        assert_eq!(GroupError::Empty.to_string(), "empty group");
    }

    #[test]
    fn non_finite_is_rejected() {
        let p = pts(&[(0.0, 0.0), (f64::NAN, 1.0)]);
        assert_eq!(group_center(&p), Err(GroupError::NonFinite { index: 1 }));
    }

    #[test]
    fn single_shot_summary_is_flagged() {
        let s = summarize(&pts(&[(1.0, 2.0)])).unwrap();
        assert!(s.single_shot);
        assert_eq!(s.mean_radius, 0.0);
        assert_eq!(s.extreme_spread, 0.0);
        assert_eq!(s.radii, vec![0.0]);
    }
}
