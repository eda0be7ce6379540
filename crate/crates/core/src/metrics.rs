//! Pose-error metrics: ADD, rotation/translation error and success curves.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, RigidTransform, ROTATION_TOLERANCE};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    pub rotation_deg: f64,
    pub translation_mm: f64,
    pub add_mm: f64,
}

impl PoseError {
    pub fn between(
        model_points: &PointCloud,
        estimated: &RigidTransform,
        ground_truth: &RigidTransform,
    ) -> Result<Self> {
        Ok(Self {
            rotation_deg: rotation_error_deg(&estimated.rotation, &ground_truth.rotation)?,
            translation_mm: translation_error_mm(&estimated.translation, &ground_truth.translation),
            add_mm: add_metric(model_points, estimated, ground_truth)?,
        })
    }
}

/// Mean distance between the model points under the two poses, mm.
pub fn add_metric(
    model_points: &PointCloud,
    estimated: &RigidTransform,
    ground_truth: &RigidTransform,
) -> Result<f64> {
    if model_points.is_empty() {
        return Err(Error::Empty("model points for ADD"));
    }
    let sum: f64 = model_points
        .points
        .iter()
        .map(|p| (estimated.apply(p) - ground_truth.apply(p)).norm())
        .sum();
    Ok(sum / model_points.len() as f64)
}

/// Geodesic angle between two rotations in degrees.
///
/// `θ = arccos((tr(aᵀb) − 1) / 2)`, which is tied to the Frobenius distance by
/// `‖a − b‖_F = 2√2 · sin(θ/2)`.
pub fn rotation_error_deg(a: &Matrix3<f64>, b: &Matrix3<f64>) -> Result<f64> {
    for (name, m) in [("first", a), ("second", b)] {
        let t = RigidTransform {
            rotation: *m,
            translation: Vector3::zeros(),
        };
        if t.orthonormality_error() > ROTATION_TOLERANCE {
            return Err(Error::InvalidInput(format!("{name} rotation is not orthonormal")));
        }
    }
    let cos = (((a.transpose() * b).trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    Ok(cos.acos().to_degrees())
}

pub fn translation_error_mm(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (a - b).norm()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCurve {
    /// Ascending, mm.
    pub thresholds: Vec<f64>,
    /// Fraction of errors strictly below each threshold.
    pub success_rates: Vec<f64>,
}

pub fn success_curve(errors: &[f64], thresholds: &[f64]) -> Result<ThresholdCurve> {
    if errors.is_empty() {
        return Err(Error::Empty("error list for success curve"));
    }
    if thresholds.iter().any(|&t| !(t > 0.0)) || thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("thresholds must be positive and ascending".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let success_rates = thresholds
        .iter()
        .map(|&t| sorted.partition_point(|&e| e < t) as f64 / n)
        .collect();
    Ok(ThresholdCurve {
        thresholds: thresholds.to_vec(),
        success_rates,
    })
}

impl ThresholdCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold_mm,success_rate\n");
        for (t, r) in self.thresholds.iter().zip(&self.success_rates) {
            s.push_str(&format!("{t},{r}\n"));
        }
        s
    }

    pub fn rate_at(&self, threshold: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .position(|&t| t == threshold)
            .map(|i| self.success_rates[i])
    }
}
