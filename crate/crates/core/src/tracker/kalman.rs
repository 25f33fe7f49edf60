//! Constant-velocity Kalman filter over (cx, cy, w, h, vx, vy).
//!
//! Time is continuous (seconds); sizes carry no velocity.

use nalgebra::{SMatrix, SVector};

use crate::model::BoundingBox;

pub type StateVec = SVector<f64, 6>;
pub type StateCov = SMatrix<f64, 6, 6>;
type MeasVec = SVector<f64, 4>;
type MeasCov = SMatrix<f64, 4, 4>;
type Gain = SMatrix<f64, 6, 4>;

const MIN_SIZE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Position/size diffusion, px² per second.
    pub process_pos: f64,
    /// Velocity diffusion, (px/s)² per second.
    pub process_vel: f64,
    /// Measurement standard deviation, px.
    pub measurement_std: f64,
    /// Initial velocity standard deviation, px/s.
    pub initial_velocity_std: f64,
}

pub fn measurement(b: &BoundingBox) -> MeasVec {
    let c = b.centroid();
    MeasVec::new(c.x, c.y, b.width(), b.height())
}

pub fn initiate(b: &BoundingBox, noise: &NoiseModel) -> (StateVec, StateCov) {
    let z = measurement(b);
    let mean = StateVec::from_column_slice(&[z[0], z[1], z[2], z[3], 0.0, 0.0]);
    let r2 = noise.measurement_std.powi(2);
    let v2 = noise.initial_velocity_std.powi(2);
    let cov = StateCov::from_diagonal(&StateVec::from_column_slice(&[r2, r2, r2, r2, v2, v2]));
    (mean, cov)
}

pub fn predict(mean: &StateVec, cov: &StateCov, dt: f64, noise: &NoiseModel) -> (StateVec, StateCov) {
    if dt == 0.0 {
        return (*mean, *cov);
    }
    let mut f = StateCov::identity();
    f[(0, 4)] = dt;
    f[(1, 5)] = dt;
    let qp = noise.process_pos * dt;
    let qv = noise.process_vel * dt;
    let q = StateCov::from_diagonal(&StateVec::from_column_slice(&[qp, qp, qp, qp, qv, qv]));
    let mean = f * mean;
    let cov = symmetrize(f * cov * f.transpose() + q);
    (mean, cov)
}

pub fn update(
    mean: &StateVec,
    cov: &StateCov,
    b: &BoundingBox,
    noise: &NoiseModel,
) -> (StateVec, StateCov) {
    let z = measurement(b);
    let h = SMatrix::<f64, 4, 6>::identity();
    let r = MeasCov::identity() * noise.measurement_std.powi(2);
    let s = h * cov * h.transpose() + r;
    let s_inv = s
        .try_inverse()
        .expect("innovation covariance is positive definite");
    let k: Gain = cov * h.transpose() * s_inv;
    let mut new_mean = mean + k * (z - h * mean);
    new_mean[2] = new_mean[2].max(MIN_SIZE);
    new_mean[3] = new_mean[3].max(MIN_SIZE);
    // Joseph form keeps the covariance PSD
    let i_kh = StateCov::identity() - k * h;
    let new_cov = symmetrize(i_kh * cov * i_kh.transpose() + k * r * k.transpose());
    (new_mean, new_cov)
}

fn symmetrize(m: StateCov) -> StateCov {
    (m + m.transpose()) * 0.5
}

pub fn to_bbox(mean: &StateVec) -> BoundingBox {
    BoundingBox::from_center(
        mean[0],
        mean[1],
        mean[2].max(MIN_SIZE),
        mean[3].max(MIN_SIZE),
    )
    .expect("state box is finite with positive size")
}
