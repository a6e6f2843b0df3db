//! Velocity-augmented Kalman filter for per-track motion estimation.
//!
//! The state is the 6-vector `(x, y, w, h, vx, vy)`: box center, box size
//! and center velocity in pixels/frame. Width and height follow a random
//! walk; the center follows a constant-velocity model with dt fixed at one
//! frame. Noise magnitudes scale with the box height so large (near)
//! objects tolerate larger pixel errors than small (far) ones.

use nalgebra::{Cholesky, Matrix4, Matrix4x6, Matrix6, Vector4, Vector6};
use thiserror::Error;

use crate::types::{BoundingBox, Detection, Velocity};

#[derive(Debug, Error, PartialEq)]
pub enum KalmanError {
    /// Innovation covariance was not positive definite; the noise
    /// configuration is degenerate.
    #[error("innovation covariance is not positive definite")]
    NonInvertibleInnovation,
}

/// Noise scale factors, all multiplied by the current box height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub position_std_factor: f64,
    pub velocity_std_factor: f64,
    pub measurement_std_factor: f64,
}

impl NoiseConfig {
    pub fn new(position: f64, velocity: f64, measurement: f64) -> Self {
        assert!(
            position > 0.0 && velocity > 0.0 && measurement > 0.0,
            "noise factors must be positive"
        );
        Self {
            position_std_factor: position,
            velocity_std_factor: velocity,
            measurement_std_factor: measurement,
        }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::new(1.0 / 20.0, 1.0 / 160.0, 1.0 / 20.0)
    }
}

/// Gaussian belief over the 6-dimensional motion state.
#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub mean: Vector6<f64>,
    pub covariance: Matrix6<f64>,
}

impl KalmanState {
    /// Estimated center velocity `(vx, vy)`.
    pub fn velocity(&self) -> Velocity {
        Velocity::new(self.mean[4], self.mean[5])
    }

    /// State mean converted back to a top-left box.
    pub fn bbox(&self) -> BoundingBox {
        let (cx, cy, w, h) = (self.mean[0], self.mean[1], self.mean[2], self.mean[3]);
        BoundingBox::new(cx - w / 2.0, cy - h / 2.0, w, h)
    }

    /// Largest absolute asymmetry of the covariance, for invariant checks.
    pub fn covariance_asymmetry(&self) -> f64 {
        let d = self.covariance - self.covariance.transpose();
        d.abs().max()
    }
}

/// Measurement-space projection of a state: predicted `(cx, cy, w, h)`
/// observation and its covariance.
pub type Projection = (Vector4<f64>, Matrix4<f64>);

/// The filter itself: stateless apart from its noise configuration.
#[derive(Debug, Clone, Default)]
pub struct KalmanFilter {
    pub noise: NoiseConfig,
}

impl KalmanFilter {
    pub fn new(noise: NoiseConfig) -> Self {
        Self { noise }
    }

    fn transition() -> Matrix6<f64> {
        let mut f = Matrix6::identity();
        f[(0, 4)] = 1.0;
        f[(1, 5)] = 1.0;
        f
    }

    fn observation() -> Matrix4x6<f64> {
        let mut h = Matrix4x6::zeros();
        h[(0, 0)] = 1.0;
        h[(1, 1)] = 1.0;
        h[(2, 2)] = 1.0;
        h[(3, 3)] = 1.0;
        h
    }

    fn process_noise(&self, height: f64) -> Matrix6<f64> {
        let p = (height * self.noise.position_std_factor).powi(2);
        let v = (height * self.noise.velocity_std_factor).powi(2);
        Matrix6::from_diagonal(&Vector6::new(p, p, p, p, v, v))
    }

    fn measurement_noise(&self, height: f64) -> Matrix4<f64> {
        let m = (height * self.noise.measurement_std_factor).powi(2);
        Matrix4::from_diagonal(&Vector4::new(m, m, m, m))
    }

    /// Starts a track from a detection: center-form mean with zero
    /// velocity and a diagonal covariance scaled by the box height.
    pub fn initiate(&self, detection: &Detection) -> KalmanState {
        let (cx, cy) = detection.bbox.center();
        let (w, h) = (detection.bbox.w, detection.bbox.h);
        let mean = Vector6::new(cx, cy, w, h, 0.0, 0.0);
        let p = (h * self.noise.position_std_factor).powi(2);
        let v = (h * self.noise.velocity_std_factor).powi(2);
        let covariance = Matrix6::from_diagonal(&Vector6::new(p, p, p, p, v, v));
        KalmanState { mean, covariance }
    }

    /// Propagates the belief one frame forward.
    pub fn predict(&self, state: &KalmanState) -> KalmanState {
        let f = Self::transition();
        let mean = f * state.mean;
        let covariance = f * state.covariance * f.transpose() + self.process_noise(state.mean[3]);
        KalmanState {
            mean,
            covariance: symmetrize(covariance),
        }
    }

    /// Projects the belief into measurement space: `(H mean, H P Hᵀ + R)`.
    pub fn project(&self, state: &KalmanState) -> Projection {
        let h = Self::observation();
        let mean4 = h * state.mean;
        let cov4 = h * state.covariance * h.transpose() + self.measurement_noise(state.mean[3]);
        (mean4, symmetrize4(cov4))
    }

    /// Corrects the belief with an observed box.
    pub fn update(
        &self,
        state: &KalmanState,
        measurement: &BoundingBox,
    ) -> Result<KalmanState, KalmanError> {
        let (proj_mean, proj_cov) = self.project(state);
        let chol =
            Cholesky::new(proj_cov).ok_or(KalmanError::NonInvertibleInnovation)?;

        let (cx, cy) = measurement.center();
        let z = Vector4::new(cx, cy, measurement.w, measurement.h);
        let innovation = z - proj_mean;

        // K = P Hᵀ S⁻¹, computed by solving S Kᵀ = H Pᵀ.
        let h = Self::observation();
        let pht = state.covariance * h.transpose();
        let gain = chol.solve(&pht.transpose()).transpose();

        let mean = state.mean + gain * innovation;
        let covariance = (Matrix6::identity() - gain * h) * state.covariance;
        Ok(KalmanState {
            mean,
            covariance: symmetrize(covariance),
        })
    }
}

fn symmetrize(m: Matrix6<f64>) -> Matrix6<f64> {
    (m + m.transpose()) * 0.5
}

fn symmetrize4(m: Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}
