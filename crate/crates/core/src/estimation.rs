//! Tandem multiplicative EKF: a translational filter on `(rho, rho_dot)`
//! driven by UWB ranges, and an attitude filter on a three-parameter error
//! `dq = q * q_hat^-1` driven by the gyro.
//!
//! The attitude error is stored as twice the Gibbs vector, which equals the
//! rotation angle vector to first order.

use nalgebra::{Matrix3, Matrix6, Quaternion, RowVector3, RowVector6, UnitQuaternion};
use thiserror::Error;

use crate::dynamics::{position, velocity, Mat3, State6, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("invalid sensor configuration: {0}")]
    InvalidConfig(String),
    #[error("anchor index {0} out of range")]
    BadAnchor(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorConfig {
    pub anchors: Vec<Vec3>,
    /// Tag position in the agent body frame, m.
    pub tag_offset: Vec3,
    pub range_sigma: f64,
    pub gyro_sigma: f64,
}

impl SensorConfig {
    pub fn validate(&self) -> Result<(), EstimationError> {
        if self.anchors.len() < 4 {
            return Err(EstimationError::InvalidConfig(format!(
                "need at least 4 anchors, got {}",
                self.anchors.len()
            )));
        }
        if !(self.range_sigma > 0.0) || !(self.gyro_sigma > 0.0) {
            return Err(EstimationError::InvalidConfig("sensor sigmas must be positive".into()));
        }
        Ok(())
    }
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            anchors: vec![
                Vec3::new(6.0, 6.0, 3.0),
                Vec3::new(-6.0, 6.0, -3.0),
                Vec3::new(6.0, -6.0, -3.0),
                Vec3::new(-6.0, -6.0, 3.0),
            ],
            tag_offset: Vec3::new(0.05, 0.0, 0.0),
            range_sigma: 0.05,
            gyro_sigma: 0.005,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeMeasurement {
    pub anchor_id: usize,
    pub range: f64,
}

/// Filter settings beyond the sensor geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct MekfConfig {
    pub sensor: SensorConfig,
    /// White acceleration noise density, m/s^2/sqrt(Hz).
    pub accel_noise: f64,
    /// Innovation gate in standard deviations.
    pub gate_sigma: f64,
    /// Let ranges correct the attitude error as well.
    pub attitude_from_range: bool,
}

impl Default for MekfConfig {
    fn default() -> Self {
        Self {
            sensor: SensorConfig::default(),
            accel_noise: 1e-4,
            gate_sigma: 5.0,
            attitude_from_range: false,
        }
    }
}

impl MekfConfig {
    pub fn validate(&self) -> Result<(), EstimationError> {
        self.sensor.validate()?;
        if !(self.accel_noise >= 0.0) || !(self.gate_sigma > 0.0) {
            return Err(EstimationError::InvalidConfig("noise density must be >= 0 and gate > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MekfState {
    pub trans_mean: State6,
    pub trans_cov: Matrix6<f64>,
    /// Agent body to mothership, estimated.
    pub ref_quat: UnitQuaternion<f64>,
    pub att_err: Vec3,
    pub att_cov: Mat3,
}

impl MekfState {
    pub fn new(mean: State6, pos_sigma: f64, vel_sigma: f64, ref_quat: UnitQuaternion<f64>, att_sigma: f64) -> Self {
        let mut p = Matrix6::zeros();
        for i in 0..3 {
            p[(i, i)] = pos_sigma * pos_sigma;
            p[(i + 3, i + 3)] = vel_sigma * vel_sigma;
        }
        Self {
            trans_mean: mean,
            trans_cov: p,
            ref_quat,
            att_err: Vec3::zeros(),
            att_cov: Mat3::identity() * (att_sigma * att_sigma),
        }
    }

    pub fn position(&self) -> Vec3 {
        position(&self.trans_mean)
    }

    pub fn velocity(&self) -> Vec3 {
        velocity(&self.trans_mean)
    }
}

/// Discrete transition of the double integrator for acceleration input.
pub fn transition(dt: f64) -> Matrix6<f64> {
    let mut a = Matrix6::identity();
    for i in 0..3 {
        a[(i, i + 3)] = dt;
    }
    a
}

/// Discrete process noise of white acceleration with density `q`.
pub fn process_noise(q: f64, dt: f64) -> Matrix6<f64> {
    let q2 = q * q;
    let mut m = Matrix6::zeros();
    for i in 0..3 {
        m[(i, i)] = q2 * dt.powi(3) / 3.0;
        m[(i, i + 3)] = q2 * dt * dt / 2.0;
        m[(i + 3, i)] = q2 * dt * dt / 2.0;
        m[(i + 3, i + 3)] = q2 * dt;
    }
    m
}

fn symmetrize6(p: &Matrix6<f64>) -> Matrix6<f64> {
    (p + p.transpose()) * 0.5
}

fn symmetrize3(p: &Mat3) -> Mat3 {
    (p + p.transpose()) * 0.5
}

fn skew(v: &Vec3) -> Mat3 {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Time update with commanded acceleration `accel` and gyro rate
/// `omega_meas` (body frame).
pub fn predict(s: &MekfState, accel: &Vec3, omega_meas: &Vec3, dt: f64, cfg: &MekfConfig) -> MekfState {
    let a = transition(dt);
    let mut mean = a * s.trans_mean;
    for i in 0..3 {
        mean[i] += 0.5 * dt * dt * accel[i];
        mean[i + 3] += dt * accel[i];
    }
    let cov = symmetrize6(&(a * s.trans_cov * a.transpose() + process_noise(cfg.accel_noise, dt)));
    // Body-rate propagation of the reference; the left error sees only the
    // gyro noise rotated into the mothership frame, which is isotropic here.
    let ref_quat = s.ref_quat * UnitQuaternion::from_scaled_axis(omega_meas * dt);
    let g = cfg.sensor.gyro_sigma;
    let att_cov = symmetrize3(&(s.att_cov + Mat3::identity() * (g * g * dt)));
    MekfState {
        trans_mean: mean,
        trans_cov: cov,
        ref_quat,
        att_err: s.att_err,
        att_cov,
    }
}

/// Range predicted from the current estimate.
pub fn predicted_range(s: &MekfState, anchor: &Vec3, tag_offset: &Vec3) -> f64 {
    (s.position() + s.ref_quat * tag_offset - anchor).norm()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateOutcome {
    pub state: MekfState,
    pub innovation: f64,
    pub gated: bool,
}

/// Scalar range update (Joseph form) with innovation gating.
pub fn update_range(s: &MekfState, z: &RangeMeasurement, cfg: &MekfConfig) -> Result<UpdateOutcome, EstimationError> {
    let anchor = cfg.sensor.anchors.get(z.anchor_id).ok_or(EstimationError::BadAnchor(z.anchor_id))?;
    let lever = s.ref_quat * cfg.sensor.tag_offset;
    let d = s.position() + lever - anchor;
    let range = d.norm();
    if range < 1e-9 {
        return Ok(UpdateOutcome {
            state: *s,
            innovation: 0.0,
            gated: true,
        });
    }
    let e = d / range;
    let h_t = RowVector6::new(e.x, e.y, e.z, 0.0, 0.0, 0.0);
    let h_a: RowVector3<f64> = -(e.transpose() * skew(&lever));
    let r = cfg.sensor.range_sigma * cfg.sensor.range_sigma;
    let att_var = (h_a * s.att_cov * h_a.transpose())[0];
    let trans_var = (h_t * s.trans_cov * h_t.transpose())[0];
    let nu = z.range - range;
    let s_t = trans_var + att_var + r;
    if nu * nu > cfg.gate_sigma * cfg.gate_sigma * s_t {
        log::debug!("range from anchor {} gated: innovation {nu:.4} m", z.anchor_id);
        return Ok(UpdateOutcome {
            state: *s,
            innovation: nu,
            gated: true,
        });
    }
    let mut out = *s;
    // Translational filter treats the attitude uncertainty as extra noise.
    let r_t = r + att_var;
    let k = s.trans_cov * h_t.transpose() / s_t;
    out.trans_mean += k * nu;
    let ikh = Matrix6::identity() - k * h_t;
    out.trans_cov = symmetrize6(&(ikh * s.trans_cov * ikh.transpose() + k * k.transpose() * r_t));
    if cfg.attitude_from_range {
        let r_a = r + trans_var;
        let ka = s.att_cov * h_a.transpose() / s_t;
        out.att_err += ka * nu;
        let ikh = Mat3::identity() - ka * h_a;
        out.att_cov = symmetrize3(&(ikh * s.att_cov * ikh.transpose() + ka * ka.transpose() * r_a));
    }
    Ok(UpdateOutcome {
        state: out,
        innovation: nu,
        gated: false,
    })
}

/// Fold the attitude error into the reference quaternion and reset it.
pub fn fold_attitude(s: &MekfState) -> MekfState {
    let g = s.att_err * 0.5;
    let dq = UnitQuaternion::new_normalize(Quaternion::from_parts(1.0, g));
    MekfState {
        ref_quat: dq * s.ref_quat,
        att_err: Vec3::zeros(),
        ..*s
    }
}

/// Position uncertainty radius `xi * |sqrt(diag P)(0..3)|`.
pub fn uncertainty_buffer(s: &MekfState, xi: f64) -> f64 {
    let p = &s.trans_cov;
    xi * (p[(0, 0)].max(0.0) + p[(1, 1)].max(0.0) + p[(2, 2)].max(0.0)).sqrt()
}
