//! Physical, channel and energy model of the UAV edge-computing system.
//!
//! Every function here is pure. Units are SI throughout: meters, seconds,
//! watts, joules, bits, hertz. Angles passed to the LoS logistic are in
//! degrees; every other angle is in radians.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("device {0} is not among the transmitting devices")]
    NotTransmitting(usize),
    #[error("uplink rate must be positive, got {0}")]
    NonPositiveRate(f64),
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },
}

fn check(ok: bool, field: &'static str, reason: impl Into<String>) -> Result<(), ModelError> {
    if ok {
        Ok(())
    } else {
        Err(ModelError::InvalidParam { field, reason: reason.into() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundDevice {
    pub id: usize,
    pub position: Position3,
    /// Transmit power in watts.
    pub transmit_power: f64,
}

/// A task `<O, mu, lambda>` generated by a ground device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputeTask {
    pub source_gd: usize,
    pub data_bits: f64,
    pub cycles_per_bit: f64,
    /// Arrival time in seconds.
    pub arrival_time: f64,
}

impl ComputeTask {
    pub fn new(
        source_gd: usize,
        data_bits: f64,
        cycles_per_bit: f64,
        arrival_time: f64,
    ) -> Result<Self, ModelError> {
        check(data_bits > 0.0 && data_bits.is_finite(), "data_bits", "must be positive")?;
        check(
            cycles_per_bit > 0.0 && cycles_per_bit.is_finite(),
            "cycles_per_bit",
            "must be positive",
        )?;
        check(arrival_time >= 0.0, "arrival_time", "must be non-negative")?;
        Ok(Self { source_gd, data_bits, cycles_per_bit, arrival_time })
    }

    /// Total CPU cycles needed, `O * mu`.
    pub fn cycles(&self) -> f64 {
        self.data_bits * self.cycles_per_bit
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    /// Environment constant `a` of the LoS logistic.
    pub a_env: f64,
    /// Environment constant `b` of the LoS logistic.
    pub b_env: f64,
    pub carrier_hz: f64,
    pub light_speed: f64,
    pub loss_los_db: f64,
    pub loss_nlos_db: f64,
    pub bandwidth_hz: f64,
    pub noise_power_w: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            a_env: 9.61,
            b_env: 0.16,
            carrier_hz: 2e9,
            light_speed: 3e8,
            loss_los_db: 0.1,
            loss_nlos_db: 21.0,
            bandwidth_hz: 10e6,
            noise_power_w: 1e-13,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        check(self.a_env > 0.0, "a_env", "must be positive")?;
        check(self.b_env > 0.0, "b_env", "must be positive")?;
        check(self.carrier_hz > 0.0, "carrier_hz", "must be positive")?;
        check(self.light_speed > 0.0, "light_speed", "must be positive")?;
        check(self.loss_los_db >= 0.0, "loss_los_db", "must be non-negative")?;
        check(self.loss_nlos_db >= 0.0, "loss_nlos_db", "must be non-negative")?;
        check(self.bandwidth_hz > 0.0, "bandwidth_hz", "must be positive")?;
        check(self.noise_power_w > 0.0, "noise_power_w", "must be positive")
    }
}

/// Rotary-wing propulsion constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropulsionParams {
    /// Blade profile power in hover.
    pub p1_w: f64,
    /// Induced power in hover.
    pub p2_w: f64,
    pub v_tip: f64,
    /// Mean rotor induced velocity in hover.
    pub v_induced: f64,
    /// Fuselage drag ratio.
    pub d0: f64,
    /// Air density.
    pub rho: f64,
    /// Rotor solidity.
    pub solidity: f64,
    /// Rotor disc area.
    pub disc_area: f64,
}

impl Default for PropulsionParams {
    fn default() -> Self {
        Self {
            p1_w: 79.8563,
            p2_w: 88.6279,
            v_tip: 120.0,
            v_induced: 4.03,
            d0: 0.6,
            rho: 1.225,
            solidity: 0.05,
            disc_area: 0.503,
        }
    }
}

impl PropulsionParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        for (field, v) in [
            ("p1_w", self.p1_w),
            ("p2_w", self.p2_w),
            ("v_tip", self.v_tip),
            ("v_induced", self.v_induced),
            ("d0", self.d0),
            ("rho", self.rho),
            ("solidity", self.solidity),
            ("disc_area", self.disc_area),
        ] {
            check(v > 0.0 && v.is_finite(), field, "must be strictly positive")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeParams {
    /// Effective switched capacitance.
    pub kappa: f64,
    /// CPU frequency assigned to every task, cycles/s.
    pub cpu_hz: f64,
    /// UAV receive power.
    pub rx_power_w: f64,
}

impl Default for ComputeParams {
    fn default() -> Self {
        Self { kappa: 1e-28, cpu_hz: 3e9, rx_power_w: 0.1 }
    }
}

impl ComputeParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        check(self.kappa > 0.0, "kappa", "must be positive")?;
        check(self.cpu_hz > 0.0, "cpu_hz", "must be positive")?;
        check(self.rx_power_w > 0.0, "rx_power_w", "must be positive")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UavLimits {
    pub altitude_m: f64,
    pub v_max: f64,
    /// Maximum azimuth angle, radians.
    pub theta_max: f64,
    pub slot_seconds: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Default for UavLimits {
    fn default() -> Self {
        Self {
            altitude_m: 100.0,
            v_max: 30.0,
            theta_max: PI / 4.0,
            slot_seconds: 1.0,
            x_max: 1000.0,
            y_max: 1000.0,
        }
    }
}

impl UavLimits {
    pub fn validate(&self) -> Result<(), ModelError> {
        check(self.altitude_m > 0.0, "altitude_m", "must be positive")?;
        check(self.v_max > 0.0, "v_max", "must be positive")?;
        check(
            self.theta_max > 0.0 && self.theta_max < PI / 2.0,
            "theta_max",
            "must lie in (0, pi/2)",
        )?;
        check(self.slot_seconds > 0.0, "slot_seconds", "must be positive")?;
        check(self.x_max > 0.0, "x_max", "must be positive")?;
        check(self.y_max > 0.0, "y_max", "must be positive")
    }

    /// Largest distance flown in one slot, `v_max * tau`.
    pub fn d_max(&self) -> f64 {
        self.v_max * self.slot_seconds
    }

    /// Coverage radius on the ground, `H * tan(theta_max)`.
    pub fn coverage_radius(&self) -> f64 {
        self.altitude_m * self.theta_max.tan()
    }

    pub fn contains(&self, p: Position3) -> bool {
        (0.0..=self.x_max).contains(&p.x) && (0.0..=self.y_max).contains(&p.y)
    }

    pub fn clamp(&self, p: Position3) -> Position3 {
        Position3::new(p.x.clamp(0.0, self.x_max), p.y.clamp(0.0, self.y_max), p.z)
    }
}

pub fn horizontal_distance(uav: Position3, gd: Position3) -> f64 {
    (uav.x - gd.x).hypot(uav.y - gd.y)
}

/// 3-D link distance between the UAV and a ground point.
pub fn link_distance(uav: Position3, gd: Position3) -> f64 {
    horizontal_distance(uav, gd).hypot(uav.z - gd.z)
}

/// Boundary slack so that `tan(pi/4)` rounding does not exclude the rim.
const COVERAGE_EPS_M: f64 = 1e-9;

pub fn in_coverage(uav: Position3, gd: Position3, limits: &UavLimits) -> bool {
    horizontal_distance(uav, gd) <= limits.coverage_radius() + COVERAGE_EPS_M
}

/// Elevation angle in degrees, `atan(H / d_h)`; 90 when directly overhead.
pub fn elevation_deg(uav: Position3, gd: Position3) -> f64 {
    (uav.z - gd.z).atan2(horizontal_distance(uav, gd)).to_degrees()
}

/// Logistic LoS probability for an elevation angle given in degrees.
pub fn los_probability_at(elevation_deg: f64, ch: &ChannelParams) -> f64 {
    1.0 / (1.0 + ch.a_env * (-ch.b_env * (elevation_deg - ch.a_env)).exp())
}

pub fn los_probability(uav: Position3, gd: Position3, ch: &ChannelParams) -> f64 {
    los_probability_at(elevation_deg(uav, gd), ch)
}

/// Path loss in dB for a given 3-D link distance and LoS probability.
pub fn path_loss_db_with_los(link_distance: f64, los: f64, ch: &ChannelParams) -> f64 {
    20.0 * link_distance.log10()
        + los * (ch.loss_los_db - ch.loss_nlos_db)
        + 20.0 * (4.0 * PI * ch.carrier_hz / ch.light_speed).log10()
        + ch.loss_nlos_db
}

pub fn path_loss_db(uav: Position3, gd: Position3, ch: &ChannelParams) -> f64 {
    path_loss_db_with_los(link_distance(uav, gd), los_probability(uav, gd, ch), ch)
}

/// Power received at the UAV from one device, `P_tran * 10^(-L/10)`.
pub fn received_power(uav: Position3, gd: &GroundDevice, ch: &ChannelParams) -> f64 {
    gd.transmit_power * 10f64.powf(-path_loss_db(uav, gd.position, ch) / 10.0)
}

/// SINR from received powers: `signal / (interference + noise)`.
pub fn sinr_from_powers(signal_w: f64, interference_w: f64, noise_w: f64) -> f64 {
    signal_w / (interference_w + noise_w)
}

/// SINR of `target` when every device in `transmitting` uploads at once.
///
/// `devices` is indexed by device id.
pub fn sinr(
    target: usize,
    transmitting: &[usize],
    uav: Position3,
    devices: &[GroundDevice],
    ch: &ChannelParams,
) -> Result<f64, ModelError> {
    if !transmitting.contains(&target) {
        return Err(ModelError::NotTransmitting(target));
    }
    let signal = received_power(uav, &devices[target], ch);
    let interference: f64 = transmitting
        .iter()
        .filter(|&&j| j != target)
        .map(|&j| received_power(uav, &devices[j], ch))
        .sum();
    Ok(sinr_from_powers(signal, interference, ch.noise_power_w))
}

pub fn uplink_rate(sinr: f64, ch: &ChannelParams) -> f64 {
    ch.bandwidth_hz * (1.0 + sinr).log2()
}

/// Ground-to-air transmission delay.
pub fn g2a_delay(task: &ComputeTask, rate: f64) -> Result<f64, ModelError> {
    if rate > 0.0 {
        Ok(task.data_bits / rate)
    } else {
        Err(ModelError::NonPositiveRate(rate))
    }
}

pub fn compute_delay(task: &ComputeTask, cp: &ComputeParams) -> f64 {
    task.cycles() / cp.cpu_hz
}

pub fn compute_energy(task: &ComputeTask, cp: &ComputeParams) -> f64 {
    cp.kappa * task.cycles() * cp.cpu_hz * cp.cpu_hz
}

pub fn receive_energy(task: &ComputeTask, rate: f64, cp: &ComputeParams) -> Result<f64, ModelError> {
    Ok(cp.rx_power_w * g2a_delay(task, rate)?)
}

/// Why a requested move could not be applied as-is.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MoveError {
    /// The step was valid but lands outside the mission rectangle. The
    /// unclamped landing pose is carried so the caller can penalize it.
    OutOfArea(Position3),
    Invalid(f64, f64),
}

/// Applies one slot of horizontal motion. Altitude is unchanged.
pub fn move_uav(
    pose: Position3,
    theta: f64,
    dist: f64,
    limits: &UavLimits,
) -> Result<Position3, MoveError> {
    let d_max = limits.d_max();
    if !(0.0..=2.0 * PI).contains(&theta) || !(0.0..=d_max).contains(&dist) {
        return Err(MoveError::Invalid(theta, dist));
    }
    let next = Position3::new(pose.x + dist * theta.cos(), pose.y + dist * theta.sin(), pose.z);
    if limits.contains(next) {
        Ok(next)
    } else {
        Err(MoveError::OutOfArea(next))
    }
}

/// Rotary-wing propulsion power at horizontal speed `v`.
pub fn propulsion_power(v: f64, pp: &PropulsionParams) -> f64 {
    let v2 = v * v;
    let v0_2 = pp.v_induced * pp.v_induced;
    let blade = pp.p1_w * (1.0 + 3.0 * v2 / (pp.v_tip * pp.v_tip));
    let induced = pp.p2_w * ((1.0 + v2 * v2 / (4.0 * v0_2 * v0_2)).sqrt() - v2 / (2.0 * v0_2)).sqrt();
    let parasite = 0.5 * pp.d0 * pp.rho * pp.solidity * pp.disc_area * v2 * v;
    blade + induced + parasite
}

/// Flight energy over one slot at constant speed.
pub fn flight_energy_step(v: f64, pp: &PropulsionParams, tau: f64) -> f64 {
    propulsion_power(v, pp) * tau
}
