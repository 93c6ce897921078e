//! Four-channel PID velocity controller.
//!
//! Errors are expressed in the heading-aligned body frame. Each channel keeps
//! a sliding window of accumulated errors for the integral term; the window
//! spans a fixed duration, not the whole flight.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::frames::{wrap, Rotation, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

impl ChannelGains {
    pub const fn new(kp: f64, ki: f64, kd: f64) -> Self {
        Self { kp, ki, kd }
    }

    fn is_valid(&self) -> bool {
        [self.kp, self.ki, self.kd]
            .iter()
            .all(|g| g.is_finite() && *g >= 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub x: ChannelGains,
    pub y: ChannelGains,
    pub z: ChannelGains,
    pub yaw: ChannelGains,
}

impl PidGains {
    pub fn is_valid(&self) -> bool {
        self.channels().iter().all(ChannelGains::is_valid)
    }

    fn channels(&self) -> [ChannelGains; 4] {
        [self.x, self.y, self.z, self.yaw]
    }
}

/// Gain sets per mission phase. Defaults are the competition values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GainTable {
    pub takeoff: PidGains,
    pub search: PidGains,
    pub land: PidGains,
    #[serde(rename = "return")]
    pub return_: PidGains,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VelocityLimits {
    pub horizontal: f64,
    pub vertical: f64,
    pub yaw_rate: f64,
}

impl VelocityLimits {
    fn per_channel(&self) -> [f64; 4] {
        [self.horizontal, self.horizontal, self.vertical, self.yaw_rate]
    }
}

/// Body-frame velocity command handed to the low-level controller.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub velocity: [f64; 3],
    pub yaw_rate: f64,
    pub t: f64,
}

impl VelocityCommand {
    pub fn velocity(&self) -> Vec3 {
        Vec3::from(self.velocity)
    }

    pub fn is_finite(&self) -> bool {
        self.velocity.iter().all(|v| v.is_finite()) && self.yaw_rate.is_finite()
    }
}

/// Per-channel errors in the order x, y, z, yaw.
pub type ChannelErrors = [f64; 4];

/// `e_p^b = R_w^b (p* - p)`.
pub fn position_error_body(p_star: &Vec3, p: &Vec3, r_w_b: &Rotation) -> Vec3 {
    r_w_b.apply(&(p_star - p))
}

/// Yaw error that turns the UAV perpendicular to the cargo's long axis.
pub fn yaw_error(psi_b_c: f64) -> f64 {
    wrap(psi_b_c + std::f64::consts::FRAC_PI_2)
}

pub fn saturate(v: f64, v_max: f64) -> f64 {
    v.clamp(-v_max, v_max)
}

/// Anti-windup gate. While the previous raw command sat at a limit, only
/// errors that pull the command back off that limit are accumulated.
pub fn integration_allowed(prev_raw: f64, e: f64, v_max: f64) -> bool {
    if prev_raw >= v_max {
        e <= 0.0
    } else if prev_raw <= -v_max {
        e >= 0.0
    } else {
        true
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ChannelState {
    window: VecDeque<f64>,
    sum: f64,
    prev_error: Option<f64>,
    prev_raw: f64,
}

impl ChannelState {
    fn new(capacity: usize) -> Self {
        Self {
            window: VecDeque::with_capacity(capacity),
            sum: 0.0,
            prev_error: None,
            prev_raw: 0.0,
        }
    }

    fn push(&mut self, e: f64, capacity: usize) {
        if self.window.len() == capacity {
            self.window.pop_front();
        }
        self.window.push_back(e);
        self.sum = self.window.iter().sum();
    }
}

/// What a single step produced, before and after saturation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepTerms {
    pub p: ChannelErrors,
    pub i: ChannelErrors,
    pub d: ChannelErrors,
    pub raw: ChannelErrors,
    pub saturated: [bool; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    channels: [ChannelState; 4],
    capacity: usize,
    gains: Option<PidGains>,
}

impl ControllerState {
    /// Integral window of `window` seconds sampled every `period` seconds.
    pub fn new(window: f64, period: f64) -> Self {
        let capacity = ((window / period).round() as usize).max(1);
        Self {
            channels: std::array::from_fn(|_| ChannelState::new(capacity)),
            capacity,
            gains: None,
        }
    }

    pub fn window_len(&self) -> usize {
        self.capacity
    }

    /// Accumulated error of one channel (0 = x, 1 = y, 2 = z, 3 = yaw).
    pub fn accumulator(&self, channel: usize) -> f64 {
        self.channels[channel].sum
    }

    pub fn samples(&self, channel: usize) -> usize {
        self.channels[channel].window.len()
    }

    pub fn reset(&mut self) {
        self.channels = std::array::from_fn(|_| ChannelState::new(self.capacity));
    }

    /// Installs a gain set. A different set clears integral and derivative
    /// history so the switch cannot kick.
    pub fn select_gains(&mut self, gains: PidGains) {
        if self.gains != Some(gains) {
            self.reset();
            self.gains = Some(gains);
        }
    }
}

/// One controller update. `feedforward` is added to the translational
/// channels before saturation.
pub fn pid_step(
    gains: &PidGains,
    e: &ChannelErrors,
    st: &mut ControllerState,
    period: f64,
    feedforward: Option<Vec3>,
    limits: &VelocityLimits,
    t: f64,
) -> (VelocityCommand, StepTerms) {
    st.select_gains(*gains);
    let g = gains.channels();
    let v_max = limits.per_channel();
    let ff = feedforward.unwrap_or_else(Vec3::zeros);
    let mut terms = StepTerms {
        p: [0.0; 4],
        i: [0.0; 4],
        d: [0.0; 4],
        raw: [0.0; 4],
        saturated: [false; 4],
    };
    let capacity = st.capacity;
    for k in 0..4 {
        let ch = &mut st.channels[k];
        if integration_allowed(ch.prev_raw, e[k], v_max[k]) {
            ch.push(e[k], capacity);
        }
        terms.p[k] = g[k].kp * e[k];
        terms.i[k] = g[k].ki * ch.sum;
        terms.d[k] = match ch.prev_error {
            Some(prev) => g[k].kd * (e[k] - prev) / period,
            None => 0.0,
        };
        let extra = if k < 3 { ff[k] } else { 0.0 };
        terms.raw[k] = terms.p[k] + terms.i[k] + terms.d[k] + extra;
        ch.prev_error = Some(e[k]);
        ch.prev_raw = terms.raw[k];
        terms.saturated[k] = terms.raw[k].abs() >= v_max[k];
    }
    let out: [f64; 4] = std::array::from_fn(|k| saturate(terms.raw[k], v_max[k]));
    (
        VelocityCommand {
            velocity: [out[0], out[1], out[2]],
            yaw_rate: out[3],
            t,
        },
        terms,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::EulerAngles;
    use approx::assert_abs_diff_eq;

    fn land() -> PidGains {
        crate::config::ScenarioConfig::default().mission.gains.land
    }

    fn search() -> PidGains {
        crate::config::ScenarioConfig::default().mission.gains.search
    }

    fn limits() -> VelocityLimits {
        VelocityLimits::default()
    }

    #[test]
    fn body_error_examples() {
        let z = Vec3::zeros();
        let e = position_error_body(&Vec3::new(1.0, 0.0, 0.0), &z, &Rotation::identity());
        assert_eq!(e, Vec3::new(1.0, 0.0, 0.0));

        let r_w_b = EulerAngles::yaw_only(std::f64::consts::FRAC_PI_2).rotation().inverse();
        let e = position_error_body(&Vec3::new(1.0, 0.0, 0.0), &z, &r_w_b);
        assert_abs_diff_eq!(e, Vec3::new(0.0, -1.0, 0.0), epsilon = 1e-15);

        let p = Vec3::new(3.0, -2.0, 1.0);
        assert_eq!(position_error_body(&p, &p, &r_w_b), z);
    }

    #[test]
    fn yaw_error_examples() {
        use std::f64::consts::PI;
        assert_abs_diff_eq!(yaw_error(-PI / 2.0), 0.0);
        assert_abs_diff_eq!(yaw_error(0.0), PI / 2.0);
        assert_abs_diff_eq!(yaw_error(3.0 * PI / 4.0), -3.0 * PI / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_error_gives_zero_command() {
        let mut st = ControllerState::new(3.0, 0.02);
        let (cmd, _) = pid_step(&land(), &[0.0; 4], &mut st, 0.02, None, &limits(), 0.0);
        assert_eq!(cmd.velocity, [0.0; 3]);
        assert_eq!(cmd.yaw_rate, 0.0);
    }

    #[test]
    fn search_gain_arithmetic() {
        let mut st = ControllerState::new(3.0, 0.02);
        let (cmd, _) = pid_step(&search(), &[0.4, 0.0, 0.0, 0.0], &mut st, 0.02, None, &limits(), 0.0);
        assert_eq!(cmd.velocity[0], 0.2);
    }

    #[test]
    fn land_gain_window_arithmetic() {
        let mut st = ControllerState::new(3.0, 0.02);
        assert_eq!(st.window_len(), 150);
        let mut terms = None;
        for k in 0..150 {
            let (_, t) = pid_step(&land(), &[0.1, 0.0, 0.0, 0.0], &mut st, 0.02, None, &limits(), k as f64 * 0.02);
            terms = Some(t);
        }
        let t = terms.unwrap();
        assert_abs_diff_eq!(t.p[0], 0.03, epsilon = 1e-15);
        assert_abs_diff_eq!(t.i[0], 0.015, epsilon = 1e-12);
        assert_eq!(t.d[0], 0.0);
        assert_abs_diff_eq!(t.raw[0], 0.045, epsilon = 1e-12);

        // The window slides: further samples do not grow the integral.
        let (_, t) = pid_step(&land(), &[0.1, 0.0, 0.0, 0.0], &mut st, 0.02, None, &limits(), 3.0);
        assert_abs_diff_eq!(t.i[0], 0.015, epsilon = 1e-12);
    }

    #[test]
    fn saturation_clamps() {
        assert_eq!(saturate(0.9, 0.6), 0.6);
        assert_eq!(saturate(-0.9, 0.6), -0.6);
        assert_eq!(saturate(0.1, 0.6), 0.1);
    }

    #[test]
    fn windup_reinforcing_error_not_accumulated() {
        let gains = PidGains {
            x: ChannelGains::new(10.0, 0.01, 0.0),
            ..land()
        };
        let mut st = ControllerState::new(3.0, 0.02);
        pid_step(&gains, &[1.0, 0.0, 0.0, 0.0], &mut st, 0.02, None, &limits(), 0.0);
        let before = st.accumulator(0);
        for k in 1..500 {
            pid_step(&gains, &[1.0, 0.0, 0.0, 0.0], &mut st, 0.02, None, &limits(), k as f64 * 0.02);
        }
        assert_eq!(st.accumulator(0), before);
        assert_eq!(st.samples(0), 1);

        // Counteracting error while still saturated high is accumulated.
        pid_step(&gains, &[-0.01, 0.0, 0.0, 0.0], &mut st, 0.02, None, &limits(), 10.0);
        assert!(st.accumulator(0) < before);
    }

    #[test]
    fn gain_switch_clears_derivative_history() {
        let mut st = ControllerState::new(3.0, 0.02);
        pid_step(&land(), &[0.5, 0.0, 0.0, 0.0], &mut st, 0.02, None, &limits(), 0.0);
        let takeoff = crate::config::ScenarioConfig::default().mission.gains.takeoff;
        let (_, t) = pid_step(&takeoff, &[0.1, 0.0, 0.0, 0.0], &mut st, 0.02, None, &limits(), 0.02);
        assert_eq!(t.d, [0.0; 4]);
    }

    #[test]
    fn feedforward_adds_before_saturation() {
        let mut st = ControllerState::new(3.0, 0.02);
        let ff = Vec3::new(0.1, -0.7, 0.0);
        let (cmd, _) = pid_step(&search(), &[0.2, 0.0, 0.0, 0.0], &mut st, 0.02, Some(ff), &limits(), 0.0);
        assert_abs_diff_eq!(cmd.velocity[0], 0.2, epsilon = 1e-15);
        assert_eq!(cmd.velocity[1], -0.6);
    }
}
