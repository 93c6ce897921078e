//! UWB ranging localization.
//!
//! Each of the two body-fixed labels runs its own constant-acceleration EKF
//! in the platform (anchor) frame: the IMU acceleration drives the
//! prediction and the anchor ranges correct it. The two label estimates are
//! averaged and rotated into the world frame, and the vector between them
//! gives the heading without a magnetometer.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, Matrix6x3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{wrap, EulerAngles, Rotation, Vec3};

/// Fixed anchors in the platform frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    anchors: Vec<Vec3>,
}

impl AnchorSet {
    /// Rejects fewer than three anchors or a collinear set.
    pub fn new(anchors: Vec<Vec3>) -> Result<Self> {
        if anchors.len() < 3 {
            return Err(Error::Degenerate(format!(
                "{} anchors, need at least three",
                anchors.len()
            )));
        }
        if anchors.iter().any(|a| !a.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite("anchor position"));
        }
        if centered_rank(&anchors) < 2 {
            return Err(Error::Degenerate("anchors are collinear".into()));
        }
        Ok(Self { anchors })
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn get(&self, j: usize) -> Option<&Vec3> {
        self.anchors.get(j)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vec3> {
        self.anchors.iter()
    }
}

/// Numerical rank of the anchor cloud about its centroid.
pub fn centered_rank(points: &[Vec3]) -> usize {
    let n = points.len() as f64;
    let mean = points.iter().sum::<Vec3>() / n;
    let mut scatter = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        scatter += d * d.transpose();
    }
    let sv = scatter.symmetric_eigenvalues();
    let top = sv.iter().cloned().fold(0.0_f64, f64::max);
    if top <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > top * 1e-12).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeMeasurement {
    /// 0 or 1.
    pub label: usize,
    pub anchor: usize,
    pub range: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfParams {
    /// Jerk noise standard deviation, m/s^3.
    pub jerk_noise: f64,
    /// Range noise standard deviation, m.
    pub range_noise: f64,
    /// Sample period, s.
    pub period: f64,
}

impl EkfParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.jerk_noise > 0.0 && self.range_noise > 0.0 && self.period > 0.0) {
            return Err(Error::InvalidArgument(
                "EKF noise scales and period must be positive".into(),
            ));
        }
        Ok(())
    }

    fn a(&self) -> Matrix6<f64> {
        let mut a = Matrix6::identity();
        for i in 0..3 {
            a[(i, i + 3)] = self.period;
        }
        a
    }

    fn b(&self) -> Matrix6x3<f64> {
        let t = self.period;
        block_column(t * t / 2.0, t)
    }

    fn d(&self) -> Matrix6x3<f64> {
        let t = self.period;
        block_column(t * t * t / 6.0, t * t / 2.0)
    }
}

fn block_column(top: f64, bottom: f64) -> Matrix6x3<f64> {
    let mut m = Matrix6x3::zeros();
    for i in 0..3 {
        m[(i, i)] = top;
        m[(i + 3, i)] = bottom;
    }
    m
}

/// Position and velocity of one label in the platform frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfState {
    pub x: Vector6<f64>,
    pub p: Matrix6<f64>,
    pub t: f64,
}

impl EkfState {
    pub fn new(position: Vec3, velocity: Vec3, position_std: f64, velocity_std: f64, t: f64) -> Self {
        let mut x = Vector6::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&position);
        x.fixed_rows_mut::<3>(3).copy_from(&velocity);
        let mut p = Matrix6::zeros();
        for i in 0..3 {
            p[(i, i)] = position_std * position_std;
            p[(i + 3, i + 3)] = velocity_std * velocity_std;
        }
        Self { x, p, t }
    }

    pub fn position(&self) -> Vec3 {
        self.x.fixed_rows::<3>(0).into()
    }

    pub fn velocity(&self) -> Vec3 {
        self.x.fixed_rows::<3>(3).into()
    }

    /// Smallest covariance eigenvalue and the largest asymmetry.
    pub fn covariance_health(&self) -> (f64, f64) {
        let asym = (self.p - self.p.transpose()).abs().max();
        let min_eig = self.p.symmetric_eigenvalues().min();
        (min_eig, asym)
    }
}

/// Prediction with a platform-frame acceleration.
pub fn ekf_predict_platform(s: &EkfState, a_u: &Vec3, params: &EkfParams) -> Result<EkfState> {
    if !a_u.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("acceleration"));
    }
    let a = params.a();
    let d = params.d();
    let q = Matrix3::identity() * params.jerk_noise.powi(2);
    let x = a * s.x + params.b() * a_u;
    let p = a * s.p * a.transpose() + d * q * d.transpose();
    Ok(EkfState {
        x,
        p: (p + p.transpose()) * 0.5,
        t: s.t + params.period,
    })
}

/// `U(k+1) = A U(k) + B a^u(k)`, `P <- A P A^T + D Q D^T`, with
/// `a^u = R_w^u R_b^w a_body`.
pub fn ekf_predict(
    s: &EkfState,
    a_body: &Vec3,
    r_b_w: &Rotation,
    r_w_u: &Rotation,
    params: &EkfParams,
) -> Result<EkfState> {
    if !a_body.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("acceleration"));
    }
    let a_u = r_w_u.apply(&r_b_w.apply(a_body));
    ekf_predict_platform(s, &a_u, params)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateOutcome {
    pub state: EkfState,
    pub rows_used: usize,
    /// Set when no range could be used and the state passed through.
    pub degraded: bool,
}

/// Range correction. Rows whose predicted position sits on an anchor are
/// dropped; the covariance update uses the Joseph form.
pub fn ekf_update(
    s: &EkfState,
    ranges: &[(usize, f64)],
    anchors: &AnchorSet,
    params: &EkfParams,
) -> Result<UpdateOutcome> {
    let u = s.position();
    let mut rows: Vec<([f64; 3], f64)> = Vec::with_capacity(ranges.len());
    for &(j, d) in ranges {
        let anchor = anchors
            .get(j)
            .ok_or_else(|| Error::InvalidArgument(format!("anchor index {j} out of range")))?;
        if !d.is_finite() {
            return Err(Error::NonFinite("range"));
        }
        let diff = u - anchor;
        let pred = diff.norm();
        if pred <= 1e-9 {
            continue;
        }
        let g = diff / pred;
        rows.push(([g.x, g.y, g.z], d - pred));
    }
    if rows.is_empty() {
        return Ok(UpdateOutcome {
            state: *s,
            rows_used: 0,
            degraded: true,
        });
    }
    let k = rows.len();
    let mut h = DMatrix::<f64>::zeros(k, 6);
    let mut innov = DVector::<f64>::zeros(k);
    for (i, (g, y)) in rows.iter().enumerate() {
        for c in 0..3 {
            h[(i, c)] = g[c];
        }
        innov[i] = *y;
    }
    let r = params.range_noise.powi(2);
    let p = DMatrix::from_column_slice(6, 6, s.p.as_slice());
    let mut s_mat = &h * &p * h.transpose();
    for i in 0..k {
        s_mat[(i, i)] += r;
    }
    let s_inv = s_mat
        .cholesky()
        .ok_or_else(|| Error::Degenerate("innovation covariance not positive definite".into()))?
        .inverse();
    let gain = &p * h.transpose() * s_inv;
    let dx = &gain * innov;
    let i_kh = DMatrix::<f64>::identity(6, 6) - &gain * &h;
    let p_new = &i_kh * &p * i_kh.transpose() + &gain * gain.transpose() * r;
    let p_new = (&p_new + p_new.transpose()) * 0.5;

    let mut out = *s;
    for i in 0..6 {
        out.x[i] += dx[i];
    }
    out.p = Matrix6::from_column_slice(p_new.as_slice());
    Ok(UpdateOutcome {
        state: out,
        rows_used: k,
        degraded: false,
    })
}

/// Position fix from one epoch of ranges by Gauss-Newton least squares.
pub fn multilaterate(anchors: &AnchorSet, ranges: &[(usize, f64)], init: Option<Vec3>) -> Result<Vec3> {
    if ranges.len() < 3 {
        return Err(Error::Degenerate("multilateration needs three ranges".into()));
    }
    let used: Vec<(Vec3, f64)> = ranges
        .iter()
        .map(|&(j, d)| {
            anchors
                .get(j)
                .map(|a| (*a, d))
                .ok_or_else(|| Error::InvalidArgument(format!("anchor index {j} out of range")))
        })
        .collect::<Result<_>>()?;
    let centroid = used.iter().map(|(a, _)| a).sum::<Vec3>() / used.len() as f64;
    let mut x = init.unwrap_or(centroid + Vec3::new(0.0, 0.0, 1.0));
    for _ in 0..50 {
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vec3::zeros();
        for (a, d) in &used {
            let diff = x - a;
            let n = diff.norm().max(1e-12);
            let g = diff / n;
            jtj += g * g.transpose();
            jtr += g * (n - d);
        }
        let step = jtj
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("rank-deficient multilateration".into()))?
            * jtr;
        x -= step;
        if step.norm() < 1e-13 {
            break;
        }
    }
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Degenerate("multilateration diverged".into()));
    }
    Ok(x)
}

/// Mean of the two labels rotated into the world frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusedState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub t: f64,
}

pub fn fuse_labels(s1: &EkfState, s2: &EkfState, r_au_w: &Rotation, max_skew: f64) -> Result<FusedState> {
    if (s1.t - s2.t).abs() > max_skew {
        return Err(Error::TimestampMismatch(s1.t, s2.t));
    }
    let mean = (s1.x + s2.x) * 0.5;
    let pos: Vec3 = mean.fixed_rows::<3>(0).into();
    let vel: Vec3 = mean.fixed_rows::<3>(3).into();
    Ok(FusedState {
        position: r_au_w.apply(&pos),
        velocity: r_au_w.apply(&vel),
        t: 0.5 * (s1.t + s2.t),
    })
}

/// Heading from the world-frame label positions, given roll and pitch.
pub fn yaw_from_labels(u1: &Vec3, u2: &Vec3, roll: f64, pitch: f64, baseline: f64) -> Result<f64> {
    if !(baseline > 0.0) {
        return Err(Error::InvalidArgument("baseline must be positive".into()));
    }
    if roll.abs() >= std::f64::consts::FRAC_PI_2 {
        return Err(Error::InvalidArgument("roll must be below 90 degrees".into()));
    }
    let delta = u1 - u2;
    let len = delta.norm();
    if !len.is_finite() {
        return Err(Error::NonFinite("label position"));
    }
    if len < 0.8 * baseline || len > 1.2 * baseline {
        return Err(Error::BaselineGate {
            measured: len,
            nominal: baseline,
        });
    }
    let ss = roll.sin() * pitch.sin();
    let yaw = if ss.abs() < 1e-9 {
        (-delta.x).atan2(delta.y)
    } else {
        let (dx, dy) = (delta.x / baseline, delta.y / baseline);
        let cr = roll.cos();
        let rho1 = dy * ss - dx * cr;
        let rho2 = dx * ss + dy * cr;
        rho1.atan2(rho2)
    };
    Ok(wrap(yaw))
}

/// Output of the two-label pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UwbFix {
    pub position: Vec3,
    pub velocity: Vec3,
    pub yaw: f64,
    /// False while the label-baseline gate is failing and the yaw is held.
    pub yaw_healthy: bool,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UwbSettings {
    pub baseline: f64,
    pub params: EkfParams,
    pub init_position_std: f64,
    pub init_velocity_std: f64,
    pub compensate_platform_motion: bool,
    pub initial_yaw: f64,
}

/// Two label filters plus heading recovery.
#[derive(Debug, Clone)]
pub struct UwbLocalizer {
    anchors: AnchorSet,
    settings: UwbSettings,
    filters: Option<[EkfState; 2]>,
    yaw: f64,
    yaw_healthy: bool,
    history: Vec<Matrix3<f64>>,
}

impl UwbLocalizer {
    pub fn new(anchors: AnchorSet, settings: UwbSettings) -> Result<Self> {
        settings.params.validate()?;
        Ok(Self {
            anchors,
            settings,
            filters: None,
            yaw: settings.initial_yaw,
            yaw_healthy: true,
            history: Vec::with_capacity(3),
        })
    }

    pub fn filters(&self) -> Option<&[EkfState; 2]> {
        self.filters.as_ref()
    }

    pub fn label_offsets(&self) -> [Vec3; 2] {
        let h = self.settings.baseline / 2.0;
        [Vec3::new(0.0, h, 0.0), Vec3::new(0.0, -h, 0.0)]
    }

    /// One epoch: predict with the body acceleration, correct with the
    /// ranges, fuse. Returns `None` until the filters are initialised.
    pub fn step(
        &mut self,
        ranges: &[RangeMeasurement],
        a_body: &Vec3,
        roll: f64,
        pitch: f64,
        platform: &EulerAngles,
        t: f64,
    ) -> Result<Option<UwbFix>> {
        let r_a_w = platform.rotation();
        let m = *r_a_w.inverse().matrix();
        self.history.push(m);
        if self.history.len() > 3 {
            self.history.remove(0);
        }
        let per_label: [Vec<(usize, f64)>; 2] = std::array::from_fn(|l| {
            ranges
                .iter()
                .filter(|r| r.label == l)
                .map(|r| (r.anchor, r.range))
                .collect()
        });
        let period = self.settings.params.period;

        let filters = match self.filters {
            Some(f) => {
                let r_b_w = EulerAngles::new(roll, pitch, self.yaw).rotation();
                let a_w = r_b_w.apply(a_body);
                let (m_dot, m_ddot) = self.frame_derivatives(period);
                let mut next = f;
                for (l, state) in next.iter_mut().enumerate() {
                    let mut a_u = m * a_w;
                    if self.settings.compensate_platform_motion {
                        let p_w = m.transpose() * state.position();
                        let v_w = m.transpose() * (state.velocity() - m_dot * p_w);
                        a_u += 2.0 * m_dot * v_w + m_ddot * p_w;
                    }
                    let mut pred = ekf_predict_platform(state, &a_u, &self.settings.params)?;
                    pred.t = t;
                    *state = ekf_update(&pred, &per_label[l], &self.anchors, &self.settings.params)?.state;
                }
                next
            }
            None => {
                if per_label.iter().any(|r| r.len() < 4) {
                    return Ok(None);
                }
                let mut init = [EkfState::new(Vec3::zeros(), Vec3::zeros(), 1.0, 1.0, t); 2];
                for l in 0..2 {
                    let guess = m * Vec3::new(0.0, 0.0, 1.0);
                    let u = multilaterate(&self.anchors, &per_label[l], Some(guess))?;
                    init[l] = EkfState::new(
                        u,
                        Vec3::zeros(),
                        self.settings.init_position_std,
                        self.settings.init_velocity_std,
                        t,
                    );
                }
                init
            }
        };
        self.filters = Some(filters);

        let fused = fuse_labels(&filters[0], &filters[1], &r_a_w, period / 2.0)?;
        let (m_dot, _) = self.frame_derivatives(period);
        let velocity = fused.velocity - m.transpose() * (m_dot * fused.position);
        let w1 = r_a_w.apply(&filters[0].position());
        let w2 = r_a_w.apply(&filters[1].position());
        match yaw_from_labels(&w1, &w2, roll, pitch, self.settings.baseline) {
            Ok(yaw) => {
                self.yaw = yaw;
                self.yaw_healthy = true;
            }
            Err(Error::BaselineGate { .. }) => self.yaw_healthy = false,
            Err(e) => return Err(e),
        }
        Ok(Some(UwbFix {
            position: fused.position,
            velocity: if self.settings.compensate_platform_motion {
                velocity
            } else {
                fused.velocity
            },
            yaw: self.yaw,
            yaw_healthy: self.yaw_healthy,
            t,
        }))
    }

    /// Backward differences of the world-to-platform rotation.
    fn frame_derivatives(&self, period: f64) -> (Matrix3<f64>, Matrix3<f64>) {
        let h = &self.history;
        match h.len() {
            3 => (
                (h[2] - h[1]) / period,
                (h[2] - 2.0 * h[1] + h[0]) / (period * period),
            ),
            2 => ((h[1] - h[0]) / period, Matrix3::zeros()),
            _ => (Matrix3::zeros(), Matrix3::zeros()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params() -> EkfParams {
        EkfParams {
            jerk_noise: 1.0,
            range_noise: 0.1,
            period: 0.02,
        }
    }

    fn anchors() -> AnchorSet {
        AnchorSet::new(
            [
                [1.7, 2.4, 0.2],
                [1.7, -2.4, 0.2],
                [-1.7, 2.4, 0.2],
                [-1.7, -2.4, 0.2],
                [-1.7, 0.8, 3.7],
                [-1.7, -0.8, 3.7],
            ]
            .iter()
            .map(|a| Vec3::from(*a))
            .collect(),
        )
        .unwrap()
    }

    #[test]
    fn anchor_set_guards() {
        let line = vec![Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)];
        assert!(AnchorSet::new(line).is_err());
        assert!(AnchorSet::new(vec![Vec3::zeros(), Vec3::x()]).is_err());
        assert_eq!(anchors().len(), 6);
    }

    #[test]
    fn stationary_prediction() {
        let s = EkfState::new(Vec3::new(1.0, 2.0, 3.0), Vec3::zeros(), 0.5, 0.5, 0.0);
        let n = ekf_predict_platform(&s, &Vec3::zeros(), &params()).unwrap();
        assert_eq!(n.position(), s.position());
        assert!(n.p[(0, 0)] > s.p[(0, 0)]);
    }

    #[test]
    fn acceleration_enters_through_b() {
        let s = EkfState::new(Vec3::zeros(), Vec3::zeros(), 0.5, 0.5, 0.0);
        let n = ekf_predict_platform(&s, &Vec3::x(), &params()).unwrap();
        assert_abs_diff_eq!(n.position().x, 2e-4, epsilon = 1e-15);
        assert_abs_diff_eq!(n.velocity().x, 0.02, epsilon = 1e-15);
    }

    #[test]
    fn constant_velocity_telescopes() {
        let mut s = EkfState::new(Vec3::zeros(), Vec3::x(), 0.5, 0.5, 0.0);
        for _ in 0..50 {
            s = ekf_predict_platform(&s, &Vec3::zeros(), &params()).unwrap();
        }
        assert_abs_diff_eq!(s.position().x, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rotated_body_acceleration() {
        let s = EkfState::new(Vec3::zeros(), Vec3::zeros(), 0.5, 0.5, 0.0);
        let yaw = EulerAngles::yaw_only(std::f64::consts::FRAC_PI_2).rotation();
        let n = ekf_predict(&s, &Vec3::x(), &yaw, &Rotation::identity(), &params()).unwrap();
        assert_abs_diff_eq!(n.position().y, 2e-4, epsilon = 1e-15);
        assert!(ekf_predict(&s, &Vec3::new(f64::NAN, 0.0, 0.0), &yaw, &yaw, &params()).is_err());
    }

    #[test]
    fn zero_innovation_leaves_mean() {
        let truth = Vec3::new(0.3, -0.4, 1.5);
        let s = EkfState::new(truth, Vec3::zeros(), 0.5, 0.5, 0.0);
        let a = anchors();
        let ranges: Vec<_> = a.iter().enumerate().map(|(j, x)| (j, (truth - x).norm())).collect();
        let out = ekf_update(&s, &ranges, &a, &params()).unwrap();
        assert_abs_diff_eq!(out.state.x, s.x, epsilon = 1e-12);
        assert_eq!(out.rows_used, 6);
    }

    #[test]
    fn singular_rows_dropped() {
        let a = anchors();
        let at = *a.get(0).unwrap();
        let s = EkfState::new(at, Vec3::zeros(), 0.5, 0.5, 0.0);
        let out = ekf_update(&s, &[(0, 0.0)], &a, &params()).unwrap();
        assert!(out.degraded);
        assert_eq!(out.state, s);
    }

    #[test]
    fn fuse_examples() {
        let s = EkfState::new(Vec3::new(1.0, 2.0, 3.0), Vec3::x(), 0.5, 0.5, 1.0);
        let f = fuse_labels(&s, &s, &Rotation::identity(), 0.01).unwrap();
        assert_eq!(f.position, s.position());

        let a = EkfState::new(Vec3::new(0.0, 1.0, 0.0), Vec3::zeros(), 0.5, 0.5, 1.0);
        let b = EkfState::new(Vec3::new(0.0, -1.0, 0.0), Vec3::zeros(), 0.5, 0.5, 1.0);
        let f = fuse_labels(&a, &b, &Rotation::identity(), 0.01).unwrap();
        assert_eq!(f.position, Vec3::zeros());

        let c = EkfState::new(Vec3::new(0.0, 1.0, 2.0), Vec3::zeros(), 0.5, 0.5, 1.0);
        let roll = EulerAngles::new(10f64.to_radians(), 0.0, 0.0).rotation();
        let f = fuse_labels(&c, &c, &roll, 0.01).unwrap();
        assert_abs_diff_eq!(f.position, roll.apply(&c.position()), epsilon = 1e-15);

        let late = EkfState { t: 1.5, ..c };
        assert!(matches!(
            fuse_labels(&c, &late, &roll, 0.01),
            Err(Error::TimestampMismatch(..))
        ));
    }

    #[test]
    fn yaw_examples() {
        let d = 0.8;
        let y = yaw_from_labels(&Vec3::new(0.0, d, 0.0), &Vec3::zeros(), 0.0, 0.0, d).unwrap();
        assert_abs_diff_eq!(y, 0.0);
        let y = yaw_from_labels(&Vec3::new(-d, 0.0, 0.0), &Vec3::zeros(), 0.0, 0.0, d).unwrap();
        assert_abs_diff_eq!(y, std::f64::consts::FRAC_PI_2);
        let r = EulerAngles::new(0.1, -0.2, 0.7).rotation();
        let delta = r.apply(&Vec3::new(0.0, d, 0.0));
        let y = yaw_from_labels(&delta, &Vec3::zeros(), 0.1, -0.2, d).unwrap();
        assert_abs_diff_eq!(y, 0.7, epsilon = 1e-12);
        assert!(matches!(
            yaw_from_labels(&Vec3::new(0.0, 2.0, 0.0), &Vec3::zeros(), 0.0, 0.0, d),
            Err(Error::BaselineGate { .. })
        ));
    }

    #[test]
    fn multilateration_recovers_point() {
        let a = anchors();
        let truth = Vec3::new(4.0, 1.0, 5.0);
        let ranges: Vec<_> = a.iter().enumerate().map(|(j, x)| (j, (truth - x).norm())).collect();
        let p = multilaterate(&a, &ranges, None).unwrap();
        assert_abs_diff_eq!(p, truth, epsilon = 1e-9);
    }
}
