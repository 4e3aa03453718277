//! Potential-flow wake kernels: regularized vortex filaments, the horseshoe
//! vortex (bound head + two semi-infinite legs), optimal-offset geometry,
//! span-averaged upwash, lifting-line drag accounting, and the mapping from
//! sampled external flow to the exogenous disturbance w.
//!
//! Axes follow the aircraft state convention: x forward, z positive down.
//! Upwash is airflow in −z, so "positive upwash" means v_z < 0 here; the
//! drag-formula convention (w upward-positive) is converted locally in
//! [`span_averaged_upwash`].

use crate::linmodel::{AircraftParams, LtiModel};
use crate::scalar::Real;
use crate::{Error, Result, Scalar, Vec12, Vec3};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Straight finite vortex filament with a Rankine-style core regularization.
#[derive(Debug, Clone, Copy)]
pub struct VortexFilament<T: Real> {
    pub p1: Vector3<T>,
    pub p2: Vector3<T>,
    pub circulation: T,
    pub core_radius: T,
}

impl<T: Real> VortexFilament<T> {
    pub fn new(p1: Vector3<T>, p2: Vector3<T>, circulation: T, core_radius: T) -> Result<Self> {
        if p1 == p2 {
            return Err(Error::Domain("filament endpoints coincide".into()));
        }
        if core_radius < T::zero() {
            return Err(Error::Domain("negative core radius".into()));
        }
        Ok(Self { p1, p2, circulation, core_radius })
    }

    /// Induced velocity at p (regularized Biot–Savart for a straight segment).
    /// Positive circulation flows from `p2` toward `p1`.
    pub fn velocity(&self, p: Vector3<T>) -> Vector3<T> {
        let r0 = self.p1 - self.p2;
        let r1 = p - self.p2;
        let r2 = p - self.p1;
        let cx = r1.cross(&r2);
        let cx2 = cx.dot(&cx);
        let n1 = Float::sqrt(r1.dot(&r1));
        let n2 = Float::sqrt(r2.dot(&r2));
        if cx2 == T::zero() || n1 == T::zero() || n2 == T::zero() {
            return Vector3::zeros();
        }
        // |cx|/|r0| is the perpendicular distance ρ to the carrying line, so
        // rc²·|r0|² in the denominator realizes the same ρ²/(ρ²+rc²) core
        // factor the semi-infinite legs use.
        let rc_r0 = self.core_radius * self.core_radius * r0.dot(&r0);
        let four_pi = T::from_f64(4.0 * std::f64::consts::PI).unwrap();
        cx * (self.circulation / four_pi / (cx2 + rc_r0)
            * (r0.dot(&r1) / n1 - r0.dot(&r2) / n2))
    }
}

/// Horseshoe vortex: bound head at `head`, legs trailing in −x from
/// `head ∓ ĵ·d/2`.
#[derive(Debug, Clone, Copy)]
pub struct HorseshoeVortex<T: Real> {
    pub head: Vector3<T>,
    pub leg_spacing: T,
    pub circulation: T,
    pub core_radius: T,
}

impl<T: Real> HorseshoeVortex<T> {
    pub fn new(head: Vector3<T>, leg_spacing: T, circulation: T, core_radius: T) -> Result<Self> {
        if leg_spacing <= T::zero() || core_radius <= T::zero() {
            return Err(Error::Domain("horseshoe needs d > 0 and r_c > 0".into()));
        }
        Ok(Self { head, leg_spacing, circulation, core_radius })
    }

    /// Default wake geometry shed by an aircraft of span b: d = bπ/4,
    /// r_c = 0.05 b.
    pub fn for_span(head: Vector3<T>, span: T, circulation: T) -> Self {
        let quarter_pi = T::from_f64(std::f64::consts::FRAC_PI_4).unwrap();
        let rc = T::from_f64(0.05).unwrap() * span;
        Self { head, leg_spacing: span * quarter_pi, circulation, core_radius: rc }
    }

    pub fn left_leg_origin(&self) -> Vector3<T> {
        self.head - Vector3::new(T::zero(), self.leg_spacing / (T::one() + T::one()), T::zero())
    }

    pub fn right_leg_origin(&self) -> Vector3<T> {
        self.head + Vector3::new(T::zero(), self.leg_spacing / (T::one() + T::one()), T::zero())
    }

    /// Total induced velocity: head + left leg + right leg.
    pub fn velocity(&self, p: Vector3<T>) -> Vector3<T> {
        // p1 = right, p2 = left gives the physical bound-vortex sense
        // (downwash behind the head) with Eq. vortexFilament's role of r0.
        let head = VortexFilament {
            p1: self.right_leg_origin(),
            p2: self.left_leg_origin(),
            circulation: self.circulation,
            core_radius: self.core_radius,
        };
        head.velocity(p) + self.leg_velocity(p, self.left_leg_origin(), true)
            + self.leg_velocity(p, self.right_leg_origin(), false)
    }

    /// Semi-infinite leg from `origin` trailing in −x. Closed form of the
    /// Biot–Savart integral with the same core regularization as the head.
    fn leg_velocity(&self, p: Vector3<T>, origin: Vector3<T>, left: bool) -> Vector3<T> {
        let dx = p.x - origin.x;
        let dy = p.y - origin.y;
        let dz = p.z - origin.z;
        let rho2 = dy * dy + dz * dz;
        let dist = Float::sqrt(dx * dx + rho2);
        let four_pi = T::from_f64(4.0 * std::f64::consts::PI).unwrap();
        let fac = T::one() - dx / dist;
        let scale = self.circulation / four_pi / (self.core_radius * self.core_radius + rho2) * fac;
        let dir = Vector3::new(T::zero(), -dz, dy);
        let signed = if left { scale } else { -scale };
        dir * signed
    }
}

use num_traits::Float;

/// Nominal follower offset from its leader: (10b, b(1+π/4)/2, 0).
pub fn optimal_offset(params: &AircraftParams) -> Vec3 {
    let b = params.wingspan_m;
    Vec3::new(10.0 * b, b * (1.0 + std::f64::consts::FRAC_PI_4) / 2.0, 0.0)
}

/// Wake transport delay for a streamwise separation at the given speed.
pub fn wake_delay(streamwise_separation: Scalar, speed: Scalar) -> Result<Scalar> {
    if speed <= 0.0 {
        return Err(Error::Domain("wake_delay needs speed > 0".into()));
    }
    Ok(streamwise_separation / speed)
}

/// Mean upwash (upward-positive) over n equally spaced spanwise stations at
/// the wing center's x, z.
pub fn span_averaged_upwash(
    h: &HorseshoeVortex<Scalar>,
    wing_center: Vec3,
    span: Scalar,
    n_stations: usize,
) -> Result<Scalar> {
    if n_stations < 2 {
        return Err(Error::Domain("span_averaged_upwash needs ≥ 2 stations".into()));
    }
    let mut acc = 0.0;
    for k in 0..n_stations {
        let t = k as Scalar / (n_stations - 1) as Scalar - 0.5;
        let p = wing_center + Vec3::new(0.0, t * span, 0.0);
        acc += -h.velocity(p).z; // z-down → upward-positive
    }
    Ok(acc / n_stations as Scalar)
}

/// Elliptic-wing drag coefficient with external upwash w (upward-positive).
pub fn drag_coefficient(
    cl: Scalar,
    cd0: Scalar,
    aspect_ratio: Scalar,
    upwash: Scalar,
    speed: Scalar,
) -> Result<Scalar> {
    if speed <= 0.0 || aspect_ratio <= 0.0 {
        return Err(Error::Domain("drag_coefficient needs U > 0 and AR > 0".into()));
    }
    Ok(cd0 + cl * cl / (std::f64::consts::PI * aspect_ratio) - cl * upwash / speed)
}

/// One sampled flow velocity at a labeled surface station.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GustSample {
    pub station: StationId,
    pub position: [Scalar; 3],
    pub velocity: [Scalar; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StationId {
    LeftTip,
    RightTip,
    /// Interior wing station (spanwise index).
    Wing(u32),
    Center,
    Tail,
}

/// Geometry knobs for the disturbance mapping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationGeometry {
    /// x-distance from wing to tail (m); the paper does not print it.
    pub tail_arm_m: Scalar,
    pub wingspan_m: Scalar,
}

impl Default for StationGeometry {
    fn default() -> Self {
        StationGeometry { tail_arm_m: 18.0, wingspan_m: 34.1 }
    }
}

/// Maps sampled external flow to the exogenous disturbance w of Eq. dyn.
///
/// The gust enters as relative airspeed: the aerodynamic (acceleration) rows
/// of A act on v − u_gust, so w = −A_vel·u_cg − A_rate·ω_eff restricted to
/// those rows. The kinematic rows (ṗ = v, attitude rates) describe inertial
/// bookkeeping, not aerodynamics, and carry no gust term — extending the
/// correction to them would make positions integrate airspeed and break the
/// steady state of any velocity-integrating controller.
///
/// ω_eff = (p_eff, q_eff, 0): p_eff is the spanwise upwash gradient expressed
/// as a roll rate — the least-squares slope of v_z across the wing stations,
/// which reduces to (v_z,left − v_z,right)/b for the minimal tip/center
/// station set — and q_eff = (v_z,tail − v_z,wing)/tail_arm.
pub fn gust_to_disturbance(
    model: &LtiModel,
    samples: &[GustSample],
    geom: &StationGeometry,
) -> Result<Vec12> {
    let mut wing: Vec<&GustSample> = Vec::new();
    let mut tail: Option<&GustSample> = None;
    let (mut saw_left, mut saw_right, mut saw_center) = (false, false, false);
    for s in samples {
        match s.station {
            StationId::Tail => tail = Some(s),
            StationId::LeftTip => {
                saw_left = true;
                wing.push(s);
            }
            StationId::RightTip => {
                saw_right = true;
                wing.push(s);
            }
            StationId::Center => {
                saw_center = true;
                wing.push(s);
            }
            StationId::Wing(_) => wing.push(s),
        }
    }
    let tail = tail.ok_or_else(|| Error::Config("missing tail station".into()))?;
    if !(saw_left && saw_right && saw_center) {
        return Err(Error::Config("missing wingtip/center station".into()));
    }

    let nw = wing.len() as Scalar;
    let mut u_cg = Vec3::zeros();
    for s in &wing {
        u_cg += Vec3::from_column_slice(&s.velocity);
    }
    u_cg /= nw;

    // Least-squares slope of v_z over spanwise position.
    let ybar: Scalar = wing.iter().map(|s| s.position[1]).sum::<Scalar>() / nw;
    let mut syy = 0.0;
    let mut syv = 0.0;
    let mut vz_wing = 0.0;
    for s in &wing {
        let dy = s.position[1] - ybar;
        syy += dy * dy;
        syv += dy * s.velocity[2];
        vz_wing += s.velocity[2];
    }
    vz_wing /= nw;
    if syy <= 0.0 {
        return Err(Error::Config("wing stations are spanwise degenerate".into()));
    }
    // (v_z,left − v_z,right)/b = −slope when the field is linear in y.
    let p_eff = -syv / syy;
    let q_eff = (tail.velocity[2] - vz_wing) / geom.tail_arm_m;

    let omega = Vec3::new(p_eff, q_eff, 0.0);
    let mut w = Vec12::zeros();
    for &row in ACCEL_ROWS.iter() {
        let mut acc = 0.0;
        for k in 0..3 {
            acc -= model.a[(row, 3 + k)] * u_cg[k];
            acc -= model.a[(row, 9 + k)] * omega[k];
        }
        w[row] = acc;
    }
    Ok(w)
}

/// Acceleration (aerodynamic-force) rows of the 12-state model:
/// ẍ, ÿ, z̈ and the three angular accelerations.
pub const ACCEL_ROWS: [usize; 6] = [3, 4, 5, 9, 10, 11];

/// Brute-force Biot–Savart quadrature of the horseshoe with legs truncated at
/// `leg_length`; the reference oracle for [`HorseshoeVortex::velocity`].
///
/// The vortex line runs up the left leg (+x), across the head (left → right),
/// and down the right leg (−x). Each element contributes the standard
/// Biot–Savart dV = Γ/4π (dl × r)/|r|³, scaled by the same ρ²/(r_c²+ρ²) core
/// factor the closed forms use (ρ = perpendicular distance to the carrying
/// line), so that the analytic integration — not the regularization model —
/// is what gets cross-checked.
pub fn horseshoe_quadrature(h: &HorseshoeVortex<Scalar>, p: Vec3, leg_length: Scalar) -> Vec3 {
    let left = h.left_leg_origin();
    let right = h.right_leg_origin();
    let gamma = h.circulation / (4.0 * std::f64::consts::PI);
    let rc2 = h.core_radius * h.core_radius;

    // Head: finite segment from left to right, parametrized by t ∈ [0, d].
    let head_dir = Vec3::new(0.0, 1.0, 0.0);
    let head_f = |t: Scalar| -> Vec3 {
        let q = left + head_dir * t;
        let r = p - q;
        let n = r.norm();
        if n == 0.0 {
            return Vec3::zeros();
        }
        head_dir.cross(&r) / (n * n * n)
    };
    let rho2_head = (p.x - left.x).powi(2) + (p.z - left.z).powi(2);
    let head_core = rho2_head / (rc2 + rho2_head);
    let mut v = simpson_vec(&head_f, 0.0, h.leg_spacing, 1e-12) * (gamma * head_core);

    // Legs: ρ (lateral distance) is constant along each leg.
    for (origin, dl) in [(left, Vec3::new(1.0, 0.0, 0.0)), (right, Vec3::new(-1.0, 0.0, 0.0))] {
        let rho2 = (p.y - origin.y).powi(2) + (p.z - origin.z).powi(2);
        let core = rho2 / (rc2 + rho2);
        let f = |xi: Scalar| -> Vec3 {
            let q = Vec3::new(origin.x - xi, origin.y, origin.z);
            let r = p - q;
            let n = r.norm();
            if n == 0.0 {
                return Vec3::zeros();
            }
            dl.cross(&r) / (n * n * n)
        };
        // Split at the closest streamwise approach to keep Simpson happy.
        let xi_near = (origin.x - p.x).clamp(0.0, leg_length);
        let mut leg = Vec3::zeros();
        for (a, b) in [(0.0, xi_near), (xi_near, leg_length)] {
            if b > a {
                leg += simpson_vec(&f, a, b, 1e-13);
            }
        }
        v += leg * (gamma * core);
    }
    v
}

/// Adaptive Simpson quadrature of a vector-valued function.
fn simpson_vec(f: &dyn Fn(Scalar) -> Vec3, a: Scalar, b: Scalar, tol: Scalar) -> Vec3 {
    fn recurse(
        f: &dyn Fn(Scalar) -> Vec3,
        a: Scalar,
        b: Scalar,
        fa: Vec3,
        fm: Vec3,
        fb: Vec3,
        whole: Vec3,
        tol: Scalar,
        depth: u32,
    ) -> Vec3 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (fa + flm * 4.0 + fm) * ((m - a) / 6.0);
        let right = (fm + frm * 4.0 + fb) * ((b - m) / 6.0);
        let both = left + right;
        if depth == 0 || (both - whole).norm() < 15.0 * tol {
            both + (both - whole) / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = (fa + fm * 4.0 + fb) * ((b - a) / 6.0);
    recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Full wake-station sampling for one follower: `n_wing` spanwise stations
/// (includes both tips and the center when odd) plus one tail station.
pub fn follower_stations(
    center: Vec3,
    span: Scalar,
    tail_arm: Scalar,
    n_wing: usize,
) -> Vec<(StationId, Vec3)> {
    let mut out = Vec::with_capacity(n_wing + 1);
    for k in 0..n_wing {
        let t = k as Scalar / (n_wing - 1) as Scalar - 0.5;
        let pos = center + Vec3::new(0.0, t * span, 0.0);
        let id = if k == 0 {
            StationId::LeftTip
        } else if k == n_wing - 1 {
            StationId::RightTip
        } else if 2 * k == n_wing - 1 || (n_wing % 2 == 1 && k == n_wing / 2) {
            StationId::Center
        } else {
            StationId::Wing(k as u32)
        };
        out.push((id, pos));
    }
    out.push((StationId::Tail, center + Vec3::new(-tail_arm, 0.0, 0.0)));
    out
}
