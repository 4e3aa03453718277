//! Time-domain cascade simulation: n aircraft in a staggered line, each
//! feeling its immediate leader's delayed wake, optional frozen turbulence,
//! fixed-step RK4, energy accounting and amplification diagnostics.

use std::collections::VecDeque;

use crate::control::{structured_control, Controller, ControllerState};
use crate::linmodel::{AircraftParams, LtiModel};
use crate::turb::TurbulenceField;
use crate::wake::{
    follower_stations, gust_to_disturbance, optimal_offset, GustSample, HorseshoeVortex,
    StationGeometry, StationId,
};
use crate::{DVec, Error, Result, Scalar, Vec3};
use serde::{Deserialize, Serialize};

/// Wake transport delay at the nominal 10b separation (s). Frozen even as
/// x-errors fluctuate: the streamwise geometry is held at the trim values.
pub const WAKE_DELAY_S: Scalar = 1.48;

#[derive(Debug, Clone)]
pub struct FormationScenario {
    pub n_aircraft: usize,
    /// Nominal leader→follower offset (m); defaults to [`optimal_offset`].
    pub delta_ref: Vec3,
    pub controller: Controller,
    /// Time headway h (s): reference spacing δ_ref + h·v.
    pub time_headway_s: Scalar,
    /// Per-aircraft initial 12-state perturbations; empty = all zero.
    pub initial_perturbations: Vec<[Scalar; 12]>,
    /// Gust RMS as a fraction of cruise speed.
    pub turbulence_intensity: Scalar,
    pub turbulence_length_m: Scalar,
    /// Spatial resolution of the frozen gust field (m).
    pub turbulence_dx_m: Scalar,
    pub duration_s: Scalar,
    pub dt_s: Scalar,
    pub seed: u64,
    pub wake_enabled: bool,
    /// Spanwise stations for wake/gust sampling (odd keeps a center station).
    pub n_wing_stations: usize,
    /// Record every k-th step (1 = every step).
    pub record_stride: usize,
}

impl FormationScenario {
    pub fn new(n_aircraft: usize, controller: Controller, params: &AircraftParams) -> Self {
        FormationScenario {
            n_aircraft,
            delta_ref: optimal_offset(params),
            controller,
            time_headway_s: 0.0,
            initial_perturbations: Vec::new(),
            turbulence_intensity: 0.0,
            turbulence_length_m: 762.0,
            turbulence_dx_m: 2.0,
            duration_s: 60.0,
            dt_s: 0.01,
            seed: 0,
            wake_enabled: true,
            n_wing_stations: 17,
            record_stride: 1,
        }
    }

    /// Fig.-prev style perturbation: lateral offset on the lead aircraft.
    pub fn with_leader_lateral(mut self, offset_m: Scalar) -> Self {
        if self.initial_perturbations.len() < self.n_aircraft {
            self.initial_perturbations
                .resize(self.n_aircraft, [0.0; 12]);
        }
        self.initial_perturbations[0][1] += offset_m;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_aircraft < 1 {
            return Err(Error::Config("n_aircraft must be ≥ 1".into()));
        }
        if !(self.dt_s > 0.0) || self.duration_s < self.dt_s {
            return Err(Error::Config("need dt > 0 and duration ≥ dt".into()));
        }
        if !self.initial_perturbations.is_empty()
            && self.initial_perturbations.len() != self.n_aircraft
        {
            return Err(Error::Config(
                "initial_perturbations must be empty or one per aircraft".into(),
            ));
        }
        if self.time_headway_s < 0.0 || self.turbulence_intensity < 0.0 {
            return Err(Error::Config("headway and intensity must be ≥ 0".into()));
        }
        if self.n_wing_stations < 3 || self.n_wing_stations % 2 == 0 {
            return Err(Error::Config("n_wing_stations must be odd and ≥ 3".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::Config("record_stride must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// Ring buffer of timestamped samples; `read(t)` returns the value at t − τ
/// with linear interpolation, clamped to the oldest sample before history
/// starts.
#[derive(Debug, Clone)]
pub struct DelayLine {
    tau_s: Scalar,
    buf: VecDeque<(Scalar, Vec3)>,
}

impl DelayLine {
    pub fn new(tau_s: Scalar, t0: Scalar, initial: Vec3) -> Result<DelayLine> {
        if tau_s < 0.0 {
            return Err(Error::Domain("delay must be ≥ 0".into()));
        }
        let mut buf = VecDeque::new();
        buf.push_back((t0, initial));
        Ok(DelayLine { tau_s, buf })
    }

    pub fn tau(&self) -> Scalar {
        self.tau_s
    }

    /// Appends a sample; `t` must be monotone increasing. Samples that can no
    /// longer be read are pruned.
    pub fn push(&mut self, t: Scalar, v: Vec3) {
        debug_assert!(self.buf.back().map(|&(tb, _)| t > tb).unwrap_or(true));
        self.buf.push_back((t, v));
        // Keep one sample at or before every future read time t' − τ ≥ t − τ.
        while self.buf.len() > 2 && self.buf[1].0 <= t - self.tau_s {
            self.buf.pop_front();
        }
    }

    pub fn read(&self, t: Scalar) -> Vec3 {
        let tq = t - self.tau_s;
        let (t0, v0) = self.buf[0];
        if tq <= t0 {
            return v0;
        }
        for k in 1..self.buf.len() {
            let (t1, v1) = self.buf[k];
            if tq <= t1 {
                let (ta, va) = self.buf[k - 1];
                let f = (tq - ta) / (t1 - ta);
                return va + (v1 - va) * f;
            }
        }
        self.buf.back().unwrap().1
    }
}

/// Per-aircraft recorded series; all vectors share `SimTrace::t`'s length.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AircraftTrace {
    pub state: Vec<[Scalar; 12]>,
    pub control: Vec<[Scalar; 4]>,
    /// Separation error e_i = p_{i−1} − p_i − δ_ref; for i = 0 the leader's
    /// own regulation error −p_0 (all in trim-deviation coordinates).
    pub err: Vec<[Scalar; 3]>,
    pub thrust_change_n: Vec<Scalar>,
    pub thrust_change_pct: Vec<Scalar>,
    /// Mean wake upwash over the wing stations (m/s, upward-positive).
    pub upwash_ms: Vec<Scalar>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimTrace {
    pub t: Vec<Scalar>,
    pub dt_s: Scalar,
    pub aircraft: Vec<AircraftTrace>,
}

impl SimTrace {
    pub fn n_aircraft(&self) -> usize {
        self.aircraft.len()
    }

    pub fn duration(&self) -> Scalar {
        self.t.last().copied().unwrap_or(0.0)
    }

    /// Long CSV: t, aircraft_id, 12 states, 4 controls, e_y, e_z, e_x, dT_pct.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("t,aircraft_id");
        for k in 0..12 {
            out.push_str(&format!(",x{k}"));
        }
        out.push_str(",dT,da,de,dr,e_y,e_z,e_x,dT_pct\n");
        for (k, &t) in self.t.iter().enumerate() {
            for (i, ac) in self.aircraft.iter().enumerate() {
                out.push_str(&format!("{t:.4},{i}"));
                for v in ac.state[k] {
                    out.push_str(&format!(",{v:.6e}"));
                }
                for v in ac.control[k] {
                    out.push_str(&format!(",{v:.6e}"));
                }
                let e = ac.err[k];
                out.push_str(&format!(
                    ",{:.6e},{:.6e},{:.6e},{:.4}\n",
                    e[1], e[2], e[0], ac.thrust_change_pct[k]
                ));
            }
        }
        out
    }
}

fn extra_states(c: &Controller) -> usize {
    match c {
        Controller::Lqr(_) => 0,
        Controller::LqrIntegral(_) => 3,
        Controller::Structured(_) => 6,
    }
}

fn control_law(c: &Controller, x: &DVec, e_eff: Vec3) -> [Scalar; 4] {
    match c {
        Controller::Lqr(g) => {
            let mut xt = DVec::zeros(12);
            xt.rows_mut(0, 12).copy_from(&x.rows(0, 12));
            for k in 0..3 {
                xt[k] = -e_eff[k];
            }
            let u = -(&g.k * xt);
            [u[0], u[1], u[2], u[3]]
        }
        Controller::LqrIntegral(g) => {
            let mut xt = DVec::zeros(15);
            xt.rows_mut(0, 15).copy_from(&x.rows(0, 15));
            for k in 0..3 {
                xt[k] = -e_eff[k];
            }
            let u = -(&g.k * xt);
            [u[0], u[1], u[2], u[3]]
        }
        Controller::Structured(g) => {
            let v = Vec3::new(x[3], x[4], x[5]);
            let alpha = x.rows(6, 6).into_owned();
            let cs = ControllerState {
                int_e: Vec3::new(x[12], x[13], x[14]),
                int_v: Vec3::new(x[15], x[16], x[17]),
            };
            structured_control(g, e_eff, v, &alpha, &cs)
        }
    }
}

struct SimContext<'a> {
    model: &'a LtiModel,
    sc: &'a FormationScenario,
    geom: StationGeometry,
    /// Station template centered at the origin (wing + tail).
    stations: Vec<(StationId, Vec3)>,
    turb: Option<TurbulenceField>,
    /// Per-aircraft streamwise base coordinate in the frozen gust field.
    bases: Vec<Scalar>,
    speed: Scalar,
    span: Scalar,
    circulation: Scalar,
}

impl SimContext<'_> {
    /// Exogenous disturbance for aircraft i: leader wake (delayed geometry)
    /// plus frozen-field gusts, mapped through gust_to_disturbance. Also
    /// returns the mean wake upwash (upward-positive) for the energy record.
    fn disturbance(
        &self,
        i: usize,
        t: Scalar,
        fdev: Vec3,
        leader_delayed: Option<Vec3>,
    ) -> Result<(DVec, Scalar)> {
        let mut w = DVec::zeros(12);
        let mut upwash = 0.0;
        let wake_vortex = leader_delayed.map(|ld| {
            // Head frozen at the nominal streamwise offset; lateral/vertical
            // geometry follows the leader's delayed deviation.
            let head = Vec3::new(self.delta_x(), self.sc.delta_ref.y + ld.y, ld.z);
            HorseshoeVortex::for_span(head, self.span, self.circulation)
        });
        if wake_vortex.is_none() && self.turb.is_none() {
            return Ok((w, upwash));
        }
        let mut samples = Vec::with_capacity(self.stations.len());
        let mut n_wing = 0usize;
        for &(id, p0) in &self.stations {
            let p = Vec3::new(p0.x, p0.y + fdev.y, p0.z + fdev.z);
            let mut vel = Vec3::zeros();
            if let Some(hv) = &wake_vortex {
                let vw = hv.velocity(p);
                if id != StationId::Tail {
                    upwash += -vw.z;
                    n_wing += 1;
                }
                vel += vw;
            }
            if let Some(f) = &self.turb {
                let xi = self.bases[i] + self.speed * t + p0.x + fdev.x;
                vel += f.sample(xi)?;
            }
            samples.push(GustSample {
                station: id,
                position: [p.x, p.y, p.z],
                velocity: [vel.x, vel.y, vel.z],
            });
        }
        if n_wing > 0 {
            upwash /= n_wing as Scalar;
        }
        let w12 = gust_to_disturbance(self.model, &samples, &self.geom)?;
        for k in 0..12 {
            w[k] = w12[k];
        }
        Ok((w, upwash))
    }

    fn delta_x(&self) -> Scalar {
        self.sc.delta_ref.x
    }
}

type Derivs = Vec<DVec>;

fn derivatives(
    ctx: &SimContext,
    states: &[DVec],
    delays: &[DelayLine],
    t: Scalar,
) -> Result<Derivs> {
    let sc = ctx.sc;
    let n = sc.n_aircraft;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let x = &states[i];
        let p_i = Vec3::new(x[0], x[1], x[2]);
        let v_i = Vec3::new(x[3], x[4], x[5]);
        let e = if i == 0 {
            -p_i
        } else {
            let xl = &states[i - 1];
            Vec3::new(xl[0], xl[1], xl[2]) - p_i
        };
        let e_eff = e - v_i * sc.time_headway_s;
        let u = control_law(&sc.controller, x, e_eff);

        let leader_delayed = if sc.wake_enabled && i > 0 {
            Some(delays[i - 1].read(t))
        } else {
            None
        };
        let (w, _) = ctx.disturbance(i, t, p_i, leader_delayed)?;

        let mut dx = DVec::zeros(x.len());
        {
            let x12 = x.rows(0, 12).into_owned();
            let u_v = DVec::from_column_slice(&u);
            let d12 = &ctx.model.a * x12 + &ctx.model.b * u_v + w;
            dx.rows_mut(0, 12).copy_from(&d12);
        }
        match &sc.controller {
            Controller::Lqr(_) => {}
            Controller::LqrIntegral(_) => {
                for k in 0..3 {
                    dx[12 + k] = -e_eff[k];
                }
            }
            Controller::Structured(_) => {
                for k in 0..3 {
                    dx[12 + k] = e_eff[k];
                    dx[15 + k] = v_i[k];
                }
            }
        }
        out.push(dx);
    }
    Ok(out)
}

fn run_with_bases(
    model: &LtiModel,
    params: &AircraftParams,
    sc: &FormationScenario,
    bases: Vec<Scalar>,
) -> Result<SimTrace> {
    sc.validate()?;
    params.validate()?;
    let n = sc.n_aircraft;
    let nx = 12 + extra_states(&sc.controller);
    let span = params.wingspan_m;
    let speed = params.cruise_speed_ms;
    let t0_thrust = params.trimmed_thrust_n;

    let turb = if sc.turbulence_intensity > 0.0 {
        let extent = bases.iter().cloned().fold(0.0, Scalar::max)
            + speed * (sc.duration_s + 2.0 * sc.dt_s)
            + 50.0;
        Some(crate::turb::generate(
            extent,
            sc.turbulence_length_m,
            sc.turbulence_intensity,
            speed,
            sc.turbulence_dx_m,
            sc.seed,
        )?)
    } else {
        None
    };

    let geom = StationGeometry { wingspan_m: span, ..StationGeometry::default() };
    let ctx = SimContext {
        model,
        sc,
        stations: follower_stations(Vec3::zeros(), span, geom.tail_arm_m, sc.n_wing_stations),
        geom,
        turb,
        bases,
        speed,
        span,
        circulation: params.wake_circulation_m2s,
    };

    let mut states: Vec<DVec> = (0..n)
        .map(|i| {
            let mut x = DVec::zeros(nx);
            if let Some(p) = sc.initial_perturbations.get(i) {
                for k in 0..12 {
                    x[k] = p[k];
                }
            }
            x
        })
        .collect();

    let mut delays: Vec<DelayLine> = states
        .iter()
        .map(|x| DelayLine::new(WAKE_DELAY_S, 0.0, Vec3::new(x[0], x[1], x[2])).unwrap())
        .collect();

    let steps = (sc.duration_s / sc.dt_s).round() as usize;
    let n_rec = steps / sc.record_stride;
    let mut trace = SimTrace {
        t: Vec::with_capacity(n_rec),
        dt_s: sc.dt_s,
        aircraft: (0..n)
            .map(|_| AircraftTrace {
                state: Vec::with_capacity(n_rec),
                control: Vec::with_capacity(n_rec),
                err: Vec::with_capacity(n_rec),
                thrust_change_n: Vec::with_capacity(n_rec),
                thrust_change_pct: Vec::with_capacity(n_rec),
                upwash_ms: Vec::with_capacity(n_rec),
            })
            .collect(),
    };

    let dt = sc.dt_s;
    for s in 0..steps {
        let t = s as Scalar * dt;
        let k1 = derivatives(&ctx, &states, &delays, t)?;
        let mid: Vec<DVec> = states
            .iter()
            .zip(&k1)
            .map(|(x, k)| x + k * (0.5 * dt))
            .collect();
        let k2 = derivatives(&ctx, &mid, &delays, t + 0.5 * dt)?;
        let mid2: Vec<DVec> = states
            .iter()
            .zip(&k2)
            .map(|(x, k)| x + k * (0.5 * dt))
            .collect();
        let k3 = derivatives(&ctx, &mid2, &delays, t + 0.5 * dt)?;
        let end: Vec<DVec> = states.iter().zip(&k3).map(|(x, k)| x + k * dt).collect();
        let k4 = derivatives(&ctx, &end, &delays, t + dt)?;
        for i in 0..n {
            states[i] += (&k1[i] + &k2[i] * 2.0 + &k3[i] * 2.0 + &k4[i]) * (dt / 6.0);
        }
        let t_new = t + dt;
        for i in 0..n {
            let x = &states[i];
            if x.iter().any(|v| !v.is_finite() || v.abs() > 1e9) {
                return Err(Error::Numerical(format!(
                    "simulation diverged: aircraft {i} at t = {t_new:.2} s"
                )));
            }
            delays[i].push(t_new, Vec3::new(x[0], x[1], x[2]));
        }

        if (s + 1) % sc.record_stride == 0 {
            trace.t.push(t_new);
            for i in 0..n {
                let x = &states[i];
                let p_i = Vec3::new(x[0], x[1], x[2]);
                let v_i = Vec3::new(x[3], x[4], x[5]);
                let e = if i == 0 {
                    -p_i
                } else {
                    let xl = &states[i - 1];
                    Vec3::new(xl[0], xl[1], xl[2]) - p_i
                };
                let u = control_law(&sc.controller, x, e - v_i * sc.time_headway_s);
                let leader_delayed = if sc.wake_enabled && i > 0 {
                    Some(delays[i - 1].read(t_new))
                } else {
                    None
                };
                let (_, upwash) = ctx.disturbance(i, t_new, p_i, leader_delayed)?;
                let ac = &mut trace.aircraft[i];
                let mut xs = [0.0; 12];
                for k in 0..12 {
                    xs[k] = x[k];
                }
                ac.state.push(xs);
                ac.control.push(u);
                ac.err.push([e[0], e[1], e[2]]);
                ac.thrust_change_n.push(u[0]);
                ac.thrust_change_pct.push(u[0] / t0_thrust * 100.0);
                ac.upwash_ms.push(upwash);
            }
        }
    }
    Ok(trace)
}

fn default_bases(sc: &FormationScenario, geom_tail: Scalar) -> Vec<Scalar> {
    // Aircraft i trails the leader by i·δx; keep every sampled field
    // coordinate positive at t = 0 (tail sits behind the wing).
    let n = sc.n_aircraft;
    (0..n)
        .map(|i| (n - 1 - i) as Scalar * sc.delta_ref.x + geom_tail + 100.0)
        .collect()
}

pub fn run_scenario(
    model: &LtiModel,
    params: &AircraftParams,
    sc: &FormationScenario,
) -> Result<SimTrace> {
    let bases = default_bases(sc, StationGeometry::default().tail_arm_m);
    run_with_bases(model, params, sc, bases)
}

/// Each aircraft flown alone (wake off, no neighbors) through the same gust
/// field slice it saw in formation; the energy-report reference.
pub fn solo_baseline(
    model: &LtiModel,
    params: &AircraftParams,
    sc: &FormationScenario,
) -> Result<SimTrace> {
    let bases = default_bases(sc, StationGeometry::default().tail_arm_m);
    let mut merged: Option<SimTrace> = None;
    for i in 0..sc.n_aircraft {
        let mut solo = sc.clone();
        solo.n_aircraft = 1;
        solo.wake_enabled = false;
        solo.initial_perturbations = sc
            .initial_perturbations
            .get(i)
            .map(|p| vec![*p])
            .unwrap_or_default();
        let tr = run_with_bases(model, params, &solo, vec![bases[i]])?;
        match &mut merged {
            None => merged = Some(tr),
            Some(m) => m.aircraft.push(tr.aircraft.into_iter().next().unwrap()),
        }
    }
    Ok(merged.expect("n_aircraft ≥ 1"))
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EnergyStat {
    pub mean_pct: Scalar,
    pub std_pct: Scalar,
}

/// Mean and standard deviation of ΔT/T₀ (%) over the final `window_s` per
/// aircraft; negative mean = savings relative to solo trim thrust.
pub fn energy_report(trace: &SimTrace, window_s: Scalar) -> Result<Vec<EnergyStat>> {
    let t_end = trace.duration();
    if t_end < window_s {
        return Err(Error::Domain(format!(
            "energy window {window_s} s exceeds the {t_end} s trace"
        )));
    }
    let t_from = t_end - window_s;
    let idx: Vec<usize> = trace
        .t
        .iter()
        .enumerate()
        .filter(|(_, &t)| t >= t_from)
        .map(|(k, _)| k)
        .collect();
    let m = idx.len() as Scalar;
    Ok(trace
        .aircraft
        .iter()
        .map(|ac| {
            let mean = idx.iter().map(|&k| ac.thrust_change_pct[k]).sum::<Scalar>() / m;
            let var = idx
                .iter()
                .map(|&k| (ac.thrust_change_pct[k] - mean).powi(2))
                .sum::<Scalar>()
                / m;
            EnergyStat { mean_pct: mean, std_pct: var.sqrt() }
        })
        .collect())
}

/// ratio_i = ‖e_i‖∞ / ‖e_{i−1}‖∞ per follower (e_0 is the leader's own
/// regulation error), after skipping the initial transient. `None` where the
/// denominator is below 1e−9 m.
pub fn amplification_ratios(
    trace: &SimTrace,
    skip_s: Scalar,
) -> Result<Vec<Option<Scalar>>> {
    if trace.n_aircraft() < 3 {
        return Err(Error::Domain("amplification needs n ≥ 3".into()));
    }
    let peaks: Vec<Scalar> = trace
        .aircraft
        .iter()
        .map(|ac| {
            trace
                .t
                .iter()
                .zip(&ac.err)
                .filter(|(&t, _)| t > skip_s)
                .map(|(_, e)| (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt())
                .fold(0.0, Scalar::max)
        })
        .collect();
    Ok((1..peaks.len())
        .map(|i| {
            if peaks[i - 1] < 1e-9 {
                None
            } else {
                Some(peaks[i] / peaks[i - 1])
            }
        })
        .collect())
}
