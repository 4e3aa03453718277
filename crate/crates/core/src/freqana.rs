//! Frequency-domain machinery: complementary sensitivity, singular-value
//! sweeps, string-stability verdicts, Bode integrals, system type, velocity
//! error constant, RHP zeros, ramp error.

use crate::control::{closed_loop, Controller};
use crate::linmodel::{LtiModel, RationalTf};
use crate::{CMat, DMat, Error, Result, Scalar};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

/// Log-spaced angular-frequency grid (rad/s).
#[derive(Debug, Clone)]
pub struct FrequencyGrid(pub Vec<Scalar>);

impl FrequencyGrid {
    pub fn log_spaced(lo: Scalar, hi: Scalar, n: usize) -> Result<FrequencyGrid> {
        if !(lo > 0.0 && hi > lo && n >= 2) {
            return Err(Error::Config("grid needs 0 < lo < hi and n ≥ 2".into()));
        }
        let (llo, lhi) = (lo.ln(), hi.ln());
        Ok(FrequencyGrid(
            (0..n)
                .map(|k| (llo + (lhi - llo) * k as Scalar / (n - 1) as Scalar).exp())
                .collect(),
        ))
    }
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        FrequencyGrid::log_spaced(1e-3, 1e3, 400).unwrap()
    }
}

/// C (jωI − A)⁻¹ B of a state-space system, output map = `cp`.
pub fn frequency_response(sys: &LtiModel, omega: Scalar) -> CMat {
    let n = sys.order();
    let s = Complex::new(0.0, omega);
    let sm: CMat = DMat::identity(n, n).map(|x| s * x) - sys.a.map(|x| Complex::new(x, 0.0));
    let bb: CMat = sys.b.map(|x| Complex::new(x, 0.0));
    let sol = sm.lu().solve(&bb).expect("jωI − A nonsingular on the imaginary axis");
    let cc: CMat = sys.cp.map(|x| Complex::new(x, 0.0));
    cc * sol
}

fn sigma_max(m: &CMat) -> Scalar {
    m.clone().svd(false, false).singular_values.max()
}

/// Complementary sensitivity T(s): 3×3 closed loop p_{i−1} → p_i.
pub fn complementary_sensitivity(plant: &LtiModel, controller: &Controller) -> Result<LtiModel> {
    closed_loop(plant, controller)
}

/// Sensitivity S(s) = I − T(s): same states, output −p_i, direct feedthrough I
/// (returned implicitly: callers evaluate `I − frequency_response(T)`; kept as
/// a helper for the S + T = I identity check).
pub fn sensitivity_response(t_sys: &LtiModel, omega: Scalar) -> CMat {
    let t = frequency_response(t_sys, omega);
    CMat::identity(t.nrows(), t.ncols()) - t
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SvSweep {
    pub omegas: Vec<Scalar>,
    pub sigma: Vec<Scalar>,
    /// |T_kk| per diagonal channel per frequency.
    pub diag: Vec<[Scalar; 3]>,
    pub peak: Scalar,
    pub peak_omega: Scalar,
}

/// σ̄ over the grid plus golden-section refinement of the peak.
pub fn sv_sweep(sys: &LtiModel, grid: &FrequencyGrid) -> SvSweep {
    let mut sigma = Vec::with_capacity(grid.0.len());
    let mut diag = Vec::with_capacity(grid.0.len());
    for &w in &grid.0 {
        let t = frequency_response(sys, w);
        sigma.push(sigma_max(&t));
        let d = if t.nrows() >= 3 {
            [t[(0, 0)].norm(), t[(1, 1)].norm(), t[(2, 2)].norm()]
        } else {
            [t[(0, 0)].norm(), 0.0, 0.0]
        };
        diag.push(d);
    }
    let mut kmax = 0;
    for (k, &s) in sigma.iter().enumerate() {
        if s > sigma[kmax] {
            kmax = k;
        }
    }
    // Refine in the bracketing interval (log-ω golden section).
    let lo = grid.0[kmax.saturating_sub(1)];
    let hi = grid.0[(kmax + 1).min(grid.0.len() - 1)];
    let f = |lw: Scalar| sigma_max(&frequency_response(sys, lw.exp()));
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..60 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = f(x1);
        }
        if b - a < 1e-12 {
            break;
        }
    }
    let wref = (0.5 * (a + b)).exp();
    let refined = sigma_max(&frequency_response(sys, wref));
    let (peak, peak_omega) = if refined >= sigma[kmax] {
        (refined, wref)
    } else {
        (sigma[kmax], grid.0[kmax])
    };
    SvSweep { omegas: grid.0.clone(), sigma, diag, peak, peak_omega }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Stable,
    Marginal,
    Unstable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StringStabilityReport {
    pub peak: Scalar,
    pub peak_omega: Scalar,
    pub verdict: Verdict,
    pub closed_loop_stable: bool,
    pub sweep: SvSweep,
}

pub const PEAK_TOL: Scalar = 1e-6;
pub const MARGINAL_BAND: Scalar = 1e-3;

/// Combines the closed-loop eigenvalue check with the sup σ̄ criterion.
pub fn string_stable(plant: &LtiModel, controller: &Controller) -> Result<StringStabilityReport> {
    let t = complementary_sensitivity(plant, controller)?;
    let cl_stable = t.eigenvalues().iter().all(|z| z.re < 0.0);
    let sweep = sv_sweep(&t, &FrequencyGrid::default());
    let verdict = if !cl_stable || sweep.peak > 1.0 + PEAK_TOL {
        Verdict::Unstable
    } else if sweep.peak > 1.0 - MARGINAL_BAND {
        Verdict::Marginal
    } else {
        Verdict::Stable
    };
    Ok(StringStabilityReport {
        peak: sweep.peak,
        peak_omega: sweep.peak_omega,
        verdict,
        closed_loop_stable: cl_stable,
        sweep,
    })
}

/// Number of pure integrators: origin-poles minus origin-zeros.
pub fn system_type(tf: &RationalTf, origin_tol: Scalar) -> i32 {
    let p0 = tf.poles().iter().filter(|z| z.norm() < origin_tol).count() as i32;
    let z0 = tf.zeros().iter().filter(|z| z.norm() < origin_tol).count() as i32;
    p0 - z0
}

pub const ORIGIN_TOL: Scalar = 1e-8;

/// K_v = lim_{s→0} s·G(s), computed from factored roots.
pub fn velocity_error_constant(tf: &RationalTf) -> Scalar {
    let t = system_type(tf, ORIGIN_TOL);
    if t >= 2 {
        return Scalar::INFINITY;
    }
    if t <= 0 {
        return 0.0;
    }
    let gain = tf.num.first().copied().unwrap_or(0.0);
    let mut val = Complex::new(gain, 0.0);
    for z in tf.zeros() {
        if z.norm() >= ORIGIN_TOL {
            val *= -z;
        }
    }
    for p in tf.poles() {
        if p.norm() >= ORIGIN_TOL {
            val /= -p;
        }
    }
    val.re
}

/// Numerator roots in the open right half-plane.
pub fn rhp_zeros(tf: &RationalTf) -> Vec<Complex<Scalar>> {
    tf.zeros().into_iter().filter(|z| z.re > 1e-9).collect()
}

/// Steady-state error under a unit ramp for the unity-feedback loop around G.
pub fn steady_state_ramp_error(g: &RationalTf) -> Result<Scalar> {
    // Closed-loop poles: roots of den + num (padded).
    let mut ch = g.den.clone();
    let off = ch.len() - g.num.len();
    for (k, &c) in g.num.iter().enumerate() {
        ch[off + k] += c;
    }
    let stable = crate::linmodel::poly_roots(&ch).iter().all(|z| z.re < 1e-9);
    if !stable {
        return Err(Error::Domain("unity-feedback loop is unstable".into()));
    }
    let kv = velocity_error_constant(g);
    if kv.is_infinite() {
        Ok(0.0)
    } else if kv == 0.0 {
        Ok(Scalar::INFINITY)
    } else {
        Ok(1.0 / kv)
    }
}

/// |P(jω)|² as a real polynomial in u = ω², coefficients ascending in u.
fn abs2_poly(c: &[Scalar]) -> Vec<Scalar> {
    // P(jω) = Σ c_k (jω)^{n−k}; split into even/odd parts:
    // Re = Σ over exponents ≡ 0 mod 4 minus ≡ 2 mod 4 …; easier: build
    // re(u), im(u)/ω as polynomials in u and return re² + u·im².
    let n = c.len();
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    for (k, &ck) in c.iter().enumerate() {
        let p = n - 1 - k; // power of s
        let q = p / 2;
        match p % 4 {
            0 => re[q] += ck,
            1 => im[q] += ck,
            2 => re[q] -= ck,
            _ => im[q] -= ck,
        }
    }
    let mut out = vec![0.0; 2 * n + 1];
    for i in 0..n {
        for j in 0..n {
            out[i + j] += re[i] * re[j];
        }
    }
    for i in 0..n {
        for j in 0..n {
            out[i + j + 1] += im[i] * im[j];
        }
    }
    while out.len() > 1 && *out.last().unwrap() == 0.0 {
        out.pop();
    }
    out
}

fn eval_ascending(c: &[Scalar], u: Scalar) -> Scalar {
    c.iter().rev().fold(0.0, |acc, &ck| acc * u + ck)
}

/// ln|T(jω)| evaluated as ½·ln1p((N−D)/D) with N = |num|², D = |den|² as
/// polynomials in u = ω² and the difference taken coefficient-wise — exact
/// where N ≈ D (|T| ≈ 1), which is where naive evaluation loses all digits.
struct LogMag {
    n: Vec<Scalar>,
    d: Vec<Scalar>,
    delta: Vec<Scalar>,
}

impl LogMag {
    fn new(tf: &RationalTf) -> LogMag {
        let n = abs2_poly(&tf.num);
        let d = abs2_poly(&tf.den);
        let len = n.len().max(d.len());
        let mut delta = vec![0.0; len];
        for k in 0..len {
            let nv = n.get(k).copied().unwrap_or(0.0);
            let dv = d.get(k).copied().unwrap_or(0.0);
            delta[k] = nv - dv;
        }
        LogMag { n, d, delta }
    }

    fn log_mag(&self, omega: Scalar) -> Scalar {
        let u = omega * omega;
        let dv = eval_ascending(&self.d, u);
        let delta = eval_ascending(&self.delta, u);
        let ratio = delta / dv;
        if ratio > -0.5 {
            0.5 * ratio.ln_1p()
        } else {
            0.5 * (eval_ascending(&self.n, u) / dv).ln()
        }
    }
}

fn adaptive_simpson(f: &dyn Fn(Scalar) -> Scalar, a: Scalar, b: Scalar, tol: Scalar) -> Scalar {
    fn rec(
        f: &dyn Fn(Scalar) -> Scalar,
        a: Scalar,
        b: Scalar,
        fa: Scalar,
        fm: Scalar,
        fb: Scalar,
        whole: Scalar,
        tol: Scalar,
        depth: u32,
    ) -> Scalar {
        let m = 0.5 * (a + b);
        let flm = f(0.5 * (a + m));
        let frm = f(0.5 * (m + b));
        let left = (fa + 4.0 * flm + fm) * (m - a) / 6.0;
        let right = (fm + 4.0 * frm + fb) * (b - m) / 6.0;
        let both = left + right;
        if depth == 0 || (both - whole).abs() < 15.0 * tol {
            both + (both - whole) / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (fa + 4.0 * fm + fb) * (b - a) / 6.0;
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// Both sides of the complementary-sensitivity Bode constraint:
/// ∫₀^∞ ln|T(jω)|/ω² dω = −π/(2K_v) + π Σ 1/z_i (RHP zeros of G).
pub fn bode_t_integral(t: &RationalTf, g_open: &RationalTf) -> Result<(Scalar, Scalar)> {
    if t.poles().iter().any(|p| p.re >= -1e-12) {
        return Err(Error::Domain("T must be stable".into()));
    }
    if g_open.poles().iter().any(|p| p.re > 1e-9) {
        return Err(Error::Domain("open-loop G must have no open-RHP poles".into()));
    }
    let kv = velocity_error_constant(g_open);
    if kv == 0.0 {
        // Type-0 loop: the right side is infinite.
        return Ok((Scalar::NAN, Scalar::NEG_INFINITY));
    }
    let mut rhs = if kv.is_infinite() { 0.0 } else { -std::f64::consts::PI / (2.0 * kv) };
    for z in rhp_zeros(g_open) {
        rhs += std::f64::consts::PI * (1.0 / z).re;
    }

    let lm = LogMag::new(t);
    // Scale from T's pole magnitudes.
    let wc = t
        .poles()
        .iter()
        .map(|p| p.norm())
        .fold(0.0, Scalar::max)
        .max(1e-3);
    let f_low = |w: Scalar| {
        if w == 0.0 {
            // lim ln|T|/ω² from the leading u-coefficient of Δ/D.
            let d0 = lm.d[0];
            let dl = lm.delta.get(1).copied().unwrap_or(0.0)
                - lm.delta[0] / d0 * 0.0; // Δ(0) = 0 when |T(0)| = 1
            0.5 * (lm.delta.first().copied().unwrap_or(0.0) / d0 / 1e-300).min(dl / d0)
        } else {
            lm.log_mag(w) / (w * w)
        }
    };
    // Δ(0) ≠ 0 would mean |T(0)| ≠ 1 and a divergent integral; guard it.
    if (lm.delta[0] / lm.d[0]).abs() > 1e-6 {
        return Err(Error::Domain("|T(0)| ≠ 1: the T-integral diverges".into()));
    }
    let w0 = wc * 1e-4;
    let head = {
        // On [0, w0] the integrand is ≈ constant c = ½ Δ'(0)/D(0).
        let c = 0.5 * (lm.delta.get(1).copied().unwrap_or(0.0) / lm.d[0]);
        let fa = c;
        let fb = f_low(w0);
        0.5 * (fa + fb) * w0
    };
    let wmax = wc * 1e7;
    let body = adaptive_simpson(
        &|t_log: Scalar| {
            let w = t_log.exp();
            lm.log_mag(w) / (w * w) * w
        },
        w0.ln(),
        wmax.ln(),
        1e-10,
    );
    // Tail: ln|T| ≈ ln k − d·ln ω with d = relative degree, k = |lead ratio|.
    let d_rel = (t.den.len() - t.num.len()) as Scalar;
    let k_lead = (t.num.first().copied().unwrap_or(0.0)).abs().max(1e-300);
    let tail = k_lead.ln() / wmax - d_rel * (wmax.ln() + 1.0) / wmax;
    Ok((head + body + tail, rhs))
}

/// ∫₀^∞ ln|S(jω)| dω for a stable loop with relative degree ≥ 2 and no RHP
/// open-loop poles (waterbed balance: the value is 0 in that case).
pub fn bode_s_integral(s: &RationalTf) -> Result<Scalar> {
    if s.num.len() != s.den.len() {
        return Err(Error::Domain("S must be bi-proper (S(∞) = 1)".into()));
    }
    if (s.num[0] - s.den[0]).abs() > 1e-9 * s.den[0].abs() {
        return Err(Error::Domain(
            "S(∞) ≠ 1: open-loop relative degree < 1".into(),
        ));
    }
    if s.poles().iter().any(|p| p.re >= -1e-12) {
        return Err(Error::Domain("S must be stable".into()));
    }
    // Relative degree of the open loop L = (1−S)/S must be ≥ 2: the first
    // max(deg)−1 coefficients of num and den must agree.
    let n = s.den.len();
    if n >= 2 && (s.num[1] - s.den[1]).abs() > 1e-9 * (1.0 + s.den[1].abs()) {
        return Err(Error::Domain("open-loop relative degree < 2".into()));
    }
    let lm = LogMag::new(s);
    let wc = s.poles().iter().map(|p| p.norm()).fold(0.0, Scalar::max).max(1e-3);
    let w0 = wc * 1e-6;
    let head = lm.log_mag(0.5 * w0) * w0;
    let wmax = wc * 1e6;
    let body = adaptive_simpson(
        &|t_log: Scalar| {
            let w = t_log.exp();
            lm.log_mag(w) * w
        },
        w0.ln(),
        wmax.ln(),
        1e-10,
    );
    // Tail from the leading behavior Δ/D ~ c·u^{-p}: ln|S| ≈ ½ c_Δ/c_D u^{Δdeg}.
    let p = (lm.d.len() - lm.delta.len()) as i32;
    let c = 0.5 * lm.delta.last().copied().unwrap_or(0.0) / lm.d.last().copied().unwrap_or(1.0);
    let tail = if p >= 1 {
        let e = 2 * p - 1;
        c * wmax.powi(-e) / e as Scalar
    } else {
        0.0
    };
    Ok(head + body + tail)
}
