//! Linearized A320 cruise model: state conventions, longitudinal/lateral
//! decomposition, and state-space → transfer-function conversion.
//!
//! State ordering (deviations from trim, z positive down):
//! `(x, y, z, ẋ, ẏ, ż, φ, θ, ψ, φ̇, θ̇, ψ̇)`
//! Control ordering: `(ΔT, Δa, Δe, Δr)`.

use crate::{CMat, DMat, DVec, Error, Result, Scalar};
use nalgebra::DVector;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

/// Indices of the longitudinal substate (x, z, ẋ, ż, θ, θ̇) in the full state.
pub const LONG_IDX: [usize; 6] = [0, 2, 3, 5, 7, 10];
/// Indices of the lateral substate (y, ẏ, φ, ψ, φ̇, ψ̇) in the full state.
pub const LAT_IDX: [usize; 6] = [1, 4, 6, 8, 9, 11];

pub const THRUST: usize = 0;
pub const AILERON: usize = 1;
pub const ELEVATOR: usize = 2;
pub const RUDDER: usize = 3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AircraftParams {
    pub mass_kg: Scalar,
    pub wingspan_m: Scalar,
    pub mean_chord_m: Scalar,
    pub cruise_speed_ms: Scalar,
    pub air_density_kgm3: Scalar,
    pub tail_span_m: Scalar,
    pub vertical_tail_span_m: Scalar,
    pub trimmed_thrust_n: Scalar,
    pub zero_lift_drag: Scalar,
    pub wake_circulation_m2s: Scalar,
}

impl AircraftParams {
    pub fn aspect_ratio(&self) -> Scalar {
        self.wingspan_m / self.mean_chord_m
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.mass_kg,
            self.wingspan_m,
            self.mean_chord_m,
            self.cruise_speed_ms,
            self.air_density_kgm3,
            self.tail_span_m,
            self.vertical_tail_span_m,
            self.trimmed_thrust_n,
            self.zero_lift_drag,
            self.wake_circulation_m2s,
        ];
        if fields.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Config("aircraft parameters must be positive".into()));
        }
        if self.aspect_ratio() <= 1.0 {
            return Err(Error::Config("aspect ratio must exceed 1".into()));
        }
        Ok(())
    }
}

/// Linear time-invariant model `ẋ = A x + B u` plus output selectors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LtiModel {
    pub a: DMat,
    pub b: DMat,
    /// Position selector (x, y, z).
    pub cp: DMat,
    /// Velocity selector (ẋ, ẏ, ż).
    pub cv: DMat,
    /// Attitude selector (φ, θ, ψ, φ̇, θ̇, ψ̇).
    pub ca: DMat,
}

impl LtiModel {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    /// All eigenvalues of A, sorted by real part descending.
    pub fn eigenvalues(&self) -> Vec<Complex<Scalar>> {
        eigenvalues(&self.a)
    }

    /// Extracts the decoupled subsystem on the given state indices.
    pub fn subsystem(&self, idx: &[usize]) -> LtiModel {
        let a = self.a.select_rows(idx).select_columns(idx);
        let b = self.b.select_rows(idx);
        let sel = |c: &DMat| c.select_columns(idx);
        LtiModel { a, b, cp: sel(&self.cp), cv: sel(&self.cv), ca: sel(&self.ca) }
    }

    pub fn longitudinal(&self) -> LtiModel {
        self.subsystem(&LONG_IDX)
    }

    pub fn lateral(&self) -> LtiModel {
        self.subsystem(&LAT_IDX)
    }

    pub fn to_json(&self, params: &AircraftParams) -> String {
        let doc = serde_json::json!({
            "A": mat_rows(&self.a),
            "B": mat_rows(&self.b),
            "params": params,
        });
        serde_json::to_string_pretty(&doc).expect("model serializes")
    }
}

fn mat_rows(m: &DMat) -> Vec<Vec<Scalar>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Longitudinal block on (x, z, ẋ, ż, θ, θ̇).
#[rustfmt::skip]
pub const A_LONG: [[Scalar; 6]; 6] = [
    [0.0, 0.0, 1.0,      0.0,      0.0,    0.0],
    [0.0, 0.0, 0.0,      1.0,      0.0,    0.0],
    [0.0, 0.0, -5.45e-3, 3.61e-2,  -1.51,  -6.42e-2],
    [0.0, 0.0, -8.52e-2, -0.445,   -102.0, 227.0],
    [0.0, 0.0, 0.0,      0.0,      0.0,    1.0],
    [0.0, 0.0, 0.0,      -4.18e-2, -9.62,  -0.960],
];

/// Lateral block on (y, ẏ, φ, ψ, φ̇, ψ̇).
#[rustfmt::skip]
pub const A_LAT: [[Scalar; 6]; 6] = [
    [0.0, 1.0,      0.0,  0.0,   0.0,      0.0],
    [0.0, -3.57e-2, 9.81, 8.22,  -0.167,   -230.0],
    [0.0, 0.0,      0.0,  0.0,   1.0,      0.0],
    [0.0, 0.0,      0.0,  0.0,   0.0,      1.0],
    [0.0, -1.10e-2, 0.0,  2.52,  -0.395,   0.193],
    [0.0, 6.29e-3,  0.0,  -1.45, -4.76e-3, -0.135],
];

#[rustfmt::skip]
pub const B_LONG: [[Scalar; 4]; 6] = [
    [0.0,     0.0, 0.0,    0.0],
    [0.0,     0.0, 0.0,    0.0],
    [1.25e-5, 0.0, -0.138, 0.0],
    [0.0,     0.0, -7.20,  0.0],
    [0.0,     0.0, 0.0,    0.0],
    [0.0,     0.0, -3.50,  0.0],
];

#[rustfmt::skip]
pub const B_LAT: [[Scalar; 4]; 6] = [
    [0.0, 0.0,      0.0, 0.0],
    [0.0, 0.487,    0.0, 4.59],
    [0.0, 0.0,      0.0, 0.0],
    [0.0, 0.0,      0.0, 0.0],
    [0.0, 1.08,     0.0, 0.418],
    [0.0, -1.82e-2, 0.0, -0.960],
];

/// Builds the full 12-state model by interleaving the longitudinal and
/// lateral blocks, plus the cruise parameters.
pub fn builtin_a320() -> (LtiModel, AircraftParams) {
    let mut a = DMat::zeros(12, 12);
    let mut b = DMat::zeros(12, 4);
    for (i, &ii) in LONG_IDX.iter().enumerate() {
        for (j, &jj) in LONG_IDX.iter().enumerate() {
            a[(ii, jj)] = A_LONG[i][j];
        }
        for k in 0..4 {
            b[(ii, k)] = B_LONG[i][k];
        }
    }
    for (i, &ii) in LAT_IDX.iter().enumerate() {
        for (j, &jj) in LAT_IDX.iter().enumerate() {
            a[(ii, jj)] = A_LAT[i][j];
        }
        for k in 0..4 {
            b[(ii, k)] += B_LAT[i][k];
        }
    }
    let mut cp = DMat::zeros(3, 12);
    let mut cv = DMat::zeros(3, 12);
    let mut ca = DMat::zeros(6, 12);
    for k in 0..3 {
        cp[(k, k)] = 1.0;
        cv[(k, k + 3)] = 1.0;
    }
    for k in 0..6 {
        ca[(k, k + 6)] = 1.0;
    }
    let params = AircraftParams {
        mass_kg: 8.0e4,
        wingspan_m: 34.1,
        mean_chord_m: 3.6,
        cruise_speed_ms: 230.0,
        air_density_kgm3: 0.458,
        tail_span_m: 12.5,
        vertical_tail_span_m: 6.2,
        trimmed_thrust_n: 5.02e4,
        zero_lift_drag: 0.03,
        wake_circulation_m2s: 278.0,
    };
    (LtiModel { a, b, cp, cv, ca }, params)
}

/// Eigenvalues of a square real matrix, sorted by real part descending.
pub fn eigenvalues(a: &DMat) -> Vec<Complex<Scalar>> {
    let mut ev: Vec<Complex<Scalar>> = a.clone().complex_eigenvalues().iter().copied().collect();
    ev.sort_by(|p, q| q.re.partial_cmp(&p.re).unwrap().then(q.im.partial_cmp(&p.im).unwrap()));
    ev
}

/// Proper rational transfer function with real coefficients in descending
/// powers of s; the denominator is monic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RationalTf {
    pub num: Vec<Scalar>,
    pub den: Vec<Scalar>,
}

impl RationalTf {
    pub fn new(num: Vec<Scalar>, den: Vec<Scalar>) -> Result<RationalTf> {
        let num = trim_leading(num);
        let den = trim_leading(den);
        if den.is_empty() {
            return Err(Error::Domain("zero denominator".into()));
        }
        if num.len() > den.len() {
            return Err(Error::Domain("improper transfer function".into()));
        }
        let lead = den[0];
        Ok(RationalTf {
            num: num.iter().map(|c| c / lead).collect(),
            den: den.iter().map(|c| c / lead).collect(),
        })
    }

    pub fn eval(&self, s: Complex<Scalar>) -> Complex<Scalar> {
        polyval(&self.num, s) / polyval(&self.den, s)
    }

    /// Roots of the numerator (system zeros).
    pub fn zeros(&self) -> Vec<Complex<Scalar>> {
        poly_roots(&self.num)
    }

    /// Roots of the denominator (system poles).
    pub fn poles(&self) -> Vec<Complex<Scalar>> {
        poly_roots(&self.den)
    }
}

fn trim_leading(mut c: Vec<Scalar>) -> Vec<Scalar> {
    while c.len() > 1 && c[0] == 0.0 {
        c.remove(0);
    }
    if c == [0.0] {
        c.clear();
        c.push(0.0);
    }
    c
}

pub fn polyval(c: &[Scalar], s: Complex<Scalar>) -> Complex<Scalar> {
    c.iter().fold(Complex::new(0.0, 0.0), |acc, &ck| acc * s + ck)
}

/// Monic polynomial with the given roots; conjugate pairs collapse to real
/// coefficients (imaginary residue dropped).
pub fn poly_from_roots(roots: &[Complex<Scalar>]) -> Vec<Scalar> {
    let mut c = vec![Complex::new(1.0, 0.0)];
    for r in roots {
        let mut next = vec![Complex::new(0.0, 0.0); c.len() + 1];
        for (k, &ck) in c.iter().enumerate() {
            next[k] += ck;
            next[k + 1] -= ck * r;
        }
        c = next;
    }
    c.iter().map(|z| z.re).collect()
}

/// Roots of a real polynomial via the companion matrix. Trailing ~zero
/// coefficients are factored out first so multiple origin roots come back
/// exact instead of as a numerically split Jordan cluster.
pub fn poly_roots(c: &[Scalar]) -> Vec<Complex<Scalar>> {
    let mut c = trim_leading(c.to_vec());
    let maxc = c.iter().fold(0.0, |a: Scalar, &v| a.max(v.abs()));
    let mut origin = Vec::new();
    while c.len() > 1 && c.last().unwrap().abs() <= 1e-12 * maxc {
        c.pop();
        origin.push(Complex::new(0.0, 0.0));
    }
    let n = c.len().saturating_sub(1);
    if n == 0 {
        return origin;
    }
    let lead = c[0];
    let mut comp = DMat::zeros(n, n);
    for k in 0..n {
        comp[(0, k)] = -c[k + 1] / lead;
    }
    for k in 1..n {
        comp[(k, k - 1)] = 1.0;
    }
    let mut roots: Vec<Complex<Scalar>> = comp.complex_eigenvalues().iter().copied().collect();
    roots.append(&mut origin);
    roots
}

/// SISO transfer function `c (sI − A)⁻¹ b` for the given input/output rows of
/// a model. The denominator comes from the eigenvalues of A; the numerator is
/// recovered by least-squares fitting at Chebyshev-distributed points on the
/// imaginary axis (stable at the tiny coefficient scales of the lateral
/// block, where determinant expansion loses everything to cancellation).
pub fn transfer_function(model: &LtiModel, input: usize, output_row: &DVec) -> Result<RationalTf> {
    let n = model.order();
    if input >= model.n_inputs() || output_row.len() != n {
        return Err(Error::Config("transfer_function: index out of range".into()));
    }
    let a = &model.a;
    let b = model.b.column(input).into_owned();
    let c = output_row.clone();

    // Snap eigenvalues that sit within the Jordan-cluster error radius (~√eps
    // for a defective origin pair) to exactly zero, so integrator chains yield
    // exact trailing-zero denominator coefficients.
    let snap = 1e-7 * a.amax().max(1.0);
    let poles: Vec<Complex<Scalar>> = eigenvalues(a)
        .into_iter()
        .map(|p| if p.norm() < snap { Complex::new(0.0, 0.0) } else { p })
        .collect();
    let den = poly_from_roots(&poles);

    // Relative degree from the first nonzero Markov parameter c·Aᵏ·b.
    let scale = a.amax().max(1.0);
    let mut v = b.clone();
    let mut rel = n; // n ⇒ zero transfer function
    for k in 0..n {
        let h = c.dot(&v);
        if h.abs() > 1e-9 * c.norm() * v.norm().max(1.0) {
            rel = k + 1;
            break;
        }
        v = a * v;
        if v.norm() > 1e250 {
            break;
        }
    }
    if rel > n {
        rel = n;
    }
    if rel == n && {
        let h = c.dot(&v);
        h.abs() <= 1e-12 * scale.powi(n as i32 - 1)
    } {
        // Structurally zero channel.
        return RationalTf::new(vec![0.0], den);
    }
    let m = n - rel; // numerator degree

    // Frequency range spanning the nonzero pole magnitudes.
    let mags: Vec<Scalar> = poles.iter().map(|p| p.norm()).filter(|&r| r > 1e-9).collect();
    let (lo, hi) = if mags.is_empty() {
        (1e-2, 1e2)
    } else {
        let lo = mags.iter().cloned().fold(Scalar::INFINITY, Scalar::min);
        let hi = mags.iter().cloned().fold(0.0, Scalar::max);
        (lo * 1e-2, hi * 1e2)
    };

    // Chebyshev nodes in log-frequency; twice as many samples as unknowns.
    let npts = 2 * (m + 1) + 8;
    let (llo, lhi) = (lo.ln(), hi.ln());
    let mut rows = Vec::with_capacity(2 * npts);
    let mut rhs = Vec::with_capacity(2 * npts);
    let ident = DMat::identity(n, n);
    for k in 0..npts {
        let t = ((2 * k + 1) as Scalar / (2 * npts) as Scalar * std::f64::consts::PI).cos();
        let w = (0.5 * (llo + lhi) + 0.5 * t * (lhi - llo)).exp();
        let s = Complex::new(0.0, w);
        // g = c (sI − A)⁻¹ b by complex linear solve
        let sm: CMat = ident.map(|x| Complex::new(x * 0.0, 0.0))
            + ident.map(|x| s * x)
            - a.map(|x| Complex::new(x, 0.0));
        let bb: nalgebra::DVector<Complex<Scalar>> = b.map(|x| Complex::new(x, 0.0));
        let sol = sm
            .lu()
            .solve(&bb)
            .ok_or_else(|| Error::Numerical("singular (sI−A) during TF fit".into()))?;
        let g: Complex<Scalar> = c
            .iter()
            .zip(sol.iter())
            .map(|(&ci, &si)| si * ci)
            .sum();
        let target = g * polyval(&den, s);
        // num(s) = Σ q_j s^(m−j); one real-part and one imag-part equation.
        let mut row_re = vec![0.0; m + 1];
        let mut row_im = vec![0.0; m + 1];
        let mut p = Complex::new(1.0, 0.0);
        for j in (0..=m).rev() {
            row_re[j] = p.re;
            row_im[j] = p.im;
            p *= s;
        }
        rows.push(row_re);
        rhs.push(target.re);
        rows.push(row_im);
        rhs.push(target.im);
    }

    // Column-scaled least squares via SVD.
    let nr = rows.len();
    let mut amat = DMat::zeros(nr, m + 1);
    for (i, r) in rows.iter().enumerate() {
        for j in 0..=m {
            amat[(i, j)] = r[j];
        }
    }
    let col_scale: Vec<Scalar> = (0..=m)
        .map(|j| {
            let s = amat.column(j).norm();
            if s > 0.0 { s } else { 1.0 }
        })
        .collect();
    for j in 0..=m {
        let s = col_scale[j];
        for i in 0..nr {
            amat[(i, j)] /= s;
        }
    }
    let rvec = DVector::from_vec(rhs);
    let svd = amat.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { Scalar::INFINITY };
    if cond > 1e13 {
        return Err(Error::IllConditioned { cond });
    }
    let q = svd
        .solve(&rvec, 0.0)
        .map_err(|e| Error::Numerical(format!("TF fit solve: {e}")))?;
    let num: Vec<Scalar> = (0..=m).map(|j| q[j] / col_scale[j]).collect();
    RationalTf::new(num, den)
}

/// Convenience: SISO transfer function by state index output.
pub fn transfer_function_state(model: &LtiModel, input: usize, output: usize) -> Result<RationalTf> {
    let mut c = DVec::zeros(model.order());
    c[output] = 1.0;
    transfer_function(model, input, &c)
}
