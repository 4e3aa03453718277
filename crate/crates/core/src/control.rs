//! Controllers: LQR synthesis (continuous algebraic Riccati equation),
//! integral augmentation, the printed gain presets, the structured
//! PI/velocity-feedback law, and follower closed-loop assembly.

use crate::linmodel::LtiModel;
use crate::{DMat, DVec, Error, Result, Scalar, Vec3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct LqrWeights {
    pub q: DMat,
    pub r: DMat,
}

impl LqrWeights {
    pub fn new(q: DMat, r: DMat) -> Result<Self> {
        for (m, name) in [(&q, "Q"), (&r, "R")] {
            if m.nrows() != m.ncols() {
                return Err(Error::Config(format!("{name} must be square")));
            }
            if (m - m.transpose()).amax() > 1e-12 {
                return Err(Error::Config(format!("{name} must be symmetric")));
            }
        }
        if r.clone().cholesky().is_none() {
            return Err(Error::Config("R must be positive definite".into()));
        }
        Ok(LqrWeights { q, r })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GainFlavor {
    Plain,
    IntegralAugmented,
}

/// Full-state feedback gain u = −K x̃.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateFeedbackGain {
    pub k: DMat,
    pub flavor: GainFlavor,
}

/// Structured-controller gain blocks (§5 control law).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GainSet {
    /// 4×6 attitude feedback on ᾱ = (φ, θ, ψ, φ̇, θ̇, ψ̇).
    pub k_alpha: DMat,
    /// 4×3 velocity-integral gain.
    pub k_v: DMat,
    /// 3×3 (diagonal) outer proportional gain.
    pub k_p: DMat,
    /// 3×3 (diagonal) outer derivative gain.
    pub k_d: DMat,
    /// 4×3 direct velocity feedback.
    pub k_xv: DMat,
    /// The printed K_α has 7 columns for a 6-component ᾱ; the surplus column
    /// (which duplicates K_xv's ż column) is kept here for the record.
    pub k_alpha_surplus_col: Option<[Scalar; 4]>,
}

/// Integrator states owned by one simulated aircraft.
#[derive(Debug, Clone, Copy, Default)]
pub struct ControllerState {
    /// ∫ e dt (m·s)
    pub int_e: Vec3,
    /// ∫ v dt (m)
    pub int_v: Vec3,
}

/// Continuous algebraic Riccati equation AᵀP + PA − PBR⁻¹BᵀP + Q = 0 solved
/// by the matrix sign function of the Hamiltonian (Newton iteration with
/// determinant scaling). Spectral-projection based like an ordered Schur
/// solve, without needing an eigenvector reordering primitive.
pub fn solve_care(a: &DMat, b: &DMat, q: &DMat, r: &DMat) -> Result<DMat> {
    let n = a.nrows();
    let rinv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("R is singular".into()))?;
    let g = b * &rinv * b.transpose();

    let mut h = DMat::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let mut z = h.clone();
    for _ in 0..120 {
        let lu = z.clone().lu();
        let det: Scalar = lu.determinant();
        let zinv = lu
            .try_inverse()
            .ok_or_else(|| Error::Numerical("Hamiltonian sign iteration hit a singular iterate".into()))?;
        let c = det.abs().powf(-1.0 / (2.0 * n as Scalar));
        let c = if c.is_finite() && c > 0.0 { c } else { 1.0 };
        let znew = (&z * (0.5 * c)) + (zinv * (0.5 / c));
        let delta = (&znew - &z).norm() / z.norm().max(1e-300);
        z = znew;
        if delta < 1e-14 {
            break;
        }
    }

    // [I; P] spans the stable invariant subspace: (sign(H) + I)[I; P] = 0.
    let s11 = z.view((0, 0), (n, n)).into_owned();
    let s12 = z.view((0, n), (n, n)).into_owned();
    let s21 = z.view((n, 0), (n, n)).into_owned();
    let s22 = z.view((n, n), (n, n)).into_owned();
    let eye = DMat::identity(n, n);
    let mut lhs = DMat::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&s12);
    lhs.view_mut((n, 0), (n, n)).copy_from(&(&s22 + &eye));
    let mut rhs = DMat::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(&s11 + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-&s21));
    let svd = lhs.svd(true, true);
    let p = svd
        .solve(&rhs, 1e-13)
        .map_err(|e| Error::Numerical(format!("CARE subspace solve: {e}")))?;
    // Symmetrize away iteration residue.
    Ok((&p + p.transpose()) * 0.5)
}

pub fn care_residual(a: &DMat, b: &DMat, q: &DMat, r: &DMat, p: &DMat) -> Scalar {
    let rinv = r.clone().try_inverse().expect("R invertible");
    let res = a.transpose() * p + p * a - p * b * rinv * b.transpose() * p + q;
    res.norm()
}

/// LQR state feedback u = −Kx via [`solve_care`]; the result is contract-
/// checked (residual < 1e−8·‖P‖, closed loop strictly stable).
pub fn lqr_synthesize(model: &LtiModel, weights: &LqrWeights) -> Result<StateFeedbackGain> {
    let p = solve_care(&model.a, &model.b, &weights.q, &weights.r)?;
    let res = care_residual(&model.a, &model.b, &weights.q, &weights.r, &p);
    if !(res < 1e-8 * p.norm().max(1e-300)) {
        return Err(Error::Synthesis(format!(
            "CARE residual {res:.3e} exceeds 1e-8·‖P‖ = {:.3e}",
            1e-8 * p.norm()
        )));
    }
    let rinv = weights.r.clone().try_inverse().unwrap();
    let k = rinv * model.b.transpose() * &p;
    let acl = &model.a - &model.b * &k;
    let max_re = crate::linmodel::eigenvalues(&acl)
        .iter()
        .map(|z| z.re)
        .fold(Scalar::NEG_INFINITY, Scalar::max);
    if max_re >= 0.0 {
        return Err(Error::Synthesis(format!(
            "closed loop not stable (max Re λ = {max_re:.3e}); (A,B) stabilizable?"
        )));
    }
    Ok(StateFeedbackGain { k, flavor: GainFlavor::Plain })
}

/// 15-state augmentation: three extra states integrate the position channels
/// (the relative-position error once the cascade input is wired in).
pub fn augment_integral(model: &LtiModel) -> LtiModel {
    let n = model.order();
    let mut a = DMat::zeros(n + 3, n + 3);
    a.view_mut((0, 0), (n, n)).copy_from(&model.a);
    a.view_mut((n, 0), (3, n)).copy_from(&model.cp);
    let mut b = DMat::zeros(n + 3, model.n_inputs());
    b.view_mut((0, 0), (n, model.n_inputs())).copy_from(&model.b);
    let pad = |c: &DMat| {
        let mut out = DMat::zeros(c.nrows(), n + 3);
        out.view_mut((0, 0), (c.nrows(), n)).copy_from(c);
        out
    };
    LtiModel { a, b, cp: pad(&model.cp), cv: pad(&model.cv), ca: pad(&model.ca) }
}

pub mod presets {
    //! The printed gains (Appendix controlSpecs), stored exactly as typeset.

    use super::{GainFlavor, GainSet, StateFeedbackGain};
    use crate::{DMat, Scalar};

    #[rustfmt::skip]
    const KX: [[Scalar; 12]; 4] = [
        [2.23e4, -3.48e-8, -916.0,    5.93e4,  1.05e-8, -177.0,    8.25e-7, 5.54e4,  3.98e-6, 3.54e-7, 1.19e4,  3.05e-7],
        [0.0,     7.75e-3,  0.0,      0.0,     4.25e-2, -3.91e-10, 0.751,   9.24e-8, 6.65,    0.828,   3.17e-9, -0.740],
        [9.16e-4, 0.0,      4.45e-3, -7.74e-4, 0.0,      1.98e-2,  0.0,    -4.70,    0.0,     0.0,    -0.167,    0.0],
        [0.0,     9.70e-3, -3.45e-10, 0.0,     6.63e-2, -1.07e-9,  0.192,   2.52e-7, 1.10,    2.52e-3, 7.24e-9, -4.96],
    ];

    #[rustfmt::skip]
    const KXBAR: [[Scalar; 15]; 4] = [
        [3.04e4, -6.24e-7, -3.27e3,   6.97e4,  3.27e-8, -3.83e3,   2.02e-6, 9.07e5,  8.93e-6, 1.49e-7, 2.59e4,   9.15e-7, 3.14e3, -1.23e-7, -413.0],
        [0.0,     3.46e-2,  5.65e-10, 0.0,     5.07e-2,  1.08e-9,  0.770,  -2.53e-7, 6.77,    0.834,  -4.71e-9, -1.04,    0.0,     1.05e-2,  0.0],
        [2.50e-3, 0.0,      1.65e-2, -1.16e-3, 0.0,      4.44e-2,  0.0,    -10.4,    0.0,     0.0,    -0.283,    0.0,     1.85e-4, 0.0,      1.40e-3],
        [0.0,     7.71e-2, -2.71e-10, 0.0,     8.63e-2, -5.19e-10, 0.231,   1.21e-7, 1.32,    1.13e-2, 2.28e-9, -5.70,    0.0,     3.14e-2,  0.0],
    ];

    // As printed: 7 columns. Column 0 duplicates K_xv's ż column; the §5
    // control law defines ᾱ with 6 components, and only the last 6 columns
    // yield a stable closed loop, so those are taken as K_α.
    #[rustfmt::skip]
    const KALPHA7: [[Scalar; 7]; 4] = [
        [-2.302e5,  9.372e-5, 5.411e7,   0.0007509,  4.229e-5, 9.616e5,  -0.0007284],
        [-9.863e-9, 0.5396,   2.309e-6,  4.472,      0.6881,   3.655e-8,  0.2467],
        [0.09398,   0.0,     -22.63,    -3.302e-10,  0.0,     -0.7453,    2.694e-10],
        [-5.394e-8, 0.1307,   1.262e-5,  1.076,     -0.01545,  1.878e-7, -3.75],
    ];

    #[rustfmt::skip]
    const KV: [[Scalar; 3]; 4] = [
        [84677.0,   -6.893e-5, -1.239e5],
        [-6.159e-10, 0.009398, -5.512e-9],
        [0.005323,   0.0,       0.0291],
        [-3.348e-9,  0.03092,  -3.105e-8],
    ];

    const KP_DIAG: [Scalar; 3] = [0.2421, 0.1559, 0.07919];
    const KD_DIAG: [Scalar; 3] = [0.1006, 0.01063, 0.1746];

    #[rustfmt::skip]
    const KXV: [[Scalar; 3]; 4] = [
        [1.318e5,   1.606e-5, -2.302e5],
        [1.067e-10, 0.01954,  -9.863e-9],
        [-0.001378, 0.0,       0.09398],
        [5.834e-10, 0.03872,  -5.394e-8],
    ];

    fn dmat<const R: usize, const C: usize>(rows: &[[Scalar; C]; R]) -> DMat {
        DMat::from_fn(R, C, |i, j| rows[i][j])
    }

    /// Preset K_x (plain LQR).
    pub fn lqr() -> StateFeedbackGain {
        StateFeedbackGain { k: dmat(&KX), flavor: GainFlavor::Plain }
    }

    /// Preset K_x̄ (LQR + integral).
    pub fn lqr_integral() -> StateFeedbackGain {
        StateFeedbackGain { k: dmat(&KXBAR), flavor: GainFlavor::IntegralAugmented }
    }

    /// Preset structured gain set.
    pub fn structured() -> GainSet {
        let k7 = dmat(&KALPHA7);
        let k_alpha = k7.columns(1, 6).into_owned();
        let surplus = [k7[(0, 0)], k7[(1, 0)], k7[(2, 0)], k7[(3, 0)]];
        GainSet {
            k_alpha,
            k_v: dmat(&KV),
            k_p: DMat::from_diagonal(&crate::DVec::from_row_slice(&KP_DIAG)),
            k_d: DMat::from_diagonal(&crate::DVec::from_row_slice(&KD_DIAG)),
            k_xv: dmat(&KXV),
            k_alpha_surplus_col: Some(surplus),
        }
    }
}

/// §5 control law: u = K_v K_p ∫e + K_v K_d e − K_v ∫v − K_xv v − K_α ᾱ.
pub fn structured_control(
    gains: &GainSet,
    e: Vec3,
    v: Vec3,
    alpha: &DVec,
    cstate: &ControllerState,
) -> [Scalar; 4] {
    let u = &gains.k_v * (&gains.k_p * cstate.int_e + &gains.k_d * e - cstate.int_v)
        - &gains.k_xv * v
        - &gains.k_alpha * alpha;
    [u[0], u[1], u[2], u[3]]
}

/// Reference separation with time headway: δ_ref + h·v_i.
pub fn apply_time_headway(delta_ref: Vec3, h: Scalar, v_i: Vec3) -> Result<Vec3> {
    if h < 0.0 {
        return Err(Error::Domain("time headway must be ≥ 0".into()));
    }
    Ok(delta_ref + v_i * h)
}

/// Which controller closes the follower loop.
#[derive(Debug, Clone)]
pub enum Controller {
    Lqr(StateFeedbackGain),
    LqrIntegral(StateFeedbackGain),
    Structured(GainSet),
}

impl Controller {
    pub fn preset(name: &str) -> Result<Controller> {
        match name {
            "lqr" => Ok(Controller::Lqr(presets::lqr())),
            "lqr-int" | "lqr-integral" | "lqr_integral" => {
                Ok(Controller::LqrIntegral(presets::lqr_integral()))
            }
            "structured" => Ok(Controller::Structured(presets::structured())),
            other => Err(Error::Config(format!("unknown controller preset '{other}'"))),
        }
    }
}

/// Follower closed loop: input = leader position p_{i−1} (3 channels),
/// output = own position p_i. Returned as an [`LtiModel`] whose `cp` is the
/// output map (`cv`, `ca` select velocity/attitude where meaningful).
///
/// For the structured controller the ∫v state is algebraically p_i (zero
/// initial conditions), so it is folded into position feedback, giving a
/// 15-state minimal realization: the explicit 18-state simulator form carries
/// three non-minimal integrators at the origin that would pollute the
/// stability verdict without changing the transfer function.
pub fn closed_loop(model: &LtiModel, controller: &Controller) -> Result<LtiModel> {
    match controller {
        Controller::Lqr(g) => {
            if g.k.ncols() != model.order() || g.k.nrows() != model.n_inputs() {
                return Err(Error::Config("LQR gain does not match the model".into()));
            }
            // u = −K x̃, x̃ = x with position replaced by p_i − p_{i−1}.
            let acl = &model.a - &model.b * &g.k;
            let bcl = &model.b * g.k.columns(0, 3).into_owned();
            Ok(LtiModel {
                a: acl,
                b: bcl,
                cp: model.cp.clone(),
                cv: model.cv.clone(),
                ca: model.ca.clone(),
            })
        }
        Controller::LqrIntegral(g) => {
            let aug = augment_integral(model);
            if g.k.ncols() != aug.order() || g.k.nrows() != aug.n_inputs() {
                return Err(Error::Config("integral gain does not match the model".into()));
            }
            let n = model.order();
            // Integrators run on p_i − p_{i−1} (the augmentation already has
            // ẋ_int = p_i; the input wires in −p_{i−1}).
            let acl = &aug.a - &aug.b * &g.k;
            let mut bcl = &aug.b * g.k.columns(0, 3).into_owned();
            for k in 0..3 {
                bcl[(n + k, k)] -= 1.0;
            }
            Ok(LtiModel { a: acl, b: bcl, cp: aug.cp, cv: aug.cv, ca: aug.ca })
        }
        Controller::Structured(g) => {
            let n = model.order();
            if n != 12 {
                return Err(Error::Config("structured controller expects the 12-state model".into()));
            }
            // States [x; ∫e]; e = p_{i−1} − p_i; ∫v ≡ p_i folded into x-feedback.
            let ku_x = -(&g.k_v * &g.k_d * &model.cp)
                - (&g.k_v * &model.cp)
                - (&g.k_xv * &model.cv)
                - (&g.k_alpha * &model.ca);
            let ku_ie = &g.k_v * &g.k_p;
            let ku_in = &g.k_v * &g.k_d;
            let mut a = DMat::zeros(n + 3, n + 3);
            a.view_mut((0, 0), (n, n)).copy_from(&(&model.a + &model.b * ku_x));
            a.view_mut((0, n), (n, 3)).copy_from(&(&model.b * ku_ie));
            a.view_mut((n, 0), (3, n)).copy_from(&(-&model.cp));
            let mut b = DMat::zeros(n + 3, 3);
            b.view_mut((0, 0), (n, 3)).copy_from(&(&model.b * ku_in));
            b.view_mut((n, 0), (3, 3)).copy_from(&DMat::identity(3, 3));
            let pad = |c: &DMat| {
                let mut out = DMat::zeros(c.nrows(), n + 3);
                out.view_mut((0, 0), (c.nrows(), n)).copy_from(c);
                out
            };
            Ok(LtiModel {
                a,
                b,
                cp: pad(&model.cp),
                cv: pad(&model.cv),
                ca: pad(&model.ca),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linmodel::builtin_a320;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_care() {
        // A=0, B=1, Q=1, R=1 → P=1, K=1, pole −1.
        let one = DMat::from_element(1, 1, 1.0);
        let zero = DMat::zeros(1, 1);
        let p = solve_care(&zero, &one, &one, &one).unwrap();
        assert_relative_eq!(p[(0, 0)], 1.0, max_relative = 1e-10);
        let m = LtiModel {
            a: zero,
            b: one.clone(),
            cp: one.clone(),
            cv: DMat::zeros(1, 1),
            ca: DMat::zeros(1, 1),
        };
        let w = LqrWeights::new(DMat::identity(1, 1), DMat::identity(1, 1)).unwrap();
        let g = lqr_synthesize(&m, &w).unwrap();
        assert_relative_eq!(g.k[(0, 0)], 1.0, max_relative = 1e-10);
    }

    #[test]
    fn a320_lqr_from_weights_is_stable() {
        let (m, _) = builtin_a320();
        // Modest designer weights; scale thrust down to its physical range.
        let q = DMat::identity(12, 12);
        let mut r = DMat::identity(4, 4);
        r[(0, 0)] = 1e-8;
        let w = LqrWeights::new(q, r).unwrap();
        let g = lqr_synthesize(&m, &w).unwrap();
        let acl = &m.a - &m.b * &g.k;
        let max_re = crate::linmodel::eigenvalues(&acl)
            .iter()
            .map(|z| z.re)
            .fold(Scalar::NEG_INFINITY, Scalar::max);
        assert!(max_re < 0.0);
    }

    #[test]
    fn care_residual_contract() {
        let (m, _) = builtin_a320();
        let q = DMat::identity(12, 12);
        let mut r = DMat::identity(4, 4);
        r[(0, 0)] = 1e-8;
        let p = solve_care(&m.a, &m.b, &q, &r).unwrap();
        assert!(care_residual(&m.a, &m.b, &q, &r, &p) < 1e-8 * p.norm());
    }

    #[test]
    fn augmented_shape_and_rows() {
        let (m, _) = builtin_a320();
        let aug = augment_integral(&m);
        assert_eq!(aug.order(), 15);
        for k in 0..3 {
            assert_eq!(aug.a[(12 + k, k)], 1.0);
        }
        assert_eq!(aug.a.view((12, 3), (3, 12)).amax(), 0.0);
    }

    #[test]
    fn augmentation_adds_an_origin_pole() {
        let (m, _) = builtin_a320();
        let count_origin = |mm: &LtiModel| {
            mm.eigenvalues().iter().filter(|z| z.norm() < 1e-8).count()
        };
        let lat_poles = count_origin(&m.lateral());
        let aug = augment_integral(&m);
        let aug_origin = count_origin(&aug);
        assert_eq!(aug_origin, count_origin(&m) + 3);
        assert_eq!(lat_poles, 1);
    }

    #[test]
    fn preset_values() {
        let kx = presets::lqr();
        assert_eq!(kx.k[(0, 0)], 2.23e4);
        let gs = presets::structured();
        assert_eq!(gs.k_p[(0, 0)], 0.2421);
        assert_eq!(gs.k_p[(1, 1)], 0.1559);
        assert_eq!(gs.k_p[(2, 2)], 0.07919);
        assert_eq!(gs.k_d[(0, 0)], 0.1006);
        assert_eq!(gs.k_d[(1, 1)], 0.01063);
        assert_eq!(gs.k_d[(2, 2)], 0.1746);
        // Surplus K_α column recorded, equal to K_xv's ż column.
        let s = gs.k_alpha_surplus_col.unwrap();
        for i in 0..4 {
            assert_eq!(s[i], gs.k_xv[(i, 2)]);
        }
    }

    #[test]
    fn preset_closed_loops_are_stable() {
        let (m, _) = builtin_a320();
        for c in [
            Controller::Lqr(presets::lqr()),
            Controller::LqrIntegral(presets::lqr_integral()),
            Controller::Structured(presets::structured()),
        ] {
            let cl = closed_loop(&m, &c).unwrap();
            let max_re = cl.eigenvalues().iter().map(|z| z.re).fold(Scalar::NEG_INFINITY, Scalar::max);
            assert!(max_re < 0.0, "{c:?} closed loop unstable: {max_re}");
        }
    }

    #[test]
    fn structured_control_law_terms() {
        let g = presets::structured();
        let zero = ControllerState::default();
        let u0 = structured_control(&g, Vec3::zeros(), Vec3::zeros(), &DVec::zeros(6), &zero);
        assert_eq!(u0, [0.0; 4]);
        let e = Vec3::new(1.0, 0.0, 0.0);
        let u = structured_control(&g, e, Vec3::zeros(), &DVec::zeros(6), &zero);
        let expect = &g.k_v * &g.k_d * e;
        for i in 0..4 {
            assert_relative_eq!(u[i], expect[i]);
        }
        // Linearity.
        let st = ControllerState { int_e: Vec3::new(0.1, -0.2, 0.3), int_v: Vec3::new(1.0, 0.5, -0.1) };
        let st2 = ControllerState { int_e: st.int_e * 2.0, int_v: st.int_v * 2.0 };
        let alpha = DVec::from_row_slice(&[0.01, -0.02, 0.03, 0.1, -0.1, 0.2]);
        let v = Vec3::new(0.3, -0.4, 0.5);
        let u1 = structured_control(&g, e, v, &alpha, &st);
        let u2 = structured_control(&g, e * 2.0, v * 2.0, &(alpha.clone() * 2.0), &st2);
        for i in 0..4 {
            assert_relative_eq!(u2[i], 2.0 * u1[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn matrix_form_consistency() {
        // structured_control equals K_big·[∫e; e; ∫v; v; ᾱ].
        let g = presets::structured();
        let mut kbig = DMat::zeros(4, 18);
        kbig.view_mut((0, 0), (4, 3)).copy_from(&(&g.k_v * &g.k_p));
        kbig.view_mut((0, 3), (4, 3)).copy_from(&(&g.k_v * &g.k_d));
        kbig.view_mut((0, 6), (4, 3)).copy_from(&(-&g.k_v));
        kbig.view_mut((0, 9), (4, 3)).copy_from(&(-&g.k_xv));
        kbig.view_mut((0, 12), (4, 6)).copy_from(&(-&g.k_alpha));
        let st = ControllerState { int_e: Vec3::new(0.1, 0.2, 0.3), int_v: Vec3::new(-0.1, 0.0, 0.4) };
        let e = Vec3::new(1.0, -2.0, 0.5);
        let v = Vec3::new(0.2, 0.1, -0.3);
        let alpha = DVec::from_row_slice(&[0.01, 0.02, 0.03, 0.04, 0.05, 0.06]);
        let mut z = DVec::zeros(18);
        for k in 0..3 {
            z[k] = st.int_e[k];
            z[3 + k] = e[k];
            z[6 + k] = st.int_v[k];
            z[9 + k] = v[k];
        }
        for k in 0..6 {
            z[12 + k] = alpha[k];
        }
        let via_matrix = kbig * z;
        let direct = structured_control(&g, e, v, &alpha, &st);
        for i in 0..4 {
            assert_relative_eq!(direct[i], via_matrix[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn headway() {
        let d = Vec3::new(341.0, 30.4, 0.0);
        assert_eq!(apply_time_headway(d, 0.0, Vec3::new(9.0, 9.0, 9.0)).unwrap(), d);
        assert_eq!(apply_time_headway(d, 2.0, Vec3::zeros()).unwrap(), d);
        assert_eq!(
            apply_time_headway(d, 2.0, Vec3::new(1.0, 0.0, 0.0)).unwrap(),
            d + Vec3::new(2.0, 0.0, 0.0)
        );
        assert!(apply_time_headway(d, -1.0, Vec3::zeros()).is_err());
    }

    #[test]
    fn dc_gain_identity_for_integral_controllers() {
        let (m, _) = builtin_a320();
        for c in [
            Controller::LqrIntegral(presets::lqr_integral()),
            Controller::Structured(presets::structured()),
        ] {
            let cl = closed_loop(&m, &c).unwrap();
            let resp = crate::freqana::frequency_response(&cl, 1e-6);
            for i in 0..3 {
                for j in 0..3 {
                    let target = if i == j { 1.0 } else { 0.0 };
                    assert_relative_eq!(resp[(i, j)].re, target, epsilon = 2e-4);
                    assert_relative_eq!(resp[(i, j)].im, 0.0, epsilon = 2e-4);
                }
            }
        }
    }

    #[test]
    fn zero_gain_closed_loop_is_open_loop() {
        let (m, _) = builtin_a320();
        let zero = StateFeedbackGain { k: DMat::zeros(4, 12), flavor: GainFlavor::Plain };
        let cl = closed_loop(&m, &Controller::Lqr(zero)).unwrap();
        assert_eq!(cl.b.amax(), 0.0);
        assert_relative_eq!((cl.a.clone() - m.a).amax(), 0.0);
    }

    #[test]
    fn random_care_instances() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1234);
        for trial in 0..100 {
            let n = 2 + (trial % 7);
            let m = 1 + (trial % 3);
            // A shifted to be comfortably stabilizable; Q = CᵀC + εI ≥ 0.
            let a = DMat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)) - DMat::identity(n, n) * 0.5;
            let b = DMat::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0));
            let c = DMat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let q = c.transpose() * &c + DMat::identity(n, n) * 0.1;
            let r = DMat::identity(m, m) * rng.gen_range(0.1..2.0);
            let p = solve_care(&a, &b, &q, &r).unwrap();
            let res = care_residual(&a, &b, &q, &r, &p);
            assert!(res < 1e-8 * p.norm(), "trial {trial}: residual {res:.2e}");
            let k = r.clone().try_inverse().unwrap() * b.transpose() * &p;
            let acl = &a - &b * k;
            let max_re = crate::linmodel::eigenvalues(&acl)
                .iter()
                .map(|z| z.re)
                .fold(Scalar::NEG_INFINITY, Scalar::max);
            assert!(max_re < 0.0, "trial {trial}: closed loop unstable");
        }
    }
}
