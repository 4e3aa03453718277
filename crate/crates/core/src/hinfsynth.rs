//! Fixed-structure tuning of the outer K_p/K_d diagonals by deterministic
//! multi-start pattern search against the string-stability and pole-placement
//! constraints.

use crate::control::{closed_loop, Controller, GainSet};
use crate::freqana::{sv_sweep, FrequencyGrid};
use crate::linmodel::LtiModel;
use crate::{Error, Result, Scalar};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Constraints {
    pub hinf_bound: Scalar,
    /// Minimum closed-loop decay rate (1/s): all Re(λ) ≤ −min_decay.
    pub min_decay: Scalar,
    /// Maximum closed-loop pole magnitude (rad/s).
    pub max_freq: Scalar,
}

impl Default for Constraints {
    fn default() -> Self {
        Constraints { hinf_bound: 1.0, min_decay: 0.08, max_freq: 50.0 }
    }
}

/// Which gain entries the optimizer may vary.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TunableMask {
    pub kp_diag: [bool; 3],
    pub kd_diag: [bool; 3],
}

impl Default for TunableMask {
    fn default() -> Self {
        TunableMask { kp_diag: [true; 3], kd_diag: [true; 3] }
    }
}

impl TunableMask {
    pub fn n_params(&self) -> usize {
        self.kp_diag.iter().chain(&self.kd_diag).filter(|&&b| b).count()
    }

    fn extract(&self, g: &GainSet) -> Vec<Scalar> {
        let mut p = Vec::with_capacity(self.n_params());
        for k in 0..3 {
            if self.kp_diag[k] {
                p.push(g.k_p[(k, k)]);
            }
        }
        for k in 0..3 {
            if self.kd_diag[k] {
                p.push(g.k_d[(k, k)]);
            }
        }
        p
    }

    fn apply(&self, base: &GainSet, p: &[Scalar]) -> GainSet {
        let mut g = base.clone();
        let mut it = p.iter();
        for k in 0..3 {
            if self.kp_diag[k] {
                g.k_p[(k, k)] = *it.next().expect("parameter vector matches mask");
            }
        }
        for k in 0..3 {
            if self.kd_diag[k] {
                g.k_d[(k, k)] = *it.next().expect("parameter vector matches mask");
            }
        }
        g
    }
}

#[derive(Debug, Clone)]
pub struct SynthesisProblem {
    pub plant: LtiModel,
    pub initial: GainSet,
    pub mask: TunableMask,
    pub constraints: Constraints,
    /// Maximum objective evaluations.
    pub budget: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisResult {
    pub gains: GainSet,
    pub hinf: Scalar,
    pub decay: Scalar,
    pub max_freq: Scalar,
    pub evaluations: usize,
    pub converged: bool,
}

/// Closed-loop figures of merit for one candidate, measured with the same
/// public machinery callers would use.
#[derive(Debug, Clone, Copy)]
pub struct Metrics {
    pub stable: bool,
    pub spectral_abscissa: Scalar,
    pub hinf: Scalar,
    pub decay: Scalar,
    pub max_freq: Scalar,
}

pub fn measure(plant: &LtiModel, gains: &GainSet) -> Result<Metrics> {
    let cl = closed_loop(plant, &Controller::Structured(gains.clone()))?;
    let eig = cl.eigenvalues();
    let abscissa = eig.iter().map(|z| z.re).fold(Scalar::NEG_INFINITY, Scalar::max);
    let max_freq = eig.iter().map(|z| z.norm()).fold(0.0, Scalar::max);
    let stable = abscissa < 0.0;
    if !stable {
        return Ok(Metrics {
            stable,
            spectral_abscissa: abscissa,
            hinf: Scalar::INFINITY,
            decay: -abscissa,
            max_freq,
        });
    }
    let sweep = sv_sweep(&cl, &FrequencyGrid::default());
    Ok(Metrics {
        stable,
        spectral_abscissa: abscissa,
        hinf: sweep.peak,
        decay: -abscissa,
        max_freq,
    })
}

const PENALTY_WEIGHT: Scalar = 1e3;

/// Penalty objective: constraint violations at weight 10³ each, plus ‖T‖∞
/// itself so feasible candidates keep improving. Unstable loops get a large
/// finite value ordered by how unstable they are.
pub fn objective_from_metrics(m: &Metrics, c: &Constraints) -> Scalar {
    if !m.stable {
        return 1e6 + m.spectral_abscissa;
    }
    (m.hinf - c.hinf_bound).max(0.0) * PENALTY_WEIGHT
        + (c.min_decay - m.decay).max(0.0) * PENALTY_WEIGHT
        + (m.max_freq - c.max_freq).max(0.0) * PENALTY_WEIGHT
        + m.hinf
}

pub fn objective(problem: &SynthesisProblem, gains: &GainSet) -> Result<Scalar> {
    Ok(objective_from_metrics(&measure(&problem.plant, gains)?, &problem.constraints))
}

/// Initialization scales tried before the pattern search (deterministic).
const MULTI_START: [Scalar; 8] = [1.0, 0.5, 0.25, 0.125, 0.75, 1.5, 2.0, 4.0];

const SWEEP_TOL: Scalar = 1e-6;

pub fn tune(problem: &SynthesisProblem) -> Result<SynthesisResult> {
    let mask = problem.mask;
    if mask.n_params() == 0 {
        return Err(Error::Synthesis("tunable mask selects no parameters".into()));
    }
    let p0 = mask.extract(&problem.initial);
    let mut evals = 0usize;
    let eval = |p: &[Scalar]| objective(problem, &mask.apply(&problem.initial, p));

    if problem.budget == 0 {
        return finish(problem, p0, 0, false);
    }

    // Phase 1: best of the scaled initializations.
    let mut best_p = p0.clone();
    let mut best_f = Scalar::INFINITY;
    for &s in &MULTI_START {
        if evals >= problem.budget {
            break;
        }
        let cand: Vec<Scalar> = p0.iter().map(|&v| v * s).collect();
        evals += 1;
        let f = eval(&cand)?;
        if f < best_f {
            best_f = f;
            best_p = cand;
        }
    }

    // Phase 2: coordinate pattern search with per-axis expanding/contracting
    // steps. Best objective is non-increasing by construction.
    let k = best_p.len();
    let mut steps: Vec<Scalar> = best_p
        .iter()
        .map(|&v| if v.abs() > 1e-12 { 0.25 * v.abs() } else { 0.1 })
        .collect();
    loop {
        if evals >= problem.budget {
            break;
        }
        let sweep_start = best_f;
        for i in 0..k {
            if evals >= problem.budget {
                break;
            }
            let mut improved = false;
            for dir in [1.0, -1.0] {
                let mut cand = best_p.clone();
                cand[i] += dir * steps[i];
                evals += 1;
                let f = eval(&cand)?;
                if f < best_f {
                    best_f = f;
                    best_p = cand;
                    improved = true;
                    break;
                }
                if evals >= problem.budget {
                    break;
                }
            }
            steps[i] *= if improved { 2.0 } else { 0.5 };
        }
        if sweep_start - best_f < SWEEP_TOL {
            break;
        }
    }

    finish(problem, best_p, evals, true)
}

fn finish(
    problem: &SynthesisProblem,
    p: Vec<Scalar>,
    evaluations: usize,
    searched: bool,
) -> Result<SynthesisResult> {
    let gains = problem.mask.apply(&problem.initial, &p);
    // Independent re-verification: fresh closed loop, sweep, eigenvalues.
    let m = measure(&problem.plant, &gains)?;
    let c = &problem.constraints;
    let converged = searched
        && m.stable
        && m.hinf <= c.hinf_bound
        && m.decay >= c.min_decay
        && m.max_freq <= c.max_freq;
    Ok(SynthesisResult {
        gains,
        hinf: m.hinf,
        decay: m.decay,
        max_freq: m.max_freq,
        evaluations,
        converged,
    })
}
