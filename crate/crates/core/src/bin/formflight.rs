use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use formflight::control::{augment_integral, lqr_synthesize, Controller, LqrWeights};
use formflight::formsim::{
    amplification_ratios, energy_report, run_scenario, solo_baseline, FormationScenario,
};
use formflight::freqana::{string_stable, Verdict};
use formflight::hinfsynth::{tune, Constraints, SynthesisProblem, TunableMask};
use formflight::linmodel::builtin_a320;
use formflight::wake::HorseshoeVortex;
use formflight::{DMat, Error, Result, Scalar, Vec3};

const EXIT_ERROR: u8 = 1;
const EXIT_STRING_UNSTABLE: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "formflight",
    version,
    about = "Formation-flight string stability toolkit",
    long_about = "Analysis, simulation and gain tuning for energy-saving aircraft \
                  formations. Output directory: --out, else $FORMFLIGHT_OUT, else `.`."
)]
struct Cli {
    /// Output directory for reports, traces, and manifests.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker cap for multi-seed simulation runs.
    #[arg(long, global = true, default_value_t = 4)]
    jobs: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Frequency-domain string-stability verdict for a controller preset.
    Analyze {
        /// lqr | lqr-int | structured
        #[arg(long)]
        controller: String,
        #[arg(long, default_value_t = 1e-3)]
        omega_min: Scalar,
        #[arg(long, default_value_t = 1e3)]
        omega_max: Scalar,
        #[arg(long, default_value_t = 400)]
        points: usize,
    },
    /// Time-domain cascade simulation from a scenario file.
    Simulate {
        /// Scenario file path or bundled name (fig_prev, fig_energy).
        scenario: String,
        /// Run this many consecutive seeds (seed, seed+1, …) in parallel.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Structured-gain tuning from a problem file.
    Synthesize {
        /// Problem file path or the bundled name paper_default.
        problem: String,
    },
    /// Sample the leader's horseshoe-vortex velocity field on a y–z plane.
    Wakefield {
        /// Streamwise sampling plane relative to the vortex head (m).
        #[arg(long, default_value_t = -341.0, allow_hyphen_values = true)]
        x_m: Scalar,
        #[arg(long, default_value_t = 60.0)]
        y_half_m: Scalar,
        #[arg(long, default_value_t = 30.0)]
        z_half_m: Scalar,
        #[arg(long, default_value_t = 1.0)]
        step_m: Scalar,
    },
    /// LQR design from user-specified Q and R diagonals.
    Lqr {
        /// TOML file with [weights] q_diag, r_diag, integral.
        config: PathBuf,
    },
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    argv: Vec<String>,
    config: serde_json::Value,
    seeds: Vec<u64>,
    toolkit_version: &'static str,
    timestamp_unix_s: u64,
    outputs: Vec<String>,
}

impl RunManifest {
    fn new(command: &str, config: serde_json::Value, seeds: Vec<u64>) -> RunManifest {
        RunManifest {
            command: command.into(),
            argv: std::env::args().collect(),
            config,
            seeds,
            toolkit_version: env!("CARGO_PKG_VERSION"),
            timestamp_unix_s: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            outputs: Vec::new(),
        }
    }

    fn write(mut self, dir: &Path, outputs: &[PathBuf]) -> Result<()> {
        self.outputs = outputs.iter().map(|p| p.display().to_string()).collect();
        let path = dir.join(format!("{}_manifest.json", self.command));
        std::fs::write(&path, to_json(&self)?)?;
        eprintln!("wrote {}", path.display());
        Ok(())
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Serde(e.to_string()))
}

fn out_dir(cli: &Cli) -> Result<PathBuf> {
    let dir = cli
        .out
        .clone()
        .or_else(|| std::env::var_os("FORMFLIGHT_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    std::fs::write(&path, content)?;
    eprintln!("wrote {}", path.display());
    Ok(path)
}

// ---------------------------------------------------------------- scenario IO

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    formation: FormationSection,
    controller: ControllerSection,
    #[serde(default)]
    turbulence: TurbulenceSection,
    integration: IntegrationSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FormationSection {
    n_aircraft: usize,
    /// Nominal offset (m); omitted = induced-drag optimum for the A320.
    delta_ref_m: Option<[Scalar; 3]>,
    #[serde(default = "default_true")]
    wake_enabled: bool,
    #[serde(default)]
    leader_lateral_offset_m: Scalar,
    /// Full per-aircraft 12-state initial perturbations (optional).
    initial_perturbations: Option<Vec<[Scalar; 12]>>,
    #[serde(default = "default_wing_stations")]
    n_wing_stations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ControllerSection {
    preset: String,
    #[serde(default)]
    time_headway_s: Scalar,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TurbulenceSection {
    #[serde(default)]
    intensity_frac: Scalar,
    #[serde(default = "default_length")]
    length_scale_m: Scalar,
    #[serde(default = "default_dx")]
    dx_m: Scalar,
    #[serde(default)]
    seed: u64,
}

impl Default for TurbulenceSection {
    fn default() -> Self {
        TurbulenceSection {
            intensity_frac: 0.0,
            length_scale_m: default_length(),
            dx_m: default_dx(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct IntegrationSection {
    duration_s: Scalar,
    #[serde(default = "default_dt")]
    dt_s: Scalar,
    #[serde(default = "default_stride")]
    record_stride: usize,
}

fn default_true() -> bool {
    true
}
fn default_wing_stations() -> usize {
    17
}
fn default_length() -> Scalar {
    762.0
}
fn default_dx() -> Scalar {
    2.0
}
fn default_dt() -> Scalar {
    0.01
}
fn default_stride() -> usize {
    1
}

const BUNDLED: [(&str, &str); 3] = [
    ("fig_prev", include_str!("../../scenarios/fig_prev.toml")),
    ("fig_energy", include_str!("../../scenarios/fig_energy.toml")),
    ("paper_default", include_str!("../../scenarios/paper_default.toml")),
];

fn load_config_text(name_or_path: &str) -> Result<String> {
    if Path::new(name_or_path).exists() {
        return Ok(std::fs::read_to_string(name_or_path)?);
    }
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name_or_path)
        .map(|(_, s)| s.to_string())
        .ok_or_else(|| {
            Error::Config(format!(
                "'{name_or_path}' is neither a file nor a bundled config \
                 (bundled: fig_prev, fig_energy, paper_default)"
            ))
        })
}

fn parse_toml<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config(format!("{what}: {e}")))
}

fn build_scenario(file: &ScenarioFile) -> Result<FormationScenario> {
    let (_, params) = builtin_a320();
    let controller = Controller::preset(&file.controller.preset)?;
    let mut sc = FormationScenario::new(file.formation.n_aircraft, controller, &params);
    if let Some(d) = file.formation.delta_ref_m {
        sc.delta_ref = Vec3::new(d[0], d[1], d[2]);
    }
    sc.wake_enabled = file.formation.wake_enabled;
    sc.n_wing_stations = file.formation.n_wing_stations;
    if let Some(p) = &file.formation.initial_perturbations {
        sc.initial_perturbations = p.clone();
    }
    if file.formation.leader_lateral_offset_m != 0.0 {
        sc = sc.with_leader_lateral(file.formation.leader_lateral_offset_m);
    }
    sc.time_headway_s = file.controller.time_headway_s;
    sc.turbulence_intensity = file.turbulence.intensity_frac;
    sc.turbulence_length_m = file.turbulence.length_scale_m;
    sc.turbulence_dx_m = file.turbulence.dx_m;
    sc.seed = file.turbulence.seed;
    sc.duration_s = file.integration.duration_s;
    sc.dt_s = file.integration.dt_s;
    sc.record_stride = file.integration.record_stride;
    sc.validate()?;
    Ok(sc)
}

// ------------------------------------------------------------------ commands

fn cmd_analyze(
    dir: &Path,
    controller: &str,
    omega_min: Scalar,
    omega_max: Scalar,
    points: usize,
) -> Result<u8> {
    use formflight::freqana::{complementary_sensitivity, sv_sweep, FrequencyGrid};
    let (model, _) = builtin_a320();
    let ctrl = Controller::preset(controller)?;
    let report = string_stable(&model, &ctrl)?;
    // Custom grid for the CSV emission; the verdict uses the default grid.
    let grid = FrequencyGrid::log_spaced(omega_min, omega_max, points)?;
    let t = complementary_sensitivity(&model, &ctrl)?;
    let sweep = sv_sweep(&t, &grid);

    let mut csv = String::from("omega_rad_s,sigma_max,mag_Txx,mag_Tyy,mag_Tzz\n");
    for k in 0..sweep.omegas.len() {
        csv.push_str(&format!(
            "{:.6e},{:.9e},{:.9e},{:.9e},{:.9e}\n",
            sweep.omegas[k],
            sweep.sigma[k],
            sweep.diag[k][0],
            sweep.diag[k][1],
            sweep.diag[k][2]
        ));
    }
    let mut outputs = Vec::new();
    outputs.push(write_file(dir, &format!("analyze_{controller}_sweep.csv"), &csv)?);
    outputs.push(write_file(
        dir,
        &format!("analyze_{controller}_report.json"),
        &to_json(&report)?,
    )?);
    let cfg = serde_json::json!({
        "controller": controller,
        "omega_min": omega_min, "omega_max": omega_max, "points": points,
    });
    RunManifest::new("analyze", cfg, vec![]).write(dir, &outputs)?;

    println!(
        "{controller}: peak σ̄ = {:.6} at ω = {:.4} rad/s → {:?}",
        report.peak, report.peak_omega, report.verdict
    );
    Ok(if report.verdict == Verdict::Unstable {
        EXIT_STRING_UNSTABLE
    } else {
        0
    })
}

#[derive(Serialize)]
struct SeedSummary {
    seed: u64,
    energy_formation: Vec<formflight::formsim::EnergyStat>,
    energy_solo: Vec<formflight::formsim::EnergyStat>,
    /// Formation-minus-solo thrust change per aircraft (% of T₀).
    energy_net_mean_pct: Vec<Scalar>,
    amplification_ratios: Option<Vec<Option<Scalar>>>,
    diverged: bool,
}

fn cmd_simulate(dir: &Path, scenario: &str, seeds: u64, jobs: usize) -> Result<u8> {
    let text = load_config_text(scenario)?;
    let file: ScenarioFile = parse_toml(&text, "scenario")?;
    let base_sc = build_scenario(&file)?;
    let (model, params) = builtin_a320();
    let window = 30.0_f64.min(base_sc.duration_s);

    let seed_list: Vec<u64> = (0..seeds.max(1)).map(|k| base_sc.seed + k).collect();
    let mut results: Vec<(u64, Result<(SeedSummary, String)>)> = Vec::new();
    let jobs = jobs.max(1);
    for chunk in seed_list.chunks(jobs) {
        let batch: Vec<(u64, Result<(SeedSummary, String)>)> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&seed| {
                    let mut sc = base_sc.clone();
                    sc.seed = seed;
                    let model = &model;
                    let params = &params;
                    s.spawn(move || {
                        let trace = run_scenario(model, params, &sc)?;
                        let solo = solo_baseline(model, params, &sc)?;
                        let ef = energy_report(&trace, window)?;
                        let es = energy_report(&solo, window)?;
                        let net = ef
                            .iter()
                            .zip(&es)
                            .map(|(f, s)| f.mean_pct - s.mean_pct)
                            .collect();
                        let amp = if sc.n_aircraft >= 3 {
                            Some(amplification_ratios(&trace, 10.0_f64.min(sc.duration_s / 2.0))?)
                        } else {
                            None
                        };
                        Ok((
                            SeedSummary {
                                seed,
                                energy_formation: ef,
                                energy_solo: es,
                                energy_net_mean_pct: net,
                                amplification_ratios: amp,
                                diverged: false,
                            },
                            trace.to_csv(),
                        ))
                    })
                })
                .collect();
            chunk
                .iter()
                .zip(handles)
                .map(|(&seed, h)| (seed, h.join().expect("simulation thread panicked")))
                .collect()
        });
        results.extend(batch);
    }

    let stem = Path::new(scenario)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| scenario.to_string());
    let mut outputs = Vec::new();
    let mut summaries = Vec::new();
    let mut diverged = false;
    for (seed, res) in results {
        match res {
            Ok((summary, csv)) => {
                outputs.push(write_file(dir, &format!("{stem}_seed{seed}_trace.csv"), &csv)?);
                summaries.push(summary);
            }
            Err(Error::Numerical(msg)) => {
                eprintln!("seed {seed}: {msg}");
                diverged = true;
                summaries.push(SeedSummary {
                    seed,
                    energy_formation: vec![],
                    energy_solo: vec![],
                    energy_net_mean_pct: vec![],
                    amplification_ratios: None,
                    diverged: true,
                });
            }
            Err(e) => return Err(e),
        }
    }
    let summary_doc = serde_json::json!({
        "scenario": stem,
        "n_aircraft": base_sc.n_aircraft,
        "duration_s": base_sc.duration_s,
        "dt_s": base_sc.dt_s,
        "energy_window_s": window,
        "seeds": summaries,
    });
    outputs.push(write_file(dir, &format!("{stem}_summary.json"), &to_json(&summary_doc)?)?);
    let cfg = serde_json::to_value(&file).map_err(|e| Error::Serde(e.to_string()))?;
    RunManifest::new("simulate", cfg, seed_list).write(dir, &outputs)?;
    Ok(if diverged { EXIT_ERROR } else { 0 })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    problem: ProblemSection,
    #[serde(default)]
    constraints: ConstraintSection,
    #[serde(default)]
    mask: MaskSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemSection {
    initial: String,
    #[serde(default = "one")]
    kp_scale: Scalar,
    #[serde(default = "one")]
    kd_scale: Scalar,
    budget: usize,
}

fn one() -> Scalar {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstraintSection {
    #[serde(default = "one")]
    hinf_bound: Scalar,
    #[serde(default = "default_decay")]
    min_decay_per_s: Scalar,
    #[serde(default = "default_freq")]
    max_freq_rad_s: Scalar,
}

fn default_decay() -> Scalar {
    0.08
}
fn default_freq() -> Scalar {
    50.0
}

impl Default for ConstraintSection {
    fn default() -> Self {
        ConstraintSection {
            hinf_bound: 1.0,
            min_decay_per_s: default_decay(),
            max_freq_rad_s: default_freq(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskSection {
    #[serde(default = "all_true")]
    kp_diag: [bool; 3],
    #[serde(default = "all_true")]
    kd_diag: [bool; 3],
}

fn all_true() -> [bool; 3] {
    [true; 3]
}

impl Default for MaskSection {
    fn default() -> Self {
        MaskSection { kp_diag: [true; 3], kd_diag: [true; 3] }
    }
}

fn cmd_synthesize(dir: &Path, problem: &str) -> Result<u8> {
    let text = load_config_text(problem)?;
    let file: ProblemFile = parse_toml(&text, "synthesis problem")?;
    let (plant, _) = builtin_a320();
    let mut initial = match Controller::preset(&file.problem.initial)? {
        Controller::Structured(g) => g,
        _ => {
            return Err(Error::Config(
                "synthesis initial gains must name a structured preset".into(),
            ))
        }
    };
    initial.k_p *= file.problem.kp_scale;
    initial.k_d *= file.problem.kd_scale;
    let pb = SynthesisProblem {
        plant,
        initial,
        mask: TunableMask { kp_diag: file.mask.kp_diag, kd_diag: file.mask.kd_diag },
        constraints: Constraints {
            hinf_bound: file.constraints.hinf_bound,
            min_decay: file.constraints.min_decay_per_s,
            max_freq: file.constraints.max_freq_rad_s,
        },
        budget: file.problem.budget,
    };
    let result = tune(&pb)?;
    println!(
        "synthesize: ‖T‖∞ = {:.7}, decay = {:.4} 1/s, max |λ| = {:.2} rad/s, \
         {} evaluations, converged = {}",
        result.hinf, result.decay, result.max_freq, result.evaluations, result.converged
    );
    let converged = result.converged;
    let mut outputs = Vec::new();
    outputs.push(write_file(dir, "synthesize_result.json", &to_json(&result)?)?);
    let cfg = serde_json::to_value(&file).map_err(|e| Error::Serde(e.to_string()))?;
    RunManifest::new("synthesize", cfg, vec![]).write(dir, &outputs)?;
    Ok(if converged { 0 } else { EXIT_NOT_CONVERGED })
}

fn cmd_wakefield(
    dir: &Path,
    x_m: Scalar,
    y_half: Scalar,
    z_half: Scalar,
    step: Scalar,
) -> Result<u8> {
    if step <= 0.0 || y_half <= 0.0 || z_half <= 0.0 {
        return Err(Error::Config("wakefield extents and step must be > 0".into()));
    }
    let (_, params) = builtin_a320();
    let vortex = HorseshoeVortex::for_span(
        Vec3::zeros(),
        params.wingspan_m,
        params.wake_circulation_m2s,
    );
    let mut csv = String::from("y,z,vx,vy,vz\n");
    let ny = (2.0 * y_half / step).round() as i64;
    let nz = (2.0 * z_half / step).round() as i64;
    for iz in 0..=nz {
        let z = -z_half + iz as Scalar * step;
        for iy in 0..=ny {
            let y = -y_half + iy as Scalar * step;
            let v = vortex.velocity(Vec3::new(x_m, y, z));
            csv.push_str(&format!(
                "{y:.3},{z:.3},{:.6e},{:.6e},{:.6e}\n",
                v.x, v.y, v.z
            ));
        }
    }
    let outputs = vec![write_file(dir, "wakefield.csv", &csv)?];
    let cfg = serde_json::json!({
        "x_m": x_m, "y_half_m": y_half, "z_half_m": z_half, "step_m": step,
        "span_m": params.wingspan_m, "circulation_m2s": params.wake_circulation_m2s,
    });
    RunManifest::new("wakefield", cfg, vec![]).write(dir, &outputs)?;
    Ok(0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LqrFile {
    weights: LqrSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LqrSection {
    q_diag: Vec<Scalar>,
    r_diag: Vec<Scalar>,
    #[serde(default)]
    integral: bool,
}

fn cmd_lqr(dir: &Path, config: &Path) -> Result<u8> {
    let text = std::fs::read_to_string(config)?;
    let file: LqrFile = parse_toml(&text, "lqr config")?;
    let (model, _) = builtin_a320();
    let design_model = if file.weights.integral { augment_integral(&model) } else { model };
    let n = design_model.order();
    if file.weights.q_diag.len() != n {
        return Err(Error::Config(format!(
            "q_diag needs {n} entries for this model ({} given)",
            file.weights.q_diag.len()
        )));
    }
    if file.weights.r_diag.len() != design_model.n_inputs() {
        return Err(Error::Config(format!(
            "r_diag needs {} entries ({} given)",
            design_model.n_inputs(),
            file.weights.r_diag.len()
        )));
    }
    let q = DMat::from_diagonal(&formflight::DVec::from_vec(file.weights.q_diag.clone()));
    let r = DMat::from_diagonal(&formflight::DVec::from_vec(file.weights.r_diag.clone()));
    let gain = lqr_synthesize(&design_model, &LqrWeights::new(q, r)?)?;
    let acl = &design_model.a - &design_model.b * &gain.k;
    let eig: Vec<[Scalar; 2]> = formflight::linmodel::eigenvalues(&acl)
        .into_iter()
        .map(|z| [z.re, z.im])
        .collect();
    let doc = serde_json::json!({
        "integral": file.weights.integral,
        "k_rows": (0..gain.k.nrows())
            .map(|i| gain.k.row(i).iter().copied().collect::<Vec<_>>())
            .collect::<Vec<_>>(),
        "closed_loop_eigenvalues": eig,
    });
    let outputs = vec![write_file(dir, "lqr_gain.json", &to_json(&doc)?)?];
    let cfg = serde_json::to_value(&file).map_err(|e| Error::Serde(e.to_string()))?;
    RunManifest::new("lqr", cfg, vec![]).write(dir, &outputs)?;
    println!("LQR gain written ({} states, integral = {})", n, file.weights.integral);
    Ok(0)
}

fn run(cli: &Cli) -> Result<u8> {
    let dir = out_dir(cli)?;
    match &cli.cmd {
        Cmd::Analyze { controller, omega_min, omega_max, points } => {
            cmd_analyze(&dir, controller, *omega_min, *omega_max, *points)
        }
        Cmd::Simulate { scenario, seeds } => cmd_simulate(&dir, scenario, *seeds, cli.jobs),
        Cmd::Synthesize { problem } => cmd_synthesize(&dir, problem),
        Cmd::Wakefield { x_m, y_half_m, z_half_m, step_m } => {
            cmd_wakefield(&dir, *x_m, *y_half_m, *z_half_m, *step_m)
        }
        Cmd::Lqr { config } => cmd_lqr(&dir, config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
