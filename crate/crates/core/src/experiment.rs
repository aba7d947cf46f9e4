//! Config-driven twin experiments: generate truth, extract POD, place sensors,
//! observe, reconstruct with vanilla DEIM and DAS-DEIM, and report errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::assimilation::{
    das_deim, relative_error_series, vanilla_trajectory, AssimilationRun, ErrorSeries,
    ObservationSeries,
};
use crate::dynamics::{integrate, linear_field, lorenz63, lorenz96, Trajectory, VectorField};
use crate::error::{Error, Result};
use crate::io;
use crate::matrix::DenseMatrix;
use crate::pod::{compute_pod_with, BasisMatrix, Centering, SnapshotSet};
use crate::reconstruction::{prefactor_curve, prefactor_curve_replaced};
use crate::sensing::{add_noise, build_deim_core, qdeim_place, DeimCore, NoiseSpec, SensorSelection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    Lorenz63,
    Lorenz96,
    Linear,
}

fn default_name() -> String {
    "custom".into()
}
fn default_train_horizon() -> f64 {
    200.0
}
fn default_test_horizon() -> f64 {
    50.0
}
fn default_spinup() -> f64 {
    100.0
}
fn default_obs_dt() -> f64 {
    0.2
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_dt() -> f64 {
    1e-3
}
fn default_train_record_every() -> usize {
    10
}
fn default_kernel_substeps() -> usize {
    20
}
fn default_transient_fraction() -> f64 {
    0.25
}

/// Flat JSON experiment description. Only `system`, `m` and `n` are required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub system: System,
    /// `sigma`, `rho`, `beta` for Lorenz63; `F` for Lorenz96.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// State dimension; required for Lorenz96 (default 40), fixed otherwise.
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    pub m: usize,
    pub n: usize,
    #[serde(default = "default_train_horizon")]
    pub train_horizon: f64,
    #[serde(default = "default_test_horizon")]
    pub test_horizon: f64,
    #[serde(default = "default_spinup")]
    pub spinup: f64,
    #[serde(default = "default_obs_dt")]
    pub obs_dt: f64,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Subtract the snapshot mean before the SVD.
    #[serde(default)]
    pub center: bool,
    /// Number of leading modes handed to Q-DEIM; defaults to `m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement_modes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_ic: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_ic: Option<Vec<f64>>,
    /// RK4 step of the truth integrator.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Training snapshots are taken every this many integrator steps.
    #[serde(default = "default_train_record_every")]
    pub train_record_every: usize,
    /// Kernel-ODE RK4 steps per observation interval.
    #[serde(default = "default_kernel_substeps")]
    pub kernel_substeps: usize,
    #[serde(default = "default_transient_fraction")]
    pub transient_fraction: f64,
    /// Rows of `A` for the linear system.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear_matrix: Option<Vec<Vec<f64>>>,
}

pub const PRESETS: &[(&str, &str)] = &[
    ("lorenz63-m1", include_str!("../../../presets/lorenz63-m1.json")),
    ("lorenz63", include_str!("../../../presets/lorenz63.json")),
    ("lorenz63-noisy", include_str!("../../../presets/lorenz63-noisy.json")),
    ("lorenz96", include_str!("../../../presets/lorenz96.json")),
];

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            Error::Config(format!("unknown preset `{name}`; available: {}", names.join(", ")))
        })?;
    ExperimentConfig::from_json(text)
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        for (label, v) in [
            ("train_horizon", self.train_horizon),
            ("test_horizon", self.test_horizon),
            ("obs_dt", self.obs_dt),
            ("dt", self.dt),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{label} must be > 0, got {v}"));
            }
        }
        if !(self.spinup >= 0.0 && self.spinup.is_finite()) {
            return bad(format!("spinup must be >= 0, got {}", self.spinup));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise_std must be >= 0, got {}", self.noise_std));
        }
        if !(0.0..1.0).contains(&self.transient_fraction) {
            return bad(format!("transient_fraction must lie in [0, 1), got {}", self.transient_fraction));
        }
        if self.n == 0 || self.n > self.m {
            return bad(format!("need 1 <= n <= m, got n = {} and m = {}", self.n, self.m));
        }
        let pm = self.placement_modes();
        if pm < self.n || pm > self.m {
            return bad(format!("placement_modes = {pm} must lie in [n, m] = [{}, {}]", self.n, self.m));
        }
        if self.train_record_every == 0 || self.kernel_substeps == 0 {
            return bad("train_record_every and kernel_substeps must be >= 1".into());
        }
        let ratio = self.obs_dt / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return bad(format!("obs_dt = {} is not a multiple of dt = {}", self.obs_dt, self.dt));
        }
        let dim = self.state_dim()?;
        if self.system == System::Lorenz96 && dim < 4 {
            return bad(format!("Lorenz96 needs N >= 4, got {dim}"));
        }
        if self.m > dim {
            return bad(format!("m = {} exceeds the state dimension {dim}", self.m));
        }
        let allowed: &[&str] = match self.system {
            System::Lorenz63 => &["sigma", "rho", "beta"],
            System::Lorenz96 => &["F"],
            System::Linear => &[],
        };
        if let Some(k) = self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return bad(format!("unknown parameter `{k}` for {:?}", self.system));
        }
        for (label, ic) in [("train_ic", &self.train_ic), ("test_ic", &self.test_ic)] {
            if let Some(ic) = ic {
                if ic.len() != dim {
                    return bad(format!("{label} has length {}, state dimension is {dim}", ic.len()));
                }
            }
        }
        if self.system == System::Linear {
            if self.train_ic.is_none() || self.test_ic.is_none() {
                return bad("the linear system needs explicit train_ic and test_ic".into());
            }
        }
        Ok(())
    }

    pub fn placement_modes(&self) -> usize {
        self.placement_modes.unwrap_or(self.m)
    }

    pub fn state_dim(&self) -> Result<usize> {
        match self.system {
            System::Lorenz63 => match self.dim {
                None | Some(3) => Ok(3),
                Some(d) => Err(Error::Config(format!("Lorenz63 has N = 3, config says {d}"))),
            },
            System::Lorenz96 => Ok(self.dim.unwrap_or(40)),
            System::Linear => {
                let rows = self
                    .linear_matrix
                    .as_ref()
                    .ok_or_else(|| Error::Config("the linear system needs linear_matrix".into()))?;
                match self.dim {
                    Some(d) if d != rows.len() => Err(Error::Config(format!(
                        "N = {d} but linear_matrix has {} rows",
                        rows.len()
                    ))),
                    _ => Ok(rows.len()),
                }
            }
        }
    }

    fn param(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    pub fn vector_field(&self) -> Result<Box<dyn VectorField>> {
        Ok(match self.system {
            System::Lorenz63 => Box::new(lorenz63(
                self.param("sigma", 10.0),
                self.param("rho", 28.0),
                self.param("beta", 8.0 / 3.0),
            )),
            System::Lorenz96 => Box::new(lorenz96(self.state_dim()?, self.param("F", 2.0))?),
            System::Linear => {
                let rows = self.linear_matrix.as_ref().expect("checked by state_dim");
                Box::new(linear_field(&DenseMatrix::from_rows(rows)?)?)
            }
        })
    }

    /// Explicit ICs win; otherwise Lorenz63 uses (1,1,1) / (-5,5,20) and
    /// Lorenz96 perturbs the equilibrium `u = F` at `u_1` / `u_20`.
    pub fn initial_conditions(&self) -> Result<(DVector<f64>, DVector<f64>)> {
        let dim = self.state_dim()?;
        let (train, test) = match self.system {
            System::Lorenz63 => (vec![1.0, 1.0, 1.0], vec![-5.0, 5.0, 20.0]),
            System::Lorenz96 => {
                let f = self.param("F", 2.0);
                let mut a = vec![f; dim];
                let mut b = vec![f; dim];
                a[0] += 0.01;
                b[(dim / 2).saturating_sub(1)] += 0.05;
                (a, b)
            }
            System::Linear => (Vec::new(), Vec::new()),
        };
        let pick = |given: &Option<Vec<f64>>, default: Vec<f64>| {
            DVector::from_vec(given.clone().unwrap_or(default))
        };
        Ok((pick(&self.train_ic, train), pick(&self.test_ic, test)))
    }

    pub fn obs_stride(&self) -> usize {
        (self.obs_dt / self.dt).round() as usize
    }

    pub fn kernel_dt(&self) -> f64 {
        self.obs_dt / self.kernel_substeps as f64
    }
}

/// Integrates through the spin-up and returns the state it ends in.
fn spin_up(f: &dyn VectorField, u0: &DVector<f64>, spinup: f64, dt: f64) -> Result<DVector<f64>> {
    if spinup == 0.0 {
        return Ok(u0.clone());
    }
    let traj = integrate(f, u0, spinup, dt, usize::MAX)?;
    Ok(traj.last_state().clone())
}

/// Training trajectory (sampled every `train_record_every` steps) and test
/// trajectory (sampled at the observation times), both after spin-up and with
/// time restarted at 0.
pub fn generate(cfg: &ExperimentConfig) -> Result<(Trajectory, Trajectory)> {
    let f = cfg.vector_field()?;
    let (train_ic, test_ic) = cfg.initial_conditions()?;
    let train0 = spin_up(f.as_ref(), &train_ic, cfg.spinup, cfg.dt)?;
    let train = integrate(f.as_ref(), &train0, cfg.train_horizon, cfg.dt, cfg.train_record_every)?;
    let test0 = spin_up(f.as_ref(), &test_ic, cfg.spinup, cfg.dt)?;
    let test = integrate(f.as_ref(), &test0, cfg.test_horizon, cfg.dt, cfg.obs_stride())?;
    if test.times.windows(2).any(|w| (w[1] - w[0] - cfg.obs_dt).abs() > 1e-9) {
        return Err(Error::Config(format!(
            "test_horizon = {} is not a multiple of obs_dt = {}",
            cfg.test_horizon, cfg.obs_dt
        )));
    }
    Ok((train, test))
}

pub fn build_basis(cfg: &ExperimentConfig, train: &Trajectory) -> Result<BasisMatrix> {
    let snap = SnapshotSet::from_states(&train.states, format!("{} training trajectory", cfg.name))?;
    let centering = if cfg.center {
        Centering::SnapshotMean
    } else {
        Centering::None
    };
    compute_pod_with(&snap, cfg.m, centering)
}

pub fn place(cfg: &ExperimentConfig, basis: &BasisMatrix) -> Result<SensorSelection> {
    qdeim_place(&basis.truncated(cfg.placement_modes())?, cfg.n)
}

/// Clean measurements of the test trajectory with the configured noise added.
pub fn observe_test(cfg: &ExperimentConfig, test: &Trajectory, sel: &SensorSelection) -> Result<ObservationSeries> {
    let clean = ObservationSeries::from_trajectory(test, sel)?;
    Ok(add_noise(&clean, &NoiseSpec::new(cfg.noise_std, cfg.seed)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub name: String,
    pub system: System,
    pub n: usize,
    pub m: usize,
    pub noise_std: f64,
    pub seed: u64,
    pub sensor_indices: Vec<usize>,
    pub sigma5: Option<f64>,
    pub sigma6: Option<f64>,
    pub vanilla_mean_rel_err: Option<f64>,
    pub vanilla_post_transient_mean: Option<f64>,
    pub dasdeim_mean_rel_err: Option<f64>,
    pub dasdeim_post_transient_mean: Option<f64>,
    pub dasdeim_post_transient_min: Option<f64>,
    pub prefactor_curve: Vec<(usize, f64)>,
    pub prefactor_curve_replaced: Vec<(usize, f64)>,
}

/// Everything a pipeline run produces, in memory.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub train: Trajectory,
    pub test: Trajectory,
    pub basis: BasisMatrix,
    pub core: DeimCore,
    pub observations: ObservationSeries,
    pub vanilla: Trajectory,
    pub vanilla_errors: ErrorSeries,
    pub run: AssimilationRun,
    pub summary: Summary,
}

impl ExperimentResult {
    pub fn dasdeim_errors(&self) -> &ErrorSeries {
        self.run.error_series.as_ref().expect("pipeline attaches the truth")
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let (train, test) = generate(cfg).map_err(|e| e.in_stage("generate"))?;
    let basis = build_basis(cfg, &train).map_err(|e| e.in_stage("pod"))?;
    let sel = place(cfg, &basis).map_err(|e| e.in_stage("place"))?;
    let core = build_deim_core(&basis, &sel).map_err(|e| e.in_stage("place"))?;
    let observations = observe_test(cfg, &test, &sel).map_err(|e| e.in_stage("observe"))?;

    let (vanilla, vanilla_errors) = vanilla_trajectory(&core, &observations)
        .and_then(|v| {
            let e = relative_error_series(&v, &test)?;
            Ok((v, e))
        })
        .map_err(|e| e.in_stage("reconstruct"))?;

    let f = cfg.vector_field()?;
    let run = das_deim(
        &core,
        f.as_ref(),
        &observations,
        &DVector::zeros(core.kernel_dim()),
        cfg.kernel_dt(),
    )
    .and_then(|r| r.with_truth(&test))
    .map_err(|e| e.in_stage("assimilate"))?;

    let m_range: Vec<usize> = (cfg.n..=cfg.m).collect();
    let curve = prefactor_curve(&basis, cfg.n, &m_range).map_err(|e| e.in_stage("prefactor"))?;
    let curve_replaced =
        prefactor_curve_replaced(&basis, cfg.n, &m_range).map_err(|e| e.in_stage("prefactor"))?;

    let frac = cfg.transient_fraction;
    let das_errors = run.error_series.as_ref().expect("truth attached");
    let sv = basis.singular_values();
    let summary = Summary {
        name: cfg.name.clone(),
        system: cfg.system,
        n: cfg.n,
        m: cfg.m,
        noise_std: cfg.noise_std,
        seed: cfg.seed,
        sensor_indices: sel.indices().to_vec(),
        sigma5: sv.get(4).copied(),
        sigma6: sv.get(5).copied(),
        vanilla_mean_rel_err: vanilla_errors.mean(),
        vanilla_post_transient_mean: vanilla_errors.post_transient_mean(frac),
        dasdeim_mean_rel_err: das_errors.mean(),
        dasdeim_post_transient_mean: das_errors.post_transient_mean(frac),
        dasdeim_post_transient_min: das_errors.post_transient_min(frac),
        prefactor_curve: curve,
        prefactor_curve_replaced: curve_replaced,
    };
    Ok(ExperimentResult {
        config: cfg.clone(),
        train,
        test,
        basis,
        core,
        observations,
        vanilla,
        vanilla_errors,
        run,
        summary,
    })
}

pub fn write_trajectories(dir: &Path, train: &Trajectory, test: &Trajectory) -> Result<()> {
    io::write_trajectory(&dir.join("train.csv"), train)?;
    io::write_trajectory(&dir.join("test.csv"), test)
}

pub fn write_basis(dir: &Path, basis: &BasisMatrix) -> Result<()> {
    io::write_matrix(&dir.join("basis.csv"), basis.phi())?;
    io::write_column(&dir.join("singular_values.csv"), basis.singular_values())?;
    if let Some(offset) = basis.offset() {
        io::write_column(&dir.join("basis_offset.csv"), offset.as_slice())?;
    }
    Ok(())
}

fn write_curve(path: &Path, curve: &[(usize, f64)], replaced: &[(usize, f64)]) -> Result<()> {
    let rows: Vec<Vec<f64>> = curve
        .iter()
        .zip(replaced)
        .map(|(&(m, a), &(_, b))| vec![m as f64, a, b])
        .collect();
    let text = format!(
        "m,fixed_sensors,replaced_sensors\n{}",
        io::format_rows(rows.iter().map(Vec::as_slice))
    );
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes every artifact of a run under `dir`.
pub fn write_artifacts(result: &ExperimentResult, dir: &Path) -> Result<()> {
    let wrap = |e: Error| e.in_stage("write");
    write_trajectories(dir, &result.train, &result.test).map_err(wrap)?;
    write_basis(dir, &result.basis).map_err(wrap)?;
    io::write_indices(&dir.join("sensors.csv"), result.core.selection().indices()).map_err(wrap)?;
    io::write_series(
        &dir.join("observations.csv"),
        result.observations.times(),
        result.observations.samples(),
    )
    .map_err(wrap)?;
    io::write_scalar_series(
        &dir.join("errors_vanilla.csv"),
        &result.vanilla_errors.times,
        &result.vanilla_errors.values,
    )
    .map_err(wrap)?;
    let das = result.dasdeim_errors();
    io::write_scalar_series(&dir.join("errors_dasdeim.csv"), &das.times, &das.values).map_err(wrap)?;
    io::write_series(&dir.join("xi_path.csv"), &result.run.times, &result.run.xi_path).map_err(wrap)?;
    io::write_trajectory(&dir.join("reconstruction_dasdeim.csv"), &result.run.reconstruction)
        .map_err(wrap)?;
    io::write_trajectory(&dir.join("reconstruction_vanilla.csv"), &result.vanilla).map_err(wrap)?;
    write_curve(
        &dir.join("prefactor_curve.csv"),
        &result.summary.prefactor_curve,
        &result.summary.prefactor_curve_replaced,
    )
    .map_err(wrap)?;
    io::write_json(&dir.join("summary.json"), &result.summary).map_err(wrap)
}

/// Runs the whole pipeline and writes its artifacts to `cfg.output_dir`.
pub fn cmd_pipeline(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let result = run_experiment(cfg)?;
    write_artifacts(&result, &cfg.output_dir)?;
    Ok(result)
}
