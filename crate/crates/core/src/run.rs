//! Run directories: validated configuration, an append-only manifest, one
//! JSON record per step, and the verification, trace and report artifacts
//! derived from them.
//!
//! Layout of a run directory:
//!
//! ```text
//! config.json          normalized configuration
//! manifest.json        hash, seeds, per-step status, timestamps
//! init.json            F_0 and its rank margin
//! steps/step-NN.json   accepted step records
//! steps/step-NN.failed.json   diagnostics of a failed attempt
//! final.json           truncation ledger of the last map
//! verify.json, paths.csv, trace.json, trace.csv
//! report.json, ray.csv, histogram.csv
//! ```

use crate::geometry::{to_complex, Shell};
use crate::holo::{min_rank_margin, sample_zero_set, CandidateMap, Divisor};
use crate::induction::{
    finalize, init, j_lambda, step, Ambient, FinalArtifact, InductionConfig, InductionError,
    InductionState, LedgerEntry, Mode, Schedule, StepRecord, Variant,
};
use crate::labyrinth::{build, BuildConfig, Certificate, TangentLabyrinth};
use crate::okaweil::{FitReport, OkaWeilError};
use crate::poly::MultiPoly;
use crate::sampling::{ball_points, derive_seed, unit_vectors};
use crate::verify::trace::fiber_point;
use crate::verify::{
    completeness_summary, min_avoiding_path, min_band_path, trace_fiber, zero_avoidance,
    BandVerdict, CompletenessReport, PathSearchConfig, PathSearchResult, TraceConfig, TraceLedger,
    ZeroScan, ZeroScanConfig,
};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};
use thiserror::Error;

pub const TOOL: &str = "fibrelab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed run directory {path}: {msg}")]
    Malformed { path: PathBuf, msg: String },
    #[error(
        "run directory {0} is locked by another process (remove run.lock if that process is gone)"
    )]
    Locked(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("step {j} failed: {source}")]
    Step { j: usize, source: InductionError },
    #[error("labyrinth build failed: {0}")]
    Build(String),
    #[error("verification found {} counterexample(s): {}", .0.len(), .0.join("; "))]
    Counterexample(Vec<String>),
}

impl RunError {
    /// Process exit code: 2 for configuration and directory problems, 3 for
    /// construction failures, 4 for verification counterexamples.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_)
            | RunError::Malformed { .. }
            | RunError::Locked(_)
            | RunError::Io { .. } => 2,
            RunError::Step { .. } | RunError::Build(_) => 3,
            RunError::Counterexample(_) => 4,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Checks applied by `verify`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub interpolation_samples: usize,
    pub interpolation_value_tol: f64,
    pub interpolation_jacobian_tol: f64,
    pub zero_scan: ZeroScanConfig,
    pub paths: PathSearchConfig,
    /// Band parameters `lambda` checked by the band search and summarized
    /// in the completeness report.
    pub bands: Vec<f64>,
    /// The baseline crossing must be no longer than this multiple of the
    /// shell thickness.
    pub baseline_factor: f64,
    pub rank_samples: usize,
    pub trace: TraceConfig,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            interpolation_samples: 1000,
            interpolation_value_tol: 1e-10,
            interpolation_jacobian_tol: 1e-8,
            zero_scan: ZeroScanConfig::default(),
            paths: PathSearchConfig::default(),
            bands: vec![0.2],
            baseline_factor: 1.5,
            rank_samples: 4000,
            trace: TraceConfig::default(),
        }
    }
}

/// Plot data emitted by `report`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub rays: usize,
    pub samples_per_ray: usize,
    pub ray_radius: f64,
    pub hist_bins: usize,
    pub hist_log10_min: f64,
    pub hist_log10_max: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            rays: 16,
            samples_per_ray: 64,
            ray_radius: 0.999,
            hist_bins: 48,
            hist_log10_min: -8.0,
            hist_log10_max: 4.0,
        }
    }
}

/// Everything a run depends on. Unset fields take the desk-scale defaults:
/// `n = 2`, `q = 1`, `s = 2`, `h = z_1`, two steps of the default ball
/// schedule in exact zero mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub n: usize,
    pub q: usize,
    pub s: u32,
    pub mode: Mode,
    /// Components of `h`; defaults to `z_1`.
    pub divisor: Option<Vec<MultiPoly>>,
    pub steps: usize,
    /// Explicit schedule; defaults to the standard one for the ambient.
    pub schedule: Option<Schedule>,
    pub seed: u64,
    pub induction: InductionConfig,
    pub verify: VerifyConfig,
    pub report: ReportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 2,
            q: 1,
            s: 2,
            mode: Mode::default(),
            divisor: None,
            steps: 2,
            schedule: None,
            seed: 0,
            induction: InductionConfig::default(),
            verify: VerifyConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses JSON when the text starts with `{`, TOML otherwise.
    pub fn parse(text: &str) -> Result<Self, RunError> {
        let cfg: RunConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| RunError::Config(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn divisor(&self) -> Result<Divisor, RunError> {
        let comps = match &self.divisor {
            Some(c) => c.clone(),
            None => vec![MultiPoly::coordinate(self.n, 0)],
        };
        Divisor::new(comps, true).map_err(|e| RunError::Config(e.to_string()))
    }

    pub fn schedule(&self) -> Schedule {
        self.schedule
            .clone()
            .unwrap_or_else(|| match self.mode.ambient {
                Ambient::Ball => Schedule::default_ball(self.steps),
                Ambient::FullSpace => Schedule::default_full_space(self.steps),
            })
    }

    /// Radius of the region on which `F_0` must be submersive.
    pub fn ambient_radius(&self) -> f64 {
        match self.mode.ambient {
            Ambient::Ball => 1.0,
            Ambient::FullSpace => self.schedule().outer.last().copied().unwrap_or(1.0),
        }
    }

    /// The induction configuration with its seed derived from the run seed.
    pub fn induction_config(&self) -> InductionConfig {
        let mut c = self.induction.clone();
        c.order = self.s;
        c.seed = derive_seed(self.seed, "induction", 0);
        c
    }

    /// Per-purpose seeds, all derived from `seed`.
    pub fn seeds(&self) -> BTreeMap<String, u64> {
        [
            "induction",
            "paths",
            "zero-scan",
            "interpolation",
            "rank",
            "rays",
            "validation",
        ]
        .iter()
        .map(|p| (p.to_string(), derive_seed(self.seed, p, 0)))
        .collect()
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        if self.n < 2 {
            return bad(format!(
                "n = {} but at least 2 variables are needed",
                self.n
            ));
        }
        if self.q == 0 || self.q >= self.n {
            return bad(format!(
                "q = {} must satisfy 1 <= q < n = {}",
                self.q, self.n
            ));
        }
        if self.s == 0 {
            return bad("s must be at least 1".into());
        }
        if self.steps == 0 {
            return bad("steps must be at least 1".into());
        }
        let h = self.divisor()?;
        if h.n() != self.n || h.q() != self.q {
            return bad(format!(
                "divisor has n = {}, q = {} but the run declares n = {}, q = {}",
                h.n(),
                h.q(),
                self.n,
                self.q
            ));
        }
        let sched = self.schedule();
        if sched.steps() != self.steps {
            return bad(format!(
                "schedule has {} steps but steps = {}",
                sched.steps(),
                self.steps
            ));
        }
        sched
            .validate(self.mode.ambient)
            .map_err(|e| RunError::Config(e.to_string()))?;
        if self.mode.variant == Variant::AllComplete {
            let v = sample_zero_set(
                &h,
                self.ambient_radius(),
                200,
                derive_seed(self.seed, "mode-check", 0),
            );
            if !v.is_empty() {
                return bad(
                    "ALL_COMPLETE needs a divisor without zeros in the ambient region".into(),
                );
            }
        }
        for (name, xs) in [("bands", &self.verify.bands)] {
            if xs.iter().any(|&l| !(l > 0.0 && l < 1.0)) {
                return bad(format!("every entry of verify.{name} must lie in (0, 1)"));
            }
        }
        if self.report.samples_per_ray < 2 || self.report.rays == 0 {
            return bad("report needs at least one ray with two samples".into());
        }
        if self.report.hist_bins == 0 || !(self.report.hist_log10_min < self.report.hist_log10_max)
        {
            return bad("histogram range is empty".into());
        }
        Ok(())
    }

    /// SHA-256 of the normalized JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StepState {
    Accepted,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepStatus {
    pub j: usize,
    pub status: StepState,
    pub started: u64,
    pub finished: u64,
    pub file: String,
    pub message: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceSummary {
    pub scheduled: usize,
    pub accepted: usize,
    pub complete: bool,
}

/// Append-only record of a run. Accepted entries are never rewritten.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub created: u64,
    pub updated: u64,
    pub steps: Vec<StepStatus>,
    pub acceptance: AcceptanceSummary,
}

impl RunManifest {
    pub fn new(cfg: &RunConfig) -> Self {
        let t = now();
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            config_hash: cfg.hash(),
            seeds: cfg.seeds(),
            created: t,
            updated: t,
            steps: Vec::new(),
            acceptance: AcceptanceSummary {
                scheduled: cfg.steps,
                accepted: 0,
                complete: false,
            },
        }
    }

    pub fn accepted(&self) -> Vec<&StepStatus> {
        self.steps
            .iter()
            .filter(|s| s.status == StepState::Accepted)
            .collect()
    }

    fn record(&mut self, status: StepStatus) {
        self.steps.push(status);
        let accepted = self.accepted().len();
        self.acceptance.accepted = accepted;
        self.acceptance.complete = accepted == self.acceptance.scheduled;
        self.updated = now();
    }
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// `F_0` with the rank margin found by `init`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitRecord {
    pub f0: CandidateMap,
    pub eps0: f64,
    pub initial_margin: f64,
}

/// Diagnostics of a failed step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepFailure {
    pub j: usize,
    pub error: String,
    /// Degree attempts when the fit ran out of degrees.
    pub fit: Option<FitReport>,
}

impl StepFailure {
    fn new(j: usize, e: &InductionError) -> Self {
        let fit = match e {
            InductionError::Fit(OkaWeilError::DegreeCapExceeded { report, .. }) => {
                Some((**report).clone())
            }
            _ => None,
        };
        Self {
            j,
            error: e.to_string(),
            fit,
        }
    }
}

/// Exclusive ownership of a run directory for the lifetime of the value.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self, RunError> {
        let path = dir.join("run.lock");
        match fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(mut f) => {
                use std::io::Write;
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(RunError::Locked(dir.to_path_buf()))
            }
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Writes pretty JSON through a temporary file and a rename.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifacts serialize");
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), RunError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, text).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, RunError> {
    let text = fs::read_to_string(path).map_err(|e| RunError::Malformed {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| RunError::Malformed {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

pub fn step_file(j: usize) -> String {
    format!("steps/step-{j:02}.json")
}

pub fn failure_file(j: usize) -> String {
    format!("steps/step-{j:02}.failed.json")
}

/// Everything a run directory holds, parsed.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub manifest: RunManifest,
    pub init: InitRecord,
    pub records: Vec<StepRecord>,
    pub failures: Vec<StepFailure>,
    pub final_artifact: Option<FinalArtifact>,
    pub verification: Option<VerificationReport>,
    pub trace: Option<TraceRecord>,
    pub report: Option<RunReport>,
}

impl RunDir {
    pub fn open(dir: &Path) -> Result<Self, RunError> {
        let malformed = |msg: String| RunError::Malformed {
            path: dir.to_path_buf(),
            msg,
        };
        let config: RunConfig = read_json(&dir.join("config.json"))?;
        config.validate().map_err(|e| malformed(e.to_string()))?;
        let manifest: RunManifest = read_json(&dir.join("manifest.json"))?;
        if manifest.config_hash != config.hash() {
            return Err(malformed(
                "config.json does not match the manifest hash".into(),
            ));
        }
        let init: InitRecord = read_json(&dir.join("init.json"))?;
        let mut records = Vec::new();
        for (k, s) in manifest.accepted().iter().enumerate() {
            if s.j != k + 1 {
                return Err(malformed(format!(
                    "accepted steps out of order at step {}",
                    s.j
                )));
            }
            let r: StepRecord = read_json(&dir.join(&s.file))?;
            if r.j != s.j {
                return Err(malformed(format!("{} holds step {}", s.file, r.j)));
            }
            records.push(r);
        }
        let failures = manifest
            .steps
            .iter()
            .filter(|s| s.status == StepState::Failed)
            .map(|s| read_json(&dir.join(&s.file)))
            .collect::<Result<Vec<StepFailure>, _>>()?;
        let optional = |name: &str| {
            let p = dir.join(name);
            p.exists().then_some(p)
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            final_artifact: optional("final.json").map(|p| read_json(&p)).transpose()?,
            verification: optional("verify.json").map(|p| read_json(&p)).transpose()?,
            trace: optional("trace.json").map(|p| read_json(&p)).transpose()?,
            report: optional("report.json").map(|p| read_json(&p)).transpose()?,
            config,
            manifest,
            init,
            records,
            failures,
        })
    }

    /// The induction state after the accepted steps.
    pub fn state(&self) -> Result<InductionState, RunError> {
        InductionState::resume(
            self.config.mode,
            self.init.f0.clone(),
            self.init.eps0,
            self.init.initial_margin,
            self.records.clone(),
        )
        .map_err(|e| RunError::Malformed {
            path: self.dir.clone(),
            msg: e.to_string(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstructOutcome {
    pub accepted: usize,
    pub scheduled: usize,
    /// Steps run by this invocation.
    pub ran: usize,
}

/// Builds or resumes the run in `dir`. Without `resume`, `dir` must not
/// hold a run yet. With `resume`, a stored configuration is reused and a
/// supplied one must hash identically.
pub fn construct(
    config: Option<&RunConfig>,
    dir: &Path,
    resume: bool,
) -> Result<ConstructOutcome, RunError> {
    if let Some(c) = config {
        c.validate()?;
    }
    let existing = dir.join("manifest.json").exists();
    if existing && !resume {
        return Err(RunError::Config(format!(
            "{} already holds a run; pass --resume to continue it",
            dir.display()
        )));
    }
    let config = if existing {
        let stored: RunConfig = read_json(&dir.join("config.json"))?;
        if let Some(c) = config {
            if c.hash() != stored.hash() {
                return Err(RunError::Config(
                    "the supplied configuration differs from the one stored in the run".into(),
                ));
            }
        }
        stored
    } else {
        let c = config
            .cloned()
            .ok_or_else(|| RunError::Config("a configuration is required for a new run".into()))?;
        fs::create_dir_all(dir.join("steps")).map_err(io_err(dir))?;
        c
    };
    let _lock = RunLock::acquire(dir)?;
    let cfg = config.induction_config();
    let schedule = config.schedule();
    if !existing {
        write_json(&dir.join("config.json"), &config)?;
        write_json(&dir.join("manifest.json"), &RunManifest::new(&config))?;
    }
    let mut manifest: RunManifest = read_json(&dir.join("manifest.json"))?;
    if !dir.join("init.json").exists() {
        let st = init(
            config.divisor()?,
            config.mode,
            config.ambient_radius(),
            &cfg,
        )
        .map_err(|source| RunError::Step { j: 0, source })?;
        write_json(
            &dir.join("init.json"),
            &InitRecord {
                f0: st.maps[0].clone(),
                eps0: cfg.eps0,
                initial_margin: st.initial_margin,
            },
        )?;
    }
    let run = RunDir::open(dir)?;
    let mut state = run.state()?;
    let mut ran = 0;
    while state.j() < schedule.steps() {
        let j = state.j() + 1;
        let started = now();
        ran += 1;
        match step(&mut state, &schedule, &cfg) {
            Ok(rec) => {
                let file = step_file(j);
                write_json(&dir.join(&file), rec)?;
                manifest.record(StepStatus {
                    j,
                    status: StepState::Accepted,
                    started,
                    finished: now(),
                    file,
                    message: None,
                });
                write_json(&dir.join("manifest.json"), &manifest)?;
            }
            Err(source) => {
                let file = failure_file(j);
                write_json(&dir.join(&file), &StepFailure::new(j, &source))?;
                manifest.record(StepStatus {
                    j,
                    status: StepState::Failed,
                    started,
                    finished: now(),
                    file,
                    message: Some(source.to_string()),
                });
                write_json(&dir.join("manifest.json"), &manifest)?;
                return Err(RunError::Step { j, source });
            }
        }
    }
    let final_path = dir.join("final.json");
    if ran > 0 || !final_path.exists() {
        write_json(&final_path, &finalize(&state, &schedule, &cfg))?;
    }
    Ok(ConstructOutcome {
        accepted: state.j(),
        scheduled: schedule.steps(),
        ran,
    })
}

/// Values and first derivatives of `F_J` against `h` on sampled points of `V`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationCheck {
    pub samples: usize,
    pub radius: f64,
    pub max_abs_f: f64,
    pub max_jacobian_gap: f64,
    pub value_tol: f64,
    pub jacobian_tol: f64,
    pub passes: bool,
}

/// Shortest crossing found around one step's labyrinth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabyrinthPaths {
    pub j: usize,
    pub delta: f64,
    pub certificate: Certificate,
    pub best_length: Option<f64>,
    pub restarts: usize,
    pub passes: bool,
}

/// Band search on `F_J` across shell `j_lambda`, with the same search on `F_0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandCheck {
    pub lambda: f64,
    pub j_lambda: Option<usize>,
    pub verdict: Option<BandVerdict>,
    pub baseline_length: Option<f64>,
    pub baseline_bound: Option<f64>,
    pub contrast: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub accepted_steps: usize,
    pub interpolation: Option<InterpolationCheck>,
    pub zero_scan: Option<ZeroScan>,
    pub rank_margin: f64,
    pub ledger: Vec<LedgerEntry>,
    pub labyrinth_paths: Vec<LabyrinthPaths>,
    pub bands: Vec<BandCheck>,
    pub counterexamples: Vec<String>,
}

/// Checks `F_J` against `h` on `count` points of `V` in the ball of radius `radius`.
pub fn interpolation_check(
    f: &CandidateMap,
    radius: f64,
    count: usize,
    seed: u64,
    value_tol: f64,
    jacobian_tol: f64,
) -> Option<InterpolationCheck> {
    if !f.is_pinned() {
        return None;
    }
    let h = f.divisor();
    let pts = sample_zero_set(h, radius, count, seed);
    let (max_abs_f, max_jacobian_gap) = pts
        .par_iter()
        .map(|p| {
            let jf = f.jacobian(p);
            let jh = h.jacobian(&to_complex(p));
            let gap = (&jf - &jh).iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            (f.abs(p), gap)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    Some(InterpolationCheck {
        samples: pts.len(),
        radius,
        max_abs_f,
        max_jacobian_gap,
        value_tol,
        jacobian_tol,
        passes: !pts.is_empty() && max_abs_f < value_tol && max_jacobian_gap < jacobian_tol,
    })
}

/// Band search on `f` across shell `j_lambda` of the schedule, contrasted
/// with the same search on `baseline`.
pub fn band_check(
    f: &CandidateMap,
    baseline: &CandidateMap,
    schedule: &Schedule,
    eps: &[f64],
    accepted: usize,
    lambda: f64,
    cfg: &VerifyConfig,
    seed: u64,
) -> BandCheck {
    let Ok(jl) = j_lambda(schedule, eps, lambda, accepted) else {
        return BandCheck {
            lambda,
            j_lambda: None,
            verdict: None,
            baseline_length: None,
            baseline_bound: None,
            contrast: false,
        };
    };
    let shell = schedule.shell(jl).expect("validated schedule");
    let mut pcfg = cfg.paths.clone();
    pcfg.seed = seed;
    let after = min_band_path(&shell, f, lambda, &pcfg);
    let verdict = BandVerdict::from_search(jl, lambda, schedule.delta[jl - 1], &after);
    let before = min_band_path(&shell, baseline, lambda, &pcfg);
    let bound = cfg.baseline_factor * (shell.outer() - shell.inner());
    let baseline_length = before.best_length();
    BandCheck {
        lambda,
        j_lambda: Some(jl),
        contrast: verdict.passes && baseline_length.is_some_and(|l| l <= bound),
        verdict: Some(verdict),
        baseline_length,
        baseline_bound: Some(bound),
    }
}

/// Re-checks a run. Path searches run only when asked for; their restart
/// tables go to `paths.csv`. Counterexamples make the call fail after
/// `verify.json` is written.
pub fn verify(dir: &Path, paths: bool, bands: bool) -> Result<VerificationReport, RunError> {
    let run = RunDir::open(dir)?;
    let _lock = RunLock::acquire(dir)?;
    let cfg = &run.config;
    let vcfg = &cfg.verify;
    let schedule = cfg.schedule();
    let state = run.state()?;
    let big_j = state.j();
    let f = state.current();
    let radius = if big_j == 0 {
        schedule.base
    } else {
        schedule.inner[big_j - 1]
    };
    let mut counterexamples = Vec::new();

    let interpolation = interpolation_check(
        f,
        radius,
        vcfg.interpolation_samples,
        derive_seed(cfg.seed, "interpolation", 0),
        vcfg.interpolation_value_tol,
        vcfg.interpolation_jacobian_tol,
    );
    if let Some(i) = interpolation.as_ref().filter(|i| !i.passes) {
        counterexamples.push(format!(
            "F differs from h on V: |F| up to {}, |dF - dh| up to {}",
            i.max_abs_f, i.max_jacobian_gap
        ));
    }
    let zero_scan = (cfg.mode.variant == Variant::ExactZero).then(|| {
        let mut z = vcfg.zero_scan.clone();
        z.radius = radius;
        z.seed = derive_seed(cfg.seed, "zero-scan", 0);
        let protected: Vec<_> = state.records.iter().map(|r| r.neighborhood()).collect();
        zero_avoidance(f, &protected, &z)
    });
    if let Some(z) = zero_scan.as_ref().filter(|z| !z.zero_free()) {
        counterexamples.push(format!(
            "{} zero(s) of F off V inside radius {}",
            z.zeros.len(),
            radius
        ));
    }
    let rank_radius = if big_j == 0 {
        schedule.base
    } else {
        schedule.outer[big_j - 1]
    };
    let rank_pts = ball_points(
        f.n(),
        rank_radius,
        vcfg.rank_samples,
        derive_seed(cfg.seed, "rank", 0),
    );
    let rank_margin = min_rank_margin(f, &rank_pts);
    if !(rank_margin > 0.0) {
        counterexamples.push(format!(
            "rank margin {rank_margin} on the ball of radius {rank_radius}"
        ));
    }
    let ledger = finalize(&state, &schedule, &cfg.induction_config()).ledger;
    for e in ledger.iter().filter(|e| !e.sampled_holds || !e.tail_holds) {
        counterexamples.push(format!("truncation ledger fails at step {}", e.j));
    }

    let mut labyrinth_paths = Vec::new();
    if paths {
        let mut csv = String::from("step,restart,length,feasible\n");
        for r in &state.records {
            let lab = &r.labyrinth.labyrinth;
            let mut pcfg = vcfg.paths.clone();
            pcfg.seed = derive_seed(cfg.seed, "paths", r.j as u64);
            let res = min_avoiding_path(lab.shell(), lab, &pcfg);
            append_restarts(&mut csv, r.j, &res);
            let best_length = res.best_length();
            let passes = best_length.is_none_or(|l| l > r.delta);
            if !passes {
                counterexamples.push(format!(
                    "crossing of length {} avoids labyrinth {} with budget {}",
                    best_length.unwrap_or(f64::NAN),
                    r.j,
                    r.delta
                ));
            }
            labyrinth_paths.push(LabyrinthPaths {
                j: r.j,
                delta: r.delta,
                certificate: lab.certificate().clone(),
                best_length,
                restarts: res.restarts.len(),
                passes,
            });
        }
        write_text(&dir.join("paths.csv"), &csv)?;
    }

    let mut band_checks = Vec::new();
    if bands {
        for (k, &lambda) in vcfg.bands.iter().enumerate() {
            let b = band_check(
                f,
                &state.maps[0],
                &schedule,
                state.eps.values(),
                big_j,
                lambda,
                vcfg,
                derive_seed(cfg.seed, "band", k as u64),
            );
            if let Some(v) = b.verdict.as_ref().filter(|v| !v.passes) {
                counterexamples.push(format!(
                    "band path of length {} in shell {} for lambda {}",
                    v.best_length.unwrap_or(f64::NAN),
                    v.shell,
                    lambda
                ));
            }
            band_checks.push(b);
        }
    }

    let report = VerificationReport {
        accepted_steps: big_j,
        interpolation,
        zero_scan,
        rank_margin,
        ledger,
        labyrinth_paths,
        bands: band_checks,
        counterexamples,
    };
    write_json(&dir.join("verify.json"), &report)?;
    if report.counterexamples.is_empty() {
        Ok(report)
    } else {
        Err(RunError::Counterexample(report.counterexamples.clone()))
    }
}

fn append_restarts(csv: &mut String, j: usize, res: &PathSearchResult) {
    for line in res.to_csv().lines().skip(1) {
        csv.push_str(&format!("{j},{line}\n"));
    }
}

/// A traced fiber of `F_map`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub map: usize,
    pub start: Vec<f64>,
    pub ledger: TraceLedger,
}

/// Traces the fiber `F_map = c` from the fiber point nearest `start`,
/// writing `trace.json` and `trace.csv`. `map` defaults to the last
/// accepted step.
pub fn trace(
    dir: &Path,
    c: Complex64,
    start: &[f64],
    map: Option<usize>,
) -> Result<TraceRecord, RunError> {
    let run = RunDir::open(dir)?;
    let _lock = RunLock::acquire(dir)?;
    let state = run.state()?;
    let k = map.unwrap_or(state.j());
    let f = state.maps.get(k).ok_or_else(|| {
        RunError::Config(format!(
            "map {k} does not exist; the run has {} accepted steps",
            state.j()
        ))
    })?;
    if start.len() != 2 * f.n() {
        return Err(RunError::Config(format!(
            "start point has {} coordinates, expected {}",
            start.len(),
            2 * f.n()
        )));
    }
    let schedule = run.config.schedule();
    let shells: Vec<Shell> = (1..=schedule.steps())
        .map(|j| schedule.shell(j).expect("validated schedule"))
        .collect();
    let tcfg = &run.config.verify.trace;
    let cs = vec![c; f.q()];
    let z0 = fiber_point(f, &cs, start, tcfg).ok_or_else(|| {
        RunError::Config(format!(
            "no point of the fiber F = {c} near the start point"
        ))
    })?;
    let ledger = trace_fiber(f, &cs, &z0, &shells, tcfg)
        .map_err(|e| RunError::Config(format!("trace failed: {e}")))?;
    write_text(&dir.join("trace.csv"), &ledger.to_csv())?;
    let rec = TraceRecord {
        map: k,
        start: z0,
        ledger,
    };
    write_json(&dir.join("trace.json"), &rec)?;
    Ok(rec)
}

/// A standalone labyrinth job.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabyrinthJob {
    pub inner: f64,
    pub outer: f64,
    pub delta: f64,
    pub eta: Option<f64>,
    pub n: usize,
    pub build: BuildConfig,
    pub paths: PathSearchConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabyrinthOutcome {
    pub labyrinth: TangentLabyrinth,
    pub max_diameter: f64,
    pub best_length: Option<f64>,
    pub restarts: usize,
    pub passes: bool,
}

/// Builds and re-certifies a labyrinth, writing `labyrinth.json` and
/// `paths.csv` into `out`.
pub fn labyrinth_job(job: &LabyrinthJob, out: &Path) -> Result<LabyrinthOutcome, RunError> {
    let shell = Shell::new(job.inner, job.outer).map_err(|e| RunError::Config(e.to_string()))?;
    if !(job.delta.is_finite()) || job.eta.is_some_and(|e| !(e > 0.0)) || job.n < 2 {
        return Err(RunError::Config(
            "delta must be finite, eta positive and n >= 2".into(),
        ));
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    let lab = build(&shell, job.delta, job.eta, job.n, &job.build)
        .map_err(|e| RunError::Build(e.to_string()))?;
    let res = min_avoiding_path(&shell, &lab, &job.paths);
    let mut csv = String::from("step,restart,length,feasible\n");
    append_restarts(&mut csv, 0, &res);
    write_text(&out.join("paths.csv"), &csv)?;
    let best_length = res.best_length();
    let outcome = LabyrinthOutcome {
        max_diameter: lab
            .components()
            .iter()
            .map(|b| b.diameter())
            .fold(0.0, f64::max),
        passes: best_length.is_none_or(|l| l > job.delta),
        labyrinth: lab,
        best_length,
        restarts: res.restarts.len(),
    };
    write_json(&out.join("labyrinth.json"), &outcome)?;
    if outcome.passes {
        Ok(outcome)
    } else {
        Err(RunError::Counterexample(vec![format!(
            "crossing of length {} with budget {}",
            best_length.unwrap_or(f64::NAN),
            job.delta
        )]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

/// `|F_j|` on the labyrinth validation samples of step `j`, binned in
/// `log10`, with the counts below, inside and above `[lambda_j, 1/lambda_j]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepHistogram {
    pub j: usize,
    pub lambda: f64,
    pub samples: usize,
    pub below: usize,
    pub inside: usize,
    pub above: usize,
    pub gap_empty: bool,
    pub bins: Vec<HistogramBin>,
}

pub fn step_histogram(r: &StepRecord, cfg: &ReportConfig) -> StepHistogram {
    let values = &r.fit.verdicts.details.labyrinth_abs;
    let lambda = r.lambda;
    let width = (cfg.hist_log10_max - cfg.hist_log10_min) / cfg.hist_bins as f64;
    let mut bins: Vec<HistogramBin> = (0..cfg.hist_bins)
        .map(|k| HistogramBin {
            lo: 10f64.powf(cfg.hist_log10_min + width * k as f64),
            hi: 10f64.powf(cfg.hist_log10_min + width * (k + 1) as f64),
            count: 0,
        })
        .collect();
    let (mut below, mut inside, mut above) = (0, 0, 0);
    for &v in values {
        if v < lambda {
            below += 1;
        } else if v > 1.0 / lambda {
            above += 1;
        } else {
            inside += 1;
        }
        let k = ((v.log10() - cfg.hist_log10_min) / width).floor();
        let k = if k.is_finite() {
            k.clamp(0.0, (cfg.hist_bins - 1) as f64)
        } else {
            0.0
        };
        bins[k as usize].count += 1;
    }
    StepHistogram {
        j: r.j,
        lambda,
        samples: values.len(),
        below,
        inside,
        above,
        gap_empty: inside == 0,
        bins,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaySummary {
    pub rays: usize,
    pub samples_per_ray: usize,
    pub radius: f64,
    pub max_abs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub manifest: RunManifest,
    pub final_artifact: FinalArtifact,
    pub rays: RaySummary,
    pub histograms: Vec<StepHistogram>,
    pub failures: Vec<StepFailure>,
    pub verification: Option<VerificationReport>,
    pub trace: Option<TraceRecord>,
    pub completeness: CompletenessReport,
}

/// Consolidates a run into `report.json`, `ray.csv` and `histogram.csv`.
pub fn report(dir: &Path) -> Result<RunReport, RunError> {
    let run = RunDir::open(dir)?;
    let _lock = RunLock::acquire(dir)?;
    let cfg = &run.config;
    let rcfg = &cfg.report;
    let schedule = cfg.schedule();
    let state = run.state()?;
    let f = state.current();

    let dirs = unit_vectors(2 * f.n(), rcfg.rays, derive_seed(cfg.seed, "rays", 0));
    let mut ray_csv = String::from("ray,index,radius,abs_f\n");
    let mut max_abs: f64 = 0.0;
    for (k, u) in dirs.iter().enumerate() {
        for i in 0..rcfg.samples_per_ray {
            let t = rcfg.ray_radius * i as f64 / (rcfg.samples_per_ray - 1) as f64;
            let p: Vec<f64> = u.iter().map(|x| x * t).collect();
            let a = f.abs(&p);
            max_abs = max_abs.max(a);
            ray_csv.push_str(&format!("{k},{i},{t:?},{a:?}\n"));
        }
    }
    write_text(&dir.join("ray.csv"), &ray_csv)?;

    let histograms: Vec<StepHistogram> = state
        .records
        .iter()
        .map(|r| step_histogram(r, rcfg))
        .collect();
    let mut hist_csv = String::from("step,lo,hi,count\n");
    for h in &histograms {
        for b in &h.bins {
            hist_csv.push_str(&format!("{},{:?},{:?},{}\n", h.j, b.lo, b.hi, b.count));
        }
    }
    write_text(&dir.join("histogram.csv"), &hist_csv)?;

    let final_artifact = run
        .final_artifact
        .clone()
        .filter(|a| a.steps == state.j())
        .unwrap_or_else(|| finalize(&state, &schedule, &cfg.induction_config()));
    let report = RunReport {
        manifest: run.manifest.clone(),
        completeness: completeness_summary(
            &schedule,
            state.eps.values(),
            state.j(),
            &cfg.verify.bands,
        ),
        final_artifact,
        rays: RaySummary {
            rays: rcfg.rays,
            samples_per_ray: rcfg.samples_per_ray,
            radius: rcfg.ray_radius,
            max_abs,
        },
        histograms,
        failures: run.failures.clone(),
        verification: run.verification.clone(),
        trace: run.trace.clone(),
    };
    write_json(&dir.join("report.json"), &report)?;
    Ok(report)
}

/// Parses a CSV file written by this module into its header and rows of
/// fields, checking that every row has as many fields as the header.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), RunError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| RunError::Malformed {
            path: path.to_path_buf(),
            msg: "empty CSV".into(),
        })?
        .split(',')
        .map(String::from)
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(String::from).collect::<Vec<_>>())
        .collect::<Vec<_>>();
    if let Some(k) = rows.iter().position(|r| r.len() != header.len()) {
        return Err(RunError::Malformed {
            path: path.to_path_buf(),
            msg: format!(
                "row {} has {} fields, header has {}",
                k + 1,
                rows[k].len(),
                header.len()
            ),
        });
    }
    Ok((header, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_hash_is_stable() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.hash(), RunConfig::default().hash());
        assert_eq!(c.hash().len(), 64);
        let mut d = c.clone();
        d.seed = 1;
        assert_ne!(c.hash(), d.hash());
    }

    #[test]
    fn toml_and_json_parse_equivalently() {
        let toml = r#"
            steps = 2
            seed = 7
            [mode]
            variant = "INTERPOLATE"
            ambient = "BALL"
            [[divisor]]
            n = 2
            [[divisor.terms]]
            alpha = [1, 0]
            re = 1.0
            im = 0.0
        "#;
        let a = RunConfig::parse(toml).unwrap();
        let json = serde_json::to_string(&a).unwrap();
        let b = RunConfig::parse(&json).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.seed, 7);
        assert_eq!(a.mode.variant, Variant::Interpolate);
        assert_eq!(a.divisor().unwrap(), Divisor::coordinate_hyperplane(2));
    }

    #[test]
    fn interlacing_violation_is_a_config_error() {
        let mut s = Schedule::default_ball(2);
        s.inner[0] = s.outer[0];
        let c = RunConfig {
            schedule: Some(s),
            ..Default::default()
        };
        let e = c.validate().unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("interlace"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("stepz = 3").is_err());
    }

    #[test]
    fn all_complete_needs_an_empty_zero_set() {
        let c = RunConfig {
            mode: Mode {
                variant: Variant::AllComplete,
                ambient: Ambient::Ball,
            },
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn lock_is_exclusive_and_released() {
        let dir = tempfile::tempdir().unwrap();
        let a = RunLock::acquire(dir.path()).unwrap();
        assert!(matches!(
            RunLock::acquire(dir.path()),
            Err(RunError::Locked(_))
        ));
        drop(a);
        RunLock::acquire(dir.path()).unwrap();
    }

    #[test]
    fn manifest_counts_acceptance() {
        let mut m = RunManifest::new(&RunConfig::default());
        m.record(StepStatus {
            j: 1,
            status: StepState::Failed,
            started: 0,
            finished: 0,
            file: failure_file(1),
            message: Some("x".into()),
        });
        assert_eq!(m.acceptance.accepted, 0);
        m.record(StepStatus {
            j: 1,
            status: StepState::Accepted,
            started: 0,
            finished: 0,
            file: step_file(1),
            message: None,
        });
        assert_eq!(m.acceptance.accepted, 1);
        assert!(!m.acceptance.complete);
        assert_eq!(m.steps.len(), 2);
    }
}
