//! Experiment runner: config in, CSVs, plot scripts and a checksummed manifest out.
//!
//! Every run writes `manifest.toml` into its output directory, also when the experiment fails
//! part way; [`RunManifest::pass`] is the exit-status contract of the CLI.

pub mod checks;
pub mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attractors::{MarcusRdeFlow, PullbackSettings};
use crate::conjugacy_ito::{build_cohomology, verify_conjugacy_ito, CohomologyOptions};
use crate::error::{Error, Result};
use crate::levy_paths::{path_table, sample_path, TimeGrid, TwoSidedPath};
use crate::linearization::{
    linearize, lyapunov_exponents, scalar_example_suite, verify_step2_conjugacy, DEFAULT_LADDER,
};
use crate::marcus::{ou_path, verify_conjugacy_marcus};
use crate::rng::derive_seed;
use crate::table::{format_float, Table};

pub use checks::{run_criterion, sci, CheckOutcome, CRITERIA};
pub use config::{
    load_config, BuiltinSystem, ExperimentConfig, ExperimentKind, NumericsConfig, SystemConfig, TripletConfig,
};

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub pass: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
    pub runtime_s: f64,
}

impl From<&CheckOutcome> for CheckRecord {
    fn from(o: &CheckOutcome) -> Self {
        Self {
            name: format!("c{:02}-{}", o.id, o.name),
            pass: o.pass,
            measured: o.measured,
            threshold: o.threshold,
            detail: o.detail.clone(),
            runtime_s: o.runtime_s,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub code_version: String,
    pub wall_time_s: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub checks: Vec<CheckRecord>,
    pub outputs: Vec<OutputFile>,
    pub config: ExperimentConfig,
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{MANIFEST_FILE}: {e}")))
    }

    /// Re-reads every listed output and compares size and checksum.
    pub fn validate(&self, dir: &Path) -> Result<()> {
        for o in &self.outputs {
            let bytes = fs::read(dir.join(&o.file))?;
            if bytes.len() as u64 != o.bytes || sha256(&bytes) != o.sha256 {
                return Err(Error::Config(format!("output `{}` does not match its checksum", o.file)));
            }
        }
        Ok(())
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &CheckRecord> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects outputs of one run.
struct Outputs {
    dir: PathBuf,
    files: Vec<OutputFile>,
    checks: Vec<CheckRecord>,
}

impl Outputs {
    fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.push(OutputFile { file: name.into(), sha256: sha256(bytes), bytes: bytes.len() as u64 });
        Ok(())
    }

    /// Writes `stem.csv` and its plot script `stem.gp`.
    fn table(&mut self, stem: &str, table: &Table) -> Result<()> {
        self.write_bytes(&format!("{stem}.csv"), table.to_string().as_bytes())?;
        self.write_bytes(&format!("{stem}.gp"), plot_script(stem, table).as_bytes())
    }

    fn check(&mut self, name: &str, pass: bool, measured: f64, threshold: f64, detail: String) {
        self.checks.push(CheckRecord { name: name.into(), pass, measured, threshold, detail, runtime_s: 0.0 });
    }
}

/// Gnuplot script plotting every column against the first.
pub fn plot_script(stem: &str, table: &Table) -> String {
    let mut s = format!(
        "set datafile separator ','\nset key autotitle columnhead\nset terminal pngcairo size 1000,640\nset output '{stem}.png'\nset xlabel '{}'\n",
        table.header.first().map(String::as_str).unwrap_or("")
    );
    let series: Vec<String> =
        (2..=table.header.len()).map(|k| format!("'{stem}.csv' using 1:{k} with linespoints pointsize 0.4")).collect();
    if series.is_empty() {
        s += &format!("plot '{stem}.csv' using 0:1 with points\n");
    } else {
        s += &format!("plot {}\n", series.join(", \\\n     "));
    }
    s
}

/// Runs the configured experiment into `out_dir` on a pool of `numerics.workers` threads.
/// Experiment errors do not abort: they are recorded in the returned manifest, which is written
/// either way. Only an unusable output directory is an `Err`.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunManifest> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.numerics.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let mut out = Outputs { dir: out_dir.to_path_buf(), files: vec![], checks: vec![] };
    let result = pool.install(|| match config.kind {
        ExperimentKind::SimulateLevy => simulate_levy(config, &mut out),
        ExperimentKind::ItoConjugacy => ito_conjugacy(config, &mut out),
        ExperimentKind::MarcusConjugacy => marcus_conjugacy(config, &mut out),
        ExperimentKind::Attractor => attractor(config, &mut out),
        ExperimentKind::Linearize => linearize_experiment(config, &mut out),
        ExperimentKind::VerifyAll => verify_all(config, &mut out),
    });
    let error = result.err().map(|e| e.to_string());
    let manifest = RunManifest {
        kind: config.kind,
        seed: config.seed,
        code_version: env!("CARGO_PKG_VERSION").into(),
        wall_time_s: start.elapsed().as_secs_f64(),
        pass: error.is_none() && out.checks.iter().all(|c| c.pass),
        error,
        checks: out.checks,
        outputs: out.files,
        config: config.clone(),
    };
    let text = toml::to_string(&manifest).map_err(|e| Error::Config(format!("manifest: {e}")))?;
    fs::write(out_dir.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}

/// Path on `[−past, horizon]` with the base step `dt`, sampled from the `name` stream.
fn config_path(cfg: &ExperimentConfig, past: f64, name: &str) -> Result<TwoSidedPath> {
    let n = &cfg.numerics;
    sample_path(&cfg.levy_triplet()?, (-past, n.horizon), n.dt, derive_seed(cfg.seed, name))
}

fn simulate_levy(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let n = &cfg.numerics;
    let path = config_path(cfg, n.past, "simulate-levy.path")?;
    let grid = TimeGrid::new(&path, -n.past, n.horizon, n.dt)?;
    let table = path_table(&path, &grid)?;
    out.table("path", &table)?;
    let back = Table::read_file(&out.dir.join("path.csv"))?;
    out.check(
        "path-csv-round-trip",
        back == table,
        table.rows.len() as f64,
        table.rows.len() as f64,
        format!("{} nodes", table.rows.len()),
    );
    Ok(())
}

fn ito_conjugacy(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let n = &cfg.numerics;
    let sys = cfg.ito_system(BuiltinSystem::Linear1d)?;
    let path = config_path(cfg, n.tail + 1.0, "ito-conjugacy.path")?;
    let grid = TimeGrid::new(&path, 0.0, n.horizon, n.dt)?;
    let field =
        build_cohomology(&sys, &path, &cfg.anchor_lattice(sys.dim())?, &grid, &CohomologyOptions::with_tail(n.tail))?;
    let report = verify_conjugacy_ito(&sys, &path, &cfg.x0(sys.dim())?, &field)?;
    out.table("residual", &report.to_table())?;
    out.table("sde", &report.sde.to_table())?;
    out.table("rde", &report.rde.to_table())?;
    out.table("cohomology", &field.to_table())?;
    let r = report.max_residual();
    out.check(
        "conjugacy-residual",
        r <= n.tolerance,
        r,
        n.tolerance,
        format!("{} extrapolations", report.extrapolations),
    );
    Ok(())
}

fn marcus_conjugacy(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let n = &cfg.numerics;
    let sys = cfg.marcus_system(BuiltinSystem::AffineMarcus)?;
    let path = config_path(cfg, n.tail + 1.0, "marcus-conjugacy.path")?;
    let grid = TimeGrid::new(&path, 0.0, n.horizon, n.dt)?;
    let report = verify_conjugacy_marcus(&sys, &path, &cfg.x0(sys.dim())?, &grid, n.mu, n.tail)?;
    out.table("residual", &report.to_table())?;
    out.table("sde", &report.sde.to_table())?;
    out.table("rde", &report.rde.to_table())?;
    out.table("ou", &ou_path(&path, n.mu, &grid, n.tail)?.to_table())?;
    let r = report.max_residual();
    out.check("conjugacy-residual", r <= n.tolerance, r, n.tolerance, String::new());
    Ok(())
}

fn attractor(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let n = &cfg.numerics;
    let sys = cfg.marcus_system(BuiltinSystem::DuffingVanDerPol)?;
    let path = config_path(cfg, n.pullback_time + n.tail + 1.0, "attractor.path")?;
    let settings = PullbackSettings {
        ball_radius: n.ball_radius,
        n_points: n.n_points,
        schedule: (1..=10).map(|k| n.pullback_time * k as f64 / 10.0).collect(),
        tol: n.tolerance,
        step: n.pullback_step,
    };
    let flow = MarcusRdeFlow { sys: &sys, mu: n.mu, tail_horizon: n.tail };
    let run = crate::attractors::estimate_attractor(&flow, &path, sys.dim(), &settings)?;
    out.table("pullback", &run.summary_table())?;
    out.table("clouds", &run.clouds_table())?;
    let last = run.successive_hausdorff.last().copied().unwrap_or(f64::NAN);
    out.check("pullback-converged", run.converged, last, n.tolerance, format!("converged at {:?}", run.converged_at));
    let bounded = run.dropped == 0 && run.diameters.iter().all(|d| d.is_finite());
    out.check("clouds-bounded", bounded, run.dropped as f64, 0.0, "dropped points".into());
    Ok(())
}

fn linearize_experiment(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let n = &cfg.numerics;
    let builtin = cfg.system.builtin.unwrap_or(BuiltinSystem::ScalarHartman);
    let sys = cfg.ito_system(BuiltinSystem::ScalarHartman)?;
    let lin = linearize(&sys)?;
    let triplet = cfg.levy_triplet()?;
    let path = config_path(cfg, n.tail + 1.0, "linearize.path")?;
    let grid = TimeGrid::new(&path, 0.0, n.horizon, n.dt)?;
    let spectrum_seed = derive_seed(cfg.seed, "linearize.spectrum");
    let spectrum = if builtin == BuiltinSystem::ScalarHartman {
        let suite = scalar_example_suite(
            cfg.scalar_example(),
            &path,
            &grid,
            &DEFAULT_LADDER,
            n.lyapunov_horizon,
            n.n_samples,
            spectrum_seed,
        )?;
        out.write_bytes("suite.txt", suite.to_text().as_bytes())?;
        let mut ladder = Table::new(["x0", "ratio", "nonlinear_final", "linear_final"]);
        for k in 0..suite.ladder.len() {
            ladder.push(vec![suite.ladder[k], suite.ratios[k], suite.nonlinear_final[k], suite.linear_final[k]]);
        }
        out.table("ladder", &ladder)?;
        out.check(
            "ladder-ratios-decreasing",
            suite.ratios_decreasing(),
            suite.ratios[suite.ratios.len() - 1],
            suite.ratios[0],
            sci(&suite.ratios),
        );
        out.check("zero-fixed", suite.zero_fixed, 0.0, 0.0, String::new());
        suite.spectrum
    } else {
        lyapunov_exponents(&lin, &triplet, n.lyapunov_horizon, n.dt, n.n_samples, spectrum_seed)?
    };
    out.write_bytes("spectrum.csv", spectrum.to_table().to_string().as_bytes())?;
    let field = build_cohomology(
        &lin.to_system(),
        &path,
        &cfg.anchor_lattice(lin.dim())?,
        &grid,
        &CohomologyOptions::with_tail(n.tail),
    )?;
    let step2 = verify_step2_conjugacy(&field, &lin, &path, &cfg.x0(lin.dim())?)?;
    out.table("step2", &step2.to_table())?;
    let r = step2.max_residual();
    out.check("step2-residual", r <= n.tolerance, r, n.tolerance, String::new());
    Ok(())
}

/// Runs criteria 1–12 and writes `checks.csv` plus one CSV per criterion table.
fn run_suite(seed: u64, out: &mut Outputs) -> Result<Vec<CheckOutcome>> {
    let outcomes: Vec<CheckOutcome> = (1..=12).map(|id| run_criterion(id, seed)).collect();
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(["id", "name", "pass", "measured", "threshold"])?;
    for o in &outcomes {
        w.write_record([
            o.id.to_string(),
            o.name.clone(),
            o.pass.to_string(),
            format_float(o.measured),
            format_float(o.threshold),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    out.write_bytes("checks.csv", &bytes)?;
    for o in &outcomes {
        for (label, table) in &o.tables {
            out.table(&format!("c{:02}_{}_{label}", o.id, o.name.replace('-', "_")), table)?;
        }
    }
    Ok(outcomes)
}

fn verify_all(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let outcomes = run_suite(cfg.seed, out)?;
    for o in &outcomes {
        out.checks.push(o.into());
    }
    if cfg.numerics.determinism_rerun {
        let start = Instant::now();
        let rerun_dir = out.dir.join("rerun");
        fs::create_dir_all(&rerun_dir)?;
        let mut rerun = Outputs { dir: rerun_dir.clone(), files: vec![], checks: vec![] };
        run_suite(cfg.seed, &mut rerun)?;
        fs::remove_dir_all(&rerun_dir)?;
        let csvs = |files: &[OutputFile]| -> Vec<(String, String)> {
            files.iter().filter(|f| f.file.ends_with(".csv")).map(|f| (f.file.clone(), f.sha256.clone())).collect()
        };
        let (a, b) = (csvs(&out.files), csvs(&rerun.files));
        let differing = a.iter().zip(&b).filter(|(x, y)| x != y).count() + a.len().abs_diff(b.len());
        out.checks.push(CheckRecord {
            name: "c13-determinism".into(),
            pass: differing == 0,
            measured: differing as f64,
            threshold: 0.0,
            detail: format!("{} CSVs compared byte for byte, {differing} differ", a.len()),
            runtime_s: start.elapsed().as_secs_f64(),
        });
    }
    Ok(())
}

/// `PASS`/`FAIL` line per check.
pub fn check_lines(manifest: &RunManifest) -> Vec<String> {
    manifest
        .checks
        .iter()
        .map(|c| {
            format!(
                "{} {}: measured {:e} vs threshold {:e}{}{}",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.threshold,
                if c.runtime_s > 0.0 { format!(" ({:.1} s)", c.runtime_s) } else { String::new() },
                if c.detail.is_empty() { String::new() } else { format!("; {}", c.detail) }
            )
        })
        .collect()
}
