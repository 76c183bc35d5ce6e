//! Experiment orchestration: TOML configuration, command-line overrides,
//! run modes (train / eval / sweep / selftest), and artifact output.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::channel::{gen_geometry, noise_normalized, ChannelBasis, SystemConfig};
use crate::error::{OutminError, Result};
use crate::evaluation::{
    rows_to_csv, summarize, summary_to_csv, sweep_pblock, Scheme, SweepSettings,
};
use crate::optimizer::{
    bsgd_outmin, init_state, BsgdOptions, SampleSource, ScheduleKind, StepSchedule, StopRule,
};
use crate::rng::{derive_seed, rng_from_seed};
use crate::selftest::run_selftests;

/// Like SystemConfig, but with the noise level in dBm; unit conversion
/// happens here at the config boundary and nowhere else.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemToml {
    pub n_tx: usize,
    pub n_rf: usize,
    pub n_users: usize,
    pub n_ris: usize,
    pub m_rows: usize,
    pub m_cols: usize,
    pub p_max: f64,
    pub noise_dbm: f64,
    pub sinr_targets: Vec<f64>,
    pub epsilon: f64,
    pub p_block: f64,
    pub n_paths_bu: usize,
    pub n_paths_bi: usize,
    pub n_paths_iu: usize,
    pub geometry: crate::channel::GeometryConfig,
    #[serde(default)]
    pub pathloss: crate::channel::PathlossConfig,
}

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl SystemToml {
    pub fn to_system_config(&self) -> SystemConfig {
        SystemConfig {
            n_tx: self.n_tx,
            n_rf: self.n_rf,
            n_users: self.n_users,
            n_ris: self.n_ris,
            m_rows: self.m_rows,
            m_cols: self.m_cols,
            p_max: self.p_max,
            noise_power: dbm_to_watts(self.noise_dbm),
            sinr_targets: self.sinr_targets.clone(),
            epsilon: self.epsilon,
            p_block: self.p_block,
            n_paths_bu: self.n_paths_bu,
            n_paths_bi: self.n_paths_bi,
            n_paths_iu: self.n_paths_iu,
            geometry: self.geometry.clone(),
            pathloss: self.pathloss.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleToml {
    pub kind: ScheduleKind,
    pub alpha0: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn default_tau() -> f64 {
    1000.0
}

impl ScheduleToml {
    pub fn to_schedule(&self) -> StepSchedule {
        StepSchedule {
            kind: self.kind,
            alpha0: self.alpha0,
            tau: self.tau,
            lipschitz_cap: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepToml {
    pub p_grid: Vec<f64>,
    pub n_geometries: usize,
    pub n_eval_trials: usize,
    #[serde(default = "all_schemes")]
    pub schemes: Vec<Scheme>,
}

fn all_schemes() -> Vec<Scheme> {
    Scheme::ALL.to_vec()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalToml {
    pub n_trials: usize,
}

/// The whole experiment file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub noise_normalize: bool,
    pub system: SystemToml,
    pub schedule: ScheduleToml,
    #[serde(default)]
    pub stop: StopRule,
    pub sweep: SweepToml,
    pub eval: EvalToml,
}

fn default_seed() -> u64 {
    1
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg = self.system.to_system_config();
        cfg.validate()?;
        if self.sweep.p_grid.is_empty() {
            return Err(OutminError::Config("sweep.p_grid must be nonempty".into()));
        }
        if self
            .sweep
            .p_grid
            .iter()
            .any(|p| !(0.0..=1.0).contains(p))
        {
            return Err(OutminError::Config(
                "sweep.p_grid entries must lie in [0,1]".into(),
            ));
        }
        if self.sweep.n_geometries == 0 || self.sweep.n_eval_trials == 0 {
            return Err(OutminError::Config(
                "sweep.n_geometries and sweep.n_eval_trials must be positive".into(),
            ));
        }
        if self.sweep.schemes.is_empty() {
            return Err(OutminError::Config("sweep.schemes must be nonempty".into()));
        }
        if self.schedule.alpha0 <= 0.0 || self.schedule.tau <= 0.0 {
            return Err(OutminError::Config(
                "schedule.alpha0 and schedule.tau must be positive".into(),
            ));
        }
        if self.stop.t_max == 0 || self.stop.window == 0 || self.stop.tol < 0.0 {
            return Err(OutminError::Config(
                "stop.t_max and stop.window must be positive, stop.tol nonnegative".into(),
            ));
        }
        if self.eval.n_trials == 0 {
            return Err(OutminError::Config("eval.n_trials must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One geometry: train the robust scheme, write the run trace and a
    /// Monte-Carlo report of the final state.
    Train,
    /// All configured schemes at the configured blockage probability.
    Eval,
    /// Full blockage-probability grid sweep over many geometries.
    Sweep,
    /// Run the built-in numerical cross-checks and print pass/fail.
    Selftest,
}

#[derive(Debug, Parser)]
#[command(name = "outmin", version, about = "Outage-minimizing beamformer trainer and simulator")]
pub struct Args {
    /// Experiment file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// What to run.
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Master seed; overrides the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; 0 picks the machine default.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Override a config key, e.g. --set system.p_block=0.5 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

/// Apply one `dotted.path=value` override to a parsed TOML table.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec.split_once('=').ok_or_else(|| {
        OutminError::Usage(format!("override '{spec}' is not of the form key=value"))
    })?;
    let parts: Vec<&str> = path.split('.').collect();
    let mut cursor = table;
    for part in &parts[..parts.len() - 1] {
        cursor = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| {
                OutminError::Usage(format!("'{part}' in override '{spec}' is not a table"))
            })?;
    }
    // Interpret the right-hand side as TOML where possible, else as a string.
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(t) => t["v"].clone(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    cursor.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Load the experiment file, apply `--set` overrides and the `--seed` flag.
pub fn load_config(path: &Path, overrides: &[String], seed: Option<u64>) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| OutminError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut table: toml::Table = text
        .parse()
        .map_err(|e| OutminError::Config(format!("{}: {e}", path.display())))?;
    for spec in overrides {
        apply_override(&mut table, spec)?;
    }
    let mut config: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e| OutminError::Config(format!("{}: {e}", path.display())))?;
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path).map_err(|e| {
        OutminError::Io {
            path: path.display().to_string(),
            source: e,
        }
    })?))
}

/// Write the manifest recording everything that affects the run's output.
fn write_manifest(out: &Path, config: &ExperimentConfig, mode: Mode, threads: usize) -> Result<()> {
    #[derive(Serialize)]
    struct Manifest<'a> {
        version: &'static str,
        mode: Mode,
        seed: u64,
        threads: usize,
        /// Amplitude factor applied to the blockable links when
        /// noise normalization is on; 1.0 means physical units.
        noise_scale_applied: f64,
        config: &'a ExperimentConfig,
    }
    let scale = if config.noise_normalize {
        1.0 / dbm_to_watts(config.system.noise_dbm).sqrt()
    } else {
        1.0
    };
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        mode,
        seed: config.seed,
        threads,
        noise_scale_applied: scale,
        config,
    };
    let text = toml::to_string_pretty(&manifest)
        .map_err(|e| OutminError::Config(format!("manifest serialization: {e}")))?;
    let mut w = create(&out.join("manifest.toml"))?;
    w.write_all(text.as_bytes()).map_err(|e| OutminError::Io {
        path: out.join("manifest.toml").display().to_string(),
        source: e,
    })?;
    Ok(())
}

fn sweep_settings(config: &ExperimentConfig, p_grid: Vec<f64>) -> SweepSettings {
    SweepSettings {
        p_grid,
        n_geometries: config.sweep.n_geometries,
        n_eval_trials: config.sweep.n_eval_trials,
        schedule: config.schedule.to_schedule(),
        stop: config.stop,
        master_seed: config.seed,
        schemes: config.sweep.schemes.clone(),
        noise_normalize: config.noise_normalize,
    }
}

fn run_sweep(config: &ExperimentConfig, out: &Path, p_grid: Vec<f64>) -> Result<()> {
    let system = config.system.to_system_config();
    let settings = sweep_settings(config, p_grid);
    let rows = sweep_pblock(&system, &settings)?;
    let io_err = |e: std::io::Error, name: &str| OutminError::Io {
        path: out.join(name).display().to_string(),
        source: e,
    };
    rows_to_csv(&rows, create(&out.join("sweep_rows.csv"))?).map_err(|e| io_err(e, "sweep_rows.csv"))?;
    summary_to_csv(&summarize(&rows), create(&out.join("sweep_summary.csv"))?)
        .map_err(|e| io_err(e, "sweep_summary.csv"))?;
    Ok(())
}

fn run_train(config: &ExperimentConfig, out: &Path) -> Result<()> {
    let system = config.system.to_system_config();
    let geo_seed = derive_seed(config.seed, 1);
    let geo = gen_geometry(&system, &mut rng_from_seed(geo_seed))?;
    let (geo, cfg) = if config.noise_normalize {
        let (g, c, _) = noise_normalized(&geo, &system);
        (g, c)
    } else {
        (geo, system)
    };
    let basis = ChannelBasis::new(&geo);
    let mut rng = rng_from_seed(derive_seed(geo_seed, 2));
    let init = init_state(&basis.no_blockage(), cfg.n_rf, cfg.p_max, &mut rng)?;
    let source = SampleSource::Bernoulli {
        basis: &basis,
        p_block: cfg.p_block,
    };
    let (state, trace) = bsgd_outmin(
        &cfg,
        &init,
        &source,
        &config.schedule.to_schedule(),
        &config.stop,
        &BsgdOptions::default(),
        &mut rng,
    )?;
    let io_err = |e: std::io::Error, name: &str| OutminError::Io {
        path: out.join(name).display().to_string(),
        source: e,
    };
    trace
        .to_csv(create(&out.join("trace.csv"))?)
        .map_err(|e| io_err(e, "trace.csv"))?;
    let report = crate::evaluation::evaluate(
        &state,
        &basis,
        &cfg,
        cfg.p_block,
        config.eval.n_trials,
        &mut rng_from_seed(derive_seed(geo_seed, 3)),
    )?;
    let mut w = create(&out.join("eval.csv"))?;
    (|| -> std::io::Result<()> {
        writeln!(w, "user,outage,eff_rate,n_trials")?;
        for k in 0..report.outage.len() {
            writeln!(
                w,
                "{},{},{},{}",
                k, report.outage[k], report.rates[k], report.n_trials
            )?;
        }
        writeln!(
            w,
            "all,{},{},{}",
            report.outage_avg, report.eff_sum_rate, report.n_trials
        )
    })()
    .map_err(|e| io_err(e, "eval.csv"))?;
    Ok(())
}

/// Execute the requested mode; returns the process exit code.
pub fn run(args: &Args) -> Result<i32> {
    let config = load_config(&args.config, &args.overrides, args.seed)?;
    fs::create_dir_all(&args.out).map_err(|e| OutminError::Io {
        path: args.out.display().to_string(),
        source: e,
    })?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .map_err(|e| OutminError::Config(format!("thread pool: {e}")))?;

    match args.mode {
        Mode::Selftest => {
            let results = run_selftests(config.seed);
            let mut all_ok = true;
            for r in &results {
                println!("{}: {} ({})", r.name, if r.passed { "PASS" } else { "FAIL" }, r.detail);
                all_ok &= r.passed;
            }
            write_manifest(&args.out, &config, args.mode, args.threads)?;
            return Ok(if all_ok { 0 } else { 1 });
        }
        Mode::Train => pool.install(|| run_train(&config, &args.out))?,
        Mode::Eval => pool.install(|| {
            run_sweep(&config, &args.out, vec![config.system.p_block])
        })?,
        Mode::Sweep => pool.install(|| {
            run_sweep(&config, &args.out, config.sweep.p_grid.clone())
        })?,
    }
    write_manifest(&args.out, &config, args.mode, args.threads)?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 7

[system]
n_tx = 4
n_rf = 2
n_users = 2
n_ris = 1
m_rows = 2
m_cols = 2
p_max = 1.0
noise_dbm = -100.0
sinr_targets = [1.0, 1.0]
epsilon = 0.01
p_block = 0.3
n_paths_bu = 2
n_paths_bi = 2
n_paths_iu = 2

[system.geometry]
bs = [0.0, 0.0]
ris = [[40.0, 10.0]]
user_center = [50.0, 0.0]
user_radius = 5.0

[schedule]
kind = "constant"
alpha0 = 0.05

[stop]
t_max = 200
window = 50
tol = 0.0001

[sweep]
p_grid = [0.2, 0.6]
n_geometries = 2
n_eval_trials = 100

[eval]
n_trials = 100
"#;

    fn write_config(dir: &Path) -> PathBuf {
        let path = dir.join("exp.toml");
        fs::write(&path, MINIMAL).unwrap();
        path
    }

    #[test]
    fn dbm_conversion() {
        assert!((dbm_to_watts(-100.0) - 1e-13).abs() < 1e-25);
        assert!((dbm_to_watts(30.0) - 1.0).abs() < 1e-12);
        assert!((dbm_to_watts(0.0) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn parse_and_validate_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path());
        let cfg = load_config(&path, &[], None).unwrap();
        assert_eq!(cfg.seed, 7);
        assert!(cfg.noise_normalize);
        assert_eq!(cfg.sweep.schemes.len(), 4);
        assert!((cfg.system.to_system_config().noise_power - 1e-13).abs() < 1e-25);
        // seed flag wins over the file.
        let cfg = load_config(&path, &[], Some(42)).unwrap();
        assert_eq!(cfg.seed, 42);
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        fs::write(&path, MINIMAL.replace("p_max = 1.0", "p_maxx = 1.0")).unwrap();
        let err = load_config(&path, &[], None).unwrap_err();
        assert!(err.to_string().contains("p_maxx"), "got: {err}");
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path());
        let cfg = load_config(
            &path,
            &[
                "system.p_block=0.9".into(),
                "schedule.alpha0=0.5".into(),
                "sweep.schemes=[\"robust\"]".into(),
            ],
            None,
        )
        .unwrap();
        assert_eq!(cfg.system.p_block, 0.9);
        assert_eq!(cfg.schedule.alpha0, 0.5);
        assert_eq!(cfg.sweep.schemes, vec![Scheme::Robust]);
        assert!(load_config(&path, &["nonsense".into()], None).is_err());
        // an override introducing an unknown key is also rejected.
        assert!(load_config(&path, &["system.bogus=1".into()], None).is_err());
    }

    #[test]
    fn train_mode_writes_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path());
        let out = dir.path().join("out");
        let args = Args {
            config: path,
            mode: Mode::Train,
            seed: None,
            out: out.clone(),
            threads: 1,
            overrides: vec!["stop.t_max=100".into()],
        };
        assert_eq!(run(&args).unwrap(), 0);
        let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
        assert!(trace.starts_with("t,objective_rolling"));
        let eval = fs::read_to_string(out.join("eval.csv")).unwrap();
        assert!(eval.starts_with("user,outage,eff_rate,n_trials"));
        let manifest = fs::read_to_string(out.join("manifest.toml")).unwrap();
        assert!(manifest.contains("seed = 7"));
        assert!(manifest.contains("noise_scale_applied"));
        assert!(manifest.contains("[config.system]"));
    }

    #[test]
    fn sweep_mode_is_reproducible_across_thread_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path());
        let run_once = |out: PathBuf, threads: usize| -> String {
            let args = Args {
                config: path.clone(),
                mode: Mode::Sweep,
                seed: Some(5),
                out: out.clone(),
                threads,
                overrides: vec!["stop.t_max=60".into(), "stop.window=30".into()],
            };
            assert_eq!(run(&args).unwrap(), 0);
            fs::read_to_string(out.join("sweep_rows.csv")).unwrap()
        };
        let a = run_once(dir.path().join("a"), 1);
        let b = run_once(dir.path().join("b"), 2);
        assert_eq!(a, b);
        // 2 grid points x 4 schemes x 2 geometries rows + header.
        assert_eq!(a.lines().count(), 1 + 16);
    }
}
