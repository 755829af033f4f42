// SPDX-License-Identifier: Apache-2.0
//! Command-line front end: `run`, `list` and `export-tone`.
//!
//! Exit codes: 0 success, 1 physics or integration failure, 2 configuration
//! error (parse, unknown key, bad override, unsupported combination).

pub mod output;
pub mod runner;
pub mod scenario;

use clap::{Parser, Subcommand};
use output::{RunManifest, Writer};
use runner::RunError;
use scenario::{ConfigError, Format, Scenario};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PHYSICS: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "CLOAKSIM_OUT";

#[derive(Debug, Parser)]
#[command(name = "cloaksim", version, about = "Driven cavity-QED simulator with qubit cloaking tones")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario file or a bundled scenario by name.
    Run {
        scenario: String,
        /// Override a value: dotted path or unique key, e.g. eps1_MHz=0.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long, env = OUT_ENV, default_value = "cloaksim-out")]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// List bundled scenarios.
    List,
    /// Sample the scenario's cancellation tone to CSV.
    ExportTone {
        scenario: String,
        /// Sample rate in GS/s.
        #[arg(long)]
        rate: f64,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long, env = OUT_ENV, default_value = "cloaksim-out")]
        out: PathBuf,
    },
}

/// (name, JSON text) of every bundled scenario.
pub const BUNDLED: &[(&str, &str)] = &[
    ("fig2a", include_str!("../../scenarios/fig2a.json")),
    ("fig2b", include_str!("../../scenarios/fig2b.json")),
    ("fig3a", include_str!("../../scenarios/fig3a.json")),
    ("fig3b", include_str!("../../scenarios/fig3b.json")),
    ("fig4a", include_str!("../../scenarios/fig4a.json")),
    ("fig5", include_str!("../../scenarios/fig5.json")),
    ("smfig1a", include_str!("../../scenarios/smfig1a.json")),
    ("smfig1b", include_str!("../../scenarios/smfig1b.json")),
    ("smfig1c", include_str!("../../scenarios/smfig1c.json")),
    ("smfig1d", include_str!("../../scenarios/smfig1d.json")),
    ("smfig1e", include_str!("../../scenarios/smfig1e.json")),
    ("smfig2", include_str!("../../scenarios/smfig2.json")),
    ("gate_opt", include_str!("../../scenarios/gate_opt.json")),
    ("calibration", include_str!("../../scenarios/calibration.json")),
    ("readout_stats", include_str!("../../scenarios/readout_stats.json")),
    ("selftest_cloaking_tls", include_str!("../../scenarios/selftest_cloaking_tls.json")),
    ("selftest_cloaking_transmon", include_str!("../../scenarios/selftest_cloaking_transmon.json")),
    ("selftest_tone", include_str!("../../scenarios/selftest_tone.json")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Scenario text from a path, falling back to a bundled name.
pub fn load_text(arg: &str) -> Result<String, ConfigError> {
    let p = Path::new(arg);
    if p.exists() {
        return std::fs::read_to_string(p).map_err(|e| ConfigError(format!("{arg}: {e}")));
    }
    bundled(arg).map(str::to_string).ok_or_else(|| ConfigError(format!("{arg}: no such file or bundled scenario")))
}

/// Table of bundled scenarios: name, protocol, reference.
pub fn list_scenarios() -> Vec<(String, String, String)> {
    BUNDLED
        .iter()
        .map(|(n, t)| match Scenario::parse(t) {
            Ok(s) => (n.to_string(), s.protocol.kind().to_string(), s.paper_ref),
            Err(e) => (n.to_string(), "invalid".into(), e.0),
        })
        .collect()
}

/// Outcome of a successful run.
#[derive(Debug)]
pub struct RunReport {
    pub dir: PathBuf,
    pub files: Vec<String>,
    pub manifest: PathBuf,
    pub summary: serde_json::Value,
}

fn exit_code(e: &RunError) -> i32 {
    match e {
        RunError::Config(_) => EXIT_CONFIG,
        RunError::Physics { .. } => EXIT_PHYSICS,
    }
}

/// Runs a parsed scenario and writes its outputs under `out/<name>`.
pub fn run_scenario(sc: &Scenario, out: &Path, threads: Option<usize>) -> Result<RunReport, RunError> {
    let start = Instant::now();
    let result = match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build().map_err(|e| RunError::Config(ConfigError(e.to_string())))?;
            pool.install(|| runner::run(sc))
        }
        None => runner::run(sc),
    }?;
    let dir = out.join(sc.output.dir.clone().unwrap_or_else(|| sc.name.clone()));
    let io_err = |e: std::io::Error| RunError::Physics { context: format!("writing {}", dir.display()), source: crate::Error::InvalidState(e.to_string()) };
    let mut w = Writer::new(&dir).map_err(io_err)?;
    let hash = sc.hash();
    let written = (|| -> std::io::Result<()> {
        w.write("scenario.json", &(sc.to_json() + "\n"))?;
        if sc.output.formats.contains(&Format::Csv) {
            for t in &result.tables {
                w.write(&format!("{}.csv", t.name), &t.to_csv(&sc.name, &hash))?;
            }
        }
        if sc.output.formats.contains(&Format::Json) {
            let body = serde_json::json!({"scenario": sc.name, "scenario_sha256": hash, "protocol": sc.protocol.kind(), "result": result.summary});
            w.write(&format!("{}.json", sc.name), &(serde_json::to_string_pretty(&body).map_err(std::io::Error::other)? + "\n"))?;
        }
        Ok(())
    })();
    if let Err(e) = written {
        w.cleanup();
        return Err(io_err(e));
    }
    let files: Vec<String> = w.emitted().iter().map(|f| f.path.clone()).collect();
    let manifest = RunManifest {
        scenario: sc.name.clone(),
        scenario_sha256: hash,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        protocol: sc.protocol.kind().to_string(),
        integrator: serde_json::to_value(runner::integrator(sc)).unwrap_or_default(),
        wall_clock_s: start.elapsed().as_secs_f64(),
        files: Vec::new(),
    };
    let mpath = match w.finish(manifest) {
        Ok(p) => p,
        Err(e) => {
            for f in &files {
                let _ = std::fs::remove_file(dir.join(f));
            }
            return Err(io_err(e));
        }
    };
    Ok(RunReport { dir, files, manifest: mpath, summary: result.summary })
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match cli.command {
        Command::List => {
            let rows = list_scenarios();
            let w = rows.iter().map(|r| r.0.len()).max().unwrap_or(4);
            let p = rows.iter().map(|r| r.1.len()).max().unwrap_or(8);
            println!("{:w$}  {:p$}  reference", "name", "protocol");
            for (n, k, r) in rows {
                println!("{n:w$}  {k:p$}  {r}");
            }
            EXIT_OK
        }
        Command::Run { scenario, set, out, threads } => {
            let sc = match load_text(&scenario).and_then(|t| Scenario::parse_with_overrides(&t, &set)) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {scenario}: {e}");
                    return EXIT_CONFIG;
                }
            };
            match run_scenario(&sc, &out, threads) {
                Ok(r) => {
                    for f in &r.files {
                        println!("{}", r.dir.join(f).display());
                    }
                    println!("{}", r.manifest.display());
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code(&e)
                }
            }
        }
        Command::ExportTone { scenario, rate, set, out } => {
            let sc = match load_text(&scenario).and_then(|t| Scenario::parse_with_overrides(&t, &set)) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {scenario}: {e}");
                    return EXIT_CONFIG;
                }
            };
            let t = match runner::export_tone(&sc, rate) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: {e}");
                    return exit_code(&e);
                }
            };
            let path = out.join(format!("{}.csv", t.name));
            let text = t.to_csv(&sc.name, &sc.hash());
            if let Err(e) = std::fs::create_dir_all(&out).and_then(|_| std::fs::write(&path, text)) {
                eprintln!("error: writing {}: {e}", path.display());
                return EXIT_PHYSICS;
            }
            println!("{}", path.display());
            EXIT_OK
        }
    }
}
