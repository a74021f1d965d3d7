use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand};
use log::{error, info};
use serde::Serialize;
use sha2::{Digest, Sha256};

use qnet_core::compiler::{compile_protocol, defer_measurements, parse_script, CompileError};
use qnet_core::parallel::Execution;
use qnet_core::scenario::{sweep, sweep_csv, Duration, ScenarioConfig, ScenarioError};

#[derive(Parser)]
#[command(name = "qnet", version, about = "Quantum network simulation scenarios")]
struct Cli {
    /// error, warn, info, debug or trace
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// e.g. 0.5s, 500ms, 5e11ps
    #[arg(long)]
    end_time: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Run independent trials one after another.
    #[arg(long)]
    sequential: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its result files.
    Run(RunArgs),
    /// Compile a protocol script into a circuit.
    Compile {
        #[arg(long)]
        script: PathBuf,
        /// Replace mid-circuit measurements by controlled gates.
        #[arg(long)]
        defer: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run replications of a scenario for each value of one parameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Dotted path into the config, e.g. params.capacity or end_time.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[arg(long, default_value_t = 1)]
        replications: usize,
    },
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Config(_) => Failure::Usage(e.into()),
            ScenarioError::Runtime(_) => Failure::Runtime(e.into()),
        }
    }
}

fn io(e: anyhow::Error) -> Failure {
    Failure::Runtime(e)
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    version: &'static str,
    config: String,
    config_sha256: String,
    kind: String,
    seed: u64,
    overrides: BTreeMap<String, String>,
    files: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct Loaded {
    config: ScenarioConfig,
    text: Vec<u8>,
    overrides: BTreeMap<String, String>,
}

fn load(args: &RunArgs) -> Result<Loaded, Failure> {
    let text = fs::read(&args.config)
        .with_context(|| format!("cannot read config {}", args.config.display()))
        .map_err(Failure::Usage)?;
    let mut config = ScenarioConfig::load(&args.config)?;
    let mut overrides = BTreeMap::new();
    if let Some(seed) = args.seed {
        config.seed = seed;
        overrides.insert("seed".into(), seed.to_string());
    }
    if let Some(t) = &args.end_time {
        let d = Duration::Text(t.clone());
        d.to_time()?;
        config.end_time = Some(d);
        overrides.insert("end_time".into(), t.clone());
    }
    if let Some(dir) = &args.out_dir {
        config.out_dir = dir.clone();
        overrides.insert("out_dir".into(), dir.display().to_string());
    }
    config.validate()?;
    Ok(Loaded { config, text, overrides })
}

fn exec(args: &RunArgs) -> Execution {
    if args.sequential {
        Execution::Sequential
    } else {
        Execution::default()
    }
}

fn write_outputs(dir: &Path, manifest: &mut Manifest, files: &BTreeMap<String, String>, log: &[String]) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut all = files.clone();
    all.insert("run.log".into(), log.iter().map(|l| format!("{l}\n")).collect());
    for (name, body) in &all {
        let path = dir.join(name);
        fs::write(&path, body).with_context(|| format!("cannot write {}", path.display()))?;
        manifest.files.insert(name.clone(), sha256_hex(body.as_bytes()));
    }
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(manifest)? + "\n").with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn manifest(command: &str, args: &RunArgs, loaded: &Loaded) -> Manifest {
    Manifest {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION"),
        config: args.config.display().to_string(),
        config_sha256: sha256_hex(&loaded.text),
        kind: format!("{:?}", loaded.config.kind).to_lowercase(),
        seed: loaded.config.seed,
        overrides: loaded.overrides.clone(),
        files: BTreeMap::new(),
    }
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let loaded = load(args)?;
    let cfg = &loaded.config;
    info!("running {:?} scenario with seed {}", cfg.kind, cfg.seed);
    let out = cfg.run_with(exec(args))?;
    let mut log = out.log.clone();
    log.push(format!("{} = {}", out.metric_name, out.metric));
    for line in &log {
        info!("{line}");
    }
    let mut m = manifest("run", args, &loaded);
    write_outputs(&cfg.out_dir, &mut m, &out.files, &log).map_err(io)?;
    info!("results in {}", cfg.out_dir.display());
    Ok(())
}

fn cmd_sweep(args: &RunArgs, param: &str, values: &[String], replications: usize) -> Result<(), Failure> {
    let values = values
        .iter()
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Failure::Usage(anyhow::anyhow!("sweep value `{v}` is not a number")))
        })
        .collect::<Result<Vec<f64>, Failure>>()?;
    let loaded = load(args)?;
    let cfg = &loaded.config;
    info!("sweeping {param} over {} values, {replications} replications each", values.len());
    let rows = sweep(cfg, param, &values, replications, exec(args))?;
    let log: Vec<String> = rows
        .iter()
        .map(|r| format!("{}={}: mean {} std {}", r.parameter, r.value, r.mean, r.std))
        .collect();
    for line in &log {
        info!("{line}");
    }
    let mut m = manifest("sweep", args, &loaded);
    m.overrides.insert("sweep".into(), format!("{param} x{replications}"));
    let files = BTreeMap::from([("sweep.csv".to_string(), sweep_csv(&rows))]);
    write_outputs(&cfg.out_dir, &mut m, &files, &log).map_err(io)?;
    Ok(())
}

fn cmd_compile(script: &Path, defer: bool, out: &Path) -> Result<(), Failure> {
    let text = fs::read_to_string(script)
        .with_context(|| format!("cannot read script {}", script.display()))
        .map_err(Failure::Usage)?;
    let insts = parse_script(&text).map_err(|e| Failure::Usage(e.into()))?;
    let compiled = |e: CompileError| Failure::Runtime(e.into());
    let mut circuit = compile_protocol(&insts).map_err(compiled)?.into_circuit();
    if defer {
        circuit = defer_measurements(&circuit).map_err(compiled)?;
    }
    info!("{} instructions compiled into {} operations on {} registers", insts.len(), circuit.instructions.len(), circuit.width());
    fs::write(out, circuit.to_json() + "\n")
        .with_context(|| format!("cannot write {}", out.display()))
        .map_err(io)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .init();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compile { script, defer, out } => cmd_compile(script, *defer, out),
        Command::Sweep {
            run,
            param,
            values,
            replications,
        } => cmd_sweep(run, param, values, *replications),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Runtime(e)) => {
            error!("{e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            error!("{e:#}");
            ExitCode::from(2)
        }
    }
}
