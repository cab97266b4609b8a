//! Argument handling and serialization for the `tpbft-sim` binary.

use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::{error, info};

use crate::ledger::tamper::{mutate_transaction, rechain, reseal, Mutation};
use crate::ledger::{read_chain_jsonl, verify_chain, write_chain_jsonl, Block, ChainStatus, ExportError};
use crate::sim::{load_scenario, ConfigError, Metrics, Mode, ScenarioConfig, SimError, Simulation};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_SAFETY: i32 = 3;
pub const EXIT_BROKEN_CHAIN: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "tpbft-sim", version, about = "Run T-PBFT scenarios, verify exported chains, inspect trust")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, clap::Args)]
pub struct ScenarioArgs {
    /// Scenario file, or a directory of `.scenario` files.
    pub scenario: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// What to print on stdout.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Also write the message trace as JSON lines.
    #[arg(long)]
    pub trace: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario under T-PBFT.
    Run(ScenarioArgs),
    /// Run a scenario under flat PBFT for comparison.
    Baseline(ScenarioArgs),
    /// Check an exported chain.
    Verify {
        chain: PathBuf,
    },
    /// Flip a byte in an exported chain and show what verification sees.
    TamperDemo {
        chain: PathBuf,
        #[arg(long)]
        block: usize,
        #[arg(long)]
        tx: usize,
        /// Payload byte to change.
        #[arg(long, default_value_t = 0)]
        byte: usize,
        /// XOR mask; 0 leaves the byte as it is.
        #[arg(long, default_value_t = 0x01)]
        xor: u8,
    },
    /// Per-epoch trust table for a scenario.
    Trust(ScenarioArgs),
}

enum Failure {
    Invalid(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Invalid(_) => EXIT_INVALID,
            Failure::Io(_) => EXIT_IO,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Io(m) => m,
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::Invalid(e.to_string())
    }
}

impl From<ExportError> for Failure {
    fn from(e: ExportError) -> Self {
        match e {
            ExportError::Io(e) => Failure::Io(e.to_string()),
            other => Failure::Invalid(other.to_string()),
        }
    }
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter("TPBFT_SIM_LOG")).try_init();
    let mut stdout = io::stdout().lock();
    let result = match cli.command {
        Command::Run(a) => cmd_scenarios(&a, Mode::Tpbft, &mut stdout),
        Command::Baseline(a) => cmd_scenarios(&a, Mode::Baseline, &mut stdout),
        Command::Verify { chain } => cmd_verify(&chain, &mut stdout),
        Command::TamperDemo { chain, block, tx, byte, xor } => cmd_tamper_demo(&chain, block, tx, byte, xor, &mut stdout),
        Command::Trust(a) => cmd_trust(&a, &mut stdout),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            error!("{}", f.message());
            eprintln!("error: {}", f.message());
            f.code()
        }
    }
}

fn load(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let mut cfg = load_scenario(&text).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn scenario_files(path: &Path) -> Result<Vec<PathBuf>, Failure> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "scenario"))
        .collect();
    files.sort();
    Ok(files)
}

fn cmd_scenarios(a: &ScenarioArgs, mode: Mode, stdout: &mut impl Write) -> Result<i32, Failure> {
    let files = scenario_files(&a.scenario)?;
    let many = files.len() > 1 || a.scenario.is_dir();
    let mut code = EXIT_OK;
    for file in files {
        let cfg = load(&file, a.seed)?;
        let out = if many { a.out.join(&cfg.name) } else { a.out.clone() };
        code = code.max(cmd_run(&cfg, mode, &out, a.format, a.trace, stdout)?);
    }
    Ok(code)
}

fn run_sim(cfg: &ScenarioConfig, mode: Mode, trace: bool) -> Result<Simulation, Failure> {
    let mut sim = Simulation::new(cfg, mode)?;
    if trace {
        sim = sim.with_trace();
    }
    sim.run_to_end()?;
    Ok(sim)
}

fn cmd_run(
    cfg: &ScenarioConfig,
    mode: Mode,
    out: &Path,
    format: Format,
    trace: bool,
    stdout: &mut impl Write,
) -> Result<i32, Failure> {
    info!("running {} ({mode:?}) with seed {}", cfg.name, cfg.seed);
    let sim = run_sim(cfg, mode, trace)?;
    let metrics = sim.metrics();
    fs::create_dir_all(out.join("chains"))?;
    fs::write(out.join("metrics.json"), metrics.to_json() + "\n")?;
    metrics.write_summary_csv(File::create(out.join("summary.csv"))?)?;
    if trace {
        let mut w = BufWriter::new(File::create(out.join("trace.jsonl"))?);
        sim.write_trace_jsonl(&mut w)?;
        w.flush()?;
    }
    for c in sim.channels() {
        let w = BufWriter::new(File::create(out.join("chains").join(format!("{}.jsonl", c.spec.name)))?);
        write_chain_jsonl(c.chain.canonical(), w)?;
    }
    if mode == Mode::Tpbft {
        let mut w = BufWriter::new(File::create(out.join("decisions.jsonl"))?);
        sim.gateway.write_decisions_jsonl(&mut w)?;
        w.flush()?;
    }
    match format {
        Format::Json => writeln!(stdout, "{}", metrics.to_json())?,
        Format::Csv => metrics.write_summary_csv(&mut *stdout)?,
    }
    Ok(exit_for(metrics))
}

fn exit_for(m: &Metrics) -> i32 {
    if m.safety_violations > 0 {
        EXIT_SAFETY
    } else {
        EXIT_OK
    }
}

fn cmd_trust(a: &ScenarioArgs, stdout: &mut impl Write) -> Result<i32, Failure> {
    let cfg = load(&a.scenario, a.seed)?;
    let sim = run_sim(&cfg, Mode::Tpbft, false)?;
    let rows = sim.trust_table();
    fs::create_dir_all(&a.out)?;
    let mut w = csv::Writer::from_writer(File::create(a.out.join("trust.csv"))?);
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    match a.format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut *stdout);
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Format::Json => writeln!(stdout, "{}", serde_json::to_string_pretty(&rows).map_err(io::Error::other)?)?,
    }
    Ok(exit_for(sim.metrics()))
}

fn read_chain(path: &Path) -> Result<Vec<Block>, Failure> {
    let f = File::open(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    Ok(read_chain_jsonl(BufReader::new(f))?)
}

fn cmd_verify(path: &Path, stdout: &mut impl Write) -> Result<i32, Failure> {
    let chain = read_chain(path)?;
    let status = verify_chain(&chain);
    writeln!(stdout, "{}", serde_json::to_string(&status).map_err(io::Error::other)?)?;
    Ok(if status.is_valid() { EXIT_OK } else { EXIT_BROKEN_CHAIN })
}

fn describe(status: ChainStatus) -> String {
    match status {
        ChainStatus::Valid => "Valid".to_string(),
        ChainStatus::BrokenAt { index, reason } => format!("BrokenAt({index}, {reason:?})"),
    }
}

fn cmd_tamper_demo(
    path: &Path,
    block: usize,
    tx: usize,
    byte: usize,
    xor: u8,
    stdout: &mut impl Write,
) -> Result<i32, Failure> {
    let chain = read_chain(path)?;
    let target = chain
        .get(block)
        .ok_or_else(|| Failure::Invalid(format!("block index {block} out of range (chain has {})", chain.len())))?;
    let mutated = mutate_transaction(target, tx, Mutation::PayloadByte { index: byte, xor })
        .map_err(|e| Failure::Invalid(e.to_string()))?;
    writeln!(stdout, "chain: {} blocks, status {}", chain.len(), describe(verify_chain(&chain)))?;
    writeln!(stdout, "block {block} before:")?;
    writeln!(stdout, "  merkle root  {}", target.header().merkle_root)?;
    writeln!(stdout, "  header hash  {}", target.hash())?;
    writeln!(stdout, "mutation: tx {tx} payload byte {byte} ^= {xor:#04x}")?;

    let mut raw = chain.clone();
    raw[block] = mutated.clone();
    let recomputed = mutated.recompute_merkle_root().map_err(|e| Failure::Invalid(e.to_string()))?;
    writeln!(stdout, "  recomputed merkle root  {recomputed}")?;
    writeln!(stdout, "  stored header hash      {} (unchanged)", mutated.hash())?;
    writeln!(stdout, "verify, header untouched: {}", describe(verify_chain(&raw)))?;

    let mut resealed = chain.clone();
    resealed[block] = reseal(&mutated).map_err(|e| Failure::Invalid(e.to_string()))?;
    writeln!(stdout, "after re-hashing block {block}:")?;
    writeln!(stdout, "  merkle root  {}", resealed[block].header().merkle_root)?;
    writeln!(stdout, "  header hash  {}", resealed[block].hash())?;
    writeln!(stdout, "verify, block re-hashed: {}", describe(verify_chain(&resealed)))?;

    let forged = rechain(&raw, block).map_err(|e| Failure::Invalid(e.to_string()))?;
    writeln!(stdout, "re-forging every later block changes each header hash:")?;
    for (i, (old, new)) in chain.iter().zip(&forged).enumerate().skip(block) {
        writeln!(stdout, "  block {i:>3}  {} -> {}", old.hash(), new.hash())?;
    }
    writeln!(stdout, "verify, chain re-forged: {}", describe(verify_chain(&forged)))?;
    Ok(EXIT_OK)
}
