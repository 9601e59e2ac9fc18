//! Command-line front end: argument parsing, run orchestration and artifacts.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, ScenarioFile, EXAMPLE1_TOML, EXAMPLE2_TOML};
use crate::detector::{write_curves_csv, DeployedRule, EvaluationSet, RocCurve, SweepSettings};
use crate::error::{Error, Result};
use crate::optimizer::{optimize, write_rule_file, OptimizeTrace};
use crate::sampling::{build_trial, draw_bank, SampleBank, TrialKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "mcfusion", version, about = "Monte Carlo design of distributed detection systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, clap::Args, Serialize, Deserialize)]
pub struct Overrides {
    /// Replace the sampling seed; the evaluation seed becomes this plus one.
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_override: Option<u64>,
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_sweeps: Option<usize>,
    /// Restrict runs to one trial distribution: gaussian or mixture.
    #[arg(long, global = true)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial: Option<String>,
    /// Estimate operating points on the training bank instead of fresh draws.
    #[arg(long, global = true)]
    #[serde(default)]
    pub eval_on_training: bool,
}

impl Overrides {
    /// Fields set here win over those in `base`.
    fn over(&self, base: &Overrides) -> Overrides {
        Overrides {
            seed_override: self.seed_override.or(base.seed_override),
            max_sweeps: self.max_sweeps.or(base.max_sweeps),
            trial: self.trial.clone().or_else(|| base.trial.clone()),
            eval_on_training: self.eval_on_training || base.eval_on_training,
        }
    }

    fn apply(&self, file: &mut ScenarioFile) -> Result<()> {
        if let Some(seed) = self.seed_override {
            file.sampling.seed = seed;
            file.evaluation.seed = seed.wrapping_add(1);
        }
        if let Some(m) = self.max_sweeps {
            file.sampling.max_sweeps = m;
        }
        if let Some(t) = &self.trial {
            TrialKind::parse(t)?;
            file.sampling.trials = vec![t.clone()];
        }
        if self.eval_on_training {
            file.evaluation.on_training = true;
        }
        Ok(())
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario file.
    Validate { config: PathBuf },
    /// Draw a bank and optimize sensor rules for the first fusion rule and trial.
    Optimize {
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Sweep cost ratios into ROC curves for every fusion rule and trial.
    Roc {
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Evaluate a saved rule file on fresh draws.
    Eval {
        config: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run a built-in example end to end.
    Paper {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=2))]
        example: u8,
        #[arg(short, long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub overrides: Overrides,
    pub sampling_seed: u64,
    pub evaluation_seed: u64,
    /// Output file name to SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub config_text: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Config text plus overrides recorded alongside it, from a TOML file or a
/// previous run's `manifest.json`.
fn load_source(path: &Path) -> Result<(String, Overrides)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: not a run manifest: {e}", path.display())))?;
        return Ok((m.config_text, m.overrides));
    }
    Ok((text, Overrides::default()))
}

fn resolve(text: &str, overrides: &Overrides) -> Result<RunConfig> {
    let mut file = ScenarioFile::parse(text)?;
    overrides.apply(&mut file)?;
    file.resolve()
}

struct Artifacts {
    dir: PathBuf,
    outputs: BTreeMap<String, String>,
}

impl Artifacts {
    fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            outputs: BTreeMap::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: Vec<u8>) -> Result<()> {
        std::fs::write(self.dir.join(name), &bytes)?;
        self.outputs.insert(name.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    fn write_with(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut bytes = Vec::new();
        f(&mut bytes)?;
        self.write(name, bytes)
    }

    fn finish(self, command: &str, text: &str, overrides: &Overrides, run: &RunConfig) -> Result<()> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256: sha256_hex(text.as_bytes()),
            overrides: overrides.clone(),
            sampling_seed: run.seed,
            evaluation_seed: run.eval_seed,
            outputs: self.outputs,
            config_text: text.into(),
        };
        let mut json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
        json.push(b'\n');
        std::fs::write(self.dir.join("manifest.json"), json)?;
        Ok(())
    }
}

/// File-name-safe identifier of a fusion rule string.
pub fn rule_id(rule: &str) -> String {
    rule.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '-' })
        .collect()
}

pub fn curve_id(rule: &str, trial: TrialKind) -> String {
    format!("{}_{}", rule_id(rule), trial.as_str())
}

fn cmd_validate(text: &str, overrides: &Overrides, out: &mut dyn Write) -> Result<bool> {
    let run = resolve(text, overrides)?;
    let s = &run.scenario;
    let k = s.constants();
    writeln!(
        out,
        "valid: {} ({} sensors, dimension {}), a = {}, b = {}, c = {}",
        s.name(),
        s.num_sensors(),
        s.dim(),
        k.a,
        k.b,
        k.c
    )?;
    writeln!(out, "fusion rules: {}", run.rule_names.join(", "))?;
    Ok(true)
}

fn draw(run: &RunConfig, trial: TrialKind) -> Result<SampleBank> {
    let t = build_trial(&run.scenario, trial)?;
    draw_bank(&t, &run.scenario, run.n, run.seed)
}

fn cmd_optimize(text: &str, overrides: &Overrides, dir: &Path, out: &mut dyn Write) -> Result<bool> {
    let run = resolve(text, overrides)?;
    let mut art = Artifacts::create(dir)?;
    let bank = draw(&run, run.trials[0])?;
    let f = &run.rules[0];
    let init = run.init.build(&bank);
    let (labels, trace) = optimize(&bank, f, run.scenario.constants(), init, &run.options)?;
    art.write_with("bank.csv", |w| bank.write_csv(w))?;
    art.write_with("labels.csv", |w| write_rule_file(&bank, &labels, w))?;
    art.write_with("trace.csv", |w| trace.write_csv(w))?;
    art.finish("optimize", text, overrides, &run)?;
    writeln!(
        out,
        "rule {} with {} trial: cost {} -> {} after {} sweeps ({})",
        run.rule_names[0],
        run.trials[0],
        trace.initial_cost,
        trace.final_cost(),
        trace.sweeps_used,
        if trace.converged { "converged" } else { "not converged" }
    )?;
    Ok(trace.converged)
}

/// Curves produced by a full sweep over rules and trials.
pub struct RocOutput {
    pub run: RunConfig,
    pub draws: EvaluationSet,
    pub distributed: Vec<RocCurve>,
    pub centralized: RocCurve,
    pub traces: Vec<(String, Vec<OptimizeTrace>)>,
}

/// Runs every (rule, trial) sweep of a resolved config on shared evaluation draws.
pub fn run_roc(run: RunConfig) -> Result<RocOutput> {
    let draws = EvaluationSet::draw(&run.scenario, run.m, run.eval_seed)?;
    let settings = SweepSettings {
        grid: run.grid.clone(),
        init: run.init,
        options: run.options,
        on_training: run.on_training,
    };
    let mut distributed = Vec::new();
    let mut traces = Vec::new();
    let mut centralized = None;
    for &trial in &run.trials {
        let bank = draw(&run, trial)?;
        for (name, f) in run.rule_names.iter().zip(&run.rules) {
            let id = curve_id(name, trial);
            let res = crate::detector::roc_sweep(&run.scenario, f, &bank, &draws, &settings, &id)?;
            distributed.push(res.distributed);
            traces.push((id, res.traces));
            centralized.get_or_insert(res.centralized);
        }
    }
    Ok(RocOutput {
        centralized: centralized.expect("at least one rule and trial"),
        run,
        draws,
        distributed,
        traces,
    })
}

fn write_roc(art: &mut Artifacts, roc: &RocOutput, out: &mut dyn Write) -> Result<bool> {
    let mut converged = true;
    for c in &roc.distributed {
        art.write_with(&format!("roc_{}.csv", c.curve_id), |w| c.write_csv(w))?;
    }
    art.write_with("roc_centralized.csv", |w| roc.centralized.write_csv(w))?;
    let mut all = roc.distributed.clone();
    all.push(roc.centralized.clone());
    art.write_with("roc_all.csv", |w| write_curves_csv(&all, w))?;
    art.write_with("convergence.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["curve_id", "sweep_parameter", "initial_cost", "final_cost", "sweeps", "converged"])?;
        for (id, traces) in &roc.traces {
            for (r, t) in roc.run.grid.iter().zip(traces) {
                c.write_record([
                    id.clone(),
                    r.to_string(),
                    t.initial_cost.to_string(),
                    t.final_cost().to_string(),
                    t.sweeps_used.to_string(),
                    t.converged.to_string(),
                ])?;
            }
        }
        c.flush()?;
        Ok(())
    })?;
    for (id, traces) in &roc.traces {
        let worst = traces.iter().map(|t| t.sweeps_used).max().unwrap_or(0);
        let failed = traces.iter().filter(|t| !t.converged).count();
        converged &= failed == 0;
        writeln!(out, "{id}: {} points, at most {worst} sweeps, {failed} not converged", traces.len())?;
    }
    Ok(converged)
}

fn cmd_roc(text: &str, overrides: &Overrides, dir: &Path, out: &mut dyn Write) -> Result<bool> {
    let run = resolve(text, overrides)?;
    let mut art = Artifacts::create(dir)?;
    let roc = run_roc(run)?;
    let ok = write_roc(&mut art, &roc, out)?;
    art.finish("roc", text, overrides, &roc.run)?;
    Ok(ok)
}

fn cmd_eval(text: &str, overrides: &Overrides, labels: &Path, dir: &Path, out: &mut dyn Write) -> Result<bool> {
    let run = resolve(text, overrides)?;
    if run.on_training {
        return Err(Error::Config(
            "eval works on fresh draws; use roc with --eval-on-training for training-bank estimates".into(),
        ));
    }
    let file = std::fs::File::open(labels)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", labels.display())))?;
    let rule = DeployedRule::read_rule_file(std::io::BufReader::new(file), run.scenario.sensor_dims())?;
    let s = &run.scenario;
    let k = s.constants();
    let draws = EvaluationSet::draw(s, run.m, run.eval_seed)?;
    let t = k.b / k.a;
    let distributed = RocCurve::new("distributed", vec![draws.evaluate_system(s, &rule, &run.rules[0], t)?]);
    let centralized = RocCurve::new("centralized", vec![draws.evaluate_centralized(s, t)]);
    let mut art = Artifacts::create(dir)?;
    art.write_with("eval.csv", |w| write_curves_csv(&[distributed.clone(), centralized.clone()], w))?;
    art.finish("eval", text, overrides, &run)?;
    for c in [&distributed, &centralized] {
        let p = c.points[0];
        writeln!(out, "{}: pf {} pd {} bayes cost {}", c.curve_id, p.pf, p.pd, p.bayes_cost)?;
    }
    Ok(true)
}

/// False-alarm rates at which `paper` compares distributed and centralized detection.
pub const SUMMARY_PF: [f64; 6] = [0.01, 0.05, 0.1, 0.2, 0.5, 0.9];

fn cmd_paper(example: u8, overrides: &Overrides, dir: &Path, out: &mut dyn Write) -> Result<bool> {
    let text = match example {
        1 => EXAMPLE1_TOML,
        2 => EXAMPLE2_TOML,
        other => return Err(Error::Config(format!("unknown example {other}; expected 1 or 2"))),
    };
    let run = resolve(text, overrides)?;
    let mut art = Artifacts::create(dir)?;
    let roc = run_roc(run)?;
    let ok = write_roc(&mut art, &roc, out)?;
    let full = roc.draws.centralized_roc(&roc.run.scenario);
    let mut rows = Vec::new();
    for c in &roc.distributed {
        for &pf in &SUMMARY_PF {
            rows.push((c.curve_id.clone(), pf, c.pd_at(pf), full.pd_at(pf)));
        }
    }
    art.write_with("summary.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["curve_id", "pf", "pd", "pd_centralized", "gap"])?;
        for (id, pf, pd, pc) in &rows {
            c.write_record([id.clone(), pf.to_string(), pd.to_string(), pc.to_string(), (pc - pd).to_string()])?;
        }
        c.flush()?;
        Ok(())
    })?;
    art.finish(&format!("paper {example}"), text, overrides, &roc.run)?;
    writeln!(out, "{:<24} {:>6} {:>8} {:>13} {:>8}", "curve", "pf", "pd", "centralized", "gap")?;
    for (id, pf, pd, pc) in &rows {
        writeln!(out, "{id:<24} {pf:>6.2} {pd:>8.4} {pc:>13.4} {:>8.4}", pc - pd)?;
    }
    Ok(ok)
}

/// Runs a parsed command and returns the process exit code.
pub fn execute(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Validate { config } => load_source(config).and_then(|(t, o)| cmd_validate(&t, &cli.overrides.over(&o), out)),
        Command::Optimize { config, out: dir } => {
            load_source(config).and_then(|(t, o)| cmd_optimize(&t, &cli.overrides.over(&o), dir, out))
        }
        Command::Roc { config, out: dir } => {
            load_source(config).and_then(|(t, o)| cmd_roc(&t, &cli.overrides.over(&o), dir, out))
        }
        Command::Eval { config, labels, out: dir } => {
            load_source(config).and_then(|(t, o)| cmd_eval(&t, &cli.overrides.over(&o), labels, dir, out))
        }
        Command::Paper { example, out: dir } => cmd_paper(*example, &cli.overrides, dir, out),
    };
    match result {
        Ok(true) => EXIT_OK,
        Ok(false) => {
            let _ = writeln!(err, "warning: optimization hit max_sweeps before converging");
            EXIT_NOT_CONVERGED
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_INVALID
        }
    }
}

/// Parses `args` (program name first) and runs; usage errors exit with 1.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli, out, err),
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                EXIT_INVALID
            } else {
                let _ = write!(out, "{}", e.render());
                EXIT_OK
            }
        }
    }
}
