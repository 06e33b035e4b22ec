//! Pool training, cross-play reports and the intent-count sweep.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyplay_core::anyplay::{train_anyplay, AnyPlayConfig, AnyPlayError};
use anyplay_core::env::{Env, EnvConfig};
use anyplay_core::qlearn::{train_baseline, TrainConfig, TrainDiagnostics};
use anyplay_core::xplay::{
    aggregate_scores, crossplay_matrix, load_policy, AgentPool, CrossPlayMatrix, PolicyArtifact,
    PoolMember, ScoreReport, XplayError,
};
use rayon::prelude::*;
use thiserror::Error;

use crate::config::{Algorithm, ConfigError, EvalConfig, ExperimentConfig, PoolSpec};
use crate::report;

pub const MANIFEST: &str = "pool.manifest";
const MANIFEST_MAGIC: &str = "anyplay-pool v1";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{run_id}: {source}")]
    Training { run_id: String, source: AnyPlayError },
    #[error(transparent)]
    Xplay(#[from] XplayError),
    #[error(transparent)]
    Report(#[from] report::ReportError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: line {line}: {msg}")]
    Manifest { path: String, line: usize, msg: String },
    #[error("worker pool: {0}")]
    Jobs(String),
    #[error("check failed: {0}")]
    Assertion(String),
    #[error(transparent)]
    Usage(clap::Error),
}

impl ExperimentError {
    /// 2 for configuration and usage problems, 3 for failed checks, 4 for I/O and
    /// malformed inputs.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(ConfigError::Read { .. }) => 4,
            ExperimentError::Config(_) | ExperimentError::Training { .. } | ExperimentError::Jobs(_) => 2,
            ExperimentError::Assertion(_) => 3,
            ExperimentError::Usage(e) => e.exit_code(),
            ExperimentError::Xplay(_)
            | ExperimentError::Report(_)
            | ExperimentError::Io { .. }
            | ExperimentError::Manifest { .. } => 4,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.display().to_string(), source }
}

/// Runs `f` on a worker pool with `jobs` threads, or on the global pool.
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, ExperimentError> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(ExperimentError::Jobs("--jobs must be >= 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| ExperimentError::Jobs(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedMember {
    pub run_id: String,
    pub label: String,
    pub p1: PolicyArtifact,
    pub p2: PolicyArtifact,
    pub diagnostics: String,
}

impl TrainedMember {
    pub fn pool_member(&self) -> PoolMember {
        PoolMember { run_id: self.run_id.clone(), label: self.label.clone(), p1: self.p1.clone(), p2: self.p2.clone() }
    }
}

fn join<T: std::fmt::Display>(values: &[T], sep: &str) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(sep)
}

fn diagnostics_text(run_id: &str, p1: &PolicyArtifact, diag: &TrainDiagnostics, intent_actions: Option<String>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "run_id={run_id}");
    let _ = writeln!(s, "algorithm={}", p1.algorithm);
    let _ = writeln!(s, "num_intents={}", p1.num_intents);
    let _ = writeln!(s, "seed={}", p1.seed);
    let _ = writeln!(s, "frozen_intent={}", p1.frozen_intent.map_or("none".to_string(), |z| z.to_string()));
    if let Some(map) = intent_actions {
        let _ = writeln!(s, "intent_actions={map}");
    }
    let _ = writeln!(s, "lambda_history={}", join(&diag.lambda_history, ","));
    let _ = writeln!(s, "restart_count={}", diag.restart_count);
    let _ = writeln!(s, "episodes_run={}", diag.episodes_run);
    s.push('\n');
    s.push_str("epoch,extrinsic_return,intent_loss,greedy_return,greedy_intent_loss\n");
    for e in 0..diag.extrinsic_return.len() {
        let at = |v: &[f64]| v.get(e).copied().unwrap_or(f64::NAN);
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            e + 1,
            diag.extrinsic_return[e],
            at(&diag.intent_loss),
            at(&diag.greedy_return),
            at(&diag.greedy_intent_loss)
        );
    }
    s
}

/// Trains one member of a pool from its own seed.
pub fn train_member(
    env: &Env,
    train: &TrainConfig,
    anyplay: &AnyPlayConfig,
    spec: &PoolSpec,
    member: usize,
) -> Result<TrainedMember, ExperimentError> {
    let run_id = spec.run_id(member);
    let seed = spec.seeds[member];
    let train = TrainConfig { seed, ..train.clone() };
    let (p1, p2, diagnostics) = match spec.algorithm {
        Algorithm::Baseline => {
            let run = train_baseline(env, &train);
            let (p1, p2) = PolicyArtifact::from_baseline(&run, &spec.label, seed, env);
            let text = diagnostics_text(&run_id, &p1, &run.diagnostics, None);
            (p1, p2, text)
        }
        Algorithm::AnyPlay => {
            let cfg = AnyPlayConfig { num_intents: spec.num_intents, ..anyplay.clone() };
            let run = train_anyplay(env, &train, &cfg)
                .map_err(|source| ExperimentError::Training { run_id: run_id.clone(), source })?;
            let (p1, p2) = PolicyArtifact::from_anyplay(&run, &spec.label, seed, env);
            let map = run
                .intent_action_map(env)
                .iter()
                .map(|per_object| join(per_object, ","))
                .collect::<Vec<_>>()
                .join(";");
            let text = diagnostics_text(&run_id, &p1, &run.diagnostics, Some(map));
            (p1, p2, text)
        }
    };
    Ok(TrainedMember { run_id, label: spec.label.clone(), p1, p2, diagnostics })
}

/// Trains every member of every pool in parallel. Results keep config
/// order.
pub fn train_members(
    env: &EnvConfig,
    train: &TrainConfig,
    anyplay: &AnyPlayConfig,
    pools: &[PoolSpec],
) -> Result<Vec<TrainedMember>, ExperimentError> {
    let env = Env::new(env.clone()).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let jobs: Vec<(&PoolSpec, usize)> =
        pools.iter().flat_map(|p| (0..p.seeds.len()).map(move |i| (p, i))).collect();
    jobs.par_iter().map(|&(spec, i)| train_member(&env, train, anyplay, spec, i)).collect()
}

/// Files written so far; removed again unless the write completes.
struct Staged {
    created_dir: Option<PathBuf>,
    files: Vec<PathBuf>,
    done: bool,
}

impl Staged {
    fn new(dir: &Path) -> Result<Self, ExperimentError> {
        let created_dir = if dir.exists() { None } else { Some(dir.to_path_buf()) };
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Self { created_dir, files: Vec::new(), done: false })
    }

    fn write(&mut self, path: PathBuf, contents: &str) -> Result<(), ExperimentError> {
        fs::write(&path, contents).map_err(io_err(&path))?;
        self.files.push(path);
        Ok(())
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        if self.done {
            return;
        }
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
        if let Some(dir) = &self.created_dir {
            let _ = fs::remove_dir_all(dir);
        }
    }
}

/// Writes two policy files and a diagnostics file per member, plus the
/// pool manifest.
pub fn write_pool(
    dir: &Path,
    members: &[TrainedMember],
    zsc_exempt: &BTreeSet<String>,
    eval: &EvalConfig,
) -> Result<Vec<PathBuf>, ExperimentError> {
    let mut staged = Staged::new(dir)?;
    let mut manifest = format!("{MANIFEST_MAGIC}\nn_games={}\nbase_seed={}\n", eval.n_games, eval.base_seed);
    let _ = writeln!(manifest, "zsc_exempt={}", zsc_exempt.iter().cloned().collect::<Vec<_>>().join(","));
    for m in members {
        staged.write(dir.join(format!("{}.p1.policy", m.run_id)), &m.p1.to_text())?;
        staged.write(dir.join(format!("{}.p2.policy", m.run_id)), &m.p2.to_text())?;
        staged.write(dir.join(format!("{}.diagnostics.txt", m.run_id)), &m.diagnostics)?;
        let _ = writeln!(manifest, "member={} {}", m.run_id, m.label);
    }
    staged.write(dir.join(MANIFEST), &manifest)?;
    staged.done = true;
    Ok(std::mem::take(&mut staged.files))
}

/// `train-pool`: trains everything, then writes the artifact directory.
pub fn train_pool(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, ExperimentError> {
    let members = train_members(&cfg.env, &cfg.train, &cfg.anyplay, &cfg.pools)?;
    write_pool(&cfg.output_dir, &members, &cfg.zsc_exempt(), &cfg.eval)
}

/// Reads a pool directory written by [`write_pool`].
pub fn load_pool(dir: &Path) -> Result<(AgentPool, EvalConfig), ExperimentError> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let bad = |line: usize, msg: String| ExperimentError::Manifest { path: path.display().to_string(), line, msg };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    if lines.next().map(|(_, l)| l) != Some(MANIFEST_MAGIC) {
        return Err(bad(1, format!("expected `{MANIFEST_MAGIC}`")));
    }
    let mut eval = EvalConfig::default();
    let mut exempt = BTreeSet::new();
    let mut members = Vec::new();
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| bad(n, "expected key=value".into()))?;
        match key {
            "n_games" => eval.n_games = value.parse().map_err(|_| bad(n, format!("bad n_games `{value}`")))?,
            "base_seed" => eval.base_seed = value.parse().map_err(|_| bad(n, format!("bad base_seed `{value}`")))?,
            "zsc_exempt" => exempt.extend(value.split(',').filter(|s| !s.is_empty()).map(String::from)),
            "member" => {
                let (run_id, label) = value.split_once(' ').ok_or_else(|| bad(n, "expected `member=<run_id> <label>`".into()))?;
                let p1 = load_policy(&dir.join(format!("{run_id}.p1.policy")))?;
                let p2 = load_policy(&dir.join(format!("{run_id}.p2.policy")))?;
                members.push(PoolMember { run_id: run_id.into(), label: label.into(), p1, p2 });
            }
            other => return Err(bad(n, format!("unknown key `{other}`"))),
        }
    }
    Ok((AgentPool::new(members, exempt)?, eval))
}

/// The environment all members were trained on.
pub fn pool_env(pool: &AgentPool) -> Result<Env, ExperimentError> {
    let first = &pool.members()[0].p1;
    let expected = first.env_fingerprint();
    for m in pool.members() {
        for a in [&m.p1, &m.p2] {
            let found = a.env_fingerprint();
            if found != expected {
                return Err(XplayError::FingerprintMismatch { expected, found }.into());
            }
        }
    }
    Ok(Env::new(first.env.clone()).map_err(XplayError::from)?)
}

pub struct CrossplayOutput {
    pub matrix: CrossPlayMatrix,
    pub report: ScoreReport,
}

/// Writes the matrix, its standard errors, a heatmap, the score table and
/// the score correlation into `out`.
pub fn write_crossplay(out: &Path, title: &str, result: &CrossplayOutput) -> Result<(), ExperimentError> {
    let mut staged = Staged::new(out)?;
    staged.write(out.join("matrix.csv"), &report::means_csv(&result.matrix))?;
    staged.write(out.join("matrix.stderr.csv"), &report::stderr_csv(&result.matrix))?;
    staged.write(out.join("matrix.svg"), &report::heatmap_svg(&result.matrix, title))?;
    staged.write(out.join("scores.txt"), &report::score_table(&result.report))?;
    staged.write(out.join("scores.csv"), &report::scores_csv(&result.report))?;
    staged.write(out.join("pearson.csv"), &report::report_pearson_csv(&result.report))?;
    staged.done = true;
    Ok(())
}

pub fn evaluate_pool(pool: &AgentPool, eval: &EvalConfig) -> Result<CrossplayOutput, ExperimentError> {
    let env = pool_env(pool)?;
    let matrix = crossplay_matrix(pool, &env, eval.n_games, eval.base_seed)?;
    let report = aggregate_scores(&matrix, pool)?;
    Ok(CrossplayOutput { matrix, report })
}

/// `crossplay`: evaluates a pool directory. `None` settings fall back to
/// those recorded at training time.
pub fn crossplay(
    dir: &Path,
    n_games: Option<usize>,
    base_seed: Option<u64>,
    out: &Path,
) -> Result<CrossplayOutput, ExperimentError> {
    let (pool, recorded) = load_pool(dir)?;
    let eval = EvalConfig {
        n_games: n_games.unwrap_or(recorded.n_games),
        base_seed: base_seed.unwrap_or(recorded.base_seed),
    };
    let result = evaluate_pool(&pool, &eval)?;
    write_crossplay(out, &format!("cross-play: {}", dir.display()), &result)?;
    Ok(result)
}

#[derive(Debug, Clone)]
pub struct Fig4Options {
    pub seeds: usize,
    pub intents: Vec<usize>,
    pub out: PathBuf,
    pub eval: EvalConfig,
    pub train: TrainConfig,
    pub anyplay: AnyPlayConfig,
}

impl Fig4Options {
    pub fn new(out: PathBuf) -> Self {
        Self {
            seeds: 10,
            intents: vec![1, 2, 3, 4, 5, 6],
            out,
            eval: EvalConfig::default(),
            train: TrainConfig::default(),
            anyplay: AnyPlayConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fig4Summary {
    pub text: String,
    pub matrices: Vec<(usize, CrossPlayMatrix)>,
    pub failures: Vec<String>,
}

fn off_diagonal(m: &CrossPlayMatrix) -> impl Iterator<Item = f64> + '_ {
    (0..m.size()).flat_map(move |i| (0..m.size()).filter(move |&j| j != i).map(move |j| m.cells[i][j].mean))
}

/// Checks the single-intent matrix for both a clash and an agreement
/// between independently trained runs.
pub fn check_checkerboard(m: &CrossPlayMatrix) -> Result<(), String> {
    let any_low = m.cells.iter().flatten().any(|c| c.mean <= -9.0);
    let any_high = off_diagonal(m).any(|v| v >= 9.0);
    match (any_low, any_high) {
        (true, true) => Ok(()),
        _ => Err(format!("no cell <= -9 ({any_low}) or no off-diagonal cell >= 9 ({any_high})")),
    }
}

/// Checks that every pairing reaches the convention-free score.
pub fn check_uniform(m: &CrossPlayMatrix) -> Result<(), String> {
    let (lo, hi) = m.min_max();
    if hi - lo < 0.25 && lo >= 4.5 {
        Ok(())
    } else {
        Err(format!("spread {} (limit 0.25), min {lo} (limit 4.5)", hi - lo))
    }
}

/// `reproduce-fig4`: one pool and one matrix per intent count, then the
/// summary checks.
pub fn reproduce_fig4(opts: &Fig4Options) -> Result<Fig4Summary, ExperimentError> {
    let env = EnvConfig::default();
    let mut text = String::from("intents,min,max,offdiag_mean,check\n");
    let mut matrices = Vec::new();
    let mut failures = Vec::new();
    fs::create_dir_all(&opts.out).map_err(io_err(&opts.out))?;
    for &n in &opts.intents {
        let spec = PoolSpec {
            label: format!("n{n}"),
            algorithm: Algorithm::AnyPlay,
            num_intents: n,
            seeds: (0..opts.seeds as u64).collect(),
            zsc_exempt: false,
        };
        let members = train_members(&env, &opts.train, &opts.anyplay, std::slice::from_ref(&spec))?;
        let dir = opts.out.join(&spec.label);
        write_pool(&dir, &members, &BTreeSet::new(), &opts.eval)?;
        let pool = AgentPool::new(members.iter().map(TrainedMember::pool_member).collect(), BTreeSet::new())?;
        let result = evaluate_pool(&pool, &opts.eval)?;
        write_crossplay(&dir, &format!("{n} intent(s), {} runs", opts.seeds), &result)?;

        let m = result.matrix;
        let (lo, hi) = m.min_max();
        let off: Vec<f64> = off_diagonal(&m).collect();
        let off_mean = if off.is_empty() { f64::NAN } else { off.iter().sum::<f64>() / off.len() as f64 };
        let check = match n {
            1 => Some(check_checkerboard(&m)),
            4 => Some(check_uniform(&m)),
            _ => None,
        };
        let status = match &check {
            None => "-".to_string(),
            Some(Ok(())) => "pass".to_string(),
            Some(Err(e)) => {
                failures.push(format!("n{n}/matrix.csv: {e}"));
                format!("FAIL ({e})")
            }
        };
        let _ = writeln!(text, "{n},{lo},{hi},{off_mean},{status}");
        matrices.push((n, m));
    }
    let path = opts.out.join("summary.csv");
    fs::write(&path, &text).map_err(io_err(&path))?;
    Ok(Fig4Summary { text, matrices, failures })
}
