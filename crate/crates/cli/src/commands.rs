use crate::files::{read_json, read_toml, write_json, write_mids, write_pairs};
use anyhow::{bail, Context, Result};
use clap::Args;
use lobhawk::events::{ingest as classify_stream, parse_lobster, read_event_stream, write_event_stream, IngestConfig, MarketStateConfig, StreamLayout};
use lobhawk::hawkes::{self, HawkesModel};
use lobhawk::midprice::{build_path, fit_jumps, read_path_csv, stylized_stats, unit_jump_path, write_path_csv, JumpDistribution};
use lobhawk::mm::{self, segment, ExperimentConfig, MarketStream, MmConfig};
use lobhawk::neural::{self, CtLstmConfig, Mark};
use lobhawk::report::{self, AssetResults, Fingerprint};
use lobhawk::rng::derive_seed;
use lobhawk::sim::{self, fit_markov, HorizonMode, SimConfig, StateMode};
use lobhawk::synth::{self, AssetProfile};
use lobhawk::thinning::Horizon;
use lobhawk::Exec;
use log::{info, warn};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub messages: PathBuf,
    #[arg(long)]
    pub book: PathBuf,
    /// Canonical event-stream CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.4)]
    pub theta: f64,
    /// Tick in LOBSTER price units (1e-4 dollars); inferred when absent.
    #[arg(long)]
    pub tick: Option<i64>,
    /// Book levels to read from the orderbook file.
    #[arg(long, default_value_t = 1)]
    pub levels: usize,
}

/// Sibling file of `out` with a different suffix, e.g. `events.csv` -> `events.mids.csv`.
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map_or("events".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.{suffix}"))
}

pub fn ingest(a: IngestArgs) -> Result<()> {
    let cfg = IngestConfig { market_state: MarketStateConfig::new(a.theta)?, tick_raw: a.tick, max_levels: a.levels };
    let parsed = parse_lobster(&a.messages, &a.book, a.tick, a.levels)?;
    let out = classify_stream(&parsed, &cfg)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_event_stream(&a.out, &out.events, StreamLayout::Full)?;
    let seqs: Vec<u64> = out.events.iter().map(|e| e.seq).collect();
    write_mids(&sibling(&a.out, "mids.csv"), &seqs, &out.mids)?;
    write_json(&sibling(&a.out, "report.json"), &out.report)?;
    match fit_jumps(&out.events, &out.mids) {
        Ok(j) => std::fs::write(sibling(&a.out, "jumps.json"), j.to_json())?,
        Err(e) => warn!("no jump distribution written: {e}"),
    }
    info!(
        "{} events from {} rows (tick {} raw units), {} discarded",
        out.events.len(),
        out.report.rows,
        out.report.tick_raw,
        out.report.discarded.values().sum::<usize>()
    );
    for (t, p) in lobhawk::EventType::ALL.iter().zip(out.report.counts.probabilities()) {
        println!("{:<4} {:>8} {p:.5}", t.label(), out.report.counts.get(*t));
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct HawkesSimArgs {
    /// JSON model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Horizon in seconds.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Stop after this many events instead.
    #[arg(long)]
    pub events: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn hawkes_sim(a: HawkesSimArgs, seed: u64) -> Result<()> {
    let model = HawkesModel::load(&a.model)?;
    let horizon = Horizon { until: a.horizon, max_events: a.events };
    if horizon.until.is_none() && horizon.max_events.is_none() {
        bail!("give --horizon or --events");
    }
    let out = hawkes::simulate(&model, horizon, seed)?;
    write_pairs(&a.out, &out.events)?;
    info!("{} events, {} proposals", out.events.len(), out.stats.proposals);
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// TOML model config; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub hidden: Option<usize>,
}

pub fn train(a: TrainArgs, seed: u64, exec: Exec) -> Result<()> {
    let mut cfg: CtLstmConfig = match &a.config {
        Some(p) => read_toml(p)?,
        None => CtLstmConfig::default(),
    };
    cfg.seed = seed;
    cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
    cfg.batch = a.batch.unwrap_or(cfg.batch);
    cfg.window = a.window.unwrap_or(cfg.window);
    cfg.stride = a.stride.or(cfg.stride);
    cfg.lr = a.lr.unwrap_or(cfg.lr);
    cfg.hidden = a.hidden.unwrap_or(cfg.hidden);
    let (events, _) = read_event_stream(&a.events)?;
    let marks: Vec<Mark> = events.iter().map(Mark::from).collect();
    let tm = neural::train(&cfg, &marks, exec)?;
    neural::write_model_dir(&a.out, &tm.model, Some(&tm.report))?;
    std::fs::write(a.out.join("history.csv"), history_csv(&tm.report))?;
    println!("test nll {:.4}  accuracy {:.4}  (best epoch {})", tm.report.test_nll, tm.report.test_accuracy, tm.report.best_epoch);
    Ok(())
}

pub fn history_csv(r: &neural::TrainReport) -> String {
    let mut s = String::from("epoch,train_nll,val_nll,val_accuracy\n");
    for h in &r.history {
        s.push_str(&format!("{},{},{},{}\n", h.epoch, h.train_nll, h.val_nll, h.val_accuracy));
    }
    s
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Directory written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub runs: usize,
    /// Events per run; defaults to the model's test-split size.
    #[arg(long)]
    pub events_per_run: Option<usize>,
    /// Simulate for this many seconds per run instead.
    #[arg(long, conflicts_with = "events_per_run")]
    pub seconds: Option<f64>,
    /// Drive the market-state input with a chain fitted on this event stream.
    #[arg(long)]
    pub markov_from: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn markov_mode(events: &Path) -> Result<StateMode> {
    let (ev, _) = read_event_stream(events)?;
    let states: Vec<usize> = ev.iter().map(|e| e.market_state.index()).collect();
    Ok(StateMode::Markov { transition: fit_markov(&states), initial: states.first().copied().unwrap_or(1) })
}

pub fn simulate(a: SimulateArgs, seed: u64, exec: Exec) -> Result<()> {
    let (model, report) = neural::read_model_dir(&a.model)?;
    let horizon = match (a.seconds, a.events_per_run) {
        (Some(s), _) => HorizonMode::Seconds(s),
        (None, Some(n)) => HorizonMode::Events(n),
        (None, None) => HorizonMode::Events(report.map_or(1000, |r| r.splits[2])),
    };
    let state_mode = match &a.markov_from {
        Some(p) => markov_mode(p)?,
        None => StateMode::Balanced,
    };
    let cfg = SimConfig { runs: a.runs, horizon, seed, state_mode, ..Default::default() };
    let runs = sim::simulate_runs(&model, &cfg, exec)?;
    write_runs(&a.out, &runs, model.architecture().num_types)?;
    Ok(())
}

pub fn write_runs(dir: &Path, runs: &[sim::SimRun], m: usize) -> Result<sim::CountReport> {
    std::fs::create_dir_all(dir)?;
    for (k, r) in runs.iter().enumerate() {
        write_event_stream(&dir.join(format!("run_{k:03}.csv")), &r.to_lob_events(), StreamLayout::TypesOnly)?;
    }
    let counts = sim::count_report(runs, m)?;
    write_json(&dir.join("counts.json"), &counts)?;
    std::fs::write(dir.join("per_run.csv"), counts.per_run_csv())?;
    info!("{} runs, {} events", runs.len(), counts.total_events());
    Ok(counts)
}

#[derive(Debug, Args)]
pub struct PriceArgs {
    #[arg(long)]
    pub events: PathBuf,
    /// Jump distribution JSON; unit jumps when absent.
    #[arg(long)]
    pub jumps: Option<PathBuf>,
    /// Initial midprice in currency.
    #[arg(long)]
    pub v0: f64,
    /// Tick size in currency.
    #[arg(long, default_value_t = 0.01)]
    pub tick: f64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn price(a: PriceArgs, seed: u64) -> Result<()> {
    let (events, _) = read_event_stream(&a.events)?;
    let path = match &a.jumps {
        Some(j) => {
            let jumps = JumpDistribution::from_json(&std::fs::read_to_string(j)?)?;
            build_path(&events, &jumps, a.v0, a.tick, seed)?
        }
        None => unit_jump_path(&events, a.v0, a.tick)?,
    };
    write_path_csv(&a.out, &path)?;
    println!("terminal {:.4} after {} events ({} clamped)", path.terminal(), path.steps.len(), path.clamped);
    Ok(())
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub path: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub tick: f64,
    /// Also write the statistics as JSON here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn stats(a: StatsArgs) -> Result<()> {
    let p = read_path_csv(&a.path, a.tick)?;
    let s = stylized_stats(&p.prices())?;
    let text = serde_json::to_string_pretty(&s)?;
    if let Some(o) = &a.out {
        std::fs::write(o, &text)?;
    }
    println!("{text}");
    Ok(())
}

/// Flag overrides for the market-making parameters.
#[derive(Debug, Clone, Default, Args)]
pub struct MmOverrides {
    #[arg(long)]
    pub q_max: Option<i32>,
    #[arg(long)]
    pub dq: Option<i32>,
    /// Non-adverse fill probability.
    #[arg(long)]
    pub fill_prob: Option<f64>,
    /// Inventory penalty.
    #[arg(long)]
    pub psi: Option<f64>,
    #[arg(long)]
    pub train_len: Option<usize>,
    #[arg(long)]
    pub test_len: Option<usize>,
    #[arg(long)]
    pub train_episodes: Option<usize>,
    #[arg(long)]
    pub eval_episodes: Option<usize>,
}

impl MmOverrides {
    pub fn apply(&self, c: &mut ExperimentConfig) {
        let m = &mut c.mm;
        m.q_max = self.q_max.unwrap_or(m.q_max);
        m.dq = self.dq.unwrap_or(m.dq);
        m.p = self.fill_prob.unwrap_or(m.p);
        m.psi = self.psi.unwrap_or(m.psi);
        m.train_len = self.train_len.unwrap_or(m.train_len);
        m.test_len = self.test_len.unwrap_or(m.test_len);
        c.sac.train_episodes = self.train_episodes.unwrap_or(c.sac.train_episodes);
        c.sac.eval_episodes = self.eval_episodes.unwrap_or(c.sac.eval_episodes);
    }
}

#[derive(Debug, Args)]
pub struct MmTrainArgs {
    /// Event stream the price path was built from; checked for alignment.
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Price path CSV.
    #[arg(long)]
    pub prices: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub tick: f64,
    /// TOML with `[mm]` and `[sac]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: MmOverrides,
}

/// Sidecar next to a saved agent.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MmRun {
    pub config: ExperimentConfig,
    pub prices: PathBuf,
    pub tick: f64,
}

pub fn load_streams(prices: &Path, tick: f64, mm: &MmConfig) -> Result<(MarketStream, MarketStream)> {
    let path = read_path_csv(prices, tick)?;
    let train = segment(&path, 0, mm.train_len)?;
    let test = segment(&path, mm.train_len, mm.test_len)?;
    Ok((train, test))
}

pub fn mm_train(a: MmTrainArgs, seed: u64) -> Result<()> {
    let mut cfg: ExperimentConfig = match &a.config {
        Some(p) => read_toml(p)?,
        None => ExperimentConfig::default(),
    };
    a.overrides.apply(&mut cfg);
    cfg.mm.seed = derive_seed(seed, 1);
    cfg.sac.seed = derive_seed(seed, 2);
    if let Some(ev) = &a.events {
        let (events, _) = read_event_stream(ev)?;
        let path = read_path_csv(&a.prices, a.tick)?;
        let aligned = events.len() == path.steps.len() && events.iter().zip(&path.steps).all(|(e, s)| e.etype == s.etype);
        if !aligned {
            bail!("{} does not match the event types of {}", a.prices.display(), ev.display());
        }
    }
    let (train, _) = load_streams(&a.prices, a.tick, &cfg.mm)?;
    let (agent, curve) = mm::train_agent(&cfg, std::slice::from_ref(&train))?;
    agent.save(&a.out)?;
    let report = mm::ExperimentReport {
        config: cfg.clone(),
        training: curve,
        untrained: mm::EvalSummary::from_episodes(&[]),
        eval: mm::EvalSummary::from_episodes(&[]),
    };
    std::fs::write(a.out.join("training.csv"), report.training_csv())?;
    let prices = std::fs::canonicalize(&a.prices)?;
    write_json(&a.out.join("mm.json"), &MmRun { config: cfg, prices, tick: a.tick })?;
    info!("agent written to {}", a.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct MmEvalArgs {
    /// Directory written by `mm-train`.
    #[arg(long)]
    pub agent: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    /// Evaluate on another price path instead of the training file's test slice.
    #[arg(long)]
    pub prices: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn mm_eval(a: MmEvalArgs, seed: Option<u64>, exec: Exec) -> Result<()> {
    let run: MmRun = read_json(&a.agent.join("mm.json"))?;
    let agent = mm::SacAgent::load(&a.agent)?;
    let prices = a.prices.clone().unwrap_or(run.prices.clone());
    let (_, test) = load_streams(&prices, run.tick, &run.config.mm)?;
    let eval_seed = derive_seed(seed.unwrap_or(run.config.mm.seed), 0xE7A1);
    let eps = mm::evaluate(&agent, std::slice::from_ref(&test), &run.config.mm, run.config.mm.test_len, a.episodes, eval_seed, exec)?;
    let out = a.out.unwrap_or_else(|| a.agent.join("eval"));
    write_episodes(&out, &eps)?;
    let summary = mm::EvalSummary::from_episodes(&eps);
    write_json(&out.join("eval.json"), &summary)?;
    println!(
        "mean reward {:.6}  adverse {}  non-adverse {}  ratio {}",
        summary.mean_reward,
        summary.adverse(),
        summary.non_adverse(),
        summary.fill_ratio.map_or("n/a".to_string(), |r| format!("{r:.4}"))
    );
    Ok(())
}

pub fn write_episodes(dir: &Path, eps: &[mm::MmEpisode]) -> Result<()> {
    let logs = dir.join("episodes");
    std::fs::create_dir_all(&logs)?;
    for (k, e) in eps.iter().enumerate() {
        e.write_log_csv(&logs.join(format!("episode_{k:03}.csv")))?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Pipeline output root.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

pub const RESULTS_FILE: &str = "results.json";
pub const FINGERPRINT_FILE: &str = "fingerprint.json";

pub fn report(a: ReportArgs) -> Result<()> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&a.run)
        .with_context(|| format!("reading {}", a.run.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(RESULTS_FILE).is_file())
        .collect();
    dirs.sort();
    let assets: Vec<AssetResults> = dirs.iter().map(|d| read_json(&d.join(RESULTS_FILE))).collect::<Result<_>>()?;
    if assets.is_empty() {
        warn!("no per-asset results under {}", a.run.display());
    }
    let fp_path = a.run.join(FINGERPRINT_FILE);
    let fp = if fp_path.is_file() { read_json(&fp_path)? } else { Fingerprint::new(0, serde_json::Value::Null) };
    let bundle = report::emit(&assets, fp, &a.out)?;
    println!("{} files written to {}", bundle.files.len() + 1, a.out.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    /// Assets to generate, from the built-in day profiles.
    #[arg(long, value_delimiter = ',', default_value = "AAPL")]
    pub assets: Vec<String>,
    #[arg(long, default_value_t = 20_000)]
    pub events: usize,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn fixture(a: FixtureArgs, seed: u64) -> Result<()> {
    for (k, name) in a.assets.iter().enumerate() {
        let profile = AssetProfile::named(name).with_context(|| format!("unknown asset profile {name}"))?;
        let fx = synth::generate_asset(&profile, a.events, derive_seed(seed, k as u64));
        let paths = synth::write_fixture(&a.out, &fx)?;
        println!("{} -> {} ({} rows)", name, paths.messages.display(), fx.manifest.rows);
    }
    Ok(())
}
