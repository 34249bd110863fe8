//! Full per-asset experiment driven by one TOML file, resumable per stage.

use crate::commands::{history_csv, markov_mode, sibling, write_episodes, write_runs, FINGERPRINT_FILE, RESULTS_FILE};
use crate::files::{read_json, read_mids, read_toml, write_json, write_mids};
use crate::commands::MmOverrides;
use anyhow::{bail, Context, Result};
use lobhawk::events::{ingest, parse_lobster, read_event_stream, write_event_stream, IngestConfig, IngestReport, MarketStateConfig, StreamLayout};
use lobhawk::midprice::{build_path, fit_jumps, read_path_csv, stylized_stats, write_path_csv, JumpDistribution, PricePath, StylizedStats};
use lobhawk::mm::{self, observed_stream, segment, EvalSummary, ExperimentConfig, MarketStream, MmConfig, SacConfig};
use lobhawk::neural::{self, CtLstmConfig, Mark};
use lobhawk::report::{self, AssetResults, Fingerprint, ReportBundle};
use lobhawk::rng::derive_seed;
use lobhawk::sim::{self, CountReport, HorizonMode, SimConfig, StateMode};
use lobhawk::Exec;
use log::{info, warn};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetSpec {
    pub name: String,
    pub messages: PathBuf,
    pub orderbook: PathBuf,
    /// Tick in LOBSTER price units; inferred when absent.
    #[serde(default)]
    pub tick_raw: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub theta: f64,
    pub levels: usize,
}

impl Default for IngestSection {
    fn default() -> Self {
        Self { theta: 0.4, levels: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub runs: usize,
    /// Defaults to the larger of the test-split size and the market-making
    /// train plus test length.
    pub events_per_run: Option<usize>,
    /// Drive the market-state input with a chain fitted on the real stream.
    pub markov_states: bool,
    pub safety: f64,
    pub grid_points: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        Self { runs: d.runs, events_per_run: None, markov_states: false, safety: d.safety, grid_points: d.grid_points }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default)]
    pub output_root: Option<PathBuf>,
    pub assets: Vec<AssetSpec>,
    #[serde(default)]
    pub ingest: IngestSection,
    #[serde(default)]
    pub neural: CtLstmConfig,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub mm: MmConfig,
    #[serde(default)]
    pub sac: SacConfig,
    /// Simulated runs whose paths train and test the market maker.
    #[serde(default = "one")]
    pub mm_streams: usize,
}

fn one() -> usize {
    1
}

impl PipelineConfig {
    /// Parse, resolve relative paths against the file's directory and validate.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = read_toml(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for a in &mut cfg.assets {
            a.messages = base.join(&a.messages);
            a.orderbook = base.join(&a.orderbook);
        }
        if let Some(root) = &cfg.output_root {
            cfg.output_root = Some(base.join(root));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.assets.is_empty() {
            bail!("no assets configured");
        }
        let mut names = BTreeSet::new();
        for a in &self.assets {
            if !names.insert(&a.name) {
                bail!("asset {} listed twice", a.name);
            }
            for f in [&a.messages, &a.orderbook] {
                if !f.is_file() {
                    bail!("asset {}: missing file {}", a.name, f.display());
                }
            }
        }
        MarketStateConfig::new(self.ingest.theta)?;
        self.neural.validate()?;
        self.mm.validate()?;
        self.sac.validate()?;
        if self.mm_streams == 0 || self.mm_streams > self.sim.runs {
            bail!("mm_streams must be in 1..=sim.runs");
        }
        self.sim_config(0, 1).validate()?;
        Ok(())
    }

    fn sim_config(&self, seed: u64, events: usize) -> SimConfig {
        SimConfig {
            runs: self.sim.runs,
            horizon: HorizonMode::Events(events),
            seed,
            safety: self.sim.safety,
            grid_points: self.sim.grid_points,
            ..Default::default()
        }
    }

    fn experiment(&self, seed: u64) -> ExperimentConfig {
        let mut mm = self.mm.clone();
        let mut sac = self.sac.clone();
        mm.seed = derive_seed(seed, 1);
        sac.seed = derive_seed(seed, 2);
        ExperimentConfig { mm, sac }
    }
}

/// Finished stages in completion order; artifact paths are relative to the output root.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AssetManifest {
    pub completed: Vec<String>,
    pub artifacts: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub fingerprint: Fingerprint,
    pub assets: BTreeMap<String, AssetManifest>,
    pub report: Option<PathBuf>,
}


struct Run<'a> {
    cfg: &'a PipelineConfig,
    root: PathBuf,
    manifest: Mutex<Manifest>,
    exec: Exec,
}

impl Run<'_> {
    fn save(&self) -> Result<()> {
        let m = self.manifest.lock().expect("manifest lock");
        write_json(&self.root.join("manifest.json"), &*m)
    }

    fn done(&self, asset: &str, stage: &str) -> bool {
        let m = self.manifest.lock().expect("manifest lock");
        m.assets.get(asset).is_some_and(|a| {
            a.completed.iter().any(|s| s == stage)
                && a.artifacts.iter().filter(|(k, _)| k.starts_with(stage)).all(|(_, p)| self.root.join(p).exists())
        })
    }

    fn record(&self, asset: &str, stage: &str, artifacts: &[(&str, PathBuf)]) -> Result<()> {
        {
            let mut m = self.manifest.lock().expect("manifest lock");
            let a = m.assets.entry(asset.to_string()).or_default();
            for (k, p) in artifacts {
                let rel = p.strip_prefix(&self.root).unwrap_or(p);
                a.artifacts.insert(format!("{stage}.{k}"), rel.to_path_buf());
            }
            if !a.completed.iter().any(|s| s == stage) {
                a.completed.push(stage.to_string());
            }
        }
        self.save()
    }
}

/// Run (or resume) every stage for every asset, then the report.
pub fn run(config: &Path, out: Option<PathBuf>, seed: Option<u64>, overrides: &MmOverrides, exec: Exec) -> Result<ReportBundle> {
    let mut cfg = PipelineConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let mut exp = ExperimentConfig { mm: cfg.mm.clone(), sac: cfg.sac.clone() };
    overrides.apply(&mut exp);
    cfg.mm = exp.mm;
    cfg.sac = exp.sac;
    cfg.validate()?;
    let root = out.or(cfg.output_root.clone()).context("no output root: pass --out, set LOBHAWK_OUTPUT or output_root")?;
    run_config(&cfg, &root, exec)
}

pub fn run_config(cfg: &PipelineConfig, root: &Path, exec: Exec) -> Result<ReportBundle> {
    std::fs::create_dir_all(root)?;
    let fingerprint = Fingerprint::new(cfg.seed, serde_json::to_value(cfg)?);
    let manifest_path = root.join("manifest.json");
    let manifest = match read_json::<Manifest>(&manifest_path) {
        Ok(m) if m.fingerprint == fingerprint => m,
        Ok(_) => {
            warn!("configuration changed since the last run; starting over");
            Manifest { fingerprint: fingerprint.clone(), assets: BTreeMap::new(), report: None }
        }
        Err(_) => Manifest { fingerprint: fingerprint.clone(), assets: BTreeMap::new(), report: None },
    };
    write_json(&root.join(FINGERPRINT_FILE), &fingerprint)?;
    let run = Run { cfg, root: root.to_path_buf(), manifest: Mutex::new(manifest), exec };
    run.save()?;

    let outcomes = exec.map_range(cfg.assets.len(), |k| run_asset(&run, k));
    for (a, r) in cfg.assets.iter().zip(&outcomes) {
        if let Err(e) = r {
            warn!("asset {} failed: {e:#}", a.name);
        }
    }
    if let Some(Err(e)) = outcomes.into_iter().find(Result::is_err) {
        return Err(e);
    }

    let assets: Vec<AssetResults> =
        cfg.assets.iter().map(|a| read_json(&root.join(&a.name).join(RESULTS_FILE))).collect::<Result<_>>()?;
    let bundle = report::emit(&assets, fingerprint, &root.join("report"))?;
    run.manifest.lock().expect("manifest lock").report = Some(PathBuf::from("report"));
    run.save()?;
    info!("pipeline finished: {}", root.display());
    Ok(bundle)
}

fn tick_currency(report: &IngestReport) -> f64 {
    report.tick_raw as f64 / 10_000.0
}

fn run_asset(run: &Run, k: usize) -> Result<()> {
    let cfg = run.cfg;
    let spec = &cfg.assets[k];
    let name = spec.name.as_str();
    let dir = run.root.join(name);
    let seed = derive_seed(cfg.seed, k as u64);
    std::fs::create_dir_all(&dir)?;
    let events_csv = dir.join("events.csv");
    let mids_csv = sibling(&events_csv, "mids.csv");
    let report_json = sibling(&events_csv, "report.json");
    let jumps_json = sibling(&events_csv, "jumps.json");
    let model_dir = dir.join("model");
    let sim_dir = dir.join("sim");
    let stats_json = dir.join("stats.json");
    let real_path_csv = dir.join("real_path.csv");

    let stage = |s: &str| -> bool {
        let skip = run.done(name, s);
        if skip {
            info!("{name}: {s} already complete");
        } else {
            info!("{name}: {s}");
        }
        !skip
    };

    if stage("ingest") {
        let icfg = IngestConfig {
            market_state: MarketStateConfig::new(cfg.ingest.theta)?,
            tick_raw: spec.tick_raw,
            max_levels: cfg.ingest.levels,
        };
        let parsed = parse_lobster(&spec.messages, &spec.orderbook, spec.tick_raw, cfg.ingest.levels)?;
        let out = ingest(&parsed, &icfg)?;
        write_event_stream(&events_csv, &out.events, StreamLayout::Full)?;
        let seqs: Vec<u64> = out.events.iter().map(|e| e.seq).collect();
        write_mids(&mids_csv, &seqs, &out.mids)?;
        write_json(&report_json, &out.report)?;
        std::fs::write(&jumps_json, fit_jumps(&out.events, &out.mids)?.to_json())?;
        run.record(name, "ingest", &[("events", events_csv.clone()), ("mids", mids_csv.clone()), ("report", report_json.clone()), ("jumps", jumps_json.clone())])?;
    }
    let (events, _) = read_event_stream(&events_csv)?;
    let mids = read_mids(&mids_csv)?;
    let ireport: IngestReport = read_json(&report_json)?;
    let tick = tick_currency(&ireport);

    if stage("train") {
        let ncfg = CtLstmConfig { seed: derive_seed(seed, 3), ..cfg.neural.clone() };
        let marks: Vec<Mark> = events.iter().map(Mark::from).collect();
        let tm = neural::train(&ncfg, &marks, run.exec)?;
        neural::write_model_dir(&model_dir, &tm.model, Some(&tm.report))?;
        std::fs::write(model_dir.join("history.csv"), history_csv(&tm.report))?;
        run.record(name, "train", &[("model", model_dir.clone())])?;
    }

    if stage("simulate") {
        let (model, report) = neural::read_model_dir(&model_dir)?;
        let test_split = report.map_or(0, |r| r.splits[2]);
        let n = cfg.sim.events_per_run.unwrap_or_else(|| test_split.max(cfg.mm.train_len + cfg.mm.test_len));
        let mut scfg = cfg.sim_config(derive_seed(seed, 4), n);
        if cfg.sim.markov_states {
            scfg.state_mode = markov_mode(&events_csv)?;
        } else {
            scfg.state_mode = StateMode::Balanced;
        }
        let runs = sim::simulate_runs(&model, &scfg, run.exec)?;
        write_runs(&sim_dir, &runs, model.architecture().num_types)?;
        run.record(name, "simulate", &[("counts", sim_dir.join("counts.json"))])?;
    }
    let counts: CountReport = read_json(&sim_dir.join("counts.json"))?;

    if stage("price") {
        let jumps = JumpDistribution::from_json(&std::fs::read_to_string(&jumps_json)?)?;
        let real = observed_stream(&events, &mids, tick)?;
        let real_path = PricePath { v0: real.v0, tick, steps: real.steps.clone(), clamped: 0 };
        write_path_csv(&real_path_csv, &real_path)?;
        let v0 = real.v0 as f64 * real.half_tick;
        let sims: Vec<PricePath> = (0..cfg.sim.runs)
            .map(|r| -> Result<PricePath> {
                let (ev, _) = read_event_stream(&sim_dir.join(format!("run_{r:03}.csv")))?;
                let p = build_path(&ev, &jumps, v0, tick, derive_seed(seed, 1000 + r as u64))?;
                write_path_csv(&sim_dir.join(format!("path_{r:03}.csv")), &p)?;
                Ok(p)
            })
            .collect::<Result<_>>()?;
        let stats = PriceStats { real: stylized_stats(&real_path.prices()).ok(), sim: pooled_stats(&sims) };
        write_json(&stats_json, &stats)?;
        run.record(name, "price", &[("stats", stats_json.clone()), ("real_path", real_path_csv.clone())])?;
    }

    let mm_sim_dir = dir.join("mm_sim");
    if stage("mm_sim") {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for r in 0..cfg.mm_streams {
            let p = read_path_csv(&sim_dir.join(format!("path_{r:03}.csv")), tick)?;
            train.push(segment(&p, 0, cfg.mm.train_len)?);
            test.push(segment(&p, cfg.mm.train_len, cfg.mm.test_len)?);
        }
        market_making(&cfg.experiment(derive_seed(seed, 5)), &train, &test, &mm_sim_dir, run.exec)?;
        run.record(name, "mm_sim", &[("eval", mm_sim_dir.join("eval.json"))])?;
    }

    let mm_real_dir = dir.join("mm_real");
    if stage("mm_real") {
        let p = read_path_csv(&real_path_csv, tick)?;
        let train = segment(&p, 0, cfg.mm.train_len).context("real stream too short for market making")?;
        let test = segment(&p, cfg.mm.train_len, cfg.mm.test_len).context("real stream too short for market making")?;
        market_making(&cfg.experiment(derive_seed(seed, 6)), &[train], &[test], &mm_real_dir, run.exec)?;
        run.record(name, "mm_real", &[("eval", mm_real_dir.join("eval.json"))])?;
    }

    let results = dir.join(RESULTS_FILE);
    if stage("results") {
        let stats: PriceStats = read_json(&stats_json)?;
        let ev_sim: EvalSummary = read_json(&mm_sim_dir.join("eval.json"))?;
        let ev_real: EvalSummary = read_json(&mm_real_dir.join("eval.json"))?;
        let sim_paths = (0..cfg.sim.runs.min(5))
            .map(|r| read_path_csv(&sim_dir.join(format!("path_{r:03}.csv")), tick).map(|p| thin_series(&p.prices(), 500)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let res = AssetResults {
            asset: name.to_string(),
            real_counts: Some(ireport.counts.counts),
            sim_counts: Some(counts.totals.clone()),
            jumps: Some(JumpDistribution::from_json(&std::fs::read_to_string(&jumps_json)?)?),
            real_stats: stats.real,
            sim_stats: stats.sim,
            ratio_real: ev_real.fill_ratio,
            ratio_sim: ev_sim.fill_ratio,
            fills_real: Some(ev_real.fills),
            fills_sim: Some(ev_sim.fills),
            rewards_real: Some(ev_real.terminal_rewards.clone()),
            rewards_sim: Some(ev_sim.terminal_rewards.clone()),
            sim_paths,
        };
        write_json(&results, &res)?;
        run.record(name, "results", &[("results", results.clone())])?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceStats {
    pub real: Option<StylizedStats>,
    /// Field-wise mean over the simulated paths.
    pub sim: Option<StylizedStats>,
}

fn mean_of(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = xs.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn pooled_stats(paths: &[PricePath]) -> Option<StylizedStats> {
    let all: Vec<StylizedStats> = paths.iter().filter_map(|p| stylized_stats(&p.prices()).ok()).collect();
    if all.is_empty() {
        return None;
    }
    Some(StylizedStats {
        returns: all.iter().map(|s| s.returns).sum(),
        volatility: mean_of(all.iter().map(|s| Some(s.volatility)))?,
        abs_skewness: mean_of(all.iter().map(|s| s.abs_skewness)),
        excess_kurtosis: mean_of(all.iter().map(|s| s.excess_kurtosis)),
        hurst: mean_of(all.iter().map(|s| s.hurst)),
    })
}

fn thin_series(xs: &[f64], max: usize) -> Vec<f64> {
    let step = xs.len().div_ceil(max).max(1);
    xs.iter().step_by(step).copied().collect()
}

fn market_making(cfg: &ExperimentConfig, train: &[MarketStream], test: &[MarketStream], dir: &Path, exec: Exec) -> Result<()> {
    let (agent, report, eps) = mm::train_and_evaluate(cfg, train, test, exec)?;
    agent.save(dir)?;
    std::fs::write(dir.join("training.csv"), report.training_csv())?;
    write_json(&dir.join("untrained.json"), &report.untrained)?;
    write_episodes(dir, &eps)?;
    write_json(&dir.join("eval.json"), &report.eval)?;
    Ok(())
}
