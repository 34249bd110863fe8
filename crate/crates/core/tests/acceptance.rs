//! Acceptance criteria, run in order with one PASS/FAIL line each.
//!
//! Plain binary (no libtest harness) so the lines are always printed.
//! `LOBHAWK_ACCEPTANCE=2,7` runs a subset.

use lobhawk::events::{ingest, parse_lobster, Direction, IngestConfig, IngestOutput, MarketStateConfig};
use lobhawk::hawkes::{self, conditional_log_likelihood, HawkesModel, Transfer};
use lobhawk::midprice::{build_path, fit_jumps, hurst_rs, stylized_stats, unit_jump_path, JumpDistribution, PathStep, PricePath};
use lobhawk::mm::{
    critic_loss, observed_stream, policy_loss, run_episode, segment, train_and_evaluate, Action, Batch, ExperimentConfig,
    FillKind, MarketStream, MmConfig, Normalizer, SacAgent, SacConfig, Transition, OBS_DIM,
};
use lobhawk::neural::{self, marks_from_pairs, Architecture, CtLstm, CtLstmConfig, Mark};
use lobhawk::nn::gradcheck::max_relative_error;
use lobhawk::nn::ParamId;
use lobhawk::rng::{categorical, derive_seed, seeded};
use lobhawk::sim::{simulate_runs, simulate_stream, SimConfig, HorizonMode, SimRun};
use lobhawk::thinning::{thin, BoundRule, ConstantIntensity, Horizon, ThinningConfig};
use lobhawk::{EventType, Exec, LobEvent};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::path::PathBuf;
use std::time::Instant;

type Check = Result<(bool, String), String>;

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/synthetic")
}

fn load_asset(name: &str) -> Result<IngestOutput, String> {
    let d = fixture_dir();
    let parsed = parse_lobster(&d.join(format!("{name}_message_1.csv")), &d.join(format!("{name}_orderbook_1.csv")), None, 1)
        .map_err(|e| e.to_string())?;
    let cfg = IngestConfig { market_state: MarketStateConfig::new(0.4).unwrap(), tick_raw: None, max_levels: 1 };
    ingest(&parsed, &cfg).map_err(|e| e.to_string())
}

// ---- 1 ----

fn classification_fixture() -> Check {
    let mut notes = Vec::new();
    let mut pass = true;
    for name in ["AAPL", "MSFT"] {
        let out = load_asset(name)?;
        let text = std::fs::read_to_string(fixture_dir().join(format!("{name}_manifest.json"))).map_err(|e| e.to_string())?;
        let manifest: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
        // Count directly from the classified stream rather than the report.
        let mut seen = [0u64; 12];
        for e in &out.events {
            seen[e.etype.index()] += 1;
        }
        let mut mismatches = 0;
        for t in EventType::ALL {
            let want = manifest["counts"][t.label()].as_u64().ok_or("manifest lacks a count")?;
            if seen[t.index()] != want || out.report.counts.get(t) != want {
                mismatches += 1;
            }
        }
        let total: u64 = seen.iter().sum();
        let psum: f64 = seen.iter().map(|&c| c as f64 / total as f64).sum();
        let lib_sum: f64 = out.report.counts.probabilities().iter().sum();
        let ok = mismatches == 0 && (psum - 1.0).abs() <= 1e-12 && (lib_sum - 1.0).abs() <= 1e-12;
        pass &= ok;
        notes.push(format!("{name}: {total} events, {mismatches} count mismatches, prob sum - 1 = {:.1e}", lib_sum - 1.0));
    }
    notes.push("public sample day not supplied; Table 1 comparison skipped".into());
    Ok((pass, notes.join("; ")))
}

// ---- 2 ----

fn oracle_model() -> HawkesModel {
    HawkesModel::new(
        vec![0.4, 0.3, 0.2],
        vec![vec![0.8, 0.2, 0.0], vec![0.1, 0.9, 0.3], vec![0.2, 0.0, 1.2]],
        vec![vec![2.0, 1.5, 1.0], vec![1.5, 2.5, 2.0], vec![1.0, 1.0, 3.0]],
        Transfer::Identity,
    )
    .expect("valid oracle")
}

fn oracle_recovery() -> Check {
    let model = oracle_model();
    let ev = hawkes::simulate(&model, Horizon::events(50_000), 11).map_err(|e| e.to_string())?.events;
    let n = ev.len();
    let test_start = n - n / 5;
    let scored = (n - test_start - 1) as f64;
    let gen_nll = -conditional_log_likelihood(&model, &ev, test_start + 1).map_err(|e| e.to_string())? / scored;
    let cfg = CtLstmConfig { num_types: 3, hidden: 8, epochs: 10, batch: 256, window: 100, stride: Some(1), lr: 0.002, seed: 5, ..Default::default() };
    let tm = neural::train(&cfg, &marks_from_pairs(&ev, 1), Exec::Parallel).map_err(|e| e.to_string())?;
    let r = &tm.report;
    let gap = r.test_nll - gen_nll;
    let pass = gap < 0.1 && r.test_accuracy >= r.test_majority_frequency;
    Ok((
        pass,
        format!(
            "generator {gen_nll:.4} vs model {:.4} nats/event (gap {gap:.4}); accuracy {:.4} vs majority {:.4}",
            r.test_nll, r.test_accuracy, r.test_majority_frequency
        ),
    ))
}

// ---- 3 ----

/// Kolmogorov distribution 0.99 quantile; the statistic scaled by
/// `sqrt(n) + 0.12 + 0.11 / sqrt(n)` must stay below it for p > 0.01.
const KS_CRIT_01: f64 = 1.6276;

fn ks_scaled(mut xs: Vec<f64>, rate: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = 1.0 - (-rate * x).exp();
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    d * (n.sqrt() + 0.12 + 0.11 / n.sqrt())
}

fn chi2_p(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let stat: f64 = counts.iter().zip(probs).map(|(&o, &p)| (o as f64 - p * n as f64).powi(2) / (p * n as f64)).sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

fn sampler_check(events: &[(f64, usize)], rates: &[f64]) -> (bool, String) {
    let total: f64 = rates.iter().sum();
    let gaps: Vec<f64> = std::iter::once(events[0].0).chain(events.windows(2).map(|w| w[1].0 - w[0].0)).collect();
    let ks = ks_scaled(gaps, total);
    let mut counts = vec![0u64; rates.len()];
    for &(_, k) in events {
        counts[k] += 1;
    }
    let probs: Vec<f64> = rates.iter().map(|r| r / total).collect();
    let p = chi2_p(&counts, &probs);
    (ks < KS_CRIT_01 && p > 0.01, format!("KS {ks:.3} (<{KS_CRIT_01}), chi2 p {p:.3}"))
}

fn sampler_correctness() -> Check {
    let rates = vec![0.7, 1.9, 0.4, 3.0];
    let mut notes = Vec::new();
    let mut pass = true;
    for (label, rule) in [("exact bound", BoundRule::Current), ("grid bound", BoundRule::grid(16, 2.0))] {
        let cfg = ThinningConfig::new(rule, Horizon::events(10_000));
        let out = thin(&mut ConstantIntensity(rates.clone()), &cfg, &mut seeded(21)).map_err(|e| e.to_string())?;
        let (ok, s) = sampler_check(&out.events, &rates);
        pass &= ok && out.events.len() == 10_000;
        notes.push(format!("{label}: {s}"));
    }

    // The neural simulator with its intensities frozen at fixed rates.
    let arch = Architecture { num_types: 12, hidden: 8, num_states: 3 };
    let frozen: Vec<f64> = (0..12).map(|k| 0.2 + 0.15 * k as f64).collect();
    let mut model = CtLstm::new(arch, &mut seeded(3), Some(&frozen)).map_err(|e| e.to_string())?;
    model.params_mut().get_mut(ParamId(3)).data_mut().iter_mut().for_each(|w| *w = 0.0);
    let sim = SimConfig { runs: 1, horizon: HorizonMode::Events(10_000), seed: 8, ..Default::default() };
    let run = simulate_stream(&model, &sim, 0).map_err(|e| e.to_string())?;
    let realised = model.intensities(&model.initial_state(0.0), 0.0);
    let (ok, s) = sampler_check(&run.events, &realised);
    pass &= ok && run.events.len() == 10_000;
    notes.push(format!("frozen neural model: {s}"));
    Ok((pass, notes.join("; ")))
}

// ---- 4 ----

fn random_marks(rng: &mut impl Rng, m: usize, n: usize) -> Vec<Mark> {
    let mut t = rng.random_range(0.0..1.0);
    (0..n)
        .map(|_| {
            t += rng.random_range(0.01..1.5);
            Mark::new(t, rng.random_range(0..m), rng.random_range(0..3))
        })
        .collect()
}

fn ctlstm_gradcheck(point: u64) -> Result<f64, String> {
    let mut rng = seeded(derive_seed(point, 0xC7));
    let m = rng.random_range(2..5);
    let arch = Architecture { num_types: m, hidden: rng.random_range(2..6), num_states: 3 };
    let model = CtLstm::new(arch, &mut rng, None).map_err(|e| e.to_string())?;
    let marks = random_marks(&mut rng, m, 6);
    let mc_seed = rng.random::<u64>();
    let (_, _, grads) = model.nll_gradient(&marks, 2, &mut seeded(mc_seed)).map_err(|e| e.to_string())?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut probe = model.clone();
    for (b, g) in grads.iter().enumerate() {
        for e in 0..g.len() {
            let orig = probe.params().tensors()[b].data()[e];
            probe.params_mut().tensors_mut()[b].data_mut()[e] = orig + h;
            let up = probe.nll(&marks, 2, &mut seeded(mc_seed)).map_err(|e| e.to_string())?;
            probe.params_mut().tensors_mut()[b].data_mut()[e] = orig - h;
            let down = probe.nll(&marks, 2, &mut seeded(mc_seed)).map_err(|e| e.to_string())?;
            probe.params_mut().tensors_mut()[b].data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = g.data()[e];
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5));
        }
    }
    Ok(worst)
}

fn random_transitions(rng: &mut impl Rng, n: usize) -> Vec<Transition> {
    let mask = |rng: &mut dyn rand::RngCore| -> [bool; 3] {
        match rng.random_range(0..3) {
            0 => [false, true, true],
            1 => [true, true, false],
            _ => [true; 3],
        }
    };
    (0..n)
        .map(|_| {
            let m = mask(rng);
            let legal: Vec<usize> = (0..3).filter(|&a| m[a]).collect();
            let mut obs = [0.0; OBS_DIM];
            let mut next_obs = [0.0; OBS_DIM];
            obs.iter_mut().chain(next_obs.iter_mut()).for_each(|x| *x = rng.random_range(-1.5..1.5));
            Transition {
                obs,
                mask: m,
                action: *legal.choose(rng).unwrap(),
                reward: rng.random_range(-0.05..0.05),
                next_obs,
                next_mask: mask(rng),
                done: rng.random_bool(0.05),
            }
        })
        .collect()
}

fn sac_gradcheck(point: u64) -> Result<(f64, f64), String> {
    let mut rng = seeded(derive_seed(point, 0x5AC));
    let cfg = SacConfig { seed: rng.random(), ..Default::default() };
    let norm = Normalizer { v_mean: 100.0, v_std: 1.0, q_max: 5 };
    let agent = SacAgent::new(cfg, norm).map_err(|e| e.to_string())?;
    let batch = Batch::from_transitions(&random_transitions(&mut rng, 16));
    let pick = |ps: &lobhawk::nn::ParamSet, rng: &mut lobhawk::rng::SimRng| -> Vec<(usize, usize)> {
        // Every block, plus a random sample of interior coordinates.
        let mut c: Vec<(usize, usize)> = (0..ps.len()).map(|b| (b, rng.random_range(0..ps.tensors()[b].len()))).collect();
        while c.len() < 64 {
            let b = rng.random_range(0..ps.len());
            c.push((b, rng.random_range(0..ps.tensors()[b].len())));
        }
        c
    };
    let targets = agent.critic_targets(&batch).map_err(|e| e.to_string())?;
    let coords = pick(&agent.critic1, &mut rng);
    let ec = max_relative_error(&agent.critic1, &coords, 1e-5, 1e-5, |g, v| critic_loss(g, v, &batch, &targets))
        .map_err(|e| e.to_string())?;
    let min_q = agent.min_q(&batch).map_err(|e| e.to_string())?;
    let alpha = rng.random_range(0.01..2.0);
    let coords = pick(&agent.policy, &mut rng);
    let ep = max_relative_error(&agent.policy, &coords, 1e-5, 1e-5, |g, v| policy_loss(g, v, &batch, &min_q, alpha))
        .map_err(|e| e.to_string())?;
    Ok((ec, ep))
}

fn gradient_suite() -> Check {
    let (mut lstm, mut critic, mut policy) = (0.0f64, 0.0f64, 0.0f64);
    for point in 0..100 {
        lstm = lstm.max(ctlstm_gradcheck(point)?);
        let (c, p) = sac_gradcheck(point)?;
        critic = critic.max(c);
        policy = policy.max(p);
    }
    Ok((
        lstm < 1e-4 && critic < 1e-3 && policy < 1e-3,
        format!("worst relative error over 100 points: CT-LSTM {lstm:.2e}, critic {critic:.2e}, policy {policy:.2e}"),
    ))
}

// ---- shared AAPL fit for 5, 6, 8 ----

struct Fitted {
    events: Vec<LobEvent>,
    jumps: JumpDistribution,
    tick: f64,
    real: MarketStream,
    runs: Vec<SimRun>,
    paths: Vec<PricePath>,
}

const SIM_RUNS: usize = 12;

fn fit_aapl() -> Result<Fitted, String> {
    let out = load_asset("AAPL")?;
    let tick = out.report.tick_raw as f64 / 10_000.0;
    let jumps = fit_jumps(&out.events, &out.mids).map_err(|e| e.to_string())?;
    let real = observed_stream(&out.events, &out.mids, tick).map_err(|e| e.to_string())?;
    let marks: Vec<Mark> = out.events.iter().map(Mark::from).collect();
    let cfg = CtLstmConfig { epochs: 10, seed: 17, ..Default::default() };
    let tm = neural::train(&cfg, &marks, Exec::Parallel).map_err(|e| e.to_string())?;
    let mm = MmConfig::default();
    let sim = SimConfig { runs: SIM_RUNS, horizon: HorizonMode::Events(mm.train_len + mm.test_len), seed: 23, ..Default::default() };
    let runs = simulate_runs(&tm.model, &sim, Exec::Parallel).map_err(|e| e.to_string())?;
    let v0 = real.v0 as f64 * real.half_tick;
    let paths = runs
        .iter()
        .enumerate()
        .map(|(k, r)| build_path(&r.to_lob_events(), &jumps, v0, tick, derive_seed(29, k as u64)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    Ok(Fitted { events: out.events, jumps, tick, real, runs, paths })
}

// ---- 5 ----

fn midprice_accounting(f: &Fitted) -> Check {
    let half = f.tick / 2.0;
    let mut paths: Vec<(Vec<LobEvent>, PricePath)> = f.runs.iter().map(|r| r.to_lob_events()).zip(f.paths.iter().cloned()).collect();
    let real_path = build_path(&f.events, &f.jumps, 585.0, f.tick, 31).map_err(|e| e.to_string())?;
    paths.push((f.events.clone(), real_path));
    let mut bad = 0usize;
    for (events, p) in &paths {
        let (mut up, mut down) = (0i64, 0i64);
        for (e, s) in events.iter().zip(&p.steps) {
            match e.etype.direction() {
                Direction::Up => up += s.jump,
                Direction::Down => down -= s.jump,
                Direction::None => bad += usize::from(s.jump != 0),
            }
            // Exact in half-ticks; the currency view must agree too.
            bad += usize::from(s.v - p.v0 != up - down);
            bad += usize::from(((s.v - p.v0) as f64 * half - half * (up - down) as f64).abs() > 0.0);
        }
        bad += usize::from(p.steps.len() != events.len() || p.clamped != 0);

        let unit = unit_jump_path(events, 585.0, f.tick).map_err(|e| e.to_string())?;
        let via_table = build_path(events, &JumpDistribution::unit(), 585.0, f.tick, 1).map_err(|e| e.to_string())?;
        let mut n_up = 0i64;
        let mut n_down = 0i64;
        for (k, e) in events.iter().enumerate() {
            n_up += i64::from(e.etype.direction() == Direction::Up);
            n_down += i64::from(e.etype.direction() == Direction::Down);
            let want = unit.v0 + n_up - n_down;
            bad += usize::from(unit.steps[k].v != want || via_table.steps[k].v != want);
        }
    }
    Ok((bad == 0, format!("{} paths, {} events checked, {bad} violations", paths.len(), paths.iter().map(|p| p.0.len()).sum::<usize>())))
}

// ---- 6 ----

fn stylized_plausibility(f: &Fitted) -> Check {
    let real = stylized_stats(&PricePath { v0: f.real.v0, tick: f.tick, steps: f.real.steps.clone(), clamped: 0 }.prices())
        .map_err(|e| e.to_string())?
        .volatility;
    let vols: Vec<f64> = f.paths.iter().map(|p| stylized_stats(&p.prices()).map(|s| s.volatility)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let sim = vols.iter().sum::<f64>() / vols.len() as f64;
    let ratio = sim / real;

    let mut rng = seeded(41);
    let hs: Vec<f64> = (0..20)
        .map(|_| {
            let xs: Vec<f64> = (0..1 << 15).map(|_| StandardNormal.sample(&mut rng)).collect();
            hurst_rs(&xs).unwrap()
        })
        .collect();
    let h = hs.iter().sum::<f64>() / hs.len() as f64;
    Ok((
        (0.5..=2.0).contains(&ratio) && (h - 0.5).abs() <= 0.05,
        format!("volatility sim {sim:.3e} vs real {real:.3e} (ratio {ratio:.3}); Hurst on iid Gaussian {h:.4} (mean of 20 series)"),
    ))
}

// ---- 7 ----

fn random_policy(rng: &mut impl Rng, mask: [bool; 3]) -> Action {
    if rng.random_bool(0.1) {
        return Action::Idle;
    }
    let legal: Vec<usize> = (0..3).filter(|&a| mask[a]).collect();
    Action::from_index(*legal.choose(rng).unwrap()).unwrap()
}

fn mm_invariants(f: &Fitted) -> Check {
    let cfg = MmConfig::default();
    let stream = &f.real;
    let len = stream.len();
    let mut worst_q = 0;
    let mut bad_triggers = 0usize;
    let mut worst_wealth: f64 = 0.0;
    for k in 0..100u64 {
        let mut rng = seeded(derive_seed(k, 0xA7));
        let ep = run_episode(|_, m| random_policy(&mut rng, m), stream, &cfg, len, derive_seed(k, 0xB7)).map_err(|e| e.to_string())?;
        worst_q = worst_q.max(ep.max_abs_q);
        for fill in &ep.fills {
            let ok = match fill.kind {
                FillKind::Adverse => matches!(fill.trigger, EventType::MarketBuyUp | EventType::MarketSellDown),
                FillKind::NonAdverse => matches!(fill.trigger, EventType::MarketBuyFlat | EventType::MarketSellFlat),
            };
            bad_triggers += usize::from(!ok);
        }
        // Wealth identity rebuilt from the log: W_T = W_0 + sum(reward + penalty) = q V + cash.
        let last = ep.log.last().ok_or("empty episode")?;
        let w_t = f64::from(last.q) * last.price + last.cash;
        let rebuilt = ep.initial_wealth + ep.total_reward() + ep.penalty;
        worst_wealth = worst_wealth.max((w_t - rebuilt).abs()).max(ep.max_wealth_error);
    }

    // Always quote with a cap that never binds.
    let open = MmConfig { q_max: 1_000_000, ..cfg.clone() };
    let (mut adverse, mut non_adverse) = (0u64, 0u64);
    for k in 0..100u64 {
        let ep = run_episode(|_, _| Action::Both, stream, &open, len, derive_seed(k, 0xC7)).map_err(|e| e.to_string())?;
        adverse += ep.count(FillKind::Adverse) as u64;
        non_adverse += ep.count(FillKind::NonAdverse) as u64;
    }
    let n_agg = stream.steps.iter().filter(|s| matches!(s.etype, EventType::MarketBuyUp | EventType::MarketSellDown)).count() as f64;
    let n_non = stream.steps.iter().filter(|s| matches!(s.etype, EventType::MarketBuyFlat | EventType::MarketSellFlat)).count() as f64;
    let p = cfg.p;
    let expected = n_agg / (p * n_non);
    let observed = adverse as f64 / non_adverse as f64;
    // Delta method on Binomial(100 n_non, p) in the denominator.
    let se = expected * ((1.0 - p) / (100.0 * n_non * p)).sqrt();
    let z = (observed - expected) / se;
    let pass = worst_q <= cfg.q_max && bad_triggers == 0 && worst_wealth <= 1e-9 && z.abs() < 3.0;
    Ok((
        pass,
        format!(
            "max |Q| {worst_q} (cap {}), {bad_triggers} bad triggers, wealth error {worst_wealth:.1e}; always-quote ratio {observed:.4} vs analytic {expected:.4} (z {z:.2})",
            cfg.q_max
        ),
    ))
}

// ---- 8 ----

fn fill_ratio_band(f: &Fitted) -> Check {
    let cfg = ExperimentConfig {
        mm: MmConfig { seed: 43, ..Default::default() },
        sac: SacConfig { seed: 47, ..Default::default() },
    };
    let (train, test): (Vec<_>, Vec<_>) = f
        .paths
        .iter()
        .take(4)
        .map(|p| (segment(p, 0, cfg.mm.train_len).unwrap(), segment(p, cfg.mm.train_len, cfg.mm.test_len).unwrap()))
        .unzip();
    let (_, report, _) = train_and_evaluate(&cfg, &train, &test, Exec::Parallel).map_err(|e| e.to_string())?;
    let e = &report.eval;
    let ratio = e.fill_ratio.ok_or("no non-adverse fills")?;
    Ok((
        (1.5..=4.5).contains(&ratio) && e.adverse() > e.non_adverse(),
        format!("ratio {ratio:.4}; fills MB+ {} MS- {} MB0 {} MS0 {}", e.fills.mb_up, e.fills.ms_down, e.fills.mb_flat, e.fills.ms_flat),
    ))
}

// ---- 9 ----

fn flat_stream(n: usize, seed: u64) -> MarketStream {
    // Event mix of the AAPL day, one event per second, price frozen.
    let weights = lobhawk::synth::AssetProfile::named("AAPL").unwrap().rates();
    let mut rng = seeded(seed);
    let steps = (0..n)
        .map(|k| PathStep { time: (k + 1) as f64, etype: EventType::ALL[categorical(&mut rng, &weights)], jump: 0, v: 20_000 })
        .collect();
    MarketStream { v0: 20_000, half_tick: 0.005, start_time: 0.0, steps }
}

fn learning_smoke() -> Check {
    let cfg = ExperimentConfig {
        mm: MmConfig { psi: 0.01, seed: 53, ..Default::default() },
        sac: SacConfig { seed: 59, ..Default::default() },
    };
    let train = [flat_stream(cfg.mm.train_len, 61)];
    let test = [flat_stream(cfg.mm.test_len, 67)];
    let (_, report, _) = train_and_evaluate(&cfg, &train, &test, Exec::Parallel).map_err(|e| e.to_string())?;
    let (before, after) = (report.untrained.mean_abs_final_q, report.eval.mean_abs_final_q);
    Ok((after < before, format!("mean |Q_T| over {} greedy episodes: untrained {before:.3}, trained {after:.3}", report.eval.episodes)))
}

struct Criterion {
    id: usize,
    name: &'static str,
    limit_secs: Option<f64>,
}

fn report(c: &Criterion, result: Check, secs: f64) -> bool {
    let (ok, detail) = result.unwrap_or_else(|e| (false, format!("error: {e}")));
    let in_time = c.limit_secs.is_none_or(|l| secs < l);
    let pass = ok && in_time;
    let limit = c.limit_secs.map_or(String::new(), |l| format!(", limit {l:.0} s"));
    println!("[{}] {}. {}: {detail} ({secs:.1} s{limit})", if pass { "PASS" } else { "FAIL" }, c.id, c.name);
    pass
}

fn main() {
    let _ = env_logger::builder().is_test(true).try_init();
    // libtest flags such as --nocapture may be passed through; only the filter env var matters.
    let only: Option<Vec<usize>> =
        std::env::var("LOBHAWK_ACCEPTANCE").ok().map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |id: usize| only.as_ref().is_none_or(|o| o.contains(&id));
    let crit = |id, name, limit_secs| Criterion { id, name, limit_secs };

    let mut all = true;
    let mut run = |c: Criterion, f: &dyn Fn() -> Check| {
        if wanted(c.id) {
            let t = Instant::now();
            let r = f();
            all &= report(&c, r, t.elapsed().as_secs_f64());
        }
    };
    run(crit(1, "event classification fixture", Some(30.0)), &classification_fixture);
    run(crit(2, "oracle recovery", Some(600.0)), &oracle_recovery);
    run(crit(3, "sampler correctness", Some(60.0)), &sampler_correctness);
    run(crit(4, "gradient suite", Some(120.0)), &gradient_suite);

    let fitted = if [5, 6, 7, 8].iter().any(|&i| wanted(i)) {
        let t = Instant::now();
        let f = fit_aapl();
        println!("       AAPL fixture fit and simulation: {:.1} s", t.elapsed().as_secs_f64());
        Some(f)
    } else {
        None
    };
    let with_fit = |g: fn(&Fitted) -> Check| -> Check {
        match fitted.as_ref().expect("fitted when needed") {
            Ok(f) => g(f),
            Err(e) => Err(format!("AAPL fit failed: {e}")),
        }
    };
    run(crit(5, "midprice accounting", None), &|| with_fit(midprice_accounting));
    run(crit(6, "stylized-stat plausibility", None), &|| with_fit(stylized_plausibility));
    run(crit(7, "market-making environment invariants", Some(120.0)), &|| with_fit(mm_invariants));
    run(crit(8, "fill-ratio band", None), &|| with_fit(fill_ratio_band));
    run(crit(9, "learning smoke test", Some(300.0)), &learning_smoke);

    if !all {
        eprintln!("acceptance: at least one criterion failed");
        std::process::exit(1);
    }
}
