use super::replay::{ReplayBuffer, Transition};
use super::sac::{Normalizer, SacAgent, SacConfig};
use super::{run_episode, Action, FillKind, MarketStream, MmConfig, MmEnv, MmEpisode, MmError, Result};
use crate::events::EventType;
use crate::exec::Exec;
use crate::rng::{derive_seed, seeded};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub mm: MmConfig,
    pub sac: SacConfig,
}

/// Fills per triggering market-order type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FillCounts {
    pub mb_up: u64,
    pub ms_down: u64,
    pub mb_flat: u64,
    pub ms_flat: u64,
}

impl FillCounts {
    pub fn add(&mut self, t: EventType) {
        match t {
            EventType::MarketBuyUp => self.mb_up += 1,
            EventType::MarketSellDown => self.ms_down += 1,
            EventType::MarketBuyFlat => self.mb_flat += 1,
            EventType::MarketSellFlat => self.ms_flat += 1,
            _ => {}
        }
    }

    pub fn adverse(&self) -> u64 {
        self.mb_up + self.ms_down
    }

    pub fn non_adverse(&self) -> u64 {
        self.mb_flat + self.ms_flat
    }

    /// `(label, count)` in canonical type order.
    pub fn labelled(&self) -> [(&'static str, u64); 4] {
        [("MB+", self.mb_up), ("MS-", self.ms_down), ("MB0", self.mb_flat), ("MS0", self.ms_flat)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub terminal_rewards: Vec<f64>,
    pub mean_reward: f64,
    pub final_q: Vec<i32>,
    pub mean_abs_final_q: f64,
    pub fills: FillCounts,
    /// Adverse over non-adverse fills, absent without non-adverse fills.
    pub fill_ratio: Option<f64>,
    pub max_abs_q: i32,
    pub max_wealth_error: f64,
}

impl EvalSummary {
    pub fn from_episodes(eps: &[MmEpisode]) -> Self {
        let mut fills = FillCounts::default();
        for f in eps.iter().flat_map(|e| &e.fills) {
            fills.add(f.trigger);
        }
        let terminal_rewards: Vec<f64> = eps.iter().map(MmEpisode::total_reward).collect();
        let final_q: Vec<i32> = eps.iter().map(|e| e.final_q).collect();
        let n = eps.len().max(1) as f64;
        Self {
            episodes: eps.len(),
            mean_reward: terminal_rewards.iter().sum::<f64>() / n,
            mean_abs_final_q: final_q.iter().map(|q| f64::from(q.abs())).sum::<f64>() / n,
            terminal_rewards,
            final_q,
            fill_ratio: (fills.non_adverse() > 0).then(|| fills.adverse() as f64 / fills.non_adverse() as f64),
            fills,
            max_abs_q: eps.iter().map(|e| e.max_abs_q).max().unwrap_or(0),
            max_wealth_error: eps.iter().map(|e| e.max_wealth_error).fold(0.0, f64::max),
        }
    }

    pub fn adverse(&self) -> u64 {
        self.fills.adverse()
    }

    pub fn non_adverse(&self) -> u64 {
        self.fills.non_adverse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainEpisode {
    pub episode: usize,
    pub reward: f64,
    pub adverse: usize,
    pub non_adverse: usize,
    pub final_q: i32,
    pub updates: usize,
    pub critic_loss: f64,
    pub entropy: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub training: Vec<TrainEpisode>,
    pub untrained: EvalSummary,
    pub eval: EvalSummary,
}

impl ExperimentReport {
    pub fn training_csv(&self) -> String {
        let mut s = String::from("episode,reward,adverse,non_adverse,final_q,updates,critic_loss,entropy,alpha\n");
        for t in &self.training {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                t.episode, t.reward, t.adverse, t.non_adverse, t.final_q, t.updates, t.critic_loss, t.entropy, t.alpha
            ));
        }
        s
    }
}

fn check_streams(streams: &[MarketStream], len: usize) -> Result<()> {
    if streams.is_empty() {
        return Err(MmError::Config("no streams".into()));
    }
    for s in streams {
        if s.len() < len {
            return Err(MmError::StreamExhausted { available: s.len(), needed: len });
        }
    }
    Ok(())
}

/// Train a fresh agent on the first `train_len` events of each stream in turn.
pub fn train_agent(cfg: &ExperimentConfig, streams: &[MarketStream]) -> Result<(SacAgent, Vec<TrainEpisode>)> {
    cfg.mm.validate()?;
    let len = cfg.mm.train_len;
    check_streams(streams, len)?;
    let mut agent = SacAgent::new(cfg.sac.clone(), Normalizer::fit(streams, cfg.mm.q_max))?;
    let mut replay = ReplayBuffer::new(cfg.sac.replay_capacity);
    let mut rng = seeded(derive_seed(cfg.sac.seed, 1));
    let start = cfg.sac.learning_starts.max(cfg.sac.batch);
    let mut steps = 0usize;
    let mut curve = Vec::with_capacity(cfg.sac.train_episodes);
    for ep in 0..cfg.sac.train_episodes {
        let stream = &streams[ep % streams.len()];
        let mut env = MmEnv::new(&cfg.mm, stream, len, derive_seed(cfg.mm.seed, ep as u64))?;
        let (mut reward, mut adverse, mut non_adverse) = (0.0, 0, 0);
        let (mut closs, mut ent, mut nupd) = (0.0, 0.0, 0usize);
        while !env.done() {
            let obs = agent.observe(env.state());
            let mask = env.legal_mask();
            let a = if steps < start {
                loop {
                    let a = rng.random_range(0..3);
                    if mask[a] {
                        break a;
                    }
                }
            } else {
                agent.sample(&obs, mask, &mut rng)?
            };
            let out = env.step(Action::from_index(a).expect("agent action"))?;
            reward += out.reward;
            adverse += out.fills.iter().filter(|f| f.kind == FillKind::Adverse).count();
            non_adverse += out.fills.iter().filter(|f| f.kind == FillKind::NonAdverse).count();
            replay.push(Transition {
                obs,
                mask,
                action: a,
                reward: out.reward,
                next_obs: agent.observe(env.state()),
                next_mask: env.legal_mask(),
                done: out.done,
            });
            steps += 1;
            if replay.len() >= start && steps % cfg.sac.train_freq == 0 {
                for _ in 0..cfg.sac.gradient_steps {
                    let d = agent.update(&replay, &mut rng)?;
                    closs += d.critic_loss;
                    ent += d.entropy;
                    nupd += 1;
                }
            }
        }
        let k = nupd.max(1) as f64;
        curve.push(TrainEpisode {
            episode: ep,
            reward,
            adverse,
            non_adverse,
            final_q: env.state().q,
            updates: nupd,
            critic_loss: closs / k,
            entropy: ent / k,
            alpha: agent.alpha(),
        });
        log::info!("mm training episode {ep}: reward {reward:.4}, {nupd} updates, alpha {:.4}", agent.alpha());
    }
    Ok((agent, curve))
}

/// Greedy evaluation: episode `k` replays stream `k mod n` with fill seed
/// derived from `(seed, k)`.
pub fn evaluate(
    agent: &SacAgent,
    streams: &[MarketStream],
    mm: &MmConfig,
    len: usize,
    episodes: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<MmEpisode>> {
    check_streams(streams, len)?;
    exec.map_range(episodes, |k| {
        let mut err = None;
        let ep = run_episode(
            |s, mask| match agent.greedy(&agent.observe(s), mask) {
                Ok(a) => Action::from_index(a).expect("agent action"),
                Err(e) => {
                    err.get_or_insert(e);
                    Action::Idle
                }
            },
            &streams[k % streams.len()],
            mm,
            len,
            derive_seed(seed, k as u64),
        )?;
        match err {
            Some(e) => Err(e),
            None => Ok(ep),
        }
    })
    .into_iter()
    .collect()
}

/// Train on `train`, then evaluate both the untrained and the trained agent
/// greedily on `test` under identical seeds.
pub fn train_and_evaluate(
    cfg: &ExperimentConfig,
    train: &[MarketStream],
    test: &[MarketStream],
    exec: Exec,
) -> Result<(SacAgent, ExperimentReport, Vec<MmEpisode>)> {
    cfg.sac.validate()?;
    check_streams(test, cfg.mm.test_len)?;
    let untrained = SacAgent::new(cfg.sac.clone(), Normalizer::fit(train, cfg.mm.q_max))?;
    let eval_seed = derive_seed(cfg.mm.seed, 0xE7A1);
    let before = evaluate(&untrained, test, &cfg.mm, cfg.mm.test_len, cfg.sac.eval_episodes, eval_seed, exec)?;
    let (agent, training) = train_agent(cfg, train)?;
    let after = evaluate(&agent, test, &cfg.mm, cfg.mm.test_len, cfg.sac.eval_episodes, eval_seed, exec)?;
    let report = ExperimentReport {
        config: cfg.clone(),
        training,
        untrained: EvalSummary::from_episodes(&before),
        eval: EvalSummary::from_episodes(&after),
    };
    Ok((agent, report, after))
}
