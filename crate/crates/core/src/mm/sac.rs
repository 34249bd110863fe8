use super::replay::{ReplayBuffer, Transition};
use super::{MarketStream, MmError, MmState, Result};
use crate::nn::{self, Eval, Graph, ParamSet, RmsProp, RmsPropConfig, Tape, Tensor};
use crate::rng::{categorical, seeded, SimRng};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Observation width: standardised midprice and inventory over the cap.
pub const OBS_DIM: usize = 2;
const ACTIONS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SacConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub tau: f64,
    pub replay_capacity: usize,
    pub batch: usize,
    /// Target entropy as a fraction of `ln n`, with `n` the legal actions in a state.
    pub target_entropy_ratio: f64,
    pub lr: f64,
    pub initial_alpha: f64,
    /// Rewards are multiplied by this before entering the critics.
    pub reward_scale: f64,
    pub train_episodes: usize,
    pub eval_episodes: usize,
    /// Environment steps with uniformly random legal actions before learning.
    pub learning_starts: usize,
    /// Environment steps between update rounds.
    pub train_freq: usize,
    pub gradient_steps: usize,
    pub seed: u64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            gamma: 0.99,
            tau: 0.005,
            replay_capacity: 100_000,
            batch: 256,
            target_entropy_ratio: 0.98,
            lr: 3e-4,
            initial_alpha: 1.0,
            reward_scale: 10.0,
            train_episodes: 4,
            eval_episodes: 100,
            learning_starts: 1000,
            train_freq: 4,
            gradient_steps: 1,
            seed: 0,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MmError::Config(m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must be in (0, 1], got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must be in (0, 1], got {}", self.tau));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad(format!("hidden layers must be non-empty and positive, got {:?}", self.hidden));
        }
        if self.batch == 0 || self.replay_capacity < self.batch {
            return bad(format!("batch {} must be positive and fit in the replay capacity {}", self.batch, self.replay_capacity));
        }
        if !(self.lr > 0.0) || !(self.initial_alpha > 0.0) || !(self.reward_scale > 0.0) {
            return bad("learning rate, initial temperature and reward scale must be positive".into());
        }
        if self.train_freq == 0 {
            return bad("train_freq must be at least 1".into());
        }
        Ok(())
    }

    /// Entropy target for a state with `legal` permitted actions.
    pub fn target_entropy(&self, legal: usize) -> f64 {
        self.target_entropy_ratio * (legal as f64).ln()
    }
}

/// Maps environment states to network inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub v_mean: f64,
    pub v_std: f64,
    pub q_max: i32,
}

impl Normalizer {
    /// Midprice moments of the training streams.
    pub fn fit(streams: &[MarketStream], q_max: i32) -> Self {
        let prices: Vec<f64> = streams.iter().flat_map(|s| s.steps.iter().map(|p| p.v as f64 * s.half_tick)).collect();
        let (v_mean, v_std) = match prices.len() {
            0 => (0.0, 1.0),
            1 => (prices[0], 1.0),
            _ => (crate::stats::mean(&prices), crate::stats::std_dev(&prices)),
        };
        Self { v_mean, v_std: if v_std > 0.0 { v_std } else { 1.0 }, q_max }
    }

    pub fn observe(&self, s: &MmState) -> [f64; OBS_DIM] {
        [(s.price - self.v_mean) / self.v_std, f64::from(s.q) / f64::from(self.q_max)]
    }
}

fn mlp_params(prefix: &str, sizes: &[usize], rng: &mut SimRng) -> ParamSet {
    let mut ps = ParamSet::new();
    for (k, w) in sizes.windows(2).enumerate() {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)).collect();
        ps.add(format!("{prefix}.{k}.w"), Tensor::from_vec(fan_in, fan_out, data).expect("sized"));
        ps.add(format!("{prefix}.{k}.b"), Tensor::zeros(1, fan_out));
    }
    ps
}

/// Tanh multilayer perceptron over row-major inputs.
pub(crate) fn mlp<G: Graph>(g: &mut G, vars: &[G::V], x: &G::V) -> nn::Result<G::V> {
    let layers = vars.len() / 2;
    let mut h = x.clone();
    for k in 0..layers {
        let z = g.matmul(&h, &vars[2 * k])?;
        h = g.add(&z, &vars[2 * k + 1])?;
        if k + 1 < layers {
            h = g.tanh(&h);
        }
    }
    Ok(h)
}

/// Transitions laid out as row blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs: Tensor,
    pub mask: Tensor,
    pub onehot: Tensor,
    pub reward: Vec<f64>,
    pub next_obs: Tensor,
    pub next_mask: Tensor,
    pub done: Vec<bool>,
}

fn mask_row(m: &[bool; 3]) -> [f64; 3] {
    m.map(|b| if b { 1.0 } else { 0.0 })
}

impl Batch {
    pub fn from_transitions(ts: &[Transition]) -> Self {
        let n = ts.len();
        let rows = |f: &dyn Fn(&Transition) -> Vec<f64>, w| Tensor::from_vec(n, w, ts.iter().flat_map(f).collect()).expect("sized");
        Self {
            obs: rows(&|t| t.obs.to_vec(), OBS_DIM),
            mask: rows(&|t| mask_row(&t.mask).to_vec(), ACTIONS),
            onehot: rows(&|t| (0..ACTIONS).map(|a| if a == t.action { 1.0 } else { 0.0 }).collect(), ACTIONS),
            reward: ts.iter().map(|t| t.reward).collect(),
            next_obs: rows(&|t| t.next_obs.to_vec(), OBS_DIM),
            next_mask: rows(&|t| mask_row(&t.next_mask).to_vec(), ACTIONS),
            done: ts.iter().map(|t| t.done).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.reward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reward.is_empty()
    }
}

/// `0.5 * mean (Q(s, a) - y)^2` for one critic.
pub fn critic_loss<G: Graph>(g: &mut G, critic: &[G::V], batch: &Batch, targets: &[f64]) -> nn::Result<G::V> {
    let x = g.constant(batch.obs.clone());
    let q = mlp(g, critic, &x)?;
    let onehot = g.constant(batch.onehot.clone());
    let sel = g.mul(&q, &onehot)?;
    let qa = g.sum_cols(&sel);
    let y = g.constant(Tensor::column(targets.to_vec()));
    let d = g.sub(&qa, &y)?;
    let sq = g.mul(&d, &d)?;
    let m = g.mean(&sq);
    Ok(g.scale(&m, 0.5))
}

/// `mean_s sum_a pi(a|s) (alpha log pi(a|s) - min Q(s, a))` over legal actions.
pub fn policy_loss<G: Graph>(g: &mut G, policy: &[G::V], batch: &Batch, min_q: &Tensor, alpha: f64) -> nn::Result<G::V> {
    let x = g.constant(batch.obs.clone());
    let logits = mlp(g, policy, &x)?;
    let logp = g.masked_log_softmax(&logits, &batch.mask)?;
    let e = g.exp(&logp);
    let mask = g.constant(batch.mask.clone());
    let p = g.mul(&e, &mask)?;
    let alp = g.scale(&logp, alpha);
    let q = g.constant(min_q.clone());
    let inner = g.sub(&alp, &q)?;
    let prod = g.mul(&p, &inner)?;
    let s = g.sum(&prod);
    Ok(g.scale(&s, 1.0 / batch.len() as f64))
}

/// Masked action probabilities per row.
fn masked_probs(logits: &Tensor, mask: &Tensor) -> nn::Result<(Tensor, Tensor)> {
    let mut g = Eval;
    let l = g.constant(logits.clone());
    let logp = g.masked_log_softmax(&l, mask)?;
    let logp = (*logp).clone();
    let p = logp.zip_map(mask, |lp, m| if m > 0.0 { lp.exp() } else { 0.0 });
    Ok((p, logp))
}

fn forward(params: &ParamSet, x: &Tensor) -> nn::Result<Tensor> {
    let mut g = Eval;
    let vars = params.bind(&mut g);
    let xv = g.constant(x.clone());
    Ok((*mlp(&mut g, &vars, &xv)?).clone())
}

fn check_finite(what: &'static str, update: usize, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(MmError::NonFinite { what, update, detail: format!("value {v}") })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub critic_loss: f64,
    pub policy_loss: f64,
    pub entropy: f64,
    pub alpha: f64,
    pub q_mean: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AgentFile {
    config: SacConfig,
    normalizer: Normalizer,
    log_alpha: f64,
    updates: usize,
}

#[derive(Debug, Clone)]
pub struct SacAgent {
    pub config: SacConfig,
    pub normalizer: Normalizer,
    pub policy: ParamSet,
    pub critic1: ParamSet,
    pub critic2: ParamSet,
    target1: ParamSet,
    target2: ParamSet,
    log_alpha: ParamSet,
    opt_policy: RmsProp,
    opt_c1: RmsProp,
    opt_c2: RmsProp,
    opt_alpha: RmsProp,
    updates: usize,
}

impl SacAgent {
    pub fn new(config: SacConfig, normalizer: Normalizer) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(config.seed);
        let sizes: Vec<usize> = std::iter::once(OBS_DIM).chain(config.hidden.iter().copied()).chain([ACTIONS]).collect();
        let policy = mlp_params("pi", &sizes, &mut rng);
        let critic1 = mlp_params("q1", &sizes, &mut rng);
        let critic2 = mlp_params("q2", &sizes, &mut rng);
        let mut log_alpha = ParamSet::new();
        log_alpha.add("log_alpha", Tensor::scalar(config.initial_alpha.ln()));
        Ok(Self::assemble(config, normalizer, policy, critic1, critic2, log_alpha, 0))
    }

    fn assemble(
        config: SacConfig,
        normalizer: Normalizer,
        policy: ParamSet,
        critic1: ParamSet,
        critic2: ParamSet,
        log_alpha: ParamSet,
        updates: usize,
    ) -> Self {
        let rc = RmsPropConfig { lr: config.lr, ..Default::default() };
        Self {
            opt_policy: RmsProp::new(rc, &policy),
            opt_c1: RmsProp::new(rc, &critic1),
            opt_c2: RmsProp::new(rc, &critic2),
            opt_alpha: RmsProp::new(rc, &log_alpha),
            target1: critic1.clone(),
            target2: critic2.clone(),
            config,
            normalizer,
            policy,
            critic1,
            critic2,
            log_alpha,
            updates,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.tensors()[0].item().exp()
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn observe(&self, s: &MmState) -> [f64; OBS_DIM] {
        self.normalizer.observe(s)
    }

    /// Action probabilities; illegal actions get exactly zero.
    pub fn probabilities(&self, obs: &[f64; OBS_DIM], mask: [bool; 3]) -> Result<[f64; 3]> {
        if !mask.iter().any(|&m| m) {
            return Err(MmError::NoLegalAction);
        }
        let logits = forward(&self.policy, &Tensor::row(obs.to_vec()))?;
        let m = Tensor::row(mask_row(&mask).to_vec());
        let (p, _) = masked_probs(&logits, &m)?;
        Ok([p.data()[0], p.data()[1], p.data()[2]])
    }

    /// Sampled action index.
    pub fn sample(&self, obs: &[f64; OBS_DIM], mask: [bool; 3], rng: &mut SimRng) -> Result<usize> {
        let p = self.probabilities(obs, mask)?;
        Ok(categorical(rng, &p))
    }

    /// Most probable legal action index; ties go to the lowest index.
    pub fn greedy(&self, obs: &[f64; OBS_DIM], mask: [bool; 3]) -> Result<usize> {
        let p = self.probabilities(obs, mask)?;
        Ok(greedy_index(&p, mask))
    }

    /// Soft Bellman targets from the target critics and the current policy.
    pub fn critic_targets(&self, batch: &Batch) -> Result<Vec<f64>> {
        let logits = forward(&self.policy, &batch.next_obs)?;
        let (p, logp) = masked_probs(&logits, &batch.next_mask)?;
        let q1 = forward(&self.target1, &batch.next_obs)?;
        let q2 = forward(&self.target2, &batch.next_obs)?;
        let alpha = self.alpha();
        let c = &self.config;
        Ok((0..batch.len())
            .map(|i| {
                let v: f64 = (0..ACTIONS)
                    .filter(|&a| p.get(i, a) > 0.0)
                    .map(|a| p.get(i, a) * (q1.get(i, a).min(q2.get(i, a)) - alpha * logp.get(i, a)))
                    .sum();
                let cont = if batch.done[i] { 0.0 } else { 1.0 };
                c.reward_scale * batch.reward[i] + c.gamma * cont * v
            })
            .collect())
    }

    /// Elementwise minimum of the two online critics at the batch states.
    pub fn min_q(&self, batch: &Batch) -> Result<Tensor> {
        let q1 = forward(&self.critic1, &batch.obs)?;
        let q2 = forward(&self.critic2, &batch.obs)?;
        Ok(q1.zip_map(&q2, f64::min))
    }

    /// One round of critic, policy and temperature updates on a replay sample.
    pub fn update(&mut self, replay: &ReplayBuffer, rng: &mut SimRng) -> Result<Diagnostics> {
        let batch = Batch::from_transitions(&replay.sample(self.config.batch, rng)?);
        self.update_on(&batch)
    }

    pub fn update_on(&mut self, batch: &Batch) -> Result<Diagnostics> {
        let u = self.updates;
        let targets = self.critic_targets(batch)?;
        if let Some(bad) = targets.iter().find(|t| !t.is_finite()) {
            return Err(MmError::NonFinite { what: "critic target", update: u, detail: format!("{bad}") });
        }

        let mut tape = Tape::new();
        let v1 = self.critic1.bind(&mut tape);
        let v2 = self.critic2.bind(&mut tape);
        let l1 = critic_loss(&mut tape, &v1, batch, &targets)?;
        let l2 = critic_loss(&mut tape, &v2, batch, &targets)?;
        let critic_value = tape.value(&l1).item() + tape.value(&l2).item();
        check_finite("critic loss", u, critic_value)?;
        let total = tape.add(&l1, &l2)?;
        let grads = tape.backward(total)?;
        let g1: Vec<Tensor> = v1.iter().map(|v| grads.wrt(*v)).collect();
        let g2: Vec<Tensor> = v2.iter().map(|v| grads.wrt(*v)).collect();
        self.opt_c1.step(&mut self.critic1, &g1)?;
        self.opt_c2.step(&mut self.critic2, &g2)?;

        let min_q = self.min_q(batch)?;
        let alpha = self.alpha();
        let mut tape = Tape::new();
        let vp = self.policy.bind(&mut tape);
        let lp = policy_loss(&mut tape, &vp, batch, &min_q, alpha)?;
        let policy_value = tape.value(&lp).item();
        check_finite("policy loss", u, policy_value)?;
        let grads = tape.backward(lp)?;
        let gp: Vec<Tensor> = vp.iter().map(|v| grads.wrt(*v)).collect();
        self.opt_policy.step(&mut self.policy, &gp)?;

        let entropy = self.mean_entropy(batch)?;
        // d/d(log alpha) of log_alpha * (H - H_target), with the target set per
        // state so that capped states cannot pin the temperature upwards.
        let ga = Tensor::scalar(self.entropy_gap(batch)?);
        self.opt_alpha.step(&mut self.log_alpha, &[ga])?;

        self.target1.polyak_from(&self.critic1, self.config.tau);
        self.target2.polyak_from(&self.critic2, self.config.tau);
        self.updates += 1;
        let q_mean = crate::stats::mean(min_q.data());
        Ok(Diagnostics { critic_loss: critic_value, policy_loss: policy_value, entropy, alpha: self.alpha(), q_mean })
    }

    /// Mean policy entropy over the batch states.
    pub fn mean_entropy(&self, batch: &Batch) -> Result<f64> {
        let logits = forward(&self.policy, &batch.obs)?;
        let (p, logp) = masked_probs(&logits, &batch.mask)?;
        let h: f64 = p.data().iter().zip(logp.data()).filter(|(p, _)| **p > 0.0).map(|(p, lp)| -p * lp).sum();
        Ok(h / batch.len() as f64)
    }

    /// Mean over the batch states of policy entropy minus that state's target.
    pub fn entropy_gap(&self, batch: &Batch) -> Result<f64> {
        let logits = forward(&self.policy, &batch.obs)?;
        let (p, logp) = masked_probs(&logits, &batch.mask)?;
        let gap: f64 = (0..batch.len())
            .map(|i| {
                let legal = (0..ACTIONS).filter(|&a| batch.mask.get(i, a) > 0.0).count();
                let h: f64 = (0..ACTIONS).filter(|&a| p.get(i, a) > 0.0).map(|a| -p.get(i, a) * logp.get(i, a)).sum();
                h - self.config.target_entropy(legal)
            })
            .sum();
        Ok(gap / batch.len() as f64)
    }

    /// Policy, critics and settings into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        nn::write_checkpoint(&dir.join("policy.ckpt"), &self.policy)?;
        nn::write_checkpoint(&dir.join("critic1.ckpt"), &self.critic1)?;
        nn::write_checkpoint(&dir.join("critic2.ckpt"), &self.critic2)?;
        let meta = AgentFile {
            config: self.config.clone(),
            normalizer: self.normalizer,
            log_alpha: self.log_alpha.tensors()[0].item(),
            updates: self.updates,
        };
        std::fs::write(dir.join("agent.json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    /// Reload a saved agent. Optimiser state starts fresh; target critics
    /// restart from the online critics.
    pub fn load(dir: &Path) -> Result<Self> {
        let meta: AgentFile = serde_json::from_str(&std::fs::read_to_string(dir.join("agent.json"))?)?;
        meta.config.validate()?;
        let policy = nn::read_checkpoint(&dir.join("policy.ckpt"))?;
        let critic1 = nn::read_checkpoint(&dir.join("critic1.ckpt"))?;
        let critic2 = nn::read_checkpoint(&dir.join("critic2.ckpt"))?;
        let fresh = Self::new(meta.config.clone(), meta.normalizer)?;
        for (got, want) in [(&policy, &fresh.policy), (&critic1, &fresh.critic1), (&critic2, &fresh.critic2)] {
            let same = got.len() == want.len()
                && got.iter().zip(want.iter()).all(|((n1, t1), (n2, t2))| n1 == n2 && t1.shape() == t2.shape());
            if !same {
                return Err(MmError::Config(format!("checkpoint layout does not match hidden sizes {:?}", meta.config.hidden)));
            }
        }
        let mut log_alpha = ParamSet::new();
        log_alpha.add("log_alpha", Tensor::scalar(meta.log_alpha));
        Ok(Self::assemble(meta.config, meta.normalizer, policy, critic1, critic2, log_alpha, meta.updates))
    }
}

fn greedy_index(p: &[f64; 3], mask: [bool; 3]) -> usize {
    let mut best = None;
    for a in 0..ACTIONS {
        if mask[a] && best.is_none_or(|b: usize| p[a] > p[b]) {
            best = Some(a);
        }
    }
    best.unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{all_coords, max_relative_error};

    fn agent(seed: u64) -> SacAgent {
        agent_with(SacConfig { seed, ..Default::default() })
    }

    fn agent_with(base: SacConfig) -> SacAgent {
        let cfg = SacConfig { hidden: vec![8, 8], batch: 16, replay_capacity: 64, ..base };
        SacAgent::new(cfg, Normalizer { v_mean: 0.0, v_std: 1.0, q_max: 5 }).unwrap()
    }

    fn transitions(n: usize, seed: u64, reward: impl Fn(usize) -> f64) -> Vec<Transition> {
        let mut rng = seeded(seed);
        (0..n)
            .map(|k| {
                let q = rng.random_range(-5..=5);
                let mask = [q > -5, true, q < 5];
                let next_q = rng.random_range(-5..=5);
                Transition {
                    obs: [rng.random_range(-1.0..1.0), f64::from(q) / 5.0],
                    mask,
                    action: loop {
                        let a = rng.random_range(0..3);
                        if mask[a] {
                            break a;
                        }
                    },
                    reward: reward(k),
                    next_obs: [rng.random_range(-1.0..1.0), f64::from(next_q) / 5.0],
                    next_mask: [next_q > -5, true, next_q < 5],
                    done: k % 7 == 6,
                }
            })
            .collect()
    }

    #[test]
    fn masked_actions_get_zero_probability() {
        let a = agent(1);
        let p = a.probabilities(&[0.3, 1.0], [true, true, false]).unwrap();
        assert_eq!(p[2], 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(matches!(a.probabilities(&[0.0, 0.0], [false; 3]), Err(MmError::NoLegalAction)));
    }

    #[test]
    fn uniform_logits_give_thirds() {
        let logits = Tensor::row(vec![0.7, 0.7, 0.7]);
        let (p, _) = masked_probs(&logits, &Tensor::row(vec![1.0; 3])).unwrap();
        for v in p.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn greedy_picks_the_largest_legal_probability() {
        let logits = Tensor::row(vec![0.0, 5.0, 0.0]);
        let (p, _) = masked_probs(&logits, &Tensor::row(vec![1.0; 3])).unwrap();
        let p = [p.data()[0], p.data()[1], p.data()[2]];
        assert_eq!(greedy_index(&p, [true; 3]), 1);
        assert_eq!(greedy_index(&[0.5, 0.0, 0.5], [true, false, true]), 0);
        assert_eq!(greedy_index(&[0.2, 0.3, 0.5], [true, true, false]), 1);
    }

    #[test]
    fn both_losses_match_finite_differences() {
        let a = agent(2);
        let batch = Batch::from_transitions(&transitions(16, 3, |k| (k as f64).sin()));
        let targets = a.critic_targets(&batch).unwrap();
        let err = max_relative_error(&a.critic1, &all_coords(&a.critic1), 1e-5, 1e-6, |g, v| critic_loss(g, v, &batch, &targets))
            .unwrap();
        assert!(err < 1e-4, "critic {err}");
        let min_q = a.min_q(&batch).unwrap();
        let err = max_relative_error(&a.policy, &all_coords(&a.policy), 1e-5, 1e-6, |g, v| policy_loss(g, v, &batch, &min_q, 0.3))
            .unwrap();
        assert!(err < 1e-4, "policy {err}");
    }

    #[test]
    fn zero_reward_without_discount_drives_critic_loss_to_zero() {
        let mut a = agent_with(SacConfig { gamma: 1e-12, lr: 1e-3, seed: 4, ..Default::default() });
        let batch = Batch::from_transitions(&transitions(16, 5, |_| 0.0));
        let first = a.update_on(&batch).unwrap().critic_loss;
        let mut last = first;
        for _ in 0..200 {
            last = a.update_on(&batch).unwrap().critic_loss;
        }
        assert!(last < 1e-2 * first, "{first} -> {last}");
    }

    #[test]
    fn temperature_moves_against_the_entropy_gap() {
        let mut a = agent(6);
        let batch = Batch::from_transitions(&transitions(16, 7, |k| k as f64 * 0.01));
        for _ in 0..30 {
            let gap = a.entropy_gap(&batch).unwrap();
            let before = a.alpha();
            let d = a.update_on(&batch).unwrap();
            if gap > 0.0 {
                assert!(d.alpha < before);
            } else {
                assert!(d.alpha > before);
            }
        }
    }

    #[test]
    fn capped_states_use_the_two_action_target() {
        let mut a = agent(12);
        // Zero policy weights give a uniform policy over the two legal actions.
        for t in a.policy.tensors_mut() {
            t.data_mut().fill(0.0);
        }
        let capped: Vec<Transition> = transitions(8, 13, |_| 0.0)
            .into_iter()
            .map(|t| Transition { obs: [t.obs[0], 1.0], mask: [true, true, false], action: t.action % 2, ..t })
            .collect();
        let batch = Batch::from_transitions(&capped);
        let expected = 2f64.ln() * (1.0 - 0.98);
        assert!((a.entropy_gap(&batch).unwrap() - expected).abs() < 1e-12);
        let before = a.alpha();
        assert!(a.update_on(&batch).unwrap().alpha < before);
    }

    #[test]
    fn identical_seeds_give_identical_trajectories() {
        let run = || {
            let mut a = agent(8);
            let mut buf = ReplayBuffer::new(64);
            for t in transitions(64, 9, |k| (k % 3) as f64) {
                buf.push(t);
            }
            let mut rng = seeded(10);
            for _ in 0..5 {
                a.update(&buf, &mut rng).unwrap();
            }
            a.policy.tensors().iter().flat_map(|t| t.data().iter().map(|x| x.to_bits())).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn save_and_load_round_trip() {
        let a = agent(11);
        let dir = tempfile::tempdir().unwrap();
        a.save(dir.path()).unwrap();
        let b = SacAgent::load(dir.path()).unwrap();
        assert_eq!(a.policy, b.policy);
        assert_eq!(a.alpha(), b.alpha());
        let p = a.probabilities(&[0.1, 0.2], [true; 3]).unwrap();
        assert_eq!(p, b.probabilities(&[0.1, 0.2], [true; 3]).unwrap());
    }
}
