//! Twin-critic soft actor-critic learner.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::net::{adam_step, AdamConfig, Checkpoint, DenseNet, Head, OptimState, Scalar};

use super::policy::{policy_backward, sample_policy, sample_policy_with_noise, PolicySample};
use super::replay::{Batch, ReplayBuffer};
use super::SacError;

/// Learner hyperparameters that do not depend on the training budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub tau: f64,
    pub hidden: Vec<usize>,
    pub init_temperature: f64,
    /// Defaults to minus the action dimension.
    pub target_entropy: Option<f64>,
    pub adam: AdamConfig,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.99,
            tau: 0.005,
            hidden: vec![128, 128, 64],
            init_temperature: 0.1,
            target_entropy: None,
            adam: AdamConfig::default(),
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), SacError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(SacError::Config("gamma must lie in (0, 1)".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(SacError::Config("tau must lie in (0, 1]".into()));
        }
        if !(self.init_temperature > 0.0) {
            return Err(SacError::Config("initial temperature must be positive".into()));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(SacError::Config("hidden layer sizes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub critic1: f64,
    pub critic2: f64,
    pub actor: f64,
    pub temperature_loss: f64,
    pub temperature: f64,
    /// `−mean log π` of the fresh actor sample.
    pub entropy: f64,
}

#[derive(Clone, Debug)]
pub struct SacAgent<S: Scalar> {
    pub actor: DenseNet<S>,
    pub critic1: DenseNet<S>,
    pub critic2: DenseNet<S>,
    pub target1: DenseNet<S>,
    pub target2: DenseNet<S>,
    pub log_temperature: f64,
    pub opt_actor: OptimState<S>,
    pub opt_critic1: OptimState<S>,
    pub opt_critic2: OptimState<S>,
    pub opt_temperature: OptimState<f64>,
    pub gamma: f64,
    pub tau: f64,
    pub target_entropy: f64,
    obs_dim: usize,
    act_dim: usize,
}

/// `θ̄ ← (1 − τ) θ̄ + τ θ`.
pub fn soft_update<S: Scalar>(target: &mut [S], online: &[S], tau: f64) -> Result<(), SacError> {
    if target.len() != online.len() {
        return Err(SacError::ShapeMismatch { expected: target.len(), got: online.len() });
    }
    let (keep, take) = (S::from_f64(1.0 - tau), S::from_f64(tau));
    for (t, o) in target.iter_mut().zip(online) {
        *t = keep * *t + take * *o;
    }
    Ok(())
}

fn stack<S: Scalar>(obs: ArrayView2<'_, S>, act: ArrayView2<'_, S>) -> Array2<S> {
    concatenate(Axis(1), &[obs, act]).expect("matching batch sizes")
}

fn mse<S: Scalar>(q: &Array2<S>, y: &Array1<S>) -> (f64, Array2<S>) {
    let n = y.len() as f64;
    let mut g = Array2::zeros(q.dim());
    let mut loss = 0.0;
    for b in 0..y.len() {
        let e = q[[b, 0]].as_f64() - y[b].as_f64();
        loss += e * e;
        g[[b, 0]] = S::from_f64(2.0 * e / n);
    }
    (loss / n, g)
}

impl<S: Scalar> SacAgent<S> {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, cfg: &AgentConfig, rng: &mut R) -> Result<Self, SacError> {
        cfg.validate()?;
        let mut actor_sizes = vec![obs_dim];
        actor_sizes.extend(&cfg.hidden);
        actor_sizes.push(2 * act_dim);
        let mut critic_sizes = vec![obs_dim + act_dim];
        critic_sizes.extend(&cfg.hidden);
        critic_sizes.push(1);
        let actor = DenseNet::new(&actor_sizes, Head::Gaussian { action_dim: act_dim }, rng)?;
        let critic1 = DenseNet::new(&critic_sizes, Head::Linear, rng)?;
        let critic2 = DenseNet::new(&critic_sizes, Head::Linear, rng)?;
        Ok(Self::from_parts(actor, critic1, critic2, cfg))
    }

    /// Agent with the given networks; targets start as copies of the critics.
    pub fn from_parts(actor: DenseNet<S>, critic1: DenseNet<S>, critic2: DenseNet<S>, cfg: &AgentConfig) -> Self {
        let obs_dim = actor.input_dim();
        let act_dim = actor.output_dim() / 2;
        let opt = |n: &DenseNet<S>| OptimState::new(n.params().len(), 0.0, cfg.adam);
        SacAgent {
            opt_actor: opt(&actor),
            opt_critic1: opt(&critic1),
            opt_critic2: opt(&critic2),
            opt_temperature: OptimState::new(1, 0.0, cfg.adam),
            target1: critic1.clone(),
            target2: critic2.clone(),
            actor,
            critic1,
            critic2,
            log_temperature: cfg.init_temperature.ln(),
            gamma: cfg.gamma,
            tau: cfg.tau,
            target_entropy: cfg.target_entropy.unwrap_or(-(act_dim as f64)),
            obs_dim,
            act_dim,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn temperature(&self) -> f64 {
        self.log_temperature.exp()
    }

    /// Soft Bellman targets with next actions drawn from `rng`.
    pub fn critic_targets<R: Rng + ?Sized>(&self, batch: &Batch<S>, rng: &mut R) -> Result<Array1<S>, SacError> {
        let next = sample_policy(&self.actor, batch.next_obs.view(), rng)?;
        self.critic_targets_from(batch, &next)
    }

    /// Soft Bellman targets for explicit next-action noise.
    pub fn critic_targets_with_noise(&self, batch: &Batch<S>, noise: Array2<S>) -> Result<Array1<S>, SacError> {
        let next = sample_policy_with_noise(&self.actor, batch.next_obs.view(), noise)?;
        self.critic_targets_from(batch, &next)
    }

    fn critic_targets_from(&self, batch: &Batch<S>, next: &PolicySample<S>) -> Result<Array1<S>, SacError> {
        let x = stack(batch.next_obs.view(), next.actions.view());
        let q1 = self.target1.predict(x.view())?;
        let q2 = self.target2.predict(x.view())?;
        let alpha = self.temperature();
        Ok(Array1::from_shape_fn(batch.len(), |b| {
            let r = batch.rew[b].as_f64();
            let done = batch.done[b].as_f64();
            let soft = q1[[b, 0]].as_f64().min(q2[[b, 0]].as_f64()) - alpha * next.log_prob[b].as_f64();
            S::from_f64(r + self.gamma * (1.0 - done) * soft)
        }))
    }

    /// One gradient step on both critics, the actor and the temperature,
    /// followed by the target update. All optimizers use `lr`.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &Batch<S>, lr: f64, rng: &mut R) -> Result<UpdateStats, SacError> {
        let y = self.critic_targets(batch, rng)?;
        let x = stack(batch.obs.view(), batch.act.view());
        let mut stats = UpdateStats::default();
        for which in 0..2 {
            let (net, opt) = if which == 0 {
                (&mut self.critic1, &mut self.opt_critic1)
            } else {
                (&mut self.critic2, &mut self.opt_critic2)
            };
            let (q, cache) = net.forward(x.view())?;
            let (loss, g) = mse(&q, &y);
            let (grads, _) = net.backward(&cache, g.view())?;
            opt.lr = lr;
            adam_step(net.params_mut(), &grads, opt)?;
            if which == 0 {
                stats.critic1 = loss;
            } else {
                stats.critic2 = loss;
            }
        }

        let dim = self.act_dim;
        let noise = Array2::from_shape_simple_fn((batch.len(), dim), || {
            S::from_f64(rng.sample::<f64, _>(rand_distr::StandardNormal))
        });
        let (actor_loss, grads, mean_logp) = self.actor_objective(batch.obs.view(), noise)?;
        self.opt_actor.lr = lr;
        adam_step(self.actor.params_mut(), &grads, &mut self.opt_actor)?;

        // J(log α) = −log α · mean(log π + target entropy)
        let g_alpha = -(mean_logp + self.target_entropy);
        self.opt_temperature.lr = lr;
        let mut la = [self.log_temperature];
        adam_step(&mut la, &[g_alpha], &mut self.opt_temperature)?;
        stats.temperature_loss = -self.log_temperature * (mean_logp + self.target_entropy);
        self.log_temperature = la[0];

        soft_update(self.target1.params_mut(), self.critic1.params(), self.tau)?;
        soft_update(self.target2.params_mut(), self.critic2.params(), self.tau)?;
        stats.actor = actor_loss;
        stats.temperature = self.temperature();
        stats.entropy = -mean_logp;
        Ok(stats)
    }

    /// Actor objective `mean(α log π − min(Q₁, Q₂))` for fixed sampling
    /// noise, its parameter gradient and the mean log-probability.
    pub fn actor_objective(&self, obs: ArrayView2<'_, S>, noise: Array2<S>) -> Result<(f64, Vec<S>, f64), SacError> {
        let pi = sample_policy_with_noise(&self.actor, obs, noise)?;
        let xa = stack(obs, pi.actions.view());
        let (q1, c1) = self.critic1.forward(xa.view())?;
        let (q2, c2) = self.critic2.forward(xa.view())?;
        let n = obs.nrows();
        let alpha = self.temperature();
        let mut sel1 = Array2::<S>::zeros((n, 1));
        let mut sel2 = Array2::<S>::zeros((n, 1));
        let mut loss = 0.0;
        let mut mean_logp = 0.0;
        for b in 0..n {
            let (a, c) = (q1[[b, 0]].as_f64(), q2[[b, 0]].as_f64());
            if a <= c {
                sel1[[b, 0]] = S::one();
            } else {
                sel2[[b, 0]] = S::one();
            }
            let lp = pi.log_prob[b].as_f64();
            loss += alpha * lp - a.min(c);
            mean_logp += lp;
        }
        loss /= n as f64;
        mean_logp /= n as f64;
        let (_, dx1) = self.critic1.backward(&c1, sel1.view())?;
        let (_, dx2) = self.critic2.backward(&c2, sel2.view())?;
        let inv_n = S::from_f64(1.0 / n as f64);
        let dq_da = &dx1.slice(s![.., self.obs_dim..]) + &dx2.slice(s![.., self.obs_dim..]);
        let dl_da = dq_da.mapv(|v| -v * inv_n);
        let dl_dlogp = Array1::from_elem(n, S::from_f64(alpha / n as f64));
        let grads = policy_backward(&self.actor, &pi, dl_da.view(), dl_dlogp.view())?;
        Ok((loss, grads, mean_logp))
    }

    pub fn update_from_buffer<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer,
        batch_size: usize,
        lr: f64,
        rng: &mut R,
    ) -> Result<UpdateStats, SacError> {
        let batch = buffer.sample(batch_size, rng)?;
        self.update(&batch, lr, rng)
    }

    /// Stochastic action in `[-1, 1]` for one observation.
    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<Vec<f64>, SacError> {
        let row: Vec<S> = obs.iter().map(|&v| S::from_f64(v)).collect();
        let view = ArrayView2::from_shape((1, row.len()), &row).expect("row");
        let p = sample_policy(&self.actor, view, rng)?;
        Ok(p.actions.iter().map(|v| v.as_f64()).collect())
    }

    /// Stochastic actions for a batch of observations, one row each.
    pub fn act_batch<R: Rng + ?Sized>(&self, obs: &[Vec<f64>], rng: &mut R) -> Result<Vec<Vec<f64>>, SacError> {
        let flat: Vec<S> = obs.iter().flatten().map(|&v| S::from_f64(v)).collect();
        let view = ArrayView2::from_shape((obs.len(), self.obs_dim), &flat)
            .map_err(|_| SacError::ShapeMismatch { expected: self.obs_dim, got: flat.len() / obs.len().max(1) })?;
        let p = sample_policy(&self.actor, view, rng)?;
        Ok(p.actions.rows().into_iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect())
    }

    /// Squashed mean action.
    pub fn act_deterministic(&self, obs: &[f64]) -> Result<Vec<f64>, SacError> {
        let row: Vec<S> = obs.iter().map(|&v| S::from_f64(v)).collect();
        Ok(super::policy::deterministic_action(&self.actor, &row)?.iter().map(|v| v.as_f64()).collect())
    }

    pub fn save_into(&self, ck: &mut Checkpoint) {
        ck.push_dense("actor", &self.actor);
        ck.push_dense("critic1", &self.critic1);
        ck.push_dense("critic2", &self.critic2);
        ck.push_dense("target1", &self.target1);
        ck.push_dense("target2", &self.target2);
        for (name, opt) in [("actor", &self.opt_actor), ("critic1", &self.opt_critic1), ("critic2", &self.opt_critic2)] {
            ck.push_raw(&format!("adam_m.{name}"), &opt.m);
            ck.push_raw(&format!("adam_v.{name}"), &opt.v);
            ck.set_meta(&format!("adam_step.{name}"), opt.step);
        }
        ck.set_meta("log_temperature", format!("{:?}", self.log_temperature));
        ck.set_meta("temperature_adam", {
            let o = &self.opt_temperature;
            format!("{:?} {:?} {}", o.m[0], o.v[0], o.step)
        });
        ck.set_meta("gamma", format!("{:?}", self.gamma));
        ck.set_meta("tau", format!("{:?}", self.tau));
        ck.set_meta("target_entropy", format!("{:?}", self.target_entropy));
    }

    pub fn load_from(ck: &Checkpoint, adam: AdamConfig) -> Result<Self, SacError> {
        let cfg = AgentConfig {
            gamma: ck.meta_parse("gamma")?,
            tau: ck.meta_parse("tau")?,
            target_entropy: Some(ck.meta_parse("target_entropy")?),
            adam,
            ..Default::default()
        };
        let mut agent = Self::from_parts(ck.dense("actor")?, ck.dense("critic1")?, ck.dense("critic2")?, &cfg);
        agent.target1 = ck.dense("target1")?;
        agent.target2 = ck.dense("target2")?;
        for (name, opt) in
            [("actor", &mut agent.opt_actor), ("critic1", &mut agent.opt_critic1), ("critic2", &mut agent.opt_critic2)]
        {
            let m: Vec<S> = ck.raw(&format!("adam_m.{name}"))?;
            let v: Vec<S> = ck.raw(&format!("adam_v.{name}"))?;
            if m.len() != opt.m.len() || v.len() != opt.v.len() {
                return Err(SacError::Checkpoint(format!("optimizer state of `{name}` has the wrong size")));
            }
            opt.m = m;
            opt.v = v;
            opt.step = ck.meta_parse(&format!("adam_step.{name}"))?;
        }
        agent.log_temperature = ck.meta_parse("log_temperature")?;
        let t = ck.meta("temperature_adam")?;
        let f: Vec<&str> = t.split(' ').collect();
        let bad = || SacError::Checkpoint("temperature optimizer state".into());
        if f.len() != 3 {
            return Err(bad());
        }
        agent.opt_temperature.m[0] = f[0].parse().map_err(|_| bad())?;
        agent.opt_temperature.v[0] = f[1].parse().map_err(|_| bad())?;
        agent.opt_temperature.step = f[2].parse().map_err(|_| bad())?;
        Ok(agent)
    }
}
