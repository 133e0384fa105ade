use myoexo::net::{gradient_check, DenseNet, Head};
use myoexo::sac::{
    deterministic_action, sample_policy, sample_policy_with_noise, soft_update, stage_lr, AgentConfig, Batch,
    EnvStep, MetricsWriter, ReplayBuffer, RlEnv, SacAgent, SacConfig, SacError, StageSpec, ToyConfig, ToyEnv,
    Trainer,
};
use ndarray::{array, Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn small_agent(seed: u64, obs: usize, act: usize, gamma: f64) -> SacAgent<f64> {
    let cfg = AgentConfig { gamma, hidden: vec![16, 16], ..Default::default() };
    let mut r = rng(seed);
    let a = DenseNet::new(&[obs, 16, 16, 2 * act], Head::Gaussian { action_dim: act }, &mut r).unwrap();
    let c1 = DenseNet::new(&[obs + act, 16, 16, 1], Head::Linear, &mut r).unwrap();
    let c2 = DenseNet::new(&[obs + act, 16, 16, 1], Head::Linear, &mut r).unwrap();
    SacAgent::from_parts(a, c1, c2, &cfg)
}

fn random_batch(r: &mut ChaCha8Rng, n: usize, obs: usize, act: usize) -> Batch<f64> {
    Batch {
        obs: Array2::from_shape_simple_fn((n, obs), || r.random_range(-1.0..1.0)),
        act: Array2::from_shape_simple_fn((n, act), || r.random_range(-1.0..1.0)),
        rew: Array1::from_shape_simple_fn(n, || r.random_range(-1.0..1.0)),
        next_obs: Array2::from_shape_simple_fn((n, obs), || r.random_range(-1.0..1.0)),
        done: Array1::from_shape_simple_fn(n, || if r.random_bool(0.2) { 1.0 } else { 0.0 }),
    }
}

#[test]
fn deterministic_action_is_repeatable() {
    let agent = small_agent(1, 4, 3, 0.99);
    let obs = [0.1, -0.2, 0.3, 0.9];
    assert_eq!(agent.act_deterministic(&obs).unwrap(), agent.act_deterministic(&obs).unwrap());
}

/// `E[tanh(μ + σε)]` by trapezoidal quadrature against the normal density.
fn squashed_mean(mu: f64, sigma: f64) -> f64 {
    let n = 20_000;
    let (lo, hi) = (-10.0, 10.0);
    let h = (hi - lo) / n as f64;
    (0..=n)
        .map(|i| {
            let e = lo + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            w * (mu + sigma * e).tanh() * (-0.5 * e * e).exp() / (2.0 * std::f64::consts::PI).sqrt()
        })
        .sum::<f64>()
        * h
}

fn gaussian_head(mu: f64, log_std: f64) -> DenseNet<f64> {
    let mut net = DenseNet::<f64>::zeros(&[1, 2], Head::Gaussian { action_dim: 1 }).unwrap();
    net.set_params(&[0.0, 0.0, mu, log_std]).unwrap();
    net
}

#[test]
fn monte_carlo_mean_of_wide_head() {
    let n = 100_000;
    let obs = Array2::<f64>::zeros((n, 1));
    for (mu, ls, seed) in [(0.0, 1.0, 3), (0.4, 0.7, 4)] {
        let net = gaussian_head(mu, ls);
        let s = sample_policy(&net, obs.view(), &mut rng(seed)).unwrap();
        let mean = s.actions.mean().unwrap();
        let sd = s.actions.std(1.0);
        let tol = 3.0 * sd / (n as f64).sqrt();
        assert!((mean - squashed_mean(mu, ls.exp())).abs() < tol, "mu {mu}: {mean}");
        if mu == 0.0 {
            // Symmetric head: the squashed mean is the deterministic action.
            let det = deterministic_action(&net, &[0.0]).unwrap()[0];
            assert!((mean - det).abs() < tol);
        }
    }
}

#[test]
fn log_probability_matches_change_of_variables() {
    let net = gaussian_head(0.3, -0.4);
    for eps in [-2.0, -0.3, 0.0, 1.1, 3.0] {
        let s = sample_policy_with_noise(&net, Array2::zeros((1, 1)).view(), array![[eps]]).unwrap();
        let sigma = (-0.4f64).exp();
        let u = 0.3 + sigma * eps;
        let a = u.tanh();
        // p(a) = N(u; μ, σ) / |da/du|
        let density = (-0.5 * eps * eps).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt()) / (1.0 - a * a);
        assert!((s.actions[[0, 0]] - a).abs() < 1e-15);
        assert!((s.log_prob[0] - density.ln()).abs() < 1e-10);
    }
}

#[test]
fn log_std_is_clamped() {
    let low = gaussian_head(0.0, -40.0);
    let high = gaussian_head(0.0, 40.0);
    let z = Array2::zeros((1, 1));
    let a = sample_policy_with_noise(&low, z.view(), array![[1.0]]).unwrap();
    assert!((a.actions[[0, 0]] - (-5.0f64).exp().tanh()).abs() < 1e-15);
    let b = sample_policy_with_noise(&high, z.view(), array![[0.1]]).unwrap();
    assert!((b.actions[[0, 0]] - (0.1 * 2.0f64.exp()).tanh()).abs() < 1e-15);
}

#[test]
fn terminal_and_undiscounted_targets_equal_reward() {
    let mut r = rng(5);
    let agent = small_agent(2, 3, 2, 0.99);
    let mut batch = random_batch(&mut r, 8, 3, 2);
    batch.done.fill(1.0);
    assert_eq!(agent.critic_targets(&batch, &mut r).unwrap(), batch.rew);
    let myopic = small_agent(2, 3, 2, 0.0);
    batch.done.fill(0.0);
    assert_eq!(myopic.critic_targets(&batch, &mut r).unwrap(), batch.rew);
}

#[test]
fn critic_target_matches_hand_computation() {
    // Actor: μ = 0.5 s − 0.1, log σ = −0.2 s − 1.
    let mut actor = DenseNet::<f64>::zeros(&[1, 2], Head::Gaussian { action_dim: 1 }).unwrap();
    actor.set_params(&[0.5, -0.2, -0.1, -1.0]).unwrap();
    // Critics: two ReLU units on (s, a) then a linear readout.
    let mut c1 = DenseNet::<f64>::zeros(&[2, 2, 1], Head::Linear).unwrap();
    c1.set_params(&[1.0, 2.0, -1.0, 0.5, 0.1, 0.2, 0.7, -0.3, 0.05]).unwrap();
    let mut c2 = DenseNet::<f64>::zeros(&[2, 2, 1], Head::Linear).unwrap();
    c2.set_params(&[0.8, 1.5, 0.3, -0.5, 0.0, 0.4, 0.9, 0.6, -0.1]).unwrap();
    let cfg = AgentConfig { gamma: 0.9, init_temperature: 0.2, ..Default::default() };
    let agent = SacAgent::from_parts(actor, c1, c2, &cfg);
    let (s2, r, eps) = (0.6, 0.25, 0.8);
    let batch = Batch {
        obs: array![[0.0]],
        act: array![[0.0]],
        rew: array![r],
        next_obs: array![[s2]],
        done: array![0.0],
    };
    let y = agent.critic_targets_with_noise(&batch, array![[eps]]).unwrap()[0];

    let mu = 0.5 * s2 - 0.1;
    let ls = -0.2 * s2 - 1.0;
    let u = mu + f64::exp(ls) * eps;
    let a = u.tanh();
    let logp = -0.5 * eps * eps - ls - 0.5 * (2.0 * std::f64::consts::PI).ln() - (1.0 - a * a).ln();
    let relu = |v: f64| v.max(0.0);
    let q1 = 0.7 * relu(1.0 * s2 + 2.0 * a + 0.1) - 0.3 * relu(-1.0 * s2 + 0.5 * a + 0.2) + 0.05;
    let q2 = 0.9 * relu(0.8 * s2 + 1.5 * a + 0.0) + 0.6 * relu(0.3 * s2 - 0.5 * a + 0.4) - 0.1;
    let expect = r + 0.9 * (q1.min(q2) - 0.2 * logp);
    assert!((y - expect).abs() < 1e-10, "{y} vs {expect}");
}

#[test]
fn actor_objective_gradient_matches_finite_differences() {
    let mut worst = 0.0f64;
    let (mut skipped, mut checked) = (0, 0);
    for draw in 0..100 {
        let mut r = rng(100 + draw);
        let agent = small_agent(200 + draw, 5, 3, 0.99);
        let obs = Array2::from_shape_simple_fn((4, 5), || r.random_range(-1.0..1.0));
        let noise = Array2::from_shape_simple_fn((4, 3), || r.random_range(-1.5..1.5));
        let (_, grads, _) = agent.actor_objective(obs.view(), noise.clone()).unwrap();
        let mut probe = agent.clone();
        let res = gradient_check(agent.actor.params(), &grads, 1e-5, |p| {
            probe.actor.set_params(p).unwrap();
            let (loss, _, _) = probe.actor_objective(obs.view(), noise.clone()).unwrap();
            // Region signature: actor ReLU masks, the chosen critic per sample
            // and critic ReLU masks at the sampled actions.
            let (_, cache) = probe.actor.forward(obs.view()).unwrap();
            let mut mask = DenseNet::relu_mask(&cache);
            let s = sample_policy_with_noise(&probe.actor, obs.view(), noise.clone()).unwrap();
            let x = ndarray::concatenate(ndarray::Axis(1), &[obs.view(), s.actions.view()]).unwrap();
            let (q1, k1) = probe.critic1.forward(x.view()).unwrap();
            let (q2, k2) = probe.critic2.forward(x.view()).unwrap();
            mask.extend(DenseNet::relu_mask(&k1));
            mask.extend(DenseNet::relu_mask(&k2));
            mask.extend(q1.iter().zip(q2.iter()).map(|(a, b)| a <= b));
            (loss, mask)
        });
        worst = worst.max(res.max_relative_error);
        skipped += res.skipped;
        checked += res.checked;
    }
    assert!(worst < 1e-4, "max relative error {worst:e}");
    assert!((skipped as f64) < 0.05 * (skipped + checked) as f64);
}

#[test]
fn critics_memorize_single_transition() {
    let mut agent = small_agent(7, 3, 2, 0.0);
    let mut buf = ReplayBuffer::new(1, 3, 2);
    buf.push(&[0.2, -0.4, 0.9], &[0.5, -0.5], 0.7, &[0.1, 0.1, 0.1], false);
    let mut r = rng(8);
    let mut last = f64::INFINITY;
    for _ in 0..3000 {
        let s = agent.update_from_buffer(&buf, 1, 1e-3, &mut r).unwrap();
        last = s.critic1.max(s.critic2);
    }
    assert!(last < 1e-6, "critic loss {last:e}");
}

#[test]
fn update_requires_filled_buffer() {
    let mut agent = small_agent(7, 3, 2, 0.9);
    let buf = ReplayBuffer::new(10, 3, 2);
    assert!(matches!(agent.update_from_buffer(&buf, 4, 1e-3, &mut rng(1)), Err(SacError::BufferTooSmall { .. })));
}

fn agent_with_log_std(ls: f64) -> SacAgent<f64> {
    let mut a = small_agent(9, 2, 2, 0.9);
    let n = a.actor.params().len();
    // Zero the last layer and set the log-std biases.
    let last = 16 * 4 + 4;
    let p = a.actor.params_mut();
    p[n - last..].iter_mut().for_each(|v| *v = 0.0);
    p[n - 2] = ls;
    p[n - 1] = ls;
    a
}

#[test]
fn temperature_moves_toward_target_entropy() {
    let mut r = rng(10);
    let batch = random_batch(&mut r, 32, 2, 2);
    // Narrow policy: entropy far below −|A| so the temperature must rise.
    let mut narrow = agent_with_log_std(-4.5);
    let t0 = narrow.temperature();
    let s = narrow.update(&batch, 1e-3, &mut r).unwrap();
    assert!(s.entropy < narrow.target_entropy);
    assert!(narrow.temperature() > t0);
    // Wide policy: entropy above the target, so the temperature falls.
    let mut wide = agent_with_log_std(0.0);
    let t0 = wide.temperature();
    let s = wide.update(&batch, 1e-3, &mut r).unwrap();
    assert!(s.entropy > wide.target_entropy);
    assert!(wide.temperature() < t0);
}

#[test]
fn random_updates_stay_finite() {
    let mut r = rng(11);
    let mut agent = small_agent(12, 4, 2, 0.99);
    for _ in 0..1000 {
        let b = random_batch(&mut r, 16, 4, 2);
        let s = agent.update(&b, 1e-3, &mut r).unwrap();
        for v in [s.critic1, s.critic2, s.actor, s.temperature_loss, s.temperature, s.entropy] {
            assert!(v.is_finite());
        }
        assert!(s.temperature > 0.0);
    }
}

#[test]
fn soft_update_limits_and_half_life() {
    let online = vec![1.0f64, -2.0, 3.0];
    let mut t = vec![0.0; 3];
    soft_update(&mut t, &online, 1.0).unwrap();
    assert_eq!(t, online);
    let mut t = vec![5.0; 3];
    soft_update(&mut t, &online, 0.0).unwrap();
    assert_eq!(t, vec![5.0; 3]);
    let mut t = vec![0.0f64];
    for _ in 0..139 {
        soft_update(&mut t, &[1.0], 0.005).unwrap();
    }
    let gap = 1.0 - t[0];
    assert!((gap - 0.995f64.powi(139)).abs() < 1e-12);
    assert!((gap - 0.5).abs() < 0.005, "gap {gap}");
    assert!(soft_update(&mut t, &[1.0, 2.0], 0.5).is_err());
}

#[test]
fn lr_jumps_at_stage_boundary_and_decays_to_zero() {
    let cfg = SacConfig {
        agent: AgentConfig { hidden: vec![8], ..Default::default() },
        batch_size: 8,
        buffer_capacity: 1000,
        num_envs: 1,
        warmup_steps: 20,
        stage1_steps: 200,
        stage2_steps: 200,
        checkpoint_every: 0,
        ..Default::default()
    };
    let toy = ToyConfig { episode_len: 10, ..Default::default() };
    let mut t = Trainer::new(cfg.clone(), vec![ToyEnv::new(toy, 1, "toy/0")], 1).unwrap();
    let mut buf = Vec::new();
    {
        let mut m = MetricsWriter::new(&mut buf, &[]).unwrap();
        let s1 = StageSpec { label: "1".into(), len: cfg.stage1_steps, lr0: cfg.lr_stage1 };
        t.run_stage(&s1, &mut m, &mut |_| Ok(())).unwrap();
        t.stage_step = 0;
        let s2 = StageSpec { label: "2a".into(), len: cfg.stage2_steps, lr0: cfg.lr_stage2 };
        t.run_stage(&s2, &mut m, &mut |_| Ok(())).unwrap();
    }
    let mut rdr = csv::Reader::from_reader(&buf[..]);
    let rows: Vec<(String, f64)> =
        rdr.records().map(|r| r.unwrap()).map(|r| (r[1].to_string(), r[9].parse().unwrap())).collect();
    let first2 = rows.iter().position(|r| r.0 == "2a").unwrap();
    // Episodes end every 10 steps; the logged rate is the one in force
    // at the episode's last step.
    assert!((rows[first2 - 1].1 - stage_lr(1e-3, 199, 200)).abs() < 1e-15);
    assert!((rows[first2].1 - stage_lr(5e-4, 9, 200)).abs() < 1e-15);
    assert!(rows[first2].1 > 4.7e-4);
    assert!((rows.last().unwrap().1 - 5e-4 / 200.0).abs() < 1e-15);
    for w in rows.windows(2) {
        if w[0].0 == w[1].0 {
            assert!(w[1].1 < w[0].1);
        }
    }
}

fn toy_metrics(seed: u64) -> Vec<u8> {
    let cfg = SacConfig {
        agent: AgentConfig { hidden: vec![8, 8], ..Default::default() },
        batch_size: 16,
        buffer_capacity: 500,
        num_envs: 2,
        warmup_steps: 50,
        stage1_steps: 400,
        checkpoint_every: 0,
        ..Default::default()
    };
    let toy = ToyConfig { episode_len: 20, ..Default::default() };
    let envs = (0..2).map(|i| ToyEnv::new(toy.clone(), seed, &format!("toy/{i}"))).collect();
    let mut t = Trainer::new(cfg.clone(), envs, seed).unwrap();
    let mut buf = Vec::new();
    let mut m = MetricsWriter::new(&mut buf, &[]).unwrap();
    let s = StageSpec { label: "1".into(), len: cfg.stage1_steps, lr0: cfg.lr_stage1 };
    t.run_stage(&s, &mut m, &mut |_| Ok(())).unwrap();
    drop(m);
    buf
}

#[test]
fn same_seed_gives_identical_metrics() {
    let a = toy_metrics(3);
    assert_eq!(a, toy_metrics(3));
    assert_ne!(a, toy_metrics(4));
}

/// Environment that records nothing but counts steps; used to check the
/// parallel collector preserves order.
struct Counter {
    n: usize,
    id: f64,
}

impl RlEnv for Counter {
    fn obs_dim(&self) -> usize {
        1
    }
    fn action_dim(&self) -> usize {
        1
    }
    fn reset(&mut self) -> Result<Vec<f64>, SacError> {
        self.n = 0;
        Ok(vec![self.id])
    }
    fn step(&mut self, a: &[f64]) -> Result<EnvStep, SacError> {
        self.n += 1;
        Ok(EnvStep { obs: vec![self.id], reward: self.id + a[0], truncated: self.n == 7, ..Default::default() })
    }
    fn snapshot(&self) -> String {
        String::new()
    }
    fn restore(&mut self, _: &str) -> Result<(), SacError> {
        Ok(())
    }
}

#[test]
fn worker_threads_do_not_change_results() {
    let run = |workers: usize| {
        let cfg = SacConfig {
            agent: AgentConfig { hidden: vec![4], ..Default::default() },
            batch_size: 4,
            buffer_capacity: 100,
            num_envs: 5,
            warmup_steps: 10,
            stage1_steps: 100,
            checkpoint_every: 0,
            ..Default::default()
        };
        let envs = (0..5).map(|i| Counter { n: 0, id: i as f64 }).collect();
        let mut t = Trainer::new(cfg, envs, 9).unwrap();
        t.workers = workers;
        let mut buf = Vec::new();
        let mut m = MetricsWriter::new(&mut buf, &[]).unwrap();
        t.run_stage(&StageSpec { label: "1".into(), len: 100, lr0: 1e-3 }, &mut m, &mut |_| Ok(())).unwrap();
        drop(m);
        buf
    };
    assert_eq!(run(1), run(3));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn actions_are_bounded(seed in 0u64..10_000, scale in 0.0f64..50.0) {
        let mut r = rng(seed);
        let mut actor = DenseNet::<f64>::new(&[3, 8, 4], Head::Gaussian { action_dim: 2 }, &mut r).unwrap();
        actor.params_mut().iter_mut().for_each(|p| *p *= scale);
        let obs = Array2::from_shape_simple_fn((4, 3), || r.random_range(-10.0..10.0));
        let s = sample_policy(&actor, obs.view(), &mut r).unwrap();
        prop_assert!(s.actions.iter().all(|a| (-1.0..=1.0).contains(a)));
        prop_assert!(s.log_prob.iter().all(|l| !l.is_nan()));
    }

    #[test]
    fn replay_index_arithmetic(cap in 1usize..20, pushes in 0usize..60, seed in 0u64..1000) {
        let mut buf = ReplayBuffer::new(cap, 1, 1);
        for k in 0..pushes {
            buf.push(&[k as f64], &[0.0], k as f64, &[0.0], false);
        }
        prop_assert_eq!(buf.len(), pushes.min(cap));
        prop_assert_eq!(buf.cursor(), pushes % cap);
        // Slot i holds the newest push congruent to i.
        for i in 0..buf.len() {
            let newest = (0..pushes).rev().find(|k| k % cap == i).unwrap();
            prop_assert_eq!(buf.reward_at(i), Some(newest as f32));
        }
        prop_assert_eq!(buf.reward_at(buf.len()), None);
        if buf.len() > 0 {
            let idx = buf.sample_indices(buf.len(), &mut rng(seed)).unwrap();
            prop_assert!(idx.iter().all(|&i| i < buf.len()));
            // Every sampled reward is one of the retained pushes.
            let oldest_kept = pushes.saturating_sub(cap);
            let b: Batch<f64> = buf.gather(&idx);
            prop_assert!(b.rew.iter().all(|&r| r >= oldest_kept as f64 && r < pushes as f64));
        }
        prop_assert!(buf.sample_indices(buf.len() + 1, &mut rng(seed)).is_err());
    }

    #[test]
    fn targets_stay_convex_combinations(taus in prop::collection::vec(0.0f64..=1.0, 1..30), seed in 0u64..100) {
        let mut r = rng(seed);
        let mut target = vec![r.random_range(-1.0..1.0)];
        let mut history = target.clone();
        for tau in taus {
            let online = r.random_range(-1.0..1.0);
            history.push(online);
            soft_update(&mut target, &[online], tau).unwrap();
            let lo = history.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = history.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(target[0] >= lo - 1e-12 && target[0] <= hi + 1e-12);
        }
    }
}
