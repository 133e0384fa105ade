use std::f64::consts::PI;

use myoexo::env::{ActionVector, Env, EnvConfig, Stage};
use myoexo::gait::*;
use myoexo::synergy::SynergyBasis;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn wave(values: Vec<f64>) -> GaitWaveform {
    GaitWaveform::from_values(values, "Nm/kg").unwrap()
}

fn random_wave(rng: &mut ChaCha8Rng) -> GaitWaveform {
    wave((0..CYCLE_POINTS).map(|_| rng.random_range(-3.0..3.0)).collect())
}

// Textbook single-pass moment sums.
fn oracle_stats(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len() as f64;
    let (mut sa, mut sb, mut saa, mut sbb, mut sab, mut sq) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..a.len() {
        sa += a[i];
        sb += b[i];
        saa += a[i] * a[i];
        sbb += b[i] * b[i];
        sab += a[i] * b[i];
        sq += (a[i] - b[i]) * (a[i] - b[i]);
    }
    let cov = sab / n - sa * sb / (n * n);
    let va = saa / n - sa * sa / (n * n);
    let vb = sbb / n - sb * sb / (n * n);
    (cov / (va * vb).sqrt(), (sq / n).sqrt())
}

// Stable sort by value keeps the earliest index first among ties.
fn oracle_peaks(v: &[f64]) -> (f64, f64) {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
    let min = idx[0];
    let top = v[*idx.last().unwrap()];
    let max = idx.iter().copied().find(|&i| v[i] == top).unwrap();
    (min as f64, max as f64)
}

fn oracle_lag(d_pct: f64, stride_s: f64) -> f64 {
    let d = [d_pct - 200.0, d_pct - 100.0, d_pct, d_pct + 100.0, d_pct + 200.0]
        .into_iter()
        .find(|d| *d > -50.0 && *d <= 50.0)
        .unwrap();
    d * 10.0 * stride_s
}

#[test]
fn waveform_stats_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let (a, b) = (random_wave(&mut rng), random_wave(&mut rng));
        let s = waveform_stats(&a, &b).unwrap();
        let (r, rmse) = oracle_stats(&a.values, &b.values);
        assert!((s.r.unwrap() - r).abs() < 1e-10);
        assert!((s.rmse - rmse).abs() < 1e-10);
    }
}

#[test]
fn waveform_stats_examples() {
    let a = wave((0..101).map(|k| (k as f64 * 0.1).sin()).collect());
    let s = waveform_stats(&a, &a).unwrap();
    assert!((s.r.unwrap() - 1.0).abs() < 1e-12 && s.rmse == 0.0);
    let b = wave(a.values.iter().map(|x| 2.0 * x + 3.0).collect());
    let s = waveform_stats(&a, &b).unwrap();
    assert!((s.r.unwrap() - 1.0).abs() < 1e-12 && s.rmse > 0.0);
    let c = wave(vec![1.0; 101]);
    let s = waveform_stats(&a, &c).unwrap();
    assert!(s.r.is_none() && s.rmse > 0.0);
    assert!(waveform_stats(&a, &a.clone().with_units("rad")).is_err());

    // Five-point pair against hand-expanded sums.
    let x = [1.0, 2.0, 4.0, 7.0, 11.0];
    let y = [2.0, 1.0, 5.0, 6.0, 13.0];
    // mean x = 5, mean y = 5.4; deviations summed by hand.
    let cov = (-4.0 * -3.4) + (-3.0 * -4.4) + (-1.0 * -0.4) + (2.0 * 0.6) + (6.0 * 7.6);
    let vx = 16.0 + 9.0 + 1.0 + 4.0 + 36.0;
    let vy = 3.4f64 * 3.4 + 4.4 * 4.4 + 0.4 * 0.4 + 0.6 * 0.6 + 7.6 * 7.6;
    assert!((pearson(&x, &y).unwrap() - cov / (vx * vy as f64).sqrt()).abs() < 1e-12);
}

#[test]
fn peak_timing_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..100 {
        let mut w = random_wave(&mut rng);
        if i % 4 == 0 {
            // Quantized values force ties.
            w.values.iter_mut().for_each(|v| *v = v.round());
        }
        assert_eq!(peak_timing(&w), oracle_peaks(&w.values));
    }
    let s = wave((0..101).map(|k| (2.0 * PI * k as f64 / 100.0).sin()).collect());
    assert_eq!(peak_timing(&s), (75.0, 25.0));
}

#[test]
fn peak_lag_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let (a, b) = (random_wave(&mut rng), random_wave(&mut rng));
        let stride = rng.random_range(0.8..1.4);
        let (ab, af) = oracle_peaks(&a.values);
        let (bb, bf) = oracle_peaks(&b.values);
        let (le, lf) = peak_lag(&a, &b, stride);
        assert!((le - oracle_lag(bb - ab, stride)).abs() < 1e-10);
        assert!((lf - oracle_lag(bf - af, stride)).abs() < 1e-10);
    }
}

#[test]
fn peak_lag_examples() {
    let bio = wave((0..101).map(|k| (2.0 * PI * k as f64 / 100.0).sin()).collect());
    assert_eq!(peak_lag(&bio, &bio, 1.1), (0.0, 0.0));
    let shifted = wave((0..101).map(|k| (2.0 * PI * (k as f64 - 10.0) / 100.0).sin()).collect());
    let (e, f) = peak_lag(&bio, &shifted, 1.1);
    assert!((e - 110.0).abs() < 1e-9 && (f - 110.0).abs() < 1e-9);
    let mut b = vec![0.0; 101];
    b[95] = 1.0;
    let mut x = vec![0.0; 101];
    x[3] = 1.0;
    let (_, f) = peak_lag(&wave(b), &wave(x), 1.0);
    assert!((f - 80.0).abs() < 1e-9);
}

#[test]
fn mean_activation_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let muscles = rng.random_range(1..20);
        let ticks = rng.random_range(680..900);
        let log: Vec<Vec<f64>> = (0..ticks).map(|_| (0..muscles).map(|_| rng.random::<f64>()).collect()).collect();
        let mut total = 0.0;
        let mut count = 0usize;
        for row in log.iter().skip(80).take(600) {
            for a in row {
                total += a;
                count += 1;
            }
        }
        assert_eq!(count, 600 * muscles);
        let m = mean_activation(&log, 40.0, 2.0, 15.0).unwrap();
        assert!((m - total / count as f64).abs() < 1e-10);
    }
    let flat = vec![vec![0.5; 16]; 680];
    assert!((mean_activation(&flat, 40.0, 2.0, 15.0).unwrap() - 0.5).abs() < 1e-15);
    assert!(matches!(mean_activation(&flat[..679], 40.0, 2.0, 15.0), Err(GaitError::RolloutTooShort { .. })));
}

#[test]
fn mean_positive_power_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let n = rng.random_range(1..300);
        let mass = rng.random_range(40.0..110.0);
        let tq: Vec<[f64; 6]> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-80.0..80.0))).collect();
        let wr: Vec<[f64; 6]> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-8.0..8.0))).collect();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..6 {
                let p = tq[i][j] * wr[i][j];
                if p > 0.0 {
                    acc += p;
                }
            }
        }
        let got = mean_positive_power(&tq, &wr, mass).unwrap();
        assert!((got - acc / n as f64 / mass).abs() < 1e-10);
    }
    assert_eq!(mean_positive_power(&[[10.0]], &[[-1.0]], 70.0).unwrap(), 0.0);
    assert_eq!(mean_positive_power(&[[10.0; 6]], &[[0.0; 6]], 70.0).unwrap(), 0.0);
}

#[test]
fn sinusoidal_power_matches_quadrature() {
    // tau = A sin x, omega = B sin(x + phi); mean positive part over one period
    // is A B (c (2 pi - 2 theta) + 2 sin theta) / (4 pi) with c = cos phi,
    // theta = acos c.
    let (a, b, mass) = (40.0, 3.0, 74.5);
    for phi in [0.3, 1.0, 2.0, 2.8] {
        let n = 200_000;
        let tq: Vec<[f64; 1]> = (0..n).map(|i| [a * (2.0 * PI * i as f64 / n as f64).sin()]).collect();
        let wr: Vec<[f64; 1]> = (0..n).map(|i| [b * (2.0 * PI * i as f64 / n as f64 + phi).sin()]).collect();
        let c = f64::cos(phi);
        let theta = c.acos();
        let exact = a * b * (c * (2.0 * PI - 2.0 * theta) + 2.0 * theta.sin()) / (4.0 * PI) / mass;
        let got = mean_positive_power(&tq, &wr, mass).unwrap();
        assert!((got - exact).abs() < 1e-6 * exact.abs().max(1.0), "phi {phi}: {got} vs {exact}");
    }
}

#[test]
fn sinusoid_resampling() {
    let period = 110usize;
    let offset = 37usize;
    let signal: Vec<f64> = (0..1200).map(|i| (2.0 * PI * (i as f64 - offset as f64) / period as f64).sin()).collect();
    let events: Vec<usize> = (0..10).map(|k| offset + k * period).collect();
    let w = normalize_cycle(&signal, &events, 5).unwrap();
    assert_eq!(w.values.len(), CYCLE_POINTS);
    let err = (0..101).map(|k| (w.values[k] - (2.0 * PI * k as f64 / 100.0).sin()).abs()).fold(0.0, f64::max);
    assert!(err < 1e-3, "max resampling error {err}");
    assert_eq!(w.strides, 5);
    assert_eq!(w.span, (events[4], events[9]));
}

#[test]
fn events_from_square_wave() {
    let n = 1100;
    let grf: Vec<f64> = (0..n).map(|i| if (i + 50) % 110 < 55 { 800.0 } else { 0.0 }).collect();
    let ev = detect_gait_events(&grf, 100.0, 50.0, 0.3).unwrap();
    let edges: Vec<usize> = (1..n).filter(|&i| grf[i - 1] == 0.0 && grf[i] == 800.0).collect();
    assert_eq!(ev, edges);
    assert!(ev.windows(2).all(|w| w[1] - w[0] == 110));
    assert!(matches!(detect_gait_events(&vec![0.0; n], 100.0, 50.0, 0.3), Err(GaitError::NoEvents { found: 0 })));
    assert!(matches!(detect_gait_events(&grf, 100.0, 801.0, 0.3), Err(GaitError::NoEvents { .. })));
    assert!(detect_gait_events(&grf, 100.0, 0.0, 0.3).is_err());
}

fn cm(slope: f64, speed: f64, activation: f64, power: f64) -> ConditionMetrics {
    ConditionMetrics { slope, speed, activation, power }
}

#[test]
fn assistance_effect_examples() {
    let speeds = [0.8, 1.0, 1.2, 1.4];
    let base: Vec<_> = speeds.iter().map(|&v| cm(0.0, v, 0.2, 1.5)).collect();
    let same = assistance_effect(&base, &base).unwrap();
    assert!(same.rows.iter().all(|r| r.activation_reduction == 0.0 && r.power_reduction == 0.0));
    assert!(same.activation_speed_r.is_none() && same.power_speed_r.is_none());

    let r = assistance_effect(&[cm(0.0, 1.0, 0.9, 0.9)], &[cm(0.0, 1.0, 1.0, 1.0)]).unwrap();
    assert!((r.rows[0].activation_reduction - 10.0).abs() < 1e-12);

    let mut assisted = Vec::new();
    let mut baseline = Vec::new();
    for slope in [-5.0, 0.0, 5.0] {
        for &v in &speeds {
            baseline.push(cm(slope, v, 1.0, 2.0));
            // Reduction of 5 v percent in both metrics.
            assisted.push(cm(slope, v, 1.0 - 0.05 * v, 2.0 * (1.0 - 0.05 * v)));
        }
    }
    assisted.reverse();
    let rep = assistance_effect(&assisted, &baseline).unwrap();
    assert!((rep.activation_speed_r.unwrap() - 1.0).abs() < 1e-12);
    assert!((rep.power_speed_r.unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(rep.rows.len(), 12);

    assert!(matches!(assistance_effect(&assisted[1..], &baseline), Err(GaitError::GridMismatch(_))));
    let mut shifted = baseline.clone();
    shifted[0].speed = 0.9;
    assert!(matches!(assistance_effect(&assisted, &shifted), Err(GaitError::GridMismatch(_))));
}

#[test]
fn report_files() {
    let dir = tempfile::tempdir().unwrap();
    let rep = assistance_effect(&[cm(0.0, 1.0, 0.9, 0.9)], &[cm(0.0, 1.0, 1.0, 1.0)]).unwrap();
    let p = dir.path().join("effect.csv");
    write_effect_csv(&rep, &p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert!(text.starts_with("slope,speed,"));
    assert_eq!(text.lines().count(), 2);
    let w = wave(vec![0.0; 101]);
    let q = dir.path().join("waves.csv");
    write_waveform_bundle(&[("a".into(), w.clone()), ("b".into(), w)], &q).unwrap();
    assert_eq!(std::fs::read_to_string(&q).unwrap().lines().count(), 1 + 202);
}

#[test]
fn rollout_log_round_trip() {
    let mut env = Env::new(EnvConfig::default(), SynergyBasis::reference_leg(), Stage::TwoA, 11).unwrap();
    env.reset_to(0, 1.0).unwrap();
    let mut log = RolloutLog::for_env(&env);
    let mut action = ActionVector::zeros(env.rank());
    action.exo = [0.4, -0.4];
    for _ in 0..20 {
        let r = env.step(&action).unwrap();
        log.record(&env, &r.info);
        if r.terminated {
            break;
        }
    }
    assert_eq!(log.activations.len(), 20);
    // 20 ticks at 40 Hz is 0.5 s, so 50 samples at 100 Hz.
    assert_eq!(log.len(), 50);
    assert!(log.t.windows(2).all(|w| (w[1] - w[0] - 0.01).abs() < 1e-9));
    assert_eq!(log.activations[0].len(), log.muscle_names.len());
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("rollout.csv");
    log.write_csv(&p).unwrap();
    let back = RolloutLog::read_csv(&p).unwrap();
    assert_eq!(back, log);
}

proptest! {
    #[test]
    fn r_affine_invariant_and_rmse_translation_equivariant(
        a in prop::collection::vec(-5.0f64..5.0, 101),
        b in prop::collection::vec(-5.0f64..5.0, 101),
        scale in 0.1f64..10.0, shift in -10.0f64..10.0,
    ) {
        let (wa, wb) = (wave(a.clone()), wave(b.clone()));
        let base = waveform_stats(&wa, &wb).unwrap();
        let scaled = wave(a.iter().map(|x| scale * x + shift).collect());
        let s = waveform_stats(&scaled, &wb).unwrap();
        prop_assert!((s.r.unwrap() - base.r.unwrap()).abs() < 1e-9);
        let ta = wave(a.iter().map(|x| x + shift).collect());
        let tb = wave(b.iter().map(|x| x + shift).collect());
        prop_assert!((waveform_stats(&ta, &tb).unwrap().rmse - base.rmse).abs() < 1e-9);
    }

    #[test]
    fn peak_timing_affine_invariant(a in prop::collection::vec(-5i32..5, 101), scale in 1u32..8, shift in -10i32..10) {
        let w = wave(a.iter().map(|&x| x as f64).collect());
        let t = wave(a.iter().map(|&x| (scale as i32 * x + shift) as f64).collect());
        prop_assert_eq!(peak_timing(&w), peak_timing(&t));
    }

    #[test]
    fn positive_power_nonnegative(
        t in prop::collection::vec(-50.0f64..50.0, 1..60),
        w in prop::collection::vec(-5.0f64..5.0, 1..60),
    ) {
        let n = t.len().min(w.len());
        let tq: Vec<[f64; 1]> = t[..n].iter().map(|x| [*x]).collect();
        let wr: Vec<[f64; 1]> = w[..n].iter().map(|x| [*x]).collect();
        let p = mean_positive_power(&tq, &wr, 70.0).unwrap();
        prop_assert!(p >= 0.0);
        let all_nonpos = (0..n).all(|i| t[i] * w[i] <= 0.0);
        prop_assert_eq!(p == 0.0, all_nonpos);
    }

    #[test]
    fn normalize_preserves_constants(c in -100.0f64..100.0, gaps in prop::collection::vec(30usize..150, 6..10)) {
        let mut events = vec![5usize];
        for g in &gaps {
            events.push(events.last().unwrap() + g);
        }
        let signal = vec![c; events.last().unwrap() + 1];
        let w = normalize_cycle(&signal, &events, 5).unwrap();
        prop_assert!(w.values.iter().all(|v| *v == c));
    }
}
