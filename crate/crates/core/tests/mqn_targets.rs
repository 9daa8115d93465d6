use amp_core::env_mqn::{simulate_mqn_episode, MqnConfig, MqnState, Regime, StaticPriority};
use amp_core::estimators::{
    estimate_average_cost, mqn_amp_targets, mqn_estimator_variance, mqn_sampling_deviation, EstimatorMode, ZeroValue,
};
use amp_core::oracle::{exact_poisson_solution, TruncatedMqn};
use amp_core::rng::stream_rng;

fn capped(cap: u32, episode_length: usize) -> MqnConfig {
    MqnConfig::for_regime(Regime::IL, episode_length).with_cap(cap)
}

#[test]
fn regenerative_average_cost_matches_the_poisson_solve() {
    let cfg = capped(10, 100_000);
    let policy = StaticPriority::class1_first();
    let c = exact_poisson_solution(&TruncatedMqn::new(&cfg, 10).unwrap(), &policy).unwrap().average_cost;
    let trs: Vec<_> = (0..4u64)
        .map(|e| simulate_mqn_episode::<f64, _, _>(&policy, &cfg, &mut stream_rng(3, &[e])).unwrap())
        .collect();
    let est: f64 = estimate_average_cost(&trs).unwrap();
    assert!((est - c).abs() < 0.03 * c, "estimate {est}, exact {c}");
}

#[test]
fn oracle_h_with_a_deterministic_policy_gives_h_exactly() {
    let cfg = capped(8, 2000);
    let policy = StaticPriority::class2_first();
    let h = exact_poisson_solution(&TruncatedMqn::new(&cfg, 8).unwrap(), &policy).unwrap();
    for e in 0..5u64 {
        let tr = simulate_mqn_episode::<f64, _, _>(&policy, &cfg, &mut stream_rng(4, &[e])).unwrap();
        let t =
            mqn_amp_targets(&tr, &h, &policy, &cfg, h.average_cost, EstimatorMode::AmpExact, &mut stream_rng(0, &[]))
                .unwrap();
        for (s, r) in tr.states.iter().zip(&t.records) {
            let want = h.h_at(s);
            assert!((r.target - want).abs() < 1e-8 * (1.0 + want.abs()), "state {s}: {} vs {want}", r.target);
        }
    }
}

#[test]
fn large_samples_approach_the_exact_targets() {
    let cfg = capped(8, 500);
    let policy = StaticPriority::class1_first();
    let h = exact_poisson_solution(&TruncatedMqn::new(&cfg, 8).unwrap(), &policy).unwrap();
    let small = mqn_sampling_deviation(&cfg, &policy, &h, 5, Some(h.average_cost), 10, 9).unwrap();
    let large = mqn_sampling_deviation(&cfg, &policy, &h, 500, Some(h.average_cost), 10, 9).unwrap();
    assert!(large.mean_abs_deviation < large.bound, "{large:?}");
    assert!(large.mean_abs_deviation < small.mean_abs_deviation, "{large:?} vs {small:?}");
}

#[test]
fn oracle_zeta_reduces_the_variance_at_the_empty_state() {
    let cfg = capped(8, 1000);
    let policy = StaticPriority::class1_first();
    let h = exact_poisson_solution(&TruncatedMqn::new(&cfg, 8).unwrap(), &policy).unwrap();
    let anchors = [MqnState::default()];
    let var = |mode, with_h: bool| {
        let study = if with_h {
            mqn_estimator_variance(&cfg, &policy, &h, mode, None, &anchors, 200, 2)
        } else {
            mqn_estimator_variance(&cfg, &policy, &ZeroValue, mode, None, &anchors, 200, 2)
        };
        study.unwrap().reports[0].variance
    };
    let plain: f64 = var(EstimatorMode::PlainMc, false);
    let zero: f64 = var(EstimatorMode::AmpExact, false);
    let oracle: f64 = var(EstimatorMode::AmpExact, true);
    assert_eq!(zero, plain);
    assert!(oracle < plain, "{oracle} vs {plain}");
}

#[test]
fn sampled_variance_does_not_grow_with_the_sample_size() {
    let cfg = capped(8, 1000);
    let policy = StaticPriority::class1_first();
    let h = exact_poisson_solution(&TruncatedMqn::new(&cfg, 8).unwrap(), &policy).unwrap();
    let anchors = [MqnState::default()];
    let vars: Vec<f64> = [5, 50, 500]
        .into_iter()
        .map(|samples| {
            let mode = EstimatorMode::AmpSampled { samples };
            mqn_estimator_variance(&cfg, &policy, &h, mode, None, &anchors, 100, 6).unwrap().reports[0].variance
        })
        .collect();
    assert!(vars[0] > vars[1] && vars[1] > vars[2], "{vars:?}");
}
