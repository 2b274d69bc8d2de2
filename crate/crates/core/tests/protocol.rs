use fedro_core::aggregation::{average, AggregatorConfig, Rule};
use fedro_core::attacks::{AttackKind, AttackSpec};
use fedro_core::fl::{local_sgd, run_fedro, GradientStreams, RunConfig, Simulator, ViolationMode};
use fedro_core::rng::{self, Purpose};
use fedro_core::tasks::{QuadraticTask, QuadraticTaskSpec, TaskSpec};
use fedro_core::{FedroError, ParameterVector};

fn pv(v: &[f64]) -> ParameterVector {
    ParameterVector::new(v.to_vec())
}

fn scalar_task() -> QuadraticTask {
    QuadraticTask::from_centers(1.0, vec![pv(&[0.0])], 0, 0.0).unwrap()
}

fn config(task: QuadraticTaskSpec, n_hat: usize, b_hat: usize, rule: Rule, attack: AttackKind) -> RunConfig {
    RunConfig {
        task: TaskSpec::Quadratic(task),
        n_hat,
        b_hat,
        rounds: 50,
        local_steps: 1,
        gamma_c: 0.05,
        gamma_s: 1.0,
        aggregator: AggregatorConfig::new(rule),
        attack: AttackSpec::new(attack),
        master_seed: 7,
        x0: None,
        violation_mode: ViolationMode::ContinueAndFlag,
    }
}

#[test]
fn local_sgd_deterministic_recursion() {
    let task = scalar_task();
    let streams = GradientStreams { master_seed: 1, round: 0 };
    let x = pv(&[2.0]);
    let one = local_sgd(&task, 0, &x, 1, 0.1, &streams).unwrap();
    assert!((one.update[0] + 0.2).abs() < 1e-15);
    let two = local_sgd(&task, 0, &x, 2, 0.1, &streams).unwrap();
    assert!((two.update[0] + 0.38).abs() < 1e-15);
    assert!((two.local_model[0] - 1.62).abs() < 1e-15);

    assert_eq!(local_sgd(&task, 0, &x, 3, 0.0, &streams).unwrap().update[0], 0.0);
    assert_eq!(local_sgd(&task, 0, &pv(&[0.0]), 3, 0.1, &streams).unwrap().update[0], 0.0);
}

#[test]
fn local_sgd_rejects_byzantine_client() {
    let task = QuadraticTask::from_centers(1.0, vec![pv(&[0.0]); 4], 1, 0.0).unwrap();
    let streams = GradientStreams { master_seed: 1, round: 0 };
    assert!(matches!(
        local_sgd(&task, 0, &pv(&[1.0]), 1, 0.1, &streams),
        Err(FedroError::ByzantineClient(0))
    ));
}

#[test]
fn agreement_makes_attacks_harmless() {
    let attacks = [
        AttackKind::SignFlipping,
        AttackKind::Foe,
        AttackKind::Alie,
        AttackKind::Mimic,
        AttackKind::TakeoverZero,
    ];
    for attack in attacks {
        let task = QuadraticTaskSpec::new(20, 6, 3, 1.0, 0.0, 3).with_offset(1.5);
        let cfg = config(task, 10, 4, Rule::CwTrimmedMean, attack);
        let sim = Simulator::new(&cfg).unwrap();
        let mut x = pv(&[-1.0, 0.5, 2.0]);
        let mut clean_rounds = 0;
        for t in 0..40 {
            let (next, trace) = sim.run_round(&x, t).unwrap();
            if !trace.event_violated {
                clean_rounds += 1;
                assert_eq!(trace.dev_norm_sq, 0.0, "{attack:?} round {t}");
                assert_eq!(trace.honest_spread, 0.0);
                // every honest client computes x - gamma_c L (x - c)
                let mut expected = x.clone();
                let mut step = x.clone();
                step.axpy(-cfg.gamma_c, &sim.task().client_gradient(6, &x).unwrap());
                expected.axpy(cfg.gamma_s, &step.sub(&x));
                assert_eq!(next, expected, "{attack:?} round {t}");
            }
            x = next;
        }
        assert!(clean_rounds > 20);
    }
}

#[test]
fn noiseless_homogeneous_run_follows_linear_contraction() {
    let (l, k, gamma_c) = (2.0, 3usize, 1.0 / (16.0 * 2.0 * 3.0));
    let offset = 0.75;
    let mut cfg = config(
        QuadraticTaskSpec::new(12, 2, 4, l, 0.0, 11).with_offset(offset),
        6,
        2,
        Rule::CwMedian,
        AttackKind::Foe,
    );
    cfg.local_steps = k;
    cfg.gamma_c = gamma_c;
    cfg.rounds = 200;
    cfg.x0 = Some(pv(&[0.0, 1.0, -1.0, 3.0]));
    let metrics = run_fedro(&cfg).unwrap();

    // every clean round maps x - x* to q (x - x*) with q = (1 - gamma_c L)^K
    let q = (1.0 - gamma_c * l).powi(k as i32);
    let mut err: Vec<f64> = cfg.x0.as_ref().unwrap().as_slice().iter().map(|a| a - offset).collect();
    for trace in &metrics.traces {
        let expected: f64 = err.iter().map(|e| (l * e).powi(2)).sum();
        // relative agreement plus a floor for rounding in x - x* near the optimum
        assert!(
            (trace.grad_norm_sq.sqrt() - expected.sqrt()).abs() <= 1e-12 * expected.sqrt() + 1e-14,
            "round {}",
            trace.round
        );
        if trace.event_violated {
            break;
        }
        err.iter_mut().for_each(|e| *e *= q);
    }
    assert!(metrics.traces.iter().all(|t| t.event_violated || t.dev_norm_sq == 0.0));
}

#[test]
fn fedavg_reduction_is_bit_exact() {
    let n = 8;
    let mut cfg = config(
        QuadraticTaskSpec::new(n, 0, 5, 1.3, 0.8, 21).with_sigma(0.7),
        n,
        0,
        Rule::Average,
        AttackKind::SignFlipping,
    );
    cfg.rounds = 60;
    cfg.gamma_c = 0.1;
    let metrics = run_fedro(&cfg).unwrap();

    let task = cfg.task.build().unwrap();
    let mut x = ParameterVector::zeros(5);
    for t in 0..cfg.rounds {
        assert_eq!(metrics.traces[t].grad_norm_sq, task.true_global_gradient(&x).norm_sq());
        let updates: Vec<ParameterVector> = (0..n)
            .map(|i| {
                let mut stream = rng::stream(cfg.master_seed, Purpose::Gradient, &[t as u64, i as u64, 0]);
                let g = task.stochastic_gradient(i, &x, &mut stream).unwrap();
                let mut local = x.clone();
                local.axpy(-cfg.gamma_c, &g);
                local.sub(&x)
            })
            .collect();
        x.axpy(cfg.gamma_s, &average(&updates).unwrap());
    }
    assert_eq!(metrics.final_model, x);
    assert!(metrics.event_held);
}

#[test]
fn metrics_are_consistent() {
    let mut cfg = config(
        QuadraticTaskSpec::new(30, 3, 4, 1.0, 1.0, 5).with_sigma(0.5),
        10,
        3,
        Rule::NnmThen(Box::new(Rule::CwTrimmedMean)),
        AttackKind::Alie,
    );
    cfg.rounds = 80;
    let m = run_fedro(&cfg).unwrap();
    assert_eq!(m.traces.len(), 80);
    let mean = m.traces.iter().map(|t| t.grad_norm_sq).sum::<f64>() / 80.0;
    assert!((m.avg_grad_norm_sq - mean).abs() <= 1e-12 * mean.max(1.0));
    assert!(m.output_round < 80);
    assert_eq!(m.violated_rounds, m.traces.iter().filter(|t| t.event_violated).count());
    assert_eq!(m.event_held, m.violated_rounds == 0);
    for t in &m.traces {
        assert_eq!(t.event_violated, t.byz_sampled > 3);
        assert!(t.grad_norm_sq.is_finite() && t.loss.is_finite());
    }
}

#[test]
fn output_model_is_the_selected_iterate() {
    let mut cfg = config(QuadraticTaskSpec::new(10, 0, 2, 1.0, 1.0, 2), 5, 0, Rule::Average, AttackKind::Foe);
    cfg.rounds = 30;
    let m = run_fedro(&cfg).unwrap();
    let sim = Simulator::new(&cfg).unwrap();
    let mut x = cfg.initial_model();
    for t in 0..m.output_round {
        x = sim.run_round(&x, t).unwrap().0;
    }
    assert_eq!(m.output_model, x);
}

#[test]
fn no_byzantine_clients_means_event_holds() {
    for seed in 0..5 {
        let mut cfg = config(QuadraticTaskSpec::new(9, 0, 2, 1.0, 1.0, seed), 3, 0, Rule::CwMedian, AttackKind::Alie);
        cfg.master_seed = seed;
        let m = run_fedro(&cfg).unwrap();
        assert!(m.event_held);
        assert!(m.traces.iter().all(|t| t.byz_sampled == 0));
        assert_eq!(m.conditional_avg_grad_norm_sq, Some(m.avg_grad_norm_sq));
    }
}

#[test]
fn takeover_mode_resets_model_on_violation() {
    let mut cfg = config(
        QuadraticTaskSpec::new(10, 4, 2, 1.0, 0.0, 1).with_offset(2.0),
        1,
        0,
        Rule::Average,
        AttackKind::SignFlipping,
    );
    cfg.violation_mode = ViolationMode::TakeoverZero;
    let sim = Simulator::new(&cfg).unwrap();
    let mut saw_violation = false;
    for t in 0..30 {
        let x = pv(&[1.0, 1.0]);
        let (next, trace) = sim.run_round(&x, t).unwrap();
        if trace.event_violated {
            saw_violation = true;
            assert_eq!(next, ParameterVector::zeros(2));
            assert!(trace.dev_norm_sq.is_nan());
        } else {
            assert_ne!(next, ParameterVector::zeros(2));
        }
    }
    assert!(saw_violation);
}

#[test]
fn takeover_attack_only_acts_on_violation() {
    let cfg = config(
        QuadraticTaskSpec::new(20, 6, 2, 1.0, 0.0, 1).with_offset(2.0),
        5,
        2,
        Rule::CwMedian,
        AttackKind::TakeoverZero,
    );
    let sim = Simulator::new(&cfg).unwrap();
    let (mut violated, mut clean) = (0, 0);
    for t in 0..60 {
        let (next, trace) = sim.run_round(&pv(&[1.0, 1.0]), t).unwrap();
        if trace.event_violated {
            violated += 1;
            assert_eq!(next, ParameterVector::zeros(2));
        } else {
            clean += 1;
            assert!(next[0] > 1.0);
        }
    }
    assert!(violated > 0 && clean > 0);
}

#[test]
fn runs_are_reproducible_and_thread_count_invariant() {
    let mut cfg = config(
        QuadraticTaskSpec::new(40, 8, 6, 1.0, 2.0, 9).with_sigma(1.0),
        16,
        6,
        Rule::NnmThen(Box::new(Rule::GeometricMedian)),
        AttackKind::Alie,
    );
    cfg.local_steps = 3;
    cfg.rounds = 25;
    let reference = format!("{:?}", run_fedro(&cfg).unwrap());
    assert_eq!(reference, format!("{:?}", run_fedro(&cfg).unwrap()));
    for threads in [1, 3, 8] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let again = pool.install(|| run_fedro(&cfg).unwrap());
        assert_eq!(reference, format!("{again:?}"), "threads = {threads}");
    }
    cfg.master_seed += 1;
    assert_ne!(reference, format!("{:?}", run_fedro(&cfg).unwrap()));
}

#[test]
fn config_validation_names_fields() {
    let base = config(QuadraticTaskSpec::new(10, 2, 2, 1.0, 1.0, 0), 5, 2, Rule::Average, AttackKind::Foe);
    let field_of = |cfg: &RunConfig| match cfg.validate() {
        Err(FedroError::InvalidConfig { field, .. }) => field,
        other => panic!("expected invalid config, got {other:?}"),
    };
    let mut c = base.clone();
    c.n_hat = 11;
    assert_eq!(field_of(&c), "n_hat");
    let mut c = base.clone();
    c.b_hat = 3;
    assert_eq!(field_of(&c), "b_hat");
    let mut c = base.clone();
    c.rounds = 0;
    assert_eq!(field_of(&c), "rounds");
    let mut c = base.clone();
    c.local_steps = 0;
    assert_eq!(field_of(&c), "local_steps");
    let mut c = base.clone();
    c.gamma_c = 0.0;
    assert_eq!(field_of(&c), "gamma_c");
    let mut c = base.clone();
    c.gamma_s = f64::NAN;
    assert_eq!(field_of(&c), "gamma_s");
    let mut c = base.clone();
    c.x0 = Some(pv(&[1.0]));
    assert_eq!(field_of(&c), "x0");
    let mut c = base;
    c.task = TaskSpec::Quadratic(QuadraticTaskSpec::new(10, 5, 2, 1.0, 1.0, 0));
    assert_eq!(field_of(&c), "task.b");
}

#[test]
fn config_json_round_trip_and_unknown_fields() {
    let cfg = config(
        QuadraticTaskSpec::new(10, 2, 2, 1.0, 1.0, 0).with_sigma(0.3),
        5,
        2,
        Rule::NnmThen(Box::new(Rule::CwTrimmedMean)),
        AttackKind::Alie,
    );
    let json = serde_json::to_string(&cfg).unwrap();
    let back: RunConfig = serde_json::from_str(&json).unwrap();
    assert_eq!(back, cfg);

    let mut value: serde_json::Value = serde_json::from_str(&json).unwrap();
    value["task"]["sigmaa"] = 1.0.into();
    assert!(serde_json::from_value::<RunConfig>(value).is_err());
    let mut value: serde_json::Value = serde_json::from_str(&json).unwrap();
    value["extra"] = 1.into();
    assert!(serde_json::from_value::<RunConfig>(value).is_err());
}
