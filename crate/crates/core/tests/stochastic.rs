use nonlocal_ql::numerics::fractional_constant;
use nonlocal_ql::stochastic::*;
use nonlocal_ql::*;

fn identity_1d() -> (JumpMapSpec, LevyMeasureSpec) {
    (
        JumpMapSpec::new(JumpFamily::Identity, 1),
        LevyMeasureSpec::fractional(1, 1.5),
    )
}

fn cosine() -> AnalyticField {
    AnalyticField::new(1, |x| x[0].cos())
}

#[test]
fn killed_cosine_matches_truncated_symbol() {
    // E cos(X_T) = 1 / (1 + psi_c(1)) with psi_c the symbol of the jumps above the cutoff
    let (jump, measure) = identity_1d();
    let (alpha, c): (f64, f64) = (1.5, 0.01);
    let k = 2.0 * fractional_constant(1, alpha);
    let dropped = k * (c.powf(2.0 - alpha) / (2.0 * (2.0 - alpha)) - c.powf(4.0 - alpha) / (24.0 * (4.0 - alpha)));
    let want = 1.0 / (2.0 - dropped);
    let cfg = PathConfig::new(c, 40_000, 17);
    let est = estimate_value(&[0.0], &cosine(), &FrozenGradient::Constant(vec![0.0]), &jump, &measure, &cfg).unwrap();
    assert!((est.mean - want).abs() < 4.0 * est.std_error, "{} +- {} vs {want}", est.mean, est.std_error);
    assert!(est.bias_bound > 0.0);
}

#[test]
fn constant_payoff_is_exact() {
    let (jump, measure) = identity_1d();
    let f = AnalyticField::new(1, |_| 0.3);
    let cfg = PathConfig::new(0.05, 500, 1);
    let est = estimate_value(&[0.2], &f, &FrozenGradient::Constant(vec![0.0]), &jump, &measure, &cfg).unwrap();
    assert_eq!(est.mean, 0.3);
    assert_eq!(est.std_error, 0.0);
}

#[test]
fn killing_and_time_integral_agree() {
    let (jump, measure) = identity_1d();
    let mut cfg = PathConfig::new(0.02, 20_000, 5);
    cfg.max_horizon = 12.0;
    let grad = FrozenGradient::Constant(vec![0.0]);
    let a = estimate_value(&[0.5], &cosine(), &grad, &jump, &measure, &cfg).unwrap();
    let b = estimate_value_time_integral(&[0.5], &cosine(), &grad, &jump, &measure, &cfg).unwrap();
    let se = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
    assert!((a.mean - b.mean).abs() < 3.0 * se, "{} vs {}", a.mean, b.mean);
}

#[test]
fn independent_of_thread_count() {
    let (jump, measure) = identity_1d();
    let cfg = PathConfig::new(0.05, 2_000, 99);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| estimate_value(&[0.0], &cosine(), &FrozenGradient::Constant(vec![0.0]), &jump, &measure, &cfg).unwrap())
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn zero_gradient_freezes_directional_paths() {
    let jump = JumpMapSpec::new(JumpFamily::DirectionalGradient, 2);
    let measure = LevyMeasureSpec::fractional(1, 1.2);
    let cfg = PathConfig::new(0.05, 100, 0);
    let path = simulate_path(&[0.3, -0.4], &FrozenGradient::Constant(vec![0.0, 0.0]), &jump, &measure, 5.0, &cfg, 2).unwrap();
    assert_eq!(path.final_state(), [0.3, -0.4]);
    let moved = simulate_path(&[0.3, -0.4], &FrozenGradient::Constant(vec![1.0, 0.0]), &jump, &measure, 5.0, &cfg, 2).unwrap();
    let end = moved.final_state();
    assert_ne!(end[0], 0.3);
    assert_eq!(end[1], -0.4);
}

#[test]
fn unsupported_families_rejected() {
    let measure = LevyMeasureSpec::fractional(1, 1.2);
    let cfg = PathConfig::new(0.05, 100, 0);
    let jump = JumpMapSpec::new(JumpFamily::ExponentialCompensator, 1);
    let grad = FrozenGradient::Constant(vec![1.0]);
    assert!(simulate_path(&[0.0], &grad, &jump, &measure, 1.0, &cfg, 0).is_err());
    assert!(PathConfig::new(0.05, 10, 0).validate().is_err());
    assert!(PathConfig::new(0.0, 100, 0).validate().is_err());
}

#[test]
fn csv_header() {
    let mut buf = Vec::new();
    write_mc_csv(&[], &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap(), "x,pde_value,mc_mean,mc_stderr,agree_flag\n");
}
