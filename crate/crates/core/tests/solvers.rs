use nonlocal_ql::jump_maps::LocalOperatorSpec;
use nonlocal_ql::solvers::*;
use nonlocal_ql::*;

fn fractional_problem(rhs: GridField, alpha: f64) -> ProblemSpec {
    let jump = JumpMapSpec::new(JumpFamily::Identity, rhs.grid.dim);
    let measure = LevyMeasureSpec::fractional(rhs.grid.dim, alpha);
    let op = OperatorConfig::new(jump, measure, 0.1, 32, Boundary::ProjectToBall).unwrap();
    ProblemSpec::new(rhs, op)
}

fn center(u: &GridField) -> f64 {
    u.values[u.grid.len() / 2]
}

#[test]
fn zero_rhs_gives_zero() {
    let grid = GridSpec::new(1, 3.0, 61).unwrap();
    let (u, report) = picard_solve_linear(&fractional_problem(grid.zeros(), 1.2)).unwrap();
    assert!(report.converged);
    assert_eq!(u.sup_norm(), 0.0);
}

#[test]
fn cosine_resolvent_matches_symbol() {
    // u - L u - eps u'' = cos x has u = cos x / (1 + |1|^alpha + eps) away from the boundary
    let grid = GridSpec::new(1, 8.0, 321).unwrap();
    let mut problem = fractional_problem(grid.sample(|x| x[0].cos()), 1.5);
    problem.picard.tol = 1e-9;
    let (u, report) = picard_solve_linear(&problem).unwrap();
    assert!(report.converged);
    let want = 1.0 / (2.0 + problem.eps_visc);
    assert!((center(&u) - want).abs() < 0.05 * want, "{} vs {want}", center(&u));
    assert!(report.max_principle_pass());
}

#[test]
fn uniqueness_check_reports_small_gap() {
    let grid = GridSpec::new(1, 3.0, 61).unwrap();
    let mut problem = fractional_problem(grid.sample(|x| (-x[0] * x[0]).exp()), 1.0);
    problem.picard.uniqueness_check = true;
    let (_, report) = picard_solve_linear(&problem).unwrap();
    assert!(report.uniqueness_gap.is_some());
    assert!(report.uniqueness_pass());
}

#[test]
fn march_rejects_unstable_step() {
    let grid = GridSpec::new(1, 3.0, 61).unwrap();
    let mut problem = fractional_problem(grid.sample(|x| (-x[0] * x[0]).exp()), 1.0);
    problem.march.dt = Some(10.0);
    assert!(matches!(parabolic_march(&problem), Err(Error::CflViolation { dt, .. }) if dt == 10.0));
}

#[test]
fn heat_flow_decays() {
    let grid = GridSpec::new(1, 3.0, 61).unwrap();
    let mut problem = fractional_problem(grid.zeros(), 1.5);
    problem.u0 = Some(grid.sample(|x| (-2.0 * x[0] * x[0]).exp()));
    problem.march.t_final = 1.0;
    problem.march.snapshot_times = vec![0.25, 0.5, 1.0];
    let (out, _) = parabolic_march(&problem).unwrap();
    assert_eq!(out.snapshots.len(), 3);
    let norms: Vec<f64> = out.snapshots.iter().map(|(_, u)| u.sup_norm()).collect();
    assert!(norms.windows(2).all(|w| w[1] < w[0]), "{norms:?}");
    assert!(norms[2] < (-1.0f64).exp());
}

#[test]
fn screened_poisson_on_eigenfunction() {
    let (r, n) = (2.0, 41);
    let grid = GridSpec::new(2, r, n).unwrap();
    let h = grid.spacing();
    let k = std::f64::consts::PI / (2.0 * r);
    let phi = |x: &[f64]| ((x[0] + r) * k).sin() * ((x[1] + r) * 2.0 * k).sin();
    let rhs = grid.sample(phi);
    let lam = |k: f64| 4.0 / (h * h) * (k * h / 2.0).sin().powi(2);
    let eps = 0.3;
    let w = solve_screened_poisson(&rhs, eps).unwrap();
    let scale = 1.0 / (1.0 + eps * (lam(k) + lam(2.0 * k)));
    let err = w
        .values
        .iter()
        .zip(&rhs.values)
        .map(|(a, b)| (a - scale * b).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-8, "{err}");
    assert!(solve_screened_poisson(&rhs, 0.0).is_err());
}

#[test]
fn local_reference_for_laplacian() {
    // u - u''/2 - eps u'' = cos x; cos vanishes on the boundary so the discrete solution is exact
    let grid = GridSpec::new(1, 2.5 * std::f64::consts::PI, 321).unwrap();
    let h = grid.spacing();
    let local = LocalOperatorSpec::isotropic(JumpMapSpec::new(JumpFamily::Identity, 1), 1.0, 0.0, &[]);
    let eps = 0.01;
    let march = MarchParams {
        tol: 1e-10,
        ..MarchParams::default()
    };
    let (u, report) = solve_local_reference(&local, &grid.sample(|x| x[0].cos()), &NonlinearitySpec::linear(), &march, eps).unwrap();
    assert!(report.converged);
    let symbol = (2.0 - 2.0 * h.cos()) / (h * h);
    let want = 1.0 / (1.0 + (0.5 + eps) * symbol);
    assert!((center(&u) - want).abs() < 1e-8, "{} vs {want}", center(&u));
}

#[test]
fn nonlinearity_validation() {
    let bad = NonlinearitySpec {
        form: NonlinearityForm::Custom {
            table: vec![(0.0, 1.0), (1.0, 0.0)],
        },
        gamma: 1.0,
    };
    assert!(bad.validate().is_err());
    let ok = NonlinearitySpec {
        form: NonlinearityForm::Custom {
            table: vec![(-1.0, -2.0), (1.0, 2.0)],
        },
        gamma: 1.0,
    };
    assert_eq!(ok.phi(3.0), 6.0);
    assert_eq!(ok.phi_lipschitz(1.0), 2.0);
    assert_eq!(NonlinearitySpec::exponential().eval(1.0, 0.0), 1.0);
}

#[test]
fn fully_nonlinear_linear_case_matches_picard() {
    let grid = GridSpec::new(1, 3.0, 61).unwrap();
    let mut problem = fractional_problem(grid.sample(|x| (-x[0] * x[0]).exp()), 1.3);
    problem.picard.tol = 1e-9;
    problem.march.tol = 1e-9;
    problem.march.max_steps = 20_000;
    let (a, _) = picard_solve_linear(&problem).unwrap();
    let (b, report) = solve_fully_nonlinear(&problem).unwrap();
    assert!(report.converged);
    let d = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(d < 1e-7, "{d}");
}
