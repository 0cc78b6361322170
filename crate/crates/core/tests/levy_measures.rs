use approx::assert_relative_eq;
use nonlocal_ql::levy_measures::*;
use nonlocal_ql::{Error, LevyMeasureSpec, MeasureFamily, Part};
use std::f64::consts::PI;

fn stable_1d(alpha: f64) -> LevyMeasureSpec {
    LevyMeasureSpec::stable(1, alpha, 1.0)
}

#[test]
fn stable_inner_second_moment_closed_form() {
    let rule = build_quadrature(&stable_1d(0.5), 0.1, 32).unwrap();
    assert_relative_eq!(rule.second_moment_inner, 0.042164, max_relative = 1e-5);
    for alpha in [0.3, 1.0, 1.7, 1.95] {
        let rule = build_quadrature(&stable_1d(alpha), 0.2, 32).unwrap();
        let want = 2.0 * 0.2f64.powf(2.0 - alpha) / (2.0 - alpha);
        assert_relative_eq!(rule.second_moment_inner, want, max_relative = 1e-12);
    }
}

#[test]
fn stable_2d_inner_moments() {
    let spec = LevyMeasureSpec::stable(2, 1.2, 0.7);
    let rule = build_quadrature(&spec, 0.1, 32).unwrap();
    let want = 0.7 * 2.0 * PI * 0.1f64.powf(0.8) / 0.8;
    assert_relative_eq!(rule.second_moment_inner, want, max_relative = 1e-12);
    // isotropy: z z^T integrates to half the trace on each axis
    assert_relative_eq!(rule.quad_moment_inner[0][0], want / 2.0, max_relative = 1e-12);
    assert!(rule.quad_moment_inner[0][1].abs() < 1e-12 * want);
}

#[test]
fn uncompensated_mass_of_unit_stable() {
    let spec = stable_1d(1.0);
    let rule = build_quadrature(&spec, 0.1, 32).unwrap();
    let mass = rule.outer_mass(Part::Uncompensated);
    assert_relative_eq!(mass + rule.tail_mass, 2.0, max_relative = 1e-10);
    assert!(rule.tail_mass / 2.0 <= 1.01e-8);
}

#[test]
fn outer_shells_integrate_powers() {
    for alpha in [0.5, 1.0, 1.5] {
        let rule = build_quadrature(&stable_1d(alpha), 0.05, 32).unwrap();
        for s in [0.0, 1.0, 2.0] {
            let got: f64 = rule.outer_compensated.iter().map(|n| n.weight * n.radius.powf(s)).sum();
            let k = s - alpha;
            let want = if k.abs() < 1e-12 {
                2.0 * (1.0f64 / 0.05).ln()
            } else {
                2.0 * (1.0 - 0.05f64.powf(k)) / k
            };
            assert_relative_eq!(got, want, max_relative = 1e-6);
        }
    }
}

#[test]
fn refinement_is_consistent() {
    let spec = LevyMeasureSpec::stable(2, 1.5, 1.0);
    let coarse = build_quadrature(&spec, 0.1, 16).unwrap();
    let fine = build_quadrature(&spec, 0.1, 64).unwrap();
    assert!(fine.node_count() > coarse.node_count());
    let m = |r: &QuadratureRule| measure_moments(&spec, r);
    assert_relative_eq!(
        m(&coarse).compensated_second_moment,
        m(&fine).compensated_second_moment,
        max_relative = 1e-8
    );
    assert_relative_eq!(m(&coarse).uncompensated_mass, m(&fine).uncompensated_mass, max_relative = 1e-8);
}

#[test]
fn tempered_inner_moment_converges() {
    let t = MeasureFamily::Tempered {
        c: 1.0,
        g: 5.0,
        m: 5.0,
        y: 0.5,
    };
    let spec = LevyMeasureSpec::new(1, Some(t.clone()), Some(t));
    let a = build_quadrature(&spec, 0.1, 16).unwrap();
    let b = build_quadrature(&spec, 0.1, 64).unwrap();
    assert!((a.second_moment_inner - b.second_moment_inner).abs() < 1e-8);
    // e^{-5r} r^{0.5} on (0, 0.1), both sides
    let want = 2.0 * gauss_check(|r| (-5.0 * r).exp() * r.sqrt(), 0.0, 0.1);
    assert_relative_eq!(b.second_moment_inner, want, max_relative = 1e-8);
    assert!(measure_moments(&spec, &b).passes());
}

/// Composite midpoint rule in `sqrt(r)` for a brute-force oracle.
fn gauss_check(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let n = 200_000;
    let (sa, sb) = (a.sqrt(), b.sqrt());
    let h = (sb - sa) / n as f64;
    (0..n)
        .map(|i| {
            let s = sa + (i as f64 + 0.5) * h;
            f(s * s) * 2.0 * s * h
        })
        .sum()
}

#[test]
fn moment_matrix_matches_closed_form() {
    let spec = LevyMeasureSpec::stable(2, 1.0, 1.0);
    let m = moment_matrix(&spec, Part::Compensated, 0.0, 0.5).unwrap();
    let want = PI * 0.5;
    assert_relative_eq!(m[0][0], want, max_relative = 1e-12);
    assert_relative_eq!(m[1][1], want, max_relative = 1e-12);
}

#[test]
fn concentration_constants() {
    let seq = ConcentratingSequence {
        dim_z: 1,
        g0: 1.5,
        g_grad: vec![0.7],
        mu2_cutoff: Mu2Cutoff::Eps,
        n_theta: 16,
    };
    assert_relative_eq!(seq.covariance_factor(), 3.0f64.sqrt(), max_relative = 1e-15);
    assert_relative_eq!(seq.drift_limit()[0], 2.0 * 0.7, max_relative = 1e-15);
    let rows = concentration_limit(&seq, &[vec![1.0]], &[1.0], 0.2, &[0.5, 0.1, 0.01]).unwrap();
    for r in &rows {
        assert_relative_eq!(r.inner_quadratic, seq.quadratic_limit(1.0, 0.2, r.eps), max_relative = 1e-10);
    }
    // the eps-truncated mu_2 loses its first moment: the window (eps, delta) closes
    assert_eq!(rows[0].inner_first_moment, 0.0);
    assert!(rows[2].inner_first_moment < rows[1].inner_first_moment);
    assert!(rows.windows(2).all(|w| w[1].outer_mass < w[0].outer_mass));
    let seq2 = ConcentratingSequence {
        dim_z: 2,
        g0: 1.0,
        g_grad: vec![0.0, 0.0],
        mu2_cutoff: Mu2Cutoff::Absent,
        n_theta: 16,
    };
    assert_relative_eq!(seq2.covariance_factor(), PI.sqrt(), max_relative = 1e-15);
}

#[test]
fn event_counts_match_intensity() {
    let spec = stable_1d(1.0);
    let cutoff = 0.1;
    let horizon = 50.0;
    let s = sample_jumps(&spec, cutoff, horizon, 3).unwrap();
    // |z| > 0.1 for the unit stable measure has mass 2 / 0.1
    assert_relative_eq!(s.rate, 20.0, max_relative = 1e-6);
    let mean = s.rate * horizon;
    assert!((s.events.len() as f64 - mean).abs() < 4.0 * mean.sqrt());
    assert!(s.events.windows(2).all(|w| w[0].time <= w[1].time));
    assert!(s.events.iter().all(|e| e.z[0].abs() >= cutoff && e.time < horizon));
    // symmetric measure: no compensator drift
    assert!(s.compensator_drift[0].abs() < 1e-12);
    let inside = s.events.iter().filter(|e| e.part == Part::Compensated).count() as f64;
    let p_inner = (20.0 - 2.0) / 20.0;
    let n = s.events.len() as f64;
    assert!((inside / n - p_inner).abs() < 4.0 * (p_inner * (1.0 - p_inner) / n).sqrt());
}

#[test]
fn sampling_is_seeded() {
    let spec = LevyMeasureSpec::stable(2, 1.3, 1.0);
    let a = sample_jumps(&spec, 0.2, 5.0, 11).unwrap();
    let b = sample_jumps(&spec, 0.2, 5.0, 11).unwrap();
    let c = sample_jumps(&spec, 0.2, 5.0, 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn invalid_specs_rejected() {
    assert_eq!(
        build_quadrature(&LevyMeasureSpec::stable(3, 1.0, 1.0), 0.1, 16),
        Err(Error::UnsupportedDimension(3))
    );
    assert!(matches!(
        build_quadrature(&stable_1d(0.0), 0.1, 16),
        Err(Error::InvalidParameter { name: "alpha", .. })
    ));
    assert_eq!(sample_jumps(&stable_1d(1.0), 0.0, 1.0, 0).unwrap_err(), Error::InfiniteMass);
}
