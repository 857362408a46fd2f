//! Acceptance gate: one test per shipped guarantee, each printing a single
//! PASS line with the measured margin when it holds. Tolerances and runtime
//! budgets are asserted, not aspirational.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use soliton_forge::chart::{fd_curvature_oracle, ChartMetric};
use soliton_forge::contact::{
    classify, deformed_ricci, phi_sectional, AlmostContactStructure, DeformationParams,
    StructureTag, CLASSIFY_TOL,
};
use soliton_forge::identities::{
    hess_eigenvalue_clusters, rectifiability_report, soliton_identities, SolitonSample,
};
use soliton_forge::models::{
    cigar_soliton, gaussian_soliton, round_sphere_hypersurface, tanno_model, ModelId,
};
use soliton_forge::tube::{
    boundary_check, calabi_base, calabi_to_tube, soliton_residual, solve_alpha, tube_chart_calabi,
    tube_ricci, BoundaryClass, ClosedFormProfile, Endpoint, SolitonProblem, WarpedProductMetric,
};

fn problem(lambda: f64, b: f64, c: f64, a: f64, s_min: f64, s_max: f64) -> SolitonProblem {
    SolitonProblem {
        lambda,
        k: 4.0,
        n: 1,
        a,
        b,
        c,
        s_min,
        s_max,
    }
}

/// The three pipeline problems spanning expanding, steady, and shrinking.
fn pipeline_problems() -> [(SolitonProblem, f64); 3] {
    [
        (problem(1.0, 0.0, 0.0, 0.0, 0.2, 2.8), 0.4),
        (problem(0.0, 0.25, 0.1, 0.0, 0.2, 2.0), 0.5),
        (problem(-1.0, 0.4, -0.3, 0.4, 0.3, 2.1), 1.2),
    ]
}

fn contact_trio() -> [(ModelId, f64); 3] {
    [
        (ModelId::Sphere3, 1.0),
        (ModelId::SL2RCover, -4.0),
        (ModelId::Nil3, -3.0),
    ]
}

#[test]
fn criterion_01_phi_sectional_values() {
    let clock = Instant::now();
    let mut worst: f64 = 0.0;
    for (id, expected) in contact_trio() {
        let acs = tanno_model(id).unwrap();
        let mut x = DVector::zeros(acs.dim());
        x[1] = 1.0;
        let value = phi_sectional(&acs, &x).unwrap();
        worst = worst.max((value - expected).abs());
        assert!(
            (value - expected).abs() < 1e-10,
            "{}: phi-sectional {value} vs {expected}",
            id.cli_name()
        );
    }
    let elapsed = clock.elapsed().as_secs_f64();
    assert!(elapsed < 1.0, "runtime {elapsed:.2}s exceeds 1s");
    println!("[criterion 01] PASS phi-sectional (1, -4, -3), worst gap {worst:.2e}, {elapsed:.2}s");
}

#[test]
fn criterion_02_deformed_ricci_matches_frame_curvature() {
    let clock = Instant::now();
    let models: Vec<(String, AlmostContactStructure)> = vec![
        ("sphere3".into(), tanno_model(ModelId::Sphere3).unwrap()),
        ("sl2r".into(), tanno_model(ModelId::SL2RCover).unwrap()),
        ("nil3".into(), tanno_model(ModelId::Nil3).unwrap()),
        (
            "hopf-hypersurface".into(),
            round_sphere_hypersurface(1.0).unwrap().0,
        ),
    ];
    let mut rng = StdRng::seed_from_u64(42);
    let mut worst_gap: f64 = 0.0;
    let mut worst_reeb: f64 = 0.0;
    for (name, acs) in &models {
        for _ in 0..20 {
            let h: f64 = rng.gen_range(0.2..5.0);
            let f: f64 = rng.gen_range(0.2..5.0);
            let params = DeformationParams::new(1.0, h, f).unwrap();
            let report = deformed_ricci(acs, &params).unwrap();
            let gap = report.residual_norms["ricci_closed_vs_exact"];
            worst_gap = worst_gap.max(gap);
            assert!(gap < 1e-8, "{name} (H={h:.3}, F={f:.3}): ricci gap {gap:e}");

            // Rc*(zeta*, zeta*) = (H^2/F^4)(dim - 1) against the exact
            // frame curvature of the deformed metric, to rounding.
            let d = acs.dim() as f64;
            let zeta = &report.deformed.zeta;
            let exact_reeb = (zeta.transpose() * &report.exact.ricci * zeta)[(0, 0)];
            let closed = (d - 1.0) * h * h / f.powi(4);
            let reeb_gap = (exact_reeb - closed).abs() / (1.0 + closed.abs());
            worst_reeb = worst_reeb.max(reeb_gap);
            assert!(
                reeb_gap < 1e-12,
                "{name}: Rc(zeta, zeta) {exact_reeb} vs closed {closed}"
            );
        }
    }
    let elapsed = clock.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "runtime {elapsed:.2}s exceeds 10s");
    println!(
        "[criterion 02] PASS deformed Ricci vs frame curvature, worst gap {worst_gap:.2e}, reeb gap {worst_reeb:.2e}, {elapsed:.2}s"
    );
}

#[test]
fn criterion_03_classifier_covariance() {
    let clock = Instant::now();
    let mut worst: f64 = 0.0;
    for (id, _) in contact_trio() {
        let acs = tanno_model(id).unwrap();
        let b0 = classify(&acs, CLASSIFY_TOL).unwrap().b;
        for sign in [1.0, -1.0] {
            for c in [0.25, 0.5, 2.0, 4.0] {
                let params = DeformationParams::new(sign, 1.0, c).unwrap();
                let deformed = acs.hf_deform(&params).unwrap();
                let class = classify(&deformed, CLASSIFY_TOL).unwrap();
                let expected = sign * b0 / (c * c);
                let gap = (class.b - expected).abs();
                worst = worst.max(gap);
                assert!(
                    gap < 1e-8,
                    "{}: sign {sign}, c {c}: b {} vs {expected}",
                    id.cli_name(),
                    class.b
                );
            }
        }
    }
    let elapsed = clock.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "runtime {elapsed:.2}s exceeds 5s");
    println!("[criterion 03] PASS classifier covariance b -> +-b/c^2, worst gap {worst:.2e}, {elapsed:.2}s");
}

#[test]
fn criterion_04_ode_route_agreement() {
    let clock = Instant::now();
    let mut worst: f64 = 0.0;
    for (p, alpha_init) in pipeline_problems() {
        let ap = solve_alpha(&p, alpha_init).unwrap();
        worst = worst.max(ap.route_gap);
        assert!(
            ap.route_gap < 1e-8,
            "lambda {}: integrating-factor and adaptive routes differ by {:e}",
            p.lambda,
            ap.route_gap
        );
    }
    let elapsed = clock.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "runtime {elapsed:.2}s exceeds 10s");
    println!("[criterion 04] PASS dual ODE routes agree, worst sup gap {worst:.2e}, {elapsed:.2}s");
}

#[test]
fn criterion_05_end_to_end_residual_and_oracle() {
    let clock = Instant::now();
    let mut worst_res: f64 = 0.0;
    let mut worst_oracle: f64 = 0.0;
    for (p, alpha_init) in pipeline_problems() {
        let ap = solve_alpha(&p, alpha_init).unwrap();
        let w = calabi_to_tube(&ap, &p).unwrap();
        let res = soliton_residual(&w, &p, 200).unwrap();
        worst_res = worst_res.max(res.worst_primary());
        assert!(
            res.worst_primary() < 1e-6,
            "lambda {}: soliton residual {:e}",
            p.lambda,
            res.worst_primary()
        );

        // Closed-form tube Ricci against an independent finite-difference
        // oracle on the assembled 4D chart, at 10 interior points.
        let (chart, _j) = tube_chart_calabi(&p, alpha_init).unwrap();
        let span = w.t_max - w.t_min;
        let s_of = |t: f64| {
            let fw = w.f_warp.value(t);
            (fw * fw - p.a) / 2.0
        };
        for q in 0..10 {
            let t = w.t_min + span * (0.15 + 0.7 * q as f64 / 9.0);
            let s = s_of(t);
            let theta = 1.1 + 0.05 * q as f64;
            let x = [s, 0.3 + 0.04 * q as f64, theta, 0.8];
            let g = chart.metric(&x).unwrap();
            let alpha_c = 1.0 / g[(0, 0)];
            let wv = 2.0 * s + p.a;
            let frame = [
                DVector::from_vec(vec![alpha_c.sqrt(), 0.0, 0.0, 0.0]),
                DVector::from_vec(vec![0.0, 2.0 / alpha_c.sqrt(), 0.0, 0.0]),
                DVector::from_vec(vec![0.0, 0.0, 2.0 / wv.sqrt(), 0.0]),
                DVector::from_vec(vec![
                    0.0,
                    -2.0 * theta.cos() / (wv.sqrt() * theta.sin()),
                    0.0,
                    2.0 / (wv.sqrt() * theta.sin()),
                ]),
            ];
            for i in 0..4 {
                for j in 0..4 {
                    let expect = f64::from(u8::from(i == j));
                    let inner = chart.inner(&x, &frame[i], &frame[j]).unwrap();
                    assert!(
                        (inner - expect).abs() < 1e-10,
                        "frame not orthonormal at slot ({i},{j}): {inner}"
                    );
                }
            }
            let oracle = fd_curvature_oracle(&chart, &x, 1e-3).unwrap();
            let closed = tube_ricci(&w, t).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    let o = (frame[i].transpose() * &oracle.ricci * &frame[j])[(0, 0)];
                    let gap = (o - closed.full[(i, j)]).abs();
                    worst_oracle = worst_oracle.max(gap);
                    assert!(
                        gap < 1e-5,
                        "lambda {}: Ricci slot ({i},{j}) oracle {o} vs closed {}",
                        p.lambda,
                        closed.full[(i, j)]
                    );
                }
            }
        }
    }
    let elapsed = clock.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "runtime {elapsed:.2}s exceeds 60s");
    println!(
        "[criterion 05] PASS end-to-end residual {worst_res:.2e}, Ricci oracle gap {worst_oracle:.2e}, {elapsed:.2}s"
    );
}

#[test]
fn criterion_06_warp_constraint_everywhere() {
    let mut worst: f64 = 0.0;
    // The three regular pipelines plus the singular point-collapse launch.
    let mut runs = pipeline_problems().to_vec();
    runs.push((problem(0.6, 0.6, 0.0, 0.0, 0.0, 1.8), 0.0));
    for (p, alpha_init) in runs {
        let ap = solve_alpha(&p, alpha_init).unwrap();
        let w = calabi_to_tube(&ap, &p).unwrap();
        let res = soliton_residual(&w, &p, 200).unwrap();
        worst = worst.max(res.sup["r3"]);
        assert!(
            res.sup["r3"] < 1e-8,
            "lambda {}: FF' - H reaches {:e}",
            p.lambda,
            res.sup["r3"]
        );
    }
    println!("[criterion 06] PASS FF' = H along all pipeline outputs, worst {worst:.2e}");
}

#[test]
fn criterion_07_identity_suite() {
    let gaussian = SolitonSample::from_model(&gaussian_soliton(4, 1.0).unwrap()).unwrap();
    let g_rep = soliton_identities(&gaussian).unwrap();
    assert!(
        g_rep.worst() < 1e-8,
        "gaussian identities {:e}",
        g_rep.worst()
    );

    let cigar = SolitonSample::from_model(&cigar_soliton()).unwrap();
    let c_rep = soliton_identities(&cigar).unwrap();
    assert!(c_rep.worst() < 1e-6, "cigar identities {:e}", c_rep.worst());

    let mut worst_tube: f64 = 0.0;
    for (p, alpha_init) in pipeline_problems() {
        let sample = SolitonSample::from_tube_problem(&p, alpha_init, 4, 2).unwrap();
        let rep = soliton_identities(&sample).unwrap();
        worst_tube = worst_tube.max(rep.worst());
        assert!(
            rep.worst() < 1e-5,
            "lambda {}: pipeline identities {:e}",
            p.lambda,
            rep.worst()
        );
    }
    println!(
        "[criterion 07] PASS identity suite: gaussian {:.2e}, cigar {:.2e}, pipeline {:.2e}",
        g_rep.worst(),
        c_rep.worst(),
        worst_tube
    );
}

#[test]
fn criterion_08_rectifiability_trichotomy() {
    // All three equivalent conditions pass on every certified soliton.
    let mut certified: Vec<(String, SolitonSample)> = vec![
        (
            "gaussian".into(),
            SolitonSample::from_model(&gaussian_soliton(4, 1.0).unwrap()).unwrap(),
        ),
        (
            "cigar".into(),
            SolitonSample::from_model(&cigar_soliton()).unwrap(),
        ),
    ];
    for (p, alpha_init) in pipeline_problems() {
        certified.push((
            format!("tube lambda {}", p.lambda),
            SolitonSample::from_tube_problem(&p, alpha_init, 4, 2).unwrap(),
        ));
    }
    for (name, sample) in &certified {
        let rep = rectifiability_report(sample).unwrap();
        assert!(
            rep.passes.iter().all(|&b| b) && rep.consistent,
            "{name}: trichotomy {:?}",
            rep.passes
        );
    }

    // Negative control: conformal bump over flat space with a quadratic
    // potential is not a soliton; all three conditions must fail together.
    let chart = ChartMetric::new(
        4,
        Arc::new(|x: &[f64]| {
            let bump = 1.0 + 0.1 * x[0].sin() * x[1].cos();
            DMatrix::identity(4, 4) * bump
        }),
    )
    .with_scalar_field(Arc::new(|x: &[f64]| {
        0.5 * x.iter().map(|v| v * v).sum::<f64>()
    }));
    let pts = vec![
        vec![0.4, 0.3, 0.2, 0.5],
        vec![-0.3, 0.6, 0.1, -0.2],
        vec![0.2, -0.5, 0.4, 0.3],
    ];
    let control = SolitonSample::from_chart(chart, 1.0, pts).unwrap();
    let rep = rectifiability_report(&control).unwrap();
    assert!(
        rep.passes.iter().all(|&b| !b) && rep.consistent,
        "negative control should fail all three: {:?}",
        rep.passes
    );
    println!(
        "[criterion 08] PASS rectifiability trichotomy on {} solitons, all-fail on control",
        certified.len()
    );
}

#[test]
fn criterion_09_hessian_eigenvalue_pairs() {
    let mut worst: f64 = 0.0;
    for (p, alpha_init) in pipeline_problems() {
        if p.b == 0.0 {
            // Constant potential: Hess f = 0 and the pairing is trivial.
            continue;
        }
        let sample = SolitonSample::from_tube_problem(&p, alpha_init, 4, 3).unwrap();
        let rep = hess_eigenvalue_clusters(&sample).unwrap();
        worst = worst.max(rep.worst_cluster_dev);
        assert!(
            rep.pairs_confirmed && rep.worst_cluster_dev < 1e-7,
            "lambda {}: cluster deviation {:e}",
            p.lambda,
            rep.worst_cluster_dev
        );
    }
    println!("[criterion 09] PASS Hess f eigenvalues pair (mu1, mu1, mu2, mu2), worst deviation {worst:.2e}");
}

#[test]
fn criterion_10_boundary_classification() {
    // Point collapse: singular launch alpha(0) = 0 with the unit-sphere base.
    let p = problem(0.6, 0.6, 0.0, 0.0, 0.0, 1.8);
    let ap = solve_alpha(&p, 0.0).unwrap();
    let w = calabi_to_tube(&ap, &p).unwrap();
    let lower = boundary_check(&w, Endpoint::Lower).unwrap();
    assert_eq!(lower.class, BoundaryClass::SmoothPoint);
    assert!(
        (lower.h_prime_limit - 1.0).abs() < 1e-4,
        "H'(0) = {}",
        lower.h_prime_limit
    );
    assert!(
        (lower.f_prime_limit - 1.0).abs() < 1e-4,
        "F'(0) = {}",
        lower.f_prime_limit
    );

    // The collapsing base is the standard Sasakian sphere: Sasakian type
    // with b = 1 and Phi-sectional curvature 1.
    let class = classify(&w.base, CLASSIFY_TOL).unwrap();
    assert_eq!(class.tag, StructureTag::DeformedSasakian);
    assert!((class.b - 1.0).abs() < 1e-8, "base b = {}", class.b);
    let mut x = DVector::zeros(w.base.dim());
    x[1] = 1.0;
    let k = phi_sectional(&w.base, &x).unwrap();
    assert!((k - 1.0).abs() < 1e-8, "base phi-sectional {k}");

    // Circle collapse: the fiber circle dies at unit slope while the
    // transverse directions survive.
    let circle = WarpedProductMetric::new(
        0.0,
        2.0,
        Arc::new(ClosedFormProfile::new(
            |t: f64| t.tanh(),
            |t: f64| 1.0 / t.cosh().powi(2),
            |t: f64| -2.0 * t.tanh() / t.cosh().powi(2),
        )),
        Arc::new(ClosedFormProfile::new(
            |t: f64| (1.0 + t * t).sqrt(),
            |t: f64| t / (1.0 + t * t).sqrt(),
            |t: f64| (1.0 + t * t).powf(-1.5),
        )),
        Arc::new(ClosedFormProfile::new(|_| 0.0, |_| 0.0, |_| 0.0)),
        calabi_base(4.0).unwrap(),
    )
    .unwrap();
    let report = boundary_check(&circle, Endpoint::Lower).unwrap();
    assert_eq!(report.class, BoundaryClass::SmoothCircleCollapse);

    println!(
        "[criterion 10] PASS point collapse SmoothPoint (H'(0) = {:.6}, F'(0) = {:.6}), circle collapse SmoothCircleCollapse",
        lower.h_prime_limit, lower.f_prime_limit
    );
}

/// Shared negative-direction coverage: the identity suite must not be
/// fooled by a sample that merely looks plausible.
#[test]
fn perturbed_tube_is_rejected_by_residuals() {
    let (p, alpha_init) = pipeline_problems()[1];
    let ap = solve_alpha(&p, alpha_init).unwrap();
    let w = calabi_to_tube(&ap, &p).unwrap();
    // A 1% stretch of the fiber warp breaks the soliton system.
    let stretched = WarpedProductMetric::new(
        w.t_min,
        w.t_max,
        Arc::new(ScaledProfile {
            inner: w.h.clone(),
            scale: 1.01,
        }),
        w.f_warp.clone(),
        w.potential.clone(),
        w.base.clone(),
    )
    .unwrap();
    let res = soliton_residual(&stretched, &p, 200).unwrap();
    assert!(
        res.worst_primary() > 1e-3,
        "perturbation went unnoticed: {:e}",
        res.worst_primary()
    );
}

struct ScaledProfile {
    inner: Arc<dyn soliton_forge::tube::Profile>,
    scale: f64,
}

impl soliton_forge::tube::Profile for ScaledProfile {
    fn value(&self, t: f64) -> f64 {
        self.scale * self.inner.value(t)
    }
    fn d1(&self, t: f64) -> f64 {
        self.scale * self.inner.d1(t)
    }
    fn d2(&self, t: f64) -> f64 {
        self.scale * self.inner.d2(t)
    }
}
