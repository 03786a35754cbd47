use std::f64::consts::PI;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::*;
use crate::dynamics::{g2_resonant, DampingRegime};
use crate::error::Error;
use crate::models::{BoltzmannModel, LogisticLinewidthModel};
use crate::types::{hz_to_angular, CorrelationCurve, DetuningDistribution, EmitterParams, PhysicalConstants};

const GAMMA: f64 = 2.0 * PI * 109e6;

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn poisson(mean: f64, rng: &mut ChaCha8Rng) -> f64 {
    if mean <= 0.0 {
        0.0
    } else {
        Poisson::new(mean).unwrap().sample(rng)
    }
}

#[test]
fn exact_line() {
    let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
    let y: Vec<f64> = x.iter().map(|x| 2.0 * x + 1.0).collect();
    let f = fit(&FitProblem::new(Box::new(Line), x, y, vec![0.5, 0.0])).unwrap();
    assert!(f.converged);
    assert!((f.value("slope").unwrap() - 2.0).abs() < 1e-10);
    assert!((f.value("intercept").unwrap() - 1.0).abs() < 1e-10);
    assert!(f.covariance.iter().flatten().all(|c| c.abs() < 1e-20));
}

fn noiseless_round_trip(kind: ModelKind, x: Vec<f64>, truth: Vec<f64>, guess: Vec<f64>, tol: f64) {
    let dist = DetuningDistribution::new(hz_to_angular(150e6), 0.0).unwrap();
    let y = kind.build(GAMMA, dist).eval(&x, &truth).unwrap();
    let f = fit(&FitProblem::new(kind.build(GAMMA, dist), x, y, guess)).unwrap();
    assert!(f.converged, "{kind:?} did not converge");
    for (p, t) in f.params.iter().zip(&truth) {
        assert!(relative(p.value, *t) < tol, "{kind:?} {}: {} vs {t}", p.name, p.value);
    }
}

#[test]
fn registry_recovers_noiseless_data() {
    let temps: Vec<f64> = (1..=60).map(|i| 5.0 * i as f64).collect();
    let kb = PhysicalConstants::K_B;
    noiseless_round_trip(ModelKind::Line, temps.clone(), vec![-0.3, 4.0], vec![1.0, 1.0], 1e-10);
    noiseless_round_trip(
        ModelKind::Boltzmann,
        temps.clone(),
        vec![2.42e12, -1.9e12, 60.0 * kb],
        vec![2.0e12, -1.0e12, 40.0 * kb],
        1e-8,
    );
    noiseless_round_trip(ModelKind::Cubic, temps.clone(), vec![1.01e9, 40.0], vec![5e8, 10.0], 1e-10);
    noiseless_round_trip(
        ModelKind::Logistic,
        temps.clone(),
        vec![109e6, 3e9, 8.0, 3.6, 0.8],
        vec![100e6, 2.5e9, 6.0, 3.4, 1.0],
        1e-7,
    );
    let powers: Vec<f64> = (1..=30).map(|i| 0.5e-6 * i as f64).collect();
    noiseless_round_trip(ModelKind::Saturation, powers, vec![2.0e5, 3e-6], vec![1.0e5, 1e-6], 1e-9);
    let freqs: Vec<f64> = (-100..=100).map(|i| 5e6 * i as f64).collect();
    noiseless_round_trip(
        ModelKind::Lorentzian,
        freqs.clone(),
        vec![500.0, 20e6, 112e6, 10.0],
        vec![400.0, 0.0, 80e6, 0.0],
        1e-8,
    );
    noiseless_round_trip(
        ModelKind::Gaussian,
        freqs,
        vec![500.0, -30e6, 300e6, 10.0],
        vec![400.0, 0.0, 200e6, 0.0],
        1e-8,
    );
    let taus: Vec<f64> = (-100..=100).map(|i| 0.1e-9 * i as f64).collect();
    for kind in [ModelKind::G2Resonant, ModelKind::G2Diffused] {
        noiseless_round_trip(
            kind,
            taus.clone(),
            vec![1000.0, hz_to_angular(400e6), hz_to_angular(160e6)],
            vec![900.0, hz_to_angular(330e6), hz_to_angular(100e6)],
            1e-7,
        );
    }
}

#[test]
fn lorentzian_width_to_one_ppm() {
    let x: Vec<f64> = (-200..=200).map(|i| 2e6 * i as f64).collect();
    let truth = [1.0, 0.0, 112e6, 0.0];
    let y = Lorentzian.eval(&x, &truth).unwrap();
    let f = fit(&FitProblem::new(Box::new(Lorentzian), x, y, vec![0.8, 5e6, 90e6, 0.01])).unwrap();
    assert!(relative(f.value("fwhm").unwrap(), 112e6) < 1e-6);
}

#[test]
fn covariance_scales_as_inverse_length() {
    let variance = |n: usize, seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 50.0).unwrap();
        let x: Vec<f64> = (0..n).map(|i| 10e-6 * (i as f64 + 0.5) / n as f64).collect();
        let m = crate::models::SaturationModel { i_inf: 2e5, p_sat: 3e-6 };
        let y: Vec<f64> = x.iter().map(|&p| m.eval(p).unwrap() + noise.sample(&mut rng)).collect();
        let f = fit(&FitProblem::new(Box::new(Saturation), x, y, vec![1.5e5, 2e-6])).unwrap();
        [f.covariance[0][0], f.covariance[1][1]]
    };
    let (a, b) = (variance(200, 1), variance(800, 2));
    for i in 0..2 {
        let ratio = a[i] / b[i];
        assert!((ratio - 4.0).abs() < 0.8, "parameter {i}: ratio {ratio}");
    }
}

#[test]
fn bands_cover_the_truth() {
    let m = crate::models::SaturationModel { i_inf: 2e5, p_sat: 3e-6 };
    let x: Vec<f64> = (0..40).map(|i| 0.25e-6 * (i as f64 + 1.0)).collect();
    let truth: Vec<f64> = x.iter().map(|&p| m.eval(p).unwrap()).collect();
    let noise = Normal::new(0.0, 2000.0).unwrap();
    let (mut inside, mut total) = (0usize, 0usize);
    for seed in 0..200 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<f64> = truth.iter().map(|t| t + noise.sample(&mut rng)).collect();
        let f = fit(&FitProblem::new(Box::new(Saturation), x.clone(), y, vec![1.5e5, 2e-6])).unwrap();
        for (b, t) in f.confidence_bands.iter().zip(&truth) {
            inside += usize::from(b.lo <= *t && *t <= b.hi);
            total += 1;
        }
    }
    let coverage = inside as f64 / total as f64;
    assert!(coverage >= 0.9, "coverage {coverage}");
}

#[test]
fn unidentifiable_parameter_is_named() {
    let temps: Vec<f64> = (1..30).map(|i| 10.0 * i as f64).collect();
    let y = vec![1.0; temps.len()];
    let err = fit(&FitProblem::new(Box::new(Boltzmann), temps, y, vec![1.0, 0.0, 1e-21])).unwrap_err();
    match err {
        Error::RankDeficient { combination } => assert!(combination.contains('C'), "{combination}"),
        e => panic!("unexpected {e}"),
    }

    let x = vec![3.0; 5];
    let err = fit(&FitProblem::new(Box::new(Line), x, vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![1.0, 1.0])).unwrap_err();
    match err {
        Error::RankDeficient { combination } => {
            assert!(combination.contains("slope") && combination.contains("intercept"), "{combination}")
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn iteration_cap_is_flagged() {
    let x: Vec<f64> = (-50..=50).map(|i| i as f64).collect();
    let y = Gaussian.eval(&x, &[3.0, 4.0, 10.0, 0.0]).unwrap();
    let opts = FitOptions {
        max_iterations: 2,
        ..FitOptions::default()
    };
    let f = fit_with(&FitProblem::new(Box::new(Gaussian), x, y, vec![1.0, -5.0, 30.0, 0.5]), &opts).unwrap();
    assert!(!f.converged);
    assert_eq!(f.iterations, 2);
}

#[test]
fn problem_validation() {
    let line = || Box::new(Line) as Box<dyn Model>;
    assert!(fit(&FitProblem::new(line(), vec![1.0, 2.0], vec![1.0], vec![0.0, 0.0])).is_err());
    assert!(fit(&FitProblem::new(line(), vec![1.0, 2.0], vec![1.0, 2.0], vec![0.0, 0.0])).is_err());
    let p = FitProblem::new(line(), vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0], vec![0.0, 0.0]);
    assert!(fit(&p.with_sigma(vec![1.0, 0.0, 1.0])).is_err());
    let p = FitProblem::new(line(), vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0], vec![0.0, 0.0]);
    assert!(fit(&p.fix("curvature", 1.0)).is_err());
    let p = FitProblem::new(Box::new(Saturation), vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0], vec![1.0, -1.0]);
    assert!(fit(&p).is_err());
}

#[test]
fn fixed_parameters_stay_put() {
    let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
    let y: Vec<f64> = x.iter().map(|x| 3.0 * x + 7.0).collect();
    let f = fit(&FitProblem::new(Box::new(Line), x, y, vec![1.0, 0.0]).fix("intercept", 7.0)).unwrap();
    assert_eq!(f.value("intercept"), Some(7.0));
    assert!(f.params[1].fixed);
    assert_eq!(f.sigma("intercept"), Some(0.0));
    assert!((f.value("slope").unwrap() - 3.0).abs() < 1e-12);
}

#[test]
fn synthetic_gap_data_recovers_generators() {
    let kb = PhysicalConstants::K_B;
    let truth = BoltzmannModel { a: 2.42e12, b: -4.0e12, c: 150.0 * kb };
    let temps: Vec<f64> = (0..30).map(|i| 5.0 + 10.0 * i as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let noise = Normal::new(0.0, 0.02e12).unwrap();
    let y: Vec<f64> = temps.iter().map(|&t| truth.eval(t).unwrap() + noise.sample(&mut rng)).collect();
    let sigma = vec![0.02e12; y.len()];
    let f = fit(&FitProblem::new(Box::new(Boltzmann), temps, y, vec![2.3e12, -3.0e12, 120.0 * kb]).with_sigma(sigma))
        .unwrap();
    for (p, t) in f.params.iter().zip([truth.a, truth.b, truth.c]) {
        assert!((p.value - t).abs() <= 2.0 * p.sigma, "{}: {} ± {} vs {t}", p.name, p.value, p.sigma);
    }
}

#[test]
fn logistic_slope_recovered() {
    let truth = LogisticLinewidthModel { a: 109e6, d: 2e9, b: 20.0, c: 3.7, e: 0.5 };
    let temps: Vec<f64> = (0..60).map(|i| 5.0 + 1.5 * i as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 20e6).unwrap();
    let y: Vec<f64> = temps.iter().map(|&t| truth.eval(t).unwrap() + noise.sample(&mut rng)).collect();
    let f = fit(&FitProblem::new(Box::new(Logistic), temps, y, vec![100e6, 1.8e9, 15.0, 3.6, 0.7])).unwrap();
    assert!(f.converged);
    let b = f.estimate("B").unwrap();
    assert!((b.value - 20.0).abs() <= 2.0 * b.sigma, "B = {} ± {}", b.value, b.sigma);
}

fn synthetic_curve(params: &EmitterParams, plateau: f64, seed: u64) -> CorrelationCurve {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let taus: Vec<f64> = (-100..=100).map(|i| 0.2e-9 * i as f64).collect();
    let counts = taus.iter().map(|&t| poisson(plateau * g2_resonant(params, t.abs()), &mut rng)).collect();
    CorrelationCurve::new(taus, counts, 0.2e-9).unwrap()
}

fn resonant_fixed() -> G2Fixed {
    G2Fixed {
        gamma: GAMMA,
        dist: DetuningDistribution::resonant(),
    }
}

#[test]
fn resonant_recovery_rate() {
    // Dephasing of the 5 K case: gamma_perp = 2 pi 0.22 GHz.
    let truth = EmitterParams::new(GAMMA, hz_to_angular(220e6) - 0.5 * GAMMA, hz_to_angular(400e6), 0.0).unwrap();
    let guess = G2Guess {
        omega: 0.8 * truth.omega(),
        gamma_c: 1.3 * truth.gamma_c(),
    };
    let mut hits = 0;
    for seed in 0..100 {
        let curve = synthetic_curve(&truth, 1000.0, seed);
        let r = fit_g2(&curve, &resonant_fixed(), &guess).unwrap();
        let ok_omega = (r.omega.value - truth.omega()).abs() <= 2.0 * r.omega.sigma;
        let ok_gp = (r.gamma_perp.value - truth.gamma_perp()).abs() <= 2.0 * r.gamma_perp.sigma;
        hits += usize::from(ok_omega && ok_gp);
    }
    assert!(hits >= 90, "{hits}/100 within 2 sigma");
}

#[test]
fn regimes_are_recovered() {
    let osc = EmitterParams::new(GAMMA, hz_to_angular(165e6), hz_to_angular(400e6), 0.0).unwrap();
    let curve = synthetic_curve(&osc, 1000.0, 21);
    let guess = estimate_g2_guess(&curve, GAMMA).unwrap();
    let r = fit_g2(&curve, &resonant_fixed(), &guess).unwrap();
    assert_eq!(r.regime, DampingRegime::Oscillatory);
    assert!(relative(r.omega.value, osc.omega()) < 0.05);

    let over = EmitterParams::new(GAMMA, hz_to_angular(900e6) - 0.5 * GAMMA, hz_to_angular(300e6), 0.0).unwrap();
    let curve = synthetic_curve(&over, 1000.0, 22);
    let guess = estimate_g2_guess(&curve, GAMMA).unwrap();
    let r = fit_g2(&curve, &resonant_fixed(), &guess).unwrap();
    assert_eq!(r.regime, DampingRegime::Overdamped);
    assert!(!r.pinned_at_floor);
}

#[test]
fn noiseless_g2_is_exact_and_floor_is_flagged() {
    let taus: Vec<f64> = (-100..=100).map(|i| 0.2e-9 * i as f64).collect();
    let truth = EmitterParams::new(GAMMA, 0.0, hz_to_angular(500e6), 0.0).unwrap();
    let counts: Vec<f64> = taus.iter().map(|&t| 800.0 * g2_resonant(&truth, t.abs())).collect();
    let curve = CorrelationCurve::new(taus, counts, 0.2e-9).unwrap();
    let guess = G2Guess {
        omega: hz_to_angular(450e6),
        gamma_c: hz_to_angular(30e6),
    };
    let r = fit_g2(&curve, &resonant_fixed(), &guess).unwrap();
    assert!(relative(r.omega.value, truth.omega()) < 1e-8);
    assert!(r.gamma_c.value < 1e-6 * GAMMA);
    assert!(r.pinned_at_floor);
}

#[test]
fn guess_lands_near_truth() {
    let p = EmitterParams::new(GAMMA, hz_to_angular(100e6), hz_to_angular(500e6), 0.0).unwrap();
    let curve = synthetic_curve(&p, 5000.0, 3);
    let g = estimate_g2_guess(&curve, GAMMA).unwrap();
    assert!(relative(g.omega, p.omega()) < 0.25, "{} vs {}", g.omega, p.omega());
}

fn lorentzian_scan(id: usize, center: f64, fwhm: f64, peak: f64, rng: &mut ChaCha8Rng) -> PleScan {
    let freqs: Vec<f64> = (-100..=100).map(|i| center.round() + 5e6 * i as f64).collect();
    let mean = Lorentzian.eval(&freqs, &[peak, center, fwhm, 5.0]).unwrap();
    let counts = mean.iter().map(|&m| poisson(m, rng)).collect();
    PleScan::new(id.to_string(), freqs, counts).unwrap()
}

#[test]
fn single_scan_widths_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let scans: Vec<PleScan> = (0..20).map(|i| lorentzian_scan(i, 0.0, 109e6, 400.0, &mut rng)).collect();
    let r = histogram_line_fit(&scans, LineShape::Lorentzian).unwrap();
    assert_eq!(r.scans.len(), 20);
    assert!((r.mean_fwhm.value - 109e6).abs() <= 2.0 * r.mean_fwhm.sigma);
}

#[test]
fn identical_centres_give_the_single_scan_width() {
    let freqs: Vec<f64> = (-100..=100).map(|i| 5e6 * i as f64).collect();
    let counts = Lorentzian.eval(&freqs, &[300.0, 0.0, 109e6, 2.0]).unwrap();
    let scans: Vec<PleScan> = (0..5).map(|i| PleScan::new(i.to_string(), freqs.clone(), counts.clone()).unwrap()).collect();
    let r = histogram_line_fit(&scans, LineShape::Lorentzian).unwrap();
    assert!(r.center_histogram.is_none());
    assert_eq!(r.center_spread_fwhm.value, 0.0);
    assert!(relative(r.inhomogeneous_fwhm.value, 109e6) < 1e-6);
}

#[test]
fn inhomogeneous_width_recovered_and_dark_scans_counted() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let fwhm = 1.01e9;
    let centres = Normal::new(0.0, fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt())).unwrap();
    let mut scans: Vec<PleScan> = (0..300)
        .map(|i| lorentzian_scan(i, centres.sample(&mut rng), 109e6, 300.0, &mut rng))
        .collect();
    let freqs: Vec<f64> = (-100..=100).map(|i| 5e6 * i as f64).collect();
    let dark_counts = freqs.iter().map(|_| poisson(5.0, &mut rng)).collect();
    scans.push(PleScan::new("dark", freqs, dark_counts).unwrap());
    let r = histogram_line_fit(&scans, LineShape::Lorentzian).unwrap();
    assert_eq!(r.excluded_dark, vec!["dark".to_string()]);
    let s = r.center_spread_fwhm;
    assert!((s.value - fwhm).abs() <= 2.0 * s.sigma, "{} ± {}", s.value, s.sigma);
    let total = fwhm.hypot(109e6);
    assert!((r.inhomogeneous_fwhm.value - total).abs() <= 2.0 * r.inhomogeneous_fwhm.sigma);
}

#[test]
fn gaussian_scans_fit_with_gaussian_shape() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let freqs: Vec<f64> = (-100..=100).map(|i| 10e6 * i as f64).collect();
    let scans: Vec<PleScan> = (0..10)
        .map(|i| {
            let mean = Gaussian.eval(&freqs, &[200.0, 1e7 * i as f64, 400e6, 3.0]).unwrap();
            PleScan::new(i.to_string(), freqs.clone(), mean.iter().map(|&m| poisson(m, &mut rng)).collect()).unwrap()
        })
        .collect();
    let r = histogram_line_fit(&scans, LineShape::Gaussian).unwrap();
    assert!((r.mean_fwhm.value - 400e6).abs() <= 3.0 * r.mean_fwhm.sigma);
}

#[test]
fn line_fit_weights_and_two_points() {
    let p = [1e-6, 2.5e-6, 5e-6, 9e-6];
    let x: Vec<f64> = p.iter().map(|v: &f64| v.sqrt()).collect();
    let k = 2.0 * PI * 4e11;
    let y: Vec<f64> = x.iter().map(|v| k * v).collect();
    let f = weighted_line_fit(&x, &y, None, 2.0).unwrap();
    assert!(relative(f.value("slope").unwrap(), k) < 1e-12);
    assert!(f.value("intercept").unwrap().abs() < 1e-6 * k * x[0]);

    let mut y_out = y.clone();
    y_out[2] *= 3.0;
    let sigma = [1.0, 1.0, 1e9, 1.0];
    let f = weighted_line_fit(&x, &y_out, Some(&sigma), 2.0).unwrap();
    assert!(relative(f.value("slope").unwrap(), k) < 1e-6);

    let f = weighted_line_fit(&[1.0, 2.0], &[1.0, 3.0], Some(&[0.1, 0.1]), 2.0).unwrap();
    assert_eq!(f.dof, 0);
    assert!((f.sigma("slope").unwrap() - 0.1 * 2f64.sqrt()).abs() < 1e-12);
    assert!(weighted_line_fit(&[1.0, 2.0], &[1.0, 3.0], None, 2.0).is_err());
    assert!(weighted_line_fit(&[2.0, 2.0, 2.0], &[1.0, 3.0, 4.0], None, 2.0).is_err());
}

#[test]
fn registry_names_resolve() {
    for kind in ModelKind::ALL {
        let name = kind.build(1.0, DetuningDistribution::resonant()).name();
        assert_eq!(model_by_name(name).unwrap(), kind);
    }
    assert!(model_by_name("spline").is_err());
}

proptest! {
    #[test]
    fn line_fit_recovers_any_exact_line(
        slope in -1e3..1e3f64,
        intercept in -1e3..1e3f64,
        n in 3usize..40,
    ) {
        let x: Vec<f64> = (0..n).map(|i| i as f64 * 0.7 - 3.0).collect();
        let y: Vec<f64> = x.iter().map(|x| slope * x + intercept).collect();
        let f = weighted_line_fit(&x, &y, None, 2.0).unwrap();
        prop_assert!((f.value("slope").unwrap() - slope).abs() <= 1e-9 * (1.0 + slope.abs()));
        prop_assert!((f.value("intercept").unwrap() - intercept).abs() <= 1e-9 * (1.0 + intercept.abs() + slope.abs()));
    }
}
