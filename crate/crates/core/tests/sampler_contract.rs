use cvneg::harness::{ExperimentConfig, StateGenerator};
use cvneg::rng::stream;
use cvneg::sampler::{sampler_registry, QuadratureSampler, SamplerSettings};
use cvneg::wigner::{MarginalForm, QuadratureAxis, WignerForm};
use cvneg::Error;
use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};

fn forms(modes: usize, count: usize, seed: u64) -> Vec<WignerForm> {
    let generator = StateGenerator::from_config(&ExperimentConfig {
        mode_count: modes,
        ..ExperimentConfig::default()
    })
    .unwrap();
    (0..count)
        .map(|i| generator.draw_form(&mut stream(seed, 100, i as u64)).unwrap().1)
        .collect()
}

fn samplers() -> Vec<Box<dyn QuadratureSampler>> {
    let registry = sampler_registry();
    registry
        .names()
        .iter()
        .map(|n| registry.create(n, &SamplerSettings::default()).unwrap())
        .collect()
}

/// E[xxᵀ] = ½[(tr(MΣ) + c)Σ + 2ΣMΣ] for p(x) = ½(xᵀMx + c)G_Σ(x).
fn second_moment(m: &MarginalForm) -> DMatrix<f64> {
    let s = m.sigma();
    let q = m.quadratic();
    let t = (q * s).trace() + m.constant();
    (s * t + s * q * s * 2.0) * 0.5
}

#[test]
fn draws_reproduce_the_analytic_second_moments() {
    let n = 40_000;
    for sampler in samplers() {
        for (i, form) in forms(2, 6, 11).iter().enumerate() {
            let axes = [QuadratureAxis { mode: 0, phase: 0.3 }, QuadratureAxis { mode: 1, phase: 1.9 }];
            let marginal = form.marginal(&axes).unwrap();
            let draw = match sampler.sample(&marginal, n, &mut stream(5, 101, i as u64)) {
                Err(Error::EnvelopeFailure { .. }) => continue,
                other => other.unwrap(),
            };
            assert_eq!(draw.count(), n);
            let expected = second_moment(&marginal);
            let mut got = DMatrix::<f64>::zeros(2, 2);
            for r in 0..n {
                let p = draw.point(r);
                for a in 0..2 {
                    for b in 0..2 {
                        got[(a, b)] += p[a] * p[b] / n as f64;
                    }
                }
            }
            for a in 0..2 {
                for b in 0..2 {
                    let scale = (expected[(a, a)] * expected[(b, b)]).sqrt();
                    let err = (got[(a, b)] - expected[(a, b)]).abs() / scale;
                    assert!(err < 0.05, "{} state {i} ({a},{b}): {} vs {}", sampler.name(), got[(a, b)], expected[(a, b)]);
                }
            }
        }
    }
}

#[test]
fn one_dimensional_draws_pass_kolmogorov_smirnov() {
    let n = 20_000;
    let std_normal = Normal::standard();
    // Asymptotic critical value at α = 0.001.
    let critical = 1.95 / (n as f64).sqrt();
    for sampler in samplers() {
        for (i, form) in forms(3, 5, 12).iter().enumerate() {
            let marginal = form.marginal(&[QuadratureAxis { mode: i % 3, phase: 0.7 }]).unwrap();
            let draw = match sampler.sample(&marginal, n, &mut stream(6, 102, i as u64)) {
                Err(Error::EnvelopeFailure { .. }) => continue,
                other => other.unwrap(),
            };
            let sigma = marginal.sigma()[(0, 0)].sqrt();
            let a = marginal.quadratic()[(0, 0)];
            let c = marginal.constant();
            let cdf = |x: f64| {
                let z = x / sigma;
                let phi = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
                0.5 * (a * sigma * sigma * (std_normal.cdf(z) - z * phi) + c * std_normal.cdf(z))
            };
            let mut xs = draw.points.clone();
            xs.sort_by(f64::total_cmp);
            let d = xs
                .iter()
                .enumerate()
                .map(|(j, &x)| {
                    let f = cdf(x);
                    (f - j as f64 / n as f64).abs().max(((j + 1) as f64 / n as f64 - f).abs())
                })
                .fold(0.0, f64::max);
            assert!(d < critical, "{} state {i}: D = {d}", sampler.name());
        }
    }
}

#[test]
fn mixture_sampler_keeps_a_usable_acceptance_rate() {
    let sampler = sampler_registry().create("mixture", &SamplerSettings::default()).unwrap();
    for (i, form) in forms(3, 10, 13).iter().enumerate() {
        let axes: Vec<QuadratureAxis> = (0..3).map(|mode| QuadratureAxis { mode, phase: 0.4 * mode as f64 }).collect();
        let draw = sampler.sample(&form.marginal(&axes).unwrap(), 2000, &mut stream(7, 103, i as u64)).unwrap();
        assert!(draw.acceptance_rate() > 0.05, "state {i}: rate {}", draw.acceptance_rate());
    }
}

#[test]
fn unknown_sampler_is_a_named_error() {
    match sampler_registry().create("metropolis", &SamplerSettings::default()) {
        Err(Error::UnknownStrategy { name, .. }) => assert_eq!(name, "metropolis"),
        Err(e) => panic!("{e}"),
        Ok(_) => panic!("unexpected sampler"),
    }
}
