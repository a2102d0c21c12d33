//! Reference values computed independently with mpmath/scipy at 30 digits
//! and frozen here.

#![allow(clippy::excessive_precision)]

use l1kde_core::blocks::centering_proxy;
use l1kde_core::kde::{gaussian_mean_approx, kn, l1_deviation, mean_estimator, rho_nxy};
use l1kde_core::kernel::{nabeya_cov, nabeya_cov_mc};
use l1kde_core::quadrature::GaussLegendre;
use l1kde_core::rates::{
    big_psi, d_bound, density_bounds, kk_n, psi_n, rate_fit, rate_ledger, small_interval_mass, tau_star, three_halves_mass,
    RateConstants,
};
use l1kde_core::rng::rng_from_seed;
use l1kde_core::stats::{mean, variance};
use l1kde_core::{Density, IntervalSet, Kernel, L1Method, Sample};

const SIGMA2_UNIFORM: f64 = 0.226_760_455_264_837_31;
const SIGMA2_EPANECHNIKOV: f64 = 1.2 * 0.208_352_451_611_761_8;
const PHI_HALF: f64 = 0.081_375_789_720_877_373;
const PHI_03: f64 = 0.028_868_795_303_393_906;
const VAR_ABS_NORMAL: f64 = 0.363_380_227_632_418_66;

fn close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
}

#[test]
fn kernel_variances() {
    close(Kernel::uniform().asymptotic_variance().unwrap(), SIGMA2_UNIFORM, 1e-8);
    close(Kernel::epanechnikov().asymptotic_variance().unwrap(), SIGMA2_EPANECHNIKOV, 1e-8);
}

#[test]
fn nabeya_values() {
    close(nabeya_cov(0.5).unwrap(), PHI_HALF, 1e-14);
    close(nabeya_cov(0.3).unwrap(), PHI_03, 1e-14);
    close(nabeya_cov(1.0).unwrap(), VAR_ABS_NORMAL, 1e-14);
    close(nabeya_cov(0.0).unwrap(), 0.0, 1e-15);
    for (rho, target, seed) in [(1.0, VAR_ABS_NORMAL, 11), (0.5, PHI_HALF, 12), (0.3, PHI_03, 13)] {
        let mc = nabeya_cov_mc(rho, 1_000_000, seed).unwrap();
        assert!((mc.mean - target).abs() <= 3.0 * mc.se, "rho {rho}: {} ± {}", mc.mean, mc.se);
    }
}

/// ||K^2|| ∫ phi(rho(t)) dt with phi replaced by its Monte Carlo estimate
/// at Gauss-Legendre nodes.
#[test]
fn epanechnikov_variance_against_monte_carlo() {
    let k = Kernel::epanechnikov();
    let gl = GaussLegendre::new(12);
    let (mut est, mut var) = (0.0, 0.0);
    for (i, (u, w)) in gl.nodes.iter().zip(&gl.weights).enumerate() {
        // fold onto [0, 1] by symmetry
        let t = 0.5 * (u + 1.0);
        let mc = nabeya_cov_mc(k.autocorrelation(t), 200_000, 100 + i as u64).unwrap();
        est += w * mc.mean;
        var += (w * mc.se).powi(2);
    }
    let l2 = k.norms().l2;
    let (est, se) = (l2 * est, l2 * var.sqrt());
    let exact = k.asymptotic_variance().unwrap();
    assert!((est - exact).abs() <= 3.0 * se, "{est} ± {se} vs {exact}");
}

#[test]
fn gaussian_closed_forms() {
    let g = Density::standard_gaussian();
    close(g.prob(-1.0, 1.0), 0.682_689_492_137_085_9, 1e-12);
    close(mean_estimator(&g, &Kernel::uniform(), 0.0, 0.2), 0.398_278_372_770_289_81, 1e-10);
    close(small_interval_mass(&g, 0.05), 0.039_877_611_676_744_925, 1e-10);
    close(three_halves_mass(&g, &IntervalSet::interval(-8.0, 8.0), 0.01).unwrap(), 0.515_714_572_479_411_12, 1e-9);
    close(g.tail_cutoff(0.3173).unwrap().m, 1.000_021_713_322_999_1, 1e-9);
    close(g.tail_cutoff(0.05).unwrap().m, 1.959_963_984_540_053_9, 1e-9);
    let e = g.example_set((-2.0f64).exp()).unwrap();
    assert_eq!(e.intervals().len(), 1);
    close(e.intervals()[0].0, -1.0, 1e-12);
    close(e.intervals()[0].1, 1.0, 1e-12);
}

#[test]
fn power_law_closed_forms() {
    let f = Density::power_law(0.5).unwrap();
    close(small_interval_mass(&f, 0.05), 0.316_227_766_016_837_94, 1e-10);
    let e = f.example_set(0.01).unwrap();
    close(e.intervals()[0].0, 0.316_227_766_016_837_93, 1e-12);
    close(e.intervals()[0].1, 0.99, 1e-12);
    let (beta, d) = density_bounds(&f, &e, 0.01).unwrap();
    close(beta, 0.502_518_907_629_606_04, 1e-10);
    close(d, 0.889_139_705_019_461_4, 1e-10);
}

#[test]
fn uniform_example_set_and_strip_mass() {
    let f = Density::uniform(0.0, 1.0);
    let e = f.example_set(0.1).unwrap();
    close(e.intervals()[0].0, 0.05, 1e-14);
    close(e.intervals()[0].1, 0.95, 1e-14);
    close(1.0 - f.mass(&e), 0.1, 1e-12);
}

/// Same ledger arithmetic written out by hand for the uniform density on
/// [0, 1] with the box kernel.
#[test]
fn ledger_duplicate_formula() {
    let f = Density::uniform(0.0, 1.0);
    let k = Kernel::uniform();
    let h = 0.01;
    let e = f.example_set(h).unwrap();
    let led = rate_ledger(&f, &k, 1_000_000, h, &e, RateConstants::default()).unwrap();
    let s2 = SIGMA2_UNIFORM;
    let p = 2.0 * h;
    let psi = 256.0 / s2 * p.min(h);
    let bpsi = 1.0 / (s2 * s2);
    let tau = bpsi.powf(1.5) * (p + psi).sqrt();
    close(led.psi_n / psi - 1.0, 0.0, 1e-8);
    close(led.big_psi_n / bpsi - 1.0, 0.0, 1e-8);
    close(led.tau_star / tau - 1.0, 0.0, 1e-8);
    close(tau, 288.415_576_787_582_52, 1e-9);
    // with the computed sigma^2 the duplicate agrees to rounding
    let s2c = led.sigma2;
    let tau_c = tau_star(1.0, big_psi(1.0, 1.0, 1.0, 1.0, s2c), p, psi_n(256.0, 1.0, s2c, p, 1.0, h));
    close(led.tau_star / tau_c - 1.0, 0.0, 1e-12);
    assert!(led.not_yet_asymptotic);
    for v in [led.eps_n, led.p_n, led.phi_n, led.l_n, led.r_n, led.ll_n, led.mm_n, led.omega_n, led.y_n, led.dd_n] {
        assert!(v.is_finite() && v >= 0.0);
    }
}

#[test]
fn centering_proxy_uniform() {
    let f = Density::uniform(0.0, 1.0);
    let k = Kernel::uniform();
    let (n, h) = (10_000, 0.1);
    let e = f.example_set(h).unwrap();
    close(gaussian_mean_approx(&f, &k, h, &e, n), 0.022_708_192_698_181_44, 1e-12);
    close(centering_proxy(&f, &k, h, &e) / (n as f64).sqrt(), 0.022_708_192_698_181_44, 1e-12);
}

#[test]
fn poisson_counts() {
    let f = Density::uniform(0.0, 1.0);
    let mut rng = rng_from_seed(7);
    let counts: Vec<f64> = (0..1000).map(|_| Sample::poissonized(&f, 10_000, &mut rng).actual_count as f64).collect();
    assert!((mean(&counts) - 1e4).abs() <= 3.0 * (1e4f64 / 1e3).sqrt());
    assert!((variance(&counts) / 1e4 - 1.0).abs() <= 0.2);
}

#[test]
fn sampling_moments() {
    let mut rng = rng_from_seed(8);
    let u = Sample::fixed(&Density::uniform(0.0, 1.0), 100_000, &mut rng);
    assert!((mean(&u.points) - 0.5).abs() <= 3.0 / (12.0f64 * 1e5).sqrt());
    let p = Sample::fixed(&Density::power_law(0.5).unwrap(), 100_000, &mut rng);
    let below = p.points.iter().filter(|&&x| x <= 0.25).count() as f64 / 1e5;
    assert!((below - 0.5).abs() <= 3.0 * (0.25f64 / 1e5).sqrt());
}

#[test]
fn estimator_mean_and_variance_by_simulation() {
    let f = Density::standard_gaussian();
    let k = Kernel::uniform();
    let (n, h, x) = (1000, 0.2, 0.0);
    let mut rng = rng_from_seed(9);
    let vals: Vec<f64> = (0..10_000).map(|_| Sample::poissonized(&f, n, &mut rng).evaluate(&k, h, &[x])[0]).collect();
    let m = mean(&vals);
    let se = (variance(&vals) / vals.len() as f64).sqrt();
    assert!((m - mean_estimator(&f, &k, x, h)).abs() <= 3.0 * se);
    // n Var f_eta(x) = k_n(x) exactly under Poissonisation
    let nv = n as f64 * variance(&vals);
    let target = kn(&f, &k, x, h);
    let m4 = vals.iter().map(|v| (v - m).powi(4)).sum::<f64>() / vals.len() as f64;
    let se_var = n as f64 * ((m4 - (nv / n as f64).powi(2)) / vals.len() as f64).sqrt();
    assert!((nv - target).abs() <= 5.0 * se_var, "{nv} vs {target} ± {se_var}");
}

#[test]
fn empty_poissonized_sample_has_unit_deviation() {
    let f = Density::uniform(0.0, 1.0);
    let d = l1_deviation(&[], 100, &f, &Kernel::uniform(), 0.1, None, None).unwrap();
    close(d.value, 1.0, 1e-9);
    let d = l1_deviation(&[], 100, &f, &Kernel::epanechnikov(), 0.1, None, None).unwrap();
    close(d.value, 1.0, 1e-6);
}

#[test]
fn grid_refinement_is_stable() {
    let f = Density::uniform(0.0, 1.0);
    let k = Kernel::epanechnikov();
    let mut rng = rng_from_seed(10);
    let xs = f.sample_sorted(1000, &mut rng);
    let a = l1_deviation(&xs, 1000, &f, &k, 0.1, None, Some(L1Method::Grid { step_fraction: 0.1 })).unwrap();
    let b = l1_deviation(&xs, 1000, &f, &k, 0.1, None, Some(L1Method::Grid { step_fraction: 0.05 })).unwrap();
    assert!((a.value - b.value).abs() < 0.01 * b.value);
    close(b.grid_step, 0.005, 1e-15);
}

#[test]
fn correlation_is_the_autocorrelation_inside_flat_regions() {
    let f = Density::uniform(0.0, 1.0);
    let k = Kernel::uniform();
    let h = 0.05;
    for t in [-1.0, -0.6, -0.2, 0.0, 0.3, 0.75, 1.0] {
        close(rho_nxy(&f, &k, 0.5, 0.5 + t * h, h).unwrap(), 1.0 - f64::abs(t), 1e-8);
    }
    close(rho_nxy(&f, &k, 0.4, 0.4 + 2.0 * h, h).unwrap(), 0.0, 1e-12);
    close(kk_n(&f, &k, h, 1000, 0.5, 0.5).unwrap(), 0.0, 0.0);
}

#[test]
fn d_bound_cases() {
    let f = Density::uniform(0.0, 1.0);
    let k = Kernel::uniform();
    let z = d_bound(&f, &k, 0.1, &IntervalSet::empty()).unwrap();
    assert_eq!((z.d, z.omega, z.l), (0.0, 0.0, 0.0));
    let b = d_bound(&f, &k, 0.1, &IntervalSet::interval(-0.05, 1.05)).unwrap();
    // each boundary layer contributes h/8 on either side of the jump
    close(b.l, 0.05, 1e-9);
    close(b.omega, 1.05, 1e-9);
    assert!(b.d <= 4.0 * k.norms().kappa.powi(2) * b.omega + 1e-12);
}

#[test]
fn l1_smoothing_error_uniform_is_linear_in_h() {
    let f = Density::uniform(0.0, 1.0);
    let hs = [0.1, 0.03, 0.01, 0.003];
    let ls: Vec<f64> = hs.iter().map(|&h| l1kde_core::rates::l1_smoothing_error(&f, h).unwrap()).collect();
    for (&h, &l) in hs.iter().zip(&ls) {
        assert!(l > 0.0 && l <= 2.0 * h);
    }
    let fit = rate_fit(&hs, &ls).unwrap();
    close(fit.slope, 1.0, 1e-6);
    assert!(fit.r_squared > 0.999_999);
}

#[test]
fn k_n_on_flat_density() {
    let f = Density::uniform(0.0, 1.0);
    let k = Kernel::uniform();
    close(kn(&f, &k, 0.5, 0.02), 50.0, 1e-9);
    // f ||K^2|| / (2h) <= k_n <= 2 f ||K^2|| / h on the interior for another kernel
    let ep = Kernel::epanechnikov();
    let v = kn(&f, &ep, 0.5, 0.02);
    let l2 = ep.norms().l2;
    assert!(v >= l2 / 0.04 && v <= 2.0 * l2 / 0.02);
}
