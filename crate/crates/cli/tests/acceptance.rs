//! Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
//! fails. Pass criterion ids (`c03 c11`) to run a subset.

use std::cell::OnceCell;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use l1kde_core::block_checks::{
    block_pool, block_variance_check, cumulant_estimate, cumulant_of, one_dependence_test, BlockParams, BlockSetup,
};
use l1kde_core::blocks::BlockClass;
use l1kde_core::chebyshev::chebyshev_coeffs;
use l1kde_core::kde::natural_window;
use l1kde_core::kernel::{nabeya_cov, nabeya_cov_mc};
use l1kde_core::mc::{
    depoissonization_check, exponential_moment_check, l1_pool, moderate_deviation_ratio, normalize, variance_convergence, VarianceTable,
};
use l1kde_core::rates::{double_integrals, rate_fit, small_interval_mass, smoothing_error, tau_star_at, RateConstants};
use l1kde_core::rng::{replicate_rng, rng_from_seed};
use l1kde_core::stats::log_log_slope;
use l1kde_core::{BlockDraw, Density, Kernel};

/// Fixed before any acceptance run.
const SEED: u64 = 20_240_611;
const SIGMA2_UNIFORM: f64 = 0.226_760_455_264_837_31;

type Outcome = Result<(bool, String), String>;

struct Shared {
    variance: OnceCell<Result<VarianceTable, String>>,
    blocks: OnceCell<Result<Vec<(String, BlockSetup, Vec<BlockDraw>)>, String>>,
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn c01() -> Outcome {
    let t = Instant::now();
    let s2 = Kernel::uniform().asymptotic_variance().map_err(err)?;
    let secs = t.elapsed().as_secs_f64();
    let diff = (s2 - (1.5 - 4.0 / std::f64::consts::PI)).abs();
    Ok((diff <= 1e-8 && secs < 1.0, format!("sigma^2 = {s2:.12}, |diff| = {diff:.1e} (<= 1e-8), {secs:.3} s (< 1 s)")))
}

fn c02() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (i, rho) in [-0.9, -0.5, 0.0, 0.3, 0.7, 1.0].into_iter().enumerate() {
        let mc = nabeya_cov_mc(rho, 1_000_000, SEED + i as u64).map_err(err)?;
        let z = (mc.mean - nabeya_cov(rho).map_err(err)?).abs() / mc.se;
        worst = worst.max(z);
        parts.push(format!("{rho}:{z:.2}"));
    }
    let secs = t.elapsed().as_secs_f64();
    Ok((worst <= 3.0 && secs < 30.0, format!("|z| by rho [{}], max {worst:.2} (<= 3), {secs:.1} s (< 30 s)", parts.join(" "))))
}

fn variance_table(shared: &Shared) -> Result<&VarianceTable, String> {
    shared
        .variance
        .get_or_init(|| {
            let f = Density::uniform(0.0, 1.0);
            let k = Kernel::uniform();
            let schedule: Vec<(usize, f64)> = [1_000usize, 10_000, 100_000].iter().map(|&n| (n, (n as f64).powf(-0.25))).collect();
            variance_convergence(&f, &k, &schedule, 2000, SEED, 0).map_err(err)
        })
        .as_ref()
        .map_err(Clone::clone)
}

fn c03(shared: &Shared) -> Outcome {
    let t = Instant::now();
    let table = variance_table(shared)?;
    let secs = t.elapsed().as_secs_f64();
    let last = table.rows.last().expect("three rows");
    let ci = last.ci_lo <= SIGMA2_UNIFORM && SIGMA2_UNIFORM <= last.ci_hi;
    let ratios: Vec<String> = table.rows.iter().map(|r| format!("{:.4}", r.ratio)).collect();
    let mono = table.ratio_monotone();
    Ok((
        ci && mono && secs < 900.0,
        format!(
            "n Var at 1e5 = {:.5}, 95% CI [{:.5}, {:.5}] contains sigma^2: {ci}; ratio by n [{}] monotone toward 1: {mono}; {secs:.0} s",
            last.n_var,
            last.ci_lo,
            last.ci_hi,
            ratios.join(", ")
        ),
    ))
}

fn c04(shared: &Shared) -> Outcome {
    let table = variance_table(shared)?;
    let ks: Vec<String> = table.rows.iter().map(|r| format!("{:.4}", r.ks)).collect();
    let last = table.rows.last().expect("three rows");
    let dec = table.ks_decreasing();
    Ok((
        last.ks <= 0.08 && dec,
        format!("KS by n [{}] (final <= 0.08, decreasing: {dec}); Levy-Prokhorov upper bound at 1e5 = {:.4}", ks.join(", "), last.levy_prokhorov_upper),
    ))
}

struct SlopeCheck {
    what: String,
    got: f64,
    want: f64,
    tol: f64,
}

fn slopes_for(id: u8, f: &Density, k: &Kernel, hs: &[f64]) -> Result<Vec<SlopeCheck>, String> {
    let c = RateConstants::default();
    let (mut eps, mut p, mut tau, mut r, mut mm) = (vec![], vec![], vec![], vec![], vec![]);
    for &h in hs {
        let e = f.example_set(h).map_err(err)?;
        eps.push(smoothing_error(f, k, &e, h).map_err(err)?);
        p.push(small_interval_mass(f, h));
        tau.push(tau_star_at(f, k, h, &e, c).map_err(err)?);
        let di = double_integrals(f, k, &e, 10_000, h).map_err(err)?;
        r.push(di.r_profile.total());
        mm.push(if id == 2 { di.mm / (1.0 / h).ln().sqrt() } else { di.mm });
    }
    let fit = |v: &[f64]| rate_fit(hs, v).map(|f| f.slope).map_err(err);
    let (gamma, alpha) = match id {
        1 => (0.7, 0.0),
        _ => (0.5, 0.25),
    };
    let (w_eps, w_p, w_tau, w_r, tau_tol) = match id {
        1 => (gamma, 1.0, 0.5, gamma, 0.1),
        2 => (1.0, 1.0, 0.125, 1.0, 0.05),
        _ => (1.0 - (1.0 + gamma) * alpha, 1.0 - gamma, (1.0 - gamma - 3.0 * gamma * alpha) / 2.0, 1.0 - 2.0 * gamma * alpha, 0.1),
    };
    let mut out = vec![
        SlopeCheck { what: "eps".into(), got: fit(&eps)?, want: w_eps, tol: 0.15 },
        SlopeCheck { what: "P".into(), got: fit(&p)?, want: w_p, tol: 0.15 },
        SlopeCheck { what: "R".into(), got: fit(&r)?, want: w_r, tol: 0.2 },
        SlopeCheck { what: if id == 2 { "M/sqrt(log 1/h)".into() } else { "M".into() }, got: fit(&mm)?, want: 1.0, tol: 0.2 },
    ];
    if id == 3 {
        // tau* only reaches its limiting slope once P_n dominates psi_n
        let deep: Vec<f64> = (0..5).map(|i| 10f64.powf(-16.0 + i as f64)).collect();
        let taus = deep
            .iter()
            .map(|&h| f.example_set(h).and_then(|e| tau_star_at(f, k, h, &e, c)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        let got = rate_fit(&deep, &taus).map_err(err)?.slope;
        out.push(SlopeCheck { what: "tau*(h 1e-16..1e-12)".into(), got, want: w_tau, tol: tau_tol });
    } else {
        out.push(SlopeCheck { what: "tau*".into(), got: fit(&tau)?, want: w_tau, tol: tau_tol });
    }
    Ok(out)
}

fn c05() -> Outcome {
    let t = Instant::now();
    let k = Kernel::tilt();
    let half = |lo: i32, count: usize| -> Vec<f64> { (0..count).map(|i| 10f64.powf(-(lo as f64) - 0.5 * i as f64)).collect() };
    let mut ok = true;
    let mut parts = Vec::new();
    for (id, count) in [(1u8, 4usize), (2, 5), (3, 5)] {
        let f = Density::example(id, if id == 1 { 0.7 } else { 0.5 }).map_err(err)?;
        for s in slopes_for(id, &f, &k, &half(2, count))? {
            let good = (s.got - s.want).abs() <= s.tol;
            ok &= good;
            parts.push(format!("ex{id} {} {:.3} vs {:.4}±{}{}", s.what, s.got, s.want, s.tol, if good { "" } else { " MISS" }));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Ok((ok && secs < 300.0, format!("{}; {secs:.0} s (< 300 s)", parts.join("; "))))
}

fn block_data(shared: &Shared) -> Result<&Vec<(String, BlockSetup, Vec<BlockDraw>)>, String> {
    shared
        .blocks
        .get_or_init(|| {
            let k = Kernel::uniform();
            let n = 10_000;
            let h = (n as f64).powf(-1.0 / 3.0);
            let mut out = Vec::new();
            for (name, f) in [("uniform", Density::uniform(-0.5, 0.5)), ("gaussian", Density::standard_gaussian())] {
                let setup = BlockSetup::new(&f, &k, n, h, BlockParams::default()).map_err(err)?;
                let sampler = setup.sampler(&f, &k, None, None).map_err(err)?;
                let pool = block_pool(&sampler, 10_000, SEED, 0).map_err(err)?;
                out.push((name.to_string(), setup, pool));
            }
            Ok(out)
        })
        .as_ref()
        .map_err(Clone::clone)
}

fn c06(shared: &Shared) -> Outcome {
    let k = Kernel::uniform();
    let mut ok = true;
    let mut pairs = 0;
    let mut bad = Vec::new();
    for (name, f) in [("uniform", Density::uniform(-0.5, 0.5)), ("gaussian", Density::standard_gaussian())] {
        for n in [1e3, 1e4, 1e5, 1e6, 1e7] {
            for e in [0.25, 1.0 / 3.0] {
                let h = f64::powf(n, -e);
                match BlockSetup::new(&f, &k, n as usize, h, BlockParams::default()) {
                    Ok(s) if s.invariants.all() => pairs += 1,
                    Ok(s) => {
                        ok = false;
                        bad.push(format!("{name} n={n:e} h={h:.4}: {:?}", s.invariants));
                    }
                    Err(e) => {
                        ok = false;
                        bad.push(format!("{name} n={n:e} h={h:.4}: {e}"));
                    }
                }
            }
        }
    }
    let mut parts = vec![format!("invariants hold at {pairs}/20 (density, n, h) settings")];
    parts.extend(bad);
    let s2 = SIGMA2_UNIFORM;
    for (name, setup, pool) in block_data(shared)? {
        let f = if name == "uniform" { Density::uniform(-0.5, 0.5) } else { Density::standard_gaussian() };
        let sampler = setup.sampler(&f, &k, None, None).map_err(err)?;
        let v = block_variance_check(&sampler, pool, s2);
        let sv = v.sum_var_delta <= 4.0 + 5.0 * v.sum_var_delta_se;
        let vs = (v.var_s - 1.0).abs() <= 0.05;
        let vu = (v.var_u - v.var_u_expected).abs() <= 0.03;
        ok &= sv && vs && vu;
        parts.push(format!(
            "{name} n=1e4: sum Var(delta) {:.3} (<= 4 + 5 se), Var S {:.4} (1 ± 0.05), Var U {:.4} vs {:.4} (± 0.03), {} Y3 / {} blocks",
            v.sum_var_delta,
            v.var_s,
            v.var_u,
            v.var_u_expected,
            setup.partition.indices(BlockClass::Upsilon3).len(),
            setup.partition.blocks.len()
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn c07(shared: &Shared) -> Outcome {
    let k = Kernel::uniform();
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, setup, pool) in block_data(shared)? {
        let f = if name == "uniform" { Density::uniform(-0.5, 0.5) } else { Density::standard_gaussian() };
        let sampler = setup.sampler(&f, &k, None, None).map_err(err)?;
        let d = one_dependence_test(&sampler, pool);
        ok &= d.passes(4.0) && d.pairs > 0;
        parts.push(format!(
            "{name}: {} pairs |i-j|>=2, max |z| {:.2}; cov(S,V) z {:.2}; cov(U,V) z {:.2}",
            d.pairs, d.max_nonadjacent_z, d.cov_s_v_z, d.cov_u_v_z
        ));
    }
    Ok((ok, format!("{} (required: all <= 4)", parts.join("; "))))
}

fn c08() -> Outcome {
    let f = Density::uniform(-0.5, 0.5);
    let k = Kernel::uniform();
    let ns = [1_000usize, 10_000, 100_000];
    let (mut g3, mut g4) = (Vec::new(), Vec::new());
    let mut parts = Vec::new();
    for &n in &ns {
        let h = (n as f64).powf(-1.0 / 3.0);
        let setup = BlockSetup::new(&f, &k, n, h, BlockParams::default()).map_err(err)?;
        let sampler = setup.sampler(&f, &k, None, None).map_err(err)?;
        let pool = block_pool(&sampler, 100_000, SEED, 0).map_err(err)?;
        let mut rng = replicate_rng(SEED, 0xC8, n as u64);
        let c3 = cumulant_estimate(&pool, (1.0, 0.0), 3, 200, &mut rng).map_err(err)?;
        let c4 = cumulant_estimate(&pool, (1.0, 0.0), 4, 200, &mut rng).map_err(err)?;
        parts.push(format!("n={n}: G3 {:.4}±{:.4} G4 {:.4}±{:.4}", c3.gamma, c3.se, c4.gamma, c4.se));
        g3.push(c3.gamma.abs());
        g4.push(c4.gamma.abs());
    }
    let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    let s3 = log_log_slope(&xs, &g3).map_err(err)?;
    let s4 = log_log_slope(&xs, &g4).map_err(err)?;
    let mut rng = rng_from_seed(SEED ^ 0x4E);
    let z: Vec<f64> = (0..100_000).map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)).collect();
    let z3 = cumulant_of(&z, 3, 200, &mut rng).map_err(err)?;
    let z4 = cumulant_of(&z, 4, 200, &mut rng).map_err(err)?;
    let null = (z3.gamma / z3.se).abs() <= 3.0 && (z4.gamma / z4.se).abs() <= 3.0;
    Ok((
        s3 < 0.0 && s4 < 0.0 && null,
        format!(
            "{}; slopes in n: |G3| {s3:.3}, |G4| {s4:.3} (< 0); normal pool z3 {:.2}, z4 {:.2} (|z| <= 3)",
            parts.join(", "),
            z3.gamma / z3.se,
            z4.gamma / z4.se
        ),
    ))
}

fn c09() -> Outcome {
    let f = Density::uniform(0.0, 1.0);
    let k = Kernel::uniform();
    let n = 10_000;
    let h = (n as f64).powf(-0.25);
    let (lo, hi) = natural_window(&f, h);
    let b = f.example_set(h).map_err(err)?.complement_within(lo, hi);
    let rep = exponential_moment_check(&f, &k, h, n, &b, &[0.05, 0.1, 0.2], 2000, SEED, 0).map_err(err)?;
    let ok = rep.rows.iter().all(|r| r.pass);
    let vacuous = rep.rows.iter().filter(|r| r.series_diverges).count();
    let rows: Vec<String> = rep
        .rows
        .iter()
        .map(|r| format!("lambda {}: MC {:.5}±{:.5} vs bound {}", r.lambda, r.mc_mean, r.mc_se, if r.bound.is_finite() { format!("{:.4}", r.bound) } else { "inf".into() }))
        .collect();
    let note = if vacuous > 0 { format!(" [vacuous: series terms overflow f64 for {vacuous}/3 lambdas (Omega = {:.4}, kappa = {}), so the pass is trivially true]", rep.omega, rep.kappa) } else { String::new() };
    Ok((ok, format!("{}{note}", rows.join("; "))))
}

fn c10() -> Outcome {
    let f = Density::uniform(-0.5, 0.5);
    let k = Kernel::uniform();
    let n = 400;
    let setup = BlockSetup::new(&f, &k, n, 0.05, BlockParams::default()).map_err(err)?;
    let sampler = setup.sampler(&f, &k, None, None).map_err(err)?;
    let rep = depoissonization_check(&sampler, 10_000, 999, SEED, 0).map_err(err)?;
    let target = 1.0 / (2.0 * std::f64::consts::PI * n as f64).sqrt();
    let rel = rep.acceptance_rate / target - 1.0;
    Ok((
        rep.test.p_value >= 0.01 && rel.abs() <= 0.25 && rep.accepted >= 10_000,
        format!(
            "{} accepted of {} attempts; KS {:.4}, permutation p {:.3} (>= 0.01); rate {:.5} vs {target:.5} ({:+.1}%, within 25%)",
            rep.accepted,
            rep.attempts,
            rep.test.statistic,
            rep.test.p_value,
            rep.acceptance_rate,
            100.0 * rel
        ),
    ))
}

fn c11() -> Outcome {
    let f = Density::uniform(0.0, 1.0);
    let k = Kernel::uniform();
    let pool = l1_pool(&f, &k, 100_000, 0.005, 200_000, SEED, 0).map_err(err)?;
    let zs = normalize(&pool, SIGMA2_UNIFORM.sqrt());
    let rows = moderate_deviation_ratio(&zs, &[1.0, 1.5, 2.0], 1.0 - 0.05 / 6.0, 20);
    let ok = rows.iter().all(|r| !r.flagged && r.contains_one());
    let parts: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "x={}: upper {:.3} [{:.3}, {:.3}], lower {:.3} [{:.3}, {:.3}]",
                r.x, r.upper_ratio, r.upper_ci.0, r.upper_ci.1, r.lower_ratio, r.lower_ci.0, r.lower_ci.1
            )
        })
        .collect();
    Ok((ok, format!("h = 0.005; {} (required: every interval contains 1)", parts.join("; "))))
}

/// T_r coefficients from the explicit sum
/// T_r(x) = (r/2) sum_k (-1)^k (r-k-1)! / (k! (r-2k)!) (2x)^(r-2k).
fn chebyshev_explicit(r: usize) -> Vec<i128> {
    let mut c = vec![0i128; r + 1];
    if r == 0 {
        c[0] = 1;
        return c;
    }
    let binom = |n: usize, k: usize| -> i128 { (0..k).fold(1i128, |acc, i| acc * (n - i) as i128 / (i + 1) as i128) };
    for k in 0..=r / 2 {
        let mag = r as i128 * binom(r - k, k) * (1i128 << (r - 2 * k)) / (2 * (r - k) as i128);
        c[r - 2 * k] = if k % 2 == 0 { mag } else { -mag };
    }
    c
}

fn c12() -> Outcome {
    let t = Instant::now();
    for r in 0..=20usize {
        let got = chebyshev_coeffs(r).map_err(err)?;
        let want = chebyshev_explicit(r);
        if got.iter().map(|&v| v as i128).collect::<Vec<_>>() != want {
            return Ok((false, format!("degree {r}: {got:?} != {want:?}")));
        }
        if r >= 1 && (got[r] != 1i64 << (r - 1) || got.iter().map(|v| v.unsigned_abs()).sum::<u64>() > 3u64.pow(r as u32 - 1)) {
            return Ok((false, format!("degree {r}: leading coefficient or absolute sum out of bounds")));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Ok((secs < 0.1, format!("degrees 0..=20 match the explicit sum, leading 2^(r-1), sum |c| <= 3^(r-1); {:.1} ms", secs * 1e3)))
}

const DETERMINISM_CONFIG: &str = r#"
seed = 7
[density]
family = "gaussian"
[kernel]
name = "epanechnikov"
[simulate]
n = [500, 2000]
h_exponent = -0.25
replicates = 300
tail_x = [1.0]
[blocks]
n = 2000
h = 0.08
draws = 2000
[depoisson]
n = 100
h = 0.1
replicates = 300
permutations = 199
[expbound]
n = 1000
h = 0.05
lambdas = [0.1]
replicates = 300
"#;

fn strip_timestamps(bytes: &[u8]) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(bytes).expect("manifest is JSON");
    let m = v.as_object_mut().expect("object");
    m.remove("started_unix");
    m.remove("finished_unix");
    v
}

fn c13() -> Outcome {
    let tmp = tempfile::tempdir().map_err(err)?;
    let cfg = tmp.path().join("det.toml");
    fs::write(&cfg, DETERMINISM_CONFIG).map_err(err)?;
    let run = |dir: &Path, threads: &str, cmd: &str| -> Result<i32, String> {
        let out = Command::new(env!("CARGO_BIN_EXE_l1kde"))
            .arg("--config")
            .arg(&cfg)
            .arg("--out-dir")
            .arg(dir)
            .args(["--threads", threads, cmd])
            .output()
            .map_err(err)?;
        out.status.code().ok_or_else(|| "killed by signal".to_string())
    };
    let (one, four) = (tmp.path().join("t1"), tmp.path().join("t4"));
    for cmd in ["simulate", "blocks", "depoisson", "expbound", "report"] {
        for (dir, th) in [(&one, "1"), (&four, "4")] {
            let code = run(dir, th, cmd)?;
            if ![0, 4].contains(&code) {
                return Ok((false, format!("{cmd} with {th} threads exited {code}")));
            }
        }
    }
    let mut names: Vec<String> = fs::read_dir(&one).map_err(err)?.filter_map(|e| e.ok()?.file_name().into_string().ok()).collect();
    names.sort();
    let mut compared = 0;
    for name in &names {
        let (a, b) = (fs::read(one.join(name)).map_err(err)?, fs::read(four.join(name)).map_err(err)?);
        let same = if name.starts_with("manifest_") { strip_timestamps(&a) == strip_timestamps(&b) } else { a == b };
        if !same {
            return Ok((false, format!("{name} differs between 1 and 4 threads")));
        }
        compared += 1;
    }
    Ok((compared >= 15, format!("{compared} output files byte-identical at 1 and 4 threads (manifests compared without timestamps)")))
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with('c') && a.len() == 3).collect();
    let wanted = |id: &str| filter.is_empty() || filter.iter().any(|f| f == id);
    let shared = Shared { variance: OnceCell::new(), blocks: OnceCell::new() };
    let criteria: Vec<(&str, &str, Box<dyn Fn(&Shared) -> Outcome>)> = vec![
        ("c01", "uniform-kernel variance closed form", Box::new(|_| c01())),
        ("c02", "Nabeya covariance vs Monte Carlo", Box::new(|_| c02())),
        ("c03", "variance convergence", Box::new(c03)),
        ("c04", "CLT shape", Box::new(c04)),
        ("c05", "rate-slope audit", Box::new(|_| c05())),
        ("c06", "partition invariants", Box::new(c06)),
        ("c07", "1-dependence", Box::new(c07)),
        ("c08", "cumulant decay", Box::new(|_| c08())),
        ("c09", "exponential bound", Box::new(|_| c09())),
        ("c10", "de-Poissonization", Box::new(|_| c10())),
        ("c11", "moderate deviations", Box::new(|_| c11())),
        ("c12", "Chebyshev coefficients", Box::new(|_| c12())),
        ("c13", "determinism across thread counts", Box::new(|_| c13())),
    ];
    let mut failed = Vec::new();
    let mut ran = 0;
    for (id, name, check) in &criteria {
        if !wanted(id) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let (pass, detail) = match check(&shared) {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!("{id} {verdict} {name} ({:.1} s): {detail}", t.elapsed().as_secs_f64());
        if !pass {
            failed.push(*id);
        }
    }
    println!("acceptance: {}/{ran} passed{}", ran - failed.len(), if failed.is_empty() { String::new() } else { format!(", failed: {}", failed.join(" ")) });
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
