//! Subcommand implementations. Each returns its summary checks; `main`
//! turns failed checks into exit code 4.

use std::path::Path;

use l1kde_core::block_checks::{
    block_pool, block_variance_check, covariance_sn_un, cumulant_estimate, moment_growth_check, one_dependence_test, BlockParams,
    BlockSetup,
};
use l1kde_core::kde::natural_window;
use l1kde_core::kernel::nabeya_cov;
use l1kde_core::mc::{depoissonization_check, exponential_moment_check, moderate_deviation_ratio, normalize, variance_convergence};
use l1kde_core::rates::{rate_fit, rate_ledger, RateConstants, RateLedger};
use l1kde_core::rng::replicate_rng;
use l1kde_core::{Density, Kernel, KernelSpec};
use serde::Serialize;
use serde_json::json;

use crate::config::Config;
use crate::output::{fmt17, Check, Outputs, Summary};
use crate::CliError;

pub struct Ctx<'a> {
    pub config: &'a Config,
    pub out: &'a mut Outputs,
    pub threads: usize,
}

fn summary<D: Serialize>(ctx: &mut Ctx, command: &str, checks: Vec<Check>, details: D) -> Result<Vec<Check>, CliError> {
    let s = Summary { command: command.to_string(), checks, details };
    ctx.out.json(&format!("summary_{command}.json"), &s)?;
    Ok(s.checks)
}

fn row(values: &[f64]) -> Vec<String> {
    values.iter().map(|&v| fmt17(v)).collect()
}

pub fn sigma2(ctx: &mut Ctx, kernel_name: Option<&str>, kernel_file: Option<&Path>) -> Result<Vec<Check>, CliError> {
    let spec = match (kernel_name, kernel_file) {
        (_, Some(p)) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str::<KernelSpec>(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        (Some(name), None) => KernelSpec { name: name.to_string(), ..KernelSpec::default() },
        (None, None) => ctx.config.kernel.clone().unwrap_or_default(),
    };
    let k = spec.build()?;
    let s2 = k.asymptotic_variance()?;
    let rows: Vec<Vec<String>> = (0..=200)
        .map(|i| {
            let t = -1.0 + 0.01 * i as f64;
            let rho = k.autocorrelation(t);
            Ok(row(&[t, rho, nabeya_cov(rho.clamp(-1.0, 1.0))?]))
        })
        .collect::<Result<_, l1kde_core::Error>>()?;
    ctx.out.csv("rho_table.csv", &["t", "rho", "phi"], rows)?;
    let norms = k.norms();
    let path = ctx.out.dir().join("rho_table.csv");
    let report = json!({
        "kernel": k.name(),
        "sigma_sq": s2,
        "norms": norms,
        "rho_table": path.display().to_string(),
    });
    println!("{}", serde_json::to_string_pretty(&report).expect("serialisable"));
    let bound = 2.0 * norms.l2;
    summary(ctx, "sigma2", vec![Check::new("sigma_sq_within_bound", s2, Some(s2 > 0.0 && s2 <= bound)).with_ci(0.0, bound)], report)
}

const LEDGER_COLUMNS: [&str; 23] = [
    "n", "h", "a", "sigma2", "lambda_e", "phi_n", "beta_n", "d_n", "eps_n", "n32_n", "p_n", "l_n", "r_n", "ll_n", "mm_n", "psi_n",
    "big_psi_n", "tau_star", "alpha_n", "omega_n", "y_n", "dd_n", "not_yet_asymptotic",
];

fn ledger_row(l: &RateLedger) -> Vec<String> {
    let mut r = vec![l.n.to_string()];
    r.extend(row(&[
        l.h, l.a, l.sigma2, l.lambda_e, l.phi_n, l.beta_n, l.d_n, l.eps_n, l.n32_n, l.p_n, l.l_n, l.r_n, l.ll_n, l.mm_n, l.psi_n,
        l.big_psi_n, l.tau_star, l.alpha_n, l.omega_n, l.y_n, l.dd_n,
    ]));
    r.push(l.not_yet_asymptotic.to_string());
    r
}

pub fn rates(ctx: &mut Ctx, example: Option<u8>) -> Result<Vec<Check>, CliError> {
    let cfg = match (&ctx.config.rates, example) {
        (Some(c), Some(e)) => crate::config::RatesCfg { example: e, ..c.clone() },
        (Some(c), None) => c.clone(),
        (None, Some(e)) => toml::from_str(&format!("example = {e}\nn = [10000, 100000, 1000000, 10000000]\n")).expect("static config"),
        (None, None) => return Err(CliError::Config("missing key 'rates.example' (or pass --example)".into())),
    };
    let f = Density::example(cfg.example, cfg.gamma())?;
    let k = ctx.config.kernel()?;
    let c = RateConstants { a: cfg.a_const, psi_scale: cfg.psi_scale };
    let mut ledgers = Vec::new();
    for (n, h) in cfg.schedule()? {
        let set = f.example_set(h)?;
        ledgers.push(rate_ledger(&f, &k, n, h, &set, c)?);
    }
    ctx.out.csv("rates_ledger.csv", &LEDGER_COLUMNS, ledgers.iter().map(ledger_row))?;
    let hs: Vec<f64> = ledgers.iter().map(|l| l.h).collect();
    let slope = |v: Vec<f64>| if hs.len() >= 2 { rate_fit(&hs, &v).ok() } else { None };
    let mut slopes = serde_json::Map::new();
    type Getter = fn(&RateLedger) -> f64;
    let fields: [(&str, Getter); 10] = [
        ("eps_n", |l| l.eps_n),
        ("p_n", |l| l.p_n),
        ("tau_star", |l| l.tau_star),
        ("r_n", |l| l.r_n),
        ("mm_n", |l| l.mm_n),
        ("ll_n", |l| l.ll_n),
        ("l_n", |l| l.l_n),
        ("phi_n", |l| l.phi_n),
        ("psi_n", |l| l.psi_n),
        ("omega_n", |l| l.omega_n),
    ];
    for (name, get) in fields {
        slopes.insert(name.into(), json!(slope(ledgers.iter().map(get).collect())));
    }
    slopes.insert(
        "mm_n_over_sqrt_log".into(),
        json!(slope(ledgers.iter().map(|l| l.mm_n / (1.0 / l.h).ln().sqrt()).collect())),
    );
    ctx.out.json("rates_slopes.json", &slopes)?;
    let checks: Vec<Check> = ledgers
        .iter()
        .map(|l| Check::new(format!("not_yet_asymptotic_n{}", l.n), if l.not_yet_asymptotic { 1.0 } else { 0.0 }, None))
        .collect();
    let checks = summary(ctx, "rates", checks, json!({ "example": cfg.example, "gamma": cfg.gamma(), "slopes": slopes }))?;
    if !ledgers.is_empty() && ledgers.iter().all(|l| l.not_yet_asymptotic) {
        return Err(CliError::Regime(format!(
            "tau* or psi_n is at least 1 at every schedule point (smallest tau* = {:.3e}); the bounds are vacuous here. \
             Lower rates.psi_scale or rates.a_const, or extend the schedule to larger n",
            ledgers.iter().map(|l| l.tau_star).fold(f64::INFINITY, f64::min)
        )));
    }
    Ok(checks)
}

pub fn simulate(ctx: &mut Ctx) -> Result<Vec<Check>, CliError> {
    let cfg = ctx.config.section(&ctx.config.simulate, "simulate")?.clone();
    let seed = ctx.config.seed()?;
    let (f, k) = (ctx.config.density()?, ctx.config.kernel()?);
    let schedule = cfg.schedule()?;
    let table = variance_convergence(&f, &k, &schedule, cfg.replicates, seed, ctx.threads)?;
    for pool in &table.pools {
        let rows = pool.rows.iter().map(|r| {
            let mut v = vec![r.replicate_id.to_string(), r.seed.to_string(), r.n.to_string(), fmt17(r.h), r.actual_count.to_string()];
            v.extend(row(&[r.l1_deviation, r.window_lo, r.window_hi, r.grid_step]));
            v
        });
        let header = ["replicate_id", "seed", "n", "h", "actual_count", "l1_deviation", "window_lo", "window_hi", "grid_step"];
        ctx.out.csv(&format!("replicates_n{}.csv", pool.n), &header, rows)?;
    }
    let last = table.rows.last().ok_or_else(|| CliError::Config("simulate.n is empty".into()))?;
    let mut checks = vec![
        Check::new("n_var_ci_contains_sigma2", last.n_var, Some(last.ci_lo <= table.sigma2 && table.sigma2 <= last.ci_hi)).with_ci(last.ci_lo, last.ci_hi),
        Check::new("ks_final", last.ks, Some(last.ks <= cfg.ks_max)),
    ];
    if table.rows.len() > 1 {
        checks.push(Check::new("ratio_monotone_toward_1", last.ratio, Some(table.ratio_monotone())));
        checks.push(Check::new("ks_decreasing", last.ks, Some(table.ks_decreasing())));
    }
    let mut tails = Vec::new();
    if !cfg.tail_x.is_empty() {
        let zs = normalize(table.pools.last().expect("non-empty"), table.sigma2.sqrt());
        let coverage = 1.0 - 0.05 / (2.0 * cfg.tail_x.len() as f64);
        tails = moderate_deviation_ratio(&zs, &cfg.tail_x, coverage, cfg.min_tail_hits);
        for t in &tails {
            let pass = if t.flagged { None } else { Some(t.contains_one()) };
            checks.push(Check::new(format!("upper_tail_ratio_x{}", t.x), t.upper_ratio, pass).with_ci(t.upper_ci.0, t.upper_ci.1));
            checks.push(Check::new(format!("lower_tail_ratio_x{}", t.x), t.lower_ratio, pass).with_ci(t.lower_ci.0, t.lower_ci.1));
        }
    }
    summary(ctx, "simulate", checks, json!({ "sigma2": table.sigma2, "rows": table.rows, "tail_ratios": tails }))
}

fn block_setup(ctx: &Ctx, n: usize, h: f64, psi_scale: f64, alpha: f64) -> Result<(Density, Kernel, BlockSetup), CliError> {
    let (f, k) = (ctx.config.density()?, ctx.config.kernel()?);
    let setup = BlockSetup::new(&f, &k, n, h, BlockParams { psi_scale, alpha })?;
    Ok((f, k, setup))
}

pub fn blocks(ctx: &mut Ctx) -> Result<Vec<Check>, CliError> {
    let cfg = ctx.config.section(&ctx.config.blocks, "blocks")?.clone();
    let seed = ctx.config.seed()?;
    let (f, k, setup) = block_setup(ctx, cfg.n, cfg.h, cfg.psi_scale, cfg.alpha)?;
    let p = &setup.partition;
    ctx.out.csv(
        "partition.csv",
        &["i", "z_lo", "z_hi", "p", "q", "class"],
        p.blocks.iter().map(|b| {
            let mut r = vec![b.i.to_string()];
            r.extend(row(&[b.z_lo, b.z_hi, b.p, b.q]));
            r.push(b.class.label().to_string());
            r
        }),
    )?;
    let sampler = setup.sampler(&f, &k, None, None)?;
    let pool = block_pool(&sampler, cfg.draws, seed, ctx.threads)?;
    ctx.out.csv(
        "block_pool.csv",
        &["draw", "eta", "S_n", "U_n", "V_n"],
        pool.iter().enumerate().map(|(i, d)| {
            let mut r = vec![i.to_string(), d.eta.to_string()];
            r.extend(row(&[d.s, d.u_total, d.v]));
            r
        }),
    )?;
    let s2 = setup.ledger.sigma2;
    let norms = k.norms();
    let var = block_variance_check(&sampler, &pool, s2);
    let dep = one_dependence_test(&sampler, &pool);
    let cov = covariance_sn_un(&sampler, &pool, norms.l2, norms.l3, s2.sqrt(), setup.set.measure());
    let mg = moment_growth_check(&sampler, &pool, 4, setup.ledger.big_psi_n)?;
    let mut rng = replicate_rng(seed, 0xC0_4A, cfg.n as u64);
    let k3 = cumulant_estimate(&pool, (1.0, 0.0), 3, 200, &mut rng)?;
    let k4 = cumulant_estimate(&pool, (1.0, 0.0), 4, 200, &mut rng)?;
    let inv = setup.invariants;
    let checks = vec![
        Check::new("partition_invariants", if inv.all() { 1.0 } else { 0.0 }, Some(inv.all())),
        Check::new("var_s", var.var_s, Some((var.var_s - 1.0).abs() <= 0.05)).with_ci(0.95, 1.05),
        Check::new("var_u", var.var_u, Some((var.var_u - var.var_u_expected).abs() <= 0.03))
            .with_ci(var.var_u_expected - 0.03, var.var_u_expected + 0.03),
        Check::new("sum_var_delta", var.sum_var_delta, Some(var.sum_var_delta <= 4.0 + 5.0 * var.sum_var_delta_se)),
        Check::new("block_variance_sandwich", if var.sandwich_ok { 1.0 } else { 0.0 }, Some(var.sandwich_ok)),
        Check::new("max_nonadjacent_cov_z", dep.max_nonadjacent_z, Some(dep.max_nonadjacent_z <= 4.0)),
        Check::new("cov_s_v_z", dep.cov_s_v_z, Some(dep.cov_s_v_z.abs() <= 4.0)),
        Check::new("cov_u_v_z", dep.cov_u_v_z, Some(dep.cov_u_v_z.abs() <= 4.0)),
        Check::new("cov_s_u", cov.chi_hat, None).with_ci(cov.chi_hat - 2.0 * cov.se, cov.chi_hat + 2.0 * cov.se),
        Check::new("gamma3_s", k3.gamma, None).with_ci(k3.gamma - 2.0 * k3.se, k3.gamma + 2.0 * k3.se),
        Check::new("gamma4_s", k4.gamma, None).with_ci(k4.gamma - 2.0 * k4.se, k4.gamma + 2.0 * k4.se),
    ];
    let details = json!({
        "partition": { "m_cut": p.m_cut, "h_star": p.h_star, "psi": p.psi, "alpha": p.alpha, "blocks": p.blocks.len(),
                       "regular": sampler.regular_count(), "sigma_c": sampler.sigma_c, "invariants": inv },
        "ledger": setup.ledger,
        "variance": var,
        "dependence": dep,
        "cov_sn_un": cov,
        "moment_growth_r4": mg,
    });
    summary(ctx, "blocks", checks, details)
}

pub fn depoisson(ctx: &mut Ctx) -> Result<Vec<Check>, CliError> {
    let cfg = ctx.config.section(&ctx.config.depoisson, "depoisson")?.clone();
    let seed = ctx.config.seed()?;
    let (f, k, setup) = block_setup(ctx, cfg.n, cfg.h, cfg.psi_scale, cfg.alpha)?;
    let sampler = setup.sampler(&f, &k, None, None)?;
    let rep = depoissonization_check(&sampler, cfg.replicates, cfg.permutations, seed, ctx.threads)?;
    ctx.out.csv(
        "depoisson_samples.csv",
        &["index", "fixed_n", "conditioned"],
        rep.fixed.iter().zip(&rep.conditioned).enumerate().map(|(i, (a, b))| {
            let mut r = vec![i.to_string()];
            r.extend(row(&[*a, *b]));
            r
        }),
    )?;
    let rel = rep.acceptance_rate / rep.expected_rate - 1.0;
    let checks = vec![
        Check::new("ks_permutation_p", rep.test.p_value, Some(rep.test.p_value >= 0.01)),
        Check::new("acceptance_rate", rep.acceptance_rate, Some(rel.abs() <= 0.25)).with_ci(0.75 * rep.expected_rate, 1.25 * rep.expected_rate),
    ];
    let details = json!({
        "n": rep.n, "accepted": rep.accepted, "attempts": rep.attempts, "acceptance_rate": rep.acceptance_rate,
        "expected_rate": rep.expected_rate, "ks": rep.test.statistic, "p_value": rep.test.p_value, "permutations": rep.test.permutations,
    });
    summary(ctx, "depoisson", checks, details)
}

pub fn expbound(ctx: &mut Ctx) -> Result<Vec<Check>, CliError> {
    let cfg = ctx.config.section(&ctx.config.expbound, "expbound")?.clone();
    let seed = ctx.config.seed()?;
    let (f, k) = (ctx.config.density()?, ctx.config.kernel()?);
    let (lo, hi) = natural_window(&f, cfg.h);
    let b = f.example_set(cfg.h)?.complement_within(lo, hi);
    let rep = exponential_moment_check(&f, &k, cfg.h, cfg.n, &b, &cfg.lambdas, cfg.replicates, seed, ctx.threads)?;
    ctx.out.csv(
        "expbound.csv",
        &["lambda", "mc_mean", "mc_se", "bound", "series_diverges", "pass"],
        rep.rows.iter().map(|r| {
            let mut v = row(&[r.lambda, r.mc_mean, r.mc_se, r.bound]);
            v.push(r.series_diverges.to_string());
            v.push(r.pass.to_string());
            v
        }),
    )?;
    ctx.out.csv("xi_pool.csv", &["replicate_id", "seed", "xi"], rep.pool.rows.iter().zip(&rep.pool.stats).map(|(r, x)| vec![r.replicate_id.to_string(), r.seed.to_string(), fmt17(*x)]))?;
    let checks = rep
        .rows
        .iter()
        .map(|r| Check::new(format!("exp_moment_lambda{}", r.lambda), r.mc_mean, Some(r.pass)).with_ci(r.mc_mean - 3.0 * r.mc_se, r.mc_mean + 3.0 * r.mc_se))
        .collect();
    let details = json!({ "omega": rep.omega, "kappa": rep.kappa, "xi_sd": rep.xi_sd, "set": b, "rows": rep.rows, "tail_rows": rep.tail_rows });
    summary(ctx, "expbound", checks, details)
}

pub fn report(ctx: &mut Ctx) -> Result<Vec<Check>, CliError> {
    let dir = ctx.out.dir().to_path_buf();
    let mut names: Vec<String> = std::fs::read_dir(&dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().and_then(|e| e.file_name().into_string().ok()))
        .filter(|n| n.starts_with("summary_") && n.ends_with(".json") && n != "summary_report.json")
        .collect();
    names.sort();
    let mut all = Vec::new();
    let mut md = String::from("| command | metric | value | interval | verdict |\n|---|---|---|---|---|\n");
    for name in &names {
        let text = std::fs::read_to_string(dir.join(name)).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        let command = v["command"].as_str().unwrap_or("?").to_string();
        let checks: Vec<Check> = serde_json::from_value(v["checks"].clone()).map_err(|e| CliError::Io(format!("{name}: {e}")))?;
        for c in checks {
            let interval = match (c.ci_lo, c.ci_hi) {
                (Some(a), Some(b)) => format!("[{a:.6}, {b:.6}]"),
                _ => String::new(),
            };
            let verdict = match c.pass {
                Some(true) => "pass",
                Some(false) => "FAIL",
                None => "info",
            };
            md.push_str(&format!("| {command} | {} | {:.6} | {interval} | {verdict} |\n", c.metric, c.value));
            all.push(Check { metric: format!("{command}.{}", c.metric), ..c });
        }
    }
    print!("{md}");
    ctx.out.raw_text("report.md", &md)?;
    let all_pass = all.iter().all(|c| c.pass != Some(false));
    ctx.out.json("report.json", &json!({ "sources": names, "all_pass": all_pass, "checks": all }))?;
    Ok(all)
}
