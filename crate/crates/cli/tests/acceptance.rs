//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use gpt_density::benchmark::{benchmark_mw, benchmark_regression, MwSettings, RegressionSettings};
use gpt_density::estimate::l1_distance;
use gpt_density::gp::{factorize, DEFAULT_NUGGET};
use gpt_density::mixture::{marron_wand, SUPPORTED_MARRON_WAND};
use gpt_density::model::{
    eval_interpolated_density, eval_model_density, Dataset, NoiseScale, TransferFunction,
};
use gpt_density::sampler::{
    kernel_precision_posterior, lengthscale_log_target, residual_precision_posterior, row_value_posterior, ChainState,
    ChannelState, GammaPrior, GibbsModel, LatentScheme, ModelConfig, RunStats,
};
use gpt_density::simulate::{simulate_density, simulate_regression};
use gpt_density::special::{linspace, std_normal_inv_cdf, std_normal_pdf, trapezoid};
use gpt_density_cli::io::read_table;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Gamma, StudentsT};

const BIN: &str = env!("CARGO_BIN_EXE_gpt-density");

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn cli(args: &[&str]) {
    let out = Command::new(BIN).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn criterion_1() -> Outcome {
    let table = benchmark_mw(&SUPPORTED_MARRON_WAND, MwSettings::default(), &ModelConfig::default()).map_err(|e| e.to_string())?;
    let parts: Vec<String> = table
        .summary
        .iter()
        .map(|s| format!("MW{} L1 {:.4} (kernel {:.4})", s.id, s.mean_l1, s.mean_kde_l1))
        .collect();
    let ok = table.summary.len() == 4 && table.summary.iter().all(|s| s.mean_l1 <= 0.10);
    check(ok, format!("{}; threshold 0.10", parts.join(", ")))
}

fn criterion_2() -> Outcome {
    let t = benchmark_regression(RegressionSettings::default(), &ModelConfig::default()).map_err(|e| e.to_string())?;
    let l1: Vec<String> = t.mean_l1.iter().map(|(q, v)| format!("{q} {v:.4}")).collect();
    let ok = t.mean_mse <= 1.6
        && (0.80..=1.00).contains(&t.mean_coverage)
        && t.mean_l1.len() == 3
        && t.mean_l1.iter().all(|(_, v)| *v <= 0.15);
    check(
        ok,
        format!(
            "MSE {:.4} (<= 1.6), coverage {:.3} (in [0.8, 1]), L1 {} (each <= 0.15)",
            t.mean_mse,
            t.mean_coverage,
            l1.join(", ")
        ),
    )
}

fn criterion_3() -> Outcome {
    let mu = TransferFunction::tabulate(1024, std_normal_inv_cdf).map_err(|e| e.to_string())?;
    let sigma = NoiseScale::new(0.01).map_err(|e| e.to_string())?;
    let grid = linspace(-6.0, 6.0, 24_001);
    let exact = l1_distance(|y| eval_interpolated_density(&mu, sigma, y).unwrap(), std_normal_pdf, &grid)
        .map_err(|e| e.to_string())?;
    let riemann =
        l1_distance(|y| eval_model_density(&mu, sigma, y).unwrap(), std_normal_pdf, &grid).map_err(|e| e.to_string())?;
    check(exact < 0.02, format!("L1 {exact:.5} < 0.02 (equal-weight grid sum {riemann:.5})"))
}

fn inv2(m: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]
}

fn mul2(a: [[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

fn ln_normal(x: f64, m: f64, v: f64) -> f64 {
    -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (x - m) * (x - m) / (2.0 * v)
}

fn one_channel(latent: Vec<usize>, grid_values: Vec<f64>, row_values: Vec<f64>, precision: f64, phi: f64, c: f64) -> ChainState {
    ChainState { latent, channels: vec![ChannelState { grid_values, row_values, precision, phi, length_scale: c }] }
}

fn criterion_4() -> Outcome {
    let nu = DEFAULT_NUGGET;
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut note = |k: &'static str, v: f64| {
        let e = worst.entry(k).or_insert(0.0);
        *e = e.max(v);
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    for _ in 0..50 {
        let prior = GammaPrior::new(rng.random_range(0.5..3.0), rng.random_range(0.5..3.0));
        let r: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let post = residual_precision_posterior(&r, prior);
        let ss: f64 = r.iter().map(|v| v * v).sum();
        note("step 1", (post.shape - (prior.shape + 2.0)).abs().max((post.rate - (prior.rate + ss / 2.0)).abs()));

        let (y, tau, m, phi) = (rng.random_range(-2.0..2.0), rng.random_range(0.5..4.0), rng.random_range(-1.0..1.0), rng.random_range(0.5..3.0));
        let k = (1.0 + nu) / phi;
        let law = row_value_posterior(&[1.0], &[y], &DVector::from_element(1, m), &DMatrix::from_element(1, 1, k), tau)
            .map_err(|e| e.to_string())?;
        let mean = (y * tau + m / k) / (tau + 1.0 / k);
        note("step 3", (law.mean[0] - mean).abs().max((law.covariance[(0, 0)] - 1.0 / (tau + 1.0 / k)).abs()));

        let off = rng.random_range(-0.5..0.5);
        let kk = [[1.2, off], [off, 0.9]];
        let mm = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let counts = [2.0, 1.0];
        let ybar = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let kinv = inv2(kk);
        let cov = inv2([[kinv[0][0] + counts[0] * tau, kinv[0][1]], [kinv[1][0], kinv[1][1] + counts[1] * tau]]);
        let km = mul2(kinv, mm);
        let mean = mul2(cov, [km[0] + counts[0] * tau * ybar[0], km[1] + counts[1] * tau * ybar[1]]);
        let law = row_value_posterior(
            &counts,
            &ybar,
            &DVector::from_column_slice(&mm),
            &DMatrix::from_row_slice(2, 2, &[kk[0][0], kk[0][1], kk[1][0], kk[1][1]]),
            tau,
        )
        .map_err(|e| e.to_string())?;
        for i in 0..2 {
            note("step 3", (law.mean[i] - mean[i]).abs());
            for j in 0..2 {
                note("step 3", (law.covariance[(i, j)] - cov[i][j]).abs());
            }
        }

        let rho = rng.random_range(-0.8..0.8);
        let corr = [[1.0 + nu, rho], [rho, 1.0 + nu]];
        let f = factorize(&DMatrix::from_row_slice(2, 2, &[corr[0][0], corr[0][1], corr[1][0], corr[1][1]]), 0.0)
            .map_err(|e| e.to_string())?;
        let dev = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let s = mul2(inv2(corr), dev);
        let post = kernel_precision_posterior(&DVector::from_column_slice(&dev), &f, prior);
        note(
            "step 5",
            (post.shape - (prior.shape + 1.0)).abs().max((post.rate - (prior.rate + 0.5 * (dev[0] * s[0] + dev[1] * s[1]))).abs()),
        );

        let points = [0.2, 0.7];
        let v = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let m2 = [0.1, 0.3];
        let (c0, c1) = (rng.random_range(0.1..5.0), rng.random_range(0.1..5.0));
        let cprior = GammaPrior::new(1.0, 1.0);
        let direct = |c: f64| {
            let k01 = (-c * 0.25f64).exp() / phi;
            let kd = (1.0 + nu) / phi;
            let d = [v[0] - m2[0], v[1] - m2[1]];
            let s = mul2(inv2([[kd, k01], [k01, kd]]), d);
            -(2.0 * std::f64::consts::PI).ln() - 0.5 * (kd * kd - k01 * k01).ln() - 0.5 * (d[0] * s[0] + d[1] * s[1]) - c
                + c.ln()
        };
        let (vv, mv) = (DVector::from_column_slice(&v), DVector::from_column_slice(&m2));
        let got = lengthscale_log_target(&vv, &mv, &points, phi, c1, nu, cprior).map_err(|e| e.to_string())?
            - lengthscale_log_target(&vv, &mv, &points, phi, c0, nu, cprior).map_err(|e| e.to_string())?;
        note("step 6", (got - (direct(c1) - direct(c0))).abs());

        // n = 1, G = 2 latent weights for both layouts
        let (mu0, mu1) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..2.0));
        let data = Dataset::new(vec![y]).map_err(|e| e.to_string())?;
        let s = one_channel(vec![0], vec![mu0, mu1], vec![mu0], tau, phi, 2.0);
        let l0 = ln_normal(y, mu0, 1.0 / tau);
        let l1 = ln_normal(y, mu1, 1.0 / tau);
        let sc = |x: f64| 2.0 * x.sin() + x.cos();
        let g0 = ln_normal(mu0, sc(0.25), (1.0 + nu) / phi);
        let g1 = ln_normal(mu1, sc(0.75), (1.0 + nu) / phi);
        for (scheme, expect) in [
            (LatentScheme::Grid, 1.0 / (1.0 + (l0 - l1).exp())),
            (LatentScheme::Row, 1.0 / (1.0 + (l0 + g0 - l1 - g1).exp())),
        ] {
            let cfg = ModelConfig { grid_size: 2, iters: 2, burn_in: 1, scheme, ..ModelConfig::default() };
            let model = GibbsModel::new(&data, cfg).map_err(|e| e.to_string())?;
            let p = model.latent_probabilities(&s, 0).map_err(|e| e.to_string())?;
            note("step 2 sum", (p[0] + p[1] - 1.0).abs());
            note("step 2 hand", (p[1] - expect).abs());
        }
    }
    let ok = worst.iter().all(|(k, v)| if *k == "step 2 sum" { *v <= 1e-12 } else { *v <= 1e-10 });
    let detail: Vec<String> = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    check(ok, format!("max abs error: {} (tolerance 1e-10, weight sums 1e-12)", detail.join(", ")))
}

fn ks(draws: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    draws.sort_by(f64::total_cmp);
    let n = draws.len() as f64;
    draws
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max)
}

fn criterion_5() -> Outcome {
    let sweeps = 20_000;
    let probe = 3;
    let cfg = ModelConfig { grid_size: 8, iters: sweeps, burn_in: 0, seed: 2024, ..ModelConfig::default() };
    let data = Dataset::new(vec![0.0; 5]).map_err(|e| e.to_string())?;
    let mut model = GibbsModel::new(&data, cfg.clone()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = model.draw_from_prior(&mut rng).map_err(|e| e.to_string())?;
    let mut stats = RunStats::new(1);
    let (mut tau, mut phi, mut c, mut value) = (vec![], vec![], vec![], vec![]);
    for _ in 0..sweeps {
        model.simulate_observations(&state, &mut rng);
        model.sweep(&mut state, &mut rng, &mut stats).map_err(|e| e.to_string())?;
        let ch = &state.channels[0];
        tau.push(ch.precision);
        phi.push(ch.phi);
        c.push(ch.length_scale);
        value.push(ch.grid_values[probe]);
    }
    let gamma = |p: GammaPrior| Gamma::new(p.shape, p.rate).unwrap();
    let (a, b) = (cfg.response_phi.shape, cfg.response_phi.rate);
    let loc = model.mean_function(0).eval(model.grid()[probe]);
    let t = StudentsT::new(loc, ((1.0 + cfg.nugget) * b / a).sqrt(), 2.0 * a).unwrap();
    let d_tau = ks(&mut tau, |x| gamma(cfg.response_precision).cdf(x));
    let d_phi = ks(&mut phi, |x| gamma(cfg.response_phi).cdf(x));
    let d_val = ks(&mut value, |x| t.cdf(x));
    let d_c = ks(&mut c, |x| gamma(cfg.length_scale).cdf(x));
    check(
        d_tau < 0.05 && d_phi < 0.05 && d_val < 0.05,
        format!("KS precision {d_tau:.4}, phi {d_phi:.4}, grid value {d_val:.4} (each < 0.05); length-scale {d_c:.4}"),
    )
}

/// Trapezoid mass of every curve in a CSV, grouped by the `keys` columns.
fn masses(path: &Path, keys: &[&str], x: &str, f: &str) -> Vec<(Vec<f64>, f64)> {
    let t = read_table(path).unwrap();
    let key_cols: Vec<usize> = keys.iter().map(|k| t.column_index(k).unwrap()).collect();
    let (xi, fi) = (t.column_index(x).unwrap(), t.column_index(f).unwrap());
    let mut groups: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = Vec::new();
    for r in &t.rows {
        let key: Vec<f64> = key_cols.iter().map(|&j| r[j]).collect();
        if groups.last().is_none_or(|g| g.0 != key) {
            groups.push((key, vec![], vec![]));
        }
        let g = groups.last_mut().unwrap();
        g.1.push(r[xi]);
        g.2.push(r[fi]);
    }
    groups.into_iter().map(|(k, xs, fs)| (k, trapezoid(&xs, &fs))).collect()
}

fn criterion_6() -> Outcome {
    let dir = scratch("normalization");
    let y = simulate_density(&marron_wand(6).unwrap(), 100, 61);
    let data = dir.join("mw6.csv");
    fs::write(&data, std::iter::once("y".to_string()).chain(y.iter().map(|v| format!("{v:?}"))).collect::<Vec<_>>().join("\n"))
        .unwrap();
    let out = dir.join("density");
    cli(&["--out", out.to_str().unwrap(), "estimate-density", data.to_str().unwrap()]);
    let marginal = masses(&out.join("density.csv"), &[], "y", "mean");

    let sim = simulate_regression(100, 3.0, NoiseScale::new(2.0).unwrap(), 62).unwrap();
    let (ys, zs) = (sim.y(), sim.predictor(0));
    let train = dir.join("train.csv");
    let test = dir.join("test.csv");
    let rows = |range: std::ops::Range<usize>, with_y: bool| {
        range
            .map(|i| if with_y { format!("{:?},{:?}", ys[i], zs[i]) } else { format!("{:?}", zs[i]) })
            .collect::<Vec<_>>()
            .join("\n")
    };
    fs::write(&train, format!("y,z\n{}\n", rows(0..50, true))).unwrap();
    fs::write(&test, format!("z\n{}\n", rows(50..100, false))).unwrap();
    let cfg = dir.join("regress.toml");
    fs::write(&cfg, "z_quantiles = [0.1, 0.4, 0.6, 0.9]\n").unwrap();
    let out = dir.join("regress");
    cli(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "regress",
        train.to_str().unwrap(),
        test.to_str().unwrap(),
    ]);
    let conditional = masses(&out.join("conditional_density.csv"), &["z"], "y", "mean");

    let out = dir.join("prior");
    cli(&["--out", out.to_str().unwrap(), "prior-draws"]);
    let prior = masses(&out.join("prior_draws.csv"), &["phi", "c", "draw"], "y", "density");

    let worst = |m: &[(Vec<f64>, f64)]| m.iter().map(|(_, v)| (v - 1.0).abs()).fold(0.0, f64::max);
    let ok = marginal.len() == 1
        && conditional.len() == 4
        && prior.len() == 40
        && [&marginal, &conditional, &prior].iter().all(|m| worst(m) <= 2e-2);
    check(
        ok,
        format!(
            "max |mass - 1|: marginal {:.2e}, {} conditional curves {:.2e}, {} prior draws {:.2e} (tolerance 2e-2)",
            worst(&marginal),
            conditional.len(),
            worst(&conditional),
            prior.len(),
            worst(&prior)
        ),
    )
}

fn criterion_7() -> Outcome {
    let dir = scratch("determinism");
    let cfg = dir.join("short.toml");
    fs::write(&cfg, "iters = 1500\nburn_in = 500\nreplicates = 2\nids = [2, 6]\nseed = 17\n").unwrap();
    let mut compared = Vec::new();
    for (cmd, files) in [
        ("benchmark-mw", ["mw_table.csv", "mw_summary.csv"]),
        ("benchmark-regression", ["regression_table.csv", "regression_summary.csv"]),
    ] {
        let a = dir.join(format!("{cmd}-a"));
        let b = dir.join(format!("{cmd}-b"));
        cli(&["--config", cfg.to_str().unwrap(), "--threads", "1", "--out", a.to_str().unwrap(), cmd]);
        cli(&["--config", cfg.to_str().unwrap(), "--threads", "2", "--out", b.to_str().unwrap(), cmd]);
        for f in files {
            let (x, y) = (fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
            if x != y || x.is_empty() {
                return Err(format!("{cmd}: {f} differs between reruns"));
            }
            compared.push(f);
        }
    }
    Ok(format!("byte-identical across reruns: {}", compared.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("density benchmark L1", criterion_1),
        ("regression benchmark", criterion_2),
        ("inverse-CDF transfer closeness", criterion_3),
        ("conjugate step oracles", criterion_4),
        ("joint-distribution test", criterion_5),
        ("density normalization", criterion_6),
        ("benchmark determinism", criterion_7),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let label = format!("criterion {} ({name})", i + 1);
        if !filter.is_empty() && !filter.iter().any(|f| label.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(d) => println!("PASS {label}: {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL {label}: {d} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
