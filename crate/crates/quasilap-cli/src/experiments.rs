//! The experiment runners behind each subcommand.
//!
//! Every runner consumes a validated [`ExperimentConfig`] and produces an
//! [`Outcome`]: a column-ordered data table, a summary object, and the
//! pass/fail check rows that end up in the manifest. Runners are
//! deterministic functions of the config; sweep points are computed
//! independently (optionally in parallel) and merged in sorted key order,
//! so the artifacts do not depend on `--jobs`.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::json;

use quasilap::beltrami::{solve_torus, BeltramiCoefficient, SolveOptions, SupportKind};
use quasilap::determinant::{
    det_holomorphy_check, eigen_spectrum, log_det_branch, spectral_matrix, zeta_logdet_torus,
    HolomorphyOptions, HolomorphyReport,
};
use quasilap::grid::{make_torus_grid, try_cr_residual, ComplexGrid, SampledField};
use quasilap::operator::{solve_delta_mn, symbol_report};
use quasilap::oracles::{torus_eigenvalues, torus_logdet_exact, torus_logdet_extension};
use quasilap::potential::{
    cone_potential, extension_structure_check, inverse_square_potential, mixed_hessian_check,
    wp_genus1, ClosedTwoForm, ConeChart, Rect,
};
use quasilap::presets::BeltramiPreset;

use crate::artifact::{CheckRow, Outcome, Table};
use crate::config::ExperimentConfig;
use crate::CliError;

/// Relative agreement required between the zeta determinant and the
/// exact eta-product value.
pub const TORUS_DET_BOUND: f64 = 1e-8;
/// Equation-residual certificate required from the Beltrami solver.
pub const BELTRAMI_RESIDUAL_BOUND: f64 = 1e-10;
/// Linearity required of the symbol angle as a function of the scale.
pub const ANGLE_R2_BOUND: f64 = 0.99;
/// Cauchy-Riemann residual allowed for the determinant along a
/// coefficient line.
pub const HOLOMORPHY_BOUND: f64 = 1e-5;
/// Factor by which the diagonal family must beat the holomorphic one.
pub const CONTRAST_FACTOR: f64 = 10.0;

pub fn run(cfg: &ExperimentConfig, jobs: usize) -> Result<Outcome, CliError> {
    match cfg.experiment.as_str() {
        "torus-det" => torus_det(cfg),
        "beltrami-solve" => beltrami_solve(cfg),
        "symbol-angle" => symbol_angle(cfg, jobs),
        "det-sweep" => det_sweep(cfg, jobs),
        "potential-verify" => potential_verify(cfg),
        "holomorphy-check" => holomorphy_check(cfg),
        other => Err(CliError::Config(format!("unknown experiment {other:?}"))),
    }
}

fn run_err(e: quasilap::Error) -> CliError {
    CliError::Run(e.to_string())
}

fn solve_opts(cfg: &ExperimentConfig) -> SolveOptions {
    SolveOptions { tol: cfg.solver.tol, max_iter: cfg.solver.max_iter }
}

fn sampled_preset(grid: &ComplexGrid, text: &str) -> Result<SampledField, CliError> {
    let preset = BeltramiPreset::parse(text).map_err(run_err)?;
    preset.sample(grid).map_err(run_err)
}

fn coefficient(field: SampledField) -> Result<BeltramiCoefficient, CliError> {
    BeltramiCoefficient::new(field, SupportKind::Periodic).map_err(run_err)
}

fn cx(v: Complex64) -> String {
    format!("{}{}{}i", v.re, if v.im < 0.0 { "-" } else { "+" }, v.im.abs())
}

fn torus_det(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let z = cfg.modulus()?;
    let det = zeta_logdet_torus(z).map_err(run_err)?;
    let oracle = torus_logdet_exact(z).map_err(run_err)?;
    let delta = (det.log_det.re - oracle).abs() / oracle.abs().max(f64::MIN_POSITIVE);

    let mut table = Table::new(vec![
        "z",
        "n",
        "zeta_logdet",
        "oracle_logdet",
        "delta",
        "bound",
        "pass",
    ]);
    let pass = delta <= TORUS_DET_BOUND;
    table.push(vec![
        json!(cfg.grid.modulus),
        json!(cfg.grid.n),
        json!(det.log_det.re),
        json!(oracle),
        json!(delta),
        json!(TORUS_DET_BOUND),
        json!(pass),
    ]);
    Ok(Outcome {
        table,
        summary: json!({ "method": "zeta-exact-torus", "branch_index": det.branch_index }),
        checks: vec![CheckRow::le("zeta-vs-eta-oracle", delta, TORUS_DET_BOUND)],
    })
}

fn beltrami_solve(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let z = cfg.modulus()?;
    let grid = make_torus_grid(z, cfg.grid.n).map_err(run_err)?;
    let preset_text = cfg.presets.mu.as_deref().expect("validated");
    let field = sampled_preset(&grid, preset_text)?;
    let mu = coefficient(field)?;
    let map = solve_torus(&mu, &solve_opts(cfg)).map_err(run_err)?;
    let new_modulus = map.new_modulus().map_err(run_err)?;

    let residual = map.residual();
    let mut table = Table::new(vec![
        "preset",
        "z",
        "n",
        "residual",
        "iterations",
        "contraction",
        "new_modulus",
        "bound",
        "pass",
    ]);
    let pass = residual <= BELTRAMI_RESIDUAL_BOUND;
    table.push(vec![
        json!(preset_text),
        json!(cfg.grid.modulus),
        json!(cfg.grid.n),
        json!(residual),
        json!(map.iterations()),
        json!(map.contraction()),
        json!(cx(new_modulus)),
        json!(BELTRAMI_RESIDUAL_BOUND),
        json!(pass),
    ]);
    Ok(Outcome {
        table,
        summary: json!({
            "dilatation": mu.dilatation(),
            "min_abs_partial": map.min_abs_partial(),
        }),
        checks: vec![CheckRow::le("residual-certificate", residual, BELTRAMI_RESIDUAL_BOUND)],
    })
}

/// Least-squares line through `(x, y)`; returns `(slope, intercept, r2)`.
fn linear_fit(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_res: f64 = points
        .iter()
        .map(|p| {
            let e = p.1 - (slope * p.0 + intercept);
            e * e
        })
        .sum();
    let ss_tot: f64 = points.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (slope, intercept, r2)
}

fn in_pool<T: Send>(jobs: usize, work: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::Run(format!("thread pool: {e}")))?;
    Ok(pool.install(work))
}

fn symbol_angle(cfg: &ExperimentConfig, jobs: usize) -> Result<Outcome, CliError> {
    let z = cfg.modulus()?;
    let grid = make_torus_grid(z, cfg.grid.n).map_err(run_err)?;
    let mu_f = sampled_preset(&grid, cfg.presets.mu.as_deref().expect("validated"))?;
    let nu_f = sampled_preset(&grid, cfg.presets.nu.as_deref().expect("validated"))?;
    let opts = solve_opts(cfg);

    let base_op = solve_delta_mn(
        &coefficient(mu_f.clone())?,
        &coefficient(nu_f.clone())?,
        &opts,
    )
    .map_err(run_err)?;
    let base = symbol_report(&base_op, 16).map_err(run_err)?;

    let delta = nu_f.zip_map(&mu_f, |a, b| a - b).map_err(run_err)?;
    let spread = delta.sup_norm();
    let mut table = Table::new(vec!["eps", "max_abs_arg"]);
    let mut checks = vec![CheckRow::le(
        "base-angle-below-cut",
        base.max_abs_arg,
        FRAC_PI_2,
    )];
    let summary;

    if spread < 1e-14 {
        // nu == mu: the family sits on the diagonal and the symbol angle
        // must vanish outright; there is no direction to sweep.
        checks.push(CheckRow::le("diagonal-angle-zero", base.max_abs_arg, 1e-10));
        summary = json!({
            "base_max_abs_arg": base.max_abs_arg,
            "diagonal": true,
            "min_modulus": base.min_modulus,
        });
    } else {
        let unit = delta.map(|v| v / spread);
        let mut eps_list = cfg.sweep.eps.clone();
        eps_list.sort_by(f64::total_cmp);
        let angles: Vec<(f64, Result<f64, CliError>)> = in_pool(jobs, || {
            eps_list
                .par_iter()
                .map(|&eps| {
                    let angle = (|| {
                        let nu_eps =
                            mu_f.zip_map(&unit, |m, d| m + eps * d).map_err(run_err)?;
                        let op = solve_delta_mn(
                            &coefficient(mu_f.clone())?,
                            &coefficient(nu_eps)?,
                            &opts,
                        )
                        .map_err(run_err)?;
                        Ok(symbol_report(&op, 16).map_err(run_err)?.max_abs_arg)
                    })();
                    (eps, angle)
                })
                .collect()
        })?;
        let mut points = Vec::with_capacity(angles.len());
        for (eps, angle) in angles {
            points.push((eps, angle?));
        }
        for &(eps, angle) in &points {
            table.push(vec![json!(eps), json!(angle)]);
        }
        let (slope, intercept, r2) = linear_fit(&points);
        let worst = points.iter().map(|p| p.1).fold(base.max_abs_arg, f64::max);
        checks.push(CheckRow::ge("angle-linear-in-eps", r2, ANGLE_R2_BOUND));
        checks.push(CheckRow::le("sweep-angle-below-cut", worst, FRAC_PI_2));
        summary = json!({
            "base_max_abs_arg": base.max_abs_arg,
            "diagonal": false,
            "slope": slope,
            "intercept": intercept,
            "r_squared": r2,
            "min_modulus": base.min_modulus,
        });
    }

    Ok(Outcome { table, summary, checks })
}

fn unit_direction(field: &SampledField) -> Option<SampledField> {
    let sup = field.sup_norm();
    if sup < 1e-14 {
        None
    } else {
        Some(field.map(|v| v / sup))
    }
}

fn det_sweep(cfg: &ExperimentConfig, jobs: usize) -> Result<Outcome, CliError> {
    let z = cfg.modulus()?;
    let grid = make_torus_grid(z, cfg.grid.n).map_err(run_err)?;
    let zero = SampledField::from_fn(grid.clone(), |_| Complex64::new(0.0, 0.0));

    let mu_shape = sampled_preset(&grid, cfg.presets.mu.as_deref().expect("validated"))?;
    let unit_mu = unit_direction(&mu_shape)
        .ok_or_else(|| CliError::Config("det-sweep mu direction is identically zero".into()))?;
    let unit_nu = match &cfg.presets.nu {
        Some(text) => unit_direction(&sampled_preset(&grid, text)?),
        None => None,
    };

    let h = cfg.sweep.h[0];
    let theta = cfg.sweep.theta[0];
    let opts = HolomorphyOptions {
        theta,
        rho: cfg.sweep.rho,
        ..HolomorphyOptions::default()
    };

    let mut eps_list = cfg.sweep.eps.clone();
    eps_list.sort_by(f64::total_cmp);
    let reports: Vec<(f64, Result<HolomorphyReport, CliError>)> = in_pool(jobs, || {
        eps_list
            .par_iter()
            .map(|&eps| {
                let report = (|| {
                    let mu = coefficient(unit_mu.map(|v| eps * v))?;
                    let nu = coefficient(match &unit_nu {
                        Some(u) => u.map(|v| eps * v),
                        None => zero.clone(),
                    })?;
                    let nu1 = unit_nu.as_ref().unwrap_or(&zero);
                    det_holomorphy_check(&mu, &nu, &unit_mu, nu1, h, &opts).map_err(run_err)
                })();
                (eps, report)
            })
            .collect()
    })?;

    // The deformation-free gap: the first nonzero mode of the flat torus.
    let gap0 = torus_eigenvalues(z, 1e4)
        .map_err(run_err)?
        .get(1)
        .copied()
        .ok_or_else(|| CliError::Run("no nonzero torus mode below the cut".into()))?;

    let mut table = Table::new(vec![
        "eps",
        "min_gap",
        "log_det_re",
        "log_det_im",
        "res_s",
        "res_t",
        "N",
        "theta",
    ]);
    let mut dev_rate: f64 = 0.0;
    let mut worst_res_s: f64 = 0.0;
    let mut min_gap_all = f64::INFINITY;
    for (eps, report) in reports {
        let r = report?;
        dev_rate = dev_rate.max((r.min_gap - gap0).abs() / eps);
        worst_res_s = worst_res_s.max(r.res_s);
        min_gap_all = min_gap_all.min(r.min_gap);
        table.push(vec![
            json!(eps),
            json!(r.min_gap),
            json!(r.log_det.re),
            json!(r.log_det.im),
            json!(r.res_s),
            json!(r.res_t),
            json!(cfg.grid.n),
            json!(theta),
        ]);
    }

    let checks = vec![
        CheckRow::info("gap-deviation-rate", dev_rate),
        CheckRow::ge("gap-stays-positive", min_gap_all, 0.5 * gap0),
        CheckRow::le("worst-holomorphy-residual", worst_res_s, HOLOMORPHY_BOUND),
    ];
    Ok(Outcome {
        table,
        summary: json!({ "gap0": gap0, "gap_deviation_rate": dev_rate }),
        checks,
    })
}

fn holomorphy_check(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let z = cfg.modulus()?;
    let grid = make_torus_grid(z, cfg.grid.n).map_err(run_err)?;
    let zero = SampledField::from_fn(grid.clone(), |_| Complex64::new(0.0, 0.0));

    let mu_f = sampled_preset(&grid, cfg.presets.mu.as_deref().expect("validated"))?;
    let nu_f = match &cfg.presets.nu {
        Some(text) => sampled_preset(&grid, text)?,
        None => mu_f.clone(),
    };
    let mu1 = sampled_preset(&grid, cfg.presets.mu1.as_deref().expect("validated"))?;
    let nu1 = match &cfg.presets.nu1 {
        Some(text) => Some(sampled_preset(&grid, text)?),
        None => None,
    };

    let h = cfg.sweep.h[0];
    let opts = HolomorphyOptions {
        theta: cfg.sweep.theta[0],
        rho: cfg.sweep.rho,
        ..HolomorphyOptions::default()
    };
    let report = det_holomorphy_check(
        &coefficient(mu_f.clone())?,
        &coefficient(nu_f.clone())?,
        &mu1,
        nu1.as_ref().unwrap_or(&zero),
        h,
        &opts,
    )
    .map_err(run_err)?;

    let mut checks = vec![
        CheckRow::le("holomorphy-residual", report.res_s, HOLOMORPHY_BOUND),
        CheckRow::le("symbol-angle", report.max_abs_arg, FRAC_PI_2),
    ];

    // Without an explicit nu direction, contrast the holomorphic line
    // against the diagonal candidate s -> log det(mu + s mu1, nu + s mu1),
    // which moves both slots at once and is genuinely non-holomorphic.
    let mut contrast_ratio = None;
    if nu1.is_none() {
        let theta = opts.theta;
        let rho = 0.5 * report.min_gap;
        let solver = solve_opts(cfg);
        let n = cfg.grid.n;
        let diagonal = |s: Complex64| -> quasilap::Result<Complex64> {
            let m = BeltramiCoefficient::new(
                mu_f.zip_map(&mu1, |a, b| a + s * b)?,
                SupportKind::Periodic,
            )?;
            let nv = BeltramiCoefficient::new(
                nu_f.zip_map(&mu1, |a, b| a + s * b)?,
                SupportKind::Periodic,
            )?;
            let op = solve_delta_mn(&m, &nv, &solver)?;
            let a = spectral_matrix(&op, n)?;
            let spec = eigen_spectrum(&a, theta, rho)?;
            spec.expect_kernel(1)?;
            Ok(log_det_branch(&spec)?.log_det)
        };
        let res_diag =
            try_cr_residual(diagonal, Complex64::new(0.0, 0.0), h).map_err(run_err)?;
        let ratio = res_diag / report.res_s.max(1e-15);
        contrast_ratio = Some((res_diag, ratio));
        checks.push(CheckRow::ge("diagonal-contrast", ratio, CONTRAST_FACTOR));
    }

    let mut table = Table::new(vec![
        "res_s",
        "res_t",
        "max_abs_arg",
        "min_gap",
        "log_det_re",
        "log_det_im",
    ]);
    table.push(vec![
        json!(report.res_s),
        json!(report.res_t),
        json!(report.max_abs_arg),
        json!(report.min_gap),
        json!(report.log_det.re),
        json!(report.log_det.im),
    ]);
    let summary = match contrast_ratio {
        Some((diag_res, ratio)) => json!({
            "diagonal_residual": diag_res,
            "contrast_ratio": ratio,
        }),
        None => json!({}),
    };
    Ok(Outcome { table, summary, checks })
}

fn potential_verify(cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(cfg.seed);

    let upper = Rect::new(-0.5, 0.5, 0.5, 1.5).map_err(run_err)?;
    let lower = upper.reflected();
    let c = Complex64::new;

    let mut rows: Vec<(String, f64, f64)> = Vec::new();

    // Extension density (z - w)^{-2} against its explicit log potential.
    let inv_sq = ClosedTwoForm::new(upper, lower, |z, w| {
        let d = z - w;
        1.0 / (d * d)
    })
    .map_err(run_err)?;
    let chart = ConeChart::new(&inv_sq, c(0.2, 0.8), c(-0.1, -0.9)).map_err(run_err)?;
    let mut worst = 0.0_f64;
    for &(z, w) in &[
        (c(0.0, 1.0), c(0.0, -1.2)),
        (c(0.45, 0.55), c(-0.45, -1.45)),
        (c(-0.3, 1.45), c(0.4, -0.55)),
    ] {
        let q = cone_potential(&inv_sq, &chart, z, w).map_err(run_err)?;
        worst = worst.max((q - inverse_square_potential(&chart, z, w)).norm());
    }
    rows.push(("inverse-square-closed-form".into(), worst, 1e-10));

    let hessian_at_probe =
        mixed_hessian_check(&inv_sq, &chart, c(0.0, 1.0), c(0.0, -1.2), 1e-3).map_err(run_err)?;
    rows.push(("extension-density-hessian".into(), hessian_at_probe, 1e-6));

    let flat = ClosedTwoForm::new(upper, lower, move |_, _| c(0.7, -0.4)).map_err(run_err)?;
    let flat_chart = ConeChart::new(&flat, c(0.0, 1.0), c(0.0, -1.0)).map_err(run_err)?;
    let flat_defect = mixed_hessian_check(&flat, &flat_chart, c(0.2, 1.1), c(-0.2, -0.8), 1e-3)
        .map_err(run_err)?;
    rows.push(("constant-density-hessian".into(), flat_defect, 1e-10));

    // Seeded bivariate cubics with closed-form potentials.
    let mut poly_worst = 0.0_f64;
    for _ in 0..2 {
        let coeffs: Vec<Vec<Complex64>> = (0..4)
            .map(|_| {
                (0..4)
                    .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                    .collect()
            })
            .collect();
        let cs = coeffs.clone();
        let form = ClosedTwoForm::new(upper, lower, move |z, w| {
            let mut acc = c(0.0, 0.0);
            for (j, row) in cs.iter().enumerate() {
                for (k, &a) in row.iter().enumerate() {
                    acc += a * z.powu(j as u32) * w.powu(k as u32);
                }
            }
            acc
        })
        .map_err(run_err)?;
        let pchart = ConeChart::new(&form, c(0.1, 0.9), c(0.2, -0.8)).map_err(run_err)?;
        let (z, w) = (c(-0.3, 1.35), c(0.45, -1.3));
        let q = cone_potential(&form, &pchart, z, w).map_err(run_err)?;
        let mut want = c(0.0, 0.0);
        for (j, row) in coeffs.iter().enumerate() {
            for (k, &a) in row.iter().enumerate() {
                let jz = (z.powu(j as u32 + 1) - pchart.z0.powu(j as u32 + 1)) / (j as f64 + 1.0);
                let kw = (w.powu(k as u32 + 1) - pchart.w0.powu(k as u32 + 1)) / (k as f64 + 1.0);
                want += a * jz * kw;
            }
        }
        poly_worst = poly_worst.max((q - want).norm());
        poly_worst =
            poly_worst.max(mixed_hessian_check(&form, &pchart, z, w, 1e-3).map_err(run_err)?);
    }
    rows.push(("polynomial-suite".into(), poly_worst, 1e-8));

    let splitting = extension_structure_check(c(0.0, 1.0), c(0.0, -1.3), 1e-3).map_err(run_err)?;
    rows.push(("extension-splitting".into(), splitting, 1e-7));

    let wp = (wp_genus1(c(0.0, 1.0)).map_err(run_err)? - c(0.0, 0.25)).norm();
    rows.push(("wp-at-i".into(), wp, 1e-14));

    let mut diag_worst = 0.0_f64;
    for &z in &[c(0.0, 1.0), c(0.3, 1.2), c(-0.2, 0.8), c(0.1, 1.7)] {
        let ext = torus_logdet_extension(z, z.conj()).map_err(run_err)?;
        let exact = torus_logdet_exact(z).map_err(run_err)?;
        diag_worst = diag_worst.max((ext - c(exact, 0.0)).norm());
    }
    rows.push(("extension-diagonal".into(), diag_worst, 1e-12));

    let mut table = Table::new(vec!["example", "defect", "tolerance", "pass"]);
    let mut checks = Vec::with_capacity(rows.len());
    for (example, defect, tolerance) in rows {
        table.push(vec![
            json!(example),
            json!(defect),
            json!(tolerance),
            json!(defect <= tolerance),
        ]);
        checks.push(CheckRow::le(&example, defect, tolerance));
    }
    Ok(Outcome { table, summary: json!({ "examples": checks.len() }), checks })
}
