//! One function per subcommand; each writes its data files plus a JSON
//! summary into the output directory.

use crate::config::Config;
use crate::output::{complex_json, OutDir};
use anyhow::{bail, Context, Result};
use bath1d::models::{field_coefficients, ModelKind, ReservoirModel};
use bath1d::{analysis, exact, meanfield, superspin, twa};
use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde_json::json;
use std::path::Path;

pub fn cmd_exact(config: &Config, out: &OutDir) -> Result<()> {
    let model = config.build_model()?;
    let rho = exact::steady_state(&model)?;
    let obs = exact::observables(&model, &rho);
    out.write_complex_matrix("c_matrix.csv", &obs.correlations)?;
    out.write_json(
        "observables.json",
        &json!({
            "kind": config.model.kind,
            "n_atoms": model.n,
            "kd": config.model.kd,
            "gamma_1d": model.gamma_1d,
            "gamma_prime": model.gamma_prime,
            "pump": model.pump,
            "emission_rate": obs.emission_rate,
            "excited_fraction": obs.excited_fraction,
        }),
    )?;

    if config.run.spectrum {
        let field = field_coefficients(&model, config.direction(), config.run.observation_z)?;
        let tau = config.tau_grid();
        let g1 = exact::field_correlator(&model, &rho, &field, &tau)?;
        out.write_complex_series("correlator.csv", "tau,re,im", &tau, &g1)?;

        let width = model.pump + model.gamma_prime + model.collective_rate();
        let detuning: Vec<f64> = (0..=400)
            .map(|i| -4.0 * width + 8.0 * width * i as f64 / 400.0)
            .collect();
        let s = exact::spectrum_from_g1(&tau, &g1, &detuning);
        let rows: Vec<Vec<f64>> = detuning
            .iter()
            .zip(&s)
            .map(|(&d, &v)| vec![d, v])
            .collect();
        out.write_columns("spectrum.csv", "detuning,s", &rows)?;
    }
    Ok(())
}

pub fn cmd_meanfield(config: &Config, out: &OutDir) -> Result<()> {
    let model = config.build_model()?;
    let dt = config.dt();
    let opts = meanfield::MfOptions {
        stride: config.meanfield.sample_stride,
        ..Default::default()
    };
    let kd = config.model.kd;
    let mut runs = Vec::new();
    for run in 0..config.meanfield.runs {
        let seed = config.run.seed.wrapping_add(run as u64);
        let state0 = meanfield::MeanFieldState::seeded(&model, seed);
        let traj = meanfield::integrate_mf(&state0, &model, config.run.t_end, dt, &opts)?;

        if run == 0 {
            let mut rows = Vec::new();
            for (t, state) in traj.times.iter().zip(&traj.states) {
                for atom in 0..model.n {
                    rows.push(vec![
                        *t,
                        (atom + 1) as f64,
                        state.s_z[atom],
                        state.s_perp[atom],
                        state.phi[atom],
                    ]);
                }
            }
            out.write_columns("trajectory.csv", "t,atom,s_z,s_perp,phi", &rows)?;

            if model.n >= 2 && kd > 0.0 && kd < std::f64::consts::PI {
                let mut rows = Vec::new();
                for (t, state) in traj.times.iter().zip(&traj.states) {
                    let m = meanfield::magnetization(&state.phi, kd)?;
                    for (i, &v) in m.iter().enumerate() {
                        rows.push(vec![*t, (i + 2) as f64, v]);
                    }
                }
                out.write_columns("magnetization.csv", "t,n,m", &rows)?;
            }
        }

        let order = meanfield::order_parameters(&traj.final_state, &model);
        let summary = match &order {
            meanfield::OrderParameters::Cavity { r, psi } => json!({
                "run": run, "seed": seed, "steady": traj.steady,
                "r": r, "psi": psi,
            }),
            meanfield::OrderParameters::Ring {
                r_left,
                r_right,
                phi_left,
                phi_right,
            } => json!({
                "run": run, "seed": seed, "steady": traj.steady,
                "r_left": r_left, "r_right": r_right,
                "phi_left": phi_left, "phi_right": phi_right,
                "dominant": if r_right > r_left { "right" } else { "left" },
            }),
            meanfield::OrderParameters::Waveguide { r_right, r_left, .. } => {
                let quart = quartile_magnetization(&traj.final_state.phi, kd)?;
                json!({
                    "run": run, "seed": seed, "steady": traj.steady,
                    "r_right_edge": r_right.last(), "r_left_edge": r_left.first(),
                    "left_quartile_magnetization": quart.0,
                    "right_quartile_magnetization": quart.1,
                })
            }
        };
        runs.push(summary);
    }
    out.write_json("summary.json", &json!({ "runs": runs }))?;
    Ok(())
}

/// Mean magnetization over the first and last quarter of the array.
pub fn quartile_magnetization(phi: &[f64], kd: f64) -> Result<(f64, f64)> {
    let m = meanfield::magnetization(phi, kd)?;
    let q = (m.len() / 4).max(1);
    let left = m[..q].iter().sum::<f64>() / q as f64;
    let right = m[m.len() - q..].iter().sum::<f64>() / q as f64;
    Ok((left, right))
}

pub fn cmd_twa(config: &Config, out: &OutDir) -> Result<()> {
    let model = config.build_model()?;
    let dt = config.dt();
    let steps = (config.run.t_end / dt).ceil() as usize;
    let mut ens = twa::TrajectoryEnsemble::sample(
        &model,
        twa::InitialSpec::AllGround,
        config.run.trajectories,
        config.run.seed,
    );
    let taps = twa::integrate_ensemble(
        &model,
        &mut ens,
        config.run.t_end,
        dt,
        &twa::TwaOptions {
            noise: true,
            taps_stride: (steps / 400).max(1),
        },
    )?;
    let rows: Vec<Vec<f64>> = taps
        .times
        .iter()
        .zip(taps.emission_rate.iter().zip(&taps.excited_fraction))
        .map(|(&t, (&r, &pe))| vec![t, r, pe])
        .collect();
    out.write_columns("observables_series.csv", "t,emission_rate,excited_fraction", &rows)?;

    let obs = twa::ensemble_observables(&ens, &model);
    out.write_complex_matrix("c_matrix.csv", &obs.correlations)?;

    let field = field_coefficients(&model, config.direction(), config.run.observation_z)?;
    let hist = twa::field_histogram(&ens, &field, 61, None);
    let cell = 2.0 * hist.range / hist.bins as f64;
    let mut rows = Vec::new();
    for i in 0..hist.bins {
        for j in 0..hist.bins {
            let re = -hist.range + (i as f64 + 0.5) * cell;
            let im = -hist.range + (j as f64 + 0.5) * cell;
            rows.push(vec![re, im, hist.density[[i, j]]]);
        }
    }
    out.write_columns("histogram.csv", "re,im,density", &rows)?;

    out.write_json(
        "summary.json",
        &json!({
            "trajectories": ens.len(),
            "t_end": config.run.t_end,
            "dt": dt,
            "seed": config.run.seed,
            "emission_rate": obs.emission_rate,
            "excited_fraction": obs.excited_fraction,
        }),
    )?;
    Ok(())
}

pub fn cmd_superspin(config: &Config, out: &OutDir) -> Result<()> {
    let kind = config.kind();
    if kind == ModelKind::Waveguide {
        bail!("superspin cumulants need the partial permutation symmetry of the cavity or ring");
    }
    let n = config.model.n_atoms;
    let (m, p) = (config.superspin.m, config.superspin.p);
    let partition = superspin::build_partition(n, m, p)?;
    let g1d = config.model.gamma_1d;
    let gp = config.model.gamma_prime;

    let pumps = if config.scan.pumps.is_empty() {
        vec![config.model.pump]
    } else {
        config.scan.pumps.clone()
    };
    let mut rows = Vec::new();
    for &w in &pumps {
        let rates = superspin::Rates {
            gamma_1d: g1d,
            gamma_prime: gp,
            pump: w,
        };
        let cumulant = superspin::cumulant_steady_state(&partition, &rates)?;
        let closed = superspin::reduced_steady_state_seeded(n, p, g1d, gp, w);
        rows.push(vec![
            w,
            cumulant.physical_emission_rate(&partition, &rates),
            cumulant.excited_fraction(),
            closed.physical_r,
            superspin::emission_rate_curve(kind, n, g1d, gp, w)?,
            superspin::excited_fraction_curve(kind, n, g1d, gp, w)?,
        ]);
    }
    out.write_columns(
        "superspin.csv",
        "w,r_cumulant,pe_cumulant,r_reduced,r_analytic,pe_analytic",
        &rows,
    )?;

    let thresholds = superspin::analytic_thresholds(kind, n, g1d, gp)?;
    out.write_json(
        "summary.json",
        &json!({
            "partition": { "n": n, "m": m, "p": p, "n_per_group": partition.n_per_group },
            "thresholds": {
                "w_lower": thresholds.w_lower,
                "w_upper": thresholds.w_upper,
                "w_opt": thresholds.w_opt,
                "r_max": thresholds.r_max,
                "window_empty": thresholds.window_empty,
            },
        }),
    )?;
    Ok(())
}

pub fn cmd_thresholds(config: &Config, out: &OutDir) -> Result<()> {
    if config.scan.pumps.is_empty() {
        bail!("thresholds needs a non-empty [scan].pumps grid");
    }
    let model = config.build_model()?;
    let solver = analysis::ScanSolver::Twa {
        trajectories: config.run.trajectories,
        seed: config.run.seed,
        dt: Some(config.dt()),
        t_end: None,
    };
    let scan = analysis::intensity_scan(&model, &config.scan.pumps, &solver)?;

    let rows: Vec<Vec<f64>> = scan
        .points
        .iter()
        .map(|p| {
            vec![
                p.pump,
                p.emission_rate,
                p.excited_fraction,
                p.r_analytic.unwrap_or(f64::NAN),
                p.pe_analytic.unwrap_or(f64::NAN),
                if p.converged { 1.0 } else { 0.0 },
            ]
        })
        .collect();
    out.write_columns(
        "thresholds.csv",
        "w,emission_rate,excited_fraction,r_analytic,pe_analytic,converged",
        &rows,
    )?;

    let mut summary = json!({
        "w_lower_est": scan.w_lower_est,
        "w_upper_est": scan.w_upper_est,
        "w_opt_est": scan.w_opt_est,
        "r_max_est": scan.r_max_est,
    });
    match model.kind {
        ModelKind::Waveguide => {
            let e = superspin::waveguide_estimates(model.n, model.gamma_1d);
            summary["waveguide_estimates"] = json!({
                "w_upper": e.w_upper, "w_opt": e.w_opt, "r_max": e.r_max,
            });
        }
        kind => {
            let t = superspin::analytic_thresholds(kind, model.n, model.gamma_1d, model.gamma_prime)?;
            summary["analytic"] = json!({
                "w_lower": t.w_lower, "w_upper": t.w_upper,
                "w_opt": t.w_opt, "r_max": t.r_max,
            });
        }
    }
    out.write_json("summary.json", &summary)?;
    Ok(())
}

pub fn cmd_linewidth(config: &Config, out: &OutDir) -> Result<()> {
    if config.scan.pumps.len() < 5 {
        bail!(
            "linewidth scan needs at least 5 pump points (10-15 recommended), got {}",
            config.scan.pumps.len()
        );
    }
    let base = config.build_model()?;
    let tau = config.tau_grid();
    let mut pairs = Vec::new();
    let mut rows = Vec::new();
    for (i, &w) in config.scan.pumps.iter().enumerate() {
        let model = base.with_pump(w);
        let dt = config.dt();
        let mut ens = twa::TrajectoryEnsemble::sample(
            &model,
            twa::InitialSpec::AllGround,
            config.run.trajectories,
            config.run.seed.wrapping_add(i as u64),
        );
        twa::integrate_ensemble(&model, &mut ens, config.run.t_end, dt, &Default::default())?;
        let field = field_coefficients(&model, config.direction(), config.run.observation_z)?;
        let corr = twa::two_time_field_correlator(
            &model,
            &mut ens,
            &field,
            &tau,
            &twa::CorrelatorOptions {
                dt,
                ordering_correction: true,
                stationarity_tol: 0.5,
            },
        )?;
        out.write_complex_series(
            &format!("g1_w{i:02}.csv"),
            "tau,re,im",
            &tau,
            &corr.g1,
        )?;
        let est = analysis::fit_linewidth(&tau, &corr.g1)?;
        rows.push(vec![
            w,
            est.linewidth,
            est.residual,
            est.noise_floor,
            if est.fit_ok { 1.0 } else { 0.0 },
        ]);
        if est.fit_ok {
            pairs.push((w, est.linewidth));
        }
    }
    out.write_columns("linewidth.csv", "w,dnu,residual,noise_floor,fit_ok", &rows)?;

    let mut summary = json!({ "points": pairs.len() });
    if pairs.len() >= 5 {
        let scan = analysis::min_linewidth_scan(&pairs)?;
        summary["quadratic_fit"] = json!({
            "w_min": scan.w_min,
            "dnu_min": scan.dnu_min,
            "curvature": scan.curvature,
            "fit_ok": scan.fit_ok,
        });
    }
    out.write_json("summary.json", &summary)?;
    Ok(())
}

pub fn cmd_ansatz_fit(config: &Config, out: &OutDir) -> Result<()> {
    let model = config.build_model()?;
    let c = relaxed_correlations(config, &model)?;
    out.write_complex_matrix("c_matrix.csv", &c)?;
    let fit = analysis::fit_ansatz(&c, &model.positions, model.k)?;
    write_collapse(out, "collapse_measured.csv", &c)?;
    let predicted = analysis::ansatz_correlations(&fit.model, &model.positions, model.k)?;
    write_collapse(out, "collapse_model.csv", &predicted)?;
    out.write_json(
        "ansatz.json",
        &json!({
            "alpha": fit.model.alpha,
            "beta": fit.model.beta,
            "amplitude_gamma": fit.model.amplitude * fit.model.gamma_weight,
            "residual": fit.residual,
        }),
    )?;
    Ok(())
}

pub fn cmd_collapse(config: &Config, out: &OutDir, input: Option<&Path>) -> Result<()> {
    let c = match input {
        Some(path) => read_complex_matrix(path)?,
        None => {
            let model = config.build_model()?;
            relaxed_correlations(config, &model)?
        }
    };
    write_collapse(out, "collapse.csv", &c)
}

fn relaxed_correlations(config: &Config, model: &ReservoirModel) -> Result<Array2<C64>> {
    let mut ens = twa::TrajectoryEnsemble::sample(
        model,
        twa::InitialSpec::AllGround,
        config.run.trajectories,
        config.run.seed,
    );
    twa::integrate_ensemble(model, &mut ens, config.run.t_end, config.dt(), &Default::default())?;
    Ok(twa::ensemble_observables(&ens, model).correlations)
}

fn write_collapse(out: &OutDir, name: &str, c: &Array2<C64>) -> Result<()> {
    let points = analysis::correlation_collapse(c);
    let rows: Vec<Vec<f64>> = points
        .iter()
        .map(|p| vec![p.diagonal as f64, p.n_prime, p.arg_c])
        .collect();
    out.write_columns(name, "diagonal,n_prime,arg_c", &rows)
}

fn read_complex_matrix(path: &Path) -> Result<Array2<C64>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut entries = Vec::new();
    let mut size = 0usize;
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            bail!("{}: line {} has {} columns, expected 4", path.display(), idx + 1, cols.len());
        }
        let n: usize = cols[0].trim().parse()?;
        let m: usize = cols[1].trim().parse()?;
        let re: f64 = cols[2].trim().parse()?;
        let im: f64 = cols[3].trim().parse()?;
        size = size.max(n).max(m);
        entries.push((n - 1, m - 1, C64::new(re, im)));
    }
    let mut c = Array2::zeros((size, size));
    for (n, m, v) in entries {
        c[[n, m]] = v;
    }
    Ok(c)
}

/// Debug export of the model coupling matrices.
pub fn cmd_model_export(config: &Config, out: &OutDir) -> Result<()> {
    let model = config.build_model()?;
    out.write_real_matrix("gamma.csv", &model.gamma)?;
    out.write_real_matrix("j.csv", &model.j)?;
    let modes = bath1d::jump_mode_decomposition(&model);
    let mut w = out.writer("jump_modes.csv")?;
    use std::io::Write;
    writeln!(w, "mode,rate,atom,profile_re,profile_im")?;
    for (i, mode) in modes.iter().enumerate() {
        for (a, p) in mode.profile.iter().enumerate() {
            writeln!(w, "{},{:.17e},{},{:.17e},{:.17e}", i + 1, mode.rate, a + 1, p.re, p.im)?;
        }
    }
    let summary = json!({
        "rates": modes.iter().map(|m| m.rate).collect::<Vec<_>>(),
        "trace": model.gamma.diag().sum(),
        "field_prefactor_example": complex_json(C64::new(0.0, 0.5 * model.gamma_1d)),
    });
    out.write_json("summary.json", &summary)?;
    Ok(())
}
