//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (run with `cargo test --test acceptance -- --nocapture` to see them).
//!
//! Criteria with stochastic content use fixed seeds; tolerances are pinned in
//! the assertions. Total runtime is dominated by the large-`N` trajectory
//! ensembles (criteria 3, 4, 8).

use bath1d::models::{build_model, field_coefficients, FieldDirection, ModelKind};
use bath1d::{analysis, exact, meanfield, superspin, twa};
use num_complex::Complex64 as C64;
use std::f64::consts::PI;

const KD: f64 = 2.0 * PI / 3.0;

/// Collects named clause outcomes and panics after printing the verdict.
struct Criterion {
    id: u32,
    title: &'static str,
    clauses: Vec<(String, bool)>,
}

impl Criterion {
    fn new(id: u32, title: &'static str) -> Criterion {
        Criterion {
            id,
            title,
            clauses: Vec::new(),
        }
    }

    fn check(&mut self, label: impl Into<String>, ok: bool) {
        self.clauses.push((label.into(), ok));
    }

    fn finish(self) {
        let ok = self.clauses.iter().all(|c| c.1);
        let verdict = if ok { "PASS" } else { "FAIL" };
        println!("criterion {:2} [{}]: {}", self.id, self.title, verdict);
        for (label, good) in &self.clauses {
            println!("    [{}] {label}", if *good { "ok" } else { "FAIL" });
        }
        assert!(ok, "criterion {} failed", self.id);
    }
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn guard_dt(n: usize) -> f64 {
    0.01 / n as f64
}

/// Relax a fresh ground-state ensemble under the model for `t_end`.
fn relaxed_ensemble(
    model: &bath1d::ReservoirModel,
    trajectories: usize,
    seed: u64,
    t_end: f64,
) -> twa::TrajectoryEnsemble {
    let mut ens =
        twa::TrajectoryEnsemble::sample(model, twa::InitialSpec::AllGround, trajectories, seed);
    twa::integrate_ensemble(model, &mut ens, t_end, guard_dt(model.n), &Default::default())
        .expect("relaxation");
    ens
}

// ---------------------------------------------------------------------------
// 1. Single-atom ground truth.
// ---------------------------------------------------------------------------
#[test]
fn criterion_01_single_atom_ground_truth() {
    let mut c = Criterion::new(1, "single-atom ground truth");
    let (w, gp) = (1.0, 2.0);
    let model = build_model(ModelKind::SingleModeCavity, 1, 0.0, 1.0, gp, w, None).unwrap();
    let rho = exact::steady_state(&model).unwrap();
    let obs = exact::observables(&model, &rho);
    let pe_expect = w / (w + gp + 1.0);
    c.check(
        format!("Pe = {:.10} vs w/(w+Γ′+Γ₁D) = {pe_expect}", obs.excited_fraction),
        (obs.excited_fraction - pe_expect).abs() < 1e-8,
    );

    let tau: Vec<f64> = (0..200).map(|i| i as f64 * 0.02).collect();
    let one = [C64::new(1.0, 0.0)];
    let g1 = exact::two_time_correlator(&model, &rho, &one, &one, &tau).unwrap();
    let est = analysis::fit_linewidth(&tau, &g1).unwrap();
    let dnu_expect = w + gp + 1.0;
    c.check(
        format!("fitted Δν = {:.4} vs {dnu_expect} (±2%)", est.linewidth),
        est.fit_ok && (est.linewidth - dnu_expect).abs() < 0.02 * dnu_expect,
    );
    c.finish();
}

// ---------------------------------------------------------------------------
// 2. TWA against the dense solver at N = 4.
// ---------------------------------------------------------------------------
#[test]
fn criterion_02_twa_vs_exact_oracle() {
    let mut c = Criterion::new(2, "TWA vs exact, N = 4 ring");
    let model = build_model(ModelKind::RingCavity, 4, KD, 1.0, 2.0, 2.0, None).unwrap();
    let rho = exact::steady_state(&model).unwrap();
    let exact_obs = exact::observables(&model, &rho);

    let mut ens = relaxed_ensemble(&model, 10_000, 2024, 6.0);
    let twa_obs = twa::ensemble_observables(&ens, &model);
    let r_err = (twa_obs.emission_rate - exact_obs.emission_rate).abs() / exact_obs.emission_rate;
    let pe_err = (twa_obs.excited_fraction - exact_obs.excited_fraction).abs()
        / exact_obs.excited_fraction;
    c.check(format!("R within 10% (got {:.1}%)", 100.0 * r_err), r_err < 0.10);
    c.check(format!("Pe within 10% (got {:.1}%)", 100.0 * pe_err), pe_err < 0.10);

    let field = field_coefficients(&model, FieldDirection::Right, 1e6).unwrap();
    let tau: Vec<f64> = (0..=60).map(|i| i as f64 * 0.05).collect();
    let g_exact = exact::field_correlator(&model, &rho, &field, &tau).unwrap();
    let g_twa = twa::two_time_field_correlator(
        &model,
        &mut ens,
        &field,
        &tau,
        &twa::CorrelatorOptions {
            dt: guard_dt(4),
            ordering_correction: true,
            stationarity_tol: 0.25,
        },
    )
    .unwrap();
    // Pointwise deviation measured against the τ = 0 intensity scale.
    let scale = g_exact[0].norm();
    let worst = tau
        .iter()
        .enumerate()
        .map(|(i, _)| (g_twa.g1[i] - g_exact[i]).norm() / scale)
        .fold(0.0_f64, f64::max);
    c.check(
        format!("correlator within 10% pointwise over τΓ₁D ∈ [0,3] (worst {:.1}%)", 100.0 * worst),
        worst < 0.10,
    );
    c.finish();
}

// ---------------------------------------------------------------------------
// 3. Ring thresholds at desk scale (N = 128, Γ′ = 2Γ₁D).
// ---------------------------------------------------------------------------
#[test]
fn criterion_03_ring_thresholds() {
    let mut c = Criterion::new(3, "ring thresholds, N = 128");
    let n = 128;
    let model = build_model(ModelKind::RingCavity, n, KD, 1.0, 2.0, 0.0, None).unwrap();
    let grid = [1.0, 4.0, 8.0, 16.0, 24.0, 28.0, 32.0, 36.0, 44.0, 52.0, 58.0, 64.0];
    let scan = analysis::intensity_scan(
        &model,
        &grid,
        &analysis::ScanSolver::Twa {
            trajectories: 128,
            seed: 31,
            dt: Some(guard_dt(n)),
            t_end: None,
        },
    )
    .unwrap();
    for p in &scan.points {
        println!(
            "    w = {:5.1}: R = {:9.1}  (closed form {:9.1})  Pe = {:.3}",
            p.pump,
            p.emission_rate,
            p.r_analytic.unwrap(),
            p.excited_fraction
        );
    }

    let r_max_ref = (n * n) as f64 / 16.0;
    let below = scan.points.iter().find(|p| p.pump < 2.0).unwrap();
    // Below w = Γ′ only the independent-atom emission N·Γ₁D·Pe survives;
    // on the collective peak scale that is "≈ 0".
    c.check(
        format!(
            "R below threshold small on the peak scale ({:.1} vs peak {:.1})",
            below.emission_rate, scan.r_max_est
        ),
        below.emission_rate.abs() < 0.07 * scan.r_max_est,
    );
    c.check(
        format!(
            "R_max = {:.1} within 15% of N²Γ₁D/16 = {r_max_ref}",
            scan.r_max_est
        ),
        (scan.r_max_est - r_max_ref).abs() < 0.15 * r_max_ref,
    );
    c.check(
        format!("w_opt = {:.1} within 10% of NΓ₁D/4 = 32", scan.w_opt_est),
        (scan.w_opt_est - 32.0).abs() < 0.10 * 32.0,
    );

    // Quench: interpolated crossing of R below 5% of the peak past the optimum.
    let cut = 0.05 * scan.r_max_est;
    let mut quench = f64::NAN;
    for pair in scan.points.windows(2) {
        if pair[0].pump > scan.w_opt_est
            && pair[0].emission_rate > cut
            && pair[1].emission_rate <= cut
        {
            let f = (pair[0].emission_rate - cut)
                / (pair[0].emission_rate - pair[1].emission_rate);
            quench = pair[0].pump + f * (pair[1].pump - pair[0].pump);
            break;
        }
    }
    c.check(
        format!("quench at w = {quench:.1} within 15% of NΓ₁D/2 = 64"),
        (quench - 64.0).abs() < 0.15 * 64.0,
    );
    c.finish();
}

// ---------------------------------------------------------------------------
// 4. N² scaling of the optimal intensity (Γ′ = 0).
// ---------------------------------------------------------------------------
#[test]
fn criterion_04_intensity_scaling() {
    let mut c = Criterion::new(4, "N² intensity scaling");
    let sizes = [32usize, 64, 128, 256];

    let mut ring_lnr = Vec::new();
    for (i, &n) in sizes.iter().enumerate() {
        let model = build_model(ModelKind::RingCavity, n, KD, 1.0, 0.0, 0.0, None).unwrap();
        let traj = if n >= 256 { 96 } else { 128 };
        // Γ′ = 0: the closed-form optimum sits exactly at w = NΓ₁D/4.
        let scan = analysis::intensity_scan(
            &model,
            &[n as f64 / 4.0],
            &analysis::ScanSolver::Twa {
                trajectories: traj,
                seed: 400 + i as u64,
                dt: Some(guard_dt(n)),
                t_end: Some(2.0),
            },
        )
        .unwrap();
        let r = scan.points[0].emission_rate;
        println!("    ring N = {n:3}: R(N/4) = {r:10.1}  (N²/16 = {:.1})", (n * n) as f64 / 16.0);
        ring_lnr.push(((n as f64).ln(), r.ln()));
    }
    let exponent = slope(&ring_lnr);
    c.check(
        format!("ring exponent = {exponent:.3} within 2.0 ± 0.15"),
        (exponent - 2.0).abs() < 0.15,
    );

    for (i, &n) in sizes.iter().enumerate() {
        let model = build_model(ModelKind::Waveguide, n, KD, 1.0, 0.0, 0.0, None).unwrap();
        let est = superspin::waveguide_estimates(n, 1.0);
        let w_grid: Vec<f64> = if n >= 256 {
            vec![0.9 * est.w_opt, 1.1 * est.w_opt]
        } else {
            vec![0.75 * est.w_opt, est.w_opt, 1.3 * est.w_opt]
        };
        let traj = if n >= 256 { 64 } else { 112 };
        let scan = analysis::intensity_scan(
            &model,
            &w_grid,
            &analysis::ScanSolver::Twa {
                trajectories: traj,
                seed: 4400 + i as u64,
                dt: Some(guard_dt(n)),
                t_end: None,
            },
        )
        .unwrap();
        let ratio = scan.r_max_est / est.r_max;
        println!(
            "    waveguide N = {n:3}: R_max = {:10.1}, 9N²/256 = {:.1}, ratio {ratio:.2}",
            scan.r_max_est, est.r_max
        );
        c.check(
            format!("waveguide N = {n}: within factor 1.5 of 9N²Γ₁D/256 (ratio {ratio:.2})"),
            ratio > 1.0 / 1.5 && ratio < 1.5,
        );
    }
    c.finish();
}

fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in points {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}

// ---------------------------------------------------------------------------
// 5. Superspin consistency.
// ---------------------------------------------------------------------------
#[test]
fn criterion_05_superspin_consistency() {
    let mut c = Criterion::new(5, "superspin consistency");
    let n = 768;
    let (g1d, gp) = (1.0, 2.0);
    let w = n as f64 / 4.0;

    for (p, m) in [(1usize, 1usize), (2, 1), (3, 2)] {
        let part = superspin::build_partition(n, m, p).unwrap();
        let rates = superspin::Rates {
            gamma_1d: g1d,
            gamma_prime: gp,
            pump: w,
        };
        let full = superspin::cumulant_steady_state(&part, &rates).unwrap();
        let fast = n as f64 + w + gp;
        let reduced = superspin::integrate_reduced(n, p, &rates, 60.0 / gp, 0.02 / fast, true);
        let closed = superspin::reduced_steady_state_seeded(n, p, g1d, gp, w);

        let jz_err = (full.jz[0] - closed.jz)
            .abs()
            .max((reduced.jz - closed.jz).abs());
        let r_err = ((full.group_rate(&part, 0) - closed.r_alpha).abs())
            .max((reduced.r_alpha - closed.r_alpha).abs())
            / closed.r_alpha;
        c.check(
            format!("p = {p}: full/reduced/closed agree to 1e-6 (jz {jz_err:.2e}, R {r_err:.2e})"),
            jz_err < 1e-6 && r_err < 1e-6,
        );

        // Circulant identity Σ_μ Γ_αμ Γ_μξ = (p/2)Γ₁D Γ_αξ; it requires two or
        // more groups (p = 1 is the mirror case where it does not apply).
        if p >= 2 {
            let mut worst = 0.0_f64;
            for a in 0..p {
                for x in 0..p {
                    let lhs: f64 = (0..p)
                        .map(|mu| part.couplings[[a, mu]] * part.couplings[[mu, x]])
                        .sum();
                    worst = worst.max((lhs - 0.5 * p as f64 * part.couplings[[a, x]]).abs());
                }
            }
            c.check(format!("p = {p}: circulant identity to 1e-12 ({worst:.1e})"), worst < 1e-12);
        }
    }

    // p = 1 reproduces the cavity maximum N²Γ₁D/8.
    let n_cav = 1024;
    let thresholds =
        superspin::analytic_thresholds(ModelKind::SingleModeCavity, n_cav, g1d, 0.0).unwrap();
    let cavity_max = (n_cav * n_cav) as f64 / 8.0;
    c.check(
        format!("analytic cavity R_max = {}", thresholds.r_max),
        (thresholds.r_max - cavity_max).abs() < 1e-9,
    );
    let rates = superspin::Rates {
        gamma_1d: g1d,
        gamma_prime: 0.0,
        pump: n_cav as f64 / 2.0,
    };
    let part = superspin::build_partition(n_cav, 1, 1).unwrap();
    let full = superspin::cumulant_steady_state(&part, &rates).unwrap();
    let r_phys = full.physical_emission_rate(&part, &rates);
    c.check(
        format!("integrated p = 1 maximum {r_phys:.1} within 3% of N²Γ₁D/8 = {cavity_max}"),
        (r_phys - cavity_max).abs() < 0.03 * cavity_max,
    );
    c.finish();
}

// ---------------------------------------------------------------------------
// 6. Spontaneous chirality of the ring at the mean-field level.
// ---------------------------------------------------------------------------
#[test]
fn criterion_06_spontaneous_chirality() {
    let mut c = Criterion::new(6, "ring spontaneous chirality");
    let n = 128;
    let model = build_model(ModelKind::RingCavity, n, KD, 1.0, 0.0, n as f64 / 4.0, None).unwrap();
    let dt = guard_dt(n);
    let mut locked = 0;
    let mut right_wins = 0;
    for seed in 0..100u64 {
        let state0 = meanfield::MeanFieldState::seeded(&model, 600 + seed);
        let traj =
            meanfield::integrate_mf(&state0, &model, 3.0, dt, &meanfield::MfOptions::default())
                .unwrap();
        match meanfield::order_parameters(&traj.final_state, &model) {
            meanfield::OrderParameters::Ring {
                r_left, r_right, ..
            } => {
                let hi = r_left.max(r_right);
                let lo = r_left.min(r_right).max(1e-300);
                if hi / lo > 10.0 {
                    locked += 1;
                }
                if r_right > r_left {
                    right_wins += 1;
                }
            }
            _ => unreachable!(),
        }
    }
    c.check(
        format!("{locked}/100 runs reach max/min > 10 (need ≥ 95)"),
        locked >= 95,
    );
    c.check(
        format!("right order won {right_wins}/100 (need 35..=65)"),
        (35..=65).contains(&right_wins),
    );
    c.finish();
}

// ---------------------------------------------------------------------------
// 7. Phase separation in the waveguide.
// ---------------------------------------------------------------------------
#[test]
fn criterion_07_waveguide_phase_separation() {
    let mut c = Criterion::new(7, "waveguide phase separation");
    let n = 128;
    let w = n as f64 / 8.0;
    let model = build_model(ModelKind::Waveguide, n, KD, 1.0, 0.0, w, None).unwrap();
    let dt = guard_dt(n);

    // Mean field.
    let state0 = meanfield::MeanFieldState::seeded(&model, 77);
    let traj =
        meanfield::integrate_mf(&state0, &model, 8.0, dt, &meanfield::MfOptions::default())
            .unwrap();
    let m = meanfield::magnetization(&traj.final_state.phi, KD).unwrap();
    let (left, right) = quartiles(&m);
    c.check(
        format!("mean field quartile magnetization: left {left:.2} < −0.5, right {right:.2} > 0.5"),
        left < -0.5 && right > 0.5,
    );

    // TWA: the ensemble-level phase field lives in the correlation phases
    // (per-trajectory atomic phases carry the Wigner sampling noise).
    let ens = relaxed_ensemble(&model, 224, 78, 4.0);
    let obs = twa::ensemble_observables(&ens, &model);
    let m_twa = analysis::magnetization_from_correlations(&obs.correlations, KD).unwrap();
    let (left, right) = quartiles(&m_twa);
    c.check(
        format!("TWA quartile magnetization: left {left:.2} < −0.5, right {right:.2} > 0.5"),
        left < -0.5 && right > 0.5,
    );
    c.finish();
}

fn quartiles(m: &[f64]) -> (f64, f64) {
    let q = (m.len() / 4).max(1);
    let left = m[..q].iter().sum::<f64>() / q as f64;
    let right = m[m.len() - q..].iter().sum::<f64>() / q as f64;
    (left, right)
}

// ---------------------------------------------------------------------------
// 8. Ansatz fit of the waveguide correlation phases.
// ---------------------------------------------------------------------------
#[test]
fn criterion_08_ansatz_fit() {
    let mut c = Criterion::new(8, "waveguide ansatz fit");

    // Round trip on synthetic data.
    let n = 200;
    let positions: Vec<f64> = (1..=n).map(|i| i as f64 * KD).collect();
    let truth = analysis::AnsatzModel {
        alpha: 2.5,
        beta: 0.7,
        gamma_weight: 1.0,
        amplitude: 0.05,
    };
    let synthetic = analysis::ansatz_correlations(&truth, &positions, 1.0).unwrap();
    let round = analysis::fit_ansatz(&synthetic, &positions, 1.0).unwrap();
    c.check(
        format!(
            "round trip (α, β) = ({:.3}, {:.3}) within ±0.05 of (2.5, 0.7)",
            round.model.alpha, round.model.beta
        ),
        (round.model.alpha - 2.5).abs() < 0.05 && (round.model.beta - 0.7).abs() < 0.05,
    );

    // TWA reproduction of the reported fit parameters.
    let w = n as f64 / 4.0;
    let model = build_model(ModelKind::Waveguide, n, KD, 1.0, 2.0, w, None).unwrap();
    let ens = relaxed_ensemble(&model, 256, 88, 2.5);
    let obs = twa::ensemble_observables(&ens, &model);
    let fit = analysis::fit_ansatz(&obs.correlations, &model.positions, model.k).unwrap();
    println!(
        "    TWA fit: α = {:.3}, β = {:.3}, residual {:.3}",
        fit.model.alpha, fit.model.beta, fit.residual
    );
    c.check(
        format!("α = {:.3} within ±0.5 of 2.162", fit.model.alpha),
        (fit.model.alpha - 2.162).abs() < 0.5,
    );
    c.check(
        format!("β = {:.3} within ±0.5 of 0.651", fit.model.beta),
        (fit.model.beta - 0.651).abs() < 0.5,
    );
    c.finish();
}

// ---------------------------------------------------------------------------
// 9. Cosine correlations of the ring steady state.
// ---------------------------------------------------------------------------
#[test]
fn criterion_09_ring_cosine_correlations() {
    let mut c = Criterion::new(9, "ring cosine correlations");
    let n = 64;
    let model = build_model(ModelKind::RingCavity, n, KD, 1.0, 0.0, n as f64 / 4.0, None).unwrap();
    let ens = relaxed_ensemble(&model, 512, 99, 2.0);
    let obs = twa::ensemble_observables(&ens, &model);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b {
                xs.push((model.positions[a] - model.positions[b]).cos());
                ys.push(obs.correlations[[a, b]].re);
            }
        }
    }
    let r = pearson(&xs, &ys);
    c.check(
        format!("Pearson(Re C_nm, cos k(z_n−z_m)) = {r:.3} > 0.9"),
        r > 0.9,
    );
    c.finish();
}

// ---------------------------------------------------------------------------
// 10. Linewidth trend with system size (soft, diagnostic).
// ---------------------------------------------------------------------------
#[test]
fn criterion_10_linewidth_trend() {
    let mut c = Criterion::new(10, "ring linewidth trend");
    let sizes = [8usize, 16, 32, 48];
    let mut minima: Vec<(usize, f64, f64)> = Vec::new();
    for (i, &n) in sizes.iter().enumerate() {
        let window_hi = n as f64 / 2.0;
        let pumps: Vec<f64> = (0..8)
            .map(|k| 2.4 + (0.85 * window_hi - 2.4) * k as f64 / 7.0)
            .collect();
        let mut points = Vec::new();
        let mut sigmas = Vec::new();
        for (j, &w) in pumps.iter().enumerate() {
            match linewidth_at(ModelKind::RingCavity, n, 2.0, w, 256, 1000 + 10 * i as u64 + j as u64)
            {
                Some((dnu, sigma)) => {
                    points.push((w, dnu));
                    sigmas.push(sigma);
                }
                None => continue,
            }
        }
        if points.len() < 5 {
            c.check(format!("N = {n}: enough linewidth fits ({}/8)", points.len()), false);
            continue;
        }
        let scan = analysis::min_linewidth_scan(&points).unwrap();
        let dnu_min = if scan.fit_ok {
            scan.dnu_min
        } else {
            points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min)
        };
        let sigma = sigmas.iter().sum::<f64>() / sigmas.len() as f64;
        println!(
            "    N = {n:2}: Δν_min = {dnu_min:.3} ± {sigma:.3} (quadratic fit ok: {})",
            scan.fit_ok
        );
        minima.push((n, dnu_min, sigma));
    }
    for pair in minima.windows(2) {
        let (n0, d0, s0) = pair[0];
        let (n1, d1, s1) = pair[1];
        let allowed = d0 + 2.0 * (s0 * s0 + s1 * s1).sqrt();
        c.check(
            format!("Δν_min({n1}) = {d1:.3} ≤ Δν_min({n0}) = {d0:.3} within error bars"),
            d1 <= allowed,
        );
    }

    // The waveguide pipeline must run and report, with no number attached.
    let mut reported = 0;
    for (j, w) in [3.0, 4.0, 5.0, 6.0, 8.0].into_iter().enumerate() {
        if let Some((dnu, sigma)) = linewidth_at(ModelKind::Waveguide, 16, 2.0, w, 192, 5000 + j as u64)
        {
            println!("    waveguide N = 16, w = {w:.1}: Δν = {dnu:.3} ± {sigma:.3}");
            reported += 1;
        }
    }
    c.check(
        format!("waveguide linewidth pipeline reported {reported}/5 points"),
        reported >= 1,
    );
    c.finish();
}

/// Relax, correlate, fit; the uncertainty comes from a split-half estimate.
fn linewidth_at(
    kind: ModelKind,
    n: usize,
    gamma_prime: f64,
    w: f64,
    trajectories: usize,
    seed: u64,
) -> Option<(f64, f64)> {
    let model = build_model(kind, n, KD, 1.0, gamma_prime, w, None).unwrap();
    let direction = FieldDirection::Right;
    let t_relax = (25.0 / (w + gamma_prime + 1.0)).clamp(2.0, 8.0);
    let mut ens = relaxed_ensemble(&model, trajectories, seed, t_relax);
    let field = field_coefficients(&model, direction, 1e6).unwrap();
    let tau: Vec<f64> = (0..96).map(|i| i as f64 * 4.0 / 95.0).collect();
    let corr = twa::two_time_field_correlator(
        &model,
        &mut ens,
        &field,
        &tau,
        &twa::CorrelatorOptions {
            dt: guard_dt(n),
            ordering_correction: true,
            stationarity_tol: 1.0,
        },
    )
    .ok()?;
    let est = analysis::fit_linewidth(&tau, &corr.g1).ok()?;
    if !est.fit_ok {
        return None;
    }
    // Split-half uncertainty from two independent sub-ensembles.
    let mut halves = Vec::new();
    for half in 0..2 {
        let m2 = trajectories / 2;
        let model2 = model.clone();
        let mut sub = twa::TrajectoryEnsemble::sample(
            &model2,
            twa::InitialSpec::AllGround,
            m2,
            seed.wrapping_add(791 + half),
        );
        if twa::integrate_ensemble(&model2, &mut sub, t_relax, guard_dt(n), &Default::default())
            .is_err()
        {
            continue;
        }
        if let Ok(c2) = twa::two_time_field_correlator(
            &model2,
            &mut sub,
            &field,
            &tau,
            &twa::CorrelatorOptions {
                dt: guard_dt(n),
                ordering_correction: true,
                stationarity_tol: 1.0,
            },
        ) {
            if let Ok(e2) = analysis::fit_linewidth(&tau, &c2.g1) {
                if e2.fit_ok {
                    halves.push(e2.linewidth);
                }
            }
        }
    }
    let sigma = if halves.len() == 2 {
        0.5 * (halves[0] - halves[1]).abs()
    } else {
        0.2 * est.linewidth
    };
    Some((est.linewidth, sigma))
}

// ---------------------------------------------------------------------------
// 11. Property suites.
// ---------------------------------------------------------------------------
#[test]
fn criterion_11_property_suites() {
    let mut c = Criterion::new(11, "property suites");

    // Model invariants across kinds and spacings.
    let mut ok = true;
    for kind in [ModelKind::SingleModeCavity, ModelKind::RingCavity, ModelKind::Waveguide] {
        for kd in [0.7, KD, PI / 2.0] {
            let m = build_model(kind, 12, kd, 1.3, 0.4, 2.0, None).unwrap();
            let trace: f64 = (0..12).map(|i| m.gamma[[i, i]]).sum();
            ok &= (trace - 12.0 * 1.3).abs() < 1e-12;
            for a in 0..12 {
                for b in 0..12 {
                    ok &= (m.gamma[[a, b]] - m.gamma[[b, a]]).abs() < 1e-14;
                    ok &= (m.j[[a, b]] - m.j[[b, a]]).abs() < 1e-14;
                }
                ok &= m.j[[a, a]] == 0.0;
            }
            let modes = bath1d::jump_mode_decomposition(&m);
            let sum: f64 = modes.iter().map(|j| j.rate).sum();
            ok &= (sum - 12.0 * 1.3).abs() < 1e-9;
            ok &= modes.iter().all(|j| j.rate >= 0.0);
            if kind != ModelKind::SingleModeCavity {
                ok &= modes.iter().filter(|j| j.rate > 1e-9).count() <= 2;
            }
        }
    }
    c.check("Γ symmetric, trace NΓ₁D, PSD, rank ≤ 2", ok);

    // Liouvillian trace preservation along evolution.
    let m = build_model(ModelKind::Waveguide, 3, 1.1, 1.0, 0.3, 0.9, None).unwrap();
    let liou = exact::Liouvillian::new(&m).unwrap();
    let rho = liou
        .evolve(&exact::DensityMatrix::fully_inverted(3).entries, 20.0, 5e-4)
        .unwrap();
    let tr: C64 = (0..8).map(|i| rho[[i, i]]).sum();
    c.check(
        format!("trace preserved over t = 20/Γ₁D ({:.1e})", (tr - C64::new(1.0, 0.0)).norm()),
        (tr - C64::new(1.0, 0.0)).norm() < 1e-9,
    );

    // U(1): no single-atom coherence in the steady state, and a global phase
    // shift leaves mean-field derivatives and order amplitudes unchanged.
    let rho = exact::steady_state(&m).unwrap();
    let coherences = (0..3).map(|a| exact::coherence(&rho, a).norm()).fold(0.0, f64::max);
    c.check(format!("⟨σ_eg⟩ = 0 in the steady state ({coherences:.1e})"), coherences < 1e-10);

    let mf_model = build_model(ModelKind::RingCavity, 6, KD, 1.0, 0.2, 1.4, None).unwrap();
    let st = meanfield::MeanFieldState::seeded(&mf_model, 5);
    let shifted = meanfield::MeanFieldState {
        phi: st.phi.iter().map(|p| p + 2.031).collect(),
        ..st.clone()
    };
    let d0 = meanfield::mf_derivative(&st, &mf_model);
    let d1 = meanfield::mf_derivative(&shifted, &mf_model);
    let drift_dev = d0
        .ds_z
        .iter()
        .zip(&d1.ds_z)
        .chain(d0.ds_perp.iter().zip(&d1.ds_perp))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let r0 = meanfield::order_parameters(&st, &mf_model).max_amplitude();
    let r1 = meanfield::order_parameters(&shifted, &mf_model).max_amplitude();
    c.check(
        format!("global U(1) shift invariance ({:.1e})", drift_dev.max((r0 - r1).abs())),
        drift_dev < 1e-12 && (r0 - r1).abs() < 1e-12,
    );

    // Seed determinism across worker counts.
    let twa_model = build_model(ModelKind::RingCavity, 8, KD, 1.0, 0.5, 2.0, None).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let mut ens =
                twa::TrajectoryEnsemble::sample(&twa_model, twa::InitialSpec::AllGround, 96, 7);
            twa::integrate_ensemble(&twa_model, &mut ens, 0.5, guard_dt(8), &Default::default())
                .unwrap();
            twa::ensemble_observables(&ens, &twa_model)
        })
    };
    let a = run(1);
    let b = run(2);
    c.check(
        "bit-identical ensemble means for 1 and 2 workers",
        a.emission_rate.to_bits() == b.emission_rate.to_bits()
            && a.correlations
                .iter()
                .zip(b.correlations.iter())
                .all(|(x, y)| x == y),
    );
    c.finish();
}
