//! Stochastic trajectories in the truncated Wigner approximation.
//!
//! Each trajectory carries one complex coherence and one real inversion per
//! atom. The drift is the factorized mean-field flow (see [`crate::dynamics`]);
//! quantum fluctuations enter through
//!
//! - correlated complex noise on the coherences, `dβ_ℓ ⊃ 2 v_ℓ dZ_ℓ` with
//!   `⟨dZ_n dZ_m*⟩ = [Γ_nm + δ_nm(Γ′+w)] dt/2`, generated from the rank-≤2
//!   factorization `Γ = B Bᵀ` (so the collective part costs `O(N)` per step),
//! - real jump-rate noise on the inversions,
//!   `Var(dv_ℓ) = [(Γ₁D+Γ′)(v_ℓ+1/2) + w(1/2−v_ℓ)] dt`,
//!   which holds the single-atom moments `⟨v²⟩ = 1/4` and `⟨|β|²⟩ = 1/2`
//!   at their Wigner values.
//!
//! Initial product states are sampled from the discrete four-point
//! distribution `Re β, Im β ∈ {±1/2}` (variance 1/4 per quadrature), with the
//! inversion set deterministically.
//!
//! Classical averages of `β_n* β_m` estimate symmetrically ordered operator
//! products; observable helpers apply the ordering correction on the diagonal
//! so that reported quantities are normal-ordered. Everything is reproducible
//! bit-exactly for a fixed `(seed, M, dt)` independent of the worker count:
//! each trajectory owns a counter-mode RNG substream and reductions run in
//! trajectory order.

use crate::dynamics::{rk4_step, Drift, Rk4Scratch};
use crate::models::{FieldCoefficients, ModelKind, ReservoirModel};
use ndarray::Array2;
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TwaError {
    #[error("dt = {dt} exceeds the stability guard 0.01/(N·Γ₁D) = {max}")]
    StepTooLarge { dt: f64, max: f64 },
    #[error("non-finite state in trajectory {traj} at step {step} (t = {t})")]
    NumericalBlowup { traj: usize, step: usize, t: f64 },
    #[error("ensemble is not stationary: R drifted from {r_start:.4e} to {r_end:.4e}")]
    NotStationary { r_start: f64, r_end: f64 },
    #[error("ensemble is empty")]
    EmptyEnsemble,
}

/// Phase-space variables of one stochastic realization.
#[derive(Debug, Clone)]
pub struct TrajectoryState {
    /// Classical counterpart of `⟨σ_ge^n⟩`.
    pub coh: Vec<C64>,
    /// Classical counterpart of `⟨σ_z^n⟩/2`.
    pub inv: Vec<f64>,
    pub t: f64,
}

/// Initial product state to sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialSpec {
    AllGround,
    AllExcited,
}

/// `M` independent realizations with per-trajectory RNG substreams.
#[derive(Debug, Clone)]
pub struct TrajectoryEnsemble {
    pub states: Vec<TrajectoryState>,
    /// One RNG per trajectory; stream id = trajectory index.
    rngs: Vec<ChaCha8Rng>,
    pub seed: u64,
}

/// Wigner sample of a product state: deterministic inversion, discrete
/// four-point transverse fluctuations.
pub fn sample_initial(
    model: &ReservoirModel,
    spec: InitialSpec,
    rng: &mut ChaCha8Rng,
) -> TrajectoryState {
    let inv0 = match spec {
        InitialSpec::AllGround => -0.5,
        InitialSpec::AllExcited => 0.5,
    };
    let coh = (0..model.n)
        .map(|_| {
            let re = if rng.gen::<bool>() { 0.5 } else { -0.5 };
            let im = if rng.gen::<bool>() { 0.5 } else { -0.5 };
            C64::new(re, im)
        })
        .collect();
    TrajectoryState {
        coh,
        inv: vec![inv0; model.n],
        t: 0.0,
    }
}

impl TrajectoryEnsemble {
    pub fn sample(
        model: &ReservoirModel,
        spec: InitialSpec,
        m: usize,
        seed: u64,
    ) -> TrajectoryEnsemble {
        let mut states = Vec::with_capacity(m);
        let mut rngs = Vec::with_capacity(m);
        for traj in 0..m {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(traj as u64);
            states.push(sample_initial(model, spec, &mut rng));
            rngs.push(rng);
        }
        TrajectoryEnsemble { states, rngs, seed }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self) -> f64 {
        self.states.first().map(|s| s.t).unwrap_or(0.0)
    }
}

/// Correlated noise generator built from the model's dissipative structure.
struct NoiseGen {
    /// Columns of `B` with `Γ = B Bᵀ` (1 for the cavity, 2 otherwise).
    b_cols: Vec<Vec<f64>>,
    /// `(Γ′ + w)/2`: variance rate of the local complex noise.
    local_rate: f64,
    decay_rate: f64,
    pump: f64,
}

impl NoiseGen {
    fn new(model: &ReservoirModel) -> NoiseGen {
        let root = model.gamma_1d.sqrt();
        let b_cols = match model.kind {
            ModelKind::SingleModeCavity => vec![vec![root; model.n]],
            _ => vec![
                model
                    .positions
                    .iter()
                    .map(|&z| root * (model.k * z).cos())
                    .collect(),
                model
                    .positions
                    .iter()
                    .map(|&z| root * (model.k * z).sin())
                    .collect(),
            ],
        };
        NoiseGen {
            b_cols,
            local_rate: 0.5 * (model.gamma_prime + model.pump),
            decay_rate: model.gamma_1d + model.gamma_prime,
            pump: model.pump,
        }
    }

    /// Add one Euler–Maruyama noise increment in place.
    fn kick(&self, coh: &mut [C64], inv: &mut [f64], dt: f64, rng: &mut ChaCha8Rng) {
        let n = coh.len();
        // Collective channels: dZ_ℓ = Σ_a B_ℓa ζ_a, ⟨|ζ_a|²⟩ = dt/2.
        let amp_coll = (0.25 * dt).sqrt();
        let mut zeta = [C64::new(0.0, 0.0); 2];
        for z in zeta.iter_mut().take(self.b_cols.len()) {
            let g1: f64 = rng.sample(StandardNormal);
            let g2: f64 = rng.sample(StandardNormal);
            *z = amp_coll * C64::new(g1, g2);
        }
        let amp_local = (0.5 * self.local_rate * dt).sqrt();
        for l in 0..n {
            let mut dz = C64::new(0.0, 0.0);
            for (col, z) in self.b_cols.iter().zip(zeta.iter()) {
                dz += col[l] * z;
            }
            let g1: f64 = rng.sample(StandardNormal);
            let g2: f64 = rng.sample(StandardNormal);
            dz += amp_local * C64::new(g1, g2);
            let v = inv[l];
            coh[l] += 2.0 * v * dz;

            let rate_v = self.decay_rate * (v + 0.5) + self.pump * (0.5 - v);
            let gv: f64 = rng.sample(StandardNormal);
            inv[l] += (rate_v.max(0.0) * dt).sqrt() * gv;
        }
    }
}

/// Integration options for [`integrate_ensemble`].
#[derive(Debug, Clone)]
pub struct TwaOptions {
    /// Disable to propagate the bare drift (collapses onto mean field).
    pub noise: bool,
    /// Record `(t, R, Pe)` every `taps_stride` steps (0 = no taps).
    pub taps_stride: usize,
}

impl Default for TwaOptions {
    fn default() -> Self {
        TwaOptions {
            noise: true,
            taps_stride: 0,
        }
    }
}

/// Ensemble-averaged time series sampled during integration.
#[derive(Debug, Clone, Default)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub emission_rate: Vec<f64>,
    pub excited_fraction: Vec<f64>,
}

/// Evolve every trajectory to `t + t_span`.
///
/// Stochastic stepping is explicit order-1 (Euler–Maruyama); with noise
/// disabled the shared deterministic RK4 drift step is used instead, so a
/// noiseless ensemble reproduces the mean-field integrator exactly.
pub fn integrate_ensemble(
    model: &ReservoirModel,
    ensemble: &mut TrajectoryEnsemble,
    t_span: f64,
    dt: f64,
    opts: &TwaOptions,
) -> Result<TimeSeries, TwaError> {
    let guard = 0.01 / model.collective_rate();
    if dt > guard * (1.0 + 1e-12) {
        return Err(TwaError::StepTooLarge { dt, max: guard });
    }
    if ensemble.is_empty() {
        return Err(TwaError::EmptyEnsemble);
    }
    let drift = Drift::new(model);
    let noise = NoiseGen::new(model);
    let steps = (t_span / dt).ceil().max(1.0) as usize;
    let h = t_span / steps as f64;
    let t0 = ensemble.time();
    let stride = opts.taps_stride;

    // Each worker integrates whole trajectories; taps are reduced in
    // trajectory order afterwards so the result is scheduling-independent.
    let n = model.n;
    let results: Vec<Result<Vec<(f64, f64)>, TwaError>> = ensemble
        .states
        .par_iter_mut()
        .zip(ensemble.rngs.par_iter_mut())
        .enumerate()
        .map(|(traj, (state, rng))| {
            let mut taps: Vec<(f64, f64)> = Vec::new();
            let mut scratch_field = vec![C64::new(0.0, 0.0); n];
            let mut dcoh = vec![C64::new(0.0, 0.0); n];
            let mut dinv = vec![0.0; n];
            let mut rk4 = if opts.noise {
                None
            } else {
                Some(Rk4Scratch::new(n))
            };
            for step in 1..=steps {
                if let Some(s) = rk4.as_mut() {
                    rk4_step(&drift, &mut state.coh, &mut state.inv, h, s);
                } else {
                    drift.eval(
                        &state.coh,
                        &state.inv,
                        &mut scratch_field,
                        &mut dcoh,
                        &mut dinv,
                    );
                    for l in 0..n {
                        state.coh[l] += h * dcoh[l];
                        state.inv[l] += h * dinv[l];
                    }
                    noise.kick(&mut state.coh, &mut state.inv, h, rng);
                }
                if step % 64 == 0 || step == steps {
                    let finite = state
                        .coh
                        .iter()
                        .all(|c| c.re.is_finite() && c.im.is_finite())
                        && state.inv.iter().all(|v| v.is_finite());
                    if !finite {
                        return Err(TwaError::NumericalBlowup {
                            traj,
                            step,
                            t: t0 + step as f64 * h,
                        });
                    }
                }
                if stride > 0 && (step % stride == 0 || step == steps) {
                    taps.push(single_trajectory_observables(model, &noise, state));
                }
            }
            state.t = t0 + t_span;
            Ok(taps)
        })
        .collect();

    let mut series = TimeSeries::default();
    if stride > 0 {
        let mut tap_times = Vec::new();
        for step in 1..=steps {
            if step % stride == 0 || step == steps {
                tap_times.push(t0 + step as f64 * h);
            }
        }
        let m = ensemble.len() as f64;
        let mut r_acc = vec![0.0; tap_times.len()];
        let mut pe_acc = vec![0.0; tap_times.len()];
        for result in results.iter().flatten() {
            for (i, (r, pe)) in result.iter().enumerate() {
                r_acc[i] += r;
                pe_acc[i] += pe;
            }
        }
        series.times = tap_times;
        series.emission_rate = r_acc.into_iter().map(|x| x / m).collect();
        series.excited_fraction = pe_acc.into_iter().map(|x| x / m).collect();
    }
    for result in results {
        result?;
    }
    Ok(series)
}

/// Normal-ordered `(R, Pe)` estimators of a single trajectory.
///
/// Uses `Σ_nm Γ_nm β_n*β_m = Σ_a |B_a†β|²` via the rank-≤2 factorization and
/// replaces the diagonal's symmetric value `|β_n|²` by `v_n + 1/2`.
fn single_trajectory_observables(
    model: &ReservoirModel,
    noise: &NoiseGen,
    state: &TrajectoryState,
) -> (f64, f64) {
    let mut quad = 0.0;
    for col in &noise.b_cols {
        let mut u = C64::new(0.0, 0.0);
        for (b, c) in col.iter().zip(state.coh.iter()) {
            u += b * c;
        }
        quad += u.norm_sqr();
    }
    let mut diag_fix = 0.0;
    let mut pe = 0.0;
    for l in 0..model.n {
        diag_fix += state.coh[l].norm_sqr() - (state.inv[l] + 0.5);
        pe += state.inv[l] + 0.5;
    }
    (quad - model.gamma_1d * diag_fix, pe / model.n as f64)
}

/// Ensemble-averaged observables at the current time.
#[derive(Debug, Clone)]
pub struct EnsembleObservables {
    pub emission_rate: f64,
    pub excited_fraction: f64,
    /// `C_nm = ⟨σ_eg^n σ_ge^m⟩`; diagonal from the inversions.
    pub correlations: Array2<C64>,
}

pub fn ensemble_observables(
    ensemble: &TrajectoryEnsemble,
    model: &ReservoirModel,
) -> EnsembleObservables {
    let m = ensemble.len();
    if m < 100 {
        log::warn!("ensemble of {m} trajectories gives unreliable statistics");
    }
    let n = model.n;
    let mut c = Array2::<C64>::zeros((n, n));
    let mut inv_mean = vec![0.0; n];
    for state in &ensemble.states {
        for a in 0..n {
            inv_mean[a] += state.inv[a];
            for b in (a + 1)..n {
                c[[a, b]] += state.coh[a].conj() * state.coh[b];
            }
        }
    }
    let mf = m as f64;
    let mut pe = 0.0;
    for a in 0..n {
        inv_mean[a] /= mf;
        pe += inv_mean[a] + 0.5;
        c[[a, a]] = C64::new(inv_mean[a] + 0.5, 0.0);
        for b in (a + 1)..n {
            c[[a, b]] /= mf;
            c[[b, a]] = c[[a, b]].conj();
        }
    }
    let mut rate = 0.0;
    for a in 0..n {
        for b in 0..n {
            rate += model.gamma[[a, b]] * c[[a, b]].re;
        }
    }
    EnsembleObservables {
        emission_rate: rate,
        excited_fraction: pe / n as f64,
        correlations: c,
    }
}

/// Per-trajectory classical field amplitudes `E = prefactor·Σ_n c_n β_n`.
pub fn field_values(ensemble: &TrajectoryEnsemble, field: &FieldCoefficients) -> Vec<C64> {
    ensemble
        .states
        .iter()
        .map(|state| {
            let mut e = C64::new(0.0, 0.0);
            for (c, b) in field.coeffs.iter().zip(state.coh.iter()) {
                e += c * b;
            }
            field.prefactor * e
        })
        .collect()
}

/// Options for the two-time correlator.
#[derive(Debug, Clone)]
pub struct CorrelatorOptions {
    pub dt: f64,
    /// Apply the diagonal ordering correction so the estimate is
    /// normal-ordered (`+Σ_n |c_n|² v̄_n e^{−Γ_tot τ/2}`).
    pub ordering_correction: bool,
    /// Maximum tolerated relative drift of `R` over the correlation window.
    pub stationarity_tol: f64,
}

/// Two-time correlator estimate with both the raw classical product and the
/// ordering-corrected series.
#[derive(Debug, Clone)]
pub struct TwoTimeCorrelator {
    pub tau: Vec<f64>,
    /// Normal-ordered estimate (equals `raw` when the correction is off).
    pub g1: Vec<C64>,
    /// Raw classical-product average `⟨E*(t+τ)E(t)⟩`.
    pub raw: Vec<C64>,
    pub r_start: f64,
    pub r_end: f64,
}

/// `g₁(τ) = ⟨Ê†(t_ss+τ)Ê(t_ss)⟩` from a relaxed ensemble.
///
/// Records each trajectory's field amplitude, continues the integration and
/// accumulates `E*(t_ss+τ)·E(t_ss)` (the multi-time classical-product
/// estimator). Non-stationarity is detected from the drift of `R` across the
/// window.
pub fn two_time_field_correlator(
    model: &ReservoirModel,
    ensemble: &mut TrajectoryEnsemble,
    field: &FieldCoefficients,
    tau_grid: &[f64],
    opts: &CorrelatorOptions,
) -> Result<TwoTimeCorrelator, TwaError> {
    if ensemble.is_empty() {
        return Err(TwaError::EmptyEnsemble);
    }
    let m = ensemble.len();
    let e0 = field_values(ensemble, field);
    let obs0 = ensemble_observables(ensemble, model);
    let v_bar: Vec<f64> = (0..model.n)
        .map(|a| obs0.correlations[[a, a]].re - 0.5)
        .collect();
    let gamma_tot = model.gamma_1d + model.gamma_prime + model.pump;

    let mut raw = Vec::with_capacity(tau_grid.len());
    let mut prev = 0.0;
    for &tau in tau_grid {
        if tau > prev {
            integrate_ensemble(
                model,
                ensemble,
                tau - prev,
                opts.dt,
                &TwaOptions {
                    noise: true,
                    taps_stride: 0,
                },
            )?;
            prev = tau;
        }
        let e_tau = field_values(ensemble, field);
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..m {
            acc += e_tau[j].conj() * e0[j];
        }
        raw.push(acc / m as f64);
    }

    let obs1 = ensemble_observables(ensemble, model);
    let (r_start, r_end) = (obs0.emission_rate, obs1.emission_rate);
    let scale = r_start.abs().max(model.gamma_1d);
    if (r_end - r_start).abs() > opts.stationarity_tol * scale {
        return Err(TwaError::NotStationary { r_start, r_end });
    }

    let weight: f64 = field
        .coeffs
        .iter()
        .zip(v_bar.iter())
        .map(|(c, v)| c.norm_sqr() * v)
        .sum::<f64>()
        * field.prefactor
        * field.prefactor;
    let g1 = if opts.ordering_correction {
        tau_grid
            .iter()
            .zip(raw.iter())
            .map(|(&tau, &g)| g + weight * (-0.5 * gamma_tot * tau).exp())
            .collect()
    } else {
        raw.clone()
    };
    Ok(TwoTimeCorrelator {
        tau: tau_grid.to_vec(),
        g1,
        raw,
        r_start,
        r_end,
    })
}

/// Normalized 2D histogram over the complex field plane; the trajectory
/// density stands in for the field's Wigner function.
#[derive(Debug, Clone)]
pub struct FieldHistogram {
    /// Symmetric half-range; bins cover `[−range, range]²`.
    pub range: f64,
    pub bins: usize,
    /// Density normalized so that `Σ density · cell_area = 1`.
    pub density: Array2<f64>,
}

pub fn field_histogram(
    ensemble: &TrajectoryEnsemble,
    field: &FieldCoefficients,
    bins: usize,
    half_range: Option<f64>,
) -> FieldHistogram {
    let values = field_values(ensemble, field);
    let range = half_range.unwrap_or_else(|| {
        let max = values.iter().fold(0.0_f64, |a, e| a.max(e.norm()));
        (1.1 * max).max(1e-12)
    });
    let mut counts = Array2::<f64>::zeros((bins, bins));
    let cell = 2.0 * range / bins as f64;
    let mut kept = 0usize;
    for e in &values {
        let i = ((e.re + range) / cell).floor();
        let j = ((e.im + range) / cell).floor();
        if i >= 0.0 && j >= 0.0 && (i as usize) < bins && (j as usize) < bins {
            counts[[i as usize, j as usize]] += 1.0;
            kept += 1;
        }
    }
    if kept > 0 {
        counts /= kept as f64 * cell * cell;
    }
    FieldHistogram {
        range,
        bins,
        density: counts,
    }
}
