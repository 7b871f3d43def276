//! Factorized mean-field dynamics and synchronization diagnostics.
//!
//! Each atom is a classical dipole `(s_z, s⊥, φ)` obeying
//!
//!   ṡ_z^ℓ = −s⊥_ℓ Σ_{n≠ℓ} s⊥_n (2J_nℓ sin φ_nℓ + Γ_nℓ cos φ_nℓ)
//!           − (Γ′+Γ₁D+w) s_z^ℓ + (w−Γ′−Γ₁D)/2,
//!   ṡ⊥_ℓ = s_z^ℓ Σ_{n≠ℓ} s⊥_n (2J_ℓn sin φ_nℓ + Γ_ℓn cos φ_nℓ)
//!           − ((Γ′+w+Γ₁D)/2) s⊥_ℓ,
//!   φ̇_ℓ  = (s_z^ℓ/s⊥_ℓ) Σ_{n≠ℓ} s⊥_n (−2J_ℓn cos φ_nℓ + Γ_ℓn sin φ_nℓ),
//!
//! with `φ_nℓ = φ_n − φ_ℓ`. Time integration is performed in the equivalent
//! complex variables `(s⊥ e^{-iφ}, s_z)` where the `s⊥ → 0` pole is absent;
//! the polar derivative above is exposed for analysis and cross-checks.
//!
//! Synchronization is quantified by Kuramoto-type order parameters: the field
//! amplitude for the cavity, left/right amplitudes for the ring, and
//! position-dependent causal amplitudes for the waveguide.

use crate::dynamics::{drift_norm, rk4_step, Drift, Rk4Scratch};
use crate::models::{ModelKind, ReservoirModel};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::f64::consts::PI;
use thiserror::Error;

/// Coherence below which the phase derivative is undefined and reported as 0.
pub const PHASE_EPSILON: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum MeanFieldError {
    #[error("dt = {dt} exceeds the stability guard 0.01/(N·Γ₁D) = {max}")]
    StepTooLarge { dt: f64, max: f64 },
    #[error("non-finite state at step {step} (t = {t})")]
    NumericalBlowup { step: usize, t: f64 },
    #[error("magnetization requires 0 < kd < π, got {0}")]
    InvalidKd(f64),
    #[error("magnetization requires at least 2 atoms")]
    TooFewAtoms,
}

/// Per-atom mean-field variables.
#[derive(Debug, Clone)]
pub struct MeanFieldState {
    pub s_z: Vec<f64>,
    pub s_perp: Vec<f64>,
    pub phi: Vec<f64>,
}

impl MeanFieldState {
    /// Default randomized initial condition: inversion near the pump-balanced
    /// single-atom value, a small coherence seed, and uniform random phases.
    /// Synchronization must emerge from this disorder.
    pub fn seeded(model: &ReservoirModel, seed: u64) -> MeanFieldState {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let gamma_tot = model.gamma_1d + model.gamma_prime + model.pump;
        let balanced = 0.5 * (model.pump - model.gamma_prime - model.gamma_1d) / gamma_tot;
        let n = model.n;
        MeanFieldState {
            s_z: (0..n)
                .map(|_| balanced + 0.01 * rng.gen_range(-1.0..1.0))
                .collect(),
            s_perp: vec![1e-3; n],
            phi: (0..n).map(|_| rng.gen_range(0.0..2.0 * PI)).collect(),
        }
    }

    pub(crate) fn to_complex(&self) -> (Vec<C64>, Vec<f64>) {
        let coh = self
            .s_perp
            .iter()
            .zip(&self.phi)
            .map(|(&sp, &ph)| C64::from_polar(sp, -ph))
            .collect();
        (coh, self.s_z.clone())
    }

    pub(crate) fn from_complex(coh: &[C64], inv: &[f64]) -> MeanFieldState {
        MeanFieldState {
            s_z: inv.to_vec(),
            s_perp: coh.iter().map(|c| c.norm()).collect(),
            phi: coh.iter().map(|c| -c.arg()).collect(),
        }
    }
}

/// Time derivative of a mean-field state, plus any atoms at the phase pole.
#[derive(Debug, Clone)]
pub struct MfDerivative {
    pub ds_z: Vec<f64>,
    pub ds_perp: Vec<f64>,
    pub dphi: Vec<f64>,
    /// Atoms where `s⊥ < PHASE_EPSILON` so `φ̇` was set to zero.
    pub pole_atoms: Vec<usize>,
}

/// The three mean-field equations, evaluated in polar variables.
pub fn mf_derivative(state: &MeanFieldState, model: &ReservoirModel) -> MfDerivative {
    let n = model.n;
    let gamma_tot = model.gamma_1d + model.gamma_prime + model.pump;
    let pump_excess = 0.5 * (model.pump - model.gamma_prime - model.gamma_1d);
    let mut ds_z = vec![0.0; n];
    let mut ds_perp = vec![0.0; n];
    let mut dphi = vec![0.0; n];
    let mut pole_atoms = Vec::new();

    for l in 0..n {
        let mut sum_z = 0.0;
        let mut sum_perp = 0.0;
        let mut sum_phi = 0.0;
        for a in 0..n {
            if a == l {
                continue;
            }
            let dp = state.phi[a] - state.phi[l];
            let (sin, cos) = dp.sin_cos();
            let j = model.j[[l, a]];
            let g = model.gamma[[l, a]];
            let sp = state.s_perp[a];
            sum_z += sp * (2.0 * j * sin + g * cos);
            sum_perp += sp * (2.0 * j * sin + g * cos);
            sum_phi += sp * (-2.0 * j * cos + g * sin);
        }
        ds_z[l] = -state.s_perp[l] * sum_z - gamma_tot * state.s_z[l] + pump_excess;
        ds_perp[l] = state.s_z[l] * sum_perp - 0.5 * gamma_tot * state.s_perp[l];
        if state.s_perp[l] < PHASE_EPSILON {
            pole_atoms.push(l);
        } else {
            dphi[l] = state.s_z[l] / state.s_perp[l] * sum_phi;
        }
    }
    MfDerivative {
        ds_z,
        ds_perp,
        dphi,
        pole_atoms,
    }
}

/// Integration options for [`integrate_mf`].
#[derive(Debug, Clone)]
pub struct MfOptions {
    /// Sample the trajectory every `stride` steps (0 = final state only).
    pub stride: usize,
    /// Drift norm below which the final state is tagged steady.
    pub steady_tol: f64,
}

impl Default for MfOptions {
    fn default() -> Self {
        MfOptions {
            stride: 0,
            steady_tol: 1e-6,
        }
    }
}

/// Sampled mean-field trajectory.
#[derive(Debug, Clone)]
pub struct MfTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<MeanFieldState>,
    pub final_state: MeanFieldState,
    /// True when the final drift norm fell below the requested tolerance.
    pub steady: bool,
    pub final_drift_norm: f64,
}

/// Fixed-step fourth-order integration of the mean-field system.
///
/// `dt` must satisfy the collective stability guard `dt ≤ 0.01/(N·Γ₁D)`.
pub fn integrate_mf(
    state0: &MeanFieldState,
    model: &ReservoirModel,
    t_end: f64,
    dt: f64,
    opts: &MfOptions,
) -> Result<MfTrajectory, MeanFieldError> {
    let guard = 0.01 / model.collective_rate();
    if dt > guard * (1.0 + 1e-12) {
        return Err(MeanFieldError::StepTooLarge { dt, max: guard });
    }
    let drift = Drift::new(model);
    let (mut coh, mut inv) = state0.to_complex();
    let mut scratch = Rk4Scratch::new(model.n);
    let steps = (t_end / dt).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;

    let mut times = Vec::new();
    let mut states = Vec::new();
    if opts.stride > 0 {
        times.push(0.0);
        states.push(state0.clone());
    }
    for step in 1..=steps {
        rk4_step(&drift, &mut coh, &mut inv, h, &mut scratch);
        if step % 64 == 0 || step == steps {
            let finite = coh.iter().all(|c| c.re.is_finite() && c.im.is_finite())
                && inv.iter().all(|v| v.is_finite());
            if !finite {
                return Err(MeanFieldError::NumericalBlowup {
                    step,
                    t: step as f64 * h,
                });
            }
        }
        if opts.stride > 0 && (step % opts.stride == 0 || step == steps) {
            times.push(step as f64 * h);
            states.push(MeanFieldState::from_complex(&coh, &inv));
        }
    }
    let final_state = MeanFieldState::from_complex(&coh, &inv);
    let final_drift_norm = drift_norm(&drift, &coh, &inv);
    Ok(MfTrajectory {
        times,
        states,
        steady: final_drift_norm < opts.steady_tol,
        final_drift_norm,
        final_state,
    })
}

/// Kuramoto-type order parameters; the variant depends on the model kind.
#[derive(Debug, Clone)]
pub enum OrderParameters {
    /// `E = Σ_n s⊥_n e^{-iφ_n} = r e^{-iψ}`.
    Cavity { r: f64, psi: f64 },
    /// `E_{L/R} = Σ_n e^{±ikz_n} s⊥_n e^{-iφ_n} = r_{L/R} e^{-iφ_{L/R}}`.
    Ring {
        r_left: f64,
        phi_left: f64,
        r_right: f64,
        phi_right: f64,
    },
    /// Causal sums: `E_R(ℓ)` collects atoms with `z_n < z_ℓ`, `E_L(ℓ)` those
    /// with `z_n > z_ℓ`; `r_right[0] = 0` and `r_left[N-1] = 0` for ordered
    /// arrays.
    Waveguide {
        r_right: Vec<f64>,
        phi_right: Vec<f64>,
        r_left: Vec<f64>,
        phi_left: Vec<f64>,
    },
}

impl OrderParameters {
    /// Largest order amplitude, used by the synchronization probe.
    pub fn max_amplitude(&self) -> f64 {
        match self {
            OrderParameters::Cavity { r, .. } => *r,
            OrderParameters::Ring { r_left, r_right, .. } => r_left.max(*r_right),
            OrderParameters::Waveguide {
                r_right, r_left, ..
            } => r_right
                .iter()
                .chain(r_left.iter())
                .fold(0.0_f64, |a, &b| a.max(b)),
        }
    }
}

pub fn order_parameters(state: &MeanFieldState, model: &ReservoirModel) -> OrderParameters {
    let (coh, _) = state.to_complex();
    match model.kind {
        ModelKind::SingleModeCavity => {
            let e: C64 = coh.iter().sum();
            OrderParameters::Cavity {
                r: e.norm(),
                psi: -e.arg(),
            }
        }
        ModelKind::RingCavity => {
            let (el, er) = ring_fields(&coh, model);
            OrderParameters::Ring {
                r_left: el.norm(),
                phi_left: -el.arg(),
                r_right: er.norm(),
                phi_right: -er.arg(),
            }
        }
        ModelKind::Waveguide => {
            let n = model.n;
            let mut r_right = vec![0.0; n];
            let mut phi_right = vec![0.0; n];
            let mut r_left = vec![0.0; n];
            let mut phi_left = vec![0.0; n];
            for l in 0..n {
                let mut e_r = C64::new(0.0, 0.0);
                let mut e_l = C64::new(0.0, 0.0);
                for a in 0..n {
                    let z = model.k * model.positions[a];
                    if model.positions[a] < model.positions[l] {
                        e_r += C64::from_polar(1.0, -z) * coh[a];
                    } else if model.positions[a] > model.positions[l] {
                        e_l += C64::from_polar(1.0, z) * coh[a];
                    }
                }
                r_right[l] = e_r.norm();
                phi_right[l] = -e_r.arg();
                r_left[l] = e_l.norm();
                phi_left[l] = -e_l.arg();
            }
            OrderParameters::Waveguide {
                r_right,
                phi_right,
                r_left,
                phi_left,
            }
        }
    }
}

fn ring_fields(coh: &[C64], model: &ReservoirModel) -> (C64, C64) {
    let mut el = C64::new(0.0, 0.0);
    let mut er = C64::new(0.0, 0.0);
    for (a, &c) in coh.iter().enumerate() {
        let z = model.k * model.positions[a];
        el += C64::from_polar(1.0, z) * c;
        er += C64::from_polar(1.0, -z) * c;
    }
    (el, er)
}

/// Wrap a phase difference into `(−π, π]`.
pub fn wrap_phase(x: f64) -> f64 {
    let y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y - 2.0 * PI
    } else {
        y
    }
}

/// Nearest-neighbour phase-order diagnostic
/// `M(n) = (|Δφ_n − kd| − |Δφ_n + kd|)/(2kd)`, `Δφ_n = φ_n − φ_{n−1}`
/// wrapped to `(−π, π]`. Returned for atoms `n = 2..N` (length `N−1`);
/// `M = +1` marks right order (`φ_n = −k z_n`), `M = −1` left order.
pub fn magnetization(phi: &[f64], kd: f64) -> Result<Vec<f64>, MeanFieldError> {
    if phi.len() < 2 {
        return Err(MeanFieldError::TooFewAtoms);
    }
    if !(kd > 0.0 && kd < PI) {
        return Err(MeanFieldError::InvalidKd(kd));
    }
    Ok(phi
        .windows(2)
        .map(|w| {
            let dp = wrap_phase(w[1] - w[0]);
            // Clamp away float round-off; the exact range is [−1, 1].
            (((dp - kd).abs() - (dp + kd).abs()) / (2.0 * kd)).clamp(-1.0, 1.0)
        })
        .collect())
}

/// Result of one pump point of the synchronization-window probe.
#[derive(Debug, Clone)]
pub struct SyncProbePoint {
    pub pump: f64,
    pub synchronized: bool,
    /// Final maximum order amplitude.
    pub r_final: f64,
    pub threshold: f64,
}

/// Probe options; `threshold_frac` scales `N·max s⊥` to set the
/// synchronized/unsynchronized decision level.
#[derive(Debug, Clone)]
pub struct SyncProbeOptions {
    pub t_end: f64,
    pub dt: f64,
    pub seed: u64,
    pub threshold_frac: f64,
}

impl SyncProbeOptions {
    pub fn for_model(model: &ReservoirModel) -> SyncProbeOptions {
        SyncProbeOptions {
            t_end: 40.0 / (model.gamma_1d + model.gamma_prime + 1.0),
            dt: 0.01 / model.collective_rate(),
            seed: 1,
            threshold_frac: 0.1,
        }
    }
}

/// Integrate from randomized phases at each pump strength and flag the runs
/// whose maximum order amplitude exceeds the threshold fraction.
pub fn sync_window_probe(
    model: &ReservoirModel,
    w_grid: &[f64],
    opts: &SyncProbeOptions,
) -> Result<Vec<SyncProbePoint>, MeanFieldError> {
    let mut out = Vec::with_capacity(w_grid.len());
    for (i, &w) in w_grid.iter().enumerate() {
        let m = model.with_pump(w);
        let state0 = MeanFieldState::seeded(&m, opts.seed.wrapping_add(i as u64));
        let traj = integrate_mf(&state0, &m, opts.t_end, opts.dt, &MfOptions::default())?;
        let r_final = order_parameters(&traj.final_state, &m).max_amplitude();
        let max_sp = traj
            .final_state
            .s_perp
            .iter()
            .fold(0.0_f64, |a, &b| a.max(b));
        let threshold = opts.threshold_frac * m.n as f64 * max_sp;
        // Synchronization needs surviving coherence: outside the window every
        // s⊥ decays below its 1e-3 seed and the amplitude ratio is meaningless.
        let coherent = max_sp > 1e-3;
        out.push(SyncProbePoint {
            pump: w,
            synchronized: coherent && r_final > threshold,
            r_final,
            threshold,
        });
    }
    Ok(out)
}
