//! Shared factorized drift in complex variables.
//!
//! Both the mean-field integrator and the stochastic trajectory engine evolve
//! per-atom pairs `(β_ℓ, v_ℓ)` with `β_ℓ ↔ ⟨σ_ge^ℓ⟩ = s⊥_ℓ e^{-iφ_ℓ}` and
//! `v_ℓ ↔ ⟨σ_z^ℓ⟩/2 = s_z^ℓ`:
//!
//!   dβ_ℓ/dt = 2 v_ℓ G_ℓ − ((Γ₁D+Γ′+w)/2) β_ℓ,
//!   dv_ℓ/dt = −2 Re[β_ℓ* G_ℓ] − (Γ₁D+Γ′+w) v_ℓ + (w−Γ′−Γ₁D)/2,
//!
//! with the collective field `G_ℓ = Σ_{n≠ℓ} (iJ_ℓn + Γ_ℓn/2) β_n`. In polar
//! coordinates these are exactly the three mean-field equations for
//! `(s_z, s⊥, φ)`; the complex form has no coordinate singularity at `s⊥ = 0`.

use crate::models::ReservoirModel;
use num_complex::Complex64 as C64;

/// Cached coupling kernel `K_ℓn = iJ_ℓn + Γ_ℓn/2` (zero diagonal) and rates.
pub(crate) struct Drift {
    pub n: usize,
    /// Row-major `n×n` kernel.
    kernel: Vec<C64>,
    pub gamma_tot: f64,
    pub pump_excess: f64,
}

impl Drift {
    pub fn new(model: &ReservoirModel) -> Drift {
        let n = model.n;
        let mut kernel = vec![C64::new(0.0, 0.0); n * n];
        for l in 0..n {
            for m in 0..n {
                if l != m {
                    kernel[l * n + m] = C64::new(0.5 * model.gamma[[l, m]], model.j[[l, m]]);
                }
            }
        }
        Drift {
            n,
            kernel,
            gamma_tot: model.gamma_1d + model.gamma_prime + model.pump,
            pump_excess: 0.5 * (model.pump - model.gamma_prime - model.gamma_1d),
        }
    }

    /// Collective fields `G_ℓ` for the current coherences.
    pub fn collective_field(&self, coh: &[C64], out: &mut [C64]) {
        for l in 0..self.n {
            let row = &self.kernel[l * self.n..(l + 1) * self.n];
            let mut acc = C64::new(0.0, 0.0);
            for (k, b) in row.iter().zip(coh.iter()) {
                acc += k * b;
            }
            out[l] = acc;
        }
    }

    /// Drift evaluated into `(dcoh, dinv)`; `field` is scratch of length `n`.
    pub fn eval(
        &self,
        coh: &[C64],
        inv: &[f64],
        field: &mut [C64],
        dcoh: &mut [C64],
        dinv: &mut [f64],
    ) {
        self.collective_field(coh, field);
        let half = 0.5 * self.gamma_tot;
        for l in 0..self.n {
            let g = field[l];
            dcoh[l] = 2.0 * inv[l] * g - half * coh[l];
            dinv[l] = -2.0 * (coh[l].conj() * g).re - self.gamma_tot * inv[l] + self.pump_excess;
        }
    }
}

/// Scratch buffers for a fixed-step RK4 sweep over `(coh, inv)`.
pub(crate) struct Rk4Scratch {
    field: Vec<C64>,
    k_coh: [Vec<C64>; 4],
    k_inv: [Vec<f64>; 4],
    tmp_coh: Vec<C64>,
    tmp_inv: Vec<f64>,
}

impl Rk4Scratch {
    pub fn new(n: usize) -> Rk4Scratch {
        let zc = vec![C64::new(0.0, 0.0); n];
        let zf = vec![0.0; n];
        Rk4Scratch {
            field: zc.clone(),
            k_coh: [zc.clone(), zc.clone(), zc.clone(), zc.clone()],
            k_inv: [zf.clone(), zf.clone(), zf.clone(), zf.clone()],
            tmp_coh: zc,
            tmp_inv: zf,
        }
    }
}

/// One classical fourth-order step of the drift equations.
pub(crate) fn rk4_step(
    drift: &Drift,
    coh: &mut [C64],
    inv: &mut [f64],
    dt: f64,
    s: &mut Rk4Scratch,
) {
    let n = drift.n;
    let halves = [0.0, 0.5 * dt, 0.5 * dt, dt];
    for stage in 0..4 {
        if stage == 0 {
            s.tmp_coh.copy_from_slice(coh);
            s.tmp_inv.copy_from_slice(inv);
        } else {
            let h = halves[stage];
            for l in 0..n {
                s.tmp_coh[l] = coh[l] + h * s.k_coh[stage - 1][l];
                s.tmp_inv[l] = inv[l] + h * s.k_inv[stage - 1][l];
            }
        }
        let (kc, ki) = {
            let (a, b) = s.k_coh.split_at_mut(stage);
            let _ = a;
            let (c, d) = s.k_inv.split_at_mut(stage);
            let _ = c;
            (&mut b[0], &mut d[0])
        };
        drift.eval(&s.tmp_coh, &s.tmp_inv, &mut s.field, kc, ki);
    }
    let w = dt / 6.0;
    for l in 0..n {
        coh[l] += w * (s.k_coh[0][l] + 2.0 * s.k_coh[1][l] + 2.0 * s.k_coh[2][l] + s.k_coh[3][l]);
        inv[l] += w * (s.k_inv[0][l] + 2.0 * s.k_inv[1][l] + 2.0 * s.k_inv[2][l] + s.k_inv[3][l]);
    }
}

/// Euclidean norm of the drift, used to tag steady states.
pub(crate) fn drift_norm(drift: &Drift, coh: &[C64], inv: &[f64]) -> f64 {
    let n = drift.n;
    let mut field = vec![C64::new(0.0, 0.0); n];
    let mut dcoh = vec![C64::new(0.0, 0.0); n];
    let mut dinv = vec![0.0; n];
    drift.eval(coh, inv, &mut field, &mut dcoh, &mut dinv);
    let sum: f64 = dcoh.iter().map(|c| c.norm_sqr()).sum::<f64>()
        + dinv.iter().map(|v| v * v).sum::<f64>();
    sum.sqrt()
}
