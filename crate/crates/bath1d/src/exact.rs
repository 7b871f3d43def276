//! Dense Lindblad solver for small atom numbers.
//!
//! Ground truth for the approximate methods: steady states from the null
//! space of the vectorized generator, steady-state observables, and two-time
//! correlators via the quantum regression theorem. The computational basis
//! indexes atoms by bits (bit `n` set ⇔ atom `n` excited), and everything is
//! expressed in the frame rotating at the atomic resonance.
//!
//! The master equation is
//!
//!   ρ̇ = −i[H, ρ] + 𝓛_dis[ρ] + 𝓛_Γ′[ρ] + 𝓛_w[ρ],   H = Σ J_nm σ_eg^n σ_ge^m,
//!
//! with collective dissipation weighted by `Γ_nm`, individual decay `Γ′` and
//! incoherent pumping `w` (the pump dissipator is the decay one with
//! `σ_eg ↔ σ_ge` swapped).

use crate::models::ReservoirModel;
use nalgebra::DMatrix;
use ndarray::Array2;
use num_complex::Complex64 as C64;
use thiserror::Error;

/// Largest atom number the dense solver accepts.
pub const N_MAX: usize = 8;
/// Largest atom number solved by a direct null-space computation; above this
/// the steady state is found by long-time integration.
pub const N_MAX_NULLSPACE: usize = 6;

#[derive(Debug, Error)]
pub enum ExactError {
    #[error("dense solver supports at most {max} atoms, got {n}")]
    TooManyAtoms { n: usize, max: usize },
    #[error("density matrix has dimension {got}, expected {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("steady state is degenerate: null space dimension {0}")]
    DegenerateSteadyState(usize),
    #[error("input state is not stationary: ‖L[ρ]‖ = {0:.3e}")]
    NotSteady(f64),
    #[error("long-time integration did not reach residual {target:.1e} (got {got:.1e})")]
    NoConvergence { target: f64, got: f64 },
}

/// `2^N × 2^N` density matrix in the bit basis.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    pub entries: Array2<C64>,
}

impl DensityMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// All atoms in the ground state.
    pub fn ground(n_atoms: usize) -> DensityMatrix {
        let dim = 1 << n_atoms;
        let mut entries = Array2::zeros((dim, dim));
        entries[[0, 0]] = C64::new(1.0, 0.0);
        DensityMatrix { entries }
    }

    /// All atoms excited.
    pub fn fully_inverted(n_atoms: usize) -> DensityMatrix {
        let dim = 1 << n_atoms;
        let mut entries = Array2::zeros((dim, dim));
        entries[[dim - 1, dim - 1]] = C64::new(1.0, 0.0);
        DensityMatrix { entries }
    }

    /// Maximally mixed state, a safe start for long-time relaxation.
    pub fn maximally_mixed(n_atoms: usize) -> DensityMatrix {
        let dim = 1 << n_atoms;
        let mut entries = Array2::zeros((dim, dim));
        let p = C64::new(1.0 / dim as f64, 0.0);
        for i in 0..dim {
            entries[[i, i]] = p;
        }
        DensityMatrix { entries }
    }

    /// Pure state from an (unnormalized) amplitude vector.
    pub fn pure(amplitudes: &[C64]) -> DensityMatrix {
        let dim = amplitudes.len();
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        let mut entries = Array2::zeros((dim, dim));
        for i in 0..dim {
            for j in 0..dim {
                entries[[i, j]] = amplitudes[i] * amplitudes[j].conj() / norm;
            }
        }
        DensityMatrix { entries }
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.entries[[i, i]]).sum()
    }

    /// Hermiticity defect `max |ρ − ρ†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0_f64;
        for i in 0..d {
            for j in i..d {
                let defect = (self.entries[[i, j]] - self.entries[[j, i]].conj()).norm();
                worst = worst.max(defect);
            }
        }
        worst
    }

    /// Smallest eigenvalue (positivity check); `O(dim³)`.
    pub fn min_eigenvalue(&self) -> f64 {
        let d = self.dim();
        let m = DMatrix::from_fn(d, d, |i, j| self.entries[[i, j]]);
        let eig = m.symmetric_eigen();
        eig.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b))
    }
}

/// Steady-state observables: emission rate, excited fraction, coherences.
#[derive(Debug, Clone)]
pub struct Observables {
    /// Photon emission rate `R = Σ_ν Γ_ν ⟨Ô_ν†Ô_ν⟩ = Σ_nm Γ_nm C_nm`.
    pub emission_rate: f64,
    /// Per-atom excited fraction `(1/N) Σ_n ⟨σ_ee^n⟩`.
    pub excited_fraction: f64,
    /// Correlation matrix `C_nm = ⟨σ_eg^n σ_ge^m⟩`.
    pub correlations: Array2<C64>,
}

/// Cached generator of the master equation for one model.
pub struct Liouvillian {
    n: usize,
    dim: usize,
    /// Non-Hermitian effective matrix; `L[ρ] ⊃ −(Vρ + ρV†)`.
    v: Array2<C64>,
    v_dag: Array2<C64>,
    /// `Γ + Γ′·I`, weights of the lowering sandwich terms.
    gamma_eff: Array2<f64>,
    pump: f64,
}

/// Set of bit masks for one atom.
#[inline]
fn bit(n: usize) -> usize {
    1 << n
}

impl Liouvillian {
    pub fn new(model: &ReservoirModel) -> Result<Liouvillian, ExactError> {
        let n = model.n;
        if n > N_MAX {
            return Err(ExactError::TooManyAtoms { n, max: N_MAX });
        }
        let dim = 1 << n;
        let mut v = Array2::<C64>::zeros((dim, dim));
        // V = Σ_nm (iJ_nm + Γeff_nm/2) σ_eg^n σ_ge^m + (w/2) Σ_n σ_gg^n.
        // σ_eg^a σ_ge^b maps |s⟩ → |s − 2^b + 2^a⟩ for s with bit b set and
        // (a = b or bit a clear).
        let mut gamma_eff = model.gamma.clone();
        for d in 0..n {
            gamma_eff[[d, d]] += model.gamma_prime;
        }
        for a in 0..n {
            for b in 0..n {
                let weight = C64::new(0.5 * gamma_eff[[a, b]], model.j[[a, b]]);
                if weight.norm_sqr() == 0.0 {
                    continue;
                }
                for s in 0..dim {
                    if s & bit(b) == 0 {
                        continue;
                    }
                    let mid = s & !bit(b);
                    if mid & bit(a) != 0 {
                        continue;
                    }
                    v[[mid | bit(a), s]] += weight;
                }
            }
        }
        let half_pump = C64::new(0.5 * model.pump, 0.0);
        for s in 0..dim {
            let ground_atoms = n - (s as u64).count_ones() as usize;
            v[[s, s]] += half_pump * ground_atoms as f64;
        }
        let v_dag = {
            let mut vd = Array2::zeros((dim, dim));
            for i in 0..dim {
                for j in 0..dim {
                    vd[[i, j]] = v[[j, i]].conj();
                }
            }
            vd
        };
        Ok(Liouvillian {
            n,
            dim,
            v,
            v_dag,
            gamma_eff,
            pump: model.pump,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `L[ρ]`: the right-hand side of the master equation.
    pub fn apply(&self, rho: &Array2<C64>) -> Result<Array2<C64>, ExactError> {
        if rho.nrows() != self.dim || rho.ncols() != self.dim {
            return Err(ExactError::DimensionMismatch {
                got: rho.nrows(),
                expected: self.dim,
            });
        }
        let dim = self.dim;
        let mut out = Array2::<C64>::zeros((dim, dim));

        // −(Vρ + ρV†); computed directly so non-Hermitian inputs (regression
        // evolution) are handled too.
        let vr = self.v.dot(rho);
        let rv = rho.dot(&self.v_dag);
        out -= &vr;
        out -= &rv;

        // Σ_nm Γeff_nm σ_ge^m ρ σ_eg^n  (lowering sandwich)
        // A_a = ρ σ_eg^a, then Σ_m σ_ge^m Σ_a Γeff_am A_a.
        let mut lowered: Vec<Array2<C64>> = Vec::with_capacity(self.n);
        for a in 0..self.n {
            lowered.push(mul_right_raise(rho, a));
        }
        for m in 0..self.n {
            let mut q = Array2::<C64>::zeros((dim, dim));
            for (a, la) in lowered.iter().enumerate() {
                let g = self.gamma_eff[[a, m]];
                if g != 0.0 {
                    q.scaled_add(C64::new(g, 0.0), la);
                }
            }
            add_mul_left_lower(&q, m, &mut out);
        }

        // w Σ_n σ_eg^n ρ σ_ge^n  (pump sandwich)
        if self.pump != 0.0 {
            let w = C64::new(self.pump, 0.0);
            for a in 0..self.n {
                let ra = mul_right_lower(rho, a);
                add_mul_left_raise_scaled(&ra, a, w, &mut out);
            }
        }
        Ok(out)
    }

    /// Dense matrix of the vectorized generator (column-major vec).
    pub fn matrix(&self) -> DMatrix<C64> {
        let d = self.dim;
        let d2 = d * d;
        let mut l = DMatrix::<C64>::zeros(d2, d2);
        // vec(Vρ) = (I ⊗ V) vec, vec(ρV†) = (conj V ⊗ I) vec.
        let nonzero = iter_nonzero(&self.v);
        for j in 0..d {
            for &(r, c) in &nonzero {
                l[(j * d + r, j * d + c)] -= self.v[[r, c]];
            }
        }
        for &(r, c) in &nonzero {
            let w = self.v[[r, c]].conj();
            for i in 0..d {
                // (conj V ⊗ I): block (r, c), inner identity.
                l[(r * d + i, c * d + i)] -= w;
            }
        }
        // Σ Γeff_nm (σ_ge^n ⊗ σ_ge^m), and pump w (σ_eg^n ⊗ σ_eg^n).
        for a in 0..self.n {
            for m in 0..self.n {
                let g = self.gamma_eff[[a, m]];
                if g == 0.0 {
                    continue;
                }
                let w = C64::new(g, 0.0);
                for sa in 0..d {
                    if sa & bit(a) == 0 {
                        continue;
                    }
                    for sm in 0..d {
                        if sm & bit(m) == 0 {
                            continue;
                        }
                        l[((sa & !bit(a)) * d + (sm & !bit(m)), sa * d + sm)] += w;
                    }
                }
            }
        }
        if self.pump != 0.0 {
            let w = C64::new(self.pump, 0.0);
            for a in 0..self.n {
                for sa in 0..d {
                    if sa & bit(a) != 0 {
                        continue;
                    }
                    for sm in 0..d {
                        if sm & bit(a) != 0 {
                            continue;
                        }
                        l[((sa | bit(a)) * d + (sm | bit(a)), sa * d + sm)] += w;
                    }
                }
            }
        }
        l
    }

    /// Fixed-step RK4 evolution of a (not necessarily Hermitian) matrix.
    pub fn evolve(&self, m: &Array2<C64>, t: f64, dt: f64) -> Result<Array2<C64>, ExactError> {
        let steps = (t / dt).round().max(1.0) as usize;
        let h = t / steps as f64;
        let mut cur = m.clone();
        for _ in 0..steps {
            let k1 = self.apply(&cur)?;
            let k2 = self.apply(&(&cur + &(&k1 * C64::new(0.5 * h, 0.0))))?;
            let k3 = self.apply(&(&cur + &(&k2 * C64::new(0.5 * h, 0.0))))?;
            let k4 = self.apply(&(&cur + &(&k3 * C64::new(h, 0.0))))?;
            let w = C64::new(h / 6.0, 0.0);
            cur = &cur + &((k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * w);
        }
        Ok(cur)
    }

    /// Frobenius norm of `L[ρ]`.
    pub fn residual(&self, rho: &Array2<C64>) -> Result<f64, ExactError> {
        let lr = self.apply(rho)?;
        Ok(lr.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt())
    }
}

fn iter_nonzero(m: &Array2<C64>) -> Vec<(usize, usize)> {
    let mut idx = Vec::new();
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if m[[r, c]].norm_sqr() != 0.0 {
                idx.push((r, c));
            }
        }
    }
    idx
}

/// `ρ σ_eg^a`: column j receives column j+2^a for j with bit a clear.
fn mul_right_raise(rho: &Array2<C64>, a: usize) -> Array2<C64> {
    let d = rho.nrows();
    let mut out = Array2::zeros((d, d));
    for j in 0..d {
        if j & bit(a) == 0 {
            for i in 0..d {
                out[[i, j]] = rho[[i, j | bit(a)]];
            }
        }
    }
    out
}

/// `ρ σ_ge^a`: column j receives column j−2^a for j with bit a set.
fn mul_right_lower(rho: &Array2<C64>, a: usize) -> Array2<C64> {
    let d = rho.nrows();
    let mut out = Array2::zeros((d, d));
    for j in 0..d {
        if j & bit(a) != 0 {
            for i in 0..d {
                out[[i, j]] = rho[[i, j & !bit(a)]];
            }
        }
    }
    out
}

/// `out += σ_ge^m q`: row i receives row i+2^m for i with bit m clear.
fn add_mul_left_lower(q: &Array2<C64>, m: usize, out: &mut Array2<C64>) {
    let d = q.nrows();
    for i in 0..d {
        if i & bit(m) == 0 {
            for j in 0..d {
                out[[i, j]] += q[[i | bit(m), j]];
            }
        }
    }
}

/// `out += w · σ_eg^a q`: row i receives row i−2^a for i with bit a set.
fn add_mul_left_raise_scaled(q: &Array2<C64>, a: usize, w: C64, out: &mut Array2<C64>) {
    let d = q.nrows();
    for i in 0..d {
        if i & bit(a) != 0 {
            for j in 0..d {
                out[[i, j]] += w * q[[i & !bit(a), j]];
            }
        }
    }
}

/// `σ_ge^a ρ` as a fresh matrix (used to seed regression evolutions).
pub(crate) fn mul_left_lower(rho: &Array2<C64>, a: usize) -> Array2<C64> {
    let d = rho.nrows();
    let mut out = Array2::zeros((d, d));
    for i in 0..d {
        if i & bit(a) == 0 {
            for j in 0..d {
                out[[i, j]] = rho[[i | bit(a), j]];
            }
        }
    }
    out
}

/// `Tr[σ_eg^a M] = Σ_{s: bit a clear} M[s, s+2^a]`.
pub(crate) fn trace_raise(m: &Array2<C64>, a: usize) -> C64 {
    let d = m.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for s in 0..d {
        if s & bit(a) == 0 {
            acc += m[[s, s | bit(a)]];
        }
    }
    acc
}

/// Apply the master-equation generator once (convenience wrapper).
pub fn apply_liouvillian(
    model: &ReservoirModel,
    rho: &DensityMatrix,
) -> Result<Array2<C64>, ExactError> {
    Liouvillian::new(model)?.apply(&rho.entries)
}

/// Unique steady state of the master equation.
///
/// `N ≤ 6`: null vector of the dense vectorized generator (SVD for `N ≤ 4`
/// with an explicit degeneracy check, LU with a trace constraint above).
/// `N = 7, 8`: long-time RK4 relaxation from the maximally mixed state.
/// The returned state satisfies `‖L[ρ_ss]‖ < 1e-10` (scaled by the fastest
/// rate) or an error is raised.
pub fn steady_state(model: &ReservoirModel) -> Result<DensityMatrix, ExactError> {
    let liou = Liouvillian::new(model)?;
    let dim = liou.dim();
    let rate_scale = (model.collective_rate() + model.gamma_prime + model.pump).max(1e-300);
    let target = 1e-10 * rate_scale;

    let rho = if model.n <= N_MAX_NULLSPACE {
        let l = liou.matrix();
        let vec = if model.n <= 4 {
            null_vector_svd(&l)?
        } else {
            null_vector_lu(&l, dim)?
        };
        let mut entries = Array2::zeros((dim, dim));
        for j in 0..dim {
            for i in 0..dim {
                entries[[i, j]] = vec[j * dim + i];
            }
        }
        hermitize_and_normalize(entries)
    } else {
        // Relaxation time set by the slowest local rate.
        let slow = [model.gamma_prime, model.pump, model.gamma_1d]
            .into_iter()
            .filter(|r| *r > 0.0)
            .fold(f64::INFINITY, f64::min);
        let t_end = 60.0 / slow.min(rate_scale);
        let dt = 0.05 / rate_scale;
        let relaxed = liou.evolve(&DensityMatrix::maximally_mixed(model.n).entries, t_end, dt)?;
        hermitize_and_normalize(relaxed)
    };

    let got = liou.residual(&rho.entries)?;
    if got > target {
        return Err(ExactError::NoConvergence { target, got });
    }
    Ok(rho)
}

fn hermitize_and_normalize(entries: Array2<C64>) -> DensityMatrix {
    let d = entries.nrows();
    // Dividing by the complex trace first removes the arbitrary global phase
    // of a null vector; hermitizing after that is then safe.
    let tr: C64 = (0..d).map(|i| entries[[i, i]]).sum();
    let entries = entries.mapv(|x| x / tr);
    let mut h = Array2::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            h[[i, j]] = 0.5 * (entries[[i, j]] + entries[[j, i]].conj());
        }
    }
    DensityMatrix { entries: h }
}

fn null_vector_svd(l: &DMatrix<C64>) -> Result<Vec<C64>, ExactError> {
    let svd = l.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested");
    let smax = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    let tiny: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] < 1e-10 * smax)
        .collect();
    if tiny.len() != 1 {
        return Err(ExactError::DegenerateSteadyState(tiny.len()));
    }
    // Null vector = conjugated row of Vᴴ with the smallest singular value.
    let mut idx = 0;
    let mut best = f64::INFINITY;
    for i in 0..svd.singular_values.len() {
        if svd.singular_values[i] < best {
            best = svd.singular_values[i];
            idx = i;
        }
    }
    Ok(v_t.row(idx).iter().map(|x| x.conj()).collect())
}

/// Replace one row of `L` by the trace functional and solve `L x = e_row`.
fn null_vector_lu(l: &DMatrix<C64>, dim: usize) -> Result<Vec<C64>, ExactError> {
    let d2 = l.nrows();
    let mut a = l.clone();
    let row = 0;
    for c in 0..d2 {
        a[(row, c)] = C64::new(0.0, 0.0);
    }
    for i in 0..dim {
        a[(row, i * dim + i)] = C64::new(1.0, 0.0);
    }
    let mut rhs = nalgebra::DVector::<C64>::zeros(d2);
    rhs[row] = C64::new(1.0, 0.0);
    let lu = a.lu();
    match lu.solve(&rhs) {
        Some(x) => Ok(x.iter().cloned().collect()),
        None => Err(ExactError::DegenerateSteadyState(0)),
    }
}

/// Emission rate, excited fraction, and coherence matrix for a given state.
pub fn observables(model: &ReservoirModel, rho: &DensityMatrix) -> Observables {
    let n = model.n;
    let mut c = Array2::zeros((n, n));
    for a in 0..n {
        for b in 0..n {
            c[[a, b]] = correlation_entry(&rho.entries, a, b);
        }
    }
    let mut rate = 0.0;
    let mut pe = 0.0;
    for a in 0..n {
        pe += c[[a, a]].re;
        for b in 0..n {
            rate += model.gamma[[a, b]] * c[[a, b]].re;
        }
    }
    Observables {
        emission_rate: rate,
        excited_fraction: pe / n as f64,
        correlations: c,
    }
}

/// `C_ab = ⟨σ_eg^a σ_ge^b⟩ = Σ_{s: b set, (a = b or a clear)} ρ[s, s−2^b+2^a]`.
fn correlation_entry(rho: &Array2<C64>, a: usize, b: usize) -> C64 {
    let d = rho.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for s in 0..d {
        if s & bit(b) == 0 {
            continue;
        }
        if a == b {
            acc += rho[[s, s]];
        } else {
            if s & bit(a) != 0 {
                continue;
            }
            acc += rho[[s, (s & !bit(b)) | bit(a)]];
        }
    }
    acc
}

/// `⟨σ_eg^a⟩` of a state; vanishes in the steady state by U(1) symmetry.
pub fn coherence(rho: &DensityMatrix, a: usize) -> C64 {
    trace_raise(&rho.entries, a)
}

/// Two-time correlator `g(τ) = ⟨A†(t_ss+τ) B(t_ss)⟩` by quantum regression,
/// with `A = Σ_n a_n σ_ge^n` and `B = Σ_n b_n σ_ge^n`.
///
/// Evolves `B ρ_ss` under the generator and traces against `A†` on `tau_grid`
/// (increasing from 0). Inputs are checked for stationarity.
pub fn two_time_correlator(
    model: &ReservoirModel,
    rho_ss: &DensityMatrix,
    a_coeffs: &[C64],
    b_coeffs: &[C64],
    tau_grid: &[f64],
) -> Result<Vec<C64>, ExactError> {
    let liou = Liouvillian::new(model)?;
    let rate_scale = model.collective_rate() + model.gamma_prime + model.pump;
    let res = liou.residual(&rho_ss.entries)?;
    if res > 1e-8 * rate_scale.max(1.0) {
        return Err(ExactError::NotSteady(res));
    }

    let dim = liou.dim();
    let mut m = Array2::<C64>::zeros((dim, dim));
    for (atom, &w) in b_coeffs.iter().enumerate() {
        if w.norm_sqr() != 0.0 {
            m.scaled_add(w, &mul_left_lower(&rho_ss.entries, atom));
        }
    }

    let dt = 0.02 / rate_scale.max(1.0);
    let mut out = Vec::with_capacity(tau_grid.len());
    let mut prev_tau = 0.0;
    for &tau in tau_grid {
        if tau > prev_tau {
            m = liou.evolve(&m, tau - prev_tau, dt)?;
            prev_tau = tau;
        }
        let mut g = C64::new(0.0, 0.0);
        for (atom, &w) in a_coeffs.iter().enumerate() {
            if w.norm_sqr() != 0.0 {
                g += w.conj() * trace_raise(&m, atom);
            }
        }
        out.push(g);
    }
    Ok(out)
}

/// Field correlator `⟨Ê†(t+τ)Ê(t)⟩` for a field-coefficient set, prefactor
/// squared included.
pub fn field_correlator(
    model: &ReservoirModel,
    rho_ss: &DensityMatrix,
    field: &crate::models::FieldCoefficients,
    tau_grid: &[f64],
) -> Result<Vec<C64>, ExactError> {
    let g = two_time_correlator(model, rho_ss, &field.coeffs, &field.coeffs, tau_grid)?;
    let p2 = field.prefactor * field.prefactor;
    Ok(g.into_iter().map(|x| x * p2).collect())
}

/// Emission spectrum `S(ω) = 2 Re ∫₀^∞ e^{−iωτ} g₁(τ) dτ` by trapezoidal
/// quadrature over the sampled correlator; `ω` is the detuning from resonance.
pub fn spectrum_from_g1(tau: &[f64], g1: &[C64], detuning: &[f64]) -> Vec<f64> {
    detuning
        .iter()
        .map(|&w| {
            let mut acc = 0.0;
            for i in 1..tau.len() {
                let h = tau[i] - tau[i - 1];
                let f0 = (g1[i - 1] * C64::from_polar(1.0, -w * tau[i - 1])).re;
                let f1 = (g1[i] * C64::from_polar(1.0, -w * tau[i])).re;
                acc += 0.5 * h * (f0 + f1);
            }
            2.0 * acc
        })
        .collect()
}
