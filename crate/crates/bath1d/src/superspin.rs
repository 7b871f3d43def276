//! Cumulant dynamics of partially permutation-symmetric ring-cavity arrays.
//!
//! For commensurate spacings `d = mλ₀/(2p)` the ensemble splits into `p`
//! symmetric groups, each represented by a collective superspin with the
//! `1/N_α` normalization (the operators do not close an SU(2) algebra). The
//! second-order cumulant system couples `⟨Ĵ_z^α⟩`, `⟨Ĵ₊^αĴ₋^α⟩` and the
//! cross-correlators `⟨Ĵ₊^αĴ₋^ξ⟩`; the circulant structure of the group
//! couplings `Γ_αξ = Γ₁D cos(kd(α−ξ))` collapses it to two variables with
//! closed-form steady states and thresholds.
//!
//! Emission rates in normalized superspin variables are converted to physical
//! units by the factor `N_s² = (N/p)²`, which reproduces the ring maximum
//! `R_max = N²Γ₁D/16` at `w = NΓ₁D/4` (and `N²Γ₁D/8` for the single-mode
//! cavity, `p = 1`).

use crate::models::ModelKind;
use ndarray::Array2;
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SuperspinError {
    #[error("atom count {n} is not divisible by group count {p}")]
    Indivisible { n: usize, p: usize },
    #[error("group count must be at least 1")]
    NoGroups,
    #[error("m = {m} is a multiple of p = {p}: mirror spacing collapses the partition, use p = 1")]
    MirrorPartition { m: usize, p: usize },
    #[error("closed-form thresholds exist for the cavity and ring only")]
    WaveguideNotSupported,
    #[error("cumulant integration did not settle (residual {0:.2e})")]
    NoConvergence(f64),
}

/// Cyclic group assignment and in-phase sign factors for a commensurate array.
#[derive(Debug, Clone)]
pub struct SuperspinPartition {
    /// Total atom count `N`.
    pub n: usize,
    /// Number of symmetric groups `p`.
    pub p: usize,
    /// Wavelength integer in `d = mλ₀/(2p)`.
    pub m: usize,
    /// Atoms per group `N_s = N/p`.
    pub n_per_group: usize,
    /// Group index (0-based) of each atom.
    pub groups: Vec<usize>,
    /// Sign factors `(−1)^{m(c_n+1)}` aligning coherences within each group.
    pub signs: Vec<f64>,
    /// Group couplings `Γ_αξ/Γ₁D = cos(πm(α−ξ)/p)`.
    pub couplings: Array2<f64>,
}

/// Build the cyclic partition for `N` atoms at spacing `d = mλ₀/(2p)`.
pub fn build_partition(n: usize, m: usize, p: usize) -> Result<SuperspinPartition, SuperspinError> {
    if p == 0 {
        return Err(SuperspinError::NoGroups);
    }
    if n % p != 0 {
        return Err(SuperspinError::Indivisible { n, p });
    }
    if p > 1 && m % p == 0 {
        return Err(SuperspinError::MirrorPartition { m, p });
    }
    let groups: Vec<usize> = (0..n).map(|i| i % p).collect();
    // c_n counts how many wavelengths atom n sits from the first atom of its
    // group; the parity (−1)^{m(c+1)} adds group coherences in phase.
    let signs: Vec<f64> = (0..n)
        .map(|i| {
            let c = i / p + 1;
            if (m * (c + 1)) % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    let kd = PI * m as f64 / p as f64;
    let couplings = Array2::from_shape_fn((p, p), |(a, b)| (kd * (a as f64 - b as f64)).cos());
    Ok(SuperspinPartition {
        n,
        p,
        m,
        n_per_group: n / p,
        groups,
        signs,
        couplings,
    })
}

/// Rate triple shared by the cumulant and reduced systems.
#[derive(Debug, Clone, Copy)]
pub struct Rates {
    pub gamma_1d: f64,
    pub gamma_prime: f64,
    pub pump: f64,
}

/// Second-order cumulant variables of the `p` superspins.
#[derive(Debug, Clone)]
pub struct CumulantState {
    /// `⟨Ĵ_z^α⟩`.
    pub jz: Vec<f64>,
    /// `⟨Ĵ₊^αĴ₋^α⟩`.
    pub jpm: Vec<f64>,
    /// `⟨Ĵ₊^αĴ₋^ξ⟩` for `α ≠ ξ` (diagonal unused).
    pub cross: Array2<f64>,
}

impl CumulantState {
    /// All atoms in the ground state.
    pub fn all_ground(p: usize) -> CumulantState {
        CumulantState {
            jz: vec![-0.5; p],
            jpm: vec![0.0; p],
            cross: Array2::zeros((p, p)),
        }
    }

    /// Total physical emission rate `N_s² Γ₁D Σ_α R_α`.
    pub fn physical_emission_rate(&self, partition: &SuperspinPartition, rates: &Rates) -> f64 {
        let ns = partition.n_per_group as f64;
        let mut total = 0.0;
        for a in 0..partition.p {
            total += self.group_rate(partition, a);
        }
        ns * ns * rates.gamma_1d * total
    }

    /// `R_α = Σ_μ (Γ_μα/Γ₁D) ⟨Ĵ₊^μĴ₋^α⟩` in normalized superspin units.
    pub fn group_rate(&self, partition: &SuperspinPartition, alpha: usize) -> f64 {
        let mut r = self.jpm[alpha];
        for mu in 0..partition.p {
            if mu != alpha {
                r += partition.couplings[[mu, alpha]] * self.cross[[mu, alpha]];
            }
        }
        r
    }

    /// Per-atom excited fraction `⟨Ĵ_z⟩ + 1/2` averaged over groups.
    pub fn excited_fraction(&self) -> f64 {
        self.jz.iter().map(|z| z + 0.5).sum::<f64>() / self.jz.len() as f64
    }
}

/// Right-hand side of the `p + p²` cumulant system, pump seed `w/N_α`
/// included.
pub fn cumulant_derivatives(
    state: &CumulantState,
    partition: &SuperspinPartition,
    rates: &Rates,
) -> CumulantState {
    let p = partition.p;
    let ns = partition.n_per_group as f64;
    let g1d = rates.gamma_1d;
    let gp = rates.gamma_prime;
    let w = rates.pump;
    let gamma = |a: usize, b: usize| g1d * partition.couplings[[a, b]];

    let mut djz = vec![0.0; p];
    let mut djpm = vec![0.0; p];
    let mut dcross = Array2::zeros((p, p));

    for a in 0..p {
        let mut pair_sum = 0.0;
        for mu in 0..p {
            if mu != a {
                pair_sum += gamma(a, mu) * ns * (state.cross[[a, mu]] + state.cross[[mu, a]]);
            }
        }
        djz[a] =
            -0.5 * pair_sum - g1d * ns * state.jpm[a] - (gp + w) * state.jz[a] + 0.5 * (w - gp);
        djpm[a] = state.jz[a] * (2.0 * g1d * ns * state.jpm[a] + pair_sum)
            - (w + gp) * state.jpm[a]
            + w / ns;
    }
    for a in 0..p {
        for x in 0..p {
            if a == x {
                continue;
            }
            let mut third = 0.0;
            for mu in 0..p {
                if mu == a || mu == x {
                    continue;
                }
                third += ns
                    * (gamma(mu, a) * state.cross[[mu, x]] * state.jz[a]
                        + gamma(x, mu) * state.cross[[a, mu]] * state.jz[x]);
            }
            dcross[[a, x]] = g1d * state.cross[[a, x]] * ns * (state.jz[a] + state.jz[x])
                + gamma(x, a) * ns * (state.jpm[x] * state.jz[a] + state.jpm[a] * state.jz[x])
                + third
                - (gp + w) * state.cross[[a, x]];
        }
    }
    CumulantState {
        jz: djz,
        jpm: djpm,
        cross: dcross,
    }
}

/// Fixed-step RK4 integration of the cumulant system.
pub fn integrate_cumulant(
    state0: &CumulantState,
    partition: &SuperspinPartition,
    rates: &Rates,
    t_end: f64,
    dt: f64,
) -> CumulantState {
    let mut s = state0.clone();
    let steps = (t_end / dt).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    for _ in 0..steps {
        let k1 = cumulant_derivatives(&s, partition, rates);
        let k2 = cumulant_derivatives(&add(&s, &k1, 0.5 * h), partition, rates);
        let k3 = cumulant_derivatives(&add(&s, &k2, 0.5 * h), partition, rates);
        let k4 = cumulant_derivatives(&add(&s, &k3, h), partition, rates);
        for a in 0..partition.p {
            s.jz[a] += h / 6.0 * (k1.jz[a] + 2.0 * k2.jz[a] + 2.0 * k3.jz[a] + k4.jz[a]);
            s.jpm[a] += h / 6.0 * (k1.jpm[a] + 2.0 * k2.jpm[a] + 2.0 * k3.jpm[a] + k4.jpm[a]);
            for b in 0..partition.p {
                s.cross[[a, b]] += h / 6.0
                    * (k1.cross[[a, b]]
                        + 2.0 * k2.cross[[a, b]]
                        + 2.0 * k3.cross[[a, b]]
                        + k4.cross[[a, b]]);
            }
        }
    }
    s
}

fn add(s: &CumulantState, d: &CumulantState, h: f64) -> CumulantState {
    CumulantState {
        jz: s.jz.iter().zip(&d.jz).map(|(a, b)| a + h * b).collect(),
        jpm: s.jpm.iter().zip(&d.jpm).map(|(a, b)| a + h * b).collect(),
        cross: &s.cross + &(&d.cross * h),
    }
}

/// Integrate from the ground state until the cumulant drift settles.
pub fn cumulant_steady_state(
    partition: &SuperspinPartition,
    rates: &Rates,
) -> Result<CumulantState, SuperspinError> {
    let n_gamma = partition.n as f64 * rates.gamma_1d;
    let fast = n_gamma + rates.pump + rates.gamma_prime;
    let slow = [rates.gamma_prime, rates.pump, n_gamma]
        .into_iter()
        .filter(|r| *r > 0.0)
        .fold(f64::INFINITY, f64::min);
    let dt = 0.02 / fast;
    let chunk = (50.0 / slow).max(200.0 / fast);
    let mut s = CumulantState::all_ground(partition.p);
    let tol = 1e-12 * fast;
    let mut res = f64::INFINITY;
    for _ in 0..40 {
        s = integrate_cumulant(&s, partition, rates, chunk, dt);
        let d = cumulant_derivatives(&s, partition, rates);
        res = d
            .jz
            .iter()
            .chain(d.jpm.iter())
            .chain(d.cross.iter())
            .fold(0.0_f64, |acc, x| acc.max(x.abs()));
        if res < tol {
            return Ok(s);
        }
    }
    Err(SuperspinError::NoConvergence(res))
}

/// Which steady-state branch a reduced solution sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// Collective emission, `R_α > 0`.
    Lasing,
    /// No collective emission (outside the synchronization window).
    Trivial,
}

/// Steady state of the reduced two-variable system.
#[derive(Debug, Clone)]
pub struct ReducedSteadyState {
    pub jz: f64,
    /// `R_α` in normalized superspin units (equal across groups).
    pub r_alpha: f64,
    /// `N_s²Γ₁D·p·R_α`: the physical emission rate.
    pub physical_r: f64,
    pub branch: Branch,
}

/// Closed-form steady state of the reduced system without the pump seed.
///
/// `p = 1` is the superradiant-laser pair (nonlinear coefficient `2NΓ₁D`);
/// `p ≥ 2` the ring reduction (coefficient `NΓ₁D`). The nontrivial branch has
/// `jz = (w+Γ′)/(cNΓ₁D)` with `c = 2` or `1` respectively and is returned
/// whenever it yields `R_α > 0`; otherwise the trivial branch applies.
pub fn reduced_steady_state(
    n: usize,
    p: usize,
    gamma_1d: f64,
    gamma_prime: f64,
    pump: f64,
) -> ReducedSteadyState {
    let (w, gp) = (pump, gamma_prime);
    let nf = n as f64;
    let ns = nf / p as f64;
    let c = if p == 1 { 2.0 } else { 1.0 };
    let jz_lasing = (w + gp) / (c * nf * gamma_1d);
    let r_alpha = (0.5 * (w - gp) - (w + gp) * jz_lasing) / (gamma_1d * ns);
    if r_alpha > 0.0 {
        ReducedSteadyState {
            jz: jz_lasing,
            r_alpha,
            physical_r: ns * ns * gamma_1d * p as f64 * r_alpha,
            branch: Branch::Lasing,
        }
    } else {
        let jz = if w + gp > 0.0 {
            0.5 * (w - gp) / (w + gp)
        } else {
            -0.5
        };
        ReducedSteadyState {
            jz,
            r_alpha: 0.0,
            physical_r: 0.0,
            branch: Branch::Trivial,
        }
    }
}

/// Exact fixed point of the reduced system with the pump seed `w/N_s` kept.
///
/// Solves the quadratic `[cNΓ₁D·jz − (w+Γ′)]·[(w−Γ′)/2 − (w+Γ′)jz] + wΓ₁D = 0`
/// and selects the stable root (`cNΓ₁D·jz ≤ w+Γ′`, `R_α ≥ 0`). Coincides with
/// [`reduced_steady_state`] as `N → ∞` and matches the integrated cumulant
/// system at any `N`.
pub fn reduced_steady_state_seeded(
    n: usize,
    p: usize,
    gamma_1d: f64,
    gamma_prime: f64,
    pump: f64,
) -> ReducedSteadyState {
    let (w, gp) = (pump, gamma_prime);
    if w == 0.0 {
        return reduced_steady_state(n, p, gamma_1d, gamma_prime, pump);
    }
    let nf = n as f64;
    let ns = nf / p as f64;
    let c = if p == 1 { 2.0 } else { 1.0 };
    let a = c * nf * gamma_1d;
    let b = w + gp;
    let s = 0.5 * (w - gp);
    // a·b·jz² − (a·s + b²)·jz + (b·s − wΓ₁D) = 0
    let qa = a * b;
    let qb = -(a * s + b * b);
    let qc = b * s - w * gamma_1d;
    let disc = (qb * qb - 4.0 * qa * qc).max(0.0).sqrt();
    let roots = [(-qb - disc) / (2.0 * qa), (-qb + disc) / (2.0 * qa)];
    let mut best: Option<ReducedSteadyState> = None;
    for &jz in &roots {
        let r_alpha = (s - b * jz) / (gamma_1d * ns);
        let stable = a * jz - b <= 1e-12 * b.max(1.0);
        if r_alpha >= 0.0 && stable {
            let cand = ReducedSteadyState {
                jz,
                r_alpha,
                physical_r: ns * ns * gamma_1d * p as f64 * r_alpha,
                branch: if reduced_steady_state(n, p, gamma_1d, gamma_prime, pump).branch
                    == Branch::Lasing
                {
                    Branch::Lasing
                } else {
                    Branch::Trivial
                },
            };
            best = match best {
                Some(prev) if prev.r_alpha >= cand.r_alpha => Some(prev),
                _ => Some(cand),
            };
        }
    }
    best.unwrap_or_else(|| reduced_steady_state(n, p, gamma_1d, gamma_prime, pump))
}

/// Integrate the reduced two-variable system to its steady state.
///
/// With `seeded` the pump source `w/N_s` is kept (the exact reduction of the
/// cumulant system); without it the printed seed-free pair is integrated from
/// an infinitesimal correlation, converging onto [`reduced_steady_state`].
pub fn integrate_reduced(
    n: usize,
    p: usize,
    rates: &Rates,
    t_end: f64,
    dt: f64,
    seeded: bool,
) -> ReducedSteadyState {
    let nf = n as f64;
    let ns = nf / p as f64;
    let c = if p == 1 { 2.0 } else { 1.0 };
    let (w, gp, g1d) = (rates.pump, rates.gamma_prime, rates.gamma_1d);
    let mut jz = -0.5;
    let mut r = if seeded { 0.0_f64 } else { 1e-9 / (ns * ns) };
    let source = if seeded { w / ns } else { 0.0 };
    let deriv = |jz: f64, r: f64| {
        (
            -g1d * ns * r - (gp + w) * jz + 0.5 * (w - gp),
            (c * nf * g1d * jz - (w + gp)) * r + source,
        )
    };
    let steps = (t_end / dt).ceil().max(1.0) as usize;
    let h = t_end / steps as f64;
    for _ in 0..steps {
        let (k1z, k1r) = deriv(jz, r);
        let (k2z, k2r) = deriv(jz + 0.5 * h * k1z, r + 0.5 * h * k1r);
        let (k3z, k3r) = deriv(jz + 0.5 * h * k2z, r + 0.5 * h * k2r);
        let (k4z, k4r) = deriv(jz + h * k3z, r + h * k3r);
        jz += h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z);
        r += h / 6.0 * (k1r + 2.0 * k2r + 2.0 * k3r + k4r);
    }
    ReducedSteadyState {
        jz,
        r_alpha: r,
        physical_r: ns * ns * g1d * p as f64 * r,
        branch: if reduced_steady_state(n, p, g1d, gp, w).branch == Branch::Lasing {
            Branch::Lasing
        } else {
            Branch::Trivial
        },
    }
}

/// Closed-form synchronization window and optimal emission.
#[derive(Debug, Clone)]
pub struct AnalyticThresholds {
    pub w_lower: f64,
    pub w_upper: f64,
    pub w_opt: f64,
    /// Leading-order maximum emission rate (`N²Γ₁D/8` cavity, `N²Γ₁D/16` ring).
    pub r_max: f64,
    /// True when `w_lower ≥ w_upper` and no synchronization window exists.
    pub window_empty: bool,
}

/// Printed threshold values for the cavity (`w ∈ [Γ′, NΓ₁D]`) and ring
/// (`w ∈ [Γ′, NΓ₁D/2]`).
pub fn analytic_thresholds(
    kind: ModelKind,
    n: usize,
    gamma_1d: f64,
    gamma_prime: f64,
) -> Result<AnalyticThresholds, SuperspinError> {
    let nf = n as f64 * gamma_1d;
    let (w_upper, w_opt, r_max) = match kind {
        ModelKind::SingleModeCavity => (nf, 0.5 * nf, n as f64 * nf / 8.0),
        ModelKind::RingCavity => (0.5 * nf, 0.25 * nf, n as f64 * nf / 16.0),
        ModelKind::Waveguide => return Err(SuperspinError::WaveguideNotSupported),
    };
    Ok(AnalyticThresholds {
        w_lower: gamma_prime,
        w_upper,
        w_opt,
        r_max,
        window_empty: gamma_prime >= w_upper,
    })
}

/// Closed-form steady emission rate in physical units, clamped at zero.
///
/// Cavity: `N[(w−Γ′)/2 − (w+Γ′)²/(2NΓ₁D)]`; ring: the same with the last
/// denominator halved. Negative values (outside the window) are clamped.
pub fn emission_rate_curve(
    kind: ModelKind,
    n: usize,
    gamma_1d: f64,
    gamma_prime: f64,
    pump: f64,
) -> Result<f64, SuperspinError> {
    let c = match kind {
        ModelKind::SingleModeCavity => 2.0,
        ModelKind::RingCavity => 1.0,
        ModelKind::Waveguide => return Err(SuperspinError::WaveguideNotSupported),
    };
    let nf = n as f64;
    let b = pump + gamma_prime;
    let r = nf * (0.5 * (pump - gamma_prime) - b * b / (c * nf * gamma_1d));
    Ok(r.max(0.0))
}

/// Closed-form per-atom excited fraction.
pub fn excited_fraction_curve(
    kind: ModelKind,
    n: usize,
    gamma_1d: f64,
    gamma_prime: f64,
    pump: f64,
) -> Result<f64, SuperspinError> {
    let c = match kind {
        ModelKind::SingleModeCavity => 2.0,
        ModelKind::RingCavity => 1.0,
        ModelKind::Waveguide => return Err(SuperspinError::WaveguideNotSupported),
    };
    let inside = emission_rate_curve(kind, n, gamma_1d, gamma_prime, pump)? > 0.0;
    let pe = if inside {
        (pump + gamma_prime) / (c * n as f64 * gamma_1d) + 0.5
    } else if pump + gamma_prime > 0.0 {
        pump / (pump + gamma_prime)
    } else {
        0.0
    };
    Ok(pe)
}

/// Order-of-magnitude waveguide estimates from position-averaged feedback.
#[derive(Debug, Clone)]
pub struct WaveguideEstimates {
    /// `w̄^(u) ~ NΓ₁D/4`.
    pub w_upper: f64,
    /// `w̄^(opt) ~ NΓ₁D/8`.
    pub w_opt: f64,
    /// `R_max ~ 9N²Γ₁D/256`.
    pub r_max: f64,
}

pub fn waveguide_estimates(n: usize, gamma_1d: f64) -> WaveguideEstimates {
    let nf = n as f64 * gamma_1d;
    WaveguideEstimates {
        w_upper: 0.25 * nf,
        w_opt: 0.125 * nf,
        r_max: 9.0 * n as f64 * nf / 256.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const RATES: Rates = Rates {
        gamma_1d: 1.0,
        gamma_prime: 0.0,
        pump: 0.0,
    };

    #[test]
    fn cyclic_partition_assignment() {
        let part = build_partition(6, 2, 3).unwrap();
        assert_eq!(part.n_per_group, 2);
        assert_eq!(part.groups, vec![0, 1, 2, 0, 1, 2]);
        // m even: all sign factors +1.
        assert!(part.signs.iter().all(|&s| s == 1.0));

        let dicke = build_partition(4, 1, 1).unwrap();
        assert_eq!(dicke.groups, vec![0; 4]);

        assert!(matches!(
            build_partition(5, 1, 2),
            Err(SuperspinError::Indivisible { .. })
        ));
        assert!(matches!(
            build_partition(4, 2, 2),
            Err(SuperspinError::MirrorPartition { .. })
        ));
    }

    #[test]
    fn odd_m_alternates_signs_within_groups() {
        let part = build_partition(4, 1, 2).unwrap();
        // Atoms 0,2 in group 0 with c = 1,2: signs (−1)^{m(c+1)} = +1, −1.
        assert_eq!(part.signs, vec![1.0, 1.0, -1.0, -1.0]);
    }

    #[test]
    fn circulant_identity_holds_off_mirror() {
        for (m, p) in [(2usize, 3usize), (1, 2), (1, 3), (3, 4)] {
            let part = build_partition(2 * p, m, p).unwrap();
            for a in 0..p {
                for x in 0..p {
                    let lhs: f64 = (0..p)
                        .map(|mu| part.couplings[[a, mu]] * part.couplings[[mu, x]])
                        .sum();
                    let rhs = 0.5 * p as f64 * part.couplings[[a, x]];
                    assert!(
                        (lhs - rhs).abs() < 1e-12,
                        "(m={m}, p={p}, α={a}, ξ={x}): {lhs} vs {rhs}"
                    );
                }
            }
        }
    }

    #[test]
    fn ground_state_is_stationary_without_pump() {
        let part = build_partition(6, 2, 3).unwrap();
        let rates = Rates {
            gamma_prime: 0.7,
            ..RATES
        };
        let d = cumulant_derivatives(&CumulantState::all_ground(3), &part, &rates);
        for a in 0..3 {
            assert_relative_eq!(d.jz[a], 0.0, epsilon = 1e-14);
            assert_relative_eq!(d.jpm[a], 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn cyclic_symmetry_of_derivatives() {
        let part = build_partition(9, 2, 3).unwrap();
        let rates = Rates {
            gamma_prime: 0.5,
            pump: 2.0,
            ..RATES
        };
        let sym = CumulantState {
            jz: vec![0.1; 3],
            jpm: vec![0.02; 3],
            cross: Array2::from_shape_fn((3, 3), |(a, b)| {
                if a == b {
                    0.0
                } else {
                    0.01 * part.couplings[[a, b]]
                }
            }),
        };
        let d = cumulant_derivatives(&sym, &part, &rates);
        for a in 1..3 {
            assert_relative_eq!(d.jz[a], d.jz[0], epsilon = 1e-13);
            assert_relative_eq!(d.jpm[a], d.jpm[0], epsilon = 1e-13);
        }
    }

    #[test]
    fn p1_is_the_superradiant_laser_pair() {
        let part = build_partition(64, 1, 1).unwrap();
        let rates = Rates {
            gamma_prime: 0.3,
            pump: 5.0,
            ..RATES
        };
        let st = CumulantState {
            jz: vec![0.17],
            jpm: vec![0.043],
            cross: Array2::zeros((1, 1)),
        };
        let d = cumulant_derivatives(&st, &part, &rates);
        let n = 64.0;
        let expect_jz = -n * 0.043 - (0.3 + 5.0) * 0.17 + 0.5 * (5.0 - 0.3);
        let expect_jpm = 2.0 * n * 0.17 * 0.043 - 5.3 * 0.043 + 5.0 / n;
        assert_relative_eq!(d.jz[0], expect_jz, epsilon = 1e-12);
        assert_relative_eq!(d.jpm[0], expect_jpm, epsilon = 1e-12);
    }

    #[test]
    fn reduced_closed_form_inversion() {
        let s = reduced_steady_state(1024, 3, 1.0, 0.0, 256.0);
        assert_relative_eq!(s.jz, 0.25, epsilon = 1e-14);
        assert_eq!(s.branch, Branch::Lasing);
        assert_relative_eq!(s.physical_r, 65536.0, epsilon = 1e-9);

        let out = reduced_steady_state(1024, 3, 1.0, 0.0, 1024.0);
        assert_eq!(out.branch, Branch::Trivial);
        assert_eq!(out.physical_r, 0.0);
    }

    #[test]
    fn full_reduced_and_closed_forms_agree() {
        // p = 2 at moderate N: integrate the 2+4-variable system, the reduced
        // pair, and compare with the seeded quadratic root.
        let n = 512;
        let part = build_partition(n, 1, 2).unwrap();
        let rates = Rates {
            gamma_prime: 2.0,
            pump: 128.0,
            ..RATES
        };
        let full = cumulant_steady_state(&part, &rates).unwrap();
        let closed = reduced_steady_state_seeded(n, 2, 1.0, 2.0, 128.0);
        let reduced = integrate_reduced(n, 2, &rates, 40.0, 1e-4, true);

        assert_relative_eq!(full.jz[0], closed.jz, epsilon = 1e-7);
        assert_relative_eq!(reduced.jz, closed.jz, epsilon = 1e-7);
        let r_full = full.group_rate(&part, 0);
        assert_relative_eq!(r_full, closed.r_alpha, epsilon = 1e-7, max_relative = 1e-6);
        assert_relative_eq!(
            reduced.r_alpha,
            closed.r_alpha,
            epsilon = 1e-7,
            max_relative = 1e-6
        );

        // Cross-correlations factorize onto the coupling pattern.
        let c_ref = full.cross[[0, 1]] / part.couplings[[0, 1]];
        for a in 0..2 {
            for x in 0..2 {
                if a != x {
                    assert_relative_eq!(
                        full.cross[[a, x]],
                        c_ref * part.couplings[[a, x]],
                        epsilon = 1e-9
                    );
                }
            }
        }
    }

    #[test]
    fn asymmetric_start_relaxes_to_symmetric_steady_state() {
        let part = build_partition(96, 2, 3).unwrap();
        let rates = Rates {
            gamma_prime: 1.0,
            pump: 24.0,
            ..RATES
        };
        let mut st = CumulantState::all_ground(3);
        st.jz = vec![-0.5, -0.45, -0.48];
        let fast = 96.0 + 25.0;
        let s = integrate_cumulant(&st, &part, &rates, 30.0, 0.02 / fast);
        for a in 1..3 {
            assert_relative_eq!(s.jz[a], s.jz[0], epsilon = 1e-8);
            assert_relative_eq!(s.jpm[a], s.jpm[0], epsilon = 1e-8);
        }
    }

    #[test]
    fn threshold_formulas() {
        let ring = analytic_thresholds(ModelKind::RingCavity, 1024, 1.0, 2.0).unwrap();
        assert_eq!(ring.w_lower, 2.0);
        assert_eq!(ring.w_upper, 512.0);
        assert_eq!(ring.w_opt, 256.0);
        assert_eq!(ring.r_max, 65536.0);
        assert!(!ring.window_empty);

        let cav = analytic_thresholds(ModelKind::SingleModeCavity, 64, 1.0, 0.0).unwrap();
        assert_eq!(cav.r_max, 512.0);

        let empty = analytic_thresholds(ModelKind::RingCavity, 8, 1.0, 5.0).unwrap();
        assert!(empty.window_empty);

        assert!(analytic_thresholds(ModelKind::Waveguide, 8, 1.0, 0.0).is_err());
    }

    #[test]
    fn waveguide_estimate_values() {
        let e = waveguide_estimates(1024, 1.0);
        assert_relative_eq!(e.r_max, 36864.0);
        assert_relative_eq!(waveguide_estimates(16, 1.0).w_opt, 2.0);
        let tiny = waveguide_estimates(2, 1.0);
        assert!(tiny.w_upper > 0.0 && tiny.w_opt > 0.0 && tiny.r_max > 0.0);
    }

    #[test]
    fn curves_match_printed_closed_forms() {
        // Cavity curve maximum N²Γ₁D/8 at w = NΓ₁D/2 (Γ′ = 0).
        let n = 256;
        let r_opt = emission_rate_curve(ModelKind::SingleModeCavity, n, 1.0, 0.0, 128.0).unwrap();
        assert_relative_eq!(r_opt, 256.0 * 256.0 / 8.0, epsilon = 1e-9);
        // Ring curve maximum N²Γ₁D/16 at w = NΓ₁D/4 (Γ′ = 0).
        let r_opt = emission_rate_curve(ModelKind::RingCavity, n, 1.0, 0.0, 64.0).unwrap();
        assert_relative_eq!(r_opt, 256.0 * 256.0 / 16.0, epsilon = 1e-9);
        // Outside the window the curve clamps to zero.
        assert_eq!(
            emission_rate_curve(ModelKind::RingCavity, n, 1.0, 0.0, 300.0).unwrap(),
            0.0
        );
        // Pe: rise inside the window, saturation outside.
        let pe_in = excited_fraction_curve(ModelKind::RingCavity, n, 1.0, 2.0, 64.0).unwrap();
        assert_relative_eq!(pe_in, 66.0 / 256.0 + 0.5, epsilon = 1e-12);
        let pe_out = excited_fraction_curve(ModelKind::RingCavity, n, 1.0, 2.0, 300.0).unwrap();
        assert_relative_eq!(pe_out, 300.0 / 302.0, epsilon = 1e-12);
    }

    #[test]
    fn seeded_and_printed_forms_converge_at_large_n() {
        let printed = reduced_steady_state(1 << 22, 3, 1.0, 2.0, (1 << 20) as f64);
        let seeded = reduced_steady_state_seeded(1 << 22, 3, 1.0, 2.0, (1 << 20) as f64);
        assert_relative_eq!(printed.jz, seeded.jz, epsilon = 1e-6);
        assert_relative_eq!(printed.physical_r, seeded.physical_r, max_relative = 1e-4);
    }
}
