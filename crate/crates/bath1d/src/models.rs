//! Reservoir coupling models.
//!
//! Builds the coherent/dissipative coupling matrices `{J_nm, Γ_nm}` for the
//! three supported geometries, the collective jump modes obtained by
//! diagonalizing `Γ`, and the coefficient vectors of the emitted fields.
//!
//! Rates are in units of `Γ₁D` and positions in units of `1/k`; the stored
//! wavenumber `k` is 1 by default so `z_n` doubles as the optical phase.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use thiserror::Error;

/// Relative floor below which `Γ` eigenvalues are treated as exact zeros.
///
/// `Γ` is analytically rank ≤ 2 for 1D reservoirs; negative round-off must not
/// propagate into noise generation.
pub const EIGENVALUE_CLAMP: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("atom count must be at least 1, got {0}")]
    InvalidAtomCount(usize),
    #[error("rate `{name}` must be non-negative, got {value}")]
    NegativeRate { name: &'static str, value: f64 },
    #[error("positions override has {got} entries, expected {expected}")]
    PositionCount { got: usize, expected: usize },
    #[error("field direction {direction:?} is not defined for {kind:?}")]
    DirectionMismatch {
        kind: ModelKind,
        direction: FieldDirection,
    },
}

/// Reservoir geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Permutationally symmetric coupling; a single bright jump operator.
    SingleModeCavity,
    /// Position-dependent dissipative coupling; two bright jump operators.
    RingCavity,
    /// Ring-cavity dissipation plus coherent exchange from propagation.
    Waveguide,
}

/// Propagation direction of an emitted-field observable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldDirection {
    Right,
    Left,
    /// The single output mode of the single-mode cavity.
    Cavity,
}

/// Coupling matrices and rates for `N` atoms in a shared 1D reservoir.
///
/// Immutable after construction; safe to share across worker threads.
#[derive(Debug, Clone)]
pub struct ReservoirModel {
    pub kind: ModelKind,
    /// Atom count `N`.
    pub n: usize,
    /// Atom positions `z_n` in units of `1/k`.
    pub positions: Vec<f64>,
    /// Wavenumber; 1 in the internal unit system.
    pub k: f64,
    /// Decay rate `Γ₁D` into the 1D reservoir.
    pub gamma_1d: f64,
    /// Parasitic individual decay rate `Γ′`.
    pub gamma_prime: f64,
    /// Incoherent pump rate `w`.
    pub pump: f64,
    /// Coherent couplings `J_nm` (symmetric, zero diagonal).
    pub j: Array2<f64>,
    /// Dissipative couplings `Γ_nm` (symmetric, `Γ_nn = Γ₁D`).
    pub gamma: Array2<f64>,
}

impl ReservoirModel {
    /// Same geometry and rates with a different pump strength.
    pub fn with_pump(&self, pump: f64) -> ReservoirModel {
        ReservoirModel {
            pump,
            ..self.clone()
        }
    }

    /// Total rate scale `N·Γ₁D` of the collective decay.
    pub fn collective_rate(&self) -> f64 {
        self.n as f64 * self.gamma_1d
    }
}

/// One collective decay channel of the diagonalized dissipator.
#[derive(Debug, Clone)]
pub struct JumpMode {
    /// Decay rate `Γ_ν ≥ 0`.
    pub rate: f64,
    /// Unit-norm spatial profile `b_ν`; the jump operator is `Σ_n b_ν^n σ_ge^n`.
    pub profile: Vec<C64>,
}

/// Coefficients of an emitted-field operator `Ê⁺ = prefactor·Σ_n c_n σ_ge^n`.
#[derive(Debug, Clone)]
pub struct FieldCoefficients {
    pub direction: FieldDirection,
    /// Observation point along the reservoir (units of `1/k`).
    pub z: f64,
    /// Per-atom phase factors; each entry has modulus 1 or 0 (causal zeros).
    pub coeffs: Vec<C64>,
    /// Overall rate-units prefactor.
    pub prefactor: f64,
}

/// Build the coupling matrices for `kind` with lattice spacing `kd` (radians).
///
/// Defaults to an ordered array `z_n = n·d`; `positions_override` replaces it,
/// supporting disordered ensembles.
pub fn build_model(
    kind: ModelKind,
    n: usize,
    spacing_kd: f64,
    gamma_1d: f64,
    gamma_prime: f64,
    pump: f64,
    positions_override: Option<Vec<f64>>,
) -> Result<ReservoirModel, ModelError> {
    if n == 0 {
        return Err(ModelError::InvalidAtomCount(n));
    }
    for (name, value) in [
        ("gamma_1d", gamma_1d),
        ("gamma_prime", gamma_prime),
        ("pump", pump),
    ] {
        if value < 0.0 {
            return Err(ModelError::NegativeRate { name, value });
        }
    }
    let k = 1.0;
    let positions = match positions_override {
        Some(z) => {
            if z.len() != n {
                return Err(ModelError::PositionCount {
                    got: z.len(),
                    expected: n,
                });
            }
            z
        }
        None => (1..=n).map(|i| i as f64 * spacing_kd).collect(),
    };

    let mut gamma = Array2::zeros((n, n));
    let mut j = Array2::zeros((n, n));
    for a in 0..n {
        for b in 0..n {
            let phase = k * (positions[a] - positions[b]).abs();
            match kind {
                ModelKind::SingleModeCavity => {
                    gamma[[a, b]] = gamma_1d;
                }
                ModelKind::RingCavity => {
                    gamma[[a, b]] = gamma_1d * phase.cos();
                }
                ModelKind::Waveguide => {
                    gamma[[a, b]] = gamma_1d * phase.cos();
                    if a != b {
                        j[[a, b]] = 0.5 * gamma_1d * phase.sin();
                    }
                }
            }
        }
    }

    Ok(ReservoirModel {
        kind,
        n,
        positions,
        k,
        gamma_1d,
        gamma_prime,
        pump,
        j,
        gamma,
    })
}

/// Diagonalize `Γ` into collective jump modes, sorted by descending rate.
///
/// Zero-rate (dark) modes are retained. Eigenvalues below
/// `EIGENVALUE_CLAMP·N·Γ₁D` are clamped to zero. When the two bright modes of
/// a ring-type reservoir are degenerate and the left/right operators
/// `e^{±ikz_n}/√N` are exact eigenvectors, the degenerate subspace is rotated
/// onto them so downstream chirality observables are basis-independent.
pub fn jump_mode_decomposition(model: &ReservoirModel) -> Vec<JumpMode> {
    let n = model.n;
    let mat = nalgebra::DMatrix::from_fn(n, n, |a, b| model.gamma[[a, b]]);
    let eig = mat.symmetric_eigen();

    let clamp = EIGENVALUE_CLAMP * model.collective_rate();
    let mut modes: Vec<JumpMode> = (0..n)
        .map(|i| {
            let rate = if eig.eigenvalues[i] < clamp {
                0.0
            } else {
                eig.eigenvalues[i]
            };
            let col = eig.eigenvectors.column(i);
            // Canonical sign: largest-magnitude entry positive.
            let pivot = col
                .iter()
                .cloned()
                .max_by(|a, b| a.abs().total_cmp(&b.abs()))
                .unwrap_or(1.0);
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            JumpMode {
                rate,
                profile: col.iter().map(|&x| C64::new(sign * x, 0.0)).collect(),
            }
        })
        .collect();
    modes.sort_by(|a, b| b.rate.total_cmp(&a.rate));

    if matches!(model.kind, ModelKind::RingCavity | ModelKind::Waveguide) && n >= 2 {
        rotate_degenerate_bright_pair(model, &mut modes);
    }
    modes
}

/// Replace a degenerate bright pair by the left/right profiles when exact.
fn rotate_degenerate_bright_pair(model: &ReservoirModel, modes: &mut [JumpMode]) {
    let n = model.n;
    let nf = n as f64;
    let half = 0.5 * model.collective_rate();
    let tol = 1e-9 * model.collective_rate();
    if (modes[0].rate - half).abs() > tol || (modes[1].rate - half).abs() > tol {
        return;
    }
    // e^{±ikz_n}/√N are eigenvectors of Γ₁D·(ccᵀ + ssᵀ) iff Σ_n e^{2ikz_n} = 0.
    let quad: C64 = model
        .positions
        .iter()
        .map(|&z| C64::from_polar(1.0, 2.0 * model.k * z))
        .sum();
    if quad.norm() > 1e-9 * nf {
        return;
    }
    let norm = 1.0 / nf.sqrt();
    // Mode ordering: right (e^{-ikz_n}) first, then left (e^{+ikz_n}).
    for (slot, sign) in [(0usize, -1.0), (1usize, 1.0)] {
        modes[slot].profile = model
            .positions
            .iter()
            .map(|&z| C64::from_polar(norm, sign * model.k * z))
            .collect();
        modes[slot].rate = half;
    }
}

/// Coefficient vector of the emitted field at observation point `z`.
pub fn field_coefficients(
    model: &ReservoirModel,
    direction: FieldDirection,
    z: f64,
) -> Result<FieldCoefficients, ModelError> {
    let mismatch = Err(ModelError::DirectionMismatch {
        kind: model.kind,
        direction,
    });
    let i = C64::new(0.0, 1.0);
    let (coeffs, prefactor): (Vec<C64>, f64) = match (model.kind, direction) {
        (ModelKind::SingleModeCavity, FieldDirection::Cavity) => {
            (vec![i; model.n], 0.5 * model.gamma_1d)
        }
        (ModelKind::SingleModeCavity, _) => return mismatch,
        (_, FieldDirection::Cavity) => return mismatch,
        (kind, dir) => {
            let prefactor = match kind {
                ModelKind::RingCavity => 0.25 * model.gamma_1d,
                _ => 0.5 * model.gamma_1d,
            };
            let causal = matches!(kind, ModelKind::Waveguide);
            let coeffs = model
                .positions
                .iter()
                .map(|&zn| {
                    let (phase, visible) = match dir {
                        FieldDirection::Right => (model.k * (z - zn), z > zn),
                        FieldDirection::Left => (model.k * (zn - z), z < zn),
                        FieldDirection::Cavity => unreachable!(),
                    };
                    if causal && !visible {
                        C64::new(0.0, 0.0)
                    } else {
                        i * C64::from_polar(1.0, phase)
                    }
                })
                .collect();
            (coeffs, prefactor)
        }
    };
    Ok(FieldCoefficients {
        direction,
        z,
        coeffs,
        prefactor,
    })
}
