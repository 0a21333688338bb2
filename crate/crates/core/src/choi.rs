//! Choi-state encoding of module unitaries and the closed-form fidelity chain.
//!
//! A `d`-mode module `U` acting on a photon prepared in
//! `(1/√d) Σ_i |i⟩^path |i⟩^time` leaves it in the Choi state whose amplitude
//! on `|j⟩^path |i⟩^time` is `U_ji / √d`. Two such states overlap by
//! `α = Tr(W†V)/d`, and every fidelity figure follows from `|α|²`:
//!
//! * Choi fidelity `f = |α|²`
//! * bunching probability `P = (1 + f)/2`
//! * gate fidelity `F = (d f + 1)/(d + 1) = (d(2P − 1) + 1)/(d + 1)`

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_same_dim, Error, Result};
use crate::linalg::{inner_product, ComplexMatrix, PureState, UnitaryMatrix};

#[derive(Clone, Debug, PartialEq)]
pub struct ChoiState {
    d: usize,
    state: PureState,
}

impl ChoiState {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn state(&self) -> &PureState {
        &self.state
    }

    /// Flat index of `|path⟩|time⟩`.
    pub fn index(&self, path: usize, time: usize) -> usize {
        path * self.d + time
    }

    pub fn amplitude(&self, path: usize, time: usize) -> Complex64 {
        self.state.amplitudes()[self.index(path, time)]
    }
}

pub fn encode_choi(u: &UnitaryMatrix) -> ChoiState {
    let d = u.dim();
    let norm = 1.0 / (d as f64).sqrt();
    let amps = u.matrix().as_slice().iter().map(|z| z * norm).collect();
    // Row-major storage already puts U_ji at j·d + i.
    ChoiState {
        d,
        state: PureState::new_unchecked(amps),
    }
}

/// `α = ⟨χ_W|χ_V⟩ = Tr(W†V)/d`.
pub fn choi_overlap(w: &UnitaryMatrix, v: &UnitaryMatrix) -> Result<Complex64> {
    Ok(w.overlap_trace(v)? / w.dim() as f64)
}

pub fn bunching_from_choi(f_choi: f64) -> f64 {
    (1.0 + f_choi) / 2.0
}

pub fn gate_from_choi(f_choi: f64, d: usize) -> f64 {
    let d = d as f64;
    (d * f_choi + 1.0) / (d + 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub d: usize,
    /// `α` as `[re, im]`.
    pub overlap: [f64; 2],
    pub f_choi: f64,
    pub p_bunch: f64,
    pub f_gate: f64,
}

pub fn fidelity_chain(w: &UnitaryMatrix, v: &UnitaryMatrix) -> Result<FidelityReport> {
    let alpha = choi_overlap(w, v)?;
    let d = w.dim();
    // Rounding can push |α|² a hair past 1 for identical inputs.
    let f_choi = alpha.norm_sqr().clamp(0.0, 1.0);
    Ok(FidelityReport {
        d,
        overlap: [alpha.re, alpha.im],
        f_choi,
        p_bunch: bunching_from_choi(f_choi),
        f_gate: gate_from_choi(f_choi, d),
    })
}

/// Gate fidelity from a bunching probability: `(d(2P − 1) + 1)/(d + 1)`.
pub fn fidelity_from_bunching(p: f64, d: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Range(format!("bunching probability {p} outside [0, 1]")));
    }
    if d == 0 {
        return Err(Error::Dimension("module dimension must be >= 1".into()));
    }
    let d = d as f64;
    Ok((d * (2.0 * p - 1.0) + 1.0) / (d + 1.0))
}

/// `(1/√2) [[1, −e^{iθ}], [1, e^{iθ}]]`; equals the Hadamard at `θ = π`.
pub fn phase_family_a(theta: f64) -> UnitaryMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let e = Complex64::from_polar(s, theta);
    let one = Complex64::new(s, 0.0);
    UnitaryMatrix::new_unchecked(
        ComplexMatrix::new(2, 2, vec![one, -e, one, e]).expect("2x2 finite"),
    )
}

/// `W` with column `column` multiplied by `e^{iθ}`.
pub fn phase_family_column(w: &UnitaryMatrix, theta: f64, column: usize) -> Result<UnitaryMatrix> {
    let d = w.dim();
    if column >= d {
        return Err(Error::Dimension(format!("column {column} >= dimension {d}")));
    }
    let phase = Complex64::from_polar(1.0, theta);
    let mut m = w.matrix().clone();
    for r in 0..d {
        m.set(r, column, w[(r, column)] * phase);
    }
    // A column phase keeps whatever unitarity W had.
    Ok(UnitaryMatrix::assume_unitary(m))
}

/// Ensures two modules can be compared.
pub(crate) fn check_pair(w: &UnitaryMatrix, v: &UnitaryMatrix) -> Result<()> {
    ensure_same_dim(w.dim(), v.dim())
}

/// Overlap via the encoded states rather than the trace; used to cross-check.
pub fn choi_overlap_via_states(w: &UnitaryMatrix, v: &UnitaryMatrix) -> Result<Complex64> {
    check_pair(w, v)?;
    inner_product(encode_choi(w).state(), encode_choi(v).state())
}
