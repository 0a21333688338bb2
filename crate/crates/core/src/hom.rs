//! Two-photon interference over the rail-A/rail-B beamsplitter network.
//!
//! Photon `a` lives on rail A and photon `b` on rail B, each spread over
//! `d` paths and `d` time bins, giving `2d²` optical modes. The network
//! mixes `(A, j, i)` with `(B, j, i)` on a 50:50 beamsplitter for every
//! `(path, time)` pair and leaves distinct pairs untouched.
//!
//! Two-photon states are held in second-quantized form
//! `|Ψ⟩ = Σ_{jk} M_jk c†_j c†_k |0⟩` with `M` symmetric, so a linear-optical
//! transfer matrix `T` acts as `M ↦ T M Tᵀ`.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::choi::{check_pair, encode_choi, ChoiState};
use crate::error::{ensure_same_dim, Error, Result};
use crate::linalg::{norm_sqr, ComplexMatrix, UnitaryMatrix, ONE, ZERO};
use crate::EventClass;

/// Normalization tolerance for two-photon states.
pub const STATE_NORM_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rail {
    A,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeIndex {
    pub rail: Rail,
    pub path: usize,
    pub time: usize,
}

impl ModeIndex {
    pub fn new(rail: Rail, path: usize, time: usize) -> Self {
        Self { rail, path, time }
    }

    pub fn flat(&self, d: usize) -> usize {
        let rail = match self.rail {
            Rail::A => 0,
            Rail::B => 1,
        };
        rail * d * d + self.path * d + self.time
    }

    pub fn from_flat(index: usize, d: usize) -> Self {
        let d2 = d * d;
        let rail = if index < d2 { Rail::A } else { Rail::B };
        let local = index % d2;
        Self {
            rail,
            path: local / d,
            time: local % d,
        }
    }

    /// Detector label, `D1..D{2d}`: rail A paths first, then rail B.
    /// Detectors do not resolve time bins.
    pub fn detector(&self, d: usize) -> usize {
        let rail = match self.rail {
            Rail::A => 0,
            Rail::B => 1,
        };
        rail * d + self.path + 1
    }
}

/// Bunching iff both photons leave on the same rail; time bins are ignored.
pub fn classify(j: ModeIndex, k: ModeIndex) -> EventClass {
    if j.rail == k.rail {
        EventClass::Bunching
    } else {
        EventClass::AntiBunching
    }
}

/// 50:50 beamsplitter phase convention.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Beamsplitter {
    /// `(1/√2) [[1, i], [i, 1]]`
    #[default]
    Symmetric,
    /// `(1/√2) [[1, 1], [1, −1]]`
    Real,
}

impl Beamsplitter {
    pub fn matrix(self) -> [[Complex64; 2]; 2] {
        let s = Complex64::new(FRAC_1_SQRT_2, 0.0);
        match self {
            Beamsplitter::Symmetric => {
                let is = Complex64::new(0.0, FRAC_1_SQRT_2);
                [[s, is], [is, s]]
            }
            Beamsplitter::Real => [[s, s], [s, -s]],
        }
    }
}

#[derive(Clone, Debug)]
pub struct TransferMatrix {
    d: usize,
    matrix: ComplexMatrix,
}

impl TransferMatrix {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn modes(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }
}

pub fn build_hom_network(d: usize) -> Result<TransferMatrix> {
    build_hom_network_with(d, Beamsplitter::default())
}

pub fn build_hom_network_with(d: usize, bs: Beamsplitter) -> Result<TransferMatrix> {
    if d == 0 {
        return Err(Error::Dimension("network needs d >= 1".into()));
    }
    let d2 = d * d;
    let b = bs.matrix();
    let mut m = ComplexMatrix::zeros(2 * d2, 2 * d2);
    for local in 0..d2 {
        let (ia, ib) = (local, d2 + local);
        m.set(ia, ia, b[0][0]);
        m.set(ia, ib, b[0][1]);
        m.set(ib, ia, b[1][0]);
        m.set(ib, ib, b[1][1]);
    }
    Ok(TransferMatrix { d, matrix: m })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoPhotonState {
    m: ComplexMatrix,
}

fn two_photon_norm(m: &ComplexMatrix) -> f64 {
    2.0 * norm_sqr(m.as_slice())
}

impl TwoPhotonState {
    /// Validates symmetry (exact) and normalization.
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension("coefficient matrix must be square".into()));
        }
        if m != m.transpose() {
            return Err(Error::Validation("coefficient matrix must be symmetric".into()));
        }
        let n = two_photon_norm(&m);
        if (n - 1.0).abs() > STATE_NORM_TOL {
            return Err(Error::Validation(format!("two-photon state norm {n}, expected 1")));
        }
        Ok(Self { m })
    }

    /// `a†(a) b†(b)|0⟩` for two single-photon mode vectors, normalized.
    pub fn product(a: &[Complex64], b: &[Complex64]) -> Result<Self> {
        ensure_same_dim(a.len(), b.len())?;
        let n = a.len();
        if n == 0 {
            return Err(Error::Dimension("no modes".into()));
        }
        let mut m = ComplexMatrix::zeros(n, n);
        for j in 0..n {
            for k in j..n {
                let z = (a[j] * b[k] + b[j] * a[k]) * 0.5;
                m.set(j, k, z);
                m.set(k, j, z);
            }
        }
        let norm = two_photon_norm(&m);
        if !(norm > 1e-300) {
            return Err(Error::Validation("photons annihilate: zero-norm product".into()));
        }
        Ok(Self {
            m: m.scale(Complex64::new(1.0 / norm.sqrt(), 0.0)),
        })
    }

    pub fn modes(&self) -> usize {
        self.m.rows()
    }

    pub fn coefficients(&self) -> &ComplexMatrix {
        &self.m
    }

    pub fn norm(&self) -> f64 {
        two_photon_norm(&self.m)
    }
}

/// Embeds a `d²`-amplitude single-photon state onto one rail of the `2d²` modes.
pub fn embed_on_rail(amplitudes: &[Complex64], d: usize, rail: Rail) -> Result<Vec<Complex64>> {
    ensure_same_dim(amplitudes.len(), d * d)?;
    let mut v = vec![ZERO; 2 * d * d];
    let offset = ModeIndex::new(rail, 0, 0).flat(d);
    v[offset..offset + d * d].copy_from_slice(amplitudes);
    Ok(v)
}

/// Photon a in `chi_a` on rail A, photon b in `chi_b` on rail B.
pub fn product_input(chi_a: &ChoiState, chi_b: &ChoiState) -> Result<TwoPhotonState> {
    ensure_same_dim(chi_a.d(), chi_b.d())?;
    let d = chi_a.d();
    let a = embed_on_rail(chi_a.state().amplitudes(), d, Rail::A)?;
    let b = embed_on_rail(chi_b.state().amplitudes(), d, Rail::B)?;
    TwoPhotonState::product(&a, &b)
}

/// `M' = T M Tᵀ`.
pub fn evolve(t: &TransferMatrix, s: &TwoPhotonState) -> Result<TwoPhotonState> {
    ensure_same_dim(t.modes(), s.modes())?;
    let tm = t.matrix.matmul(&s.m)?;
    let mut out = tm.matmul(&t.matrix.transpose())?;
    // Re-symmetrize so the stored state stays exactly symmetric.
    let n = out.rows();
    for j in 0..n {
        for k in j + 1..n {
            let z = (out[(j, k)] + out[(k, j)]) * 0.5;
            out.set(j, k, z);
            out.set(k, j, z);
        }
    }
    Ok(TwoPhotonState { m: out })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    /// Flat mode indices with `j <= k`.
    pub j: usize,
    pub k: usize,
    pub probability: f64,
}

/// Detection probabilities over unordered output-mode pairs, assuming ideal
/// lossless photon-number-resolving detectors.
#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeDistribution {
    d: usize,
    outcomes: Vec<Outcome>,
}

impl OutcomeDistribution {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn total(&self) -> f64 {
        self.outcomes.iter().map(|o| o.probability).sum()
    }

    pub fn probability(&self, j: usize, k: usize) -> f64 {
        let (j, k) = if j <= k { (j, k) } else { (k, j) };
        self.outcomes
            .iter()
            .find(|o| o.j == j && o.k == k)
            .map_or(0.0, |o| o.probability)
    }

    pub fn class_of(&self, o: &Outcome) -> EventClass {
        classify(ModeIndex::from_flat(o.j, self.d), ModeIndex::from_flat(o.k, self.d))
    }

    pub fn bunching_mass(&self) -> f64 {
        self.outcomes
            .iter()
            .filter(|o| self.class_of(o) == EventClass::Bunching)
            .map(|o| o.probability)
            .sum()
    }
}

/// Outcome distribution for a state on a `2d²`-mode network.
pub fn outcome_distribution(s: &TwoPhotonState, d: usize) -> Result<OutcomeDistribution> {
    ensure_same_dim(s.modes(), 2 * d * d)?;
    let n = s.norm();
    if (n - 1.0).abs() > STATE_NORM_TOL {
        return Err(Error::Validation(format!("state norm {n}, expected 1")));
    }
    let modes = s.modes();
    let mut outcomes = Vec::with_capacity(modes * (modes + 1) / 2);
    for j in 0..modes {
        outcomes.push(Outcome {
            j,
            k: j,
            probability: 2.0 * s.m[(j, j)].norm_sqr(),
        });
        for k in j + 1..modes {
            outcomes.push(Outcome {
                j,
                k,
                probability: 4.0 * s.m[(j, k)].norm_sqr(),
            });
        }
    }
    Ok(OutcomeDistribution { d, outcomes })
}

/// Full event-level pipeline for a module pair: encode, interfere, detect, classify.
pub fn bunching_probability(w: &UnitaryMatrix, v: &UnitaryMatrix) -> Result<f64> {
    bunching_probability_with(w, v, Beamsplitter::default())
}

pub fn bunching_probability_with(
    w: &UnitaryMatrix,
    v: &UnitaryMatrix,
    bs: Beamsplitter,
) -> Result<f64> {
    Ok(pair_distribution_with(w, v, bs)?.bunching_mass())
}

/// Detector-pair distribution for photon a through `w` and photon b through `v`.
pub fn pair_distribution(w: &UnitaryMatrix, v: &UnitaryMatrix) -> Result<OutcomeDistribution> {
    pair_distribution_with(w, v, Beamsplitter::default())
}

pub fn pair_distribution_with(
    w: &UnitaryMatrix,
    v: &UnitaryMatrix,
    bs: Beamsplitter,
) -> Result<OutcomeDistribution> {
    check_pair(w, v)?;
    let d = w.dim();
    let input = product_input(&encode_choi(w), &encode_choi(v))?;
    let out = evolve(&build_hom_network_with(d, bs)?, &input)?;
    outcome_distribution(&out, d)
}

/// Single-mode two-photon inputs on a one-beamsplitter (`d = 1`) network.
pub mod single_mode {
    use super::*;

    /// One photon in each input port.
    pub fn one_one() -> TwoPhotonState {
        TwoPhotonState::product(&[ONE, ZERO], &[ZERO, ONE]).expect("valid")
    }

    /// `(|2_A⟩ + sign·|2_B⟩)/√2`.
    pub fn noon(sign: f64) -> TwoPhotonState {
        let mut m = ComplexMatrix::zeros(2, 2);
        m.set(0, 0, Complex64::new(0.5, 0.0));
        m.set(1, 1, Complex64::new(0.5 * sign.signum(), 0.0));
        TwoPhotonState::new(m).expect("normalized")
    }
}
