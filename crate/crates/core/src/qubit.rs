//! Statevector simulation of the qubit version of the protocol.
//!
//! Register layout for `n`-qubit modules (4n qubits in total, qubit 0 least
//! significant in the basis index):
//!
//! ```text
//!   top:    system 0..n        partner n..2n
//!   bottom: system 2n..3n      partner 3n..4n
//! ```
//!
//! Each register is prepared in `(1/√2ⁿ) Σ_i |i⟩|i⟩`, `W` acts on the top
//! system qubits and `V` on the bottom ones. The destructive SWAP test then
//! applies `CNOT(top_i → bottom_i)` and `H(top_i)` for every `i < 2n` and
//! measures everything. A shot is a bunching event iff the bitwise AND of the
//! top and bottom strings has even parity.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::choi::{check_pair, gate_from_choi};
use crate::error::{Error, Result};
use crate::io::UnitaryJson;
use crate::linalg::{norm_sqr, UnitaryMatrix, NORM_TOL, ONE, ZERO};
use crate::rng::RandomStream;
use crate::stats::{estimate_from_rate, FidelityEstimate};
use crate::EventClass;

/// Largest module width accepted: 4n = 24 qubits, 16M amplitudes.
pub const MAX_MODULE_QUBITS: usize = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct QubitState {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl QubitState {
    pub fn zero(n_qubits: usize) -> Self {
        let mut amplitudes = vec![ZERO; 1 << n_qubits];
        amplitudes[0] = ONE;
        Self { n_qubits, amplitudes }
    }

    pub fn new(n_qubits: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != 1 << n_qubits {
            return Err(Error::Dimension(format!(
                "{} amplitudes for {n_qubits} qubits",
                amplitudes.len()
            )));
        }
        let n2 = norm_sqr(&amplitudes);
        if (n2 - 1.0).abs() > NORM_TOL {
            return Err(Error::Validation(format!("state norm² {n2}, expected 1")));
        }
        Ok(Self { n_qubits, amplitudes })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.amplitudes).sqrt()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(Complex64::norm_sqr).collect()
    }

    fn apply_1q(&mut self, q: usize, g: [[Complex64; 2]; 2]) {
        let bit = 1usize << q;
        for i0 in 0..self.amplitudes.len() {
            if i0 & bit != 0 {
                continue;
            }
            let i1 = i0 | bit;
            let (a0, a1) = (self.amplitudes[i0], self.amplitudes[i1]);
            self.amplitudes[i0] = g[0][0] * a0 + g[0][1] * a1;
            self.amplitudes[i1] = g[1][0] * a0 + g[1][1] * a1;
        }
    }

    fn apply_cnot(&mut self, control: usize, target: usize) {
        let (c, t) = (1usize << control, 1usize << target);
        for i in 0..self.amplitudes.len() {
            if i & c != 0 && i & t == 0 {
                self.amplitudes.swap(i, i | t);
            }
        }
    }

    /// `u` acts on `qubits`, with `qubits[b]` carrying bit `b` of the local index.
    fn apply_unitary(&mut self, qubits: &[usize], u: &UnitaryMatrix) {
        let k = qubits.len();
        let local_dim = 1usize << k;
        let mask: usize = qubits.iter().map(|&q| 1usize << q).sum();
        let offsets: Vec<usize> = (0..local_dim)
            .map(|l| {
                qubits
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| l >> b & 1 == 1)
                    .map(|(_, &q)| 1usize << q)
                    .sum()
            })
            .collect();
        let m = u.matrix();
        let mut gathered = vec![ZERO; local_dim];
        for base in 0..self.amplitudes.len() {
            if base & mask != 0 {
                continue;
            }
            for (g, &off) in gathered.iter_mut().zip(&offsets) {
                *g = self.amplitudes[base | off];
            }
            for (r, &off) in offsets.iter().enumerate() {
                self.amplitudes[base | off] =
                    m.row(r).iter().zip(&gathered).map(|(a, b)| a * b).sum();
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Gate {
    H(usize),
    Cnot { control: usize, target: usize },
    /// `exp(−iθX/2)`
    Rx { qubit: usize, theta: f64 },
    /// `exp(−iθY/2)`
    Ry { qubit: usize, theta: f64 },
    /// Arbitrary unitary on `qubits`; `qubits[b]` is bit `b` of the matrix index.
    Unitary { qubits: Vec<usize>, matrix: UnitaryMatrix },
}

impl Gate {
    pub fn qubits(&self) -> Vec<usize> {
        match self {
            Gate::H(q) | Gate::Rx { qubit: q, .. } | Gate::Ry { qubit: q, .. } => vec![*q],
            Gate::Cnot { control, target } => vec![*control, *target],
            Gate::Unitary { qubits, .. } => qubits.clone(),
        }
    }
}

pub fn rx_matrix(theta: f64) -> [[Complex64; 2]; 2] {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    [
        [Complex64::new(c, 0.0), Complex64::new(0.0, -s)],
        [Complex64::new(0.0, -s), Complex64::new(c, 0.0)],
    ]
}

pub fn ry_matrix(theta: f64) -> [[Complex64; 2]; 2] {
    let (c, s) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    [
        [Complex64::new(c, 0.0), Complex64::new(-s, 0.0)],
        [Complex64::new(s, 0.0), Complex64::new(c, 0.0)],
    ]
}

fn h_matrix() -> [[Complex64; 2]; 2] {
    let s = Complex64::new(FRAC_1_SQRT_2, 0.0);
    [[s, s], [s, -s]]
}

/// Single-qubit unitary `RY(b) · RX(a)`, i.e. RX applied first.
pub fn rx_ry_unitary(rx: f64, ry: f64) -> UnitaryMatrix {
    let (x, y) = (rx_matrix(rx), ry_matrix(ry));
    let mut rows = vec![vec![ZERO; 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            rows[r][c] = y[r][0] * x[0][c] + y[r][1] * x[1][c];
        }
    }
    UnitaryMatrix::from_rows(&rows, 1e-12).expect("product of rotations is unitary")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            gates: Vec::new(),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn push(&mut self, gate: Gate) -> Result<&mut Self> {
        let qs = gate.qubits();
        if let Some(q) = qs.iter().find(|&&q| q >= self.n_qubits) {
            return Err(Error::Circuit(format!("qubit {q} out of range for {} qubits", self.n_qubits)));
        }
        for (i, q) in qs.iter().enumerate() {
            if qs[..i].contains(q) {
                return Err(Error::Circuit(format!("qubit {q} used twice in one gate")));
            }
        }
        match &gate {
            Gate::Rx { theta, .. } | Gate::Ry { theta, .. } if !theta.is_finite() => {
                return Err(Error::Circuit("rotation angle must be finite".into()));
            }
            Gate::Unitary { qubits, matrix } if matrix.dim() != 1 << qubits.len() => {
                return Err(Error::Circuit(format!(
                    "{}-dim unitary on {} qubits",
                    matrix.dim(),
                    qubits.len()
                )));
            }
            _ => {}
        }
        self.gates.push(gate);
        Ok(self)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let gates: Vec<GateRecord> = self.gates.iter().map(GateRecord::from).collect();
        serde_json::json!({ "n_qubits": self.n_qubits, "gates": gates })
    }
}

/// Export form of a gate: `{gate, qubits, angle?, matrix?}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GateRecord {
    pub gate: String,
    pub qubits: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub angle: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub matrix: Option<UnitaryJson>,
}

impl From<&Gate> for GateRecord {
    fn from(g: &Gate) -> Self {
        let (name, angle, matrix) = match g {
            Gate::H(_) => ("h", None, None),
            Gate::Cnot { .. } => ("cnot", None, None),
            Gate::Rx { theta, .. } => ("rx", Some(*theta), None),
            Gate::Ry { theta, .. } => ("ry", Some(*theta), None),
            Gate::Unitary { matrix, .. } => ("unitary", None, Some(UnitaryJson::from_unitary(matrix))),
        };
        Self {
            gate: name.into(),
            qubits: g.qubits(),
            angle,
            matrix,
        }
    }
}

pub fn run_circuit(c: &Circuit, mut s: QubitState) -> Result<QubitState> {
    if c.n_qubits != s.n_qubits {
        return Err(Error::Circuit(format!(
            "circuit has {} qubits, state has {}",
            c.n_qubits, s.n_qubits
        )));
    }
    for g in &c.gates {
        match g {
            Gate::H(q) => s.apply_1q(*q, h_matrix()),
            Gate::Cnot { control, target } => s.apply_cnot(*control, *target),
            Gate::Rx { qubit, theta } => s.apply_1q(*qubit, rx_matrix(*theta)),
            Gate::Ry { qubit, theta } => s.apply_1q(*qubit, ry_matrix(*theta)),
            Gate::Unitary { qubits, matrix } => s.apply_unitary(qubits, matrix),
        }
    }
    Ok(s)
}

fn push_entangler(c: &mut Circuit, offset: usize, n: usize) -> Result<()> {
    for i in 0..n {
        c.push(Gate::H(offset + i))?;
        c.push(Gate::Cnot {
            control: offset + i,
            target: offset + n + i,
        })?;
    }
    Ok(())
}

fn check_width(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Dimension("need at least one module qubit".into()));
    }
    if n > MAX_MODULE_QUBITS {
        return Err(Error::ResourceGuard(format!(
            "{n}-qubit modules need {} simulated qubits; limit is {}",
            4 * n,
            4 * MAX_MODULE_QUBITS
        )));
    }
    Ok(())
}

/// `(1/√2ⁿ) Σ_i |i⟩|i⟩` on 2n qubits (system `0..n`, partner `n..2n`).
pub fn prepare_max_entangled(n: usize) -> Result<QubitState> {
    if n == 0 {
        return Err(Error::Dimension("need at least one qubit".into()));
    }
    if 2 * n > 4 * MAX_MODULE_QUBITS {
        return Err(Error::ResourceGuard(format!("{} qubits exceeds the state-size guard", 2 * n)));
    }
    let mut c = Circuit::new(2 * n);
    push_entangler(&mut c, 0, n)?;
    run_circuit(&c, QubitState::zero(2 * n))
}

pub fn tqme_qubit_circuit(n: usize, w: &UnitaryMatrix, v: &UnitaryMatrix) -> Result<Circuit> {
    check_width(n)?;
    let d = 1usize << n;
    if w.dim() != d || v.dim() != d {
        return Err(Error::Circuit(format!(
            "{n}-qubit protocol needs {d}x{d} modules, got {} and {}",
            w.dim(),
            v.dim()
        )));
    }
    let half = 2 * n;
    let mut c = Circuit::new(4 * n);
    push_entangler(&mut c, 0, n)?;
    push_entangler(&mut c, half, n)?;
    c.push(Gate::Unitary {
        qubits: (0..n).collect(),
        matrix: w.clone(),
    })?;
    c.push(Gate::Unitary {
        qubits: (half..half + n).collect(),
        matrix: v.clone(),
    })?;
    for i in 0..half {
        c.push(Gate::Cnot {
            control: i,
            target: half + i,
        })?;
        c.push(Gate::H(i))?;
    }
    Ok(c)
}

/// Top and bottom measurement strings of one shot, bit `i` of each paired.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShotRecord {
    pub top: Vec<bool>,
    pub bottom: Vec<bool>,
}

impl ShotRecord {
    /// Parses two `'0'/'1'` strings; characters are paired position by position.
    pub fn from_strs(top: &str, bottom: &str) -> Result<Self> {
        let parse = |s: &str| -> Result<Vec<bool>> {
            s.chars()
                .map(|ch| match ch {
                    '0' => Ok(false),
                    '1' => Ok(true),
                    other => Err(Error::Validation(format!("bad bit character {other:?}"))),
                })
                .collect()
        };
        Ok(Self {
            top: parse(top)?,
            bottom: parse(bottom)?,
        })
    }

    /// Splits a 4n-bit basis index into its two 2n-bit register strings.
    pub fn from_index(index: u64, register_bits: usize) -> Self {
        let bit = |i: usize| index >> i & 1 == 1;
        Self {
            top: (0..register_bits).map(bit).collect(),
            bottom: (register_bits..2 * register_bits).map(bit).collect(),
        }
    }
}

pub fn classify_shot(r: &ShotRecord) -> Result<EventClass> {
    if r.top.len() != r.bottom.len() {
        return Err(Error::Validation(format!(
            "bit strings of length {} and {}",
            r.top.len(),
            r.bottom.len()
        )));
    }
    let ones = r.top.iter().zip(&r.bottom).filter(|(a, b)| **a && **b).count();
    Ok(parity_class(ones as u32))
}

fn parity_class(ones: u32) -> EventClass {
    if ones.is_multiple_of(2) {
        EventClass::Bunching
    } else {
        EventClass::AntiBunching
    }
}

/// Same rule as [`classify_shot`] on a packed basis index.
pub fn classify_index(index: u64, register_bits: usize) -> EventClass {
    let mask = (1u64 << register_bits) - 1;
    parity_class((index & mask & (index >> register_bits)).count_ones())
}

fn final_state(n: usize, w: &UnitaryMatrix, v: &UnitaryMatrix) -> Result<QubitState> {
    check_pair(w, v).map_err(|_| Error::Circuit("module dimensions differ".into()))?;
    let c = tqme_qubit_circuit(n, w, v)?;
    run_circuit(&c, QubitState::zero(4 * n))
}

/// Bunching probability summed over every measurement string.
pub fn exact_bunching(n: usize, w: &UnitaryMatrix, v: &UnitaryMatrix) -> Result<f64> {
    let s = final_state(n, w, v)?;
    let half = 2 * n;
    let p: f64 = s
        .amplitudes
        .iter()
        .enumerate()
        .filter(|(i, _)| classify_index(*i as u64, half) == EventClass::Bunching)
        .map(|(_, a)| a.norm_sqr())
        .sum();
    Ok(p.clamp(0.0, 1.0))
}

/// Per-qubit readout flip probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfusionModel {
    /// P(read 1 | true 0), per qubit.
    pub p01: Vec<f64>,
    /// P(read 0 | true 1), per qubit.
    pub p10: Vec<f64>,
}

impl ConfusionModel {
    pub fn new(p01: Vec<f64>, p10: Vec<f64>) -> Result<Self> {
        if p01.len() != p10.len() {
            return Err(Error::Dimension("p01 and p10 lengths differ".into()));
        }
        if let Some(p) = p01.iter().chain(&p10).find(|p| !(0.0..0.5).contains(*p)) {
            return Err(Error::Range(format!("readout error {p} outside [0, 0.5)")));
        }
        Ok(Self { p01, p10 })
    }

    pub fn uniform(n_bits: usize, p01: f64, p10: f64) -> Result<Self> {
        Self::new(vec![p01; n_bits], vec![p10; n_bits])
    }

    pub fn n_bits(&self) -> usize {
        self.p01.len()
    }

    fn is_identity(&self) -> bool {
        self.p01.iter().chain(&self.p10).all(|&p| p == 0.0)
    }

    /// Applies independent readout flips to a measured basis index.
    pub fn corrupt(&self, index: u64, rng: &mut impl Rng) -> u64 {
        let mut out = index;
        for q in 0..self.n_bits() {
            let flip = if index >> q & 1 == 0 { self.p01[q] } else { self.p10[q] };
            if flip > 0.0 && rng.random::<f64>() < flip {
                out ^= 1 << q;
            }
        }
        out
    }
}

/// Counts (or weights) over `n_bits`-bit measurement strings.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Histogram {
    pub n_bits: usize,
    pub counts: BTreeMap<u64, f64>,
}

impl Histogram {
    pub fn new(n_bits: usize) -> Self {
        Self {
            n_bits,
            counts: BTreeMap::new(),
        }
    }

    pub fn total(&self) -> f64 {
        self.counts.values().sum()
    }

    pub fn add(&mut self, index: u64, weight: f64) {
        *self.counts.entry(index).or_insert(0.0) += weight;
    }

    /// `{bitstring: count}` with qubit `n_bits − 1` leftmost.
    pub fn to_bitstring_map(&self) -> BTreeMap<String, f64> {
        self.counts
            .iter()
            .map(|(&i, &c)| (format!("{:0width$b}", i, width = self.n_bits), c))
            .collect()
    }

    pub fn from_bitstring_map(map: &BTreeMap<String, f64>) -> Result<Self> {
        let n_bits = map.keys().next().map_or(0, String::len);
        let mut h = Self::new(n_bits);
        for (k, &v) in map {
            if k.len() != n_bits {
                return Err(Error::Validation("bit strings of unequal length".into()));
            }
            if !(v >= 0.0) {
                return Err(Error::Validation(format!("negative count for {k}")));
            }
            let idx = u64::from_str_radix(k, 2)
                .map_err(|_| Error::Validation(format!("bad bit string {k:?}")))?;
            h.add(idx, v);
        }
        Ok(h)
    }

    /// Fraction of weight on bunching outcomes (4n-bit strings, 2n per register).
    pub fn bunching_fraction(&self) -> f64 {
        let half = self.n_bits / 2;
        let bunch: f64 = self
            .counts
            .iter()
            .filter(|(&i, _)| classify_index(i, half) == EventClass::Bunching)
            .map(|(_, c)| c)
            .sum();
        bunch / self.total()
    }
}

/// Inverts the tensor-product confusion matrix on the empirical distribution,
/// clips negative weights and rescales to the original total.
pub fn unfold_readout(counts: &Histogram, model: &ConfusionModel) -> Result<Histogram> {
    if model.n_bits() != counts.n_bits {
        return Err(Error::Dimension(format!(
            "model covers {} bits, histogram has {}",
            model.n_bits(),
            counts.n_bits
        )));
    }
    if counts.counts.values().any(|c| !(*c >= 0.0)) {
        return Err(Error::Validation("counts must be non-negative".into()));
    }
    if model.is_identity() {
        return Ok(counts.clone());
    }
    if counts.n_bits > 4 * MAX_MODULE_QUBITS {
        return Err(Error::ResourceGuard(format!("{} bits too wide to unfold", counts.n_bits)));
    }
    let total = counts.total();
    let mut probs = vec![0.0; 1 << counts.n_bits];
    for (&i, &c) in &counts.counts {
        probs[i as usize] = c / total;
    }
    for q in 0..counts.n_bits {
        let (e01, e10) = (model.p01[q], model.p10[q]);
        // Columns are true states: [[1−e01, e10], [e01, 1−e10]].
        let det = (1.0 - e01) * (1.0 - e10) - e01 * e10;
        if det.abs() < 1e-12 {
            return Err(Error::Mitigation(format!("singular confusion matrix on bit {q}")));
        }
        let inv = [[(1.0 - e10) / det, -e10 / det], [-e01 / det, (1.0 - e01) / det]];
        let bit = 1usize << q;
        for i0 in 0..probs.len() {
            if i0 & bit != 0 {
                continue;
            }
            let i1 = i0 | bit;
            let (p0, p1) = (probs[i0], probs[i1]);
            probs[i0] = inv[0][0] * p0 + inv[0][1] * p1;
            probs[i1] = inv[1][0] * p0 + inv[1][1] * p1;
        }
    }
    let kept: f64 = probs.iter().map(|p| p.max(0.0)).sum();
    if !(kept > 0.0) {
        return Err(Error::Mitigation("unfolding removed all weight".into()));
    }
    let mut out = Histogram::new(counts.n_bits);
    for (i, p) in probs.into_iter().enumerate() {
        if p > 0.0 {
            out.counts.insert(i as u64, p / kept * total);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct ProtocolRun {
    pub estimate: FidelityEstimate,
    /// Raw (possibly readout-corrupted) counts.
    pub counts: Histogram,
    /// Present when mitigation was requested.
    pub unfolded: Option<Histogram>,
    /// Bunching fraction before mitigation.
    pub p_raw: f64,
}

impl ProtocolRun {
    /// Choi-state fidelity estimate `2P − 1`.
    pub fn f_choi_hat(&self) -> f64 {
        2.0 * self.estimate.p_hat - 1.0
    }
}

pub struct ProtocolOptions<'a> {
    pub shots: u64,
    pub confidence: f64,
    pub noise: Option<&'a ConfusionModel>,
    pub mitigate: bool,
}

pub fn run_protocol(
    n: usize,
    w: &UnitaryMatrix,
    v: &UnitaryMatrix,
    opts: &ProtocolOptions<'_>,
    rng: &mut RandomStream,
) -> Result<ProtocolRun> {
    if opts.shots == 0 {
        return Err(Error::Range("need at least one shot".into()));
    }
    if opts.mitigate && opts.noise.is_none() {
        return Err(Error::Validation("mitigation needs a readout error model".into()));
    }
    if let Some(m) = opts.noise {
        if m.n_bits() != 4 * n {
            return Err(Error::Dimension(format!(
                "readout model covers {} bits, protocol measures {}",
                m.n_bits(),
                4 * n
            )));
        }
    }
    let state = final_state(n, w, v)?;
    let sampler = WeightedIndex::new(state.probabilities())
        .map_err(|e| Error::Validation(format!("cannot sample final state: {e}")))?;
    let mut tallies: HashMap<u64, u64> = HashMap::new();
    for _ in 0..opts.shots {
        let mut idx = sampler.sample(rng) as u64;
        if let Some(m) = opts.noise {
            idx = m.corrupt(idx, rng);
        }
        *tallies.entry(idx).or_insert(0) += 1;
    }
    let mut counts = Histogram::new(4 * n);
    for (i, c) in tallies {
        counts.add(i, c as f64);
    }
    let p_raw = counts.bunching_fraction();
    let unfolded = match (opts.mitigate, opts.noise) {
        (true, Some(m)) => Some(unfold_readout(&counts, m)?),
        _ => None,
    };
    let p_used = unfolded.as_ref().map_or(p_raw, Histogram::bunching_fraction).clamp(0.0, 1.0);
    let mut estimate = estimate_from_rate(p_used, opts.shots, 1 << n, opts.confidence)?;
    estimate.seed = Some(rng.seed());
    Ok(ProtocolRun {
        estimate,
        counts,
        unfolded,
        p_raw,
    })
}

/// Gate fidelity from an exact bunching probability for `n`-qubit modules.
pub fn gate_fidelity_from_bunching(p: f64, n: usize) -> f64 {
    gate_from_choi(2.0 * p - 1.0, 1 << n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choi::fidelity_chain;
    use crate::linalg::haar_random_unitary;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn bell_and_ghz_like_states() {
        let s = prepare_max_entangled(1).unwrap();
        let h = FRAC_1_SQRT_2;
        let want = [h, 0.0, 0.0, h];
        for (a, w) in s.amplitudes().iter().zip(want) {
            assert_abs_diff_eq!(a.re, w, epsilon = 1e-12);
            assert_abs_diff_eq!(a.im, 0.0, epsilon = 1e-12);
        }
        let s = prepare_max_entangled(2).unwrap();
        for (i, a) in s.amplitudes().iter().enumerate() {
            let want = if [0, 5, 10, 15].contains(&i) { 0.5 } else { 0.0 };
            assert_abs_diff_eq!(a.re, want, epsilon = 1e-12);
        }
        for n in 1..5 {
            assert_abs_diff_eq!(prepare_max_entangled(n).unwrap().norm(), 1.0, epsilon = 1e-12);
        }
        assert!(prepare_max_entangled(0).is_err());
    }

    #[test]
    fn circuit_examples() {
        let mut hh = Circuit::new(1);
        hh.push(Gate::H(0)).unwrap().push(Gate::H(0)).unwrap();
        let s = run_circuit(&hh, QubitState::zero(1)).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].re, 1.0, epsilon = 1e-12);
        assert!(s.amplitudes()[1].norm() < 1e-12);

        let mut rx = Circuit::new(1);
        rx.push(Gate::Rx { qubit: 0, theta: PI }).unwrap();
        let s = run_circuit(&rx, QubitState::zero(1)).unwrap();
        assert!(s.amplitudes()[0].norm() < 1e-12);
        assert!((s.amplitudes()[1] - c(0.0, -1.0)).norm() < 1e-12);

        // (|00⟩ + |10⟩)/√2 in |q1 q0⟩ order puts q1 in |+⟩.
        let h = FRAC_1_SQRT_2;
        let input = QubitState::new(2, vec![c(h, 0.), ZERO, c(h, 0.), ZERO]).unwrap();
        let mut cx = Circuit::new(2);
        cx.push(Gate::Cnot { control: 1, target: 0 }).unwrap();
        let s = run_circuit(&cx, input).unwrap();
        assert_abs_diff_eq!(s.amplitudes()[0].re, h, epsilon = 1e-12);
        assert_abs_diff_eq!(s.amplitudes()[3].re, h, epsilon = 1e-12);
    }

    // Matrix exponential by truncated Taylor series, independent of the
    // closed-form rotation matrices.
    fn expm_pauli(theta: f64, pauli: [[Complex64; 2]; 2]) -> [[Complex64; 2]; 2] {
        let gen = |r: usize, k: usize| pauli[r][k] * c(0.0, -theta / 2.0);
        let mut out = [[ONE, ZERO], [ZERO, ONE]];
        let mut term = out;
        for n in 1..40 {
            let mut next = [[ZERO; 2]; 2];
            for r in 0..2 {
                for k in 0..2 {
                    next[r][k] = (term[r][0] * gen(0, k) + term[r][1] * gen(1, k)) / n as f64;
                }
            }
            term = next;
            for r in 0..2 {
                for k in 0..2 {
                    out[r][k] += term[r][k];
                }
            }
        }
        out
    }

    #[test]
    fn rotation_conventions_match_exponentials() {
        let x = [[ZERO, ONE], [ONE, ZERO]];
        let y = [[ZERO, c(0.0, -1.0)], [c(0.0, 1.0), ZERO]];
        for theta in [-2.0, 0.3, PI, 4.0] {
            let (rx, ex) = (rx_matrix(theta), expm_pauli(theta, x));
            let (ry, ey) = (ry_matrix(theta), expm_pauli(theta, y));
            for r in 0..2 {
                for k in 0..2 {
                    assert!((rx[r][k] - ex[r][k]).norm() < 1e-12);
                    assert!((ry[r][k] - ey[r][k]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn circuit_validation() {
        let mut c = Circuit::new(2);
        assert!(matches!(c.push(Gate::H(2)), Err(Error::Circuit(_))));
        assert!(c.push(Gate::Cnot { control: 1, target: 1 }).is_err());
        assert!(c.push(Gate::Rx { qubit: 0, theta: f64::NAN }).is_err());
        assert!(c
            .push(Gate::Unitary { qubits: vec![0, 1], matrix: UnitaryMatrix::hadamard() })
            .is_err());
        assert!(run_circuit(&c, QubitState::zero(3)).is_err());
    }

    #[test]
    fn circuit_shape_for_one_qubit_modules() {
        let c = tqme_qubit_circuit(1, &UnitaryMatrix::identity(2), &UnitaryMatrix::pauli_z()).unwrap();
        assert_eq!(c.n_qubits(), 4);
        let names: Vec<String> = c.gates().iter().map(|g| GateRecord::from(g).gate).collect();
        assert_eq!(
            names,
            ["h", "cnot", "h", "cnot", "unitary", "unitary", "cnot", "h", "cnot", "h"]
        );
        let json = c.to_json();
        assert_eq!(json["gates"][6]["qubits"], serde_json::json!([0, 2]));
        assert!(tqme_qubit_circuit(2, &UnitaryMatrix::identity(2), &UnitaryMatrix::identity(2)).is_err());
        assert!(matches!(
            tqme_qubit_circuit(7, &UnitaryMatrix::identity(2), &UnitaryMatrix::identity(2)),
            Err(Error::ResourceGuard(_))
        ));
    }

    #[test]
    fn exact_bunching_examples() {
        let i2 = UnitaryMatrix::identity(2);
        assert_abs_diff_eq!(exact_bunching(1, &i2, &i2).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(exact_bunching(1, &i2, &UnitaryMatrix::pauli_z()).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(exact_bunching(1, &i2, &UnitaryMatrix::pauli_x()).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(
            gate_fidelity_from_bunching(exact_bunching(1, &i2, &UnitaryMatrix::pauli_z()).unwrap(), 1),
            1.0 / 3.0,
            epsilon = 1e-12
        );
        let mut rng = RandomStream::new(21);
        for n in [1, 2] {
            for _ in 0..10 {
                let w = haar_random_unitary(1 << n, &mut rng).unwrap();
                let v = haar_random_unitary(1 << n, &mut rng).unwrap();
                let trace = (w.overlap_trace(&v).unwrap().norm_sqr()) / (1u64 << (2 * n)) as f64;
                assert_abs_diff_eq!(exact_bunching(n, &w, &v).unwrap(), (1.0 + trace) / 2.0, epsilon = 1e-9);
                assert_abs_diff_eq!(exact_bunching(n, &w, &w).unwrap(), 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn norm_is_preserved_through_protocol_circuit() {
        let mut rng = RandomStream::new(22);
        let w = haar_random_unitary(4, &mut rng).unwrap();
        let v = haar_random_unitary(4, &mut rng).unwrap();
        let s = final_state(2, &w, &v).unwrap();
        assert_abs_diff_eq!(s.norm(), 1.0, epsilon = 1e-10);
    }

    // Laying the bottom register out in a different qubit order, with the SWAP
    // test and the AND pairing following that order, leaves P unchanged.
    #[test]
    fn pairing_layout_does_not_matter() {
        let n = 1;
        let mut rng = RandomStream::new(23);
        let w = haar_random_unitary(2, &mut rng).unwrap();
        let v = haar_random_unitary(2, &mut rng).unwrap();
        // bottom logical qubit i lives at physical 2 + perm[i]
        let perm = [1usize, 0];
        let mut c = Circuit::new(4);
        push_entangler(&mut c, 0, n).unwrap();
        c.push(Gate::H(2 + perm[0])).unwrap();
        c.push(Gate::Cnot { control: 2 + perm[0], target: 2 + perm[1] }).unwrap();
        c.push(Gate::Unitary { qubits: vec![0], matrix: w.clone() }).unwrap();
        c.push(Gate::Unitary { qubits: vec![2 + perm[0]], matrix: v.clone() }).unwrap();
        for i in 0..2 {
            c.push(Gate::Cnot { control: i, target: 2 + perm[i] }).unwrap();
            c.push(Gate::H(i)).unwrap();
        }
        let s = run_circuit(&c, QubitState::zero(4)).unwrap();
        let p: f64 = s
            .amplitudes()
            .iter()
            .enumerate()
            .filter(|(idx, _)| {
                let bit = |q: usize| idx >> q & 1 == 1;
                let ones = (0..2).filter(|&i| bit(i) && bit(2 + perm[i])).count();
                ones % 2 == 0
            })
            .map(|(_, a)| a.norm_sqr())
            .sum();
        assert_abs_diff_eq!(p, exact_bunching(n, &w, &v).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn classify_shot_examples() {
        let cls = |a, b| classify_shot(&ShotRecord::from_strs(a, b).unwrap()).unwrap();
        assert_eq!(cls("00", "00"), EventClass::Bunching);
        assert_eq!(cls("11", "01"), EventClass::AntiBunching);
        assert_eq!(cls("11", "11"), EventClass::Bunching);
        assert!(classify_shot(&ShotRecord::from_strs("1", "01").unwrap()).is_err());
        assert!(ShotRecord::from_strs("12", "00").is_err());
    }

    proptest! {
        #[test]
        fn flipping_an_and_bit_flips_the_class(bits in 1usize..12, top in any::<u64>(), bottom in any::<u64>(), pos in any::<usize>()) {
            let mask = (1u64 << bits) - 1;
            let (top, bottom) = (top & mask, bottom & mask);
            let q = pos % bits;
            let index = top | bottom << bits;
            let before = classify_index(index, bits);
            // Force the bottom bit on and toggle the top bit: the AND bit flips.
            let forced = index | 1 << (bits + q);
            let toggled = forced ^ 1 << q;
            prop_assert_ne!(classify_index(forced, bits), classify_index(toggled, bits));
            let rec = ShotRecord::from_index(index, bits);
            prop_assert_eq!(classify_shot(&rec).unwrap(), before);
        }
    }

    #[test]
    fn unfold_identity_and_exact_round_trip() {
        let mut h = Histogram::new(2);
        h.add(0, 70.0);
        h.add(3, 30.0);
        let same = unfold_readout(&h, &ConfusionModel::uniform(2, 0.0, 0.0).unwrap()).unwrap();
        assert_eq!(same, h);

        let model = ConfusionModel::uniform(1, 0.1, 0.1).unwrap();
        let mut corrupted = Histogram::new(1);
        corrupted.add(0, 900.0);
        corrupted.add(1, 100.0);
        let out = unfold_readout(&corrupted, &model).unwrap();
        assert_abs_diff_eq!(out.counts.get(&0).copied().unwrap_or(0.0), 1000.0, epsilon = 1e-9);
        assert!(out.counts.get(&1).copied().unwrap_or(0.0) < 1e-9);
        assert_abs_diff_eq!(out.total(), 1000.0, epsilon = 1e-9);
    }

    #[test]
    fn unfold_validation() {
        assert!(ConfusionModel::uniform(1, 0.5, 0.1).is_err());
        assert!(ConfusionModel::uniform(1, -0.1, 0.1).is_err());
        let h = Histogram::new(2);
        assert!(unfold_readout(&h, &ConfusionModel::uniform(1, 0.1, 0.1).unwrap()).is_err());
    }

    #[test]
    fn unfold_preserves_total() {
        let mut rng = RandomStream::new(24);
        let model = ConfusionModel::new(vec![0.02, 0.05, 0.1], vec![0.04, 0.01, 0.2]).unwrap();
        let mut h = Histogram::new(3);
        for i in 0..8 {
            h.add(i, (rng.random::<f64>() * 100.0).round());
        }
        let out = unfold_readout(&h, &model).unwrap();
        assert_abs_diff_eq!(out.total(), h.total(), epsilon = 1e-9 * h.total());
        assert!(out.counts.values().all(|&c| c >= 0.0));
    }

    #[test]
    fn histogram_bitstrings() {
        let mut h = Histogram::new(4);
        h.add(0b0101, 3.0);
        let map = h.to_bitstring_map();
        assert_eq!(map.get("0101"), Some(&3.0));
        assert_eq!(Histogram::from_bitstring_map(&map).unwrap(), h);
    }

    #[test]
    fn sampled_protocol_identical_modules() {
        let w = haar_random_unitary(2, &mut RandomStream::new(25)).unwrap();
        let opts = ProtocolOptions { shots: 100_000, confidence: 0.95, noise: None, mitigate: false };
        let run = run_protocol(1, &w, &w, &opts, &mut RandomStream::new(26)).unwrap();
        assert_abs_diff_eq!(run.estimate.f_gate_hat, 1.0, epsilon = 1e-12);
        assert_eq!(run.counts.total(), 100_000.0);
    }

    #[test]
    fn sampled_protocol_tracks_closed_form() {
        let mut rng = RandomStream::new(27);
        for k in 0..5 {
            let w = rx_ry_unitary(rng.random::<f64>() * 2.0 * PI, rng.random::<f64>() * 2.0 * PI);
            let v = rx_ry_unitary(rng.random::<f64>() * 2.0 * PI, rng.random::<f64>() * 2.0 * PI);
            let opts = ProtocolOptions { shots: 100_000, confidence: 0.95, noise: None, mitigate: false };
            let run = run_protocol(1, &w, &v, &opts, &mut rng.split(k)).unwrap();
            let exact = fidelity_chain(&w, &v).unwrap();
            let sigma = (exact.p_bunch * (1.0 - exact.p_bunch) / 1e5).sqrt().max(1e-9);
            assert!((run.estimate.p_hat - exact.p_bunch).abs() <= 3.0 * sigma + 1e-12);
        }
    }

    #[test]
    fn mitigation_beats_raw_under_readout_noise() {
        let n = 1;
        let w = rx_ry_unitary(0.4, 1.1);
        let v = rx_ry_unitary(1.3, 0.2);
        let truth = gate_fidelity_from_bunching(exact_bunching(n, &w, &v).unwrap(), n);
        let model = ConfusionModel::uniform(4, 0.05, 0.05).unwrap();
        let root = RandomStream::new(28);
        let trials = 20;
        let mut better = 0;
        for t in 0..trials {
            let opts = ProtocolOptions { shots: 100_000, confidence: 0.95, noise: Some(&model), mitigate: true };
            let run = run_protocol(n, &w, &v, &opts, &mut root.split(t)).unwrap();
            let raw = gate_fidelity_from_bunching(run.p_raw, n);
            if (run.estimate.f_gate_hat - truth).abs() < (raw - truth).abs() {
                better += 1;
            }
        }
        assert!(better as f64 >= 0.9 * trials as f64, "{better}/{trials}");
    }

    #[test]
    fn protocol_argument_checks() {
        let i2 = UnitaryMatrix::identity(2);
        let mut rng = RandomStream::new(29);
        let opts = ProtocolOptions { shots: 0, confidence: 0.95, noise: None, mitigate: false };
        assert!(run_protocol(1, &i2, &i2, &opts, &mut rng).is_err());
        let opts = ProtocolOptions { shots: 10, confidence: 0.95, noise: None, mitigate: true };
        assert!(run_protocol(1, &i2, &i2, &opts, &mut rng).is_err());
        let m = ConfusionModel::uniform(3, 0.01, 0.01).unwrap();
        let opts = ProtocolOptions { shots: 10, confidence: 0.95, noise: Some(&m), mitigate: false };
        assert!(run_protocol(1, &i2, &i2, &opts, &mut rng).is_err());
    }
}
