//! Two-port module slots modelled as Mach-Zehnder interferometers, plus the
//! bundled 21-pair module table.
//!
//! `U = e^{iφg} · D(φout) · B · D(θ) · B · D(φin)` with
//! `B = (1/√2)[[1, i], [i, 1]]` and `D(x) = diag(1, e^{ix})`.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hom::Beamsplitter;
use crate::io::{LoadOptions, UnitaryJson};
use crate::linalg::{is_unitary, ComplexMatrix, UnitaryMatrix, TABLE_UNITARY_TOL};

/// Tolerance below which `sin(θ/2)` or `cos(θ/2)` counts as zero when inverting.
const DEGENERATE_TOL: f64 = 1e-12;

/// Number of pairs in the bundled table.
pub const PAIR_COUNT: usize = 21;

const BUNDLED_TABLE: &str = include_str!("../../../data/pairs21.json");

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MziSettings {
    pub phi_in: f64,
    pub theta: f64,
    pub phi_out: f64,
    pub phi_global: f64,
}

pub fn reduce_phase(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs.
    if r >= TAU {
        0.0
    } else {
        r
    }
}

impl MziSettings {
    pub fn new(phi_in: f64, theta: f64, phi_out: f64, phi_global: f64) -> Self {
        Self {
            phi_in: reduce_phase(phi_in),
            theta: reduce_phase(theta),
            phi_out: reduce_phase(phi_out),
            phi_global: reduce_phase(phi_global),
        }
    }
}

fn phase_diag(x: f64) -> ComplexMatrix {
    ComplexMatrix::from_rows(&[
        vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        vec![Complex64::new(0.0, 0.0), Complex64::from_polar(1.0, x)],
    ])
    .expect("2x2")
}

pub fn unitary_from_mzi(s: &MziSettings) -> UnitaryMatrix {
    let b = Beamsplitter::Symmetric.matrix();
    let b = ComplexMatrix::from_rows(&[b[0].to_vec(), b[1].to_vec()]).expect("2x2");
    let m = [phase_diag(s.phi_out), b.clone(), phase_diag(s.theta), b, phase_diag(s.phi_in)]
        .iter()
        .try_fold(ComplexMatrix::identity(2), |acc, f| acc.matmul(f))
        .expect("2x2 products")
        .scale(Complex64::from_polar(1.0, s.phi_global));
    UnitaryMatrix::new_unchecked(m)
}

/// Inverts [`unitary_from_mzi`] up to rounding. `θ ∈ [0, π]`; when one of the
/// two off-diagonal/diagonal pairs vanishes `φin` is set to 0.
pub fn mzi_from_unitary(u: &UnitaryMatrix) -> Result<MziSettings> {
    if u.dim() != 2 {
        return Err(Error::Validation(format!("MZI needs a 2x2 unitary, got {0}x{0}", u.dim())));
    }
    if !is_unitary(u.matrix(), 1e-8)? {
        return Err(Error::Validation("matrix is not unitary within 1e-8".into()));
    }
    // Core B·D(θ)·B = e^{iθ/2} [[−i s, i c], [i c, i s]], s = sin(θ/2), c = cos(θ/2).
    let (u00, u01, u10, u11) = (u[(0, 0)], u[(0, 1)], u[(1, 0)], u[(1, 1)]);
    let half = u00.norm().atan2(u01.norm());
    let (s, c) = (half.sin(), half.cos());
    let (phi_in, g, phi_out);
    if s <= DEGENERATE_TOL {
        // Cross state: only the off-diagonals carry phase.
        phi_in = 0.0;
        g = u01.arg() - FRAC_PI_2;
        phi_out = u10.arg() - g - FRAC_PI_2;
    } else if c <= DEGENERATE_TOL {
        // Bar state: only the diagonals carry phase.
        phi_in = 0.0;
        g = u00.arg() + FRAC_PI_2;
        phi_out = u11.arg() - g - FRAC_PI_2;
    } else {
        g = u00.arg() + FRAC_PI_2;
        phi_in = u01.arg() - g - FRAC_PI_2;
        phi_out = u10.arg() - g - FRAC_PI_2;
    }
    Ok(MziSettings::new(phi_in, 2.0 * half, phi_out, g - half))
}

/// `|Tr(U†V)|² / d²`, equal to 1 iff `U` and `V` agree up to a global phase.
pub fn phase_insensitive_fidelity(u: &UnitaryMatrix, v: &UnitaryMatrix) -> Result<f64> {
    let d = u.dim() as f64;
    Ok(u.overlap_trace(v)?.norm_sqr() / (d * d))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModulePairRecord {
    pub index: usize,
    pub w: UnitaryMatrix,
    pub v: UnitaryMatrix,
}

#[derive(Deserialize)]
struct RawRecord {
    index: usize,
    #[serde(rename = "W")]
    w: UnitaryJson,
    #[serde(rename = "V")]
    v: UnitaryJson,
}

/// Parses a pair table. Matrices are checked at the 4-decimal tolerance and
/// optionally replaced by their nearest unitaries.
pub fn parse_pair_table(text: &str, project: bool) -> Result<Vec<ModulePairRecord>> {
    let raw: Vec<serde_json::Value> = serde_json::from_str(text).map_err(|e| Error::Dataset {
        row: 0,
        message: format!("unparseable table: {e}"),
    })?;
    if raw.len() != PAIR_COUNT {
        return Err(Error::Dataset {
            row: raw.len(),
            message: format!("expected {PAIR_COUNT} records, found {}", raw.len()),
        });
    }
    let opts = LoadOptions {
        tol: TABLE_UNITARY_TOL,
        project,
    };
    raw.into_iter()
        .enumerate()
        .map(|(i, value)| {
            let row = i + 1;
            let err = |message: String| Error::Dataset { row, message };
            let rec: RawRecord =
                serde_json::from_value(value).map_err(|e| err(format!("bad record: {e}")))?;
            let w = rec.w.to_unitary(opts).map_err(|e| err(format!("W: {e}")))?;
            let v = rec.v.to_unitary(opts).map_err(|e| err(format!("V: {e}")))?;
            if w.dim() != 2 || v.dim() != 2 {
                return Err(err("modules must be 2x2".into()));
            }
            Ok(ModulePairRecord {
                index: rec.index,
                w,
                v,
            })
        })
        .collect()
}

pub fn load_pair_table(path: impl AsRef<Path>, project: bool) -> Result<Vec<ModulePairRecord>> {
    parse_pair_table(&fs::read_to_string(path)?, project)
}

/// The table compiled into the library.
pub fn bundled_pair_table(project: bool) -> Result<Vec<ModulePairRecord>> {
    parse_pair_table(BUNDLED_TABLE, project)
}

pub fn bundled_pair_table_text() -> &'static str {
    BUNDLED_TABLE
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::choi::fidelity_chain;
    use crate::linalg::haar_random_unitary;
    use crate::rng::RandomStream;
    use approx::assert_abs_diff_eq;
    use sha2::{Digest, Sha256};
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn all_zero_phases_give_i_x() {
        let u = unitary_from_mzi(&MziSettings::new(0.0, 0.0, 0.0, 0.0));
        let want = [[c(0., 0.), c(0., 1.)], [c(0., 1.), c(0., 0.)]];
        for r in 0..2 {
            for k in 0..2 {
                assert!((u[(r, k)] - want[r][k]).norm() < 1e-12);
            }
        }
        let f = phase_insensitive_fidelity(&u, &UnitaryMatrix::pauli_x()).unwrap();
        assert_abs_diff_eq!(f, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn bar_state_reaches_identity() {
        // θ = π alone gives diag(1, −1); the output shifter undoes the sign.
        let z = unitary_from_mzi(&MziSettings::new(0.0, PI, 0.0, 0.0));
        assert_abs_diff_eq!(phase_insensitive_fidelity(&z, &UnitaryMatrix::pauli_z()).unwrap(), 1.0, epsilon = 1e-12);
        let id = unitary_from_mzi(&MziSettings::new(0.0, PI, PI, 0.0));
        assert_abs_diff_eq!(
            phase_insensitive_fidelity(&id, &UnitaryMatrix::identity(2)).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn settings_always_unitary() {
        let mut rng = RandomStream::new(41);
        use rand::Rng;
        for _ in 0..200 {
            let mut ph = || rng.random::<f64>() * 20.0 - 10.0;
            let s = MziSettings::new(ph(), ph(), ph(), ph());
            for x in [s.phi_in, s.theta, s.phi_out, s.phi_global] {
                assert!((0.0..TAU).contains(&x));
            }
            assert!(is_unitary(unitary_from_mzi(&s).matrix(), 1e-12).unwrap());
        }
    }

    fn assert_round_trip(u: &UnitaryMatrix) {
        let s = mzi_from_unitary(u).unwrap();
        assert!((0.0..=PI + 1e-12).contains(&s.theta));
        let back = unitary_from_mzi(&s);
        let f = phase_insensitive_fidelity(u, &back).unwrap();
        assert!((f - 1.0).abs() <= 1e-9, "fidelity {f}");
    }

    #[test]
    fn round_trip_named_gates() {
        assert_round_trip(&UnitaryMatrix::hadamard());
        assert_round_trip(&UnitaryMatrix::identity(2));
        assert_round_trip(&UnitaryMatrix::pauli_x());
        assert_round_trip(&UnitaryMatrix::pauli_z());
        let s = mzi_from_unitary(&UnitaryMatrix::identity(2)).unwrap();
        assert_eq!(s.phi_in, 0.0);
    }

    #[test]
    fn round_trip_haar() {
        let mut rng = RandomStream::new(42);
        for _ in 0..100 {
            assert_round_trip(&haar_random_unitary(2, &mut rng).unwrap());
        }
    }

    #[test]
    fn round_trip_is_entrywise_exact_with_global_phase() {
        let mut rng = RandomStream::new(43);
        for _ in 0..20 {
            let u = haar_random_unitary(2, &mut rng).unwrap();
            let back = unitary_from_mzi(&mzi_from_unitary(&u).unwrap());
            assert!(u.matrix().max_abs_diff(back.matrix()).unwrap() < 1e-9);
        }
    }

    #[test]
    fn inversion_rejects_bad_input() {
        assert!(matches!(mzi_from_unitary(&UnitaryMatrix::identity(3)), Err(Error::Validation(_))));
        let skew = ComplexMatrix::from_rows(&[vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(1.0 + 1e-6, 0.0)]]).unwrap();
        let u = UnitaryMatrix::new(skew, 1e-5).unwrap();
        assert!(matches!(mzi_from_unitary(&u), Err(Error::Validation(_))));
    }

    #[test]
    fn bundled_table_loads() {
        let table = bundled_pair_table(false).unwrap();
        assert_eq!(table.len(), 21);
        assert_eq!(table.iter().map(|r| r.index).collect::<Vec<_>>(), (1..=21).collect::<Vec<_>>());
        assert!((table[0].w[(0, 0)] - c(-0.1260, 0.9346)).norm() < 1e-12);
    }

    #[test]
    fn bundled_table_checksum_is_pinned() {
        let digest = Sha256::digest(bundled_pair_table_text().as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(hex, "d537f777c07bdd3dc2258e92ae1252eb84e76b289e945786f1da58cbbeed55ec");
    }

    #[test]
    fn projection_tightens_unitarity() {
        for rec in bundled_pair_table(true).unwrap() {
            assert!(is_unitary(rec.w.matrix(), 1e-10).unwrap());
            assert!(is_unitary(rec.v.matrix(), 1e-10).unwrap());
        }
    }

    // Independent oracle: |Σ_ij conj(W_ij) V_ij|² / 4 written out entrywise.
    #[test]
    fn table_fidelities_span_unit_interval() {
        let table = bundled_pair_table(false).unwrap();
        let fids: Vec<f64> = table
            .iter()
            .map(|r| {
                let mut s = c(0.0, 0.0);
                for i in 0..2 {
                    for j in 0..2 {
                        s += r.w[(i, j)].conj() * r.v[(i, j)];
                    }
                }
                let f = s.norm_sqr() / 4.0;
                assert_abs_diff_eq!(f, fidelity_chain(&r.w, &r.v).unwrap().f_choi, epsilon = 1e-9);
                f
            })
            .collect();
        let min = fids.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = fids.iter().cloned().fold(0.0, f64::max);
        assert!(min < 0.1, "min {min}");
        assert!(max > 0.9, "max {max}");
    }

    #[test]
    fn table_errors_carry_row() {
        let table: Vec<serde_json::Value> = serde_json::from_str(bundled_pair_table_text()).unwrap();
        let short = serde_json::to_string(&table[..20]).unwrap();
        assert!(matches!(parse_pair_table(&short, false), Err(Error::Dataset { .. })));

        let mut bad = table.clone();
        bad[4]["W"]["matrix"][0][0] = serde_json::json!([2.0, 0.0]);
        match parse_pair_table(&serde_json::to_string(&bad).unwrap(), false) {
            Err(Error::Dataset { row, .. }) => assert_eq!(row, 5),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_pair_table("not json", false), Err(Error::Dataset { .. })));
    }
}
