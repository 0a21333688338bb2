//! The shared unitary JSON format:
//! `{"dim": d, "matrix": [[[re, im], ...], ...]}`, row-major.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{nearest_unitary, ComplexMatrix, UnitaryMatrix, UNITARY_TOL};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitaryJson {
    pub dim: usize,
    pub matrix: Vec<Vec<[f64; 2]>>,
}

/// How strictly a loaded matrix is checked for unitarity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoadOptions {
    pub tol: f64,
    /// Replace the matrix by its nearest unitary instead of rejecting it.
    pub project: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            tol: UNITARY_TOL,
            project: false,
        }
    }
}

impl UnitaryJson {
    pub fn from_unitary(u: &UnitaryMatrix) -> Self {
        let m = u.matrix();
        Self {
            dim: u.dim(),
            matrix: (0..m.rows())
                .map(|r| m.row(r).iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        if self.matrix.len() != self.dim {
            return Err(Error::Dimension(format!(
                "declared dim {} but {} rows",
                self.dim,
                self.matrix.len()
            )));
        }
        let rows: Vec<Vec<Complex64>> = self
            .matrix
            .iter()
            .map(|row| row.iter().map(|&[re, im]| Complex64::new(re, im)).collect())
            .collect();
        let m = ComplexMatrix::from_rows(&rows)?;
        if !m.is_square() {
            return Err(Error::Dimension(format!(
                "declared dim {} but rows have {} entries",
                self.dim,
                m.cols()
            )));
        }
        Ok(m)
    }

    pub fn to_unitary(&self, opts: LoadOptions) -> Result<UnitaryMatrix> {
        let m = self.to_matrix()?;
        if opts.project {
            nearest_unitary(&m)
        } else {
            UnitaryMatrix::new(m, opts.tol)
        }
    }
}

pub fn parse_unitary(text: &str, opts: LoadOptions) -> Result<UnitaryMatrix> {
    let json: UnitaryJson = serde_json::from_str(text)?;
    json.to_unitary(opts)
}

pub fn load_unitary(path: impl AsRef<Path>, opts: LoadOptions) -> Result<UnitaryMatrix> {
    parse_unitary(&fs::read_to_string(path)?, opts)
}

pub fn unitary_to_json(u: &UnitaryMatrix) -> String {
    serde_json::to_string(&UnitaryJson::from_unitary(u)).expect("plain data serializes")
}

pub fn save_unitary(path: impl AsRef<Path>, u: &UnitaryMatrix) -> Result<()> {
    let mut text = unitary_to_json(u);
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
