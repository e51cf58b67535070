//! JSON system files: `{"dimension", "matrix", "forcing", "initial", "label"}`
//! with complex entries written as `[re, im]` pairs.

use qode_core::numerics::{C64, ComplexMatrix, ComplexVector};
use qode_core::scenarios::OdeSystem;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// On-disk form of an ODE system ẋ = Ax + b, x(0) = x0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub dimension: usize,
    /// Rows of A.
    pub matrix: Vec<Vec<[f64; 2]>>,
    /// b, or null for a homogeneous system.
    pub forcing: Option<Vec<[f64; 2]>>,
    /// x(0).
    pub initial: Vec<[f64; 2]>,
    pub label: String,
}

fn pairs(v: &ComplexVector) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn vector(field: &str, entries: &[[f64; 2]], n: usize) -> CliResult<ComplexVector> {
    if entries.len() != n {
        return Err(CliError::Validation(format!(
            "`{field}` has {} entries, dimension is {n}",
            entries.len()
        )));
    }
    Ok(ComplexVector::from_iterator(n, entries.iter().map(|p| C64::new(p[0], p[1]))))
}

impl SystemFile {
    /// Serializable copy of a system; homogeneous systems get `forcing: null`.
    pub fn from_system(system: &OdeSystem) -> Self {
        let a = &system.a;
        SystemFile {
            dimension: system.n(),
            matrix: (0..a.nrows())
                .map(|i| (0..a.ncols()).map(|j| [a[(i, j)].re, a[(i, j)].im]).collect())
                .collect(),
            forcing: if system.is_homogeneous() {
                None
            } else {
                Some(pairs(&system.b))
            },
            initial: pairs(&system.x0),
            label: system.label.clone(),
        }
    }

    /// Validated system.
    pub fn to_system(&self) -> CliResult<OdeSystem> {
        let n = self.dimension;
        if n == 0 {
            return Err(CliError::Validation("`dimension` must be ≥ 1".into()));
        }
        if self.matrix.len() != n || self.matrix.iter().any(|row| row.len() != n) {
            return Err(CliError::Validation(format!("`matrix` must be {n}×{n}")));
        }
        let a = ComplexMatrix::from_fn(n, n, |i, j| C64::new(self.matrix[i][j][0], self.matrix[i][j][1]));
        let b = match &self.forcing {
            Some(f) => vector("forcing", f, n)?,
            None => ComplexVector::zeros(n),
        };
        let x0 = vector("initial", &self.initial, n)?;
        Ok(OdeSystem::new(a, b, x0, self.label.clone())?)
    }

    /// Parse a file's contents.
    pub fn parse(path: &str, text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::io(path, e))
    }
}
