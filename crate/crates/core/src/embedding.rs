//! The block lower-triangular linear system L y = c whose solution holds
//! the truncated-Taylor trajectory, with idle copies p_m per step.
//!
//! Block labels are (m, j): for m < M, j runs over 0..=p_m+k, where
//! 0..=p_m are data copies of x^m and p_m+1..=p_m+k hold Taylor terms;
//! the final step M has only the data copies 0..=p_M.

use serde::{Deserialize, Serialize};
use std::io::{self, Write};

use crate::discretization::TimeGrid;
use crate::error::{QodeError, Result};
use crate::numerics::{
    c, extreme_singular_values, extreme_singular_values_iterative, ComplexMatrix, ComplexVector,
    LinearOperator, DENSE_SVD_LIMIT,
};
use crate::scenarios::OdeSystem;

/// Desk-scale limit on the total dimension block_dim·N.
pub const EMBEDDING_SIZE_LIMIT: usize = 1_000_000;

/// Largest L measured by dense SVD; larger ones use Lanczos on L†L and
/// on (L L†)⁻¹ through the block-triangular solves.
pub const MEASURE_DENSE_LIMIT: usize = 400;

/// Idle counts p_0..p_M.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdlingPlan {
    p: Vec<u64>,
}

impl IdlingPlan {
    /// All p_m = 0: the history-state layout.
    pub fn history(steps: usize) -> Self {
        IdlingPlan {
            p: vec![0; steps + 1],
        }
    }

    /// p_m = 0 for m < M and p_M = p: the solution-state layout.
    pub fn solution(steps: usize, p: u64) -> Self {
        let mut v = vec![0; steps + 1];
        v[steps] = p;
        IdlingPlan { p: v }
    }

    /// Arbitrary plan; needs at least p_0.
    pub fn custom(p: Vec<u64>) -> Result<Self> {
        if p.is_empty() {
            return Err(QodeError::invalid("idling", "need at least one entry"));
        }
        Ok(IdlingPlan { p })
    }

    /// The counts p_0..p_M.
    pub fn p(&self) -> &[u64] {
        &self.p
    }

    /// Number of steps M.
    pub fn steps(&self) -> usize {
        self.p.len() - 1
    }

    /// True when every p_m is zero.
    pub fn is_history(&self) -> bool {
        self.p.iter().all(|&v| v == 0)
    }

    /// True when only p_M is nonzero and it is a positive multiple of k+1.
    pub fn is_canonical_solution(&self, k: usize) -> bool {
        let m = self.steps();
        let last = self.p[m];
        self.p[..m].iter().all(|&v| v == 0) && last > 0 && last % (k as u64 + 1) == 0
    }

    /// Σ_m p_m.
    pub fn total(&self) -> u64 {
        self.p.iter().sum()
    }
}

/// Coefficient of an off-diagonal block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockCoef {
    /// −I.
    MinusIdentity,
    /// −Ah/j.
    MinusAhOver(usize),
}

/// The assembled system with its index layout.
#[derive(Debug, Clone)]
pub struct LinearEmbedding {
    n: usize,
    k: usize,
    h: f64,
    ah: ComplexMatrix,
    idling: IdlingPlan,
    offsets: Vec<usize>,
    block_dim: usize,
    incoming: Vec<Vec<(usize, BlockCoef)>>,
    rhs: ComplexVector,
}

/// Assemble L and c for the system on the grid with truncation order k.
pub fn build_embedding(
    system: &OdeSystem,
    grid: &TimeGrid,
    k: usize,
    idling: &IdlingPlan,
) -> Result<LinearEmbedding> {
    let n = system.n();
    let steps = idling.steps();
    if steps as u64 != grid.steps {
        return Err(QodeError::Dimension(format!(
            "idling plan covers {steps} steps but the grid has {}",
            grid.steps
        )));
    }
    let mut offsets = Vec::with_capacity(steps + 1);
    let mut block_dim: u128 = 0;
    for (m, &pm) in idling.p().iter().enumerate() {
        offsets.push(block_dim as usize);
        block_dim += pm as u128 + 1 + if m < steps { k as u128 } else { 0 };
        if block_dim * n as u128 > EMBEDDING_SIZE_LIMIT as u128 {
            return Err(QodeError::Guard(format!(
                "embedding dimension exceeds {EMBEDDING_SIZE_LIMIT}"
            )));
        }
    }
    let block_dim = block_dim as usize;
    let mut incoming: Vec<Vec<(usize, BlockCoef)>> = vec![Vec::new(); block_dim];
    for m in 0..=steps {
        let base = offsets[m];
        let pm = idling.p()[m] as usize;
        for j in 1..=pm {
            incoming[base + j].push((base + j - 1, BlockCoef::MinusIdentity));
        }
        if m < steps {
            for j in 1..=k {
                incoming[base + pm + j].push((base + pm + j - 1, BlockCoef::MinusAhOver(j)));
            }
            let next = offsets[m + 1];
            for j in 0..=k {
                incoming[next].push((base + pm + j, BlockCoef::MinusIdentity));
            }
        }
    }
    let mut rhs = ComplexVector::zeros(block_dim * n);
    rhs.rows_mut(0, n).copy_from(&system.x0);
    if k >= 1 {
        let hb = &system.b * c(grid.h);
        for m in 0..steps {
            let blk = offsets[m] + idling.p()[m] as usize + 1;
            rhs.rows_mut(blk * n, n).copy_from(&hb);
        }
    } else if system.b.norm() > 0.0 {
        return Err(QodeError::invalid("k", "an inhomogeneous system needs k ≥ 1"));
    }
    Ok(LinearEmbedding {
        n,
        k,
        h: grid.h,
        ah: &system.a * c(grid.h),
        idling: idling.clone(),
        offsets,
        block_dim,
        incoming,
        rhs,
    })
}

impl LinearEmbedding {
    /// Number of N×N blocks.
    pub fn block_dim(&self) -> usize {
        self.block_dim
    }

    /// Total dimension block_dim·N.
    pub fn size(&self) -> usize {
        self.block_dim * self.n
    }

    /// State dimension N.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Truncation order k.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Step size h.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// The idling plan.
    pub fn idling(&self) -> &IdlingPlan {
        &self.idling
    }

    /// Right-hand side c.
    pub fn rhs(&self) -> &ComplexVector {
        &self.rhs
    }

    /// Scale ω_k = √(k+1) + 2 with L̃ = L/ω_k.
    pub fn omega_k(&self) -> f64 {
        ((self.k + 1) as f64).sqrt() + 2.0
    }

    /// Block index of label (m, j).
    pub fn index(&self, m: usize, j: usize) -> Result<usize> {
        let steps = self.idling.steps();
        if m > steps {
            return Err(QodeError::invalid("m", format!("step {m} exceeds M = {steps}")));
        }
        let pm = self.idling.p()[m] as usize;
        let width = pm + 1 + if m < steps { self.k } else { 0 };
        if j >= width {
            return Err(QodeError::invalid("j", format!("block ({m}, {j}) does not exist")));
        }
        Ok(self.offsets[m] + j)
    }

    /// Off-diagonal blocks feeding each row block.
    pub fn incoming(&self, block: usize) -> &[(usize, BlockCoef)] {
        &self.incoming[block]
    }

    fn coef_apply(&self, coef: BlockCoef, v: &ComplexVector, adjoint: bool) -> ComplexVector {
        match coef {
            BlockCoef::MinusIdentity => -v,
            BlockCoef::MinusAhOver(j) => {
                let s = c(-1.0 / j as f64);
                if adjoint {
                    self.ah.ad_mul(v) * s
                } else {
                    &self.ah * v * s
                }
            }
        }
    }

    fn block(&self, v: &ComplexVector, i: usize) -> ComplexVector {
        v.rows(i * self.n, self.n).into_owned()
    }

    fn check_len(&self, v: &ComplexVector) {
        assert_eq!(v.len(), self.size(), "vector length must equal the embedding dimension");
    }

    /// y = L⁻¹ c by one forward sweep over the unit-diagonal blocks.
    pub fn solve_forward(&self) -> ComplexVector {
        self.forward(&self.rhs)
    }

    fn forward(&self, rhs: &ComplexVector) -> ComplexVector {
        self.check_len(rhs);
        let n = self.n;
        let mut y = rhs.clone();
        for i in 0..self.block_dim {
            let mut acc = self.block(&y, i);
            for &(src, coef) in &self.incoming[i] {
                acc -= self.coef_apply(coef, &self.block(&y, src), false);
            }
            y.rows_mut(i * n, n).copy_from(&acc);
        }
        y
    }

    fn backward(&self, rhs: &ComplexVector) -> ComplexVector {
        self.check_len(rhs);
        let n = self.n;
        let mut z = rhs.clone();
        for i in (0..self.block_dim).rev() {
            let zi = self.block(&z, i);
            for &(src, coef) in &self.incoming[i] {
                let upd = self.coef_apply(coef, &zi, true);
                let mut cur = z.rows_mut(src * n, n);
                cur -= upd;
            }
        }
        z
    }

    fn multiply(&self, x: &ComplexVector, adjoint: bool) -> ComplexVector {
        self.check_len(x);
        let n = self.n;
        let mut out = x.clone();
        for i in 0..self.block_dim {
            for &(src, coef) in &self.incoming[i] {
                if adjoint {
                    let upd = self.coef_apply(coef, &self.block(x, i), true);
                    let mut cur = out.rows_mut(src * n, n);
                    cur += upd;
                } else {
                    let upd = self.coef_apply(coef, &self.block(x, src), false);
                    let mut cur = out.rows_mut(i * n, n);
                    cur += upd;
                }
            }
        }
        out
    }

    /// Dense copy of L.
    pub fn to_dense(&self) -> Result<ComplexMatrix> {
        let size = self.size();
        if size > DENSE_SVD_LIMIT {
            return Err(QodeError::Guard(format!(
                "dense materialization of dimension {size} exceeds {DENSE_SVD_LIMIT}"
            )));
        }
        let n = self.n;
        let mut l = ComplexMatrix::identity(size, size);
        for i in 0..self.block_dim {
            for &(src, coef) in &self.incoming[i] {
                let blk = match coef {
                    BlockCoef::MinusIdentity => -ComplexMatrix::identity(n, n),
                    BlockCoef::MinusAhOver(j) => &self.ah * c(-1.0 / j as f64),
                };
                l.view_mut((i * n, src * n), (n, n)).copy_from(&blk);
            }
        }
        Ok(l)
    }

    /// Dense copy of L̃ = L/ω_k.
    pub fn rescaled_dense(&self) -> Result<ComplexMatrix> {
        Ok(self.to_dense()? * c(1.0 / self.omega_k()))
    }

    /// Write the nonzero entries of L as `row col re im`, zero-based, one per
    /// line, with 17 significant digits.
    pub fn write_coordinate<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.n;
        let mut line = |r: usize, col: usize, re: f64, im: f64| -> io::Result<()> {
            writeln!(w, "{r} {col} {re:.16e} {im:.16e}")
        };
        for i in 0..self.block_dim {
            for &(src, coef) in &self.incoming[i] {
                match coef {
                    BlockCoef::MinusIdentity => {
                        for d in 0..n {
                            line(i * n + d, src * n + d, -1.0, 0.0)?;
                        }
                    }
                    BlockCoef::MinusAhOver(j) => {
                        for r in 0..n {
                            for cc in 0..n {
                                let v = self.ah[(r, cc)] * c(-1.0 / j as f64);
                                if v.re != 0.0 || v.im != 0.0 {
                                    line(i * n + r, src * n + cc, v.re, v.im)?;
                                }
                            }
                        }
                    }
                }
            }
            for d in 0..n {
                line(i * n + d, i * n + d, 1.0, 0.0)?;
            }
        }
        Ok(())
    }

    /// Data block y^{(m, j)} of a solution vector.
    pub fn extract(&self, y: &ComplexVector, m: usize, j: usize) -> Result<ComplexVector> {
        let i = self.index(m, j)?;
        Ok(self.block(y, i))
    }

    /// x^0..x^M read from blocks (m, 0).
    pub fn history(&self, y: &ComplexVector) -> Vec<ComplexVector> {
        self.offsets.iter().map(|&o| self.block(y, o)).collect()
    }

    /// ‖L y − c‖.
    pub fn residual(&self, y: &ComplexVector) -> f64 {
        (self.multiply(y, false) - &self.rhs).norm()
    }
}

impl LinearOperator for LinearEmbedding {
    fn dim(&self) -> usize {
        self.size()
    }
    fn apply(&self, x: &ComplexVector) -> ComplexVector {
        self.multiply(x, false)
    }
    fn apply_adjoint(&self, x: &ComplexVector) -> ComplexVector {
        self.multiply(x, true)
    }
    fn solve(&self, c: &ComplexVector) -> ComplexVector {
        self.forward(c)
    }
    fn solve_adjoint(&self, c: &ComplexVector) -> ComplexVector {
        self.backward(c)
    }
}

/// Measured ‖L‖, σ_min and κ_L.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMeasurement {
    pub norm_l: f64,
    pub sigma_min: f64,
    pub kappa_numeric: f64,
    pub dense: bool,
}

/// Dense SVD up to [`MEASURE_DENSE_LIMIT`], iterative with structured solves above.
pub fn measure_embedding(emb: &LinearEmbedding) -> Result<EmbeddingMeasurement> {
    let (pair, dense) = if emb.size() <= MEASURE_DENSE_LIMIT {
        (extreme_singular_values(&emb.to_dense()?, None)?, true)
    } else {
        (extreme_singular_values_iterative(emb)?, false)
    };
    Ok(EmbeddingMeasurement {
        norm_l: pair.sigma_max,
        sigma_min: pair.sigma_min,
        kappa_numeric: pair.condition_number(),
        dense,
    })
}

/// Measured probabilities of landing in the data blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuccessProbabilities {
    pub pr_history: f64,
    pub pr_solution: f64,
}

/// Pr_H = Σ_m Σ_{r ≤ p_m} ‖y^{(m,r)}‖²/‖y‖² and Pr_T = (p_M+1)‖y^{(M,0)}‖²/‖y‖².
pub fn success_probabilities_exact(y: &ComplexVector, emb: &LinearEmbedding) -> Result<SuccessProbabilities> {
    if y.len() != emb.size() {
        return Err(QodeError::Dimension(format!(
            "vector has {} entries, embedding has {}",
            y.len(),
            emb.size()
        )));
    }
    let total = y.norm_squared();
    if !(total > 0.0) {
        return Err(QodeError::invalid("y", "zero solution vector"));
    }
    let mut data = 0.0;
    for (m, &pm) in emb.idling.p().iter().enumerate() {
        for r in 0..=pm as usize {
            data += emb.block(y, emb.offsets[m] + r).norm_squared();
        }
    }
    let steps = emb.idling.steps();
    let last = emb.block(y, emb.offsets[steps]).norm_squared();
    let pm = emb.idling.p()[steps] as f64;
    Ok(SuccessProbabilities {
        pr_history: data / total,
        pr_solution: (pm + 1.0) * last / total,
    })
}
