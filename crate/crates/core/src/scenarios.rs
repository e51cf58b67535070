//! Generators for the application families: contractive generators with
//! a prescribed logarithmic norm, damped coupled oscillators, Carleman
//! linearizations of quadratic ODEs and Hamiltonian dynamics.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use crate::error::{QodeError, Result};
use crate::numerics::{
    all_finite_matrix, all_finite_vector, c, identity, operator_norm, sample, ComplexMatrix, ComplexVector, C64,
};
use crate::stability::{euclidean_log_norm, hermitian_eigen};

/// Linear system ẋ = A x + b with x(0) = x0.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeSystem {
    pub a: ComplexMatrix,
    pub b: ComplexVector,
    pub x0: ComplexVector,
    pub label: String,
}

impl OdeSystem {
    /// Validated system: A square N×N, b and x0 of length N, ‖x0‖ > 0.
    pub fn new(a: ComplexMatrix, b: ComplexVector, x0: ComplexVector, label: impl Into<String>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(QodeError::Dimension(format!("A must be square, got {}x{}", a.nrows(), a.ncols())));
        }
        if b.len() != n || x0.len() != n {
            return Err(QodeError::Dimension(format!(
                "A is {n}x{n} but b has {} and x0 has {} entries",
                b.len(),
                x0.len()
            )));
        }
        if !all_finite_matrix(&a) || !all_finite_vector(&b) || !all_finite_vector(&x0) {
            return Err(QodeError::invalid("system", "entries must be finite"));
        }
        if !(x0.norm() > 0.0) {
            return Err(QodeError::invalid("x0", "initial state must be nonzero"));
        }
        Ok(OdeSystem {
            a,
            b,
            x0,
            label: label.into(),
        })
    }

    /// State dimension N.
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    /// True when b = 0.
    pub fn is_homogeneous(&self) -> bool {
        self.b.iter().all(|z| *z == c(0.0))
    }

    /// Largest step h ≤ 1 with ‖A‖h ≤ 1.
    pub fn recommended_step(&self) -> Result<f64> {
        let norm = operator_norm(&self.a)?;
        Ok(if norm > 1.0 { 1.0 / norm } else { 1.0 })
    }
}

/// A = μI − iH with ‖H‖ = √(1−μ²), so the log-norm is μ and ‖A‖ = 1.
pub fn negative_lognorm_family(n: usize, mu: f64, seed: u64) -> Result<OdeSystem> {
    if n == 0 {
        return Err(QodeError::invalid("N", "dimension must be ≥ 1"));
    }
    if !(-1.0..=0.0).contains(&mu) {
        return Err(QodeError::invalid("mu", format!("must lie in [-1, 0], got {mu}")));
    }
    let mut rng = sample::rng(seed);
    let raw = sample::hermitian(&mut rng, n);
    let target = (1.0 - mu * mu).max(0.0).sqrt();
    let h = if target == 0.0 {
        ComplexMatrix::zeros(n, n)
    } else {
        let norm = operator_norm(&raw)?;
        if norm == 0.0 {
            identity(n) * c(target)
        } else {
            &raw * c(target / norm)
        }
    };
    let a = identity(n) * c(mu) - h * C64::new(0.0, 1.0);
    let x0 = sample::unit_vector(&mut rng, n);
    OdeSystem::new(a, ComplexVector::zeros(n), x0, format!("negative-lognorm mu={mu} N={n} seed={seed}"))
}

/// Assembled oscillator network with its diagnostics.
#[derive(Debug, Clone)]
pub struct OscillatorSystem {
    pub system: OdeSystem,
    /// Factor R with W = R R†.
    pub r: ComplexMatrix,
    /// Sign s of the top-right block s·iR that passed the round trip.
    pub sign: f64,
    /// μ(D).
    pub mu_d: f64,
    /// Numerically measured μ(A).
    pub mu_a: f64,
}

impl OscillatorSystem {
    /// e^{−|μ(D)|t}‖x0‖ + (1 − e^{−|μ(D)|t})‖b‖/|μ(D)|.
    ///
    /// This is a Gronwall envelope for ‖x(t)‖ driven by the damping rate
    /// μ(D); it bounds the true norm only if μ(A) ≤ μ(D), which `mu_a`
    /// lets callers check.
    pub fn gronwall_envelope(&self, t: f64) -> f64 {
        let rate = self.mu_d.abs();
        let decay = (-rate * t).exp();
        decay * self.system.x0.norm() + (-(-rate * t).exp_m1()) * self.system.b.norm() / rate
    }
}

fn is_hermitian(m: &ComplexMatrix, tol: f64) -> bool {
    m.nrows() == m.ncols() && (m - m.adjoint()).norm() <= tol * m.norm().max(1.0)
}

/// Factor a Hermitian PSD matrix as R R†: Cholesky, else eigen square root.
pub fn psd_factor(w: &ComplexMatrix) -> Result<ComplexMatrix> {
    if !is_hermitian(w, 1e-12) {
        return Err(QodeError::invalid("W", "must be Hermitian"));
    }
    let (vals, vecs) = hermitian_eigen(w);
    let scale = vals.iter().cloned().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    if vals.iter().any(|&v| v < -1e-12 * scale) {
        return Err(QodeError::invalid("W", "must be positive semidefinite"));
    }
    if vals[0] > 1e-12 * scale {
        if let Some(ch) = Cholesky::new(w.clone()) {
            return Ok(ch.l());
        }
    }
    let n = w.nrows();
    let mut r = vecs.clone();
    for j in 0..n {
        let s = vals[j].max(0.0).sqrt();
        let mut col = r.column_mut(j);
        col *= c(s);
    }
    Ok(r)
}

fn oscillator_generator(d: &ComplexMatrix, r: &ComplexMatrix, sign: f64) -> ComplexMatrix {
    let n = d.nrows();
    let i = C64::new(0.0, 1.0);
    let mut a = ComplexMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, 0), (n, n)).copy_from(d);
    a.view_mut((0, n), (n, n)).copy_from(&(r * (i * sign)));
    a.view_mut((n, 0), (n, n)).copy_from(&(r.adjoint() * i));
    a
}

/// ÿ = −W y + D ẏ + F as a first-order system on x = (ẏ, iR†y).
///
/// The sign of the top-right block is fixed by checking, on seeded
/// states, that the top half of A x + b reproduces −W y + D ẏ + F.
pub fn damped_oscillators(
    w: &ComplexMatrix,
    d: &ComplexMatrix,
    f: &ComplexVector,
    y0: &ComplexVector,
    ydot0: &ComplexVector,
) -> Result<OscillatorSystem> {
    let n = w.nrows();
    if w.ncols() != n || d.nrows() != n || d.ncols() != n || f.len() != n || y0.len() != n || ydot0.len() != n {
        return Err(QodeError::Dimension("W, D, F, y0, ẏ0 must share dimension N".into()));
    }
    let mu_d = euclidean_log_norm(d)?;
    if !(mu_d < 0.0) {
        return Err(QodeError::invalid("D", format!("log-norm must be negative, got {mu_d}")));
    }
    let r = psd_factor(w)?;
    let i = C64::new(0.0, 1.0);
    let mut rng = sample::rng(0x05c1_11a7);
    let probes: Vec<(ComplexVector, ComplexVector)> =
        (0..3).map(|_| (sample::vector(&mut rng, n), sample::vector(&mut rng, n))).collect();
    let mut chosen = None;
    for sign in [1.0, -1.0] {
        let a = oscillator_generator(d, &r, sign);
        let ok = probes.iter().all(|(y, yd)| {
            let mut x = ComplexVector::zeros(2 * n);
            x.rows_mut(0, n).copy_from(yd);
            x.rows_mut(n, n).copy_from(&(r.adjoint() * y * i));
            let lhs = (&a * &x).rows(0, n).into_owned() + f;
            let rhs = -(w * y) + d * yd + f;
            (lhs - &rhs).norm() <= 1e-10 * rhs.norm().max(1.0)
        });
        if ok {
            chosen = Some((sign, a));
            break;
        }
    }
    let (sign, a) = chosen.ok_or_else(|| QodeError::NonConvergence("no oscillator sign passed the round trip".into()))?;
    log::debug!("oscillator top-right block sign: {sign:+}");
    let mut b = ComplexVector::zeros(2 * n);
    b.rows_mut(0, n).copy_from(f);
    let mut x0 = ComplexVector::zeros(2 * n);
    x0.rows_mut(0, n).copy_from(ydot0);
    x0.rows_mut(n, n).copy_from(&(r.adjoint() * y0 * i));
    let mu_a = euclidean_log_norm(&a)?;
    let system = OdeSystem::new(a, b, x0, format!("damped-oscillators N={n}"))?;
    Ok(OscillatorSystem {
        system,
        r,
        sign,
        mu_d,
        mu_a,
    })
}

/// Carleman system with its dimensionless ratio R.
#[derive(Debug, Clone)]
pub struct CarlemanSystem {
    pub system: OdeSystem,
    /// (1/|μ(F1)|)(‖F2‖/‖u0‖ + ‖F0‖·‖u0‖).
    pub r: f64,
    /// True when R ≥ 1.
    pub r_flag: bool,
    pub n: usize,
    pub truncation: usize,
}

/// Largest N^{N_tr} accepted by [`carleman_quadratic`].
pub const CARLEMAN_LIMIT: usize = 10_000;

/// Σ_ν I^{⊗(ν−1)} ⊗ X ⊗ I^{⊗(j−ν)} for X of shape N×N^q.
fn kron_sum(x: &ComplexMatrix, n: usize, j: usize) -> ComplexMatrix {
    let q_cols = x.ncols();
    let rows = n.pow(j as u32);
    let cols = q_cols * n.pow(j as u32 - 1);
    let mut out = ComplexMatrix::zeros(rows, cols);
    for nu in 1..=j {
        let left = identity(n.pow(nu as u32 - 1));
        let right = identity(n.pow((j - nu) as u32));
        out += left.kronecker(x).kronecker(&right);
    }
    out
}

/// Truncated Carleman linearization of u̇ = F0 + F1 u + F2 (u⊗u) on
/// x = (u, u⊗², …, u^{⊗N_tr}).
pub fn carleman_quadratic(
    f0: &ComplexVector,
    f1: &ComplexMatrix,
    f2: &ComplexMatrix,
    u0: &ComplexVector,
    truncation: usize,
) -> Result<CarlemanSystem> {
    let n = f1.nrows();
    if n == 0 || f1.ncols() != n || f0.len() != n || u0.len() != n || f2.nrows() != n || f2.ncols() != n * n {
        return Err(QodeError::Dimension("F0: N, F1: N×N, F2: N×N², u0: N required".into()));
    }
    if truncation == 0 {
        return Err(QodeError::invalid("N_tr", "truncation must be ≥ 1"));
    }
    let top = (n as u128).checked_pow(truncation as u32).unwrap_or(u128::MAX);
    if top > CARLEMAN_LIMIT as u128 {
        return Err(QodeError::Guard(format!("N^N_tr = {top} exceeds {CARLEMAN_LIMIT}")));
    }
    let u0n = u0.norm();
    if !(u0n < 1.0) || u0n == 0.0 {
        return Err(QodeError::invalid("u0", format!("need 0 < ‖u0‖ < 1, got {u0n}")));
    }
    let mu1 = euclidean_log_norm(f1)?;
    if !(mu1 < 0.0) {
        return Err(QodeError::invalid("F1", format!("log-norm must be negative, got {mu1}")));
    }
    let dims: Vec<usize> = (1..=truncation).map(|j| n.pow(j as u32)).collect();
    let offs: Vec<usize> = dims.iter().scan(0, |acc, &d| {
        let o = *acc;
        *acc += d;
        Some(o)
    }).collect();
    let total: usize = dims.iter().sum();
    let mut a = ComplexMatrix::zeros(total, total);
    let f0_col = ComplexMatrix::from_column_slice(n, 1, f0.as_slice());
    for j in 1..=truncation {
        let r0 = offs[j - 1];
        a.view_mut((r0, r0), (dims[j - 1], dims[j - 1])).copy_from(&kron_sum(f1, n, j));
        if j < truncation {
            a.view_mut((r0, offs[j]), (dims[j - 1], dims[j])).copy_from(&kron_sum(f2, n, j));
        }
        if j >= 2 {
            a.view_mut((r0, offs[j - 2]), (dims[j - 1], dims[j - 2])).copy_from(&kron_sum(&f0_col, n, j));
        }
    }
    let mut b = ComplexVector::zeros(total);
    b.rows_mut(0, n).copy_from(f0);
    let mut x0 = ComplexVector::zeros(total);
    let mut power = ComplexMatrix::from_column_slice(n, 1, u0.as_slice());
    for j in 1..=truncation {
        if j > 1 {
            power = power.kronecker(&ComplexMatrix::from_column_slice(n, 1, u0.as_slice()));
        }
        x0.rows_mut(offs[j - 1], dims[j - 1]).copy_from(&power.column(0));
    }
    let r = (operator_norm(f2)? / u0n + f0.norm() * u0n) / mu1.abs();
    if r >= 1.0 {
        log::warn!("Carleman ratio R = {r:.4} ≥ 1");
    }
    let system = OdeSystem::new(a, b, x0, format!("carleman N={n} N_tr={truncation}"))?;
    Ok(CarlemanSystem {
        system,
        r,
        r_flag: r >= 1.0,
        n,
        truncation,
    })
}

/// A = −iH, b = 0.
pub fn hamiltonian_case(h: &ComplexMatrix, x0: &ComplexVector) -> Result<OdeSystem> {
    if !is_hermitian(h, 1e-12) {
        return Err(QodeError::invalid("H", "must be Hermitian within 1e-12"));
    }
    let n = h.nrows();
    OdeSystem::new(h * C64::new(0.0, -1.0), ComplexVector::zeros(n), x0.clone(), format!("hamiltonian N={n}"))
}

/// Serializable description of a generated scenario, stored alongside outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub label: String,
    pub dimension: usize,
    pub a_norm: f64,
    pub log_norm: f64,
    pub recommended_h: f64,
}

impl ScenarioSummary {
    /// Summarize a system.
    pub fn of(system: &OdeSystem) -> Result<Self> {
        Ok(ScenarioSummary {
            label: system.label.clone(),
            dimension: system.n(),
            a_norm: operator_norm(&system.a)?,
            log_norm: euclidean_log_norm(&system.a)?,
            recommended_h: system.recommended_step()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{exact_trajectory, TimeGrid};
    use crate::numerics::propagate_exact;
    use crate::stability::{lyapunov_profile, Classification, LyapunovMode};
    use proptest::prelude::*;

    #[test]
    fn lognorm_family_basics() {
        for &mu in &[0.0, -0.3, -0.999, -1.0] {
            let s = negative_lognorm_family(5, mu, 3).unwrap();
            assert!((operator_norm(&s.a).unwrap() - 1.0).abs() < 1e-10);
            assert!((euclidean_log_norm(&s.a).unwrap() - mu).abs() < 1e-12);
            assert!(s.is_homogeneous());
        }
        let s = negative_lognorm_family(3, -1.0, 1).unwrap();
        assert!((&s.a + identity(3)).norm() < 1e-15);
        assert!(negative_lognorm_family(3, -1.5, 1).is_err());
        assert!(negative_lognorm_family(3, 0.2, 1).is_err());
    }

    #[test]
    fn lognorm_zero_is_marginal() {
        let s = negative_lognorm_family(4, 0.0, 2).unwrap();
        let prof = lyapunov_profile(&s.a, LyapunovMode::Auto, 10.0).unwrap();
        assert_eq!(prof.classification, Classification::MarginalOrUnstable);
        assert!((prof.c_max.unwrap() - 1.0).abs() < 0.02);
    }

    #[test]
    fn free_oscillators_conserve_norm() {
        let w = ComplexMatrix::from_row_slice(2, 2, &[c(2.0), c(-1.0), c(-1.0), c(2.0)]);
        let d = identity(2) * c(-0.5);
        let y0 = ComplexVector::from_vec(vec![c(1.0), c(0.0)]);
        let yd = ComplexVector::from_vec(vec![c(0.0), c(0.5)]);
        let osc = damped_oscillators(&w, &d, &ComplexVector::zeros(2), &y0, &yd).unwrap();
        assert_eq!(osc.sign, 1.0);
        assert!(osc.mu_a.abs() < 1e-12, "the zero block holds μ(A) at 0");
        let mut a0 = osc.system.a.clone();
        a0.view_mut((0, 0), (2, 2)).fill(c(0.0));
        assert!((&a0 + a0.adjoint()).norm() < 1e-14);
        for t in [0.5, 3.0, 10.0] {
            let x = propagate_exact(&a0, &ComplexVector::zeros(4), &osc.system.x0, t).unwrap();
            assert!((x.norm() - osc.system.x0.norm()).abs() < 1e-10);
        }
    }

    #[test]
    fn single_damped_oscillator_closed_form() {
        let (om, gamma, y0v, v0) = (1.3f64, 0.4f64, 0.7f64, -0.2f64);
        let w = ComplexMatrix::from_element(1, 1, c(om * om));
        let d = ComplexMatrix::from_element(1, 1, c(-gamma));
        let osc = damped_oscillators(
            &w,
            &d,
            &ComplexVector::zeros(1),
            &ComplexVector::from_element(1, c(y0v)),
            &ComplexVector::from_element(1, c(v0)),
        )
        .unwrap();
        let wd = (om * om - gamma * gamma / 4.0).sqrt();
        let k1 = y0v;
        let k2 = (v0 + gamma / 2.0 * y0v) / wd;
        for &t in &[0.3, 1.0, 4.0, 9.0] {
            let x = propagate_exact(&osc.system.a, &osc.system.b, &osc.system.x0, t).unwrap();
            let env = (-gamma * t / 2.0).exp();
            let y = env * (k1 * (wd * t).cos() + k2 * (wd * t).sin());
            let ydot = -gamma / 2.0 * y + env * wd * (-k1 * (wd * t).sin() + k2 * (wd * t).cos());
            assert!((x[0] - c(ydot)).norm() < 1e-8);
            let z = osc.r.adjoint()[(0, 0)] * C64::new(0.0, 1.0) * y;
            assert!((x[1] - z).norm() < 1e-8);
        }
    }

    #[test]
    fn semidefinite_w_uses_eigen_root() {
        let w = ComplexMatrix::from_row_slice(2, 2, &[c(1.0), c(1.0), c(1.0), c(1.0)]);
        let r = psd_factor(&w).unwrap();
        assert!((&r * r.adjoint() - &w).norm() < 1e-12);
        let bad = ComplexMatrix::from_row_slice(2, 2, &[c(1.0), c(2.0), c(2.0), c(1.0)]);
        assert!(psd_factor(&bad).is_err());
        let d = identity(2) * c(0.1);
        assert!(damped_oscillators(&w, &d, &ComplexVector::zeros(2), &ComplexVector::zeros(2), &ComplexVector::zeros(2)).is_err());
    }

    #[test]
    fn carleman_linear_reduction() {
        let f1 = ComplexMatrix::from_row_slice(2, 2, &[c(-1.0), c(0.3), c(-0.2), c(-0.8)]);
        let u0 = ComplexVector::from_vec(vec![c(0.3), c(-0.2)]);
        let cs = carleman_quadratic(&ComplexVector::zeros(2), &f1, &ComplexMatrix::zeros(2, 4), &u0, 3).unwrap();
        assert_eq!(cs.system.n(), 2 + 4 + 8);
        for t in [0.5, 2.0] {
            let x = propagate_exact(&cs.system.a, &cs.system.b, &cs.system.x0, t).unwrap();
            let u = propagate_exact(&f1, &ComplexVector::zeros(2), &u0, t).unwrap();
            assert!((x.rows(0, 2).into_owned() - u).norm() < 1e-12);
        }
        let mu_a = euclidean_log_norm(&cs.system.a).unwrap();
        assert!(mu_a < 0.0);
        assert!((euclidean_log_norm(&f1).unwrap() - mu_a).abs() < 1e-12);
    }

    fn logistic_reference(u0: f64, t_end: f64, steps: usize) -> Vec<f64> {
        let f = |u: f64| -u + u * u / 4.0;
        let dt = t_end / steps as f64;
        let mut u = u0;
        let mut out = vec![u];
        for _ in 0..steps {
            let k1 = f(u);
            let k2 = f(u + dt / 2.0 * k1);
            let k3 = f(u + dt / 2.0 * k2);
            let k4 = f(u + dt * k3);
            u += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            out.push(u);
        }
        out
    }

    fn logistic_error(truncation: usize) -> f64 {
        let cs = carleman_quadratic(
            &ComplexVector::zeros(1),
            &ComplexMatrix::from_element(1, 1, c(-1.0)),
            &ComplexMatrix::from_element(1, 1, c(0.25)),
            &ComplexVector::from_element(1, c(0.5)),
            truncation,
        )
        .unwrap();
        let reference = logistic_reference(0.5, 3.0, 30_000);
        let grid = TimeGrid::new(0.01, 300).unwrap();
        let traj = exact_trajectory(&cs.system.a, &cs.system.b, &cs.system.x0, &grid).unwrap();
        traj.iter()
            .enumerate()
            .map(|(m, x)| (x[0] - c(reference[m * 100])).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn carleman_logistic_matches_integrator() {
        assert!(logistic_error(6) < 1e-6);
        let errs: Vec<f64> = (1..=8).map(logistic_error).collect();
        for w in errs.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-13);
        }
    }

    #[test]
    fn carleman_ratio_and_guards() {
        let f1 = ComplexMatrix::from_element(1, 1, c(-2.0));
        let cs = carleman_quadratic(
            &ComplexVector::from_element(1, c(0.1)),
            &f1,
            &ComplexMatrix::from_element(1, 1, c(0.5)),
            &ComplexVector::from_element(1, c(0.5)),
            2,
        )
        .unwrap();
        assert!((cs.r - (0.5 / 0.5 + 0.1 * 0.5) / 2.0).abs() < 1e-15);
        assert!(!cs.r_flag);
        let big = carleman_quadratic(
            &ComplexVector::zeros(10),
            &(identity(10) * c(-1.0)),
            &ComplexMatrix::zeros(10, 100),
            &(ComplexVector::from_element(10, c(0.1))),
            5,
        );
        assert!(matches!(big, Err(QodeError::Guard(_))));
        let outside = carleman_quadratic(
            &ComplexVector::zeros(1),
            &f1,
            &ComplexMatrix::zeros(1, 1),
            &ComplexVector::from_element(1, c(1.5)),
            2,
        );
        assert!(outside.is_err());
    }

    #[test]
    fn hamiltonian_profile_and_unitarity() {
        let h = sample::hermitian(&mut sample::rng(4), 4);
        let x0 = sample::unit_vector(&mut sample::rng(5), 4);
        let s = hamiltonian_case(&h, &x0).unwrap();
        let prof = lyapunov_profile(&s.a, LyapunovMode::Auto, 20.0).unwrap();
        assert_eq!(prof.classification, Classification::MarginalOrUnstable);
        assert!(prof.alpha.unwrap().abs() < 1e-10);
        assert!((prof.c_max.unwrap() - 1.0).abs() < 0.02);
        for t in [0.1, 1.0, 7.5] {
            let x = propagate_exact(&s.a, &s.b, &s.x0, t).unwrap();
            assert!((x.norm() - 1.0).abs() < 1e-10);
        }
        let mut bad = h.clone();
        bad[(0, 1)] += c(1e-3);
        assert!(hamiltonian_case(&bad, &x0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn generated_systems_admit_unit_step(seed in 0u64..10_000, n in 1usize..6, mu in -1.0f64..0.0) {
            let s = negative_lognorm_family(n, mu, seed).unwrap();
            let h = s.recommended_step().unwrap();
            prop_assert!(operator_norm(&s.a).unwrap() * h <= 1.0 + 1e-10);
            prop_assert!((operator_norm(&s.a).unwrap() - 1.0).abs() < 1e-10);
            prop_assert!((euclidean_log_norm(&s.a).unwrap() - mu).abs() < 1e-12);
        }

        #[test]
        fn oscillator_second_order_residual(seed in 0u64..10_000) {
            let mut r = sample::rng(seed);
            let n = 2;
            let x = sample::matrix(&mut r, n, n);
            let w = &x * x.adjoint();
            let d = sample::hermitian(&mut r, n) * c(0.1) - identity(n) * c(1.0);
            let f = sample::vector(&mut r, n) * c(0.3);
            let y0 = sample::vector(&mut r, n);
            let yd = sample::vector(&mut r, n);
            let osc = damped_oscillators(&w, &d, &f, &y0, &yd).unwrap();
            let i = C64::new(0.0, 1.0);
            let rinv = osc.r.adjoint().try_inverse().unwrap();
            let step = 1e-3;
            for &t in &[0.5, 1.5] {
                let xm = propagate_exact(&osc.system.a, &osc.system.b, &osc.system.x0, t - step).unwrap();
                let x = propagate_exact(&osc.system.a, &osc.system.b, &osc.system.x0, t).unwrap();
                let xp = propagate_exact(&osc.system.a, &osc.system.b, &osc.system.x0, t + step).unwrap();
                let y = &rinv * x.rows(n, n).into_owned() * (-i);
                let ydot = x.rows(0, n).into_owned();
                let dx = (&osc.system.a * &x + &osc.system.b).rows(0, n).into_owned();
                let res = &dx + &w * &y - &d * &ydot - &f;
                prop_assert!(res.norm() <= 1e-8 * (1.0 + dx.norm()));
                let fd = (xp.rows(0, n).into_owned() - xm.rows(0, n).into_owned()) * c(0.5 / step);
                prop_assert!((fd - &dx).norm() <= 1e-5 * (1.0 + dx.norm()));
            }
        }
    }
}
