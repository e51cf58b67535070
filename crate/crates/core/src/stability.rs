//! Stability classification of a generator A: spectral abscissa, Euclidean
//! and P-weighted log-norms, Lyapunov certificates yielding (κ_P, μ_P), and
//! the uniform envelope C_max for generators that are not stable.

use nalgebra::linalg::{Schur, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{QodeError, Result};
use crate::numerics::{c, expm, identity, operator_norm, ComplexMatrix, ComplexVector, C64};
use crate::strategy::Registry;

/// α(A) below this value counts as stable.
pub const STABLE_THRESHOLD: f64 = -1e-12;
/// Number of grid points used for envelope checks.
pub const CHECK_GRID_POINTS: usize = 64;
/// Relative slack allowed when checking ‖e^{At}‖ ≤ √κ_P e^{μ_P t}.
pub const ENVELOPE_SLACK: f64 = 1e-8;
/// Safety margin applied to the sampled C_max.
pub const C_MAX_MARGIN: f64 = 1.01;
/// Certificates with κ_P above this value are flagged.
pub const KAPPA_P_WARNING: f64 = 1e12;
/// Largest eigenvector-matrix condition number accepted on the diagonalization route.
pub const MAX_KAPPA_V: f64 = 1e6;
/// Dimension up to which the Lyapunov equation is solved by Kronecker vectorization.
pub const KRONECKER_LIMIT: usize = 16;

const SCHUR_MAX_ITER: usize = 100_000;

/// Stability class of a generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Stable,
    MarginalOrUnstable,
}

/// How a profile was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    AutoLyapunov,
    AutoLognorm,
    AutoDiagonalization,
    AutoEnvelope,
    Manual,
}

/// Which certificate routes [`lyapunov_profile`] may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LyapunovMode {
    /// Every registered route; the tightest valid certificate wins.
    Auto,
    /// Only the Lyapunov solve with Q = I.
    QIdentity,
}

/// Stability data consumed by the condition-number bounds.
///
/// A stable profile carries (κ_P, μ_P) with ‖e^{At}‖ ≤ √κ_P e^{μ_P t}; a
/// marginal-or-unstable profile carries C_max ≥ sup ‖e^{At}‖ over the horizon.
/// The latter is the μ_P → 0⁻, κ_P → C_max² limit of the former.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityProfile {
    pub classification: Classification,
    pub kappa_p: Option<f64>,
    pub mu_p: Option<f64>,
    pub c_max: Option<f64>,
    pub alpha: Option<f64>,
    pub mu_euclid: Option<f64>,
    #[serde(skip)]
    pub p: Option<ComplexMatrix>,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl StabilityProfile {
    /// User-supplied stable parameters.
    pub fn manual_stable(kappa_p: f64, mu_p: f64) -> Result<Self> {
        if !(kappa_p >= 1.0) || !kappa_p.is_finite() {
            return Err(QodeError::invalid("kappa_P", format!("must be ≥ 1, got {kappa_p}")));
        }
        if !(mu_p < 0.0) {
            return Err(QodeError::invalid("mu_P", format!("must be < 0, got {mu_p}")));
        }
        Ok(StabilityProfile {
            classification: Classification::Stable,
            kappa_p: Some(kappa_p),
            mu_p: Some(mu_p),
            c_max: None,
            alpha: None,
            mu_euclid: None,
            p: None,
            provenance: Provenance::Manual,
            warnings: Vec::new(),
        })
    }

    /// User-supplied uniform envelope for a generator that is not stable.
    pub fn manual_unstable(c_max: f64) -> Result<Self> {
        if !(c_max >= 1.0) || !c_max.is_finite() {
            return Err(QodeError::invalid("C_max", format!("must be ≥ 1, got {c_max}")));
        }
        Ok(StabilityProfile {
            classification: Classification::MarginalOrUnstable,
            kappa_p: None,
            mu_p: None,
            c_max: Some(c_max),
            alpha: None,
            mu_euclid: None,
            p: None,
            provenance: Provenance::Manual,
            warnings: Vec::new(),
        })
    }

    /// True for the stable class.
    pub fn is_stable(&self) -> bool {
        self.classification == Classification::Stable
    }

    /// (κ, μ) pair entering the bounds; the unstable class maps to (C_max², 0).
    pub fn effective_kappa_mu(&self) -> (f64, f64) {
        match self.classification {
            Classification::Stable => (self.kappa_p.unwrap_or(1.0), self.mu_p.unwrap_or(0.0)),
            Classification::MarginalOrUnstable => {
                let cm = self.c_max.unwrap_or(1.0);
                (cm * cm, 0.0)
            }
        }
    }

    /// Upper bound C(t) on ‖e^{At}‖ implied by the profile.
    pub fn envelope(&self, t: f64) -> f64 {
        let (kappa, mu) = self.effective_kappa_mu();
        kappa.sqrt() * (mu * t).exp()
    }
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(m: &ComplexMatrix) -> (Vec<f64>, ComplexMatrix) {
    let herm = (m + m.adjoint()) * c(0.5);
    let eig = SymmetricEigen::new(herm);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = ComplexMatrix::zeros(m.nrows(), m.ncols());
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Largest eigenvalue of the Hermitian part (M + M†)/2.
pub fn hermitian_part_max(m: &ComplexMatrix) -> f64 {
    let (vals, _) = hermitian_eigen(m);
    *vals.last().expect("non-empty matrix")
}

fn require_square(a: &ComplexMatrix) -> Result<()> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(QodeError::Dimension(format!(
            "generator must be square and non-empty, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

fn schur(a: &ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix)> {
    Schur::try_new(a.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .map(|s| s.unpack())
        .ok_or_else(|| QodeError::NonConvergence("complex Schur decomposition".into()))
}

/// Eigenvalues of A from its complex Schur form.
pub fn eigenvalues(a: &ComplexMatrix) -> Result<Vec<C64>> {
    require_square(a)?;
    let (_, t) = schur(a)?;
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Spectral abscissa α(A) = max Re λ_i(A).
pub fn spectral_abscissa(a: &ComplexMatrix) -> Result<f64> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Euclidean log-norm μ(A) = λ_max((A + A†)/2).
pub fn euclidean_log_norm(a: &ComplexMatrix) -> Result<f64> {
    require_square(a)?;
    Ok(hermitian_part_max(a))
}

/// Solve P A + A† P = −Q by vectorization into an N²×N² linear system.
pub fn lyapunov_solve_kronecker(a: &ComplexMatrix, q: &ComplexMatrix) -> Result<ComplexMatrix> {
    require_square(a)?;
    let n = a.nrows();
    let nn = n * n;
    let mut k = ComplexMatrix::zeros(nn, nn);
    for j in 0..n {
        for i in 0..n {
            let row = i + n * j;
            for l in 0..n {
                k[(row, i + n * l)] += a[(l, j)];
            }
            for kk in 0..n {
                k[(row, kk + n * j)] += a[(kk, i)].conj();
            }
        }
    }
    let rhs = ComplexVector::from_fn(nn, |idx, _| -q[(idx % n, idx / n)]);
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| QodeError::Singular("Lyapunov operator (A has λ_i + conj λ_j = 0)".into()))?;
    let p = ComplexMatrix::from_fn(n, n, |i, j| sol[i + n * j]);
    Ok((&p + p.adjoint()) * c(0.5))
}

/// Solve P A + A† P = −Q through the complex Schur form of A.
pub fn lyapunov_solve_schur(a: &ComplexMatrix, q: &ComplexMatrix) -> Result<ComplexMatrix> {
    require_square(a)?;
    let n = a.nrows();
    let (u, t) = schur(a)?;
    let cq = u.adjoint() * q * &u;
    let mut x = ComplexMatrix::zeros(n, n);
    let scale = operator_norm(&t)?.max(1.0);
    for j in 0..n {
        let mut rhs: ComplexVector = -cq.column(j).into_owned();
        for l in 0..j {
            let tlj = t[(l, j)];
            for i in 0..n {
                rhs[i] -= x[(i, l)] * tlj;
            }
        }
        for i in 0..n {
            let mut acc = rhs[i];
            for r in 0..i {
                acc -= t[(r, i)].conj() * x[(r, j)];
            }
            let diag = t[(i, i)].conj() + t[(j, j)];
            if diag.norm() <= 1e-14 * scale {
                return Err(QodeError::Singular(
                    "Lyapunov operator (A has λ_i + conj λ_j = 0)".into(),
                ));
            }
            x[(i, j)] = acc / diag;
        }
    }
    let p = &u * x * u.adjoint();
    Ok((&p + p.adjoint()) * c(0.5))
}

/// Solve P A + A† P = −Q, choosing the Kronecker route for small N.
pub fn lyapunov_solve(a: &ComplexMatrix, q: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.nrows() <= KRONECKER_LIMIT {
        lyapunov_solve_kronecker(a, q)
    } else {
        lyapunov_solve_schur(a, q)
    }
}

/// A positive definite P with its derived parameters.
#[derive(Debug, Clone)]
pub struct Certificate {
    pub p: ComplexMatrix,
    pub kappa_p: f64,
    pub mu_p: f64,
    pub provenance: Provenance,
}

/// κ_P and μ_P = λ_max of the Hermitian part of P^{1/2} A P^{−1/2}.
pub fn certificate_parameters(a: &ComplexMatrix, p: &ComplexMatrix) -> Result<(f64, f64)> {
    let (vals, vecs) = hermitian_eigen(p);
    let lo = vals[0];
    let hi = *vals.last().unwrap();
    if !(lo > 0.0) {
        return Err(QodeError::Singular("certificate P is not positive definite".into()));
    }
    let sqrt_d = ComplexVector::from_iterator(vals.len(), vals.iter().map(|v| c(v.sqrt())));
    let inv_sqrt_d =
        ComplexVector::from_iterator(vals.len(), vals.iter().map(|v| c(1.0 / v.sqrt())));
    let half = &vecs * ComplexMatrix::from_diagonal(&sqrt_d) * vecs.adjoint();
    let inv_half = &vecs * ComplexMatrix::from_diagonal(&inv_sqrt_d) * vecs.adjoint();
    let b = half * a * inv_half;
    Ok((hi / lo, hermitian_part_max(&b)))
}

/// One way of producing a stability certificate.
pub trait CertificateRoute: Send + Sync {
    /// Provenance tag recorded in profiles built from this route.
    fn provenance(&self) -> Provenance;
    /// Produce a certificate, or `None` when the route does not apply to A.
    fn certify(&self, a: &ComplexMatrix) -> Result<Option<Certificate>>;
}

/// P = I whenever the Euclidean log-norm is already negative.
pub struct LogNormRoute;

impl CertificateRoute for LogNormRoute {
    fn provenance(&self) -> Provenance {
        Provenance::AutoLognorm
    }
    fn certify(&self, a: &ComplexMatrix) -> Result<Option<Certificate>> {
        let mu = euclidean_log_norm(a)?;
        if mu >= 0.0 {
            return Ok(None);
        }
        Ok(Some(Certificate {
            p: identity(a.nrows()),
            kappa_p: 1.0,
            mu_p: mu,
            provenance: self.provenance(),
        }))
    }
}

/// Lyapunov solve with Q = I.
pub struct LyapunovRoute;

impl CertificateRoute for LyapunovRoute {
    fn provenance(&self) -> Provenance {
        Provenance::AutoLyapunov
    }
    fn certify(&self, a: &ComplexMatrix) -> Result<Option<Certificate>> {
        let q = identity(a.nrows());
        let p = match lyapunov_solve(a, &q) {
            Ok(p) => p,
            Err(QodeError::Singular(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let (kappa_p, mu_p) = match certificate_parameters(a, &p) {
            Ok(v) => v,
            Err(QodeError::Singular(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        Ok(Some(Certificate {
            p,
            kappa_p,
            mu_p,
            provenance: self.provenance(),
        }))
    }
}

/// P = V^{−†} V^{−1} for A = V D V⁻¹ with unit-norm eigenvector columns.
pub struct DiagonalizationRoute;

/// Unit-norm eigenvectors of A from back-substitution on its Schur form.
///
/// Returns `None` when eigenvalues are too close for the eigenvector matrix
/// to be trusted.
pub fn eigenvector_matrix(a: &ComplexMatrix) -> Result<Option<ComplexMatrix>> {
    require_square(a)?;
    let n = a.nrows();
    let (u, t) = schur(a)?;
    let scale = operator_norm(&t)?.max(f64::MIN_POSITIVE);
    let mut y = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        y[(i, i)] = c(1.0);
        for r in (0..i).rev() {
            let mut acc = C64::new(0.0, 0.0);
            for cidx in (r + 1)..=i {
                acc += t[(r, cidx)] * y[(cidx, i)];
            }
            let gap = t[(r, r)] - t[(i, i)];
            if gap.norm() <= 1e-10 * scale {
                return Ok(None);
            }
            y[(r, i)] = -acc / gap;
        }
    }
    let mut v = u * y;
    for j in 0..n {
        let norm = v.column(j).norm();
        v.column_mut(j).scale_mut(1.0 / norm);
    }
    Ok(Some(v))
}

impl CertificateRoute for DiagonalizationRoute {
    fn provenance(&self) -> Provenance {
        Provenance::AutoDiagonalization
    }
    fn certify(&self, a: &ComplexMatrix) -> Result<Option<Certificate>> {
        let Some(v) = eigenvector_matrix(a)? else {
            return Ok(None);
        };
        let sv = v.clone().svd(false, false).singular_values;
        let kappa_v = sv.max() / sv.min();
        if !(kappa_v <= MAX_KAPPA_V) {
            return Ok(None);
        }
        let Some(vinv) = v.try_inverse() else {
            return Ok(None);
        };
        let p = vinv.adjoint() * &vinv;
        let p = (&p + p.adjoint()) * c(0.5);
        let (kappa_p, mu_p) = certificate_parameters(a, &p)?;
        Ok(Some(Certificate {
            p,
            kappa_p,
            mu_p,
            provenance: self.provenance(),
        }))
    }
}

/// Registry of certificate routes in preference order.
pub fn certificate_routes() -> Registry<dyn CertificateRoute> {
    Registry::<dyn CertificateRoute>::new("certificate route")
        .with("lognorm", Box::new(LogNormRoute))
        .with("lyapunov", Box::new(LyapunovRoute))
        .with("diagonalization", Box::new(DiagonalizationRoute))
}

fn grid(t_end: f64, points: usize) -> Vec<f64> {
    (0..points)
        .map(|i| t_end * i as f64 / (points - 1) as f64)
        .collect()
}

/// max_t √κ e^{μ t}/‖e^{At}‖ over a uniform grid of [0, t_end].
pub fn envelope_slack(a: &ComplexMatrix, kappa: f64, mu: f64, t_end: f64) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for t in grid(t_end, CHECK_GRID_POINTS) {
        let norm = operator_norm(&expm(a, t)?)?;
        worst = worst.max(kappa.sqrt() * (mu * t).exp() / norm);
    }
    Ok(worst)
}

/// Check ‖e^{At}‖ ≤ √κ e^{μ t}(1 + 1e-8) on a uniform grid of [0, t_end].
pub fn envelope_holds(a: &ComplexMatrix, kappa: f64, mu: f64, t_end: f64) -> Result<bool> {
    for t in grid(t_end, CHECK_GRID_POINTS) {
        let norm = operator_norm(&expm(a, t)?)?;
        if norm > kappa.sqrt() * (mu * t).exp() * (1.0 + ENVELOPE_SLACK) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Sampled uniform envelope: 1.01 · max over a uniform grid of ‖e^{At}‖.
///
/// A heuristic estimate of C_max(T), not a certified bound.
pub fn c_max_envelope(a: &ComplexMatrix, t: f64, grid_points: usize) -> Result<f64> {
    require_square(a)?;
    if !(t > 0.0) {
        return Err(QodeError::invalid("T", "horizon must be positive"));
    }
    if grid_points < 2 {
        return Err(QodeError::invalid("grid_points", "need at least 2 points"));
    }
    let mut worst: f64 = 0.0;
    for s in grid(t, grid_points) {
        worst = worst.max(operator_norm(&expm(a, s)?)?);
    }
    Ok(C_MAX_MARGIN * worst)
}

fn check_horizon(horizon: f64, mu_p: f64) -> f64 {
    horizon.min(10.0 / mu_p.abs())
}

/// Classify A and attach the tightest available stability certificate.
///
/// `horizon` is the simulation time T: it bounds the envelope checks and is
/// the window over which C_max is sampled when A is not stable.
pub fn lyapunov_profile(
    a: &ComplexMatrix,
    mode: LyapunovMode,
    horizon: f64,
) -> Result<StabilityProfile> {
    require_square(a)?;
    if !(horizon > 0.0) {
        return Err(QodeError::invalid("T", "horizon must be positive"));
    }
    let alpha = spectral_abscissa(a)?;
    let mu_euclid = euclidean_log_norm(a)?;
    let mut warnings = Vec::new();

    if alpha < STABLE_THRESHOLD {
        let routes = certificate_routes();
        let selected: Vec<&dyn CertificateRoute> = match mode {
            LyapunovMode::Auto => routes.iter().map(|(_, r)| r).collect(),
            LyapunovMode::QIdentity => vec![routes.get("lyapunov")?],
        };
        let slack_end = horizon.min(10.0 / alpha.abs());
        let mut best: Option<(f64, Certificate)> = None;
        for route in selected {
            let Some(cert) = route.certify(a)? else {
                continue;
            };
            if !(cert.mu_p < 0.0) {
                continue;
            }
            let t_check = check_horizon(horizon, cert.mu_p);
            if !envelope_holds(a, cert.kappa_p, cert.mu_p, t_check)? {
                log::warn!("{:?} certificate failed the envelope check", cert.provenance);
                continue;
            }
            let slack = envelope_slack(a, cert.kappa_p, cert.mu_p, slack_end)?;
            log::debug!(
                "{:?}: kappa_P = {:.6e}, mu_P = {:.6e}, slack = {:.6e}",
                cert.provenance,
                cert.kappa_p,
                cert.mu_p,
                slack
            );
            if best.as_ref().map_or(true, |(s, _)| slack < *s) {
                best = Some((slack, cert));
            }
        }
        if let Some((_, cert)) = best {
            if cert.kappa_p > KAPPA_P_WARNING {
                let msg = format!("ill-conditioned certificate: kappa_P = {:.3e}", cert.kappa_p);
                log::warn!("{msg}");
                warnings.push(msg);
            }
            return Ok(StabilityProfile {
                classification: Classification::Stable,
                kappa_p: Some(cert.kappa_p),
                mu_p: Some(cert.mu_p),
                c_max: None,
                alpha: Some(alpha),
                mu_euclid: Some(mu_euclid),
                p: Some(cert.p),
                provenance: cert.provenance,
                warnings,
            });
        }
        let msg = "no stability certificate passed validation; using the sampled envelope".to_string();
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let c_max = c_max_envelope(a, horizon, CHECK_GRID_POINTS)?;
    Ok(StabilityProfile {
        classification: Classification::MarginalOrUnstable,
        kappa_p: None,
        mu_p: None,
        c_max: Some(c_max),
        alpha: Some(alpha),
        mu_euclid: Some(mu_euclid),
        p: None,
        provenance: Provenance::AutoEnvelope,
        warnings,
    })
}
