//! Truncated-Taylor time stepping: the polynomials T_k and S_k, choice of
//! the truncation order k under the multiplicative or additive error
//! scheme, the discrete trajectory and measured-versus-bounded errors.

use serde::{Deserialize, Serialize};
use std::f64::consts::E;

use crate::bounds::Target;
use crate::error::{QodeError, Result};
use crate::numerics::{c, expm, identity, operator_norm, ComplexMatrix, ComplexVector};
use crate::strategy::Registry;

/// Largest k considered by the exact factorial search.
pub const EXACT_SEARCH_LIMIT: usize = 500;

/// Uniform time grid t_m = m·h, m = 0..=M.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub h: f64,
    pub steps: u64,
    pub t: f64,
}

impl TimeGrid {
    /// Grid with `steps` steps of size `h`.
    pub fn new(h: f64, steps: u64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(QodeError::invalid("h", format!("step must be positive, got {h}")));
        }
        if steps == 0 {
            return Err(QodeError::invalid("M", "need at least one step"));
        }
        Ok(TimeGrid {
            h,
            steps,
            t: h * steps as f64,
        })
    }

    /// Grid covering [0, T]; a non-integral T/h is rounded up and T adjusted.
    pub fn from_horizon(t: f64, h: f64) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(QodeError::invalid("T", format!("horizon must be positive, got {t}")));
        }
        if !(h > 0.0) || !h.is_finite() {
            return Err(QodeError::invalid("h", format!("step must be positive, got {h}")));
        }
        let ratio = t / h;
        let nearest = ratio.round();
        let steps = if (ratio - nearest).abs() <= 1e-9 * ratio.max(1.0) {
            nearest
        } else {
            ratio.ceil()
        };
        let steps = steps.max(1.0);
        if steps > 9.0e15 {
            return Err(QodeError::invalid("T", "T/h exceeds the supported step count"));
        }
        let grid = TimeGrid::new(h, steps as u64)?;
        if (grid.t - t).abs() > 1e-12 * t {
            log::info!("T adjusted from {t} to {} so that T/h is integral", grid.t);
        }
        Ok(grid)
    }

    /// M as a float.
    pub fn m(&self) -> f64 {
        self.steps as f64
    }
}

/// Error scheme identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeKind {
    Multiplicative,
    Additive,
}

impl SchemeKind {
    /// Short registry name.
    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::Multiplicative => "mult",
            SchemeKind::Additive => "add",
        }
    }

    /// The strategy object implementing this scheme.
    pub fn strategy(&self) -> &'static dyn ErrorScheme {
        match self {
            SchemeKind::Multiplicative => &Multiplicative,
            SchemeKind::Additive => &Additive,
        }
    }
}

/// Bounds and samples of the solution norm ‖x(t)‖.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolutionNormBounds {
    pub x_min: Option<f64>,
    pub x_max: Option<f64>,
    pub x_rms: Option<f64>,
    pub x_final: Option<f64>,
    pub b_norm: f64,
    pub gbar_times: Option<f64>,
    pub gbar_plus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<Vec<f64>>,
}

impl SolutionNormBounds {
    /// Derive all norm quantities from samples ‖x(mh)‖, m = 0..=M.
    ///
    /// `eps_prime` is the additive error level entering ḡ_+. The rms value
    /// uses the M+1 divisor, which lower-bounds the M-divisor definition.
    pub fn from_samples(samples: Vec<f64>, b_norm: f64, eps_prime: f64) -> Result<Self> {
        if samples.len() < 2 {
            return Err(QodeError::invalid("samples", "need at least two norm samples"));
        }
        if samples.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(QodeError::invalid("samples", "norm samples must be finite and ≥ 0"));
        }
        let count = samples.len() as f64;
        let x_min = samples.iter().cloned().fold(f64::INFINITY, f64::min);
        let x_max = samples.iter().cloned().fold(0.0, f64::max);
        let sum_sq: f64 = samples.iter().map(|s| s * s).sum();
        let x_rms = (sum_sq / count).sqrt();
        let x_final = *samples.last().unwrap();
        let gbar_times = gbar_times(&samples);
        let gbar_plus = gbar_plus(&samples, eps_prime);
        Ok(SolutionNormBounds {
            x_min: Some(x_min),
            x_max: Some(x_max),
            x_rms: Some(x_rms),
            x_final: Some(x_final),
            b_norm,
            gbar_times,
            gbar_plus,
            samples: Some(samples),
        })
    }

    /// The Hamiltonian special case: unit norm throughout, no forcing.
    pub fn unit() -> Self {
        SolutionNormBounds {
            x_min: Some(1.0),
            x_max: Some(1.0),
            x_rms: Some(1.0),
            x_final: Some(1.0),
            b_norm: 0.0,
            gbar_times: Some(1.0),
            gbar_plus: Some(1.0),
            samples: None,
        }
    }
}

/// ḡ_× = √((1/(M+1)) Σ ‖x(mh)‖²) / ‖x(T)‖.
pub fn gbar_times(samples: &[f64]) -> Option<f64> {
    let last = *samples.last()?;
    if !(last > 0.0) {
        return None;
    }
    let mean: f64 = samples.iter().map(|s| (s / last).powi(2)).sum::<f64>() / samples.len() as f64;
    Some(mean.sqrt())
}

/// ḡ_+ with the ((1−ε')/(1+ε'))² factor inside the average.
pub fn gbar_plus(samples: &[f64], eps_prime: f64) -> Option<f64> {
    let last = *samples.last()?;
    if !(last > eps_prime) || !(eps_prime < 1.0) {
        return None;
    }
    let ratio = ((1.0 - eps_prime) / (1.0 + eps_prime)).powi(2);
    let den = (last - eps_prime).powi(2);
    let mean: f64 =
        samples.iter().map(|s| ratio * (s + eps_prime).powi(2) / den).sum::<f64>() / samples.len() as f64;
    Some(mean.sqrt())
}

/// Per-step error scheme: fixes the s-value, the constant c, the budget
/// factor f and the ḡ variant.
pub trait ErrorScheme: Send + Sync {
    /// Identifier of the scheme.
    fn kind(&self) -> SchemeKind;
    /// ln s for the sufficient-truncation condition (k+1)! ≥ s.
    fn ln_s(&self, m: f64, t: f64, norms: &SolutionNormBounds, eps_td: f64) -> Result<f64>;
    /// Constant c appearing as (1 + ε_TD/c) in operator-growth bounds.
    fn c_constant(&self, norms: &SolutionNormBounds) -> Result<f64>;
    /// Factor f in ε_TD = ε/(8f).
    fn budget_factor(&self, target: Target, norms: &SolutionNormBounds) -> Result<f64>;
    /// The ḡ ratio matched to this scheme.
    fn gbar(&self, norms: &SolutionNormBounds) -> Option<f64>;
    /// Allowed per-step error ‖x(mh) − x^m‖ given ‖x(mh)‖.
    fn step_bound(&self, eps_td: f64, x_norm: f64) -> f64;
}

/// Errors relative to ‖x(mh)‖.
pub struct Multiplicative;
/// Absolute errors.
pub struct Additive;

fn positive(v: Option<f64>, field: &'static str) -> Result<f64> {
    match v {
        None => Err(QodeError::MissingInput(field)),
        Some(x) if x > 0.0 && x.is_finite() => Ok(x),
        Some(x) => Err(QodeError::invalid(field, format!("must be positive, got {x}"))),
    }
}

impl ErrorScheme for Multiplicative {
    fn kind(&self) -> SchemeKind {
        SchemeKind::Multiplicative
    }
    fn ln_s(&self, m: f64, t: f64, norms: &SolutionNormBounds, eps_td: f64) -> Result<f64> {
        let forcing = if norms.b_norm == 0.0 {
            match norms.x_min {
                Some(x) if x >= 0.0 => 0.0,
                Some(x) => return Err(QodeError::invalid("x_min", format!("must be ≥ 0, got {x}"))),
                None => return Err(QodeError::MissingInput("x_min")),
            }
        } else {
            (t * E * E * norms.b_norm / positive(norms.x_min, "x_min")?).ln_1p()
        };
        Ok(m.ln() + 3.0 - eps_td.ln() + forcing)
    }
    fn c_constant(&self, _norms: &SolutionNormBounds) -> Result<f64> {
        Ok(1.0)
    }
    fn budget_factor(&self, _target: Target, _norms: &SolutionNormBounds) -> Result<f64> {
        Ok(1.0)
    }
    fn gbar(&self, norms: &SolutionNormBounds) -> Option<f64> {
        norms.gbar_times
    }
    fn step_bound(&self, eps_td: f64, x_norm: f64) -> f64 {
        eps_td * x_norm
    }
}

impl ErrorScheme for Additive {
    fn kind(&self) -> SchemeKind {
        SchemeKind::Additive
    }
    fn ln_s(&self, m: f64, t: f64, norms: &SolutionNormBounds, eps_td: f64) -> Result<f64> {
        let x_max = positive(norms.x_max, "x_max")?;
        Ok(m.ln() + 3.0 + x_max.ln() - eps_td.ln() + (t * E * E * norms.b_norm / x_max).ln_1p())
    }
    fn c_constant(&self, norms: &SolutionNormBounds) -> Result<f64> {
        positive(norms.x_max, "x_max")
    }
    fn budget_factor(&self, target: Target, norms: &SolutionNormBounds) -> Result<f64> {
        match target {
            Target::History => Ok(1.0 / positive(norms.x_rms, "x_rms")?),
            Target::Solution => Ok(1.0 / positive(norms.x_final, "x_final")?),
        }
    }
    fn gbar(&self, norms: &SolutionNormBounds) -> Option<f64> {
        norms.gbar_plus
    }
    fn step_bound(&self, eps_td: f64, _x_norm: f64) -> f64 {
        eps_td
    }
}

/// Registry of error schemes.
pub fn error_schemes() -> Registry<dyn ErrorScheme> {
    Registry::<dyn ErrorScheme>::new("error scheme")
        .with("mult", Box::new(Multiplicative))
        .with("add", Box::new(Additive))
}

/// Rule turning ln s into a truncation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderRule {
    /// k = ⌈(3/2·ln s + 1)/ln(1 + ln s/2) − 1⌉.
    #[default]
    Formula,
    /// Smallest k with (k+1)! ≥ s.
    ExactSearch,
}

/// Truncation order and the data it was derived from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationPlan {
    pub scheme: SchemeKind,
    pub eps_td: f64,
    pub ln_s: f64,
    pub k: usize,
    pub c_scheme: f64,
    pub rule: OrderRule,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// ln(n!) by direct summation.
pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|j| (j as f64).ln()).sum()
}

/// Closed-form order k = ⌈(3/2·ln s + 1)/ln(1 + ln s/2) − 1⌉; k = 1 when s ≤ e.
pub fn order_from_ln_s(ln_s: f64) -> usize {
    if !(ln_s > 1.0) {
        return 1;
    }
    let raw = (1.5 * ln_s + 1.0) / (0.5 * ln_s).ln_1p() - 1.0;
    (raw.ceil() as usize).max(1)
}

/// Smallest k ≥ 0 with ln((k+1)!) ≥ ln s.
pub fn order_exact_from_ln_s(ln_s: f64) -> Result<usize> {
    let mut acc = 0.0;
    for k in 0..=EXACT_SEARCH_LIMIT {
        acc += ((k + 1) as f64).ln();
        if acc >= ln_s {
            return Ok(k);
        }
    }
    Err(QodeError::NonConvergence(format!(
        "no k ≤ {EXACT_SEARCH_LIMIT} satisfies (k+1)! ≥ s"
    )))
}

/// Choose k for the given scheme so that each step meets ε_TD.
///
/// ln s is assembled in log space so that astronomically large s never
/// has to be represented.
pub fn select_truncation(
    scheme: SchemeKind,
    steps: f64,
    t: f64,
    norms: &SolutionNormBounds,
    eps_td: f64,
    rule: OrderRule,
) -> Result<TruncationPlan> {
    if !(eps_td > 0.0 && eps_td <= 1.0) {
        return Err(QodeError::invalid("eps_td", format!("must lie in (0, 1], got {eps_td}")));
    }
    if !(steps >= 1.0) {
        return Err(QodeError::invalid("M", "need at least one step"));
    }
    if !(norms.b_norm >= 0.0) {
        return Err(QodeError::invalid("b_norm", "must be ≥ 0"));
    }
    let strategy = scheme.strategy();
    let ln_s = strategy.ln_s(steps, t, norms, eps_td)?;
    let c_scheme = strategy.c_constant(norms)?;
    let mut warnings = Vec::new();
    if ln_s <= 1.0 {
        let msg = format!("s = e^{ln_s:.3} ≤ e; using k = 1");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let k = match rule {
        OrderRule::Formula => order_from_ln_s(ln_s),
        OrderRule::ExactSearch => order_exact_from_ln_s(ln_s)?.max(1),
    };
    Ok(TruncationPlan {
        scheme,
        eps_td,
        ln_s,
        k,
        c_scheme,
        rule,
        warnings,
    })
}

/// T_k(Ah) and S_k(Ah) with an empty-sum flag for k = 0.
#[derive(Debug, Clone)]
pub struct TaylorOperators {
    pub tk: ComplexMatrix,
    pub sk: ComplexMatrix,
    pub sk_empty: bool,
}

/// T_k(Ah) = Σ_{j=0}^k (Ah)^j/j! and S_k(Ah) = Σ_{j=1}^k (Ah)^{j−1}/j!, by Horner.
pub fn taylor_operators(a: &ComplexMatrix, h: f64, k: usize) -> Result<TaylorOperators> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(QodeError::Dimension("generator must be square".into()));
    }
    let n = a.nrows();
    let ah = a * c(h);
    let mut tk = identity(n);
    for j in (1..=k).rev() {
        tk = identity(n) + &ah * tk * c(1.0 / j as f64);
    }
    if k == 0 {
        log::warn!("S_0 is an empty sum; returning the zero matrix");
        return Ok(TaylorOperators {
            tk,
            sk: ComplexMatrix::zeros(n, n),
            sk_empty: true,
        });
    }
    let mut sk = identity(n) * c(1.0 / k as f64);
    for j in (1..k).rev() {
        sk = (identity(n) + &ah * sk) * c(1.0 / j as f64);
    }
    Ok(TaylorOperators {
        tk,
        sk,
        sk_empty: false,
    })
}

fn check_system(a: &ComplexMatrix, b: &ComplexVector, x0: &ComplexVector) -> Result<()> {
    let n = a.nrows();
    if a.ncols() != n || n == 0 {
        return Err(QodeError::Dimension("generator must be square".into()));
    }
    if b.len() != n || x0.len() != n {
        return Err(QodeError::Dimension(format!(
            "generator is {n}x{n} but b has {} and x0 has {} entries",
            b.len(),
            x0.len()
        )));
    }
    Ok(())
}

/// x^m = T_k(Ah) x^{m−1} + h S_k(Ah) b for m = 1..=M, starting from x⁰ = x0.
///
/// This is exactly the recursion encoded by the linear embedding, whose
/// solution blocks reproduce it.
pub fn discrete_trajectory(
    a: &ComplexMatrix,
    b: &ComplexVector,
    x0: &ComplexVector,
    grid: &TimeGrid,
    k: usize,
) -> Result<Vec<ComplexVector>> {
    check_system(a, b, x0)?;
    let ops = taylor_operators(a, grid.h, k)?;
    let drift = &ops.sk * b * c(grid.h);
    let mut out = Vec::with_capacity(grid.steps as usize + 1);
    out.push(x0.clone());
    for m in 1..=grid.steps as usize {
        let next = &ops.tk * &out[m - 1] + &drift;
        out.push(next);
    }
    Ok(out)
}

/// Exact solution samples x(mh), m = 0..=M, by repeated application of
/// the one-step exact propagator of the augmented system.
pub fn exact_trajectory(
    a: &ComplexMatrix,
    b: &ComplexVector,
    x0: &ComplexVector,
    grid: &TimeGrid,
) -> Result<Vec<ComplexVector>> {
    check_system(a, b, x0)?;
    let n = a.nrows();
    let mut aug = ComplexMatrix::zeros(n + 1, n + 1);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    aug.view_mut((0, n), (n, 1)).copy_from(b);
    let step = expm(&aug, grid.h)?;
    let prop = step.view((0, 0), (n, n)).into_owned();
    let drift: ComplexVector = step.view((0, n), (n, 1)).column(0).into_owned();
    let mut out = Vec::with_capacity(grid.steps as usize + 1);
    out.push(x0.clone());
    for m in 1..=grid.steps as usize {
        let next = &prop * &out[m - 1] + &drift;
        out.push(next);
    }
    Ok(out)
}

/// One row of the truncation-error table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub m: usize,
    pub abs_err: f64,
    pub rel_err: f64,
    pub bound: f64,
    pub tk_power_norm: f64,
    pub exp_norm: f64,
    pub power_bound: f64,
}

/// Measured truncation errors against the exact solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub rows: Vec<ErrorRow>,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub errors_within_bound: bool,
    pub powers_within_bound: bool,
}

/// Per-step errors ‖x^m − x(mh)‖ versus the scheme bound, and
/// ‖T_k(Ah)^m‖ versus ‖e^{Ahm}‖(1 + ε_TD/c).
pub fn truncation_error_report(
    a: &ComplexMatrix,
    b: &ComplexVector,
    x0: &ComplexVector,
    grid: &TimeGrid,
    plan: &TruncationPlan,
) -> Result<TruncationReport> {
    let approx = discrete_trajectory(a, b, x0, grid, plan.k)?;
    let exact = exact_trajectory(a, b, x0, grid)?;
    let ops = taylor_operators(a, grid.h, plan.k)?;
    let step = expm(a, grid.h)?;
    let n = a.nrows();
    let strategy = plan.scheme.strategy();
    let mut tk_pow = identity(n);
    let mut exp_pow = identity(n);
    let mut rows = Vec::with_capacity(approx.len());
    let mut max_abs: f64 = 0.0;
    let mut max_rel: f64 = 0.0;
    let mut errors_ok = true;
    let mut powers_ok = true;
    for (m, (xa, xe)) in approx.iter().zip(exact.iter()).enumerate() {
        if m > 0 {
            tk_pow = &ops.tk * tk_pow;
            exp_pow = &step * exp_pow;
        }
        let abs_err = (xa - xe).norm();
        let xnorm = xe.norm();
        let rel_err = if xnorm > 0.0 { abs_err / xnorm } else if abs_err == 0.0 { 0.0 } else { f64::INFINITY };
        let bound = strategy.step_bound(plan.eps_td, xnorm);
        let tk_power_norm = operator_norm(&tk_pow)?;
        let exp_norm = operator_norm(&exp_pow)?;
        let power_bound = exp_norm * (1.0 + plan.eps_td / plan.c_scheme);
        errors_ok &= abs_err <= bound * (1.0 + 1e-9) + 1e-15 * xnorm.max(x0.norm());
        powers_ok &= tk_power_norm <= power_bound * (1.0 + 1e-12);
        max_abs = max_abs.max(abs_err);
        max_rel = max_rel.max(rel_err);
        rows.push(ErrorRow {
            m,
            abs_err,
            rel_err,
            bound,
            tk_power_norm,
            exp_norm,
            power_bound,
        });
    }
    Ok(TruncationReport {
        rows,
        max_abs_err: max_abs,
        max_rel_err: max_rel,
        errors_within_bound: errors_ok,
        powers_within_bound: powers_ok,
    })
}

/// ‖|z⟩ − |z̃⟩‖ between the normalized concatenations of two trajectories.
pub fn normalized_history_distance(a: &[ComplexVector], b: &[ComplexVector]) -> f64 {
    let na: f64 = a.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
    a.iter()
        .zip(b)
        .map(|(x, y)| (x / c(na) - y / c(nb)).norm_squared())
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{propagate_exact, sample, C64};
    use crate::stability::spectral_abscissa;
    use proptest::prelude::*;

    fn mult_norms() -> SolutionNormBounds {
        SolutionNormBounds {
            x_min: Some(1.0),
            x_max: Some(1.0),
            ..Default::default()
        }
    }

    #[test]
    fn golden_truncation_orders() {
        let norms = mult_norms();
        let plan =
            select_truncation(SchemeKind::Multiplicative, 1e6, 1e6, &norms, 1e-9, OrderRule::Formula)
                .unwrap();
        assert_eq!(plan.k, 19);
        let raw = (1.5 * plan.ln_s + 1.0) / (0.5 * plan.ln_s).ln_1p() - 1.0;
        assert!((raw - 18.2).abs() < 0.05);
        let add =
            select_truncation(SchemeKind::Additive, 1e6, 1e6, &norms, 1e-9, OrderRule::Formula).unwrap();
        assert_eq!(add.k, 19);
        let exact = select_truncation(
            SchemeKind::Multiplicative,
            1e6,
            1e6,
            &norms,
            1e-9,
            OrderRule::ExactSearch,
        )
        .unwrap();
        assert_eq!(exact.k, 18);
    }

    #[test]
    fn missing_x_min_is_reported() {
        let norms = SolutionNormBounds::default();
        let err =
            select_truncation(SchemeKind::Multiplicative, 10.0, 10.0, &norms, 1e-3, OrderRule::Formula)
                .unwrap_err();
        assert_eq!(err, QodeError::MissingInput("x_min"));
    }

    #[test]
    fn degenerate_s_gives_order_one() {
        let norms = SolutionNormBounds {
            x_max: Some(1e-3),
            ..Default::default()
        };
        let plan =
            select_truncation(SchemeKind::Additive, 1.0, 1.0, &norms, 1.0, OrderRule::Formula).unwrap();
        assert_eq!(plan.k, 1);
        assert!(!plan.warnings.is_empty());
    }

    #[test]
    fn taylor_trivial_cases() {
        let z = ComplexMatrix::zeros(3, 3);
        let ops = taylor_operators(&z, 0.5, 4).unwrap();
        assert_eq!(ops.tk, identity(3));
        assert_eq!(ops.sk, identity(3));
        let a = sample::matrix(&mut sample::rng(2), 3, 3);
        let ops = taylor_operators(&a, 0.3, 1).unwrap();
        assert!((&ops.tk - (identity(3) + &a * c(0.3))).norm() < 1e-15);
        assert!((&ops.sk - identity(3)).norm() < 1e-15);
        let ops = taylor_operators(&a, 0.3, 0).unwrap();
        assert!(ops.sk_empty);
    }

    #[test]
    fn taylor_saturates_to_expm() {
        let a = sample::matrix(&mut sample::rng(6), 4, 4);
        let a = &a * c(1.0 / operator_norm(&a).unwrap());
        let ops = taylor_operators(&a, 1.0, 60).unwrap();
        let e = expm(&a, 1.0).unwrap();
        assert!(operator_norm(&(&ops.tk - &e)).unwrap() < 1e-12 * operator_norm(&e).unwrap());
    }

    #[test]
    fn trajectory_trivial_cases() {
        let z = ComplexMatrix::zeros(2, 2);
        let x0 = ComplexVector::from_vec(vec![c(1.0), C64::new(0.0, 2.0)]);
        let grid = TimeGrid::new(0.25, 8).unwrap();
        let traj = discrete_trajectory(&z, &ComplexVector::zeros(2), &x0, &grid, 3).unwrap();
        assert!(traj.iter().all(|x| *x == x0));
        let b = ComplexVector::from_vec(vec![c(0.5), c(-1.0)]);
        let traj = discrete_trajectory(&z, &b, &x0, &grid, 3).unwrap();
        for (m, x) in traj.iter().enumerate() {
            assert!((x - (&x0 + &b * c(m as f64 * 0.25))).norm() < 1e-14);
        }
    }

    fn stable_system(seed: u64, n: usize) -> (ComplexMatrix, ComplexVector, ComplexVector) {
        let mut r = sample::rng(seed);
        let x = sample::matrix(&mut r, n, n);
        let a = &x - identity(n) * c(spectral_abscissa(&x).unwrap() + 0.2);
        let a = &a * c(1.0 / operator_norm(&a).unwrap());
        let b = sample::vector(&mut r, n) * c(0.3);
        let x0 = sample::unit_vector(&mut r, n);
        (a, b, x0)
    }

    #[test]
    fn trajectory_within_plan_tolerance() {
        let (a, b, x0) = stable_system(31, 3);
        let grid = TimeGrid::new(1.0, 50).unwrap();
        let exact = exact_trajectory(&a, &b, &x0, &grid).unwrap();
        let samples: Vec<f64> = exact.iter().map(|v| v.norm()).collect();
        let eps = 1e-6;
        let norms = SolutionNormBounds::from_samples(samples, b.norm(), eps).unwrap();
        let traj = discrete_trajectory(&a, &b, &x0, &grid, 25).unwrap();
        let worst = traj
            .iter()
            .zip(&exact)
            .map(|(x, y)| (x - y).norm() / y.norm())
            .fold(0.0, f64::max);
        assert!(worst <= eps);
        let plan = select_truncation(
            SchemeKind::Multiplicative,
            grid.m(),
            grid.t,
            &norms,
            eps,
            OrderRule::Formula,
        )
        .unwrap();
        let rep = truncation_error_report(&a, &b, &x0, &grid, &plan).unwrap();
        assert!(rep.errors_within_bound && rep.powers_within_bound);
        assert!(rep.max_rel_err <= eps);
    }

    #[test]
    fn exact_trajectory_matches_direct_propagation() {
        let (a, b, x0) = stable_system(8, 3);
        let grid = TimeGrid::new(0.5, 40).unwrap();
        let traj = exact_trajectory(&a, &b, &x0, &grid).unwrap();
        for m in [1usize, 17, 40] {
            let direct = propagate_exact(&a, &b, &x0, m as f64 * 0.5).unwrap();
            assert!((&traj[m] - &direct).norm() <= 1e-12 * direct.norm().max(1.0));
        }
    }

    #[test]
    fn zero_generator_report_is_exact() {
        let z = ComplexMatrix::zeros(2, 2);
        let x0 = ComplexVector::from_vec(vec![c(1.0), c(0.0)]);
        let grid = TimeGrid::new(1.0, 5).unwrap();
        let plan =
            select_truncation(SchemeKind::Multiplicative, 5.0, 5.0, &mult_norms(), 1e-8, OrderRule::Formula)
                .unwrap();
        let rep = truncation_error_report(&z, &ComplexVector::zeros(2), &x0, &grid, &plan).unwrap();
        assert!(rep.rows.iter().all(|r| r.abs_err == 0.0));
    }

    #[test]
    fn normalized_history_error_within_twice_eps() {
        let (a, _, x0) = stable_system(19, 3);
        let b = ComplexVector::zeros(3);
        let grid = TimeGrid::new(1.0, 30).unwrap();
        let exact = exact_trajectory(&a, &b, &x0, &grid).unwrap();
        let samples: Vec<f64> = exact.iter().map(|v| v.norm()).collect();
        let norms = SolutionNormBounds::from_samples(samples, 0.0, 0.0).unwrap();
        let eps = 1e-5;
        let plan = select_truncation(
            SchemeKind::Multiplicative,
            grid.m(),
            grid.t,
            &norms,
            eps,
            OrderRule::Formula,
        )
        .unwrap();
        let approx = discrete_trajectory(&a, &b, &x0, &grid, plan.k).unwrap();
        assert!(normalized_history_distance(&approx, &exact) <= 2.0 * eps);
    }

    #[test]
    fn norm_bounds_from_samples() {
        let s = vec![2.0, 1.0, 0.5, 1.0];
        let nb = SolutionNormBounds::from_samples(s.clone(), 0.0, 0.0).unwrap();
        assert_eq!(nb.x_min, Some(0.5));
        assert_eq!(nb.x_max, Some(2.0));
        let mean_sq = s.iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(nb.x_rms.unwrap() <= mean_sq.sqrt() + 1e-15);
        let gt = (mean_sq / 1.0).sqrt();
        assert!((nb.gbar_times.unwrap() - gt).abs() < 1e-12);
        assert!((nb.gbar_plus.unwrap() - gt).abs() < 1e-12);
    }

    #[test]
    fn grid_rounding() {
        let g = TimeGrid::from_horizon(0.7, 0.1).unwrap();
        assert_eq!(g.steps, 7);
        let g = TimeGrid::from_horizon(1.05, 0.1).unwrap();
        assert_eq!(g.steps, 11);
        assert!((g.t - 1.1).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn order_monotone(ln_m in 0.0f64..35.0, e1 in -30.0f64..0.0, d in 0.0f64..5.0) {
            let norms = mult_norms();
            let m = ln_m.exp().max(1.0);
            let big = select_truncation(SchemeKind::Multiplicative, m, m, &norms, 10f64.powf(e1), OrderRule::Formula).unwrap();
            let small_eps = select_truncation(SchemeKind::Multiplicative, m, m, &norms, 10f64.powf(e1 - d), OrderRule::Formula).unwrap();
            let larger_m = select_truncation(SchemeKind::Multiplicative, m * (1.0 + d), m, &norms, 10f64.powf(e1), OrderRule::Formula).unwrap();
            prop_assert!(small_eps.k >= big.k);
            prop_assert!(larger_m.k >= big.k);
        }

        #[test]
        fn formula_order_is_sufficient(ln_s in 1.0f64..2000.0) {
            let k = order_from_ln_s(ln_s);
            prop_assert!(ln_factorial(k + 1) >= ln_s);
            prop_assert!(order_exact_from_ln_s(ln_s).unwrap() <= k);
        }

        #[test]
        fn saturated_scheme_matches_exact(seed in 0u64..10_000) {
            let (a, b, x0) = stable_system(seed, 3);
            let grid = TimeGrid::new(1.0, 20).unwrap();
            let approx = discrete_trajectory(&a, &b, &x0, &grid, 60).unwrap();
            let exact = exact_trajectory(&a, &b, &x0, &grid).unwrap();
            for (x, y) in approx.iter().zip(&exact) {
                prop_assert!((x - y).norm() <= 1e-10 * y.norm());
            }
        }
    }
}
