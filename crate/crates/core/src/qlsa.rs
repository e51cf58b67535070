//! Query counts of the quantum linear-system algorithm, amplification
//! rounds and the logical-qubit count.

use serde::{Deserialize, Serialize};
use std::f64::consts::{E, PI};

use crate::error::{QodeError, Result};
use crate::strategy::Registry;

/// Smallest condition number inside the formula's validity window.
pub const KAPPA_FLOOR: f64 = 3.464_101_615_137_754_6;

/// Largest ε_L accepted by the query-count formula.
pub const EPS_L_MAX: f64 = 0.2;

/// Ancilla overhead added to a and the register width.
pub const QUBIT_OVERHEAD: u64 = 13;

/// Query counts for one QLSA call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QlsaCost {
    /// Q*: expected block-encoding calls of one run.
    pub q_star: f64,
    /// Q*/(0.39 − 0.204·ε_L).
    pub q_expected: f64,
    /// Success probability floor 0.39 − 0.201·ε_L.
    pub success_floor: f64,
    /// κ actually used (after clamping to √12).
    pub kappa_used: f64,
    pub clamped: bool,
}

/// Q* = (581ω̃e/250)√(κ²+1)((133/125 + 4/(25κ^{1/3}))π ln(2κ+3) + 1)
///      + (117/50) ln²(2κ+3)(ln(451 ln²(2κ+3)/ε_L) + 1) + ω̃κ ln(32/ε_L).
pub fn qlsa_query_count(omega_tilde: f64, kappa: f64, eps_l: f64) -> Result<QlsaCost> {
    if !(eps_l > 0.0 && eps_l <= EPS_L_MAX) {
        return Err(QodeError::invalid("eps_L", format!("must lie in (0, {EPS_L_MAX}], got {eps_l}")));
    }
    if !(omega_tilde > 0.0) || !omega_tilde.is_finite() {
        return Err(QodeError::invalid("omega_tilde", format!("must be positive, got {omega_tilde}")));
    }
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(QodeError::invalid("kappa_L", format!("must be positive and finite, got {kappa}")));
    }
    let clamped = kappa < KAPPA_FLOOR;
    if clamped {
        log::warn!("kappa_L = {kappa:.4} below √12; clamped to √12");
    }
    let k = kappa.max(KAPPA_FLOOR);
    let l = (2.0 * k + 3.0).ln();
    let first = 581.0 * omega_tilde * E / 250.0
        * (k * k + 1.0).sqrt()
        * ((133.0 / 125.0 + 4.0 / (25.0 * k.cbrt())) * PI * l + 1.0);
    let second = 117.0 / 50.0 * l * l * ((451.0 * l * l / eps_l).ln() + 1.0);
    let third = omega_tilde * k * (32.0 / eps_l).ln();
    let q_star = first + second + third;
    let divisor = 0.39 - 0.204 * eps_l;
    if !(divisor > 0.0) {
        return Err(QodeError::invalid("eps_L", "success divisor is not positive"));
    }
    Ok(QlsaCost {
        q_star,
        q_expected: q_star / divisor,
        success_floor: 0.39 - 0.201 * eps_l,
        kappa_used: k,
        clamped,
    })
}

/// Strategy for boosting a post-selection with success probability Pr.
pub trait Amplification: Send + Sync {
    /// Circuit invocations needed per successful outcome.
    fn rounds(&self, pr_lower: f64) -> f64;
}

/// Sample until success: 1/Pr expected rounds.
pub struct RepeatUntilSuccess;
/// Amplitude amplification: 2j+1 invocations, j = max(0, ⌈π/(4 arcsin√Pr) − 1/2⌉).
pub struct GroverAmplification;

impl Amplification for RepeatUntilSuccess {
    fn rounds(&self, pr_lower: f64) -> f64 {
        1.0 / pr_lower
    }
}

impl Amplification for GroverAmplification {
    fn rounds(&self, pr_lower: f64) -> f64 {
        let theta = pr_lower.min(1.0).sqrt().asin();
        let j = (PI / (4.0 * theta) - 0.5).ceil().max(0.0);
        2.0 * j + 1.0
    }
}

/// Amplification mode identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmplificationMode {
    #[default]
    Repeat,
    Grover,
}

impl AmplificationMode {
    /// Registry name.
    pub fn name(&self) -> &'static str {
        match self {
            AmplificationMode::Repeat => "repeat",
            AmplificationMode::Grover => "grover",
        }
    }
}

/// Registry of amplification strategies.
pub fn amplification_modes() -> Registry<dyn Amplification> {
    Registry::<dyn Amplification>::new("amplification mode")
        .with("repeat", Box::new(RepeatUntilSuccess))
        .with("grover", Box::new(GroverAmplification))
}

/// Rounds for the named mode.
pub fn amplification_rounds(pr_lower: f64, mode: AmplificationMode) -> Result<f64> {
    if !(pr_lower > 0.0 && pr_lower <= 1.0) {
        return Err(QodeError::invalid("pr_lower", format!("must lie in (0, 1], got {pr_lower}")));
    }
    Ok(amplification_modes().get(mode.name())?.rounds(pr_lower))
}

fn ceil_log2(x: u128) -> u64 {
    if x <= 1 {
        0
    } else {
        (128 - (x - 1).leading_zeros()) as u64
    }
}

/// a + 13 + ⌈log₂(((M+1)(k+1) + p)·N)⌉.
pub fn qubit_count(a: u64, steps: u64, k: u64, p: u64, n: u64) -> Result<u64> {
    if n == 0 {
        return Err(QodeError::invalid("N", "dimension must be positive"));
    }
    let blocks = (steps as u128 + 1)
        .checked_mul(k as u128 + 1)
        .and_then(|v| v.checked_add(p as u128))
        .and_then(|v| v.checked_mul(n as u128))
        .ok_or_else(|| QodeError::invalid("M", "register size overflows"))?;
    Ok(a + QUBIT_OVERHEAD + ceil_log2(blocks))
}
