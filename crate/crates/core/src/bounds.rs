//! Closed-form analytic quantities: g(k), the geometric sums ξ_μ and
//! geom, condition-number bounds for the linear embedding, success
//! probability lower bounds, the block-encoding scale ω̃ and the split of
//! the total error budget.

use serde::{Deserialize, Serialize};
use std::f64::consts::E;

use crate::discretization::{SchemeKind, SolutionNormBounds};
use crate::error::{QodeError, Result};
use crate::stability::StabilityProfile;

/// The modified Bessel value I₀(2) = Σ_{j≥0} 1/(j!)².
pub const I0_2: f64 = 2.279_585_302_336_067;

/// K constant of the history-state bound for inhomogeneous systems.
pub const K_INHOMOGENEOUS: f64 = (3.0 - E) * (3.0 - E);

/// Largest M for which idling plans with arbitrary p_m are summed directly.
pub const GENERAL_DIRECT_LIMIT: usize = 1_000_000;

/// Which state the algorithm outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    /// The normalized history |x⁰,…,x^M⟩.
    #[default]
    History,
    /// The normalized solution at the final time.
    Solution,
}

/// g(k) = Σ_{s=1}^k (s! Σ_{j=s}^k 1/j!)².
pub fn g_of_k(k: usize) -> f64 {
    let mut total = 0.0;
    for s in 1..=k {
        let mut inner = 0.0;
        let mut ratio = 1.0;
        for j in s..=k {
            if j > s {
                ratio /= j as f64;
            }
            inner += ratio;
        }
        total += inner * inner;
    }
    total
}

/// The cap e·k on g(k).
pub fn g_cap(k: usize) -> f64 {
    E * k as f64
}

/// φ(x) = eˣ − 1 − x without cancellation near 0.
fn phi(x: f64) -> f64 {
    if x.abs() < 0.1 {
        let mut term = x * x / 2.0;
        let mut sum = term;
        for n in 3..30 {
            term *= x / n as f64;
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        x.exp_m1() - x
    }
}

/// ξ_μ(M) = Σ_{m=0}^M Σ_{r=0}^m e^{2μh r}, from its closed form.
///
/// With u = 2μh and N = M+2 the numerator equals φ(Nu) − Nφ(u) for
/// φ(x) = eˣ − 1 − x, and the denominator is expm1(u)².
pub fn xi_mu(mu_h: f64, m: f64) -> f64 {
    let u = 2.0 * mu_h.min(0.0);
    if u == 0.0 {
        return (m + 1.0) * (m + 2.0) / 2.0;
    }
    let n = m + 2.0;
    let nu = n * u;
    let num = if nu.abs() < 0.1 {
        let mut sum = 0.0;
        let mut un = u;
        let mut nn = n;
        let mut fact = 1.0;
        for j in 2..40 {
            un *= u;
            nn *= n;
            fact *= j as f64;
            let term = (nn - n) * un / fact;
            sum += term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        phi(nu) - n * phi(u)
    };
    let den = u.exp_m1().powi(2);
    num / den
}

/// geom(μ) = Σ_{l=0}^M e^{2μh l} = expm1((M+1)u)/expm1(u), limit M+1.
pub fn geom(mu_h: f64, m: f64) -> f64 {
    let u = 2.0 * mu_h.min(0.0);
    if u == 0.0 {
        return m + 1.0;
    }
    ((m + 1.0) * u).exp_m1() / u.exp_m1()
}

/// Inputs shared by the condition-number and success-probability bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// True when C(t) = √κ_P e^{μ_P t}; false when C(t) = C_max.
    pub stable: bool,
    pub kappa_p: f64,
    pub mu_p: f64,
    pub c_max: f64,
    pub eps_td: f64,
    /// Scheme constant c (1 for ×, x_max for +).
    pub c_scheme: f64,
    pub k: usize,
    /// Number of time steps M.
    pub m: f64,
    pub h: f64,
    pub homogeneous: bool,
    pub scheme: SchemeKind,
    /// Scheme-matched average norm ratio ḡ.
    pub gbar: Option<f64>,
    /// ‖A‖.
    pub a_norm: f64,
    /// max{max_t ‖b‖/‖x(t)‖, T}, for the history success probability.
    pub lambda_prob: Option<f64>,
}

impl BoundInputs {
    /// Inputs for a profile with everything else at neutral defaults.
    pub fn from_profile(profile: &StabilityProfile, k: usize, m: f64, h: f64) -> Self {
        BoundInputs {
            stable: profile.is_stable(),
            kappa_p: profile.kappa_p.unwrap_or(1.0),
            mu_p: profile.mu_p.unwrap_or(0.0),
            c_max: profile.c_max.unwrap_or(1.0),
            k,
            m,
            h,
            ..Self::neutral()
        }
    }

    /// Stable inputs with κ_P, μ_P·h = `mu_h` and h = 1.
    pub fn stable(kappa_p: f64, mu_h: f64, k: usize, m: f64, eps_td: f64) -> Self {
        BoundInputs {
            stable: true,
            kappa_p,
            mu_p: mu_h,
            k,
            m,
            eps_td,
            ..Self::neutral()
        }
    }

    /// Unstable inputs with constant envelope C_max and h = 1.
    pub fn unstable(c_max: f64, k: usize, m: f64, eps_td: f64) -> Self {
        BoundInputs {
            stable: false,
            c_max,
            k,
            m,
            eps_td,
            ..Self::neutral()
        }
    }

    fn neutral() -> Self {
        BoundInputs {
            stable: true,
            kappa_p: 1.0,
            mu_p: 0.0,
            c_max: 1.0,
            eps_td: 0.0,
            c_scheme: 1.0,
            k: 1,
            m: 1.0,
            h: 1.0,
            homogeneous: true,
            scheme: SchemeKind::Multiplicative,
            gbar: None,
            a_norm: 1.0,
            lambda_prob: None,
        }
    }

    /// Fill scheme, ε_TD, c and ḡ from a norm record.
    pub fn with_scheme(mut self, scheme: SchemeKind, eps_td: f64, norms: &SolutionNormBounds) -> Result<Self> {
        let strategy = scheme.strategy();
        self.scheme = scheme;
        self.eps_td = eps_td;
        self.c_scheme = strategy.c_constant(norms)?;
        self.gbar = strategy.gbar(norms);
        self.homogeneous = norms.b_norm == 0.0;
        Ok(self)
    }

    fn growth(&self) -> f64 {
        (1.0 + self.eps_td / self.c_scheme).powi(2)
    }

    /// Squared envelope C(t)².
    pub fn envelope_sq(&self, t: f64) -> f64 {
        if self.stable {
            self.kappa_p * (2.0 * self.mu_p.min(0.0) * t).exp()
        } else {
            self.c_max * self.c_max
        }
    }

    fn validate(&self) -> Result<()> {
        let fields = [
            ("kappa_P", self.kappa_p),
            ("C_max", self.c_max),
            ("eps_td", self.eps_td),
            ("c", self.c_scheme),
            ("M", self.m),
            ("h", self.h),
        ];
        for (name, v) in fields {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(QodeError::invalid(name, format!("must be finite and ≥ 0, got {v}")));
            }
        }
        if !(self.c_scheme > 0.0) {
            return Err(QodeError::invalid("c", "scheme constant must be positive"));
        }
        if self.mu_p > 0.0 {
            return Err(QodeError::invalid("mu_P", format!("must be ≤ 0, got {}", self.mu_p)));
        }
        Ok(())
    }
}

fn tail_terms(p_total: f64, p_sq_half: f64, inp: &BoundInputs) -> f64 {
    p_sq_half + (p_total + inp.m * inp.k as f64) * (I0_2 - 1.0)
}

fn norm_factor(k: usize) -> f64 {
    ((k + 1) as f64).sqrt() + 2.0
}

/// κ_L bound for an arbitrary idling plan p_0..p_M.
///
/// Plans whose only nonzero entry is p_M reduce to the closed geometric
/// form ([`kappa_bound_stable`] or [`kappa_bound_unstable`]); other plans
/// are summed directly with running prefix sums.
pub fn kappa_bound_general(inp: &BoundInputs, idling: &[u64]) -> Result<f64> {
    inp.validate()?;
    if idling.is_empty() {
        return Err(QodeError::invalid("idling", "need p_0..p_M"));
    }
    let m = idling.len() - 1;
    if (m as f64 - inp.m).abs() > 0.5 {
        return Err(QodeError::Dimension(format!(
            "idling plan has {} entries but M = {}",
            idling.len(),
            inp.m
        )));
    }
    let canonical = idling[..m].iter().all(|&p| p == 0);
    if canonical {
        let p = idling[m] as f64;
        return Ok(if inp.stable {
            kappa_bound_stable(inp, p)
        } else {
            kappa_bound_unstable(inp, p)
        });
    }
    if m > GENERAL_DIRECT_LIMIT {
        return Err(QodeError::Guard(format!(
            "non-canonical idling with M = {m} exceeds the direct-sum limit {GENERAL_DIRECT_LIMIT}"
        )));
    }
    let growth = inp.growth();
    let g = g_of_k(inp.k);
    let ch2 = inp.envelope_sq(inp.h);
    let mut prefix = 0.0;
    let mut total = 0.0;
    for mi in 0..=m {
        let p_prev = if mi == 0 { 0.0 } else { idling[mi - 1] as f64 };
        let cl2 = inp.envelope_sq(mi as f64 * inp.h);
        prefix += cl2 * (1.0 + p_prev * growth * ch2 + g);
        let pm = idling[mi] as f64;
        total += growth * (pm + I0_2) * prefix + pm * (pm + 1.0) / 2.0;
    }
    let p_total: f64 = idling.iter().map(|&p| p as f64).sum();
    total += (p_total + inp.m * inp.k as f64) * (I0_2 - 1.0);
    Ok(total.sqrt() * norm_factor(inp.k))
}

/// Bracket of the stable bound, an upper bound on ‖L⁻¹‖².
fn stable_bracket(inp: &BoundInputs, p: f64) -> f64 {
    let mu_h = inp.mu_p.min(0.0) * inp.h;
    let lead = inp.growth() * (1.0 + g_of_k(inp.k)) * inp.kappa_p * (p * geom(mu_h, inp.m) + I0_2 * xi_mu(mu_h, inp.m));
    lead + tail_terms(p, p * (p + 1.0) / 2.0, inp)
}

/// √(bracket): the bound on ‖L⁻¹‖ for a stable profile, without the ‖L‖ factor.
pub fn inverse_norm_bound_stable(inp: &BoundInputs, p: f64) -> f64 {
    stable_bracket(inp, p).sqrt()
}

/// κ_L bound for a stable profile with final-block idling p.
pub fn kappa_bound_stable(inp: &BoundInputs, p: f64) -> f64 {
    inverse_norm_bound_stable(inp, p) * norm_factor(inp.k)
}

/// κ_L bound under the constant envelope C_max.
pub fn kappa_bound_unstable(inp: &BoundInputs, p: f64) -> f64 {
    let lead = inp.c_max * inp.c_max
        * inp.growth()
        * (1.0 + g_of_k(inp.k))
        * (inp.m + 1.0)
        * (p + I0_2 * (inp.m / 2.0 + 1.0));
    (lead + tail_terms(p, p * (p + 1.0) / 2.0, inp)).sqrt() * norm_factor(inp.k)
}

/// κ_L bound choosing the stable or unstable form from `inp.stable`.
pub fn kappa_bound(inp: &BoundInputs, p: f64) -> f64 {
    if inp.stable {
        kappa_bound_stable(inp, p)
    } else {
        kappa_bound_unstable(inp, p)
    }
}

/// K = (3−e)² for inhomogeneous systems, else 1.
pub fn k_constant(homogeneous: bool) -> f64 {
    if homogeneous {
        1.0
    } else {
        K_INHOMOGENEOUS
    }
}

/// Lower bound on the probability of measuring the history block.
///
/// Maximum of the K-branch and, under the multiplicative scheme with λ
/// and ‖A‖ supplied, the λ-branch.
pub fn pr_history_lower(inp: &BoundInputs) -> f64 {
    let kb = 1.0 / (1.0 + (I0_2 - 1.0) / k_constant(inp.homogeneous));
    let lb = match (inp.scheme, inp.lambda_prob) {
        (SchemeKind::Multiplicative, Some(lambda)) if inp.a_norm > 0.0 && inp.eps_td < 1.0 => {
            let r = 1.0 + lambda / ((1.0 - inp.eps_td) * inp.a_norm);
            1.0 / (1.0 + r * r * (I0_2 - 1.0))
        }
        _ => 0.0,
    };
    kb.max(lb)
}

/// Lower bound on the probability of measuring the final-time block
/// with p idling steps.
pub fn pr_solution_lower(inp: &BoundInputs, p: f64) -> Result<f64> {
    if !(inp.eps_td < 1.0) {
        return Err(QodeError::invalid("eps_td", "must be < 1 for the solution-state bound"));
    }
    let gbar = inp.gbar.ok_or(QodeError::MissingInput("gbar"))?;
    let kk = k_constant(inp.homogeneous);
    let base = (I0_2 - 1.0) / ((p + 1.0) * kk);
    let ratio = ((1.0 + inp.eps_td) / (1.0 - inp.eps_td)).powi(2);
    Ok(1.0 / ((1.0 - base) + (inp.m + 1.0) * base * ratio * gbar * gbar))
}

/// ω̃ = (1 + √(k+1) + ωh)/(√(k+1) + 2).
pub fn omega_tilde(k: usize, omega: f64, h: f64) -> Result<f64> {
    let wh = omega * h;
    if !(wh >= 1.0) || !wh.is_finite() {
        return Err(QodeError::invalid("omega", format!("need ω·h ≥ 1, got {wh}")));
    }
    let r = ((k + 1) as f64).sqrt();
    Ok((1.0 + r + wh) / (r + 2.0))
}

/// Split of the total error ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub eps_td: f64,
    pub eps_l: f64,
    /// Scheme factor f in ε_TD = ε/(8f).
    pub f: f64,
}

impl ErrorBudget {
    /// 2ε_L/(Pr − ε_L) + 4ε_TD·f.
    pub fn total(&self, pr_lower: f64) -> f64 {
        2.0 * self.eps_l / (pr_lower - self.eps_l) + 4.0 * self.eps_td * self.f
    }
}

/// ε_TD = ε/(8f) and ε_L = ε·Pr/(4+ε).
pub fn error_budget(
    epsilon: f64,
    target: Target,
    scheme: SchemeKind,
    norms: &SolutionNormBounds,
    pr_lower: f64,
) -> Result<ErrorBudget> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(QodeError::invalid("epsilon", format!("must lie in (0, 1), got {epsilon}")));
    }
    if !(pr_lower > 0.0 && pr_lower <= 1.0) {
        return Err(QodeError::invalid("pr_lower", format!("must lie in (0, 1], got {pr_lower}")));
    }
    let f = scheme.strategy().budget_factor(target, norms)?;
    let eps_td = epsilon / (8.0 * f);
    let eps_l = epsilon * pr_lower / (4.0 + epsilon);
    if !(eps_l < pr_lower) {
        return Err(QodeError::NonFinite("ε_L does not stay below the success probability".into()));
    }
    Ok(ErrorBudget { eps_td, eps_l, f })
}
