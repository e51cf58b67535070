//! End-to-end resource estimation: error budget, truncation order,
//! idling, condition-number and success-probability bounds, QLSA queries
//! and amplification, minimized over the two error schemes. Also the
//! closed-form count for contractive homogeneous systems, the numerical
//! verification path and parameter sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{E, PI};

use crate::bounds::{
    error_budget, g_of_k, kappa_bound, omega_tilde, pr_history_lower, pr_solution_lower, xi_mu,
    BoundInputs, Target, I0_2,
};
use crate::discretization::{
    exact_trajectory, normalized_history_distance, Additive, ErrorScheme, select_truncation, truncation_error_report, ErrorRow,
    OrderRule, SchemeKind, SolutionNormBounds, TimeGrid,
};
use crate::embedding::{build_embedding, measure_embedding, success_probabilities_exact, IdlingPlan};
use crate::error::{QodeError, Result};
use crate::qlsa::{amplification_rounds, qlsa_query_count, qubit_count, AmplificationMode};
use crate::scenarios::OdeSystem;
use crate::stability::{lyapunov_profile, Classification, LyapunovMode, Provenance, StabilityProfile};

/// Largest M accepted by [`verify`].
pub const VERIFY_MAX_STEPS: u64 = 10_000;
/// Largest N accepted by [`verify`].
pub const VERIFY_MAX_DIM: usize = 64;

/// Which error schemes to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum SchemeChoice {
    /// Both schemes where inputs permit; the cheaper one is reported.
    #[default]
    #[serde(rename = "auto")]
    Auto,
    #[serde(rename = "mult")]
    Multiplicative,
    #[serde(rename = "add")]
    Additive,
}

impl SchemeChoice {
    fn schemes(&self) -> Vec<SchemeKind> {
        match self {
            SchemeChoice::Auto => vec![SchemeKind::Multiplicative, SchemeKind::Additive],
            SchemeChoice::Multiplicative => vec![SchemeKind::Multiplicative],
            SchemeChoice::Additive => vec![SchemeKind::Additive],
        }
    }
}

fn default_omega() -> f64 {
    1.0
}

fn default_a_norm() -> f64 {
    1.0
}

/// Everything the estimate needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateRequest {
    pub profile: StabilityProfile,
    pub norms: SolutionNormBounds,
    pub grid: TimeGrid,
    pub epsilon: f64,
    #[serde(default = "default_omega")]
    pub omega: f64,
    /// Ancilla count a of the block-encoding.
    #[serde(default)]
    pub ancillas: u64,
    #[serde(default)]
    pub target: Target,
    #[serde(default)]
    pub scheme: SchemeChoice,
    #[serde(default)]
    pub amplification: AmplificationMode,
    #[serde(default)]
    pub order_rule: OrderRule,
    /// State dimension N, needed for the qubit count.
    #[serde(default)]
    pub dimension: Option<u64>,
    /// ‖A‖.
    #[serde(default = "default_a_norm")]
    pub a_norm: f64,
    /// max{max_t ‖b‖/‖x(t)‖, T} for the history λ-branch.
    #[serde(default)]
    pub lambda_prob: Option<f64>,
}

impl EstimateRequest {
    /// History-state request with defaults ω = 1, a = 0, auto scheme, repeat mode.
    pub fn new(profile: StabilityProfile, norms: SolutionNormBounds, grid: TimeGrid, epsilon: f64) -> Self {
        EstimateRequest {
            profile,
            norms,
            grid,
            epsilon,
            omega: 1.0,
            ancillas: 0,
            target: Target::History,
            scheme: SchemeChoice::Auto,
            amplification: AmplificationMode::Repeat,
            order_rule: OrderRule::Formula,
            dimension: None,
            a_norm: 1.0,
            lambda_prob: None,
        }
    }

    /// The negative-log-norm configuration: b = 0, ‖A‖ = h = 1, ω = 1,
    /// history target; μ = 0 means the uniform envelope C_max = 1.
    pub fn negative_lognorm(t: f64, mu: f64, epsilon: f64) -> Result<Self> {
        let profile = if mu == 0.0 {
            StabilityProfile::manual_unstable(1.0)?
        } else {
            StabilityProfile::manual_stable(1.0, mu)?
        };
        let norms = SolutionNormBounds {
            x_min: Some(0.0),
            b_norm: 0.0,
            ..Default::default()
        };
        Ok(EstimateRequest::new(profile, norms, TimeGrid::from_horizon(t, 1.0)?, epsilon))
    }
}

/// Costs along one error scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeRecord {
    pub scheme: SchemeKind,
    pub eps_td: f64,
    pub ln_s: f64,
    pub k: usize,
    pub p: u64,
    pub omega_tilde: f64,
    pub kappa_l: f64,
    pub pr_lower: f64,
    pub eps_l: f64,
    pub q_qlsa: f64,
    pub rounds: f64,
    pub q: f64,
    pub kappa_clamped: bool,
}

/// A scheme that could not be evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedScheme {
    pub scheme: SchemeKind,
    pub reason: String,
}

/// Result of [`estimate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub steps: u64,
    pub t: f64,
    pub h: f64,
    pub target: Target,
    pub stable: bool,
    pub records: Vec<SchemeRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<SkippedScheme>,
    pub chosen: SchemeKind,
    /// Minimum of Q over the evaluated schemes.
    pub q: f64,
    /// Queries to each state-preparation oracle, 4Q.
    pub state_prep_queries: f64,
    pub qubits: Option<u64>,
}

impl CostReport {
    /// Record of the cheapest scheme.
    pub fn chosen_record(&self) -> &SchemeRecord {
        self.records
            .iter()
            .find(|r| r.scheme == self.chosen)
            .expect("chosen scheme has a record")
    }
}

/// Idling p for the target: 0 for the history state, otherwise
/// ⌈√M/(k+1)⌉(k+1) when stable and ⌈M/(k+1)⌉(k+1) when not.
pub fn idling_for(target: Target, stable: bool, steps: u64, k: usize) -> u64 {
    match target {
        Target::History => 0,
        Target::Solution => {
            let blk = k as u64 + 1;
            let reach = if stable { (steps as f64).sqrt() } else { steps as f64 };
            ((reach / blk as f64).ceil() as u64).max(1) * blk
        }
    }
}

fn scheme_branch(req: &EstimateRequest, scheme: SchemeKind) -> Result<SchemeRecord> {
    let norms = &req.norms;
    let target = req.target;
    let m = req.grid.m();
    let f = scheme.strategy().budget_factor(target, norms)?;
    let eps_td = req.epsilon / (8.0 * f);
    let plan = select_truncation(scheme, m, req.grid.t, norms, eps_td, req.order_rule)?;
    let k = plan.k;
    let stable = req.profile.is_stable();
    let p = idling_for(target, stable, req.grid.steps, k);
    let wt = omega_tilde(k, req.omega, req.grid.h)?;
    let mut inp = BoundInputs::from_profile(&req.profile, k, m, req.grid.h).with_scheme(scheme, eps_td, norms)?;
    inp.a_norm = req.a_norm;
    inp.lambda_prob = req.lambda_prob;
    let kappa = kappa_bound(&inp, p as f64);
    if !kappa.is_finite() {
        return Err(QodeError::NonFinite("condition-number bound overflowed".into()));
    }
    let pr = match target {
        Target::History => pr_history_lower(&inp),
        Target::Solution => pr_solution_lower(&inp, p as f64)?,
    };
    let budget = error_budget(req.epsilon, target, scheme, norms, pr)?;
    let qlsa = qlsa_query_count(wt, kappa, budget.eps_l)?;
    let rounds = amplification_rounds(pr, req.amplification)?;
    Ok(SchemeRecord {
        scheme,
        eps_td,
        ln_s: plan.ln_s,
        k,
        p,
        omega_tilde: wt,
        kappa_l: kappa,
        pr_lower: pr,
        eps_l: budget.eps_l,
        q_qlsa: qlsa.q_expected,
        rounds,
        q: rounds * qlsa.q_expected,
        kappa_clamped: qlsa.clamped,
    })
}

fn validate_request(req: &EstimateRequest) -> Result<()> {
    if !(req.epsilon > 0.0 && req.epsilon < 1.0) {
        return Err(QodeError::invalid("epsilon", format!("must lie in (0, 1), got {}", req.epsilon)));
    }
    if !(req.omega * req.grid.h >= 1.0) {
        return Err(QodeError::invalid("omega", format!("need ω·h ≥ 1, got {}", req.omega * req.grid.h)));
    }
    if !(req.a_norm >= 0.0) {
        return Err(QodeError::invalid("a_norm", "must be ≥ 0"));
    }
    if !(req.a_norm * req.grid.h <= 1.0 + 1e-12) {
        return Err(QodeError::invalid("h", format!("need ‖A‖·h ≤ 1, got {}", req.a_norm * req.grid.h)));
    }
    Ok(())
}

/// Query count and qubits for the request, minimized over error schemes.
pub fn estimate(req: &EstimateRequest) -> Result<CostReport> {
    validate_request(req)?;
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    let mut first_err = None;
    let auto = req.scheme == SchemeChoice::Auto;
    for scheme in req.scheme.schemes() {
        match scheme_branch(req, scheme) {
            Ok(r) => records.push(r),
            Err(e) if auto && e.is_validation() => {
                log::info!("{} scheme skipped: {e}", scheme.name());
                skipped.push(SkippedScheme {
                    scheme,
                    reason: e.to_string(),
                });
                first_err.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    let best = records
        .iter()
        .min_by(|a, b| a.q.total_cmp(&b.q))
        .cloned()
        .ok_or_else(|| first_err.unwrap_or(QodeError::MissingInput("scheme")))?;
    let qubits = match req.dimension {
        Some(n) => Some(qubit_count(req.ancillas, req.grid.steps, best.k as u64, best.p, n)?),
        None => None,
    };
    Ok(CostReport {
        steps: req.grid.steps,
        t: req.grid.t,
        h: req.grid.h,
        target: req.target,
        stable: req.profile.is_stable(),
        chosen: best.scheme,
        q: best.q,
        state_prep_queries: 4.0 * best.q,
        qubits,
        records,
        skipped,
    })
}

/// Closed-form query count for ẋ = Ax with ‖A‖h ≤ 1, log-norm μ ≤ 0,
/// κ_P = 1, ω = 1, history output and repeat-until-success.
///
/// The truncation order is the ceiling of the fractional expression minus
/// one, and the cube-root term multiplies ln(2κ+3), matching the QLSA
/// query formula used by [`estimate`].
pub fn closed_form_negative_lognorm(t: f64, h: f64, mu: f64, epsilon: f64) -> Result<f64> {
    if mu > 0.0 {
        return Err(QodeError::invalid("mu", format!("must be ≤ 0, got {mu}")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(QodeError::invalid("epsilon", format!("must lie in (0, 1), got {epsilon}")));
    }
    let grid = TimeGrid::from_horizon(t, h)?;
    let m = grid.m();
    let ln_s = (8.0 * E.powi(3) * m / epsilon).ln();
    let k = ((1.5 * ln_s + 1.0) / (0.5 * ln_s).ln_1p() - 1.0).ceil().max(1.0);
    let g = g_of_k(k as usize);
    let inner = (epsilon / 8.0 + 1.0).powi(2) * I0_2 * (g + 1.0) * xi_mu(mu * h, m) + k * m * (I0_2 - 1.0);
    let kappa = ((k + 1.0).sqrt() + 2.0) * inner.sqrt();
    let kappa = kappa.max(12f64.sqrt());
    let l = (2.0 * kappa + 3.0).ln();
    let prefactor = I0_2 / (0.39 - 0.204 / I0_2 * epsilon / (epsilon + 4.0));
    let first = 117.0 / 50.0 * ((451.0 * (epsilon + 4.0) / epsilon * I0_2 * l * l).ln() + 1.0) * l * l;
    let second = 581.0 / 250.0 * E * (kappa * kappa + 1.0).sqrt() * ((133.0 / 125.0 + 4.0 / (25.0 * kappa.cbrt())) * PI * l + 1.0);
    let third = (32.0 * (epsilon + 4.0) * I0_2 / epsilon).ln() * kappa;
    Ok(prefactor * (first + second + third))
}

/// Pass flags of a verification run; each is a comparison of stored values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationFlags {
    pub norm_within_bound: bool,
    pub kappa_within_bound: bool,
    pub probability_above_bound: bool,
    pub truncation_within_bound: bool,
    pub budget_closes: bool,
    pub residual_small: bool,
}

impl VerificationFlags {
    /// True when every check passed.
    pub fn all(&self) -> bool {
        self.norm_within_bound
            && self.kappa_within_bound
            && self.probability_above_bound
            && self.truncation_within_bound
            && self.budget_closes
            && self.residual_small
    }
}

/// Side-by-side analytic and numerical quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub label: String,
    pub classification: Classification,
    pub provenance: Provenance,
    pub kappa_p: Option<f64>,
    pub mu_p: Option<f64>,
    pub c_max: Option<f64>,
    pub scheme: SchemeKind,
    pub target: Target,
    pub steps: u64,
    pub k: usize,
    pub p: u64,
    pub epsilon: f64,
    pub eps_td: f64,
    pub eps_l: f64,
    pub norm_l: f64,
    pub norm_bound: f64,
    pub kappa_numeric: f64,
    pub kappa_analytic: f64,
    pub pr_exact: f64,
    pub pr_lower: f64,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub history_distance: f64,
    pub budget_total: f64,
    pub residual: f64,
    pub rhs_norm: f64,
    pub truncation_ok: bool,
    pub rows: Vec<ErrorRow>,
    pub flags: VerificationFlags,
    pub cost: CostReport,
}

impl VerificationReport {
    fn compute_flags(&mut self) {
        self.flags = VerificationFlags {
            norm_within_bound: self.norm_l <= self.norm_bound * (1.0 + 1e-12),
            kappa_within_bound: self.kappa_numeric <= self.kappa_analytic,
            probability_above_bound: self.pr_exact >= self.pr_lower * (1.0 - 1e-12),
            truncation_within_bound: self.truncation_ok,
            budget_closes: self.budget_total <= self.epsilon * (1.0 + 1e-12),
            residual_small: self.residual <= 1e-10 * self.rhs_norm,
        };
    }
}

/// Run the analytic pipeline and the numerical embedding side by side.
pub fn verify(
    system: &OdeSystem,
    grid: &TimeGrid,
    epsilon: f64,
    target: Target,
    scheme: SchemeChoice,
) -> Result<VerificationReport> {
    if grid.steps > VERIFY_MAX_STEPS {
        return Err(QodeError::Guard(format!("M = {} exceeds {VERIFY_MAX_STEPS}", grid.steps)));
    }
    if system.n() > VERIFY_MAX_DIM {
        return Err(QodeError::Guard(format!("N = {} exceeds {VERIFY_MAX_DIM}", system.n())));
    }
    let profile = lyapunov_profile(&system.a, LyapunovMode::Auto, grid.t)?;
    let exact = exact_trajectory(&system.a, &system.b, &system.x0, grid)?;
    let samples: Vec<f64> = exact.iter().map(|v| v.norm()).collect();
    let b_norm = system.b.norm();
    let base = SolutionNormBounds::from_samples(samples.clone(), b_norm, 0.0)?;
    let f_add = Additive.budget_factor(target, &base)?;
    let norms = SolutionNormBounds::from_samples(samples.clone(), b_norm, epsilon / (8.0 * f_add))?;
    let lambda = samples
        .iter()
        .map(|s| if *s > 0.0 { b_norm / s } else { f64::INFINITY })
        .fold(grid.t, f64::max);
    let a_norm = crate::numerics::operator_norm(&system.a)?;
    let mut req = EstimateRequest::new(profile.clone(), norms.clone(), *grid, epsilon);
    req.target = target;
    req.scheme = scheme;
    req.dimension = Some(system.n() as u64);
    req.a_norm = a_norm;
    req.lambda_prob = Some(lambda);
    req.omega = 1.0 / grid.h;
    let cost = estimate(&req)?;
    let rec = cost.chosen_record().clone();
    let plan = select_truncation(rec.scheme, grid.m(), grid.t, &norms, rec.eps_td, req.order_rule)?;
    let idling = match target {
        Target::History => IdlingPlan::history(grid.steps as usize),
        Target::Solution => IdlingPlan::solution(grid.steps as usize, rec.p),
    };
    let emb = build_embedding(system, grid, rec.k, &idling)?;
    let y = emb.solve_forward();
    let meas = measure_embedding(&emb)?;
    let probs = success_probabilities_exact(&y, &emb)?;
    let trunc = truncation_error_report(&system.a, &system.b, &system.x0, grid, &plan)?;
    let budget = error_budget(epsilon, target, rec.scheme, &norms, rec.pr_lower)?;
    let history_distance = normalized_history_distance(&emb.history(&y), &exact);
    let mut report = VerificationReport {
        label: system.label.clone(),
        classification: profile.classification,
        provenance: profile.provenance,
        kappa_p: profile.kappa_p,
        mu_p: profile.mu_p,
        c_max: profile.c_max,
        scheme: rec.scheme,
        target,
        steps: grid.steps,
        k: rec.k,
        p: rec.p,
        epsilon,
        eps_td: rec.eps_td,
        eps_l: rec.eps_l,
        norm_l: meas.norm_l,
        norm_bound: emb.omega_k(),
        kappa_numeric: meas.kappa_numeric,
        kappa_analytic: rec.kappa_l,
        pr_exact: match target {
            Target::History => probs.pr_history,
            Target::Solution => probs.pr_solution,
        },
        pr_lower: rec.pr_lower,
        max_abs_err: trunc.max_abs_err,
        max_rel_err: trunc.max_rel_err,
        history_distance,
        budget_total: budget.total(rec.pr_lower),
        residual: emb.residual(&y),
        rhs_norm: emb.rhs().norm(),
        truncation_ok: trunc.errors_within_bound && trunc.powers_within_bound,
        rows: trunc.rows,
        flags: VerificationFlags {
            norm_within_bound: false,
            kappa_within_bound: false,
            probability_above_bound: false,
            truncation_within_bound: false,
            budget_closes: false,
            residual_small: false,
        },
        cost,
    };
    report.compute_flags();
    Ok(report)
}

/// Quantity varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    /// Horizon T (M = T/h).
    T,
    /// Log-norm μ of a κ_P-scaled stable profile; μ = 0 uses C_max = √κ_P.
    Mu,
    /// Total error ε.
    Epsilon,
}

/// One sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub report: CostReport,
}

fn apply_axis(template: &EstimateRequest, axis: SweepAxis, v: f64) -> Result<EstimateRequest> {
    let mut req = template.clone();
    match axis {
        SweepAxis::T => req.grid = TimeGrid::from_horizon(v, template.grid.h)?,
        SweepAxis::Mu => {
            let kappa = template.profile.effective_kappa_mu().0.max(1.0);
            req.profile = if v == 0.0 {
                StabilityProfile::manual_unstable(kappa.sqrt())?
            } else {
                StabilityProfile::manual_stable(kappa, v)?
            };
        }
        SweepAxis::Epsilon => req.epsilon = v,
    }
    Ok(req)
}

/// Estimate at each axis value, in parallel; rows follow the input order.
pub fn sweep(template: &EstimateRequest, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(QodeError::invalid("values", "sweep needs at least one value"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(QodeError::invalid("values", "sweep values must be finite"));
    }
    if values.windows(2).any(|w| w[1] < w[0]) {
        return Err(QodeError::invalid("values", "sweep values must be sorted ascending"));
    }
    values
        .par_iter()
        .map(|&v| {
            let req = apply_axis(template, axis, v)?;
            Ok(SweepRow {
                axis_value: v,
                report: estimate(&req)?,
            })
        })
        .collect()
}

/// `points` log-spaced values from `from` to `to` inclusive.
pub fn log_space(from: f64, to: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(QodeError::invalid("points", "need at least two points"));
    }
    if !(from > 0.0 && to > from) {
        return Err(QodeError::invalid("from", "need 0 < from < to"));
    }
    let (a, b) = (from.ln(), to.ln());
    Ok((0..points)
        .map(|i| {
            if i == 0 {
                from
            } else if i == points - 1 {
                to
            } else {
                (a + (b - a) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect())
}

/// Ordinary least-squares fit of ln Q against ln T.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub window: (f64, f64),
    pub points: usize,
}

/// Fit (ln T, ln Q) over the pairs with T in the closed window.
pub fn fit_scaling(pairs: &[(f64, f64)], window: (f64, f64)) -> Result<FitResult> {
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(t, q)| *t >= window.0 && *t <= window.1 && *t > 0.0 && *q > 0.0)
        .map(|(t, q)| (t.ln(), q.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(QodeError::invalid("window", format!("need ≥ 3 rows in the window, found {}", pts.len())));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(QodeError::invalid("window", "all T values coincide"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Ok(FitResult {
        slope,
        intercept,
        r_squared,
        window,
        points: pts.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{hamiltonian_case, negative_lognorm_family};
    use crate::numerics::sample;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn pipeline_matches_closed_form() {
        for &mu in &[-1.0, -0.5, -0.01, 0.0] {
            for &t in &[1e6, 1e10, 1e15] {
                let rep = estimate(&EstimateRequest::negative_lognorm(t, mu, 1e-10).unwrap()).unwrap();
                let cf = closed_form_negative_lognorm(t, 1.0, mu, 1e-10).unwrap();
                assert!(rel(rep.q, cf) <= 1e-12, "mu={mu} T={t}: {} vs {cf}", rep.q);
            }
        }
    }

    #[test]
    fn closed_form_monotone_in_mu() {
        let mut last = f64::INFINITY;
        for &mu in &[0.0, -0.001, -0.01, -0.1, -0.5, -1.0] {
            let q = closed_form_negative_lognorm(1e8, 1.0, mu, 1e-10).unwrap();
            assert!(q <= last);
            last = q;
        }
        assert!(closed_form_negative_lognorm(1e8, 1.0, 0.1, 1e-10).is_err());
    }

    #[test]
    fn hamiltonian_special_case_accepted() {
        let profile = StabilityProfile::manual_unstable(1.0).unwrap();
        let mut req = EstimateRequest::new(profile, SolutionNormBounds::unit(), TimeGrid::from_horizon(1e6, 1.0).unwrap(), 1e-8);
        req.dimension = Some(8);
        let rep = estimate(&req).unwrap();
        assert_eq!(rep.records.len(), 2);
        assert!(rel(rep.records[0].q, rep.records[1].q) < 1e-12);
        assert!(rep.qubits.is_some());
        assert_eq!(rep.state_prep_queries, 4.0 * rep.q);
    }

    #[test]
    fn missing_x_min_names_field() {
        let profile = StabilityProfile::manual_stable(1.0, -1.0).unwrap();
        let mut req = EstimateRequest::new(profile, SolutionNormBounds::default(), TimeGrid::new(1.0, 100).unwrap(), 1e-6);
        req.scheme = SchemeChoice::Multiplicative;
        let err = estimate(&req).unwrap_err();
        assert_eq!(err, QodeError::MissingInput("x_min"));
        req.scheme = SchemeChoice::Auto;
        assert_eq!(estimate(&req).unwrap_err(), QodeError::MissingInput("x_min"));
    }

    #[test]
    fn stable_solution_idling() {
        let profile = StabilityProfile::manual_stable(1.0, -1.0).unwrap();
        let norms = SolutionNormBounds {
            x_min: Some(0.0),
            gbar_times: Some(1.0),
            ..Default::default()
        };
        let mut req = EstimateRequest::new(profile, norms, TimeGrid::new(1.0, 1_000_000).unwrap(), 1e-6);
        req.target = Target::Solution;
        let rep = estimate(&req).unwrap();
        let r = rep.chosen_record();
        let blk = r.k as u64 + 1;
        assert_eq!(r.p, ((1000.0 / blk as f64).ceil() as u64) * blk);
        assert_eq!(r.p % blk, 0);
    }

    #[test]
    fn report_invariants() {
        let rep = estimate(&EstimateRequest::negative_lognorm(1e9, -0.3, 1e-9).unwrap()).unwrap();
        for r in &rep.records {
            assert!(rep.q <= r.q);
            assert_eq!(r.q, r.rounds * r.q_qlsa);
        }
        let again = estimate(&EstimateRequest::negative_lognorm(1e9, -0.3, 1e-9).unwrap()).unwrap();
        assert_eq!(serde_json::to_string(&rep).unwrap(), serde_json::to_string(&again).unwrap());
    }

    #[test]
    fn sweep_rows_and_bracketing() {
        let ts = log_space(1e6, 1e15, 10).unwrap();
        let curves: Vec<Vec<f64>> = [0.0, -0.25, -0.5, -1.0]
            .iter()
            .map(|&mu| {
                let tmpl = EstimateRequest::negative_lognorm(1e6, mu, 1e-10).unwrap();
                sweep(&tmpl, SweepAxis::T, &ts).unwrap().iter().map(|r| r.report.q).collect()
            })
            .collect();
        for i in 0..ts.len() {
            for c in &curves[1..3] {
                assert!(c[i] <= curves[0][i] && c[i] >= curves[3][i]);
            }
            if i > 0 {
                assert!(curves[3][i] / ts[i] < curves[3][i - 1] / ts[i - 1]);
                for c in &curves {
                    assert!(c[i] >= c[i - 1]);
                }
            }
        }
        let tmpl = EstimateRequest::negative_lognorm(1e7, -0.5, 1e-10).unwrap();
        let single = sweep(&tmpl, SweepAxis::T, &[1e7]).unwrap();
        assert_eq!(single[0].report, estimate(&tmpl).unwrap());
        let mus = sweep(&tmpl, SweepAxis::Mu, &[-1.0, -0.5, 0.0]).unwrap();
        assert!(mus[0].report.q < mus[1].report.q && mus[1].report.q < mus[2].report.q);
        assert!(sweep(&tmpl, SweepAxis::T, &[]).is_err());
        assert!(sweep(&tmpl, SweepAxis::T, &[2e7, 1e7]).is_err());
    }

    #[test]
    fn sweep_in_epsilon_monotone() {
        let tmpl = EstimateRequest::negative_lognorm(1e8, -1.0, 1e-10).unwrap();
        let eps = log_space(1e-12, 1e-3, 8).unwrap();
        let rows = sweep(&tmpl, SweepAxis::Epsilon, &eps).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].report.q <= w[0].report.q);
        }
    }

    #[test]
    fn fit_exact_power_law() {
        let pairs: Vec<(f64, f64)> = log_space(1e2, 1e12, 11).unwrap().into_iter().map(|t| (t, t.sqrt())).collect();
        let fit = fit_scaling(&pairs, (1.0, 1e13)).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(fit_scaling(&pairs[..2], (1.0, 1e13)).is_err());
    }

    #[test]
    fn verify_seeded_stable_system() {
        let sys = negative_lognorm_family(3, -0.4, 17).unwrap();
        let grid = TimeGrid::new(1.0, 40).unwrap();
        let rep = verify(&sys, &grid, 1e-6, Target::History, SchemeChoice::Auto).unwrap();
        assert!(rep.flags.all(), "{:?}", rep.flags);
    }

    #[test]
    fn solution_bound_exceeds_exact_for_decaying_state() {
        // ‖x(T)‖ ≈ e^{-16}: the bound omits the data blocks y^{(m,0)}, m < M,
        // from ‖y‖², which matters once ḡ_× ≫ 1.
        let sys = negative_lognorm_family(3, -0.4, 17).unwrap();
        let grid = TimeGrid::new(1.0, 40).unwrap();
        let sol = verify(&sys, &grid, 1e-6, Target::Solution, SchemeChoice::Multiplicative).unwrap();
        assert!(!sol.flags.probability_above_bound);
        assert!(sol.pr_lower / sol.pr_exact < I0_2 / (I0_2 - 1.0));
        let f = sol.flags;
        assert!(f.norm_within_bound && f.kappa_within_bound && f.truncation_within_bound && f.residual_small);
    }

    #[test]
    fn verify_hamiltonian_uses_envelope() {
        let h = sample::hermitian(&mut sample::rng(2), 3);
        let h = &h * crate::numerics::c(1.0 / crate::numerics::operator_norm(&h).unwrap());
        let sys = hamiltonian_case(&h, &sample::unit_vector(&mut sample::rng(3), 3)).unwrap();
        let rep = verify(&sys, &TimeGrid::new(1.0, 30).unwrap(), 1e-6, Target::History, SchemeChoice::Auto).unwrap();
        assert_eq!(rep.classification, Classification::MarginalOrUnstable);
        assert!(rep.c_max.is_some());
        assert!(rep.flags.all(), "{:?}", rep.flags);
    }

    #[test]
    fn verify_guards() {
        let sys = negative_lognorm_family(2, -0.5, 1).unwrap();
        let err = verify(&sys, &TimeGrid::new(1.0, 20_000).unwrap(), 1e-6, Target::History, SchemeChoice::Auto).unwrap_err();
        assert!(matches!(err, QodeError::Guard(_)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn q_monotone_in_t(lt in 3.0f64..14.0, d in 0.01f64..1.0, mu in -1.0f64..0.0) {
            let a = estimate(&EstimateRequest::negative_lognorm(10f64.powf(lt).round(), mu, 1e-8).unwrap()).unwrap();
            let b = estimate(&EstimateRequest::negative_lognorm(10f64.powf(lt + d).round(), mu, 1e-8).unwrap()).unwrap();
            prop_assert!(b.q >= a.q);
        }
    }
}
