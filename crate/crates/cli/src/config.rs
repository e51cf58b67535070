//! Run configuration: a JSON file with unknown keys rejected, overlaid by
//! command-line flags, resolved into an [`EstimateRequest`].

use clap::Args;
use qode_core::bounds::Target;
use qode_core::discretization::{OrderRule, SolutionNormBounds, TimeGrid};
use qode_core::pipeline::{EstimateRequest, SchemeChoice};
use qode_core::qlsa::AmplificationMode;
use qode_core::stability::StabilityProfile;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

fn one() -> f64 {
    1.0
}

/// Stability parameters: (κ_P, μ_P) for a stable generator, C_max otherwise.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityInput {
    #[serde(default)]
    pub kappa_p: Option<f64>,
    #[serde(default)]
    pub mu_p: Option<f64>,
    #[serde(default)]
    pub c_max: Option<f64>,
}

impl StabilityInput {
    fn profile(&self) -> CliResult<StabilityProfile> {
        match (self.mu_p, self.c_max) {
            (Some(_), Some(_)) => Err(CliError::Validation(
                "stability: give either `mu_p` (stable) or `c_max` (unstable), not both".into(),
            )),
            (Some(mu), None) => Ok(StabilityProfile::manual_stable(self.kappa_p.unwrap_or(1.0), mu)?),
            (None, Some(c)) => Ok(StabilityProfile::manual_unstable(c)?),
            (None, None) => Err(CliError::Validation(
                "stability: missing `mu_p` or `c_max` (or pass --stable)".into(),
            )),
        }
    }
}

/// Solution-norm inputs. With `samples`, missing entries are derived from them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormInput {
    #[serde(default)]
    pub x_min: Option<f64>,
    #[serde(default)]
    pub x_max: Option<f64>,
    #[serde(default)]
    pub x_rms: Option<f64>,
    #[serde(default)]
    pub x_final: Option<f64>,
    #[serde(default)]
    pub b_norm: f64,
    #[serde(default)]
    pub gbar_times: Option<f64>,
    #[serde(default)]
    pub gbar_plus: Option<f64>,
    /// ‖x(mh)‖ for m = 0..=M.
    #[serde(default)]
    pub samples: Option<Vec<f64>>,
}

impl NormInput {
    fn bounds(&self, epsilon: f64, target: Target) -> CliResult<SolutionNormBounds> {
        let mut out = match &self.samples {
            Some(s) => {
                let base = SolutionNormBounds::from_samples(s.clone(), self.b_norm, 0.0)?;
                let scale = match target {
                    Target::History => base.x_rms,
                    Target::Solution => base.x_final,
                }
                .unwrap_or(1.0);
                SolutionNormBounds::from_samples(s.clone(), self.b_norm, epsilon * scale / 8.0)?
            }
            None => SolutionNormBounds {
                b_norm: self.b_norm,
                ..Default::default()
            },
        };
        let overlay = |slot: &mut Option<f64>, v: Option<f64>| {
            if v.is_some() {
                *slot = v;
            }
        };
        overlay(&mut out.x_min, self.x_min);
        overlay(&mut out.x_max, self.x_max);
        overlay(&mut out.x_rms, self.x_rms);
        overlay(&mut out.x_final, self.x_final);
        overlay(&mut out.gbar_times, self.gbar_times);
        overlay(&mut out.gbar_plus, self.gbar_plus);
        Ok(out)
    }
}

/// Configuration file of `estimate` and `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Horizon T.
    pub horizon: f64,
    /// Step h.
    #[serde(default = "one")]
    pub step: f64,
    pub epsilon: f64,
    #[serde(default = "one")]
    pub omega: f64,
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
    #[serde(default)]
    pub dimension: Option<u64>,
    /// ‖A‖.
    #[serde(default = "one")]
    pub a_norm: f64,
    #[serde(default)]
    pub lambda_prob: Option<f64>,
    #[serde(default)]
    pub stability: StabilityInput,
    #[serde(default)]
    pub norms: NormInput,
}

impl RunConfig {
    /// Parse a configuration file's contents.
    pub fn parse(path: &str, text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::io(path, e))
    }

    /// The estimate request this configuration describes.
    pub fn request(&self) -> CliResult<EstimateRequest> {
        let grid = TimeGrid::from_horizon(self.horizon, self.step)?;
        let mut req = EstimateRequest::new(
            self.stability.profile()?,
            self.norms.bounds(self.epsilon, self.target)?,
            grid,
            self.epsilon,
        );
        req.omega = self.omega;
        req.ancillas = self.ancillas;
        req.target = self.target;
        req.scheme = self.scheme;
        req.amplification = self.amplification;
        req.order_rule = self.order_rule;
        req.dimension = self.dimension;
        req.a_norm = self.a_norm;
        req.lambda_prob = self.lambda_prob;
        Ok(req)
    }
}

/// `--target` values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TargetArg {
    History,
    Solution,
}

impl From<TargetArg> for Target {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::History => Target::History,
            TargetArg::Solution => Target::Solution,
        }
    }
}

/// `--scheme` values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SchemeArg {
    Auto,
    Mult,
    Add,
}

impl From<SchemeArg> for SchemeChoice {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Auto => SchemeChoice::Auto,
            SchemeArg::Mult => SchemeChoice::Multiplicative,
            SchemeArg::Add => SchemeChoice::Additive,
        }
    }
}

/// `--amplification` values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum AmplificationArg {
    Repeat,
    Grover,
}

impl From<AmplificationArg> for AmplificationMode {
    fn from(a: AmplificationArg) -> Self {
        match a {
            AmplificationArg::Repeat => AmplificationMode::Repeat,
            AmplificationArg::Grover => AmplificationMode::Grover,
        }
    }
}

/// Flags shared by `estimate` and `sweep`; each overrides the config file.
#[derive(Args, Debug, Clone, Default)]
pub struct RunFlags {
    /// JSON configuration file.
    #[arg(long)]
    pub config: Option<String>,
    /// Horizon T.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Step h.
    #[arg(long)]
    pub step: Option<f64>,
    /// Total error ε.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Block-encoding normalization ω.
    #[arg(long)]
    pub omega: Option<f64>,
    /// κ_P of a stable profile.
    #[arg(long)]
    pub kappa_p: Option<f64>,
    /// μ_P of a stable profile.
    #[arg(long, allow_hyphen_values = true)]
    pub mu_p: Option<f64>,
    /// C_max of an unstable profile.
    #[arg(long)]
    pub c_max: Option<f64>,
    /// Use the stable branch; μ_P defaults to −1 when not given.
    #[arg(long)]
    pub stable: bool,
    /// Lower bound on ‖x(t)‖.
    #[arg(long)]
    pub x_min: Option<f64>,
    /// ‖b‖.
    #[arg(long)]
    pub b_norm: Option<f64>,
    /// ḡ_× of the multiplicative scheme (solution target).
    #[arg(long)]
    pub gbar_times: Option<f64>,
    /// State dimension N.
    #[arg(long)]
    pub dimension: Option<u64>,
    /// Output state.
    #[arg(long, value_enum)]
    pub target: Option<TargetArg>,
    /// Error scheme.
    #[arg(long, value_enum)]
    pub scheme: Option<SchemeArg>,
    /// Amplitude amplification mode.
    #[arg(long, value_enum)]
    pub amplification: Option<AmplificationArg>,
}

impl RunFlags {
    /// Configuration from the file, if any, with flags applied on top.
    pub fn resolve(&self) -> CliResult<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                RunConfig::parse(path, &text)?
            }
            None => RunConfig {
                horizon: self
                    .horizon
                    .ok_or_else(|| CliError::Validation("missing `horizon` (--horizon or --config)".into()))?,
                step: 1.0,
                epsilon: self
                    .epsilon
                    .ok_or_else(|| CliError::Validation("missing `epsilon` (--epsilon or --config)".into()))?,
                omega: 1.0,
                ancillas: 0,
                target: Target::History,
                scheme: SchemeChoice::Auto,
                amplification: AmplificationMode::Repeat,
                order_rule: OrderRule::Formula,
                dimension: None,
                a_norm: 1.0,
                lambda_prob: None,
                stability: StabilityInput::default(),
                norms: NormInput::default(),
            },
        };
        if let Some(v) = self.horizon {
            cfg.horizon = v;
        }
        if let Some(v) = self.step {
            cfg.step = v;
        }
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if let Some(v) = self.omega {
            cfg.omega = v;
        }
        if let Some(v) = self.kappa_p {
            cfg.stability.kappa_p = Some(v);
        }
        if let Some(v) = self.mu_p {
            cfg.stability.mu_p = Some(v);
            cfg.stability.c_max = None;
        }
        if let Some(v) = self.c_max {
            cfg.stability.c_max = Some(v);
            cfg.stability.mu_p = None;
        }
        if self.stable {
            cfg.stability.c_max = None;
            cfg.stability.mu_p.get_or_insert(-1.0);
        }
        if let Some(v) = self.x_min {
            cfg.norms.x_min = Some(v);
        }
        if let Some(v) = self.b_norm {
            cfg.norms.b_norm = v;
        }
        if let Some(v) = self.gbar_times {
            cfg.norms.gbar_times = Some(v);
        }
        if let Some(v) = self.dimension {
            cfg.dimension = Some(v);
        }
        if let Some(v) = self.target {
            cfg.target = v.into();
        }
        if let Some(v) = self.scheme {
            cfg.scheme = v.into();
        }
        if let Some(v) = self.amplification {
            cfg.amplification = v.into();
        }
        Ok(cfg)
    }
}
