//! Scenario generators: named, seeded constructors of ODE systems.

use qode_core::numerics::{c, identity, operator_norm, sample, ComplexMatrix, ComplexVector};
use qode_core::scenarios::{
    carleman_quadratic, damped_oscillators, hamiltonian_case, negative_lognorm_family, OdeSystem,
};
use qode_core::strategy::Registry;
use qode_core::Result;

/// Knobs shared by the generators; each generator reads the ones it needs.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub dimension: usize,
    pub mu: f64,
    pub seed: u64,
    pub truncation: usize,
    /// Initial value of the scalar logistic equation.
    pub u0: f64,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            dimension: 2,
            mu: -0.5,
            seed: 0,
            truncation: 4,
            u0: 0.5,
        }
    }
}

/// A family of ODE systems.
pub trait ScenarioGenerator: Send + Sync {
    /// One-line description for `--help` style listings.
    fn describe(&self) -> &'static str;
    /// Build the system for the given parameters.
    fn generate(&self, params: &GeneratorParams) -> Result<OdeSystem>;
}

struct NegativeLognorm;
struct Hamiltonian;
struct Oscillators;
struct CarlemanLogistic;

impl ScenarioGenerator for NegativeLognorm {
    fn describe(&self) -> &'static str {
        "A = μI − iH with ‖A‖ = 1 (uses dimension, mu, seed)"
    }
    fn generate(&self, p: &GeneratorParams) -> Result<OdeSystem> {
        negative_lognorm_family(p.dimension, p.mu, p.seed)
    }
}

impl ScenarioGenerator for Hamiltonian {
    fn describe(&self) -> &'static str {
        "A = −iH for a random unit-norm Hermitian H (uses dimension, seed)"
    }
    fn generate(&self, p: &GeneratorParams) -> Result<OdeSystem> {
        let mut rng = sample::rng(p.seed);
        let h = sample::hermitian(&mut rng, p.dimension);
        let norm = operator_norm(&h)?;
        let h = if norm > 0.0 { &h * c(1.0 / norm) } else { h };
        hamiltonian_case(&h, &sample::unit_vector(&mut rng, p.dimension))
    }
}

impl ScenarioGenerator for Oscillators {
    fn describe(&self) -> &'static str {
        "forced damped oscillators ÿ = −Wy − 0.2ẏ + F, state size 2N (uses dimension, seed)"
    }
    fn generate(&self, p: &GeneratorParams) -> Result<OdeSystem> {
        let n = p.dimension;
        let mut rng = sample::rng(p.seed);
        let g = sample::matrix(&mut rng, n, n);
        let gram = &g * g.adjoint();
        let w = &gram * c(0.5 / operator_norm(&gram)?.max(f64::MIN_POSITIVE));
        let d = identity(n) * c(-0.2);
        let f = ComplexVector::from_element(n, c(0.05));
        let y0 = sample::unit_vector(&mut rng, n);
        Ok(damped_oscillators(&w, &d, &f, &y0, &ComplexVector::zeros(n))?.system)
    }
}

impl ScenarioGenerator for CarlemanLogistic {
    fn describe(&self) -> &'static str {
        "Carleman truncation of u̇ = −u + u²/4 (uses truncation, u0)"
    }
    fn generate(&self, p: &GeneratorParams) -> Result<OdeSystem> {
        Ok(carleman_quadratic(
            &ComplexVector::zeros(1),
            &ComplexMatrix::from_element(1, 1, c(-1.0)),
            &ComplexMatrix::from_element(1, 1, c(0.25)),
            &ComplexVector::from_element(1, c(p.u0)),
            p.truncation,
        )?
        .system)
    }
}

/// All scenario generators by name.
pub fn scenario_generators() -> Registry<dyn ScenarioGenerator> {
    Registry::<dyn ScenarioGenerator>::new("scenario generator")
        .with("negative-lognorm", Box::new(NegativeLognorm))
        .with("hamiltonian", Box::new(Hamiltonian))
        .with("oscillators", Box::new(Oscillators))
        .with("carleman-logistic", Box::new(CarlemanLogistic))
}
