//! Fixtures shared by the benchmarks.

use gapweaver_core::cme2d::{solve_class, SolveSpec};
use gapweaver_core::resonance::resonance_coefficients;
use gapweaver_core::{ClassTag, CmeField, PeriodicPotential, ResonanceCoefficients};

pub fn coefficients(grid_n: usize) -> ResonanceCoefficients {
    resonance_coefficients(&PeriodicPotential::one_minus_cos(), (0.05, 0.5), grid_n)
        .expect("coefficients for 1 - cos x")
        .1
}

/// Converged envelope of `class` on `[-d, d]^2`.
pub fn envelope(c: &ResonanceCoefficients, class: ClassTag, omega: f64, d: f64, dy: f64) -> CmeField {
    let spec = SolveSpec { d, dy, ..SolveSpec::new(class, omega) };
    solve_class(c, &spec).expect("envelope converges").0
}
