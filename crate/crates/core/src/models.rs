//! Reference models used by the bundled configurations and the tests.

use std::sync::Arc;

use crate::linalg::Matrix;
use crate::systems::{DiscreteLti, LtiModel, NonlinearModel, SystemModel};

/// Two-state LTI controller with direct feedthrough.
pub fn example1_controller() -> LtiModel {
    LtiModel::new(
        Matrix::from_rows(&[&[-1.8, -1.3], &[1.2, -2.5]]),
        Matrix::diag(&[0.2, 0.3]),
        Matrix::from_rows(&[&[0.2, -0.3], &[0.3, 0.15]]),
        Matrix::diag(&[0.5, 0.4]),
    )
    .expect("consistent dimensions")
}

/// Passive plant with cubic damping and linear output `(0.4x₁, 0.5x₂)`.
pub fn example5_plant() -> NonlinearModel {
    NonlinearModel::new(
        "example5_plant",
        2,
        2,
        Arc::new(|x, u| {
            vec![
                -0.7 * x[0] - 0.2 * x[0].powi(3) - 0.5 * x[1] + 0.4 * u[0],
                0.5 * x[0] - 0.3 * x[1].powi(3) + 0.5 * u[1],
            ]
        }),
        Arc::new(|x| vec![0.4 * x[0], 0.5 * x[1]]),
        None,
    )
    .expect("origin is an equilibrium")
}

/// `x₁⁺ = x₂`, `x₂⁺ = u`, `y = x₁ + u`.
pub fn double_integrator() -> DiscreteLti {
    DiscreteLti::new(
        Matrix::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]),
        Matrix::column(&[0.0, 1.0]),
        Matrix::from_rows(&[&[1.0, 0.0]]),
        Matrix::from_rows(&[&[1.0]]),
        0.0,
    )
    .expect("consistent dimensions")
}

/// Looks up a registered continuous-time model by name.
pub fn named_model(name: &str) -> Option<SystemModel> {
    match name {
        "example1_controller" => Some(example1_controller().into()),
        "example5_plant" => Some(example5_plant().into()),
        _ => None,
    }
}

pub const MODEL_NAMES: &[&str] = &["example1_controller", "example5_plant"];
