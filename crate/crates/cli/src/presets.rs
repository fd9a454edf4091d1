//! Configurations that regenerate each published figure.

use crate::config::{EnsembleSpec, ExperimentConfig};

/// Ensembles `[c − 5, c + 5]` for `c = 100, 150, …, 400`.
pub fn size_ladder() -> Vec<EnsembleSpec> {
    (100..=400).step_by(50).map(|c| EnsembleSpec::centred(c, 5)).collect()
}

/// Phase portraits and Lyapunov maps across the transition.
pub fn fig1() -> ExperimentConfig {
    ExperimentConfig {
        gammas: vec![0.2, 2.0, 4.0, 6.0],
        ..Default::default()
    }
}

/// KS entropy and the ratio statistic against `γ`; `j = 2500`.
pub fn fig2() -> ExperimentConfig {
    ExperimentConfig {
        gammas: (0..=14).map(|k| 0.5 * k as f64).collect(),
        j: 2500,
        ..Default::default()
    }
}

/// `P(M)` at `γ = 2.6` over `j ∈ [150, 154]`, with Husimi functions of the
/// states nearest to the regular, two mixed and chaotic example values.
pub fn fig3() -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        gammas: vec![2.6],
        j: 150,
        ..Default::default()
    };
    cfg.overlap.ensembles = vec![EnsembleSpec { lo: 150, hi: 154 }];
    cfg.overlap.husimi_targets = vec![-1.0, -0.5161, 0.3075, 0.9744];
    cfg
}

/// Decay of the mixed-state fraction with system size.
pub fn fig4() -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        gammas: vec![2.3, 2.6],
        ..Default::default()
    };
    cfg.overlap.ensembles = size_ladder();
    cfg.overlap.intervals = vec![[-0.8, 0.6], [-0.5, 0.6], [-0.8, 0.7], [-0.2, 0.2]];
    cfg
}

/// Decay exponent of sliding `M` windows of width 0.4.
pub fn fig5() -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        gammas: vec![2.3, 3.0],
        ..Default::default()
    };
    cfg.overlap.ensembles = size_ladder();
    cfg.overlap.scan_width = 0.4;
    cfg
}
