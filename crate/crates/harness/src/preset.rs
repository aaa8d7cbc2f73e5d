use crate::config::{AlgorithmKind, CovarianceKind, ExperimentConfig, ExplorationKind};

pub const PRESET_NAMES: [&str; 3] = ["fig3", "fig5", "fig6"];

/// Experiment matrix behind one figure, or `None` for an unknown name.
pub fn preset(name: &str) -> Option<Vec<ExperimentConfig>> {
    match name {
        "fig3" => Some(fig3()),
        "fig5" => Some(fig5()),
        "fig6" => Some(fig6()),
        _ => None,
    }
}

/// Exploration modes under plain PI².
fn fig3() -> Vec<ExperimentConfig> {
    [
        ("constant", ExplorationKind::Constant),
        ("per_basis", ExplorationKind::PerBasis),
        ("time_varying", ExplorationKind::TimeVarying),
    ]
    .into_iter()
    .map(|(label, mode)| {
        let mut c = ExperimentConfig::viapoint(&format!("fig3_{label}"), AlgorithmKind::Pi2);
        c.exploration_mode = mode;
        c.replications = 5;
        c
    })
    .collect()
}

/// Weighting schemes with the covariance held fixed, so only the mapping
/// from costs to probabilities differs.
fn fig5() -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for h in [10.0, 5.0] {
        let mut c = ExperimentConfig::viapoint(&format!("fig5_pi2_h{h}"), AlgorithmKind::Pi2);
        c.eliteness_h = Some(h);
        out.push(c);
    }
    for (label, algorithm) in [("cem", AlgorithmKind::Cem), ("cmaes", AlgorithmKind::Cmaes)] {
        for elite in [3, 5] {
            let mut c = ExperimentConfig::viapoint(&format!("fig5_{label}_ke{elite}"), algorithm);
            c.elite_count = Some(elite);
            c.covariance_update = Some(CovarianceKind::None);
            out.push(c);
        }
    }
    for c in &mut out {
        c.replications = 3;
    }
    out
}

/// Fixed versus adapted covariance from three initial exploration magnitudes.
fn fig6() -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for (label, algorithm, base) in [("pi2", AlgorithmKind::Pi2, 0.0), ("pi2cma", AlgorithmKind::Pi2Cma, 100.0)] {
        for exponent in [2, 4, 6] {
            let mut c = ExperimentConfig::viapoint(&format!("fig6_{label}_lambda1e{exponent}"), algorithm);
            c.lambda_init = 10f64.powi(exponent);
            c.base_noise_level = base;
            c.trials_per_update = 20;
            c.updates = 200;
            c.replications = 5;
            out.push(c);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_validates_and_names_are_unique() {
        for name in PRESET_NAMES {
            let configs = preset(name).unwrap();
            let mut names: Vec<_> = configs.iter().map(|c| c.name.clone()).collect();
            names.sort();
            names.dedup();
            assert_eq!(names.len(), configs.len(), "{name}");
            for c in configs {
                c.validate().unwrap();
            }
        }
        assert!(preset("fig4").is_none());
    }
}
