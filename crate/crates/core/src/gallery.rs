//! Built-in scenarios, shipped with the crate.

use crate::scenario::{parse_scenario, Scenario, ScenarioError};

pub const GALLERY: &[(&str, &str)] = &[
    ("g1_cubic_2d", include_str!("../gallery/g1_cubic_2d.toml")),
    ("g2_quintic_2d", include_str!("../gallery/g2_quintic_2d.toml")),
    ("g3_diagonal_3d", include_str!("../gallery/g3_diagonal_3d.toml")),
    ("g4_jordan_3d", include_str!("../gallery/g4_jordan_3d.toml")),
    ("g5_lambda_perturbed", include_str!("../gallery/g5_lambda_perturbed.toml")),
    ("g6_one_sided", include_str!("../gallery/g6_one_sided.toml")),
    ("g7_resonance_spectra", include_str!("../gallery/g7_resonance_spectra.toml")),
    ("g8_oscillating_contact", include_str!("../gallery/g8_oscillating_contact.toml")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    GALLERY.iter().map(|(n, _)| *n)
}

pub fn source(name: &str) -> Option<&'static str> {
    GALLERY.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// `None` for unknown names.
pub fn load(name: &str) -> Option<Result<Scenario, ScenarioError>> {
    source(name).map(parse_scenario)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_entry_parses() {
        for name in names() {
            let s = load(name).unwrap().unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.name(), name);
        }
    }

    #[test]
    fn g1_fields() {
        let s = load("g1_cubic_2d").unwrap().unwrap();
        assert_eq!(s.gamma.as_ref().unwrap().l(), 3);
        let m = s.map.as_ref().unwrap();
        assert_eq!(m.betas(), &[2.0]);
        assert_eq!(m.alpha(), 0.5);
    }
}
