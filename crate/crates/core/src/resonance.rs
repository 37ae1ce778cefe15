//! Mixed second-order resonances `a·b ∈ specA ∪ specB` with `a` expanding and
//! `b` contracting. Their absence in the contracting coordinates is the
//! eligibility condition for a normal form with linear stable part.

use serde::{Deserialize, Serialize};

use crate::normal_form::SpectrumPair;

/// Relative band in which a near miss is reported as a warning.
pub const NEAR_RESONANCE_BAND: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    SpecA,
    SpecB,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub a: f64,
    pub b: f64,
    pub target: f64,
    pub location: Location,
    /// Indices into `spec_a`, `spec_b` and the target spectrum.
    pub indices: (usize, usize, usize),
    pub relative_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceReport {
    pub mixed: Vec<Witness>,
    pub contracting: Vec<Witness>,
    /// Products within [`NEAR_RESONANCE_BAND`] of a target but outside `tol`.
    pub warnings: Vec<Witness>,
    pub eligible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EligibilityVerdict {
    pub eligible: bool,
    pub witnesses: Vec<Witness>,
}

fn relative_gap(product: f64, target: f64) -> f64 {
    (product - target).abs() / target.abs()
}

/// Targets sorted by value, keeping their original index.
fn sorted_targets(values: &[f64]) -> Vec<(f64, usize)> {
    let mut v: Vec<(f64, usize)> = values.iter().copied().zip(0..).collect();
    v.sort_by(|x, y| x.0.total_cmp(&y.0));
    v
}

/// Targets `t` with `|prod - t| <= band * t`, located by binary search on the
/// interval `[prod / (1 + band), prod / (1 - band)]`.
fn matches_in(sorted: &[(f64, usize)], prod: f64, band: f64) -> &[(f64, usize)] {
    let lo = prod / (1.0 + band);
    let hi = if band < 1.0 {
        prod / (1.0 - band)
    } else {
        f64::INFINITY
    };
    let start = sorted.partition_point(|(t, _)| *t < lo);
    let end = sorted.partition_point(|(t, _)| *t <= hi);
    &sorted[start..end.max(start)]
}

pub fn find_resonances(spectra: &SpectrumPair) -> ResonanceReport {
    let targets = [
        (Location::SpecA, sorted_targets(&spectra.spec_a)),
        (Location::SpecB, sorted_targets(&spectra.spec_b)),
    ];
    let mut mixed = Vec::new();
    let mut warnings = Vec::new();
    for (ia, &a) in spectra.spec_a.iter().enumerate() {
        for (ib, &b) in spectra.spec_b.iter().enumerate() {
            let prod = a * b;
            for (location, sorted) in &targets {
                for &(t, it) in matches_in(sorted, prod, NEAR_RESONANCE_BAND.max(spectra.tol)) {
                    let gap = relative_gap(prod, t);
                    let w = Witness {
                        a,
                        b,
                        target: t,
                        location: *location,
                        indices: (ia, ib, it),
                        relative_gap: gap,
                    };
                    if gap <= spectra.tol {
                        mixed.push(w);
                    } else if gap <= NEAR_RESONANCE_BAND {
                        warnings.push(w);
                    }
                }
            }
        }
    }
    let key = |w: &Witness| (w.indices.0, w.indices.1, w.location, w.indices.2);
    mixed.sort_by_key(key);
    warnings.sort_by_key(key);
    let contracting: Vec<Witness> = mixed
        .iter()
        .filter(|w| w.location == Location::SpecB)
        .cloned()
        .collect();
    let eligible = contracting.is_empty();
    ResonanceReport {
        mixed,
        contracting,
        warnings,
        eligible,
    }
}

/// Whether the spectrum permits a normal form with linear stable coordinate.
/// This asserts the eigenvalue hypothesis only; no conjugacy is constructed.
pub fn normal_form_eligible(spectra: &SpectrumPair) -> EligibilityVerdict {
    let report = find_resonances(spectra);
    EligibilityVerdict {
        eligible: report.eligible,
        witnesses: report.contracting,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(a: &[f64], b: &[f64]) -> SpectrumPair {
        SpectrumPair::new(a.to_vec(), b.to_vec(), 1e-9).unwrap()
    }

    #[test]
    fn no_resonance() {
        let r = find_resonances(&pair(&[2.0], &[0.5]));
        assert!(r.mixed.is_empty() && r.eligible);
    }

    #[test]
    fn mixed_only() {
        let r = find_resonances(&pair(&[2.0, 6.0], &[1.0 / 3.0]));
        assert_eq!(r.mixed.len(), 1);
        let w = &r.mixed[0];
        assert_eq!((w.a, w.target, w.location), (6.0, 2.0, Location::SpecA));
        assert!(r.contracting.is_empty() && r.eligible);
    }

    #[test]
    fn contracting_resonance() {
        let r = find_resonances(&pair(&[4.0], &[0.5, 0.125]));
        assert_eq!(r.contracting.len(), 1);
        let w = &r.contracting[0];
        assert_eq!((w.a, w.b, w.target), (4.0, 0.125, 0.5));
        assert!(!r.eligible);
        let v = normal_form_eligible(&pair(&[4.0], &[0.5, 0.125]));
        assert!(!v.eligible);
        assert_eq!(v.witnesses.len(), 1);
    }

    #[test]
    fn near_resonance_inside_tol_is_flagged() {
        let v = normal_form_eligible(&pair(&[2.0], &[0.25 + 1e-12, 0.5]));
        assert!(!v.eligible);
        assert!(v.witnesses[0].relative_gap < 1e-11);
    }

    #[test]
    fn near_miss_outside_tol_is_a_warning() {
        let r = find_resonances(&pair(&[2.0], &[0.25 + 1e-8, 0.5]));
        assert!(r.eligible);
        assert_eq!(r.warnings.len(), 1);
    }
}
