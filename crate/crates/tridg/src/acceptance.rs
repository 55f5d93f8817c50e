//! Shared acceptance thresholds and result checkers.
//!
//! The command-line `--check` mode and the acceptance integration tests
//! evaluate results through this module, so every tolerance has exactly one
//! definition.  The checkers consume [`DiagnosticsRecord`] collections
//! produced by the experiment runner and report violations as plain-text
//! failure messages; an empty failure list means the criteria passed.
//!
//! The advection checks are split by concern — equivalence, conservation,
//! energy, stability — so each can be certified (or fail) independently;
//! [`check_advection_records`] merges all four for the `--check` mode.

use crate::diagnostics::{DiagnosticsRecord, TableCell};
use crate::operators::{
    c_plus, check_divergence_theorem, check_k_annihilation, check_sbp, filter_modal_offblock,
    spd_margin, InnerProductVariant, OperatorError, ReferenceOperators,
};
use crate::physics::EulerLaw;

/// Maximum scaled SBP residual for the SBP inner-product variants.
pub const SBP_RESIDUAL_MAX: f64 = 1e-12;
/// Minimum scaled SBP residual certifying that the facet-Lobatto variant
/// genuinely violates the SBP property.
pub const SBP_QII_RESIDUAL_MIN: f64 = 1e-3;
/// Maximum scaled divergence-theorem residual, all variants.
pub const DIVERGENCE_RESIDUAL_MAX: f64 = 1e-12;
/// Maximum scaled residual of `K D^(m) = 0`.
pub const K_ANNIHILATION_MAX: f64 = 1e-12;
/// Maximum scaled magnitude of filter entries outside the degree-p modal
/// block of `F − I`.
pub const FILTER_OFFBLOCK_MAX: f64 = 1e-12;

/// Maximum strong/weak L² difference for SBP variants, advection.
pub const ADVECTION_EQUIVALENCE_MAX: f64 = 1e-10;
/// Minimum strong/weak L² difference certifying genuine inequivalence of
/// the facet-Lobatto variant at λ = 1, advection.
pub const ADVECTION_QII_EQUIVALENCE_MIN: f64 = 1e-4;
/// Maximum conservation drift per stable advection run.
pub const ADVECTION_CONSERVATION_MAX: f64 = 1e-12;
/// Maximum energy change for central-flux (λ = 0) SBP advection runs.
pub const ENERGY_INVARIANCE_MAX: f64 = 1e-12;
/// Maximum strong/weak energy-change disagreement for SBP advection runs.
pub const ENERGY_AGREEMENT_MAX: f64 = 1e-10;
/// Relative band around the reference energy changes of [`ENERGY_REFERENCES`].
pub const ENERGY_RELATIVE_BAND: f64 = 0.05;

/// Maximum strong/weak L² difference per equation for SBP variants, Euler.
pub const EULER_EQUIVALENCE_MAX: f64 = 1e-9;
/// Minimum strong/weak L² difference per equation certifying genuine
/// inequivalence of the facet-Lobatto variant, Euler.
pub const EULER_QII_EQUIVALENCE_MIN: f64 = 1e-5;
/// Maximum conservation drift per equation for Euler runs.
pub const EULER_CONSERVATION_MAX: f64 = 1e-9;

/// Maximum pointwise residual for flux consistency/conservation properties.
pub const FLUX_PROPERTY_MAX: f64 = 1e-13;
/// Maximum residual of a constant state on warped meshes.
pub const FREE_STREAM_MAX: f64 = 1e-11;
/// Maximum pairwise disagreement of the five residual forms.
pub const FORM_AGREEMENT_MAX: f64 = 1e-11;
/// Maximum defect of the semi-discrete energy-rate identity.
pub const ENERGY_RATE_MAX: f64 = 1e-10;

/// Reference energy changes `E(T) − E(0)` for upwinded (λ = 1) advection
/// runs, reproduced within [`ENERGY_RELATIVE_BAND`].  `corrected` selects
/// between the `c = 0` and `c = c_+` rows.
#[derive(Debug, Clone, Copy)]
pub struct EnergyReference {
    pub p: usize,
    pub variant: InnerProductVariant,
    pub corrected: bool,
    pub delta_e: f64,
}

pub const ENERGY_REFERENCES: [EnergyReference; 8] = [
    EnergyReference {
        p: 2,
        variant: InnerProductVariant::QuadratureI,
        corrected: false,
        delta_e: -5.847e-3,
    },
    EnergyReference {
        p: 2,
        variant: InnerProductVariant::QuadratureI,
        corrected: true,
        delta_e: -4.131e-2,
    },
    EnergyReference {
        p: 2,
        variant: InnerProductVariant::Collocation,
        corrected: false,
        delta_e: -5.775e-3,
    },
    EnergyReference {
        p: 2,
        variant: InnerProductVariant::Collocation,
        corrected: true,
        delta_e: -4.008e-2,
    },
    EnergyReference {
        p: 3,
        variant: InnerProductVariant::QuadratureI,
        corrected: false,
        delta_e: -1.942e-4,
    },
    EnergyReference {
        p: 3,
        variant: InnerProductVariant::QuadratureI,
        corrected: true,
        delta_e: -1.860e-3,
    },
    EnergyReference {
        p: 4,
        variant: InnerProductVariant::QuadratureI,
        corrected: false,
        delta_e: -4.326e-6,
    },
    EnergyReference {
        p: 4,
        variant: InnerProductVariant::QuadratureI,
        corrected: true,
        delta_e: -4.887e-5,
    },
];

/// Look up the reference energy change for a run, if one is pinned.
pub fn energy_reference(p: usize, variant: InnerProductVariant, corrected: bool) -> Option<f64> {
    ENERGY_REFERENCES
        .iter()
        .find(|r| r.p == p && r.variant == variant && r.corrected == corrected)
        .map(|r| r.delta_e)
}

/// Outcome of a group of checks: the number evaluated and the failures.
#[derive(Debug, Default)]
pub struct CheckReport {
    pub checks: usize,
    pub failures: Vec<String>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn check(&mut self, ok: bool, message: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures.push(message());
        }
    }

    pub fn merge(&mut self, other: CheckReport) {
        self.checks += other.checks;
        self.failures.extend(other.failures);
    }
}

/// Verify the operator-level identities for every degree in `p_values`:
/// SBP residual bounds (held by the SBP variants, violated by the
/// facet-Lobatto variant), the discrete divergence theorem, `K D^(m) = 0`,
/// positive definiteness of `M` and `M + K`, and the modal support of the
/// filter, at both `c = 0` and `c = c_+`.
pub fn check_operator_identities(p_values: &[usize]) -> Result<CheckReport, OperatorError> {
    let mut report = CheckReport::default();
    for &p in p_values {
        for variant in InnerProductVariant::ALL {
            for c in [0.0, c_plus(p)?] {
                let ops = ReferenceOperators::build(variant, p, c, None)?;
                let name = variant.name();

                let sbp = check_sbp(&ops);
                let sbp_max = sbp[0].max(sbp[1]);
                if variant.is_sbp() {
                    report.check(sbp_max <= SBP_RESIDUAL_MAX, || {
                        format!("{name} p={p} c={c:e}: SBP residual {sbp_max:.3e}")
                    });
                } else {
                    report.check(sbp_max > SBP_QII_RESIDUAL_MIN, || {
                        format!(
                            "{name} p={p} c={c:e}: SBP residual {sbp_max:.3e} \
                             unexpectedly small"
                        )
                    });
                }

                let div = check_divergence_theorem(&ops);
                let div_max = div[0].max(div[1]);
                report.check(div_max <= DIVERGENCE_RESIDUAL_MAX, || {
                    format!("{name} p={p} c={c:e}: divergence residual {div_max:.3e}")
                });

                let kd = check_k_annihilation(&ops);
                report.check(kd <= K_ANNIHILATION_MAX, || {
                    format!("{name} p={p} c={c:e}: K·D residual {kd:.3e}")
                });

                let m_margin = spd_margin(&ops.m);
                report.check(m_margin > 0.0, || {
                    format!("{name} p={p} c={c:e}: M not SPD (margin {m_margin:.3e})")
                });
                let mk_margin = spd_margin(&ops.m_plus_k);
                report.check(mk_margin > 0.0, || {
                    format!("{name} p={p} c={c:e}: M+K not SPD (margin {mk_margin:.3e})")
                });

                let offblock = filter_modal_offblock(&ops);
                report.check(offblock <= FILTER_OFFBLOCK_MAX, || {
                    format!("{name} p={p} c={c:e}: filter off-block {offblock:.3e}")
                });
            }
        }
    }
    Ok(report)
}

fn cell_value(cell: TableCell) -> Option<f64> {
    match cell {
        TableCell::Value(x) => Some(x),
        _ => None,
    }
}

fn row_label(rec: &DiagnosticsRecord) -> String {
    format!(
        "{} p={} {} c={:e} param={}",
        rec.problem,
        rec.p,
        rec.variant.name(),
        rec.c,
        rec.param
    )
}

/// λ of an advection row; a run that blew up is “expected unstable” only
/// for the facet-Lobatto variant with λ = 0.
fn row_lambda(rec: &DiagnosticsRecord) -> Option<f64> {
    rec.param.parse().ok()
}

fn is_expected_unstable_row(rec: &DiagnosticsRecord) -> bool {
    !rec.variant.is_sbp() && row_lambda(rec) == Some(0.0)
}

fn advection_rows(records: &[DiagnosticsRecord]) -> Vec<&DiagnosticsRecord> {
    records
        .iter()
        .filter(|r| r.problem == "advection")
        .collect()
}

fn check_coverage(
    report: &mut CheckReport,
    records: &[&DiagnosticsRecord],
    problem: &str,
    params: &[String],
) {
    let mut p_values: Vec<usize> = records.iter().map(|r| r.p).collect();
    p_values.sort_unstable();
    p_values.dedup();
    report.check(!records.is_empty(), || {
        format!("no {problem} records to check")
    });
    for &p in &p_values {
        for variant in InnerProductVariant::ALL {
            for corrected in [false, true] {
                for param in params {
                    let found = records.iter().any(|r| {
                        r.p == p
                            && r.variant == variant
                            && (r.c != 0.0) == corrected
                            && r.param == *param
                    });
                    report.check(found, || {
                        format!(
                            "{problem} matrix incomplete for p={p}: missing {} {} \
                             param={param}",
                            variant.name(),
                            if corrected { "c_plus" } else { "c_dg" },
                        )
                    });
                }
            }
        }
    }
}

fn advection_coverage(report: &mut CheckReport, rows: &[&DiagnosticsRecord]) {
    check_coverage(report, rows, "advection", &["0".to_string(), "1".to_string()]);
}

/// Strong/weak equivalence bounds: tiny for SBP variants, visibly broken
/// for the facet-Lobatto variant at λ = 1.
fn equivalence_checks(report: &mut CheckReport, rows: &[&DiagnosticsRecord]) {
    for rec in rows {
        if is_expected_unstable_row(rec) {
            continue;
        }
        let label = row_label(rec);
        match cell_value(rec.equivalence) {
            Some(eq) if rec.variant.is_sbp() => {
                report.check(eq <= ADVECTION_EQUIVALENCE_MAX, || {
                    format!("{label}: equivalence {eq:.3e} above {ADVECTION_EQUIVALENCE_MAX:e}")
                })
            }
            Some(eq) => report.check(eq >= ADVECTION_QII_EQUIVALENCE_MIN, || {
                format!(
                    "{label}: equivalence {eq:.3e} below {ADVECTION_QII_EQUIVALENCE_MIN:e}; \
                     the variant should visibly break strong/weak equivalence"
                )
            }),
            None => report.check(false, || format!("{label}: missing equivalence value")),
        }
    }
}

/// Conservation drift of every stable run, strong and weak.
fn conservation_checks(report: &mut CheckReport, rows: &[&DiagnosticsRecord]) {
    for rec in rows {
        let label = row_label(rec);
        for (side, stable, cell) in [
            ("strong", rec.stable_strong, rec.conservation_strong),
            ("weak", rec.stable_weak, rec.conservation_weak),
        ] {
            if !stable {
                continue;
            }
            match cell_value(cell) {
                Some(drift) => {
                    report.check(drift.abs() <= ADVECTION_CONSERVATION_MAX, || {
                        format!("{label}: {side} conservation drift {drift:.3e}")
                    })
                }
                None => report.check(false, || {
                    format!("{label}: missing {side} conservation value")
                }),
            }
        }
    }
}

/// Energy behaviour: exact invariance for central-flux SBP runs, strict
/// dissipation (with strong/weak agreement and pinned reference values)
/// for upwinded runs.
fn energy_checks(report: &mut CheckReport, rows: &[&DiagnosticsRecord]) {
    for rec in rows {
        if is_expected_unstable_row(rec) {
            continue;
        }
        let label = row_label(rec);
        let Some(lambda) = row_lambda(rec) else {
            report.check(false, || format!("{label}: unparseable λ"));
            continue;
        };
        let (Some(de_s), Some(de_w)) = (cell_value(rec.energy_strong), cell_value(rec.energy_weak))
        else {
            report.check(false, || format!("{label}: missing energy values"));
            continue;
        };
        if lambda == 0.0 {
            // λ = 0 with an SBP variant conserves energy exactly.
            report.check(
                de_s.abs() <= ENERGY_INVARIANCE_MAX && de_w.abs() <= ENERGY_INVARIANCE_MAX,
                || format!("{label}: central-flux energy drift {de_s:.3e}/{de_w:.3e}"),
            );
        } else {
            report.check(de_s < 0.0 && de_w < 0.0, || {
                format!("{label}: upwinded energy change {de_s:.3e}/{de_w:.3e} not negative")
            });
            if rec.variant.is_sbp() {
                report.check((de_s - de_w).abs() <= ENERGY_AGREEMENT_MAX, || {
                    format!(
                        "{label}: strong/weak energy changes disagree by {:.3e}",
                        (de_s - de_w).abs()
                    )
                });
            }
            if let Some(reference) = energy_reference(rec.p, rec.variant, rec.c != 0.0) {
                let rel = (de_s - reference).abs() / reference.abs();
                report.check(rel <= ENERGY_RELATIVE_BAND, || {
                    format!(
                        "{label}: energy change {de_s:.4e} deviates {rel:.3} \
                         from reference {reference:.4e}"
                    )
                });
            }
        }
    }
}

/// Stability pattern: the facet-Lobatto variant with a central flux must
/// trip the blow-up guard before the final time in both forms; every other
/// combination must complete.
fn stability_checks(report: &mut CheckReport, rows: &[&DiagnosticsRecord]) {
    for rec in rows {
        let label = row_label(rec);
        if is_expected_unstable_row(rec) {
            report.check(!rec.stable_strong && !rec.stable_weak, || {
                format!("{label}: expected both runs to trip the blow-up guard before t = T")
            });
        } else {
            report.check(rec.stable_strong && rec.stable_weak, || {
                format!("{label}: unexpected instability")
            });
        }
    }
}

/// Criterion check: strong/weak equivalence magnitudes of the advection
/// experiment matrix.
pub fn check_advection_equivalence(records: &[DiagnosticsRecord]) -> CheckReport {
    let mut report = CheckReport::default();
    let rows = advection_rows(records);
    advection_coverage(&mut report, &rows);
    equivalence_checks(&mut report, &rows);
    report
}

/// Criterion check: conservation drift of the advection experiment matrix.
pub fn check_advection_conservation(records: &[DiagnosticsRecord]) -> CheckReport {
    let mut report = CheckReport::default();
    let rows = advection_rows(records);
    advection_coverage(&mut report, &rows);
    conservation_checks(&mut report, &rows);
    report
}

/// Criterion check: energy invariance/dissipation of the advection
/// experiment matrix, including the pinned reference values.
pub fn check_advection_energy(records: &[DiagnosticsRecord]) -> CheckReport {
    let mut report = CheckReport::default();
    let rows = advection_rows(records);
    advection_coverage(&mut report, &rows);
    energy_checks(&mut report, &rows);
    report
}

/// Criterion check: the stability pattern of the advection experiment
/// matrix (expected blow-ups happen, nothing else blows up).
pub fn check_advection_stability(records: &[DiagnosticsRecord]) -> CheckReport {
    let mut report = CheckReport::default();
    let rows = advection_rows(records);
    advection_coverage(&mut report, &rows);
    stability_checks(&mut report, &rows);
    report
}

/// Check the advection experiment records against every advection
/// criterion: equivalence bounds, conservation drift, energy behaviour,
/// and the expected stability pattern.  Each degree present is required to
/// span the full variants × {c_dg, c_plus} × {λ=0, λ=1} matrix.
pub fn check_advection_records(records: &[DiagnosticsRecord]) -> CheckReport {
    let mut report = CheckReport::default();
    let rows = advection_rows(records);
    advection_coverage(&mut report, &rows);
    equivalence_checks(&mut report, &rows);
    conservation_checks(&mut report, &rows);
    energy_checks(&mut report, &rows);
    stability_checks(&mut report, &rows);
    report
}

/// Check the Euler experiment records: per-equation equivalence bounds and
/// conservation drift, with every run completing stably.  Each degree
/// present is required to span the full variants × {c_dg, c_plus} ×
/// equations matrix.
pub fn check_euler_records(records: &[DiagnosticsRecord]) -> CheckReport {
    let mut report = CheckReport::default();
    let rows: Vec<&DiagnosticsRecord> =
        records.iter().filter(|r| r.problem == "euler").collect();
    let params: Vec<String> = EulerLaw::EQUATION_LABELS
        .iter()
        .map(|s| s.to_string())
        .collect();
    check_coverage(&mut report, &rows, "euler", &params);

    for rec in rows {
        let label = row_label(rec);
        report.check(rec.stable_strong && rec.stable_weak, || {
            format!("{label}: unexpected instability")
        });
        if !(rec.stable_strong && rec.stable_weak) {
            continue;
        }

        match cell_value(rec.equivalence) {
            Some(eq) if rec.variant.is_sbp() => {
                report.check(eq <= EULER_EQUIVALENCE_MAX, || {
                    format!("{label}: equivalence {eq:.3e} above {EULER_EQUIVALENCE_MAX:e}")
                })
            }
            Some(eq) => report.check(eq >= EULER_QII_EQUIVALENCE_MIN, || {
                format!(
                    "{label}: equivalence {eq:.3e} below {EULER_QII_EQUIVALENCE_MIN:e}; \
                     the variant should visibly break strong/weak equivalence"
                )
            }),
            None => report.check(false, || format!("{label}: missing equivalence value")),
        }

        for (side, cell) in [
            ("strong", rec.conservation_strong),
            ("weak", rec.conservation_weak),
        ] {
            match cell_value(cell) {
                Some(drift) => report.check(drift.abs() <= EULER_CONSERVATION_MAX, || {
                    format!("{label}: {side} conservation drift {drift:.3e}")
                }),
                None => report.check(false, || {
                    format!("{label}: missing {side} conservation value")
                }),
            }
        }
    }
    report
}
