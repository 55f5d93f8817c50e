//! Experiment orchestration: expand a configuration into runs, execute each
//! combination in its strong and weak residual forms, and collect the
//! diagnostics tables.
//!
//! One [`Job`] is one (degree, variant, correction level, parameter)
//! combination.  Running a job integrates the problem twice — once per
//! residual form — from the same initial projection, then measures the L²
//! difference of the final states, the conservation drift of each run, and
//! (for affine meshes) the energy change.  Runs that trip the blow-up guard
//! produce `UNSTABLE` table entries; the runner distinguishes instabilities
//! the theory predicts (the facet-Lobatto variant with a central flux) from
//! unexpected ones, which are reported for a nonzero exit.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::acceptance;
use crate::config::{ConfigError, CorrectionLevel, Problem, RunConfig};
use crate::diagnostics::{
    conservation_functional, emit_tables, energy_norm_squared, l2_difference, DiagnosticsError,
    DiagnosticsRecord, TableCell,
};
use crate::mesh::{periodic_connectivity, Mesh, MeshError};
use crate::operators::{InnerProductVariant, OperatorError, ReferenceOperators};
use crate::physics::{vortex_initial_condition, AdvectionLaw, EulerLaw, Law, VortexParams};
use crate::refelem::{load_rule_file, RefElemError, TriangleRule};
use crate::solver::{
    init_projection, time_step_size, Discretization, ResidualForm, RunOutcome, Scheme,
    SolutionState, SolverError, TimeStep,
};

/// Advection velocity of the experiment suite.
pub const ADVECTION_VELOCITY: [f64; 2] = [1.0, 1.0];
/// Ratio of specific heats for the Euler experiments.
pub const EULER_GAMMA: f64 = 1.4;

/// Errors that abort the whole experiment run (as opposed to per-run
/// instabilities, which are recorded in the tables).
#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    RefElem(#[from] RefElemError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
}

/// One experiment combination, run in both residual forms.
#[derive(Debug, Clone)]
pub struct Job {
    pub p: usize,
    pub variant: InnerProductVariant,
    pub level: CorrectionLevel,
    /// Resolved numeric correction level.
    pub c: f64,
    /// Upwinding parameter; `None` for the Euler problem (always Roe flux).
    pub lambda: Option<f64>,
    pub strong: ResidualForm,
    pub weak: ResidualForm,
}

impl Job {
    /// Short human-readable description for progress and error reporting.
    pub fn label(&self, problem: Problem) -> String {
        let mut label = format!(
            "{} p={} {} c={}",
            problem.name(),
            self.p,
            self.variant.name(),
            self.level.label()
        );
        if let Some(lambda) = self.lambda {
            label.push_str(&format!(" λ={lambda}"));
        }
        label
    }
}

/// Expand a configuration into the ordered list of jobs.
pub fn expand_jobs(config: &RunConfig) -> Result<Vec<Job>, ConfigError> {
    let mut jobs = Vec::new();
    for &p in &config.p_values {
        for &variant in &config.variants {
            for &level in &config.c_levels {
                let c = level.value(p)?;
                let (strong, weak) = config.form_pair(level);
                let lambdas: Vec<Option<f64>> = match config.problem {
                    Problem::Advection => config.lambdas.iter().map(|&l| Some(l)).collect(),
                    Problem::Euler => vec![None],
                };
                for lambda in lambdas {
                    jobs.push(Job {
                        p,
                        variant,
                        level,
                        c,
                        lambda,
                        strong,
                        weak,
                    });
                }
            }
        }
    }
    Ok(jobs)
}

/// Whether an unstable run is the one the theory predicts: the
/// facet-Lobatto inner product loses the summation-by-parts property, and
/// without interface dissipation (λ = 0) the advection spectrum leaks into
/// the right half plane.
pub fn instability_expected(problem: Problem, variant: InnerProductVariant, lambda: Option<f64>) -> bool {
    problem == Problem::Advection && !variant.is_sbp() && lambda == Some(0.0)
}

/// Result of one completed or aborted run of a single residual form.
struct SideRun {
    stable: bool,
    /// Reason the run stopped early, when it did.
    note: Option<String>,
    state: SolutionState,
    drift: Option<Vec<f64>>,
    delta_e: Option<f64>,
}

fn run_side(
    disc: &Discretization,
    form: ResidualForm,
    state0: &SolutionState,
    step: &TimeStep,
    c0: &[f64],
    e0: Option<f64>,
) -> Result<SideRun, RunnerError> {
    let scheme = Scheme::new(disc, form)?;
    let mut state = SolutionState {
        t: state0.t,
        coeffs: state0.coeffs.clone(),
    };
    let outcome = match scheme.run(&mut state, step.dt, step.steps, None) {
        Ok(outcome) => outcome,
        // A state leaving the admissible set mid-run is an instability of
        // the discretization, not a defect of the experiment driver.
        Err(SolverError::Physics { elem, source }) => {
            return Ok(SideRun {
                stable: false,
                note: Some(format!("inadmissible state in element {elem}: {source}")),
                state,
                drift: None,
                delta_e: None,
            });
        }
        Err(err) => return Err(err.into()),
    };
    match outcome {
        RunOutcome::Completed => {
            let c_final = conservation_functional(&state, disc);
            let drift: Vec<f64> = c_final.iter().zip(c0).map(|(a, b)| a - b).collect();
            let delta_e = match e0 {
                Some(e0) => Some(energy_norm_squared(&state, disc)? - e0),
                None => None,
            };
            Ok(SideRun {
                stable: true,
                note: None,
                state,
                drift: Some(drift),
                delta_e,
            })
        }
        RunOutcome::Unstable { step: at, t } => Ok(SideRun {
            stable: false,
            note: Some(format!("blow-up guard tripped at step {at}, t = {t:.4}")),
            state,
            drift: None,
            delta_e: None,
        }),
    }
}

/// Records and anomaly notes produced by one job.
#[derive(Debug)]
pub struct JobOutcome {
    pub records: Vec<DiagnosticsRecord>,
    /// Descriptions of instabilities the theory does not predict.
    pub unexpected: Vec<String>,
}

fn drift_cell(side: &SideRun, equation: usize) -> TableCell {
    match (&side.drift, side.stable) {
        (Some(drift), true) => TableCell::Value(drift[equation]),
        _ => TableCell::Unstable,
    }
}

fn energy_cell(side: &SideRun, defined: bool) -> TableCell {
    if !defined {
        return TableCell::NotApplicable;
    }
    match (side.delta_e, side.stable) {
        (Some(de), true) => TableCell::Value(de),
        _ => TableCell::Unstable,
    }
}

/// Build the discretization of a job and run it in both forms.
pub fn run_job(
    config: &RunConfig,
    job: &Job,
    volume_rule: Option<&TriangleRule>,
) -> Result<JobOutcome, RunnerError> {
    let p_map = config.p_map_for(job.p);
    let ops = ReferenceOperators::build(job.variant, job.p, job.c, volume_rule)?;
    // The experiment meshes are always warped; the mapping degree controls
    // how the warp is interpolated (p_map = 1 keeps the elements affine,
    // with displaced vertices and straight edges).
    let mesh = Mesh::split_cartesian(config.m, config.length, p_map)?.warped()?;
    let (law, lambda) = match config.problem {
        Problem::Advection => (
            Law::Advection(AdvectionLaw {
                velocity: ADVECTION_VELOCITY,
            }),
            job.lambda.unwrap_or(1.0),
        ),
        Problem::Euler => (Law::Euler(EulerLaw { gamma: EULER_GAMMA }), 1.0),
    };
    let disc = Discretization::new(ops, mesh, law, lambda)?;

    let length = config.length;
    let state0 = match config.problem {
        Problem::Advection => init_projection(&disc, |x, out| {
            let arg = 2.0 * std::f64::consts::PI / length;
            out[0] = (arg * x[0]).sin() * (arg * x[1]).sin();
            Ok(())
        })?,
        Problem::Euler => {
            let euler = EulerLaw { gamma: EULER_GAMMA };
            let params = VortexParams::subsonic(length);
            init_projection(&disc, |x, out| {
                out.copy_from_slice(&vortex_initial_condition(&euler, &params, x)?);
                Ok(())
            })?
        }
    };

    let h = config.length / config.m as f64;
    let step = time_step_size(config.t_final(), h, config.wave_speed(), job.p, config.beta);
    let c0 = conservation_functional(&state0, &disc);
    let energy_defined = disc.mesh.is_affine();
    let e0 = if energy_defined {
        Some(energy_norm_squared(&state0, &disc)?)
    } else {
        None
    };

    let strong = run_side(&disc, job.strong, &state0, &step, &c0, e0)?;
    let weak = run_side(&disc, job.weak, &state0, &step, &c0, e0)?;

    let equivalence_by_eq: Option<Vec<f64>> = if strong.stable && weak.stable {
        Some(l2_difference(&strong.state, &weak.state, &disc)?)
    } else {
        None
    };
    let equivalence_cell = |equation: usize| match &equivalence_by_eq {
        Some(values) => TableCell::Value(values[equation]),
        None => TableCell::Unstable,
    };

    let mut unexpected = Vec::new();
    let expected = instability_expected(config.problem, job.variant, job.lambda);
    for (form, side) in [(job.strong, &strong), (job.weak, &weak)] {
        if !side.stable && !expected {
            let note = side.note.as_deref().unwrap_or("stopped early");
            unexpected.push(format!("{} {form}: {note}", job.label(config.problem)));
        }
    }

    let params: Vec<String> = match config.problem {
        Problem::Advection => vec![format!("{}", job.lambda.unwrap_or(1.0))],
        Problem::Euler => EulerLaw::EQUATION_LABELS
            .iter()
            .map(|s| s.to_string())
            .collect(),
    };
    let records = params
        .iter()
        .enumerate()
        .map(|(equation, param)| DiagnosticsRecord {
            problem: config.problem.name().to_string(),
            p: job.p,
            variant: job.variant,
            c: job.c,
            param: param.clone(),
            equivalence: equivalence_cell(equation),
            conservation_strong: drift_cell(&strong, equation),
            conservation_weak: drift_cell(&weak, equation),
            energy_strong: energy_cell(&strong, energy_defined),
            energy_weak: energy_cell(&weak, energy_defined),
            stable_strong: strong.stable,
            stable_weak: weak.stable,
        })
        .collect();

    Ok(JobOutcome {
        records,
        unexpected,
    })
}

/// Execution options of [`run_experiments`].
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Directory receiving the result tables.
    pub output_dir: PathBuf,
    /// Compare the results against the acceptance thresholds.
    pub check: bool,
    /// For the Euler problem, run the full reference matrix
    /// (`m = 16`, `p ∈ {2, 3, 4}`, `p_map = p`) instead of the configured
    /// scale.
    pub full: bool,
    /// Dump the reference operators of every combination before solving.
    pub dump_operators: Option<PathBuf>,
    /// Dump the meshes of every mapping degree before solving.
    pub dump_mesh: Option<PathBuf>,
    /// Print one progress line per run to standard output.
    pub verbose: bool,
}

impl RunOptions {
    pub fn new(output_dir: impl Into<PathBuf>) -> Self {
        RunOptions {
            output_dir: output_dir.into(),
            check: false,
            full: false,
            dump_operators: None,
            dump_mesh: None,
            verbose: false,
        }
    }
}

/// Results of a whole experiment run.
#[derive(Debug)]
pub struct RunReport {
    pub records: Vec<DiagnosticsRecord>,
    pub table_paths: Vec<PathBuf>,
    /// Failures from the acceptance checks (empty unless `check` was set).
    pub check_failures: Vec<String>,
    /// Instabilities the theory does not predict.
    pub unexpected: Vec<String>,
}

impl RunReport {
    /// Process exit code: 0 on success, 3 on acceptance-check failure,
    /// 4 on unexpected instability.
    pub fn exit_code(&self) -> i32 {
        if !self.unexpected.is_empty() {
            4
        } else if !self.check_failures.is_empty() {
            3
        } else {
            0
        }
    }
}

fn full_scale(config: &RunConfig) -> RunConfig {
    let mut config = config.clone();
    if config.problem == Problem::Euler {
        config.m = 16;
        config.p_values = vec![2, 3, 4];
        config.p_map = None;
    }
    config
}

fn dump_artifacts(
    config: &RunConfig,
    jobs: &[Job],
    operators_dir: Option<&Path>,
    mesh_dir: Option<&Path>,
) -> Result<(), RunnerError> {
    if let Some(dir) = operators_dir {
        let mut seen: Vec<(InnerProductVariant, usize, u64)> = Vec::new();
        for job in jobs {
            let key = (job.variant, job.p, job.c.to_bits());
            if seen.contains(&key) {
                continue;
            }
            seen.push(key);
            let ops = ReferenceOperators::build(job.variant, job.p, job.c, None)?;
            let sub = dir.join(format!(
                "{}_p{}_{}",
                job.variant.name(),
                job.p,
                job.level.label()
            ));
            ops.dump(&sub)?;
        }
    }
    if let Some(dir) = mesh_dir {
        let mut seen: Vec<usize> = Vec::new();
        for &p in &config.p_values {
            let p_map = config.p_map_for(p);
            if seen.contains(&p_map) {
                continue;
            }
            seen.push(p_map);
            let mesh = Mesh::split_cartesian(config.m, config.length, p_map)?.warped()?;
            // Any degree-independent facet point set works for pairing; use
            // the facet vertices through a degree-1 operator set.
            let probe = ReferenceOperators::build(InnerProductVariant::QuadratureI, 1, 0.0, None)?;
            let conn = periodic_connectivity(&mesh, &probe.facet_points)?;
            mesh.dump(&conn, &dir.join(format!("mesh_m{}_pmap{}", config.m, p_map)))?;
        }
    }
    Ok(())
}

/// Run the whole experiment matrix of `config`, write the tables, and
/// (optionally) check the results against the acceptance thresholds.
pub fn run_experiments(
    config: &RunConfig,
    options: &RunOptions,
) -> Result<RunReport, RunnerError> {
    let config = if options.full {
        full_scale(config)
    } else {
        config.clone()
    };
    let volume_rule = match &config.volume_rule_file {
        Some(path) => Some(load_rule_file(path)?),
        None => None,
    };
    let jobs = expand_jobs(&config)?;
    dump_artifacts(
        &config,
        &jobs,
        options.dump_operators.as_deref(),
        options.dump_mesh.as_deref(),
    )?;

    let mut records = Vec::new();
    let mut unexpected = Vec::new();
    for job in &jobs {
        if options.verbose {
            println!(
                "running {} ({} + {})",
                job.label(config.problem),
                job.strong,
                job.weak
            );
        }
        let outcome = run_job(&config, job, volume_rule.as_ref())?;
        if options.verbose {
            for rec in &outcome.records {
                println!(
                    "  {}: equivalence {}, drift {} / {}",
                    rec.param, rec.equivalence, rec.conservation_strong, rec.conservation_weak
                );
            }
        }
        records.extend(outcome.records);
        unexpected.extend(outcome.unexpected);
    }

    let table_paths = emit_tables(&records, &options.output_dir)?;

    let mut check_failures = Vec::new();
    if options.check {
        let mut report = acceptance::check_operator_identities(&config.p_values)?;
        match config.problem {
            Problem::Advection => report.merge(acceptance::check_advection_records(&records)),
            Problem::Euler => report.merge(acceptance::check_euler_records(&records)),
        }
        check_failures = report.failures;
    }

    Ok(RunReport {
        records,
        table_paths,
        check_failures,
        unexpected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    fn parse(text: &str) -> RunConfig {
        RunConfig::from_toml_str(text, Path::new("test.toml")).unwrap()
    }

    #[test]
    fn job_expansion_matches_the_experiment_matrix() {
        let advection = parse("problem = \"advection\"\np = [2, 3]");
        let jobs = expand_jobs(&advection).unwrap();
        // 2 degrees × 3 variants × 2 levels × 2 λ.
        assert_eq!(jobs.len(), 24);
        assert!(jobs.iter().all(|j| j.lambda.is_some()));
        for job in &jobs {
            match job.level {
                CorrectionLevel::Dg => {
                    assert_eq!(job.c, 0.0);
                    assert_eq!(job.strong, ResidualForm::StrongDg);
                    assert_eq!(job.weak, ResidualForm::WeakDg);
                }
                CorrectionLevel::Plus => {
                    assert!(job.c > 0.0);
                    assert_eq!(job.strong, ResidualForm::StrongFr);
                    assert_eq!(job.weak, ResidualForm::WeakFiltered);
                }
                CorrectionLevel::Fixed(_) => unreachable!(),
            }
        }

        let euler = parse("problem = \"euler\"");
        let jobs = expand_jobs(&euler).unwrap();
        // 1 degree × 3 variants × 2 levels.
        assert_eq!(jobs.len(), 6);
        assert!(jobs.iter().all(|j| j.lambda.is_none()));
    }

    #[test]
    fn expected_instability_is_limited_to_central_facet_lobatto_advection() {
        use InnerProductVariant as V;
        assert!(instability_expected(
            Problem::Advection,
            V::QuadratureII,
            Some(0.0)
        ));
        assert!(!instability_expected(
            Problem::Advection,
            V::QuadratureII,
            Some(1.0)
        ));
        assert!(!instability_expected(
            Problem::Advection,
            V::QuadratureI,
            Some(0.0)
        ));
        assert!(!instability_expected(Problem::Euler, V::QuadratureII, None));
    }

    #[test]
    fn a_small_advection_run_produces_a_complete_table_row() {
        let config = parse(
            r#"
            problem = "advection"
            variants = ["quadrature-i"]
            c = ["c_dg"]
            lambda = [1.0]

            [mesh]
            m = 2

            [time]
            t_final = 0.01
            "#,
        );
        let dir = std::env::temp_dir().join("tridg_runner_advection_test");
        let _ = std::fs::remove_dir_all(&dir);
        let report = run_experiments(&config, &RunOptions::new(&dir)).unwrap();
        assert!(report.unexpected.is_empty());
        assert_eq!(report.exit_code(), 0);
        assert_eq!(report.records.len(), 1);
        let rec = &report.records[0];
        assert!(rec.stable_strong && rec.stable_weak);
        assert_eq!(rec.param, "1");
        match rec.equivalence {
            TableCell::Value(eq) => assert!(eq <= 1e-10, "strong/weak difference {eq}"),
            other => panic!("expected a value, got {other:?}"),
        }
        match rec.conservation_strong {
            TableCell::Value(drift) => assert!(drift.abs() <= 1e-12),
            other => panic!("expected a value, got {other:?}"),
        }
        assert!(matches!(rec.energy_strong, TableCell::Value(_)));
        assert_eq!(report.table_paths, vec![dir.join("advection_p2.csv")]);
        let table = std::fs::read_to_string(&report.table_paths[0]).unwrap();
        assert_eq!(table.lines().count(), 2);
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn a_small_euler_run_produces_per_equation_rows() {
        let config = parse(
            r#"
            problem = "euler"
            variants = ["quadrature-i"]
            c = ["c_dg"]

            [mesh]
            m = 4

            [time]
            t_final = 0.02
            "#,
        );
        let dir = std::env::temp_dir().join("tridg_runner_euler_test");
        let _ = std::fs::remove_dir_all(&dir);
        let report = run_experiments(&config, &RunOptions::new(&dir)).unwrap();
        assert!(report.unexpected.is_empty());
        assert_eq!(report.records.len(), 4);
        let params: Vec<&str> = report.records.iter().map(|r| r.param.as_str()).collect();
        assert_eq!(params, EulerLaw::EQUATION_LABELS);
        for rec in &report.records {
            assert!(rec.stable_strong && rec.stable_weak);
            // The mapping is curved, so the energy norm is undefined.
            assert_eq!(rec.energy_strong, TableCell::NotApplicable);
            assert_eq!(rec.energy_weak, TableCell::NotApplicable);
            match rec.equivalence {
                TableCell::Value(eq) => assert!(eq <= 1e-9, "strong/weak difference {eq}"),
                other => panic!("expected a value, got {other:?}"),
            }
            match rec.conservation_strong {
                TableCell::Value(drift) => assert!(drift.abs() <= 1e-9),
                other => panic!("expected a value, got {other:?}"),
            }
        }
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn dump_options_write_operator_and_mesh_artifacts() {
        let config = parse(
            r#"
            problem = "advection"
            variants = ["collocation"]
            c = ["c_dg"]
            lambda = [1.0]

            [mesh]
            m = 2

            [time]
            t_final = 0.005
            "#,
        );
        let dir = std::env::temp_dir().join("tridg_runner_dump_test");
        let _ = std::fs::remove_dir_all(&dir);
        let mut options = RunOptions::new(dir.join("out"));
        options.dump_operators = Some(dir.join("ops"));
        options.dump_mesh = Some(dir.join("mesh"));
        run_experiments(&config, &options).unwrap();
        let ops_dir = dir.join("ops").join("collocation_p2_c_dg");
        assert!(ops_dir.is_dir());
        assert!(std::fs::read_dir(&ops_dir).unwrap().count() > 0);
        let mesh_dir = dir.join("mesh").join("mesh_m2_pmap1");
        assert!(mesh_dir.is_dir());
        assert!(std::fs::read_dir(&mesh_dir).unwrap().count() > 0);
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn check_mode_rejects_a_partial_matrix() {
        // A single-variant run cannot certify the acceptance criteria; the
        // coverage check must say so.
        let config = parse(
            r#"
            problem = "advection"
            variants = ["quadrature-i"]
            c = ["c_dg"]
            lambda = [1.0]

            [mesh]
            m = 2

            [time]
            t_final = 0.005
            "#,
        );
        let dir = std::env::temp_dir().join("tridg_runner_check_test");
        let _ = std::fs::remove_dir_all(&dir);
        let mut options = RunOptions::new(&dir);
        options.check = true;
        let report = run_experiments(&config, &options).unwrap();
        assert!(!report.check_failures.is_empty());
        assert_eq!(report.exit_code(), 3);
        assert!(report
            .check_failures
            .iter()
            .any(|f| f.contains("incomplete")));
        let _ = std::fs::remove_dir_all(&dir);
    }
}
