//! Solution functionals and experiment tables.
//!
//! Three scalar diagnostics summarise a run:
//!
//! * [`l2_difference`] — the broken L² distance between two solutions of the
//!   same discretization, evaluated per equation with a dedicated degree-`4p`
//!   volume rule.  Comparing the final states of a strong-form and a
//!   weak-form run measures their algebraic equivalence.
//! * [`conservation_functional`] — the conserved quantity
//!   `C_e = Σ_κ 1ᵀ W J^κ V u^{κ,e}`.  Its drift `C_e(T) − C_e(0)` over a
//!   periodic run measures global conservation.
//! * [`energy_norm_squared`] — the broken energy
//!   `Σ_κ J^κ (u^κ)ᵀ (M + K) u^κ`, defined on affine meshes where the
//!   per-element mass reduces to a constant multiple of the reference mass.
//!
//! A [`DiagnosticsRecord`] collects the results of one experiment row and
//! [`emit_tables`] renders record collections as one CSV file per
//! problem/degree pair.  [`StepStream`] writes a per-step time series of
//! energy and conservation while a run is in progress.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use thiserror::Error;

use crate::operators::InnerProductVariant;
use crate::refelem::{triangle_volume_rule, RefElemError};
use crate::solver::{Discretization, SolutionState};

/// Errors produced by the diagnostics routines.
#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error(transparent)]
    RefElem(#[from] RefElemError),
    /// The broken energy norm is only defined where the element mass matrix
    /// is a constant multiple of the reference mass matrix.
    #[error(
        "the discrete energy norm requires an affine mesh (p_map = 1); \
         this mesh has curved elements"
    )]
    NonAffineEnergy,
    /// Two-state functionals need both states on one discretization.
    #[error("solution states differ in shape: {left} vs {right}")]
    ShapeMismatch { left: String, right: String },
    #[error("failed to write diagnostics file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn shape_of(state: &SolutionState) -> String {
    match state.coeffs.first() {
        Some(c) => format!(
            "{} equation(s) of {}x{}",
            state.coeffs.len(),
            c.nrows(),
            c.ncols()
        ),
        None => "0 equations".to_string(),
    }
}

fn check_same_shape(a: &SolutionState, b: &SolutionState) -> Result<(), DiagnosticsError> {
    let same = a.coeffs.len() == b.coeffs.len()
        && a.coeffs
            .iter()
            .zip(&b.coeffs)
            .all(|(x, y)| x.shape() == y.shape());
    if same {
        Ok(())
    } else {
        Err(DiagnosticsError::ShapeMismatch {
            left: shape_of(a),
            right: shape_of(b),
        })
    }
}

/// Per-equation broken L² distance `√(Σ_κ ∫ (u_a − u_b)² J dx̂)` between two
/// solutions of the same discretization.
///
/// The integrals use a dedicated degree-`4p` volume rule together with the
/// exact mapping Jacobian, so the distance is an honest function-space
/// quantity rather than a reuse of the scheme's own inner product.  Summation
/// runs over elements in index order; calls with identical inputs produce
/// bitwise identical results.
pub fn l2_difference(
    a: &SolutionState,
    b: &SolutionState,
    disc: &Discretization,
) -> Result<Vec<f64>, DiagnosticsError> {
    check_same_shape(a, b)?;
    let rule = triangle_volume_rule(4 * disc.ops.p)?;
    let v_rule = disc.ops.basis.vandermonde(&rule.points);
    let mesh = &disc.mesh;
    let n_rule = rule.len();
    let k_total = mesh.n_elements();

    // Mapping Jacobian determinants at the rule points, all elements.
    let mut jdet = DMatrix::zeros(n_rule, k_total);
    for elem in 0..k_total {
        let jac = mesh.map_jacobians(elem, &rule.points);
        for (q, j) in jac.iter().enumerate() {
            jdet[(q, elem)] = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        }
    }

    let mut out = Vec::with_capacity(a.coeffs.len());
    for (ca, cb) in a.coeffs.iter().zip(&b.coeffs) {
        let vals = &v_rule * (ca - cb);
        let mut total = 0.0;
        for elem in 0..k_total {
            let mut acc = 0.0;
            for (q, &wq) in rule.weights.iter().enumerate() {
                let d = vals[(q, elem)];
                acc += wq * d * d * jdet[(q, elem)];
            }
            total += acc;
        }
        out.push(total.sqrt());
    }
    Ok(out)
}

/// Per-equation conserved quantity `C_e = Σ_κ 1ᵀ W J^κ V u^{κ,e}`.
///
/// `W` is the volume weight matrix of the scheme's own inner product (dense
/// for the collocation variant), `J^κ` the diagonal of mapping Jacobians at
/// the volume points.  For a compliant scheme the drift `C_e(T) − C_e(0)`
/// over a periodic run vanishes to rounding.  Summation runs over elements
/// in index order for reproducibility.
pub fn conservation_functional(state: &SolutionState, disc: &Discretization) -> Vec<f64> {
    let weights = disc.ops.w.row_sum(); // the row vector 1ᵀW
    let j = &disc.geom.j_vol;
    state
        .coeffs
        .iter()
        .map(|coeffs| {
            let vals = &disc.ops.v * coeffs;
            let mut total = 0.0;
            for elem in 0..vals.ncols() {
                let mut acc = 0.0;
                for i in 0..vals.nrows() {
                    acc += weights[i] * j[(i, elem)] * vals[(i, elem)];
                }
                total += acc;
            }
            total
        })
        .collect()
}

/// Broken energy `Σ_e Σ_κ J^κ (u^{κ,e})ᵀ (M + K) u^{κ,e}`, summed over all
/// equations.
///
/// Defined only on affine meshes, where the element mass matrix is the
/// constant `J^κ` times the reference mass and `M + K` induces a norm on the
/// coefficients.  On curved meshes the request is refused with
/// [`DiagnosticsError::NonAffineEnergy`].
pub fn energy_norm_squared(
    state: &SolutionState,
    disc: &Discretization,
) -> Result<f64, DiagnosticsError> {
    if !disc.mesh.is_affine() {
        return Err(DiagnosticsError::NonAffineEnergy);
    }
    let mk = &disc.ops.m_plus_k;
    let mut total = 0.0;
    for coeffs in &state.coeffs {
        let mk_coeffs = mk * coeffs;
        for elem in 0..coeffs.ncols() {
            let quad = coeffs.column(elem).dot(&mk_coeffs.column(elem));
            total += disc.geom.j_vol[(0, elem)] * quad;
        }
    }
    Ok(total)
}

/// One rendered value of an experiment table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TableCell {
    /// A measured value, rendered in full double precision.
    Value(f64),
    /// The run this cell depends on tripped the blow-up guard; rendered as
    /// the literal token `UNSTABLE`.
    Unstable,
    /// The quantity is not defined for this row (for example the energy
    /// columns of a problem run on a curved mesh); rendered empty.
    NotApplicable,
}

impl std::fmt::Display for TableCell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TableCell::Value(x) => write!(f, "{x:.16e}"),
            TableCell::Unstable => write!(f, "UNSTABLE"),
            TableCell::NotApplicable => Ok(()),
        }
    }
}

/// Results of one experiment row: one (variant, c, parameter) combination
/// run in both a strong and a weak residual form.
///
/// `param` carries the row parameter — the upwinding value `λ` for scalar
/// advection rows, the equation name for systems with per-equation rows —
/// and must not contain commas.  The stability flags are `false` exactly
/// when the corresponding run tripped the blow-up guard.
#[derive(Debug, Clone)]
pub struct DiagnosticsRecord {
    pub problem: String,
    pub p: usize,
    pub variant: InnerProductVariant,
    pub c: f64,
    pub param: String,
    /// L² difference between the strong-form and weak-form final states.
    pub equivalence: TableCell,
    /// Conservation drift `C(T) − C(0)` of the strong-form run.
    pub conservation_strong: TableCell,
    /// Conservation drift of the weak-form run.
    pub conservation_weak: TableCell,
    /// Energy difference `E(T) − E(0)` of the strong-form run.
    pub energy_strong: TableCell,
    /// Energy difference of the weak-form run.
    pub energy_weak: TableCell,
    pub stable_strong: bool,
    pub stable_weak: bool,
}

/// Header line shared by all experiment tables.
pub const TABLE_HEADER: &str = "variant,c,param,equivalence,conservation_strong,\
                                conservation_weak,energy_strong,energy_weak,\
                                stable_strong,stable_weak";

/// Write one experiment table `<problem>_p<p>.csv` under `destination`,
/// creating the directory if needed.  An empty record set produces a
/// header-only file.  Output bytes depend only on the records, so repeated
/// calls with equal input are byte-identical.
pub fn write_table<'a, I>(
    problem: &str,
    p: usize,
    records: I,
    destination: &Path,
) -> Result<PathBuf, DiagnosticsError>
where
    I: IntoIterator<Item = &'a DiagnosticsRecord>,
{
    let mut text = String::from(TABLE_HEADER);
    text.push('\n');
    for rec in records {
        text.push_str(&format!(
            "{},{:.16e},{},{},{},{},{},{},{},{}\n",
            rec.variant.name(),
            rec.c,
            rec.param,
            rec.equivalence,
            rec.conservation_strong,
            rec.conservation_weak,
            rec.energy_strong,
            rec.energy_weak,
            rec.stable_strong,
            rec.stable_weak,
        ));
    }
    fs::create_dir_all(destination).map_err(|source| DiagnosticsError::Io {
        path: destination.to_path_buf(),
        source,
    })?;
    let path = destination.join(format!("{problem}_p{p}.csv"));
    fs::write(&path, text).map_err(|source| DiagnosticsError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Group `records` by `(problem, p)` in first-appearance order and write one
/// CSV per group via [`write_table`].  Returns the written paths in group
/// order.
pub fn emit_tables(
    records: &[DiagnosticsRecord],
    destination: &Path,
) -> Result<Vec<PathBuf>, DiagnosticsError> {
    let mut groups: Vec<((&str, usize), Vec<&DiagnosticsRecord>)> = Vec::new();
    for rec in records {
        let key = (rec.problem.as_str(), rec.p);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(rec),
            None => groups.push((key, vec![rec])),
        }
    }
    let mut paths = Vec::with_capacity(groups.len());
    for ((problem, p), members) in groups {
        paths.push(write_table(problem, p, members, destination)?);
    }
    Ok(paths)
}

/// Streams a per-step time series of a run as CSV rows
/// `step,t,energy,conservation_e1..conservation_eN`.
///
/// The energy field is left empty on curved meshes, where the broken energy
/// norm is undefined.
pub struct StepStream<W: Write> {
    sink: W,
    n_equations: usize,
}

impl StepStream<io::BufWriter<fs::File>> {
    /// Create `path` and write the header row for `n_equations` equations.
    pub fn create(path: &Path, n_equations: usize) -> io::Result<Self> {
        let file = fs::File::create(path)?;
        Self::new(io::BufWriter::new(file), n_equations)
    }
}

impl<W: Write> StepStream<W> {
    /// Wrap `sink` and write the header row for `n_equations` equations.
    pub fn new(mut sink: W, n_equations: usize) -> io::Result<Self> {
        let mut header = String::from("step,t,energy");
        for e in 1..=n_equations {
            header.push_str(&format!(",conservation_e{e}"));
        }
        header.push('\n');
        sink.write_all(header.as_bytes())?;
        Ok(Self { sink, n_equations })
    }

    /// Append one row for `state` at step index `step`.
    pub fn record(
        &mut self,
        step: usize,
        state: &SolutionState,
        disc: &Discretization,
    ) -> io::Result<()> {
        debug_assert_eq!(state.coeffs.len(), self.n_equations);
        let mut line = format!("{step},{:.16e},", state.t);
        if let Ok(energy) = energy_norm_squared(state, disc) {
            line.push_str(&format!("{energy:.16e}"));
        }
        for c in conservation_functional(state, disc) {
            line.push_str(&format!(",{c:.16e}"));
        }
        line.push('\n');
        self.sink.write_all(line.as_bytes())
    }

    /// Adapter plugging the stream into the time stepper's per-step hook.
    pub fn hook<'h>(
        &'h mut self,
        disc: &'h Discretization,
    ) -> impl FnMut(usize, &SolutionState) -> io::Result<()> + 'h {
        move |step, state| self.record(step, state, disc)
    }

    /// Flush and release the underlying sink.
    pub fn finish(mut self) -> io::Result<W> {
        self.sink.flush()?;
        Ok(self.sink)
    }
}
