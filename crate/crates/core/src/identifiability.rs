//! Identifiability checks for the generator `(A, c(x))` from a fixed `x0`.
//!
//! * [`check_additive`]: rank of `[x0|Ax0|…|H·₁|AH·₁|…]` with `H = GGᵀ`; exact
//!   (iff) when `A` has distinct eigenvalues, sufficient otherwise.
//! * [`check_controllability`]: `rank [G|AG|…|A^{d-1}G] = d`, sufficient.
//! * [`check_multiplicative`]: A1 (`x0` Krylov rank) and A2 (`v` Krylov rank
//!   under `𝒜 = A⊕A + Σ G_k⊗G_k`), sufficient.
//! * [`check_commuting`]: C1–C3 for commuting coefficients, sufficient.
//!
//! Failures of the additive condition are explained by [`diagnose_subspace`]:
//! all tested vectors have zero weight on some eigen-block of `A`, so
//! they live in a proper `A`-invariant subspace. [`construct_confounder`]
//! turns that block into a second drift matrix with the same law.

use std::fmt::{self, Write as _};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    columns, controllability_matrix, default_rank_tol, frobenius, krylov_columns,
    numerical_rank, real_block_eigen, EigenBlock, Mat, Rank, RealBlockEigen, Vector,
    DEFAULT_GAP_TOL,
};
use crate::models::{AdditiveSde, ModelKind, MultiplicativeSde, SdeModel};
use crate::moments::covariance_additive;
use crate::rng;

/// Block weight `|w_{j,k}|` counts as zero below this fraction of `‖Q⁻¹γ_j‖`.
pub const DEFAULT_WEIGHT_TOL: f64 = 1e-8;
/// Commutator norm, relative to the squared coefficient scale, counted as zero.
pub const DEFAULT_COMMUTE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Identifiable,
    Unidentifiable,
    Inconclusive,
}

impl Verdict {
    /// Process exit code used by the command-line tool.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Identifiable => 0,
            Verdict::Unidentifiable => 2,
            Verdict::Inconclusive => 3,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Identifiable => "identifiable",
            Verdict::Unidentifiable => "unidentifiable",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CheckOptions {
    /// Relative rank tolerance; `None` uses [`default_rank_tol`] for each matrix.
    pub rank_tol: Option<f64>,
    pub gap_tol: f64,
    pub weight_tol: f64,
    pub commute_tol: f64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            rank_tol: None,
            gap_tol: DEFAULT_GAP_TOL,
            weight_tol: DEFAULT_WEIGHT_TOL,
            commute_tol: DEFAULT_COMMUTE_TOL,
        }
    }
}

impl CheckOptions {
    pub fn with_rank_tol(rank_tol: f64) -> Self {
        CheckOptions {
            rank_tol: Some(rank_tol),
            ..Default::default()
        }
    }

    fn rel_tol_for(&self, m: &Mat) -> f64 {
        self.rank_tol
            .unwrap_or_else(|| default_rank_tol(m.nrows(), m.ncols()))
    }

    fn rank(&self, m: &Mat) -> Result<(Rank, f64)> {
        let tol = self.rel_tol_for(m);
        Ok((numerical_rank(m, tol)?, tol))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionResult {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub required_rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub achieved_rank: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub singular_values: Vec<f64>,
    /// Relative rank tolerance actually applied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank_tol: Option<f64>,
    /// Scaled residual for non-rank conditions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    pub passed: bool,
}

impl ConditionResult {
    fn rank(name: &str, required: usize, rank: Rank, tol: f64) -> Self {
        ConditionResult {
            name: name.to_string(),
            required_rank: Some(required),
            achieved_rank: Some(rank.rank),
            passed: rank.rank == required,
            singular_values: rank.singular_values,
            rank_tol: Some(tol),
            residual: None,
        }
    }

    fn flag(name: &str, passed: bool, residual: Option<f64>) -> Self {
        ConditionResult {
            name: name.to_string(),
            required_rank: None,
            achieved_rank: None,
            singular_values: Vec::new(),
            rank_tol: None,
            residual,
            passed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Real,
    ComplexPair,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubspaceDiagnosis {
    /// Zero-based index of the eigen-block every tested vector misses.
    pub block_index: usize,
    pub block_kind: BlockKind,
    pub block: EigenBlock,
    /// `|w_{j,k}|` for the missed block, one per tested vector.
    pub weights: Vec<f64>,
    /// `|w_{j,k'}|` for every vector `j` (rows) and block `k'` (columns).
    pub all_weights: Vec<Vec<f64>>,
    /// Names of the tested vectors, aligned with `weights`.
    pub vector_labels: Vec<String>,
    /// Basis (the columns of `Q` outside the missed block) of the
    /// proper invariant subspace that contains every tested vector.
    #[serde(serialize_with = "crate::linalg::serialize_mat")]
    pub subspace_basis: Mat,
    pub eigenstructure: RealBlockEigen,
}

#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    pub rank_tol: String,
    pub gap_tol: f64,
    pub weight_tol: f64,
    pub commute_tol: f64,
}

impl From<&CheckOptions> for Tolerances {
    fn from(o: &CheckOptions) -> Self {
        Tolerances {
            rank_tol: match o.rank_tol {
                Some(t) => format!("{t:e}"),
                None => format!("{:e}*max(rows,cols)*eps", crate::linalg::RANK_TOL_SCALE),
            },
            gap_tol: o.gap_tol,
            weight_tol: o.weight_tol,
            commute_tol: o.commute_tol,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentReport {
    pub check: String,
    pub verdict: Verdict,
    pub conditions: Vec<ConditionResult>,
    /// Independent consistency checks; they do not enter the verdict.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub cross_checks: Vec<ConditionResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distinct_eigenvalues: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnosis: Option<SubspaceDiagnosis>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub tolerances: Tolerances,
}

impl IdentReport {
    pub fn condition(&self, name: &str) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.name == name)
    }

    pub fn all_passed(&self) -> bool {
        self.conditions.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Eigen-structure of `A`, or `None` when eigenvalues are (numerically) repeated.
fn distinct_eigen(a: &Mat, gap_tol: f64) -> Result<Option<RealBlockEigen>> {
    match real_block_eigen(a, gap_tol) {
        Ok(e) => Ok(Some(e)),
        Err(Error::RepeatedEigenvalues { .. } | Error::SingularEigenbasis) => Ok(None),
        Err(e) => Err(e),
    }
}

/// The tested vectors `{x0, H·₁, …, H·_d}` and their labels.
fn seeds_with_labels(x0: &Vector, h: &Mat) -> (Vec<Vector>, Vec<String>) {
    let mut seeds = vec![x0.clone()];
    seeds.extend(columns(h));
    let mut labels = vec!["x0".to_string()];
    labels.extend((1..=h.ncols()).map(|j| format!("H[:,{j}]")));
    (seeds, labels)
}

/// Krylov rank test for the pair `(A, H)` from `x0`, with diagnosis.
fn rank_condition_report(
    check: &str,
    name: &str,
    a: &Mat,
    h: &Mat,
    x0: &Vector,
    opts: &CheckOptions,
) -> Result<IdentReport> {
    let d = a.nrows();
    let (seeds, labels) = seeds_with_labels(x0, h);
    let krylov = krylov_columns(a, &seeds, d)?;
    let (rank, tol) = opts.rank(&krylov)?;
    let cond = ConditionResult::rank(name, d, rank, tol);
    let eigen = distinct_eigen(a, opts.gap_tol)?;
    let mut notes = Vec::new();
    let mut diagnosis = None;
    let verdict = match (&eigen, cond.passed) {
        (_, true) => Verdict::Identifiable,
        (Some(e), false) => {
            diagnosis = diagnose_with(e, &seeds, &labels, opts.weight_tol);
            if diagnosis.is_none() {
                notes.push("rank deficiency not localized to a single eigen-block at the weight tolerance".into());
            }
            Verdict::Unidentifiable
        }
        (None, false) => {
            notes.push("A has repeated eigenvalues: the rank condition is only sufficient".into());
            Verdict::Inconclusive
        }
    };
    Ok(IdentReport {
        check: check.to_string(),
        verdict,
        conditions: vec![cond],
        cross_checks: Vec::new(),
        distinct_eigenvalues: Some(eigen.is_some()),
        diagnosis,
        notes,
        tolerances: opts.into(),
    })
}

pub fn check_additive(m: &AdditiveSde, opts: &CheckOptions) -> Result<IdentReport> {
    rank_condition_report("additive", "rank_condition", m.a(), &m.h(), m.x0(), opts)
}

/// Controllability of `[A, G]`, plus three cross-checks: the span of
/// `[H|AH|…]` equals that of `[G|AG|…]`; the covariance `V(1)` is nonsingular
/// exactly when the pair is controllable; controllability implies the
/// additive rank condition.
pub fn check_controllability(m: &AdditiveSde, opts: &CheckOptions) -> Result<IdentReport> {
    let d = m.dim();
    let ctrb = controllability_matrix(m.a(), m.g())?;
    let (rank, tol) = opts.rank(&ctrb)?;
    let g_rank = rank.rank;
    let cond = ConditionResult::rank("controllability", d, rank, tol);
    let controllable = cond.passed;

    let h_ctrb = controllability_matrix(m.a(), &m.h())?;
    let (h_rank, h_tol) = opts.rank(&h_ctrb)?;
    let mut span = ConditionResult::rank("span_equality", d, h_rank, h_tol);
    span.required_rank = Some(g_rank);
    span.passed = span.achieved_rank == Some(g_rank);

    let v1 = covariance_additive(m, &[1.0])?.remove(0);
    let (v_rank, v_tol) = opts.rank(&v1)?;
    let mut gram = ConditionResult::rank("covariance_nonsingular", d, v_rank, v_tol);
    gram.passed = (gram.achieved_rank == Some(d)) == controllable;

    let thm = check_additive(m, opts)?;
    let implied = ConditionResult::flag(
        "implies_rank_condition",
        !controllable || thm.verdict == Verdict::Identifiable,
        None,
    );

    Ok(IdentReport {
        check: "controllability".into(),
        verdict: if controllable {
            Verdict::Identifiable
        } else {
            Verdict::Inconclusive
        },
        conditions: vec![cond],
        cross_checks: vec![span, gram, implied],
        distinct_eigenvalues: None,
        diagnosis: None,
        notes: Vec::new(),
        tolerances: opts.into(),
    })
}

pub fn check_multiplicative(m: &MultiplicativeSde, opts: &CheckOptions) -> Result<IdentReport> {
    let d = m.dim();
    let k1 = krylov_columns(m.a(), std::slice::from_ref(m.x0()), d)?;
    let (r1, t1) = opts.rank(&k1)?;
    let a1 = ConditionResult::rank("A1", d, r1, t1);
    let a2 = second_moment_condition("A2", m, opts)?;
    let verdict = if a1.passed && a2.passed {
        Verdict::Identifiable
    } else {
        Verdict::Inconclusive
    };
    Ok(IdentReport {
        check: "multiplicative".into(),
        verdict,
        conditions: vec![a1, a2],
        cross_checks: Vec::new(),
        distinct_eigenvalues: None,
        diagnosis: None,
        notes: Vec::new(),
        tolerances: opts.into(),
    })
}

fn second_moment_condition(
    name: &str,
    m: &MultiplicativeSde,
    opts: &CheckOptions,
) -> Result<ConditionResult> {
    let d = m.dim();
    let q = (d * d + d) / 2;
    let k2 = krylov_columns(&m.big_a(), &[m.v()], q)?;
    let (r2, t2) = opts.rank(&k2)?;
    Ok(ConditionResult::rank(name, q, r2, t2))
}

/// Largest commutator among `[A, G_k]` and `[G_k, G_l]`, in Frobenius norm,
/// divided by the squared coefficient scale `max(1, ‖A‖, ‖G_k‖)²`.
pub fn commutator_residual(m: &MultiplicativeSde) -> f64 {
    let scale = m
        .gs()
        .iter()
        .map(frobenius)
        .fold(frobenius(m.a()).max(1.0), f64::max);
    let comm = |x: &Mat, y: &Mat| frobenius(&(x * y - y * x));
    let mut worst: f64 = 0.0;
    for (k, gk) in m.gs().iter().enumerate() {
        worst = worst.max(comm(m.a(), gk));
        for gl in &m.gs()[k + 1..] {
            worst = worst.max(comm(gk, gl));
        }
    }
    worst / (scale * scale)
}

pub fn check_commuting(m: &MultiplicativeSde, opts: &CheckOptions) -> Result<IdentReport> {
    let d = m.dim();
    let outer = m.x0() * m.x0().transpose();
    let mut h = Mat::zeros(d, d);
    for g in m.gs() {
        h += g * &outer * g.transpose();
    }
    let (seeds, _) = seeds_with_labels(m.x0(), &h);
    let krylov = krylov_columns(m.a(), &seeds, d)?;
    let (r1, t1) = opts.rank(&krylov)?;
    let c1 = ConditionResult::rank("C1", d, r1, t1);
    let c2 = second_moment_condition("C2", m, opts)?;
    let residual = commutator_residual(m);
    let c3 = ConditionResult::flag("C3", residual <= opts.commute_tol, Some(residual));
    let verdict = if c1.passed && c2.passed && c3.passed {
        Verdict::Identifiable
    } else {
        Verdict::Inconclusive
    };
    Ok(IdentReport {
        check: "commuting".into(),
        verdict,
        conditions: vec![c1, c2, c3],
        cross_checks: Vec::new(),
        distinct_eigenvalues: None,
        diagnosis: None,
        notes: Vec::new(),
        tolerances: opts.into(),
    })
}

/// Every applicable check for a model, with an overall verdict.
#[derive(Debug, Clone, Serialize)]
pub struct CheckSummary {
    pub model_type: ModelKind,
    pub verdict: Verdict,
    pub reports: Vec<IdentReport>,
}

impl CheckSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

/// Additive models take the rank-condition verdict (controllability is
/// subsumed). Multiplicative models are identifiable when either sufficient
/// check passes and inconclusive otherwise.
pub fn check_model(model: &SdeModel, opts: &CheckOptions) -> Result<CheckSummary> {
    match model {
        SdeModel::Additive(m) => {
            let main = check_additive(m, opts)?;
            let ctrb = check_controllability(m, opts)?;
            Ok(CheckSummary {
                model_type: ModelKind::Additive,
                verdict: main.verdict,
                reports: vec![main, ctrb],
            })
        }
        SdeModel::Multiplicative(m) => {
            let main = check_multiplicative(m, opts)?;
            let comm = check_commuting(m, opts)?;
            let verdict = if main.verdict == Verdict::Identifiable || comm.verdict == Verdict::Identifiable {
                Verdict::Identifiable
            } else {
                Verdict::Inconclusive
            };
            Ok(CheckSummary {
                model_type: ModelKind::Multiplicative,
                verdict,
                reports: vec![main, comm],
            })
        }
    }
}

fn diagnose_with(
    eigen: &RealBlockEigen,
    vectors: &[Vector],
    labels: &[String],
    weight_tol: f64,
) -> Option<SubspaceDiagnosis> {
    let k_total = eigen.n_blocks();
    let mut all = Vec::with_capacity(vectors.len());
    let mut zero = vec![true; k_total];
    for g in vectors {
        let w = &eigen.q_inv * g;
        let cut = weight_tol * w.norm();
        let row: Vec<f64> = (0..k_total)
            .map(|k| w.rows_range(eigen.block_range(k)).norm())
            .collect();
        for (k, &wk) in row.iter().enumerate() {
            zero[k] &= wk <= cut;
        }
        all.push(row);
    }
    let k = zero.iter().position(|&z| z)?;
    let d = eigen.q.nrows();
    let keep: Vec<usize> = (0..d).filter(|c| !eigen.block_range(k).contains(c)).collect();
    let basis = eigen.q.select_columns(keep.iter());
    Some(SubspaceDiagnosis {
        block_index: k,
        block_kind: match eigen.blocks[k] {
            EigenBlock::Real { .. } => BlockKind::Real,
            EigenBlock::ComplexPair { .. } => BlockKind::ComplexPair,
        },
        block: eigen.blocks[k],
        weights: all.iter().map(|r| r[k]).collect(),
        all_weights: all,
        vector_labels: labels.to_vec(),
        subspace_basis: basis,
        eigenstructure: eigen.clone(),
    })
}

/// First eigen-block of `A` on which every vector has zero weight, if any.
pub fn diagnose_subspace(
    a: &Mat,
    vectors: &[Vector],
    opts: &CheckOptions,
) -> Result<Option<SubspaceDiagnosis>> {
    let eigen = real_block_eigen(a, opts.gap_tol)?;
    if let Some(bad) = vectors.iter().find(|v| v.len() != a.nrows()) {
        return Err(Error::Dimension(format!(
            "vector of length {} for a {}x{} matrix",
            bad.len(),
            a.nrows(),
            a.nrows()
        )));
    }
    let labels: Vec<String> = (1..=vectors.len()).map(|j| format!("v{j}")).collect();
    Ok(diagnose_with(&eigen, vectors, &labels, opts.weight_tol))
}

/// Perturbation placed on the missed block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    /// `c` on a real block, `c·I₂` on a complex pair.
    Scalar(f64),
    /// Explicit 2×2 block (row-major) for a complex pair.
    Block([f64; 4]),
}

/// `A₂ = A + Q D Q⁻¹` with `D` zero outside the diagnosed block; `G` and `x0`
/// are kept, so both models share mean and covariance functions.
pub fn construct_confounder(m: &AdditiveSde, c: f64) -> Result<AdditiveSde> {
    construct_confounder_with(m, Perturbation::Scalar(c), &CheckOptions::default())
}

pub fn construct_confounder_with(
    m: &AdditiveSde,
    p: Perturbation,
    opts: &CheckOptions,
) -> Result<AdditiveSde> {
    match p {
        Perturbation::Scalar(c) if c == 0.0 || !c.is_finite() => {
            return Err(Error::InvalidArgument(format!("perturbation must be finite and non-zero, got {c}")))
        }
        Perturbation::Block(b) if b.iter().all(|&x| x == 0.0) || b.iter().any(|x| !x.is_finite()) => {
            return Err(Error::InvalidArgument("perturbation block must be finite and non-zero".into()))
        }
        _ => {}
    }
    let report = check_additive(m, opts)?;
    if report.verdict != Verdict::Unidentifiable {
        return Err(Error::NotUnidentifiable(format!("verdict is {}", report.verdict)));
    }
    let diag = report
        .diagnosis
        .ok_or_else(|| Error::NotUnidentifiable("no eigen-block was isolated".into()))?;
    let eigen = &diag.eigenstructure;
    let range = eigen.block_range(diag.block_index);
    let d_block = match (diag.block_kind, p) {
        (BlockKind::Real, Perturbation::Scalar(c)) => Mat::from_element(1, 1, c),
        (BlockKind::ComplexPair, Perturbation::Scalar(c)) => Mat::identity(2, 2) * c,
        (BlockKind::ComplexPair, Perturbation::Block(b)) => Mat::from_row_slice(2, 2, &b),
        (BlockKind::Real, Perturbation::Block(_)) => {
            return Err(Error::InvalidArgument("a 2x2 perturbation needs a complex block".into()))
        }
    };
    let d = m.dim();
    let mut big_d = Mat::zeros(d, d);
    big_d
        .view_mut((range.start, range.start), (range.len(), range.len()))
        .copy_from(&d_block);
    let a2 = m.a() + &eigen.q * big_d * &eigen.q_inv;
    m.with_a(a2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenericityResult {
    pub kind: ModelKind,
    pub dim: usize,
    pub noise_dim: usize,
    pub n_samples: usize,
    pub n_satisfied: usize,
    pub fraction: f64,
}

/// Draws models with i.i.d. standard normal entries and counts how many
/// satisfy their class's condition (rank condition, or A1 and A2).
pub fn genericity_probe(
    kind: ModelKind,
    d: usize,
    m: usize,
    n_samples: usize,
    seed: u64,
    opts: &CheckOptions,
) -> Result<GenericityResult> {
    if n_samples == 0 || d == 0 || m == 0 {
        return Err(Error::InvalidArgument(
            "genericity probe needs d, m and n_samples of at least 1".into(),
        ));
    }
    let passes: Vec<bool> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, 0, i as u64);
            let model = random_model(kind, d, m, &mut r)?;
            Ok(match model {
                SdeModel::Additive(am) => check_additive(&am, opts)?.condition("rank_condition").is_some_and(|c| c.passed),
                SdeModel::Multiplicative(mm) => check_multiplicative(&mm, opts)?.all_passed(),
            })
        })
        .collect::<Result<_>>()?;
    let n_satisfied = passes.iter().filter(|&&p| p).count();
    Ok(GenericityResult {
        kind,
        dim: d,
        noise_dim: m,
        n_samples,
        n_satisfied,
        fraction: n_satisfied as f64 / n_samples as f64,
    })
}

/// A model of the given class with i.i.d. standard normal entries.
pub fn random_model<R: rand::Rng>(kind: ModelKind, d: usize, m: usize, r: &mut R) -> Result<SdeModel> {
    use rand_distr::StandardNormal;
    let mut gauss = |rows: usize, cols: usize| Mat::from_fn(rows, cols, |_, _| r.sample::<f64, _>(StandardNormal));
    let x0 = gauss(d, 1).column(0).into_owned();
    let a = gauss(d, d);
    Ok(match kind {
        ModelKind::Additive => AdditiveSde::new(a, gauss(d, m), x0)?.into(),
        ModelKind::Multiplicative => {
            let gs = (0..m).map(|_| gauss(d, d)).collect();
            MultiplicativeSde::new(a, gs, x0)?.into()
        }
    })
}

/// Human-readable account of a report, including the block weights of a diagnosis.
pub fn explain(report: &IdentReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "check: {}  verdict: {}", report.check, report.verdict);
    for c in &report.conditions {
        let _ = write!(s, "  {}: {}", c.name, if c.passed { "pass" } else { "FAIL" });
        if let (Some(r), Some(a)) = (c.required_rank, c.achieved_rank) {
            let _ = write!(s, " (rank {a}/{r}");
            if let Some(t) = c.rank_tol {
                let _ = write!(s, ", rel tol {t:.2e}");
            }
            let _ = write!(s, ")");
            if !c.singular_values.is_empty() {
                let sv: Vec<String> = c.singular_values.iter().map(|v| format!("{v:.3e}")).collect();
                let _ = write!(s, " singular values [{}]", sv.join(", "));
            }
        }
        if let Some(res) = c.residual {
            let _ = write!(s, " (residual {res:.3e})");
        }
        s.push('\n');
    }
    for c in &report.cross_checks {
        let _ = writeln!(s, "  cross-check {}: {}", c.name, if c.passed { "ok" } else { "MISMATCH" });
    }
    for n in &report.notes {
        let _ = writeln!(s, "  note: {n}");
    }
    if let Some(diag) = &report.diagnosis {
        let block = match diag.block {
            EigenBlock::Real { lambda } => format!("real eigenvalue {lambda:.6}"),
            EigenBlock::ComplexPair { re, im } => format!("complex pair {re:.6} ± {im:.6}i"),
        };
        let _ = writeln!(
            s,
            "  every tested vector has zero weight on block {} ({block});",
            diag.block_index + 1
        );
        let _ = writeln!(
            s,
            "  they lie in the {}-dimensional A-invariant subspace spanned by:",
            diag.subspace_basis.ncols()
        );
        for col in diag.subspace_basis.column_iter() {
            let v: Vec<String> = col.iter().map(|x| format!("{x:.6}")).collect();
            let _ = writeln!(s, "    [{}]", v.join(", "));
        }
        let header: Vec<String> = (1..=diag.eigenstructure.n_blocks()).map(|k| format!("block {k:>2}")).collect();
        let _ = writeln!(s, "  weights |w_jk|:   {}", header.join("  "));
        for (label, row) in diag.vector_labels.iter().zip(&diag.all_weights) {
            let cells: Vec<String> = row.iter().map(|w| format!("{w:8.2e}")).collect();
            let _ = writeln!(s, "    {label:<12}  {}", cells.join("  "));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{mat_from_rows, expm};
    use crate::scenarios;

    fn opts() -> CheckOptions {
        CheckOptions::default()
    }

    #[test]
    fn additive_fixtures() {
        let id = check_additive(&scenarios::additive_identifiable(), &opts()).unwrap();
        assert_eq!(id.verdict, Verdict::Identifiable);
        assert_eq!(id.conditions[0].achieved_rank, Some(2));
        assert!(id.diagnosis.is_none());

        let un = check_additive(&scenarios::additive_unidentifiable(), &opts()).unwrap();
        assert_eq!(un.verdict, Verdict::Unidentifiable);
        assert_eq!(un.conditions[0].achieved_rank, Some(1));
        let diag = un.diagnosis.unwrap();
        // eigenvalues -1 then 2; everything sits on the eigenvector of -1
        assert_eq!(diag.block_index, 1);
        assert!((real_lambda(&diag.block) - 2.0).abs() < 1e-12);
        let basis = diag.subspace_basis.column(0);
        assert!((basis[0] + basis[1]).abs() < 1e-12);
        assert!(diag.weights.iter().all(|&w| w < 1e-12));
    }

    fn real_lambda(b: &EigenBlock) -> f64 {
        match b {
            EigenBlock::Real { lambda } => *lambda,
            other => panic!("expected a real block, got {other:?}"),
        }
    }

    #[test]
    fn zero_drift_identity_noise_is_identifiable() {
        let m = AdditiveSde::new(Mat::zeros(3, 3), Mat::identity(3, 3), Vector::from_element(3, 0.4)).unwrap();
        let r = check_additive(&m, &opts()).unwrap();
        assert_eq!(r.distinct_eigenvalues, Some(false));
        assert_eq!(r.verdict, Verdict::Identifiable);
    }

    #[test]
    fn repeated_eigenvalues_and_rank_loss_is_inconclusive() {
        let m = AdditiveSde::new(Mat::identity(2, 2), Mat::zeros(2, 1), Vector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_eq!(check_additive(&m, &opts()).unwrap().verdict, Verdict::Inconclusive);
    }

    #[test]
    fn controllability_fixtures() {
        let id = check_controllability(&scenarios::additive_identifiable(), &opts()).unwrap();
        assert_eq!(id.verdict, Verdict::Identifiable);
        assert!(id.cross_checks.iter().all(|c| c.passed));
        let un = check_controllability(&scenarios::additive_unidentifiable(), &opts()).unwrap();
        assert!(!un.conditions[0].passed);
        assert_eq!(un.verdict, Verdict::Inconclusive);
        assert!(un.cross_checks.iter().all(|c| c.passed), "{:?}", un.cross_checks);
        let rot = mat_from_rows(&[vec![0.0, -3.0], vec![1.0, 0.5]]).unwrap();
        let m = AdditiveSde::new(rot, Mat::identity(2, 2), Vector::zeros(2)).unwrap();
        assert_eq!(check_controllability(&m, &opts()).unwrap().verdict, Verdict::Identifiable);
    }

    #[test]
    fn multiplicative_fixtures() {
        let id = check_multiplicative(&scenarios::multiplicative_identifiable(), &opts()).unwrap();
        assert_eq!(id.verdict, Verdict::Identifiable);
        let a1 = check_multiplicative(&scenarios::multiplicative_unidentifiable_a1(), &opts()).unwrap();
        assert!(!a1.condition("A1").unwrap().passed);
        assert!(a1.condition("A2").unwrap().passed);
        assert_eq!(a1.verdict, Verdict::Inconclusive);
        let a2 = check_multiplicative(&scenarios::multiplicative_unidentifiable_a2(), &opts()).unwrap();
        assert!(a2.condition("A1").unwrap().passed);
        assert!(!a2.condition("A2").unwrap().passed);
        assert_eq!(a2.condition("A2").unwrap().achieved_rank, Some(2));
        assert_eq!(a2.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn commuting_conditions() {
        let diag = |v: [f64; 2]| Mat::from_diagonal(&Vector::from_vec(v.to_vec()));
        let m = MultiplicativeSde::new(diag([1.0, -0.5]), vec![diag([0.3, 0.1]), diag([-0.2, 0.4])], Vector::from_vec(vec![1.0, 1.0])).unwrap();
        let r = check_commuting(&m, &opts()).unwrap();
        assert!(r.condition("C3").unwrap().passed);

        let r = check_commuting(&scenarios::multiplicative_identifiable(), &opts()).unwrap();
        assert!(!r.condition("C3").unwrap().passed);
        assert_eq!(r.verdict, Verdict::Inconclusive);

        let a = mat_from_rows(&[vec![1.76, -0.1], vec![0.98, 0.0]]).unwrap();
        let x0 = Vector::from_vec(vec![1.87, -0.98]);
        let alpha = 0.7;
        let m = MultiplicativeSde::new(a.clone(), vec![Mat::identity(2, 2) * alpha], x0.clone()).unwrap();
        let r = check_commuting(&m, &opts()).unwrap();
        assert!(r.condition("C3").unwrap().passed);
        assert_eq!(r.condition("C3").unwrap().residual, Some(0.0));
        // C1 with H = α² x0 x0ᵀ has the same rank as [x0 | A x0]
        let k = krylov_columns(&a, &[x0.clone()], 2).unwrap();
        let direct = numerical_rank(&k, default_rank_tol(2, 2)).unwrap().rank;
        assert_eq!(r.condition("C1").unwrap().achieved_rank, Some(direct));
    }

    #[test]
    fn diagnosis_edge_cases() {
        let a = mat_from_rows(&[vec![1.0, 2.0], vec![1.0, 0.0]]).unwrap();
        let spanning = vec![Vector::from_vec(vec![1.0, 0.0]), Vector::from_vec(vec![0.0, 1.0])];
        assert!(diagnose_subspace(&a, &spanning, &opts()).unwrap().is_none());
        let eigvec = Vector::from_vec(vec![2.0, 1.0]); // eigenvalue 2
        let d = diagnose_subspace(&a, &[eigvec], &opts()).unwrap().unwrap();
        assert!((real_lambda(&d.block) + 1.0).abs() < 1e-12);
        assert!(diagnose_subspace(&Mat::identity(2, 2), &spanning, &opts()).is_err());
    }

    #[test]
    fn complex_block_diagnosis_and_confounder() {
        // 3x3 with a rotation block on e1,e2 and a real eigenvalue on e3
        let a = mat_from_rows(&[vec![0.1, -1.0, 0.0], vec![1.0, 0.1, 0.0], vec![0.0, 0.0, -0.5]]).unwrap();
        let e3 = Vector::from_vec(vec![0.0, 0.0, 1.0]);
        let g = Mat::from_column_slice(3, 1, &[0.0, 0.0, 0.3]);
        let m = AdditiveSde::new(a, g, e3).unwrap();
        let r = check_additive(&m, &opts()).unwrap();
        assert_eq!(r.verdict, Verdict::Unidentifiable);
        assert_eq!(r.diagnosis.as_ref().unwrap().block_kind, BlockKind::ComplexPair);
        for p in [Perturbation::Scalar(1.0), Perturbation::Block([0.5, -2.0, 1.0, 0.3])] {
            let m2 = construct_confounder_with(&m, p, &opts()).unwrap();
            assert!(frobenius(&(m2.a() - m.a())) > 0.1);
            for t in [0.3, 1.0, 2.0] {
                let diff = expm(m.a(), t).unwrap() * m.x0() - expm(m2.a(), t).unwrap() * m2.x0();
                assert!(diff.amax() < 1e-10);
            }
        }
    }

    #[test]
    fn confounder_preserves_moments() {
        let m = scenarios::additive_unidentifiable();
        let m2 = construct_confounder(&m, 1.0).unwrap();
        assert!(frobenius(&(m2.a() - m.a())) >= 1.0);
        let times: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let v1 = covariance_additive(&m, &times).unwrap();
        let v2 = covariance_additive(&m2, &times).unwrap();
        for (t, (p, q)) in times.iter().zip(v1.iter().zip(&v2)) {
            let mean_diff = expm(m.a(), *t).unwrap() * m.x0() - expm(m2.a(), *t).unwrap() * m.x0();
            assert!(mean_diff.amax() < 1e-8);
            assert!((p - q).amax() < 1e-8);
        }
        assert!(construct_confounder(&m, 0.0).is_err());
        assert!(matches!(
            construct_confounder(&scenarios::additive_identifiable(), 1.0),
            Err(Error::NotUnidentifiable(_))
        ));
    }

    #[test]
    fn genericity_is_deterministic() {
        let a = genericity_probe(ModelKind::Additive, 2, 2, 1, 42, &opts()).unwrap();
        let b = genericity_probe(ModelKind::Additive, 2, 2, 1, 42, &opts()).unwrap();
        assert_eq!(a, b);
        assert!(a.fraction == 0.0 || a.fraction == 1.0);
        let many = genericity_probe(ModelKind::Multiplicative, 2, 2, 200, 3, &opts()).unwrap();
        assert_eq!(many.fraction, 1.0);
    }

    #[test]
    fn report_json_and_text() {
        let r = check_additive(&scenarios::additive_unidentifiable(), &opts()).unwrap();
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["verdict"], "unidentifiable");
        assert_eq!(json["diagnosis"]["block_index"], 1);
        assert_eq!(json["conditions"][0]["achieved_rank"], 1);
        let text = explain(&r);
        assert!(text.contains("block 2"));
        assert!(text.contains("H[:,2]"));
    }
}
