//! The two linear SDE classes and the quantities derived from them.
//!
//! * additive noise: `dX = A X dt + G dW`, `X_0 = x0`, `G` is `d×m`
//! * multiplicative noise: `dX = A X dt + Σ_k G_k X dW_k`, `X_0 = x0`
//!
//! The generator of either process is determined by the drift `b(x) = Ax` and
//! the squared diffusion `c(x)`, which is `GGᵀ` in the additive case and
//! `Σ_k G_k x xᵀ G_kᵀ` in the multiplicative case. Two models have the same
//! generator exactly when these two functions agree.
//!
//! Models are validated on construction and immutable afterwards.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, kron, kron_sum, mat_from_rows, mat_to_rows, symmetrize, Mat, Vector};

fn matrix_violations(name: &str, m: &Mat) -> Vec<String> {
    let mut out = Vec::new();
    if m.iter().any(|v| !v.is_finite()) {
        out.push(format!("{name} not finite"));
    }
    out
}

fn vector_violations(name: &str, v: &Vector) -> Vec<String> {
    if v.iter().any(|x| !x.is_finite()) {
        vec![format!("{name} not finite")]
    } else {
        Vec::new()
    }
}

/// Violations for an additive model given as raw matrices.
pub fn validate_additive(a: &Mat, g: &Mat, x0: &Vector) -> Vec<String> {
    let mut out = Vec::new();
    if a.nrows() != a.ncols() {
        out.push("A not square".to_string());
    }
    if a.nrows() == 0 {
        out.push("A is empty".to_string());
    }
    if g.ncols() == 0 {
        out.push("G has no columns".to_string());
    }
    if g.nrows() != a.nrows() {
        out.push(format!("G has {} rows, A has {}", g.nrows(), a.nrows()));
    }
    if x0.len() != a.nrows() {
        out.push(format!("x0 has length {}, A has {} rows", x0.len(), a.nrows()));
    }
    out.extend(matrix_violations("A", a));
    out.extend(matrix_violations("G", g));
    out.extend(vector_violations("x0", x0));
    out
}

/// Violations for a multiplicative model given as raw matrices.
pub fn validate_multiplicative(a: &Mat, gs: &[Mat], x0: &Vector) -> Vec<String> {
    let mut out = Vec::new();
    let d = a.nrows();
    if a.nrows() != a.ncols() {
        out.push("A not square".to_string());
    }
    if d == 0 {
        out.push("A is empty".to_string());
    }
    if gs.is_empty() {
        out.push("Gs is empty".to_string());
    }
    for (k, g) in gs.iter().enumerate() {
        if g.nrows() != d || g.ncols() != d {
            out.push(format!("G{} is {}x{}, expected {d}x{d}", k + 1, g.nrows(), g.ncols()));
        }
        out.extend(matrix_violations(&format!("G{}", k + 1), g));
    }
    if x0.len() != d {
        out.push(format!("x0 has length {}, A has {d} rows", x0.len()));
    }
    out.extend(matrix_violations("A", a));
    out.extend(vector_violations("x0", x0));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveSde {
    a: Mat,
    g: Mat,
    x0: Vector,
}

impl AdditiveSde {
    pub fn new(a: Mat, g: Mat, x0: Vector) -> Result<Self> {
        let v = validate_additive(&a, &g, &x0);
        if !v.is_empty() {
            return Err(Error::InvalidModel(v));
        }
        Ok(Self { a, g, x0 })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }
    pub fn g(&self) -> &Mat {
        &self.g
    }
    pub fn x0(&self) -> &Vector {
        &self.x0
    }
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
    pub fn noise_dim(&self) -> usize {
        self.g.ncols()
    }

    /// `H = GGᵀ`, explicitly symmetrized.
    pub fn h(&self) -> Mat {
        symmetrize(&(&self.g * self.g.transpose()))
    }

    pub fn derive(&self) -> DerivedAdditive {
        DerivedAdditive { h: self.h() }
    }

    pub fn with_a(&self, a: Mat) -> Result<Self> {
        Self::new(a, self.g.clone(), self.x0.clone())
    }
    pub fn with_g(&self, g: Mat) -> Result<Self> {
        Self::new(self.a.clone(), g, self.x0.clone())
    }
    pub fn with_x0(&self, x0: Vector) -> Result<Self> {
        Self::new(self.a.clone(), self.g.clone(), x0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiplicativeSde {
    a: Mat,
    gs: Vec<Mat>,
    x0: Vector,
}

impl MultiplicativeSde {
    pub fn new(a: Mat, gs: Vec<Mat>, x0: Vector) -> Result<Self> {
        let v = validate_multiplicative(&a, &gs, &x0);
        if !v.is_empty() {
            return Err(Error::InvalidModel(v));
        }
        Ok(Self { a, gs, x0 })
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }
    pub fn gs(&self) -> &[Mat] {
        &self.gs
    }
    pub fn x0(&self) -> &Vector {
        &self.x0
    }
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
    pub fn noise_dim(&self) -> usize {
        self.gs.len()
    }

    /// `𝒜 = A ⊕ A + Σ_k G_k ⊗ G_k`.
    pub fn big_a(&self) -> Mat {
        let mut big = kron_sum(&self.a, &self.a).expect("validated square");
        for g in &self.gs {
            big += kron(g, g);
        }
        big
    }

    /// `vec(x0 x0ᵀ)`.
    pub fn v(&self) -> Vector {
        linalg::vec(&(&self.x0 * self.x0.transpose()))
    }

    pub fn derive(&self) -> DerivedMultiplicative {
        DerivedMultiplicative {
            big_a: self.big_a(),
            v: self.v(),
        }
    }

    /// Squared diffusion `c(x) = Σ_k G_k x xᵀ G_kᵀ`.
    pub fn diffusion_at(&self, x: &Vector) -> Mat {
        let d = self.dim();
        let mut c = Mat::zeros(d, d);
        for g in &self.gs {
            let gx = g * x;
            c += &gx * gx.transpose();
        }
        c
    }

    pub fn with_a(&self, a: Mat) -> Result<Self> {
        Self::new(a, self.gs.clone(), self.x0.clone())
    }
    pub fn with_gs(&self, gs: Vec<Mat>) -> Result<Self> {
        Self::new(self.a.clone(), gs, self.x0.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivedAdditive {
    pub h: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivedMultiplicative {
    pub big_a: Mat,
    pub v: Vector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Additive,
    Multiplicative,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SdeModel {
    Additive(AdditiveSde),
    Multiplicative(MultiplicativeSde),
}

impl SdeModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            SdeModel::Additive(_) => ModelKind::Additive,
            SdeModel::Multiplicative(_) => ModelKind::Multiplicative,
        }
    }
    pub fn a(&self) -> &Mat {
        match self {
            SdeModel::Additive(m) => m.a(),
            SdeModel::Multiplicative(m) => m.a(),
        }
    }
    pub fn x0(&self) -> &Vector {
        match self {
            SdeModel::Additive(m) => m.x0(),
            SdeModel::Multiplicative(m) => m.x0(),
        }
    }
    pub fn dim(&self) -> usize {
        self.a().nrows()
    }
}

impl From<AdditiveSde> for SdeModel {
    fn from(m: AdditiveSde) -> Self {
        SdeModel::Additive(m)
    }
}

impl From<MultiplicativeSde> for SdeModel {
    fn from(m: MultiplicativeSde) -> Self {
        SdeModel::Multiplicative(m)
    }
}

/// On-disk model description. Matrices are row-major arrays of rows.
///
/// ```json
/// {"type": "additive", "A": [[1, 2], [1, 0]], "G": [[0.11, 0.22], [-0.11, -0.22]], "x0": [1, -1]}
/// {"type": "multiplicative", "A": [[...]], "Gs": [[[...]], [[...]]], "x0": [...]}
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelFile {
    Additive {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        #[serde(rename = "G")]
        g: Vec<Vec<f64>>,
        x0: Vec<f64>,
    },
    Multiplicative {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        #[serde(rename = "Gs")]
        gs: Vec<Vec<Vec<f64>>>,
        x0: Vec<f64>,
    },
}

fn ragged(name: &str, rows: &[Vec<f64>]) -> Option<String> {
    let c = rows.first().map_or(0, Vec::len);
    rows.iter()
        .any(|r| r.len() != c)
        .then(|| format!("{name} has rows of unequal length"))
}

impl ModelFile {
    /// Every structural or numeric problem with the description; empty when well formed.
    pub fn validate(&self) -> Vec<String> {
        match self.matrices() {
            Err(v) => v,
            Ok(Parsed::Additive(a, g, x0)) => validate_additive(&a, &g, &x0),
            Ok(Parsed::Multiplicative(a, gs, x0)) => validate_multiplicative(&a, &gs, &x0),
        }
    }

    fn matrices(&self) -> std::result::Result<Parsed, Vec<String>> {
        match self {
            ModelFile::Additive { a, g, x0 } => {
                let errs: Vec<String> = [ragged("A", a), ragged("G", g)].into_iter().flatten().collect();
                if !errs.is_empty() {
                    return Err(errs);
                }
                Ok(Parsed::Additive(
                    mat_from_rows(a).expect("checked"),
                    mat_from_rows(g).expect("checked"),
                    Vector::from_column_slice(x0),
                ))
            }
            ModelFile::Multiplicative { a, gs, x0 } => {
                let mut errs: Vec<String> = ragged("A", a).into_iter().collect();
                for (k, g) in gs.iter().enumerate() {
                    errs.extend(ragged(&format!("G{}", k + 1), g));
                }
                if !errs.is_empty() {
                    return Err(errs);
                }
                Ok(Parsed::Multiplicative(
                    mat_from_rows(a).expect("checked"),
                    gs.iter().map(|g| mat_from_rows(g).expect("checked")).collect(),
                    Vector::from_column_slice(x0),
                ))
            }
        }
    }

    pub fn into_model(&self) -> Result<SdeModel> {
        match self.matrices().map_err(Error::InvalidModel)? {
            Parsed::Additive(a, g, x0) => Ok(AdditiveSde::new(a, g, x0)?.into()),
            Parsed::Multiplicative(a, gs, x0) => Ok(MultiplicativeSde::new(a, gs, x0)?.into()),
        }
    }

    pub fn from_model(model: &SdeModel) -> Self {
        match model {
            SdeModel::Additive(m) => ModelFile::Additive {
                a: mat_to_rows(m.a()),
                g: mat_to_rows(m.g()),
                x0: m.x0().iter().copied().collect(),
            },
            SdeModel::Multiplicative(m) => ModelFile::Multiplicative {
                a: mat_to_rows(m.a()),
                gs: m.gs().iter().map(mat_to_rows).collect(),
                x0: m.x0().iter().copied().collect(),
            },
        }
    }
}

enum Parsed {
    Additive(Mat, Mat, Vector),
    Multiplicative(Mat, Vec<Mat>, Vector),
}

pub fn model_from_json(text: &str) -> Result<SdeModel> {
    let file: ModelFile = serde_json::from_str(text)?;
    file.into_model()
}

pub fn model_to_json(model: &SdeModel) -> String {
    serde_json::to_string_pretty(&ModelFile::from_model(model)).expect("plain data serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;
    use approx::assert_relative_eq;

    #[test]
    fn h_of_identity_noise() {
        let m = AdditiveSde::new(Mat::zeros(2, 2), Mat::identity(2, 2), Vector::zeros(2)).unwrap();
        assert_eq!(m.derive().h, Mat::identity(2, 2));
    }

    #[test]
    fn h_of_unidentifiable_reference_model() {
        let h = scenarios::additive_unidentifiable().derive().h;
        // 0.11² + 0.22² = 0.0605
        let expect = Mat::from_row_slice(2, 2, &[0.0605, -0.0605, -0.0605, 0.0605]);
        assert_relative_eq!(h, expect, epsilon = 1e-15);
    }

    #[test]
    fn h_of_identifiable_reference_model() {
        let h = scenarios::additive_identifiable().derive().h;
        let (g11, g12, g21, g22) = (-0.11, -0.14, -0.29, -0.22);
        let expect = Mat::from_row_slice(
            2,
            2,
            &[
                g11 * g11 + g12 * g12,
                g11 * g21 + g12 * g22,
                g21 * g11 + g22 * g12,
                g21 * g21 + g22 * g22,
            ],
        );
        assert_relative_eq!(h, expect, epsilon = 1e-15);
    }

    #[test]
    fn big_a_and_v() {
        let zero = MultiplicativeSde::new(
            Mat::zeros(2, 2),
            vec![Mat::zeros(2, 2), Mat::zeros(2, 2)],
            Vector::from_vec(vec![1.0, -1.0]),
        )
        .unwrap();
        let der = zero.derive();
        assert_eq!(der.big_a, Mat::zeros(4, 4));
        assert_eq!(der.v.as_slice(), &[1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn big_a_superposition() {
        let m = scenarios::multiplicative_identifiable();
        let no_noise = MultiplicativeSde::new(m.a().clone(), vec![Mat::zeros(2, 2)], m.x0().clone()).unwrap();
        let diff = m.big_a() - no_noise.big_a();
        let expect: Mat = m.gs().iter().map(|g| kron(g, g)).fold(Mat::zeros(4, 4), |acc, k| acc + k);
        assert!((diff - expect).amax() < 1e-14);
    }

    #[test]
    fn validation_messages() {
        let bad = validate_additive(&Mat::zeros(2, 3), &Mat::zeros(2, 1), &Vector::zeros(2));
        assert_eq!(bad, vec!["A not square".to_string()]);
        let nan = validate_additive(
            &Mat::zeros(2, 2),
            &Mat::zeros(2, 1),
            &Vector::from_vec(vec![f64::NAN, 0.0]),
        );
        assert_eq!(nan, vec!["x0 not finite".to_string()]);
        let ok = ModelFile::from_model(&scenarios::additive_identifiable().into());
        assert!(ok.validate().is_empty());
    }

    #[test]
    fn json_schema_round_trip_and_ragged_rows() {
        let model: SdeModel = scenarios::multiplicative_identifiable().into();
        let text = model_to_json(&model);
        assert!(text.contains("\"type\": \"multiplicative\""));
        assert!(text.contains("\"Gs\""));
        assert_eq!(model_from_json(&text).unwrap(), model);

        let ragged = r#"{"type":"additive","A":[[1,2],[3]],"G":[[1],[1]],"x0":[0,0]}"#;
        let file: ModelFile = serde_json::from_str(ragged).unwrap();
        assert_eq!(file.validate(), vec!["A has rows of unequal length".to_string()]);
        assert!(model_from_json(ragged).is_err());
        assert!(model_from_json(r#"{"type":"additive","A":[[1"#).is_err());
    }
}
