//! Built-in reference parameter sets (`d = m = 2`) used by the table
//! reproductions, the examples and the test suites.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::linalg::{Mat, Vector};
use crate::models::{AdditiveSde, MultiplicativeSde, SdeModel};

fn m2(r: [f64; 4]) -> Mat {
    Mat::from_row_slice(2, 2, &r)
}

fn v2(a: f64, b: f64) -> Vector {
    Vector::from_vec(vec![a, b])
}

/// Satisfies the additive rank condition.
pub fn additive_identifiable() -> AdditiveSde {
    AdditiveSde::new(
        m2([1.76, -0.1, 0.98, 0.0]),
        m2([-0.11, -0.14, -0.29, -0.22]),
        v2(1.87, -0.98),
    )
    .expect("valid fixture")
}

/// `x0` and every column of `GGᵀ` lie on the eigenvector `[1, -1]` of `A`.
pub fn additive_unidentifiable() -> AdditiveSde {
    AdditiveSde::new(
        m2([1.0, 2.0, 1.0, 0.0]),
        m2([0.11, 0.22, -0.11, -0.22]),
        v2(1.0, -1.0),
    )
    .expect("valid fixture")
}

/// Satisfies both A1 and A2.
pub fn multiplicative_identifiable() -> MultiplicativeSde {
    MultiplicativeSde::new(
        m2([1.76, -0.1, 0.98, 0.0]),
        vec![m2([-0.11, -0.14, -0.29, -0.22]), m2([-0.17, 0.59, 0.81, 0.18])],
        v2(1.87, -0.98),
    )
    .expect("valid fixture")
}

/// Violates A1 (`A x0 = 3 x0`), satisfies A2.
pub fn multiplicative_unidentifiable_a1() -> MultiplicativeSde {
    MultiplicativeSde::new(
        m2([2.0, 1.0, 3.0, 0.0]),
        vec![m2([-0.11, -0.14, -0.29, -0.22]), m2([-0.17, 0.59, 0.81, 0.18])],
        v2(1.0, 1.0),
    )
    .expect("valid fixture")
}

/// Satisfies A1, violates A2.
pub fn multiplicative_unidentifiable_a2() -> MultiplicativeSde {
    MultiplicativeSde::new(
        m2([1.0, -2.0, -1.0, 0.0]),
        vec![m2([-0.3, 0.4, -0.7, 0.2]), m2([0.8, 0.2, -0.2, -0.4])],
        v2(1.0, -1.0),
    )
    .expect("valid fixture")
}

/// Probe state at which the multiplicative squared diffusion is scored.
pub fn gsx_probe() -> Vector {
    v2(1.33, 0.72)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "table1-id")]
    Table1Id,
    #[serde(rename = "table1-unid")]
    Table1Unid,
    #[serde(rename = "table2-id")]
    Table2Id,
    #[serde(rename = "table2-unid-a1")]
    Table2UnidA1,
    #[serde(rename = "table2-unid-a2")]
    Table2UnidA2,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Table1Id,
        Scenario::Table1Unid,
        Scenario::Table2Id,
        Scenario::Table2UnidA1,
        Scenario::Table2UnidA2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Table1Id => "table1-id",
            Scenario::Table1Unid => "table1-unid",
            Scenario::Table2Id => "table2-id",
            Scenario::Table2UnidA1 => "table2-unid-a1",
            Scenario::Table2UnidA2 => "table2-unid-a2",
        }
    }

    pub fn model(self) -> SdeModel {
        match self {
            Scenario::Table1Id => additive_identifiable().into(),
            Scenario::Table1Unid => additive_unidentifiable().into(),
            Scenario::Table2Id => multiplicative_identifiable().into(),
            Scenario::Table2UnidA1 => multiplicative_unidentifiable_a1().into(),
            Scenario::Table2UnidA2 => multiplicative_unidentifiable_a2().into(),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }
}
