//! Model data types and the evaluation of the bivirus SIS vector field over a
//! hypergraph, its analytic Jacobian and the invariant domain
//! `D = { (x1, x2) : x1 >= 0, x2 >= 0, x1 + x2 <= 1 }`.
//!
//! Node indices are 0-based throughout the library. Configuration files use
//! 1-based indices and are translated in [`crate::scenario`].

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral;

/// Tolerance used by the integrator when checking domain membership.
pub const INTEGRATOR_DOMAIN_TOL: f64 = 1e-9;

/// Parameters of a single virus.
///
/// `b[i]` holds the matrix `[b_{ijl}]_{j,l}` of hyperedge strengths with head
/// node `i`, so the higher-order infection pressure on node `i` is `x^T b[i] x`.
#[derive(Debug, Clone, PartialEq)]
pub struct VirusParams {
    /// Healing rates, one per node.
    pub delta: DVector<f64>,
    /// Pairwise infection rate.
    pub beta_pair: f64,
    /// Higher-order (hyperedge) infection rate.
    pub beta_hoi: f64,
    /// Pairwise interaction strengths `a_ij`.
    pub a: DMatrix<f64>,
    /// Hyperedge strengths, one `n x n` matrix per head node.
    pub b: Vec<DMatrix<f64>>,
}

impl VirusParams {
    /// Parameters without higher-order interactions.
    pub fn pairwise(delta: DVector<f64>, beta_pair: f64, a: DMatrix<f64>) -> Self {
        let n = delta.len();
        Self {
            delta,
            beta_pair,
            beta_hoi: 0.0,
            a,
            b: vec![DMatrix::zeros(n, n); n],
        }
    }

    pub fn n(&self) -> usize {
        self.delta.len()
    }

    fn check_dims(&self) -> Result<()> {
        let n = self.n();
        if self.a.nrows() != n || self.a.ncols() != n {
            return Err(Error::Dimension {
                expected: n,
                got: self.a.nrows().max(self.a.ncols()),
                context: "pairwise matrix a",
            });
        }
        if self.b.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: self.b.len(),
                context: "number of hyperedge matrices",
            });
        }
        for bi in &self.b {
            if bi.nrows() != n || bi.ncols() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: bi.nrows().max(bi.ncols()),
                    context: "hyperedge matrix",
                });
            }
        }
        Ok(())
    }

    /// `q_i = x^T B_i x` for every head node `i`.
    pub fn hoi_quadratic(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.b.iter().map(|bi| x.dot(&(bi * x))))
    }

    /// Matrix whose row `i` is `((B_i + B_i^T) x)^T`, the gradient of `x^T B_i x`.
    pub fn hoi_gradient(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n();
        let mut g = DMatrix::zeros(n, n);
        for (i, bi) in self.b.iter().enumerate() {
            let row = bi * x + bi.tr_mul(x);
            g.row_mut(i).copy_from(&row.transpose());
        }
        g
    }

    /// Infection pressure `beta_pair * A x + beta_hoi * q(x)` before the
    /// susceptible-fraction factor is applied.
    pub fn pressure(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut p = &self.a * x * self.beta_pair;
        if self.beta_hoi != 0.0 {
            p += self.hoi_quadratic(x) * self.beta_hoi;
        }
        p
    }

    /// Single-virus field `-D x + (I - X) (beta_pair A x + beta_hoi q(x))`.
    pub fn single_field(&self, x: &DVector<f64>) -> DVector<f64> {
        let p = self.pressure(x);
        DVector::from_fn(self.n(), |i, _| {
            -self.delta[i] * x[i] + (1.0 - x[i]) * p[i]
        })
    }

    /// Own-virus Jacobian block at `x` given the susceptible fraction
    /// `susceptible = 1 - x1 - x2` (entrywise).
    pub(crate) fn own_block(&self, x: &DVector<f64>, susceptible: &DVector<f64>) -> DMatrix<f64> {
        let n = self.n();
        let ax = &self.a * x;
        let q = self.hoi_quadratic(x);
        let g = self.hoi_gradient(x);
        let mut j = DMatrix::zeros(n, n);
        for i in 0..n {
            for c in 0..n {
                let mut v = susceptible[i]
                    * (self.beta_pair * self.a[(i, c)] + self.beta_hoi * g[(i, c)]);
                if i == c {
                    v -= self.delta[i] + self.beta_pair * ax[i] + self.beta_hoi * q[i];
                }
                j[(i, c)] = v;
            }
        }
        j
    }

    /// Jacobian of [`VirusParams::single_field`].
    pub fn single_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let s = x.map(|v| 1.0 - v);
        self.own_block(x, &s)
    }
}

/// Two viruses spreading over a common set of `n` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct BivirusModel {
    n: usize,
    viruses: [VirusParams; 2],
}

impl BivirusModel {
    /// Builds and validates a model. Fails if dimensions disagree or if either
    /// virus violates the well-posedness assumptions.
    pub fn new(v1: VirusParams, v2: VirusParams) -> Result<Self> {
        let m = Self::unvalidated(v1, v2)?;
        let report = m.validate();
        if !report.is_empty() {
            return Err(Error::InvalidModel(report.to_string()));
        }
        Ok(m)
    }

    /// Builds a model checking dimensions only. Use [`validate_model`] to
    /// inspect assumption violations.
    pub fn unvalidated(v1: VirusParams, v2: VirusParams) -> Result<Self> {
        v1.check_dims()?;
        v2.check_dims()?;
        if v1.n() != v2.n() {
            return Err(Error::Dimension {
                expected: v1.n(),
                got: v2.n(),
                context: "node count of virus 2",
            });
        }
        Ok(Self {
            n: v1.n(),
            viruses: [v1, v2],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Parameters of virus `k` (0 or 1).
    pub fn virus(&self, k: usize) -> &VirusParams {
        &self.viruses[k]
    }

    pub fn viruses(&self) -> &[VirusParams; 2] {
        &self.viruses
    }

    pub fn validate(&self) -> ValidationReport {
        validate_model(self)
    }

    fn check_state(&self, s: &State) -> Result<()> {
        for x in [&s.x1, &s.x2] {
            if x.len() != self.n {
                return Err(Error::Dimension {
                    expected: self.n,
                    got: x.len(),
                    context: "state",
                });
            }
        }
        Ok(())
    }

    /// Evaluates the field on a stacked `[x1; x2]` slice, writing into `out`.
    /// Both slices must have length `2n`.
    pub fn field_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n;
        let (x1, x2) = x.split_at(n);
        for (k, v) in self.viruses.iter().enumerate() {
            let own = if k == 0 { x1 } else { x2 };
            for i in 0..n {
                let mut pair = 0.0;
                let mut hoi = 0.0;
                for j in 0..n {
                    pair += v.a[(i, j)] * own[j];
                }
                if v.beta_hoi != 0.0 {
                    let bi = &v.b[i];
                    for j in 0..n {
                        let mut inner = 0.0;
                        for l in 0..n {
                            inner += bi[(j, l)] * own[l];
                        }
                        hoi += own[j] * inner;
                    }
                }
                let s = 1.0 - x1[i] - x2[i];
                out[k * n + i] =
                    -v.delta[i] * own[i] + s * (v.beta_pair * pair + v.beta_hoi * hoi);
            }
        }
    }
}

/// Serializes vectors as plain arrays.
pub(crate) mod plain {
    use nalgebra::DVector;
    use serde::Serializer;

    pub fn vector<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter())
    }

    pub fn option<S: Serializer>(v: &Option<DVector<f64>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => vector(v, s),
            None => s.serialize_none(),
        }
    }
}

/// Pair of infected-fraction vectors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct State {
    #[serde(serialize_with = "plain::vector")]
    pub x1: DVector<f64>,
    #[serde(serialize_with = "plain::vector")]
    pub x2: DVector<f64>,
}

impl State {
    pub fn new(x1: DVector<f64>, x2: DVector<f64>) -> Self {
        Self { x1, x2 }
    }

    /// The disease-free state.
    pub fn dfe(n: usize) -> Self {
        Self::new(DVector::zeros(n), DVector::zeros(n))
    }

    /// Both viruses at the same constant level on every node.
    pub fn uniform(n: usize, x1: f64, x2: f64) -> Self {
        Self::new(DVector::from_element(n, x1), DVector::from_element(n, x2))
    }

    pub fn n(&self) -> usize {
        self.x1.len()
    }

    /// Stacked `[x1; x2]`.
    pub fn stacked(&self) -> DVector<f64> {
        let n = self.n();
        DVector::from_fn(2 * n, |i, _| if i < n { self.x1[i] } else { self.x2[i - n] })
    }

    pub fn from_stacked(v: &[f64]) -> Self {
        let n = v.len() / 2;
        Self::new(
            DVector::from_column_slice(&v[..n]),
            DVector::from_column_slice(&v[n..]),
        )
    }

    /// Infinity-norm distance between two states.
    pub fn distance(&self, other: &State) -> f64 {
        (&self.x1 - &other.x1)
            .amax()
            .max((&self.x2 - &other.x2).amax())
    }

    pub fn norm_inf(&self) -> f64 {
        self.x1.amax().max(self.x2.amax())
    }
}

/// Per-virus indicator of which nodes head at least one hyperedge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HoiSupportIndicator {
    pub ones_b: Vec<bool>,
}

impl HoiSupportIndicator {
    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.ones_b.len(),
            self.ones_b.iter().map(|&b| if b { 1.0 } else { 0.0 }),
        )
    }

    /// Indices of the supported nodes.
    pub fn support(&self) -> Vec<usize> {
        self.ones_b
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        !self.ones_b.iter().any(|&b| b)
    }
}

/// A violated well-posedness assumption. Node and matrix indices are 0-based;
/// `virus` is 1 or 2.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    /// Healing rate not strictly positive.
    NonPositiveHealing { virus: usize, node: usize, value: f64 },
    /// Negative pairwise interaction strength.
    NegativeInteraction {
        virus: usize,
        row: usize,
        col: usize,
        value: f64,
    },
    /// Negative hyperedge strength.
    NegativeHyperedge {
        virus: usize,
        head: usize,
        row: usize,
        col: usize,
        value: f64,
    },
    /// Negative or non-finite infection rate.
    InvalidRate {
        virus: usize,
        rate: &'static str,
        value: f64,
    },
    /// Pairwise interaction matrix is reducible.
    ReducibleInteraction { virus: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveHealing { virus, node, value } => write!(
                f,
                "virus {virus} healing rate at node index {node} is {value} (must be > 0)"
            ),
            Violation::NegativeInteraction {
                virus,
                row,
                col,
                value,
            } => write!(
                f,
                "virus {virus} pairwise matrix entry ({row}, {col}) is {value} (must be >= 0)"
            ),
            Violation::NegativeHyperedge {
                virus,
                head,
                row,
                col,
                value,
            } => write!(
                f,
                "virus {virus} hyperedge matrix {head} entry ({row}, {col}) is {value} (must be >= 0)"
            ),
            Violation::InvalidRate { virus, rate, value } => write!(
                f,
                "virus {virus} {rate} is {value} (must be finite and >= 0)"
            ),
            Violation::ReducibleInteraction { virus } => {
                write!(f, "virus {virus} pairwise matrix is reducible")
            }
        }
    }
}

/// List of violated assumptions; empty iff the model is well posed.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", lines.join("; "))
    }
}

/// Checks both viruses for nonnegative parameters, positive healing and irreducible contacts.
pub fn validate_model(m: &BivirusModel) -> ValidationReport {
    let mut violations = Vec::new();
    for (k, v) in m.viruses.iter().enumerate() {
        let virus = k + 1;
        for (node, &d) in v.delta.iter().enumerate() {
            if !(d > 0.0 && d.is_finite()) {
                violations.push(Violation::NonPositiveHealing {
                    virus,
                    node,
                    value: d,
                });
            }
        }
        for (rate, value) in [("beta_pair", v.beta_pair), ("beta_hoi", v.beta_hoi)] {
            if !(value >= 0.0 && value.is_finite()) {
                violations.push(Violation::InvalidRate { virus, rate, value });
            }
        }
        let mut a_nonneg = true;
        for col in 0..m.n {
            for row in 0..m.n {
                let value = v.a[(row, col)];
                if !(value >= 0.0 && value.is_finite()) {
                    a_nonneg = false;
                    violations.push(Violation::NegativeInteraction {
                        virus,
                        row,
                        col,
                        value,
                    });
                }
            }
        }
        for (head, bi) in v.b.iter().enumerate() {
            for col in 0..m.n {
                for row in 0..m.n {
                    let value = bi[(row, col)];
                    if !(value >= 0.0 && value.is_finite()) {
                        violations.push(Violation::NegativeHyperedge {
                            virus,
                            head,
                            row,
                            col,
                            value,
                        });
                    }
                }
            }
        }
        if a_nonneg && !spectral::is_irreducible(&v.a) {
            violations.push(Violation::ReducibleInteraction { virus });
        }
    }
    ValidationReport { violations }
}

/// Time derivative `(dx1, dx2)` of the bivirus system at `s`.
pub fn vector_field(m: &BivirusModel, s: &State) -> Result<(DVector<f64>, DVector<f64>)> {
    m.check_state(s)?;
    let x = s.stacked();
    let mut out = vec![0.0; 2 * m.n];
    m.field_into(x.as_slice(), &mut out);
    let d = State::from_stacked(&out);
    Ok((d.x1, d.x2))
}

/// Infinity norm of the vector field at `s`.
pub fn field_residual(m: &BivirusModel, s: &State) -> Result<f64> {
    let (d1, d2) = vector_field(m, s)?;
    Ok(d1.amax().max(d2.amax()))
}

/// Analytic `2n x 2n` Jacobian of the vector field at `s`, laid out as
/// `[[J11, J12], [J21, J22]]`.
pub fn jacobian(m: &BivirusModel, s: &State) -> Result<DMatrix<f64>> {
    m.check_state(s)?;
    let n = m.n;
    let susceptible = DVector::from_fn(n, |i, _| 1.0 - s.x1[i] - s.x2[i]);
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    let own = [&s.x1, &s.x2];
    for k in 0..2 {
        let v = &m.viruses[k];
        let x = own[k];
        let block = v.own_block(x, &susceptible);
        j.view_mut((k * n, k * n), (n, n)).copy_from(&block);
        // Cross block: derivative of virus k's field with respect to the
        // other virus only enters through the susceptible fraction.
        let pressure = v.pressure(x);
        let other = 1 - k;
        for i in 0..n {
            j[(k * n + i, other * n + i)] = -pressure[i];
        }
    }
    Ok(j)
}

/// `true` iff `x1 >= -tol`, `x2 >= -tol` and `x1 + x2 <= 1 + tol` entrywise.
pub fn in_domain(s: &State, tol: f64) -> bool {
    domain_excursion(s) <= tol
}

/// Largest violation of the domain constraints (0 inside the domain).
pub fn domain_excursion(s: &State) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..s.n() {
        worst = worst
            .max(-s.x1[i])
            .max(-s.x2[i])
            .max(s.x1[i] + s.x2[i] - 1.0);
    }
    if s.x1.iter().chain(s.x2.iter()).any(|v| v.is_nan()) {
        return f64::INFINITY;
    }
    worst
}

/// Which nodes head at least one hyperedge with a strictly positive weight.
pub fn hoi_support(v: &VirusParams) -> HoiSupportIndicator {
    HoiSupportIndicator {
        ones_b: v.b.iter().map(|bi| bi.iter().any(|&e| e > 0.0)).collect(),
    }
}

/// Matrix `R` whose row `i` is `1^T B_i`, i.e. the column sums of `b[i]`.
pub fn r_matrix(v: &VirusParams) -> DMatrix<f64> {
    let n = v.n();
    let mut r = DMatrix::zeros(n, n);
    for (i, bi) in v.b.iter().enumerate() {
        r.row_mut(i).copy_from(&bi.row_sum());
    }
    r
}
