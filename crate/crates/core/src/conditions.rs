//! Sufficient-condition checkers for stability of the disease-free state,
//! tristability, boundary instability and the existence of coexistence
//! equilibria. Every verdict carries the scalars that decided it.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::equilibria::{Enumeration, EquilibriumKind, EquilibriumRecord};
use crate::error::Result;
use crate::model::{hoi_support, r_matrix, BivirusModel, VirusParams};
use crate::spectral::{spectral_abscissa, spectral_radius, ZERO_BAND};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Fails,
    NotApplicable,
}

impl Verdict {
    fn from_bool(b: bool) -> Self {
        if b {
            Verdict::Holds
        } else {
            Verdict::Fails
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Fails => "fails",
            Verdict::NotApplicable => "not applicable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evidence {
    pub name: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Condition {
    pub name: String,
    pub verdict: Verdict,
    pub evidence: Vec<Evidence>,
}

impl Condition {
    fn new(name: impl Into<String>, verdict: Verdict) -> Self {
        Self {
            name: name.into(),
            verdict,
            evidence: Vec::new(),
        }
    }

    fn with(mut self, name: impl Into<String>, value: f64) -> Self {
        self.evidence.push(Evidence {
            name: name.into(),
            value,
        });
        self
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.evidence.iter().find(|e| e.name == name).map(|e| e.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub title: String,
    /// Conjunction of the individual verdicts: fails if any fails, otherwise
    /// not applicable if any is not applicable.
    pub verdict: Verdict,
    pub conditions: Vec<Condition>,
}

impl ConditionReport {
    fn new(title: impl Into<String>, conditions: Vec<Condition>) -> Self {
        let verdict = if conditions.iter().any(|c| c.verdict == Verdict::Fails) {
            Verdict::Fails
        } else if conditions.iter().any(|c| c.verdict == Verdict::NotApplicable) {
            Verdict::NotApplicable
        } else {
            Verdict::Holds
        };
        Self {
            title: title.into(),
            verdict,
            conditions,
        }
    }

    pub fn holds(&self) -> bool {
        self.verdict == Verdict::Holds
    }

    pub fn condition(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }

    /// Looks up an evidence value by condition and evidence name.
    pub fn value(&self, condition: &str, evidence: &str) -> Option<f64> {
        self.condition(condition)?.value(evidence)
    }
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}: {}", self.title, self.verdict.as_str())?;
        for c in &self.conditions {
            write!(f, "  - {}: {}", c.name, c.verdict.as_str())?;
            let ev: Vec<String> = c
                .evidence
                .iter()
                .map(|e| format!("{} = {:.10}", e.name, e.value))
                .collect();
            if !ev.is_empty() {
                write!(f, " [{}]", ev.join(", "))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// `D^{-1} M`.
fn healing_scaled(v: &VirusParams, m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row /= v.delta[i];
    }
    out
}

/// `rho(beta_pair D^{-1} A)` for one virus.
pub fn pairwise_reproduction(v: &VirusParams) -> Result<f64> {
    spectral_radius(&healing_scaled(v, &(&v.a * v.beta_pair)))
}

/// `s(-D + beta_pair diag(weights) A)`; `weights = 1` gives the DFE block.
pub fn weighted_block_abscissa(v: &VirusParams, weights: &DVector<f64>) -> Result<f64> {
    let mut m = &v.a * v.beta_pair;
    for (i, mut row) in m.row_iter_mut().enumerate() {
        row *= weights[i];
    }
    for i in 0..v.n() {
        m[(i, i)] -= v.delta[i];
    }
    spectral_abscissa(&m)
}

/// `s(-D + beta_pair A)`, the virus's diagonal block of the Jacobian at the DFE.
pub fn dfe_block_abscissa(v: &VirusParams) -> Result<f64> {
    weighted_block_abscissa(v, &DVector::from_element(v.n(), 1.0))
}

/// Local stability of the DFE: `rho(beta_pair^k (D^k)^{-1} A^k) < 1` for both viruses.
pub fn check_dfe_local(m: &BivirusModel) -> Result<ConditionReport> {
    let mut conditions = Vec::new();
    for k in 0..2 {
        let rho = pairwise_reproduction(m.virus(k))?;
        conditions.push(
            Condition::new(format!("virus{}_rho_pair_lt_1", k + 1), Verdict::from_bool(rho < 1.0))
                .with("rho", rho),
        );
    }
    Ok(ConditionReport::new("DFE local stability", conditions))
}

/// Global stability of the DFE:
/// `rho(beta_pair^k (D^k)^{-1} A^k + beta_hoi^k (D^k)^{-1} R^k) < 1` for both viruses.
pub fn check_dfe_global(m: &BivirusModel) -> Result<ConditionReport> {
    let mut conditions = Vec::new();
    for k in 0..2 {
        let v = m.virus(k);
        let combined = &v.a * v.beta_pair + r_matrix(v) * v.beta_hoi;
        let rho = spectral_radius(&healing_scaled(v, &combined))?;
        conditions.push(
            Condition::new(format!("virus{}_rho_total_lt_1", k + 1), Verdict::from_bool(rho < 1.0))
                .with("rho", rho),
        );
    }
    Ok(ConditionReport::new("DFE global stability", conditions))
}

/// Per-node value of the tristability expression
/// `beta_pair/delta_i (A 1_B)_i + beta_hoi/(2 delta_i) 1_B^T B_i 1_B`
/// on the hyperedge support, `None` elsewhere.
pub fn tristability_expression(v: &VirusParams) -> Vec<Option<f64>> {
    let ind = hoi_support(v);
    let ones = ind.as_vector();
    let a1 = &v.a * &ones;
    (0..v.n())
        .map(|i| {
            ind.ones_b[i].then(|| {
                v.beta_pair / v.delta[i] * a1[i]
                    + v.beta_hoi / (2.0 * v.delta[i]) * ones.dot(&(&v.b[i] * &ones))
            })
        })
        .collect()
}

/// Tristability conditions for both viruses: a) subcritical pairwise
/// reproduction and b) the minimum of [`tristability_expression`] over the
/// hyperedge support exceeds 2. Node indices in the evidence are 1-based.
pub fn check_tristability(m: &BivirusModel) -> Result<ConditionReport> {
    let mut conditions = Vec::new();
    for k in 0..2 {
        let v = m.virus(k);
        let rho = pairwise_reproduction(v)?;
        conditions.push(
            Condition::new(format!("virus{}_a_rho_pair_lt_1", k + 1), Verdict::from_bool(rho < 1.0))
                .with("rho", rho),
        );
        let expr = tristability_expression(v);
        let min = expr
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.map(|val| (i, val)))
            .fold(None, |acc: Option<(usize, f64)>, (i, val)| match acc {
                Some((_, best)) if best <= val => acc,
                _ => Some((i, val)),
            });
        let name = format!("virus{}_b_min_expression_gt_2", k + 1);
        let cond = match min {
            None => Condition::new(name, Verdict::NotApplicable),
            Some((argmin, value)) => {
                let mut c = Condition::new(name, Verdict::from_bool(value > 2.0))
                    .with("min", value)
                    .with("argmin_node", (argmin + 1) as f64);
                for (i, e) in expr.iter().enumerate() {
                    if let Some(val) = e {
                        c = c.with(format!("node{}", i + 1), *val);
                    }
                }
                c
            }
        };
        conditions.push(cond);
    }
    Ok(ConditionReport::new("Tristability", conditions))
}

/// Spectral abscissas of the off-virus Jacobian blocks at the two boundary
/// equilibria, `s(-D^1 + beta_pair^1 (I - X2) A^1)` and
/// `s(-D^2 + beta_pair^2 (I - X1) A^2)`. A positive value makes the
/// corresponding boundary equilibrium unstable.
pub fn check_boundary_instability(
    m: &BivirusModel,
    bar_x1: &DVector<f64>,
    bar_x2: &DVector<f64>,
) -> Result<ConditionReport> {
    let s_v1_block = weighted_block_abscissa(m.virus(0), &bar_x2.map(|e| 1.0 - e))?;
    let s_v2_block = weighted_block_abscissa(m.virus(1), &bar_x1.map(|e| 1.0 - e))?;
    let rho1 = pairwise_reproduction(m.virus(0))?;
    let rho2 = pairwise_reproduction(m.virus(1))?;
    let conditions = vec![
        Condition::new("existence_rho_pair_gt_1", Verdict::from_bool(rho1 > 1.0 && rho2 > 1.0))
            .with("rho_v1", rho1)
            .with("rho_v2", rho2),
        Condition::new("boundary_v1_unstable", Verdict::from_bool(s_v2_block > 0.0))
            .with("s_v2_block", s_v2_block),
        Condition::new("boundary_v2_unstable", Verdict::from_bool(s_v1_block > 0.0))
            .with("s_v1_block", s_v1_block),
    ];
    Ok(ConditionReport::new("Boundary existence and instability", conditions))
}

/// Parameter regimes that guarantee a coexistence equilibrium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoexistenceRegime {
    /// Unstable DFE and both boundary equilibria unstable: some coexistence
    /// equilibrium exists.
    BothBoundariesUnstable,
    /// Unstable DFE and both boundary equilibria stable: some coexistence
    /// equilibrium exists that is not locally exponentially stable.
    BothBoundariesStable,
    /// Tristability: DFE and both boundaries stable, some coexistence
    /// equilibrium exists that is not locally exponentially stable.
    Tristable,
}

impl CoexistenceRegime {
    pub fn as_str(&self) -> &'static str {
        match self {
            CoexistenceRegime::BothBoundariesUnstable => "both_boundaries_unstable",
            CoexistenceRegime::BothBoundariesStable => "both_boundaries_stable",
            CoexistenceRegime::Tristable => "tristable",
        }
    }

    pub fn claim(&self) -> &'static str {
        match self {
            CoexistenceRegime::BothBoundariesUnstable => "at least one coexistence equilibrium exists",
            _ => "at least one coexistence equilibrium exists and it is not locally exponentially stable",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CoexistenceAssessment {
    pub report: ConditionReport,
    /// Regimes whose hypotheses hold.
    pub regimes: Vec<CoexistenceRegime>,
    /// Whether the records contain the equilibrium the applicable regimes
    /// promise; `None` if no regime applies.
    pub claim_verified: Option<bool>,
}

impl CoexistenceAssessment {
    pub fn regime(&self) -> Option<CoexistenceRegime> {
        self.regimes.first().copied()
    }
}

/// Determines which coexistence regime applies given enumerated equilibria
/// and checks the implied claim against the records.
pub fn check_coexistence_hypotheses(
    m: &BivirusModel,
    records: &[EquilibriumRecord],
) -> Result<CoexistenceAssessment> {
    let s1 = dfe_block_abscissa(m.virus(0))?;
    let s2 = dfe_block_abscissa(m.virus(1))?;
    let dfe_unstable = s1 > ZERO_BAND && s2 > ZERO_BAND;
    let b1: Vec<&EquilibriumRecord> = records.iter().filter(|r| r.kind == EquilibriumKind::BoundaryV1).collect();
    let b2: Vec<&EquilibriumRecord> = records.iter().filter(|r| r.kind == EquilibriumKind::BoundaryV2).collect();

    let mut both_unstable_pair = None;
    for r1 in &b1 {
        for r2 in &b2 {
            let rep = check_boundary_instability(m, &r1.point.x1, &r2.point.x2)?;
            let sa = rep.value("boundary_v2_unstable", "s_v1_block").unwrap_or(f64::NAN);
            let sb = rep.value("boundary_v1_unstable", "s_v2_block").unwrap_or(f64::NAN);
            if sa > ZERO_BAND && sb > ZERO_BAND {
                both_unstable_pair = Some((sa, sb));
            }
        }
    }
    let stable1 = b1.iter().filter(|r| r.is_stable()).count();
    let stable2 = b2.iter().filter(|r| r.is_stable()).count();
    let tri = check_tristability(m)?;

    let mut regimes = Vec::new();
    let mut prop3 = Condition::new(
        "both_boundaries_unstable_regime",
        Verdict::from_bool(dfe_unstable && both_unstable_pair.is_some()),
    )
    .with("s_dfe_v1_block", s1)
    .with("s_dfe_v2_block", s2);
    if let Some((sa, sb)) = both_unstable_pair {
        prop3 = prop3.with("s_v1_block_at_bar_x2", sa).with("s_v2_block_at_bar_x1", sb);
    }
    if prop3.verdict == Verdict::Holds {
        regimes.push(CoexistenceRegime::BothBoundariesUnstable);
    }
    let thm3 = Condition::new(
        "both_boundaries_stable_regime",
        Verdict::from_bool(dfe_unstable && stable1 > 0 && stable2 > 0),
    )
    .with("s_dfe_v1_block", s1)
    .with("s_dfe_v2_block", s2)
    .with("stable_boundary_v1_count", stable1 as f64)
    .with("stable_boundary_v2_count", stable2 as f64);
    if thm3.verdict == Verdict::Holds {
        regimes.push(CoexistenceRegime::BothBoundariesStable);
    }
    let prop4 = Condition::new("tristable_regime", Verdict::from_bool(tri.holds()));
    if prop4.verdict == Verdict::Holds {
        regimes.push(CoexistenceRegime::Tristable);
    }

    let coexist: Vec<&EquilibriumRecord> =
        records.iter().filter(|r| r.kind == EquilibriumKind::Coexistence).collect();
    let not_stable = coexist.iter().filter(|r| r.s_jacobian >= -ZERO_BAND).count();
    let claim_verified = regimes.first().map(|_| {
        regimes.iter().all(|r| match r {
            CoexistenceRegime::BothBoundariesUnstable => !coexist.is_empty(),
            _ => not_stable > 0,
        })
    });
    let claim = Condition::new(
        "implied_claim_verified",
        match claim_verified {
            None => Verdict::NotApplicable,
            Some(b) => Verdict::from_bool(b),
        },
    )
    .with("coexistence_count", coexist.len() as f64)
    .with("not_stable_coexistence_count", not_stable as f64);

    // The overall verdict is about the claim; regime rows are informational.
    let mut report = ConditionReport::new("Coexistence regimes", vec![claim.clone()]);
    report.conditions = vec![prop3, thm3, prop4, claim];
    Ok(CoexistenceAssessment {
        report,
        regimes,
        claim_verified,
    })
}

/// All condition reports for a model, evaluated against an enumeration of its
/// equilibria.
#[derive(Debug, Clone, Serialize)]
pub struct ConsolidatedReport {
    pub dfe_local: ConditionReport,
    pub dfe_global: ConditionReport,
    pub tristability: ConditionReport,
    /// One report per pair of boundary equilibria found.
    pub boundary: Vec<ConditionReport>,
    pub coexistence: CoexistenceAssessment,
    pub regime: Option<CoexistenceRegime>,
}

pub fn consolidated_report(m: &BivirusModel, eq: &Enumeration) -> Result<ConsolidatedReport> {
    let mut boundary = Vec::new();
    for r1 in eq.of_kind(EquilibriumKind::BoundaryV1) {
        for r2 in eq.of_kind(EquilibriumKind::BoundaryV2) {
            boundary.push(check_boundary_instability(m, &r1.point.x1, &r2.point.x2)?);
        }
    }
    let coexistence = check_coexistence_hypotheses(m, &eq.records)?;
    Ok(ConsolidatedReport {
        dfe_local: check_dfe_local(m)?,
        dfe_global: check_dfe_global(m)?,
        tristability: check_tristability(m)?,
        boundary,
        regime: coexistence.regime(),
        coexistence,
    })
}

impl fmt::Display for ConsolidatedReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.dfe_local)?;
        write!(f, "{}", self.dfe_global)?;
        write!(f, "{}", self.tristability)?;
        for b in &self.boundary {
            write!(f, "{b}")?;
        }
        write!(f, "{}", self.coexistence.report)?;
        match self.regime {
            Some(r) => {
                writeln!(f, "Regime: {}", r.as_str())?;
                let verified = match self.coexistence.claim_verified {
                    Some(true) => "confirmed by the equilibria found",
                    _ => "NOT confirmed by the equilibria found",
                };
                writeln!(f, "Implied claim: {} ({verified})", r.claim())
            }
            None => writeln!(f, "Regime: none"),
        }
    }
}
