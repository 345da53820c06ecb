//! Trajectory integration with domain monitoring, convergence detection,
//! cone-order (monotonicity) probes and randomized convergence censuses.
//!
//! Random initial conditions are drawn from ChaCha8 seeded with the caller's
//! `rng_seed`; the `i`-th state of a sample uses stream `i` of that seed, so
//! each state is reproducible on its own regardless of how many are drawn.

use std::collections::BTreeMap;

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::equilibria::{self, EquilibriumKind, EquilibriumRecord};
use crate::error::{Error, Result};
use crate::model::{domain_excursion, field_residual, in_domain, BivirusModel, State};
use crate::ode::{Dopri5, Tolerances};

/// Excursions up to this size are projected back onto the domain.
pub const CLAMP_TOL: f64 = 1e-9;
/// Excursions beyond this size abort the integration.
pub const LEFT_DOMAIN_TOL: f64 = 1e-7;
/// Distance within which a limit point matches a known equilibrium.
pub const MATCH_TOL: f64 = 1e-5;
/// Virus components below this level are snapped to zero before polishing a
/// limit point.
pub const SNAP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConvergenceCriterion {
    /// Field infinity-norm threshold.
    pub eps_field: f64,
    /// Number of trailing accepted steps that must all be below `eps_field`.
    pub window: usize,
}

impl Default for ConvergenceCriterion {
    fn default() -> Self {
        Self {
            eps_field: 1e-8,
            window: 10,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IntegrationOptions {
    pub t_max: f64,
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    /// Stop as soon as the criterion is met; `None` integrates to `t_max`.
    pub stop_on: Option<ConvergenceCriterion>,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self {
            t_max: 200.0,
            rtol: 1e-8,
            atol: 1e-10,
            h_init: 1e-3,
            stop_on: Some(ConvergenceCriterion::default()),
        }
    }
}

impl IntegrationOptions {
    pub fn with_t_max(mut self, t_max: f64) -> Self {
        self.t_max = t_max;
        self
    }

    fn tolerances(&self) -> Tolerances {
        Tolerances {
            rtol: self.rtol,
            atol: self.atol,
            h_init: self.h_init,
            ..Tolerances::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum TerminalVerdict {
    /// The field stayed below the threshold over the trailing window.
    ConvergedTo { point: State },
    MaxTimeReached,
    /// An accepted step left the domain by more than [`LEFT_DOMAIN_TOL`].
    LeftDomain { time: f64, excursion: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    /// Field infinity norm at each recorded state.
    pub field_norms: Vec<f64>,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    /// Largest domain excursion seen before projection.
    pub max_excursion: f64,
    pub terminal_verdict: TerminalVerdict,
}

impl Trajectory {
    pub fn last_state(&self) -> &State {
        self.states.last().expect("trajectory holds the initial state")
    }
}

/// Adaptive integrator for the bivirus flow with the projection guard
/// applied after every accepted step.
pub struct Simulator<'m> {
    model: &'m BivirusModel,
    ode: Dopri5<Box<dyn FnMut(f64, &[f64], &mut [f64]) + 'm>>,
    pub max_excursion: f64,
}

impl<'m> Simulator<'m> {
    pub fn new(model: &'m BivirusModel, s0: &State, opts: &IntegrationOptions) -> Result<Self> {
        if s0.n() != model.n() || s0.x2.len() != model.n() {
            return Err(Error::Dimension {
                expected: model.n(),
                got: s0.n(),
                context: "initial state",
            });
        }
        if !in_domain(s0, 0.0) {
            return Err(Error::OutsideDomain(format!(
                "initial state exceeds the domain by {:e}",
                domain_excursion(s0)
            )));
        }
        let f: Box<dyn FnMut(f64, &[f64], &mut [f64]) + 'm> =
            Box::new(move |_, y: &[f64], dy: &mut [f64]| model.field_into(y, dy));
        Ok(Self {
            model,
            ode: Dopri5::new(f, 0.0, s0.stacked().as_slice().to_vec(), opts.tolerances()),
            max_excursion: 0.0,
        })
    }

    pub fn t(&self) -> f64 {
        self.ode.t()
    }

    pub fn state(&self) -> State {
        State::from_stacked(self.ode.y())
    }

    pub fn field_norm(&mut self) -> f64 {
        self.ode.derivative().iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn steps(&self) -> (usize, usize) {
        (self.ode.accepted, self.ode.rejected)
    }

    /// One accepted step not passing `t_limit`, followed by the domain guard.
    pub fn step(&mut self, t_limit: f64) -> Result<()> {
        self.ode.step(t_limit)?;
        let n = self.model.n();
        let excursion = domain_excursion(&State::from_stacked(self.ode.y()));
        self.max_excursion = self.max_excursion.max(excursion);
        if excursion > LEFT_DOMAIN_TOL {
            return Err(Error::LeftDomain {
                time: self.ode.t(),
                excursion,
            });
        }
        if excursion > 0.0 {
            let y = self.ode.y_mut();
            for v in y.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            for i in 0..n {
                let sum = y[i] + y[n + i];
                if sum > 1.0 {
                    y[i] /= sum;
                    y[n + i] /= sum;
                }
            }
        }
        Ok(())
    }

    /// Steps until exactly `t`.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        while self.ode.t() < t {
            self.step(t)?;
        }
        Ok(())
    }
}

/// Integrates from `s0`, recording every accepted step.
///
/// Fails up front if `s0` is outside the domain; a later domain violation or
/// step underflow ends the trajectory with [`TerminalVerdict::LeftDomain`] or
/// an error respectively.
pub fn integrate(m: &BivirusModel, s0: &State, opts: &IntegrationOptions) -> Result<Trajectory> {
    let mut sim = Simulator::new(m, s0, opts)?;
    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![s0.clone()],
        field_norms: vec![sim.field_norm()],
        steps_accepted: 0,
        steps_rejected: 0,
        max_excursion: 0.0,
        terminal_verdict: TerminalVerdict::MaxTimeReached,
    };
    let mut below = usize::from(traj.field_norms[0] < opts.stop_on.map_or(0.0, |c| c.eps_field));
    while sim.t() < opts.t_max {
        match sim.step(opts.t_max) {
            Ok(()) => {}
            Err(Error::LeftDomain { time, excursion }) => {
                traj.terminal_verdict = TerminalVerdict::LeftDomain { time, excursion };
                break;
            }
            Err(e) => return Err(e),
        }
        let norm = sim.field_norm();
        traj.times.push(sim.t());
        traj.states.push(sim.state());
        traj.field_norms.push(norm);
        if let Some(c) = opts.stop_on {
            below = if norm < c.eps_field { below + 1 } else { 0 };
            if below >= c.window {
                traj.terminal_verdict = TerminalVerdict::ConvergedTo { point: sim.state() };
                break;
            }
        }
    }
    let (acc, rej) = sim.steps();
    traj.steps_accepted = acc;
    traj.steps_rejected = rej;
    traj.max_excursion = sim.max_excursion;
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ConvergenceVerdict {
    ConvergedTo {
        /// Limit point after snapping and Newton polishing.
        point: State,
        kind: EquilibriumKind,
        /// Index of the matching known equilibrium, if any.
        matched: Option<usize>,
        /// Distance from the final trajectory state to `point`.
        terminal_distance: f64,
    },
    MaxTimeReached,
    LeftDomain {
        time: f64,
        excursion: f64,
    },
}

impl ConvergenceVerdict {
    pub fn kind(&self) -> Option<EquilibriumKind> {
        match self {
            ConvergenceVerdict::ConvergedTo { kind, .. } => Some(*kind),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ConvergenceVerdict::ConvergedTo { .. } => "converged",
            ConvergenceVerdict::MaxTimeReached => "max_time_reached",
            ConvergenceVerdict::LeftDomain { .. } => "left_domain",
        }
    }
}

/// Declares convergence when the field norm is below `eps_field` at every one
/// of the last `window` recorded states (or all states if fewer), then
/// polishes the limit point and matches it against `known`.
pub fn detect_convergence(
    traj: &Trajectory,
    m: &BivirusModel,
    eps_field: f64,
    window: usize,
    known: &[EquilibriumRecord],
) -> ConvergenceVerdict {
    if let TerminalVerdict::LeftDomain { time, excursion } = traj.terminal_verdict {
        return ConvergenceVerdict::LeftDomain { time, excursion };
    }
    let start = traj.states.len().saturating_sub(window.max(1));
    let tail = &traj.states[start..];
    let converged = tail
        .iter()
        .all(|s| field_residual(m, s).map_or(false, |r| r < eps_field));
    if !converged {
        return ConvergenceVerdict::MaxTimeReached;
    }
    let last = traj.last_state();
    let point = equilibria::polish(m, last, SNAP_TOL)
        .filter(|p| p.distance(last) < 1e3 * SNAP_TOL)
        .unwrap_or_else(|| last.clone());
    let matched = known
        .iter()
        .enumerate()
        .filter(|(_, r)| r.point.distance(&point) <= MATCH_TOL)
        .min_by(|a, b| a.1.point.distance(&point).total_cmp(&b.1.point.distance(&point)))
        .map(|(i, _)| i);
    ConvergenceVerdict::ConvergedTo {
        kind: EquilibriumKind::of(&point),
        terminal_distance: point.distance(last),
        point,
        matched,
    }
}

/// How random initial conditions are placed in the domain.
///
/// Both schemes draw every coordinate uniformly on (0, 1) first.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Divide both vectors by `max_i(x1_i + x2_i) * (1 + 1e-6)` only when that
    /// maximum exceeds 1. Samples concentrate far from the DFE.
    Cap,
    /// Divide both vectors by `max_i(x1_i + x2_i) * (1 + 1e-6)`, then multiply
    /// by an independent level drawn uniformly on (0, 1). Samples cover the
    /// whole interior, including a neighbourhood of the DFE.
    #[default]
    RandomLevel,
}

impl std::str::FromStr for Sampling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cap" => Ok(Sampling::Cap),
            "random-level" | "random_level" => Ok(Sampling::RandomLevel),
            other => Err(Error::Config(format!(
                "unknown sampling scheme '{other}' (expected cap or random-level)"
            ))),
        }
    }
}

/// State drawn from stream `index` of `rng_seed`.
pub fn sample_initial_condition(n: usize, rng_seed: u64, index: u64, sampling: Sampling) -> State {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    rng.set_stream(index);
    let x1: Vec<f64> = (0..n).map(|_| rng.sample(Open01)).collect();
    let x2: Vec<f64> = (0..n).map(|_| rng.sample(Open01)).collect();
    let max_sum = (0..n).map(|i| x1[i] + x2[i]).fold(0.0, f64::max);
    let cap = max_sum * (1.0 + 1e-6);
    let scale = match sampling {
        Sampling::Cap if max_sum > 1.0 => 1.0 / cap,
        Sampling::Cap => 1.0,
        Sampling::RandomLevel => rng.sample::<f64, _>(Open01) / cap,
    };
    State::new(
        x1.into_iter().map(|v| v * scale).collect::<Vec<_>>().into(),
        x2.into_iter().map(|v| v * scale).collect::<Vec<_>>().into(),
    )
}

/// `count` random initial conditions in the interior of the domain; state `i`
/// uses stream `i` of `rng_seed`.
pub fn sample_initial_conditions(n: usize, count: usize, rng_seed: u64, sampling: Sampling) -> Vec<State> {
    (0..count as u64)
        .map(|i| sample_initial_condition(n, rng_seed, i, sampling))
        .collect()
}

/// Two initial states in the cone order `xa1 > xb1`, `xa2 < xb2`.
#[derive(Debug, Clone, Serialize)]
pub struct OrderedPair {
    a: State,
    b: State,
}

impl OrderedPair {
    pub fn new(a: State, b: State) -> Result<Self> {
        if a.n() != b.n() {
            return Err(Error::InvalidOrderedPair("dimension mismatch".to_string()));
        }
        let ge1 = a.x1.iter().zip(b.x1.iter()).all(|(p, q)| p >= q);
        let le2 = a.x2.iter().zip(b.x2.iter()).all(|(p, q)| p <= q);
        if !(ge1 && le2) {
            return Err(Error::InvalidOrderedPair(
                "need x1 of A >= x1 of B and x2 of A <= x2 of B entrywise".to_string(),
            ));
        }
        if a.x1 == b.x1 || a.x2 == b.x2 {
            return Err(Error::InvalidOrderedPair(
                "both orders must be strict (states differ in each virus)".to_string(),
            ));
        }
        for s in [&a, &b] {
            let interior = s.x1.iter().chain(s.x2.iter()).all(|&v| v > 0.0)
                && (0..s.n()).all(|i| s.x1[i] + s.x2[i] < 1.0);
            if !interior {
                return Err(Error::InvalidOrderedPair("states must be interior".to_string()));
            }
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &State {
        &self.a
    }

    pub fn b(&self) -> &State {
        &self.b
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderViolation {
    pub time: f64,
    /// 1 or 2.
    pub virus: usize,
    pub node: usize,
    /// Signed margin; the order is violated when it is below `-tol`.
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityReport {
    pub holds: bool,
    /// Smallest margin `min(xa1 - xb1, xb2 - xa2)` over all samples after t = 0.
    pub min_margin: f64,
    pub first_violation: Option<OrderViolation>,
}

/// Integrates both states of `pair` on the shared grid `t_samples` and checks
/// that `xa1(t) >= xb1(t) - tol` and `xa2(t) <= xb2(t) + tol` at every sample
/// after `t = 0`.
pub fn monotonicity_probe(
    m: &BivirusModel,
    pair: &OrderedPair,
    t_samples: &[f64],
    opts: &IntegrationOptions,
    tol: f64,
) -> Result<MonotonicityReport> {
    let mut sa = Simulator::new(m, &pair.a, opts)?;
    let mut sb = Simulator::new(m, &pair.b, opts)?;
    let mut min_margin = f64::INFINITY;
    let mut first_violation = None;
    for &t in t_samples.iter().filter(|&&t| t > 0.0) {
        sa.advance_to(t)?;
        sb.advance_to(t)?;
        let (a, b) = (sa.state(), sb.state());
        for i in 0..m.n() {
            for (virus, margin) in [(1, a.x1[i] - b.x1[i]), (2, b.x2[i] - a.x2[i])] {
                min_margin = min_margin.min(margin);
                if margin < -tol && first_violation.is_none() {
                    first_violation = Some(OrderViolation {
                        time: t,
                        virus,
                        node: i,
                        margin,
                    });
                }
            }
        }
    }
    Ok(MonotonicityReport {
        holds: first_violation.is_none(),
        min_margin,
        first_violation,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CensusRun {
    pub run_id: usize,
    /// Base seed; the run draws its initial state from stream `run_id`.
    pub seed: u64,
    pub verdict: ConvergenceVerdict,
    pub matched_kind: Option<EquilibriumKind>,
    pub terminal_distance: Option<f64>,
    pub max_excursion: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CensusSummary {
    pub runs: Vec<CensusRun>,
    /// Number of converged runs per equilibrium kind.
    pub histogram: BTreeMap<EquilibriumKind, usize>,
    /// Converged runs whose limit is not among the known equilibria.
    pub unmatched: usize,
    pub converged_fraction: f64,
    pub sampling: Sampling,
}

impl CensusSummary {
    pub fn non_converged(&self) -> impl Iterator<Item = &CensusRun> {
        self.runs.iter().filter(|r| r.matched_kind.is_none())
    }

    pub fn support(&self) -> Vec<EquilibriumKind> {
        self.histogram
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(k, _)| *k)
            .collect()
    }
}

/// Integrates `count` random initial conditions and tallies their limits.
pub fn convergence_census(
    m: &BivirusModel,
    known: &[EquilibriumRecord],
    count: usize,
    rng_seed: u64,
    sampling: Sampling,
    opts: &IntegrationOptions,
) -> Result<CensusSummary> {
    let criterion = opts.stop_on.unwrap_or_default();
    let runs: Vec<Result<CensusRun>> = (0..count)
        .into_par_iter()
        .map(|run_id| {
            let s0 = sample_initial_condition(m.n(), rng_seed, run_id as u64, sampling);
            let traj = integrate(m, &s0, opts)?;
            let verdict = detect_convergence(&traj, m, criterion.eps_field, criterion.window, known);
            let (matched_kind, terminal_distance) = match &verdict {
                ConvergenceVerdict::ConvergedTo {
                    kind,
                    terminal_distance,
                    ..
                } => (Some(*kind), Some(*terminal_distance)),
                _ => (None, None),
            };
            Ok(CensusRun {
                run_id,
                seed: rng_seed,
                verdict,
                matched_kind,
                terminal_distance,
                max_excursion: traj.max_excursion,
            })
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>>>()?;
    let mut histogram = BTreeMap::new();
    let mut unmatched = 0;
    for r in &runs {
        if let ConvergenceVerdict::ConvergedTo { kind, matched, .. } = &r.verdict {
            *histogram.entry(*kind).or_insert(0) += 1;
            if matched.is_none() {
                unmatched += 1;
            }
        }
    }
    let converged = histogram.values().sum::<usize>();
    Ok(CensusSummary {
        converged_fraction: if count == 0 { 0.0 } else { converged as f64 / count as f64 },
        runs,
        histogram,
        unmatched,
        sampling,
    })
}
