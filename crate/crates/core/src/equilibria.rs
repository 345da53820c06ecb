//! Equilibrium computation and classification.
//!
//! Single-virus (boundary) equilibria are found by a damped monotone
//! fixed-point iteration finished by Newton's method; coexistence equilibria by
//! a damped Newton iteration on the full `2n`-dimensional system that stays in
//! the interior of the domain.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{self, IntegrationOptions, Trajectory};
use crate::error::{Error, Result};
use crate::model::{field_residual, jacobian, BivirusModel, State, VirusParams};
use crate::spectral::{self, ZERO_BAND};

/// Maximum field residual accepted for a reported equilibrium.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Infinity-norm distance under which two equilibria are the same.
pub const DEDUP_TOL: f64 = 1e-6;
/// `|det J|` at or below this value flags a degenerate equilibrium.
pub const DEGENERACY_TOL: f64 = 1e-10;
/// Required gap `1 - (x1 + x2)` for interior points.
pub const INTERIOR_MARGIN: f64 = 1e-9;
/// Residual target of the Newton refinements.
pub const SOLVE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumKind {
    #[serde(rename = "DFE")]
    Dfe,
    BoundaryV1,
    BoundaryV2,
    Coexistence,
}

impl EquilibriumKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EquilibriumKind::Dfe => "DFE",
            EquilibriumKind::BoundaryV1 => "boundary_v1",
            EquilibriumKind::BoundaryV2 => "boundary_v2",
            EquilibriumKind::Coexistence => "coexistence",
        }
    }

    /// Kind implied by which virus components are identically zero.
    pub fn of(point: &State) -> Self {
        let zero1 = point.x1.iter().all(|&v| v == 0.0);
        let zero2 = point.x2.iter().all(|&v| v == 0.0);
        match (zero1, zero2) {
            (true, true) => EquilibriumKind::Dfe,
            (false, true) => EquilibriumKind::BoundaryV1,
            (true, false) => EquilibriumKind::BoundaryV2,
            (false, false) => EquilibriumKind::Coexistence,
        }
    }
}

impl std::fmt::Display for EquilibriumKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    LocallyExponentiallyStable,
    Unstable,
    Neutral,
}

impl Stability {
    pub fn from_abscissa(s: f64) -> Self {
        if s < -ZERO_BAND {
            Stability::LocallyExponentiallyStable
        } else if s > ZERO_BAND {
            Stability::Unstable
        } else {
            Stability::Neutral
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Stability::LocallyExponentiallyStable => "stable",
            Stability::Unstable => "unstable",
            Stability::Neutral => "neutral",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumRecord {
    pub point: State,
    pub kind: EquilibriumKind,
    /// Spectral abscissa of the full Jacobian at `point`.
    pub s_jacobian: f64,
    pub stability: Stability,
    pub det_jacobian: f64,
    pub nondegenerate: bool,
    /// Infinity norm of the vector field at `point`.
    pub residual: f64,
    pub saturated: bool,
}

impl EquilibriumRecord {
    /// Builds the record for an equilibrium point, classifying it by its zero
    /// pattern and the spectrum of the Jacobian.
    pub fn new(m: &BivirusModel, point: State) -> Result<Self> {
        let n = m.n();
        let kind = EquilibriumKind::of(&point);
        let j = jacobian(m, &point)?;
        let s_jacobian = spectral::spectral_abscissa(&j)?;
        let det_jacobian = j.clone().lu().determinant();
        let residual = field_residual(m, &point)?;
        let saturated = match kind {
            EquilibriumKind::Coexistence => true,
            EquilibriumKind::Dfe => s_jacobian <= ZERO_BAND,
            EquilibriumKind::BoundaryV1 => {
                spectral::spectral_abscissa(&j.view((n, n), (n, n)).clone_owned())? <= ZERO_BAND
            }
            EquilibriumKind::BoundaryV2 => {
                spectral::spectral_abscissa(&j.view((0, 0), (n, n)).clone_owned())? <= ZERO_BAND
            }
        };
        Ok(Self {
            point,
            kind,
            s_jacobian,
            stability: Stability::from_abscissa(s_jacobian),
            det_jacobian,
            nondegenerate: det_jacobian.abs() > DEGENERACY_TOL,
            residual,
            saturated,
        })
    }

    pub fn is_stable(&self) -> bool {
        self.stability == Stability::LocallyExponentiallyStable
    }
}

/// Structural check on an equilibrium: each virus component is identically
/// zero or strictly inside `(0, 1)`, and `1 - (x1 + x2) >= INTERIOR_MARGIN`.
pub fn satisfies_structure(point: &State) -> bool {
    let part_ok = |x: &DVector<f64>| {
        x.iter().all(|&v| v == 0.0) || x.iter().all(|&v| v > 0.0 && v < 1.0)
    };
    part_ok(&point.x1)
        && part_ok(&point.x2)
        && (0..point.n()).all(|i| 1.0 - point.x1[i] - point.x2[i] >= INTERIOR_MARGIN)
}

/// Tuning of the single-virus fixed-point solver.
#[derive(Debug, Clone, Copy)]
pub struct FixedPointOptions {
    /// Relaxation weight of the fixed-point step.
    pub damping: f64,
    /// Iterates are clamped to `[0, 1 - clamp_eps]`.
    pub clamp_eps: f64,
    /// Residual below which Newton refinement is attempted.
    pub newton_switch: f64,
    /// Iterates with infinity norm below this value are treated as the DFE.
    pub zero_tol: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            clamp_eps: 1e-12,
            newton_switch: 1e-3,
            zero_tol: 1e-8,
        }
    }
}

/// Outcome of a single-virus equilibrium search.
#[derive(Debug, Clone, PartialEq)]
pub enum SingleVirusOutcome {
    /// An endemic equilibrium `0 << x << 1`.
    Endemic(DVector<f64>),
    /// The iteration collapsed to the zero vector.
    ConvergedToDfe,
}

/// Finds a single-virus equilibrium from `seed` with default solver tuning.
pub fn find_single_virus_equilibrium(
    v: &VirusParams,
    seed: &DVector<f64>,
    max_iter: usize,
    tol: f64,
) -> Result<SingleVirusOutcome> {
    find_single_virus_equilibrium_with(v, seed, max_iter, tol, FixedPointOptions::default())
}

/// Damped iteration of `x -> F(x) / (delta + F(x))` with
/// `F(x) = beta_pair A x + beta_hoi q(x)`, whose fixed points are exactly the
/// single-virus equilibria, followed by Newton refinement once the residual is
/// small.
pub fn find_single_virus_equilibrium_with(
    v: &VirusParams,
    seed: &DVector<f64>,
    max_iter: usize,
    tol: f64,
    opts: FixedPointOptions,
) -> Result<SingleVirusOutcome> {
    let n = v.n();
    if seed.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: seed.len(),
            context: "seed",
        });
    }
    let upper = 1.0 - opts.clamp_eps;
    let mut x = seed.map(|e| e.clamp(0.0, upper));
    let mut switch = opts.newton_switch;
    let mut residual = v.single_field(&x).amax();
    for _ in 0..max_iter {
        if x.amax() < opts.zero_tol {
            return Ok(SingleVirusOutcome::ConvergedToDfe);
        }
        if residual < switch {
            if let Some(root) = newton_single(v, &x, tol, 50) {
                if root.amax() < opts.zero_tol {
                    return Ok(SingleVirusOutcome::ConvergedToDfe);
                }
                if root.iter().all(|&e| e > 0.0 && e < 1.0) {
                    return Ok(SingleVirusOutcome::Endemic(root));
                }
            }
            // Newton jumped to a root outside (0, 1)^n; keep iterating.
            switch *= 0.1;
        }
        let p = v.pressure(&x);
        for i in 0..n {
            let phi = p[i] / (v.delta[i] + p[i]);
            x[i] = ((1.0 - opts.damping) * x[i] + opts.damping * phi).clamp(0.0, upper);
        }
        residual = v.single_field(&x).amax();
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual,
    })
}

/// Newton iteration for the single-virus field with residual backtracking.
pub fn newton_single(
    v: &VirusParams,
    start: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Option<DVector<f64>> {
    newton(
        start.clone(),
        |x| v.single_field(x),
        |x| v.single_jacobian(x),
        |_, _| 1.0,
        tol,
        max_iter,
    )
}

/// Generic damped Newton solver. `max_step(x, dx)` bounds the step length.
fn newton(
    mut x: DVector<f64>,
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
    jac: impl Fn(&DVector<f64>) -> DMatrix<f64>,
    max_step: impl Fn(&DVector<f64>, &DVector<f64>) -> f64,
    tol: f64,
    max_iter: usize,
) -> Option<DVector<f64>> {
    let mut fx = f(&x);
    let mut norm = fx.norm();
    for _ in 0..max_iter {
        if fx.amax() <= tol {
            return Some(x);
        }
        let dx = jac(&x).lu().solve(&(-&fx))?;
        if !dx.iter().all(|e| e.is_finite()) {
            return None;
        }
        let mut t = max_step(&x, &dx).min(1.0);
        let mut accepted = false;
        for _ in 0..40 {
            let trial = &x + &dx * t;
            let ft = f(&trial);
            let nt = ft.norm();
            if nt <= (1.0 - 1e-4 * t) * norm || (nt <= norm && fx.amax() < 1e3 * tol) {
                x = trial;
                fx = ft;
                norm = nt;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return (fx.amax() <= tol).then_some(x);
        }
    }
    (fx.amax() <= tol).then_some(x)
}

/// Largest step fraction (capped at 1) that keeps `x + t dx` strictly inside
/// the domain, backing off to 99% of the distance to the boundary.
fn interior_step(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    let n = x.len() / 2;
    let mut t: f64 = 1.0;
    for i in 0..2 * n {
        if dx[i] < 0.0 {
            t = t.min(0.99 * x[i] / -dx[i]);
        }
    }
    for i in 0..n {
        let ds = dx[i] + dx[n + i];
        if ds > 0.0 {
            t = t.min(0.99 * (1.0 - x[i] - x[n + i]) / ds);
        }
    }
    t.max(0.0)
}

fn stacked_field(m: &BivirusModel, x: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(x.len());
    m.field_into(x.as_slice(), out.as_mut_slice());
    out
}

fn stacked_jacobian(m: &BivirusModel, x: &DVector<f64>) -> DMatrix<f64> {
    jacobian(m, &State::from_stacked(x.as_slice())).expect("dimensions match")
}

/// Newton search for a coexistence equilibrium from a single interior seed.
pub fn newton_coexistence(m: &BivirusModel, seed: &State, tol: f64, max_iter: usize) -> Option<State> {
    let root = newton(
        seed.stacked(),
        |x| stacked_field(m, x),
        |x| stacked_jacobian(m, x),
        interior_step,
        tol,
        max_iter,
    )?;
    let point = State::from_stacked(root.as_slice());
    let interior = point.x1.iter().chain(point.x2.iter()).all(|&v| v >= COEXISTENCE_FLOOR)
        && (0..m.n()).all(|i| 1.0 - point.x1[i] - point.x2[i] >= INTERIOR_MARGIN);
    interior.then_some(point)
}

/// Smallest component accepted for a coexistence root. Interior Newton can
/// creep towards a boundary equilibrium; such limits are discarded.
pub const COEXISTENCE_FLOOR: f64 = 1e-6;

/// Newton iterations allowed per coexistence seed.
pub const COEXISTENCE_NEWTON_ITER: usize = 200;

/// Runs interior Newton from every seed and returns the distinct coexistence
/// equilibria found, sorted by coordinates.
pub fn find_coexistence(m: &BivirusModel, seeds: &[State], tol: f64) -> Vec<EquilibriumRecord> {
    let points: Vec<State> = seeds
        .par_iter()
        .filter_map(|s| newton_coexistence(m, s, tol, COEXISTENCE_NEWTON_ITER))
        .collect();
    dedup_points(points)
        .into_iter()
        .filter_map(|p| EquilibriumRecord::new(m, p).ok())
        .collect()
}

fn lexicographic(a: &State, b: &State) -> Ordering {
    a.x1.iter()
        .chain(a.x2.iter())
        .zip(b.x1.iter().chain(b.x2.iter()))
        .map(|(p, q)| p.total_cmp(q))
        .find(|o| *o != Ordering::Equal)
        .unwrap_or(Ordering::Equal)
}

/// Sorts points lexicographically and drops those within [`DEDUP_TOL`] of an
/// earlier kept point.
pub fn dedup_points(mut points: Vec<State>) -> Vec<State> {
    points.sort_by(lexicographic);
    let mut kept: Vec<State> = Vec::new();
    for p in points {
        if kept.iter().all(|k| k.distance(&p) > DEDUP_TOL) {
            kept.push(p);
        }
    }
    kept
}

/// Search effort for [`enumerate_equilibria`].
#[derive(Debug, Clone, Copy)]
pub struct EnumerationBudget {
    /// Uniform random seeds per virus for the boundary search, on top of the
    /// fixed seeds.
    pub boundary_random_seeds: usize,
    /// Uniform random interior seeds for the coexistence search.
    pub coexistence_random_seeds: usize,
    /// Fixed-point iterations per boundary seed.
    pub max_iter: usize,
    /// Number of constant seeds `c 1`, `c` evenly spaced in (0, 1), from
    /// which plain Newton searches each virus for boundary equilibria. The
    /// fixed-point iteration only reaches stable single-virus equilibria;
    /// Newton also finds unstable ones. Zero disables the search.
    pub newton_boundary_seeds: usize,
    pub rng_seed: u64,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        Self {
            boundary_random_seeds: 10,
            coexistence_random_seeds: 50,
            max_iter: 20_000,
            newton_boundary_seeds: 0,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Enumeration {
    pub records: Vec<EquilibriumRecord>,
    pub warnings: Vec<String>,
    /// Some solver ran out of iterations; `records` may be incomplete.
    pub exhausted: bool,
}

impl Enumeration {
    pub fn of_kind(&self, kind: EquilibriumKind) -> impl Iterator<Item = &EquilibriumRecord> {
        self.records.iter().filter(move |r| r.kind == kind)
    }

    /// Record within `tol` of `point`, if any.
    pub fn matching(&self, point: &State, tol: f64) -> Option<&EquilibriumRecord> {
        self.records
            .iter()
            .filter(|r| r.point.distance(point) <= tol)
            .min_by(|a, b| a.point.distance(point).total_cmp(&b.point.distance(point)))
    }
}

/// Seeds for the boundary search of one virus: three constant vectors, the
/// Perron vector of `A` scaled to maximum 0.5, and `random` uniform seeds.
pub fn boundary_seeds(v: &VirusParams, random: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let n = v.n();
    let mut seeds: Vec<DVector<f64>> = [0.99, 0.5, 0.25]
        .iter()
        .map(|&c| DVector::from_element(n, c))
        .collect();
    if let Ok(summary) = spectral::spectral_summary(&v.a) {
        if let Some(p) = summary.dominant_eigvec {
            let scale = 0.5 / p.amax();
            seeds.push(p * scale);
        }
    }
    for _ in 0..random {
        seeds.push(DVector::from_fn(n, |_, _| rng.gen_range(f64::EPSILON..1.0)));
    }
    seeds
}

/// Seeds for the coexistence search: convex combinations of every pair of
/// boundary equilibria plus uniform interior points scaled so that
/// `x1 + x2 <= 0.9`.
pub fn coexistence_seeds(
    boundary1: &[DVector<f64>],
    boundary2: &[DVector<f64>],
    n: usize,
    random: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<State> {
    let mut seeds = Vec::new();
    for b1 in boundary1 {
        for b2 in boundary2 {
            for lambda in [0.25, 0.5, 0.75] {
                seeds.push(State::new(b1 * lambda, b2 * (1.0 - lambda)));
            }
        }
    }
    for _ in 0..random {
        let x1 = DVector::from_fn(n, |_, _| rng.gen_range(f64::EPSILON..1.0));
        let x2 = DVector::from_fn(n, |_, _| rng.gen_range(f64::EPSILON..1.0));
        let max_sum = (0..n).map(|i| x1[i] + x2[i]).fold(0.0, f64::max);
        let scale = if max_sum > 0.9 { 0.9 / max_sum } else { 1.0 };
        seeds.push(State::new(x1 * scale, x2 * scale));
    }
    seeds
}

/// Collects the DFE, every distinct boundary equilibrium reachable from the
/// boundary seeds, and every coexistence equilibrium reachable from the
/// coexistence seeds. Each record is checked for a nonsingular Jacobian.
pub fn enumerate_equilibria(m: &BivirusModel, budget: EnumerationBudget) -> Result<Enumeration> {
    let n = m.n();
    let mut warnings = Vec::new();
    let mut exhausted = false;
    let mut boundary: [Vec<DVector<f64>>; 2] = [Vec::new(), Vec::new()];

    for k in 0..2 {
        let v = m.virus(k);
        let mut rng = ChaCha8Rng::seed_from_u64(budget.rng_seed);
        rng.set_stream(k as u64);
        let seeds = boundary_seeds(v, budget.boundary_random_seeds, &mut rng);
        let outcomes: Vec<Result<SingleVirusOutcome>> = seeds
            .par_iter()
            .map(|s| find_single_virus_equilibrium(v, s, budget.max_iter, SOLVE_TOL))
            .collect();
        let mut found = Vec::new();
        for (seed_idx, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                Ok(SingleVirusOutcome::Endemic(x)) => found.push(if k == 0 {
                    State::new(x, DVector::zeros(n))
                } else {
                    State::new(DVector::zeros(n), x)
                }),
                Ok(SingleVirusOutcome::ConvergedToDfe) => {}
                Err(e) => {
                    exhausted = true;
                    warnings.push(format!("virus {} boundary seed {seed_idx}: {e}", k + 1));
                }
            }
        }
        let grid = budget.newton_boundary_seeds;
        let newton_found: Vec<DVector<f64>> = (0..grid)
            .into_par_iter()
            .filter_map(|j| {
                let c = (j as f64 + 0.5) / grid as f64;
                newton_single(v, &DVector::from_element(n, c), SOLVE_TOL, COEXISTENCE_NEWTON_ITER)
            })
            .filter(|x| x.iter().all(|&c| (COEXISTENCE_FLOOR..1.0).contains(&c)))
            .collect();
        found.extend(newton_found.into_iter().map(|x| {
            if k == 0 {
                State::new(x, DVector::zeros(n))
            } else {
                State::new(DVector::zeros(n), x)
            }
        }));
        boundary[k] = dedup_points(found)
            .into_iter()
            .map(|p| if k == 0 { p.x1 } else { p.x2 })
            .collect();
    }

    let mut records = vec![EquilibriumRecord::new(m, State::dfe(n))?];
    for x in &boundary[0] {
        records.push(EquilibriumRecord::new(m, State::new(x.clone(), DVector::zeros(n)))?);
    }
    for x in &boundary[1] {
        records.push(EquilibriumRecord::new(m, State::new(DVector::zeros(n), x.clone()))?);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(budget.rng_seed);
    rng.set_stream(2);
    let mut seeds = coexistence_seeds(
        &boundary[0],
        &boundary[1],
        n,
        budget.coexistence_random_seeds,
        &mut rng,
    );
    let stable = |kind| {
        records
            .iter()
            .filter(move |r| r.kind == kind && r.stability == Stability::LocallyExponentiallyStable)
    };
    let pairs: Vec<(&EquilibriumRecord, &EquilibriumRecord)> = stable(EquilibriumKind::BoundaryV1)
        .flat_map(|a| stable(EquilibriumKind::BoundaryV2).map(move |b| (a, b)))
        .collect();
    let tracked: Vec<Vec<State>> = pairs
        .par_iter()
        .map(|(a, b)| separatrix_seeds(m, &a.point.x1, &b.point.x2))
        .collect();
    seeds.extend(tracked.into_iter().flatten());
    records.extend(find_coexistence(m, &seeds, SOLVE_TOL));

    for r in &records {
        if !r.nondegenerate {
            warnings.push(format!(
                "degenerate {} equilibrium: |det J| = {:e}",
                r.kind,
                r.det_jacobian.abs()
            ));
        }
        if r.residual > RESIDUAL_TOL {
            warnings.push(format!("{} equilibrium residual {:e} above tolerance", r.kind, r.residual));
        }
    }
    Ok(Enumeration {
        records,
        warnings,
        exhausted,
    })
}

/// Bisection steps used by [`separatrix_seeds`].
pub const SEPARATRIX_BISECTIONS: usize = 40;

enum Fate {
    V1,
    V2,
    Other,
}

fn fate(m: &BivirusModel, s0: &State) -> Option<(Fate, Trajectory)> {
    let traj = dynamics::integrate(m, s0, &IntegrationOptions::default()).ok()?;
    let last = traj.last_state();
    let (a1, a2) = (last.x1.amax(), last.x2.amax());
    let fate = if a2 < COEXISTENCE_FLOOR && a1 > 1e-3 {
        Fate::V1
    } else if a1 < COEXISTENCE_FLOOR && a2 > 1e-3 {
        Fate::V2
    } else {
        Fate::Other
    };
    Some((fate, traj))
}

/// Level both viruses must exceed at every node for a trajectory state to
/// count as away from the boundary equilibria.
const SEPARATRIX_LEVEL: f64 = 1e-3;

/// State of `traj` with the smallest field norm among those where both
/// viruses are clearly present.
fn slowest_interior_state(traj: &Trajectory) -> Option<State> {
    traj.states
        .iter()
        .zip(traj.field_norms.iter())
        .filter(|(s, _)| s.x1.min() >= SEPARATRIX_LEVEL && s.x2.min() >= SEPARATRIX_LEVEL)
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(s, _)| s.clone())
}

/// Seeds near an interior equilibrium separating the basins of two stable
/// boundary equilibria `(x1, 0)` and `(0, x2)`.
///
/// Bisects on the segment `l (x1, 0) + (1 - l) (0, x2)` for the point where
/// the limit switches from one boundary to the other. Trajectories started
/// there linger near the separating equilibrium before leaving, so their
/// slowest states are good Newton seeds. Returns nothing if some point of the
/// segment reaches neither boundary.
pub fn separatrix_seeds(m: &BivirusModel, x1: &DVector<f64>, x2: &DVector<f64>) -> Vec<State> {
    let point = |l: f64| State::new(x1 * l, x2 * (1.0 - l));
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut last: [Option<Trajectory>; 2] = [None, None];
    for _ in 0..SEPARATRIX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let Some((f, traj)) = fate(m, &point(mid)) else {
            return Vec::new();
        };
        match f {
            Fate::V1 => {
                hi = mid;
                last[0] = Some(traj);
            }
            Fate::V2 => {
                lo = mid;
                last[1] = Some(traj);
            }
            Fate::Other => return slowest_interior_state(&traj).into_iter().collect(),
        }
    }
    last.iter().flatten().filter_map(slowest_interior_state).collect()
}

/// Snaps a near-equilibrium state onto an exact equilibrium: virus
/// components below `zero_tol` are set to zero and the remaining components
/// are refined by Newton's method.
pub fn polish(m: &BivirusModel, approx: &State, zero_tol: f64) -> Option<State> {
    let n = m.n();
    let off1 = approx.x1.amax() < zero_tol;
    let off2 = approx.x2.amax() < zero_tol;
    match (off1, off2) {
        (true, true) => Some(State::dfe(n)),
        (false, true) => newton_single(m.virus(0), &approx.x1, SOLVE_TOL, 50)
            .map(|x| State::new(x, DVector::zeros(n))),
        (true, false) => newton_single(m.virus(1), &approx.x2, SOLVE_TOL, 50)
            .map(|x| State::new(DVector::zeros(n), x)),
        (false, false) => newton(
            approx.stacked(),
            |x| stacked_field(m, x),
            |x| stacked_jacobian(m, x),
            |_, _| 1.0,
            SOLVE_TOL,
            50,
        )
        .map(|x| State::from_stacked(x.as_slice())),
    }
}
