//! Eigenstructure utilities for nonnegative and Metzler matrices.
//!
//! Eigenvalues come from a real Schur decomposition (Hessenberg reduction
//! followed by shifted QR). For nonnegative matrices a shifted power iteration
//! with Collatz-Wielandt bounds is available as an independent cross-check.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Spectral abscissas within this band of zero are reported as zero.
pub const ZERO_BAND: f64 = 1e-8;

/// Relative modulus gap below which the dominant eigenvalue is flagged as
/// possibly non-simple.
pub const SIMPLICITY_GAP: f64 = 1e-6;

const SCHUR_MAX_ITER: usize = 10_000;

fn check_square(mat: &DMatrix<f64>) -> Result<()> {
    if mat.nrows() != mat.ncols() {
        return Err(Error::NotSquare {
            rows: mat.nrows(),
            cols: mat.ncols(),
        });
    }
    Ok(())
}

fn check_nonnegative(mat: &DMatrix<f64>) -> Result<()> {
    for c in 0..mat.ncols() {
        for r in 0..mat.nrows() {
            let value = mat[(r, c)];
            if !(value >= 0.0) {
                return Err(Error::NegativeEntry {
                    row: r,
                    col: c,
                    value,
                });
            }
        }
    }
    Ok(())
}

fn check_metzler(mat: &DMatrix<f64>) -> Result<()> {
    for c in 0..mat.ncols() {
        for r in 0..mat.nrows() {
            let value = mat[(r, c)];
            if r != c && !(value >= 0.0) {
                return Err(Error::NotMetzler {
                    row: r,
                    col: c,
                    value,
                });
            }
        }
    }
    Ok(())
}

/// All eigenvalues of a square real matrix.
pub fn eigenvalues(mat: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    check_square(mat)?;
    if mat.nrows() == 0 {
        return Ok(Vec::new());
    }
    if mat.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure);
    }
    let schur = nalgebra::linalg::Schur::try_new(mat.clone(), f64::EPSILON, SCHUR_MAX_ITER)
        .ok_or(Error::EigenFailure)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest eigenvalue modulus of a nonnegative matrix.
pub fn spectral_radius(mat: &DMatrix<f64>) -> Result<f64> {
    check_square(mat)?;
    check_nonnegative(mat)?;
    Ok(eigenvalues(mat)?
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max))
}

/// Largest real part over the eigenvalues of a square matrix.
pub fn spectral_abscissa(mat: &DMatrix<f64>) -> Result<f64> {
    check_square(mat)?;
    Ok(eigenvalues(mat)?
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Whether the digraph of nonzero entries of `mat` is strongly connected.
///
/// A `1 x 1` matrix is irreducible by convention.
pub fn is_irreducible(mat: &DMatrix<f64>) -> bool {
    let n = mat.nrows();
    if n != mat.ncols() {
        return false;
    }
    if n <= 1 {
        return true;
    }
    reaches_all(n, |i, j| mat[(i, j)] != 0.0) && reaches_all(n, |i, j| mat[(j, i)] != 0.0)
}

fn reaches_all(n: usize, edge: impl Fn(usize, usize) -> bool) -> bool {
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for j in 0..n {
            if !seen[j] && edge(i, j) {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralSummary {
    pub rho: f64,
    pub s_abscissa: f64,
    /// Perron vector normalized to sum 1, present only when it is entrywise
    /// positive (guaranteed for irreducible input).
    #[serde(serialize_with = "crate::model::plain::option")]
    pub dominant_eigvec: Option<DVector<f64>>,
    pub is_irreducible: bool,
    /// Relative gap between the largest and second-largest eigenvalue moduli.
    pub modulus_gap: f64,
    pub warnings: Vec<String>,
}

/// Spectral radius, abscissa, Perron vector and irreducibility of a
/// nonnegative matrix.
pub fn spectral_summary(mat: &DMatrix<f64>) -> Result<SpectralSummary> {
    check_square(mat)?;
    check_nonnegative(mat)?;
    let n = mat.nrows();
    let eig = eigenvalues(mat)?;
    let mut moduli: Vec<f64> = eig.iter().map(|l| l.norm()).collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    let rho = moduli.first().copied().unwrap_or(0.0);
    let s_abscissa = eig.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    let irreducible = is_irreducible(mat);
    let mut warnings = Vec::new();

    // For irreducible input only rho itself sits on the positive real axis
    // with modulus rho; other peripheral eigenvalues are rotations of it, so
    // simplicity is judged among eigenvalues close to rho itself.
    let near_rho = eig
        .iter()
        .filter(|l| (*l - Complex64::new(rho, 0.0)).norm() <= SIMPLICITY_GAP * rho.max(1.0))
        .count();
    let modulus_gap = if n > 1 && rho > 0.0 {
        let next = eig
            .iter()
            .map(|l| (*l - Complex64::new(rho, 0.0)).norm())
            .filter(|d| *d > SIMPLICITY_GAP * rho.max(1.0))
            .fold(f64::INFINITY, f64::min);
        (next / rho).min(1.0)
    } else {
        1.0
    };
    if near_rho > 1 {
        warnings.push(format!(
            "dominant eigenvalue {rho} may not be simple ({near_rho} eigenvalues within {SIMPLICITY_GAP})"
        ));
    }

    let dominant_eigvec = if n > 0 && rho > 0.0 {
        perron_vector(mat, rho).filter(|v| v.iter().all(|&e| e > 0.0))
    } else if n > 0 && irreducible {
        // Zero irreducible matrix only happens for n == 1.
        Some(DVector::from_element(n, 1.0 / n as f64))
    } else {
        None
    };
    if irreducible && dominant_eigvec.is_none() {
        warnings.push("irreducible matrix without a positive Perron vector".to_string());
    }
    if irreducible && rho > 0.0 {
        let check = power_iteration(mat, 1e-12, 100_000);
        if (check.rho - rho).abs() > 1e-8 * rho.max(1.0) {
            warnings.push(format!(
                "power iteration cross-check disagrees: {} vs {}",
                check.rho, rho
            ));
        }
    }

    Ok(SpectralSummary {
        rho,
        s_abscissa,
        dominant_eigvec,
        is_irreducible: irreducible,
        modulus_gap,
        warnings,
    })
}

/// Eigenvector for the eigenvalue `rho` by inverse iteration with a shift just
/// above `rho`, normalized to sum 1.
fn perron_vector(mat: &DMatrix<f64>, rho: f64) -> Option<DVector<f64>> {
    let n = mat.nrows();
    let shift = rho * (1.0 + 1e-10) + 1e-14;
    let shifted = mat - DMatrix::identity(n, n) * shift;
    let lu = shifted.lu();
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..5 {
        let w = lu.solve(&v)?;
        let sum = w.sum();
        if !sum.is_finite() || sum == 0.0 {
            return None;
        }
        v = w / sum;
    }
    // Polish the residual with a few power steps, which preserve positivity.
    for _ in 0..3 {
        let w = mat * &v;
        let sum = w.sum();
        if sum <= 0.0 {
            break;
        }
        v = w / sum;
    }
    Some(v)
}

/// Result of a shifted power iteration on a nonnegative matrix.
#[derive(Debug, Clone)]
pub struct PowerIteration {
    pub rho: f64,
    pub vector: DVector<f64>,
    /// Collatz-Wielandt lower and upper bounds on `rho` at the final iterate.
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration on `mat + I`, which is primitive for irreducible
/// nonnegative `mat` and shares its Perron vector.
pub fn power_iteration(mat: &DMatrix<f64>, tol: f64, max_iter: usize) -> PowerIteration {
    let n = mat.nrows();
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    let mut lower = 0.0;
    let mut upper = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let w = mat * &v + &v;
        let sum = w.sum();
        if sum <= 0.0 || !sum.is_finite() {
            break;
        }
        let next = w / sum;
        let mv = mat * &next;
        let (lo, hi) = collatz_wielandt(&mv, &next);
        lower = lo;
        upper = hi;
        v = next;
        if hi - lo <= tol * hi.max(1.0) {
            converged = true;
            break;
        }
    }
    PowerIteration {
        rho: 0.5 * (lower + upper),
        vector: v,
        lower,
        upper,
        iterations,
        converged,
    }
}

fn collatz_wielandt(mv: &DVector<f64>, v: &DVector<f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for i in 0..v.len() {
        if v[i] > 0.0 {
            let r = mv[i] / v[i];
            lo = lo.min(r);
            hi = hi.max(r);
        } else {
            lo = 0.0;
            if mv[i] > 0.0 {
                hi = f64::INFINITY;
            }
        }
    }
    (lo.min(hi), hi)
}

/// Sign of a spectral quantity relative to its critical value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SignVerdict {
    Negative,
    Zero,
    Positive,
}

impl SignVerdict {
    pub fn of(value: f64, band: f64) -> Self {
        if value > band {
            SignVerdict::Positive
        } else if value < -band {
            SignVerdict::Negative
        } else {
            SignVerdict::Zero
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EigspecVerdict {
    /// Sign of `s(Lambda + N)`.
    pub verdict: SignVerdict,
    pub abscissa: f64,
    /// `rho(-Lambda^{-1} N)`.
    pub rho: f64,
}

/// Computes `s(Lambda + N)` and `rho(-Lambda^{-1} N)` for a strictly negative
/// diagonal `Lambda` and nonnegative `N`, and checks that the two routes agree
/// on the position relative to criticality.
pub fn eigspec_consistency(lambda: &DVector<f64>, nmat: &DMatrix<f64>) -> Result<EigspecVerdict> {
    check_square(nmat)?;
    check_nonnegative(nmat)?;
    if lambda.len() != nmat.nrows() {
        return Err(Error::Dimension {
            expected: nmat.nrows(),
            got: lambda.len(),
            context: "diagonal of Lambda",
        });
    }
    for (index, &value) in lambda.iter().enumerate() {
        if !(value < 0.0) {
            return Err(Error::NotNegativeDiagonal { index, value });
        }
    }
    let metzler = DMatrix::from_diagonal(lambda) + nmat;
    let abscissa = spectral_abscissa(&metzler)?;
    let mut scaled = nmat.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row /= -lambda[i];
    }
    let rho = spectral_radius(&scaled)?;
    let by_abscissa = SignVerdict::of(abscissa, ZERO_BAND);
    let by_radius = SignVerdict::of(rho - 1.0, ZERO_BAND);
    let disagree = matches!(
        (by_abscissa, by_radius),
        (SignVerdict::Negative, SignVerdict::Positive) | (SignVerdict::Positive, SignVerdict::Negative)
    );
    if disagree {
        return Err(Error::SpectralInconsistency { abscissa, rho });
    }
    Ok(EigspecVerdict {
        verdict: by_abscissa,
        abscissa,
        rho,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HurwitzVerdict {
    pub hurwitz: bool,
    pub abscissa: f64,
    /// `x >> 0` with `mat x << 0`, present when `hurwitz` is true.
    #[serde(serialize_with = "crate::model::plain::option")]
    pub certificate: Option<DVector<f64>>,
}

/// Hurwitz test for a Metzler matrix. A Hurwitz matrix comes with the
/// positive certificate `x = -mat^{-1} 1`, for which `mat x = -1`.
pub fn metzler_hurwitz(mat: &DMatrix<f64>) -> Result<HurwitzVerdict> {
    check_square(mat)?;
    check_metzler(mat)?;
    let abscissa = spectral_abscissa(mat)?;
    let hurwitz = abscissa < 0.0;
    let certificate = if hurwitz {
        let n = mat.nrows();
        let rhs = DVector::from_element(n, -1.0);
        mat.clone().lu().solve(&rhs).filter(|x| {
            let mx = mat * x;
            x.iter().all(|&e| e > 0.0) && mx.iter().all(|&e| e < 0.0)
        })
    } else {
        None
    };
    Ok(HurwitzVerdict {
        hurwitz,
        abscissa,
        certificate,
    })
}
