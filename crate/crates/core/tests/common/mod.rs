//! Shared generators and independent oracles for the integration tests.
#![allow(dead_code)]

use bivirus::{BivirusModel, State, VirusParams};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Nonnegative matrix containing a weighted directed cycle through all nodes,
/// hence irreducible, plus random extra entries.
pub fn random_irreducible(rng: &mut ChaCha8Rng, n: usize, density: f64) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if rng.gen_bool(density) {
                a[(i, j)] = rng.gen_range(0.0..1.0);
            }
        }
    }
    if n > 1 {
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        for w in 0..n {
            a[(perm[(w + 1) % n], perm[w])] = rng.gen_range(0.1..1.0);
        }
    }
    a
}

pub fn random_virus(rng: &mut ChaCha8Rng, n: usize) -> VirusParams {
    let delta = DVector::from_fn(n, |_, _| rng.gen_range(0.5..2.0));
    let a = random_irreducible(rng, n, 0.3);
    let mut b = vec![DMatrix::zeros(n, n); n];
    for bi in b.iter_mut() {
        if rng.gen_bool(0.6) {
            for _ in 0..rng.gen_range(1..=3) {
                let (j, l) = (rng.gen_range(0..n), rng.gen_range(0..n));
                bi[(j, l)] = rng.gen_range(0.1..1.0);
            }
        }
    }
    VirusParams {
        delta,
        beta_pair: rng.gen_range(0.0..3.0),
        beta_hoi: rng.gen_range(0.0..5.0),
        a,
        b,
    }
}

/// Random model satisfying both standing assumptions, `2 <= n <= max_n`.
pub fn random_model(rng: &mut ChaCha8Rng, max_n: usize) -> BivirusModel {
    let n = rng.gen_range(2..=max_n);
    let v1 = random_virus(rng, n);
    let v2 = random_virus(rng, n);
    BivirusModel::new(v1, v2).expect("generator builds valid models")
}

/// Uniform point of the open triangle {a, b > 0, a + b < 1} at each node.
pub fn random_interior_state(rng: &mut ChaCha8Rng, n: usize) -> State {
    let mut x1 = DVector::zeros(n);
    let mut x2 = DVector::zeros(n);
    for i in 0..n {
        loop {
            let (a, b): (f64, f64) = (rng.gen_range(1e-3..1.0), rng.gen_range(1e-3..1.0));
            if a + b < 0.999 {
                x1[i] = a;
                x2[i] = b;
                break;
            }
        }
    }
    State::new(x1, x2)
}

/// The vector field written out node by node with explicit sums.
pub fn scalar_field(m: &BivirusModel, s: &State) -> (Vec<f64>, Vec<f64>) {
    let n = m.n();
    let x = [s.x1.as_slice(), s.x2.as_slice()];
    let mut out = [vec![0.0; n], vec![0.0; n]];
    for k in 0..2 {
        let v = m.virus(k);
        for i in 0..n {
            let susceptible = 1.0 - x[0][i] - x[1][i];
            let mut pair = 0.0;
            for j in 0..n {
                pair += v.a[(i, j)] * x[k][j];
            }
            let mut hoi = 0.0;
            for j in 0..n {
                for l in 0..n {
                    hoi += v.b[i][(j, l)] * x[k][j] * x[k][l];
                }
            }
            out[k][i] = -v.delta[i] * x[k][i]
                + v.beta_pair * susceptible * pair
                + v.beta_hoi * susceptible * hoi;
        }
    }
    let [a, b] = out;
    (a, b)
}

fn stacked_scalar_field(m: &BivirusModel, y: &[f64]) -> Vec<f64> {
    let (a, b) = scalar_field(m, &State::from_stacked(y));
    a.into_iter().chain(b).collect()
}

/// Central finite-difference Jacobian of the scalar field.
pub fn fd_jacobian(m: &BivirusModel, s: &State, h: f64) -> DMatrix<f64> {
    let y: Vec<f64> = s.stacked().iter().copied().collect();
    let dim = y.len();
    let mut j = DMatrix::zeros(dim, dim);
    for c in 0..dim {
        let mut yp = y.clone();
        let mut ym = y.clone();
        yp[c] += h;
        ym[c] -= h;
        let (fp, fm) = (stacked_scalar_field(m, &yp), stacked_scalar_field(m, &ym));
        for r in 0..dim {
            j[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
        }
    }
    j
}

/// Classic pairwise bivirus SIS model `x^k' = (-D^k + (I - X^1 - X^2) B^k) x^k`
/// with `B^k = beta^k A^k`, and its Jacobian, coded from the matrix form.
pub struct ClassicBivirus {
    pub d: [DMatrix<f64>; 2],
    pub b: [DMatrix<f64>; 2],
}

impl ClassicBivirus {
    pub fn from_model(m: &BivirusModel) -> Self {
        let d = |k: usize| DMatrix::from_diagonal(&m.virus(k).delta);
        let b = |k: usize| m.virus(k).a.clone() * m.virus(k).beta_pair;
        Self {
            d: [d(0), d(1)],
            b: [b(0), b(1)],
        }
    }

    pub fn field(&self, s: &State) -> (DVector<f64>, DVector<f64>) {
        let n = s.n();
        let s_mat = DMatrix::identity(n, n) - DMatrix::from_diagonal(&s.x1) - DMatrix::from_diagonal(&s.x2);
        let f = |k: usize, x: &DVector<f64>| (-&self.d[k] + &s_mat * &self.b[k]) * x;
        (f(0, &s.x1), f(1, &s.x2))
    }

    pub fn jacobian(&self, s: &State) -> DMatrix<f64> {
        let n = s.n();
        let s_mat = DMatrix::identity(n, n) - DMatrix::from_diagonal(&s.x1) - DMatrix::from_diagonal(&s.x2);
        let p1 = DMatrix::from_diagonal(&(&self.b[0] * &s.x1));
        let p2 = DMatrix::from_diagonal(&(&self.b[1] * &s.x2));
        let mut j = DMatrix::zeros(2 * n, 2 * n);
        j.view_mut((0, 0), (n, n)).copy_from(&(-&self.d[0] + &s_mat * &self.b[0] - &p1));
        j.view_mut((0, n), (n, n)).copy_from(&(-&p1));
        j.view_mut((n, 0), (n, n)).copy_from(&(-&p2));
        j.view_mut((n, n), (n, n)).copy_from(&(-&self.d[1] + &s_mat * &self.b[1] - &p2));
        j
    }
}

/// Copy of `m` with every hyperedge removed.
pub fn without_hyperedges(m: &BivirusModel) -> BivirusModel {
    let strip = |k: usize| {
        let v = m.virus(k);
        VirusParams::pairwise(v.delta.clone(), v.beta_pair, v.a.clone())
    };
    BivirusModel::new(strip(0), strip(1)).unwrap()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

/// Largest entrywise difference relative to the size of `reference`.
pub fn relative_error(got: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    max_abs(&(got - reference)) / max_abs(reference).max(1.0)
}

/// Characteristic polynomial coefficients `c` with
/// `det(zI - M) = z^n + c[1] z^(n-1) + ... + c[n]` (Faddeev-LeVerrier).
pub fn char_poly(mat: &DMatrix<f64>) -> Vec<f64> {
    let n = mat.nrows();
    let mut c = vec![1.0; n + 1];
    let mut mk = DMatrix::<f64>::zeros(n, n);
    let id = DMatrix::<f64>::identity(n, n);
    for k in 1..=n {
        mk = mat * &mk + &id * c[k - 1];
        c[k] = -(mat * &mk).trace() / k as f64;
    }
    c
}

/// Eigenvalues as roots of the characteristic polynomial (Durand-Kerner,
/// then Newton polishing of each root).
pub fn oracle_eigenvalues(mat: &DMatrix<f64>) -> Vec<num_complex::Complex64> {
    use num_complex::Complex64 as C;
    let c = char_poly(mat);
    let n = c.len() - 1;
    let eval = |z: C| c.iter().fold(C::new(0.0, 0.0), |acc, &ck| acc * z + ck);
    let deriv = |z: C| {
        c[..n]
            .iter()
            .enumerate()
            .fold(C::new(0.0, 0.0), |acc, (i, &ck)| acc * z + ck * (n - i) as f64)
    };
    let scale = 1.0 + c.iter().skip(1).fold(0.0f64, |a, v| a.max(v.abs()));
    let mut roots: Vec<C> = (0..n)
        .map(|k| C::from_polar(scale, 0.4 + 2.0 * std::f64::consts::PI * k as f64 / n as f64))
        .collect();
    for _ in 0..2000 {
        let mut delta = 0.0f64;
        for i in 0..n {
            let mut den = C::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    den *= roots[i] - roots[j];
                }
            }
            let step = eval(roots[i]) / den;
            roots[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 * scale {
            break;
        }
    }
    for r in roots.iter_mut() {
        for _ in 0..3 {
            let d = deriv(*r);
            if d.norm() > 0.0 {
                *r -= eval(*r) / d;
            }
        }
    }
    roots
}

/// Determinant by Gaussian elimination with partial pivoting.
pub fn det(mat: &DMatrix<f64>) -> f64 {
    let n = mat.nrows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| mat[(i, j)]).collect()).collect();
    let mut d = 1.0;
    for col in 0..n {
        let p = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs())).unwrap();
        if a[p][col] == 0.0 {
            return 0.0;
        }
        if p != col {
            a.swap(p, col);
            d = -d;
        }
        d *= a[col][col];
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for k in col..n {
                a[r][k] -= f * a[col][k];
            }
        }
    }
    d
}

/// `-M` is a nonsingular M-matrix (equivalently the Metzler `M` is Hurwitz)
/// iff every leading principal minor of `-M` is positive.
pub fn metzler_hurwitz_by_minors(mat: &DMatrix<f64>) -> bool {
    let neg = -mat;
    (1..=mat.nrows()).all(|k| det(&neg.view((0, 0), (k, k)).into_owned()) > 0.0)
}

pub fn random_nonnegative(rng: &mut ChaCha8Rng, n: usize, density: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| if rng.gen_bool(density) { rng.gen_range(0.0..1.0) } else { 0.0 })
}

/// One randomized round of spectral checks against the characteristic
/// polynomial oracle: spectral radius and abscissa values, the sign
/// equivalence between `s(Lambda + N)` and `rho(-Lambda^{-1} N) - 1`, the
/// Perron vector of an irreducible matrix, and Hurwitz verdicts with their
/// certificates against leading principal minors. Returns the failures.
pub fn spectral_round(rng: &mut ChaCha8Rng, max_n: usize) -> Vec<String> {
    use bivirus::spectral::*;
    let mut failures = Vec::new();
    let n = rng.gen_range(1..=max_n);
    let nonneg = if rng.gen_bool(0.5) {
        random_irreducible(rng, n, 0.4)
    } else {
        random_nonnegative(rng, n, 0.8)
    };
    let roots = oracle_eigenvalues(&nonneg);
    let rho_oracle = roots.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let tol = 1e-6 * rho_oracle.max(1.0);

    let rho = spectral_radius(&nonneg).unwrap();
    if (rho - rho_oracle).abs() > tol {
        failures.push(format!("rho {rho} vs oracle {rho_oracle} (n = {n})"));
    }

    // Metzler matrix Lambda + N with a random negative diagonal.
    let lambda = DVector::from_fn(n, |_, _| -rng.gen_range(0.1..3.0));
    let metzler = DMatrix::from_diagonal(&lambda) + &nonneg;
    let m_roots = oracle_eigenvalues(&metzler);
    let s_oracle = m_roots.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let s = spectral_abscissa(&metzler).unwrap();
    if (s - s_oracle).abs() > 1e-6 * (1.0 + s_oracle.abs()) {
        failures.push(format!("abscissa {s} vs oracle {s_oracle}"));
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| nonneg[(i, j)] / -lambda[i]);
    let rho_scaled = oracle_eigenvalues(&scaled).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let clear = s_oracle.abs() > 1e-6 && (rho_scaled - 1.0).abs() > 1e-6;
    if clear && (s_oracle < 0.0) != (rho_scaled < 1.0) {
        failures.push(format!("oracle trichotomy broken: s {s_oracle}, rho {rho_scaled}"));
    }
    match eigspec_consistency(&lambda, &nonneg) {
        Ok(v) if clear => {
            let expect = if s_oracle < 0.0 { SignVerdict::Negative } else { SignVerdict::Positive };
            if v.verdict != expect {
                failures.push(format!("eigspec verdict {:?} vs oracle s {s_oracle}", v.verdict));
            }
        }
        Ok(_) => {}
        Err(e) => failures.push(format!("eigspec_consistency failed: {e}")),
    }

    if is_irreducible(&nonneg) {
        let summary = spectral_summary(&nonneg).unwrap();
        match &summary.dominant_eigvec {
            Some(v) => {
                let residual = (&nonneg * v - v * summary.rho).amax();
                if v.iter().any(|&e| e <= 0.0) || residual > 1e-8 * rho_oracle.max(1.0) {
                    failures.push(format!("Perron vector not positive eigenvector (residual {residual})"));
                }
            }
            None => failures.push("irreducible matrix without Perron vector".to_string()),
        }
        // Algebraic simplicity: no other root of the characteristic
        // polynomial sits at rho.
        let near = roots.iter().filter(|z| (*z - rho_oracle).norm() < 1e-6 * rho_oracle.max(1.0)).count();
        if rho_oracle > 0.0 && near != 1 {
            failures.push(format!("rho = {rho_oracle} is not a simple root ({near} copies)"));
        }
    }

    let hurwitz_oracle = metzler_hurwitz_by_minors(&metzler);
    let verdict = metzler_hurwitz(&metzler).unwrap();
    if s_oracle.abs() > 1e-6 && verdict.hurwitz != hurwitz_oracle {
        failures.push(format!("Hurwitz {} vs minors {hurwitz_oracle} (s {s_oracle})", verdict.hurwitz));
    }
    match (&verdict.certificate, verdict.hurwitz) {
        (Some(x), true) => {
            let mx = &metzler * x;
            if x.iter().any(|&e| e <= 0.0) || mx.iter().any(|&e| e >= 0.0) {
                failures.push("invalid Hurwitz certificate".to_string());
            }
        }
        (None, true) => failures.push("Hurwitz matrix without certificate".to_string()),
        (Some(_), false) => failures.push("certificate for a non-Hurwitz matrix".to_string()),
        (None, false) => {}
    }
    failures
}

/// Plain Newton on the single-virus field with a finite-difference Jacobian
/// of the scalar-form field.
pub fn single_virus_newton_oracle(v: &VirusParams, start: &DVector<f64>) -> Option<DVector<f64>> {
    let n = v.n();
    let f = |x: &DVector<f64>| {
        DVector::from_fn(n, |i, _| {
            let mut pair = 0.0;
            let mut hoi = 0.0;
            for j in 0..n {
                pair += v.a[(i, j)] * x[j];
                for l in 0..n {
                    hoi += v.b[i][(j, l)] * x[j] * x[l];
                }
            }
            -v.delta[i] * x[i] + (1.0 - x[i]) * (v.beta_pair * pair + v.beta_hoi * hoi)
        })
    };
    let mut x = start.clone();
    for _ in 0..100 {
        let fx = f(&x);
        if fx.amax() < 1e-13 {
            return Some(x);
        }
        let h = 1e-7;
        let mut jac = DMatrix::zeros(n, n);
        for c in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[c] += h;
            xm[c] -= h;
            jac.set_column(c, &((f(&xp) - f(&xm)) / (2.0 * h)));
        }
        x -= jac.lu().solve(&fx)?;
    }
    None
}
