//! Projection-free first-order rank minimization over unit-diagonal PSD
//! matrices, parametrized by the strict upper triangle. Step sizes are
//! certified to preserve positive semidefiniteness.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::QuadraticProblem;

/// Vectorized unit-diagonal symmetric matrix: the strict upper triangle
/// in row-major order, length n(n−1)/2.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperTriState {
    n: usize,
    x: Vec<f64>,
}

impl UpperTriState {
    pub fn new(n: usize, x: Vec<f64>) -> Result<Self> {
        let expected = n * n.saturating_sub(1) / 2;
        if x.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: x.len(),
            });
        }
        Ok(Self { n, x })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn coords(&self) -> &[f64] {
        &self.x
    }

    /// Index of entry (i, j), i < j, in the row-major strict upper triangle.
    pub fn index(n: usize, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < n);
        i * (2 * n - i - 1) / 2 + (j - i - 1)
    }
}

/// Reconstruct the symmetric matrix with unit diagonal.
pub fn vec_to_matrix(s: &UpperTriState) -> DMatrix<f64> {
    let n = s.n;
    let mut m = DMatrix::identity(n, n);
    let mut d = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            m[(i, j)] = s.x[d];
            m[(j, i)] = s.x[d];
            d += 1;
        }
    }
    m
}

/// Extract the strict upper triangle; the diagonal is discarded.
pub fn matrix_to_vec(m: &DMatrix<f64>) -> UpperTriState {
    let n = m.nrows();
    let mut x = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            x.push(m[(i, j)]);
        }
    }
    UpperTriState { n, x }
}

/// Smooth rank surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Surrogate {
    /// (1+ε^q) Σ σ²/(σ²+ε).
    SingularValue { eps: f64, q: f64 },
    /// Σ (σ²+ε)^{p/2}.
    Schatten { eps: f64, p: f64 },
}

impl Surrogate {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Surrogate::SingularValue { eps, q } => {
                if eps <= 0.0 || !(0.0..=1.0).contains(&q) {
                    return Err(Error::InvalidGraph(format!(
                        "singular-value surrogate needs eps > 0 and q in [0,1], got eps={eps}, q={q}"
                    )));
                }
                if eps < 1e-3 {
                    log::warn!("surrogate eps = {eps} below 1e-3 tends to ill-conditioned gradients");
                }
                Ok(())
            }
            Surrogate::Schatten { eps, p } => {
                if eps <= 0.0 || !(p > 0.0 && p <= 1.0) {
                    return Err(Error::InvalidGraph(format!(
                        "Schatten surrogate needs eps > 0 and p in (0,1], got eps={eps}, p={p}"
                    )));
                }
                if eps < 1e-3 {
                    log::warn!("surrogate eps = {eps} below 1e-3 tends to ill-conditioned gradients");
                }
                Ok(())
            }
        }
    }

    /// Certified step bound keeping X(x − α∇f(x)) PSD.
    ///
    /// Schatten: minimum of the ε^{(2−p)/2} and ε^{(2−p)/p} exponent
    /// variants, over 2p.
    pub fn safe_step(&self) -> f64 {
        match *self {
            Surrogate::SingularValue { eps, q } => eps / (4.0 * (1.0 + eps.powf(q))),
            Surrogate::Schatten { eps, p } => {
                let a = eps.powf((2.0 - p) / 2.0);
                let b = eps.powf((2.0 - p) / p);
                a.min(b) / (2.0 * p)
            }
        }
    }

    fn eigen_value_sum(&self, lambdas: &[f64]) -> f64 {
        match *self {
            Surrogate::SingularValue { eps, q } => {
                let c = 1.0 + eps.powf(q);
                lambdas.iter().map(|&l| c * l * l / (l * l + eps)).sum()
            }
            Surrogate::Schatten { eps, p } => {
                lambdas.iter().map(|&l| (l * l + eps).powf(p / 2.0)).sum()
            }
        }
    }

    fn eigen_value_derivative(&self, l: f64) -> f64 {
        match *self {
            Surrogate::SingularValue { eps, q } => {
                let c = 1.0 + eps.powf(q);
                2.0 * eps * c * l / ((l * l + eps) * (l * l + eps))
            }
            Surrogate::Schatten { eps, p } => p * l * (l * l + eps).powf((p - 2.0) / 2.0),
        }
    }

    /// Surrogate value on a symmetric matrix (σ_i = |λ_i|).
    pub fn value(&self, x: &DMatrix<f64>) -> f64 {
        let eig = x.clone().symmetric_eigen();
        self.eigen_value_sum(eig.eigenvalues.as_slice())
    }

    /// Matrix gradient; symmetric for symmetric input.
    pub fn grad(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let eig = x.clone().symmetric_eigen();
        let n = x.nrows();
        let u = &eig.eigenvectors;
        let mut scaled = u.clone();
        for c in 0..n {
            let d = self.eigen_value_derivative(eig.eigenvalues[c]);
            let mut col = scaled.column_mut(c);
            col *= d;
        }
        let g = &scaled * u.transpose();
        // Symmetrize away eigensolver round-off.
        (&g + g.transpose()) * 0.5
    }
}

/// Gradient in the vector parametrization: off-diagonal matrix entries
/// doubled, diagonal dropped.
pub fn vectorized_grad(g: &DMatrix<f64>) -> Vec<f64> {
    let n = g.nrows();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(2.0 * g[(i, j)]);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct RankMinOptions {
    pub surrogate: Surrogate,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub rank_tol: f64,
    /// Box lower bound on tr(AX): the best rounded value W*.
    pub lower: f64,
    /// Box upper bound on tr(AX): the relaxation value.
    pub upper: f64,
    /// Optional step override (e.g. the empirical cap α ≤ ε for Schatten).
    pub step_override: Option<f64>,
}

impl RankMinOptions {
    pub fn new(surrogate: Surrogate, lower: f64, upper: f64) -> Self {
        Self {
            surrogate,
            max_iter: 100,
            grad_tol: 1e-5,
            rank_tol: 1e-4,
            lower,
            upper,
            step_override: None,
        }
    }
}

const BOX_TOL: f64 = 1e-9;

/// Descend the rank surrogate from X0 inside the box
/// K = {W* ≤ tr(AX) ≤ SDPval}, stepping in the upper-triangle
/// parametrization with the certified step. Returns the final matrix and
/// its vectorized state.
pub fn rank_descent(
    p: &QuadraticProblem,
    x0: &DMatrix<f64>,
    opts: &RankMinOptions,
) -> Result<(DMatrix<f64>, UpperTriState)> {
    opts.surrogate.validate()?;
    if opts.lower > opts.upper {
        return Err(Error::Infeasible(format!(
            "box is empty: lower {} > upper {}",
            opts.lower, opts.upper
        )));
    }
    let n = x0.nrows();
    if x0.ncols() != n || p.n() != n {
        return Err(Error::DimensionMismatch {
            expected: p.n(),
            got: n,
        });
    }
    for i in 0..n {
        if (x0[(i, i)] - 1.0).abs() > 1e-6 {
            return Err(Error::Infeasible(format!(
                "X0 diagonal entry {i} = {} is not unit",
                x0[(i, i)]
            )));
        }
    }
    let min_eig = x0.clone().symmetric_eigen().eigenvalues.min();
    if min_eig < -1e-8 {
        return Err(Error::NotPsd { min_eig });
    }
    let t0 = p.trace_product(x0);
    if t0 < opts.lower - BOX_TOL || t0 > opts.upper + BOX_TOL {
        return Err(Error::Infeasible(format!(
            "tr(AX0) = {t0} outside box [{}, {}]",
            opts.lower, opts.upper
        )));
    }

    let base_step = opts
        .step_override
        .map(|s| s.min(opts.surrogate.safe_step()))
        .unwrap_or_else(|| opts.surrogate.safe_step());

    // Vectorized gradient of tr(AX) in off-diagonal coordinates.
    let a_vec = {
        let mut a = DMatrix::zeros(n, n);
        for &(i, j, v) in p.off_diagonal() {
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
        for (i, v) in p.diag().iter().enumerate() {
            a[(i, i)] = *v;
        }
        vectorized_grad(&a)
    };
    let a_norm2: f64 = a_vec.iter().map(|v| v * v).sum();

    let mut state = matrix_to_vec(x0);
    let mut value = opts.surrogate.value(x0);
    for _ in 0..opts.max_iter {
        let x = vec_to_matrix(&state);
        let g = opts.surrogate.grad(&x);
        let gv = vectorized_grad(&g);
        let gnorm = gv.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !gnorm.is_finite() {
            return Err(Error::NonFinite("rank_descent gradient"));
        }
        if gnorm < opts.grad_tol {
            break;
        }

        let try_direction = |state: &UpperTriState,
                             value: f64,
                             dir: &[f64],
                             check_psd: bool|
         -> Result<Option<(UpperTriState, f64)>> {
            // Backtrack until the surrogate does not increase. For pure
            // gradient steps the PSD certificate covers every α ≤
            // base_step; projected steps verify PSD explicitly.
            let mut alpha = base_step;
            while alpha > base_step * 1e-12 {
                let coords: Vec<f64> = state
                    .coords()
                    .iter()
                    .zip(dir)
                    .map(|(xi, di)| xi - alpha * di)
                    .collect();
                let trial = UpperTriState::new(n, coords)?;
                let xt = vec_to_matrix(&trial);
                let t = p.trace_product(&xt);
                let in_box = t >= opts.lower - BOX_TOL && t <= opts.upper + BOX_TOL;
                if in_box {
                    let vt = opts.surrogate.value(&xt);
                    if vt <= value + 1e-12
                        && (!check_psd
                            || xt.clone().symmetric_eigen().eigenvalues.min() >= -1e-9)
                    {
                        return Ok(Some((trial, vt)));
                    }
                }
                alpha *= 0.5;
            }
            Ok(None)
        };

        let mut step = try_direction(&state, value, &gv, false)?;
        if step.is_none() && a_norm2 > 0.0 {
            // The box constraint on tr(AX) is binding: continue along the
            // gradient projected onto its face, so the rank can keep
            // dropping while the objective bound is held.
            let dot: f64 = gv.iter().zip(&a_vec).map(|(g, a)| g * a).sum();
            let proj: Vec<f64> = gv
                .iter()
                .zip(&a_vec)
                .map(|(g, a)| g - dot / a_norm2 * a)
                .collect();
            let pnorm = proj.iter().map(|v| v * v).sum::<f64>().sqrt();
            if pnorm > opts.grad_tol {
                step = try_direction(&state, value, &proj, true)?;
            }
        }
        match step {
            Some((trial, vt)) => {
                state = trial;
                value = vt;
            }
            None => break,
        }
    }
    Ok((vec_to_matrix(&state), state))
}

/// Count of singular values above `tol`.
pub fn numerical_rank(x: &DMatrix<f64>, tol: f64) -> usize {
    assert!(tol > 0.0, "rank tolerance must be positive");
    x.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .filter(|l| l.abs() > tol)
        .count()
}
