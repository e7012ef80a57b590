//! Low-rank factorized SDP solving with unit-norm rows, plus randomized
//! hyperplane rounding.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{QuadraticProblem, SpinState};

pub const ROW_NORM_TOL: f64 = 1e-9;

/// Thin factor V ∈ ℝ^{n×k} with unit-norm rows, so X = VVᵀ has unit
/// diagonal.
#[derive(Debug, Clone)]
pub struct Factor {
    v: DMatrix<f64>,
}

impl Factor {
    pub fn new(v: DMatrix<f64>) -> Result<Self> {
        if v.ncols() < 1 {
            return Err(Error::InvalidGraph("factor width k must be ≥ 1".into()));
        }
        for i in 0..v.nrows() {
            let norm = v.row(i).norm();
            if (norm - 1.0).abs() > ROW_NORM_TOL {
                return Err(Error::InvalidGraph(format!(
                    "row {i} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(Self { v })
    }

    /// Normalize each row to unit length, then wrap. Errors on zero rows.
    pub fn from_rows_normalized(mut v: DMatrix<f64>) -> Result<Self> {
        if v.ncols() < 1 {
            return Err(Error::InvalidGraph("factor width k must be ≥ 1".into()));
        }
        for i in 0..v.nrows() {
            let norm = v.row(i).norm();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::NonFinite("factor row normalization"));
            }
            let mut row = v.row_mut(i);
            row /= norm;
        }
        Ok(Self { v })
    }

    pub fn n(&self) -> usize {
        self.v.nrows()
    }

    pub fn k(&self) -> usize {
        self.v.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// X = VVᵀ.
    pub fn gram(&self) -> DMatrix<f64> {
        &self.v * self.v.transpose()
    }

    /// Singular values of V in non-increasing order.
    pub fn singular_values(&self) -> Vec<f64> {
        let mut sv: Vec<f64> = self.v.clone().svd(false, false).singular_values.iter().copied().collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }

    /// Leading left singular vector of V.
    pub fn leading_left_singular_vector(&self) -> DVector<f64> {
        let svd = self.v.clone().svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let lead = svd
            .singular_values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        u.column(lead).into_owned()
    }
}

/// Options for the factorized ascent.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iter: 1000,
            grad_tol: 1e-6,
            restarts: 3,
            seed: 0,
        }
    }
}

/// RNG stream derived from (seed, index); reproducible regardless of
/// execution order.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn gaussian_factor(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Result<Factor> {
    let v = DMatrix::from_fn(n, k, |_, _| {
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    });
    Factor::from_rows_normalized(v)
}

/// tr(VᵀAV).
pub fn factor_objective(p: &QuadraticProblem, f: &Factor) -> f64 {
    let av = p.mul_factor(f.matrix());
    f.matrix().dot(&av)
}

/// Riemannian gradient on the unit-row manifold: the euclidean gradient
/// 2AV with each row's radial component removed.
fn riemannian_grad(p: &QuadraticProblem, v: &DMatrix<f64>) -> DMatrix<f64> {
    let mut g = p.mul_factor(v) * 2.0;
    for i in 0..v.nrows() {
        let radial = g.row(i).dot(&v.row(i));
        let vi = v.row(i).into_owned();
        let mut row = g.row_mut(i);
        row -= vi * radial;
    }
    g
}

/// Local maximizer of tr(VᵀAV) over unit-row factors by projected
/// gradient ascent with row renormalization. Best of `opts.restarts`
/// seeded starts.
pub fn bm_solve(p: &QuadraticProblem, k: usize, opts: &SolveOptions) -> Result<Factor> {
    if k < 1 {
        return Err(Error::InvalidGraph("factor width k must be ≥ 1".into()));
    }
    let beta = (2.0 * p.spectral_norm_estimate(50)).max(1e-12);
    let base_step = 1.0 / (2.0 * beta);

    let mut best: Option<(Factor, f64)> = None;
    for restart in 0..opts.restarts.max(1) {
        let mut rng = stream_rng(opts.seed, restart as u64);
        let mut f = gaussian_factor(p.n(), k, &mut rng)?;
        let mut obj = factor_objective(p, &f);
        let mut step = base_step;
        for _ in 0..opts.max_iter {
            let g = riemannian_grad(p, f.matrix());
            let gnorm = g.norm();
            if !gnorm.is_finite() || !obj.is_finite() {
                return Err(Error::NonFinite("bm_solve iterate"));
            }
            if gnorm <= opts.grad_tol {
                break;
            }
            // Accept only ascent steps; halve on failure.
            let mut accepted = false;
            while step > 1e-18 {
                let trial = Factor::from_rows_normalized(f.matrix() + &g * step)?;
                let trial_obj = factor_objective(p, &trial);
                if trial_obj >= obj {
                    f = trial;
                    obj = trial_obj;
                    step = (step * 1.2).min(base_step * 16.0);
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        if best.as_ref().map_or(true, |(_, b)| obj > *b) {
            best = Some((f, obj));
        }
    }
    Ok(best.expect("at least one restart").0)
}

/// Factor a PSD unit-diagonal matrix into unit-norm rows, V with
/// VVᵀ ≈ X. Eigenvalues below −1e-8 are rejected; small negatives are
/// clipped to zero.
pub fn factor_from_psd(x: &DMatrix<f64>) -> Result<Factor> {
    let n = x.nrows();
    for i in 0..n {
        if (x[(i, i)] - 1.0).abs() > 1e-6 {
            return Err(Error::Infeasible(format!(
                "diagonal entry {i} = {} is not unit",
                x[(i, i)]
            )));
        }
    }
    let eig = x.clone().symmetric_eigen();
    let min_eig = eig.eigenvalues.min();
    if min_eig < -1e-8 {
        return Err(Error::NotPsd { min_eig });
    }
    let mut v = eig.eigenvectors;
    for c in 0..n {
        let s = eig.eigenvalues[c].max(0.0).sqrt();
        let mut col = v.column_mut(c);
        col *= s;
    }
    Factor::from_rows_normalized(v)
}

/// Best spin state over `trials` independent hyperplane roundings.
/// sign(0) := +1; value ties broken toward the lexicographically
/// smallest state.
pub fn gw_round(
    p: &QuadraticProblem,
    f: &Factor,
    trials: usize,
    seed: u64,
) -> Result<(SpinState, f64)> {
    if trials < 1 {
        return Err(Error::InvalidGraph("trials must be ≥ 1".into()));
    }
    let mut best: Option<(SpinState, f64)> = None;
    for t in 0..trials {
        let mut rng = stream_rng(seed, t as u64);
        let r = DVector::from_fn(f.k(), |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let x = SpinState::new(
            (0..f.n())
                .map(|i| if f.matrix().row(i).tr_dot(&r) >= 0.0 { 1 } else { -1 })
                .collect(),
        )?;
        let val = p.objective(&x)?;
        let better = match &best {
            None => true,
            Some((bx, bv)) => val > *bv || (val == *bv && x.spins() < bx.spins()),
        };
        if better {
            best = Some((x, val));
        }
    }
    Ok(best.expect("trials ≥ 1"))
}

/// Smallest k with k(k+1) ≥ 2n.
pub fn min_embedding_width(n: usize) -> usize {
    let mut k = (((8.0 * n as f64 + 1.0).sqrt() - 1.0) / 2.0).floor() as usize;
    while k * (k + 1) < 2 * n {
        k += 1;
    }
    k.max(1)
}
