//! Entropy-penalized low-rank SDP: spectral entropy penalties and their
//! factor-space gradients, the geometric λ outer loop, and rank-one
//! extraction.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lowrank::{stream_rng, Factor};
use crate::model::{brute_force_max, QuadraticProblem, SpinState};

/// Eigenvalues below this floor are treated as exact zeros before any
/// log or negative power.
const SPECTRUM_FLOOR: f64 = 1e-12;

/// Spectral entropy family used as the rank penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EntropySpec {
    Tsallis { alpha: f64 },
    Renyi { alpha: f64 },
    VonNeumann,
}

impl EntropySpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            EntropySpec::Tsallis { alpha } | EntropySpec::Renyi { alpha } => {
                if alpha <= 0.0 || alpha == 1.0 {
                    return Err(Error::InvalidGraph(format!(
                        "entropy alpha must be positive and ≠ 1, got {alpha}"
                    )));
                }
                Ok(())
            }
            EntropySpec::VonNeumann => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            EntropySpec::Tsallis { alpha } => format!("tsallis({alpha})"),
            EntropySpec::Renyi { alpha } => format!("renyi({alpha})"),
            EntropySpec::VonNeumann => "von-neumann".into(),
        }
    }
}

/// Eigenvalues of X = VVᵀ (squared singular values of V), zeros clamped.
fn gram_spectrum(f: &Factor) -> Vec<f64> {
    f.singular_values()
        .iter()
        .map(|s| {
            let l = s * s;
            if l < SPECTRUM_FLOOR {
                0.0
            } else {
                l
            }
        })
        .collect()
}

fn entropy_of_spectrum(lambdas: &[f64], spec: &EntropySpec) -> f64 {
    let t: f64 = lambdas.iter().sum();
    if t <= 0.0 {
        return 0.0;
    }
    match *spec {
        EntropySpec::Tsallis { alpha } => {
            let s_a: f64 = lambdas
                .iter()
                .filter(|&&l| l > 0.0)
                .map(|&l| l.powf(alpha))
                .sum();
            (s_a / t.powf(alpha) - 1.0) / (1.0 - alpha)
        }
        EntropySpec::Renyi { alpha } => {
            let s: f64 = lambdas
                .iter()
                .filter(|&&l| l > 0.0)
                .map(|&l| (l / t).powf(alpha))
                .sum();
            s.ln() / (1.0 - alpha)
        }
        EntropySpec::VonNeumann => lambdas
            .iter()
            .filter(|&&l| l > 0.0)
            .map(|&l| {
                let p = l / t;
                -p * p.ln()
            })
            .sum(),
    }
}

/// Entropy of the normalized spectrum of X = VVᵀ. Zero exactly on
/// rank-one factors for every family.
pub fn entropy_value(f: &Factor, spec: &EntropySpec) -> Result<f64> {
    spec.validate()?;
    Ok(entropy_of_spectrum(&gram_spectrum(f), spec))
}

/// ∂S/∂λ_i at the spectrum λ with trace t.
fn entropy_eigen_derivative(lambdas: &[f64], spec: &EntropySpec) -> Vec<f64> {
    let t: f64 = lambdas.iter().sum::<f64>().max(SPECTRUM_FLOOR);
    match *spec {
        EntropySpec::Tsallis { alpha } => {
            let s_a: f64 = lambdas.iter().map(|&l| l.max(SPECTRUM_FLOOR).powf(alpha)).sum();
            lambdas
                .iter()
                .map(|&l| {
                    let ls = l.max(SPECTRUM_FLOOR);
                    alpha / (1.0 - alpha) * (ls.powf(alpha - 1.0) / t.powf(alpha) - s_a / t.powf(alpha + 1.0))
                })
                .collect()
        }
        EntropySpec::Renyi { alpha } => {
            let s_a: f64 = lambdas.iter().map(|&l| l.max(SPECTRUM_FLOOR).powf(alpha)).sum();
            lambdas
                .iter()
                .map(|&l| {
                    let ls = l.max(SPECTRUM_FLOOR);
                    alpha / (1.0 - alpha) * (ls.powf(alpha - 1.0) / s_a - 1.0 / t)
                })
                .collect()
        }
        EntropySpec::VonNeumann => {
            let xlogx: f64 = lambdas
                .iter()
                .filter(|&&l| l > SPECTRUM_FLOOR)
                .map(|&l| l * l.ln())
                .sum();
            lambdas
                .iter()
                .map(|&l| xlogx / (t * t) - l.max(SPECTRUM_FLOOR).ln() / t)
                .collect()
        }
    }
}

/// Gradient of the entropy penalty with respect to the factor V, through
/// the thin SVD V = U D Wᵀ: ∂S/∂V = 2 U diag(g_i d_i) Wᵀ, O(nk²).
pub fn entropy_grad(f: &Factor, spec: &EntropySpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let svd = f.matrix().clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let d = &svd.singular_values;
    let lambdas: Vec<f64> = d.iter().map(|s| s * s).collect();
    let g = entropy_eigen_derivative(&lambdas, spec);

    let k = d.len();
    let mut scaled = u.clone();
    for c in 0..k {
        let factor = if lambdas[c] < SPECTRUM_FLOOR {
            0.0
        } else {
            2.0 * g[c] * d[c]
        };
        let mut col = scaled.column_mut(c);
        col *= factor;
    }
    Ok(&scaled * v_t)
}

/// σ₂ of V (0 when k = 1).
pub fn second_singular_value(f: &Factor) -> f64 {
    let sv = f.singular_values();
    if sv.len() < 2 {
        0.0
    } else {
        sv[1]
    }
}

/// Sign pattern of the leading left singular vector; sign(0) := +1.
pub fn extract_rank_one(f: &Factor) -> SpinState {
    let u = f.leading_left_singular_vector();
    SpinState::new(u.iter().map(|&v| if v >= 0.0 { 1 } else { -1 }).collect())
        .expect("signs are ±1")
}

/// Penalty schedule of the outer loop.
#[derive(Debug, Clone)]
pub struct EpsdpSchedule {
    pub lambda0: f64,
    pub gamma: f64,
    /// Outer stop: σ₂(V) ≤ outer_tol.
    pub outer_tol: f64,
    /// Inner stop: projected gradient norm ≤ inner_tol.
    pub inner_tol: f64,
    pub inner_max: usize,
    pub outer_max: usize,
}

impl Default for EpsdpSchedule {
    fn default() -> Self {
        Self {
            lambda0: 10.0,
            gamma: 1.5,
            outer_tol: 1e-7,
            inner_tol: 1e-6,
            inner_max: 400,
            outer_max: 90,
        }
    }
}

impl EpsdpSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.lambda0 <= 0.0 || self.gamma <= 1.0 {
            return Err(Error::InvalidGraph(format!(
                "schedule needs lambda0 > 0 and gamma > 1, got {}, {}",
                self.lambda0, self.gamma
            )));
        }
        Ok(())
    }
}

/// Solver output: the converged factor, the extracted spin state, its
/// objective, and the σ₂ value after each outer iteration.
#[derive(Debug, Clone)]
pub struct EpsdpOutcome {
    pub factor: Factor,
    pub state: SpinState,
    pub objective: f64,
    pub sigma2_trace: Vec<f64>,
}

fn penalized_objective(
    s: &QuadraticProblem,
    f: &Factor,
    spec: &EntropySpec,
    lambda: f64,
) -> f64 {
    // Minimization orientation: S = −A baked into `s`.
    let sv = s.mul_factor(f.matrix());
    f.matrix().dot(&sv) + lambda * entropy_of_spectrum(&gram_spectrum(f), spec)
}

/// Project the euclidean gradient onto the tangent of the unit-row
/// manifold.
fn tangent_project(g: &mut DMatrix<f64>, v: &DMatrix<f64>) {
    for i in 0..v.nrows() {
        let radial = g.row(i).dot(&v.row(i));
        let vi = v.row(i).into_owned();
        let mut row = g.row_mut(i);
        row -= vi * radial;
    }
}

/// Inner solve at fixed λ: projected gradient descent with row
/// renormalization and backtracking; objective non-increasing across
/// accepted steps.
fn inner_minimize(
    s: &QuadraticProblem,
    start: Factor,
    spec: &EntropySpec,
    lambda: f64,
    base_step: f64,
    tol: f64,
    max_iter: usize,
) -> Result<Factor> {
    let mut f = start;
    let mut obj = penalized_objective(s, &f, spec, lambda);
    let mut step = base_step;
    for _ in 0..max_iter {
        if !obj.is_finite() {
            return Err(Error::NonFinite("EP-SDP inner iterate"));
        }
        let mut g = s.mul_factor(f.matrix()) * 2.0;
        g += entropy_grad(&f, spec)? * lambda;
        tangent_project(&mut g, f.matrix());
        let gnorm = g.norm();
        if !gnorm.is_finite() {
            return Err(Error::NonFinite("EP-SDP inner gradient"));
        }
        if gnorm <= tol {
            break;
        }
        let mut accepted = false;
        while step > 1e-18 {
            let trial = Factor::from_rows_normalized(f.matrix() - &g * step)?;
            let trial_obj = penalized_objective(s, &trial, spec, lambda);
            if trial_obj <= obj {
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
    Ok(f)
}

/// Entropy-penalized low-rank solve of `maximize xᵀAx`: λ grows
/// geometrically while the inner loop keeps unit rows; stops when
/// σ₂(V) ≤ outer_tol or the outer cap. The spin state comes from the
/// leading singular vector of the final factor.
pub fn epsdp_solve(
    p: &QuadraticProblem,
    k: usize,
    spec: &EntropySpec,
    sched: &EpsdpSchedule,
    seed: u64,
) -> Result<EpsdpOutcome> {
    if k < 2 {
        return Err(Error::InvalidGraph("EP-SDP needs factor width k ≥ 2".into()));
    }
    spec.validate()?;
    sched.validate()?;

    // Internally minimize tr(VᵀSV) with S = −A.
    let s = negate_problem(p);
    let beta = (2.0 * s.spectral_norm_estimate(50)).max(1e-12);
    let base_step = 1.0 / (2.0 * beta);

    let mut rng = stream_rng(seed, 0);
    let v0 = DMatrix::from_fn(p.n(), k, |_, _| {
        use rand::Rng;
        rng.sample::<f64, _>(rand_distr::StandardNormal)
    });
    let mut f = Factor::from_rows_normalized(v0)?;

    let mut lambda = sched.lambda0;
    let mut trace = Vec::new();
    for _ in 0..sched.outer_max {
        f = inner_minimize(&s, f, spec, lambda, base_step, sched.inner_tol, sched.inner_max)?;
        let sigma2 = second_singular_value(&f);
        trace.push(sigma2);
        if sigma2 <= sched.outer_tol {
            break;
        }
        lambda *= sched.gamma;
    }

    let state = extract_rank_one(&f);
    let objective = p.objective(&state)?;
    Ok(EpsdpOutcome {
        factor: f,
        state,
        objective,
        sigma2_trace: trace,
    })
}

/// Short λ0 grid search {1, 10, 100}; best extracted objective wins.
pub fn epsdp_solve_auto(
    p: &QuadraticProblem,
    k: usize,
    spec: &EntropySpec,
    sched: &EpsdpSchedule,
    seed: u64,
) -> Result<EpsdpOutcome> {
    let mut best: Option<EpsdpOutcome> = None;
    for (i, lambda0) in [1.0, 10.0, 100.0].into_iter().enumerate() {
        let mut s = sched.clone();
        s.lambda0 = lambda0;
        let out = epsdp_solve(p, k, spec, &s, seed.wrapping_add(i as u64))?;
        if best.as_ref().map_or(true, |b| out.objective > b.objective) {
            best = Some(out);
        }
    }
    Ok(best.expect("nonempty grid"))
}

fn negate_problem(p: &QuadraticProblem) -> QuadraticProblem {
    let diag = p.diag().iter().map(|v| -v).collect();
    let off = p
        .off_diagonal()
        .iter()
        .map(|&(i, j, w)| (i, j, -w))
        .collect();
    QuadraticProblem::from_parts(p.n(), diag, off).expect("same shape")
}

/// Recovery check against the exhaustive oracle (n ≤ 16).
#[derive(Debug, Clone)]
pub struct RecoveryReport {
    pub factor_rank: usize,
    pub rank_deficient: bool,
    pub objective: f64,
    pub optimum: f64,
    pub gap: f64,
    pub recovered: bool,
}

/// When the converged factor is rank-deficient (numerical rank < k),
/// compare its extracted objective to the global optimum.
pub fn verify_recovery(
    p: &QuadraticProblem,
    k: usize,
    spec: &EntropySpec,
    sched: &EpsdpSchedule,
    seed: u64,
) -> Result<RecoveryReport> {
    if p.n() > 16 {
        return Err(Error::TooLarge { n: p.n(), limit: 16 });
    }
    let out = epsdp_solve(p, k, spec, sched, seed)?;
    let sv = out.factor.singular_values();
    let factor_rank = sv.iter().filter(|s| **s > 1e-4).count();
    let (_, optimum) = brute_force_max(p)?;
    let gap = optimum - out.objective;
    let rank_deficient = factor_rank < k;
    Ok(RecoveryReport {
        factor_rank,
        rank_deficient,
        objective: out.objective,
        optimum,
        gap,
        recovered: rank_deficient && gap.abs() <= 1e-9,
    })
}
