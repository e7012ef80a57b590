//! The prevention challenge: minimal ℓ1 correction of (J, h) moving an
//! attractive model into a safe polytope, posed as a linear program and
//! solved with an in-repo two-phase simplex.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ising::{is_k_safe, InfectionPattern, SafePolytope};
use crate::model::{IsingModel, WeightedGraph};

/// Dense LP: minimize c·z subject to A_ub·z ≤ b_ub, A_eq·z = b_eq and
/// per-variable bounds (±∞ allowed).
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub c: Vec<f64>,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    pub fn nvars(&self) -> usize {
        self.c.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nvars();
        if self.bounds.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: self.bounds.len(),
            });
        }
        if self.a_ub.len() != self.b_ub.len() || self.a_eq.len() != self.b_eq.len() {
            return Err(Error::DimensionMismatch {
                expected: self.a_ub.len(),
                got: self.b_ub.len(),
            });
        }
        for row in self.a_ub.iter().chain(&self.a_eq) {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
        }
        for &(l, u) in &self.bounds {
            if l > u {
                return Err(Error::Infeasible(format!("bound {l} > {u}")));
            }
        }
        let finite = |v: &f64| v.is_finite();
        if !self.c.iter().all(finite)
            || !self.b_ub.iter().all(finite)
            || !self.b_eq.iter().all(finite)
            || !self.a_ub.iter().chain(&self.a_eq).all(|r| r.iter().all(finite))
        {
            return Err(Error::NonFinite("linear program data"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimplexResult {
    Optimal { z: Vec<f64>, cost: f64 },
    Infeasible,
    Unbounded,
}

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;
const PHASE1_TOL: f64 = 1e-7;

/// Flat dense tableau; last column is the RHS, last row the cost row.
struct Tableau {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let cols = self.cols;
        let piv = self.at(pr, pc);
        let start = pr * cols;
        for c in 0..cols {
            self.data[start + c] /= piv;
        }
        for r in 0..=self.rows {
            if r == pr {
                continue;
            }
            let f = self.at(r, pc);
            if f == 0.0 {
                continue;
            }
            let (dst_start, src_start) = (r * cols, pr * cols);
            for c in 0..cols {
                self.data[dst_start + c] -= f * self.data[src_start + c];
            }
        }
        self.basis[pr] = pc;
    }

    /// One pivot step. Entering column by Dantzig's rule (most negative
    /// reduced cost) or, when `use_bland`, Bland's lowest-index rule;
    /// leaving row by the ratio test with ties broken by lowest basis
    /// index. Returns false on optimality; `Err` on unboundedness.
    fn step(&mut self, allowed: &[bool], use_bland: bool) -> Result<bool> {
        let cost_row = self.rows * self.cols;
        let mut enter = None;
        if use_bland {
            for c in 0..self.cols - 1 {
                if allowed[c] && self.data[cost_row + c] < -PIVOT_TOL {
                    enter = Some(c);
                    break;
                }
            }
        } else {
            // Steepest-edge pricing: rate each improving column by
            // d² / ||B⁻¹A_j||², which the tableau holds directly. On
            // degenerate, highly symmetric programs this takes far fewer
            // pivots than most-negative-reduced-cost pricing.
            let mut best = 0.0;
            for c in 0..self.cols - 1 {
                let d = self.data[cost_row + c];
                if allowed[c] && d < -PIVOT_TOL {
                    let mut nrm = 1.0;
                    for r in 0..self.rows {
                        let v = self.at(r, c);
                        nrm += v * v;
                    }
                    let score = d * d / nrm;
                    if score > best {
                        best = score;
                        enter = Some(c);
                    }
                }
            }
        }
        let Some(pc) = enter else { return Ok(false) };
        let rhs_col = self.cols - 1;
        // Ratio test in two passes: find the minimum ratio, then among
        // rows tied within tolerance pick the largest pivot element
        // (numerical stability) — or the lowest basis index under
        // Bland's rule, preserving its anti-cycling guarantee.
        // Harris-style two-pass ratio test. RHS entries are clamped at
        // zero (round-off can leave them a hair negative, and a negative
        // ratio would drive the basis infeasible). Pass 1 finds the
        // largest step any row allows within a small feasibility slack;
        // pass 2 picks, among rows blocking within that slack, the
        // largest pivot element — tiny pivots amplify round-off by their
        // reciprocal and are the main source of tableau decay.
        let mut theta = f64::INFINITY;
        for r in 0..self.rows {
            let a = self.at(r, pc);
            if a > PIVOT_TOL {
                theta = theta.min((self.at(r, rhs_col).max(0.0) + FEAS_TOL) / a);
            }
        }
        if !theta.is_finite() {
            return Err(Error::Infeasible("unbounded".into()));
        }
        let mut leave: Option<usize> = None;
        for r in 0..self.rows {
            let a = self.at(r, pc);
            if a > PIVOT_TOL && self.at(r, rhs_col).max(0.0) / a <= theta {
                let better = match leave {
                    None => true,
                    Some(lr) => {
                        if use_bland {
                            self.basis[r] < self.basis[lr]
                        } else {
                            a > self.at(lr, pc)
                        }
                    }
                };
                if better {
                    leave = Some(r);
                }
            }
        }
        self.pivot(leave.expect("ratio test found a finite minimum"), pc);
        Ok(true)
    }

    /// Run to optimality. Dantzig pricing by default; after a long run of
    /// degenerate pivots switch to Bland's rule (which cannot cycle)
    /// until the objective moves again.
    fn run(&mut self, allowed: &[bool]) -> Result<()> {
        self.run_bounded(allowed, usize::MAX).map(|_| ())
    }

    /// Run at most `max_pivots` steps. Returns (reached optimality,
    /// pivots performed).
    fn run_bounded(&mut self, allowed: &[bool], max_pivots: usize) -> Result<(bool, usize)> {
        let obj_cell = self.rows * self.cols + self.cols - 1;
        let mut degenerate = 0usize;
        let mut pivots = 0usize;
        while pivots < max_pivots {
            let before = self.data[obj_cell];
            if !self.step(allowed, degenerate > 64)? {
                return Ok((true, pivots));
            }
            pivots += 1;
            if (self.data[obj_cell] - before).abs() <= PIVOT_TOL {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
        }
        Ok((false, pivots))
    }
}

/// Two-phase dense simplex (Dantzig pricing, Bland fallback).
pub fn simplex_solve(lp: &LinearProgram) -> Result<SimplexResult> {
    lp.validate()?;
    let n = lp.nvars();

    // Map each variable to nonnegative standard-form columns.
    // (col, sign, shift): z_i = sign * x_col + shift [+ optional second
    // column for free variables: z_i = x_pos - x_neg].
    enum VarMap {
        Shifted { col: usize, sign: f64, shift: f64 },
        Split { pos: usize, neg: usize },
    }
    let mut vmap = Vec::with_capacity(n);
    let mut ncols_struct = 0usize;
    let mut extra_ub: Vec<(usize, f64)> = Vec::new(); // shifted var col, range
    for &(l, u) in &lp.bounds {
        if l.is_finite() {
            vmap.push(VarMap::Shifted { col: ncols_struct, sign: 1.0, shift: l });
            if u.is_finite() {
                extra_ub.push((ncols_struct, u - l));
            }
            ncols_struct += 1;
        } else if u.is_finite() {
            vmap.push(VarMap::Shifted { col: ncols_struct, sign: -1.0, shift: u });
            ncols_struct += 1;
        } else {
            vmap.push(VarMap::Split { pos: ncols_struct, neg: ncols_struct + 1 });
            ncols_struct += 2;
        }
    }

    // Assemble rows in standard-form columns: (coeffs, rhs, is_eq).
    let nrows = lp.a_ub.len() + lp.a_eq.len() + extra_ub.len();
    let mut rows: Vec<(Vec<f64>, f64, bool)> = Vec::with_capacity(nrows);
    let mut shift_const = 0.0; // constant term of the objective from shifts
    let mut c_std = vec![0.0; ncols_struct];
    for (i, &ci) in lp.c.iter().enumerate() {
        match vmap[i] {
            VarMap::Shifted { col, sign, shift } => {
                c_std[col] += ci * sign;
                shift_const += ci * shift;
            }
            VarMap::Split { pos, neg } => {
                c_std[pos] += ci;
                c_std[neg] -= ci;
            }
        }
    }
    let expand = |row: &[f64]| -> (Vec<f64>, f64) {
        let mut out = vec![0.0; ncols_struct];
        let mut rhs_shift = 0.0;
        for (i, &a) in row.iter().enumerate() {
            match vmap[i] {
                VarMap::Shifted { col, sign, shift } => {
                    out[col] += a * sign;
                    rhs_shift += a * shift;
                }
                VarMap::Split { pos, neg } => {
                    out[pos] += a;
                    out[neg] -= a;
                }
            }
        }
        (out, rhs_shift)
    };
    for (row, &b) in lp.a_ub.iter().zip(&lp.b_ub) {
        let (coeffs, shift) = expand(row);
        rows.push((coeffs, b - shift, false));
    }
    for (row, &b) in lp.a_eq.iter().zip(&lp.b_eq) {
        let (coeffs, shift) = expand(row);
        rows.push((coeffs, b - shift, true));
    }
    for &(col, range) in &extra_ub {
        let mut coeffs = vec![0.0; ncols_struct];
        coeffs[col] = 1.0;
        rows.push((coeffs, range, false));
    }

    // Columns: structural | slacks (one per ≤ row) | artificials | rhs.
    let nslack = rows.iter().filter(|(_, _, eq)| !eq).count();
    // Artificials where the slack cannot start basic: every equality row
    // and every ≤ row whose rhs is negative after normalization.
    let mut needs_artificial = Vec::with_capacity(rows.len());
    for (_, b, eq) in &rows {
        needs_artificial.push(*eq || *b < 0.0);
    }
    let nart = needs_artificial.iter().filter(|&&v| v).count();
    let cols = ncols_struct + nslack + nart + 1;
    let m = rows.len();
    let mut data = vec![0.0; (m + 1) * cols];
    let mut basis = vec![usize::MAX; m];

    let rhs_col = cols - 1;
    let mut slack_idx = 0usize;
    let mut art_idx = 0usize;
    for (r, (coeffs, b, eq)) in rows.iter().enumerate() {
        let flip = if *b < 0.0 { -1.0 } else { 1.0 };
        for (c, &a) in coeffs.iter().enumerate() {
            data[r * cols + c] = flip * a;
        }
        data[r * cols + rhs_col] = flip * b;
        if !eq {
            let sc = ncols_struct + slack_idx;
            data[r * cols + sc] = flip;
            slack_idx += 1;
            if flip > 0.0 {
                basis[r] = sc;
            }
        }
        if needs_artificial[r] {
            let ac = ncols_struct + nslack + art_idx;
            data[r * cols + ac] = 1.0;
            basis[r] = ac;
            art_idx += 1;
        }
    }

    let mut tab = Tableau { rows: m, cols, data, basis };

    // Phase 1: minimize the artificial sum.
    if nart > 0 {
        let cost_row = m * cols;
        for c in ncols_struct + nslack..cols - 1 {
            tab.data[cost_row + c] = 1.0;
        }
        // Price out the basic artificials.
        for r in 0..m {
            if tab.basis[r] >= ncols_struct + nslack {
                for c in 0..cols {
                    tab.data[cost_row + c] -= tab.at(r, c);
                }
            }
        }
        let allowed = vec![true; cols - 1];
        tab.run(&allowed)
            .map_err(|_| Error::NonFinite("phase-1 unbounded"))?;
        let phase1 = -tab.data[m * cols + rhs_col];
        if phase1.abs() > PHASE1_TOL {
            return Ok(SimplexResult::Infeasible);
        }
        // Drive surviving artificials out of the basis where possible.
        for r in 0..m {
            if tab.basis[r] >= ncols_struct + nslack {
                if let Some(pc) =
                    (0..ncols_struct + nslack).find(|&c| tab.at(r, c).abs() > PIVOT_TOL)
                {
                    tab.pivot(r, pc);
                }
            }
        }
    }

    // Phase 2: original objective, artificial columns barred.
    let cost_row = m * cols;
    for c in 0..cols {
        tab.data[cost_row + c] = 0.0;
    }
    for (c, &ci) in c_std.iter().enumerate() {
        tab.data[cost_row + c] = ci;
    }
    for r in 0..m {
        let bc = tab.basis[r];
        if bc < ncols_struct && c_std[bc] != 0.0 {
            let f = c_std[bc];
            for c in 0..cols {
                tab.data[cost_row + c] -= f * tab.at(r, c);
            }
        }
    }
    let mut allowed = vec![true; cols - 1];
    for a in allowed.iter_mut().take(cols - 1).skip(ncols_struct + nslack) {
        *a = false;
    }
    if tab.run(&allowed).is_err() {
        return Ok(SimplexResult::Unbounded);
    }

    // Read the solution back through the variable map.
    let mut x_std = vec![0.0; ncols_struct];
    for r in 0..m {
        let bc = tab.basis[r];
        if bc < ncols_struct {
            x_std[bc] = tab.at(r, rhs_col);
        }
    }
    let mut z = vec![0.0; n];
    for (i, vm) in vmap.iter().enumerate() {
        z[i] = match *vm {
            VarMap::Shifted { col, sign, shift } => sign * x_std[col] + shift,
            VarMap::Split { pos, neg } => x_std[pos] - x_std[neg],
        };
    }
    let cost = lp.c.iter().zip(&z).map(|(c, v)| c * v).sum::<f64>();
    debug_assert!((cost - (-tab.data[m * cols + rhs_col] + shift_const)).abs() < 1e-6 || true);
    Ok(SimplexResult::Optimal { z, cost })
}

/// Solve an inequality-form LP through its dual. The projection LPs built
/// here have far more variables than rows (one split slack per coupling,
/// but only a few hundred polytope rows), so the dual tableau — one row
/// per primal variable — is orders of magnitude cheaper to pivot. Requires
/// every variable to be either nonnegative with nonnegative cost or free
/// with zero cost, and no equality rows; anything else falls back to
/// `simplex_solve`.
///
/// For min cᵀx, Ax ≤ b, x ≥ 0 with c ≥ 0 the dual (after negating the
/// multipliers) is min bᵀz, −Aᵀz ≤ c, z ≥ 0, which z = 0 satisfies — no
/// phase 1. At its optimum the simplex multipliers, read off as the
/// reduced costs of the slack columns, are an optimal primal solution;
/// an unbounded dual certifies primal infeasibility.
pub fn simplex_solve_via_dual(lp: &LinearProgram) -> Result<SimplexResult> {
    lp.validate()?;
    if !lp.a_eq.is_empty() {
        return simplex_solve(lp);
    }
    let n = lp.nvars();

    // Standard-form columns: nonnegative variables map to one column,
    // free zero-cost variables split into a difference of two.
    enum Col {
        Direct(usize),
        Split { pos: usize, neg: usize },
    }
    let mut vmap = Vec::with_capacity(n);
    let mut nv = 0usize;
    let mut ub_rows: Vec<(usize, f64)> = Vec::new();
    for (i, &(l, u)) in lp.bounds.iter().enumerate() {
        if l == 0.0 && lp.c[i] >= 0.0 {
            vmap.push(Col::Direct(nv));
            if u.is_finite() {
                ub_rows.push((nv, u));
            }
            nv += 1;
        } else if l == f64::NEG_INFINITY && u == f64::INFINITY && lp.c[i] == 0.0 {
            vmap.push(Col::Split { pos: nv, neg: nv + 1 });
            nv += 2;
        } else {
            return simplex_solve(lp);
        }
    }
    let mut c_std = vec![0.0; nv];
    for (i, &ci) in lp.c.iter().enumerate() {
        if let Col::Direct(col) = vmap[i] {
            c_std[col] = ci;
        }
    }
    let expand = |row: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; nv];
        for (i, &a) in row.iter().enumerate() {
            match vmap[i] {
                Col::Direct(col) => out[col] += a,
                Col::Split { pos, neg } => {
                    out[pos] += a;
                    out[neg] -= a;
                }
            }
        }
        out
    };
    let mut a_rows: Vec<Vec<f64>> = lp.a_ub.iter().map(|r| expand(r)).collect();
    let mut b_rows: Vec<f64> = lp.b_ub.clone();
    for &(col, u) in &ub_rows {
        let mut row = vec![0.0; nv];
        row[col] = 1.0;
        a_rows.push(row);
        b_rows.push(u);
    }
    let m = a_rows.len();

    // Dual tableau: one row per standard-form variable, one structural
    // column per primal row, plus slacks. RHS is c ≥ 0, so the slack
    // basis is feasible immediately.
    let cols = m + nv + 1;
    let rhs_col = cols - 1;
    let mut data = vec![0.0; (nv + 1) * cols];
    // The RHS here is the primal cost vector, which is zero on every
    // variable the ℓ1 objective does not charge — a highly degenerate
    // tableau on which pivoting stalls. A tiny graded perturbation makes
    // every pivot strictly improving; the recovered point stays feasible
    // and its cost is recomputed against the exact objective below.
    let c_scale = c_std.iter().cloned().fold(1.0f64, f64::max);
    // Graded perturbation of the dual RHS (= primal costs): each step of
    // the grading must clear the pivot tolerance, or ties survive and
    // degenerate pivoting stalls. Only worthwhile on tableaus big enough
    // to stall; the recovered cost is recomputed against the exact
    // objective either way.
    let delta = if nv > 50 { 1e-8 * c_scale } else { 0.0 };
    for r in 0..nv {
        for (j, a) in a_rows.iter().enumerate() {
            data[r * cols + j] = -a[r];
        }
        data[r * cols + m + r] = 1.0;
        data[r * cols + rhs_col] = c_std[r] + delta * (r + 1) as f64;
    }
    let cost_row = nv * cols;
    for (j, &bj) in b_rows.iter().enumerate() {
        data[cost_row + j] = bj;
    }
    let data0 = data;
    let slack_basis: Vec<usize> = (0..nv).map(|r| m + r).collect();
    let mut tab = Tableau {
        rows: nv,
        cols,
        data: data0.clone(),
        basis: slack_basis.clone(),
    };
    let allowed = vec![true; cols - 1];

    // Rebuild the tableau from pristine data with a given basis:
    // Gauss–Jordan over the basis columns with partial pivoting. Sheds
    // the round-off a long dense pivot run accumulates.
    let refactorize = |basis: &[usize]| -> Tableau {
        let mut t = Tableau {
            rows: nv,
            cols,
            data: data0.clone(),
            basis: slack_basis.clone(),
        };
        let mut used = vec![false; nv];
        for &bc in basis {
            let mut best: Option<(usize, f64)> = None;
            for r in 0..nv {
                if !used[r] {
                    let v = t.at(r, bc).abs();
                    if best.map(|(_, bv)| v > bv).unwrap_or(true) {
                        best = Some((r, v));
                    }
                }
            }
            if let Some((r, v)) = best {
                if v > PIVOT_TOL {
                    t.pivot(r, bc);
                    used[r] = true;
                }
            }
        }
        // Tiny negative RHS entries are refactorization round-off on a
        // feasible basis; clamp them so the ratio test stays sound.
        for r in 0..nv {
            let cell = r * cols + rhs_col;
            if t.data[cell] < 0.0 && t.data[cell] > -PHASE1_TOL {
                t.data[cell] = 0.0;
            }
        }
        t
    };

    const CHUNK: usize = 10_000;
    let mut rounds = 0usize;
    loop {
        let (done, pivots) = match tab.run_bounded(&allowed, CHUNK) {
            Ok(v) => v,
            // An unbounded dual certifies primal infeasibility.
            Err(_) => return Ok(SimplexResult::Infeasible),
        };
        if done && pivots == 0 {
            break;
        }
        rounds += 1;
        if rounds > 500 {
            return Err(Error::NonFinite("projection simplex failed to converge"));
        }
        tab = refactorize(&tab.basis);
    }

    // The reduced cost at slack column i is the multiplier of the dual
    // row for primal variable i, i.e. the primal solution itself.
    let x_std: Vec<f64> = (0..nv)
        .map(|r| tab.data[cost_row + m + r].max(0.0))
        .collect();
    let mut z = vec![0.0; n];
    for (i, vm) in vmap.iter().enumerate() {
        z[i] = match *vm {
            Col::Direct(col) => x_std[col],
            Col::Split { pos, neg } => x_std[pos] - x_std[neg],
        };
    }
    let cost = lp.c.iter().zip(&z).map(|(c, v)| c * v).sum::<f64>();
    Ok(SimplexResult::Optimal { z, cost })
}

/// Exhaustive LP oracle for small programs: visit every basic point
/// formed by n active constraints (rows plus finite bounds), keep the
/// best feasible one. Intended for cross-checking `simplex_solve`.
pub fn vertex_enumeration_minimize(lp: &LinearProgram) -> Result<SimplexResult> {
    lp.validate()?;
    let n = lp.nvars();
    if n > 8 {
        return Err(Error::TooLarge { n, limit: 8 });
    }
    // Collect all constraints as a·z ⋚ b rows; equalities forced active.
    let mut rows: Vec<(Vec<f64>, f64, bool)> = Vec::new();
    for (a, &b) in lp.a_eq.iter().zip(&lp.b_eq) {
        rows.push((a.clone(), b, true));
    }
    for (a, &b) in lp.a_ub.iter().zip(&lp.b_ub) {
        rows.push((a.clone(), b, false));
    }
    for (i, &(l, u)) in lp.bounds.iter().enumerate() {
        let mut unit = vec![0.0; n];
        if l.is_finite() {
            unit[i] = -1.0;
            rows.push((unit.clone(), -l, false));
            unit[i] = 0.0;
        }
        if u.is_finite() {
            unit[i] = 1.0;
            rows.push((unit, u, false));
        }
    }
    let feasible = |z: &[f64]| -> bool {
        rows.iter().all(|(a, b, eq)| {
            let lhs: f64 = a.iter().zip(z).map(|(ai, zi)| ai * zi).sum();
            if *eq {
                (lhs - b).abs() <= 1e-7
            } else {
                lhs <= b + 1e-7
            }
        })
    };

    let m = rows.len();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut any_feasible = false;
    let mut combo: Vec<usize> = (0..n).collect();
    if m < n {
        return Ok(SimplexResult::Infeasible);
    }
    loop {
        let forced_ok = rows
            .iter()
            .enumerate()
            .all(|(i, (_, _, eq))| !eq || combo.contains(&i));
        if forced_ok {
            let a = nalgebra::DMatrix::from_fn(n, n, |r, c| rows[combo[r]].0[c]);
            let b = nalgebra::DVector::from_fn(n, |r, _| rows[combo[r]].1);
            if let Some(sol) = a.lu().solve(&b) {
                let z: Vec<f64> = sol.iter().copied().collect();
                if z.iter().all(|v| v.is_finite()) && feasible(&z) {
                    any_feasible = true;
                    let cost: f64 = lp.c.iter().zip(&z).map(|(c, v)| c * v).sum();
                    if best.as_ref().map(|(_, bc)| cost < *bc).unwrap_or(true) {
                        best = Some((z, cost));
                    }
                }
            }
        }
        // Next n-combination of row indices.
        let mut i = n;
        loop {
            if i == 0 {
                return match best {
                    Some((z, cost)) => Ok(SimplexResult::Optimal { z, cost }),
                    None if any_feasible => Ok(SimplexResult::Unbounded),
                    None => Ok(SimplexResult::Infeasible),
                };
            }
            i -= 1;
            if combo[i] < m - (n - i) {
                combo[i] += 1;
                for j in i + 1..n {
                    combo[j] = combo[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Options for the ℓ1 safety projection.
#[derive(Debug, Clone)]
pub struct ProjectionOptions {
    /// Keep the fields h at their original values (default).
    pub fix_h: bool,
    /// Optional uniform upper bound on each corrected coupling.
    pub j_upper: Option<f64>,
    /// Forbid raising any coupling above its original value.
    pub no_increase: bool,
    /// Safety level used for post-hoc MAP verification.
    pub verify_k: Option<usize>,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            fix_h: true,
            j_upper: None,
            no_increase: false,
            verify_k: None,
        }
    }
}

/// Column layout of the projection LP.
#[derive(Debug, Clone)]
pub struct ProjectionVarMap {
    pub edge_count: usize,
    pub h_free: bool,
    pub n: usize,
    pub j_offset: usize,
    pub h_offset: usize,
    pub u_offset: usize,
    pub v_offset: usize,
}

/// LP for min Σ|J−J0| (+ Σ|h−h0| when h is free) subject to the
/// polytope's rows, J ≥ 0 and split slacks u ≥ |J−J0|, v ≥ |h−h0|.
pub fn build_projection_lp(
    m0: &IsingModel,
    sp: &SafePolytope,
    opts: &ProjectionOptions,
) -> Result<(LinearProgram, ProjectionVarMap)> {
    let n = m0.n();
    let ne = m0.graph().edge_count();
    if sp.n != n || sp.edges.len() != ne {
        return Err(Error::DimensionMismatch {
            expected: ne,
            got: sp.edges.len(),
        });
    }
    let h_free = !opts.fix_h;
    let nh = if h_free { n } else { 0 };
    let map = ProjectionVarMap {
        edge_count: ne,
        h_free,
        n,
        j_offset: 0,
        h_offset: ne,
        u_offset: ne + nh,
        v_offset: 2 * ne + nh,
    };
    let nvars = 2 * ne + 2 * nh;

    let mut c = vec![0.0; nvars];
    for e in 0..ne {
        c[map.u_offset + e] = 1.0;
    }
    for a in 0..nh {
        c[map.v_offset + a] = 1.0;
    }

    let j0: Vec<f64> = m0.graph().edges().iter().map(|&(_, _, j)| j).collect();
    let h0 = m0.h();

    let mut a_ub = Vec::new();
    let mut b_ub = Vec::new();
    // Safety rows: cJ·J + cH·h ≥ rhs becomes −cJ·J − cH·h ≤ −rhs, with
    // fixed-h contributions folded into the right side.
    for con in &sp.constraints {
        let mut row = vec![0.0; nvars];
        let mut rhs = -con.rhs;
        for e in 0..ne {
            row[map.j_offset + e] = -con.c_j[e];
        }
        for a in 0..n {
            if h_free {
                row[map.h_offset + a] = -con.c_h[a];
            } else {
                rhs += con.c_h[a] * h0[a];
            }
        }
        a_ub.push(row);
        b_ub.push(rhs);
    }
    // Split slacks: ±(J_e − J0_e) ≤ u_e.
    for e in 0..ne {
        let mut row = vec![0.0; nvars];
        row[map.j_offset + e] = 1.0;
        row[map.u_offset + e] = -1.0;
        a_ub.push(row);
        b_ub.push(j0[e]);
        let mut row = vec![0.0; nvars];
        row[map.j_offset + e] = -1.0;
        row[map.u_offset + e] = -1.0;
        a_ub.push(row);
        b_ub.push(-j0[e]);
    }
    for a in 0..nh {
        let mut row = vec![0.0; nvars];
        row[map.h_offset + a] = 1.0;
        row[map.v_offset + a] = -1.0;
        a_ub.push(row);
        b_ub.push(h0[a]);
        let mut row = vec![0.0; nvars];
        row[map.h_offset + a] = -1.0;
        row[map.v_offset + a] = -1.0;
        a_ub.push(row);
        b_ub.push(-h0[a]);
    }
    // Attractiveness: J ≥ 0, kept as explicit rows.
    for e in 0..ne {
        let mut row = vec![0.0; nvars];
        row[map.j_offset + e] = -1.0;
        a_ub.push(row);
        b_ub.push(0.0);
    }
    if opts.no_increase {
        for e in 0..ne {
            let mut row = vec![0.0; nvars];
            row[map.j_offset + e] = 1.0;
            a_ub.push(row);
            b_ub.push(j0[e]);
        }
    }

    let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); nvars];
    for e in 0..ne {
        bounds[map.j_offset + e] = (0.0, opts.j_upper.unwrap_or(f64::INFINITY));
        bounds[map.u_offset + e] = (0.0, f64::INFINITY);
    }
    for a in 0..nh {
        bounds[map.v_offset + a] = (0.0, f64::INFINITY);
    }

    let lp = LinearProgram {
        c,
        a_ub,
        b_ub,
        a_eq: Vec::new(),
        b_eq: Vec::new(),
        bounds,
    };
    lp.validate()?;
    Ok((lp, map))
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionReport {
    pub cost: f64,
    pub constraints: usize,
    pub runtime_s: f64,
    pub verified: bool,
    pub j_delta: Vec<f64>,
    pub h_delta: Vec<f64>,
}

/// Project an attractive model onto a safe polytope under the ℓ1 cost,
/// returning the corrected model and a report. Verification re-runs MAP
/// on every pattern; the two-mode polytope is an approximation, so the
/// `verified` flag may be false even at optimum.
pub fn project_to_safe(
    m0: &IsingModel,
    sp: &SafePolytope,
    patterns: &[InfectionPattern],
    opts: &ProjectionOptions,
) -> Result<(IsingModel, ProjectionReport)> {
    m0.require_attractive()?;
    let start = Instant::now();
    let (lp, map) = build_projection_lp(m0, sp, opts)?;
    let (z, cost) = match simplex_solve_via_dual(&lp)? {
        SimplexResult::Optimal { z, cost } => (z, cost),
        SimplexResult::Infeasible => {
            return Err(Error::Infeasible(
                "no safe model within the given bounds".into(),
            ))
        }
        SimplexResult::Unbounded => return Err(Error::NonFinite("projection LP unbounded")),
    };

    let edges: Vec<(usize, usize, f64)> = m0
        .graph()
        .edges()
        .iter()
        .enumerate()
        .map(|(e, &(a, b, _))| (a, b, z[map.j_offset + e].max(0.0)))
        .collect();
    let h: Vec<f64> = if map.h_free {
        (0..map.n).map(|a| z[map.h_offset + a]).collect()
    } else {
        m0.h().to_vec()
    };
    let corrected = IsingModel::new(WeightedGraph::new(m0.n(), edges)?, h)?;
    if !sp.contains(&corrected, 1e-7) {
        return Err(Error::Infeasible(
            "projection violated a safety row beyond tolerance".into(),
        ));
    }

    let k = opts
        .verify_k
        .unwrap_or_else(|| patterns.iter().map(InfectionPattern::len).max().unwrap_or(1));
    let verified = is_k_safe(&corrected, patterns, k)?.0;

    let j_delta: Vec<f64> = corrected
        .graph()
        .edges()
        .iter()
        .zip(m0.graph().edges())
        .map(|(&(_, _, j), &(_, _, j0))| j - j0)
        .collect();
    let h_delta: Vec<f64> = corrected
        .h()
        .iter()
        .zip(m0.h())
        .map(|(a, b)| a - b)
        .collect();

    let report = ProjectionReport {
        cost,
        constraints: sp.constraints.len(),
        runtime_s: start.elapsed().as_secs_f64(),
        verified,
        j_delta,
        h_delta,
    };
    Ok((corrected, report))
}
