//! Dense bounded-variable dual simplex for
//!
//! ```text
//! min ‖β‖₁  s.t.  ‖Aβ − b‖_max ≤ λ
//! ```
//!
//! written as `min 1ᵀ(β⁺ + β⁻)` subject to `Aβ⁺ − Aβ⁻ − r = b`, `β± ≥ 0`,
//! `−λ ≤ r ≤ λ`. The slack basis `B = −I` with `β = 0` is dual feasible for
//! every `b` and `λ`, so no phase one is needed, and any optimal basis of one
//! instance warm-starts another instance that shares `A`.
//!
//! Variable layout: `0..p` is `β⁺`, `p..2p` is `β⁻`, `2p..2p+m` is `r`.

use crate::linalg::invert_in_place;

/// Refactorization period, in pivots.
const REFACTOR_EVERY: usize = 48;
/// Tolerance on reduced-cost sign violations.
const DUAL_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpOutcome {
    Optimal,
    Infeasible,
    IterationLimit,
    Singular,
}

/// A simplex basis that can seed another solve with the same matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    basic: Vec<usize>,
    at_upper: Vec<bool>,
}

pub(crate) struct LpResult {
    pub outcome: LpOutcome,
    pub beta: Vec<f64>,
    pub basis: Basis,
    pub iterations: usize,
}

/// The constraint matrix of a family of problems, row-major `m x p`.
#[derive(Debug, Clone)]
pub(crate) struct L1LinfLp {
    m: usize,
    p: usize,
    a: Vec<f64>,
    a_scale: f64,
}

struct State<'a> {
    lp: &'a L1LinfLp,
    b: &'a [f64],
    lambda: f64,
    basic: Vec<usize>,
    /// Row of each basic variable, `usize::MAX` when nonbasic.
    row_of: Vec<usize>,
    at_upper: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    d: Vec<f64>,
}

impl L1LinfLp {
    pub fn new(m: usize, p: usize, a: Vec<f64>) -> Self {
        assert_eq!(a.len(), m * p);
        let a_scale = a.iter().fold(0.0_f64, |s, v| s.max(v.abs())).max(1e-300);
        L1LinfLp { m, p, a, a_scale }
    }

    fn nvars(&self) -> usize {
        2 * self.p + self.m
    }

    fn cost(&self, j: usize) -> f64 {
        if j < 2 * self.p {
            1.0
        } else {
            0.0
        }
    }

    /// `out = B⁻¹ M_j`.
    fn ftran(&self, binv: &[f64], j: usize, out: &mut [f64]) {
        let (m, p) = (self.m, self.p);
        if j < 2 * p {
            let (col, sign) = if j < p { (j, 1.0) } else { (j - p, -1.0) };
            for i in 0..m {
                let row = &binv[i * m..(i + 1) * m];
                let mut s = 0.0;
                for k in 0..m {
                    s += row[k] * self.a[k * p + col];
                }
                out[i] = sign * s;
            }
        } else {
            let k = j - 2 * p;
            for i in 0..m {
                out[i] = -binv[i * m + k];
            }
        }
    }

    /// Solve for right-hand side `b` and bound `λ`, optionally from a basis
    /// left by an earlier solve with the same matrix.
    pub fn solve(&self, b: &[f64], lambda: f64, warm: Option<&Basis>, max_iter: usize) -> LpResult {
        assert_eq!(b.len(), self.m);
        let st = warm
            .and_then(|w| State::from_basis(self, b, lambda, w))
            .unwrap_or_else(|| State::cold(self, b, lambda));
        st.run(max_iter)
    }
}

impl<'a> State<'a> {
    fn cold(lp: &'a L1LinfLp, b: &'a [f64], lambda: f64) -> Self {
        let (m, p) = (lp.m, lp.p);
        let n = lp.nvars();
        let basic: Vec<usize> = (0..m).map(|i| 2 * p + i).collect();
        let mut row_of = vec![usize::MAX; n];
        for (i, &j) in basic.iter().enumerate() {
            row_of[j] = i;
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = -1.0;
        }
        let xb = b.iter().map(|v| -v).collect();
        let mut d = vec![0.0; n];
        for (j, dj) in d.iter_mut().enumerate().take(2 * p) {
            *dj = lp.cost(j);
        }
        State { lp, b, lambda, basic, row_of, at_upper: vec![false; n], binv, xb, d }
    }

    fn from_basis(lp: &'a L1LinfLp, b: &'a [f64], lambda: f64, w: &Basis) -> Option<Self> {
        let n = lp.nvars();
        if w.basic.len() != lp.m || w.at_upper.len() != n {
            return None;
        }
        let mut row_of = vec![usize::MAX; n];
        for (i, &j) in w.basic.iter().enumerate() {
            if j >= n || row_of[j] != usize::MAX {
                return None;
            }
            row_of[j] = i;
        }
        let mut st = State {
            lp,
            b,
            lambda,
            basic: w.basic.clone(),
            row_of,
            at_upper: w.at_upper.clone(),
            binv: vec![0.0; lp.m * lp.m],
            xb: vec![0.0; lp.m],
            d: vec![0.0; n],
        };
        if !st.refactor() {
            return None;
        }
        // Dual feasibility does not depend on (b, λ); re-seat boxed
        // nonbasics on the bound matching their reduced-cost sign.
        let p2 = 2 * lp.p;
        for j in 0..n {
            if st.row_of[j] != usize::MAX {
                continue;
            }
            if j < p2 {
                if st.d[j] < -1e-9 {
                    return None;
                }
            } else {
                st.at_upper[j] = st.d[j] < 0.0;
            }
        }
        st.recompute_primal();
        Some(st)
    }

    fn lower(&self, j: usize) -> f64 {
        if j < 2 * self.lp.p {
            0.0
        } else {
            -self.lambda
        }
    }

    fn upper(&self, j: usize) -> f64 {
        if j < 2 * self.lp.p {
            f64::INFINITY
        } else {
            self.lambda
        }
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        if j < 2 * self.lp.p {
            0.0
        } else if self.at_upper[j] {
            self.lambda
        } else {
            -self.lambda
        }
    }

    /// Rebuild `B⁻¹`, primal values and reduced costs from the basis.
    fn refactor(&mut self) -> bool {
        let (m, p) = (self.lp.m, self.lp.p);
        let mut bmat = vec![0.0; m * m];
        for (c, &j) in self.basic.iter().enumerate() {
            if j < 2 * p {
                let (col, sign) = if j < p { (j, 1.0) } else { (j - p, -1.0) };
                for i in 0..m {
                    bmat[i * m + c] = sign * self.lp.a[i * p + col];
                }
            } else {
                bmat[(j - 2 * p) * m + c] = -1.0;
            }
        }
        if !invert_in_place(&mut bmat, m, 1e-12 * self.lp.a_scale.max(1.0)) {
            return false;
        }
        self.binv = bmat;
        self.recompute_primal();
        self.recompute_duals();
        true
    }

    fn recompute_primal(&mut self) {
        let (m, p) = (self.lp.m, self.lp.p);
        let mut rhs = self.b.to_vec();
        for k in 0..m {
            let j = 2 * p + k;
            if self.row_of[j] == usize::MAX {
                rhs[k] += self.nonbasic_value(j);
            }
        }
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            self.xb[i] = row.iter().zip(&rhs).map(|(a, b)| a * b).sum();
        }
    }

    fn recompute_duals(&mut self) {
        let (m, p) = (self.lp.m, self.lp.p);
        // y = B⁻ᵀ c_B
        let mut y = vec![0.0; m];
        for (k, &j) in self.basic.iter().enumerate() {
            let c = self.lp.cost(j);
            if c != 0.0 {
                let row = &self.binv[k * m..(k + 1) * m];
                for i in 0..m {
                    y[i] += c * row[i];
                }
            }
        }
        let mut ya = vec![0.0; p];
        for k in 0..m {
            if y[k] != 0.0 {
                let arow = &self.lp.a[k * p..(k + 1) * p];
                for j in 0..p {
                    ya[j] += y[k] * arow[j];
                }
            }
        }
        for j in 0..p {
            self.d[j] = 1.0 - ya[j];
            self.d[p + j] = 1.0 + ya[j];
        }
        for k in 0..m {
            self.d[2 * p + k] = y[k];
        }
        for &j in &self.basic {
            self.d[j] = 0.0;
        }
    }

    fn objective(&self) -> f64 {
        self.basic
            .iter()
            .zip(&self.xb)
            .filter(|(j, _)| **j < 2 * self.lp.p)
            .map(|(_, v)| *v)
            .sum()
    }

    fn run(mut self, max_iter: usize) -> LpResult {
        let (m, p) = (self.lp.m, self.lp.p);
        let n = self.lp.nvars();
        let scale = 1.0 + self.lambda + self.b.iter().fold(0.0_f64, |s, v| s.max(v.abs()));
        let ptol = 1e-11 * scale;
        let atol = 1e-9 * self.lp.a_scale.max(1.0);

        let mut rho = vec![0.0; m];
        let mut g = vec![0.0; p];
        let mut alpha = vec![0.0; n];
        let mut col = vec![0.0; m];
        let mut cands: Vec<(f64, f64, usize)> = Vec::with_capacity(n);
        let mut flips: Vec<usize> = Vec::new();
        let mut since_refactor = 0usize;
        let mut stall = 0usize;
        let mut bland = false;
        let mut last_obj = self.objective();
        let mut iterations = 0usize;
        let mut confirmed = false;

        loop {
            // Leaving row: largest bound violation, or the smallest basic
            // index under Bland's rule.
            let mut leave = usize::MAX;
            let mut best = 0.0;
            let mut best_var = usize::MAX;
            for i in 0..m {
                let j = self.basic[i];
                let v = self.xb[i];
                let viol = (self.lower(j) - v).max(v - self.upper(j));
                if viol > ptol {
                    let better = if bland { j < best_var } else { viol > best };
                    if better {
                        best = viol;
                        best_var = j;
                        leave = i;
                    }
                }
            }
            if leave == usize::MAX {
                // Confirm against freshly recomputed basic values.
                if since_refactor > 0 && !confirmed {
                    self.recompute_primal();
                    confirmed = true;
                    continue;
                }
                return self.finish(LpOutcome::Optimal, iterations);
            }
            if iterations >= max_iter {
                return self.finish(LpOutcome::IterationLimit, iterations);
            }
            iterations += 1;
            confirmed = false;

            let leaving_var = self.basic[leave];
            let to_lower = self.xb[leave] < self.lower(leaving_var);

            rho.copy_from_slice(&self.binv[leave * m..(leave + 1) * m]);
            g.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..m {
                let r = rho[k];
                if r != 0.0 {
                    let arow = &self.lp.a[k * p..(k + 1) * p];
                    for j in 0..p {
                        g[j] += r * arow[j];
                    }
                }
            }
            for j in 0..p {
                alpha[j] = g[j];
                alpha[p + j] = -g[j];
            }
            for k in 0..m {
                alpha[2 * p + k] = -rho[k];
            }

            // Bound-flipping ratio test. Boxed residual variables whose
            // breakpoints are passed while the leaving row stays infeasible
            // switch bounds instead of entering.
            cands.clear();
            for j in 0..n {
                let a = alpha[j];
                if self.row_of[j] != usize::MAX || a.abs() <= atol {
                    continue;
                }
                if j >= 2 * p && self.lambda == 0.0 {
                    continue; // fixed variable
                }
                let up = self.at_upper[j];
                let ok = if to_lower { (!up && a < 0.0) || (up && a > 0.0) } else { (!up && a > 0.0) || (up && a < 0.0) };
                if ok {
                    let dj = if up { (-self.d[j]).max(0.0) } else { self.d[j].max(0.0) };
                    cands.push((dj / a.abs(), a.abs(), j));
                }
            }
            if cands.is_empty() {
                return self.finish(LpOutcome::Infeasible, iterations);
            }
            cands.sort_by(|x, y| x.0.total_cmp(&y.0).then(y.1.total_cmp(&x.1)).then(x.2.cmp(&y.2)));
            flips.clear();
            let mut chosen = usize::MAX;
            let mut slope = best;
            for (idx, &(_, a, j)) in cands.iter().enumerate() {
                if !bland && j >= 2 * p {
                    slope -= a * 2.0 * self.lambda;
                    if slope > 0.0 {
                        flips.push(j);
                        continue;
                    }
                }
                chosen = idx;
                break;
            }
            if chosen == usize::MAX {
                return self.finish(LpOutcome::Infeasible, iterations);
            }
            // Among near-ties with the chosen breakpoint prefer the largest pivot.
            let (r0, _, _) = cands[chosen];
            let mut q = cands[chosen].2;
            let mut qa = cands[chosen].1;
            if !bland {
                for &(r, a, j) in &cands[chosen + 1..] {
                    if r > r0 + 1e-12 {
                        break;
                    }
                    if a > qa {
                        q = j;
                        qa = a;
                    }
                }
            }
            let aq = alpha[q];
            for &j in &flips {
                self.at_upper[j] = !self.at_upper[j];
                let dx = if self.at_upper[j] { 2.0 * self.lambda } else { -2.0 * self.lambda };
                let k = j - 2 * p;
                for i in 0..m {
                    self.xb[i] += self.binv[i * m + k] * dx;
                }
            }

            // Dual update. Reduced costs keep their required signs; clamp
            // sub-tolerance violations left by near-tie choices.
            let theta_d = self.d[q] / aq;
            if theta_d != 0.0 {
                for j in 0..n {
                    if self.row_of[j] == usize::MAX && alpha[j] != 0.0 {
                        self.d[j] -= theta_d * alpha[j];
                    }
                }
            }
            for j in 0..n {
                if self.row_of[j] == usize::MAX && j != q {
                    if j < 2 * p || !self.at_upper[j] {
                        if self.d[j] < 0.0 && self.d[j] > -10.0 * DUAL_TOL {
                            self.d[j] = 0.0;
                        }
                    } else if self.d[j] > 0.0 && self.d[j] < 10.0 * DUAL_TOL {
                        self.d[j] = 0.0;
                    }
                }
            }
            self.d[q] = 0.0;
            self.d[leaving_var] = -theta_d;

            // Primal update.
            self.lp.ftran(&self.binv, q, &mut col);
            let piv = col[leave];
            if (piv - aq).abs() > 1e-7 * (1.0 + aq.abs()) || piv.abs() <= 1e-14 {
                // Row and column disagree: the factorization drifted.
                if !self.refactor() {
                    return self.finish(LpOutcome::Singular, iterations);
                }
                since_refactor = 0;
                continue;
            }
            let bound = if to_lower { self.lower(leaving_var) } else { self.upper(leaving_var) };
            let t = (self.xb[leave] - bound) / piv;
            let xq = self.nonbasic_value(q);
            for i in 0..m {
                self.xb[i] -= t * col[i];
            }
            self.xb[leave] = xq + t;

            self.row_of[leaving_var] = usize::MAX;
            self.at_upper[leaving_var] = !to_lower;
            self.row_of[q] = leave;
            self.basic[leave] = q;

            // Product-form update of B⁻¹.
            let inv_piv = 1.0 / piv;
            for k in 0..m {
                self.binv[leave * m + k] *= inv_piv;
            }
            for i in 0..m {
                if i == leave {
                    continue;
                }
                let f = col[i];
                if f != 0.0 {
                    for k in 0..m {
                        self.binv[i * m + k] -= f * self.binv[leave * m + k];
                    }
                }
            }

            since_refactor += 1;
            if since_refactor >= REFACTOR_EVERY {
                if !self.refactor() {
                    return self.finish(LpOutcome::Singular, iterations);
                }
                since_refactor = 0;
            }

            let obj = self.objective();
            if obj > last_obj + 1e-12 * (1.0 + last_obj.abs()) {
                last_obj = obj;
                stall = 0;
                bland = false;
            } else {
                stall += 1;
                if stall > 2 * m + 10 {
                    bland = true;
                }
            }
        }
    }

    fn finish(self, outcome: LpOutcome, iterations: usize) -> LpResult {
        let p = self.lp.p;
        let mut beta = vec![0.0; p];
        for (i, &j) in self.basic.iter().enumerate() {
            if j < p {
                beta[j] += self.xb[i];
            } else if j < 2 * p {
                beta[j - p] -= self.xb[i];
            }
        }
        LpResult {
            outcome,
            beta,
            basis: Basis { basic: self.basic, at_upper: self.at_upper },
            iterations,
        }
    }
}
