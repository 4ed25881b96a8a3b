//! Brute-force reference solvers, independent of the simplex code.

use ndarray::{Array1, Array2};

/// Solve a small dense square system by Gaussian elimination with partial
/// pivoting. `None` if singular.
fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap())?;
        if a[piv][c].abs() < 1e-10 {
            return None;
        }
        a.swap(c, piv);
        b.swap(c, piv);
        for r in (c + 1)..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

fn combinations(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    if k > n {
        return;
    }
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
        }
        idx[i] += 1;
        for j in (i + 1)..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Minimum of `‖β‖₁` over `{β : ‖Aβ − b‖_max ≤ λ}` by vertex enumeration.
///
/// In every orthant the objective is linear, so the minimum over the feasible
/// polyhedron is attained at a point where `p` linearly independent
/// hyperplanes from `{a_iᵀβ = b_i ± λ} ∪ {β_j = 0}` are active. These points
/// are exactly the basic feasible solutions of the standard-form LP in
/// `(β⁺, β⁻)`. Returns `None` when no vertex is feasible.
pub fn l1_linf_vertex_oracle(a: &Array2<f64>, b: &Array1<f64>, lambda: f64) -> Option<(f64, Array1<f64>)> {
    let (m, p) = a.dim();
    // Hyperplanes: (normal, offset).
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..m {
        let row: Vec<f64> = a.row(i).to_vec();
        planes.push((row.clone(), b[i] + lambda));
        planes.push((row, b[i] - lambda));
    }
    for j in 0..p {
        let mut e = vec![0.0; p];
        e[j] = 1.0;
        planes.push((e, 0.0));
    }
    let mut best: Option<(f64, Array1<f64>)> = None;
    combinations(planes.len(), p, &mut |set| {
        let mat: Vec<Vec<f64>> = set.iter().map(|&k| planes[k].0.clone()).collect();
        let rhs: Vec<f64> = set.iter().map(|&k| planes[k].1).collect();
        if let Some(x) = solve_square(mat, rhs) {
            let beta = Array1::from(x);
            let resid = (a.dot(&beta) - b).iter().fold(0.0_f64, |s, v| s.max(v.abs()));
            if resid <= lambda + 1e-9 {
                let obj: f64 = beta.iter().map(|v| v.abs()).sum();
                if best.as_ref().map_or(true, |(o, _)| obj < *o) {
                    best = Some((obj, beta));
                }
            }
        }
    });
    best
}
