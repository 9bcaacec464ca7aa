//! Backward Euler for the benchmark problem with its own assembly,
//! finite-difference Jacobian and dense elimination.

const ALPHA: f64 = 5.0 / 3.0;
const GAMMA: f64 = 0.5;
const FLOOR: f64 = 1e-8;

/// Integrates to `t_end` with step `dt` and returns the states every
/// `coarse_dt`, starting with `u0`.
pub fn backward_euler(x: &[f64], d_f: &[f64], u0: &[f64], t_end: f64, dt: f64, coarse_dt: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let h = x[1] - x[0];
    let residual = |u: &[f64], prev: &[f64]| -> Vec<f64> {
        let mut r = vec![0.0; n];
        for e in 0..n - 1 {
            let du0 = (u[e] - prev[e]) / dt;
            let du1 = (u[e + 1] - prev[e + 1]) / dt;
            r[e] += h / 6.0 * (2.0 * du0 + du1);
            r[e + 1] += h / 6.0 * (du0 + 2.0 * du1);
            let g = (u[e + 1] - u[e]) / h;
            let depth = 0.5 * (u[e] + u[e + 1]);
            let d = 0.5 * (d_f[e] + d_f[e + 1]);
            let q = d * depth.powf(ALPHA) / g.abs().max(FLOOR).powf(1.0 - GAMMA) * g;
            r[e] -= q;
            r[e + 1] += q;
        }
        r
    };
    let ratio = (coarse_dt / dt).round() as usize;
    let steps = (t_end / dt).round() as usize;
    let mut u = u0.to_vec();
    let mut out = vec![u.clone()];
    for step in 1..=steps {
        let prev = u.clone();
        for _ in 0..50 {
            let r = residual(&u, &prev);
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < 1e-13 {
                break;
            }
            let mut jac = vec![vec![0.0; n]; n];
            for j in 0..n {
                let eps = 1e-7 * u[j].abs().max(1.0);
                let mut up = u.clone();
                up[j] += eps;
                let rp = residual(&up, &prev);
                for i in 0..n {
                    jac[i][j] = (rp[i] - r[i]) / eps;
                }
            }
            let du = dense_solve(jac, r);
            for (ui, di) in u.iter_mut().zip(&du) {
                *ui -= di;
            }
        }
        if step % ratio == 0 {
            out.push(u.clone());
        }
    }
    out
}

/// Gaussian elimination with partial pivoting.
#[allow(clippy::needless_range_loop)]
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for k in 0..n {
        let p = (k..n).max_by(|&i, &j| a[i][k].abs().total_cmp(&a[j][k].abs())).unwrap();
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
            b[i] -= f * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| a[k][j] * x[j]).sum();
        x[k] = (b[k] - s) / a[k][k];
    }
    x
}
