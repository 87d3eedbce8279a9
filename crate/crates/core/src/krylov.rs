//! Restarted GMRES for real linear systems given only as a matrix action.

#[derive(Debug, Clone, Copy)]
pub struct GmresOptions {
    /// Relative residual target `‖b − Ax‖ / ‖b‖`.
    pub tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for GmresOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            restart: 40,
            max_iter: 400,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` starting from `x0`. `apply(v, out)` writes `A v`.
pub fn gmres(mut apply: impl FnMut(&[f64], &mut [f64]), b: &[f64], x0: Vec<f64>, opts: GmresOptions) -> GmresOutcome {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = x0;
    if bnorm == 0.0 {
        return GmresOutcome {
            x: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
    }
    let m = opts.restart.max(1);
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut h = vec![vec![0.0; m]; m + 1];
    let mut cs = vec![0.0; m];
    let mut sn = vec![0.0; m];
    let mut g = vec![0.0; m + 1];
    let mut iterations = 0;

    loop {
        apply(&x, &mut r);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        let beta = norm(&r);
        let mut residual = beta / bnorm;
        if residual <= opts.tol || iterations >= opts.max_iter {
            return GmresOutcome {
                x,
                iterations,
                residual,
                converged: residual <= opts.tol,
            };
        }

        basis.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = beta;
        let mut j_done = 0;
        for j in 0..m {
            apply(&basis[j], &mut w);
            for i in 0..=j {
                h[i][j] = dot(&w, &basis[i]);
                let hij = h[i][j];
                w.iter_mut().zip(&basis[i]).for_each(|(wk, vk)| *wk -= hij * vk);
            }
            // second Gram-Schmidt pass keeps the basis orthogonal for
            // the nearly-singular systems seen at large |k|
            for i in 0..=j {
                let c = dot(&w, &basis[i]);
                h[i][j] += c;
                w.iter_mut().zip(&basis[i]).for_each(|(wk, vk)| *wk -= c * vk);
            }
            let hn = norm(&w);
            h[j + 1][j] = hn;

            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let denom = h[j][j].hypot(h[j + 1][j]);
            if denom == 0.0 {
                cs[j] = 1.0;
                sn[j] = 0.0;
            } else {
                cs[j] = h[j][j] / denom;
                sn[j] = h[j + 1][j] / denom;
            }
            h[j][j] = denom;
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];

            iterations += 1;
            j_done = j + 1;
            residual = g[j + 1].abs() / bnorm;
            if residual <= opts.tol || iterations >= opts.max_iter || hn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }

        let mut y = vec![0.0; j_done];
        for i in (0..j_done).rev() {
            let s: f64 = (i + 1..j_done).map(|l| h[i][l] * y[l]).sum();
            y[i] = if h[i][i] != 0.0 { (g[i] - s) / h[i][i] } else { 0.0 };
        }
        for (i, yi) in y.iter().enumerate() {
            x.iter_mut().zip(&basis[i]).for_each(|(xk, vk)| *xk += yi * vk);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(a: &[Vec<f64>]) -> impl FnMut(&[f64], &mut [f64]) + '_ {
        move |v, out| {
            for (o, row) in out.iter_mut().zip(a) {
                *o = dot(row, v);
            }
        }
    }

    #[test]
    fn solves_nonsymmetric_system() {
        let n = 30;
        let a: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { 4.0 } else { ((i * 3 + j * 7) % 5) as f64 / 20.0 - 0.1 })
                    .collect()
            })
            .collect();
        let xs: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let b: Vec<f64> = a.iter().map(|r| dot(r, &xs)).collect();
        let out = gmres(dense(&a), &b, vec![0.0; n], GmresOptions { tol: 1e-12, ..Default::default() });
        assert!(out.converged);
        let err = out.x.iter().zip(&xs).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10);
    }

    #[test]
    fn restarts_still_converge() {
        let n = 60;
        let a: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 + i as f64 / 10.0 } else if j == i + 1 { 0.5 } else { 0.0 }).collect())
            .collect();
        let b = vec![1.0; n];
        let out = gmres(dense(&a), &b, vec![0.0; n], GmresOptions { tol: 1e-10, restart: 5, max_iter: 2000 });
        assert!(out.converged, "residual {}", out.residual);
        let mut r = vec![0.0; n];
        dense(&a)(&out.x, &mut r);
        let res = r.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt() / (n as f64).sqrt();
        assert!(res < 1e-9);
    }

    #[test]
    fn exact_initial_guess_takes_no_iterations() {
        let out = gmres(|v, o| o.copy_from_slice(v), &[1.0, 2.0], vec![1.0, 2.0], GmresOptions::default());
        assert_eq!(out.iterations, 0);
        assert!(out.converged);
    }

    #[test]
    fn reports_non_convergence() {
        // rotation by 90°: GMRES stagnates with restart 1
        let out = gmres(
            |v, o| {
                o[0] = -v[1];
                o[1] = v[0];
            },
            &[1.0, 0.0],
            vec![0.0, 0.0],
            GmresOptions { tol: 1e-10, restart: 1, max_iter: 20 },
        );
        assert!(!out.converged);
        assert_eq!(out.iterations, 20);
    }
}
