//! Restarted right-preconditioned GMRES for complex systems.

use num_complex::Complex64;

pub struct GmresOutcome {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Solves `A x = b` with `x` as the initial guess. `apply` computes `y = A v`,
/// `precondition` overwrites its argument with `M⁻¹ v`.
pub fn gmres(
    mut apply: impl FnMut(&[Complex64], &mut [Complex64]),
    precondition: impl Fn(&mut [Complex64]),
    b: &[Complex64],
    x: &mut [Complex64],
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> GmresOutcome {
    let n = b.len();
    let zero = Complex64::new(0.0, 0.0);
    let bnorm = norm(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = zero);
        return GmresOutcome {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
    }

    let mut r = vec![zero; n];
    let mut w = vec![zero; n];
    let mut z = vec![zero; n];
    let mut total = 0;

    loop {
        apply(x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let beta = norm(&r);
        let rel = beta / bnorm;
        if rel <= tol || total >= max_iter {
            return GmresOutcome {
                iterations: total,
                relative_residual: rel,
                converged: rel <= tol,
            };
        }

        let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(restart + 1);
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut hess = vec![vec![zero; restart]; restart + 1];
        let mut cs = vec![zero; restart];
        let mut sn = vec![zero; restart];
        let mut g = vec![zero; restart + 1];
        g[0] = Complex64::new(beta, 0.0);
        let mut used = 0;

        for k in 0..restart {
            z.copy_from_slice(&basis[k]);
            precondition(&mut z);
            apply(&z, &mut w);
            for (jj, v) in basis.iter().enumerate() {
                let hjk = dot(v, &w);
                hess[jj][k] = hjk;
                for (wi, vi) in w.iter_mut().zip(v) {
                    *wi -= hjk * vi;
                }
            }
            let hnext = norm(&w);
            hess[k + 1][k] = Complex64::new(hnext, 0.0);

            for jj in 0..k {
                let t = cs[jj].conj() * hess[jj][k] + sn[jj].conj() * hess[jj + 1][k];
                hess[jj + 1][k] = -sn[jj] * hess[jj][k] + cs[jj] * hess[jj + 1][k];
                hess[jj][k] = t;
            }
            let (a, bb) = (hess[k][k], hess[k + 1][k]);
            let denom = (a.norm_sqr() + bb.norm_sqr()).sqrt();
            if denom == 0.0 {
                cs[k] = Complex64::new(1.0, 0.0);
                sn[k] = zero;
            } else {
                cs[k] = a / denom;
                sn[k] = bb / denom;
            }
            hess[k][k] = cs[k].conj() * a + sn[k].conj() * bb;
            hess[k + 1][k] = zero;
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k].conj() * g[k];

            used = k + 1;
            total += 1;
            let rel = g[k + 1].norm() / bnorm;
            if rel <= tol || total >= max_iter || hnext == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hnext).collect());
        }

        // Back-substitution for the Krylov coefficients.
        let mut y = vec![zero; used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for jj in i + 1..used {
                s -= hess[i][jj] * y[jj];
            }
            y[i] = s / hess[i][i];
        }
        z.iter_mut().for_each(|v| *v = zero);
        for (yi, v) in y.iter().zip(&basis) {
            for (zi, vi) in z.iter_mut().zip(v) {
                *zi += yi * vi;
            }
        }
        precondition(&mut z);
        for (xi, zi) in x.iter_mut().zip(&z) {
            *xi += zi;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_nonsymmetric_system() {
        let a = [
            [Complex64::new(4.0, 1.0), Complex64::new(1.0, 0.0), Complex64::new(0.0, -0.5)],
            [Complex64::new(0.5, 0.0), Complex64::new(3.0, -2.0), Complex64::new(1.0, 1.0)],
            [Complex64::new(0.0, 0.3), Complex64::new(-1.0, 0.0), Complex64::new(5.0, 0.0)],
        ];
        let xt = [Complex64::new(1.0, -1.0), Complex64::new(0.5, 2.0), Complex64::new(-3.0, 0.25)];
        let b: Vec<Complex64> = a.iter().map(|row| row.iter().zip(&xt).map(|(m, v)| m * v).sum()).collect();
        let mut x = vec![Complex64::new(0.0, 0.0); 3];
        let out = gmres(
            |v, y| {
                for (yi, row) in y.iter_mut().zip(&a) {
                    *yi = row.iter().zip(v).map(|(m, vv)| m * vv).sum();
                }
            },
            |_| {},
            &b,
            &mut x,
            1e-14,
            2,
            100,
        );
        assert!(out.converged);
        for (u, v) in x.iter().zip(&xt) {
            assert!((u - v).norm() < 1e-12);
        }
    }
}
