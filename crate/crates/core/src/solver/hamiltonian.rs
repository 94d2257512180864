//! Discrete two-state Hamiltonian
//!
//! ```text
//! H = | −Δ_h + q⁺      S + p   |
//!     | −S + p      −Δ_h + q⁻  |
//! ```
//!
//! on interior nodes with homogeneous Dirichlet closure, where S is the skew
//! form ½(A·∇ + ∇·(A ·)) of the gradient coupling with centered differences.
//! S is exactly antisymmetric, so H is real symmetric.

use num_complex::Complex64;

use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::grid::WaveguideGrid;

/// Compressed sparse row matrix with real entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub dim: usize,
    pub row_ptr: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl CsrMatrix {
    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.col[lo..hi]
            .iter()
            .position(|&cc| cc == c)
            .map_or(0.0, |p| self.val[lo + p])
    }

    pub fn matvec(&self, x: &[Complex64], y: &mut [Complex64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += x[self.col[p]] * self.val[p];
            }
            *out = acc;
        }
    }

    /// max |H_ij − H_ji| over stored entries.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for r in 0..self.dim {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col[p];
                worst = worst.max((self.val[p] - self.get(c, r)).abs());
            }
        }
        worst
    }

    /// Gershgorin bound on the spectral radius.
    pub fn gershgorin_radius(&self) -> f64 {
        (0..self.dim)
            .map(|r| self.val[self.row_ptr[r]..self.row_ptr[r + 1]].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.dim]; self.dim];
        for (r, row) in out.iter_mut().enumerate() {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                row[self.col[p]] = self.val[p];
            }
        }
        out
    }
}

/// Interior-node layout shared by the assembled operator and the solver:
/// `[u⁺ interior | u⁻ interior]`, each block axial-major over (n1−2) × (nn−2).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InteriorLayout {
    pub m1: usize,
    pub mn: usize,
}

impl InteriorLayout {
    pub fn new(grid: &WaveguideGrid) -> Self {
        InteriorLayout {
            m1: grid.n1() - 2,
            mn: grid.nn() - 2,
        }
    }

    pub fn block(&self) -> usize {
        self.m1 * self.mn
    }

    pub fn dim(&self) -> usize {
        2 * self.block()
    }

    /// Unknown index of component `comp` (0 = +, 1 = −) at full-grid node (i, j).
    #[inline]
    pub fn index(&self, comp: usize, i: usize, j: usize) -> usize {
        comp * self.block() + (j - 1) * self.m1 + (i - 1)
    }
}

/// Assembled discrete Hamiltonian together with its layout.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    pub layout: InteriorLayout,
    pub matrix: CsrMatrix,
}

/// Skew-form coupling weight between node k and its neighbor k' along one axis:
/// entry (k, k') = sign · (a_k + a_k') / (4h).
#[inline]
fn skew(a_here: f64, a_there: f64, h: f64, forward: bool) -> f64 {
    let v = (a_here + a_there) / (4.0 * h);
    if forward {
        v
    } else {
        -v
    }
}

pub fn assemble_hamiltonian(c: &CoefficientSet, grid: &WaveguideGrid) -> Result<Hamiltonian> {
    c.check_shape(grid)?;
    if c.dimension() != 2 {
        return Err(Error::Contract(format!(
            "the Hamiltonian is assembled for n = 2, got {} components",
            c.dimension()
        )));
    }
    let layout = InteriorLayout::new(grid);
    let (n1, nn) = (grid.n1(), grid.nn());
    let (h1, hn) = (grid.h1(), grid.hn());
    let (ih1, ihn) = (1.0 / (h1 * h1), 1.0 / (hn * hn));
    let a1 = &c.a[0];
    let an = &c.a[1];

    let mut row_ptr = Vec::with_capacity(layout.dim() + 1);
    let mut col = Vec::with_capacity(layout.dim() * 11);
    let mut val = Vec::with_capacity(layout.dim() * 11);
    row_ptr.push(0);

    for comp in 0..2 {
        let q = if comp == 0 { &c.q_plus } else { &c.q_minus };
        // +: S + p acting on u⁻;  −: −S + p acting on u⁺.
        let other = 1 - comp;
        let sgn = if comp == 0 { 1.0 } else { -1.0 };
        for j in 1..nn - 1 {
            for i in 1..n1 - 1 {
                let k = grid.idx(i, j);
                let mut entries: Vec<(usize, f64)> = Vec::with_capacity(11);
                entries.push((layout.index(comp, i, j), 2.0 * ih1 + 2.0 * ihn + q[k]));
                if i > 1 {
                    entries.push((layout.index(comp, i - 1, j), -ih1));
                }
                if i + 2 < n1 {
                    entries.push((layout.index(comp, i + 1, j), -ih1));
                }
                if j > 1 {
                    entries.push((layout.index(comp, i, j - 1), -ihn));
                }
                if j + 2 < nn {
                    entries.push((layout.index(comp, i, j + 1), -ihn));
                }
                entries.push((layout.index(other, i, j), c.p[k]));
                if i > 1 {
                    let kk = grid.idx(i - 1, j);
                    entries.push((layout.index(other, i - 1, j), sgn * skew(a1[k], a1[kk], h1, false)));
                }
                if i + 2 < n1 {
                    let kk = grid.idx(i + 1, j);
                    entries.push((layout.index(other, i + 1, j), sgn * skew(a1[k], a1[kk], h1, true)));
                }
                if j > 1 {
                    let kk = grid.idx(i, j - 1);
                    entries.push((layout.index(other, i, j - 1), sgn * skew(an[k], an[kk], hn, false)));
                }
                if j + 2 < nn {
                    let kk = grid.idx(i, j + 1);
                    entries.push((layout.index(other, i, j + 1), sgn * skew(an[k], an[kk], hn, true)));
                }
                entries.sort_unstable_by_key(|e| e.0);
                let diag = layout.index(comp, i, j);
                // Structural zeros (A = 0 or p = 0) are not stored.
                for (cidx, v) in entries.into_iter().filter(|&(cc, v)| cc == diag || v != 0.0) {
                    col.push(cidx);
                    val.push(v);
                }
                row_ptr.push(col.len());
            }
        }
    }

    Ok(Hamiltonian {
        layout,
        matrix: CsrMatrix {
            dim: layout.dim(),
            row_ptr,
            col,
            val,
        },
    })
}

/// Applies the Hamiltonian stencil at every node of the full grid, treating
/// values outside the grid as zero. At interior nodes this agrees with the
/// assembled operator whenever the boundary values of the input vanish.
pub fn apply_full(c: &CoefficientSet, grid: &WaveguideGrid, u: [&[Complex64]; 2]) -> [Vec<Complex64>; 2] {
    let (n1, nn) = (grid.n1(), grid.nn());
    let (h1, hn) = (grid.h1(), grid.hn());
    let (ih1, ihn) = (1.0 / (h1 * h1), 1.0 / (hn * hn));
    let a1 = &c.a[0];
    let an = &c.a[1];
    let zero = Complex64::new(0.0, 0.0);
    let at = |f: &[Complex64], i: isize, j: isize| -> Complex64 {
        if i < 0 || j < 0 || i >= n1 as isize || j >= nn as isize {
            zero
        } else {
            f[j as usize * n1 + i as usize]
        }
    };
    let coef = |f: &[f64], i: isize, j: isize, fallback: f64| -> f64 {
        if i < 0 || j < 0 || i >= n1 as isize || j >= nn as isize {
            fallback
        } else {
            f[j as usize * n1 + i as usize]
        }
    };

    let mut out = [vec![zero; grid.len()], vec![zero; grid.len()]];
    for comp in 0..2 {
        let q = if comp == 0 { &c.q_plus } else { &c.q_minus };
        let sgn = if comp == 0 { 1.0 } else { -1.0 };
        let me = u[comp];
        let other = u[1 - comp];
        for j in 0..nn {
            for i in 0..n1 {
                let k = grid.idx(i, j);
                let (ii, jj) = (i as isize, j as isize);
                let lap = (2.0 * me[k] - at(me, ii - 1, jj) - at(me, ii + 1, jj)) * ih1
                    + (2.0 * me[k] - at(me, ii, jj - 1) - at(me, ii, jj + 1)) * ihn;
                let s = at(other, ii + 1, jj) * skew(a1[k], coef(a1, ii + 1, jj, a1[k]), h1, true)
                    + at(other, ii - 1, jj) * skew(a1[k], coef(a1, ii - 1, jj, a1[k]), h1, false)
                    + at(other, ii, jj + 1) * skew(an[k], coef(an, ii, jj + 1, an[k]), hn, true)
                    + at(other, ii, jj - 1) * skew(an[k], coef(an, ii, jj - 1, an[k]), hn, false);
                out[comp][k] = lap + me[k] * q[k] + other[k] * c.p[k] + s * sgn;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::stream_function_field;
    use crate::grid::CrossSection;
    use approx::assert_relative_eq;

    fn debug_grid() -> WaveguideGrid {
        WaveguideGrid::new(CrossSection::interval(1.0, 17).unwrap(), 2.0, 33, 1.0, 8).unwrap()
    }

    fn stream_coeffs(grid: &WaveguideGrid) -> CoefficientSet {
        let mut c = CoefficientSet::zeros(grid);
        let psi = grid.sample(|x1, xn| (3.0 * x1).sin() * (1.0 + xn * xn).recip() * x1);
        c.a = stream_function_field(&psi, grid);
        c.p = grid.sample(|x1, xn| 0.3 * (x1 + xn).cos());
        c.q_plus = grid.sample(|x1, _| x1);
        c.q_minus = grid.sample(|_, xn| -0.5 * xn);
        c
    }

    #[test]
    fn symmetric_for_stream_function_coupling() {
        let g = debug_grid();
        let h = assemble_hamiltonian(&stream_coeffs(&g), &g).unwrap();
        assert!(h.matrix.symmetry_defect() <= 1e-12);
    }

    #[test]
    fn symmetric_even_for_non_solenoidal_coupling() {
        let g = debug_grid();
        let mut c = CoefficientSet::zeros(&g);
        c.a = vec![g.sample(|x1, _| x1 * x1), g.sample(|_, xn| xn.sin())];
        let h = assemble_hamiltonian(&c, &g).unwrap();
        assert!(h.matrix.symmetry_defect() <= 1e-12);
    }

    #[test]
    fn pure_coupling_term_is_multiplication() {
        let g = debug_grid();
        let mut c = CoefficientSet::zeros(&g);
        c.p = g.sample(|x1, xn| x1 - xn);
        let h = assemble_hamiltonian(&c, &g).unwrap();
        let l = h.layout;
        for j in 1..g.nn() - 1 {
            for i in 1..g.n1() - 1 {
                let (rp, rm) = (l.index(0, i, j), l.index(1, i, j));
                assert_eq!(h.matrix.get(rp, rm), c.p[g.idx(i, j)]);
                assert_eq!(h.matrix.get(rm, rp), c.p[g.idx(i, j)]);
                // No other cross-component entries.
                let cross = (h.matrix.row_ptr[rp]..h.matrix.row_ptr[rp + 1])
                    .filter(|&p| h.matrix.col[p] >= l.block())
                    .count();
                assert_eq!(cross, usize::from(c.p[g.idx(i, j)] != 0.0));
            }
        }
    }

    /// Lowest eigenvalue of a symmetric matrix by shifted inverse-free power iteration.
    fn lowest_eigenvalue(m: &CsrMatrix) -> f64 {
        let shift = m.gershgorin_radius();
        let mut x: Vec<Complex64> = (0..m.dim).map(|k| Complex64::new(1.0 + (k % 7) as f64 * 1e-3, 0.0)).collect();
        let mut y = vec![Complex64::new(0.0, 0.0); m.dim];
        let mut lambda = 0.0;
        for _ in 0..20000 {
            m.matvec(&x, &mut y);
            // (shift − H) x
            for (yk, xk) in y.iter_mut().zip(&x) {
                *yk = *xk * shift - *yk;
            }
            let norm = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            let rq: f64 = y.iter().zip(&x).map(|(a, b)| (a * b.conj()).re).sum::<f64>()
                / x.iter().map(|v| v.norm_sqr()).sum::<f64>();
            lambda = shift - rq;
            for (xk, yk) in x.iter_mut().zip(&y) {
                *xk = *yk / norm;
            }
        }
        lambda
    }

    #[test]
    fn lowest_laplacian_eigenvalue_matches_box() {
        // Exact discrete eigenvalue, which converges to π²(1/ℓ² + 1/(2X)²) at O(h²).
        let exact = std::f64::consts::PI.powi(2) * (1.0 + 0.25);
        let mut errs = vec![];
        for (n1, nn) in [(9, 9), (17, 17)] {
            let g = WaveguideGrid::new(CrossSection::interval(1.0, n1).unwrap(), 1.0, nn, 1.0, 4).unwrap();
            let h = assemble_hamiltonian(&CoefficientSet::zeros(&g), &g).unwrap();
            let lam = lowest_eigenvalue(&h.matrix);
            let disc = |n: usize, len: f64| {
                let hh = len / (n - 1) as f64;
                (2.0 - 2.0 * (std::f64::consts::PI * hh / len).cos()) / (hh * hh)
            };
            assert_relative_eq!(lam, disc(n1, 1.0) + disc(nn, 2.0), max_relative = 1e-8);
            errs.push((lam - exact).abs());
        }
        let ratio = errs[0] / errs[1];
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn stencil_matches_assembled_operator_on_interior() {
        let g = debug_grid();
        let c = stream_coeffs(&g);
        let h = assemble_hamiltonian(&c, &g).unwrap();
        let l = h.layout;
        let mut full = [vec![Complex64::new(0.0, 0.0); g.len()], vec![Complex64::new(0.0, 0.0); g.len()]];
        let mut x = vec![Complex64::new(0.0, 0.0); l.dim()];
        for comp in 0..2 {
            for j in 1..g.nn() - 1 {
                for i in 1..g.n1() - 1 {
                    let v = Complex64::new((i * 3 + j + comp) as f64 * 0.01, (i as f64 - j as f64) * 0.02);
                    full[comp][g.idx(i, j)] = v;
                    x[l.index(comp, i, j)] = v;
                }
            }
        }
        let mut y = vec![Complex64::new(0.0, 0.0); l.dim()];
        h.matrix.matvec(&x, &mut y);
        let out = apply_full(&c, &g, [&full[0], &full[1]]);
        for comp in 0..2 {
            for j in 1..g.nn() - 1 {
                for i in 1..g.n1() - 1 {
                    let d = out[comp][g.idx(i, j)] - y[l.index(comp, i, j)];
                    assert!(d.norm() < 1e-10);
                }
            }
        }
    }
}
