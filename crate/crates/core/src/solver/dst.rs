//! Exact inverse of `I + iτ(−Δ_h + σ)` on the interior of a Dirichlet rectangle,
//! diagonalized by the type-I discrete sine transform in both directions.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::hamiltonian::InteriorLayout;

/// DST-I of length m computed through a complex FFT of length 2(m + 1).
struct SineTransform {
    m: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl SineTransform {
    fn new(planner: &mut FftPlanner<f64>, m: usize) -> Self {
        SineTransform {
            m,
            fft: planner.plan_fft_forward(2 * (m + 1)),
        }
    }

    /// X_k = Σ_j x_j sin(π j k / (m+1)), j, k = 1..m, in place. `work` has length 2(m+1).
    fn apply(&self, data: &mut [Complex64], work: &mut [Complex64], scratch: &mut [Complex64]) {
        let m = self.m;
        let zero = Complex64::new(0.0, 0.0);
        work[0] = zero;
        work[m + 1] = zero;
        for j in 0..m {
            work[j + 1] = data[j];
            work[2 * (m + 1) - 1 - j] = -data[j];
        }
        self.fft.process_with_scratch(work, scratch);
        // FFT of the odd extension equals −2i · DST.
        let half_i = Complex64::new(0.0, 0.5);
        for k in 0..m {
            data[k] = work[k + 1] * half_i;
        }
    }
}

pub struct DirichletPreconditioner {
    layout: InteriorLayout,
    transverse: SineTransform,
    axial: SineTransform,
    /// 1 / (1 + iτ(λ_jk + σ)), times the DST-I normalization (2/(m1+1))(2/(mn+1)).
    inverse_symbol: Vec<Complex64>,
}

impl DirichletPreconditioner {
    pub fn new(layout: InteriorLayout, h1: f64, hn: f64, tau: f64, shift: f64) -> Self {
        let mut planner = FftPlanner::new();
        let transverse = SineTransform::new(&mut planner, layout.m1);
        let axial = SineTransform::new(&mut planner, layout.mn);
        let eig = |k: usize, m: usize, h: f64| {
            let theta = std::f64::consts::PI * (k + 1) as f64 / (m + 1) as f64;
            (2.0 - 2.0 * theta.cos()) / (h * h)
        };
        let norm = 4.0 / ((layout.m1 + 1) as f64 * (layout.mn + 1) as f64);
        let mut inverse_symbol = Vec::with_capacity(layout.block());
        for kn in 0..layout.mn {
            let en = eig(kn, layout.mn, hn);
            for k1 in 0..layout.m1 {
                let lam = eig(k1, layout.m1, h1) + en + shift;
                inverse_symbol.push(Complex64::new(norm, 0.0) / Complex64::new(1.0, tau * lam));
            }
        }
        DirichletPreconditioner {
            layout,
            transverse,
            axial,
            inverse_symbol,
        }
    }

    /// Overwrites `x` (both components) with P⁻¹x.
    pub fn solve_in_place(&self, x: &mut [Complex64]) {
        let block = self.layout.block();
        for comp in x.chunks_mut(block) {
            self.transform(comp);
            for (v, s) in comp.iter_mut().zip(&self.inverse_symbol) {
                *v *= s;
            }
            self.transform(comp);
        }
    }

    /// Two-dimensional DST-I (unnormalized; it is its own inverse up to scale).
    fn transform(&self, data: &mut [Complex64]) {
        let (m1, mn) = (self.layout.m1, self.layout.mn);
        let zero = Complex64::new(0.0, 0.0);
        let mut work = vec![zero; 2 * (m1.max(mn) + 1)];
        let scratch_len = self
            .transverse
            .fft
            .get_inplace_scratch_len()
            .max(self.axial.fft.get_inplace_scratch_len());
        let mut scratch = vec![zero; scratch_len];
        for row in data.chunks_mut(m1) {
            let w = &mut work[..2 * (m1 + 1)];
            let s = &mut scratch[..self.transverse.fft.get_inplace_scratch_len()];
            self.transverse.apply(row, w, s);
        }
        let mut line = vec![zero; mn];
        for i in 0..m1 {
            for j in 0..mn {
                line[j] = data[j * m1 + i];
            }
            let w = &mut work[..2 * (mn + 1)];
            let s = &mut scratch[..self.axial.fft.get_inplace_scratch_len()];
            self.axial.apply(&mut line, w, s);
            for j in 0..mn {
                data[j * m1 + i] = line[j];
            }
        }
    }
}
