use num_complex::Complex64;

use super::SpectralField;
use crate::exec;

/// Exact pointwise evaluator for a real spectral field.
///
/// Uses Hermitian symmetry to sum only over `k₁ ∈ {0, …, N/2-1}` (doubling
/// the `k₁ > 0` rows) plus the unpaired `k₁ = -N/2` row, and takes the real
/// part. At lattice points this reproduces the inverse FFT; between them it
/// is the trigonometric interpolant with Nyquist modes read as cosines.
#[derive(Clone, Debug)]
pub struct PointEvaluator {
    n: usize,
    rows: Vec<Row>,
    k2: Vec<f64>,
    re: [Vec<f64>; 2],
    im: [Vec<f64>; 2],
}

#[derive(Clone, Copy, Debug)]
struct Row {
    k1: f64,
    weight: f64,
}

impl PointEvaluator {
    pub fn new(u: &SpectralField) -> Self {
        let grid = u.grid();
        let n = grid.n();
        let k2 = (0..n).map(|i| grid.wavenumber(i) as f64).collect();
        let mut rows = Vec::new();
        let mut re = [Vec::new(), Vec::new()];
        let mut im = [Vec::new(), Vec::new()];
        for i1 in 0..n {
            let k1 = grid.wavenumber(i1);
            let weight = if k1 == 0 || i1 == n / 2 {
                1.0
            } else if k1 > 0 {
                2.0
            } else {
                continue;
            };
            let range = i1 * n..(i1 + 1) * n;
            let row = [&u.component(0)[range.clone()], &u.component(1)[range]];
            if row.iter().all(|c| c.iter().all(|z| *z == Complex64::new(0.0, 0.0))) {
                continue;
            }
            rows.push(Row {
                k1: k1 as f64,
                weight,
            });
            for c in 0..2 {
                re[c].extend(row[c].iter().map(|z| z.re));
                im[c].extend(row[c].iter().map(|z| z.im));
            }
        }
        PointEvaluator {
            n,
            rows,
            k2,
            re,
            im,
        }
    }

    /// `u(x)` for a single point.
    pub fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        let n = self.n;
        let mut c2 = vec![0.0; n];
        let mut s2 = vec![0.0; n];
        for j in 0..n {
            let (s, c) = (self.k2[j] * x[1]).sin_cos();
            c2[j] = c;
            s2[j] = s;
        }
        let mut out = [0.0; 2];
        for (r, row) in self.rows.iter().enumerate() {
            let off = r * n;
            let (s1, c1) = (row.k1 * x[0]).sin_cos();
            for comp in 0..2 {
                let re = &self.re[comp][off..off + n];
                let im = &self.im[comp][off..off + n];
                let (sr, si) = dot(re, im, &c2, &s2);
                out[comp] += row.weight * (c1 * sr - s1 * si);
            }
        }
        out
    }

    /// Evaluates all points, in parallel when enabled.
    pub fn eval_many(&self, points: &[[f64; 2]]) -> Vec<[f64; 2]> {
        exec::map(points, |&p| self.eval(p))
    }
}

/// `Σ_j (re_j + i im_j)(c_j + i s_j)` with four independent lanes so the
/// loop vectorises.
#[inline]
fn dot(re: &[f64], im: &[f64], c: &[f64], s: &[f64]) -> (f64, f64) {
    const L: usize = 4;
    let mut ar = [0.0; L];
    let mut ai = [0.0; L];
    let chunks = re.len() / L;
    for k in 0..chunks {
        let b = k * L;
        for l in 0..L {
            let (x, y, cc, ss) = (re[b + l], im[b + l], c[b + l], s[b + l]);
            ar[l] += x * cc - y * ss;
            ai[l] += x * ss + y * cc;
        }
    }
    let mut sr = (ar[0] + ar[1]) + (ar[2] + ar[3]);
    let mut si = (ai[0] + ai[1]) + (ai[2] + ai[3]);
    for j in chunks * L..re.len() {
        sr += re[j] * c[j] - im[j] * s[j];
        si += re[j] * s[j] + im[j] * c[j];
    }
    (sr, si)
}
