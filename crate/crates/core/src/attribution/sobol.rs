//! Saltelli design and Sobol sensitivity indices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sobol_seq::SobolSequence;
use crate::error::{Error, Result};
use crate::models::Predictor;
use crate::stats::quantile;

/// Output variance below this is treated as a constant model.
pub const CONSTANT_VARIANCE_TOL: f64 = 1e-12;

/// Base matrices `A`, `B` and the hybrids `A_B^(i)` (A with column i from B),
/// all row-major with `n_base` rows and `p` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SaltelliDesign {
    pub p: usize,
    pub n_base: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub ab: Vec<Vec<f64>>,
}

impl SaltelliDesign {
    pub fn total_rows(&self) -> usize {
        self.n_base * (self.p + 2)
    }

    pub fn matrices(&self) -> impl Iterator<Item = &[f64]> {
        [self.a.as_slice(), self.b.as_slice()]
            .into_iter()
            .chain(self.ab.iter().map(Vec::as_slice))
    }
}

/// Draws `A` and `B` from the first and second halves of a `2p`-dimensional
/// Sobol sequence scaled to `bounds`. `scramble_seed` applies a digital shift;
/// `None` keeps the plain sequence whose first point is the box midpoint.
pub fn sobol_design(bounds: &[(f64, f64)], n_base: usize, scramble_seed: Option<u64>) -> Result<SaltelliDesign> {
    let p = bounds.len();
    if p == 0 {
        return Err(Error::InvalidParam("sobol design needs at least one input".into()));
    }
    if let Some((j, _)) = bounds
        .iter()
        .enumerate()
        .find(|(_, (lo, hi))| !(lo.is_finite() && hi.is_finite() && lo < hi))
    {
        return Err(Error::InvalidParam(format!("degenerate bounds for input {j}")));
    }
    if n_base < 2 || !n_base.is_power_of_two() {
        return Err(Error::InvalidParam(format!("n_base must be a power of two >= 2, got {n_base}")));
    }
    let mut seq = match scramble_seed {
        Some(s) => SobolSequence::scrambled(2 * p, s)?,
        None => SobolSequence::new(2 * p)?,
    };
    let mut a = Vec::with_capacity(n_base * p);
    let mut b = Vec::with_capacity(n_base * p);
    for _ in 0..n_base {
        let u = seq.next_point();
        for (j, &(lo, hi)) in bounds.iter().enumerate() {
            a.push(lo + (hi - lo) * u[j]);
            b.push(lo + (hi - lo) * u[p + j]);
        }
    }
    let ab = (0..p)
        .map(|i| {
            let mut m = a.clone();
            for r in 0..n_base {
                m[r * p + i] = b[r * p + i];
            }
            m
        })
        .collect();
    Ok(SaltelliDesign { p, n_base, a, b, ab })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolIndices {
    pub s1: Vec<f64>,
    pub st: Vec<f64>,
    pub s1_ci_low: Vec<f64>,
    pub s1_ci_high: Vec<f64>,
    pub st_ci_low: Vec<f64>,
    pub st_ci_high: Vec<f64>,
    pub n_base: usize,
    pub evals: usize,
    pub n_bootstrap: usize,
    /// Set when the output variance fell below [`CONSTANT_VARIANCE_TOL`];
    /// every index is then reported as 0.
    pub constant_model: bool,
}

struct Outputs<'a> {
    fa: &'a [f64],
    fb: &'a [f64],
    fab: &'a [Vec<f64>],
}

/// Point estimates over the base-row subset `idx` (with repetition).
///
/// - `V = Var[f]` over the union of the `A` and `B` evaluations (1/N form)
/// - `S1_i = (1/n) sum f(B)_j (f(A_B^i)_j - f(A)_j) / V`
/// - `ST_i = (1/2n) sum (f(A)_j - f(A_B^i)_j)^2 / V`
fn estimate(o: &Outputs, idx: &[usize]) -> Option<(Vec<f64>, Vec<f64>)> {
    let n = idx.len() as f64;
    let mean = idx.iter().map(|&j| o.fa[j] + o.fb[j]).sum::<f64>() / (2.0 * n);
    let var = idx
        .iter()
        .map(|&j| (o.fa[j] - mean).powi(2) + (o.fb[j] - mean).powi(2))
        .sum::<f64>()
        / (2.0 * n);
    if !(var >= CONSTANT_VARIANCE_TOL) {
        return None;
    }
    let mut s1 = Vec::with_capacity(o.fab.len());
    let mut st = Vec::with_capacity(o.fab.len());
    for fab in o.fab {
        let (mut first, mut total) = (0.0, 0.0);
        for &j in idx {
            first += o.fb[j] * (fab[j] - o.fa[j]);
            total += (o.fa[j] - fab[j]).powi(2);
        }
        s1.push(first / n / var);
        st.push(total / (2.0 * n) / var);
    }
    Some((s1, st))
}

/// Sobol first-order and total indices with percentile bootstrap intervals
/// over resampled base rows. Bounds are widened to contain the point
/// estimate when the percentile interval misses it.
pub fn sobol_indices(
    model: &dyn Predictor,
    design: &SaltelliDesign,
    n_bootstrap: usize,
    seed: u64,
) -> Result<SobolIndices> {
    if model.n_features() != design.p {
        return Err(Error::DimensionMismatch(format!(
            "model takes {} inputs, design has {}",
            model.n_features(),
            design.p
        )));
    }
    let fa = model.predict_block(&design.a);
    let fb = model.predict_block(&design.b);
    let fab: Vec<Vec<f64>> = design.ab.iter().map(|m| model.predict_block(m)).collect();
    let outputs = Outputs {
        fa: &fa,
        fb: &fb,
        fab: &fab,
    };
    let p = design.p;
    let n = design.n_base;
    let all: Vec<usize> = (0..n).collect();
    let Some((s1, st)) = estimate(&outputs, &all) else {
        let z = vec![0.0; p];
        return Ok(SobolIndices {
            s1: z.clone(),
            st: z.clone(),
            s1_ci_low: z.clone(),
            s1_ci_high: z.clone(),
            st_ci_low: z.clone(),
            st_ci_high: z,
            n_base: n,
            evals: design.total_rows(),
            n_bootstrap,
            constant_model: true,
        });
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut boot_s1: Vec<Vec<f64>> = vec![Vec::with_capacity(n_bootstrap); p];
    let mut boot_st: Vec<Vec<f64>> = vec![Vec::with_capacity(n_bootstrap); p];
    let mut idx = vec![0usize; n];
    for _ in 0..n_bootstrap {
        idx.iter_mut().for_each(|k| *k = rng.random_range(0..n));
        if let Some((b1, bt)) = estimate(&outputs, &idx) {
            for i in 0..p {
                boot_s1[i].push(b1[i]);
                boot_st[i].push(bt[i]);
            }
        }
    }
    let interval = |samples: &mut Vec<f64>, point: f64| -> (f64, f64) {
        if samples.is_empty() {
            return (point, point);
        }
        samples.sort_by(f64::total_cmp);
        let lo = quantile(samples, 0.025).min(point);
        let hi = quantile(samples, 0.975).max(point);
        (lo, hi)
    };
    let (mut s1_lo, mut s1_hi, mut st_lo, mut st_hi) = (vec![], vec![], vec![], vec![]);
    for i in 0..p {
        let (l, h) = interval(&mut boot_s1[i], s1[i]);
        s1_lo.push(l);
        s1_hi.push(h);
        let (l, h) = interval(&mut boot_st[i], st[i]);
        st_lo.push(l);
        st_hi.push(h);
    }
    Ok(SobolIndices {
        s1,
        st,
        s1_ci_low: s1_lo,
        s1_ci_high: s1_hi,
        st_ci_low: st_lo,
        st_ci_high: st_hi,
        n_base: n,
        evals: design.total_rows(),
        n_bootstrap,
        constant_model: false,
    })
}
