//! Two-dimensional complex FFTs on square grids.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::exec;

/// Rows handed to one worker at a time.
const ROWS_PER_TASK: usize = 16;

pub(crate) struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    /// Unnormalised forward transform, `Σ_x f(x) e^{-ik·x}`, in place.
    pub(crate) fn forward(&self, data: &mut [Complex64]) {
        self.run(&self.forward, data);
    }

    /// Unnormalised inverse transform, `Σ_k f̂(k) e^{ik·x}`, in place.
    pub(crate) fn inverse(&self, data: &mut [Complex64]) {
        self.run(&self.inverse, data);
    }

    fn run(&self, plan: &Arc<dyn Fft<f64>>, data: &mut [Complex64]) {
        let n = self.n;
        assert_eq!(data.len(), n * n);
        self.rows(plan, data);
        transpose(data, n);
        self.rows(plan, data);
        transpose(data, n);
    }

    fn rows(&self, plan: &Arc<dyn Fft<f64>>, data: &mut [Complex64]) {
        let scratch_len = plan.get_inplace_scratch_len();
        exec::for_each_chunk_mut(data, self.n * ROWS_PER_TASK, |_, chunk| {
            let mut scratch = vec![Complex64::new(0.0, 0.0); scratch_len];
            plan.process_with_scratch(chunk, &mut scratch);
        });
    }
}

fn transpose(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// Shared plan for an `n × n` grid.
pub(crate) fn plan(n: usize) -> Arc<Fft2> {
    static PLANS: OnceLock<Mutex<HashMap<usize, Arc<Fft2>>>> = OnceLock::new();
    let mut plans = PLANS
        .get_or_init(Default::default)
        .lock()
        .unwrap_or_else(|e| e.into_inner());
    plans.entry(n).or_insert_with(|| Arc::new(Fft2::new(n))).clone()
}
