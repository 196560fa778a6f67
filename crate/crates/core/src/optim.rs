//! Fixed-step L-BFGS and the windowed relative-change convergence monitor.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::scalar::Real;

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

/// L-BFGS with a fixed learning rate and no line search.
#[derive(Clone, Debug)]
pub struct Lbfgs<T> {
    pub lr: T,
    pub memory: usize,
    s_hist: VecDeque<Vec<T>>,
    y_hist: VecDeque<Vec<T>>,
    /// Parameters and gradient of the last finite evaluation, and the
    /// direction taken from there.
    last: Option<(Vec<T>, Vec<T>, Vec<T>)>,
    pub iterations: usize,
    pub discarded_pairs: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct StepInfo<T> {
    /// Loss at the parameters the step started from.
    pub loss: T,
    pub grad_norm: T,
    /// ⟨d, g⟩ of the direction taken (positive for descent).
    pub directional: T,
    pub retried: bool,
}

impl<T: Real> Lbfgs<T> {
    pub fn new(lr: T, memory: usize) -> Result<Self> {
        if !(lr > T::zero()) || !lr.is_finite() {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        if memory == 0 {
            return Err(Error::Config("L-BFGS memory must be at least 1".into()));
        }
        Ok(Self {
            lr,
            memory,
            s_hist: VecDeque::new(),
            y_hist: VecDeque::new(),
            last: None,
            iterations: 0,
            discarded_pairs: 0,
        })
    }

    /// Forgets the curvature history (kept: learning rate).
    pub fn reset(&mut self) {
        self.s_hist.clear();
        self.y_hist.clear();
        self.last = None;
        self.iterations = 0;
    }

    pub fn history_len(&self) -> usize {
        self.s_hist.len()
    }

    /// Two-loop recursion: approximate inverse Hessian times `grad`.
    pub fn direction(&self, grad: &[T]) -> Vec<T> {
        let mut q = grad.to_vec();
        let k = self.s_hist.len();
        let mut alpha = vec![T::zero(); k];
        let rho: Vec<T> = self.s_hist.iter().zip(&self.y_hist).map(|(s, y)| T::one() / dot(s, y)).collect();
        for i in (0..k).rev() {
            alpha[i] = rho[i] * dot(&self.s_hist[i], &q);
            for (qj, yj) in q.iter_mut().zip(&self.y_hist[i]) {
                *qj = *qj - alpha[i] * *yj;
            }
        }
        if let (Some(s), Some(y)) = (self.s_hist.back(), self.y_hist.back()) {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v = *v * gamma);
        }
        for i in 0..k {
            let beta = rho[i] * dot(&self.y_hist[i], &q);
            for (qj, sj) in q.iter_mut().zip(&self.s_hist[i]) {
                *qj = *qj + (alpha[i] - beta) * *sj;
            }
        }
        q
    }

    fn push_pair(&mut self, s: Vec<T>, y: Vec<T>) {
        let sy = dot(&s, &y);
        if !(sy > T::zero()) || !sy.is_finite() {
            self.discarded_pairs += 1;
            return;
        }
        if self.s_hist.len() == self.memory {
            self.s_hist.pop_front();
            self.y_hist.pop_front();
        }
        self.s_hist.push_back(s);
        self.y_hist.push_back(y);
    }

    /// Evaluates `eval` at `params`, updates the history and moves `params`
    /// by `-lr · d`.
    ///
    /// A non-finite evaluation halves the learning rate and retries once from
    /// the last finite point; a second failure is a divergence error.
    pub fn step<F>(&mut self, params: &mut Vec<T>, mut eval: F) -> Result<StepInfo<T>>
    where
        F: FnMut(&[T]) -> Result<(T, Vec<T>)>,
    {
        let finite = |r: &Result<(T, Vec<T>)>| match r {
            Ok((l, g)) => l.is_finite() && g.iter().all(|v| v.is_finite()),
            Err(_) => false,
        };
        let mut retried = false;
        let mut res = eval(params);
        if !finite(&res) {
            let Some((x_prev, _, d_prev)) = &self.last else {
                return Err(divergence(res, "at the initial parameters"));
            };
            self.lr = self.lr * T::lit(0.5);
            *params = x_prev.iter().zip(d_prev).map(|(x, d)| *x - self.lr * *d).collect();
            retried = true;
            res = eval(params);
            if !finite(&res) {
                return Err(divergence(res, "after halving the learning rate"));
            }
        }
        let (loss, grad) = res.expect("checked finite");
        if grad.len() != params.len() {
            return Err(Error::Config("gradient length does not match parameters".into()));
        }
        if let Some((x_prev, g_prev, _)) = self.last.take() {
            let s = params.iter().zip(&x_prev).map(|(a, b)| *a - *b).collect();
            let y = grad.iter().zip(&g_prev).map(|(a, b)| *a - *b).collect();
            self.push_pair(s, y);
        }
        let d = self.direction(&grad);
        let directional = dot(&d, &grad);
        let x_old = params.clone();
        for (p, di) in params.iter_mut().zip(&d) {
            *p = *p - self.lr * *di;
        }
        let grad_norm = dot(&grad, &grad).sqrt();
        self.last = Some((x_old, grad, d));
        self.iterations += 1;
        Ok(StepInfo { loss, grad_norm, directional, retried })
    }
}

fn divergence<T: Real>(r: Result<(T, Vec<T>)>, when: &str) -> Error {
    match r {
        Err(Error::Divergence(m)) => Error::Divergence(format!("{m} {when}")),
        Err(e) => e,
        Ok(_) => Error::Divergence(format!("non-finite loss or gradient {when}")),
    }
}

/// Converged when the means of the last two windows of `patience` losses
/// differ by at most `tol` relative to the most recent window.
#[derive(Clone, Debug)]
pub struct ConvergenceMonitor<T> {
    pub patience: usize,
    pub tol: T,
    history: VecDeque<T>,
}

impl<T: Real> ConvergenceMonitor<T> {
    pub fn new(patience: usize, tol: T) -> Result<Self> {
        if patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if !(tol >= T::zero()) {
            return Err(Error::Config(format!("tolerance must be non-negative, got {tol}")));
        }
        Ok(Self { patience, tol, history: VecDeque::with_capacity(2 * patience) })
    }

    pub fn push(&mut self, loss: T) {
        if self.history.len() == 2 * self.patience {
            self.history.pop_front();
        }
        self.history.push_back(loss);
    }

    pub fn reset(&mut self) {
        self.history.clear();
    }

    /// Relative change between window means, if enough samples exist.
    pub fn relative_change(&self) -> Option<T> {
        let n = self.patience;
        if self.history.len() < 2 * n {
            return None;
        }
        let nn = T::of_usize(n);
        let prior: T = self.history.iter().take(n).copied().sum::<T>() / nn;
        let last: T = self.history.iter().skip(n).copied().sum::<T>() / nn;
        let diff = (last - prior).abs();
        Some(if last.abs() < T::lit(1e-300) { diff } else { diff / last.abs() })
    }

    pub fn check_converged(&self) -> bool {
        self.relative_change().is_some_and(|r| r <= self.tol)
    }
}

#[derive(Clone, Debug)]
pub struct MinimizeReport<T> {
    pub iterations: usize,
    pub converged: bool,
    pub losses: Vec<T>,
}

/// Runs L-BFGS steps until the monitor reports convergence or `max_iters`
/// steps have been taken.
pub fn minimize<T, F>(
    opt: &mut Lbfgs<T>,
    monitor: &mut ConvergenceMonitor<T>,
    params: &mut Vec<T>,
    max_iters: usize,
    mut eval: F,
) -> Result<MinimizeReport<T>>
where
    T: Real,
    F: FnMut(&[T]) -> Result<(T, Vec<T>)>,
{
    let mut losses = Vec::new();
    let mut converged = false;
    for _ in 0..max_iters {
        let info = opt.step(params, &mut eval)?;
        losses.push(info.loss);
        monitor.push(info.loss);
        if monitor.check_converged() || info.grad_norm == T::zero() {
            converged = true;
            break;
        }
    }
    Ok(MinimizeReport { iterations: losses.len(), converged, losses })
}
