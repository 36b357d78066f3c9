//! Binary L2-regularized logistic regression.
//!
//! Objective `J(w, b) = Σ log(1 + exp(-y·(w·x + b))) + ‖w‖²/(2C)` with
//! `y ∈ {-1, +1}` (failure = +1) and an unpenalized bias. Minimized by
//! truncated Newton: conjugate gradients on Hessian-vector products, then
//! a backtracking line search, started from zero.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::linalg::{self, Matrix};
use crate::signal::Label;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticConfig {
    /// Inverse regularization strength.
    pub reg_c: f64,
    /// Bound on the gradient infinity norm.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self { reg_c: 1.0, tol: 1e-6, max_iter: 500 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub reg_c: f64,
    pub converged: bool,
    pub final_grad_norm: f64,
    pub iterations: usize,
}

/// Parameters at which the objective is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub weights: Vec<f64>,
    pub bias: f64,
}

/// Design matrix (rows are samples) with ±1 targets.
#[derive(Debug, Clone)]
pub struct Problem {
    x: Matrix,
    y: Vec<f64>,
    reg_c: f64,
}

/// `log(1 + exp(-z))` without overflow.
fn log1pexp_neg(z: f64) -> f64 {
    if z > 0.0 {
        libm::log1p(libm::exp(-z))
    } else {
        -z + libm::log1p(libm::exp(z))
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

impl Problem {
    pub fn new(features: &[FeatureVector], labels: &[Label], reg_c: f64) -> Result<Self> {
        let rows: Vec<&[f64]> = features.iter().map(|f| f.values.as_slice()).collect();
        Self::from_rows(&rows, labels, reg_c)
    }

    pub fn from_rows(rows: &[&[f64]], labels: &[Label], reg_c: f64) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::DimMismatch { expected: rows.len(), found: labels.len() });
        }
        if !(reg_c > 0.0) {
            return Err(Error::InsufficientData("regularization C must be positive"));
        }
        let d = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::DimMismatch { expected: d, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { x: Matrix::from_vec(rows.len(), d, data)?, y: labels.iter().map(|l| l.sign()).collect(), reg_c })
    }

    pub fn n_samples(&self) -> usize {
        self.x.rows()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    fn margins(&self, p: &Point) -> Vec<f64> {
        (0..self.n_samples()).map(|i| linalg::dot(self.x.row(i), &p.weights) + p.bias).collect()
    }

    pub fn objective(&self, p: &Point) -> f64 {
        let m = self.margins(p);
        let loss: f64 = m.iter().zip(&self.y).map(|(&m, &y)| log1pexp_neg(y * m)).sum();
        loss + linalg::dot(&p.weights, &p.weights) / (2.0 * self.reg_c)
    }

    /// Analytic gradient as `(∂w, ∂b)`.
    pub fn gradient(&self, p: &Point) -> (Vec<f64>, f64) {
        let m = self.margins(p);
        self.gradient_from_margins(p, &m)
    }

    fn gradient_from_margins(&self, p: &Point, m: &[f64]) -> (Vec<f64>, f64) {
        let mut gw: Vec<f64> = p.weights.iter().map(|w| w / self.reg_c).collect();
        let mut gb = 0.0;
        for i in 0..self.n_samples() {
            let r = -self.y[i] * sigmoid(-self.y[i] * m[i]);
            gb += r;
            for (g, x) in gw.iter_mut().zip(self.x.row(i)) {
                *g += r * x;
            }
        }
        (gw, gb)
    }

    /// Hessian-vector product for curvature weights `s_i = σ(m_i)(1-σ(m_i))`.
    fn hess_vec(&self, s: &[f64], vw: &[f64], vb: f64) -> (Vec<f64>, f64) {
        let mut hw: Vec<f64> = vw.iter().map(|v| v / self.reg_c).collect();
        let mut hb = 0.0;
        for i in 0..self.n_samples() {
            let xi = self.x.row(i);
            let t = s[i] * (linalg::dot(xi, vw) + vb);
            hb += t;
            for (h, x) in hw.iter_mut().zip(xi) {
                *h += t * x;
            }
        }
        (hw, hb)
    }
}

fn inf_norm(gw: &[f64], gb: f64) -> f64 {
    gw.iter().fold(gb.abs(), |m, g| m.max(g.abs()))
}

/// Conjugate gradients for `H·p = -g`, stopped at relative residual `eta`.
fn newton_direction(prob: &Problem, s: &[f64], gw: &[f64], gb: f64, eta: f64) -> (Vec<f64>, f64) {
    let d = gw.len();
    let mut pw = vec![0.0; d];
    let mut pb = 0.0;
    let mut rw: Vec<f64> = gw.iter().map(|g| -g).collect();
    let mut rb = -gb;
    let mut dw = rw.clone();
    let mut db = rb;
    let mut rr = linalg::dot(&rw, &rw) + rb * rb;
    let stop = eta * eta * rr;
    for _ in 0..(d + 1).min(250) {
        if rr <= stop {
            break;
        }
        let (hw, hb) = prob.hess_vec(s, &dw, db);
        let curv = linalg::dot(&dw, &hw) + db * hb;
        if !(curv > 0.0) {
            break;
        }
        let alpha = rr / curv;
        for k in 0..d {
            pw[k] += alpha * dw[k];
            rw[k] -= alpha * hw[k];
        }
        pb += alpha * db;
        rb -= alpha * hb;
        let rr_new = linalg::dot(&rw, &rw) + rb * rb;
        let beta = rr_new / rr;
        for k in 0..d {
            dw[k] = rw[k] + beta * dw[k];
        }
        db = rb + beta * db;
        rr = rr_new;
    }
    (pw, pb)
}

pub fn fit_problem(prob: &Problem, cfg: &LogisticConfig) -> Result<LogisticModel> {
    let has_pos = prob.y.iter().any(|&y| y > 0.0);
    let has_neg = prob.y.iter().any(|&y| y < 0.0);
    if !(has_pos && has_neg) {
        return Err(Error::DegenerateTrainingSet);
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::InsufficientData("tolerance must be positive"));
    }
    let mut p = Point { weights: vec![0.0; prob.dim()], bias: 0.0 };
    let mut m = prob.margins(&p);
    let mut f = prob.objective(&p);
    let mut iterations = 0;
    let (mut gw, mut gb) = prob.gradient_from_margins(&p, &m);
    let mut gnorm = inf_norm(&gw, gb);
    while gnorm > cfg.tol && iterations < cfg.max_iter {
        iterations += 1;
        let s: Vec<f64> = m
            .iter()
            .map(|&z| {
                let q = sigmoid(z);
                q * (1.0 - q)
            })
            .collect();
        let g2 = libm::sqrt(linalg::dot(&gw, &gw) + gb * gb);
        let eta = libm::fmin(0.5, libm::sqrt(g2));
        let (dw, db) = newton_direction(prob, &s, &gw, gb, eta);
        let slope = linalg::dot(&gw, &dw) + gb * db;
        if !(slope < 0.0) {
            break;
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = Point { weights: p.weights.iter().zip(&dw).map(|(w, d)| w + step * d).collect(), bias: p.bias + step * db };
            let ft = prob.objective(&trial);
            if !ft.is_finite() {
                return Err(Error::NumericalFailure("non-finite logistic objective"));
            }
            if ft <= f + 1e-4 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((next, fnext)) = accepted else { break };
        p = next;
        f = fnext;
        m = prob.margins(&p);
        (gw, gb) = prob.gradient_from_margins(&p, &m);
        gnorm = inf_norm(&gw, gb);
        if !gnorm.is_finite() {
            return Err(Error::NumericalFailure("non-finite logistic gradient"));
        }
    }
    Ok(LogisticModel {
        weights: p.weights,
        bias: p.bias,
        reg_c: prob.reg_c,
        converged: gnorm <= cfg.tol,
        final_grad_norm: gnorm,
        iterations,
    })
}

pub fn fit(features: &[FeatureVector], labels: &[Label], cfg: &LogisticConfig) -> Result<LogisticModel> {
    if features.is_empty() {
        return Err(Error::EmptyInput);
    }
    fit_problem(&Problem::new(features, labels, cfg.reg_c)?, cfg)
}

impl LogisticModel {
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::DimMismatch { expected: self.weights.len(), found: x.len() });
        }
        Ok(linalg::dot(&self.weights, x) + self.bias)
    }

    /// Probability of the failure class.
    pub fn predict_proba(&self, x: &FeatureVector) -> Result<f64> {
        Ok(sigmoid(self.decision(&x.values)?))
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<Label> {
        Ok(if self.predict_proba(x)? >= 0.5 { Label::Failure } else { Label::Success })
    }
}

/// Max over coordinates of `|fd - analytic| / max(1, |fd|, |analytic|)`,
/// with `fd` the central difference of step `h`.
pub fn grad_check(prob: &Problem, p: &Point, h: f64) -> f64 {
    let (gw, gb) = prob.gradient(p);
    let rel = |fd: f64, an: f64| (fd - an).abs() / 1f64.max(fd.abs()).max(an.abs());
    let mut worst = 0.0f64;
    let mut q = p.clone();
    for k in 0..p.weights.len() {
        let w0 = p.weights[k];
        q.weights[k] = w0 + h;
        let fp = prob.objective(&q);
        q.weights[k] = w0 - h;
        let fm = prob.objective(&q);
        q.weights[k] = w0;
        worst = worst.max(rel((fp - fm) / (2.0 * h), gw[k]));
    }
    q.bias = p.bias + h;
    let fp = prob.objective(&q);
    q.bias = p.bias - h;
    let fm = prob.objective(&q);
    worst.max(rel((fp - fm) / (2.0 * h), gb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fv(values: Vec<f64>) -> FeatureVector {
        FeatureVector { values, kind: FeatureKind::BenchmarkWindowed }
    }

    fn blobs(n: usize, sep: f64, seed: u64) -> (Vec<FeatureVector>, Vec<Label>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let l = if i % 2 == 0 { Label::Failure } else { Label::Success };
            let c = sep * l.sign();
            xs.push(fv(vec![c + rng.random::<f64>() - 0.5, c + rng.random::<f64>() - 0.5]));
            ys.push(l);
        }
        (xs, ys)
    }

    #[test]
    fn separable_blobs_fit_perfectly() {
        let (x, y) = blobs(40, 5.0, 1);
        let m = fit(&x, &y, &LogisticConfig::default()).unwrap();
        assert!(m.converged);
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(m.predict(xi).unwrap(), *yi);
        }
        let prob = Problem::new(&x, &y, 1.0).unwrap();
        let (gw, gb) = prob.gradient(&Point { weights: m.weights.clone(), bias: m.bias });
        assert!(inf_norm(&gw, gb) <= 1e-6);
    }

    #[test]
    fn zero_features_give_half() {
        let x = vec![fv(vec![0.0, 0.0]); 4];
        let y = [Label::Success, Label::Failure, Label::Success, Label::Failure];
        let m = fit(&x, &y, &LogisticConfig::default()).unwrap();
        assert_eq!(m.weights, vec![0.0, 0.0]);
        assert_eq!(m.bias, 0.0);
        assert_eq!(m.predict_proba(&x[0]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_rejected() {
        let x = vec![fv(vec![1.0]); 3];
        assert_eq!(fit(&x, &[Label::Failure; 3], &LogisticConfig::default()).unwrap_err(), Error::DegenerateTrainingSet);
    }

    #[test]
    fn saturation_and_dims() {
        let m = LogisticModel { weights: vec![0.0], bias: 20.0, reg_c: 1.0, converged: true, final_grad_norm: 0.0, iterations: 0 };
        assert!(m.predict_proba(&fv(vec![1.0])).unwrap() > 1.0 - 1e-8);
        assert!(matches!(m.predict_proba(&fv(vec![1.0, 2.0])), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<FeatureVector> = (0..20).map(|_| fv((0..5).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())).collect();
        let y: Vec<Label> = (0..20).map(|i| if i % 3 == 0 { Label::Failure } else { Label::Success }).collect();
        let prob = Problem::new(&x, &y, 1.0).unwrap();
        let p = Point { weights: (0..5).map(|_| rng.random::<f64>() - 0.5).collect(), bias: 0.3 };
        assert!(grad_check(&prob, &p, 1e-5) < 1e-5);
    }

    #[test]
    fn large_dim_converges() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<FeatureVector> = (0..60).map(|_| fv((0..500).map(|_| rng.random::<f64>() - 0.5).collect())).collect();
        let y: Vec<Label> = (0..60).map(|i| if i % 2 == 0 { Label::Failure } else { Label::Success }).collect();
        let m = fit(&x, &y, &LogisticConfig::default()).unwrap();
        assert!(m.converged, "grad norm {}", m.final_grad_norm);
    }
}
