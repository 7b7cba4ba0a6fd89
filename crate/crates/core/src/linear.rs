//! L2-regularized logistic regression trained one-vs-all.
//!
//! Each class solves
//!
//! ```text
//! min_{w,b}  ½‖w‖² + C · Σᵢ cᵢ · log(1 + exp(−yᵢ (⟨w, xᵢ⟩ + b)))
//! ```
//!
//! with a truncated Newton method (conjugate-gradient inner solves and
//! Armijo backtracking). The bias is not regularized. Classes are
//! independent problems and are solved in parallel; each solve depends
//! only on its own inputs, so results do not depend on the thread count.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;

use crate::codec::{encode_f64s, encode_u32s, Encode, Kind, Sections};
use crate::error::{Error, Result};
use crate::sparse::{BinaryLabelMatrix, SparseMatrix, SparseRow};

/// Bias magnitude used for classes that cannot be trained.
pub const CONSTANT_BIAS_CLAMP: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Inverse regularization strength `C`.
    pub reg_strength: f64,
    /// Stop once the gradient norm falls to this value.
    pub tol: f64,
    /// Maximum Newton iterations per class.
    pub max_epochs: usize,
    /// Accepted for interface stability; the Newton solver starts from zero
    /// and draws no random numbers.
    pub seed: u64,
    /// Weights with magnitude below this are dropped after training.
    pub prune_threshold: f64,
    /// Weight positives by `#neg / #pos`.
    pub balance_classes: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            reg_strength: 1.0,
            tol: 1e-4,
            max_epochs: 100,
            seed: 0,
            prune_threshold: 1e-6,
            balance_classes: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.reg_strength > 0.0 && self.reg_strength.is_finite()) {
            return Err(Error::InvalidArgument("reg_strength must be positive".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("tol must be positive".into()));
        }
        if !(self.prune_threshold >= 0.0) {
            return Err(Error::InvalidArgument("prune_threshold must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Counts inner products performed while scoring.
#[derive(Debug, Default)]
pub struct InnerProductCounter(AtomicU64);

impl InnerProductCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&self, n: u64) {
        self.0.fetch_add(n, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

/// One weight row and bias per class.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    weights: SparseMatrix,
    bias: Vec<f64>,
    class_ids: Vec<u32>,
    constant: Vec<bool>,
}

impl LinearModel {
    pub fn new(
        weights: SparseMatrix,
        bias: Vec<f64>,
        class_ids: Vec<u32>,
        constant: Vec<bool>,
    ) -> Result<Self> {
        let k = weights.rows();
        if bias.len() != k || class_ids.len() != k || constant.len() != k {
            return Err(Error::Structure(format!(
                "model has {k} weight rows, {} biases, {} class ids, {} flags",
                bias.len(),
                class_ids.len(),
                constant.len()
            )));
        }
        let mut sorted = class_ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Structure("duplicate class id".into()));
        }
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::Structure("non-finite bias".into()));
        }
        Ok(LinearModel {
            weights,
            bias,
            class_ids,
            constant,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.class_ids.len()
    }

    pub fn num_features(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &SparseMatrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn class_ids(&self) -> &[u32] {
        &self.class_ids
    }

    /// Whether each class fell back to a constant score because its training
    /// targets were all positive or all negative.
    pub fn constant_flags(&self) -> &[bool] {
        &self.constant
    }

    fn check_dim(&self, x: &SparseRow<'_>) -> Result<()> {
        if x.min_dim() > self.num_features() {
            return Err(Error::Dimension(format!(
                "feature index {} out of range for a model over {} features",
                x.min_dim() - 1,
                self.num_features()
            )));
        }
        Ok(())
    }

    /// `⟨w_c, x⟩ + b_c` for every class, in model row order.
    pub fn score(&self, x: SparseRow<'_>) -> Result<Vec<f64>> {
        self.check_dim(&x)?;
        Ok((0..self.num_classes())
            .map(|c| self.weights.row(c).dot(&x) + self.bias[c])
            .collect())
    }

    /// [`score`](Self::score), recording one inner product per class.
    pub fn score_counted(&self, x: SparseRow<'_>, counter: &InnerProductCounter) -> Result<Vec<f64>> {
        self.check_dim(&x)?;
        Ok((0..self.num_classes())
            .map(|c| {
                counter.add(1);
                self.weights.row(c).dot(&x) + self.bias[c]
            })
            .collect())
    }

    /// Class id with the highest score; ties go to the smallest class id.
    pub fn predict_class(&self, x: SparseRow<'_>) -> Result<u32> {
        let scores = self.score(x)?;
        Ok(self.class_ids[argmax_by_id(&scores, &self.class_ids)])
    }
}

/// Row position of the best score, breaking ties towards the smaller id.
pub(crate) fn argmax_by_id(scores: &[f64], ids: &[u32]) -> usize {
    let mut best = 0;
    for c in 1..scores.len() {
        if scores[c] > scores[best] || (scores[c] == scores[best] && ids[c] < ids[best]) {
            best = c;
        }
    }
    best
}

impl Encode for LinearModel {
    const KIND: Kind = Kind::LinearModel;

    fn encode_sections(&self) -> Vec<Vec<u8>> {
        vec![
            self.weights.to_bytes(),
            encode_f64s(&self.bias),
            encode_u32s(&self.class_ids),
            self.constant.iter().map(|&c| c as u8).collect(),
        ]
    }

    fn decode_sections(sections: Vec<Vec<u8>>) -> Result<Self> {
        let mut s = Sections::new(sections, "linear model");
        let weights = s.object::<SparseMatrix>()?;
        let bias = s.f64s()?;
        let class_ids = s.u32s()?;
        let constant = s.next()?.into_iter().map(|b| b != 0).collect();
        s.finish()?;
        LinearModel::new(weights, bias, class_ids, constant)
    }
}

fn log1p_exp_neg(t: f64) -> f64 {
    // log(1 + exp(-t))
    if t > 0.0 {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// One binary logistic problem over the rows of a feature matrix.
///
/// The parameter vector holds the feature weights followed by the bias.
pub struct LogisticProblem<'a> {
    x: &'a SparseMatrix,
    signs: Vec<f64>,
    costs: Vec<f64>,
}

impl<'a> LogisticProblem<'a> {
    /// `positive[i]` marks the positive rows; `costs[i]` is `C` times the
    /// instance weight.
    pub fn new(x: &'a SparseMatrix, positive: &[bool], costs: Vec<f64>) -> Result<Self> {
        if positive.len() != x.rows() || costs.len() != x.rows() {
            return Err(Error::Dimension(format!(
                "{} rows, {} targets, {} costs",
                x.rows(),
                positive.len(),
                costs.len()
            )));
        }
        let signs = positive.iter().map(|&p| if p { 1.0 } else { -1.0 }).collect();
        Ok(LogisticProblem { x, signs, costs })
    }

    pub fn dim(&self) -> usize {
        self.x.cols() + 1
    }

    fn margins(&self, params: &[f64]) -> Vec<f64> {
        let (w, b) = params.split_at(self.x.cols());
        self.x.row_iter().map(|row| row.dot_dense(w) + b[0]).collect()
    }

    fn value_at(&self, params: &[f64], margins: &[f64]) -> f64 {
        let w = &params[..self.x.cols()];
        let reg = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
        let loss: f64 = margins
            .iter()
            .zip(&self.signs)
            .zip(&self.costs)
            .map(|((m, y), c)| c * log1p_exp_neg(y * m))
            .sum();
        reg + loss
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        self.value_at(params, &self.margins(params))
    }

    /// Objective value and gradient.
    pub fn value_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let margins = self.margins(params);
        let d = self.x.cols();
        let mut grad = params.to_vec();
        grad[d] = 0.0;
        for (i, row) in self.x.row_iter().enumerate() {
            let y = self.signs[i];
            let coef = self.costs[i] * (sigmoid(y * margins[i]) - 1.0) * y;
            for (j, v) in row.iter() {
                grad[j as usize] += coef * v;
            }
            grad[d] += coef;
        }
        (self.value_at(params, &margins), grad)
    }

    fn curvature(&self, margins: &[f64]) -> Vec<f64> {
        margins
            .iter()
            .zip(&self.costs)
            .map(|(m, c)| {
                let s = sigmoid(*m);
                c * s * (1.0 - s)
            })
            .collect()
    }

    fn hessian_vec(&self, curvature: &[f64], v: &[f64], out: &mut [f64]) {
        let d = self.x.cols();
        out[..d].copy_from_slice(&v[..d]);
        out[d] = 1e-12 * v[d];
        for (i, row) in self.x.row_iter().enumerate() {
            let u = curvature[i] * (row.dot_dense(&v[..d]) + v[d]);
            if u != 0.0 {
                for (j, x) in row.iter() {
                    out[j as usize] += u * x;
                }
                out[d] += u;
            }
        }
    }

    /// Minimizes the objective from the zero vector.
    pub fn solve(&self, tol: f64, max_iters: usize) -> Vec<f64> {
        let n = self.dim();
        let mut params = vec![0.0; n];
        let (mut f, mut grad) = self.value_and_gradient(&params);
        for _ in 0..max_iters {
            let gnorm = norm(&grad);
            if gnorm <= tol {
                break;
            }
            let curvature = self.curvature(&self.margins(&params));
            let step = self.newton_direction(&curvature, &grad, gnorm);
            let slope = dot(&grad, &step);
            if slope >= 0.0 {
                break;
            }
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..40 {
                let trial: Vec<f64> = params.iter().zip(&step).map(|(p, s)| p + t * s).collect();
                let ft = self.value(&trial);
                if ft <= f + 1e-4 * t * slope {
                    accepted = Some(trial);
                    break;
                }
                t *= 0.5;
            }
            let Some(next) = accepted else { break };
            params = next;
            let (nf, ng) = self.value_and_gradient(&params);
            f = nf;
            grad = ng;
        }
        params
    }

    fn newton_direction(&self, curvature: &[f64], grad: &[f64], gnorm: f64) -> Vec<f64> {
        // Conjugate gradient on H s = -g, truncated at a relative residual.
        let n = grad.len();
        let target = (0.5f64).min(gnorm.sqrt()) * gnorm;
        let mut s = vec![0.0; n];
        let mut r: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut p = r.clone();
        let mut hp = vec![0.0; n];
        let mut rr = dot(&r, &r);
        for _ in 0..(2 * n).clamp(10, 500) {
            if rr.sqrt() <= target {
                break;
            }
            self.hessian_vec(curvature, &p, &mut hp);
            let php = dot(&p, &hp);
            if php <= 0.0 {
                break;
            }
            let alpha = rr / php;
            for k in 0..n {
                s[k] += alpha * p[k];
                r[k] -= alpha * hp[k];
            }
            let rr_next = dot(&r, &r);
            let beta = rr_next / rr;
            rr = rr_next;
            for k in 0..n {
                p[k] = r[k] + beta * p[k];
            }
        }
        if s.iter().all(|v| *v == 0.0) {
            r = grad.iter().map(|g| -g).collect();
            return r;
        }
        s
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct ClassFit {
    weights: Vec<(u32, f64)>,
    bias: f64,
    constant: bool,
}

fn constant_fit(positives: usize, n: usize) -> ClassFit {
    let prior = if n == 0 { 0.0 } else { positives as f64 / n as f64 };
    let logit = (prior / (1.0 - prior)).ln();
    ClassFit {
        weights: Vec::new(),
        bias: logit.clamp(-CONSTANT_BIAS_CLAMP, CONSTANT_BIAS_CLAMP),
        constant: true,
    }
}

fn fit_class(x: &SparseMatrix, positive: &[bool], config: &TrainConfig) -> ClassFit {
    let n = x.rows();
    let positives = positive.iter().filter(|&&p| p).count();
    if positives == 0 || positives == n {
        return constant_fit(positives, n);
    }
    let pos_weight = if config.balance_classes {
        (n - positives) as f64 / positives as f64
    } else {
        1.0
    };
    let costs = positive
        .iter()
        .map(|&p| config.reg_strength * if p { pos_weight } else { 1.0 })
        .collect();
    let problem = LogisticProblem::new(x, positive, costs).expect("dimensions checked by caller");
    let params = problem.solve(config.tol, config.max_epochs);
    let d = x.cols();
    let weights = params[..d]
        .iter()
        .enumerate()
        .filter(|(_, w)| w.abs() >= config.prune_threshold && **w != 0.0)
        .map(|(j, &w)| (j as u32, w))
        .collect();
    ClassFit {
        weights,
        bias: params[d],
        constant: false,
    }
}

/// Trains one binary classifier per column of `targets`.
///
/// Column `c` of `targets` becomes class `class_ids[c]`.
pub fn train_ova(
    x: &SparseMatrix,
    targets: &BinaryLabelMatrix,
    class_ids: &[u32],
    config: &TrainConfig,
) -> Result<LinearModel> {
    config.validate()?;
    if x.rows() != targets.rows() {
        return Err(Error::Dimension(format!(
            "{} feature rows but {} target rows",
            x.rows(),
            targets.rows()
        )));
    }
    if targets.cols() == 0 {
        return Err(Error::InvalidArgument("class set is empty".into()));
    }
    if class_ids.len() != targets.cols() {
        return Err(Error::Dimension(format!(
            "{} class ids for {} target columns",
            class_ids.len(),
            targets.cols()
        )));
    }
    let mut positive_rows = vec![Vec::new(); targets.cols()];
    for (i, row) in targets.row_iter().enumerate() {
        for &c in row {
            positive_rows[c as usize].push(i);
        }
    }
    let fits: Vec<ClassFit> = positive_rows
        .par_iter()
        .map(|rows| {
            let mut positive = vec![false; x.rows()];
            for &i in rows {
                positive[i] = true;
            }
            fit_class(x, &positive, config)
        })
        .collect();
    let mut bias = Vec::with_capacity(fits.len());
    let mut constant = Vec::with_capacity(fits.len());
    let mut rows = Vec::with_capacity(fits.len());
    for fit in fits {
        bias.push(fit.bias);
        constant.push(fit.constant);
        rows.push(fit.weights);
    }
    let weights = SparseMatrix::from_rows(x.cols(), rows)?;
    LinearModel::new(weights, bias, class_ids.to_vec(), constant)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::SparseVec;

    fn one_dim(points: &[(f64, bool)]) -> (SparseMatrix, BinaryLabelMatrix) {
        let x = SparseMatrix::from_rows(1, points.iter().map(|&(v, _)| vec![(0, v)]).collect())
            .unwrap();
        let y = BinaryLabelMatrix::from_rows(
            1,
            points.iter().map(|&(_, p)| if p { vec![0] } else { vec![] }).collect(),
        )
        .unwrap();
        (x, y)
    }

    #[test]
    fn separable_data_gets_positive_weight() {
        let (x, y) = one_dim(&[(1.0, true), (-1.0, false)]);
        let model = train_ova(&x, &y, &[0], &TrainConfig::default()).unwrap();
        assert!(model.weights().row(0).values[0] > 0.0);
        assert!(!model.constant_flags()[0]);
    }

    #[test]
    fn all_positive_class_is_constant() {
        let (x, y) = one_dim(&[(1.0, true), (-1.0, true), (0.5, true)]);
        let model = train_ova(&x, &y, &[7], &TrainConfig::default()).unwrap();
        assert!(model.constant_flags()[0]);
        assert_eq!(model.bias()[0], CONSTANT_BIAS_CLAMP);
        assert_eq!(model.weights().nnz(), 0);
    }

    #[test]
    fn never_positive_class_is_constant() {
        let (x, y) = one_dim(&[(1.0, false), (-1.0, false)]);
        let model = train_ova(&x, &y, &[0], &TrainConfig::default()).unwrap();
        assert!(model.constant_flags()[0]);
        assert_eq!(model.bias()[0], -CONSTANT_BIAS_CLAMP);
    }

    #[test]
    fn two_point_problem_matches_grid_search() {
        // f(w, b) = ½w² + log(1+e^{-(w+b)}) + log(1+e^{-(w-b)}); by symmetry b* = 0.
        let oracle = |w: f64, b: f64| {
            0.5 * w * w + (1.0 + (-(w + b)).exp()).ln() + (1.0 + (-(w - b)).exp()).ln()
        };
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=400 {
            for k in -20..=20 {
                let (w, b) = (i as f64 * 0.01, k as f64 * 0.01);
                let v = oracle(w, b);
                if v < best.0 {
                    best = (v, w, b);
                }
            }
        }
        let (x, y) = one_dim(&[(1.0, true), (-1.0, false)]);
        let model = train_ova(&x, &y, &[0], &TrainConfig::default()).unwrap();
        let w = model.weights().row(0).values[0];
        assert!((w - best.1).abs() <= 1e-2, "solver {w} vs grid {}", best.1);
        assert!((model.bias()[0] - best.2).abs() <= 1e-2);
    }

    #[test]
    fn score_examples() {
        let weights = SparseMatrix::zeros(2, 3);
        let m = LinearModel::new(weights, vec![0.0, 0.0], vec![0, 1], vec![false; 2]).unwrap();
        let x = SparseVec::from_pairs(vec![(1, 2.0)]).unwrap();
        assert_eq!(m.score(x.as_row()).unwrap(), vec![0.0, 0.0]);

        let weights = SparseMatrix::from_rows(2, vec![vec![(0, 1.0)]]).unwrap();
        let m = LinearModel::new(weights, vec![0.0], vec![0], vec![false]).unwrap();
        let x = SparseVec::from_pairs(vec![(0, 3.0), (1, 5.0)]).unwrap();
        assert_eq!(m.score(x.as_row()).unwrap(), vec![3.0]);
        let x = SparseVec::from_pairs(vec![(1, 5.0), (0, 3.0)]).unwrap();
        assert_eq!(m.score(x.as_row()).unwrap(), vec![3.0]);
        let too_wide = SparseVec::from_pairs(vec![(2, 1.0)]).unwrap();
        assert!(matches!(m.score(too_wide.as_row()), Err(Error::Dimension(_))));
    }

    fn bias_model(bias: Vec<f64>) -> LinearModel {
        let k = bias.len();
        LinearModel::new(
            SparseMatrix::zeros(k, 1),
            bias,
            (0..k as u32).collect(),
            vec![false; k],
        )
        .unwrap()
    }

    #[test]
    fn predict_class_examples() {
        let x = SparseVec::default();
        assert_eq!(bias_model(vec![0.2, 0.9]).predict_class(x.as_row()).unwrap(), 1);
        assert_eq!(bias_model(vec![0.5, 0.5]).predict_class(x.as_row()).unwrap(), 0);
        assert_eq!(bias_model(vec![-3.0]).predict_class(x.as_row()).unwrap(), 0);
    }

    #[test]
    fn counter_counts_one_product_per_class() {
        let counter = InnerProductCounter::new();
        let m = bias_model(vec![0.0; 5]);
        m.score_counted(SparseVec::default().as_row(), &counter).unwrap();
        assert_eq!(counter.get(), 5);
    }

    #[test]
    fn stronger_penalty_shrinks_weights() {
        let (x, y) = one_dim(&[(1.0, true), (0.5, false), (-1.0, false), (-0.2, true)]);
        let strong = TrainConfig {
            reg_strength: 0.1,
            ..Default::default()
        };
        let weak = TrainConfig {
            reg_strength: 1e4,
            ..Default::default()
        };
        let ws = train_ova(&x, &y, &[0], &strong).unwrap().weights().row(0).values[0];
        let ww = train_ova(&x, &y, &[0], &weak).unwrap().weights().row(0).values[0];
        assert!(ws.abs() < ww.abs(), "{ws} vs {ww}");
    }

    #[test]
    fn model_round_trips() {
        let (x, y) = one_dim(&[(1.0, true), (-1.0, false), (0.3, true)]);
        let m = train_ova(&x, &y, &[4], &TrainConfig::default()).unwrap();
        assert_eq!(LinearModel::from_bytes(&m.to_bytes()).unwrap(), m);
    }
}
