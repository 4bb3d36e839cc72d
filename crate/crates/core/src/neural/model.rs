//! The two-pathway forecaster: a stacked Bi-LSTM over the case window and a
//! stacked LSTM over the policy window, each projected by a dense layer,
//! concatenated, and passed through a two-layer dense head.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dense::{self, Activation, DenseCache, DenseParams};
use super::lstm::{self, BiCache, BiLstmParams, LstmCellParams, StepCache};
use super::tensor::Tensor;
use super::{NeuralError, Result};
use crate::data::NUM_INDICATORS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Window length L in days.
    pub window: usize,
    pub recurrent_hidden: usize,
    pub pathway_dense: usize,
    pub head_hidden: usize,
    /// `false` removes the policy pathway entirely.
    pub use_policy: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { window: 14, recurrent_hidden: 32, pathway_dense: 16, head_hidden: 16, use_policy: true }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.recurrent_hidden == 0 || self.pathway_dense == 0 || self.head_hidden == 0 {
            return Err(NeuralError::Shape(format!("model sizes must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CasePathway {
    pub layer1: BiLstmParams,
    pub layer2: BiLstmParams,
    pub dense: DenseParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyPathway {
    pub layer1: LstmCellParams,
    pub layer2: LstmCellParams,
    pub dense: DenseParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoPathwayModel {
    pub config: ModelConfig,
    pub case: CasePathway,
    pub policy: Option<PolicyPathway>,
    pub head_hidden: DenseParams,
    pub head_output: DenseParams,
}

struct ForwardCache {
    case1: BiCache,
    case2: BiCache,
    case_dense: DenseCache,
    policy: Option<(Vec<StepCache>, Vec<StepCache>, DenseCache)>,
    head_hidden: DenseCache,
    head_output: DenseCache,
}

impl TwoPathwayModel {
    fn build(
        config: &ModelConfig,
        mut bi: impl FnMut(usize, usize) -> BiLstmParams,
        mut uni: impl FnMut(usize, usize) -> LstmCellParams,
        mut dense: impl FnMut(usize, usize, Activation) -> DenseParams,
    ) -> Self {
        let h = config.recurrent_hidden;
        let d = config.pathway_dense;
        let case = CasePathway { layer1: bi(1, h), layer2: bi(2 * h, h), dense: dense(2 * h, d, Activation::Relu) };
        let policy = config.use_policy.then(|| PolicyPathway {
            layer1: uni(NUM_INDICATORS, h),
            layer2: uni(h, h),
            dense: dense(h, d, Activation::Relu),
        });
        let merged = if config.use_policy { 2 * d } else { d };
        Self {
            config: config.clone(),
            case,
            policy,
            head_hidden: dense(merged, config.head_hidden, Activation::Relu),
            head_output: dense(config.head_hidden, 1, Activation::Identity),
        }
    }

    pub fn zeros(config: &ModelConfig) -> Self {
        Self::build(config, BiLstmParams::zeros, LstmCellParams::zeros, DenseParams::zeros)
    }

    /// Seeded scaled-uniform weights and zero biases.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let rng = std::cell::RefCell::new(ChaCha8Rng::seed_from_u64(seed));
        Self::build(
            config,
            |i, h| BiLstmParams::init(i, h, &mut *rng.borrow_mut()),
            |i, h| LstmCellParams::init(i, h, &mut *rng.borrow_mut()),
            |i, o, a| DenseParams::init(i, o, a, &mut *rng.borrow_mut()),
        )
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, t) in z.named_params_mut() {
            t.fill(0.0);
        }
        z
    }

    /// Every parameter tensor with a stable dotted name, in a fixed order.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        self.case.layer1.named("case.layer1", &mut out);
        self.case.layer2.named("case.layer2", &mut out);
        self.case.dense.named("case.dense", &mut out);
        if let Some(p) = &self.policy {
            p.layer1.named("policy.layer1", &mut out);
            p.layer2.named("policy.layer2", &mut out);
            p.dense.named("policy.dense", &mut out);
        }
        self.head_hidden.named("head.hidden", &mut out);
        self.head_output.named("head.output", &mut out);
        out
    }

    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        self.case.layer1.named_mut("case.layer1", &mut out);
        self.case.layer2.named_mut("case.layer2", &mut out);
        self.case.dense.named_mut("case.dense", &mut out);
        if let Some(p) = &mut self.policy {
            p.layer1.named_mut("policy.layer1", &mut out);
            p.layer2.named_mut("policy.layer2", &mut out);
            p.dense.named_mut("policy.dense", &mut out);
        }
        self.head_hidden.named_mut("head.hidden", &mut out);
        self.head_output.named_mut("head.output", &mut out);
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }

    /// Checks every tensor against the shapes implied by `config`.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let reference = Self::zeros(&self.config);
        let mine = self.named_params();
        let expected = reference.named_params();
        if mine.len() != expected.len() {
            return Err(NeuralError::Shape("parameter set does not match the model config".into()));
        }
        for ((name, t), (_, e)) in mine.iter().zip(&expected) {
            if t.shape != e.shape || t.values.len() != e.len() {
                return Err(NeuralError::Shape(format!("{name}: shape {:?}, expected {:?}", t.shape, e.shape)));
            }
        }
        Ok(())
    }

    fn check_inputs(&self, case_window: &[f64], policy_window: &[[f64; NUM_INDICATORS]]) -> Result<()> {
        let l = self.config.window;
        if case_window.len() != l {
            return Err(NeuralError::Shape(format!("case window has {} days, model expects {l}", case_window.len())));
        }
        if self.policy.is_some() && policy_window.len() != l {
            return Err(NeuralError::Shape(format!(
                "policy window has {} days, model expects {l}",
                policy_window.len()
            )));
        }
        if case_window.iter().chain(policy_window.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(NeuralError::Numeric("non-finite model input".into()));
        }
        Ok(())
    }

    fn forward_cached(&self, case_window: &[f64], policy_window: &[[f64; NUM_INDICATORS]]) -> (f64, ForwardCache) {
        let case_seq: Vec<Vec<f64>> = case_window.iter().map(|&v| vec![v]).collect();
        let (c1, case1) = lstm::bilstm_forward_cached(&case_seq, &self.case.layer1);
        let (c2, case2) = lstm::bilstm_forward_cached(&c1, &self.case.layer2);
        let (mut merged, case_dense) = dense::forward_cached(c2.last().expect("window > 0"), &self.case.dense);

        let policy = self.policy.as_ref().map(|p| {
            let seq: Vec<Vec<f64>> = policy_window.iter().map(|r| r.to_vec()).collect();
            let (p1, cache1) = lstm::layer_forward_cached(&seq, &p.layer1);
            let (p2, cache2) = lstm::layer_forward_cached(&p1, &p.layer2);
            let (out, dense_cache) = dense::forward_cached(p2.last().expect("window > 0"), &p.dense);
            merged.extend_from_slice(&out);
            (cache1, cache2, dense_cache)
        });

        let (hidden, head_hidden) = dense::forward_cached(&merged, &self.head_hidden);
        let (out, head_output) = dense::forward_cached(&hidden, &self.head_output);
        (out[0], ForwardCache { case1, case2, case_dense, policy, head_hidden, head_output })
    }

    /// Next-day prediction in normalized units. `policy_window` is ignored
    /// when the policy pathway is absent.
    pub fn forward(&self, case_window: &[f64], policy_window: &[[f64; NUM_INDICATORS]]) -> Result<f64> {
        self.check_inputs(case_window, policy_window)?;
        let (y, _) = self.forward_cached(case_window, policy_window);
        if !y.is_finite() {
            return Err(NeuralError::Numeric("model output is not finite".into()));
        }
        Ok(y)
    }

    fn backward(&self, cache: &ForwardCache, d_y: f64, grads: &mut TwoPathwayModel) {
        let l = self.config.window;
        let d_hidden = dense::backward(&self.head_output, &cache.head_output, &[d_y], &mut grads.head_output);
        let d_merged = dense::backward(&self.head_hidden, &cache.head_hidden, &d_hidden, &mut grads.head_hidden);
        let d = self.config.pathway_dense;

        let d_case_top = dense::backward(&self.case.dense, &cache.case_dense, &d_merged[..d], &mut grads.case.dense);
        let mut d_c2 = vec![vec![0.0; 2 * self.config.recurrent_hidden]; l];
        d_c2[l - 1] = d_case_top;
        let d_c1 = lstm::bilstm_backward(&self.case.layer2, &cache.case2, &d_c2, &mut grads.case.layer2);
        lstm::bilstm_backward(&self.case.layer1, &cache.case1, &d_c1, &mut grads.case.layer1);

        if let (Some(p), Some(g), Some((cache1, cache2, dense_cache))) =
            (&self.policy, grads.policy.as_mut(), cache.policy.as_ref())
        {
            let d_top = dense::backward(&p.dense, dense_cache, &d_merged[d..], &mut g.dense);
            let mut d_p2 = vec![vec![0.0; self.config.recurrent_hidden]; l];
            d_p2[l - 1] = d_top;
            let d_p1 = lstm::layer_backward(&p.layer2, cache2, &d_p2, &mut g.layer2);
            lstm::layer_backward(&p.layer1, cache1, &d_p1, &mut g.layer1);
        }
    }
}

/// Anything that can be fed to the model as one supervised example.
pub trait TrainingSample {
    fn case_window(&self) -> &[f64];
    fn policy_window(&self) -> &[[f64; NUM_INDICATORS]];
    fn target(&self) -> f64;
}

pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(NeuralError::Shape(format!(
            "mse_loss needs equal non-empty lengths, got {} and {}",
            pred.len(),
            target.len()
        )));
    }
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64)
}

/// Mean squared error over the batch and its exact gradient for every
/// parameter, including backpropagation through time.
pub fn loss_and_gradients<S: TrainingSample>(model: &TwoPathwayModel, batch: &[S]) -> Result<(f64, TwoPathwayModel)> {
    if batch.is_empty() {
        return Err(NeuralError::Shape("empty batch".into()));
    }
    let mut grads = model.zeros_like();
    let n = batch.len() as f64;
    let mut loss = 0.0;
    for s in batch {
        model.check_inputs(s.case_window(), s.policy_window())?;
        let (y, cache) = model.forward_cached(s.case_window(), s.policy_window());
        let residual = y - s.target();
        loss += residual * residual / n;
        model.backward(&cache, 2.0 * residual / n, &mut grads);
    }
    if !loss.is_finite() {
        return Err(NeuralError::Numeric("non-finite loss".into()));
    }
    for (name, g) in grads.named_params() {
        g.check_finite(&name)?;
    }
    Ok((loss, grads))
}

pub fn batch_loss<S: TrainingSample>(model: &TwoPathwayModel, batch: &[S]) -> Result<f64> {
    let preds = batch.iter().map(|s| model.forward(s.case_window(), s.policy_window())).collect::<Result<Vec<_>>>()?;
    let targets: Vec<f64> = batch.iter().map(|s| s.target()).collect();
    mse_loss(&preds, &targets)
}
