//! LSTM cell, unidirectional and bidirectional layers, and their
//! backpropagation through time.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::{NeuralError, Result};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gate weights act on the concatenation `[h_prev, x_t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCellParams {
    pub w_f: Tensor,
    pub w_i: Tensor,
    pub w_c: Tensor,
    pub w_o: Tensor,
    pub b_f: Tensor,
    pub b_i: Tensor,
    pub b_c: Tensor,
    pub b_o: Tensor,
}

impl LstmCellParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = Tensor::zeros(&[hidden, hidden + input]);
        let b = Tensor::zeros(&[hidden]);
        Self {
            w_f: w.clone(),
            w_i: w.clone(),
            w_c: w.clone(),
            w_o: w,
            b_f: b.clone(),
            b_i: b.clone(),
            b_c: b.clone(),
            b_o: b,
        }
    }

    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let shape = [hidden, hidden + input];
        Self {
            w_f: Tensor::scaled_uniform(&shape, rng),
            w_i: Tensor::scaled_uniform(&shape, rng),
            w_c: Tensor::scaled_uniform(&shape, rng),
            w_o: Tensor::scaled_uniform(&shape, rng),
            ..Self::zeros(input, hidden)
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_f.rows()
    }

    pub fn input(&self) -> usize {
        self.w_f.cols() - self.hidden()
    }

    pub fn validate(&self) -> Result<()> {
        let shape = &self.w_f.shape;
        let ws = [&self.w_f, &self.w_i, &self.w_c, &self.w_o];
        let bs = [&self.b_f, &self.b_i, &self.b_c, &self.b_o];
        if shape.len() != 2
            || shape[1] <= shape[0]
            || ws.iter().any(|w| &w.shape != shape)
            || bs.iter().any(|b| b.shape != [shape[0]])
        {
            return Err(NeuralError::Shape("inconsistent LSTM cell parameter shapes".into()));
        }
        Ok(())
    }

    pub(crate) fn named<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        for (name, t) in [
            ("w_f", &self.w_f),
            ("w_i", &self.w_i),
            ("w_c", &self.w_c),
            ("w_o", &self.w_o),
            ("b_f", &self.b_f),
            ("b_i", &self.b_i),
            ("b_c", &self.b_c),
            ("b_o", &self.b_o),
        ] {
            out.push((format!("{prefix}.{name}"), t));
        }
    }

    pub(crate) fn named_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        for (name, t) in [
            ("w_f", &mut self.w_f),
            ("w_i", &mut self.w_i),
            ("w_c", &mut self.w_c),
            ("w_o", &mut self.w_o),
            ("b_f", &mut self.b_f),
            ("b_i", &mut self.b_i),
            ("b_c", &mut self.b_c),
            ("b_o", &mut self.b_o),
        ] {
            out.push((format!("{prefix}.{name}"), t));
        }
    }
}

/// Activations saved during the forward pass of one time step.
#[derive(Debug, Clone)]
pub struct StepCache {
    z: Vec<f64>,
    f: Vec<f64>,
    i: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

fn step(x: &[f64], h_prev: &[f64], c_prev: &[f64], p: &LstmCellParams) -> (Vec<f64>, Vec<f64>, StepCache) {
    let hidden = p.hidden();
    let mut z = Vec::with_capacity(hidden + x.len());
    z.extend_from_slice(h_prev);
    z.extend_from_slice(x);

    let gate = |w: &Tensor, b: &Tensor, act: fn(f64) -> f64| {
        let mut out = vec![0.0; hidden];
        w.matvec_into(&z, &mut out);
        out.iter_mut().zip(&b.values).for_each(|(o, b)| *o = act(*o + b));
        out
    };
    let f = gate(&p.w_f, &p.b_f, sigmoid);
    let i = gate(&p.w_i, &p.b_i, sigmoid);
    let g = gate(&p.w_c, &p.b_c, f64::tanh);
    let o = gate(&p.w_o, &p.b_o, sigmoid);

    let c: Vec<f64> = (0..hidden).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = (0..hidden).map(|k| o[k] * tanh_c[k]).collect();
    let cache = StepCache { z, f, i, g, o, c_prev: c_prev.to_vec(), tanh_c };
    (h, c, cache)
}

/// One LSTM step; returns `(h_t, c_t)`.
pub fn lstm_cell(x: &[f64], h_prev: &[f64], c_prev: &[f64], params: &LstmCellParams) -> Result<(Vec<f64>, Vec<f64>)> {
    params.validate()?;
    if x.len() != params.input() || h_prev.len() != params.hidden() || c_prev.len() != params.hidden() {
        return Err(NeuralError::Shape(format!(
            "cell expects input {} and hidden {}, got x={}, h={}, c={}",
            params.input(),
            params.hidden(),
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let (h, c, _) = step(x, h_prev, c_prev, params);
    Ok((h, c))
}

fn check_sequence(sequence: &[Vec<f64>], input: usize) -> Result<()> {
    if sequence.is_empty() {
        return Err(NeuralError::Shape("empty sequence".into()));
    }
    if let Some(row) = sequence.iter().find(|r| r.len() != input) {
        return Err(NeuralError::Shape(format!("sequence row width {} != input {input}", row.len())));
    }
    Ok(())
}

pub(crate) fn layer_forward_cached(sequence: &[Vec<f64>], p: &LstmCellParams) -> (Vec<Vec<f64>>, Vec<StepCache>) {
    let hidden = p.hidden();
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    let mut outputs = Vec::with_capacity(sequence.len());
    let mut caches = Vec::with_capacity(sequence.len());
    for x in sequence {
        let (h_next, c_next, cache) = step(x, &h, &c, p);
        outputs.push(h_next.clone());
        caches.push(cache);
        h = h_next;
        c = c_next;
    }
    (outputs, caches)
}

/// Runs the cell over the sequence from zero initial state and returns
/// every hidden state.
pub fn lstm_layer_forward(sequence: &[Vec<f64>], params: &LstmCellParams) -> Result<Vec<Vec<f64>>> {
    params.validate()?;
    check_sequence(sequence, params.input())?;
    Ok(layer_forward_cached(sequence, params).0)
}

/// Backpropagation through time. `d_out[t]` is the loss gradient with
/// respect to `h_t`; parameter gradients accumulate into `grads`, and the
/// gradient with respect to each input row is returned.
pub(crate) fn layer_backward(
    p: &LstmCellParams,
    caches: &[StepCache],
    d_out: &[Vec<f64>],
    grads: &mut LstmCellParams,
) -> Vec<Vec<f64>> {
    let hidden = p.hidden();
    let input = p.input();
    let mut dh_next = vec![0.0; hidden];
    let mut dc_next = vec![0.0; hidden];
    let mut dx = vec![vec![0.0; input]; caches.len()];
    let mut da_f = vec![0.0; hidden];
    let mut da_i = vec![0.0; hidden];
    let mut da_g = vec![0.0; hidden];
    let mut da_o = vec![0.0; hidden];
    for t in (0..caches.len()).rev() {
        let s = &caches[t];
        for k in 0..hidden {
            let dh = d_out[t][k] + dh_next[k];
            let dc = dh * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]) + dc_next[k];
            da_o[k] = dh * s.tanh_c[k] * s.o[k] * (1.0 - s.o[k]);
            da_f[k] = dc * s.c_prev[k] * s.f[k] * (1.0 - s.f[k]);
            da_i[k] = dc * s.g[k] * s.i[k] * (1.0 - s.i[k]);
            da_g[k] = dc * s.i[k] * (1.0 - s.g[k] * s.g[k]);
            dc_next[k] = dc * s.f[k];
        }
        let mut dz = vec![0.0; hidden + input];
        for (w, gw, gb, da) in [
            (&p.w_f, &mut grads.w_f, &mut grads.b_f, &da_f),
            (&p.w_i, &mut grads.w_i, &mut grads.b_i, &da_i),
            (&p.w_c, &mut grads.w_c, &mut grads.b_c, &da_g),
            (&p.w_o, &mut grads.w_o, &mut grads.b_o, &da_o),
        ] {
            gw.outer_acc(da, &s.z);
            gb.values.iter_mut().zip(da.iter()).for_each(|(g, d)| *g += d);
            w.matvec_t_acc(da, &mut dz);
        }
        dh_next.copy_from_slice(&dz[..hidden]);
        dx[t].copy_from_slice(&dz[hidden..]);
    }
    dx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiLstmParams {
    pub forward: LstmCellParams,
    pub backward: LstmCellParams,
}

impl BiLstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self { forward: LstmCellParams::zeros(input, hidden), backward: LstmCellParams::zeros(input, hidden) }
    }

    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self { forward: LstmCellParams::init(input, hidden, rng), backward: LstmCellParams::init(input, hidden, rng) }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden()
    }

    pub(crate) fn named<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        self.forward.named(&format!("{prefix}.fwd"), out);
        self.backward.named(&format!("{prefix}.bwd"), out);
    }

    pub(crate) fn named_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor)>) {
        self.forward.named_mut(&format!("{prefix}.fwd"), out);
        self.backward.named_mut(&format!("{prefix}.bwd"), out);
    }
}

pub(crate) struct BiCache {
    forward: Vec<StepCache>,
    backward: Vec<StepCache>,
}

pub(crate) fn bilstm_forward_cached(sequence: &[Vec<f64>], p: &BiLstmParams) -> (Vec<Vec<f64>>, BiCache) {
    let (fwd, fwd_cache) = layer_forward_cached(sequence, &p.forward);
    let reversed: Vec<Vec<f64>> = sequence.iter().rev().cloned().collect();
    let (bwd, bwd_cache) = layer_forward_cached(&reversed, &p.backward);
    let len = sequence.len();
    let out = (0..len)
        .map(|t| {
            let mut row = fwd[t].clone();
            row.extend_from_slice(&bwd[len - 1 - t]);
            row
        })
        .collect();
    (out, BiCache { forward: fwd_cache, backward: bwd_cache })
}

/// Per time step, `[forward h_t, backward h_t]` where the backward pass
/// reads the sequence in reverse.
pub fn bilstm_layer_forward(sequence: &[Vec<f64>], params: &BiLstmParams) -> Result<Vec<Vec<f64>>> {
    params.forward.validate()?;
    params.backward.validate()?;
    if params.forward.hidden() != params.backward.hidden() || params.forward.input() != params.backward.input() {
        return Err(NeuralError::Shape("forward and backward cells differ in size".into()));
    }
    check_sequence(sequence, params.forward.input())?;
    Ok(bilstm_forward_cached(sequence, params).0)
}

pub(crate) fn bilstm_backward(
    p: &BiLstmParams,
    cache: &BiCache,
    d_out: &[Vec<f64>],
    grads: &mut BiLstmParams,
) -> Vec<Vec<f64>> {
    let hidden = p.hidden();
    let len = d_out.len();
    let d_fwd: Vec<Vec<f64>> = d_out.iter().map(|r| r[..hidden].to_vec()).collect();
    let d_bwd: Vec<Vec<f64>> = (0..len).map(|s| d_out[len - 1 - s][hidden..].to_vec()).collect();
    let mut dx = layer_backward(&p.forward, &cache.forward, &d_fwd, &mut grads.forward);
    let dx_rev = layer_backward(&p.backward, &cache.backward, &d_bwd, &mut grads.backward);
    for (t, row) in dx.iter_mut().enumerate() {
        row.iter_mut().zip(&dx_rev[len - 1 - t]).for_each(|(a, b)| *a += b);
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_cell_outputs_zero() {
        let p = LstmCellParams::zeros(2, 3);
        let (h, c) = lstm_cell(&[0.7, -4.0], &[0.0; 3], &[0.0; 3], &p).unwrap();
        assert_eq!(h, vec![0.0; 3]);
        assert_eq!(c, vec![0.0; 3]);
        let (_, _, cache) = step(&[0.7, -4.0], &[0.0; 3], &[0.0; 3], &p);
        assert!(cache.f.iter().chain(&cache.i).chain(&cache.o).all(|&g| g == 0.5));
    }

    #[test]
    fn forget_gate_passes_cell_state() {
        let mut p = LstmCellParams::zeros(1, 2);
        p.b_f.fill(10.0);
        p.b_i.fill(-10.0);
        p.b_o.fill(10.0);
        let v = [0.8, -0.3];
        let (h, c) = lstm_cell(&[2.0], &[0.0; 2], &v, &p).unwrap();
        let f = 1.0 / (1.0 + (-10.0f64).exp());
        let o = f;
        for k in 0..2 {
            // candidate is tanh(0) = 0, so the input gate contributes nothing
            let expected_c = f * v[k];
            assert!((c[k] - expected_c).abs() < 1e-15);
            assert!((h[k] - o * expected_c.tanh()).abs() < 1e-15);
            assert!((c[k] - v[k]).abs() < 1e-4);
        }
    }

    #[test]
    fn cell_rejects_bad_shapes() {
        let p = LstmCellParams::zeros(2, 3);
        assert!(matches!(lstm_cell(&[1.0], &[0.0; 3], &[0.0; 3], &p), Err(NeuralError::Shape(_))));
        assert!(matches!(lstm_cell(&[1.0, 2.0], &[0.0; 2], &[0.0; 3], &p), Err(NeuralError::Shape(_))));
    }

    #[test]
    fn hidden_state_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut p = LstmCellParams::init(3, 4, &mut rng);
        p.w_c.scale(50.0);
        p.w_o.scale(50.0);
        let seq: Vec<Vec<f64>> = (0..20).map(|t| vec![t as f64, -(t as f64), 100.0]).collect();
        for h in lstm_layer_forward(&seq, &p).unwrap() {
            assert!(h.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn single_step_layer_is_one_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = LstmCellParams::init(2, 3, &mut rng);
        let out = lstm_layer_forward(&[vec![0.3, -0.2]], &p).unwrap();
        let (h, _) = lstm_cell(&[0.3, -0.2], &[0.0; 3], &[0.0; 3], &p).unwrap();
        assert_eq!(out, vec![h]);
    }

    #[test]
    fn zero_layer_and_bilayer_output_zero() {
        let seq = vec![vec![1.0, 2.0]; 5];
        assert_eq!(lstm_layer_forward(&seq, &LstmCellParams::zeros(2, 3)).unwrap(), vec![vec![0.0; 3]; 5]);
        assert_eq!(bilstm_layer_forward(&seq, &BiLstmParams::zeros(2, 3)).unwrap(), vec![vec![0.0; 6]; 5]);
        assert!(lstm_layer_forward(&[], &LstmCellParams::zeros(2, 3)).is_err());
    }

    #[test]
    fn layer_is_causal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = LstmCellParams::init(1, 4, &mut rng);
        let seq: Vec<Vec<f64>> = (0..9).map(|t| vec![(t as f64 * 0.7).sin()]).collect();
        let full = lstm_layer_forward(&seq, &p).unwrap();
        for t in 1..=seq.len() {
            assert_eq!(lstm_layer_forward(&seq[..t], &p).unwrap(), full[..t].to_vec());
        }
    }

    #[test]
    fn palindrome_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cell = LstmCellParams::init(2, 3, &mut rng);
        let p = BiLstmParams { forward: cell.clone(), backward: cell };
        let seq = vec![vec![0.1, 0.2], vec![-0.5, 0.9], vec![0.4, 0.4], vec![-0.5, 0.9], vec![0.1, 0.2]];
        let out = bilstm_layer_forward(&seq, &p).unwrap();
        let len = seq.len();
        for t in 0..len {
            let mirrored = &out[len - 1 - t];
            let swapped: Vec<f64> = mirrored[3..].iter().chain(&mirrored[..3]).copied().collect();
            assert_eq!(out[t], swapped);
        }
    }

    #[test]
    fn bilstm_is_two_layers_composed() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = BiLstmParams::init(2, 3, &mut rng);
        let seq = vec![vec![0.5, -1.0], vec![0.25, 0.75], vec![-0.3, 0.1]];
        let out = bilstm_layer_forward(&seq, &p).unwrap();
        let fwd = lstm_layer_forward(&seq, &p.forward).unwrap();
        let rev: Vec<Vec<f64>> = seq.iter().rev().cloned().collect();
        let mut bwd = lstm_layer_forward(&rev, &p.backward).unwrap();
        bwd.reverse();
        for t in 0..3 {
            let expected: Vec<f64> = fwd[t].iter().chain(&bwd[t]).copied().collect();
            assert_eq!(out[t], expected);
        }
    }

    #[test]
    fn bilstm_rejects_mismatched_cells() {
        let p = BiLstmParams { forward: LstmCellParams::zeros(2, 3), backward: LstmCellParams::zeros(2, 4) };
        assert!(bilstm_layer_forward(&[vec![0.0, 0.0]], &p).is_err());
    }
}
