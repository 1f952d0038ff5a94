//! Graph-convolutional policy/value network.
//!
//! `L` GCN layers `H_l = relu(Â H_{l-1} W_l)` over the coordination graph,
//! followed by two per-agent two-layer perceptron heads: a Boltzmann policy
//! over the nine moves and a scalar value. Agent `i`'s outputs only depend
//! on observations within `L` hops of `i`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::env::N_ACTIONS;
use crate::numcore::{self, matmul, relu, relu_backward, softmax_cross_entropy, softmax_slice, Matrix, ShapeError, Sgd};
use crate::obsgraph::{feature_len, GraphInput, DEFAULT_RADIUS};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SICLOPNN";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const DEFAULT_CLIP_NORM: f64 = 5.0;
pub const DEFAULT_LR: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error("observation length {got} does not match the model's {expected}")]
    FeatureLength { expected: usize, got: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("training target for {got} agents, input has {expected}")]
    TargetLength { expected: usize, got: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CheckpointError {
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("checkpoint format version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint architecture {found:?} does not match expected {expected:?}")]
    Architecture { found: ModelConfig, expected: ModelConfig },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub feature_len: usize,
    /// Output width of each GCN layer; its length is the layer count `L`.
    pub gcn_widths: Vec<usize>,
    pub head_hidden: usize,
    pub temperature: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            feature_len: feature_len(DEFAULT_RADIUS),
            gcn_widths: vec![64, 64],
            head_hidden: 64,
            temperature: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn embedding_width(&self) -> usize {
        *self.gcn_widths.last().unwrap_or(&self.feature_len)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
}

impl Mlp {
    fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w1: Matrix::zeros(input, hidden),
            b1: Matrix::zeros(1, hidden),
            w2: Matrix::zeros(hidden, output),
            b2: Matrix::zeros(1, output),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub gcn: Vec<Matrix>,
    pub policy: Mlp,
    pub value: Mlp,
    pub temperature: f64,
}

/// One gradient matrix per parameter, in [`ModelParams::tensors`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Matrix>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self { tensors: params.tensors().iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect() }
    }

    pub fn norm(&self) -> f64 {
        numcore::global_norm(&self.tensors)
    }

    fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }
}

/// Per-agent Boltzmann policies and values for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyValue {
    pub policies: Vec<[f64; N_ACTIONS]>,
    pub values: Vec<f64>,
    pub aggregate_value: f64,
}

/// Supervised example: one state with per-agent policy and return targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTarget {
    pub graph_input: GraphInput,
    pub target_policies: Vec<[f64; N_ACTIONS]>,
    pub target_values: Vec<f64>,
}

impl ModelParams {
    /// All-zero parameters: uniform policies and zero values everywhere.
    pub fn zeros(config: &ModelConfig) -> Self {
        let mut gcn = Vec::with_capacity(config.gcn_widths.len());
        let mut prev = config.feature_len;
        for &w in &config.gcn_widths {
            gcn.push(Matrix::zeros(prev, w));
            prev = w;
        }
        Self {
            gcn,
            policy: Mlp::zeros(prev, config.head_hidden, N_ACTIONS),
            value: Mlp::zeros(prev, config.head_hidden, 1),
            temperature: config.temperature,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Self::zeros(config);
        let mut glorot = |m: &mut Matrix| {
            let limit = (6.0 / (m.rows() + m.cols()) as f64).sqrt();
            m.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-limit..=limit));
        };
        for w in &mut params.gcn {
            glorot(w);
        }
        glorot(&mut params.policy.w1);
        glorot(&mut params.policy.w2);
        glorot(&mut params.value.w1);
        glorot(&mut params.value.w2);
        params
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            feature_len: self.feature_len(),
            gcn_widths: self.gcn.iter().map(Matrix::cols).collect(),
            head_hidden: self.policy.w1.cols(),
            temperature: self.temperature,
        }
    }

    pub fn feature_len(&self) -> usize {
        self.gcn.first().map_or(self.policy.w1.rows(), Matrix::rows)
    }

    pub fn n_layers(&self) -> usize {
        self.gcn.len()
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out: Vec<&Matrix> = self.gcn.iter().collect();
        for head in [&self.policy, &self.value] {
            out.extend([&head.w1, &head.b1, &head.w2, &head.b2]);
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = self.gcn.iter_mut().collect();
        for head in [&mut self.policy, &mut self.value] {
            out.extend([&mut head.w1, &mut head.b1, &mut head.w2, &mut head.b2]);
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|m| m.data().len()).sum()
    }

    fn check_input(&self, input: &GraphInput) -> Result<(), ModelError> {
        let got = input.observations.cols();
        if got != self.feature_len() {
            return Err(ModelError::FeatureLength { expected: self.feature_len(), got });
        }
        if input.observations.rows() != input.graph.n() {
            return Err(ShapeError::Mismatch {
                op: "graph input",
                left: input.observations.shape(),
                right: (input.graph.n(), input.graph.n()),
            }
            .into());
        }
        Ok(())
    }
}

/// Intermediate values of a forward pass, kept for backpropagation.
struct Trace {
    adjacency: Matrix,
    /// `h[0]` is the observation matrix, `h[l]` the output of layer `l`.
    h: Vec<Matrix>,
    /// Pre-activations of the GCN layers.
    z: Vec<Matrix>,
    policy_pre: Matrix,
    policy_hidden: Matrix,
    logits: Matrix,
    value_pre: Matrix,
    value_hidden: Matrix,
    values: Matrix,
}

fn forward(params: &ModelParams, input: &GraphInput) -> Result<Trace, ModelError> {
    params.check_input(input)?;
    let adjacency = input.graph.normalized_adjacency();
    let mut h = vec![input.observations.clone()];
    let mut z = Vec::with_capacity(params.gcn.len());
    for w in &params.gcn {
        let pre = matmul(&adjacency, &matmul(h.last().unwrap(), w)?)?;
        h.push(relu(&pre));
        z.push(pre);
    }
    let emb = h.last().unwrap();
    let policy_pre = matmul(emb, &params.policy.w1)?.add_row_vector(&params.policy.b1)?;
    let policy_hidden = relu(&policy_pre);
    let logits = matmul(&policy_hidden, &params.policy.w2)?.add_row_vector(&params.policy.b2)?;
    let value_pre = matmul(emb, &params.value.w1)?.add_row_vector(&params.value.b1)?;
    let value_hidden = relu(&value_pre);
    let values = matmul(&value_hidden, &params.value.w2)?.add_row_vector(&params.value.b2)?;
    Ok(Trace { adjacency, h, z, policy_pre, policy_hidden, logits, value_pre, value_hidden, values })
}

fn policy_rows(logits: &Matrix, temperature: f64) -> Vec<[f64; N_ACTIONS]> {
    (0..logits.rows())
        .map(|r| {
            let mut p = [0.0; N_ACTIONS];
            softmax_slice(logits.row(r), temperature, &mut p);
            p
        })
        .collect()
}

pub fn predict(params: &ModelParams, input: &GraphInput) -> Result<PolicyValue, ModelError> {
    let trace = forward(params, input)?;
    let values: Vec<f64> = trace.values.data().to_vec();
    let aggregate_value = if values.is_empty() { 0.0 } else { values.iter().sum::<f64>() / values.len() as f64 };
    Ok(PolicyValue { policies: policy_rows(&trace.logits, params.temperature), values, aggregate_value })
}

/// Policy and value of a single agent, touching only the rows within
/// `L` hops of it. Agrees with [`predict`] up to rounding.
pub fn predict_agent(params: &ModelParams, input: &GraphInput, agent: usize) -> Result<([f64; N_ACTIONS], f64), ModelError> {
    params.check_input(input)?;
    let graph = &input.graph;
    let n = graph.n();
    let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / ((graph.neighbors(i).len() + 1) as f64).sqrt()).collect();

    // needed[l] = rows of H_l that are required, for l = L..0.
    let layers = params.gcn.len();
    let mut needed = vec![vec![agent]];
    for _ in 0..layers {
        let last = needed.last().unwrap();
        let mut mark = vec![false; n];
        for &j in last {
            mark[j] = true;
            for &m in graph.neighbors(j) {
                mark[m] = true;
            }
        }
        needed.push((0..n).filter(|&j| mark[j]).collect());
    }
    needed.reverse();

    // rows[j] holds H_l[j] for j in needed[l]
    let mut rows: Vec<Option<Vec<f64>>> = (0..n).map(|j| Some(input.observations.row(j).to_vec())).collect();
    for (l, w) in params.gcn.iter().enumerate() {
        let width = w.cols();
        let mut projected: Vec<Option<Vec<f64>>> = vec![None; n];
        for &m in &needed[l] {
            let src = rows[m].as_ref().expect("row computed");
            let mut out = vec![0.0; width];
            for (k, &v) in src.iter().enumerate() {
                if v == 0.0 {
                    continue;
                }
                for (o, &wv) in out.iter_mut().zip(w.row(k)) {
                    *o += v * wv;
                }
            }
            projected[m] = Some(out);
        }
        let mut next: Vec<Option<Vec<f64>>> = vec![None; n];
        for &j in &needed[l + 1] {
            let mut out = vec![0.0; width];
            // same summation order as the dense product: ascending column of Â
            let mut cols: Vec<usize> = graph.neighbors(j).to_vec();
            cols.push(j);
            cols.sort_unstable();
            for m in cols {
                let a = inv_sqrt[j] * inv_sqrt[m];
                for (o, &p) in out.iter_mut().zip(projected[m].as_ref().expect("projected")) {
                    *o += a * p;
                }
            }
            out.iter_mut().for_each(|v| *v = v.max(0.0));
            next[j] = Some(out);
        }
        rows = next;
    }
    let emb = Matrix::from_vec(1, params.config().embedding_width(), rows[agent].take().expect("embedding"))?;
    let head = |mlp: &Mlp| -> Result<Matrix, ShapeError> {
        let hidden = relu(&matmul(&emb, &mlp.w1)?.add_row_vector(&mlp.b1)?);
        matmul(&hidden, &mlp.w2)?.add_row_vector(&mlp.b2)
    };
    let logits = head(&params.policy)?;
    let value = head(&params.value)?.get(0, 0);
    let mut policy = [0.0; N_ACTIONS];
    softmax_slice(logits.row(0), params.temperature, &mut policy);
    Ok((policy, value))
}

fn sample_loss(params: &ModelParams, target: &TrainingTarget) -> Result<(f64, Gradients), ModelError> {
    let n = target.graph_input.n_agents();
    if target.target_policies.len() != n {
        return Err(ModelError::TargetLength { expected: n, got: target.target_policies.len() });
    }
    if target.target_values.len() != n {
        return Err(ModelError::TargetLength { expected: n, got: target.target_values.len() });
    }
    let t = forward(params, &target.graph_input)?;
    let policy_targets =
        Matrix::from_vec(n, N_ACTIONS, target.target_policies.iter().flat_map(|p| p.iter().copied()).collect())?;
    let (policy_loss, d_logits) = softmax_cross_entropy(&t.logits, &policy_targets, params.temperature)?;

    let mut value_loss = 0.0;
    let mut d_values = Matrix::zeros(n, 1);
    for i in 0..n {
        let diff = t.values.get(i, 0) - target.target_values[i];
        value_loss += diff * diff;
        d_values.set(i, 0, 2.0 * diff);
    }

    let mut grads = Vec::new();
    let emb = t.h.last().unwrap();
    let mut d_emb = Matrix::zeros(emb.rows(), emb.cols());
    let mut head_grads = |mlp: &Mlp, pre: &Matrix, hidden: &Matrix, d_out: &Matrix| -> Result<[Matrix; 4], ShapeError> {
        let (d_hidden, g_w2) = numcore::matmul_backward(hidden, &mlp.w2, d_out)?;
        let g_b2 = d_out.sum_rows();
        let d_pre = relu_backward(pre, &d_hidden);
        let (d_e, g_w1) = numcore::matmul_backward(emb, &mlp.w1, &d_pre)?;
        let g_b1 = d_pre.sum_rows();
        d_emb = d_emb.add(&d_e)?;
        Ok([g_w1, g_b1, g_w2, g_b2])
    };
    let policy_grads = head_grads(&params.policy, &t.policy_pre, &t.policy_hidden, &d_logits)?;
    let value_grads = head_grads(&params.value, &t.value_pre, &t.value_hidden, &d_values)?;

    // Back through the GCN stack; Â is symmetric.
    let mut gcn_grads = vec![Matrix::zeros(0, 0); params.gcn.len()];
    let mut d_h = d_emb;
    for l in (0..params.gcn.len()).rev() {
        let d_z = relu_backward(&t.z[l], &d_h);
        let d_hw = matmul(&t.adjacency, &d_z)?;
        let (d_prev, g_w) = numcore::matmul_backward(&t.h[l], &params.gcn[l], &d_hw)?;
        gcn_grads[l] = g_w;
        d_h = d_prev;
    }
    grads.extend(gcn_grads);
    grads.extend(policy_grads);
    grads.extend(value_grads);
    Ok((policy_loss + value_loss, Gradients { tensors: grads }))
}

/// Summed cross-entropy plus squared value error over every agent of every
/// sample, with gradients for all parameters.
pub fn loss(params: &ModelParams, batch: &[TrainingTarget]) -> Result<(f64, Gradients), ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let mut total = 0.0;
    let mut grads = Gradients::zeros_like(params);
    for target in batch {
        let (l, g) = sample_loss(params, target)?;
        total += l;
        grads.accumulate(&g);
    }
    Ok((total, grads))
}

/// Loss value only; cheaper than [`loss`].
pub fn loss_value(params: &ModelParams, batch: &[TrainingTarget]) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for target in batch {
        let pv = predict(params, &target.graph_input)?;
        for (i, p) in pv.policies.iter().enumerate() {
            for (t, q) in target.target_policies[i].iter().zip(p) {
                if *t != 0.0 {
                    total -= t * q.ln();
                }
            }
            let d = pv.values[i] - target.target_values[i];
            total += d * d;
        }
    }
    Ok(total)
}

/// `θ ← θ − lr·clip(g)` with the default clipping norm.
pub fn apply_update(params: &ModelParams, grads: &Gradients, lr: f64) -> Result<ModelParams, ModelError> {
    apply_update_with(params, grads, &Sgd { lr, clip_norm: DEFAULT_CLIP_NORM })
}

pub fn apply_update_with(params: &ModelParams, grads: &Gradients, sgd: &Sgd) -> Result<ModelParams, ModelError> {
    let mut next = params.clone();
    sgd.step(&mut next.tensors_mut(), &grads.tensors)?;
    Ok(next)
}

pub fn save(params: &ModelParams) -> Vec<u8> {
    let tensors = params.tensors();
    let mut out = Vec::with_capacity(32 + 8 * params.parameter_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.gcn.len() as u32).to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    out.extend_from_slice(&params.temperature.to_le_bytes());
    for t in &tensors {
        out.extend_from_slice(&(t.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u32).to_le_bytes());
    }
    for t in &tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            CheckpointError::Corrupt(format!("truncated at byte {} (needed {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn load(bytes: &[u8]) -> Result<ModelParams, CheckpointError> {
    let corrupt = |m: String| CheckpointError::Corrupt(m);
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(corrupt("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
    }
    let layers = r.u32()? as usize;
    let count = r.u32()? as usize;
    if count != layers + 8 {
        return Err(corrupt(format!("{count} tensors for {layers} layers")));
    }
    let temperature = r.f64()?;
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(corrupt(format!("temperature {temperature}")));
    }
    let mut shapes = Vec::with_capacity(count);
    for _ in 0..count {
        shapes.push((r.u32()? as usize, r.u32()? as usize));
    }
    let mut tensors = Vec::with_capacity(count);
    for &(rows, cols) in &shapes {
        let len = rows.checked_mul(cols).ok_or_else(|| corrupt("shape overflow".into()))?;
        let raw = r.take(len.checked_mul(8).ok_or_else(|| corrupt("shape overflow".into()))?)?;
        let data: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(corrupt("non-finite parameter".into()));
        }
        tensors.push(Matrix::from_vec(rows, cols, data).map_err(|e| corrupt(e.to_string()))?);
    }
    if r.pos != bytes.len() {
        return Err(corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
    }

    let mut it = tensors.into_iter();
    let gcn: Vec<Matrix> = it.by_ref().take(layers).collect();
    let mut mlp = || Mlp { w1: it.next().unwrap(), b1: it.next().unwrap(), w2: it.next().unwrap(), b2: it.next().unwrap() };
    let policy = mlp();
    let value = mlp();
    let params = ModelParams { gcn, policy, value, temperature };
    validate_shapes(&params).map_err(corrupt)?;
    Ok(params)
}

/// Loads a checkpoint and checks it against an expected architecture.
pub fn load_expecting(bytes: &[u8], expected: &ModelConfig) -> Result<ModelParams, CheckpointError> {
    let params = load(bytes)?;
    let found = params.config();
    let same = found.feature_len == expected.feature_len
        && found.gcn_widths == expected.gcn_widths
        && found.head_hidden == expected.head_hidden;
    if !same {
        return Err(CheckpointError::Architecture { found, expected: expected.clone() });
    }
    Ok(params)
}

fn validate_shapes(p: &ModelParams) -> Result<(), String> {
    let mut prev = p.feature_len();
    for (l, w) in p.gcn.iter().enumerate() {
        if w.rows() != prev {
            return Err(format!("gcn layer {l} expects {} inputs, previous width is {prev}", w.rows()));
        }
        prev = w.cols();
    }
    for (name, head, out) in [("policy", &p.policy, N_ACTIONS), ("value", &p.value, 1)] {
        let h = head.w1.cols();
        let ok = head.w1.rows() == prev
            && head.b1.shape() == (1, h)
            && head.w2.shape() == (h, out)
            && head.b2.shape() == (1, out);
        if !ok {
            return Err(format!("{name} head shapes inconsistent"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obsgraph::CoordinationGraph;

    fn random_input(n: usize, f: usize, edges: &[(usize, usize)], rng: &mut ChaCha8Rng) -> GraphInput {
        GraphInput {
            observations: Matrix::from_fn(n, f, |_, _| if rng.gen_bool(0.3) { rng.gen_range(-1.0..1.0) } else { 0.0 }),
            graph: CoordinationGraph::new(n, edges.iter().copied()),
        }
    }

    fn small_config() -> ModelConfig {
        ModelConfig { feature_len: 6, gcn_widths: vec![5, 4], head_hidden: 3, temperature: 1.0 }
    }

    #[test]
    fn zero_params_give_uniform_policies() {
        let params = ModelParams::zeros(&ModelConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let input = random_input(3, 104, &[(0, 1)], &mut rng);
        let pv = predict(&params, &input).unwrap();
        for p in &pv.policies {
            assert!(p.iter().all(|&v| (v - 1.0 / 9.0).abs() < 1e-15));
        }
        assert!(pv.values.iter().all(|&v| v == 0.0));
        assert_eq!(pv.aggregate_value, 0.0);
    }

    #[test]
    fn wrong_feature_length_is_rejected() {
        let params = ModelParams::init(&small_config(), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let input = random_input(2, 7, &[], &mut rng);
        assert_eq!(predict(&params, &input), Err(ModelError::FeatureLength { expected: 6, got: 7 }));
    }

    #[test]
    fn single_agent_prediction_matches_full_pass() {
        let params = ModelParams::init(&small_config(), 9);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let input = random_input(5, 6, &[(0, 1), (1, 2), (3, 4), (0, 4)], &mut rng);
        let full = predict(&params, &input).unwrap();
        for i in 0..5 {
            let (p, v) = predict_agent(&params, &input, i).unwrap();
            assert!((v - full.values[i]).abs() < 1e-12);
            for (a, b) in p.iter().zip(&full.policies[i]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matching_target_leaves_entropy_only() {
        let params = ModelParams::init(&small_config(), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let input = random_input(2, 6, &[(0, 1)], &mut rng);
        let pv = predict(&params, &input).unwrap();
        let target = TrainingTarget {
            graph_input: input,
            target_policies: pv.policies.clone(),
            target_values: pv.values.clone(),
        };
        let (l, g) = loss(&params, &[target]).unwrap();
        let entropy: f64 = pv.policies.iter().flat_map(|p| p.iter()).map(|&q| -q * q.ln()).sum();
        assert!((l - entropy).abs() < 1e-12);
        // value head gradient: layer-2 weights and bias see a zero upstream gradient
        let k = params.gcn.len() + 4;
        assert!(g.tensors[k + 2].data().iter().all(|&v| v == 0.0));
        assert!(g.tensors[k + 3].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_prediction_against_one_hot_costs_ln_nine() {
        let params = ModelParams::zeros(&small_config());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut one_hot = [0.0; N_ACTIONS];
        one_hot[4] = 1.0;
        let target = TrainingTarget {
            graph_input: random_input(1, 6, &[], &mut rng),
            target_policies: vec![one_hot],
            target_values: vec![0.0],
        };
        let (l, _) = loss(&params, &[target]).unwrap();
        assert!((l - 9f64.ln()).abs() < 1e-12);
        assert!((l - 2.1972).abs() < 1e-4);
    }

    #[test]
    fn zero_gradient_update_is_identity() {
        let params = ModelParams::init(&small_config(), 5);
        let g = Gradients::zeros_like(&params);
        assert_eq!(apply_update(&params, &g, 0.1).unwrap(), params);
    }

    #[test]
    fn clipped_update_has_clip_norm() {
        let params = ModelParams::zeros(&small_config());
        let mut g = Gradients::zeros_like(&params);
        g.tensors[0].data_mut()[0] = 30.0;
        g.tensors[1].data_mut()[0] = 40.0;
        let next = apply_update(&params, &g, 1.0).unwrap();
        let moved: Vec<Matrix> = next.tensors().into_iter().cloned().collect();
        assert!((numcore::global_norm(&moved) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_round_trip_and_errors() {
        let params = ModelParams::init(&ModelConfig::default(), 77);
        let bytes = save(&params);
        let back = load(&bytes).unwrap();
        assert_eq!(back, params);
        for (a, b) in back.tensors().iter().zip(params.tensors()) {
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert!(matches!(load(&bytes[..bytes.len() - 3]), Err(CheckpointError::Corrupt(_))));
        assert!(matches!(load(&bytes[..20]), Err(CheckpointError::Corrupt(_))));
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(load(&bad), Err(CheckpointError::VersionMismatch { found: 9, .. })));
        let mut three = ModelConfig::default();
        three.gcn_widths = vec![64, 64, 64];
        assert!(matches!(load_expecting(&bytes, &three), Err(CheckpointError::Architecture { .. })));
        assert!(load_expecting(&bytes, &ModelConfig::default()).is_ok());
    }
}
