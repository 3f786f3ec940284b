//! Adaptation-gate fusion: a learned sigmoid gate computes, per token, a
//! shift vector from an auxiliary feature representation; the shift is added
//! to the token embedding with its magnitude capped relative to the embedding
//! norm, followed by layer normalization and (in training) inverted dropout.
//!
//! Per token i with embedding e and repeated feature vector h_v:
//!   gate   w   = sigmoid(W_hv [e; h_v] + b_v)
//!   shift  h_m = w (W_v h_v) + b_m
//!   cap    a   = min(beta ||e|| / ||h_m||, 1)
//!   fused  e_m = e + a h_m
//! then layer norm (learnable gain/bias) and dropout. The backward pass is
//! analytic, including the flow through both norms inside the cap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{axpy, dot, l2_norm, mean, Matrix};

/// N x d token embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSequence {
    pub data: Matrix,
}

impl EmbeddingSequence {
    pub fn new(data: Matrix) -> Result<Self> {
        if data.rows == 0 || data.cols == 0 {
            return Err(Error::Validation(
                "embedding sequence needs at least one token and one dimension".into(),
            ));
        }
        if !data.all_finite() {
            return Err(Error::NonFinite("embedding sequence".into()));
        }
        Ok(EmbeddingSequence { data })
    }

    pub fn seq_len(&self) -> usize {
        self.data.rows
    }

    pub fn dim(&self) -> usize {
        self.data.cols
    }
}

/// The per-token feature representation; one vector, conceptually repeated
/// across all token positions of a text.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedFeature {
    pub data: Vec<f64>,
}

impl ProjectedFeature {
    pub fn new(data: Vec<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Validation("feature vector must be non-empty".into()));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("feature vector".into()));
        }
        Ok(ProjectedFeature { data })
    }

    pub fn dim(&self) -> usize {
        self.data.len()
    }
}

/// Learnable parameters of the gate, shift, and the trailing layer norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    /// Gate weights, one row over the concatenated [e; h_v], length d + d_f.
    pub w_hv: Vec<f64>,
    /// Scalar gate bias.
    pub b_v: f64,
    /// Shift projection, d x d_f.
    pub w_v: Matrix,
    /// Shift bias, length d, shared across tokens.
    pub b_m: Vec<f64>,
    /// Cap scale. Must be positive in real configurations; the kernels accept
    /// zero so the no-fusion limit stays testable.
    pub beta: f64,
    pub ln_gain: Vec<f64>,
    pub ln_bias: Vec<f64>,
    pub ln_eps: f64,
}

pub const DEFAULT_LN_EPS: f64 = 1e-5;

impl FusionParams {
    /// Seeded init: weights uniform in +/- 1/sqrt(fan_in), biases zero,
    /// layer-norm gain one and bias zero.
    pub fn init(d: usize, d_f: usize, beta: f64, rng: &mut ChaCha8Rng) -> Self {
        let gate_bound = 1.0 / ((d + d_f) as f64).sqrt();
        let shift_bound = 1.0 / (d_f as f64).sqrt();
        let w_hv = (0..d + d_f)
            .map(|_| rng.gen_range(-gate_bound..gate_bound))
            .collect();
        let mut w_v = Matrix::zeros(d, d_f);
        for v in w_v.data.iter_mut() {
            *v = rng.gen_range(-shift_bound..shift_bound);
        }
        FusionParams {
            w_hv,
            b_v: 0.0,
            w_v,
            b_m: vec![0.0; d],
            beta,
            ln_gain: vec![1.0; d],
            ln_bias: vec![0.0; d],
            ln_eps: DEFAULT_LN_EPS,
        }
    }

    pub fn validate(&self, d: usize, d_f: usize) -> Result<()> {
        if self.w_hv.len() != d + d_f {
            return Err(Error::dim("gate weights w_hv", d + d_f, self.w_hv.len()));
        }
        if self.w_v.rows != d || self.w_v.cols != d_f {
            return Err(Error::dim("shift projection w_v rows", d, self.w_v.rows));
        }
        if self.b_m.len() != d {
            return Err(Error::dim("shift bias b_m", d, self.b_m.len()));
        }
        if self.ln_gain.len() != d || self.ln_bias.len() != d {
            return Err(Error::dim("layer norm gain/bias", d, self.ln_gain.len()));
        }
        let finite = self.w_hv.iter().all(|v| v.is_finite())
            && self.b_v.is_finite()
            && self.w_v.all_finite()
            && self.b_m.iter().all(|v| v.is_finite())
            && self.ln_gain.iter().all(|v| v.is_finite())
            && self.ln_bias.iter().all(|v| v.is_finite())
            && self.beta.is_finite()
            && self.ln_eps.is_finite();
        if !finite {
            return Err(Error::NonFinite("fusion parameters".into()));
        }
        if self.beta < 0.0 {
            return Err(Error::Validation("fusion beta must be non-negative".into()));
        }
        if self.ln_eps <= 0.0 {
            return Err(Error::Validation("layer norm epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Everything the backward pass needs, plus the diagnostics the tests pin:
/// gates, shifts, caps, clamp flags, and the layer-norm statistics.
#[derive(Debug, Clone)]
pub struct FusionCache {
    pub gate: Vec<f64>,
    /// h_m rows, N x d.
    pub shift: Matrix,
    pub alpha: Vec<f64>,
    /// True exactly where alpha = 1 (the cap in force, or a zero shift).
    pub clamped: Vec<bool>,
    pub ln_mean: Vec<f64>,
    pub ln_var: Vec<f64>,
    /// ||e_i||_2 per token.
    pub e_norm: Vec<f64>,
    /// ||h_m_i||_2 per token.
    pub shift_norm: Vec<f64>,
    /// W_v h_v, shared across tokens.
    pub shift_base: Vec<f64>,
    /// Fused rows before layer norm (e + alpha h_m).
    pub pre_ln: Matrix,
    /// Normalized rows before gain/bias.
    pub normed: Matrix,
    /// Inverted-dropout scale per coordinate (0 or 1/(1-rate)); None when
    /// dropout was not applied.
    pub dropout_mask: Option<Matrix>,
}

#[derive(Debug, Clone)]
pub struct FusionGradients {
    pub d_w_hv: Vec<f64>,
    pub d_b_v: f64,
    pub d_w_v: Matrix,
    pub d_b_m: Vec<f64>,
    pub d_ln_gain: Vec<f64>,
    pub d_ln_bias: Vec<f64>,
    pub d_embeddings: Matrix,
    /// Summed over token positions.
    pub d_features: Vec<f64>,
}

impl FusionGradients {
    pub fn zeros(n: usize, d: usize, d_f: usize) -> Self {
        FusionGradients {
            d_w_hv: vec![0.0; d + d_f],
            d_b_v: 0.0,
            d_w_v: Matrix::zeros(d, d_f),
            d_b_m: vec![0.0; d],
            d_ln_gain: vec![0.0; d],
            d_ln_bias: vec![0.0; d],
            d_embeddings: Matrix::zeros(n, d),
            d_features: vec![0.0; d_f],
        }
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let ez = z.exp();
        ez / (1.0 + ez)
    }
}

/// Forward pass. Dropout fires only when `training` is set and the rate is
/// positive; the seed makes it reproducible.
pub fn fusion_forward(
    e: &EmbeddingSequence,
    h_v: &ProjectedFeature,
    params: &FusionParams,
    dropout_rate: f64,
    rng_seed: u64,
    training: bool,
) -> Result<(EmbeddingSequence, FusionCache)> {
    let n = e.seq_len();
    let d = e.dim();
    let d_f = h_v.dim();
    params.validate(d, d_f)?;
    if !(0.0..1.0).contains(&dropout_rate) {
        return Err(Error::Validation(format!(
            "dropout rate {dropout_rate} outside [0,1)"
        )));
    }

    let shift_base = params.w_v.matvec(&h_v.data);

    let mut gate = vec![0.0; n];
    let mut shift = Matrix::zeros(n, d);
    let mut alpha = vec![0.0; n];
    let mut clamped = vec![false; n];
    let mut e_norm = vec![0.0; n];
    let mut shift_norm = vec![0.0; n];
    let mut ln_mean = vec![0.0; n];
    let mut ln_var = vec![0.0; n];
    let mut pre_ln = Matrix::zeros(n, d);
    let mut normed = Matrix::zeros(n, d);
    let mut out = Matrix::zeros(n, d);

    for i in 0..n {
        let e_row = e.data.row(i);

        // gate over the concatenated [e; h_v]
        let z = dot(&params.w_hv[..d], e_row) + dot(&params.w_hv[d..], &h_v.data) + params.b_v;
        let w = sigmoid(z);
        gate[i] = w;

        // shift vector
        for j in 0..d {
            shift.set(i, j, w * shift_base[j] + params.b_m[j]);
        }
        let h_m = shift.row(i);

        // capped scale; a zero shift makes the scale immaterial, defined as 1
        let en = l2_norm(e_row);
        let sn = l2_norm(h_m);
        e_norm[i] = en;
        shift_norm[i] = sn;
        let (a, cl) = if sn == 0.0 {
            (1.0, true)
        } else {
            let ratio = params.beta * en / sn;
            if ratio >= 1.0 {
                (1.0, true)
            } else {
                (ratio, false)
            }
        };
        alpha[i] = a;
        clamped[i] = cl;

        for j in 0..d {
            pre_ln.set(i, j, e_row[j] + a * shift.get(i, j));
        }

        // layer norm with population variance over the d coordinates
        let x = pre_ln.row(i);
        let mu = mean(x);
        let var = x.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / d as f64;
        ln_mean[i] = mu;
        ln_var[i] = var;
        let sigma = (var + params.ln_eps).sqrt();
        for j in 0..d {
            let xh = (pre_ln.get(i, j) - mu) / sigma;
            normed.set(i, j, xh);
            out.set(i, j, params.ln_gain[j] * xh + params.ln_bias[j]);
        }
    }

    let dropout_mask = if training && dropout_rate > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        let keep_scale = 1.0 / (1.0 - dropout_rate);
        let mut mask = Matrix::zeros(n, d);
        for i in 0..n {
            for j in 0..d {
                let factor = if rng.gen::<f64>() < dropout_rate {
                    0.0
                } else {
                    keep_scale
                };
                mask.set(i, j, factor);
                out.set(i, j, out.get(i, j) * factor);
            }
        }
        Some(mask)
    } else {
        None
    };

    let cache = FusionCache {
        gate,
        shift,
        alpha,
        clamped,
        ln_mean,
        ln_var,
        e_norm,
        shift_norm,
        shift_base,
        pre_ln,
        normed,
        dropout_mask,
    };
    Ok((EmbeddingSequence { data: out }, cache))
}

/// Analytic gradients of sum(upstream (.) output) with respect to every
/// parameter, the embeddings, and the feature vector. Where the cap is not
/// in force the gradient flows through alpha as a function of both norms;
/// where it is, alpha is the constant 1.
pub fn fusion_backward(
    cache: &FusionCache,
    e: &EmbeddingSequence,
    h_v: &ProjectedFeature,
    params: &FusionParams,
    upstream: &Matrix,
) -> Result<FusionGradients> {
    let n = e.seq_len();
    let d = e.dim();
    let d_f = h_v.dim();
    params.validate(d, d_f)?;
    if upstream.rows != n || upstream.cols != d {
        return Err(Error::dim("upstream rows", n, upstream.rows));
    }
    if cache.gate.len() != n || cache.shift.rows != n || cache.shift.cols != d {
        return Err(Error::Validation(
            "fusion cache does not match the given inputs".into(),
        ));
    }

    let mut g = FusionGradients::zeros(n, d, d_f);
    let mut d_shift_base = vec![0.0; d];
    let inv_d = 1.0 / d as f64;

    for i in 0..n {
        let up = upstream.row(i);
        let xhat = cache.normed.row(i);

        // through dropout to the layer-norm output
        let gy: Vec<f64> = match &cache.dropout_mask {
            Some(mask) => {
                let mk = mask.row(i);
                up.iter().zip(mk).map(|(u, m)| u * m).collect()
            }
            None => up.to_vec(),
        };

        // layer-norm affine parameters, then the normalization itself
        let mut d_xhat = vec![0.0; d];
        for j in 0..d {
            g.d_ln_bias[j] += gy[j];
            g.d_ln_gain[j] += gy[j] * xhat[j];
            d_xhat[j] = gy[j] * params.ln_gain[j];
        }
        let sigma = (cache.ln_var[i] + params.ln_eps).sqrt();
        let m1 = d_xhat.iter().sum::<f64>() * inv_d;
        let m2 = dot(&d_xhat, xhat) * inv_d;
        // gradient w.r.t. the pre-LN fused row
        let mut gm = vec![0.0; d];
        for j in 0..d {
            gm[j] = (d_xhat[j] - m1 - xhat[j] * m2) / sigma;
        }

        let e_row = e.data.row(i);
        let h_m = cache.shift.row(i);
        let mut d_e_row = gm.clone();
        let mut d_hm = vec![0.0; d];
        if cache.clamped[i] {
            d_hm.copy_from_slice(&gm);
        } else {
            // alpha = beta a / b with a = ||e||, b = ||h_m||
            let a = cache.e_norm[i];
            let b = cache.shift_norm[i];
            let g_dot_hm = dot(&gm, h_m);
            let ce = g_dot_hm * params.beta / (a * b);
            let ch = g_dot_hm * params.beta * a / (b * b * b);
            let alpha = cache.alpha[i];
            for j in 0..d {
                d_e_row[j] += ce * e_row[j];
                d_hm[j] = alpha * gm[j] - ch * h_m[j];
            }
        }

        // h_m = w * (W_v h_v) + b_m
        axpy(&mut g.d_b_m, 1.0, &d_hm);
        let d_w = dot(&d_hm, &cache.shift_base);
        axpy(&mut d_shift_base, cache.gate[i], &d_hm);

        // gate w = sigmoid(W_hv [e; h_v] + b_v)
        let w = cache.gate[i];
        let dz = d_w * w * (1.0 - w);
        g.d_b_v += dz;
        for j in 0..d {
            g.d_w_hv[j] += dz * e_row[j];
            d_e_row[j] += dz * params.w_hv[j];
        }
        for j in 0..d_f {
            g.d_w_hv[d + j] += dz * h_v.data[j];
            g.d_features[j] += dz * params.w_hv[d + j];
        }

        g.d_embeddings.row_mut(i).copy_from_slice(&d_e_row);
    }

    // shift_base = W_v h_v, shared by all tokens
    for r in 0..d {
        for c in 0..d_f {
            g.d_w_v.set(r, c, d_shift_base[r] * h_v.data[c]);
        }
    }
    axpy(&mut g.d_features, 1.0, &params.w_v.matvec_t(&d_shift_base));

    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(rows: Vec<Vec<f64>>) -> EmbeddingSequence {
        EmbeddingSequence::new(Matrix::from_rows(&rows).unwrap()).unwrap()
    }

    fn zero_gate_params(d: usize, d_f: usize) -> FusionParams {
        FusionParams {
            w_hv: vec![0.0; d + d_f],
            b_v: 0.0,
            w_v: Matrix::zeros(d, d_f),
            b_m: vec![0.0; d],
            beta: 0.1,
            ln_gain: vec![1.0; d],
            ln_bias: vec![0.0; d],
            ln_eps: DEFAULT_LN_EPS,
        }
    }

    fn random_instance(seed: u64, n: usize, d: usize, d_f: usize) -> (EmbeddingSequence, ProjectedFeature, FusionParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut e = Matrix::zeros(n, d);
        for v in e.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let h_v: Vec<f64> = (0..d_f).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut params = FusionParams::init(d, d_f, 0.3, &mut rng);
        params.b_v = rng.gen_range(-0.2..0.2);
        for v in params.b_m.iter_mut() {
            *v = rng.gen_range(-0.3..0.3);
        }
        (
            EmbeddingSequence::new(e).unwrap(),
            ProjectedFeature::new(h_v).unwrap(),
            params,
        )
    }

    #[test]
    fn zero_gate_weights_give_half_gates() {
        let e = seq(vec![vec![3.0, -1.5], vec![0.2, 9.0]]);
        let h_v = ProjectedFeature::new(vec![2.0]).unwrap();
        let mut params = zero_gate_params(2, 1);
        params.w_v = Matrix::from_rows(&[vec![1.0], vec![-2.0]]).unwrap();
        params.b_m = vec![0.5, 0.5];
        let (_, cache) = fusion_forward(&e, &h_v, &params, 0.0, 0, false).unwrap();
        assert!(cache.gate.iter().all(|&w| w == 0.5));
    }

    #[test]
    fn zero_shift_is_identity_before_layer_norm() {
        let e = seq(vec![vec![1.0, 2.0, 3.0], vec![-1.0, 0.5, 0.25]]);
        let h_v = ProjectedFeature::new(vec![0.7, -0.3]).unwrap();
        let mut params = zero_gate_params(3, 2);
        params.w_hv = vec![0.2, -0.1, 0.3, 0.5, -0.5];
        // W_v = 0 and b_m = 0: the shift vanishes, alpha is defined as 1
        let (_, cache) = fusion_forward(&e, &h_v, &params, 0.0, 0, false).unwrap();
        assert_eq!(cache.pre_ln, e.data);
        assert!(cache.alpha.iter().all(|&a| a == 1.0));
        assert!(cache.clamped.iter().all(|&c| c));
    }

    // d = 2, d_f = 1, e = (3,4), shift forced to (0,2) through b_m:
    // beta = 0.1 gives alpha = min(0.1 * 5 / 2, 1) = 0.25 and fused (3, 4.5).
    #[test]
    fn hand_example_cap_active_branch() {
        let e = seq(vec![vec![3.0, 4.0]]);
        let h_v = ProjectedFeature::new(vec![1.0]).unwrap();
        let mut params = zero_gate_params(2, 1);
        params.b_m = vec![0.0, 2.0];
        params.beta = 0.1;
        let (_, cache) = fusion_forward(&e, &h_v, &params, 0.0, 0, false).unwrap();
        assert_eq!(cache.shift.row(0), &[0.0, 2.0]);
        assert!((cache.alpha[0] - 0.25).abs() < 1e-15);
        assert!(!cache.clamped[0]);
        assert_eq!(cache.pre_ln.row(0), &[3.0, 4.5]);
    }

    #[test]
    fn hand_example_cap_clamped_branch() {
        let e = seq(vec![vec![3.0, 4.0]]);
        let h_v = ProjectedFeature::new(vec![1.0]).unwrap();
        let mut params = zero_gate_params(2, 1);
        params.b_m = vec![0.0, 2.0];
        params.beta = 10.0;
        let (_, cache) = fusion_forward(&e, &h_v, &params, 0.0, 0, false).unwrap();
        assert_eq!(cache.alpha[0], 1.0);
        assert!(cache.clamped[0]);
        assert_eq!(cache.pre_ln.row(0), &[3.0, 6.0]);
    }

    #[test]
    fn beta_zero_reproduces_the_input_exactly() {
        let (e, h_v, mut params) = random_instance(42, 5, 4, 3);
        params.beta = 0.0;
        let (_, cache) = fusion_forward(&e, &h_v, &params, 0.0, 0, false).unwrap();
        assert_eq!(cache.pre_ln, e.data);
    }

    #[test]
    fn gate_and_alpha_ranges_hold() {
        for seed in 0..50 {
            let (e, h_v, params) = random_instance(seed, 6, 5, 3);
            let (_, cache) = fusion_forward(&e, &h_v, &params, 0.0, 0, false).unwrap();
            for i in 0..e.seq_len() {
                assert!(cache.gate[i] > 0.0 && cache.gate[i] < 1.0);
                assert!(cache.alpha[i] > 0.0 && cache.alpha[i] <= 1.0);
                assert_eq!(cache.clamped[i], cache.alpha[i] == 1.0);
            }
        }
    }

    #[test]
    fn layer_norm_statistics_are_normalized() {
        for seed in 0..20 {
            let (e, h_v, params) = random_instance(seed, 4, 8, 3);
            let (_, cache) = fusion_forward(&e, &h_v, &params, 0.0, 0, false).unwrap();
            for i in 0..e.seq_len() {
                let row = cache.normed.row(i);
                let m = mean(row);
                assert!(m.abs() < 1e-6, "seed {seed} token {i} mean {m}");
                // variance of the normalized row equals var/(var+eps)
                let var_hat = row.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / row.len() as f64;
                let expect = cache.ln_var[i] / (cache.ln_var[i] + params.ln_eps);
                assert!((var_hat - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn forward_is_bit_deterministic() {
        let (e, h_v, params) = random_instance(9, 7, 4, 3);
        let (out1, c1) = fusion_forward(&e, &h_v, &params, 0.3, 1234, true).unwrap();
        let (out2, c2) = fusion_forward(&e, &h_v, &params, 0.3, 1234, true).unwrap();
        assert_eq!(out1.data, out2.data);
        assert_eq!(c1.dropout_mask, c2.dropout_mask);
    }

    #[test]
    fn dropout_rate_and_mean_preservation() {
        // 100 x 100 grid: 10,000 coordinates. Bias the LN output to ~5 so the
        // mean-preservation check is against a signal, not against zero.
        let n = 100;
        let d = 100;
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut e = Matrix::zeros(n, d);
        for v in e.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let e = EmbeddingSequence::new(e).unwrap();
        let h_v = ProjectedFeature::new(vec![0.4, -0.2]).unwrap();
        let mut params = FusionParams::init(d, 2, 0.3, &mut rng);
        params.ln_bias = vec![5.0; d];
        let rate = 0.1;

        let (dry, _) = fusion_forward(&e, &h_v, &params, rate, 0, false).unwrap();
        let (wet, cache) = fusion_forward(&e, &h_v, &params, rate, 555, true).unwrap();

        let mask = cache.dropout_mask.unwrap();
        let zeroed = mask.data.iter().filter(|&&m| m == 0.0).count() as f64;
        let total = (n * d) as f64;
        let frac = zeroed / total;
        // 3 sigma of a Bernoulli(0.1) mean over 10,000 draws
        let sigma = (rate * (1.0 - rate) / total).sqrt();
        assert!((frac - rate).abs() < 3.0 * sigma, "zeroed fraction {frac}");

        let mean_dry = mean(&dry.data.data);
        let mean_wet = mean(&wet.data.data);
        assert!(
            ((mean_wet - mean_dry) / mean_dry).abs() < 0.02,
            "mean drifted: dry {mean_dry}, wet {mean_wet}"
        );
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let (e, h_v, params) = random_instance(3, 5, 4, 3);
        let (_, cache) = fusion_forward(&e, &h_v, &params, 0.0, 0, false).unwrap();
        let upstream = Matrix::zeros(5, 4);
        let g = fusion_backward(&cache, &e, &h_v, &params, &upstream).unwrap();
        assert!(g.d_w_hv.iter().all(|&v| v == 0.0));
        assert_eq!(g.d_b_v, 0.0);
        assert!(g.d_w_v.data.iter().all(|&v| v == 0.0));
        assert!(g.d_b_m.iter().all(|&v| v == 0.0));
        assert!(g.d_embeddings.data.iter().all(|&v| v == 0.0));
        assert!(g.d_features.iter().all(|&v| v == 0.0));
    }

    // With a zero shift path the gate has no downstream effect, so its
    // gradient vanishes and the embedding gradient is that of the layer
    // norm alone. Finite differences over the embeddings confirm it.
    #[test]
    fn zero_shift_kills_gate_gradient() {
        let (e, h_v, mut params) = random_instance(11, 3, 4, 2);
        params.w_v = Matrix::zeros(4, 2);
        params.b_m = vec![0.0; 4];
        let (_, cache) = fusion_forward(&e, &h_v, &params, 0.0, 0, false).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut upstream = Matrix::zeros(3, 4);
        for v in upstream.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let g = fusion_backward(&cache, &e, &h_v, &params, &upstream).unwrap();
        assert!(g.d_w_hv.iter().all(|&v| v == 0.0));
        assert_eq!(g.d_b_v, 0.0);

        // finite differences on every embedding coordinate
        let loss = |em: &EmbeddingSequence| -> f64 {
            let (out, _) = fusion_forward(em, &h_v, &params, 0.0, 0, false).unwrap();
            dot(&out.data.data, &upstream.data)
        };
        let h = 1e-6;
        for r in 0..3 {
            for c in 0..4 {
                let mut plus = e.clone();
                plus.data.set(r, c, e.data.get(r, c) + h);
                let mut minus = e.clone();
                minus.data.set(r, c, e.data.get(r, c) - h);
                let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let an = g.d_embeddings.get(r, c);
                assert!(
                    (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8) < 1e-4,
                    "coord ({r},{c}): analytic {an}, fd {fd}"
                );
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let e = seq(vec![vec![1.0, 2.0]]);
        let h_v = ProjectedFeature::new(vec![1.0, 2.0, 3.0]).unwrap();
        let params = zero_gate_params(2, 1); // expects d_f = 1
        let err = fusion_forward(&e, &h_v, &params, 0.0, 0, false).unwrap_err();
        assert!(matches!(err, Error::DimMismatch { .. }));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let bad = Matrix::from_rows(&[vec![1.0, f64::NAN]]).unwrap();
        assert!(EmbeddingSequence::new(bad).is_err());
        assert!(ProjectedFeature::new(vec![f64::INFINITY]).is_err());
    }
}
