//! Desk-scale text classifier around the fusion layer: hashed token
//! embeddings, feature projection to 128-d, fusion, mean pooling, a 128-unit
//! ReLU head, and a K-way softmax. Everything is f64 and hand-backpropped.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{
    fusion_backward, fusion_forward, EmbeddingSequence, FusionCache, FusionParams,
    ProjectedFeature,
};
use crate::matrix::{axpy, Matrix};

/// Feature vectors are projected to this width before fusion.
pub const FEATURE_PROJ_DIM: usize = 128;
/// Width of the ReLU classification head.
pub const HIDDEN_DIM: usize = 128;

const MODEL_FORMAT_VERSION: u32 = 1;

/// y = W x + b with W stored out_dim x in_dim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl AffineMap {
    fn init(out_dim: usize, in_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut w = Matrix::zeros(out_dim, in_dim);
        for v in w.data.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        AffineMap {
            w,
            b: vec![0.0; out_dim],
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.w.matvec(x);
        axpy(&mut y, 1.0, &self.b);
        y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Hashed vocabulary size (id 0 is the null token).
    pub vocab: usize,
    /// Token embedding width d.
    pub embed_dim: usize,
    /// Raw feature width before projection.
    pub feature_dim: usize,
    pub num_classes: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        if self.vocab < 2 {
            return Err(Error::Validation("vocab must be at least 2".into()));
        }
        if self.embed_dim == 0 || self.feature_dim == 0 {
            return Err(Error::Validation("model dimensions must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Validation("need at least two classes".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModelParams {
    pub dims: ModelDims,
    /// V x d embedding table.
    pub embed_table: Matrix,
    pub fusion: FusionParams,
    /// feature_dim -> 128.
    pub feature_proj: AffineMap,
    /// d -> 128 with ReLU.
    pub head_hidden: AffineMap,
    /// 128 -> K.
    pub head_out: AffineMap,
}

impl ToyModelParams {
    pub fn init(dims: ModelDims, fusion_beta: f64, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embed_bound = 1.0 / (dims.embed_dim as f64).sqrt();
        let mut embed_table = Matrix::zeros(dims.vocab, dims.embed_dim);
        for v in embed_table.data.iter_mut() {
            *v = rng.gen_range(-embed_bound..embed_bound);
        }
        let fusion = FusionParams::init(dims.embed_dim, FEATURE_PROJ_DIM, fusion_beta, &mut rng);
        let feature_proj = AffineMap::init(FEATURE_PROJ_DIM, dims.feature_dim, &mut rng);
        let head_hidden = AffineMap::init(HIDDEN_DIM, dims.embed_dim, &mut rng);
        let head_out = AffineMap::init(dims.num_classes, HIDDEN_DIM, &mut rng);
        Ok(ToyModelParams {
            dims,
            embed_table,
            fusion,
            feature_proj,
            head_hidden,
            head_out,
        })
    }

    /// Trainable tensors in a fixed order; gradients mirror it.
    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.embed_table.data,
            &mut self.fusion.w_hv,
            std::slice::from_mut(&mut self.fusion.b_v),
            &mut self.fusion.w_v.data,
            &mut self.fusion.b_m,
            &mut self.fusion.ln_gain,
            &mut self.fusion.ln_bias,
            &mut self.feature_proj.w.data,
            &mut self.feature_proj.b,
            &mut self.head_hidden.w.data,
            &mut self.head_hidden.b,
            &mut self.head_out.w.data,
            &mut self.head_out.b,
        ]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            params: self.clone(),
        };
        let json = serde_json::to_string(&file)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text)?;
        if file.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported model format version {}",
                file.format_version
            )));
        }
        Ok(file.params)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    params: ToyModelParams,
}

/// Gradients for every trainable tensor, used as a batch accumulator.
#[derive(Debug, Clone)]
pub struct ToyGradients {
    pub embed_table: Matrix,
    pub w_hv: Vec<f64>,
    pub b_v: f64,
    pub w_v: Matrix,
    pub b_m: Vec<f64>,
    pub ln_gain: Vec<f64>,
    pub ln_bias: Vec<f64>,
    pub feature_proj_w: Matrix,
    pub feature_proj_b: Vec<f64>,
    pub head_hidden_w: Matrix,
    pub head_hidden_b: Vec<f64>,
    pub head_out_w: Matrix,
    pub head_out_b: Vec<f64>,
}

impl ToyGradients {
    pub fn zeros(dims: &ModelDims) -> Self {
        let d = dims.embed_dim;
        ToyGradients {
            embed_table: Matrix::zeros(dims.vocab, d),
            w_hv: vec![0.0; d + FEATURE_PROJ_DIM],
            b_v: 0.0,
            w_v: Matrix::zeros(d, FEATURE_PROJ_DIM),
            b_m: vec![0.0; d],
            ln_gain: vec![0.0; d],
            ln_bias: vec![0.0; d],
            feature_proj_w: Matrix::zeros(FEATURE_PROJ_DIM, dims.feature_dim),
            feature_proj_b: vec![0.0; FEATURE_PROJ_DIM],
            head_hidden_w: Matrix::zeros(HIDDEN_DIM, d),
            head_hidden_b: vec![0.0; HIDDEN_DIM],
            head_out_w: Matrix::zeros(dims.num_classes, HIDDEN_DIM),
            head_out_b: vec![0.0; dims.num_classes],
        }
    }

    pub fn clear(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    /// Same order as ToyModelParams::tensors_mut.
    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.embed_table.data,
            &mut self.w_hv,
            std::slice::from_mut(&mut self.b_v),
            &mut self.w_v.data,
            &mut self.b_m,
            &mut self.ln_gain,
            &mut self.ln_bias,
            &mut self.feature_proj_w.data,
            &mut self.feature_proj_b,
            &mut self.head_hidden_w.data,
            &mut self.head_hidden_b,
            &mut self.head_out_w.data,
            &mut self.head_out_b,
        ]
    }

    pub(crate) fn tensors(&self) -> Vec<&[f64]> {
        vec![
            &self.embed_table.data,
            &self.w_hv,
            std::slice::from_ref(&self.b_v),
            &self.w_v.data,
            &self.b_m,
            &self.ln_gain,
            &self.ln_bias,
            &self.feature_proj_w.data,
            &self.feature_proj_b,
            &self.head_hidden_w.data,
            &self.head_hidden_b,
            &self.head_out_w.data,
            &self.head_out_b,
        ]
    }
}

/// Everything the backward pass needs from one forward evaluation.
pub struct ForwardCache {
    pub tokens: Vec<usize>,
    pub feature_raw: Vec<f64>,
    pub embeddings: EmbeddingSequence,
    pub h_v: ProjectedFeature,
    pub fusion_cache: FusionCache,
    pub fused: Matrix,
    pub pooled: Vec<f64>,
    pub hidden_pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Forward pass over pre-hashed token ids and a raw feature vector.
pub fn toy_forward(
    tokens: &[usize],
    feature_raw: &[f64],
    params: &ToyModelParams,
    dropout_rate: f64,
    training: bool,
    seed: u64,
) -> Result<(Vec<f64>, ForwardCache)> {
    let dims = &params.dims;
    if tokens.is_empty() {
        return Err(Error::Validation("token list must be non-empty".into()));
    }
    if feature_raw.len() != dims.feature_dim {
        return Err(Error::dim("raw feature vector", dims.feature_dim, feature_raw.len()));
    }
    for &t in tokens {
        if t >= dims.vocab {
            return Err(Error::Validation(format!(
                "token id {t} out of range for vocab {}",
                dims.vocab
            )));
        }
    }

    let n = tokens.len();
    let d = dims.embed_dim;
    let mut e = Matrix::zeros(n, d);
    for (i, &t) in tokens.iter().enumerate() {
        e.row_mut(i).copy_from_slice(params.embed_table.row(t));
    }
    let embeddings = EmbeddingSequence::new(e)?;

    let h_v = ProjectedFeature::new(params.feature_proj.apply(feature_raw))?;
    let (fused, fusion_cache) = fusion_forward(
        &embeddings,
        &h_v,
        &params.fusion,
        dropout_rate,
        seed,
        training,
    )?;

    let mut pooled = vec![0.0; d];
    for i in 0..n {
        axpy(&mut pooled, 1.0 / n as f64, fused.data.row(i));
    }

    let hidden_pre = params.head_hidden.apply(&pooled);
    let hidden: Vec<f64> = hidden_pre.iter().map(|&v| v.max(0.0)).collect();
    let logits = params.head_out.apply(&hidden);

    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    let lse = max + sum_exp.ln();
    let probs: Vec<f64> = logits.iter().map(|&z| (z - lse).exp()).collect();

    let cache = ForwardCache {
        tokens: tokens.to_vec(),
        feature_raw: feature_raw.to_vec(),
        embeddings,
        h_v,
        fusion_cache,
        fused: fused.data,
        pooled,
        hidden_pre,
        hidden,
        logits,
        probs: probs.clone(),
    };
    Ok((probs, cache))
}

/// Accumulate gradients for one sample into `grads`, starting from the
/// logit gradient (p - y_smoothed, possibly scaled by the batch weight).
pub fn toy_backward(
    cache: &ForwardCache,
    params: &ToyModelParams,
    d_logits: &[f64],
    grads: &mut ToyGradients,
) -> Result<()> {
    let dims = &params.dims;
    let d = dims.embed_dim;
    let k = dims.num_classes;
    if d_logits.len() != k {
        return Err(Error::dim("logit gradient", k, d_logits.len()));
    }
    let n = cache.tokens.len();

    // head_out: logits = W_o hidden + b_o
    for r in 0..k {
        axpy(grads.head_out_w.row_mut(r), d_logits[r], &cache.hidden);
        grads.head_out_b[r] += d_logits[r];
    }
    let d_hidden = params.head_out.w.matvec_t(d_logits);

    // ReLU
    let d_hidden_pre: Vec<f64> = d_hidden
        .iter()
        .zip(&cache.hidden_pre)
        .map(|(g, &pre)| if pre > 0.0 { *g } else { 0.0 })
        .collect();

    // head_hidden: hidden_pre = W_h pooled + b_h
    for r in 0..HIDDEN_DIM {
        axpy(grads.head_hidden_w.row_mut(r), d_hidden_pre[r], &cache.pooled);
        grads.head_hidden_b[r] += d_hidden_pre[r];
    }
    let d_pooled = params.head_hidden.w.matvec_t(&d_hidden_pre);

    // mean pooling: every fused row receives d_pooled / n
    let mut upstream = Matrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            upstream.set(i, j, d_pooled[j] / n as f64);
        }
    }

    let fg = fusion_backward(
        &cache.fusion_cache,
        &cache.embeddings,
        &cache.h_v,
        &params.fusion,
        &upstream,
    )?;

    axpy(&mut grads.w_hv, 1.0, &fg.d_w_hv);
    grads.b_v += fg.d_b_v;
    axpy(&mut grads.w_v.data, 1.0, &fg.d_w_v.data);
    axpy(&mut grads.b_m, 1.0, &fg.d_b_m);
    axpy(&mut grads.ln_gain, 1.0, &fg.d_ln_gain);
    axpy(&mut grads.ln_bias, 1.0, &fg.d_ln_bias);

    // scatter embedding gradients back to the table rows
    for (i, &t) in cache.tokens.iter().enumerate() {
        axpy(grads.embed_table.row_mut(t), 1.0, fg.d_embeddings.row(i));
    }

    // feature projection: h_v = W_p f + b_p
    for r in 0..FEATURE_PROJ_DIM {
        axpy(
            grads.feature_proj_w.row_mut(r),
            fg.d_features[r],
            &cache.feature_raw,
        );
        grads.feature_proj_b[r] += fg.d_features[r];
    }

    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{smooth_label, smoothed_ce_from_logits, SmoothingConfig};

    fn dims() -> ModelDims {
        ModelDims {
            vocab: 64,
            embed_dim: 8,
            feature_dim: 3,
            num_classes: 3,
        }
    }

    #[test]
    fn zero_output_head_gives_uniform_probs() {
        let mut params = ToyModelParams::init(dims(), 0.5, 1).unwrap();
        params.head_out.w = Matrix::zeros(3, HIDDEN_DIM);
        params.head_out.b = vec![0.0; 3];
        let (probs, _) =
            toy_forward(&[1, 5, 9], &[0.3, -0.2, 0.9], &params, 0.0, false, 0).unwrap();
        for &p in &probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn forward_is_deterministic_with_seed() {
        let params = ToyModelParams::init(dims(), 0.5, 2).unwrap();
        let (p1, _) = toy_forward(&[3, 3, 17], &[1.0, 0.0, -1.0], &params, 0.1, true, 42).unwrap();
        let (p2, _) = toy_forward(&[3, 3, 17], &[1.0, 0.0, -1.0], &params, 0.1, true, 42).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn probs_are_a_distribution() {
        let params = ToyModelParams::init(dims(), 0.5, 3).unwrap();
        let (probs, _) =
            toy_forward(&[0, 2, 63], &[0.1, 0.2, 0.3], &params, 0.0, false, 0).unwrap();
        let sum: f64 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(probs.iter().all(|&p| p > 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let params = ToyModelParams::init(dims(), 0.5, 4).unwrap();
        assert!(toy_forward(&[], &[0.0; 3], &params, 0.0, false, 0).is_err());
        assert!(toy_forward(&[1], &[0.0; 2], &params, 0.0, false, 0).is_err());
        assert!(toy_forward(&[64], &[0.0; 3], &params, 0.0, false, 0).is_err());
    }

    // End-to-end finite differences through the whole model: perturb a few
    // representative parameters and compare against the accumulated analytic
    // gradient of the smoothed loss.
    #[test]
    fn full_model_gradient_spot_check() {
        let params = ToyModelParams::init(dims(), 0.5, 5).unwrap();
        let tokens = [1usize, 9, 9, 30];
        let feats = [0.4, -0.7, 0.2];
        let cfg = SmoothingConfig::new(0.1, 3).unwrap();
        let y_ls = smooth_label(1, &cfg).unwrap();

        let loss_of = |p: &ToyModelParams| -> f64 {
            let (_, cache) = toy_forward(&tokens, &feats, p, 0.0, false, 0).unwrap();
            let (loss, _, _) = smoothed_ce_from_logits(&cache.logits, &y_ls);
            loss
        };

        let (_, cache) = toy_forward(&tokens, &feats, &params, 0.0, false, 0).unwrap();
        let (_, _, d_logits) = smoothed_ce_from_logits(&cache.logits, &y_ls);
        let mut grads = ToyGradients::zeros(&params.dims);
        toy_backward(&cache, &params, &d_logits, &mut grads).unwrap();

        let h = 1e-6;
        let check = |analytic: f64, mutate: &dyn Fn(&mut ToyModelParams, f64)| {
            let mut plus = params.clone();
            mutate(&mut plus, h);
            let mut minus = params.clone();
            mutate(&mut minus, -h);
            let fd = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            let err = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8);
            assert!(err < 1e-4, "analytic {analytic}, fd {fd}");
        };

        // a touched embedding row, the gate bias, the shift projection, the
        // feature projection, and both head layers
        check(grads.embed_table.get(9, 2), &|p, h| {
            let v = p.embed_table.get(9, 2);
            p.embed_table.set(9, 2, v + h);
        });
        check(grads.b_v, &|p, h| p.fusion.b_v += h);
        check(grads.w_v.get(3, 40), &|p, h| {
            let v = p.fusion.w_v.get(3, 40);
            p.fusion.w_v.set(3, 40, v + h);
        });
        check(grads.feature_proj_w.get(17, 1), &|p, h| {
            let v = p.feature_proj.w.get(17, 1);
            p.feature_proj.w.set(17, 1, v + h);
        });
        check(grads.head_hidden_w.get(5, 3), &|p, h| {
            let v = p.head_hidden.w.get(5, 3);
            p.head_hidden.w.set(5, 3, v + h);
        });
        check(grads.head_out_w.get(2, 11), &|p, h| {
            let v = p.head_out.w.get(2, 11);
            p.head_out.w.set(2, 11, v + h);
        });
        // untouched embedding rows must stay at zero gradient
        assert!(grads.embed_table.row(33).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let params = ToyModelParams::init(dims(), 0.5, 6).unwrap();
        params.save(&path).unwrap();
        let loaded = ToyModelParams::load(&path).unwrap();
        assert_eq!(params, loaded);
    }
}
