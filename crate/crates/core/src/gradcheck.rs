//! Central finite-difference gradient checking for the two hand-derived
//! backward passes: the fusion layer and the smoothed cross-entropy loss.
//! Instances are generated away from the cap boundary and away from gate
//! saturation so the comparison happens on the smooth branch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fusion::{fusion_backward, fusion_forward, EmbeddingSequence, FusionParams, ProjectedFeature};
use crate::loss::{smooth_label, smoothed_ce_from_logits, SmoothingConfig};
use crate::matrix::{dot, l2_norm, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckOp {
    /// The fusion layer backward pass (gate, shift, cap, layer norm).
    Fusion,
    /// The smoothed cross-entropy logit gradient.
    Loss,
}

impl CheckOp {
    pub fn name(self) -> &'static str {
        match self {
            CheckOp::Fusion => "fusion",
            CheckOp::Loss => "loss",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub op: String,
    pub seed: u64,
    pub step: f64,
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub coords_checked: usize,
    pub pass: bool,
}

/// |a - f| / max(|a|, |f|, 1e-8).
pub fn rel_error(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8)
}

/// A random fusion instance with margins: no token clamped (the cap ratio is
/// forced to ~0.5 by choosing beta from the realized norms) and no gate
/// saturated (|pre-sigmoid| < 4, enforced by rescaling the gate weights).
pub fn fusion_check_instance(
    seed: u64,
    n: usize,
    d: usize,
    d_f: usize,
) -> (EmbeddingSequence, ProjectedFeature, FusionParams, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = Matrix::zeros(n, d);
    for v in e.data.iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    let h_v: Vec<f64> = (0..d_f).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let mut w_hv: Vec<f64> = (0..d + d_f).map(|_| rng.gen_range(-0.5..0.5)).collect();
    let mut b_v = rng.gen_range(-0.2..0.2);
    let mut w_v = Matrix::zeros(d, d_f);
    for v in w_v.data.iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    let b_m: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.3..0.3)).collect();
    let ln_gain: Vec<f64> = (0..d).map(|_| rng.gen_range(0.5..1.5)).collect();
    let ln_bias: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.5..0.5)).collect();

    // keep every gate pre-activation well inside (-4, 4)
    let mut max_z: f64 = 0.0;
    for i in 0..n {
        let z = dot(&w_hv[..d], e.row(i)) + dot(&w_hv[d..], &h_v) + b_v;
        max_z = max_z.max(z.abs());
    }
    if max_z >= 3.5 {
        let scale = 3.5 / max_z;
        for v in w_hv.iter_mut() {
            *v *= scale;
        }
        b_v *= scale;
    }

    // pick beta so the realized cap ratio is about 0.5 everywhere: compute
    // the shift norms at beta-independent quantities first
    let shift_base = w_v.matvec(&h_v);
    let mut min_ratio_inv = f64::INFINITY;
    for i in 0..n {
        let z = dot(&w_hv[..d], e.row(i)) + dot(&w_hv[d..], &h_v) + b_v;
        let w = 1.0 / (1.0 + (-z).exp());
        let h_m: Vec<f64> = (0..d).map(|j| w * shift_base[j] + b_m[j]).collect();
        let en = l2_norm(e.row(i));
        let sn = l2_norm(&h_m);
        min_ratio_inv = min_ratio_inv.min(sn / en);
    }
    let beta = 0.5 * min_ratio_inv;

    let params = FusionParams {
        w_hv,
        b_v,
        w_v,
        b_m,
        beta,
        ln_gain,
        ln_bias,
        ln_eps: 1e-5,
    };
    let mut upstream = Matrix::zeros(n, d);
    for v in upstream.data.iter_mut() {
        *v = rng.gen_range(-1.0..1.0);
    }
    (
        EmbeddingSequence::new(e).unwrap(),
        ProjectedFeature::new(h_v).unwrap(),
        params,
        upstream,
    )
}

fn fusion_scalar_loss(
    e: &EmbeddingSequence,
    h_v: &ProjectedFeature,
    params: &FusionParams,
    upstream: &Matrix,
) -> f64 {
    let (out, _) = fusion_forward(e, h_v, params, 0.0, 0, false).unwrap();
    dot(&out.data.data, &upstream.data)
}

/// Check the fusion backward pass on one generated instance. Returns
/// (max relative error, number of coordinates compared).
pub fn check_fusion_instance(seed: u64, step: f64) -> (f64, usize) {
    let (e, h_v, params, upstream) = fusion_check_instance(seed, 5, 4, 3);
    let (_, cache) = fusion_forward(&e, &h_v, &params, 0.0, 0, false).unwrap();
    debug_assert!(cache.clamped.iter().all(|&c| !c));
    let grads = fusion_backward(&cache, &e, &h_v, &params, &upstream).unwrap();

    let mut max_err: f64 = 0.0;
    let mut count = 0usize;
    let mut check = |analytic: f64, fd: f64| {
        max_err = max_err.max(rel_error(analytic, fd));
        count += 1;
    };

    // embeddings
    for r in 0..e.seq_len() {
        for c in 0..e.dim() {
            let mut plus = e.clone();
            plus.data.set(r, c, e.data.get(r, c) + step);
            let mut minus = e.clone();
            minus.data.set(r, c, e.data.get(r, c) - step);
            let fd = (fusion_scalar_loss(&plus, &h_v, &params, &upstream)
                - fusion_scalar_loss(&minus, &h_v, &params, &upstream))
                / (2.0 * step);
            check(grads.d_embeddings.get(r, c), fd);
        }
    }
    // feature vector
    for c in 0..h_v.dim() {
        let mut plus = h_v.clone();
        plus.data[c] += step;
        let mut minus = h_v.clone();
        minus.data[c] -= step;
        let fd = (fusion_scalar_loss(&e, &plus, &params, &upstream)
            - fusion_scalar_loss(&e, &minus, &params, &upstream))
            / (2.0 * step);
        check(grads.d_features[c], fd);
    }
    // parameters, coordinate by coordinate
    let fd_param = |mutate: &dyn Fn(&mut FusionParams, f64)| -> f64 {
        let mut plus = params.clone();
        mutate(&mut plus, step);
        let mut minus = params.clone();
        mutate(&mut minus, -step);
        (fusion_scalar_loss(&e, &h_v, &plus, &upstream)
            - fusion_scalar_loss(&e, &h_v, &minus, &upstream))
            / (2.0 * step)
    };
    for j in 0..params.w_hv.len() {
        let fd = fd_param(&|p, h| p.w_hv[j] += h);
        check(grads.d_w_hv[j], fd);
    }
    check(grads.d_b_v, fd_param(&|p, h| p.b_v += h));
    for r in 0..params.w_v.rows {
        for c in 0..params.w_v.cols {
            let fd = fd_param(&|p, h| {
                let v = p.w_v.get(r, c);
                p.w_v.set(r, c, v + h);
            });
            check(grads.d_w_v.get(r, c), fd);
        }
    }
    for j in 0..params.b_m.len() {
        let fd = fd_param(&|p, h| p.b_m[j] += h);
        check(grads.d_b_m[j], fd);
    }
    for j in 0..params.ln_gain.len() {
        let fd = fd_param(&|p, h| p.ln_gain[j] += h);
        check(grads.d_ln_gain[j], fd);
    }
    for j in 0..params.ln_bias.len() {
        let fd = fd_param(&|p, h| p.ln_bias[j] += h);
        check(grads.d_ln_bias[j], fd);
    }

    (max_err, count)
}

/// Check the smoothed cross-entropy logit gradient on one generated instance.
/// The seed cycles the smoothing level through {0, 0.001, 0.1} and the class
/// count through {2, 4}.
pub fn check_loss_instance(seed: u64, step: f64) -> (f64, usize) {
    let alpha = [0.0, 0.001, 0.1][(seed % 3) as usize];
    let k = if seed.is_multiple_of(2) { 2 } else { 4 };
    check_loss_instance_with(seed, step, alpha, k)
}

pub fn check_loss_instance_with(seed: u64, step: f64, alpha: f64, k: usize) -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logits: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let label = rng.gen_range(0..k);
    let cfg = SmoothingConfig::new(alpha, k).unwrap();
    let y_ls = smooth_label(label, &cfg).unwrap();

    let (_, _, d_logits) = smoothed_ce_from_logits(&logits, &y_ls);
    let mut max_err: f64 = 0.0;
    for j in 0..k {
        let mut plus = logits.clone();
        plus[j] += step;
        let mut minus = logits.clone();
        minus[j] -= step;
        let (lp, _, _) = smoothed_ce_from_logits(&plus, &y_ls);
        let (lm, _, _) = smoothed_ce_from_logits(&minus, &y_ls);
        let fd = (lp - lm) / (2.0 * step);
        max_err = max_err.max(rel_error(d_logits[j], fd));
    }
    (max_err, k)
}

/// Run one finite-difference comparison and report the worst coordinate.
pub fn gradient_check(op: CheckOp, instance_seed: u64, step: f64, tolerance: f64) -> GradCheckReport {
    let (max_rel_error, coords_checked) = match op {
        CheckOp::Fusion => check_fusion_instance(instance_seed, step),
        CheckOp::Loss => check_loss_instance(instance_seed, step),
    };
    GradCheckReport {
        op: op.name().to_string(),
        seed: instance_seed,
        step,
        tolerance,
        max_rel_error,
        coords_checked,
        pass: max_rel_error < tolerance,
    }
}
