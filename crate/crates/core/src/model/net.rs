//! Forward pass with cached intermediates and the matching exact backward
//! pass. Shapes follow the module-level docs in `mod.rs`; every helper
//! backward accumulates into gradient arrays owned by a `ModelParams`
//! container so the reduction order is fixed.

use super::math::{dot, rmsnorm, rmsnorm_backward, softmax_masked_in_place, Mat};
use super::{AttentionParams, ModelConfig, ModelParams};
use crate::error::{Error, Result};

pub(super) struct AttnCache {
    normed: Mat,
    inv_rms: Vec<f64>,
    q: Mat,
    k: Mat,
    v: Mat,
    /// Per-head softmax weights, `q_len x k_len` each.
    weights: Vec<Mat>,
    concat: Mat,
}

pub(super) struct FfCache {
    normed: Mat,
    inv_rms: Vec<f64>,
    pre: Mat,
    act: Mat,
}

pub(super) struct EncLayerCache {
    x_in: Mat,
    attn: AttnCache,
    x_mid: Mat,
    ff: FfCache,
}

pub(super) struct DecLayerCache {
    x_in: Mat,
    self_attn: AttnCache,
    x_mid1: Mat,
    cross: AttnCache,
    x_mid2: Mat,
    ff: FfCache,
}

pub(super) struct Tape {
    enc_layers: Vec<EncLayerCache>,
    enc_pre_final: Mat,
    enc_inv_rms: Vec<f64>,
    enc_out: Mat,
    dec_layers: Vec<DecLayerCache>,
    dec_pre_final: Mat,
    dec_inv_rms: Vec<f64>,
    dec_out: Mat,
    pub(super) logits: Mat,
}

/// Scaled dot-product attention over visible positions with an additive
/// score bias. Returns the output and the softmax weight matrix (weights
/// of excluded positions are exactly zero).
pub(super) fn attention_core(
    q: &Mat,
    k: &Mat,
    v: &Mat,
    visible: &impl Fn(usize, usize) -> bool,
    bias: &impl Fn(usize, usize) -> f64,
) -> Result<(Mat, Mat)> {
    let scale = 1.0 / (q.cols() as f64).sqrt();
    let mut weights = Mat::zeros(q.rows(), k.rows());
    for i in 0..q.rows() {
        let row = weights.row_mut(i);
        for (j, w) in row.iter_mut().enumerate() {
            if visible(i, j) {
                *w = dot(q.row(i), k.row(j)) * scale + bias(i, j);
            }
        }
        if !softmax_masked_in_place(row, |j| visible(i, j)) {
            return Err(Error::Invalid(format!(
                "attention row {i}: every position is masked"
            )));
        }
    }
    Ok((weights.matmul(v), weights))
}

fn embed(params: &ModelParams, ids: &[usize]) -> Mat {
    let d = params.embedding.cols();
    let mut out = Mat::zeros(ids.len(), d);
    for (pos, &id) in ids.iter().enumerate() {
        out.row_mut(pos).copy_from_slice(params.embedding.row(id));
    }
    out
}

fn add(a: &Mat, b: &Mat) -> Mat {
    let mut out = a.clone();
    out.add_assign(b);
    out
}

/// Bias-table lookup index for a query at `i` attending to `j`.
fn rel_index(i: usize, j: usize, max_rel: usize) -> usize {
    let off = (j as isize - i as isize).clamp(-(max_rel as isize), max_rel as isize);
    (off + max_rel as isize) as usize
}

fn heads_forward(
    cfg: &ModelConfig,
    q: &Mat,
    k: &Mat,
    v: &Mat,
    bias_table: Option<&Mat>,
    causal: bool,
) -> Result<(Mat, Vec<Mat>)> {
    let dh = cfg.head_dim();
    let mut concat = Mat::zeros(q.rows(), cfg.d_model);
    let mut weights = Vec::with_capacity(cfg.n_heads);
    for h in 0..cfg.n_heads {
        let qh = q.col_block(h * dh, dh);
        let kh = k.col_block(h * dh, dh);
        let vh = v.col_block(h * dh, dh);
        let visible = |i: usize, j: usize| !causal || j <= i;
        let bias = |i: usize, j: usize| {
            bias_table.map_or(0.0, |t| t.at(h, rel_index(i, j, cfg.max_rel_distance)))
        };
        let (out_h, w) = attention_core(&qh, &kh, &vh, &visible, &bias)?;
        concat.add_col_block(h * dh, &out_h);
        weights.push(w);
    }
    Ok((concat, weights))
}

fn self_attn_forward(
    cfg: &ModelConfig,
    x: &Mat,
    norm: &[f64],
    p: &AttentionParams,
    bias_table: &Mat,
    causal: bool,
) -> Result<(Mat, AttnCache)> {
    let (normed, inv_rms) = rmsnorm(x, norm);
    let q = normed.matmul(&p.wq);
    let k = normed.matmul(&p.wk);
    let v = normed.matmul(&p.wv);
    let (concat, weights) = heads_forward(cfg, &q, &k, &v, Some(bias_table), causal)?;
    let proj = concat.matmul(&p.wo);
    Ok((
        proj,
        AttnCache {
            normed,
            inv_rms,
            q,
            k,
            v,
            weights,
            concat,
        },
    ))
}

fn cross_attn_forward(
    cfg: &ModelConfig,
    x: &Mat,
    norm: &[f64],
    p: &AttentionParams,
    enc_out: &Mat,
) -> Result<(Mat, AttnCache)> {
    let (normed, inv_rms) = rmsnorm(x, norm);
    let q = normed.matmul(&p.wq);
    let k = enc_out.matmul(&p.wk);
    let v = enc_out.matmul(&p.wv);
    let (concat, weights) = heads_forward(cfg, &q, &k, &v, None, false)?;
    let proj = concat.matmul(&p.wo);
    Ok((
        proj,
        AttnCache {
            normed,
            inv_rms,
            q,
            k,
            v,
            weights,
            concat,
        },
    ))
}

fn ff_forward(x: &Mat, norm: &[f64], w_in: &Mat, w_out: &Mat) -> (Mat, FfCache) {
    let (normed, inv_rms) = rmsnorm(x, norm);
    let pre = normed.matmul(w_in);
    let mut act = pre.clone();
    for v in act.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let out = act.matmul(w_out);
    (
        out,
        FfCache {
            normed,
            inv_rms,
            pre,
            act,
        },
    )
}

fn validate_ids(cfg: &ModelConfig, ids: &[usize], what: &str) -> Result<()> {
    if ids.is_empty() {
        return Err(Error::Invalid(format!("{what} sequence is empty")));
    }
    if ids.len() > cfg.max_seq_len {
        return Err(Error::Invalid(format!(
            "{what} length {} exceeds max_seq_len {}",
            ids.len(),
            cfg.max_seq_len
        )));
    }
    if let Some(&id) = ids.iter().find(|&&id| id >= cfg.vocab_size) {
        return Err(Error::Invalid(format!(
            "{what} token id {id} outside vocabulary of size {}",
            cfg.vocab_size
        )));
    }
    Ok(())
}

pub(super) fn run_forward(
    cfg: &ModelConfig,
    params: &ModelParams,
    src: &[usize],
    tgt: &[usize],
) -> Result<Tape> {
    validate_ids(cfg, src, "source")?;
    validate_ids(cfg, tgt, "decoder input")?;

    let mut x = embed(params, src);
    let mut enc_layers = Vec::with_capacity(cfg.n_layers_enc);
    for layer in &params.encoder {
        let (attn_out, attn) = self_attn_forward(
            cfg,
            &x,
            &layer.attn_norm,
            &layer.attn,
            &params.enc_rel_bias,
            false,
        )?;
        let x_mid = add(&x, &attn_out);
        let (ff_out, ff) = ff_forward(&x_mid, &layer.ff_norm, &layer.ff_in, &layer.ff_out);
        let x_next = add(&x_mid, &ff_out);
        enc_layers.push(EncLayerCache {
            x_in: x,
            attn,
            x_mid,
            ff,
        });
        x = x_next;
    }
    let (enc_out, enc_inv_rms) = rmsnorm(&x, &params.enc_final_norm);
    let enc_pre_final = x;

    let mut y = embed(params, tgt);
    let mut dec_layers = Vec::with_capacity(cfg.n_layers_dec);
    for layer in &params.decoder {
        let (self_out, self_attn) = self_attn_forward(
            cfg,
            &y,
            &layer.self_norm,
            &layer.self_attn,
            &params.dec_rel_bias,
            true,
        )?;
        let x_mid1 = add(&y, &self_out);
        let (cross_out, cross) =
            cross_attn_forward(cfg, &x_mid1, &layer.cross_norm, &layer.cross_attn, &enc_out)?;
        let x_mid2 = add(&x_mid1, &cross_out);
        let (ff_out, ff) = ff_forward(&x_mid2, &layer.ff_norm, &layer.ff_in, &layer.ff_out);
        let y_next = add(&x_mid2, &ff_out);
        dec_layers.push(DecLayerCache {
            x_in: y,
            self_attn,
            x_mid1,
            cross,
            x_mid2,
            ff,
        });
        y = y_next;
    }
    let (dec_out, dec_inv_rms) = rmsnorm(&y, &params.dec_final_norm);
    let dec_pre_final = y;
    // Tied projection: the 1/sqrt(d_model) rescale keeps initial logits
    // near zero so the starting loss sits close to ln(vocab_size).
    let mut logits = dec_out.matmul_bt(&params.embedding);
    logits.scale(1.0 / (cfg.d_model as f64).sqrt());

    Ok(Tape {
        enc_layers,
        enc_pre_final,
        enc_inv_rms,
        enc_out,
        dec_layers,
        dec_pre_final,
        dec_inv_rms,
        dec_out,
        logits,
    })
}

/// Sum of `-log softmax(logits[t])[target[t]]` over scored positions plus
/// the scored-position count. `pad_mask[t] = true` excludes position `t`.
pub(super) fn cross_entropy_sum(
    logits: &Mat,
    targets: &[usize],
    pad_mask: Option<&[bool]>,
) -> Result<(f64, usize)> {
    if targets.len() != logits.rows() {
        return Err(Error::Invalid(format!(
            "cross_entropy: {} targets for {} logit rows",
            targets.len(),
            logits.rows()
        )));
    }
    if let Some(mask) = pad_mask {
        if mask.len() != targets.len() {
            return Err(Error::Invalid(
                "cross_entropy: pad mask length mismatch".to_string(),
            ));
        }
    }
    let mut sum = 0.0;
    let mut count = 0;
    for (t, &target) in targets.iter().enumerate() {
        if pad_mask.is_some_and(|m| m[t]) {
            continue;
        }
        if target >= logits.cols() {
            return Err(Error::Invalid(format!(
                "cross_entropy: target id {target} outside vocabulary"
            )));
        }
        let row = logits.row(t);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        sum += lse - row[target];
        count += 1;
    }
    Ok((sum, count))
}

struct AttnGrads<'a> {
    norm: &'a mut [f64],
    p: &'a mut AttentionParams,
}

/// Shared tail of the attention backward: from the projection gradient
/// back to per-stream q/k/v gradients. Returns (dq, dk, dv) at full width
/// and accumulates bias-table gradients when a table is in play.
#[allow(clippy::too_many_arguments)]
fn heads_backward(
    cfg: &ModelConfig,
    cache: &AttnCache,
    dproj: &Mat,
    wo: &Mat,
    gwo: &mut Mat,
    mut gbias: Option<&mut Mat>,
) -> (Mat, Mat, Mat) {
    gwo.add_assign(&cache.concat.matmul_at(dproj));
    let dconcat = dproj.matmul_bt(wo);
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let n = cache.q.rows();
    let m = cache.k.rows();
    let mut dq = Mat::zeros(n, cfg.d_model);
    let mut dk = Mat::zeros(m, cfg.d_model);
    let mut dv = Mat::zeros(m, cfg.d_model);
    for h in 0..cfg.n_heads {
        let dout_h = dconcat.col_block(h * dh, dh);
        let w = &cache.weights[h];
        let qh = cache.q.col_block(h * dh, dh);
        let kh = cache.k.col_block(h * dh, dh);
        let vh = cache.v.col_block(h * dh, dh);

        let da = dout_h.matmul_bt(&vh);
        let dvh = w.matmul_at(&dout_h);

        // Softmax backward, row by row. Masked positions have weight zero
        // and therefore zero score gradient.
        let mut dscores = Mat::zeros(n, m);
        for i in 0..n {
            let wrow = w.row(i);
            let darow = da.row(i);
            let s = dot(wrow, darow);
            for (j, d) in dscores.row_mut(i).iter_mut().enumerate() {
                *d = wrow[j] * (darow[j] - s);
            }
        }

        if let Some(table) = gbias.as_mut() {
            for i in 0..n {
                for j in 0..m {
                    *table.at_mut(h, rel_index(i, j, cfg.max_rel_distance)) += dscores.at(i, j);
                }
            }
        }

        let mut dqh = dscores.matmul(&kh);
        dqh.scale(scale);
        let mut dkh = dscores.matmul_at(&qh);
        dkh.scale(scale);

        dq.add_col_block(h * dh, &dqh);
        dk.add_col_block(h * dh, &dkh);
        dv.add_col_block(h * dh, &dvh);
    }
    (dq, dk, dv)
}

/// Backward through `x_out = x_in + self_attn(norm(x_in))`.
#[allow(clippy::too_many_arguments)]
fn self_attn_backward(
    cfg: &ModelConfig,
    x_in: &Mat,
    norm: &[f64],
    p: &AttentionParams,
    cache: &AttnCache,
    dout_total: &Mat,
    grads: AttnGrads<'_>,
    gbias: &mut Mat,
) -> Mat {
    let (dq, dk, dv) = heads_backward(cfg, cache, dout_total, &p.wo, &mut grads.p.wo, Some(gbias));
    grads.p.wq.add_assign(&cache.normed.matmul_at(&dq));
    grads.p.wk.add_assign(&cache.normed.matmul_at(&dk));
    grads.p.wv.add_assign(&cache.normed.matmul_at(&dv));
    let mut dnormed = dq.matmul_bt(&p.wq);
    dnormed.add_assign(&dk.matmul_bt(&p.wk));
    dnormed.add_assign(&dv.matmul_bt(&p.wv));
    let mut dx = rmsnorm_backward(x_in, norm, &cache.inv_rms, &dnormed, grads.norm);
    dx.add_assign(dout_total);
    dx
}

/// Backward through `x_out = x_in + cross_attn(norm(x_in), enc_out)`.
/// Returns (dx_in, d_enc_out).
#[allow(clippy::too_many_arguments)]
fn cross_attn_backward(
    cfg: &ModelConfig,
    x_in: &Mat,
    norm: &[f64],
    p: &AttentionParams,
    enc_out: &Mat,
    cache: &AttnCache,
    dout_total: &Mat,
    grads: AttnGrads<'_>,
) -> (Mat, Mat) {
    let (dq, dk, dv) = heads_backward(cfg, cache, dout_total, &p.wo, &mut grads.p.wo, None);
    grads.p.wq.add_assign(&cache.normed.matmul_at(&dq));
    grads.p.wk.add_assign(&enc_out.matmul_at(&dk));
    grads.p.wv.add_assign(&enc_out.matmul_at(&dv));
    let dnormed = dq.matmul_bt(&p.wq);
    let mut denc = dk.matmul_bt(&p.wk);
    denc.add_assign(&dv.matmul_bt(&p.wv));
    let mut dx = rmsnorm_backward(x_in, norm, &cache.inv_rms, &dnormed, grads.norm);
    dx.add_assign(dout_total);
    (dx, denc)
}

/// Backward through `x_out = x_in + ff(norm(x_in))`.
#[allow(clippy::too_many_arguments)]
fn ff_backward(
    x_in: &Mat,
    norm: &[f64],
    w_in: &Mat,
    w_out: &Mat,
    cache: &FfCache,
    dout_total: &Mat,
    gnorm: &mut [f64],
    gw_in: &mut Mat,
    gw_out: &mut Mat,
) -> Mat {
    gw_out.add_assign(&cache.act.matmul_at(dout_total));
    let mut dpre = dout_total.matmul_bt(w_out);
    for (d, &pre) in dpre.data_mut().iter_mut().zip(cache.pre.data()) {
        if pre <= 0.0 {
            *d = 0.0;
        }
    }
    gw_in.add_assign(&cache.normed.matmul_at(&dpre));
    let dnormed = dpre.matmul_bt(w_in);
    let mut dx = rmsnorm_backward(x_in, norm, &cache.inv_rms, &dnormed, gnorm);
    dx.add_assign(dout_total);
    dx
}

/// Forward plus exact backward for one example with sum-reduced loss.
/// Returns (sum NLL, gradients of the sum, scored token count); callers
/// divide by the token count they are averaging over.
pub(super) fn sum_backward(
    cfg: &ModelConfig,
    params: &ModelParams,
    src: &[usize],
    tgt_in: &[usize],
    targets: &[usize],
) -> Result<(f64, ModelParams, usize)> {
    let tape = run_forward(cfg, params, src, tgt_in)?;
    let (nll_sum, count) = cross_entropy_sum(&tape.logits, targets, None)?;

    // d(sum NLL)/d(logits) = softmax(logits) - onehot(target), per row.
    let mut dlogits = tape.logits.clone();
    for (t, &target) in targets.iter().enumerate() {
        let row = dlogits.row_mut(t);
        softmax_masked_in_place(row, |_| true);
        row[target] -= 1.0;
    }

    let mut grads = ModelParams::zeros(cfg);

    // Tied output projection (with its 1/sqrt(d_model) rescale).
    let proj_scale = 1.0 / (cfg.d_model as f64).sqrt();
    let mut ddec_out = dlogits.matmul(&params.embedding);
    ddec_out.scale(proj_scale);
    let mut dembed = dlogits.matmul_at(&tape.dec_out);
    dembed.scale(proj_scale);
    grads.embedding.add_assign(&dembed);

    let mut dy = rmsnorm_backward(
        &tape.dec_pre_final,
        &params.dec_final_norm,
        &tape.dec_inv_rms,
        &ddec_out,
        &mut grads.dec_final_norm,
    );

    let mut denc_out = Mat::zeros(tape.enc_out.rows(), tape.enc_out.cols());
    for i in (0..cfg.n_layers_dec).rev() {
        let layer = &params.decoder[i];
        let cache = &tape.dec_layers[i];
        let g = &mut grads.decoder[i];

        let dmid2 = ff_backward(
            &cache.x_mid2,
            &layer.ff_norm,
            &layer.ff_in,
            &layer.ff_out,
            &cache.ff,
            &dy,
            &mut g.ff_norm,
            &mut g.ff_in,
            &mut g.ff_out,
        );
        let (dmid1, denc) = cross_attn_backward(
            cfg,
            &cache.x_mid1,
            &layer.cross_norm,
            &layer.cross_attn,
            &tape.enc_out,
            &cache.cross,
            &dmid2,
            AttnGrads {
                norm: &mut g.cross_norm,
                p: &mut g.cross_attn,
            },
        );
        denc_out.add_assign(&denc);
        dy = self_attn_backward(
            cfg,
            &cache.x_in,
            &layer.self_norm,
            &layer.self_attn,
            &cache.self_attn,
            &dmid1,
            AttnGrads {
                norm: &mut g.self_norm,
                p: &mut g.self_attn,
            },
            &mut grads.dec_rel_bias,
        );
    }
    for (pos, &id) in tgt_in.iter().enumerate() {
        for (g, &v) in grads.embedding.row_mut(id).iter_mut().zip(dy.row(pos)) {
            *g += v;
        }
    }

    let mut dx = rmsnorm_backward(
        &tape.enc_pre_final,
        &params.enc_final_norm,
        &tape.enc_inv_rms,
        &denc_out,
        &mut grads.enc_final_norm,
    );
    for i in (0..cfg.n_layers_enc).rev() {
        let layer = &params.encoder[i];
        let cache = &tape.enc_layers[i];
        let g = &mut grads.encoder[i];

        let dmid = ff_backward(
            &cache.x_mid,
            &layer.ff_norm,
            &layer.ff_in,
            &layer.ff_out,
            &cache.ff,
            &dx,
            &mut g.ff_norm,
            &mut g.ff_in,
            &mut g.ff_out,
        );
        dx = self_attn_backward(
            cfg,
            &cache.x_in,
            &layer.attn_norm,
            &layer.attn,
            &cache.attn,
            &dmid,
            AttnGrads {
                norm: &mut g.attn_norm,
                p: &mut g.attn,
            },
            &mut grads.enc_rel_bias,
        );
    }
    for (pos, &id) in src.iter().enumerate() {
        for (g, &v) in grads.embedding.row_mut(id).iter_mut().zip(dx.row(pos)) {
            *g += v;
        }
    }

    Ok((nll_sum, grads, count))
}
