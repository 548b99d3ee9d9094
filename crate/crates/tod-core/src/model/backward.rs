//! Exact reverse-mode gradients for trunk + branch forward traces.
//!
//! A training step backpropagates one trunk (the gold token window) together
//! with any number of decoded branches that attend into the trunk's cached
//! keys/values. Branch passes run first and buffer their gradient
//! contributions to the trunk's per-layer K/V; the trunk pass then consumes
//! those buffers at the matching layer, so the combined gradient is exact.

use ndarray::{s, Array1, Array2};

use super::forward::{gelu_grad, LnTrace, Trace};
use super::{ModelParams, Scalar};

/// Per-layer gradient buffers a branch leaves behind for its trunk.
struct PendingKv<F> {
    dk: Vec<Array2<F>>,
    dv: Vec<Array2<F>>,
}

impl<F: Scalar> PendingKv<F> {
    fn new(n_layers: usize, rows: usize, d: usize) -> PendingKv<F> {
        PendingKv {
            dk: (0..n_layers).map(|_| Array2::zeros((rows, d))).collect(),
            dv: (0..n_layers).map(|_| Array2::zeros((rows, d))).collect(),
        }
    }
}

/// d(layer_norm) given upstream dY; returns dX plus local dGain/dBias.
fn ln_backward<F: Scalar>(
    dy: &Array2<F>,
    x_in: &Array2<F>,
    ln: &LnTrace<F>,
    gain: ndarray::ArrayView1<'_, F>,
) -> (Array2<F>, Array1<F>, Array1<F>) {
    let (n, d) = dy.dim();
    let inv_d = F::from_f64(1.0 / d as f64);
    let mut dx = Array2::zeros((n, d));
    let mut dgain = Array1::zeros(d);
    let mut dbias = Array1::zeros(d);
    for i in 0..n {
        let m = ln.mean[i];
        let r = ln.rstd[i];
        let mut m1 = F::zero();
        let mut m2 = F::zero();
        for j in 0..d {
            let norm = (x_in[[i, j]] - m) * r;
            let dn = dy[[i, j]] * gain[j];
            dgain[j] = dgain[j] + dy[[i, j]] * norm;
            dbias[j] = dbias[j] + dy[[i, j]];
            m1 = m1 + dn;
            m2 = m2 + dn * norm;
        }
        m1 = m1 * inv_d;
        m2 = m2 * inv_d;
        for j in 0..d {
            let norm = (x_in[[i, j]] - m) * r;
            let dn = dy[[i, j]] * gain[j];
            dx[[i, j]] = r * (dn - m1 - norm * m2);
        }
    }
    (dx, dgain, dbias)
}

fn add_seg1<F: Scalar>(grads: &mut ModelParams<F>, offset: usize, delta: &Array1<F>) {
    let mut view = grads.view1_mut(offset, delta.len());
    view += delta;
}

fn add_seg2<F: Scalar>(grads: &mut ModelParams<F>, offset: usize, delta: &Array2<F>) {
    let (r, c) = delta.dim();
    let mut view = grads.view2_mut(offset, r, c);
    view += delta;
}

/// Backpropagate one trace. `parent` must be the trunk trace for branches.
/// Branch K/V gradients into the trunk accumulate in `parent_out`; the trunk
/// pass receives them back through `pending_in`.
fn backward_one<F: Scalar>(
    params: &ModelParams<F>,
    trace: &Trace<F>,
    dlogits: &Array2<F>,
    parent: Option<&Trace<F>>,
    parent_out: Option<&mut PendingKv<F>>,
    pending_in: Option<&PendingKv<F>>,
    grads: &mut ModelParams<F>,
) {
    let cfg = &params.cfg;
    let (d, nh, dh) = (cfg.d_model, cfg.n_heads, cfg.head_dim());
    let seq = trace.len();
    let past = if parent.is_some() { trace.start } else { 0 };
    let scale = F::from_f64(1.0 / (dh as f64).sqrt());

    // Tied output head: logits = lnf.out . E^T.
    let dhf = dlogits.dot(&params.tok_emb());
    let de = dlogits.t().dot(&trace.lnf.out);
    add_seg2(grads, 0, &de);

    // Final layer norm.
    let x_final = {
        // Input to the final ln is the last layer's output; recover it from
        // the residual stream: x_mid + ff_out = x_final. The trace stores it
        // implicitly as the ln input, so recompute from the last layer.
        let last = trace.layers.last().expect("at least one layer");
        let mut ff_out = last.ff_act.dot(&params.layer(cfg.n_layers - 1).w2);
        ff_out += &params.layer(cfg.n_layers - 1).b2;
        if let Some(m) = &trace.drop {
            ff_out = &ff_out * &m.ff[cfg.n_layers - 1];
        }
        &last.x_mid + &ff_out
    };
    let (lnf_g, _) = params.final_ln();
    let (mut dx, dgain, dbias) = ln_backward(&dhf, &x_final, &trace.lnf, lnf_g);
    let lnf_off = params.final_ln_offset();
    add_seg1(grads, lnf_off, &dgain);
    add_seg1(grads, lnf_off + d, &dbias);

    let mut parent_out = parent_out;
    for l in (0..cfg.n_layers).rev() {
        let lt = &trace.layers[l];
        let lv = params.layer(l);
        let offs = params.layer_offs(l);

        // Feed-forward block: x_out = x_mid + mask * (gelu(ln2 . w1 + b1) . w2 + b2)
        let dff_out = match &trace.drop {
            Some(m) => &dx * &m.ff[l],
            None => dx.clone(),
        };
        let dw2 = lt.ff_act.t().dot(&dff_out);
        let db2 = dff_out.sum_axis(ndarray::Axis(0));
        let dact = dff_out.dot(&lv.w2.t());
        let mut dpre = dact;
        ndarray::Zip::from(&mut dpre)
            .and(&lt.ff_pre)
            .for_each(|g, &x| *g = *g * gelu_grad(x));
        let dw1 = lt.ln2.out.t().dot(&dpre);
        let db1 = dpre.sum_axis(ndarray::Axis(0));
        let dh2 = dpre.dot(&lv.w1.t());
        let (dx_ln2, dg2, dbias2) = ln_backward(&dh2, &lt.x_mid, &lt.ln2, lv.ln2_g);
        let mut dx_mid = &dx + &dx_ln2;

        add_seg2(grads, offs.w2, &dw2);
        add_seg1(grads, offs.b2, &db2);
        add_seg2(grads, offs.w1, &dw1);
        add_seg1(grads, offs.b1, &db1);
        add_seg1(grads, offs.ln2_g, &dg2);
        add_seg1(grads, offs.ln2_b, &dbias2);

        // Attention block: x_mid = x_in + mask * (att_heads . wo)
        let datt_proj = match &trace.drop {
            Some(m) => &dx_mid * &m.attn[l],
            None => dx_mid.clone(),
        };
        let dwo = lt.att_heads.t().dot(&datt_proj);
        let datt_heads = datt_proj.dot(&lv.wo.t());
        add_seg2(grads, offs.wo, &dwo);

        let total = past + seq;
        let mut dq = Array2::zeros((seq, d));
        let mut dk_own = Array2::zeros((seq, d));
        let mut dv_own = Array2::zeros((seq, d));
        for h in 0..nh {
            let cols = h * dh..(h + 1) * dh;
            let probs = &lt.probs[h]; // seq x total
            let dah = datt_heads.slice(s![.., cols.clone()]);
            let qh = lt.q.slice(s![.., cols.clone()]);

            let (kh_cat, vh_cat) = match parent {
                Some(p) => {
                    let pk = p.layers[l].k.slice(s![..past, cols.clone()]);
                    let pv = p.layers[l].v.slice(s![..past, cols.clone()]);
                    (
                        ndarray::concatenate![ndarray::Axis(0), pk, lt.k.slice(s![.., cols.clone()])],
                        ndarray::concatenate![ndarray::Axis(0), pv, lt.v.slice(s![.., cols.clone()])],
                    )
                }
                None => (
                    lt.k.slice(s![.., cols.clone()]).to_owned(),
                    lt.v.slice(s![.., cols.clone()]).to_owned(),
                ),
            };

            // dV over the full span, then softmax backward on the scores.
            let dvh_cat = probs.t().dot(&dah); // total x dh
            let mut dp = dah.dot(&vh_cat.t()); // seq x total
            for i in 0..seq {
                let valid = past + i + 1;
                let mut dot = F::zero();
                for j in 0..valid {
                    dot = dot + dp[[i, j]] * probs[[i, j]];
                }
                for j in 0..valid {
                    dp[[i, j]] = probs[[i, j]] * (dp[[i, j]] - dot) * scale;
                }
                for j in valid..total {
                    dp[[i, j]] = F::zero();
                }
            }
            let dqh = dp.dot(&kh_cat); // seq x dh
            let dkh_cat = dp.t().dot(&qh); // total x dh

            dq.slice_mut(s![.., cols.clone()]).assign(&dqh);
            dk_own
                .slice_mut(s![.., cols.clone()])
                .assign(&dkh_cat.slice(s![past.., ..]));
            dv_own
                .slice_mut(s![.., cols.clone()])
                .assign(&dvh_cat.slice(s![past.., ..]));
            if let Some(pending) = parent_out.as_deref_mut() {
                let mut pk = pending.dk[l].slice_mut(s![..past, cols.clone()]);
                pk += &dkh_cat.slice(s![..past, ..]);
                let mut pv = pending.dv[l].slice_mut(s![..past, cols]);
                pv += &dvh_cat.slice(s![..past, ..]);
            }
        }

        // Branch contributions to this trunk layer's K/V join here.
        if let Some(pending) = pending_in {
            dk_own += &pending.dk[l];
            dv_own += &pending.dv[l];
        }

        let dwq = lt.ln1.out.t().dot(&dq);
        let dwk = lt.ln1.out.t().dot(&dk_own);
        let dwv = lt.ln1.out.t().dot(&dv_own);
        let dh1 = dq.dot(&lv.wq.t()) + dk_own.dot(&lv.wk.t()) + dv_own.dot(&lv.wv.t());
        add_seg2(grads, offs.wq, &dwq);
        add_seg2(grads, offs.wk, &dwk);
        add_seg2(grads, offs.wv, &dwv);

        let (dx_ln1, dg1, dbias1) = ln_backward(&dh1, &lt.x_in, &lt.ln1, lv.ln1_g);
        add_seg1(grads, offs.ln1_g, &dg1);
        add_seg1(grads, offs.ln1_b, &dbias1);
        dx_mid += &dx_ln1;
        dx = dx_mid;
    }

    // Embeddings: scatter into token rows, add into position rows.
    let dx0 = match &trace.drop {
        Some(m) => &dx * &m.emb,
        None => dx,
    };
    let d_model = d;
    for (i, &id) in trace.ids.iter().enumerate() {
        let tok_off = id as usize * d_model;
        let pos_off = params.pos_emb_offset() + (trace.start + i) * d_model;
        for j in 0..d_model {
            grads.data[tok_off + j] = grads.data[tok_off + j] + dx0[[i, j]];
            grads.data[pos_off + j] = grads.data[pos_off + j] + dx0[[i, j]];
        }
    }
}

/// Backpropagate a trunk together with its decoded branches.
///
/// `branches` pair each branch trace with the gradient of the loss w.r.t.
/// that branch's logits; `trunk_dlogits` seeds the trunk rows. Gradients
/// accumulate into `grads` (same layout as the parameters).
pub fn backward_session<F: Scalar>(
    params: &ModelParams<F>,
    trunk: &Trace<F>,
    trunk_dlogits: &Array2<F>,
    branches: &[(&Trace<F>, Array2<F>)],
    grads: &mut ModelParams<F>,
) {
    let pending = if branches.is_empty() {
        None
    } else {
        let mut pending = PendingKv::new(params.cfg.n_layers, trunk.len(), params.cfg.d_model);
        for (branch, dlogits) in branches {
            backward_one(
                params,
                branch,
                dlogits,
                Some(trunk),
                Some(&mut pending),
                None,
                grads,
            );
        }
        Some(pending)
    };
    backward_one(
        params,
        trunk,
        trunk_dlogits,
        None,
        None,
        pending.as_ref(),
        grads,
    );
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{forward, forward_branch, init_params, ModelConfig, ModelParams};
    use ndarray::Array2;

    /// Mean cross-entropy of `targets` under the trace, every position masked in.
    fn lm_loss_and_seed(
        trace: &Trace<f64>,
        targets: &[u32],
    ) -> (f64, Array2<f64>) {
        let n = targets.len() as f64;
        let mut loss = 0.0;
        let mut seed = Array2::zeros(trace.logits.dim());
        for (i, &t) in targets.iter().enumerate() {
            loss -= trace.logprob(i, t);
            for j in 0..trace.logits.ncols() {
                let p = trace.probs[[i, j]];
                let y = if j == t as usize { 1.0 } else { 0.0 };
                seed[[i, j]] = (p - y) / n;
            }
        }
        (loss / n, seed)
    }

    /// Central-difference check with mixed tolerance |a - n| <= atol + rtol*max:
    /// returns the worst violation score (<= 1 passes). The absolute floor
    /// absorbs f64 round-off on near-zero gradients.
    fn fd_check(
        params: &ModelParams<f64>,
        grads: &ModelParams<f64>,
        eps: f64,
        mut loss_fn: impl FnMut(&ModelParams<f64>) -> f64,
    ) -> f64 {
        let (atol, rtol) = (1e-8, 1e-6);
        let mut probe = params.clone();
        let mut worst = 0.0f64;
        for i in 0..params.data.len() {
            let orig = probe.data[i];
            probe.data[i] = orig + eps;
            let lp = loss_fn(&probe);
            probe.data[i] = orig - eps;
            let lm = loss_fn(&probe);
            probe.data[i] = orig;
            let numeric = (lp - lm) / (2.0 * eps);
            let analytic = grads.data[i];
            let bound = atol + rtol * analytic.abs().max(numeric.abs());
            worst = worst.max((analytic - numeric).abs() / bound);
        }
        worst
    }

    #[test]
    fn zero_seed_gives_zero_gradients() {
        let cfg = ModelConfig::tiny(11);
        let params: ModelParams<f64> = init_params(&cfg, 1).unwrap();
        let trace = forward(&params, &[1, 2, 3]).unwrap();
        let seed = Array2::zeros(trace.logits.dim());
        let mut grads = ModelParams::zeros(&cfg);
        backward_session(&params, &trace, &seed, &[], &mut grads);
        assert!(grads.data.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        // Trunk-only LM loss on the tiny config; exhaustive over parameters.
        let cfg = ModelConfig::tiny(11);
        let params: ModelParams<f64> = init_params(&cfg, 42).unwrap();
        let ids = [1u32, 4, 2, 9, 3, 7];
        let targets = [4u32, 2, 9, 3, 7, 10];

        let trace = forward(&params, &ids).unwrap();
        let (_, seed) = lm_loss_and_seed(&trace, &targets);
        let mut grads = ModelParams::zeros(&cfg);
        backward_session(&params, &trace, &seed, &[], &mut grads);

        let loss_fn = |p: &ModelParams<f64>| {
            let t = forward(p, &ids).unwrap();
            lm_loss_and_seed(&t, &targets).0
        };
        let worst = fd_check(&params, &grads, 1e-5, |p| loss_fn(p));
        assert!(worst < 1.0, "finite-difference mismatch score {worst}");
    }

    #[test]
    fn branch_gradients_match_finite_differences() {
        // Loss = mean CE on trunk + sum logprob of branch tokens, branching
        // mid-trunk; checks the pending K/V plumbing end to end.
        let cfg = ModelConfig::tiny(11);
        let params: ModelParams<f64> = init_params(&cfg, 7).unwrap();
        let trunk_ids = [1u32, 4, 2, 9, 3, 7, 5];
        let targets = [4u32, 2, 9, 3, 7, 5, 6];
        let start = 4usize;
        let branch_ids = [8u32, 6, 1];
        let branch_targets = [6u32, 1, 10];

        let compute = |p: &ModelParams<f64>| -> (f64, Trace<f64>, Trace<f64>) {
            let trunk = forward(p, &trunk_ids).unwrap();
            let branch = forward_branch(p, &trunk, start, &branch_ids).unwrap();
            let (lm, _) = lm_loss_and_seed(&trunk, &targets);
            let mut rl = 0.0;
            for (i, &t) in branch_targets.iter().enumerate() {
                rl -= branch.logprob(i, t);
            }
            (lm + 0.5 * rl, trunk, branch)
        };

        let (_, trunk, branch) = compute(&params);
        let (_, trunk_seed) = lm_loss_and_seed(&trunk, &targets);
        let mut branch_seed = Array2::zeros(branch.logits.dim());
        for (i, &t) in branch_targets.iter().enumerate() {
            for j in 0..branch.logits.ncols() {
                let p = branch.probs[[i, j]];
                let y = if j == t as usize { 1.0 } else { 0.0 };
                branch_seed[[i, j]] = 0.5 * (p - y);
            }
        }
        let mut grads = ModelParams::zeros(&cfg);
        backward_session(&params, &trunk, &trunk_seed, &[(&branch, branch_seed)], &mut grads);

        let worst = fd_check(&params, &grads, 1e-5, |p| compute(p).0);
        assert!(worst < 1.0, "finite-difference mismatch score {worst}");
    }

    #[test]
    fn dropout_masks_backpropagate_exactly() {
        use rand::SeedableRng;
        let mut cfg = ModelConfig::tiny(11);
        cfg.dropout = 0.3;
        let params: ModelParams<f64> = init_params(&cfg, 11).unwrap();
        let ids = [1u32, 4, 2, 9];
        let targets = [4u32, 2, 9, 3];
        // Fixed rng seed means fixed masks, so FD stays valid.
        let run = |p: &ModelParams<f64>| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
            let t = crate::model::forward_train(p, &ids, &mut rng).unwrap();
            lm_loss_and_seed(&t, &targets).0
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let trace = crate::model::forward_train(&params, &ids, &mut rng).unwrap();
        assert!(trace.drop.is_some());
        let (_, seed) = lm_loss_and_seed(&trace, &targets);
        let mut grads = ModelParams::zeros(&cfg);
        backward_session(&params, &trace, &seed, &[], &mut grads);

        let worst = fd_check(&params, &grads, 1e-5, |p| run(p));
        assert!(worst < 1.0, "finite-difference mismatch score {worst}");
    }

    #[test]
    fn tied_embedding_gradient_is_sum_of_both_roles() {
        // Untied-equivalence: the tok_emb gradient equals the embedding-side
        // contribution plus the projection-side contribution computed
        // directly from the trace on a 2-token example.
        let cfg = ModelConfig::tiny(11);
        let params: ModelParams<f64> = init_params(&cfg, 13).unwrap();
        let ids = [3u32, 8];
        let targets = [8u32, 1];
        let trace = forward(&params, &ids).unwrap();
        let (_, seed) = lm_loss_and_seed(&trace, &targets);
        let mut grads = ModelParams::zeros(&cfg);
        backward_session(&params, &trace, &seed, &[], &mut grads);

        // Projection-side contribution: dE_proj = dlogits^T . lnf_out.
        let de_proj = seed.t().dot(&trace.lnf.out);
        // Embedding-side contribution via finite differences on an untied
        // twin: perturb only the embedding role by differentiating a frozen
        // projection. Equivalent check: tied grad minus projection part must
        // match FD of a loss where the projection matrix is held fixed.
        let eps = 1e-6;
        let v = cfg.vocab_size;
        let d = cfg.d_model;
        let frozen_proj = params.tok_emb().to_owned();
        let loss_untied = |p: &ModelParams<f64>| {
            let t = forward(p, &ids).unwrap();
            // Recompute logits with the frozen projection.
            let logits = t.lnf.out.dot(&frozen_proj.t());
            let mut loss = 0.0;
            for (i, &tgt) in targets.iter().enumerate() {
                let row = logits.row(i);
                let maxv = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = maxv + row.iter().map(|&x| (x - maxv).exp()).sum::<f64>().ln();
                loss -= logits[[i, tgt as usize]] - lse;
            }
            loss / targets.len() as f64
        };
        let mut probe = params.clone();
        for id in [3usize, 8, 1] {
            for j in (0..d).step_by(3) {
                let idx = id * d + j;
                let orig = probe.data[idx];
                probe.data[idx] = orig + eps;
                let lp = loss_untied(&probe);
                probe.data[idx] = orig - eps;
                let lm = loss_untied(&probe);
                probe.data[idx] = orig;
                let emb_side = (lp - lm) / (2.0 * eps);
                let total = grads.data[idx];
                let proj_side = de_proj[[id, j]];
                let err = (total - (emb_side + proj_side)).abs();
                assert!(err < 1e-6, "row {id} col {j}: {total} vs {} + {}", emb_side, proj_side);
            }
        }
        let _ = v;
    }
}
