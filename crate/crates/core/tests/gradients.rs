mod common;

use std::sync::Arc;

use common::randn;
use spectran_core::adapter::{fuse_graph, FusionMode, SpecTranParams};
use spectran_core::model::{ModelConfig, SeqRecModel, Transform};
use spectran_core::numkit::{finite_diff_gradcheck, DenseMatrix, ParamStore, Tape, Var};
use spectran_core::recmodel::{
    embed_sequence, encode_sequence, last_positions, sample_negatives, BackboneConfig, Batch, SasrecParams,
    NUM_NEGATIVES,
};
use spectran_core::rng::substream;
use spectran_core::Result;

const H: f64 = 1e-6;
const OP_TOL: f64 = 1e-6;

/// Contracts `out` with fixed random weights so every output entry reaches the loss.
fn readout(tape: &mut Tape<f64>, out: Var, seed: u64) -> Result<Var> {
    let (r, c) = tape.value(out).shape();
    let w = tape.constant(randn(r, c, seed));
    let p = tape.mul(out, w)?;
    Ok(tape.sum(p))
}

fn store_of(entries: &[(&str, DenseMatrix<f64>)]) -> ParamStore<f64> {
    let mut s = ParamStore::new();
    for (name, v) in entries {
        s.insert(*name, v.clone()).unwrap();
    }
    s
}

fn check(
    mut store: ParamStore<f64>,
    tol: f64,
    mut build: impl FnMut(&mut Tape<f64>, &ParamStore<f64>) -> Result<Var>,
) {
    let report = finite_diff_gradcheck(&mut store, H, |t, s| build(t, s)).unwrap();
    assert!(
        report.max_rel_error <= tol,
        "max relative error {:e} at {}[{}]",
        report.max_rel_error,
        report.worst_param,
        report.worst_index
    );
    assert!(report.coordinates > 0);
}

fn p(tape: &mut Tape<f64>, store: &ParamStore<f64>, name: &str) -> Var {
    tape.param(store, store.id(name).unwrap())
}

#[test]
fn matmul_variants() {
    let store = store_of(&[("a", randn(3, 4, 1)), ("b", randn(4, 2, 2)), ("c", randn(5, 4, 3))]);
    check(store, OP_TOL, |t, s| {
        let (a, b, c) = (p(t, s, "a"), p(t, s, "b"), p(t, s, "c"));
        let ab = t.matmul(a, b)?;
        let act = t.matmul_nt(a, c)?;
        let l1 = readout(t, ab, 10)?;
        let l2 = readout(t, act, 11)?;
        t.add(l1, l2)
    });
}

#[test]
fn elementwise_and_rows() {
    let store = store_of(&[("x", randn(4, 3, 4)), ("y", randn(4, 3, 5)), ("row", randn(1, 3, 6))]);
    check(store, OP_TOL, |t, s| {
        let (x, y, row) = (p(t, s, "x"), p(t, s, "y"), p(t, s, "row"));
        let m = t.mul(x, y)?;
        let a = t.add_row(m, row)?;
        let sc = t.scale(a, 0.7);
        let r = t.relu(sc);
        let cat = t.concat_cols(r, x)?;
        let sq = t.sum_squares(y);
        let l = readout(t, cat, 12)?;
        t.add(l, sq)
    });
}

#[test]
fn softshrink_in_value_and_threshold() {
    for lam in [0.3, -0.3] {
        let store = store_of(&[("x", randn(5, 4, 7)), ("lambda", DenseMatrix::scalar(lam))]);
        check(store, OP_TOL, |t, s| {
            let (x, l) = (p(t, s, "x"), p(t, s, "lambda"));
            let out = t.softshrink(x, l)?;
            readout(t, out, 13)
        });
    }
}

#[test]
fn spectral_encoding_shared_and_per_component() {
    let sigma = [4.0, 2.5, 1.5, 0.7, 0.2];
    for rows in [1, 3] {
        let store = store_of(&[("alpha", randn(rows, 4, 8))]);
        check(store, OP_TOL, |t, s| {
            let a = p(t, s, "alpha");
            let out = t.spectral_encoding(a, &sigma, 3, 5)?;
            readout(t, out, 14)
        });
    }
}

#[test]
fn gathers_and_candidate_scores() {
    let store = store_of(&[("table", randn(6, 3, 9)), ("user", randn(2, 3, 10))]);
    let cands = Arc::new(vec![vec![1, 4, 4, 0], vec![5, 2, 1, 1]]);
    check(store, OP_TOL, |t, s| {
        let (tab, u) = (p(t, s, "table"), p(t, s, "user"));
        let g = t.gather_rows(tab, vec![Some(2), None, Some(2), Some(5)])?;
        let sc = t.candidate_scores(u, tab, cands.clone())?;
        let l1 = readout(t, g, 15)?;
        let l2 = readout(t, sc, 16)?;
        t.add(l1, l2)
    });
}

#[test]
fn attention_primitives() {
    let (block, blocks) = (3, 2);
    let store = store_of(&[
        ("q", randn(block * blocks, 4, 11)),
        ("k", randn(block * blocks, 4, 12)),
        ("v", randn(block * blocks, 4, 13)),
    ]);
    let mut mask = vec![false; block * blocks * block];
    for r in 0..block * blocks {
        let i = r % block;
        for j in 0..=i {
            mask[r * block + j] = !(r >= block && j == 0);
        }
    }
    let mask = Arc::new(mask);
    check(store, OP_TOL, |t, s| {
        let (q, k, v) = (p(t, s, "q"), p(t, s, "k"), p(t, s, "v"));
        let sc = t.block_scores(q, k, block, 0.5)?;
        let w = t.masked_softmax(sc, mask.clone())?;
        let out = t.block_mix(w, v, block)?;
        readout(t, out, 17)
    });
}

#[test]
fn layer_norm_all_inputs() {
    let store = store_of(&[("x", randn(4, 5, 14)), ("g", randn(1, 5, 15)), ("b", randn(1, 5, 16))]);
    check(store, OP_TOL, |t, s| {
        let (x, g, b) = (p(t, s, "x"), p(t, s, "g"), p(t, s, "b"));
        let out = t.layer_norm(x, g, b, 1e-8)?;
        readout(t, out, 18)
    });
}

#[test]
fn infonce_scores_and_temperature() {
    for tau in [1.0, 0.4] {
        let store = store_of(&[("scores", randn(3, 6, 17))]);
        check(store, OP_TOL, |t, s| {
            let x = p(t, s, "scores");
            t.infonce(x, tau)
        });
    }
}

/// Fixed 6 × 8 basis with decreasing column scales, standing in for `U`.
fn explicit_basis() -> DenseMatrix<f64> {
    DenseMatrix::from_fn(6, 8, |i, j| ((i * 8 + j) as f64 * 0.37).sin() / (1.0 + 0.3 * j as f64))
}

#[test]
fn full_loss_on_six_items_and_three_users() {
    let (d, m, r, n) = (4, 4, 8, 2);
    let cfg = BackboneConfig {
        d,
        max_len: 4,
        dropout: 0.0,
        ..BackboneConfig::default()
    };
    let mut store = ParamStore::new();
    let backbone = SasrecParams::init(&mut store, &cfg, 6, &mut substream(5, "init")).unwrap();
    // Larger ID rows keep the attention logits away from uniform.
    let id = store.id("item.embedding").unwrap();
    store.set(id, randn(6, d, 20).scale(0.5)).unwrap();
    let spec = SpecTranParams::with_values(
        &mut store,
        randn(d, m, 21).scale(0.5),
        randn(r, m, 22).scale(0.5),
        DenseMatrix::from_rows(&[vec![0.3, 1.0, -0.4]]).unwrap(),
        0.05,
    )
    .unwrap();
    assert_eq!(spec.order(), n);
    let sigma = [3.0, 2.2, 1.6, 1.1, 0.8, 0.5, 0.3, 0.1];
    let basis = Arc::new(explicit_basis());
    let histories: Vec<Vec<usize>> = vec![vec![0, 1, 2], vec![3, 5], vec![2, 4, 1, 0, 5]];
    let targets = [3, 0, 4];
    let mut neg = substream(5, "negatives");
    let negatives: Vec<Vec<usize>> = targets
        .iter()
        .map(|&t| sample_negatives(&mut neg, t, 6, NUM_NEGATIVES).unwrap())
        .collect();
    let batch = Batch {
        histories,
        targets: targets.to_vec(),
        negatives,
    };
    let cands = Arc::new(batch.candidates());
    let hist = batch.history_slices();

    let report = finite_diff_gradcheck(&mut store, H, |tape, s| {
        let u = tape.constant(basis.clone());
        let e_s = spec.project(tape, s, u, &sigma)?;
        let e_id = tape.param(s, backbone.item);
        let items = fuse_graph(tape, e_s, e_id, FusionMode::Add, None)?;
        let emb = embed_sequence(tape, items, s, &backbone, &hist)?;
        let enc = encode_sequence(tape, &emb, s, &backbone, &cfg, None)?;
        let last = last_positions(tape, enc, emb.batch, emb.len)?;
        let scores = tape.candidate_scores(last, items, cands.clone())?;
        tape.infonce(scores, 1.0)
    })
    .unwrap();
    assert_eq!(report.coordinates, store.num_scalars());
    assert!(
        report.max_rel_error <= 1e-4,
        "max relative error {:e} at {}[{}]",
        report.max_rel_error,
        report.worst_param,
        report.worst_index
    );
}

fn small_model(transform: Transform, fusion: FusionMode) -> (SeqRecModel<f64>, Batch) {
    let config = ModelConfig {
        transform,
        fusion,
        backbone: BackboneConfig {
            d: 4,
            max_len: 4,
            dropout: 0.0,
            ..BackboneConfig::default()
        },
        mlp_hidden: Some(5),
        ..ModelConfig::default()
    };
    let e = randn(7, 12, 30);
    let mut model = SeqRecModel::new(config, Some(&e), 7, 3).unwrap();
    // Move softshrink off its zero threshold and away from the init scale.
    if let Some(sp) = model.spectran_params().cloned() {
        model.store_mut().set(sp.lambda, DenseMatrix::scalar(0.02)).unwrap();
        let q = randn(4, 4, 31);
        model.store_mut().set(sp.q, q).unwrap();
    }
    let id = model.backbone().item;
    model.store_mut().set(id, randn(7, 4, 32).scale(0.5)).unwrap();
    let mut neg = substream(9, "negatives");
    let targets = vec![6, 1];
    let negatives = targets.iter().map(|&t| sample_negatives(&mut neg, t, 7, 8).unwrap()).collect();
    let batch = Batch {
        histories: vec![vec![0, 2, 3], vec![5, 4, 6, 2, 0]],
        targets,
        negatives,
    };
    (model, batch)
}

fn model_gradcheck(transform: Transform, fusion: FusionMode) -> f64 {
    let (model, batch) = small_model(transform, fusion);
    let mut store = model.store().clone();
    // A wider step keeps rounding noise below the smallest backbone gradients.
    let report = finite_diff_gradcheck(&mut store, 1e-5, |tape, s| {
        let mut m = model.clone();
        *m.store_mut() = s.clone();
        m.loss(tape, &batch, None)
    })
    .unwrap();
    report.max_rel_error
}

#[test]
fn assembled_models_with_real_svd_basis() {
    for (t, f) in [
        (Transform::SpecTran, FusionMode::Add),
        (Transform::SpecTran, FusionMode::ConcatProject),
        (Transform::Mlp, FusionMode::Add),
        (Transform::SvdTruncate, FusionMode::Add),
        (Transform::None, FusionMode::Add),
    ] {
        let err = model_gradcheck(t, f);
        assert!(err <= 1e-4, "{t}/{f}: max relative error {err:e}");
    }
}

#[test]
fn squared_norm_of_semantic_table() {
    let (model, _) = small_model(Transform::SpecTran, FusionMode::Add);
    let sp = model.spectran_params().unwrap().clone();
    let sigma = model.spectral_sigma().unwrap().to_vec();
    let f = spectran_core::spectral::svd_decompose(&randn(7, 12, 30)).unwrap();
    let u = Arc::new(f.u().clone());
    let mut store = ParamStore::new();
    for id in sp.ids() {
        store.insert(model.store().name(id), model.store().value(id).clone()).unwrap();
    }
    let sp = SpecTranParams::from_store(&store).unwrap();
    check(store, 1e-5, |tape, s| {
        let uv = tape.constant(u.clone());
        let e_s = sp.project(tape, s, uv, &sigma)?;
        Ok(tape.sum_squares(e_s))
    });
}

