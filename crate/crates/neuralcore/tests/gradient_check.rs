//! Central finite-difference verification of the analytic gradients for the
//! composed feature-extractor + head losses.

use ndarray::Array2;
use neuralcore::{
    backward, corr_loss_grad, forward, xent_loss_grad, MlpGrads, MlpParams, ModelBundle,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-4;
const MAX_REL_ERR: f64 = 1e-4;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

fn flatten(m: &MlpParams) -> Vec<f64> {
    let mut out = Vec::new();
    for l in &m.layers {
        out.extend(l.weights.iter());
        out.extend(l.biases.iter());
    }
    out
}

fn set_flat(m: &mut MlpParams, values: &[f64]) {
    let mut it = values.iter();
    for l in &mut m.layers {
        for v in l.weights.iter_mut() {
            *v = *it.next().unwrap();
        }
        for v in l.biases.iter_mut() {
            *v = *it.next().unwrap();
        }
    }
}

fn flatten_grads(g: &MlpGrads) -> Vec<f64> {
    let mut out = Vec::new();
    for l in &g.layers {
        out.extend(l.weights.iter());
        out.extend(l.biases.iter());
    }
    out
}

/// Task loss through the extractor and task head.
fn msi_loss(fe: &MlpParams, head: &MlpParams, x: &Array2<f64>, y: &[usize]) -> f64 {
    let f = forward(fe, x).unwrap();
    let h = forward(head, &f.output).unwrap();
    xent_loss_grad(&h.output, y).unwrap().0
}

/// Bias loss through the extractor and a bias head.
fn be_loss(fe: &MlpParams, head: &MlpParams, x: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let f = forward(fe, x).unwrap();
    let h = forward(head, &f.output).unwrap();
    corr_loss_grad(b, &h.output).unwrap().0
}

fn analytic_msi_grads(
    fe: &MlpParams,
    head: &MlpParams,
    x: &Array2<f64>,
    y: &[usize],
) -> (MlpGrads, MlpGrads) {
    let fe_cache = forward(fe, x).unwrap();
    let head_cache = forward(head, &fe_cache.output).unwrap();
    let (_, dlogits) = xent_loss_grad(&head_cache.output, y).unwrap();
    let (head_grads, dfeat) = backward(head, &head_cache, &dlogits).unwrap();
    let (fe_grads, _) = backward(fe, &fe_cache, &dfeat).unwrap();
    (fe_grads, head_grads)
}

fn analytic_be_grads(
    fe: &MlpParams,
    head: &MlpParams,
    x: &Array2<f64>,
    b: &Array2<f64>,
) -> (MlpGrads, MlpGrads) {
    let fe_cache = forward(fe, x).unwrap();
    let head_cache = forward(head, &fe_cache.output).unwrap();
    let (_, dhat) = corr_loss_grad(b, &head_cache.output).unwrap();
    let (head_grads, dfeat) = backward(head, &head_cache, &dhat).unwrap();
    let (fe_grads, _) = backward(fe, &fe_cache, &dfeat).unwrap();
    (fe_grads, head_grads)
}

fn check_param_grads<F: Fn(&MlpParams) -> f64>(
    params: &MlpParams,
    analytic: &MlpGrads,
    loss: F,
    what: &str,
) {
    let base = flatten(params);
    let analytic_flat = flatten_grads(analytic);
    let mut probe = params.clone();
    for (i, a) in analytic_flat.iter().enumerate() {
        let mut bumped = base.clone();
        bumped[i] = base[i] + EPS;
        set_flat(&mut probe, &bumped);
        let lp = loss(&probe);
        bumped[i] = base[i] - EPS;
        set_flat(&mut probe, &bumped);
        let lm = loss(&probe);
        let fd = (lp - lm) / (2.0 * EPS);
        let err = rel_err(*a, fd);
        assert!(
            err <= MAX_REL_ERR,
            "{what} param {i}: analytic {a} vs fd {fd} (rel {err:.2e})"
        );
    }
}

fn random_batch(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.5..1.5))
}

/// Central differences are invalid across a rectifier kink; keep every hidden
/// pre-activation clear of the probe window.
fn rectifier_safe(bundle: &ModelBundle, x: &Array2<f64>) -> bool {
    const MARGIN: f64 = 5e-3;
    let fe_cache = forward(&bundle.fe, x).unwrap();
    let check = |cache: &neuralcore::ForwardCache, layers: usize| -> bool {
        cache.pre_activations[..layers.saturating_sub(1)]
            .iter()
            .all(|z| z.iter().all(|v| v.abs() > MARGIN))
    };
    if !check(&fe_cache, bundle.fe.layers.len()) {
        return false;
    }
    for head in std::iter::once(&bundle.msi_head).chain(bundle.be_heads.iter()) {
        let cache = forward(head, &fe_cache.output).unwrap();
        if !check(&cache, head.layers.len()) {
            return false;
        }
    }
    true
}

fn run_sweep(seed: u64) {
    let bundle = ModelBundle::init(4, &[5], 4, &[4], 2, &[("b".into(), 3)], seed ^ 0xA5A5);
    let total = bundle.fe.n_params() + bundle.msi_head.n_params() + bundle.be_heads[0].n_params();
    assert!(total <= 300, "gradient sweep bundle must stay tiny, got {total}");

    let n = 5;
    let (x, y, b) = {
        let mut attempt = 0u64;
        loop {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (attempt << 32));
            let x = random_batch(&mut rng, n, 4);
            let y: Vec<usize> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
            if rectifier_safe(&bundle, &x) {
                break (x, y, depstats_one_hot(&labels, 3));
            }
            attempt += 1;
            assert!(attempt < 1000, "no rectifier-safe batch found");
        }
    };

    let (fe_g, msi_g) = analytic_msi_grads(&bundle.fe, &bundle.msi_head, &x, &y);
    check_param_grads(
        &bundle.fe,
        &fe_g,
        |fe| msi_loss(fe, &bundle.msi_head, &x, &y),
        "task loss / extractor",
    );
    check_param_grads(
        &bundle.msi_head,
        &msi_g,
        |h| msi_loss(&bundle.fe, h, &x, &y),
        "task loss / task head",
    );

    let (fe_g, be_g) = analytic_be_grads(&bundle.fe, &bundle.be_heads[0], &x, &b);
    check_param_grads(
        &bundle.fe,
        &fe_g,
        |fe| be_loss(fe, &bundle.be_heads[0], &x, &b),
        "bias loss / extractor",
    );
    check_param_grads(
        &bundle.be_heads[0],
        &be_g,
        |h| be_loss(&bundle.fe, h, &x, &b),
        "bias loss / bias head",
    );
}

fn depstats_one_hot(labels: &[usize], k: usize) -> Array2<f64> {
    let mut m = Array2::zeros((labels.len(), k));
    for (i, &l) in labels.iter().enumerate() {
        m[[i, l]] = 1.0;
    }
    m
}

#[test]
fn composite_gradients_match_finite_differences() {
    for seed in 0..5 {
        run_sweep(seed);
    }
}

#[test]
fn input_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let fe = MlpParams::init(&[3, 4, 2], 17);
    let head = MlpParams::init(&[2, 2], 18);
    let mut x = random_batch(&mut rng, 4, 3);
    let y = vec![0, 1, 1, 0];

    let fe_cache = forward(&fe, &x).unwrap();
    let head_cache = forward(&head, &fe_cache.output).unwrap();
    let (_, dlogits) = xent_loss_grad(&head_cache.output, &y).unwrap();
    let (_, dfeat) = backward(&head, &head_cache, &dlogits).unwrap();
    let (_, dx) = backward(&fe, &fe_cache, &dfeat).unwrap();

    for i in 0..4 {
        for j in 0..3 {
            let orig = x[[i, j]];
            x[[i, j]] = orig + EPS;
            let lp = msi_loss(&fe, &head, &x, &y);
            x[[i, j]] = orig - EPS;
            let lm = msi_loss(&fe, &head, &x, &y);
            x[[i, j]] = orig;
            let fd = (lp - lm) / (2.0 * EPS);
            let err = rel_err(dx[[i, j]], fd);
            assert!(err <= MAX_REL_ERR, "input ({i},{j}): {} vs {fd}", dx[[i, j]]);
        }
    }
}
