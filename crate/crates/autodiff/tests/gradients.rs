use ktbench_autodiff::gradcheck::{check_gradients, GradCheckConfig};
use ktbench_autodiff::{Graph, ParamStore, Result, Tensor, Var};
use ktbench_core::KtRng;

fn random(rows: usize, cols: usize, rng: &mut KtRng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.uniform_range(-1.0, 1.0)).collect()).unwrap()
}

fn store(shapes: &[(&str, usize, usize)], seed: u64) -> ParamStore {
    let mut rng = KtRng::new(seed);
    let mut s = ParamStore::new();
    for &(n, r, c) in shapes {
        s.insert(n, random(r, c, &mut rng));
    }
    s
}

/// Reduces `v` to a scalar through a fixed random weighting so every
/// output coordinate carries a distinct gradient.
fn weighted_sum(g: &mut Graph, v: Var, seed: u64) -> Result<Var> {
    let t = g.value(v);
    let (r, c) = (t.rows(), t.cols());
    let w = g.constant(random(r, c, &mut KtRng::new(seed)));
    let p = g.mul(v, w)?;
    Ok(g.sum(p))
}

fn assert_ok<F>(s: &ParamStore, f: F)
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let report = check_gradients(s, f, GradCheckConfig::default()).unwrap();
    assert!(!report.checks.is_empty());
    assert!(
        report.max_relative_error() < 1e-4,
        "worst coordinate {:?}",
        report.worst()
    );
}

#[test]
fn matmul_and_bias() {
    let s = store(&[("x", 3, 4), ("w", 4, 2), ("b", 1, 2)], 1);
    assert_ok(&s, |g, s| {
        let x = g.param(s, "x")?;
        let w = g.param(s, "w")?;
        let b = g.param(s, "b")?;
        let y = g.affine(x, w, b)?;
        weighted_sum(g, y, 9)
    });
}

#[test]
fn elementwise_binary() {
    let s = store(&[("a", 2, 3), ("b", 2, 3)], 2);
    assert_ok(&s, |g, s| {
        let a = g.param(s, "a")?;
        let b = g.param(s, "b")?;
        let sum = g.add(a, b)?;
        let diff = g.sub(a, b)?;
        let prod = g.mul(sum, diff)?;
        let scaled = g.scale(prod, 0.7);
        let flipped = g.one_minus(scaled);
        weighted_sum(g, flipped, 3)
    });
}

#[test]
fn activations() {
    let s = store(&[("a", 3, 3)], 3);
    assert_ok(&s, |g, s| {
        let a = g.param(s, "a")?;
        let sg = g.sigmoid(a);
        let th = g.tanh(a);
        let re = g.relu(a);
        let x = g.add(sg, th)?;
        let y = g.mul(x, re)?;
        weighted_sum(g, y, 4)
    });
}

#[test]
fn softmaxes() {
    let s = store(&[("a", 3, 4)], 4);
    let mask = Tensor::matrix(3, 4, vec![1., 1., 0., 1., 0., 0., 0., 0., 1., 0., 0., 0.]).unwrap();
    assert_ok(&s, |g, s| {
        let a = g.param(s, "a")?;
        let p = g.softmax(a);
        let q = g.masked_softmax(a, &mask)?;
        let y = g.add(p, q)?;
        weighted_sum(g, y, 5)
    });
}

#[test]
fn column_products_and_groups() {
    let s = store(&[("mem", 6, 3), ("w", 6, 1), ("v", 2, 3)], 5);
    assert_ok(&s, |g, s| {
        let mem = g.param(s, "mem")?;
        let w = g.param(s, "w")?;
        let v = g.param(s, "v")?;
        let weighted = g.mul_col(mem, w)?;
        let read = g.sum_groups(weighted, 3)?;
        let rep = g.repeat_rows(v, 3)?;
        let tiled = g.tile_rows(v, 3)?;
        let z = g.add(rep, tiled)?;
        let zz = g.mul(z, weighted)?;
        let a = weighted_sum(g, read, 6)?;
        let b = weighted_sum(g, zz, 7)?;
        let both = g.concat_rows(&[a, b])?;
        Ok(g.sum(both))
    });
}

#[test]
fn structural_ops() {
    let s = store(&[("a", 4, 3), ("b", 4, 2), ("e", 5, 3)], 6);
    assert_ok(&s, |g, s| {
        let a = g.param(s, "a")?;
        let b = g.param(s, "b")?;
        let e = g.param(s, "e")?;
        let cat = g.concat_cols(&[a, b])?;
        let top = g.slice_rows(cat, 1, 2)?;
        let mid = g.slice_cols(cat, 2, 2)?;
        let tr = g.transpose(mid);
        let looked = g.gather(e, &[4, 0, 4, 2])?;
        let picked = g.select_cols(looked, &[0, 2, 1, 2])?;
        let resh = g.reshape(a, 2, 6)?;
        let terms = [
            weighted_sum(g, top, 1)?,
            weighted_sum(g, tr, 2)?,
            weighted_sum(g, picked, 3)?,
            weighted_sum(g, resh, 4)?,
        ];
        let all = g.concat_rows(&terms)?;
        Ok(g.mean(all))
    });
}

#[test]
fn masked_cross_entropy() {
    let s = store(&[("z", 3, 4)], 7);
    let labels = Tensor::matrix(3, 4, vec![1., 0., 1., 1., 0., 0., 1., 0., 1., 1., 0., 1.]).unwrap();
    let mask = Tensor::matrix(3, 4, vec![1., 1., 1., 1., 1., 0., 1., 0., 1., 1., 0., 0.]).unwrap();
    assert_ok(&s, |g, s| {
        let z = g.param(s, "z")?;
        let p = g.sigmoid(z);
        g.bce_masked(p, &labels, &mask)
    });
}

#[test]
fn dropout_with_fixed_mask() {
    let s = store(&[("a", 5, 5)], 8);
    assert_ok(&s, |g, s| {
        let a = g.param(s, "a")?;
        let mut rng = KtRng::new(77);
        let d = g.dropout(a, 0.3, true, &mut rng)?;
        let t = g.tanh(d);
        weighted_sum(g, t, 9)
    });
}

#[test]
fn reused_parameter_accumulates() {
    let s = store(&[("w", 3, 3), ("x", 1, 3)], 9);
    assert_ok(&s, |g, s| {
        let x = g.param(s, "x")?;
        let mut h = x;
        for _ in 0..3 {
            let w = g.param(s, "w")?;
            let z = g.matmul(h, w)?;
            h = g.tanh(z);
        }
        weighted_sum(g, h, 10)
    });
}

#[test]
fn unused_parameters_get_zero_gradient() {
    let s = store(&[("used", 2, 2), ("unused", 3, 1)], 10);
    let mut g = Graph::new();
    let u = g.param(&s, "used").unwrap();
    let loss = g.sum(u);
    let grads = g.backward(loss, &s).unwrap();
    assert_eq!(grads.len(), 2);
    assert!(grads.get("unused").unwrap().data().iter().all(|&v| v == 0.0));
    assert!(grads.get("used").unwrap().data().iter().all(|&v| v == 1.0));
}

#[test]
fn non_scalar_loss_is_rejected() {
    let s = store(&[("a", 2, 2)], 11);
    let mut g = Graph::new();
    let a = g.param(&s, "a").unwrap();
    assert!(g.backward(a, &s).is_err());
}

#[test]
fn shape_mismatches_are_errors() {
    let s = store(&[("a", 2, 3), ("b", 2, 2)], 12);
    let mut g = Graph::new();
    let a = g.param(&s, "a").unwrap();
    let b = g.param(&s, "b").unwrap();
    assert!(g.add(a, b).is_err());
    assert!(g.matmul(a, b).is_err());
    assert!(g.gather(a, &[2]).is_err());
    assert!(g.param(&s, "missing").is_err());
}
