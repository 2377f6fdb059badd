//! Every tape primitive against central finite differences, plus
//! algebraic identities of the gather/scatter pair.

use kgt_core::autodiff::{grad_check, NodeId, ParamId, ParamStore, Tape, Tensor};
use kgt_core::Result;
use proptest::prelude::*;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-6;

fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |d| Tensor::from_vec(rows, cols, d).unwrap())
}

/// Magnitudes in `[0.2, 2]` with random sign, away from kinks at zero.
fn off_zero(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec((0.2f64..2.0, any::<bool>()), rows * cols).prop_map(move |d| {
        let d = d.into_iter().map(|(m, s)| if s { m } else { -m }).collect();
        Tensor::from_vec(rows, cols, d).unwrap()
    })
}

struct Case {
    store: ParamStore,
    a: ParamId,
    b: ParamId,
    probe: Tensor,
}

fn case(a: Tensor, b: Tensor, probe: Tensor) -> Case {
    let mut store = ParamStore::new();
    let a = store.register("a", a).unwrap();
    let b = store.register("b", b).unwrap();
    Case { store, a, b, probe }
}

/// `sum(op(a, b) ⊙ probe)` so every output entry carries its own weight.
fn check<F>(c: &Case, op: F) -> std::result::Result<(), TestCaseError>
where
    F: Fn(&mut Tape<'_>, NodeId, NodeId) -> Result<NodeId>,
{
    let report = grad_check(
        &c.store,
        |tape| {
            let a = tape.param(c.a);
            let b = tape.param(c.b);
            let y = op(tape, a, b)?;
            let probe = tape.constant(c.probe.clone());
            let weighted = tape.mul(y, probe)?;
            Ok(tape.sum(weighted))
        },
        STEP,
        TOL,
        None,
    )
    .unwrap();
    prop_assert!(report.passed(), "{:?}", report.worst());
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn matmul_family(a in matrix(3, 4, -1.0, 1.0), b in matrix(4, 2, -1.0, 1.0), p in matrix(3, 2, -1.0, 1.0)) {
        let c = case(a.clone(), b.clone(), p.clone());
        check(&c, |t, a, b| t.matmul(a, b))?;
        let c = case(a.clone(), b.transpose(), p.clone());
        check(&c, |t, a, b| t.matmul_nt(a, b))?;
        let c = case(a.transpose(), b, p);
        check(&c, |t, a, b| t.matmul_tn(a, b))?;
    }

    #[test]
    fn elementwise_with_broadcasts(
        a in matrix(3, 4, -1.0, 1.0),
        same in off_zero(3, 4),
        row in off_zero(1, 4),
        col in off_zero(3, 1),
        scalar in off_zero(1, 1),
        p in matrix(3, 4, -1.0, 1.0),
    ) {
        for b in [same, row, col, scalar] {
            let c = case(a.clone(), b, p.clone());
            check(&c, |t, a, b| t.add(a, b))?;
            check(&c, |t, a, b| t.mul(a, b))?;
            check(&c, |t, a, b| t.div(a, b))?;
        }
    }

    #[test]
    fn unary_maps(a in off_zero(3, 3), p in matrix(3, 3, -1.0, 1.0)) {
        let c = case(a.clone(), Tensor::zeros(1, 1), p.clone());
        check(&c, |t, a, _| Ok(t.relu(a)))?;
        check(&c, |t, a, _| Ok(t.sigmoid(a)))?;
        check(&c, |t, a, _| Ok(t.exp(a)))?;
        check(&c, |t, a, _| Ok(t.scale(a, -1.7)))?;
        check(&c, |t, a, _| Ok(t.add_scalar(a, 0.3)))?;
        check(&c, |t, a, _| Ok(t.clamp(a, -1.1, 1.1)))?;
        check(&c, |t, a, _| { let e = t.exp(a); Ok(t.log(e)) })?;
        check(&c, |t, a, _| { let s = t.sigmoid(a); Ok(t.log(s)) })?;
    }

    #[test]
    fn reductions_and_reshapes(a in matrix(4, 3, -1.0, 1.0), b in matrix(4, 2, -1.0, 1.0)) {
        let c = case(a.clone(), b.clone(), Tensor::from_rows(&[vec![0.7]]));
        check(&c, |t, a, _| Ok(t.sum(a)))?;
        let c = case(a.clone(), b.clone(), Tensor::from_rows(&[vec![0.5, -1.0, 2.0]]));
        check(&c, |t, a, _| Ok(t.mean_rows(a)))?;
        let c = case(a.clone(), b.clone(), Tensor::from_rows(&[vec![1.0], vec![-2.0], vec![0.5], vec![3.0]]));
        check(&c, |t, a, _| Ok(t.row_sums(a)))?;
        let probe = Tensor::from_vec(4, 5, (0..20).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let c = case(a.clone(), b, probe);
        check(&c, |t, a, b| t.concat_columns(a, b))?;
        let probe = Tensor::from_vec(2, 6, (0..12).map(|i| (i as f64 * 0.53).cos()).collect()).unwrap();
        let c = case(a, Tensor::zeros(1, 1), probe);
        check(&c, |t, a, _| t.reshape(a, 2, 6))?;
    }

    #[test]
    fn normalizations(x in matrix(3, 5, -2.0, 2.0), gain in off_zero(1, 5), p in matrix(3, 5, -1.0, 1.0)) {
        let c = case(x.clone(), gain, p.clone());
        check(&c, |t, x, g| {
            let bias = t.constant(Tensor::full(1, 5, 0.1));
            t.layer_norm(x, g, bias, 1e-5)
        })?;
        check(&c, |t, x, g| {
            // Bias taken from a row of x so it too receives a gradient.
            let row = t.gather_rows(x, vec![0])?;
            t.layer_norm(x, g, row, 1e-5)
        })?;
        check(&c, |t, x, _| Ok(t.row_l2_normalize(x, 1e-12)))?;
    }

    #[test]
    fn indexing_ops(
        a in matrix(4, 3, -1.0, 1.0),
        table in matrix(3, 3, -1.0, 1.0),
        edges in prop::collection::vec((0usize..4, 0usize..3, 0usize..5), 0..12),
        p in matrix(5, 3, -1.0, 1.0),
    ) {
        let src: Vec<usize> = edges.iter().map(|e| e.0).collect();
        let rel: Vec<usize> = edges.iter().map(|e| e.1).collect();
        let dst: Vec<usize> = edges.iter().map(|e| e.2).collect();
        let c = case(a.clone(), table.clone(), p.clone());
        check(&c, |t, a, tb| t.edge_product_sum(5, a, tb, src.clone(), rel.clone(), dst.clone()))?;
        check(&c, |t, a, _| {
            let g = t.gather_rows(a, src.clone())?;
            t.scatter_add_rows(5, dst.clone(), g)
        })?;
    }

    #[test]
    fn fused_edges_match_unfused(
        a in matrix(4, 3, -1.0, 1.0),
        table in matrix(3, 3, -1.0, 1.0),
        edges in prop::collection::vec((0usize..4, 0usize..3, 0usize..5), 0..12),
    ) {
        let store = ParamStore::new();
        let mut t = Tape::new(&store);
        let (x, tb) = (t.constant(a), t.constant(table));
        let src: Vec<usize> = edges.iter().map(|e| e.0).collect();
        let rel: Vec<usize> = edges.iter().map(|e| e.1).collect();
        let dst: Vec<usize> = edges.iter().map(|e| e.2).collect();
        let fused = t.edge_product_sum(5, x, tb, src.clone(), rel.clone(), dst.clone()).unwrap();
        let xs = t.gather_rows(x, src).unwrap();
        let ts = t.gather_rows(tb, rel).unwrap();
        let m = t.mul(xs, ts).unwrap();
        let unfused = t.scatter_add_rows(5, dst, m).unwrap();
        prop_assert!(t.value(fused).max_abs_diff(t.value(unfused)) < 1e-14);
    }

    #[test]
    fn scatter_of_gather_with_unique_index_is_identity(a in matrix(5, 2, -1.0, 1.0), seed in any::<u64>()) {
        let mut perm: Vec<usize> = (0..5).collect();
        let mut s = seed;
        for i in (1..5).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let store = ParamStore::new();
        let mut t = Tape::new(&store);
        let x = t.constant(a.clone());
        let g = t.gather_rows(x, perm.clone()).unwrap();
        let back = t.scatter_add_rows(5, perm, g).unwrap();
        prop_assert_eq!(t.value(back), &a);
    }

    #[test]
    fn normalized_rows_have_unit_norm(a in off_zero(6, 4)) {
        let store = ParamStore::new();
        let mut t = Tape::new(&store);
        let x = t.constant(a);
        let y = t.row_l2_normalize(x, 1e-12);
        for r in 0..6 {
            let n: f64 = t.value(y).row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn backward_is_linear_in_the_loss(a in matrix(3, 3, -1.0, 1.0), k in -3.0f64..3.0) {
        let mut store = ParamStore::new();
        let w = store.register("w", a).unwrap();
        let grads = |scale: f64| {
            let mut t = Tape::new(&store);
            let x = t.param(w);
            let s = t.sigmoid(x);
            let m = t.matmul(s, x).unwrap();
            let l = t.sum(m);
            let l = t.scale(l, scale);
            t.backward(l).unwrap().get(w).unwrap().clone()
        };
        let (g1, gk) = (grads(1.0), grads(k));
        let expected = g1.map(|v| v * k);
        prop_assert!(gk.max_abs_diff(&expected) < 1e-12);
    }
}
