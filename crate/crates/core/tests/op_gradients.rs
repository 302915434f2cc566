//! Every differentiable tape op against central finite differences, 10 seeds each.

use gmem_core::numerics::{finite_difference_grad, grads_match, normal_tensor, ParamStore, Parameter, Tape, Tensor, Var};
use gmem_core::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 10;

fn inputs(seed: u64, shapes: &[&[usize]]) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for (i, shape) in shapes.iter().enumerate() {
        // keep away from the kinks of relu and abs
        let t = normal_tensor(&mut rng, shape, 1.0).map(|x| if x.abs() < 0.05 { x + 0.3 } else { x });
        store.push(Parameter::new(format!("x{i}"), t, true));
    }
    store
}

/// `sum(op(x) ⊙ R)` for a fixed random `R`, so every output entry matters.
fn loss<F>(tape: &mut Tape, vars: &[Var], seed: u64, op: &F) -> Result<Var>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let out = op(tape, vars)?;
    let shape = tape.value(out).shape().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let r = tape.constant(normal_tensor(&mut rng, &shape, 1.0));
    let weighted = tape.mul(out, r)?;
    Ok(tape.sum(weighted))
}

fn check<F>(name: &str, shapes: &[&[usize]], op: F)
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    for seed in 0..SEEDS {
        let mut store = inputs(seed, shapes);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let l = loss(&mut tape, bound.vars(), seed, &op).unwrap();
        let grads = tape.backward(l).unwrap();
        store.zero_grads();
        store.accumulate_grads(&bound, &grads, 1.0).unwrap();
        let analytic: Vec<Tensor> = store.iter().map(|p| p.grad.clone()).collect();

        let numeric = finite_difference_grad(
            |s| {
                let mut tape = Tape::new();
                let b = s.bind(&mut tape);
                let l = loss(&mut tape, b.vars(), seed, &op)?;
                Ok(tape.value(l).item())
            },
            &mut store,
            1e-5,
        )
        .unwrap();
        for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            let n = n.as_ref().unwrap();
            assert!(grads_match(a, n, 1e-4, 1e-7), "{name} seed {seed} input {i}: {a:?} vs {n:?}");
        }
    }
}

#[test]
fn matmul_family() {
    check("matmul", &[&[3, 4], &[4, 2]], |t, v| t.matmul(v[0], v[1]));
    check("matmul_t", &[&[3, 4], &[5, 4]], |t, v| t.matmul_t(v[0], v[1]));
    check("affine", &[&[3, 4], &[4, 2], &[1, 2]], |t, v| t.affine(v[0], v[1], v[2]));
    check("transpose", &[&[3, 2]], |t, v| t.transpose(v[0]));
}

#[test]
fn elementwise_binary() {
    check("add", &[&[2, 3], &[2, 3]], |t, v| t.add(v[0], v[1]));
    check("sub", &[&[2, 3], &[2, 3]], |t, v| t.sub(v[0], v[1]));
    check("mul", &[&[2, 3], &[2, 3]], |t, v| t.mul(v[0], v[1]));
    check("add_row", &[&[3, 4], &[1, 4]], |t, v| t.add_row(v[0], v[1]));
    check("mul_row", &[&[3, 4], &[1, 4]], |t, v| t.mul_row(v[0], v[1]));
}

#[test]
fn elementwise_unary() {
    check("scale", &[&[2, 3]], |t, v| Ok(t.scale(v[0], -1.7)));
    check("one_minus", &[&[2, 3]], |t, v| Ok(t.one_minus(v[0])));
    check("sigmoid", &[&[2, 3]], |t, v| Ok(t.sigmoid(v[0])));
    check("tanh", &[&[2, 3]], |t, v| Ok(t.tanh(v[0])));
    check("relu", &[&[2, 3]], |t, v| Ok(t.relu(v[0])));
    check("abs", &[&[2, 3]], |t, v| Ok(t.abs(v[0])));
}

#[test]
fn normalizations() {
    check("softmax_rows", &[&[3, 5]], |t, v| t.softmax_rows(v[0]));
    check("causal_softmax_rows", &[&[4, 4]], |t, v| t.causal_softmax_rows(v[0]));
    check("log_softmax_rows", &[&[3, 5]], |t, v| t.log_softmax_rows(v[0]));
    check("layernorm_rows", &[&[3, 5]], |t, v| t.layernorm_rows(v[0]));
}

#[test]
fn structural() {
    check("concat_last_dim", &[&[3, 2], &[3, 4]], |t, v| t.concat_last_dim(v[0], v[1]));
    check("slice_cols", &[&[3, 6]], |t, v| t.slice_cols(v[0], 2, 3));
    check("gather_rows", &[&[5, 3]], |t, v| t.gather_rows(v[0], &[4, 0, 4, 2]));
}

#[test]
fn reductions() {
    check("sum", &[&[3, 4]], |t, v| Ok(t.sum(v[0])));
    check("mean", &[&[3, 4]], |t, v| Ok(t.mean(v[0])));
    check("mean_rows", &[&[3, 4]], |t, v| t.mean_rows(v[0]));
    check("cross_entropy", &[&[4, 6]], |t, v| {
        t.cross_entropy(v[0], &[1, 5, 0, 3], &[true, false, true, true])
    });
}

#[test]
fn composite_attention_block() {
    check("attention", &[&[4, 3], &[3, 3], &[3, 3], &[3, 3]], |t, v| {
        let q = t.matmul(v[0], v[1])?;
        let k = t.matmul(v[0], v[2])?;
        let val = t.matmul(v[0], v[3])?;
        let s = t.matmul_t(q, k)?;
        let s = t.scale(s, 1.0 / 3f64.sqrt());
        let a = t.causal_softmax_rows(s)?;
        let o = t.matmul(a, val)?;
        t.layernorm_rows(o)
    });
}
