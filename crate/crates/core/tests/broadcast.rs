use microrelay_core::expr::Param;
use microrelay_core::ty::const_shape;
use microrelay_core::{
    infer, infer_full, Attrs, BaseType, Expr, Function, Interpreter, Module, Tensor, Type, TypeError, Value, Var,
};
use proptest::prelude::*;

fn oracle_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let n = a.len().max(b.len());
    let pad = |s: &[usize]| -> Vec<usize> { std::iter::repeat_n(1, n - s.len()).chain(s.iter().copied()).collect() };
    let (a, b) = (pad(a), pad(b));
    a.iter()
        .zip(&b)
        .map(|(&x, &y)| match (x, y) {
            _ if x == y => Some(x),
            (1, _) => Some(y),
            (_, 1) => Some(x),
            _ => None,
        })
        .collect()
}

/// Row-major element of a broadcast operand at output index `idx`.
fn element(data: &[f64], shape: &[usize], out_shape: &[usize], mut idx: usize) -> f64 {
    let mut coords = vec![0; out_shape.len()];
    for d in (0..out_shape.len()).rev() {
        coords[d] = idx % out_shape[d];
        idx /= out_shape[d];
    }
    let off = out_shape.len() - shape.len();
    let mut flat = 0;
    for (d, &extent) in shape.iter().enumerate() {
        flat = flat * extent + if extent == 1 { 0 } else { coords[off + d] };
    }
    data[flat]
}

fn add_module(a: &[usize], b: &[usize]) -> Module {
    let (x, y) = (Var::fresh("x"), Var::fresh("y"));
    let body = Expr::call_op("add", vec![Expr::var(&x), Expr::var(&y)], Attrs::new());
    let params = vec![
        Param { var: x, annotation: Some(Type::tensor(const_shape(a), BaseType::F32)) },
        Param { var: y, annotation: Some(Type::tensor(const_shape(b), BaseType::F32)) },
    ];
    let mut m = Module::new();
    m.add_global("main", Function::new(params, body)).unwrap();
    m
}

fn shape() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..=3, 0..=3)
}

proptest! {
    #[test]
    fn add_shape_and_values_match_numpy(a in shape(), b in shape(), seed in any::<u64>()) {
        let m = add_module(&a, &b);
        match oracle_shape(&a, &b) {
            None => {
                let relation_failed = matches!(infer(&m), Err(TypeError::RelationFailed { .. }));
                prop_assert!(relation_failed);
            }
            Some(out) => {
                let inferred = infer_full(&m).unwrap();
                prop_assert_eq!(&inferred.signatures["main"].ret, &Type::tensor(const_shape(&out), BaseType::F32));
                let gen = |n: usize, k: u64| -> Vec<f64> {
                    (0..n).map(|i| ((seed.wrapping_mul(31).wrapping_add(k * 7 + i as u64) % 17) as f64) - 8.0).collect()
                };
                let (da, db) = (gen(a.iter().product(), 1), gen(b.iter().product(), 2));
                let args = vec![
                    Value::tensor(Tensor::from_f64(a.clone(), BaseType::F32, da.clone())),
                    Value::tensor(Tensor::from_f64(b.clone(), BaseType::F32, db.clone())),
                ];
                let v = Interpreter::new(&inferred.module).run("main", args).unwrap();
                let n: usize = out.iter().product();
                let want: Vec<f64> = (0..n).map(|i| element(&da, &a, &out, i) + element(&db, &b, &out, i)).collect();
                let expected = Value::tensor(Tensor::from_f64(out.clone(), BaseType::F32, want));
                prop_assert!(v.bit_eq(&expected));
            }
        }
    }
}
