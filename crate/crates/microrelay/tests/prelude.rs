use microrelay::{load_prelude, parse_module};
use microrelay_core::module::ModuleError;
use microrelay_core::{infer, BaseType, Interpreter, Module, Tensor, Value};
use proptest::prelude::*;

fn run(src: &str) -> Value {
    let m = parse_module(src).unwrap_or_else(|e| panic!("{e}"));
    let typed = infer(&m).unwrap_or_else(|e| panic!("{e}"));
    let v = Interpreter::new(&typed).run("main", vec![]).unwrap();
    v
}

fn int_list(xs: &[i32]) -> String {
    xs.iter().rev().fold(String::from("Nil()"), |acc, x| format!("Cons({x}, {acc})"))
}

#[test]
fn foldl_add_sums() {
    let v = run(&format!("def @main() -> int32 {{ @foldl(add, 0, {}) }}", int_list(&[1, 2, 3])));
    assert!(v.bit_eq(&Value::tensor(Tensor::scalar_i32(6))));
}

#[test]
fn map_doubles() {
    let v = run(&format!(
        "def @main() {{ @map(fn (%x: int32) {{ multiply(%x, const 2) }}, {}) }}",
        int_list(&[1, 2])
    ));
    assert_eq!(v.to_string(), "Cons(2, Cons(4, Nil))");
}

#[test]
fn length_nth_sum_list() {
    assert_eq!(run(&format!("def @main() {{ @length({}) }}", int_list(&[5, 6, 7]))).to_string(), "3");
    assert_eq!(run(&format!("def @main() {{ @nth({}, 1) }}", int_list(&[5, 6, 7]))).to_string(), "Some(6)");
    assert_eq!(run(&format!("def @main() {{ @nth({}, 9) }}", int_list(&[5]))).to_string(), "None");
    let v = run("def @main() { @sum_list(Cons(1.5, Cons(2.25, Nil()))) }");
    assert!(v.bit_eq(&Value::tensor(Tensor::from_f64(vec![], BaseType::F32, vec![3.75]))));
}

#[test]
fn tree_reduction() {
    let v = run(
        "def @total(%t: Tree[int32]) -> int32 {
           match (%t) {
             Leaf => 0,
             Node(%l, %v, %r) => add(add(@total(%l), %v), @total(%r)),
           }
         }
         def @main() {
           @total(Node(Node(Leaf(), 1, Leaf()), 2, Node(Leaf(), 3, Leaf())))
         }",
    );
    assert_eq!(v.to_string(), "6");
}

#[test]
fn loading_is_idempotent_and_collisions_fail() {
    let mut m = Module::new();
    load_prelude(&mut m).unwrap();
    let before = m.globals.len();
    load_prelude(&mut m).unwrap();
    assert_eq!(m.globals.len(), before);
    assert!(matches!(parse_module("type List { Empty, }"), Err(microrelay::ParseError::Module(ModuleError::NameCollision(_)))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn folds_agree_on_add(xs in proptest::collection::vec(-1000i32..1000, 0..12)) {
        let l = int_list(&xs);
        // The annotation fixes the element type when the list is empty.
        let a = run(&format!("def @main() -> int32 {{ let %l: List[int32] = {l}; @foldl(add, 0, %l) }}"));
        let b = run(&format!("def @main() -> int32 {{ let %l: List[int32] = {l}; @foldr(add, 0, %l) }}"));
        prop_assert!(a.bit_eq(&b));
        let expected: i32 = xs.iter().sum();
        prop_assert!(a.bit_eq(&Value::tensor(Tensor::scalar_i32(expected))));
    }
}
