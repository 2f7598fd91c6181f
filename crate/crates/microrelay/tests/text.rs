use microrelay::text::{parse_module_bare, ParseError};
use microrelay::{parse_module, print_module, PRELUDE_SOURCE};
use microrelay_core::module::ModuleError;
use microrelay_core::{alpha_equal_fn, infer, IrError, Module};

fn same_user_globals(a: &Module, b: &Module) -> bool {
    let names_a: Vec<_> = a.user_globals().map(|(n, _)| n.clone()).collect();
    let names_b: Vec<_> = b.user_globals().map(|(n, _)| n.clone()).collect();
    names_a == names_b && a.user_globals().all(|(n, f)| alpha_equal_fn(f, &b.globals[n]))
}

fn round_trip(src: &str) -> Module {
    let m = parse_module(src).unwrap_or_else(|e| panic!("{e}\n{src}"));
    let printed = print_module(&m);
    let again = parse_module(&printed).unwrap_or_else(|e| panic!("{e}\n{printed}"));
    assert!(same_user_globals(&m, &again), "round trip changed the program:\n{printed}");
    assert_eq!(print_module(&again), printed);
    m
}

#[test]
fn prelude_parses_and_typechecks() {
    let m = parse_module_bare(PRELUDE_SOURCE, "<prelude>").unwrap();
    assert!(m.adts.contains_key("List"));
    infer(&m).unwrap();
    let printed = print_module(&m);
    assert!(printed.contains("def @foldl"));
}

#[test]
fn basic_round_trip() {
    round_trip("def @main(%x: Tensor[(2, 3), float32], %y: float32) -> Tensor[(2, 3), float32] { add(%x, %y) }");
    round_trip(
        "def @f(%x) {
           let %t = (%x, const 1, True);
           %u = %t.0;
           let %r = ref(%u);
           %r := multiply(!%r, const 2.5);
           if (less(%x, 0)) { !%r } else { negative(%u) }
         }",
    );
    round_trip(
        "def @g(%l: List[int32]) -> int32 {
           match (%l) { Nil => 0, Cons(%h, _) => %h, }
         }
         def @h() { @g(Cons(1, Cons(2, Nil()))) }",
    );
    round_trip("def @c() { const([[1.5, -2.0], [nan, -inf]], (2, 2), float32) }");
    round_trip("def @s(%x: Tensor[(n, ?), float32]) { sum(%x, axis=(0, 1), keepdims=False) }");
}

#[test]
fn large_constants_use_metadata() {
    let data: Vec<String> = (0..20).map(|i| i.to_string()).collect();
    let src = format!("def @main() {{ const([{}], (20,), int32) }}", data.join(", "));
    let m = round_trip(&src);
    let printed = print_module(&m);
    assert!(printed.contains("meta[Constant][0]"));
    assert!(printed.contains("metadata {"));
}

#[test]
fn recursive_local_function() {
    round_trip(
        "def @main(%n: int32) -> int32 {
           let %loop = fn (%i: int32) -> int32 { if (greater(%i, 0)) { %loop(subtract(%i, 1)) } else { %i } };
           %loop(%n)
         }",
    );
}

#[test]
fn errors_carry_spans() {
    match parse_module("def @main() {\n  add(1,\n}") {
        Err(ParseError::Syntax { span, .. }) => assert_eq!(span.start_line, 3),
        other => panic!("{other:?}"),
    }
    assert!(matches!(parse_module("def @main() { %y }"), Err(ParseError::Ir(IrError::UnboundVariable { .. }))));
    assert!(matches!(parse_module("def @main() { meta[Constant][3] }"), Err(ParseError::MetaIndexOutOfRange { index: 3, .. })));
    assert!(matches!(
        parse_module("def @map(%x) { %x }"),
        Err(ParseError::Module(ModuleError::NameCollision(n))) if n == "map"
    ));
}
