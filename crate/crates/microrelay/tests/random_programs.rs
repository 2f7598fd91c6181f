mod common;

use common::gen::{random_program, tensor_type};
use common::same_user_globals;
use microrelay::{parse_module, print_module};
use microrelay_core::{infer_full, Type};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn generated_programs_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let p = random_program(&mut rng, 8, true);
        let m = parse_module(&p.source).unwrap_or_else(|e| panic!("{e}\n{}", p.source));
        let printed = print_module(&m);
        let again = parse_module(&printed).unwrap_or_else(|e| panic!("{e}\n{printed}"));
        assert!(same_user_globals(&m, &again), "{}\n{printed}", p.source);
    }
}

#[test]
fn generated_shapes_match_inference() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let p = random_program(&mut rng, 6, false);
        let m = parse_module(&p.source).unwrap_or_else(|e| panic!("{e}\n{}", p.source));
        let inferred = infer_full(&m).unwrap_or_else(|e| panic!("{e}\n{}", p.source));
        let expected = if p.tuple_result {
            format!("({})", p.result.iter().map(|s| tensor_type(s)).collect::<Vec<_>>().join(", "))
        } else {
            tensor_type(&p.result[0])
        };
        let got = Type::Func(inferred.signatures["main"].clone());
        let Type::Func(ft) = &got else { unreachable!() };
        assert_eq!(ft.ret.to_string(), expected, "\n{}", p.source);
        assert!(!inferred.trace.revisits_solved());
    }
}
