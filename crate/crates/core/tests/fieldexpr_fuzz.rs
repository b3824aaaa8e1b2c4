use pmreg::fieldexpr::{BinOp, FieldExpr, Func};
use proptest::prelude::*;

fn leaf() -> impl Strategy<Value = FieldExpr> {
    prop_oneof![
        (-1e3f64..1e3).prop_map(FieldExpr::Num),
        (1e-8f64..1e-3).prop_map(FieldExpr::Num),
        (0usize..3).prop_map(FieldExpr::Var),
        Just(FieldExpr::Time),
    ]
}

fn tree() -> impl Strategy<Value = FieldExpr> {
    leaf().prop_recursive(6, 48, 2, |inner| {
        let op = prop_oneof![Just(BinOp::Add), Just(BinOp::Sub), Just(BinOp::Mul), Just(BinOp::Div), Just(BinOp::Pow)];
        let func = prop_oneof![Just(Func::Sin), Just(Func::Cos), Just(Func::Exp), Just(Func::Sqrt), Just(Func::Abs)];
        prop_oneof![
            inner.clone().prop_map(|e| FieldExpr::Neg(Box::new(e))),
            (op, inner.clone(), inner.clone()).prop_map(|(o, a, b)| FieldExpr::Bin(o, Box::new(a), Box::new(b))),
            (func, inner).prop_map(|(f, e)| FieldExpr::Call(f, Box::new(e))),
        ]
    })
}

fn same(a: &Result<f64, pmreg::fieldexpr::EvalError>, b: &Result<f64, pmreg::fieldexpr::EvalError>) -> bool {
    match (a, b) {
        (Ok(x), Ok(y)) => x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()),
        (Err(_), Err(_)) => true,
        _ => false,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn random_text_never_panics(s in "[-+*/^()., 0-9a-z]{0,40}") {
        if let Ok(e) = FieldExpr::parse(&s) {
            let _ = e.eval(&[0.3, -0.2, 0.1], 0.5);
        }
    }

    #[test]
    fn token_soup_never_panics(toks in prop::collection::vec(
        prop_oneof![
            Just("x1"), Just("x2"), Just("t"), Just("+"), Just("-"), Just("*"), Just("/"), Just("^"),
            Just("("), Just(")"), Just("sin"), Just("sqrt"), Just("2.5"), Just("1e-3"), Just("3e"), Just("."),
        ],
        0..30,
    )) {
        let s = toks.join(" ");
        if let Ok(e) = FieldExpr::parse(&s) {
            let _ = e.eval(&[0.3, -0.2], 0.5);
        }
    }

    #[test]
    fn print_parse_round_trip(e in tree(), x in prop::array::uniform3(-2.0f64..2.0), t in -1.0f64..1.0) {
        let text = e.to_string();
        let back = FieldExpr::parse(&text).map_err(|err| TestCaseError::fail(format!("{text}: {err}")))?;
        prop_assert!(same(&e.eval(&x, t), &back.eval(&x, t)), "{}", text);
        // printing is stable after one round
        prop_assert_eq!(back.to_string(), text);
    }
}
