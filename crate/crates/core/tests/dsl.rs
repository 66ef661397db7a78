use std::path::PathBuf;

use ispace_core::dsl::{self, parse, pretty_print, validate, DiagCode};
use ispace_core::ir::*;
use proptest::prelude::*;

const LISTINGS: &[&str] = &[
    "listing01",
    "listing02",
    "listing03",
    "listing04",
    "listing05",
    "listing06",
    "listing07",
    "listing09",
    "listing10",
    "listing11",
    "listing13",
];

fn fixture(name: &str) -> String {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(format!("{name}.space"));
    std::fs::read_to_string(path).unwrap()
}

fn codes(src: &str) -> Vec<DiagCode> {
    match parse(src) {
        Ok(def) => validate(&def).into_iter().map(|d| d.code).collect(),
        Err(diags) => diags.into_iter().map(|d| d.code).collect(),
    }
}

#[test]
fn listings_parse_without_diagnostics() {
    for name in LISTINGS {
        if let Err(diags) = parse(&fixture(name)) {
            panic!("{name}: {diags:?}");
        }
    }
}

#[test]
fn listings_round_trip() {
    for name in LISTINGS {
        let def = parse(&fixture(name)).unwrap();
        let printed = pretty_print(&def);
        assert_eq!(parse(&printed).unwrap(), def, "{name}:\n{printed}");
        assert_eq!(pretty_print(&parse(&printed).unwrap()), printed);
    }
}

#[test]
fn golden_ir_of_listings_1_to_6() {
    let src: String = ["listing01", "listing02", "listing03", "listing04", "listing05", "listing06"]
        .iter()
        .map(|n| fixture(n) + "\n")
        .collect();
    let def = parse(&src).unwrap();
    let json = serde_json::to_string_pretty(&def).unwrap() + "\n";
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/listings_1_6.json");
    if std::env::var_os("UPDATE_GOLDEN").is_some() || !path.exists() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &json).unwrap();
    }
    assert_eq!(std::fs::read_to_string(&path).unwrap(), json);
}

#[test]
fn cache_choice_of_listing_2() {
    let def = parse(&fixture("listing02")).unwrap();
    let cache = def.choice("cache").unwrap();
    assert_eq!(cache.params.len(), 1);
    assert_eq!(cache.params[0].set.name, "MemAccesses");
    assert_eq!(cache.enum_values().unwrap(), ["L1", "L2", "READ_ONLY", "NONE"]);
}

#[test]
fn empty_source() {
    let def = parse("").unwrap();
    assert!(def.items.is_empty());
    assert!(validate(&def).is_empty());
    assert_eq!(pretty_print(&def), "");
    let def = parse("// only a comment\n\n").unwrap();
    assert!(def.items.is_empty());
}

#[test]
fn transitivity_over_order_validates() {
    let src = format!("set Instructions: ...\n{}\n{}", fixture("listing03"), fixture("listing04"));
    assert_eq!(codes(&src), []);
}

#[test]
fn gpu_listings_validate_together() {
    let src = format!(
        "{}\n{}\n{}\n{}\nset MemRegions: ...\nset MemInsts subsetof Insts: ...\n\
         choice enum mem_space($mem in MemRegions):\n  value GLOBAL:\n  value SHARED:\nend\n",
        fixture("listing07"),
        fixture("listing09"),
        fixture("listing10"),
        fixture("listing02").replace("MemAccesses", "MemInsts")
    );
    assert_eq!(codes(&src), []);
}

#[test]
fn diagnostic_codes() {
    let base = "set S: ...\nchoice enum c($a in S):\n  value X:\n  value Y:\nend\n";
    assert_eq!(codes(&format!("{base}require forall $a in S: foo($a) is X\n")), [DiagCode::UnknownChoice]);
    assert_eq!(codes("set A subsetof B: ...\nset B subsetof A: ...\n"), [DiagCode::SetCycle]);
    assert_eq!(codes(&format!("{base}set S: ...\n")), [DiagCode::DuplicateDecl]);
    assert_eq!(codes(&format!("{base}require forall $a in S: c($a) is Z\n")), [DiagCode::UnknownValue]);
    assert_eq!(codes(&format!("{base}require forall $a in S: c($a, $a) is X\n")), [DiagCode::ArityMismatch]);
    assert_eq!(codes(&format!("{base}require forall $a in S: c($b) is X\n")), [DiagCode::UnboundVariable]);
    assert_eq!(codes(&format!("{base}require forall $a in T: c($a) is X\n")), [DiagCode::UnknownSet]);
    assert_eq!(
        codes("set S: ...\nchoice enum o($a in S, $b in S):\n  value X:\n  value Y:\n  value Z:\n  antisymmetric:\n    X -> Y\n    Y -> Z\nend\n"),
        [DiagCode::BadAntisymmetry]
    );
    assert_eq!(
        codes("set S: ...\nchoice counter n():\n  forall $a in S:\n    sum 1\nend\nrequire n() < 3 || n() > 5\n"),
        [DiagCode::BadCounter]
    );
}

#[test]
fn syntax_errors_are_located() {
    let err = parse("set S: ...\nchoice enum c($a in S):\n  value X\nend\n").unwrap_err();
    // The missing colon is reported at the next token.
    assert_eq!(err[0].code, DiagCode::Syntax);
    assert_eq!((err[0].line, err[0].col), (4, 1));
    let err = parse("require forall $a in S: c($a) is\n").unwrap_err();
    assert_eq!(err[0].code, DiagCode::Syntax);
    assert_eq!(err[0].line, 2);
    // Recovery reports independent errors in later declarations.
    let err = parse("choice enum (:\nend\nset S: ...\nset S2 subsetof\n").unwrap_err();
    assert!(err.len() >= 2, "{err:?}");
}

#[test]
fn load_rejects_invalid_definitions() {
    assert!(dsl::load("set S: ...\nset S: ...\n").is_err());
    assert!(dsl::load("set S: ...\n").is_ok());
}

// Random IR generation for the round-trip law.

fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,6}".prop_map(|s| format!("n_{s}"))
}

fn upper() -> impl Strategy<Value = String> {
    "[A-Z][A-Z0-9_]{0,5}".prop_map(|s| format!("V{s}"))
}

fn snippet() -> impl Strategy<Value = String> {
    "[a-z][a-z_.()$]{0,10}"
}

fn set_ref() -> impl Strategy<Value = SetRef> {
    (upper(), prop::collection::vec(ident(), 0..2)).prop_map(|(name, args)| SetRef { name, args })
}

fn param() -> impl Strategy<Value = Param> {
    (ident(), set_ref()).prop_map(|(var, set)| Param { var, set })
}

fn call() -> impl Strategy<Value = ChoiceCall> {
    (ident(), prop::collection::vec(ident(), 0..3)).prop_map(|(name, args)| ChoiceCall { name, args })
}

fn operand() -> impl Strategy<Value = Operand> {
    prop_oneof![
        call().prop_map(Operand::Choice),
        snippet().prop_map(Operand::Opaque),
        (0i64..5000).prop_map(Operand::Int)
    ]
}

fn cmp_op() -> impl Strategy<Value = CmpOp> {
    prop_oneof![Just(CmpOp::Eq), Just(CmpOp::Ne), Just(CmpOp::Lt), Just(CmpOp::Le), Just(CmpOp::Gt), Just(CmpOp::Ge)]
}

fn atom() -> impl Strategy<Value = Atom> {
    prop_oneof![
        snippet().prop_map(Atom::Const),
        (call(), any::<bool>(), prop::collection::vec(upper(), 1..3)).prop_map(|(call, negated, values)| Atom::Is {
            call,
            negated,
            values
        }),
        (operand(), cmp_op(), operand()).prop_map(|(lhs, op, rhs)| Atom::Cmp { lhs, op, rhs }),
        call().prop_map(Atom::Bare),
    ]
}

fn item() -> impl Strategy<Value = Item> {
    let set = (
        upper(),
        prop::collection::vec(param(), 0..2),
        prop::option::of(upper()),
        prop::collection::vec(
            prop_oneof![
                Just(SetBodyItem::Elided),
                (ident(), prop::option::of(snippet()))
                    .prop_map(|(key, v)| SetBodyItem::Key { key, value: v.map_or(KeyValue::Elided, KeyValue::Quoted) }),
            ],
            0..3,
        ),
    )
        .prop_map(|(name, params, superset, body)| Item::Set(SetDecl { name, params, superset, body }));
    let kind = prop_oneof![
        (prop::collection::vec(upper(), 1..4), prop::collection::vec((upper(), upper()), 0..2))
            .prop_map(|(values, antisymmetric)| ChoiceKind::Enum { values, antisymmetric }),
        prop::option::of(snippet()).prop_map(|universe| ChoiceKind::Integer { universe }),
        (
            prop::collection::vec(param(), 0..2),
            prop_oneof![Just(CounterOp::Sum), Just(CounterOp::Product)],
            operand(),
            prop::option::of(atom()),
            any::<bool>()
        )
            .prop_map(|(foralls, op, term, guard, when_colon)| {
                let when_colon = when_colon && guard.is_some();
                ChoiceKind::Counter(CounterBody { foralls, op, term, guard, when_colon })
            }),
    ];
    let choice = (ident(), prop::collection::vec(param(), 0..3), kind, any::<bool>())
        .prop_map(|(name, params, kind, elided)| Item::Choice(ChoiceDecl { name, params, kind, elided }));
    let require = (prop::collection::vec(param(), 0..3), prop::collection::vec(atom(), 1..4))
        .prop_map(|(foralls, body)| Item::Require(ConstraintDecl { foralls, body }));
    let quotient = (
        (upper(), prop::collection::vec(param(), 0..2), ident(), set_ref(), any::<bool>()),
        (ident(), atom(), ident(), upper(), any::<bool>()),
    )
        .prop_map(|((name, params, var, set, with_in), (flag, membership, equiv_choice, equiv_value, elided))| {
            Item::Quotient(QuotientDecl {
                name,
                params,
                var,
                set,
                with_in,
                flag,
                membership,
                equiv_choice,
                equiv_value,
                elided,
            })
        });
    let trigger = (
        prop::collection::vec(param(), 0..2),
        prop::collection::vec(prop::collection::vec(atom(), 1..3), 1..3),
        snippet(),
    )
        .prop_map(|(foralls, condition, callback)| Item::Trigger(TriggerDecl { foralls, condition, callback }));
    prop_oneof![set, choice, require, quotient, trigger]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]
    #[test]
    fn random_ir_round_trips(items in prop::collection::vec(item(), 0..6)) {
        let def = SpaceDefinition { items };
        let printed = pretty_print(&def);
        let reparsed = parse(&printed).map_err(|d| TestCaseError::fail(format!("{d:?}\n{printed}")))?;
        prop_assert_eq!(reparsed, def, "{}", printed);
    }
}
