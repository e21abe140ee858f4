use fuselab_core::tensor::OpKind;
use fuselab_core::verify::{gradient_suite, run, Suite, Verdict, VERDICT_SCHEMA};
use serde_json::Value;

#[test]
fn fresh_build_passes_every_suite() {
    let v = run(&Suite::ALL, 0, None);
    for s in &v.suites {
        let bad: Vec<_> = s.failures().collect();
        assert!(s.passed, "{}: {bad:?}", s.name);
        assert!(s.suspects.is_empty());
    }
    assert!(v.passed);
    assert_eq!(v.schema, VERDICT_SCHEMA);
}

#[test]
fn injected_fault_is_named() {
    for op in OpKind::ALL.into_iter().filter(|&k| k != OpKind::Leaf) {
        let s = gradient_suite(3, Some(op));
        assert!(!s.passed, "{op} fault went unnoticed");
        assert_eq!(s.suspects, vec![op], "{op}: {:?}", s.failures().map(|c| &c.name).collect::<Vec<_>>());
    }
}

#[test]
fn fault_in_a_network_op_also_fails_end_to_end() {
    let s = gradient_suite(3, Some(OpKind::SoftmaxRows));
    let e2e = s.cases.iter().find(|c| c.name == "end_to_end").unwrap();
    assert!(!e2e.passed, "{e2e:?}");
}

fn keys(v: &Value, prefix: &str, out: &mut Vec<String>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                out.push(format!("{prefix}.{k}"));
                keys(x, &format!("{prefix}.{k}"), out);
            }
        }
        Value::Array(a) => {
            if let Some(x) = a.first() {
                keys(x, &format!("{prefix}[]"), out);
            }
        }
        _ => {}
    }
}

#[test]
fn verdict_schema_is_stable_and_round_trips() {
    let suites = [Suite::Attention, Suite::Metrics, Suite::Parameters];
    let a = run(&suites, 11, None);
    let b = run(&suites, 11, None);
    assert_eq!(a, b);
    let json = serde_json::to_value(&a).unwrap();
    let (mut ka, mut kb) = (Vec::new(), Vec::new());
    keys(&json, "", &mut ka);
    keys(&serde_json::to_value(run(&suites, 12, None)).unwrap(), "", &mut kb);
    assert_eq!(ka, kb);
    for k in [".schema", ".passed", ".seed", ".fault", ".suites", ".suites[].cases[].seed"] {
        assert!(ka.iter().any(|x| x == k), "missing {k}");
    }
    let back: Verdict = serde_json::from_value(json).unwrap();
    assert_eq!(back, a);

    let faulty = serde_json::to_value(gradient_suite(0, Some(OpKind::Concat))).unwrap();
    assert_eq!(faulty["suspects"], serde_json::json!(["concat"]));
}

#[test]
fn failing_cases_carry_their_reproduction_seed() {
    let s = gradient_suite(42, Some(OpKind::Conv2d));
    let failing: Vec<_> = s.failures().collect();
    assert!(failing.iter().all(|c| c.seed == 42 && c.measured > c.tolerance));
    assert!(failing.iter().any(|c| c.name.starts_with("conv2d[")));
}
