use std::collections::BTreeMap;

use fdf::check::check_source;
use fdf::engine::{run, BoxStatus, RunConfig};
use fdf::library::Library;
use fdf::mlkit::DataBatch;
use proptest::prelude::*;

/// Random acyclic pipeline over width-2 sources: element-wise boxes, linear
/// regressions and their applications, every output sunk.
fn pipeline_text(ops: &[(u8, usize, usize)]) -> String {
    let mut text = String::from("source data s0\nsource data s1\nsource data s2\n");
    let mut data = vec!["s0".to_string(), "s1".to_string(), "s2".to_string()];
    let mut funcs: Vec<String> = Vec::new();
    for (i, (op, a, b)) in ops.iter().enumerate() {
        let (x, y) = (data[a % data.len()].clone(), data[b % data.len()].clone());
        let body = match op % 5 {
            0 => format!("processor {{\n  predef = \"identity\"\n  in data {x}\n  out data o\n}}"),
            1 => format!("processor {{\n  predef = \"add\"\n  in data {x}, {y}\n  out data o\n}}"),
            2 => format!("processor {{\n  predef = \"sub\"\n  in data {x}, {y}\n  out data o\n}}"),
            3 => {
                format!("trainer {{\n  k = 1\n  predef = \"linreg(ridge=0.01)\"\n  in data {x}, {y}\n  out func f\n}}")
            }
            _ if !funcs.is_empty() => {
                let f = &funcs[a % funcs.len()];
                format!("processor {{\n  func = {f}\n  in data {y}\n  out data o\n}}")
            }
            _ => format!("processor {{\n  predef = \"identity\"\n  in data {y}\n  out data o\n}}"),
        };
        text.push_str(&format!("box b{i} : {body}\n"));
        if body.contains("out func") {
            funcs.push(format!("b{i}.f"));
            text.push_str(&format!("export func b{i}.f\n"));
        } else {
            data.push(format!("b{i}.o"));
            text.push_str(&format!("sink data b{i}.o\n"));
        }
    }
    text
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn results_do_not_depend_on_parallelism(
        ops in prop::collection::vec((0u8..5, 0usize..20, 0usize..20), 1..10),
        seed in 0u64..1000,
    ) {
        let text = pipeline_text(&ops);
        let lib = Library::builtin();
        let report = check_source(&text, &lib);
        let (p, _, env) = report.checked().expect("generated pipelines check");
        let sources: BTreeMap<_, _> = p.sources().iter().enumerate().map(|(k, s)| {
            let v = (0..24).map(|i| ((i * (k + 2)) as f64 * 0.37 + seed as f64).sin()).collect();
            (*s, DataBatch::new(12, 2, v).unwrap())
        }).collect();
        let one = run(p, env, &lib, &sources, RunConfig { seed, jobs: 1 }).unwrap();
        let many = run(p, env, &lib, &sources, RunConfig { seed, jobs: 4 }).unwrap();
        prop_assert!(one.succeeded(), "{:?}", one.failures);
        prop_assert_eq!(&one.sinks, &many.sinks);
        prop_assert_eq!(&one.exports, &many.exports);
        prop_assert!(one.status.iter().all(|s| *s == BoxStatus::Done));
        prop_assert!(one.sinks.values().all(|b| b.n() == 12));
        prop_assert_eq!(one.log.len(), ops.len());
    }
}
