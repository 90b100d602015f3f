use std::path::Path;
use std::process::{Command, Output};

use fdf::casestudies::MINIMAL;

fn fdf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdf")).args(args).env_remove("FDF_LIBRARY_MANIFEST").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const CYCLE: &str = "box a : processor {\n  predef = \"identity\"\n  in data b.y\n  out data y\n}\n\
box b : processor {\n  predef = \"identity\"\n  in data a.y\n  out data y\n}\n";

const SUB: &str = "source data a \"V\"\nsource data b \"φ\"\n\
box d : processor {\n  predef = \"sub\"\n  in data a, b\n  out data y\n}\nsink data d.y\n";

#[test]
fn check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = fdf(&["check", &write(dir.path(), "m.fdf", MINIMAL.text)]);
    assert_eq!((ok.status.code(), stdout(&ok).as_str()), (Some(0), ""));

    let cyc = fdf(&["check", &write(dir.path(), "c.fdf", CYCLE)]);
    assert_eq!(cyc.status.code(), Some(1));
    assert!(stdout(&cyc).contains("E-CYCLE") && stdout(&cyc).contains(" -> "), "{}", stdout(&cyc));

    let warn = write(dir.path(), "w.fdf", SUB);
    let w = fdf(&["check", &warn]);
    assert_eq!(w.status.code(), Some(0));
    assert!(stdout(&w).starts_with("WARNING W-INCONSISTENT-INPUT"), "{}", stdout(&w));
    assert_eq!(fdf(&["check", "--strict", &warn]).status.code(), Some(1));

    let bad = fdf(&["check", &write(dir.path(), "b.fdf", "box x : widget {\n}\n")]);
    assert_eq!(bad.status.code(), Some(2));
    assert_eq!(fdf(&["check", "/nonexistent/file.fdf"]).status.code(), Some(2));
}

#[test]
fn graph_emits_dot() {
    let dir = tempfile::tempdir().unwrap();
    let file = write(dir.path(), "m.fdf", MINIMAL.text);
    let o = fdf(&["graph", &file, "--dot"]);
    assert_eq!(o.status.code(), Some(0));
    let dot = stdout(&o);
    assert!(dot.starts_with("digraph \"minimal\" {"));
    assert_eq!(dot.matches("shape=").count(), 5);
    assert_eq!(dot.lines().filter(|l| l.contains("\" -> \"")).count(), 8);
    let ports = stdout(&fdf(&["graph", &file, "--dot", "--ports"]));
    assert_eq!(ports.matches("shape=circle").count(), 14);
    assert_eq!(fdf(&["graph", &write(dir.path(), "b.fdf", "box")]).status.code(), Some(2));
}

fn minimal_data(dir: &Path) {
    let x: Vec<String> = (0..30)
        .map(|i| {
            let (a, b) = ((i as f64).sin(), (i as f64 * 0.5).cos());
            format!("{a},{b},{},{},{}", a + b, 2.0 * a - b, -b)
        })
        .collect();
    write(dir, "X.csv", &format!("c0,c1,c2,c3,c4\n{}\n", x.join("\n")));
    let y: Vec<String> = (0..30).map(|i| format!("{}", (i as f64 * 0.3).sin())).collect();
    write(dir, "Y.csv", &format!("c0\n{}\n", y.join("\n")));
}

#[test]
fn run_writes_exports_and_inspect_reads_them() {
    let dir = tempfile::tempdir().unwrap();
    minimal_data(dir.path());
    let file = write(dir.path(), "m.fdf", &MINIMAL.text.replace("mlp(50,50,opt=sgd)", "mlp(50,50,opt=sgd,epochs=3)"));
    let manifest = write(dir.path(), "data.manifest", MINIMAL.manifest);
    let out = dir.path().join("out");
    let o = fdf(&["run", &file, "--data", &manifest, "--out", out.to_str().unwrap(), "--seed", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let log: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(log.len(), 3);
    assert!(log.iter().all(|l| l.starts_with("DONE b")));
    for name in ["b1.encode", "b1.decode", "b3.predict"] {
        assert!(out.join(format!("{name}.fdfn")).exists(), "{name}");
    }

    let enc = fdf(&["inspect", out.join("b1.encode.fdfn").to_str().unwrap()]);
    assert_eq!(enc.status.code(), Some(0));
    let text = stdout(&enc);
    assert!(
        text.contains("kind: pca-encode")
            && text.contains("inputs: 5 (type 1)")
            && text.contains("outputs: 2 (type 6)"),
        "{text}"
    );
    let mlp = stdout(&fdf(&["inspect", out.join("b3.predict.fdfn").to_str().unwrap()]));
    assert!(mlp.contains("hidden layers: (50,50)"), "{mlp}");
    assert!(mlp.contains("provenance: pipeline minimal, box b3, seed 4"), "{mlp}");

    let path = out.join("b1.decode.fdfn");
    let corrupt = std::fs::read_to_string(&path).unwrap().replacen("\"kind\"", "\"kind\" ", 1);
    std::fs::write(&path, corrupt).unwrap();
    let bad = fdf(&["inspect", path.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stderr(&bad).contains("checksum"), "{}", stderr(&bad));
}

#[test]
fn run_failures() {
    let dir = tempfile::tempdir().unwrap();
    minimal_data(dir.path());
    let file = write(dir.path(), "m.fdf", MINIMAL.text);
    let out = dir.path().join("out");
    let partial = write(dir.path(), "partial.manifest", "source X = X.csv\n");
    let o = fdf(&["run", &file, "--data", &partial, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("E-MISSING-SOURCE") && stderr(&o).contains("`Y`"), "{}", stderr(&o));

    let cyc = write(dir.path(), "c.fdf", CYCLE);
    let o = fdf(&["run", &cyc, "--data", &partial, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("E-CYCLE"));

    let warn = write(dir.path(), "w.fdf", SUB);
    let m = write(dir.path(), "ab.manifest", "source a = X.csv\nsource b = X.csv\n");
    let strict = fdf(&["run", &warn, "--data", &m, "--out", out.to_str().unwrap(), "--strict"]);
    assert_eq!(strict.status.code(), Some(1));
    let lenient = fdf(&["run", &warn, "--data", &m, "--out", out.to_str().unwrap()]);
    assert_eq!(lenient.status.code(), Some(0), "{}", stderr(&lenient));
    assert!(out.join("d.y.csv").exists());
}

#[test]
fn extra_library_manifest_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let lib = write(
        dir.path(),
        "lib.manifest",
        "predef processor minus k=2 k'=1 partitions=[[1,2,3]] override=none factory=sub\n",
    );
    let file = write(dir.path(), "p.fdf", &SUB.replace("\"sub\"", "\"minus\""));
    let without = fdf(&["check", &file]);
    assert_eq!(without.status.code(), Some(1));
    assert!(stdout(&without).contains("E-UNKNOWN-PREDEF"));
    let with = Command::new(env!("CARGO_BIN_EXE_fdf"))
        .args(["check", &file])
        .env("FDF_LIBRARY_MANIFEST", &lib)
        .output()
        .unwrap();
    assert_eq!(with.status.code(), Some(0), "{}", stdout(&with));
}
