use std::ffi::{CStr, CString};
use std::ptr;

use fdf_ffi::*;

const MINIMAL: &str = include_str!("../../core/fixtures/minimal.fdf");

fn last_error() -> String {
    unsafe { CStr::from_ptr(fdf_last_error_message()) }.to_string_lossy().into_owned()
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

#[test]
fn parse_count_and_draw() {
    let src = c(MINIMAL);
    let mut p = ptr::null_mut();
    assert_eq!(unsafe { fdf_pipeline_parse(src.as_ptr(), &mut p) }, FdfStatus::Ok);
    assert_eq!(unsafe { fdf_pipeline_port_count(p) }, 14);
    assert_eq!(unsafe { fdf_pipeline_warning_count(p) }, 0);
    let mut dot = ptr::null_mut();
    assert_eq!(unsafe { fdf_pipeline_to_dot(p, &mut dot) }, FdfStatus::Ok);
    let text = unsafe { CStr::from_ptr(dot) }.to_str().unwrap().to_string();
    assert!(text.starts_with("digraph") && text.contains("color=red style=dashed"));
    unsafe {
        fdf_string_free(dot);
        fdf_pipeline_free(p);
    }
}

#[test]
fn errors_set_status_and_message() {
    let mut p = ptr::null_mut();
    let bad = c("pipeline x\nbox b : widget {\n}\n");
    assert_eq!(unsafe { fdf_pipeline_parse(bad.as_ptr(), &mut p) }, FdfStatus::Parse);
    assert!(p.is_null());
    assert!(!last_error().is_empty());

    let cyclic = c("box a : processor {\n predef = \"identity\"\n in data b.y\n out data y\n}\n\
                    box b : processor {\n predef = \"identity\"\n in data a.y\n out data y\n}\n");
    assert_eq!(unsafe { fdf_pipeline_parse(cyclic.as_ptr(), &mut p) }, FdfStatus::Check);
    assert!(last_error().contains("E-CYCLE"), "{}", last_error());

    assert_eq!(unsafe { fdf_pipeline_parse(ptr::null(), &mut p) }, FdfStatus::NullPointer);
    assert_eq!(unsafe { fdf_pipeline_parse(bad.as_ptr(), ptr::null_mut()) }, FdfStatus::NullPointer);
    assert_eq!(unsafe { fdf_pipeline_port_count(ptr::null()) }, 0);
    unsafe { fdf_pipeline_free(ptr::null_mut()) };
}

#[test]
fn batches_copy_in_and_out() {
    let v = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let mut b = ptr::null_mut();
    assert_eq!(unsafe { fdf_batch_new(3, 2, v.as_ptr(), &mut b) }, FdfStatus::Ok);
    assert_eq!(unsafe { (fdf_batch_rows(b), fdf_batch_width(b)) }, (3, 2));
    let mut small = [0.0; 4];
    assert_eq!(unsafe { fdf_batch_copy_values(b, small.as_mut_ptr(), 4) }, FdfStatus::BufferTooSmall);
    let mut back = [0.0; 6];
    assert_eq!(unsafe { fdf_batch_copy_values(b, back.as_mut_ptr(), 6) }, FdfStatus::Ok);
    assert_eq!(back, v);
    unsafe { fdf_batch_free(b) };

    let nan = [f64::NAN];
    assert_eq!(unsafe { fdf_batch_new(1, 1, nan.as_ptr(), &mut b) }, FdfStatus::InvalidArgument);
}

#[test]
fn run_then_load_and_apply_an_exported_function() {
    let dir = tempfile::tempdir().unwrap();
    let rows: Vec<String> = (0..40)
        .map(|i| {
            let (a, b) = ((i as f64 * 0.3).sin(), (i as f64 * 0.7).cos());
            format!("{a},{b},{},{},{}", a + b, a - b, 2.0 * a)
        })
        .collect();
    std::fs::write(dir.path().join("X.csv"), format!("c0,c1,c2,c3,c4\n{}\n", rows.join("\n"))).unwrap();
    let ys: Vec<String> = (0..40).map(|i| format!("{}", (i as f64 * 0.1).sin())).collect();
    std::fs::write(dir.path().join("Y.csv"), format!("c0\n{}\n", ys.join("\n"))).unwrap();
    std::fs::write(dir.path().join("data.manifest"), "source X = X.csv\nsource Y = Y.csv\n").unwrap();
    let fdf = MINIMAL.replace("mlp(50,50,opt=sgd)", "mlp(4,epochs=2)");
    std::fs::write(dir.path().join("minimal.fdf"), fdf).unwrap();

    let path = |n: &str| c(dir.path().join(n).to_str().unwrap());
    let out = c(dir.path().join("out").to_str().unwrap());
    let status =
        unsafe { fdf_run_file(path("minimal.fdf").as_ptr(), path("data.manifest").as_ptr(), out.as_ptr(), 1, 2) };
    assert_eq!(status, FdfStatus::Ok, "{}", last_error());

    let mut f = ptr::null_mut();
    assert_eq!(unsafe { fdf_function_load(path("out/b1.encode.fdfn").as_ptr(), &mut f) }, FdfStatus::Ok);
    assert_eq!(unsafe { (fdf_function_input_count(f), fdf_function_output_count(f)) }, (1, 1));
    let mut desc = ptr::null_mut();
    assert_eq!(unsafe { fdf_function_describe(f, &mut desc) }, FdfStatus::Ok);
    assert!(unsafe { CStr::from_ptr(desc) }.to_str().unwrap().starts_with("kind: pca-encode"));
    unsafe { fdf_string_free(desc) };

    let mut x = ptr::null_mut();
    assert_eq!(unsafe { fdf_batch_load(path("X.csv").as_ptr(), &mut x) }, FdfStatus::Ok);
    let inputs = [x as *const FdfBatch];
    let mut outputs = [ptr::null_mut(); 1];
    assert_eq!(unsafe { fdf_function_apply(f, inputs.as_ptr(), 1, outputs.as_mut_ptr(), 1) }, FdfStatus::Ok);
    assert_eq!(unsafe { fdf_batch_rows(outputs[0]) }, 40);
    assert_eq!(unsafe { fdf_batch_width(outputs[0]) }, 2);
    assert_eq!(
        unsafe { fdf_function_apply(f, inputs.as_ptr(), 1, outputs.as_mut_ptr(), 0) },
        FdfStatus::BufferTooSmall
    );

    let copy = path("copy.fdfn");
    assert_eq!(unsafe { fdf_function_save(f, copy.as_ptr()) }, FdfStatus::Ok);
    assert_eq!(
        std::fs::read(dir.path().join("copy.fdfn")).unwrap(),
        std::fs::read(dir.path().join("out/b1.encode.fdfn")).unwrap()
    );

    let wrong = [outputs[0] as *const FdfBatch];
    let mut again = [ptr::null_mut(); 1];
    assert_eq!(unsafe { fdf_function_apply(f, wrong.as_ptr(), 1, again.as_mut_ptr(), 1) }, FdfStatus::Shape);
    unsafe {
        fdf_batch_free(outputs[0]);
        fdf_batch_free(x);
        fdf_function_free(f);
    }

    let missing = c(dir.path().join("none.manifest").to_str().unwrap());
    let status = unsafe { fdf_run_file(path("minimal.fdf").as_ptr(), missing.as_ptr(), out.as_ptr(), 1, 1) };
    assert_eq!(status, FdfStatus::Run);
}

#[test]
fn header_declares_the_api_and_compiles_as_c() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/fdf.h")).unwrap();
    for name in
        ["fdf_pipeline_parse", "fdf_function_apply", "fdf_last_error_message", "FDF_STATUS_OK", "fdf_batch_free"]
    {
        assert!(header.contains(name), "{name}");
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"fdf.h\"\nint main(void) {\n  FdfPipeline *p = NULL;\n  FdfStatus s = fdf_pipeline_parse(\"pipeline x\", &p);\n  fdf_pipeline_free(p);\n  return s == FDF_STATUS_OK ? 0 : 1;\n}\n",
    )
    .unwrap();
    let status = std::process::Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I", concat!(env!("CARGO_MANIFEST_DIR"), "/include")])
        .arg(&src)
        .status()
        .expect("a C compiler is available");
    assert!(status.success());
}
