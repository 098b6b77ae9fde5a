use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use layoutrank::dom::Viewport;
use layoutrank::features::{fit_buckets, FitOptions};
use layoutrank::model::{init_for_schema, Checkpoint, ModelConfig};
use layoutrank::pipeline;
use layoutrank::store::ScoreStore;
use layoutrank::synth::{generate, Profile, TemplateSpec};
use layoutrank_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = lr_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

struct Fixture {
    _dir: tempfile::TempDir,
    checkpoint: CString,
    schema: CString,
    other_schema: CString,
    html: String,
    url: String,
    expected: f64,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let docs = generate(&TemplateSpec::new("news", Profile::Rich, 3), 12).unwrap();
    let graphs = pipeline::graphs_from_documents(&docs, Viewport::default()).unwrap();
    let schema = fit_buckets(
        &graphs,
        &FitOptions {
            min_count: 2,
            num_quantiles: 4,
            embedding_dim: 8,
        },
    )
    .unwrap();
    let other = fit_buckets(
        &graphs[..6],
        &FitOptions {
            min_count: 2,
            num_quantiles: 3,
            embedding_dim: 8,
        },
    )
    .unwrap();
    let config = ModelConfig {
        d: 8,
        num_layers: 2,
        ..ModelConfig::default()
    };
    let params = init_for_schema(&config, &schema, 5).unwrap();
    let ckpt = Checkpoint::new(&config, &schema, &params);
    let store = pipeline::score_batch(&graphs, &ckpt, &schema, 1).unwrap();
    let path = |name: &str| dir.path().join(name);
    ckpt.save(path("ckpt.json")).unwrap();
    schema.save(path("schema.json")).unwrap();
    other.save(path("other.json")).unwrap();
    let to_c = |p: &Path| c(p.to_str().unwrap());
    let url = docs[0].entry.url.clone();
    Fixture {
        checkpoint: to_c(&path("ckpt.json")),
        schema: to_c(&path("schema.json")),
        other_schema: to_c(&path("other.json")),
        html: docs[0].html.clone(),
        expected: store.get(&url).unwrap(),
        url,
        _dir: dir,
    }
}

#[test]
fn scorer_matches_the_library() {
    let f = fixture();
    let mut scorer = ptr::null_mut();
    unsafe {
        assert_eq!(
            lr_scorer_open(f.checkpoint.as_ptr(), f.schema.as_ptr(), &mut scorer),
            LrStatus::Ok
        );
        let mut score = -1.0;
        let html = c(&f.html);
        let url = c(&f.url);
        let category = c("news");
        assert_eq!(
            lr_scorer_score_html(
                scorer,
                html.as_ptr(),
                url.as_ptr(),
                category.as_ptr(),
                &mut score
            ),
            LrStatus::Ok
        );
        assert_eq!(score, f.expected);
        let version = CStr::from_ptr(lr_scorer_model_version(scorer))
            .to_str()
            .unwrap();
        assert_eq!(version.len(), 32);

        assert_eq!(
            lr_scorer_set_viewport(scorer, -1.0, 10.0),
            LrStatus::InvalidArgument
        );
        assert_eq!(lr_scorer_set_viewport(scorer, 320.0, 640.0), LrStatus::Ok);
        let mut narrow = -1.0;
        assert_eq!(
            lr_scorer_score_html(
                scorer,
                html.as_ptr(),
                url.as_ptr(),
                category.as_ptr(),
                &mut narrow
            ),
            LrStatus::Ok
        );
        assert!((0.0..=1.0).contains(&narrow));

        assert_eq!(
            lr_scorer_score_html(
                scorer,
                ptr::null(),
                url.as_ptr(),
                category.as_ptr(),
                &mut score
            ),
            LrStatus::NullPointer
        );
        assert!(last_error().contains("html"));
        let empty = c("");
        assert_eq!(
            lr_scorer_score_html(
                scorer,
                empty.as_ptr(),
                url.as_ptr(),
                category.as_ptr(),
                &mut score
            ),
            LrStatus::Parse
        );
        lr_scorer_free(scorer);
        lr_scorer_free(ptr::null_mut());
    }
}

#[test]
fn open_failures_leave_a_null_handle() {
    let f = fixture();
    let mut scorer = std::ptr::dangling_mut::<LrScorer>();
    unsafe {
        assert_eq!(
            lr_scorer_open(f.checkpoint.as_ptr(), f.other_schema.as_ptr(), &mut scorer),
            LrStatus::SchemaMismatch
        );
        assert!(scorer.is_null());
        assert!(last_error().contains("schema mismatch"));
        let missing = c("/nonexistent/ckpt.json");
        assert_eq!(
            lr_scorer_open(missing.as_ptr(), f.schema.as_ptr(), &mut scorer),
            LrStatus::Io
        );
        assert_eq!(
            lr_scorer_open(f.schema.as_ptr(), f.schema.as_ptr(), &mut scorer),
            LrStatus::Parse
        );
        assert_eq!(
            lr_scorer_open(f.checkpoint.as_ptr(), f.schema.as_ptr(), ptr::null_mut()),
            LrStatus::NullPointer
        );
        let bad_utf8 = [0xffu8, 0xfe, 0];
        assert_eq!(
            lr_scorer_open(bad_utf8.as_ptr().cast(), f.schema.as_ptr(), &mut scorer),
            LrStatus::InvalidUtf8
        );
    }
}

#[test]
fn store_lookup() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scores.tsv");
    ScoreStore::new(
        "s",
        "m",
        vec![
            ("https://a.example/".into(), 0.25),
            ("https://b.example/".into(), 0.875),
        ],
    )
    .unwrap()
    .save(&path)
    .unwrap();
    let path = c(path.to_str().unwrap());
    let mut store = ptr::null_mut();
    unsafe {
        assert_eq!(lr_store_open(path.as_ptr(), &mut store), LrStatus::Ok);
        assert_eq!(lr_store_len(store), 2);
        let mut score = 0.0;
        let b = c("https://b.example/");
        assert_eq!(lr_store_get(store, b.as_ptr(), &mut score), LrStatus::Ok);
        assert_eq!(score, 0.875);
        let missing = c("https://z.example/");
        assert_eq!(
            lr_store_get(store, missing.as_ptr(), &mut score),
            LrStatus::NotFound
        );
        assert_eq!(score, 0.875);
        lr_store_free(store);
        assert_eq!(lr_store_len(ptr::null()), 0);
    }
}

#[test]
fn metrics_through_the_abi() {
    let scores = [0.9, 0.4, 0.6, 0.1];
    let labels = [1u8, 1, 0, 0];
    let mut out = 0.0;
    unsafe {
        assert_eq!(
            lr_pnr(scores.as_ptr(), labels.as_ptr(), 4, &mut out),
            LrStatus::Ok
        );
        assert_eq!(out, 3.0);
        assert_eq!(
            lr_auc(scores.as_ptr(), labels.as_ptr(), 4, &mut out),
            LrStatus::Ok
        );
        assert_eq!(out, 0.75);
        assert_eq!(
            lr_pnr([0.5, 0.5].as_ptr(), [1u8, 0].as_ptr(), 2, &mut out),
            LrStatus::Ok
        );
        assert!(out.is_nan());
        assert_eq!(
            lr_auc(scores.as_ptr(), [1u8; 4].as_ptr(), 4, &mut out),
            LrStatus::Undefined
        );

        assert_eq!(
            lr_dcg([3u8, 2, 0, 1].as_ptr(), 4, 4, &mut out),
            LrStatus::Ok
        );
        assert!((out - 9.323_465_818_787_038).abs() < 1e-12);
        assert_eq!(
            lr_dcg([3u8].as_ptr(), 1, 4, &mut out),
            LrStatus::InvalidArgument
        );

        assert_eq!(lr_gsb(5, 3, 2, &mut out), LrStatus::Ok);
        assert!((out - 0.3).abs() < 1e-15);
        assert_eq!(lr_gsb(0, 0, 0, &mut out), LrStatus::Undefined);
        assert_eq!(lr_gsb(1, 0, 0, ptr::null_mut()), LrStatus::NullPointer);
    }
    assert_eq!(
        unsafe { CStr::from_ptr(lr_version()) }.to_str().unwrap(),
        env!("CARGO_PKG_VERSION")
    );
}

#[test]
fn errors_are_per_thread() {
    let mut out = 0.0;
    unsafe { lr_gsb(0, 0, 0, &mut out) };
    assert!(last_error().contains("GSB"));
    std::thread::spawn(|| assert!(lr_last_error_message().is_null()))
        .join()
        .unwrap();
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/layoutrank.h");
    assert!(header.exists());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("probe.c");
    std::fs::write(
        &src,
        format!(
            "#include \"{}\"\nint main(void) {{ LrScorer *s = 0; double x; return lr_gsb(1, 0, 0, &x) == LR_STATUS_OK && s == 0 ? 0 : 1; }}\n",
            header.display()
        ),
    )
    .unwrap();
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let Ok(out) = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg(&src)
            .output()
        else {
            eprintln!("{compiler} not available; skipping");
            continue;
        };
        assert!(
            out.status.success(),
            "{compiler}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn c_program_links_and_runs() {
    let lib_dir = std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    if !lib_dir.join("liblayoutrank_ffi.so").exists() {
        eprintln!("shared library not built; skipping");
        return;
    }
    let Ok(probe) = Command::new("cc").arg("--version").output() else {
        eprintln!("cc not available; skipping");
        return;
    };
    assert!(probe.status.success());
    let here = Path::new(env!("CARGO_MANIFEST_DIR"));
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let out = Command::new("cc")
        .arg(here.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(here.join("include"))
        .arg("-L")
        .arg(&lib_dir)
        .args(["-llayoutrank_ffi", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let store = dir.path().join("s.tsv");
    ScoreStore::new("s", "m", vec![("https://a.example/".into(), 0.625)])
        .unwrap()
        .save(&store)
        .unwrap();
    let run = Command::new(&exe)
        .arg(&store)
        .env("LD_LIBRARY_PATH", &lib_dir)
        .output()
        .unwrap();
    assert!(
        run.status.success(),
        "exit {:?}: {}",
        run.status.code(),
        String::from_utf8_lossy(&run.stderr)
    );
    assert_eq!(
        String::from_utf8_lossy(&run.stdout).trim(),
        format!("ok {}", env!("CARGO_PKG_VERSION"))
    );
}
