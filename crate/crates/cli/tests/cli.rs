use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_specshape"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Exit code and the parsed stderr error object.
fn fails(args: &[&str]) -> (i32, Value) {
    let out = run(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let stderr = String::from_utf8(out.stderr).unwrap();
    let line = stderr.lines().last().unwrap_or_default();
    (out.status.code().unwrap(), serde_json::from_str(line).unwrap_or_else(|_| panic!("not JSON: {stderr}")))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Contour mini-run shared by the tests: 80 shapes (64 training), k = 10,
/// the full model and the ablation trained for 60 epochs.
struct Mini {
    dir: PathBuf,
}

impl Mini {
    fn data(&self) -> PathBuf {
        self.dir.join("data")
    }
    fn config(&self) -> PathBuf {
        self.dir.join("ours.toml")
    }
    fn ours(&self) -> PathBuf {
        self.dir.join("ours/model.spsh")
    }
    fn ablation(&self) -> PathBuf {
        self.dir.join("no_rho/model.spsh")
    }
    fn spectrum(&self, i: usize) -> PathBuf {
        let p = self.dir.join(format!("spec{i}.json"));
        if !p.exists() {
            let d = read_json(&self.data().join("dataset.json"));
            std::fs::write(&p, d["spectra"][i].to_string()).unwrap();
        }
        p
    }
    fn shape(&self, i: usize) -> PathBuf {
        self.data().join(format!("shapes/{i:05}.json"))
    }
}

const MINI_CONFIG: &str = r#"
model = "ours"
data_dir = "DATA"

[protocol]
kind = "contour2d"
resolution = 32
count = 80
n_train = 64
seed = 3
k_max = 10
order = "linear"

[protocol.train]
k = 10
epochs = 60
lr = 1e-3
alpha = 1e-2
"#;

fn mini() -> &'static Mini {
    static MINI: OnceLock<Mini> = OnceLock::new();
    MINI.get_or_init(|| {
        let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli-mini");
        let _ = std::fs::remove_dir_all(&dir);
        std::fs::create_dir_all(&dir).unwrap();
        let m = Mini { dir };
        #[rustfmt::skip]
        ok(&["gen-data", "--family", "contour2d", "--count", "80", "--n-train", "64", "--resolution", "32",
             "--seed", "3", "--k", "10", "--order", "linear", "--out", s(&m.data())]);
        std::fs::write(m.config(), MINI_CONFIG.replace("DATA", s(&m.data()))).unwrap();
        ok(&["train", "--config", s(&m.config()), "--out", s(&m.dir.join("ours"))]);
        #[rustfmt::skip]
        ok(&["train", "--config", s(&m.config()), "--model", "no_rho", "--out", s(&m.dir.join("no_rho"))]);
        m
    })
}

#[test]
fn spectrum_of_unit_circle() {
    let out = ok(&["spectrum", "--in", s(&fixture("unit_circle.json")), "--k", "7"]);
    let v: Value = serde_json::from_str(&out).unwrap();
    let values: Vec<f64> = serde_json::from_value(v["values"].clone()).unwrap();
    assert_eq!(v["disc"], "contour_fem");
    let exact = [0.0, 1.0, 1.0, 4.0, 4.0, 9.0, 9.0];
    assert!(values[0].abs() < 1e-9);
    for (got, want) in values.iter().zip(exact).skip(1) {
        assert!((got - want).abs() / want < 5e-3, "{values:?}");
    }
}

#[test]
fn spectrum_writes_file_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("circle.json");
    ok(&["spectrum", "--in", s(&fixture("unit_circle.json")), "--k", "5", "--out", s(&out)]);
    assert_eq!(read_json(&out)["k"], 5);
    let manifest = read_json(&tmp.path().join("circle.json.manifest.json"));
    assert_eq!(manifest["command"], "spectrum");
    assert_eq!(manifest["config"]["k"], 5);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["git_revision"].is_string());
}

#[test]
fn help_lists_published_defaults() {
    let help = ok(&["train", "--help"]);
    for needle in ["published default: 1e-4", "published default: 30", "published default: 16"] {
        assert!(help.contains(needle), "missing '{needle}' in\n{help}");
    }
    let top = ok(&["--help"]);
    for cmd in [
        "gen-data", "spectrum", "train", "eval", "reconstruct", "superres", "style-transfer", "interpolate", "band",
        "estimate-spectrum", "match", "serve",
    ] {
        assert!(top.contains(cmd), "{cmd} missing from --help");
    }
}

#[test]
fn config_errors_exit_1() {
    let (code, err) = fails(&["spectrum", "--bogus"]);
    assert_eq!(code, 1);
    assert_eq!(err["error"]["kind"], "config");

    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "model = \"ours\"\nlearning_rate = 1.0\n").unwrap();
    let (code, err) = fails(&["train", "--config", s(&cfg), "--out", s(tmp.path())]);
    assert_eq!(code, 1);
    assert!(err["error"]["message"].as_str().unwrap().contains("learning_rate"));

    let (code, _) = fails(&["train", "--batch-size", "1", "--out", s(tmp.path())]);
    assert_eq!(code, 1);
}

#[test]
fn data_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let (code, err) = fails(&["spectrum", "--in", s(&tmp.path().join("missing.off"))]);
    assert_eq!(code, 2);
    assert_eq!(err["error"]["kind"], "data");

    let bad = tmp.path().join("bad.off");
    std::fs::write(&bad, "OFF\n3 1 0\n0 0 0\n1 0 0\n").unwrap();
    let (code, _) = fails(&["spectrum", "--in", s(&bad)]);
    assert_eq!(code, 2);

    let m = mini();
    let short = tmp.path().join("short.json");
    std::fs::write(&short, "[0.0, 1.0]").unwrap();
    #[rustfmt::skip]
    let (code, err) = fails(&["reconstruct", "--checkpoint", s(&m.ours()), "--spectrum", s(&short),
                              "--out", s(&tmp.path().join("x.json"))]);
    assert_eq!(code, 2);
    assert!(err["error"]["message"].as_str().unwrap().contains("k = 10"));
}

#[test]
fn numerical_failure_exits_3() {
    let m = mini();
    let tmp = tempfile::tempdir().unwrap();
    #[rustfmt::skip]
    let (code, err) = fails(&["style-transfer", "--checkpoint", s(&m.ours()), "--style", s(&m.spectrum(71)),
                              "--pose", s(&m.shape(70)), "--lr", "1e3", "--patience", "1",
                              "--out", s(&tmp.path().join("st.json"))]);
    assert_eq!(code, 3);
    assert_eq!(err["error"]["kind"], "numerical");
}

#[test]
fn gen_data_writes_shapes_and_manifest() {
    let m = mini();
    let d = read_json(&m.data().join("dataset.json"));
    assert_eq!(d["n_train"], 64);
    assert_eq!(d["manifest"]["samples"].as_array().unwrap().len(), 80);
    assert_eq!(d["spectra"][0].as_array().unwrap().len(), 10);
    assert!(m.shape(79).exists());
    let run = read_json(&m.data().join("run_manifest.json"));
    assert_eq!(run["seeds"]["data"], 3);
}

#[test]
fn training_is_byte_deterministic() {
    let m = mini();
    let tmp = tempfile::tempdir().unwrap();
    ok(&["train", "--config", s(&m.config()), "--out", s(tmp.path())]);
    assert_eq!(std::fs::read(tmp.path().join("model.spsh")).unwrap(), std::fs::read(m.ours()).unwrap());
    let log = std::fs::read_to_string(tmp.path().join("train_log.csv")).unwrap();
    assert_eq!(log.lines().count(), 61);
    let a = read_json(&tmp.path().join("run_manifest.json"));
    let b = read_json(&m.dir.join("ours/run_manifest.json"));
    assert_eq!(a["config_sha256"], b["config_sha256"]);
    assert_eq!(a["seeds"], serde_json::json!({"data": 3, "train": 0}));
}

#[test]
fn table1_mini_run() {
    let m = mini();
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("table.json");
    #[rustfmt::skip]
    let text = ok(&["eval", "table1", "--checkpoint", s(&m.ours()), "--ablation", s(&m.ablation()),
                    "--testset", s(&m.data()), "--out", s(&out)]);
    assert_eq!(text.lines().count(), 4, "{text}");
    let t = read_json(&out);
    let rows = t["rows"].as_array().unwrap();
    let names: Vec<&str> = rows.iter().map(|r| r["method"].as_str().unwrap()).collect();
    assert_eq!(names, ["Ours", "Ours-without-rho", "NN"]);
    let mse: Vec<f64> = rows.iter().map(|r| r["mse"].as_f64().unwrap()).collect();
    assert_eq!(t["held_out"], 16);
    // Ordering is a property of the full-size protocol; here the table must
    // agree with the library on the same models and split.
    use specshape::experiment::{mean, nn_mse, spectrum_mse, FamilyData};
    use specshape::spectral_ae::ModelBundle;
    let data = FamilyData::load(m.data()).unwrap();
    let want = [
        mean(&spectrum_mse(&ModelBundle::load(m.ours()).unwrap(), &data).unwrap()),
        mean(&spectrum_mse(&ModelBundle::load(m.ablation()).unwrap(), &data).unwrap()),
        mean(&nn_mse(&data, 10).unwrap()),
    ];
    assert_eq!(mse, want, "{text}");
    assert!(mse[0] < mse[2], "{text}");
}

#[test]
fn reconstruct_matches_server_decode_bit_exactly() {
    use axum::body::{to_bytes, Body};
    use axum::http::Request;
    use tower::ServiceExt;

    let m = mini();
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("rec.json");
    ok(&["reconstruct", "--checkpoint", s(&m.ours()), "--spectrum", s(&m.spectrum(66)), "--out", s(&out)]);
    let cli: Vec<Vec<f64>> = serde_json::from_value(read_json(&out)).unwrap();

    let model = specshape::spectral_ae::ModelBundle::load(m.ours()).unwrap();
    let app = specshape_server::router(specshape_server::AppState::new(Some(model), None));
    let body = format!("{{\"eigenvalues\": {}}}", std::fs::read_to_string(m.spectrum(66)).unwrap());
    let rt = tokio::runtime::Runtime::new().unwrap();
    let served: Value = rt.block_on(async {
        let resp = app.oneshot(Request::post("/decode").body(Body::from(body)).unwrap()).await.unwrap();
        serde_json::from_slice(&to_bytes(resp.into_body(), usize::MAX).await.unwrap()).unwrap()
    });
    let served: Vec<Vec<f64>> = serde_json::from_value(served["vertices"].clone()).unwrap();
    assert_eq!(cli, served);
}

#[test]
fn band_interpolate_and_superres() {
    let m = mini();
    let tmp = tempfile::tempdir().unwrap();
    let p = |n: &str| tmp.path().join(n);
    ok(&["reconstruct", "--checkpoint", s(&m.ours()), "--spectrum", s(&m.spectrum(65)), "--out", s(&p("plain.json"))]);
    #[rustfmt::skip]
    ok(&["band", "--checkpoint", s(&m.ours()), "--spectrum", s(&m.spectrum(65)), "--lo", "1", "--hi", "4",
         "--factor", "1", "--out", s(&p("band1.json")), "--spectrum-out", s(&p("band1_spec.json"))]);
    assert_eq!(read_json(&p("plain.json")), read_json(&p("band1.json")));
    #[rustfmt::skip]
    ok(&["band", "--checkpoint", s(&m.ours()), "--spectrum", s(&m.spectrum(65)), "--lo", "1", "--hi", "4",
         "--factor", "0.7", "--out", s(&p("band7.json")), "--spectrum-out", s(&p("band7_spec.json"))]);
    assert_ne!(read_json(&p("plain.json")), read_json(&p("band7.json")));
    let base: Vec<f64> = serde_json::from_value(read_json(&m.spectrum(65))).unwrap();
    let edited: Vec<f64> = serde_json::from_value(read_json(&p("band7_spec.json"))).unwrap();
    assert!((edited[1] - 0.7 * base[1]).abs() < 1e-12);

    #[rustfmt::skip]
    ok(&["interpolate", "--checkpoint", s(&m.ours()), "--spectra", s(&m.spectrum(64)), s(&m.spectrum(65)),
         "--steps", "3", "--out-dir", s(&p("line"))]);
    for i in 0..3 {
        assert!(p(&format!("line/interp_{i:03}.json")).exists());
    }
    ok(&["reconstruct", "--checkpoint", s(&m.ours()), "--spectrum", s(&m.spectrum(64)), "--out", s(&p("a.json"))]);
    assert_eq!(read_json(&p("line/interp_000.json")), read_json(&p("a.json")));
    #[rustfmt::skip]
    ok(&["interpolate", "--checkpoint", s(&m.ours()), "--spectra", s(&m.spectrum(64)), s(&m.spectrum(65)),
         s(&m.spectrum(66)), s(&m.spectrum(67)), "--steps", "3", "--out-dir", s(&p("grid"))]);
    assert_eq!(read_json(&p("grid/interp_000_000.json")), read_json(&p("a.json")));
    assert!(p("grid/interp_002_002.json").exists() && p("grid/run_manifest.json").exists());
    #[rustfmt::skip]
    let (code, _) = fails(&["interpolate", "--checkpoint", s(&m.ours()), "--spectra", s(&m.spectrum(64)),
                            s(&m.spectrum(65)), s(&m.spectrum(66)), "--out-dir", s(&p("three"))]);
    assert_eq!(code, 1);

    // A 20-point version of a held-out contour.
    let shape: Vec<Vec<f64>> = serde_json::from_value(read_json(&m.shape(66))).unwrap();
    let coarse: Vec<&Vec<f64>> = shape.iter().step_by(2).take(16).collect();
    std::fs::write(p("coarse.json"), serde_json::to_string(&coarse).unwrap()).unwrap();
    #[rustfmt::skip]
    ok(&["superres", "--checkpoint", s(&m.ours()), "--in", s(&p("coarse.json")), "--out", s(&p("fine.json"))]);
    let fine: Vec<Vec<f64>> = serde_json::from_value(read_json(&p("fine.json"))).unwrap();
    assert_eq!(fine.len(), 32);
}

#[test]
fn style_transfer_writes_curve() {
    let m = mini();
    let tmp = tempfile::tempdir().unwrap();
    let curve = tmp.path().join("curve.csv");
    #[rustfmt::skip]
    let text = ok(&["style-transfer", "--checkpoint", s(&m.ours()), "--style", s(&m.spectrum(71)),
                    "--pose", s(&m.shape(70)), "--w", "0", "--out", s(&tmp.path().join("st.json")),
                    "--curve", s(&curve)]);
    assert!(text.contains("alignment gap"));
    let csv = std::fs::read_to_string(&curve).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "step,objective,gap,drift");
    assert!(csv.lines().count() > 2);
    assert!(tmp.path().join("st.json.manifest.json").exists());
}

#[test]
fn match_propagates_labels() {
    let m = mini();
    let tmp = tempfile::tempdir().unwrap();
    let labels = tmp.path().join("labels.json");
    let l: Vec<usize> = (0..32).map(|i| i / 8).collect();
    std::fs::write(&labels, serde_json::to_string(&l).unwrap()).unwrap();
    let out = tmp.path().join("map.json");
    #[rustfmt::skip]
    ok(&["match", "--checkpoint", s(&m.ours()), "--a", s(&m.shape(66)), "--b", s(&m.shape(66)),
         "--spec-a", s(&m.spectrum(66)), "--spec-b", s(&m.spectrum(66)), "--labels", s(&labels), "--out", s(&out)]);
    let v = read_json(&out);
    assert_eq!(v["map"].as_array().unwrap().len(), 32);
    assert_eq!(v["labels"].as_array().unwrap().len(), 32);
    assert!(v["quality"].as_f64().unwrap() >= 0.0);

    // Spectra computed on the fly when not given.
    #[rustfmt::skip]
    ok(&["match", "--checkpoint", s(&m.ours()), "--a", s(&m.shape(66)), "--b", s(&m.shape(67)),
         "--order", "linear", "--out", s(&out)]);
}

#[test]
fn pointcloud_model_estimates_spectra() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("pc.toml");
    std::fs::write(
        &cfg,
        r#"
model = "pointcloud"
[protocol]
kind = "blob3d"
resolution = 1
count = 24
n_train = 20
seed = 1
k_max = 6
cloud_fraction = 0.5
[protocol.train]
k = 6
epochs = 3
batch_size = 4
lr = 1e-3
"#,
    )
    .unwrap();
    ok(&["train", "--config", s(&cfg), "--out", s(&tmp.path().join("pc"))]);
    let model = tmp.path().join("pc/model.spsh");

    let data = tmp.path().join("data");
    #[rustfmt::skip]
    ok(&["gen-data", "--family", "blob3d", "--resolution", "1", "--count", "2", "--k", "0", "--out", s(&data)]);
    let text = ok(&["estimate-spectrum", "--checkpoint", s(&model), "--in", s(&data.join("shapes/00001.off"))]);
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["k"], 6);
    assert_eq!(v["values"].as_array().unwrap().len(), 6);

    let m = mini();
    #[rustfmt::skip]
    let (code, _) = fails(&["estimate-spectrum", "--checkpoint", s(&m.ours()), "--in", s(&data.join("shapes/00001.off"))]);
    assert_eq!(code, 1);
}

#[test]
fn serve_answers_http() {
    use std::io::{Read, Write};
    use std::net::TcpStream;
    use std::time::{Duration, Instant};

    let m = mini();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr = format!("127.0.0.1:{port}");
    #[rustfmt::skip]
    let mut child = bin()
        .args(["serve", "--checkpoint", s(&m.ours()), "--data", s(&m.data()), "--addr", &addr])
        .stderr(std::process::Stdio::null())
        .spawn()
        .unwrap();
    let start = Instant::now();
    let response = loop {
        if let Ok(mut stream) = TcpStream::connect(&addr) {
            write!(stream, "GET /samples?n=2 HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").unwrap();
            let mut text = String::new();
            stream.read_to_string(&mut text).unwrap();
            break text;
        }
        assert!(start.elapsed() < Duration::from_secs(20), "server did not start");
        std::thread::sleep(Duration::from_millis(50));
    };
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    let body: Value = serde_json::from_str(response.split("\r\n\r\n").nth(1).unwrap()).unwrap();
    assert_eq!(body["total"], 80);
    assert_eq!(body["samples"].as_array().unwrap().len(), 2);
}
