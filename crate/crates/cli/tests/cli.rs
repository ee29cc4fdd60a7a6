use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mcne::graph::generate_sbm;
use mcne::io;
use mcne::pretrain::EmbeddingTable;
use tempfile::TempDir;

fn mcne(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcne"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn mcne")
}

fn ok(args: &[&str]) -> String {
    let out = mcne(args);
    assert!(
        out.status.success(),
        "mcne {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn err(args: &[&str]) -> String {
    let out = mcne(args);
    assert!(!out.status.success(), "mcne {args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

struct Fixture {
    dir: TempDir,
    edge_count: usize,
}

impl Fixture {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let (g, labels) = generate_sbm(&[12, 12, 12], 0.5, 0.03, 4).unwrap();
        fs::write(dir.path().join("edges.txt"), io::format_edge_list(&g)).unwrap();
        let mut text = String::new();
        for v in 0..labels.node_count() {
            for l in labels.labels_of(v) {
                text.push_str(&format!("{v} {l}\n"));
            }
        }
        fs::write(dir.path().join("labels.txt"), text).unwrap();
        Fixture {
            dir,
            edge_count: g.edge_count(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn pretrain(&self, out: &str) {
        ok(&[
            "pretrain", "--edges", &self.p("edges.txt"), "--dim", "8", "--epochs", "2", "--walks-per-node", "4",
            "--walk-length", "10", "--seed", "5", "--out-dir", &self.p(out),
        ]);
    }

    fn compress(&self, emb: &Path, out: &str) -> String {
        ok(&[
            "compress", "--embeddings", &emb.to_string_lossy(), "--s", "8", "--t", "2", "--epochs", "20",
            "--batch-size", "8", "--seed", "5", "--out-dir", &self.p(out),
        ])
    }
}

#[test]
fn report_memory_prints_blogcatalog_row() {
    let dir = TempDir::new().unwrap();
    let out = ok(&["report-memory", "--dataset", "blogcatalog", "--out-dir", &dir.path().to_string_lossy()]);
    assert!(out.contains("40.40"), "{out}");
    assert!(out.contains("1.44"), "{out}");
    assert!(out.contains("22.08"), "{out}");
    let csv = fs::read_to_string(dir.path().join("memory_report.csv")).unwrap();
    assert!(csv.contains("blogcatalog,one_hot,2650184,42361696,2.65,40.40"), "{csv}");
    assert!(csv.contains("blogcatalog,multi_hot(s=128,t=8),115264,1514240,0.12,1.44,22.99,22.90,22.08"), "{csv}");
}

#[test]
fn report_memory_custom_layout() {
    let dir = TempDir::new().unwrap();
    let out = ok(&[
        "report-memory", "--nodes", "1000", "--dim", "64", "--k", "4", "--kd-d", "8", "--out-dir",
        &dir.path().to_string_lossy(),
    ]);
    assert!(out.contains("kd(K=4,D=8)"), "{out}");
    let e = err(&["report-memory", "--nodes", "1000", "--k", "4", "--out-dir", &dir.path().to_string_lossy()]);
    assert!(e.contains("--kd-d"), "{e}");
}

#[test]
fn header_echoes_defaults_and_sources() {
    let f = Fixture::new();
    f.pretrain("pre");
    let out = ok(&[
        "compress", "--embeddings", &f.p("pre/embeddings.txt"), "--epochs", "1", "--out-dir", &f.p("c"),
    ]);
    for line in [
        "# mcne compress",
        "s = 128 (default)",
        "t = 8 (default)",
        "epochs = 1 (flag)",
        "lr = 0.001 (default)",
        "batch_size = 128 (default)",
        "layers = 2 (default)",
        "flavor = multi_hot (default)",
        "seed = 1",
        "d = 8",
    ] {
        assert!(out.lines().any(|l| l == line), "missing {line:?} in\n{out}");
    }
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let f = Fixture::new();
    f.pretrain("pre");
    fs::write(f.path("run.toml"), "seed = 9\n[compress]\ns = 16\nt = 4\nepochs = 3\n").unwrap();
    let out = ok(&[
        "compress", "--config", &f.p("run.toml"), "--embeddings", &f.p("pre/embeddings.txt"), "--t", "2",
        "--out-dir", &f.p("c"),
    ]);
    assert!(out.lines().any(|l| l == "s = 16 (config)"), "{out}");
    assert!(out.lines().any(|l| l == "t = 2 (flag)"), "{out}");
    assert!(out.lines().any(|l| l == "epochs = 3 (config)"), "{out}");
    assert!(out.lines().any(|l| l == "seed = 9"), "{out}");
    let cb = io::load_codebook::<f64>(f.path("c/codebook.txt")).unwrap();
    assert_eq!((cb.s(), cb.t()), (16, 2));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let f = Fixture::new();
    fs::write(f.path("bad.toml"), "[compress]\nbasis = 16\n").unwrap();
    let e = err(&["report-memory", "--config", &f.p("bad.toml"), "--out-dir", &f.p("o")]);
    assert!(e.contains("basis"), "{e}");
    fs::write(f.path("bad2.toml"), "[compres]\ns = 16\n").unwrap();
    let e = err(&["report-memory", "--config", &f.p("bad2.toml"), "--out-dir", &f.p("o")]);
    assert!(e.contains("compres"), "{e}");
}

#[test]
fn kd_rejects_inconsistent_sizes() {
    let f = Fixture::new();
    f.pretrain("pre");
    let emb = f.p("pre/embeddings.txt");
    let e = err(&["compress", "--embeddings", &emb, "--flavor", "kd", "--k", "4", "--kd-d", "2", "--s", "10"]);
    assert!(e.contains("K·D"), "{e}");
    let e = err(&["compress", "--embeddings", &emb, "--flavor", "kd", "--k", "4", "--kd-d", "2", "--t", "3"]);
    assert!(e.contains("t = D"), "{e}");
    let e = err(&["compress", "--embeddings", &emb, "--flavor", "onehot"]);
    assert!(e.contains("onehot"), "{e}");
    ok(&[
        "compress", "--embeddings", &emb, "--flavor", "kd", "--k", "4", "--kd-d", "2", "--epochs", "2",
        "--out-dir", &f.p("kd"),
    ]);
    let cb = io::load_codebook::<f64>(f.path("kd/codebook.txt")).unwrap();
    assert_eq!((cb.s(), cb.t()), (8, 2));
}

#[test]
fn missing_inputs_name_the_flag() {
    let f = Fixture::new();
    assert!(err(&["pretrain"]).contains("--edges"));
    assert!(err(&["compress"]).contains("--embeddings"));
    assert!(err(&["train-e2e"]).contains("--edges"));
    assert!(err(&["eval", "--labels", &f.p("labels.txt")]).contains("--codebook"));
    let e = err(&["eval", "--embeddings", &f.p("nope.txt"), "--labels", &f.p("labels.txt")]);
    assert!(e.contains("--embeddings") && e.contains("nope.txt"), "{e}");
}

#[test]
fn same_seed_gives_identical_files() {
    let f = Fixture::new();
    f.pretrain("a");
    f.pretrain("b");
    let ea = fs::read(f.path("a/embeddings.txt")).unwrap();
    assert_eq!(ea, fs::read(f.path("b/embeddings.txt")).unwrap());
    f.compress(&f.path("a/embeddings.txt"), "a");
    f.compress(&f.path("a/embeddings.txt"), "b");
    for name in ["codebook.txt", "compress_log.csv"] {
        assert_eq!(fs::read(f.path(&format!("a/{name}"))).unwrap(), fs::read(f.path(&format!("b/{name}"))).unwrap());
    }
    for out in ["e1", "e2"] {
        ok(&[
            "train-e2e", "--edges", &f.p("edges.txt"), "--s", "8", "--t", "2", "--dim", "4", "--hidden", "6",
            "--epochs", "5", "--batch-size", "6", "--lr", "0.01", "--seed", "3", "--out-dir", &f.p(out),
        ]);
    }
    for name in ["codebook.txt", "embeddings.txt", "train_log.csv"] {
        assert_eq!(fs::read(f.path(&format!("e1/{name}"))).unwrap(), fs::read(f.path(&format!("e2/{name}"))).unwrap());
    }
}

#[test]
fn compress_outputs_round_trip() {
    let f = Fixture::new();
    f.pretrain("pre");
    let table = io::load_embeddings::<f64>(f.path("pre/embeddings.txt")).unwrap();
    assert_eq!((table.node_count(), table.dim()), (36, 8));
    f.compress(&f.path("pre/embeddings.txt"), "c");
    let text = fs::read_to_string(f.path("c/codebook.txt")).unwrap();
    let cb = io::parse_codebook::<f64>(&text).unwrap();
    assert_eq!(io::format_codebook(&cb), text);
    assert_eq!(cb.node_count(), 36);
    let log = fs::read_to_string(f.path("c/compress_log.csv")).unwrap();
    assert_eq!(log.lines().next(), Some("epoch,train_loss,val_loss,tau"));
    assert_eq!(log.lines().count(), 21);
}

#[test]
fn codebook_and_reconstructed_embeddings_score_the_same() {
    let f = Fixture::new();
    f.pretrain("pre");
    f.compress(&f.path("pre/embeddings.txt"), "c");
    let cb = io::load_codebook::<f64>(f.path("c/codebook.txt")).unwrap();
    let table = EmbeddingTable::new(cb.reconstruct_all()).unwrap();
    io::save_embeddings(f.path("recon.txt"), &table).unwrap();
    ok(&["eval", "--codebook", &f.p("c/codebook.txt"), "--labels", &f.p("labels.txt"), "--out-dir", &f.p("ev1")]);
    ok(&["eval", "--embeddings", &f.p("recon.txt"), "--labels", &f.p("labels.txt"), "--out-dir", &f.p("ev2")]);
    let metric = |dir: &str, key: &str| -> String {
        let text = fs::read_to_string(f.path(&format!("{dir}/eval_report.csv"))).unwrap();
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{key},")).map(str::to_string))
            .unwrap_or_else(|| panic!("{key} missing in {text}"))
    };
    assert_eq!(metric("ev1", "micro_f1"), metric("ev2", "micro_f1"));
    assert_eq!(metric("ev1", "macro_f1"), metric("ev2", "macro_f1"));
    assert!(f.path("ev1/basis_utilization.csv").is_file());
    assert!(!f.path("ev2/basis_utilization.csv").exists());
}

#[test]
fn linkpred_holdout_writes_a_floor_sized_split() {
    let f = Fixture::new();
    ok(&[
        "train-e2e", "--edges", &f.p("edges.txt"), "--s", "8", "--t", "2", "--dim", "4", "--hidden", "6", "--epochs",
        "5", "--batch-size", "6", "--linkpred-holdout", "0.3", "--out-dir", &f.p("e"),
    ]);
    let split = io::load_split(f.path("e/split.txt")).unwrap();
    let held = (0.3 * f.edge_count as f64).floor() as usize;
    assert_eq!(split.positive_pairs.len(), held);
    assert_eq!(split.negative_pairs.len(), held);
    assert_eq!(split.train_graph.edge_count(), f.edge_count - held);
    let out = ok(&["eval", "--codebook", &f.p("e/codebook.txt"), "--split", &f.p("e/split.txt"), "--out-dir", &f.p("e")]);
    assert!(out.contains("link prediction: auc = "), "{out}");
    let report = fs::read_to_string(f.path("e/eval_report.csv")).unwrap();
    assert!(report.lines().any(|l| l.starts_with("auc,")), "{report}");
    assert!(!report.lines().any(|l| l.starts_with("micro_f1,")), "{report}");
}
