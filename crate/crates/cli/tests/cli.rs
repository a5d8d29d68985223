use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mmsearch_core::certificate::Certificate;
use mmsearch_core::fixtures::strassen_2x2;
use mmsearch_core::tensor_file::write_tensor;
use mmsearch_core::{Factor, Tensor3};
use tempfile::TempDir;

const TINY: &str = r#"
[gen]
n = 60

[train]
epochs = 3
batch_size = 16
hidden = 16
policy_hidden = 16
embed_dim = 8

[search]
simulations = 20
max_depth = 6
"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmsearch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Work {
    dir: TempDir,
    config: PathBuf,
}

impl Work {
    fn new() -> Self {
        let dir = TempDir::new().unwrap();
        let config = dir.path().join("tiny.toml");
        fs::write(&config, TINY).unwrap();
        Self { dir, config }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn gen(&self, out: &str, seed: u64) -> Output {
        let out = self.path(out);
        run(&[
            "gen",
            "--config",
            s(&self.config),
            "--seed",
            &seed.to_string(),
            "--out",
            s(&out),
        ])
    }

    fn train(&self, dataset: &Path, out: &str, extra: &[&str]) -> Output {
        let out = self.path(out);
        let mut args = vec![
            "train",
            "--config",
            s(&self.config),
            "--dataset",
            s(dataset),
            "--out",
            s(&out),
        ];
        args.extend_from_slice(extra);
        run(&args)
    }

    fn write_cert(&self, name: &str, size: usize, factors: Vec<Factor>) -> PathBuf {
        let path = self.path(name);
        Certificate::new(size, 1, factors).write(&path).unwrap();
        path
    }
}

fn f(u: &[i32], v: &[i32], w: &[i32]) -> Factor {
    Factor::new(u.to_vec(), v.to_vec(), w.to_vec()).unwrap()
}

#[test]
fn gen_train_decompose_pipeline() {
    let w = Work::new();
    let g = w.gen("gen", 5);
    assert_eq!(code(&g), 0, "{}", String::from_utf8_lossy(&g.stderr));
    assert!(stdout(&g).contains("rejection_fraction="));
    let dataset = w.path("gen/dataset.txt");
    assert!(dataset.exists());
    assert!(w.path("gen/config.toml").exists());

    let t = w.train(&dataset, "train", &[]);
    assert_eq!(code(&t), 0, "{}", String::from_utf8_lossy(&t.stderr));
    assert!(stdout(&t).starts_with("epoch=3 train_loss="));
    let log = fs::read_to_string(w.path("train/train.log")).unwrap();
    assert!(log.lines().any(|l| l.starts_with("epoch=3 split=train")));
    let ckpt = w.path("train/model.ckpt");

    let out = w.path("dec");
    let d = run(&[
        "decompose",
        "matmul:2,2,2",
        "--config",
        s(&w.config),
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&out),
    ]);
    // An untrained-scale model may or may not finish; either way the episode is logged.
    assert!(matches!(code(&d), 0 | 1));
    assert!(out.join("episode.log").exists());
    if code(&d) == 0 {
        let v = run(&["verify", s(&out.join("certificate.txt")), "matmul:2,2,2"]);
        assert_eq!(code(&v), 0);
    }
}

#[test]
fn oracle_guided_decomposition_verifies() {
    let w = Work::new();
    let t = Tensor3::from_factors(2, &[f(&[1, 0], &[1, 1], &[0, 1]), f(&[1, -1], &[0, 1], &[1, 1])], 64).unwrap();
    let tensor = w.path("t.txt");
    write_tensor(&t, &tensor).unwrap();

    let o = run(&[
        "oracle",
        s(&tensor),
        "--max-rank",
        "3",
        "--out",
        s(&w.path("witness.txt")),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).trim(), "rank=2");
    let v = run(&["verify", s(&w.path("witness.txt")), s(&tensor)]);
    assert_eq!(stdout(&v).trim(), "decomposition=pass rank=2");

    let out = w.path("dec");
    let d = run(&[
        "decompose",
        s(&tensor),
        "--oracle",
        "--simulations",
        "50",
        "--out",
        s(&out),
    ]);
    assert_eq!(code(&d), 0, "{}", String::from_utf8_lossy(&d.stderr));
    assert_eq!(stdout(&d).trim(), "rank=2");
    let v = run(&["verify", s(&out.join("certificate.txt")), s(&tensor)]);
    assert_eq!(code(&v), 0);
}

#[test]
fn strassen_certificate_verifies_and_renders() {
    let w = Work::new();
    let cert = w.write_cert("strassen.txt", 4, strassen_2x2());
    let v = run(&["verify", s(&cert), "matmul:2,2,2", "--trials", "50"]);
    assert_eq!(code(&v), 0);
    assert_eq!(
        stdout(&v),
        "decomposition=pass rank=7\nmatmul_algorithm=pass trials=50\n"
    );
    let r = run(&["render", s(&cert), "matmul:2,2,2"]);
    assert_eq!(code(&r), 0);
    let text = stdout(&r);
    assert_eq!(text.lines().filter(|l| l.starts_with('m')).count(), 7);
}

#[test]
fn failed_verification_exits_one() {
    let w = Work::new();
    let mut factors = strassen_2x2();
    factors.pop();
    let cert = w.write_cert("short.txt", 4, factors);
    let v = run(&["verify", s(&cert), "matmul:2,2,2"]);
    assert_eq!(code(&v), 1);
    assert!(stdout(&v).starts_with("decomposition=fail first_mismatch=["));
    assert!(stdout(&v).contains("matmul_algorithm=fail"));
    let r = run(&["render", s(&cert), "matmul:2,2,2"]);
    assert_eq!(code(&r), 1);
    assert!(r.stdout.is_empty());
}

#[test]
fn usage_errors_exit_two() {
    let w = Work::new();
    let cert = w.write_cert("strassen.txt", 4, strassen_2x2());
    assert_eq!(code(&run(&["verify", s(&cert), "matmul:1,2,2"])), 2);
    assert_eq!(code(&run(&["verify", s(&w.path("missing.txt")), "matmul:2,2,2"])), 2);

    let bad = w.path("bad.toml");
    fs::write(&bad, "[gen]\nsparsty = 0.5\n").unwrap();
    let out = w.path("g");
    assert_eq!(code(&run(&["gen", "--config", s(&bad), "--out", s(&out)])), 2);
    assert_eq!(code(&run(&["decompose", "matmul:2,2,2", "--out", s(&out)])), 2);
}

#[test]
fn corrupt_inputs_exit_three() {
    let w = Work::new();
    assert_eq!(code(&w.gen("gen", 1)), 0);
    let dataset = w.path("gen/dataset.txt");
    let text = fs::read_to_string(&dataset).unwrap();
    // Flip the sign of the first coefficient in the first factor line.
    let pos = text.find("u:").unwrap() + 2;
    let mut tampered = text.clone();
    if tampered[pos..].starts_with('-') {
        tampered.remove(pos);
    } else {
        tampered.insert(pos, '-');
    }
    let tampered_path = w.path("tampered.txt");
    fs::write(&tampered_path, tampered).unwrap();
    assert_eq!(code(&w.train(&tampered_path, "t", &[])), 3);

    let cert = w.path("garbage.txt");
    fs::write(&cert, "S=4 R=1 F=1\nu:1,0 v:1 w:x\n").unwrap();
    assert_eq!(code(&run(&["verify", s(&cert), "matmul:2,2,2"])), 3);

    let ckpt = w.path("short.ckpt");
    fs::write(&ckpt, b"MMSCKPT\0\x01").unwrap();
    let out = w.path("d");
    assert_eq!(
        code(&run(&[
            "decompose",
            "matmul:2,2,2",
            "--checkpoint",
            s(&ckpt),
            "--out",
            s(&out)
        ])),
        3
    );
}

#[test]
fn runs_are_byte_identical() {
    let w = Work::new();
    assert_eq!(code(&w.gen("a", 9)), 0);
    assert_eq!(code(&w.gen("b", 9)), 0);
    let read = |p: &str| fs::read(w.path(p)).unwrap();
    assert_eq!(read("a/dataset.txt"), read("b/dataset.txt"));
    assert_eq!(code(&w.gen("c", 10)), 0);
    assert_ne!(read("a/dataset.txt"), read("c/dataset.txt"));

    let dataset = w.path("a/dataset.txt");
    assert_eq!(code(&w.train(&dataset, "ta", &[])), 0);
    assert_eq!(code(&w.train(&dataset, "tb", &[])), 0);
    assert_eq!(read("ta/model.ckpt"), read("tb/model.ckpt"));
    assert_eq!(read("ta/train.log"), read("tb/train.log"));

    let ckpt = w.path("ta/model.ckpt");
    let mut logs = Vec::new();
    for name in ["da", "db"] {
        let out = w.path(name);
        run(&[
            "decompose",
            "matmul:2,2,2",
            "--config",
            s(&w.config),
            "--checkpoint",
            s(&ckpt),
            "--out",
            s(&out),
        ]);
        logs.push(fs::read(out.join("episode.log")).unwrap());
    }
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn resume_continues_after_recorded_epoch() {
    let w = Work::new();
    assert_eq!(code(&w.gen("gen", 2)), 0);
    let dataset = w.path("gen/dataset.txt");
    assert_eq!(code(&w.train(&dataset, "first", &["--epochs", "2"])), 0);
    let ckpt = w.path("first/model.ckpt");
    let r = w.train(&dataset, "second", &["--epochs", "3", "--resume", s(&ckpt)]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let log = fs::read_to_string(w.path("second/train.log")).unwrap();
    assert!(log.lines().all(|l| l.starts_with("epoch=3 ")));
    assert!(!log.is_empty());
}
