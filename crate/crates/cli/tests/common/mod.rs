#![allow(dead_code)]

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use nel_core::evaluation::GoldDocument;
use nel_core::synthetic::{SyntheticConfig, SyntheticWorld};

pub fn nel() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nel"));
    cmd.env("RUST_LOG", "warn");
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("NEL_")) {
        cmd.env_remove(k);
    }
    cmd
}

pub fn run(args: &[&str]) -> Output {
    nel().args(args).output().expect("binary runs")
}

pub fn run_with_stdin(args: &[&str], stdin: &str) -> Output {
    let mut child = nel()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

pub fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

pub fn write_dataset(path: &Path, docs: &[GoldDocument]) {
    let mut f = std::fs::File::create(path).unwrap();
    for d in docs {
        writeln!(f, "{}", serde_json::to_string(d).unwrap()).unwrap();
    }
}

/// A trained engine on disk, built through the command-line tool.
pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub world: SyntheticWorld,
}

impl Fixture {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn p(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    pub fn model(&self) -> String {
        self.p("model.bin")
    }

    pub fn test_documents(&self) -> &[GoldDocument] {
        &self.world.documents[45..]
    }
}

pub fn build() -> Fixture {
    let world = SyntheticWorld::generate(&SyntheticConfig {
        items: 160,
        clusters: 8,
        documents: 60,
        seed: 3,
        ..Default::default()
    });
    let dir = tempfile::tempdir().unwrap();
    let fx = Fixture { dir, world };

    let mut dump = String::from("[\n");
    let lines = fx.world.dump_lines();
    for (i, l) in lines.iter().enumerate() {
        dump.push_str(l);
        dump.push_str(if i + 1 < lines.len() { ",\n" } else { "\n" });
    }
    dump.push_str("]\n");
    std::fs::write(fx.path("dump.json"), dump).unwrap();
    write_dataset(&fx.path("train.jsonl"), &fx.world.documents[..45]);
    write_dataset(&fx.path("test.jsonl"), fx.test_documents());

    let store = fx.p("store");
    ok(&run(&["index", "--dump", &fx.p("dump.json"), "--out", &store]));
    ok(&run(&["pagerank", "--store", &store, "--out", &fx.p("pagerank.bin")]));
    ok(&run(&["train-lm", "--store", &store, "--out", &fx.p("lm.bin")]));
    ok(&run(&["build-dict", "--store", &store, "--out", &fx.p("dict.bin")]));
    ok(&run(&[
        "train",
        "--dataset",
        &fx.p("train.jsonl"),
        "--store",
        &store,
        "--dict",
        &fx.p("dict.bin"),
        "--lm",
        &fx.p("lm.bin"),
        "--pagerank",
        &fx.p("pagerank.bin"),
        "--out",
        &fx.model(),
        "--beta",
        "0.5",
        "--eta",
        "0.01",
        "--k",
        "3",
    ]));
    fx
}
