use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gridpipe::pipeline::{compile, Grid, PipelineDocument, PipelineStep};
use gridpipe::primitives::{Catalog, PrimitiveId};
use gridpipe::tabular::write_csv_string;
use gridpipe::toy;

fn gridpipe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridpipe"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn example_document() -> PipelineDocument {
    let catalog = Catalog::standard();
    let steps: [(usize, u16, &[usize]); 7] = [
        (1, 1, &[0]),
        (3, 8, &[1]),
        (5, 13, &[3]),
        (7, 2, &[0]),
        (8, 5, &[7]),
        (11, 14, &[8, 1]),
        (13, 3, &[0]),
    ];
    let mut g = Grid::new(3, 3);
    while let Some(cell) = g.cursor() {
        match steps.iter().find(|s| s.0 == cell) {
            Some(&(_, p, inputs)) => g
                .place(
                    PipelineStep {
                        primitive: PrimitiveId(p),
                        inputs: inputs.to_vec(),
                    },
                    &catalog,
                )
                .unwrap(),
            None => g.place_blank().unwrap(),
        }
    }
    PipelineDocument::from_dag(&compile(&g), &catalog)
}

/// Trains a tiny checkpoint on one CSV and returns (data path, checkpoint).
fn trained(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let corpus = dir.join("corpus");
    fs::create_dir_all(&corpus).unwrap();
    let data = corpus.join("blobs.csv");
    fs::write(&data, write_csv_string(&toy::blobs(90, 3)).unwrap()).unwrap();
    let ckpt = dir.join("ckpt");
    let o = gridpipe(&["train", "--corpus", path(&corpus), "--episodes", "4", "--out", path(&ckpt), "--seed", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    (data, ckpt)
}

#[test]
fn inspect_counts_the_example_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("p.json");
    fs::write(&file, example_document().to_json()).unwrap();
    let dot = dir.path().join("p.dot");
    let o = gridpipe(&["inspect", "--pipeline", path(&file), "--dot", path(&dot)]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert!(out.contains("vertices: 8"), "{out}");
    assert!(out.contains("edges: 8"), "{out}");
    assert!(fs::read_to_string(&dot).unwrap().starts_with("digraph"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(gridpipe(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(gridpipe(&["search", "--data", "x.csv"]).status.code(), Some(1));
    assert_eq!(gridpipe(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "a,b\n1,2\n").unwrap();
    let o = gridpipe(&["train", "--corpus", path(dir.path()), "--episodes", "1", "--out", path(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let o = gridpipe(&["inspect", "--pipeline", path(&dir.path().join("missing.json"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_writes_checkpoint_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ckpt) = trained(dir.path());
    assert!(ckpt.join("manifest.json").exists());
    let metrics = fs::read_to_string(ckpt.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 5);
    assert!(metrics.lines().skip(1).all(|l| l.contains(",blobs,")));
}

#[test]
fn search_is_deterministic_and_eval_modes_agree_at_k1() {
    let dir = tempfile::tempdir().unwrap();
    let (data, ckpt) = trained(dir.path());
    let run = |out: &str| {
        let out = dir.path().join(out);
        let o = gridpipe(&[
            "search", "--data", path(&data), "--ckpt", path(&ckpt), "--k", "3", "--beta", "0", "--episodes", "12",
            "--out", path(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        fs::read_to_string(out.join("scores.csv")).unwrap()
    };
    let (a, b) = (run("s1"), run("s2"));
    assert!(a.starts_with("pipeline_id,KScore,Q_final,Qnorm,Score,rank"));
    assert_eq!(a, b);

    let eval = |mode: &str| {
        let o = gridpipe(&[
            "eval", "--data", path(&data), "--ckpt", path(&ckpt), "--mode", mode, "--k", "1", "--episodes", "12",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        stdout(&o).lines().find(|l| l.starts_with("accuracy:")).unwrap().to_string()
    };
    assert_eq!(eval("vanilla"), eval("ensemble"));
}
