use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coupled-rec"))
        .args(args)
        .output()
        .unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn out_path(dir: &TempDir, name: &str) -> (PathBuf, String) {
    let path = dir.path().join(name);
    let s = path.to_string_lossy().into_owned();
    (path, s)
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap()
}

const FOUR_OBJECTS: &str = "id,j,k\no0,x,a\no1,x,b\no2,y,a\no3,y,a\n";

#[test]
fn help_exits_zero() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["sim", "cluster", "predict", "train-mf", "eval", "bench"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
    assert_eq!(run(&["predict", "--help"]).status.code(), Some(0));
}

#[test]
fn missing_file_is_a_validation_error() {
    let out = run(&["sim", "--attrs", "/no/such/attrs.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("/no/such/attrs.csv"));
}

#[test]
fn sim_writes_hand_computed_row() {
    let dir = TempDir::new().unwrap();
    let attrs = write(&dir, "four.csv", FOUR_OBJECTS);
    let (path, out) = out_path(&dir, "sim.csv");
    assert_eq!(
        run(&["sim", "--attrs", &attrs, "--out", &out])
            .status
            .code(),
        Some(0)
    );
    let text = read(&path);
    assert!(text.starts_with("id_a,id_b,cis\n"));
    assert!(text.lines().any(|l| l == "o0,o2,0.850000000000"), "{text}");
    assert_eq!(text.lines().count(), 1 + 4 * 5 / 2);
}

fn planted_table() -> String {
    let mut text = String::from("id,a,b,c,d\n");
    for o in 0..12 {
        let c = o / 4;
        let row: Vec<String> = (0..4).map(|j| format!("c{c}v{j}")).collect();
        text.push_str(&format!("o{o},{}\n", row.join(",")));
    }
    text
}

#[test]
fn cluster_recovers_blocks_and_handles_one_cluster() {
    let dir = TempDir::new().unwrap();
    let attrs = write(&dir, "p.csv", &planted_table());
    let (path, out) = out_path(&dir, "clusters.csv");
    let (modes_path, modes) = out_path(&dir, "modes.csv");
    let status = run(&[
        "--seed",
        "3",
        "cluster",
        "--attrs",
        &attrs,
        "-k",
        "3",
        "--out",
        &out,
        "--modes-out",
        &modes,
    ]);
    assert_eq!(status.status.code(), Some(0), "{}", stderr(&status));
    let text = read(&path);
    let labels: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(labels.len(), 12);
    for block in labels.chunks(4) {
        assert!(block.iter().all(|l| *l == block[0]));
    }
    let distinct: std::collections::HashSet<&&str> = labels.iter().collect();
    assert_eq!(distinct.len(), 3);
    assert!(read(&modes_path).starts_with("cluster,a,b,c,d\n"));

    run(&["cluster", "--attrs", &attrs, "-k", "1", "--out", &out]);
    assert!(read(&path).lines().skip(1).all(|l| l.ends_with(",0")));
    assert_eq!(
        run(&["cluster", "--attrs", &attrs, "-k", "13"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn predict_falls_back_to_user_means() {
    let dir = TempDir::new().unwrap();
    let ratings = write(
        &dir,
        "r.csv",
        "user_id,item_id,rating\nu0,i0,4\nu0,i1,2\nu1,i2,5\n",
    );
    let pairs = write(
        &dir,
        "p.csv",
        "user_id,item_id\nu0,i2\nu1,i0\nstranger,i1\n",
    );
    let (path, out) = out_path(&dir, "pred.csv");
    let status = run(&[
        "predict",
        "--ratings",
        &ratings,
        "--pairs",
        &pairs,
        "--algo",
        "ucf",
        "--out",
        &out,
    ]);
    assert_eq!(status.status.code(), Some(0), "{}", stderr(&status));
    assert_eq!(
        read(&path),
        "user_id,item_id,prediction\nu0,i2,3.000000\nu1,i0,5.000000\nstranger,i1,2.000000\n"
    );
}

#[test]
fn unknown_algorithm_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let ratings = write(&dir, "r.csv", "user_id,item_id,rating\nu0,i0,4\n");
    let pairs = write(&dir, "p.csv", "user_id,item_id\nu0,i0\n");
    let out = run(&[
        "predict",
        "--ratings",
        &ratings,
        "--pairs",
        &pairs,
        "--algo",
        "knn",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("knn"));
}

#[test]
fn malformed_ratings_report_the_line() {
    let dir = TempDir::new().unwrap();
    let ratings = write(&dir, "r.csv", "user_id,item_id,rating\nu0,i0,4\nu1,i0,9\n");
    let out = run(&["eval", "--ratings", &ratings, "--algo", "ucf"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains('3'), "{}", stderr(&out));
}

fn hundred_ratings() -> String {
    let mut text = String::from("user_id,item_id,rating\n");
    for u in 0..10 {
        for i in 0..10 {
            text.push_str(&format!("u{u},i{i},{}\n", 1 + (u * 3 + i * 7) % 5));
        }
    }
    text
}

#[test]
fn eval_reports_folds_and_aggregate() {
    let dir = TempDir::new().unwrap();
    let ratings = write(&dir, "r.csv", &hundred_ratings());
    let (path, out) = out_path(&dir, "eval.csv");
    let status = run(&[
        "eval",
        "--ratings",
        &ratings,
        "--algo",
        "icf,basemf",
        "--folds",
        "5",
        "--out",
        &out,
    ]);
    assert_eq!(status.status.code(), Some(0), "{}", stderr(&status));
    let text = read(&path);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "algo,fold,rmse,mae,n_test,seconds");
    assert_eq!(lines.len(), 1 + 2 * 6);
    assert!(lines[6].starts_with("icf,all,") && lines[12].starts_with("basemf,all,"));
    assert!(lines[6].split(',').nth(4) == Some("100"));
}

#[test]
fn saved_model_reproduces_training_predictions() {
    let dir = TempDir::new().unwrap();
    let ratings = write(&dir, "r.csv", &hundred_ratings());
    let social = write(
        &dir,
        "s.csv",
        "src,dst,weight\nu0,u1,1\nu1,u0,1\nu2,u3,0.5\n",
    );
    let pairs = write(&dir, "p.csv", "user_id,item_id\nu0,i0\nu4,i9\nu9,i3\n");
    let (model_path, model) = out_path(&dir, "model.txt");
    let (a_path, a) = out_path(&dir, "a.csv");
    let (b_path, b) = out_path(&dir, "b.csv");
    let common = ["--seed", "4"];
    let train = run(&[
        &common[..],
        &[
            "train-mf",
            "--ratings",
            &ratings,
            "--social",
            &social,
            "--coupled",
            "true",
            "-d",
            "3",
            "--out",
            &model,
        ],
    ]
    .concat());
    assert_eq!(train.status.code(), Some(0), "{}", stderr(&train));
    assert!(read(&model_path).starts_with("coupled-rec factor-model v1\n"));
    let direct = run(&[
        &common[..],
        &[
            "predict",
            "--ratings",
            &ratings,
            "--social",
            &social,
            "--pairs",
            &pairs,
            "--algo",
            "cmf",
            "-d",
            "3",
            "--out",
            &a,
        ],
    ]
    .concat());
    assert_eq!(direct.status.code(), Some(0), "{}", stderr(&direct));
    let saved = run(&[
        "predict",
        "--ratings",
        &ratings,
        "--social",
        &social,
        "--pairs",
        &pairs,
        "--algo",
        "cmf",
        "--model",
        &model,
        "--out",
        &b,
    ]);
    assert_eq!(saved.status.code(), Some(0), "{}", stderr(&saved));
    assert_eq!(read(&a_path), read(&b_path));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = TempDir::new().unwrap();
    let attrs = write(&dir, "p.csv", &planted_table());
    let config = write(
        &dir,
        "run.conf",
        "# clustering defaults\nk = 1\nmax_iter = 5\n",
    );
    let (path, out) = out_path(&dir, "c.csv");
    run(&[
        "--config", &config, "cluster", "--attrs", &attrs, "--out", &out,
    ]);
    assert!(read(&path).lines().skip(1).all(|l| l.ends_with(",0")));
    run(&[
        "--config", &config, "cluster", "--attrs", &attrs, "-k", "3", "--out", &out,
    ]);
    let labels: std::collections::HashSet<String> = read(&path)
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().to_owned())
        .collect();
    assert_eq!(labels.len(), 3);

    let bad = write(&dir, "bad.conf", "k 3\n");
    assert_eq!(
        run(&["--config", &bad, "cluster", "--attrs", &attrs])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn bench_emits_one_row_per_algorithm_and_k() {
    let dir = TempDir::new().unwrap();
    let ratings = write(&dir, "r.csv", &hundred_ratings());
    let items: String = std::iter::once("id,genre\n".to_string())
        .chain((0..10).map(|i| format!("i{i},g{}\n", i % 3)))
        .collect();
    let items = write(&dir, "items.csv", &items);
    let (path, out) = out_path(&dir, "bench.csv");
    let status = run(&[
        "bench",
        "--ratings",
        &ratings,
        "--item-attrs",
        &items,
        "--algo",
        "ucf,ck-cf,slope1",
        "--ks",
        "1,2,3",
        "--requests",
        "50",
        "--warmup",
        "5",
        "--out",
        &out,
    ]);
    assert_eq!(status.status.code(), Some(0), "{}", stderr(&status));
    let text = read(&path);
    assert!(text.starts_with("algo,k,requests,seconds,throughput,max_candidates\n"));
    assert_eq!(text.lines().count(), 1 + 9);
}

#[test]
fn zero_threads_rejected() {
    assert_eq!(
        run(&["--threads", "0", "sim", "--attrs", "x.csv"])
            .status
            .code(),
        Some(2)
    );
}
