use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gdsrec::cli;
use gdsrec::diffcore;

fn gdsrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gdsrec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "failed: {}", stderr(&o));
    stdout(&o)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

const TOY_RATINGS: &str = "u1 i1 5\nu1 i2 3\nu2 i1 4\nu3 i2 2\nu3 i3 1\n";
const TOY_TRUST: &str = "u1 u2\nu2 u1\nu3 u1\nu1 u1\nu9 u1\n";

#[test]
fn stats_matches_hand_tally() {
    let dir = tempfile::tempdir().unwrap();
    let r = write(dir.path(), "r.txt", TOY_RATINGS);
    let t = write(dir.path(), "t.txt", TOY_TRUST);
    let export = dir.path().join("graph.txt");
    let out = ok(gdsrec(&[
        "stats", "--ratings", p(&r), "--trust", p(&t), "--export", p(&export),
    ]));
    for line in [
        "users=3",
        "items=3",
        "ratings=5",
        "trust_pairs=3",
        "dropped_trust=self_loops:1 unknown_users:1 duplicates:0",
        "global_mean=3.0000",
    ] {
        assert!(out.lines().any(|l| l == line), "missing {line:?} in\n{out}");
    }
    // every trust pair co-rates one item within δ = 1
    assert!(out.contains("[strength]\n2\t3\n"), "{out}");
    assert!(out.contains("[out_degree]\n1\t3\n"), "{out}");
    assert!(out.contains("[ratings]\n1\t1\n2\t1\n3\t1\n4\t1\n5\t1\n"), "{out}");
    let mut graph: Vec<String> = fs::read_to_string(&export)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    graph.sort();
    assert_eq!(graph, ["u1 u2 2", "u2 u1 2", "u3 u1 2"]);
}

#[test]
fn stats_without_trust_has_only_zero_degrees() {
    let dir = tempfile::tempdir().unwrap();
    let r = write(dir.path(), "r.txt", TOY_RATINGS);
    let t = write(dir.path(), "t.txt", "");
    let out = ok(gdsrec(&["stats", "--ratings", p(&r), "--trust", p(&t)]));
    assert!(out.contains("[out_degree]\n0\t3\n"), "{out}");
    assert!(out.contains("[strength]\n[out_degree]"), "{out}");
}

#[test]
fn malformed_input_reports_line_and_data_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let r = write(dir.path(), "r.txt", "u1 i1 5\nu2 i2\n");
    let o = gdsrec(&["stats", "--ratings", p(&r)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("r.txt:2:"), "{}", stderr(&o));

    let r = write(dir.path(), "r2.txt", "u1 i1 9\n");
    let o = gdsrec(&["stats", "--ratings", p(&r)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rating out of range"));
}

#[test]
fn usage_and_config_errors_exit_one() {
    assert_eq!(gdsrec(&["train", "--no-such-flag", "1"]).status.code(), Some(1));
    assert_eq!(gdsrec(&[]).status.code(), Some(1));
    assert_eq!(gdsrec(&["--help"]).status.code(), Some(0));
    assert_eq!(gdsrec(&["--version"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let r = write(dir.path(), "r.txt", TOY_RATINGS);
    let o = gdsrec(&["train", "--ratings", p(&r), "--task", "ranking", "--threshold", "7"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    let cfg = write(dir.path(), "bad.cfg", "colour=blue\n");
    let o = gdsrec(&["train", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("colour"));
    let o = gdsrec(&["train"]);
    assert_eq!(o.status.code(), Some(1), "missing ratings path is a config error");
}

#[test]
fn synth_is_deterministic_and_in_scale() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(gdsrec(&[
            "synth", "--users", "40", "--items", "30", "--ratings", "300", "--trust", "80",
            "--seed", "5", "--out", p(out),
        ]));
    }
    for f in ["ratings.txt", "trust.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap());
    }
    let ratings = fs::read_to_string(a.join("ratings.txt")).unwrap();
    assert_eq!(ratings.lines().count(), 300);
    for line in ratings.lines() {
        let r: f64 = line.split_whitespace().nth(2).unwrap().parse().unwrap();
        assert!((1.0..=5.0).contains(&r));
    }
    let o = gdsrec(&[
        "synth", "--users", "2", "--items", "2", "--ratings", "9", "--trust", "0", "--out",
        p(&a),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

struct Run {
    _dir: tempfile::TempDir,
    data: PathBuf,
    run: PathBuf,
}

fn trained(extra: &[&str]) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(gdsrec(&[
        "synth", "--users", "30", "--items", "20", "--ratings", "240", "--trust", "60",
        "--seed", "2", "--out", p(&data),
    ]));
    let run = dir.path().join("run");
    let ratings = data.join("ratings.txt");
    let trust = data.join("trust.txt");
    let mut args = vec![
        "train", "--ratings", p(&ratings), "--trust", p(&trust), "--out_dir", p(&run),
        "--epochs", "4", "--dim", "8", "--attn_hidden", "8", "--batch_size", "32", "--quiet",
    ];
    args.extend_from_slice(extra);
    ok(gdsrec(&args));
    Run {
        _dir: dir,
        data,
        run,
    }
}

fn record(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect()
}

#[test]
fn train_writes_run_directory_and_evaluate_agrees() {
    let r = trained(&[]);
    for f in [
        cli::CONFIG_FILE,
        cli::MANIFEST_FILE,
        cli::CHECKPOINT_FILE,
        cli::METRICS_FILE,
        cli::TRAIN_REPORT_FILE,
    ] {
        assert!(r.run.join(f).exists(), "missing {f}");
    }
    let metrics = fs::read_to_string(r.run.join(cli::METRICS_FILE)).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("epoch,train_loss,val_metric,seconds"));
    let rows: Vec<_> = lines.collect();
    assert!(!rows.is_empty() && rows.len() <= 4);
    assert!(rows[0].starts_with("1,"));
    assert_eq!(rows[0].split(',').count(), 4);

    let evaluated = ok(gdsrec(&["evaluate", "--run", p(&r.run)]));
    let stored = fs::read_to_string(r.run.join(cli::TRAIN_REPORT_FILE)).unwrap();
    assert_eq!(record(&evaluated), record(&stored));
    let rec = record(&evaluated);
    let get = |k: &str| rec.iter().find(|(key, _)| key == k).unwrap().1.parse::<f64>().unwrap();
    assert!(get("mae") <= get("rmse"));
    assert_eq!(get("n_examples"), 48.0);
}

#[test]
fn predict_matches_stored_predictions_and_repeats() {
    let r = trained(&[]);
    ok(gdsrec(&["evaluate", "--run", p(&r.run)]));
    let preds = fs::read_to_string(r.run.join(cli::PREDICTIONS_FILE)).unwrap();
    for line in preds.lines().skip(1).take(5) {
        let f: Vec<&str> = line.split('\t').collect();
        let out = ok(gdsrec(&["predict", "--run", p(&r.run), "--user", f[0], "--item", f[1]]));
        assert_eq!(out.trim(), format!("rating={}", f[3]));
        let again = ok(gdsrec(&["predict", "--run", p(&r.run), "--user", f[0], "--item", f[1]]));
        assert_eq!(out, again);
    }
}

#[test]
fn unknown_ids_predict_as_cold_with_warning() {
    let r = trained(&[]);
    let o = gdsrec(&["predict", "--run", p(&r.run), "--user", "stranger", "--item", "thing"]);
    assert!(o.status.success());
    assert!(stderr(&o).contains("unknown user"), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("rating="));
}

#[test]
fn zeroed_checkpoint_predicts_global_mean_for_cold_pair() {
    let r = trained(&[]);
    let loaded = cli::load_run(&r.run, &[]).unwrap();
    let mut model = loaded.model.clone();
    model.zero_params();
    diffcore::save(&model.store, &r.run.join(cli::CHECKPOINT_FILE)).unwrap();
    let pred = cli::cmd_predict(&r.run, "stranger", "thing").unwrap();
    assert_eq!(pred.rating, loaded.run.ctx.stats.global_mean());
    assert!(pred.cold_user && pred.cold_item);
}

#[test]
fn ranking_predict_prints_probability() {
    let r = trained(&["--task", "ranking", "--threshold", "4"]);
    let out = ok(gdsrec(&["predict", "--run", p(&r.run), "--user", "0", "--item", "1"]));
    let prob: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("probability="))
        .expect("probability line")
        .parse()
        .unwrap();
    assert!(prob > 0.0 && prob < 1.0);
    let rec = record(&ok(gdsrec(&["evaluate", "--run", p(&r.run)])));
    assert!(rec.iter().any(|(k, _)| k == "auc"));
}

#[test]
fn mismatched_dims_are_a_manifest_error() {
    let r = trained(&[]);
    let o = gdsrec(&["evaluate", "--run", p(&r.run), "--dim", "9"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("manifest"), "{}", stderr(&o));
}

#[test]
fn same_seed_gives_identical_checkpoints_and_config_round_trips() {
    let a = trained(&[]);
    let b = trained(&[]);
    let ckpt = |r: &Run| fs::read(r.run.join(cli::CHECKPOINT_FILE)).unwrap();
    assert_eq!(ckpt(&a), ckpt(&b));

    // the written config reproduces the run
    let rerun = a.data.join("rerun");
    ok(gdsrec(&[
        "train",
        "--config",
        p(&a.run.join(cli::CONFIG_FILE)),
        "--out_dir",
        p(&rerun),
        "--quiet",
    ]));
    assert_eq!(fs::read(rerun.join(cli::CHECKPOINT_FILE)).unwrap(), ckpt(&a));

    let other = trained(&["--seed", "1"]);
    assert_ne!(ckpt(&other), ckpt(&a));
}
