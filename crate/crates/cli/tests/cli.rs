mod common;

use common::*;
use crowdtruth::checkpoint::{Checkpoint, Fitted};
use crowdtruth::io::{load_responses, write_responses, DataFormat};
use crowdtruth_core::dataset::{ResponseMatrix, ResponseRecord};
use tempfile::tempdir;

const QUICK: [&str; 4] = ["--outer-iters", "6", "--burn-in", "2"];

fn big_matrix() -> ResponseMatrix {
    let mut records = Vec::new();
    for i in 0..100 {
        for j in 0..100 {
            let option = ["yes", "no", "maybe, later", "\"quoted\""][(i * 7 + j * 3) % 4];
            records.push(ResponseRecord::new(format!("worker {i}"), format!("q-{j}"), option));
        }
    }
    ResponseMatrix::from_records(&records, None).unwrap()
}

#[test]
fn ten_thousand_rows_round_trip_through_both_formats() {
    let dir = tempdir().unwrap();
    let data = big_matrix();
    assert_eq!(data.num_responses(), 10_000);
    let options: Vec<String> = data.options().to_vec();
    for (name, format) in [("r.csv", DataFormat::Csv), ("r.jsonl", DataFormat::Jsonl)] {
        let path = dir.path().join(name);
        write_responses(&path, &data, format).unwrap();
        let back = load_responses(&path, None, Some(&options)).unwrap();
        assert_eq!(back, data);
    }
}

#[test]
fn every_command_is_byte_reproducible() {
    let dir = tempdir().unwrap();
    let (data, gold) = simulate(&dir.path().join("sim"), 3, &[]);
    let data = path_str(&data);
    let gold = path_str(&gold);
    let commands: Vec<Vec<&str>> = vec![
        vec!["simulate", "--m", "2", "--workers", "8", "--questions", "10", "--seed", "5"],
        vec!["simulate", "--generator", "glad", "--workers", "8", "--questions", "10", "--seed", "5", "--format", "jsonl"],
        [&["fit", "--data", data, "--m", "2"][..], &QUICK].concat(),
        vec!["fit", "--data", data, "--model", "ds"],
        [&["predict-truth", "--data", data, "--m", "2"][..], &QUICK].concat(),
        [&["predict-worker", "--data", data, "--m", "2", "--seed", "9"][..], &QUICK].concat(),
        vec!["predict-worker", "--data", data, "--model", "glad"],
        [&["subjectivity", "--data", data, "--m", "2", "--t-samples", "500"][..], &QUICK].concat(),
        [&["validate", "--data", data, "--m", "2", "--grid", r#"{"m":[1,2]}"#, "--repetitions", "2"][..], &QUICK].concat(),
        vec!["evaluate", "--data", data, "--gold", gold, "--model", "mv"],
        [&["evaluate", "--data", data, "--gold", gold, "--m", "2"][..], &QUICK].concat(),
    ];
    for (n, args) in commands.iter().enumerate() {
        let outs: Vec<_> = (0..2)
            .map(|rep| {
                let out = dir.path().join(format!("c{n}-{rep}"));
                let mut full = args.clone();
                full.extend(["--out", path_str(&out)]);
                let stdout = run_ok(&full).stdout;
                (snapshot(&out), String::from_utf8(stdout).unwrap().lines().next().map(str::to_owned))
            })
            .collect();
        assert!(!outs[0].0.is_empty(), "{args:?} wrote nothing");
        assert_eq!(outs[0].0, outs[1].0, "{args:?} is not reproducible");
        assert_eq!(outs[0].1, outs[1].1);
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempdir().unwrap();
    let (data, _) = simulate(&dir.path().join("sim"), 4, &[]);
    let mut snaps = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("t{threads}"));
        let out_run = bin()
            .env("CROWDTRUTH_THREADS", threads)
            .args(["validate", "--data", path_str(&data), "--m", "2", "--grid", r#"{"m":[1,2]}"#, "--repetitions", "3"])
            .args(QUICK)
            .args(["--out", path_str(&out)])
            .output()
            .unwrap();
        assert!(out_run.status.success());
        snaps.push(snapshot(&out));
    }
    assert_eq!(snaps[0], snaps[1]);
}

#[test]
fn missing_dataset_exits_with_code_two() {
    let dir = tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = bin()
        .args(["fit", "--data", path_str(&missing), "--m", "2", "--out", path_str(dir.path())])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dataset not found"));
}

#[test]
fn checkpoint_for_other_data_is_rejected() {
    let dir = tempdir().unwrap();
    let (a, _) = simulate(&dir.path().join("a"), 1, &[]);
    let (b, _) = simulate(&dir.path().join("b"), 2, &[]);
    let fit_dir = dir.path().join("fit");
    run_ok(&[&["fit", "--data", path_str(&a), "--m", "2", "--out", path_str(&fit_dir)][..], &QUICK].concat());
    let cp = fit_dir.join("checkpoint.json");
    let out = bin()
        .args(["predict-truth", "--data", path_str(&b), "--checkpoint", path_str(&cp), "--out"])
        .arg(dir.path().join("pt"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not match the dataset"));
}

#[test]
fn checkpoint_reproduces_a_fresh_fit() {
    let dir = tempdir().unwrap();
    let (data, _) = simulate(&dir.path().join("sim"), 6, &[]);
    let data = path_str(&data);
    let fit_dir = dir.path().join("fit");
    run_ok(&[&["fit", "--data", data, "--m", "2", "--seed", "11", "--out", path_str(&fit_dir)][..], &QUICK].concat());
    let cp = fit_dir.join("checkpoint.json");
    let from_cp = dir.path().join("from-cp");
    let fresh = dir.path().join("fresh");
    run_ok(&["predict-truth", "--data", data, "--checkpoint", path_str(&cp), "--out", path_str(&from_cp)]);
    run_ok(&[&["predict-truth", "--data", data, "--m", "2", "--seed", "11", "--out", path_str(&fresh)][..], &QUICK].concat());
    assert_eq!(snapshot(&from_cp), snapshot(&fresh));

    let loaded = Checkpoint::load(&cp).unwrap();
    assert_eq!(loaded.seed, 11);
    let resaved = dir.path().join("again.json");
    loaded.save(&resaved).unwrap();
    assert_eq!(Checkpoint::load(&resaved).unwrap(), loaded);
}

#[test]
fn flags_override_the_config_file_which_overrides_defaults() {
    let dir = tempdir().unwrap();
    let (data, _) = simulate(&dir.path().join("sim"), 7, &[]);
    let config = dir.path().join("run.json");
    let body = format!(
        r#"{{"data": {:?}, "m": 3, "alpha": 0.5, "seed": 42, "outer_iters": 6, "burn_in": 2}}"#,
        path_str(&data)
    );
    std::fs::write(&config, body).unwrap();
    let hp_of = |out: &std::path::Path| match Checkpoint::load(&out.join("checkpoint.json")).unwrap() {
        Checkpoint { fitted: Fitted::Sdr { hp, .. }, seed, .. } => (hp.num_preferences, hp.alpha[0], hp.mu_e, seed),
        other => panic!("unexpected model {:?}", other.fitted.kind()),
    };

    let from_file = dir.path().join("file");
    run_ok(&["fit", "--config", path_str(&config), "--out", path_str(&from_file)]);
    assert_eq!(hp_of(&from_file), (3, 0.5, 1.0, 42));

    let overridden = dir.path().join("flags");
    run_ok(&["fit", "--config", path_str(&config), "--m", "2", "--seed", "5", "--mu-e", "2", "--out", path_str(&overridden)]);
    assert_eq!(hp_of(&overridden), (2, 0.5, 2.0, 5));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempdir().unwrap();
    let config = dir.path().join("run.json");
    let (data, _) = simulate(&dir.path().join("sim"), 8, &[]);
    std::fs::write(&config, r#"{"m": 2, "mystery": 1}"#).unwrap();
    let out = bin()
        .args(["fit", "--data", path_str(&data), "--config", path_str(&config), "--out", path_str(dir.path())])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown configuration key `mystery`"));
}

#[test]
fn evaluate_without_gold_fails() {
    let dir = tempdir().unwrap();
    let (data, _) = simulate(&dir.path().join("sim"), 8, &[]);
    let out = bin()
        .args(["evaluate", "--data", path_str(&data), "--model", "mv", "--out", path_str(&dir.path().join("ev"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gold"));
    assert!(!dir.path().join("ev").join("metrics.json").exists());
}

#[test]
fn sdr_requires_the_number_of_preferences() {
    let dir = tempdir().unwrap();
    let (data, _) = simulate(&dir.path().join("sim"), 8, &[]);
    let out = bin().args(["fit", "--data", path_str(&data), "--out", path_str(dir.path())]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`m`"));
}

#[test]
fn commands_leave_their_inputs_untouched() {
    let dir = tempdir().unwrap();
    let (data, gold) = simulate(&dir.path().join("sim"), 9, &[]);
    let before = snapshot(&dir.path().join("sim"));
    let d = path_str(&data);
    let g = path_str(&gold);
    let fit_dir = dir.path().join("fit");
    run_ok(&[&["fit", "--data", d, "--m", "2", "--out", path_str(&fit_dir)][..], &QUICK].concat());
    let cp = fit_dir.join("checkpoint.json");
    let cp_before = std::fs::read(&cp).unwrap();
    let c = path_str(&cp);
    for (n, args) in [
        vec!["predict-truth", "--data", d, "--checkpoint", c],
        vec!["subjectivity", "--data", d, "--checkpoint", c, "--t-samples", "200"],
        vec!["evaluate", "--data", d, "--gold", g, "--checkpoint", c],
        [&["predict-worker", "--data", d, "--m", "2"][..], &QUICK].concat(),
    ]
    .into_iter()
    .enumerate()
    {
        let out = dir.path().join(format!("o{n}"));
        run_ok(&[&args[..], &["--out", path_str(&out)]].concat());
    }
    assert_eq!(snapshot(&dir.path().join("sim")), before);
    assert_eq!(std::fs::read(&cp).unwrap(), cp_before);
}

#[test]
fn jsonl_input_gives_the_same_fit_as_csv() {
    let dir = tempdir().unwrap();
    let (csv, _) = simulate(&dir.path().join("sim"), 10, &[]);
    let matrix = load_responses(&csv, None, None).unwrap();
    let jsonl = dir.path().join("r.jsonl");
    write_responses(&jsonl, &matrix, DataFormat::Jsonl).unwrap();
    let fit = |input: &std::path::Path, out: &str| {
        let out = dir.path().join(out);
        run_ok(&[&["fit", "--data", path_str(input), "--m", "2", "--out", path_str(&out)][..], &QUICK].concat());
        snapshot(&out)
    };
    assert_eq!(fit(&csv, "a"), fit(&jsonl, "b"));
}
