use std::path::Path;
use std::process::{Command, Output};

fn casii(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_casii")).args(args).output().expect("spawn casii")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_data(dir: &Path) -> std::path::PathBuf {
    let data = dir.join("d.csid");
    ok(&casii(&[
        "generate-data", "--out", p(&data), "--dim", "8", "--negatives", "8", "--positives", "8",
        "--instances", "10..20", "--witness-rate", "0.005..0.4", "--tumor-shift", "1.0", "--seed", "2",
    ]));
    data
}

#[test]
fn end_to_end_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let keys = dir.path().join("k.csik");
    let out = ok(&casii(&["build-keys", "--data", p(&data), "--t-max", "3", "--out", p(&keys)]));
    assert!(out.contains("from 8 negative bags"));

    let run_dir = dir.path().join("run");
    let out = ok(&casii(&[
        "train", "--data", p(&data), "--keys", p(&keys), "--out", p(&run_dir), "--runs", "3",
        "--max-epochs", "3", "--warmup", "1", "--latent-dim", "8", "--val-ratio", "0.25", "--lr", "0.01",
    ]));
    assert!(out.contains("selected run"));
    for k in 0..3 {
        let csv = std::fs::read_to_string(run_dir.join(format!("history_run{k}.csv"))).unwrap();
        assert!(csv.starts_with("epoch,loss_total,loss_ce,loss_bot,loss_top,val_auc\n"));
    }
    let model = run_dir.join("model.csim");
    assert!(model.exists());

    let csv = dir.path().join("m.csv");
    let out = ok(&casii(&[
        "eval", "--data", p(&data), "--keys", p(&keys), "--model", p(&model), "--group", "--csv", p(&csv),
    ]));
    for word in ["auc", "f1", "precision", "recall", "micro", "macro"] {
        assert!(out.to_lowercase().contains(word), "missing {word} in\n{out}");
    }
    assert!(std::fs::read_to_string(&csv).unwrap().lines().count() >= 2);

    let att = dir.path().join("a.csv");
    ok(&casii(&[
        "attend", "--data", p(&data), "--keys", p(&keys), "--model", p(&model), "--bag-id", "0", "--out", p(&att),
    ]));
    let text = std::fs::read_to_string(&att).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "attention_weight").expect("attention column");
    let sum: f64 = lines.map(|l| l.split(',').nth(col).unwrap().parse::<f64>().unwrap()).sum();
    assert!((sum - 1.0).abs() < 1e-9);

    let missing = casii(&[
        "attend", "--data", p(&data), "--keys", p(&keys), "--model", p(&model), "--bag-id", "999", "--out", p(&att),
    ]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn generate_is_deterministic_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let a = small_data(dir.path());
    let bytes_a = std::fs::read(&a).unwrap();
    let b = small_data(dir.path());
    assert_eq!(bytes_a, std::fs::read(b).unwrap());

    let bad = dir.path().join("bad.csid");
    let out = casii(&["generate-data", "--out", p(&bad), "--witness-rate", "0.5..0.1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!bad.exists());
    assert_eq!(String::from_utf8_lossy(&out.stderr).lines().count(), 1);
}

#[test]
fn config_file_is_read_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gen.cfg");
    std::fs::write(&cfg, "# small\ndim = 5\nn-negative-bags = 3\nn_positive_bags = 2\ninstances_per_bag = 4..6\n").unwrap();
    let data = dir.path().join("d.csid");
    let out = ok(&casii(&["generate-data", "--config", p(&cfg), "--negatives", "4", "--out", p(&data)]));
    assert!(out.contains("wrote 6 bags (D=5)"), "{out}");
}

#[test]
fn incompatible_inputs_are_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_data(dir.path());
    let other = dir.path().join("o.csid");
    ok(&casii(&["generate-data", "--out", p(&other), "--dim", "5", "--negatives", "3", "--positives", "3", "--instances", "5..8"]));
    let keys = dir.path().join("k.csik");
    ok(&casii(&["build-keys", "--data", p(&other), "--out", p(&keys)]));
    let out = casii(&["train", "--data", p(&data), "--keys", p(&keys), "--out", p(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(2));

    let junk = dir.path().join("junk");
    std::fs::write(&junk, b"garbage").unwrap();
    let out = casii(&["build-keys", "--data", p(&junk), "--out", p(&keys)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn group_metrics_need_instance_labels() {
    use casii::synthdata::{generate, save_dataset};
    use casii::{Dataset, InstanceBag, SynthConfig};

    let dir = tempfile::tempdir().unwrap();
    let ds = generate(&SynthConfig {
        dim: 6,
        n_negative_bags: 4,
        n_positive_bags: 4,
        instances_per_bag: (6, 9),
        ..SynthConfig::default()
    })
    .unwrap();
    let keys = casii::nrl::build_key_matrix(&ds.negatives(), 2, None).unwrap();
    let params = casii::CasiiParams::init(6, 4, keys.tau(), 1).unwrap();
    let stripped: Vec<InstanceBag> = ds
        .bags
        .iter()
        .map(|b| InstanceBag::new(b.id, b.label, b.instances.clone(), None).unwrap())
        .collect();
    let unlabeled = Dataset::new(6, stripped).unwrap();

    let (d, k, m) = (dir.path().join("d"), dir.path().join("k"), dir.path().join("m"));
    save_dataset(&unlabeled, &d).unwrap();
    keys.save(&k).unwrap();
    params.save(&m).unwrap();
    ok(&casii(&["eval", "--data", p(&d), "--keys", p(&k), "--model", p(&m)]));
    let out = casii(&["eval", "--data", p(&d), "--keys", p(&k), "--model", p(&m), "--group"]);
    assert_ne!(out.status.code(), Some(0));
}

#[test]
fn gradcheck_command() {
    let a = ok(&casii(&["gradcheck", "--seed", "3"]));
    let b = ok(&casii(&["gradcheck", "--seed", "3"]));
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 11);
    let bad = casii(&["gradcheck", "--corrupt", "--cases", "1"]);
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn usage_errors() {
    assert_eq!(casii(&[]).status.code(), Some(1));
    assert_eq!(casii(&["train"]).status.code(), Some(1));
    assert_eq!(casii(&["build-keys", "--data", "x", "--out", "y", "--t-max", "0"]).status.code(), Some(1));
    assert!(ok(&casii(&["--version"])).contains("casii"));
}
