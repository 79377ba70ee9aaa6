use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pbvgan::dataset::{take_per_class, template_dataset};
use pbvgan::pcap_ingest::{frames, write_pcap, ByteOrder, PcapGlobalHeader, RawPacket};
use pbvgan::preprocess::write_matrix_csv;

const SMALL: &str = r#"
seed = 3
classes = ["a", "b", "c"]

[balance]
target_per_class = 60

[gan]
steps = 40
g_hidden = [32]
d_hidden = [32]
d_input_layer = false

[cgan]
steps = 40
g_hidden = [32]
d_hidden = [32]
d_input_layer = false

[classifier]
hidden = [16]
epochs = 3
"#;

fn pbvgan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pbvgan")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = pbvgan(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_capture(path: &Path, frames: Vec<Vec<u8>>) {
    let header = PcapGlobalHeader::ethernet(ByteOrder::Little, 65535);
    let packets: Vec<_> = frames.into_iter().map(RawPacket::new).collect();
    fs::write(path, write_pcap(&header, &packets).unwrap()).unwrap();
}

fn line_count(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().filter(|l| !l.is_empty()).count()
}

/// Label counts in a PBV CSV.
fn label_counts(path: &Path, classes: usize) -> Vec<usize> {
    let mut counts = vec![0; classes];
    for line in fs::read_to_string(path).unwrap().lines() {
        let label: usize = line.rsplit(',').next().unwrap().parse().unwrap();
        counts[label] += 1;
    }
    counts
}

/// Config plus an imbalanced 3-class desk dataset already split in `dir`.
fn desk_run(dir: &Path) -> PathBuf {
    let config = dir.join("pipeline.toml");
    fs::write(&config, SMALL).unwrap();
    let ds = take_per_class(&template_dataset(&[100, 100, 100], 16, 0.05, 1), &[100, 30, 20]);
    let mut buf = Vec::new();
    write_matrix_csv(ds.pbm(), ds.labels(), &mut buf).unwrap();
    let out = dir.join("run");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("pbm.csv"), buf).unwrap();
    ok(&["--config", s(&config), "--out", s(&out), "split"]);
    config
}

#[test]
fn ingest_counts_kept_packets_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.pcap");
    let b = dir.path().join("b.pcap");
    write_capture(&a, vec![frames::arp(), frames::tcp(1, 443, b"x"), frames::dhcp_discover(), frames::udp(5, 53, b"q")]);
    write_capture(&b, vec![frames::tcp(2, 80, b"GET"), frames::arp()]);
    let config = dir.path().join("pipeline.toml");
    fs::write(
        &config,
        "classes = [\"web\", \"dns\"]\noutput_dir = \"out\"\n[[inputs]]\npath = \"a.pcap\"\nlabel = 1\n[[inputs]]\npath = \"b.pcap\"\nlabel = 0\n",
    )
    .unwrap();
    let stdout = ok(&["--config", s(&config), "ingest"]);
    assert!(stdout.contains("kept 3 packets"), "{stdout}");
    let out = dir.path().join("out");
    assert_eq!(line_count(&out.join("pbm.csv")), 3);
    assert_eq!(label_counts(&out.join("pbm.csv"), 2), vec![1, 2]);
    let report = fs::read_to_string(out.join("ingest_report.toml")).unwrap();
    assert!(report.contains("arp = 1") && report.contains("dhcpv4 = 1"), "{report}");

    let hashes = |m: &str| -> Vec<String> { m.lines().filter(|l| l.starts_with("sha256")).map(String::from).collect() };
    let first = hashes(&fs::read_to_string(out.join("manifest.toml")).unwrap());
    ok(&["--config", s(&config), "ingest"]);
    let second = hashes(&fs::read_to_string(out.join("manifest.toml")).unwrap());
    assert_eq!(first.len(), 4);
    assert_eq!(first, second);

    let stats = ok(&["--config", s(&config), "stats"]);
    assert!(stats.contains("total = 3"), "{stats}");
}

#[test]
fn missing_input_is_a_data_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("pipeline.toml");
    fs::write(&config, "[[inputs]]\npath = \"nowhere.pcap\"\nlabel = 0\n").unwrap();
    let out = pbvgan(&["--config", s(&config), "--out", s(dir.path()), "ingest"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.pcap"));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(pbvgan(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(pbvgan(&["augment", "--method", "magic"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(&config, "sed = 1\n").unwrap();
    let out = pbvgan(&["--config", s(&config), "stats"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.toml"));
}

#[test]
fn ros_on_a_two_class_toy_meets_targets() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("toy.csv");
    fs::write(&train, "0.1,0.2,0\n0.3,0.4,0\n0.5,0.5,0\n0.9,0.8,1\n").unwrap();
    let config = dir.path().join("c.toml");
    fs::write(&config, "[balance]\ntarget_per_class = 3\n").unwrap();
    ok(&["--config", s(&config), "--out", s(dir.path()), "augment", "--method", "ros", "--data", s(&train)]);
    let balanced = dir.path().join("balanced.csv");
    assert_eq!(label_counts(&balanced, 2), vec![3, 3]);
    for line in fs::read_to_string(&balanced).unwrap().lines().filter(|l| l.ends_with(",1")) {
        assert_eq!(line, "0.9,0.8,1");
    }
    let provenance = fs::read_to_string(dir.path().join("balanced.provenance.csv")).unwrap();
    assert_eq!(provenance, "provenance\nreal\nreal\nreal\nreal\nsynthetic\nsynthetic\n");
    let manifest = fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
    assert!(manifest.contains("method = \"ROS\""), "{manifest}");
}

#[test]
fn absent_class_makes_the_plan_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("toy.csv");
    fs::write(&train, "0.1,0\n0.3,0\n").unwrap();
    let config = dir.path().join("c.toml");
    fs::write(&config, "classes = [\"x\", \"y\"]\n[balance]\ntarget_per_class = 3\n").unwrap();
    let out = pbvgan(&["--config", s(&config), "--out", s(dir.path()), "augment", "--method", "smote", "--data", s(&train)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"y\""));
}

#[test]
fn cgan_without_checkpoint_or_train_flag_fails() {
    let dir = tempfile::tempdir().unwrap();
    let config = desk_run(dir.path());
    let out = dir.path().join("run");
    let result = pbvgan(&["--config", s(&config), "--out", s(&out), "augment", "--method", "cgan"]);
    assert_eq!(result.status.code(), Some(2));
    let err = String::from_utf8_lossy(&result.stderr);
    assert!(err.contains("cgan.ckpt") && err.contains("--train"), "{err}");
    assert!(!out.join("balanced.csv").exists());
}

#[test]
fn five_methods_give_balanced_distinct_outputs_and_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = desk_run(dir.path());
    let base = dir.path().join("run");
    let mut hashes = BTreeSet::new();
    let mut runs = Vec::new();
    for method in ["none", "ros", "smote", "gan", "cgan"] {
        let out = dir.path().join(method);
        fs::create_dir_all(&out).unwrap();
        for f in ["train.csv", "validation.csv", "test.csv"] {
            fs::copy(base.join(f), out.join(f)).unwrap();
        }
        let mut args = vec!["--config", s(&config), "--out", s(&out), "augment", "--method", method];
        if matches!(method, "gan" | "cgan") {
            args.push("--train");
        }
        ok(&args);
        let balanced = out.join("balanced.csv");
        let train_counts = label_counts(&out.join("train.csv"), 3);
        let expected = if method == "none" { train_counts } else { vec![60, 60, 60] };
        assert_eq!(label_counts(&balanced, 3), expected, "{method}");
        hashes.insert(fs::read(&balanced).unwrap());
        ok(&["--config", s(&config), "--out", s(&out), "classify"]);
        ok(&["--config", s(&config), "--out", s(&out), "evaluate", "--method", method]);
        runs.push(out);
    }
    assert_eq!(hashes.len(), 5);
    assert!(runs[3].join("gan").join("class_1.ckpt").exists());
    assert!(runs[4].join("cgan_loss.csv").exists());

    let report_dir = dir.path().join("report");
    let mut args = vec!["--out", s(&report_dir), "report"];
    args.extend(runs.iter().map(|p| s(p)));
    let table = ok(&args);
    let rows: Vec<&str> = table.lines().skip(1).map(|l| l.split_whitespace().next().unwrap()).collect();
    assert_eq!(rows, vec!["none", "ros", "smote", "gan", "cgan"]);
    assert!(table.lines().next().unwrap().starts_with("method"));
    assert_eq!(line_count(&report_dir.join("comparison.csv")), 6);
    assert!(report_dir.join("loss").join("cgan_cgan_loss.csv").exists());
    assert!(report_dir.join("loss").join("gan_gan_class_2_loss.csv").exists());

    let single = ok(&["--out", s(&report_dir), "report", s(&runs[1])]);
    assert_eq!(single.lines().count(), 2);
}

#[test]
fn training_is_reproducible_and_generate_samples_a_class() {
    let dir = tempfile::tempdir().unwrap();
    let config = desk_run(dir.path());
    let out = dir.path().join("run");
    ok(&["--config", s(&config), "--out", s(&out), "train-cgan"]);
    let first = fs::read(out.join("cgan.ckpt")).unwrap();
    ok(&["--config", s(&config), "--out", s(&out), "train-cgan"]);
    assert_eq!(fs::read(out.join("cgan.ckpt")).unwrap(), first);
    ok(&["--config", s(&config), "--out", s(&out), "--seed", "4", "train-cgan"]);
    assert_ne!(fs::read(out.join("cgan.ckpt")).unwrap(), first);

    let ckpt = out.join("cgan.ckpt");
    ok(&["--config", s(&config), "--out", s(&out), "generate", "--checkpoint", s(&ckpt), "--class", "2", "--count", "7"]);
    assert_eq!(label_counts(&out.join("generated.csv"), 3), vec![0, 0, 7]);
    let bad = pbvgan(&["--config", s(&config), "--out", s(&out), "generate", "--checkpoint", s(&ckpt), "--class", "5"]);
    assert_eq!(bad.status.code(), Some(2));

    ok(&["--config", s(&config), "--out", s(&out), "train-gan", "--class", "1"]);
    let gan = out.join("gan").join("class_1.ckpt");
    ok(&["--config", s(&config), "--out", s(&out), "generate", "--checkpoint", s(&gan), "--class", "1", "--count", "4"]);
    assert_eq!(label_counts(&out.join("generated.csv"), 3), vec![0, 4, 0]);

    // augmenting from the stored checkpoint matches training inline
    ok(&["--config", s(&config), "--out", s(&out), "train-cgan"]);
    ok(&["--config", s(&config), "--out", s(&out), "augment", "--method", "cgan"]);
    let from_ckpt = fs::read(out.join("balanced.csv")).unwrap();
    ok(&["--config", s(&config), "--out", s(&out), "augment", "--method", "cgan", "--train"]);
    assert_eq!(fs::read(out.join("balanced.csv")).unwrap(), from_ckpt);
    assert_eq!(fs::read(out.join("cgan.ckpt")).unwrap(), first);
}

#[test]
fn malformed_report_names_file_and_position() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("broken");
    fs::create_dir_all(&run).unwrap();
    fs::write(run.join("metrics.toml"), "method = \"x\"\naccuracy = [\n").unwrap();
    let out = pbvgan(&["--out", s(dir.path()), "report", s(&run)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("metrics.toml") && err.contains("line"), "{err}");

    let missing = pbvgan(&["--out", s(dir.path()), "report", s(&dir.path().join("absent"))]);
    assert_eq!(missing.status.code(), Some(2));
}
