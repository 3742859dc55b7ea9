use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cnn_ucb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cnn-ucb")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// IDX header: zero bytes, type code, rank, then big-endian dimensions.
fn idx(magic: u32, dims: &[u32], payload: &[u8]) -> Vec<u8> {
    let mut out = magic.to_be_bytes().to_vec();
    for d in dims {
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(payload);
    out
}

fn write(path: &Path, bytes: &[u8]) -> String {
    fs::write(path, bytes).unwrap();
    path.display().to_string()
}

#[test]
fn run_without_config_is_a_usage_error() {
    let o = cnn_ucb(&["run", "--out", "somewhere"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = cnn_ucb(&["bounds", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_exits_cleanly() {
    let o = cnn_ucb(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    for cmd in ["run", "summarize", "theory", "bounds", "dataset"] {
        assert!(stdout(&o).contains(cmd));
    }
}

#[test]
fn dataset_check_reports_record_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let img = write(&tmp.path().join("images"), &idx(0x803, &[3, 2, 2], &[0; 12]));
    let lbl = write(&tmp.path().join("labels"), &idx(0x801, &[3], &[1, 2, 3]));
    let o = cnn_ucb(&["dataset", "check", &img, &lbl]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("idx images 0x00000803, N=3, dims 3x2x2"), "{out}");
    assert!(out.contains("idx labels 0x00000801, N=3"), "{out}");
}

#[test]
fn dataset_check_reports_cifar_batches() {
    let tmp = tempfile::tempdir().unwrap();
    let batch = write(&tmp.path().join("data_batch_1.bin"), &vec![0u8; 2 * 3073]);
    let o = cnn_ucb(&["dataset", "check", &batch]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("N=2"));
}

#[test]
fn bad_magic_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let img = write(&tmp.path().join("images"), &idx(0x804, &[1, 2, 2], &[0; 4]));
    let o = cnn_ucb(&["dataset", "check", &img]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad magic number 0x00000804"), "{}", stderr(&o));
}

#[test]
fn truncated_file_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let img = write(&tmp.path().join("images"), &idx(0x803, &[2, 2, 2], &[0; 5]));
    let o = cnn_ucb(&["dataset", "check", &img]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("truncated"));
}

#[test]
fn bounds_prints_every_term() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        &tmp.path().join("c.toml"),
        b"[experiment]\ndataset = \"synthetic\"\n[cnn]\nlayers = 2\nchannels = 4\n",
    );
    let o = cnn_ucb(&["bounds", "--config", &cfg, "--t", "100"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    for label in ["psi2", "psi3", "m_required", "eta_max"] {
        assert!(out.lines().any(|l| l.starts_with(&format!("{label}: "))), "{label} missing from\n{out}");
    }
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(&tmp.path().join("c.toml"), b"[experiment]\nroundz = 3\n");
    let o = cnn_ucb(&["bounds", "--config", &cfg, "--t", "1"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn run_then_summarize() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        &tmp.path().join("c.toml"),
        b"[experiment]\ndataset = \"synthetic\"\nalgorithms = [\"linucb\", \"random\"]\nrounds = 25\nrepeats = 2\n",
    );
    let out_dir = tmp.path().join("out");
    let o = cnn_ucb(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rounds = stdout(&o).trim().to_string();
    assert!(rounds.ends_with("rounds.csv"));
    assert!(stderr(&o).contains("linucb repeat 1"));
    let summary = tmp.path().join("summary.csv");
    let o = cnn_ucb(&["summarize", &rounds, "--out", summary.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = stdout(&o);
    assert!(table.lines().any(|l| l.starts_with("linucb") && l.contains(" 25 ")));
    let csv = fs::read_to_string(summary).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 25);
}

#[test]
fn interpolation_command_reports_the_construction() {
    let o = cnn_ucb(&["theory", "lemma51", "--t", "6", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("d: 500\nt: 6\n"));
    let residual: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("residual: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!(residual < 1e-8);
}
