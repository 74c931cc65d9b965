use std::path::Path;
use std::process::{Command, Output};

fn xport(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xport"))
        .args(args)
        .env("XPORT_OUT_DIR", out_dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_writes_three_files_under_the_env_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = xport(&["run", "pair_clean"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let run = dir.path().join("pair_clean-s1");
    for f in ["trace.ndjson", "metrics.ndjson", "summary.json"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let trace = std::fs::read_to_string(run.join("trace.ndjson")).unwrap();
    let header: serde_json::Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    assert_eq!(header["record"], "run");
    assert_eq!(header["seed"], 1);
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(run.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["delivered_bytes"], 1_048_576);
    assert!(stdout(&o).contains("result     pass"));
}

#[test]
fn out_flag_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let elsewhere = tempfile::tempdir().unwrap();
    let o = xport(
        &["run", "tcp_lossy", "--seed", "7", "--trace", "off", "--out", elsewhere.path().to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let run = elsewhere.path().join("tcp_lossy-s7");
    assert!(run.join("summary.json").is_file());
    assert!(!run.join("trace.ndjson").exists());
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn failed_expectation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.toml");
    let text = xport::scenarios::get("tcp_lossy")
        .unwrap()
        .replace("min_retransmissions = 1", "max_retransmissions = 0");
    std::fs::write(&cfg, text).unwrap();
    let o = xport(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("expect max_retransmissions  FAIL"));
}

#[test]
fn config_errors_exit_two_with_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    let text = xport::scenarios::get("pair_clean").unwrap().replace("bandwidth = \"1Gbps\"\n", "");
    std::fs::write(&cfg, text).unwrap();
    let o = xport(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("links[0].bandwidth"));
    assert_eq!(xport(&["run", "/no/such/file.toml"], dir.path()).status.code(), Some(2));
}

#[test]
fn check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = xport(&["check", "tcp", "fast_retransmit_unsent_data"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("violations 0"));

    let o = xport(&["check", "tcp", "fast_retransmit_unsent_data", "--buggy"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.contains("no_empty_data_segment: "));
    assert!(text.contains("payload_len=0"));

    let o = xport(&["check", "tcp", "no_such_property"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn check_with_a_domain_file() {
    let dir = tempfile::tempdir().unwrap();
    let domain = dir.path().join("d.toml");
    std::fs::write(
        &domain,
        r#"
assumptions = ["tcp.send_max >= tcp.send_next", "tcp.data_end >= tcp.send_max"]

[[field]]
path = "tcp.state"
values = [4]

[[field]]
path = "tcp.send_una"
values = [1000]

[[field]]
path = "tcp.send_next"
values = [2460]

[[field]]
path = "tcp.send_max"
values = [2460]

[[field]]
path = "tcp.data_end"
lo = 2460
hi = 5380
step = 1460

[[field]]
path = "tcp.dup_acks"
values = [0, 1]

[[field]]
path = "event.ack"
values = [1000]

[[field]]
path = "tcp.cwnd"
values = [14600]

[[field]]
path = "event.window"
values = [65535]
"#,
    )
    .unwrap();
    let d = domain.to_str().unwrap();
    let o = xport(&["check", "tcp", "fast_retransmit_unsent_data", "--domain", d, "--buggy"], dir.path());
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("explored   6"));
    let o = xport(&["check", "tcp", "fast_retransmit_unsent_data", "--domain", d], dir.path());
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn validate_and_list() {
    let dir = tempfile::tempdir().unwrap();
    for p in ["tcp", "homa", "quic"] {
        let o = xport(&["validate", p], dir.path());
        assert_eq!(o.status.code(), Some(0), "{p}");
    }
    let o = xport(&["list-scenarios"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    for (name, _) in xport::scenarios::ALL {
        assert!(stdout(&o).contains(name));
    }
}
