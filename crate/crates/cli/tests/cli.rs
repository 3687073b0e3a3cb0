use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};
use std::thread;

fn crowdgame(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_crowdgame"))
        .args(args)
        .env_remove("CROWDGAME_THREADS")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn run_writes_log_and_prints_result() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"num_humans": 2}"#);
    let log = dir.path().join("ep.jsonl");
    let out = crowdgame(&[
        "run",
        "--config",
        &config,
        "--seed",
        "3",
        "--log",
        log.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let result: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(result["seed"], 3);
    assert_eq!(result["method"], "cmpc");
    let text = std::fs::read_to_string(&log).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["type"], "episode");
    assert_eq!(first["num_humans"], 2);
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(
        code(&crowdgame(&["run", "--config", missing.to_str().unwrap()])),
        2
    );
    assert_eq!(code(&crowdgame(&["run", "--bogus"])), 2);
    assert_eq!(
        code(&crowdgame(&["batch", "--out", "x", "--frobnicate"])),
        2
    );
    assert_eq!(
        code(&crowdgame(&["run", "--method", "dmpc", "--strict-alg1"])),
        2
    );
    let bad = write_config(dir.path(), r#"{"num_robots": 3, "unknown_field": 1}"#);
    assert_eq!(code(&crowdgame(&["run", "--config", &bad])), 2);
    assert_eq!(code(&crowdgame(&["run", "--predictor", "external"])), 2);
    assert_eq!(code(&crowdgame(&[])), 2);
}

#[test]
fn dmpc_over_tcp_matches_in_process() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"num_humans": 3}"#);
    let a = crowdgame(&[
        "run", "--config", &config, "--method", "dmpc", "--seed", "5",
    ]);
    let b = crowdgame(&[
        "run",
        "--config",
        &config,
        "--method",
        "dmpc",
        "--seed",
        "5",
        "--transport",
        "tcp",
        "--port",
        "0",
    ]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(code(&b), 0, "{}", String::from_utf8_lossy(&b.stderr));
    assert_eq!(stdout(&a), stdout(&b));
}

#[test]
fn batch_grid_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), r#"{"num_robots": 2}"#);
    let run = |out: &Path| {
        let o = crowdgame(&[
            "batch",
            "--config",
            &config,
            "--episodes",
            "4",
            "--humans",
            "5..6",
            "--methods",
            "cmpc,dmpc",
            "--flocking",
            "on,off",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&a);
    run(&b);
    let mut names: Vec<String> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names.len(), 9);
    assert!(names.contains(&"dmpc_noflock_h6.csv".to_string()));
    assert!(names.contains(&"summary.json".to_string()));
    for name in &names {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let csv = std::fs::read_to_string(a.join("cmpc_flock_h5.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 8);
}

#[test]
fn thread_env_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_crowdgame"))
        .args([
            "batch",
            "--episodes",
            "1",
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .env("CROWDGAME_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn plot_renders_deterministic_svg() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("ep.jsonl");
    let out = crowdgame(&[
        "run",
        "--humans",
        "3",
        "--layout",
        "perpendicular",
        "--log",
        log.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let (a, b) = (dir.path().join("a.svg"), dir.path().join("b.svg"));
    assert_eq!(
        code(&crowdgame(&[
            "plot",
            "--log",
            log.to_str().unwrap(),
            "--out",
            a.to_str().unwrap()
        ])),
        0
    );
    assert_eq!(
        code(&crowdgame(&[
            "plot",
            "--log",
            log.to_str().unwrap(),
            "--out",
            b.to_str().unwrap()
        ])),
        0
    );
    let svg = std::fs::read_to_string(&a).unwrap();
    assert_eq!(svg, std::fs::read_to_string(&b).unwrap());
    assert!(svg.starts_with("<svg xmlns=\"http://www.w3.org/2000/svg\""));
    assert!(svg.trim_end().ends_with("</svg>"));
    // 3 robot goals
    assert_eq!(svg.matches("<polygon").count(), 3);
    assert!(svg.contains("fill=\"none\" stroke=\"#555555\""));

    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(
        code(&crowdgame(&[
            "plot",
            "--log",
            empty.to_str().unwrap(),
            "--out",
            a.to_str().unwrap()
        ])),
        2
    );
}

/// Answers every request with the last observed human positions.
fn echo_predictor() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut writer = stream.try_clone().unwrap();
        for line in BufReader::new(stream).lines() {
            let Ok(line) = line else { break };
            let req: serde_json::Value = serde_json::from_str(&line).unwrap();
            let n = req["num_humans"].as_u64().unwrap() as usize;
            let last = req["history"]
                .as_array()
                .unwrap()
                .last()
                .unwrap()
                .as_array()
                .unwrap()
                .clone();
            let humans = &last[last.len() - n..];
            let reply = serde_json::json!({ "positions": humans });
            if writeln!(writer, "{reply}").is_err() {
                break;
            }
        }
    });
    addr
}

#[test]
fn external_predictor_over_tcp() {
    let addr = echo_predictor();
    let out = crowdgame(&[
        "run",
        "--humans",
        "2",
        "--predictor",
        "external",
        "--predictor-addr",
        &addr,
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let result: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(result["success"].is_boolean());
}

#[test]
fn unreachable_predictor_is_a_runtime_failure() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    drop(listener);
    let out = crowdgame(&["run", "--predictor", "external", "--predictor-addr", &addr]);
    assert_eq!(code(&out), 1);
}

#[test]
fn remote_tcp_workers_match_in_process() {
    use std::process::Stdio;
    let reference = crowdgame(&["run", "--method", "dmpc", "--humans", "2", "--seed", "4"]);
    assert_eq!(code(&reference), 0);

    let port = {
        let l = TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port().to_string()
    };
    let mut coordinator = Command::new(env!("CARGO_BIN_EXE_crowdgame"))
        .args([
            "run",
            "--method",
            "dmpc",
            "--humans",
            "2",
            "--seed",
            "4",
            "--transport",
            "tcp",
        ])
        .args(["--port", &port, "--remote-workers"])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut banner = String::new();
    BufReader::new(coordinator.stderr.as_mut().unwrap())
        .read_line(&mut banner)
        .unwrap();
    assert!(banner.starts_with("waiting for 3 workers"), "{banner}");
    let addr = format!("127.0.0.1:{port}");
    let workers: Vec<_> = (0..3)
        .map(|i| {
            Command::new(env!("CARGO_BIN_EXE_crowdgame"))
                .args(["worker", "--connect", &addr, "--robot", &i.to_string()])
                .spawn()
                .unwrap()
        })
        .collect();
    let out = coordinator.wait_with_output().unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout(&out), stdout(&reference));
    for mut w in workers {
        assert!(w.wait().unwrap().success());
    }
}
