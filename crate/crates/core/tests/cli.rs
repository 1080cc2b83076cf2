use std::fs;
use std::process::{Command, Output};

fn posecal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posecal")).args(args).output().unwrap()
}

#[test]
fn decompose_prints_four_steps() {
    let out = posecal(&["decompose", "-30", "39", "22", "0", "0", "1000"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 8);
    assert_eq!(lines[0], "step 1: xr=0 yr=0 zr=0 xt=0 yt=0 zt=1000");
    assert_eq!(lines[2], "step 2: xr=-30 yr=0 zr=0 xt=0 yt=0 zt=1000");
    assert_eq!(lines[4], "step 3: xr=-30 yr=39 zr=0 xt=0 yt=0 zt=1000");
    assert_eq!(lines[6], "step 4: xr=-30 yr=39 zr=22 xt=0 yt=0 zt=1000");
    assert_eq!(lines[3].trim(), "rotate 30 degrees around the negative half axis of the X axis");
    assert_eq!(lines[5].trim(), "rotate 39 degrees around the positive half axis of the Y axis");
    assert_eq!(lines[7].trim(), "rotate 22 degrees around the positive half axis of the Z axis");
}

#[test]
fn decompose_needs_six_numbers() {
    let out = posecal(&["decompose", "999"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    let out = posecal(&["decompose", "1", "2", "3", "4", "5", "abc"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_config_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = posecal(&[
        "simulate",
        "--config",
        dir.path().join("absent.json").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert!(!out_dir.exists());
}

#[test]
fn invalid_config_is_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    fs::write(&config, r#"{"repetitions": 0}"#).unwrap();
    let out = posecal(&["simulate", "--config", config.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    fs::write(&config, r#"{"no_such_field": 1}"#).unwrap();
    let out = posecal(&["simulate", "--config", config.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_writes_csvs_and_summary_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("c.json");
    fs::write(&config, r#"{"repetitions": 1, "frame_cap": 4, "strategies": ["random", "search_sum_iod"]}"#).unwrap();
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = posecal(&["simulate", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", seed]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a", "5");
    let b = run("b", "5");
    for name in ["random.csv", "search_sum_iod.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let csv = fs::read_to_string(a.join("random.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "frames,mean_sum_iod,ln_sum_iod,mean_abs_rms,ln_abs_rms,std_abs_rms"
    );
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 5);
}

#[test]
fn serve_rejects_a_port_in_use() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port().to_string();
    let out = posecal(&["serve", "--port", &port]);
    assert_eq!(out.status.code(), Some(1));
}
