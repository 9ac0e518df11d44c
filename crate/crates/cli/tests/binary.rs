use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn qtasep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qtasep")).args(args).output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    dir.join(name)
}

#[test]
fn config_file_and_flag_override() {
    let cfg = scratch("run.cfg");
    fs::write(&cfg, "# two particles\nrates=1,0.9\nalpha=0.2\nzeta=-0.5\nmethods=pmf,rank-n\n").unwrap();
    let out = scratch("compare.csv");
    let o = qtasep(&[
        "compare",
        "--config",
        cfg.to_str().unwrap(),
        "--zeta",
        "-0.3",
        "--no-timing",
        "--check",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("# rates=1,0.9\n"));
    assert!(text.contains("# zeta=-0.3+0i\n"));
    assert!(text.contains("method,zeta_re,zeta_im,value_re,value_im,err_est,runtime_ms,status\n"));
    assert!(text.lines().any(|l| l.starts_with("max_pairwise_deviation,-0.3,0.0,") && l.ends_with(",ok")));
}

#[test]
fn check_mode_fails_on_exceeded_threshold() {
    // The Monte Carlo estimate cannot meet a zero tolerance with zero sigmas.
    let args = [
        "compare",
        "--methods",
        "empirical,pmf",
        "--trajectories",
        "200",
        "--tolerance",
        "0",
        "--zeta",
        "-0.5",
    ];
    let o = qtasep(&args);
    assert!(o.status.success());
    let cfg = scratch("strict.cfg");
    fs::write(&cfg, "sigmas=0\n").unwrap();
    let mut strict = args.to_vec();
    strict.extend(["--check", "--config", cfg.to_str().unwrap()]);
    assert_eq!(qtasep(&strict).status.code(), Some(1));
}

#[test]
fn failures_set_the_exit_code() {
    let o = qtasep(&["qlap", "--alpha", "0.2", "--methods", "genfunc"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("error: domain"));
    let o = qtasep(&["identities", "--draws", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("at least one draw"));
    let o = qtasep(&["pmf", "--rates", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
    let o = qtasep(&["simulate", "--out", "/nonexistent/dir/x.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/dir/x.csv"));
}

#[test]
fn identities_check_passes() {
    let o = qtasep(&["identities", "--draws", "10", "--check"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.ends_with(",ok") || l.contains(",ok,")).count(), 10);
}

#[test]
fn single_particle_simulation_is_poisson() {
    let o = qtasep(&["simulate", "--trajectories", "100000", "--seed", "3"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let (mut mean, mut total) = (0.0, 0.0);
    for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        mean += f[0] * f[1];
        total += f[1];
    }
    mean /= total;
    let sigma = (1.0f64 / total).sqrt();
    assert!((mean - 1.0).abs() < 3.0 * sigma, "{mean}");
}
