use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "pretrain_epochs=2",
    "pretrain_train_episodes=150",
    "pretrain_heldout_episodes=40",
    "pretrain_min_accuracy=0.0",
    "episodes=12",
    "shuffles=2",
    "streams=[\"seen\", \"unseen\"]",
    "strategies=[\"noadapt\", \"fast-slow\"]",
];

fn fstta(dir: &Path, args: &[&str], small: bool) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fstta"));
    cmd.current_dir(dir).args(args);
    if small {
        for s in SMALL {
            cmd.args(["--set", s]);
        }
    }
    cmd.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = fstta(dir.path(), &["config", "--set", "fast_lr=-1"], false);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("error[config]") && stderr(&o).contains("fast_lr"), "{}", stderr(&o));

    let o = fstta(dir.path(), &["config", "--set", "no_such_key=1"], false);
    assert_eq!(o.status.code(), Some(2));

    std::fs::write(dir.path().join("bad.toml"), "episodes = \"many\"\n").unwrap();
    let o = fstta(dir.path(), &["run", "--config", "bad.toml"], false);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn missing_params_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = fstta(dir.path(), &["run"], true);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("fstta pretrain"), "{}", stderr(&o));
}

#[test]
fn config_prints_effective_values() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "episodes = 40\nslow_lr = 0.5\n").unwrap();
    let o = fstta(dir.path(), &["config", "-c", "c.toml", "--set", "episodes=41"], false);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("episodes = 41"), "{text}");
    assert!(text.contains("slow_lr = 0.5"), "{text}");
}

#[test]
fn pretrain_run_forgetting_compare() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = fstta(d, &["pretrain"], true);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(d.join("results/params.bin").exists());
    assert!(d.join("results/pretrain_report.toml").exists());

    let o = fstta(d, &["run"], true);
    assert!(o.status.success(), "{}", stderr(&o));
    let results = d.join("results/results.csv");
    let body = std::fs::read_to_string(&results).unwrap();
    assert!(body.starts_with("# code_version = "), "{body}");
    assert!(d.join("results/results.toml").exists());
    assert!(d.join("results/curves.csv").exists());
    // 2 streams × 2 strategies × (2 shuffles + mean + std)
    assert_eq!(body.lines().filter(|l| !l.starts_with('#')).count(), 1 + 16);

    let o = fstta(d, &["forgetting"], true);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    for cond in ["×→×", "×→✓", "✓→×", "✓→✓"] {
        assert!(text.contains(cond), "{text}");
    }

    let o = fstta(d, &["compare", "results/results.csv", "--out", "cmp.csv"], false);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8(o.stdout).unwrap().contains('*'));
    assert!(d.join("cmp.csv").exists());

    let o = fstta(d, &["compare", "results/results.csv", "results/results.csv"], false);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("ambiguous"), "{}", stderr(&o));

    let o = fstta(d, &["compare", "nope.csv"], false);
    assert_eq!(o.status.code(), Some(3));
}
