use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ispace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ispace")).args(args).output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ispace-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn config() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/toy_matmul.toml").display().to_string()
}

#[test]
fn explore_then_codegen_replay_and_bound() {
    let out = scratch("explore");
    let o = out.display().to_string();
    assert!(ispace(&["explore", &config(), "--out", &o, "--budget", "50"]).status.success());
    let best = out.join("best.json").display().to_string();
    let src = ispace(&["codegen", &config(), "--input", &best]);
    assert!(src.status.success());
    assert_eq!(src.stdout, std::fs::read(out.join("best.src")).unwrap());
    let log = out.join("explore.jsonl").display().to_string();
    assert!(ispace(&["replay", &config(), "--log", &log]).status.success());
    let b = ispace(&["bound", &config(), "--input", &best]);
    assert!(b.status.success(), "{}", String::from_utf8_lossy(&b.stderr));
    let _ = std::fs::remove_dir_all(out);
}

#[test]
fn tampered_log_fails_replay() {
    let out = scratch("tamper");
    let o = out.display().to_string();
    assert!(ispace(&["explore", &config(), "--out", &o, "--budget", "5"]).status.success());
    let path = out.join("explore.jsonl");
    let text = std::fs::read_to_string(&path).unwrap();
    // Bump the first recorded cost by one.
    let at = text
        .match_indices("\"cost\":")
        .map(|(i, m)| i + m.len())
        .find(|&i| text.as_bytes()[i].is_ascii_digit())
        .unwrap();
    let end = at + text[at..].find(|c: char| !c.is_ascii_digit()).unwrap();
    let cost: u64 = text[at..end].parse().unwrap();
    let tampered = format!("{}{}{}", &text[..at], cost + 1, &text[end..]);
    assert_ne!(text, tampered);
    std::fs::write(&path, tampered).unwrap();
    let r = ispace(&["replay", &config(), "--log", &path.display().to_string()]);
    assert_eq!(r.status.code(), Some(1));
    let _ = std::fs::remove_dir_all(out);
}

#[test]
fn invalid_configs_exit_2() {
    let out = scratch("config");
    let bad = out.join("bad.toml");
    std::fs::write(&bad, "[kernel]\nkernel = \"matmul\"\nm = 4\nn = 4\nk = 4\nbogus = 1\n").unwrap();
    assert_eq!(ispace(&["explore", &bad.display().to_string()]).status.code(), Some(2));
    assert_eq!(ispace(&["explore", "/nonexistent.toml"]).status.code(), Some(2));
    assert_eq!(ispace(&["explore", &config(), "--order", "no_such_choice"]).status.code(), Some(2));
    let _ = std::fs::remove_dir_all(out);
}

#[test]
fn enumerate_refuses_large_trees() {
    let out = scratch("enumerate");
    let cfg = out.join("small.toml");
    std::fs::write(&cfg, std::fs::read_to_string(config()).unwrap() + "\n[enumerate]\nnode_budget = 100\n").unwrap();
    let o = out.display().to_string();
    assert_eq!(ispace(&["enumerate", &cfg.display().to_string(), "--out", &o]).status.code(), Some(1));
    let _ = std::fs::remove_dir_all(out);
}
