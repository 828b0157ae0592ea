#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

pub fn core_example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/examples").join(name)
}

pub fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

/// Copies the sample document, its images and fixtures into `dir`.
pub fn copy_sample(dir: &Path) -> (PathBuf, PathBuf) {
    std::fs::create_dir_all(dir.join("shots")).unwrap();
    for f in ["trainticket.req", "trainticket.fixtures.json", "shots/login.png", "shots/results.png"] {
        std::fs::copy(core_example(f), dir.join(f)).unwrap();
    }
    (dir.join("trainticket.req"), dir.join("trainticket.fixtures.json"))
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn reqc(args: &[&str]) -> Run {
    let output = Command::new(env!("CARGO_BIN_EXE_reqc"))
        .args(args)
        .env_remove("REQC_WORKSPACE")
        .env_remove("REQC_BACKEND")
        .env_remove("REQC_BUDGET")
        .output()
        .expect("run reqc");
    Run {
        code: output.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&output.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
    }
}

pub fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}
