//! `--help` output compared against checked-in golden files. Set
//! `UPDATE_GOLDEN=1` to rewrite them.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

fn golden(name: &str, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_mrta"))
        .args(args)
        .env("COLUMNS", "100")
        .env_remove("MRTA_MANUALS")
        .env_remove("MRTA_BACKEND")
        .env_remove("MRTA_HOST")
        .env_remove("MRTA_PORT")
        .env_remove("MRTA_LOG_DIR")
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("tests/golden/{name}.txt"));
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(&path, &text).unwrap();
    }
    let expected = fs::read_to_string(&path).unwrap();
    assert_eq!(
        text, expected,
        "{name} help changed; rerun with UPDATE_GOLDEN=1 if intended"
    );
}

fn flags_of(help: &str) -> Vec<String> {
    help.split_whitespace()
        .filter(|w| w.starts_with("--"))
        .map(|w| w.trim_end_matches([',', '.', ']']).to_string())
        .collect()
}

#[test]
fn top_level_help() {
    golden("mrta", &["--help"]);
}

#[test]
fn subcommand_help() {
    for sub in ["ingest", "generate", "eval", "serve", "chat"] {
        golden(sub, &[sub, "--help"]);
    }
}

#[test]
fn help_lists_every_flag() {
    let expected: &[(&str, &[&str])] = &[
        (
            "ingest",
            &["--manuals", "--out", "--chunk-size", "--config"],
        ),
        (
            "generate",
            &[
                "--manuals",
                "--backend",
                "--out",
                "--seed",
                "--chunk-size",
                "--test-fraction",
                "--conversations-per-chunk",
                "--config",
            ],
        ),
        (
            "eval",
            &[
                "--predictions",
                "--references",
                "--split",
                "--manuals",
                "--lexicon",
                "--model-id",
                "--rouge",
                "--reports",
                "--out",
            ],
        ),
        (
            "serve",
            &[
                "--manuals",
                "--backend",
                "--host",
                "--port",
                "--log-dir",
                "--chunk-size",
            ],
        ),
        (
            "chat",
            &[
                "--manual",
                "--chunk",
                "--manuals",
                "--backend",
                "--script",
                "--log-dir",
                "--logical-clock",
                "--chunk-size",
            ],
        ),
    ];
    for (sub, flags) in expected {
        let out = Command::new(env!("CARGO_BIN_EXE_mrta"))
            .args([sub, "--help"])
            .output()
            .unwrap();
        let listed = flags_of(&String::from_utf8(out.stdout).unwrap());
        for flag in *flags {
            assert!(
                listed.iter().any(|f| f == flag),
                "{sub} --help lacks {flag}"
            );
        }
    }
}
