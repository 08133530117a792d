//! Acceptance criterion 8: every subcommand, run twice with identical flags
//! and at any --threads setting, emits byte-identical outputs.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nestedkv"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("nestedkv-acc8-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_ok(args: &[&str]) -> Vec<u8> {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {:?} failed: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn criterion_8_cli_determinism() {
    let result = (|| -> Result<(), String> {
        // gen: identical dumps from identical flags at different thread counts.
        let gen_dirs = [temp_dir("gen-a"), temp_dir("gen-b")];
        for (dir, threads) in gen_dirs.iter().zip(["1", "4"]) {
            run_ok(&[
                "gen",
                "--generator",
                "episodic_needle",
                "--n",
                "512",
                "--d",
                "32",
                "--heads",
                "2",
                "--needles",
                "8",
                "--layers",
                "2",
                "--out-dir",
                dir.to_str().unwrap(),
                "--seed",
                "21",
                "--threads",
                threads,
            ]);
        }
        for f in [
            "manifest.json",
            "keys_layer0.bin",
            "keys_layer1.bin",
            "planted.json",
        ] {
            if read(&gen_dirs[0].join(f)) != read(&gen_dirs[1].join(f)) {
                return Err(format!("gen output `{f}` differs across runs"));
            }
        }

        // compress on the generated dump.
        let retained = [gen_dirs[0].join("r1.json"), gen_dirs[0].join("r2.json")];
        for (out, threads) in retained.iter().zip(["1", "3"]) {
            run_ok(&[
                "compress",
                "--input",
                gen_dirs[0].join("manifest.json").to_str().unwrap(),
                "--ratio",
                "0.75",
                "--method",
                "nestedkv",
                "--out",
                out.to_str().unwrap(),
                "--threads",
                threads,
            ]);
        }
        if read(&retained[0]) != read(&retained[1]) {
            return Err("compress output differs across runs".into());
        }

        // bench, ablate, sweep, inspect: stdout byte-compare.
        let stream: &[&str] = &[
            "--generator",
            "episodic_needle",
            "--n",
            "512",
            "--d",
            "32",
            "--heads",
            "2",
            "--needles",
            "8",
            "--seed",
            "33",
        ];
        for (label, base) in [
            ("bench", {
                let mut v = vec!["bench"];
                v.extend_from_slice(stream);
                v.extend_from_slice(&[
                    "--ratios",
                    "0.5,0.75",
                    "--methods",
                    "nestedkv,recency,random",
                ]);
                v
            }),
            ("ablate", {
                let mut v = vec!["ablate"];
                v.extend_from_slice(stream);
                v.extend_from_slice(&["--ratios", "0.75"]);
                v
            }),
            ("sweep", {
                let mut v = vec!["sweep"];
                v.extend_from_slice(stream);
                v.extend_from_slice(&["--knob", "tau"]);
                v
            }),
            (
                "inspect",
                vec![
                    "inspect",
                    "--input",
                    gen_dirs[0].join("manifest.json").to_str().unwrap(),
                ],
            ),
        ] {
            let mut with_one = base.clone();
            with_one.extend_from_slice(&["--threads", "1"]);
            let mut with_four = base.clone();
            with_four.extend_from_slice(&["--threads", "4"]);
            let a = run_ok(&with_one);
            let b = run_ok(&with_four);
            let c = run_ok(&with_four);
            if a != b || b != c {
                return Err(format!(
                    "{label} output differs across runs or thread counts"
                ));
            }
            // json format variant, where the subcommand has one.
            if label != "inspect" {
                let mut json_args = base.clone();
                json_args.extend_from_slice(&["--format", "json", "--threads", "2"]);
                let ja = run_ok(&json_args);
                let jb = run_ok(&json_args);
                if ja != jb {
                    return Err(format!("{label} json output differs across runs"));
                }
            }
        }
        Ok(())
    })();

    match result {
        Ok(()) => println!("acceptance criterion 8 (cli determinism): PASS"),
        Err(msg) => {
            println!("acceptance criterion 8 (cli determinism): FAIL - {msg}");
            panic!("acceptance criterion 8 (cli determinism) failed: {msg}");
        }
    }
}
