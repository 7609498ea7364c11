//! Runs `lentparticle verify` twice with different worker counts and prints
//! one PASS/FAIL line per criterion. Criterion 10 additionally requires every
//! CSV written by the two processes to match byte for byte. Runs without the
//! libtest harness so the lines always reach stdout.

use std::fs;
use std::path::Path;
use std::process::Command;

fn verify(out: &Path, workers: usize) -> (Vec<String>, bool) {
    let o = Command::new(env!("CARGO_BIN_EXE_lentparticle"))
        .args(["verify", "--seed", "42", "--workers", &workers.to_string(), "--out"])
        .arg(out)
        .env_remove("LENTPARTICLE_SEED")
        .output()
        .expect("binary runs");
    let stdout = String::from_utf8_lossy(&o.stdout).into_owned();
    eprint!("{}", String::from_utf8_lossy(&o.stderr));
    let lines = stdout.lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).map(String::from).collect();
    (lines, o.status.success())
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

fn id(line: &str) -> u8 {
    line[4..].trim_start().split_whitespace().next().unwrap().parse().unwrap()
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let (lines_a, ok_a) = verify(&a, 1);
    let (lines_b, ok_b) = verify(&b, 3);

    let (fa, fb) = (csv_files(&a), csv_files(&b));
    let differing: Vec<&str> = fa
        .iter()
        .zip(&fb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let same_set = fa.len() == fb.len() && fa.iter().zip(&fb).all(|(x, y)| x.0 == y.0);
    let bytes_equal = same_set && differing.is_empty() && !fa.is_empty();

    let mut all = true;
    for k in 1..=10u8 {
        let line = lines_a.iter().find(|l| id(l) == k);
        let line = match (k, line) {
            (10, Some(l)) => {
                let pass = l.starts_with("PASS") && bytes_equal;
                format!(
                    "{} 10 reproducibility: in-process {}, {} CSV files across workers 1 and 3 {}",
                    if pass { "PASS" } else { "FAIL" },
                    &l[..4],
                    fa.len(),
                    if bytes_equal { "identical".to_string() } else { format!("differ: {differing:?}") }
                )
            }
            (_, Some(l)) => l.clone(),
            (_, None) => format!("FAIL {k:>2} missing from verify output"),
        };
        all &= line.starts_with("PASS");
        println!("{line}");
    }
    if lines_a.len() != lines_b.len() || !ok_a || !ok_b || !all {
        eprintln!("acceptance: one or more criteria failed");
        std::process::exit(1);
    }
}
