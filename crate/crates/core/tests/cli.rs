use std::fs;
use std::process::{Command, Output};

fn lentparticle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lentparticle"))
        .args(args)
        .env_remove("LENTPARTICLE_SEED")
        .output()
        .unwrap()
}

fn write_config(dir: &tempfile::TempDir, text: &str) -> String {
    let p = dir.path().join("run.conf");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn unknown_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "[measure]\npreset = power_law\nbeta = 0.5\ncutof = 1\n[run]\ntask = simulate\n");
    let o = lentparticle(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 4") && err.contains("cutoff"), "{err}");
}

#[test]
fn bad_flag_exits_one_and_help_exits_zero() {
    assert_eq!(lentparticle(&["simulate", "--bogus"]).status.code(), Some(1));
    assert_eq!(lentparticle(&["--help"]).status.code(), Some(0));
}

#[test]
fn simulate_writes_configurations_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(&dir, "[measure]\npreset = uniform\nlo = 0.5\nhi = 1.5\nmass = 2\n[run]\ntask = simulate\nn_samples = 2000\n");
    let o = lentparticle(&["simulate", "--config", &cfg, "--seed", "5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let report = fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("seed = 5") && report.contains("status = PASS"), "{report}");
    assert!(fs::read_to_string(out.join("configurations.csv")).unwrap().starts_with("sample,time,x1\n"));
}

#[test]
fn diagnose_output_is_reproducible_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        &dir,
        "[measure]\npreset = independent_pair\nfirst = power_law(0.5,1)\nsecond = power_law(0.5,1)\ntruncation = 1e-2\n\
         [functional]\nfamily = triangular_system\n[run]\ntask = diagnose\nn_samples = 500\nkde = 0, 1\n",
    );
    let mut csvs = Vec::new();
    for w in ["1", "2"] {
        let out = dir.path().join(w);
        let o = lentparticle(&["diagnose", "--config", &cfg, "--workers", w, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
        csvs.push((fs::read(out.join("gamma_samples.csv")).unwrap(), fs::read(out.join("kde.csv")).unwrap()));
    }
    assert_eq!(csvs[0], csvs[1]);
}

#[test]
fn shipped_configs_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        let text = fs::read_to_string(&p).unwrap();
        if let Err(e) = lent_particle::config::parse_config(&text) {
            panic!("{}: {e}", p.display());
        }
        n += 1;
    }
    assert!(n >= 4);
}
