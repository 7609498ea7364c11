use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use super::{Density, MonteCarloRun, SampleRecord};

/// `sample,atoms,det,trace,rank,eig1..eigd,F1..Fd`, eigenvalues ascending.
pub fn gamma_samples_csv(samples: &[SampleRecord]) -> String {
    let d = samples.first().map_or(0, |s| s.value.len());
    let mut out = String::from("sample,atoms,det,trace,rank");
    for k in 1..=d {
        write!(out, ",eig{k}").unwrap();
    }
    for k in 1..=d {
        write!(out, ",F{k}").unwrap();
    }
    out.push('\n');
    for s in samples {
        write!(out, "{},{},{},{},{}", s.index, s.atoms, s.determinant, s.gamma.trace(), s.rank).unwrap();
        for e in &s.eigenvalues {
            write!(out, ",{e}").unwrap();
        }
        for v in s.value.iter() {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// `x,density` for one dimension, `x,y,density` for two.
pub fn kde_csv(density: &Density) -> String {
    let mut out = String::new();
    match density {
        Density::One(k) => {
            out.push_str("x,density\n");
            for (x, d) in k.grid.iter().zip(&k.density) {
                writeln!(out, "{x},{d}").unwrap();
            }
        }
        Density::Two(k) => {
            out.push_str("x,y,density\n");
            for (i, x) in k.xs.iter().enumerate() {
                for (j, y) in k.ys.iter().enumerate() {
                    writeln!(out, "{x},{y},{}", k.density[i * k.ys.len() + j]).unwrap();
                }
            }
        }
    }
    out
}

/// Write `gamma_samples.csv`, `kde.csv` (when a density was fitted) and `report.txt`.
pub fn write_run(run: &MonteCarloRun, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("gamma_samples.csv"), gamma_samples_csv(&run.samples))?;
    if let Some(d) = &run.report.density {
        fs::write(dir.join("kde.csv"), kde_csv(d))?;
    }
    fs::write(dir.join("report.txt"), run.report.render())
}
