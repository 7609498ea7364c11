use nalgebra::{DMatrix, DVector};

use super::{check_finite, check_mark_dim, Functional, StepPath};
use crate::error::{Error, Result};
use crate::point_process::{Mark, PointConfiguration};

/// `M = sup_{s ≤ t} (Y_s + K_s)`, `Y_s = Σ_{t_i ≤ s} x_i` on coordinate `coord`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningSupremum {
    k_path: StepPath,
    coord: usize,
    mark_dim: usize,
    t_end: f64,
}

impl RunningSupremum {
    pub fn new(k_path: StepPath, mark_dim: usize, t_end: f64) -> Result<Self> {
        if k_path.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: k_path.dim(),
                context: "supremum auxiliary path",
            });
        }
        if !(t_end > 0.0) {
            return Err(Error::InvalidInput(format!("supremum end {t_end} must be positive")));
        }
        Ok(RunningSupremum {
            k_path,
            coord: 0,
            mark_dim,
            t_end,
        })
    }

    pub fn k_path(&self) -> &StepPath {
        &self.k_path
    }

    /// `H = Y + K` after each event on `[0, t]`, starting with `(0, K_0)`.
    /// Also returns, per atom up to `t`, the index of its event.
    fn path(&self, config: &PointConfiguration) -> Result<(Vec<(f64, f64)>, Vec<usize>)> {
        let atoms: Vec<_> = config.atoms().iter().take_while(|a| a.time <= self.t_end).collect();
        let k_times = self.k_path.times();
        let mut events = vec![(0.0, self.k_path.value(0)[0])];
        let mut atom_event = Vec::with_capacity(atoms.len());
        let (mut i, mut j) = (0, 1);
        let mut y = 0.0;
        loop {
            let ta = atoms.get(i).map_or(f64::INFINITY, |a| a.time);
            let tk = k_times.get(j).copied().filter(|&t| t <= self.t_end).unwrap_or(f64::INFINITY);
            let t = ta.min(tk);
            if t == f64::INFINITY {
                break;
            }
            if ta == t {
                y += check_finite(atoms[i].mark[self.coord], i, "jump")?;
                atom_event.push(events.len());
                i += 1;
            }
            if tk == t {
                j += 1;
            }
            events.push((t, y + self.k_path.value(j - 1)[0]));
        }
        Ok((events, atom_event))
    }

    /// `Γ[M] = Σ_{α ≤ t} ΔY_α² 𝟙{sup_{s ≥ α} H_s ≥ sup_{s < α} H_s}`.
    pub fn closed_form_gamma(&self, config: &PointConfiguration) -> Result<f64> {
        check_mark_dim(self.mark_dim, config)?;
        let (events, atom_event) = self.path(config)?;
        let flags = indicators(&events, &atom_event);
        Ok(config
            .atoms()
            .iter()
            .zip(flags)
            .filter(|(_, on)| *on)
            .map(|(a, _)| a.mark[self.coord] * a.mark[self.coord])
            .sum())
    }
}

/// For each atom event `k`: `max(values[k..]) ≥ max(values[..k])`.
fn indicators(events: &[(f64, f64)], atom_event: &[usize]) -> Vec<bool> {
    let n = events.len();
    let mut suffix = vec![f64::NEG_INFINITY; n + 1];
    for k in (0..n).rev() {
        suffix[k] = suffix[k + 1].max(events[k].1);
    }
    let mut prefix = vec![f64::NEG_INFINITY; n + 1];
    for k in 0..n {
        prefix[k + 1] = prefix[k].max(events[k].1);
    }
    atom_event.iter().map(|&k| suffix[k] >= prefix[k]).collect()
}

impl Functional for RunningSupremum {
    fn output_dim(&self) -> usize {
        1
    }

    fn mark_dim(&self) -> usize {
        self.mark_dim
    }

    fn name(&self) -> String {
        "running_supremum".into()
    }

    fn evaluate(&self, config: &PointConfiguration) -> Result<DVector<f64>> {
        check_mark_dim(self.mark_dim, config)?;
        let (events, _) = self.path(config)?;
        let m = events.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
        Ok(DVector::from_element(1, m))
    }

    fn mark_jacobian(&self, config: &PointConfiguration, time: f64, mark: &Mark) -> Option<Result<DMatrix<f64>>> {
        Some((|| {
            let mut jac = DMatrix::zeros(1, self.mark_dim);
            if time > self.t_end {
                return Ok(jac);
            }
            let full = config.insert(time, *mark)?;
            let at = full.atoms().partition_point(|a| a.time < time);
            let (events, atom_event) = self.path(&full)?;
            if indicators(&events, &atom_event)[at] {
                jac[(0, self.coord)] = 1.0;
            }
            Ok(jac)
        })())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::point_process::Atom;

    fn cfg(atoms: &[(f64, f64)]) -> PointConfiguration {
        PointConfiguration::new(1.0, 1, atoms.iter().map(|&(t, x)| Atom::new(t, Mark::scalar(x))).collect()).unwrap()
    }

    #[test]
    fn positive_jumps_without_k_give_terminal_value() {
        let m = RunningSupremum::new(StepPath::zero(1), 1, 1.0).unwrap();
        let c = cfg(&[(0.1, 0.3), (0.5, 0.2), (0.9, 0.7)]);
        assert!((m.evaluate(&c).unwrap()[0] - 1.2).abs() < 1e-15);
        // every jump raises the running maximum
        assert!((m.closed_form_gamma(&c).unwrap() - (0.09 + 0.04 + 0.49)).abs() < 1e-15);
    }

    #[test]
    fn insertion_matches_max_of_two_suprema() {
        let k = StepPath::new(1, vec![0.0, 0.3, 0.6], vec![0.0, 1.0, -0.5]).unwrap();
        let m = RunningSupremum::new(k, 1, 1.0).unwrap();
        let c = cfg(&[(0.2, 0.4), (0.7, -0.1), (0.8, 0.9)]);
        // H: 0 | 0.4 at 0.2 | 1.4 at 0.3 | -0.1 at 0.6 | -0.2 at 0.7 | 0.7 at 0.8
        assert!((m.evaluate(&c).unwrap()[0] - 1.4).abs() < 1e-15);
        let (alpha, x) = (0.65, 0.5);
        let before = 1.4f64;
        let after = (-0.1f64 + x).max(-0.2 + x).max(0.7 + x);
        let got = m.evaluate_with_insertion(&c, alpha, &Mark::scalar(x)).unwrap()[0];
        assert!((got - before.max(after)).abs() < 1e-15);
        // only the first jump is followed by the overall maximum
        assert!((m.closed_form_gamma(&c).unwrap() - 0.16).abs() < 1e-15);
        let j = m.mark_jacobian(&c, alpha, &Mark::scalar(x)).unwrap().unwrap();
        assert_eq!(j[(0, 0)], 0.0);
        let j = m.mark_jacobian(&c, alpha, &Mark::scalar(0.8)).unwrap().unwrap();
        assert_eq!(j[(0, 0)], 1.0);
    }

    #[test]
    fn atoms_after_end_are_ignored() {
        let m = RunningSupremum::new(StepPath::zero(1), 1, 0.5).unwrap();
        let c = cfg(&[(0.1, 0.3), (0.9, 5.0)]);
        assert_eq!(m.evaluate(&c).unwrap()[0], 0.3);
        assert_eq!(m.closed_form_gamma(&c).unwrap(), 0.09);
    }
}
