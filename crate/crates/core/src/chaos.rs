//! Exponential Bell polynomials and multiple Poisson integrals `I_n(g^{⊗n})`.

use crate::error::{Error, Result};
use crate::intensity::IntensityMeasure;
use crate::point_process::{integrate_n, Mark, PointConfiguration};
use crate::stats::compensated_sum;

/// Hard cap on the number of terms enumerated by the brute-force expansion.
pub const BRUTE_FORCE_TERM_LIMIT: u128 = 10_000_000;

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// `B_{n,k}(x₁, …, x_{n−k+1})`, summing over all `(c₁, c₂, …)` with
/// `Σ j c_j = n` and `Σ c_j = k` the terms
/// `n! / Π(c_j! (j!)^{c_j}) · Π x_j^{c_j}`.
pub fn bell_polynomial(n: usize, k: usize, x: &[f64]) -> Result<f64> {
    if k > n {
        return Err(Error::Precondition(format!("B_{{{n},{k}}} needs k ≤ n")));
    }
    if n == 0 {
        return Ok(1.0);
    }
    if k == 0 {
        return Ok(0.0);
    }
    let m = n - k + 1;
    if x.len() < m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: x.len(),
            context: "Bell polynomial arguments",
        });
    }
    if let Some(bad) = x[..m].iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("Bell argument x_{} is not finite", bad + 1)));
    }
    let mut terms = Vec::new();
    let mut counts = vec![0usize; m];
    enumerate(n, k, m, &mut counts, &mut |c| {
        let mut coef = factorial(n);
        let mut prod = 1.0;
        for (j, &cj) in c.iter().enumerate() {
            if cj > 0 {
                coef /= factorial(cj) * factorial(j + 1).powi(cj as i32);
                prod *= x[j].powi(cj as i32);
            }
        }
        terms.push(coef * prod);
    });
    Ok(compensated_sum(terms))
}

/// Visit every `c` with `Σ (j+1) c_j = weight` and `Σ c_j = parts`, choosing
/// `c_{len−1}` first.
fn enumerate(weight: usize, parts: usize, len: usize, c: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
    if len == 0 {
        if weight == 0 && parts == 0 {
            visit(c);
        }
        return;
    }
    let j = len;
    let max = (weight / j).min(parts);
    for cj in 0..=max {
        c[j - 1] = cj;
        enumerate(weight - cj * j, parts - cj, len - 1, c, visit);
    }
    c[j - 1] = 0;
}

/// A test function `g(t, x)` together with `ν(g) = ∫∫ g d(dt × ν)`.
pub struct ChaosIntegrand<G> {
    g: G,
    nu_g: f64,
}

impl<G: Fn(f64, &Mark) -> f64> ChaosIntegrand<G> {
    pub fn new(g: G, measure: &IntensityMeasure) -> Result<Self> {
        let nu_g = measure.space_time_integral(&g)?;
        Ok(ChaosIntegrand { g, nu_g })
    }

    pub fn with_compensator(g: G, nu_g: f64) -> Self {
        ChaosIntegrand { g, nu_g }
    }

    pub fn nu_g(&self) -> f64 {
        self.nu_g
    }

    pub fn at(&self, t: f64, x: &Mark) -> f64 {
        (self.g)(t, x)
    }

    /// The same function scaled by `λ`.
    pub fn scaled(&self, lambda: f64) -> ChaosIntegrand<impl Fn(f64, &Mark) -> f64 + '_> {
        ChaosIntegrand {
            g: move |t, x: &Mark| lambda * (self.g)(t, x),
            nu_g: lambda * self.nu_g,
        }
    }

    fn atom_values(&self, config: &PointConfiguration) -> Result<Vec<f64>> {
        config
            .atoms()
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let v = (self.g)(a.time, &a.mark);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::NonFinite {
                        atom: i,
                        detail: format!("g = {v}"),
                    })
                }
            })
            .collect()
    }
}

/// `Ñ(g)` and `N(g^j)` for `j = 1..=m`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSums {
    pub compensated: f64,
    /// `sums[j − 1] = N(g^j)`
    pub sums: Vec<f64>,
}

impl PowerSums {
    pub fn compute<G: Fn(f64, &Mark) -> f64>(config: &PointConfiguration, g: &ChaosIntegrand<G>, m: usize) -> Result<Self> {
        let sums = (1..=m.max(1))
            .map(|j| integrate_n(config, |t, x| g.at(t, x).powi(j as i32)))
            .collect::<Result<Vec<_>>>()?;
        Ok(PowerSums {
            compensated: sums[0] - g.nu_g,
            sums,
        })
    }

    /// Bell arguments `(Ñ(g), −1! N(g²), 2! N(g³), …, (−1)^{j−1} (j−1)! N(g^j))`.
    pub fn bell_arguments(&self) -> Vec<f64> {
        let mut x = vec![self.compensated];
        for j in 2..=self.sums.len() {
            let sign = if j % 2 == 0 { -1.0 } else { 1.0 };
            x.push(sign * factorial(j - 1) * self.sums[j - 1]);
        }
        x
    }
}

/// `I_n(g^{⊗n}) = Σ_k B_{n,k}(Ñ(g), −1! N(g²), …)`.
pub fn multiple_integral_bell<G: Fn(f64, &Mark) -> f64>(config: &PointConfiguration, g: &ChaosIntegrand<G>, n: usize) -> Result<f64> {
    if n == 0 {
        return Ok(1.0);
    }
    let x = PowerSums::compute(config, g, n)?.bell_arguments();
    let terms = (1..=n).map(|k| bell_polynomial(n, k, &x)).collect::<Result<Vec<_>>>()?;
    Ok(compensated_sum(terms))
}

/// Number of terms the brute-force expansion visits.
pub fn brute_force_terms(atoms: usize, n: usize) -> u128 {
    let mut total: u128 = 0;
    let mut binom: u128 = 1;
    for j in 0..=n {
        if j > 0 {
            binom = binom * (n - j + 1) as u128 / j as u128;
        }
        let perms: u128 = (0..j).map(|i| atoms.saturating_sub(i) as u128).product();
        total = total.saturating_add(binom.saturating_mul(perms.max(1)));
    }
    total
}

/// `I_n(g^{⊗n})` from the definition: expand each `Ñ = N − ν`, sum the
/// `N`-parts over ordered tuples of distinct atoms, and integrate the
/// `ν`-parts (diagonals are `ν`-null):
/// `I_n = Σ_j C(n, j) (−ν(g))^{n−j} Σ_{i₁,…,i_j distinct} g(x_{i₁})⋯g(x_{i_j})`.
pub fn multiple_integral_bruteforce<G: Fn(f64, &Mark) -> f64>(
    config: &PointConfiguration,
    g: &ChaosIntegrand<G>,
    n: usize,
) -> Result<f64> {
    let terms = brute_force_terms(config.len(), n);
    if terms > BRUTE_FORCE_TERM_LIMIT {
        return Err(Error::TooManyTerms {
            terms,
            limit: BRUTE_FORCE_TERM_LIMIT,
        });
    }
    let values = g.atom_values(config)?;
    let mut used = vec![false; values.len()];
    let mut out = Vec::with_capacity(n + 1);
    let mut binom = 1.0;
    for j in 0..=n {
        if j > 0 {
            binom = binom * (n - j + 1) as f64 / j as f64;
        }
        let mut products = Vec::new();
        ordered_distinct_products(&values, j, 1.0, &mut used, &mut products);
        out.push(binom * (-g.nu_g).powi((n - j) as i32) * compensated_sum(products));
    }
    Ok(compensated_sum(out))
}

fn ordered_distinct_products(values: &[f64], depth: usize, acc: f64, used: &mut [bool], out: &mut Vec<f64>) {
    if depth == 0 {
        out.push(acc);
        return;
    }
    for i in 0..values.len() {
        if !used[i] {
            used[i] = true;
            ordered_distinct_products(values, depth - 1, acc * values[i], used, out);
            used[i] = false;
        }
    }
}

/// Residuals of the exponential chaos expansion on one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentialCheck {
    /// `exp(N(log(1 + g)) − ν(g))`
    pub lhs: f64,
    /// `partial_sums[m] = 1 + Σ_{n=1}^{m} I_n / n!`, `m = 0..=n_max`.
    pub partial_sums: Vec<f64>,
    /// `|lhs − partial_sums[m]|`
    pub residuals: Vec<f64>,
}

impl ExponentialCheck {
    pub fn final_residual(&self) -> f64 {
        *self.residuals.last().unwrap_or(&f64::NAN)
    }

    /// Non-increasing until the residual reaches `floor`.
    pub fn is_monotone_above(&self, floor: f64) -> bool {
        self.residuals.windows(2).all(|w| w[1] <= w[0] || w[0] <= floor)
    }
}

/// Compare `e^{N(log(1+g)) − ν(g)}` with `1 + Σ_{n ≤ n_max} I_n(g^{⊗n}) / n!`.
///
/// Requires `−½ ≤ g ≤ 0` at every atom.
pub fn exponential_identity_check<G: Fn(f64, &Mark) -> f64>(
    config: &PointConfiguration,
    g: &ChaosIntegrand<G>,
    n_max: usize,
) -> Result<ExponentialCheck> {
    if n_max == 0 {
        return Err(Error::Precondition("n_max must be at least 1".into()));
    }
    let values = g.atom_values(config)?;
    if let Some(i) = values.iter().position(|v| !(-0.5..=0.0).contains(v)) {
        return Err(Error::Precondition(format!("g = {} at atom {i} is outside [−1/2, 0]", values[i])));
    }
    let log_sum = compensated_sum(values.iter().map(|v| v.ln_1p()));
    let lhs = (log_sum - g.nu_g).exp();
    let x = PowerSums::compute(config, g, n_max)?.bell_arguments();
    let mut partial_sums = vec![1.0];
    let mut terms = vec![1.0];
    for n in 1..=n_max {
        let i_n = compensated_sum((1..=n).map(|k| bell_polynomial(n, k, &x)).collect::<Result<Vec<_>>>()?);
        terms.push(i_n / factorial(n));
        partial_sums.push(compensated_sum(terms.iter().copied()));
    }
    let residuals = partial_sums.iter().map(|s| (lhs - s).abs()).collect();
    Ok(ExponentialCheck {
        lhs,
        partial_sums,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::intensity::{LevyDensity, MarkLaw};
    use crate::point_process::{sample_indexed, Atom};
    use crate::rng::StreamKey;
    use crate::stats::Estimate;

    /// `B_{n,k}` by the recurrence `Σ_{i=1}^{n−k+1} C(n−1, i−1) x_i B_{n−i,k−1}`.
    fn bell_recurrence(n: usize, k: usize, x: &[f64]) -> f64 {
        if n == 0 && k == 0 {
            return 1.0;
        }
        if n == 0 || k == 0 {
            return 0.0;
        }
        let mut total = 0.0;
        for i in 1..=(n + 1 - k) {
            let binom = factorial(n - 1) / (factorial(i - 1) * factorial(n - i));
            total += binom * x[i - 1] * bell_recurrence(n - i, k - 1, x);
        }
        total
    }

    fn config(atoms: &[(f64, f64)]) -> PointConfiguration {
        PointConfiguration::new(1.0, 1, atoms.iter().map(|&(t, x)| Atom::new(t, Mark::scalar(x))).collect()).unwrap()
    }

    #[test]
    fn small_bell_polynomials() {
        let x = [2.0, 3.0, 5.0];
        assert_eq!(bell_polynomial(1, 1, &x).unwrap(), 2.0);
        assert_eq!(bell_polynomial(3, 2, &x).unwrap(), 3.0 * 2.0 * 3.0);
        assert_eq!(bell_polynomial(3, 3, &x).unwrap(), 8.0);
        assert_eq!(bell_polynomial(3, 1, &x).unwrap(), 5.0);
        assert!(bell_polynomial(2, 3, &x).is_err());
    }

    #[test]
    fn bell_row_sums_are_bell_numbers() {
        let ones = [1.0; 12];
        let bell = [1.0, 1.0, 2.0, 5.0, 15.0, 52.0, 203.0, 877.0, 4140.0, 21147.0, 115975.0, 678570.0, 4213597.0];
        for n in 1..=12 {
            let s: f64 = (1..=n).map(|k| bell_polynomial(n, k, &ones).unwrap()).sum();
            assert_eq!(s, bell[n]);
        }
    }

    #[test]
    fn low_order_integrals() {
        let c = config(&[(0.1, 0.5), (0.4, -1.0), (0.7, 2.0)]);
        let g = ChaosIntegrand::with_compensator(|_t: f64, x: &Mark| x[0], 0.3);
        let tilde = 1.5 - 0.3;
        assert!((multiple_integral_bell(&c, &g, 1).unwrap() - tilde).abs() < 1e-15);
        assert!((multiple_integral_bruteforce(&c, &g, 1).unwrap() - tilde).abs() < 1e-15);
        // Σ_{i≠j} g_i g_j − 2 ν(g) N(g) + ν(g)² = Ñ(g)² − N(g²)
        let n2 = 0.25 + 1.0 + 4.0;
        let expected = tilde * tilde - n2;
        assert!((multiple_integral_bell(&c, &g, 2).unwrap() - expected).abs() < 1e-14);
        assert!((multiple_integral_bruteforce(&c, &g, 2).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn empty_config_with_centred_g_vanishes() {
        let e = PointConfiguration::empty(1.0, 1);
        let g = ChaosIntegrand::with_compensator(|_t: f64, x: &Mark| x[0], 0.0);
        for n in 1..=5 {
            assert_eq!(multiple_integral_bell(&e, &g, n).unwrap(), 0.0);
            assert_eq!(multiple_integral_bruteforce(&e, &g, n).unwrap(), 0.0);
        }
    }

    #[test]
    fn six_atoms_order_four() {
        let c = config(&[(0.05, 0.3), (0.2, -0.8), (0.35, 1.1), (0.5, 0.6), (0.65, -0.2), (0.9, 1.7)]);
        let g = ChaosIntegrand::with_compensator(|_t: f64, x: &Mark| x[0], 0.45);
        let a = multiple_integral_bell(&c, &g, 4).unwrap();
        let b = multiple_integral_bruteforce(&c, &g, 4).unwrap();
        assert!((a - b).abs() <= 1e-9 * b.abs());
    }

    #[test]
    fn guard_rejects_large_expansions() {
        let atoms: Vec<_> = (1..=40).map(|i| (i as f64 / 41.0, 0.1)).collect();
        let c = config(&atoms);
        let g = ChaosIntegrand::with_compensator(|_t: f64, x: &Mark| x[0], 0.0);
        assert!(matches!(multiple_integral_bruteforce(&c, &g, 6), Err(Error::TooManyTerms { .. })));
    }

    #[test]
    fn exponential_identity_trivial_and_single_atom() {
        let c = config(&[(0.3, 1.5)]);
        let zero = ChaosIntegrand::with_compensator(|_t: f64, _x: &Mark| 0.0, 0.0);
        let check = exponential_identity_check(&c, &zero, 12).unwrap();
        assert_eq!(check.lhs, 1.0);
        assert_eq!(check.final_residual(), 0.0);

        // uniform mass 3 on [1, 2], g ≡ −1/4: LHS = (3/4) e^{3/4}
        let measure = IntensityMeasure::new(MarkLaw::Scalar(LevyDensity::uniform(1.0, 2.0, 3.0).unwrap()), 1.0, 0.5).unwrap();
        let g = ChaosIntegrand::new(|_t: f64, _x: &Mark| -0.25, &measure).unwrap();
        let check = exponential_identity_check(&c, &g, 12).unwrap();
        assert!((check.lhs - 0.75 * 0.75f64.exp()).abs() < 1e-12);
        assert!(check.final_residual() < 1e-10, "{:?}", check.residuals);

        let bad = ChaosIntegrand::with_compensator(|_t: f64, _x: &Mark| 0.1, 0.0);
        assert!(exponential_identity_check(&c, &bad, 3).is_err());
    }

    #[test]
    fn first_chaos_isometry_and_orthogonality() {
        let measure = IntensityMeasure::new(MarkLaw::Scalar(LevyDensity::uniform(1.0, 2.0, 3.0).unwrap()), 1.0, 0.5).unwrap();
        let f = ChaosIntegrand::new(|_t: f64, x: &Mark| x[0].sin(), &measure).unwrap();
        let g = ChaosIntegrand::new(|t: f64, x: &Mark| x[0] - t, &measure).unwrap();
        let f2 = measure.space_time_integral(|_t, x| x[0].sin().powi(2)).unwrap();
        let key = StreamKey::new(17);
        let n = 100_000;
        let (mut prod, mut sq) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for i in 0..n {
            let c = sample_indexed(&measure, &key, i as u64);
            let i1 = multiple_integral_bell(&c, &f, 1).unwrap();
            let i2 = multiple_integral_bell(&c, &g, 2).unwrap();
            prod.push(i1 * i2);
            sq.push(i1 * i1);
        }
        let orth = Estimate::mean_of(&prod);
        let iso = Estimate::mean_of(&sq);
        assert!(orth.within(0.0, 3.0), "{orth:?}");
        assert!(iso.within(f2, 3.0), "{iso:?} vs {f2}");
    }

    proptest! {
        #[test]
        fn bell_agrees_with_recurrence(n in 1usize..=10, k_off in 0usize..10, x in prop::collection::vec(-2.0f64..2.0, 10)) {
            let k = 1 + k_off % n;
            let a = bell_polynomial(n, k, &x).unwrap();
            let b = bell_recurrence(n, k, &x);
            prop_assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }

        #[test]
        fn homogeneity(lambda in -3.0f64..3.0, n in 1usize..=6, xs in prop::collection::vec(-1.5f64..1.5, 0..6)) {
            let atoms: Vec<_> = xs.iter().enumerate().map(|(i, &x)| ((i + 1) as f64 / 8.0, x)).collect();
            let c = config(&atoms);
            let g = ChaosIntegrand::with_compensator(|t: f64, x: &Mark| x[0].sin() + t, 0.7);
            let base = multiple_integral_bell(&c, &g, n).unwrap();
            let scaled = multiple_integral_bell(&c, &g.scaled(lambda), n).unwrap();
            let expected = lambda.powi(n as i32) * base;
            prop_assert!((scaled - expected).abs() <= 1e-10 * expected.abs().max(1e-300) + 1e-14);
        }
    }
}
