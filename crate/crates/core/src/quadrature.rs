//! Globally adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

use crate::error::{Error, Result};

/// Absolute tolerance used for all intensity integrals.
pub const DEFAULT_ABS_TOL: f64 = 1e-10;

const MAX_SUBDIVISIONS: usize = 4000;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the 7-point rule, aligned with odd Kronrod nodes.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

fn gauss_kronrod<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, hi: f64) -> Segment {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Segment {
        lo,
        hi,
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs(),
    }
}

/// Integrate `f` over `[lo, hi]` to absolute tolerance `abs_tol`.
///
/// An empty or reversed interval integrates to zero.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, abs_tol: f64) -> Result<f64> {
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite integration bounds [{lo}, {hi}]")));
    }
    if hi <= lo {
        return Ok(0.0);
    }
    let mut segments = vec![gauss_kronrod(&mut f, lo, hi)];
    loop {
        let total_err: f64 = segments.iter().map(|s| s.error).sum();
        let total: f64 = segments.iter().map(|s| s.value).sum();
        if !total.is_finite() {
            return Err(Error::Quadrature {
                lo,
                hi,
                error: f64::INFINITY,
                evaluations: segments.len() * 15,
            });
        }
        if total_err <= abs_tol.max(1e-15 * total.abs()) {
            // Sum the smallest contributions first.
            let mut values: Vec<f64> = segments.iter().map(|s| s.value).collect();
            values.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
            return Ok(values.iter().sum());
        }
        if segments.len() >= MAX_SUBDIVISIONS {
            return Err(Error::Quadrature {
                lo,
                hi,
                error: total_err,
                evaluations: segments.len() * 15,
            });
        }
        let (worst, _) = segments
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.error.total_cmp(&b.1.error))
            .expect("at least one segment");
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.lo + seg.hi);
        if mid <= seg.lo || mid >= seg.hi {
            return Err(Error::Quadrature {
                lo,
                hi,
                error: total_err,
                evaluations: segments.len() * 15,
            });
        }
        segments.push(gauss_kronrod(&mut f, seg.lo, mid));
        segments.push(gauss_kronrod(&mut f, mid, seg.hi));
    }
}

/// Integrate a function whose mass concentrates near `lo > 0` by splitting
/// `[lo, hi]` at geometrically spaced points.
pub fn integrate_geometric<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, abs_tol: f64) -> Result<f64> {
    if hi <= lo {
        return Ok(0.0);
    }
    if lo <= 0.0 || hi / lo < 16.0 {
        return integrate(f, lo, hi, abs_tol);
    }
    let pieces = ((hi / lo).log2().ceil() as usize).clamp(1, 64);
    let ratio = (hi / lo).powf(1.0 / pieces as f64);
    let tol = abs_tol / pieces as f64;
    let mut total = 0.0;
    let mut a = lo;
    for k in 0..pieces {
        let b = if k + 1 == pieces { hi } else { a * ratio };
        total += integrate(&mut f, a, b, tol)?;
        a = b;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let v = integrate(|x| 3.0 * x * x, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 8.0).abs() < 1e-13);
    }

    #[test]
    fn power_law_tail() {
        // ∫_{0.04}^1 x^{-3/2} dx = 2(0.04^{-1/2} - 1) = 8
        let v = integrate_geometric(|x| x.powf(-1.5), 0.04, 1.0, 1e-10).unwrap();
        assert!((v - 8.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn steep_power_law() {
        let eps: f64 = 1e-4;
        let exact = 2.0 * (eps.powf(-0.5) - 1.0);
        let v = integrate_geometric(|x| x.powf(-1.5), eps, 1.0, 1e-10).unwrap();
        assert!(((v - exact) / exact).abs() < 1e-10);
    }

    #[test]
    fn empty_interval_is_zero() {
        assert_eq!(integrate(|x| x, 1.0, 1.0, 1e-10).unwrap(), 0.0);
        assert_eq!(integrate(|x| x, 2.0, 1.0, 1e-10).unwrap(), 0.0);
    }

    #[test]
    fn oscillatory() {
        let v = integrate(f64::sin, 0.0, std::f64::consts::PI, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }
}
