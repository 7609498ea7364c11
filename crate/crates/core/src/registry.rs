//! Fixed catalog of smooth functions with hand-coded derivatives.
//!
//! Every function has a textual form (`sin`, `affine(2,1)`, `const(0.5)`)
//! used by the run configuration; [`ScalarFn::parse`] and `Display` are inverse.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::point_process::Mark;

/// A real function of one variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarFn {
    Identity,
    Constant(f64),
    Affine { slope: f64, intercept: f64 },
    Sin,
    Cos,
    Tanh,
    Square,
    Cube,
    /// `exp(−y²)`
    Gaussian,
}

impl ScalarFn {
    pub const NAMES: [&'static str; 9] = [
        "identity", "const", "affine", "sin", "cos", "tanh", "square", "cube", "gaussian",
    ];

    pub fn value(&self, y: f64) -> f64 {
        match *self {
            ScalarFn::Identity => y,
            ScalarFn::Constant(c) => c,
            ScalarFn::Affine { slope, intercept } => slope * y + intercept,
            ScalarFn::Sin => y.sin(),
            ScalarFn::Cos => y.cos(),
            ScalarFn::Tanh => y.tanh(),
            ScalarFn::Square => y * y,
            ScalarFn::Cube => y * y * y,
            ScalarFn::Gaussian => (-y * y).exp(),
        }
    }

    pub fn derivative(&self, y: f64) -> f64 {
        match *self {
            ScalarFn::Identity => 1.0,
            ScalarFn::Constant(_) => 0.0,
            ScalarFn::Affine { slope, .. } => slope,
            ScalarFn::Sin => y.cos(),
            ScalarFn::Cos => -y.sin(),
            ScalarFn::Tanh => {
                let t = y.tanh();
                1.0 - t * t
            }
            ScalarFn::Square => 2.0 * y,
            ScalarFn::Cube => 3.0 * y * y,
            ScalarFn::Gaussian => -2.0 * y * (-y * y).exp(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        let (name, args) = split_call(text)?;
        let want = |n: usize| -> Result<()> {
            if args.len() == n {
                Ok(())
            } else {
                Err(Error::InvalidInput(format!("`{name}` takes {n} argument(s), got {}", args.len())))
            }
        };
        let f = match name {
            "identity" => ScalarFn::Identity,
            "const" => {
                want(1)?;
                ScalarFn::Constant(args[0])
            }
            "affine" => {
                want(2)?;
                ScalarFn::Affine {
                    slope: args[0],
                    intercept: args[1],
                }
            }
            "sin" => ScalarFn::Sin,
            "cos" => ScalarFn::Cos,
            "tanh" => ScalarFn::Tanh,
            "square" => ScalarFn::Square,
            "cube" => ScalarFn::Cube,
            "gaussian" => ScalarFn::Gaussian,
            other => return Err(Error::InvalidInput(format!("unknown function `{other}`"))),
        };
        if !matches!(f, ScalarFn::Constant(_) | ScalarFn::Affine { .. }) {
            want(0)?;
        }
        Ok(f)
    }
}

pub(crate) fn split_call(text: &str) -> Result<(&str, Vec<f64>)> {
    match text.find('(') {
        None => Ok((text, Vec::new())),
        Some(open) => {
            let inner = text[open + 1..]
                .strip_suffix(')')
                .ok_or_else(|| Error::InvalidInput(format!("unbalanced parentheses in `{text}`")))?;
            let args = inner
                .split(',')
                .map(|a| {
                    a.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::InvalidInput(format!("bad argument `{a}` in `{text}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((text[..open].trim(), args))
        }
    }
}

impl fmt::Display for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarFn::Identity => f.write_str("identity"),
            ScalarFn::Constant(c) => write!(f, "const({c:?})"),
            ScalarFn::Affine { slope, intercept } => write!(f, "affine({slope:?},{intercept:?})"),
            ScalarFn::Sin => f.write_str("sin"),
            ScalarFn::Cos => f.write_str("cos"),
            ScalarFn::Tanh => f.write_str("tanh"),
            ScalarFn::Square => f.write_str("square"),
            ScalarFn::Cube => f.write_str("cube"),
            ScalarFn::Gaussian => f.write_str("gaussian"),
        }
    }
}

impl FromStr for ScalarFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScalarFn::parse(s)
    }
}

/// Time modulation of a space-time function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeWeight {
    One,
    /// `w(t) = t`
    Linear,
    /// `w(t) = exp(−t)`
    Decay,
}

impl TimeWeight {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            TimeWeight::One => 1.0,
            TimeWeight::Linear => t,
            TimeWeight::Decay => (-t).exp(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TimeWeight::One => "one",
            TimeWeight::Linear => "linear",
            TimeWeight::Decay => "decay",
        }
    }
}

impl FromStr for TimeWeight {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "one" => Ok(TimeWeight::One),
            "linear" => Ok(TimeWeight::Linear),
            "decay" => Ok(TimeWeight::Decay),
            other => Err(Error::InvalidInput(format!("unknown time weight `{other}`"))),
        }
    }
}

/// `f(t, x) = scale · w(t) · s(x_coord)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkFn {
    pub shape: ScalarFn,
    pub coord: usize,
    pub scale: f64,
    pub time: TimeWeight,
}

impl MarkFn {
    pub fn new(shape: ScalarFn) -> Self {
        MarkFn {
            shape,
            coord: 0,
            scale: 1.0,
            time: TimeWeight::One,
        }
    }

    pub fn scaled(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn on_coord(mut self, coord: usize) -> Self {
        self.coord = coord;
        self
    }

    pub fn with_time(mut self, time: TimeWeight) -> Self {
        self.time = time;
        self
    }

    pub fn value(&self, t: f64, x: &Mark) -> f64 {
        self.scale * self.time.value(t) * self.shape.value(x[self.coord])
    }

    /// Gradient in the mark.
    pub fn gradient(&self, t: f64, x: &Mark) -> Mark {
        let mut g = Mark::new(&vec![0.0; x.dim()]);
        g = g.with_coord(self.coord, self.scale * self.time.value(t) * self.shape.derivative(x[self.coord]));
        g
    }
}

/// A smooth map `Φ: ℝ^m → ℝ^d` with its Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub enum SmoothMap {
    Identity,
    /// `Σ u_i`
    Sum,
    /// `Π u_i`
    Product,
    /// `sin(Σ u_i)`
    SinOfSum,
    /// `u ↦ A u`
    Linear(DMatrix<f64>),
}

impl SmoothMap {
    pub fn output_dim(&self, input_dim: usize) -> usize {
        match self {
            SmoothMap::Identity => input_dim,
            SmoothMap::Sum | SmoothMap::Product | SmoothMap::SinOfSum => 1,
            SmoothMap::Linear(a) => a.nrows(),
        }
    }

    pub fn check_input(&self, input_dim: usize) -> Result<()> {
        if let SmoothMap::Linear(a) = self {
            if a.ncols() != input_dim {
                return Err(Error::DimensionMismatch {
                    expected: a.ncols(),
                    got: input_dim,
                    context: "linear map input",
                });
            }
        }
        Ok(())
    }

    pub fn value(&self, u: &DVector<f64>) -> DVector<f64> {
        match self {
            SmoothMap::Identity => u.clone(),
            SmoothMap::Sum => DVector::from_element(1, u.sum()),
            SmoothMap::Product => DVector::from_element(1, u.iter().product()),
            SmoothMap::SinOfSum => DVector::from_element(1, u.sum().sin()),
            SmoothMap::Linear(a) => a * u,
        }
    }

    pub fn jacobian(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let m = u.len();
        match self {
            SmoothMap::Identity => DMatrix::identity(m, m),
            SmoothMap::Sum => DMatrix::from_element(1, m, 1.0),
            SmoothMap::Product => DMatrix::from_fn(1, m, |_, j| {
                u.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, v)| v).product()
            }),
            SmoothMap::SinOfSum => DMatrix::from_element(1, m, u.sum().cos()),
            SmoothMap::Linear(a) => a.clone(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text.trim() {
            "identity" => Ok(SmoothMap::Identity),
            "sum" => Ok(SmoothMap::Sum),
            "product" => Ok(SmoothMap::Product),
            "sin_sum" => Ok(SmoothMap::SinOfSum),
            other => Err(Error::InvalidInput(format!("unknown map `{other}`"))),
        }
    }
}

impl fmt::Display for SmoothMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SmoothMap::Identity => f.write_str("identity"),
            SmoothMap::Sum => f.write_str("sum"),
            SmoothMap::Product => f.write_str("product"),
            SmoothMap::SinOfSum => f.write_str("sin_sum"),
            SmoothMap::Linear(a) => write!(f, "linear({}x{})", a.nrows(), a.ncols()),
        }
    }
}

/// A matrix field `ψ: ℝ^p → ℝ^{p×p}` with `∂ψ/∂z₁`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFn {
    /// `ψ ≡ I`
    Identity,
    /// First column `ψ_{i1}(z) = z_i + ½ sin(z_{i+1 mod p})`, other columns `e_j`.
    /// The Jacobian of the first column has determinant bounded away from zero.
    ShearSine,
}

impl MatrixFn {
    pub fn value(&self, z: &[f64]) -> DMatrix<f64> {
        let p = z.len();
        let mut m = DMatrix::identity(p, p);
        if let MatrixFn::ShearSine = self {
            for i in 0..p {
                m[(i, 0)] = z[i] + 0.5 * z[(i + 1) % p].sin();
            }
        }
        m
    }

    /// Entrywise derivative with respect to the first argument.
    pub fn d_first(&self, z: &[f64]) -> DMatrix<f64> {
        let p = z.len();
        let mut m = DMatrix::zeros(p, p);
        if let MatrixFn::ShearSine = self {
            for i in 0..p {
                let mut d = if i == 0 { 1.0 } else { 0.0 };
                if (i + 1) % p == 0 {
                    d += 0.5 * z[0].cos();
                }
                m[(i, 0)] = d;
            }
        }
        m
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text.trim() {
            "identity" => Ok(MatrixFn::Identity),
            "shear_sine" => Ok(MatrixFn::ShearSine),
            other => Err(Error::InvalidInput(format!("unknown matrix field `{other}`"))),
        }
    }
}

impl fmt::Display for MatrixFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatrixFn::Identity => "identity",
            MatrixFn::ShearSine => "shear_sine",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn central(f: impl Fn(f64) -> f64, y: f64) -> f64 {
        let h = 1e-6 * y.abs().max(1.0);
        (f(y + h) - f(y - h)) / (2.0 * h)
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let all = [
            ScalarFn::Identity,
            ScalarFn::Constant(2.0),
            ScalarFn::Affine { slope: -1.5, intercept: 0.3 },
            ScalarFn::Sin,
            ScalarFn::Cos,
            ScalarFn::Tanh,
            ScalarFn::Square,
            ScalarFn::Cube,
            ScalarFn::Gaussian,
        ];
        for f in all {
            for y in [-2.1, -0.3, 0.0, 0.7, 1.9] {
                let fd = central(|v| f.value(v), y);
                assert!((fd - f.derivative(y)).abs() < 1e-7 * (1.0 + fd.abs()), "{f} at {y}");
            }
        }
    }

    #[test]
    fn parse_errors() {
        assert!(ScalarFn::parse("const").is_err());
        assert!(ScalarFn::parse("sin(1)").is_err());
        assert!(ScalarFn::parse("affine(1").is_err());
        assert!(ScalarFn::parse("nope").is_err());
    }

    #[test]
    fn product_map_jacobian() {
        let u = DVector::from_vec(vec![2.0, 3.0, 5.0]);
        let j = SmoothMap::Product.jacobian(&u);
        assert_eq!(j.as_slice(), &[15.0, 10.0, 6.0]);
    }

    #[test]
    fn shear_sine_first_column_jacobian_is_regular() {
        let psi = MatrixFn::ShearSine;
        for z in [[0.0, 0.0], [1.0, -2.0], [3.1, 0.4]] {
            // Jacobian of the first column, by finite differences.
            let mut jac = DMatrix::zeros(2, 2);
            for k in 0..2 {
                let mut zp = z;
                let mut zm = z;
                zp[k] += 1e-6;
                zm[k] -= 1e-6;
                let col = (psi.value(&zp).column(0) - psi.value(&zm).column(0)) / 2e-6;
                jac.set_column(k, &col);
            }
            assert!(jac.determinant().abs() >= 0.74);
            let d1 = psi.d_first(&z);
            assert!((d1.column(0) - jac.column(0)).norm() < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn scalar_fn_text_round_trip(kind in 0usize..9, a in -10.0f64..10.0, b in -10.0f64..10.0) {
            let f = match kind {
                0 => ScalarFn::Identity,
                1 => ScalarFn::Constant(a),
                2 => ScalarFn::Affine { slope: a, intercept: b },
                3 => ScalarFn::Sin,
                4 => ScalarFn::Cos,
                5 => ScalarFn::Tanh,
                6 => ScalarFn::Square,
                7 => ScalarFn::Cube,
                _ => ScalarFn::Gaussian,
            };
            prop_assert_eq!(ScalarFn::parse(&f.to_string()).unwrap(), f);
        }
    }
}
