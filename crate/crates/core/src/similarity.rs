//! Similarity metrics between question and answer representations.
//!
//! Every metric is applied to L2-normalized vectors. [`score_and_grad`]
//! differentiates through the normalization so callers can backpropagate
//! into the raw representations.

use std::fmt;
use std::str::FromStr;

use crate::error::SimilarityError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MetricKind {
    Cosine,
    Polynomial,
    Sigmoid,
    Rbf,
    Euclidean,
    Exponential,
    Manhattan,
    Gesd,
    Aesd,
}

impl MetricKind {
    pub const ALL: [MetricKind; 9] = [
        MetricKind::Cosine,
        MetricKind::Polynomial,
        MetricKind::Sigmoid,
        MetricKind::Rbf,
        MetricKind::Euclidean,
        MetricKind::Exponential,
        MetricKind::Manhattan,
        MetricKind::Gesd,
        MetricKind::Aesd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Cosine => "cosine",
            MetricKind::Polynomial => "polynomial",
            MetricKind::Sigmoid => "sigmoid",
            MetricKind::Rbf => "rbf",
            MetricKind::Euclidean => "euclidean",
            MetricKind::Exponential => "exponential",
            MetricKind::Manhattan => "manhattan",
            MetricKind::Gesd => "gesd",
            MetricKind::Aesd => "aesd",
        }
    }

    fn uses_gamma(self) -> bool {
        !matches!(
            self,
            MetricKind::Cosine | MetricKind::Euclidean | MetricKind::Manhattan
        )
    }

    fn uses_c(self) -> bool {
        matches!(
            self,
            MetricKind::Polynomial | MetricKind::Sigmoid | MetricKind::Gesd | MetricKind::Aesd
        )
    }
}

/// A metric with its hyperparameters. Unused hyperparameters are ignored.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricSpec {
    pub kind: MetricKind,
    pub gamma: f64,
    pub c: f64,
    pub degree: u32,
}

impl Default for MetricSpec {
    fn default() -> Self {
        MetricSpec::new(MetricKind::Cosine)
    }
}

impl MetricSpec {
    /// Metric with default hyperparameters `gamma = 1`, `c = 1`, `d = 2`.
    pub fn new(kind: MetricKind) -> Self {
        MetricSpec {
            kind,
            gamma: 1.0,
            c: 1.0,
            degree: 2,
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = c;
        self
    }

    pub fn with_degree(mut self, degree: u32) -> Self {
        self.degree = degree;
        self
    }

    pub fn validate(&self) -> Result<(), SimilarityError> {
        if self.kind.uses_gamma() && !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(SimilarityError::Parse(format!(
                "{}: gamma must be positive",
                self.kind.name()
            )));
        }
        if self.kind == MetricKind::Polynomial && self.degree < 1 {
            return Err(SimilarityError::Parse(
                "polynomial: degree must be >= 1".into(),
            ));
        }
        if !self.c.is_finite() {
            return Err(SimilarityError::Parse("c must be finite".into()));
        }
        Ok(())
    }

    /// Evaluates the metric on two vectors taken as given (callers pass
    /// unit vectors).
    pub fn evaluate(&self, x: &[f64], y: &[f64]) -> Result<f64, SimilarityError> {
        check_dims(x, y)?;
        Ok(self.eval_unchecked(x, y))
    }

    fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        let g = self.gamma;
        match self.kind {
            MetricKind::Cosine => dot(x, y) / (norm(x) * norm(y)),
            MetricKind::Polynomial => (g * dot(x, y) + self.c).powi(self.degree as i32),
            MetricKind::Sigmoid => (g * dot(x, y) + self.c).tanh(),
            MetricKind::Rbf => (-g * sq_dist(x, y)).exp(),
            MetricKind::Euclidean => 1.0 / (1.0 + sq_dist(x, y).sqrt()),
            MetricKind::Exponential => (-g * l1_dist(x, y)).exp(),
            MetricKind::Manhattan => 1.0 / (1.0 + l1_dist(x, y)),
            MetricKind::Gesd => {
                1.0 / (1.0 + sq_dist(x, y).sqrt()) * logistic(g * (dot(x, y) + self.c))
            }
            MetricKind::Aesd => {
                0.5 / (1.0 + sq_dist(x, y).sqrt()) + 0.5 * logistic(g * (dot(x, y) + self.c))
            }
        }
    }

    /// Gradients of [`MetricSpec::evaluate`] with respect to `x` and `y`,
    /// treating the formula literally (no normalization).
    ///
    /// Where a distance term is not differentiable the subgradient is zero:
    /// `‖x − y‖` at `x = y`, and `sign(0) = 0` for the L1 metrics.
    pub fn gradient(&self, x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>), SimilarityError> {
        check_dims(x, y)?;
        Ok(self.grad_unchecked(x, y))
    }

    fn grad_unchecked(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let g = self.gamma;
        let n = x.len();
        let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        // d/dx of the shared pieces, with d/dy obtained by symmetry.
        let dot_terms = |scale: f64| -> (Vec<f64>, Vec<f64>) {
            (
                y.iter().map(|v| scale * v).collect(),
                x.iter().map(|v| scale * v).collect(),
            )
        };
        let diff_terms = |scale: f64, dir: &[f64]| -> (Vec<f64>, Vec<f64>) {
            (
                dir.iter().map(|v| scale * v).collect(),
                dir.iter().map(|v| -scale * v).collect(),
            )
        };
        let euclid_dir = || -> (f64, Vec<f64>) {
            let dist = sq_dist(x, y).sqrt();
            if dist == 0.0 {
                (0.0, vec![0.0; n])
            } else {
                (dist, diff.iter().map(|v| v / dist).collect())
            }
        };
        let sign: Vec<f64> = diff
            .iter()
            .map(|&v| {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            })
            .collect();

        match self.kind {
            MetricKind::Cosine => {
                let (nx, ny) = (norm(x), norm(y));
                let d = dot(x, y);
                let gx = x
                    .iter()
                    .zip(y)
                    .map(|(&xi, &yi)| yi / (nx * ny) - d * xi / (nx * nx * nx * ny))
                    .collect();
                let gy = x
                    .iter()
                    .zip(y)
                    .map(|(&xi, &yi)| xi / (nx * ny) - d * yi / (nx * ny * ny * ny))
                    .collect();
                (gx, gy)
            }
            MetricKind::Polynomial => {
                let base = g * dot(x, y) + self.c;
                let d = self.degree as i32;
                dot_terms(d as f64 * base.powi(d - 1) * g)
            }
            MetricKind::Sigmoid => {
                let t = (g * dot(x, y) + self.c).tanh();
                dot_terms((1.0 - t * t) * g)
            }
            MetricKind::Rbf => {
                let k = (-g * sq_dist(x, y)).exp();
                diff_terms(-2.0 * g * k, &diff)
            }
            MetricKind::Euclidean => {
                let (dist, dir) = euclid_dir();
                diff_terms(-1.0 / ((1.0 + dist) * (1.0 + dist)), &dir)
            }
            MetricKind::Exponential => {
                let k = (-g * l1_dist(x, y)).exp();
                diff_terms(-g * k, &sign)
            }
            MetricKind::Manhattan => {
                let l1 = l1_dist(x, y);
                diff_terms(-1.0 / ((1.0 + l1) * (1.0 + l1)), &sign)
            }
            MetricKind::Gesd | MetricKind::Aesd => {
                let (dist, dir) = euclid_dir();
                let e = 1.0 / (1.0 + dist);
                let s = logistic(g * (dot(x, y) + self.c));
                let de = -e * e;
                let ds = s * (1.0 - s) * g;
                let (we, ws) = if self.kind == MetricKind::Gesd {
                    (s, e)
                } else {
                    (0.5, 0.5)
                };
                let (ex, ey) = diff_terms(we * de, &dir);
                let (sx, sy) = dot_terms(ws * ds);
                (
                    ex.iter().zip(&sx).map(|(a, b)| a + b).collect(),
                    ey.iter().zip(&sy).map(|(a, b)| a + b).collect(),
                )
            }
        }
    }
}

impl fmt::Display for MetricSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = self.kind.name();
        match self.kind {
            MetricKind::Cosine | MetricKind::Euclidean | MetricKind::Manhattan => {
                write!(f, "{name}")
            }
            MetricKind::Polynomial => {
                write!(
                    f,
                    "{name}(gamma={},d={},c={})",
                    self.gamma, self.degree, self.c
                )
            }
            MetricKind::Rbf | MetricKind::Exponential => write!(f, "{name}(gamma={})", self.gamma),
            MetricKind::Sigmoid | MetricKind::Gesd | MetricKind::Aesd => {
                write!(f, "{name}(gamma={},c={})", self.gamma, self.c)
            }
        }
    }
}

impl FromStr for MetricSpec {
    type Err = SimilarityError;

    /// Parses `name` or `name(key=value,...)` with keys `gamma`, `c`, `d`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(i) => {
                let inner = s[i + 1..]
                    .strip_suffix(')')
                    .ok_or_else(|| SimilarityError::Parse(format!("missing ')' in {s:?}")))?;
                (&s[..i], inner)
            }
            None => (s, ""),
        };
        let kind = MetricKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(name.trim()))
            .ok_or_else(|| SimilarityError::Parse(format!("unknown metric {name:?}")))?;
        let mut spec = MetricSpec::new(kind);
        for arg in args.split(',').map(str::trim).filter(|a| !a.is_empty()) {
            let (k, v) = arg.split_once('=').ok_or_else(|| {
                SimilarityError::Parse(format!("expected key=value, got {arg:?}"))
            })?;
            let bad = || SimilarityError::Parse(format!("bad value in {arg:?}"));
            match k.trim() {
                "gamma" if kind.uses_gamma() => spec.gamma = v.trim().parse().map_err(|_| bad())?,
                "c" if kind.uses_c() => spec.c = v.trim().parse().map_err(|_| bad())?,
                "d" | "degree" if kind == MetricKind::Polynomial => {
                    spec.degree = v.trim().parse().map_err(|_| bad())?
                }
                other => {
                    return Err(SimilarityError::Parse(format!(
                        "{} takes no parameter {other:?}",
                        kind.name()
                    )))
                }
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn check_dims(x: &[f64], y: &[f64]) -> Result<(), SimilarityError> {
    if x.len() != y.len() {
        return Err(SimilarityError::DimensionMismatch(x.len(), y.len()));
    }
    Ok(())
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn norm(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn l1_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).sum()
}

pub(crate) fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `x / ‖x‖₂`.
pub fn normalize(x: &[f64]) -> Result<Vec<f64>, SimilarityError> {
    let n = norm(x);
    if n == 0.0 || !n.is_finite() {
        return Err(SimilarityError::ZeroVector);
    }
    Ok(x.iter().map(|v| v / n).collect())
}

/// Backpropagates a gradient taken at `u = x / ‖x‖` to `x`:
/// `(g − u (u · g)) / ‖x‖`.
pub fn normalize_backward(x: &[f64], u: &[f64], grad_u: &[f64]) -> Vec<f64> {
    let n = norm(x);
    let ug = dot(u, grad_u);
    grad_u
        .iter()
        .zip(u)
        .map(|(&g, &ui)| (g - ui * ug) / n)
        .collect()
}

/// Similarity of two raw representations after normalization.
pub fn score(metric: &MetricSpec, x: &[f64], y: &[f64]) -> Result<f64, SimilarityError> {
    check_dims(x, y)?;
    Ok(metric.eval_unchecked(&normalize(x)?, &normalize(y)?))
}

/// Score and gradients with respect to the raw (pre-normalization)
/// representations.
pub fn score_and_grad(
    metric: &MetricSpec,
    x: &[f64],
    y: &[f64],
) -> Result<(f64, Vec<f64>, Vec<f64>), SimilarityError> {
    check_dims(x, y)?;
    let (u, v) = (normalize(x)?, normalize(y)?);
    let s = metric.eval_unchecked(&u, &v);
    let (gu, gv) = metric.grad_unchecked(&u, &v);
    Ok((
        s,
        normalize_backward(x, &u, &gu),
        normalize_backward(y, &v, &gv),
    ))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn unit(v: &[f64]) -> Vec<f64> {
        normalize(v).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&[3.0, 4.0]).unwrap(), vec![0.6, 0.8]);
        let u = unit(&[0.3, -0.2, 0.9]);
        let uu = normalize(&u).unwrap();
        for (a, b) in u.iter().zip(&uu) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(normalize(&[0.0, 0.0]), Err(SimilarityError::ZeroVector));
    }

    #[test]
    fn identity_values() {
        let x = unit(&[0.2, -0.5, 0.1, 0.7]);
        let m = |k| MetricSpec::new(k);
        // closed forms: 1/(1+e^-2) and 0.5 + 0.5/(1+e^-2)
        let logistic2 = 1.0 / (1.0 + (-2f64).exp());
        assert!((m(MetricKind::Cosine).evaluate(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        let gesd = m(MetricKind::Gesd).evaluate(&x, &x).unwrap();
        assert!((gesd - logistic2).abs() < 1e-15);
        assert!((gesd - 0.880_797).abs() < 1e-6);
        let aesd = m(MetricKind::Aesd).evaluate(&x, &x).unwrap();
        assert!((aesd - (0.5 + 0.5 * logistic2)).abs() < 1e-15);
        assert!((aesd - 0.940_399).abs() < 1e-6);
        assert_eq!(m(MetricKind::Euclidean).evaluate(&x, &x).unwrap(), 1.0);
        assert_eq!(
            m(MetricKind::Cosine)
                .evaluate(&[1.0, 0.0], &[0.0, 1.0])
                .unwrap(),
            0.0
        );
    }

    #[test]
    fn dimension_mismatch() {
        let m = MetricSpec::default();
        assert_eq!(
            m.evaluate(&[1.0], &[1.0, 0.0]),
            Err(SimilarityError::DimensionMismatch(1, 2))
        );
    }

    #[test]
    fn parse_and_print() {
        for text in [
            "cosine",
            "gesd(gamma=1,c=1)",
            "aesd(gamma=0.5,c=1)",
            "polynomial(gamma=0.5,d=2,c=1)",
            "sigmoid(gamma=1.5,c=1)",
            "rbf(gamma=0.5)",
            "exponential(gamma=1)",
            "euclidean",
            "manhattan",
        ] {
            let m: MetricSpec = text.parse().unwrap();
            assert_eq!(m.to_string(), text);
        }
        let m: MetricSpec = "gesd(gamma=1.0,c=1)".parse().unwrap();
        assert_eq!(m, MetricSpec::new(MetricKind::Gesd));
        assert!("gesd(gamma=0)".parse::<MetricSpec>().is_err());
        assert!("cosine(gamma=1)".parse::<MetricSpec>().is_err());
        assert!("polynomial(d=0)".parse::<MetricSpec>().is_err());
        assert!("hamming".parse::<MetricSpec>().is_err());
        assert!("rbf(gamma=1".parse::<MetricSpec>().is_err());
    }

    #[test]
    fn subgradient_at_coincidence_is_finite() {
        let x = unit(&[0.3, 0.4, 0.5]);
        for k in MetricKind::ALL {
            let (gx, gy) = MetricSpec::new(k).gradient(&x, &x).unwrap();
            assert!(gx.iter().chain(&gy).all(|v| v.is_finite()), "{k:?}");
        }
    }

    fn vec3() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-1.0f64..1.0, 5)
            .prop_filter("non-zero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-3)
    }

    proptest! {
        #[test]
        fn symmetric_with_range(a in vec3(), b in vec3(), gi in 0usize..3) {
            let gamma = [0.5, 1.0, 1.5][gi];
            let (x, y) = (unit(&a), unit(&b));
            for k in MetricKind::ALL {
                let m = MetricSpec::new(k).with_gamma(gamma);
                let s = m.evaluate(&x, &y).unwrap();
                prop_assert!((s - m.evaluate(&y, &x).unwrap()).abs() < 1e-12);
                match k {
                    MetricKind::Cosine => prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&s)),
                    MetricKind::Sigmoid => prop_assert!(s > -1.0 && s < 1.0),
                    MetricKind::Polynomial => {}
                    _ => prop_assert!(s > 0.0 && s <= 1.0),
                }
                if matches!(k, MetricKind::Rbf | MetricKind::Euclidean | MetricKind::Exponential | MetricKind::Manhattan) {
                    prop_assert!(m.evaluate(&x, &x).unwrap() >= s);
                }
                let (gx, gy) = m.gradient(&x, &y).unwrap();
                let (hy, hx) = m.gradient(&y, &x).unwrap();
                for i in 0..x.len() {
                    prop_assert!((gx[i] - hx[i]).abs() < 1e-12);
                    prop_assert!((gy[i] - hy[i]).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn gesd_and_aesd_factorization(a in vec3(), b in vec3()) {
            let (x, y) = (unit(&a), unit(&b));
            let dist: f64 = x.iter().zip(&y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            let d: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
            let euclid = MetricSpec::new(MetricKind::Euclidean).evaluate(&x, &y).unwrap();
            prop_assert!((euclid - 1.0 / (1.0 + dist)).abs() < 1e-15);
            let sig = 1.0 / (1.0 + (-(d + 1.0)).exp());
            let gesd = MetricSpec::new(MetricKind::Gesd).evaluate(&x, &y).unwrap();
            let aesd = MetricSpec::new(MetricKind::Aesd).evaluate(&x, &y).unwrap();
            prop_assert!((gesd - euclid * sig).abs() < 1e-14);
            prop_assert!((aesd - (0.5 * euclid + 0.5 * sig)).abs() < 1e-14);
        }
    }
}
