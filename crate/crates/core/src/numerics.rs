//! Scalar and vector statistics shared by the rest of the crate: diagonal
//! Gaussian densities, closed-form least squares for the three estimator
//! forms, and a ring-buffered window of state vectors.
//!
//! All reductions are two-pass (mean first, deviations second).

use std::f64::consts::PI;

use crate::error::{shape_err, Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Paired scalar samples for fitting a one-dimensional relation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset1D {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Dataset1D {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return shape_err(format!("{} inputs vs {} outputs", xs.len(), ys.len()));
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("dataset contains a non-finite value".into()));
        }
        Ok(Self { xs, ys })
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            xs: Vec::with_capacity(n),
            ys: Vec::with_capacity(n),
        }
    }

    /// Appends one sample. Non-finite samples are dropped and reported as `false`.
    pub fn push(&mut self, x: f64, y: f64) -> bool {
        if x.is_finite() && y.is_finite() {
            self.xs.push(x);
            self.ys.push(y);
            true
        } else {
            false
        }
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    /// The same samples with inputs and outputs exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            xs: self.ys.clone(),
            ys: self.xs.clone(),
        }
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation, two-pass.
pub fn std_dev(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Log density of a diagonal Gaussian.
pub fn gaussian_log_density(x: &[f64], mu: &[f64], sigma: &[f64]) -> Result<f64> {
    if x.len() != mu.len() || x.len() != sigma.len() {
        return shape_err(format!(
            "x has {} elements, mu {}, sigma {}",
            x.len(),
            mu.len(),
            sigma.len()
        ));
    }
    if let Some(s) = sigma.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::Domain(format!("standard deviation {s} is not positive")));
    }
    Ok(log_density_unchecked(x, mu, sigma))
}

pub(crate) fn log_density_unchecked(x: &[f64], mu: &[f64], sigma: &[f64]) -> f64 {
    let mut quad = 0.0;
    let mut log_norm = 0.0;
    for ((xi, mi), si) in x.iter().zip(mu).zip(sigma) {
        let z = (xi - mi) / si;
        quad += z * z;
        log_norm += si.ln();
    }
    -0.5 * quad - log_norm - 0.5 * x.len() as f64 * LN_2PI
}

/// Univariate normal density.
pub fn normal_pdf(x: f64, mu: f64, sigma: f64) -> f64 {
    let z = (x - mu) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
}

/// Largest `x` at which the univariate normal density equals `p`.
pub fn inverse_pdf_largest(p: f64, mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("standard deviation {sigma} is not positive")));
    }
    let beta = 1.0 / (sigma * (2.0 * PI).sqrt());
    if !(p > 0.0) {
        return Err(Error::Domain(format!("density {p} is not positive")));
    }
    if p > beta {
        return Err(Error::Domain(format!(
            "density {p} exceeds the peak density {beta}"
        )));
    }
    let ratio = (p / beta).ln().min(0.0);
    Ok(mu + sigma * (-2.0 * ratio).sqrt())
}

fn sums(d: &Dataset1D) -> (f64, f64) {
    (mean(&d.xs), mean(&d.ys))
}

/// Ordinary least squares for `y = m x + b`.
pub fn ols_fit_mb(d: &Dataset1D) -> Result<(f64, f64)> {
    if d.len() < 2 {
        return Err(Error::EmptyInput(format!(
            "line fit needs at least 2 points, got {}",
            d.len()
        )));
    }
    let (mx, my) = sums(d);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in d.xs.iter().zip(&d.ys) {
        let dx = x - mx;
        sxx += dx * dx;
        sxy += dx * (y - my);
    }
    if !(sxx > 0.0) {
        return Err(Error::DegenerateDesign("all inputs are identical".into()));
    }
    let m = sxy / sxx;
    Ok((m, my - m * mx))
}

/// Least-squares intercept of the involution `y = -x + b`.
pub fn ols_fit_b_single(d: &Dataset1D) -> Result<f64> {
    if d.is_empty() {
        return Err(Error::EmptyInput("intercept fit on an empty dataset".into()));
    }
    let (mx, my) = sums(d);
    Ok(mx + my)
}

/// Least-squares slope of `y = m x` (intercept fixed at zero).
pub fn ols_fit_m_fixed_b(d: &Dataset1D) -> Result<f64> {
    if d.is_empty() {
        return Err(Error::EmptyInput("slope fit on an empty dataset".into()));
    }
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in d.xs.iter().zip(&d.ys) {
        sxx += x * x;
        sxy += x * y;
    }
    if !(sxx > 0.0) {
        return Err(Error::DegenerateDesign("all inputs are zero".into()));
    }
    Ok(sxy / sxx)
}

/// Fixed-capacity ring of equally sized vectors (oldest evicted first).
#[derive(Debug, Clone)]
pub struct RunningWindow {
    capacity: usize,
    dim: usize,
    data: Vec<f64>,
    head: usize,
    len: usize,
}

impl RunningWindow {
    pub fn new(capacity: usize, dim: usize) -> Self {
        assert!(capacity > 0, "window capacity must be positive");
        Self {
            capacity,
            dim,
            data: vec![0.0; capacity * dim],
            head: 0,
            len: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, sample: &[f64]) -> Result<()> {
        if sample.len() != self.dim {
            return shape_err(format!(
                "window holds {}-vectors, got {}",
                self.dim,
                sample.len()
            ));
        }
        let start = self.head * self.dim;
        self.data[start..start + self.dim].copy_from_slice(sample);
        self.head = (self.head + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
        Ok(())
    }

    /// Iterates the retained samples, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        let first = (self.head + self.capacity - self.len) % self.capacity;
        (0..self.len).map(move |k| {
            let slot = (first + k) % self.capacity;
            &self.data[slot * self.dim..(slot + 1) * self.dim]
        })
    }

    pub fn mean(&self) -> Result<Vec<f64>> {
        if self.is_empty() {
            return Err(Error::EmptyInput("mean of an empty window".into()));
        }
        let mut acc = vec![0.0; self.dim];
        for row in self.iter() {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        let n = self.len as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        Ok(acc)
    }
}

/// Per-element mean absolute deviation around the window mean.
pub fn window_mad(w: &RunningWindow) -> Result<Vec<f64>> {
    let centre = w.mean()?;
    let mut acc = vec![0.0; w.dim()];
    for row in w.iter() {
        for ((a, v), c) in acc.iter_mut().zip(row).zip(&centre) {
            *a += (v - c).abs();
        }
    }
    let n = w.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ds(points: &[(f64, f64)]) -> Dataset1D {
        Dataset1D::new(
            points.iter().map(|p| p.0).collect(),
            points.iter().map(|p| p.1).collect(),
        )
        .unwrap()
    }

    #[test]
    fn log_density_at_mean() {
        let sigma = [0.5, 2.0, 1.5];
        let beta = 1.0 / (sigma.iter().product::<f64>() * (2.0 * PI).powf(1.5));
        let got = gaussian_log_density(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &sigma).unwrap();
        assert!((got - beta.ln()).abs() < 1e-12);
    }

    #[test]
    fn log_density_standard_normal_at_one() {
        let got = gaussian_log_density(&[1.0], &[0.0], &[1.0]).unwrap();
        assert!((got.exp() - 0.241_970_724_519_143_37).abs() < 1e-15);
    }

    #[test]
    fn density_ratio_of_identical_distributions_is_one() {
        let tau = [0.3, -0.1];
        let mu = [0.25, 0.0];
        let sigma = [0.37, 0.37];
        let r = (gaussian_log_density(&tau, &mu, &sigma).unwrap()
            - gaussian_log_density(&tau, &mu, &sigma).unwrap())
        .exp();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn log_density_errors() {
        assert!(matches!(
            gaussian_log_density(&[0.0], &[0.0], &[0.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            gaussian_log_density(&[0.0, 1.0], &[0.0], &[1.0]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn inverse_pdf_examples() {
        let beta = |s: f64| 1.0 / (s * (2.0 * PI).sqrt());
        assert_eq!(inverse_pdf_largest(beta(1.0), 0.3, 1.0).unwrap(), 0.3);
        let x = inverse_pdf_largest(beta(1.0) * (-0.5f64).exp(), 0.0, 1.0).unwrap();
        assert!((x - 1.0).abs() < 1e-12);
        let x = inverse_pdf_largest(beta(2.0) * (-2.0f64).exp(), 5.0, 2.0).unwrap();
        assert!((x - 9.0).abs() < 1e-12);
        assert!(inverse_pdf_largest(beta(1.0) * 1.01, 0.0, 1.0).is_err());
        assert!(inverse_pdf_largest(0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn ols_line_examples() {
        let (m, b) = ols_fit_mb(&ds(&[(0.0, 1.0), (1.0, 3.0), (2.0, 5.0)])).unwrap();
        assert!((m - 2.0).abs() < 1e-14 && (b - 1.0).abs() < 1e-14);
        let (m, b) = ols_fit_mb(&ds(&[(-1.0, 4.0), (0.5, 4.0), (3.0, 4.0)])).unwrap();
        assert!(m.abs() < 1e-15 && (b - 4.0).abs() < 1e-15);
        assert!(matches!(
            ols_fit_mb(&ds(&[(1.0, 0.0), (1.0, 2.0)])),
            Err(Error::DegenerateDesign(_))
        ));
        assert!(matches!(ols_fit_mb(&ds(&[(1.0, 0.0)])), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn ols_single_examples() {
        assert_eq!(ols_fit_b_single(&ds(&[(1.0, 1.0), (3.0, -1.0)])).unwrap(), 2.0);
        assert_eq!(ols_fit_b_single(&ds(&[(0.0, 0.0)])).unwrap(), 0.0);
        assert_eq!(ols_fit_b_single(&ds(&[(2.5, -2.5)])).unwrap(), 0.0);
        assert!(ols_fit_b_single(&Dataset1D::default()).is_err());
    }

    #[test]
    fn ols_fixed_intercept_examples() {
        assert!((ols_fit_m_fixed_b(&ds(&[(1.0, 2.0), (2.0, 4.0)])).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(ols_fit_m_fixed_b(&ds(&[(1.0, 0.0)])).unwrap(), 0.0);
        assert!(matches!(
            ols_fit_m_fixed_b(&ds(&[(0.0, 1.0), (0.0, 2.0)])),
            Err(Error::DegenerateDesign(_))
        ));
    }

    #[test]
    fn ols_fixed_intercept_recovers_noisy_slope() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let normal = rand_distr::Normal::new(0.0, 0.01).unwrap();
        let mut d = Dataset1D::default();
        for _ in 0..100 {
            let x: f64 = rng.gen_range(-1.0..1.0);
            d.push(x, -1.5 * x + rng.sample(normal));
        }
        assert!((ols_fit_m_fixed_b(&d).unwrap() + 1.5).abs() < 0.05);
    }

    #[test]
    fn window_mad_examples() {
        let mut w = RunningWindow::new(4, 1);
        assert!(window_mad(&w).is_err());
        w.push(&[1.0]).unwrap();
        w.push(&[3.0]).unwrap();
        assert_eq!(window_mad(&w).unwrap(), vec![1.0]);

        let mut w = RunningWindow::new(3, 1);
        for v in [0.0, 0.0, 6.0] {
            w.push(&[v]).unwrap();
        }
        assert!((window_mad(&w).unwrap()[0] - 8.0 / 3.0).abs() < 1e-15);

        let mut w = RunningWindow::new(5, 2);
        for _ in 0..7 {
            w.push(&[4.0, -1.0]).unwrap();
        }
        assert_eq!(w.len(), 5);
        assert_eq!(window_mad(&w).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn window_evicts_oldest() {
        let mut w = RunningWindow::new(2, 1);
        for v in [1.0, 2.0, 3.0] {
            w.push(&[v]).unwrap();
        }
        let kept: Vec<f64> = w.iter().map(|r| r[0]).collect();
        assert_eq!(kept, vec![2.0, 3.0]);
        assert!(w.push(&[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn inverse_pdf_round_trips(mu in -10.0f64..10.0, sigma in 0.01f64..5.0, frac in 1e-6f64..1.0) {
            let beta = 1.0 / (sigma * (2.0 * PI).sqrt());
            let p = beta * frac;
            let x = inverse_pdf_largest(p, mu, sigma).unwrap();
            prop_assert!(x >= mu);
            let back = normal_pdf(x, mu, sigma);
            prop_assert!(((back - p) / p).abs() < 1e-10);
        }

        #[test]
        fn line_fit_is_a_minimum(points in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..40)) {
            let d = ds(&points);
            if let Ok((m, b)) = ols_fit_mb(&d) {
                let sse = |m: f64, b: f64| points.iter().map(|(x, y)| (y - m * x - b).powi(2)).sum::<f64>();
                let best = sse(m, b);
                for (dm, db) in [(1e-3, 0.0), (-1e-3, 0.0), (0.0, 1e-3), (0.0, -1e-3), (1e-3, 1e-3), (-1e-3, 1e-3), (1e-3, -1e-3), (-1e-3, -1e-3)] {
                    prop_assert!(sse(m + dm, b + db) >= best - 1e-9 * (1.0 + best));
                }
            }
        }

        #[test]
        fn single_fit_invariant_under_swap(points in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..30), k in 0usize..30) {
            // y = -x + b is its own inverse, so (y, x) lies on the same line as (x, y).
            let base = ols_fit_b_single(&ds(&points)).unwrap();
            let mut swapped = points.clone();
            let k = k % swapped.len();
            swapped[k] = (points[k].1, points[k].0);
            let after = ols_fit_b_single(&ds(&swapped)).unwrap();
            prop_assert!((base - after).abs() < 1e-12);
        }

        #[test]
        fn mad_is_permutation_invariant(values in proptest::collection::vec(-100.0f64..100.0, 1..50), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            let mut shuffled = values.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut a = RunningWindow::new(values.len(), 1);
            let mut b = RunningWindow::new(values.len(), 1);
            for (x, y) in values.iter().zip(&shuffled) {
                a.push(&[*x]).unwrap();
                b.push(&[*y]).unwrap();
            }
            let (ma, mb) = (window_mad(&a).unwrap()[0], window_mad(&b).unwrap()[0]);
            prop_assert!((ma - mb).abs() <= 1e-12 * (1.0 + ma.abs()));
        }
    }
}
