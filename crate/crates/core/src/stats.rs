//! Two-sample statistics for comparing experiment conditions.

use crate::error::{Result, SimError};
use crate::real::Real;
use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchTest<T> {
    pub t_statistic: T,
    pub degrees_of_freedom: T,
    pub p_value: T,
}

/// Welch's unequal-variance t-test, two-sided.
///
/// Degenerate inputs follow fixed conventions: fewer than two samples on
/// either side is an error; zero variance on both sides gives p = 1 for
/// equal means and p = 0 otherwise.
pub fn welch<T: Real>(xs: &[T], ys: &[T]) -> Result<WelchTest<T>> {
    if xs.len() < 2 || ys.len() < 2 {
        return Err(SimError::InsufficientData(format!(
            "welch needs at least two samples per side, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(SimError::domain("non-finite sample".to_string()));
    }
    let (mx, vx) = mean_var(xs);
    let (my, vy) = mean_var(ys);
    if vx == T::zero() && vy == T::zero() {
        let p = if mx == my { T::one() } else { T::zero() };
        return Ok(WelchTest {
            t_statistic: if mx == my { T::zero() } else { T::infinity() },
            degrees_of_freedom: T::of((xs.len() + ys.len() - 2) as f64),
            p_value: p,
        });
    }
    let nx = T::of(xs.len() as f64);
    let ny = T::of(ys.len() as f64);
    let sx = vx / nx;
    let sy = vy / ny;
    let se = (sx + sy).sqrt();
    let t = (mx - my) / se;
    let df = (sx + sy) * (sx + sy)
        / (sx * sx / (nx - T::one()) + sy * sy / (ny - T::one()));
    let dist = StudentsT::new(0.0, 1.0, df.as_f64())
        .map_err(|e| SimError::domain(format!("student t: {e}")))?;
    let p = 2.0 * (1.0 - dist.cdf(t.as_f64().abs()));
    Ok(WelchTest {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: T::of(p.clamp(0.0, 1.0)),
    })
}

/// Just the two-sided p-value.
pub fn welch_t_test<T: Real>(xs: &[T], ys: &[T]) -> Result<T> {
    welch(xs, ys).map(|w| w.p_value)
}

fn mean_var<T: Real>(data: &[T]) -> (T, T) {
    let n = T::of(data.len() as f64);
    let mean = data.iter().copied().sum::<T>() / n;
    let ss = data
        .iter()
        .map(|&v| (v - mean) * (v - mean))
        .sum::<T>();
    (mean, ss / (n - T::one()))
}

/// Sample mean and unbiased standard deviation; `std` is `None` for a single
/// sample, where the spread is undefined rather than zero.
pub fn mean_std(data: &[f64]) -> Option<(f64, Option<f64>)> {
    match data.len() {
        0 => None,
        1 => Some((data[0], None)),
        _ => {
            let (m, v) = mean_var(data);
            Some((m, Some(v.sqrt())))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fixture_value() {
        // Hand-checkable case: unit mean difference, equal variances,
        // t = -1, df = 8, two-sided p close to 0.3466.
        let x = [1.0f64, 2.0, 3.0, 4.0, 5.0];
        let y = [2.0f64, 3.0, 4.0, 5.0, 6.0];
        let w = welch(&x, &y).unwrap();
        assert_relative_eq!(w.t_statistic, -1.0, epsilon = 1e-12);
        assert_relative_eq!(w.degrees_of_freedom, 8.0, epsilon = 1e-12);
        assert!((w.p_value - 0.347).abs() < 1e-3, "p = {}", w.p_value);
    }

    #[test]
    fn identical_samples_give_p_one() {
        let x = [0.3, 0.5, 0.9, 1.1];
        let w = welch(&x, &x).unwrap();
        assert_eq!(w.t_statistic, 0.0);
        assert_eq!(w.p_value, 1.0);
    }

    #[test]
    fn zero_variance_conventions() {
        let a = [2.0, 2.0, 2.0];
        let b = [3.0, 3.0];
        assert_eq!(welch_t_test(&a, &a).unwrap(), 1.0);
        assert_eq!(welch_t_test(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn insufficient_data() {
        let a = [1.0];
        let b = [1.0, 2.0];
        assert!(matches!(
            welch_t_test(&a, &b),
            Err(SimError::InsufficientData(_))
        ));
        assert!(welch_t_test::<f64>(&[], &b).is_err());
    }

    #[test]
    fn non_finite_rejected() {
        let a = [1.0, f64::NAN];
        let b = [1.0, 2.0];
        assert!(welch_t_test(&a, &b).is_err());
    }

    #[test]
    fn works_in_f32() {
        let x = [1.0f32, 2.0, 3.0, 4.0, 5.0];
        let y = [2.0f32, 3.0, 4.0, 5.0, 6.0];
        let w = welch(&x, &y).unwrap();
        assert!((w.p_value - 0.3466).abs() < 1e-3);
    }

    #[test]
    fn mean_std_conventions() {
        assert_eq!(mean_std(&[]), None);
        assert_eq!(mean_std(&[4.2]), Some((4.2, None)));
        let (m, s) = mean_std(&[1.0, 3.0]).unwrap();
        assert_relative_eq!(m, 2.0);
        assert_relative_eq!(s.unwrap(), std::f64::consts::SQRT_2, epsilon = 1e-12);
    }
}
