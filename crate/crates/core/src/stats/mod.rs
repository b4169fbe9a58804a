//! Correlation, least-squares line fitting and outlier flagging for the
//! COT versus luminance-difference scatter.

pub mod scatter;

use serde::Serialize;

pub use scatter::{
    emit_scatter, render_scatter_csv, render_scatter_svg, ScatterPoint, SCATTER_HEADER,
};

use crate::error::{Error, Result};

/// Externally studentized residuals beyond this magnitude are flagged.
pub const OUTLIER_T: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegressionResult {
    pub slope: f64,
    pub intercept: f64,
    pub r: f64,
    pub r2: f64,
    pub n: usize,
}

impl RegressionResult {
    pub fn predict(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

/// Ordinary least squares pieces shared by every line fit in the crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Moments {
    pub n: usize,
    pub mean_x: f64,
    pub mean_y: f64,
    pub sxx: f64,
    pub syy: f64,
    pub sxy: f64,
}

impl Moments {
    pub(crate) fn new(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::Shape {
                left: xs.len(),
                right: ys.len(),
            });
        }
        let n = xs.len();
        if n == 0 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        let nf = n as f64;
        let mean_x = xs.iter().sum::<f64>() / nf;
        let mean_y = ys.iter().sum::<f64>() / nf;
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(ys) {
            let (dx, dy) = (x - mean_x, y - mean_y);
            sxx += dx * dx;
            syy += dy * dy;
            sxy += dx * dy;
        }
        Ok(Moments {
            n,
            mean_x,
            mean_y,
            sxx,
            syy,
            sxy,
        })
    }

    pub(crate) fn slope(&self) -> f64 {
        self.sxy / self.sxx
    }

    pub(crate) fn intercept(&self) -> f64 {
        self.mean_y - self.slope() * self.mean_x
    }
}

fn is_constant(xs: &[f64]) -> bool {
    xs.iter().all(|&x| x == xs[0])
}

fn check_pair(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() != ys.len() {
        return Err(Error::Shape {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: xs.len(),
        });
    }
    if is_constant(xs) || is_constant(ys) {
        return Err(Error::DegenerateVariance);
    }
    Ok(())
}

/// Pearson product-moment correlation.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    let m = Moments::new(xs, ys)?;
    Ok((m.sxy / (m.sxx * m.syy).sqrt()).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        // positions i..j hold ranks i+1..=j
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

/// Spearman rank correlation: Pearson on average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    check_pair(xs, ys)?;
    pearson(&average_ranks(xs), &average_ranks(ys))
}

/// Least-squares line of `ys` on `xs`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<RegressionResult> {
    check_pair(xs, ys)?;
    let m = Moments::new(xs, ys)?;
    let r = (m.sxy / (m.sxx * m.syy).sqrt()).clamp(-1.0, 1.0);
    Ok(RegressionResult {
        slope: m.slope(),
        intercept: m.intercept(),
        r,
        r2: r * r,
        n: m.n,
    })
}

/// Externally studentized (deleted) residuals of `fit`. Undefined below
/// four points, where every entry is reported as zero.
pub fn studentized_residuals(xs: &[f64], ys: &[f64], fit: &RegressionResult) -> Vec<f64> {
    let n = xs.len();
    if n < 4 || ys.len() != n {
        return vec![0.0; n];
    }
    let Ok(m) = Moments::new(xs, ys) else {
        return vec![0.0; n];
    };
    let resid: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| y - fit.predict(x))
        .collect();
    let sse: f64 = resid.iter().map(|e| e * e).sum();
    let scale = ys.iter().map(|y| y.abs()).fold(0.0, f64::max).max(1e-300);
    xs.iter()
        .zip(&resid)
        .map(|(&x, &e)| {
            let h = 1.0 / n as f64 + (x - m.mean_x).powi(2) / m.sxx;
            let one_minus_h = 1.0 - h;
            if one_minus_h <= 1e-12 {
                return 0.0;
            }
            let s2 = ((sse - e * e / one_minus_h) / (n - 3) as f64).max(0.0);
            let den = (s2 * one_minus_h).sqrt();
            if den > 1e-12 * scale {
                e / den
            } else if e.abs() > 1e-9 * scale {
                // every other point sits exactly on the line
                e.signum() * f64::INFINITY
            } else {
                0.0
            }
        })
        .collect()
}

pub fn outlier_indices(studentized: &[f64]) -> Vec<usize> {
    studentized
        .iter()
        .enumerate()
        .filter(|(_, t)| t.abs() > OUTLIER_T)
        .map(|(i, _)| i)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_relations() {
        let xs = [0.5, 1.0, 2.0, 3.5, 7.0];
        let up: Vec<f64> = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let down: Vec<f64> = xs.iter().map(|x| -x).collect();
        assert_abs_diff_eq!(pearson(&xs, &up).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pearson(&xs, &down).unwrap(), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn hand_computed_correlation() {
        // sxy = 4, sxx = syy = 5 -> r = 0.8
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert_abs_diff_eq!(r, 0.8, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_and_shape_errors() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::DegenerateVariance)
        ));
        assert!(matches!(
            pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]),
            Err(Error::Shape { left: 3, right: 2 })
        ));
        assert!(matches!(
            fit_line(&[1.0, 2.0], &[1.0, 2.0]),
            Err(Error::InsufficientData { needed: 3, got: 2 })
        ));
        assert!(matches!(
            fit_line(&[0.1, 0.1, 0.1], &[1.0, 2.0, 3.0]),
            Err(Error::DegenerateVariance)
        ));
    }

    #[test]
    fn exact_line_fit() {
        let xs = [0.0, 0.2, 0.4, 0.9, 1.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x + 0.1).collect();
        let f = fit_line(&xs, &ys).unwrap();
        assert_abs_diff_eq!(f.slope, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(f.intercept, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(f.r2, 1.0, epsilon = 1e-12);
        assert_eq!(f.n, 5);
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(
            average_ranks(&[10.0, 20.0, 10.0, 5.0]),
            vec![2.5, 4.0, 2.5, 1.0]
        );
        assert_eq!(average_ranks(&[3.0, 3.0, 3.0]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn spearman_is_rank_based() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [1.0, 8.0, 27.0, 64.0, 1e6];
        assert_abs_diff_eq!(spearman(&xs, &ys).unwrap(), 1.0, epsilon = 1e-12);
        assert!(pearson(&xs, &ys).unwrap() < 0.9);
    }

    #[test]
    fn planted_outlier_is_flagged() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64 / 29.0).collect();
        let mut ys: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| 2.0 * x + 0.01 * ((i * 7919 % 13) as f64 - 6.0) / 6.0)
            .collect();
        ys[12] += 1.0;
        let f = fit_line(&xs, &ys).unwrap();
        let t = studentized_residuals(&xs, &ys, &f);
        assert_eq!(outlier_indices(&t), vec![12]);
    }

    #[test]
    fn tiny_samples_flag_nothing() {
        let xs = [0.0, 0.5, 1.0];
        let ys = [0.0, 1.0, 0.2];
        let f = fit_line(&xs, &ys).unwrap();
        assert_eq!(studentized_residuals(&xs, &ys, &f), vec![0.0; 3]);
    }
}
