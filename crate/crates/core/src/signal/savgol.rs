//! Savitzky-Golay smoothing with shrinking symmetric windows at the edges.

use crate::error::{Error, Result};

/// Convolution weights that evaluate the least-squares polynomial of degree
/// `order` (fitted over `2 * half + 1` samples) at the window centre.
pub fn smoothing_weights(half: usize, order: usize) -> Vec<f64> {
    let order = order.min(2 * half);
    let m = order + 1;
    // normal matrix: sum_k k^(i+j)
    let mut normal = vec![vec![0.0; m]; m];
    for k in -(half as i64)..=(half as i64) {
        let k = k as f64;
        for (i, row) in normal.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v += k.powi((i + j) as i32);
            }
        }
    }
    let mut rhs = vec![0.0; m];
    rhs[0] = 1.0;
    let z = solve(normal, rhs);
    (-(half as i64)..=(half as i64))
        .map(|k| {
            let k = k as f64;
            z.iter().enumerate().map(|(j, zj)| zj * k.powi(j as i32)).sum()
        })
        .collect()
}

/// Gaussian elimination with partial pivoting; the systems here are tiny and
/// well conditioned.
#[allow(clippy::needless_range_loop)]
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap_or(col);
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// A reusable filter: weights for every half-width from 0 up to the full window.
#[derive(Debug, Clone)]
pub struct SavitzkyGolay {
    window: usize,
    weights: Vec<Vec<f64>>,
}

impl SavitzkyGolay {
    pub fn new(window: usize, order: usize) -> Result<Self> {
        if window.is_multiple_of(2) || window <= order {
            return Err(Error::BadConfig(format!(
                "Savitzky-Golay window {window} must be odd and exceed order {order}"
            )));
        }
        let half = window / 2;
        let weights = (0..=half).map(|h| smoothing_weights(h, order)).collect();
        Ok(SavitzkyGolay { window, weights })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() < self.window {
            return Err(Error::SignalTooShort { len: x.len(), window: self.window });
        }
        let n = x.len();
        let half = self.window / 2;
        Ok((0..n)
            .map(|i| {
                let h = half.min(i).min(n - 1 - i);
                let w = &self.weights[h];
                // centred form keeps constant runs exact
                let c = x[i];
                c + x[i - h..=i + h].iter().zip(w).map(|(a, b)| (a - c) * b).sum::<f64>()
            })
            .collect())
    }
}

/// Central-difference derivative per sample (one-sided at the ends).
pub fn gradient(x: &[f64], dt: f64) -> Vec<f64> {
    let n = x.len();
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| {
                if i == 0 {
                    (x[1] - x[0]) / dt
                } else if i == n - 1 {
                    (x[n - 1] - x[n - 2]) / dt
                } else {
                    (x[i + 1] - x[i - 1]) / (2.0 * dt)
                }
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_five_point_quadratic_weights() {
        let w = smoothing_weights(2, 2);
        let expected = [-3.0, 12.0, 17.0, 12.0, -3.0].map(|v| v / 35.0);
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_sum_to_one() {
        for h in 0..8 {
            for p in 0..5 {
                let s: f64 = smoothing_weights(h, p).iter().sum();
                assert!((s - 1.0).abs() < 1e-10, "h={h} p={p}");
            }
        }
    }

    #[test]
    fn rejects_bad_params_and_short_input() {
        assert!(SavitzkyGolay::new(10, 2).is_err());
        assert!(SavitzkyGolay::new(3, 3).is_err());
        let f = SavitzkyGolay::new(11, 2).unwrap();
        assert!(matches!(f.apply(&[1.0; 10]), Err(Error::SignalTooShort { len: 10, window: 11 })));
    }

    #[test]
    fn gradient_of_line() {
        let g = gradient(&[0.0, 2.0, 4.0, 6.0], 1.0);
        assert_eq!(g, vec![2.0; 4]);
    }
}
