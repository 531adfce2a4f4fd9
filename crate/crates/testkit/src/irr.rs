//! Direct evaluations of the reliability formulas, written without the
//! contingency tables or sums-of-squares identities the library uses.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weights {
    Linear,
    Quadratic,
}

/// Kappa as a ratio of integer disagreement sums:
/// observed = (1/n) Σ_t d(a_t, b_t), expected = (1/n²) Σ_s Σ_t d(a_s, b_t).
/// The (k−1) normalisation cancels, so the ratio is exact.
pub fn kappa_pair(a: &[u8], b: &[u8], weights: Weights) -> Option<f64> {
    let d = |x: u8, y: u8| -> i64 {
        let diff = (x as i64 - y as i64).abs();
        match weights {
            Weights::Linear => diff,
            Weights::Quadratic => diff * diff,
        }
    };
    let n = a.len() as i64;
    let observed: i64 = a.iter().zip(b).map(|(&x, &y)| d(x, y)).sum();
    let expected: i64 = a.iter().flat_map(|&x| b.iter().map(move |&y| d(x, y))).sum();
    if expected == 0 {
        return (a == b).then_some(1.0);
    }
    Some(1.0 - (n * observed) as f64 / expected as f64)
}

pub fn kappa(rows: &[Vec<u8>], weights: Weights) -> Option<f64> {
    let mut vals = Vec::new();
    for a in 0..rows.len() {
        for b in 0..a {
            if let Some(k) = kappa_pair(&rows[b], &rows[a], weights) {
                vals.push(k);
            }
        }
    }
    (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}

/// ICC(3,1) with EMS taken from explicit two-way residuals.
pub fn icc_3_1(rows: &[Vec<u8>]) -> Option<f64> {
    let r = rows.len();
    let n = rows[0].len();
    let x: Vec<Vec<f64>> = rows.iter().map(|row| row.iter().map(|&v| v as f64).collect()).collect();
    let grand: f64 = x.iter().flatten().sum::<f64>() / (r * n) as f64;
    let rater_mean: Vec<f64> = x.iter().map(|row| row.iter().sum::<f64>() / n as f64).collect();
    let item_mean: Vec<f64> = (0..n).map(|j| x.iter().map(|row| row[j]).sum::<f64>() / r as f64).collect();
    let mut residual_ss = 0.0;
    for i in 0..r {
        for j in 0..n {
            let e = x[i][j] - rater_mean[i] - item_mean[j] + grand;
            residual_ss += e * e;
        }
    }
    let between: f64 = item_mean.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() * r as f64;
    let bms = between / (n - 1) as f64;
    let ems = residual_ss / ((n - 1) * (r - 1)) as f64;
    let denom = bms + (r - 1) as f64 * ems;
    (denom.abs() > 1e-12).then(|| (bms - ems) / denom)
}

/// Ordered rater pairs over every item.
#[allow(clippy::needless_range_loop)]
pub fn mad(rows: &[Vec<u8>]) -> f64 {
    let (r, n) = (rows.len(), rows[0].len());
    let mut total = 0u64;
    for j in 0..n {
        for a in 0..r {
            for b in 0..r {
                if a != b {
                    total += (rows[a][j] as i64 - rows[b][j] as i64).unsigned_abs();
                }
            }
        }
    }
    total as f64 / (r * (r - 1) * n) as f64
}

pub fn random_rows(rng: &mut ChaCha8Rng, raters: usize, items: usize, scale_max: u8) -> Vec<Vec<u8>> {
    (0..raters)
        .map(|_| (0..items).map(|_| rng.random_range(1..=scale_max)).collect())
        .collect()
}
