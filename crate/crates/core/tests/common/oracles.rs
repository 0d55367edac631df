//! Scalar reference implementations written as plain nested loops, with no
//! shared code paths with the library.
#![allow(dead_code)]

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn neighborhood(stay: &[usize], note: &[usize], tau: &[f64], beta: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<bool>>) {
    let k = stay.len();
    let mut raw = vec![vec![0.0; k]; k];
    for l in 0..k {
        for m in 0..k {
            let adjacent = (note[l] as i64 - note[m] as i64).abs() <= 1;
            if stay[l] == stay[m] && adjacent {
                raw[l][m] = beta / (beta + (tau[m] - tau[l]).abs());
            }
        }
    }
    let mut n = raw.clone();
    let mut ind = vec![vec![false; k]; k];
    for l in 0..k {
        let mut total = 0.0;
        for m in 0..k {
            total += raw[l][m];
        }
        for m in 0..k {
            n[l][m] = raw[l][m] / total;
            ind[l][m] = n[l][m] != 0.0;
        }
    }
    (raw, n, ind)
}

/// Aware loss; `exclude_m` switches the denominator from `n != l` to `n != m`.
pub fn aware(hs: &[Vec<f64>], ht: &[Vec<f64>], n: &[Vec<f64>], nu: f64, exclude_m: bool) -> f64 {
    let k = hs.len();
    let mut total = 0.0;
    for l in 0..k {
        for m in 0..k {
            let skip = if exclude_m { m } else { l };
            let mut den_st = 0.0;
            let mut den_ts = 0.0;
            for q in 0..k {
                if q != skip {
                    den_st += (dot(&hs[l], &ht[q]) / nu).exp();
                    den_ts += (dot(&ht[l], &hs[q]) / nu).exp();
                }
            }
            let st = ((dot(&hs[l], &ht[m]) / nu).exp() / den_st).ln();
            let ts = ((dot(&ht[l], &hs[m]) / nu).exp() / den_ts).ln();
            total += -n[l][m] / (2.0 * k as f64) * (st + ts);
        }
    }
    total
}

/// `-ln(e^{x_l} / sum_m e^{x_m})` written as `ln(1 + sum_{m != l} e^{x_m - x_l})`
/// for a positive that sits inside its own denominator.
fn neg_log_share(xs: &[f64], keep: &[bool], l: usize) -> f64 {
    let mut rest = 0.0;
    for m in 0..xs.len() {
        if m != l && keep[m] {
            rest += (xs[m] - xs[l]).exp();
        }
    }
    rest.ln_1p()
}

pub fn discriminative(hs: &[Vec<f64>], ht: &[Vec<f64>], ind: &[Vec<bool>], nu: f64) -> f64 {
    let k = hs.len();
    let mut total = 0.0;
    for l in 0..k {
        let mut st = vec![0.0; k];
        let mut ts = vec![0.0; k];
        for m in 0..k {
            st[m] = dot(&hs[l], &ht[m]) / nu;
            ts[m] = dot(&ht[l], &hs[m]) / nu;
        }
        total += 1.0 / (2.0 * k as f64) * (neg_log_share(&st, &ind[l], l) + neg_log_share(&ts, &ind[l], l));
    }
    total
}

pub fn infonce(hs: &[Vec<f64>], ht: &[Vec<f64>], nu: f64) -> f64 {
    let k = hs.len();
    let all = vec![true; k];
    let mut total = 0.0;
    for l in 0..k {
        let mut row = vec![0.0; k];
        let mut col = vec![0.0; k];
        for m in 0..k {
            row[m] = dot(&hs[l], &ht[m]) / nu;
            col[m] = dot(&hs[m], &ht[l]) / nu;
        }
        total += (neg_log_share(&row, &all, l) + neg_log_share(&col, &all, l)) / 2.0;
    }
    total / k as f64
}

/// Probability that a random positive outranks a random negative, ties 1/2.
pub fn auroc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Walks thresholds from the highest score down and adds precision times
/// the recall increment at each distinct score. The sum is kept as an exact
/// fraction, so the only rounding is the final division.
pub fn auprc(scores: &[f64], labels: &[bool]) -> f64 {
    let n_pos = labels.iter().filter(|&&y| y).count() as u128;
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let (mut num, mut den) = (0u128, 1u128);
    let mut prev_tp = 0u128;
    for t in thresholds {
        let mut tp = 0u128;
        let mut k = 0u128;
        for (i, &s) in scores.iter().enumerate() {
            if s >= t {
                k += 1;
                if labels[i] {
                    tp += 1;
                }
            }
        }
        // num/den += (tp - prev_tp) * tp / k
        num = num * k + (tp - prev_tp) * tp * den;
        den *= k;
        let g = gcd(num, den);
        num /= g;
        den /= g;
        prev_tp = tp;
    }
    let den = den * n_pos;
    let g = gcd(num, den);
    assert!(num / g < 1 << 53 && den / g < 1 << 53, "fraction too large to round once");
    (num / g) as f64 / (den / g) as f64
}
