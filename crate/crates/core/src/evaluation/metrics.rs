use super::EvaluationError;

fn check(scores: &[f64], labels: &[bool]) -> Result<(usize, usize), EvaluationError> {
    if scores.len() != labels.len() {
        return Err(EvaluationError::Validation(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(EvaluationError::Validation(format!("score {i} is NaN")));
    }
    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvaluationError::SingleClass);
    }
    Ok((n_pos, n_neg))
}

/// Indices sorted by descending score, grouped into runs of equal score.
fn tie_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Mann-Whitney estimate of `P(score+ > score-)`, ties counting one half.
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64, EvaluationError> {
    let (n_pos, n_neg) = check(scores, labels)?;
    // walk from the lowest score up, counting negatives already passed
    let mut wins = 0.0;
    let mut neg_below = 0.0;
    for g in tie_groups(scores).iter().rev() {
        let pos = g.iter().filter(|&&i| labels[i]).count() as f64;
        let neg = g.len() as f64 - pos;
        wins += pos * neg_below + 0.5 * pos * neg;
        neg_below += neg;
    }
    Ok(wins / (n_pos as f64 * n_neg as f64))
}

/// Error-free transformations for a double-double accumulator.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[derive(Clone, Copy, Default)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    /// `n / d` for integers `n, d` below 2^53, to about 106 bits.
    fn ratio(n: f64, d: f64) -> Dd {
        let q = n / d;
        let r = (-q).mul_add(d, n);
        Dd { hi: q, lo: r / d }
    }

    fn add(self, o: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, o.hi);
        let (hi, lo) = two_sum(s, e + self.lo + o.lo);
        Dd { hi, lo }
    }

    fn div(self, d: f64) -> f64 {
        let q = self.hi / d;
        let r = (-q).mul_add(d, self.hi) + self.lo;
        q + r / d
    }
}

/// Area under the precision-recall step curve: the sum over distinct score
/// thresholds of precision times the recall gained there. Accumulated in
/// double-double so that a perfect ranker scores exactly 1 and a constant
/// scorer exactly the base rate.
pub fn auprc(scores: &[f64], labels: &[bool]) -> Result<f64, EvaluationError> {
    let (n_pos, _) = check(scores, labels)?;
    let mut area = Dd::default();
    let mut tp = 0.0;
    let mut seen = 0.0;
    for g in tie_groups(scores) {
        let d_tp = g.iter().filter(|&&i| labels[i]).count() as f64;
        tp += d_tp;
        seen += g.len() as f64;
        if d_tp > 0.0 {
            area = area.add(Dd::ratio(d_tp * tp, seen));
        }
    }
    Ok(area.div(n_pos as f64))
}
