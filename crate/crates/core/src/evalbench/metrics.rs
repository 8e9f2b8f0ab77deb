use crate::error::{Error, Result};

fn check_inputs(labels: &[bool], scores: &[f64]) -> Result<usize> {
    if labels.len() != scores.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels vs {} scores",
            labels.len(),
            scores.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::NonFiniteValue(format!("score {s}")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::DegenerateLabels(format!(
            "{pos} positives among {} labels",
            labels.len()
        )));
    }
    Ok(pos)
}

/// Indices sorted by descending score; equal scores keep input order.
fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Average precision with tied scores processed as one block.
///
/// Each block contributes its positives times the precision reached at
/// the end of the block, so the result does not depend on input order.
pub fn auprc(labels: &[bool], scores: &[f64]) -> Result<f64> {
    let pos = check_inputs(labels, scores)?;
    let order = descending_order(scores);
    let mut blocks = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let tp = order[start..end].iter().filter(|&&i| labels[i]).count();
        blocks.push((tp, end));
        start = end;
    }
    if blocks.len() == 1 {
        return Ok(pos as f64 / labels.len() as f64);
    }
    let mut cum_tp = 0usize;
    let mut total = 0.0;
    for (tp, rank) in blocks {
        if tp == 0 {
            continue;
        }
        cum_tp += tp;
        total += tp as f64 * (cum_tp as f64 / rank as f64);
    }
    Ok(total / pos as f64)
}

/// Points `(recall, precision, threshold)` at the end of each tied block.
pub fn pr_curve(labels: &[bool], scores: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    let pos = check_inputs(labels, scores)?;
    let order = descending_order(scores);
    let mut out = Vec::new();
    let mut cum_tp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            cum_tp += usize::from(labels[order[i]]);
            i += 1;
        }
        out.push((cum_tp as f64 / pos as f64, cum_tp as f64 / i as f64, s));
    }
    Ok(out)
}

/// Fraction of positives among the `ceil(n/100)` highest scores; ties at
/// the cut are resolved by input order.
pub fn hit_at_1pct(labels: &[bool], scores: &[f64]) -> Result<f64> {
    check_inputs(labels, scores)?;
    let k = labels.len().div_ceil(100);
    let order = descending_order(scores);
    let hits = order[..k].iter().filter(|&&i| labels[i]).count();
    Ok(hits as f64 / k as f64)
}

/// Fraction of positives whose probability is strictly above `t`.
pub fn recall_at_threshold(labels: &[bool], probs: &[f64], t: f64) -> Result<f64> {
    if labels.len() != probs.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels vs {} probabilities",
            labels.len(),
            probs.len()
        )));
    }
    if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::DegenerateInput(format!("probability {p} outside [0, 1]")));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 {
        return Err(Error::DegenerateLabels("no positive labels".into()));
    }
    let hit = labels.iter().zip(probs).filter(|(&l, &p)| l && p > t).count();
    Ok(hit as f64 / pos as f64)
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = avg;
        }
        i = j;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} values", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::DegenerateInput(format!("spearman needs >= 3 pairs, got {}", x.len())));
    }
    for (name, v) in [("x", x), ("y", y)] {
        if v.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFiniteValue(format!("spearman {name}")));
        }
        if v.iter().all(|&a| a == v[0]) {
            return Err(Error::DegenerateInput(format!("spearman {name} is constant")));
        }
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

/// Mean and standard error of the mean; the latter needs two values.
pub fn mean_sem(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, Some((var / n as f64).sqrt()))
}
