//! Benjamini–Hochberg step-up selection.

/// Returns, per input position, whether the hypothesis is rejected at FDR
/// level `alpha`. Ties in p are ordered by input index.
pub fn bh_fdr(p_values: &[f64], alpha: f64) -> Vec<bool> {
    let k = p_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let cutoff = order
        .iter()
        .enumerate()
        .filter(|&(rank, &i)| p_values[i] <= alpha * (rank + 1) as f64 / k as f64)
        .map(|(rank, _)| rank + 1)
        .next_back()
        .unwrap_or(0);
    let mut kept = vec![false; k];
    for &i in &order[..cutoff] {
        kept[i] = true;
    }
    kept
}
