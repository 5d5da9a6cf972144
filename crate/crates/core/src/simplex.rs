use crate::error::{invalid, Result};

/// Euclidean projection of `v` onto the probability simplex.
///
/// Sort-based algorithm: find the largest `k` such that
/// `u_k - (Σ_{j≤k} u_j - 1) / k > 0` over the descending sort `u`, then
/// shift every entry by that threshold and clip at zero.
pub fn project_simplex(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(invalid("cannot project an empty vector"));
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(invalid(format!("non-finite entry at index {i}")));
    }
    if v.iter().all(|&x| x >= 0.0) && (v.iter().sum::<f64>() - 1.0).abs() <= 4.0 * f64::EPSILON {
        return Ok(v.to_vec());
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (k + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|&x| (x - tau).max(0.0)).collect();
    // Renormalize away the last few ulps of rounding so rows sum to 1 tightly.
    let total: f64 = out.iter().sum();
    if total > 0.0 {
        out.iter_mut().for_each(|x| *x /= total);
    }
    Ok(out)
}
