use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::env::{EnvConfig, IntersectionState};
use crate::error::{invalid, Result};

/// Stratified sampling of points in a box.
///
/// Each dimension `k` is split into `strata[k]` equal intervals with one uniform
/// draw per interval; the Cartesian product of the per-dimension draws is then
/// subsampled to `n` points without replacement.
pub fn sample_initial_states(n: usize, ranges: &[(f64, f64)], strata: &[usize], seed: u64) -> Result<Vec<Vec<f64>>> {
    if ranges.len() != strata.len() {
        return Err(invalid(format!("{} ranges but {} strata counts", ranges.len(), strata.len())));
    }
    if let Some(k) = strata.iter().position(|&m| m == 0) {
        return Err(invalid(format!("dimension {k} has zero strata")));
    }
    if let Some(k) = ranges.iter().position(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo <= hi)) {
        return Err(invalid(format!("dimension {k} has an invalid range {:?}", ranges[k])));
    }
    let total = strata.iter().try_fold(1usize, |acc, &m| acc.checked_mul(m));
    let total = match total {
        Some(t) => t,
        None => return Err(invalid("product of strata overflows")),
    };
    if n > total {
        return Err(invalid(format!("{n} samples requested but only {total} strata cells exist")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<Vec<f64>> = ranges
        .iter()
        .zip(strata)
        .map(|(&(lo, hi), &m)| {
            let w = (hi - lo) / m as f64;
            (0..m).map(|k| lo + w * (k as f64 + rng.gen::<f64>())).collect()
        })
        .collect();
    let picks = index::sample(&mut rng, total, n);
    Ok(picks
        .iter()
        .map(|mut cell| {
            let mut point = vec![0.0; strata.len()];
            for k in (0..strata.len()).rev() {
                point[k] = draws[k][cell % strata[k]];
                cell /= strata[k];
            }
            point
        })
        .collect())
}

/// Initial states drawn per `config.init`: two dimensions per vehicle, distance
/// before the center and speed as a fraction of |v_d|, both mapped into the
/// vehicle's travel direction.
pub fn sample_scenarios(n: usize, config: &EnvConfig, seed: u64) -> Result<Vec<IntersectionState>> {
    config.validate()?;
    let r = &config.init;
    let nv = config.n_vehicles();
    let ranges: Vec<(f64, f64)> = (0..nv).flat_map(|_| [r.distance, r.speed_fraction]).collect();
    let points = sample_initial_states(n, &ranges, &vec![r.strata; 2 * nv], seed)?;
    points
        .into_iter()
        .map(|x| {
            let p = (0..nv).map(|i| -x[2 * i] * config.travel_sign(i)).collect();
            let v = (0..nv).map(|i| x[2 * i + 1] * config.desired_speeds[i]).collect();
            IntersectionState::new(p, v)
        })
        .collect()
}
