//! Hand-written baseline policies.

use crate::env::{EnvConfig, IntersectionState};

pub fn constant_speed_policy(state: &IntersectionState) -> Vec<f64> {
    vec![0.0; state.n_vehicles()]
}

fn conflicts(config: &EnvConfig, i: usize, j: usize) -> bool {
    config.lanes[i].axis != config.lanes[j].axis
}

/// First-come-first-served intersection rule.
///
/// Vehicles that have not yet cleared the conflict zone are ranked by
/// |distance to center| (ties go to the lower index). A vehicle with a
/// higher-ranked vehicle on a crossing lane targets a stop at
/// `conflict_half_width + stop_margin` before the center with a constant
/// kinematic deceleration; everyone else tracks
/// the desired speed with `a = clamp(k (v_d - v))`.
pub fn rule_based_policy(state: &IntersectionState, config: &EnvConfig) -> Vec<f64> {
    let n = state.n_vehicles();
    let half = config.conflict_half_width;
    let dist: Vec<f64> = (0..n).map(|i| config.distance_to_center(state, i)).collect();
    let active = |i: usize| dist[i] > -half;
    let ahead = |j: usize, i: usize| (dist[j].abs(), j) < (dist[i].abs(), i);
    (0..n)
        .map(|i| {
            let track = (config.rule_gain * (config.desired_speeds[i] - state.v[i])).clamp(-config.g, config.g);
            let must_yield = active(i) && (0..n).any(|j| j != i && active(j) && conflicts(config, i, j) && ahead(j, i));
            if !must_yield {
                return track;
            }
            let sign = config.travel_sign(i);
            let u = (state.v[i] * sign).max(0.0);
            // Euler stopping distance under constant deceleration b is u^2/(2b) + u dt/2
            let gap = dist[i] - (half + config.stop_margin) - 0.5 * u * config.dt;
            let brake = if gap > 0.5 * u * config.dt { u * u / (2.0 * gap) } else { u / config.dt };
            -sign * brake.min(config.g)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::rollout;

    fn state(p: &[f64], v: &[f64]) -> IntersectionState {
        IntersectionState::new(p.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn lone_vehicle_tracks_desired_speed() {
        let c = EnvConfig::default();
        // only vehicle 0 is before the center, the others have cleared it
        let s = state(&[-20.0, -50.0, -50.0, 50.0], &[3.0, -5.0, -5.0, 5.0]);
        let a = rule_based_policy(&s, &c);
        assert_eq!(a[0], (2.0f64 * (5.0 - 3.0)).clamp(-9.81, 9.81));
        let s = state(&[-20.0, -50.0, -50.0, 50.0], &[-10.0, -5.0, -5.0, 5.0]);
        assert_eq!(rule_based_policy(&s, &c)[0], 9.81);
    }

    #[test]
    fn far_conflicting_vehicle_brakes() {
        let c = EnvConfig::default();
        // vehicle 0 is 5 m out, ego 20 m out; 2 and 3 have cleared
        let s = state(&[-5.0, 20.0, -50.0, 50.0], &[5.0, -5.0, -5.0, 5.0]);
        let a = rule_based_policy(&s, &c);
        assert_eq!(a[0], 0.0);
        // ego travels in -x, so braking is a positive acceleration
        assert!(a[1] > 0.0);
    }

    #[test]
    fn equidistant_tie_goes_to_lower_index() {
        let c = EnvConfig::default();
        let s = state(&[-15.0, 15.0, -50.0, 50.0], &[5.0, -5.0, -5.0, 5.0]);
        let a = rule_based_policy(&s, &c);
        assert_eq!(a[0], 0.0);
        assert!(a[1] > 0.0);
    }

    #[test]
    fn yielding_vehicle_stops_before_the_zone() {
        let c = EnvConfig::default();
        // vehicle 0 reaches the center first; ego must wait
        let s0 = state(&[-8.0, 14.0, -60.0, 60.0], &[5.0, -5.0, -5.0, 5.0]);
        let tr = rollout(|s| rule_based_policy(s, &c), &s0, &c).unwrap();
        assert!(!tr.collided());
        let closest = tr.states.iter().map(|s| c.distance_to_center(s, 1)).fold(f64::INFINITY, f64::min);
        assert!(closest < -10.0, "ego eventually passes");
        let first = tr.states.iter().position(|s| c.distance_to_center(s, 0) < -c.conflict_half_width).unwrap();
        assert!(tr.states[..first].iter().all(|s| c.distance_to_center(s, 1) > c.conflict_half_width));
    }

    #[test]
    fn parallel_lanes_do_not_conflict() {
        let c = EnvConfig::default();
        let s = state(&[-5.0, 60.0, 20.0, -60.0], &[5.0, -5.0, -5.0, 5.0]);
        let a = rule_based_policy(&s, &c);
        assert_eq!(a[2], 0.0);
    }

    #[test]
    fn constant_speed_preserves_velocities() {
        let c = EnvConfig::default();
        let s0 = state(&[-20.0, 18.0, 25.0, -14.0], &[4.0, -5.0, -3.5, 6.0]);
        assert_eq!(constant_speed_policy(&s0), vec![0.0; 4]);
        let tr = rollout(constant_speed_policy, &s0, &c).unwrap();
        assert!(tr.states.iter().all(|s| s.v == s0.v));
    }

    #[test]
    fn constant_speed_collides_on_simultaneous_arrival() {
        let c = EnvConfig::default();
        let s0 = state(&[1.75 - 20.0, 1.75 + 20.0, 60.0, -60.0], &[5.0, -5.0, -5.0, 5.0]);
        let tr = rollout(constant_speed_policy, &s0, &c).unwrap();
        assert!(tr.collided());
        let tr = rollout(|s| rule_based_policy(s, &c), &s0, &c).unwrap();
        assert!(!tr.collided());
    }
}
