//! Three-phase joint trajectories blended with the minimum-jerk profile.

use super::grammar::Verb;
use super::pattern::Pattern;
use crate::action::JOINTS;
use crate::numerics::RngStream;

/// End of the reach phase and start of the manipulation phase, in normalised time.
pub const REACH_END: f64 = 0.4;
pub const MANIP_START: f64 = 0.5;
pub const JITTER: f64 = 0.03;

pub const HOME: [f64; JOINTS] = [0.0, -0.3, 0.4, -0.2, 0.0];

/// `s(τ) = 10τ³ − 15τ⁴ + 6τ⁵`, clamped to `[0, 1]` outside the unit interval.
pub fn min_jerk(tau: f64) -> f64 {
    let t = tau.clamp(0.0, 1.0);
    t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
}

pub fn min_jerk_velocity(tau: f64) -> f64 {
    if !(0.0..=1.0).contains(&tau) {
        return 0.0;
    }
    let t = tau;
    30.0 * t * t * (1.0 - t) * (1.0 - t)
}

/// Progress of the reach towards the contact pose at time `τ`.
pub fn reach_progress(tau: f64) -> f64 {
    min_jerk(tau / REACH_END)
}

/// Progress of the manipulation itself at time `τ`.
pub fn manip_progress(tau: f64) -> f64 {
    min_jerk((tau - MANIP_START) / (1.0 - MANIP_START))
}

/// Normalised time of frame `t` in a sequence of `m` frames.
pub fn phase(t: usize, m: usize) -> f64 {
    if m < 2 {
        0.0
    } else {
        t as f64 / (m - 1) as f64
    }
}

/// Contact pose for a cube on the given side.
pub fn approach_pose(p: &Pattern) -> [f64; JOINTS] {
    let s = p.side.sign();
    [0.35 * s, 0.3, -0.2, 0.1, 0.0]
}

pub fn end_pose(p: &Pattern) -> [f64; JOINTS] {
    let s = p.side.sign();
    let a = approach_pose(p);
    let delta = match p.meaning.verb {
        Verb::Push => [0.0, 0.25, 0.2, 0.0, 0.1],
        Verb::Pull => [0.0, -0.25, -0.2, 0.0, -0.1],
        Verb::Slide => [0.3 * s, 0.0, 0.0, 0.15, 0.0],
    };
    let mut out = a;
    for (o, d) in out.iter_mut().zip(delta) {
        *o += d;
    }
    out
}

fn lerp(a: &[f64; JOINTS], b: &[f64; JOINTS], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + (y - x) * s).collect()
}

/// `M × 5` joints: home → contact, a short dwell, contact → end. The contact
/// and end poses get independent uniform jitter of ±0.03 per joint.
pub fn gen_trajectory(p: &Pattern, rng: &mut RngStream) -> Vec<Vec<f64>> {
    let mut approach = approach_pose(p);
    let mut end = end_pose(p);
    for v in approach.iter_mut().chain(end.iter_mut()) {
        *v += rng.uniform(-JITTER, JITTER);
    }
    let m = p.steps();
    (0..m)
        .map(|t| {
            let tau = phase(t, m);
            if tau < MANIP_START {
                lerp(&HOME, &approach, reach_progress(tau))
            } else {
                lerp(&approach, &end, manip_progress(tau))
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::pattern::enumerate_patterns;
    use proptest::prelude::*;

    #[test]
    fn profile_identities() {
        assert_eq!(min_jerk(0.0), 0.0);
        assert_eq!(min_jerk(1.0), 1.0);
        assert_eq!(min_jerk_velocity(0.0), 0.0);
        assert_eq!(min_jerk_velocity(1.0), 0.0);
        assert!((min_jerk(0.5) - 0.5).abs() < 1e-15);
        // velocity is the derivative
        for i in 1..20 {
            let t = i as f64 / 20.0;
            let h = 1e-6;
            let fd = (min_jerk(t + h) - min_jerk(t - h)) / (2.0 * h);
            assert!((fd - min_jerk_velocity(t)).abs() < 1e-6);
        }
    }

    #[test]
    fn lengths_follow_speed() {
        let mut rng = RngStream::new(0);
        for p in enumerate_patterns() {
            let j = gen_trajectory(&p, &mut rng);
            assert_eq!(j.len(), p.steps());
            assert!(j.iter().all(|r| r.len() == JOINTS));
            assert!(j.iter().flatten().all(|v| v.abs() <= 0.8));
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let p = enumerate_patterns()[17];
        let a = gen_trajectory(&p, &mut RngStream::new(5));
        let b = gen_trajectory(&p, &mut RngStream::new(5));
        let c = gen_trajectory(&p, &mut RngStream::new(6));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn distinct_actions_have_distinct_end_poses() {
        let ps = enumerate_patterns();
        for a in &ps {
            for b in &ps {
                if a.meaning.verb != b.meaning.verb || a.side != b.side {
                    let d: f64 = end_pose(a).iter().zip(end_pose(b)).map(|(x, y)| (x - y).abs()).sum();
                    assert!(d > 0.2);
                }
            }
        }
    }

    #[test]
    fn velocity_is_continuous() {
        let mut rng = RngStream::new(3);
        for p in enumerate_patterns().iter().step_by(5) {
            let j = gen_trajectory(p, &mut rng);
            let m = j.len();
            let vel: Vec<Vec<f64>> = j.windows(2).map(|w| w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect()).collect();
            for w in vel.windows(2) {
                for k in 0..JOINTS {
                    assert!((w[1][k] - w[0][k]).abs() < 2.0 / m as f64, "{p:?}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn profile_is_monotone(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(min_jerk(lo) <= min_jerk(hi));
            prop_assert!((0.0..=1.0).contains(&min_jerk(a)));
        }

        #[test]
        fn joints_stay_in_range(seed in any::<u64>(), idx in 0usize..144) {
            let p = enumerate_patterns()[idx];
            let j = gen_trajectory(&p, &mut RngStream::new(seed));
            prop_assert!(j.iter().flatten().all(|v| v.abs() <= 1.0));
        }
    }
}
