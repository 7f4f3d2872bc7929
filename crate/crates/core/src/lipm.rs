//! Linear inverted pendulum analytics.

use nalgebra::{Vector3, Vector6};
use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_HORIZON: f64 = 10.0;
/// `|c_x|` above which a trajectory counts as diverged.
pub const DIVERGENCE_LIMIT: f64 = 10.0;
/// Final `|ċ_x|` below which a trajectory counts as converged.
const REST_SPEED: f64 = 1e-3;

/// `w = √(g / c_z)`.
pub fn pendulum_constant(c_z: f64, g: f64) -> Result<f64> {
    if !(c_z.is_finite() && g.is_finite() && c_z > 0.0 && g > 0.0) {
        return Err(Error::InvalidInput(format!(
            "pendulum constant needs positive CoM height and gravity, got {c_z} and {g}"
        )));
    }
    Ok((g / c_z).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipmState {
    pub c_x: f64,
    pub cd_x: f64,
}

impl LipmState {
    pub fn new(c_x: f64, cd_x: f64) -> Self {
        Self { c_x, cd_x }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SsrInterval {
    pub lo: f64,
    pub hi: f64,
}

impl SsrInterval {
    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Range of `ċ_x` from which the CoM at `c_x` can be brought to rest with the
/// ZMP held in `[zmp_lo, zmp_hi]`.
pub fn ssr(zmp_lo: f64, zmp_hi: f64, c_x: f64, w: f64) -> Result<SsrInterval> {
    if !(zmp_lo <= zmp_hi) {
        return Err(Error::InvalidInput(format!("ZMP bounds [{zmp_lo}, {zmp_hi}] are reversed")));
    }
    Ok(SsrInterval {
        lo: w * (zmp_lo - c_x),
        hi: w * (zmp_hi - c_x),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseOutcome {
    Converges,
    Diverges,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseSample {
    pub t: f64,
    pub c_x: f64,
    pub cd_x: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseTrajectory {
    pub samples: Vec<PhaseSample>,
    pub outcome: PhaseOutcome,
}

/// Saturated capture-point regulation `z = clamp(c + ċ/w, lo, hi)`.
pub fn capture_policy(state: &LipmState, zmp_lo: f64, zmp_hi: f64, w: f64) -> f64 {
    (state.c_x + state.cd_x / w).clamp(zmp_lo, zmp_hi)
}

/// Integrates `c̈ = w²(c − z)` with RK4 under [`capture_policy`].
///
/// Integration stops early once `|c_x|` exceeds [`DIVERGENCE_LIMIT`].
pub fn simulate_phase(
    x0: LipmState,
    zmp_lo: f64,
    zmp_hi: f64,
    w: f64,
    dt: f64,
    horizon: f64,
) -> Result<PhaseTrajectory> {
    if !(dt > 0.0 && dt <= 0.01) {
        return Err(Error::InvalidInput(format!("time step {dt} must lie in (0, 0.01]")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidInput(format!("horizon {horizon} must be positive")));
    }
    if !(w > 0.0 && w.is_finite()) {
        return Err(Error::InvalidInput(format!("pendulum constant {w} must be positive")));
    }
    if !(zmp_lo <= zmp_hi) {
        return Err(Error::InvalidInput(format!("ZMP bounds [{zmp_lo}, {zmp_hi}] are reversed")));
    }
    if !(x0.c_x.is_finite() && x0.cd_x.is_finite()) {
        return Err(Error::InvalidInput("initial state must be finite".into()));
    }

    let w2 = w * w;
    let deriv = |s: &LipmState| -> (f64, f64) {
        let z = capture_policy(s, zmp_lo, zmp_hi, w);
        (s.cd_x, w2 * (s.c_x - z))
    };
    let steps = (horizon / dt).round() as usize;
    let mut samples = Vec::with_capacity(steps + 1);
    let mut s = x0;
    let mut diverged = false;
    for k in 0..=steps {
        let t = k as f64 * dt;
        samples.push(PhaseSample {
            t,
            c_x: s.c_x,
            cd_x: s.cd_x,
            z: capture_policy(&s, zmp_lo, zmp_hi, w),
        });
        if s.c_x.abs() > DIVERGENCE_LIMIT || !s.c_x.is_finite() {
            diverged = true;
            break;
        }
        if k == steps {
            break;
        }
        let (k1c, k1v) = deriv(&s);
        let s2 = LipmState::new(s.c_x + 0.5 * dt * k1c, s.cd_x + 0.5 * dt * k1v);
        let (k2c, k2v) = deriv(&s2);
        let s3 = LipmState::new(s.c_x + 0.5 * dt * k2c, s.cd_x + 0.5 * dt * k2v);
        let (k3c, k3v) = deriv(&s3);
        let s4 = LipmState::new(s.c_x + dt * k3c, s.cd_x + dt * k3v);
        let (k4c, k4v) = deriv(&s4);
        s = LipmState::new(
            s.c_x + dt / 6.0 * (k1c + 2.0 * k2c + 2.0 * k3c + k4c),
            s.cd_x + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
        );
    }
    let outcome = if !diverged && s.cd_x.abs() <= REST_SPEED {
        PhaseOutcome::Converges
    } else {
        PhaseOutcome::Diverges
    };
    Ok(PhaseTrajectory { samples, outcome })
}

/// ZMP of the resultant wrench `(f; τ)` at the origin on the plane
/// `n·z = d_z`: `z = (n × τ)/(n·f) + d_z·f/(n·f)`.
pub fn zmp_from_wrench(wrench: &Vector6<f64>, n: &Vector3<f64>, d_z: f64) -> Result<Vector3<f64>> {
    let f = wrench.fixed_rows::<3>(0).into_owned();
    let tau = wrench.fixed_rows::<3>(3).into_owned();
    let load = n.dot(&f);
    if !(load > 1e-9) {
        return Err(Error::DegenerateLoad(load));
    }
    Ok(n.cross(&tau) / load + f * (d_z / load))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stance::{ContactSpec, StanceSpec};
    use crate::wrench::{lipm_equalities, wrench_map};
    use nalgebra::{DMatrix, DVector, Matrix3};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pendulum_constant_examples() {
        let w = pendulum_constant(0.78, 9.81).unwrap();
        assert!((w - 3.546_39).abs() < 1e-5);
        assert!((pendulum_constant(9.81, 9.81).unwrap() - 1.0).abs() < 1e-15);
        let w2 = pendulum_constant(1.56, 9.81).unwrap();
        assert!((w2 - w / 2f64.sqrt()).abs() < 1e-14);
        assert!(pendulum_constant(0.0, 9.81).is_err());
        assert!(pendulum_constant(1.0, -1.0).is_err());
    }

    #[test]
    fn ssr_examples() {
        let w = pendulum_constant(0.78, 9.81).unwrap();
        let s = ssr(-0.13, 0.13, 0.0, w).unwrap();
        assert!((s.hi - 0.4608).abs() < 5e-4);
        assert!((s.lo + 0.4608).abs() < 5e-4);
        assert_eq!(ssr(-0.13, 0.13, 0.13, w).unwrap().hi, 0.0);
        let sym = ssr(-0.2, 0.2, 0.0, 2.0).unwrap();
        assert_eq!(sym.lo, -sym.hi);
        assert!(ssr(0.1, -0.1, 0.0, 1.0).is_err());
    }

    #[test]
    fn phase_examples() {
        let w = pendulum_constant(0.78, 9.81).unwrap();
        let still = simulate_phase(LipmState::new(0.0, 0.0), -0.13, 0.13, w, DEFAULT_DT, DEFAULT_HORIZON).unwrap();
        assert_eq!(still.outcome, PhaseOutcome::Converges);
        assert!(still.samples.iter().all(|s| s.c_x == 0.0 && s.cd_x == 0.0));
        let inside = simulate_phase(LipmState::new(0.0, 0.40), -0.13, 0.13, w, DEFAULT_DT, DEFAULT_HORIZON).unwrap();
        assert_eq!(inside.outcome, PhaseOutcome::Converges);
        let outside = simulate_phase(LipmState::new(0.0, 0.50), -0.13, 0.13, w, DEFAULT_DT, DEFAULT_HORIZON).unwrap();
        assert_eq!(outside.outcome, PhaseOutcome::Diverges);
        assert!(simulate_phase(LipmState::new(0.0, 0.0), -0.1, 0.1, w, 0.02, 1.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn ssr_matches_simulation(v in -0.9f64..0.9, c in -0.1f64..0.1) {
            let w = pendulum_constant(0.78, 9.81).unwrap();
            let interval = ssr(-0.13, 0.13, c, w).unwrap();
            let margin = 1e-3;
            let traj = simulate_phase(LipmState::new(c, v), -0.13, 0.13, w, DEFAULT_DT, DEFAULT_HORIZON).unwrap();
            if v > interval.lo + margin && v < interval.hi - margin {
                prop_assert_eq!(traj.outcome, PhaseOutcome::Converges);
            } else if v < interval.lo - margin || v > interval.hi + margin {
                prop_assert_eq!(traj.outcome, PhaseOutcome::Diverges);
            }
        }
    }

    #[test]
    fn zmp_examples() {
        let mg = 400.0;
        let n = Vector3::z();
        let z = zmp_from_wrench(&Vector6::new(0.0, 0.0, mg, 0.0, 0.0, 0.0), &n, 0.0).unwrap();
        assert_eq!(z, Vector3::zeros());
        let z = zmp_from_wrench(&Vector6::new(0.0, 0.0, mg, 0.0, -mg * 0.1, 0.0), &n, 0.0).unwrap();
        assert!((z - Vector3::new(0.1, 0.0, 0.0)).amax() < 1e-15);
        assert!(matches!(
            zmp_from_wrench(&Vector6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0), &n, 0.0),
            Err(Error::DegenerateLoad(_))
        ));
    }

    proptest! {
        #[test]
        fn transported_torque_is_parallel_to_normal(
            f in prop::array::uniform3(-50.0f64..50.0),
            tau in prop::array::uniform3(-50.0f64..50.0),
            d_z in -0.5f64..0.5,
            fz in 1.0f64..500.0,
            tilt in prop::array::uniform2(-0.3f64..0.3),
        ) {
            let n = Vector3::new(tilt[0], tilt[1], 1.0).normalize();
            let mut f = Vector3::from(f);
            f += n * fz;
            if n.dot(&f) <= 1e-3 {
                return Ok(());
            }
            let tau = Vector3::from(tau);
            let mut w = Vector6::zeros();
            w.fixed_rows_mut::<3>(0).copy_from(&f);
            w.fixed_rows_mut::<3>(3).copy_from(&tau);
            let z = zmp_from_wrench(&w, &n, d_z).unwrap();
            let tau_z = tau - z.cross(&f);
            prop_assert!(n.cross(&tau_z).norm() <= 1e-9 * w.norm());
            prop_assert!((n.dot(&z) - d_z).abs() <= 1e-12);
        }
    }

    #[test]
    fn equality_wrenches_drive_the_pendulum() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let contacts = vec![
            ContactSpec::new(Matrix3::identity(), Vector3::new(0.02, 0.1, 0.0), 0.1, 0.05, 0.7),
            ContactSpec::new(Matrix3::identity(), Vector3::new(-0.05, -0.1, 0.05), 0.1, 0.05, 0.7),
        ];
        let stance = StanceSpec::new(contacts, 35.0, Vector3::new(0.03, -0.01, 0.8));
        let (c, d) = lipm_equalities(&stance);
        let aw = wrench_map(&stance);
        let particular = c.clone().svd(true, true).solve(&d, 1e-12).unwrap();
        let vt = DMatrix::from_fn(12, 12, |i, j| if i < 4 { c[(i, j)] } else { 0.0 })
            .svd(false, true)
            .v_t
            .unwrap();
        let w = pendulum_constant(stance.com.z, stance.gravity).unwrap();
        for _ in 0..1000 {
            let coef = DVector::from_fn(8, |_, _| rng.gen_range(-100.0..100.0));
            let mut wrench = particular.clone();
            for k in 0..8 {
                wrench += vt.row(4 + k).transpose() * coef[k];
            }
            let wo = &aw * &wrench;
            let w6 = Vector6::from_iterator(wo.iter().copied());
            let f = w6.fixed_rows::<3>(0).into_owned();
            let accel = f.xy() / stance.mass;
            let z = zmp_from_wrench(&w6, &stance.normal, 0.0).unwrap();
            let lipm = (stance.com.xy() - z.xy()) * (w * w);
            assert!((accel - lipm).amax() <= 1e-8);
        }
    }
}
