//! Linear constraints on stacked contact wrenches.
//!
//! The stacked wrench `W = (W_1, …, W_m)` holds one 6-vector per contact,
//! ordered `(f; τ)`, expressed in the inertial orientation and taken at the
//! contact point. Local contact wrench cones use the `(τ; f)` order of the
//! contact frame; [`cwc_inertial`] is the only place where the two meet.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6, SMatrix, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::lipm::pendulum_constant;
use crate::stance::{ContactSpec, DynamicsData, StanceSpec};

pub type Matrix16x6 = SMatrix<f64, 16, 6>;

/// Rows of the local contact wrench cone on `(τx, τy, τz, fx, fy, fz)`.
pub fn cwc_local(contact: &ContactSpec) -> Matrix16x6 {
    let (mu, x, y) = (contact.mu, contact.half_x, contact.half_y);
    let yaw = -(x + y) * mu;
    #[rustfmt::skip]
    let rows: [[f64; 6]; 16] = [
        [0.0, 0.0, 0.0, -1.0, 0.0, -mu],
        [0.0, 0.0, 0.0, 1.0, 0.0, -mu],
        [0.0, 0.0, 0.0, 0.0, -1.0, -mu],
        [0.0, 0.0, 0.0, 0.0, 1.0, -mu],
        [-1.0, 0.0, 0.0, 0.0, 0.0, -y],
        [1.0, 0.0, 0.0, 0.0, 0.0, -y],
        [0.0, -1.0, 0.0, 0.0, 0.0, -x],
        [0.0, 1.0, 0.0, 0.0, 0.0, -x],
        [mu, mu, -1.0, -y, -x, yaw],
        [mu, -mu, -1.0, -y, x, yaw],
        [-mu, mu, -1.0, y, -x, yaw],
        [-mu, -mu, -1.0, y, x, yaw],
        [mu, mu, 1.0, y, x, yaw],
        [mu, -mu, 1.0, y, -x, yaw],
        [-mu, mu, 1.0, -y, x, yaw],
        [-mu, -mu, 1.0, -y, -x, yaw],
    ];
    Matrix16x6::from_fn(|i, j| rows[i][j])
}

/// Maps an inertial `(f; τ)` wrench to the local `(τ; f)` wrench.
pub fn inertial_to_local(rotation: &Matrix3<f64>) -> Matrix6<f64> {
    let rt = rotation.transpose();
    let mut t = Matrix6::zeros();
    t.fixed_view_mut::<3, 3>(0, 3).copy_from(&rt);
    t.fixed_view_mut::<3, 3>(3, 0).copy_from(&rt);
    t
}

/// Contact wrench cone acting on the inertial `(f; τ)` wrench at the contact.
pub fn cwc_inertial(contact: &ContactSpec) -> Matrix16x6 {
    cwc_local(contact) * inertial_to_local(&contact.rotation)
}

/// Explicit yaw-torque bounds as rows on the inertial `(f; τ)` wrench.
/// Only finite bounds produce rows.
pub fn yaw_limit_rows(contact: &ContactSpec) -> (DMatrix<f64>, DVector<f64>) {
    let t = inertial_to_local(&contact.rotation);
    let tau_z = t.row(2).into_owned();
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    if contact.tau_z_max.is_finite() {
        rows.push(tau_z);
        rhs.push(contact.tau_z_max);
    }
    if contact.tau_z_min.is_finite() {
        rows.push(-tau_z);
        rhs.push(-contact.tau_z_min);
    }
    let a = DMatrix::from_fn(rows.len(), 6, |i, j| rows[i][j]);
    (a, DVector::from_vec(rhs))
}

/// `A_W = [Ḡ_1 … Ḡ_m]` with `Ḡ_i = [[I, 0], [[p_i]ₓ, I]]`, so that the
/// resultant wrench at the origin is `A_W · W`.
pub fn wrench_map(stance: &StanceSpec) -> DMatrix<f64> {
    let m = stance.contacts.len();
    let mut a = DMatrix::zeros(6, 6 * m);
    for (i, c) in stance.contacts.iter().enumerate() {
        let mut g = Matrix6::identity();
        g.fixed_view_mut::<3, 3>(3, 0).copy_from(&c.position.cross_matrix());
        a.view_mut((0, 6 * i), (6, 6)).copy_from(&g);
    }
    a
}

/// Joint-torque limits `Bτ_min <= Mq̈ + N − JᵀW <= Bτ_max` as `A_t W <= B_t`.
pub fn torque_limit_rows(dynamics: Option<&DynamicsData>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let d = dynamics.ok_or_else(|| Error::FeatureUnavailable("torque limits need dynamics data".into()))?;
    let jt = d.jacobian.transpose();
    let nv = jt.nrows();
    let cols = jt.ncols();
    let mut a = DMatrix::zeros(2 * nv, cols);
    a.view_mut((0, 0), (nv, cols)).copy_from(&(-&jt));
    a.view_mut((nv, 0), (nv, cols)).copy_from(&jt);
    let load = &d.inertia * &d.qdd + &d.bias;
    let upper = &d.selection * &d.tau_max - &load;
    let lower = -(&d.selection * &d.tau_min) + &load;
    let mut b = DVector::zeros(2 * nv);
    b.rows_mut(0, nv).copy_from(&upper);
    b.rows_mut(nv, nv).copy_from(&lower);
    Ok((a, b))
}

/// CoM height measured along the surface normal.
pub fn com_height(stance: &StanceSpec) -> f64 {
    stance.normal.dot(&stance.com)
}

/// Equalities `C W = d` enforcing `n·f = mg`, `n × τ_c = 0` and `n·τ_c = 0`
/// for the resultant wrench.
///
/// Rows 0–2 are `(c_z f_O + n × τ_O)/(mg) = c`; row 3 is
/// `(n·τ_O − (n × c)·f_O)/(mg) = 0`.
pub fn lipm_equalities(stance: &StanceSpec) -> (DMatrix<f64>, DVector<f64>) {
    let n = stance.normal;
    let c = stance.com;
    let mg = stance.weight();
    let mut k = SMatrix::<f64, 4, 6>::zeros();
    k.fixed_view_mut::<3, 3>(0, 0).copy_from(&(Matrix3::identity() * com_height(stance)));
    k.fixed_view_mut::<3, 3>(0, 3).copy_from(&n.cross_matrix());
    k.fixed_view_mut::<1, 3>(3, 0).copy_from(&(-n.cross(&c)).transpose());
    k.fixed_view_mut::<1, 3>(3, 3).copy_from(&n.transpose());
    let k = DMatrix::from_fn(4, 6, |i, j| k[(i, j)] / mg);
    let cmat = k * wrench_map(stance);
    let d = DVector::from_vec(vec![c.x, c.y, c.z, 0.0]);
    (cmat, d)
}

/// Boundary map `ċ_xy = E W + f` with `E = w(h − c_z)/(mg)·A_W[0..2, :]`
/// and `f = w·c_xy`.
pub fn comd_boundary_map(stance: &StanceSpec, h: f64) -> Result<(DMatrix<f64>, Vector2<f64>)> {
    let cz = com_height(stance);
    check_plane_height(h, cz)?;
    let w = pendulum_constant(cz, stance.gravity)?;
    let scale = w * (h - cz) / stance.weight();
    let e = wrench_map(stance).rows(0, 2) * scale;
    Ok((e, Vector2::new(stance.com.x, stance.com.y) * w))
}

/// ZMP on the plane at height `h`: `z = c_xy + (h − c_z)/(mg)·f_O,xy`.
pub fn zmp_map(stance: &StanceSpec, h: f64) -> Result<(DMatrix<f64>, Vector2<f64>)> {
    let cz = com_height(stance);
    check_plane_height(h, cz)?;
    let e = wrench_map(stance).rows(0, 2) * ((h - cz) / stance.weight());
    Ok((e, Vector2::new(stance.com.x, stance.com.y)))
}

fn check_plane_height(h: f64, cz: f64) -> Result<()> {
    if !h.is_finite() || (h - cz).abs() < 1e-6 {
        return Err(Error::InvalidInput(format!(
            "projection plane height {h} must differ from the CoM height {cz}"
        )));
    }
    Ok(())
}

/// Contiguous block of constraint rows.
#[derive(Debug, Clone, PartialEq)]
pub struct RowBlock {
    pub label: String,
    pub start: usize,
    pub len: usize,
}

/// Stacked constraints `A W <= B`, `C W = d` and the boundary map
/// `y = E W + f`, all in a frame whose origin lies under the CoM.
#[derive(Debug, Clone)]
pub struct WrenchProblem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: DMatrix<f64>,
    pub d: DVector<f64>,
    pub e: DMatrix<f64>,
    pub f: Vector2<f64>,
    pub blocks: Vec<RowBlock>,
    /// Planar CoM position in the caller's frame; the assembly frame is
    /// shifted by this amount.
    pub origin: Vector2<f64>,
    pub torque_limits: bool,
    /// The stance the matrices were built from, after recentering.
    pub stance: StanceSpec,
    pub plane_height: f64,
}

impl WrenchProblem {
    pub fn num_vars(&self) -> usize {
        self.a.ncols()
    }

    /// Largest violation of the inequality and equality rows at `w`.
    pub fn residual(&self, w: &DVector<f64>) -> f64 {
        crate::optim::primal_residual(&self.a, &self.b, &self.c, &self.d, w)
    }
}

/// Copy of the stance translated so the CoM lies above the origin.
pub fn recentred(stance: &StanceSpec) -> (StanceSpec, Vector2<f64>) {
    let shift = Vector3::new(stance.com.x, stance.com.y, 0.0);
    let mut s = stance.clone();
    for c in &mut s.contacts {
        c.position -= shift;
    }
    s.com -= shift;
    (s, Vector2::new(shift.x, shift.y))
}

/// Assembles every wrench constraint for the stance.
pub fn assemble(stance: &StanceSpec, h: f64) -> Result<WrenchProblem> {
    stance.validate()?;
    let (local, origin) = recentred(stance);
    let m = local.contacts.len();
    let cols = 6 * m;

    let mut row_blocks: Vec<(String, DMatrix<f64>, DVector<f64>)> = Vec::new();
    for (i, contact) in local.contacts.iter().enumerate() {
        let cone = cwc_inertial(contact);
        let (yaw_a, yaw_b) = yaw_limit_rows(contact);
        let rows = 16 + yaw_a.nrows();
        let mut a = DMatrix::zeros(rows, cols);
        a.view_mut((0, 6 * i), (16, 6)).copy_from(&cone);
        if yaw_a.nrows() > 0 {
            a.view_mut((16, 6 * i), (yaw_a.nrows(), 6)).copy_from(&yaw_a);
        }
        let mut b = DVector::zeros(rows);
        b.rows_mut(16, yaw_b.len()).copy_from(&yaw_b);
        row_blocks.push((format!("cwc_{i}"), a, b));
    }
    let torque_limits = local.dynamics.is_some();
    if torque_limits {
        let (a, b) = torque_limit_rows(local.dynamics.as_ref())?;
        row_blocks.push(("torque_limits".into(), a, b));
    }

    let total: usize = row_blocks.iter().map(|(_, a, _)| a.nrows()).sum();
    let mut a = DMatrix::zeros(total, cols);
    let mut b = DVector::zeros(total);
    let mut blocks = Vec::new();
    let mut at = 0;
    for (label, ab, bb) in row_blocks {
        let len = ab.nrows();
        a.view_mut((at, 0), (len, cols)).copy_from(&ab);
        b.rows_mut(at, len).copy_from(&bb);
        blocks.push(RowBlock { label, start: at, len });
        at += len;
    }
    let (c, d) = lipm_equalities(&local);
    let (e, f) = comd_boundary_map(&local, h)?;
    Ok(WrenchProblem {
        a,
        b,
        c,
        d,
        e,
        f,
        blocks,
        origin,
        torque_limits,
        stance: local,
        plane_height: h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Rotation3, Vector6};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn contact(mu: f64, x: f64, y: f64) -> ContactSpec {
        ContactSpec::new(Matrix3::identity(), Vector3::zeros(), x, y, mu)
    }

    fn two_feet() -> StanceSpec {
        let left = ContactSpec::new(Matrix3::identity(), Vector3::new(0.0, 0.1, 0.0), 0.1, 0.05, 0.7);
        let right = ContactSpec::new(Matrix3::identity(), Vector3::new(0.0, -0.1, 0.0), 0.1, 0.05, 0.7);
        StanceSpec::new(vec![left, right], 40.0, Vector3::new(0.0, 0.0, 0.78))
    }

    #[test]
    fn first_row_matches_reference() {
        let a = cwc_local(&contact(0.7, 0.1, 0.1));
        let row: Vec<f64> = a.row(0).iter().copied().collect();
        assert_eq!(row, vec![0.0, 0.0, 0.0, -1.0, 0.0, -0.7]);
    }

    #[test]
    fn centred_normal_load_is_stable() {
        let a = cwc_local(&contact(0.7, 0.1, 0.05));
        let w = Vector6::new(0.0, 0.0, 0.0, 0.0, 0.0, 100.0);
        assert!((a * w).iter().all(|v| *v <= 0.0));
    }

    /// Each row of the cone written as an independent scalar inequality on
    /// `(τ; f)`; `None` when a margin is too close to zero to call.
    fn direct_check(mu: f64, x: f64, y: f64, w: &Vector6<f64>) -> Option<bool> {
        let (tx, ty, tz, fx, fy, fz) = (w[0], w[1], w[2], w[3], w[4], w[5]);
        let margins = [
            mu * fz - fx.abs(),
            mu * fz - fy.abs(),
            y * fz - tx.abs(),
            x * fz - ty.abs(),
            tz - ((mu * tx - y * fx).abs() + (mu * ty - x * fy).abs() - (x + y) * mu * fz),
            (x + y) * mu * fz - (mu * tx + y * fx).abs() - (mu * ty + x * fy).abs() - tz,
        ];
        if margins.iter().any(|m| m.abs() < 1e-9) {
            return None;
        }
        Some(margins.iter().all(|m| *m > 0.0))
    }

    #[test]
    fn matrix_agrees_with_direct_inequalities() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        for _ in 0..100_000 {
            let mu = rng.gen_range(0.1..1.5);
            let x = rng.gen_range(0.02..0.3);
            let y = rng.gen_range(0.02..0.3);
            let fz = rng.gen_range(-10.0..100.0);
            let w = Vector6::new(
                rng.gen_range(-15.0..15.0),
                rng.gen_range(-15.0..15.0),
                rng.gen_range(-15.0..15.0),
                rng.gen_range(-60.0..60.0),
                rng.gen_range(-60.0..60.0),
                fz,
            );
            let a = cwc_local(&contact(mu, x, y));
            let by_matrix = (a * w).iter().all(|v| *v <= 0.0);
            if let Some(direct) = direct_check(mu, x, y, &w) {
                assert_eq!(by_matrix, direct, "{w:?}");
                checked += 1;
            }
        }
        assert!(checked > 99_000);
    }

    #[test]
    fn identity_rotation_only_permutes_columns() {
        let c = contact(0.5, 0.1, 0.07);
        let local = cwc_local(&c);
        let inertial = cwc_inertial(&c);
        for i in 0..16 {
            for j in 0..3 {
                assert_eq!(inertial[(i, j)], local[(i, j + 3)]);
                assert_eq!(inertial[(i, j + 3)], local[(i, j)]);
            }
        }
    }

    #[test]
    fn rotated_contact_accepts_rotated_wrench() {
        let rot = *Rotation3::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2).matrix();
        let c = ContactSpec::new(rot, Vector3::zeros(), 0.1, 0.05, 0.6);
        // stable in the local frame: shear along x, pitch torque within X·f_z
        let f_local = Vector3::new(50.0, 0.0, 100.0);
        let t_local = Vector3::new(0.0, 8.0, 0.0);
        let mut w = Vector6::zeros();
        w.fixed_rows_mut::<3>(0).copy_from(&(rot * f_local));
        w.fixed_rows_mut::<3>(3).copy_from(&(rot * t_local));
        assert!((cwc_inertial(&c) * w).iter().all(|v| *v <= 1e-12));
        // read as inertial, the same torque loads the narrow (Y) side
        let mut raw = Vector6::zeros();
        raw.fixed_rows_mut::<3>(0).copy_from(&f_local);
        raw.fixed_rows_mut::<3>(3).copy_from(&t_local);
        assert!((cwc_inertial(&c) * raw).iter().any(|v| *v > 0.0));
    }

    #[test]
    fn ramp_rejects_vertical_load_exceeding_friction() {
        let ang: f64 = 30f64.to_radians();
        let rot = *Rotation3::from_axis_angle(&Vector3::x_axis(), ang).matrix();
        let c = ContactSpec::new(rot, Vector3::zeros(), 0.1, 0.1, 0.5);
        // a purely vertical force on a 30° slope needs μ >= tan 30° ≈ 0.577
        let mut w = Vector6::zeros();
        w[2] = 100.0;
        assert!((cwc_inertial(&c) * w).iter().any(|v| *v > 0.0));
        let local = rot.transpose() * Vector3::new(0.0, 0.0, 100.0);
        assert!(local.y.abs() > 0.5 * local.z);
        let c_ok = ContactSpec { mu: 0.7, ..c };
        assert!((cwc_inertial(&c_ok) * w).iter().all(|v| *v <= 0.0));
    }

    #[test]
    fn wrench_map_examples() {
        let mut s = two_feet();
        s.contacts.truncate(1);
        s.contacts[0].position = Vector3::zeros();
        assert_eq!(wrench_map(&s), DMatrix::identity(6, 6));
        s.contacts[0].position = Vector3::new(1.0, 0.0, 0.0);
        let w = DVector::from_vec(vec![0.0, 0.0, 10.0, 0.0, 0.0, 0.0]);
        let r = wrench_map(&s) * w;
        assert_eq!(r.rows(3, 3).into_owned(), DVector::from_vec(vec![0.0, -10.0, 0.0]));
    }

    #[test]
    fn wrench_map_matches_transport_rule() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut s = two_feet();
        s.contacts[0].position = Vector3::new(0.3, -0.2, 0.1);
        s.contacts[1].position = Vector3::new(-0.4, 0.5, 0.25);
        let w = DVector::from_fn(12, |_, _| rng.gen_range(-50.0..50.0));
        let mut f = Vector3::zeros();
        let mut tau = Vector3::zeros();
        for (i, c) in s.contacts.iter().enumerate() {
            let fi = Vector3::new(w[6 * i], w[6 * i + 1], w[6 * i + 2]);
            let ti = Vector3::new(w[6 * i + 3], w[6 * i + 4], w[6 * i + 5]);
            f += fi;
            // torque about the origin of a wrench applied at p
            tau += ti - (-c.position).cross(&fi);
        }
        let r = wrench_map(&s) * w;
        assert!((r.rows(0, 3) - f).amax() < 1e-12);
        assert!((r.rows(3, 3) - tau).amax() < 1e-12);
    }

    fn dynamics(n: usize, contacts: usize, rng: &mut ChaCha8Rng) -> DynamicsData {
        let nv = n + 6;
        let m = DMatrix::from_fn(nv, nv, |_, _| rng.gen_range(-1.0..1.0));
        let mut selection = DMatrix::zeros(nv, n);
        for j in 0..n {
            selection[(6 + j, j)] = 1.0;
        }
        let tau_max = DVector::from_fn(n, |_, _| rng.gen_range(10.0..100.0));
        DynamicsData {
            jacobian: DMatrix::from_fn(6 * contacts, nv, |_, _| rng.gen_range(-1.0..1.0)),
            inertia: m.transpose() * &m + DMatrix::identity(nv, nv),
            bias: DVector::from_fn(nv, |_, _| rng.gen_range(-5.0..5.0)),
            selection,
            qdd: DVector::from_fn(nv, |_, _| rng.gen_range(-1.0..1.0)),
            tau_min: -&tau_max,
            tau_max,
            qd_pre: DVector::zeros(nv),
            qd_min: DVector::from_element(nv, -1.0),
            qd_max: DVector::from_element(nv, 1.0),
            tau_pre: DVector::zeros(n),
            impulse_to_qd: None,
            impact_jacobian: None,
        }
    }

    #[test]
    fn torque_rows_match_scalar_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d = dynamics(5, 2, &mut rng);
        let (a, b) = torque_limit_rows(Some(&d)).unwrap();
        assert_eq!(a.shape(), (22, 12));
        for _ in 0..200 {
            let w = DVector::from_fn(12, |_, _| rng.gen_range(-40.0..40.0));
            let rows_ok = (&a * &w - &b).iter().all(|v| *v <= 0.0);
            let btau = &d.inertia * &d.qdd + &d.bias - d.jacobian.transpose() * &w;
            let lo = &d.selection * &d.tau_min;
            let hi = &d.selection * &d.tau_max;
            let scalar_ok = (0..btau.len()).all(|k| lo[k] <= btau[k] && btau[k] <= hi[k]);
            assert_eq!(rows_ok, scalar_ok);
        }
        assert!(matches!(torque_limit_rows(None), Err(Error::FeatureUnavailable(_))));
    }

    #[test]
    fn symmetric_torque_bounds_give_symmetric_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut d = dynamics(4, 1, &mut rng);
        d.qdd.fill(0.0);
        d.bias.fill(0.0);
        let (_, b) = torque_limit_rows(Some(&d)).unwrap();
        assert_eq!(b.rows(0, 10), b.rows(10, 10));
    }

    #[test]
    fn static_equilibrium_satisfies_equalities() {
        let mut s = two_feet();
        s.contacts.truncate(1);
        s.contacts[0].position = Vector3::zeros();
        let (c, d) = lipm_equalities(&s);
        let w = DVector::from_vec(vec![0.0, 0.0, s.weight(), 0.0, 0.0, 0.0]);
        assert!((c * w - d).amax() < 1e-12);
    }

    #[test]
    fn normal_force_row_scales_with_load_deficit() {
        let s = two_feet();
        let (c, d) = lipm_equalities(&s);
        let mut w = DVector::zeros(12);
        w[2] = 0.25 * s.weight();
        w[8] = 0.25 * s.weight();
        let r = &c * &w - &d;
        let cz = s.com.z;
        // row along n: c_z (n·f − mg)/(mg)
        assert!((r[2] - cz * (0.5 - 1.0)).abs() < 1e-12);
        assert!(r[2].abs() > 0.1);
    }

    #[test]
    fn equality_solutions_have_zero_com_torque() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut s = two_feet();
        s.com = Vector3::new(0.05, -0.02, 0.8);
        s.contacts[1].position = Vector3::new(0.3, -0.2, 0.15);
        let (c, d) = lipm_equalities(&s);
        let aw = wrench_map(&s);
        let svd = c.clone().svd(true, true);
        let particular = svd.solve(&d, 1e-12).unwrap();
        let basis = {
            let full = DMatrix::from_fn(12, 12, |i, j| if i < 4 { c[(i, j)] } else { 0.0 }).svd(false, true);
            let vt = full.v_t.unwrap();
            DMatrix::from_fn(12, 8, |i, j| vt[(4 + j, i)])
        };
        for _ in 0..10_000 {
            let coef = DVector::from_fn(8, |_, _| rng.gen_range(-200.0..200.0));
            let w = &particular + &basis * coef;
            assert!((&c * &w - &d).amax() < 1e-9);
            let wo = &aw * &w;
            let f = Vector3::new(wo[0], wo[1], wo[2]);
            let tau_o = Vector3::new(wo[3], wo[4], wo[5]);
            let tau_c = tau_o - s.com.cross(&f);
            let scale = 1.0 + wo.amax();
            assert!(s.normal.cross(&tau_c).norm() <= 1e-9 * scale);
            assert!(s.normal.dot(&tau_c).abs() <= 1e-9 * scale);
            assert!((s.normal.dot(&f) - s.weight()).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn boundary_map_examples() {
        let s = two_feet();
        let (e, f) = comd_boundary_map(&s, 0.0).unwrap();
        assert_eq!(f, Vector2::zeros());
        assert_eq!((&e * DVector::zeros(12)).norm(), 0.0);
        let w = (9.81f64 / 0.78).sqrt();
        let expected = -w * 0.78 / (9.81 * 40.0);
        assert!((e[(0, 0)] - expected).abs() < 1e-15);
        assert!((w - 3.5464).abs() < 1e-4);
        assert!(comd_boundary_map(&s, 0.78 + 1e-7).is_err());
    }

    #[test]
    fn boundary_map_is_w_times_zmp() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let s = two_feet();
        let (e, f) = comd_boundary_map(&s, 0.0).unwrap();
        let aw = wrench_map(&s);
        let w_const = pendulum_constant(0.78, 9.81).unwrap();
        for _ in 0..100 {
            let mut w = DVector::from_fn(12, |_, _| rng.gen_range(-30.0..30.0));
            w[2] += s.weight() / 2.0;
            w[8] += s.weight() / 2.0;
            let wo = aw.clone() * &w;
            // ZMP on the ground for a wrench with n·f = mg: z = c + (0 − c_z) f_xy/(mg)
            let f_o = Vector3::new(wo[0], wo[1], wo[2]);
            let z = Vector2::new(s.com.x, s.com.y) - f_o.xy() * (s.com.z / s.weight());
            let y = &e * &w + DVector::from_column_slice(f.as_slice());
            assert!((y[0] - w_const * z.x).abs() < 1e-12);
            assert!((y[1] - w_const * z.y).abs() < 1e-12);
        }
    }

    #[test]
    fn assembled_shapes() {
        let s = two_feet();
        let p = assemble(&s, 0.0).unwrap();
        assert_eq!(p.a.shape(), (32, 12));
        assert_eq!(p.c.shape(), (4, 12));
        assert_eq!(p.e.shape(), (2, 12));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut sd = s.clone();
        sd.dynamics = Some(dynamics(34, 2, &mut rng));
        let p = assemble(&sd, 0.0).unwrap();
        assert_eq!(p.a.shape(), (112, 12));
        assert!(p.torque_limits);
        let mut sy = s.clone();
        sy.contacts[0].tau_z_max = 5.0;
        sy.contacts[0].tau_z_min = -5.0;
        assert_eq!(assemble(&sy, 0.0).unwrap().a.shape(), (34, 12));
    }

    #[test]
    fn flat_stance_is_feasible() {
        let s = two_feet();
        let p = assemble(&s, 0.0).unwrap();
        let lp = crate::optim::LpProblem::new(DVector::zeros(12))
            .with_inequalities(p.a.clone(), p.b.clone())
            .with_equalities(p.c.clone(), p.d.clone());
        let r = crate::optim::solve_lp(&lp).unwrap();
        assert!(r.is_optimal());
        assert!(p.residual(&r.x) <= 1e-7);
    }
}
