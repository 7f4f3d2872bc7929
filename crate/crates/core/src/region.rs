//! Projection of the feasible wrench set onto a plane by LP ray shooting.
//!
//! Every ray LP maximizes `u·y` with `y = E W + f` over the assembled wrench
//! constraints. The maximizers span an inner polygon; the supporting lines
//! `u·y <= u·y*` bound an outer polygon. Rays are added along the outward
//! normals of inner edges until the area between the two falls below the
//! requested gap.

use nalgebra::{DMatrix, DVector, Vector2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lipm::pendulum_constant;
use crate::optim::{solve_lp, LpProblem, SolveStatus};
use crate::polytope::{hull2d, HalfspaceSet2, Polygon2, Vec2, MERGE_TOL};
use crate::stance::StanceSpec;
use crate::wrench::{assemble, com_height, zmp_map, WrenchProblem};

pub const DEFAULT_MAX_DIRS: usize = 64;
pub const DEFAULT_REL_GAP: f64 = 1e-3;
/// Per-component wrench bound, in multiples of the body weight.
pub const BOX_FACTOR: f64 = 50.0;
/// Environment variable capping the number of threads used for ray LPs.
pub const THREADS_ENV: &str = "BALANCE_KIT_THREADS";

#[derive(Debug, Clone, PartialEq)]
pub struct RegionOptions {
    /// Absolute area gap at which refinement stops; `None` means
    /// `DEFAULT_REL_GAP` times the inner area.
    pub eps_area: Option<f64>,
    pub max_dirs: usize,
    pub plane_height: f64,
}

impl Default for RegionOptions {
    fn default() -> Self {
        Self {
            eps_area: None,
            max_dirs: DEFAULT_MAX_DIRS,
            plane_height: 0.0,
        }
    }
}

impl RegionOptions {
    fn validate(&self) -> Result<()> {
        if let Some(eps) = self.eps_area {
            if !(eps.is_finite() && eps >= 0.0) {
                return Err(Error::InvalidInput(format!("eps_area must be non-negative, got {eps}")));
            }
        }
        if self.max_dirs < 3 {
            return Err(Error::InvalidInput(format!("max_dirs must be at least 3, got {}", self.max_dirs)));
        }
        if !self.plane_height.is_finite() {
            return Err(Error::InvalidInput("plane height must be finite".into()));
        }
        Ok(())
    }
}

/// One solved ray.
#[derive(Debug, Clone, PartialEq)]
pub struct RayWitness {
    pub direction: Vec2,
    pub point: Vec2,
    /// Feasible stacked wrench attaining `point`.
    pub wrench: DVector<f64>,
    pub box_active: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegionDiagnostics {
    pub box_active_rays: usize,
    /// Every ray hit the wrench box, so the region is likely unbounded.
    pub unbounded: bool,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionResult {
    pub inner: Polygon2,
    pub outer: HalfspaceSet2,
    pub gap: f64,
    pub directions_used: usize,
    pub torque_limits: bool,
    /// Witness for each inner vertex, in vertex order.
    pub witnesses: Vec<RayWitness>,
    pub diagnostics: RegionDiagnostics,
}

/// Balance area of planar CoM velocities for the stance.
pub fn compute_region(stance: &StanceSpec, opts: &RegionOptions) -> Result<RegionResult> {
    opts.validate()?;
    let problem = assemble(stance, opts.plane_height)?;
    let (e, f) = (problem.e.clone(), problem.f);
    project_region(&problem, &e, &f, opts)
}

/// Feasible ZMP area on the plane at `opts.plane_height`, in the caller's
/// coordinates.
pub fn zmp_support_area(stance: &StanceSpec, opts: &RegionOptions) -> Result<RegionResult> {
    opts.validate()?;
    let problem = assemble(stance, opts.plane_height)?;
    let (e, f_local) = zmp_map(&problem.stance, opts.plane_height)?;
    project_region(&problem, &e, &(f_local + problem.origin), opts)
}

/// Velocity region from a ZMP area: `w·(z − c_xy)`.
pub fn velocity_from_zmp(stance: &StanceSpec, zmp: &Polygon2) -> Result<Polygon2> {
    let w = pendulum_constant(com_height(stance), stance.gravity)?;
    let c = Vector2::new(stance.com.x, stance.com.y);
    Ok(zmp.translated(&(-c)).scaled(w))
}

/// Ray-shooting projection of `{E W + f : A W <= B, C W = d}`.
pub fn project_region(
    problem: &WrenchProblem,
    e: &DMatrix<f64>,
    f: &Vector2<f64>,
    opts: &RegionOptions,
) -> Result<RegionResult> {
    opts.validate()?;
    let n = problem.num_vars();
    if e.shape() != (2, n) {
        return Err(Error::InvalidInput(format!("projection map must be 2x{n}")));
    }
    let bound = BOX_FACTOR * problem.stance.weight();
    let ctx = RayContext { problem, e, f, bound };

    let mut rays: Vec<RayWitness> = Vec::new();
    let initial: Vec<Vec2> = (0..3)
        .map(|k| {
            let a = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
            Vec2::new(a.cos(), a.sin())
        })
        .collect();
    rays.extend(ctx.solve_batch(&initial)?);

    let mut converged = false;
    let mut shot: Vec<Vec2> = initial.clone();
    let (mut inner, mut outer_hs, mut outer_poly) = build(&rays)?;
    let mut gap = gap_of(&inner, outer_poly.as_ref());
    loop {
        let target = opts.eps_area.unwrap_or(DEFAULT_REL_GAP * inner.area());
        if gap <= target {
            converged = true;
            break;
        }
        let budget = opts.max_dirs.saturating_sub(rays.len());
        if budget == 0 {
            break;
        }
        let Some(outer) = outer_poly.as_ref() else {
            converged = true;
            break;
        };
        let mut edges = edge_excess(&inner, outer);
        // never re-shoot a direction
        edges.retain(|(dir, _)| !shot.iter().any(|s| (s - dir).norm() <= 1e-12));
        if edges.is_empty() {
            converged = true;
            break;
        }
        let total: f64 = edges.iter().map(|(_, a)| a).sum();
        let cut = total / edges.len() as f64;
        edges.sort_by(|a, b| b.1.total_cmp(&a.1));
        let dirs: Vec<Vec2> = edges
            .iter()
            .filter(|(_, a)| *a >= cut)
            .take(budget)
            .map(|(d, _)| *d)
            .collect();
        shot.extend(dirs.iter().copied());
        rays.extend(ctx.solve_batch(&dirs)?);
        (inner, outer_hs, outer_poly) = build(&rays)?;
        gap = gap_of(&inner, outer_poly.as_ref());
    }

    let witnesses = inner
        .vertices()
        .iter()
        .map(|v| {
            rays.iter()
                .min_by(|a, b| (a.point - v).norm().total_cmp(&(b.point - v).norm()))
                .cloned()
                .expect("at least one ray")
        })
        .collect();
    let box_active_rays = rays.iter().filter(|r| r.box_active).count();
    Ok(RegionResult {
        inner,
        outer: outer_hs,
        gap,
        directions_used: rays.len(),
        torque_limits: problem.torque_limits,
        witnesses,
        diagnostics: RegionDiagnostics {
            box_active_rays,
            unbounded: box_active_rays == rays.len(),
            converged,
        },
    })
}

struct RayContext<'a> {
    problem: &'a WrenchProblem,
    e: &'a DMatrix<f64>,
    f: &'a Vector2<f64>,
    bound: f64,
}

impl RayContext<'_> {
    fn solve(&self, u: &Vec2) -> Result<RayWitness> {
        let n = self.problem.num_vars();
        let objective = self.e.transpose() * DVector::from_column_slice(u.as_slice());
        let lp = LpProblem::new(objective)
            .with_inequalities(self.problem.a.clone(), self.problem.b.clone())
            .with_equalities(self.problem.c.clone(), self.problem.d.clone())
            .with_bounds(DVector::from_element(n, -self.bound), DVector::from_element(n, self.bound));
        let r = solve_lp(&lp)?;
        match r.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => {
                return Err(Error::StanceInfeasible(
                    "no contact wrench satisfies the cone, torque and pendulum constraints".into(),
                ))
            }
            status => {
                return Err(Error::SolverFailure {
                    stage: "region".into(),
                    message: format!("ray LP ended with status {status:?}"),
                })
            }
        }
        let y = self.e * &r.x;
        let box_active = r.x.iter().any(|v| v.abs() >= self.bound * (1.0 - 1e-9));
        Ok(RayWitness {
            direction: *u,
            point: Vec2::new(y[0], y[1]) + self.f,
            wrench: r.x,
            box_active,
        })
    }

    fn solve_batch(&self, dirs: &[Vec2]) -> Result<Vec<RayWitness>> {
        with_thread_cap(|| dirs.par_iter().map(|u| self.solve(u)).collect())
    }
}

/// Runs `op` on a pool limited by [`THREADS_ENV`] when it is set.
pub fn with_thread_cap<R: Send>(op: impl FnOnce() -> R + Send) -> R {
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|n| *n > 0);
    match cap.and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok()) {
        Some(pool) => pool.install(op),
        None => op(),
    }
}

fn build(rays: &[RayWitness]) -> Result<(Polygon2, HalfspaceSet2, Option<Polygon2>)> {
    let points: Vec<Vec2> = rays.iter().map(|r| r.point).collect();
    let inner = hull2d(&points)?;
    let mut hs = HalfspaceSet2::new();
    for r in rays {
        hs.push(r.direction, r.direction.dot(&r.point));
    }
    let outer = hs.to_polygon().ok().filter(|p| !p.is_degenerate());
    Ok((inner, hs, outer))
}

fn gap_of(inner: &Polygon2, outer: Option<&Polygon2>) -> f64 {
    match outer {
        Some(o) => (o.area() - inner.area()).max(0.0),
        None => 0.0,
    }
}

/// Outward normal and outer-set area beyond each inner edge.
fn edge_excess(inner: &Polygon2, outer: &Polygon2) -> Vec<(Vec2, f64)> {
    let v = inner.vertices();
    let k = v.len();
    if k < 2 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let a = v[i];
        let b = v[(i + 1) % k];
        let edge = b - a;
        if edge.norm() <= MERGE_TOL {
            continue;
        }
        let normal = Vec2::new(edge.y, -edge.x).normalize();
        let excess = outer
            .clip(&(-normal), -normal.dot(&a))
            .map_or(0.0, |p| p.area());
        out.push((normal, excess));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::{contains, hausdorff};
    use crate::stance::ContactSpec;
    use nalgebra::{Matrix3, Rotation3, Vector3};

    fn single_contact(mu: f64) -> StanceSpec {
        let c = ContactSpec::new(Matrix3::identity(), Vector3::zeros(), 0.1, 0.05, mu);
        StanceSpec::new(vec![c], 40.0, Vector3::new(0.0, 0.0, 0.78))
    }

    fn rectangle(x: f64, y: f64) -> Polygon2 {
        hull2d(&[Vec2::new(-x, -y), Vec2::new(x, -y), Vec2::new(x, y), Vec2::new(-x, y)]).unwrap()
    }

    #[test]
    fn coplanar_rectangle() {
        let s = single_contact(2.0);
        let opts = RegionOptions::default();
        let zmp = zmp_support_area(&s, &opts).unwrap();
        let rect = rectangle(0.1, 0.05);
        assert!(hausdorff(&zmp.inner, &rect).unwrap() <= 0.01 * 0.1);
        let w = pendulum_constant(0.78, 9.81).unwrap();
        let vel = compute_region(&s, &opts).unwrap();
        assert!(hausdorff(&vel.inner, &rect.scaled(w)).unwrap() <= 0.01 * w * 0.1);
        assert!(!vel.torque_limits);
    }

    #[test]
    fn velocity_region_is_scaled_zmp_area() {
        let mut s = single_contact(1.0);
        s.com = Vector3::new(0.02, -0.01, 0.8);
        s.contacts.push(ContactSpec::new(
            *Rotation3::from_axis_angle(&Vector3::x_axis(), 0.5).matrix(),
            Vector3::new(0.1, -0.25, 0.1),
            0.08,
            0.05,
            0.8,
        ));
        let opts = RegionOptions {
            eps_area: Some(0.0),
            max_dirs: 40,
            plane_height: 0.0,
        };
        let vel = compute_region(&s, &opts).unwrap();
        let zmp = zmp_support_area(&s, &opts).unwrap();
        let mapped = velocity_from_zmp(&s, &zmp.inner).unwrap();
        assert_eq!(mapped.len(), vel.inner.len());
        for (a, b) in mapped.vertices().iter().zip(vel.inner.vertices()) {
            assert!((a - b).norm() <= 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn pinned_wrench_gives_a_point() {
        let s = single_contact(1.0);
        let mut p = assemble(&s, 0.0).unwrap();
        let mut c = DMatrix::zeros(10, 6);
        c.view_mut((0, 0), (4, 6)).copy_from(&p.c);
        c.view_mut((4, 0), (6, 6)).copy_from(&DMatrix::identity(6, 6));
        let mut d = DVector::zeros(10);
        d.rows_mut(0, 4).copy_from(&p.d);
        d[6] = s.weight();
        p.c = c;
        p.d = d;
        let (e, f) = (p.e.clone(), p.f);
        let r = project_region(&p, &e, &f, &RegionOptions::default()).unwrap();
        let first = r.inner.vertices()[0];
        assert!(first.norm() <= 1e-6);
        assert!(r.inner.len() == 1 || r.inner.diameter() <= 1e-6);
    }

    #[test]
    fn two_feet_contains_origin() {
        let l = ContactSpec::new(Matrix3::identity(), Vector3::new(0.0, 0.1, 0.0), 0.1, 0.05, 0.7);
        let rr = ContactSpec::new(Matrix3::identity(), Vector3::new(0.0, -0.1, 0.0), 0.1, 0.05, 0.7);
        let s = StanceSpec::new(vec![l, rr], 40.0, Vector3::new(0.0, 0.0, 0.78));
        let r = compute_region(&s, &RegionOptions::default()).unwrap();
        assert!(r.inner.len() >= 3);
        let hs = crate::polytope::to_halfspaces(&r.inner).unwrap();
        assert!(contains(&hs, &Vec2::zeros(), 0.0));
        for v in r.inner.vertices() {
            assert!(contains(&r.outer, v, 1e-8));
        }
        assert!(r.gap >= -1e-12);
        assert!(r.diagnostics.converged);
        assert_eq!(r.witnesses.len(), r.inner.len());
        let p = assemble(&s, 0.0).unwrap();
        for w in &r.witnesses {
            assert!(p.residual(&w.wrench) <= 1e-7);
        }
    }

    #[test]
    fn rejects_singular_plane_and_infeasible_stance() {
        let s = single_contact(1.0);
        let opts = RegionOptions {
            plane_height: 0.78,
            ..Default::default()
        };
        assert!(matches!(compute_region(&s, &opts), Err(Error::InvalidInput(_))));
        // a single vertical wall cannot carry the weight
        let wall = ContactSpec::new(
            *Rotation3::from_axis_angle(&Vector3::y_axis(), std::f64::consts::FRAC_PI_2).matrix(),
            Vector3::new(0.3, 0.0, 0.5),
            0.1,
            0.1,
            0.3,
        );
        let s = StanceSpec::new(vec![wall], 40.0, Vector3::new(0.0, 0.0, 0.78));
        assert!(matches!(compute_region(&s, &RegionOptions::default()), Err(Error::StanceInfeasible(_))));
    }

    #[test]
    fn respects_max_dirs() {
        let s = single_contact(0.5);
        let opts = RegionOptions {
            eps_area: Some(0.0),
            max_dirs: 7,
            plane_height: 0.0,
        };
        let r = compute_region(&s, &opts).unwrap();
        assert!(r.directions_used <= 7);
    }
}
