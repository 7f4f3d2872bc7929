//! Maximum contact velocity whose post-impact CoM velocities all stay in the
//! balance region.
//!
//! Reduced mode optimizes a scalar speed `s` along the reference direction;
//! full mode optimizes the generalized velocity `q̇` through the impact-point
//! Jacobian. In both, the impulse magnitudes `σ` are tied to the approach
//! speed by the restitution equalities and every resulting CoM velocity
//! vertex must satisfy the region's half-planes.

use nalgebra::{DMatrix, DVector, Matrix2x3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::impact::{impact_cone, normal_gains, post_impact_set, FrictionCone, PostImpactSet, JAM_TOL};
use crate::optim::{solve_qp, QpProblem, SolveStatus};
use crate::polytope::{to_halfspaces, HalfspaceSet2, DEFAULT_INFLATE};
use crate::region::{compute_region, RegionOptions, RegionResult};
use crate::stance::{ImpactSpec, StanceSpec};

/// Tolerance for calling a region row tight at the optimum.
pub const ACTIVE_TOL: f64 = 1e-6;
/// Ridge added on `q̇` in full mode.
pub const QDOT_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MaxVelOptions {
    pub region: RegionOptions,
    /// Overrides the impact's generator count.
    pub n_mu: Option<usize>,
    pub full_qdot: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxVelMode {
    Reduced,
    FullQdot,
}

impl MaxVelMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MaxVelMode::Reduced => "reduced",
            MaxVelMode::FullQdot => "full_qdot",
        }
    }
}

/// Inequality row groups of the assembled QP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintFamily {
    Nonnegativity,
    Approach,
    JointVelocityBounds,
    Region,
    JointVelocity,
    JointTorque,
}

impl ConstraintFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            ConstraintFamily::Nonnegativity => "nonnegativity",
            ConstraintFamily::Approach => "approach",
            ConstraintFamily::JointVelocityBounds => "joint_velocity_bounds",
            ConstraintFamily::Region => "region",
            ConstraintFamily::JointVelocity => "joint_velocity",
            ConstraintFamily::JointTorque => "joint_torque",
        }
    }

    fn post_impact(self) -> bool {
        matches!(self, ConstraintFamily::JointVelocity | ConstraintFamily::JointTorque)
    }
}

/// Assembled QP plus the bookkeeping needed to read its solution.
#[derive(Debug, Clone)]
pub struct MaxVelQp {
    pub problem: QpProblem,
    pub mode: MaxVelMode,
    pub cone: FrictionCone,
    pub gains: Vec<f64>,
    /// Generators that kept their vertex pair, in order.
    pub kept: Vec<usize>,
    pub jammed: Vec<usize>,
    /// Number of leading variables before the `σ` block.
    pub lead: usize,
    /// `(family, first row, row count)` over the inequality rows.
    pub families: Vec<(ConstraintFamily, usize, usize)>,
    pub direction: Vector3<f64>,
    pub reference_speed: f64,
    pub region: HalfspaceSet2,
    pub joint_velocity_rows: bool,
    pub joint_torque_rows: bool,
    /// `(1/m)·P_xy·R` applied to a contact-frame impulse.
    pub to_comd: Matrix2x3<f64>,
    pub pre_comd: Vector2<f64>,
}

impl MaxVelQp {
    pub fn sigma_index(&self, vertex: usize) -> usize {
        self.lead + vertex
    }

    /// Full `2·N_mu` vertex index of a kept vertex.
    pub fn vertex_id(&self, vertex: usize) -> usize {
        2 * self.kept[vertex / 2] + vertex % 2
    }

    pub fn num_vertices(&self) -> usize {
        2 * self.kept.len()
    }

    /// Post-impact CoM velocity of kept vertex `j` under solution `x`.
    pub fn vertex_velocity(&self, x: &DVector<f64>, vertex: usize) -> Vector2<f64> {
        let g = self.cone.generators[self.kept[vertex / 2]];
        self.pre_comd + self.to_comd * g * x[self.sigma_index(vertex)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxVelDiagnostics {
    pub mode: MaxVelMode,
    pub dropped_generators: Vec<usize>,
    pub binding: Vec<ConstraintFamily>,
    pub joint_velocity_rows: bool,
    pub joint_torque_rows: bool,
    pub iterations: usize,
    pub kkt_residual: f64,
    /// Largest violation of the assembled constraints at the solution.
    pub certificate_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxVelResult {
    pub speed: f64,
    pub reference_speed: f64,
    pub v_star: Vector3<f64>,
    /// Indexed by full vertex id; zero for jammed generators.
    pub sigma: Vec<f64>,
    /// Contact-frame impulse per full vertex id.
    pub impulses: Vec<Vector3<f64>>,
    pub post_impact: PostImpactSet,
    /// Full vertex id of each point in `post_impact.points`.
    pub vertex_ids: Vec<usize>,
    pub active_vertices: Vec<usize>,
    pub status: SolveStatus,
    pub diagnostics: MaxVelDiagnostics,
    pub region_halfspaces: HalfspaceSet2,
    pub region: Option<RegionResult>,
    /// Generalized velocity in full mode.
    pub qdot: Option<DVector<f64>>,
}

/// Half-plane form of the inner region, inflated first if it is flat.
pub fn region_halfspaces(region: &RegionResult) -> Result<HalfspaceSet2> {
    if region.inner.is_degenerate() {
        to_halfspaces(&region.inner.inflate(DEFAULT_INFLATE))
    } else {
        to_halfspaces(&region.inner)
    }
}

/// Unit reference direction and the approach gain `−(R e_z)·v̂`.
fn reference_direction(impact: &ImpactSpec) -> Result<(Vector3<f64>, f64, f64)> {
    let speed = impact.v_ref.norm();
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(Error::InvalidInput("reference contact velocity must be non-zero".into()));
    }
    let dir = impact.v_ref / speed;
    let gain = -(impact.rotation * impact.normal).dot(&dir);
    if gain <= 0.0 {
        return Err(Error::InvalidImpactDirection(gain));
    }
    Ok((dir, gain, speed))
}

pub fn assemble_qp(
    stance: &StanceSpec,
    impact: &ImpactSpec,
    region: &HalfspaceSet2,
    opts: &MaxVelOptions,
) -> Result<MaxVelQp> {
    if region.is_empty() {
        return Err(Error::InvalidInput("region has no half-planes".into()));
    }
    let n_mu = opts.n_mu.unwrap_or(impact.n_mu);
    let (direction, dir_gain, reference_speed) = reference_direction(impact)?;
    let cone = impact_cone(impact, n_mu)?;
    let gains = normal_gains(impact, &cone);
    let (kept, jammed): (Vec<usize>, Vec<usize>) = (0..n_mu).partition(|&i| gains[i] > JAM_TOL);
    if kept.is_empty() {
        return Err(Error::NoValidImpulse);
    }

    let mode = if opts.full_qdot {
        MaxVelMode::FullQdot
    } else {
        MaxVelMode::Reduced
    };
    let dyn_data = stance.dynamics.as_ref();
    let impact_jac = match mode {
        MaxVelMode::FullQdot => {
            let d = dyn_data.ok_or_else(|| Error::FeatureUnavailable("full-qdot mode needs dynamics data".into()))?;
            let j = d
                .impact_jacobian
                .as_ref()
                .ok_or_else(|| Error::FeatureUnavailable("full-qdot mode needs an impact Jacobian".into()))?;
            Some(j)
        }
        MaxVelMode::Reduced => None,
    };
    let nv = dyn_data.map(|d| d.inertia.nrows()).unwrap_or(0);
    let lead = match mode {
        MaxVelMode::Reduced => 1,
        MaxVelMode::FullQdot => nv,
    };
    let nvert = 2 * kept.len();
    let n = lead + nvert;

    let rot = impact.rotation;
    let to_comd: Matrix2x3<f64> = (rot / stance.mass).fixed_rows::<2>(0).into_owned();
    let pre = impact.pre_comd;
    let vertex_gen = |j: usize| cone.generators[kept[j / 2]];
    let vertex_cr = |j: usize| if j.is_multiple_of(2) { impact.cr_max } else { impact.cr_min };

    // Objective.
    let (hessian, linear) = match (mode, impact_jac) {
        (MaxVelMode::FullQdot, Some(jp)) => {
            let mut h = DMatrix::zeros(n, n);
            let jtj = jp.transpose() * jp * 2.0;
            let ridge = QDOT_RIDGE * (1.0 + jtj.amax());
            let mut block = h.view_mut((0, 0), (nv, nv));
            block.copy_from(&jtj);
            for k in 0..nv {
                block[(k, k)] += ridge;
            }
            let mut q = DVector::zeros(n);
            let lin = jp.transpose() * impact.v_ref * -2.0;
            q.rows_mut(0, nv).copy_from(&lin);
            (h, q)
        }
        _ => {
            let mut h = DMatrix::zeros(n, n);
            h[(0, 0)] = 2.0;
            let mut q = DVector::zeros(n);
            q[0] = -2.0 * reference_speed;
            (h, q)
        }
    };

    // Restitution equalities: gain_i σ_j = (c_r + 1)·v_n.
    let approach_row: DVector<f64> = match (mode, impact_jac) {
        (MaxVelMode::FullQdot, Some(jp)) => (jp.transpose() * (rot * impact.normal)) * -1.0,
        _ => DVector::from_element(1, dir_gain),
    };
    let mut a_eq = DMatrix::zeros(nvert, n);
    for j in 0..nvert {
        a_eq[(j, lead + j)] = gains[kept[j / 2]];
        let scale = vertex_cr(j) + 1.0;
        for k in 0..lead {
            a_eq[(j, k)] = -scale * approach_row[k];
        }
    }
    let b_eq = DVector::zeros(nvert);

    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut families = Vec::new();
    let mut push_family = |family, block: Vec<(DVector<f64>, f64)>, rows: &mut Vec<(DVector<f64>, f64)>| {
        if !block.is_empty() {
            families.push((family, rows.len(), block.len()));
            rows.extend(block);
        }
    };

    let unit = |k: usize, v: f64| {
        let mut r = DVector::zeros(n);
        r[k] = v;
        r
    };

    let mut nonneg: Vec<(DVector<f64>, f64)> = (0..nvert).map(|j| (unit(lead + j, -1.0), 0.0)).collect();
    if mode == MaxVelMode::Reduced {
        nonneg.insert(0, (unit(0, -1.0), 0.0));
    }
    push_family(ConstraintFamily::Nonnegativity, nonneg, &mut rows);

    if mode == MaxVelMode::FullQdot {
        // The contact point must approach the surface.
        let mut r = DVector::zeros(n);
        r.rows_mut(0, nv).copy_from(&(-&approach_row));
        push_family(ConstraintFamily::Approach, vec![(r, 0.0)], &mut rows);
        let d = dyn_data.expect("checked above");
        let mut bounds = Vec::new();
        for k in 0..nv {
            if d.qd_max[k].is_finite() {
                bounds.push((unit(k, 1.0), d.qd_max[k]));
            }
            if d.qd_min[k].is_finite() {
                bounds.push((unit(k, -1.0), -d.qd_min[k]));
            }
        }
        push_family(ConstraintFamily::JointVelocityBounds, bounds, &mut rows);
    }

    let mut region_rows = Vec::with_capacity(nvert * region.len());
    for j in 0..nvert {
        let dy = to_comd * vertex_gen(j);
        for (g, h) in region.rows() {
            region_rows.push((unit(lead + j, g.dot(&dy)), h - g.dot(&pre)));
        }
    }
    push_family(ConstraintFamily::Region, region_rows, &mut rows);

    let mut joint_velocity_rows = false;
    let mut joint_torque_rows = false;
    if let Some(d) = dyn_data {
        if let Some(l) = &d.impulse_to_qd {
            joint_velocity_rows = true;
            let mut block = Vec::new();
            for j in 0..nvert {
                let col = l * (rot * vertex_gen(j));
                for k in 0..nv {
                    let mut up = unit(lead + j, col[k]);
                    let mut down = unit(lead + j, -col[k]);
                    let (hi, lo) = match mode {
                        MaxVelMode::Reduced => (d.qd_max[k] - d.qd_pre[k], d.qd_pre[k] - d.qd_min[k]),
                        MaxVelMode::FullQdot => {
                            up[k] = 1.0;
                            down[k] = -1.0;
                            (d.qd_max[k], -d.qd_min[k])
                        }
                    };
                    if hi.is_finite() {
                        block.push((up, hi));
                    }
                    if lo.is_finite() {
                        block.push((down, lo));
                    }
                }
            }
            push_family(ConstraintFamily::JointVelocity, block, &mut rows);
        }
        if let Some(jp) = &d.impact_jacobian {
            joint_torque_rows = true;
            let gain = impact.torque_ratio / impact.delta_t;
            let map = d.selection.transpose() * jp.transpose() * gain;
            let nj = d.joints();
            let mut block = Vec::new();
            for j in 0..nvert {
                let col = &map * (rot * vertex_gen(j));
                for k in 0..nj {
                    let hi = d.tau_max[k] - d.tau_pre[k];
                    let lo = d.tau_pre[k] - d.tau_min[k];
                    if hi.is_finite() {
                        block.push((unit(lead + j, col[k]), hi));
                    }
                    if lo.is_finite() {
                        block.push((unit(lead + j, -col[k]), lo));
                    }
                }
            }
            push_family(ConstraintFamily::JointTorque, block, &mut rows);
        }
    }

    let mut a_in = DMatrix::zeros(rows.len(), n);
    let mut b_in = DVector::zeros(rows.len());
    for (i, (r, b)) in rows.iter().enumerate() {
        a_in.set_row(i, &r.transpose());
        b_in[i] = *b;
    }
    let problem = QpProblem::new(hessian, linear)
        .with_inequalities(a_in, b_in)
        .with_equalities(a_eq, b_eq);

    Ok(MaxVelQp {
        problem,
        mode,
        cone,
        gains,
        kept,
        jammed,
        lead,
        families,
        direction,
        reference_speed,
        region: region.clone(),
        joint_velocity_rows,
        joint_torque_rows,
        to_comd,
        pre_comd: pre,
    })
}

/// Solves the QP against a given region.
pub fn solve_maxvel(
    stance: &StanceSpec,
    impact: &ImpactSpec,
    region: &HalfspaceSet2,
    opts: &MaxVelOptions,
) -> Result<MaxVelResult> {
    let qp = assemble_qp(stance, impact, region, opts)?;
    let sol = solve_qp(&qp.problem)?;
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Err(Error::StanceInfeasible(
                "no contact velocity keeps the post-impact CoM velocities balanced (is the pre-impact velocity inside the region?)"
                    .into(),
            ))
        }
        other => {
            return Err(Error::SolverFailure {
                stage: "maxvel".into(),
                message: format!("QP ended with status {other:?}"),
            })
        }
    }
    let x = &sol.x;
    let p = &qp.problem;

    let (speed, v_star, qdot) = match qp.mode {
        MaxVelMode::Reduced => (x[0], qp.direction * x[0], None),
        MaxVelMode::FullQdot => {
            let jp = stance
                .dynamics
                .as_ref()
                .and_then(|d| d.impact_jacobian.as_ref())
                .expect("checked during assembly");
            let q = x.rows(0, qp.lead).into_owned();
            let v = Vector3::from_iterator((jp * &q).iter().copied());
            (v.dot(&qp.direction), v, Some(q))
        }
    };

    let n_full = 2 * qp.cone.n_mu;
    let mut sigma = vec![0.0; n_full];
    let mut impulses = vec![Vector3::zeros(); n_full];
    let mut points = Vec::with_capacity(qp.num_vertices());
    let mut vertex_ids = Vec::with_capacity(qp.num_vertices());
    let mut active = Vec::new();
    for j in 0..qp.num_vertices() {
        let id = qp.vertex_id(j);
        let s = x[qp.sigma_index(j)].max(0.0);
        sigma[id] = s;
        impulses[id] = qp.cone.generators[qp.kept[j / 2]] * s;
        let y = qp.vertex_velocity(x, j);
        if qp.region.max_violation(&y).abs() <= ACTIVE_TOL {
            active.push(id);
        }
        points.push(y);
        vertex_ids.push(id);
    }
    let deltas: Vec<Vector3<f64>> = points
        .iter()
        .map(|y| Vector3::new(y.x - qp.pre_comd.x, y.y - qp.pre_comd.y, 0.0))
        .collect();
    let post_impact = post_impact_set(&qp.pre_comd, &deltas)?;

    let mut binding = Vec::new();
    for &(family, start, count) in &qp.families {
        let tight = (start..start + count).any(|i| {
            let norm = p.a_in.row(i).norm();
            norm > 0.0 && ((p.a_in.row(i) * x)[0] - p.b_in[i]) / norm >= -ACTIVE_TOL
        });
        if tight && !binding.contains(&family) {
            binding.push(family);
        }
    }

    let diagnostics = MaxVelDiagnostics {
        mode: qp.mode,
        dropped_generators: qp.jammed.clone(),
        binding,
        joint_velocity_rows: qp.joint_velocity_rows,
        joint_torque_rows: qp.joint_torque_rows,
        iterations: sol.iterations,
        kkt_residual: sol.kkt_residual,
        certificate_residual: certificate_residual(&qp, x),
    };
    Ok(MaxVelResult {
        speed,
        reference_speed: qp.reference_speed,
        v_star,
        sigma,
        impulses,
        post_impact,
        vertex_ids,
        active_vertices: active,
        status: sol.status,
        diagnostics,
        region_halfspaces: qp.region.clone(),
        region: None,
        qdot,
    })
}

/// Largest violation of the assembled constraints at `x`, rows scaled to
/// unit norm.
pub fn certificate_residual(qp: &MaxVelQp, x: &DVector<f64>) -> f64 {
    let p = &qp.problem;
    let mut worst = 0.0_f64;
    for i in 0..p.a_in.nrows() {
        let norm = p.a_in.row(i).norm().max(1e-300);
        worst = worst.max(((p.a_in.row(i) * x)[0] - p.b_in[i]) / norm);
    }
    for i in 0..p.a_eq.nrows() {
        let norm = p.a_eq.row(i).norm().max(1e-300);
        worst = worst.max(((p.a_eq.row(i) * x)[0] - p.b_eq[i]).abs() / norm);
    }
    worst
}

impl MaxVelResult {
    /// Whether a joint-level post-impact row is tight.
    pub fn post_impact_limit_binding(&self) -> bool {
        self.diagnostics.binding.iter().any(|f| f.post_impact())
    }
}

/// Full pipeline: region, QP, result.
pub fn max_contact_velocity(stance: &StanceSpec, impact: &ImpactSpec, opts: &MaxVelOptions) -> Result<MaxVelResult> {
    let region = compute_region(stance, &opts.region)?;
    let hs = region_halfspaces(&region)?;
    let mut result = solve_maxvel(stance, impact, &hs, opts)?;
    result.region = Some(region);
    Ok(result)
}
