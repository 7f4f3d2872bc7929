//! Candidate impulses of a frictional impact and the CoM velocities they
//! can produce.
//!
//! The friction cone is discretized into `N_mu` generators. Along each
//! generator the impulse magnitude is fixed by the restitution bound: the
//! normal velocity after impact equals `c_r` times the approach speed, for
//! `c_r` at either end of `[cr_min, cr_max]`. That gives `2·N_mu` vertices.

use nalgebra::{Matrix3, Rotation3, Vector2, Vector3};

use crate::error::{Error, Result};
use crate::polytope::{hull2d, Polygon2, Vec2};
use crate::stance::ImpactSpec;

/// Normal gains at or below this are treated as jammed.
pub const JAM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct FrictionCone {
    /// Unit generators in the contact frame.
    pub generators: Vec<Vector3<f64>>,
    pub mu: f64,
    pub n_mu: usize,
    pub axis: Vector3<f64>,
}

/// Inscribed discretization of the cone `‖f_t‖ <= μ f_n` around `+z`.
pub fn friction_cone(mu: f64, n_mu: usize) -> Result<FrictionCone> {
    friction_cone_about(mu, n_mu, &Vector3::z())
}

/// Same as [`friction_cone`] with the cone axis along the unit vector `axis`.
pub fn friction_cone_about(mu: f64, n_mu: usize, axis: &Vector3<f64>) -> Result<FrictionCone> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::InvalidInput(format!("friction coefficient must be positive, got {mu}")));
    }
    if n_mu < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 cone generators, got {n_mu}")));
    }
    let axis = axis.normalize();
    let align = Rotation3::rotation_between(&Vector3::z(), &axis)
        .unwrap_or_else(|| Rotation3::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI));
    let generators = (0..n_mu)
        .map(|k| {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / n_mu as f64;
            align * Vector3::new(mu * theta.cos(), mu * theta.sin(), 1.0).normalize()
        })
        .collect();
    Ok(FrictionCone {
        generators,
        mu,
        n_mu,
        axis,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseVertex {
    pub generator: usize,
    /// Restitution coefficient this vertex is built for.
    pub restitution: f64,
    pub sigma: f64,
    /// Impulse on the robot, contact frame.
    pub lambda: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseSet {
    pub cone: FrictionCone,
    /// Vertex `2i` uses `cr_max`, vertex `2i + 1` uses `cr_min`; jammed
    /// generators contribute no vertices.
    pub vertices: Vec<ImpulseVertex>,
    pub cr_min: f64,
    pub cr_max: f64,
    pub v_n_pre: f64,
    /// `e_zᵀ W_inv g_i` per generator.
    pub normal_gains: Vec<f64>,
    pub jammed: Vec<usize>,
}

impl ImpulseSet {
    /// Post-impact normal speed minus `c_r` times the approach speed.
    pub fn restitution_residual(&self, spec: &ImpactSpec, vertex: &ImpulseVertex) -> f64 {
        let post = -self.v_n_pre + spec.normal.dot(&(spec.inverse_inertia * vertex.lambda));
        post - vertex.restitution * self.v_n_pre
    }
}

/// Generator directions of the impact cone, axis along the impact normal.
pub fn impact_cone(spec: &ImpactSpec, n_mu: usize) -> Result<FrictionCone> {
    friction_cone_about(spec.mu_impact, n_mu, &spec.normal)
}

/// Normal gain of each generator, `e_zᵀ W_inv g_i`.
pub fn normal_gains(spec: &ImpactSpec, cone: &FrictionCone) -> Vec<f64> {
    cone.generators
        .iter()
        .map(|g| spec.normal.dot(&(spec.inverse_inertia * g)))
        .collect()
}

/// Approach speed of a contact-point velocity `v` (CoM frame) toward the
/// impact surface: `−(R e_z)·v`.
pub fn approach_speed(spec: &ImpactSpec, v: &Vector3<f64>) -> f64 {
    -(spec.rotation * spec.normal).dot(v)
}

/// Vertices of the candidate impulse set for approach speed `v_n_pre`.
pub fn impulse_set(spec: &ImpactSpec, v_n_pre: f64) -> Result<ImpulseSet> {
    impulse_set_with(spec, spec.n_mu, v_n_pre)
}

pub fn impulse_set_with(spec: &ImpactSpec, n_mu: usize, v_n_pre: f64) -> Result<ImpulseSet> {
    if !v_n_pre.is_finite() || v_n_pre < 0.0 {
        return Err(Error::InvalidImpactDirection(v_n_pre));
    }
    let cone = impact_cone(spec, n_mu)?;
    let gains = normal_gains(spec, &cone);
    let mut vertices = Vec::with_capacity(2 * n_mu);
    let mut jammed = Vec::new();
    for (i, (g, gain)) in cone.generators.iter().zip(&gains).enumerate() {
        if *gain <= JAM_TOL {
            jammed.push(i);
            continue;
        }
        for cr in [spec.cr_max, spec.cr_min] {
            let sigma = (cr + 1.0) * v_n_pre / gain;
            vertices.push(ImpulseVertex {
                generator: i,
                restitution: cr,
                sigma,
                lambda: g * sigma,
            });
        }
    }
    if vertices.is_empty() {
        return Err(Error::NoValidImpulse);
    }
    Ok(ImpulseSet {
        cone,
        vertices,
        cr_min: spec.cr_min,
        cr_max: spec.cr_max,
        v_n_pre,
        normal_gains: gains,
        jammed,
    })
}

/// CoM velocity jumps `(1/m)·R·λ_i`.
pub fn delta_comd_set(set: &ImpulseSet, rotation: &Matrix3<f64>, mass: f64) -> Vec<Vector3<f64>> {
    set.vertices.iter().map(|v| rotation * v.lambda / mass).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostImpactSet {
    pub polygon: Polygon2,
    pub pre_comd: Vector2<f64>,
    /// `pre + Δċ_xy` for every impulse vertex, in vertex order.
    pub points: Vec<Vec2>,
}

/// Convex hull of `pre + (Δċ_i)_xy`.
pub fn post_impact_set(pre: &Vector2<f64>, deltas: &[Vector3<f64>]) -> Result<PostImpactSet> {
    let points: Vec<Vec2> = if deltas.is_empty() {
        vec![*pre]
    } else {
        deltas.iter().map(|d| pre + d.xy()).collect()
    };
    Ok(PostImpactSet {
        polygon: hull2d(&points)?,
        pre_comd: *pre,
        points,
    })
}
