//! Stance, impact and joint-space dynamics data, plus document ingestion.
//!
//! Documents are JSON. Matrices are nested row lists (row-major), vectors are
//! plain arrays, and all quantities are SI. [`load_stance`] parses and
//! validates a document in one go; schema problems and invariant violations
//! both carry a field path such as `contacts[0].half_x`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GRAVITY: f64 = 9.81;
pub const DEFAULT_N_MU: usize = 16;
pub const DEFAULT_DELTA_T: f64 = 0.005;

const ROTATION_TOL: f64 = 1e-9;
const UNIT_TOL: f64 = 1e-12;
const W_INV_MATCH_TOL: f64 = 1e-6;

/// Rectangular surface contact.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactSpec {
    /// Local contact frame to inertial frame.
    pub rotation: Matrix3<f64>,
    pub position: Vector3<f64>,
    pub half_x: f64,
    pub half_y: f64,
    pub mu: f64,
    /// Yaw torque bounds; infinite when the document leaves them out.
    pub tau_z_min: f64,
    pub tau_z_max: f64,
}

impl ContactSpec {
    /// Contact with unbounded explicit yaw-torque limits.
    pub fn new(rotation: Matrix3<f64>, position: Vector3<f64>, half_x: f64, half_y: f64, mu: f64) -> Self {
        Self {
            rotation,
            position,
            half_x,
            half_y,
            mu,
            tau_z_min: f64::NEG_INFINITY,
            tau_z_max: f64::INFINITY,
        }
    }

    fn validate(&self, path: &str) -> Result<()> {
        check_rotation(&self.rotation, &format!("{path}.rotation"))?;
        check_finite(self.position.iter(), &format!("{path}.position"))?;
        for (name, v) in [("half_x", self.half_x), ("half_y", self.half_y), ("mu", self.mu)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!("{path}.{name}"), format!("must be positive and finite, got {v}")));
            }
        }
        if self.tau_z_min.is_nan() || self.tau_z_max.is_nan() {
            return Err(Error::validation(format!("{path}.tau_z_min"), "yaw torque bounds must not be NaN"));
        }
        if self.tau_z_min > self.tau_z_max {
            return Err(Error::validation(
                format!("{path}.tau_z_min"),
                format!("tau_z_min {} exceeds tau_z_max {}", self.tau_z_min, self.tau_z_max),
            ));
        }
        Ok(())
    }
}

/// Joint-space dynamics for a robot with `n` actuated joints and a floating
/// base (`n + 6` generalized velocities).
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsData {
    /// Stacked contact Jacobians, `6·m_sc × (n+6)`, rows ordered (f; τ) per contact.
    pub jacobian: DMatrix<f64>,
    pub inertia: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub selection: DMatrix<f64>,
    pub qdd: DVector<f64>,
    pub tau_min: DVector<f64>,
    pub tau_max: DVector<f64>,
    pub qd_pre: DVector<f64>,
    pub qd_min: DVector<f64>,
    pub qd_max: DVector<f64>,
    pub tau_pre: DVector<f64>,
    /// Impulse (inertial frame) to joint-velocity jump, `(n+6) × 3`.
    pub impulse_to_qd: Option<DMatrix<f64>>,
    /// Impact-point translational Jacobian (inertial frame), `3 × (n+6)`.
    pub impact_jacobian: Option<DMatrix<f64>>,
}

impl DynamicsData {
    pub fn joints(&self) -> usize {
        self.selection.ncols()
    }

    fn validate(&self, contacts: usize) -> Result<()> {
        let nv = self.inertia.nrows();
        if nv < 6 {
            return Err(Error::validation("dynamics.inertia", "needs at least 6 rows (floating base)"));
        }
        let n = nv - 6;
        let dims: [(&str, (usize, usize), (usize, usize)); 4] = [
            ("dynamics.inertia", self.inertia.shape(), (nv, nv)),
            ("dynamics.jacobian", self.jacobian.shape(), (6 * contacts, nv)),
            ("dynamics.selection", self.selection.shape(), (nv, n)),
            ("dynamics.bias", (self.bias.len(), 1), (nv, 1)),
        ];
        for (path, got, want) in dims {
            if got != want {
                return Err(Error::validation(
                    path,
                    format!("has shape {}x{}, expected {}x{}", got.0, got.1, want.0, want.1),
                ));
            }
        }
        for (path, v, len) in [
            ("dynamics.qdd", &self.qdd, nv),
            ("dynamics.tau_min", &self.tau_min, n),
            ("dynamics.tau_max", &self.tau_max, n),
            ("dynamics.qd_pre", &self.qd_pre, nv),
            ("dynamics.qd_min", &self.qd_min, nv),
            ("dynamics.qd_max", &self.qd_max, nv),
            ("dynamics.tau_pre", &self.tau_pre, n),
        ] {
            if v.len() != len {
                return Err(Error::validation(path, format!("has {} entries, expected {len}", v.len())));
            }
            check_finite(v.iter(), path)?;
        }
        for (path, m) in [
            ("dynamics.jacobian", &self.jacobian),
            ("dynamics.inertia", &self.inertia),
            ("dynamics.selection", &self.selection),
        ] {
            check_finite(m.iter(), path)?;
        }
        check_finite(self.bias.iter(), "dynamics.bias")?;
        if let Some(l) = &self.impulse_to_qd {
            if l.shape() != (nv, 3) {
                return Err(Error::validation("dynamics.impulse_to_qd", format!("expected shape {nv}x3")));
            }
            check_finite(l.iter(), "dynamics.impulse_to_qd")?;
        }
        if let Some(j) = &self.impact_jacobian {
            if j.shape() != (3, nv) {
                return Err(Error::validation("dynamics.impact_jacobian", format!("expected shape 3x{nv}")));
            }
            check_finite(j.iter(), "dynamics.impact_jacobian")?;
        }
        for (lo, hi, path) in [
            (&self.tau_min, &self.tau_max, "dynamics.tau_min"),
            (&self.qd_min, &self.qd_max, "dynamics.qd_min"),
        ] {
            if lo.iter().zip(hi.iter()).any(|(l, h)| l > h) {
                return Err(Error::validation(path, "lower bound exceeds upper bound"));
            }
        }
        let scale = self.inertia.amax().max(1.0);
        if (&self.inertia - self.inertia.transpose()).amax() > 1e-8 * scale {
            return Err(Error::validation("dynamics.inertia", "must be symmetric"));
        }
        let min_eig = self.inertia.clone().symmetric_eigenvalues().min();
        if min_eig <= 1e-8 * scale {
            return Err(Error::validation("dynamics.inertia", "must be positive definite"));
        }
        Ok(())
    }
}

/// Complete stance: contacts, lumped mass, CoM and environment.
#[derive(Debug, Clone, PartialEq)]
pub struct StanceSpec {
    pub contacts: Vec<ContactSpec>,
    pub mass: f64,
    pub com: Vector3<f64>,
    pub gravity: f64,
    /// Unit vector opposite to gravity.
    pub normal: Vector3<f64>,
    pub dynamics: Option<DynamicsData>,
}

impl StanceSpec {
    pub fn new(contacts: Vec<ContactSpec>, mass: f64, com: Vector3<f64>) -> Self {
        Self {
            contacts,
            mass,
            com,
            gravity: DEFAULT_GRAVITY,
            normal: Vector3::z(),
            dynamics: None,
        }
    }

    /// Body weight `m·g`.
    pub fn weight(&self) -> f64 {
        self.mass * self.gravity
    }

    pub fn validate(&self) -> Result<()> {
        if self.contacts.is_empty() {
            return Err(Error::validation("contacts", "at least one contact is required"));
        }
        for (i, c) in self.contacts.iter().enumerate() {
            c.validate(&format!("contacts[{i}]"))?;
        }
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::validation("mass", format!("must be positive, got {}", self.mass)));
        }
        check_finite(self.com.iter(), "com")?;
        if self.com.z <= 0.0 {
            return Err(Error::validation("com", format!("height must be positive, got {}", self.com.z)));
        }
        if !(self.gravity.is_finite() && self.gravity > 0.0) {
            return Err(Error::validation("gravity", format!("must be positive, got {}", self.gravity)));
        }
        check_unit(&self.normal, "normal")?;
        if let Some(d) = &self.dynamics {
            d.validate(self.contacts.len())?;
        }
        Ok(())
    }
}

/// Intentional impact at a single point.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpactSpec {
    pub point: Vector3<f64>,
    /// Impact contact frame to the CoM (inertial-aligned) frame.
    pub rotation: Matrix3<f64>,
    /// Surface normal in the contact frame, pointing toward the robot.
    pub normal: Vector3<f64>,
    pub mu_impact: f64,
    pub cr_min: f64,
    pub cr_max: f64,
    pub n_mu: usize,
    /// Contact-frame impulse-to-velocity map.
    pub inverse_inertia: Matrix3<f64>,
    pub pre_comd: Vector2<f64>,
    pub v_ref: Vector3<f64>,
    pub delta_t: f64,
    pub torque_ratio: f64,
}

impl ImpactSpec {
    fn validate(&self) -> Result<()> {
        check_finite(self.point.iter(), "impact.point")?;
        check_rotation(&self.rotation, "impact.rotation")?;
        check_unit_loose(&self.normal, "impact.normal")?;
        if !(self.mu_impact.is_finite() && self.mu_impact > 0.0) {
            return Err(Error::validation("impact.mu_impact", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.cr_min) {
            return Err(Error::validation("impact.cr_min", "must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.cr_max) {
            return Err(Error::validation("impact.cr_max", "must lie in [0, 1]"));
        }
        if self.cr_min > self.cr_max {
            return Err(Error::validation("impact.cr_min", "must not exceed cr_max"));
        }
        if self.n_mu < 3 {
            return Err(Error::validation("impact.n_mu", "needs at least 3 generators"));
        }
        check_psd(&self.inverse_inertia, "impact.inverse_inertia")?;
        check_finite(self.pre_comd.iter(), "impact.pre_comd")?;
        check_finite(self.v_ref.iter(), "impact.v_ref")?;
        if !(self.delta_t.is_finite() && self.delta_t > 0.0) {
            return Err(Error::validation("impact.delta_t", "must be positive"));
        }
        if !(self.torque_ratio.is_finite() && self.torque_ratio > 0.0) {
            return Err(Error::validation("impact.torque_ratio", "must be positive"));
        }
        Ok(())
    }
}

/// Impulse-to-velocity map of a composite rigid body at a point offset `r`
/// from its CoM: `(1/m)·I₃ − [r]ₓ I_c⁻¹ [r]ₓ`.
pub fn crb_inverse_inertia(mass: f64, inertia: &Matrix3<f64>, r: &Vector3<f64>) -> Result<Matrix3<f64>> {
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::InvalidInput(format!("mass must be positive, got {mass}")));
    }
    let inv = inertia
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::NumericalFailure("CRB inertia tensor is singular".into()))?;
    let rx = r.cross_matrix();
    let w = Matrix3::identity() / mass - rx * inv * rx;
    Ok(0.5 * (w + w.transpose()))
}

// ---------------------------------------------------------------------------
// Document schema

fn default_gravity() -> f64 {
    DEFAULT_GRAVITY
}

fn default_normal() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

fn default_n_mu() -> usize {
    DEFAULT_N_MU
}

fn default_delta_t() -> f64 {
    DEFAULT_DELTA_T
}

fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactDocument {
    pub rotation: [[f64; 3]; 3],
    pub position: [f64; 3],
    pub half_x: f64,
    pub half_y: f64,
    pub mu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_z_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_z_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsDocument {
    pub jacobian: Vec<Vec<f64>>,
    pub inertia: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub selection: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qdd: Option<Vec<f64>>,
    pub tau_min: Vec<f64>,
    pub tau_max: Vec<f64>,
    pub qd_pre: Vec<f64>,
    pub qd_min: Vec<f64>,
    pub qd_max: Vec<f64>,
    pub tau_pre: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impulse_to_qd: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impact_jacobian: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrbDocument {
    pub inertia: [[f64; 3]; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpactDocument {
    pub point: [f64; 3],
    pub rotation: [[f64; 3]; 3],
    pub normal: [f64; 3],
    pub mu_impact: f64,
    pub cr_min: f64,
    pub cr_max: f64,
    #[serde(default = "default_n_mu")]
    pub n_mu: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse_inertia: Option<[[f64; 3]; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crb: Option<CrbDocument>,
    #[serde(default)]
    pub pre_comd: [f64; 2],
    pub v_ref: [f64; 3],
    #[serde(default = "default_delta_t")]
    pub delta_t: f64,
    #[serde(default = "default_one")]
    pub torque_ratio: f64,
}

/// Serialized stance, mirroring [`StanceSpec`] plus an optional impact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StanceDocument {
    pub contacts: Vec<ContactDocument>,
    pub mass: f64,
    pub com: [f64; 3],
    #[serde(default = "default_gravity")]
    pub gravity: f64,
    #[serde(default = "default_normal")]
    pub normal: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dynamics: Option<DynamicsDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impact: Option<ImpactDocument>,
}

/// Validated contents of a stance document.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedStance {
    pub stance: StanceSpec,
    pub impact: Option<ImpactSpec>,
}

/// Parses and validates a JSON stance document.
pub fn load_stance(document: &str) -> Result<LoadedStance> {
    let de = &mut serde_json::Deserializer::from_str(document);
    let doc: StanceDocument = serde_path_to_error::deserialize(de).map_err(schema_error)?;
    doc.into_specs()
}

/// Same as [`load_stance`] for an already-parsed JSON value.
pub fn load_stance_value(value: serde_json::Value) -> Result<LoadedStance> {
    let doc: StanceDocument = serde_path_to_error::deserialize(value).map_err(schema_error)?;
    doc.into_specs()
}

fn schema_error<E: std::fmt::Display>(err: serde_path_to_error::Error<E>) -> Error {
    let path = err.path().to_string();
    Error::Schema {
        path: if path == "." { String::new() } else { path },
        message: err.into_inner().to_string(),
    }
}

impl StanceDocument {
    pub fn into_specs(self) -> Result<LoadedStance> {
        let contacts = self
            .contacts
            .iter()
            .map(|c| ContactSpec {
                rotation: mat3(&c.rotation),
                position: Vector3::from(c.position),
                half_x: c.half_x,
                half_y: c.half_y,
                mu: c.mu,
                tau_z_min: c.tau_z_min.unwrap_or(f64::NEG_INFINITY),
                tau_z_max: c.tau_z_max.unwrap_or(f64::INFINITY),
            })
            .collect();
        let dynamics = match &self.dynamics {
            Some(d) => Some(dynamics_from_doc(d)?),
            None => None,
        };
        let stance = StanceSpec {
            contacts,
            mass: self.mass,
            com: Vector3::from(self.com),
            gravity: self.gravity,
            normal: Vector3::from(self.normal),
            dynamics,
        };
        stance.validate()?;
        let impact = match &self.impact {
            Some(doc) => Some(impact_from_doc(doc, &stance)?),
            None => None,
        };
        Ok(LoadedStance { stance, impact })
    }
}

fn impact_from_doc(doc: &ImpactDocument, stance: &StanceSpec) -> Result<ImpactSpec> {
    let rotation = mat3(&doc.rotation);
    check_rotation(&rotation, "impact.rotation")?;
    let point = Vector3::from(doc.point);
    let derived = match &doc.crb {
        Some(crb) => {
            let inertia = mat3(&crb.inertia);
            check_finite(inertia.iter(), "impact.crb.inertia")?;
            if (inertia - inertia.transpose()).amax() > 1e-9 * inertia.amax().max(1.0)
                || inertia.symmetric_eigenvalues().min() <= 0.0
            {
                return Err(Error::validation("impact.crb.inertia", "must be symmetric positive definite"));
            }
            let w = crb_inverse_inertia(stance.mass, &inertia, &(point - stance.com))
                .map_err(|e| Error::validation("impact.crb.inertia", e.to_string()))?;
            Some(rotation.transpose() * w * rotation)
        }
        None => None,
    };
    let inverse_inertia = match (doc.inverse_inertia.as_ref().map(mat3), derived) {
        (Some(explicit), Some(d)) => {
            if (explicit - d).amax() > W_INV_MATCH_TOL {
                return Err(Error::validation(
                    "impact.inverse_inertia",
                    format!("differs from the CRB-derived map by {:.3e}", (explicit - d).amax()),
                ));
            }
            explicit
        }
        (Some(explicit), None) => explicit,
        (None, Some(d)) => d,
        (None, None) => {
            return Err(Error::validation(
                "impact.inverse_inertia",
                "either inverse_inertia or crb must be given",
            ))
        }
    };
    let spec = ImpactSpec {
        point,
        rotation,
        normal: Vector3::from(doc.normal),
        mu_impact: doc.mu_impact,
        cr_min: doc.cr_min,
        cr_max: doc.cr_max,
        n_mu: doc.n_mu,
        inverse_inertia,
        pre_comd: Vector2::from(doc.pre_comd),
        v_ref: Vector3::from(doc.v_ref),
        delta_t: doc.delta_t,
        torque_ratio: doc.torque_ratio,
    };
    spec.validate()?;
    Ok(spec)
}

fn dynamics_from_doc(d: &DynamicsDocument) -> Result<DynamicsData> {
    let nv = d.inertia.len();
    Ok(DynamicsData {
        jacobian: dmat(&d.jacobian, "dynamics.jacobian")?,
        inertia: dmat(&d.inertia, "dynamics.inertia")?,
        bias: DVector::from_vec(d.bias.clone()),
        selection: dmat(&d.selection, "dynamics.selection")?,
        qdd: DVector::from_vec(d.qdd.clone().unwrap_or_else(|| vec![0.0; nv])),
        tau_min: DVector::from_vec(d.tau_min.clone()),
        tau_max: DVector::from_vec(d.tau_max.clone()),
        qd_pre: DVector::from_vec(d.qd_pre.clone()),
        qd_min: DVector::from_vec(d.qd_min.clone()),
        qd_max: DVector::from_vec(d.qd_max.clone()),
        tau_pre: DVector::from_vec(d.tau_pre.clone()),
        impulse_to_qd: d.impulse_to_qd.as_ref().map(|m| dmat(m, "dynamics.impulse_to_qd")).transpose()?,
        impact_jacobian: d.impact_jacobian.as_ref().map(|m| dmat(m, "dynamics.impact_jacobian")).transpose()?,
    })
}

fn mat3(rows: &[[f64; 3]; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|i, j| rows[i][j])
}

/// Row-major nested list to a dense matrix; ragged rows are rejected.
fn dmat(rows: &[Vec<f64>], path: &str) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(Error::validation(format!("{path}[{i}]"), format!("row has {} entries, expected {ncols}", rows[i].len())));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn check_finite<'a>(mut values: impl Iterator<Item = &'a f64>, path: &str) -> Result<()> {
    if values.any(|v| !v.is_finite()) {
        return Err(Error::validation(path, "entries must be finite"));
    }
    Ok(())
}

fn check_rotation(r: &Matrix3<f64>, path: &str) -> Result<()> {
    check_finite(r.iter(), path)?;
    let ortho = (r.transpose() * r - Matrix3::identity()).norm();
    if ortho > ROTATION_TOL {
        return Err(Error::validation(path, format!("not orthonormal (‖RᵀR − I‖ = {ortho:.3e})")));
    }
    if r.determinant() <= 0.0 {
        return Err(Error::validation(path, "determinant must be +1"));
    }
    Ok(())
}

fn check_unit(v: &Vector3<f64>, path: &str) -> Result<()> {
    check_finite(v.iter(), path)?;
    if (v.norm() - 1.0).abs() > UNIT_TOL {
        return Err(Error::validation(path, format!("must have unit norm, got {}", v.norm())));
    }
    Ok(())
}

fn check_unit_loose(v: &Vector3<f64>, path: &str) -> Result<()> {
    check_finite(v.iter(), path)?;
    if (v.norm() - 1.0).abs() > ROTATION_TOL {
        return Err(Error::validation(path, format!("must have unit norm, got {}", v.norm())));
    }
    Ok(())
}

fn check_psd(m: &Matrix3<f64>, path: &str) -> Result<()> {
    check_finite(m.iter(), path)?;
    let scale = m.amax().max(1e-300);
    if (m - m.transpose()).amax() > 1e-9 * scale {
        return Err(Error::validation(path, "must be symmetric"));
    }
    if m.symmetric_eigenvalues().min() < -1e-9 * scale {
        return Err(Error::validation(path, "must be positive semidefinite"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use proptest::prelude::*;

    fn flat_contact(x: f64, y: f64) -> ContactDocument {
        ContactDocument {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            position: [x, y, 0.0],
            half_x: 0.1,
            half_y: 0.05,
            mu: 0.7,
            tau_z_min: None,
            tau_z_max: None,
        }
    }

    fn two_feet() -> StanceDocument {
        StanceDocument {
            contacts: vec![flat_contact(0.0, 0.1), flat_contact(0.0, -0.1)],
            mass: 40.0,
            com: [0.0, 0.0, 0.78],
            gravity: 9.81,
            normal: [0.0, 0.0, 1.0],
            dynamics: None,
            impact: None,
        }
    }

    #[test]
    fn loads_two_feet() {
        let text = serde_json::to_string(&two_feet()).unwrap();
        let loaded = load_stance(&text).unwrap();
        assert_eq!(loaded.stance.contacts.len(), 2);
        assert_eq!(loaded.stance.com, Vector3::new(0.0, 0.0, 0.78));
        assert_eq!(loaded.stance.contacts[0].mu, 0.7);
        assert!(loaded.impact.is_none());
    }

    #[test]
    fn negative_half_x_has_field_path() {
        let mut doc = two_feet();
        doc.contacts[0].half_x = -0.1;
        let err = doc.into_specs().unwrap_err();
        assert_eq!(err.field_path(), Some("contacts[0].half_x"));
    }

    #[test]
    fn ramp_rotation_validates() {
        let mut doc = two_feet();
        let r = Rotation3::from_axis_angle(&Vector3::x_axis(), 30f64.to_radians());
        let m = r.matrix();
        doc.contacts[1].rotation = [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ];
        let loaded = doc.into_specs().unwrap();
        assert_ne!(loaded.stance.contacts[0].rotation, loaded.stance.contacts[1].rotation);
    }

    #[test]
    fn schema_errors_carry_paths() {
        let err = load_stance(r#"{"contacts": [], "mass": 1, "com": [0,0,1], "colour": 3}"#).unwrap_err();
        assert_eq!(err.code(), "schema_error");
        let err = load_stance(r#"{"contacts": [{"rotation": [[1,0,0],[0,1,0],[0,0,1]], "position": [0,0,0], "half_x": "a", "half_y": 1, "mu": 1}], "mass": 1, "com": [0,0,1]}"#).unwrap_err();
        assert_eq!(err.field_path(), Some("contacts[0].half_x"));
        let err = load_stance(r#"{"contacts": [], "mass": 1, "com": [0,0,1]}"#).unwrap_err();
        assert_eq!(err.field_path(), Some("contacts"));
    }

    #[test]
    fn rejects_bad_rotation_and_mass() {
        let mut doc = two_feet();
        doc.contacts[1].rotation[0][0] = 1.1;
        assert_eq!(doc.into_specs().unwrap_err().field_path(), Some("contacts[1].rotation"));
        let mut doc = two_feet();
        doc.mass = -1.0;
        assert_eq!(doc.into_specs().unwrap_err().field_path(), Some("mass"));
    }

    #[test]
    fn crb_examples() {
        let w = crb_inverse_inertia(3.0, &Matrix3::identity(), &Vector3::zeros()).unwrap();
        assert!((w - Matrix3::identity() / 3.0).amax() < 1e-15);
        let w = crb_inverse_inertia(1.0, &Matrix3::identity(), &Vector3::new(0.0, 0.0, 1.0)).unwrap();
        assert!((w - Matrix3::from_diagonal(&Vector3::new(2.0, 2.0, 1.0))).amax() < 1e-15);
        assert!(matches!(
            crb_inverse_inertia(1.0, &Matrix3::zeros(), &Vector3::x()),
            Err(Error::NumericalFailure(_))
        ));
    }

    fn spd(a: [f64; 6]) -> Matrix3<f64> {
        let l = Matrix3::new(a[0], 0.0, 0.0, a[1], a[2], 0.0, a[3], a[4], a[5]);
        l * l.transpose() + Matrix3::identity() * 0.05
    }

    proptest! {
        #[test]
        fn crb_matches_rigid_body_update(
            m in 0.5f64..80.0,
            a in prop::array::uniform6(-2.0f64..2.0),
            r in prop::array::uniform3(-1.0f64..1.0),
            lam in prop::array::uniform3(-10.0f64..10.0),
        ) {
            let inertia = spd(a);
            let r = Vector3::from(r);
            let lam = Vector3::from(lam);
            let w = crb_inverse_inertia(m, &inertia, &r).unwrap();
            // momentum update of a free rigid body hit at r
            let dv = lam / m;
            let dw = inertia.try_inverse().unwrap() * r.cross(&lam);
            let point = dv + dw.cross(&r);
            prop_assert!((w * lam - point).amax() <= 1e-10 * (1.0 + point.amax()));
            prop_assert!(w.symmetric_eigenvalues().min() >= -1e-12);
        }

        #[test]
        fn crb_even_in_r_for_isotropic_inertia(
            m in 0.5f64..80.0,
            k in 0.1f64..5.0,
            r in prop::array::uniform3(-1.0f64..1.0),
        ) {
            let inertia = Matrix3::identity() * k;
            let r = Vector3::from(r);
            let a = crb_inverse_inertia(m, &inertia, &r).unwrap();
            let b = crb_inverse_inertia(m, &inertia, &(-r)).unwrap();
            prop_assert!((a - b).amax() <= 1e-14 * (1.0 + a.amax()));
        }

        #[test]
        fn loader_never_panics(text in "\\PC{0,200}") {
            let _ = load_stance(&text);
        }
    }

    #[test]
    fn explicit_and_crb_inverse_inertia_must_agree() {
        let mut doc = two_feet();
        let eye = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        doc.impact = Some(ImpactDocument {
            point: [0.3, 0.0, 1.0],
            rotation: eye,
            normal: [0.0, 0.0, 1.0],
            mu_impact: 0.24,
            cr_min: 0.0,
            cr_max: 0.2,
            n_mu: 16,
            inverse_inertia: None,
            crb: Some(CrbDocument { inertia: [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]] }),
            pre_comd: [0.0, 0.0],
            v_ref: [0.0, 0.0, -1.0],
            delta_t: 0.005,
            torque_ratio: 1.0,
        });
        let derived = doc.clone().into_specs().unwrap().impact.unwrap().inverse_inertia;
        let mut explicit = doc.clone();
        let rows = |m: Matrix3<f64>| [[m[(0, 0)], m[(0, 1)], m[(0, 2)]], [m[(1, 0)], m[(1, 1)], m[(1, 2)]], [m[(2, 0)], m[(2, 1)], m[(2, 2)]]];
        explicit.impact.as_mut().unwrap().inverse_inertia = Some(rows(derived));
        assert!(explicit.clone().into_specs().is_ok());
        explicit.impact.as_mut().unwrap().inverse_inertia = Some(rows(derived * 1.01));
        assert_eq!(explicit.into_specs().unwrap_err().field_path(), Some("impact.inverse_inertia"));
    }
}
