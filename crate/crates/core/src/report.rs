//! Structured result documents shared by the command line and the HTTP
//! service.
//!
//! A document is `{meta, data, warnings}`. Floats are rounded to
//! [`SIG_DIGITS`] significant digits and keys keep insertion order, so equal
//! inputs give byte-identical output.

use std::time::Instant;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::impact::{approach_speed, delta_comd_set, impulse_set_with, post_impact_set};
use crate::lipm::{pendulum_constant, simulate_phase, ssr, LipmState, DEFAULT_DT, DEFAULT_HORIZON};
use crate::maxvel::{max_contact_velocity, MaxVelOptions};
use crate::polytope::{HalfspaceSet2, Polygon2};
use crate::region::{compute_region, zmp_support_area, RegionOptions, RegionResult, DEFAULT_MAX_DIRS};
use crate::stance::{ImpactSpec, LoadedStance};
use crate::wrench::com_height;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SIG_DIGITS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Region,
    ZmpArea,
    Impulse,
    Maxvel,
    Phase,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Region => "region",
            Command::ZmpArea => "zmp-area",
            Command::Impulse => "impulse",
            Command::Maxvel => "maxvel",
            Command::Phase => "phase",
        }
    }
}

/// Option overrides. `None` means the documented default.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunOptions {
    pub eps_area: Option<f64>,
    pub max_dirs: Option<usize>,
    pub plane_height: Option<f64>,
    pub n_mu: Option<usize>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub full_qdot: bool,
    pub c0: Option<f64>,
    pub cd0: Option<f64>,
    pub zmp_lo: Option<f64>,
    pub zmp_hi: Option<f64>,
    pub timings: bool,
}

impl RunOptions {
    pub fn region(&self) -> RegionOptions {
        RegionOptions {
            eps_area: self.eps_area,
            max_dirs: self.max_dirs.unwrap_or(DEFAULT_MAX_DIRS),
            plane_height: self.plane_height.unwrap_or(0.0),
        }
    }

    pub fn maxvel(&self) -> MaxVelOptions {
        MaxVelOptions {
            region: self.region(),
            n_mu: self.n_mu,
            full_qdot: self.full_qdot,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub command: Command,
    pub document: Value,
    pub csv_header: Vec<&'static str>,
    pub csv_rows: Vec<Vec<f64>>,
}

impl Report {
    pub fn data(&self) -> &Value {
        &self.document["data"]
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.document).expect("documents serialize");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::InvalidInput(format!("CSV output failed: {e}"));
        w.write_record(&self.csv_header).map_err(io)?;
        for row in &self.csv_rows {
            w.write_record(row.iter().map(|v| format_float(*v))).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidInput(format!("CSV output failed: {e}")))?;
        Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
    }
}

/// Rounds to [`SIG_DIGITS`] significant digits; `-0` becomes `0`.
pub fn round_sig(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return if v == 0.0 { 0.0 } else { v };
    }
    let r: f64 = format!("{:.*e}", SIG_DIGITS - 1, v).parse().expect("formatted float parses");
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

fn format_float(v: f64) -> String {
    if v.is_finite() {
        round_sig(v).to_string()
    } else {
        String::new()
    }
}

/// Rounds every float in `value` in place.
pub fn round_floats(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            let v = n.as_f64().expect("checked f64");
            *value = serde_json::Number::from_f64(round_sig(v)).map_or(Value::Null, Value::Number);
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

fn v2(v: &Vector2<f64>) -> Value {
    json!([v.x, v.y])
}

fn v3(v: &Vector3<f64>) -> Value {
    json!([v.x, v.y, v.z])
}

fn vertices(p: &Polygon2) -> Value {
    Value::Array(p.vertices().iter().map(v2).collect())
}

fn halfspaces(hs: &HalfspaceSet2) -> Value {
    json!({ "G": hs.normals, "h": hs.offsets })
}

fn applied(flag: bool) -> &'static str {
    if flag {
        "applied"
    } else {
        "omitted"
    }
}

/// Reads a vertex list written by this module back into a polygon.
pub fn polygon_from_json(value: &Value) -> Result<Polygon2> {
    let items = value
        .as_array()
        .ok_or_else(|| Error::InvalidInput("vertex list must be an array".into()))?;
    let mut pts = Vec::with_capacity(items.len());
    for item in items {
        let xy = item
            .as_array()
            .filter(|a| a.len() == 2)
            .and_then(|a| Some(Vector2::new(a[0].as_f64()?, a[1].as_f64()?)))
            .ok_or_else(|| Error::InvalidInput("vertex must be a pair of numbers".into()))?;
        pts.push(xy);
    }
    Polygon2::from_ccw(pts)
}

fn region_data(r: &RegionResult, warnings: &mut Vec<String>) -> Map<String, Value> {
    if !r.diagnostics.converged {
        warnings.push(format!(
            "region refinement stopped at the direction budget with area gap {:.3e}",
            r.gap
        ));
    }
    if r.diagnostics.unbounded {
        warnings.push("every ray reached the wrench box; the region is likely unbounded".into());
    } else if r.diagnostics.box_active_rays > 0 {
        warnings.push(format!("{} ray(s) reached the wrench box", r.diagnostics.box_active_rays));
    }
    let witnesses: Vec<Value> = r
        .witnesses
        .iter()
        .map(|w| json!({ "direction": v2(&w.direction), "point": v2(&w.point), "box_active": w.box_active }))
        .collect();
    let mut m = Map::new();
    m.insert("inner_vertices".into(), vertices(&r.inner));
    m.insert("outer_halfspaces".into(), halfspaces(&r.outer));
    m.insert("area".into(), json!(r.inner.area()));
    m.insert("gap".into(), json!(r.gap));
    m.insert("directions_used".into(), json!(r.directions_used));
    m.insert(
        "flags".into(),
        json!({
            "torque_limits": applied(r.torque_limits),
            "converged": r.diagnostics.converged,
            "unbounded": r.diagnostics.unbounded,
            "box_active_rays": r.diagnostics.box_active_rays,
        }),
    );
    m.insert("witnesses".into(), Value::Array(witnesses));
    m
}

fn require_impact(loaded: &LoadedStance) -> Result<&ImpactSpec> {
    loaded
        .impact
        .as_ref()
        .ok_or_else(|| Error::validation("impact", "this command needs an impact section"))
}

/// Pipeline stage an error belongs to.
pub fn error_stage(err: &Error, command: Command) -> String {
    match err {
        Error::SolverFailure { stage, .. } => stage.clone(),
        Error::Schema { .. } | Error::Validation { .. } => "load".into(),
        _ => command.as_str().into(),
    }
}

/// `{code, stage, message, field_path?}` body for a failed run.
pub fn error_document(err: &Error, command: Command) -> Value {
    let mut body = json!({
        "code": err.code(),
        "stage": error_stage(err, command),
        "message": err.to_string(),
    });
    if let Some(path) = err.field_path() {
        body["field_path"] = json!(path);
    }
    body
}

/// Runs one command on a loaded stance.
pub fn run_command(command: Command, loaded: &LoadedStance, opts: &RunOptions) -> Result<Report> {
    let start = Instant::now();
    let stance = &loaded.stance;
    let mut warnings = Vec::new();
    let (data, csv_header, csv_rows): (Value, Vec<&'static str>, Vec<Vec<f64>>) = match command {
        Command::Region | Command::ZmpArea => {
            let ro = opts.region();
            let r = if command == Command::Region {
                compute_region(stance, &ro)?
            } else {
                zmp_support_area(stance, &ro)?
            };
            let mut m = region_data(&r, &mut warnings);
            if command == Command::ZmpArea {
                m.insert("plane_height".into(), json!(ro.plane_height));
            }
            let rows = r.inner.vertices().iter().map(|v| vec![v.x, v.y]).collect();
            (Value::Object(m), vec!["x", "y"], rows)
        }
        Command::Impulse => {
            let impact = require_impact(loaded)?;
            let n_mu = opts.n_mu.unwrap_or(impact.n_mu);
            let v_n = approach_speed(impact, &impact.v_ref);
            let set = impulse_set_with(impact, n_mu, v_n)?;
            let deltas = delta_comd_set(&set, &impact.rotation, stance.mass);
            let post = post_impact_set(&impact.pre_comd, &deltas)?;
            for g in &set.jammed {
                warnings.push(format!("generator {g} is jammed and was dropped"));
            }
            let mut rows = Vec::new();
            let verts: Vec<Value> = set
                .vertices
                .iter()
                .zip(&deltas)
                .enumerate()
                .map(|(k, (v, d))| {
                    let index = 2 * v.generator + k % 2;
                    rows.push(vec![
                        index as f64,
                        v.generator as f64,
                        v.restitution,
                        v.sigma,
                        v.lambda.x,
                        v.lambda.y,
                        v.lambda.z,
                        d.x,
                        d.y,
                        d.z,
                    ]);
                    json!({
                        "index": index,
                        "generator": v.generator,
                        "restitution": v.restitution,
                        "sigma": v.sigma,
                        "lambda": v3(&v.lambda),
                        "delta_comd": v3(d),
                        "restitution_residual": set.restitution_residual(impact, v),
                    })
                })
                .collect();
            let data = json!({
                "v_n_pre": v_n,
                "pre_comd": v2(&impact.pre_comd),
                "cone": {
                    "mu": set.cone.mu,
                    "n_mu": set.cone.n_mu,
                    "generators": set.cone.generators.iter().map(v3).collect::<Vec<_>>(),
                },
                "vertices": verts,
                "jammed_generators": set.jammed,
                "post_impact_vertices": vertices(&post.polygon),
            });
            let header = vec![
                "index",
                "generator",
                "restitution",
                "sigma",
                "lambda_x",
                "lambda_y",
                "lambda_z",
                "dcomd_x",
                "dcomd_y",
                "dcomd_z",
            ];
            (data, header, rows)
        }
        Command::Maxvel => {
            let impact = require_impact(loaded)?;
            let r = max_contact_velocity(stance, impact, &opts.maxvel())?;
            let region = r.region.as_ref().expect("pipeline attaches the region");
            let mut region_warnings = Vec::new();
            let region_doc = region_data(region, &mut region_warnings);
            warnings.extend(region_warnings);
            for g in &r.diagnostics.dropped_generators {
                warnings.push(format!("generator {g} is jammed and was dropped"));
            }
            let d = &r.diagnostics;
            let mut points = vec![Value::Null; r.sigma.len()];
            let mut rows = Vec::new();
            for (y, &id) in r.post_impact.points.iter().zip(&r.vertex_ids) {
                points[id] = v2(y);
                let active = if r.active_vertices.contains(&id) { 1.0 } else { 0.0 };
                rows.push(vec![id as f64, y.x, y.y, active]);
            }
            rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
            let mut data = json!({
                "speed": r.speed,
                "reference_speed": r.reference_speed,
                "v_star": v3(&r.v_star),
                "sigma": r.sigma,
                "post_impact_vertices": vertices(&r.post_impact.polygon),
                "post_impact_points": points,
                "active_vertices": r.active_vertices,
                "region_vertices": region_doc["inner_vertices"].clone(),
                "region_halfspaces": halfspaces(&r.region_halfspaces),
                "flags": {
                    "status": "optimal",
                    "mode": d.mode.as_str(),
                    "binding": d.binding.iter().map(|f| f.as_str()).collect::<Vec<_>>(),
                    "dropped_generators": d.dropped_generators,
                    "torque_limits": applied(region.torque_limits),
                    "joint_velocity_rows": applied(d.joint_velocity_rows),
                    "joint_torque_rows": applied(d.joint_torque_rows),
                    "certificate_residual": d.certificate_residual,
                },
            });
            if let Some(q) = &r.qdot {
                data["qdot"] = json!(q.iter().copied().collect::<Vec<f64>>());
            }
            (data, vec!["vertex", "x", "y", "active"], rows)
        }
        Command::Phase => {
            let w = pendulum_constant(com_height(stance), stance.gravity)?;
            let (lo, hi) = match (opts.zmp_lo, opts.zmp_hi) {
                (Some(lo), Some(hi)) => (lo, hi),
                (None, None) => {
                    let area = zmp_support_area(stance, &opts.region())?;
                    let xs = area.inner.vertices().iter().map(|v| v.x);
                    let lo = xs.clone().fold(f64::INFINITY, f64::min);
                    let hi = xs.fold(f64::NEG_INFINITY, f64::max);
                    (lo, hi)
                }
                _ => return Err(Error::InvalidInput("zmp_lo and zmp_hi must be given together".into())),
            };
            let c0 = opts.c0.unwrap_or(stance.com.x);
            let cd0 = opts.cd0.unwrap_or(0.0);
            let dt = opts.dt.unwrap_or(DEFAULT_DT);
            let horizon = opts.horizon.unwrap_or(DEFAULT_HORIZON);
            let bounds = ssr(lo, hi, c0, w)?;
            let traj = simulate_phase(LipmState::new(c0, cd0), lo, hi, w, dt, horizon)?;
            let rows: Vec<Vec<f64>> = traj.samples.iter().map(|s| vec![s.t, s.c_x, s.cd_x, s.z]).collect();
            let data = json!({
                "w": w,
                "zmp_bounds": [lo, hi],
                "initial": { "c_x": c0, "cd_x": cd0 },
                "dt": dt,
                "horizon": horizon,
                "ssr": { "lo": bounds.lo, "hi": bounds.hi },
                "outcome": traj.outcome,
                "samples": rows,
            });
            (data, vec!["t", "c_x", "cd_x", "z"], rows)
        }
    };

    let mut meta = json!({
        "version": VERSION,
        "command": command.as_str(),
        "options": opts,
    });
    if opts.timings {
        meta["timings"] = json!({ "total_ms": start.elapsed().as_secs_f64() * 1e3 });
    }
    let mut document = json!({ "meta": meta, "data": data, "warnings": warnings });
    round_floats(&mut document);
    Ok(Report {
        command,
        document,
        csv_header,
        csv_rows,
    })
}
