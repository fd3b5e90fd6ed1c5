//! Ground-truth fields: manufactured solutions with injected sources,
//! sensor observation extraction, and external solver-file ingestion.
//!
//! Two manufactured cases are built in. The hydrostatic case
//! (`u = v = 0`, `T = c`, `p = ρGβ(c − T_ref)·y`) solves the governing
//! equations exactly with zero sources. The trigonometric case builds a
//! divergence-free velocity from the stream function
//! `φ = sin(πx)·sin(πy)` and carries analytic source terms so that the
//! momentum and energy equations hold exactly — the standard manufactured
//! route for verifying a residual pipeline when no closed-form solution
//! of the unmodified equations is available.

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::physics::{FieldDerivatives, FieldMap, FluidParams, Observations, SourceTerms};

/// Per-point values of the four fields, aligned with one cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSolution {
    pub u: Array1<f64>,
    pub v: Array1<f64>,
    pub p: Array1<f64>,
    pub t: Array1<f64>,
}

impl FieldSolution {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.u.len();
        if self.v.len() != n || self.p.len() != n || self.t.len() != n {
            return Err(Error::InvalidArgument(
                "field components have inconsistent lengths".into(),
            ));
        }
        if self
            .u
            .iter()
            .chain(&self.v)
            .chain(&self.p)
            .chain(&self.t)
            .any(|x| !x.is_finite())
        {
            return Err(Error::InvalidArgument("field values must be finite".into()));
        }
        Ok(())
    }

    /// Restricts the solution to an index subset, preserving order.
    pub fn restrict(&self, indices: &[usize]) -> FieldSolution {
        let pick = |a: &Array1<f64>| Array1::from_iter(indices.iter().map(|&i| a[i]));
        FieldSolution {
            u: pick(&self.u),
            v: pick(&self.v),
            p: pick(&self.p),
            t: pick(&self.t),
        }
    }
}

/// Value, gradient, and pure second derivatives of one field at a point.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScalarJet {
    pub v: f64,
    pub x: f64,
    pub y: f64,
    pub xx: f64,
    pub yy: f64,
}

/// Closed-form field expressions with derived source terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "case")]
pub enum ManufacturedCase {
    /// Exact solution of the unmodified equations: still fluid at uniform
    /// temperature with the hydrostatic pressure balancing buoyancy.
    Hydrostatic { temperature: f64 },
    /// Stream-function velocity with trigonometric pressure/temperature
    /// and nonzero momentum/energy sources.
    Trigonometric,
}

/// Builds the hydrostatic case at temperature `c`.
pub fn hydrostatic_case(c: f64) -> ManufacturedCase {
    ManufacturedCase::Hydrostatic { temperature: c }
}

/// Builds the trigonometric manufactured case.
pub fn trigonometric_case() -> ManufacturedCase {
    ManufacturedCase::Trigonometric
}

impl ManufacturedCase {
    /// Field values and analytic derivatives at one point.
    pub fn jets(
        &self,
        params: &FluidParams,
        x: f64,
        y: f64,
    ) -> (ScalarJet, ScalarJet, ScalarJet, ScalarJet) {
        match *self {
            ManufacturedCase::Hydrostatic { temperature } => {
                let coeff = params.rho * params.g * params.beta_exp * (temperature - params.t_ref);
                let u = ScalarJet::default();
                let v = ScalarJet::default();
                let p = ScalarJet {
                    v: coeff * y,
                    y: coeff,
                    ..Default::default()
                };
                let t = ScalarJet {
                    v: temperature,
                    ..Default::default()
                };
                (u, v, p, t)
            }
            ManufacturedCase::Trigonometric => {
                let (sx, cx) = (PI * x).sin_cos();
                let (sy, cy) = (PI * y).sin_cos();
                let (hx, gx) = (PI * x / 2.0).sin_cos();
                let (hy, gy) = (PI * y / 2.0).sin_cos();
                // u = ∂φ/∂y, v = −∂φ/∂x for φ = sin(πx)sin(πy).
                let u = ScalarJet {
                    v: PI * sx * cy,
                    x: PI * PI * cx * cy,
                    y: -PI * PI * sx * sy,
                    xx: -PI.powi(3) * sx * cy,
                    yy: -PI.powi(3) * sx * cy,
                };
                let v = ScalarJet {
                    v: -PI * cx * sy,
                    x: PI * PI * sx * sy,
                    y: -PI * PI * cx * cy,
                    xx: PI.powi(3) * cx * sy,
                    yy: PI.powi(3) * cx * sy,
                };
                let p = ScalarJet {
                    v: cx * cy,
                    x: -PI * sx * cy,
                    y: -PI * cx * sy,
                    xx: -PI * PI * cx * cy,
                    yy: -PI * PI * cx * cy,
                };
                let t = ScalarJet {
                    v: gx * gy,
                    x: -(PI / 2.0) * hx * gy,
                    y: -(PI / 2.0) * gx * hy,
                    xx: -(PI * PI / 4.0) * gx * gy,
                    yy: -(PI * PI / 4.0) * gx * gy,
                };
                (u, v, p, t)
            }
        }
    }

    /// Field values at one point.
    pub fn evaluate(&self, params: &FluidParams, x: f64, y: f64) -> (f64, f64, f64, f64) {
        let (u, v, p, t) = self.jets(params, x, y);
        (u.v, v.v, p.v, t.v)
    }

    /// Source terms making the momentum and energy equations hold exactly
    /// for these fields: the residual operators applied to the analytic
    /// derivatives.
    pub fn sources_at(&self, params: &FluidParams, x: f64, y: f64) -> (f64, f64, f64) {
        match *self {
            ManufacturedCase::Hydrostatic { .. } => (0.0, 0.0, 0.0),
            ManufacturedCase::Trigonometric => {
                let (u, v, p, t) = self.jets(params, x, y);
                let rho = params.rho;
                let s_mx = rho * (u.v * u.x + v.v * u.y) + p.x - params.mu * (u.xx + u.yy);
                let fy = rho * params.g * params.beta_exp * (t.v - params.t_ref);
                let s_my = rho * (u.v * v.x + v.v * v.y) + p.y - params.mu * (v.xx + v.yy) - fy;
                let s_t =
                    rho * (u.v * t.x + v.v * t.y) - params.kappa / params.cp * (t.xx + t.yy);
                (s_mx, s_my, s_t)
            }
        }
    }

    /// Field values at every cloud point.
    pub fn fields(&self, params: &FluidParams, cloud: &PointCloud) -> FieldSolution {
        let n = cloud.n();
        let mut u = Array1::zeros(n);
        let mut v = Array1::zeros(n);
        let mut p = Array1::zeros(n);
        let mut t = Array1::zeros(n);
        for i in 0..n {
            let (ui, vi, pi, ti) =
                self.evaluate(params, cloud.coords[[i, 0]], cloud.coords[[i, 1]]);
            u[i] = ui;
            v[i] = vi;
            p[i] = pi;
            t[i] = ti;
        }
        FieldSolution { u, v, p, t }
    }

    /// Analytic derivatives at the cloud's interior points.
    pub fn field_derivatives(&self, params: &FluidParams, cloud: &PointCloud) -> FieldDerivatives {
        let m = cloud.idx_interior.len();
        let mut d = FieldDerivatives::zeros(m);
        for (row, &i) in cloud.idx_interior.iter().enumerate() {
            let (u, v, p, t) = self.jets(params, cloud.coords[[i, 0]], cloud.coords[[i, 1]]);
            d.u_x[row] = u.x;
            d.u_y[row] = u.y;
            d.v_x[row] = v.x;
            d.v_y[row] = v.y;
            d.p_x[row] = p.x;
            d.p_y[row] = p.y;
            d.t_x[row] = t.x;
            d.t_y[row] = t.y;
            d.u_xx[row] = u.xx;
            d.u_yy[row] = u.yy;
            d.v_xx[row] = v.xx;
            d.v_yy[row] = v.yy;
            d.t_xx[row] = t.xx;
            d.t_yy[row] = t.yy;
        }
        d
    }

    /// Sources at the interior points; `None` when identically zero.
    pub fn source_terms(&self, params: &FluidParams, cloud: &PointCloud) -> Option<SourceTerms> {
        match self {
            ManufacturedCase::Hydrostatic { .. } => None,
            ManufacturedCase::Trigonometric => {
                let m = cloud.idx_interior.len();
                let mut s = SourceTerms {
                    momentum_x: Array1::zeros(m),
                    momentum_y: Array1::zeros(m),
                    energy: Array1::zeros(m),
                };
                for (row, &i) in cloud.idx_interior.iter().enumerate() {
                    let (mx, my, e) =
                        self.sources_at(params, cloud.coords[[i, 0]], cloud.coords[[i, 1]]);
                    s.momentum_x[row] = mx;
                    s.momentum_y[row] = my;
                    s.energy[row] = e;
                }
                Some(s)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ManufacturedCase::Hydrostatic { .. } => "hydrostatic",
            ManufacturedCase::Trigonometric => "trigonometric",
        }
    }
}

/// A manufactured case flowing through the same mapping interface as a
/// trained network, with analytic derivatives.
pub struct DirectFieldAdapter<'a> {
    pub case: &'a ManufacturedCase,
    pub params: &'a FluidParams,
}

impl FieldMap for DirectFieldAdapter<'_> {
    fn fields_and_derivatives(
        &self,
        cloud: &PointCloud,
    ) -> Result<(FieldSolution, FieldDerivatives)> {
        Ok((
            self.case.fields(self.params, cloud),
            self.case.field_derivatives(self.params, cloud),
        ))
    }
}

/// Extracts sensor observations from a full field solution.
pub fn observations(fields: &FieldSolution, cloud: &PointCloud) -> Result<Observations> {
    if fields.len() != cloud.n() {
        return Err(Error::InvalidArgument(
            "fields do not cover the cloud".into(),
        ));
    }
    Ok(Observations {
        velocity: cloud
            .idx_vel_sensors
            .iter()
            .map(|&i| (fields.u[i], fields.v[i]))
            .collect(),
        pressure: cloud.idx_pt_sensors.iter().map(|&i| fields.p[i]).collect(),
        temperature: cloud.idx_pt_sensors.iter().map(|&i| fields.t[i]).collect(),
    })
}

/// Evaluates (or loads) truth on a cloud and extracts observations.
pub fn sample_truth(
    source: &TruthSource<'_>,
    params: &FluidParams,
    cloud: &PointCloud,
) -> Result<(FieldSolution, Observations)> {
    let fields = match source {
        TruthSource::Manufactured(case) => case.fields(params, cloud),
        TruthSource::External(path) => load_external_truth(path, cloud)?,
    };
    fields.validate()?;
    let obs = observations(&fields, cloud)?;
    Ok((fields, obs))
}

/// Where ground truth comes from.
pub enum TruthSource<'a> {
    Manufactured(&'a ManufacturedCase),
    External(&'a Path),
}

/// Header line of field files.
pub const FIELD_FILE_HEADER: &str = "# x[m] y[m] u[m/s] v[m/s] p[Pa] T[K]";

/// Writes `x y u v p T` rows with shortest round-trip float formatting.
pub fn write_field_file(path: &Path, cloud: &PointCloud, fields: &FieldSolution) -> Result<()> {
    if fields.len() != cloud.n() {
        return Err(Error::InvalidArgument(
            "fields do not cover the cloud".into(),
        ));
    }
    let mut out = String::new();
    out.push_str(FIELD_FILE_HEADER);
    out.push('\n');
    for i in 0..cloud.n() {
        out.push_str(&format!(
            "{} {} {} {} {} {}\n",
            cloud.coords[[i, 0]],
            cloud.coords[[i, 1]],
            fields.u[i],
            fields.v[i],
            fields.p[i],
            fields.t[i],
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Coordinate-matching tolerance for external field files (meters).
pub const COORD_MATCH_TOLERANCE: f64 = 1e-9;

/// Loads a field file and aligns it with `cloud` by coordinate matching.
/// Every cloud point must receive exactly one record; the first offending
/// record is named in the error.
pub fn load_external_truth(path: &Path, cloud: &PointCloud) -> Result<FieldSolution> {
    let n = cloud.n();
    // Coordinates are binned on a grid finer than the matching tolerance
    // would allow to confuse, which keeps lookup linear.
    let key = |x: f64, y: f64| -> (i64, i64) {
        let s = 1.0 / (16.0 * COORD_MATCH_TOLERANCE);
        ((x * s).round() as i64, (y * s).round() as i64)
    };
    let mut index: std::collections::HashMap<(i64, i64), Vec<usize>> =
        std::collections::HashMap::new();
    for i in 0..n {
        index
            .entry(key(cloud.coords[[i, 0]], cloud.coords[[i, 1]]))
            .or_default()
            .push(i);
    }

    let mut u = Array1::from_elem(n, f64::NAN);
    let mut v = Array1::from_elem(n, f64::NAN);
    let mut p = Array1::from_elem(n, f64::NAN);
    let mut t = Array1::from_elem(n, f64::NAN);
    let mut filled = vec![false; n];

    let file = std::fs::File::open(path)?;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(Error::Ingestion(format!(
                "{}:{}: expected 6 columns (x y u v p T), found {}",
                path.display(),
                lineno + 1,
                fields.len()
            )));
        }
        let mut vals = [0.0; 6];
        for (slot, s) in vals.iter_mut().zip(&fields) {
            *slot = s.parse().map_err(|_| {
                Error::Ingestion(format!(
                    "{}:{}: invalid number {s:?}",
                    path.display(),
                    lineno + 1
                ))
            })?;
        }
        let (x, y) = (vals[0], vals[1]);
        let mut matched = None;
        let (kx, ky) = key(x, y);
        'search: for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(cands) = index.get(&(kx + dx, ky + dy)) {
                    for &i in cands {
                        let d = (cloud.coords[[i, 0]] - x)
                            .abs()
                            .max((cloud.coords[[i, 1]] - y).abs());
                        if d <= COORD_MATCH_TOLERANCE {
                            matched = Some(i);
                            break 'search;
                        }
                    }
                }
            }
        }
        let Some(i) = matched else {
            return Err(Error::Ingestion(format!(
                "{}:{}: record at ({x}, {y}) matches no cloud point",
                path.display(),
                lineno + 1
            )));
        };
        if filled[i] {
            return Err(Error::Ingestion(format!(
                "{}:{}: duplicate record for cloud point {i} at ({x}, {y})",
                path.display(),
                lineno + 1
            )));
        }
        filled[i] = true;
        u[i] = vals[2];
        v[i] = vals[3];
        p[i] = vals[4];
        t[i] = vals[5];
    }
    if let Some(i) = filled.iter().position(|f| !f) {
        return Err(Error::Ingestion(format!(
            "{}: cloud point {i} at ({}, {}) received no record",
            path.display(),
            cloud.coords[[i, 0]],
            cloud.coords[[i, 1]]
        )));
    }
    let fields = FieldSolution { u, v, p, t };
    fields.validate()?;
    Ok(fields)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{self, CloudCounts, GeometrySpec, SensorCounts, Shape};
    use crate::physics::{self, FluidParams};
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn test_cloud() -> (GeometrySpec, PointCloud) {
        let spec = GeometrySpec::new(Shape::Octagon, 9.0).unwrap();
        let counts = CloudCounts {
            n: 256,
            interior: 208,
            boundary: 48,
            outer: 32,
        };
        let sensors = SensorCounts {
            lattice: 8,
            ring: 5,
            surface: 5,
        };
        let cloud = geometry::build_cloud(&spec, &counts, &sensors, 0.0, 3).unwrap();
        (spec, cloud)
    }

    #[test]
    fn hydrostatic_is_an_exact_solution() {
        let params = FluidParams::ra1e5();
        let case = hydrostatic_case(0.7);
        let (_, cloud) = test_cloud();
        let fields = case.fields(&params, &cloud);
        let derivs = case.field_derivatives(&params, &cloud);
        let interior = fields.restrict(&cloud.idx_interior);
        let (c, mx, my, e) = physics::pde_residuals(&interior, &derivs, &params, None).unwrap();
        assert_abs_diff_eq!(c, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mx, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(my, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn hydrostatic_pressure_integrates_buoyancy() {
        let mut params = FluidParams::ra1e5();
        params.t_ref = 0.0;
        let case = hydrostatic_case(1.0);
        // Unit parameters: p(x, y) = y.
        let (u, v, p, _) = case.evaluate(&params, 0.3, -0.8);
        assert_abs_diff_eq!(u, 0.0);
        assert_abs_diff_eq!(v, 0.0);
        assert_abs_diff_eq!(p, -0.8, epsilon = 1e-15);
        // At c = t_ref the pressure vanishes identically.
        let flat = hydrostatic_case(params.t_ref);
        let (_, _, p0, _) = flat.evaluate(&params, 0.3, -0.8);
        assert_abs_diff_eq!(p0, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn trigonometric_case_frozen_point() {
        let params = FluidParams::ra1e5();
        let case = trigonometric_case();
        let (u, v, _, t) = case.evaluate(&params, 0.0, 0.0);
        assert_abs_diff_eq!(u, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t, 1.0, epsilon = 1e-15);
    }

    /// Independently derived closed forms (stream-function route) for the
    /// trigonometric fields; deliberately uses the `u_xx = −π²·u` and
    /// `v_xx = −π²·v` eigenfunction identities instead of re-expanding
    /// products, so a sign or factor slip in the implementation cannot
    /// cancel here.
    fn oracle_jets(x: f64, y: f64) -> (ScalarJet, ScalarJet, ScalarJet, ScalarJet) {
        let u_v = PI * (PI * x).sin() * (PI * y).cos();
        let v_v = -PI * (PI * x).cos() * (PI * y).sin();
        let u = ScalarJet {
            v: u_v,
            x: PI * PI * (PI * x).cos() * (PI * y).cos(),
            y: -PI * PI * (PI * x).sin() * (PI * y).sin(),
            xx: -PI * PI * u_v,
            yy: -PI * PI * u_v,
        };
        let v = ScalarJet {
            v: v_v,
            // v_x = −∂²φ/∂x² = π² sin(πx) sin(πy)
            x: PI * PI * (PI * x).sin() * (PI * y).sin(),
            // continuity: v_y = −u_x
            y: -PI * PI * (PI * x).cos() * (PI * y).cos(),
            xx: -PI * PI * v_v,
            yy: -PI * PI * v_v,
        };
        let p_v = (PI * x).cos() * (PI * y).cos();
        let p = ScalarJet {
            v: p_v,
            x: -PI * (PI * x).sin() * (PI * y).cos(),
            y: -PI * (PI * x).cos() * (PI * y).sin(),
            xx: -PI * PI * p_v,
            yy: -PI * PI * p_v,
        };
        let t_v = (PI * x / 2.0).cos() * (PI * y / 2.0).cos();
        let t = ScalarJet {
            v: t_v,
            x: -PI / 2.0 * (PI * x / 2.0).sin() * (PI * y / 2.0).cos(),
            y: -PI / 2.0 * (PI * x / 2.0).cos() * (PI * y / 2.0).sin(),
            xx: -PI * PI / 4.0 * t_v,
            yy: -PI * PI / 4.0 * t_v,
        };
        (u, v, p, t)
    }

    #[test]
    fn trigonometric_velocity_is_divergence_free() {
        let params = FluidParams::ra1e5();
        let case = trigonometric_case();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let x = rng.random_range(-1.0..1.0);
            let y = rng.random_range(-1.0..1.0);
            let (u, v, _, _) = case.jets(&params, x, y);
            assert!((u.x + v.y).abs() < 1e-12);
        }
    }

    #[test]
    fn trigonometric_residuals_vanish_against_independent_oracle() {
        // Sources are derived from the implementation's derivatives; the
        // residuals recomputed from the independently written oracle
        // derivatives must still vanish.
        let params = FluidParams::ra1e5();
        let case = trigonometric_case();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut max_res: f64 = 0.0;
        for _ in 0..1000 {
            let x = rng.random_range(-1.0..1.0);
            let y = rng.random_range(-1.0..1.0);
            let (u, v, p, t) = oracle_jets(x, y);
            let (s_mx, s_my, s_t) = case.sources_at(&params, x, y);
            let rho = params.rho;
            let r_c = u.x + v.y;
            let r_mx =
                rho * (u.v * u.x + v.v * u.y) + p.x - params.mu * (u.xx + u.yy) - s_mx;
            let fy = rho * params.g * params.beta_exp * (t.v - params.t_ref);
            let r_my =
                rho * (u.v * v.x + v.v * v.y) + p.y - params.mu * (v.xx + v.yy) - fy - s_my;
            let r_e =
                rho * (u.v * t.x + v.v * t.y) - params.kappa / params.cp * (t.xx + t.yy) - s_t;
            for r in [r_c, r_mx, r_my, r_e] {
                max_res = max_res.max(r.abs());
            }
        }
        assert!(max_res < 1e-10, "max residual {max_res}");
    }

    #[test]
    fn analytic_derivatives_match_finite_differences() {
        let params = FluidParams::ra1e5();
        let case = trigonometric_case();
        let h = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let x = rng.random_range(-0.9..0.9);
            let y = rng.random_range(-0.9..0.9);
            let (u, v, p, t) = case.jets(&params, x, y);
            let at = |x: f64, y: f64| case.evaluate(&params, x, y);
            let (up, vp, pp, tp) = at(x + h, y);
            let (um, vm, pm, tm) = at(x - h, y);
            for (jet, fp, fm, f0) in [
                (&u, up, um, u.v),
                (&v, vp, vm, v.v),
                (&p, pp, pm, p.v),
                (&t, tp, tm, t.v),
            ] {
                let fd1 = (fp - fm) / (2.0 * h);
                let fd2 = (fp - 2.0 * f0 + fm) / (h * h);
                assert!((jet.x - fd1).abs() < 1e-6 * jet.x.abs().max(1.0));
                assert!((jet.xx - fd2).abs() < 1e-4 * jet.xx.abs().max(1.0));
            }
        }
    }

    #[test]
    fn every_case_passes_the_adapter_loss_with_its_own_boundary_values() {
        // With the case's own boundary values installed in the cloud, its
        // own observations, and its sources registered, the full loss path
        // vanishes for both manufactured cases.
        let mut params = FluidParams::ra1e5();
        params.t_cold = 0.5;
        params.t_ref = 0.5;
        let (_, mut cloud) = test_cloud();
        for case in [hydrostatic_case(0.5), trigonometric_case()] {
            let fields = case.fields(&params, &cloud);
            for (row, &i) in cloud.boundary_indices().iter().enumerate() {
                cloud.bc_velocity[[row, 0]] = fields.u[i];
                cloud.bc_velocity[[row, 1]] = fields.v[i];
            }
            for (row, &i) in cloud.idx_outer_wall.clone().iter().enumerate() {
                cloud.bc_temperature_outer[row] = fields.t[i];
            }
            let obs = observations(&fields, &cloud).unwrap();
            let sources = case.source_terms(&params, &cloud);
            let adapter = DirectFieldAdapter {
                case: &case,
                params: &params,
            };
            let loss = crate::physics::pipn_loss_from_map(
                &adapter,
                &cloud,
                &obs,
                &params,
                sources.as_ref(),
            )
            .unwrap();
            assert!(
                loss.total < 1e-10,
                "{} adapter total = {}",
                case.name(),
                loss.total
            );
        }
    }

    #[test]
    fn observation_counts_follow_sensor_sets() {
        let params = FluidParams::ra1e5();
        let (_, cloud) = test_cloud();
        let case = hydrostatic_case(0.4);
        let (fields, obs) =
            sample_truth(&TruthSource::Manufactured(&case), &params, &cloud).unwrap();
        assert_eq!(obs.velocity.len(), cloud.idx_vel_sensors.len());
        assert_eq!(obs.pressure.len(), cloud.idx_pt_sensors.len());
        assert_eq!(obs.temperature.len(), cloud.idx_pt_sensors.len());
        assert!(obs.velocity.iter().all(|&(u, v)| u == 0.0 && v == 0.0));
        assert!(obs.temperature.iter().all(|&t| t == 0.4));
        assert_eq!(fields.len(), cloud.n());
    }

    #[test]
    fn field_file_round_trip_is_bit_identical() {
        let params = FluidParams::ra1e5();
        let (_, cloud) = test_cloud();
        let fields = trigonometric_case().fields(&params, &cloud);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.txt");
        write_field_file(&path, &cloud, &fields).unwrap();
        let back = load_external_truth(&path, &cloud).unwrap();
        assert_eq!(fields, back);
    }

    #[test]
    fn ingestion_rejects_bad_files() {
        let params = FluidParams::ra1e5();
        let (_, cloud) = test_cloud();
        let fields = hydrostatic_case(0.2).fields(&params, &cloud);
        let dir = tempfile::tempdir().unwrap();

        // A duplicated record.
        let path = dir.path().join("dup.txt");
        write_field_file(&path, &cloud, &fields).unwrap();
        let mut text = std::fs::read_to_string(&path).unwrap();
        let dup_line = text.lines().nth(1).unwrap().to_string();
        text.push_str(&dup_line);
        text.push('\n');
        std::fs::write(&path, text).unwrap();
        let err = load_external_truth(&path, &cloud).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");

        // A missing record.
        let path2 = dir.path().join("missing.txt");
        let full = std::fs::read_to_string(dir.path().join("dup.txt")).unwrap();
        let keep: Vec<&str> = full.lines().take(cloud.n()).collect(); // drops the last point
        std::fs::write(&path2, keep.join("\n")).unwrap();
        let err2 = load_external_truth(&path2, &cloud).unwrap_err();
        assert!(err2.to_string().contains("no record"), "{err2}");

        // A record matching no point.
        let path3 = dir.path().join("stray.txt");
        std::fs::write(&path3, "5.0 5.0 0 0 0 0\n").unwrap();
        let err3 = load_external_truth(&path3, &cloud).unwrap_err();
        assert!(err3.to_string().contains("matches no cloud point"), "{err3}");
    }
}
