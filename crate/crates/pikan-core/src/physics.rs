//! Steady incompressible natural convection: dimensionless groups,
//! Boussinesq forcing, and the nine-term physics-informed residual loss.
//!
//! The governing system couples mass, momentum, and energy conservation:
//!
//! ```text
//! ∇·u = 0
//! ρ(u·∇)u − μΔu + ∇p = f,    f = (0, ρGβ(T − T_ref))
//! ρ(u·∇)T − (κ/c_p)ΔT = 0
//! ```
//!
//! The loss combines mean-square residuals of these equations at interior
//! points with velocity boundary conditions on all walls, the temperature
//! condition on the outer wall only, and sparse velocity/pressure/
//! temperature observations at sensor points. No pressure boundary
//! condition exists anywhere. All nine terms enter with unit weights.

use ndarray::{Array1, ArrayView1, Ix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::groundtruth::FieldSolution;
use crate::network::{self, NetworkState};

/// Physical constants of the benchmark fluid in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidParams {
    /// Density (kg/m³).
    pub rho: f64,
    /// Dynamic viscosity (Pa·s).
    pub mu: f64,
    /// Thermal conductivity (W/m·K).
    pub kappa: f64,
    /// Specific heat at constant pressure (J/kg·K).
    pub cp: f64,
    /// Gravitational acceleration magnitude (m/s²).
    pub g: f64,
    /// Thermal expansion coefficient (1/K).
    pub beta_exp: f64,
    /// Hot (inner) surface temperature (K).
    pub t_hot: f64,
    /// Cold (outer) surface temperature (K).
    pub t_cold: f64,
    /// Reference temperature of the buoyancy term (K).
    pub t_ref: f64,
}

impl FluidParams {
    pub fn validate(&self) -> Result<()> {
        if self.rho <= 0.0 || self.mu <= 0.0 || self.kappa <= 0.0 || self.cp <= 0.0 {
            return Err(Error::InvalidArgument(
                "rho, mu, kappa, cp must be positive".into(),
            ));
        }
        if self.t_hot <= self.t_cold {
            return Err(Error::InvalidArgument("t_hot must exceed t_cold".into()));
        }
        Ok(())
    }

    /// The benchmark parameter set: unit density, expansion, gravity,
    /// specific heat, and hot temperature; zero cold and reference
    /// temperatures; `μ = κ = 2√2·10^(−2.5)`. With the enclosure side
    /// `L = 2` this yields `Ra = 1e5` and `Pr = 1`.
    pub fn ra1e5() -> Self {
        let visc = 2.0 * 2.0_f64.sqrt() * 10.0_f64.powf(-2.5);
        Self {
            rho: 1.0,
            mu: visc,
            kappa: visc,
            cp: 1.0,
            g: 1.0,
            beta_exp: 1.0,
            t_hot: 1.0,
            t_cold: 0.0,
            t_ref: 0.0,
        }
    }
}

/// Rayleigh and Prandtl numbers for a characteristic length `l`.
pub fn dimensionless(params: &FluidParams, l: f64) -> (f64, f64) {
    let ra = params.rho * params.rho * params.cp * params.g * params.beta_exp
        * (params.t_hot - params.t_cold)
        * l.powi(3)
        / (params.kappa * params.mu);
    let pr = params.cp * params.mu / params.kappa;
    (ra, pr)
}

/// Boussinesq body force per point: `fx = 0`, `fy = ρGβ(T − T_ref)`.
pub fn boussinesq_forcing(t: ArrayView1<'_, f64>, params: &FluidParams) -> (Array1<f64>, Array1<f64>) {
    let fx = Array1::zeros(t.len());
    let fy = t.mapv(|tv| params.rho * params.g * params.beta_exp * (tv - params.t_ref));
    (fx, fy)
}

/// First and pure second spatial derivatives of the four fields at a set
/// of interior points, produced by algorithmic differentiation of the
/// field mapping (analytic closed forms are permitted for test doubles).
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDerivatives {
    pub u_x: Array1<f64>,
    pub u_y: Array1<f64>,
    pub v_x: Array1<f64>,
    pub v_y: Array1<f64>,
    pub p_x: Array1<f64>,
    pub p_y: Array1<f64>,
    pub t_x: Array1<f64>,
    pub t_y: Array1<f64>,
    pub u_xx: Array1<f64>,
    pub u_yy: Array1<f64>,
    pub v_xx: Array1<f64>,
    pub v_yy: Array1<f64>,
    pub t_xx: Array1<f64>,
    pub t_yy: Array1<f64>,
}

impl FieldDerivatives {
    pub fn len(&self) -> usize {
        self.u_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn zeros(n: usize) -> Self {
        let z = || Array1::zeros(n);
        Self {
            u_x: z(),
            u_y: z(),
            v_x: z(),
            v_y: z(),
            p_x: z(),
            p_y: z(),
            t_x: z(),
            t_y: z(),
            u_xx: z(),
            u_yy: z(),
            v_xx: z(),
            v_yy: z(),
            t_xx: z(),
            t_yy: z(),
        }
    }
}

/// Manufactured source terms added to the momentum and energy residuals,
/// aligned with the interior point set. Zero for the physical problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceTerms {
    pub momentum_x: Array1<f64>,
    pub momentum_y: Array1<f64>,
    pub energy: Array1<f64>,
}

/// The nine residual terms and their unweighted sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub continuity: f64,
    pub momentum_x: f64,
    pub momentum_y: f64,
    pub energy: f64,
    pub velocity_bc: f64,
    pub temperature_outer_bc: f64,
    pub velocity_obs: f64,
    pub pressure_obs: f64,
    pub temperature_obs: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn from_components(c: [f64; 9]) -> Self {
        Self {
            continuity: c[0],
            momentum_x: c[1],
            momentum_y: c[2],
            energy: c[3],
            velocity_bc: c[4],
            temperature_outer_bc: c[5],
            velocity_obs: c[6],
            pressure_obs: c[7],
            temperature_obs: c[8],
            total: c.iter().sum(),
        }
    }

    pub fn components(&self) -> [f64; 9] {
        [
            self.continuity,
            self.momentum_x,
            self.momentum_y,
            self.energy,
            self.velocity_bc,
            self.temperature_outer_bc,
            self.velocity_obs,
            self.pressure_obs,
            self.temperature_obs,
        ]
    }

    pub fn component_names() -> [&'static str; 9] {
        [
            "continuity",
            "momentum_x",
            "momentum_y",
            "energy",
            "velocity_bc",
            "temperature_outer_bc",
            "velocity_obs",
            "pressure_obs",
            "temperature_obs",
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.components().iter().all(|c| c.is_finite())
    }

    /// Elementwise mean of several breakdowns.
    pub fn mean(items: &[LossBreakdown]) -> LossBreakdown {
        let m = items.len().max(1) as f64;
        let mut acc = [0.0; 9];
        for item in items {
            for (a, c) in acc.iter_mut().zip(item.components()) {
                *a += c;
            }
        }
        for a in acc.iter_mut() {
            *a /= m;
        }
        LossBreakdown::from_components(acc)
    }
}

fn mean_sq(values: impl Iterator<Item = f64>, count: usize) -> f64 {
    values.map(|r| r * r).sum::<f64>() / count as f64
}

/// Mean-square residuals of continuity, both momentum components, and
/// energy over the interior points. `fields` must be restricted to the
/// same interior set the derivatives were taken at.
pub fn pde_residuals(
    fields: &FieldSolution,
    derivs: &FieldDerivatives,
    params: &FluidParams,
    sources: Option<&SourceTerms>,
) -> Result<(f64, f64, f64, f64)> {
    let m1 = derivs.len();
    if fields.len() != m1 {
        return Err(Error::InvalidArgument(format!(
            "pde_residuals: {} field points vs {} derivative points",
            fields.len(),
            m1
        )));
    }
    if m1 == 0 {
        return Err(Error::InvalidArgument(
            "pde_residuals: empty interior set".into(),
        ));
    }
    if let Some(s) = sources {
        if s.momentum_x.len() != m1 || s.momentum_y.len() != m1 || s.energy.len() != m1 {
            return Err(Error::InvalidArgument(
                "pde_residuals: source terms misaligned with interior set".into(),
            ));
        }
    }
    let rho = params.rho;
    let mu = params.mu;
    let kc = params.kappa / params.cp;
    // Buoyancy is evaluated from the supplied temperature field, coupling
    // the energy solution into the momentum residual.
    let (fx, fy) = boussinesq_forcing(fields.t.view(), params);
    let continuity = mean_sq(
        (0..m1).map(|k| derivs.u_x[k] + derivs.v_y[k]),
        m1,
    );
    let momentum_x = mean_sq(
        (0..m1).map(|k| {
            let conv = rho * (fields.u[k] * derivs.u_x[k] + fields.v[k] * derivs.u_y[k]);
            let s = sources.map_or(0.0, |s| s.momentum_x[k]);
            conv + derivs.p_x[k] - mu * (derivs.u_xx[k] + derivs.u_yy[k]) - fx[k] - s
        }),
        m1,
    );
    let momentum_y = mean_sq(
        (0..m1).map(|k| {
            let conv = rho * (fields.u[k] * derivs.v_x[k] + fields.v[k] * derivs.v_y[k]);
            let s = sources.map_or(0.0, |s| s.momentum_y[k]);
            conv + derivs.p_y[k] - mu * (derivs.v_xx[k] + derivs.v_yy[k]) - fy[k] - s
        }),
        m1,
    );
    let energy = mean_sq(
        (0..m1).map(|k| {
            let conv = rho * (fields.u[k] * derivs.t_x[k] + fields.v[k] * derivs.t_y[k]);
            let s = sources.map_or(0.0, |s| s.energy[k]);
            conv - kc * (derivs.t_xx[k] + derivs.t_yy[k]) - s
        }),
        m1,
    );
    Ok((continuity, momentum_x, momentum_y, energy))
}

/// Sparse measurements at the sensor points of one geometry, aligned with
/// `idx_vel_sensors` (velocity) and `idx_pt_sensors` (pressure and
/// temperature).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observations {
    pub velocity: Vec<(f64, f64)>,
    pub pressure: Vec<f64>,
    pub temperature: Vec<f64>,
}

/// The full nine-term loss of one geometry.
///
/// `prediction` covers all `N` cloud points; `derivs` covers the interior
/// set in `cloud.idx_interior` order.
pub fn pipn_loss(
    prediction: &FieldSolution,
    derivs: &FieldDerivatives,
    cloud: &PointCloud,
    observations: &Observations,
    params: &FluidParams,
    sources: Option<&SourceTerms>,
) -> Result<LossBreakdown> {
    cloud.validate()?;
    if prediction.len() != cloud.n() {
        return Err(Error::InvalidArgument(format!(
            "prediction covers {} points, cloud has {}",
            prediction.len(),
            cloud.n()
        )));
    }
    if derivs.len() != cloud.idx_interior.len() {
        return Err(Error::InvalidArgument(
            "derivatives misaligned with the interior set".into(),
        ));
    }
    if observations.velocity.len() != cloud.idx_vel_sensors.len()
        || observations.pressure.len() != cloud.idx_pt_sensors.len()
        || observations.temperature.len() != cloud.idx_pt_sensors.len()
    {
        return Err(Error::InvalidArgument(
            "observation records do not cover the sensor index sets".into(),
        ));
    }

    let interior = prediction.restrict(&cloud.idx_interior);
    let (continuity, momentum_x, momentum_y, energy) =
        pde_residuals(&interior, derivs, params, sources)?;

    let boundary = cloud.boundary_indices();
    let velocity_bc = mean_sq_pairs(boundary.iter().enumerate().map(|(row, &i)| {
        (
            prediction.u[i] - cloud.bc_velocity[[row, 0]],
            prediction.v[i] - cloud.bc_velocity[[row, 1]],
        )
    }), boundary.len());

    let temperature_outer_bc = mean_sq(
        cloud
            .idx_outer_wall
            .iter()
            .enumerate()
            .map(|(row, &i)| prediction.t[i] - cloud.bc_temperature_outer[row]),
        cloud.idx_outer_wall.len(),
    );

    let velocity_obs = mean_sq_pairs(
        cloud
            .idx_vel_sensors
            .iter()
            .zip(&observations.velocity)
            .map(|(&i, &(ou, ov))| (prediction.u[i] - ou, prediction.v[i] - ov)),
        cloud.idx_vel_sensors.len(),
    );

    let pressure_obs = mean_sq(
        cloud
            .idx_pt_sensors
            .iter()
            .zip(&observations.pressure)
            .map(|(&i, &op)| prediction.p[i] - op),
        cloud.idx_pt_sensors.len(),
    );
    let temperature_obs = mean_sq(
        cloud
            .idx_pt_sensors
            .iter()
            .zip(&observations.temperature)
            .map(|(&i, &ot)| prediction.t[i] - ot),
        cloud.idx_pt_sensors.len(),
    );

    Ok(LossBreakdown::from_components([
        continuity,
        momentum_x,
        momentum_y,
        energy,
        velocity_bc,
        temperature_outer_bc,
        velocity_obs,
        pressure_obs,
        temperature_obs,
    ]))
}

fn mean_sq_pairs(values: impl Iterator<Item = (f64, f64)>, count: usize) -> f64 {
    values.map(|(a, b)| a * a + b * b).sum::<f64>() / count as f64
}

/// Anything that maps a point cloud to the four fields together with
/// their interior spatial derivatives. Trained networks implement this
/// through algorithmic differentiation; manufactured cases implement it
/// analytically, letting the identical loss path be verified without
/// training.
pub trait FieldMap {
    fn fields_and_derivatives(
        &self,
        cloud: &PointCloud,
    ) -> Result<(FieldSolution, FieldDerivatives)>;
}

impl FieldMap for NetworkState {
    fn fields_and_derivatives(
        &self,
        cloud: &PointCloud,
    ) -> Result<(FieldSolution, FieldDerivatives)> {
        let n = cloud.n();
        let coords = cloud
            .coords
            .view()
            .into_shape_with_order((1, n, network::INPUT_DIM))
            .map_err(|e| Error::Internal(e.to_string()))?;
        let coords3 = coords.into_dimensionality::<Ix3>().expect("rank 3");
        let sd = network::evaluate_with_derivatives(self, coords3)?;
        let fields = FieldSolution {
            u: sd.value.index_axis(ndarray::Axis(2), 0).row(0).to_owned(),
            v: sd.value.index_axis(ndarray::Axis(2), 1).row(0).to_owned(),
            p: sd.value.index_axis(ndarray::Axis(2), 2).row(0).to_owned(),
            t: sd.value.index_axis(ndarray::Axis(2), 3).row(0).to_owned(),
        };
        let pick = |arr: &ndarray::Array3<f64>, chan: usize| -> Array1<f64> {
            Array1::from_iter(cloud.idx_interior.iter().map(|&i| arr[[0, i, chan]]))
        };
        let derivs = FieldDerivatives {
            u_x: pick(&sd.ddx, 0),
            u_y: pick(&sd.ddy, 0),
            v_x: pick(&sd.ddx, 1),
            v_y: pick(&sd.ddy, 1),
            p_x: pick(&sd.ddx, 2),
            p_y: pick(&sd.ddy, 2),
            t_x: pick(&sd.ddx, 3),
            t_y: pick(&sd.ddy, 3),
            u_xx: pick(&sd.ddxx, 0),
            u_yy: pick(&sd.ddyy, 0),
            v_xx: pick(&sd.ddxx, 1),
            v_yy: pick(&sd.ddyy, 1),
            t_xx: pick(&sd.ddxx, 3),
            t_yy: pick(&sd.ddyy, 3),
        };
        Ok((fields, derivs))
    }
}

/// Runs any field mapping through the identical loss path.
pub fn pipn_loss_from_map(
    map: &dyn FieldMap,
    cloud: &PointCloud,
    observations: &Observations,
    params: &FluidParams,
    sources: Option<&SourceTerms>,
) -> Result<LossBreakdown> {
    let (fields, derivs) = map.fields_and_derivatives(cloud)?;
    pipn_loss(&fields, &derivs, cloud, observations, params, sources)
}
