//! Enclosure-with-polygon domains, point-cloud sampling, and sensors.
//!
//! The fluid domain is the square `H = [−1, 1]²` minus a rotated regular
//! polygon `W` centered at the origin. The dataset holds 135 domains:
//! 40 nonagons (Ω = 1°..40°), 45 octagons (Ω = 1°..45°), and 50 heptagons
//! (Ω = 1°..50°), with fixed per-shape side lengths.
//!
//! Clouds place points on the outer square (equally spaced along the
//! perimeter), on the polygon surface (equally spaced by arc length), and
//! in the interior (a Halton sequence with rejection inside the polygon
//! or within a 0.01 m clearance band of it). Everything is deterministic
//! in `(spec, counts, seed)`.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

/// Half-width of the square enclosure `H` (side length 2 m).
pub const ENCLOSURE_HALF_WIDTH: f64 = 1.0;
/// Interior points keep this clearance from the polygon surface.
pub const POLYGON_CLEARANCE: f64 = 0.01;
/// Offset ring of movable sensors sits at this multiple of the polygon
/// circumradius.
pub const SENSOR_RING_FACTOR: f64 = 1.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Heptagon,
    Octagon,
    Nonagon,
}

impl Shape {
    pub fn vertex_count(self) -> usize {
        match self {
            Shape::Heptagon => 7,
            Shape::Octagon => 8,
            Shape::Nonagon => 9,
        }
    }

    /// Published side length of the equilateral cross-section (m).
    pub fn side_length(self) -> f64 {
        use std::f64::consts::PI;
        match self {
            Shape::Heptagon => 0.365,
            Shape::Octagon => 0.8 * (2.0_f64.sqrt() - 1.0),
            Shape::Nonagon => 0.365 * (PI / 9.0).sin() / (PI / 7.0).sin(),
        }
    }

    /// Largest rotation in the dataset for this shape (degrees).
    pub fn max_rotation_deg(self) -> f64 {
        match self {
            Shape::Heptagon => 50.0,
            Shape::Octagon => 45.0,
            Shape::Nonagon => 40.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Shape::Heptagon => "heptagon",
            Shape::Octagon => "octagon",
            Shape::Nonagon => "nonagon",
        }
    }
}

/// One enclosure-plus-rotated-polygon domain definition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub shape: Shape,
    pub side_length: f64,
    /// Counterclockwise rotation about the polygon centroid, degrees.
    pub omega_deg: f64,
    pub enclosure_half_width: f64,
}

impl GeometrySpec {
    pub fn new(shape: Shape, omega_deg: f64) -> Result<Self> {
        let spec = Self {
            shape,
            side_length: shape.side_length(),
            omega_deg,
            enclosure_half_width: ENCLOSURE_HALF_WIDTH,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if (self.side_length - self.shape.side_length()).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "side length {} does not match the {} value {}",
                self.side_length,
                self.shape.name(),
                self.shape.side_length()
            )));
        }
        if !(0.0..=self.shape.max_rotation_deg()).contains(&self.omega_deg) {
            return Err(Error::InvalidArgument(format!(
                "rotation {}° outside the {} range [0, {}]",
                self.omega_deg,
                self.shape.name(),
                self.shape.max_rotation_deg()
            )));
        }
        if self.circumradius() + POLYGON_CLEARANCE >= self.enclosure_half_width {
            return Err(Error::InvalidArgument(
                "polygon does not fit inside the enclosure".into(),
            ));
        }
        Ok(())
    }

    pub fn circumradius(&self) -> f64 {
        let k = self.shape.vertex_count() as f64;
        self.side_length / (2.0 * (std::f64::consts::PI / k).sin())
    }

    /// Stable identifier used in file names and manifests.
    pub fn id(&self) -> String {
        format!("{}_{:03}", self.shape.name(), self.omega_deg.round() as i64)
    }
}

/// The canonical 135-domain dataset in deterministic order: nonagons,
/// octagons, then heptagons, each with Ω = 1°, 2°, ...
pub fn generate_dataset_specs() -> Vec<GeometrySpec> {
    generate_specs(40, 45, 50).expect("canonical counts are valid")
}

/// A deterministic subset holding the first `nonagons`/`octagons`/
/// `heptagons` rotations of each shape, in dataset order.
pub fn generate_specs(nonagons: usize, octagons: usize, heptagons: usize) -> Result<Vec<GeometrySpec>> {
    let mut out = Vec::with_capacity(nonagons + octagons + heptagons);
    let mut push = |shape: Shape, count: usize| -> Result<()> {
        if count as f64 > shape.max_rotation_deg() {
            return Err(Error::Config(format!(
                "at most {} {} rotations exist",
                shape.max_rotation_deg(),
                shape.name()
            )));
        }
        for omega in 1..=count {
            out.push(GeometrySpec::new(shape, omega as f64)?);
        }
        Ok(())
    };
    push(Shape::Nonagon, nonagons)?;
    push(Shape::Octagon, octagons)?;
    push(Shape::Heptagon, heptagons)?;
    Ok(out)
}

/// Vertices of the regular polygon, counterclockwise, first vertex at
/// angle Ω from the positive x-axis.
pub fn polygon_vertices(spec: &GeometrySpec) -> Array2<f64> {
    let k = spec.shape.vertex_count();
    let r = spec.circumradius();
    let omega = spec.omega_deg.to_radians();
    Array2::from_shape_fn((k, 2), |(i, j)| {
        let angle = omega + 2.0 * std::f64::consts::PI * i as f64 / k as f64;
        if j == 0 {
            r * angle.cos()
        } else {
            r * angle.sin()
        }
    })
}

fn point_in_convex_polygon(p: [f64; 2], vertices: &Array2<f64>) -> bool {
    let k = vertices.nrows();
    for i in 0..k {
        let a = [vertices[[i, 0]], vertices[[i, 1]]];
        let b = [vertices[[(i + 1) % k, 0]], vertices[[(i + 1) % k, 1]]];
        let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
        if cross < 0.0 {
            return false;
        }
    }
    true
}

fn dist_point_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0);
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

fn dist_to_polygon_boundary(p: [f64; 2], vertices: &Array2<f64>) -> f64 {
    let k = vertices.nrows();
    let mut best = f64::INFINITY;
    for i in 0..k {
        let a = [vertices[[i, 0]], vertices[[i, 1]]];
        let b = [vertices[[(i + 1) % k, 0]], vertices[[(i + 1) % k, 1]]];
        best = best.min(dist_point_segment(p, a, b));
    }
    best
}

/// Cardinalities of one cloud: `interior + boundary = n` and
/// `outer < boundary`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloudCounts {
    pub n: usize,
    pub interior: usize,
    pub boundary: usize,
    pub outer: usize,
}

impl CloudCounts {
    /// The published profile: N = 5000, M1 = 4340, M2 = 660, M3 = 492.
    pub fn standard() -> Self {
        Self {
            n: 5000,
            interior: 4340,
            boundary: 660,
            outer: 492,
        }
    }

    pub fn inner_wall(&self) -> usize {
        self.boundary - self.outer
    }

    pub fn validate(&self) -> Result<()> {
        if self.interior + self.boundary != self.n {
            return Err(Error::Config(format!(
                "counts: interior {} + boundary {} != n {}",
                self.interior, self.boundary, self.n
            )));
        }
        if self.outer >= self.boundary {
            return Err(Error::Config(
                "counts: outer must be a strict subset of boundary".into(),
            ));
        }
        if self.interior == 0 || self.outer == 0 || self.inner_wall() == 0 {
            return Err(Error::Config("counts: every point class must be non-empty".into()));
        }
        Ok(())
    }
}

/// Sensor layout: fixed interior lattice, per-geometry offset ring, and
/// surface sensors on the polygon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorCounts {
    pub lattice: usize,
    pub ring: usize,
    pub surface: usize,
}

impl SensorCounts {
    /// The published layout: 80 fixed + 25 adjusted interior sensors
    /// (M4 = 105) and 25 surface sensors (M5 = 130).
    pub fn standard() -> Self {
        Self {
            lattice: 80,
            ring: 25,
            surface: 25,
        }
    }

    pub fn velocity_sensors(&self) -> usize {
        self.lattice + self.ring
    }

    pub fn pt_sensors(&self) -> usize {
        self.velocity_sensors() + self.surface
    }
}

/// N labeled points of one domain with index partitions, sensor index
/// sets, and boundary-condition values.
///
/// Index layout: `[0, interior)` interior, then the inner-wall points in
/// arc-length order, then the outer-wall points. `bc_velocity` rows align
/// with [`PointCloud::boundary_indices`] (inner wall first);
/// `bc_temperature_outer` aligns with `idx_outer_wall`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub coords: Array2<f64>,
    pub idx_interior: Vec<usize>,
    pub idx_inner_wall: Vec<usize>,
    pub idx_outer_wall: Vec<usize>,
    pub idx_vel_sensors: Vec<usize>,
    pub idx_pt_sensors: Vec<usize>,
    pub bc_velocity: Array2<f64>,
    pub bc_temperature_outer: Array1<f64>,
}

impl PointCloud {
    pub fn n(&self) -> usize {
        self.coords.nrows()
    }

    /// All boundary indices, inner wall first, aligned with `bc_velocity`.
    pub fn boundary_indices(&self) -> Vec<usize> {
        self.idx_inner_wall
            .iter()
            .chain(self.idx_outer_wall.iter())
            .copied()
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let mut seen = vec![false; n];
        for &i in self
            .idx_interior
            .iter()
            .chain(&self.idx_inner_wall)
            .chain(&self.idx_outer_wall)
        {
            if i >= n {
                return Err(Error::InvalidArgument(format!("index {i} out of range")));
            }
            if seen[i] {
                return Err(Error::InvalidArgument(format!(
                    "index {i} appears in two partitions"
                )));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument(
                "partitions do not cover every point".into(),
            ));
        }
        let interior_set: std::collections::HashSet<usize> =
            self.idx_interior.iter().copied().collect();
        if !self
            .idx_vel_sensors
            .iter()
            .all(|i| interior_set.contains(i))
        {
            return Err(Error::InvalidArgument(
                "velocity sensors must be interior points".into(),
            ));
        }
        let inner_set: std::collections::HashSet<usize> =
            self.idx_inner_wall.iter().copied().collect();
        for &i in &self.idx_pt_sensors {
            if !interior_set.contains(&i) && !inner_set.contains(&i) {
                return Err(Error::InvalidArgument(
                    "pressure/temperature sensors must be interior or inner-wall points".into(),
                ));
            }
        }
        if self.bc_velocity.nrows() != self.idx_inner_wall.len() + self.idx_outer_wall.len() {
            return Err(Error::InvalidArgument(
                "bc_velocity rows must cover the boundary".into(),
            ));
        }
        if self.bc_temperature_outer.len() != self.idx_outer_wall.len() {
            return Err(Error::InvalidArgument(
                "bc_temperature_outer must cover the outer wall".into(),
            ));
        }
        Ok(())
    }
}

fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

/// Samples one cloud. Outer-wall points are equally spaced along the
/// square perimeter starting at the corner (−1, −1); inner-wall points
/// are equally spaced by arc length from the first polygon vertex;
/// interior points come from a seed-offset Halton sequence with rejection
/// inside the polygon or its clearance band. `outer_wall_temperature`
/// fills the stored Dirichlet values; wall velocities are zero.
pub fn sample_point_cloud(
    spec: &GeometrySpec,
    counts: &CloudCounts,
    outer_wall_temperature: f64,
    seed: u64,
) -> Result<PointCloud> {
    spec.validate()?;
    counts.validate()?;
    let vertices = polygon_vertices(spec);
    let h = spec.enclosure_half_width;

    let mut coords = Array2::zeros((counts.n, 2));

    // Interior: Halton bases (2, 3), start offset derived from the seed.
    let start = 1 + (seed % 1_000_003) * 7919;
    let mut placed = 0;
    let mut draw = 0u64;
    while placed < counts.interior {
        let idx = start + draw;
        draw += 1;
        if draw > 200 * counts.interior as u64 {
            return Err(Error::Config(
                "interior sampling failed to place the requested points".into(),
            ));
        }
        let p = [
            h * (2.0 * halton(idx, 2) - 1.0),
            h * (2.0 * halton(idx, 3) - 1.0),
        ];
        if point_in_convex_polygon(p, &vertices) {
            continue;
        }
        if dist_to_polygon_boundary(p, &vertices) < POLYGON_CLEARANCE {
            continue;
        }
        coords[[placed, 0]] = p[0];
        coords[[placed, 1]] = p[1];
        placed += 1;
    }

    // Inner wall: equal arc-length spacing along the polygon.
    let k = vertices.nrows();
    let side = spec.side_length;
    let perimeter = side * k as f64;
    let inner_count = counts.inner_wall();
    for j in 0..inner_count {
        let s = perimeter * j as f64 / inner_count as f64;
        let edge = (s / side).floor() as usize % k;
        let t = (s - edge as f64 * side) / side;
        let a = [vertices[[edge, 0]], vertices[[edge, 1]]];
        let b = [vertices[[(edge + 1) % k, 0]], vertices[[(edge + 1) % k, 1]]];
        let row = counts.interior + j;
        coords[[row, 0]] = a[0] + t * (b[0] - a[0]);
        coords[[row, 1]] = a[1] + t * (b[1] - a[1]);
    }

    // Outer wall: equal spacing along the square perimeter.
    let square_perimeter = 8.0 * h;
    let corners = [[-h, -h], [h, -h], [h, h], [-h, h]];
    for j in 0..counts.outer {
        let s = square_perimeter * j as f64 / counts.outer as f64;
        let side_idx = (s / (2.0 * h)).floor() as usize % 4;
        let t = (s - side_idx as f64 * 2.0 * h) / (2.0 * h);
        let a = corners[side_idx];
        let b = corners[(side_idx + 1) % 4];
        let row = counts.interior + inner_count + j;
        coords[[row, 0]] = a[0] + t * (b[0] - a[0]);
        coords[[row, 1]] = a[1] + t * (b[1] - a[1]);
    }

    let idx_interior: Vec<usize> = (0..counts.interior).collect();
    let idx_inner_wall: Vec<usize> =
        (counts.interior..counts.interior + inner_count).collect();
    let idx_outer_wall: Vec<usize> = (counts.interior + inner_count..counts.n).collect();

    let cloud = PointCloud {
        coords,
        idx_interior,
        idx_inner_wall,
        idx_outer_wall,
        idx_vel_sensors: Vec::new(),
        idx_pt_sensors: Vec::new(),
        bc_velocity: Array2::zeros((counts.boundary, 2)),
        bc_temperature_outer: Array1::from_elem(counts.outer, outer_wall_temperature),
    };
    cloud.validate()?;
    Ok(cloud)
}

/// The 80-point fixed lattice shared by all geometries: a 10×10 grid of
/// pitch 0.2 over (−0.9, 0.9)², minus the 16 central points (which would
/// fall inside or too close to a polygon) and the 4 extreme corners.
pub fn sensor_lattice_template() -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(80);
    for iy in 0..10 {
        for ix in 0..10 {
            let x = -0.9 + 0.2 * ix as f64;
            let y = -0.9 + 0.2 * iy as f64;
            if x.abs() < 0.35 && y.abs() < 0.35 {
                continue;
            }
            if x.abs() > 0.85 && y.abs() > 0.85 {
                continue;
            }
            out.push([x, y]);
        }
    }
    debug_assert_eq!(out.len(), 80);
    out
}

fn nearest_unused(
    target: [f64; 2],
    cloud: &PointCloud,
    candidates: &[usize],
    used: &mut std::collections::HashSet<usize>,
) -> Result<usize> {
    let mut best: Option<(f64, usize)> = None;
    for &i in candidates {
        if used.contains(&i) {
            continue;
        }
        let dx = cloud.coords[[i, 0]] - target[0];
        let dy = cloud.coords[[i, 1]] - target[1];
        let d2 = dx * dx + dy * dy;
        if best.is_none_or(|(bd, _)| d2 < bd) {
            best = Some((d2, i));
        }
    }
    let (_, idx) = best.ok_or_else(|| {
        Error::Config("sensor placement exhausted the candidate points".into())
    })?;
    used.insert(idx);
    Ok(idx)
}

/// Places interior sensors (fixed lattice plus an offset ring that
/// rotates with the polygon) and surface sensors (equally spaced along
/// the inner wall). Returns `(idx_vel_sensors, idx_pt_sensors)`:
/// velocity sensors are the interior set; the pressure/temperature set
/// adds the surface sensors.
pub fn place_sensors(
    cloud: &PointCloud,
    spec: &GeometrySpec,
    sensors: &SensorCounts,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let template = sensor_lattice_template();
    if sensors.lattice > template.len() {
        return Err(Error::Config(format!(
            "at most {} fixed lattice sensors are available",
            template.len()
        )));
    }
    if sensors.surface > cloud.idx_inner_wall.len() {
        return Err(Error::Config(
            "more surface sensors requested than inner-wall points".into(),
        ));
    }
    let mut used = std::collections::HashSet::new();
    let mut vel = Vec::with_capacity(sensors.velocity_sensors());
    for j in 0..sensors.lattice {
        let t = template[j * template.len() / sensors.lattice.max(1)];
        vel.push(nearest_unused(t, cloud, &cloud.idx_interior, &mut used)?);
    }
    let r = SENSOR_RING_FACTOR * spec.circumradius();
    let omega = spec.omega_deg.to_radians();
    for j in 0..sensors.ring {
        let angle = omega + 2.0 * std::f64::consts::PI * j as f64 / sensors.ring as f64;
        let t = [r * angle.cos(), r * angle.sin()];
        vel.push(nearest_unused(t, cloud, &cloud.idx_interior, &mut used)?);
    }
    let mut pt = vel.clone();
    let inner = &cloud.idx_inner_wall;
    for j in 0..sensors.surface {
        pt.push(inner[j * inner.len() / sensors.surface]);
    }
    Ok((vel, pt))
}

/// Samples a cloud and installs its sensor index sets.
pub fn build_cloud(
    spec: &GeometrySpec,
    counts: &CloudCounts,
    sensors: &SensorCounts,
    outer_wall_temperature: f64,
    seed: u64,
) -> Result<PointCloud> {
    let mut cloud = sample_point_cloud(spec, counts, outer_wall_temperature, seed)?;
    let (vel, pt) = place_sensors(&cloud, spec, sensors)?;
    cloud.idx_vel_sensors = vel;
    cloud.idx_pt_sensors = pt;
    cloud.validate()?;
    Ok(cloud)
}

/// Role labels in cloud files.
const ROLE_INTERIOR: &str = "interior";
const ROLE_INNER: &str = "inner";
const ROLE_OUTER: &str = "outer";

/// Column order of cloud files; echoed into dataset manifests. The two
/// sensor columns hold 0 for non-sensor points and the 1-based position
/// in the corresponding sensor index set otherwise, so reading a file
/// restores the exact sensor ordering.
pub const CLOUD_FILE_COLUMNS: &str = "x y role vel_sensor pt_sensor";

/// Writes the columnar cloud file (`x y role vel_sensor pt_sensor`).
/// Floats use the shortest round-trip representation, so a write/read
/// cycle is bit-identical.
pub fn write_cloud_file(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut role = vec![ROLE_INTERIOR; cloud.n()];
    for &i in &cloud.idx_inner_wall {
        role[i] = ROLE_INNER;
    }
    for &i in &cloud.idx_outer_wall {
        role[i] = ROLE_OUTER;
    }
    let mut vel = vec![0usize; cloud.n()];
    for (ord, &i) in cloud.idx_vel_sensors.iter().enumerate() {
        vel[i] = ord + 1;
    }
    let mut pt = vec![0usize; cloud.n()];
    for (ord, &i) in cloud.idx_pt_sensors.iter().enumerate() {
        pt[i] = ord + 1;
    }
    let mut out = String::new();
    out.push_str("# ");
    out.push_str(CLOUD_FILE_COLUMNS);
    out.push('\n');
    for i in 0..cloud.n() {
        out.push_str(&format!(
            "{} {} {} {} {}\n",
            cloud.coords[[i, 0]],
            cloud.coords[[i, 1]],
            role[i],
            vel[i],
            pt[i],
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a cloud file written by [`write_cloud_file`]. Sensor index
/// ordering follows file order, which preserves the generation order.
pub fn read_cloud_file(path: &Path, outer_wall_temperature: f64) -> Result<PointCloud> {
    let file = std::fs::File::open(path)?;
    let mut coords_rows: Vec<[f64; 2]> = Vec::new();
    let mut idx_interior = Vec::new();
    let mut idx_inner_wall = Vec::new();
    let mut idx_outer_wall = Vec::new();
    let mut vel_ordinals: Vec<(usize, usize)> = Vec::new();
    let mut pt_ordinals: Vec<(usize, usize)> = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(Error::Ingestion(format!(
                "{}:{}: expected 5 columns, found {}",
                path.display(),
                lineno + 1,
                fields.len()
            )));
        }
        let parse = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|_| {
                Error::Ingestion(format!(
                    "{}:{}: invalid {what} value {s:?}",
                    path.display(),
                    lineno + 1
                ))
            })
        };
        let x = parse(fields[0], "x")?;
        let y = parse(fields[1], "y")?;
        let i = coords_rows.len();
        coords_rows.push([x, y]);
        match fields[2] {
            ROLE_INTERIOR => idx_interior.push(i),
            ROLE_INNER => idx_inner_wall.push(i),
            ROLE_OUTER => idx_outer_wall.push(i),
            other => {
                return Err(Error::Ingestion(format!(
                    "{}:{}: unknown role {other:?}",
                    path.display(),
                    lineno + 1
                )))
            }
        }
        let ordinal = |s: &str, what: &str| -> Result<usize> {
            s.parse().map_err(|_| {
                Error::Ingestion(format!(
                    "{}:{}: invalid {what} ordinal {s:?}",
                    path.display(),
                    lineno + 1
                ))
            })
        };
        let vel_ord = ordinal(fields[3], "vel_sensor")?;
        if vel_ord > 0 {
            vel_ordinals.push((vel_ord, i));
        }
        let pt_ord = ordinal(fields[4], "pt_sensor")?;
        if pt_ord > 0 {
            pt_ordinals.push((pt_ord, i));
        }
    }
    let n = coords_rows.len();
    let coords = Array2::from_shape_fn((n, 2), |(i, j)| coords_rows[i][j]);
    vel_ordinals.sort_unstable();
    pt_ordinals.sort_unstable();
    let idx_vel_sensors: Vec<usize> = vel_ordinals.into_iter().map(|(_, i)| i).collect();
    let idx_pt_sensors: Vec<usize> = pt_ordinals.into_iter().map(|(_, i)| i).collect();
    let boundary = idx_inner_wall.len() + idx_outer_wall.len();
    let bc_temperature_outer = Array1::from_elem(idx_outer_wall.len(), outer_wall_temperature);
    let cloud = PointCloud {
        coords,
        idx_interior,
        idx_inner_wall,
        idx_outer_wall,
        idx_vel_sensors,
        idx_pt_sensors,
        bc_velocity: Array2::zeros((boundary, 2)),
        bc_temperature_outer,
    };
    cloud.validate()?;
    Ok(cloud)
}
