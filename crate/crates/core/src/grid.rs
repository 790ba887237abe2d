//! Cell-centered finite-volume grids on a slab or a rectangle.
//!
//! `x3` is the gravity axis: the only coordinate in 1D, the second one in 2D.

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::materials::ModelConstants;
use crate::quadrature::tree_sum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Bottom => "bottom",
            Side::Top => "top",
        }
    }
}

/// A cell face on the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    pub cell: usize,
    pub side: Side,
    /// Surface measure of the face.
    pub measure: f64,
    /// Heat-transfer coefficient `h`.
    pub h: f64,
    /// Face midpoint; `x[1]` is unused in 1D.
    pub x: [f64; 2],
    pub x3: f64,
}

/// An interior face between cells `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteriorFace {
    pub a: usize,
    pub b: usize,
    /// Face measure over center distance.
    pub transmissibility: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dimension: usize,
    cells: [usize; 2],
    extent: [f64; 2],
    spacing: [f64; 2],
    volume: f64,
    faces: Vec<InteriorFace>,
    boundary: Vec<BoundaryFace>,
}

fn check_extent(extent: f64, cells: usize, what: &str) -> Result<f64> {
    if cells == 0 {
        return Err(Error::config(format!("grid.cells.{what}"), "at least one cell"));
    }
    if !(extent > 0.0) || !extent.is_finite() {
        return Err(Error::config(
            format!("grid.extent.{what}"),
            format!("extent must be positive and finite, got {extent}"),
        ));
    }
    Ok(extent / cells as f64)
}

fn check_h(side: Side, h: f64) -> Result<f64> {
    if !(h >= 0.0) || !h.is_finite() {
        return Err(Error::config(
            format!("grid.heat_transfer.{}", side.name()),
            format!("h must be finite and non-negative, got {h}"),
        ));
    }
    Ok(h)
}

impl Grid {
    /// Slab `[0, height]` with `h` at the bottom and top ends (unit cross-section).
    pub fn slab(height: f64, cells: usize, h_bottom: f64, h_top: f64) -> Result<Self> {
        let dx = check_extent(height, cells, "x3")?;
        let faces = (1..cells)
            .map(|i| InteriorFace {
                a: i - 1,
                b: i,
                transmissibility: 1.0 / dx,
            })
            .collect();
        let boundary = vec![
            BoundaryFace {
                cell: 0,
                side: Side::Bottom,
                measure: 1.0,
                h: check_h(Side::Bottom, h_bottom)?,
                x: [0.0, 0.0],
                x3: 0.0,
            },
            BoundaryFace {
                cell: cells - 1,
                side: Side::Top,
                measure: 1.0,
                h: check_h(Side::Top, h_top)?,
                x: [height, 0.0],
                x3: height,
            },
        ];
        Ok(Self {
            dimension: 1,
            cells: [cells, 1],
            extent: [height, 1.0],
            spacing: [dx, 1.0],
            volume: dx,
            faces,
            boundary,
        })
    }

    /// Rectangle `[0, width] x [0, height]`, cells numbered `i + nx * j`.
    /// `h` is given per side in the order left, right, bottom, top.
    pub fn rectangle(
        width: f64,
        height: f64,
        nx: usize,
        ny: usize,
        h: [f64; 4],
    ) -> Result<Self> {
        let dx = check_extent(width, nx, "x1")?;
        let dy = check_extent(height, ny, "x3")?;
        let sides = [Side::Left, Side::Right, Side::Bottom, Side::Top];
        let mut hs = [0.0; 4];
        for (k, side) in sides.iter().enumerate() {
            hs[k] = check_h(*side, h[k])?;
        }
        let idx = |i: usize, j: usize| i + nx * j;
        let mut faces = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                if i + 1 < nx {
                    faces.push(InteriorFace {
                        a: idx(i, j),
                        b: idx(i + 1, j),
                        transmissibility: dy / dx,
                    });
                }
                if j + 1 < ny {
                    faces.push(InteriorFace {
                        a: idx(i, j),
                        b: idx(i, j + 1),
                        transmissibility: dx / dy,
                    });
                }
            }
        }
        let mut boundary = Vec::new();
        for j in 0..ny {
            let y = (j as f64 + 0.5) * dy;
            boundary.push(BoundaryFace {
                cell: idx(0, j),
                side: Side::Left,
                measure: dy,
                h: hs[0],
                x: [0.0, y],
                x3: y,
            });
            boundary.push(BoundaryFace {
                cell: idx(nx - 1, j),
                side: Side::Right,
                measure: dy,
                h: hs[1],
                x: [width, y],
                x3: y,
            });
        }
        for i in 0..nx {
            let x = (i as f64 + 0.5) * dx;
            boundary.push(BoundaryFace {
                cell: idx(i, 0),
                side: Side::Bottom,
                measure: dx,
                h: hs[2],
                x: [x, 0.0],
                x3: 0.0,
            });
            boundary.push(BoundaryFace {
                cell: idx(i, ny - 1),
                side: Side::Top,
                measure: dx,
                h: hs[3],
                x: [x, height],
                x3: height,
            });
        }
        Ok(Self {
            dimension: 2,
            cells: [nx, ny],
            extent: [width, height],
            spacing: [dx, dy],
            volume: dx * dy,
            faces,
            boundary,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cell counts; `[n, 1]` in 1D.
    pub fn cells(&self) -> [usize; 2] {
        self.cells
    }

    pub fn extent(&self) -> [f64; 2] {
        self.extent
    }

    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    /// Volume of every cell.
    pub fn cell_volume(&self) -> f64 {
        self.volume
    }

    pub fn measure(&self) -> f64 {
        self.volume * self.len() as f64
    }

    pub fn boundary_measure(&self) -> f64 {
        self.boundary.iter().map(|f| f.measure).sum()
    }

    pub fn faces(&self) -> &[InteriorFace] {
        &self.faces
    }

    pub fn boundary(&self) -> &[BoundaryFace] {
        &self.boundary
    }

    /// Half-bandwidth of the stiffness matrix in natural ordering.
    pub fn bandwidth(&self) -> usize {
        if self.dimension == 1 {
            1
        } else {
            self.cells[0]
        }
    }

    /// Cell center; the second entry is 0 in 1D.
    pub fn center(&self, cell: usize) -> [f64; 2] {
        if self.dimension == 1 {
            [(cell as f64 + 0.5) * self.spacing[0], 0.0]
        } else {
            let (i, j) = (cell % self.cells[0], cell / self.cells[0]);
            [
                (i as f64 + 0.5) * self.spacing[0],
                (j as f64 + 0.5) * self.spacing[1],
            ]
        }
    }

    /// Gravity coordinate of a cell center.
    pub fn x3(&self, cell: usize) -> f64 {
        let c = self.center(cell);
        if self.dimension == 1 {
            c[0]
        } else {
            c[1]
        }
    }

    pub fn x3_field(&self) -> Field {
        Field((0..self.len()).map(|i| self.x3(i)).collect())
    }

    pub fn constant(&self, value: f64) -> Field {
        Field(vec![value; self.len()])
    }

    pub fn check_len(&self, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::SizeMismatch {
                expected: self.len(),
                found: values.len(),
            });
        }
        Ok(())
    }
}

/// Piecewise-linear time series; a single point means a constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TimeTable {
    points: Vec<[f64; 2]>,
}

impl TimeTable {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        let t = Self { points };
        t.check()?;
        Ok(t)
    }

    pub fn constant(value: f64) -> Self {
        Self {
            points: vec![[0.0, value]],
        }
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidInput("empty time table".into()));
        }
        if self.points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("time table has non-finite entries".into()));
        }
        if self.points.windows(2).any(|w| !(w[1][0] > w[0][0])) {
            return Err(Error::InvalidInput(
                "time table times must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn is_constant(&self) -> bool {
        self.points.len() == 1
    }

    /// Whether the table spans `[0, t_final]`; constants always do.
    pub fn covers(&self, t_final: f64) -> bool {
        self.is_constant()
            || (self.points[0][0] <= 0.0
                && self.points[self.points.len() - 1][0] >= t_final * (1.0 - 1e-12))
    }

    /// Linear interpolation, clamped to the end values outside the table.
    pub fn eval(&self, t: f64) -> f64 {
        let p = &self.points;
        if t <= p[0][0] {
            return p[0][1];
        }
        let last = p[p.len() - 1];
        if t >= last[0] {
            return last[1];
        }
        let j = p.partition_point(|q| q[0] <= t);
        let (a, b) = (p[j - 1], p[j]);
        a[1] + (b[1] - a[1]) * (t - a[0]) / (b[0] - a[0])
    }

    /// The table with every value shifted by `delta`.
    pub fn shifted(&self, delta: f64) -> Self {
        Self {
            points: self.points.iter().map(|p| [p[0], p[1] + delta]).collect(),
        }
    }

    pub fn min_value(&self) -> f64 {
        self.points.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.points.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// One value per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Field(Vec<f64>);

impl Field {
    /// Checks the length against the grid and that every entry is finite.
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        grid.check_len(&values)?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "field entry {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Field {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for Field {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Midpoint-rule integral over the domain, summed in a fixed tree order.
pub fn integrate_field(grid: &Grid, field: &[f64]) -> Result<f64> {
    grid.check_len(field)?;
    Ok(integrate_unchecked(grid, field))
}

pub(crate) fn integrate_unchecked(grid: &Grid, field: &[f64]) -> f64 {
    tree_sum(field) * grid.cell_volume()
}

/// Face conductivity: arithmetic mean of the two cells.
pub fn face_conductivity(kappa: &[f64], face: &InteriorFace) -> f64 {
    0.5 * (kappa[face.a] + kappa[face.b])
}

/// Applies the finite-volume diffusion operator with cell conductivities `kappa`.
pub fn stiffness_apply(grid: &Grid, kappa: &[f64], theta: &[f64]) -> Result<Field> {
    grid.check_len(kappa)?;
    grid.check_len(theta)?;
    if let Some(i) = kappa.iter().position(|&k| !(k > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "conductivity must be positive, got {} in cell {i}",
            kappa[i]
        )));
    }
    let mut out = vec![0.0; grid.len()];
    for f in grid.faces() {
        let flux = face_conductivity(kappa, f) * f.transmissibility * (theta[f.a] - theta[f.b]);
        out[f.a] += flux;
        out[f.b] -= flux;
    }
    Ok(Field(out))
}

/// Per-cell boundary heat exchange `h σ (θ - θ_Γ)` and its total.
///
/// `theta_gamma` holds one value per boundary face, in `grid.boundary()` order.
pub fn boundary_exchange(grid: &Grid, theta: &[f64], theta_gamma: &[f64]) -> Result<(Field, f64)> {
    grid.check_len(theta)?;
    if theta_gamma.len() != grid.boundary().len() {
        return Err(Error::InvalidInput(format!(
            "boundary data has {} values for {} boundary faces",
            theta_gamma.len(),
            grid.boundary().len()
        )));
    }
    let mut out = vec![0.0; grid.len()];
    let mut terms = Vec::with_capacity(theta_gamma.len());
    for (f, &tg) in grid.boundary().iter().zip(theta_gamma) {
        let q = f.h * f.measure * (theta[f.cell] - tg);
        out[f.cell] += q;
        terms.push(q);
    }
    Ok((Field(out), tree_sum(&terms)))
}

/// Boundary sample of the elastic compliance `k⁻¹n·n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplianceSample {
    pub value: f64,
    pub x3: f64,
    pub measure: f64,
}

/// `1/K_Γ = ∮ a dσ`, `ζ_Γ = K_Γ ∮ a x3 dσ`. Returns `(K_Γ, ζ_Γ)`.
pub fn kgamma_from_elasticity(samples: &[ComplianceSample]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no boundary compliance samples".into()));
    }
    for s in samples {
        if !(s.value > 0.0) || !s.value.is_finite() {
            return Err(Error::InvalidInput(format!(
                "boundary compliance must be positive, got {}",
                s.value
            )));
        }
        if !(s.measure > 0.0) || !s.x3.is_finite() {
            return Err(Error::InvalidInput(
                "boundary samples need positive measure and finite position".into(),
            ));
        }
    }
    let inv: Vec<f64> = samples.iter().map(|s| s.value * s.measure).collect();
    let moment: Vec<f64> = samples.iter().map(|s| s.value * s.measure * s.x3).collect();
    let k = 1.0 / tree_sum(&inv);
    Ok((k, k * tree_sum(&moment)))
}

/// Pressure deviation `K_Γ (U_Ω + P0) + ρ0 g ζ_Γ`.
pub fn pressure_recovery(k_gamma: f64, u_omega: f64, p0: f64, constants: &ModelConstants) -> f64 {
    k_gamma * (u_omega + p0) + constants.rho0 * constants.g * constants.zeta_gamma
}

/// Inverse of [`pressure_recovery`] for `U_Ω`; needs `K_Γ > 0`.
pub fn volume_from_pressure(
    k_gamma: f64,
    pressure: f64,
    p0: f64,
    constants: &ModelConstants,
) -> Result<f64> {
    if !(k_gamma > 0.0) {
        return Err(Error::InvalidInput(
            "volume cannot be recovered from pressure when K_Γ = 0".into(),
        ));
    }
    Ok((pressure - constants.rho0 * constants.g * constants.zeta_gamma) / k_gamma - p0)
}
