//! Gridded values and zero crossings of a barrier on a coordinate plane.

use serde::{Deserialize, Serialize};

use crate::poly::Polynomial;

use super::VerifyError;

/// Two state coordinates spanned by the grid; every other coordinate is
/// held at its value in `base`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub axes: (usize, usize),
    pub base: Vec<f64>,
}

impl Plane {
    /// The `(x_i, x_j)` plane through the origin of an `n`-state system.
    pub fn through_origin(n: usize, i: usize, j: usize) -> Result<Self, VerifyError> {
        if i >= n || j >= n || i == j {
            return Err(VerifyError::UnknownPlane(format!("x{} x{} in {n} states", i + 1, j + 1)));
        }
        Ok(Plane {
            axes: (i, j),
            base: vec![0.0; n],
        })
    }

    fn point(&self, a: f64, b: f64) -> Vec<f64> {
        let mut x = self.base.clone();
        x[self.axes.0] = a;
        x[self.axes.1] = b;
        x
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSet {
    pub plane: Plane,
    pub bounds: [(f64, f64); 2],
    pub resolution: usize,
    /// `(a, b, h)` row-major over the grid.
    pub grid: Vec<[f64; 3]>,
    /// Points where `h` changes sign along a grid edge, linearly
    /// interpolated.
    pub boundary: Vec<[f64; 2]>,
}

impl LevelSet {
    pub fn positive_fraction(&self) -> f64 {
        if self.grid.is_empty() {
            return 0.0;
        }
        self.grid.iter().filter(|r| r[2] >= 0.0).count() as f64 / self.grid.len() as f64
    }

    /// Grid as CSV with header `x1,x2,h`.
    pub fn grid_csv(&self) -> String {
        let mut out = String::from("x1,x2,h\n");
        for [a, b, h] in &self.grid {
            out.push_str(&format!("{a},{b},{h}\n"));
        }
        out
    }

    /// Zero crossings as CSV with header `x1,x2`.
    pub fn boundary_csv(&self) -> String {
        let mut out = String::from("x1,x2\n");
        for [a, b] in &self.boundary {
            out.push_str(&format!("{a},{b}\n"));
        }
        out
    }
}

/// Evaluates `h` on a `resolution x resolution` grid over `bounds` in
/// `plane`.
pub fn levelset_sample(
    h: &Polynomial,
    plane: &Plane,
    bounds: [(f64, f64); 2],
    resolution: usize,
) -> Result<LevelSet, VerifyError> {
    if resolution < 2 || bounds.iter().any(|&(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
        return Err(VerifyError::DegenerateBounds(format!("{bounds:?} at resolution {resolution}")));
    }
    let (i, j) = plane.axes;
    if i >= plane.base.len() || j >= plane.base.len() || i == j {
        return Err(VerifyError::UnknownPlane(format!("axes {:?} in {} states", plane.axes, plane.base.len())));
    }
    let coord = |k: usize, (a, b): (f64, f64)| a + (b - a) * k as f64 / (resolution - 1) as f64;
    let mut grid = Vec::with_capacity(resolution * resolution);
    for r in 0..resolution {
        let b = coord(r, bounds[1]);
        for c in 0..resolution {
            let a = coord(c, bounds[0]);
            grid.push([a, b, h.eval(&plane.point(a, b))]);
        }
    }
    let mut boundary = Vec::new();
    let mut crossing = |p: &[f64; 3], q: &[f64; 3]| {
        if (p[2] >= 0.0) != (q[2] >= 0.0) {
            let t = p[2] / (p[2] - q[2]);
            boundary.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    };
    for r in 0..resolution {
        for c in 0..resolution {
            let p = &grid[r * resolution + c];
            if c + 1 < resolution {
                crossing(p, &grid[r * resolution + c + 1]);
            }
            if r + 1 < resolution {
                crossing(p, &grid[(r + 1) * resolution + c]);
            }
        }
    }
    Ok(LevelSet {
        plane: plane.clone(),
        bounds,
        resolution,
        grid,
        boundary,
    })
}
