//! Finite-difference ground truth for the two periodic benchmark PDEs:
//!
//! - diffusion: `s_t = a(x) s_xx`
//! - advection-diffusion: `s_t + s_x = a(x) s_xx`
//!
//! on `x ∈ [0, 1]` (periodic), `t ∈ [0, 1]`, with `s(x, 0) = v(x)`. Both use
//! Crank–Nicolson in time and second-order central differences in space, in
//! the non-conservative form `a_j (s_{j+1} - 2 s_j + s_{j-1}) / dx²`. The
//! implicit system at each step is periodic-tridiagonal; its factorization is
//! computed once per solve and reused for every time level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverGrid {
    /// Spatial points including both endpoints of `[0, 1]`.
    pub nx: usize,
    /// Time levels on `[0, 1]`, including `t = 0`.
    pub nt: usize,
}

impl Default for SolverGrid {
    fn default() -> Self {
        Self { nx: 201, nt: 201 }
    }
}

impl SolverGrid {
    pub fn new(nx: usize, nt: usize) -> Result<Self> {
        let grid = Self { nx, nt };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 3 || self.nt < 2 {
            return Err(Error::Parameter(format!(
                "solver grid needs nx >= 3 and nt >= 2, got nx={} nt={}",
                self.nx, self.nt
            )));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        1.0 / (self.nx - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        1.0 / (self.nt - 1) as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        j as f64 * self.dx()
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }
}

/// `s` on the space-time grid, stored as `nt` rows of `nx` values.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionField {
    grid: SolverGrid,
    values: Vec<f64>,
}

impl SolutionField {
    pub fn from_values(grid: SolverGrid, values: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.nx * grid.nt {
            return Err(Error::Dimension(format!(
                "field has {} values, grid needs {}x{}",
                values.len(),
                grid.nt,
                grid.nx
            )));
        }
        Ok(Self { grid, values })
    }

    /// Field sampled from a closure `f(x, t)` at every node.
    pub fn from_fn(grid: SolverGrid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        grid.validate()?;
        let mut values = Vec::with_capacity(grid.nx * grid.nt);
        for k in 0..grid.nt {
            for j in 0..grid.nx {
                values.push(f(grid.x(j), grid.t(k)));
            }
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> SolverGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Spatial profile at time level `k`.
    pub fn level(&self, k: usize) -> &[f64] {
        &self.values[k * self.grid.nx..(k + 1) * self.grid.nx]
    }

    #[inline]
    pub fn at(&self, j: usize, k: usize) -> f64 {
        self.values[k * self.grid.nx + j]
    }

    /// Bilinear interpolation at `(x, t) ∈ [0, 1]²`; exact at nodes.
    pub fn sample_query(&self, x: f64, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&t) {
            return Err(Error::Parameter(format!("query ({x}, {t}) outside [0,1]x[0,1]")));
        }
        let (j, fx) = cell(x, self.grid.nx);
        let (k, ft) = cell(t, self.grid.nt);
        let s00 = self.at(j, k);
        let s10 = self.at(j + 1, k);
        let s01 = self.at(j, k + 1);
        let s11 = self.at(j + 1, k + 1);
        let lower = s00 + fx * (s10 - s00);
        let upper = s01 + fx * (s11 - s01);
        Ok(lower + ft * (upper - lower))
    }

    pub fn max_abs_difference(&self, other: &SolutionField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Cell index and fractional offset of `coord` on an `n`-point unit grid.
fn cell(coord: f64, n: usize) -> (usize, f64) {
    let scaled = coord * (n - 1) as f64;
    let idx = (scaled.floor() as usize).min(n - 2);
    (idx, scaled - idx as f64)
}

/// Factored periodic-tridiagonal matrix.
///
/// Row `i` has `sub[i]` at column `i-1`, `diag[i]` at `i` and `sup[i]` at
/// `i+1` (indices taken cyclically), so `sub[0]` is the top-right corner
/// and `sup[n-1]` the bottom-left one. Solves use the Sherman–Morrison
/// reduction to two Thomas sweeps with a shared LU factorization.
#[derive(Debug, Clone)]
pub struct CyclicTridiagonal {
    n: usize,
    lower: Vec<f64>,
    // Thomas factors of the modified matrix
    modified_sup: Vec<f64>,
    pivot_inv: Vec<f64>,
    // Sherman–Morrison correction data
    z: Vec<f64>,
    v_last: f64,
    denom: f64,
    /// With two unknowns the corners coincide with the off-diagonals; the
    /// system is then solved through its explicit inverse.
    inverse_2x2: Option<[f64; 4]>,
}

impl CyclicTridiagonal {
    /// `sub`, `diag`, `sup` all have length `n`; the corner entries are
    /// `sub[0]` (row 0, column n-1) and `sup[n-1]` (row n-1, column 0).
    pub fn new(sub: &[f64], diag: &[f64], sup: &[f64]) -> Result<Self> {
        let n = diag.len();
        if sub.len() != n || sup.len() != n {
            return Err(Error::Dimension(format!(
                "cyclic system bands have lengths {}/{}/{}",
                sub.len(),
                n,
                sup.len()
            )));
        }
        if n < 2 {
            return Err(Error::Dimension(format!("cyclic system needs n >= 2, got {n}")));
        }
        if n == 2 {
            let (a, b) = (diag[0], sub[0] + sup[0]);
            let (c, d) = (sub[1] + sup[1], diag[1]);
            let det = a * d - b * c;
            if det == 0.0 || !det.is_finite() {
                return Err(Error::Numeric("singular 2x2 cyclic system".into()));
            }
            return Ok(Self {
                n,
                lower: Vec::new(),
                modified_sup: Vec::new(),
                pivot_inv: Vec::new(),
                z: Vec::new(),
                v_last: 0.0,
                denom: 0.0,
                inverse_2x2: Some([d / det, -b / det, -c / det, a / det]),
            });
        }
        let corner_hi = sub[0];
        let corner_lo = sup[n - 1];
        let gamma = -diag[0];
        if gamma == 0.0 {
            return Err(Error::Numeric("zero pivot: diag[0] == 0".into()));
        }

        let mut modified = diag.to_vec();
        modified[0] -= gamma;
        modified[n - 1] -= corner_lo * corner_hi / gamma;

        let mut lower = vec![0.0; n];
        lower[1..].copy_from_slice(&sub[1..]);
        let mut this = Self {
            n,
            lower,
            modified_sup: sup[..n - 1].to_vec(),
            pivot_inv: vec![0.0; n],
            z: Vec::new(),
            v_last: corner_hi / gamma,
            denom: 0.0,
            inverse_2x2: None,
        };
        this.factor(&modified)?;

        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = corner_lo;
        this.thomas(&mut u);
        let denom = 1.0 + u[0] + this.v_last * u[n - 1];
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::Numeric("singular cyclic system (Sherman–Morrison denominator)".into()));
        }
        this.z = u;
        this.denom = denom;
        Ok(this)
    }

    fn factor(&mut self, diag: &[f64]) -> Result<()> {
        // LU without pivoting: pivot_i = diag_i - lower_i * sup_{i-1} / pivot_{i-1}
        let mut pivot = diag[0];
        for i in 0..self.n {
            if i > 0 {
                pivot = diag[i] - self.lower[i] * self.modified_sup[i - 1] * self.pivot_inv[i - 1];
            }
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(Error::Numeric(format!("zero pivot at row {i} of tridiagonal solve")));
            }
            self.pivot_inv[i] = 1.0 / pivot;
        }
        Ok(())
    }

    fn thomas(&self, rhs: &mut [f64]) {
        let n = self.n;
        for i in 1..n {
            rhs[i] -= self.lower[i] * self.pivot_inv[i - 1] * rhs[i - 1];
        }
        rhs[n - 1] *= self.pivot_inv[n - 1];
        for i in (0..n - 1).rev() {
            rhs[i] = (rhs[i] - self.modified_sup[i] * rhs[i + 1]) * self.pivot_inv[i];
        }
    }

    /// Solves in place.
    pub fn solve_in_place(&self, rhs: &mut [f64]) -> Result<()> {
        if rhs.len() != self.n {
            return Err(Error::Dimension(format!(
                "rhs has length {}, system has {} rows",
                rhs.len(),
                self.n
            )));
        }
        if let Some(inv) = self.inverse_2x2 {
            let (r0, r1) = (rhs[0], rhs[1]);
            rhs[0] = inv[0] * r0 + inv[1] * r1;
            rhs[1] = inv[2] * r0 + inv[3] * r1;
            return Ok(());
        }
        self.thomas(rhs);
        let n = self.n;
        let factor = (rhs[0] + self.v_last * rhs[n - 1]) / self.denom;
        for (x, z) in rhs.iter_mut().zip(&self.z) {
            *x -= factor * z;
        }
        Ok(())
    }
}

/// One-shot periodic tridiagonal solve.
///
/// `sub` and `sup` are the `n-1` off-diagonal entries (`sub[i]` sits at
/// row `i+1`, column `i`); `corner_lo` is the entry at row `n-1`, column 0
/// and `corner_hi` the entry at row 0, column `n-1`.
pub fn solve_cyclic_tridiagonal(
    sub: &[f64],
    diag: &[f64],
    sup: &[f64],
    corner_lo: f64,
    corner_hi: f64,
    rhs: &[f64],
) -> Result<Vec<f64>> {
    let n = diag.len();
    if sub.len() + 1 != n || sup.len() + 1 != n || rhs.len() != n {
        return Err(Error::Dimension(format!(
            "cyclic system with diag {n}, sub {}, sup {}, rhs {}",
            sub.len(),
            sup.len(),
            rhs.len()
        )));
    }
    let mut full_sub = Vec::with_capacity(n);
    full_sub.push(corner_hi);
    full_sub.extend_from_slice(sub);
    let mut full_sup = sup.to_vec();
    full_sup.push(corner_lo);
    let system = CyclicTridiagonal::new(&full_sub, diag, &full_sup)?;
    let mut x = rhs.to_vec();
    system.solve_in_place(&mut x)?;
    Ok(x)
}

/// Unit advection speed for the advection-diffusion benchmark.
const ADVECTION_SPEED: f64 = 1.0;

fn check_inputs(a: &[f64], v: &[f64], grid: &SolverGrid) -> Result<()> {
    grid.validate()?;
    if a.len() != grid.nx || v.len() != grid.nx {
        return Err(Error::Dimension(format!(
            "coefficient ({}) and initial condition ({}) must have nx={} values",
            a.len(),
            v.len(),
            grid.nx
        )));
    }
    if let Some((j, &bad)) = a.iter().enumerate().find(|(_, &x)| !(x > 0.0 && x.is_finite())) {
        return Err(Error::Parameter(format!("diffusion coefficient must be > 0, a[{j}] = {bad}")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Parameter("initial condition has non-finite values".into()));
    }
    if (v[0] - v[grid.nx - 1]).abs() > 1e-10 {
        return Err(Error::Parameter(format!(
            "initial condition is not periodic: v(0)={} v(1)={}",
            v[0],
            v[grid.nx - 1]
        )));
    }
    Ok(())
}

/// Crank–Nicolson march for `s_t = L s` where `L` is the periodic stencil
/// `(lo_j, mid_j, hi_j)` acting on `(s_{j-1}, s_j, s_{j+1})`.
fn crank_nicolson(stencil: &[(f64, f64, f64)], v: &[f64], grid: SolverGrid) -> Result<SolutionField> {
    // periodic unknowns: nodes 0..nx-1, node nx-1 duplicates node 0
    let n = grid.nx - 1;
    let half_dt = 0.5 * grid.dt();
    let sub: Vec<f64> = stencil.iter().map(|s| -half_dt * s.0).collect();
    let diag: Vec<f64> = stencil.iter().map(|s| 1.0 - half_dt * s.1).collect();
    let sup: Vec<f64> = stencil.iter().map(|s| -half_dt * s.2).collect();
    let system = CyclicTridiagonal::new(&sub, &diag, &sup)?;

    let mut values = Vec::with_capacity(grid.nx * grid.nt);
    values.extend_from_slice(&v[..n]);
    values.push(v[0]);

    let mut current = v[..n].to_vec();
    let mut rhs = vec![0.0; n];
    for _ in 1..grid.nt {
        for j in 0..n {
            let left = current[(j + n - 1) % n];
            let right = current[(j + 1) % n];
            let (lo, mid, hi) = stencil[j];
            rhs[j] = current[j] + half_dt * (lo * left + mid * current[j] + hi * right);
        }
        system.solve_in_place(&mut rhs)?;
        if rhs.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite value in Crank–Nicolson step".into()));
        }
        std::mem::swap(&mut current, &mut rhs);
        values.extend_from_slice(&current);
        values.push(current[0]);
    }
    SolutionField::from_values(grid, values)
}

fn diffusion_stencil(a: &[f64], grid: &SolverGrid, advection: f64) -> Vec<(f64, f64, f64)> {
    let n = grid.nx - 1;
    let inv_dx2 = 1.0 / (grid.dx() * grid.dx());
    let adv = advection / (2.0 * grid.dx());
    a[..n]
        .iter()
        .map(|&aj| (aj * inv_dx2 + adv, -2.0 * aj * inv_dx2, aj * inv_dx2 - adv))
        .collect()
}

/// `s_t = a(x) s_xx`, periodic in `x`, `s(x, 0) = v(x)`.
pub fn solve_diffusion(a: &[f64], v: &[f64], grid: SolverGrid) -> Result<SolutionField> {
    check_inputs(a, v, &grid)?;
    crank_nicolson(&diffusion_stencil(a, &grid, 0.0), v, grid)
}

/// `s_t + s_x = a(x) s_xx`, periodic in `x`, `s(x, 0) = v(x)`.
pub fn solve_advection_diffusion(a: &[f64], v: &[f64], grid: SolverGrid) -> Result<SolutionField> {
    check_inputs(a, v, &grid)?;
    crank_nicolson(&diffusion_stencil(a, &grid, ADVECTION_SPEED), v, grid)
}
