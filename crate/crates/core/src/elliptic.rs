//! Elliptic regularization of the free-boundary flow.
//!
//! Solves the translator problem
//!
//! ```text
//! div(Du / sqrt(eps^2 + |Du|^2)) + kappa / sqrt(eps^2 + |Du|^2) = sigma u   in K^tau
//! u = 0 on the Dirichlet boundary,  <N, Du> = 0 on the barrier
//! ```
//!
//! by damped Newton iteration with continuation in `kappa`. The discretization is
//! cell-centred and conservative: face fluxes use the normal difference across the
//! face and the average of the tangential central differences of the two cells.
//! Barrier cells are the reflected ghost cells of the level-set solver; the
//! Dirichlet boundary is imposed with a ghost-fluid extrapolation through the
//! zero of the `K^tau` level function. Jacobians come from forward-mode dual numbers.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use nalgebra::Matrix2;
use num_dual::{DualNum, DualSVec64};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{FlowError, Result};
use crate::geometry::{AmbientExtension, BarrierDomain, Bounds, InitialRegion, Mode, Vec2};
use crate::grid::{Grid2, GridField};
use crate::levelset::{BarrierGrid, FlowTrajectory};

/// Parameters of one translator solve.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslatorParams {
    pub eps: f64,
    pub sigma: f64,
    /// Corner-bending parameter; `0` solves on `K` itself.
    pub tau: f64,
    /// Target continuation parameter.
    pub kappa: f64,
    pub h: f64,
    /// Weight constants; `None` selects the defaults derived from the barrier curvature.
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub m: Option<f64>,
    /// Monitor constants `Lambda` and `Theta`.
    pub lambda_f: f64,
    pub theta_f: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Upper bound on the number of continuation steps, halvings included.
    pub max_steps: usize,
    pub kappa_step: f64,
    pub kappa_floor: f64,
    /// Collar width of the ambient extension; defaults to a quarter of the barrier length scale.
    pub r_ext: Option<f64>,
    /// Computational window, required for unbounded barriers.
    pub window: Option<Bounds>,
}

impl TranslatorParams {
    pub fn new(eps: f64, sigma: f64) -> Self {
        Self {
            eps,
            sigma,
            tau: 0.1,
            kappa: 1.0,
            h: 1.0 / 160.0,
            a: None,
            b: None,
            m: None,
            lambda_f: 10.0,
            theta_f: 100.0,
            newton_tol: 1e-10,
            max_newton: 40,
            max_steps: 200,
            kappa_step: 0.1,
            kappa_floor: 1.0 / 256.0,
            r_ext: None,
            window: None,
        }
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self
    }

    pub fn with_window(mut self, window: Bounds) -> Self {
        self.window = Some(window);
        self
    }

    /// `(a, b, m)` with defaults `a = 20 C + 1`, `b = 2 C`, `m = max(20 C, 0)`.
    pub fn weights(&self, dom: &BarrierDomain) -> (f64, f64, f64) {
        let c = dom.curvature_bound();
        (
            self.a.unwrap_or(20.0 * c + 1.0),
            self.b.unwrap_or(2.0 * c),
            self.m.unwrap_or((20.0 * c).max(0.0)),
        )
    }

    pub fn extension(&self, dom: &BarrierDomain) -> AmbientExtension {
        AmbientExtension::new(dom.clone(), self.r_ext.unwrap_or(0.25 * dom.length_scale()))
    }

    /// Sup bound `kappa / (sigma eps)`.
    pub fn sup_bound(&self, kappa: f64) -> f64 {
        if self.sigma > 0.0 {
            kappa / (self.sigma * self.eps)
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Unknown,
    Dirichlet,
    Ghost,
    Outside,
}

/// Slot of the neighbour `(di, dj)` in a 3x3 stencil.
const fn slot(di: isize, dj: isize) -> usize {
    ((di + 1) + 3 * (dj + 1)) as usize
}

const C: usize = slot(0, 0);
const E: usize = slot(1, 0);
const W: usize = slot(-1, 0);
const N: usize = slot(0, 1);
const S: usize = slot(0, -1);
const NE: usize = slot(1, 1);
const NW: usize = slot(-1, 1);
const SE: usize = slot(1, -1);
const SW: usize = slot(-1, -1);

const THETA_MIN: f64 = 0.01;

/// Discretization of `K^tau` on a grid: cell classes, level values and ghost stencils.
#[derive(Debug, Clone)]
pub struct TranslatorGrid {
    pub barrier: BarrierGrid,
    pub kinds: Vec<CellKind>,
    /// Level function of `K^tau` at the cell centres.
    pub level: Vec<f64>,
    /// Grid index of each unknown.
    pub cells: Vec<usize>,
    unknown_of: Vec<usize>,
    ghost_of: Vec<usize>,
    ghosts: Vec<Vec<(usize, f64)>>,
}

/// Local copy of a 3x3 stencil: kinds and level values of the nine cells.
#[derive(Debug, Clone, Copy)]
struct Local {
    kind: [CellKind; 9],
    level: [f64; 9],
    cells: [usize; 9],
}

impl Local {
    fn theta(&self, from: usize, to: usize) -> f64 {
        let (a, b) = (self.level[from], self.level[to]);
        (a / (a - b)).clamp(THETA_MIN, 1.0)
    }

    /// Value at `to` as seen from `from`: Dirichlet cells are replaced by the linear
    /// extrapolation through the boundary zero.
    fn eff<T: DualNum<Primitive = f64> + Copy>(&self, v: &[T; 9], from: usize, to: usize) -> T {
        if self.kind[to] == CellKind::Dirichlet && self.kind[from] == CellKind::Unknown {
            v[from] * (1.0 - 1.0 / self.theta(from, to))
        } else {
            v[to]
        }
    }

    /// Normal flux through one face. `nb` is the neighbour across the face, `sign` the
    /// orientation (+1 for E/N), `tc` and `tn` the tangential pairs `(plus, minus)` of the
    /// centre and of the neighbour.
    #[allow(clippy::too_many_arguments)]
    fn flux<T: DualNum<Primitive = f64> + Copy>(
        &self,
        v: &[T; 9],
        nb: usize,
        sign: f64,
        tc: (usize, usize),
        tn: (usize, usize),
        h: f64,
        eps: f64,
    ) -> T {
        let gn = (self.eff(v, C, nb) - v[C]) * (sign / h);
        let t_c = (self.eff(v, C, tc.0) - self.eff(v, C, tc.1)) * (0.5 / h);
        let gt = if self.kind[nb] == CellKind::Dirichlet {
            t_c
        } else {
            let t_n = (self.eff(v, nb, tn.0) - self.eff(v, nb, tn.1)) * (0.5 / h);
            (t_c + t_n) * 0.5
        };
        gn / (gn * gn + gt * gt + eps * eps).sqrt()
    }

    fn residual<T: DualNum<Primitive = f64> + Copy>(
        &self,
        v: &[T; 9],
        h: f64,
        eps: f64,
        sigma: f64,
        kappa: f64,
    ) -> T {
        let fe = self.flux(v, E, 1.0, (N, S), (NE, SE), h, eps);
        let fw = self.flux(v, W, -1.0, (N, S), (NW, SW), h, eps);
        let fn_ = self.flux(v, N, 1.0, (E, W), (NE, NW), h, eps);
        let fs = self.flux(v, S, -1.0, (E, W), (SE, SW), h, eps);
        let div = (fe - fw + fn_ - fs) * (1.0 / h);
        let (ux, uy) = self.gradient(v, h);
        let wc = (ux * ux + uy * uy + eps * eps).sqrt().recip();
        div + wc * kappa - v[C] * sigma
    }

    fn gradient<T: DualNum<Primitive = f64> + Copy>(&self, v: &[T; 9], h: f64) -> (T, T) {
        let ux = (self.eff(v, C, E) - self.eff(v, C, W)) * (0.5 / h);
        let uy = (self.eff(v, C, N) - self.eff(v, C, S)) * (0.5 / h);
        (ux, uy)
    }

    fn hessian(&self, v: &[f64; 9], h: f64) -> Matrix2<f64> {
        let e = |to| self.eff(v, C, to);
        let h2 = h * h;
        let uxx = (e(E) - 2.0 * v[C] + e(W)) / h2;
        let uyy = (e(N) - 2.0 * v[C] + e(S)) / h2;
        let uxy = (e(NE) - e(NW) - e(SE) + e(SW)) / (4.0 * h2);
        Matrix2::new(uxx, uxy, uxy, uyy)
    }
}

impl TranslatorGrid {
    pub fn new(region: &InitialRegion, dom: &BarrierDomain, h: f64, window: Option<Bounds>) -> Result<Self> {
        let bounds = match (dom.bounds(), window) {
            (Some(b), Some(w)) => b.intersect(&w),
            (Some(b), None) => b,
            (None, Some(w)) => w,
            (None, None) => {
                return Err(FlowError::InvalidGrid(
                    "unbounded barrier needs an explicit computational window".into(),
                ))
            }
        };
        let grid = Grid2::covering(&bounds, h, 5, dom.mode)?;
        let barrier = BarrierGrid::on_grid(dom, grid, 3.0 * h);
        let grid = &barrier.grid;
        let n = grid.len();
        let mut level = vec![0.0; n];
        let mut kinds = vec![CellKind::Outside; n];
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let k = grid.idx(i, j);
                let x = grid.center(i, j);
                level[k] = region.level(dom, &x);
                if barrier.dist[k] >= 0.0 {
                    kinds[k] = if level[k] >= 0.0 { CellKind::Unknown } else { CellKind::Dirichlet };
                }
            }
        }
        let mut ghost_of = vec![usize::MAX; n];
        let mut ghosts = Vec::new();
        for (k, st) in barrier.ghost_stencils() {
            kinds[k] = CellKind::Ghost;
            ghost_of[k] = ghosts.len();
            ghosts.push(st.to_vec());
        }
        let mut unknown_of = vec![usize::MAX; n];
        let mut cells = Vec::new();
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let k = grid.idx(i, j);
                if kinds[k] != CellKind::Unknown {
                    continue;
                }
                if i == 0 || j == 0 || i + 1 == grid.nx || j + 1 == grid.ny {
                    return Err(FlowError::InvalidGrid("K^tau reaches the edge of the window".into()));
                }
                unknown_of[k] = cells.len();
                cells.push(k);
            }
        }
        if cells.is_empty() {
            return Err(FlowError::InvalidGrid("K^tau contains no grid cells".into()));
        }
        Ok(Self { barrier, kinds, level, cells, unknown_of, ghost_of, ghosts })
    }

    pub fn grid(&self) -> &Grid2 {
        &self.barrier.grid
    }

    pub fn h(&self) -> f64 {
        self.barrier.grid.h
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn unknown_index(&self, cell: usize) -> Option<usize> {
        let u = self.unknown_of[cell];
        (u != usize::MAX).then_some(u)
    }

    fn local(&self, cell: usize) -> Local {
        let g = self.grid();
        let (i, j) = ((cell % g.nx) as isize, (cell / g.nx) as isize);
        let mut l = Local { kind: [CellKind::Outside; 9], level: [0.0; 9], cells: [0; 9] };
        for dj in -1..=1 {
            for di in -1..=1 {
                let s = slot(di, dj);
                let k = g.idx((i + di) as usize, (j + dj) as usize);
                l.kind[s] = self.kinds[k];
                l.level[s] = self.level[k];
                l.cells[s] = k;
            }
        }
        l
    }

    /// Value of any cell given the unknown vector.
    fn value(&self, u: &[f64], cell: usize) -> f64 {
        match self.kinds[cell] {
            CellKind::Unknown => u[self.unknown_of[cell]],
            CellKind::Ghost => self.ghosts[self.ghost_of[cell]]
                .iter()
                .map(|(k, w)| match self.kinds[*k] {
                    CellKind::Unknown => u[self.unknown_of[*k]] * w,
                    _ => 0.0,
                })
                .sum(),
            _ => 0.0,
        }
    }

    fn values(&self, u: &[f64], l: &Local) -> [f64; 9] {
        let mut v = [0.0; 9];
        for s in 0..9 {
            v[s] = self.value(u, l.cells[s]);
        }
        v
    }

    /// Residual vector.
    pub fn residual(&self, u: &[f64], eps: f64, sigma: f64, kappa: f64) -> Vec<f64> {
        let h = self.h();
        self.cells
            .par_iter()
            .map(|&cell| {
                let l = self.local(cell);
                let v = self.values(u, &l);
                l.residual(&v, h, eps, sigma, kappa)
            })
            .collect()
    }

    /// Residual together with the Jacobian triplets.
    pub fn linearize(&self, u: &[f64], eps: f64, sigma: f64, kappa: f64) -> (Vec<f64>, Vec<Triplet<usize, usize, f64>>) {
        let h = self.h();
        let rows: Vec<(f64, Vec<Triplet<usize, usize, f64>>)> = self
            .cells
            .par_iter()
            .enumerate()
            .map(|(row, &cell)| {
                let l = self.local(cell);
                let vals = self.values(u, &l);
                let mut v = [DualSVec64::<9>::from_re(0.0); 9];
                for s in 0..9 {
                    v[s] = DualSVec64::from_re(vals[s]);
                    if matches!(l.kind[s], CellKind::Unknown | CellKind::Ghost) {
                        v[s] = v[s].derivative(s);
                    }
                }
                let r = l.residual(&v, h, eps, sigma, kappa);
                let mut trips = Vec::with_capacity(12);
                if let Some(grad) = r.eps.0 {
                    for s in 0..9 {
                        let g = grad[s];
                        if g == 0.0 {
                            continue;
                        }
                        let k = l.cells[s];
                        match l.kind[s] {
                            CellKind::Unknown => trips.push(Triplet::new(row, self.unknown_of[k], g)),
                            CellKind::Ghost => {
                                for (c, w) in &self.ghosts[self.ghost_of[k]] {
                                    if self.kinds[*c] == CellKind::Unknown {
                                        trips.push(Triplet::new(row, self.unknown_of[*c], g * w));
                                    }
                                }
                            }
                            _ => {}
                        }
                    }
                }
                (r.re, trips)
            })
            .collect();
        let mut res = Vec::with_capacity(rows.len());
        let mut trips = Vec::with_capacity(rows.len() * 10);
        for (r, t) in rows {
            res.push(r);
            trips.extend(t);
        }
        (res, trips)
    }

    /// Full-grid field of an unknown vector, with ghost cells filled by reflection.
    pub fn to_field(&self, u: &[f64]) -> GridField {
        let mut f = GridField::zeros(self.grid());
        for (k, v) in f.data.iter_mut().enumerate() {
            *v = self.value(u, k);
        }
        f
    }

    /// Whether an unknown cell has a Dirichlet cell among its eight neighbours.
    pub fn dirichlet_adjacent(&self, cell: usize) -> bool {
        self.local(cell).kind.contains(&CellKind::Dirichlet)
    }

    /// Whether an unknown cell has a ghost among its four face neighbours.
    pub fn neumann_adjacent(&self, cell: usize) -> bool {
        let l = self.local(cell);
        [E, W, N, S].iter().any(|s| l.kind[*s] == CellKind::Ghost)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn l2_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn sparse_solve(n: usize, trips: &[Triplet<usize, usize, f64>], rhs: &[f64]) -> Result<Vec<f64>> {
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, trips)
        .map_err(|e| FlowError::LinearSolve(format!("{e:?}")))?;
    let lu = a.sp_lu().map_err(|e| FlowError::LinearSolve(format!("{e:?}")))?;
    let b = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
    let x = lu.solve(b);
    let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(FlowError::LinearSolve("singular Jacobian".into()));
    }
    Ok(out)
}

/// Damped Newton at fixed `kappa`. Returns the final residual and iteration count, or
/// `None` when the line search or the iteration budget fails.
fn newton(tg: &TranslatorGrid, u: &mut Vec<f64>, p: &TranslatorParams, kappa: f64) -> Result<Option<(f64, usize)>> {
    let n = tg.len();
    for it in 0..=p.max_newton {
        let (r, trips) = tg.linearize(u, p.eps, p.sigma, kappa);
        let norm = inf_norm(&r);
        if norm <= p.newton_tol {
            return Ok(Some((norm, it)));
        }
        if it == p.max_newton || !norm.is_finite() {
            break;
        }
        let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        let du = match sparse_solve(n, &trips, &rhs) {
            Ok(du) => du,
            Err(_) => return Ok(None),
        };
        let f0 = l2_sq(&r);
        let mut alpha = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(&du).map(|(a, b)| a + alpha * b).collect();
            let rt = tg.residual(&trial, p.eps, p.sigma, kappa);
            let ft = l2_sq(&rt);
            if ft.is_finite() && (ft <= (1.0 - 1e-4 * alpha) * f0 || inf_norm(&rt) <= p.newton_tol) {
                *u = trial;
                break;
            }
            alpha *= 0.5;
            if alpha < 1.0 / 1024.0 {
                return Ok(None);
            }
        }
    }
    Ok(None)
}

/// One accepted continuation step.
#[derive(Debug, Clone, Serialize)]
pub struct ContinuationStep {
    pub kappa: f64,
    pub residual: f64,
    pub newton_iterations: usize,
    pub min_u: f64,
    pub max_u: f64,
    pub sup_bound: f64,
    pub bound_ok: bool,
}

/// Solution `u` of the translator problem on `K^tau` with its discretization.
#[derive(Debug, Clone)]
pub struct TranslatorSolution {
    pub params: TranslatorParams,
    pub domain: BarrierDomain,
    /// The (possibly bent) region the problem was solved on.
    pub region: InitialRegion,
    pub discretization: TranslatorGrid,
    /// Values at the unknowns.
    pub values: Vec<f64>,
    /// Full-grid field: zero at Dirichlet and outside cells, reflected at ghost cells.
    pub u: GridField,
    /// Reached continuation parameter.
    pub kappa: f64,
    pub residual: f64,
    pub trace: Vec<ContinuationStep>,
    /// Max difference between the `tau_0` and `tau_0 / 2` solves, when both were run.
    pub tau_error: Option<f64>,
}

/// Pointwise graph quantities at an unknown cell.
#[derive(Debug, Clone, Copy)]
pub struct GraphPoint {
    pub cell: usize,
    pub x: Vec2,
    pub u: f64,
    pub du: Vec2,
    pub d2u: Matrix2<f64>,
    /// `V = 1 / sqrt(eps^2 + |Du|^2)`.
    pub v: f64,
    pub z: f64,
    /// Mean curvature from the equation, `kappa V - sigma u`.
    pub h: f64,
    /// Mean curvature from the non-conservative second-derivative formula.
    pub h_nc: f64,
    /// Second fundamental form `A_ij = -z_ij / W` in graph coordinates.
    pub a: Matrix2<f64>,
    /// Inverse metric of the graph.
    pub g_inv: Matrix2<f64>,
    pub dz: Vec2,
}

/// `|M|^2 = g^ik g^jl M_ij M_kl`.
fn norm_sq(g_inv: &Matrix2<f64>, m: &Matrix2<f64>) -> f64 {
    (g_inv * m * g_inv * m).trace()
}

impl TranslatorSolution {
    pub fn h(&self) -> f64 {
        self.discretization.h()
    }

    pub fn grid(&self) -> &Grid2 {
        self.discretization.grid()
    }

    pub fn max_u(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_u(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn graph_point(&self, cell: usize) -> Option<GraphPoint> {
        let tg = &self.discretization;
        tg.unknown_index(cell)?;
        let p = &self.params;
        let h = tg.h();
        let l = tg.local(cell);
        let v = tg.values(&self.values, &l);
        let (ux, uy) = l.gradient(&v, h);
        let d2u = l.hessian(&v, h);
        let du = Vec2::new(ux, uy);
        let s2 = p.eps * p.eps + du.norm_squared();
        let vv = 1.0 / s2.sqrt();
        let lap = d2u.trace();
        let h_nc = -(lap - (du.transpose() * d2u * du)[(0, 0)] / s2) * vv;
        let dz = du / p.eps;
        let wz = (1.0 + dz.norm_squared()).sqrt();
        let g_inv = Matrix2::identity() - dz * dz.transpose() / (wz * wz);
        let a = -d2u / (p.eps * wz);
        let g = self.grid();
        Some(GraphPoint {
            cell,
            x: g.center(cell % g.nx, cell / g.nx),
            u: v[C],
            du,
            d2u,
            v: vv,
            z: v[C] / p.eps,
            h: self.kappa * vv - p.sigma * v[C],
            h_nc,
            a,
            g_inv,
            dz,
        })
    }

    pub fn graph_points(&self) -> Vec<GraphPoint> {
        self.discretization.cells.iter().filter_map(|&c| self.graph_point(c)).collect()
    }

    /// Graph quantities at an arbitrary point from a least-squares polynomial fit of `u`
    /// over the unknowns within `radius` (quadratic or cubic). With `neumann` the fit
    /// also imposes `<N, Du> = 0` at `y`, for barrier points.
    pub fn local_fit(&self, y: &Vec2, radius: f64, cubic: bool, neumann: bool) -> Option<GraphPoint> {
        let g = self.grid();
        let tg = &self.discretization;
        let (fi, fj) = g.fractional_index(y);
        let r = (radius / g.h).ceil() as isize + 1;
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        for j in (fj.floor() as isize - r)..=(fj.floor() as isize + r) {
            for i in (fi.floor() as isize - r)..=(fi.floor() as isize + r) {
                if i < 0 || j < 0 || i >= g.nx as isize || j >= g.ny as isize {
                    continue;
                }
                let k = g.idx(i as usize, j as usize);
                let Some(ui) = tg.unknown_index(k) else { continue };
                let d = (g.center(i as usize, j as usize) - y) / g.h;
                if d.norm() * g.h > radius {
                    continue;
                }
                rows.extend_from_slice(&[1.0, d.x, d.y, 0.5 * d.x * d.x, d.x * d.y, 0.5 * d.y * d.y]);
                if cubic {
                    rows.extend_from_slice(&[d.x * d.x * d.x, d.x * d.x * d.y, d.x * d.y * d.y, d.y * d.y * d.y]);
                }
                rhs.push(self.values[ui]);
            }
        }
        let ncol = if cubic { 10 } else { 6 };
        if neumann {
            // Weighted constraint row <N, Du(y)> = 0.
            let n = self.domain.outward_normal(&self.domain.project(y));
            let mut row = vec![0.0; ncol];
            row[1] = 10.0 * n.x;
            row[2] = 10.0 * n.y;
            rows.extend_from_slice(&row);
            rhs.push(0.0);
        }
        let m = rhs.len();
        if m < 2 * ncol {
            return None;
        }
        let a = nalgebra::DMatrix::from_row_slice(m, ncol, &rows);
        let b = nalgebra::DVector::from_vec(rhs);
        let c = a.svd(true, true).solve(&b, 1e-12).ok()?;
        let h = g.h;
        let p = &self.params;
        let u = c[0];
        let du = Vec2::new(c[1], c[2]) / h;
        let d2u = Matrix2::new(c[3], c[4], c[4], c[5]) / (h * h);
        let s2 = p.eps * p.eps + du.norm_squared();
        let vv = 1.0 / s2.sqrt();
        let h_nc = -(d2u.trace() - (du.transpose() * d2u * du)[(0, 0)] / s2) * vv;
        let dz = du / p.eps;
        let wz = (1.0 + dz.norm_squared()).sqrt();
        Some(GraphPoint {
            cell: usize::MAX,
            x: *y,
            u,
            du,
            d2u,
            v: vv,
            z: u / p.eps,
            h: self.kappa * vv - p.sigma * u,
            h_nc,
            a: -d2u / (p.eps * wz),
            g_inv: Matrix2::identity() - dz * dz.transpose() / (wz * wz),
            dz,
        })
    }

    /// Field of `V`, zero away from the unknowns.
    pub fn v_field(&self) -> GridField {
        let mut f = GridField::zeros(self.grid());
        for gp in self.graph_points() {
            f.data[gp.cell] = gp.v;
        }
        f
    }

    /// Largest violation of `H + sigma u = kappa V` with `H` from second differences,
    /// over cells away from the Dirichlet boundary.
    pub fn identity_residual(&self) -> f64 {
        let tg = &self.discretization;
        self.graph_points()
            .iter()
            .filter(|gp| !tg.dirichlet_adjacent(gp.cell))
            .map(|gp| (gp.h_nc - gp.h).abs())
            .fold(0.0, f64::max)
    }

    /// Weight `w = exp(eps a z - b d)`.
    pub fn weight(&self, gp: &GraphPoint) -> f64 {
        let (a, b, _) = self.params.weights(&self.domain);
        (a * gp.u - b * self.discretization.barrier.dist[gp.cell]).exp()
    }

    /// Copy of the solution with uniform noise of the given amplitude added at the
    /// unknowns away from the Dirichlet boundary.
    pub fn with_noise(&self, amplitude: f64, seed: u64) -> TranslatorSolution {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = self.clone();
        for (i, &cell) in self.discretization.cells.iter().enumerate() {
            if !self.discretization.dirichlet_adjacent(cell) {
                out.values[i] += amplitude * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
        out.u = out.discretization.to_field(&out.values);
        out
    }

    /// `u` sampled at a point (bilinear on the full field).
    pub fn sample(&self, x: &Vec2) -> f64 {
        self.u.sample(x)
    }
}

/// Solves the translator problem by continuation in `kappa` from the trivial solution
/// `u = 0` at `kappa = 0`, bending the junctions of `K` by `p.tau` first.
pub fn solve_continuation(k: &InitialRegion, dom: &BarrierDomain, p: &TranslatorParams) -> Result<TranslatorSolution> {
    if dom.mode != Mode::Planar {
        return Err(FlowError::Mode("the translator solver works in planar mode only".into()));
    }
    assert!(p.eps > 0.0 && p.sigma >= 0.0, "translator needs eps > 0 and sigma >= 0");
    assert!((0.0..=1.0).contains(&p.tau) && (0.0..=1.0).contains(&p.kappa));
    let region = if p.tau > 0.0 && k.bend.is_none() {
        let window = match (dom.bounds(), p.window) {
            (Some(b), Some(w)) => b.intersect(&w),
            (Some(b), None) => b,
            (None, Some(w)) => w,
            (None, None) => {
                return Err(FlowError::InvalidGrid(
                    "unbounded barrier needs an explicit computational window".into(),
                ))
            }
        };
        k.bend_corners(dom, p.tau, &window)?
    } else {
        k.clone()
    };
    if let Some(tau) = region.bend {
        if p.h > tau / 8.0 {
            return Err(FlowError::Resolution(format!(
                "h = {:.4e} does not resolve the bending collar tau = {tau} (need h <= tau/8)",
                p.h
            )));
        }
    }
    let tg = TranslatorGrid::new(&region, dom, p.h, p.window)?;
    let mut u = vec![0.0; tg.len()];
    let mut trace = vec![ContinuationStep {
        kappa: 0.0,
        residual: inf_norm(&tg.residual(&u, p.eps, p.sigma, 0.0)),
        newton_iterations: 0,
        min_u: 0.0,
        max_u: 0.0,
        sup_bound: 0.0,
        bound_ok: true,
    }];
    let mut kappa = 0.0;
    let mut step = p.kappa_step;
    let mut steps = 0;
    let mut residual = trace[0].residual;
    while kappa < p.kappa - 1e-14 {
        steps += 1;
        if steps > p.max_steps {
            return Err(FlowError::ContinuationStall { kappa, residual });
        }
        let next = if kappa + step >= p.kappa - 1e-9 { p.kappa } else { kappa + step };
        let mut trial = u.clone();
        match newton(&tg, &mut trial, p, next)? {
            Some((res, its)) => {
                u = trial;
                kappa = next;
                residual = res;
                let (lo, hi) = u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
                let bound = p.sup_bound(kappa);
                let slack = 1e-8 * bound.max(1.0);
                trace.push(ContinuationStep {
                    kappa,
                    residual: res,
                    newton_iterations: its,
                    min_u: lo,
                    max_u: hi,
                    sup_bound: bound,
                    bound_ok: lo >= -slack && hi <= bound + slack,
                });
                step = (step * 2.0).min(p.kappa_step);
            }
            None => {
                step *= 0.5;
                if step < p.kappa_floor {
                    let r = inf_norm(&tg.residual(&trial, p.eps, p.sigma, next));
                    return Err(FlowError::ContinuationStall { kappa: next, residual: r });
                }
            }
        }
    }
    let field = tg.to_field(&u);
    Ok(TranslatorSolution {
        params: p.clone(),
        domain: dom.clone(),
        region,
        discretization: tg,
        values: u,
        u: field,
        kappa,
        residual,
        trace,
        tau_error: None,
    })
}

/// Solves at `tau_0 = p.tau` and at `tau_0 / 2` and returns the second solve with the
/// max difference of the pair. Regions without barrier contact are solved once.
pub fn solve_translator(k: &InitialRegion, dom: &BarrierDomain, p: &TranslatorParams) -> Result<TranslatorSolution> {
    let first = solve_continuation(k, dom, p)?;
    if first.region.bend.is_none() {
        let mut s = first;
        s.tau_error = Some(0.0);
        return Ok(s);
    }
    let half = TranslatorParams { tau: p.tau / 2.0, ..p.clone() };
    let mut second = solve_continuation(k, dom, &half)?;
    second.tau_error = Some(max_difference(&first, &second));
    Ok(second)
}

/// Max of `|u_a - u_b|` over the cells where both are unknowns.
pub fn max_difference(a: &TranslatorSolution, b: &TranslatorSolution) -> f64 {
    let mut m: f64 = 0.0;
    for (i, &cell) in b.discretization.cells.iter().enumerate() {
        let g = b.grid();
        let x = g.center(cell % g.nx, cell / g.nx);
        if let Some((ia, ja)) = a.grid().cell_of(&x) {
            let ka = a.grid().idx(ia, ja);
            if let Some(ua) = a.discretization.unknown_index(ka) {
                if (a.grid().center(ia, ja) - x).norm() < 1e-9 {
                    m = m.max((a.values[ua] - b.values[i]).abs());
                }
            }
        }
    }
    m
}

/// Largest amount by which `lower` exceeds `upper` at common points:
/// `max(u_lower - u_upper)`, sampled at the unknowns of `upper`.
pub fn ordering_gap(upper: &TranslatorSolution, lower: &TranslatorSolution) -> f64 {
    let g = lower.grid();
    lower
        .discretization
        .cells
        .iter()
        .enumerate()
        .map(|(i, &cell)| {
            let x = g.center(cell % g.nx, cell / g.nx);
            lower.values[i] - upper.sample(&x)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Result of the `V` lower-bound checks.
#[derive(Debug, Clone, Serialize)]
pub struct VBoundReport {
    pub a: f64,
    pub b: f64,
    pub m: f64,
    pub max_d: f64,
    pub min_boundary_v: f64,
    /// `min V / rhs` for the first and second form; the bound holds where the ratio is at least 1.
    pub ratio_1: f64,
    pub ratio_2: f64,
    pub worst_1: [f64; 2],
    pub worst_2: [f64; 2],
    /// `min(ratio) - 1` over unknowns away from the Dirichlet boundary, where the
    /// bound is not attained by construction.
    pub interior_slack: f64,
    pub pass: bool,
}

/// Checks `V >= e^{-b max d} min(1/(2 eps), min_dK V) e^{-m z}` and
/// `V >= e^{-b max d} min(1/2, min_dK V) e^{-eps a z}` at every unknown.
pub fn check_v_lower_bound(sol: &TranslatorSolution, p: &TranslatorParams) -> VBoundReport {
    let (a, b, m) = p.weights(&sol.domain);
    let tg = &sol.discretization;
    let pts = sol.graph_points();
    let max_d = pts.iter().map(|gp| tg.barrier.dist[gp.cell]).fold(0.0, f64::max);
    let min_bv = pts
        .iter()
        .filter(|gp| tg.dirichlet_adjacent(gp.cell))
        .map(|gp| gp.v)
        .fold(f64::INFINITY, f64::min);
    let base = (-b * max_d).exp();
    let (mut r1, mut r2) = (f64::INFINITY, f64::INFINITY);
    let (mut w1, mut w2) = ([0.0; 2], [0.0; 2]);
    let mut interior = f64::INFINITY;
    for gp in &pts {
        let rhs1 = base * (0.5 / p.eps).min(min_bv) * (-m * gp.z).exp();
        let rhs2 = base * 0.5f64.min(min_bv) * (-a * gp.u).exp();
        if !tg.dirichlet_adjacent(gp.cell) {
            interior = interior.min(gp.v / rhs1).min(gp.v / rhs2);
        }
        if gp.v / rhs1 < r1 {
            r1 = gp.v / rhs1;
            w1 = [gp.x.x, gp.x.y];
        }
        if gp.v / rhs2 < r2 {
            r2 = gp.v / rhs2;
            w2 = [gp.x.x, gp.x.y];
        }
    }
    VBoundReport {
        a,
        b,
        m,
        max_d,
        min_boundary_v: min_bv,
        ratio_1: r1,
        ratio_2: r2,
        worst_1: w1,
        worst_2: w2,
        interior_slack: interior - 1.0,
        pass: r1 >= 1.0 && r2 >= 1.0,
    }
}

/// Fit of `H + sigma u >= c e^{-a u}`.
#[derive(Debug, Clone, Serialize)]
pub struct HLowerReport {
    pub eps: f64,
    pub sigma: f64,
    pub a: f64,
    pub c: f64,
    pub argmin: [f64; 2],
    /// Discretization noise of `H` at the argmin (difference of the two discrete formulas).
    pub noise: f64,
    pub pass: bool,
}

pub fn check_h_lower(sol: &TranslatorSolution, p: &TranslatorParams) -> HLowerReport {
    let (a, _, _) = p.weights(&sol.domain);
    let tg = &sol.discretization;
    let mut best: Option<(f64, GraphPoint)> = None;
    for gp in sol.graph_points() {
        let c = (gp.h + p.sigma * gp.u) * (a * gp.u).exp();
        if best.as_ref().is_none_or(|b| c < b.0) {
            best = Some((c, gp));
        }
    }
    let (c, gp) = best.expect("solution has unknowns");
    // Second differences are one-sided next to the Dirichlet boundary, where the
    // equation form of H is the only consistent one.
    let noise = if tg.dirichlet_adjacent(gp.cell) { 0.0 } else { (gp.h_nc - gp.h).abs() * (a * gp.u).exp() };
    HLowerReport { eps: p.eps, sigma: p.sigma, a, c, argmin: [gp.x.x, gp.x.y], noise, pass: c > noise }
}

/// Sup of `u` on `K \ K_delta` across a parameter sweep.
#[derive(Debug, Clone, Serialize)]
pub struct NearBoundaryReport {
    pub delta: f64,
    /// `(eps, sigma, sup)` per solve.
    pub maxima: Vec<[f64; 3]>,
    pub spread: f64,
    pub pass: bool,
}

/// `K \ K_delta` is the set where the level-set flow of `K` arrives before `delta`.
pub fn check_near_boundary_sup(sols: &[TranslatorSolution], traj: &FlowTrajectory, delta: f64) -> NearBoundaryReport {
    let mut maxima = Vec::new();
    for sol in sols {
        let g = sol.grid();
        let mut m: f64 = 0.0;
        for (i, &cell) in sol.discretization.cells.iter().enumerate() {
            let x = g.center(cell % g.nx, cell / g.nx);
            let t = traj.arrival.sample(&x);
            if t.is_finite() && t <= delta {
                m = m.max(sol.values[i]);
            }
        }
        maxima.push([sol.params.eps, sol.params.sigma, m]);
    }
    let hi = maxima.iter().map(|v| v[2]).fold(0.0, f64::max);
    let lo = maxima.iter().map(|v| v[2]).fold(f64::INFINITY, f64::min);
    let spread = if lo > 0.0 { hi / lo } else if hi == 0.0 { 1.0 } else { f64::INFINITY };
    NearBoundaryReport { delta, maxima, spread, pass: spread <= 2.0 }
}

/// Perturbed second fundamental form `B = A + T` on the graph of `u / eps`.
#[derive(Debug, Clone, Serialize)]
pub struct PerturbedSff {
    /// Per-unknown `(x, y, |A|, |T|, |B|)`.
    pub samples: Vec<[f64; 5]>,
    /// Per barrier-contact cell `(x, y, B(X, N), A(X, N))`.
    pub junctions: Vec<[f64; 4]>,
    pub max_b_xn: f64,
    pub max_a_xn: f64,
}

/// `B` and `T` as bilinear forms in graph coordinates.
fn perturbed_at(gp: &GraphPoint, ext: &AmbientExtension) -> (Matrix2<f64>, Matrix2<f64>) {
    let k = ext.curvature(&gp.x);
    if k == 0.0 {
        return (gp.a, Matrix2::zeros());
    }
    let n = ext.normal(&gp.x);
    let t = ext.tangent(&gp.x);
    let w = (1.0 + gp.dz.norm_squared()).sqrt();
    // k(e_i, nu) = k <e_i, t> <nu_h, t>, nu_h = -Dz / W.
    let nu_t = -gp.dz.dot(&t) / w;
    let kv = Vec2::new(k * t.x * nu_t, k * t.y * nu_t);
    let tm = kv * n.transpose() + n * kv.transpose();
    (gp.a + tm, tm)
}

pub fn perturbed_sff(sol: &TranslatorSolution, ext: &AmbientExtension) -> PerturbedSff {
    let tg = &sol.discretization;
    let mut samples = Vec::new();
    let mut junctions = Vec::new();
    for gp in sol.graph_points() {
        let (b, t) = perturbed_at(&gp, ext);
        samples.push([
            gp.x.x,
            gp.x.y,
            norm_sq(&gp.g_inv, &gp.a).max(0.0).sqrt(),
            norm_sq(&gp.g_inv, &t).max(0.0).sqrt(),
            norm_sq(&gp.g_inv, &b).max(0.0).sqrt(),
        ]);
        if tg.neumann_adjacent(gp.cell) && !tg.dirichlet_adjacent(gp.cell) {
            let dom = &sol.domain;
            let y = dom.project(&gp.x);
            // Second differences next to a curved barrier carry grid-scale noise, so the
            // barrier values come from a cubic fit whose stencil stays clear of the
            // Dirichlet corner, where second derivatives are unbounded.
            let radius = 6.0 * sol.h();
            if sol.region.level(dom, &y) < radius + 2.0 * sol.h() {
                continue;
            }
            let Some(fit) = sol.local_fit(&y, radius, true, true) else { continue };
            let (b, _) = perturbed_at(&fit, ext);
            let nb = dom.outward_normal(&y);
            let g = fit.g_inv.try_inverse().unwrap_or_else(Matrix2::identity);
            // N projected to TM, and X orthogonal to it in the graph metric.
            let nt = fit.g_inv * nb;
            let nt = nt / (nt.transpose() * g * nt)[(0, 0)].sqrt();
            let gn = g * nt;
            let x = Vec2::new(-gn.y, gn.x);
            let x = x / (x.transpose() * g * x)[(0, 0)].sqrt();
            let bxn = (x.transpose() * b * nt)[(0, 0)];
            let axn = (x.transpose() * fit.a * nt)[(0, 0)];
            junctions.push([y.x, y.y, bxn, axn]);
        }
    }
    let max_b_xn = junctions.iter().map(|j| j[2].abs()).fold(0.0, f64::max);
    let max_a_xn = junctions.iter().map(|j| j[3].abs()).fold(0.0, f64::max);
    PerturbedSff { samples, junctions, max_b_xn, max_a_xn }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MonitorLabel {
    Interior,
    Dirichlet,
    Neumann,
}

/// The monitor `f = (|B| + Lambda sigma u + Theta) / (V w)` and the location of its maximum.
#[derive(Debug, Clone, Serialize)]
pub struct MonitorReport {
    pub max_f: f64,
    pub argmax: [f64; 2],
    pub label: MonitorLabel,
    pub pass: bool,
    #[serde(skip)]
    pub field: GridField,
}

pub fn monitor_f(sol: &TranslatorSolution, p: &TranslatorParams) -> MonitorReport {
    let ext = p.extension(&sol.domain);
    let (a, b, _) = p.weights(&sol.domain);
    let tg = &sol.discretization;
    let mut field = GridField::zeros(sol.grid());
    let mut best = (f64::NEG_INFINITY, 0usize, Vec2::zeros());
    for gp in sol.graph_points() {
        let (bm, _) = perturbed_at(&gp, &ext);
        let bn = norm_sq(&gp.g_inv, &bm).max(0.0).sqrt();
        let w = (a * gp.u - b * tg.barrier.dist[gp.cell]).exp();
        let f = (bn + p.lambda_f * p.sigma * gp.u + p.theta_f) / (gp.v * w);
        field.data[gp.cell] = f;
        if f > best.0 {
            best = (f, gp.cell, gp.x);
        }
    }
    let label = if tg.dirichlet_adjacent(best.1) {
        MonitorLabel::Dirichlet
    } else if tg.neumann_adjacent(best.1) {
        MonitorLabel::Neumann
    } else {
        MonitorLabel::Interior
    };
    MonitorReport { max_f: best.0, argmax: [best.2.x, best.2.y], label, pass: label != MonitorLabel::Neumann, field }
}

/// One-sided minimization of the flow against competitor regions.
#[derive(Debug, Clone, Serialize)]
pub struct OneSidedReport {
    pub t: f64,
    pub perimeter: f64,
    pub competitors: Vec<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compares the free perimeter of `K_t` with that of each competitor `F` (a level
/// field on the trajectory grid, positive inside). Nesting `K_t ⊆ F ⊆ K` is checked
/// to one cell.
pub fn one_sided_min_check(traj: &FlowTrajectory, t: f64, competitors: &[GridField]) -> Result<OneSidedReport> {
    let state = traj
        .all_states()
        .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
        .ok_or_else(|| FlowError::Window("trajectory has no states".into()))?;
    let bg = &traj.barrier;
    let h = bg.h();
    let kt = traj.filled(state);
    let k0 = traj.filled(&traj.initial);
    let perimeter = free_perimeter(bg, &kt);
    let mut out = Vec::with_capacity(competitors.len());
    for (index, f) in competitors.iter().enumerate() {
        if f.grid.nx != kt.grid.nx || f.grid.ny != kt.grid.ny {
            return Err(FlowError::InvalidCompetitor { index, reason: "grid mismatch".into() });
        }
        let mut ff = f.clone();
        bg.fill_ghosts(&mut ff.data);
        for k in 0..ff.data.len() {
            if bg.dist[k] < 0.0 {
                continue;
            }
            if kt.data[k] > ff.data[k] + h {
                return Err(FlowError::InvalidCompetitor { index, reason: "does not contain K_t".into() });
            }
            if ff.data[k] > k0.data[k] + h {
                return Err(FlowError::InvalidCompetitor { index, reason: "not contained in K".into() });
            }
        }
        out.push(free_perimeter(bg, &ff));
    }
    let tolerance = 2.0 * h;
    let pass = out.iter().all(|p| perimeter <= p + tolerance);
    Ok(OneSidedReport { t: state.t, perimeter, competitors: out, tolerance, pass })
}

/// Length (or Pappus area) of the interface inside `D`.
fn free_perimeter(bg: &BarrierGrid, filled: &GridField) -> f64 {
    bg.interface(filled).measure()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RegionShape;

    fn small_disc() -> (InitialRegion, BarrierDomain) {
        (
            InitialRegion::new(RegionShape::Disc { center: Vec2::zeros(), radius: 0.5 }, true),
            BarrierDomain::disc(Vec2::zeros(), 1.0),
        )
    }

    #[test]
    fn kappa_zero_gives_zero() {
        let (k, dom) = small_disc();
        let p = TranslatorParams { kappa: 0.0, ..TranslatorParams::new(0.2, 1.0).with_h(1.0 / 32.0) };
        let sol = solve_continuation(&k, &dom, &p).unwrap();
        assert!(sol.values.iter().all(|v| *v == 0.0));
        assert_eq!(sol.kappa, 0.0);
    }

    #[test]
    fn sup_bound_on_disc() {
        let (k, dom) = small_disc();
        let p = TranslatorParams::new(0.1, 1.0).with_h(1.0 / 32.0);
        let sol = solve_continuation(&k, &dom, &p).unwrap();
        assert_eq!(sol.kappa, 1.0);
        assert!(sol.residual <= 1e-10);
        assert!(sol.trace.iter().all(|s| s.bound_ok));
        assert!(sol.max_u() <= 10.0 && sol.min_u() >= 0.0);
        // Ordering in kappa.
        for w in sol.trace.windows(2) {
            assert!(w[0].max_u <= w[1].max_u + 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let k = InitialRegion::new(RegionShape::HalfDisc { foot: Vec2::new(0.0, -1.0), radius: 0.5 }, true);
        let dom = BarrierDomain::disc(Vec2::zeros(), 1.0);
        let region = k.bend_corners(&dom, 0.25, &dom.bounds().unwrap()).unwrap();
        let tg = TranslatorGrid::new(&region, &dom, 1.0 / 32.0, None).unwrap();
        let n = tg.len();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u: Vec<f64> = (0..n).map(|_| 0.5 + 0.1 * rng.random::<f64>()).collect();
        let dir: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        let (r0, trips) = tg.linearize(&u, 0.3, 1.0, 0.7);
        let mut jd = vec![0.0; n];
        for t in &trips {
            jd[t.row] += t.val * dir[t.col];
        }
        let mut errs = Vec::new();
        for step in [1e-3, 5e-4] {
            let up: Vec<f64> = u.iter().zip(&dir).map(|(a, b)| a + step * b).collect();
            let r1 = tg.residual(&up, 0.3, 1.0, 0.7);
            let e = (0..n).map(|i| (r1[i] - r0[i] - step * jd[i]).abs()).fold(0.0, f64::max);
            errs.push(e);
        }
        // Second-order remainder: halving the step quarters the error.
        assert!(errs[1] < 0.3 * errs[0], "{errs:?}");
    }

    #[test]
    fn planar_only() {
        let k = InitialRegion::new(RegionShape::Disc { center: Vec2::new(0.0, 0.0), radius: 0.5 }, true);
        let dom = BarrierDomain::ball(1.0);
        assert!(matches!(
            solve_continuation(&k, &dom, &TranslatorParams::new(0.1, 1.0)),
            Err(FlowError::Mode(_))
        ));
    }

    #[test]
    fn unresolved_collar_is_rejected() {
        let k = InitialRegion::new(RegionShape::HalfDisc { foot: Vec2::new(0.0, -1.0), radius: 0.5 }, true);
        let dom = BarrierDomain::disc(Vec2::zeros(), 1.0);
        let p = TranslatorParams::new(0.1, 1.0).with_h(1.0 / 32.0);
        assert!(matches!(solve_continuation(&k, &dom, &p), Err(FlowError::Resolution(_))));
    }

    #[test]
    fn flat_barrier_has_no_perturbation() {
        let k = InitialRegion::new(RegionShape::HalfDisc { foot: Vec2::new(0.0, 0.0), radius: 0.5 }, true);
        let dom = BarrierDomain::halfplane(Vec2::new(0.0, 1.0), 0.0);
        let p = TranslatorParams::new(0.3, 1.0)
            .with_h(1.0 / 32.0)
            .with_tau(0.25)
            .with_window(Bounds::new(Vec2::new(-1.0, -0.2), Vec2::new(1.0, 1.0)));
        let sol = solve_continuation(&k, &dom, &p).unwrap();
        let sff = perturbed_sff(&sol, &p.extension(&dom));
        assert!(sff.samples.iter().all(|s| s[3] == 0.0 && s[2] == s[4]));
        let v = check_v_lower_bound(&sol, &p);
        assert_eq!((v.b, v.m), (0.0, 0.0));
        assert!(v.pass, "{v:?}");
    }
}
