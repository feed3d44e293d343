//! Level-set mean curvature flow with free (Neumann) boundary on the barrier.
//!
//! `K_t = { phi >= 0 }`. Values outside `D` within a few cells of the barrier are ghost
//! cells filled with `phi` at the reflected point, which enforces `<N, grad phi> = 0`
//! on the barrier. Farther outside, `phi` stores `max(d, -W h)`, so `K_t` never leaves
//! `D`.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::curvature::{sample_curvature, CurvatureSample};
use crate::error::{FlowError, Result};
use crate::geometry::{BarrierDomain, Bounds, InitialRegion, Mode, Vec2};
use crate::grid::{Grid2, GridField};
use crate::interface::{region_measure, Interface};

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub h: f64,
    /// `dt = dt_factor * h^2`.
    pub dt_factor: f64,
    /// Narrow-band half-width in cells.
    pub band_width: usize,
    pub reinit_every: usize,
    /// Curvature regularization; `None` means `h`.
    pub delta_reg: Option<f64>,
    pub horizon: f64,
    pub output_times: Vec<f64>,
    /// Interface history cadence in steps (outside alert mode).
    pub record_every: usize,
    /// Singularity trigger on `max |H| h`.
    pub blowup_threshold: f64,
    /// Grid margin around the computational box, in cells.
    pub margin: usize,
    /// Computational box for unbounded barriers; intersected with the barrier's box
    /// otherwise.
    pub window: Option<Bounds>,
    /// Stop once `K_t` is extinct (max phi below `-2h`).
    pub stop_at_extinction: bool,
}

impl FlowConfig {
    pub fn new(h: f64, horizon: f64) -> Self {
        Self {
            h,
            dt_factor: 0.2,
            band_width: 8,
            reinit_every: 10,
            delta_reg: None,
            horizon,
            output_times: Vec::new(),
            record_every: 10,
            blowup_threshold: 0.25,
            margin: 4,
            window: None,
            stop_at_extinction: true,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt_factor * self.h * self.h
    }

    pub fn delta(&self) -> f64 {
        self.delta_reg.unwrap_or(self.h)
    }

    pub fn with_window(mut self, window: Bounds) -> Self {
        self.window = Some(window);
        self
    }

    pub fn with_outputs(mut self, times: Vec<f64>) -> Self {
        self.output_times = times;
        self
    }

    /// `n` evenly spaced output times in `(0, horizon]`.
    pub fn with_uniform_outputs(mut self, n: usize) -> Self {
        self.output_times = (1..=n).map(|k| self.horizon * k as f64 / n as f64).collect();
        self
    }
}

/// Largest stable explicit step for the regularized curvature operator.
pub fn stability_limit(h: f64) -> f64 {
    0.25 * h * h
}

/// One time slice of the flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    /// Level-set function with outside values `max(d, -W h)`.
    pub phi: GridField,
    pub step: usize,
}

impl FlowState {
    /// Band mask `|phi| < W h`.
    pub fn band_mask(&self, band_width: usize) -> Vec<bool> {
        let w = band_width as f64 * self.phi.grid.h;
        self.phi.data.iter().map(|v| v.abs() < w).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.max() < 0.0
    }
}

#[derive(Debug, Clone)]
struct Ghost {
    idx: usize,
    stencil: Vec<(usize, f64)>,
}

/// Reflection stencils for the cells flagged by `is_ghost`: each ghost value is the
/// bilinear interpolant at its mirror point, with references to other ghost cells (and
/// to itself) eliminated so that the final stencil involves non-ghost cells only.
pub fn reflection_stencils(
    grid: &Grid2,
    dom: &BarrierDomain,
    is_ghost: &dyn Fn(usize) -> bool,
) -> Vec<(usize, Vec<(usize, f64)>)> {
    use std::collections::HashMap;
    let h = grid.h;
    let mut raw: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
    let mut order = Vec::new();
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let k = grid.idx(i, j);
            if !is_ghost(k) {
                continue;
            }
            let x = grid.center(i, j);
            let target = match dom.reflect_with(&x, 2.0 * h) {
                Ok(y) => y,
                Err(_) => dom.project(&x),
            };
            let mut st = merge(GridField::stencil(grid, &target).iter().map(|((a, b), w)| (grid.idx(*a, *b), *w)));
            let selfw: f64 = st.iter().filter(|(c, _)| *c == k).map(|(_, w)| *w).sum();
            if selfw > 1.0 - 1e-9 {
                // Cell centre sits on the barrier: sample slightly inside instead.
                let inward = target - dom.outward_normal(&target) * (0.05 * h);
                st = merge(GridField::stencil(grid, &inward).iter().map(|((a, b), w)| (grid.idx(*a, *b), *w)));
            }
            raw.insert(k, eliminate_self(k, st));
            order.push(k);
        }
    }
    // Substitute ghost references until only non-ghost cells remain.
    let mut cur = raw.clone();
    for _ in 0..60 {
        let mut changed = false;
        let mut next = HashMap::with_capacity(cur.len());
        for &k in &order {
            let st = &cur[&k];
            if st.iter().all(|(c, _)| !raw.contains_key(c)) {
                next.insert(k, st.clone());
                continue;
            }
            changed = true;
            let mut acc = Vec::new();
            for &(c, w) in st {
                if c != k && raw.contains_key(&c) {
                    acc.extend(cur[&c].iter().map(|(cc, ww)| (*cc, w * ww)));
                } else {
                    acc.push((c, w));
                }
            }
            let merged: Vec<(usize, f64)> = merge(acc.into_iter()).into_iter().filter(|(_, w)| w.abs() > 1e-14).collect();
            next.insert(k, eliminate_self(k, merged));
        }
        cur = next;
        if !changed {
            break;
        }
    }
    order
        .into_iter()
        .map(|k| {
            // Drop unresolved ghost references and renormalize.
            let st: Vec<(usize, f64)> = cur[&k].iter().copied().filter(|(c, _)| !raw.contains_key(c)).collect();
            let total: f64 = st.iter().map(|(_, w)| w).sum();
            (k, st.into_iter().map(|(c, w)| (c, w / total)).collect())
        })
        .collect()
}

fn merge(items: impl Iterator<Item = (usize, f64)>) -> Vec<(usize, f64)> {
    let mut v: Vec<(usize, f64)> = items.collect();
    v.sort_by_key(|(c, _)| *c);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(v.len());
    for (c, w) in v {
        match out.last_mut() {
            Some((lc, lw)) if *lc == c => *lw += w,
            _ => out.push((c, w)),
        }
    }
    out
}

/// Solves `v = a v + rest` for `v`.
fn eliminate_self(k: usize, st: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    let a: f64 = st.iter().filter(|(c, _)| *c == k).map(|(_, w)| *w).sum();
    if a == 0.0 {
        return st;
    }
    st.into_iter().filter(|(c, _)| *c != k).map(|(c, w)| (c, w / (1.0 - a))).collect()
}

/// The computational grid together with barrier distances and the reflection stencils
/// of the ghost cells.
#[derive(Debug, Clone)]
pub struct BarrierGrid {
    pub grid: Grid2,
    pub dom: BarrierDomain,
    pub dist: Vec<f64>,
    ghosts: Vec<Ghost>,
    pub band: f64,
}

impl BarrierGrid {
    pub fn new(dom: &BarrierDomain, cfg: &FlowConfig) -> Result<Self> {
        let bounds = match (dom.bounds(), cfg.window) {
            (Some(b), Some(w)) => b.intersect(&w),
            (Some(b), None) => b,
            (None, Some(w)) => w,
            (None, None) => {
                return Err(FlowError::InvalidGrid(
                    "unbounded barrier needs an explicit computational window".into(),
                ))
            }
        };
        let grid = Grid2::covering(&bounds, cfg.h, cfg.margin, dom.mode)?;
        if grid.nx < 8 || grid.ny < 8 {
            return Err(FlowError::InvalidGrid(format!("grid {}x{} is smaller than 8x8", grid.nx, grid.ny)));
        }
        Ok(Self::on_grid(dom, grid, cfg.band_width as f64 * cfg.h))
    }

    pub fn on_grid(dom: &BarrierDomain, grid: Grid2, band: f64) -> Self {
        let h = grid.h;
        let mut dist = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                dist.push(dom.signed_distance(&grid.center(i, j)));
            }
        }
        let ghosts = reflection_stencils(&grid, dom, &|k| dist[k] < 0.0 && dist[k] >= -3.0 * h)
            .into_iter()
            .map(|(idx, stencil)| Ghost { idx, stencil })
            .collect();
        Self { grid, dom: dom.clone(), dist, ghosts, band }
    }

    pub fn h(&self) -> f64 {
        self.grid.h
    }

    /// Reflection stencil of every ghost cell, in terms of non-ghost cells.
    pub fn ghost_stencils(&self) -> impl Iterator<Item = (usize, &[(usize, f64)])> {
        self.ghosts.iter().map(|g| (g.idx, g.stencil.as_slice()))
    }

    /// Fills ghost cells with reflected values.
    pub fn fill_ghosts(&self, data: &mut [f64]) {
        for g in &self.ghosts {
            data[g.idx] = g.stencil.iter().map(|(k, w)| data[*k] * w).sum();
        }
    }

    /// Resets every cell outside `D` to the clipped value `max(d, -W h)`.
    pub fn clip_outside(&self, data: &mut [f64]) {
        for (v, d) in data.iter_mut().zip(&self.dist) {
            if *d < 0.0 {
                *v = d.max(-self.band);
            }
        }
    }

    /// Ghost-filled copy of a stored level-set field.
    pub fn ghost_filled(&self, phi: &GridField) -> GridField {
        let mut f = phi.clone();
        self.fill_ghosts(&mut f.data);
        f
    }

    /// Interface of a ghost-filled field, clipped to `D`.
    pub fn interface(&self, filled: &GridField) -> Interface {
        let dom = &self.dom;
        let clip = |x: &Vec2| dom.signed_distance(x);
        Interface::extract(filled, Some(&clip))
    }

    /// Initial level-set function of `K`: the region's level function clamped to the
    /// band, then reinitialized to a signed distance.
    pub fn initial_phi(&self, k: &InitialRegion, cfg: &FlowConfig) -> Result<GridField> {
        let mut phi = GridField::from_fn(&self.grid, |x| k.level(&self.dom, &x).clamp(-self.band, self.band));
        self.clip_outside(&mut phi.data);
        self.fill_ghosts(&mut phi.data);
        let full = (0, self.grid.nx, 0, self.grid.ny);
        reinitialize(self, &mut phi.data, full, 2 * cfg.band_width + 4)?;
        self.clip_outside(&mut phi.data);
        Ok(phi)
    }
}

type BoxRange = (usize, usize, usize, usize);

/// Index range `[i0, i1) x [j0, j1)` of the cells with `|phi| < band`, inflated by `pad`.
fn active_box(bg: &BarrierGrid, data: &[f64], pad: usize) -> Option<BoxRange> {
    let g = &bg.grid;
    let (mut i0, mut i1, mut j0, mut j1) = (usize::MAX, 0, usize::MAX, 0);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.idx(i, j);
            if bg.dist[k] >= 0.0 && data[k].abs() < bg.band * 0.999 {
                i0 = i0.min(i);
                i1 = i1.max(i + 1);
                j0 = j0.min(j);
                j1 = j1.max(j + 1);
            }
        }
    }
    if i0 == usize::MAX {
        return None;
    }
    Some((i0.saturating_sub(pad), (i1 + pad).min(g.nx), j0.saturating_sub(pad), (j1 + pad).min(g.ny)))
}

/// Second-order ENO backward and forward differences along one axis.
#[inline]
fn eno2(c: f64, at: impl Fn(isize) -> f64, h: f64) -> (f64, f64) {
    let (m2, m1, p1, p2) = (at(-2), at(-1), at(1), at(2));
    let dc = p1 - 2.0 * c + m1;
    let dm = c - 2.0 * m1 + m2;
    let dp = p2 - 2.0 * p1 + c;
    let minmod = |x: f64, y: f64| if x * y <= 0.0 { 0.0 } else if x.abs() < y.abs() { x } else { y };
    ((c - m1 + 0.5 * minmod(dc, dm)) / h, (p1 - c - 0.5 * minmod(dc, dp)) / h)
}

fn val(g: &Grid2, data: &[f64], i: isize, j: isize) -> f64 {
    data[g.wrap_j(j) * g.nx + g.wrap_i(i)]
}

/// Right-hand side `g div(grad phi / s) (+ axisym term)` at cell `(i, j)`.
#[inline]
fn speed(g: &Grid2, data: &[f64], i: usize, j: usize, delta: f64) -> f64 {
    let (i, j) = (i as isize, j as isize);
    let h = g.h;
    let c = val(g, data, i, j);
    let e = val(g, data, i + 1, j);
    let w = val(g, data, i - 1, j);
    let n = val(g, data, i, j + 1);
    let s = val(g, data, i, j - 1);
    let px = (e - w) / (2.0 * h);
    let py = (n - s) / (2.0 * h);
    let pxx = (e - 2.0 * c + w) / (h * h);
    let pyy = (n - 2.0 * c + s) / (h * h);
    let pxy = (val(g, data, i + 1, j + 1) - val(g, data, i + 1, j - 1) - val(g, data, i - 1, j + 1)
        + val(g, data, i - 1, j - 1))
        / (4.0 * h * h);
    let g2 = px * px + py * py;
    let gn = g2.sqrt();
    let sr = (delta * delta + g2).sqrt();
    let mut f = gn * ((pxx + pyy) / sr - (px * px * pxx + 2.0 * px * py * pxy + py * py * pyy) / (sr * sr * sr));
    if g.mode == Mode::Axisym {
        let r = g.origin.x + (i as f64 + 0.5) * h;
        f += gn * px / (r * sr);
    }
    f
}

/// PDE reinitialization `phi_tau = sign(phi0)(1 - |grad phi|)` with the subcell fix at
/// interface cells, over the given index box. Ghost cells are refilled after every
/// iteration. Cells are clamped to the band afterwards.
pub fn reinitialize(bg: &BarrierGrid, data: &mut [f64], bx: BoxRange, iters: usize) -> Result<()> {
    let g = &bg.grid;
    let h = g.h;
    let dtau = 0.5 * h;
    let (i0, i1, j0, j1) = bx;
    let phi0: Vec<f64> = data.to_vec();
    let width = i1 - i0;
    // Subcell distance estimates for cells adjacent to the interface.
    let mut fix: Vec<Option<f64>> = vec![None; width * (j1 - j0)];
    for j in j0..j1 {
        for i in i0..i1 {
            let k = g.idx(i, j);
            if bg.dist[k] < 0.0 {
                continue;
            }
            let (ii, jj) = (i as isize, j as isize);
            let c = phi0[k];
            let nb = [
                val(g, &phi0, ii + 1, jj),
                val(g, &phi0, ii - 1, jj),
                val(g, &phi0, ii, jj + 1),
                val(g, &phi0, ii, jj - 1),
            ];
            if nb.iter().any(|v| (*v >= 0.0) != (c >= 0.0)) {
                let cx = 0.5 * (nb[0] - nb[1]);
                let cy = 0.5 * (nb[2] - nb[3]);
                let mut den = (cx * cx + cy * cy).sqrt();
                for v in nb {
                    den = den.max((v - c).abs());
                }
                fix[(j - j0) * width + (i - i0)] = Some(h * c / den.max(1e-12));
            }
        }
    }
    let mut next = data.to_vec();
    for _ in 0..iters {
        let cur: &[f64] = data;
        let rows: Vec<(usize, Vec<f64>)> = (j0..j1)
            .into_par_iter()
            .map(|j| {
                let mut row = Vec::with_capacity(width);
                for i in i0..i1 {
                    let k = g.idx(i, j);
                    let c = cur[k];
                    if bg.dist[k] < 0.0 {
                        row.push(c);
                        continue;
                    }
                    let s0 = if phi0[k] > 0.0 {
                        1.0
                    } else if phi0[k] < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    if let Some(dfix) = fix[(j - j0) * width + (i - i0)] {
                        row.push(c - dtau / h * (s0 * c.abs() - dfix));
                        continue;
                    }
                    let (ii, jj) = (i as isize, j as isize);
                    let (a, b) = eno2(c, |o| val(g, cur, ii + o, jj), h);
                    let (cc, d) = eno2(c, |o| val(g, cur, ii, jj + o), h);
                    let grad = if s0 > 0.0 {
                        (a.max(0.0).powi(2).max(b.min(0.0).powi(2)) + cc.max(0.0).powi(2).max(d.min(0.0).powi(2)))
                            .sqrt()
                    } else {
                        (a.min(0.0).powi(2).max(b.max(0.0).powi(2)) + cc.min(0.0).powi(2).max(d.max(0.0).powi(2)))
                            .sqrt()
                    };
                    row.push(c - dtau * s0 * (grad - 1.0));
                }
                (j, row)
            })
            .collect();
        for (j, row) in rows {
            let base = g.idx(i0, j);
            next[base..base + width].copy_from_slice(&row);
        }
        for j in j0..j1 {
            let base = g.idx(i0, j);
            data[base..base + width].copy_from_slice(&next[base..base + width]);
        }
        bg.fill_ghosts(data);
    }
    let mut residual: f64 = 0.0;
    for j in j0..j1 {
        for i in i0..i1 {
            let k = g.idx(i, j);
            if bg.dist[k] >= 0.0 {
                if !data[k].is_finite() {
                    return Err(FlowError::NonConvergence { residual: f64::NAN });
                }
                residual = residual.max((data[k] - phi0[k]).abs().min(bg.band));
                data[k] = data[k].clamp(-bg.band, bg.band);
            }
        }
    }
    let _ = residual;
    bg.fill_ghosts(data);
    Ok(())
}

/// Advances a ghost-filled level-set array by one explicit step over the index box.
fn advance(bg: &BarrierGrid, data: &mut [f64], scratch: &mut [f64], bx: BoxRange, dt: f64, delta: f64) {
    let g = &bg.grid;
    let (i0, i1, j0, j1) = bx;
    let width = i1 - i0;
    let nx = g.nx;
    let cur: &[f64] = data;
    scratch[j0 * nx..j1 * nx].par_chunks_mut(nx).enumerate().for_each(|(jj, row)| {
        let j = j0 + jj;
        for i in i0..i1 {
            let k = j * nx + i;
            row[i] = if bg.dist[k] >= 0.0 {
                (cur[k] + dt * speed(g, cur, i, j, delta)).clamp(-bg.band, bg.band)
            } else {
                cur[k]
            };
        }
    });
    for j in j0..j1 {
        let base = j * nx + i0;
        data[base..base + width].copy_from_slice(&scratch[base..base + width]);
    }
    bg.fill_ghosts(data);
}

/// Single explicit step of the flow. Returns the new state with clipped outside values.
pub fn step(bg: &BarrierGrid, state: &FlowState, dt: f64, delta: f64) -> Result<FlowState> {
    let limit = stability_limit(bg.h());
    if dt > limit * (1.0 + 1e-12) {
        return Err(FlowError::CflViolation { dt, limit });
    }
    let mut data = state.phi.data.clone();
    bg.fill_ghosts(&mut data);
    let mut scratch = data.clone();
    if let Some(bx) = active_box(bg, &data, 3) {
        advance(bg, &mut data, &mut scratch, bx, dt, delta);
    }
    bg.clip_outside(&mut data);
    Ok(FlowState { t: state.t + dt, phi: GridField { grid: bg.grid.clone(), data }, step: state.step + 1 })
}

/// Where a singular point sits relative to the barrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Location {
    Interior,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TypeHint {
    Spherical,
    Cylindrical,
    Popping,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SingularEvent {
    pub x: [f64; 2],
    pub t: f64,
    pub location: Location,
    pub hint: TypeHint,
    pub step: usize,
}

impl SingularEvent {
    pub fn point(&self) -> Vec2 {
        Vec2::new(self.x[0], self.x[1])
    }
}

/// Raw curvature trigger recorded during the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Trigger {
    pub t: f64,
    pub x: Vec2,
    pub max_h_h: f64,
    pub step: usize,
}

/// Raw popping detection recorded during the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopTrigger {
    pub t: f64,
    pub x: Vec2,
    pub length_before: f64,
    pub length_after: f64,
    pub step: usize,
}

/// Interface at one recorded time.
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceRecord {
    pub t: f64,
    pub step: usize,
    pub interface: Interface,
}

/// Scalar diagnostics of one step.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SeriesRow {
    pub t: f64,
    pub area: f64,
    pub perimeter: f64,
    pub min_h: f64,
    pub max_h: f64,
    pub max_a_over_h: f64,
    pub contact_angle_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Extinct,
    Horizon,
}

/// Recorded evolution of `K_t`.
#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub barrier: BarrierGrid,
    pub config: FlowConfig,
    pub initial: FlowState,
    pub snapshots: Vec<FlowState>,
    pub final_state: FlowState,
    /// `u(x) = sup { t : x in K_t }`; `NaN` where `x` was never in `K`, `+inf` where it
    /// is still in `K` at the end of the run.
    pub arrival: GridField,
    pub t_ext: Option<f64>,
    pub stop: StopReason,
    pub events: Vec<SingularEvent>,
    pub triggers: Vec<Trigger>,
    pub pops: Vec<PopTrigger>,
    pub history: Vec<InterfaceRecord>,
    pub series: Vec<SeriesRow>,
    pub mean_convex: bool,
}

impl FlowTrajectory {
    pub fn grid(&self) -> &Grid2 {
        &self.barrier.grid
    }

    pub fn h(&self) -> f64 {
        self.barrier.grid.h
    }

    pub fn mode(&self) -> Mode {
        self.barrier.grid.mode
    }

    /// Snapshots including the initial state.
    pub fn all_states(&self) -> impl Iterator<Item = &FlowState> {
        std::iter::once(&self.initial).chain(self.snapshots.iter())
    }

    /// Recorded interface closest in time to `t`.
    pub fn interface_near(&self, t: f64) -> Option<&InterfaceRecord> {
        self.history
            .iter()
            .min_by(|a, b| (a.t - t).abs().partial_cmp(&(b.t - t).abs()).unwrap())
    }

    /// Recorded interfaces with `t` in `[t0, t1]`.
    pub fn interfaces_in(&self, t0: f64, t1: f64) -> impl Iterator<Item = &InterfaceRecord> {
        self.history.iter().filter(move |r| r.t >= t0 && r.t <= t1)
    }

    /// Ghost-filled copy of a state's level-set function.
    pub fn filled(&self, state: &FlowState) -> GridField {
        self.barrier.ghost_filled(&state.phi)
    }

    /// Interface (clipped to `D`) of a state.
    pub fn interface_of(&self, state: &FlowState) -> Interface {
        self.barrier.interface(&self.filled(state))
    }

    /// Curvature samples of a state.
    pub fn curvature_of(&self, state: &FlowState) -> Vec<CurvatureSample> {
        let f = self.filled(state);
        sample_curvature(&f, &self.barrier.interface(&f)).0
    }

    /// Largest time recorded.
    pub fn t_end(&self) -> f64 {
        self.final_state.t
    }
}

/// Contact-angle error `max |asin <nu, N>|` over the junctions of a ghost-filled field.
pub fn contact_angle_error(bg: &BarrierGrid, filled: &GridField, iface: &Interface) -> f64 {
    let h = bg.h();
    let mut err: f64 = 0.0;
    for s in &iface.segments {
        for p in [s.a, s.b] {
            if bg.dom.signed_distance(&p).abs() > 1e-9 * h.max(1e-300) + 1e-12 {
                continue;
            }
            // Gradient from central differences of the bilinear interpolant.
            let e = Vec2::new(0.5 * h, 0.0);
            let n = Vec2::new(0.0, 0.5 * h);
            let grad = Vec2::new(
                (filled.sample(&(p + e)) - filled.sample(&(p - e))) / h,
                (filled.sample(&(p + n)) - filled.sample(&(p - n))) / h,
            );
            if grad.norm() < 1e-12 {
                continue;
            }
            let nu = -grad.normalize();
            let nb = bg.dom.outward_normal(&p);
            err = err.max(nu.dot(&nb).clamp(-1.0, 1.0).asin().abs());
        }
    }
    err
}

const TAIL_LEN: usize = 256;

/// Evolves `K` until extinction or the horizon.
pub fn run(k: &InitialRegion, dom: &BarrierDomain, cfg: &FlowConfig) -> Result<FlowTrajectory> {
    let bg = BarrierGrid::new(dom, cfg)?;
    let phi = bg.initial_phi(k, cfg)?;
    run_from(bg, phi, k.mean_convex, cfg)
}

/// Evolves a prepared level-set function.
pub fn run_from(bg: BarrierGrid, phi: GridField, mean_convex: bool, cfg: &FlowConfig) -> Result<FlowTrajectory> {
    let h = bg.h();
    let dt = cfg.dt();
    let limit = stability_limit(h);
    if dt > limit {
        return Err(FlowError::CflViolation { dt, limit });
    }
    let delta = cfg.delta();
    let g = bg.grid.clone();
    let n = g.len();

    let mut data = phi.data.clone();
    bg.clip_outside(&mut data);
    let initial = FlowState { t: 0.0, phi: GridField { grid: g.clone(), data: data.clone() }, step: 0 };
    bg.fill_ghosts(&mut data);
    let mut scratch = data.clone();
    let mut old = data.clone();

    let mut arrival = vec![f64::NAN; n];
    for k in 0..n {
        if bg.dist[k] >= 0.0 && data[k] >= 0.0 {
            arrival[k] = f64::INFINITY;
        }
    }

    let mut outputs: Vec<f64> = cfg.output_times.iter().copied().filter(|t| *t > 0.0 && *t <= cfg.horizon).collect();
    outputs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut next_out = 0;

    let mut t = 0.0;
    let mut stepno = 0usize;
    let mut snapshots = Vec::new();
    let mut history = Vec::new();
    let mut tail: VecDeque<InterfaceRecord> = VecDeque::new();
    let mut series = Vec::new();
    let mut triggers: Vec<Trigger> = Vec::new();
    let mut pops: Vec<PopTrigger> = Vec::new();
    let mut t_ext = None;
    let mut stop = StopReason::Horizon;

    // Cells outside the active box keep their (clamped) values between
    // reinitializations, so their maximum is cached.
    let mut bx = active_box(&bg, &data, cfg.band_width);
    let mut outside_max = max_outside_box(&bg, &data, bx);
    let mut prev_max = box_max(&bg, &data, bx).max(outside_max);

    let mut field = GridField { grid: g.clone(), data: Vec::new() };
    let iface0 = bg.interface(&GridField { grid: g.clone(), data: data.clone() });
    series.push(series_row(&bg, &GridField { grid: g.clone(), data: data.clone() }, &iface0, t));
    let mut last_recorded_len = iface0.length();
    let mut prev_iface = iface0.clone();
    history.push(InterfaceRecord { t, step: 0, interface: iface0 });

    while t < cfg.horizon - 1e-15 {
        let mut dt_step = dt.min(cfg.horizon - t);
        if next_out < outputs.len() && outputs[next_out] - t < dt_step && outputs[next_out] - t > 1e-18 {
            dt_step = outputs[next_out] - t;
        }
        let Some(b) = bx else {
            // Nothing left near the band: the level set is constant.
            t += dt_step;
            stepno += 1;
            if t_ext.is_none() && prev_max < 0.0 {
                t_ext = Some(0.0);
            }
            if cfg.stop_at_extinction && prev_max < 0.0 {
                stop = StopReason::Extinct;
                break;
            }
            continue;
        };
        copy_box(&data, &mut old, b, g.nx);
        advance(&bg, &mut data, &mut scratch, b, dt_step, delta);
        stepno += 1;
        // Arrival times from sign changes inside D.
        let (i0, i1, j0, j1) = b;
        for j in j0..j1 {
            for i in i0..i1 {
                let k = j * g.nx + i;
                if bg.dist[k] < 0.0 {
                    continue;
                }
                let (a, c) = (old[k], data[k]);
                if a >= 0.0 && c < 0.0 {
                    arrival[k] = t + dt_step * a / (a - c);
                } else if a < 0.0 && c >= 0.0 {
                    arrival[k] = f64::INFINITY;
                }
            }
        }
        let cur_max = box_max(&bg, &data, bx).max(outside_max);
        if t_ext.is_none() && prev_max >= 0.0 && cur_max < 0.0 {
            t_ext = Some(t + dt_step * prev_max / (prev_max - cur_max));
        } else if cur_max >= 0.0 {
            t_ext = None;
        }
        prev_max = cur_max;
        t += dt_step;

        // Interface monitoring on the active box.
        field.data = std::mem::take(&mut data);
        let iface = {
            let dom = &bg.dom;
            let clip = |x: &Vec2| dom.signed_distance(x);
            Interface::extract_in(&field, Some(&clip), (b.0.saturating_sub(1), b.1, b.2.saturating_sub(1), b.3))
        };
        let len = iface.length();
        let (samples, _) = sample_curvature(&field, &iface);
        let (max_abs_h, argmax) = samples
            .iter()
            .map(|s| (s.h.abs(), s.x))
            .fold((0.0, Vec2::zeros()), |acc, v| if v.0 > acc.0 { v } else { acc });
        let near_wall = pop_location(&bg, &iface).is_some();
        if max_abs_h * h > cfg.blowup_threshold
            && !near_wall
            && triggers.iter().all(|tr| (tr.x - argmax).norm() > 10.0 * h)
        {
            triggers.push(Trigger { t, x: argmax, max_h_h: max_abs_h * h, step: stepno });
        }
        let plen = prev_iface.length();
        if plen > 0.0 && len < 0.75 * plen {
            if let Some(x) = pop_location(&bg, &prev_iface) {
                if pops.iter().all(|p| (p.x - x).norm() > 10.0 * h || t - p.t > 100.0 * dt) {
                    pops.push(PopTrigger { t, x, length_before: plen, length_after: len, step: stepno });
                }
                history.extend(tail.drain(..));
            }
        }
        let alert = max_abs_h * h > 0.5 * cfg.blowup_threshold
            || (last_recorded_len > 0.0 && (last_recorded_len - len).abs() > 0.1 * last_recorded_len);
        let rec = InterfaceRecord { t, step: stepno, interface: iface.clone() };
        if alert {
            history.extend(tail.drain(..));
            history.push(rec);
            last_recorded_len = len;
        } else if stepno % cfg.record_every == 0 {
            history.push(rec);
            last_recorded_len = len;
        } else {
            tail.push_back(rec);
            if tail.len() > TAIL_LEN {
                tail.pop_front();
            }
        }
        if stepno % cfg.record_every == 0 || alert {
            series.push(series_row_with(&bg, &field, &iface, &samples, t));
        }
        prev_iface = iface;
        data = std::mem::take(&mut field.data);

        if next_out < outputs.len() && t >= outputs[next_out] - 1e-14 {
            let mut st = data.clone();
            bg.clip_outside(&mut st);
            snapshots.push(FlowState { t, phi: GridField { grid: g.clone(), data: st }, step: stepno });
            while next_out < outputs.len() && outputs[next_out] <= t + 1e-14 {
                next_out += 1;
            }
        }
        if cfg.stop_at_extinction && cur_max < -2.0 * h {
            stop = StopReason::Extinct;
            break;
        }
        if stepno % cfg.reinit_every == 0 {
            if let Some(b) = active_box(&bg, &data, cfg.band_width) {
                check_band(&bg, &data, b, stepno)?;
                reinitialize(&bg, &mut data, b, 2 * cfg.band_width)?;
            }
            bx = active_box(&bg, &data, cfg.band_width);
            outside_max = max_outside_box(&bg, &data, bx);
        }
    }
    history.extend(tail.drain(..));
    history.sort_by(|a, b| a.step.cmp(&b.step));
    history.dedup_by(|a, b| a.step == b.step);
    if stop == StopReason::Horizon {
        t_ext = t_ext.filter(|_| prev_max < 0.0);
    }

    bg.clip_outside(&mut data);
    let final_state = FlowState { t, phi: GridField { grid: g.clone(), data }, step: stepno };
    let mut traj = FlowTrajectory {
        barrier: bg,
        config: cfg.clone(),
        initial,
        snapshots,
        final_state,
        arrival: GridField { grid: g, data: arrival },
        t_ext,
        stop,
        events: Vec::new(),
        triggers,
        pops,
        history,
        series,
        mean_convex,
    };
    traj.events = detect_singularity(&traj);
    Ok(traj)
}

fn copy_box(src: &[f64], dst: &mut [f64], b: BoxRange, nx: usize) {
    let (i0, i1, j0, j1) = b;
    for j in j0..j1 {
        dst[j * nx + i0..j * nx + i1].copy_from_slice(&src[j * nx + i0..j * nx + i1]);
    }
}

fn box_max(bg: &BarrierGrid, data: &[f64], b: Option<BoxRange>) -> f64 {
    let Some((i0, i1, j0, j1)) = b else { return f64::NEG_INFINITY };
    let nx = bg.grid.nx;
    let mut m = f64::NEG_INFINITY;
    for j in j0..j1 {
        for k in j * nx + i0..j * nx + i1 {
            if bg.dist[k] >= 0.0 && data[k] > m {
                m = data[k];
            }
        }
    }
    m
}

fn max_outside_box(bg: &BarrierGrid, data: &[f64], b: Option<BoxRange>) -> f64 {
    let g = &bg.grid;
    let mut m = f64::NEG_INFINITY;
    for j in 0..g.ny {
        for i in 0..g.nx {
            if let Some((i0, i1, j0, j1)) = b {
                if i >= i0 && i < i1 && j >= j0 && j < j1 {
                    continue;
                }
            }
            let k = g.idx(i, j);
            if bg.dist[k] >= 0.0 && data[k] > m {
                m = data[k];
            }
        }
    }
    m
}

fn check_band(bg: &BarrierGrid, data: &[f64], bx: BoxRange, step: usize) -> Result<()> {
    let g = &bg.grid;
    let (i0, i1, j0, j1) = bx;
    for j in j0..j1 {
        for i in i0..i1 {
            let k = g.idx(i, j);
            if bg.dist[k] < 0.0 {
                continue;
            }
            let c = data[k];
            let e = val(g, data, i as isize + 1, j as isize);
            let nn = val(g, data, i as isize, j as isize + 1);
            let crosses = (c >= 0.0) != (e >= 0.0) || (c >= 0.0) != (nn >= 0.0);
            if crosses && c.abs() >= bg.band * 0.999 {
                return Err(FlowError::BandOverflow { step });
            }
        }
    }
    Ok(())
}

/// Barrier point where a collapsing interface meets a concave wall: most of the
/// interface lies within `3h` of a wall with negative curvature.
fn pop_location(bg: &BarrierGrid, iface: &Interface) -> Option<Vec2> {
    let h = bg.h();
    let mids = iface.midpoints();
    if mids.is_empty() {
        return None;
    }
    let near: Vec<&Vec2> = mids
        .iter()
        .filter(|x| bg.dom.signed_distance(x) <= 3.0 * h && bg.dom.curvature_near(x).profile < 0.0)
        .collect();
    if (near.len() as f64) < 0.5 * mids.len() as f64 {
        return None;
    }
    // Point of the near-wall set closest to the wall.
    let x = near
        .iter()
        .min_by(|a, b| bg.dom.signed_distance(a).partial_cmp(&bg.dom.signed_distance(b)).unwrap())
        .copied()?;
    Some(bg.dom.project(x))
}

fn series_row(bg: &BarrierGrid, f: &GridField, iface: &Interface, t: f64) -> SeriesRow {
    let (samples, _) = sample_curvature(f, iface);
    series_row_with(bg, f, iface, &samples, t)
}

fn series_row_with(bg: &BarrierGrid, f: &GridField, iface: &Interface, samples: &[CurvatureSample], t: f64) -> SeriesRow {
    let min_h = samples.iter().map(|s| s.h).fold(f64::INFINITY, f64::min);
    let max_h = samples.iter().map(|s| s.h).fold(f64::NEG_INFINITY, f64::max);
    let ratio = samples
        .iter()
        .filter(|s| s.h > 0.0)
        .map(|s| s.a_norm / s.h)
        .fold(f64::NAN, f64::max);
    let mut clipped = f.clone();
    bg.clip_outside(&mut clipped.data);
    SeriesRow {
        t,
        area: region_measure(&clipped),
        perimeter: iface.measure(),
        min_h: if min_h.is_finite() { min_h } else { f64::NAN },
        max_h: if max_h.is_finite() { max_h } else { f64::NAN },
        max_a_over_h: ratio,
        contact_angle_error: contact_angle_error(bg, f, iface),
    }
}

/// Singular events from the recorded triggers: the space-time point is refined to the
/// argmax of the arrival time near each trigger. Popping detections are added with
/// their wall point.
pub fn detect_singularity(traj: &FlowTrajectory) -> Vec<SingularEvent> {
    let h = traj.h();
    let g = traj.grid();
    let bg = &traj.barrier;
    let mut events = Vec::new();
    for tr in &traj.triggers {
        let radius = 12.0 * h;
        let mut best: Option<(f64, usize, usize)> = None;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let c = g.center(i, j);
                if (c - tr.x).norm() > radius {
                    continue;
                }
                let u = traj.arrival.get(i, j);
                if !u.is_finite() {
                    continue;
                }
                if best.is_none_or(|(b, _, _)| u > b) {
                    best = Some((u, i, j));
                }
            }
        }
        let (t_star, x) = match best {
            Some((u, i, j)) => (u, g.center(i, j)),
            None => (tr.t, tr.x),
        };
        let d = bg.dom.signed_distance(&x);
        let (location, x) = if d <= 2.0 * h { (Location::Boundary, bg.dom.project(&x)) } else { (Location::Interior, x) };
        let hint = if g.mode == Mode::Axisym && x.x > 2.0 * h { TypeHint::Cylindrical } else { TypeHint::Spherical };
        if events.iter().any(|e: &SingularEvent| (e.point() - x).norm() < 4.0 * h && (e.t - t_star).abs() < 1e-9) {
            continue;
        }
        events.push(SingularEvent { x: [x.x, x.y], t: t_star, location, hint, step: tr.step });
    }
    for p in &traj.pops {
        events.push(SingularEvent {
            x: [p.x.x, p.x.y],
            t: p.t,
            location: Location::Boundary,
            hint: TypeHint::Popping,
            step: p.step,
        });
    }
    events.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
    events
}

/// Result of a discrete axiom check.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AxiomReport {
    pub pass: bool,
    pub measured: f64,
    pub threshold: f64,
    pub note: String,
}

fn snapshot_pairs<'a>(a: &'a FlowTrajectory, b: &'a FlowTrajectory) -> Vec<(&'a FlowState, &'a FlowState)> {
    let mut out = Vec::new();
    for sa in a.all_states() {
        if let Some(sb) = b.all_states().find(|sb| (sb.t - sa.t).abs() < 1e-12) {
            out.push((sa, sb));
        }
    }
    out
}

/// Distance between the sets `{phi >= 0}` of two fields on the same grid, from cell
/// centres (infinite if either is empty).
fn set_distance(a: &GridField, b: &GridField, dist: &[f64]) -> f64 {
    let g = &a.grid;
    let pa: Vec<Vec2> = (0..g.len()).filter(|k| dist[*k] >= 0.0 && a.data[*k] >= 0.0).map(|k| g.center(k % g.nx, k / g.nx)).collect();
    let pb: Vec<Vec2> = (0..g.len()).filter(|k| dist[*k] >= 0.0 && b.data[*k] >= 0.0).map(|k| g.center(k % g.nx, k / g.nx)).collect();
    if pa.is_empty() || pb.is_empty() {
        return f64::INFINITY;
    }
    pa.par_iter()
        .map(|x| pb.iter().map(|y| (x - y).norm()).fold(f64::INFINITY, f64::min))
        .reduce(|| f64::INFINITY, f64::min)
}

/// Avoidance: two flows started from disjoint sets stay apart. PASS iff the gap never
/// drops below `h`; also fails if the gap shrinks by more than `h` over time.
pub fn avoidance_check(a: &FlowTrajectory, b: &FlowTrajectory) -> AxiomReport {
    let h = a.h();
    let pairs = snapshot_pairs(a, b);
    let gaps: Vec<f64> = pairs.iter().map(|(sa, sb)| set_distance(&sa.phi, &sb.phi, &a.barrier.dist)).collect();
    let g0 = gaps.first().copied().unwrap_or(f64::INFINITY);
    if g0 < 4.0 * h {
        return AxiomReport {
            pass: false,
            measured: g0,
            threshold: 4.0 * h,
            note: "initial sets are not disjoint with gap >= 4h".into(),
        };
    }
    let finite: Vec<f64> = gaps.iter().copied().filter(|g| g.is_finite()).collect();
    let min_gap = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let mut running = f64::NEG_INFINITY;
    let mut monotone = true;
    for g in &finite {
        if *g < running - h {
            monotone = false;
        }
        running = running.max(*g);
    }
    AxiomReport {
        pass: min_gap >= h && monotone,
        measured: min_gap,
        threshold: h,
        note: format!("{} snapshot pairs, gap nondecreasing within h: {monotone}", pairs.len()),
    }
}

/// Nesting: `phi(t2) <= phi(t1) + h` inside `D` for all snapshot pairs `t2 > t1`.
pub fn nesting_check(traj: &FlowTrajectory) -> AxiomReport {
    let h = traj.h();
    let states: Vec<&FlowState> = traj.all_states().collect();
    let mut worst = f64::NEG_INFINITY;
    for (p, s1) in states.iter().enumerate() {
        for s2 in &states[p + 1..] {
            for k in 0..s1.phi.data.len() {
                if traj.barrier.dist[k] < 0.0 {
                    continue;
                }
                worst = worst.max(s2.phi.data[k] - s1.phi.data[k]);
            }
        }
    }
    AxiomReport {
        pass: worst <= h,
        measured: worst,
        threshold: h,
        note: format!("{} snapshots", states.len()),
    }
}

/// Monotone inclusion: `phi_K <= phi_L + h` at matching snapshot times.
pub fn inclusion_check(small: &FlowTrajectory, large: &FlowTrajectory) -> AxiomReport {
    let h = small.h();
    let mut worst = f64::NEG_INFINITY;
    let pairs = snapshot_pairs(small, large);
    for (a, b) in &pairs {
        for k in 0..a.phi.data.len() {
            if small.barrier.dist[k] >= 0.0 {
                worst = worst.max(a.phi.data[k] - b.phi.data[k]);
            }
        }
    }
    AxiomReport { pass: worst <= h, measured: worst, threshold: h, note: format!("{} snapshot pairs", pairs.len()) }
}

/// Residual of the arrival-time equation `div(Du/|Du|) + 1/|Du| = 0` (with the
/// rotational term in axisymmetric mode) on swept cells whose full stencil has finite
/// arrival times and `|Du| >= tol`. Cells that are excluded hold `NaN`; the number of
/// excluded swept cells with degenerate gradient is returned as well.
pub fn arrival_time_residual(traj: &FlowTrajectory, tol: f64) -> (GridField, usize) {
    let g = traj.grid().clone();
    let u = &traj.arrival;
    let h = g.h;
    let mut res = GridField { grid: g.clone(), data: vec![f64::NAN; g.len()] };
    let mut degenerate = 0;
    for j in 1..g.ny - 1 {
        for i in 0..g.nx - 1 {
            let (ii, jj) = (i as isize, j as isize);
            let mut vals = [0.0; 9];
            let mut ok = true;
            for (n, (di, dj)) in [(-1, -1), (0, -1), (1, -1), (-1, 0), (0, 0), (1, 0), (-1, 1), (0, 1), (1, 1)].iter().enumerate() {
                let (ci, cj) = (ii + di, jj + dj);
                if g.mode == Mode::Planar && ci < 0 {
                    ok = false;
                    break;
                }
                let ci = g.wrap_i(ci);
                let cj = g.wrap_j(cj);
                let k = g.idx(ci, cj);
                if traj.barrier.dist[k] < 0.0 || !u.data[k].is_finite() {
                    ok = false;
                    break;
                }
                vals[n] = u.data[k];
            }
            if !ok {
                continue;
            }
            let ux = (vals[5] - vals[3]) / (2.0 * h);
            let uy = (vals[7] - vals[1]) / (2.0 * h);
            let uxx = (vals[5] - 2.0 * vals[4] + vals[3]) / (h * h);
            let uyy = (vals[7] - 2.0 * vals[4] + vals[1]) / (h * h);
            let uxy = (vals[8] - vals[6] - vals[2] + vals[0]) / (4.0 * h * h);
            let g2 = ux * ux + uy * uy;
            if g2.sqrt() < tol {
                degenerate += 1;
                continue;
            }
            let gn = g2.sqrt();
            let mut div = (uxx * uy * uy - 2.0 * ux * uy * uxy + uyy * ux * ux) / (g2 * gn);
            if g.mode == Mode::Axisym {
                let r = g.origin.x + (i as f64 + 0.5) * h;
                div += ux / (gn * r);
            }
            res.set(i, j, div + 1.0 / gn);
        }
    }
    (res, degenerate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RegionShape;
    use approx::assert_abs_diff_eq;

    fn disc_run(h: f64, horizon: f64) -> FlowTrajectory {
        let dom = BarrierDomain::disc(Vec2::zeros(), 2.0);
        let k = InitialRegion::new(RegionShape::Disc { center: Vec2::zeros(), radius: 0.5 }, true);
        let cfg = FlowConfig::new(h, horizon).with_outputs(vec![0.05, 0.1]);
        run(&k, &dom, &cfg).unwrap()
    }

    fn radius(traj: &FlowTrajectory, st: &FlowState) -> f64 {
        let iface = traj.interface_of(st);
        let m = iface.midpoints();
        m.iter().map(|x| x.norm()).sum::<f64>() / m.len() as f64
    }

    #[test]
    fn initial_phi_is_signed_distance() {
        let dom = BarrierDomain::disc(Vec2::zeros(), 2.0);
        let k = InitialRegion::new(RegionShape::Disc { center: Vec2::zeros(), radius: 0.5 }, true);
        let cfg = FlowConfig::new(1.0 / 32.0, 0.0);
        let bg = BarrierGrid::new(&dom, &cfg).unwrap();
        let phi = bg.initial_phi(&k, &cfg).unwrap();
        for j in 0..bg.grid.ny {
            for i in 0..bg.grid.nx {
                let x = bg.grid.center(i, j);
                let d = 0.5 - x.norm();
                if d.abs() < 6.0 * cfg.h {
                    assert!((phi.get(i, j) - d).abs() < 0.2 * cfg.h, "{x:?}");
                }
            }
        }
    }

    #[test]
    fn shrinking_circle_radius_law() {
        let h = 1.0 / 64.0;
        let traj = disc_run(h, 0.1);
        let st = traj.snapshots.last().unwrap();
        assert_abs_diff_eq!(st.t, 0.1, epsilon = 1e-12);
        let r = radius(&traj, st);
        let exact = (0.25_f64 - 0.2).sqrt();
        assert!((r - exact).abs() < 2.0 * h, "r = {r}");
    }

    #[test]
    fn cfl_violation_is_reported() {
        let dom = BarrierDomain::disc(Vec2::zeros(), 2.0);
        let k = InitialRegion::new(RegionShape::Disc { center: Vec2::zeros(), radius: 0.5 }, true);
        let mut cfg = FlowConfig::new(1.0 / 16.0, 0.1);
        cfg.dt_factor = 0.3;
        assert!(matches!(run(&k, &dom, &cfg), Err(FlowError::CflViolation { .. })));
        let bg = BarrierGrid::new(&dom, &FlowConfig::new(1.0 / 16.0, 0.1)).unwrap();
        let phi = bg.initial_phi(&k, &cfg).unwrap();
        let st = FlowState { t: 0.0, phi, step: 0 };
        assert!(matches!(step(&bg, &st, 0.3 / 256.0, 1.0 / 16.0), Err(FlowError::CflViolation { .. })));
    }

    #[test]
    fn static_line_perpendicular_to_barrier_is_stationary() {
        let h = 1.0 / 32.0;
        let dom = BarrierDomain::halfplane(Vec2::new(1.0, 0.0), 0.0);
        let k = InitialRegion::new(RegionShape::Band { normal: Vec2::new(0.0, 1.0), lo: -10.0, hi: 0.0 }, true);
        let cfg = FlowConfig::new(h, 0.0).with_window(Bounds::new(Vec2::new(-0.2, -0.5), Vec2::new(1.0, 0.5)));
        let bg = BarrierGrid::new(&dom, &cfg).unwrap();
        let phi = bg.initial_phi(&k, &cfg).unwrap();
        let st = FlowState { t: 0.0, phi: phi.clone(), step: 0 };
        let next = step(&bg, &st, cfg.dt(), h).unwrap();
        for j in 0..bg.grid.ny {
            for i in 0..bg.grid.nx {
                let x = bg.grid.center(i, j);
                if x.y.abs() < 0.2 && x.x > 0.0 && x.x < 0.8 {
                    assert!((next.phi.get(i, j) - phi.get(i, j)).abs() < h * h, "{x:?}");
                }
            }
        }
    }

    #[test]
    fn disc_extinction_and_arrival_time() {
        let h = 1.0 / 64.0;
        let traj = disc_run(h, 0.2);
        assert_eq!(traj.stop, StopReason::Extinct);
        let t = traj.t_ext.unwrap();
        assert!((t - 0.125).abs() < 0.05 * 0.125, "T_ext = {t}");
        // Arrival time matches (r0^2 - |x|^2)/2 away from the centre.
        let g = traj.grid();
        for j in 0..g.ny {
            for i in 0..g.nx {
                let x = g.center(i, j);
                let rho = x.norm();
                if rho > 0.15 && rho < 0.45 {
                    let u = traj.arrival.get(i, j);
                    assert!((u - (0.25 - rho * rho) / 2.0).abs() < 0.01, "{x:?} {u}");
                }
            }
        }
        let events = &traj.events;
        assert_eq!(events.len(), 1, "{events:?}");
        assert!(events[0].point().norm() < 3.0 * h);
        assert_eq!(events[0].location, Location::Interior);
        assert!(nesting_check(&traj).pass);
    }

    #[test]
    fn halfcircle_keeps_right_contact_angle() {
        let h = 1.0 / 64.0;
        let dom = BarrierDomain::halfplane(Vec2::new(1.0, 0.0), 0.0);
        let k = InitialRegion::new(RegionShape::HalfDisc { foot: Vec2::zeros(), radius: 0.5 }, true);
        let cfg = FlowConfig::new(h, 0.1)
            .with_window(Bounds::new(Vec2::new(-0.1, -0.7), Vec2::new(0.7, 0.7)))
            .with_outputs(vec![0.02, 0.05, 0.1]);
        let traj = run(&k, &dom, &cfg).unwrap();
        for st in &traj.snapshots {
            let f = traj.filled(st);
            let iface = traj.barrier.interface(&f);
            let err = contact_angle_error(&traj.barrier, &f, &iface);
            assert!(err < 0.05, "t = {}: {err}", st.t);
        }
        let st = traj.snapshots.last().unwrap();
        let m = traj.interface_of(st).midpoints();
        let r = m.iter().map(|x| x.norm()).sum::<f64>() / m.len() as f64;
        assert!((r - 0.05_f64.sqrt()).abs() < 2.0 * h, "{r}");
    }

    #[test]
    fn arrival_residual_small_on_disc() {
        let h = 1.0 / 64.0;
        let traj = disc_run(h, 0.2);
        let (res, _) = arrival_time_residual(&traj, 1e-3);
        let g = traj.grid();
        let mut worst: f64 = 0.0;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let rho = g.center(i, j).norm();
                if rho > 0.15 && rho < 0.45 {
                    let v = res.get(i, j);
                    if v.is_finite() {
                        worst = worst.max(v.abs());
                    }
                }
            }
        }
        assert!(worst < 0.5, "{worst}");
    }
}
