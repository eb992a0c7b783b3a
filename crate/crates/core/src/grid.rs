//! Split-operator Schrödinger solver on a periodic 2D grid, one array per
//! which-way label, used as an independent check of the analytic field.

use std::fmt;
use std::io::{Read, Write};
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::scenario::Scenario;
use crate::wavefield::{PhysicalConstants, WaveField, WwLabel};
use crate::Vec2;

pub type Potential = Arc<dyn Fn(&Vec2) -> f64 + Send + Sync>;

/// Cells next to the boundary watched for wrap-around contamination.
pub const BOUNDARY_CELLS: usize = 4;
pub const INIT_BOUNDARY_LIMIT: f64 = 1e-12;
pub const STEP_BOUNDARY_LIMIT: f64 = 1e-8;
/// Absolute tolerance on the discrete norm after sampling.
pub const INIT_NORM_TOLERANCE: f64 = 1e-8;
/// Fused free steps between boundary checks.
const FREE_CHECK_INTERVAL: usize = 16;

#[derive(Clone)]
pub struct GridConfig {
    /// Half-widths of the domain.
    pub extent: Vec2,
    pub center: Vec2,
    /// Points per axis, each a power of two.
    pub points: [usize; 2],
    pub dt: f64,
    pub external_potential: Option<Potential>,
}

impl fmt::Debug for GridConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridConfig")
            .field("extent", &self.extent)
            .field("center", &self.center)
            .field("points", &self.points)
            .field("dt", &self.dt)
            .field("external_potential", &self.external_potential.as_ref().map(|_| "<fn>"))
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSizing {
    /// Spacing as a fraction of the smallest initial width.
    pub spacing_fraction: f64,
    /// Margin around the packet centers, in widths at the window end.
    pub margin_sigmas: f64,
    /// Time step as a fraction of the stability bound `m dx²/(π ħ)`.
    pub dt_fraction: f64,
    pub max_points: usize,
}

impl Default for GridSizing {
    fn default() -> Self {
        Self { spacing_fraction: 0.95 / 8.0, margin_sigmas: 8.0, dt_fraction: 0.9, max_points: 2048 }
    }
}

impl GridConfig {
    pub fn spacing(&self) -> Vec2 {
        Vec2::new(2.0 * self.extent.x / self.points[0] as f64, 2.0 * self.extent.y / self.points[1] as f64)
    }

    pub fn coordinate(&self, i: usize, j: usize) -> Vec2 {
        let d = self.spacing();
        Vec2::new(self.center.x - self.extent.x + i as f64 * d.x, self.center.y - self.extent.y + j as f64 * d.y)
    }

    pub fn cell_area(&self) -> f64 {
        let d = self.spacing();
        d.x * d.y
    }

    pub fn validate(&self, sigma0: f64, c: &PhysicalConstants) -> Result<()> {
        ensure_positive("extent.x", self.extent.x)?;
        ensure_positive("extent.y", self.extent.y)?;
        ensure_positive("dt", self.dt)?;
        for (axis, n) in self.points.iter().enumerate() {
            if *n < 2 * BOUNDARY_CELLS + 2 || !n.is_power_of_two() {
                return Err(Error::InvalidParameter { field: "points", reason: format!("axis {axis}: {n} is not a power of two ≥ 16") });
            }
        }
        let d = self.spacing();
        let h = d.x.max(d.y);
        if !(h < sigma0 / 8.0) {
            return Err(Error::InvalidParameter { field: "points", reason: format!("spacing {h} must be below σ0/8 = {}", sigma0 / 8.0) });
        }
        let bound = c.mass * d.x.min(d.y).powi(2) / (std::f64::consts::PI * c.hbar);
        if !(self.dt < bound) {
            return Err(Error::InvalidParameter { field: "dt", reason: format!("{} must be below m·dx²/(πħ) = {bound}", self.dt) });
        }
        Ok(())
    }

    /// Smallest grid that holds every packet of `field` over `[t_a, t_b]`.
    pub fn covering(field: &WaveField, t_a: f64, t_b: f64, sizing: &GridSizing) -> Result<Self> {
        let c = field.constants();
        let terms = field.terms();
        if terms.is_empty() {
            return Err(Error::Precondition("field has no terms".into()));
        }
        let sigma0 = terms.iter().map(|(_, p)| p.sigma0).fold(f64::INFINITY, f64::min);
        let sigma_end = terms.iter().map(|(_, p)| p.width(t_a, c).max(p.width(t_b, c))).fold(0.0, f64::max);
        let mut lo = Vec2::repeat(f64::INFINITY);
        let mut hi = Vec2::repeat(f64::NEG_INFINITY);
        for (_, p) in terms {
            for t in [t_a, t_b] {
                let x = p.center(t, c);
                lo = lo.inf(&x);
                hi = hi.sup(&x);
            }
        }
        let h = sigma0 * sizing.spacing_fraction;
        let half_span = (hi - lo) * 0.5 + Vec2::repeat(sizing.margin_sigmas * sigma_end);
        let mut points = [0usize; 2];
        for axis in 0..2 {
            let n = ((2.0 * half_span[axis] / h).ceil() as usize).next_power_of_two().max(16);
            if n > sizing.max_points {
                return Err(Error::SupportOverflow { ratio: n as f64 / sizing.max_points as f64, limit: 1.0 });
            }
            points[axis] = n;
        }
        let extent = Vec2::new(points[0] as f64 * h / 2.0, points[1] as f64 * h / 2.0);
        let dt = sizing.dt_fraction * c.mass * h * h / (std::f64::consts::PI * c.hbar);
        Ok(Self { extent, center: (lo + hi) * 0.5, points, dt, external_potential: None })
    }
}

#[derive(Clone)]
struct Spectral {
    fx: Arc<dyn Fft<f64>>,
    fy: Arc<dyn Fft<f64>>,
    ix: Arc<dyn Fft<f64>>,
    iy: Arc<dyn Fft<f64>>,
    kx: Vec<f64>,
    ky: Vec<f64>,
}

fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let m = if i < n / 2 { i as f64 } else { i as f64 - n as f64 };
            2.0 * std::f64::consts::PI * m / length
        })
        .collect()
}

impl Spectral {
    fn new(cfg: &GridConfig) -> Self {
        let mut planner = FftPlanner::new();
        let [nx, ny] = cfg.points;
        Self {
            fx: planner.plan_fft_forward(nx),
            fy: planner.plan_fft_forward(ny),
            ix: planner.plan_fft_inverse(nx),
            iy: planner.plan_fft_inverse(ny),
            kx: wavenumbers(nx, 2.0 * cfg.extent.x),
            ky: wavenumbers(ny, 2.0 * cfg.extent.y),
        }
    }

    fn transform(&self, a: &mut Array2<Complex64>, inverse: bool) {
        let (nx, ny) = a.dim();
        let (fx, fy) = if inverse { (&self.ix, &self.iy) } else { (&self.fx, &self.fy) };
        let data = a.as_slice_mut().expect("standard layout");
        // Rows are contiguous along y.
        data.par_chunks_mut(ny).for_each(|row| fy.process(row));
        let mut cols = vec![Complex64::new(0.0, 0.0); nx * ny];
        cols.par_chunks_mut(nx).enumerate().for_each(|(j, col)| {
            for i in 0..nx {
                col[i] = data[i * ny + j];
            }
            fx.process(col);
        });
        let scale = if inverse { 1.0 / (nx * ny) as f64 } else { 1.0 };
        data.par_chunks_mut(ny).enumerate().for_each(|(i, row)| {
            for j in 0..ny {
                row[j] = cols[j * nx + i] * scale;
            }
        });
    }

    fn kinetic_phase(&self, c: &PhysicalConstants, dt: f64) -> Array2<Complex64> {
        let f = c.hbar * dt / (2.0 * c.mass);
        Array2::from_shape_fn((self.kx.len(), self.ky.len()), |(i, j)| Complex64::from_polar(1.0, -f * (self.kx[i].powi(2) + self.ky[j].powi(2))))
    }

    fn gradient(&self, psi: &Array2<Complex64>) -> (Array2<Complex64>, Array2<Complex64>) {
        let mut hat = psi.clone();
        self.transform(&mut hat, false);
        let mut gx = hat.clone();
        let mut gy = hat;
        let i = Complex64::i();
        gx.indexed_iter_mut().for_each(|((a, _), v)| *v *= i * self.kx[a]);
        gy.indexed_iter_mut().for_each(|((_, b), v)| *v *= i * self.ky[b]);
        self.transform(&mut gx, true);
        self.transform(&mut gy, true);
        (gx, gy)
    }
}

#[derive(Clone)]
pub struct GridState {
    labels: Vec<WwLabel>,
    arrays: Vec<Array2<Complex64>>,
    time: f64,
    cfg: GridConfig,
    constants: PhysicalConstants,
    spectral: Spectral,
}

impl fmt::Debug for GridState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridState").field("labels", &self.labels).field("time", &self.time).field("cfg", &self.cfg).finish()
    }
}

fn boundary_ratio(a: &Array2<Complex64>, peak: f64) -> f64 {
    let (nx, ny) = a.dim();
    let b = BOUNDARY_CELLS;
    let mut worst = 0.0f64;
    for ((i, j), v) in a.indexed_iter() {
        if i < b || i >= nx - b || j < b || j >= ny - b {
            worst = worst.max(v.norm_sqr());
        }
    }
    if peak > 0.0 {
        worst / peak
    } else {
        0.0
    }
}

pub fn init_from_analytic(field: &WaveField, cfg: GridConfig, t: f64) -> Result<GridState> {
    let c = *field.constants();
    let sigma0 = field.terms().iter().map(|(_, p)| p.sigma0).fold(f64::INFINITY, f64::min);
    cfg.validate(sigma0, &c)?;
    let [nx, ny] = cfg.points;
    let labels = field.labels();
    let mut arrays = Vec::with_capacity(labels.len());
    for w in &labels {
        let vals: Vec<Complex64> = (0..nx * ny).into_par_iter().map(|k| field.evaluate(*w, &cfg.coordinate(k / ny, k % ny), t)).collect();
        arrays.push(Array2::from_shape_vec((nx, ny), vals).expect("shape"));
    }
    let spectral = Spectral::new(&cfg);
    let state = GridState { labels, arrays, time: t, cfg, constants: c, spectral };
    let ratio = state.boundary_ratio();
    if ratio >= INIT_BOUNDARY_LIMIT {
        return Err(Error::SupportOverflow { ratio, limit: INIT_BOUNDARY_LIMIT });
    }
    let drift = (state.norm() - field.norm_at(t)).abs();
    if drift > INIT_NORM_TOLERANCE {
        return Err(Error::Precondition(format!("discrete norm differs from analytic by {drift}")));
    }
    Ok(state)
}

impl GridState {
    pub fn labels(&self) -> &[WwLabel] {
        &self.labels
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn config(&self) -> &GridConfig {
        &self.cfg
    }

    pub fn array(&self, w: WwLabel) -> Option<&Array2<Complex64>> {
        self.labels.iter().position(|l| *l == w).map(|i| &self.arrays[i])
    }

    pub fn arrays(&self) -> impl Iterator<Item = (WwLabel, &Array2<Complex64>)> {
        self.labels.iter().copied().zip(self.arrays.iter())
    }

    pub fn norm_of(&self, w: WwLabel) -> f64 {
        self.array(w).map_or(0.0, |a| a.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.cfg.cell_area())
    }

    pub fn norm(&self) -> f64 {
        self.labels.iter().map(|w| self.norm_of(*w)).sum()
    }

    /// Label-marginal density on the grid.
    pub fn density(&self) -> Array2<f64> {
        let mut p = Array2::zeros((self.cfg.points[0], self.cfg.points[1]));
        for a in &self.arrays {
            p.zip_mut_with(a, |d, v| *d += v.norm_sqr());
        }
        p
    }

    pub fn peak_density(&self) -> f64 {
        self.density().iter().copied().fold(0.0, f64::max)
    }

    fn boundary_ratio(&self) -> f64 {
        let peak = self.peak_density();
        self.arrays.iter().map(|a| boundary_ratio(a, peak)).fold(0.0, f64::max)
    }

    fn check_boundary(&self) -> Result<()> {
        let ratio = self.boundary_ratio();
        if ratio > STEP_BOUNDARY_LIMIT {
            return Err(Error::BoundaryContamination { ratio, t: self.time });
        }
        Ok(())
    }

    /// Advances `n_steps` of size `cfg.dt` by Strang splitting. Without an
    /// external potential the kinetic half-steps of consecutive steps are
    /// fused and the state stays in k-space between boundary checks.
    pub fn step(mut self, n_steps: usize) -> Result<Self> {
        let dt = self.cfg.dt;
        self.step_with(n_steps, dt)?;
        Ok(self)
    }

    /// Steps to time `t` with the largest uniform step not exceeding `cfg.dt`.
    pub fn evolve_to(mut self, t: f64) -> Result<Self> {
        let span = t - self.time;
        if span == 0.0 {
            return Ok(self);
        }
        let n = (span.abs() / self.cfg.dt).ceil() as usize;
        self.step_with(n, span / n as f64)?;
        self.time = t;
        Ok(self)
    }

    fn step_with(&mut self, n_steps: usize, dt: f64) -> Result<()> {
        if n_steps == 0 {
            return Ok(());
        }
        let c = self.constants;
        let t0 = self.time;
        match self.cfg.external_potential.clone() {
            None => {
                let phase = self.spectral.kinetic_phase(&c, dt);
                let mut done = 0;
                while done < n_steps {
                    let chunk = FREE_CHECK_INTERVAL.min(n_steps - done);
                    for a in &mut self.arrays {
                        self.spectral.transform(a, false);
                        for _ in 0..chunk {
                            a.zip_mut_with(&phase, |v, p| *v *= p);
                        }
                        self.spectral.transform(a, true);
                    }
                    done += chunk;
                    self.time = t0 + done as f64 * dt;
                    self.check_boundary()?;
                }
            }
            Some(v) => {
                let half = self.spectral.kinetic_phase(&c, 0.5 * dt);
                let cfg = &self.cfg;
                let [nx, ny] = cfg.points;
                let vphase = Array2::from_shape_fn((nx, ny), |(i, j)| Complex64::from_polar(1.0, -v(&cfg.coordinate(i, j)) * dt / c.hbar));
                for s in 0..n_steps {
                    for a in &mut self.arrays {
                        self.spectral.transform(a, false);
                        a.zip_mut_with(&half, |v, p| *v *= p);
                        self.spectral.transform(a, true);
                        a.zip_mut_with(&vphase, |v, p| *v *= p);
                        self.spectral.transform(a, false);
                        a.zip_mut_with(&half, |v, p| *v *= p);
                        self.spectral.transform(a, true);
                    }
                    self.time = t0 + (s + 1) as f64 * dt;
                    self.check_boundary()?;
                }
            }
        }
        Ok(())
    }

    /// Velocity `(ħ/m) Im(ψ*∇ψ)/|ψ|²` of one label sheet on the grid, by spectral differentiation.
    pub fn velocity_field(&self, w: WwLabel) -> Option<(Array2<f64>, Array2<f64>)> {
        let psi = self.array(w)?;
        let (gx, gy) = self.spectral.gradient(psi);
        let hm = self.constants.hbar_over_m();
        let vel = |g: &Array2<Complex64>| {
            let mut out = Array2::zeros(psi.dim());
            ndarray::Zip::from(&mut out).and(psi).and(g).for_each(|o, p, g| {
                let d = p.norm_sqr();
                *o = if d > 0.0 { hm * (p.conj() * g).im / d } else { 0.0 };
            });
            out
        };
        Some((vel(&gx), vel(&gy)))
    }

    /// Probability current summed over labels.
    pub fn current(&self) -> (Array2<f64>, Array2<f64>) {
        let dims = (self.cfg.points[0], self.cfg.points[1]);
        let mut jx = Array2::zeros(dims);
        let mut jy = Array2::zeros(dims);
        let hm = self.constants.hbar_over_m();
        for psi in &self.arrays {
            let (gx, gy) = self.spectral.gradient(psi);
            ndarray::Zip::from(&mut jx).and(psi).and(&gx).for_each(|j, p, g| *j += hm * (p.conj() * g).im);
            ndarray::Zip::from(&mut jy).and(psi).and(&gy).for_each(|j, p, g| *j += hm * (p.conj() * g).im);
        }
        (jx, jy)
    }

    fn divergence(&self, jx: &Array2<f64>, jy: &Array2<f64>) -> Array2<f64> {
        let i = Complex64::i();
        let mut hx = jx.mapv(|v| Complex64::new(v, 0.0));
        let mut hy = jy.mapv(|v| Complex64::new(v, 0.0));
        self.spectral.transform(&mut hx, false);
        self.spectral.transform(&mut hy, false);
        let sp = &self.spectral;
        ndarray::Zip::indexed(&mut hx).and(&hy).for_each(|(a, b), x, y| *x = i * sp.kx[a] * *x + i * sp.ky[b] * *y);
        self.spectral.transform(&mut hx, true);
        hx.mapv(|v| v.re)
    }

    /// Band-limited (trigonometric) interpolation of every label sheet at `x`.
    fn interpolate(&self, hats: &[Array2<Complex64>], x: &Vec2) -> Vec<Complex64> {
        let origin = self.cfg.center - self.cfg.extent;
        let rel = x - origin;
        let ex: Vec<Complex64> = self.spectral.kx.iter().map(|k| Complex64::from_polar(1.0, k * rel.x)).collect();
        let ey: Vec<Complex64> = self.spectral.ky.iter().map(|k| Complex64::from_polar(1.0, k * rel.y)).collect();
        let norm = 1.0 / (self.cfg.points[0] * self.cfg.points[1]) as f64;
        hats.iter()
            .map(|h| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (i, row) in h.outer_iter().enumerate() {
                    let mut r = Complex64::new(0.0, 0.0);
                    for (v, e) in row.iter().zip(&ey) {
                        r += v * e;
                    }
                    acc += r * ex[i];
                }
                acc * norm
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuityResidual {
    pub max_residual: f64,
    /// Peak density at the probe time.
    pub peak: f64,
    pub points_used: usize,
    pub points_excluded: usize,
}

/// Max-norm of `∂P/∂t + ∇·j` over interior points where `P > 1e-6·peak`,
/// with `∂P/∂t` from a symmetric pair of oracle steps of size `dt_probe`.
pub fn continuity_residual(state: &GridState, dt_probe: f64) -> Result<ContinuityResidual> {
    if !(dt_probe > 0.0) || !dt_probe.is_finite() {
        return Err(Error::Precondition(format!("dt_probe must be positive, got {dt_probe}")));
    }
    let t = state.time;
    let plus = state.clone().evolve_to(t + dt_probe)?;
    let minus = state.clone().evolve_to(t - dt_probe)?;
    let dpdt = (plus.density() - minus.density()) / (2.0 * dt_probe);
    let (jx, jy) = state.current();
    let div = state.divergence(&jx, &jy);
    let p = state.density();
    let peak = p.iter().copied().fold(0.0, f64::max);
    let (nx, ny) = p.dim();
    let b = BOUNDARY_CELLS;
    let mut worst = 0.0f64;
    let (mut used, mut excluded) = (0, 0);
    for i in b..nx - b {
        for j in b..ny - b {
            if p[[i, j]] > 1e-6 * peak {
                used += 1;
                worst = worst.max((dpdt[[i, j]] + div[[i, j]]).abs());
            } else {
                excluded += 1;
            }
        }
    }
    Ok(ContinuityResidual { max_residual: worst, peak, points_used: used, points_excluded: excluded })
}

/// Label-marginal density at `samples` equally spaced points from `a` to `b`.
pub fn fringe_scan(state: &GridState, a: Vec2, b: Vec2, samples: usize) -> Vec<f64> {
    let hats: Vec<Array2<Complex64>> = state
        .arrays
        .iter()
        .map(|psi| {
            let mut h = psi.clone();
            state.spectral.transform(&mut h, false);
            h
        })
        .collect();
    (0..samples)
        .into_par_iter()
        .map(|s| {
            let f = if samples > 1 { s as f64 / (samples - 1) as f64 } else { 0.5 };
            let x = a + (b - a) * f;
            state.interpolate(&hats, &x).iter().map(|v| v.norm_sqr()).sum()
        })
        .collect()
}

/// Relative L2 distance between the grid and the analytic field at the grid time.
pub fn l2_error(state: &GridState, field: &WaveField) -> f64 {
    let cfg = &state.cfg;
    let ny = cfg.points[1];
    let t = state.time;
    let mut labels = field.labels();
    for w in &state.labels {
        if !labels.contains(w) {
            labels.push(*w);
        }
    }
    let (num, den) = labels
        .iter()
        .map(|w| {
            let arr = state.array(*w);
            (0..cfg.points[0] * ny)
                .into_par_iter()
                .map(|k| {
                    let exact = field.evaluate(*w, &cfg.coordinate(k / ny, k % ny), t);
                    let g = arr.map_or(Complex64::new(0.0, 0.0), |a| a[[k / ny, k % ny]]);
                    ((g - exact).norm_sqr(), exact.norm_sqr())
                })
                .collect::<Vec<_>>()
                .into_iter()
                .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1))
        })
        .fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    (num / den).sqrt()
}

/// Largest relative velocity error at grid points whose sheet density exceeds
/// `density_fraction` of the peak marginal density.
pub fn velocity_error(state: &GridState, field: &WaveField, density_fraction: f64) -> Result<f64> {
    let cfg = &state.cfg;
    let t = state.time;
    let peak = state.peak_density();
    let mut worst = 0.0f64;
    for (w, psi) in state.arrays() {
        let (vx, vy) = state.velocity_field(w).expect("label present");
        let idx: Vec<(usize, usize)> = psi.indexed_iter().filter(|(_, v)| v.norm_sqr() > density_fraction * peak).map(|(ij, _)| ij).collect();
        let e = idx
            .par_iter()
            .map(|&(i, j)| {
                let exact = field.velocity(w, &cfg.coordinate(i, j), t)?;
                let d = Vec2::new(vx[[i, j]], vy[[i, j]]) - exact;
                Ok(d.norm() / exact.norm())
            })
            .collect::<Result<Vec<f64>>>()?;
        worst = e.into_iter().fold(worst, f64::max);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegReport {
    pub start: f64,
    pub end: f64,
    pub points: [usize; 2],
    pub steps: usize,
    pub l2_error: f64,
    pub velocity_error: f64,
    pub norm_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FringeProfile {
    pub time: f64,
    pub start: Vec2,
    pub end: Vec2,
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub legs: Vec<LegReport>,
    pub max_l2_error: f64,
    pub max_velocity_error: f64,
    pub fringe: FringeProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    pub sizing: GridSizing,
    pub scan_samples: usize,
    /// Scan half-length in packet widths at the overlap time.
    pub scan_half_widths: f64,
    pub velocity_density_fraction: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { sizing: GridSizing::default(), scan_samples: 257, scan_half_widths: 0.6, velocity_density_fraction: 1e-6 }
    }
}

/// Scan segment along the splitter normal through the arms' meeting point at the overlap time.
pub fn scan_segment(scenario: &Scenario, half_widths: f64) -> (Vec2, Vec2, f64) {
    let t = scenario.overlap_time();
    let mid = (scenario.trace.arrival_points[0] + scenario.trace.arrival_points[1]) * 0.5;
    let sigma = scenario.geometry.source.width(t, &scenario.geometry.constants);
    let n = scenario.geometry.beam_splitter.unit_normal * (half_widths * sigma);
    (mid - n, mid + n, t)
}

/// Milestones of the oracle run: field start, every event time, the overlap time and the final time.
pub fn oracle_milestones(scenario: &Scenario) -> Vec<f64> {
    let (start, overlap, end) = (scenario.timeline.start(), scenario.overlap_time(), scenario.final_time());
    let mut m = vec![start];
    m.extend(scenario.timeline.event_times_between(start, end));
    m.push(overlap);
    m.push(end);
    m.sort_by(f64::total_cmp);
    m.dedup();
    m
}

/// Re-initializes the grid from the analytic field after each event and
/// compares free evolution on every leg; scans fringes at the overlap time.
pub fn run_oracle(scenario: &Scenario, opts: &OracleOptions) -> Result<OracleReport> {
    let milestones = oracle_milestones(scenario);
    let mut legs = Vec::new();
    let mut fringe = None;
    let (scan_a, scan_b, scan_t) = scan_segment(scenario, opts.scan_half_widths);
    for pair in milestones.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let field = scenario.timeline.field_at(a)?;
        let cfg = GridConfig::covering(field, a, b, &opts.sizing)?;
        let points = cfg.points;
        let steps = ((b - a) / cfg.dt).ceil() as usize;
        let state = init_from_analytic(field, cfg, a)?;
        let n0 = state.norm();
        let state = state.evolve_to(b)?;
        legs.push(LegReport {
            start: a,
            end: b,
            points,
            steps,
            l2_error: l2_error(&state, field),
            velocity_error: velocity_error(&state, field, opts.velocity_density_fraction)?,
            norm_drift: (state.norm() - n0).abs(),
        });
        if b == scan_t {
            fringe = Some(FringeProfile { time: b, start: scan_a, end: scan_b, samples: fringe_scan(&state, scan_a, scan_b, opts.scan_samples) });
        }
    }
    let fringe = fringe.ok_or_else(|| Error::Precondition("overlap time not reached by the oracle".into()))?;
    Ok(OracleReport {
        max_l2_error: legs.iter().map(|l| l.l2_error).fold(0.0, f64::max),
        max_velocity_error: legs.iter().map(|l| l.velocity_error).fold(0.0, f64::max),
        legs,
        fringe,
    })
}

const DUMP_MAGIC: &[u8; 8] = b"BOHMGRID";
const DUMP_VERSION: u32 = 1;

fn label_code(w: WwLabel) -> u8 {
    match w {
        WwLabel::None => 0,
        WwLabel::R => 1,
        WwLabel::T => 2,
    }
}

/// Writes the state as: magic, version, label count, nx, ny, extent, center,
/// time, label codes, then each sheet row-major (x-major) as little-endian
/// `(re, im)` f64 pairs.
pub fn write_dump<W: Write>(state: &GridState, mut out: W) -> Result<()> {
    let cfg = &state.cfg;
    out.write_all(DUMP_MAGIC)?;
    out.write_all(&DUMP_VERSION.to_le_bytes())?;
    out.write_all(&(state.labels.len() as u32).to_le_bytes())?;
    for n in cfg.points {
        out.write_all(&(n as u64).to_le_bytes())?;
    }
    for v in [cfg.extent.x, cfg.extent.y, cfg.center.x, cfg.center.y, state.time] {
        out.write_all(&v.to_le_bytes())?;
    }
    for w in &state.labels {
        out.write_all(&[label_code(*w)])?;
    }
    let mut buf = Vec::with_capacity(cfg.points[0] * cfg.points[1] * 16);
    for a in &state.arrays {
        buf.clear();
        for v in a.iter() {
            buf.extend_from_slice(&v.re.to_le_bytes());
            buf.extend_from_slice(&v.im.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridDump {
    pub points: [usize; 2],
    pub extent: Vec2,
    pub center: Vec2,
    pub time: f64,
    pub sheets: Vec<(WwLabel, Array2<Complex64>)>,
}

pub fn read_dump<R: Read>(mut input: R) -> Result<GridDump> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| Error::Io("truncated grid dump".into()))?;
        pos += n;
        Ok(s)
    };
    if take(8)? != DUMP_MAGIC {
        return Err(Error::Io("not a grid dump".into()));
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().expect("4 bytes"));
    let u64_at = |s: &[u8]| u64::from_le_bytes(s.try_into().expect("8 bytes"));
    let f64_at = |s: &[u8]| f64::from_le_bytes(s.try_into().expect("8 bytes"));
    let version = u32_at(take(4)?);
    if version != DUMP_VERSION {
        return Err(Error::Io(format!("unsupported dump version {version}")));
    }
    let nlabels = u32_at(take(4)?) as usize;
    let nx = u64_at(take(8)?) as usize;
    let ny = u64_at(take(8)?) as usize;
    let mut f = [0.0; 5];
    for v in &mut f {
        *v = f64_at(take(8)?);
    }
    let codes = take(nlabels)?.to_vec();
    let mut sheets = Vec::with_capacity(nlabels);
    for code in codes {
        let w = match code {
            0 => WwLabel::None,
            1 => WwLabel::R,
            2 => WwLabel::T,
            other => return Err(Error::Io(format!("unknown label code {other}"))),
        };
        let raw = take(nx * ny * 16)?;
        let vals: Vec<Complex64> = raw.chunks_exact(16).map(|c| Complex64::new(f64_at(&c[..8]), f64_at(&c[8..]))).collect();
        sheets.push((w, Array2::from_shape_vec((nx, ny), vals).expect("shape")));
    }
    Ok(GridDump { points: [nx, ny], extent: Vec2::new(f[0], f[1]), center: Vec2::new(f[2], f[3]), time: f[4], sheets })
}
