//! Diagnostics that turn fields, grids and ensembles into checkable numbers.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::Plane2D;
use crate::trajectories::{detect_projected_pair_crossings, CrossingMarker, Trajectory};
use crate::wavefield::{WaveField, WwLabel};
use crate::Vec2;

/// Sampled checks only use points above this fraction of the peak density.
pub const SAMPLE_DENSITY_FRACTION: f64 = 1e-6;
pub const MIN_VISIBILITY_SAMPLES: usize = 16;
const GOLDEN_ANGLE: f64 = 2.399_963_229_728_653;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Simple,
    Ww,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryReport {
    /// Largest `|Ψ(w, x) − s Ψ(w̄, Rx)|` relative to the local amplitude.
    pub max_field_asymmetry: Option<f64>,
    pub global_sign: i8,
    /// Largest `|v⊥(r, x̄) + v⊥(t, x̄)|` on the plane, or `|v⊥(x̄)|` without labels.
    pub max_flux_symmetry_violation: Option<f64>,
    pub sampled_points: usize,
}

impl SymmetryReport {
    pub fn merge(self, other: SymmetryReport) -> SymmetryReport {
        SymmetryReport {
            max_field_asymmetry: self.max_field_asymmetry.or(other.max_field_asymmetry),
            global_sign: if self.max_field_asymmetry.is_some() { self.global_sign } else { other.global_sign },
            max_flux_symmetry_violation: self.max_flux_symmetry_violation.or(other.max_flux_symmetry_violation),
            sampled_points: self.sampled_points + other.sampled_points,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityReport {
    pub visibility: f64,
    pub scan_time: f64,
    pub scenario: ScenarioKind,
}

/// Deterministic golden-angle samples in discs of `radius_widths` packet
/// widths around every term center, kept where the density is meaningful.
pub fn support_samples(field: &WaveField, t: f64, n: usize, radius_widths: f64) -> Vec<Vec2> {
    let c = field.constants();
    let terms = field.terms();
    if terms.is_empty() || n == 0 {
        return Vec::new();
    }
    let per = n.div_ceil(terms.len());
    let peak = field.peak_density(t);
    let mut out = Vec::with_capacity(per * terms.len());
    for (_, p) in terms {
        let center = p.center(t, c);
        let radius = radius_widths * p.width(t, c);
        for i in 0..per {
            let r = radius * ((i as f64 + 0.5) / per as f64).sqrt();
            let th = i as f64 * GOLDEN_ANGLE;
            let x = center + Vec2::new(r * th.cos(), r * th.sin());
            if field.density(&x, t) > SAMPLE_DENSITY_FRACTION * peak {
                out.push(x);
            }
        }
    }
    out
}

fn inside_convex(poly: &[Vec2], x: &Vec2) -> bool {
    let n = poly.len();
    let mut sign = 0.0f64;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        let c = (b - a).x * (x - a).y - (b - a).y * (x - a).x;
        if c != 0.0 {
            if sign != 0.0 && c.signum() != sign {
                return false;
            }
            sign = c.signum();
        }
    }
    true
}

/// `n` seeded uniform points inside a convex polygon, by rejection from its bounding box.
pub fn sample_polygon(poly: &[Vec2], n: usize, seed: u64) -> Result<Vec<Vec2>> {
    if poly.len() < 3 {
        return Err(Error::Geometry("polygon needs at least three vertices".into()));
    }
    let lo = poly.iter().fold(Vec2::repeat(f64::INFINITY), |a, p| a.inf(p));
    let hi = poly.iter().fold(Vec2::repeat(f64::NEG_INFINITY), |a, p| a.sup(p));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n {
        attempts += 1;
        if attempts > 1000 * (n + 1) {
            return Err(Error::Geometry("polygon has no interior".into()));
        }
        let x = Vec2::new(rng.random_range(lo.x..=hi.x), rng.random_range(lo.y..=hi.y));
        if inside_convex(poly, &x) {
            out.push(x);
        }
    }
    Ok(out)
}

/// Compares `Ψ(w, x)` with `s Ψ(w̄, Rx)`, where `w̄` is the partner label and
/// `s = ±1` is fitted by least squares over all samples.
pub fn check_reflection_symmetry(field: &WaveField, plane: &Plane2D, t: f64, n_points: usize) -> Result<SymmetryReport> {
    let points = support_samples(field, t, n_points, 3.0);
    let peak = field.peak_density(t);
    let labels = field.labels();
    let mut pairs: Vec<(Complex64, Complex64)> = Vec::new();
    for x in &points {
        let rx = plane.reflect_point(x);
        for w in &labels {
            let a = field.evaluate(*w, x, t);
            let b = field.evaluate(w.partner(), &rx, t);
            if a.norm_sqr().max(b.norm_sqr()) > SAMPLE_DENSITY_FRACTION * peak {
                pairs.push((a, b));
            }
        }
    }
    let needed = (n_points / 2).max(1);
    if pairs.len() < needed {
        return Err(Error::DegenerateSupport { found: pairs.len(), requested: needed });
    }
    let dot: f64 = pairs.iter().map(|(a, b)| (a * b.conj()).re).sum();
    let sign: i8 = if dot < 0.0 { -1 } else { 1 };
    let s = f64::from(sign);
    let worst = pairs.iter().map(|(a, b)| (a - b * s).norm() / a.norm().max(b.norm())).fold(0.0, f64::max);
    Ok(SymmetryReport { max_field_asymmetry: Some(worst), global_sign: sign, max_flux_symmetry_violation: None, sampled_points: pairs.len() })
}

/// Normal velocity balance on the plane at each of `times`.
pub fn check_flux_antisymmetry(field: &WaveField, plane: &Plane2D, times: &[f64], n_points: usize) -> Result<SymmetryReport> {
    let c = field.constants();
    let labels = field.labels();
    let tagged = labels.contains(&WwLabel::R) && labels.contains(&WwLabel::T);
    let tangent = plane.tangent();
    let n = plane.unit_normal;
    let mut worst = 0.0f64;
    let mut used = 0usize;
    for &t in times {
        let peak = field.peak_density(t);
        let (mut lo, mut hi, mut sigma) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
        for (_, p) in field.terms() {
            let s = (p.center(t, c) - plane.point).dot(&tangent);
            lo = lo.min(s);
            hi = hi.max(s);
            sigma = sigma.max(p.width(t, c));
        }
        let (lo, hi) = (lo - 4.0 * sigma, hi + 4.0 * sigma);
        for i in 0..n_points {
            let f = if n_points > 1 { i as f64 / (n_points - 1) as f64 } else { 0.5 };
            let x = plane.point + tangent * (lo + (hi - lo) * f);
            let v = if tagged {
                let sheet = |w| field.evaluate(w, &x, t).norm_sqr() > SAMPLE_DENSITY_FRACTION * peak;
                if !(sheet(WwLabel::R) && sheet(WwLabel::T)) {
                    continue;
                }
                field.velocity(WwLabel::R, &x, t)?.dot(&n) + field.velocity(WwLabel::T, &x, t)?.dot(&n)
            } else {
                let w = labels[0];
                if field.evaluate(w, &x, t).norm_sqr() <= SAMPLE_DENSITY_FRACTION * peak {
                    continue;
                }
                field.velocity(w, &x, t)?.dot(&n)
            };
            worst = worst.max(v.abs());
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::NoSupport);
    }
    Ok(SymmetryReport { max_field_asymmetry: None, global_sign: 1, max_flux_symmetry_violation: Some(worst), sampled_points: used })
}

/// `(max − min)/(max + min)` over the central half of the scan.
pub fn compute_visibility(scan: &[f64]) -> Result<f64> {
    if scan.len() < MIN_VISIBILITY_SAMPLES {
        return Err(Error::DegenerateScan(format!("{} samples, need at least {MIN_VISIBILITY_SAMPLES}", scan.len())));
    }
    if scan.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::DegenerateScan("scan values must be finite and non-negative".into()));
    }
    let n = scan.len();
    let central = &scan[n / 4..n - n / 4];
    let max = central.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = central.iter().copied().fold(f64::INFINITY, f64::min);
    if max == 0.0 {
        return Err(Error::DegenerateScan("scan is identically zero".into()));
    }
    Ok((max - min) / (max + min))
}

#[derive(Debug, Clone, Copy)]
pub struct QpProbe<'a> {
    pub field: &'a WaveField,
    pub points: &'a [Vec2],
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpContrast {
    /// Max `|U − U_single|` over the free-region probe.
    pub free_excess: f64,
    /// Max `|U|` over the region-I probe, node zones excluded.
    pub region_i_max: f64,
    /// `ħ²k²/2m` for the largest wavevector in the region-I field.
    pub kinetic_scale: f64,
    pub excluded: usize,
}

/// Largest deviation of each sheet's quantum potential from that of its
/// locally dominant packet alone. Node-zone points are skipped and counted.
pub fn single_packet_excess(field: &WaveField, points: &[Vec2], t: f64) -> (f64, usize) {
    let c = *field.constants();
    let mut worst = 0.0f64;
    let mut skipped = 0;
    for x in points {
        for w in field.labels() {
            let Some((_, p)) = field
                .terms()
                .iter()
                .filter(|(l, _)| *l == w)
                .max_by(|a, b| a.1.value(x, t, &c).norm_sqr().total_cmp(&b.1.value(x, t, &c).norm_sqr()))
            else {
                continue;
            };
            let single = WaveField::single(*p, c).with_node_threshold(field.node_threshold());
            match (field.quantum_potential(w, x, t), single.quantum_potential(WwLabel::None, x, t)) {
                (Ok(u), Ok(u1)) => worst = worst.max((u - u1).abs()),
                _ => skipped += 1,
            }
        }
    }
    (worst, skipped)
}

pub fn quantum_potential_contrast(free: QpProbe<'_>, region_i: QpProbe<'_>) -> Result<QpContrast> {
    let (free_excess, mut excluded) = single_packet_excess(free.field, free.points, free.t);
    let c = region_i.field.constants();
    let kscale = region_i.field.terms().iter().map(|(_, p)| p.wavevector.norm_squared()).fold(0.0, f64::max) * c.hbar * c.hbar / (2.0 * c.mass);
    let mut best: Option<f64> = None;
    for x in region_i.points {
        for w in region_i.field.labels() {
            match region_i.field.quantum_potential(w, x, region_i.t) {
                Ok(u) => best = Some(best.map_or(u.abs(), |b: f64| b.max(u.abs()))),
                Err(Error::NodeProximity { .. }) => excluded += 1,
                Err(e) => return Err(e),
            }
        }
    }
    let region_i_max = best.ok_or(Error::AllNodes)?;
    Ok(QpContrast { free_excess, region_i_max, kinetic_scale: kscale, excluded })
}

/// Local minima of the sheet density along `center ± half_length·direction`,
/// refined by golden-section search.
pub fn fringe_minima(field: &WaveField, w: WwLabel, center: Vec2, direction: Vec2, half_length: f64, t: f64, samples: usize) -> Vec<Vec2> {
    let dir = direction.normalize();
    let at = |s: f64| center + dir * s;
    let dens = |s: f64| field.evaluate(w, &at(s), t).norm_sqr();
    let ss: Vec<f64> = (0..samples).map(|i| -half_length + 2.0 * half_length * i as f64 / (samples - 1) as f64).collect();
    let ds: Vec<f64> = ss.iter().map(|s| dens(*s)).collect();
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut out = Vec::new();
    for i in 1..samples - 1 {
        if !(ds[i] < ds[i - 1] && ds[i] <= ds[i + 1]) {
            continue;
        }
        let (mut a, mut b) = (ss[i - 1], ss[i + 1]);
        let mut x1 = b - phi * (b - a);
        let mut x2 = a + phi * (b - a);
        let (mut f1, mut f2) = (dens(x1), dens(x2));
        for _ in 0..80 {
            if f1 < f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - phi * (b - a);
                f1 = dens(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + phi * (b - a);
                f2 = dens(x2);
            }
        }
        out.push(at(0.5 * (a + b)));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SheetPolyline {
    pub label: WwLabel,
    pub trajectory: usize,
    pub points: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionPicture {
    /// Spatial path of each trajectory, labels ignored.
    pub polylines: Vec<Vec<Vec2>>,
    /// Maximal runs of each trajectory on a single sheet.
    pub sheets: Vec<SheetPolyline>,
    pub markers: Vec<CrossingMarker>,
}

pub fn build_projection_picture(trajs: &[Trajectory], coincidence: f64) -> Result<ProjectionPicture> {
    let polylines = trajs.iter().map(|t| t.points.iter().map(|p| p.x).collect()).collect();
    let mut sheets = Vec::new();
    for (i, tr) in trajs.iter().enumerate() {
        let mut run: Vec<Vec2> = Vec::new();
        let mut label = tr.points[0].w;
        for p in &tr.points {
            if p.w != label {
                // The event point closes one run and opens the next.
                let last = *run.last().expect("run has a point");
                sheets.push(SheetPolyline { label, trajectory: i, points: std::mem::take(&mut run) });
                run.push(last);
                label = p.w;
            }
            run.push(p.x);
        }
        sheets.push(SheetPolyline { label, trajectory: i, points: run });
    }
    let complete: Vec<Trajectory> = trajs.iter().filter(|t| t.failure.is_none()).cloned().collect();
    let markers = detect_projected_pair_crossings(&complete, coincidence)?;
    Ok(ProjectionPicture { polylines, sheets, markers })
}
