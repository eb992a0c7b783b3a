//! Interferometer geometry and instantaneous packet-level optical maps.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::wavefield::{GaussianPacket, PhysicalConstants, WaveField, WwLabel};
use crate::Vec2;

/// Packet centers must sit within this many `σ0` of an element plane when it fires.
pub const ALIGNMENT_TOLERANCE: f64 = 0.1;
/// Largest envelope overlap allowed between branches at tag time.
pub const TAG_OVERLAP_LIMIT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane2D {
    pub point: Vec2,
    pub unit_normal: Vec2,
}

impl Plane2D {
    pub fn new(point: Vec2, normal: Vec2) -> Result<Self> {
        let n = normal.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidParameter { field: "unit_normal", reason: "plane normal must be non-zero".into() });
        }
        Ok(Self { point, unit_normal: normal / n })
    }

    pub fn signed_distance(&self, x: &Vec2) -> f64 {
        (x - self.point).dot(&self.unit_normal)
    }

    pub fn reflect_point(&self, x: &Vec2) -> Vec2 {
        x - self.unit_normal * (2.0 * self.signed_distance(x))
    }

    pub fn reflect_vector(&self, v: &Vec2) -> Vec2 {
        v - self.unit_normal * (2.0 * v.dot(&self.unit_normal))
    }

    /// Unit vector along the plane (normal rotated by +90°).
    pub fn tangent(&self) -> Vec2 {
        Vec2::new(-self.unit_normal.y, self.unit_normal.x)
    }

    pub fn flipped(&self) -> Self {
        Self { point: self.point, unit_normal: -self.unit_normal }
    }

    /// Image of this plane under reflection through `mirror`.
    pub fn reflected_through(&self, mirror: &Plane2D) -> Self {
        Self { point: mirror.reflect_point(&self.point), unit_normal: mirror.reflect_vector(&self.unit_normal) }
    }

    /// Same point set (orientation ignored).
    pub fn coincides(&self, other: &Plane2D, tol: f64) -> bool {
        let cross = self.unit_normal.x * other.unit_normal.y - self.unit_normal.y * other.unit_normal.x;
        cross.abs() < tol && self.signed_distance(&other.point).abs() < tol
    }
}

/// Point reflection through `plane`; an involution whose fixed points are the plane.
pub fn reflect_config(x: &Vec2, plane: &Plane2D) -> Vec2 {
    plane.reflect_point(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    BeamSplit,
    Mirror,
    /// Which-way tag writing the given label.
    WwTag(WwLabel),
}

/// Selects the packets an event acts on: by the side of a half-plane their
/// center occupies at the event time and/or by label.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EventFilter {
    pub side: Option<Plane2D>,
    pub label: Option<WwLabel>,
}

impl EventFilter {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn side(plane: Plane2D) -> Self {
        Self { side: Some(plane), label: None }
    }

    pub fn contains_point(&self, x: &Vec2) -> bool {
        self.side.is_none_or(|p| p.signed_distance(x) > 0.0)
    }

    pub fn matches(&self, label: WwLabel, packet: &GaussianPacket, t: f64, c: &PhysicalConstants) -> bool {
        self.label.is_none_or(|l| l == label) && self.contains_point(&packet.center(t, c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalEvent {
    pub kind: EventKind,
    pub plane: Plane2D,
    pub time: f64,
    pub applies_to: EventFilter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectorId {
    D1,
    D2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorRegion {
    pub id: DetectorId,
    pub half_plane: Plane2D,
}

impl DetectorRegion {
    pub fn contains(&self, x: &Vec2) -> bool {
        self.half_plane.signed_distance(x) > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferometerGeometry {
    pub constants: PhysicalConstants,
    pub source: GaussianPacket,
    pub beam_splitter: Plane2D,
    /// `[r-arm mirror, t-arm mirror]`.
    pub mirrors: Vec<Plane2D>,
    /// `(C_r, C_t)`.
    pub ww_tag_planes: Option<(Plane2D, Plane2D)>,
    pub detectors: [DetectorRegion; 2],
    /// Convex polygon around the crossing point of the two arms.
    pub region_i: Vec<Vec2>,
    pub final_time: f64,
}

/// Parameters of the standard layout: splitter through the origin with
/// normal `+y`, mirrors parallel to it, arms meeting again on the splitter
/// line at `x = 2 L cos θ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryParams {
    pub constants: PhysicalConstants,
    pub sigma0: f64,
    /// Wavevector magnitude of the source packet.
    pub k0: f64,
    pub arm_length: f64,
    /// Angle between the incoming beam and the splitter plane, radians.
    pub incidence_angle: f64,
    pub source_distance: f64,
    pub exit_length: f64,
    /// Tag plane distance from the splitter as a fraction of the arm length.
    pub tag_fraction: f64,
    pub which_way: bool,
    /// Relative extra length of the r arm (0 for a balanced interferometer).
    pub arm_imbalance: f64,
    pub detector_gap: f64,
}

impl Default for GeometryParams {
    fn default() -> Self {
        Self {
            constants: PhysicalConstants::default(),
            sigma0: 1.0,
            k0: 10.0,
            arm_length: 20.0,
            incidence_angle: std::f64::consts::FRAC_PI_4,
            source_distance: 5.0,
            exit_length: 20.0,
            tag_fraction: 0.8,
            which_way: false,
            arm_imbalance: 0.0,
            detector_gap: 0.5,
        }
    }
}

/// Event timeline plus the kinematic landmarks derived with it.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub events: Vec<OpticalEvent>,
    pub split_time: f64,
    /// Times at which the r- and t-arm packet centers return to the splitter line.
    pub arrival_times: [f64; 2],
    pub arrival_points: [Vec2; 2],
}

fn flight_time(from: &Vec2, velocity: &Vec2, plane: &Plane2D, leg: &str) -> Result<f64> {
    let rate = velocity.dot(&plane.unit_normal);
    if rate == 0.0 {
        return Err(Error::Geometry(format!("{leg}: beam runs parallel to the target plane")));
    }
    let dt = -plane.signed_distance(from) / rate;
    if !(dt > 0.0) {
        return Err(Error::Geometry(format!("{leg}: non-positive flight time {dt}")));
    }
    Ok(dt)
}

impl InterferometerGeometry {
    pub fn standard(p: &GeometryParams) -> Result<Self> {
        ensure_positive("sigma0", p.sigma0)?;
        ensure_positive("k0", p.k0)?;
        ensure_positive("arm_length", p.arm_length)?;
        ensure_positive("source_distance", p.source_distance)?;
        ensure_positive("exit_length", p.exit_length)?;
        ensure_positive("detector_gap", p.detector_gap)?;
        if !(p.incidence_angle > 0.0 && p.incidence_angle < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidParameter { field: "incidence_angle", reason: "must lie strictly between 0 and 90 degrees".into() });
        }
        if !(p.tag_fraction > 0.0 && p.tag_fraction < 1.0) {
            return Err(Error::InvalidParameter { field: "tag_fraction", reason: "must lie in (0, 1)".into() });
        }
        if !(p.arm_imbalance > -0.5 && p.arm_imbalance < 0.5) {
            return Err(Error::InvalidParameter { field: "arm_imbalance", reason: "must lie in (-0.5, 0.5)".into() });
        }
        let (s, c) = p.incidence_angle.sin_cos();
        let u_in = Vec2::new(c, -s);
        let u_r = Vec2::new(c, s);
        let up = Vec2::new(0.0, 1.0);
        let source = GaussianPacket::new(-u_in * p.source_distance, u_in * p.k0, p.sigma0, 0.0, Complex64::new(1.0, 0.0))?;
        let beam_splitter = Plane2D::new(Vec2::zeros(), up)?;
        let len_r = p.arm_length * (1.0 + p.arm_imbalance);
        let len_t = p.arm_length;
        let mirrors = vec![Plane2D::new(u_r * len_r, up)?, Plane2D::new(u_in * len_t, up)?];
        let ww_tag_planes = if p.which_way {
            Some((Plane2D::new(u_r * (p.tag_fraction * len_r), u_r)?, Plane2D::new(u_in * (p.tag_fraction * len_t), u_in)?))
        } else {
            None
        };
        let detectors = [
            DetectorRegion { id: DetectorId::D1, half_plane: Plane2D::new(Vec2::new(0.0, p.detector_gap), up)? },
            DetectorRegion { id: DetectorId::D2, half_plane: Plane2D::new(Vec2::new(0.0, -p.detector_gap), -up)? },
        ];
        let mut geom = Self {
            constants: p.constants,
            source,
            beam_splitter,
            mirrors,
            ww_tag_planes,
            detectors,
            region_i: Vec::new(),
            final_time: 0.0,
        };
        let trace = geom.trace()?;
        let speed = source.group_velocity(&p.constants).norm();
        let t_last = trace.arrival_times[0].max(trace.arrival_times[1]);
        geom.final_time = t_last + p.exit_length / speed;
        let center = (trace.arrival_points[0] + trace.arrival_points[1]) * 0.5;
        let half = 4.0 * source.width(t_last, &p.constants);
        let (n, tg) = (beam_splitter.unit_normal, beam_splitter.tangent());
        geom.region_i = vec![center + tg * half, center + n * half, center - tg * half, center - n * half];
        Ok(geom)
    }

    /// Unit normal of the splitter plane oriented into the r arm.
    pub fn r_side(&self) -> Plane2D {
        let v = self.source.group_velocity(&self.constants);
        let refl = self.beam_splitter.reflect_vector(&v);
        if refl.dot(&self.beam_splitter.unit_normal) >= 0.0 {
            self.beam_splitter
        } else {
            self.beam_splitter.flipped()
        }
    }

    pub fn trace(&self) -> Result<Trace> {
        let c = &self.constants;
        let v = self.source.group_velocity(c);
        if v.norm() == 0.0 {
            return Err(Error::Geometry("source wavevector is zero".into()));
        }
        if self.mirrors.len() != 2 {
            return Err(Error::Geometry(format!("expected two mirrors, got {}", self.mirrors.len())));
        }
        let start = self.source.center(self.source.birth_time, c);
        let t_split = self.source.birth_time + flight_time(&start, &v, &self.beam_splitter, "source to splitter")?;
        let q = self.source.center(t_split, c);
        let r_side = self.r_side();
        let mut events = vec![OpticalEvent { kind: EventKind::BeamSplit, plane: self.beam_splitter, time: t_split, applies_to: EventFilter::all() }];
        let arms = [
            (WwLabel::R, self.beam_splitter.reflect_vector(&v), r_side, self.ww_tag_planes.map(|p| p.0), self.mirrors[0]),
            (WwLabel::T, v, r_side.flipped(), self.ww_tag_planes.map(|p| p.1), self.mirrors[1]),
        ];
        let mut tags = Vec::new();
        let mut mirrors = Vec::new();
        let mut arrival_times = [0.0; 2];
        let mut arrival_points = [Vec2::zeros(); 2];
        for (i, (label, va, side, tag, mirror)) in arms.into_iter().enumerate() {
            let dt_m = flight_time(&q, &va, &mirror, "splitter to mirror")?;
            let m_point = q + va * dt_m;
            let v_out = mirror.reflect_vector(&va);
            let dt_a = flight_time(&m_point, &v_out, &self.beam_splitter, "mirror to region I")?;
            arrival_times[i] = t_split + dt_m + dt_a;
            arrival_points[i] = m_point + v_out * dt_a;
            if let Some(tag) = tag {
                let dt_tag = flight_time(&q, &va, &tag, "splitter to which-way tag")?;
                if dt_tag >= dt_m {
                    return Err(Error::Geometry("which-way tag must precede the mirror".into()));
                }
                tags.push(OpticalEvent { kind: EventKind::WwTag(label), plane: tag, time: t_split + dt_tag, applies_to: EventFilter::side(side) });
            }
            mirrors.push(OpticalEvent { kind: EventKind::Mirror, plane: mirror, time: t_split + dt_m, applies_to: EventFilter::side(side) });
        }
        events.extend(tags);
        events.extend(mirrors);
        // Stable: simultaneous events keep r-arm-first order.
        events.sort_by(|a, b| a.time.total_cmp(&b.time));
        Ok(Trace { events, split_time: t_split, arrival_times, arrival_points })
    }

    /// Mirror symmetry of the arms under reflection through the splitter plane.
    pub fn is_balanced(&self, tol: f64) -> bool {
        let bs = &self.beam_splitter;
        let pair_ok = |a: &Plane2D, b: &Plane2D| a.coincides(&b.reflected_through(bs), tol);
        let mirrors_ok = self.mirrors.len() == 2 && pair_ok(&self.mirrors[0], &self.mirrors[1]);
        let tags_ok = self.ww_tag_planes.is_none_or(|(a, b)| pair_ok(&a, &b));
        let det_ok = pair_ok(&self.detectors[0].half_plane, &self.detectors[1].half_plane);
        mirrors_ok && tags_ok && det_ok
    }

    pub fn region_i_contains(&self, x: &Vec2) -> bool {
        let n = self.region_i.len();
        if n < 3 {
            return false;
        }
        let mut sign = 0.0f64;
        for i in 0..n {
            let a = self.region_i[i];
            let b = self.region_i[(i + 1) % n];
            let cross = (b - a).x * (x - a).y - (b - a).y * (x - a).x;
            if cross != 0.0 {
                if sign != 0.0 && cross.signum() != sign {
                    return false;
                }
                sign = cross.signum();
            }
        }
        true
    }
}

pub fn build_timeline(geom: &InterferometerGeometry) -> Result<Vec<OpticalEvent>> {
    Ok(geom.trace()?.events)
}

fn check_alignment(kind: &'static str, ev: &OpticalEvent, packet: &GaussianPacket, c: &PhysicalConstants) -> Result<()> {
    let distance = ev.plane.signed_distance(&packet.center(ev.time, c)).abs();
    let tolerance = ALIGNMENT_TOLERANCE * packet.sigma0;
    if distance > tolerance {
        return Err(Error::Alignment { kind, time: ev.time, distance, tolerance });
    }
    Ok(())
}

/// Ψ ↦ ψ_t + ψ_r with transmission `1/√2` and reflection `±1/√2`.
///
/// The reflection sign is `+` for packets incident from the side the plane
/// normal points to and `−` from the other side (a real, lossless splitter).
pub fn apply_beam_splitter(field: &WaveField, ev: &OpticalEvent) -> Result<WaveField> {
    if ev.kind != EventKind::BeamSplit {
        return Err(Error::WrongEventKind { expected: "BeamSplit", actual: ev.kind });
    }
    let c = *field.constants();
    let mut terms = Vec::with_capacity(field.terms().len() + 1);
    for (w, p) in field.terms() {
        if !ev.applies_to.matches(*w, p, ev.time, &c) {
            terms.push((*w, *p));
            continue;
        }
        check_alignment("beam splitter", ev, p, &c)?;
        let r = if p.wavevector.dot(&ev.plane.unit_normal) < 0.0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
        terms.push((*w, p.scaled(Complex64::new(FRAC_1_SQRT_2, 0.0))));
        terms.push((*w, p.reflected(&ev.plane).scaled(Complex64::new(r, 0.0))));
    }
    field.with_terms(terms)
}

/// Reflects affected packets and multiplies them by `i`.
pub fn apply_mirror(field: &WaveField, ev: &OpticalEvent) -> Result<WaveField> {
    if ev.kind != EventKind::Mirror {
        return Err(Error::WrongEventKind { expected: "Mirror", actual: ev.kind });
    }
    let c = *field.constants();
    let mut terms = Vec::with_capacity(field.terms().len());
    for (w, p) in field.terms() {
        if ev.applies_to.matches(*w, p, ev.time, &c) {
            check_alignment("mirror", ev, p, &c)?;
            terms.push((*w, p.reflected(&ev.plane).scaled(Complex64::new(0.0, 1.0))));
        } else {
            terms.push((*w, *p));
        }
    }
    field.with_terms(terms)
}

/// Writes the which-way label onto the packets of one arm; spatial parts are untouched.
pub fn apply_ww_tag(field: &WaveField, ev: &OpticalEvent) -> Result<WaveField> {
    let EventKind::WwTag(label) = ev.kind else {
        return Err(Error::WrongEventKind { expected: "WwTag", actual: ev.kind });
    };
    let c = *field.constants();
    let side = EventFilter { side: ev.applies_to.side, label: None };
    let affected: Vec<bool> = field.terms().iter().map(|(w, p)| side.matches(*w, p, ev.time, &c)).collect();
    for ((w, _), hit) in field.terms().iter().zip(&affected) {
        if *hit && *w != WwLabel::None {
            return Err(Error::DoubleTag { label: *w });
        }
    }
    for (i, (_, a)) in field.terms().iter().enumerate() {
        for (j, (wb, b)) in field.terms().iter().enumerate() {
            if affected[i] && !affected[j] && *wb == WwLabel::None {
                let overlap = a.envelope_overlap(b, ev.time, &c);
                if overlap >= TAG_OVERLAP_LIMIT {
                    return Err(Error::BranchOverlap { time: ev.time, overlap });
                }
            }
        }
    }
    let terms = field.terms().iter().zip(&affected).map(|((w, p), hit)| (if *hit { label } else { *w }, *p)).collect();
    field.with_terms(terms)
}

pub fn apply_event(field: &WaveField, ev: &OpticalEvent) -> Result<WaveField> {
    match ev.kind {
        EventKind::BeamSplit => apply_beam_splitter(field, ev),
        EventKind::Mirror => apply_mirror(field, ev),
        EventKind::WwTag(_) => apply_ww_tag(field, ev),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn replay(geom: &InterferometerGeometry) -> Vec<WaveField> {
        let mut field = WaveField::single(geom.source, geom.constants);
        let mut out = vec![field.clone()];
        for ev in build_timeline(geom).unwrap() {
            field = apply_event(&field, &ev).unwrap();
            out.push(field.clone());
        }
        out
    }

    #[test]
    fn reflection_algebra() {
        let plane = Plane2D::new(Vec2::zeros(), Vec2::new(1.0, -1.0)).unwrap();
        let k = plane.reflect_vector(&Vec2::new(1.0, 0.0));
        assert_relative_eq!(k.x, 0.0, epsilon = 1e-15);
        assert_relative_eq!(k.y, 1.0, epsilon = 1e-15);
        let p = Vec2::new(2.0, 2.0);
        assert_eq!(reflect_config(&p, &plane), p);
        let x = Vec2::new(0.3, -1.7);
        assert_relative_eq!(plane.signed_distance(&reflect_config(&x, &plane)), -plane.signed_distance(&x), epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn reflection_is_an_involution(px in -50.0..50.0f64, py in -50.0..50.0f64, nx in -1.0..1.0f64, ny in -1.0..1.0f64,
                                       qx in -5.0..5.0f64, qy in -5.0..5.0f64) {
            prop_assume!(nx.abs() + ny.abs() > 1e-3);
            let plane = Plane2D::new(Vec2::new(qx, qy), Vec2::new(nx, ny)).unwrap();
            prop_assert!((plane.unit_normal.norm() - 1.0).abs() < 1e-12);
            let x = Vec2::new(px, py);
            let back = reflect_config(&reflect_config(&x, &plane), &plane);
            prop_assert!((back - x).norm() < 1e-15 * 64.0 * x.norm().max(1.0));
        }
    }

    #[test]
    fn beam_splitter_halves_weight_and_preserves_norm() {
        let geom = InterferometerGeometry::standard(&GeometryParams::default()).unwrap();
        let ev = build_timeline(&geom).unwrap()[0];
        let field = WaveField::single(geom.source, geom.constants);
        let split = apply_beam_splitter(&field, &ev).unwrap();
        assert_eq!(split.terms().len(), 2);
        for (_, p) in split.terms() {
            assert_relative_eq!(p.amplitude.norm_sqr(), 0.5, epsilon = 1e-15);
        }
        assert!((split.norm_at(ev.time) - 1.0).abs() < 1e-12);
        // Reflected wavevector mirrors the incoming one through the plane.
        let k = split.terms()[1].1.wavevector;
        assert_relative_eq!(k.y, -geom.source.wavevector.y, epsilon = 1e-12);
    }

    #[test]
    fn misaligned_events_are_rejected() {
        let geom = InterferometerGeometry::standard(&GeometryParams::default()).unwrap();
        let mut ev = build_timeline(&geom).unwrap()[0];
        ev.time -= 0.1;
        let field = WaveField::single(geom.source, geom.constants);
        assert!(matches!(apply_beam_splitter(&field, &ev), Err(Error::Alignment { .. })));
        let wrong = OpticalEvent { kind: EventKind::Mirror, ..ev };
        assert!(matches!(apply_beam_splitter(&field, &wrong), Err(Error::WrongEventKind { .. })));
    }

    #[test]
    fn complete_interferometer_sends_everything_to_one_port() {
        let geom = InterferometerGeometry::standard(&GeometryParams::default()).unwrap();
        let trace = geom.trace().unwrap();
        let mut field = replay(&geom).pop().unwrap();
        // Second splitter at the crossing point.
        let t2 = trace.arrival_times[0];
        let ev = OpticalEvent { kind: EventKind::BeamSplit, plane: Plane2D::new(trace.arrival_points[0], Vec2::y()).unwrap(), time: t2, applies_to: EventFilter::all() };
        field = apply_beam_splitter(&field, &ev).unwrap();
        assert!((field.norm_at(t2) - 1.0).abs() < 1e-12);
        let up = field.restricted(|_, _, p| p.wavevector.y > 0.0);
        let down = field.restricted(|_, _, p| p.wavevector.y < 0.0);
        assert!((up.norm_at(t2) - 1.0).abs() < 1e-12);
        assert!(down.norm_at(t2).abs() < 1e-12);
    }

    #[test]
    fn mirrors_add_common_phase_and_keep_norm() {
        let geom = InterferometerGeometry::standard(&GeometryParams::default()).unwrap();
        let events = build_timeline(&geom).unwrap();
        let fields = replay(&geom);
        let before = &fields[1];
        let after = fields.last().unwrap();
        let rel = |f: &WaveField| f.terms()[1].1.amplitude / f.terms()[0].1.amplitude;
        assert!((rel(before) - rel(after)).norm() < 1e-15);
        for (i, ev) in events.iter().enumerate() {
            let n0 = fields[i].norm_at(ev.time);
            let n1 = fields[i + 1].norm_at(ev.time);
            assert!((n0 - n1).abs() < 1e-12, "{ev:?}");
        }
    }

    #[test]
    fn packets_reach_region_i_on_schedule() {
        let geom = InterferometerGeometry::standard(&GeometryParams::default()).unwrap();
        let trace = geom.trace().unwrap();
        let field = replay(&geom).pop().unwrap();
        let c = geom.constants;
        for (_, p) in field.terms() {
            let at = p.center(trace.arrival_times[0], &c);
            assert!((at - trace.arrival_points[0]).norm() < 1e-9);
            assert!(geom.region_i_contains(&at));
        }
    }

    #[test]
    fn balanced_and_scaled_timelines() {
        let p = GeometryParams::default();
        let geom = InterferometerGeometry::standard(&p).unwrap();
        assert!(geom.is_balanced(1e-12));
        let tr = geom.trace().unwrap();
        assert_eq!(tr.arrival_times[0], tr.arrival_times[1]);
        let long = InterferometerGeometry::standard(&GeometryParams { arm_length: 40.0, ..p }).unwrap().trace().unwrap();
        let leg = |t: &Trace| t.events.iter().find(|e| e.kind == EventKind::Mirror).unwrap().time - t.split_time;
        assert_relative_eq!(leg(&long), 2.0 * leg(&tr), max_relative = 1e-12);
        let unbalanced = InterferometerGeometry::standard(&GeometryParams { arm_imbalance: 0.1, ..p }).unwrap();
        assert!(!unbalanced.is_balanced(1e-6));
    }

    #[test]
    fn which_way_timeline_gets_one_tag_per_arm() {
        let p = GeometryParams { which_way: true, ..GeometryParams::default() };
        let geom = InterferometerGeometry::standard(&p).unwrap();
        let tr = geom.trace().unwrap();
        let tags: Vec<_> = tr.events.iter().filter(|e| matches!(e.kind, EventKind::WwTag(_))).collect();
        assert_eq!(tags.len(), 2);
        assert!(tags.iter().all(|e| e.time > tr.split_time && e.time < tr.arrival_times[0]));
        assert!(tr.events.windows(2).all(|w| w[0].time <= w[1].time));
        let fields = replay(&geom);
        let last = fields.last().unwrap();
        assert_eq!(last.labels(), vec![WwLabel::R, WwLabel::T]);
        let t = tr.arrival_times[0];
        assert!((last.norm_at(t) - 1.0).abs() < 1e-12);
        // R packet lives where the r arm went.
        let r = last.terms().iter().find(|(w, _)| *w == WwLabel::R).unwrap().1;
        let mirror_ev = tr.events.iter().find(|e| e.kind == EventKind::Mirror).unwrap();
        assert!(geom.r_side().signed_distance(&r.center(mirror_ev.time, &geom.constants)) > 0.0);
        assert_eq!(last.evaluate(WwLabel::None, &trace_point(&tr), t), Complex64::new(0.0, 0.0));
    }

    fn trace_point(tr: &Trace) -> Vec2 {
        tr.arrival_points[0]
    }

    #[test]
    fn tag_errors() {
        let p = GeometryParams { which_way: true, ..GeometryParams::default() };
        let geom = InterferometerGeometry::standard(&p).unwrap();
        let events = build_timeline(&geom).unwrap();
        let split = apply_event(&WaveField::single(geom.source, geom.constants), &events[0]).unwrap();
        let tag = events.iter().find(|e| matches!(e.kind, EventKind::WwTag(WwLabel::R))).unwrap();
        let tagged = apply_ww_tag(&split, tag).unwrap();
        assert!(matches!(apply_ww_tag(&tagged, tag), Err(Error::DoubleTag { .. })));
        // Tagging right after the split: branches still overlap.
        let early = OpticalEvent { time: events[0].time + 0.05, ..*tag };
        assert!(matches!(apply_ww_tag(&split, &early), Err(Error::BranchOverlap { .. })));
    }

    #[test]
    fn geometry_errors() {
        let p = GeometryParams::default();
        assert!(InterferometerGeometry::standard(&GeometryParams { sigma0: -1.0, ..p }).is_err());
        let mut geom = InterferometerGeometry::standard(&p).unwrap();
        geom.source.wavevector = Vec2::zeros();
        assert!(matches!(geom.trace(), Err(Error::Geometry(_))));
        let mut geom = InterferometerGeometry::standard(&p).unwrap();
        geom.source.wavevector = -geom.source.wavevector;
        assert!(matches!(geom.trace(), Err(Error::Geometry(_))));
    }
}
