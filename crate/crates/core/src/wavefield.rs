//! Closed-form wave field on the extended configuration space.
//!
//! Every term is a free Gaussian packet
//!
//! ```text
//! ψ(x, t) = A / (√(2π) σ0 (1 + iτ)) · exp(−|x − c(t)|² / (4σ0²(1 + iτ)) + i k·(x − c0) − iħ|k|²Δt / 2m)
//! ```
//!
//! with `Δt = t − t_birth`, `τ = ħΔt / (2mσ0²)` and `c(t) = c0 + (ħ/m) k Δt`.
//! Gradients and Laplacians are analytic, so the guidance velocity and the
//! quantum potential carry no discretisation error.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Error, Result};
use crate::optics::Plane2D;
use crate::{CVec2, Vec2};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Default relative node threshold: `ε_node = 1e-10 × peak density`.
pub const DEFAULT_NODE_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub mass: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self { hbar: 1.0, mass: 1.0 }
    }
}

impl PhysicalConstants {
    pub fn new(hbar: f64, mass: f64) -> Result<Self> {
        ensure_positive("hbar", hbar)?;
        ensure_positive("mass", mass)?;
        Ok(Self { hbar, mass })
    }

    /// ħ/m, the factor turning a wavevector into a velocity.
    pub fn hbar_over_m(&self) -> f64 {
        self.hbar / self.mass
    }
}

/// The one-bit which-way coordinate. `None` is the untagged sheet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WwLabel {
    None,
    R,
    T,
}

impl WwLabel {
    /// Label of the mirror-image branch under reflection through the splitter plane.
    pub fn partner(self) -> Self {
        match self {
            WwLabel::None => WwLabel::None,
            WwLabel::R => WwLabel::T,
            WwLabel::T => WwLabel::R,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WwLabel::None => "none",
            WwLabel::R => "r",
            WwLabel::T => "t",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(WwLabel::None),
            "r" => Some(WwLabel::R),
            "t" => Some(WwLabel::T),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPacket {
    pub center0: Vec2,
    pub wavevector: Vec2,
    pub sigma0: f64,
    pub birth_time: f64,
    pub amplitude: Complex64,
}

/// Value, gradient and Laplacian of a field at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub value: Complex64,
    pub grad: CVec2,
    pub laplacian: Complex64,
}

impl Jet {
    fn zero() -> Self {
        Self { value: Complex64::new(0.0, 0.0), grad: CVec2::zeros(), laplacian: Complex64::new(0.0, 0.0) }
    }

    fn add(&mut self, other: &Jet) {
        self.value += other.value;
        self.grad += other.grad;
        self.laplacian += other.laplacian;
    }
}

/// Time-dependent coefficients of one packet, shared by all evaluations at `t`.
#[derive(Debug, Clone, Copy)]
struct Kernel {
    alpha: Complex64,
    center: Vec2,
    prefactor: Complex64,
    phase0: f64,
}

impl GaussianPacket {
    pub fn new(center0: Vec2, wavevector: Vec2, sigma0: f64, birth_time: f64, amplitude: Complex64) -> Result<Self> {
        ensure_positive("sigma0", sigma0)?;
        if !(amplitude.re.is_finite() && amplitude.im.is_finite()) {
            return Err(Error::InvalidParameter { field: "amplitude", reason: "must be finite".into() });
        }
        if !(center0.iter().all(|v| v.is_finite()) && wavevector.iter().all(|v| v.is_finite()) && birth_time.is_finite()) {
            return Err(Error::InvalidParameter { field: "packet", reason: "center, wavevector and birth time must be finite".into() });
        }
        Ok(Self { center0, wavevector, sigma0, birth_time, amplitude })
    }

    fn kernel(&self, t: f64, c: &PhysicalConstants) -> Kernel {
        let dt = t - self.birth_time;
        let tau = c.hbar * dt / (2.0 * c.mass * self.sigma0 * self.sigma0);
        let denom = Complex64::new(1.0, tau);
        Kernel {
            alpha: 1.0 / (4.0 * self.sigma0 * self.sigma0 * denom),
            center: self.center0 + self.wavevector * (c.hbar_over_m() * dt),
            prefactor: self.amplitude / ((2.0 * PI).sqrt() * self.sigma0 * denom),
            phase0: -c.hbar * self.wavevector.norm_squared() * dt / (2.0 * c.mass),
        }
    }

    /// Drifting center `c0 + (ħ/m) k (t − t_birth)`.
    pub fn center(&self, t: f64, c: &PhysicalConstants) -> Vec2 {
        self.center0 + self.wavevector * (c.hbar_over_m() * (t - self.birth_time))
    }

    pub fn group_velocity(&self, c: &PhysicalConstants) -> Vec2 {
        self.wavevector * c.hbar_over_m()
    }

    /// Complex width `σ0 (1 + iħΔt / 2mσ0²)`.
    pub fn complex_width(&self, t: f64, c: &PhysicalConstants) -> Complex64 {
        let tau = c.hbar * (t - self.birth_time) / (2.0 * c.mass * self.sigma0 * self.sigma0);
        self.sigma0 * Complex64::new(1.0, tau)
    }

    /// Standard deviation of `|ψ|²` along each axis.
    pub fn width(&self, t: f64, c: &PhysicalConstants) -> f64 {
        self.complex_width(t, c).norm()
    }

    /// `|ψ|²` at the packet center.
    pub fn peak_density(&self, t: f64, c: &PhysicalConstants) -> f64 {
        self.kernel(t, c).prefactor.norm_sqr()
    }

    pub fn value(&self, x: &Vec2, t: f64, c: &PhysicalConstants) -> Complex64 {
        let k = self.kernel(t, c);
        let d = x - k.center;
        let phase = self.wavevector.dot(&(x - self.center0)) + k.phase0;
        k.prefactor * (-k.alpha * d.norm_squared() + I * phase).exp()
    }

    pub fn jet(&self, x: &Vec2, t: f64, c: &PhysicalConstants) -> Jet {
        let k = self.kernel(t, c);
        let d = x - k.center;
        let phase = self.wavevector.dot(&(x - self.center0)) + k.phase0;
        let value = k.prefactor * (-k.alpha * d.norm_squared() + I * phase).exp();
        let g = CVec2::new(
            -2.0 * k.alpha * d.x + I * self.wavevector.x,
            -2.0 * k.alpha * d.y + I * self.wavevector.y,
        );
        let grad = g * value;
        let laplacian = value * (g.x * g.x + g.y * g.y - 4.0 * k.alpha);
        Jet { value, grad, laplacian }
    }

    /// The packet `x ↦ ψ(Rx)` for a reflection `R` through `plane`.
    ///
    /// The free closed form is covariant under reflections, so this is again
    /// a free packet with reflected birth center and wavevector.
    pub fn reflected(&self, plane: &Plane2D) -> Self {
        Self {
            center0: plane.reflect_point(&self.center0),
            wavevector: plane.reflect_vector(&self.wavevector),
            ..*self
        }
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self { amplitude: self.amplitude * factor, ..*self }
    }

    /// `⟨self|other⟩` at time `t` from the closed-form Gaussian integral.
    pub fn overlap(&self, other: &GaussianPacket, t: f64, c: &PhysicalConstants) -> Complex64 {
        let k1 = self.kernel(t, c);
        let k2 = other.kernel(t, c);
        let pre = k1.prefactor.conj() * k2.prefactor;
        if pre == Complex64::new(0.0, 0.0) {
            return pre;
        }
        let origin = (k1.center + k2.center) * 0.5;
        let coeffs = |p: &GaussianPacket, k: &Kernel| {
            let dc = k.center - origin;
            let b = CVec2::new(2.0 * k.alpha * dc.x + I * p.wavevector.x, 2.0 * k.alpha * dc.y + I * p.wavevector.y);
            let g = -k.alpha * dc.norm_squared() + I * (p.wavevector.dot(&(origin - p.center0)) + k.phase0);
            (b, g)
        };
        let (b1, g1) = coeffs(self, &k1);
        let (b2, g2) = coeffs(other, &k2);
        let s = k1.alpha.conj() + k2.alpha;
        let bx = b1.x.conj() + b2.x;
        let by = b1.y.conj() + b2.y;
        let g = g1.conj() + g2;
        pre * (PI / s) * ((bx * bx + by * by) / (4.0 * s) + g).exp()
    }

    /// `∫|ψ_a||ψ_b|`, the overlap of the two envelopes.
    pub fn envelope_overlap(&self, other: &GaussianPacket, t: f64, c: &PhysicalConstants) -> f64 {
        let sa = self.width(t, c);
        let sb = other.width(t, c);
        let s2 = sa * sa + sb * sb;
        let d2 = (self.center(t, c) - other.center(t, c)).norm_squared();
        self.amplitude.norm() * other.amplitude.norm() * (2.0 * sa * sb / s2) * (-d2 / (4.0 * s2)).exp()
    }
}

/// Polar form `Ψ = R exp(iS/ħ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarForm {
    pub r_amp: f64,
    /// `None` at a node, where the phase is undefined.
    pub s_phase: Option<f64>,
    pub p_density: f64,
}

/// Polar decomposition of an amplitude; `S` is undefined when `|a| < node_eps`.
pub fn polar_decompose(a: Complex64, hbar: f64, node_eps: f64) -> PolarForm {
    let r = a.norm();
    let s_phase = if r > 0.0 && r >= node_eps {
        let mut arg = a.arg();
        if arg <= -PI {
            arg = PI;
        }
        Some(hbar * arg)
    } else {
        None
    };
    PolarForm { r_amp: r, s_phase, p_density: r * r }
}

/// Velocity and density returned by a successful guidance evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Guidance {
    pub velocity: Vec2,
    pub density: f64,
    pub peak: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    terms: Vec<(WwLabel, GaussianPacket)>,
    constants: PhysicalConstants,
    node_threshold: f64,
}

impl WaveField {
    pub fn new(terms: Vec<(WwLabel, GaussianPacket)>, constants: PhysicalConstants) -> Result<Self> {
        let mut labels: Vec<WwLabel> = terms.iter().map(|(w, _)| *w).collect();
        labels.sort();
        labels.dedup();
        if labels.len() > 2 {
            return Err(Error::InvalidParameter { field: "terms", reason: format!("at most two distinct labels allowed, got {labels:?}") });
        }
        Ok(Self { terms, constants, node_threshold: DEFAULT_NODE_THRESHOLD })
    }

    pub fn single(packet: GaussianPacket, constants: PhysicalConstants) -> Self {
        Self { terms: vec![(WwLabel::None, packet)], constants, node_threshold: DEFAULT_NODE_THRESHOLD }
    }

    pub fn with_node_threshold(mut self, relative: f64) -> Self {
        self.node_threshold = relative;
        self
    }

    pub fn terms(&self) -> &[(WwLabel, GaussianPacket)] {
        &self.terms
    }

    pub fn constants(&self) -> &PhysicalConstants {
        &self.constants
    }

    pub fn node_threshold(&self) -> f64 {
        self.node_threshold
    }

    /// Same constants and threshold, different terms.
    pub(crate) fn with_terms(&self, terms: Vec<(WwLabel, GaussianPacket)>) -> Result<Self> {
        Ok(Self::new(terms, self.constants)?.with_node_threshold(self.node_threshold))
    }

    /// Sub-field keeping the terms selected by `keep`.
    pub fn restricted(&self, mut keep: impl FnMut(usize, WwLabel, &GaussianPacket) -> bool) -> Self {
        let terms = self.terms.iter().enumerate().filter(|(i, (w, p))| keep(*i, *w, p)).map(|(_, t)| *t).collect();
        Self { terms, constants: self.constants, node_threshold: self.node_threshold }
    }

    /// Every amplitude multiplied by `factor`.
    pub fn scaled_all(&self, factor: Complex64) -> Self {
        let terms = self.terms.iter().map(|(w, p)| (*w, p.scaled(factor))).collect();
        Self { terms, constants: self.constants, node_threshold: self.node_threshold }
    }

    /// Distinct labels, sorted.
    pub fn labels(&self) -> Vec<WwLabel> {
        let mut labels: Vec<WwLabel> = self.terms.iter().map(|(w, _)| *w).collect();
        labels.sort();
        labels.dedup();
        labels
    }

    pub fn max_birth_time(&self) -> f64 {
        self.terms.iter().map(|(_, p)| p.birth_time).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn evaluate(&self, w: WwLabel, x: &Vec2, t: f64) -> Complex64 {
        self.terms.iter().filter(|(l, _)| *l == w).map(|(_, p)| p.value(x, t, &self.constants)).sum()
    }

    pub fn jet(&self, w: WwLabel, x: &Vec2, t: f64) -> Jet {
        let mut acc = Jet::zero();
        for (_, p) in self.terms.iter().filter(|(l, _)| *l == w) {
            acc.add(&p.jet(x, t, &self.constants));
        }
        acc
    }

    /// Marginal density summed over which-way labels.
    pub fn density(&self, x: &Vec2, t: f64) -> f64 {
        self.labels().into_iter().map(|w| self.evaluate(w, x, t).norm_sqr()).sum()
    }

    /// Largest single-term peak density: the reference scale for node and support thresholds.
    pub fn peak_density(&self, t: f64) -> f64 {
        self.terms.iter().map(|(_, p)| p.peak_density(t, &self.constants)).fold(0.0, f64::max)
    }

    pub fn node_epsilon(&self, t: f64) -> f64 {
        self.node_threshold * self.peak_density(t)
    }

    fn node_error(&self, x: &Vec2, t: f64, density: f64, threshold: f64) -> Error {
        Error::NodeProximity { x: x.x, y: x.y, t, density, threshold }
    }

    /// Guidance velocity `(ħ/m) Im(Ψ*∇Ψ)/|Ψ|²` together with the local density.
    pub fn guide(&self, w: WwLabel, x: &Vec2, t: f64) -> Result<Guidance> {
        let mut value = Complex64::new(0.0, 0.0);
        let mut grad = CVec2::zeros();
        let mut peak = 0.0f64;
        for (l, p) in &self.terms {
            peak = peak.max(p.peak_density(t, &self.constants));
            if *l == w {
                let j = p.jet(x, t, &self.constants);
                value += j.value;
                grad += j.grad;
            }
        }
        let density = value.norm_sqr();
        let threshold = self.node_threshold * peak;
        if !(density >= threshold) || density == 0.0 {
            return Err(self.node_error(x, t, density, threshold));
        }
        let scale = self.constants.hbar_over_m() / density;
        let velocity = Vec2::new((value.conj() * grad.x).im * scale, (value.conj() * grad.y).im * scale);
        Ok(Guidance { velocity, density, peak })
    }

    pub fn velocity(&self, w: WwLabel, x: &Vec2, t: f64) -> Result<Vec2> {
        self.guide(w, x, t).map(|g| g.velocity)
    }

    /// `U = −(ħ²/2m) ∇²R/R` with `∇²R/R = Re(∇²Ψ/Ψ) + |Im(∇Ψ/Ψ)|²`.
    pub fn quantum_potential(&self, w: WwLabel, x: &Vec2, t: f64) -> Result<f64> {
        let jet = self.jet(w, x, t);
        let density = jet.value.norm_sqr();
        let threshold = self.node_epsilon(t);
        if !(density >= threshold) || density == 0.0 {
            return Err(self.node_error(x, t, density, threshold));
        }
        let lap_ratio = jet.laplacian / jet.value;
        let gx = (jet.grad.x / jet.value).im;
        let gy = (jet.grad.y / jet.value).im;
        let lap_r_over_r = lap_ratio.re + gx * gx + gy * gy;
        Ok(-self.constants.hbar * self.constants.hbar / (2.0 * self.constants.mass) * lap_r_over_r)
    }

    /// Analytic norm at time `t`; cross-label pairs contribute nothing.
    pub fn norm_at(&self, t: f64) -> f64 {
        let mut total = 0.0;
        for (i, (wi, pi)) in self.terms.iter().enumerate() {
            total += pi.overlap(pi, t, &self.constants).re;
            for (wj, pj) in &self.terms[i + 1..] {
                if wi == wj {
                    total += 2.0 * pi.overlap(pj, t, &self.constants).re;
                }
            }
        }
        total
    }

    /// Analytic norm, evaluated at the latest birth time of the terms.
    pub fn norm(&self) -> f64 {
        if self.terms.is_empty() {
            return 0.0;
        }
        self.norm_at(self.max_birth_time())
    }
}

/// `|R² − (R_r² + R_t² + 2R_rR_t cos((S_r − S_t)/ħ))|` for a two-term unlabeled field.
pub fn interference_identity_check(field: &WaveField, x: &Vec2, t: f64) -> Result<f64> {
    let terms = field.terms();
    if terms.len() != 2 || terms.iter().any(|(w, _)| *w != WwLabel::None) {
        return Err(Error::Precondition("interference identity needs exactly two unlabeled terms".into()));
    }
    let c = field.constants();
    let eps = field.node_epsilon(t).sqrt();
    let a = terms[0].1.value(x, t, c);
    let b = terms[1].1.value(x, t, c);
    let pa = polar_decompose(a, c.hbar, eps);
    let pb = polar_decompose(b, c.hbar, eps);
    let (Some(sa), Some(sb)) = (pa.s_phase, pb.s_phase) else {
        return Err(Error::Precondition(format!("a term amplitude is below the node threshold at ({}, {})", x.x, x.y)));
    };
    let lhs = field.evaluate(WwLabel::None, x, t).norm_sqr();
    let rhs = pa.p_density + pb.p_density + 2.0 * pa.r_amp * pb.r_amp * ((sa - sb) / c.hbar).cos();
    Ok((lhs - rhs).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn c1() -> PhysicalConstants {
        PhysicalConstants::default()
    }

    fn packet(cx: f64, cy: f64, kx: f64, ky: f64, amp: Complex64) -> GaussianPacket {
        GaussianPacket::new(Vec2::new(cx, cy), Vec2::new(kx, ky), 1.0, 0.0, amp).unwrap()
    }

    fn unit() -> Complex64 {
        Complex64::new(1.0, 0.0)
    }

    /// Central-difference phase gradient with branch-cut unwrapping.
    fn fd_phase_gradient(f: &WaveField, w: WwLabel, x: &Vec2, t: f64, h: f64) -> Vec2 {
        let dphi = |e: Vec2| {
            let p = f.evaluate(w, &(x + e * h), t);
            let m = f.evaluate(w, &(x - e * h), t);
            (p * m.conj()).arg() / (2.0 * h)
        };
        Vec2::new(dphi(Vec2::x()), dphi(Vec2::y()))
    }

    fn fd_laplacian_of_amplitude(f: &WaveField, w: WwLabel, x: &Vec2, t: f64, h: f64) -> f64 {
        let r = |p: Vec2| f.evaluate(w, &p, t).norm();
        let r0 = r(*x);
        let mut lap = 0.0;
        for e in [Vec2::x(), Vec2::y()] {
            lap += (r(x + e * h) - 2.0 * r0 + r(x - e * h)) / (h * h);
        }
        lap / r0
    }

    #[test]
    fn peak_at_drifted_center() {
        let p = packet(1.0, -2.0, 3.0, 1.0, unit());
        let f = WaveField::single(p, c1());
        let t = 0.7;
        let c = p.center(t, &c1());
        let peak = f.evaluate(WwLabel::None, &c, t).norm();
        for (dx, dy) in [(0.1, 0.0), (0.0, -0.1), (0.3, 0.2), (-1.0, 0.5)] {
            assert!(f.evaluate(WwLabel::None, &(c + Vec2::new(dx, dy)), t).norm() < peak);
        }
    }

    #[test]
    fn label_partition_swaps_exactly() {
        let a = packet(0.0, 3.0, 1.0, 0.0, Complex64::new(0.6, 0.1));
        let b = packet(0.5, -3.0, 0.0, 1.0, Complex64::new(0.2, -0.7));
        let f = WaveField::new(vec![(WwLabel::R, a), (WwLabel::T, b)], c1()).unwrap();
        let g = WaveField::new(vec![(WwLabel::T, a), (WwLabel::R, b)], c1()).unwrap();
        let x = Vec2::new(0.3, 1.0);
        assert_eq!(f.evaluate(WwLabel::R, &x, 0.4), a.value(&x, 0.4, &c1()));
        assert_eq!(f.evaluate(WwLabel::R, &x, 0.4), g.evaluate(WwLabel::T, &x, 0.4));
        assert_eq!(f.evaluate(WwLabel::None, &x, 0.4), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn destructive_node_between_equal_packets() {
        // Same envelope, opposite sign: exact node everywhere the envelopes agree.
        let a = packet(0.0, 0.0, 2.0, 0.0, unit());
        let b = packet(0.0, 0.0, 2.0, 0.0, -unit());
        let f = WaveField::new(vec![(WwLabel::None, a), (WwLabel::None, b)], c1()).unwrap();
        assert!(f.evaluate(WwLabel::None, &Vec2::new(0.2, 0.1), 0.3).norm() < 1e-12);
        // Opposite wavevectors: nodes where S_r − S_t = πħ on the x axis.
        let a = packet(0.0, 0.0, 3.0, 0.0, unit());
        let b = packet(0.0, 0.0, -3.0, 0.0, unit());
        let f = WaveField::new(vec![(WwLabel::None, a), (WwLabel::None, b)], c1()).unwrap();
        let node = Vec2::new(PI / 6.0, 0.0);
        assert!(f.evaluate(WwLabel::None, &node, 0.0).norm() < 1e-12);
    }

    #[test]
    fn polar_examples() {
        let p = polar_decompose(unit(), 1.0, 1e-12);
        assert_eq!((p.r_amp, p.s_phase, p.p_density), (1.0, Some(0.0), 1.0));
        let p = polar_decompose(I, 1.0, 1e-12);
        assert_relative_eq!(p.s_phase.unwrap(), PI / 2.0, epsilon = 1e-15);
        assert_eq!(p.r_amp, 1.0);
        let p = polar_decompose(Complex64::new(0.0, 0.0), 1.0, 1e-12);
        assert_eq!((p.r_amp, p.s_phase, p.p_density), (0.0, None, 0.0));
        // arg in (−π, π]
        let p = polar_decompose(Complex64::new(-1.0, -0.0), 2.0, 0.0);
        assert_eq!(p.s_phase, Some(2.0 * PI));
    }

    #[test]
    fn velocity_at_center_is_group_velocity() {
        let c = PhysicalConstants::new(1.3, 0.7).unwrap();
        let p = GaussianPacket::new(Vec2::new(-2.0, 1.0), Vec2::new(4.0, -1.5), 0.8, 0.2, unit()).unwrap();
        let f = WaveField::single(p, c);
        for t in [0.2, 0.9, 3.0] {
            let v = f.velocity(WwLabel::None, &p.center(t, &c), t).unwrap();
            let expect = p.wavevector * c.hbar / c.mass;
            assert!((v - expect).norm() <= 1e-12 * expect.norm());
        }
    }

    #[test]
    fn plane_wave_limit() {
        let p = GaussianPacket::new(Vec2::zeros(), Vec2::new(2.0, 1.0), 1e4, 0.0, unit()).unwrap();
        let f = WaveField::single(p, c1());
        let v = f.velocity(WwLabel::None, &Vec2::new(3.0, -2.0), 0.5).unwrap();
        assert!((v - p.wavevector).norm() < 1e-6 * p.wavevector.norm());
    }

    fn overlapping_pair() -> WaveField {
        let a = packet(0.0, 0.0, 3.0, 1.0, Complex64::new(0.5, 0.2));
        let b = packet(0.8, -0.4, -1.0, 2.5, Complex64::new(-0.3, 0.5));
        WaveField::new(vec![(WwLabel::None, a), (WwLabel::None, b)], c1()).unwrap()
    }

    #[test]
    fn velocity_matches_phase_finite_difference() {
        let f = overlapping_pair();
        for (x, t) in [(Vec2::new(0.3, 0.2), 0.1), (Vec2::new(-0.4, 0.9), 0.5), (Vec2::new(1.1, -0.6), 1.2)] {
            let v = f.velocity(WwLabel::None, &x, t).unwrap();
            let fd = fd_phase_gradient(&f, WwLabel::None, &x, t, 1e-5);
            assert!((v - fd).norm() < 1e-6 * v.norm(), "{v} vs {fd}");
        }
    }

    #[test]
    fn static_gaussian_quantum_potential_at_center() {
        let sigma = 0.7;
        let p = GaussianPacket::new(Vec2::new(1.0, 2.0), Vec2::zeros(), sigma, 0.0, unit()).unwrap();
        let f = WaveField::single(p, c1());
        let u = f.quantum_potential(WwLabel::None, &p.center0, 0.0).unwrap();
        // Finite-difference oracle of ∇²R/R, then the closed value ħ²·d/(2m·2σ0²).
        let fd = -0.5 * fd_laplacian_of_amplitude(&f, WwLabel::None, &p.center0, 0.0, 1e-3);
        let closed = 2.0 / (2.0 * 2.0 * sigma * sigma);
        assert_relative_eq!(fd, closed, max_relative = 1e-5);
        assert_relative_eq!(u, closed, max_relative = 1e-12);
    }

    #[test]
    fn quantum_potential_matches_finite_difference_in_tail_and_overlap() {
        let p = packet(0.0, 0.0, 2.0, -1.0, unit());
        let single = WaveField::single(p, c1());
        let f = overlapping_pair();
        for (field, x, t) in [
            (&single, Vec2::new(0.0, 0.0), 0.0),
            (&single, Vec2::new(3.5, -3.0), 0.8),
            (&f, Vec2::new(0.3, 0.2), 0.1),
            (&f, Vec2::new(-0.4, 0.9), 0.5),
        ] {
            let u = field.quantum_potential(WwLabel::None, &x, t).unwrap();
            let fd = -0.5 * fd_laplacian_of_amplitude(field, WwLabel::None, &x, t, 1e-4);
            assert!((u - fd).abs() < 1e-5 * u.abs().max(1.0), "{u} vs {fd}");
        }
        // Pure Gaussian: ∇²R/R is a polynomial, so U stays bounded far out.
        let far = single.quantum_potential(WwLabel::None, &Vec2::new(4.5, 2.5), 0.8).unwrap();
        assert!(far.is_finite());
    }

    #[test]
    fn disjoint_packet_leaves_quantum_potential_unchanged() {
        let a = packet(0.0, 0.0, 3.0, 0.0, Complex64::new(FRAC_1_SQRT_2, 0.0));
        let b = packet(0.0, 12.0, 3.0, 0.0, Complex64::new(FRAC_1_SQRT_2, 0.0));
        let pair = WaveField::new(vec![(WwLabel::None, a), (WwLabel::None, b)], c1()).unwrap();
        let alone = WaveField::single(a, c1());
        for x in [Vec2::new(0.0, 0.0), Vec2::new(0.5, 1.0), Vec2::new(-1.0, -0.7)] {
            let du = pair.quantum_potential(WwLabel::None, &x, 0.2).unwrap() - alone.quantum_potential(WwLabel::None, &x, 0.2).unwrap();
            assert!(du.abs() < 1e-9);
        }
    }
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn node_proximity_is_reported() {
        let a = packet(0.0, 0.0, 3.0, 0.0, unit());
        let b = packet(0.0, 0.0, -3.0, 0.0, unit());
        let f = WaveField::new(vec![(WwLabel::None, a), (WwLabel::None, b)], c1()).unwrap();
        let node = Vec2::new(PI / 6.0, 0.0);
        assert!(matches!(f.velocity(WwLabel::None, &node, 0.0), Err(Error::NodeProximity { .. })));
        assert!(matches!(f.quantum_potential(WwLabel::None, &node, 0.0), Err(Error::NodeProximity { .. })));
        // Off-label evaluation is a node everywhere.
        assert!(f.velocity(WwLabel::R, &Vec2::zeros(), 0.0).is_err());
    }

    #[test]
    fn interference_identity_cases() {
        // Constructive: identical packets.
        let a = packet(0.0, 0.0, 1.0, 0.0, unit());
        let f = WaveField::new(vec![(WwLabel::None, a), (WwLabel::None, a)], c1()).unwrap();
        let x = Vec2::new(0.2, 0.1);
        let ra2 = a.value(&x, 0.3, &c1()).norm_sqr();
        assert_relative_eq!(f.evaluate(WwLabel::None, &x, 0.3).norm_sqr(), 4.0 * ra2, max_relative = 1e-12);
        assert!(interference_identity_check(&f, &x, 0.3).unwrap() < 1e-12);
        // Destructive point ΔS = πħ.
        let a = packet(0.0, 0.0, 3.0, 0.0, unit());
        let b = packet(0.0, 0.0, -3.0, 0.0, unit());
        let f = WaveField::new(vec![(WwLabel::None, a), (WwLabel::None, b)], c1()).unwrap();
        let node = Vec2::new(PI / 6.0, 0.3);
        assert!(f.evaluate(WwLabel::None, &node, 0.0).norm_sqr() < 1e-24);
        assert!(interference_identity_check(&f, &node, 0.0).unwrap() < 1e-12);
        // Precondition.
        let g = WaveField::single(a, c1());
        assert!(matches!(interference_identity_check(&g, &node, 0.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn norm_examples() {
        let p = packet(1.0, 2.0, 3.0, 4.0, unit());
        assert_relative_eq!(WaveField::single(p, c1()).norm(), 1.0, epsilon = 1e-12);
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let f = WaveField::new(vec![(WwLabel::None, packet(0.0, 0.0, 1.0, 0.0, h)), (WwLabel::None, packet(0.0, 20.0, 1.0, 0.0, h))], c1()).unwrap();
        assert_relative_eq!(f.norm(), 1.0, epsilon = 1e-9);
        // Cross-label pairs never contribute, even when they overlap.
        let f = WaveField::new(vec![(WwLabel::R, packet(0.0, 0.0, 1.0, 0.0, h)), (WwLabel::T, packet(0.0, 0.0, 1.0, 0.0, h))], c1()).unwrap();
        assert_relative_eq!(f.norm(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn norm_matches_grid_quadrature() {
        let f = overlapping_pair();
        let t = 0.6;
        let h = 0.02;
        let mut q = 0.0;
        for i in -500..=500 {
            for j in -500..=500 {
                q += f.density(&Vec2::new(0.4 + i as f64 * h, j as f64 * h), t);
            }
        }
        q *= h * h;
        assert!((q - f.norm_at(t)).abs() < 1e-6, "{q} vs {}", f.norm_at(t));
    }

    #[test]
    fn rejects_three_labels_and_bad_width() {
        let p = packet(0.0, 0.0, 0.0, 0.0, unit());
        assert!(WaveField::new(vec![(WwLabel::None, p), (WwLabel::R, p), (WwLabel::T, p)], c1()).is_err());
        assert!(GaussianPacket::new(Vec2::zeros(), Vec2::zeros(), -1.0, 0.0, unit()).is_err());
        assert!(PhysicalConstants::new(0.0, 1.0).is_err());
    }

    fn arb_packet() -> impl Strategy<Value = GaussianPacket> {
        (-3.0..3.0f64, -3.0..3.0f64, -5.0..5.0f64, -5.0..5.0f64, 0.5..2.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_map(|(cx, cy, kx, ky, s, ar, ai)| {
                GaussianPacket::new(Vec2::new(cx, cy), Vec2::new(kx, ky), s, 0.0, Complex64::new(ar, ai + 1.5)).unwrap()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn norm_is_constant_in_time(a in arb_packet(), b in arb_packet(), t in 0.0..5.0f64) {
            let f = WaveField::new(vec![(WwLabel::None, a), (WwLabel::None, b)], c1()).unwrap();
            let n0 = f.norm_at(0.0);
            prop_assert!((f.norm_at(t) - n0).abs() <= 1e-12 * n0.max(1.0));
        }

        #[test]
        fn analytic_derivatives_match_finite_differences(a in arb_packet(), b in arb_packet(),
                                                       px in -1.0..1.0f64, py in -1.0..1.0f64, t in 0.0..2.0f64) {
            let f = WaveField::new(vec![(WwLabel::None, a), (WwLabel::None, b)], c1()).unwrap();
            let x = Vec2::new(px, py);
            let jet = f.jet(WwLabel::None, &x, t);
            prop_assume!(jet.value.norm_sqr() > 1e-6 * f.peak_density(t));
            let h = 1e-4 * a.sigma0.min(b.sigma0);
            let e = |d: Vec2| f.evaluate(WwLabel::None, &(x + d), t);
            let gx = (e(Vec2::new(h, 0.0)) - e(Vec2::new(-h, 0.0))) / (2.0 * h);
            let gy = (e(Vec2::new(0.0, h)) - e(Vec2::new(0.0, -h))) / (2.0 * h);
            let lap = (e(Vec2::new(h, 0.0)) + e(Vec2::new(-h, 0.0)) + e(Vec2::new(0.0, h)) + e(Vec2::new(0.0, -h)) - 4.0 * jet.value) / (h * h);
            let gscale = jet.grad.x.norm().max(jet.grad.y.norm()).max(jet.value.norm());
            prop_assert!((gx - jet.grad.x).norm() < 1e-5 * gscale);
            prop_assert!((gy - jet.grad.y).norm() < 1e-5 * gscale);
            // Second differences lose accuracy to cancellation; scale by |Ψ|·(k²+1/σ²).
            let lscale = jet.laplacian.norm().max(jet.value.norm() * 50.0);
            prop_assert!((lap - jet.laplacian).norm() < 1e-5 * lscale);
        }

        #[test]
        fn label_densities_sum_to_total(a in arb_packet(), b in arb_packet(), px in -3.0..3.0f64, py in -3.0..3.0f64) {
            let f = WaveField::new(vec![(WwLabel::R, a), (WwLabel::T, b)], c1()).unwrap();
            let x = Vec2::new(px, py);
            let sum = f.evaluate(WwLabel::R, &x, 0.5).norm_sqr() + f.evaluate(WwLabel::T, &x, 0.5).norm_sqr();
            prop_assert!((sum - f.density(&x, 0.5)).abs() <= 1e-15 * sum.max(1e-300));
        }

        #[test]
        fn interference_identity_holds(a in arb_packet(), b in arb_packet(), px in -2.0..2.0f64, py in -2.0..2.0f64, t in 0.0..2.0f64) {
            let f = WaveField::new(vec![(WwLabel::None, a), (WwLabel::None, b)], c1()).unwrap();
            if let Ok(r) = interference_identity_check(&f, &Vec2::new(px, py), t) {
                prop_assert!(r < 1e-10);
            }
        }
    }
}
