//! Time-dependent planar velocity fields and their finite-time flow maps.
//!
//! The built-in field is the quasi-periodically forced stratospheric jet
//! given by the streamfunction
//!
//! ```text
//! Psi(x, y, t) = c3 y - U0 L tanh(y/L)
//!              + U0 L sech^2(y/L) [A3 cos(ka x) + A2 cos(k2 x - s2 t) + A1 cos(k1 x - s1 t)]
//! ```
//!
//! with `dx/dt = -dPsi/dy`, `dy/dt = dPsi/dx`. Trajectories are integrated
//! with fixed-step classical RK4, eight lanes at a time.

use serde::{Deserialize, Serialize};
use wide::f64x8 as Lanes;

const LANES: usize = 8;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

/// Which wavenumber multiplies `x` in the stationary `A3` term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum A3Wavenumber {
    #[default]
    K1,
    K3,
}

/// Parameters of the stratospheric jet plus integration settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    pub u0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub l: f64,
    pub c2: f64,
    pub c3: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub re: f64,
    pub s1: f64,
    pub s2: f64,
    pub t0: f64,
    pub t1: f64,
    /// RK4 step.
    pub h: f64,
    pub x_period: f64,
    pub periodic_x: bool,
    #[serde(default)]
    pub a3_wavenumber: A3Wavenumber,
}

impl FlowSpec {
    /// The jet with its published parameter set over `t = 10 .. 20`.
    pub fn stratospheric() -> Self {
        let u0 = 5.41;
        let re = 6.371;
        Self::from_parameters(
            u0,
            [0.075, 0.4, 0.2],
            1.770,
            0.205 * u0,
            0.7 * u0,
            re,
            (10.0, 20.0),
            0.01,
        )
    }

    /// Builds a spec with `k1 = 2/re`, `k2 = 4/re`, `k3 = 6/re` and the
    /// derived phase speeds `s2 = k2 (c2 - c3)`, `s1 = s2 (1 + sqrt 5) / 2`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parameters(
        u0: f64,
        [a1, a2, a3]: [f64; 3],
        l: f64,
        c2: f64,
        c3: f64,
        re: f64,
        (t0, t1): (f64, f64),
        h: f64,
    ) -> Self {
        let k1 = 2.0 / re;
        let k2 = 4.0 / re;
        let k3 = 6.0 / re;
        let (s1, s2) = derived_speeds(k2, c2, c3);
        Self {
            u0,
            a1,
            a2,
            a3,
            l,
            c2,
            c3,
            k1,
            k2,
            k3,
            re,
            s1,
            s2,
            t0,
            t1,
            h,
            x_period: std::f64::consts::PI * re,
            periodic_x: true,
            a3_wavenumber: A3Wavenumber::K1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (s1, s2) = derived_speeds(self.k2, self.c2, self.c3);
        if (s1 - self.s1).abs() > 1e-12 || (s2 - self.s2).abs() > 1e-12 {
            return Err(Error::InvalidFlow(format!(
                "stored phase speeds ({}, {}) disagree with k2 (c2 - c3) derivation ({s1}, {s2})",
                self.s1, self.s2
            )));
        }
        if !(self.h > 0.0) {
            return Err(Error::InvalidFlow(format!(
                "step h = {} must be positive",
                self.h
            )));
        }
        if !(self.t1 > self.t0) {
            return Err(Error::InvalidFlow(format!(
                "t1 = {} must exceed t0 = {}",
                self.t1, self.t0
            )));
        }
        if self.periodic_x && !(self.x_period > 0.0) {
            return Err(Error::InvalidFlow("x_period must be positive".into()));
        }
        if !(self.l > 0.0) {
            return Err(Error::InvalidFlow("jet width L must be positive".into()));
        }
        Ok(())
    }

    fn stationary_wavenumber(&self) -> f64 {
        match self.a3_wavenumber {
            A3Wavenumber::K1 => self.k1,
            A3Wavenumber::K3 => self.k3,
        }
    }

    /// Streamfunction value.
    pub fn psi(&self, p: Point, t: f64) -> f64 {
        let z = p.y / self.l;
        let sech2 = 1.0 / z.cosh().powi(2);
        let wave = self.a3 * (self.stationary_wavenumber() * p.x).cos()
            + self.a2 * (self.k2 * p.x - self.s2 * t).cos()
            + self.a1 * (self.k1 * p.x - self.s1 * t).cos();
        self.c3 * p.y - self.u0 * self.l * z.tanh() + self.u0 * self.l * sech2 * wave
    }

    /// Analytic velocity `(-dPsi/dy, dPsi/dx)`.
    pub fn velocity(&self, p: Point, t: f64) -> Point {
        let kernel = Kernel::new(self);
        let trig = PhaseTrig::at(self, t);
        let (vx, vy) = kernel.velocity(Lanes::splat(p.x), Lanes::splat(p.y), &trig);
        Point::new(vx.to_array()[0], vy.to_array()[0])
    }

    /// Reduces `x` into the fundamental period when periodicity is enabled.
    pub fn wrap(&self, p: Point) -> Point {
        if self.periodic_x {
            Point::new(wrap_periodic(p.x, self.x_period), p.y)
        } else {
            p
        }
    }

    /// Flow map between two times.
    pub fn flow_map(&self, p: Point, t_start: f64, t_end: f64) -> Result<Point> {
        let mut pts = [p];
        self.advect(&mut pts, t_start, t_end)?;
        Ok(pts[0])
    }

    /// Advects a batch of points in place between two times.
    pub fn advect(&self, points: &mut [Point], t_start: f64, t_end: f64) -> Result<()> {
        Advection::new(self, t_start, t_end)?.map_points(points)
    }

    /// The flow map over `[t0, t1]` with time tables precomputed.
    pub fn flow(&self) -> Result<Advection> {
        Advection::new(self, self.t0, self.t1)
    }
}

fn derived_speeds(k2: f64, c2: f64, c3: f64) -> (f64, f64) {
    let s2 = k2 * (c2 - c3);
    (s2 * (1.0 + 5f64.sqrt()) / 2.0, s2)
}

pub(crate) fn wrap_periodic(x: f64, period: f64) -> f64 {
    let w = x.rem_euclid(period);
    // rem_euclid can round up to the period itself for tiny negative inputs
    if w >= period {
        0.0
    } else {
        w
    }
}

/// A deterministic map on planar points, applied in batches.
pub trait FlowMap: Sync {
    fn map_points(&self, points: &mut [Point]) -> Result<()>;

    fn map_point(&self, p: Point) -> Result<Point> {
        let mut pts = [p];
        self.map_points(&mut pts)?;
        Ok(pts[0])
    }
}

impl<F: FlowMap + ?Sized> FlowMap for &F {
    fn map_points(&self, points: &mut [Point]) -> Result<()> {
        (**self).map_points(points)
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Identity;

impl FlowMap for Identity {
    fn map_points(&self, _points: &mut [Point]) -> Result<()> {
        Ok(())
    }
}

/// Rigid shift, optionally wrapped in `x`.
#[derive(Clone, Copy, Debug)]
pub struct Translation {
    pub offset: Point,
    pub x_period: Option<f64>,
}

impl FlowMap for Translation {
    fn map_points(&self, points: &mut [Point]) -> Result<()> {
        for p in points.iter_mut() {
            *p = *p + self.offset;
            if let Some(period) = self.x_period {
                p.x = wrap_periodic(p.x, period);
            }
        }
        Ok(())
    }
}

/// Any pointwise function used as a flow map.
pub struct PointMap<F>(pub F);

impl<F: Fn(Point) -> Point + Sync> FlowMap for PointMap<F> {
    fn map_points(&self, points: &mut [Point]) -> Result<()> {
        for p in points.iter_mut() {
            let q = (self.0)(*p);
            if !q.is_finite() {
                return Err(Error::Integration { point: *p });
            }
            *p = q;
        }
        Ok(())
    }
}

/// `cos`/`sin` of the two travelling-wave phases at one time.
#[derive(Clone, Copy, Debug)]
struct PhaseTrig {
    cos1: f64,
    sin1: f64,
    cos2: f64,
    sin2: f64,
}

impl PhaseTrig {
    fn at(spec: &FlowSpec, t: f64) -> Self {
        let (sin1, cos1) = (spec.s1 * t).sin_cos();
        let (sin2, cos2) = (spec.s2 * t).sin_cos();
        Self {
            cos1,
            sin1,
            cos2,
            sin2,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Harmonic {
    Same,
    Double,
    Triple,
    Independent(f64),
}

impl Harmonic {
    fn of(k: f64, base: f64) -> Self {
        if k == base {
            Harmonic::Same
        } else if k == 2.0 * base {
            Harmonic::Double
        } else if (k - 3.0 * base).abs() <= 4.0 * f64::EPSILON * k.abs() {
            Harmonic::Triple
        } else {
            Harmonic::Independent(k)
        }
    }

    /// `(sin kx, cos kx)` from `(sin k1 x, cos k1 x)`.
    #[inline(always)]
    fn eval(self, x: Lanes, s: Lanes, c: Lanes) -> (Lanes, Lanes) {
        match self {
            Harmonic::Same => (s, c),
            Harmonic::Double => (Lanes::splat(2.0) * s * c, c * c - s * s),
            Harmonic::Triple => {
                let s2 = s * s;
                let c2 = c * c;
                (
                    s * (Lanes::splat(3.0) - Lanes::splat(4.0) * s2),
                    c * (Lanes::splat(4.0) * c2 - Lanes::splat(3.0)),
                )
            }
            Harmonic::Independent(k) => (x * Lanes::splat(k)).sin_cos(),
        }
    }
}

/// Lane-parallel velocity evaluation.
#[derive(Clone, Debug)]
struct Kernel {
    u0: f64,
    a1: f64,
    a2: f64,
    a3: f64,
    inv_l: f64,
    u0l: f64,
    c3: f64,
    k1: f64,
    k2: f64,
    ka: f64,
    second: Harmonic,
    stationary: Harmonic,
}

impl Kernel {
    fn new(spec: &FlowSpec) -> Self {
        let ka = spec.stationary_wavenumber();
        Self {
            u0: spec.u0,
            a1: spec.a1,
            a2: spec.a2,
            a3: spec.a3,
            inv_l: 1.0 / spec.l,
            u0l: spec.u0 * spec.l,
            c3: spec.c3,
            k1: spec.k1,
            k2: spec.k2,
            ka,
            second: Harmonic::of(spec.k2, spec.k1),
            stationary: Harmonic::of(ka, spec.k1),
        }
    }

    #[inline(always)]
    fn velocity(&self, x: Lanes, y: Lanes, trig: &PhaseTrig) -> (Lanes, Lanes) {
        let one = Lanes::splat(1.0);
        let two = Lanes::splat(2.0);

        // tanh and sech^2 from a single expm1 so both stay accurate for large |y|
        let z = y * Lanes::splat(self.inv_l);
        let t = (Lanes::splat(-2.0) * z.abs()).exp_m1();
        let denom = two + t;
        let tanh = (-t / denom).flip_signs(z);
        let sech2 = Lanes::splat(4.0) * (one + t) / (denom * denom);

        let (s1x, c1x) = (x * Lanes::splat(self.k1)).sin_cos();
        let (s2x, c2x) = self.second.eval(x, s1x, c1x);
        let (sax, cax) = self.stationary.eval(x, s1x, c1x);

        let (cs1, ss1) = (Lanes::splat(trig.cos1), Lanes::splat(trig.sin1));
        let (cs2, ss2) = (Lanes::splat(trig.cos2), Lanes::splat(trig.sin2));

        // cos(kx - st) = cos kx cos st + sin kx sin st
        // sin(kx - st) = sin kx cos st - cos kx sin st
        let cos_w1 = c1x * cs1 + s1x * ss1;
        let sin_w1 = s1x * cs1 - c1x * ss1;
        let cos_w2 = c2x * cs2 + s2x * ss2;
        let sin_w2 = s2x * cs2 - c2x * ss2;

        let a1 = Lanes::splat(self.a1);
        let a2 = Lanes::splat(self.a2);
        let a3 = Lanes::splat(self.a3);
        let wave = a3 * cax + a2 * cos_w2 + a1 * cos_w1;
        let wave_x = a3 * Lanes::splat(self.ka) * sax
            + a2 * Lanes::splat(self.k2) * sin_w2
            + a1 * Lanes::splat(self.k1) * sin_w1;

        let u0 = Lanes::splat(self.u0);
        let vx = u0 * sech2 - Lanes::splat(self.c3) + two * u0 * sech2 * tanh * wave;
        let vy = -Lanes::splat(self.u0l) * sech2 * wave_x;
        (vx, vy)
    }
}

/// Fixed-step RK4 flow map of a [`FlowSpec`] over one time window.
#[derive(Clone, Debug)]
pub struct Advection {
    spec: FlowSpec,
    kernel: Kernel,
    dt: f64,
    /// Phase trig at `t_start + i dt / 2`, `i = 0 ..= 2 n`.
    half_steps: Vec<PhaseTrig>,
}

impl Advection {
    pub fn new(spec: &FlowSpec, t_start: f64, t_end: f64) -> Result<Self> {
        spec.validate()?;
        if !(t_end >= t_start) {
            return Err(Error::InvalidFlow(format!(
                "integration window [{t_start}, {t_end}] runs backwards"
            )));
        }
        let span = t_end - t_start;
        let steps = if span == 0.0 {
            0
        } else {
            (span / spec.h - 1e-9).ceil().max(1.0) as usize
        };
        let dt = if steps == 0 { 0.0 } else { span / steps as f64 };
        let half_steps = (0..=2 * steps)
            .map(|i| PhaseTrig::at(spec, t_start + 0.5 * dt * i as f64))
            .collect();
        Ok(Self {
            spec: spec.clone(),
            kernel: Kernel::new(spec),
            dt,
            half_steps,
        })
    }

    pub fn spec(&self) -> &FlowSpec {
        &self.spec
    }

    pub fn steps(&self) -> usize {
        self.half_steps.len() / 2
    }

    fn integrate_lanes(&self, mut x: Lanes, mut y: Lanes) -> (Lanes, Lanes) {
        let h = Lanes::splat(self.dt);
        let half = Lanes::splat(0.5 * self.dt);
        let sixth = Lanes::splat(self.dt / 6.0);
        let two = Lanes::splat(2.0);
        let k = &self.kernel;
        for step in 0..self.steps() {
            let ta = &self.half_steps[2 * step];
            let tm = &self.half_steps[2 * step + 1];
            let tb = &self.half_steps[2 * step + 2];
            let (k1x, k1y) = k.velocity(x, y, ta);
            let (k2x, k2y) = k.velocity(x + half * k1x, y + half * k1y, tm);
            let (k3x, k3y) = k.velocity(x + half * k2x, y + half * k2y, tm);
            let (k4x, k4y) = k.velocity(x + h * k3x, y + h * k3y, tb);
            x += sixth * (k1x + two * (k2x + k3x) + k4x);
            y += sixth * (k1y + two * (k2y + k3y) + k4y);
        }
        (x, y)
    }
}

impl FlowMap for Advection {
    fn map_points(&self, points: &mut [Point]) -> Result<()> {
        for chunk in points.chunks_mut(LANES) {
            let mut xs = [chunk[0].x; LANES];
            let mut ys = [chunk[0].y; LANES];
            for (lane, p) in chunk.iter().enumerate() {
                xs[lane] = p.x;
                ys[lane] = p.y;
            }
            let (x, y) = self.integrate_lanes(Lanes::from(xs), Lanes::from(ys));
            let (x, y) = (x.to_array(), y.to_array());
            for (lane, p) in chunk.iter_mut().enumerate() {
                let q = self.spec.wrap(Point::new(x[lane], y[lane]));
                if !q.is_finite() {
                    return Err(Error::Integration { point: *p });
                }
                *p = q;
            }
        }
        Ok(())
    }
}

/// Instant at which a frame change is applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FrameTime {
    Initial,
    Final,
}

/// Proper orthogonal plus translational change of coordinates, specified at
/// the initial and final times: `Phi_t(p) = Q(t) p + b(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameTransform {
    pub theta0: f64,
    pub theta1: f64,
    pub b0: Point,
    pub b1: Point,
}

impl Default for FrameTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl FrameTransform {
    pub fn identity() -> Self {
        Self {
            theta0: 0.0,
            theta1: 0.0,
            b0: Point::default(),
            b1: Point::default(),
        }
    }

    pub fn translation(b0: Point, b1: Point) -> Self {
        Self {
            theta0: 0.0,
            theta1: 0.0,
            b0,
            b1,
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    /// Rotation matrix `[[c, -s], [s, c]]` at the given instant.
    pub fn rotation(&self, which: FrameTime) -> [[f64; 2]; 2] {
        let (s, c) = self.angle(which).sin_cos();
        [[c, -s], [s, c]]
    }

    fn angle(&self, which: FrameTime) -> f64 {
        match which {
            FrameTime::Initial => self.theta0,
            FrameTime::Final => self.theta1,
        }
    }

    fn shift(&self, which: FrameTime) -> Point {
        match which {
            FrameTime::Initial => self.b0,
            FrameTime::Final => self.b1,
        }
    }

    pub fn transform_point(&self, p: Point, which: FrameTime) -> Point {
        let [[a, b], [c, d]] = self.rotation(which);
        let s = self.shift(which);
        Point::new(a * p.x + b * p.y + s.x, c * p.x + d * p.y + s.y)
    }

    pub fn inverse_point(&self, p: Point, which: FrameTime) -> Point {
        let [[a, b], [c, d]] = self.rotation(which);
        let q = p - self.shift(which);
        // Q^{-1} = Q^T
        Point::new(a * q.x + c * q.y, b * q.x + d * q.y)
    }
}

/// `Phi_{t1} o T o Phi_{t0}^{-1}` for an inner flow map `T`.
pub struct TransformedFlow<F> {
    pub inner: F,
    pub frame: FrameTransform,
}

pub fn transformed_flow<F: FlowMap>(inner: F, frame: FrameTransform) -> TransformedFlow<F> {
    TransformedFlow { inner, frame }
}

impl<F: FlowMap> FlowMap for TransformedFlow<F> {
    fn map_points(&self, points: &mut [Point]) -> Result<()> {
        if self.frame.is_identity() {
            return self.inner.map_points(points);
        }
        for p in points.iter_mut() {
            *p = self.frame.inverse_point(*p, FrameTime::Initial);
        }
        self.inner.map_points(points)?;
        for p in points.iter_mut() {
            *p = self.frame.transform_point(*p, FrameTime::Final);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fd_velocity(spec: &FlowSpec, p: Point, t: f64) -> Point {
        let h = 1e-6;
        let dpsi_dy = (spec.psi(Point::new(p.x, p.y + h), t)
            - spec.psi(Point::new(p.x, p.y - h), t))
            / (2.0 * h);
        let dpsi_dx = (spec.psi(Point::new(p.x + h, p.y), t)
            - spec.psi(Point::new(p.x - h, p.y), t))
            / (2.0 * h);
        Point::new(-dpsi_dy, dpsi_dx)
    }

    #[test]
    fn derived_speeds_match() {
        let spec = FlowSpec::stratospheric();
        spec.validate().unwrap();
        assert_eq!(spec.k2, 2.0 * spec.k1);
        assert!((spec.x_period - 20.01509).abs() < 1e-4);
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let mut spec = FlowSpec::stratospheric();
        spec.s1 += 1e-9;
        assert!(spec.validate().is_err());
        let mut spec = FlowSpec::stratospheric();
        spec.h = 0.0;
        assert!(spec.validate().is_err());
        let mut spec = FlowSpec::stratospheric();
        spec.t1 = spec.t0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn velocity_on_axis() {
        let spec = FlowSpec::stratospheric();
        for &(x, t) in &[(0.0, 0.0), (3.3, 7.0), (12.0, 15.5)] {
            let v = spec.velocity(Point::new(x, 0.0), t);
            assert!((v.x - 1.6230).abs() < 1e-12, "{v:?}");
            let fd = fd_velocity(&spec, Point::new(x, 0.0), t);
            assert!((v.x - fd.x).abs() < 1e-6);
        }
        let v = spec.velocity(Point::new(0.0, 0.0), 0.0);
        assert_eq!(v.y, 0.0);
    }

    #[test]
    fn velocity_matches_streamfunction_gradient() {
        for choice in [A3Wavenumber::K1, A3Wavenumber::K3] {
            let mut spec = FlowSpec::stratospheric();
            spec.a3_wavenumber = choice;
            let p = Point::new(3.7, 1.2);
            let v = spec.velocity(p, 12.5);
            let fd = fd_velocity(&spec, p, 12.5);
            assert!((v.x - fd.x).abs() <= 1e-6 * fd.x.abs().max(1.0));
            assert!((v.y - fd.y).abs() <= 1e-6 * fd.y.abs().max(1.0));
        }
    }

    #[test]
    fn independent_wavenumbers_use_general_path() {
        let mut spec = FlowSpec::stratospheric();
        spec.k2 = 0.77;
        let (s1, s2) = derived_speeds(spec.k2, spec.c2, spec.c3);
        spec.s1 = s1;
        spec.s2 = s2;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let p = Point::new(rng.random_range(0.0..20.0), rng.random_range(-3.0..3.0));
            let t = rng.random_range(0.0..30.0);
            let v = spec.velocity(p, t);
            let fd = fd_velocity(&spec, p, t);
            assert!((v - fd).x.abs() < 1e-6 * fd.x.abs().max(1.0));
            assert!((v - fd).y.abs() < 1e-6 * fd.y.abs().max(1.0));
        }
    }

    #[test]
    fn zero_duration_is_identity() {
        let spec = FlowSpec::stratospheric();
        let p = Point::new(4.2, -1.1);
        assert_eq!(spec.flow_map(p, 12.0, 12.0).unwrap(), p);
        assert!(spec.flow_map(p, 12.0, 11.0).is_err());
    }

    #[test]
    fn batch_and_single_agree_bitwise() {
        let spec = FlowSpec::stratospheric();
        let flow = spec.flow().unwrap();
        let mut pts: Vec<Point> = (0..7)
            .map(|i| Point::new(1.3 * i as f64, 0.4 * i as f64 - 1.2))
            .collect();
        let singles: Vec<Point> = pts.iter().map(|&p| flow.map_point(p).unwrap()).collect();
        flow.map_points(&mut pts).unwrap();
        assert_eq!(pts, singles);
    }

    #[test]
    fn wrapped_output_stays_in_period() {
        let spec = FlowSpec::stratospheric();
        let q = spec.flow_map(Point::new(19.9, 0.0), 10.0, 20.0).unwrap();
        assert!(q.x >= 0.0 && q.x < spec.x_period);
        let mut open = spec.clone();
        open.periodic_x = false;
        let r = open.flow_map(Point::new(19.9, 0.0), 10.0, 20.0).unwrap();
        assert!((wrap_periodic(r.x, spec.x_period) - q.x).abs() < 1e-9);
    }

    #[test]
    fn non_finite_state_reports_point() {
        let flow = PointMap(|p: Point| Point::new(p.x / 0.0, p.y));
        match flow.map_point(Point::new(1.0, 2.0)) {
            Err(Error::Integration { point }) => assert_eq!(point, Point::new(1.0, 2.0)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rotation_is_proper_orthogonal() {
        let ft = FrameTransform {
            theta0: 0.3,
            theta1: -2.1,
            b0: Point::new(1.0, 2.0),
            b1: Point::default(),
        };
        for which in [FrameTime::Initial, FrameTime::Final] {
            let [[a, b], [c, d]] = ft.rotation(which);
            assert!((a * d - b * c - 1.0).abs() < 1e-12);
            assert!((a * a + c * c - 1.0).abs() < 1e-12);
            assert!((a * b + c * d).abs() < 1e-12);
        }
    }

    #[test]
    fn quarter_turn_round_trip() {
        let ft = FrameTransform {
            theta0: std::f64::consts::FRAC_PI_2,
            theta1: std::f64::consts::FRAC_PI_2,
            b0: Point::new(0.5, -3.0),
            b1: Point::new(2.0, 1.0),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let p = Point::new(rng.random_range(-20.0..20.0), rng.random_range(-5.0..5.0));
            for which in [FrameTime::Initial, FrameTime::Final] {
                let back = ft.inverse_point(ft.transform_point(p, which), which);
                assert!(back.dist(p) < 1e-14 * 32.0, "{p:?} -> {back:?}");
            }
        }
    }

    #[test]
    fn transformed_identity_is_inner_flow() {
        let spec = FlowSpec::stratospheric();
        let flow = spec.flow().unwrap();
        let tf = transformed_flow(&flow, FrameTransform::identity());
        let p = Point::new(5.0, 0.7);
        assert_eq!(tf.map_point(p).unwrap(), flow.map_point(p).unwrap());
    }

    #[test]
    fn transformed_translation_unrolls() {
        let spec = FlowSpec::stratospheric();
        let flow = spec.flow().unwrap();
        let b0 = Point::new(0.25, -0.5);
        let b1 = Point::new(3.0, 1.0);
        let tf = transformed_flow(&flow, FrameTransform::translation(b0, b1));
        let p = Point::new(6.0, 0.3);
        let expected = flow.map_point(p - b0).unwrap() + b1;
        assert!(tf.map_point(p).unwrap().dist(expected) < 1e-14);
    }
}
