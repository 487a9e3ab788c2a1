//! Rotating-frame Bloch dynamics: constants, tissue parameters and the
//! pointwise reaction term.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// Proton gyromagnetic ratio over 2π in Hz/T.
pub const PROTON_GAMMA_BAR_HZ_PER_T: f64 = 42.577_478_518e6;

/// Plain 3-vector used for magnetization, fields and rates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

/// Magnetization in the rotating frame, in units of the equilibrium value.
pub type Magnetization<T> = Vec3<T>;

/// Effective field `(B1x, B1y, G·r)` in tesla.
pub type EffectiveField<T> = Vec3<T>;

impl<T: Real> Vec3<T> {
    pub const fn new(x: T, y: T, z: T) -> Self {
        Vec3 { x, y, z }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn equilibrium(m0: T) -> Self {
        Self::new(T::zero(), T::zero(), m0)
    }

    pub fn from_array(a: [T; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Self) -> Self {
        Self::new(self.y * o.z - self.z * o.y, self.z * o.x - self.x * o.z, self.x * o.y - self.y * o.x)
    }

    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn max_abs_diff(self, o: Self) -> T {
        (self.x - o.x).abs().max((self.y - o.y).abs()).max((self.z - o.z).abs())
    }
}

impl<T: Real> Add for Vec3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<T: Real> AddAssign for Vec3<T> {
    fn add_assign(&mut self, o: Self) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl<T: Real> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<T: Real> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y, -self.z)
    }
}

impl<T: Real> Mul<T> for Vec3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        Self::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Physical constants used by the simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants<T> {
    /// Gyromagnetic ratio in rad/(s·T).
    pub gamma: T,
}

impl<T: Real> PhysicalConstants<T> {
    /// Builds the constants from γ/2π in Hz/T.
    pub fn from_gamma_bar(gamma_bar_hz_per_t: T) -> Result<Self> {
        if !(gamma_bar_hz_per_t.is_finite() && gamma_bar_hz_per_t > T::zero()) {
            return Err(Error::invalid("gamma_bar", "must be positive and finite"));
        }
        Ok(Self { gamma: gamma_bar_hz_per_t * T::TAU() })
    }

    /// γ/2π in Hz/T.
    pub fn gamma_bar(&self) -> T {
        self.gamma / T::TAU()
    }
}

impl<T: Real> Default for PhysicalConstants<T> {
    fn default() -> Self {
        Self { gamma: T::lit(PROTON_GAMMA_BAR_HZ_PER_T) * T::TAU() }
    }
}

/// Relaxation parameters of one material. Infinite times disable the
/// corresponding relaxation channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TissueParams<T> {
    t1: T,
    t2: T,
    m0: T,
    r1: T,
    r2: T,
}

impl<T: Real> TissueParams<T> {
    pub fn new(t1: T, t2: T, m0: T) -> Result<Self> {
        if t1.is_nan() || t2.is_nan() || !(t2 > T::zero()) {
            return Err(Error::invalid("t2", "must be positive"));
        }
        if t1 < t2 {
            return Err(Error::invalid("t1", format!("T1 = {t1} must not be shorter than T2 = {t2}")));
        }
        if !(m0.is_finite() && m0 > T::zero()) {
            return Err(Error::invalid("m0", "must be positive and finite"));
        }
        Ok(Self { t1, t2, m0, r1: t1.recip(), r2: t2.recip() })
    }

    /// Tissue with both relaxation channels switched off.
    pub fn no_relaxation(m0: T) -> Self {
        Self { t1: T::infinity(), t2: T::infinity(), m0, r1: T::zero(), r2: T::zero() }
    }

    pub fn t1(&self) -> T {
        self.t1
    }
    pub fn t2(&self) -> T {
        self.t2
    }
    pub fn m0(&self) -> T {
        self.m0
    }
    /// 1/T1 in 1/s.
    pub fn r1(&self) -> T {
        self.r1
    }
    /// 1/T2 in 1/s.
    pub fn r2(&self) -> T {
        self.r2
    }

    /// Source term `f = (0, 0, M0/T1)`.
    pub fn source(&self) -> Vec3<T> {
        Vec3::new(T::zero(), T::zero(), self.m0 * self.r1)
    }

    /// `D M` with `D = diag(1/T2, 1/T2, 1/T1)`.
    pub fn relax(&self, m: Vec3<T>) -> Vec3<T> {
        Vec3::new(m.x * self.r2, m.y * self.r2, m.z * self.r1)
    }
}

/// Unchecked Bloch rate `γ M×B + (M0 - Mz)/T1 ẑ - (Mx x̂ + My ŷ)/T2`,
/// written out as the 3×3 matrix form plus source.
#[inline]
pub fn bloch_rate<T: Real>(m: Vec3<T>, b: Vec3<T>, tissue: &TissueParams<T>, gamma: T) -> Vec3<T> {
    let (gx, gy, gz) = (gamma * b.x, gamma * b.y, gamma * b.z);
    Vec3::new(
        -tissue.r2 * m.x + gz * m.y - gy * m.z,
        -gz * m.x - tissue.r2 * m.y + gx * m.z,
        gy * m.x - gx * m.y - tissue.r1 * m.z + tissue.m0 * tissue.r1,
    )
}

fn check_finite<T: Real>(m: Vec3<T>, b: Vec3<T>) -> Result<()> {
    if !m.is_finite() {
        return Err(Error::NonFinite("magnetization".into()));
    }
    if !b.is_finite() {
        return Err(Error::NonFinite("effective field".into()));
    }
    Ok(())
}

/// Instantaneous rate dM/dt of the rotating-frame Bloch equation (1/s).
pub fn bloch_rhs<T: Real>(
    m: Magnetization<T>,
    b: EffectiveField<T>,
    tissue: &TissueParams<T>,
    consts: &PhysicalConstants<T>,
) -> Result<Vec3<T>> {
    check_finite(m, b)?;
    Ok(bloch_rate(m, b, tissue, consts.gamma))
}

/// `γ B×M + D M - f`, the operand used when splitting off the reaction
/// part. Always the negation of [`bloch_rhs`].
pub fn reaction_operator<T: Real>(
    m: Magnetization<T>,
    b: EffectiveField<T>,
    tissue: &TissueParams<T>,
    consts: &PhysicalConstants<T>,
) -> Result<Vec3<T>> {
    check_finite(m, b)?;
    Ok(b.cross(m) * consts.gamma + tissue.relax(m) - tissue.source())
}

/// Closed-form propagator for an interval with no RF and a constant
/// longitudinal offset field `bz`.
pub fn exact_relaxation_rotation<T: Real>(
    m: Magnetization<T>,
    bz: T,
    tissue: &TissueParams<T>,
    consts: &PhysicalConstants<T>,
    dt: T,
) -> Result<Magnetization<T>> {
    if dt.is_nan() || dt < T::zero() {
        return Err(Error::invalid("dt", "must be non-negative"));
    }
    if !m.is_finite() || !bz.is_finite() {
        return Err(Error::NonFinite("relaxation input".into()));
    }
    if dt == T::zero() {
        return Ok(m);
    }
    let e2 = (-dt * tissue.r2).exp();
    let e1 = (-dt * tissue.r1).exp();
    let phi = -consts.gamma * bz * dt;
    let (s, c) = phi.sin_cos();
    Ok(Vec3::new(e2 * (m.x * c - m.y * s), e2 * (m.x * s + m.y * c), tissue.m0 + (m.z - tissue.m0) * e1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn consts() -> PhysicalConstants<f64> {
        PhysicalConstants::default()
    }

    #[test]
    fn default_gamma_matches_proton_constant() {
        let c = consts();
        assert!(c.gamma > 0.0);
        assert_relative_eq!(c.gamma_bar(), 42.577478518e6, max_relative = 1e-15);
    }

    #[test]
    fn tissue_validation() {
        assert!(TissueParams::new(0.1, 0.2, 1.0).is_err());
        assert!(TissueParams::new(1.0, 0.0, 1.0).is_err());
        assert!(TissueParams::new(1.0, 0.5, 0.0).is_err());
        assert!(TissueParams::new(f64::INFINITY, f64::INFINITY, 1.0).is_ok());
    }

    #[test]
    fn equilibrium_is_fixed_point() {
        let t = TissueParams::new(0.296, 0.113, 1.0).unwrap();
        let r = bloch_rhs(Vec3::equilibrium(1.0), Vec3::zero(), &t, &consts()).unwrap();
        assert_eq!(r, Vec3::zero());
    }

    #[test]
    fn transverse_field_rotates_about_x() {
        let t = TissueParams::no_relaxation(1.0);
        let b1 = 1e-5;
        let r = bloch_rhs(Vec3::new(0.0, 0.0, 1.0), Vec3::new(b1, 0.0, 0.0), &t, &consts()).unwrap();
        assert_eq!(r.x, 0.0);
        assert_relative_eq!(r.y, consts().gamma * b1, max_relative = 1e-15);
        assert_eq!(r.z, 0.0);
    }

    #[test]
    fn source_drives_recovery() {
        let t = TissueParams::new(1.0, 1.0, 1.0).unwrap();
        let r = bloch_rhs(Vec3::zero(), Vec3::zero(), &t, &consts()).unwrap();
        assert_eq!(r, Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn reaction_operator_example() {
        let t = TissueParams::new(1.0, 0.1, 1.0).unwrap();
        let r = reaction_operator(Vec3::new(1.0, 0.0, 0.0), Vec3::zero(), &t, &consts()).unwrap();
        assert_relative_eq!(r.x, 10.0, max_relative = 1e-15);
        assert_eq!(r.y, 0.0);
        assert_eq!(r.z, -1.0);
    }

    #[test]
    fn non_finite_rejected() {
        let t = TissueParams::new(1.0, 0.1, 1.0).unwrap();
        assert!(bloch_rhs(Vec3::new(f64::NAN, 0.0, 0.0), Vec3::zero(), &t, &consts()).is_err());
        assert!(reaction_operator(Vec3::zero(), Vec3::new(0.0, f64::INFINITY, 0.0), &t, &consts()).is_err());
    }

    #[test]
    fn exact_propagator_examples() {
        let t = TissueParams::new(0.8, 0.05, 1.0).unwrap();
        let c = consts();
        let m = exact_relaxation_rotation(Vec3::zero(), 0.0, &t, &c, t.t1()).unwrap();
        assert_relative_eq!(m.z, 1.0 - (-1.0f64).exp(), max_relative = 1e-15);
        let m = exact_relaxation_rotation(Vec3::new(1.0, 0.0, 0.0), 0.0, &t, &c, t.t2()).unwrap();
        assert_relative_eq!(m.x, (-1.0f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(m.z, 1.0 - (-t.t2() / t.t1()).exp(), max_relative = 1e-14);
        let m0 = Vec3::new(0.3, -0.2, 0.5);
        assert_eq!(exact_relaxation_rotation(m0, 1e-3, &t, &c, 0.0).unwrap(), m0);
        assert!(exact_relaxation_rotation(m0, 0.0, &t, &c, -1.0).is_err());
    }

    #[test]
    fn generic_over_f32() {
        let t = TissueParams::<f32>::new(1.0, 0.1, 1.0).unwrap();
        let c = PhysicalConstants::<f32>::default();
        let r = reaction_operator(Vec3::new(1.0f32, 0.0, 0.0), Vec3::zero(), &t, &c).unwrap();
        assert!((r.x - 10.0).abs() < 1e-5);
    }
}
