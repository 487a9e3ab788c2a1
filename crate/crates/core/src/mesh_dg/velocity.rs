use std::sync::Arc;

use crate::error::{Error, Result};
use crate::num::Real;
use crate::physics::Vec3;

use super::mesh::BoxMesh;

/// Prescribed flow field `u(t, r)` in m/s.
pub trait VelocityField<T: Real>: Send + Sync {
    fn velocity(&self, t: T, r: [T; 3]) -> [T; 3];

    /// Declared incompressible.
    fn divergence_free(&self) -> bool {
        true
    }

    /// Same value everywhere in space at any fixed time.
    fn is_uniform(&self) -> bool {
        false
    }

    /// Only the z component can be nonzero.
    fn axial_only(&self) -> bool {
        false
    }

    /// Upper bound of |u| over the domain on `[t0, t1]`.
    fn max_speed(&self, t0: T, t1: T) -> T;

    /// Times in `(t0, t1)` where `u` has a kink or jump.
    fn breakpoints(&self, _t0: T, _t1: T, _out: &mut Vec<T>) {}
}

/// Constant velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformVelocity<T> {
    pub u: [T; 3],
}

impl<T: Real> UniformVelocity<T> {
    pub fn zero() -> Self {
        Self { u: [T::zero(); 3] }
    }
    pub fn axial(uz: T) -> Self {
        Self { u: [T::zero(), T::zero(), uz] }
    }
}

impl<T: Real> VelocityField<T> for UniformVelocity<T> {
    fn velocity(&self, _t: T, _r: [T; 3]) -> [T; 3] {
        self.u
    }
    fn is_uniform(&self) -> bool {
        true
    }
    fn axial_only(&self) -> bool {
        self.u[0] == T::zero() && self.u[1] == T::zero()
    }
    fn max_speed(&self, _t0: T, _t1: T) -> T {
        Vec3::from_array(self.u).norm()
    }
}

/// Plug flow `u = (0, 0, u_z(t))` with `u_z` tabulated over one period and
/// interpolated linearly, repeating with that period.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicAxialVelocity<T> {
    period: T,
    /// Samples at `i · period / n`, `i = 0..n`.
    samples: Vec<T>,
}

impl<T: Real> PeriodicAxialVelocity<T> {
    pub fn new(period: T, samples: Vec<T>) -> Result<Self> {
        if !(period.is_finite() && period > T::zero()) {
            return Err(Error::invalid("velocity.period", "must be positive"));
        }
        if samples.is_empty() || samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("velocity.samples", "need at least one finite sample"));
        }
        Ok(Self { period, samples })
    }

    pub fn period(&self) -> T {
        self.period
    }
    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    fn spacing(&self) -> T {
        self.period / T::from_usize_lossy(self.samples.len())
    }

    pub fn uz(&self, t: T) -> T {
        let n = self.samples.len();
        let s = (t / self.spacing()).floor();
        let frac = t / self.spacing() - s;
        let i = s.to_f64_lossy().rem_euclid(n as f64) as usize % n;
        let a = self.samples[i];
        let b = self.samples[(i + 1) % n];
        a + (b - a) * frac
    }
}

impl<T: Real> VelocityField<T> for PeriodicAxialVelocity<T> {
    fn velocity(&self, t: T, _r: [T; 3]) -> [T; 3] {
        [T::zero(), T::zero(), self.uz(t)]
    }
    fn is_uniform(&self) -> bool {
        true
    }
    fn axial_only(&self) -> bool {
        true
    }
    fn max_speed(&self, _t0: T, _t1: T) -> T {
        self.samples.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
    fn breakpoints(&self, t0: T, t1: T, out: &mut Vec<T>) {
        if self.samples.len() < 2 {
            return;
        }
        let dt = self.spacing();
        let mut i = (t0 / dt).floor() + T::one();
        loop {
            let t = i * dt;
            if t >= t1 {
                break;
            }
            if t > t0 {
                out.push(t);
            }
            i += T::one();
        }
    }
}

/// Centered-difference divergence at every cell centre, returning the
/// largest magnitude found. Steps of half a cell width are used.
pub fn max_divergence<T: Real, V: VelocityField<T> + ?Sized>(u: &V, mesh: &BoxMesh<T>, t: T) -> T {
    let mut worst = T::zero();
    for c in 0..mesh.num_cells() {
        let r = mesh.cell_center(c);
        let mut div = T::zero();
        for a in 0..mesh.dim() {
            let ax = mesh.axes()[a];
            let d = mesh.width(a) * T::lit(0.5);
            let mut rp = r;
            let mut rm = r;
            rp[ax] += d;
            rm[ax] -= d;
            div += (u.velocity(t, rp)[ax] - u.velocity(t, rm)[ax]) / (d + d);
        }
        worst = worst.max(div.abs());
    }
    worst
}

/// Checks the incompressibility declaration against `tol_factor·|u|/h`
/// (default factor 1e-8).
pub fn check_divergence<T: Real, V: VelocityField<T> + ?Sized>(
    u: &V,
    mesh: &BoxMesh<T>,
    t: T,
    tol_factor: T,
) -> Result<T> {
    let div = max_divergence(u, mesh, t);
    if !u.divergence_free() {
        return Ok(div);
    }
    let speed = u.max_speed(t, t);
    let tol = tol_factor * speed / mesh.h_max();
    if div > tol {
        return Err(Error::invalid(
            "velocity",
            format!("declared divergence-free but divergence {} exceeds {}", div.to_f64_lossy(), tol.to_f64_lossy()),
        ));
    }
    Ok(div)
}

type InflowFn<T> = dyn Fn(T, [T; 3]) -> Vec3<T> + Send + Sync;

/// Inflow magnetization `M_Γ(t, s)` imposed weakly where `u·n < 0`.
#[derive(Clone)]
pub enum BoundaryData<T> {
    Constant(Vec3<T>),
    Function(Arc<InflowFn<T>>),
}

impl<T: Real> Default for BoundaryData<T> {
    fn default() -> Self {
        BoundaryData::Constant(Vec3::new(T::zero(), T::zero(), T::one()))
    }
}

impl<T: Real> std::fmt::Debug for BoundaryData<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryData::Constant(m) => write!(f, "Constant({m:?})"),
            BoundaryData::Function(_) => f.write_str("Function(..)"),
        }
    }
}

impl<T: Real> BoundaryData<T> {
    pub fn value(&self, t: T, r: [T; 3]) -> Vec3<T> {
        match self {
            BoundaryData::Constant(m) => *m,
            BoundaryData::Function(f) => f(t, r),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, BoundaryData::Constant(m) if *m == Vec3::zero())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Shear;
    impl VelocityField<f64> for Shear {
        fn velocity(&self, _t: f64, r: [f64; 3]) -> [f64; 3] {
            [0.0, 0.0, r[0]]
        }
        fn max_speed(&self, _: f64, _: f64) -> f64 {
            1.0
        }
    }

    struct Expanding;
    impl VelocityField<f64> for Expanding {
        fn velocity(&self, _t: f64, r: [f64; 3]) -> [f64; 3] {
            [0.0, 0.0, r[2]]
        }
        fn max_speed(&self, _: f64, _: f64) -> f64 {
            1.0
        }
    }

    #[test]
    fn divergence_declaration_checked() {
        let mesh = BoxMesh::cuboid([0.0; 3], [1.0; 3], [4, 4, 4]).unwrap();
        assert!(check_divergence(&Shear, &mesh, 0.0, 1e-8).is_ok());
        assert!(check_divergence(&UniformVelocity::axial(0.3), &mesh, 0.0, 1e-8).is_ok());
        assert!(check_divergence(&Expanding, &mesh, 0.0, 1e-8).is_err());
    }

    #[test]
    fn periodic_table_wraps() {
        let v = PeriodicAxialVelocity::<f64>::new(1.0, vec![0.0, 1.0, 0.0, -1.0]).unwrap();
        assert!((v.uz(0.125) - 0.5).abs() < 1e-15);
        assert!((v.uz(1.125) - 0.5).abs() < 1e-12);
        assert!((v.uz(-0.125) + 0.5).abs() < 1e-12);
        assert!((v.uz(0.875) + 0.5).abs() < 1e-15);
        let mut bp = Vec::new();
        v.breakpoints(0.1, 0.8, &mut bp);
        assert_eq!(bp, vec![0.25, 0.5, 0.75]);
    }
}
