use crate::error::{Error, Result};
use crate::num::Real;
use crate::physics::Vec3;
use crate::quadrature::{legendre, GaussLegendre};

use super::mesh::BoxMesh;

/// Orthonormal Legendre polynomial `sqrt((2i+1)/2) P_i` on [-1, 1] and its
/// derivative.
pub fn legendre_orthonormal<T: Real>(i: usize, x: T) -> (T, T) {
    let s = (T::from_usize_lossy(2 * i + 1) * T::lit(0.5)).sqrt();
    let (p, dp) = legendre(i, x);
    (s * p, s * dp)
}

/// Tensor-product orthonormal basis of degree `k` per axis on a box mesh,
/// with reference tables at Gauss points for volumes and faces.
#[derive(Debug, Clone)]
pub struct DgSpace<T> {
    mesh: BoxMesh<T>,
    degree: usize,
    nb: usize,
    /// Per-basis multi-index, local axis 0 fastest.
    multi: Vec<Vec<usize>>,
    rule: GaussLegendre<T>,
    /// Volume points: reference coordinates and weights (already scaled by
    /// the cell Jacobian).
    vol_xi: Vec<Vec<T>>,
    vol_w: Vec<T>,
    /// `vol_phi[p * nb + b]`, physical scaling applied.
    vol_phi: Vec<T>,
    /// `vol_grad[(p * nb + b) * dim + a]`, physical derivative.
    vol_grad: Vec<T>,
    /// Per local axis and side: face tables.
    faces: Vec<[FaceTable<T>; 2]>,
}

/// Basis traces on one side of a face normal to a fixed local axis.
#[derive(Debug, Clone)]
pub struct FaceTable<T> {
    /// Reference coordinates of face points (full dim, fixed ±1 on the axis).
    pub xi: Vec<Vec<T>>,
    /// Face weights including the face Jacobian.
    pub w: Vec<T>,
    /// `phi[p * nb + b]`
    pub phi: Vec<T>,
    /// `grad[(p * nb + b) * dim + a]`
    pub grad: Vec<T>,
}

fn tensor_points<T: Real>(rule: &GaussLegendre<T>, dim: usize, fixed: Option<(usize, T)>) -> (Vec<Vec<T>>, Vec<T>) {
    let q = rule.len();
    let free: Vec<usize> = (0..dim).filter(|&a| fixed.is_none_or(|(f, _)| f != a)).collect();
    let n = q.pow(free.len() as u32);
    let mut xi = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for p in 0..n {
        let mut x = vec![T::zero(); dim];
        let mut wt = T::one();
        let mut rem = p;
        for &a in &free {
            let i = rem % q;
            rem /= q;
            x[a] = rule.nodes[i];
            wt *= rule.weights[i];
        }
        if let Some((f, v)) = fixed {
            x[f] = v;
        }
        xi.push(x);
        w.push(wt);
    }
    (xi, w)
}

impl<T: Real> DgSpace<T> {
    pub fn new(mesh: BoxMesh<T>, degree: usize) -> Self {
        let dim = mesh.dim();
        let nb = (degree + 1).pow(dim as u32);
        let multi: Vec<Vec<usize>> = (0..nb)
            .map(|b| {
                let mut rem = b;
                (0..dim)
                    .map(|_| {
                        let i = rem % (degree + 1);
                        rem /= degree + 1;
                        i
                    })
                    .collect()
            })
            .collect();
        let rule = GaussLegendre::new(degree + 2);
        let half = T::lit(0.5);
        let jac: Vec<T> = (0..dim).map(|a| mesh.width(a) * half).collect();
        let jvol = jac.iter().copied().fold(T::one(), |x, y| x * y);
        let inv_sqrt_j = T::one() / jvol.sqrt();

        // physical value and gradient of every basis function at `xi`
        let eval = |xi: &[T], phi: &mut Vec<T>, grad: &mut Vec<T>| {
            for m in &multi {
                let vals: Vec<(T, T)> = (0..dim).map(|a| legendre_orthonormal(m[a], xi[a])).collect();
                let v = vals.iter().fold(T::one(), |acc, (p, _)| acc * *p);
                phi.push(v * inv_sqrt_j);
                for a in 0..dim {
                    let mut d = T::one();
                    for (b, (p, dp)) in vals.iter().enumerate() {
                        d *= if a == b { *dp } else { *p };
                    }
                    grad.push(d / jac[a] * inv_sqrt_j);
                }
            }
        };

        let (vol_xi, vol_wref) = tensor_points(&rule, dim, None);
        let vol_w: Vec<T> = vol_wref.iter().map(|&w| w * jvol).collect();
        let mut vol_phi = Vec::new();
        let mut vol_grad = Vec::new();
        for x in &vol_xi {
            eval(x, &mut vol_phi, &mut vol_grad);
        }

        let mut faces = Vec::with_capacity(dim);
        for a in 0..dim {
            let fj = (0..dim).filter(|&b| b != a).fold(T::one(), |acc, b| acc * jac[b]);
            let side = |s: T| {
                let (xi, wref) = tensor_points(&rule, dim, Some((a, s)));
                let w = wref.iter().map(|&w| w * fj).collect();
                let mut phi = Vec::new();
                let mut grad = Vec::new();
                for x in &xi {
                    eval(x, &mut phi, &mut grad);
                }
                FaceTable { xi, w, phi, grad }
            };
            faces.push([side(-T::one()), side(T::one())]);
        }
        Self { mesh, degree, nb, multi, rule, vol_xi, vol_w, vol_phi, vol_grad, faces }
    }

    pub fn mesh(&self) -> &BoxMesh<T> {
        &self.mesh
    }
    pub fn degree(&self) -> usize {
        self.degree
    }
    /// Basis functions per cell and component.
    pub fn nb(&self) -> usize {
        self.nb
    }
    pub fn dim(&self) -> usize {
        self.mesh.dim()
    }
    pub fn ndofs(&self) -> usize {
        3 * self.nb * self.mesh.num_cells()
    }
    pub fn multi_index(&self, b: usize) -> &[usize] {
        &self.multi[b]
    }
    pub fn vol_points(&self) -> usize {
        self.vol_w.len()
    }
    pub fn vol_xi(&self, p: usize) -> &[T] {
        &self.vol_xi[p]
    }
    pub fn vol_w(&self) -> &[T] {
        &self.vol_w
    }
    pub fn vol_phi(&self) -> &[T] {
        &self.vol_phi
    }
    pub fn vol_grad(&self) -> &[T] {
        &self.vol_grad
    }
    pub fn face(&self, axis: usize, upper: bool) -> &FaceTable<T> {
        &self.faces[axis][upper as usize]
    }
    pub fn rule(&self) -> &GaussLegendre<T> {
        &self.rule
    }

    /// Offset of coefficient `(cell, component, basis)`.
    #[inline]
    pub fn dof(&self, cell: usize, comp: usize, b: usize) -> usize {
        (cell * 3 + comp) * self.nb + b
    }

    /// Physical value of basis `b` at reference point `xi`.
    pub fn basis_at(&self, b: usize, xi: &[T]) -> T {
        let jvol = (0..self.dim()).fold(T::one(), |acc, a| acc * self.mesh.width(a) * T::lit(0.5));
        let m = &self.multi[b];
        (0..self.dim()).fold(T::one(), |acc, a| acc * legendre_orthonormal(m[a], xi[a]).0) / jvol.sqrt()
    }

    /// Applies the element mass matrix, assembled by quadrature.
    pub fn apply_mass(&self, x: &[T], out: &mut [T]) {
        let nb = self.nb;
        let np = self.vol_points();
        for (xc, oc) in x.chunks(nb).zip(out.chunks_mut(nb)) {
            for (i, o) in oc.iter_mut().enumerate() {
                let mut acc = T::zero();
                for (j, &xj) in xc.iter().enumerate() {
                    let mut mij = T::zero();
                    for p in 0..np {
                        mij += self.vol_w[p] * self.vol_phi[p * nb + i] * self.vol_phi[p * nb + j];
                    }
                    acc += mij * xj;
                }
                *o = acc;
            }
        }
    }
}

/// Zeroes the transverse components of a coefficient vector.
pub fn spoil_transverse<T: Real>(space: &DgSpace<T>, y: &mut [T]) {
    let nb = space.nb();
    for cell in y.chunks_exact_mut(3 * nb) {
        cell[..2 * nb].iter_mut().for_each(|v| *v = T::zero());
    }
}

/// Coefficient vector over a [`DgSpace`], laid out `[cell][component][basis]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DgState<T> {
    pub coeffs: Vec<T>,
}

impl<T: Real> DgState<T> {
    pub fn zeros(space: &DgSpace<T>) -> Self {
        Self { coeffs: vec![T::zero(); space.ndofs()] }
    }

    pub fn from_coeffs(space: &DgSpace<T>, coeffs: Vec<T>) -> Result<Self> {
        if coeffs.len() != space.ndofs() {
            return Err(Error::invalid(
                "state",
                format!("expected {} coefficients, got {}", space.ndofs(), coeffs.len()),
            ));
        }
        if let Some(i) = coeffs.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteCell { cell: i / (3 * space.nb()), t: f64::NAN });
        }
        Ok(Self { coeffs })
    }

    /// L² projection of `f(r)` cell by cell.
    pub fn project<F: Fn([T; 3]) -> Vec3<T>>(space: &DgSpace<T>, f: F) -> Self {
        let mut s = Self::zeros(space);
        let nb = space.nb();
        for c in 0..space.mesh().num_cells() {
            for p in 0..space.vol_points() {
                let m = f(space.mesh().position(c, space.vol_xi(p)));
                let w = space.vol_w()[p];
                for b in 0..nb {
                    let pw = w * space.vol_phi()[p * nb + b];
                    s.coeffs[space.dof(c, 0, b)] += pw * m.x;
                    s.coeffs[space.dof(c, 1, b)] += pw * m.y;
                    s.coeffs[space.dof(c, 2, b)] += pw * m.z;
                }
            }
        }
        s
    }

    /// Constant field `m` everywhere.
    pub fn uniform(space: &DgSpace<T>, m: Vec3<T>) -> Self {
        let mut s = Self::zeros(space);
        let root = space.mesh().cell_volume().sqrt();
        for c in 0..space.mesh().num_cells() {
            s.coeffs[space.dof(c, 0, 0)] = m.x * root;
            s.coeffs[space.dof(c, 1, 0)] = m.y * root;
            s.coeffs[space.dof(c, 2, 0)] = m.z * root;
        }
        s
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|v| v.is_finite())
    }

    /// `‖M‖²` in L² (the basis is orthonormal).
    pub fn norm_sq(&self) -> T {
        self.coeffs.iter().map(|&v| v * v).sum()
    }

    /// Cell mean of each component.
    pub fn cell_mean(&self, space: &DgSpace<T>, cell: usize) -> Vec3<T> {
        let inv = T::one() / space.mesh().cell_volume().sqrt();
        Vec3::new(
            self.coeffs[space.dof(cell, 0, 0)] * inv,
            self.coeffs[space.dof(cell, 1, 0)] * inv,
            self.coeffs[space.dof(cell, 2, 0)] * inv,
        )
    }

    /// Integral of each component over the whole mesh.
    pub fn integral(&self, space: &DgSpace<T>) -> Vec3<T> {
        let root = space.mesh().cell_volume().sqrt();
        let mut acc = Vec3::zero();
        for c in 0..space.mesh().num_cells() {
            acc += Vec3::new(
                self.coeffs[space.dof(c, 0, 0)],
                self.coeffs[space.dof(c, 1, 0)],
                self.coeffs[space.dof(c, 2, 0)],
            ) * root;
        }
        acc
    }

    /// Value at reference coordinates `xi` of `cell`.
    pub fn eval_ref(&self, space: &DgSpace<T>, cell: usize, xi: &[T]) -> Vec3<T> {
        let mut m = [T::zero(); 3];
        for b in 0..space.nb() {
            let phi = space.basis_at(b, xi);
            for (comp, slot) in m.iter_mut().enumerate() {
                *slot += self.coeffs[space.dof(cell, comp, b)] * phi;
            }
        }
        Vec3::from_array(m)
    }

    /// Value at physical point `r`, or `None` outside the mesh.
    pub fn eval(&self, space: &DgSpace<T>, r: [T; 3]) -> Option<Vec3<T>> {
        let mesh = space.mesh();
        let cell = mesh.locate(r)?;
        let xi: Vec<T> = (0..mesh.dim())
            .map(|a| {
                let x = r[mesh.axes()[a]];
                ((x - mesh.center(cell, a)) / (mesh.width(a) * T::lit(0.5))).max(-T::one()).min(T::one())
            })
            .collect();
        Some(self.eval_ref(space, cell, &xi))
    }
}
