//! Independent spin packets at fixed positions, one Bloch equation each.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh_dg::{BoxMesh, RegionMap};
use crate::num::Real;
use crate::physics::{bloch_rate, PhysicalConstants, TissueParams, Vec3};
use crate::sequence::FieldSource;
use crate::timeint::OdeSystem;

/// Static isochromats; state layout is `[iso][x, y, z]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsochromatSet<T> {
    pub positions: Vec<[T; 3]>,
    /// Volume represented by each isochromat, used as signal weight.
    pub weights: Vec<T>,
    pub tissues: Vec<TissueParams<T>>,
}

impl<T: Real> IsochromatSet<T> {
    pub fn new(positions: Vec<[T; 3]>, weights: Vec<T>, tissues: Vec<TissueParams<T>>) -> Result<Self> {
        if weights.len() != positions.len() || tissues.len() != positions.len() {
            return Err(Error::invalid("isochromats", "positions, weights and tissues differ in length"));
        }
        Ok(Self { positions, weights, tissues })
    }

    /// One isochromat at every cell centre, weighted by the cell volume.
    pub fn from_cells(mesh: &BoxMesh<T>, regions: &RegionMap<T>) -> Self {
        let n = mesh.num_cells();
        Self {
            positions: (0..n).map(|c| mesh.cell_center(c)).collect(),
            weights: vec![mesh.cell_volume(); n],
            tissues: (0..n).map(|c| *regions.tissue(c)).collect(),
        }
    }

    /// `per_axis^dim` isochromats per cell on a regular sub-grid.
    pub fn subdivided(mesh: &BoxMesh<T>, regions: &RegionMap<T>, per_axis: usize) -> Self {
        let dim = mesh.dim();
        let per_cell = per_axis.pow(dim as u32);
        let n = mesh.num_cells() * per_cell;
        let mut positions = Vec::with_capacity(n);
        let mut tissues = Vec::with_capacity(n);
        let mut xi = vec![T::zero(); dim];
        let k = T::from_usize_lossy(per_axis);
        for c in 0..mesh.num_cells() {
            for j in 0..per_cell {
                let mut rest = j;
                for x in xi.iter_mut() {
                    let i = rest % per_axis;
                    rest /= per_axis;
                    *x = T::from_usize_lossy(2 * i + 1) / k - T::one();
                }
                positions.push(mesh.position(c, &xi));
                tissues.push(*regions.tissue(c));
            }
        }
        Self { positions, weights: vec![mesh.cell_volume() / T::from_usize_lossy(per_cell); n], tissues }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Thermal equilibrium `(0, 0, M0)` for every isochromat.
    pub fn equilibrium(&self) -> Vec<T> {
        self.tissues.iter().flat_map(|t| [T::zero(), T::zero(), t.m0()]).collect()
    }

    pub fn magnetization(y: &[T], i: usize) -> Vec3<T> {
        Vec3::new(y[3 * i], y[3 * i + 1], y[3 * i + 2])
    }
}

/// Zeroes every transverse component of an isochromat state.
pub fn spoil_isochromats<T: Real>(y: &mut [T]) {
    for m in y.chunks_exact_mut(3) {
        m[0] = T::zero();
        m[1] = T::zero();
    }
}

/// Bloch dynamics of an [`IsochromatSet`] under a field source.
pub struct IsochromatSystem<'a, T: Real> {
    pub set: &'a IsochromatSet<T>,
    pub field: &'a dyn FieldSource<T>,
    pub consts: PhysicalConstants<T>,
    pub parallel_threshold: usize,
}

impl<'a, T: Real> IsochromatSystem<'a, T> {
    pub fn new(set: &'a IsochromatSet<T>, field: &'a dyn FieldSource<T>) -> Self {
        Self { set, field, consts: PhysicalConstants::default(), parallel_threshold: 4096 }
    }

    pub fn with_constants(mut self, consts: PhysicalConstants<T>) -> Self {
        self.consts = consts;
        self
    }
}

impl<T: Real> OdeSystem<T> for IsochromatSystem<'_, T> {
    fn len(&self) -> usize {
        3 * self.set.len()
    }

    fn rhs(&self, t: T, y: &[T], dy: &mut [T]) -> Result<()> {
        let (bx, by) = self.field.rf(t);
        let g = self.field.gradient(t);
        let gamma = self.consts.gamma;
        let set = self.set;
        let work = |(i, out): (usize, &mut [T])| -> Result<()> {
            let m = Vec3::new(y[3 * i], y[3 * i + 1], y[3 * i + 2]);
            let r = set.positions[i];
            let b = Vec3::new(bx, by, g[0] * r[0] + g[1] * r[1] + g[2] * r[2]);
            let rate = bloch_rate(m, b, &set.tissues[i], gamma);
            if !rate.is_finite() {
                return Err(Error::NonFiniteCell { cell: i, t: t.to_f64_lossy() });
            }
            out.copy_from_slice(&rate.to_array());
            Ok(())
        };
        if set.len() >= self.parallel_threshold {
            dy.par_chunks_mut(3).enumerate().try_for_each(work)
        } else {
            dy.chunks_mut(3).enumerate().try_for_each(work)
        }
    }

    fn breakpoints(&self, t0: T, t1: T, out: &mut Vec<T>) {
        self.field.breakpoints(t0, t1, out);
    }
}
