use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;
use crate::physics::TissueParams;

/// Axis-aligned, uniformly spaced box mesh in 1, 2 or 3 dimensions.
///
/// Local axis `a` runs along physical axis `axes[a]`; a 1D mesh lies on
/// the physical z axis. Cells are numbered with local axis 0 fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxMesh<T> {
    axes: Vec<usize>,
    lower: Vec<T>,
    upper: Vec<T>,
    counts: Vec<usize>,
    width: Vec<T>,
    strides: Vec<usize>,
}

/// Interior face between `lower` and `upper` cell along local `axis`; the
/// normal points from `lower` to `upper`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InteriorFace {
    pub axis: usize,
    pub lower: usize,
    pub upper: usize,
}

/// Boundary face of `cell` on local `axis`; `upper` selects the side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryFace {
    pub axis: usize,
    pub cell: usize,
    pub upper: bool,
}

impl<T: Real> BoxMesh<T> {
    pub fn new(axes: Vec<usize>, lower: Vec<T>, upper: Vec<T>, counts: Vec<usize>) -> Result<Self> {
        let dim = axes.len();
        if !(1..=3).contains(&dim) || lower.len() != dim || upper.len() != dim || counts.len() != dim {
            return Err(Error::invalid("mesh", "need 1 to 3 axes with matching extents and counts"));
        }
        let mut seen = [false; 3];
        for &a in &axes {
            if a > 2 || seen[a] {
                return Err(Error::invalid("mesh.axes", "physical axes must be distinct and in 0..3"));
            }
            seen[a] = true;
        }
        let mut width = Vec::with_capacity(dim);
        for i in 0..dim {
            if counts[i] == 0 {
                return Err(Error::invalid("mesh.cells", "every axis needs at least one cell"));
            }
            if !(lower[i].is_finite() && upper[i].is_finite() && upper[i] > lower[i]) {
                return Err(Error::invalid("mesh.extent", "upper bound must exceed lower bound"));
            }
            width.push((upper[i] - lower[i]) / T::from_usize_lossy(counts[i]));
        }
        let mut strides = vec![1; dim];
        for i in 1..dim {
            strides[i] = strides[i - 1] * counts[i - 1];
        }
        Ok(Self { axes, lower, upper, counts, width, strides })
    }

    /// 1D mesh on `[z0, z1]` along the physical z axis.
    pub fn line_z(z0: T, z1: T, cells: usize) -> Result<Self> {
        Self::new(vec![2], vec![z0], vec![z1], vec![cells])
    }

    /// 3D mesh over `[lo, hi]` with `cells` per physical axis.
    pub fn cuboid(lo: [T; 3], hi: [T; 3], cells: [usize; 3]) -> Result<Self> {
        Self::new(vec![0, 1, 2], lo.to_vec(), hi.to_vec(), cells.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }
    pub fn axes(&self) -> &[usize] {
        &self.axes
    }
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }
    pub fn lower(&self) -> &[T] {
        &self.lower
    }
    pub fn upper(&self) -> &[T] {
        &self.upper
    }
    pub fn num_cells(&self) -> usize {
        self.counts.iter().product()
    }
    /// Cell width along local axis `a`.
    pub fn width(&self, a: usize) -> T {
        self.width[a]
    }
    pub fn widths(&self) -> &[T] {
        &self.width
    }
    pub fn stride(&self, a: usize) -> usize {
        self.strides[a]
    }
    /// Largest cell width.
    pub fn h_max(&self) -> T {
        self.width.iter().copied().fold(T::zero(), T::max)
    }
    pub fn cell_volume(&self) -> T {
        self.width.iter().copied().fold(T::one(), |a, b| a * b)
    }
    pub fn domain_volume(&self) -> T {
        self.cell_volume() * T::from_usize_lossy(self.num_cells())
    }

    /// Per-axis index of `cell`.
    pub fn index(&self, cell: usize, a: usize) -> usize {
        (cell / self.strides[a]) % self.counts[a]
    }

    /// Centre of `cell` along local axis `a`.
    pub fn center(&self, cell: usize, a: usize) -> T {
        self.lower[a] + self.width[a] * (T::from_usize_lossy(self.index(cell, a)) + T::lit(0.5))
    }

    /// Physical position of local reference coordinates `xi ∈ [-1, 1]^dim`
    /// inside `cell`; axes not covered by the mesh are zero.
    pub fn position(&self, cell: usize, xi: &[T]) -> [T; 3] {
        let mut r = [T::zero(); 3];
        for a in 0..self.dim() {
            r[self.axes[a]] = self.center(cell, a) + self.width[a] * T::lit(0.5) * xi[a];
        }
        r
    }

    pub fn cell_center(&self, cell: usize) -> [T; 3] {
        let mut r = [T::zero(); 3];
        for a in 0..self.dim() {
            r[self.axes[a]] = self.center(cell, a);
        }
        r
    }

    /// Neighbour across the lower/upper face along local axis `a`.
    pub fn neighbor(&self, cell: usize, a: usize, upper: bool) -> Option<usize> {
        let i = self.index(cell, a);
        if upper {
            (i + 1 < self.counts[a]).then(|| cell + self.strides[a])
        } else {
            (i > 0).then(|| cell - self.strides[a])
        }
    }

    pub fn interior_faces(&self) -> Vec<InteriorFace> {
        let mut out = Vec::new();
        for a in 0..self.dim() {
            for c in 0..self.num_cells() {
                if let Some(u) = self.neighbor(c, a, true) {
                    out.push(InteriorFace { axis: a, lower: c, upper: u });
                }
            }
        }
        out
    }

    pub fn boundary_faces(&self) -> Vec<BoundaryFace> {
        let mut out = Vec::new();
        for a in 0..self.dim() {
            for c in 0..self.num_cells() {
                for upper in [false, true] {
                    if self.neighbor(c, a, upper).is_none() {
                        out.push(BoundaryFace { axis: a, cell: c, upper });
                    }
                }
            }
        }
        out
    }

    /// Measure of a face normal to local axis `a` (1 in 1D).
    pub fn face_measure(&self, a: usize) -> T {
        (0..self.dim()).filter(|&b| b != a).fold(T::one(), |acc, b| acc * self.width[b])
    }

    /// Face size `h_E` used in the penalty: the mean width of the two
    /// adjacent cells along the face normal.
    pub fn face_h(&self, a: usize) -> T {
        self.width[a]
    }

    /// Cell containing physical point `r`, if inside the mesh.
    pub fn locate(&self, r: [T; 3]) -> Option<usize> {
        let mut cell = 0;
        for a in 0..self.dim() {
            let x = r[self.axes[a]];
            if x < self.lower[a] || x > self.upper[a] {
                return None;
            }
            let f = ((x - self.lower[a]) / self.width[a]).floor().to_f64_lossy();
            let i = (f.max(0.0) as usize).min(self.counts[a] - 1);
            cell += i * self.strides[a];
        }
        Some(cell)
    }
}

/// Piecewise-constant tissue assignment over cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMap<T> {
    pub labels: Vec<String>,
    pub tissues: Vec<TissueParams<T>>,
    pub cell_tissue: Vec<usize>,
}

impl<T: Real> RegionMap<T> {
    pub fn uniform(mesh: &BoxMesh<T>, label: &str, tissue: TissueParams<T>) -> Self {
        Self { labels: vec![label.to_string()], tissues: vec![tissue], cell_tissue: vec![0; mesh.num_cells()] }
    }

    pub fn tissue(&self, cell: usize) -> &TissueParams<T> {
        &self.tissues[self.cell_tissue[cell]]
    }

    /// Smallest `1/T1` over the tissues actually used.
    pub fn sigma(&self) -> T {
        let mut used = vec![false; self.tissues.len()];
        for &i in &self.cell_tissue {
            used[i] = true;
        }
        self.tissues.iter().zip(used).filter(|(_, u)| *u).map(|(t, _)| t.r1()).fold(T::infinity(), T::min)
    }
}

/// Box in physical coordinates carrying a tissue label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionBox {
    pub label: String,
    /// Lower corner, m.
    pub lower: [f64; 3],
    /// Upper corner, m.
    pub upper: [f64; 3],
}

/// Tissue entry referenced by label, times in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TissueEntry {
    pub label: String,
    pub t1: f64,
    pub t2: f64,
    #[serde(default = "one")]
    pub m0: f64,
}

fn one() -> f64 {
    1.0
}

/// Mesh plus region layout as read from a config file.
///
/// ```toml
/// axes = ["z"]             # or ["x", "y", "z"]
/// lower = [-0.015]         # m, one entry per axis
/// upper = [0.015]
/// cells = [200]
/// background = "water"     # label of cells outside every region box
///
/// [[tissue]]
/// label = "water"
/// t1 = 2.7                 # s
/// t2 = 2.1
///
/// [[region]]               # later boxes override earlier ones
/// label = "water"
/// lower = [-1.0, -1.0, -1.0]
/// upper = [1.0, 1.0, 1.0]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    pub axes: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub cells: Vec<usize>,
    pub background: String,
    #[serde(default)]
    pub tissue: Vec<TissueEntry>,
    #[serde(default)]
    pub region: Vec<RegionBox>,
}

impl MeshConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn build<T: Real>(&self) -> Result<(BoxMesh<T>, RegionMap<T>)> {
        let axes = self
            .axes
            .iter()
            .map(|a| match a.as_str() {
                "x" => Ok(0),
                "y" => Ok(1),
                "z" => Ok(2),
                other => Err(Error::Config(format!("axes: unknown axis `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let mesh = BoxMesh::new(
            axes,
            self.lower.iter().map(|&v| T::lit(v)).collect(),
            self.upper.iter().map(|&v| T::lit(v)).collect(),
            self.cells.clone(),
        )?;
        let mut labels = Vec::new();
        let mut tissues = Vec::new();
        for t in &self.tissue {
            labels.push(t.label.clone());
            tissues.push(TissueParams::new(T::lit(t.t1), T::lit(t.t2), T::lit(t.m0))?);
        }
        let find = |label: &str| {
            labels
                .iter()
                .position(|l| l == label)
                .ok_or_else(|| Error::Config(format!("unknown tissue label `{label}`")))
        };
        let bg = find(&self.background)?;
        let mut cell_tissue = vec![bg; mesh.num_cells()];
        for rb in &self.region {
            let idx = find(&rb.label)?;
            for (c, slot) in cell_tissue.iter_mut().enumerate() {
                let r = mesh.cell_center(c);
                let inside = (0..3).all(|i| {
                    let x = r[i].to_f64_lossy();
                    x >= rb.lower[i] && x <= rb.upper[i]
                });
                if inside {
                    *slot = idx;
                }
            }
        }
        Ok((mesh, RegionMap { labels, tissues, cell_tissue }))
    }
}
