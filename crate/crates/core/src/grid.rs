//! Global grid geometry, boundary-condition metadata, the equal-size
//! Cartesian decomposition and the rank-local field container.
//!
//! Unknowns sit on the nodes `origin + index * spacing`. Dirichlet data lives
//! one spacing outside the first/last unknown; Neumann data is the outward
//! normal derivative at the first/last unknown. Fields are stored x-fastest
//! with a one-cell halo inline in the same buffer.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width of the ghost layer around each subdomain (7-point stencil).
pub const HALO_WIDTH: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    /// The two remaining axes, lower one first.
    pub fn others(self) -> (Axis, Axis) {
        match self {
            Axis::X => (Axis::Y, Axis::Z),
            Axis::Y => (Axis::X, Axis::Z),
            Axis::Z => (Axis::X, Axis::Y),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Low,
    High,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Low, Side::High];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Low => Side::High,
            Side::High => Side::Low,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Low => "-",
            Side::High => "+",
        })
    }
}

/// One of the six faces of the box, ordered x−, x+, y−, y+, z−, z+.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Face {
    pub axis: Axis,
    pub side: Side,
}

impl Face {
    pub const ALL: [Face; 6] = [
        Face::new(Axis::X, Side::Low),
        Face::new(Axis::X, Side::High),
        Face::new(Axis::Y, Side::Low),
        Face::new(Axis::Y, Side::High),
        Face::new(Axis::Z, Side::Low),
        Face::new(Axis::Z, Side::High),
    ];

    pub const fn new(axis: Axis, side: Side) -> Self {
        Face { axis, side }
    }

    pub fn index(self) -> usize {
        2 * self.axis.index() + self.side.index()
    }
}

impl fmt::Display for Face {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.axis, self.side)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BcKind {
    Dirichlet,
    Neumann,
}

impl fmt::Display for BcKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BcKind::Dirichlet => "dirichlet",
            BcKind::Neumann => "neumann",
        })
    }
}

/// Boundary data as a function of the two in-face coordinates
/// (lower axis first: `(y, z)` on x faces, `(x, z)` on y faces, `(x, y)` on z faces).
#[derive(Clone)]
pub enum BcData {
    Constant(f64),
    Function(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl BcData {
    pub fn eval(&self, a: f64, b: f64) -> f64 {
        match self {
            BcData::Constant(v) => *v,
            BcData::Function(f) => f(a, b),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, BcData::Constant(v) if *v == 0.0)
    }
}

impl fmt::Debug for BcData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BcData::Constant(v) => write!(f, "Constant({v})"),
            BcData::Function(_) => f.write_str("Function(..)"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FaceBc {
    pub kind: BcKind,
    /// Boundary value for Dirichlet, outward normal derivative for Neumann.
    pub data: BcData,
}

impl FaceBc {
    pub fn dirichlet(value: f64) -> Self {
        FaceBc { kind: BcKind::Dirichlet, data: BcData::Constant(value) }
    }

    pub fn neumann(flux: f64) -> Self {
        FaceBc { kind: BcKind::Neumann, data: BcData::Constant(flux) }
    }

    pub fn homogeneous(kind: BcKind) -> Self {
        FaceBc { kind, data: BcData::Constant(0.0) }
    }
}

/// Global Cartesian grid: extents, spacings, origin and per-face boundary conditions.
#[derive(Clone, Debug)]
pub struct GridSpec {
    extents: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    face_bcs: [FaceBc; 6],
}

impl GridSpec {
    pub fn new(
        extents: [usize; 3],
        spacing: [f64; 3],
        origin: [f64; 3],
        face_bcs: [FaceBc; 6],
    ) -> Result<Self> {
        for axis in Axis::ALL {
            let d = axis.index();
            if extents[d] == 0 {
                return Err(Error::Config(format!("extent on axis {axis} must be at least 1")));
            }
            if !(spacing[d] > 0.0 && spacing[d].is_finite()) {
                return Err(Error::Config(format!(
                    "spacing on axis {axis} must be positive, got {}",
                    spacing[d]
                )));
            }
            if !origin[d].is_finite() {
                return Err(Error::Config(format!("origin on axis {axis} is not finite")));
            }
        }
        Ok(GridSpec { extents, spacing, origin, face_bcs })
    }

    /// Unit-origin grid with homogeneous boundary data of the given kinds
    /// (ordered x−, x+, y−, y+, z−, z+).
    pub fn with_kinds(extents: [usize; 3], spacing: [f64; 3], kinds: [BcKind; 6]) -> Result<Self> {
        Self::new(extents, spacing, [0.0; 3], kinds.map(FaceBc::homogeneous))
    }

    /// Grid whose first and last unknowns sit on the given bounds per axis.
    /// A single-node axis takes the bound length as its spacing.
    pub fn from_bounds(
        extents: [usize; 3],
        bounds: [[f64; 2]; 3],
        face_bcs: [FaceBc; 6],
    ) -> Result<Self> {
        let mut spacing = [0.0; 3];
        let mut origin = [0.0; 3];
        for axis in Axis::ALL {
            let d = axis.index();
            let [lo, hi] = bounds[d];
            if !(hi > lo) {
                return Err(Error::Config(format!(
                    "domain on axis {axis} must satisfy low < high, got [{lo}, {hi}]"
                )));
            }
            origin[d] = lo;
            spacing[d] = if extents[d] > 1 { (hi - lo) / (extents[d] - 1) as f64 } else { hi - lo };
        }
        Self::new(extents, spacing, origin, face_bcs)
    }

    pub fn extents(&self) -> [usize; 3] {
        self.extents
    }

    pub fn extent(&self, axis: Axis) -> usize {
        self.extents[axis.index()]
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn unknowns(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn bc(&self, face: Face) -> &FaceBc {
        &self.face_bcs[face.index()]
    }

    pub fn face_bcs(&self) -> &[FaceBc; 6] {
        &self.face_bcs
    }

    /// Boundary kinds at the low and high end of an axis.
    pub fn axis_kinds(&self, axis: Axis) -> [BcKind; 2] {
        Side::BOTH.map(|side| self.bc(Face::new(axis, side)).kind)
    }

    /// Coordinate of global node `index` along `axis`; negative and
    /// past-the-end indices give ghost locations.
    pub fn coord(&self, axis: Axis, index: isize) -> f64 {
        let d = axis.index();
        self.origin[d] + index as f64 * self.spacing[d]
    }

    pub fn has_dirichlet(&self) -> bool {
        self.face_bcs.iter().any(|bc| bc.kind == BcKind::Dirichlet)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Neighbor {
    Rank(usize),
    Boundary,
}

impl Neighbor {
    pub fn rank(self) -> Option<usize> {
        match self {
            Neighbor::Rank(r) => Some(r),
            Neighbor::Boundary => None,
        }
    }
}

/// Placement of one rank's subdomain in the equal-size Cartesian decomposition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decomposition {
    global_extents: [usize; 3],
    ranks_per_dim: [usize; 3],
    rank: usize,
    rank_coords: [usize; 3],
    local_interior: [usize; 3],
    neighbors: [[Neighbor; 2]; 3],
}

/// Ranks are numbered x-fastest over the process grid.
pub fn rank_of_coords(ranks_per_dim: [usize; 3], coords: [usize; 3]) -> usize {
    coords[0] + ranks_per_dim[0] * (coords[1] + ranks_per_dim[1] * coords[2])
}

pub fn build_decomposition(
    global: &GridSpec,
    ranks_per_dim: [usize; 3],
    rank_count: usize,
    my_rank: usize,
) -> Result<Decomposition> {
    let product: usize = ranks_per_dim.iter().product();
    if ranks_per_dim.contains(&0) || product != rank_count {
        return Err(Error::Config(format!(
            "decomposition {}x{}x{} does not match rank count {rank_count}",
            ranks_per_dim[0], ranks_per_dim[1], ranks_per_dim[2]
        )));
    }
    if my_rank >= rank_count {
        return Err(Error::Config(format!("rank {my_rank} out of range for {rank_count} ranks")));
    }
    let mut local_interior = [0; 3];
    for axis in Axis::ALL {
        let d = axis.index();
        let n = global.extent(axis);
        if n % ranks_per_dim[d] != 0 {
            return Err(Error::Config(format!(
                "extent {n} not divisible by {} on axis {axis}",
                ranks_per_dim[d]
            )));
        }
        local_interior[d] = n / ranks_per_dim[d];
    }
    let rank_coords = [
        my_rank % ranks_per_dim[0],
        (my_rank / ranks_per_dim[0]) % ranks_per_dim[1],
        my_rank / (ranks_per_dim[0] * ranks_per_dim[1]),
    ];
    let mut neighbors = [[Neighbor::Boundary; 2]; 3];
    for axis in Axis::ALL {
        let d = axis.index();
        if rank_coords[d] > 0 {
            let mut c = rank_coords;
            c[d] -= 1;
            neighbors[d][Side::Low.index()] = Neighbor::Rank(rank_of_coords(ranks_per_dim, c));
        }
        if rank_coords[d] + 1 < ranks_per_dim[d] {
            let mut c = rank_coords;
            c[d] += 1;
            neighbors[d][Side::High.index()] = Neighbor::Rank(rank_of_coords(ranks_per_dim, c));
        }
    }
    Ok(Decomposition {
        global_extents: global.extents(),
        ranks_per_dim,
        rank: my_rank,
        rank_coords,
        local_interior,
        neighbors,
    })
}

impl Decomposition {
    /// Single-rank decomposition covering the whole grid.
    pub fn serial(global: &GridSpec) -> Self {
        build_decomposition(global, [1, 1, 1], 1, 0).expect("1x1x1 always divides")
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn rank_count(&self) -> usize {
        self.ranks_per_dim.iter().product()
    }

    pub fn ranks_per_dim(&self) -> [usize; 3] {
        self.ranks_per_dim
    }

    pub fn rank_coords(&self) -> [usize; 3] {
        self.rank_coords
    }

    pub fn global_extents(&self) -> [usize; 3] {
        self.global_extents
    }

    pub fn halo_width(&self) -> usize {
        HALO_WIDTH
    }

    pub fn local_interior(&self) -> [usize; 3] {
        self.local_interior
    }

    /// Local extent per axis including both halo layers.
    pub fn local_extent_with_halo(&self) -> [usize; 3] {
        self.local_interior.map(|n| n + 2 * HALO_WIDTH)
    }

    pub fn interior_len(&self) -> usize {
        self.local_interior.iter().product()
    }

    pub fn neighbor(&self, axis: Axis, side: Side) -> Neighbor {
        self.neighbors[axis.index()][side.index()]
    }

    /// True when this side of the subdomain lies on the physical boundary.
    pub fn is_physical(&self, axis: Axis, side: Side) -> bool {
        self.neighbor(axis, side) == Neighbor::Boundary
    }

    pub fn has_neighbors(&self) -> bool {
        self.neighbors.iter().flatten().any(|n| *n != Neighbor::Boundary)
    }

    /// Global index of this rank's first interior cell.
    pub fn global_offset(&self) -> [usize; 3] {
        [0, 1, 2].map(|d| self.rank_coords[d] * self.local_interior[d])
    }

    pub fn local_to_global(&self, local: [usize; 3]) -> [usize; 3] {
        for d in 0..3 {
            assert!(
                local[d] < self.local_interior[d],
                "local index {:?} outside interior {:?}",
                local,
                self.local_interior
            );
        }
        let offset = self.global_offset();
        [0, 1, 2].map(|d| offset[d] + local[d])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlaneKind {
    /// Interior cells adjacent to the face.
    Border,
    /// Ghost layer just outside the face.
    Halo,
}

/// Rank-local scalar field covering the interior plus a one-cell halo.
#[derive(Clone, Debug)]
pub struct Field {
    decomp: Arc<Decomposition>,
    dims: [usize; 3],
    strides: [usize; 3],
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(decomp: &Arc<Decomposition>) -> Self {
        let dims = decomp.local_interior();
        let ext = decomp.local_extent_with_halo();
        Field {
            decomp: Arc::clone(decomp),
            dims,
            strides: [1, ext[0], ext[0] * ext[1]],
            data: vec![0.0; ext.iter().product()],
        }
    }

    /// Field whose interior is filled from x-fastest interior values.
    pub fn from_interior(decomp: &Arc<Decomposition>, values: &[f64]) -> Self {
        let mut f = Field::zeros(decomp);
        assert_eq!(values.len(), decomp.interior_len(), "interior length mismatch");
        for (off, v) in f.interior_offsets().zip(values) {
            f.data[off] = *v;
        }
        f
    }

    pub fn decomposition(&self) -> &Arc<Decomposition> {
        &self.decomp
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn strides(&self) -> [usize; 3] {
        self.strides
    }

    pub fn same_layout(&self, other: &Field) -> bool {
        Arc::ptr_eq(&self.decomp, &other.decomp) || *self.decomp == *other.decomp
    }

    /// Buffer offset of cell `(i, j, k)`; halo indices run from −1 to `dims`.
    #[inline]
    pub fn offset(&self, i: isize, j: isize, k: isize) -> usize {
        debug_assert!(i >= -1 && i <= self.dims[0] as isize);
        debug_assert!(j >= -1 && j <= self.dims[1] as isize);
        debug_assert!(k >= -1 && k <= self.dims[2] as isize);
        (i + 1) as usize + (j + 1) as usize * self.strides[1] + (k + 1) as usize * self.strides[2]
    }

    pub fn get(&self, i: isize, j: isize, k: isize) -> f64 {
        self.data[self.offset(i, j, k)]
    }

    pub fn set(&mut self, i: isize, j: isize, k: isize, v: f64) {
        let off = self.offset(i, j, k);
        self.data[off] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn interior_len(&self) -> usize {
        self.dims.iter().product()
    }

    /// Interior offsets in x-fastest order. This is the fixed traversal used
    /// by every local reduction.
    pub fn interior_offsets(&self) -> impl Iterator<Item = usize> {
        let [nx, ny, nz] = self.dims;
        let [_, sy, sz] = self.strides;
        (0..nz).flat_map(move |k| {
            (0..ny).flat_map(move |j| {
                let row = 1 + (j + 1) * sy + (k + 1) * sz;
                row..row + nx
            })
        })
    }

    pub fn interior_values(&self) -> Vec<f64> {
        self.interior_offsets().map(|o| self.data[o]).collect()
    }

    pub fn fill_interior(&mut self, v: f64) {
        for o in self.interior_offsets() {
            self.data[o] = v;
        }
    }

    pub fn copy_from(&mut self, other: &Field) {
        assert!(self.same_layout(other), "field layouts differ");
        self.data.copy_from_slice(&other.data);
    }

    /// Offsets of one face plane, first in-plane axis fastest. Planes span
    /// the interior range of the two in-plane axes only (no edges or corners).
    pub fn plane_offsets(
        &self,
        axis: Axis,
        side: Side,
        kind: PlaneKind,
    ) -> impl Iterator<Item = usize> + '_ {
        let n = self.dims[axis.index()] as isize;
        let along: isize = match (side, kind) {
            (Side::Low, PlaneKind::Border) => 0,
            (Side::Low, PlaneKind::Halo) => -1,
            (Side::High, PlaneKind::Border) => n - 1,
            (Side::High, PlaneKind::Halo) => n,
        };
        let (a, b) = axis.others();
        let (na, nb) = (self.dims[a.index()], self.dims[b.index()]);
        (0..nb).flat_map(move |ib| {
            (0..na).map(move |ia| {
                let mut idx = [0isize; 3];
                idx[axis.index()] = along;
                idx[a.index()] = ia as isize;
                idx[b.index()] = ib as isize;
                self.offset(idx[0], idx[1], idx[2])
            })
        })
    }

    pub fn plane_len(&self, axis: Axis) -> usize {
        let (a, b) = axis.others();
        self.dims[a.index()] * self.dims[b.index()]
    }

    pub fn pack_plane(&self, axis: Axis, side: Side, kind: PlaneKind) -> Vec<f64> {
        self.plane_offsets(axis, side, kind).map(|o| self.data[o]).collect()
    }

    pub fn unpack_plane(&mut self, axis: Axis, side: Side, kind: PlaneKind, values: &[f64]) {
        assert_eq!(values.len(), self.plane_len(axis), "plane length mismatch");
        let offs: Vec<usize> = self.plane_offsets(axis, side, kind).collect();
        for (o, v) in offs.into_iter().zip(values) {
            self.data[o] = *v;
        }
    }
}
