//! Structured hexahedral grids with cell-centered data.
//!
//! A [`StructuredGrid`] is fully described by its [`GridSpec`] (cell counts,
//! bounding box and axis partitions); cell geometry is computed on demand
//! from the axis partitions rather than stored per cell.  After
//! partitioning, each rank holds a [`LocalGrid`] view with owned cells,
//! remote-neighbor records and a halo-exchange plan for cell-centered
//! [`DofField`] data.

mod dof;
mod local;

pub use dof::{dof_create, dof_halo_exchange, dof_write_csv, DofField, DofKind, DofValue};
pub use local::{build_index_map, LocalGrid, Neighbor, RemoteNeighbor};

use crate::error::{Error, Result};
use serde::Deserialize;

/// Face indexing convention: `-x, +x, -y, +y, -z, +z`.
pub const FACE_NEIGHBOR_OFFSETS: [[i64; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

/// Boundary tag attached to domain-boundary faces; the default (and only
/// built-in) tag marks a closed boundary.
pub const BOUNDARY_CLOSED: u16 = 0;

/// Global cell numbering scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Numbering {
    /// Layer `k = 0` first (the default).
    #[default]
    BottomUp,
    /// Top layer first; the raw top-down index is shifted to start at zero.
    TopDown,
}

/// Grid geometry specification: cell counts per axis, bounding box and
/// strictly increasing axis partitions (`ncx + 1` entries for `vx`, etc.).
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub ncx: usize,
    pub ncy: usize,
    pub ncz: usize,
    pub bbox: [[f64; 2]; 3],
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub vz: Vec<f64>,
    pub uniform: bool,
}

#[derive(Deserialize)]
struct GridSpecConfig {
    dims: [usize; 3],
    #[serde(default)]
    bbox: Option<[[f64; 2]; 3]>,
    #[serde(default)]
    vx: Option<Vec<f64>>,
    #[serde(default)]
    vy: Option<Vec<f64>>,
    #[serde(default)]
    vz: Option<Vec<f64>>,
}

impl GridSpec {
    /// Uniform grid over `bbox` with `dims` cells per axis.
    pub fn uniform(dims: [usize; 3], bbox: [[f64; 2]; 3]) -> Result<Self> {
        let axis = |n: usize, lo: f64, hi: f64| -> Vec<f64> {
            (0..=n)
                .map(|i| lo + (hi - lo) * i as f64 / n as f64)
                .collect()
        };
        let spec = GridSpec {
            ncx: dims[0],
            ncy: dims[1],
            ncz: dims[2],
            bbox,
            vx: axis(dims[0], bbox[0][0], bbox[0][1]),
            vy: axis(dims[1], bbox[1][0], bbox[1][1]),
            vz: axis(dims[2], bbox[2][0], bbox[2][1]),
            uniform: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Unit-spacing uniform grid (`[0, ncx] x [0, ncy] x [0, ncz]` box).
    pub fn unit(dims: [usize; 3]) -> Result<Self> {
        GridSpec::uniform(
            dims,
            [
                [0.0, dims[0] as f64],
                [0.0, dims[1] as f64],
                [0.0, dims[2] as f64],
            ],
        )
    }

    /// Non-uniform grid from explicit axis partitions.
    pub fn from_partitions(vx: Vec<f64>, vy: Vec<f64>, vz: Vec<f64>) -> Result<Self> {
        if vx.len() < 2 || vy.len() < 2 || vz.len() < 2 {
            return Err(Error::GridConfig(
                "each axis partition needs at least two coordinates".into(),
            ));
        }
        let bbox = [
            [vx[0], *vx.last().unwrap()],
            [vy[0], *vy.last().unwrap()],
            [vz[0], *vz.last().unwrap()],
        ];
        let spec = GridSpec {
            ncx: vx.len() - 1,
            ncy: vy.len() - 1,
            ncz: vz.len() - 1,
            bbox,
            vx,
            vy,
            vz,
            uniform: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Read a spec from a small JSON config: `dims` plus either `bbox`
    /// (uniform spacing) or explicit per-axis partitions.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: GridSpecConfig = serde_json::from_str(text)
            .map_err(|e| Error::GridConfig(format!("bad grid config: {e}")))?;
        match (cfg.vx, cfg.vy, cfg.vz) {
            (Some(vx), Some(vy), Some(vz)) => {
                let spec = GridSpec::from_partitions(vx, vy, vz)?;
                if [spec.ncx, spec.ncy, spec.ncz] != cfg.dims {
                    return Err(Error::GridConfig(
                        "dims do not match the axis partitions".into(),
                    ));
                }
                Ok(spec)
            }
            (None, None, None) => {
                let bbox = cfg.bbox.unwrap_or([
                    [0.0, cfg.dims[0] as f64],
                    [0.0, cfg.dims[1] as f64],
                    [0.0, cfg.dims[2] as f64],
                ]);
                GridSpec::uniform(cfg.dims, bbox)
            }
            _ => Err(Error::GridConfig(
                "either give all of vx, vy, vz or none".into(),
            )),
        }
    }

    pub fn num_cells(&self) -> usize {
        self.ncx * self.ncy * self.ncz
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.ncx, self.ncy, self.ncz]
    }

    fn validate(&self) -> Result<()> {
        if self.ncx == 0 || self.ncy == 0 || self.ncz == 0 {
            return Err(Error::GridConfig("cell counts must be at least 1".into()));
        }
        for (name, v, nc) in [
            ("vx", &self.vx, self.ncx),
            ("vy", &self.vy, self.ncy),
            ("vz", &self.vz, self.ncz),
        ] {
            if v.len() != nc + 1 {
                return Err(Error::GridConfig(format!(
                    "{name} must have {} entries, has {}",
                    nc + 1,
                    v.len()
                )));
            }
            if v.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::GridConfig(format!(
                    "{name} must be strictly increasing"
                )));
            }
        }
        Ok(())
    }
}

fn in_range(ijk: [usize; 3], spec: &GridSpec) -> Result<()> {
    if ijk[0] >= spec.ncx || ijk[1] >= spec.ncy || ijk[2] >= spec.ncz {
        return Err(Error::InvalidCoordinate {
            i: ijk[0],
            j: ijk[1],
            k: ijk[2],
            nx: spec.ncx,
            ny: spec.ncy,
            nz: spec.ncz,
        });
    }
    Ok(())
}

/// Bottom-up global index: `ncx * ncy * k + ncx * j + i`.
pub fn cell_index_bottom_up(ijk: [usize; 3], spec: &GridSpec) -> Result<usize> {
    in_range(ijk, spec)?;
    Ok(spec.ncx * spec.ncy * ijk[2] + spec.ncx * ijk[1] + ijk[0])
}

/// Top-down index as written, `ncx * ncy * (ncz - k) + ncx * j + i`.
///
/// With zero-based `k` this covers `[ncx * ncy, num_cells + ncx * ncy)`;
/// the top layer (`k = ncz - 1`) starts at `ncx * ncy`.  A grid built with
/// [`Numbering::TopDown`] subtracts that offset so indices start at zero.
pub fn cell_index_top_down(ijk: [usize; 3], spec: &GridSpec) -> Result<usize> {
    in_range(ijk, spec)?;
    Ok(spec.ncx * spec.ncy * (spec.ncz - ijk[2]) + spec.ncx * ijk[1] + ijk[0])
}

/// Neighbor reference on the global grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlobalNeighbor {
    Interior(usize),
    Boundary(u16),
}

/// Per-cell view with lazily computed geometry.
#[derive(Debug, Clone)]
pub struct Cell {
    pub ijk: [usize; 3],
    pub global_index: usize,
    pub region: u16,
    /// `Some(tag)` on domain-boundary faces, `None` on interior faces.
    pub boundary: [Option<u16>; 6],
    pub centroid: [f64; 3],
    pub face_areas: [f64; 6],
    pub volume: f64,
}

/// Global structured grid; immutable once built.
#[derive(Debug, Clone)]
pub struct StructuredGrid {
    spec: GridSpec,
    numbering: Numbering,
}

impl StructuredGrid {
    pub fn build(spec: GridSpec) -> Result<Self> {
        Self::build_with_numbering(spec, Numbering::BottomUp)
    }

    pub fn build_with_numbering(spec: GridSpec, numbering: Numbering) -> Result<Self> {
        spec.validate()?;
        Ok(StructuredGrid { spec, numbering })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn numbering(&self) -> Numbering {
        self.numbering
    }

    pub fn num_cells(&self) -> usize {
        self.spec.num_cells()
    }

    pub fn bbox(&self) -> &[[f64; 2]; 3] {
        &self.spec.bbox
    }

    /// Global index of a cell under the active numbering.
    pub fn global_index(&self, ijk: [usize; 3]) -> Result<usize> {
        match self.numbering {
            Numbering::BottomUp => cell_index_bottom_up(ijk, &self.spec),
            Numbering::TopDown => {
                Ok(cell_index_top_down(ijk, &self.spec)? - self.spec.ncx * self.spec.ncy)
            }
        }
    }

    /// Inverse of [`StructuredGrid::global_index`].
    pub fn ijk_of(&self, global: usize) -> [usize; 3] {
        debug_assert!(global < self.num_cells());
        let layer = self.spec.ncx * self.spec.ncy;
        let (q, r) = (global / layer, global % layer);
        let k = match self.numbering {
            Numbering::BottomUp => q,
            Numbering::TopDown => self.spec.ncz - 1 - q,
        };
        [r % self.spec.ncx, r / self.spec.ncx, k]
    }

    pub fn spacing(&self, ijk: [usize; 3]) -> [f64; 3] {
        [
            self.spec.vx[ijk[0] + 1] - self.spec.vx[ijk[0]],
            self.spec.vy[ijk[1] + 1] - self.spec.vy[ijk[1]],
            self.spec.vz[ijk[2] + 1] - self.spec.vz[ijk[2]],
        ]
    }

    pub fn centroid(&self, ijk: [usize; 3]) -> [f64; 3] {
        [
            0.5 * (self.spec.vx[ijk[0]] + self.spec.vx[ijk[0] + 1]),
            0.5 * (self.spec.vy[ijk[1]] + self.spec.vy[ijk[1] + 1]),
            0.5 * (self.spec.vz[ijk[2]] + self.spec.vz[ijk[2] + 1]),
        ]
    }

    pub fn volume(&self, ijk: [usize; 3]) -> f64 {
        let [dx, dy, dz] = self.spacing(ijk);
        dx * dy * dz
    }

    /// Areas of the six faces in the `-x, +x, -y, +y, -z, +z` order.
    pub fn face_areas(&self, ijk: [usize; 3]) -> [f64; 6] {
        let [dx, dy, dz] = self.spacing(ijk);
        [dy * dz, dy * dz, dx * dz, dx * dz, dx * dy, dx * dy]
    }

    /// Neighbor across `face`, or the boundary tag if the face lies on the
    /// domain boundary.
    pub fn neighbor(&self, ijk: [usize; 3], face: usize) -> GlobalNeighbor {
        let off = FACE_NEIGHBOR_OFFSETS[face];
        let dims = self.spec.dims();
        let mut nb = [0usize; 3];
        for a in 0..3 {
            let v = ijk[a] as i64 + off[a];
            if v < 0 || v >= dims[a] as i64 {
                return GlobalNeighbor::Boundary(BOUNDARY_CLOSED);
            }
            nb[a] = v as usize;
        }
        GlobalNeighbor::Interior(self.global_index(nb).expect("neighbor in range"))
    }

    pub fn neighbors(&self, global: usize) -> [GlobalNeighbor; 6] {
        let ijk = self.ijk_of(global);
        std::array::from_fn(|f| self.neighbor(ijk, f))
    }

    /// Full cell view with geometry computed from the axis partitions.
    pub fn cell(&self, global: usize) -> Cell {
        let ijk = self.ijk_of(global);
        let mut boundary = [None; 6];
        for (f, b) in boundary.iter_mut().enumerate() {
            if let GlobalNeighbor::Boundary(tag) = self.neighbor(ijk, f) {
                *b = Some(tag);
            }
        }
        Cell {
            ijk,
            global_index: global,
            region: 0,
            boundary,
            centroid: self.centroid(ijk),
            face_areas: self.face_areas(ijk),
            volume: self.volume(ijk),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bottom_up_examples() {
        let spec = GridSpec::unit([2, 3, 4]).unwrap();
        assert_eq!(cell_index_bottom_up([0, 0, 0], &spec).unwrap(), 0);
        assert_eq!(cell_index_bottom_up([1, 2, 3], &spec).unwrap(), 23);
        assert_eq!(
            cell_index_bottom_up([1, 2, 3], &spec).unwrap(),
            spec.num_cells() - 1
        );
        assert!(cell_index_bottom_up([2, 0, 0], &spec).is_err());
    }

    #[test]
    fn top_down_examples() {
        let spec = GridSpec::unit([2, 3, 4]).unwrap();
        assert_eq!(cell_index_top_down([1, 2, 3], &spec).unwrap(), 11);
        assert!(cell_index_top_down([0, 0, 4], &spec).is_err());
        // top layer, i = j = 0 gives ncx * ncy
        assert_eq!(cell_index_top_down([0, 0, 3], &spec).unwrap(), 6);
    }

    #[test]
    fn numbering_bijections() {
        let spec = GridSpec::unit([3, 2, 4]).unwrap();
        for numbering in [Numbering::BottomUp, Numbering::TopDown] {
            let grid = StructuredGrid::build_with_numbering(spec.clone(), numbering).unwrap();
            let mut seen = vec![false; grid.num_cells()];
            for i in 0..3 {
                for j in 0..2 {
                    for k in 0..4 {
                        let g = grid.global_index([i, j, k]).unwrap();
                        assert!(!seen[g]);
                        seen[g] = true;
                        assert_eq!(grid.ijk_of(g), [i, j, k]);
                    }
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
        // raw top-down formula is an injection onto a shifted range
        let mut raw: Vec<usize> = Vec::new();
        for i in 0..3 {
            for j in 0..2 {
                for k in 0..4 {
                    raw.push(cell_index_top_down([i, j, k], &spec).unwrap());
                }
            }
        }
        raw.sort_unstable();
        raw.dedup();
        assert_eq!(raw.len(), spec.num_cells());
        assert_eq!(*raw.first().unwrap(), 6);
        assert_eq!(*raw.last().unwrap(), spec.num_cells() + 6 - 1);
    }

    #[test]
    fn single_cell_grid() {
        let grid = StructuredGrid::build(GridSpec::uniform([1, 1, 1], [[0.0, 1.0]; 3]).unwrap())
            .unwrap();
        assert_eq!(grid.num_cells(), 1);
        let cell = grid.cell(0);
        assert_eq!(cell.volume, 1.0);
        assert!(cell.boundary.iter().all(|b| b.is_some()));
    }

    #[test]
    fn two_cell_grid_topology() {
        let grid = StructuredGrid::build(GridSpec::unit([2, 1, 1]).unwrap()).unwrap();
        for g in 0..2 {
            let interior: Vec<_> = grid
                .neighbors(g)
                .iter()
                .filter(|n| matches!(n, GlobalNeighbor::Interior(_)))
                .cloned()
                .collect();
            assert_eq!(interior.len(), 1);
            assert_eq!(interior[0], GlobalNeighbor::Interior(1 - g));
        }
    }

    #[test]
    fn corner_and_center_neighbor_counts() {
        let grid = StructuredGrid::build(GridSpec::unit([3, 3, 3]).unwrap()).unwrap();
        let corner = grid.global_index([0, 0, 0]).unwrap();
        let n_corner = grid
            .neighbors(corner)
            .iter()
            .filter(|n| matches!(n, GlobalNeighbor::Interior(_)))
            .count();
        assert_eq!(n_corner, 3);
        let center = grid.global_index([1, 1, 1]).unwrap();
        let n_center = grid
            .neighbors(center)
            .iter()
            .filter(|n| matches!(n, GlobalNeighbor::Interior(_)))
            .count();
        assert_eq!(n_center, 6);
    }

    #[test]
    fn non_uniform_volumes() {
        let spec = GridSpec::from_partitions(
            vec![0.0, 1.0, 3.0],
            vec![0.0, 1.0],
            vec![0.0, 1.0],
        )
        .unwrap();
        let grid = StructuredGrid::build(spec).unwrap();
        assert_eq!(grid.volume(grid.ijk_of(0)), 1.0);
        assert_eq!(grid.volume(grid.ijk_of(1)), 2.0);
    }

    #[test]
    fn volumes_sum_to_bbox_volume() {
        let spec = GridSpec::from_partitions(
            vec![0.0, 0.3, 1.1, 2.0],
            vec![-1.0, -0.25, 0.5],
            vec![0.0, 0.7, 1.3, 1.9, 3.0],
        )
        .unwrap();
        let grid = StructuredGrid::build(spec.clone()).unwrap();
        let total: f64 = (0..grid.num_cells())
            .map(|g| grid.volume(grid.ijk_of(g)))
            .sum();
        let bbox_vol = (spec.bbox[0][1] - spec.bbox[0][0])
            * (spec.bbox[1][1] - spec.bbox[1][0])
            * (spec.bbox[2][1] - spec.bbox[2][0]);
        assert!((total - bbox_vol).abs() <= 1e-12 * bbox_vol.abs());
    }

    #[test]
    fn interior_faces_agree_from_both_sides() {
        let spec = GridSpec::from_partitions(
            vec![0.0, 0.5, 2.0],
            vec![0.0, 1.0, 1.5],
            vec![0.0, 2.5],
        )
        .unwrap();
        let grid = StructuredGrid::build(spec).unwrap();
        let mut seen = std::collections::BTreeMap::new();
        for g in 0..grid.num_cells() {
            let ijk = grid.ijk_of(g);
            let areas = grid.face_areas(ijk);
            for f in 0..6 {
                if let GlobalNeighbor::Interior(h) = grid.neighbor(ijk, f) {
                    let key = (g.min(h), g.max(h), f / 2);
                    let e = seen.entry(key).or_insert((0usize, areas[f]));
                    e.0 += 1;
                    assert!((e.1 - areas[f]).abs() <= 1e-14 * e.1.abs());
                }
            }
        }
        assert!(seen.values().all(|&(count, _)| count == 2));
    }

    #[test]
    fn json_config_round_trip() {
        let spec = GridSpec::from_json_str(
            r#"{"dims": [4, 2, 1], "bbox": [[0.0, 4.0], [0.0, 2.0], [0.0, 1.0]]}"#,
        )
        .unwrap();
        assert_eq!(spec.dims(), [4, 2, 1]);
        assert!(spec.uniform);
        let spec = GridSpec::from_json_str(
            r#"{"dims": [2, 1, 1], "vx": [0.0, 1.0, 3.0], "vy": [0.0, 1.0], "vz": [0.0, 1.0]}"#,
        )
        .unwrap();
        assert!(!spec.uniform);
        assert_eq!(spec.bbox[0], [0.0, 3.0]);
        assert!(GridSpec::from_json_str(r#"{"dims": [0, 1, 1]}"#).is_err());
        assert!(GridSpec::from_json_str("not json").is_err());
    }
}
