//! Per-rank view of a partitioned grid.

use super::{Cell, GlobalNeighbor, StructuredGrid};
use crate::error::{Error, Result};
use crate::partition::Partition;
use crate::runtime::{build_comm_plan, CommPlan, IndexMap, RankCtx};
use std::sync::Arc;

/// A neighbor cell owned by another rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RemoteNeighbor {
    pub global_index: usize,
    pub owner_rank: usize,
    /// Position of the cell in the owner's local numbering.
    pub owner_local_index: usize,
}

/// Per-face neighbor reference on a local grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Neighbor {
    /// Local index of a cell owned by this rank.
    Owned(usize),
    /// Index into the remote-neighbor table.
    Remote(usize),
    Boundary(u16),
}

/// The sub-grid owned by one rank: owned cells in ascending global order,
/// a remote-neighbor table and per-cell face links.
#[derive(Debug, Clone)]
pub struct LocalGrid {
    global: Arc<StructuredGrid>,
    partition: Arc<Partition>,
    rank: usize,
    owned: Vec<usize>,
    remote: Vec<RemoteNeighbor>,
    links: Vec<[Neighbor; 6]>,
    plan: Option<CommPlan>,
}

impl LocalGrid {
    pub fn new(
        global: Arc<StructuredGrid>,
        partition: Arc<Partition>,
        rank: usize,
    ) -> Result<Self> {
        if partition.num_cells() != global.num_cells() {
            return Err(Error::InvalidArgument(
                "partition size does not match the grid".into(),
            ));
        }
        if rank >= partition.np() {
            return Err(Error::InvalidArgument(format!(
                "rank {rank} outside partition with np = {}",
                partition.np()
            )));
        }
        // local index of any cell within its owner = position among the
        // owner's cells in ascending global order
        let n = global.num_cells();
        let mut pos_in_owner = vec![0usize; n];
        let mut counts = vec![0usize; partition.np()];
        for g in 0..n {
            let r = partition.owner_of(g);
            pos_in_owner[g] = counts[r];
            counts[r] += 1;
        }

        let owned: Vec<usize> = (0..n).filter(|&g| partition.owner_of(g) == rank).collect();
        let mut remote: Vec<RemoteNeighbor> = Vec::new();
        for &g in &owned {
            for nb in global.neighbors(g) {
                if let GlobalNeighbor::Interior(h) = nb {
                    if partition.owner_of(h) != rank {
                        remote.push(RemoteNeighbor {
                            global_index: h,
                            owner_rank: partition.owner_of(h),
                            owner_local_index: pos_in_owner[h],
                        });
                    }
                }
            }
        }
        remote.sort_unstable_by_key(|r| r.global_index);
        remote.dedup();

        let links = owned
            .iter()
            .map(|&g| {
                let mut entry = [Neighbor::Boundary(0); 6];
                for (f, nb) in global.neighbors(g).into_iter().enumerate() {
                    entry[f] = match nb {
                        GlobalNeighbor::Boundary(tag) => Neighbor::Boundary(tag),
                        GlobalNeighbor::Interior(h) => {
                            if partition.owner_of(h) == rank {
                                Neighbor::Owned(pos_in_owner[h])
                            } else {
                                let slot = remote
                                    .binary_search_by_key(&h, |r| r.global_index)
                                    .expect("remote neighbor recorded");
                                Neighbor::Remote(slot)
                            }
                        }
                    };
                }
                entry
            })
            .collect();

        Ok(LocalGrid {
            global,
            partition,
            rank,
            owned,
            remote,
            links,
            plan: None,
        })
    }

    pub fn global(&self) -> &StructuredGrid {
        &self.global
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn nprocs(&self) -> usize {
        self.partition.np()
    }

    pub fn num_owned(&self) -> usize {
        self.owned.len()
    }

    /// Owned cells, ascending by global index (the local numbering).
    pub fn owned_globals(&self) -> &[usize] {
        &self.owned
    }

    pub fn remote_neighbors(&self) -> &[RemoteNeighbor] {
        &self.remote
    }

    pub fn global_of_local(&self, local: usize) -> usize {
        self.owned[local]
    }

    pub fn local_of_global(&self, global: usize) -> Option<usize> {
        self.owned.binary_search(&global).ok()
    }

    /// Face links of an owned cell.
    pub fn neighbors(&self, local: usize) -> &[Neighbor; 6] {
        &self.links[local]
    }

    pub fn cell(&self, local: usize) -> Cell {
        self.global.cell(self.owned[local])
    }

    /// Build the halo-exchange plan for cell-centered fields; collective.
    pub fn build_comm_plan(&mut self, ctx: &RankCtx) -> Result<()> {
        let needs: Vec<usize> = self.remote.iter().map(|r| r.global_index).collect();
        let partition = Arc::clone(&self.partition);
        let owned = self.owned.clone();
        let plan = build_comm_plan(
            ctx,
            &needs,
            &|g| partition.owner_of(g),
            &|g| owned.binary_search(&g).ok(),
        )?;
        self.plan = Some(plan);
        Ok(())
    }

    pub fn comm_plan(&self) -> Option<&CommPlan> {
        self.plan.as_ref()
    }
}

/// Linear-system index map of a partitioned grid: rows renumbered
/// contiguously by rank (rank 0 first) with `dofs_per_cell` consecutive
/// rows per cell, and the halo holding every unknown of each remote
/// neighbor, appended after the owned rows.
pub fn build_index_map(grid: &LocalGrid, dofs_per_cell: usize) -> Result<IndexMap> {
    if dofs_per_cell == 0 {
        return Err(Error::InvalidArgument("dofs_per_cell must be >= 1".into()));
    }
    let sizes: Vec<usize> = grid
        .partition()
        .sizes()
        .into_iter()
        .map(|s| s * dofs_per_cell)
        .collect();
    let map = IndexMap::from_sizes(&sizes, grid.rank());
    let offsets = map.offsets().to_vec();
    let halo: Vec<usize> = grid
        .remote_neighbors()
        .iter()
        .flat_map(|rn| {
            let base = offsets[rn.owner_rank] + rn.owner_local_index * dofs_per_cell;
            (0..dofs_per_cell).map(move |u| base + u)
        })
        .collect();
    Ok(map.with_halo(halo))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::partition::partition_block;

    fn setup(dims: [usize; 3], np: usize) -> (Arc<StructuredGrid>, Arc<Partition>) {
        let grid = Arc::new(StructuredGrid::build(GridSpec::unit(dims).unwrap()).unwrap());
        let part = Arc::new(partition_block(&grid, np).unwrap());
        (grid, part)
    }

    #[test]
    fn two_cells_two_ranks() {
        let (grid, part) = setup([2, 1, 1], 2);
        for rank in 0..2 {
            let local = LocalGrid::new(Arc::clone(&grid), Arc::clone(&part), rank).unwrap();
            assert_eq!(local.num_owned(), 1);
            assert_eq!(local.remote_neighbors().len(), 1);
            let rn = local.remote_neighbors()[0];
            assert_eq!(rn.owner_rank, 1 - rank);
            assert_eq!(rn.owner_local_index, 0);
            let remotes = local
                .neighbors(0)
                .iter()
                .filter(|n| matches!(n, Neighbor::Remote(_)))
                .count();
            assert_eq!(remotes, 1);
        }
    }

    #[test]
    fn local_numbering_is_ascending_global() {
        let (grid, part) = setup([4, 3, 2], 3);
        let local = LocalGrid::new(grid, part, 1).unwrap();
        let globals = local.owned_globals();
        assert!(globals.windows(2).all(|w| w[0] < w[1]));
        for (l, &g) in globals.iter().enumerate() {
            assert_eq!(local.local_of_global(g), Some(l));
            assert_eq!(local.global_of_local(l), g);
        }
    }

    #[test]
    fn index_map_from_grid_examples() {
        // single rank: local equals global, no halo
        let (grid, part) = setup([2, 1, 1], 1);
        let local = LocalGrid::new(Arc::clone(&grid), part, 0).unwrap();
        let map = build_index_map(&local, 1).unwrap();
        assert_eq!(map.nlocal(), 2);
        assert_eq!(map.ntlocal(), 2);

        // two cells over two ranks, one unknown per cell
        let (grid, part) = setup([2, 1, 1], 2);
        for rank in 0..2 {
            let local = LocalGrid::new(Arc::clone(&grid), Arc::clone(&part), rank).unwrap();
            let map = build_index_map(&local, 1).unwrap();
            assert_eq!(map.offsets(), &[0, 1, 2]);
            assert_eq!(map.nlocal(), 1);
            assert_eq!(map.ntlocal(), 2, "one owned plus one halo row");
            assert_eq!(map.halo_globals(), &[1 - rank]);
        }

        // several unknowns per cell: rows stay consecutive per cell
        let (grid, part) = setup([4, 1, 1], 2);
        let local = LocalGrid::new(grid, part, 0).unwrap();
        let map = build_index_map(&local, 3).unwrap();
        assert_eq!(map.offsets(), &[0, 6, 12]);
        assert_eq!(map.halo_globals(), &[6, 7, 8]);
        assert_eq!(map.local_of_global(7), Some(7));
    }

    #[test]
    fn index_map_vector_exchange_round_trips() {
        use crate::runtime::{build_comm_plan_for_map, exchange, spawn_ranks};
        spawn_ranks(3, |ctx| {
            let grid = Arc::new(
                StructuredGrid::build(GridSpec::unit([6, 1, 1]).unwrap()).unwrap(),
            );
            let part = Arc::new(partition_block(&grid, 3).unwrap());
            let local = LocalGrid::new(grid, part, ctx.rank())?;
            let map = build_index_map(&local, 1)?;
            let plan = build_comm_plan_for_map(ctx, &map)?;
            let lo = map.offsets()[ctx.rank()];
            let owned: Vec<f64> = (0..map.nlocal()).map(|l| (lo + l) as f64).collect();
            let mut halo = vec![0.0; map.ntlocal() - map.nlocal()];
            exchange(ctx, &plan, &owned, &mut halo, 1)?;
            for (slot, &g) in map.halo_globals().iter().enumerate() {
                assert_eq!(halo[slot], g as f64);
            }
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn owned_links_match_global_topology() {
        let (grid, part) = setup([3, 3, 1], 1);
        let local = LocalGrid::new(Arc::clone(&grid), part, 0).unwrap();
        // single rank: all interior links owned, none remote
        for l in 0..local.num_owned() {
            for nb in local.neighbors(l) {
                assert!(!matches!(nb, Neighbor::Remote(_)));
            }
        }
        let center = grid.global_index([1, 1, 0]).unwrap();
        let owned_links = local
            .neighbors(local.local_of_global(center).unwrap())
            .iter()
            .filter(|n| matches!(n, Neighbor::Owned(_)))
            .count();
        assert_eq!(owned_links, 4);
    }
}
