//! Index maps and reusable halo-exchange plans.

use super::RankCtx;
use crate::error::{Error, Result};
use std::any::Any;
use std::sync::Arc;

/// Distribution of a global index range over ranks plus an ordered halo.
///
/// Owned entries of rank `r` are the contiguous global range
/// `[offsets[r], offsets[r+1])` with local indices `0 .. nlocal`.  Halo
/// entries follow the owned entries in local numbering, in the order of
/// `halo_globals`.
#[derive(Debug, Clone)]
pub struct IndexMap {
    offsets: Arc<Vec<usize>>,
    rank: usize,
    halo: Vec<usize>,
    halo_lookup: Vec<(usize, usize)>, // (global, halo slot) sorted by global
}

impl IndexMap {
    pub fn new(offsets: Arc<Vec<usize>>, rank: usize) -> Self {
        assert!(rank + 1 < offsets.len(), "rank outside offset table");
        IndexMap {
            offsets,
            rank,
            halo: Vec::new(),
            halo_lookup: Vec::new(),
        }
    }

    /// Near-equal contiguous block distribution of `nglobal` entries: the
    /// first `nglobal % np` ranks get one extra entry.
    pub fn block(nglobal: usize, np: usize, rank: usize) -> Self {
        let base = nglobal / np;
        let rem = nglobal % np;
        let mut offsets = Vec::with_capacity(np + 1);
        let mut at = 0;
        offsets.push(0);
        for r in 0..np {
            at += base + usize::from(r < rem);
            offsets.push(at);
        }
        IndexMap::new(Arc::new(offsets), rank)
    }

    /// Distribution from explicit per-rank sizes.
    pub fn from_sizes(sizes: &[usize], rank: usize) -> Self {
        let mut offsets = Vec::with_capacity(sizes.len() + 1);
        offsets.push(0);
        let mut at = 0;
        for &s in sizes {
            at += s;
            offsets.push(at);
        }
        IndexMap::new(Arc::new(offsets), rank)
    }

    /// Attach halo entries (global indices, in halo slot order).
    pub fn with_halo(mut self, halo: Vec<usize>) -> Self {
        let mut lookup: Vec<(usize, usize)> = halo.iter().copied().zip(0..).collect();
        lookup.sort_unstable();
        self.halo = halo;
        self.halo_lookup = lookup;
        self
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn nprocs(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn nglobal(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn nlocal(&self) -> usize {
        self.offsets[self.rank + 1] - self.offsets[self.rank]
    }

    /// Owned plus halo entries.
    pub fn ntlocal(&self) -> usize {
        self.nlocal() + self.halo.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn offsets_arc(&self) -> Arc<Vec<usize>> {
        Arc::clone(&self.offsets)
    }

    pub fn halo_globals(&self) -> &[usize] {
        &self.halo
    }

    pub fn owns(&self, global: usize) -> bool {
        global >= self.offsets[self.rank] && global < self.offsets[self.rank + 1]
    }

    /// Rank owning a global index.
    pub fn owner_of(&self, global: usize) -> usize {
        debug_assert!(global < self.nglobal());
        self.offsets.partition_point(|&o| o <= global) - 1
    }

    /// Local index of a global entry (owned or halo).
    pub fn local_of_global(&self, global: usize) -> Option<usize> {
        if self.owns(global) {
            return Some(global - self.offsets[self.rank]);
        }
        self.halo_lookup
            .binary_search_by_key(&global, |&(g, _)| g)
            .ok()
            .map(|i| self.nlocal() + self.halo_lookup[i].1)
    }

    pub fn global_of_local(&self, local: usize) -> usize {
        let nlocal = self.nlocal();
        if local < nlocal {
            self.offsets[self.rank] + local
        } else {
            self.halo[local - nlocal]
        }
    }

    /// Maps share a distribution if their offset tables agree.
    pub fn same_distribution(&self, other: &IndexMap) -> bool {
        Arc::ptr_eq(&self.offsets, &other.offsets) || *self.offsets == *other.offsets
    }
}

/// Reusable halo-exchange plan: which owned entries to pack for each peer
/// and which halo slots the received entries fill.
#[derive(Debug, Clone)]
pub struct CommPlan {
    pub send_counts: Vec<usize>,
    pub send_displs: Vec<usize>,
    pub recv_counts: Vec<usize>,
    pub recv_displs: Vec<usize>,
    /// Local owned indices to pack, grouped by peer in ascending order.
    pub send_index: Vec<usize>,
    /// Halo slot indices to fill, grouped by peer in ascending order.
    pub write_index: Vec<usize>,
    nprocs: usize,
    rank: usize,
}

impl CommPlan {
    pub fn send_size(&self) -> usize {
        self.send_index.len()
    }

    pub fn recv_size(&self) -> usize {
        self.write_index.len()
    }

    /// Exchange counts with every peer and verify that this plan agrees
    /// with the plans held by the other ranks.
    pub fn validate(&self, ctx: &RankCtx) -> Result<()> {
        let counts = ctx.all_to_all::<(usize, usize)>(
            (0..self.nprocs)
                .map(|p| (self.send_counts[p], self.recv_counts[p]))
                .collect(),
        )?;
        for (peer, (peer_send, peer_recv)) in counts.into_iter().enumerate() {
            if peer_send != self.recv_counts[peer] || peer_recv != self.send_counts[peer] {
                return Err(Error::PlanMismatch(format!(
                    "rank {} expects {} from / {} to peer {peer}, peer plans {peer_send} / {peer_recv}",
                    self.rank, self.recv_counts[peer], self.send_counts[peer]
                )));
            }
        }
        Ok(())
    }
}

/// Build a halo-exchange plan collectively.
///
/// `needs` lists the global indices this rank wants, in halo slot order.
/// `owner_of` resolves a global index to its owning rank; `local_of` maps a
/// requested global index to the local packing index on its owner.
pub fn build_comm_plan(
    ctx: &RankCtx,
    needs: &[usize],
    owner_of: &dyn Fn(usize) -> usize,
    local_of: &dyn Fn(usize) -> Option<usize>,
) -> Result<CommPlan> {
    let np = ctx.nprocs();
    let rank = ctx.rank();

    // group requested globals by owner, remembering the halo slot
    let mut requests: Vec<Vec<usize>> = vec![Vec::new(); np];
    let mut write_groups: Vec<Vec<usize>> = vec![Vec::new(); np];
    for (slot, &g) in needs.iter().enumerate() {
        let owner = owner_of(g);
        if owner == rank {
            return Err(Error::PlanMismatch(format!(
                "rank {rank} requested its own entry {g} as halo"
            )));
        }
        requests[owner].push(g);
        write_groups[owner].push(slot);
    }

    // every rank learns what its peers need from it
    let incoming = ctx.all_to_all::<Vec<usize>>(requests)?;

    let mut send_counts = vec![0usize; np];
    let mut send_index = Vec::new();
    for (peer, wanted) in incoming.iter().enumerate() {
        send_counts[peer] = wanted.len();
        for &g in wanted {
            let l = local_of(g).ok_or_else(|| {
                Error::PlanMismatch(format!(
                    "rank {rank} asked for entry {g} it does not own (request from peer {peer})"
                ))
            })?;
            send_index.push(l);
        }
    }

    let mut recv_counts = vec![0usize; np];
    let mut write_index = Vec::new();
    for (peer, slots) in write_groups.iter().enumerate() {
        recv_counts[peer] = slots.len();
        write_index.extend_from_slice(slots);
    }

    let displs = |counts: &[usize]| {
        let mut d = Vec::with_capacity(np);
        let mut at = 0;
        for &c in counts {
            d.push(at);
            at += c;
        }
        d
    };
    let plan = CommPlan {
        send_displs: displs(&send_counts),
        recv_displs: displs(&recv_counts),
        send_counts,
        recv_counts,
        send_index,
        write_index,
        nprocs: np,
        rank,
    };
    plan.validate(ctx)?;
    Ok(plan)
}

/// Plan for a map whose ownership is the contiguous row distribution:
/// halo entries are requested straight from the offset table.
pub fn build_comm_plan_for_map(ctx: &RankCtx, map: &IndexMap) -> Result<CommPlan> {
    let offsets = map.offsets().to_vec();
    build_comm_plan(
        ctx,
        map.halo_globals(),
        &|g| offsets.partition_point(|&o| o <= g) - 1,
        &|g| {
            let rank = ctx.rank();
            (g >= offsets[rank] && g < offsets[rank + 1]).then(|| g - offsets[rank])
        },
    )
}

/// Run one halo exchange: pack `width` consecutive values per owned entry
/// listed in the plan, ship them, and scatter into `halo` slots.
pub fn exchange<T: Copy + Any + Send>(
    ctx: &RankCtx,
    plan: &CommPlan,
    owned: &[T],
    halo: &mut [T],
    width: usize,
) -> Result<()> {
    if halo.len() != plan.recv_size() * width {
        return Err(Error::PlanMismatch(format!(
            "halo buffer holds {} values, plan expects {}",
            halo.len(),
            plan.recv_size() * width
        )));
    }
    let np = ctx.nprocs();
    let rank = ctx.rank();
    for peer in 0..np {
        if peer == rank || plan.send_counts[peer] == 0 {
            continue;
        }
        let lo = plan.send_displs[peer];
        let hi = lo + plan.send_counts[peer];
        let mut buf = Vec::with_capacity((hi - lo) * width);
        for &l in &plan.send_index[lo..hi] {
            buf.extend_from_slice(&owned[l * width..(l + 1) * width]);
        }
        ctx.send(peer, buf)?;
    }
    for peer in 0..np {
        if peer == rank || plan.recv_counts[peer] == 0 {
            continue;
        }
        let buf: Vec<T> = ctx.recv(peer)?;
        if buf.len() != plan.recv_counts[peer] * width {
            return Err(Error::PlanMismatch(format!(
                "rank {rank} received {} values from peer {peer}, expected {}",
                buf.len(),
                plan.recv_counts[peer] * width
            )));
        }
        let lo = plan.recv_displs[peer];
        for (i, chunk) in buf.chunks_exact(width).enumerate() {
            let slot = plan.write_index[lo + i];
            halo[slot * width..(slot + 1) * width].copy_from_slice(chunk);
        }
    }
    Ok(())
}
