//! Cell-centered degrees of freedom with halo exchange.

use super::LocalGrid;
use crate::error::{Error, Result};
use crate::runtime::{exchange, RankCtx};
use std::any::Any;
use std::fmt::Display;
use std::io::Write;

/// Field kinds: one value set per cell, or a single constant for the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofKind {
    Cell,
    Constant,
}

/// Value types storable in a [`DofField`].
pub trait DofValue: Copy + Default + Any + Send + Display {}
impl DofValue for f64 {}
impl DofValue for i64 {}

/// Named cell-centered data with `dim` components per entry.
///
/// `values` holds `dim * owned` entries for cell fields (cell-major) or
/// `dim` entries for constants; `halo` holds one entry set per remote
/// neighbor and is valid only after [`dof_halo_exchange`].
#[derive(Debug, Clone)]
pub struct DofField<T: DofValue> {
    pub name: String,
    pub kind: DofKind,
    pub dim: usize,
    values: Vec<T>,
    halo: Vec<T>,
}

impl<T: DofValue> DofField<T> {
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn halo(&self) -> &[T] {
        &self.halo
    }

    /// Components of one owned cell.
    pub fn cell(&self, local: usize) -> &[T] {
        match self.kind {
            DofKind::Cell => &self.values[local * self.dim..(local + 1) * self.dim],
            DofKind::Constant => &self.values,
        }
    }

    /// Components of one remote neighbor (after exchange).
    pub fn remote(&self, slot: usize) -> &[T] {
        &self.halo[slot * self.dim..(slot + 1) * self.dim]
    }
}

/// Create a zero-initialized field attached to `grid`.
pub fn dof_create<T: DofValue>(
    grid: &LocalGrid,
    name: &str,
    kind: DofKind,
    dim: usize,
) -> Result<DofField<T>> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dof dimension must be >= 1".into()));
    }
    let count = match kind {
        DofKind::Cell => grid.num_owned() * dim,
        DofKind::Constant => dim,
    };
    Ok(DofField {
        name: name.to_string(),
        kind,
        dim,
        values: vec![T::default(); count],
        halo: vec![T::default(); grid.remote_neighbors().len() * dim],
    })
}

/// Fill the halo with the owners' current values; collective.
///
/// Constant fields replicate the constant into every halo slot without
/// communication.  Cell fields need the grid's communication plan.
pub fn dof_halo_exchange<T: DofValue>(
    ctx: &RankCtx,
    grid: &LocalGrid,
    field: &mut DofField<T>,
) -> Result<()> {
    match field.kind {
        DofKind::Constant => {
            for slot in 0..grid.remote_neighbors().len() {
                for d in 0..field.dim {
                    field.halo[slot * field.dim + d] = field.values[d];
                }
            }
            Ok(())
        }
        DofKind::Cell => {
            let plan = grid.comm_plan().ok_or(Error::NotAssembled)?;
            exchange(ctx, plan, &field.values, &mut field.halo, field.dim)
        }
    }
}

/// Write owned values as CSV rows `global_index,<name>_0,...`.
pub fn dof_write_csv<T: DofValue>(
    grid: &LocalGrid,
    field: &DofField<T>,
    out: &mut dyn Write,
) -> Result<()> {
    write!(out, "global_index")?;
    for d in 0..field.dim {
        write!(out, ",{}_{d}", field.name)?;
    }
    writeln!(out)?;
    for local in 0..grid.num_owned() {
        write!(out, "{}", grid.global_of_local(local))?;
        for v in field.cell(local) {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
