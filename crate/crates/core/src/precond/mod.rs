//! Preconditioner stack: incomplete LU factorizations, restricted
//! additive Schwarz, algebraic multigrid and multi-stage pressure-system
//! composites, all behind the [`Precond`] apply interface.
//!
//! [`pc_dispatch`] builds any of them from a [`PcKind`] tag; `User`
//! accepts an externally supplied solve callback and `None` is the
//! identity.

mod amg;
mod cpr;
mod ilu;
mod ras;

pub use amg::{amg_setup, amg_solve, amg_vcycle, AmgHierarchy, AmgParams, AmgPc};
pub use cpr::{
    cpr_apply, cpr_setup, extract_pressure_matrix, pressure_index_map, BlockLayout, CprData,
    CprParams, CprVariant,
};
pub use ilu::{ilu0_factor, ilu_factor, iluk_factor, ilut_factor, lu_solve, lu_solve_into, IluFactors, IluVariant};
pub use ras::{ras_apply, ras_setup, LocalSolver, RasData, RasParams};

use crate::error::{Error, Result};
use crate::krylov::{IdentityPc, Precond};
use crate::linalg::{DenseLu, DistMatrix, DistVector};
use crate::runtime::{IndexMap, RankCtx};
use std::sync::Arc;

/// Built-in preconditioner kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcKind {
    Ras,
    Amg,
    CprFp,
    CprPf,
    CprFpf,
    CprFfpf,
    User,
    None,
}

impl PcKind {
    /// Parse the CLI spelling of a kind.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "ras" => PcKind::Ras,
            "amg" => PcKind::Amg,
            "cpr-fp" | "cpr_fp" => PcKind::CprFp,
            "cpr-pf" | "cpr_pf" => PcKind::CprPf,
            "cpr-fpf" | "cpr_fpf" => PcKind::CprFpf,
            "cpr-ffpf" | "cpr_ffpf" => PcKind::CprFfpf,
            "user" => PcKind::User,
            "none" => PcKind::None,
            other => return Err(Error::InvalidKind(other.to_string())),
        })
    }
}

/// Parameters consumed by [`pc_dispatch`].
#[derive(Debug, Clone, Copy, Default)]
pub struct PcConfig {
    pub ras: RasParams,
    pub amg: AmgParams,
    pub cpr_decouple: bool,
}

/// Solve callback signature of a user-supplied preconditioner.
pub type UserSolveFn = dyn Fn(&RankCtx, &DistVector, &mut DistVector) -> Result<()> + Send + Sync;

/// Preconditioner from a user-supplied solve callback.
pub struct UserPc {
    solve: Box<UserSolveFn>,
}

impl UserPc {
    pub fn new(
        solve: impl Fn(&RankCtx, &DistVector, &mut DistVector) -> Result<()> + Send + Sync + 'static,
    ) -> Self {
        UserPc {
            solve: Box::new(solve),
        }
    }
}

impl Precond for UserPc {
    fn apply(&self, ctx: &RankCtx, r: &DistVector, z: &mut DistVector) -> Result<()> {
        (self.solve)(ctx, r, z)
    }
}

/// Exact reference solver: gathers the whole matrix once and solves it
/// densely on every rank.  Meant for small systems and stage-algebra
/// studies, not production preconditioning.
pub struct DenseSolvePc {
    lu: DenseLu,
    map: Arc<IndexMap>,
}

impl DenseSolvePc {
    pub fn setup(ctx: &RankCtx, a: &DistMatrix) -> Result<Self> {
        let n = a.num_global_rows();
        let csr = a.local_csr()?;
        let col_map = a.col_map()?;
        let row_lo = a.row_map().offsets()[a.row_map().rank()];
        let mut triplets = Vec::with_capacity(csr.num_nonzeros());
        for l in 0..csr.num_rows {
            let (cols, vals) = csr.row(l);
            for (&c, &v) in cols.iter().zip(vals) {
                triplets.push((row_lo + l, col_map.global_of_local(c), v));
            }
        }
        let gathered = ctx.all_gather(triplets)?;
        let mut dense = vec![0.0; n * n];
        for part in gathered {
            for (r, c, v) in part {
                dense[r * n + c] += v;
            }
        }
        Ok(DenseSolvePc {
            lu: DenseLu::factor(n, dense)?,
            map: Arc::new(IndexMap::new(a.row_map().offsets_arc(), a.row_map().rank())),
        })
    }
}

impl Precond for DenseSolvePc {
    fn apply(&self, ctx: &RankCtx, r: &DistVector, z: &mut DistVector) -> Result<()> {
        let gathered = ctx.all_gather(r.owned().to_vec())?;
        let full: Vec<f64> = gathered.into_iter().flatten().collect();
        let sol = self.lu.solve(&full);
        let lo = self.map.offsets()[self.map.rank()];
        z.owned_mut().copy_from_slice(&sol[lo..lo + self.map.nlocal()]);
        Ok(())
    }
}

/// Build a preconditioner handle; collective for every kind that needs
/// setup communication.
///
/// `layout` defaults to one unknown per cell for the CPR family; `user`
/// supplies the callback behind [`PcKind::User`].
pub fn pc_dispatch(
    ctx: &RankCtx,
    kind: PcKind,
    a: &Arc<DistMatrix>,
    layout: Option<BlockLayout>,
    config: &PcConfig,
    user: Option<Box<dyn Precond>>,
) -> Result<Box<dyn Precond>> {
    match kind {
        PcKind::None => Ok(Box::new(IdentityPc)),
        PcKind::Ras => Ok(Box::new(ras_setup(ctx, a, config.ras)?)),
        PcKind::Amg => Ok(Box::new(AmgPc::setup(ctx, (**a).clone(), config.amg)?)),
        PcKind::User => {
            user.ok_or_else(|| Error::InvalidKind("user kind needs a callback".into()))
        }
        PcKind::CprFp | PcKind::CprPf | PcKind::CprFpf | PcKind::CprFfpf => {
            let variant = match kind {
                PcKind::CprFp => CprVariant::Fp,
                PcKind::CprPf => CprVariant::Pf,
                PcKind::CprFpf => CprVariant::Fpf,
                _ => CprVariant::Ffpf,
            };
            let layout = layout.unwrap_or_else(BlockLayout::scalar);
            let params = CprParams {
                ras: config.ras,
                amg: config.amg,
                decouple: config.cpr_decouple,
            };
            Ok(Box::new(cpr_setup(ctx, Arc::clone(a), layout, variant, params)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::krylov::{gmres, SolverConfig};
    use crate::linalg::axpby;
    use crate::runtime::spawn_ranks;

    fn small_system(ctx: &RankCtx) -> Result<(Arc<IndexMap>, Arc<DistMatrix>, DistVector)> {
        let n = 12;
        let map = Arc::new(IndexMap::block(n, ctx.nprocs(), ctx.rank()));
        let mut a = DistMatrix::new(Arc::clone(&map));
        let lo = map.offsets()[ctx.rank()];
        for l in 0..map.nlocal() {
            let g = lo + l;
            a.add(g, g, 3.0)?;
            if g > 0 {
                a.add(g, g - 1, -1.0)?;
            }
            if g + 1 < n {
                a.add(g, g + 1, -1.0)?;
            }
        }
        a.assemble(ctx)?;
        let b = DistVector::from_owned(
            Arc::clone(&map),
            (0..map.nlocal()).map(|l| ((lo + l) as f64).cos()).collect(),
        )?;
        Ok((map, Arc::new(a), b))
    }

    #[test]
    fn none_is_identity() {
        spawn_ranks(1, |ctx| {
            let (map, a, b) = small_system(ctx)?;
            let pc = pc_dispatch(ctx, PcKind::None, &a, None, &PcConfig::default(), None)?;
            let mut z = DistVector::zeros(Arc::clone(&map));
            pc.apply(ctx, &b, &mut z)?;
            assert_eq!(z.owned(), b.owned());
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn unknown_kind_name_is_invalid() {
        assert!(matches!(
            PcKind::from_name("ilu-magic"),
            Err(Error::InvalidKind(_))
        ));
        assert_eq!(PcKind::from_name("cpr-fpf").unwrap(), PcKind::CprFpf);
    }

    #[test]
    fn ras_handle_matches_direct_apply() {
        spawn_ranks(2, |ctx| {
            let (map, a, b) = small_system(ctx)?;
            let cfg = PcConfig::default();
            let pc = pc_dispatch(ctx, PcKind::Ras, &a, None, &cfg, None)?;
            let direct = ras_setup(ctx, &a, cfg.ras)?;
            let mut z1 = DistVector::zeros(Arc::clone(&map));
            let mut z2 = DistVector::zeros(Arc::clone(&map));
            pc.apply(ctx, &b, &mut z1)?;
            ras_apply(ctx, &direct, &b, &mut z2)?;
            assert_eq!(z1.owned(), z2.owned());
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn user_identity_reproduces_unpreconditioned_history() {
        spawn_ranks(1, |ctx| {
            let (map, a, b) = small_system(ctx)?;
            let x0 = DistVector::zeros(Arc::clone(&map));
            let cfg = SolverConfig {
                rtol: 1e-10,
                ..Default::default()
            };
            let user = UserPc::new(|_, r, z| axpby(1.0, r, 0.0, z));
            let pc = pc_dispatch(
                ctx,
                PcKind::User,
                &a,
                None,
                &PcConfig::default(),
                Some(Box::new(user)),
            )?;
            let (_, rep_user) = gmres(ctx, &a, &b, &x0, &cfg, pc.as_ref())?;
            let (_, rep_id) = gmres(ctx, &a, &b, &x0, &cfg, &IdentityPc)?;
            assert_eq!(rep_user.iterations, rep_id.iterations);
            assert_eq!(rep_user.history, rep_id.history);
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn user_kind_without_callback_is_invalid() {
        spawn_ranks(1, |ctx| {
            let (_, a, _) = small_system(ctx)?;
            assert!(matches!(
                pc_dispatch(ctx, PcKind::User, &a, None, &PcConfig::default(), None),
                Err(Error::InvalidKind(_))
            ));
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn dense_reference_solver_inverts() {
        spawn_ranks(2, |ctx| {
            let (map, a, b) = small_system(ctx)?;
            let pc = DenseSolvePc::setup(ctx, &a)?;
            let mut x = DistVector::zeros(Arc::clone(&map));
            pc.apply(ctx, &b, &mut x)?;
            let mut ax = DistVector::zeros(Arc::clone(&map));
            a.spmv(ctx, 1.0, &x, 0.0, &mut ax)?;
            for (got, want) in ax.owned().iter().zip(b.owned()) {
                assert!((got - want).abs() < 1e-12);
            }
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn ilu_preconditioned_gmres_converges_in_one_iteration() {
        // full-fill factorization on the whole system makes the
        // preconditioned operator the identity
        spawn_ranks(1, |ctx| {
            let (map, a, b) = small_system(ctx)?;
            let cfg = PcConfig {
                ras: RasParams {
                    iluk_level: 12,
                    ..Default::default()
                },
                ..Default::default()
            };
            let pc = pc_dispatch(ctx, PcKind::Ras, &a, None, &cfg, None)?;
            let x0 = DistVector::zeros(Arc::clone(&map));
            let scfg = SolverConfig {
                rtol: 1e-10,
                ..Default::default()
            };
            let (_, rep) = gmres(ctx, &a, &b, &x0, &scfg, pc.as_ref())?;
            assert!(rep.converged);
            assert!(rep.iterations <= 1, "{}", rep.iterations);
            Ok(())
        })
        .unwrap();
    }
}
