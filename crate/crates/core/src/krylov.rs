//! Restarted GMRES and BiCGSTAB over distributed matrices.
//!
//! Both solvers are right-preconditioned, so the residuals they monitor
//! and report are true residuals.  They stop as soon as the residual norm
//! drops below `max(rtol * ||r0||, btol * ||b||, atol)` or the total
//! iteration budget is spent.  All inner products are fixed-order
//! reductions, so solves are deterministic for a fixed `(A, b, x0, np)`.

use crate::error::{Error, Result};
use crate::linalg::{axpby, dot, norm2, DistMatrix, DistVector};
use crate::runtime::RankCtx;

/// A breakdown this small stops the recurrence instead of dividing by it.
const BREAKDOWN_EPS: f64 = 1e-300;

/// Preconditioner application `z ~ M^-1 r`; collective across ranks.
///
/// The assemble/solve/destroy triple of the preconditioner interface maps
/// onto construction, this method, and `Drop`.
pub trait Precond {
    fn apply(&self, ctx: &RankCtx, r: &DistVector, z: &mut DistVector) -> Result<()>;
}

/// Identity preconditioner (`z = r`).
pub struct IdentityPc;

impl Precond for IdentityPc {
    fn apply(&self, _ctx: &RankCtx, r: &DistVector, z: &mut DistVector) -> Result<()> {
        axpby(1.0, r, 0.0, z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KrylovMethod {
    Gmres,
    Bicgstab,
}

/// Solver parameters.  The defaults follow the platform conventions:
/// `rtol 1e-6`, `atol 1e-50`, `btol 0` (disabled), `maxit 1000`,
/// `restart 30`.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    pub rtol: f64,
    pub atol: f64,
    pub btol: f64,
    pub maxit: usize,
    pub restart: usize,
    pub method: KrylovMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rtol: 1e-6,
            atol: 1e-50,
            btol: 0.0,
            maxit: 1000,
            restart: 30,
            method: KrylovMethod::Gmres,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if self.rtol < 0.0 || self.atol < 0.0 || self.btol < 0.0 {
            return Err(Error::InvalidArgument("tolerances must be >= 0".into()));
        }
        if self.restart == 0 {
            return Err(Error::InvalidArgument("restart must be >= 1".into()));
        }
        Ok(())
    }

    fn threshold(&self, r0: f64, bnorm: f64) -> f64 {
        (self.rtol * r0).max(self.btol * bnorm).max(self.atol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Rtol,
    Atol,
    Btol,
    Maxit,
    Breakdown,
}

/// Solve outcome: iteration count, the recomputed true residual
/// `||b - A x||`, and the per-iteration residual-norm history.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub iterations: usize,
    pub final_residual: f64,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub history: Vec<f64>,
}

fn classify(res: f64, cfg: &SolverConfig, r0: f64, bnorm: f64) -> StopReason {
    if res <= cfg.rtol * r0 {
        StopReason::Rtol
    } else if res <= cfg.btol * bnorm {
        StopReason::Btol
    } else {
        StopReason::Atol
    }
}

/// True residual `b - A x` into a fresh vector.
fn residual(
    ctx: &RankCtx,
    a: &DistMatrix,
    b: &DistVector,
    x: &DistVector,
) -> Result<DistVector> {
    let mut r = b.clone();
    a.spmv(ctx, -1.0, x, 1.0, &mut r)?;
    Ok(r)
}

/// Dispatch on `config.method`.
pub fn solve(
    ctx: &RankCtx,
    a: &DistMatrix,
    b: &DistVector,
    x0: &DistVector,
    config: &SolverConfig,
    pc: &dyn Precond,
) -> Result<(DistVector, SolveReport)> {
    match config.method {
        KrylovMethod::Gmres => gmres(ctx, a, b, x0, config, pc),
        KrylovMethod::Bicgstab => bicgstab(ctx, a, b, x0, config, pc),
    }
}

/// Right-preconditioned restarted GMRES with classical Gram-Schmidt plus
/// one re-orthogonalization pass.
pub fn gmres(
    ctx: &RankCtx,
    a: &DistMatrix,
    b: &DistVector,
    x0: &DistVector,
    config: &SolverConfig,
    pc: &dyn Precond,
) -> Result<(DistVector, SolveReport)> {
    config.validate()?;
    let map = b.map().clone();
    let bnorm = norm2(ctx, b)?;
    let mut x = x0.clone();
    let mut r = residual(ctx, a, b, &x)?;
    let r0 = norm2(ctx, &r)?;
    let threshold = config.threshold(r0, bnorm);
    let mut history = Vec::new();
    let mut total = 0usize;
    let mut breakdown = false;
    let mut beta = r0;

    while beta > threshold && total < config.maxit && !breakdown {
        let m = config.restart;
        let mut basis: Vec<DistVector> = Vec::with_capacity(m + 1);
        let mut zs: Vec<DistVector> = Vec::with_capacity(m);
        let mut hcols: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut cs: Vec<f64> = Vec::with_capacity(m);
        let mut sn: Vec<f64> = Vec::with_capacity(m);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;

        let mut v0 = r.clone();
        scale(&mut v0, 1.0 / beta);
        basis.push(v0);

        let mut used = 0usize;
        for j in 0..m {
            if total >= config.maxit {
                break;
            }
            let mut z = DistVector::zeros(map.clone());
            pc.apply(ctx, &basis[j], &mut z)?;
            let mut w = DistVector::zeros(map.clone());
            a.spmv(ctx, 1.0, &z, 0.0, &mut w)?;
            zs.push(z);

            // classical Gram-Schmidt: batched projections, then one
            // re-orthogonalization pass
            let mut hcol = vec![0.0; j + 2];
            for pass in 0..2 {
                let partials: Vec<f64> = basis
                    .iter()
                    .map(|v| local_dot(&w, v))
                    .collect();
                let coeffs = ctx.allreduce_sum_vec(partials)?;
                for (i, &c) in coeffs.iter().enumerate() {
                    hcol[i] += c;
                    axpy_owned(-c, &basis[i], &mut w);
                }
                if pass == 0 && coeffs.iter().all(|c| c.abs() == 0.0) {
                    break;
                }
            }
            let wnorm = norm2(ctx, &w)?;
            hcol[j + 1] = wnorm;

            // apply the accumulated Givens rotations, then a new one
            for i in 0..j {
                let t = cs[i] * hcol[i] + sn[i] * hcol[i + 1];
                hcol[i + 1] = -sn[i] * hcol[i] + cs[i] * hcol[i + 1];
                hcol[i] = t;
            }
            let (c, s) = givens(hcol[j], hcol[j + 1]);
            cs.push(c);
            sn.push(s);
            hcol[j] = c * hcol[j] + s * hcol[j + 1];
            hcol[j + 1] = 0.0;
            g[j + 1] = -s * g[j];
            g[j] *= c;
            hcols.push(hcol);

            total += 1;
            used = j + 1;
            let estimate = g[j + 1].abs();
            history.push(estimate);

            if wnorm < BREAKDOWN_EPS {
                // exact Krylov subspace: update and let the outer loop
                // decide whether this was a lucky breakdown
                breakdown = true;
                break;
            }
            if estimate <= threshold {
                let mut v = w;
                scale(&mut v, 1.0 / wnorm);
                basis.push(v);
                break;
            }
            let mut v = w;
            scale(&mut v, 1.0 / wnorm);
            basis.push(v);
        }

        if used > 0 {
            // back-substitute H y = g and fold the correction into x
            let mut y = vec![0.0; used];
            for i in (0..used).rev() {
                let mut s = g[i];
                for k in i + 1..used {
                    s -= hcols[k][i] * y[k];
                }
                y[i] = s / hcols[i][i];
            }
            for (yi, z) in y.iter().zip(&zs) {
                axpy_owned(*yi, z, &mut x);
            }
        }
        r = residual(ctx, a, b, &x)?;
        beta = norm2(ctx, &r)?;
    }

    let converged = beta <= threshold;
    let stop_reason = if converged {
        classify(beta, config, r0, bnorm)
    } else if breakdown {
        StopReason::Breakdown
    } else {
        StopReason::Maxit
    };
    Ok((
        x,
        SolveReport {
            iterations: total,
            final_residual: beta,
            converged,
            stop_reason,
            history,
        },
    ))
}

/// Right-preconditioned BiCGSTAB.  Convergence at the half step counts as
/// a full iteration.
pub fn bicgstab(
    ctx: &RankCtx,
    a: &DistMatrix,
    b: &DistVector,
    x0: &DistVector,
    config: &SolverConfig,
    pc: &dyn Precond,
) -> Result<(DistVector, SolveReport)> {
    config.validate()?;
    let map = b.map().clone();
    let bnorm = norm2(ctx, b)?;
    let mut x = x0.clone();
    let mut r = residual(ctx, a, b, &x)?;
    let r0 = norm2(ctx, &r)?;
    let threshold = config.threshold(r0, bnorm);
    let mut history = Vec::new();

    let rhat = r.clone();
    let mut rho = 1.0;
    let mut alpha = 1.0;
    let mut omega = 1.0;
    let mut v = DistVector::zeros(map.clone());
    let mut p = DistVector::zeros(map.clone());
    let mut iterations = 0usize;
    let mut breakdown = false;

    if r0 > threshold {
        for it in 1..=config.maxit {
            let rho_new = dot(ctx, &rhat, &r)?;
            if rho_new.abs() < BREAKDOWN_EPS {
                breakdown = true;
                break;
            }
            if it == 1 {
                p = r.clone();
            } else {
                let beta = (rho_new / rho) * (alpha / omega);
                // p = r + beta * (p - omega * v)
                axpby(-omega, &v, 1.0, &mut p)?;
                axpby(1.0, &r, beta, &mut p)?;
            }
            rho = rho_new;

            let mut phat = DistVector::zeros(map.clone());
            pc.apply(ctx, &p, &mut phat)?;
            a.spmv(ctx, 1.0, &phat, 0.0, &mut v)?;
            let denom = dot(ctx, &rhat, &v)?;
            if denom.abs() < BREAKDOWN_EPS {
                breakdown = true;
                break;
            }
            alpha = rho / denom;

            // s = r - alpha v (reuse r)
            axpby(-alpha, &v, 1.0, &mut r)?;
            let snorm = norm2(ctx, &r)?;
            iterations = it;
            if snorm <= threshold {
                axpy_owned(alpha, &phat, &mut x);
                history.push(snorm);
                break;
            }

            let mut shat = DistVector::zeros(map.clone());
            pc.apply(ctx, &r, &mut shat)?;
            let mut t = DistVector::zeros(map.clone());
            a.spmv(ctx, 1.0, &shat, 0.0, &mut t)?;
            let tt = dot(ctx, &t, &t)?;
            if tt.abs() < BREAKDOWN_EPS {
                breakdown = true;
                break;
            }
            omega = dot(ctx, &t, &r)? / tt;

            axpy_owned(alpha, &phat, &mut x);
            axpy_owned(omega, &shat, &mut x);
            // r = s - omega t
            axpby(-omega, &t, 1.0, &mut r)?;
            let rnorm = norm2(ctx, &r)?;
            history.push(rnorm);
            if rnorm <= threshold {
                break;
            }
            if omega.abs() < BREAKDOWN_EPS {
                breakdown = true;
                break;
            }
        }
    }

    let rfinal = residual(ctx, a, b, &x)?;
    let final_residual = norm2(ctx, &rfinal)?;
    let converged = final_residual <= threshold;
    let stop_reason = if converged {
        classify(final_residual, config, r0, bnorm)
    } else if breakdown {
        StopReason::Breakdown
    } else {
        StopReason::Maxit
    };
    Ok((
        x,
        SolveReport {
            iterations,
            final_residual,
            converged,
            stop_reason,
            history,
        },
    ))
}

fn local_dot(x: &DistVector, y: &DistVector) -> f64 {
    x.owned()
        .iter()
        .zip(y.owned())
        .map(|(&a, &b)| a * b)
        .sum()
}

fn scale(x: &mut DistVector, s: f64) {
    for v in x.owned_mut() {
        *v *= s;
    }
}

fn axpy_owned(a: f64, x: &DistVector, y: &mut DistVector) {
    for (yi, &xi) in y.owned_mut().iter_mut().zip(x.owned()) {
        *yi += a * xi;
    }
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let r = a.hypot(b);
        (a / r, b / r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runtime::{spawn_ranks, IndexMap};
    use std::sync::Arc;

    fn diag_system(
        ctx: &RankCtx,
        diag: &[f64],
    ) -> Result<(DistMatrix, DistVector, DistVector)> {
        let n = diag.len();
        let map = Arc::new(IndexMap::block(n, ctx.nprocs(), ctx.rank()));
        let mut a = DistMatrix::new(Arc::clone(&map));
        let lo = map.offsets()[ctx.rank()];
        for l in 0..map.nlocal() {
            a.add(lo + l, lo + l, diag[lo + l])?;
        }
        a.assemble(ctx)?;
        let b = DistVector::from_owned(
            Arc::clone(&map),
            (0..map.nlocal()).map(|l| diag[lo + l]).collect(),
        )?;
        let x0 = DistVector::zeros(map);
        Ok((a, b, x0))
    }

    #[test]
    fn gmres_diagonal_converges_in_three_iterations() {
        spawn_ranks(1, |ctx| {
            let (a, b, x0) = diag_system(ctx, &[1.0, 2.0, 3.0])?;
            let cfg = SolverConfig {
                rtol: 1e-12,
                ..Default::default()
            };
            let (x, rep) = gmres(ctx, &a, &b, &x0, &cfg, &IdentityPc)?;
            assert!(rep.converged);
            assert!(rep.iterations <= 3, "{}", rep.iterations);
            for &v in x.owned() {
                assert!((v - 1.0).abs() < 1e-10);
            }
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn gmres_zero_rhs_zero_guess() {
        spawn_ranks(1, |ctx| {
            let (a, mut b, x0) = diag_system(ctx, &[1.0, 2.0])?;
            b.fill(0.0);
            let (x, rep) = gmres(ctx, &a, &b, &x0, &SolverConfig::default(), &IdentityPc)?;
            assert!(rep.converged);
            assert_eq!(rep.iterations, 0);
            assert_eq!(rep.final_residual, 0.0);
            assert!(x.owned().iter().all(|&v| v == 0.0));
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn gmres_restart_path() {
        // 1D Laplacian, restart shorter than the iteration count needed
        spawn_ranks(1, |ctx| {
            let n = 24;
            let map = Arc::new(IndexMap::block(n, 1, 0));
            let mut a = DistMatrix::new(Arc::clone(&map));
            for i in 0..n {
                a.add(i, i, 2.0)?;
                if i > 0 {
                    a.add(i, i - 1, -1.0)?;
                }
                if i + 1 < n {
                    a.add(i, i + 1, -1.0)?;
                }
            }
            a.assemble(ctx)?;
            let b = DistVector::from_owned(Arc::clone(&map), vec![1.0; n])?;
            let x0 = DistVector::zeros(Arc::clone(&map));
            let cfg = SolverConfig {
                rtol: 1e-10,
                restart: 5,
                ..Default::default()
            };
            let (x, rep) = gmres(ctx, &a, &b, &x0, &cfg, &IdentityPc)?;
            assert!(rep.converged, "{rep:?}");
            // verify against the true residual
            let mut r = b.clone();
            a.spmv(ctx, -1.0, &x, 1.0, &mut r)?;
            let res = norm2(ctx, &r)?;
            assert!((res - rep.final_residual).abs() <= 1e-12 * res.max(1.0));
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn gmres_inner_estimates_non_increasing() {
        spawn_ranks(1, |ctx| {
            let (a, b, x0) = diag_system(ctx, &[3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0])?;
            let cfg = SolverConfig {
                rtol: 1e-14,
                restart: 8,
                ..Default::default()
            };
            let (_, rep) = gmres(ctx, &a, &b, &x0, &cfg, &IdentityPc)?;
            for w in rep.history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn btol_stop_reason_is_classified() {
        spawn_ranks(1, |ctx| {
            let (a, b, x0) = diag_system(ctx, &[2.0, 5.0])?;
            let cfg = SolverConfig {
                rtol: 0.0,
                btol: 1.0,
                ..Default::default()
            };
            let (_, rep) = gmres(ctx, &a, &b, &x0, &cfg, &IdentityPc)?;
            assert!(rep.converged);
            assert_eq!(rep.iterations, 0);
            assert_eq!(rep.stop_reason, StopReason::Btol);
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn lucky_breakdown_still_converges() {
        // identity matrix: the Krylov space is exact after one step and the
        // Hessenberg column collapses
        spawn_ranks(1, |ctx| {
            let (a, b, x0) = diag_system(ctx, &[1.0, 1.0, 1.0])?;
            let cfg = SolverConfig {
                rtol: 1e-12,
                ..Default::default()
            };
            let (x, rep) = gmres(ctx, &a, &b, &x0, &cfg, &IdentityPc)?;
            assert!(rep.converged, "{rep:?}");
            assert!(rep.iterations <= 1);
            assert!(x.owned().iter().all(|&v| (v - 1.0).abs() < 1e-12));
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn bicgstab_two_by_two() {
        spawn_ranks(1, |ctx| {
            let map = Arc::new(IndexMap::block(2, 1, 0));
            let mut a = DistMatrix::new(Arc::clone(&map));
            a.add(0, 0, 2.0)?;
            a.add(0, 1, -1.0)?;
            a.add(1, 0, -1.0)?;
            a.add(1, 1, 2.0)?;
            a.assemble(ctx)?;
            let b = DistVector::from_owned(Arc::clone(&map), vec![1.0, 0.0])?;
            let x0 = DistVector::zeros(Arc::clone(&map));
            let cfg = SolverConfig {
                rtol: 1e-12,
                method: KrylovMethod::Bicgstab,
                ..Default::default()
            };
            let (x, rep) = bicgstab(ctx, &a, &b, &x0, &cfg, &IdentityPc)?;
            assert!(rep.converged);
            assert!((x.owned()[0] - 2.0 / 3.0).abs() < 1e-10);
            assert!((x.owned()[1] - 1.0 / 3.0).abs() < 1e-10);
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn bicgstab_identity_converges_immediately() {
        spawn_ranks(1, |ctx| {
            let (a, b, x0) = diag_system(ctx, &[1.0, 1.0, 1.0, 1.0])?;
            let (x, rep) = bicgstab(
                ctx,
                &a,
                &b,
                &x0,
                &SolverConfig {
                    method: KrylovMethod::Bicgstab,
                    ..Default::default()
                },
                &IdentityPc,
            )?;
            assert!(rep.converged);
            assert!(rep.iterations <= 1);
            assert!(x.owned().iter().all(|&v| (v - 1.0).abs() < 1e-12));
            Ok(())
        })
        .unwrap();
    }

    #[test]
    fn solvers_are_deterministic() {
        let run = |method: KrylovMethod| {
            spawn_ranks(2, move |ctx| {
                let n = 16;
                let map = Arc::new(IndexMap::block(n, ctx.nprocs(), ctx.rank()));
                let mut a = DistMatrix::new(Arc::clone(&map));
                let lo = map.offsets()[ctx.rank()];
                for l in 0..map.nlocal() {
                    let g = lo + l;
                    a.add(g, g, 4.0 + (g % 3) as f64)?;
                    if g > 0 {
                        a.add(g, g - 1, -1.0)?;
                    }
                    if g + 1 < n {
                        a.add(g, g + 1, -1.5)?;
                    }
                }
                a.assemble(ctx)?;
                let b = DistVector::from_owned(
                    Arc::clone(&map),
                    (0..map.nlocal()).map(|l| ((lo + l) as f64).sin()).collect(),
                )?;
                let x0 = DistVector::zeros(Arc::clone(&map));
                let cfg = SolverConfig {
                    rtol: 1e-10,
                    method,
                    ..Default::default()
                };
                let (x, rep) = solve(ctx, &a, &b, &x0, &cfg, &IdentityPc)?;
                Ok((
                    x.owned().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                    rep.history.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                ))
            })
            .unwrap()
        };
        for method in [KrylovMethod::Gmres, KrylovMethod::Bicgstab] {
            let a = run(method);
            let b = run(method);
            assert_eq!(a, b);
        }
    }
}
