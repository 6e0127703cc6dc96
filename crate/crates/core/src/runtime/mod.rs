//! In-process simulated-rank runtime.
//!
//! Stands in for MPI: [`spawn_ranks`] runs one closure per rank on its own
//! thread, wired together with per-pair FIFO message channels and a shared
//! collective board.  Collectives combine contributions in ascending rank
//! order, so results are bitwise reproducible across runs and independent
//! of how the host schedules the threads.
//!
//! A rank failure (error return or panic) poisons the group: ranks blocked
//! in a collective wake with [`Error::GroupPoisoned`] and the group reports
//! the failing rank.

mod comm;

pub use comm::{build_comm_plan, build_comm_plan_for_map, exchange, CommPlan, IndexMap};

use crate::error::{Error, Result};
use std::any::Any;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc::{Receiver, Sender};
use std::sync::{mpsc, Arc, Condvar, Mutex};

type Message = Box<dyn Any + Send>;

struct BarrierState {
    count: usize,
    generation: u64,
    poisoned: Option<usize>,
}

/// Barrier that can be poisoned by a failing rank, waking all waiters.
struct PoisonBarrier {
    state: Mutex<BarrierState>,
    cv: Condvar,
    n: usize,
}

impl PoisonBarrier {
    fn new(n: usize) -> Self {
        PoisonBarrier {
            state: Mutex::new(BarrierState {
                count: 0,
                generation: 0,
                poisoned: None,
            }),
            cv: Condvar::new(),
            n,
        }
    }

    fn wait(&self) -> Result<()> {
        let mut st = self.state.lock().unwrap();
        if let Some(r) = st.poisoned {
            return Err(Error::GroupPoisoned(r));
        }
        st.count += 1;
        if st.count == self.n {
            st.count = 0;
            st.generation = st.generation.wrapping_add(1);
            self.cv.notify_all();
            return Ok(());
        }
        let gen = st.generation;
        loop {
            st = self.cv.wait(st).unwrap();
            if let Some(r) = st.poisoned {
                return Err(Error::GroupPoisoned(r));
            }
            if st.generation != gen {
                return Ok(());
            }
        }
    }

    fn poison(&self, rank: usize) {
        let mut st = self.state.lock().unwrap();
        if st.poisoned.is_none() {
            st.poisoned = Some(rank);
        }
        self.cv.notify_all();
    }
}

struct Board {
    barrier: PoisonBarrier,
    slots: Vec<Mutex<Option<Message>>>,
}

impl Board {
    fn new(n: usize) -> Self {
        Board {
            barrier: PoisonBarrier::new(n),
            slots: (0..n).map(|_| Mutex::new(None)).collect(),
        }
    }
}

/// Per-rank execution context: rank identity, point-to-point channels and
/// collective operations.  Must not be shared between threads.
pub struct RankCtx {
    rank: usize,
    nprocs: usize,
    senders: Vec<Sender<Message>>,
    receivers: Vec<Receiver<Message>>,
    board: Arc<Board>,
}

impl RankCtx {
    /// Standalone single-rank context; all collectives are identities.
    pub fn single() -> Self {
        let (tx, rx) = mpsc::channel();
        RankCtx {
            rank: 0,
            nprocs: 1,
            senders: vec![tx],
            receivers: vec![rx],
            board: Arc::new(Board::new(1)),
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn nprocs(&self) -> usize {
        self.nprocs
    }

    /// Send a message to `to`.  Channels are FIFO per ordered pair.
    pub fn send<T: Any + Send>(&self, to: usize, value: T) -> Result<()> {
        if to >= self.nprocs {
            return Err(Error::InvalidArgument(format!("send to rank {to}")));
        }
        self.senders[to]
            .send(Box::new(value))
            .map_err(|_| Error::GroupPoisoned(to))
    }

    /// Receive the next message from `from`, which must have the expected type.
    pub fn recv<T: Any>(&self, from: usize) -> Result<T> {
        if from >= self.nprocs {
            return Err(Error::InvalidArgument(format!("recv from rank {from}")));
        }
        let msg = self.receivers[from]
            .recv()
            .map_err(|_| Error::GroupPoisoned(from))?;
        msg.downcast::<T>().map(|b| *b).map_err(|_| {
            Error::CollectiveMismatch(format!(
                "rank {} received a message of unexpected type from {from}",
                self.rank
            ))
        })
    }

    pub fn barrier(&self) -> Result<()> {
        self.board.barrier.wait()
    }

    fn deposit(&self, value: Message) {
        *self.board.slots[self.rank].lock().unwrap() = Some(value);
    }

    fn read_slot<T: Any + Clone>(&self, rank: usize) -> Result<T> {
        let slot = self.board.slots[rank].lock().unwrap();
        slot.as_ref()
            .and_then(|m| m.downcast_ref::<T>())
            .cloned()
            .ok_or_else(|| {
                Error::CollectiveMismatch(format!(
                    "rank {rank} deposited nothing or a value of unexpected type"
                ))
            })
    }

    /// Sum of per-rank contributions, combined in ascending rank order.
    pub fn allreduce_sum(&self, x: f64) -> Result<f64> {
        if self.nprocs == 1 {
            return Ok(x);
        }
        self.deposit(Box::new(x));
        self.barrier()?;
        let mut sum = 0.0;
        for r in 0..self.nprocs {
            sum += self.read_slot::<f64>(r)?;
        }
        self.barrier()?;
        Ok(sum)
    }

    /// Elementwise sum of equally sized per-rank vectors, ascending rank order.
    pub fn allreduce_sum_vec(&self, x: Vec<f64>) -> Result<Vec<f64>> {
        if self.nprocs == 1 {
            return Ok(x);
        }
        let len = x.len();
        self.deposit(Box::new(x));
        self.barrier()?;
        let mut sum = vec![0.0; len];
        for r in 0..self.nprocs {
            let v = self.read_slot::<Vec<f64>>(r)?;
            if v.len() != len {
                return Err(Error::CollectiveMismatch(format!(
                    "allreduce_sum_vec length mismatch on rank {r}"
                )));
            }
            for (s, a) in sum.iter_mut().zip(&v) {
                *s += a;
            }
        }
        self.barrier()?;
        Ok(sum)
    }

    pub fn allreduce_sum_usize(&self, x: usize) -> Result<usize> {
        if self.nprocs == 1 {
            return Ok(x);
        }
        self.deposit(Box::new(x));
        self.barrier()?;
        let mut sum = 0usize;
        for r in 0..self.nprocs {
            sum += self.read_slot::<usize>(r)?;
        }
        self.barrier()?;
        Ok(sum)
    }

    pub fn allreduce_max_usize(&self, x: usize) -> Result<usize> {
        if self.nprocs == 1 {
            return Ok(x);
        }
        self.deposit(Box::new(x));
        self.barrier()?;
        let mut m = 0usize;
        for r in 0..self.nprocs {
            m = m.max(self.read_slot::<usize>(r)?);
        }
        self.barrier()?;
        Ok(m)
    }

    /// Broadcast `value` from `root`.  Non-root ranks pass `None`.
    pub fn broadcast<T: Any + Send + Clone>(&self, root: usize, value: Option<T>) -> Result<T> {
        if root >= self.nprocs {
            return Err(Error::InvalidArgument(format!("broadcast root {root}")));
        }
        if self.nprocs == 1 {
            return value.ok_or_else(|| {
                Error::CollectiveMismatch("broadcast root supplied no value".into())
            });
        }
        if self.rank == root {
            let v = value.ok_or_else(|| {
                Error::CollectiveMismatch("broadcast root supplied no value".into())
            })?;
            self.deposit(Box::new(v));
        }
        self.barrier()?;
        let out = self.read_slot::<T>(root)?;
        self.barrier()?;
        Ok(out)
    }

    /// Gather one value per rank on `root` (rank order); `None` elsewhere.
    pub fn gather<T: Any + Send + Clone>(&self, root: usize, value: T) -> Result<Option<Vec<T>>> {
        if self.nprocs == 1 {
            return Ok(Some(vec![value]));
        }
        self.deposit(Box::new(value));
        self.barrier()?;
        let out = if self.rank == root {
            let mut all = Vec::with_capacity(self.nprocs);
            for r in 0..self.nprocs {
                all.push(self.read_slot::<T>(r)?);
            }
            Some(all)
        } else {
            None
        };
        self.barrier()?;
        Ok(out)
    }

    /// Gather one value per rank on every rank, in rank order.
    pub fn all_gather<T: Any + Send + Clone>(&self, value: T) -> Result<Vec<T>> {
        if self.nprocs == 1 {
            return Ok(vec![value]);
        }
        self.deposit(Box::new(value));
        self.barrier()?;
        let mut all = Vec::with_capacity(self.nprocs);
        for r in 0..self.nprocs {
            all.push(self.read_slot::<T>(r)?);
        }
        self.barrier()?;
        Ok(all)
    }

    /// Personalized all-to-all: element `p` of `msgs` goes to rank `p`; the
    /// result holds one message from every rank.  Every rank must call this
    /// with exactly `nprocs` messages.
    pub fn all_to_all<T: Any + Send>(&self, msgs: Vec<T>) -> Result<Vec<T>> {
        if msgs.len() != self.nprocs {
            return Err(Error::CollectiveMismatch(format!(
                "all_to_all expects {} messages, got {}",
                self.nprocs,
                msgs.len()
            )));
        }
        let mut mine: Option<T> = None;
        for (to, msg) in msgs.into_iter().enumerate() {
            if to == self.rank {
                mine = Some(msg);
            } else {
                self.send(to, msg)?;
            }
        }
        let mut out = Vec::with_capacity(self.nprocs);
        for from in 0..self.nprocs {
            if from == self.rank {
                out.push(mine.take().expect("self message present"));
            } else {
                out.push(self.recv::<T>(from)?);
            }
        }
        Ok(out)
    }
}

fn panic_message(payload: Box<dyn Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".to_string()
    }
}

/// Run `program` once per rank with message-passing connectivity and
/// collect the per-rank results in rank order.  Any rank failure aborts
/// the group with a diagnostic naming the lowest failing rank.
pub fn spawn_ranks<T, F>(np: usize, program: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut RankCtx) -> Result<T> + Sync,
{
    if np == 0 {
        return Err(Error::InvalidArgument("spawn_ranks with np = 0".into()));
    }
    if np == 1 {
        let mut ctx = RankCtx::single();
        return match program(&mut ctx) {
            Ok(v) => Ok(vec![v]),
            Err(e) => Err(Error::RankFailed {
                rank: 0,
                message: e.to_string(),
            }),
        };
    }

    let board = Arc::new(Board::new(np));
    // full channel matrix: txs[from][to] / rxs[to][from]
    let mut rxs: Vec<Vec<Option<Receiver<Message>>>> = (0..np)
        .map(|_| (0..np).map(|_| None).collect())
        .collect();
    let mut txs: Vec<Vec<Option<Sender<Message>>>> = (0..np)
        .map(|_| (0..np).map(|_| None).collect())
        .collect();
    for from in 0..np {
        for to in 0..np {
            let (tx, rx) = mpsc::channel();
            txs[from][to] = Some(tx);
            rxs[to][from] = Some(rx);
        }
    }

    let mut ctxs: Vec<RankCtx> = Vec::with_capacity(np);
    for (rank, (tx_row, rx_row)) in txs.into_iter().zip(rxs).enumerate() {
        ctxs.push(RankCtx {
            rank,
            nprocs: np,
            senders: tx_row.into_iter().map(|t| t.unwrap()).collect(),
            receivers: rx_row.into_iter().map(|r| r.unwrap()).collect(),
            board: Arc::clone(&board),
        });
    }

    let program = &program;
    let mut outcomes: Vec<std::result::Result<T, (usize, Error)>> = Vec::with_capacity(np);
    std::thread::scope(|s| {
        let handles: Vec<_> = ctxs
            .into_iter()
            .map(|mut ctx| {
                let board = Arc::clone(&board);
                s.spawn(move || {
                    let rank = ctx.rank;
                    match catch_unwind(AssertUnwindSafe(|| program(&mut ctx))) {
                        Ok(Ok(v)) => Ok(v),
                        Ok(Err(e)) => {
                            board.barrier.poison(rank);
                            Err((rank, e))
                        }
                        Err(payload) => {
                            board.barrier.poison(rank);
                            Err((rank, Error::InvalidArgument(panic_message(payload))))
                        }
                    }
                })
            })
            .collect();
        for h in handles {
            outcomes.push(h.join().expect("rank threads do not panic"));
        }
    });

    // report the lowest-ranked root cause; group-poisoned errors are
    // follow-ups from ranks woken out of a collective
    let mut results = Vec::with_capacity(np);
    let mut root_cause: Option<(usize, Error)> = None;
    let mut fallback: Option<(usize, Error)> = None;
    for outcome in outcomes {
        match outcome {
            Ok(v) => results.push(v),
            Err((rank, err)) => {
                let follow_up = matches!(err, Error::GroupPoisoned(_));
                if follow_up {
                    if fallback.is_none() {
                        fallback = Some((rank, err));
                    }
                } else if root_cause.is_none() {
                    root_cause = Some((rank, err));
                }
            }
        }
    }
    match root_cause.or(fallback) {
        Some((rank, err)) => Err(Error::RankFailed {
            rank,
            message: err.to_string(),
        }),
        None => Ok(results),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_rank_returns_rank() {
        let out = spawn_ranks(1, |ctx| Ok(ctx.rank())).unwrap();
        assert_eq!(out, vec![0]);
    }

    #[test]
    fn four_ranks_return_ranks_in_order() {
        let out = spawn_ranks(4, |ctx| Ok(ctx.rank())).unwrap();
        assert_eq!(out, vec![0, 1, 2, 3]);
    }

    #[test]
    fn zero_ranks_is_invalid() {
        assert!(spawn_ranks(0, |_| Ok(())).is_err());
    }

    #[test]
    fn barrier_then_allreduce() {
        let out = spawn_ranks(4, |ctx| {
            ctx.barrier()?;
            ctx.allreduce_sum(ctx.rank() as f64)
        })
        .unwrap();
        assert_eq!(out, vec![6.0; 4]);
    }

    #[test]
    fn allreduce_identity_on_one_rank() {
        let out = spawn_ranks(1, |ctx| ctx.allreduce_sum(41.5)).unwrap();
        assert_eq!(out, vec![41.5]);
    }

    #[test]
    fn allreduce_ones() {
        let out = spawn_ranks(8, |ctx| ctx.allreduce_sum(1.0)).unwrap();
        assert_eq!(out, vec![8.0; 8]);
    }

    #[test]
    fn allreduce_is_bitwise_reproducible() {
        let run = || {
            spawn_ranks(6, |ctx| {
                let x = 0.1 * (ctx.rank() as f64 + 1.0) / 0.3;
                ctx.allreduce_sum(x)
            })
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn broadcast_from_root() {
        let out = spawn_ranks(4, |ctx| {
            let v = if ctx.rank() == 2 {
                Some(vec![1u64, 2, 3])
            } else {
                None
            };
            ctx.broadcast(2, v)
        })
        .unwrap();
        assert!(out.iter().all(|v| v == &vec![1u64, 2, 3]));
    }

    #[test]
    fn gather_on_root() {
        let out = spawn_ranks(3, |ctx| ctx.gather(0, ctx.rank() * 10)).unwrap();
        assert_eq!(out[0], Some(vec![0, 10, 20]));
        assert_eq!(out[1], None);
    }

    #[test]
    fn all_to_all_exchanges_messages() {
        let out = spawn_ranks(3, |ctx| {
            let msgs: Vec<Vec<usize>> = (0..3).map(|to| vec![ctx.rank() * 10 + to]).collect();
            ctx.all_to_all(msgs)
        })
        .unwrap();
        // rank 1 receives [from0: 0*10+1, from1: 11, from2: 21]
        assert_eq!(out[1], vec![vec![1], vec![11], vec![21]]);
    }

    #[test]
    fn point_to_point_fifo() {
        let out = spawn_ranks(2, |ctx| {
            if ctx.rank() == 0 {
                ctx.send(1, 1.0f64)?;
                ctx.send(1, 2.0f64)?;
                Ok(0.0)
            } else {
                let a: f64 = ctx.recv(0)?;
                let b: f64 = ctx.recv(0)?;
                Ok(10.0 * a + b)
            }
        })
        .unwrap();
        assert_eq!(out[1], 12.0);
    }

    #[test]
    fn failing_rank_is_named() {
        let err = spawn_ranks(4, |ctx| {
            if ctx.rank() == 2 {
                Err(Error::InvalidArgument("boom".into()))
            } else {
                Ok(())
            }
        })
        .unwrap_err();
        match err {
            Error::RankFailed { rank, message } => {
                assert_eq!(rank, 2);
                assert!(message.contains("boom"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn failure_wakes_ranks_blocked_in_collectives() {
        let err = spawn_ranks(3, |ctx| {
            if ctx.rank() == 0 {
                Err(Error::InvalidArgument("early exit".into()))
            } else {
                ctx.barrier()?;
                Ok(())
            }
        })
        .unwrap_err();
        match err {
            Error::RankFailed { rank, message } => {
                assert_eq!(rank, 0);
                assert!(message.contains("early exit"));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn panic_in_rank_is_reported() {
        let err = spawn_ranks(2, |ctx| {
            if ctx.rank() == 1 {
                panic!("rank one exploded");
            }
            ctx.barrier()?;
            Ok(())
        })
        .unwrap_err();
        match err {
            Error::RankFailed { rank, message } => {
                assert_eq!(rank, 1);
                assert!(message.contains("exploded"));
            }
            other => panic!("unexpected error {other}"),
        }
    }
}
