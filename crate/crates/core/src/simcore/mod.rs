//! Deterministic interleaving engine.
//!
//! A simulated thread is an `async` block that talks to shared memory only
//! through [`ThreadCtx`]. Each `await` on a context method yields exactly one
//! [`Action`]; the engine decides which thread's pending action runs next.
//! Futures are polled with a no-op waker and never see real concurrency.

mod action;
pub mod explore;
mod log;
mod machine;

pub use action::{Action, Outcome};
pub use explore::{enumerate_schedules, explore_states, ExploreStats};
pub use log::{EventLog, LogMode, LogRecord, LOG_HEADER};
pub use machine::{Machine, MachineConfig};

use std::cell::RefCell;
use std::collections::hash_map::DefaultHasher;
use std::future::Future;
use std::hash::{Hash, Hasher};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::pin::Pin;
use std::rc::Rc;
use std::task::{Context, Poll, Waker};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::history::{History, Op, OpResult};

pub type Program = Pin<Box<dyn Future<Output = ()>>>;
pub type ThreadFn = Box<dyn FnOnce(ThreadCtx) -> Program>;

/// Wrap an async closure as a thread body.
pub fn thread<F, Fut>(f: F) -> ThreadFn
where
    F: FnOnce(ThreadCtx) -> Fut + 'static,
    Fut: Future<Output = ()> + 'static,
{
    Box::new(move |ctx| Box::pin(f(ctx)))
}

pub(crate) fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn hash_of<T: Hash>(t: &T) -> u64 {
    let mut h = DefaultHasher::new();
    t.hash(&mut h);
    h.finish()
}

#[derive(Default)]
struct Slot {
    pending: Option<Action>,
    outcome: Option<Outcome>,
    digest: u64,
    ops_begun: u64,
    checkpoints: u64,
}

#[derive(Default)]
struct Shared {
    history: History,
    clock: u64,
    marker_digest: u64,
}

/// A simulated thread's handle on the machine.
pub struct ThreadCtx {
    tid: usize,
    slot: Rc<RefCell<Slot>>,
    shared: Rc<RefCell<Shared>>,
}

struct Exec<'a> {
    ctx: &'a ThreadCtx,
    action: Option<Action>,
}

impl Future for Exec<'_> {
    type Output = Outcome;

    fn poll(mut self: Pin<&mut Self>, _: &mut Context<'_>) -> Poll<Outcome> {
        match self.action.take() {
            Some(a) => {
                self.ctx.slot.borrow_mut().pending = Some(a);
                Poll::Pending
            }
            None => Poll::Ready(self.ctx.slot.borrow_mut().outcome.take().expect("outcome delivered")),
        }
    }
}

impl ThreadCtx {
    pub fn tid(&self) -> usize {
        self.tid
    }

    /// Perform one action and wait for its outcome.
    pub fn exec(&self, action: Action) -> impl Future<Output = Outcome> + '_ {
        Exec { ctx: self, action: Some(action) }
    }

    pub async fn load(&self, addr: u64) -> u64 {
        self.exec(Action::Load { addr }).await.value()
    }

    pub async fn store(&self, addr: u64, value: u64) {
        self.exec(Action::Store { addr, value }).await;
    }

    pub async fn cas(&self, addr: u64, expect: u64, new: u64) -> bool {
        self.exec(Action::Cas { addr, expect, new }).await.flag()
    }

    /// Conditional read; `None` when access has been revoked.
    pub async fn cread(&self, addr: u64) -> Option<u64> {
        match self.exec(Action::CRead { addr }).await {
            Outcome::Cond(v) => v,
            o => unreachable!("cread produced {o:?}"),
        }
    }

    pub async fn cwrite(&self, addr: u64, value: u64) -> bool {
        self.exec(Action::CWrite { addr, value }).await.flag()
    }

    pub async fn untag_one(&self, addr: u64) {
        self.exec(Action::UntagOne { addr }).await;
    }

    pub async fn untag_all(&self) {
        self.exec(Action::UntagAll).await;
    }

    pub async fn alloc(&self, words: usize) -> u64 {
        self.exec(Action::Alloc { words }).await.value()
    }

    pub async fn free(&self, addr: u64) {
        self.exec(Action::Free { addr }).await;
    }

    pub async fn snapshot(&self) {
        self.exec(Action::Snapshot).await;
    }

    pub fn begin_op(&self, op: Op) {
        self.slot.borrow_mut().ops_begun += 1;
        let mut sh = self.shared.borrow_mut();
        let step = sh.clock;
        sh.history.invoke(self.tid, op, step);
        sh.marker_digest = mix(sh.marker_digest, hash_of(&(self.tid, 0u8, op)));
    }

    pub fn end_op(&self, result: OpResult) {
        let mut sh = self.shared.borrow_mut();
        let step = sh.clock;
        sh.history.respond(self.tid, result, step);
        sh.marker_digest = mix(sh.marker_digest, hash_of(&(self.tid, 1u8, result)));
    }

    /// Declare that this thread's local state is fully determined by the
    /// number of operations begun so far and `tag`. State-cached exploration
    /// relies on this being true.
    pub fn checkpoint(&self, tag: u64) {
        let mut s = self.slot.borrow_mut();
        s.digest = mix(s.ops_begun, tag);
        s.checkpoints += 1;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThreadStatus {
    Runnable,
    Finished,
}

struct ThreadState {
    program: Option<Program>,
    slot: Rc<RefCell<Slot>>,
    core: usize,
    status: ThreadStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Segment {
    Steps { tid: usize, n: u64 },
    UntilDone { tid: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchedulePolicy {
    RoundRobin,
    Random {
        seed: u64,
    },
    /// Scripted segments, then round-robin once they run out.
    Explicit(Vec<Segment>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub policy: SchedulePolicy,
    pub max_steps: u64,
}

pub const DEFAULT_MAX_STEPS: u64 = 1_000_000;

impl Schedule {
    pub fn round_robin() -> Self {
        Schedule { policy: SchedulePolicy::RoundRobin, max_steps: DEFAULT_MAX_STEPS }
    }

    pub fn random(seed: u64) -> Self {
        Schedule { policy: SchedulePolicy::Random { seed }, max_steps: DEFAULT_MAX_STEPS }
    }

    pub fn explicit(segments: Vec<Segment>) -> Self {
        Schedule { policy: SchedulePolicy::Explicit(segments), max_steps: DEFAULT_MAX_STEPS }
    }

    pub fn with_max_steps(mut self, max_steps: u64) -> Self {
        self.max_steps = max_steps;
        self
    }
}

/// Picks the next thread among the runnable ones.
pub trait Chooser {
    fn choose(&mut self, runnable: &[usize]) -> usize;
}

struct RoundRobin {
    last: Option<usize>,
}

impl Chooser for RoundRobin {
    fn choose(&mut self, runnable: &[usize]) -> usize {
        let t = match self.last {
            Some(l) => runnable.iter().copied().find(|&t| t > l).unwrap_or(runnable[0]),
            None => runnable[0],
        };
        self.last = Some(t);
        t
    }
}

struct RandomChooser(ChaCha8Rng);

impl Chooser for RandomChooser {
    fn choose(&mut self, runnable: &[usize]) -> usize {
        runnable[self.0.gen_range(0..runnable.len())]
    }
}

struct Scripted {
    segments: Vec<Segment>,
    pos: usize,
    used: u64,
    fallback: RoundRobin,
}

impl Chooser for Scripted {
    fn choose(&mut self, runnable: &[usize]) -> usize {
        while let Some(seg) = self.segments.get(self.pos) {
            let (tid, limit) = match *seg {
                Segment::Steps { tid, n } => (tid, Some(n)),
                Segment::UntilDone { tid } => (tid, None),
            };
            if runnable.contains(&tid) && limit.is_none_or(|n| self.used < n) {
                self.used += 1;
                self.fallback.last = Some(tid);
                return tid;
            }
            self.pos += 1;
            self.used = 0;
        }
        self.fallback.choose(runnable)
    }
}

impl<F: FnMut(&[usize]) -> usize> Chooser for F {
    fn choose(&mut self, runnable: &[usize]) -> usize {
        self(runnable)
    }
}

pub fn chooser_for(policy: &SchedulePolicy) -> Box<dyn Chooser> {
    match policy {
        SchedulePolicy::RoundRobin => Box::new(RoundRobin { last: None }),
        SchedulePolicy::Random { seed } => Box::new(RandomChooser(ChaCha8Rng::seed_from_u64(*seed))),
        SchedulePolicy::Explicit(segs) => {
            Box::new(Scripted { segments: segs.clone(), pos: 0, used: 0, fallback: RoundRobin { last: None } })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Completed,
    BudgetExhausted,
    /// Stopped early at an oracle violation.
    Violation,
}

/// Threads bound to a machine, ready to be stepped.
pub struct Sim {
    machine: Machine,
    threads: Vec<ThreadState>,
    shared: Rc<RefCell<Shared>>,
    log: EventLog,
    log_mode: LogMode,
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic".to_string()
    }
}

impl Sim {
    /// Bind `programs` to `machine`; thread `i` runs on core `i % cores`.
    pub fn new(machine: Machine, programs: Vec<ThreadFn>, log_mode: LogMode) -> Result<Self> {
        if programs.is_empty() {
            return Err(SimError::Config("at least one thread is required".into()));
        }
        let shared = Rc::new(RefCell::new(Shared { clock: machine.step(), ..Shared::default() }));
        let cores = machine.cores();
        let mut sim = Sim { machine, threads: Vec::new(), shared, log: EventLog::default(), log_mode };
        for (tid, f) in programs.into_iter().enumerate() {
            let slot = Rc::new(RefCell::new(Slot::default()));
            let ctx = ThreadCtx { tid, slot: slot.clone(), shared: sim.shared.clone() };
            sim.threads.push(ThreadState {
                program: Some(f(ctx)),
                slot,
                core: tid % cores,
                status: ThreadStatus::Runnable,
            });
        }
        for tid in 0..sim.threads.len() {
            sim.poll(tid)?;
        }
        Ok(sim)
    }

    fn poll(&mut self, tid: usize) -> Result<()> {
        let t = &mut self.threads[tid];
        let Some(fut) = t.program.as_mut() else { return Ok(()) };
        let mut cx = Context::from_waker(Waker::noop());
        let r = catch_unwind(AssertUnwindSafe(|| fut.as_mut().poll(&mut cx)));
        match r {
            Ok(Poll::Ready(())) => {
                t.program = None;
                t.status = ThreadStatus::Finished;
                Ok(())
            }
            Ok(Poll::Pending) if t.slot.borrow().pending.is_some() => Ok(()),
            Ok(Poll::Pending) => Err(SimError::ThreadPanic {
                tid,
                step: self.machine.step(),
                message: "thread awaited something other than a machine action".into(),
            }),
            Err(p) => {
                t.program = None;
                t.status = ThreadStatus::Finished;
                Err(SimError::ThreadPanic { tid, step: self.machine.step(), message: panic_message(p) })
            }
        }
    }

    pub fn machine(&self) -> &Machine {
        &self.machine
    }

    pub fn machine_mut(&mut self) -> &mut Machine {
        &mut self.machine
    }

    pub fn into_machine(self) -> Machine {
        self.machine
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn take_log(&mut self) -> EventLog {
        std::mem::take(&mut self.log)
    }

    pub fn history(&self) -> std::cell::Ref<'_, History> {
        std::cell::Ref::map(self.shared.borrow(), |s| &s.history)
    }

    pub fn completed_ops(&self) -> u64 {
        self.shared.borrow().history.completed()
    }

    /// Total [`ThreadCtx::checkpoint`] calls. Structures checkpoint once
    /// per attempt, so this minus completed operations counts restarts.
    pub fn checkpoints(&self) -> u64 {
        self.threads.iter().map(|t| t.slot.borrow().checkpoints).sum()
    }

    pub fn thread_count(&self) -> usize {
        self.threads.len()
    }

    pub fn status(&self, tid: usize) -> ThreadStatus {
        self.threads[tid].status
    }

    pub fn runnable(&self) -> Vec<usize> {
        (0..self.threads.len()).filter(|&t| self.threads[t].status == ThreadStatus::Runnable).collect()
    }

    pub fn is_done(&self) -> bool {
        self.threads.iter().all(|t| t.status == ThreadStatus::Finished)
    }

    /// The action `tid` will perform when next scheduled.
    pub fn pending(&self, tid: usize) -> Option<Action> {
        self.threads[tid].slot.borrow().pending
    }

    /// Run one action of `tid`.
    pub fn step_thread(&mut self, tid: usize) -> Result<()> {
        let t = self.threads.get(tid).ok_or(SimError::NotRunnable(tid))?;
        if t.status != ThreadStatus::Runnable {
            return Err(SimError::NotRunnable(tid));
        }
        let core = t.core;
        let action = t.slot.borrow_mut().pending.take().ok_or(SimError::NotRunnable(tid))?;
        let step = self.machine.step();
        let outcome = self.machine.apply(tid, core, action)?;
        if self.log_mode == LogMode::Full {
            let msgs = self.machine.mem_mut().take_msgs().collect();
            self.log.records.push(LogRecord { step, tid, core, action, outcome, msgs });
        } else {
            self.machine.mem_mut().clear_msgs();
        }
        {
            let mut s = self.threads[tid].slot.borrow_mut();
            s.digest = mix(s.digest, hash_of(&outcome));
            s.outcome = Some(outcome);
        }
        self.shared.borrow_mut().clock = self.machine.step();
        self.poll(tid)
    }

    /// Run under `chooser` until every thread finishes or `max_steps` more
    /// actions have executed. `observe` runs after every action.
    pub fn run_with(
        &mut self,
        chooser: &mut dyn Chooser,
        max_steps: u64,
        mut observe: impl FnMut(&Sim) -> Result<()>,
    ) -> Result<RunStatus> {
        let mut runnable = Vec::with_capacity(self.threads.len());
        for _ in 0..max_steps {
            runnable.clear();
            runnable.extend((0..self.threads.len()).filter(|&t| self.threads[t].status == ThreadStatus::Runnable));
            if runnable.is_empty() {
                return Ok(RunStatus::Completed);
            }
            let tid = chooser.choose(&runnable);
            self.step_thread(tid)?;
            observe(self)?;
        }
        Ok(if self.is_done() { RunStatus::Completed } else { RunStatus::BudgetExhausted })
    }

    pub fn run(&mut self, schedule: &Schedule) -> Result<RunStatus> {
        let mut c = chooser_for(&schedule.policy);
        self.run_with(c.as_mut(), schedule.max_steps, |_| Ok(()))
    }

    /// Like [`Sim::run`], but stop at the first recorded violation. Errors
    /// raised by the violating action itself (a thread wandering into
    /// garbage, say) are superseded by the violation.
    pub fn run_checked(&mut self, schedule: &Schedule) -> Result<RunStatus> {
        let mut c = chooser_for(&schedule.policy);
        let mut runnable = Vec::with_capacity(self.threads.len());
        for _ in 0..schedule.max_steps {
            runnable.clear();
            runnable.extend((0..self.threads.len()).filter(|&t| self.threads[t].status == ThreadStatus::Runnable));
            if runnable.is_empty() {
                return Ok(RunStatus::Completed);
            }
            let tid = c.choose(&runnable);
            let r = self.step_thread(tid);
            if !self.machine.violations().is_empty() {
                return Ok(RunStatus::Violation);
            }
            r?;
        }
        Ok(if self.is_done() { RunStatus::Completed } else { RunStatus::BudgetExhausted })
    }

    /// Digest of everything that determines future behavior, assuming
    /// programs honor the [`ThreadCtx::checkpoint`] contract.
    pub fn state_digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.machine.digest(&mut h);
        for t in &self.threads {
            let s = t.slot.borrow();
            (t.status == ThreadStatus::Runnable, s.digest, s.pending, s.ops_begun).hash(&mut h);
        }
        self.shared.borrow().marker_digest.hash(&mut h);
        h.finish()
    }
}

pub struct RunReport {
    pub status: RunStatus,
    pub log: EventLog,
    pub history: History,
    pub machine: Machine,
}

impl RunReport {
    /// Turn an exhausted budget into an error.
    pub fn completed(self) -> Result<Self> {
        match self.status {
            RunStatus::Completed | RunStatus::Violation => Ok(self),
            RunStatus::BudgetExhausted => Err(SimError::StepBudgetExhausted(self.machine.step())),
        }
    }
}

/// Run `programs` on `machine` to completion under `schedule`.
pub fn run(machine: Machine, programs: Vec<ThreadFn>, schedule: &Schedule, log_mode: LogMode) -> Result<RunReport> {
    if schedule.max_steps == 0 {
        return Err(SimError::Config("max_steps must be positive".into()));
    }
    let mut sim = Sim::new(machine, programs, log_mode)?;
    let status = sim.run(schedule)?;
    let history = sim.history().clone();
    let log = sim.take_log();
    Ok(RunReport { status, log, history, machine: sim.into_machine() })
}

#[cfg(test)]
mod tests;
