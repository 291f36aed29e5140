//! Concurrent sets and stacks that run on simulated threads.
//!
//! Each structure comes in two variants: one synchronized with conditional
//! access, and a baseline using plain loads and CAS that relies on an
//! external reclamation scheme.

pub mod extbst;
pub mod hashtable;
pub mod list;
pub mod stack;

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::history::{Op, OpResult};
use crate::simcore::{
    run, thread, LogMode, Machine, MachineConfig, Schedule, Sim, ThreadCtx, ThreadFn, DEFAULT_MAX_STEPS,
};
use crate::smr::{SmrConfig, SmrKind, SmrLayout, SmrThread};

pub use extbst::{CaBst, LockBst};
pub use hashtable::HashTable;
pub use list::{CaList, LazyList};
pub use stack::{CaStack, TreiberStack};

/// Largest key a set accepts; larger values are reserved for sentinels.
pub const MAX_KEY: u64 = u64::MAX - 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DsKind {
    List,
    Stack,
    Hashtable,
    Extbst,
}

impl DsKind {
    pub const ALL: [DsKind; 4] = [DsKind::List, DsKind::Stack, DsKind::Hashtable, DsKind::Extbst];

    pub fn name(self) -> &'static str {
        match self {
            DsKind::List => "list",
            DsKind::Stack => "stack",
            DsKind::Hashtable => "hashtable",
            DsKind::Extbst => "extbst",
        }
    }

    pub fn is_set(self) -> bool {
        self != DsKind::Stack
    }
}

impl fmt::Display for DsKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DsKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        DsKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| format!("unknown data structure '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Ca,
    Baseline,
}

impl Variant {
    /// Conditional-access structures reclaim by themselves; every other
    /// scheme runs the baseline.
    pub fn for_smr(kind: SmrKind) -> Self {
        if kind == SmrKind::Ca {
            Variant::Ca
        } else {
            Variant::Baseline
        }
    }
}

#[derive(Debug, Clone)]
pub enum Structure {
    CaList(CaList),
    LazyList(LazyList),
    CaStack(CaStack),
    Treiber(TreiberStack),
    CaHash(HashTable<CaList>),
    LazyHash(HashTable<LazyList>),
    CaBst(CaBst),
    LockBst(LockBst),
}

impl Structure {
    pub fn create(m: &mut Machine, kind: DsKind, variant: Variant) -> Result<Self> {
        use Variant::*;
        Ok(match (kind, variant) {
            (DsKind::List, Ca) => Structure::CaList(CaList::create(m)?),
            (DsKind::List, Baseline) => Structure::LazyList(LazyList::create(m)?),
            (DsKind::Stack, Ca) => Structure::CaStack(CaStack::create(m)?),
            (DsKind::Stack, Baseline) => Structure::Treiber(TreiberStack::create(m)?),
            (DsKind::Hashtable, Ca) => Structure::CaHash(HashTable::<CaList>::create(m)?),
            (DsKind::Hashtable, Baseline) => Structure::LazyHash(HashTable::<LazyList>::create(m)?),
            (DsKind::Extbst, Ca) => Structure::CaBst(CaBst::create(m)?),
            (DsKind::Extbst, Baseline) => Structure::LockBst(LockBst::create(m)?),
        })
    }

    pub fn kind(&self) -> DsKind {
        match self {
            Structure::CaList(_) | Structure::LazyList(_) => DsKind::List,
            Structure::CaStack(_) | Structure::Treiber(_) => DsKind::Stack,
            Structure::CaHash(_) | Structure::LazyHash(_) => DsKind::Hashtable,
            Structure::CaBst(_) | Structure::LockBst(_) => DsKind::Extbst,
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            Structure::CaList(_) | Structure::CaStack(_) | Structure::CaHash(_) | Structure::CaBst(_) => Variant::Ca,
            _ => Variant::Baseline,
        }
    }

    /// Run one operation. Panics if `op` does not fit the structure.
    pub async fn run_op(&self, ctx: &ThreadCtx, smr: &mut SmrThread, op: Op) -> OpResult {
        if let Some(k) = op.key() {
            assert!(k <= MAX_KEY, "key {k} is reserved");
        }
        use Structure::*;
        match (self, op) {
            (CaList(s), Op::Insert(k)) => OpResult::Bool(s.insert(ctx, smr, k).await),
            (CaList(s), Op::Delete(k)) => OpResult::Bool(s.delete(ctx, smr, k).await),
            (CaList(s), Op::Contains(k)) => OpResult::Bool(s.contains(ctx, k).await),
            (LazyList(s), Op::Insert(k)) => OpResult::Bool(s.insert(ctx, smr, k).await),
            (LazyList(s), Op::Delete(k)) => OpResult::Bool(s.delete(ctx, smr, k).await),
            (LazyList(s), Op::Contains(k)) => OpResult::Bool(s.contains(ctx, smr, k).await),
            (CaHash(h), Op::Insert(k)) => OpResult::Bool(h.bucket(k).insert(ctx, smr, k).await),
            (CaHash(h), Op::Delete(k)) => OpResult::Bool(h.bucket(k).delete(ctx, smr, k).await),
            (CaHash(h), Op::Contains(k)) => OpResult::Bool(h.bucket(k).contains(ctx, k).await),
            (LazyHash(h), Op::Insert(k)) => OpResult::Bool(h.bucket(k).insert(ctx, smr, k).await),
            (LazyHash(h), Op::Delete(k)) => OpResult::Bool(h.bucket(k).delete(ctx, smr, k).await),
            (LazyHash(h), Op::Contains(k)) => OpResult::Bool(h.bucket(k).contains(ctx, smr, k).await),
            (CaBst(s), Op::Insert(k)) => OpResult::Bool(s.insert(ctx, smr, k).await),
            (CaBst(s), Op::Delete(k)) => OpResult::Bool(s.delete(ctx, smr, k).await),
            (CaBst(s), Op::Contains(k)) => OpResult::Bool(s.contains(ctx, k).await),
            (LockBst(s), Op::Insert(k)) => OpResult::Bool(s.insert(ctx, smr, k).await),
            (LockBst(s), Op::Delete(k)) => OpResult::Bool(s.delete(ctx, smr, k).await),
            (LockBst(s), Op::Contains(k)) => OpResult::Bool(s.contains(ctx, smr, k).await),
            (CaStack(s), Op::Push(k)) => {
                s.push(ctx, smr, k).await;
                OpResult::Unit
            }
            (CaStack(s), Op::Pop) => OpResult::Key(s.pop(ctx, smr).await),
            (CaStack(s), Op::Peek) => OpResult::Key(s.peek(ctx).await),
            (Treiber(s), Op::Push(k)) => {
                s.push(ctx, smr, k).await;
                OpResult::Unit
            }
            (Treiber(s), Op::Pop) => OpResult::Key(s.pop(ctx, smr).await),
            (Treiber(s), Op::Peek) => OpResult::Key(s.peek(ctx, smr).await),
            (s, op) => panic!("{op:?} is not an operation of {}", s.kind()),
        }
    }

    /// Run one operation wrapped in history markers and reclamation hooks.
    pub async fn apply(&self, ctx: &ThreadCtx, smr: &mut SmrThread, op: Op) -> OpResult {
        ctx.begin_op(op);
        smr.begin_op(ctx).await;
        let r = self.run_op(ctx, smr, op).await;
        smr.end_op(ctx).await;
        ctx.end_op(r);
        r
    }

    /// A thread that performs `ops` in order, then goes offline.
    pub fn worker(&self, mut smr: SmrThread, ops: Vec<Op>) -> ThreadFn {
        let s = self.clone();
        thread(move |ctx| async move {
            for op in ops {
                s.apply(&ctx, &mut smr, op).await;
            }
            smr.offline(&ctx).await;
        })
    }

    /// Keys currently reachable: sorted for sets, top first for stacks.
    pub fn contents(&self, m: &Machine) -> Vec<u64> {
        match self {
            Structure::CaList(s) => s.keys(m),
            Structure::LazyList(s) => s.keys(m),
            Structure::CaStack(s) => s.contents(m),
            Structure::Treiber(s) => s.contents(m),
            Structure::CaHash(h) => h.keys(m),
            Structure::LazyHash(h) => h.keys(m),
            Structure::CaBst(s) => s.keys(m),
            Structure::LockBst(s) => s.keys(m),
        }
    }

    /// Node blocks reachable from the roots.
    pub fn reachable_nodes(&self, m: &Machine) -> usize {
        let n = self.contents(m).len();
        match self.kind() {
            // Each key is a leaf plus the internal node that was created with it.
            DsKind::Extbst => 2 * n,
            _ => n,
        }
    }

    /// Structural invariants at quiescence.
    pub fn check(&self, m: &Machine) -> std::result::Result<(), String> {
        match self {
            Structure::CaList(s) => s.check(m),
            Structure::LazyList(s) => s.check(m),
            Structure::CaHash(h) => h.check(m),
            Structure::LazyHash(h) => h.check(m),
            Structure::CaBst(s) => s.check(m),
            Structure::LockBst(s) => s.check(m),
            Structure::CaStack(_) | Structure::Treiber(_) => Ok(()),
        }
    }
}

/// A machine holding one structure and the reclamation scheme's shared
/// words, ready to have threads bound to it.
pub struct Setup {
    pub machine: Machine,
    pub structure: Structure,
    pub layout: Rc<SmrLayout>,
    pub smr: SmrConfig,
}

impl Setup {
    /// Build a machine for `threads` threads. Every thread gets its own
    /// core, since tags and caches are per core.
    pub fn new(mut cfg: MachineConfig, kind: DsKind, smr: SmrConfig, threads: usize) -> Result<Self> {
        if threads == 0 {
            return Err(SimError::Config("at least one thread is required".into()));
        }
        smr.validate()?;
        cfg.mem.cores = cfg.mem.cores.max(threads);
        let mut machine = Machine::new(cfg)?;
        let structure = Structure::create(&mut machine, kind, Variant::for_smr(smr.kind))?;
        let layout = Rc::new(SmrLayout::create(&mut machine, threads)?);
        Ok(Setup { machine, structure, layout, smr })
    }

    pub fn smr_thread(&self, tid: usize) -> SmrThread {
        SmrThread::new(self.smr, tid, self.layout.clone())
    }

    /// One worker per entry of `ops`.
    pub fn programs(&self, ops: Vec<Vec<Op>>) -> Vec<ThreadFn> {
        ops.into_iter().enumerate().map(|(tid, o)| self.structure.worker(self.smr_thread(tid), o)).collect()
    }

    /// Run `ops` on a single thread to completion, leaving the machine
    /// quiescent with counters untouched.
    pub fn prefill(self, ops: Vec<Op>) -> Result<Self> {
        self.prefill_within(ops, DEFAULT_MAX_STEPS)
    }

    /// [`Setup::prefill`] with a step budget.
    pub fn prefill_within(self, ops: Vec<Op>, max_steps: u64) -> Result<Self> {
        if ops.is_empty() {
            return Ok(self);
        }
        let Setup { machine, structure, layout, smr } = self;
        let prog = structure.worker(SmrThread::new(smr, 0, layout.clone()), ops);
        let rep =
            run(machine, vec![prog], &Schedule::round_robin().with_max_steps(max_steps), LogMode::Off)?.completed()?;
        Ok(Setup { machine: rep.machine, structure, layout, smr })
    }

    /// Bind workers to the machine.
    pub fn into_sim(self, ops: Vec<Vec<Op>>, log_mode: LogMode) -> Result<(Sim, Structure)> {
        let progs = self.programs(ops);
        Ok((Sim::new(self.machine, progs, log_mode)?, self.structure))
    }
}
