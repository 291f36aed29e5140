//! Simulated memory hierarchy: private L1s, an inclusive shared L2 and a
//! directory running MSI.
//!
//! Every access is atomic. Data for a line lives in `backing` unless some
//! core holds it Modified, in which case that core's copy is authoritative
//! until it is written back.

mod config;

pub use config::{CostModel, MemConfig, TaggedLinePolicy};

use std::fmt;
use std::hash::{Hash, Hasher};

use serde::Serialize;
use smallvec::SmallVec;

pub type LineId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Msi {
    Modified,
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Endpoint {
    Core(u8),
    Dir,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Core(c) => write!(f, "c{c}"),
            Endpoint::Dir => f.write_str("dir"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum MsgKind {
    GetS,
    GetM,
    Upgrade,
    Inv,
    InvAck,
    Downgrade,
    PutS,
    PutM,
    BackInv,
}

impl MsgKind {
    pub fn name(self) -> &'static str {
        match self {
            MsgKind::GetS => "GetS",
            MsgKind::GetM => "GetM",
            MsgKind::Upgrade => "Upgrade",
            MsgKind::Inv => "Inv",
            MsgKind::InvAck => "InvAck",
            MsgKind::Downgrade => "Downgrade",
            MsgKind::PutS => "PutS",
            MsgKind::PutM => "PutM",
            MsgKind::BackInv => "BackInv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Msg {
    pub kind: MsgKind,
    pub from: Endpoint,
    pub to: Endpoint,
    pub line: LineId,
}

impl fmt::Display for Msg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}>{}:{:#x}", self.kind.name(), self.from, self.to, self.line)
    }
}

/// Notifications for the conditional-access layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemEvent {
    /// A remote write removed `core`'s tagged copy of `line`.
    Invalidated { core: usize, line: LineId },
    /// Replacement removed `core`'s tagged copy of `line`.
    TaggedEvicted { core: usize, line: LineId },
}

/// A fill could not find an untagged victim while tagged lines are pinned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CapacityFailure;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CoreCounters {
    pub loads: u64,
    pub stores: u64,
    pub l1_hits: u64,
    pub l1_misses: u64,
    pub l2_hits: u64,
    pub mem_fetches: u64,
    pub upgrades: u64,
    pub downgrades: u64,
    pub inv_sent: u64,
    pub inv_received: u64,
    pub writebacks: u64,
    pub evictions: u64,
    pub tagged_evictions: u64,
    pub back_invalidations: u64,
    pub bypasses: u64,
    pub msgs: u64,
    pub cycles: u64,
}

impl CoreCounters {
    pub fn add(&mut self, o: &CoreCounters) {
        self.loads += o.loads;
        self.stores += o.stores;
        self.l1_hits += o.l1_hits;
        self.l1_misses += o.l1_misses;
        self.l2_hits += o.l2_hits;
        self.mem_fetches += o.mem_fetches;
        self.upgrades += o.upgrades;
        self.downgrades += o.downgrades;
        self.inv_sent += o.inv_sent;
        self.inv_received += o.inv_received;
        self.writebacks += o.writebacks;
        self.evictions += o.evictions;
        self.tagged_evictions += o.tagged_evictions;
        self.back_invalidations += o.back_invalidations;
        self.bypasses += o.bypasses;
        self.msgs += o.msgs;
        self.cycles += o.cycles;
    }
}

#[derive(Debug)]
struct Way {
    line: LineId,
    state: Msi,
    tagged: bool,
    data: Box<[u64]>,
}

type Set = SmallVec<[Way; 4]>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
struct DirEntry {
    owner: Option<u8>,
    sharers: u64,
    in_l2: bool,
}

pub struct MemSystem {
    cfg: MemConfig,
    shift: u32,
    words: usize,
    sets: u64,
    l1: Vec<Set>,
    l2: Vec<SmallVec<[LineId; 8]>>,
    dir: Vec<DirEntry>,
    backing: Vec<u64>,
    spare: Vec<Box<[u64]>>,
    msgs: Vec<Msg>,
    events: Vec<MemEvent>,
    counters: Vec<CoreCounters>,
}

impl MemSystem {
    pub fn new(cfg: MemConfig) -> crate::Result<Self> {
        cfg.validate()?;
        let sets = cfg.l1_sets();
        let l2_sets = if cfg.l2_back_invalidation { cfg.l2_sets() as usize } else { 0 };
        Ok(MemSystem {
            shift: cfg.line_shift(),
            words: cfg.words_per_line(),
            sets,
            l1: (0..cfg.cores * sets as usize).map(|_| Set::new()).collect(),
            l2: (0..l2_sets).map(|_| SmallVec::new()).collect(),
            dir: Vec::new(),
            backing: Vec::new(),
            spare: Vec::new(),
            msgs: Vec::new(),
            events: Vec::new(),
            counters: vec![CoreCounters::default(); cfg.cores],
            cfg,
        })
    }

    pub fn config(&self) -> &MemConfig {
        &self.cfg
    }

    pub fn line_of(&self, addr: u64) -> LineId {
        addr >> self.shift
    }

    pub fn set_of(&self, line: LineId) -> usize {
        (line & (self.sets - 1)) as usize
    }

    fn word_of(&self, addr: u64) -> usize {
        ((addr >> 3) as usize) & (self.words - 1)
    }

    fn slot(&self, core: usize, line: LineId) -> usize {
        core * self.sets as usize + self.set_of(line)
    }

    fn find(&self, core: usize, line: LineId) -> Option<usize> {
        self.l1[self.slot(core, line)].iter().position(|w| w.line == line)
    }

    fn ensure_line(&mut self, line: LineId) {
        let l = line as usize;
        if l >= self.dir.len() {
            self.dir.resize(l + 1, DirEntry::default());
            self.backing.resize((l + 1) * self.words, 0);
        }
    }

    fn send(&mut self, kind: MsgKind, from: Endpoint, to: Endpoint, line: LineId) {
        self.msgs.push(Msg { kind, from, to, line });
    }

    /// Messages emitted since the last call.
    pub fn take_msgs(&mut self) -> std::vec::Drain<'_, Msg> {
        self.msgs.drain(..)
    }

    pub fn pending_msgs(&self) -> &[Msg] {
        &self.msgs
    }

    pub fn clear_msgs(&mut self) {
        self.msgs.clear();
    }

    pub fn take_events(&mut self) -> std::vec::Drain<'_, MemEvent> {
        self.events.drain(..)
    }

    pub fn counters(&self, core: usize) -> &CoreCounters {
        &self.counters[core]
    }

    pub fn total_counters(&self) -> CoreCounters {
        let mut t = CoreCounters::default();
        for c in &self.counters {
            t.add(c);
        }
        t
    }

    pub fn reset_counters(&mut self) {
        self.counters.iter_mut().for_each(|c| *c = CoreCounters::default());
    }

    /// Charge `cycles` to `core` outside of a memory access.
    pub fn charge(&mut self, core: usize, cycles: u64) {
        self.counters[core].cycles += cycles;
    }

    fn touch(&mut self, slot: usize, i: usize) {
        if i != 0 {
            let w = self.l1[slot].remove(i);
            self.l1[slot].insert(0, w);
        }
    }

    fn new_data(&mut self) -> Box<[u64]> {
        self.spare.pop().unwrap_or_else(|| vec![0; self.words].into_boxed_slice())
    }

    /// Drop `core`'s copy at `slot[i]`, writing back Modified data.
    fn drop_way(&mut self, slot: usize, i: usize) -> Way {
        let w = self.l1[slot].remove(i);
        if w.state == Msi::Modified {
            let base = w.line as usize * self.words;
            self.backing[base..base + self.words].copy_from_slice(&w.data);
        }
        w
    }

    fn recycle(&mut self, w: Way) {
        self.spare.push(w.data);
    }

    /// Whether `core` has room in the set of `line` under the tagged-line policy.
    fn victim_index(&self, core: usize, line: LineId) -> Result<Option<usize>, CapacityFailure> {
        let set = &self.l1[self.slot(core, line)];
        if set.len() < self.cfg.l1_assoc {
            return Ok(None);
        }
        match self.cfg.tagged_lines {
            TaggedLinePolicy::Evict => Ok(Some(set.len() - 1)),
            TaggedLinePolicy::Pin => set.iter().rposition(|w| !w.tagged).map(Some).ok_or(CapacityFailure),
            TaggedLinePolicy::Unbounded => Ok(set.iter().rposition(|w| !w.tagged)),
        }
    }

    /// The line that a fill into `set` of `core` would replace, if any.
    pub fn victim(&self, core: usize, set: usize) -> Option<LineId> {
        let s = &self.l1[core * self.sets as usize + set];
        if s.len() < self.cfg.l1_assoc {
            return None;
        }
        let idx = match self.cfg.tagged_lines {
            TaggedLinePolicy::Evict => Some(s.len() - 1),
            _ => s.iter().rposition(|w| !w.tagged),
        };
        idx.map(|i| s[i].line)
    }

    /// Evict the replacement victim of `set` at `core`, returning its line.
    /// Returns `None` when the set is not full or every way is pinned.
    pub fn evict_victim(&mut self, core: usize, set: usize) -> Option<LineId> {
        let line = self.victim(core, set)?;
        let slot = core * self.sets as usize + set;
        let i = self.l1[slot].iter().position(|w| w.line == line)?;
        self.evict_at(core, slot, i);
        Some(line)
    }

    fn evict_at(&mut self, core: usize, slot: usize, i: usize) {
        let w = self.drop_way(slot, i);
        let e = &mut self.dir[w.line as usize];
        e.sharers &= !(1u64 << core);
        if e.owner == Some(core as u8) {
            e.owner = None;
        }
        let kind = if w.state == Msi::Modified { MsgKind::PutM } else { MsgKind::PutS };
        self.send(kind, Endpoint::Core(core as u8), Endpoint::Dir, w.line);
        let c = &mut self.counters[core];
        c.evictions += 1;
        if w.state == Msi::Modified {
            c.writebacks += 1;
        }
        if w.tagged {
            c.tagged_evictions += 1;
            self.events.push(MemEvent::TaggedEvicted { core, line: w.line });
        }
        self.recycle(w);
    }

    /// Make room for `line` at `core`. `Err` only under the pin policy.
    fn make_room(&mut self, core: usize, line: LineId) -> Result<(), CapacityFailure> {
        loop {
            match self.victim_index(core, line)? {
                None => return Ok(()),
                Some(i) => {
                    let slot = self.slot(core, line);
                    self.evict_at(core, slot, i);
                }
            }
        }
    }

    /// Bring `line` into L2, returning the fill cost.
    fn l2_fill(&mut self, line: LineId) -> u64 {
        let costs = self.cfg.costs;
        if !self.cfg.l2_back_invalidation {
            let e = &mut self.dir[line as usize];
            return if e.in_l2 {
                costs.l2_hit
            } else {
                e.in_l2 = true;
                costs.memory
            };
        }
        let set = (line & (self.l2.len() as u64 - 1)) as usize;
        if let Some(i) = self.l2[set].iter().position(|&l| l == line) {
            let l = self.l2[set].remove(i);
            self.l2[set].insert(0, l);
            return costs.l2_hit;
        }
        self.l2[set].insert(0, line);
        self.dir[line as usize].in_l2 = true;
        if self.l2[set].len() > self.cfg.l2_assoc {
            let victim = self.l2[set].pop().expect("non-empty l2 set");
            self.back_invalidate(victim);
        }
        costs.memory
    }

    fn back_invalidate(&mut self, line: LineId) {
        for core in 0..self.cfg.cores {
            if let Some(i) = self.find(core, line) {
                let slot = self.slot(core, line);
                let w = self.drop_way(slot, i);
                self.send(MsgKind::BackInv, Endpoint::Dir, Endpoint::Core(core as u8), line);
                let c = &mut self.counters[core];
                c.back_invalidations += 1;
                if w.tagged {
                    c.tagged_evictions += 1;
                    self.events.push(MemEvent::TaggedEvicted { core, line });
                }
                self.recycle(w);
            }
        }
        self.dir[line as usize] = DirEntry::default();
    }

    /// Downgrade a remote Modified owner of `line` to Shared. Returns the cost.
    fn recall_owner(&mut self, requester: usize, line: LineId) -> u64 {
        let Some(o) = self.dir[line as usize].owner else { return 0 };
        let o = o as usize;
        if o == requester {
            return 0;
        }
        let slot = self.slot(o, line);
        let i = self.find(o, line).expect("directory owner holds the line");
        let w = &mut self.l1[slot][i];
        w.state = Msi::Shared;
        let base = line as usize * self.words;
        self.backing[base..base + self.words].copy_from_slice(&self.l1[slot][i].data);
        self.dir[line as usize].owner = None;
        self.send(MsgKind::Downgrade, Endpoint::Dir, Endpoint::Core(o as u8), line);
        self.counters[o].downgrades += 1;
        self.counters[o].writebacks += 1;
        self.cfg.costs.invalidation
    }

    /// Invalidate every copy of `line` except `requester`'s. Returns the cost.
    fn invalidate_others(&mut self, requester: usize, line: LineId) -> u64 {
        let e = self.dir[line as usize];
        let others = e.sharers & !(1u64 << requester);
        if others == 0 {
            return 0;
        }
        for core in 0..self.cfg.cores {
            if others & (1u64 << core) == 0 {
                continue;
            }
            let slot = self.slot(core, line);
            let i = self.find(core, line).expect("directory sharer holds the line");
            let w = self.drop_way(slot, i);
            self.send(MsgKind::Inv, Endpoint::Dir, Endpoint::Core(core as u8), line);
            self.send(MsgKind::InvAck, Endpoint::Core(core as u8), Endpoint::Dir, line);
            self.counters[requester].inv_sent += 1;
            self.counters[core].inv_received += 1;
            if w.tagged {
                self.events.push(MemEvent::Invalidated { core, line });
            }
            self.recycle(w);
        }
        let e = &mut self.dir[line as usize];
        e.sharers &= 1u64 << requester;
        if e.owner.is_some_and(|o| o as usize != requester) {
            e.owner = None;
        }
        self.cfg.costs.invalidation
    }

    /// Install `line` at `core` in `state` with data from backing.
    fn install(&mut self, core: usize, line: LineId, state: Msi) {
        let mut data = self.new_data();
        let base = line as usize * self.words;
        data.copy_from_slice(&self.backing[base..base + self.words]);
        let slot = self.slot(core, line);
        self.l1[slot].insert(0, Way { line, state, tagged: false, data });
        let e = &mut self.dir[line as usize];
        e.sharers |= 1u64 << core;
        if state == Msi::Modified {
            e.owner = Some(core as u8);
        }
    }

    /// Ensure `core` holds `line` readable, leaving it at the MRU position.
    fn acquire_shared(&mut self, core: usize, line: LineId) -> Result<(), CapacityFailure> {
        self.ensure_line(line);
        let slot = self.slot(core, line);
        if let Some(i) = self.find(core, line) {
            self.touch(slot, i);
            self.counters[core].l1_hits += 1;
            self.counters[core].cycles += self.cfg.costs.l1_hit;
            return Ok(());
        }
        self.make_room(core, line)?;
        self.counters[core].l1_misses += 1;
        self.send(MsgKind::GetS, Endpoint::Core(core as u8), Endpoint::Dir, line);
        let mut cost = self.l2_fill(line);
        self.count_fill(core, cost);
        cost += self.recall_owner(core, line);
        self.install(core, line, Msi::Shared);
        self.counters[core].cycles += cost;
        Ok(())
    }

    fn count_fill(&mut self, core: usize, cost: u64) {
        if cost == self.cfg.costs.l2_hit {
            self.counters[core].l2_hits += 1;
        } else {
            self.counters[core].mem_fetches += 1;
        }
    }

    /// Ensure `core` holds `line` Modified.
    fn acquire_modified(&mut self, core: usize, line: LineId) -> Result<(), CapacityFailure> {
        self.ensure_line(line);
        let slot = self.slot(core, line);
        if let Some(i) = self.find(core, line) {
            self.touch(slot, i);
            self.counters[core].l1_hits += 1;
            let mut cost = self.cfg.costs.l1_hit;
            if self.l1[slot][0].state == Msi::Shared {
                self.send(MsgKind::Upgrade, Endpoint::Core(core as u8), Endpoint::Dir, line);
                self.counters[core].upgrades += 1;
                cost += self.invalidate_others(core, line);
                self.l1[slot][0].state = Msi::Modified;
                let e = &mut self.dir[line as usize];
                e.owner = Some(core as u8);
                e.sharers = 1u64 << core;
            }
            self.counters[core].cycles += cost;
            return Ok(());
        }
        self.make_room(core, line)?;
        self.counters[core].l1_misses += 1;
        self.send(MsgKind::GetM, Endpoint::Core(core as u8), Endpoint::Dir, line);
        let mut cost = self.l2_fill(line);
        self.count_fill(core, cost);
        cost += self.invalidate_others(core, line);
        self.install(core, line, Msi::Modified);
        self.counters[core].cycles += cost;
        Ok(())
    }

    fn read_front(&self, core: usize, line: LineId, addr: u64) -> u64 {
        self.l1[self.slot(core, line)][0].data[self.word_of(addr)]
    }

    /// Uncached read used when the pin policy leaves no room.
    fn bypass_load(&mut self, core: usize, line: LineId, addr: u64) -> u64 {
        self.counters[core].bypasses += 1;
        self.send(MsgKind::GetS, Endpoint::Core(core as u8), Endpoint::Dir, line);
        let mut cost = self.l2_fill(line);
        cost += self.recall_owner(core, line);
        self.counters[core].cycles += cost;
        self.backing[(addr >> 3) as usize]
    }

    fn bypass_store(&mut self, core: usize, line: LineId, addr: u64, v: u64) {
        self.counters[core].bypasses += 1;
        self.send(MsgKind::GetM, Endpoint::Core(core as u8), Endpoint::Dir, line);
        let mut cost = self.l2_fill(line);
        cost += self.invalidate_others(core, line);
        self.counters[core].cycles += cost;
        self.backing[(addr >> 3) as usize] = v;
    }

    pub fn load(&mut self, core: usize, addr: u64) -> u64 {
        self.counters[core].loads += 1;
        let line = self.line_of(addr);
        let v = match self.acquire_shared(core, line) {
            Ok(()) => self.read_front(core, line, addr),
            Err(CapacityFailure) => self.bypass_load(core, line, addr),
        };
        self.finish();
        v
    }

    pub fn store(&mut self, core: usize, addr: u64, v: u64) {
        self.counters[core].stores += 1;
        let line = self.line_of(addr);
        match self.acquire_modified(core, line) {
            Ok(()) => {
                let slot = self.slot(core, line);
                let w = self.word_of(addr);
                self.l1[slot][0].data[w] = v;
            }
            Err(CapacityFailure) => self.bypass_store(core, line, addr, v),
        }
        self.finish();
    }

    /// Compare-and-swap: a store when the word matches, a load otherwise.
    pub fn cas(&mut self, core: usize, addr: u64, expect: u64, new: u64) -> bool {
        if self.peek(addr) == expect {
            self.store(core, addr, new);
            true
        } else {
            self.load(core, addr);
            false
        }
    }

    /// Load `addr` and set the tag bit on `core`'s copy of its line.
    pub fn load_and_tag(&mut self, core: usize, addr: u64) -> Result<u64, CapacityFailure> {
        let line = self.line_of(addr);
        self.ensure_line(line);
        if self.find(core, line).is_none() {
            // Refuse before any message is sent.
            self.victim_index(core, line)?;
        }
        self.counters[core].loads += 1;
        self.acquire_shared(core, line)?;
        let slot = self.slot(core, line);
        self.l1[slot][0].tagged = true;
        let v = self.read_front(core, line, addr);
        self.finish();
        Ok(v)
    }

    pub fn clear_tag(&mut self, core: usize, line: LineId) {
        if let Some(i) = self.find(core, line) {
            let slot = self.slot(core, line);
            self.l1[slot][i].tagged = false;
        }
    }

    pub fn is_tagged(&self, core: usize, line: LineId) -> bool {
        self.find(core, line).is_some_and(|i| self.l1[self.slot(core, line)][i].tagged)
    }

    /// Lines resident and tagged at `core`, in no particular order.
    pub fn tagged_lines(&self, core: usize) -> Vec<LineId> {
        let n = self.sets as usize;
        self.l1[core * n..(core + 1) * n].iter().flat_map(|s| s.iter().filter(|w| w.tagged).map(|w| w.line)).collect()
    }

    pub fn state(&self, core: usize, line: LineId) -> Option<Msi> {
        self.find(core, line).map(|i| self.l1[self.slot(core, line)][i].state)
    }

    /// Cores holding `line`, as a bitmask, according to the directory.
    pub fn sharers(&self, line: LineId) -> u64 {
        self.dir.get(line as usize).map_or(0, |e| e.sharers)
    }

    pub fn owner(&self, line: LineId) -> Option<usize> {
        self.dir.get(line as usize).and_then(|e| e.owner.map(usize::from))
    }

    /// Lines resident in `set` of `core`, most recently used first.
    pub fn set_lines(&self, core: usize, set: usize) -> Vec<LineId> {
        self.l1[core * self.sets as usize + set].iter().map(|w| w.line).collect()
    }

    /// The current value of a word, without side effects.
    pub fn peek(&self, addr: u64) -> u64 {
        let line = self.line_of(addr);
        let Some(e) = self.dir.get(line as usize) else { return 0 };
        if let Some(o) = e.owner {
            let o = o as usize;
            if let Some(i) = self.find(o, line) {
                return self.l1[self.slot(o, line)][i].data[self.word_of(addr)];
            }
        }
        self.backing[(addr >> 3) as usize]
    }

    fn finish(&self) {
        if self.cfg.check_invariants {
            if let Err(e) = self.check_invariants() {
                panic!("memory system invariant violated: {e}");
            }
        }
    }

    /// Count messages accumulated since the last drain against `core`.
    pub fn attribute_msgs(&mut self, core: usize) {
        self.counters[core].msgs += self.msgs.len() as u64;
    }

    /// Single writer, directory agreement, inclusion and clean sharers.
    pub fn check_invariants(&self) -> Result<(), String> {
        let n = self.sets as usize;
        let mut seen = vec![(0u64, None::<u8>); self.dir.len()];
        for core in 0..self.cfg.cores {
            for (s, set) in self.l1[core * n..(core + 1) * n].iter().enumerate() {
                if set.len() > self.cfg.l1_assoc && self.cfg.tagged_lines != TaggedLinePolicy::Unbounded {
                    return Err(format!("core {core} set {s} holds {} ways", set.len()));
                }
                for w in set {
                    if self.set_of(w.line) != s {
                        return Err(format!("line {:#x} in wrong set", w.line));
                    }
                    let Some(entry) = seen.get_mut(w.line as usize) else {
                        return Err(format!("line {:#x} outside directory", w.line));
                    };
                    if entry.0 & (1 << core) != 0 {
                        return Err(format!("core {core} holds line {:#x} twice", w.line));
                    }
                    entry.0 |= 1 << core;
                    if w.state == Msi::Modified {
                        if entry.1.is_some() {
                            return Err(format!("two Modified copies of line {:#x}", w.line));
                        }
                        entry.1 = Some(core as u8);
                    } else {
                        let base = w.line as usize * self.words;
                        if *w.data != self.backing[base..base + self.words] {
                            return Err(format!("stale Shared copy of line {:#x} at core {core}", w.line));
                        }
                    }
                }
            }
        }
        for (line, (e, (sharers, owner))) in self.dir.iter().zip(seen).enumerate() {
            if e.sharers != sharers || e.owner != owner {
                return Err(format!(
                    "directory mismatch on line {line:#x}: dir ({:b}, {:?}) caches ({sharers:b}, {owner:?})",
                    e.sharers, e.owner
                ));
            }
            if let Some(o) = owner {
                if sharers != 1 << o {
                    return Err(format!("line {line:#x} Modified at {o} but shared"));
                }
            }
            if sharers != 0 && !e.in_l2 {
                return Err(format!("inclusion violated for line {line:#x}"));
            }
        }
        Ok(())
    }

    /// Fold the architectural state into `h`.
    pub fn digest<H: Hasher>(&self, h: &mut H) {
        for set in &self.l1 {
            set.len().hash(h);
            for w in set {
                (w.line, w.state, w.tagged).hash(h);
                if w.state == Msi::Modified {
                    w.data.hash(h);
                }
            }
        }
        self.dir.hash(h);
        self.backing.hash(h);
    }
}

#[cfg(test)]
mod tests;
