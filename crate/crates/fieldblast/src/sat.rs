//! A small complete SAT solver: unit propagation with two watched literals,
//! first-UIP clause learning, VSIDS branching, phase saving and Luby
//! restarts. Deterministic under its fixed branching order (highest
//! activity, ties to the lowest variable index, initial phase false).

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::{Deadline, Error, Result};

/// DIMACS-style literal: +v / -v, v >= 1.
pub type Lit = i32;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SatResult {
    /// Model indexed by variable-1.
    Sat(Vec<bool>),
    Unsat,
}

impl SatResult {
    pub fn is_sat(&self) -> bool {
        matches!(self, SatResult::Sat(_))
    }
}

#[derive(Clone, Copy)]
struct HeapEntry {
    activity: f64,
    var: usize,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for HeapEntry {}
impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap on activity; ties prefer the smaller variable index.
        self.activity
            .partial_cmp(&other.activity)
            .unwrap_or(Ordering::Equal)
            .then(other.var.cmp(&self.var))
    }
}

pub struct Solver {
    nvars: usize,
    clauses: Vec<Vec<Lit>>,
    watches: Vec<Vec<u32>>, // indexed by lit index
    assign: Vec<i8>,        // 1 true, -1 false, 0 unassigned; indexed by var
    level: Vec<u32>,
    reason: Vec<Option<u32>>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    activity: Vec<f64>,
    var_inc: f64,
    heap: BinaryHeap<HeapEntry>,
    phase: Vec<bool>,
    unsat: bool,
    conflicts: u64,
}

fn lit_index(l: Lit) -> usize {
    let v = l.unsigned_abs() as usize;
    2 * v + usize::from(l < 0)
}

impl Solver {
    pub fn new(nvars: usize) -> Solver {
        Solver {
            nvars,
            clauses: Vec::new(),
            watches: vec![Vec::new(); 2 * (nvars + 1) + 2],
            assign: vec![0; nvars + 1],
            level: vec![0; nvars + 1],
            reason: vec![None; nvars + 1],
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            activity: vec![0.0; nvars + 1],
            var_inc: 1.0,
            heap: BinaryHeap::new(),
            phase: vec![false; nvars + 1],
            unsat: false,
            conflicts: 0,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.nvars
    }

    fn value(&self, l: Lit) -> i8 {
        let v = self.assign[l.unsigned_abs() as usize];
        if l < 0 {
            -v
        } else {
            v
        }
    }

    pub fn add_clause(&mut self, mut lits: Vec<Lit>) {
        if self.unsat {
            return;
        }
        lits.sort_unstable();
        lits.dedup();
        // Tautology?
        for w in lits.windows(2) {
            if w[0] == -w[1] {
                return;
            }
        }
        match lits.len() {
            0 => self.unsat = true,
            1 => {
                // Queued once propagation starts; record as a clause so the
                // model check sees it.
                let l = lits[0];
                match self.value(l) {
                    1 => {}
                    -1 if self.trail_lim.is_empty() => self.unsat = true,
                    _ => {
                        if self.value(l) == 0 {
                            self.enqueue(l, None);
                        }
                    }
                }
                self.clauses.push(lits);
            }
            _ => {
                let idx = self.clauses.len() as u32;
                self.watch(lits[0], idx);
                self.watch(lits[1], idx);
                self.clauses.push(lits);
            }
        }
    }

    fn watch(&mut self, l: Lit, idx: u32) {
        let i = lit_index(l);
        if i >= self.watches.len() {
            self.watches.resize(i + 1, Vec::new());
        }
        self.watches[i].push(idx);
    }

    fn enqueue(&mut self, l: Lit, reason: Option<u32>) {
        let v = l.unsigned_abs() as usize;
        self.assign[v] = if l > 0 { 1 } else { -1 };
        self.level[v] = self.trail_lim.len() as u32;
        self.reason[v] = reason;
        self.trail.push(l);
    }

    fn propagate(&mut self) -> Option<u32> {
        while self.qhead < self.trail.len() {
            let l = self.trail[self.qhead];
            self.qhead += 1;
            let false_lit = -l;
            let wi = lit_index(false_lit);
            let watchers = std::mem::take(&mut self.watches[wi]);
            let mut kept = Vec::with_capacity(watchers.len());
            let mut conflict = None;
            let mut it = watchers.into_iter();
            #[allow(clippy::while_let_on_iterator)] // `it` is drained after a conflict breaks out
            while let Some(ci) = it.next() {
                if self.clauses[ci as usize][0] == false_lit {
                    self.clauses[ci as usize].swap(0, 1);
                }
                debug_assert_eq!(self.clauses[ci as usize][1], false_lit);
                let first = self.clauses[ci as usize][0];
                if self.value(first) == 1 {
                    kept.push(ci);
                    continue;
                }
                // Look for a replacement watch.
                let mut moved = false;
                for k in 2..self.clauses[ci as usize].len() {
                    let cand = self.clauses[ci as usize][k];
                    if self.value(cand) != -1 {
                        self.clauses[ci as usize].swap(1, k);
                        self.watch(cand, ci);
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                kept.push(ci);
                if self.value(first) == -1 {
                    conflict = Some(ci);
                    break;
                }
                self.enqueue(first, Some(ci));
            }
            if conflict.is_some() {
                kept.extend(it);
                self.watches[wi].extend(kept);
                self.qhead = self.trail.len();
                return conflict;
            }
            self.watches[wi].extend(kept);
        }
        None
    }

    fn bump(&mut self, v: usize) {
        self.activity[v] += self.var_inc;
        if self.activity[v] > 1e100 {
            for a in self.activity.iter_mut() {
                *a *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        self.heap.push(HeapEntry {
            activity: self.activity[v],
            var: v,
        });
    }

    fn analyze(&mut self, mut ci: u32) -> (Vec<Lit>, usize) {
        let mut learned: Vec<Lit> = vec![0]; // slot for the UIP
        let mut seen = vec![false; self.nvars + 1];
        let mut counter = 0usize;
        let mut idx = self.trail.len();
        let current = self.trail_lim.len() as u32;
        let mut p: Option<Lit> = None;
        loop {
            let clause = self.clauses[ci as usize].clone();
            let start = usize::from(p.is_some());
            for &q in &clause[start..] {
                let v = q.unsigned_abs() as usize;
                if !seen[v] && self.level[v] > 0 {
                    seen[v] = true;
                    self.bump(v);
                    if self.level[v] >= current {
                        counter += 1;
                    } else {
                        learned.push(q);
                    }
                }
            }
            // Pick the next seen literal from the trail.
            loop {
                idx -= 1;
                let l = self.trail[idx];
                if seen[l.unsigned_abs() as usize] {
                    p = Some(l);
                    break;
                }
            }
            let pv = p.unwrap().unsigned_abs() as usize;
            seen[pv] = false;
            counter -= 1;
            if counter == 0 {
                learned[0] = -p.unwrap();
                break;
            }
            ci = self.reason[pv].expect("non-decision has a reason");
        }
        // Backjump level: highest level among the non-UIP literals, which
        // also moves a literal of that level into the second watch slot.
        let mut bt = 0usize;
        for i in 1..learned.len() {
            let lv = self.level[learned[i].unsigned_abs() as usize] as usize;
            if lv > bt {
                bt = lv;
                learned.swap(1, i);
            }
        }
        (learned, bt)
    }

    fn backtrack(&mut self, level: usize) {
        while self.trail_lim.len() > level {
            let lim = self.trail_lim.pop().unwrap();
            while self.trail.len() > lim {
                let l = self.trail.pop().unwrap();
                let v = l.unsigned_abs() as usize;
                self.phase[v] = l > 0;
                self.assign[v] = 0;
                self.reason[v] = None;
                self.heap.push(HeapEntry {
                    activity: self.activity[v],
                    var: v,
                });
            }
        }
        self.qhead = self.trail.len();
    }

    fn pick_branch(&mut self) -> Option<usize> {
        while let Some(e) = self.heap.pop() {
            if self.assign[e.var] == 0 && (e.activity - self.activity[e.var]).abs() < f64::EPSILON
            {
                return Some(e.var);
            }
            // Stale entry: re-check later if still unassigned.
            if self.assign[e.var] == 0 {
                self.heap.push(HeapEntry {
                    activity: self.activity[e.var],
                    var: e.var,
                });
                return Some(e.var);
            }
        }
        // Heap exhausted: linear scan for completeness.
        (1..=self.nvars).find(|&v| self.assign[v] == 0)
    }

    pub fn solve(&mut self, deadline: &Deadline) -> Result<SatResult> {
        if self.unsat {
            return Ok(SatResult::Unsat);
        }
        for v in 1..=self.nvars {
            self.heap.push(HeapEntry {
                activity: 0.0,
                var: v,
            });
        }
        let mut restart_ceiling = luby(1) * 64;
        let mut conflicts_here = 0u64;
        loop {
            if self.conflicts.is_multiple_of(256) {
                deadline.check("bit-blasting")?;
            }
            if let Some(ci) = self.propagate() {
                self.conflicts += 1;
                conflicts_here += 1;
                if self.trail_lim.is_empty() {
                    return Ok(SatResult::Unsat);
                }
                let (learned, bt) = self.analyze(ci);
                self.backtrack(bt);
                self.var_inc /= 0.95;
                let idx = self.clauses.len() as u32;
                let asserting = learned[0];
                if learned.len() == 1 {
                    self.clauses.push(learned);
                    self.enqueue(asserting, None);
                } else {
                    self.watch(learned[0], idx);
                    self.watch(learned[1], idx);
                    self.clauses.push(learned);
                    self.enqueue(asserting, Some(idx));
                }
            } else if conflicts_here >= restart_ceiling {
                // Luby restart.
                conflicts_here = 0;
                let seq = (self.conflicts / 64).max(1);
                restart_ceiling = luby((seq as u32).min(30)) * 64;
                self.backtrack(0);
            } else {
                match self.pick_branch() {
                    None => {
                        let model: Vec<bool> =
                            (1..=self.nvars).map(|v| self.assign[v] == 1).collect();
                        self.check_model(&model)?;
                        return Ok(SatResult::Sat(model));
                    }
                    Some(v) => {
                        self.trail_lim.push(self.trail.len());
                        let lit = if self.phase[v] { v as Lit } else { -(v as Lit) };
                        self.enqueue(lit, None);
                    }
                }
            }
        }
    }

    /// A sat result must satisfy every clause.
    fn check_model(&self, model: &[bool]) -> Result<()> {
        for c in &self.clauses {
            let ok = c.iter().any(|&l| {
                let v = l.unsigned_abs() as usize;
                (l > 0) == model[v - 1]
            });
            if !ok {
                return Err(Error::Internal(format!("model violates clause {c:?}")));
            }
        }
        Ok(())
    }
}

fn luby(i: u32) -> u64 {
    // Luby sequence 1,1,2,1,1,2,4,...
    let mut k = 1u32;
    while (1u64 << k) < (i as u64 + 1) {
        k += 1;
    }
    if (1u64 << k) == i as u64 + 1 {
        return 1u64 << (k - 1);
    }
    luby(i + 1 - (1 << (k - 1)))
}

// ---------------------------------------------------------------------------
// DIMACS
// ---------------------------------------------------------------------------

/// Standard DIMACS CNF: p-line header, one clause per line, 0-terminated.
pub fn to_dimacs(nvars: usize, clauses: &[Vec<Lit>]) -> String {
    let mut s = format!("p cnf {} {}\n", nvars, clauses.len());
    for c in clauses {
        for l in c {
            s.push_str(&l.to_string());
            s.push(' ');
        }
        s.push_str("0\n");
    }
    s
}

/// Parse a solver model: `s SATISFIABLE`/`s UNSATISFIABLE` status lines and
/// `v` value lines (0-terminated literal lists). Returns None for unsat.
pub fn parse_dimacs_model(text: &str) -> Result<Option<Vec<Lit>>> {
    let mut lits = Vec::new();
    let mut sat = None;
    for line in text.lines() {
        let line = line.trim();
        if line.starts_with("s ") {
            if line.contains("UNSAT") {
                sat = Some(false);
            } else if line.contains("SAT") {
                sat = Some(true);
            }
        } else if let Some(rest) = line.strip_prefix("v ") {
            for tok in rest.split_whitespace() {
                let l: Lit = tok
                    .parse()
                    .map_err(|_| Error::Parse {
                        line: 0,
                        col: 0,
                        msg: format!("bad literal {tok} in model"),
                    })?;
                if l != 0 {
                    lits.push(l);
                }
            }
        }
    }
    match sat {
        Some(false) => Ok(None),
        Some(true) => Ok(Some(lits)),
        None if !lits.is_empty() => Ok(Some(lits)),
        None => Err(Error::Parse {
            line: 0,
            col: 0,
            msg: "model file has neither status nor values".into(),
        }),
    }
}
