//! Conflict-driven clause learning solver.
//!
//! Two watched literals with blockers, first-UIP learning with local clause
//! minimisation, VSIDS branching with phase saving, Luby restarts and
//! LBD-based learnt clause reduction. Deterministic for identical input.

use web_time::Instant;

use crate::cnf::{CnfFormula, Lit};

const NO_REASON: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct L(u32);

impl L {
    fn new(var: usize, negative: bool) -> L {
        L(((var as u32) << 1) | negative as u32)
    }

    fn from_lit(lit: Lit) -> L {
        L::new(lit.var() as usize - 1, !lit.is_positive())
    }

    fn var(self) -> usize {
        (self.0 >> 1) as usize
    }

    fn negative(self) -> bool {
        self.0 & 1 == 1
    }

    fn code(self) -> usize {
        self.0 as usize
    }

    fn not(self) -> L {
        L(self.0 ^ 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Value {
    True,
    False,
    Unassigned,
}

#[derive(Debug)]
struct Clause {
    lits: Vec<L>,
    learnt: bool,
    deleted: bool,
    lbd: u32,
    activity: f32,
}

#[derive(Debug, Clone, Copy)]
struct Watcher {
    cref: u32,
    blocker: L,
}

/// Binary max-heap over variables keyed by activity.
#[derive(Debug, Default)]
struct VarOrder {
    heap: Vec<usize>,
    pos: Vec<Option<usize>>,
}

impl VarOrder {
    fn grow(&mut self, vars: usize) {
        self.pos.resize(vars, None);
    }

    fn contains(&self, v: usize) -> bool {
        self.pos[v].is_some()
    }

    fn insert(&mut self, v: usize, act: &[f64]) {
        if self.contains(v) {
            return;
        }
        self.pos[v] = Some(self.heap.len());
        self.heap.push(v);
        self.sift_up(self.heap.len() - 1, act);
    }

    fn increased(&mut self, v: usize, act: &[f64]) {
        if let Some(i) = self.pos[v] {
            self.sift_up(i, act);
        }
    }

    fn pop(&mut self, act: &[f64]) -> Option<usize> {
        let top = *self.heap.first()?;
        let last = self.heap.pop().unwrap();
        self.pos[top] = None;
        if !self.heap.is_empty() {
            self.heap[0] = last;
            self.pos[last] = Some(0);
            self.sift_down(0, act);
        }
        Some(top)
    }

    fn sift_up(&mut self, mut i: usize, act: &[f64]) {
        let v = self.heap[i];
        while i > 0 {
            let parent = (i - 1) / 2;
            let p = self.heap[parent];
            if act[p] >= act[v] {
                break;
            }
            self.heap[i] = p;
            self.pos[p] = Some(i);
            i = parent;
        }
        self.heap[i] = v;
        self.pos[v] = Some(i);
    }

    fn sift_down(&mut self, mut i: usize, act: &[f64]) {
        let v = self.heap[i];
        let n = self.heap.len();
        loop {
            let left = 2 * i + 1;
            if left >= n {
                break;
            }
            let right = left + 1;
            let child = if right < n && act[self.heap[right]] > act[self.heap[left]] {
                right
            } else {
                left
            };
            if act[self.heap[child]] <= act[v] {
                break;
            }
            let c = self.heap[child];
            self.heap[i] = c;
            self.pos[c] = Some(i);
            i = child;
        }
        self.heap[i] = v;
        self.pos[v] = Some(i);
    }
}

/// Outcome of one [`Solver::solve`] call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Answer {
    /// `model[v]` is the value of DIMACS variable `v`; index 0 is unused.
    Sat(Vec<bool>),
    Unsat,
    /// Deadline reached before a verdict.
    Interrupted,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Stats {
    pub decisions: u64,
    pub propagations: u64,
    pub conflicts: u64,
    pub restarts: u64,
}

#[derive(Debug)]
pub struct Solver {
    clauses: Vec<Clause>,
    learnts: Vec<u32>,
    watches: Vec<Vec<Watcher>>,
    values: Vec<Value>,
    level: Vec<u32>,
    reason: Vec<u32>,
    trail: Vec<L>,
    trail_lim: Vec<usize>,
    qhead: usize,
    activity: Vec<f64>,
    var_inc: f64,
    cla_inc: f32,
    order: VarOrder,
    phase: Vec<bool>,
    seen: Vec<bool>,
    ok: bool,
    next_reduce: u64,
    stats: Stats,
}

impl Default for Solver {
    fn default() -> Self {
        Self::new()
    }
}

fn luby(y: f64, mut x: u64) -> f64 {
    let (mut size, mut seq) = (1u64, 0i32);
    while size < x + 1 {
        seq += 1;
        size = 2 * size + 1;
    }
    while size - 1 != x {
        size = (size - 1) >> 1;
        seq -= 1;
        x %= size;
    }
    y.powi(seq)
}

impl Solver {
    pub fn new() -> Self {
        Solver {
            clauses: Vec::new(),
            learnts: Vec::new(),
            watches: Vec::new(),
            values: Vec::new(),
            level: Vec::new(),
            reason: Vec::new(),
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            activity: Vec::new(),
            var_inc: 1.0,
            cla_inc: 1.0,
            order: VarOrder::default(),
            phase: Vec::new(),
            seen: Vec::new(),
            ok: true,
            next_reduce: 2000,
            stats: Stats::default(),
        }
    }

    pub fn from_formula(formula: &CnfFormula) -> Self {
        let mut solver = Solver::new();
        solver.reserve_vars(formula.var_count() as usize);
        for clause in formula.clauses() {
            if !solver.add_clause(clause) {
                break;
            }
        }
        solver
    }

    pub fn stats(&self) -> Stats {
        self.stats
    }

    pub fn var_count(&self) -> usize {
        self.values.len()
    }

    pub fn reserve_vars(&mut self, vars: usize) {
        let old = self.values.len();
        if vars <= old {
            return;
        }
        self.values.resize(vars, Value::Unassigned);
        self.level.resize(vars, 0);
        self.reason.resize(vars, NO_REASON);
        self.activity.resize(vars, 0.0);
        self.phase.resize(vars, false);
        self.seen.resize(vars, false);
        self.watches.resize(2 * vars, Vec::new());
        self.order.grow(vars);
        for v in old..vars {
            self.order.insert(v, &self.activity);
        }
    }

    fn value(&self, l: L) -> Value {
        match self.values[l.var()] {
            Value::Unassigned => Value::Unassigned,
            Value::True if l.negative() => Value::False,
            Value::False if l.negative() => Value::True,
            v => v,
        }
    }

    fn decision_level(&self) -> usize {
        self.trail_lim.len()
    }

    /// Adds a clause at the root. Returns false once the formula is known
    /// to be unsatisfiable.
    pub fn add_clause(&mut self, lits: &[Lit]) -> bool {
        if !self.ok {
            return false;
        }
        debug_assert_eq!(self.decision_level(), 0);
        let max_var = lits.iter().map(|l| l.var() as usize).max().unwrap_or(0);
        self.reserve_vars(max_var);
        let mut clause: Vec<L> = lits.iter().map(|&l| L::from_lit(l)).collect();
        clause.sort_unstable_by_key(|l| l.0);
        clause.dedup();
        if clause.windows(2).any(|w| w[0].var() == w[1].var()) {
            return true;
        }
        if clause.iter().any(|&l| self.value(l) == Value::True) {
            return true;
        }
        clause.retain(|&l| self.value(l) != Value::False);
        match clause.len() {
            0 => {
                self.ok = false;
                false
            }
            1 => {
                self.enqueue(clause[0], NO_REASON);
                if self.propagate().is_some() {
                    self.ok = false;
                }
                self.ok
            }
            _ => {
                self.attach(clause, false, 0);
                true
            }
        }
    }

    fn attach(&mut self, lits: Vec<L>, learnt: bool, lbd: u32) -> u32 {
        let cref = self.clauses.len() as u32;
        self.watches[lits[0].not().code()].push(Watcher {
            cref,
            blocker: lits[1],
        });
        self.watches[lits[1].not().code()].push(Watcher {
            cref,
            blocker: lits[0],
        });
        self.clauses.push(Clause {
            lits,
            learnt,
            deleted: false,
            lbd,
            activity: 0.0,
        });
        if learnt {
            self.learnts.push(cref);
        }
        cref
    }

    fn enqueue(&mut self, l: L, reason: u32) {
        let v = l.var();
        self.values[v] = if l.negative() { Value::False } else { Value::True };
        self.level[v] = self.decision_level() as u32;
        self.reason[v] = reason;
        self.trail.push(l);
    }

    fn propagate(&mut self) -> Option<u32> {
        let mut conflict = None;
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            self.stats.propagations += 1;
            let false_lit = p.not();
            let mut ws = std::mem::take(&mut self.watches[p.code()]);
            let (mut i, mut j) = (0, 0);
            while i < ws.len() {
                let w = ws[i];
                i += 1;
                if self.value(w.blocker) == Value::True {
                    ws[j] = w;
                    j += 1;
                    continue;
                }
                let clause = &mut self.clauses[w.cref as usize];
                if clause.deleted {
                    continue;
                }
                if clause.lits[0] == false_lit {
                    clause.lits.swap(0, 1);
                }
                let first = clause.lits[0];
                let watcher = Watcher {
                    cref: w.cref,
                    blocker: first,
                };
                if first != w.blocker && self.value(first) == Value::True {
                    ws[j] = watcher;
                    j += 1;
                    continue;
                }
                let mut moved = false;
                let clause = &mut self.clauses[w.cref as usize];
                for k in 2..clause.lits.len() {
                    let l = clause.lits[k];
                    let val = match self.values[l.var()] {
                        Value::Unassigned => Value::Unassigned,
                        Value::True if l.negative() => Value::False,
                        Value::False if l.negative() => Value::True,
                        v => v,
                    };
                    if val != Value::False {
                        clause.lits.swap(1, k);
                        self.watches[l.not().code()].push(watcher);
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                ws[j] = watcher;
                j += 1;
                if self.value(first) == Value::False {
                    conflict = Some(w.cref);
                    while i < ws.len() {
                        ws[j] = ws[i];
                        i += 1;
                        j += 1;
                    }
                } else {
                    self.enqueue(first, w.cref);
                }
            }
            ws.truncate(j);
            self.watches[p.code()] = ws;
            if conflict.is_some() {
                self.qhead = self.trail.len();
                break;
            }
        }
        conflict
    }

    fn bump_var(&mut self, v: usize) {
        self.activity[v] += self.var_inc;
        if self.activity[v] > 1e100 {
            for a in &mut self.activity {
                *a *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        self.order.increased(v, &self.activity);
    }

    fn bump_clause(&mut self, cref: u32) {
        let c = &mut self.clauses[cref as usize];
        c.activity += self.cla_inc;
        if c.activity > 1e20 {
            for &l in &self.learnts {
                self.clauses[l as usize].activity *= 1e-20;
            }
            self.cla_inc *= 1e-20;
        }
    }

    fn analyze(&mut self, mut confl: u32) -> (Vec<L>, usize) {
        let mut learnt = vec![L(0)];
        let mut path_count = 0;
        let mut p: Option<L> = None;
        let mut index = self.trail.len();
        let current = self.decision_level() as u32;
        loop {
            if self.clauses[confl as usize].learnt {
                self.bump_clause(confl);
            }
            let skip = usize::from(p.is_some());
            let lits = std::mem::take(&mut self.clauses[confl as usize].lits);
            for &q in &lits[skip..] {
                let v = q.var();
                if !self.seen[v] && self.level[v] > 0 {
                    self.bump_var(v);
                    self.seen[v] = true;
                    if self.level[v] >= current {
                        path_count += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            self.clauses[confl as usize].lits = lits;
            loop {
                index -= 1;
                if self.seen[self.trail[index].var()] {
                    break;
                }
            }
            let lit = self.trail[index];
            p = Some(lit);
            confl = self.reason[lit.var()];
            self.seen[lit.var()] = false;
            path_count -= 1;
            if path_count == 0 {
                break;
            }
        }
        learnt[0] = p.unwrap().not();

        // Drop literals implied by other literals of the clause.
        let mut kept = vec![learnt[0]];
        for &l in &learnt[1..] {
            let r = self.reason[l.var()];
            let redundant = r != NO_REASON
                && self.clauses[r as usize].lits[1..]
                    .iter()
                    .all(|q| self.seen[q.var()] || self.level[q.var()] == 0);
            if !redundant {
                kept.push(l);
            }
        }
        for &l in &learnt {
            self.seen[l.var()] = false;
        }
        let mut learnt = kept;

        let backtrack = if learnt.len() == 1 {
            0
        } else {
            let mut max_i = 1;
            for i in 2..learnt.len() {
                if self.level[learnt[i].var()] > self.level[learnt[max_i].var()] {
                    max_i = i;
                }
            }
            learnt.swap(1, max_i);
            self.level[learnt[1].var()] as usize
        };
        (learnt, backtrack)
    }

    fn lbd(&mut self, lits: &[L]) -> u32 {
        let mut levels: Vec<u32> = lits.iter().map(|l| self.level[l.var()]).collect();
        levels.sort_unstable();
        levels.dedup();
        levels.len() as u32
    }

    fn cancel_until(&mut self, level: usize) {
        if self.decision_level() <= level {
            return;
        }
        let stop = self.trail_lim[level];
        for i in (stop..self.trail.len()).rev() {
            let l = self.trail[i];
            let v = l.var();
            self.phase[v] = !l.negative();
            self.values[v] = Value::Unassigned;
            self.reason[v] = NO_REASON;
            self.order.insert(v, &self.activity);
        }
        self.trail.truncate(stop);
        self.trail_lim.truncate(level);
        self.qhead = stop;
    }

    fn locked(&self, cref: u32) -> bool {
        let l = self.clauses[cref as usize].lits[0];
        self.reason[l.var()] == cref && self.value(l) == Value::True
    }

    fn reduce_db(&mut self) {
        let mut candidates: Vec<u32> = self
            .learnts
            .iter()
            .copied()
            .filter(|&c| self.clauses[c as usize].lbd > 2 && !self.locked(c))
            .collect();
        candidates.sort_by(|&a, &b| {
            let (ca, cb) = (&self.clauses[a as usize], &self.clauses[b as usize]);
            cb.lbd
                .cmp(&ca.lbd)
                .then(ca.activity.total_cmp(&cb.activity))
        });
        let remove = candidates.len() / 2;
        for &c in &candidates[..remove] {
            let clause = &mut self.clauses[c as usize];
            clause.deleted = true;
            clause.lits = Vec::new();
        }
        self.learnts.retain(|&c| !self.clauses[c as usize].deleted);
        let clauses = &self.clauses;
        for ws in &mut self.watches {
            ws.retain(|w| !clauses[w.cref as usize].deleted);
        }
    }

    fn pick_branch(&mut self) -> Option<L> {
        while let Some(v) = self.order.pop(&self.activity) {
            if self.values[v] == Value::Unassigned {
                return Some(L::new(v, !self.phase[v]));
            }
        }
        None
    }

    fn model(&self) -> Vec<bool> {
        std::iter::once(false)
            .chain(self.values.iter().map(|&v| v == Value::True))
            .collect()
    }

    /// Solves under `assumptions`; `Unsat` may be relative to them.
    pub fn solve(&mut self, assumptions: &[Lit], deadline: Option<Instant>) -> Answer {
        if !self.ok {
            return Answer::Unsat;
        }
        let max_var = assumptions.iter().map(|l| l.var() as usize).max().unwrap_or(0);
        self.reserve_vars(max_var);
        let assumptions: Vec<L> = assumptions.iter().map(|&l| L::from_lit(l)).collect();
        let mut restart = 0;
        let answer = loop {
            let budget = (luby(2.0, restart) * 100.0) as u64;
            match self.search(budget, &assumptions, deadline) {
                Some(answer) => break answer,
                None => {
                    restart += 1;
                    self.stats.restarts += 1;
                }
            }
        };
        self.cancel_until(0);
        answer
    }

    fn search(&mut self, budget: u64, assumptions: &[L], deadline: Option<Instant>) -> Option<Answer> {
        let mut conflicts = 0u64;
        loop {
            if let Some(confl) = self.propagate() {
                conflicts += 1;
                self.stats.conflicts += 1;
                if self.decision_level() == 0 {
                    self.ok = false;
                    return Some(Answer::Unsat);
                }
                let (learnt, backtrack) = self.analyze(confl);
                self.cancel_until(backtrack);
                if learnt.len() == 1 {
                    self.enqueue(learnt[0], NO_REASON);
                } else {
                    let lbd = self.lbd(&learnt);
                    let first = learnt[0];
                    let cref = self.attach(learnt, true, lbd);
                    self.bump_clause(cref);
                    self.enqueue(first, cref);
                }
                self.var_inc /= 0.95;
                self.cla_inc /= 0.999;
                if self.stats.conflicts.is_multiple_of(256) && deadline.is_some_and(|d| Instant::now() >= d) {
                    return Some(Answer::Interrupted);
                }
                continue;
            }
            if conflicts >= budget {
                self.cancel_until(0);
                return None;
            }
            if self.stats.conflicts >= self.next_reduce {
                self.next_reduce = self.stats.conflicts + 2000 + 300 * self.stats.restarts;
                self.reduce_db();
            }
            let mut next = None;
            while self.decision_level() < assumptions.len() {
                let a = assumptions[self.decision_level()];
                match self.value(a) {
                    Value::True => self.trail_lim.push(self.trail.len()),
                    Value::False => return Some(Answer::Unsat),
                    Value::Unassigned => {
                        next = Some(a);
                        break;
                    }
                }
            }
            let next = match next {
                Some(a) => a,
                None => match self.pick_branch() {
                    Some(l) => l,
                    None => return Some(Answer::Sat(self.model())),
                },
            };
            self.stats.decisions += 1;
            self.trail_lim.push(self.trail.len());
            self.enqueue(next, NO_REASON);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn formula(vars: u32, clauses: &[&[i32]]) -> CnfFormula {
        let mut f = CnfFormula::new();
        for _ in 0..vars {
            f.new_var();
        }
        for c in clauses {
            f.add_clause(c.iter().map(|&v| Lit::from_dimacs(v).unwrap()));
        }
        f
    }

    fn solve(f: &CnfFormula) -> Answer {
        Solver::from_formula(f).solve(&[], None)
    }

    #[test]
    fn luby_sequence() {
        let seq: Vec<f64> = (0..15).map(|i| luby(2.0, i)).collect();
        assert_eq!(seq, [1., 1., 2., 1., 1., 2., 4., 1., 1., 2., 1., 1., 2., 4., 8.]);
    }

    #[test]
    fn contradictory_units() {
        assert_eq!(solve(&formula(1, &[&[1], &[-1]])), Answer::Unsat);
    }

    #[test]
    fn simple_implication() {
        let Answer::Sat(m) = solve(&formula(2, &[&[1, 2], &[-1]])) else {
            panic!("expected a model");
        };
        assert!(!m[1] && m[2]);
    }

    #[test]
    fn empty_formula_and_empty_clause() {
        assert_eq!(solve(&formula(0, &[])), Answer::Sat(vec![false]));
        assert_eq!(solve(&formula(1, &[&[]])), Answer::Unsat);
    }

    #[test]
    fn pigeonhole_4_into_3_is_unsat() {
        let mut f = CnfFormula::new();
        let p = |i: u32, h: u32| 1 + i * 3 + h;
        for _ in 0..12 {
            f.new_var();
        }
        for i in 0..4 {
            f.add_clause((0..3).map(|h| Lit::pos(p(i, h))));
        }
        for h in 0..3 {
            for i in 0..4 {
                for j in i + 1..4 {
                    f.add_clause([Lit::neg(p(i, h)), Lit::neg(p(j, h))]);
                }
            }
        }
        assert_eq!(solve(&f), Answer::Unsat);
    }

    #[test]
    fn assumptions_are_respected_and_retractable() {
        let f = formula(3, &[&[1, 2], &[-2, 3]]);
        let mut s = Solver::from_formula(&f);
        assert_eq!(s.solve(&[Lit::neg(1), Lit::neg(3)], None), Answer::Unsat);
        let Answer::Sat(m) = s.solve(&[Lit::neg(1)], None) else {
            panic!("satisfiable without the second assumption");
        };
        assert!(m[2] && m[3]);
        assert!(matches!(s.solve(&[], None), Answer::Sat(_)));
    }

    #[test]
    fn tautologies_and_duplicates() {
        let f = formula(2, &[&[1, -1], &[2, 2], &[-2, 1, 1]]);
        let Answer::Sat(m) = solve(&f) else { panic!() };
        assert!(m[1] && m[2]);
    }

    #[test]
    fn interrupted_by_past_deadline() {
        // Large pigeonhole: needs well over 256 conflicts.
        let n = 9u32;
        let mut f = CnfFormula::new();
        let p = |i: u32, h: u32| 1 + i * (n - 1) + h;
        for _ in 0..n * (n - 1) {
            f.new_var();
        }
        for i in 0..n {
            f.add_clause((0..n - 1).map(|h| Lit::pos(p(i, h))));
        }
        for h in 0..n - 1 {
            for i in 0..n {
                for j in i + 1..n {
                    f.add_clause([Lit::neg(p(i, h)), Lit::neg(p(j, h))]);
                }
            }
        }
        let answer = Solver::from_formula(&f).solve(&[], Some(Instant::now()));
        assert_eq!(answer, Answer::Interrupted);
    }
}
