//! Clause database, variable allocation, cardinality constraints and DIMACS.

use std::fmt::{self, Write as _};
use std::ops::Not;

use thiserror::Error;

/// Signed DIMACS literal: `+v` or `-v` for variable `v ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Lit(i32);

impl Lit {
    pub fn pos(var: u32) -> Lit {
        assert!(var >= 1 && var <= i32::MAX as u32, "variable ids start at 1");
        Lit(var as i32)
    }

    pub fn neg(var: u32) -> Lit {
        !Lit::pos(var)
    }

    pub fn from_dimacs(value: i32) -> Option<Lit> {
        (value != 0 && value != i32::MIN).then_some(Lit(value))
    }

    pub fn var(self) -> u32 {
        self.0.unsigned_abs()
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn to_dimacs(self) -> i32 {
        self.0
    }
}

impl Not for Lit {
    type Output = Lit;

    fn not(self) -> Lit {
        Lit(-self.0)
    }
}

impl fmt::Display for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Strategy for encoding `at most λ of these variables are true`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum CardinalityEncoding {
    /// Sinz's sequential counter with unary registers.
    #[default]
    SequentialCounter,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CnfError {
    #[error("dimacs line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CnfFormula {
    var_count: u32,
    clauses: Vec<Vec<Lit>>,
    has_empty_clause: bool,
}

impl CnfFormula {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn new_var(&mut self) -> u32 {
        self.var_count += 1;
        self.var_count
    }

    pub fn var_count(&self) -> u32 {
        self.var_count
    }

    pub fn clause_count(&self) -> usize {
        self.clauses.len()
    }

    pub fn clauses(&self) -> &[Vec<Lit>] {
        &self.clauses
    }

    /// True once an empty clause has been added; the formula is then
    /// trivially unsatisfiable.
    pub fn has_empty_clause(&self) -> bool {
        self.has_empty_clause
    }

    pub fn add_clause(&mut self, lits: impl IntoIterator<Item = Lit>) {
        let clause: Vec<Lit> = lits.into_iter().collect();
        for lit in &clause {
            assert!(
                lit.var() <= self.var_count,
                "literal {lit} refers to an unallocated variable"
            );
        }
        if clause.is_empty() {
            self.has_empty_clause = true;
        }
        self.clauses.push(clause);
    }

    pub fn add_at_most(&mut self, vars: &[Lit], lambda: usize) {
        self.add_at_most_with(CardinalityEncoding::default(), vars, lambda);
    }

    pub fn add_at_most_with(&mut self, encoding: CardinalityEncoding, vars: &[Lit], lambda: usize) {
        match encoding {
            CardinalityEncoding::SequentialCounter => self.sequential_counter(vars, lambda),
        }
    }

    fn sequential_counter(&mut self, x: &[Lit], k: usize) {
        let n = x.len();
        if k >= n {
            return;
        }
        if k == 0 {
            for &xi in x {
                self.add_clause([!xi]);
            }
            return;
        }
        // s[i][j] is true when at least j + 1 of x[0..=i] are true.
        let s: Vec<Vec<Lit>> = (0..n - 1)
            .map(|_| (0..k).map(|_| Lit::pos(self.new_var())).collect())
            .collect();
        self.add_clause([!x[0], s[0][0]]);
        for &sj in &s[0][1..] {
            self.add_clause([!sj]);
        }
        for i in 1..n - 1 {
            self.add_clause([!x[i], s[i][0]]);
            self.add_clause([!s[i - 1][0], s[i][0]]);
            for j in 1..k {
                self.add_clause([!x[i], !s[i - 1][j - 1], s[i][j]]);
                self.add_clause([!s[i - 1][j], s[i][j]]);
            }
            self.add_clause([!x[i], !s[i - 1][k - 1]]);
        }
        self.add_clause([!x[n - 1], !s[n - 2][k - 1]]);
    }

    /// Whether a total assignment (`model[v]` for variable `v`, index 0
    /// unused) satisfies every clause.
    pub fn is_satisfied_by(&self, model: &[bool]) -> bool {
        self.clauses.iter().all(|clause| {
            clause
                .iter()
                .any(|l| model.get(l.var() as usize).copied().unwrap_or(false) == l.is_positive())
        })
    }

    pub fn write_dimacs(&self) -> String {
        let mut out = String::with_capacity(16 + self.clauses.len() * 12);
        let _ = writeln!(out, "p cnf {} {}", self.var_count, self.clauses.len());
        for clause in &self.clauses {
            for lit in clause {
                let _ = write!(out, "{lit} ");
            }
            out.push_str("0\n");
        }
        out
    }

    pub fn parse_dimacs(text: &str) -> Result<CnfFormula, CnfError> {
        let err = |line: usize, msg: &str| CnfError::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut formula = CnfFormula::new();
        let mut declared = None;
        let mut current = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let no = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('c') || line.starts_with('%') {
                continue;
            }
            if line.starts_with('p') {
                let f: Vec<&str> = line.split_whitespace().collect();
                let ["p", "cnf", v, c] = f.as_slice() else {
                    return Err(err(no, "malformed problem line"));
                };
                let v: u32 = v.parse().map_err(|_| err(no, "bad variable count"))?;
                let c: usize = c.parse().map_err(|_| err(no, "bad clause count"))?;
                formula.var_count = v;
                declared = Some(c);
                continue;
            }
            if declared.is_none() {
                return Err(err(no, "clause before problem line"));
            }
            for tok in line.split_whitespace() {
                let value: i32 = tok.parse().map_err(|_| err(no, "bad literal"))?;
                match Lit::from_dimacs(value) {
                    None => formula.add_clause(std::mem::take(&mut current)),
                    Some(lit) if lit.var() <= formula.var_count => current.push(lit),
                    Some(_) => return Err(err(no, "literal exceeds variable count")),
                }
            }
        }
        if !current.is_empty() {
            formula.add_clause(current);
        }
        match declared {
            None => Err(err(0, "missing problem line")),
            Some(c) if c != formula.clauses.len() => {
                Err(err(0, "clause count differs from the problem line"))
            }
            Some(_) => Ok(formula),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fresh_vars_count_up() {
        let mut f = CnfFormula::new();
        assert_eq!(f.new_var(), 1);
        f.new_var();
        f.new_var();
        assert_eq!(f.var_count(), 3);
        assert_eq!(f.new_var(), 4);
    }

    #[test]
    fn at_most_zero_is_units() {
        let mut f = CnfFormula::new();
        let x: Vec<Lit> = (0..2).map(|_| Lit::pos(f.new_var())).collect();
        f.add_at_most(&x, 0);
        assert_eq!(f.clauses(), &[vec![Lit::neg(1)], vec![Lit::neg(2)]]);
        assert_eq!(f.var_count(), 2);
    }

    #[test]
    fn vacuous_bound_adds_nothing() {
        let mut f = CnfFormula::new();
        let x: Vec<Lit> = (0..3).map(|_| Lit::pos(f.new_var())).collect();
        f.add_at_most(&x, 3);
        f.add_at_most(&x, 7);
        assert_eq!(f.clause_count(), 0);
    }

    #[test]
    fn sequential_counter_sizes_match_closed_form() {
        for n in 1..=12usize {
            for k in 1..n {
                let mut f = CnfFormula::new();
                let x: Vec<Lit> = (0..n).map(|_| Lit::pos(f.new_var())).collect();
                f.add_at_most(&x, k);
                assert_eq!(f.var_count() as usize - n, (n - 1) * k, "aux n={n} k={k}");
                assert_eq!(f.clause_count(), 2 * n * k + n - 3 * k - 1, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn dimacs_output() {
        assert_eq!(CnfFormula::new().write_dimacs(), "p cnf 0 0\n");
        let mut f = CnfFormula::new();
        let a = f.new_var();
        let b = f.new_var();
        f.add_clause([Lit::pos(a), Lit::neg(b)]);
        assert_eq!(f.write_dimacs(), "p cnf 2 1\n1 -2 0\n");
    }

    #[test]
    fn empty_clause_is_flagged() {
        let mut f = CnfFormula::new();
        assert!(!f.has_empty_clause());
        f.add_clause([]);
        assert!(f.has_empty_clause());
        assert_eq!(f.write_dimacs(), "p cnf 0 1\n0\n");
    }

    #[test]
    #[should_panic]
    fn unallocated_literal_panics() {
        let mut f = CnfFormula::new();
        f.add_clause([Lit::pos(1)]);
    }

    #[test]
    fn parse_errors() {
        assert!(CnfFormula::parse_dimacs("1 2 0\n").is_err());
        assert!(CnfFormula::parse_dimacs("p cnf 1 1\n2 0\n").is_err());
        assert!(CnfFormula::parse_dimacs("p cnf 2 2\n1 2 0\n").is_err());
        assert!(CnfFormula::parse_dimacs("p dnf 2 2\n").is_err());
        let f = CnfFormula::parse_dimacs("c hi\np cnf 3 2\n1 -3\n 2 0 -1 0\n").unwrap();
        assert_eq!(f.clauses()[0], vec![Lit::pos(1), Lit::neg(3), Lit::pos(2)]);
    }

    fn arb_formula() -> impl Strategy<Value = CnfFormula> {
        (1u32..20).prop_flat_map(|vars| {
            prop::collection::vec(
                prop::collection::vec((1..=vars, any::<bool>()), 1..6),
                0..30,
            )
            .prop_map(move |clauses| {
                let mut f = CnfFormula::new();
                for _ in 0..vars {
                    f.new_var();
                }
                for c in clauses {
                    f.add_clause(c.into_iter().map(|(v, s)| if s { Lit::pos(v) } else { Lit::neg(v) }));
                }
                f
            })
        })
    }

    proptest! {
        #[test]
        fn dimacs_round_trip(f in arb_formula()) {
            let text = f.write_dimacs();
            prop_assert_eq!(CnfFormula::parse_dimacs(&text).unwrap(), f);
        }
    }
}
