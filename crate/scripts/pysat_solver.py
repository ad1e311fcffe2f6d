#!/usr/bin/env python3
"""Run a PySAT solver on a DIMACS file and print SAT-competition output.

Usage: pysat_solver.py [--solver glucose3] FILE.cnf

Exit code 10 for SATISFIABLE, 20 for UNSATISFIABLE, 0 for UNKNOWN.
Requires `pip install python-sat`.
"""
import argparse
import sys

from pysat.formula import CNF
from pysat.solvers import Solver


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--solver", default="glucose3")
    parser.add_argument("path")
    args = parser.parse_args()

    cnf = CNF(from_file=args.path)
    with Solver(name=args.solver, bootstrap_with=cnf.clauses) as solver:
        verdict = solver.solve()
        if verdict is None:
            print("s UNKNOWN")
            return 0
        if not verdict:
            print("s UNSATISFIABLE")
            return 20
        model = solver.get_model() or []
        print("s SATISFIABLE")
        for i in range(0, len(model), 20):
            print("v " + " ".join(str(v) for v in model[i : i + 20]))
        print("v 0")
        return 10


if __name__ == "__main__":
    sys.exit(main())
