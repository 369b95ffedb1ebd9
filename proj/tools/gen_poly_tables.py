#!/usr/bin/env python3
"""Emit include/kdt/detail/poly_tables.hpp.

With tau = t / T every two-point boundary map reduces to constants:

    A_b(T)[j][i] = B[j][i] * T^(k(i) - j),        k(i) = i mod s
    M(T)[i][l]   = Mbar[i][l] * T^(k(i) + k(l) + 1 - 2s)

where B = A_f(1)^-1 and Mbar = B^T Q(1) B.  Both are computed here in exact
rational arithmetic.
"""
import sys
from pathlib import Path
import sympy as sp


def tables(s):
    n = 2 * s
    t = sp.Symbol("t")
    basis = [t**j for j in range(n)]
    af = sp.zeros(n, n)
    for k in range(s):
        for j in range(n):
            af[k, j] = sp.diff(basis[j], t, k).subs(t, 0)
            af[s + k, j] = sp.diff(basis[j], t, k).subs(t, 1)
    b = af.inv()
    q = sp.zeros(n, n)
    for i in range(n):
        for j in range(n):
            q[i, j] = sp.integrate(sp.diff(basis[i], t, s) * sp.diff(basis[j], t, s), (t, 0, 1))
    mbar = b.T * q * b
    return b, mbar


def fmt(x):
    x = sp.Rational(x)
    if x.q == 1:
        return f"{x.p}.0"
    return f"{x.p}.0 / {x.q}.0"


def emit(name, m, n):
    rows = []
    for i in range(n):
        rows.append("        {" + ", ".join(fmt(m[i, j]) for j in range(n)) + "}")
    return f"    static constexpr double {name}[{n}][{n}] = {{\n" + ",\n".join(rows) + "};\n"


def main():
    header = (Path(__file__).with_name("license_header.txt")).read_text().rstrip("\n") + "\n\n"
    out = [
        header,
        "// Generated by tools/gen_poly_tables.py. Do not edit.\n",
        "#pragma once\n\n",
        "namespace kdt::detail\n{\n\n",
        "template <int S>\nstruct PolyTables;\n\n",
    ]
    for s in (2, 3, 4):
        b, mbar = tables(s)
        out.append(f"template <>\nstruct PolyTables<{s}>\n{{\n")
        out.append(emit("backward", b, 2 * s))
        out.append(emit("energy", mbar, 2 * s))
        out.append("};\n\n")
    out.append("} // namespace kdt::detail\n")
    sys.stdout.write("".join(out))


if __name__ == "__main__":
    main()
