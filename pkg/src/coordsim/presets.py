"""Named kernel presets and a compact system builder.

Kernel strings: ``identity``, ``copy``, ``uniform``, ``bsc(p)``, ``bec(e)``;
on pair inputs a selector picks the driving variable, e.g. ``copy(c)`` or
``bsc(a, 0.25)``. Explicit row-stochastic tables are accepted everywhere.
"""
from __future__ import annotations

import itertools
import re

import numpy as np

from .prob import Channel, CoordinationSystem, JointPmf, Pmf

_CALL = re.compile(r"^\s*([a-z_]+)\s*(?:\((.*)\))?\s*$")


class PresetError(ValueError):
    pass


def _parse(spec: str) -> tuple[str, list[str]]:
    m = _CALL.match(spec.lower())
    if not m:
        raise PresetError(f"cannot parse kernel {spec!r}")
    name, args = m.group(1), m.group(2)
    return name, [a.strip() for a in args.split(",")] if args and args.strip() else []


def _base(name: str, args: list[str], n_in: int, n_out: int | None) -> Channel:
    if name in ("identity", "copy"):
        return Channel.identity(n_in)
    if name == "bsc":
        _need(name, args, 1)
        return Channel.bsc(float(args[0]))
    if name == "bec":
        _need(name, args, 1)
        return Channel.bec(float(args[0]))
    if name == "uniform":
        k = n_out or n_in
        return Channel(np.full((n_in, k), 1.0 / k))
    raise PresetError(f"unknown kernel preset {name!r}")


def _need(name, args, k):
    if len(args) != k:
        raise PresetError(f"{name} expects {k} numeric argument(s), got {args}")


def kernel(spec, inputs: dict[str, int], n_out: int | None = None) -> Channel:
    """Resolve ``spec`` to a channel on the product of ``inputs`` (first input major)."""
    names = list(inputs)
    n_total = int(np.prod(list(inputs.values())))
    if not isinstance(spec, str):
        ch = Channel(np.asarray(spec, dtype=float))
        if ch.n_in != n_total:
            raise PresetError(f"table has {ch.n_in} rows, expected {n_total}")
        return ch
    name, args = _parse(spec)
    sel = None
    if args and args[0] in names:
        sel, args = args[0], args[1:]
    elif len(names) == 1:
        sel = names[0]
    if name == "uniform":
        k = n_out or 2
        return Channel(np.full((n_total, k), 1.0 / k))
    if sel is None:
        raise PresetError(f"kernel {spec!r} on inputs {names} needs a selector, e.g. {name}({names[0]}, ...)")
    base = _base(name, args, inputs[sel], n_out)
    pos = names.index(sel)
    rows = [base.rows[combo[pos]] for combo in itertools.product(*(range(inputs[v]) for v in names))]
    return Channel(np.array(rows))


def prior(spec, size: int = 2) -> Pmf:
    if not isinstance(spec, str):
        return Pmf(np.asarray(spec, dtype=float))
    name, args = _parse(spec)
    if name == "uniform":
        return Pmf.uniform(size)
    if name in ("bernoulli", "bern"):
        _need(name, args, 1)
        return Pmf.bernoulli(float(args[0]))
    if name == "point":
        _need(name, args, 1)
        return Pmf.point(size, int(args[0]))
    raise PresetError(f"unknown prior {spec!r}")


def make_system(c_prior="uniform", a_given_c="copy", x_given_ac="copy(c)", b_given_a="identity",
                y_given_bc="copy(b)", x_size: int = 2) -> CoordinationSystem:
    """Build ``P_C P_A|C P_X|AC P_B|A P_Y|BC`` from presets or tables (A, C, Y binary)."""
    pc = prior(c_prior)
    k_ac = kernel(a_given_c, {"c": pc.size})
    n_a = k_ac.n_out
    p_ac = JointPmf((k_ac.rows * pc.probs[:, None]).T, ("A", "C"))
    k_x = kernel(x_given_ac, {"a": n_a, "c": pc.size}, n_out=x_size)
    k_b = kernel(b_given_a, {"a": n_a})
    k_y = kernel(y_given_bc, {"b": k_b.n_out, "c": pc.size})
    return CoordinationSystem(p_ac, k_x, k_b, k_y)
