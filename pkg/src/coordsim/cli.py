"""Command-line front end: ``coordsim sets|rates|simulate|oracle --config FILE``.

Exit codes: 0 ok, 2 configuration error, 3 decodability violation,
4 infeasible rate region, 5 runtime budget exceeded, 6 enumeration budget
exceeded.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .config import (ConfigError, RunManifest, atomic_write, cache_dir, load_config, read_record,
                     write_record)
from .codec import CoordCodec
from .metrics import (CSV_COLUMNS, CSV_VERSION, Rates, RuntimeBudgetError, _fmt, code_rates, csv_text,
                      region_check, run_experiment)
from .oracle import EnumerationBudgetError, exhaustive_oracle, target_word_joint
from .prob import total_variation
from .sets import DecodabilityError, PolarSpectrum, build_family, build_spectrum, chain_layout

EXIT_OK, EXIT_CONFIG, EXIT_DECODABILITY, EXIT_INFEASIBLE, EXIT_RUNTIME, EXIT_ENUMERATION = 0, 2, 3, 4, 5, 6


def _err(msg: str) -> None:
    print(f"coordsim: {msg}", file=sys.stderr)


def _provenance(man: RunManifest, key: str | None = None) -> dict:
    prov = {"coordsim": __version__, "config": man.cfg.summary(), "system": man.system_record()}
    if key:
        prov["key"] = key
    return prov


def load_spectrum(man: RunManifest, workers: int = 1) -> tuple[PolarSpectrum, bool]:
    """Cached spectrum for the manifest; returns ``(spectrum, cache_hit)``."""
    key = man.spectrum_key()
    path = cache_dir() / f"spectrum-{key}.json"
    if path.exists():
        try:
            return PolarSpectrum.from_record(read_record(path, "spectrum")["spectrum"]), True
        except (ValueError, KeyError, json.JSONDecodeError):
            pass  # stale or foreign file: rebuild
    c = man.cfg
    spec = build_spectrum(c.sys, c.n, c.M, c.seed, workers=workers, backend=c.backend)
    write_record(path, "spectrum", {"spectrum": spec.to_record()}, _provenance(man, key))
    return spec, False


def _rate_table(rates: Rates) -> str:
    return "  ".join(f"{k}={v:.4f}" for k, v in rates._asdict().items())


def _print_region(rep) -> None:
    for name, val in rep.info.items():
        print(f"  {name:10s} {val:.6f}")
    for k, m in rep.margins.items():
        print(f"  ({k}) margin {m:+.6f}{'' if m > 0 else '  VIOLATED'}")
    for a, b in rep.conflicts:
        print(f"  conflict: ({a}) and ({b}) cannot hold together since I(X;C) >= I(B;C)")


def cmd_sets(man: RunManifest, args) -> int:
    spec, hit = load_spectrum(man, args.workers)
    fam = build_family(spec, man.cfg.eps_vh, man.cfg.eps_h)
    layout = chain_layout(fam, man.cfg.k)
    key = man.sets_key()
    body = {"spectrum": spec.to_record(), "family": fam.to_record(), "layout": layout.to_record()}
    out = Path(args.out) / "sets.json"
    write_record(out, "sets", body, _provenance(man, key))
    print(f"spectrum cache {'hit' if hit else 'miss'} ({man.spectrum_key()})")
    print(f"N={fam.N}  k={man.cfg.k}  eps_vh={fam.eps_vh}  eps_h={fam.eps_h}")
    for name, size in fam.sizes().items():
        print(f"  |{name}| = {size}")
    print(f"  F31_size={layout.F31_size}  F32_size={layout.F32_size}")
    print("rates: " + _rate_table(code_rates(fam, man.cfg.k)))
    print(f"wrote {out}")
    return EXIT_OK


def _blank_row(man: RunManifest, rates: Rates, rep) -> dict:
    c = man.cfg
    row = {k: "" for k in CSV_COLUMNS}
    row.update({k: getattr(c, k) for k in ("n", "k", "eps_vh", "eps_h", "M", "trials", "seed", "mode", "sidechannel")})
    row.update(rates._asdict())
    row.update({f"m_{k}": v for k, v in rep.margins.items()})
    row["feasible"] = int(rep.feasible)
    return row


def cmd_rates(man: RunManifest, args) -> int:
    if man.rates is not None:
        rates = Rates(**{k: float(man.rates[k]) for k in Rates._fields})
        source = "config"
    else:
        spec, _ = load_spectrum(man, args.workers)
        fam = build_family(spec, man.cfg.eps_vh, man.cfg.eps_h)
        chain_layout(fam, man.cfg.k)
        rates = code_rates(fam, man.cfg.k)
        source = "construction"
    rep = region_check(man.cfg.sys, rates)
    print(f"rates ({source}): {_rate_table(rates)}")
    _print_region(rep)
    out = Path(args.out)
    body = {"rates": rates._asdict(), "source": source, "margins": rep.margins, "info": rep.info,
            "conflicts": [list(c) for c in rep.conflicts], "feasible": rep.feasible}
    write_record(out / "rates.json", "rates", body, _provenance(man))
    buf = [f"# coordsim csv v{CSV_VERSION}", ",".join(CSV_COLUMNS)]
    row = _blank_row(man, rates, rep)
    buf.append(",".join(_fmt(row[c]) for c in CSV_COLUMNS))
    atomic_write(out / "rates.csv", "\n".join(buf) + "\n")
    if not rep.feasible:
        msg = "infeasible: violated " + ", ".join(f"({k})" for k in rep.failing())
        if rep.conflicts:
            msg += "; conflicting pair " + ", ".join(f"({a})&({b})" for a, b in rep.conflicts)
        _err(msg)
        return EXIT_INFEASIBLE
    print("feasible")
    return EXIT_OK


def cmd_simulate(man: RunManifest, args) -> int:
    spec, _ = load_spectrum(man, args.workers)

    def progress(done, total):
        if not args.quiet:
            print(f"\r  chunks {done}/{total}", end="" if done < total else "\n", file=sys.stderr)

    rep = run_experiment(man.cfg, spec, progress=progress)
    out = Path(args.out)
    rec = rep.to_record()
    rec.pop("runtime")
    write_record(out / "report.json", "report", rec, _provenance(man))
    atomic_write(out / "report.csv", csv_text([rep]))
    print("rates: " + _rate_table(rep.rates))
    print(f"tv={rep.tv:.6f}  kl={rep.kl:.6f}  per-block tv=" + ",".join(f"{t:.4f}" for t in rep.block_tv))
    print(f"c_hat error rate {rep.c_error_rate:.5f}; runtime {rep.runtime:.1f}s")
    if not rep.region.feasible:
        _print_region(rep.region)
        _err("warning: realized rates lie outside the strict inner bound: violated "
             + ", ".join(f"({k})" for k in rep.region.failing()))
        if args.require_feasible:
            return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_oracle(man: RunManifest, args) -> int:
    c = man.cfg
    if c.k != 1:
        raise ConfigError("oracle requires k = 1")
    if c.sidechannel != "ideal":
        raise ConfigError("oracle requires the ideal side channel")
    spec, _ = load_spectrum(man, args.workers)
    fam = build_family(spec, c.eps_vh, c.eps_h)
    layout = chain_layout(fam, 1)
    codec = CoordCodec(c.sys, fam, layout, c.backend)
    oracle = exhaustive_oracle(codec, c.mode, c.literal_step4)
    target = target_word_joint(c.sys, c.N)
    rep = run_experiment(c, spec)
    emp = rep.word_counts.reshape(oracle.table.shape) / c.trials
    body = {
        "oracle": oracle.table.tolist(),
        "empirical": emp.tolist(),
        "target": target.table.tolist(),
        "oracle_sum": float(oracle.table.sum()),
        "tv_oracle_empirical": total_variation(oracle.table, emp),
        "tv_oracle_target": total_variation(oracle.table, target.table),
    }
    write_record(Path(args.out) / "oracle.json", "oracle", body, _provenance(man))
    print(f"oracle sum {body['oracle_sum']:.12f}")
    print(f"TV(oracle, empirical @ {c.trials} trials) = {body['tv_oracle_empirical']:.6f}")
    print(f"TV(oracle, target) = {body['tv_oracle_target']:.3e}")
    return EXIT_OK


COMMANDS = {"sets": cmd_sets, "rates": cmd_rates, "simulate": cmd_simulate, "oracle": cmd_oracle}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coordsim", description="Polar coding for strong coordination.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("command", choices=tuple(COMMANDS))
    p.add_argument("--config", required=True, help="TOML file with [system], [code], [run]")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1, help="cap on parallel workers")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--mode", choices=("sample", "argmax"))
    p.add_argument("--quiet", action="store_true")
    p.add_argument("--require-feasible", action="store_true",
                   help="simulate: exit 4 when the realized rates violate the inner bound")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.workers < 1:
        _err("--workers must be at least 1")
        return EXIT_CONFIG
    try:
        man = load_config(args.config, {"seed": args.seed, "n": args.n, "k": args.k,
                                        "trials": args.trials, "mode": args.mode, "workers": args.workers})
        return COMMANDS[args.command](man, args)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except DecodabilityError as exc:
        _err(str(exc))
        return EXIT_DECODABILITY
    except RuntimeBudgetError as exc:
        _err(str(exc))
        return EXIT_RUNTIME
    except EnumerationBudgetError as exc:
        _err(str(exc))
        return EXIT_ENUMERATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
