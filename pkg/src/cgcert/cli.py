"""Command-line front end.

State specs follow ``name[:param[,param]]`` (``ghz:3``, ``dicke:4,2``,
``bell``, ``horodecki:0.5``) or name a JSON state file.  ``--noise
ch:strength[@party,...]`` applies white noise (``white``) or a channel
(``gd``, ``bf``, ``pf``, ``ad``, ``pd``) before the run.

Exit codes: 0 a certificate was produced, 2 inconclusive, 1 usage or error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .certify import (CertResult, Verdict, certify_separability, separable_ball_radius)
from .config import load_settings, solver_config
from .epsnet import NetCache, NetSizeError, predicted_product_size, product_net
from .robustness import (Mode, SweepConfig, bisect_threshold, channel_family, default_bracket,
                         horodecki_sweep, rigorous_entanglement, white_noise_family,
                         write_csv_report, write_json_report)
from .solver import solve, write_trace
from .statespace import (ChannelKind, DensityMatrix, HilbertStructure, NoiseChannel,
                         PartitionStructure, apply_channel, load_state, make_named_state,
                         mix_white_noise)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INCONCLUSIVE = 2

log = logging.getLogger("cgcert")


@dataclass
class RunManifest:
    command: list
    config: dict
    seeds: dict
    version: str = __version__
    wall_time: float = 0.0
    host: dict = field(default_factory=lambda: {
        "node": platform.node(), "python": platform.python_version(),
        "numpy": np.__version__, "platform": platform.platform()})

    def to_dict(self) -> dict:
        return asdict(self)


class UsageError(ValueError):
    pass


# --------------------------------------------------------------------------
# spec parsing

def parse_state(spec: str) -> tuple[DensityMatrix, str, tuple]:
    if spec.endswith(".json") or os.path.exists(spec):
        return load_state(spec), "file", (spec,)
    name, _, rest = spec.partition(":")
    params = tuple(x for x in rest.split(",") if x) if rest else ()
    try:
        return make_named_state(name, *params), name, params
    except ValueError as exc:
        raise UsageError(f"bad state spec {spec!r}: {exc}") from None


def parse_noise(spec: str) -> tuple[str, float, tuple[int, ...] | None]:
    """``kind:strength[@p0,p1]``."""
    head, _, parties = spec.partition("@")
    kind, sep, strength = head.partition(":")
    if not sep:
        raise UsageError(f"noise spec {spec!r} needs kind:strength")
    try:
        p = float(strength)
        acting = tuple(int(x) for x in parties.split(",")) if parties else None
    except ValueError:
        raise UsageError(f"bad noise spec {spec!r}") from None
    if kind != "white":
        try:
            ChannelKind(kind)
        except ValueError:
            raise UsageError(f"unknown channel {kind!r}") from None
    return kind, p, acting


def make_channel(kind: str, structure: HilbertStructure, acting) -> NoiseChannel:
    if acting is None:
        acting = tuple(range(structure.n_parties)) if kind == "gd" else (0,)
    return NoiseChannel(ChannelKind(kind), acting)


def apply_noise(rho: DensityMatrix, spec: str | None) -> DensityMatrix:
    if spec is None:
        return rho
    kind, p, acting = parse_noise(spec)
    if kind == "white":
        return mix_white_noise(rho, p)
    return apply_channel(rho, make_channel(kind, rho.structure, acting), p)


def parse_partition(structure: HilbertStructure, text: str | None):
    """``"0,1|2"`` style block list, or ``None`` for the finest partition."""
    if text is None:
        return PartitionStructure.finest(structure)
    try:
        blocks = tuple(tuple(int(x) for x in b.split(",")) for b in text.split("|"))
    except ValueError:
        raise UsageError(f"bad partition {text!r}") from None
    return PartitionStructure(structure, blocks)


# --------------------------------------------------------------------------
# commands

def _settings(args) -> dict:
    over: dict = {"seed": args.seed}
    solver = {}
    if getattr(args, "max_iter", None) is not None:
        solver["max_iter"] = args.max_iter
    if getattr(args, "r_threshold", None) is not None:
        solver["r_threshold"] = args.r_threshold
    if getattr(args, "engine", None) is not None:
        solver["engine"] = args.engine
    if getattr(args, "restarts", None) is not None:
        over["lmo"] = {"restarts": args.restarts}
    if solver:
        over["solver"] = solver
    return load_settings(args.config, over)


def _write_json(path, payload) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=_default))


def _default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


def _sweep_config(settings: dict, args, target_gap: float, lo: float, hi: float) -> SweepConfig:
    sw = settings["sweep"]
    net = settings["net"]
    scfg = solver_config(settings, max_iter=sw["max_iter"])
    return SweepConfig(p_lo=lo, p_hi=hi, target_gap=target_gap, max_probes=sw["max_probes"],
                       solver_cfg=scfg, mode=Mode(args.mode), net_n=net["n"],
                       net_exact_last_block=net["exact_last_block"],
                       net_phase_reduce=net["phase_reduce"], net_cap=int(net["cap"]),
                       witness_bound=net["bound"], accelerate=args.accelerate)


def cmd_detect(args) -> int:
    settings = _settings(args)
    rho, _, _ = parse_state(args.state)
    rho = apply_noise(rho, args.noise)
    k = args.k or rho.structure.n_parties
    t0 = time.perf_counter()
    cfg = solver_config(settings, stop_on_r=True)
    res = solve(rho, k, cfg)
    numbers = {"f": res.f, "g": res.g, "r": res.r, "iter": res.iterations,
               "lmo_calls": res.lmo_calls, "stop_reason": res.stop_reason,
               "r_threshold": cfg.r_threshold, "k": k}
    if res.stop_reason == "r_criterion":
        if args.mode == "rigorous":
            sweep = _sweep_config(settings, args, settings["sweep"]["target_gap"], 0.0, 1.0)
            cert = rigorous_entanglement(rho, res, k, sweep, numbers)
        else:
            cert = CertResult(Verdict.HEURISTIC_ENTANGLED, numbers, solver=res)
    else:
        radius = separable_ball_radius(rho.structure, k)
        sep = certify_separability(rho, 0.0, res, radius)
        numbers.update(delta=sep.numbers["delta"], epsilon=sep.numbers["epsilon"], radius=radius)
        if sep.numbers["epsilon"] <= settings["detect"]["sep_slack"]:
            cert = CertResult(Verdict.SEPARABILITY_CERTIFIED, dict(numbers, p_sep=sep.numbers["p_sep"]), solver=res)
        else:
            cert = CertResult(Verdict.INCONCLUSIVE, numbers, solver=res)
    manifest = RunManifest(sys.argv, settings, {"lmo": settings["seed"]},
                           wall_time=time.perf_counter() - t0)
    payload = cert.to_dict()
    payload["manifest"] = manifest.to_dict()
    print(json.dumps(cert.to_dict(), sort_keys=True, default=_default))
    if args.out:
        _write_json(args.out, payload)
    if args.trace:
        write_trace(res.trace, args.trace)
    if args.witness and cert.witness is not None:
        cert.witness.save(args.witness)
    return EXIT_OK if cert.certified else EXIT_INCONCLUSIVE


def cmd_robustness(args) -> int:
    settings = _settings(args)
    t0 = time.perf_counter()
    out_dir = Path(args.out_dir)
    name = args.state.partition(":")[0]
    if name == "horodecki" and ":" not in args.state:
        values = [float(x) for x in args.a_values.split(",")]
        gap = args.target_gap or settings["sweep"]["target_gap_horodecki"]
        cfg = _sweep_config(settings, args, gap, args.p_lo or 0.0, args.p_hi or 1.0)
        results = horodecki_sweep(values, cfg, workers=args.workers)
    else:
        rho, _, _ = parse_state(args.state)
        k = args.k or rho.structure.n_parties
        lo, hi = default_bracket(args.channel)
        lo = lo if args.p_lo is None else args.p_lo
        hi = hi if args.p_hi is None else args.p_hi
        gap = args.target_gap or settings["sweep"]["target_gap"]
        cfg = _sweep_config(settings, args, gap, lo, hi)
        target = _pure_target(rho)
        if args.channel == "white":
            family = white_noise_family(rho, args.state, target, k)
        else:
            ch = make_channel(args.channel, rho.structure, _parties(args.acting))
            family = channel_family(rho, ch, args.state, target, k)
        results = [bisect_threshold(family, cfg)]
    manifest = RunManifest(sys.argv, settings, {"lmo": settings["seed"]},
                           wall_time=time.perf_counter() - t0)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json_report(results, out_dir / "report.json", manifest.to_dict())
    write_csv_report(results, out_dir / "report.csv")
    with open(out_dir / "probes.jsonl", "w") as fh:
        for i, r in enumerate(results):
            for rec in r.traces:
                fh.write(json.dumps(dict(rec, run=i), sort_keys=True, default=_default) + "\n")
    ok = True
    for r in results:
        print(json.dumps(r.row(), sort_keys=True, default=_default))
        if not r.ok:
            print(f"bracket failure: {r.message}", file=sys.stderr)
            ok = False
    return EXIT_OK if ok else EXIT_INCONCLUSIVE


def _pure_target(rho: DensityMatrix):
    w, u = np.linalg.eigh(rho.matrix)
    if w[-1] > 1 - 1e-9:
        return u[:, -1]
    return None


def _parties(text):
    if text is None:
        return None
    return tuple(int(x) for x in text.split(","))


def cmd_net(args) -> int:
    dims = tuple(int(x) for x in args.dims.split(","))
    structure = HilbertStructure(dims)
    part = parse_partition(structure, args.partition)
    predicted = predicted_product_size(part, args.n, args.exact_last_block, args.phase_reduce)
    try:
        cache = NetCache(args.cache_dir) if args.cache_dir else None
        net = product_net(structure, part, args.n, cap=args.cap,
                          exact_last_block=args.exact_last_block, cache=cache,
                          phase_reduce=args.phase_reduce)
    except NetSizeError as exc:
        print(f"refused: predicted {exc.predicted} product vertices exceeds cap {exc.cap}",
              file=sys.stderr)
        return EXIT_ERROR
    stats = {"vertices": net.size, "predicted": predicted, "eta": net.eta,
             "epsilon": net.epsilon, "local_sizes": [len(s) for s in net.local_nets],
             "local_etas": list(net.local_etas)}
    stats.update(net.params())
    print(json.dumps(stats, sort_keys=True))
    return EXIT_OK


def cmd_bench(args) -> int:
    from .bench import run_bench

    settings = _settings(args)
    only = [int(x) for x in args.only.split(",")] if args.only else None
    results = run_bench(Path(args.out_dir), settings, only=only, workers=args.workers)
    for r in results:
        print(f"criterion {r['criterion']}: {'PASS' if r['passed'] else 'FAIL'}  {r['summary']}")
    return EXIT_OK if all(r["passed"] for r in results) else EXIT_INCONCLUSIVE


# --------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cgcert", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--verbose", "-v", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON file overriding the built-in defaults")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1)

    def solver_flags(p):
        p.add_argument("--k", type=int, help="separability level (default: number of parties)")
        p.add_argument("--engine", choices=["bpcg", "vanilla"])
        p.add_argument("--max-iter", type=int)
        p.add_argument("--r-threshold", type=float)
        p.add_argument("--restarts", type=int)
        p.add_argument("--mode", choices=["heuristic", "rigorous"], default="heuristic")
        p.add_argument("--accelerate", action="store_true")

    p = sub.add_parser("detect", help="entanglement detection on one state")
    p.add_argument("--state", required=True)
    p.add_argument("--noise", help="kind:strength[@parties], kind in white,gd,bf,pf,ad,pd")
    p.add_argument("--out", help="result JSON")
    p.add_argument("--trace", help="iteration trace, JSON lines")
    p.add_argument("--witness", help="witness JSON (rigorous mode)")
    common(p)
    solver_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("robustness", help="certified noise threshold interval")
    p.add_argument("--state", required=True,
                   help="state spec; bare 'horodecki' sweeps the --a-values grid")
    p.add_argument("--channel", default="white", choices=["white"] + [c.value for c in ChannelKind])
    p.add_argument("--acting", help="comma-separated acting parties")
    p.add_argument("--p-lo", type=float)
    p.add_argument("--p-hi", type=float)
    p.add_argument("--target-gap", type=float)
    p.add_argument("--a-values", default=",".join(f"{a:.2f}" for a in np.arange(0.05, 0.951, 0.05)))
    p.add_argument("--out-dir", default="results/robustness")
    common(p)
    solver_flags(p)
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("net", help="build a product epsilon-net")
    p.add_argument("--dims", required=True, help="local dimensions, e.g. 2,2")
    p.add_argument("--partition", help="blocks like '0,1|2' (default: one block per party)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--cap", type=int, default=10**7)
    p.add_argument("--exact-last-block", action="store_true")
    p.add_argument("--phase-reduce", action="store_true")
    p.add_argument("--cache-dir", default="results/nets")
    p.set_defaults(func=cmd_net)

    p = sub.add_parser("bench", help="regenerate the acceptance artifacts")
    p.add_argument("--out-dir", default="results/bench")
    p.add_argument("--only", help="comma-separated criterion numbers")
    common(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
