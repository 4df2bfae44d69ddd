"""Command-line entry point: generate fields, run the verification suites,
check transport along characteristics.

Exit codes: 0 success, 2 configuration error, 3 generation failure,
4 verification failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import expr as ex
from .families import (
    FamilyError,
    FamilyOutputs,
    LambdaFamily,
    RationalParams,
    const_family,
    family_outputs,
    freestream_family,
    rational_family,
    theta_constant,
    theta_separable,
    theta_sigma,
    theta_sum,
)
from .numerics import GridSpec, NumericsError, is_nested
from .reconstruction import (
    DegenerateSignsError,
    GenerationError,
    NoConvergingSignsError,
    SignConvention,
    SolutionFields,
    evaluate_fields,
    make_fields,
    resolve_signs,
)
from .transport import TransportError, conservation_order, emit, trajectory, write_trajectory_csv
from .verifier import (
    ResidualReport,
    benney_residual,
    convergence_order,
    cr_residual,
    entry_passes,
    hj_residual,
    hxx_from_h,
    kinetic_residual,
    ladder_levels,
    monge_residual,
    probe_points,
    substituted_residual,
)

__all__ = [
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_GENERATION",
    "EXIT_VERIFY",
    "ConfigError",
    "RunConfig",
    "load_config",
    "preset_path",
    "build_outputs",
    "choose_signs",
    "run_generate",
    "run_verify",
    "run_transport",
    "write_json",
    "write_fields_csv",
    "main",
]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GENERATION = 3
EXIT_VERIFY = 4

FAMILIES = ("freestream", "const_theta", "rational")
CSV_HEADER = ("t", "x", "y", "v", "u", "h", "mask")

log = logging.getLogger("benney")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


# --- configuration ---------------------------------------------------------


def _need(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"{where}{key}", "missing")
    return d[key]


def _real(value, name: str) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigError(name, f"expected a number, got {value!r}") from None
    if not math.isfinite(out):
        raise ConfigError(name, "must be finite")
    return out


def _grid(d, name: str, axes: Sequence[str]) -> GridSpec:
    if not isinstance(d, dict):
        raise ConfigError(name, "expected an object of axes")
    for a in axes:
        if a not in d:
            raise ConfigError(f"{name}.{a}", "missing axis")
        spec = d[a]
        if not (isinstance(spec, (list, tuple)) and len(spec) == 3):
            raise ConfigError(f"{name}.{a}", "expected [min, max, count]")
        lo, hi = _real(spec[0], f"{name}.{a}[0]"), _real(spec[1], f"{name}.{a}[1]")
        if not lo < hi:
            raise ConfigError(f"{name}.{a}", f"min must be < max (got {lo}, {hi})")
        if not (isinstance(spec[2], int) and spec[2] >= 2):
            raise ConfigError(f"{name}.{a}", "count must be an integer >= 2")
    return GridSpec.from_dict({a: d[a] for a in axes})


def _expression(src, name: str, variables: Sequence[str]) -> ex.Expression:
    if not isinstance(src, str):
        raise ConfigError(name, "expected an expression string")
    try:
        return ex.parse(src, variables)
    except ex.ExprError as e:
        raise ConfigError(name, str(e)) from None


def _signs(value, name: str = "sign_mode") -> Optional[SignConvention]:
    if value == "auto":
        return None
    if isinstance(value, dict) and value.get("mode", "forced") == "forced":
        try:
            return SignConvention(int(_need(value, "s_h", name + ".")), int(_need(value, "s_phi", name + ".")))
        except ValueError as e:
            raise ConfigError(name, str(e)) from None
    raise ConfigError(name, 'expected "auto" or {"mode": "forced", "s_h": +-1, "s_phi": +-1}')


@dataclass
class RunConfig:
    family: str
    params: dict
    grid: GridSpec
    ladder: tuple[int, ...] = (32, 64, 128)
    probes: int = 4
    signs: Optional[SignConvention] = None
    min_order: float = 1.9
    exact_tol: float = 1e-8
    kinetic_axis: Optional[tuple[str, float, float]] = None
    corrupt: float = 0.0
    transport: Optional[dict] = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def sign_mode(self) -> str:
        return "auto" if self.signs is None else "forced"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise ConfigError("config", "expected a JSON object")
        family = _need(d, "family", "")
        if family not in FAMILIES:
            raise ConfigError("family", f"expected one of {', '.join(FAMILIES)}, got {family!r}")
        params = d.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("params", "expected an object")
        _check_params(family, params)
        grid = _grid(_need(d, "grid", ""), "grid", ("t", "x", "y"))
        ver = d.get("verify", {})
        ladder = tuple(ver.get("ladder", (32, 64, 128)))
        if len(ladder) < 3 or not all(isinstance(n, int) and n >= 2 for n in ladder):
            raise ConfigError("verify.ladder", "need at least three integer division counts")
        if not is_nested(ladder_levels(grid, ladder)):
            raise ConfigError("verify.ladder", "levels must be nested (each count a multiple of the previous)")
        probes = ver.get("probes", 4)
        if not (isinstance(probes, int) and probes >= 1):
            raise ConfigError("verify.probes", "expected a positive integer")
        if ladder[0] % (1 << math.ceil(math.log2(probes + 1))):
            raise ConfigError("verify.probes", "probe nodes must belong to the coarsest ladder level")
        tol = d.get("tolerances", {})
        min_order = _real(tol.get("min_order", 1.9), "tolerances.min_order")
        exact_tol = _real(tol.get("exact", 1e-8), "tolerances.exact")
        kin = ver.get("kinetic_axis")
        kinetic_axis = None
        if kin is not None:
            if not (isinstance(kin, dict) and len(kin) == 1 and next(iter(kin)) in ("lam", "g")):
                raise ConfigError("verify.kinetic_axis", 'expected {"lam": [lo, hi]} or {"g": [lo, hi]}')
            (name, rng), = kin.items()
            lo, hi = _real(rng[0], f"verify.kinetic_axis.{name}[0]"), _real(rng[1], f"verify.kinetic_axis.{name}[1]")
            if not lo < hi:
                raise ConfigError(f"verify.kinetic_axis.{name}", "min must be < max")
            kinetic_axis = (name, lo, hi)
        corrupt = _real(ver.get("corrupt", 0.0), "verify.corrupt")
        transport = d.get("transport")
        if transport is not None:
            _check_transport(transport, family)
        return cls(
            family, params, grid, ladder, probes, _signs(d.get("sign_mode", "auto")),
            min_order, exact_tol, kinetic_axis, corrupt, transport, d,
        )


def _check_params(family: str, p: dict) -> None:
    if family == "freestream":
        _expression(_need(p, "G0", "params."), "params.G0", ("xi", "lam"))
        _real(_need(p, "g_lo", "params."), "params.g_lo")
        _real(p.get("forcing", 0.0), "params.forcing")
    elif family == "const_theta":
        A = _real(_need(p, "A", "params."), "params.A")
        if A == 0:
            raise ConfigError("params.A", "must be non-zero")
        theta = p.get("theta", "sigma")
        if theta not in ("sigma", "constant", "sigma+separable"):
            raise ConfigError("params.theta", f"unknown theta {theta!r}")
        if theta == "sigma+separable":
            _real(_need(p, "k", "params."), "params.k")
            _real(_need(p, "weight", "params."), "params.weight")
            rr = _need(p, "R_range", "params.")
            if not (isinstance(rr, list) and len(rr) == 2 and _real(rr[0], "params.R_range[0]") < _real(rr[1], "params.R_range[1]")):
                raise ConfigError("params.R_range", "expected [lo, hi] with lo < hi")
    else:
        _expression(_need(p, "U", "params."), "params.U", ("g",))
        _expression(_need(p, "V", "params."), "params.V", ("g",))
        lo = _real(p.get("g_lo", 0.0), "params.g_lo")
        hi = _real(p.get("g_hi", 1.0), "params.g_hi")
        if not lo < hi:
            raise ConfigError("params.g_lo", f"must be < params.g_hi (got g_lo={lo}, g_hi={hi})")


def _check_transport(tr: dict, family: str) -> None:
    if not isinstance(tr, dict):
        raise ConfigError("transport", "expected an object")
    t0, t1 = _real(_need(tr, "t0", "transport."), "transport.t0"), _real(_need(tr, "t1", "transport."), "transport.t1")
    if t0 == t1:
        raise ConfigError("transport.t1", "must differ from transport.t0")
    dts = _need(tr, "dts", "transport.")
    if not isinstance(dts, list) or len(dts) < 2:
        raise ConfigError("transport.dts", "need at least two dt levels to fit an order")
    for i, v in enumerate(dts):
        if _real(v, f"transport.dts[{i}]") <= 0:
            raise ConfigError(f"transport.dts[{i}]", "must be > 0")
    seeds = _need(tr, "seeds", "transport.")
    second = "g" if family == "rational" else "lam"
    _grid(seeds, "transport.seeds", ("x", second))
    if "box" in tr:
        b = tr["box"]
        if not (isinstance(b, list) and len(b) == 2 and _real(b[0], "transport.box[0]") < _real(b[1], "transport.box[1]")):
            raise ConfigError("transport.box", "expected [lo, hi] with lo < hi")
    _real(tr.get("floor", 1e-9), "transport.floor")
    _real(tr.get("min_order", 3.9), "transport.min_order")


def preset_path(name: str) -> Path:
    """Path of a shipped preset (``name`` with or without ``.json``)."""
    fn = name if name.endswith(".json") else name + ".json"
    return Path(str(resources.files("benney") / "presets" / fn))


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    if not p.exists() and not p.suffix:
        p = preset_path(str(path))
    try:
        raw = json.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError("config", f"invalid JSON ({e})") from None
    return RunConfig.from_dict(raw)


# --- building --------------------------------------------------------------


def _rational_params(cfg: RunConfig, s_phi: int = 1) -> RationalParams:
    p = cfg.params
    return RationalParams.from_strings(p["U"], p["V"], p.get("g_lo", 0.0), p.get("g_hi", 1.0), s_phi)


def _theta(p: dict):
    A = float(p["A"])
    kind = p.get("theta", "sigma")
    if kind == "sigma":
        return theta_sigma(A)
    if kind == "constant":
        return theta_constant(A, float(p.get("c", 1.0)))
    sep = theta_separable(float(p["k"]), A, tuple(p["R_range"]), s_h=int(p.get("s_h", -1)))
    return theta_sum(theta_sigma(A), sep, float(p["weight"]))


def build_outputs(cfg: RunConfig, s_phi: int = 1) -> FamilyOutputs:
    p = cfg.params
    if cfg.family == "freestream":
        G0 = ex.parse(p["G0"], ("xi", "lam"))
        return freestream_family(G0, float(p["g_lo"]), cfg.grid, forcing=float(p.get("forcing", 0.0)))
    if cfg.family == "const_theta":
        return const_family(_theta(p), cfg.grid)
    return family_outputs(rational_family(_rational_params(cfg, s_phi), cfg.grid))


def choose_signs(cfg: RunConfig, resolution: Optional[dict] = None) -> SignConvention:
    """The forced convention, or the unique converging one (sign_mode auto)."""
    if cfg.signs is not None:
        return cfg.signs
    if cfg.family == "rational":
        build = lambda s: build_outputs(cfg, s)
    else:
        build = build_outputs(cfg)
    return resolve_signs(build, cfg.grid, ladder=cfg.ladder, probes=cfg.probes, report=resolution)


def _hxx(cfg: RunConfig, fields: SolutionFields, dx: float):
    if cfg.family == "freestream":
        a = float(cfg.params.get("forcing", 0.0))
        return lambda t, x: a + 0.0 * np.asarray(x, dtype=float)
    return hxx_from_h(fields.h, dx)


def _exact_hxx(cfg: RunConfig, out: FamilyOutputs, fields: SolutionFields):
    """H_xx used to push characteristics (closed form where one exists)."""
    if cfg.family == "rational":
        fam: LambdaFamily = out.family
        g0 = fam.g_lo
        return lambda t, x: fam.partial("t", t, x, g0) - fam.lam(t, x, g0) * fam.partial("x", t, x, g0)
    return _hxx(cfg, fields, 1e-4)


# --- verification suite ----------------------------------------------------


def _report_dict(rep: ResidualReport, signs: SignConvention, extra: Optional[dict] = None) -> dict:
    out = {
        "residuals": rep.to_dict(),
        "orders": {e.name: e.order for e in rep},
        "signs": signs.to_dict(),
        "masked_fraction": rep.masked_fraction,
    }
    if extra:
        out.update(extra)
    return out


def _first_failure(rep: ResidualReport, cfg: RunConfig, exact: Sequence[str]) -> Optional[str]:
    for e in rep:
        if e.name in exact:
            if not (e.linf <= cfg.exact_tol):
                return f"{e.name}: Linf {e.linf:.3e} exceeds {cfg.exact_tol:.1e}"
        elif not entry_passes(e, cfg.min_order):
            got = "none" if e.order is None else f"{e.order:.2f}"
            return f"{e.name}: order {got} (status {e.status}) below {cfg.min_order}"
    return None


def run_verify(cfg: RunConfig) -> tuple[dict, Optional[str]]:
    """All residual ladders for the configured family.

    Returns the report dictionary and the first violated check (None on
    success).
    """
    resolution: dict = {}
    signs = choose_signs(cfg, resolution)
    out = build_outputs(cfg, signs.s_phi)
    fields = make_fields(out, signs)
    if cfg.corrupt:
        fields = fields.perturbed(cfg.corrupt)
    base = cfg.grid
    levels = ladder_levels(base, cfg.ladder)
    pts = probe_points(base, cfg.probes)
    rep = ResidualReport()
    rep.merge(convergence_order(lambda g: benney_residual(fields, g, pts), levels))
    rep.merge(convergence_order(lambda g: substituted_residual(fields.u, fields.H_x, fields.H_t, g, pts), levels))
    tx = base.subgrid("t", "x")
    ptx = probe_points(tx, cfg.probes)
    rep.merge(convergence_order(lambda g: monge_residual(out.pair, _hxx(cfg, fields, g.spacing("x")), g, ptx), ladder_levels(tx, cfg.ladder)))
    fam = out.family
    if cfg.kinetic_axis is not None:
        name, lo, hi = cfg.kinetic_axis
    elif fam is not None:
        name, lo, hi = "g", fam.g_lo, fam.g_hi
    else:
        name, lo, hi = "lam", -1.0, 1.0
    kin = GridSpec.from_dict({"t": list(tx.to_dict()["t"]), "x": list(tx.to_dict()["x"]), name: [lo, hi, 3]})
    # quarter points on the velocity axis: the 1/8 and 7/8 nodes sit in the
    # pre-asymptotic range of the coarsest level
    pk = probe_points(kin, {"t": cfg.probes, "x": cfg.probes, name: 3})
    rep.merge(convergence_order(
        lambda g: kinetic_residual(out.G, _hxx(cfg, fields, g.spacing("x")), g, pk, family=fam),
        ladder_levels(kin, cfg.ladder),
    ))
    exact = []
    if fam is not None:
        rep.merge(cr_residual(fam, tx.with_divisions(cfg.ladder[0]), s_h=signs.s_h, probes=ptx))
        exact.append("cr")
        hj_base = GridSpec.from_dict({"t": tx.to_dict()["t"], "x": tx.to_dict()["x"], "g": [fam.g_lo, fam.g_hi, 3]})
        php = probe_points(hj_base, 3)
        rep.merge(convergence_order(lambda g: hj_residual(fam, g, s_h=signs.s_h, probes=php), ladder_levels(hj_base, cfg.ladder)))
    failure = _first_failure(rep, cfg, exact)
    extra = {
        "family": cfg.family,
        "sign_mode": cfg.sign_mode,
        "sign_resolution": _resolution_summary(resolution),
        "passed": failure is None,
        "failed": failure,
    }
    return _report_dict(rep, signs, extra), failure


def _resolution_summary(resolution: dict) -> dict:
    return {
        k: {"order": v["order"], "status": v["status"], "masked_fraction": v["masked_fraction"], "passes": v["passes"]}
        for k, v in sorted(resolution.items())
    }


# --- generation ------------------------------------------------------------


def run_generate(cfg: RunConfig, threads: int = 1) -> tuple[SolutionFields, dict]:
    resolution: dict = {}
    signs = choose_signs(cfg, resolution)
    out = build_outputs(cfg, signs.s_phi)
    fields = evaluate_fields(out, signs, cfg.grid, threads=threads)
    meta = {
        "family": cfg.family,
        "params": cfg.params,
        "grid": cfg.grid.to_dict(),
        "sign_mode": cfg.sign_mode,
        "signs": signs.to_dict(),
        "sign_resolution": _resolution_summary(resolution),
        "masked_fraction": fields.masked_fraction,
        "fields": "fields.csv",
    }
    return fields, meta


def write_fields_csv(fields: SolutionFields, path: Path) -> None:
    """Rows in (t, x, y) index order; floats in shortest round-trip form."""
    s = fields.samples
    ts, xs, ys = (fields.grid.points(a) for a in ("t", "x", "y"))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for i, t in enumerate(ts):
            for j, x in enumerate(xs):
                h = repr(float(s["h"][i, j]))
                for k, y in enumerate(ys):
                    w.writerow((
                        repr(float(t)), repr(float(x)), repr(float(y)),
                        repr(float(s["v"][i, j, k])), repr(float(s["u"][i, j, k])), h,
                        int(s["mask"][i, j, k]),
                    ))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(data: dict, path: Path) -> None:
    """Sorted keys, non-finite numbers as null, trailing newline."""
    Path(path).write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True, allow_nan=False) + "\n")


# --- transport -------------------------------------------------------------


def run_transport(cfg: RunConfig, dump: Optional[Path] = None) -> tuple[dict, Optional[str]]:
    """Conservation ladder; with ``dump`` the finest-dt trajectories go to that CSV."""
    tr = cfg.transport
    if tr is None:
        raise ConfigError("transport", "missing (required by the transport command)")
    signs = cfg.signs or SignConvention()
    out = build_outputs(cfg, signs.s_phi)
    fields = make_fields(out, signs)
    second = "g" if cfg.family == "rational" else "lam"
    seeds = GridSpec.from_dict({"x": tr["seeds"]["x"], second: tr["seeds"][second]})
    box = tuple(tr.get("box", (-np.inf, np.inf)))
    Hxx = _exact_hxx(cfg, out, fields)
    rep = conservation_order(
        out.G, Hxx, seeds, float(tr["t0"]), float(tr["t1"]),
        [float(d) for d in tr["dts"]], floor=float(tr.get("floor", 1e-9)), family=out.family, box=box,
    )
    if dump is not None:
        start = emit(out.G, seeds, float(tr["t0"]), out.family)
        write_trajectory_csv(trajectory(start, Hxx, float(tr["t1"]), min(map(float, tr["dts"])), box=box), dump)
    e = rep["conservation"]
    min_order = float(tr.get("min_order", 3.9))
    failure = None
    if e.status == "fitted" and e.order < min_order:
        failure = f"conservation: order {e.order:.2f} below {min_order}"
    elif e.status == "non-monotone":
        failure = "conservation: deviations do not decrease with dt"
    extra = {"family": cfg.family, "passed": failure is None, "failed": failure, "dts": [float(d) for d in tr["dts"]]}
    return _report_dict(rep, signs, extra), failure


# --- entry point -----------------------------------------------------------


def _setup_logging(out: Path) -> None:
    """Timestamped log in ``out/run.log``; data files never carry timestamps."""
    log.handlers.clear()
    log.setLevel(logging.INFO)
    log.propagate = False
    fh = logging.FileHandler(out / "run.log", mode="a")
    fh.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    log.addHandler(fh)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="benney", description="Benney moment-chain solutions and their verification.")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("generate", "reconstruct v, u, h on the configured grid"),
        ("verify", "run residual ladders and sign checks"),
        ("transport", "conservation of G along characteristics"),
    ):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True, help="JSON config file or preset name")
        s.add_argument("--out", default=".", help="output directory (default: current)")
        s.add_argument("--threads", type=int, default=1, help="worker threads for field evaluation")
        s.add_argument("--quiet", action="store_true", help="print nothing on success")
        if name == "transport":
            s.add_argument("--dump", action="store_true", help="also write trajectories.csv (finest dt)")
    return p


def _print_report(report: dict) -> None:
    print(f"{'residual':<24}{'Linf':>12}{'order':>8}  status")
    for name, e in report["residuals"].items():
        order = "-" if e["order"] is None else f"{e['order']:.2f}"
        linf = e["linf"]
        print(f"{name:<24}{linf:>12.3e}{order:>8}  {e['status']}")
    print(f"signs: s_h={report['signs']['s_h']:+d} s_phi={report['signs']['s_phi']:+d}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        print(f"error: --out: {e}", file=sys.stderr)
        return EXIT_CONFIG
    _setup_logging(out)
    log.info("command %s config %s", args.command, args.config)
    if args.threads < 1:
        print("error: --threads: must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        if args.command == "transport" and cfg.transport is None:
            raise ConfigError("transport", "missing (required by the transport command)")
    except (ConfigError, FamilyError, ex.ExprError) as e:
        log.error("config error: %s", e)
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "generate":
            fields, meta = run_generate(cfg, args.threads)
            write_fields_csv(fields, out / "fields.csv")
            write_json(meta, out / "metadata.json")
            log.info("wrote %s, masked %.4f", out / "fields.csv", meta["masked_fraction"])
            if not args.quiet:
                s = meta["signs"]
                print(f"wrote {out / 'fields.csv'} ({fields.samples['v'].size} rows), signs s_h={s['s_h']:+d} s_phi={s['s_phi']:+d}")
            return EXIT_OK
        if args.command == "verify":
            report, failure = run_verify(cfg)
            write_json(report, out / "report.json")
        else:
            report, failure = run_transport(cfg, out / "trajectories.csv" if args.dump else None)
            write_json(report, out / "transport.json")
        if not args.quiet:
            _print_report(report)
        if failure:
            log.error("verification failed: %s", failure)
            print(f"verification failed: {failure}", file=sys.stderr)
            return EXIT_VERIFY
        log.info("verification passed")
        return EXIT_OK
    except ConfigError as e:
        log.error("config error: %s", e)
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (GenerationError, DegenerateSignsError, NoConvergingSignsError, FamilyError, NumericsError, TransportError) as e:
        log.error("generation failure: %s", e)
        print(f"generation failure: {e}", file=sys.stderr)
        return EXIT_GENERATION


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
