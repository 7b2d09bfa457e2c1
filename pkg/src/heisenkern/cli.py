"""Config-driven batch runner: ``heisenkern <command> --config <file> [--out <dir>]``.

Every run writes its artifacts plus ``manifest.json`` (inputs, versions,
wall time, status) into the output directory.  Exit status is 0 when every
asserted check passes, 2 when a check fails or a computation breaks down,
and 1 on usage or configuration errors.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import re
import sys
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from . import __version__
from .errors import HeisenkernError, InputError

STOCHASTIC = {"sample", "lsi-scan", "tensor-check", "distance", "cascade", "pushforward"}
COMMANDS = ("normalize", "kernel", "sample", "lsi-scan", "tensor-check", "distance",
            "cascade", "pushforward", "plot")


class ConfigError(InputError):
    pass


# ---------------------------------------------------------------------------
# value validators


def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def positive(v):
    if not _num(v) or not math.isfinite(v) or v <= 0:
        raise ValueError("must be a positive number")
    return float(v)


def positive_int(v):
    if not isinstance(v, int) or isinstance(v, bool) or v <= 0:
        raise ValueError("must be a positive integer")
    return v


def seed_value(v):
    if not isinstance(v, int) or isinstance(v, bool) or not 0 <= v < 2 ** 64:
        raise ValueError("must be an integer in [0, 2^64)")
    return v


def real(v):
    if not _num(v) or not math.isfinite(v):
        raise ValueError("must be a finite number")
    return float(v)


def boolean(v):
    if not isinstance(v, bool):
        raise ValueError("must be true or false")
    return v


def string(v):
    if not isinstance(v, str) or not v:
        raise ValueError("must be a nonempty string")
    return v


def list_of(item, min_len=1):
    def check(v):
        if not isinstance(v, list) or len(v) < min_len:
            raise ValueError(f"must be a list with at least {min_len} entries")
        return [item(x) for x in v]
    return check


def one_of(*choices):
    def check(v):
        if v not in choices:
            raise ValueError(f"must be one of {', '.join(map(str, choices))}")
        return v
    return check


def times(v):
    return [positive(v)] if _num(v) else list_of(positive)(v)


CTX_KEYS = {
    "alphas": list_of(positive),
    "n": positive_int,
    "matrix": list_of(list_of(real)),
    "matrix_file": string,
}

SCHEMAS = {
    "normalize": {"matrix": CTX_KEYS["matrix"], "matrix_file": string, "tol": positive},
    "kernel": {
        **CTX_KEYS, "t": times, "points": list_of(list_of(real)), "rel_tol": positive,
        "expected": list_of(real), "tol": positive, "profile_axis": string,
        "profile_lo": real, "profile_hi": real, "profile_count": positive_int,
        "scaling_lambdas": list_of(positive), "normalization": boolean,
        "normalization_tol": positive,
    },
    "sample": {**CTX_KEYS, "t": positive, "N": positive_int, "m": positive_int,
               "seed": seed_value, "stream": seed_value, "write_samples": boolean},
    "lsi-scan": {
        "contexts": list_of(list_of(positive)), "n_values": list_of(positive_int),
        "profiles": list_of(one_of("ones", "linear", "dyadic")), "ts": times,
        "fields": list_of(string), "N": positive_int, "m": positive_int,
        "seed": seed_value, "backend": one_of("MC", "quadrature"),
    },
    "tensor-check": {"t": positive, "N": positive_int, "m": positive_int, "seed": seed_value},
    "distance": {
        **CTX_KEYS, "targets": list_of(list_of(real)), "K": positive_int,
        "seed": seed_value, "starts": positive_int, "expected": list_of(positive),
        "tol": positive, "homogeneity_lambdas": list_of(positive),
    },
    "cascade": {"N_max": positive_int, "t": positive, "m": positive_int, "N": positive_int,
                "seed": seed_value, "alphas": list_of(positive)},
    "pushforward": {"t": positive, "N": positive_int, "m": positive_int, "seed": seed_value,
                    "alpha": positive, "alpha_control": positive,
                    "pi_alphas": list_of(positive, 2), "pi_omega_alphas": list_of(positive, 2)},
    "plot": {"artifact": string, "kind": one_of("profile", "scan", "cascade"),
             "overlay": one_of("none", "sech2")},
}


@dataclass
class ExperimentConfig:
    command: str
    values: dict
    path: Path
    text: str
    out: Path
    lines: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.values.get(key, default)

    def where(self, key):
        line = self.lines.get(key)
        return f"{self.path}:{line}" if line else str(self.path)

    def fail(self, key, message):
        raise ConfigError(f"{self.where(key)}: field {key!r}: {message}")

    def resolve(self, rel):
        p = Path(rel)
        return p if p.is_absolute() else self.path.parent / p


def _key_lines(text):
    lines = {}
    for i, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*([A-Za-z_][A-Za-z0-9_\-]*)\s*=", line)
        if m and m.group(1) not in lines:
            lines[m.group(1)] = i
    return lines


def load_config(command, path, out=None):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from exc
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    lines = _key_lines(text)
    declared = raw.pop("command", None)
    if declared is not None and command is None:
        command = declared
    if command not in SCHEMAS:
        raise ConfigError(f"{path}: unknown command {command!r}")
    out_dir = raw.pop("out", None)
    cfg = ExperimentConfig(command, {}, path, text,
                           Path(out or out_dir or path.parent / f"{command}-out"), lines)
    schema = SCHEMAS[command]
    for key, value in raw.items():
        if key not in schema:
            cfg.fail(key, f"unknown key for command {command!r}")
        try:
            cfg.values[key] = schema[key](value)
        except ValueError as exc:
            cfg.fail(key, str(exc))
    if command in STOCHASTIC and "seed" not in cfg.values:
        raise ConfigError(f"{path}: field 'seed': required for command {command!r}")
    return cfg


# ---------------------------------------------------------------------------
# artifacts


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def dumps(obj):
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


class Writer:
    """Atomic artifact writes (temp file in the target directory, then rename)."""

    def __init__(self, out):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.artifacts = []

    def write(self, name, data):
        target = self.out / name
        mode = "wb" if isinstance(data, bytes) else "w"
        fd, tmp = tempfile.mkstemp(dir=self.out, prefix=f".{name}.", suffix=".tmp")
        try:
            with os.fdopen(fd, mode) as fh:
                fh.write(data)
            os.replace(tmp, target)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        if name != "manifest.json":
            self.artifacts.append(name)
        return target

    def json(self, name, obj):
        return self.write(name, dumps(obj))


# ---------------------------------------------------------------------------
# context helpers


def build_context(cfg):
    from .group import GroupContext
    from .symplectic import normalize

    given = [k for k in CTX_KEYS if k in cfg.values]
    if len(given) > 1:
        cfg.fail(given[1], f"conflicts with {given[0]!r}; give one context description")
    if "alphas" in cfg.values:
        return GroupContext(cfg.values["alphas"])
    if "n" in cfg.values:
        return GroupContext.isotropic(cfg.values["n"])
    if "matrix" in cfg.values or "matrix_file" in cfg.values:
        return GroupContext(normalize(_load_form(cfg)).alphas)
    return GroupContext.isotropic(1)


def _load_form(cfg):
    from .symplectic import SkewForm

    try:
        if "matrix" in cfg.values:
            return SkewForm(np.array(cfg.values["matrix"], dtype=float))
        if "matrix_file" in cfg.values:
            return SkewForm.load(cfg.resolve(cfg.values["matrix_file"]))
    except InputError as exc:
        key = "matrix" if "matrix" in cfg.values else "matrix_file"
        cfg.fail(key, str(exc))
    except (OSError, ValueError) as exc:
        cfg.fail("matrix_file", f"cannot load matrix: {exc}")
    raise ConfigError(f"{cfg.path}: give 'matrix' or 'matrix_file'")


PROFILES = {
    "ones": lambda n: [1.0] * n,
    "linear": lambda n: [float(i) for i in range(1, n + 1)],
    "dyadic": lambda n: [2.0 ** -(j + 1) for j in range(n)],
}


# ---------------------------------------------------------------------------
# commands; each returns {check name: bool}


def run_normalize(cfg, w):
    from .symplectic import normalize

    form = _load_form(cfg)
    nf = normalize(form, cfg.get("tol", 1e-12))
    tol = 1e-10 * max(1.0, float(np.abs(form.matrix).max()))
    w.json("normal_form.json", {"dim": 2 * form.n, "alphas": nf.alphas, "basis": nf.basis,
                                "residual": nf.residual, "residual_tol": tol})
    return {"reconstruction": nf.residual <= tol}


def run_kernel(cfg, w):
    from .group import GroupElement
    from .heatkernel import (KernelQuery, density, density_profile, normalization_check,
                             profile_csv, scaling_check)

    ctx = build_context(cfg)
    ts = cfg.get("t", [1.0])
    rel_tol = cfg.get("rel_tol", 1e-10)
    pts = cfg.get("points", [[0.0] * ctx.dim])
    for p in pts:
        if len(p) != ctx.dim:
            cfg.fail("points", f"each point needs {ctx.dim} coordinates")
    expected = cfg.get("expected")
    if expected is not None and len(expected) != len(pts) * len(ts):
        cfg.fail("expected", "needs one value per (t, point) pair")
    tol = cfg.get("tol", 1e-8)
    checks, rows = {}, []
    for i, t in enumerate(ts):
        for j, p in enumerate(pts):
            val = density(KernelQuery(ctx, t, GroupElement.from_coords(p), rel_tol))
            row = {"t": t, "point": p, "density": val}
            if expected is not None:
                target = expected[i * len(pts) + j]
                row.update(expected=target, residual=abs(val - target), tol=tol)
                checks[f"density[{i},{j}]"] = abs(val - target) <= tol
            rows.append(row)
    report = {"alphas": list(ctx.alphas), "rel_tol": rel_tol, "values": rows}
    if "scaling_lambdas" in cfg.values:
        report["scaling"] = []
        for lam in cfg.values["scaling_lambdas"]:
            for j, p in enumerate(pts):
                r = scaling_check(ctx, ts[0], lam, p, tol=tol)
                report["scaling"].append({"lambda": lam, "point": p, **r})
                checks[f"scaling[{lam!r},{j}]"] = r["pass"]
    if cfg.get("normalization", False):
        report["normalization"] = []
        for t in ts:
            r = normalization_check(ctx, t, tol=cfg.get("normalization_tol", 1e-6))
            report["normalization"].append(r)
            checks[f"normalization[{t!r}]"] = r["pass"]
    if "profile_axis" in cfg.values:
        axis = cfg.values["profile_axis"]
        try:
            coords, vals = density_profile(
                ctx, ts[0], axis, cfg.get("profile_lo", -2.0), cfg.get("profile_hi", 2.0),
                cfg.get("profile_count", 101), rel_tol=rel_tol)
        except InputError as exc:
            cfg.fail("profile_axis", str(exc))
        w.write("profile.csv", profile_csv(coords, vals))
    w.json("kernel.json", report)
    return checks


def run_sample(cfg, w):
    from .sampler import BrownianConfig, levy_variance_check, sample_measure, v_marginal_check

    ctx = build_context(cfg)
    bc = BrownianConfig(ctx, cfg.get("t", 1.0), cfg.get("m", 2000), cfg.get("N", 100_000),
                        cfg.values["seed"], cfg.get("stream", 0))
    batch = sample_measure(bc)
    if cfg.get("write_samples", True):
        w.write("samples.csv", batch.to_csv())
    levy = levy_variance_check(batch, ctx)
    vm = v_marginal_check(batch)
    w.json("sample_report.json", {"provenance": batch.provenance, "levy_variance": levy,
                                  "v_marginals": vm})
    return {"levy_variance": levy["pass"], "v_marginals": vm["pass"]}


def run_lsi_scan(cfg, w):
    from .group import GroupContext
    from .lsi import DEFAULT_CATALOG, lsi_scan

    if "contexts" in cfg.values:
        ctxs = [GroupContext(a) for a in cfg.values["contexts"]]
    else:
        ns = cfg.get("n_values", [1, 2, 3])
        profiles = cfg.get("profiles", ["ones", "linear", "dyadic"])
        ctxs, seen = [], set()
        for prof in profiles:
            for n in ns:
                c = GroupContext(PROFILES[prof](n))
                if c.alphas not in seen:
                    seen.add(c.alphas)
                    ctxs.append(c)
    res = lsi_scan(ctxs, cfg.get("ts", [0.5, 1.0, 2.0]), cfg.get("fields", list(DEFAULT_CATALOG)),
                   N=cfg.get("N", 100_000), m=cfg.get("m", 100), seed=cfg.values["seed"],
                   backend=cfg.get("backend", "MC"))
    w.write("scan.csv", res.to_csv())
    w.json("scan_summary.json", res.summary)
    return {k: v["pass"] for k, v in res.summary["assertions"].items()}


def run_tensor(cfg, w):
    from .lsi import product_catalog, tensorization_check

    reports, checks = [], {}
    for i, (alphas, pf) in enumerate(product_catalog()):
        r = tensorization_check(alphas, cfg.get("t", 1.0), pf, N=cfg.get("N", 100_000),
                                m=cfg.get("m", 200), seed=cfg.values["seed"])
        reports.append(r)
        checks[f"tensorization[{i}]"] = r["pass"]
    w.json("tensor.json", {"reports": reports})
    return checks


def run_distance(cfg, w):
    from .ccdist import OptimizerConfig, estimate_distance, homogeneity_check

    ctx = build_context(cfg)
    targets = cfg.get("targets", [[0.0] * (ctx.dim - 1) + [1.0]])
    for p in targets:
        if len(p) != ctx.dim:
            cfg.fail("targets", f"each target needs {ctx.dim} coordinates")
    expected = cfg.get("expected")
    if expected is not None and len(expected) != len(targets):
        cfg.fail("expected", "needs one value per target")
    K, seed = cfg.get("K", 64), cfg.values["seed"]
    opt = OptimizerConfig(starts=cfg.get("starts", 8))
    rel = cfg.get("tol", 0.01)
    checks, rows = {}, []
    for i, p in enumerate(targets):
        res = estimate_distance(ctx, p, K, opt, seed)
        w.write(f"path_{i}.csv", res.path.to_csv())
        row = {"target": p, **res.report()}
        if expected is not None:
            err = abs(res.d_hat - expected[i]) / expected[i]
            row.update(expected=expected[i], rel_error=err)
            checks[f"distance[{i}]"] = err <= rel
        rows.append(row)
    report = {"alphas": list(ctx.alphas), "K": K, "seed": seed, "targets": rows}
    if "homogeneity_lambdas" in cfg.values:
        report["homogeneity"] = []
        for i, p in enumerate(targets):
            h = homogeneity_check(ctx, p, cfg.values["homogeneity_lambdas"], K, seed, cfg=opt)
            report["homogeneity"].append(h)
            checks[f"homogeneity[{i}]"] = h["pass"]
    w.json("distance.json", report)
    return checks


def run_cascade(cfg, w):
    from .sampler import projection_cascade

    N_max = cfg.get("N_max", 12)
    rows = projection_cascade(cfg.get("alphas"), N_max, cfg.get("t", 1.0), cfg.get("m", 1000),
                              cfg.get("N", 1000), cfg.values["seed"])
    gaps = [r["gap"] for r in rows]
    monotone = all(b < a for a, b in zip(gaps, gaps[1:]))
    w.write("cascade.csv", "n,gap,se\n" + "".join(
        f"{r['n']},{r['gap']!r},{r['se']!r}\n" for r in rows))
    w.json("cascade.json", {"rows": rows, "monotone": monotone, "N": cfg.get("N", 1000),
                            "m": cfg.get("m", 1000), "seed": cfg.values["seed"], "N_max": N_max})
    return {"monotone": monotone}


def run_pushforward(cfg, w):
    from .group import GroupContext
    from .sampler import pushforward_F_check, pushforward_pi_check

    t, N, m, seed = cfg.get("t", 1.0), cfg.get("N", 100_000), cfg.get("m", 200), cfg.values["seed"]
    a = cfg.get("alpha", 3.0)
    f = pushforward_F_check(a, t, N, seed, m)
    ctrl = pushforward_F_check(a, t, N, seed, m, alpha_target=cfg.get("alpha_control", 2.0))
    pa = cfg.get("pi_alphas", [1.0, 3.0])
    pi = pushforward_pi_check(GroupContext(pa), t, N, seed, m, "pi", pa)
    po = cfg.get("pi_omega_alphas", [2.0, 5.0])
    pio = pushforward_pi_check(GroupContext(po), t, N, seed, m, "pi_omega", po)
    w.json("pushforward.json", {"F": f, "F_control": ctrl, "pi": pi, "pi_omega": pio})
    return {"F": f["pass"], "F_control_detects": not ctrl["pass"], "pi": pi["pass"],
            "pi_omega": pio["pass"]}


def run_plot(cfg, w):
    from .plots import emit_plots

    src = cfg.resolve(cfg.values.get("artifact", ""))
    if not src.is_file():
        cfg.fail("artifact", f"missing artifact {src}")
    emit_plots(src, cfg.get("kind", "profile"), w, overlay=cfg.get("overlay", "none"))
    return {}


RUNNERS = {
    "normalize": run_normalize, "kernel": run_kernel, "sample": run_sample,
    "lsi-scan": run_lsi_scan, "tensor-check": run_tensor, "distance": run_distance,
    "cascade": run_cascade, "pushforward": run_pushforward, "plot": run_plot,
}


def _versions():
    import scipy

    return {"heisenkern": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def run(command, config_path, out=None):
    """Run one experiment; returns the exit status."""
    try:
        cfg = load_config(command, config_path, out)
        w = Writer(cfg.out)
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: cannot create output directory: {exc}", file=sys.stderr)
        return 1
    manifest = {
        "command": cfg.command, "config": cfg.values, "config_file": str(cfg.path),
        "config_sha256": hashlib.sha256(cfg.text.encode()).hexdigest(),
        "versions": _versions(), "seed": cfg.get("seed"),
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    start = time.perf_counter()
    status, code, checks = "ok", 0, {}
    try:
        checks = RUNNERS[cfg.command](cfg, w)
        if not all(checks.values()):
            status, code = "check_failed", 2
    except (ConfigError, InputError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        status, code = "failed", 1
        manifest["error"] = str(exc)
    except HeisenkernError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        status, code = "failed", 2
        manifest["error"] = f"{type(exc).__name__}: {exc}"
    manifest.update(status=status, checks=checks, artifacts=list(w.artifacts),
                    wall_time=time.perf_counter() - start)
    w.json("manifest.json", manifest)
    for name, ok in checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def main(argv=None):
    parser = _Parser(prog="heisenkern", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="TOML experiment file")
    parser.add_argument("--out", help="output directory (default: <config dir>/<command>-out)")
    args = parser.parse_args(argv)
    return run(args.command, args.config, args.out)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
