"""Config-driven runs with a JSON manifest, CSV tables and small SVG plots.

    semiwave [command] --config run.ini [--out DIR] [--seed N] [--workers N]

The config is INI-style: a [run] section naming the command, plus one
section per block the command reads. Unknown sections or keys are errors.
Exit codes: 0 all assertions pass, 1 an assertion failed, 2 configuration
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import copy
import csv
import io
import json
import math
import os
import re
import sys
import tempfile
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .birthfuncs import constant_table, lipschitz_global, mackey_glass, nicholson
from .charspec import (
    LinearCoefficients,
    check_gauss_bounds,
    decay_amplitude,
    gamma0_solve,
    gamma_root,
    log_asymptotics_ratio,
    sigma_root,
    speed_data,
    speed_threshold,
)
from .errors import ConfigError, DomainError, InvalidInputError, NumericalError, SemiwaveError
from .halanay import ScalarDDE, check_halanay, check_halanay_many, halanay_bound, integrate_dde
from .linsolve import HistoryField, verify_asymptotic_profile, verify_decay
from .mol import GridSpec

COMMANDS = ("roots", "halanay", "model", "linear", "profile", "stability", "sweep")

EXIT_OK, EXIT_ASSERT, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

FLOAT, INT, STR, FLOATS = "float", "int", "str", "floats"

SCHEMA = {
    "run": {"command": STR, "seed": INT, "workers": INT},
    "model": {"family": STR, "p": FLOAT, "delta": FLOAT, "a": FLOAT, "b": FLOAT, "n": FLOAT, "d": FLOAT},
    "roots": {"p": FLOAT, "q": FLOAT, "h": FLOAT, "m": FLOAT, "zeta_max": FLOAT, "n_zeta": INT, "C_u0": FLOAT,
              "L": FLOAT, "c": FLOAT, "L_I": FLOAT, "lambda_c": STR},
    "halanay": {
        "n_cases": INT, "steps_per_delay": INT, "t_end_delays": FLOAT, "rtol": FLOAT, "h_min": FLOAT,
        "h_max": FLOAT, "sigma_re_min": FLOAT, "sigma_re_max": FLOAT, "sigma_im_max": FLOAT, "k_max": FLOAT,
        "sigma_re": FLOAT, "sigma_im": FLOAT, "k_re": FLOAT, "k_im": FLOAT, "h": FLOAT, "t_end": FLOAT,
        "history": STR,
    },
    "linear": {
        "m": FLOAT, "p": FLOAT, "q": FLOAT, "d": FLOAT, "h": FLOAT, "width": FLOAT, "n": INT, "T": FLOAT,
        "backend": STR, "datum": STR, "sample_every": FLOAT, "n_delay": INT, "rate_tol": FLOAT,
        "power_tol": FLOAT, "profile_times": FLOATS, "profile_probes": FLOATS, "profile_tol": FLOAT,
    },
    "profile": {"h": FLOAT, "c": FLOAT, "c_offset": FLOAT, "dx": FLOAT, "z_max": FLOAT, "relax_time": FLOAT,
                "lambda_c": STR},
    "stability": {
        "experiment": STR, "h": FLOAT, "c": FLOAT, "c_offset": FLOAT, "q_amp": FLOAT, "b": FLOAT,
        "shape": STR, "center": FLOAT, "width": FLOAT, "T": FLOAT, "out_every": FLOAT, "lambda_c": STR,
        "dx": FLOAT, "z_max": FLOAT,
    },
    "sweep": {"target": STR, "param": STR, "start": FLOAT, "stop": FLOAT, "num": INT},
}

NEEDS = {
    "roots": ("roots",),
    "halanay": ("halanay",),
    "model": ("model",),
    "linear": ("linear",),
    "profile": ("model", "profile"),
    "stability": ("model", "stability"),
    "sweep": ("sweep",),
}


# --------------------------------------------------------------------------- #
# Config
# --------------------------------------------------------------------------- #


@dataclass
class RunConfig:
    command: str
    sections: dict  # section -> {key: typed value}
    lines: dict  # (section, key) -> line number
    seed: int = 0
    workers: int = 1

    def block(self, name: str) -> dict:
        return self.sections.get(name, {})

    def echo(self) -> dict:
        return {s: dict(v) for s, v in self.sections.items()}


_KEY_RE = re.compile(r"^\s*([^=:#;\s\[][^=:]*?)\s*[=:]")
_SEC_RE = re.compile(r"^\s*\[([^\]]+)\]")


def _line_numbers(text: str) -> dict:
    out, sec = {}, None
    for i, line in enumerate(text.splitlines(), 1):
        m = _SEC_RE.match(line)
        if m:
            sec = m.group(1).strip()
            out[(sec, None)] = i
            continue
        m = _KEY_RE.match(line)
        if m and sec is not None:
            out[(sec, m.group(1).strip())] = i
    return out


def _convert(kind: str, raw: str, where: str, lineno):
    try:
        if kind == FLOAT:
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        if kind == INT:
            return int(raw)
        if kind == FLOATS:
            return [float(x) for x in raw.replace(",", " ").split()]
        return raw.strip()
    except ValueError:
        raise ConfigError(f"{where}: expected {kind}, got {raw!r}", lineno) from None


def parse_config(text: str, command: str | None = None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, strict=True, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside of any [section]", exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise ConfigError(f"cannot parse {exc.errors[0][1].strip() if exc.errors else ''!r}", lineno) from None
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ConfigError(str(exc).split(": ", 1)[-1], getattr(exc, "lineno", None)) from None
    lines = _line_numbers(text)
    sections = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]", lines.get((sec, None)))
        typed = {}
        for key, raw in cp.items(sec):
            ln = lines.get((sec, key))
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]", ln)
            typed[key] = _convert(SCHEMA[sec][key], raw, f"[{sec}] {key}", ln)
        sections[sec] = typed
    run = sections.get("run", {})
    cmd = run.get("command")
    if command is not None and cmd is not None and command != cmd:
        raise ConfigError(f"command line asks for {command!r} but the config names {cmd!r}",
                          lines.get(("run", "command")))
    cmd = command or cmd
    if cmd is None:
        raise ConfigError("no command given (positional argument or [run] command)")
    if cmd not in COMMANDS:
        raise ConfigError(f"unknown command {cmd!r}", lines.get(("run", "command")))
    needed = list(NEEDS[cmd])
    if cmd == "sweep":
        target = sections.get("sweep", {}).get("target")
        if target not in ("linear", "stability", "profile", "roots"):
            raise ConfigError(f"sweep target must be linear, stability, profile or roots, got {target!r}",
                              lines.get(("sweep", "target")))
        needed += list(NEEDS[target])
    for sec in needed:
        if sec not in sections:
            raise ConfigError(f"command {cmd!r} needs a [{sec}] section")
    return RunConfig(cmd, sections, lines, seed=run.get("seed", 0), workers=run.get("workers", 1))


def load_config(path: str, command: str | None = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, command)


# --------------------------------------------------------------------------- #
# Results
# --------------------------------------------------------------------------- #


@dataclass
class Result:
    constants: dict = field(default_factory=dict)
    assertions: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)  # name -> (header, rows)
    plots: dict = field(default_factory=dict)  # name -> svg text
    summary: dict = field(default_factory=dict)  # headline numbers for sweeps

    def check(self, name: str, value, op: str, threshold) -> bool:
        value = float(value)
        threshold = float(threshold)
        ok = {"<=": value <= threshold, "<": value < threshold, ">=": value >= threshold,
              ">": value > threshold, "==": value == threshold}[op]
        margin = threshold - value if op in ("<=", "<") else value - threshold
        self.assertions.append({"name": name, "passed": bool(ok), "value": value, "op": op,
                                "threshold": threshold, "margin": margin})
        return ok

    def flag(self, name: str, ok: bool, detail: str = ""):
        self.assertions.append({"name": name, "passed": bool(ok), "value": detail, "op": "is",
                                "threshold": "true", "margin": None})

    @property
    def passed(self) -> bool:
        return all(a["passed"] for a in self.assertions)


def _clean(obj):
    """JSON-safe copy (numpy scalars and arrays, non-finite floats as strings)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dump_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _atomic_write(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


def svg_plot(series, title: str = "", logy: bool = False, width: int = 640, height: int = 400) -> str:
    """Minimal line plot; ``series`` is a list of (label, x, y)."""
    pad = 50
    xs = np.concatenate([np.asarray(s[1], dtype=float) for s in series])
    ys = np.concatenate([np.asarray(s[2], dtype=float) for s in series])
    if logy:
        ys = np.log10(ys[ys > 0]) if np.any(ys > 0) else np.array([0.0])
    ys = ys[np.isfinite(ys)]
    x0, x1 = float(np.min(xs)), float(np.max(xs))
    y0, y1 = (float(np.min(ys)), float(np.max(ys))) if ys.size else (0.0, 1.0)
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0
    colors = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
           f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
           'fill="none" stroke="black"/>',
           f'<text x="{width / 2}" y="{pad / 2}" text-anchor="middle" font-size="14">{title}</text>',
           f'<text x="{pad}" y="{height - pad / 3}" font-size="11">{x0:.4g}</text>',
           f'<text x="{width - pad}" y="{height - pad / 3}" font-size="11" text-anchor="end">{x1:.4g}</text>',
           f'<text x="4" y="{height - pad}" font-size="11">{("1e" if logy else "")}{y0:.3g}</text>',
           f'<text x="4" y="{pad + 4}" font-size="11">{("1e" if logy else "")}{y1:.3g}</text>']
    for j, (label, x, y) in enumerate(series):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if logy:
            keep = y > 0
            x, y = x[keep], np.log10(y[keep])
        keep = np.isfinite(y)
        x, y = x[keep], y[keep]
        if x.size > 2000:
            idx = np.linspace(0, x.size - 1, 2000).astype(int)
            x, y = x[idx], y[idx]
        px = pad + (x - x0) / (x1 - x0) * (width - 2 * pad)
        py = height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
        col = colors[j % len(colors)]
        out.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{width - pad - 4}" y="{pad + 16 * (j + 1)}" font-size="11" '
                   f'text-anchor="end" fill="{col}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------- #
# Commands
# --------------------------------------------------------------------------- #


def build_model(block: dict):
    fam = block.get("family", "nicholson").lower()
    if fam == "nicholson":
        if "p" not in block:
            raise ConfigError("[model] nicholson needs p")
        return nicholson(block["p"], block.get("delta", 1.0))
    if fam in ("mackey_glass", "mackey-glass", "mg"):
        missing = [k for k in ("a", "b", "n") if k not in block]
        if missing:
            raise ConfigError(f"[model] mackey_glass needs {', '.join(missing)}")
        return mackey_glass(block["a"], block["b"], block["n"], block.get("d", 1.0))
    raise ConfigError(f"[model] unknown family {fam!r}")


def cmd_roots(cfg: RunConfig, rng) -> Result:
    b = cfg.block("roots")
    co = LinearCoefficients(m=b.get("m", 0.0), p=b.get("p", -2.0), q=b.get("q", 1.0), h=b.get("h", 1.0))
    env = gamma_root(co)
    res = Result()
    res.constants.update(gamma=env.gamma, eps_h=env.eps_h, sigma=sigma_root(co), p=co.p, q=co.q, h=co.h)
    amp = decay_amplitude(co, b.get("C_u0", 1.0))
    res.constants.update(A0_proof=amp.proof, A0_stated=amp.stated)
    if "L" in b:
        res.constants["c_threshold"] = speed_threshold(b["L"], co.h)
        if "c" in b:
            sd = speed_data(b["c"], b["L"], co.h, b.get("lambda_c", "lambda1"))
            res.constants.update(c=sd.c, lambda1=sd.lambda1, lambda2=sd.lambda2, lambda_c=sd.lambda_c)
            if "L_I" in b:
                res.constants["gamma0"] = gamma0_solve(sd, b["L"], b["L_I"])
    zmax = b.get("zeta_max", 100.0)
    zetas = np.linspace(0.0, zmax, b.get("n_zeta", 200))
    rep = check_gauss_bounds(co, zetas)
    res.check("gauss_bounds_violations", len(rep.violations), "==", 0)
    if co.q > 0:
        ratio = log_asymptotics_ratio(co, 1e4)
        res.constants["lambda_over_log_zeta_1e4"] = ratio
        res.check("log_asymptotics_rel_error", abs(ratio * co.h / -2.0 - 1.0), "<=", 0.03)
    res.tables["lambda_zeta"] = (["zeta", "lambda", "lower", "upper"],
                                 list(zip(zetas, rep.lam, env.lower(zetas), env.upper(zetas))))
    res.plots["lambda_zeta"] = svg_plot([("lambda", zetas, rep.lam), ("lower", zetas, env.lower(zetas)),
                                         ("upper", zetas, env.upper(zetas))], "lambda(zeta)")
    res.summary = {"fitted_rate": env.gamma, "predicted": env.gamma}
    return res


def _halanay_cases(b: dict, rng):
    n = b.get("n_cases", 1000)
    spd = b.get("steps_per_delay", 32)
    td = b.get("t_end_delays", 8.0)
    h = rng.uniform(b.get("h_min", 0.1), b.get("h_max", 2.0), n)
    sre = rng.uniform(b.get("sigma_re_min", -4.0), b.get("sigma_re_max", 1.0), n)
    sim = rng.uniform(-1.0, 1.0, n) * b.get("sigma_im_max", 5.0)
    kmod = rng.uniform(0.0, b.get("k_max", 3.0), n)
    karg = rng.uniform(-np.pi, np.pi, n)
    coef = rng.normal(size=(n, 3)) + 1j * rng.normal(size=(n, 3))
    freq = rng.uniform(0.0, 6.0, n)
    cases = []
    for i in range(n):
        c0, c1, c2 = coef[i]
        hist = np.linspace(-h[i], 0.0, spd + 1)
        hist = c0 + c1 * np.cos(freq[i] * hist / h[i]) + c2 * hist / h[i]
        cases.append(ScalarDDE(complex(sre[i], sim[i]), kmod[i] * np.exp(1j * karg[i]), float(h[i]), hist,
                               t_end=td * float(h[i]), dt=float(h[i]) / spd))
    return cases


def _halanay_chunk(cases, rtol):
    return [r.as_dict() for r in check_halanay_many(cases, rtol)]


CHUNK = 100


HISTORY_PRESETS = {
    "constant": lambda s, h: np.ones_like(s),
    "cosine": lambda s, h: np.cos(2.0 * np.pi * s / h),
    "linear": lambda s, h: 1.0 + s / h,
}


def _halanay_single(b: dict) -> Result:
    h = b.get("h", 1.0)
    spd = b.get("steps_per_delay", 32)
    kind = b.get("history", "constant")
    if kind not in HISTORY_PRESETS:
        raise ConfigError(f"[halanay] history must be one of {sorted(HISTORY_PRESETS)}, got {kind!r}")
    s = np.linspace(-h, 0.0, spd + 1)
    p = ScalarDDE(complex(b["sigma_re"], b.get("sigma_im", 0.0)), complex(b.get("k_re", 0.0), b.get("k_im", 0.0)),
                  h, HISTORY_PRESETS[kind](s, h).astype(complex), t_end=b.get("t_end", 8.0 * h), dt=h / spd)
    tr = integrate_dde(p)
    rep = check_halanay(p, b.get("rtol", 1e-6))
    res = Result(constants=rep.as_dict())
    res.check("halanay_worst_ratio", rep.worst_ratio, "<=", 1.0 + b.get("rtol", 1e-6))
    bound = halanay_bound(rep.lam, h, rep.sup_history, tr.times)
    res.tables["trajectory"] = (["t", "re", "im", "abs", "bound"],
                                list(zip(tr.times, tr.values.real, tr.values.imag, np.abs(tr.values), bound)))
    res.plots["trajectory"] = svg_plot([("|r(t)|", tr.times, np.abs(tr.values)), ("bound", tr.times, bound)],
                                       "scalar delay equation", logy=True)
    return res


def cmd_halanay(cfg: RunConfig, rng, workers: int = 1) -> Result:
    b = cfg.block("halanay")
    if "sigma_re" in b:
        return _halanay_single(b)
    rtol = b.get("rtol", 1e-6)
    cases = _halanay_cases(b, rng)
    chunks = [cases[i : i + CHUNK] for i in range(0, len(cases), CHUNK)]
    reports = []
    for out in _map(_halanay_chunk, [(ch, rtol) for ch in chunks], workers):
        reports.extend(out)
    res = Result()
    n_fail = sum(not r["passed"] for r in reports)
    n_literal = sum(not r["literal_passed"] for r in reports)
    res.constants.update(n_cases=len(cases), failures=n_fail, literal_prefactor_failures=n_literal,
                         worst_ratio=max(r["worst_ratio"] for r in reports))
    res.check("halanay_failures", n_fail, "==", 0)
    rows = [(i, p.sigma.real, p.sigma.imag, complex(p.k).real, complex(p.k).imag, p.h, r["lam"], r["worst_ratio"],
             int(r["passed"]), int(r["literal_passed"])) for i, (p, r) in enumerate(zip(cases, reports))]
    res.tables["halanay"] = (["case", "sigma_re", "sigma_im", "k_re", "k_im", "h", "lambda", "worst_ratio",
                              "passed", "literal_passed"], rows)
    return res


def _map(fn, argtuples, workers: int):
    """Ordered map, in a process pool when workers > 1."""
    if workers <= 1 or len(argtuples) <= 1:
        return [fn(*a) for a in argtuples]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futs = [ex.submit(fn, *a) for a in argtuples]
        return [f.result() for f in futs]


def cmd_model(cfg: RunConfig, rng) -> Result:
    bf = build_model(cfg.block("model"))
    h = cfg.block("profile").get("h", cfg.block("stability").get("h", 1.0))
    table = constant_table(bf, h)
    table["scale"] = bf.scale
    res = Result(constants=table)
    res.flag("condition_M", table["passes_M"], "; ".join(table["M_reasons"]))
    if table["passes_M"]:
        res.flag("B1_B4", not table["B_violations"], "; ".join(table["B_violations"]))
    return res


def _datum(kind: str, grid: GridSpec):
    x = grid.x
    if kind == "gaussian":
        return np.exp(-x * x) / math.sqrt(math.pi)
    if kind == "box":
        u = (np.abs(x) <= 0.5).astype(float)
        return u / (np.sum(u) * grid.dx)
    raise ConfigError(f"[linear] unknown datum {kind!r} (gaussian or box)")


def cmd_linear(cfg: RunConfig, rng) -> Result:
    b = cfg.block("linear")
    co = LinearCoefficients(m=b.get("m", 0.0), p=b.get("p", -2.0), q=b.get("q", 1.0), d=b.get("d", 0.0),
                            h=b.get("h", 1.0))
    backend = b.get("backend", "spectral")
    grid = GridSpec.centered(b.get("width", 160.0), b.get("n", 2048), periodic=True)
    u0 = _datum(b.get("datum", "gaussian"), grid)
    N = b.get("n_delay", 64)
    init = HistoryField.constant(grid, co.h, N, u0)
    T = b.get("T", 40.0)
    rep = verify_decay(co, grid, init, T, backend=backend, sample_every=b.get("sample_every", 0.1))
    res = Result()
    res.constants.update(gamma=rep.gamma, eps_h=rep.eps_h, A0_proof=rep.A0_proof, A0_stated=rep.A0_stated,
                         C_u0=rep.C_u0, fit_rate=rep.fit.rate, fit_power=rep.fit.power)
    res.check("decay_bound_violations", len(rep.violations), "==", 0)
    if rep.gamma < -1e-9:
        res.check("rate_rel_error", abs(rep.fit.rate / rep.gamma - 1.0), "<=", b.get("rate_tol", 0.05))
        res.check("power_error", rep.power_error, "<=", b.get("power_tol", 0.1))
    else:
        res.check("rate_abs", abs(rep.fit.rate), "<=", b.get("rate_tol", 0.02))
        res.check("power_error", rep.power_error, "<=", b.get("power_tol", 0.15))
    res.tables["decay"] = (["t", "sup", "mass", "bound"], list(zip(rep.times, rep.sup, rep.mass, rep.bound)))
    keep = rep.times > 0.5 * co.h
    res.plots["decay"] = svg_plot([("sup|u|", rep.times[keep], rep.sup[keep]),
                                   ("bound", rep.times[keep], rep.bound[keep])], "sup-norm decay", logy=True)
    if "profile_times" in b:
        probes = b.get("profile_probes", [-2.0, -1.0, 0.0, 1.0, 2.0])
        pr = verify_asymptotic_profile(co, grid, u0, b["profile_times"], n_delay=N, probes=probes, backend=backend)
        res.constants.update(profile_rel_error=pr.rel_error, profile_times=pr.times)
        res.check("profile_rel_error_last", pr.rel_error[-1], "<=", b.get("profile_tol", 0.05))
        res.flag("profile_error_decreasing", pr.decreasing, str(pr.rel_error.tolist()))
    res.summary = {"fitted_rate": rep.fit.rate, "predicted": rep.gamma}
    return res


def _speed(block: dict, bf, h: float) -> float:
    if "c" in block:
        return block["c"]
    return speed_threshold(lipschitz_global(bf), h) + block.get("c_offset", 0.5)


def cmd_profile(cfg: RunConfig, rng) -> Result:
    from .rdwave import compute_profile

    bf = build_model(cfg.block("model"))
    b = cfg.block("profile")
    h = b.get("h", 1.0)
    c = _speed(b, bf, h)
    prof = compute_profile(bf, c, h, dx0=b.get("dx", 0.1), z_max=b.get("z_max", 60.0),
                           relax_time=b.get("relax_time", 30.0), lambda_c=b.get("lambda_c", "lambda1"))
    res = Result(constants=prof.summary())
    res.flag("converged", prof.converged, f"change {prof.change:.3e}")
    res.check("profile_residual", prof.residual, "<", 1e-6)
    res.check("left_tail_max_over_kappa", prof.left_tail_max / prof.kappa, "<", 1e-8)
    res.tables["profile"] = (["z", "psi"], list(zip(prof.z, prof.psi)))
    res.plots["profile"] = svg_plot([("psi", prof.z, prof.psi)], f"profile c={c:.4g}")
    res.summary = {"fitted_rate": prof.change, "predicted": 0.0}
    return res


def cmd_stability(cfg: RunConfig, rng) -> Result:
    from .rdwave import (
        PerturbationSpec,
        compute_profile,
        experiment_global_stability,
        experiment_leading_edge,
    )

    bf = build_model(cfg.block("model"))
    b = cfg.block("stability")
    h = b.get("h", 1.0)
    c = _speed(b, bf, h)
    kind = b.get("experiment", "global")
    T = b.get("T", 20.0)
    prof = compute_profile(bf, c, h, dx0=b.get("dx", 0.1), z_max=b.get("z_max", 60.0))
    try:
        pert = PerturbationSpec(b.get("q_amp", 0.1), b.get("b", 5.0), b.get("shape", "compact_bump"),
                                center=b.get("center"), width=b.get("width", 2.0))
    except ValueError:
        raise ConfigError(f"[stability] unknown shape {b.get('shape')!r}", cfg.lines.get(("stability", "shape")))
    res = Result()
    res.constants["profile"] = prof.summary()
    every = b.get("out_every", 0.1)
    if kind == "leading_edge":
        rep = experiment_leading_edge(prof.problem(bf), pert, T, lambda_c=b.get("lambda_c", "lambda1"),
                                      out_every=every)
        res.constants.update(rep.summary())
        res.check("majorization_violations", rep.violations, "==", 0)
        if rep.fit is not None:
            res.check("weighted_rate_minus_gamma", rep.fit.rate - rep.gamma, "<=", 0.05)
        res.tables["leading_edge"] = (["t", "weighted_D", "majorant_sup"],
                                      list(zip(rep.times, rep.weighted_sup, rep.majorant_sup)))
        res.plots["leading_edge"] = svg_plot([("xi|v-psi|", rep.times, rep.weighted_sup),
                                              ("sup u", rep.times, rep.majorant_sup)], "leading edge", logy=True)
        res.summary = {"fitted_rate": None if rep.fit is None else rep.fit.rate, "predicted": rep.gamma}
    elif kind == "global":
        rep = experiment_global_stability(prof.problem(bf), pert, T, lambda_c=b.get("lambda_c", "peak"),
                                          out_every=every, profile=prof)
        res.constants.update(rep.summary())
        res.check("envelope_violations", len(rep.violations), "==", 0)
        if rep.gamma0 > 0:
            res.flag("tail_rate_le_minus_0.9_gamma0", rep.rate_ok, f"fit {rep.fit_rate} vs gamma0 {rep.gamma0}")
        res.flag("profile_range_in_I_K", rep.range_check.get("passed", False), str(rep.range_check))
        res.tables["stability"] = (["t", "D", "weighted_D", "envelope"],
                                   list(zip(rep.times, rep.D, rep.weighted_D, rep.envelope)))
        res.plots["stability"] = svg_plot([("D(t)", rep.times, rep.D), ("C q e^{-g0 t}", rep.times, rep.envelope)],
                                          "global stability", logy=True)
        res.summary = {"fitted_rate": rep.fit_rate, "predicted": -rep.gamma0}
    else:
        raise ConfigError(f"[stability] experiment must be leading_edge or global, got {kind!r}",
                          cfg.lines.get(("stability", "experiment")))
    return res


RUNNERS = {
    "roots": cmd_roots,
    "model": cmd_model,
    "linear": cmd_linear,
    "profile": cmd_profile,
    "stability": cmd_stability,
}


def _sweep_point(cfg: RunConfig, index: int):
    rng = np.random.default_rng([cfg.seed, index])
    try:
        res = RUNNERS[cfg.command](cfg, rng)
        return {"ok": True, "summary": res.summary, "assertions": res.assertions, "passed": res.passed}
    except (SemiwaveError, ValueError) as exc:
        return {"ok": False, "error": f"{type(exc).__name__}: {exc}", "summary": {}, "assertions": [],
                "passed": False}


def cmd_sweep(cfg: RunConfig, rng, workers: int = 1) -> Result:
    b = cfg.block("sweep")
    target = b["target"]
    param = b.get("param")
    if param is None or param not in SCHEMA[target] or SCHEMA[target][param] != FLOAT:
        raise ConfigError(f"[sweep] param must be a numeric key of [{target}], got {param!r}",
                          cfg.lines.get(("sweep", "param")))
    num = b.get("num", 10)
    if num < 1:
        raise ConfigError("[sweep] num must be >= 1", cfg.lines.get(("sweep", "num")))
    values = np.linspace(b["start"], b["stop"], num) if num > 1 else np.array([b["start"]])
    jobs = []
    for i, v in enumerate(values):
        sub = copy.deepcopy(cfg)
        sub.command = target
        sub.sections.setdefault(target, {})[param] = float(v)
        jobs.append((sub, i))
    outs = _map(_sweep_point, jobs, workers)
    res = Result()
    rows = []
    for i, (v, o) in enumerate(zip(values, outs)):
        s = o["summary"]
        rows.append((i, float(v), s.get("fitted_rate"), s.get("predicted"), "pass" if o["passed"] else "fail"))
        for a in o["assertions"]:
            res.assertions.append(dict(a, name=f"point{i}:{a['name']}"))
        if not o["ok"]:
            res.assertions.append({"name": f"point{i}:error", "passed": False, "value": o["error"], "op": "is",
                                   "threshold": "no error", "margin": None})
    res.constants.update(target=target, param=param, values=values)
    res.tables["sweep"] = (["index", param, "fitted_rate", "predicted", "verdict"],
                           [tuple("" if x is None else x for x in r) for r in rows])
    return res


# --------------------------------------------------------------------------- #
# Driver
# --------------------------------------------------------------------------- #


def execute(cfg: RunConfig, out_dir: str, workers: int = 1) -> int:
    """Run ``cfg`` and write artifacts; returns the exit code."""
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.perf_counter()
    manifest = {"version": __version__, "command": cfg.command, "seed": cfg.seed, "workers": workers,
                "config": cfg.echo(), "constants": {}, "assertions": [], "artifacts": [], "status": "error"}
    code = EXIT_NUMERIC
    try:
        rng = np.random.default_rng(cfg.seed)
        if cfg.command == "halanay":
            res = cmd_halanay(cfg, rng, workers)
        elif cfg.command == "sweep":
            res = cmd_sweep(cfg, rng, workers)
        else:
            res = RUNNERS[cfg.command](cfg, rng)
        arts = []
        for name, (header, rows) in res.tables.items():
            _atomic_write(os.path.join(out_dir, f"{name}.csv"), _csv_text(header, rows))
            arts.append(f"{name}.csv")
        for name, svg in res.plots.items():
            _atomic_write(os.path.join(out_dir, f"{name}.svg"), svg)
            arts.append(f"{name}.svg")
        results = {"command": cfg.command, "constants": res.constants, "assertions": res.assertions,
                   "passed": res.passed}
        _atomic_write(os.path.join(out_dir, "results.json"), _dump_json(results))
        arts.append("results.json")
        manifest.update(constants=res.constants, assertions=res.assertions, artifacts=arts,
                        status="pass" if res.passed else "fail")
        code = EXIT_OK if res.passed else EXIT_ASSERT
    except (ConfigError, InvalidInputError, DomainError) as exc:
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        code = EXIT_CONFIG
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        manifest["error"] = f"{type(exc).__name__} in {_origin(exc)}: {exc}"
        if getattr(exc, "last_time", None) is not None:
            manifest["last_valid_time"] = exc.last_time
        code = EXIT_NUMERIC
    except Exception as exc:  # still leave a manifest behind
        manifest["error"] = f"{type(exc).__name__}: {exc}"
        manifest["traceback"] = traceback.format_exc()
        code = EXIT_NUMERIC
    finally:
        manifest["wall_clock_s"] = time.perf_counter() - t0
        manifest["exit_code"] = code
        _atomic_write(os.path.join(out_dir, "run.json"), _dump_json(manifest))
    return code


def _origin(exc: BaseException) -> str:
    """Innermost semiwave module on the traceback, e.g. 'semiwave.rdwave'."""
    mod = "semiwave"
    for frame in traceback.extract_tb(exc.__traceback__):
        parts = os.path.normpath(frame.filename).split(os.sep)
        if "semiwave" in parts[:-1]:
            mod = "semiwave." + os.path.splitext(parts[-1])[0]
    return mod


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="semiwave", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", nargs="?", choices=COMMANDS, help="overrides/asserts [run] command")
    ap.add_argument("--config", required=True, help="INI config file")
    ap.add_argument("--out", default="out", help="output directory (default ./out)")
    ap.add_argument("--seed", type=int, default=None, help="RNG seed (overrides [run] seed)")
    ap.add_argument("--workers", type=int, default=None, help="worker processes for sweeps and suites")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.command)
    except ConfigError as exc:
        print(f"semiwave: config error: {exc}", file=sys.stderr)
        os.makedirs(args.out, exist_ok=True)
        _atomic_write(os.path.join(args.out, "run.json"),
                      _dump_json({"version": __version__, "status": "error", "error": str(exc),
                                  "exit_code": EXIT_CONFIG, "config_path": args.config}))
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.seed = args.seed
    workers = args.workers if args.workers is not None else cfg.workers
    if workers < 1:
        print("semiwave: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    code = execute(cfg, args.out, workers)
    with open(os.path.join(args.out, "run.json"), encoding="utf-8") as fh:
        man = json.load(fh)
    for a in man.get("assertions", []):
        print(f"{'PASS' if a['passed'] else 'FAIL'}  {a['name']}: {a['value']} {a['op']} {a['threshold']}")
    if "error" in man:
        print(f"semiwave: {man['error']}", file=sys.stderr)
    print(f"exit {code}; artifacts in {args.out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
