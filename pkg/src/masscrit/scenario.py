"""Scenario configuration: INI parsing with line-aware diagnostics, validation and builders."""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .flow import FlowOptions
from .grid import ProblemParams
from .nonlinearity import (Nonlinearity, bump_family, load_table, make_g2_example, make_g2_example_planar,
                           make_profile_a, make_two_scale, min_admissible_ell, plateau_power, power,
                           profile_nonlinearity, rho_family)
from .shooting import SolverOptions
from .zeromass import ZeroMassOptions

EXPERIMENTS = ("ground-state", "scan-b", "minimize-d", "legendre", "zero-mass", "examples", "stability")
KINDS = ("power", "plateau", "bump", "rho", "profile", "two_scale", "g2_example", "tabulated")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = []
        if key:
            where.append(key)
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.key = key


@dataclass(frozen=True)
class ProblemSpec:
    N: int = 2


@dataclass(frozen=True)
class NonlinearitySpec:
    kind: str = "power"
    alpha: float = 0.0
    eps: float = 0.5
    sign: int = 1
    L: float = 2.0
    mollify_eps: float | None = None      # None: half the largest admissible value
    alpha1: float = -0.3
    alpha2: float = 0.3
    ell: float | None = None              # None: one unit above the smallest admissible shift
    rho_profile: str = "rational"
    k: float = 4.0
    table: str = ""


@dataclass(frozen=True)
class GridSpec:
    Rmax: float = 30.0
    n: int = 4096
    stretch: float = 4.0


@dataclass(frozen=True)
class Tolerances:
    rtol: float = 1e-11
    atol_rel: float = 1e-14
    bisect_rtol: float = 1e-13
    residual_tol: float = 1e-4
    gtol: float = 1e-8
    zero_band: float = 1e-3               # case classification band, relative to m1


@dataclass(frozen=True)
class ExperimentSpec:
    name: str = "ground-state"
    mu: float = 1.0
    mass: float | None = None             # None: the critical mass m1
    lambda_min: float = -6.0
    lambda_max: float = 6.0
    n_samples: int = 25
    max_iter: int = 20000
    random_seeds: int = 0                 # extra random-width Gaussian starts for minimize-d
    mu_min: float = 1e-2
    mu_max: float = 1e2
    n_mu: int = 25
    height_min: float = 1e-3
    height_max: float = 1e3
    n_heights: int = 40
    q: float | None = None                # None: q = p
    beta_cap: float = math.inf
    eps_list: tuple = (0.1, 0.03, 0.01)
    alphas: tuple = (-0.3, 0.3)
    L_list: tuple = (2.0, 8.0, 32.0)


@dataclass(frozen=True)
class Scenario:
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    nonlinearity: NonlinearitySpec = field(default_factory=NonlinearitySpec)
    grid: GridSpec = field(default_factory=GridSpec)
    tolerances: Tolerances = field(default_factory=Tolerances)
    experiment: ExperimentSpec = field(default_factory=ExperimentSpec)
    seed: int = 0

    @property
    def params(self) -> ProblemParams:
        return ProblemParams(self.problem.N)

    def with_experiment(self, name: str) -> "Scenario":
        return replace(self, experiment=replace(self.experiment, name=name))

    def refined(self) -> "Scenario":
        """Doubled grid, lambda samples and heights for convergence studies."""
        e = self.experiment
        return replace(
            self,
            grid=replace(self.grid, n=2 * self.grid.n),
            experiment=replace(e, n_samples=2 * e.n_samples - 1, n_heights=2 * e.n_heights,
                               n_mu=2 * e.n_mu - 1),
        )

    def solver_options(self) -> SolverOptions:
        t, g = self.tolerances, self.grid
        return SolverOptions(rtol=t.rtol, atol_rel=t.atol_rel, bisect_rtol=t.bisect_rtol,
                             Rmax=g.Rmax, n=g.n, stretch=g.stretch, residual_tol=t.residual_tol)

    def flow_options(self) -> FlowOptions:
        g = self.grid
        return FlowOptions(Rmax=g.Rmax, n=g.n, stretch=g.stretch, max_iter=self.experiment.max_iter,
                           gtol=self.tolerances.gtol)

    def zero_mass_options(self) -> ZeroMassOptions:
        return ZeroMassOptions(n=self.grid.n)


SECTIONS = {"problem": ProblemSpec, "nonlinearity": NonlinearitySpec, "grid": GridSpec,
            "tolerances": Tolerances, "experiment": ExperimentSpec}
_NONE_WORDS = {"", "auto", "none", "default"}


# ---------------------------------------------------------------- value conversion

def _convert(text: str, annotation: str, key: str, line: int | None):
    s = text.strip()
    try:
        if annotation == "int":
            return int(s)
        if annotation == "float":
            return float(s)
        if annotation == "float | None":
            return None if s.lower() in _NONE_WORDS else float(s)
        if annotation == "tuple":
            return tuple(float(x) for x in s.split(",") if x.strip())
        return s
    except ValueError:
        raise ConfigError(f"cannot read {s!r} as {annotation}", line, key) from None


def _format(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _line_index(text: str) -> dict:
    # (section, key) -> line number, for diagnostics
    index, section = {}, None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip().lower()
            index[(section, None)] = i
            continue
        m = re.match(r"([^=:;#\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            index[(section, m.group(1).strip().lower())] = i
    return index


def parse_scenario(text: str, source: str = "<config>") -> Scenario:
    """Build a Scenario from INI text; unknown sections or keys are errors."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str.lower
    try:
        cp.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:   # subclass of ParsingError
        raise ConfigError("key outside a section", exc.lineno) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError("malformed line", line) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ConfigError(exc.message if hasattr(exc, "message") else str(exc), exc.lineno) from None
    lines = _line_index(text)
    parts = {}
    seed = 0
    for section in cp.sections():
        sec = section.lower()
        if sec == "run":
            for key, val in cp.items(section):
                if key != "seed":
                    raise ConfigError("unknown key", lines.get((sec, key)), f"run.{key}")
                seed = _convert(val, "int", "run.seed", lines.get((sec, key)))
            continue
        if sec not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]", lines.get((sec, None)))
        cls = SECTIONS[sec]
        known = {f.name.lower(): f for f in fields(cls)}
        kw = {}
        for key, val in cp.items(section):
            line = lines.get((sec, key))
            if key not in known:
                raise ConfigError(f"unknown key (known: {', '.join(sorted(f.name for f in known.values()))})", line, f"{sec}.{key}")
            f = known[key]
            kw[f.name] = _convert(val, f.type, f"{sec}.{key}", line)
        parts[sec] = cls(**kw)
    return Scenario(**parts, seed=seed)


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", key=str(path)) from None
    return parse_scenario(text, str(path))


def scenario_to_ini(sc: Scenario) -> str:
    out = []
    for sec, cls in SECTIONS.items():
        obj = getattr(sc, sec)
        out.append(f"[{sec}]")
        for f in fields(cls):
            out.append(f"{f.name} = {_format(getattr(obj, f.name))}")
        out.append("")
    out.append("[run]")
    out.append(f"seed = {sc.seed}")
    out.append("")
    return "\n".join(out)


# ---------------------------------------------------------------- validation

@dataclass(frozen=True)
class Diagnostic:
    severity: str     # "error" or "warning"
    key: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: {self.key}: {self.message}"


def validate(sc: Scenario) -> list[Diagnostic]:
    """Static checks; nothing is computed beyond closed-form admissibility bounds."""
    d = []
    err = lambda k, m: d.append(Diagnostic("error", k, m))
    warn = lambda k, m: d.append(Diagnostic("warning", k, m))
    N = sc.problem.N
    if N < 2:
        err("problem.N", f"N = {N} is outside the supported range; dimensions N >= 2 only")
    elif N > 6:
        warn("problem.N", f"N = {N} is untested; the examples were calibrated for 2 <= N <= 4")
    nl = sc.nonlinearity
    if nl.kind not in KINDS:
        err("nonlinearity.kind", f"unknown kind {nl.kind!r}; choose from {', '.join(KINDS)}")
    if nl.kind in ("profile", "two_scale"):
        alphas = [("nonlinearity.alpha", nl.alpha)] if nl.kind == "profile" else \
                 [("nonlinearity.alpha1", nl.alpha1), ("nonlinearity.alpha2", nl.alpha2)]
        for key, a in alphas:
            if abs(a) > 0.5:
                err(key, f"|alpha| = {abs(a):g} exceeds the profile bound -1/2 <= a(s) <= 1/2")
        if not nl.L > 1:
            err("nonlinearity.L", "plateau width L must exceed 1")
        elif nl.mollify_eps is not None:
            cap = math.log((nl.L + 1) / nl.L)
            if not 0 < nl.mollify_eps <= cap:
                err("nonlinearity.mollify_eps", f"must lie in (0, log((L+1)/L)] = (0, {cap:.6g}]")
        if nl.kind == "two_scale" and nl.ell is not None and N >= 2 and nl.L > 1:
            try:
                a1 = make_profile_a(nl.alpha1 if abs(nl.alpha1) <= 0.5 else 0.0, nl.L, ProblemParams(N), nl.mollify_eps)
                a2 = make_profile_a(nl.alpha2 if abs(nl.alpha2) <= 0.5 else 0.0, nl.L, ProblemParams(N), nl.mollify_eps)
                need = min_admissible_ell(a1, a2, N)
                if nl.ell <= need:
                    err("nonlinearity.ell", f"supports overlap; ell must exceed {need:.6g}")
            except ValueError as exc:
                err("nonlinearity", str(exc))
    if nl.kind == "rho":
        if not 0 <= nl.alpha:
            warn("nonlinearity.alpha", "negative alpha gives a family without concentration")
        if nl.rho_profile not in ("rational", "gaussian"):
            err("nonlinearity.rho_profile", "choose rational or gaussian")
        if N >= 2 and not nl.k > 4 / N:
            err("nonlinearity.k", f"k must exceed 4/N = {4 / N:g} so that rho vanishes fast enough at 0")
    if nl.kind == "bump" and nl.sign not in (-1, 1):
        err("nonlinearity.sign", "sign must be +1 or -1")
    if nl.kind == "tabulated" and not nl.table:
        err("nonlinearity.table", "a tabulated nonlinearity needs a CSV path")
    if nl.kind == "g2_example" and nl.eps < 0:
        err("nonlinearity.eps", "eps must be nonnegative")
    g = sc.grid
    if not g.Rmax > 0:
        err("grid.Rmax", "must be positive")
    if g.n < 64 or g.n % 2:
        err("grid.n", "must be an even number of subintervals, at least 64")
    if not g.stretch >= 1:
        err("grid.stretch", "must be at least 1")
    t = sc.tolerances
    for k in ("rtol", "atol_rel", "bisect_rtol", "residual_tol", "gtol", "zero_band"):
        if not getattr(t, k) > 0:
            err(f"tolerances.{k}", "must be positive")
    if t.atol_rel > t.rtol:
        warn("tolerances.atol_rel", "absolute tolerance above the relative one")
    if t.rtol >= t.residual_tol:
        err("tolerances.rtol", "integrator tolerance must be below the residual tolerance")
    if t.gtol >= t.residual_tol:
        warn("tolerances.gtol", "stationarity tolerance not below the residual tolerance")
    e = sc.experiment
    if e.name not in EXPERIMENTS:
        err("experiment.name", f"unknown experiment {e.name!r}; choose from {', '.join(EXPERIMENTS)}")
    if not e.mu > 0:
        err("experiment.mu", "must be positive")
    if e.mass is not None and not e.mass > 0:
        err("experiment.mass", "must be positive")
    if e.lambda_min > -6 or e.lambda_max < 6:
        err("experiment.lambda_min", "the lambda range must cover [-6, 6]")
    if e.n_samples < 25:
        err("experiment.n_samples", "at least 25 samples are needed")
    if not 0 < e.mu_min < e.mu_max:
        err("experiment.mu_min", "need 0 < mu_min < mu_max")
    if not 0 < e.height_min < e.height_max:
        err("experiment.height_min", "need 0 < height_min < height_max")
    elif math.log10(e.height_max / e.height_min) < 6:
        err("experiment.height_max", "heights must span at least 6 decades")
    if e.max_iter < 1:
        err("experiment.max_iter", "must be positive")
    if any(b >= a for a, b in zip(e.eps_list, e.eps_list[1:])):
        err("experiment.eps_list", "must be strictly decreasing")
    if any(b <= a for a, b in zip(e.L_list, e.L_list[1:])):
        err("experiment.L_list", "must be increasing")
    if any(abs(a) > 0.5 for a in e.alphas):
        err("experiment.alphas", "profile levels must satisfy -1/2 <= alpha <= 1/2")
    if e.name == "zero-mass" or e.name == "stability":
        if nl.kind == "g2_example" and N == 2 and e.name == "stability":
            err("experiment.name", "the stability experiment uses the N >= 3 example")
    if e.name == "stability" and nl.kind != "g2_example":
        warn("nonlinearity.kind", "stability is calibrated for the g2_example family")
    if e.name == "examples" and nl.kind not in ("power", "profile", "two_scale"):
        warn("nonlinearity.kind", "examples builds its own profiles; the configured kind is ignored")
    if sc.seed < 0 or sc.seed >= 2**64:
        err("run.seed", "seed must be an unsigned 64-bit integer")
    return d


# ---------------------------------------------------------------- builders

def build_profiles(sc: Scenario):
    nl, P = sc.nonlinearity, sc.params
    a1 = make_profile_a(nl.alpha1, nl.L, P, nl.mollify_eps)
    a2 = make_profile_a(nl.alpha2, nl.L, P, nl.mollify_eps)
    return a1, a2


def two_scale_ell(sc: Scenario) -> float:
    nl = sc.nonlinearity
    if nl.ell is not None:
        return nl.ell
    a1, a2 = build_profiles(sc)
    return min_admissible_ell(a1, a2, sc.problem.N) + 1.0


def build_nonlinearity(sc: Scenario) -> Nonlinearity:
    spec, P = sc.nonlinearity, sc.params
    kind = spec.kind
    if kind == "power":
        return power(P)
    if kind == "plateau":
        return plateau_power(P, spec.alpha)
    if kind == "bump":
        return bump_family(P, spec.eps, spec.sign)
    if kind == "rho":
        return rho_family(P, spec.alpha, spec.rho_profile, spec.k)
    if kind == "profile":
        return profile_nonlinearity(make_profile_a(spec.alpha, spec.L, P, spec.mollify_eps), P)
    if kind == "two_scale":
        a1, a2 = build_profiles(sc)
        return make_two_scale(a1, a2, two_scale_ell(sc), P)
    if kind == "g2_example":
        return make_g2_example(P, spec.eps) if P.N >= 3 else make_g2_example_planar(P, spec.eps)
    if kind == "tabulated":
        return load_table(spec.table, P, spec.alpha)
    raise ConfigError(f"unknown kind {kind!r}", key="nonlinearity.kind")
