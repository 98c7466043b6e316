"""INI-style run configuration with line-numbered diagnostics.

Sections: ``[experiment]``, ``[arms]``, one ``[policy.<label>]`` per policy,
``[certify]``, ``[replay]`` and ``[synthetic]``. Lists are comma separated;
integer ranges may be written ``lo..hi`` (inclusive).
"""
from __future__ import annotations

import configparser
import hashlib
import os
import re
from dataclasses import dataclass, fields, replace
from importlib import resources

from .errors import ConfigError, RmpmabError
from .policies import DEFAULT_EPSILON, DEFAULT_UCB_C, PolicySpec
from .replay import SyntheticSpec
from .simulator import ExperimentConfig, ParamSampler

PROFILE_ENV = "RMPMAB_PROFILE_DIR"


@dataclass(frozen=True)
class CertifyConfig:
    processes: int = 10
    alpha: float = 0.2
    beta: float = 0.3
    gammas: tuple = (0.3, 0.5, 0.9)
    js: tuple = tuple(range(11))
    ms: tuple = tuple(range(11))
    max_delay: int = 400
    tol: float = 1e-9
    threshold: float = 1e-4

    def __post_init__(self):
        for g in self.gammas:
            if not 0.0 <= g < 1.0:
                raise ConfigError(f"discount factor must lie in [0, 1), got {g!r}", key="gammas")
        if self.max_delay < 1:
            raise ConfigError("max_delay must be positive", key="max_delay")
        for j in self.js:
            if not 0 <= j <= self.processes:
                raise ConfigError(f"j={j} outside [0, {self.processes}]", key="j")
        for m in self.ms:
            if not 0 <= m <= self.max_delay:
                raise ConfigError(f"m={m} outside [0, {self.max_delay}]", key="m")


@dataclass(frozen=True)
class ReplayConfig:
    dataset: str = ""
    train_epochs: int = 30
    eval_epochs: int = 240
    n_processes: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.train_epochs < 2:
            raise ConfigError("train_epochs must be at least 2", key="train_epochs")
        if self.eval_epochs < 1:
            raise ConfigError("eval_epochs must be positive", key="eval_epochs")


@dataclass(frozen=True)
class RunConfig:
    experiment: ExperimentConfig | None = None
    certify: CertifyConfig | None = None
    replay: ReplayConfig | None = None
    synthetic: SyntheticSpec | None = None
    policies: tuple = ()
    source: str = "<string>"

    def to_text(self) -> str:
        return to_text(self)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()

    def with_seed(self, seed: int) -> "RunConfig":
        exp = replace(self.experiment, seed=seed) if self.experiment else None
        rep = replace(self.replay, seed=seed) if self.replay else None
        return replace(self, experiment=exp, replay=rep)


# -- parsing -----------------------------------------------------------------

_POLICY_ERROR_KEYS = (("discount", "gamma"), ("epsilon", "epsilon"), ("c must", "c"), ("L must", "L"))
_EXPERIMENT_KEYS = {"name", "arms", "processes", "horizon", "trials", "seed", "init", "init_count",
                    "regime", "dt", "epoch_spacing", "latent"}
_ARMS_KEYS = {"sampler", "scale", "alpha", "beta"}
_POLICY_KEYS = {"id", "gamma", "epsilon", "c", "L"}
_CERTIFY_KEYS = {"processes", "alpha", "beta", "gammas", "j", "m", "max_delay", "tol", "threshold"}
_REPLAY_KEYS = {"dataset", "train_epochs", "eval_epochs", "n_processes", "seed"}
_SYNTHETIC_KEYS = {"arms", "processes", "train_epochs", "eval_epochs", "beta_range", "active_range"}


def _key_lines(text: str) -> dict:
    """Map ``(section, key)`` to its 1-based line number."""
    lines, section = {}, None
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"\[(.+)\]$", s)
        if m:
            section = m.group(1).strip()
            lines[(section, None)] = n
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", s)
        if m and section is not None:
            lines[(section, m.group(1).strip().lower())] = n
    return lines


class _Reader:
    def __init__(self, parser, lines, source):
        self.parser, self.lines, self.source = parser, lines, source

    def fail(self, section, key, message):
        line = self.lines.get((section, key.lower() if key else None), self.lines.get((section, None)))
        raise ConfigError(message, key=f"{section}.{key}" if key else section, line=line, source=self.source)

    def check_keys(self, section, allowed):
        for key in self.parser[section]:
            if key not in {k.lower() for k in allowed}:
                self.fail(section, key, f"unknown key; expected one of {', '.join(sorted(allowed))}")

    def get(self, section, key, conv, default=None):
        if not self.parser.has_option(section, key):
            return default
        raw = self.parser.get(section, key)
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            self.fail(section, key, f"cannot read {raw!r}: {exc}")


def _int(text):
    return int(text.strip())


def _float_list(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _int_list(text):
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _pair(text):
    vals = _float_list(text)
    if len(vals) != 2:
        raise ValueError("expected two comma-separated numbers")
    return vals


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str.lower
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(str(exc).splitlines()[0], line=line, source=source) from None
    lines = _key_lines(text)
    rd = _Reader(parser, lines, source)
    known = {"experiment", "arms", "certify", "replay", "synthetic"}
    for section in parser.sections():
        if section not in known and not section.startswith("policy."):
            rd.fail(section, None, f"unknown section [{section}]")

    policies = []
    for section in parser.sections():
        if not section.startswith("policy."):
            continue
        rd.check_keys(section, _POLICY_KEYS)
        label = section[len("policy."):]
        pid = rd.get(section, "id", str.strip, label)
        try:
            policies.append(PolicySpec(
                pid,
                gamma=rd.get(section, "gamma", float, 0.0),
                epsilon=rd.get(section, "epsilon", float, DEFAULT_EPSILON),
                c=rd.get(section, "c", float, DEFAULT_UCB_C),
                L=rd.get(section, "l", _int, 1),
                label=label,
            ))
        except RmpmabError as exc:
            msg = str(exc).strip("'\"")
            key = next((k for prefix, k in _POLICY_ERROR_KEYS if msg.startswith(prefix)), "id")
            rd.fail(section, key, msg)
    policies = tuple(policies)

    experiment = None
    if parser.has_section("experiment"):
        s = "experiment"
        rd.check_keys(s, _EXPERIMENT_KEYS)
        if parser.has_section("arms"):
            rd.check_keys("arms", _ARMS_KEYS)
        try:
            sampler = ParamSampler(
                rd.get("arms", "sampler", str.strip, "heterogeneous") if parser.has_section("arms") else "heterogeneous",
                rd.get("arms", "scale", str.strip, "probability") if parser.has_section("arms") else "probability",
                rd.get("arms", "alpha", _float_list, ()) if parser.has_section("arms") else (),
                rd.get("arms", "beta", _float_list, ()) if parser.has_section("arms") else (),
            )
        except RmpmabError as exc:
            rd.fail("arms", "sampler", str(exc))
        if not policies:
            rd.fail(s, None, "no [policy.<label>] sections")
        kwargs = dict(
            name=rd.get(s, "name", str.strip, "experiment"),
            n_arms=rd.get(s, "arms", _int, 10),
            n_processes=rd.get(s, "processes", _int, 50),
            horizon=rd.get(s, "horizon", _int, 1000),
            trials=rd.get(s, "trials", _int, 20),
            seed=rd.get(s, "seed", _int, 0),
            init=rd.get(s, "init", str.strip, "stationary"),
            init_count=rd.get(s, "init_count", _int, 0),
            regime=rd.get(s, "regime", str.strip, "discrete"),
            dt=rd.get(s, "dt", float, 1.0),
            epoch_spacing=rd.get(s, "epoch_spacing", float, 1.0),
            latent=rd.get(s, "latent", str.strip, "auto"),
        )
        try:
            experiment = ExperimentConfig(sampler=sampler, policies=policies, **kwargs)
        except ConfigError as exc:
            section, key = s, exc.key
            if key == "L":
                section = next(f"policy.{p.label}" for p in policies if p.L > kwargs["n_arms"])
            rd.fail(section, key, exc.message)
        except RmpmabError as exc:
            # only the continuous-time discretisation check raises a non-config error here
            rd.fail(s, "epoch_spacing", str(exc))

    certify = None
    if parser.has_section("certify"):
        s = "certify"
        rd.check_keys(s, _CERTIFY_KEYS)
        defaults = {f.name: f.default for f in fields(CertifyConfig)}
        try:
            certify = CertifyConfig(
                processes=rd.get(s, "processes", _int, defaults["processes"]),
                alpha=rd.get(s, "alpha", float, defaults["alpha"]),
                beta=rd.get(s, "beta", float, defaults["beta"]),
                gammas=rd.get(s, "gammas", _float_list, defaults["gammas"]),
                js=rd.get(s, "j", _int_list, defaults["js"]),
                ms=rd.get(s, "m", _int_list, defaults["ms"]),
                max_delay=rd.get(s, "max_delay", _int, defaults["max_delay"]),
                tol=rd.get(s, "tol", float, defaults["tol"]),
                threshold=rd.get(s, "threshold", float, defaults["threshold"]),
            )
        except ConfigError as exc:
            rd.fail(s, exc.key, exc.message)

    replay = None
    if parser.has_section("replay"):
        s = "replay"
        rd.check_keys(s, _REPLAY_KEYS)
        try:
            replay = ReplayConfig(
                dataset=rd.get(s, "dataset", str.strip, ""),
                train_epochs=rd.get(s, "train_epochs", _int, 30),
                eval_epochs=rd.get(s, "eval_epochs", _int, 240),
                n_processes=rd.get(s, "n_processes", _int, None),
                seed=rd.get(s, "seed", _int, 0),
            )
        except ConfigError as exc:
            rd.fail(s, exc.key, exc.message)

    synthetic = None
    if parser.has_section("synthetic"):
        s = "synthetic"
        rd.check_keys(s, _SYNTHETIC_KEYS)
        base = SyntheticSpec()
        synthetic = SyntheticSpec(
            n_arms=rd.get(s, "arms", _int, base.n_arms),
            n_processes=rd.get(s, "processes", _int, base.n_processes),
            train_epochs=rd.get(s, "train_epochs", _int, base.train_epochs),
            eval_epochs=rd.get(s, "eval_epochs", _int, base.eval_epochs),
            beta_range=rd.get(s, "beta_range", _pair, base.beta_range),
            active_range=rd.get(s, "active_range", _pair, base.active_range),
        )
    return RunConfig(experiment, certify, replay, synthetic, policies, source)


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), source=str(path))


# -- normalised output ----------------------------------------------------------

def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def _ranges(values):
    """Compress consecutive integers into ``lo..hi`` runs."""
    values = list(values)
    parts, i = [], 0
    while i < len(values):
        k = i
        while k + 1 < len(values) and values[k + 1] == values[k] + 1:
            k += 1
        parts.append(f"{values[i]}..{values[k]}" if k > i else str(values[i]))
        i = k + 1
    return ", ".join(parts)


def to_text(cfg: RunConfig) -> str:
    out = []
    e = cfg.experiment
    if e is not None:
        out += ["[experiment]", f"name = {e.name}", f"arms = {e.n_arms}", f"processes = {e.n_processes}",
                f"horizon = {e.horizon}", f"trials = {e.trials}", f"seed = {e.seed}", f"init = {e.init}"]
        if e.init == "fixed-state":
            out.append(f"init_count = {e.init_count}")
        out += [f"regime = {e.regime}"]
        if e.regime == "continuous":
            out += [f"dt = {e.dt!r}", f"epoch_spacing = {e.epoch_spacing!r}"]
        out += [f"latent = {e.latent}", "", "[arms]", f"sampler = {e.sampler.mode}", f"scale = {e.sampler.scale}"]
        if e.sampler.mode == "fixed":
            out += [f"alpha = {_fmt(e.sampler.alpha)}", f"beta = {_fmt(e.sampler.beta)}"]
        out.append("")
    for p in cfg.policies:
        out += [f"[policy.{p.label}]", f"id = {p.policy_id}", f"gamma = {p.gamma!r}", f"epsilon = {p.epsilon!r}",
                f"c = {p.c!r}", f"L = {p.L}", ""]
    c = cfg.certify
    if c is not None:
        out += ["[certify]", f"processes = {c.processes}", f"alpha = {c.alpha!r}", f"beta = {c.beta!r}",
                f"gammas = {_fmt(tuple(float(g) for g in c.gammas))}", f"j = {_ranges(c.js)}", f"m = {_ranges(c.ms)}",
                f"max_delay = {c.max_delay}", f"tol = {c.tol!r}", f"threshold = {c.threshold!r}", ""]
    r = cfg.replay
    if r is not None:
        out += ["[replay]", f"dataset = {r.dataset}", f"train_epochs = {r.train_epochs}",
                f"eval_epochs = {r.eval_epochs}"]
        if r.n_processes is not None:
            out.append(f"n_processes = {r.n_processes}")
        out += [f"seed = {r.seed}", ""]
    s = cfg.synthetic
    if s is not None:
        out += ["[synthetic]", f"arms = {s.n_arms}", f"processes = {s.n_processes}",
                f"train_epochs = {s.train_epochs}", f"eval_epochs = {s.eval_epochs}",
                f"beta_range = {_fmt(tuple(map(float, s.beta_range)))}",
                f"active_range = {_fmt(tuple(map(float, s.active_range)))}", ""]
    return "\n".join(out)


# -- shipped profiles -------------------------------------------------------------

def profile_dir() -> str:
    override = os.environ.get(PROFILE_ENV)
    if override:
        return override
    return str(resources.files("rmpmab") / "profiles")


def profile_path(name: str) -> str:
    base = profile_dir()
    path = os.path.join(base, name if name.endswith(".cfg") else name + ".cfg")
    if not os.path.isfile(path):
        available = sorted(f[:-4] for f in os.listdir(base) if f.endswith(".cfg")) if os.path.isdir(base) else []
        raise ConfigError(f"no profile {name!r} in {base}; available: {', '.join(available) or 'none'}")
    return path


def load_profile(name: str) -> RunConfig:
    return load_config(profile_path(name))
