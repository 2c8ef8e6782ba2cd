"""Run configuration: one TOML file, command-line flags, and environment overrides.

Precedence is environment > flags > file > defaults. Recognised environment
variables are ``ATTRFORGE_CONFIG`` (config path) and, per backend role,
``ATTRFORGE_<ROLE>_URL`` / ``ATTRFORGE_<ROLE>_TOKEN`` where ``<ROLE>`` is one
of ``GENERATOR``, ``POLICY_SCORER``, ``REFERENCE_SCORER``, ``JUDGE``.
"""

from __future__ import annotations

import os
import sys
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any, Mapping

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .gateway import ROLES, Gateway, HttpBackend, MockJudge, MockScorer
from .mockworld import simulated_generator
from .rewards import RewardConfig
from .synthesis import SamplingConfig

ENV_PREFIX = "ATTRFORGE_"


class ConfigError(ValueError):
    pass


@dataclass
class BackendConfig:
    url: str | None = None
    token: str | None = None
    timeout: float = 60.0


@dataclass
class SynthesisParams:
    group_size_min: int = 2
    group_size_max: int = 3
    distractors_k: int = 2
    warmup_fraction: float = 0.2


@dataclass
class SelectionParams:
    n_candidates: int = 16
    attr_threshold: float = 1.0
    compre_threshold: float = 0.8
    robust_mode: str = "literal"
    # which scorer role computes the robustness log-probabilities
    robust_role: str = "policy_scorer"
    max_premise_chars: int = 6000
    judge_threshold: float = 0.5


@dataclass
class DpoParams:
    beta: float = 0.1
    max_pairs_per_query: int = 2


@dataclass
class MockParams:
    skill: float = 0.55
    skill_step: float = 0.1
    policy_scale: float = 1.0
    reference_scale: float = 1.0


@dataclass
class RunConfig:
    global_seed: int = 0
    workspace: Path = Path("workspace")
    queries: Path | None = None
    template_dir: Path | None = None
    parallelism: int = 1
    mock: bool = False
    failure_threshold: float = 0.5
    record_timings: bool = False
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    synthesis: SynthesisParams = field(default_factory=SynthesisParams)
    selection: SelectionParams = field(default_factory=SelectionParams)
    dpo: DpoParams = field(default_factory=DpoParams)
    mock_params: MockParams = field(default_factory=MockParams)
    backends: dict[str, BackendConfig] = field(default_factory=lambda: {r: BackendConfig() for r in ROLES})
    # passed through to emitted dataset metadata for an external trainer
    training: dict[str, Any] = field(
        default_factory=lambda: {
            "warmup_epochs": 2,
            "rsft_epochs_per_iteration": 3,
            "dpo_epochs": 1,
            "learning_rate": 2e-5,
            "dpo_learning_rate": 1e-5,
        }
    )

    @property
    def reward_config(self) -> RewardConfig:
        s = self.selection
        return RewardConfig(
            attr_threshold=s.attr_threshold,
            compre_threshold=s.compre_threshold,
            robust_mode=s.robust_mode,
            max_premise_chars=s.max_premise_chars,
        )

    def validate(self) -> None:
        s = self.synthesis
        if not 1 <= s.group_size_min <= s.group_size_max:
            raise ConfigError("synthesis.group_size_min/max must satisfy 1 <= min <= max")
        if s.distractors_k < 0:
            raise ConfigError("synthesis.distractors_k must be >= 0")
        if not 0 < s.warmup_fraction <= 1:
            raise ConfigError("synthesis.warmup_fraction must lie in (0, 1]")
        if self.selection.n_candidates < 1:
            raise ConfigError("selection.n_candidates must be >= 1")
        if self.selection.robust_role not in ("policy_scorer", "reference_scorer"):
            raise ConfigError("selection.robust_role must be policy_scorer or reference_scorer")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        try:
            self.reward_config
            SamplingConfig(**asdict(self.sampling))
        except ValueError as e:
            raise ConfigError(str(e)) from e
        if self.dpo.beta <= 0:
            raise ConfigError("dpo.beta must be positive")
        if self.template_dir is not None and not Path(self.template_dir).is_dir():
            raise ConfigError(f"template_dir {self.template_dir} does not exist")
        if not self.mock:
            missing = [r for r in ROLES if not self.backends[r].url]
            if missing:
                raise ConfigError(f"no URL configured for backend roles {missing} (use --mock for in-process mocks)")

    def snapshot(self) -> dict:
        """JSON-safe view without secrets; paths are relative to the workspace."""
        d = _to_plain(self)
        for key in ("workspace", "queries", "template_dir"):
            if d[key] is not None:
                d[key] = os.path.relpath(Path(d[key]).resolve(), Path(self.workspace).resolve())
        for role in d["backends"].values():
            if role.get("token"):
                role["token"] = "***"
        return d


def _to_plain(obj: Any) -> Any:
    if is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _section(cls, data: Mapping[str, Any], name: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{name}]: {sorted(unknown)}")
    return cls(**data)


def _resolve(base: Path, p: str | Path | None) -> Path | None:
    if p is None:
        return None
    p = Path(p)
    return p if p.is_absolute() else base / p


def load_config(
    path: str | Path | None = None,
    overrides: Mapping[str, Any] | None = None,
    env: Mapping[str, str] | None = None,
) -> RunConfig:
    """Build a :class:`RunConfig` from file, flag overrides, and environment."""
    env = os.environ if env is None else env
    path = env.get(ENV_PREFIX + "CONFIG") or path
    data: dict[str, Any] = {}
    base = Path.cwd()
    if path:
        path = Path(path)
        try:
            data = tomllib.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError as e:
            raise ConfigError(f"config file not found: {path}") from e
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from e
        base = path.resolve().parent

    cfg = RunConfig()
    try:
        cfg.global_seed = int(data.pop("seed", cfg.global_seed))
        cfg.workspace = _resolve(base, data.pop("workspace", None)) or base / cfg.workspace
        cfg.queries = _resolve(base, data.pop("queries", None))
        cfg.template_dir = _resolve(base, data.pop("template_dir", None))
        cfg.parallelism = int(data.pop("parallelism", cfg.parallelism))
        cfg.mock = bool(data.pop("mock", cfg.mock))
        cfg.failure_threshold = float(data.pop("failure_threshold", cfg.failure_threshold))
        cfg.record_timings = bool(data.pop("record_timings", cfg.record_timings))
        cfg.sampling = _section(SamplingConfig, data.pop("sampling", {}), "sampling")
        cfg.synthesis = _section(SynthesisParams, data.pop("synthesis", {}), "synthesis")
        cfg.selection = _section(SelectionParams, data.pop("selection", {}), "selection")
        cfg.dpo = _section(DpoParams, data.pop("dpo", {}), "dpo")
        cfg.mock_params = _section(MockParams, data.pop("mock_backend", {}), "mock_backend")
        cfg.training.update(data.pop("training", {}))
        backends = data.pop("backends", {})
        for role in set(backends) - set(ROLES):
            raise ConfigError(f"unknown backend role {role!r}")
        for role in ROLES:
            cfg.backends[role] = _section(BackendConfig, backends.get(role, {}), f"backends.{role}")
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from e
    if data:
        raise ConfigError(f"unknown top-level config keys: {sorted(data)}")

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in ("workspace", "queries", "template_dir"):
            value = Path(value)
        setattr(cfg, key, value)

    for role in ROLES:
        url = env.get(f"{ENV_PREFIX}{role.upper()}_URL")
        token = env.get(f"{ENV_PREFIX}{role.upper()}_TOKEN")
        if url:
            cfg.backends[role].url = url
        if token:
            cfg.backends[role].token = token
    return cfg


def build_gateway(cfg: RunConfig, iteration: int = 0) -> Gateway:
    """Bind the four roles, to mocks under ``cfg.mock`` or to HTTP backends otherwise.

    Under mocks, iteration ``k`` uses a generator of skill
    ``skill + skill_step * (k - 1)`` (capped at 1) and a per-iteration salt,
    standing in for the externally retrained policy.
    """
    s = cfg.selection
    if cfg.mock:
        m = cfg.mock_params
        skill = min(1.0, max(0.0, m.skill + m.skill_step * max(0, iteration - 1)))
        return Gateway(
            generator=simulated_generator(skill=skill, salt=f"iter{iteration}"),
            policy_scorer=MockScorer(scale=m.policy_scale),
            reference_scorer=MockScorer(scale=m.reference_scale),
            judge=MockJudge(threshold=s.judge_threshold, max_premise_chars=s.max_premise_chars),
            parallelism=cfg.parallelism,
        )

    def http(role: str) -> HttpBackend:
        b = cfg.backends[role]
        return HttpBackend(
            b.url, token=b.token, timeout=b.timeout, threshold=s.judge_threshold, max_premise_chars=s.max_premise_chars
        )

    return Gateway(
        generator=http("generator"),
        policy_scorer=http("policy_scorer"),
        reference_scorer=http("reference_scorer"),
        judge=http("judge"),
        parallelism=cfg.parallelism,
    )
