"""Experiment configuration: INI file with nested sections, flag overrides.

Every record the command line emits carries `config_hash`, the SHA-256 of
the canonical key=value dump, so reruns are attributable to an exact
configuration.  Validation failures name the section and key.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields, replace

__all__ = ["ExperimentConfig", "ConfigError", "load_config"]


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending section.key."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated knobs for every command."""

    sigma: float = 0.0
    tau: float = 0.25
    k: float = 4.0
    a_values: tuple[float, ...] = (0.5, 1.0, 2.0)
    nx: int = 32
    ny: int = 32
    nt: int = 32
    x_offsets: int = 1
    starts: int = 0  # 0 = match the grid resolution (one line per cell column)
    tol: float = 1e-6
    max_iter: int = 100_000
    fd_step: float = 1e-4
    contact_tol: float = 1e-6
    oracle_steps: int = 32
    oracle_restarts: int = 3
    oracle_keep: int = 3
    seed: int = 0
    oracle_gap_tol: float = 1e-3
    map_samples: int = 4
    quotient_radius: int = 2
    affine: tuple[float, ...] | None = None  # 3x3 matrix row-major + offset
    out_dir: str = "out"

    def __post_init__(self):
        checks = [
            (self.tau != 0.0, "lattice.tau", "must be nonzero"),
            (
                abs(4.0 * self.tau - round(4.0 * self.tau)) <= 1e-12
                and round(4.0 * self.tau) != 0,
                "lattice.tau",
                "4*tau must be a nonzero integer for a discrete lattice action",
            ),
            (self.k >= 1.0, "metric.k", "must satisfy k >= 1"),
            (len(self.a_values) > 0, "family.a_values", "must be nonempty"),
            (all(a > 0 for a in self.a_values), "family.a_values", "entries must be positive"),
            (min(self.nx, self.ny, self.nt) >= 1, "grid.nx/ny/nt", "must be >= 1"),
            (self.x_offsets >= 1, "family.x_offsets", "must be >= 1"),
            (self.starts >= 0, "family.starts", "must be >= 0 (0 = match grid)"),
            (self.tol > 0, "solver.tol", "must be positive"),
            (self.max_iter >= 1, "solver.max_iter", "must be >= 1"),
            (self.fd_step > 0, "maps.fd_step", "must be positive"),
            (self.contact_tol > 0, "maps.contact_tol", "must be positive"),
            (self.oracle_steps >= 2, "oracle.steps", "must be >= 2"),
            (self.oracle_restarts >= 0, "oracle.restarts", "must be >= 0"),
            (self.oracle_keep >= 1, "oracle.keep", "must be >= 1"),
            (self.oracle_gap_tol > 0, "oracle.gap_tol", "must be positive"),
            (self.map_samples >= 1, "maps.samples", "must be >= 1"),
            (self.quotient_radius >= 1, "lattice.quotient_radius", "must be >= 1"),
            (
                self.affine is None or len(self.affine) == 12,
                "maps.affine",
                "needs exactly 12 numbers (3x3 matrix row-major, then offset)",
            ),
        ]
        for ok, key, msg in checks:
            if not ok:
                raise ConfigError(f"{key}: {msg}")

    def canonical_dump(self) -> str:
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            lines.append(f"{f.name}={getattr(self, f.name)!r}")
        return "\n".join(lines)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_dump().encode()).hexdigest()[:16]

    def with_overrides(self, **kwargs) -> "ExperimentConfig":
        updates = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **updates) if updates else self


_SCHEMA = {
    ("lattice", "sigma"): ("sigma", float),
    ("lattice", "tau"): ("tau", float),
    ("lattice", "quotient_radius"): ("quotient_radius", int),
    ("metric", "k"): ("k", float),
    ("family", "a_values"): ("a_values", "floats"),
    ("family", "x_offsets"): ("x_offsets", int),
    ("family", "starts"): ("starts", int),
    ("grid", "nx"): ("nx", int),
    ("grid", "ny"): ("ny", int),
    ("grid", "nt"): ("nt", int),
    ("solver", "tol"): ("tol", float),
    ("solver", "max_iter"): ("max_iter", int),
    ("maps", "fd_step"): ("fd_step", float),
    ("maps", "contact_tol"): ("contact_tol", float),
    ("maps", "samples"): ("map_samples", int),
    ("maps", "affine"): ("affine", "floats"),
    ("oracle", "steps"): ("oracle_steps", int),
    ("oracle", "restarts"): ("oracle_restarts", int),
    ("oracle", "keep"): ("oracle_keep", int),
    ("oracle", "seed"): ("seed", int),
    ("oracle", "gap_tol"): ("oracle_gap_tol", float),
    ("output", "dir"): ("out_dir", str),
}


def load_config(path: str) -> ExperimentConfig:
    """Parse and validate an INI config; unknown keys are rejected by name."""
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"config file not found: {path}")
    values = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            spec = _SCHEMA.get((section, key))
            if spec is None:
                raise ConfigError(f"{section}.{key}: unknown configuration key")
            name, conv = spec
            try:
                if conv == "floats":
                    values[name] = tuple(float(tok) for tok in raw.split())
                elif conv is str:
                    values[name] = raw.strip()
                else:
                    values[name] = conv(raw)
            except ValueError as exc:
                raise ConfigError(f"{section}.{key}: cannot parse {raw!r}: {exc}") from exc
    try:
        return ExperimentConfig(**values)
    except ConfigError:
        raise
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
