"""Ground-state electron configurations for Z = 1..92.

The shipped table lives in ``data/configurations.csv``; a file with the same
format can be loaded instead (``Z,symbol,n:l:f;n:l:f;...``, ``#`` comments).
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

Z_MAX = 92
L_LETTERS = "spdfgh"


@dataclass(frozen=True)
class Shell:
    n: int
    l: int
    occupation: float

    @property
    def label(self):
        return f"{self.n}{L_LETTERS[self.l]}"


@dataclass(frozen=True)
class AtomConfig:
    Z: int
    symbol: str
    shells: tuple
    # False for test configurations whose occupations need not sum to Z
    neutral: bool = True

    def __post_init__(self):
        seen = set()
        for s in self.shells:
            if s.n < s.l + 1 or s.l < 0:
                raise ValueError(f"{self.symbol}: invalid quantum numbers n={s.n}, l={s.l}")
            if not 0 < s.occupation <= 2 * (2 * s.l + 1):
                raise ValueError(f"{self.symbol}: occupation {s.occupation} out of range for {s.label}")
            if (s.n, s.l) in seen:
                raise ValueError(f"{self.symbol}: duplicate shell {s.label}")
            seen.add((s.n, s.l))
        if self.neutral and abs(sum(s.occupation for s in self.shells) - self.Z) > 1e-12:
            raise ValueError(f"{self.symbol}: occupations do not sum to Z={self.Z}")

    @property
    def n_electrons(self):
        return sum(s.occupation for s in self.shells)

    def shells_for(self, l):
        """Shells of one channel, ordered by n."""
        return sorted((s for s in self.shells if s.l == l), key=lambda s: s.n)

    @property
    def l_values(self):
        return sorted({s.l for s in self.shells})


def parse_shells(text):
    shells = []
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        n, l, f = item.split(":")
        shells.append(Shell(int(n), int(l), float(f)))
    return tuple(shells)


def parse_configurations(lines):
    table = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            z, sym, shells = line.split(",", 2)
            cfg = AtomConfig(int(z), sym.strip(), parse_shells(shells))
        except ValueError as exc:
            raise ValueError(f"configuration line {lineno}: {exc}") from None
        table[cfg.Z] = cfg
    return table


@lru_cache(maxsize=None)
def _shipped():
    text = resources.files("radialks").joinpath("data/configurations.csv").read_text(encoding="utf-8")
    return parse_configurations(text.splitlines())


def load_configurations(path):
    with open(path, encoding="utf-8") as fh:
        return parse_configurations(fh)


def configuration(Z: int, table=None) -> AtomConfig:
    """Configuration of the neutral atom with nuclear charge ``Z``."""
    if int(Z) != Z or not 1 <= Z <= Z_MAX:
        raise ValueError(f"Z must be an integer in 1..{Z_MAX}, got {Z!r}")
    table = _shipped() if table is None else table
    return table[int(Z)]


def hydrogenic_config(Z: int, n_max: int, l_max: int) -> AtomConfig:
    """Every shell with n <= n_max, l <= min(n - 1, l_max), singly occupied.

    Meant for non-interacting runs, whose eigenvalues are -Z^2 / (2 n^2).
    """
    shells = tuple(Shell(n, l, 1.0) for n in range(1, n_max + 1) for l in range(min(n - 1, l_max) + 1))
    return AtomConfig(int(Z), f"Z{Z}+", shells, neutral=False)


def orbitals_per_l(config: AtomConfig):
    """Number of eigenpairs to request in each angular channel."""
    return dict(sorted(Counter(s.l for s in config.shells).items()))


def symbol_to_z(symbol):
    for cfg in _shipped().values():
        if cfg.symbol.lower() == symbol.lower():
            return cfg.Z
    raise ValueError(f"unknown element symbol {symbol!r}")
