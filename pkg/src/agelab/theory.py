"""Exact checks of the saddle-point and reciprocity theorems on finite spaces.

Distributions are probability vectors over {0..K-1}, maps are integer
arrays, and the divergence defaults to total variation. Both games are
solved by enumerating every pure strategy pair, so every claim is checked
exhaustively rather than sampled.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .kernels import pushforward_many, pushforward_table

MASS_TOL = 1e-12
TIE_TOL = 1e-12


@dataclass(frozen=True)
class FiniteDistribution:
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64).ravel()
        if p.size < 1:
            raise ValueError("a finite distribution needs at least one atom")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError(f"probabilities must be finite and non-negative, got {p}")
        if abs(p.sum() - 1.0) > MASS_TOL:
            raise ValueError(f"probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @property
    def K(self) -> int:
        return self.probs.size

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs > 0)

    def __eq__(self, other):
        return isinstance(other, FiniteDistribution) and np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash(self.probs.tobytes())

    def __repr__(self):
        return f"FiniteDistribution({np.round(self.probs, 6).tolist()})"


@dataclass(frozen=True)
class FiniteMap:
    targets: np.ndarray
    k_dst: int

    def __post_init__(self):
        t = np.asarray(self.targets, dtype=np.int64).ravel()
        if t.size < 1:
            raise ValueError("a map needs a non-empty domain")
        if self.k_dst < 1:
            raise ValueError("codomain must have at least one point")
        bad = np.flatnonzero((t < 0) | (t >= self.k_dst))
        if bad.size:
            raise ValueError(f"target index {t[bad[0]]} at position {bad[0]} outside [0, {self.k_dst})")
        t.setflags(write=False)
        object.__setattr__(self, "targets", t)

    @property
    def k_src(self) -> int:
        return self.targets.size

    def __call__(self, i: int) -> int:
        return int(self.targets[i])

    def then(self, other: "FiniteMap") -> "FiniteMap":
        """other after self."""
        if other.k_src != self.k_dst:
            raise ValueError(f"cannot chain a map into {self.k_dst} points with one from {other.k_src}")
        return FiniteMap(other.targets[self.targets], other.k_dst)

    @classmethod
    def identity(cls, K: int) -> "FiniteMap":
        return cls(np.arange(K), K)


def pushforward(d: FiniteDistribution, f: FiniteMap) -> FiniteDistribution:
    if d.K != f.k_src:
        raise ValueError(f"distribution over {d.K} points cannot be pushed through a map from {f.k_src}")
    out = np.bincount(f.targets, weights=d.probs, minlength=f.k_dst)
    # re-normalizing only absorbs round-off; bincount already conserves mass
    return FiniteDistribution(out / out.sum())


def finite_divergence(p: FiniteDistribution, q: FiniteDistribution) -> float:
    """Total variation distance."""
    if p.K != q.K:
        raise ValueError(f"dimension mismatch: {p.K} vs {q.K}")
    return float(0.5 * np.abs(p.probs - q.probs).sum())


def tv_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Total variation along the last axis, broadcasting."""
    return 0.5 * np.abs(a - b).sum(axis=-1)


def all_maps(k_src: int, k_dst: int) -> np.ndarray:
    """Every function [k_src] -> [k_dst], one per row (k_dst ** k_src rows)."""
    return np.array(list(itertools.product(range(k_dst), repeat=k_src)), dtype=np.int64).reshape(-1, k_src)


def x_invertible(e_row: np.ndarray, X: FiniteDistribution) -> bool:
    """e is X-a.e. invertible: every supported atom is the only preimage of its code.

    This is what P_X(A) = P_X(e^-1(e(A))) for every A demands on a finite
    space. Injectivity on supp(X) alone is weaker: an unsupported atom
    sharing a code with a supported one breaks the identity.
    """
    codes = e_row[X.support]
    if np.unique(codes).size != codes.size:
        return False
    return all(np.count_nonzero(e_row == c) == 1 for c in codes)


# ---------------------------------------------------------------- reports

@dataclass
class Report:
    instance: str
    kind: str
    saddle_count: int = 0
    all_aligned: bool = True
    value: float | None = None
    violations: list[str] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {"instance": self.instance, "saddle_count": self.saddle_count,
                "all_aligned": self.all_aligned, "value": self.value, "violations": list(self.violations)}

    def text(self) -> str:
        lines = [f"[{self.kind}] {self.instance}: {'OK' if self.ok else 'VIOLATED'}",
                 f"  saddles={self.saddle_count} all_aligned={self.all_aligned} value={self.value}"]
        lines += [f"  flag: {f}" for f in self.flags]
        lines += [f"  violation: {v}" for v in self.violations]
        return "\n".join(lines)


def _describe(name, *dists):
    return name or " ".join(np.round(d.probs, 4).tolist().__repr__() for d in dists)


# ---------------------------------------------------------------- lemma: all e

def verify_lemma_all_e(X: FiniteDistribution, Y: FiniteDistribution, divergence=None, name: str = "") -> Report:
    """X == Y iff e#X == e#Y for every map e: [K] -> [K]."""
    if X.K != Y.K:
        raise ValueError(f"dimension mismatch: {X.K} vs {Y.K}")
    if X.K > 6:
        raise ValueError("exhaustive scan limited to K <= 6")
    div = divergence or finite_divergence
    maps = all_maps(X.K, X.K)
    ex = pushforward_many(X.probs, maps, X.K)
    ey = pushforward_many(Y.probs, maps, X.K)
    if divergence is None:
        gaps = tv_rows(ex, ey)
    else:
        gaps = np.array([div(FiniteDistribution(a), FiniteDistribution(b)) for a, b in zip(ex, ey)])
    separating = np.flatnonzero(np.abs(gaps) > TIE_TOL)
    equal = div(X, Y) == 0.0 if divergence else finite_divergence(X, Y) <= TIE_TOL
    rep = Report(_describe(name, X, Y), "lemma-all-e", value=float(np.max(np.abs(gaps))))
    rep.details = {"maps": len(maps), "separating": separating.size,
                   "witness": maps[separating[0]].tolist() if separating.size else None}
    if equal and separating.size:
        rep.violations.append(f"X == Y yet map {maps[separating[0]].tolist()} separates them")
    if not equal and not separating.size:
        rep.violations.append("X != Y yet no map separates them")
    return rep


# ---------------------------------------------------------------- games

@dataclass
class GameTable:
    gens: np.ndarray      # n_g x K_z, maps Z-space -> X-space
    encs: np.ndarray      # n_e x K_x, maps X-space -> Z-space
    payoff: np.ndarray    # n_g x n_e
    gen_push: np.ndarray  # n_g x K_x, g#Z
    aligned: np.ndarray   # n_g bools

    def saddles(self) -> np.ndarray:
        """Pure saddle pairs (row index, column index); the generator minimizes."""
        A = self.payoff
        row_max = A.max(axis=1, keepdims=True)
        col_min = A.min(axis=0, keepdims=True)
        return np.argwhere((A >= row_max - TIE_TOL) & (A <= col_min + TIE_TOL))


def _game_table(X: FiniteDistribution, Z: FiniteDistribution, payoff_fn) -> GameTable:
    gens = all_maps(Z.K, X.K)
    encs = all_maps(X.K, Z.K)
    gz = pushforward_many(Z.probs, gens, X.K)
    egz = pushforward_table(gz, encs, Z.K)
    ex = pushforward_many(X.probs, encs, Z.K)
    aligned = tv_rows(gz, X.probs) <= TIE_TOL
    return GameTable(gens, encs, payoff_fn(egz, ex), gz, aligned)


def _pairwise(divergence):
    """Vectorized TV by default; otherwise apply ``divergence`` entry by entry."""
    if divergence is None:
        return tv_rows

    def apply(a, b):
        a, b = np.broadcast_arrays(a, b)
        flat_a = a.reshape(-1, a.shape[-1])
        flat_b = b.reshape(-1, b.shape[-1])
        vals = [divergence(FiniteDistribution(p / p.sum()), FiniteDistribution(q / q.sum()))
                for p, q in zip(flat_a, flat_b)]
        return np.array(vals).reshape(a.shape[:-1])
    return apply


def _saddle_checks(rep: Report, table: GameTable, pairs: np.ndarray) -> None:
    rep.saddle_count = len(pairs)
    if len(pairs):
        vals = table.payoff[pairs[:, 0], pairs[:, 1]]
        rep.value = float(vals[0])
        rep.all_aligned = bool(table.aligned[pairs[:, 0]].all())
        if np.ptp(vals) > TIE_TOL:
            rep.violations.append(f"saddle values differ: {vals.min():.3g} .. {vals.max():.3g}")
    rep.details["saddle_generators"] = sorted({tuple(table.gens[i]) for i in pairs[:, 0]}) if len(pairs) else []
    rep.details["aligned_generators"] = [tuple(g) for g in table.gens[table.aligned]]


def certify_game1_saddles(X: FiniteDistribution, Z: FiniteDistribution, divergence=None,
                          name: str = "") -> Report:
    """Saddles of V1(g, e) = div(e#(g#Z), e#X); generator minimizes, encoder maximizes."""
    if X.K > 4 or Z.K > 4:
        raise ValueError("game enumeration limited to K <= 4")
    div = _pairwise(divergence)
    table = _game_table(X, Z, lambda egz, ex: div(egz, ex[None]))
    rep = Report(_describe(name, X, Z), "game-1")
    pairs = table.saddles()
    _saddle_checks(rep, table, pairs)
    if not table.aligned.any():
        rep.flags.append("perfect-generator assumption violated: no map g has g#Z = X")
        return rep
    if Z.K < 2:
        rep.flags.append("latent space has one point: no encoder can separate distributions")
        return rep
    for i, j in pairs:
        if not table.aligned[i]:
            rep.violations.append(f"saddle (g={table.gens[i].tolist()}, e={table.encs[j].tolist()}) "
                                  f"is not aligned: g#Z={np.round(table.gen_push[i], 6).tolist()}")
            break
    is_saddle = np.zeros(table.payoff.shape, dtype=bool)
    is_saddle[pairs[:, 0], pairs[:, 1]] = True
    for i in np.flatnonzero(table.aligned):
        if not is_saddle[i].all():
            j = int(np.flatnonzero(~is_saddle[i])[0])
            rep.violations.append(f"aligned g={table.gens[i].tolist()} with e={table.encs[j].tolist()} "
                                  "is not a saddle")
            break
    return rep


def certify_game2_saddles(X: FiniteDistribution, Z: FiniteDistribution, Y: FiniteDistribution | None = None,
                          divergence=None, name: str = "") -> Report:
    """Saddles of V2(g, e) = div(e#(g#Z) || Y) - div(e#X || Y); Y defaults to Z."""
    Y = Z if Y is None else Y
    if Y.K != Z.K:
        raise ValueError(f"reference Y lives on {Y.K} points, latent space has {Z.K}")
    if X.K > 4 or Z.K > 4:
        raise ValueError("game enumeration limited to K <= 4")
    div = _pairwise(divergence)
    table = _game_table(X, Z, lambda egz, ex: div(egz, Y.probs) - div(ex, Y.probs)[None])
    rep = Report(_describe(name, X, Z, Y), "game-2")
    pairs = table.saddles()
    _saddle_checks(rep, table, pairs)

    ex = pushforward_many(X.probs, table.encs, Z.K)
    transports = [j for j in range(len(table.encs))
                  if x_invertible(table.encs[j], X) and tv_rows(ex[j], Y.probs) <= TIE_TOL]
    # encoders that are optimal against an aligned generator yet do not carry X onto Y
    caveat = sorted({tuple(table.encs[j]) for i, j in pairs
                     if table.aligned[i] and tv_rows(ex[j], Y.probs) > TIE_TOL})
    rep.details["transport_encoders"] = [table.encs[j].tolist() for j in transports]
    rep.details["optimal_encoders_off_reference"] = [list(e) for e in caveat]

    if not table.aligned.any():
        rep.flags.append("perfect-generator assumption violated: no map g has g#Z = X")
        return rep
    if not transports:
        rep.flags.append("invertible-encoder transport assumption violated: no X-invertible e has e#X = Y")
        return rep
    for i, j in pairs:
        if not table.aligned[i]:
            rep.violations.append(f"saddle (g={table.gens[i].tolist()}, e={table.encs[j].tolist()}) "
                                  f"is not aligned: g#Z={np.round(table.gen_push[i], 6).tolist()}")
            break
    saddle_gens = set(pairs[:, 0].tolist()) if len(pairs) else set()
    for i in np.flatnonzero(table.aligned):
        if i not in saddle_gens:
            rep.violations.append(f"aligned g={table.gens[i].tolist()} admits no saddle encoder")
            break
    if rep.value is not None and abs(rep.value) > TIE_TOL:
        rep.violations.append(f"game value {rep.value:.3g} is not 0")
    return rep


def verify_lemma_inverse(X: FiniteDistribution, Z: FiniteDistribution, name: str = "") -> Report:
    """For every g and every X-invertible e: e#(g#Z) == e#X implies g#Z == X."""
    gens = all_maps(Z.K, X.K)
    encs = np.array([e for e in all_maps(X.K, Z.K) if x_invertible(e, X)])
    rep = Report(_describe(name, X, Z), "lemma-inverse")
    rep.details["invertible_encoders"] = len(encs)
    if not len(encs):
        rep.flags.append("no X-invertible encoder into the latent space")
        return rep
    gz = pushforward_many(Z.probs, gens, X.K)
    egz = pushforward_table(gz, encs, Z.K)
    ex = pushforward_many(X.probs, encs, Z.K)
    match = tv_rows(egz, ex[None]) <= TIE_TOL
    aligned = tv_rows(gz, X.probs) <= TIE_TOL
    bad = np.argwhere(match & ~aligned[:, None])
    rep.value = float(len(bad))
    if len(bad):
        i, j = bad[0]
        rep.violations.append(f"e={encs[j].tolist()} matches g={gens[i].tolist()} but g#Z != X")
    return rep


# ---------------------------------------------------------------- reciprocity

def verify_reciprocity(W: FiniteDistribution, f: FiniteMap, h: FiniteMap, Q: FiniteDistribution | None = None,
                       name: str = "") -> Report:
    """If f#W = Q and h(f(w)) = w on supp(W), then f(h(q)) = q on supp(Q) and h#Q = W."""
    if f.k_src != W.K or h.k_src != f.k_dst or h.k_dst != W.K:
        raise ValueError("maps do not chain W -> Q -> W")
    rep = Report(name or f"W={np.round(W.probs, 4).tolist()} f={f.targets.tolist()} h={h.targets.tolist()}",
                 "reciprocity")
    fw = pushforward(W, f)
    Q = fw if Q is None else Q
    hypothesis = finite_divergence(fw, Q) <= TIE_TOL and all(h(f(w)) == w for w in W.support)
    rep.details["hypothesis"] = hypothesis
    if not hypothesis:
        rep.flags.append("hypothesis failed: f#W != Q or h is not a left inverse of f on supp(W)")
        return rep
    off = [int(q) for q in Q.support if f(h(q)) != q]
    if off:
        rep.violations.append(f"f(h(q)) != q at supported q={off}")
    hq = pushforward(Q, h)
    rep.value = finite_divergence(hq, W)
    if rep.value > TIE_TOL:
        rep.violations.append(f"h#Q differs from W by {rep.value:.3g} in total variation")
    return rep


def reciprocity_exhaustive(W: FiniteDistribution, k_q: int, name: str = "") -> Report:
    """verify_reciprocity over every pair (f, h) with f: [K_w] -> [k_q], h: [k_q] -> [K_w]."""
    rep = Report(name or f"W={np.round(W.probs, 4).tolist()} K_q={k_q}", "reciprocity-all")
    held = 0
    for ft in all_maps(W.K, k_q):
        f = FiniteMap(ft, k_q)
        for ht in all_maps(k_q, W.K):
            r = verify_reciprocity(W, f, FiniteMap(ht, W.K))
            held += r.details["hypothesis"]
            if r.violations:
                rep.violations.append(f"f={ft.tolist()} h={ht.tolist()}: {r.violations[0]}")
    rep.details["pairs_meeting_hypothesis"] = held
    rep.value = float(held)
    return rep


# ---------------------------------------------------------------- instances

def _random_masses(rng, K, grid=6):
    """Masses on a coarse grid; ties make several aligned generators likely and atoms may be empty."""
    return FiniteDistribution(rng.multinomial(grid, rng.dirichlet(np.ones(K))) / grid)


def random_feasible_instance(rng: np.random.Generator, max_K: int = 3, max_tries: int = 1000):
    """(X, Z) with an aligned generator and an X-invertible e carrying X onto Z."""
    lo = 2
    if max_K < lo:
        raise ValueError("max_K must be at least 2")
    for _ in range(max_tries):
        kz = int(rng.integers(lo, max_K + 1))
        kx = int(rng.integers(lo, max_K + 1))
        Z = _random_masses(rng, kz)
        g0 = FiniteMap(rng.integers(0, kx, size=kz), kx)
        X = pushforward(Z, g0)
        encs = all_maps(kx, kz)
        ex = pushforward_many(X.probs, encs, kz)
        if any(x_invertible(e, X) and tv_rows(p, Z.probs) <= TIE_TOL for e, p in zip(encs, ex)):
            return X, Z
    raise RuntimeError("could not draw a feasible instance")


def random_reciprocity_instance(rng: np.random.Generator, max_K: int = 3):
    kw = int(rng.integers(1, max_K + 1))
    kq = int(rng.integers(1, max_K + 1))
    return _random_masses(rng, kw), kq


FIXED_GAMES = [
    ("uniform pair", [0.5, 0.5], [0.5, 0.5]),
    ("point mass vs uniform latent", [1.0, 0.0], [0.5, 0.5]),
    ("unreachable masses", [0.7, 0.3], [0.5, 0.5]),
]


def run_certification(max_K: int = 3, trials: int = 50, seed: int = 0, divergence=None) -> list[Report]:
    """Fixed examples plus ``trials`` random feasible instances, every check applied."""
    if max_K > 4:
        raise ValueError("max_K must be <= 4 for game certification")
    rng = np.random.default_rng(seed)
    reports: list[Report] = []

    def games(X, Z, label):
        g1 = certify_game1_saddles(X, Z, divergence, name=f"{label} / game 1")
        g2 = certify_game2_saddles(X, Z, Z, divergence, name=f"{label} / game 2")
        reports.extend([g1, g2])
        checked = not g1.flags and not g2.flags
        if checked and g1.details["saddle_generators"] != g2.details["saddle_generators"]:
            agree = Report(f"{label} / saddle sets", "game-agreement")
            agree.violations.append("games 1 and 2 disagree on the set of saddle generators")
            reports.append(agree)
        reports.append(verify_lemma_inverse(X, Z, name=f"{label} / lemma inverse"))

    for label, x, z in FIXED_GAMES:
        games(FiniteDistribution(x), FiniteDistribution(z), label)
    reports.append(verify_lemma_all_e(FiniteDistribution([0.5, 0.5]), FiniteDistribution([0.5, 0.5]),
                                      divergence, name="equal pair"))
    reports.append(verify_lemma_all_e(FiniteDistribution([0.6, 0.4]), FiniteDistribution([0.5, 0.5]),
                                      divergence, name="unequal pair"))
    W3 = FiniteDistribution(np.full(3, 1 / 3))
    reports.append(verify_reciprocity(W3, FiniteMap([2, 0, 1], 3), FiniteMap([1, 2, 0], 3), name="bijection"))
    W2 = FiniteDistribution([0.5, 0.5, 0.0])
    reports.append(verify_reciprocity(W2, FiniteMap([1, 0, 0], 3), FiniteMap([1, 0, 2], 3),
                                      name="partial support, left inverse"))

    for t in range(trials):
        X, Z = random_feasible_instance(rng, max_K)
        games(X, Z, f"trial {t}")
        a = _random_masses(rng, X.K)
        reports.append(verify_lemma_all_e(X, a, divergence, name=f"trial {t} / lemma all e"))
        W, kq = random_reciprocity_instance(rng, max_K)
        reports.append(reciprocity_exhaustive(W, kq, name=f"trial {t} / reciprocity"))
    return reports


def negated_tv(p: FiniteDistribution, q: FiniteDistribution) -> float:
    """Deliberately wrong divergence used as a mutation canary."""
    return -finite_divergence(p, q)
