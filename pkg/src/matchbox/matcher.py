"""Template-vs-template matching.

Score construction: full pairwise cosine matrix between the two descriptor
sets, top-120 candidate pairs, a geometric consistency filter over a
pair-compatibility graph (greedy, seeded from the strongest pair, each new
pair must be compatible with everything already selected), and the sum of
the surviving cosine similarities as the match score.

Everything is deterministic: ties break lexicographically on
(similarity descending, probe index, gallery index).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .extract import Minutia

TOP_K = 120
EPS_DIST_500 = 15.0  # px at 500 ppi
EPS_THETA = math.pi / 12.0
TEMPLATE_CAP = 512

_KIND_CODE = {"ending": 0, "bifurcation": 1}
_KIND_NAME = {0: "ending", 1: "bifurcation"}


@dataclass
class MatchParams:
    """Geometric tolerances; distances scale with template resolution."""

    k: int = TOP_K
    eps_dist: float = EPS_DIST_500
    eps_theta: float = EPS_THETA


@dataclass
class Template:
    """Minutiae plus index-aligned unit descriptors; the unit of storage.

    Arrays: xy (N,2) float32, theta (N,) float32, kinds (N,) uint8,
    quality (N,) float32, descriptors (N,D) float32.  float32 keeps the
    in-memory form identical to the on-disk form so matching is bitwise
    reproducible across save/load.
    """

    xy: np.ndarray
    theta: np.ndarray
    kinds: np.ndarray
    quality: np.ndarray
    descriptors: np.ndarray
    source_ppi: int = 500
    _hash: str | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.xy = np.ascontiguousarray(self.xy, dtype=np.float32).reshape(-1, 2)
        self.theta = np.ascontiguousarray(self.theta, dtype=np.float32).ravel()
        self.kinds = np.ascontiguousarray(self.kinds, dtype=np.uint8).ravel()
        self.quality = np.ascontiguousarray(self.quality, dtype=np.float32).ravel()
        self.descriptors = np.ascontiguousarray(self.descriptors, dtype=np.float32)
        if self.descriptors.ndim != 2:
            raise InvalidInputError("descriptors must be a 2-D array")
        n = len(self.xy)
        if not (len(self.theta) == len(self.kinds) == len(self.quality) == n):
            raise InvalidInputError("minutiae arrays are not index-aligned")
        if len(self.descriptors) != n:
            raise InvalidInputError("descriptor count != minutiae count")
        if n > TEMPLATE_CAP:
            raise InvalidInputError(f"template exceeds {TEMPLATE_CAP} minutiae")

    @classmethod
    def build(
        cls,
        minutiae: list[Minutia],
        descriptors: np.ndarray,
        source_ppi: int = 500,
    ) -> "Template":
        from .descriptor import DESCRIPTOR_DIM

        n = len(minutiae)
        descriptors = np.asarray(descriptors, dtype=np.float32)
        if n == 0:
            descriptors = descriptors.reshape(0, DESCRIPTOR_DIM)
        return cls(
            xy=np.array([[m.x, m.y] for m in minutiae], dtype=np.float32).reshape(-1, 2),
            theta=np.array([m.theta for m in minutiae], dtype=np.float32),
            kinds=np.array([_KIND_CODE[m.kind] for m in minutiae], dtype=np.uint8),
            quality=np.array([m.quality for m in minutiae], dtype=np.float32),
            descriptors=descriptors,
            source_ppi=source_ppi,
        )

    def __len__(self) -> int:
        return len(self.xy)

    @property
    def minutiae(self) -> list[Minutia]:
        return [
            Minutia(
                float(self.xy[i, 0]),
                float(self.xy[i, 1]),
                float(self.theta[i]),
                _KIND_NAME[int(self.kinds[i])],
                float(self.quality[i]),
            )
            for i in range(len(self))
        ]

    @property
    def quality_summary(self) -> float:
        return float(self.quality.mean()) if len(self) else 0.0

    def content_hash(self) -> str:
        if self._hash is None:
            h = hashlib.sha256()
            h.update(len(self).to_bytes(4, "little"))
            h.update(int(self.source_ppi).to_bytes(4, "little"))
            for arr in (self.xy, self.theta, self.kinds, self.quality, self.descriptors):
                h.update(np.ascontiguousarray(arr).tobytes())
            self._hash = h.hexdigest()
        return self._hash


@dataclass(frozen=True)
class CandidatePair:
    i: int  # probe minutia index
    j: int  # gallery minutia index
    sim: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "sim", float(min(max(self.sim, -1.0), 1.0)))


@dataclass
class MatchResult:
    score: float
    pairs: list[CandidatePair]
    decision: str  # "accept" | "reject"
    threshold_used: float

    @property
    def accepted(self) -> bool:
        return self.decision == "accept"


def _similarity_matrix(probe: Template, gallery: Template) -> np.ndarray:
    if probe.descriptors.shape[1] != gallery.descriptors.shape[1]:
        raise InvalidInputError(
            "descriptor dimensions differ: "
            f"{probe.descriptors.shape[1]} vs {gallery.descriptors.shape[1]}"
        )
    return probe.descriptors.astype(np.float64) @ gallery.descriptors.astype(np.float64).T


def candidate_pairs(
    probe: Template, gallery: Template, k: int = TOP_K
) -> list[CandidatePair]:
    """Top-k descriptor pairs by cosine, ties broken by (i, j)."""
    if len(probe) == 0 or len(gallery) == 0:
        return []
    sims = _similarity_matrix(probe, gallery)
    ii, jj = np.meshgrid(np.arange(len(probe)), np.arange(len(gallery)), indexing="ij")
    ii, jj, ss = ii.ravel(), jj.ravel(), sims.ravel()
    order = np.lexsort((jj, ii, -ss))[: min(k, ss.size)]
    return [CandidatePair(int(ii[t]), int(jj[t]), float(ss[t])) for t in order]


def _wrap(a: np.ndarray) -> np.ndarray:
    return np.mod(a + math.pi, 2.0 * math.pi) - math.pi


def compatibility_matrix(
    pairs: list[CandidatePair],
    probe: Template,
    gallery: Template,
    params: MatchParams,
) -> np.ndarray:
    """Pairwise compatibility of candidate pairs.

    Two pairs are compatible iff they claim disjoint minutiae on both
    sides, their intra-template distances agree within eps_dist, and both
    the direction-difference and the two radial angles agree within
    eps_theta.  All constraints use relative geometry only, so the matrix
    is invariant under a rigid motion of either template.
    """
    n = len(pairs)
    pi = np.array([p.i for p in pairs])
    pj = np.array([p.j for p in pairs])
    pxy = probe.xy.astype(np.float64)[pi]
    gxy = gallery.xy.astype(np.float64)[pj]
    pth = probe.theta.astype(np.float64)[pi]
    gth = gallery.theta.astype(np.float64)[pj]

    scale = probe.source_ppi / 500.0
    eps_d = params.eps_dist * scale

    dvec_p = pxy[None, :, :] - pxy[:, None, :]
    dvec_g = gxy[None, :, :] - gxy[:, None, :]
    dp = np.hypot(dvec_p[..., 0], dvec_p[..., 1])
    dg = np.hypot(dvec_g[..., 0], dvec_g[..., 1])
    dist_ok = np.abs(dp - dg) < eps_d

    ddir = np.abs(_wrap((pth[:, None] - pth[None, :]) - (gth[:, None] - gth[None, :])))
    dir_ok = ddir < params.eps_theta

    phi_p = np.arctan2(dvec_p[..., 1], dvec_p[..., 0])
    phi_g = np.arctan2(dvec_g[..., 1], dvec_g[..., 0])
    # radial angle at the row pair's endpoint; requiring it and its
    # transpose covers both endpoints of the unordered pair
    alpha = np.abs(_wrap((phi_p - pth[:, None]) - (phi_g - gth[:, None])))
    radial_ok = (alpha < params.eps_theta) & (alpha.T < params.eps_theta)

    disjoint = (pi[:, None] != pi[None, :]) & (pj[:, None] != pj[None, :])

    compat = dist_ok & dir_ok & radial_ok & disjoint
    np.fill_diagonal(compat, False)
    return compat


def consistency_filter(
    pairs: list[CandidatePair],
    probe: Template,
    gallery: Template,
    params: MatchParams | None = None,
) -> list[CandidatePair]:
    """Greedy consistent subset: seed with the strongest pair, then admit
    each pair only if compatible with everything already admitted."""
    if not pairs:
        return []
    params = params or MatchParams()
    compat = compatibility_matrix(pairs, probe, gallery, params)
    n = len(pairs)
    admissible = np.ones(n, dtype=bool)
    selected: list[int] = []
    for idx in range(n):
        if admissible[idx]:
            selected.append(idx)
            admissible &= compat[idx]
    return [pairs[s] for s in selected]


def _match_oriented(
    probe: Template, gallery: Template, params: MatchParams
) -> tuple[float, list[CandidatePair]]:
    pairs = candidate_pairs(probe, gallery, params.k)
    chosen = consistency_filter(pairs, probe, gallery, params)
    score = float(np.sum([p.sim for p in chosen], dtype=np.float64)) if chosen else 0.0
    return score, chosen


def match(
    probe: Template,
    gallery: Template,
    threshold: float = 20.0,
    params: MatchParams | None = None,
) -> MatchResult:
    """Compare two templates; accept iff the summed score clears threshold.

    The comparison canonicalizes operand order by template content hash,
    so match(a, b) and match(b, a) produce identical scores.
    """
    params = params or MatchParams()
    if len(probe) == 0 or len(gallery) == 0:
        return MatchResult(0.0, [], "reject", threshold)
    if gallery.content_hash() < probe.content_hash():
        score, chosen = _match_oriented(gallery, probe, params)
        chosen = [CandidatePair(p.j, p.i, p.sim) for p in chosen]
    else:
        score, chosen = _match_oriented(probe, gallery, params)
    decision = "accept" if score >= threshold else "reject"
    return MatchResult(score, chosen, decision, threshold)
