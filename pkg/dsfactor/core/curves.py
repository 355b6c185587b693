"""Approximation error versus storage, dense-sparse against low-rank."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from dsfactor.core.factorization import BlockPlan, factorize, reconstruct
from dsfactor.core.ksvd import KsvdConfig, lowrank_bytes, lowrank_error
from dsfactor.core.matrix import as_matrix, frobenius_error
from dsfactor.core.planner import FLOAT_BYTES, compression_report
from dsfactor.utils.errors import ValidationError

log = logging.getLogger(__name__)

CURVE_COLUMNS = ("method", "bytes", "cr", "rel_error")


@dataclass(frozen=True)
class CurvePoint:
    method: str
    bytes: float
    cr: float
    rel_error: float
    label: str = ""

    def as_row(self) -> Dict[str, object]:
        return {"method": self.method, "bytes": self.bytes, "cr": self.cr, "rel_error": self.rel_error}


def matched_rank(m: int, n: int, budget: float) -> int:
    """Largest rank whose U, V storage fits in ``budget`` bytes (0 if none)."""
    return min(int(budget // (FLOAT_BYTES * (m + n))), min(m, n))


def error_curve(w: np.ndarray, plans: Sequence[BlockPlan], ranks: Optional[Sequence[int]] = None,
                cfg: KsvdConfig = KsvdConfig(), threads: int = 1) -> List[CurvePoint]:
    """One point per plan ("ds") and per rank ("lowrank").

    With ``ranks=None`` every plan gets the largest low-rank budget not above its own.
    """
    w = as_matrix(w, "w")
    m, n = w.shape
    if not plans:
        raise ValidationError("error_curve needs at least one plan")
    dense = FLOAT_BYTES * m * n
    if not np.any(w):
        raise ValidationError("error_curve needs a non-zero matrix")

    points = []
    for plan in plans:
        report = compression_report(m, n, plan)
        f = factorize(w, plan, cfg, threads)
        err = frobenius_error(w, reconstruct(f))
        points.append(CurvePoint("ds", report.ds_bytes_packed, report.cr, err,
                                 f"B={plan.b},K={plan.k},S={plan.s}"))
        log.info("ds %s: cr %.4f rel err %.5f", points[-1].label, report.cr, err)

    if ranks is None:
        ranks = sorted({r for r in (matched_rank(m, n, p.bytes) for p in points) if r >= 1})
    if not ranks:
        raise ValidationError("error_curve needs at least one rank")
    ref = float(np.linalg.norm(w))
    for r in ranks:
        nbytes = lowrank_bytes(m, n, r)
        err = lowrank_error(w, r) / ref
        points.append(CurvePoint("lowrank", nbytes, nbytes / dense, err, f"rank={r}"))
        log.info("lowrank rank=%d: cr %.4f rel err %.5f", r, nbytes / dense, err)
    return points


def dominance(points: Sequence[CurvePoint]) -> List[Tuple[CurvePoint, Optional[CurvePoint], bool]]:
    """For each ds point, the best low-rank point within its byte budget and whether ds wins."""
    low = [p for p in points if p.method == "lowrank"]
    out = []
    for p in (q for q in points if q.method == "ds"):
        within = [q for q in low if q.bytes <= p.bytes]
        rival = min(within, key=lambda q: q.rel_error) if within else None
        out.append((p, rival, rival is None or p.rel_error < rival.rel_error))
    return out
