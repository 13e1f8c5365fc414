"""Query-set metrics: QwP, L2, angular error, and the success rates.

QwP is the fraction of queries with poses for both the query frame and at
least one response-track frame; it upper-bounds the overall success rate.
A posed query succeeds when its L2 and angular errors both fall under the
thresholds, measured either between world vectors or between query-frame
displacement vectors (configurable; L2 is identical in both for rigid
registrations, the angle is not).  Succ divides successes by all queries,
Succ* by posed queries only.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SchemaError
from .localization import QueryResult, VisualQuery

# shipped defaults; the challenge's official thresholds are not public, so
# reports always print the values used
DEFAULT_L2_MAX_M = 6.0
DEFAULT_ANGLE_MAX_RAD = 0.52


class MetricSpace(enum.Enum):
    WORLD = "world"
    QUERY_FRAME = "query_frame"


@dataclass(frozen=True)
class MetricThresholds:
    l2_max: float = DEFAULT_L2_MAX_M
    angle_max: float = DEFAULT_ANGLE_MAX_RAD
    space: MetricSpace = MetricSpace.QUERY_FRAME

    def __post_init__(self):
        if not (self.l2_max > 0 and self.angle_max > 0):
            raise DomainError("metric thresholds must be positive")


@dataclass(frozen=True)
class PerQueryRow:
    query_id: str
    has_pose: bool
    success: bool
    l2: float | None
    angle: float | None


@dataclass(frozen=True)
class EvaluationSummary:
    n_queries: int
    n_posed: int
    n_success: int
    qwp: float
    succ: float
    succ_star: float
    mean_l2: float | None
    mean_angle: float | None
    thresholds: MetricThresholds
    per_query: tuple[PerQueryRow, ...]


def l2_error(pred, gt) -> float:
    """Euclidean distance between prediction and ground truth."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if not (np.all(np.isfinite(pred)) and np.all(np.isfinite(gt))):
        raise DomainError("l2_error requires finite vectors")
    return float(np.linalg.norm(pred - gt))


def angular_error(pred, gt) -> float:
    """Angle in [0, pi] between two non-zero vectors.

    atan2 of the cross and dot products; unlike arccos of the normalized
    dot it keeps full precision for nearly parallel vectors.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if float(np.linalg.norm(pred)) == 0.0 or float(np.linalg.norm(gt)) == 0.0:
        raise DomainError("angular_error is undefined for zero vectors")
    cross = float(np.linalg.norm(np.cross(pred, gt)))
    return math.atan2(cross, float(np.dot(pred, gt)))


def _safe_angle(pred, gt) -> float:
    # degenerate zero vectors: identical -> 0, else worst case
    try:
        return angular_error(pred, gt)
    except DomainError:
        return 0.0 if l2_error(pred, gt) == 0.0 else math.pi


def evaluate(
    results: list[QueryResult],
    queries: list[VisualQuery],
    thresholds: MetricThresholds = MetricThresholds(),
) -> EvaluationSummary:
    """Score results against their queries.

    Results and queries must pair one-to-one by query_id (SchemaError
    otherwise).  Mean L2/angle run over posed queries with predictions;
    posed queries without predictions count toward QwP but never succeed.
    """
    by_id = {}
    for q in queries:
        if q.query_id in by_id:
            raise SchemaError(f"duplicate query id {q.query_id!r}")
        by_id[q.query_id] = q
    seen = set()
    for r in results:
        if r.query_id in seen:
            raise SchemaError(f"duplicate result id {r.query_id!r}")
        seen.add(r.query_id)
    if seen != set(by_id):
        missing = sorted(set(by_id) - seen)[:3]
        extra = sorted(seen - set(by_id))[:3]
        raise SchemaError(
            f"results do not align with queries (missing {missing}, unmatched {extra})"
        )

    rows = []
    l2s = []
    angles = []
    n_posed = 0
    n_success = 0
    for r in results:
        q = by_id[r.query_id]
        if not r.has_pose:
            rows.append(PerQueryRow(r.query_id, False, False, None, None))
            continue
        n_posed += 1
        if r.pred_vec_world is None:
            rows.append(PerQueryRow(r.query_id, True, False, None, None))
            continue
        if thresholds.space is MetricSpace.WORLD:
            pred, gt = r.pred_vec_world, q.gt_world
        else:
            if r.gt_vec_q is None or r.pred_vec_q is None:
                raise SchemaError(
                    f"result {r.query_id!r} lacks query-frame vectors required for "
                    "query_frame-space evaluation"
                )
            pred, gt = r.pred_vec_q, r.gt_vec_q
        l2 = l2_error(pred, gt)
        angle = _safe_angle(pred, gt)
        success = l2 <= thresholds.l2_max and angle <= thresholds.angle_max
        n_success += success
        l2s.append(l2)
        angles.append(angle)
        rows.append(PerQueryRow(r.query_id, True, bool(success), l2, angle))

    n = len(results)
    return EvaluationSummary(
        n_queries=n,
        n_posed=n_posed,
        n_success=n_success,
        qwp=n_posed / n if n else 0.0,
        succ=n_success / n if n else 0.0,
        succ_star=n_success / n_posed if n_posed else 0.0,
        mean_l2=float(np.mean(l2s)) if l2s else None,
        mean_angle=float(np.mean(angles)) if angles else None,
        thresholds=thresholds,
        per_query=tuple(rows),
    )


# ---------------------------------------------------------------------------
# Report rendering: plain text, CSV, JSON.  Percentages display with two
# decimals; CSV and JSON additionally carry full-precision fields so they
# parse back to the exact summary.
# ---------------------------------------------------------------------------

def _pct(x: float) -> str:
    return f"{100.0 * x:.2f}"


def _opt(x, fmt="{:.2f}") -> str:
    return "n/a" if x is None else fmt.format(x)


def render_text(summary: EvaluationSummary) -> str:
    t = summary.thresholds
    header = f"{'queries':>8} {'QwP(%)':>8} {'Succ(%)':>8} {'Succ*(%)':>9} {'L2(m)':>8} {'angle(rad)':>11}"
    row = (
        f"{summary.n_queries:>8} {_pct(summary.qwp):>8} {_pct(summary.succ):>8} "
        f"{_pct(summary.succ_star):>9} {_opt(summary.mean_l2):>8} {_opt(summary.mean_angle):>11}"
    )
    note = (
        f"success: L2 <= {t.l2_max} m and angle <= {t.angle_max} rad "
        f"in {t.space.value} space; {summary.n_posed}/{summary.n_queries} posed, "
        f"{summary.n_success} succeeded"
    )
    return "\n".join([header, row, note]) + "\n"


def render_csv(summary: EvaluationSummary) -> str:
    t = summary.thresholds
    lines = ["metric,value"]
    lines += [
        f"n_queries,{summary.n_queries}",
        f"n_posed,{summary.n_posed}",
        f"n_success,{summary.n_success}",
        f"qwp,{summary.qwp!r}",
        f"succ,{summary.succ!r}",
        f"succ_star,{summary.succ_star!r}",
        f"qwp_pct,{_pct(summary.qwp)}",
        f"succ_pct,{_pct(summary.succ)}",
        f"succ_star_pct,{_pct(summary.succ_star)}",
        f"mean_l2,{'' if summary.mean_l2 is None else repr(summary.mean_l2)}",
        f"mean_angle,{'' if summary.mean_angle is None else repr(summary.mean_angle)}",
        f"l2_max,{t.l2_max!r}",
        f"angle_max,{t.angle_max!r}",
        f"space,{t.space.value}",
        "",
        "query_id,has_pose,success,l2,angle",
    ]
    for row in summary.per_query:
        lines.append(
            f"{row.query_id},{str(row.has_pose).lower()},{str(row.success).lower()},"
            f"{'' if row.l2 is None else repr(row.l2)},"
            f"{'' if row.angle is None else repr(row.angle)}"
        )
    return "\n".join(lines) + "\n"


def render_json(summary: EvaluationSummary) -> str:
    t = summary.thresholds
    doc = {
        "summary": {
            "n_queries": summary.n_queries,
            "n_posed": summary.n_posed,
            "n_success": summary.n_success,
            "qwp": summary.qwp,
            "succ": summary.succ,
            "succ_star": summary.succ_star,
            "qwp_pct": _pct(summary.qwp),
            "succ_pct": _pct(summary.succ),
            "succ_star_pct": _pct(summary.succ_star),
            "mean_l2": summary.mean_l2,
            "mean_angle": summary.mean_angle,
        },
        "thresholds": {
            "l2_max": t.l2_max,
            "angle_max": t.angle_max,
            "space": t.space.value,
        },
        "per_query": [
            {
                "query_id": r.query_id,
                "has_pose": r.has_pose,
                "success": r.success,
                "l2": r.l2,
                "angle": r.angle,
            }
            for r in summary.per_query
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def render_report(summary: EvaluationSummary, fmt: str = "text") -> str:
    if fmt == "text":
        return render_text(summary)
    if fmt == "csv":
        return render_csv(summary)
    if fmt == "json":
        return render_json(summary)
    raise DomainError(f"unknown report format {fmt!r}")


def parse_report_json(text: str) -> EvaluationSummary:
    try:
        doc = json.loads(text)
        s = doc["summary"]
        t = doc["thresholds"]
        rows = tuple(
            PerQueryRow(r["query_id"], r["has_pose"], r["success"], r["l2"], r["angle"])
            for r in doc["per_query"]
        )
        return EvaluationSummary(
            n_queries=s["n_queries"],
            n_posed=s["n_posed"],
            n_success=s["n_success"],
            qwp=s["qwp"],
            succ=s["succ"],
            succ_star=s["succ_star"],
            mean_l2=s["mean_l2"],
            mean_angle=s["mean_angle"],
            thresholds=MetricThresholds(t["l2_max"], t["angle_max"], MetricSpace(t["space"])),
            per_query=rows,
        )
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad JSON report: {exc}") from None


def parse_report_csv(text: str) -> EvaluationSummary:
    try:
        blocks = text.split("\n\n")
        kv = {}
        for line in blocks[0].splitlines()[1:]:
            key, _, value = line.partition(",")
            kv[key] = value
        rows = []
        for line in blocks[1].splitlines()[1:]:
            if not line:
                continue
            qid, has_pose, success, l2, angle = line.split(",")
            rows.append(
                PerQueryRow(
                    qid,
                    has_pose == "true",
                    success == "true",
                    float(l2) if l2 else None,
                    float(angle) if angle else None,
                )
            )
        return EvaluationSummary(
            n_queries=int(kv["n_queries"]),
            n_posed=int(kv["n_posed"]),
            n_success=int(kv["n_success"]),
            qwp=float(kv["qwp"]),
            succ=float(kv["succ"]),
            succ_star=float(kv["succ_star"]),
            mean_l2=float(kv["mean_l2"]) if kv["mean_l2"] else None,
            mean_angle=float(kv["mean_angle"]) if kv["mean_angle"] else None,
            thresholds=MetricThresholds(
                float(kv["l2_max"]), float(kv["angle_max"]), MetricSpace(kv["space"])
            ),
            per_query=tuple(rows),
        )
    except (KeyError, ValueError, IndexError) as exc:
        raise SchemaError(f"bad CSV report: {exc}") from None
