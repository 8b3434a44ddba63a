"""Presolve: activity-based bound propagation, structural reformulation of
complementarity and perspective constraints, and partial convexification
of all-binary quadratic objectives.

``run_presolve`` chains the transforms in a fixed order (propagate,
perspective, complementarity) and returns a :class:`PresolveResult` whose
``uncrush`` maps points of the reformulated space back to the original
variable space, so candidate solutions can always be checked against the
problem as parsed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .model import (
    INFINITY,
    Problem,
    QuadConstraint,
    Sense,
    VarKind,
    assemble_symmetric,
    merge_terms,
    split_equality,
    terms_from_symmetric,
)

ARTIFICIAL_BOUND = 1.0e5
_FEAS_EPS = 1e-9


class PresolveError(ValueError):
    pass


@dataclass
class Spectrum:
    """Eigendecomposition of a symmetric matrix; Q = V diag(lam) V'."""

    eigenvalues: np.ndarray  # ascending
    rotation: np.ndarray  # accumulated rotations, for validation only


@dataclass
class PresolveResult:
    problem: Problem
    status: str  # "ok" | "infeasible"
    transforms: list[dict] = field(default_factory=list)
    artificial_bounds: bool = False
    shift: float | None = None  # convexification shift, if applied
    ell: float | None = None
    # original-space reconstruction data
    n_original: int = 0
    kept_original: list[int] = field(default_factory=list)  # reform idx -> original idx
    removed_epigraphs: list[tuple[int, int]] = field(default_factory=list)  # (w_orig, x_reform)
    aux_count: int = 0  # trailing auxiliary binaries in reform space

    def uncrush(self, x: np.ndarray) -> np.ndarray:
        """Map a point of the reformulated space to the original space."""
        x = np.asarray(x, dtype=float)
        out = np.empty(self.n_original)
        for reform_idx, orig_idx in enumerate(self.kept_original):
            out[orig_idx] = x[reform_idx]
        for (w_orig, x_reform) in self.removed_epigraphs:
            out[w_orig] = x[x_reform] ** 2
        return out

    def repair_aux(self, x: np.ndarray) -> np.ndarray:
        """Set complementarity binaries consistently with their pair so
        externally produced candidates satisfy the indicator rows."""
        out = np.asarray(x, dtype=float).copy()
        for rec in self.transforms:
            if rec.get("kind") != "complementarity":
                continue
            i, j, z = rec["i"], rec["j"], rec["z"]
            if out[j] > 1e-9:
                out[z] = 0.0
            elif out[i] > 1e-9:
                out[z] = 1.0
            else:
                out[z] = min(max(round(out[z]), 0.0), 1.0)
        return out


# ---------------------------------------------------------------------------
# bound propagation
# ---------------------------------------------------------------------------


def propagate_bounds(
    problem: Problem, max_rounds: int = 10
) -> tuple[np.ndarray, np.ndarray, str]:
    """Activity-based bound strengthening over the linear constraints.

    Returns tightened ``(lb, ub, status)`` with status ``"ok"`` or
    ``"infeasible"``.  Integer bounds are rounded inward.  Quadratic
    constraints are not propagated.
    """
    lb = problem.lb.copy()
    ub = problem.ub.copy()
    rows = [problem.constraints[i] for i in problem.linear_constraint_indices()
            if problem.constraints[i].sense is Sense.LE]

    def round_inward(k: int) -> None:
        if problem.integrality[k] is not VarKind.CONTINUOUS:
            if math.isfinite(ub[k]):
                ub[k] = math.floor(ub[k] + _FEAS_EPS)
            if math.isfinite(lb[k]):
                lb[k] = math.ceil(lb[k] - _FEAS_EPS)

    for k in range(problem.n):
        round_inward(k)

    for _ in range(max_rounds):
        changed = False
        for con in rows:
            beta = -con.c  # a'x <= beta
            items = list(con.b.items())
            # minimum activity of the full row; refine per variable below
            for k, a_k in items:
                minact = 0.0
                finite = True
                for j, a_j in items:
                    if j == k:
                        continue
                    contrib_bound = lb[j] if a_j > 0 else ub[j]
                    if not math.isfinite(contrib_bound):
                        finite = False
                        break
                    minact += a_j * contrib_bound
                if not finite:
                    continue
                limit = (beta - minact) / a_k
                if a_k > 0:
                    if limit < ub[k] - _FEAS_EPS:
                        ub[k] = limit
                        round_inward(k)
                        changed = True
                else:
                    if limit > lb[k] + _FEAS_EPS:
                        lb[k] = limit
                        round_inward(k)
                        changed = True
        if np.any(lb > ub + _FEAS_EPS):
            return lb, ub, "infeasible"
        if not changed:
            break
    if np.any(lb > ub + _FEAS_EPS):
        return lb, ub, "infeasible"
    return lb, ub, "ok"


# ---------------------------------------------------------------------------
# complementarity reformulation
# ---------------------------------------------------------------------------


def _complementarity_candidates(problem: Problem) -> list[int]:
    out = []
    for idx, con in enumerate(problem.constraints):
        if con.sense is Sense.EQ and len(con.terms) == 1 and not con.b and con.c == 0.0:
            i, j, _ = con.terms[0]
            if i != j:
                out.append(idx)
    return out


def reformulate_complementarity(problem: Problem) -> tuple[Problem, list[dict]]:
    """Replace ``x_i * x_j = 0`` rows by a fresh binary z and big-M rows
    ``x_i <= M_i z``, ``x_j <= M_j (1 - z)`` (z = 0 forces the smaller
    index to zero).

    Requires both variables nonnegative with finite upper bounds;
    non-matching rows are left for the penalty (split into an LE pair by
    the caller).
    """
    records: list[dict] = []
    new_cons: list[QuadConstraint] = []
    added_vars = 0
    n0 = problem.n
    lb = list(problem.lb)
    ub = list(problem.ub)
    kinds = list(problem.integrality)
    candidates = set(_complementarity_candidates(problem))

    for idx, con in enumerate(problem.constraints):
        if idx not in candidates:
            new_cons.append(con)
            continue
        i, j, _ = con.terms[0]
        if problem.lb[i] < 0 or problem.lb[j] < 0 or not (
            math.isfinite(problem.ub[i]) and math.isfinite(problem.ub[j])
        ):
            new_cons.append(con)  # left for the penalty (split later)
            continue
        z = n0 + added_vars
        added_vars += 1
        lb.append(0.0)
        ub.append(1.0)
        kinds.append(VarKind.BINARY)
        m_i, m_j = problem.ub[i], problem.ub[j]
        # z = 0 => x_i <= 0 ; z = 1 => x_j <= 0
        new_cons.append(QuadConstraint([], {i: 1.0, z: -m_i}, 0.0, tag="indicator"))
        new_cons.append(QuadConstraint([], {j: 1.0, z: m_j}, -m_j, tag="indicator"))
        records.append({"kind": "complementarity", "i": i, "j": j, "z": z,
                        "M_i": m_i, "M_j": m_j})

    if not records:
        return problem, []
    out = replace(
        problem,
        n=n0 + added_vars,
        d=np.concatenate([problem.d, np.zeros(added_vars)]),
        constraints=new_cons,
        lb=np.array(lb),
        ub=np.array(ub),
        integrality=kinds,
    )
    return out, records


# ---------------------------------------------------------------------------
# perspective reformulation
# ---------------------------------------------------------------------------


def _match_perspective(problem: Problem, idx: int) -> dict | None:
    """Match constraint ``idx`` against the pattern ``x^2 <= z * w``."""
    con = problem.constraints[idx]
    if con.sense is not Sense.LE or con.b or con.c != 0.0 or len(con.terms) != 2:
        return None
    square = [t for t in con.terms if t[0] == t[1]]
    bilinear = [t for t in con.terms if t[0] != t[1]]
    if len(square) != 1 or len(bilinear) != 1:
        return None
    x, _, a = square[0]
    p, q, bcoef = bilinear[0]
    if a <= 0 or abs(bcoef + a) > 1e-12 * max(1.0, abs(a)):
        return None
    if problem.integrality[p] is VarKind.BINARY and problem.integrality[q] is not VarKind.BINARY:
        z, w = p, q
    elif problem.integrality[q] is VarKind.BINARY and problem.integrality[p] is not VarKind.BINARY:
        z, w = q, p
    else:
        return None
    if x in (z, w):
        return None
    if problem.integrality[w] is not VarKind.CONTINUOUS:
        return None
    if problem.lb[x] < 0 or problem.lb[w] < 0 or not math.isfinite(problem.ub[x]):
        return None
    # w must appear only here and linearly in the objective with c > 0
    coef = problem.d[w]
    if coef <= 0:
        return None
    if any(w in (i, j) for (i, j, _) in problem.terms_obj):
        return None
    for other_idx, other in enumerate(problem.constraints):
        if other_idx == idx:
            continue
        if w in other.b or any(w in (i, j) for (i, j, _) in other.terms):
            return None
    return {"constraint": idx, "x": x, "w": w, "z": z, "coef": coef}


def reformulate_perspective(problem: Problem) -> tuple[Problem, list[dict]]:
    """Rewrite ``min ... + c*w  s.t. x^2 <= z*w`` as ``min ... + c*x^2``
    with an activation row ``x <= ub(x) * z``; the epigraph variable w is
    removed from the problem."""
    matches = []
    used_w: set[int] = set()
    for idx in range(len(problem.constraints)):
        m = _match_perspective(problem, idx)
        if m and m["w"] not in used_w:
            matches.append(m)
            used_w.add(m["w"])
    if not matches:
        return problem, []

    removed = sorted(m["w"] for m in matches)
    removed_set = set(removed)
    old_to_new = {}
    new_idx = 0
    for k in range(problem.n):
        if k not in removed_set:
            old_to_new[k] = new_idx
            new_idx += 1
    drop_cons = {m["constraint"] for m in matches}

    new_terms = [(old_to_new[i], old_to_new[j], q) for (i, j, q) in problem.terms_obj]
    ub = problem.ub.copy()
    for m in matches:
        new_terms.append((old_to_new[m["x"]], old_to_new[m["x"]], m["coef"]))
        if math.isfinite(problem.ub[m["w"]]):
            # original x^2 <= z*w <= ub(w) implies a bound on x
            ub[m["x"]] = min(ub[m["x"]], math.sqrt(max(problem.ub[m["w"]], 0.0)))

    keep = [k for k in range(problem.n) if k not in removed_set]
    new_cons: list[QuadConstraint] = []
    for idx, con in enumerate(problem.constraints):
        if idx in drop_cons:
            continue
        new_cons.append(
            QuadConstraint(
                [(old_to_new[i], old_to_new[j], q) for (i, j, q) in con.terms],
                {old_to_new[k]: v for k, v in con.b.items()},
                con.c,
                con.sense,
                con.tag,
            )
        )
    for m in matches:
        x_new, z_new = old_to_new[m["x"]], old_to_new[m["z"]]
        new_cons.append(
            QuadConstraint([], {x_new: 1.0, z_new: -ub[m["x"]]}, 0.0, tag="perspective")
        )

    records = [
        {"kind": "perspective", "w_original": m["w"], "x_original": m["x"],
         "x_reform": old_to_new[m["x"]], "z_original": m["z"], "coef": m["coef"]}
        for m in matches
    ]
    out = Problem(
        n=len(keep),
        terms_obj=merge_terms(new_terms),
        d=problem.d[keep],
        c0=problem.c0,
        constraints=new_cons,
        lb=problem.lb[keep],
        ub=ub[keep],
        integrality=[problem.integrality[k] for k in keep],
        sense_flag=problem.sense_flag,
        name=problem.name,
    )
    return out, records


# ---------------------------------------------------------------------------
# symmetric eigendecomposition (cyclic Jacobi)
# ---------------------------------------------------------------------------


def eigen_symmetric(q_mat: np.ndarray, max_sweeps: int = 100) -> Spectrum:
    """Eigendecomposition by cyclic Jacobi rotations.

    Sweeps until the largest off-diagonal magnitude is at most
    ``1e-10 * ||Q||_F``.  Eigenvalues are returned ascending with the
    rotation matrix columns reordered to match.
    """
    q_mat = np.asarray(q_mat, dtype=float)
    n = q_mat.shape[0]
    if q_mat.shape != (n, n):
        raise PresolveError("matrix must be square")
    if n > 2000:
        raise PresolveError("matrix too large for the Jacobi eigensolver")
    if n and np.max(np.abs(q_mat - q_mat.T)) > 1e-9:
        raise PresolveError("matrix is not symmetric")

    a = 0.5 * (q_mat + q_mat.T)
    v = np.eye(n)
    fro = np.linalg.norm(a, "fro")
    stop = 1e-10 * fro if fro > 0 else 0.0

    for _ in range(max_sweeps):
        off = 0.0
        for p in range(n - 1):
            row = np.abs(a[p, p + 1:])
            if row.size:
                off = max(off, row.max())
        if off <= stop:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= stop / max(n, 1):
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot_p = c * a[p, :] - s * a[q, :]
                rot_q = s * a[p, :] + c * a[q, :]
                a[p, :], a[q, :] = rot_p, rot_q
                rot_p = c * a[:, p] - s * a[:, q]
                rot_q = s * a[:, p] + c * a[:, q]
                a[:, p], a[:, q] = rot_p, rot_q
                rot_p = c * v[:, p] - s * v[:, q]
                rot_q = s * v[:, p] + c * v[:, q]
                v[:, p], v[:, q] = rot_p, rot_q

    lam = np.diag(a).copy()
    order = np.argsort(lam, kind="stable")
    return Spectrum(eigenvalues=lam[order], rotation=v[:, order])


# ---------------------------------------------------------------------------
# partial convexification of binary quadratics
# ---------------------------------------------------------------------------


def convexify_binary(problem: Problem, ell: float) -> tuple[Problem, float]:
    """Shift the objective Hessian so a proportion ``ell`` of its
    eigenvalues is nonnegative, exact on binary points via ``x^2 = x``.

    With ascending eigenvalues lam_(1..n) and ``j = n - ceil(ell*n) + 1``,
    the shift is ``s = max(0, -lam_(j))``; the transformed objective uses
    ``Q + s*I`` and ``d - s/2`` and agrees with the original on {0,1}^n.
    """
    if not (0.0 <= ell <= 1.0):
        raise PresolveError("convexification proportion must lie in [0, 1]")
    if not problem.is_all_binary():
        raise PresolveError("convexification requires an all-binary problem")
    n = problem.n
    # nudge against float noise in ell*n (e.g. 0.1*30 = 3.0000000000000004)
    target = math.ceil(ell * n - 1e-9)
    if target == 0 or n == 0:
        return problem, 0.0
    q_mat = assemble_symmetric(n, problem.terms_obj)
    spectrum = eigen_symmetric(q_mat)
    lam_j = spectrum.eigenvalues[n - target]  # lam_(j), 1-based j = n - target + 1
    shift = max(0.0, -float(lam_j))
    if shift == 0.0:
        return problem, 0.0
    q_new = q_mat + shift * np.eye(n)
    out = replace(
        problem,
        terms_obj=terms_from_symmetric(q_new),
        d=problem.d - shift / 2.0,
    )
    return out, shift


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------


def run_presolve(problem: Problem, max_rounds: int = 10) -> PresolveResult:
    """Propagate bounds, apply structural reformulations, finalize bounds.

    Any EQ constraint not consumed by the complementarity transform is
    split into an LE pair so the penalty relaxation applies; remaining
    infinite bounds become artificial bounds of +-1e5 (flagged).
    """
    n_original = problem.n
    lb, ub, status = propagate_bounds(problem, max_rounds)
    transforms: list[dict] = [{"kind": "propagate", "rounds": max_rounds}]
    if status == "infeasible":
        return PresolveResult(problem=problem, status="infeasible",
                              transforms=transforms, n_original=n_original,
                              kept_original=list(range(n_original)))
    work = replace(problem.copy(), lb=lb, ub=ub)

    work, persp_records = reformulate_perspective(work)
    transforms.extend(persp_records)
    kept = [k for k in range(n_original)
            if k not in {r["w_original"] for r in persp_records}]
    removed_epigraphs = [(r["w_original"], r["x_reform"]) for r in persp_records]

    work, comp_records = reformulate_complementarity(work)
    transforms.extend(comp_records)
    aux_count = len(comp_records)

    # leftover equalities (complementarities the transform skipped)
    new_cons: list[QuadConstraint] = []
    for con in work.constraints:
        if con.sense is Sense.EQ:
            new_cons.extend(split_equality(con))
        else:
            new_cons.append(con)
    work = replace(work, constraints=new_cons)

    artificial = False
    lb, ub = work.lb.copy(), work.ub.copy()
    for k in range(work.n):
        if not math.isfinite(lb[k]):
            lb[k] = -ARTIFICIAL_BOUND
            artificial = True
        if not math.isfinite(ub[k]):
            ub[k] = ARTIFICIAL_BOUND
            artificial = True
    work = replace(work, lb=lb, ub=ub)

    return PresolveResult(
        problem=work,
        status="ok",
        transforms=transforms,
        artificial_bounds=artificial,
        n_original=n_original,
        kept_original=kept,
        removed_epigraphs=removed_epigraphs,
        aux_count=aux_count,
    )
