"""Contrastive retrieval losses with hand-derived gradients.

Two losses are provided for a question embedding ``q``, its positive
passage ``pos`` and negatives ``negs``:

``mdpr_loss``
    Negative log-softmax of the positive among dot-product scores, the
    standard dense-passage-retrieval objective.

``mixcse_loss``
    The same log-softmax over cosine similarities divided by a temperature,
    with one extra synthetic hard negative: the normalized convex mixture of
    the positive and a chosen negative. The mixture is wrapped in a
    stop-gradient, so it acts as a constant vector. Only ``grad_q`` sees it.

Gradients are closed forms. ``finite_diff_check`` compares them against
central differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ArgumentError,
    DegenerateMixError,
    NormalizationError,
    ShapeError,
)

UNIT_TOL = 1e-6


@dataclass(frozen=True)
class ContrastiveBatch:
    """One ``(question, positive, negatives)`` training tuple."""

    q: np.ndarray
    pos: np.ndarray
    negs: np.ndarray  # (n, dim)

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64)
        pos = np.asarray(self.pos, dtype=np.float64)
        negs = np.asarray(self.negs, dtype=np.float64)
        if negs.ndim == 1 and negs.size == 0:
            negs = negs.reshape(0, q.shape[0] if q.ndim == 1 else 0)
        if q.ndim != 1 or q.size < 1:
            raise ShapeError(f"q must be a nonempty vector, got shape {q.shape}")
        if pos.shape != q.shape:
            raise ShapeError(f"pos shape {pos.shape} != q shape {q.shape}")
        if negs.ndim != 2 or negs.shape[1] != q.shape[0]:
            raise ShapeError(f"negs shape {negs.shape} incompatible with dim {q.shape[0]}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "pos", pos)
        object.__setattr__(self, "negs", negs)

    @property
    def dim(self) -> int:
        return self.q.shape[0]

    @property
    def n_negatives(self) -> int:
        return self.negs.shape[0]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.q, self.pos, self.negs.ravel()])

    def with_flat(self, x: np.ndarray) -> "ContrastiveBatch":
        d = self.dim
        return ContrastiveBatch(x[:d], x[d : 2 * d], x[2 * d :].reshape(self.negs.shape))


@dataclass(frozen=True)
class MixParams:
    lam: float = 0.2
    tau: float = 0.05
    neg_index: int = 0
    # if set, used verbatim as the mixed negative instead of recomputing it
    frozen_mix: np.ndarray | None = None

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ArgumentError(f"lambda must lie in (0, 1), got {self.lam}")
        if not self.tau > 0.0:
            raise ArgumentError(f"tau must be positive, got {self.tau}")
        if self.neg_index < 0:
            raise ArgumentError(f"neg_index must be non-negative, got {self.neg_index}")


@dataclass(frozen=True)
class LossResult:
    value: float
    grad_q: np.ndarray
    grad_pos: np.ndarray
    grad_negs: np.ndarray
    mixed_negative: np.ndarray | None = None

    def flat_grad(self) -> np.ndarray:
        return np.concatenate([self.grad_q, self.grad_pos, self.grad_negs.ravel()])


def _softmax_ce(logits: np.ndarray) -> tuple[float, np.ndarray]:
    """``-log softmax(logits)[0]`` and its gradient w.r.t. ``logits``.

    When the positive logit is the largest, the value is evaluated as
    ``log1p(sum exp(z_j - z_0))`` and the positive's gradient as
    ``-sum(p_j)``, which keeps tiny losses and their gradients accurate.
    """
    z0 = logits[0]
    m = logits.max()
    shifted = np.exp(logits - m)
    total = shifted.sum()
    probs = shifted / total
    grad = probs.copy()
    grad[0] = -probs[1:].sum()
    if m == z0:
        value = math.log1p(float(np.exp(logits[1:] - z0).sum()))
    else:
        value = float(m - z0 + math.log(total))
    return value, grad


def _check_negatives(batch: ContrastiveBatch) -> None:
    if batch.n_negatives == 0:
        raise ArgumentError("contrastive loss needs at least one negative")


def mdpr_loss(batch: ContrastiveBatch, form: str = "softmax") -> LossResult:
    """Dense-retrieval loss over dot-product scores.

    ``form="softmax"`` (default) is ``-log(exp<q,p+> / (exp<q,p+> + sum_j exp<q,p_j>))``.
    ``form="linear_ratio"`` drops the exponentials, i.e. the ratio of raw dot
    products. It is only defined while all scores keep the ratio positive and
    is exposed for inspection, not training.
    """
    _check_negatives(batch)
    q, pos, negs = batch.q, batch.pos, batch.negs
    scores = np.concatenate([[pos @ q], negs @ q])
    if form == "softmax":
        value, g = _softmax_ce(scores)
    elif form == "linear_ratio":
        total = scores.sum()
        if scores[0] <= 0 or total <= 0:
            raise ArgumentError("linear-ratio loss undefined for non-positive scores")
        value = math.log(total) - math.log(scores[0])
        g = np.full_like(scores, 1.0 / total)
        g[0] -= 1.0 / scores[0]
    else:
        raise ArgumentError(f"unknown mdpr loss form {form!r}")
    grad_q = g[0] * pos + g[1:] @ negs
    return LossResult(value, grad_q, g[0] * q, np.outer(g[1:], q))


def mix_negative(pos: np.ndarray, neg: np.ndarray, lam: float) -> np.ndarray:
    """Unit-normalized convex mixture ``lam*pos + (1-lam)*neg``."""
    pos = np.asarray(pos, dtype=np.float64)
    neg = np.asarray(neg, dtype=np.float64)
    if pos.shape != neg.shape:
        raise ShapeError(f"pos shape {pos.shape} != neg shape {neg.shape}")
    mix = lam * pos + (1.0 - lam) * neg
    norm = float(np.linalg.norm(mix))
    if norm <= 1e-12:
        raise DegenerateMixError(f"mixture of positive and negative vanishes (lambda={lam})")
    return mix / norm


def _cos_and_grads(a: np.ndarray, b: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """``cos(a, b)`` with its gradients w.r.t. ``a`` and ``b``."""
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    c = float(a @ b) / (na * nb)
    ga = b / (na * nb) - c * a / (na * na)
    gb = a / (na * nb) - c * b / (nb * nb)
    return c, ga, gb


def cosine_contrastive_loss(
    batch: ContrastiveBatch,
    tau: float,
    constant_negs: Sequence[np.ndarray] = (),
) -> LossResult:
    """Temperature-scaled cosine InfoNCE with extra negatives treated as constants.

    ``constant_negs`` join the denominator, but no gradient is reported for
    them. ``grad_q`` still accounts for them.
    """
    _check_negatives(batch)
    q, pos, negs = batch.q, batch.pos, batch.negs
    c_pos, gq_pos, gp = _cos_and_grads(q, pos)
    neg_terms = [_cos_and_grads(q, n) for n in negs]
    const_terms = [_cos_and_grads(q, np.asarray(v, dtype=np.float64)) for v in constant_negs]

    logits = np.array(
        [c_pos] + [t[0] for t in neg_terms] + [t[0] for t in const_terms]
    ) / tau
    value, g = _softmax_ce(logits)
    g = g / tau

    grad_q = g[0] * gq_pos
    for gj, (_, gq, _) in zip(g[1:], neg_terms + const_terms):
        grad_q = grad_q + gj * gq
    grad_pos = g[0] * gp
    n = len(neg_terms)
    grad_negs = np.array([gj * gn for gj, (_, _, gn) in zip(g[1 : n + 1], neg_terms)])
    return LossResult(value, grad_q, grad_pos, grad_negs.reshape(negs.shape))


def _check_unit(batch: ContrastiveBatch) -> None:
    vecs = np.vstack([batch.q, batch.pos, batch.negs])
    norms = np.linalg.norm(vecs, axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_TOL)
    if bad.size:
        names = ["q", "pos"] + [f"negs[{j}]" for j in range(batch.n_negatives)]
        raise NormalizationError(
            f"mixcse inputs must be unit-norm; {names[bad[0]]} has norm {norms[bad[0]]:.8g}"
        )


def mixcse_loss(batch: ContrastiveBatch, params: MixParams = MixParams(), check_unit: bool = True) -> LossResult:
    """MixCSE loss: cosine InfoNCE plus one stop-gradient mixed hard negative.

    The mixed negative is built from ``pos`` and ``negs[params.neg_index]``
    unless ``params.frozen_mix`` pins it. Either way it enters the loss as a
    constant, so ``grad_pos`` and ``grad_negs`` carry no contribution through
    it.
    """
    _check_negatives(batch)
    if params.neg_index >= batch.n_negatives:
        raise ArgumentError(
            f"neg_index {params.neg_index} out of range for {batch.n_negatives} negatives"
        )
    if params.frozen_mix is not None:
        mixed = np.asarray(params.frozen_mix, dtype=np.float64)
    else:
        if check_unit:
            _check_unit(batch)
        mixed = mix_negative(batch.pos, batch.negs[params.neg_index], params.lam)
    res = cosine_contrastive_loss(batch, params.tau, constant_negs=(mixed,))
    return replace(res, mixed_negative=mixed)


# ---------------------------------------------------------------------------
# Verification


def finite_diff_check(
    loss: Callable[..., LossResult],
    batch: ContrastiveBatch,
    params: MixParams | None = None,
    epsilon: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error per coordinate is ``|a - n| / max(1e-12, |a| + |n|)``.
    When the analytic result carries a mixed negative, it is frozen for the
    perturbed evaluations, which is what the stop-gradient means.
    """
    if not epsilon > 0.0:
        raise ArgumentError(f"epsilon must be positive, got {epsilon}")

    def call(b: ContrastiveBatch, p: MixParams | None) -> LossResult:
        return loss(b) if p is None else loss(b, p)

    base = call(batch, params)
    eval_params = params
    if base.mixed_negative is not None and params is not None:
        eval_params = replace(params, frozen_mix=base.mixed_negative)

    analytic = base.flat_grad()
    x0 = batch.flat()
    numeric = np.empty_like(x0)
    for i in range(x0.size):
        x = x0.copy()
        x[i] = x0[i] + epsilon
        f_plus = call(batch.with_flat(x), eval_params).value
        x[i] = x0[i] - epsilon
        f_minus = call(batch.with_flat(x), eval_params).value
        numeric[i] = (f_plus - f_minus) / (2.0 * epsilon)
    rel = np.abs(analytic - numeric) / np.maximum(1e-12, np.abs(analytic) + np.abs(numeric))
    return float(rel.max())


def random_batch(
    rng: np.random.Generator,
    dim: int,
    n_negatives: int,
    normalize: bool = False,
    spread: float | None = 0.5,
) -> ContrastiveBatch:
    """Random batch whose vectors scatter around a shared random direction.

    Each vector is ``axis + spread * N(0, I/dim)``, a narrow cone like the
    ones encoder embeddings occupy (mean pairwise cosine about 0.8 at the
    default spread). ``spread=None`` draws isotropic ``N(0, I)`` vectors
    instead. Those produce softmax weights far below what float64 central
    differences can resolve.
    """
    if spread is None:
        vecs = rng.standard_normal((n_negatives + 2, dim))
    else:
        axis = rng.standard_normal(dim)
        axis /= np.linalg.norm(axis)
        vecs = axis + spread * rng.standard_normal((n_negatives + 2, dim)) / np.sqrt(dim)
    if normalize:
        vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    return ContrastiveBatch(vecs[0], vecs[1], vecs[2:])


def loss_check_report(
    loss_name: str,
    seeds: int = 100,
    max_dim: int = 16,
    max_negatives: int = 8,
    lam: float = 0.2,
    tau: float = 0.05,
    epsilon: float = 1e-5,
    tolerance: float = 1e-4,
    base_seed: int = 0,
    spread: float | None = 0.5,
) -> dict:
    """Run the gradient check over ``seeds`` random batches.

    Seed ``s`` draws dim in ``[2, max_dim]`` and n in ``[1, max_negatives]``
    from ``default_rng(base_seed + s)``; vectors come from :func:`random_batch`
    with the given ``spread``. MixCSE batches are unit-normalized and mix a
    uniformly drawn negative.
    """
    if loss_name not in ("mdpr", "mixcse"):
        raise ArgumentError(f"unknown loss {loss_name!r}")
    if seeds < 1:
        raise ArgumentError("seeds must be >= 1")
    worst = 0.0
    for s in range(seeds):
        rng = np.random.default_rng(base_seed + s)
        dim = int(rng.integers(2, max_dim + 1))
        n = int(rng.integers(1, max_negatives + 1))
        if loss_name == "mdpr":
            batch = random_batch(rng, dim, n, spread=spread)
            err = finite_diff_check(mdpr_loss, batch, epsilon=epsilon)
        else:
            batch = random_batch(rng, dim, n, normalize=True, spread=spread)
            params = MixParams(lam, tau, int(rng.integers(0, n)))
            err = finite_diff_check(mixcse_loss, batch, params, epsilon=epsilon)
        worst = max(worst, err)
    return {"loss": loss_name, "seeds": seeds, "max_rel_err": worst, "pass": worst <= tolerance}


# ---------------------------------------------------------------------------
# Batch assembly


def assemble_batches(
    questions: Sequence[np.ndarray],
    positives: Sequence[np.ndarray],
    negatives_source: str = "in-batch",
    batch_size: int = 16,
    seed: int = 0,
    *,
    positive_ids: Sequence[str] | None = None,
    passage_store=None,
    n_negatives: int = 1,
    hard_negatives: Sequence[Sequence[np.ndarray]] | None = None,
) -> list[ContrastiveBatch]:
    """Build one :class:`ContrastiveBatch` per question.

    ``in-batch``
        Questions are shuffled under ``seed`` and chunked into groups of
        ``batch_size``; each question takes the other members' positives as
        negatives. A trailing group of one is folded into the previous group.
    ``random``
        ``n_negatives`` passages drawn without replacement from
        ``passage_store`` (an :class:`~clqa.dense.EmbeddingStore`), never the
        question's own positive id.
    ``explicit``
        ``hard_negatives[i]`` are used as given.

    Output order follows the (shuffled, for in-batch) question order.
    """
    if len(questions) != len(positives):
        raise ArgumentError(f"{len(questions)} questions but {len(positives)} positives")
    rng = np.random.default_rng(seed)
    m = len(questions)

    if negatives_source == "in-batch":
        if batch_size < 2:
            raise ArgumentError("in-batch negatives need batch_size >= 2")
        if m < 2:
            raise ArgumentError("in-batch negatives need at least two questions")
        order = rng.permutation(m)
        groups = [order[i : i + batch_size] for i in range(0, m, batch_size)]
        if len(groups) > 1 and len(groups[-1]) == 1:
            tail = groups.pop()
            groups[-1] = np.concatenate([groups[-1], tail])
        out = []
        for group in groups:
            for i in group:
                negs = [positives[j] for j in group if j != i]
                out.append(ContrastiveBatch(questions[i], positives[i], np.vstack(negs)))
        return out

    if negatives_source == "random":
        if passage_store is None or positive_ids is None:
            raise ArgumentError("random negatives need passage_store and positive_ids")
        if len(positive_ids) != m:
            raise ArgumentError("positive_ids must align with questions")
        if n_negatives < 1:
            raise ArgumentError("n_negatives must be >= 1")
        out = []
        all_ids = list(passage_store.ids)
        for i in range(m):
            pool = [pid for pid in all_ids if pid != positive_ids[i]]
            if len(pool) < n_negatives:
                raise ArgumentError(
                    f"store has {len(pool)} candidate negatives, {n_negatives} requested"
                )
            picked = rng.choice(len(pool), size=n_negatives, replace=False)
            negs = np.vstack([passage_store.vector(pool[j]) for j in picked])
            out.append(ContrastiveBatch(questions[i], positives[i], negs))
        return out

    if negatives_source == "explicit":
        if hard_negatives is None or len(hard_negatives) != m:
            raise ArgumentError("explicit mode needs one negative list per question")
        return [
            ContrastiveBatch(questions[i], positives[i], np.vstack(hard_negatives[i]))
            for i in range(m)
        ]

    raise ArgumentError(f"unknown negatives source {negatives_source!r}")


def mean_loss(
    batches: Sequence[ContrastiveBatch],
    loss: str = "mdpr",
    lam: float = 0.2,
    tau: float = 0.05,
    seed: int = 0,
) -> float:
    """Mean loss over ``batches`` with an order-fixed exact summation.

    For MixCSE, the negative to mix is drawn uniformly per batch under ``seed``.
    """
    if not batches:
        raise ArgumentError("no batches")
    rng = np.random.default_rng(seed)
    values = []
    for b in batches:
        if loss == "mdpr":
            values.append(mdpr_loss(b).value)
        elif loss == "mixcse":
            j = int(rng.integers(0, b.n_negatives))
            values.append(mixcse_loss(b, MixParams(lam, tau, j)).value)
        else:
            raise ArgumentError(f"unknown loss {loss!r}")
    return math.fsum(values) / len(values)
