"""Evolution-triangle image attack.

Each iteration keeps a triangle of (clean, previous adversarial, current
adversarial) images, samples convex combinations from a chosen sub-triangle,
turns each sample into a sign-gradient perturbation direction, picks the
direction that most increases the image-text mismatch at the current
adversarial point, then takes a multi-scale sign step from the selected
sample and projects back into the L-inf budget.

The optimized objective is the image-text mismatch, i.e. the negated
(optionally subspace-projected) dot-product similarity: driving the true
pair's similarity down is what breaks retrieval.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import AttackConfig, SimplexWeights, convex_combine, linf_project
from .encoders import EncoderPair, grad_loss_wrt_image, pair_loss
from .subspace import ProjectionBasis

# Sub-triangle orderings: which of (max, median, min) of a uniform simplex
# draw lands on (lam, beta, gamma). Region A puts the largest weight on the
# clean image and the smallest on the current adversarial image.
REGION_ASSIGNMENTS: dict[str, tuple[int, int, int]] = {
    # region: index of (lam, beta, gamma) into the descending-sorted draw
    "A": (0, 1, 2),  # gamma < beta < lam
    "B": (1, 0, 2),  # gamma < lam < beta
    "C": (2, 0, 1),  # lam < gamma < beta
    "D": (2, 1, 0),  # lam < beta < gamma
    "E": (1, 2, 0),  # beta < lam < gamma
    "F": (0, 2, 1),  # beta < gamma < lam
}


@dataclass(frozen=True)
class TrajectoryState:
    clean: np.ndarray
    prev: np.ndarray
    cur: np.ndarray
    step: int


@dataclass(frozen=True)
class StepRecord:
    step: int
    loss: float  # mismatch objective of the current adversarial image
    lam: float
    beta: float
    gamma: float
    chosen_index: int


@dataclass
class AttackTrace:
    records: list[StepRecord] = field(default_factory=list)
    final: np.ndarray | None = None
    seed: object = None
    intermediates: list[np.ndarray] | None = None


def mismatch_value(
    x: np.ndarray, caption, enc_pair: EncoderPair, projector: ProjectionBasis | None
) -> float:
    """Attack objective: negated (projected) similarity of the pair."""
    return -pair_loss(enc_pair, x, caption, projector)


def mismatch_grad(
    x: np.ndarray,
    caption,
    enc_pair: EncoderPair,
    projector: ProjectionBasis | None,
    scale: float = 1.0,
) -> np.ndarray:
    return -grad_loss_wrt_image(
        enc_pair.image, enc_pair.text, x, caption, scale, projector
    )


def _normalized_sign(g: np.ndarray) -> np.ndarray:
    """sign(g / ||g||) with sign(0) = 0; normalization cannot flip signs."""
    n = np.linalg.norm(g)
    if n == 0.0:
        return np.zeros_like(g)
    return np.sign(g / n)


def _multiscale_grad(
    x: np.ndarray, caption, enc_pair, projector, cfg: AttackConfig
) -> np.ndarray:
    total = np.zeros_like(x)
    for scale in cfg.scales:
        total += mismatch_grad(x, caption, enc_pair, projector, scale)
    return total


def sample_sub_triangle(m: int, rng: np.random.Generator, region: str = "A") -> list[SimplexWeights]:
    """m weight triples uniform over one strict-ordering region of the simplex.

    Draws uniform on the full simplex and assigns the sorted components
    according to the region's ordering, e.g. region A gives gamma < beta < lam.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    try:
        assign = REGION_ASSIGNMENTS[region]
    except KeyError:
        raise ValueError(f"unknown sub-triangle region {region!r}") from None
    draws = np.sort(rng.dirichlet(np.ones(3), size=m), axis=1)[:, ::-1]  # descending
    k = int(np.argmin(assign))  # which of (lam, beta, gamma) got the largest draw
    out = []
    for draw in draws:
        vals = [float(draw[i]) for i in assign]
        # renormalize the largest component so the triple sums to 1 exactly
        vals[k] = 1.0 - sum(v for j, v in enumerate(vals) if j != k)
        out.append(SimplexWeights(*vals))
    return out


def sample_sub_triangle_A(m: int, rng: np.random.Generator) -> list[SimplexWeights]:
    return sample_sub_triangle(m, rng, "A")


def init_adversarial(
    x: np.ndarray,
    caption,
    enc_pair: EncoderPair,
    projector: ProjectionBasis | None,
    cfg: AttackConfig,
    rng: np.random.Generator,
) -> TrajectoryState:
    """Gaussian-noise start projected into the budget, then one multi-scale
    sign-gradient step."""
    x0 = linf_project(
        x + cfg.eps_image * rng.standard_normal(x.shape), x, cfg.eps_image
    )
    g = _multiscale_grad(x0, caption, enc_pair, projector, cfg)
    x1 = linf_project(x0 + cfg.step_size * _normalized_sign(g), x, cfg.eps_image)
    return TrajectoryState(clean=x, prev=x0, cur=x1, step=1)


def candidate_directions(
    state: TrajectoryState,
    weights: list[SimplexWeights],
    caption,
    enc_pair: EncoderPair,
    projector: ProjectionBasis | None,
    cfg: AttackConfig,
) -> list[np.ndarray]:
    """One sign-gradient perturbation direction per sampled triangle point."""
    if not weights:
        raise ValueError("weights must be nonempty")
    dirs = []
    for w in weights:
        s = convex_combine(state.clean, state.prev, state.cur, w)
        g = mismatch_grad(s, caption, enc_pair, projector)
        dirs.append(cfg.step_size * _normalized_sign(g))
    return dirs


def text_guided_select(
    state: TrajectoryState,
    directions: list[np.ndarray],
    caption,
    enc_pair: EncoderPair,
    projector: ProjectionBasis | None,
    cfg: AttackConfig,
) -> int:
    """Index of the direction whose feasible application to the current
    adversarial image most increases the mismatch; ties go to the lowest index."""
    if not directions:
        raise ValueError("directions must be nonempty")
    best_idx = 0
    best_val = -np.inf
    for k, eps_k in enumerate(directions):
        cand = linf_project(state.cur + eps_k, state.clean, cfg.eps_image)
        val = mismatch_value(cand, caption, enc_pair, projector)
        if val > best_val:
            best_val = val
            best_idx = k
    return best_idx


def attack_step(
    state: TrajectoryState,
    chosen_sample: np.ndarray,
    caption,
    enc_pair: EncoderPair,
    projector: ProjectionBasis | None,
    cfg: AttackConfig,
) -> TrajectoryState:
    """Multi-scale sign step taken at the selected sample, applied to the
    current adversarial image and projected into the budget."""
    g = _multiscale_grad(chosen_sample, caption, enc_pair, projector, cfg)
    new_cur = linf_project(
        state.cur + cfg.step_size * _normalized_sign(g), state.clean, cfg.eps_image
    )
    return TrajectoryState(
        clean=state.clean, prev=state.cur, cur=new_cur, step=state.step + 1
    )


def run_image_attack(
    x: np.ndarray,
    caption,
    enc_pair: EncoderPair,
    projector: ProjectionBasis | None,
    cfg: AttackConfig,
    rng: np.random.Generator,
    forced_weights: SimplexWeights | None = None,
    keep_intermediates: bool = False,
) -> tuple[np.ndarray, np.ndarray, AttackTrace]:
    """Full T-step attack; returns the final and second-to-last adversarial
    images (the caption attack needs both) plus a per-step trace.

    forced_weights pins every triangle sample to one weight triple without
    consuming RNG; with (0, 0, 1) and samples=1 the loop reduces exactly to
    the multi-scale sign-gradient baseline.
    """
    trace = AttackTrace(seed=None)
    state = init_adversarial(x, caption, enc_pair, projector, cfg, rng)
    if keep_intermediates:
        trace.intermediates = [state.prev.copy(), state.cur.copy()]
    trace.records.append(
        StepRecord(
            step=1,
            loss=mismatch_value(state.cur, caption, enc_pair, projector),
            lam=0.0,
            beta=0.0,
            gamma=1.0,
            chosen_index=-1,
        )
    )
    for _ in range(cfg.steps - 1):
        if forced_weights is not None:
            weights = [forced_weights] * cfg.samples
        else:
            weights = sample_sub_triangle(cfg.samples, rng, cfg.region)
        dirs = candidate_directions(state, weights, caption, enc_pair, projector, cfg)
        o = text_guided_select(state, dirs, caption, enc_pair, projector, cfg)
        s_o = convex_combine(state.clean, state.prev, state.cur, weights[o])
        state = attack_step(state, s_o, caption, enc_pair, projector, cfg)
        if keep_intermediates:
            trace.intermediates.append(state.cur.copy())
        w = weights[o]
        trace.records.append(
            StepRecord(
                step=state.step,
                loss=mismatch_value(state.cur, caption, enc_pair, projector),
                lam=w.lam,
                beta=w.beta,
                gamma=w.gamma,
                chosen_index=o,
            )
        )
    trace.final = state.cur
    return state.cur, state.prev, trace


def run_sga_attack(
    x: np.ndarray,
    caption,
    enc_pair: EncoderPair,
    projector: ProjectionBasis | None,
    cfg: AttackConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Direct multi-scale sign-gradient baseline (no triangle machinery).

    Regression oracle for run_image_attack with forced weights (0, 0, 1) and
    samples=1: both must produce bitwise-identical output for the same seed.
    """
    cur = linf_project(
        x + cfg.eps_image * rng.standard_normal(x.shape), x, cfg.eps_image
    )
    prev = cur
    for _ in range(cfg.steps):
        g = _multiscale_grad(cur, caption, enc_pair, projector, cfg)
        prev = cur
        cur = linf_project(
            cur + cfg.step_size * _normalized_sign(g), x, cfg.eps_image
        )
    return cur, prev
