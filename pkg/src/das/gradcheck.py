"""Finite-difference gradient verification.

`grad_check` compares reverse-mode gradients against central differences
coordinate by coordinate; `run_gradient_suite` sweeps every primitive and
the composite model paths across many random seeds and is what the
`grad-check` CLI command executes.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Node, NumericFault, backward
from .rng import RandomStream

PRIMITIVE_TOL = 1e-4
END_TO_END_TOL = 1e-3
FD_STEP = 1e-5


def grad_check(fn: Callable[[Node], Node], point: np.ndarray, step: float = FD_STEP) -> float:
    """Max over coordinates of |analytic - central difference| / max(1, |cd|).

    `fn` maps a single leaf node to a scalar node and must be finite in a
    neighborhood of `point`.
    """
    if step <= 0:
        raise ValueError("finite-difference step must be positive")
    point = np.asarray(point, dtype=np.float64)

    leaf = Node(point.copy())
    out = fn(leaf)
    if not np.all(np.isfinite(out.value)):
        raise NumericFault("non-finite function value at the check point")
    backward(out)
    analytic = leaf.grad.reshape(-1).copy()

    def value_at(x: np.ndarray) -> float:
        return float(fn(Node(x)).value)

    worst = 0.0
    flat = point.reshape(-1)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] = flat[i] + step
        hi = value_at(bumped.reshape(point.shape))
        bumped[i] = flat[i] - step
        lo = value_at(bumped.reshape(point.shape))
        numeric = (hi - lo) / (2.0 * step)
        err = abs(analytic[i] - numeric) / max(1.0, abs(numeric))
        worst = max(worst, err)
    return worst


def params_grad_check(
    loss_fn: Callable[[], Node],
    store,
    names: list[str] | None = None,
    max_coords_per_param: int | None = None,
    stream: RandomStream | None = None,
    step: float = FD_STEP,
) -> float:
    """Finite-difference check of d(loss)/d(params) for store-backed models.

    Runs one backward pass for the analytic gradients, then perturbs store
    values coordinate-wise. When `max_coords_per_param` is set, a random
    subset of coordinates per parameter is probed (the subset is drawn
    from `stream`).
    """
    names = store.names() if names is None else names
    store.zero_grads()
    out = loss_fn()
    backward(out)
    analytic = {n: store.entries[n].grad.copy() for n in names}
    store.zero_grads()

    worst = 0.0
    for name in names:
        value = store.entries[name].value
        flat = value.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords_per_param is not None and flat.size > max_coords_per_param:
            if stream is None:
                raise ValueError("coordinate subsampling requires a stream")
            coords = stream.permutation(flat.size)[:max_coords_per_param]
        for i in coords:
            original = flat[i]
            flat[i] = original + step
            hi = float(loss_fn().value)
            flat[i] = original - step
            lo = float(loss_fn().value)
            flat[i] = original
            numeric = (hi - lo) / (2.0 * step)
            err = abs(analytic[name].reshape(-1)[i] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# the primitive sweep

def _with_cotangent(op, stream, *shapes):
    """Build fn(x) = sum(op(x, *fixed) * R) with random fixed args/cotangent."""
    fixed = [ad.constant(stream.normal(s)) for s in shapes[1:]]
    probe = op(Node(np.zeros(shapes[0])), *fixed)
    r = ad.constant(stream.normal(probe.value.shape))

    def fn(x):
        return ad.tensor_sum(ad.mul(op(x, *fixed), r))

    return fn


def primitive_checks(seed: int) -> dict[str, float]:
    """One grad_check per differentiable primitive at a random point."""
    stream = RandomStream(seed).derive("primitive-checks")
    results: dict[str, float] = {}

    def check(name, fn, point):
        results[name] = grad_check(fn, point)

    a34 = stream.normal((3, 4))
    check("add", _with_cotangent(ad.add, stream.derive("add"), (3, 4), (3, 4)), a34)
    check("add-broadcast", _with_cotangent(ad.add, stream.derive("addb"), (3, 4), (1, 4)), a34)
    check("sub", _with_cotangent(ad.sub, stream.derive("sub"), (3, 4), (3, 4)), a34)
    check("mul", _with_cotangent(ad.mul, stream.derive("mul"), (3, 4), (4,)), a34)
    check("div", _with_cotangent(lambda x, d: ad.div(x, ad.add(ad.mul(d, d), ad.constant(np.full((3, 4), 0.5)))), stream.derive("div"), (3, 4), (3, 4)), a34)
    check("matmul", _with_cotangent(ad.matmul, stream.derive("matmul"), (3, 4), (4, 2)), a34)
    check("matmul-batched", _with_cotangent(ad.matmul, stream.derive("matmulb"), (2, 3, 4), (2, 4, 2)), stream.normal((2, 3, 4)))
    check("broadcast", _with_cotangent(lambda x: ad.broadcast_to(x, (5, 3, 4)), stream.derive("bc"), (3, 4)), a34)
    check("sum", _with_cotangent(lambda x: ad.tensor_sum(x, axis=1), stream.derive("sum"), (3, 4)), a34)
    check("mean", _with_cotangent(lambda x: ad.tensor_mean(x, axis=0, keepdims=True), stream.derive("mean"), (3, 4)), a34)
    check("softmax", _with_cotangent(lambda x: ad.softmax(x, axis=-1), stream.derive("softmax"), (3, 4)), a34)
    check("softplus", _with_cotangent(ad.softplus, stream.derive("softplus"), (3, 4)), a34)
    check("sigmoid", _with_cotangent(ad.sigmoid, stream.derive("sigmoid"), (3, 4)), a34)
    check("tanh", _with_cotangent(ad.tanh, stream.derive("tanh"), (3, 4)), a34)
    check("exp", _with_cotangent(ad.exp, stream.derive("exp"), (3, 4)), stream.normal((3, 4)))
    check("log", _with_cotangent(lambda x: ad.log(ad.add(ad.mul(x, x), ad.constant(np.full((3, 4), 0.5)))), stream.derive("log"), (3, 4)), a34)
    check("scale", _with_cotangent(lambda x: ad.scale(x, -2.5), stream.derive("scale"), (3, 4)), a34)
    check("concatenate", _with_cotangent(lambda x, y: ad.concatenate([x, y], axis=1), stream.derive("concat"), (3, 4), (3, 2)), a34)
    check("reshape", _with_cotangent(lambda x: ad.reshape(x, (4, 3)), stream.derive("reshape"), (3, 4)), a34)
    return results


def composite_checks(seed: int, max_coords: int = 10) -> dict[str, float]:
    """Finite-difference checks of the model paths on a small instance.

    The sampling step differentiates through the soft relaxation with
    frozen Gumbel noise, which is the path the straight-through gradient
    follows.
    """
    from .classifier import ClassifierConfig, cross_entropy, forward_logits, init_classifier_params
    from .features import FrameSequence, build_features
    from .params import ParameterStore
    from .sampler import (
        SamplerConfig,
        adaptive_temperature,
        apply_sampling,
        base_attention,
        combine_heads,
        gumbel_softmax_sample,
        head_scales,
    )

    stream = RandomStream(seed).derive("composite-checks")
    b, t, c, img = 2, 6, 1, 8
    cfg = SamplerConfig(num_select=3, heads=2, hidden=4)
    clf_cfg = ClassifierConfig(num_classes=3, channels=c, embed_dim=8, hidden=8)

    store = ParameterStore()
    from .sampler import init_sampler_params

    init_sampler_params(store, cfg, stream.derive("sampler-init"))
    init_classifier_params(store, clf_cfg, stream.derive("classifier-init"))

    seq = FrameSequence(stream.normal((b, t, c, img, img)), np.full(b, t))
    feats = build_features(seq)
    noise = stream.gumbel((b, cfg.num_select, t))
    labels = stream.integers(0, clf_cfg.num_classes, (b,))
    r_logits = stream.normal((b, cfg.num_select, t))
    r_soft = stream.normal((b, cfg.num_select, t))

    sampler_names = [n for n in store.names() if n.startswith("sampler.") and ".temp." not in n]
    temp_names = [n for n in store.names() if n.startswith("sampler.temp.")]
    clf_names = [n for n in store.names() if n.startswith("clf.")]

    def logits_path():
        base = base_attention(feats, store, cfg)
        scales = [head_scales(feats, store, cfg, h) for h in range(cfg.heads)]
        return ad.tensor_sum(ad.mul(combine_heads(base, scales), ad.constant(r_logits)))

    fixed_logits = ad.constant(stream.normal((b, cfg.num_select, t)))

    def temperature_path():
        tau = adaptive_temperature(feats, store, cfg)
        matrix = gumbel_softmax_sample(fixed_logits, tau, None, noise=noise)
        return ad.tensor_sum(ad.mul(matrix.soft, ad.constant(r_soft)))

    frames_const = stream.normal((b, cfg.num_select, c, img, img))

    def classifier_path():
        from .autodiff import Node

        return cross_entropy(forward_logits(Node(frames_const), store, clf_cfg), labels)

    def end_to_end_path():
        base = base_attention(feats, store, cfg)
        scales = [head_scales(feats, store, cfg, h) for h in range(cfg.heads)]
        logits = combine_heads(base, scales)
        tau = adaptive_temperature(feats, store, cfg)
        matrix = gumbel_softmax_sample(logits, tau, None, noise=noise)
        frames = apply_sampling(matrix, seq, use_soft=True)
        return cross_entropy(forward_logits(frames, store, clf_cfg), labels)

    subset = dict(max_coords_per_param=max_coords, stream=stream.derive("coords"))
    return {
        "sampler-logits": params_grad_check(logits_path, store, sampler_names, **subset),
        "temperature": params_grad_check(temperature_path, store, temp_names, **subset),
        "classifier": params_grad_check(classifier_path, store, clf_names, **subset),
        "end-to-end": params_grad_check(end_to_end_path, store, None, **subset),
    }


def run_gradient_suite(seed: int = 0, n_seeds: int = 100) -> dict[str, float]:
    """Worst-case relative error per check name across `n_seeds` seeds."""
    worst: dict[str, float] = {}
    for s in range(n_seeds):
        for name, err in primitive_checks(seed + s).items():
            worst[name] = max(worst.get(name, 0.0), err)
        for name, err in composite_checks(seed + s).items():
            worst[name] = max(worst.get(name, 0.0), err)
    return worst


def suite_passes(results: dict[str, float]) -> bool:
    for name, err in results.items():
        tol = END_TO_END_TOL if name.startswith("end-to-end") else PRIMITIVE_TOL
        if err >= tol:
            return False
    return True
