"""
The `verification` module runs property suites that check the numerical
machinery against independent oracles. Each suite returns one
`PropertyResult` per property; the `verify` command prints them and fails
when any property does not hold.

| Suite  | Properties                                                          |
|--------|---------------------------------------------------------------------|
| `grad` | Analytic gradients of primitives and composite blocks match central finite differences |
| `scan` | Parallel and sequential ConvSSM scans agree, scan directions round trip, the selective scan matches a step-by-step oracle |
| `loss` | Loss identities, bounds and invariances, and metrics against a per-pixel tally |

!!! example "Example: Running a Suite"

    ```python
    from osdmamba.verification import run_suites

    failures = [r for r in run_suites(["scan"]) if not r.passed]
    ```
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .blocks import init_vss_block, patch_expand, patch_merge, vss_block, init_patch_expand, init_patch_merge
from .configs import NetworkConfig
from .convssm import *
from .losses import focal_loss, hybrid_loss, jaccard_loss
from .metrics import compute_metrics
from .scan import *
from .tensor import *

__all__ = [
    "SUITES",
    "PropertyResult",
    "finite_difference_check",
    "grad_suite",
    "loss_suite",
    "reference_selective_scan",
    "relative_error",
    "run_suites",
    "scan_suite",
]

logger = logging.getLogger("osdmamba.verify")

PRIMITIVE_TOLERANCE = 1e-6
COMPOSITE_TOLERANCE = 1e-5
SCAN_TOLERANCE = 1e-10


@dataclass(frozen=True)
class PropertyResult:
    """Outcome of one checked property."""

    suite: str
    name: str
    passed: bool
    detail: str


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Norm of the difference relative to the larger of the two norms."""

    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / scale)


def finite_difference_check(fn: Callable[..., Tensor], arrays: Sequence[np.ndarray], h: float = 1e-5) -> float:
    """Compare the analytic gradient of a scalar function with central differences.

    Args:
        fn: Function of one tensor per entry of `arrays`, returning a scalar tensor.
        arrays: Points at which the gradient is checked.
        h: Finite difference step.

    Returns:
        The largest `relative_error` over all inputs.
    """

    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    grads = backward(fn(*tensors), accumulate=False)
    analytic = [grads[t] if t in grads else np.zeros(t.shape) for t in tensors]

    def evaluate(values: list[np.ndarray]) -> float:
        with no_grad():
            return fn(*(Tensor(v) for v in values)).item()

    worst = 0.0
    base = [np.array(a, dtype=np.float64) for a in arrays]
    for k, array in enumerate(base):
        numeric = np.zeros_like(array)
        for index in np.ndindex(array.shape):
            original = array[index]
            array[index] = original + h
            upper = evaluate(base)
            array[index] = original - h
            lower = evaluate(base)
            array[index] = original
            numeric[index] = (upper - lower) / (2 * h)

        worst = max(worst, relative_error(analytic[k], numeric))

    return worst


def _gradient_property(name: str, fn: Callable[..., Tensor], arrays: Sequence[np.ndarray], tolerance: float) -> PropertyResult:
    error = finite_difference_check(fn, arrays)
    return PropertyResult("grad", name, error < tolerance, f"relative error {error:.2e} (tolerance {tolerance:.0e})")


def _weighted_sum(weights: np.ndarray) -> Callable[[Tensor], Tensor]:
    return lambda t: (t * weights).sum()


def _s6_from(arrays: Sequence[Tensor]) -> S6Parameters:
    return S6Parameters(*arrays)


def grad_suite(seed: int = 0) -> list[PropertyResult]:
    """Finite difference checks of every primitive and composite block."""

    rng = np.random.default_rng(seed)
    normal = rng.normal
    results = []

    def check(name: str, fn: Callable[..., Tensor], *arrays: np.ndarray, tolerance: float = PRIMITIVE_TOLERANCE) -> None:
        results.append(_gradient_property(name, fn, arrays, tolerance))

    check("silu(conv2d) padded", lambda x, k, b: silu(conv2d(x, k, b, padding=1)).sum(),
          normal(size=(1, 2, 5, 5)), normal(size=(3, 2, 3, 3)), normal(size=3))
    check("conv2d strided grouped", lambda x, k: (conv2d(x, k, stride=2, groups=2) ** 2).sum(),
          normal(size=(1, 4, 6, 6)), normal(size=(4, 2, 3, 3)))
    check("linear", lambda x, w, b: (linear(x, w, b) ** 2).sum(),
          normal(size=(4, 8)), normal(size=(3, 8)), normal(size=3))

    weights = normal(size=(2, 6))
    check("layer_norm", lambda x, g, b: _weighted_sum(weights)(layer_norm(x, g, b)),
          normal(size=(2, 6)), normal(size=6), normal(size=6))

    weights = normal(size=(3, 4))
    check("softmax", lambda x: _weighted_sum(weights)(softmax(x, axis=-1)), normal(size=(3, 4)))
    check("sigmoid softplus", lambda x: _weighted_sum(weights)(sigmoid(x) * softplus(x)), normal(size=(3, 4)))
    check("exp log div pow", lambda x, y: (exp(x) / (y * y + 1) + log(y * y + 1) ** 1.5).sum(),
          normal(size=(3, 4)), normal(size=(3, 4)))
    check("einsum", lambda a, b: (einsum("ij,jk->ik", a, b) ** 2).sum(), normal(size=(3, 4)), normal(size=(4, 2)))
    check("reshape transpose getitem concat", lambda x: _weighted_sum(weights)(
        concat([x.reshape(4, 3).transpose(1, 0)[:, :2], x[:, 1:3] * 2], axis=1)), normal(size=(3, 4)))

    s6 = init_s6_parameters(3, state_dim=4, rng=rng)
    s6_arrays = [t.data for t in s6.tensors().values()]
    weights = normal(size=(6, 3))
    check("selective_scan", lambda x, *p: _weighted_sum(weights)(selective_scan(x, _s6_from(p))),
          normal(size=(6, 3)), *s6_arrays, tolerance=COMPOSITE_TOLERANCE)

    scan_sets = [init_s6_parameters(2, state_dim=2, rng=rng) for _ in ScanDirection]
    scan_arrays = [t.data for p in scan_sets for t in p.tensors().values()]
    weights = normal(size=(3, 3, 2))
    check("ss2d", lambda z, *p: _weighted_sum(weights)(ss2d(z, [_s6_from(p[5 * i:5 * i + 5]) for i in range(4)])),
          normal(size=(3, 3, 2)), *scan_arrays, tolerance=COMPOSITE_TOLERANCE)

    block: dict[str, Tensor] = {}
    init_vss_block(block, "vss", 8, NetworkConfig(base_width=8), rng)
    roles = ["in_proj.weight", "dwconv.weight", "ss2d.dir1.A_log", "ss2d.dir3.x_proj.weight", "out_proj.weight"]
    weights = normal(size=(4, 4, 8))

    def vss(x: Tensor, *checked: Tensor) -> Tensor:
        params = {**block, **{f"vss.{role}": t for role, t in zip(roles, checked)}}
        return _weighted_sum(weights)(vss_block(x, params, "vss"))

    check("vss_block", vss, normal(size=(4, 4, 8)), *(block[f"vss.{role}"].data for role in roles),
          tolerance=COMPOSITE_TOLERANCE)

    resample: dict[str, Tensor] = {}
    init_patch_expand(resample, "expand", 4, rng)
    init_patch_merge(resample, "merge", 2, rng)
    weights = normal(size=(4, 4, 2))
    check("patch_expand", lambda x, w: _weighted_sum(weights)(patch_expand(x, {"expand.weight": w}, "expand")),
          normal(size=(2, 2, 4)), resample["expand.weight"].data, tolerance=COMPOSITE_TOLERANCE)

    weights = normal(size=(2, 2, 4))
    merge_params = lambda w: {**resample, "merge.reduction.weight": w}
    check("patch_merge", lambda x, w: _weighted_sum(weights)(patch_merge(x, merge_params(w), "merge")),
          normal(size=(4, 4, 2)), resample["merge.reduction.weight"].data, tolerance=COMPOSITE_TOLERANCE)

    kernels = init_hippo(2, 3, input_channels=2, output_channels=2, rng=rng)
    kernel_arrays = [t.data for t in kernels.tensors().values()]
    weights = normal(size=(2, 4, 4))

    def step(x0: Tensor, u: Tensor, a: Tensor, b: Tensor, c: Tensor, d: Tensor) -> Tensor:
        state, y = convssm_step(ConvState(x0), u, ConvSSMParameters(a, b, c, d))
        return _weighted_sum(weights)(y) + (state.X * state.X).sum()

    check("convssm_step", step, normal(size=(2, 4, 4)), normal(size=(2, 4, 4)), *kernel_arrays,
          tolerance=COMPOSITE_TOLERANCE)

    weights = normal(size=(4, 2, 4, 4))
    for label, scan in (("sequential", convssm_scan_sequential), ("parallel", convssm_scan_parallel)):
        check(f"convssm_scan_{label} length 4",
              lambda u, a, b, c, d, scan=scan: _weighted_sum(weights)(scan(u, ConvState(zeros(2, 4, 4)), ConvSSMParameters(a, b, c, d))[0]),
              normal(size=(4, 2, 4, 4)), *kernel_arrays, tolerance=COMPOSITE_TOLERANCE)

    target = rng.integers(0, 3, size=(4, 4))
    alpha = rng.uniform(0.5, 2.0, size=3)
    check("hybrid_loss", lambda logits: hybrid_loss(softmax(logits, axis=0), target, alpha, 2.0),
          normal(size=(3, 4, 4)), tolerance=COMPOSITE_TOLERANCE)

    return results


def reference_selective_scan(seq: np.ndarray, params: S6Parameters) -> np.ndarray:
    """Step-by-step selective scan written with scalar loops, used as an oracle."""

    x_proj, dt_w, dt_b = params.x_proj_weight.data, params.dt_proj_weight.data, params.dt_proj_bias.data
    A = -np.exp(params.A_log.data)
    D_skip = params.D_skip.data
    rank, state_dim = params.rank, params.state_dim
    length, channels = seq.shape

    out = np.zeros_like(seq)
    for d in range(channels):
        h = [0.0] * state_dim
        for t in range(length):
            projected = [sum(x_proj[r, c] * seq[t, c] for c in range(channels)) for r in range(x_proj.shape[0])]
            pre = sum(dt_w[d, r] * projected[r] for r in range(rank)) + dt_b[d]
            delta = math.log1p(math.exp(pre)) if pre < 30 else pre
            b = projected[rank:rank + state_dim]
            c = projected[rank + state_dim:]
            for n in range(state_dim):
                h[n] = math.exp(delta * A[d, n]) * h[n] + delta * b[n] * seq[t, d]

            out[t, d] = sum(c[n] * h[n] for n in range(state_dim)) + D_skip[d] * seq[t, d]

    return out


def _random_convssm(rng: np.random.Generator) -> tuple[ConvSSMParameters, Tensor, ConvState]:
    p, u, y = rng.integers(1, 5, size=3)
    k = int(rng.choice([1, 3]))
    height, width = rng.integers(1, 9, size=2)
    length = int(rng.integers(1, 65))

    params = init_hippo(int(p), k, input_channels=int(u), output_channels=int(y), rng=rng)
    mixing = rng.normal(scale=0.3 / p, size=(p, p))
    params = ConvSSMParameters(Tensor(params.A.data + mixing.reshape(p, p, 1, 1)), params.B, params.C, params.D)
    inputs = Tensor(rng.normal(size=(length, u, height, width)))
    return params, inputs, ConvState(Tensor(rng.normal(size=(p, height, width))))


def scan_suite(seed: int = 0, configurations: int = 200) -> list[PropertyResult]:
    """Scan equivalence, structure and oracle properties."""

    rng = np.random.default_rng(seed)
    results = []

    def record(name: str, passed: bool, detail: str) -> None:
        results.append(PropertyResult("scan", name, bool(passed), detail))

    with no_grad():
        worst = 0.0
        for _ in range(configurations):
            params, inputs, x0 = _random_convssm(rng)
            y_seq, state_seq = convssm_scan_sequential(inputs, x0, params)
            y_par, state_par = convssm_scan_parallel(inputs, x0, params)
            worst = max(worst, np.max(np.abs(y_seq.data - y_par.data)), np.max(np.abs(state_seq.X.data - state_par.X.data)))

        record("convssm parallel equals sequential", worst < SCAN_TOLERANCE,
               f"max abs deviation {worst:.2e} over {configurations} configurations")

        params = init_hippo(3, 1, input_channels=2, output_channels=2, rng=rng)
        inputs = rng.normal(size=(5, 2, 2, 2))
        y, _ = convssm_scan_sequential(Tensor(inputs), ConvState(zeros(3, 2, 2)), params)
        a, b = params.A.data[:, :, 0, 0], params.B.data[:, :, 0, 0]
        c, d = params.C.data[:, :, 0, 0], params.D.data[:, :, 0, 0]
        expected = np.zeros((5, 2, 2, 2))
        for i, j in itertools.product(range(2), range(2)):
            h = np.zeros(3)
            for t in range(5):
                h = a @ h + b @ inputs[t, :, i, j]
                expected[t, :, i, j] = c @ h + d @ inputs[t, :, i, j]

        deviation = float(np.max(np.abs(y.data - expected)))
        record("pointwise convssm equals per-position ssm", deviation < 1e-12, f"max abs deviation {deviation:.2e}")

        params = init_hippo(3, 3, rng=rng)
        y, _ = convssm_scan_sequential(Tensor(np.ones((512, 3, 4, 4))), ConvState(zeros(3, 4, 4)), params)
        peak = float(np.max(np.abs(y.data)))
        record("convssm bounded over 512 steps", np.isfinite(peak) and peak < 1e3, f"max |Y| {peak:.3f}")

        exact = all(
            np.array_equal(fold(expand(z, v)).data, z.data)
            for z in (Tensor(rng.normal(size=(h, w, c))) for h, w, c in rng.integers(1, 17, size=(20, 3)))
            for v in ScanDirection
        )
        record("expand/fold round trip", exact, "bit-exact for all four directions")

        z = Tensor(rng.normal(size=(4, 4, 2)))
        identity = ss2d(z, [init_s6_parameters(2, rng=rng)] * 4, operator=lambda seq, _: seq)
        record("identity ss2d equals 4Z", np.array_equal(identity.data, 4 * z.data), "exact")

        s6 = init_s6_parameters(3, state_dim=4, rng=rng)
        seq = rng.normal(size=(10, 3))
        base = selective_scan(Tensor(seq), s6).data
        causal = True
        for t in range(10):
            bumped = seq.copy()
            bumped[t] += 1.0
            causal &= np.array_equal(selective_scan(Tensor(bumped), s6).data[:t], base[:t])

        record("selective scan is causal", causal, "prefix outputs unchanged by later perturbations")

        worst = 0.0
        for _ in range(100):
            length, channels, state_dim = rng.integers(1, 33), rng.integers(1, 5), rng.integers(1, 9)
            s6 = init_s6_parameters(int(channels), state_dim=int(state_dim), rng=rng)
            seq = rng.normal(size=(length, channels))
            worst = max(worst, np.max(np.abs(selective_scan(Tensor(seq), s6).data - reference_selective_scan(seq, s6))))

        record("selective scan matches step-by-step oracle", worst < SCAN_TOLERANCE, f"max abs deviation {worst:.2e}")

        params = init_hippo(2, 3, rng=rng)
        linear_in_length = all(convssm_flops(params, 4, 4, 2 * n) == 2 * convssm_flops(params, 4, 4, n) for n in (1, 7, 64))
        record("convssm flops linear in length", linear_in_length, "exact")

    return results


def loss_suite(seed: int = 0) -> list[PropertyResult]:
    """Identities, bounds and invariances of the losses and metrics."""

    rng = np.random.default_rng(seed)
    results = []

    def record(name: str, passed: bool, detail: str) -> None:
        results.append(PropertyResult("loss", name, bool(passed), detail))

    def random_probs(k: int, h: int, w: int) -> Tensor:
        return softmax(Tensor(rng.normal(scale=2.0, size=(k, h, w))), axis=0)

    with no_grad():
        probs = random_probs(4, 6, 6)
        target = rng.integers(0, 4, size=(6, 6))
        p_t = np.take_along_axis(probs.data, target[None], axis=0)[0]
        gap = abs(focal_loss(probs, target, np.ones(4), 0.0).item() + np.mean(np.log(p_t)))
        record("focal with gamma 0 equals cross-entropy", gap < 1e-12, f"difference {gap:.2e}")

        value = focal_loss(Tensor(np.full((2, 1, 1), 0.5)), np.zeros((1, 1), dtype=int), np.ones(2), 2.0).item()
        gap = abs(value - 0.25 * math.log(2))
        record("focal closed form at p_t 0.5", gap < 1e-9, f"value {value:.9f}")

        target = rng.integers(0, 3, size=(5, 5))
        perfect = Tensor((np.arange(3)[:, None, None] == target).astype(float))
        value = hybrid_loss(perfect, target, np.ones(3), 2.0).item()
        record("perfect prediction has zero hybrid loss", value < 1e-5, f"loss {value:.2e}")

        values = [
            jaccard_loss(random_probs(k, 3, 3), rng.integers(0, k, size=(3, 3))).item()
            for k in rng.integers(2, 6, size=1000)
        ]
        record("jaccard loss within [0, 1]", min(values) >= 0 and max(values) <= 1, f"range [{min(values):.4f}, {max(values):.4f}]")

        grid = np.linspace(0.01, 0.99, 50)
        monotone = True
        for gamma in (0.0, 1.0, 2.0, 5.0):
            curve = [focal_loss(Tensor(np.array([p, 1 - p]).reshape(2, 1, 1)), np.zeros((1, 1), dtype=int), None, gamma).item() for p in grid]
            monotone &= bool(np.all(np.diff(curve) <= 0))

        record("focal loss non-increasing in p_t", monotone, "gamma in {0, 1, 2, 5}")

        probs, target, alpha = random_probs(4, 5, 5), rng.integers(0, 4, size=(5, 5)), rng.uniform(0.5, 2, size=4)
        permutation = rng.permutation(4)
        inverse = np.argsort(permutation)
        permuted = Tensor(probs.data[permutation])
        original = hybrid_loss(probs, target, alpha).item()
        relabelled = hybrid_loss(permuted, inverse[target], alpha[permutation]).item()
        record("losses invariant to class relabelling", abs(original - relabelled) < 1e-12, f"difference {abs(original - relabelled):.2e}")

        scaled = focal_loss(probs, target, 3.0 * alpha).item()
        gap = abs(scaled - 3.0 * focal_loss(probs, target, alpha).item())
        record("focal loss scales with alpha", gap < 1e-12, f"difference {gap:.2e}")

        report = compute_metrics(np.array([0, 1, 1, 1]), np.array([0, 0, 1, 1]), 2)
        expected = (report.iou, report.miou, report.oa, report.fp_rate[1])
        record("metrics hand-counted example", np.allclose(expected[0], [0.5, 2 / 3]) and math.isclose(expected[1], 7 / 12)
               and math.isclose(expected[2], 0.75) and math.isclose(expected[3], 1 / 3), f"IoU {report.iou}")

        agree = True
        for _ in range(100):
            pred, true = rng.integers(0, 5, size=(8, 8)), rng.integers(0, 5, size=(8, 8))
            counts = np.zeros((5, 5), dtype=int)
            for p, t in zip(pred.ravel(), true.ravel()):
                counts[t, p] += 1

            report = compute_metrics(pred, true, 5)
            oa = np.trace(counts) / counts.sum()
            iou = [counts[c, c] / (counts[c].sum() + counts[:, c].sum() - counts[c, c]) if counts[c].sum() + counts[:, c].sum() else 1.0 for c in range(5)]
            agree &= report.oa == oa and np.allclose(report.iou, iou, rtol=0, atol=0)

        record("metrics match per-pixel tally", agree, "100 random 8x8 masks")

    return results


SUITES: dict[str, Callable[[int], list[PropertyResult]]] = {"grad": grad_suite, "scan": scan_suite, "loss": loss_suite}


def run_suites(names: Iterable[str], seed: int = 0) -> list[PropertyResult]:
    """Run the named suites (`grad`, `scan`, `loss` or `all`) from one seed and log every result."""

    names = list(SUITES) if "all" in names else list(names)
    results = []
    for name in names:
        logger.info(f"Running the {name} suite.")
        for result in SUITES[name](seed):
            log = logger.info if result.passed else logger.error
            log(f"[{'PASS' if result.passed else 'FAIL'}] {result.suite}: {result.name} ({result.detail})")
            results.append(result)

    return results
