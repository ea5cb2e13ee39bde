__package__ = 'onlinevis.tensorcore'

import importlib

from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, NamedTuple, Optional, Sequence, Union

import numpy as np

from ..config.constants import CONSTANTS
from ..misc.errors import ContractError
from . import functional as F
from .rng import RngState
from .tensor import Tensor, backward, check_mode, get_precision, no_grad, parameter


def finite_diff_check(
    f: Callable[..., Tensor],
    x: Union[Tensor, Sequence[Tensor]],
    eps: float=1e-6,
    floor: float=1e-8,
    max_checks: Optional[int]=None,
    rng: Optional[RngState]=None,
) -> float:
    """
    Compare the autodiff gradient of the scalar f(*x) against central differences
    (f(x+eps·e) - f(x-eps·e)) / 2eps and return the worst relative error
    |a - n| / max(|a|, |n|, floor). With max_checks, only that many coordinates
    per input are sampled.
    """
    if get_precision() != 'f64':
        raise ContractError('finite_diff_check must run in 64-bit check mode')
    inputs = [x] if isinstance(x, Tensor) else list(x)
    for t in inputs:
        t.requires_grad = True
        t.grad = None

    out = f(*inputs)
    if out.size != 1:
        raise ContractError(f'finite_diff_check needs a scalar function, got shape {out.shape}')
    backward(out)
    analytic = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in inputs]

    worst = 0.0
    for t, grad in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        coords: Iterable[int] = range(flat.size)
        if max_checks is not None and flat.size > max_checks:
            coords = (rng or RngState(0)).choice(flat.size, max_checks, replace=False)
        for i in coords:
            original = flat[i]
            with no_grad():
                flat[i] = original + eps
                plus = f(*inputs).item()
                flat[i] = original - eps
                minus = f(*inputs).item()
            flat[i] = original
            numeric = (plus - minus) / (2 * eps)
            exact = float(grad.reshape(-1)[i])
            error = abs(exact - numeric) / max(abs(exact), abs(numeric), floor)
            worst = max(worst, error)

    for t in inputs:
        t.grad = None
    return worst


class GradcheckCase(NamedTuple):
    f: Callable[..., Tensor]
    inputs: List[Tensor]
    eps: float = 1e-6
    floor: float = 1e-8
    max_checks: Optional[int] = None


CaseFactory = Callable[[RngState], GradcheckCase]

GRADCHECK_REGISTRY: Dict[str, CaseFactory] = {}

# modules that register further cases when imported
CASE_MODULES = ('onlinevis.model.gradcheck_cases',)


def register_gradcheck(name: str) -> Callable[[CaseFactory], CaseFactory]:
    def decorator(factory: CaseFactory) -> CaseFactory:
        if name in GRADCHECK_REGISTRY:
            raise ContractError(f'A gradcheck case named {name!r} is already registered')
        GRADCHECK_REGISTRY[name] = factory
        return factory
    return decorator


def load_all_cases() -> Dict[str, CaseFactory]:
    for module in CASE_MODULES:
        importlib.import_module(module)
    return GRADCHECK_REGISTRY


@dataclass
class GradcheckResult:
    name: str
    max_error: float
    worst_seed: int
    seeds: int
    tolerance: float
    errors: List[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_error)) and self.max_error <= self.tolerance

    def to_dict(self) -> dict:
        return {
            'name': self.name,
            'max_error': self.max_error,
            'worst_seed': self.worst_seed,
            'seeds': self.seeds,
            'tolerance': self.tolerance,
            'passed': self.passed,
        }


def run_gradcheck(name: str, seeds: Sequence[int], tolerance: float=CONSTANTS.GRADCHECK_TOLERANCE) -> GradcheckResult:
    factory = GRADCHECK_REGISTRY[name]
    errors = []
    with check_mode():
        for seed in seeds:
            rng = RngState(seed)
            case = factory(rng)
            errors.append(finite_diff_check(
                case.f, case.inputs,
                eps=case.eps, floor=case.floor, max_checks=case.max_checks, rng=rng.spawn(1),
            ))
    worst = int(np.argmax(errors)) if errors else 0
    return GradcheckResult(
        name=name,
        max_error=float(errors[worst]) if errors else 0.0,
        worst_seed=int(seeds[worst]) if errors else 0,
        seeds=len(errors),
        tolerance=tolerance,
        errors=errors,
    )


def run_gradchecks(seeds: Sequence[int], tolerance: float=CONSTANTS.GRADCHECK_TOLERANCE, only: Optional[Sequence[str]]=None) -> List[GradcheckResult]:
    registry = load_all_cases()
    names = list(registry) if not only else list(only)
    unknown = [name for name in names if name not in registry]
    if unknown:
        raise ContractError(f'Unknown gradcheck cases: {", ".join(unknown)}', hints=(f'Registered: {", ".join(sorted(registry))}',))
    return [run_gradcheck(name, seeds, tolerance) for name in names]


### Cases for the primitive ops

def weighted_sum(op: Callable[..., Tensor], weights_rng: RngState, *inputs: Tensor) -> Callable[..., Tensor]:
    """Reduce op(*inputs) to a scalar with fixed random weights, so that every output element matters"""
    with no_grad():
        shape = op(*inputs).shape
    weights = weights_rng.normal(shape)
    return lambda *xs: F.sum(F.mul(op(*xs), weights))


def _case(op: Callable[..., Tensor], rng: RngState, *arrays: np.ndarray) -> GradcheckCase:
    inputs = [parameter(a) for a in arrays]
    return GradcheckCase(weighted_sum(op, rng, *inputs), inputs)


def _positive(rng: RngState, shape) -> np.ndarray:
    return rng.uniform(0.5, 2.0, shape)


register_gradcheck('add')(lambda rng: _case(F.add, rng, rng.normal((3, 4)), rng.normal((4,))))
register_gradcheck('sub')(lambda rng: _case(F.sub, rng, rng.normal((3, 4)), rng.normal((3, 1))))
register_gradcheck('mul')(lambda rng: _case(F.mul, rng, rng.normal((3, 4)), rng.normal((1, 4))))
register_gradcheck('div')(lambda rng: _case(F.div, rng, rng.normal((3, 4)), _positive(rng, (3, 4))))
register_gradcheck('neg')(lambda rng: _case(F.neg, rng, rng.normal((5,))))
register_gradcheck('power')(lambda rng: _case(lambda x: F.power(x, 3.0), rng, rng.normal((5,))))
register_gradcheck('exp')(lambda rng: _case(F.exp, rng, rng.normal((2, 3))))
register_gradcheck('log')(lambda rng: _case(F.log, rng, _positive(rng, (2, 3))))
register_gradcheck('sqrt')(lambda rng: _case(F.sqrt, rng, _positive(rng, (2, 3))))
register_gradcheck('abs')(lambda rng: _case(F.abs, rng, rng.normal((2, 3))))
register_gradcheck('sigmoid')(lambda rng: _case(F.sigmoid, rng, rng.normal((2, 3), scale=2.0)))
register_gradcheck('logit')(lambda rng: _case(F.logit, rng, rng.uniform(0.1, 0.9, (2, 3))))
register_gradcheck('relu')(lambda rng: _case(F.relu, rng, rng.normal((2, 3))))
register_gradcheck('maximum')(lambda rng: _case(F.maximum, rng, rng.normal((2, 3)), rng.normal((2, 3))))
register_gradcheck('minimum')(lambda rng: _case(F.minimum, rng, rng.normal((2, 3)), rng.normal((2, 3))))
register_gradcheck('clip')(lambda rng: _case(lambda x: F.clip(x, -0.5, 0.5), rng, rng.normal((3, 3))))
register_gradcheck('matmul')(lambda rng: _case(F.matmul, rng, rng.normal((2, 3, 4)), rng.normal((4, 5))))
register_gradcheck('sum')(lambda rng: _case(lambda x: F.sum(x, axis=1, keepdims=True), rng, rng.normal((3, 4))))
register_gradcheck('mean')(lambda rng: _case(lambda x: F.mean(x, axis=0), rng, rng.normal((3, 4))))
register_gradcheck('reshape')(lambda rng: _case(lambda x: F.reshape(x, (4, 3)), rng, rng.normal((3, 4))))
register_gradcheck('transpose')(lambda rng: _case(lambda x: F.transpose(x, (2, 0, 1)), rng, rng.normal((2, 3, 4))))
register_gradcheck('getitem')(lambda rng: _case(lambda x: F.getitem(x, (np.array([0, 2, 0]), slice(1, 3))), rng, rng.normal((3, 4))))
register_gradcheck('concat')(lambda rng: _case(lambda a, b: F.concat([a, b], axis=1), rng, rng.normal((2, 3)), rng.normal((2, 2))))
register_gradcheck('stack')(lambda rng: _case(lambda a, b: F.stack([a, b], axis=1), rng, rng.normal((2, 3)), rng.normal((2, 3))))
register_gradcheck('broadcast_to')(lambda rng: _case(lambda x: F.broadcast_to(x, (3, 2, 4)), rng, rng.normal((2, 1))))
register_gradcheck('softmax')(lambda rng: _case(lambda x: F.softmax(x, axis=-1), rng, rng.normal((3, 5))))
register_gradcheck('log_softmax')(lambda rng: _case(lambda x: F.log_softmax(x, axis=0), rng, rng.normal((3, 5))))
register_gradcheck('layer_norm')(lambda rng: _case(F.layer_norm, rng, rng.normal((3, 6)), rng.normal((6,)), rng.normal((6,))))
register_gradcheck('l2_normalize')(lambda rng: _case(F.l2_normalize, rng, rng.normal((3, 4))))
register_gradcheck('bce_with_logits')(lambda rng: _case(F.bce_with_logits, rng, rng.normal((4, 4), scale=2.0), rng.uniform(0.0, 1.0, (4, 4))))
register_gradcheck('conv2d')(lambda rng: _case(
    lambda x, w, b: F.conv2d(x, w, b, stride=2, padding=1), rng,
    rng.normal((1, 2, 6, 6)), rng.normal((3, 2, 3, 3)), rng.normal((3,)),
))
register_gradcheck('upsample_nearest')(lambda rng: _case(lambda x: F.upsample_nearest(x, 2), rng, rng.normal((1, 2, 3, 3))))
register_gradcheck('bilinear_sample_pixels')(lambda rng: _case(
    F.bilinear_sample_pixels, rng, rng.normal((2, 3, 4, 5)), rng.uniform(-1.5, 5.5, (2, 6, 2)),
))
register_gradcheck('bilinear_sample')(lambda rng: _case(
    F.bilinear_sample, rng, rng.normal((3, 4, 4)), rng.uniform(-0.2, 1.2, (5, 2)),
))
