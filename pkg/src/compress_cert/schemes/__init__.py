"""Reference compression schemes and a name-based factory."""

from __future__ import annotations

from ..compression import CompressionScheme, augment
from .gem import GemModel, gem_scheme, gem_train
from .hull import HullModel, hull_scheme
from .kernels import Kernel
from .svm import LabeledBatch, SvmModel, svm_scheme, svm_train, svr_scheme, svr_train
from .toys import closest_pair_scheme, second_largest_scheme, trimming_scheme

SCHEME_NAMES = ("hull2", "hull3", "svm", "svr", "gem", "second_largest", "trimming",
                "closest_pair")

# properties each scheme is documented to satisfy (checked by `validate`)
EXPECTED = {
    "hull2": {"preference", "idempotence", "non_assoc", "inclusion", "coherence1", "coherence2"},
    "hull3": {"preference", "idempotence", "non_assoc", "inclusion", "coherence1", "coherence2"},
    "svm": {"preference", "idempotence", "inclusion", "coherence1"},
    "svr": {"preference", "idempotence", "non_assoc", "inclusion", "coherence1", "coherence2"},
    "gem": {"preference", "idempotence", "inclusion", "coherence1"},
    "second_largest": {"preference", "idempotence", "inclusion"},
    "trimming": {"preference", "idempotence", "non_assoc"},
    "closest_pair": {"preference", "idempotence"},
}


def kernel_from(k) -> Kernel:
    if k is None:
        return Kernel()
    if isinstance(k, Kernel):
        return k
    if isinstance(k, str):
        return Kernel(k)
    return Kernel(**k)


def make_scheme(name: str, **params) -> CompressionScheme:
    """Build a scheme from its name and keyword parameters.

    Recognized parameters: ``kernel`` (dict or Kernel), ``rho``, ``t``,
    ``d``, ``anchor`` ([x, y]), ``atom``, ``M`` and ``augment`` (bool).
    """
    params = dict(params)
    aug = params.pop("augment", False)
    if name in ("hull2", "hull3"):
        s = hull_scheme(int(name[-1]), **params)
    elif name == "svm":
        s = svm_scheme(kernel_from(params.pop("kernel", None)), **params)
    elif name == "svr":
        s = svr_scheme(kernel_from(params.pop("kernel", None)), **params)
    elif name == "gem":
        anchor = params.pop("anchor", None)
        if anchor is not None:
            anchor = (tuple(float(v) for v in anchor[0]), int(anchor[1]))
        s = gem_scheme(kernel=kernel_from(params.pop("kernel", None)), anchor=anchor, **params)
    elif name == "second_largest":
        s = second_largest_scheme(**params)
    elif name == "trimming":
        s = trimming_scheme(**params)
    elif name == "closest_pair":
        s = closest_pair_scheme(**params)
    else:
        raise ValueError(f"unknown scheme {name!r}; expected one of {SCHEME_NAMES}")
    return augment(s) if aug else s


__all__ = [
    "EXPECTED", "GemModel", "HullModel", "Kernel", "LabeledBatch", "SCHEME_NAMES", "SvmModel",
    "closest_pair_scheme", "gem_scheme", "gem_train", "hull_scheme", "kernel_from",
    "make_scheme", "second_largest_scheme", "svm_scheme", "svm_train", "svr_scheme",
    "svr_train", "trimming_scheme",
]
