"""Per-element stabilization ingredients.

The upwind diffusivity ``kbar = sum_i u_i h_i gamma_i / 2`` with
``gamma_i = coth(alpha_i) - 1/alpha_i`` and ``alpha_i = u_i h_i / (2 D)``,
the streamline-modified test function used by SU/SUPG, and the coupling,
auxiliary-mass and auxiliary-stiffness tensors of the micromorphic scheme.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import bernoulli, factorial

from .errors import ConfigurationError, InvalidArgumentError

SCHEMES = ("galerkin", "classical_ad", "su", "supg", "mzad", "mmad")
TWO_FIELD = ("mzad", "mmad")

# below this |alpha| the two-term series is used
SERIES_THRESHOLD = 1e-4
# below this |alpha| coth(a) - 1/a is evaluated by its full Laurent series,
# since the two terms of the closed form cancel
_CANCEL_THRESHOLD = 1.0
_N_TERMS = 20
_k = np.arange(1, _N_TERMS + 1)
_LAURENT = 2.0 ** (2 * _k) * bernoulli(2 * _N_TERMS)[2 * _k] / factorial(2 * _k)

_ALIASES = {
    "fem": "galerkin",
    "ad": "classical_ad",
    "classicalad": "classical_ad",
    "classical-ad": "classical_ad",
}


@dataclass(frozen=True)
class SchemeConfig:
    """Which scheme to assemble and its parameters.

    Attributes
    ----------
    kind : str
        One of ``SCHEMES``.
    penalty : float or None
        MZAD penalty ``p``. None means the per-element size ``h``.
    k_tilde : float or None
        MMAD auxiliary mass/stiffness scale. None means ``sgn(D)``.
    classical_kbar : "auto" or float
        Added diffusivity for classical artificial diffusion.
    kbar_scale : float
        Multiplier on the upwind diffusivity wherever it is used (SU, SUPG,
        classical AD in "auto" mode and the MMAD coupling tensor).
    coupling : array or None
        Fixed MMAD coupling tensor replacing ``kbar * u^ (x) u^``.
    g_regularization : float
        When ``k_tilde == 0`` the coupling tensor is rank deficient in 2D and
        leaves the crosswind auxiliary component undetermined; an auxiliary
        mass of this size relative to ``kbar`` pins it.
    """

    kind: str = "mmad"
    penalty: Optional[float] = None
    k_tilde: Optional[float] = None
    classical_kbar: Union[str, float] = "auto"
    kbar_scale: float = 1.0
    coupling: Optional[np.ndarray] = None
    g_regularization: float = 1e-6

    def __post_init__(self):
        kind = _ALIASES.get(self.kind.lower(), self.kind.lower())
        if kind not in SCHEMES:
            raise ConfigurationError(
                f"unknown scheme {self.kind!r}; valid: {', '.join(SCHEMES)}"
            )
        object.__setattr__(self, "kind", kind)
        if self.penalty is not None and not self.penalty >= 0:
            raise ConfigurationError("MZAD penalty must be non-negative")
        if self.k_tilde is not None and self.k_tilde < 0:
            raise ConfigurationError("k_tilde must be non-negative")
        if self.classical_kbar != "auto" and not float(self.classical_kbar) >= 0:
            raise ConfigurationError("classical_kbar must be 'auto' or >= 0")
        if self.kbar_scale < 0:
            raise ConfigurationError("kbar_scale must be non-negative")

    @property
    def two_field(self):
        return self.kind in TWO_FIELD

    def resolved_k_tilde(self, D):
        if self.k_tilde is not None:
            return float(self.k_tilde)
        return float(np.sign(D))


@dataclass(frozen=True)
class UpwindParams:
    alpha: np.ndarray
    gamma: np.ndarray
    kbar: float


@dataclass(frozen=True)
class StabTensors:
    H: np.ndarray
    K: np.ndarray
    k_tilde: float  # A acts as k_tilde times the identity on matrices

    def apply_A(self, G):
        return self.k_tilde * np.asarray(G)


def upwind_gamma(alpha):
    """``coth(alpha) - 1/alpha``, odd in alpha, with the infinite limit ``sign(alpha)``."""
    alpha = np.asarray(alpha, dtype=float)
    out = np.empty_like(alpha)
    small = np.abs(alpha) < SERIES_THRESHOLD
    a = alpha[small]
    out[small] = a / 3.0 - a ** 3 / 45.0
    mid = ~small & (np.abs(alpha) < _CANCEL_THRESHOLD)
    a = alpha[mid]
    # sum_k c_k a^(2k-1), Horner in a^2
    a2 = a * a
    acc = np.zeros_like(a)
    for c in _LAURENT[::-1]:
        acc = acc * a2 + c
    out[mid] = acc * a
    big = np.abs(alpha) >= _CANCEL_THRESHOLD
    a = alpha[big]
    with np.errstate(divide="ignore", over="ignore"):
        out[big] = 1.0 / np.tanh(a) - 1.0 / a
    inf = np.isinf(alpha)
    out[inf] = np.sign(alpha[inf])
    return out


def _kbar_terms(u_nat, h, D):
    """alpha, gamma and the per-direction terms u_i h_i gamma_i / 2."""
    if D > 0:
        alpha = u_nat * h / (2.0 * D)
    else:
        alpha = np.where(u_nat == 0.0, 0.0, np.copysign(np.inf, u_nat))
    gamma = upwind_gamma(alpha)
    return alpha, gamma, 0.5 * u_nat * h * gamma


def compute_upwind(u_elem, h, D, directions=None):
    """Upwind parameters of one element.

    ``directions`` holds the natural unit vectors as columns-by-index
    (``directions[i]`` is ``e_i``); the global axes are used when omitted.
    """
    u = np.atleast_1d(np.asarray(u_elem, dtype=float))
    h = np.atleast_1d(np.asarray(h, dtype=float))
    if np.any(h <= 0):
        raise InvalidArgumentError("element sizes must be positive")
    if D < 0:
        raise InvalidArgumentError("diffusivity must be non-negative")
    e = np.eye(len(h)) if directions is None else np.asarray(directions, dtype=float)
    u_nat = e @ u
    alpha, gamma, terms = _kbar_terms(u_nat, h, D)
    return UpwindParams(alpha=alpha, gamma=gamma, kbar=float(max(terms.sum(), 0.0)))


def element_kbar(u_center, h, directions, D):
    """Vectorized upwind diffusivity for all elements, shape (ne,).

    ``u_center`` (ne, dim), ``h`` (ne, dim), ``directions`` (ne, dim, dim).
    """
    if D < 0:
        raise InvalidArgumentError("diffusivity must be non-negative")
    u_nat = np.einsum("eij,ej->ei", directions, u_center)
    _, _, terms = _kbar_terms(u_nat, h, D)
    return np.maximum(terms.sum(axis=1), 0.0)


def build_H(u_elem, kbar):
    """Coupling tensor ``kbar * u^ (x) u^``; zero for zero velocity."""
    u = np.atleast_1d(np.asarray(u_elem, dtype=float))
    nrm2 = u @ u
    if nrm2 == 0.0:
        return np.zeros((len(u), len(u)))
    return kbar * np.outer(u, u) / nrm2


def element_H(u_center, kbar):
    """Vectorized :func:`build_H`, shape (ne, dim, dim)."""
    nrm2 = np.einsum("ei,ei->e", u_center, u_center)
    safe = np.where(nrm2 > 0.0, nrm2, 1.0)
    scale = np.where(nrm2 > 0.0, kbar / safe, 0.0)
    return scale[:, None, None] * np.einsum("ei,ej->eij", u_center, u_center)


def build_KA(k_tilde, dim=2):
    """``K = k_tilde I`` and the fourth-order ``A = k_tilde I`` as an array.

    ``A[i, j, k, l] = k_tilde * delta_ik * delta_jl`` so that
    ``np.tensordot(A, G, axes=2) == k_tilde * G``.
    """
    if k_tilde < 0:
        raise InvalidArgumentError("k_tilde must be non-negative")
    eye = np.eye(dim)
    K = k_tilde * eye
    A = k_tilde * np.einsum("ik,jl->ijkl", eye, eye)
    return K, A


def streamline_tau(u, kbar):
    """Scale of the streamline test-function perturbation, ``kbar / |u|^2``."""
    u = np.asarray(u, dtype=float)
    nrm2 = np.sum(u * u, axis=-1)
    safe = np.where(nrm2 > 0.0, nrm2, 1.0)
    return np.where(nrm2 > 0.0, kbar / safe, 0.0)


def supg_test_weight(value, grad, u_elem, kbar):
    """Streamline-modified test function ``v + kbar (u . grad v) / |u|^2``."""
    u = np.atleast_1d(np.asarray(u_elem, dtype=float))
    grad = np.atleast_1d(np.asarray(grad, dtype=float))
    return value + streamline_tau(u, kbar) * (u @ grad)
