"""Dense 3x3 linear algebra for a spin-1 system.

States are plain numpy arrays in the fixed basis (|+1>, |0>, |-1>): a ket is a
complex vector of shape ``(3,)``, a density operator a complex ``(3, 3)``
matrix.  The bright/dark frame (|+>, |0>, |->) with
``|+-> = (|+1> +- |-1>)/sqrt(2)`` is only ever a view computed on demand.

Hamiltonians are angular frequencies in rad/us and times are in us.
"""

from __future__ import annotations

import numpy as np

SQRT2 = np.sqrt(2.0)

#: Rows are the bright/dark basis vectors <+|, <0|, <-| written in the m_s basis.
BRIGHT_DARK = np.array(
    [[1.0, 0.0, 1.0],
     [0.0, SQRT2, 0.0],
     [1.0, 0.0, -1.0]],
    dtype=complex,
) / SQRT2

_SPIN = {
    "x": np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=complex) / SQRT2,
    "y": np.array([[0, -1j, 0], [1j, 0, -1j], [0, 1j, 0]], dtype=complex) / SQRT2,
    "z": np.diag([1.0, 0.0, -1.0]).astype(complex),
}

# named basis states, m_s basis
_NAMED = {
    "plus1": np.array([1, 0, 0], dtype=complex),
    "zero": np.array([0, 1, 0], dtype=complex),
    "minus1": np.array([0, 0, 1], dtype=complex),
    "plus": BRIGHT_DARK[0].conj(),
    "minus": BRIGHT_DARK[2].conj(),
}


class InvalidStateError(ValueError):
    """Raised when an array does not satisfy the state invariants."""


class InvalidHamiltonianError(ValueError):
    """Raised when a generator passed to :func:`propagator` is not Hermitian."""


def spin_operator(axis: str) -> np.ndarray:
    """Spin-1 matrix for ``axis`` in {'x', 'y', 'z'}."""
    try:
        return _SPIN[axis].copy()
    except KeyError:
        raise ValueError(f"axis must be one of 'x', 'y', 'z', got {axis!r}") from None


def basis_state(name: str) -> np.ndarray:
    """Return a named ket: 'plus1', 'zero', 'minus1', 'plus' (bright) or 'minus' (dark)."""
    try:
        return _NAMED[name].copy()
    except KeyError:
        raise ValueError(f"unknown state {name!r}; expected one of {sorted(_NAMED)}") from None


def normalize(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    if v.shape != (3,):
        raise InvalidStateError(f"ket must have shape (3,), got {v.shape}")
    norm = np.linalg.norm(v)
    if norm == 0:
        raise InvalidStateError("cannot normalize the zero vector")
    return v / norm


def check_ket(v, atol: float = 1e-12) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    if v.shape != (3,):
        raise InvalidStateError(f"ket must have shape (3,), got {v.shape}")
    if abs(np.vdot(v, v).real - 1.0) > atol:
        raise InvalidStateError("ket is not normalized")
    return v


def check_density(rho, atol: float = 1e-12, eig_tol: float = 1e-10) -> np.ndarray:
    """Validate Hermiticity, unit trace and positivity of a density operator."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (3, 3):
        raise InvalidStateError(f"density operator must have shape (3, 3), got {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > atol:
        raise InvalidStateError("density operator is not Hermitian")
    if abs(np.trace(rho) - 1.0) > atol:
        raise InvalidStateError("density operator trace differs from 1")
    if np.linalg.eigvalsh(rho).min() < -eig_tol:
        raise InvalidStateError("density operator has a negative eigenvalue")
    return rho


def as_density(state) -> np.ndarray:
    """Promote a ket to a projector; density operators pass through validated."""
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        v = check_ket(state)
        return np.outer(v, v.conj())
    return check_density(state)


def bright_dark_transform(v) -> np.ndarray:
    """Amplitudes of ket ``v`` in the ordered basis (|+>, |0>, |->)."""
    return BRIGHT_DARK @ check_ket(v)


def bright_dark_inverse(w) -> np.ndarray:
    """Inverse of :func:`bright_dark_transform`: back to (|+1>, |0>, |-1>)."""
    return BRIGHT_DARK.conj().T @ check_ket(w)


def to_bright_dark(op) -> np.ndarray:
    """Express a 3x3 operator in the bright/dark frame."""
    return BRIGHT_DARK @ np.asarray(op, dtype=complex) @ BRIGHT_DARK.conj().T


def is_hermitian(h, atol: float = 1e-10) -> bool:
    h = np.asarray(h)
    return h.shape[-2:] == (3, 3) and bool(np.all(np.abs(h - np.swapaxes(h, -1, -2).conj()) <= atol))


def propagator(h, t: float) -> np.ndarray:
    """``exp(-i h t)`` for a Hermitian ``h`` via its eigendecomposition.

    ``h`` may also be a stack of shape ``(..., 3, 3)``; the result has the same
    shape.
    """
    h = np.asarray(h, dtype=complex)
    if t < 0:
        raise ValueError(f"evolution time must be non-negative, got {t}")
    if not is_hermitian(h):
        raise InvalidHamiltonianError("Hamiltonian is not Hermitian within 1e-10")
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)[..., None, :]) @ np.swapaxes(v, -1, -2).conj()


def state_fidelity(rho_exp, rho_theo) -> float:
    """Overlap ``Tr(rho_exp rho_theo)`` of two density operators (kets are promoted)."""
    a = as_density(rho_exp)
    b = as_density(rho_theo)
    return float(np.real(np.einsum("ij,ji->", a, b)))


def populations(state) -> tuple[float, float, float]:
    """Populations ``(p_plus, p_zero, p_minus)`` in the bright/dark frame.

    ``p_zero`` is the population leaked out of the qubit space.
    """
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        p = np.abs(bright_dark_transform(state)) ** 2
    else:
        p = np.real(np.diag(to_bright_dark(check_density(state))))
    return float(p[0]), float(p[1]), float(p[2])


def populations_batch(states) -> np.ndarray:
    """Bright/dark populations for a stack of kets ``(M, 3)`` or densities ``(M, 3, 3)``.

    No validation; returns an ``(M, 3)`` real array.  Written elementwise so
    each row is bit-identical whatever the batch size (BLAS picks different
    kernels for one row and for many).
    """
    states = np.asarray(states)
    if states.ndim == 2:
        a, b, c = states[:, 0], states[:, 1], states[:, 2]
        return np.stack([np.abs(a + c) ** 2 / 2, np.abs(b) ** 2, np.abs(a - c) ** 2 / 2], axis=-1)
    outer = np.real(states[:, 0, 0]) + np.real(states[:, 2, 2])
    cross = 2 * np.real(states[:, 0, 2])
    return np.stack([(outer + cross) / 2, np.real(states[:, 1, 1]), (outer - cross) / 2], axis=-1)
