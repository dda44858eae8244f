"""Noyau numérique différentiable: couches linéaire et GRU, softmax, perte TD, Adam.

Convention: les lots sont en lignes, y = x @ W.T + b avec W de forme (sortie, entrée).
Tout est en double précision.
"""

import hashlib
from collections.abc import Callable, Iterator, Mapping
from dataclasses import dataclass
from typing import Union

import numpy as np

from .exceptions import DimensionMismatchError, EmptyInputError, NumericFaultError

Array = np.ndarray
Grads = dict[str, Array]

GRU_PARAM_NAMES = ("W_z", "U_z", "b_z", "W_r", "U_r", "b_r", "W_h", "U_h", "b_h")


def _check_finite(values: Array, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise NumericFaultError(f"Valeur non finie détectée dans {what}")


def sigmoid(a: Array) -> Array:
    """Sigmoïde stable numériquement."""
    return 0.5 * (1.0 + np.tanh(0.5 * a))


# ============================================================================
# LINÉAIRE
# ============================================================================


@dataclass
class LinearCache:
    """Entrées mémorisées pour la passe arrière linéaire."""

    x: Array
    W: Array
    squeeze: bool


def linear_forward(x: Array, W: Array, b: Array) -> tuple[Array, LinearCache]:
    """y = x @ W.T + b, pour x de forme (d,) ou (B, d).

    Raises:
        DimensionMismatchError: Si les formes sont incompatibles
        NumericFaultError: Si une entrée ou une sortie n'est pas finie
    """
    squeeze = x.ndim == 1
    x2 = np.atleast_2d(x)
    if W.ndim != 2 or x2.shape[1] != W.shape[1] or b.shape != (W.shape[0],):
        raise DimensionMismatchError(
            f"linéaire: x {x.shape}, W {W.shape}, b {b.shape} incompatibles"
        )
    _check_finite(x2, "entrée linéaire")
    y = x2 @ W.T + b
    _check_finite(y, "sortie linéaire")
    return (y[0] if squeeze else y), LinearCache(x=x2, W=W, squeeze=squeeze)


def linear_backward(dy: Array, cache: LinearCache) -> tuple[Array, Array, Array]:
    """Gradients exacts (dx, dW, db); db est la somme des dy du lot."""
    dy2 = np.atleast_2d(dy)
    if dy2.shape != (cache.x.shape[0], cache.W.shape[0]):
        raise DimensionMismatchError(f"linéaire: dy {dy.shape} incompatible")
    dx = dy2 @ cache.W
    dW = dy2.T @ cache.x
    db = dy2.sum(axis=0)
    return (dx[0] if cache.squeeze else dx), dW, db


# ============================================================================
# GRU
# ============================================================================


@dataclass
class GRUCache:
    """Activations d'un pas GRU (lot en lignes)."""

    x: Array
    h: Array
    z: Array
    r: Array
    c: Array
    rh: Array


def _check_gru_shapes(x: Array, h: Array, params: Mapping[str, Array]) -> None:
    hidden, input_dim = params["W_z"].shape
    if x.ndim != 2 or x.shape[1] != input_dim:
        raise DimensionMismatchError(f"GRU: entrée {x.shape}, attendu (B, {input_dim})")
    if h.shape != (x.shape[0], hidden):
        raise DimensionMismatchError(f"GRU: état {h.shape}, attendu ({x.shape[0]}, {hidden})")


def gru_cell_forward(
    x: Array, h: Array, params: Mapping[str, Array]
) -> tuple[Array, GRUCache]:
    """Un pas GRU: z, r, ĥ = tanh(W_h x + U_h (r ⊙ h) + b_h), h' = (1 − z) ⊙ h + z ⊙ ĥ.

    Args:
        x: Entrées (B, d)
        h: État précédent (B, h)
        params: Poids GRU (voir GRU_PARAM_NAMES)

    Returns:
        (nouvel état, cache pour la passe arrière)

    Raises:
        DimensionMismatchError: Si les formes sont incompatibles
        NumericFaultError: Si une entrée ou le nouvel état n'est pas fini
    """
    _check_gru_shapes(x, h, params)
    _check_finite(x, "entrée GRU")
    _check_finite(h, "état GRU")
    z = sigmoid(x @ params["W_z"].T + h @ params["U_z"].T + params["b_z"])
    r = sigmoid(x @ params["W_r"].T + h @ params["U_r"].T + params["b_r"])
    rh = r * h
    c = np.tanh(x @ params["W_h"].T + rh @ params["U_h"].T + params["b_h"])
    h_new = (1.0 - z) * h + z * c
    _check_finite(h_new, "nouvel état GRU")
    return h_new, GRUCache(x=x, h=h, z=z, r=r, c=c, rh=rh)


def gru_cell_backward(
    dh_new: Array, cache: GRUCache, params: Mapping[str, Array]
) -> tuple[Array, Array, Grads]:
    """Passe arrière exacte d'un pas GRU.

    Returns:
        (dx, dh_prev, gradients des poids)
    """
    x, h, z, r, c = cache.x, cache.h, cache.z, cache.r, cache.c

    dz = dh_new * (c - h)
    dc = dh_new * z
    dh = dh_new * (1.0 - z)

    da_c = dc * (1.0 - c * c)
    drh = da_c @ params["U_h"]
    dr = drh * h
    dh += drh * r

    da_z = dz * z * (1.0 - z)
    da_r = dr * r * (1.0 - r)

    dx = da_c @ params["W_h"] + da_z @ params["W_z"] + da_r @ params["W_r"]
    dh += da_z @ params["U_z"] + da_r @ params["U_r"]

    grads = {
        "W_z": da_z.T @ x,
        "U_z": da_z.T @ h,
        "b_z": da_z.sum(axis=0),
        "W_r": da_r.T @ x,
        "U_r": da_r.T @ h,
        "b_r": da_r.sum(axis=0),
        "W_h": da_c.T @ x,
        "U_h": da_c.T @ cache.rh,
        "b_h": da_c.sum(axis=0),
    }
    return dx, dh, grads


@dataclass
class SequenceCache:
    """Caches d'une séquence GRU masquée."""

    steps: list[GRUCache]
    mask: Array
    batch: int
    input_dim: int


def gru_sequence_forward(
    xs: Array, mask: Array, params: Mapping[str, Array]
) -> tuple[Array, SequenceCache]:
    """Déroule le GRU sur un lot de séquences complétées, depuis h_0 = 0.

    Aux positions masquées l'état est recopié tel quel, donc une séquence vide
    rend l'état initial nul.

    Args:
        xs: Entrées (B, T, d)
        mask: Positions réelles (B, T), booléen
        params: Poids GRU

    Returns:
        (état final (B, h), cache)
    """
    hidden, input_dim = params["W_z"].shape
    if xs.ndim != 3 or xs.shape[2] != input_dim:
        raise DimensionMismatchError(f"GRU: séquence {xs.shape}, attendu (B, T, {input_dim})")
    if mask.shape != xs.shape[:2]:
        raise DimensionMismatchError(f"GRU: masque {mask.shape} pour séquence {xs.shape}")

    batch, length = xs.shape[:2]
    h = np.zeros((batch, hidden))
    steps: list[GRUCache] = []
    for t in range(length):
        h_cand, cache = gru_cell_forward(xs[:, t, :], h, params)
        keep = mask[:, t][:, None]
        h = np.where(keep, h_cand, h)
        steps.append(cache)
    return h, SequenceCache(steps=steps, mask=mask, batch=batch, input_dim=input_dim)


def gru_sequence_backward(
    dh_final: Array, cache: SequenceCache, params: Mapping[str, Array]
) -> tuple[Array, Grads]:
    """Passe arrière à travers le temps.

    Returns:
        (dxs (B, T, d), gradients des poids)
    """
    grads = {name: np.zeros_like(params[name]) for name in GRU_PARAM_NAMES}
    dxs = np.zeros((cache.batch, len(cache.steps), cache.input_dim))
    dh = dh_final
    for t in range(len(cache.steps) - 1, -1, -1):
        keep = cache.mask[:, t][:, None].astype(float)
        dx_t, dh_prev, step_grads = gru_cell_backward(dh * keep, cache.steps[t], params)
        for name, value in step_grads.items():
            grads[name] += value
        dxs[:, t, :] = dx_t
        dh = dh_prev + dh * (1.0 - keep)
    return dxs, grads


# ============================================================================
# SOFTMAX, PERTE
# ============================================================================


def softmax(logits: Array) -> Array:
    """Softmax stable (soustraction du maximum).

    Raises:
        EmptyInputError: Si le vecteur est vide
        NumericFaultError: Si une valeur n'est pas finie
    """
    values = np.asarray(logits, dtype=np.float64)
    if values.size == 0:
        raise EmptyInputError("softmax d'un vecteur vide")
    _check_finite(values, "softmax")
    exps = np.exp(values - values.max())
    return exps / exps.sum()


def squared_td_loss(
    q: Union[float, Array], target: Union[float, Array]
) -> tuple[Union[float, Array], Union[float, Array]]:
    """Perte (cible − q)² et son gradient en q; la cible est une constante."""
    diff = target - q
    return diff * diff, -2.0 * diff


# ============================================================================
# PARAMÈTRES ET OPTIMISEUR
# ============================================================================


class ParamSet:
    """Paramètres nommés avec gradients et moments d'Adam associés.

    Les tableaux sont mis à jour en place: les vues partagées restent valides.
    """

    def __init__(self, params: Mapping[str, Array]) -> None:
        self.params: dict[str, Array] = {
            name: np.asarray(value, dtype=np.float64) for name, value in params.items()
        }
        self.grads: dict[str, Array] = {n: np.zeros_like(p) for n, p in self.params.items()}
        self.m: dict[str, Array] = {n: np.zeros_like(p) for n, p in self.params.items()}
        self.v: dict[str, Array] = {n: np.zeros_like(p) for n, p in self.params.items()}
        self.t = 0

    def __getitem__(self, name: str) -> Array:
        return self.params[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.params)

    def __len__(self) -> int:
        return len(self.params)

    def zero_grad(self) -> None:
        """Remet tous les gradients à zéro."""
        for grad in self.grads.values():
            grad.fill(0.0)

    def accumulate(self, grads: Mapping[str, Array]) -> None:
        """Ajoute des gradients aux tampons (formes vérifiées)."""
        for name, value in grads.items():
            if value.shape != self.grads[name].shape:
                raise DimensionMismatchError(
                    f"Gradient {name}: forme {value.shape}, attendu {self.grads[name].shape}"
                )
            self.grads[name] += value

    def fingerprint(self) -> str:
        """Empreinte SHA-256 des valeurs (noms, formes et octets)."""
        digest = hashlib.sha256()
        for name in sorted(self.params):
            value = np.ascontiguousarray(self.params[name])
            digest.update(name.encode())
            digest.update(str(value.shape).encode())
            digest.update(value.tobytes())
        return digest.hexdigest()

    def copy(self) -> "ParamSet":
        """Copie profonde (valeurs, gradients, moments, compteur)."""
        clone = ParamSet({n: p.copy() for n, p in self.params.items()})
        for name in self.params:
            clone.grads[name][...] = self.grads[name]
            clone.m[name][...] = self.m[name]
            clone.v[name][...] = self.v[name]
        clone.t = self.t
        return clone


def adam_step(
    params: ParamSet,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Un pas d'Adam avec correction de biais, en place.

    Raises:
        NumericFaultError: Si un gradient ou un paramètre mis à jour n'est pas fini
    """
    for name, grad in params.grads.items():
        _check_finite(grad, f"gradient {name}")

    params.t += 1
    correction1 = 1.0 - beta1**params.t
    correction2 = 1.0 - beta2**params.t
    for name, value in params.params.items():
        grad = params.grads[name]
        m = params.m[name]
        v = params.v[name]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        value -= lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
        _check_finite(value, f"paramètre {name}")


def grad_check(
    forward_fn: Callable[[Mapping[str, Array]], tuple[float, Mapping[str, Array]]],
    params: Mapping[str, Array],
    eps: float = 1e-5,
    floor: float = 1e-3,
) -> float:
    """Compare les gradients analytiques à des différences centrées.

    Une coordonnée dont le gradient est négligeable devant le plus grand gradient
    est comparée à ce dernier: le bruit d'arrondi des différences finies ne compte pas.

    Args:
        forward_fn: Fonction (params) -> (perte scalaire, gradients par nom)
        params: Tableaux perturbés en place puis restaurés à l'identique
        eps: Pas des différences finies
        floor: Fraction du plus grand |gradient| en dessous de laquelle l'erreur est absolue

    Returns:
        Erreur relative maximale |a − n| / max(|a|, |n|, floor · max|a|, 1e-8)
    """
    _, analytic = forward_fn(params)
    analytic = {name: np.array(value, copy=True) for name, value in analytic.items()}
    scale = max((float(np.abs(g).max()) for g in analytic.values() if g.size), default=0.0)
    denominator_floor = max(floor * scale, 1e-8)

    worst = 0.0
    for name, value in params.items():
        grad = analytic[name]
        for index in np.ndindex(value.shape):
            original = value[index]
            value[index] = original + eps
            loss_plus = forward_fn(params)[0]
            value[index] = original - eps
            loss_minus = forward_fn(params)[0]
            value[index] = original

            numeric = (loss_plus - loss_minus) / (2.0 * eps)
            a = float(grad[index])
            error = abs(a - numeric) / max(abs(a), abs(numeric), denominator_floor)
            worst = max(worst, error)
    return worst


# ============================================================================
# INITIALISATION
# ============================================================================


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, int]) -> Array:
    """Poids Glorot-uniforme pour une matrice (sortie, entrée)."""
    fan_out, fan_in = shape
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_gru_params(rng: np.random.Generator, input_dim: int, hidden: int) -> dict[str, Array]:
    """Poids GRU Glorot-uniformes, biais nuls."""
    params: dict[str, Array] = {}
    for gate in ("z", "r", "h"):
        params[f"W_{gate}"] = glorot_uniform(rng, (hidden, input_dim))
        params[f"U_{gate}"] = glorot_uniform(rng, (hidden, hidden))
        params[f"b_{gate}"] = np.zeros(hidden)
    return {name: params[name] for name in GRU_PARAM_NAMES}


def init_linear_params(
    rng: np.random.Generator, input_dim: int, output_dim: int
) -> tuple[Array, Array]:
    """Couche linéaire Glorot-uniforme, biais nul."""
    return glorot_uniform(rng, (output_dim, input_dim)), np.zeros(output_dim)
