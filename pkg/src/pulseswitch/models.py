"""Built-in controlled vector fields.

Three models are available, selected by id:

``linear_test``
    ``dx/dt = diag(a1, a2) x + (b1, b2) u`` with ``a = (-1, -2)``, ``b = (1, 1)``.
    Its flow is known in closed form and serves as an oracle everywhere.
``repressilator8``
    Ring of ``2k`` mutually repressing species (default ``k = 4``). Species
    ``i`` is produced at rate ``p_i1 / (1 + (x_{i-1}/p_i2)^p_i3) + p_i4`` and
    degraded at rate ``p_i5``; the input adds to the first species.
``fitzhugh_nagumo``
    ``dV/dt = a V (V - b)(1 - V) - c V w + u``, ``dw/dt = d (V - w)``.
"""
from dataclasses import dataclass, field, replace
from types import MappingProxyType

import numpy as np

from . import _kernels
from .errors import NonFiniteStateError, UnknownParameterError

_CODES = {
    "linear_test": _kernels.LINEAR,
    "repressilator8": _kernels.REPRESSILATOR,
    "fitzhugh_nagumo": _kernels.FHN,
}


@dataclass(frozen=True)
class Pulse:
    """Input ``u(t) = mu`` on ``[0, tau]`` and zero afterwards."""

    mu: float
    tau: float

    def __post_init__(self):
        mu, tau = float(self.mu), float(self.tau)
        if not (np.isfinite(mu) and np.isfinite(tau)):
            raise ValueError(f"pulse must be finite, got ({mu}, {tau})")
        if mu < 0 or tau < 0:
            raise ValueError(f"pulse magnitude and duration must be >= 0, got ({mu}, {tau})")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "tau", tau)

    @property
    def energy(self):
        return self.mu * self.tau

    def value(self, t):
        return self.mu if t <= self.tau else 0.0


ZERO_PULSE = Pulse(0.0, 0.0)


@dataclass(frozen=True, eq=False)
class ModelSpec:
    id: str
    n: int
    params: MappingProxyType
    param_order: tuple
    cone_signature: tuple
    control_index: int
    state_lower_bounds: tuple
    monotone: bool
    named_states: MappingProxyType = field(default_factory=lambda: MappingProxyType({}))

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("state dimension must be >= 1")
        if len(self.cone_signature) != self.n or any(s not in (1, -1) for s in self.cone_signature):
            raise ValueError("cone signature must be a vector of +-1 of length n")
        missing = [k for k in self.param_order if k not in self.params]
        if missing:
            raise ValueError(f"missing parameters: {missing}")
        if not all(np.isfinite(v) for v in self.params.values()):
            raise ValueError("parameters must be finite")

    def __eq__(self, other):
        if not isinstance(other, ModelSpec):
            return NotImplemented
        return (self.id == other.id and self.n == other.n
                and dict(self.params) == dict(other.params)
                and self.cone_signature == other.cone_signature)

    __hash__ = None

    @property
    def code(self):
        return _CODES[self.id]

    @property
    def param_vector(self):
        return np.array([self.params[k] for k in self.param_order], dtype=float)

    @property
    def signature(self):
        return np.array(self.cone_signature, dtype=float)

    def state(self, name):
        """Seed state registered under ``name`` (e.g. an equilibrium guess)."""
        try:
            return np.array(self.named_states[name], dtype=float)
        except KeyError:
            raise KeyError(f"model {self.id!r} has no named state {name!r}; "
                           f"known: {sorted(self.named_states)}") from None


def _spec(id, params, order, signature, control_index, lower, monotone, named):
    return ModelSpec(
        id=id,
        n=len(signature),
        params=MappingProxyType(dict(params)),
        param_order=tuple(order),
        cone_signature=tuple(int(s) for s in signature),
        control_index=control_index,
        state_lower_bounds=tuple(float(v) for v in lower),
        monotone=monotone,
        named_states=MappingProxyType({k: tuple(map(float, v)) for k, v in named.items()}),
    )


def linear_test():
    order = ("a1", "a2", "b1", "b2")
    params = dict(a1=-1.0, a2=-2.0, b1=1.0, b2=1.0)
    return _spec("linear_test", params, order, (1, 1), 0, (-np.inf, -np.inf), True,
                 {"origin": (0.0, 0.0)})


def repressilator(n_species=8, production=40.0, threshold=1.0, hill=2.0, basal=1.0, decay=1.0):
    """Generalized repressilator with an even number of species."""
    if n_species < 2 or n_species % 2:
        raise ValueError("the bistable ring needs an even number of species")
    order, params = [], {}
    for i in range(1, n_species + 1):
        for j, v in enumerate((production, threshold, hill, basal, decay), start=1):
            name = f"p{i}_{j}"
            order.append(name)
            params[name] = float(v)
    high, low = 19.0, 1.1
    upper = [high if i % 2 == 0 else low for i in range(n_species)]
    lower = [low if i % 2 == 0 else high for i in range(n_species)]
    signature = [1 if i % 2 == 0 else -1 for i in range(n_species)]
    return _spec("repressilator8", params, order, signature, 0, [0.0] * n_species, True,
                 {"upper": upper, "lower": lower})


def fitzhugh_nagumo():
    order = ("a", "b", "c", "d")
    params = dict(a=0.26, b=0.13, c=0.1, d=0.013)
    return _spec("fitzhugh_nagumo", params, order, (1, 1), 0, (0.0, 0.0), False,
                 {"rest": (0.0, 0.0)})


MODELS = {
    "linear_test": linear_test,
    "repressilator8": repressilator,
    "fitzhugh_nagumo": fitzhugh_nagumo,
}


def get_model(id, overrides=None):
    try:
        model = MODELS[id]()
    except KeyError:
        raise KeyError(f"unknown model {id!r}; available: {sorted(MODELS)}") from None
    return override_params(model, overrides or {})


def override_params(model, overrides):
    """Copy of ``model`` with some parameters replaced."""
    unknown = [k for k in overrides if k not in model.params]
    if unknown:
        raise UnknownParameterError(f"unknown parameters for {model.id}: {unknown}")
    if not overrides:
        return model
    params = dict(model.params)
    params.update({k: float(v) for k, v in overrides.items()})
    return replace(model, params=MappingProxyType(params))


def odd_production(value, n_species=8):
    """Overrides setting ``p_i1`` for the odd (1-based) species."""
    return {f"p{i}_1": float(value) for i in range(1, n_species + 1, 2)}


# Perturbed repressilators used for the model-mismatch experiments.
SETTINGS = {"A": odd_production(50.0), "B": odd_production(30.0)}


def repressilator_setting(label):
    return override_params(repressilator(), SETTINGS[label])


def eval_field(model, x, u=0.0):
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n,):
        raise ValueError(f"state must have shape ({model.n},), got {x.shape}")
    if not (np.all(np.isfinite(x)) and np.isfinite(u)):
        raise NonFiniteStateError("state and input must be finite")
    out = np.empty(model.n)
    _kernels.field(model.code, model.param_vector, x, float(u), out)
    return out


def to_cone_coords(model, x):
    """Map to coordinates where the model's order is the nonnegative orthant order."""
    return model.signature * np.asarray(x, dtype=float)


def from_cone_coords(model, y):
    return model.signature * np.asarray(y, dtype=float)


def precedes(model, x, y, slack=0.0):
    """``x <= y`` in the model's cone order, up to ``slack`` per coordinate."""
    d = to_cone_coords(model, y) - to_cone_coords(model, x)
    return bool(np.all(d >= -slack))
