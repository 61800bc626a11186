"""The 5 x 18 lattice of model variants (controller x delay x dynamics x constraints)."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

from accfit.errors import ConfigError


class Controller(str, Enum):
    IDM = "IDM"
    GIPPS = "Gipps"
    LINEAR = "Linear"


class SpacingPolicy(str, Enum):
    INHERENT = "inherent"
    CTH = "CTH"
    IDM = "IDM-desired"
    GIPPS = "Gipps-equilibrium"


class Delay(str, Enum):
    NONE = "None"
    CONSTANT = "Constant"


class Dynamics(str, Enum):
    NONE = "None"
    LINEAR = "Linear"
    NONLINEAR = "Nonlinear"


class Constraints(str, Enum):
    NONE = "None"
    CONSTANT = "Constant"
    MFC = "MFC"


# Base models in lattice order; IDs 1, 19, 37, 55, 73 are the bare variants.
BASE_MODELS = (
    ("IDM", Controller.IDM, SpacingPolicy.IDM, ("delta", "v0", "d0", "th", "a_max", "a_min")),
    ("Gipps", Controller.GIPPS, SpacingPolicy.INHERENT,
     ("theta", "v0", "d0", "th", "a_max", "a_min", "a_min_hat")),
    ("L-CTH", Controller.LINEAR, SpacingPolicy.CTH, ("ks", "kv", "k0", "v0", "d0", "th")),
    ("L-IDM", Controller.LINEAR, SpacingPolicy.IDM,
     ("ks", "kv", "k0", "v0", "d0", "th", "a_max", "a_min")),
    ("L-Gipps", Controller.LINEAR, SpacingPolicy.GIPPS,
     ("ks", "kv", "k0", "v0", "d0", "th", "theta", "a_min", "a_min_hat")),
)
BASE_IDS = (1, 19, 37, 55, 73)
VARIANTS_PER_BASE = 18

NONLINEAR_PARAMS = ("m_load", "f0", "f1", "f2")

_VALID_POLICIES = {
    Controller.IDM: {SpacingPolicy.IDM},
    Controller.GIPPS: {SpacingPolicy.INHERENT},
    Controller.LINEAR: {SpacingPolicy.CTH, SpacingPolicy.IDM, SpacingPolicy.GIPPS},
}


@dataclass(frozen=True)
class ModelSpec:
    controller: Controller
    spacing_policy: SpacingPolicy
    delay: Delay = Delay.NONE
    dynamics: Dynamics = Dynamics.NONE
    constraints: Constraints = Constraints.NONE
    model_id: int | None = None

    def __post_init__(self):
        for name, enum in (("controller", Controller), ("spacing_policy", SpacingPolicy),
                           ("delay", Delay), ("dynamics", Dynamics), ("constraints", Constraints)):
            object.__setattr__(self, name, enum(getattr(self, name)))
        if self.spacing_policy not in _VALID_POLICIES[self.controller]:
            raise ConfigError(
                f"controller {self.controller.value} cannot use spacing policy {self.spacing_policy.value}"
            )
        if self.model_id is None:
            object.__setattr__(self, "model_id", _lattice_id(self))
        elif self.model_id != _lattice_id(self):
            raise ConfigError(f"model_id {self.model_id} does not match configuration {self.label}")

    @property
    def base_index(self) -> int:
        return (self.model_id - 1) // VARIANTS_PER_BASE

    @property
    def base_name(self) -> str:
        return BASE_MODELS[self.base_index][0]

    @property
    def base_id(self) -> int:
        return BASE_IDS[self.base_index]

    @property
    def is_base(self) -> bool:
        return self.model_id in BASE_IDS

    @property
    def label(self) -> str:
        return (f"{self.controller.value}/{self.spacing_policy.value}"
                f" PD={self.delay.value} VD={self.dynamics.value} AC={self.constraints.value}")

    @property
    def param_names(self) -> tuple[str, ...]:
        """Calibration parameters in table order: base, tau_p, tau_a, load and road loads."""
        names = list(BASE_MODELS[self.base_index][3])
        if self.delay is Delay.CONSTANT:
            names.append("tau_p")
        if self.dynamics is not Dynamics.NONE:
            names.append("tau_a")
        if self.dynamics is Dynamics.NONLINEAR:
            names.extend(NONLINEAR_PARAMS)
        return tuple(names)


def _lattice_id(spec: ModelSpec) -> int:
    for b, (_, ctrl, policy, _) in enumerate(BASE_MODELS):
        if ctrl is spec.controller and policy is spec.spacing_policy:
            break
    delay = list(Delay).index(spec.delay)
    dyn = list(Dynamics).index(spec.dynamics)
    con = list(Constraints).index(spec.constraints)
    return b * VARIANTS_PER_BASE + delay * 9 + dyn * 3 + con + 1


@lru_cache(maxsize=None)
def enumerate_models() -> tuple[ModelSpec, ...]:
    """All 90 variants, ordered by model ID."""
    specs = []
    for _, ctrl, policy, _ in BASE_MODELS:
        for delay in Delay:
            for dyn in Dynamics:
                for con in Constraints:
                    specs.append(ModelSpec(ctrl, policy, delay, dyn, con))
    return tuple(specs)


def get_model(model_id: int) -> ModelSpec:
    if not 1 <= int(model_id) <= len(enumerate_models()):
        raise ConfigError(f"model id must be in 1..90, got {model_id}")
    return enumerate_models()[int(model_id) - 1]


def model_class(model_id: int) -> list[int]:
    """IDs of the 18 variants sharing ``model_id``'s base model."""
    b = (int(model_id) - 1) // VARIANTS_PER_BASE
    return list(range(b * VARIANTS_PER_BASE + 1, (b + 1) * VARIANTS_PER_BASE + 1))
