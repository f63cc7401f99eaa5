"""Two-mass hopping oscillators and their sampled hybrid automata.

State is x = (q1, q2, qd1, qd2): hip height, foot height, and their
velocities.  A massless spring of length s = q1 - q2 couples the two bodies.
In the air both masses feel the spring and gravity; on the ground the foot is
pinned (q2 = qd2 = 0) and only the hip moves.  Touchdown is a plastic impact
(foot velocity zeroed); liftoff happens when the spring could accelerate the
free foot upward, i.e. the ground reaction force would become negative.

The linear model uses two affine springs (a soft one while the hip descends,
a stiff one while it ascends), giving four modes A_down, G_down, G_up, A_up.
The nonlinear model uses a single stiffening spring and two modes A, G.

Dynamics are integrated by forward Euler with a fixed step dt; guards are
evaluated on the post-step state, first satisfied guard in listing order
wins, and after a switch the new mode's guards are re-checked (bounded
cascade) so the recorded mode's domain always holds at the recorded state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    InitialStateOutsideDomain,
    NonFiniteState,
    NoValidMode,
)
from .model import Array, SwitchedSystem

# ---------------------------------------------------------------------------
# springs


@dataclass(frozen=True)
class LinearSpring:
    """k(s) = stiffness * s - preload."""

    stiffness: float
    preload: float

    def force(self, s):
        return self.stiffness * np.asarray(s, dtype=float) - self.preload

    def slope(self, s):
        s = np.asarray(s, dtype=float)
        return np.full_like(s, self.stiffness)


@dataclass(frozen=True)
class StiffeningSpring:
    """k(s) = a * (s - ell) / sqrt(c^2 - s^2) - b, clamped to |s| <= frac * c.

    Restoring and progressively stiffening as the leg extends toward the
    kinematic limit c.  Outside the clamp the force is held constant (zero
    slope) so the map stays finite and differentiable-in-practice at
    arbitrary iterates.
    """

    a: float = 10.0
    ell: float = 0.3
    c: float = 1.0
    b: float = 3.0
    frac: float = 0.99

    def force(self, s):
        s = np.clip(np.asarray(s, dtype=float), -self.frac * self.c, self.frac * self.c)
        return self.a * (s - self.ell) / np.sqrt(self.c**2 - s**2) - self.b

    def slope(self, s):
        s = np.asarray(s, dtype=float)
        inside = np.abs(s) <= self.frac * self.c
        sc = np.clip(s, -self.frac * self.c, self.frac * self.c)
        g = self.a * (self.c**2 - self.ell * sc) / (self.c**2 - sc**2) ** 1.5
        return np.where(inside, g, 0.0)


# ---------------------------------------------------------------------------
# automaton types


@dataclass(frozen=True)
class HopperParams:
    m_h: float = 3.0   # hip mass
    m_t: float = 1.0   # toe/foot mass
    g: float = 2.0
    dt: float = 0.01


@dataclass(frozen=True)
class ModeSpec:
    label: str
    ground: bool
    spring: object


@dataclass(frozen=True)
class Guard:
    target: int
    test: Callable[[Array], bool]
    impact: bool = False  # True -> plastic touchdown reset (q2 = qd2 = 0)


@dataclass(frozen=True)
class HybridAutomaton:
    name: str
    params: HopperParams
    modes: tuple                      # ModeSpec per mode
    guards: tuple                     # tuple of Guard tuples, per source mode
    domains: tuple                    # per-mode predicate on a single state

    @property
    def M(self) -> int:
        return len(self.modes)

    @property
    def mode_labels(self) -> tuple:
        return tuple(spec.label for spec in self.modes)

    def mode_index(self, label) -> int:
        if isinstance(label, (int, np.integer)):
            if not 0 <= label < self.M:
                raise NoValidMode(f"mode index {label} out of range")
            return int(label)
        try:
            return self.mode_labels.index(label)
        except ValueError as exc:
            raise NoValidMode(
                f"unknown mode {label!r}; expected one of {self.mode_labels}"
            ) from exc

    def foot_accel(self, mode: int, x: Array) -> float:
        # unconstrained foot acceleration under this mode's spring
        spring = self.modes[mode].spring
        s = x[..., 0] - x[..., 1]
        return spring.force(s) / self.params.m_t - self.params.g


def mode_map(auto: HybridAutomaton, m: int):
    """Batched Euler map and Jacobian for one mode: (..., 4) -> (..., 4)."""
    spec = auto.modes[m]
    p = auto.params
    dt = p.dt

    def F(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        q1, q2, qd1, qd2 = (x[..., i] for i in range(4))
        k = spec.spring.force(q1 - q2)
        a1 = -k / p.m_h - p.g
        a2 = np.zeros_like(k) if spec.ground else k / p.m_t - p.g
        return np.stack(
            [q1 + dt * qd1, q2 + dt * qd2, qd1 + dt * a1, qd2 + dt * a2],
            axis=-1,
        )

    def J(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        kp = spec.spring.slope(x[..., 0] - x[..., 1])
        out = np.zeros(x.shape[:-1] + (4, 4))
        out[..., 0, 0] = 1.0
        out[..., 0, 2] = dt
        out[..., 1, 1] = 1.0
        out[..., 1, 3] = dt
        out[..., 2, 0] = -dt * kp / p.m_h
        out[..., 2, 1] = dt * kp / p.m_h
        out[..., 2, 2] = 1.0
        out[..., 3, 3] = 1.0
        if not spec.ground:
            out[..., 3, 0] = dt * kp / p.m_t
            out[..., 3, 1] = -dt * kp / p.m_t
        return out

    return F, J


def step_mode(auto: HybridAutomaton, mode: int, x: Array) -> Array:
    """One Euler step of the given mode's vector field (no guard handling)."""
    F, _ = mode_map(auto, mode)
    return F(np.asarray(x, dtype=float))


# ---------------------------------------------------------------------------
# hopper factories

A_DOWN, G_DOWN, G_UP, A_UP = 0, 1, 2, 3


def linear_hopper(params: HopperParams = HopperParams()) -> HybridAutomaton:
    """Four-mode hopper with affine descent/ascent springs k1, k2."""
    k1 = LinearSpring(stiffness=10.0, preload=3.0)
    k2 = LinearSpring(stiffness=15.0, preload=3.0)
    modes = (
        ModeSpec("A_down", ground=False, spring=k1),
        ModeSpec("G_down", ground=True, spring=k1),
        ModeSpec("G_up", ground=True, spring=k2),
        ModeSpec("A_up", ground=False, spring=k2),
    )

    def touchdown(x):
        return x[1] <= 0.0 and x[3] < 0.0

    auto = HybridAutomaton(
        name="linear",
        params=params,
        modes=modes,
        guards=(),
        domains=(
            lambda x: x[1] >= -1e-12 and x[2] <= 0.0,   # A_down
            lambda x: abs(x[1]) <= 1e-12 and x[2] <= 0.0,  # G_down
            lambda x: abs(x[1]) <= 1e-12 and x[2] >= 0.0,  # G_up
            lambda x: x[1] >= -1e-12 and x[2] >= 0.0,   # A_up
        ),
    )
    lift = auto.foot_accel  # liftoff when the source mode's spring lifts the foot
    guards = (
        (   # A_down
            Guard(G_DOWN, touchdown, impact=True),
            Guard(G_UP, lambda x: touchdown(x) and x[2] > 0.0, impact=True),
            Guard(A_UP, lambda x: x[2] >= 0.0),  # hip bottom; tie goes up
        ),
        (   # G_down
            Guard(A_DOWN, lambda x: lift(G_DOWN, x) >= 0.0),
            Guard(G_UP, lambda x: x[2] > 0.0),
            Guard(A_UP, lambda x: x[2] > 0.0 and lift(G_DOWN, x) >= 0.0),
        ),
        (   # G_up
            Guard(A_DOWN, lambda x: x[2] < 0.0 and lift(G_UP, x) >= 0.0),
            Guard(G_DOWN, lambda x: x[2] < 0.0),
            Guard(A_UP, lambda x: lift(G_UP, x) >= 0.0),
        ),
        (   # A_up
            Guard(A_DOWN, lambda x: x[2] < 0.0),
            Guard(G_DOWN, lambda x: x[2] < 0.0 and touchdown(x), impact=True),
            Guard(G_UP, touchdown, impact=True),
        ),
    )
    object.__setattr__(auto, "guards", guards)
    return auto


def nonlinear_hopper(
    params: HopperParams = HopperParams(),
    spring: StiffeningSpring = StiffeningSpring(),
) -> HybridAutomaton:
    """Two-mode hopper (air/ground) with a single stiffening spring."""
    modes = (
        ModeSpec("A", ground=False, spring=spring),
        ModeSpec("G", ground=True, spring=spring),
    )
    auto = HybridAutomaton(
        name="nonlinear",
        params=params,
        modes=modes,
        guards=(),
        domains=(
            lambda x: x[1] >= -1e-12,       # A
            lambda x: abs(x[1]) <= 1e-12,   # G
        ),
    )
    guards = (
        (Guard(1, lambda x: x[1] <= 0.0 and x[3] < 0.0, impact=True),),
        (Guard(0, lambda x: auto.foot_accel(1, x) >= 0.0),),
    )
    object.__setattr__(auto, "guards", guards)
    return auto


# ---------------------------------------------------------------------------
# measurement maps


@dataclass(frozen=True)
class MeasurementMap:
    name: str
    d: int
    h: Callable[[Array], Array]
    jac_h: Callable[[Array], Array]


def _const_jac(mat: Array):
    def jac(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(mat, x.shape[:-1] + mat.shape).copy()

    return jac


def measurement_pos() -> MeasurementMap:
    """y = (q1, q2): hip and foot heights."""
    J = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])
    return MeasurementMap(
        "pos", 2, lambda x: np.asarray(x, dtype=float)[..., :2].copy(), _const_jac(J)
    )


def measurement_relative() -> MeasurementMap:
    """y = (q1 - q2, qd1 - qd2): leg length and its rate (onboard sensing).

    The absolute height is unobservable through this map; only the shape of
    the hop is.
    """
    J = np.array([[1.0, -1.0, 0.0, 0.0], [0.0, 0.0, 1.0, -1.0]])

    def h(x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        return np.stack([x[..., 0] - x[..., 1], x[..., 2] - x[..., 3]], axis=-1)

    return MeasurementMap("relative", 2, h, _const_jac(J))


_MEASUREMENTS = {"pos": measurement_pos, "relative": measurement_relative}


def measurement_by_name(name: str) -> MeasurementMap:
    if name not in _MEASUREMENTS:
        raise NoValidMode(f"unknown measurement {name!r}; expected {sorted(_MEASUREMENTS)}")
    return _MEASUREMENTS[name]()


def build_system(auto: HybridAutomaton, meas: MeasurementMap) -> SwitchedSystem:
    """Package the automaton's Euler maps as an estimation-facing system."""
    maps = [mode_map(auto, m) for m in range(auto.M)]
    return SwitchedSystem(
        n=4,
        d=meas.d,
        M=auto.M,
        f=tuple(F for F, _ in maps),
        jac_f=tuple(J for _, J in maps),
        h=meas.h,
        jac_h=meas.jac_h,
        mode_labels=auto.mode_labels,
    )


# ---------------------------------------------------------------------------
# simulation

_MAX_CASCADE = 6


def _settle(auto: HybridAutomaton, mode: int, x: Array):
    """Run the guard cascade on a post-step state.

    Returns (mode, state, impact_fired).  The state is modified only by
    impact resets and the air-penetration clamp; ground modes re-pin the
    constrained coordinates (a no-op except under process noise).
    """
    x = np.array(x, dtype=float)
    impact = False
    for _ in range(_MAX_CASCADE):
        for guard in auto.guards[mode]:
            if guard.test(x):
                mode = guard.target
                if guard.impact:
                    x[1] = 0.0
                    x[3] = 0.0
                    impact = True
                break
        else:
            break
    else:
        raise NoValidMode(f"guard cascade did not settle at x={x}")
    if auto.modes[mode].ground:
        x[1] = 0.0
        x[3] = 0.0
    elif x[1] < 0.0:
        x[1] = 0.0  # noise pushed the free foot below ground; project back
    return mode, x, impact


@dataclass
class SimRecord:
    """One simulated run: truth, mode sequence, measurements."""

    xs: Array                 # (T+1, 4) true states
    ys: Array                 # (T, d) measurements
    modes: Array              # (T,) active mode per step
    w: Array                  # (T, M) one-hot encoding of modes
    reset_indices: Array      # sample indices right after a plastic impact
    seed: int
    dt: float
    model: str
    measurement: str
    mode_labels: tuple = ()


def simulate(
    auto: HybridAutomaton,
    meas: MeasurementMap,
    x_init: Array,
    mode_init,
    T: int,
    meas_noise_std=0.01,
    process_noise_std=0.0,
    seed: int = 0,
) -> SimRecord:
    """Roll the sampled automaton forward and synthesize measurements.

    Per step: Euler-integrate the active mode, add process noise (ground
    coordinates stay pinned), then settle guards.  Measurement noise is
    i.i.d. Gaussian per channel; y_t pairs with x_t for t = 0..T-1.
    Identical arguments give bitwise-identical records.
    """
    x = np.asarray(x_init, dtype=float).copy()
    if x.shape != (4,):
        raise DimensionMismatch(f"x_init must have shape (4,), got {x.shape}")
    mode = auto.mode_index(mode_init)
    if not auto.domains[mode](x):
        raise InitialStateOutsideDomain(
            f"x_init={x} violates the domain of mode {auto.mode_labels[mode]!r}"
        )
    if T < 1:
        raise DimensionMismatch("T must be >= 1")

    rng = np.random.default_rng(seed)
    p_std = np.broadcast_to(np.asarray(process_noise_std, dtype=float), (4,))
    m_std = np.broadcast_to(np.asarray(meas_noise_std, dtype=float), (meas.d,))

    maps = [mode_map(auto, m)[0] for m in range(auto.M)]
    xs = np.empty((T + 1, 4))
    modes = np.empty(T, dtype=np.int64)
    resets = []
    xs[0] = x
    for t in range(T):
        modes[t] = mode
        x_new = maps[mode](x)
        if np.any(p_std > 0.0):
            x_new = x_new + p_std * rng.standard_normal(4)
            if auto.modes[mode].ground:
                x_new[1] = 0.0
                x_new[3] = 0.0
        mode, x_new, impact = _settle(auto, mode, x_new)
        if not np.all(np.isfinite(x_new)):
            raise NonFiniteState(f"state diverged at t={t + 1}: {x_new}")
        if impact:
            resets.append(t + 1)
        xs[t + 1] = x_new
        x = x_new

    ys = np.asarray(meas.h(xs[:T]), dtype=float)
    if np.any(m_std > 0.0):
        ys = ys + m_std * rng.standard_normal((T, meas.d))

    return SimRecord(
        xs=xs,
        ys=ys,
        modes=modes,
        w=np.eye(auto.M)[modes],
        reset_indices=np.asarray(resets, dtype=np.int64),
        seed=seed,
        dt=auto.params.dt,
        model=auto.name,
        measurement=meas.name,
        mode_labels=auto.mode_labels,
    )
