"""Ground-truth planar-quadrotor dynamics and fixed-step closed-loop simulation.

The model uses body-frame velocities, so gravity enters the velocity rows
through the roll angle and the input matrix is constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BLOWUP_NORM = 1e6


@dataclass(frozen=True)
class PvtolParams:
    """Physical constants: gravity, mass, thruster moment arm, roll inertia."""

    g: float = 9.81
    mass: float = 0.486
    arm_l: float = 0.25
    inertia_J: float = 0.00383

    def __post_init__(self):
        for name in ("g", "mass", "arm_l", "inertia_J"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")

    def input_matrix(self) -> np.ndarray:
        B = np.zeros((6, 2))
        B[4, :] = 1.0 / self.mass
        B[5, 0] = self.arm_l / self.inertia_J
        B[5, 1] = -self.arm_l / self.inertia_J
        return B

    def hover_control(self) -> np.ndarray:
        return np.full(2, self.mass * self.g / 2.0)


def pvtol_drift(x: np.ndarray, p: PvtolParams) -> np.ndarray:
    """Control-independent part f(x) of the dynamics."""
    px, pz, phi, vx, vz, phidot = x
    s, c = np.sin(phi), np.cos(phi)
    return np.array([
        vx * c - vz * s,
        vx * s + vz * c,
        phidot,
        vz * phidot - p.g * s,
        -vx * phidot - p.g * c,
        0.0,
    ])


def pvtol_dynamics(x, u, p: PvtolParams) -> np.ndarray:
    """Full state derivative f(x) + B u."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
        raise ValueError("pvtol_dynamics: non-finite input")
    return pvtol_drift(x, p) + p.input_matrix() @ u


def pvtol_jacobian(x, p: PvtolParams) -> np.ndarray:
    """Analytic state Jacobian of the drift term (B is constant)."""
    px, pz, phi, vx, vz, phidot = np.asarray(x, dtype=float)
    s, c = np.sin(phi), np.cos(phi)
    J = np.zeros((6, 6))
    J[0, 2] = -vx * s - vz * c
    J[0, 3] = c
    J[0, 4] = -s
    J[1, 2] = vx * c - vz * s
    J[1, 3] = s
    J[1, 4] = c
    J[2, 5] = 1.0
    J[3, 2] = -p.g * c
    J[3, 4] = phidot
    J[3, 5] = vz
    J[4, 2] = p.g * s
    J[4, 3] = -phidot
    J[4, 5] = -vx
    return J


@dataclass
class SimResult:
    """Rollout output: trajectory plus divergence bookkeeping.

    Divergence (state norm above BLOWUP_NORM or non-finite) is data, not an
    error; the trajectory is truncated at the last finite sample and
    ``first_exit_time`` records when the bound was crossed.
    """

    traj: "Trajectory"
    diverged: bool = False
    first_exit_time: float | None = None


def simulate(field, policy, x0, T: float, dt: float = 0.01) -> SimResult:
    """Roll out ``xdot = field(x, u)`` under ``u = policy(t, x)``.

    Classical RK4 with the control held over each dt step (zero-order hold).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if T < dt:
        raise ValueError("T must be at least dt")
    x0 = np.asarray(x0, dtype=float)
    n_steps = int(round(T / dt))
    times = [0.0]
    states = [x0.copy()]
    controls = []
    x = x0.copy()
    diverged = False
    exit_time = None
    for k in range(n_steps):
        t = k * dt
        u = np.asarray(policy(t, x), dtype=float)
        k1 = field(x, u)
        k2 = field(x + 0.5 * dt * k1, u)
        k3 = field(x + 0.5 * dt * k2, u)
        k4 = field(x + dt * k3, u)
        x_next = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(x_next)) or np.linalg.norm(x_next) > BLOWUP_NORM:
            diverged = True
            exit_time = t + dt
            break
        controls.append(u)
        times.append(t + dt)
        states.append(x_next)
        x = x_next
    from .core import Trajectory
    if controls:
        u_arr = np.array(controls)
    else:
        u_arr = np.zeros((0, np.atleast_1d(policy(0.0, x0)).shape[0]))
    traj = Trajectory(np.array(times), np.array(states), u_arr)
    return SimResult(traj=traj, diverged=diverged, first_exit_time=exit_time)
