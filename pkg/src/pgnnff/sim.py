"""Closed-loop simulation: synthetic plants, discretized feedback,
jerk-limited references, feedforward deployment and tracking metrics.

Plants are continuous-time ODEs advanced one sampling interval per step
under zero-order-hold input with fixed-step RK4 (10 substeps).  The inner
stepping loops run on plain Python floats: per-sample numpy overhead
dominates at these state dimensions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from .model import PgnnModel
from .stability import ZpetcFilter

__all__ = [
    "PlantModel",
    "FeedbackLaw",
    "ReferenceTrajectory",
    "ScenarioResult",
    "SimulationDivergedError",
    "make_reference",
    "run_closed_loop",
    "generate_training_experiment",
    "metrics",
    "NoFeedforward",
    "ModelFeedforward",
    "ZpetcFeedforward",
    "clm_default_plant",
    "rotating_default_plant",
    "clm_feedback",
    "rotating_feedback",
]

RK4_SUBSTEPS = 10


class SimulationDivergedError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Plants


class PlantModel:
    """Continuous-time plant advanced per sample under ZOH input.

    kind 'clm_synthetic': m x'' = u - f_v x' - f_c sign(x') - A_p sin(2 pi x / l_p),
    output y = x.  The position-dependent term is a synthetic stand-in for
    position-dependent friction of a coreless linear motor.

    kind 'rotating_translating': translating mass with parasitic rotation,
        m x''      = u - f_v x' - g(y)
        M theta''  = l_y (u - g(y)) - 2 l_x (d theta' + k theta)
        y = x - l_y theta,  g(y) = c sin(2 pi y / l_m).
    """

    def __init__(self, kind: str, T_s: float, **params):
        self.kind = kind
        self.T_s = float(T_s)
        self.params = dict(params)
        if kind == "clm_synthetic":
            for key in ("m", "f_v", "f_c"):
                if key not in params:
                    raise ValueError(f"clm_synthetic plant needs parameter '{key}'")
            self.params.setdefault("A_p", 1.0)
            self.params.setdefault("l_p", 0.05)
            self._n_state = 2
        elif kind == "rotating_translating":
            for key in ("m", "l_x", "l_y", "f_v", "k", "d", "l_m", "c"):
                if key not in params:
                    raise ValueError(f"rotating plant needs parameter '{key}'")
            M = params["m"] * (params["l_x"] ** 2 + params["l_y"] ** 2) / 3.0
            if "M" in params and not math.isclose(params["M"], M, rel_tol=1e-12):
                raise ValueError("M must equal m (l_x^2 + l_y^2) / 3")
            self.params["M"] = M
            self._n_state = 4
        else:
            raise ValueError(f"unknown plant kind '{kind}'")
        self.reset()

    def reset(self, state=None) -> None:
        self.state = [0.0] * self._n_state if state is None else [float(s) for s in state]

    def reset_to_position(self, y0: float) -> None:
        """Rest state at output position y0 (zero velocity/rotation)."""
        s = [0.0] * self._n_state
        s[0] = float(y0)
        self.state = s

    @property
    def y(self) -> float:
        if self.kind == "clm_synthetic":
            return self.state[0]
        return self.state[0] - self.params["l_y"] * self.state[2]

    def _deriv(self, s, u):
        p = self.params
        if self.kind == "clm_synthetic":
            x, v = s
            sgn = 0.0 if v == 0.0 else math.copysign(1.0, v)
            acc = (
                u - p["f_v"] * v - p["f_c"] * sgn
                - p["A_p"] * math.sin(2.0 * math.pi * x / p["l_p"])
            ) / p["m"]
            return (v, acc)
        x, v, th, om = s
        y = x - p["l_y"] * th
        g = p["c"] * math.sin(2.0 * math.pi * y / p["l_m"])
        acc = (u - p["f_v"] * v - g) / p["m"]
        alpha = (p["l_y"] * (u - g) - 2.0 * p["l_x"] * (p["d"] * om + p["k"] * th)) / p["M"]
        return (v, acc, om, alpha)

    def step(self, u: float) -> float:
        """Advance one sampling interval under constant input; returns y."""
        u = float(u)
        h = self.T_s / RK4_SUBSTEPS
        s = tuple(self.state)
        if not (math.isfinite(u) and all(math.isfinite(v) for v in s)):
            raise SimulationDivergedError("plant state is non-finite")
        try:
            for _ in range(RK4_SUBSTEPS):
                k1 = self._deriv(s, u)
                k2 = self._deriv(tuple(a + 0.5 * h * b for a, b in zip(s, k1)), u)
                k3 = self._deriv(tuple(a + 0.5 * h * b for a, b in zip(s, k2)), u)
                k4 = self._deriv(tuple(a + h * b for a, b in zip(s, k3)), u)
                s = tuple(
                    a + (h / 6.0) * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
                    for a, b1, b2, b3, b4 in zip(s, k1, k2, k3, k4)
                )
        except (ValueError, OverflowError) as exc:  # e.g. sin of inf
            raise SimulationDivergedError("plant state is non-finite") from exc
        if not all(math.isfinite(v) for v in s):
            raise SimulationDivergedError("plant state is non-finite")
        self.state = list(s)
        return self.y

    def linear_matrices(self):
        """(A, B, C) of the linearized continuous dynamics with the
        position-dependent term removed; for linear-regime oracles."""
        p = self.params
        if self.kind == "clm_synthetic":
            A = np.array([[0.0, 1.0], [0.0, -p["f_v"] / p["m"]]])
            B = np.array([[0.0], [1.0 / p["m"]]])
            C = np.array([[1.0, 0.0]])
            return A, B, C
        A = np.array(
            [
                [0.0, 1.0, 0.0, 0.0],
                [0.0, -p["f_v"] / p["m"], 0.0, 0.0],
                [0.0, 0.0, 0.0, 1.0],
                [0.0, 0.0, -2 * p["l_x"] * p["k"] / p["M"], -2 * p["l_x"] * p["d"] / p["M"]],
            ]
        )
        B = np.array([[0.0], [1.0 / p["m"]], [0.0], [p["l_y"] / p["M"]]])
        C = np.array([[1.0, 0.0, -p["l_y"], 0.0]])
        return A, B, C


def clm_default_plant(T_s: float = 1e-3, **overrides) -> PlantModel:
    """Synthetic coreless-linear-motor stand-in; parameter magnitudes chosen
    to be representative, position-dependent term amplitude 1 N, pitch 5 cm."""
    params = dict(m=20.0, f_v=50.0, f_c=10.0, A_p=1.0, l_p=0.05)
    params.update(overrides)
    return PlantModel("clm_synthetic", T_s, **params)


def rotating_default_plant(T_s: float = 1e-3, **overrides) -> PlantModel:
    params = dict(
        m=20.0, l_x=1.0, l_y=1.0, f_v=50.0,
        k=25e3 / 3.0, d=575.0 / 3.0, l_m=0.05, c=1.0,
    )
    params.update(overrides)
    return PlantModel("rotating_translating", T_s, **params)


# ---------------------------------------------------------------------------
# Feedback


class FeedbackLaw:
    """ZOH discretization of a continuous transfer function controller on a
    controllable-canonical realization."""

    def __init__(self, num, den, T_s: float):
        self.num = np.asarray(num, float)
        self.den = np.asarray(den, float)
        self.T_s = float(T_s)
        A, B, C, D = scipy.signal.tf2ss(self.num, self.den)
        Ad, Bd, Cd, Dd, _ = scipy.signal.cont2discrete((A, B, C, D), T_s, method="zoh")
        self.A, self.B = Ad, Bd
        self.C, self.D = Cd, Dd
        self.reset()

    def reset(self) -> None:
        self.x = np.zeros((self.A.shape[0], 1))

    def step(self, e: float) -> float:
        u = (self.C @ self.x + self.D * e).item()
        self.x = self.A @ self.x + self.B * e
        return u

    def dc_gain_error(self) -> float:
        """Relative mismatch between continuous and discrete DC gains."""
        dc_c = self.num[-1] / self.den[-1]
        dc_d = (
            self.C @ np.linalg.solve(np.eye(self.A.shape[0]) - self.A, self.B)
            + self.D
        ).item()
        return abs(dc_d - dc_c) / abs(dc_c)


def clm_feedback(T_s: float = 1e-3) -> FeedbackLaw:
    """Loop-shaped position controller for the synthetic linear motor."""
    num = [1.056e8, 2.282e9, 7.884e9]
    den = [1.0, 547.4, 7.643e4, -1.669e-4]
    return FeedbackLaw(num, den, T_s)


def rotating_feedback(T_s: float = 1e-3) -> FeedbackLaw:
    """C(s) = 5e3 (s + 4 pi) / (s + 20 pi); DC gain 1000."""
    num = [5e3, 5e3 * 4.0 * math.pi]
    den = [1.0, 20.0 * math.pi]
    return FeedbackLaw(num, den, T_s)


# ---------------------------------------------------------------------------
# Reference generation


@dataclass
class ReferenceTrajectory:
    """Sampled reference with trailing preview buffer (terminal-setpoint
    padded) so feedforward filters can look ahead."""

    r: np.ndarray
    T_s: float
    params: dict = field(default_factory=dict)
    n_preview: int = 0

    @property
    def n(self) -> int:
        """Samples excluding the preview padding."""
        return self.r.size - self.n_preview


def _phase_counts(dist: float, v: float, a: float, j: float, T_s: float):
    """Sample counts (n_j, n_a, n_v) of the 7-phase profile; rounded up so
    the realized velocity/acceleration stay at or below the limits."""
    t_j = a / j
    t_a = v / a - t_j
    if t_a < 0.0:  # jerk-limited triangle: peak accel never reached
        t_j = math.sqrt(v / j)
        t_a = 0.0
    t_v = dist / v - (2.0 * t_j + t_a)
    if t_v < 0.0:
        # cruise velocity never reached; lower the peak velocity
        if a / j <= math.sqrt(dist / j):
            t_j = a / j
            # dist = v_p (v_p / a + t_j) -> quadratic in v_p
            v_p = 0.5 * (-a * t_j + math.sqrt((a * t_j) ** 2 + 4.0 * a * dist))
            t_a = v_p / a - t_j
        else:
            t_j = (dist / (2.0 * j)) ** (1.0 / 3.0)
            t_a = 0.0
        t_v = 0.0
    ceil = lambda t: int(math.ceil(t / T_s - 1e-9))
    return max(ceil(t_j), 1), max(ceil(t_a), 0), max(ceil(t_v), 0)


def make_reference(start: float, end: float, v_max: float, a_max: float,
                   j_max: float, T_s: float, dwell_before: float = 0.1,
                   dwell_after: float = 0.1, n_preview: int = 0) -> ReferenceTrajectory:
    """Jerk-limited point-to-point profile sampled at T_s.

    Phase durations are rounded to whole samples and the jerk magnitude is
    re-solved so the sampled profile reaches the endpoint exactly.
    """
    if min(v_max, a_max, j_max, T_s) <= 0.0:
        raise ValueError("kinematic limits and T_s must be positive")
    dist = abs(end - start)
    sgn = 1.0 if end >= start else -1.0
    n_dw0 = int(round(dwell_before / T_s))
    n_dw1 = int(round(dwell_after / T_s))
    if dist == 0.0:
        r = np.full(n_dw0 + n_dw1 + n_preview + 1, float(start))
        return ReferenceTrajectory(r, T_s, {"start": start, "end": end},
                                   n_preview=n_preview)

    n_j, n_a, n_v = _phase_counts(dist, v_max, a_max, j_max, T_s)
    # realized cruise velocity / accel / jerk from the rounded counts
    v_c = dist / ((n_v + 2 * n_j + n_a) * T_s)
    a_pk = v_c / ((n_j + n_a) * T_s)
    j_eff = a_pk / (n_j * T_s)

    jerk = (
        [j_eff] * n_j + [0.0] * n_a + [-j_eff] * n_j + [0.0] * n_v
        + [-j_eff] * n_j + [0.0] * n_a + [j_eff] * n_j
    )
    pos = [0.0]
    p = v = aq = 0.0
    for jk in jerk:  # exact integration of the piecewise-constant jerk
        p += v * T_s + 0.5 * aq * T_s**2 + jk * T_s**3 / 6.0
        v += aq * T_s + 0.5 * jk * T_s**2
        aq += jk * T_s
        pos.append(p)
    prof = start + sgn * np.asarray(pos)
    r = np.concatenate([
        np.full(n_dw0, float(start)),
        prof,
        np.full(n_dw1 + n_preview, prof[-1]),
    ])
    return ReferenceTrajectory(
        r, T_s,
        {"start": start, "end": end, "v_max": v_max, "a_max": a_max,
         "j_max": j_max, "v_peak": v_c, "a_peak": a_pk, "j_peak": j_eff},
        n_preview=n_preview,
    )


# ---------------------------------------------------------------------------
# Feedforward controllers


class NoFeedforward:
    def prepare(self, r: np.ndarray) -> None:
        pass

    def step(self, k: int) -> float:
        return 0.0


class ModelFeedforward:
    """Feedforward from an inverse model: the regressor is filled with
    future reference values in place of outputs and the controller's own
    past outputs in place of past inputs."""

    def __init__(self, model: PgnnModel, sat_guard: float = 1e6):
        self.model = model
        self.sat_guard = float(sat_guard)
        self._u_full = None

    def prepare(self, r: np.ndarray) -> None:
        spec = self.model.spec
        n = r.size
        pad_lead = int(spec.y_shifts()[0])
        pad_lag = int(-spec.y_shifts()[-1])
        rp = np.concatenate([
            np.full(max(pad_lag, 0), r[0]),
            r,
            np.full(max(pad_lead, 0), r[-1]),
        ])
        k0 = max(pad_lag, 0)
        self._phi_r = np.column_stack([rp[k0 + s : k0 + s + n] for s in spec.y_shifts()])
        if spec.n_u == 0:
            # static filter: evaluate the whole trace at once
            self._u_full = self.model.predict(self._phi_r)
        else:
            self._u_full = None
            self._past = [0.0] * spec.n_u

    def step(self, k: int) -> float:
        if self._u_full is not None:
            u = float(self._u_full[k])
        else:
            phi = np.concatenate([self._phi_r[k], self._past])
            u = float(self.model.predict(phi[None, :])[0])
            self._past = [u] + self._past[:-1]
        if abs(u) > self.sat_guard:
            raise SimulationDivergedError(
                f"feedforward exceeded saturation guard at step {k}: {u:.3e}"
            )
        return u


class ZpetcFeedforward:
    """Stable approximate inversion: zero-phase linear filter plus an
    optional residual network fed with the reference window and the
    controller's own past outputs."""

    def __init__(self, zfilter: ZpetcFilter, nn_model: PgnnModel | None = None,
                 sat_guard: float = 1e6):
        self.zfilter = zfilter
        self.nn_model = nn_model
        self.sat_guard = float(sat_guard)

    def prepare(self, r: np.ndarray) -> None:
        self._u_lin = self.zfilter.apply(r)
        if self.nn_model is not None:
            spec = self.nn_model.spec
            n = r.size
            pad_lead = int(spec.y_shifts()[0])
            pad_lag = int(-spec.y_shifts()[-1])
            rp = np.concatenate([
                np.full(max(pad_lag, 0), r[0]),
                r,
                np.full(max(pad_lead, 0), r[-1]),
            ])
            k0 = max(pad_lag, 0)
            self._phi_r = np.column_stack(
                [rp[k0 + s : k0 + s + n] for s in spec.y_shifts()]
            )
            self._past = [0.0] * spec.n_u

    def step(self, k: int) -> float:
        u = float(self._u_lin[k])
        if self.nn_model is not None:
            phi = np.concatenate([self._phi_r[k], self._past])
            u += float(self.nn_model.predict(phi[None, :])[0])
            self._past = [u] + self._past[: len(self._past) - 1] if self._past else []
        if abs(u) > self.sat_guard:
            raise SimulationDivergedError(
                f"feedforward exceeded saturation guard at step {k}: {u:.3e}"
            )
        return u


# ---------------------------------------------------------------------------
# Closed loop


@dataclass
class ScenarioResult:
    r: np.ndarray
    u_ff: np.ndarray
    u_fb: np.ndarray
    u: np.ndarray
    y: np.ndarray
    e: np.ndarray
    T_s: float
    mae: float = 0.0
    mse: float = 0.0

    def __post_init__(self):
        self.mae = float(np.mean(np.abs(self.e)))
        self.mse = float(np.mean(self.e**2))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "r", "u_ff", "u_fb", "u", "y", "e"])
            for k in range(self.r.size):
                w.writerow([
                    repr(k * self.T_s), repr(float(self.r[k])),
                    repr(float(self.u_ff[k])), repr(float(self.u_fb[k])),
                    repr(float(self.u[k])), repr(float(self.y[k])),
                    repr(float(self.e[k])),
                ])


def run_closed_loop(plant: PlantModel, fb: FeedbackLaw, ff, ref: ReferenceTrajectory,
                    noise=None, reset: bool = True) -> ScenarioResult:
    """Simulate u(k) = u_fb(k) + u_ff(k) over the reference (preview buffer
    excluded from the scored trace).  ``noise`` optionally adds a per-step
    input disturbance array."""
    if ff is None:
        ff = NoFeedforward()
    if reset:
        plant.reset_to_position(ref.r[0])
        fb.reset()
    ff.prepare(ref.r)
    n = ref.n
    r = ref.r[:n]
    tr = {key: np.empty(n) for key in ("u_ff", "u_fb", "u", "y", "e")}
    y = plant.y
    for k in range(n):
        e = r[k] - y
        u_fb = fb.step(e)
        u_ff = ff.step(k)
        u = u_fb + u_ff
        if noise is not None:
            u += float(noise[k])
        tr["y"][k] = y
        tr["e"][k] = e
        tr["u_fb"][k] = u_fb
        tr["u_ff"][k] = u_ff
        tr["u"][k] = u
        y = plant.step(u)
    return ScenarioResult(r=r.copy(), T_s=ref.T_s, **tr)


def metrics(result: ScenarioResult):
    """(MAE, MSE) of the tracking error over the whole trace."""
    return result.mae, result.mse


def reference_suite(velocities, start: float, end: float, a_max: float,
                    j_max: float, T_s: float, dwell: float = 0.1):
    """Forward-and-back reference pair per velocity, so consecutive
    references join continuously (no setpoint steps in the suite)."""
    refs = []
    for v in velocities:
        refs.append(make_reference(start, end, v, a_max, j_max, T_s,
                                   dwell_before=dwell, dwell_after=dwell))
        refs.append(make_reference(end, start, v, a_max, j_max, T_s,
                                   dwell_before=dwell, dwell_after=dwell))
    return refs


def generate_training_experiment(plant: PlantModel, fb: FeedbackLaw,
                                 references, noise_var: float = 50.0,
                                 seed: int = 0, noise_window=(0.0, 1.0)):
    """Closed-loop identification experiment: run the reference suite
    back-to-back (plant state persists) with zero-mean white input noise of
    the given variance inside the per-reference window; returns (t, u, y).
    """
    rng = np.random.default_rng(seed)
    plant.reset_to_position(references[0].r[0])
    fb.reset()
    t_parts, u_parts, y_parts = [], [], []
    offset = 0
    for ref in references:
        n = ref.n
        noise = np.zeros(n)
        lo, hi = int(noise_window[0] * n), int(noise_window[1] * n)
        if noise_var > 0.0 and hi > lo:
            noise[lo:hi] = rng.normal(0.0, math.sqrt(noise_var), hi - lo)
        res = run_closed_loop(plant, fb, None, ref, noise=noise, reset=False)
        t_parts.append((offset + np.arange(n)) * ref.T_s)
        u_parts.append(res.u)
        y_parts.append(res.y)
        offset += n
    return (np.concatenate(t_parts), np.concatenate(u_parts), np.concatenate(y_parts))
