"""Input-to-state stability of trained feedforward filters.

A feedforward law with linear physics layer and identity/affine NN input
transform is rewritten as

    x(k+1) = A x(k) + B ( theta_r' phi_r(k) + f_NN([phi_r; x](k)) ),

with x the vector of past feedforward inputs and A the companion matrix of
the past-input coefficients.  ISS is certified through a quadratic
Lyapunov pair (P, Q), the scalar weight beta maximizing the admissible
Lipschitz budget, and the elementwise network bound K <= prod |W_l|.

Nonminimum-phase inverses are handled either by extending the preview
window (dropping unstable state dimensions) or by zero-phase-error
approximate inversion of the linear part (ZPETC).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.signal

from .data import NormalizationRecord, RegressorSpec
from .model import NeuralNet, PgnnModel

__all__ = [
    "FeedforwardStateSpace",
    "IssCertificate",
    "ZpetcFilter",
    "to_state_space",
    "lipschitz_bound",
    "lyapunov_pair",
    "optimal_beta",
    "gain_condition_rhs",
    "certify_iss",
    "theta_constraint",
    "ThetaConstraint",
    "extend_preview",
    "zpetc_inverse",
    "companion",
    "UnstableCompanionError",
]

# near-unit eigenvalues make the Lyapunov solve ill-conditioned; classify
# them as unstable
UNIT_CIRCLE_TOL = 1e-9


class UnstableCompanionError(RuntimeError):
    def __init__(self, eigs):
        bad = [z for z in eigs if abs(z) >= 1.0 - UNIT_CIRCLE_TOL]
        super().__init__(
            "companion matrix is not Schur; offending eigenvalues: "
            + ", ".join(f"{z:.6g}" for z in bad)
        )
        self.eigenvalues = np.asarray(eigs)


def companion(theta_uff: np.ndarray) -> np.ndarray:
    """Companion matrix with first row theta_uff and shifted identity below."""
    theta_uff = np.asarray(theta_uff, float).ravel()
    n = theta_uff.size
    A = np.zeros((n, n))
    if n:
        A[0, :] = theta_uff
        A[1:, :-1] = np.eye(n - 1)
    return A


@dataclass
class FeedforwardStateSpace:
    """State-space form of a feedforward filter.

    ``theta_r`` multiplies the reference window (length n_r), ``A`` is the
    (n_state x n_state) companion of the past-input coefficients, and the
    optional net consumes [phi_r; x] after the affine normalization.
    ``nn_offset`` is the raw net value at the zero regressor; subtracting
    it makes the origin an equilibrium (the offset is a genuine constant
    of the learned law and is added back for deployment).
    """

    theta_r: np.ndarray
    A: np.ndarray
    nn: NeuralNet | None = None
    normalization: NormalizationRecord | None = None
    nn_offset: float = 0.0

    def __post_init__(self):
        self.theta_r = np.asarray(self.theta_r, float).ravel()
        self.A = np.atleast_2d(np.asarray(self.A, float)) if np.size(self.A) else np.zeros((0, 0))

    @property
    def n_r(self) -> int:
        return self.theta_r.size

    @property
    def n_state(self) -> int:
        return self.A.shape[0]

    @property
    def theta_uff(self) -> np.ndarray:
        return self.A[0, :] if self.n_state else np.zeros(0)

    def nn_value(self, phi_r, x, shifted: bool) -> float:
        if self.nn is None:
            return 0.0
        z = np.concatenate([phi_r, x])
        if self.normalization is not None:
            z = self.normalization.apply(z)
        v = float(self.nn.predict(z[None, :])[0])
        return v - self.nn_offset if shifted else v

    def step(self, phi_r, x, shifted: bool = False):
        """One update; returns (u_ff, next state)."""
        phi_r = np.asarray(phi_r, float).ravel()
        u = float(self.theta_r @ phi_r) + self.nn_value(phi_r, x, shifted)
        if self.n_state:
            u += float(self.theta_uff @ x)
            x_next = np.empty(self.n_state)
            x_next[0] = u
            x_next[1:] = x[: self.n_state - 1]
        else:
            x_next = x
        return u, x_next

    def simulate(self, phi_r_seq: np.ndarray, shifted: bool = True,
                 x0: np.ndarray | None = None):
        """Run the recursion over a sequence of reference windows
        (T x n_r); returns (u_ff trace, state-norm trace)."""
        phi_r_seq = np.atleast_2d(phi_r_seq)
        x = np.zeros(self.n_state) if x0 is None else np.asarray(x0, float).copy()
        u_tr = np.empty(phi_r_seq.shape[0])
        xn = np.empty(phi_r_seq.shape[0])
        for k in range(phi_r_seq.shape[0]):
            u_tr[k], x = self.step(phi_r_seq[k], x, shifted=shifted)
            xn[k] = np.linalg.norm(x)
            if not np.isfinite(xn[k]):
                raise FloatingPointError(f"feedforward state diverged at step {k}")
        return u_tr, xn


def to_state_space(model: PgnnModel) -> FeedforwardStateSpace:
    """Rewrite a trained model with linear physics layer and identity
    (affine-normalized) transform into state-space form."""
    if model.phys is None or model.phys.basis != "linear":
        raise ValueError(
            "state-space rewrite needs a linear physics layer; nonlinear "
            "physics without a supplied quadratic Lyapunov function is "
            "unsupported"
        )
    if model.nn is not None and model.transform.kind != "identity":
        raise ValueError("state-space rewrite needs the identity transform")
    spec = model.spec
    theta = model.phys.theta
    theta_r = theta[: spec.n_y]
    theta_uff = theta[spec.n_y :]
    offset = 0.0
    if model.nn is not None:
        z0 = model.normalization.apply(np.zeros(spec.length))
        offset = float(model.nn.predict(z0[None, :])[0])
    return FeedforwardStateSpace(
        theta_r=theta_r,
        A=companion(theta_uff),
        nn=model.nn,
        normalization=model.normalization if model.nn is not None else None,
        nn_offset=offset,
    )


def lipschitz_bound(nn: NeuralNet, n_r: int,
                    input_scale: np.ndarray | None = None):
    """Elementwise input-Lipschitz bound K = prod |W_l| (tanh slopes are at
    most 1), corrected for the affine input normalization, partitioned
    into the reference block K_r (first ``n_r`` inputs) and the past-input
    block K_uff."""
    K = nn.weight_abs_product()
    if input_scale is not None:
        K = K / np.asarray(input_scale, float)
    return K[:n_r].copy(), K[n_r:].copy()


def lyapunov_pair(A: np.ndarray, Q: np.ndarray | None = None,
                  residual_tol: float = 1e-10) -> np.ndarray:
    """Solve A' P A - P + Q = 0 for P > 0 (default Q = I)."""
    A = np.atleast_2d(np.asarray(A, float))
    n = A.shape[0]
    Q = np.eye(n) if Q is None else np.atleast_2d(np.asarray(Q, float))
    eigs = np.linalg.eigvals(A)
    if np.any(np.abs(eigs) >= 1.0 - UNIT_CIRCLE_TOL):
        raise UnstableCompanionError(eigs)
    P = scipy.linalg.solve_discrete_lyapunov(A.T, Q)
    P = 0.5 * (P + P.T)
    res = np.linalg.norm(A.T @ P @ A - P + Q)
    if res > residual_tol * max(1.0, np.linalg.norm(Q)):
        raise RuntimeError(f"Lyapunov residual {res:.3e} above tolerance")
    return P


def optimal_beta(A, B, P, Q) -> float:
    """Closed-form beta maximizing (1-beta) lambda_min(Q) / c_beta.

    At A = 0 the cross term vanishes and the optimum is the beta -> 0
    limit (handled without dividing by zero in :func:`gain_condition_rhs`).
    """
    A = np.atleast_2d(np.asarray(A, float))
    B = np.asarray(B, float).reshape(-1, 1)
    lam = float(np.min(np.linalg.eigvalsh(Q)))
    if lam <= 0.0:
        raise ValueError("Q must be positive definite")
    PB = P @ B
    s3 = (B.T @ PB).item()  # B'PB
    if s3 <= 0.0:
        raise ValueError("B'PB must be positive")
    AAtP = A @ A.T @ P
    s1 = (B.T @ P @ AAtP @ B).item()  # B'P A A'P B
    s2 = (B.T @ P @ (lam * np.eye(A.shape[0]) + AAtP) @ B).item()
    if s1 <= 0.0:
        return 0.0
    return (-s1 + np.sqrt(s2 * s1)) / (lam * s3)


def gain_condition_rhs(A, B, P, Q, beta: float) -> float:
    """(1 - beta) lambda_min(Q) / c_beta with
    c_beta = B'P (I + A A'P / (beta lambda_min(Q))) B."""
    A = np.atleast_2d(np.asarray(A, float))
    B = np.asarray(B, float).reshape(-1, 1)
    lam = float(np.min(np.linalg.eigvalsh(Q)))
    s3 = (B.T @ P @ B).item()
    s1 = (B.T @ P @ A @ A.T @ P @ B).item()
    if beta <= 0.0:
        if s1 > 0.0:
            return -np.inf  # c_beta blows up for beta -> 0 with A != 0
        return lam / s3
    c_beta = s3 + s1 / (beta * lam)
    return (1.0 - beta) * lam / c_beta


@dataclass
class IssCertificate:
    """Certificate of the scalar ISS condition lhs < rhs with
    lhs = K_uff'K_uff and rhs = (1-beta) lambda_min(Q) / c_beta."""

    P: np.ndarray
    Q: np.ndarray
    beta: float
    c_beta: float
    K: np.ndarray
    lhs: float
    rhs: float
    margin: float
    certified: bool
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "P": {"shape": list(self.P.shape), "data": self.P.ravel().tolist()},
            "Q": {"shape": list(self.Q.shape), "data": self.Q.ravel().tolist()},
            "beta": self.beta,
            "c_beta": self.c_beta,
            "K": self.K.tolist(),
            "lhs": self.lhs,
            "rhs": self.rhs,
            "margin": self.margin,
            "certified": bool(self.certified),
            "degenerate": bool(self.degenerate),
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    def verdict(self) -> str:
        state = "CERTIFIED" if self.certified else "NOT CERTIFIED"
        if self.degenerate:
            return f"{state}: static filter (no past-input state)"
        return (
            f"{state}: lhs={self.lhs:.6e} rhs={self.rhs:.6e} "
            f"margin={self.margin:.6e} beta={self.beta:.6f}"
        )


# strict-inequality buffer: require margin >= STRICTNESS * rhs
STRICTNESS = 1e-9


def certify_iss(ss: FeedforwardStateSpace, Q: np.ndarray | None = None) -> IssCertificate:
    """Evaluate the ISS condition for a feedforward state space."""
    n = ss.n_state
    if n == 0:
        # static filter: no internal state, trivially ISS
        K = np.zeros(ss.n_r)
        if ss.nn is not None:
            Kr, _ = lipschitz_bound(
                ss.nn, ss.n_r,
                None if ss.normalization is None else ss.normalization.scale,
            )
            K = np.concatenate([Kr, np.zeros(0)])
        return IssCertificate(
            P=np.zeros((0, 0)), Q=np.zeros((0, 0)), beta=0.0, c_beta=0.0,
            K=K, lhs=0.0, rhs=np.inf, margin=np.inf, certified=True,
            degenerate=True,
        )
    Q = np.eye(n) if Q is None else np.atleast_2d(np.asarray(Q, float))
    P = lyapunov_pair(ss.A, Q)  # raises with offending eigenvalues if not Schur
    B = np.zeros(n)
    B[0] = 1.0
    beta = optimal_beta(ss.A, B, P, Q)
    rhs = gain_condition_rhs(ss.A, B, P, Q, beta)
    lam = float(np.min(np.linalg.eigvalsh(Q)))
    c_beta = (1.0 - beta) * lam / rhs if rhs > 0 else np.inf
    if ss.nn is None:
        K = np.zeros(ss.n_r + n)
        lhs = 0.0
    else:
        scale = None if ss.normalization is None else ss.normalization.scale
        Kr, Kuff = lipschitz_bound(ss.nn, ss.n_r, scale)
        K = np.concatenate([Kr, Kuff])
        lhs = float(Kuff @ Kuff)
    margin = rhs - lhs
    certified = margin >= STRICTNESS * rhs and 0.0 <= beta < 1.0
    return IssCertificate(P=P, Q=Q, beta=beta, c_beta=c_beta, K=K,
                          lhs=lhs, rhs=rhs, margin=margin, certified=certified)


@dataclass
class ThetaConstraint:
    """Feasible-set membership and projection for training-imposed ISS.

    The physics block is pinned to ``theta_star`` (reference and past-input
    coefficients), so the certified companion matrix stays valid; only the
    network weights move.  Feasibility is restored by rescaling the output
    layer, which scales the Lipschitz budget quadratically.
    """

    rhs: float
    n_state: int
    theta_star: np.ndarray
    margin_frac: float = 0.01

    def _lhs(self, model: PgnnModel) -> float:
        if model.nn is None:
            return 0.0
        scale = model.normalization.scale if model.normalization is not None else None
        _, Kuff = lipschitz_bound(model.nn, model.nn.n_in - self.n_state, scale)
        return float(Kuff @ Kuff)

    def margin(self, model: PgnnModel) -> float:
        return self.rhs - self._lhs(model)

    def is_member(self, model: PgnnModel) -> bool:
        if model.phys is not None and not np.allclose(
            model.phys.theta, self.theta_star, rtol=0, atol=1e-12
        ):
            return False
        return self._lhs(model) < self.rhs * (1.0 - STRICTNESS)

    def project(self, model: PgnnModel) -> PgnnModel:
        """Scale W_{L+1} back into strict feasibility (1% margin)."""
        if model.phys is not None:
            model.phys = model.phys.with_theta(self.theta_star)
        lhs = self._lhs(model)
        budget = self.rhs * (1.0 - self.margin_frac)
        if lhs > budget and lhs > 0.0:
            s = np.sqrt(budget / lhs)
            W, Bb = model.nn.layers[-1]
            model.nn.layers[-1] = (s * W, Bb)
        return model


def theta_constraint(theta_star: np.ndarray, n_state: int,
                     Q: np.ndarray | None = None,
                     margin_frac: float = 0.01) -> ThetaConstraint:
    """Build the training constraint from the fixed physics coefficients.

    ``theta_star`` is the full physics vector [theta_r; theta_uff]; its
    last ``n_state`` entries define the companion matrix, for which the
    Lyapunov pair and the optimal beta fix the admissible budget."""
    theta_star = np.asarray(theta_star, float).ravel()
    A = companion(theta_star[theta_star.size - n_state :]) if n_state else np.zeros((0, 0))
    if n_state == 0:
        return ThetaConstraint(rhs=np.inf, n_state=0, theta_star=theta_star,
                               margin_frac=margin_frac)
    Q = np.eye(n_state) if Q is None else np.atleast_2d(np.asarray(Q, float))
    P = lyapunov_pair(A, Q)
    B = np.zeros(n_state)
    B[0] = 1.0
    beta = optimal_beta(A, B, P, Q)
    rhs = gain_condition_rhs(A, B, P, Q, beta)
    if rhs <= 0.0:
        raise ValueError("infeasible constraint: admissible budget is nonpositive")
    return ThetaConstraint(rhs=rhs, n_state=n_state, theta_star=theta_star,
                           margin_frac=margin_frac)


def extend_preview(spec: RegressorSpec, n_pw: int, n_us: int) -> RegressorSpec:
    """Extended-preview regressor: n_pw future outputs added, n_us past
    inputs removed."""
    if n_pw < 0 or n_us < 0:
        raise ValueError("n_pw and n_us must be non-negative")
    if n_us > spec.n_b - 1:
        raise ValueError(f"n_us={n_us} exceeds available past inputs {spec.n_b - 1}")
    return RegressorSpec(spec.n_a + n_pw, spec.n_b - n_us, spec.n_k + n_pw)


# ---------------------------------------------------------------------------
# ZPETC stable approximate inversion


@dataclass
class ZpetcFilter:
    """Causal stable inverse filter u_ff(k) = F(q) r(k + preview).

    ``num`` and ``den`` are descending-power coefficient arrays of F
    interpreted as delay polynomials; ``preview`` is the required lead in
    samples.
    """

    num: np.ndarray
    den: np.ndarray
    preview: int
    unstable_zeros: np.ndarray

    def apply(self, r: np.ndarray) -> np.ndarray:
        """Filter a reference trajectory, padding the preview window with
        the terminal value."""
        r = np.asarray(r, float).ravel()
        if self.preview > 0:
            x = np.concatenate([r[self.preview :], np.full(self.preview, r[-1])])
        else:
            x = r
        # steady-state initial conditions for the initial setpoint, so a
        # trajectory starting from rest has no startup transient
        zi = scipy.signal.lfilter_zi(self.num, self.den) * x[0]
        out, _ = scipy.signal.lfilter(self.num, self.den, x, zi=zi)
        return out

    def spectral_radius(self) -> float:
        roots = np.roots(self.den)
        return float(np.max(np.abs(roots))) if roots.size else 0.0

    def freq_response(self, w, plant_num, plant_den):
        """Response of plant G cascaded with this filter (including the
        preview lead) at normalized frequencies w [rad/sample]."""
        z = np.exp(1j * np.asarray(w, float))
        G = np.polyval(plant_num, z) / np.polyval(plant_den, z)
        F = np.polyval(self.num, z) / np.polyval(self.den, z)
        # filter transfer in q: z^(deg num - deg den) * delay form; plus lead
        lead = self.preview + (len(self.den) - len(self.num))
        return G * F * z**lead


def zpetc_inverse(plant_num, plant_den, unit_tol: float = 1e-9) -> ZpetcFilter:
    """Stable (approximate) inverse of G = plant_num / plant_den.

    Minimum-phase plants get the exact inverse.  Otherwise the unstable
    zero factor B_u(q) is replaced by its zero-phase-error counterpart
    q^(-s) B_u*(q) / B_u(1)^2 with B_u*(q) = q^s B_u(q^-1), yielding unit
    DC gain and zero phase of the cascaded response.
    """
    plant_num = np.asarray(plant_num, float)
    plant_den = np.asarray(plant_den, float)
    poles = np.roots(plant_den)
    # poles of G only enter the inverse numerator, so integrating plants
    # (poles at/near 1) are harmless; reject only clearly unstable plants
    if poles.size and np.max(np.abs(poles)) >= 1.0 + 1e-2:
        raise ValueError("plant poles must be (marginally) stable")
    zeros = np.roots(plant_num)
    on_circle = np.abs(np.abs(zeros) - 1.0) < unit_tol
    if np.any(on_circle):
        raise ValueError(
            "plant has zeros on the unit circle; zero-phase inversion is "
            "undefined there (NPZ-style handling not implemented)"
        )
    unstable = zeros[np.abs(zeros) > 1.0]
    stable = zeros[np.abs(zeros) < 1.0]
    lead_coeff = plant_num[0]

    if unstable.size == 0:
        num = plant_den
        den = plant_num
        preview = (len(num) - 1) - (len(den) - 1)
        return ZpetcFilter(num=num, den=den, preview=max(preview, 0),
                           unstable_zeros=unstable)

    bu = np.real(np.poly(unstable))  # monic, degree s
    bs = lead_coeff * np.real(np.poly(stable))
    s = len(bu) - 1
    bu_flip = bu[::-1].copy()  # q^s Bu(1/q)
    gain = float(np.polyval(bu, 1.0)) ** 2
    num = np.polymul(plant_den, bu_flip)
    den = gain * bs
    # lead of F in q, minus s samples for the zero-phase alignment
    preview = (len(num) - 1) - (len(den) - 1) - s
    return ZpetcFilter(num=num, den=den, preview=preview, unstable_zeros=unstable)
