"""Inverse-dynamics model classes: physics layer, tanh network, input
transforms and their parallel combination, with exact parameter and input
Jacobians.

Flat parameter ordering (used by the trainer, constraint projection and
serialization): theta_phy first, then per layer col(W_l), B_l for
l = 1..L+1, where col() stacks matrix columns.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import NormalizationRecord, RegressorSpec

__all__ = [
    "PhysicsModel",
    "NeuralNet",
    "InputTransform",
    "PgnnModel",
    "linear_basis",
    "clm_basis",
]


# ---------------------------------------------------------------------------
# physics bases


def linear_basis(phi: np.ndarray, spec: RegressorSpec, T_s: float) -> np.ndarray:
    """LIP features equal to the regressor itself (linear physical model)."""
    return np.atleast_2d(phi)


def _clm_kinematics(yw: np.ndarray, T_s: float):
    """From the 6-sample output window [y(k+3)..y(k-2)] compute the
    half-sample-averaged position, velocity, acceleration and velocity at
    k and k+1.  Window columns are descending in time shift."""
    y3, y2, y1, y0, ym1, ym2 = (yw[:, i] for i in range(6))
    dy_k = (y1 - ym1) / (2.0 * T_s)
    dy_k1 = (y2 - y0) / (2.0 * T_s)
    d2y_k = (y2 - 2.0 * y0 + ym2) / (4.0 * T_s**2)
    d2y_k1 = (y3 - 2.0 * y1 + ym1) / (4.0 * T_s**2)
    avg_y = 0.5 * (y1 + y0)
    avg_dy = 0.5 * (dy_k1 + dy_k)
    avg_d2y = 0.5 * (d2y_k1 + d2y_k)
    return avg_y, avg_dy, avg_d2y, dy_k, dy_k1


def clm_basis(phi: np.ndarray, spec: RegressorSpec, T_s: float) -> np.ndarray:
    """Mass/viscous/Coulomb features of the discretized moving-mass model:

        [avg(d2y), avg(dy), avg(sign(dy))]

    with avg the half-sample average and d the central difference.
    Requires the (n_a=5, n_b=1, n_k=2) regressor layout.  sign(0) = 0.
    """
    phi = np.atleast_2d(phi)
    if spec.n_y != 6:
        raise ValueError("clm basis needs a 6-sample output window")
    _, avg_dy, avg_d2y, dy_k, dy_k1 = _clm_kinematics(phi[:, :6], T_s)
    avg_sgn = 0.5 * (np.sign(dy_k1) + np.sign(dy_k))
    return np.column_stack([avg_d2y, avg_dy, avg_sgn])


_BASES = {"linear": linear_basis, "clm": clm_basis}


@dataclass(frozen=True)
class PhysicsModel:
    """Linear-in-the-parameters physical layer: output = theta @ basis(phi)."""

    theta: np.ndarray
    basis: str
    spec: RegressorSpec
    T_s: float
    lip: bool = True

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float).ravel()
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        if self.basis not in _BASES:
            raise ValueError(f"unknown basis '{self.basis}'")

    @property
    def n_params(self) -> int:
        return self.theta.size

    def features(self, phi: np.ndarray) -> np.ndarray:
        return _BASES[self.basis](phi, self.spec, self.T_s)

    def predict(self, phi: np.ndarray) -> np.ndarray:
        return self.features(phi) @ self.theta

    def with_theta(self, theta) -> "PhysicsModel":
        return PhysicsModel(theta, self.basis, self.spec, self.T_s, self.lip)


# ---------------------------------------------------------------------------
# neural layer


class NeuralNet:
    """Fully connected net with tanh hidden activations and linear output.

    layers: list of (W, B) with W of shape (n_l, n_{l-1}); the final layer
    is the linear read-out.  Single-output nets have W_{L+1} of shape
    (1, n_L).
    """

    def __init__(self, layers):
        self.layers = [
            (np.asarray(W, dtype=float), np.asarray(B, dtype=float).ravel())
            for W, B in layers
        ]
        for (W, B), (Wn, _) in zip(self.layers, self.layers[1:]):
            if Wn.shape[1] != W.shape[0]:
                raise ValueError("layer dimensions do not chain")
        for W, B in self.layers:
            if B.size != W.shape[0]:
                raise ValueError("bias length does not match layer width")

    @property
    def n_hidden_layers(self) -> int:
        return len(self.layers) - 1

    @property
    def n_in(self) -> int:
        return self.layers[0][0].shape[1]

    @property
    def n_params(self) -> int:
        return sum(W.size + B.size for W, B in self.layers)

    def copy(self) -> "NeuralNet":
        return NeuralNet([(W.copy(), B.copy()) for W, B in self.layers])

    def _check_width(self, x: np.ndarray):
        if x.shape[1] != self.n_in:
            raise ValueError(
                f"input width {x.shape[1]} does not match net width {self.n_in}"
            )

    def forward(self, x: np.ndarray):
        """Forward pass; returns (output (N,), list of hidden activations)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        self._check_width(x)
        hidden = []
        h = x
        for W, B in self.layers[:-1]:
            h = np.tanh(h @ W.T + B)
            hidden.append(h)
        W, B = self.layers[-1]
        out = h @ W.T + B
        return out[:, 0] if out.shape[1] == 1 else out, hidden

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def hidden_features(self, x: np.ndarray) -> np.ndarray:
        """Output of the last hidden layer (the features the read-out is
        linear in)."""
        out, hidden = self.forward(x)
        return hidden[-1] if hidden else np.atleast_2d(np.asarray(x, float))

    def grad_params(self, x: np.ndarray) -> np.ndarray:
        """Per-sample gradient of the scalar output w.r.t. the flat NN
        parameter vector (col(W_1), B_1, ..., col(W_{L+1}), B_{L+1})."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        self._check_width(x)
        n = x.shape[0]
        acts = [x]
        h = x
        for W, B in self.layers[:-1]:
            h = np.tanh(h @ W.T + B)
            acts.append(h)
        # backward pass: d out / d (pre-activation of layer l)
        blocks = [None] * len(self.layers)
        WL, _ = self.layers[-1]
        delta = np.ones((n, 1))  # d out/d out
        # output layer: dW = delta * acts[-1], dB = delta
        blocks[-1] = (delta[:, :, None] * acts[-1][:, None, :], delta)
        up = delta @ WL  # (n, n_L): d out / d h_L
        for li in range(len(self.layers) - 2, -1, -1):
            W, _ = self.layers[li]
            d = up * (1.0 - acts[li + 1] ** 2)  # through tanh
            blocks[li] = (d[:, :, None] * acts[li][:, None, :], d)
            if li > 0:
                up = d @ W
        cols = []
        for dW, dB in blocks:
            # col() stacks columns: transpose before reshaping row-major
            cols.append(dW.transpose(0, 2, 1).reshape(n, -1))
            cols.append(dB.reshape(n, -1))
        return np.concatenate(cols, axis=1)

    def grad_input(self, x: np.ndarray) -> np.ndarray:
        """Per-sample row vector d out/d x, shape (N, n_in)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        self._check_width(x)
        h = x
        hidden = []
        for W, B in self.layers[:-1]:
            h = np.tanh(h @ W.T + B)
            hidden.append(h)
        J = np.broadcast_to(self.layers[-1][0], (x.shape[0],) + self.layers[-1][0].shape).copy()
        J = J[:, 0, :]  # (N, n_L)
        for li in range(len(self.layers) - 2, -1, -1):
            W, _ = self.layers[li]
            J = (J * (1.0 - hidden[li] ** 2)) @ W
        return J

    # flat parameter vector ------------------------------------------------

    def flatten(self) -> np.ndarray:
        parts = []
        for W, B in self.layers:
            parts.append(W.flatten(order="F"))
            parts.append(B)
        return np.concatenate(parts)

    def set_flat(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=float).ravel()
        if theta.size != self.n_params:
            raise ValueError("flat vector length mismatch")
        pos = 0
        new_layers = []
        for W, B in self.layers:
            w = theta[pos : pos + W.size].reshape(W.shape, order="F")
            pos += W.size
            b = theta[pos : pos + B.size].copy()
            pos += B.size
            new_layers.append((w, b))
        self.layers = new_layers

    def weight_abs_product(self) -> np.ndarray:
        """Elementwise product of absolute weight matrices,
        |W_{L+1}| |W_L| ... |W_1|; row vector of length n_in."""
        P = np.abs(self.layers[-1][0])
        for W, _ in reversed(self.layers[:-1]):
            P = P @ np.abs(W)
        return P[0]

    def to_dict(self) -> dict:
        return {
            "activation": "tanh",
            "layers": [
                {"W": W.tolist(), "B": B.tolist()} for W, B in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NeuralNet":
        if d.get("activation", "tanh") != "tanh":
            raise ValueError("only tanh activation is supported")
        return cls([(np.asarray(l["W"]), np.asarray(l["B"])) for l in d["layers"]])

    @classmethod
    def init_random(cls, widths, rng) -> "NeuralNet":
        """Hidden weights uniform in [-1/sqrt(n_in), 1/sqrt(n_in)] per layer,
        biases uniform in [-0.5, 0.5]; zero output layer (the linear block
        is set by the optimized selection)."""
        layers = []
        for li, (n_in, n_out) in enumerate(zip(widths[:-1], widths[1:])):
            if li == len(widths) - 2:
                layers.append((np.zeros((n_out, n_in)), np.zeros(n_out)))
            else:
                s = 1.0 / np.sqrt(n_in)
                layers.append(
                    (
                        rng.uniform(-s, s, size=(n_out, n_in)),
                        rng.uniform(-0.5, 0.5, size=n_out),
                    )
                )
        return cls(layers)


# ---------------------------------------------------------------------------
# input transforms


@dataclass(frozen=True)
class InputTransform:
    """Deterministic map from the regressor to the NN input features.

    kinds:
      * ``identity``       - the regressor itself (width n_a + n_b);
      * ``clm_phys``       - avg[y, dy, d2y] physical features (width 3);
      * ``clm_window``     - avg[y(k+2), ..., y(k-2)] (width 5).
    The clm kinds require the (n_a=5, n_b=1, n_k=2) layout.
    """

    kind: str
    spec: RegressorSpec
    T_s: float

    @property
    def width(self) -> int:
        if self.kind == "identity":
            return self.spec.length
        if self.kind == "clm_phys":
            return 3
        if self.kind == "clm_window":
            return self.spec.n_y - 1
        raise ValueError(f"unknown transform kind '{self.kind}'")

    def apply(self, phi: np.ndarray) -> np.ndarray:
        phi = np.atleast_2d(np.asarray(phi, dtype=float))
        if self.kind == "identity":
            return phi
        if self.spec.n_y != 6:
            raise ValueError("clm transforms need a 6-sample output window")
        yw = phi[:, :6]
        if self.kind == "clm_phys":
            avg_y, avg_dy, avg_d2y, _, _ = _clm_kinematics(yw, self.T_s)
            return np.column_stack([avg_y, avg_dy, avg_d2y])
        if self.kind == "clm_window":
            return 0.5 * (yw[:, 1:] + yw[:, :-1])
        raise ValueError(f"unknown transform kind '{self.kind}'")


# ---------------------------------------------------------------------------
# combined model


class PgnnModel:
    """Parallel physics + neural inverse model:

        u_hat(phi) = phys(phi) + nn(normalize(transform(phi))).

    ``phys`` may be None (black-box NN model) and the NN may be absent
    (pure physics) by passing ``nn=None``.
    """

    def __init__(self, phys: PhysicsModel | None, nn: NeuralNet | None,
                 transform: InputTransform | None = None,
                 normalization: NormalizationRecord | None = None):
        if phys is None and nn is None:
            raise ValueError("model needs at least one layer")
        self.phys = phys
        self.nn = nn
        if nn is not None:
            if transform is None:
                raise ValueError("a NN layer needs an input transform")
            if normalization is None:
                normalization = NormalizationRecord.identity(transform.width)
            if nn.n_in != transform.width:
                raise ValueError("transform width does not match NN input")
        self.transform = transform
        self.normalization = normalization

    @property
    def spec(self) -> RegressorSpec:
        return self.phys.spec if self.phys is not None else self.transform.spec

    @property
    def T_s(self) -> float:
        return self.phys.T_s if self.phys is not None else self.transform.T_s

    def copy(self) -> "PgnnModel":
        return PgnnModel(
            self.phys,
            self.nn.copy() if self.nn is not None else None,
            self.transform,
            self.normalization,
        )

    def nn_input(self, phi: np.ndarray) -> np.ndarray:
        return self.normalization.apply(self.transform.apply(phi))

    def predict(self, phi: np.ndarray) -> np.ndarray:
        phi = np.atleast_2d(np.asarray(phi, dtype=float))
        out = np.zeros(phi.shape[0])
        if self.phys is not None:
            out = out + self.phys.predict(phi)
        if self.nn is not None:
            out = out + self.nn.predict(self.nn_input(phi))
        return out

    # flat parameter interface --------------------------------------------

    @property
    def n_params(self) -> int:
        n = self.phys.n_params if self.phys is not None else 0
        if self.nn is not None:
            n += self.nn.n_params
        return n

    def flatten(self) -> np.ndarray:
        parts = []
        if self.phys is not None:
            parts.append(self.phys.theta)
        if self.nn is not None:
            parts.append(self.nn.flatten())
        return np.concatenate(parts)

    def set_flat(self, theta: np.ndarray) -> None:
        theta = np.asarray(theta, dtype=float).ravel()
        if theta.size != self.n_params:
            raise ValueError("flat vector length mismatch")
        pos = 0
        if self.phys is not None:
            self.phys = self.phys.with_theta(theta[: self.phys.n_params])
            pos = self.phys.n_params
        if self.nn is not None:
            self.nn.set_flat(theta[pos:])

    def jacobian_params(self, phi: np.ndarray) -> np.ndarray:
        """Exact per-sample gradient of the prediction w.r.t. the flat
        parameter vector, shape (N, n_params)."""
        phi = np.atleast_2d(np.asarray(phi, dtype=float))
        parts = []
        if self.phys is not None:
            parts.append(self.phys.features(phi))
        if self.nn is not None:
            parts.append(self.nn.grad_params(self.nn_input(phi)))
        return np.concatenate(parts, axis=1)

    # serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        d: dict = {"spec": self.spec.to_dict(), "T_s": self.T_s}
        if self.phys is not None:
            d["phys"] = {
                "theta": self.phys.theta.tolist(),
                "basis": self.phys.basis,
                "lip": self.phys.lip,
            }
        if self.nn is not None:
            d["nn"] = self.nn.to_dict()
            d["transform"] = self.transform.kind
            d["normalization"] = self.normalization.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PgnnModel":
        spec = RegressorSpec.from_dict(d["spec"])
        T_s = float(d["T_s"])
        phys = None
        if "phys" in d:
            p = d["phys"]
            phys = PhysicsModel(p["theta"], p["basis"], spec, T_s, p.get("lip", True))
        nn = None
        transform = None
        norm = None
        if "nn" in d:
            nn = NeuralNet.from_dict(d["nn"])
            transform = InputTransform(d["transform"], spec, T_s)
            norm = NormalizationRecord.from_dict(d["normalization"])
        return cls(phys, nn, transform, norm)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "PgnnModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))
