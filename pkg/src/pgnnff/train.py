"""Identification of inverse-dynamics models.

Costs are sums of squares (data fit, parameter regularization toward the
best physics fit, and physics-compliance on an extrapolation set), so the
whole objective is solved as one nonlinear least-squares problem with a
Levenberg-Marquardt iteration: regularization and compliance terms enter
as appended residual rows (sqrt-weights times deviations).

Flat parameter ordering follows :mod:`pgnnff.model`: theta_phy first, then
col(W_l), B_l per layer.  The linear block theta_L = [col(W_{L+1}),
B_{L+1}, theta_phy] admits an exact ridge solution for fixed hidden
parameters, used both as initialization and after accepted steps.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import DataSet
from .model import PgnnModel, PhysicsModel

__all__ = [
    "CostSpec",
    "TrainConfig",
    "TrainReport",
    "cost_mse",
    "cost_reg",
    "cost_phy_compliance",
    "total_cost",
    "optimized_lip_selection",
    "fit_physics",
    "train",
    "sweep_lambda",
    "lambda_phy_rule",
    "SingularNormalMatrixError",
]

_VARIANTS = ("mse", "pinn", "pgnn_reg", "pgnn_extrap")


class SingularNormalMatrixError(RuntimeError):
    """Raised when the linear-block normal matrix is (near) singular."""

    def __init__(self, cond):
        super().__init__(
            f"normal matrix ill-conditioned (condition estimate {cond:.3e})"
        )
        self.cond = cond


@dataclass
class CostSpec:
    """Which cost variant to minimize and its weights.

    ``lambda_nn`` and ``lambda_phy`` are diagonal weights (scalar meaning
    lambda * I).  ``phys_ref`` is the physics model at the best-fit
    parameters theta_phy_star; it anchors the regularization and the
    compliance terms.  ``ze`` is the extrapolation regressor set (rows are
    full regressors).
    """

    variant: str = "mse"
    lambda_nn: float | np.ndarray = 0.0
    lambda_phy: float | np.ndarray = 0.0
    gamma: float = 0.0
    c: float = 0.0
    phys_ref: PhysicsModel | None = None
    ze: np.ndarray | None = None

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown cost variant '{self.variant}'")
        if self.variant == "pgnn_extrap":
            if self.ze is None or len(self.ze) == 0:
                raise ValueError("pgnn_extrap requires a nonempty Z^E")
            if not self.gamma > 0.0:
                raise ValueError("pgnn_extrap requires gamma > 0")
        if self.variant == "pinn" and self.phys_ref is None:
            raise ValueError("pinn requires the reference physics model")
        if self.gamma < 0.0 or self.c < 0.0:
            raise ValueError("gamma and c must be non-negative")

    @property
    def theta_phy_star(self) -> np.ndarray | None:
        return None if self.phys_ref is None else self.phys_ref.theta


def _is_pinn_cotrain(model: PgnnModel, cs: CostSpec) -> bool:
    return cs.variant == "pinn" and model.phys is not None


def _model_output(model: PgnnModel, cs: CostSpec, phi: np.ndarray) -> np.ndarray:
    """Model prediction under the cost variant: a PINN predicts with its NN
    only even when theta_phy is co-trained."""
    if _is_pinn_cotrain(model, cs):
        return model.nn.predict(model.nn_input(phi))
    return model.predict(phi)


def _reg_weights(model: PgnnModel, cs: CostSpec):
    """Diagonal weight vector and reference vector aligned with the flat
    parameter ordering."""
    w = np.zeros(model.n_params)
    ref = np.zeros(model.n_params)
    pos = 0
    if model.phys is not None:
        n = model.phys.n_params
        w[:n] = np.broadcast_to(np.asarray(cs.lambda_phy, float), (n,))
        if cs.phys_ref is not None:
            ref[:n] = cs.theta_phy_star
        pos = n
    if model.nn is not None:
        w[pos:] = np.broadcast_to(
            np.asarray(cs.lambda_nn, float), (model.n_params - pos,)
        )
    return w, ref


def cost_mse(model: PgnnModel, ds: DataSet, cs: CostSpec | None = None) -> float:
    """(1/N) sum (u_i - u_hat(phi_i))^2."""
    cs = cs or CostSpec()
    r = ds.u - _model_output(model, cs, ds.phi)
    return float(np.mean(r**2))


def cost_reg(model: PgnnModel, cs: CostSpec) -> float:
    """||diag(Lambda_NN, Lambda_phy) (theta - [0; theta_phy_star])||_2^2."""
    w, ref = _reg_weights(model, cs)
    d = w * (model.flatten() - ref)
    return float(d @ d)


def cost_phy_compliance(model: PgnnModel, phys_ref: PhysicsModel,
                        points: np.ndarray, cs: CostSpec | None = None) -> float:
    """Mean squared deviation between the reference physics output and the
    full model output over the given regressor points."""
    points = np.atleast_2d(np.asarray(points, float))
    if points.shape[0] == 0:
        raise ValueError("compliance point set is empty")
    cs = cs or CostSpec()
    d = phys_ref.predict(points) - _model_output(model, cs, points)
    return float(np.mean(d**2))


def _compliance_ref(model: PgnnModel, cs: CostSpec) -> PhysicsModel:
    # co-trained PINN compares against its own physics layer
    if _is_pinn_cotrain(model, cs):
        return model.phys
    return cs.phys_ref


def total_cost(model: PgnnModel, ds: DataSet, cs: CostSpec) -> float:
    """Variant-dispatched total cost."""
    v = cost_mse(model, ds, cs)
    if cs.variant == "mse":
        return v
    if cs.variant == "pinn":
        v += cs.c * cost_phy_compliance(model, _compliance_ref(model, cs), ds.phi, cs)
        v += cost_reg(model, cs)
        if cs.gamma > 0.0 and cs.ze is not None and len(cs.ze):
            v += cs.gamma * cost_phy_compliance(model, _compliance_ref(model, cs), cs.ze, cs)
        return v
    v += cost_reg(model, cs)
    if cs.variant == "pgnn_extrap":
        v += cs.gamma * cost_phy_compliance(model, cs.phys_ref, cs.ze, cs)
    return v


# ---------------------------------------------------------------------------
# residual stacking for LM


def _residuals(model: PgnnModel, ds: DataSet, cs: CostSpec, with_jac=True):
    """Stacked residual vector (and Jacobian) whose squared norm equals
    total_cost."""
    rows = []
    jacs = []
    sn = 1.0 / np.sqrt(ds.N)

    def jac(points):
        if _is_pinn_cotrain(model, cs):
            # NN-only output: zero sensitivity to theta_phy
            J = np.zeros((len(points), model.n_params))
            J[:, model.phys.n_params :] = model.nn.grad_params(model.nn_input(points))
            return J
        return model.jacobian_params(points)

    rows.append(sn * (ds.u - _model_output(model, cs, ds.phi)))
    if with_jac:
        jacs.append(-sn * jac(ds.phi))

    if cs.variant != "mse":
        w, ref = _reg_weights(model, cs)
        nz = np.nonzero(w)[0]
        if nz.size:
            rows.append(w[nz] * (model.flatten()[nz] - ref[nz]))
            if with_jac:
                Jr = np.zeros((nz.size, model.n_params))
                Jr[np.arange(nz.size), nz] = w[nz]
                jacs.append(Jr)

        comp = []
        if cs.variant == "pinn" and cs.c > 0.0:
            comp.append((cs.c, ds.phi))
        if cs.gamma > 0.0 and cs.ze is not None and len(cs.ze):
            comp.append((cs.gamma, np.atleast_2d(cs.ze)))
        for weight, pts in comp:
            s = np.sqrt(weight / len(pts))
            ref_model = _compliance_ref(model, cs)
            rows.append(s * (ref_model.predict(pts) - _model_output(model, cs, pts)))
            if with_jac:
                Jc = -s * jac(pts)
                if _is_pinn_cotrain(model, cs):
                    # reference moves with theta_phy in the co-trained case
                    Jc = Jc.copy()
                    Jc[:, : model.phys.n_params] += s * model.phys.features(pts)
                jacs.append(Jc)

    r = np.concatenate(rows)
    if not with_jac:
        return r
    return r, np.vstack(jacs)


# ---------------------------------------------------------------------------
# exact linear-block selection


def optimized_lip_selection(model: PgnnModel, ds: DataSet, cs: CostSpec,
                            include_phys: bool = True,
                            max_cond: float = 1e12) -> PgnnModel:
    """Set the linear block [col(W_{L+1}), B_{L+1}, theta_phy] to its exact
    ridge/least-squares optimum for the current hidden parameters.

    The modified model is returned (the input model is updated in place).
    With ``include_phys=False`` the physics block is held fixed and only
    the NN read-out is selected.
    """
    phi = ds.phi
    feats = []
    if model.nn is not None:
        H = model.nn.hidden_features(model.nn_input(phi))
        feats.append(H)
        feats.append(np.ones((phi.shape[0], 1)))
    has_phys = model.phys is not None and include_phys and not _is_pinn_cotrain(model, cs)
    if has_phys:
        feats.append(model.phys.features(phi))
    F = np.concatenate(feats, axis=1)
    n_lin = F.shape[1]

    # fixed contribution of blocks that are not selected
    fixed = np.zeros(phi.shape[0])
    if model.phys is not None and not has_phys and not _is_pinn_cotrain(model, cs):
        fixed = model.phys.predict(phi)

    w_full, ref_full = _reg_weights(model, cs)
    w_lin, ref_lin = _select_linear_weights(model, cs, w_full, ref_full, has_phys)

    M = (F.T @ F) / ds.N + np.diag(w_lin**2)
    b = (F.T @ (ds.u - fixed)) / ds.N + (w_lin**2) * ref_lin

    if cs.gamma > 0.0 and cs.ze is not None and len(cs.ze) and cs.variant in (
        "pgnn_extrap", "pinn"
    ):
        ze = np.atleast_2d(cs.ze)
        fe = []
        if model.nn is not None:
            fe.append(model.nn.hidden_features(model.nn_input(ze)))
            fe.append(np.ones((ze.shape[0], 1)))
        if has_phys:
            fe.append(model.phys.features(ze))
        Fe = np.concatenate(fe, axis=1)
        ref_model = _compliance_ref(model, cs)
        fixed_e = np.zeros(ze.shape[0])
        if model.phys is not None and not has_phys and not _is_pinn_cotrain(model, cs):
            fixed_e = model.phys.predict(ze)
        g = cs.gamma / ze.shape[0]
        M += g * (Fe.T @ Fe)
        b += g * (Fe.T @ (ref_model.predict(ze) - fixed_e))

    if cs.variant == "pinn" and cs.c > 0.0:
        ref_model = _compliance_ref(model, cs)
        g = cs.c / ds.N
        M += g * (F.T @ F)
        b += g * (F.T @ ref_model.predict(phi))

    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > max_cond:
        raise SingularNormalMatrixError(cond)
    theta_lin = np.linalg.solve(M, b)

    _write_linear_block(model, theta_lin, has_phys)
    return model


def _select_linear_weights(model, cs, w_full, ref_full, has_phys):
    """Regularization weights/reference in the [col(W_{L+1}), B_{L+1},
    theta_phy] ordering of the selected block."""
    parts_w, parts_r = [], []
    if model.nn is not None:
        W_out, B_out = model.nn.layers[-1]
        n_out = W_out.size + B_out.size
        nn_start = model.phys.n_params if model.phys is not None else 0
        nn_w = w_full[nn_start:]
        parts_w.append(nn_w[-n_out:])
        parts_r.append(np.zeros(n_out))
    if has_phys:
        n = model.phys.n_params
        parts_w.append(w_full[:n])
        parts_r.append(ref_full[:n])
    return np.concatenate(parts_w), np.concatenate(parts_r)


def _write_linear_block(model: PgnnModel, theta_lin: np.ndarray, has_phys: bool):
    pos = 0
    if model.nn is not None:
        W_out, B_out = model.nn.layers[-1]
        nW = W_out.size
        W_new = theta_lin[pos : pos + nW].reshape(W_out.shape, order="F")
        pos += nW
        B_new = theta_lin[pos : pos + B_out.size].copy()
        pos += B_out.size
        model.nn.layers[-1] = (W_new, B_new)
    if has_phys:
        model.phys = model.phys.with_theta(theta_lin[pos:])


# ---------------------------------------------------------------------------
# physics identification and hyperparameter helpers


def fit_physics(ds: DataSet, basis: str = "linear",
                max_cond: float = 1e12) -> PhysicsModel:
    """Least-squares fit of the LIP physics layer on the data set."""
    probe = PhysicsModel(np.zeros(1), basis, ds.spec, ds.T_s)
    F = probe.features(ds.phi)
    cond = np.linalg.cond(F)
    if not np.isfinite(cond) or cond > max_cond:
        raise SingularNormalMatrixError(cond)
    theta, *_ = np.linalg.lstsq(F, ds.u, rcond=None)
    return PhysicsModel(theta, basis, ds.spec, ds.T_s)


def lambda_phy_rule(ds: DataSet, phys_star: PhysicsModel, eps: float = 1.0) -> np.ndarray:
    """Rule-of-thumb diagonal for Lambda_phy:

        sqrt( V_MSE(theta_phy_star) / (eps * n_phy) ) * diag(theta_phy_star)^-1
    """
    theta = phys_star.theta
    if np.any(theta == 0.0):
        raise ValueError(
            "theta_phy_star has a zero entry; the rule is undefined there - "
            "supply Lambda_phy explicitly"
        )
    v = float(np.mean((ds.u - phys_star.predict(ds.phi)) ** 2))
    return np.sqrt(v / (eps * theta.size)) / theta


# ---------------------------------------------------------------------------
# Levenberg-Marquardt training


@dataclass
class TrainConfig:
    restarts: int = 10
    max_epochs: int = 300
    lm_damping_init: float = 1e-3
    lm_raise: float = 10.0
    lm_lower: float = 0.5
    patience: int = 20
    tol_cost: float = 1e-9
    tol_grad: float = 1e-8
    seed: int = 0
    reselect_linear: bool = True

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not self.lm_raise > 1.0:
            raise ValueError("lm_raise must exceed 1")
        if not 0.0 < self.lm_lower < 1.0:
            raise ValueError("lm_lower must lie in (0, 1)")


@dataclass
class TrainReport:
    model: PgnnModel
    cost: float
    val_cost: float
    restart_index: int
    train_traces: list = field(default_factory=list)
    val_traces: list = field(default_factory=list)
    wall_time: float = 0.0
    iss_margin: float | None = None
    diverged_restarts: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "cost": self.cost,
            "val_cost": self.val_cost,
            "restart_index": self.restart_index,
            "wall_time": self.wall_time,
            "iss_margin": self.iss_margin,
            "epochs_per_restart": [len(t) for t in self.train_traces],
            "diverged_restarts": self.diverged_restarts,
        }

    def traces_to_csv(self, path) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["restart", "epoch", "train_cost", "val_cost"])
            for ri, (tt, vt) in enumerate(zip(self.train_traces, self.val_traces)):
                for ei, (tc, vc) in enumerate(zip(tt, vt)):
                    w.writerow([ri, ei, repr(tc), repr(vc)])


def _free_mask(model: PgnnModel, cs: CostSpec, freeze_phys: bool) -> np.ndarray:
    mask = np.ones(model.n_params, dtype=bool)
    if model.phys is not None and freeze_phys:
        mask[: model.phys.n_params] = False
    return mask


def train(model: PgnnModel, ds_train: DataSet, ds_val: DataSet,
          cs: CostSpec, cfg: TrainConfig,
          init_nets=None, constraint=None,
          freeze_phys: bool = False) -> TrainReport:
    """Levenberg-Marquardt identification with restarts and early stopping.

    ``model`` acts as a template (architecture, transform, normalization).
    Each restart draws fresh hidden parameters (or consumes ``init_nets``)
    and sets the linear block by the exact ridge solution.  With a
    ``constraint`` (see :func:`pgnnff.stability.theta_constraint`) every
    accepted iterate is projected back into the feasible set and the
    report carries the final margin; the physics block is then frozen so
    the certified companion matrix stays fixed.
    """
    t0 = time.time()
    rng = np.random.default_rng(cfg.seed)
    if constraint is not None:
        freeze_phys = True

    best = None
    report = TrainReport(model=None, cost=np.inf, val_cost=np.inf, restart_index=-1)

    for ri in range(cfg.restarts):
        m = model.copy()
        if m.nn is not None:
            if init_nets is not None:
                m.nn = init_nets[ri].copy()
            else:
                widths = [m.nn.n_in] + [W.shape[0] for W, _ in m.nn.layers]
                m.nn = type(m.nn).init_random(widths, rng)
        try:
            m, tt, vt = _train_once(m, ds_train, ds_val, cs, cfg,
                                    constraint, freeze_phys)
        except FloatingPointError:
            report.diverged_restarts.append(ri)
            continue
        report.train_traces.append(tt)
        report.val_traces.append(vt)
        vbest = min(vt)
        if best is None or vbest < report.val_cost:
            best = m
            report.val_cost = vbest
            report.cost = min(tt)
            report.restart_index = ri

    if best is None:
        raise RuntimeError("all restarts diverged")
    report.model = best
    report.wall_time = time.time() - t0
    if constraint is not None:
        report.iss_margin = constraint.margin(best)
    return report


def _train_once(m: PgnnModel, ds_train, ds_val, cs, cfg, constraint, freeze_phys):
    if m.nn is not None and cfg.reselect_linear:
        try:
            optimized_lip_selection(m, ds_train, cs, include_phys=not freeze_phys)
        except SingularNormalMatrixError:
            pass  # keep the zero read-out; LM proceeds from there
    if constraint is not None:
        constraint.project(m)

    mask = _free_mask(m, cs, freeze_phys)
    theta = m.flatten()
    cost = total_cost(m, ds_train, cs)
    if not np.isfinite(cost):
        raise FloatingPointError("non-finite initial cost")

    lam = cfg.lm_damping_init
    best_theta, best_cost = theta.copy(), cost
    train_trace = [cost]
    val_trace = [total_cost(m, ds_val, cs)]
    best_val, since_best_val = val_trace[0], 0

    for _ in range(cfg.max_epochs):
        r, J = _residuals(m, ds_train, cs)
        Jf = J[:, mask]
        g = Jf.T @ r
        if np.max(np.abs(g)) < cfg.tol_grad:
            break
        H = Jf.T @ Jf
        accepted = False
        for _try in range(25):
            try:
                step = np.linalg.solve(H + lam * np.eye(H.shape[0]), -g)
            except np.linalg.LinAlgError:
                lam *= cfg.lm_raise
                continue
            trial = theta.copy()
            trial[mask] += step
            m.set_flat(trial)
            new_cost = total_cost(m, ds_train, cs)
            if np.isfinite(new_cost) and new_cost < cost:
                accepted = True
                lam = max(lam * cfg.lm_lower, 1e-14)
                break
            lam *= cfg.lm_raise
            if lam > 1e14:
                break
        if not accepted:
            m.set_flat(theta)
            break

        theta = trial
        cost = new_cost
        if constraint is not None and not constraint.is_member(m):
            constraint.project(m)
            theta = m.flatten()
            cost = total_cost(m, ds_train, cs)
        elif m.nn is not None and cfg.reselect_linear:
            try:
                optimized_lip_selection(m, ds_train, cs, include_phys=not freeze_phys)
                if constraint is not None and not constraint.is_member(m):
                    constraint.project(m)
                re_cost = total_cost(m, ds_train, cs)
                if re_cost < cost:
                    theta = m.flatten()
                    cost = re_cost
                else:
                    m.set_flat(theta)
            except SingularNormalMatrixError:
                m.set_flat(theta)

        if not np.isfinite(cost):
            raise FloatingPointError("cost diverged")
        train_trace.append(cost)
        vcost = total_cost(m, ds_val, cs)
        val_trace.append(vcost)
        if cost < best_cost:
            best_cost, best_theta = cost, theta.copy()
        if vcost < best_val - 1e-15:
            best_val, since_best_val = vcost, 0
        else:
            since_best_val += 1
            if since_best_val >= cfg.patience:
                break
        if len(train_trace) >= 2 and train_trace[-2] - cost < cfg.tol_cost * max(cost, 1.0):
            break

    # epoch-best parameters over the whole trace
    m.set_flat(best_theta)
    return m, train_trace, val_trace


def sweep_lambda(model: PgnnModel, ds_train: DataSet, ds_val: DataSet,
                 lambdas, cs_base: CostSpec, cfg: TrainConfig):
    """L-curve sweep over Lambda_NN = lambda * I with warm starts.

    Returns rows (lambda, V_MSE(theta_hat), V_reg(theta_hat with
    Lambda_NN = I)).
    """
    lambdas = list(lambdas)
    if any(b < a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("lambda grid must be sorted ascending")
    rows = []
    warm = None
    cfg_one = TrainConfig(**{**cfg.__dict__, "restarts": 1})
    for lam in lambdas:
        cs = CostSpec(
            variant=cs_base.variant if cs_base.variant != "mse" else "pgnn_reg",
            lambda_nn=lam,
            lambda_phy=cs_base.lambda_phy,
            gamma=cs_base.gamma,
            c=cs_base.c,
            phys_ref=cs_base.phys_ref,
            ze=cs_base.ze,
        )
        rep = train(model, ds_train, ds_val, cs, cfg_one, init_nets=[warm] if warm is not None else None)
        warm = rep.model.nn
        mhat = rep.model
        cs_unit = CostSpec(variant="pgnn_reg", lambda_nn=1.0, lambda_phy=0.0,
                           phys_ref=cs.phys_ref)
        rows.append((lam, cost_mse(mhat, ds_train), cost_reg(mhat, cs_unit)))
    return rows
