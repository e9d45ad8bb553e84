"""Command-line pipeline orchestration with declarative TOML configs.

Each subcommand reads one config file, funnels all randomness through a
single seeded generator, and stamps its outputs with the config hash so
runs are reproducible and idempotent.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import data as dmod
from . import extrap as emod
from . import model as mmod
from . import sim as smod
from . import stability as stab
from . import train as tmod

__all__ = ["main"]


class ConfigError(ValueError):
    pass


def _load_config(path):
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    raw = p.read_bytes()
    cfg = tomllib.loads(raw.decode())
    return cfg, hashlib.sha256(raw).hexdigest()[:16]


def _check_keys(section: dict, allowed, ctx: str) -> None:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in [{ctx}]: {sorted(unknown)}")


def _regressor_spec(cfg) -> dmod.RegressorSpec:
    sec = cfg.get("regressor")
    if sec is None:
        raise ConfigError("missing [regressor] section")
    _check_keys(sec, {"n_a", "n_b", "n_k"}, "regressor")
    return dmod.RegressorSpec(int(sec["n_a"]), int(sec["n_b"]), int(sec.get("n_k", 0)))


def _load_dataset(cfg):
    sec = cfg.get("data")
    if sec is None:
        raise ConfigError("missing [data] section")
    _check_keys(sec, {"log", "split", "split_seed"}, "data")
    t, u, y = dmod.read_log_csv(sec["log"])
    spec = _regressor_spec(cfg)
    ds = dmod.build_regressors(t, u, y, spec)
    frac = float(sec.get("split", 0.7))
    return dmod.split_train_val(ds, frac, int(sec.get("split_seed", 0)))


def _region(cfg) -> emod.OperatingRegion:
    sec = cfg.get("region")
    if sec is None:
        raise ConfigError("missing [region] section")
    _check_keys(sec, {"axes", "lo", "hi", "resolution"}, "region")
    return emod.OperatingRegion(
        tuple(sec["axes"]), sec["lo"], sec["hi"], tuple(sec["resolution"])
    )


def _write_json(path, payload: dict, cfg_hash: str) -> None:
    payload = dict(payload)
    payload["config_hash"] = cfg_hash
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_identify(cfg, cfg_hash, seed, out):
    ds_train, ds_val = _load_dataset(cfg)
    basis = cfg.get("physics", {}).get("basis", "linear")
    phys = tmod.fit_physics(ds_train, basis)
    mse = float(np.mean((ds_train.u - phys.predict(ds_train.phi)) ** 2))
    val_mse = float(np.mean((ds_val.u - phys.predict(ds_val.phi)) ** 2))
    _write_json(out, {
        "theta_phy_star": phys.theta.tolist(),
        "basis": basis,
        "spec": ds_train.spec.to_dict(),
        "T_s": ds_train.T_s,
        "train_mse": mse,
        "val_mse": val_mse,
    }, cfg_hash)
    print(f"identified {phys.theta.size} physical parameters; "
          f"train MSE {mse:.6e}, val MSE {val_mse:.6e}")
    return 0


_RECIPES = ("physics", "nn", "pinn", "pgnn", "pgnn_extrap")


def _build_training(cfg, ds_train, ds_val, seed):
    sec = cfg.get("model", {})
    _check_keys(sec, {"recipe", "n1", "transform", "basis", "constrained"}, "model")
    recipe = sec.get("recipe", "pgnn")
    if recipe not in _RECIPES:
        raise ConfigError(f"unknown recipe '{recipe}'; expected one of {_RECIPES}")
    spec = ds_train.spec
    T_s = ds_train.T_s
    basis = sec.get("basis", "linear")
    phys_star = tmod.fit_physics(ds_train, basis)
    if recipe == "physics":
        return mmod.PgnnModel(phys=phys_star, nn=None,
                              transform=mmod.InputTransform("identity", spec, T_s)), None, phys_star

    csec = cfg.get("cost", {})
    _check_keys(csec, {"lambda_nn", "eps", "gamma", "c", "lambda_phy"}, "cost")
    n1 = int(sec.get("n1", 16))
    transform = mmod.InputTransform(sec.get("transform", "identity"), spec, T_s)
    rng = np.random.default_rng(seed)
    nn = mmod.NeuralNet.init_random([transform.width, n1, 1], rng)
    norm_rec = dmod.NormalizationRecord.fit(transform.apply(ds_train.phi))

    lam_nn = float(csec.get("lambda_nn", 1e-5))
    gamma = float(csec.get("gamma", 0.0))
    ze = None
    if recipe == "pgnn_extrap" or (recipe == "pinn" and gamma > 0.0):
        region = _region(cfg)
        feats = emod.project_to_region(ds_train.y_part(), region, T_s,
                                       shifts=spec.y_shifts())
        zsec = cfg.get("ze", {})
        _check_keys(zsec, {"e_max", "eps"}, "ze")
        zset = emod.generate_ze(region, feats, int(zsec.get("e_max", 100)),
                                float(zsec.get("eps", 0.0)))
        ze = emod.lift_to_regressors(zset, spec, T_s)

    if recipe == "nn":
        cs = tmod.CostSpec(variant="pgnn_reg", lambda_nn=lam_nn, lambda_phy=0.0,
                           phys_ref=phys_star)
        model = mmod.PgnnModel(phys=None, nn=nn, transform=transform,
                               normalization=norm_rec)
    elif recipe == "pinn":
        cs = tmod.CostSpec(variant="pinn", lambda_nn=lam_nn,
                           c=float(csec.get("c", 0.5)), gamma=gamma,
                           phys_ref=phys_star, ze=ze)
        model = mmod.PgnnModel(phys=phys_star, nn=nn, transform=transform,
                               normalization=norm_rec)
    else:
        eps = float(csec.get("eps", 1.0))
        lam_phy = tmod.lambda_phy_rule(ds_train, phys_star, eps)
        variant = "pgnn_extrap" if recipe == "pgnn_extrap" else "pgnn_reg"
        cs = tmod.CostSpec(variant=variant, lambda_nn=lam_nn, lambda_phy=lam_phy,
                           gamma=float(csec.get("gamma", 0.1)) if recipe == "pgnn_extrap" else 0.0,
                           phys_ref=phys_star, ze=ze)
        model = mmod.PgnnModel(phys=phys_star.with_theta(phys_star.theta.copy()),
                               nn=nn, transform=transform, normalization=norm_rec)
    return model, cs, phys_star


def cmd_train(cfg, cfg_hash, seed, out):
    ds_train, ds_val = _load_dataset(cfg)
    model, cs, phys_star = _build_training(cfg, ds_train, ds_val, seed)
    if cs is None:  # physics-only recipe: linear least squares, no NN
        model.save(out)
        print(f"physics model written to {out}")
        return 0
    tsec = cfg.get("train", {})
    _check_keys(tsec, {"restarts", "max_epochs", "patience", "seed"}, "train")
    tcfg = tmod.TrainConfig(
        restarts=int(tsec.get("restarts", 10)),
        max_epochs=int(tsec.get("max_epochs", 300)),
        patience=int(tsec.get("patience", 20)),
        seed=int(tsec.get("seed", seed)),
    )
    constraint = None
    if cfg.get("model", {}).get("constrained", False):
        constraint = stab.theta_constraint(phys_star.theta, ds_train.spec.n_u)
    report = tmod.train(model, ds_train, ds_val, cs, tcfg, constraint=constraint)
    report.model.save(out)
    rpt_path = str(Path(out).with_suffix("")) + "_report.json"
    _write_json(rpt_path, report.summary(), cfg_hash)
    print(f"trained model written to {out}; "
          f"cost {report.cost:.6e} (val {report.val_cost:.6e})")
    return 0


def cmd_certify(cfg, cfg_hash, seed, out):
    sec = cfg.get("certify", {})
    _check_keys(sec, {"model", "q_scale"}, "certify")
    model = mmod.PgnnModel.load(sec["model"])
    ss = stab.to_state_space(model)
    Q = None
    if "q_scale" in sec:
        Q = float(sec["q_scale"]) * np.eye(ss.n_state)
    cert = stab.certify_iss(ss, Q)
    _write_json(out, cert.to_dict(), cfg_hash)
    print(cert.verdict())
    return 0 if cert.certified else 3


def cmd_gen_ze(cfg, cfg_hash, seed, out):
    region = _region(cfg)
    ds_train, _ = _load_dataset(cfg)
    feats = emod.project_to_region(ds_train.y_part(), region, ds_train.T_s,
                                   shifts=ds_train.spec.y_shifts())
    zsec = cfg.get("ze", {})
    _check_keys(zsec, {"e_max", "eps"}, "ze")
    zset = emod.generate_ze(region, feats, int(zsec.get("e_max", 100)),
                            float(zsec.get("eps", 0.0)))
    zset.to_csv(out)
    print(f"{zset.E} extrapolation points written to {out}")
    return 0


def _plant_from_cfg(cfg):
    sec = cfg.get("plant", {})
    _check_keys(sec, {"kind", "T_s", "params"}, "plant")
    kind = sec.get("kind", "clm_synthetic")
    T_s = float(sec.get("T_s", 1e-3))
    over = sec.get("params", {})
    if kind == "clm_synthetic":
        return smod.clm_default_plant(T_s, **over), smod.clm_feedback(T_s)
    if kind == "rotating_translating":
        return smod.rotating_default_plant(T_s, **over), smod.rotating_feedback(T_s)
    raise ConfigError(f"unknown plant kind '{kind}'")


def _references_from_cfg(cfg, T_s):
    refs = []
    for rsec in cfg.get("references", []):
        _check_keys(rsec, {"start", "end", "v", "a", "j", "dwell", "repeat",
                           "preview"}, "references")
        ref = smod.make_reference(
            float(rsec.get("start", -0.1)), float(rsec.get("end", 0.1)),
            float(rsec.get("v", 0.1)), float(rsec.get("a", 1.0)),
            float(rsec.get("j", 1000.0)), T_s,
            dwell_before=float(rsec.get("dwell", 0.1)),
            dwell_after=float(rsec.get("dwell", 0.1)),
            n_preview=int(rsec.get("preview", 64)),
        )
        refs.extend([ref] * int(rsec.get("repeat", 1)))
    if not refs:
        raise ConfigError("no [[references]] given")
    return refs


def cmd_gen_data(cfg, cfg_hash, seed, out):
    plant, fb = _plant_from_cfg(cfg)
    refs = _references_from_cfg(cfg, plant.T_s)
    nsec = cfg.get("noise", {})
    _check_keys(nsec, {"var", "window"}, "noise")
    t, u, y = smod.generate_training_experiment(
        plant, fb, refs,
        noise_var=float(nsec.get("var", 50.0)),
        seed=seed,
        noise_window=tuple(nsec.get("window", (0.0, 1.0))),
    )
    dmod.write_log_csv(out, t, u, y)
    print(f"{t.size} samples written to {out}")
    return 0


def _feedforward_from_path(path):
    if path in (None, "", "none"):
        return smod.NoFeedforward()
    return smod.ModelFeedforward(mmod.PgnnModel.load(path))


def cmd_simulate(cfg, cfg_hash, seed, out):
    plant, fb = _plant_from_cfg(cfg)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, scen in enumerate(cfg.get("scenarios", [])):
        _check_keys(scen, {"name", "model", "reference"}, "scenarios")
        ref_cfg = {"references": [scen["reference"]]}
        ref = _references_from_cfg(ref_cfg, plant.T_s)[0]
        ff = _feedforward_from_path(scen.get("model"))
        res = smod.run_closed_loop(plant, fb, ff, ref)
        name = scen.get("name", f"scenario_{i}")
        res.to_csv(out_dir / f"{name}.csv")
        rows.append({"name": name, "mae": res.mae, "mse": res.mse})
    _write_json(out_dir / "metrics.json", {"scenarios": rows}, cfg_hash)
    print(f"{len(rows)} scenarios written to {out_dir}")
    return 0


def cmd_compare(cfg, cfg_hash, seed, out):
    plant, fb = _plant_from_cfg(cfg)
    refs_cfg = cfg.get("references", [])
    models = cfg.get("compare", {}).get("models", {})
    if not models:
        raise ConfigError("missing [compare] models table")
    rows = []
    for ri, rsec in enumerate(refs_cfg):
        ref = _references_from_cfg({"references": [rsec]}, plant.T_s)[0]
        for name, path in models.items():
            ff = _feedforward_from_path(path)
            res = smod.run_closed_loop(plant, fb, ff, ref)
            rows.append({"controller": name, "reference": ri,
                         "mae": res.mae, "mse": res.mse})
    _write_json(out, {"table": rows}, cfg_hash)
    print(f"{len(rows)} (controller, reference) rows written to {out}")
    return 0


_COMMANDS = {
    "identify": cmd_identify,
    "train": cmd_train,
    "certify": cmd_certify,
    "gen-ze": cmd_gen_ze,
    "gen-data": cmd_gen_data,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pgnnff",
        description="physics-guided neural network feedforward pipeline",
    )
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="TOML experiment config")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True, help="output file or directory")
    args = parser.parse_args(argv)
    try:
        cfg, cfg_hash = _load_config(args.config)
        return _COMMANDS[args.command](cfg, cfg_hash, args.seed, args.out)
    except Exception as exc:  # machine-readable failure channel
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
