"""Config-driven desk-scale studies.

Each ``run_*`` function takes a resolved config dict (see :func:`resolve_config`)
and an optional output directory, writes its artifacts there and returns a
summary dict. Every run is a pure function of the config, including its seed.

Output layout::

    <out>/manifest.json
    <out>/report.json
    <out>/curves/*.csv
    <out>/images/*.pgm
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import data, io, metrics, ood
from . import kernels as K
from . import tensor as T
from .models import MlpSpec, ensemble_forward, load_checkpoint, save_checkpoint
from .train import METHODS, OOD_METHODS, TrainConfig, materialize, train

__all__ = [
    "EXPERIMENTS",
    "ConfigError",
    "default_config",
    "resolve_config",
    "apply_override",
    "train_config",
    "sphere_study",
    "run_sphere",
    "run_quadrants",
    "run_regress1d",
    "run_cka_heatmap",
    "heatmap_summary",
    "emit_cka_heatmap",
    "run_ood_preview",
    "run_eval",
    "run_experiment",
]

EXPERIMENTS = ("sphere", "quadrants", "regress1d", "cka_heatmap", "ood_preview", "eval")


class ConfigError(ValueError):
    """Invalid or unresolvable experiment configuration."""


_TRAIN = asdict(TrainConfig())
_TRAIN.pop("method")
_TRAIN.pop("seed")
_TRAIN["repulsion"].update(eps_arc=0.01, layer_weights=[0.2, 0.35, 0.85, 0.05], gamma_id=1.0, gamma_ood=1.0, beta=1.0)
_TRAIN["optimizer"].update(lr=0.01, weight_decay=0.0075)
_TRAIN["hyper_activation"] = "gelu"
_TRAIN["diagnostic_every"] = 10

_QUADRANT_MODEL = {"layer_widths": [2, 32, 32, 32, 4], "activation": "gelu", "capture_layers": None}

_BASE = {
    "experiment": "quadrants",
    "method": "ensemble",
    "seeds": [0],
    "model": _QUADRANT_MODEL,
    "train": _TRAIN,
    "quadrants": {"n_per_class": 100, "n_test_per_class": 100, "sigma": 0.4, "test_seed_offset": 1000},
    "regress1d": {"n_side": 40, "n_gap": 2, "grid_points": 400, "gap": [-2.0, 2.0]},
    "ood": {"pad": 3.0, "margin": 1.2, "pool_size": 2000, "mix_ratio_corrupt": 0.35, "octaves": 3},
    "eval": {"grid_extent": 5.0, "grid_resolution": 100, "far_threshold": 1.5, "members": 30, "ece_bins": 15,
             "sample_seed_offset": 1, "checkpoint": None, "density": True},
    "sphere": {"n_points": 30, "dim": 3, "iterations": 50, "lr": 0.75, "momentum": 0.9, "s": 2.0,
               "centers": [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], "spread": 0.3},
    "heatmap": {"estimator": "unbiased", "n_points": 128, "checkpoint": None},
    "preview": {"n": 24, "height": 28, "width": 28, "inlier_pool": 64},
}

#: Per-experiment departures from the base config.
_EXPERIMENT_DEFAULTS = {
    "regress1d": {
        "model": {"layer_widths": [1, 50, 50, 50, 1], "activation": "gelu", "capture_layers": None},
        "train": {"batch_size": None, "ood_batch_size": 48, "optimizer": {"weight_decay": 0.1},
                  "repulsion": {"beta": 0.0, "layer_weights": [0.2, 0.35, 0.85, 0.05]}},
        "ood": {"pad": 1.0, "margin": 0.5},
    },
}

#: Per-method departures, applied before user settings. Hypernetworks share
#: one generator across members and need a weaker repulsion to stay accurate.
_METHOD_DEFAULTS = {
    "hypernet_ood_he": {"train": {"repulsion": {"gamma_id": 0.1, "gamma_ood": 0.1, "beta": 0.01}}},
}

#: Per-(experiment, method) departures, applied last. In regression the strong
#: decay that tames member extrapolation starves the shared generator.
_EXPERIMENT_METHOD_DEFAULTS = {
    ("regress1d", "hypernet"): {"train": {"optimizer": {"weight_decay": 0.0075}}},
    ("regress1d", "hypernet_ood_he"): {"train": {"optimizer": {"weight_decay": 0.0075},
                                                 "repulsion": {"gamma_id": 0.05, "gamma_ood": 0.05}}},
}


def _merge(base: dict, extra: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in extra.items():
        where = f"{path}{key}"
        if key not in out:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(out[key], dict) and isinstance(val, dict):
            out[key] = _merge(out[key], val, where + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, assignment: str) -> dict:
    """Apply one ``dotted.key=value`` override; values are parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not key=value")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    if parts[0] not in cfg and parts[0] in cfg.get("train", {}):
        parts.insert(0, "train")  # training fields may be addressed without the prefix
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"unknown config key {key!r}")
        node = node[p]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key {key!r}")
    node[parts[-1]] = _parse_value(raw)
    return cfg


def default_config(experiment: str, method: str | None = None) -> dict:
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    cfg = _merge(_BASE, _EXPERIMENT_DEFAULTS.get(experiment, {}))
    cfg["experiment"] = experiment
    method = method or cfg["method"]
    cfg = _merge(cfg, _METHOD_DEFAULTS.get(method, {}))
    cfg = _merge(cfg, _EXPERIMENT_METHOD_DEFAULTS.get((experiment, method), {}))
    cfg["method"] = method
    return cfg


def resolve_config(experiment: str, user: dict | None = None, overrides=(), seed: int | None = None) -> dict:
    """Defaults, then the user document, then overrides, then ``seed``.

    Method-specific defaults follow the method named by the user document or
    an override. The result is validated and has every field filled in.
    """
    user = copy.deepcopy(user or {})
    user.pop("experiment", None)
    probe = _merge(_BASE, {"method": user.get("method", _BASE["method"])})
    for ov in overrides:
        if ov.split("=", 1)[0].strip() == "method":
            apply_override(probe, ov)
    cfg = _merge(default_config(experiment, probe["method"]), user)
    for ov in overrides:
        apply_override(cfg, ov)
    if seed is not None:
        cfg["seeds"] = [int(seed)]
    _validate(cfg)
    return cfg


def _validate(cfg: dict) -> None:
    if cfg["method"] not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}, got {cfg['method']!r}")
    seeds = cfg["seeds"]
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        raise ConfigError("seeds must be a non-empty list of integers")
    try:
        train_config(cfg, seeds[0])
        _model_spec(cfg)
        ood.OodRecipe(pad=cfg["ood"]["pad"], margin=cfg["ood"]["margin"],
                      mix_ratio_corrupt=cfg["ood"]["mix_ratio_corrupt"])
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err)) from None
    if cfg["heatmap"]["estimator"] not in ("biased", "unbiased"):
        raise ConfigError("heatmap.estimator must be 'biased' or 'unbiased'")
    sph = cfg["sphere"]
    if sph["n_points"] < 2 or sph["dim"] < 2:
        raise ConfigError("sphere study needs at least 2 points in at least 2 dimensions")


def train_config(cfg: dict, seed: int) -> TrainConfig:
    return TrainConfig(method=cfg["method"], seed=seed, **copy.deepcopy(cfg["train"]))


def _model_spec(cfg: dict) -> MlpSpec:
    m = cfg["model"]
    return MlpSpec(list(m["layer_widths"]), m["activation"], m["capture_layers"])


# -- sphere study ---------------------------------------------------------
def _sphere_objectives(P: T.Tensor, s: float) -> tuple[T.Tensor, T.Tensor]:
    n = P.shape[0]
    Q = T.normalize(P)
    S = Q @ Q.T
    mask = 1.0 - np.eye(n)
    scale = 1.0 / (n * (n - 1))
    cos = (S * mask).sum() * scale
    energy = (T.power(T.arccos(S * mask), -s) * mask).sum() * scale
    return cos, energy


def sphere_study(seed: int, n_points: int = 30, dim: int = 3, iterations: int = 50, lr: float = 0.75,
                 momentum: float = 0.9, s: float = 2.0, centers=((1.0, 0.0, 0.0), (0.0, 1.0, 0.0)),
                 spread: float = 0.3) -> dict:
    """Minimize mean pairwise cosine similarity or Riesz energy of points on the sphere.

    Points start as two Gaussian blobs projected to the unit sphere. Both
    arms use heavy-ball gradient descent and re-project after every step.
    Returns per-iteration ``cossim`` and ``energy`` curves for both arms
    (``iterations + 1`` values, index 0 is the initial state) plus the
    initial and final points.
    """
    rng = np.random.default_rng(seed)
    centers = np.asarray(centers, dtype=np.float64)
    if centers.shape[1] != dim:
        raise ConfigError(f"sphere centers must have dimension {dim}")
    split = np.array_split(np.arange(n_points), len(centers))
    X0 = np.concatenate([rng.normal(c, spread, (len(idx), dim)) for c, idx in zip(centers, split)])
    X0 /= np.linalg.norm(X0, axis=1, keepdims=True)
    result = {"initial": X0}
    for arm in ("cossim", "energy"):
        X = X0.copy()
        velocity = np.zeros_like(X)
        curves = {"cossim": [], "energy": []}
        for it in range(iterations + 1):
            P = T.Tensor(X, requires_grad=True)
            cos, energy = _sphere_objectives(P, s)
            curves["cossim"].append(cos.item())
            curves["energy"].append(energy.item())
            if it == iterations:
                break
            T.backward(cos if arm == "cossim" else energy)
            velocity = momentum * velocity + P.grad
            X = X - lr * velocity
            X /= np.linalg.norm(X, axis=1, keepdims=True)
        result[arm] = {"cossim": np.array(curves["cossim"]), "energy": np.array(curves["energy"]), "points": X}
    return result


def run_sphere(cfg: dict, seed: int, out: Path | None = None) -> dict:
    sph = cfg["sphere"]
    res = sphere_study(seed, sph["n_points"], sph["dim"], sph["iterations"], sph["lr"], sph["momentum"], sph["s"],
                       sph["centers"], sph["spread"])
    a, b = res["cossim"], res["energy"]
    summary = {
        "final_cossim_cossim_arm": float(a["cossim"][-1]),
        "final_cossim_energy_arm": float(b["cossim"][-1]),
        "final_energy_cossim_arm": float(a["energy"][-1]),
        "final_energy_energy_arm": float(b["energy"][-1]),
    }
    if out is not None:
        rows = zip(range(len(a["cossim"])), a["cossim"], a["energy"], b["cossim"], b["energy"])
        io.write_csv(out / "curves" / "sphere.csv",
                     ["iteration", "cossim_arm_cossim", "cossim_arm_energy", "energy_arm_cossim", "energy_arm_energy"],
                     rows)
        axes = [f"x{i}" for i in range(sph["dim"])]
        for name, pts in (("initial", res["initial"]), ("final_cossim", a["points"]), ("final_energy", b["points"])):
            io.write_csv(out / "curves" / f"points_{name}.csv", axes, pts.tolist())
        io.write_json(out / "report.json", summary)
    summary["curves"] = res
    return summary


# -- quadrant study -------------------------------------------------------
def _quadrant_data(cfg: dict, seed: int):
    q = cfg["quadrants"]
    train_set = data.quadrants(q["n_per_class"], seed, q["sigma"])
    test_set = data.quadrants(q["n_test_per_class"], seed + q["test_seed_offset"], q["sigma"])
    return train_set, test_set


def _far_points(cfg: dict) -> tuple[np.ndarray, np.ndarray]:
    ev = cfg["eval"]
    grid = data.eval_grid(ev["grid_extent"], ev["grid_resolution"])
    dist = np.linalg.norm(grid[:, None, :] - data.QUADRANT_MEANS[None], axis=-1).min(axis=1)
    return grid, grid[dist >= ev["far_threshold"]]


def _ood_pool(cfg: dict, X: np.ndarray, seed: int) -> np.ndarray | None:
    if cfg["method"] not in OOD_METHODS:
        return None
    o = cfg["ood"]
    return ood.boundary_sample(X, o["pad"], o["margin"], o["pool_size"], seed)


def _fit(cfg: dict, seed: int, dataset, pool):
    model, history = train(train_config(cfg, seed), _model_spec(cfg), dataset, pool)
    state = materialize(model, cfg["eval"]["members"], seed + cfg["eval"]["sample_seed_offset"])
    return state, history


def _probs(state, X) -> tuple[np.ndarray, list[np.ndarray]]:
    with T.no_grad():
        logits, feats = ensemble_forward(state, X)
    return metrics.member_probs(logits.data), [f.data for f in feats]


def _density(cfg: dict, state, train_set, X_in, X_out):
    """Member-averaged GDA log-density on the last hidden layer, or ``None``."""
    if not cfg["eval"]["density"]:
        return None, None
    layer = state.spec.n_layers - 2  # index of the last hidden layer in the full feature list
    with T.no_grad():
        _, f_tr = ensemble_forward(state, train_set.X)
        _, f_in = ensemble_forward(state, X_in)
        _, f_out = ensemble_forward(state, X_out)
    dens_in, dens_out = [], []
    for m in range(state.n_members):
        gda = metrics.gda_fit(f_tr[layer].data[m], train_set.y)
        dens_in.append(metrics.gda_score(gda, f_in[layer].data[m]))
        dens_out.append(metrics.gda_score(gda, f_out[layer].data[m]))
    return np.mean(dens_in, axis=0), np.mean(dens_out, axis=0)


def _layer_cka(feats: list[np.ndarray]) -> list[float]:
    return [float(K.cka_pairwise([K.gram_linear(f)])) for f in feats]


def _quadrant_report(cfg: dict, state, train_set, test_set) -> tuple[dict, dict]:
    grid, far = _far_points(cfg)
    p_train, _ = _probs(state, train_set.X)
    p_test, feats_test = _probs(state, test_set.X)
    p_far, _ = _probs(state, far)
    d_in, d_out = _density(cfg, state, train_set, test_set.X, far)
    rep = metrics.uncertainty_report(p_test, test_set.y, p_far, d_in, d_out, cfg["eval"]["ece_bins"])
    pe_test, pe_far = metrics.predictive_entropy(p_test), metrics.predictive_entropy(p_far)
    layer_cka = _layer_cka(feats_test) if state.n_members > 1 else [float("nan")] * len(feats_test)
    report = asdict(rep)
    report.update(
        train_accuracy=metrics.nll_acc(p_train.mean(0), train_set.y)[1],
        test_accuracy=rep.accuracy,
        mean_pe_inlier=float(pe_test.mean()),
        mean_pe_far=float(pe_far.mean()),
        n_far=int(len(far)),
        layer_pairwise_cka=layer_cka,
        last_hidden_pairwise_cka=layer_cka[-2] if len(layer_cka) > 1 else layer_cka[-1],
    )
    extras = {"grid": grid, "far": far, "pe_test": pe_test, "pe_far": pe_far,
              "mi_test": metrics.mutual_information(p_test), "mi_far": metrics.mutual_information(p_far),
              "density_test": d_in, "density_far": d_out}
    return report, extras


def _write_scores(path: Path, ex: dict) -> None:
    rows = []
    for name, pe, mi, dens in (("inlier", ex["pe_test"], ex["mi_test"], ex["density_test"]),
                               ("far_ood", ex["pe_far"], ex["mi_far"], ex["density_far"])):
        for i in range(len(pe)):
            rows.append([name, pe[i], mi[i], "" if dens is None else dens[i]])
    io.write_csv(path, ["set", "predictive_entropy", "mutual_information", "log_density"], rows)


def run_quadrants(cfg: dict, seed: int, out: Path | None = None) -> dict:
    """Train on the four-cluster task; report accuracy, entropy maps and AUROC."""
    train_set, test_set = _quadrant_data(cfg, seed)
    pool = _ood_pool(cfg, train_set.X, seed)
    state, history = _fit(cfg, seed, train_set, pool)
    report, ex = _quadrant_report(cfg, state, train_set, test_set)
    if out is not None:
        p_grid, _ = _probs(state, ex["grid"])
        pe, mi = metrics.predictive_entropy(p_grid), metrics.mutual_information(p_grid)
        io.write_csv(out / "curves" / "entropy_grid.csv", ["x", "y", "predictive_entropy", "mutual_information"],
                     np.column_stack([ex["grid"], pe, mi]).tolist())
        _write_scores(out / "curves" / "scores.csv", ex)
        history.to_csv(out / "curves" / "history.csv")
        if pool is not None:
            io.write_csv(out / "curves" / "boundary_ood.csv", ["x", "y"], pool.tolist())
        save_checkpoint(out / "checkpoint.bin", state)
        io.write_json(out / "report.json", report)
    return {**report, "history": history, "state": state}


# -- regression study -----------------------------------------------------
def run_regress1d(cfg: dict, seed: int, out: Path | None = None) -> dict:
    """Fit the gap-regression task and evaluate every member on a dense grid."""
    r = cfg["regress1d"]
    ds = data.regress1d(seed, r["n_side"], r["n_gap"])
    pool = _ood_pool(cfg, ds.X, seed)
    state, history = _fit(cfg, seed, ds, pool)
    x = np.linspace(-6.0, 6.0, r["grid_points"])
    with T.no_grad():
        pred, _ = ensemble_forward(state, x[:, None])
        train_pred, _ = ensemble_forward(state, ds.X)
    curves = pred.data[..., 0]  # (M, G)
    mean, std = curves.mean(0), curves.std(0)
    lo, hi = r["gap"]
    gap = (x > lo) & (x < hi)
    side = ~gap
    truth = data.regress_target(x)
    train_mean = train_pred.data[..., 0].mean(0)
    in_region = (ds.X[:, 0] <= lo) | (ds.X[:, 0] >= hi)
    report = {
        "gap_mean_std": float(std[gap].mean()),
        "train_region_mean_std": float(std[side].mean()),
        "train_rmse": float(np.sqrt(np.mean((train_mean[in_region] - ds.y[in_region, 0]) ** 2))),
        "grid_rmse_train_region": float(np.sqrt(np.mean((mean[side] - truth[side]) ** 2))),
    }
    if out is not None:
        header = ["x", "target", "mean", "std"] + [f"member_{m}" for m in range(state.n_members)]
        io.write_csv(out / "curves" / "predictions.csv", header,
                     np.column_stack([x, truth, mean, std, curves.T]).tolist())
        io.write_csv(out / "curves" / "train_points.csv", ["x", "y"], np.column_stack([ds.X[:, 0], ds.y[:, 0]]).tolist())
        history.to_csv(out / "curves" / "history.csv")
        io.write_json(out / "report.json", report)
    return {**report, "x": x, "curves": curves, "history": history}


# -- CKA heatmaps ---------------------------------------------------------
def emit_cka_heatmap(state, X, estimator: str = "unbiased", out: Path | None = None) -> list[np.ndarray]:
    """One ``M x M`` member CKA matrix per captured layer, evaluated on ``X``."""
    with T.no_grad():
        _, feats = ensemble_forward(state, X)
    mats = [np.asarray(K.cka_matrix(K.gram_linear(f.data), estimator=estimator)) for f in feats]
    if out is not None:
        for l, mat in enumerate(mats, start=1):
            io.write_matrix_csv(out / "curves" / f"cka_layer{l}.csv", mat)
    return mats


def _off_diag_mean(mat: np.ndarray) -> float:
    m = mat.shape[0]
    return float((mat.sum() - np.trace(mat)) / (m * (m - 1)))


def run_cka_heatmap(cfg: dict, seed: int, out: Path | None = None) -> dict:
    """Train (or load) an ensemble on the quadrant task and emit layerwise CKA grids."""
    hm = cfg["heatmap"]
    train_set, _ = _quadrant_data(cfg, seed)
    if hm["checkpoint"]:
        state = _load(hm["checkpoint"], cfg)
    else:
        state, _ = _fit(cfg, seed, train_set, _ood_pool(cfg, train_set.X, seed))
    report, mats = heatmap_summary(cfg, state, seed, out)
    if out is not None:
        io.write_json(out / "report.json", report)
    return {**report, "matrices": mats, "state": state}


def heatmap_summary(cfg: dict, state, seed: int, out: Path | None = None) -> tuple[dict, list[np.ndarray]]:
    """Layer CKA matrices of ``state`` on ``heatmap.n_points`` quadrant test points, with their means."""
    hm = cfg["heatmap"]
    _, test_set = _quadrant_data(cfg, seed)
    X = test_set.X[np.random.default_rng(seed).permutation(len(test_set.X))[: hm["n_points"]]]
    mats = emit_cka_heatmap(state, X, hm["estimator"], out)
    layer_means = [_off_diag_mean(m) for m in mats]
    report = {"estimator": hm["estimator"], "layer_mean_cka": layer_means, "mean_cka": float(np.mean(layer_means))}
    return report, mats


# -- OOD image preview ----------------------------------------------------
def run_ood_preview(cfg: dict, seed: int, out: Path | None = None) -> dict:
    """Generate a mixed batch of synthetic and corrupted-inlier images."""
    pv, o = cfg["preview"], cfg["ood"]
    shape = (pv["height"], pv["width"])
    if min(shape) < 8:
        raise ConfigError("preview images must be at least 8x8")
    inliers = data.glyphs(pv["inlier_pool"], seed, shape)
    recipe = ood.OodRecipe(kind="corrupt_inlier", mix_ratio_corrupt=o["mix_ratio_corrupt"], seed=seed,
                           octaves=o["octaves"])
    items = ood.ood_batch_items(inliers, recipe, pv["n"], seed)
    rows = []
    for i, (img, kind, item_seed) in enumerate(items):
        name = f"{i:04d}_{kind}.pgm"
        if out is not None:
            io.write_pgm(out / "images" / name, img)
        rows.append([name, kind, item_seed])
    if out is not None:
        io.write_csv(out / "images" / "index.csv", ["filename", "kind", "seed"], rows)
    kinds = [r[1] for r in rows]
    report = {"n": len(rows), "n_corrupt": kinds.count("corrupt_inlier"),
              "kinds": {k: kinds.count(k) for k in sorted(set(kinds))}}
    if out is not None:
        io.write_json(out / "report.json", report)
    return {**report, "images": np.stack([it[0] for it in items])}


# -- checkpoint evaluation -------------------------------------------------
def _load(path, cfg: dict):
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"checkpoint not found: {p}")
    return load_checkpoint(p, _model_spec(cfg))


def run_eval(cfg: dict, seed: int, out: Path | None = None) -> dict:
    """Score a saved quadrant checkpoint on fresh test data and far-OOD grid points."""
    if not cfg["eval"]["checkpoint"]:
        raise ConfigError("eval needs eval.checkpoint")
    state = _load(cfg["eval"]["checkpoint"], cfg)
    train_set, test_set = _quadrant_data(cfg, seed)
    report, ex = _quadrant_report(cfg, state, train_set, test_set)
    if out is not None:
        _write_scores(out / "curves" / "scores.csv", ex)
        io.write_json(out / "report.json", report)
    return report


_RUNNERS = {"sphere": run_sphere, "quadrants": run_quadrants, "regress1d": run_regress1d,
            "cka_heatmap": run_cka_heatmap, "ood_preview": run_ood_preview, "eval": run_eval}


def run_experiment(cfg: dict, out: str | Path) -> Path:
    """Run every seed of ``cfg`` and write the manifest. Returns the manifest path.

    A single seed writes straight into ``out``; several seeds get one
    ``seed_<s>`` subdirectory each.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    runner = _RUNNERS[cfg["experiment"]]
    seeds = cfg["seeds"]
    for s in seeds:
        runner(cfg, s, out if len(seeds) == 1 else out / f"seed_{s}")
    return io.write_manifest(out, cfg)
