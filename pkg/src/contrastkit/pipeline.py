"""End-to-end batch workflow: background selection, CDE, dimension, fit, artifacts."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .exceptions import ConfigError, ContrastkitError, NoValidBackground
from .linear import CCUR, CPCA, DEFAULT_GAMMA_GRID, GCPCA
from .model import CLVM, PCPCA, pcpca_contrastive_loglik
from .preprocess import bascod_test, cde_test
from .structured import CFPCA, CIR, CLR, CurveSet

SCHEMA_VERSION = "report_v1"
SEED_ENV = "CONTRASTKIT_SEED"
METHODS = ("cpca", "gcpca:v1", "gcpca:v2", "gcpca:v3", "ccur", "pcpca", "clvm", "cfpca", "cir", "clr")
GAMMA_METHODS = ("cpca", "pcpca", "cfpca", "cir")
RESPONSE_METHODS = ("cir", "clr")
STOP_MESSAGE = "no contrastive signal detected; proceed with non-contrastive analyses"


@dataclass
class PipelineConfig:
    """Pipeline settings, read from a single JSON document.

    Relative paths are resolved against ``base_dir`` (the directory holding
    the config file). ``dim_rule`` (variance fraction or fixed integer for
    subspace estimates), ``n_shared`` (shared latent dimension for the latent
    variable models) and ``has_header`` are optional extensions.
    """

    foreground_path: str
    background_paths: list
    method: str
    output_dir: str
    response_column: str | int | None = None
    gamma: float | None = None
    d: int | None = None
    alpha: float = 0.05
    B: int = 1000
    epsilon_cde: float = 0.05
    epsilon_bascod: float = 0.05
    seed: int = 0
    dim_rule: float | int = 0.9
    n_shared: int | None = None
    has_header: bool | None = None
    base_dir: str = field(default=".", repr=False, compare=False)

    def __post_init__(self):
        if isinstance(self.background_paths, str):
            self.background_paths = [self.background_paths]
        self.background_paths = list(self.background_paths)
        if not self.background_paths:
            raise ConfigError("background_paths needs at least one entry")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {METHODS}")
        if not 0.0 < float(self.alpha) < 1.0:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.d is not None and (int(self.d) != self.d or self.d < 1):
            raise ConfigError("d must be a positive integer")
        if self.gamma is not None and not float(self.gamma) >= 0:
            raise ConfigError("gamma must be non-negative")
        if int(self.B) < 100:
            raise ConfigError("B must be at least 100")
        if self.method in RESPONSE_METHODS and self.response_column is None:
            raise ConfigError(f"method {self.method} needs a response_column")

    @classmethod
    def from_dict(cls, data: dict, base_dir=".") -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)} - {"base_dir"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = {"foreground_path", "background_paths", "method", "output_dir"} - set(data)
        if missing:
            raise ConfigError(f"missing config keys: {sorted(missing)}")
        data = dict(data)
        if SEED_ENV in os.environ:
            try:
                data["seed"] = int(os.environ[SEED_ENV])
            except ValueError:
                raise ConfigError(f"{SEED_ENV} must be an integer") from None
        try:
            return cls(**data, base_dir=str(base_dir))
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data, base_dir=path.parent)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out.pop("base_dir")
        return out

    def resolve(self, p) -> Path:
        p = Path(p)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def check_paths(self):
        for p in [self.foreground_path, *self.background_paths]:
            if not self.resolve(p).is_file():
                raise ConfigError(f"input file not found: {p}")


@dataclass
class RunReport:
    """Outcome of :func:`run_pipeline`; ``exit_code`` follows the CLI contract."""

    content: dict
    exit_code: int = 0

    @property
    def stopped(self) -> bool:
        return self.content["status"] != "fitted"

    def to_json(self) -> str:
        return dumps_report(self.content)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dumps_report(content: dict) -> str:
    """Serialise with insertion-ordered keys and round-trip float repr."""
    return json.dumps(_clean(content), indent=2, allow_nan=False) + "\n"


# --------------------------------------------------------------------------- data


@dataclass
class _Inputs:
    X: np.ndarray
    backgrounds: list
    response: np.ndarray | None
    background_responses: list
    names: list
    grid: np.ndarray | None = None


def load_inputs(config: PipelineConfig) -> _Inputs:
    config.check_paths()
    if config.method == "cfpca":
        fg = io.load_curves(config.resolve(config.foreground_path))
        bgs = [io.load_curves(config.resolve(p)) for p in config.background_paths]
        names = [f"t{j}" for j in range(fg.values.shape[1])]
        return _Inputs(fg.values, [b.values for b in bgs], None, [None] * len(bgs), names, fg.grid)
    rc = config.response_column
    X, r, names = io.load_csv(config.resolve(config.foreground_path), config.has_header, rc)
    bgs, brs = [], []
    for p in config.background_paths:
        path = config.resolve(p)
        if rc is not None and config.method == "cir":
            Y, yr, _ = io.load_csv(path, config.has_header, rc)
        else:
            Y, _, bnames = io.load_csv(path, config.has_header)
            yr = None
            if rc is not None and isinstance(rc, str) and rc in bnames:
                Y = np.delete(Y, bnames.index(rc), axis=1)
        bgs.append(Y)
        brs.append(yr)
    return _Inputs(X, bgs, r, brs, names)


# --------------------------------------------------------------------------- fitting


def _fit_method(method, inputs: _Inputs, Y, y_bg, d, gamma, n_shared, seed):
    """Fit one method; return (estimator, embedding, loadings, diagnostics)."""
    X = inputs.X
    if method == "cpca":
        est = CPCA(d, gamma).fit(X, Y)
        return est, est.transform(X), est.loadings_, {"objective": est.objective(), "n_iter": None,
                                                       "converged": True}
    if method.startswith("gcpca"):
        est = GCPCA(d, variant=method.split(":")[1]).fit(X, Y)
        return est, est.transform(X), est.loadings_, {"objective": est.objective_value_,
                                                       "n_iter": None, "converged": True}
    if method == "ccur":
        est = CCUR(n_columns=d).fit(X, Y)
        return est, est.transform(X), None, {"objective": None, "n_iter": None, "converged": True}
    if method == "pcpca":
        est = PCPCA(d, gamma).fit(X, Y)
        ll = pcpca_contrastive_loglik(X - est.mean_, Y - est.background_mean_, est.W_, est.sigma2_, gamma)
        return est, est.transform(X), est.loadings_, {"objective": ll, "n_iter": None, "converged": True}
    if method == "clvm":
        est = CLVM(d, n_shared=n_shared, random_state=seed).fit(X, Y)
        return est, est.transform(X), est.salient_loadings_, {
            "objective": est.loglik_trace_[-1], "n_iter": est.n_iter_, "converged": est.converged_}
    if method == "cfpca":
        fg = CurveSet(inputs.grid, X)
        bg = CurveSet(inputs.grid, Y)
        est = CFPCA(d, gamma).fit(fg, bg)
        return est, est.transform(fg), est.eigenfunctions_, {
            "objective": float(np.sum(est.eigenvalues_[:d])), "n_iter": None, "converged": True}
    if method == "cir":
        est = CIR(d, gamma, random_state=seed).fit(X, inputs.response, Y, y_bg)
        return est, est.transform(X), est.loadings_, {"objective": est.loss_, "n_iter": est.n_iter_,
                                                       "converged": est.converged_}
    if method == "clr":
        est = CLR(d, n_shared=n_shared, random_state=seed).fit(X, inputs.response, Y)
        return est, est.transform(X), est.salient_loadings_, {
            "objective": est.loglik_trace_[-1], "n_iter": est.n_iter_, "converged": est.converged_}
    raise ConfigError(f"unknown method {method!r}")


def gamma_sweep(method, inputs: _Inputs, Y, y_bg, d, gammas, n_shared=None, seed=0) -> list:
    """Objective at each contrast strength; failures are recorded, not raised."""
    rows = []
    for g in gammas:
        try:
            _, _, _, diag = _fit_method(method, inputs, Y, y_bg, d, float(g), n_shared, seed)
            rows.append({"gamma": float(g), "objective": diag["objective"], "error": None})
        except ContrastkitError as exc:
            rows.append({"gamma": float(g), "objective": None, "error": type(exc).__name__})
    return rows


# --------------------------------------------------------------------------- driver


def _new_report(config: PipelineConfig) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "config_hash": config.config_hash(),
        "seed": int(config.seed),
        "config": config.to_dict(),
        "status": None,
        "message": None,
        "background_selection": None,
        "selected_background": None,
        "cde": None,
        "method_used": None,
        "d_used": None,
        "d_provenance": None,
        "gamma": None,
        "fit": None,
        "gamma_sweep": None,
        "selected_features": None,
        "outputs": [],
        "timings": {},
    }


def _write_report(config: PipelineConfig, report: dict) -> None:
    out = config.resolve(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    report["outputs"].append("report.json")
    (out / "report.json").write_text(dumps_report(report), encoding="utf-8")


def run_pipeline(config: PipelineConfig, n_jobs: int = 1, emit_plot_data: bool = False) -> RunReport:
    """Run the full workflow and write its artifacts to ``config.output_dir``.

    Exit codes: 0 when a method was fitted, 2 when the workflow stops (no
    valid background, or no contrastive signal).
    """
    if config.method in RESPONSE_METHODS and config.response_column is None:
        raise ConfigError(f"method {config.method} needs a response_column")
    report = _new_report(config)
    timings = report["timings"]
    stamp = {"config_hash": report["config_hash"], "seed": report["seed"]}
    out = config.resolve(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    inputs = load_inputs(config)
    if config.method in RESPONSE_METHODS and inputs.response is None:
        raise ConfigError(f"method {config.method} needs a response column in the foreground")
    timings["load"] = time.perf_counter() - t0

    # (1) background selection
    sel = 0
    if len(inputs.backgrounds) > 1:
        t0 = time.perf_counter()
        bg_report = bascod_test(inputs.X, inputs.backgrounds, dim_rule=config.dim_rule,
                                epsilon=config.epsilon_bascod, alpha=config.alpha)
        report["background_selection"] = bg_report.to_dict()
        timings["background_selection"] = time.perf_counter() - t0
        try:
            sel = bg_report.select()
        except NoValidBackground as exc:
            report["status"] = "no_valid_background"
            report["message"] = str(exc)
            _write_report(config, report)
            return RunReport(report, exit_code=2)
    report["selected_background"] = config.background_paths[sel]
    Y = inputs.backgrounds[sel]
    y_bg = inputs.background_responses[sel]
    if config.method == "cir" and y_bg is None:
        raise ConfigError("method cir needs the response column in the background as well")

    # (2) contrastive dimension test
    t0 = time.perf_counter()
    cde = cde_test(inputs.X, Y, d_x=config.dim_rule, d_y=config.dim_rule, B=config.B,
                   seed=config.seed, epsilon=config.epsilon_cde, n_jobs=n_jobs)
    report["cde"] = cde.to_dict()
    timings["cde"] = time.perf_counter() - t0
    if not cde.rejects(config.alpha):
        report["status"] = "no_contrastive_signal"
        report["message"] = STOP_MESSAGE
        _write_report(config, report)
        return RunReport(report, exit_code=2)

    # (3) dimension
    if config.d is not None:
        d, prov = int(config.d), "user"
    else:
        d, prov = max(int(cde.d_hat), 1), "estimated"
    report["d_used"] = d
    report["d_provenance"] = prov

    # (4) fit
    gamma = None
    if config.method in GAMMA_METHODS:
        gamma = 1.0 if config.gamma is None else float(config.gamma)
    report["gamma"] = gamma
    n_shared = config.n_shared if config.n_shared is not None else int(cde.d_y)
    t0 = time.perf_counter()
    est, emb, loadings, diag = _fit_method(config.method, inputs, Y, y_bg, d, gamma, n_shared,
                                           config.seed)
    report["method_used"] = config.method
    report["fit"] = diag
    timings["fit"] = time.perf_counter() - t0
    if config.method in GAMMA_METHODS and config.gamma is None:
        t0 = time.perf_counter()
        report["gamma_sweep"] = gamma_sweep(config.method, inputs, Y, y_bg, d, DEFAULT_GAMMA_GRID,
                                            n_shared, config.seed)
        timings["gamma_sweep"] = time.perf_counter() - t0

    # (5) artifacts
    io.save_embedding(out / "embeddings.csv", emb, stamp=stamp)
    report["outputs"].append("embeddings.csv")
    if loadings is not None:
        io.save_matrix(out / "loadings.csv", loadings,
                       header=[f"c{j + 1}" for j in range(np.shape(loadings)[1])], stamp=stamp)
        report["outputs"].append("loadings.csv")
    if config.method == "ccur":
        rows = [(int(j), inputs.names[j], float(est.scores_[j])) for j in est.column_indices_]
        io.save_table(out / "selected_features.csv", ["index", "name", "score"], rows, stamp=stamp)
        report["selected_features"] = [{"index": i, "name": n, "score": s} for i, n, s in rows]
        report["outputs"].append("selected_features.csv")
    if emit_plot_data:
        _write_plot_data(out, emb, report, stamp)
    report["status"] = "fitted"
    report["message"] = "fitted"
    _write_report(config, report)
    return RunReport(report, exit_code=0)


def _write_plot_data(out: Path, emb, report, stamp):
    emb = np.asarray(emb, dtype=float).reshape(len(emb), -1)
    rows = [(i, f"c{j + 1}", float(emb[i, j])) for i in range(emb.shape[0]) for j in range(emb.shape[1])]
    io.save_table(out / "plot_embedding.csv", ["sample", "component", "value"], rows, stamp=stamp)
    report["outputs"].append("plot_embedding.csv")
    if report["gamma_sweep"]:
        rows = [(float(r["gamma"]), float("nan") if r["objective"] is None else float(r["objective"]))
                for r in report["gamma_sweep"]]
        io.save_table(out / "plot_gamma_sweep.csv", ["gamma", "objective"], rows, stamp=stamp)
        report["outputs"].append("plot_gamma_sweep.csv")


def strip_timings(content: dict) -> dict:
    """Copy of a report without the wall-clock fields."""
    out = dict(content)
    out.pop("timings", None)
    return out


def parse_grid(text: str) -> np.ndarray:
    """Parse ``log:lo:hi:n`` or ``lin:lo:hi:n`` or a comma-separated list."""
    try:
        if text.startswith(("log:", "lin:")):
            kind, lo, hi, n = text.split(":")
            lo, hi, n = float(lo), float(hi), int(n)
            if n < 1:
                raise ValueError
            if kind == "log":
                if lo <= 0 or hi <= 0:
                    raise ValueError
                return np.logspace(np.log10(lo), np.log10(hi), n)
            return np.linspace(lo, hi, n)
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise ConfigError(f"cannot parse grid {text!r}") from None


def run_sweep(config: PipelineConfig, gammas) -> dict:
    """Fit ``config.method`` at every gamma on the first background."""
    if config.method not in GAMMA_METHODS:
        raise ConfigError(f"method {config.method} has no gamma parameter")
    if config.d is None:
        raise ConfigError("sweep needs an explicit d in the config")
    inputs = load_inputs(config)
    n_shared = config.n_shared
    rows = gamma_sweep(config.method, inputs, inputs.backgrounds[0], inputs.background_responses[0],
                       int(config.d), gammas, n_shared, config.seed)
    out = config.resolve(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stamp = {"config_hash": config.config_hash(), "seed": config.seed}
    io.save_table(out / "sweep.csv", ["gamma", "objective"],
                  [(r["gamma"], float("nan") if r["objective"] is None else float(r["objective"]))
                   for r in rows], stamp=stamp)
    return {"method": config.method, "d": int(config.d), "sweep": rows}


def load_schema() -> dict:
    from importlib.resources import files

    return json.loads(files("contrastkit").joinpath("schemas/report_v1.json").read_text(encoding="utf-8"))


def validate_report(content: dict) -> None:
    """Raise ``jsonschema.ValidationError`` when ``content`` breaks report_v1."""
    import jsonschema

    jsonschema.validate(_clean(content), load_schema())
