"""Versioned JSON persistence for fitted models.

Every fitted model serializes to the same envelope::

    {"format": "itac-model", "version": 1, "kind": "...", "payload": {...}}

Matrices are stored row-major as flat lists next to their shape.
Python's JSON writer emits shortest round-trip representations, so
floats survive a save/load cycle bit-exactly; non-finite scalars are
stored as null and restored as NaN.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .factors import DfmModel, PcaModel
from .neural.mlp import AnnConfig, AnnModel
from .neural.recurrent import RnnConfig, RnnModel
from .select import OlsModel

FORMAT = "itac-model"
SCHEMA_VERSION = 1


def _enc(arr: np.ndarray) -> dict:
    a = np.asarray(arr, dtype=float)
    return {"shape": list(a.shape), "data": a.ravel(order="C").tolist()}


def _dec(doc: dict) -> np.ndarray:
    return np.asarray(doc["data"], dtype=float).reshape(doc["shape"], order="C")


def _enc_scalar(x: float):
    x = float(x)
    return x if math.isfinite(x) else None


def _dec_scalar(x) -> float:
    return float("nan") if x is None else float(x)


def _pca_payload(m: PcaModel) -> dict:
    return {
        "loadings": _enc(m.loadings), "eigenvalues": _enc(m.eigenvalues),
        "means": _enc(m.means), "scales": _enc(m.scales),
        "k": int(m.k), "total_variance": float(m.total_variance),
    }


def _pca_restore(p: dict) -> PcaModel:
    return PcaModel(loadings=_dec(p["loadings"]),
                    eigenvalues=_dec(p["eigenvalues"]),
                    means=_dec(p["means"]), scales=_dec(p["scales"]),
                    k=int(p["k"]), total_variance=float(p["total_variance"]))


def _dfm_payload(m: DfmModel) -> dict:
    return {
        "loadings": _enc(m.loadings), "transition": _enc(m.transition),
        "factor_cov": _enc(m.factor_cov), "idio_var": _enc(m.idio_var),
        "means": _enc(m.means), "r": int(m.r), "init_cov": float(m.init_cov),
        "log_likelihood": _enc_scalar(m.log_likelihood),
        "ll_path": _enc(m.ll_path), "converged": bool(m.converged),
        "n_iter": int(m.n_iter), "stabilized": bool(m.stabilized),
    }


def _dfm_restore(p: dict) -> DfmModel:
    return DfmModel(loadings=_dec(p["loadings"]),
                    transition=_dec(p["transition"]),
                    factor_cov=_dec(p["factor_cov"]),
                    idio_var=_dec(p["idio_var"]), means=_dec(p["means"]),
                    r=int(p["r"]), init_cov=float(p["init_cov"]),
                    log_likelihood=_dec_scalar(p["log_likelihood"]),
                    ll_path=_dec(p["ll_path"]), converged=bool(p["converged"]),
                    n_iter=int(p["n_iter"]), stabilized=bool(p["stabilized"]))


def _ann_payload(m: AnnModel) -> dict:
    return {
        "sizes": [int(s) for s in m.sizes], "activation": m.activation,
        "weights": [_enc(w) for w in m.weights],
        "biases": [_enc(b) for b in m.biases],
        "config": asdict(m.config) if m.config is not None else None,
        "final_loss": _enc_scalar(m.final_loss),
        "loss_curve": _enc(m.loss_curve), "init_scheme": m.init_scheme,
    }


def _ann_restore(p: dict) -> AnnModel:
    cfg = AnnConfig(**p["config"]) if p["config"] is not None else None
    return AnnModel(sizes=[int(s) for s in p["sizes"]],
                    activation=p["activation"],
                    weights=[_dec(w) for w in p["weights"]],
                    biases=[_dec(b) for b in p["biases"]], config=cfg,
                    final_loss=_dec_scalar(p["final_loss"]),
                    loss_curve=_dec(p["loss_curve"]),
                    init_scheme=p["init_scheme"])


def _rnn_payload(m: RnnModel) -> dict:
    return {
        "cell": m.cell, "n_features": int(m.n_features),
        "hidden": int(m.hidden), "layers": int(m.layers),
        "window": int(m.window),
        "w_x": [_enc(w) for w in m.w_x], "w_h": [_enc(w) for w in m.w_h],
        "b": [_enc(b) for b in m.b],
        "w_out": _enc(m.w_out), "b_out": _enc(m.b_out),
        "config": asdict(m.config) if m.config is not None else None,
        "final_loss": _enc_scalar(m.final_loss),
        "loss_curve": _enc(m.loss_curve), "init_scheme": m.init_scheme,
    }


def _rnn_restore(p: dict) -> RnnModel:
    cfg = RnnConfig(**p["config"]) if p["config"] is not None else None
    return RnnModel(cell=p["cell"], n_features=int(p["n_features"]),
                    hidden=int(p["hidden"]), layers=int(p["layers"]),
                    window=int(p["window"]),
                    w_x=[_dec(w) for w in p["w_x"]],
                    w_h=[_dec(w) for w in p["w_h"]],
                    b=[_dec(b) for b in p["b"]],
                    w_out=_dec(p["w_out"]), b_out=_dec(p["b_out"]),
                    config=cfg, final_loss=_dec_scalar(p["final_loss"]),
                    loss_curve=_dec(p["loss_curve"]),
                    init_scheme=p["init_scheme"])


def _ols_payload(m: OlsModel) -> dict:
    return {
        "coefficients": _enc(m.coefficients),
        "residual_variance": float(m.residual_variance),
        "r_squared": float(m.r_squared),
        "included_names": list(m.included_names), "n_obs": int(m.n_obs),
    }


def _ols_restore(p: dict) -> OlsModel:
    return OlsModel(coefficients=_dec(p["coefficients"]),
                    residual_variance=float(p["residual_variance"]),
                    r_squared=float(p["r_squared"]),
                    included_names=list(p["included_names"]),
                    n_obs=int(p["n_obs"]))


_CODECS = {
    "pca": (PcaModel, _pca_payload, _pca_restore),
    "dfm": (DfmModel, _dfm_payload, _dfm_restore),
    "ann": (AnnModel, _ann_payload, _ann_restore),
    "rnn": (RnnModel, _rnn_payload, _rnn_restore),
    "ols": (OlsModel, _ols_payload, _ols_restore),
}


def to_document(model) -> dict:
    """Serialize a fitted model to the versioned envelope dict."""
    for kind, (cls, encode, _) in _CODECS.items():
        if isinstance(model, cls):
            return {"format": FORMAT, "version": SCHEMA_VERSION,
                    "kind": kind, "payload": encode(model)}
    raise ConfigError(f"cannot serialize {type(model).__name__}")


def from_document(doc: dict):
    """Rebuild a model from its envelope dict."""
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ConfigError("not a model document")
    if doc.get("version") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported model schema version {doc.get('version')!r}")
    kind = doc.get("kind")
    if kind not in _CODECS:
        raise ConfigError(f"unknown model kind {kind!r}")
    return _CODECS[kind][2](doc["payload"])


def save_model(model, path) -> None:
    doc = to_document(model)
    Path(path).write_text(
        json.dumps(doc, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return from_document(json.load(fh))
