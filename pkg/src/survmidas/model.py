"""Fitted models and their JSON representation."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .data import Dataset
from .exceptions import SchemaError
from .midas import MidasDictionary, aggregate


@dataclass(frozen=True, eq=False)
class FittedModel:
    """Coefficients on the raw aggregated scale plus everything needed to predict.

    ``beta[0]`` is the intercept and ``beta[1:]`` holds ``K`` groups of
    ``dictionary.L`` coefficients in covariate order.
    """

    beta: np.ndarray
    names: tuple
    dictionary: MidasDictionary
    lam: float
    alpha: float
    s: float
    t: float
    m: int
    reporting_delay: bool = False

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        if beta.shape != (1 + len(self.names) * self.dictionary.L,):
            raise SchemaError("coefficient count does not match covariates and dictionary size")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "names", tuple(self.names))

    def predict(self, ds: Dataset) -> np.ndarray:
        if tuple(ds.covariate_names) != self.names:
            missing = [n for n in self.names if n not in ds.covariate_names]
            if missing:
                raise SchemaError(f"dataset lacks model covariates: {', '.join(missing)}")
            order = [ds.covariate_names.index(n) for n in self.names]
            ds = Dataset(ds.ids, ds.time, ds.status, ds.panel[:, order, :], ds.s, ds.m,
                         self.names, ds.reporting_delay)
        if ds.d != self.dictionary.d:
            raise SchemaError(f"dataset has {ds.d} lags, model expects {self.dictionary.d}")
        return expit(aggregate(ds, self.dictionary).x @ self.beta)

    def to_dict(self) -> dict:
        L = self.dictionary.L
        groups = [{"name": n, "coefs": self.beta[1 + k * L: 1 + (k + 1) * L].tolist()}
                  for k, n in enumerate(self.names)]
        return {
            "intercept": float(self.beta[0]),
            "groups": groups,
            "dictionary": self.dictionary.to_dict(),
            "lambda": self.lam,
            "alpha": self.alpha,
            "s": self.s,
            "t": self.t,
            "m": self.m,
            "reporting_delay": self.reporting_delay,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "FittedModel":
        try:
            dictionary = MidasDictionary.from_dict(obj["dictionary"])
            names = tuple(g["name"] for g in obj["groups"])
            coefs = [float(obj["intercept"])]
            for g in obj["groups"]:
                if len(g["coefs"]) != dictionary.L:
                    raise SchemaError(f"group {g['name']!r} has {len(g['coefs'])} coefficients, "
                                      f"expected {dictionary.L}")
                coefs.extend(float(c) for c in g["coefs"])
            return cls(np.array(coefs), names, dictionary, float(obj["lambda"]),
                       float(obj["alpha"]), float(obj["s"]), float(obj["t"]), int(obj["m"]),
                       bool(obj.get("reporting_delay", False)))
        except KeyError as exc:
            raise SchemaError(f"model file lacks field {exc.args[0]!r}") from None


def save_model(model: FittedModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2) + "\n")


def load_model(path) -> FittedModel:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    return FittedModel.from_dict(obj)
