"""Named model presets and the plain-text model file format.

A model file is TOML: top-level scalars for drifts and the Brownian
correlation, and one table per component::

    preset = "ex1"          # optional base; the keys below override it
    drift_x = 0.03
    drift_y = 0.04
    rho = 0.5

    [vol_x]                 # exponential-OU factor (also [vol_y])
    kappa = 0.025
    a = 0.3125
    b = -0.125
    tau0 = 0.0
    stationary_init = false

    [ar1]                   # daily AR(1) factors, replaces vol_x/vol_y
    phi_x = 0.5
    phi_y = 0.7
    rho_prime = 0.0
    a_x = 0.3125
    b_x = -0.125
    a_y = 0.45
    b_y = -0.325
    stationary_init = true

    [jump_x]                # also [jump_y]
    kind = "compound_poisson"   # none | compound_poisson | alpha_stable
    intensity = 2.0
    size_sd = 1.0
"""

from __future__ import annotations

import dataclasses
import sys
from pathlib import Path

from .simkit import Ar1VolSpec, BivariateModelSpec, JumpSpec, OuExpVolSpec

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["PRESETS", "preset", "model_from_dict", "model_to_dict", "load_model", "dumps_model", "save_model"]

_OU_X = OuExpVolSpec(kappa=0.025, a=0.3125, b=-0.125)
_OU_Y = OuExpVolSpec(kappa=0.030, a=0.45, b=-0.325)
_BASE = dict(drift_x=0.03, drift_y=0.04, rho=0.5)

PRESETS: dict[str, BivariateModelSpec] = {
    "ex1": BivariateModelSpec(**_BASE, vol_x=_OU_X, vol_y=_OU_Y),
    "ex2": BivariateModelSpec(
        **_BASE,
        vol_x=_OU_X,
        vol_y=_OU_Y,
        jump_x=JumpSpec.compound_poisson(2.0, 1.0),
        jump_y=JumpSpec.compound_poisson(3.0, 1.0),
    ),
    "ex3": BivariateModelSpec(
        **_BASE,
        vol_x=_OU_X,
        vol_y=_OU_Y,
        jump_x=JumpSpec.alpha_stable(0.5, 1.0),
        jump_y=JumpSpec.alpha_stable(0.9, 1.0),
    ),
    "ex4": BivariateModelSpec(
        **_BASE,
        ar1=Ar1VolSpec(
            phi_x=0.5,
            phi_y=0.7,
            rho_prime=0.0,
            a_x=_OU_X.a,
            b_x=_OU_X.b,
            a_y=_OU_Y.a,
            b_y=_OU_Y.b,
            stationary_init=True,
        ),
    ),
}


def preset(name: str, rho_prime: float | None = None) -> BivariateModelSpec:
    """Preset model by name; ``rho_prime`` overrides the AR(1) innovation correlation."""
    try:
        model = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    if rho_prime is not None:
        if model.ar1 is None:
            raise ValueError(f"preset {name!r} has no AR(1) volatility")
        model = dataclasses.replace(model, ar1=dataclasses.replace(model.ar1, rho_prime=rho_prime))
    return model


def _merge(spec_cls, base, table: dict):
    known = {f.name for f in dataclasses.fields(spec_cls)}
    extra = set(table) - known
    if extra:
        raise ValueError(f"unknown keys for {spec_cls.__name__}: {sorted(extra)}")
    if base is None:
        return spec_cls(**table)
    return dataclasses.replace(base, **table)


def model_from_dict(d: dict) -> BivariateModelSpec:
    d = dict(d)
    base = preset(d.pop("preset")) if "preset" in d else None
    top = {k: d.pop(k) for k in ("drift_x", "drift_y", "rho") if k in d}
    kw = dict(_BASE if base is None else {k: getattr(base, k) for k in ("drift_x", "drift_y", "rho")})
    kw.update({k: float(v) for k, v in top.items()})
    if "ar1" in d:
        kw["ar1"] = _merge(Ar1VolSpec, base.ar1 if base else None, d.pop("ar1"))
    elif base is not None and base.ar1 is not None and not ({"vol_x", "vol_y"} & set(d)):
        kw["ar1"] = base.ar1
    if "ar1" not in kw:
        for name in ("vol_x", "vol_y"):
            kw[name] = _merge(OuExpVolSpec, getattr(base, name) if base else None, d.pop(name, {}))
    for name in ("jump_x", "jump_y"):
        kw[name] = _merge(JumpSpec, getattr(base, name) if base else JumpSpec(), d.pop(name, {}))
    if d:
        raise ValueError(f"unknown model keys: {sorted(d)}")
    return BivariateModelSpec(**kw)


def model_to_dict(model: BivariateModelSpec) -> dict:
    out: dict = {"drift_x": model.drift_x, "drift_y": model.drift_y, "rho": model.rho}
    if model.ar1 is not None:
        out["ar1"] = dataclasses.asdict(model.ar1)
    else:
        out["vol_x"] = dataclasses.asdict(model.vol_x)
        out["vol_y"] = dataclasses.asdict(model.vol_y)
    out["jump_x"] = dataclasses.asdict(model.jump_x)
    out["jump_y"] = dataclasses.asdict(model.jump_y)
    return out


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (int, float)):
        return repr(float(v))
    raise TypeError(f"cannot write {type(v).__name__} to a model file")


def dumps_model(model: BivariateModelSpec) -> str:
    d = model_to_dict(model)
    lines = [f"{k} = {_toml_value(v)}" for k, v in d.items() if not isinstance(v, dict)]
    for k, v in d.items():
        if isinstance(v, dict):
            lines.append("")
            lines.append(f"[{k}]")
            lines.extend(f"{kk} = {_toml_value(vv)}" for kk, vv in v.items())
    return "\n".join(lines) + "\n"


def load_model(path: str | Path) -> BivariateModelSpec:
    with open(path, "rb") as fh:
        return model_from_dict(tomllib.load(fh))


def save_model(model: BivariateModelSpec, path: str | Path) -> None:
    Path(path).write_text(dumps_model(model))
