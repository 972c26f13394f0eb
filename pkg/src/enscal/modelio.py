"""Plain-text serialisation of fitted models.

One ``key = value`` pair per line, ``#`` starts a comment, vectors are
space-separated.  The first non-comment key is always ``format_version``::

    format_version = 1
    kind = bma_normal
    grouping = 1|2-11
    bias_mode = linear
    beta0 = 0.13 0.21
    beta1 = 0.98 0.98
    weights = 0.33 0.067
    sigma = 1.05
"""
from __future__ import annotations

import datetime as dt

from .bma import BiasCorrection, BmaGammaModel, BmaNormalModel, BmaTruncNormalModel
from .data import GroupingScheme
from .emos import EmosModel
from .errors import DataError

FORMAT_VERSION = 1


def _vec(v):
    return " ".join(repr(float(x)) for x in v)


def dump_model(model, target_date: dt.date | None = None, training_dates=None) -> str:
    lines = [f"format_version = {FORMAT_VERSION}", f"kind = {model.kind}",
             f"grouping = {model.grouping.to_string()}"]
    if target_date is not None:
        lines.append(f"target_date = {target_date.isoformat()}")
    if training_dates:
        lines.append(f"training_first = {training_dates[0].isoformat()}")
        lines.append(f"training_last = {training_dates[-1].isoformat()}")
        lines.append(f"training_days = {len(training_dates)}")
    if isinstance(model, BmaNormalModel):
        lines += [
            f"estimator = {model.estimator}",
            f"bias_mode = {model.bias.mode}",
            f"beta0 = {_vec(model.bias.beta0)}",
            f"beta1 = {_vec(model.bias.beta1)}",
            f"weights = {_vec(model.weights)}",
            f"sigma = {model.sigma!r}",
        ]
    elif isinstance(model, BmaGammaModel):
        lines += [
            f"b0 = {model.b0!r}", f"b1 = {model.b1!r}",
            f"c0 = {model.c0!r}", f"c1 = {model.c1!r}",
            f"weights = {_vec(model.weights)}",
        ]
    elif isinstance(model, BmaTruncNormalModel):
        lines += [
            f"beta0 = {_vec(model.beta0)}",
            f"beta1 = {_vec(model.beta1)}",
            f"sigma = {model.sigma!r}",
            f"weights = {_vec(model.weights)}",
        ]
    elif isinstance(model, EmosModel):
        lines += [
            f"a0 = {model.a0!r}", f"a = {_vec(model.a)}",
            f"b0 = {model.b0!r}", f"b1 = {model.b1!r}",
        ]
    else:
        raise TypeError(f"cannot serialise {type(model).__name__}")
    diag = getattr(model, "diagnostics", None)
    if diag is not None:
        lines.append(f"iterations = {diag.iterations}")
        lines.append(f"converged = {'true' if diag.converged else 'false'}")
        flags = getattr(diag, "flags", ())
        if flags:
            lines.append(f"flags = {' '.join(flags)}")
    return "\n".join(lines) + "\n"


def parse_fields(text: str) -> dict:
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"model file line {n}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


def load_model(text: str):
    f = parse_fields(text)
    if f.get("format_version") != str(FORMAT_VERSION):
        raise DataError(f"unsupported model format version {f.get('format_version')!r}")
    try:
        g = GroupingScheme.from_string(f["grouping"])
        kind = f["kind"]

        def vec(key):
            return tuple(float(x) for x in f[key].split())

        if kind == "bma_normal":
            bias = BiasCorrection(f["bias_mode"], vec("beta0"), vec("beta1"))
            return BmaNormalModel(g, bias, vec("weights"), float(f["sigma"]), f.get("estimator", "ml"))
        if kind == "bma_gamma":
            return BmaGammaModel(g, float(f["b0"]), float(f["b1"]), float(f["c0"]), float(f["c1"]), vec("weights"))
        if kind == "bma_truncnormal":
            return BmaTruncNormalModel(g, vec("beta0"), vec("beta1"), float(f["sigma"]), vec("weights"))
        if kind in ("emos_normal", "emos_truncnormal"):
            return EmosModel(g, kind.split("_", 1)[1], float(f["a0"]), vec("a"), float(f["b0"]), float(f["b1"]))
    except KeyError as exc:
        raise DataError(f"model file lacks field {exc.args[0]!r}") from None
    raise DataError(f"unknown model kind {f.get('kind')!r}")
