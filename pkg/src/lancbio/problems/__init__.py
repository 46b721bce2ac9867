"""Benchmark problems and the name -> builder registry used by the CLI."""

from __future__ import annotations

import inspect

import numpy as np

from ..errors import ConfigParse, UnknownProblem
from .classification import (
    HyperCleanProblem,
    HyperCleanSpec,
    LogRegProblem,
    LogRegSpec,
    make_hyperclean,
    make_logreg,
)
from .data import (
    corrupt_labels,
    gen_classification_data,
    load_csv_dataset,
    load_idx,
    write_idx,
)
from .nonconvex import NonconvexSinProblem, NonconvexSinSpec, make_nonconvex_sin
from .quadratic import QuadraticBilevel, make_quadratic, random_spd
from .synthetic import SyntheticProblem, SyntheticSpec, make_synthetic

__all__ = [
    "HyperCleanProblem", "HyperCleanSpec", "LogRegProblem", "LogRegSpec",
    "NonconvexSinProblem", "NonconvexSinSpec", "QuadraticBilevel",
    "SyntheticProblem", "SyntheticSpec", "PROBLEMS", "build_problem",
    "corrupt_labels", "gen_classification_data", "load_csv_dataset", "load_idx",
    "make_hyperclean", "make_logreg", "make_nonconvex_sin", "make_quadratic",
    "make_synthetic", "random_spd", "write_idx",
]


def build_quadratic(seed=0, dx=5, dy=10, cond=100.0, frozen=False):
    return make_quadratic(dx=dx, dy=dy, cond=cond, frozen=frozen, seed=seed)


def build_synthetic(seed=0, d=100, c1=0.1, c2=0.5):
    return make_synthetic(SyntheticSpec.random(d=d, seed=seed, c1=c1, c2=c2))


def build_nonconvex_sin(seed=0, d=100, a=1.0, c_scale=1.0):
    rng = np.random.default_rng(seed)
    return make_nonconvex_sin(NonconvexSinSpec(d=d, a=a, c=c_scale * rng.standard_normal(d)))


def _split(features, labels, sizes):
    out, start = [], 0
    for size in sizes:
        out.append((features[start:start + size], labels[start:start + size]))
        start += size
    if start > len(labels):
        raise ConfigParse(f"dataset has {len(labels)} samples, splits need {start}")
    return out


def build_hyperclean(seed=0, n_train=500, n_val=500, n_test=1000, dim=20, classes=10,
                     separation=3.0, corruption=0.5, reg=1e-3,
                     mnist_images=None, mnist_labels=None):
    """Generated clusters by default; an IDX pair replaces them when given."""
    if (mnist_images is None) != (mnist_labels is None):
        raise ConfigParse("mnist_images and mnist_labels must be given together")
    if mnist_images is not None:
        features, labels = load_idx(mnist_images, mnist_labels)
        classes = int(labels.max()) + 1
    else:
        features, labels = gen_classification_data(
            n_train + n_val + n_test, dim, classes, seed, separation=separation
        )
    (Xtr, ytr), (Xval, yval), (Xte, yte) = _split(features, labels, (n_train, n_val, n_test))
    ytr = corrupt_labels(ytr, corruption, classes, seed + 1)
    return make_hyperclean(HyperCleanSpec(Xtr, ytr, Xval, yval, classes, reg, Xte, yte))


def build_logreg(seed=0, n_train=200, n_val=200, n_test=400, dim=20, classes=3,
                 separation=2.0, csv_train=None, csv_val=None, csv_test=None):
    """Generated clusters by default; CSV files replace the splits when given."""
    if csv_train is not None or csv_val is not None:
        if csv_train is None or csv_val is None:
            raise ConfigParse("csv_train and csv_val must be given together")
        Xtr, ytr = load_csv_dataset(csv_train)
        Xval, yval = load_csv_dataset(csv_val)
        Xte, yte = load_csv_dataset(csv_test) if csv_test is not None else (None, None)
        known = [ytr, yval] + ([yte] if yte is not None else [])
        classes = int(max(int(y.max()) for y in known if y.size)) + 1
    else:
        features, labels = gen_classification_data(
            n_train + n_val + n_test, dim, classes, seed, separation=separation
        )
        (Xtr, ytr), (Xval, yval), (Xte, yte) = _split(
            features, labels, (n_train, n_val, n_test)
        )
    return make_logreg(LogRegSpec(Xtr, ytr, Xval, yval, classes, Xte, yte))


PROBLEMS = {
    "quadratic": build_quadratic,
    "synthetic": build_synthetic,
    "hyperclean": build_hyperclean,
    "logreg": build_logreg,
    "nonconvex_sin": build_nonconvex_sin,
}


def problem_params(name: str) -> dict:
    """Parameter names and defaults accepted by a registered builder."""
    if name not in PROBLEMS:
        raise UnknownProblem(f"unknown problem {name!r}; known: {', '.join(sorted(PROBLEMS))}")
    sig = inspect.signature(PROBLEMS[name])
    return {k: p.default for k, p in sig.parameters.items() if k != "seed"}


def build_problem(name: str, seed: int = 0, **params):
    allowed = problem_params(name)
    for key in params:
        if key not in allowed:
            raise ConfigParse(f"field {key!r}: not a parameter of problem {name!r}")
    return PROBLEMS[name](seed=seed, **params)
