"""
Repeated train/test evaluation of the model variants.

Every ``(proportion, repeat)`` cell draws one split from a seed derived
only from the master seed and the cell position, so adding or removing
variants never changes the splits. All variants in a cell see the same
split, which makes per-split differences paired.
"""

import csv
import io
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .curves import QuantileFit, build_basis
from .lmgp import VARIANTS, EMConfig
from .metrics import CDFCurve, el1
from .model import coefficient_matrix, fit_model

logger = logging.getLogger(__name__)

__all__ = ["EvaluationReport", "evaluate", "stratified_split", "paired_comparison"]

_MAX_ATTEMPTS = 100


def stratified_split(codes, proportion, rng, min_train=2, stratified=True):
    """Training and test row indices with every category in training.

    With ``stratified`` each category contributes ``round(proportion * n_k)``
    training rows (at least ``min_train``, at most ``n_k - 1`` when that
    still leaves ``min_train``). Otherwise rows are drawn jointly and the
    draw is repeated until every category has ``min_train`` training rows.
    """
    codes = np.asarray(codes)
    if not 0 < proportion < 1:
        raise ValueError("training proportion must lie in (0, 1)")
    cats = np.unique(codes)
    n = codes.size
    for _ in range(_MAX_ATTEMPTS):
        if stratified:
            parts = []
            for k in cats:
                idx = np.flatnonzero(codes == k)
                nk = idx.size
                t = max(int(round(proportion * nk)), min_train)
                t = min(t, nk - 1 if nk - 1 >= min_train else nk)
                parts.append(rng.choice(idx, size=t, replace=False))
            train = np.sort(np.concatenate(parts))
        else:
            train = np.sort(rng.choice(n, size=int(round(proportion * n)), replace=False))
        counts = np.bincount(codes[train], minlength=cats.max() + 1)[cats]
        test = np.setdiff1d(np.arange(n), train)
        if np.all(counts >= min_train) and test.size:
            return train, test
    raise ValueError(f"could not draw a split with every category in training after "
                     f"{_MAX_ATTEMPTS} attempts")


@dataclass
class EvaluationReport:
    """EL1 results of a repeated split study.

    ``records`` holds one row per (variant, proportion, repeat):
    ``variant, proportion, repeat, split_seed, n_test, el1, failed``.
    ``per_config`` maps the same key to the per-test-configuration EL1
    values. Wall-clock timings are kept apart so the tabular outputs stay
    reproducible.
    """

    variants: tuple
    proportions: tuple
    repeats: int
    seed: int
    reference: str
    records: list = field(default_factory=list)
    per_config: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    def values(self, variant, proportion):
        return np.array([r["el1"] for r in self.records
                         if r["variant"] == variant and r["proportion"] == proportion])

    def mean(self, variant, proportion):
        v = self.values(variant, proportion)
        v = v[np.isfinite(v)]
        return float(v.mean()) if v.size else float("nan")

    def table(self):
        """Mean EL1 with variants as rows and proportions as columns."""
        return {v: [self.mean(v, p) for p in self.proportions] for v in self.variants}

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["variant", "proportion", "repeat", "split_seed", "n_test", "el1", "failed"])
        for r in self.records:
            w.writerow([r["variant"], repr(r["proportion"]), r["repeat"], r["split_seed"],
                        r["n_test"], repr(r["el1"]), int(r["failed"])])
        return buf.getvalue()

    def to_text(self, include_timing=False):
        lines = [f"Average EL1 over {self.repeats} split(s), seed {self.seed}, "
                 f"reference: {self.reference}"]
        head = "variant".ljust(10) + "".join(f"{p:>10g}" for p in self.proportions)
        lines += [head, "-" * len(head)]
        for v, row in self.table().items():
            lines.append(v.ljust(10) + "".join(f"{m:>10.4f}" for m in row))
        failed = sum(int(r["failed"]) for r in self.records)
        if failed:
            lines.append(f"{failed} fit(s) failed and were excluded")
        if include_timing and self.timing:
            lines.append("fit time (s): " + ", ".join(
                f"{v}={t:.1f}" for v, t in sorted(self.timing.items())))
        return "\n".join(lines) + "\n"


def paired_comparison(report, a, b, proportion):
    """One-sided paired t-test of ``mean EL1(a) < mean EL1(b)`` over repeats.

    Returns ``(mean difference a - b, t statistic, p-value)``.
    """
    va, vb = report.values(a, proportion), report.values(b, proportion)
    ok = np.isfinite(va) & np.isfinite(vb)
    d = va[ok] - vb[ok]
    if d.size < 2:
        raise ValueError("need at least two paired repeats")
    res = stats.ttest_1samp(d, 0.0, alternative="less")
    return float(d.mean()), float(res.statistic), float(res.pvalue)


def _reference_curves(dataset, basis, B, oracle):
    if oracle is not None:
        if len(oracle) != len(dataset):
            raise ValueError("oracle does not match the dataset")
        return [oracle.curve(i) for i in range(len(dataset))]
    return [CDFCurve.from_quantile(QuantileFit(b), basis) for b in B]


def evaluate(dataset, variants=("gp", "lmgp"), train_proportions=(0.3, 0.4, 0.5, 0.6, 0.7),
             repeats=10, seed=0, oracle=None, n_components=12, svd_threshold=None,
             order=3, num_knots=20, config=None, el1_points=1000, stratified=True):
    """Repeated split evaluation.

    For every proportion and repeat, draw a split, fit each variant on
    the training rows and compare the predicted CDF at every test
    configuration with a reference curve: the true CDF when ``oracle`` is
    given, otherwise the smoothed CDF of the held-out replicates. The
    per-split score is the mean EL1 over the test configurations.
    """
    variants = tuple(variants)
    for v in variants:
        if v not in VARIANTS:
            raise ValueError(f"unknown variant {v!r}; expected one of {VARIANTS}")
    proportions = tuple(float(p) for p in train_proportions)
    if repeats < 1:
        raise ValueError("repeats must be positive")
    config = config or EMConfig()
    basis = build_basis(order, num_knots)
    B = coefficient_matrix(dataset.samples, basis)
    refs = _reference_curves(dataset, basis, B, oracle)
    codes = dataset.codes

    report = EvaluationReport(variants=variants, proportions=proportions, repeats=int(repeats),
                              seed=int(seed), reference="oracle" if oracle is not None else "smoothed")
    timing = {v: 0.0 for v in variants}
    for prop in proportions:
        for r in range(int(repeats)):
            split_seed = int(np.random.SeedSequence(
                [int(seed), int(round(prop * 1e6)), r]).generate_state(1)[0])
            rng = np.random.default_rng(split_seed)
            train, test = stratified_split(codes, prop, rng, stratified=stratified)
            train_ds = dataset.subset(train)
            for v in variants:
                t0 = time.perf_counter()
                failed = False
                try:
                    model = fit_model(train_ds, v, n_components=n_components,
                                      svd_threshold=svd_threshold, order=order,
                                      num_knots=num_knots, config=config, B=B[train])
                    errs = []
                    for i in test:
                        fit = model.predict_fit(dataset.X[i], model.category_code(dataset.Z[i]))
                        errs.append(el1(refs[i], CDFCurve.from_quantile(fit, basis),
                                        num=el1_points))
                    errs = np.array(errs)
                except (np.linalg.LinAlgError, FloatingPointError) as exc:
                    logger.warning("fit failed for %s at proportion %g repeat %d: %s",
                                   v, prop, r, exc)
                    failed = True
                    errs = np.full(test.size, np.nan)
                timing[v] += time.perf_counter() - t0
                report.records.append({
                    "variant": v, "proportion": prop, "repeat": r, "split_seed": split_seed,
                    "n_test": int(test.size), "el1": float(errs.mean()), "failed": failed,
                })
                report.per_config[(v, prop, r)] = errs
    report.timing = timing
    return report
