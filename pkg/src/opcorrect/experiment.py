"""Persistence and orchestration for the two-wing study: manifests, solves, sweeps, reports."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import linalg
from .exceptions import ContractViolation, SingularOperator
from .frank_wolfe import SolverConfig, solve
from .objective import (
    CorrectionProblem,
    ObservationSelector,
    TrainingSet,
    fd_gradient,
    gradient,
    inverse_error,
    virtue_proxy,
)
from .wings import DatasetConfig, WingConfig, build_case, default_test_angles, generate_dataset

logger = logging.getLogger(__name__)

MANIFEST_FORMAT = "opcorrect-manifest/1"
DEFAULT_DELTA_FRACTION = 0.1
BAND_HALF_WIDTH = 3
RANK_TOL = 1e-10

SWEEP_COLUMNS = (
    "kind",
    "lambda",
    "status",
    "train_inverse_error",
    "test_inverse_error",
    "kappa_corrected",
    "kappa_corrected_over_kappa_M",
    "virtue_proxy",
    "proxy_times_sigma_min_sq",
    "nuclear_norm",
    "nuclear_norm_over_delta",
    "numerical_rank_C",
    "band_energy_ratio",
    "iterations",
    "termination",
)

REPORT_SERIES = {
    "kappa_ratio": "kappa_corrected_over_kappa_M",
    "virtue_proxy": "virtue_proxy",
    "test_inverse_error": "test_inverse_error",
    "nuclear_norm_ratio": "nuclear_norm_over_delta",
}


def fmt(x):
    return f"{x:.17g}"


def write_json(path, obj):
    linalg.atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- manifest


@dataclass
class Manifest:
    """A generated case study on disk. Matrix paths are relative to ``root``."""

    root: str
    wing_config: WingConfig
    train_config: DatasetConfig
    test_config: DatasetConfig
    files: dict
    wing1_size: int

    def path(self, key):
        return os.path.join(self.root, self.files[key])

    def load(self, key):
        return linalg.load_matrix(self.path(key))

    def problem(self, lam=0.0, delta=None, split="train"):
        M = self.load("M")
        Q, D = self.load(f"Q_{split}"), self.load(f"D_{split}")
        if delta is None:
            delta = default_delta(M)
        return CorrectionProblem(M, ObservationSelector.full(M.shape[0]), TrainingSet(Q, D), lam, delta)


def default_delta(M, fraction=DEFAULT_DELTA_FRACTION):
    return fraction * linalg.nuclear_norm(M)


def resolve_delta(delta, M):
    """``delta`` may be a number, ``None``/``"auto"`` (0.1 ||M||_*) or ``"<f>*nuclear"``."""
    if delta is None or delta == "auto":
        return default_delta(M)
    if isinstance(delta, str):
        if delta.endswith("*nuclear"):
            return float(delta[: -len("*nuclear")]) * linalg.nuclear_norm(M)
        delta = float(delta)
    if not delta > 0:
        raise ContractViolation("delta must be positive")
    return float(delta)


def generate(manifest_path, wing_config=None, train_config=None, test_config=None):
    """Build the case study and write T, M, train/test Q and D and the manifest."""
    wing_config = wing_config or WingConfig()
    train_config = train_config or DatasetConfig()
    test_config = test_config or DatasetConfig(angles_deg=tuple(default_test_angles()), seed=train_config.seed + 1)
    case = build_case(wing_config)
    root = os.path.dirname(os.path.abspath(manifest_path))
    files = {
        "T": "T.txt",
        "M": "M.txt",
        "Q_train": "Q_train.txt",
        "D_train": "D_train.txt",
        "Q_test": "Q_test.txt",
        "D_test": "D_test.txt",
    }
    train = generate_dataset(case.T, case.selector, case.panels, train_config)
    test = generate_dataset(case.T, case.selector, case.panels, test_config)
    for key, mat in (
        ("T", case.T),
        ("M", case.M),
        ("Q_train", train.Q),
        ("D_train", train.D),
        ("Q_test", test.Q),
        ("D_test", test.D),
    ):
        linalg.save_matrix(os.path.join(root, files[key]), mat)
    doc = {
        "format": MANIFEST_FORMAT,
        "wing_config": asdict(wing_config),
        "train": asdict(train_config),
        "test": asdict(test_config),
        "observation": {"state_dim": int(case.T.shape[0]), "indices": list(case.selector.indices)},
        "wing1_size": len(case.wing1),
        "files": files,
    }
    write_json(manifest_path, doc)
    return load_manifest(manifest_path)


def _dataset_config(d):
    return DatasetConfig(angles_deg=tuple(d["angles_deg"]), speed=d["speed"], noise_std=d["noise_std"], seed=d["seed"])


def load_manifest(manifest_path, validate=True):
    with open(manifest_path) as fh:
        doc = json.load(fh)
    if doc.get("format") != MANIFEST_FORMAT:
        raise ContractViolation(f"{manifest_path}: not a {MANIFEST_FORMAT} manifest")
    wc = doc["wing_config"]
    m = Manifest(
        root=os.path.dirname(os.path.abspath(manifest_path)),
        wing_config=WingConfig(
            panels_per_wing=wc["panels_per_wing"],
            chord=wc["chord"],
            thickness_ratio=wc["thickness_ratio"],
            second_wing_offset=tuple(wc["second_wing_offset"]),
        ),
        train_config=_dataset_config(doc["train"]),
        test_config=_dataset_config(doc["test"]),
        files=doc["files"],
        wing1_size=int(doc["wing1_size"]),
    )
    if validate:
        validate_manifest(m)
    return m


def _header_shape(path):
    with open(path) as fh:
        first = fh.readline().split()
    try:
        return int(first[0]), int(first[1])
    except (IndexError, ValueError):
        raise ContractViolation(f"{path}: bad matrix header") from None


def validate_manifest(m):
    """Check matrix dimensions from file headers before any compute."""
    for key in ("T", "M", "Q_train", "D_train", "Q_test", "D_test"):
        if key not in m.files:
            raise ContractViolation(f"manifest lacks {key}")
        if not os.path.exists(m.path(key)):
            raise ContractViolation(f"missing matrix file {m.path(key)}")
    T = _header_shape(m.path("T"))
    M = _header_shape(m.path("M"))
    if T[0] != T[1] or M[0] != M[1]:
        raise ContractViolation("T and M must be square")
    if M[0] != m.wing1_size or M[0] > T[0]:
        raise ContractViolation(f"M is {M[0]}x{M[1]} but wing1_size is {m.wing1_size} and T is {T[0]}x{T[1]}")
    for split, cfg in (("train", m.train_config), ("test", m.test_config)):
        Q = _header_shape(m.path(f"Q_{split}"))
        D = _header_shape(m.path(f"D_{split}"))
        n_cols = len(cfg.angles_deg)
        if Q != (M[0], n_cols) or D != (M[0], n_cols):
            raise ContractViolation(f"{split} set shapes Q{Q} D{D} do not match ({M[0]}, {n_cols})")


# -- metrics


def dominant_diagonals(M, count=3):
    """Offsets ``j - i`` of the ``count`` diagonals of ``M`` with largest mean |entry|."""
    n = M.shape[0]
    offsets = np.arange(-(n - 1), n)
    means = np.array([np.mean(np.abs(np.diagonal(M, k))) for k in offsets])
    order = np.argsort(-means, kind="stable")
    return sorted(int(k) for k in offsets[order[:count]])


def band_mask(shape, offsets, half_width=BAND_HALF_WIDTH):
    i, j = np.indices(shape)
    mask = np.zeros(shape, dtype=bool)
    for k in offsets:
        mask |= np.abs((j - i) - k) <= half_width
    return mask


def band_energy_ratio(C, M, half_width=BAND_HALF_WIDTH):
    """Fraction of ``||C||_F^2`` inside bands around the three dominant diagonals of ``M``."""
    C = np.asarray(C)
    total = float(np.sum(C * C))
    if total == 0.0:
        return 0.0
    mask = band_mask(C.shape, dominant_diagonals(M), half_width)
    return float(np.sum(C[mask] ** 2)) / total


def correction_metrics(C, train_problem, test_problem, kappa_M):
    A = train_problem.M + C
    s = linalg.singular_values(A)
    proxy = virtue_proxy(train_problem, C)
    nuc = linalg.nuclear_norm(C)
    kappa = s[0] / s[-1]
    return {
        "train_inverse_error": inverse_error(train_problem, C),
        "test_inverse_error": inverse_error(test_problem, C),
        "kappa_corrected": kappa,
        "kappa_corrected_over_kappa_M": kappa / kappa_M,
        "virtue_proxy": proxy,
        "proxy_times_sigma_min_sq": proxy * s[-1] ** 2,
        "nuclear_norm": nuc,
        "nuclear_norm_over_delta": nuc / train_problem.delta,
        "numerical_rank_C": linalg.numerical_rank(C, RANK_TOL),
        "band_energy_ratio": band_energy_ratio(C, train_problem.M),
    }


# -- single solve


def solve_manifest(manifest, lam, delta=None, config=None):
    """Solve one correction problem; return ``(result, metrics)``."""
    train = manifest.problem(lam=lam)
    delta = resolve_delta(delta, train.M)
    train = train.with_params(delta=delta)
    test = manifest.problem(lam=lam, delta=delta, split="test")
    result = solve(train, config or SolverConfig())
    metrics = correction_metrics(result.correction, train, test, linalg.condition_number(train.M))
    metrics.update(
        {
            "lambda": lam,
            "delta": delta,
            "iterations": result.iterations_run,
            "termination": result.termination,
        }
    )
    return result, metrics


def history_csv(result):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "objective", "gap", "nuclear_norm", "step"])
    steps = list(result.step_history) + [""]
    for k, (f, g, nn) in enumerate(zip(result.objective_history, result.gap_history, result.nuclear_norm_history)):
        step = steps[k] if k < len(steps) else ""
        w.writerow([k, fmt(f), fmt(g), fmt(nn), "" if step == "" else fmt(step)])
    return buf.getvalue()


def write_solve_outputs(out_dir, result, metrics):
    os.makedirs(out_dir, exist_ok=True)
    linalg.save_matrix(os.path.join(out_dir, "C.txt"), result.correction)
    linalg.atomic_write_text(os.path.join(out_dir, "history.csv"), history_csv(result))
    summary = {k: (fmt(v) if isinstance(v, float) else v) for k, v in metrics.items()}
    write_json(os.path.join(out_dir, "summary.json"), summary)


# -- sweep


def default_lambda_values():
    return tuple(float(x) for x in np.logspace(-2, 7, 29))


@dataclass(frozen=True)
class SweepConfig:
    lambda_values: tuple = field(default_factory=default_lambda_values)
    delta: object = None
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        lams = tuple(float(x) for x in self.lambda_values)
        if not lams:
            raise ContractViolation("lambda_values must be non-empty")
        if any(x < 0 or not np.isfinite(x) for x in lams):
            raise ContractViolation("lambda values must be finite and nonnegative")
        if any(b <= a for a, b in zip(lams, lams[1:])):
            raise ContractViolation("lambda values must be sorted ascending and distinct")
        object.__setattr__(self, "lambda_values", lams)


def _sweep_row(args):
    manifest_path, lam, delta, solver_config = args
    manifest = load_manifest(manifest_path, validate=False)
    try:
        result, metrics = solve_manifest(manifest, lam, delta, solver_config)
    except (SingularOperator, ArithmeticError, RuntimeError) as exc:
        logger.warning("lambda=%g failed: %s", lam, exc)
        return {"kind": "lambda", "lambda": lam, "status": f"failed: {exc}"}, None
    row = {"kind": "lambda", "status": "ok"}
    row.update(metrics)
    return row, result


def baseline_row(manifest, delta):
    train = manifest.problem()
    delta = resolve_delta(delta, train.M)
    train = train.with_params(delta=delta)
    test = manifest.problem(delta=delta, split="test")
    kappa_M = linalg.condition_number(train.M)
    row = {"kind": "baseline", "lambda": "", "status": "ok", "iterations": 0, "termination": "baseline"}
    row.update(correction_metrics(np.zeros_like(train.M), train, test, kappa_M))
    row["band_energy_ratio"] = 0.0
    return row


def run_sweep(manifest_path, config=None, jobs=1, keep_results=False):
    """Solve once per lambda, each from ``C = 0``; rows come back sorted by lambda.

    Returns ``(rows, results)``; ``results`` maps lambda to the
    :class:`SolveResult` when ``keep_results`` is set.
    """
    config = config or SweepConfig()
    manifest = load_manifest(manifest_path)
    tasks = [(os.path.abspath(manifest_path), lam, config.delta, config.solver) for lam in config.lambda_values]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outputs = list(pool.map(_sweep_row, tasks))
    else:
        outputs = [_sweep_row(t) for t in tasks]
    rows = [baseline_row(manifest, config.delta)]
    results = {}
    for row, result in sorted(outputs, key=lambda o: o[0]["lambda"]):
        rows.append(row)
        if keep_results and result is not None:
            results[row["lambda"]] = result
    return rows, results


def rows_to_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for row in rows:
        out = []
        for col in SWEEP_COLUMNS:
            v = row.get(col, "")
            if isinstance(v, (float, np.floating)):
                v = fmt(float(v))
            out.append(v)
        w.writerow(out)
    return buf.getvalue()


_INT_COLUMNS = {"numerical_rank_C", "iterations"}
_STR_COLUMNS = {"kind", "status", "termination"}


def read_sweep_csv(path):
    """Parse a sweep CSV; raises ``ContractViolation`` naming the offending row."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != SWEEP_COLUMNS:
            raise ContractViolation(f"{path}: header does not match the sweep schema")
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            row = {}
            try:
                for col in SWEEP_COLUMNS:
                    v = raw[col]
                    if v is None:
                        raise ValueError(f"missing column {col}")
                    if col in _STR_COLUMNS or v == "":
                        row[col] = v
                    elif col in _INT_COLUMNS:
                        row[col] = int(v)
                    else:
                        row[col] = float(v)
            except ValueError as exc:
                raise ContractViolation(f"{path}: row {lineno}: {exc}") from None
            if row["kind"] not in ("baseline", "lambda"):
                raise ContractViolation(f"{path}: row {lineno}: unknown kind {row['kind']!r}")
            rows.append(row)
    if not any(r["kind"] == "lambda" for r in rows):
        raise ContractViolation(f"{path}: sweep has no lambda rows")
    return rows


def write_report(rows, out_dir):
    """Four plot-data files: log10(lambda), value, and the baseline as a reference column."""
    lam_rows = [r for r in rows if r["kind"] == "lambda" and r["status"] == "ok"]
    if not lam_rows:
        raise ContractViolation("no successful lambda rows to report")
    base = next((r for r in rows if r["kind"] == "baseline"), None)
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for name, col in REPORT_SERIES.items():
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["log10_lambda", col, "baseline"])
        ref = "" if base is None else fmt(float(base[col]))
        for r in lam_rows:
            lam = float(r["lambda"])
            x = fmt(np.log10(lam)) if lam > 0 else "-inf"
            w.writerow([x, fmt(float(r[col])), ref])
        path = os.path.join(out_dir, f"{name}.csv")
        linalg.atomic_write_text(path, buf.getvalue())
        written.append(path)
    return written


# -- sweep analysis


def activation_threshold(rows, level=0.99):
    """Smallest lambda from which every row has ``nuclear_norm_over_delta >= level``.

    Returns ``(lambda_star, clean)`` where ``clean`` says whether every row
    below ``lambda_star`` is strictly inactive.
    """
    lam_rows = sorted((r for r in rows if r["kind"] == "lambda"), key=lambda r: float(r["lambda"]))
    active = [float(r["nuclear_norm_over_delta"]) >= level for r in lam_rows]
    star = None
    for i in range(len(active)):
        if all(active[i:]):
            star = float(lam_rows[i]["lambda"])
            break
    clean = star is not None and not any(a for a, r in zip(active, lam_rows) if float(r["lambda"]) < star)
    return star, clean


def spearman(x, y):
    return float(stats.spearmanr(x, y).statistic)


# -- gradient check


def check_gradient(n=8, N=5, lam=0.3, seed=7, step=1e-6):
    """Max relative gap between closed-form and central-difference gradients."""
    if n > 20:
        raise ContractViolation("n must be <= 20 for the finite-difference check")
    rng = np.random.default_rng(seed)
    M = np.eye(n) * 3.0 + 0.5 * rng.standard_normal((n, n))
    n_obs = max(1, n // 2 + 1)
    indices = tuple(sorted(rng.choice(n, size=n_obs, replace=False).tolist()))
    data = TrainingSet(rng.standard_normal((n, N)), rng.standard_normal((n_obs, N)))
    problem = CorrectionProblem(M, ObservationSelector(n, indices), data, lam, 1.0)
    C = 0.05 * rng.standard_normal((n, n))
    g = gradient(problem, C)
    fd = fd_gradient(problem, C, step)
    return float(np.max(np.abs(g - fd) / (1.0 + np.abs(fd))))
