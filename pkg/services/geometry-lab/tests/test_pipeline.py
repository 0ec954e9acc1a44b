"""
End-to-end tests – ``dvlab`` runs from argv to files on disk.

Coverage:
  - Every command through main(), JSON + CSV written, stdout = JSON file
  - Byte-identical outputs for --threads 1 and --threads 4
  - Desk-scale acceptance runs (marked slow): M closed forms at n=2,
    vrad identity at n=50, transfer sandwich, negative moments, inclusion
    study on the cube, cube gap, optimizer against exact minima of
    polytopal norms on 2- and 3-dimensional sections
"""

import itertools
import math

import numpy as np
import pytest

from contracts.records import ExperimentReport, SeedSpec

from app.main import main
from app.services.bodies import cross_polytope, cube, lipschitz_constant
from app.services.estimators import estimate_M
from app.services.experiments import EXPERIMENTS
from app.services.measures import MeasureMethod, gaussian_measure
from app.services.sampling import sample_grassmannian, sample_subspace_sphere
from app.services.sphere_opt import OptimizerConfig, minimize_on_sphere

RUNS = [
    ["stats", "--body", "lp:inf:16", "--samples", "40000"],
    ["small-ball", "--body", "lp:1:8", "--samples", "40000", "--eps", "0.7,0.8,0.9"],
    ["moments", "--body", "lp:3:12", "--samples", "40000"],
    ["sections", "--body", "lp:1:10", "--l", "2", "--subspaces", "6", "--restarts", "4", "--inner-samples", "512"],
    ["verify", "cube-gap", "--n", "8,16", "--samples", "40000"],
    ["verify", "me-stability", "--body", "lp:inf:8", "--k", "2", "--subspaces", "6", "--inner-samples", "512"],
]


def _run(argv, out_dir, name, threads, capsys):
    stem = out_dir / f"{name}-t{threads}"
    code = main([*argv, "--seed", "3", "--threads", str(threads), "--format", "both", "--out", str(stem)])
    stdout = capsys.readouterr().out
    return code, stem, stdout


def _files(stem):
    return sorted(p for p in stem.parent.iterdir() if p.name.startswith(stem.name + "."))


# ═══════════════════════════════════════════════════════════════════════
#  Commands end to end
# ═══════════════════════════════════════════════════════════════════════


@pytest.mark.parametrize("argv", RUNS, ids=lambda argv: argv[1] if argv[0] == "verify" else argv[0])
def test_command_end_to_end(argv, out_dir, capsys):
    code, stem, stdout = _run(argv, out_dir, "run", 1, capsys)
    assert code == 0
    json_file = stem.with_suffix(".json")
    assert stdout.encode("utf-8") == json_file.read_bytes()
    report = ExperimentReport.from_json_bytes(json_file.read_bytes())
    assert report.seed == SeedSpec(root=3)
    assert report.passed
    for name, table in report.tables.items():
        csv_file = out_dir / f"{stem.name}.{name}.csv"
        lines = csv_file.read_text().splitlines()
        assert lines[0].split(",") == list(table.columns)
        assert len(lines) == len(table.rows) + 1


def test_stats_surrogate_route_for_cube(out_dir, capsys):
    code, stem, _ = _run(RUNS[0], out_dir, "stats", 1, capsys)
    assert code == 0
    report = ExperimentReport.from_json_bytes(stem.with_suffix(".json").read_bytes())
    assert report.parameters["d_route"] == "GaussianSurrogate"
    assert report.estimates["d"].method.value == "HybridSurrogate"


# ═══════════════════════════════════════════════════════════════════════
#  Determinism across thread counts
# ═══════════════════════════════════════════════════════════════════════


@pytest.mark.parametrize("argv", RUNS, ids=lambda argv: argv[1] if argv[0] == "verify" else argv[0])
def test_outputs_independent_of_threads(argv, out_dir, capsys):
    code_1, stem_1, stdout_1 = _run(argv, out_dir, "det", 1, capsys)
    code_4, stem_4, stdout_4 = _run(argv, out_dir, "det", 4, capsys)
    assert code_1 == code_4 == 0
    assert stdout_1 == stdout_4
    files_1, files_4 = _files(stem_1), _files(stem_4)
    assert [p.name.replace("-t1.", ".") for p in files_1] == [p.name.replace("-t4.", ".") for p in files_4]
    for a, b in zip(files_1, files_4):
        assert a.read_bytes() == b.read_bytes()


# ═══════════════════════════════════════════════════════════════════════
#  Acceptance runs (slow)
# ═══════════════════════════════════════════════════════════════════════


@pytest.mark.slow
@pytest.mark.parametrize(
    ("body", "expected"),
    [(cross_polytope(2), 4.0 / math.pi), (cube(2), 2.0 * math.sqrt(2.0) / math.pi)],
)
def test_M_closed_forms_in_plane(seed, body, expected):
    M = estimate_M(body, 1_000_000, seed)
    assert abs(M.value - expected) <= 4.0 * M.stderr


@pytest.mark.slow
def test_gaussian_cube_mass_mc_against_analytic(seed):
    analytic = gaussian_measure(cube(2), 1.0, MeasureMethod.ANALYTIC_CUBE, seed)
    mc = gaussian_measure(cube(2), 1.0, MeasureMethod.MONTE_CARLO, seed, samples=1_000_000)
    assert abs(mc.value - analytic.value) <= 4.0 * mc.stderr


@pytest.mark.slow
@pytest.mark.parametrize("body", [cross_polytope(50), cube(50)], ids=["l1", "linf"])
def test_vrad_identity_at_n50(seed, body):
    report = EXPERIMENTS["vrad"](body, (1, 3, 5), 100_000, seed=seed, num_subspaces=200)
    assert report.passed, report.failed_verdicts


@pytest.mark.slow
def test_transfer_lower_direction(seed):
    report = EXPERIMENTS["transfer"]((8, 32, 128), 200_000, seed=seed)
    for n in (8, 32, 128):
        assert report.verdicts[f"lower_transfer[cube,n={n}]"]
    assert report.passed, report.failed_verdicts


@pytest.mark.slow
@pytest.mark.parametrize("n", [64, 256])
def test_negative_moments_on_cube(seed, n):
    report = EXPERIMENTS["neg-khinchine"](cube(n), (1.0, 2.0, 4.0, 8.0), 200_000, seed=seed)
    assert report.passed, report.failed_verdicts
    assert report.fitted_constants["c_min_ratio"] > 0.0


@pytest.mark.slow
def test_upper_inclusion_beyond_dvoretzky_dimension(seed):
    report = EXPERIMENTS["upper-inclusion"](cube(256), 16, (2.0, 4.0, 8.0), 200, seed=seed, samples=100_000)
    assert report.passed, report.failed_verdicts
    assert report.parameters["k_hat"] < 16
    assert report.fitted_constants["C_min"] is not None
    assert report.fitted_constants["C_min"] <= 8.0


@pytest.mark.slow
def test_lower_inclusion_study_on_cube(seed):
    report = EXPERIMENTS["lower-inclusion"](cube(256), (1, 2, 4, 16, 64), None, 200, seed=seed, samples=100_000)
    assert report.passed, report.failed_verdicts
    assert "calibrated_c" in report.fitted_constants
    assert report.fitted_constants["calibrated_c"] is not None
    assert report.stability["calibrated_c_fails_at_large_l"]


@pytest.mark.slow
def test_cube_gap_growth(seed):
    report = EXPERIMENTS["cube-gap"]((16, 64, 256, 1024), 200_000, seed=seed)
    assert report.passed, report.failed_verdicts
    assert report.fitted_constants["d_growth_exponent"] >= 0.3
    assert report.stability["k_over_log_n_within_factor_3"]
    assert report.stability["d_over_k_strictly_increasing"]


def _exact_min_norm(body, frame):
    """min of ‖F z‖ over |z| = 1 for the cube or cross-polytope, by enumerating extreme rays.

    ‖F·‖ is piecewise linear and its minimum on the sphere sits on an extreme ray of the
    linear pieces: l tied coordinates for ℓ∞, l − 1 vanishing coordinates for ℓ1.
    """
    n, l = frame.shape
    if body.is_cube:
        rows = np.array(list(itertools.combinations(range(n), l)))
        signs = np.array([(1.0, *s) for s in itertools.product((1.0, -1.0), repeat=l - 1)])
        A = frame[rows]
        A = A[np.abs(np.linalg.det(A)) > 1e-12]
        z = np.linalg.solve(A[:, None, :, :], signs[None, :, :, None])[..., 0].reshape(-1, l)
    else:
        rows = np.array(list(itertools.combinations(range(n), l - 1)))
        z = np.linalg.svd(frame[rows])[2][:, -1, :]
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return float(np.min(body.norm(z @ frame.T)))


@pytest.mark.slow
@pytest.mark.parametrize("body", [cube(20), cross_polytope(20)], ids=["linf", "l1"])
def test_optimizer_against_dense_grid(seed, body):
    points = 100_000
    theta = np.linspace(0.0, math.pi, points, endpoint=False)
    z = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    half_spacing = 0.5 * math.pi / points
    b = lipschitz_constant(body).value
    config = OptimizerConfig()
    for i in range(50):
        E = sample_grassmannian(body.n, 2, seed.child("grid", i))
        exact = _exact_min_norm(body, E.frame)
        grid_min = float(body.norm(z @ E.frame.T).min())
        assert exact * (1.0 - 1e-12) <= grid_min <= exact + b * half_spacing
        result = minimize_on_sphere(body, E.frame, config, seed.child("opt", i))
        assert exact * (1.0 - 1e-12) <= result.value <= exact * (1.0 + 1e-6)
        assert abs(result.value - grid_min) <= 1e-4 * grid_min


@pytest.mark.slow
@pytest.mark.parametrize("body", [cube(20), cross_polytope(20)], ids=["linf", "l1"])
def test_optimizer_against_exact_minimum_in_three_dimensions(seed, body):
    config = OptimizerConfig(restarts=200)
    for i in range(20):
        E = sample_grassmannian(body.n, 3, seed.child("solid", i))
        exact = _exact_min_norm(body, E.frame)
        cloud = sample_subspace_sphere(E, seed.child("cloud", i), size=20_000)
        assert exact * (1.0 - 1e-12) <= float(body.norm(cloud).min())
        result = minimize_on_sphere(body, E.frame, config, seed.child("opt", i))
        assert exact * (1.0 - 1e-12) <= result.value <= exact * (1.0 + 1e-6)
        assert np.linalg.norm(result.point) == pytest.approx(1.0, rel=1e-12)
        assert float(body.norm(result.point)) == pytest.approx(result.value, rel=1e-12)
