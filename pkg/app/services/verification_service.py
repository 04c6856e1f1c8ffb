"""
Verification service - numerical checks of hard equi-partition coarsening
on built-in and randomly generated graphs
"""
import math
import os
import sys
from typing import List

import numpy as np

# Add scripts directory to path
sys.path.append(os.path.join(os.path.dirname(__file__), '..', '..', 'scripts'))
from errors import ContractError
from graph_spectral import (
    Partition, energy_pair, energy_report, hard_assignment, path_graph,
    random_equipartitioned_graph, verify_laplacian_projection,
)

from models.reports import CheckResult, Counterexample, EnergyReport, VerifyReport

PROJECTION_GRAPHS = 50
MIN_ENERGY_INSTANCES = 100
SIGNALS_PER_INSTANCE = 8
ORTHONORMAL_TOL = 1e-12
EIGEN_TOL = 1e-9
ENERGY_TOL = 1e-9

PATH4_CLUSTERS = Partition(((0, 1), (2, 3)))
PATH4_SIGNAL = (4.0, 3.0, 1.0, 0.0)


def _projection_identity_checks(seed: int) -> List[CheckResult]:
    path4 = verify_laplacian_projection(path_graph(4), PATH4_CLUSTERS)
    rng = np.random.default_rng([seed, 1])
    worst, failures = 0.0, 0
    for _ in range(PROJECTION_GRAPHS):
        adjacency, partition = random_equipartitioned_graph(rng)
        result = verify_laplacian_projection(adjacency, partition)
        worst = max(worst, result.max_deviation)
        failures += not result.passed
    return [
        CheckResult(name="projection_path4", passed=path4.passed, detail={"max_deviation": path4.max_deviation}),
        CheckResult(name="projection_random", passed=failures == 0,
                    detail={"graphs": PROJECTION_GRAPHS, "failures": failures, "max_deviation": worst}),
    ]


def _projection_check(seed: int) -> CheckResult:
    """A·Aᵀ = I, and P = Aᵀ·A is a symmetric idempotent with spectrum in [0, 1]"""
    rng = np.random.default_rng([seed, 2])
    orth, idem, sym, eig_low, eig_high = 0.0, 0.0, 0.0, math.inf, -math.inf
    for _ in range(PROJECTION_GRAPHS):
        _, partition = random_equipartitioned_graph(rng)
        a = hard_assignment(partition)
        p = a.T @ a
        orth = max(orth, float(np.abs(a @ a.T - np.eye(a.shape[0])).max()))
        idem = max(idem, float(np.abs(p @ p - p).max()))
        sym = max(sym, float(np.abs(p - p.T).max()))
        eigenvalues = np.linalg.eigvalsh(p)
        eig_low, eig_high = min(eig_low, float(eigenvalues.min())), max(eig_high, float(eigenvalues.max()))
    passed = (orth <= ORTHONORMAL_TOL and idem <= ORTHONORMAL_TOL and sym <= ORTHONORMAL_TOL
              and eig_low >= -EIGEN_TOL and eig_high <= 1.0 + EIGEN_TOL)
    return CheckResult(name="hard_assignment_projection", passed=passed, detail={
        "orthonormality_error": orth, "idempotence_error": idem, "symmetry_error": sym,
        "min_eigenvalue": eig_low, "max_eigenvalue": eig_high,
    })


def _energy_checks(seed: int, instances: int):
    rng = np.random.default_rng([seed, 3])
    ratios, counterexamples = [], []
    piecewise = top = constant = True
    for instance in range(instances):
        adjacency, partition = random_equipartitioned_graph(rng)
        report = energy_report(adjacency, partition, SIGNALS_PER_INSTANCE, seed=seed * 100003 + instance)
        piecewise &= report.piecewise_constant_exact
        top &= report.top_eigvec_contracts
        constant &= report.constant_signal_zero
        counterexamples.extend(Counterexample(trial=instance, signal=int(c["trial"]), ratio=c["ratio"])
                               for c in report.counterexamples)
        ratios.extend(r for _, _, r in report.per_trial if math.isfinite(r))

    ratios = np.asarray(ratios)
    stats = {
        "min": float(ratios.min()), "median": float(np.median(ratios)),
        "mean": float(ratios.mean()), "max": float(ratios.max()),
    } if ratios.size else {}
    energy = EnergyReport(
        trials=instances, ratios=stats, piecewise_constant_exact=piecewise,
        top_eigvec_contracts=top, constant_signal_zero=constant, counterexamples=counterexamples,
    )
    share_above_one = float((ratios > 1.0 + 1e-12).mean()) if ratios.size else 0.0
    checks = [
        CheckResult(name="piecewise_constant_exact", passed=piecewise, detail={"instances": instances}),
        CheckResult(name="top_eigvec_contracts", passed=top, detail={"instances": instances}),
        CheckResult(name="constant_signal_zero", passed=constant, detail={"instances": instances}),
        # random signals may gain energy; recorded, never asserted
        CheckResult(name="random_signal_contraction", passed=not counterexamples, asserted=False,
                    detail={"counterexamples": len(counterexamples), "share_above_one": share_above_one, **stats}),
    ]
    return energy, checks


def _path4_counterexample():
    e_x, e_y = energy_pair(path_graph(4), PATH4_CLUSTERS, PATH4_SIGNAL)
    passed = abs(e_x - 6.0) <= ENERGY_TOL and abs(e_y - 9.0) <= ENERGY_TOL
    check = CheckResult(name="path4_counterexample", passed=passed,
                        detail={"E_X": e_x, "E_Y": e_y, "ratio": e_y / e_x, "signal": list(PATH4_SIGNAL)})
    return check, Counterexample(trial=0, ratio=e_y / e_x, graph="path4")


def run_verification(seed: int = 0, trials: int = MIN_ENERGY_INSTANCES) -> VerifyReport:
    """
    Run every check; trials is the number of random energy instances
    (raised to the minimum of 100)

    Raises:
        ContractError: trials is not positive
    """
    if trials < 1:
        raise ContractError(f"trials must be positive, got {trials}")
    instances = max(trials, MIN_ENERGY_INSTANCES)
    checks = _projection_identity_checks(seed)
    checks.append(_projection_check(seed))
    energy, energy_checks = _energy_checks(seed, instances)
    checks.extend(energy_checks)
    path4_check, path4_example = _path4_counterexample()
    checks.append(path4_check)

    passed = all(c.passed for c in checks if c.asserted)
    for c in checks:
        marker = "✓" if c.passed else ("❌" if c.asserted else "⚠️ ")
        print(f"{marker} {c.name}", file=sys.stderr)
    return VerifyReport(
        **energy.model_dump(exclude={"counterexamples"}),
        counterexamples=[path4_example] + energy.counterexamples,
        seed=seed, passed=passed, signals=instances * SIGNALS_PER_INSTANCE, checks=checks,
    )
