"""Acceptance suite: one test per criterion, each printing a PASS line.

Every tolerance is frozen here or in perturba.config; nothing is
calibrated at run time.  Run with ``pytest -s tests/test_acceptance.py``
to see the per-criterion lines.
"""

import time

import numpy as np
import pytest

from conftest import (
    random_blockdiag_unitary,
    random_partial_isometry,
    random_projection,
    random_unitary,
    small_rotation,
)
from oracles import nearest_normalizer_oracle, triangular_distance_best
from perturba.algebra import (
    BlockComposition,
    MasaPartition,
    ampliate,
    containment_defect,
    full_pattern,
    masa_distance,
    arveson_distance,
    nest_pattern,
    normalizer_defect,
    pisometry_defect,
    random_near_identity_embedding,
    random_skew,
)
from perturba.config import (
    AMBIENT_INDEPENDENCE_FACTOR,
    CHAIN_RECOVERY_FACTOR,
    DEFAULT_TOLS,
    NORMALIZER_ORACLE_FACTOR,
    STABILITY_MEDIAN_THRESHOLDS,
)
from perturba.errors import DefectTooLarge
from perturba.numkernel import exp_skew, herm_eig, operator_norm, polar_svd
from perturba.perturb import (
    align_block_diagonal_range,
    block_triangularize,
    check_rank_stability,
    conjugating_unitary,
    fix_partial_isometry,
    frame_triangularize,
    partial_isometry_rank,
    round_to_projection,
)
from perturba.regular import fix_normalizer, regular_stabilize
from perturba.stability import stabilize_nest_inclusion
from perturba.tower import TowerConfig, generate_tower, perturb_tower, recover_chain, refine_pattern

SIZES = (4, 6, 8, 12, 16, 24, 32, 48, 64)


@pytest.fixture(scope="module", autouse=True)
def warm_kernels():
    # one-time jit compilation stays out of the timed suites
    herm_eig(np.eye(3, dtype=complex))
    polar_svd(np.eye(3, dtype=complex))


def _random_comp(n, rng, max_blocks=4):
    r = int(rng.integers(2, max_blocks + 1))
    cuts = sorted(rng.choice(np.arange(1, n), size=r - 1, replace=False))
    sizes, prev = [], 0
    for c in list(cuts) + [n]:
        sizes.append(int(c - prev))
        prev = c
    return BlockComposition(tuple(sizes))


# --- criterion 1: structural exactness, 200 trials per correction ------------

def _suite_project(n, rng):
    q = random_projection(n, int(rng.integers(0, n + 1)), rng)
    noise = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    noise = (noise + noise.conj().T) / 2
    b = q + noise * (float(rng.uniform(0.0, 0.1)) / operator_norm(noise))
    _, cert = round_to_projection(b)
    return cert.structural_residual, [("2delta", cert.correction_distance, cert.bound_claimed)]


def _suite_pisofix(n, rng):
    v = random_partial_isometry(n, int(rng.integers(1, n + 1)), rng)
    noise = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    v = v + noise * (float(rng.uniform(0.0, 0.08)) / operator_norm(noise))
    _, cert = fix_partial_isometry(v)
    return cert.structural_residual, [("pisofix", cert.correction_distance, cert.bound_claimed)]


def _suite_conjugate(n, rng):
    p = random_projection(n, int(rng.integers(1, n)), rng)
    u0 = small_rotation(n, float(rng.uniform(0.01, 0.5)), rng)
    q = u0 @ p @ u0.conj().T
    _, cert = conjugating_unitary(p, q)
    return cert.structural_residual, [("sqrt2", cert.correction_distance, cert.bound_claimed)]


def _suite_align(n, rng):
    comp = _random_comp(n, rng, max_blocks=3)
    d = random_blockdiag_unitary(comp, rng)
    ranks = np.where(rng.random(n) > 0.3, 1.0, 0.0)
    wbar = d @ np.diag(ranks).astype(complex)
    v = small_rotation(n, float(rng.uniform(0.0, 0.05)), rng) @ wbar
    noise = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    w = v + noise * (float(rng.uniform(0.0, 0.01)) / operator_norm(noise))
    _, cert = align_block_diagonal_range(w, comp, v)
    return cert.structural_residual, []


def _suite_triangularize(n, rng):
    comp = _random_comp(n, rng)
    d = random_blockdiag_unitary(comp, rng)
    if rng.random() < 0.5:
        cut = np.where(rng.random(n) > 0.2, 1.0, 0.0)
        d = d @ np.diag(cut).astype(complex)
    v = d @ small_rotation(n, float(rng.uniform(0.001, 0.04)), rng)
    vhat, cert = block_triangularize(v, comp)
    sub = 0.0
    for i in range(2, comp.r + 1):
        for j in range(1, i):
            sub = max(sub, float(np.max(np.abs(vhat[comp.block_slice(i), comp.block_slice(j)]))))
    assert sub == 0.0
    return cert.structural_residual, []


def _suite_frame(n, rng):
    comp = _random_comp(n, rng, max_blocks=3)
    ranks = [int(rng.integers(0, s + 1)) for s in comp.sizes]
    diag_p = np.zeros(n)
    diag_q = np.zeros(n)
    for k in range(comp.r):
        sl = comp.block_slice(k + 1)
        idx = np.arange(sl.start, sl.stop)
        diag_p[idx[: ranks[k]]] = 1.0
        diag_q[idx[: ranks[k]]] = 1.0
    if not diag_p.any():
        diag_p[0] = diag_q[0] = 1.0
    P = np.diag(diag_p).astype(complex)
    Q = np.diag(diag_q).astype(complex)
    b0 = np.diag(diag_p).astype(complex)
    u = small_rotation(n, float(rng.uniform(0.0, 0.03)), rng)
    b = P @ (u @ b0 @ u.conj().T) @ Q
    b = polar_svd(b).isometric_part
    if operator_norm(b.conj().T @ b - Q) > 1e-11 or operator_norm(b @ b.conj().T - P) > 1e-11:
        return 0.0, []
    _, cert = frame_triangularize(b, comp, P, Q)
    return cert.structural_residual, []


def _suite_normfix(n, rng):
    pattern = full_pattern(n)
    masa = MasaPartition.full_diagonal(n)
    perm = rng.permutation(n)
    keep = rng.random(n) > 0.25
    v0 = np.zeros((n, n), dtype=complex)
    for i in range(n):
        if keep[i]:
            v0[i, perm[i]] = np.exp(2j * np.pi * rng.random())
    eps = float(rng.uniform(0.0, 0.05))
    v = small_rotation(n, eps / 2 + 1e-6, rng) @ v0 @ small_rotation(n, eps / 2 + 1e-6, rng)
    vhat, cert = fix_normalizer(v, pattern, masa)
    nz = np.argwhere(np.abs(vhat) > 0)
    assert len(set(nz[:, 0])) == len(nz) and len(set(nz[:, 1])) == len(nz)
    return cert.structural_residual, []


BOUND_VIOLATIONS = {"2delta": 0, "sqrt2": 0, "pisofix": 0, "n1delta": 0}


def test_criterion_1_structural_exactness():
    suites = {
        "round_to_projection": _suite_project,
        "fix_partial_isometry": _suite_pisofix,
        "conjugating_unitary": _suite_conjugate,
        "align_block_diagonal_range": _suite_align,
        "block_triangularize": _suite_triangularize,
        "frame_triangularize": _suite_frame,
        "fix_normalizer": _suite_normfix,
    }
    started = time.perf_counter()
    worst = {}
    for name, suite in suites.items():
        rng = np.random.default_rng(abs(hash(name)) % 2**32)
        top = 0.0
        for trial in range(200):
            n = int(SIZES[int(rng.integers(0, len(SIZES)))])
            residual, bounds = suite(n, rng)
            assert residual <= DEFAULT_TOLS.struct_tol(n), (name, trial, n, residual)
            top = max(top, residual / DEFAULT_TOLS.struct_tol(n))
            for tag, dist, bound in bounds:
                if bound is not None and dist > bound + 1e-13:
                    BOUND_VIOLATIONS[tag] += 1
        worst[name] = top
    elapsed = time.perf_counter() - started
    assert elapsed <= 60.0, f"runtime {elapsed:.1f}s exceeds 60s"
    print(f"\nACCEPTANCE 1: PASS structural exactness, 200 trials x 7 ops, "
          f"worst residual/tolerance {max(worst.values()):.3g}, runtime {elapsed:.1f}s")


def test_criterion_2_explicit_bounds():
    # criterion 1 already accumulated the projection and conjugation bounds;
    # add dedicated sweeps so this criterion stands alone, then the word bound
    rng = np.random.default_rng(2202)
    for _ in range(300):
        n = int(rng.integers(2, 33))
        q = random_projection(n, int(rng.integers(0, n + 1)), rng)
        noise = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        noise = (noise + noise.conj().T) / 2
        b = q + noise * (float(rng.uniform(0.0, 0.12)) / operator_norm(noise))
        _, cert = round_to_projection(b)
        if cert.correction_distance > cert.bound_claimed + 1e-13:
            BOUND_VIOLATIONS["2delta"] += 1
    for _ in range(300):
        n = int(rng.integers(2, 33))
        p = random_projection(n, int(rng.integers(1, n)), rng)
        u0 = small_rotation(n, float(rng.uniform(0.01, 0.6)), rng)
        _, cert = conjugating_unitary(p, u0 @ p @ u0.conj().T)
        if cert.correction_distance > cert.bound_claimed + 1e-13:
            BOUND_VIOLATIONS["sqrt2"] += 1
    pattern = nest_pattern(BlockComposition((1, 1, 1)))
    masa = MasaPartition.uniform(3, 2)
    for trial in range(60):
        emb = random_near_identity_embedding(pattern, 2, 5e-3, (2202, trial))
        _, report = regular_stabilize(emb, masa, pattern, masa)
        if not report.bound_ok:
            BOUND_VIOLATIONS["n1delta"] += 1
    assert BOUND_VIOLATIONS["2delta"] == 0
    assert BOUND_VIOLATIONS["sqrt2"] == 0
    assert BOUND_VIOLATIONS["pisofix"] == 0
    assert BOUND_VIOLATIONS["n1delta"] == 0
    print("\nACCEPTANCE 2: PASS explicit bounds (projection 2*defect, conjugation "
          "sqrt(2)*distance, word n1*edge) held with zero violations")


def test_criterion_3a_masa_sandwich():
    rng = np.random.default_rng(33)
    for trial in range(100):
        n = int(rng.integers(2, 9))
        # random partition of 1..n
        ids = rng.integers(0, int(rng.integers(1, n + 1)), size=n)
        cells = {}
        for i, c in enumerate(ids, start=1):
            cells.setdefault(int(c), []).append(i)
        masa = MasaPartition(n, tuple(tuple(v) for v in cells.values()))
        w = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        res = masa_distance(w, masa)
        assert res.exhaustive
        assert res.commutator_bound / 2 <= res.estimate + 1e-12
        assert res.estimate <= 2 * res.commutator_bound + 1e-12
    print("\nACCEPTANCE 3a: PASS masa-distance sandwich over exhaustive "
          "projection enumeration, 100 inputs, n <= 8")


def test_criterion_3b_triangular_distance_oracle():
    rng = np.random.default_rng(34)
    worst = 0.0
    for n in (3, 4):
        comp = BlockComposition((1,) * n)
        mask = nest_pattern(comp).mask()
        for trial in range(6):
            x = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
            got = arveson_distance(x, comp)
            want = triangular_distance_best(x, mask, restarts=3, seed=trial)
            worst = max(worst, abs(got - want))
            assert abs(got - want) <= 1e-5
    print(f"\nACCEPTANCE 3b: PASS triangular distance matches convex minimization "
          f"within 1e-5 (worst gap {worst:.2e})")


def test_criterion_3c_nearest_normalizer_oracle():
    rng = np.random.default_rng(35)
    checked = 0
    worst = 0.0
    while checked < 40:
        n = int(rng.integers(2, 6))
        perm = rng.permutation(n)
        keep = rng.random(n) > 0.3
        v0 = np.zeros((n, n), dtype=complex)
        for i in range(n):
            if keep[i]:
                v0[i, perm[i]] = np.exp(2j * np.pi * rng.random())
        eps = float(rng.choice([0.08, 0.03, 0.01]))
        v = small_rotation(n, eps / 2, rng) @ v0 @ small_rotation(n, eps / 2, rng)
        try:
            _, cert = fix_normalizer(v, full_pattern(n), MasaPartition.full_diagonal(n))
        except DefectTooLarge:
            continue
        dstar, _ = nearest_normalizer_oracle(
            v, {(i, j) for i in range(1, n + 1) for j in range(1, n + 1)})
        if dstar <= 1e-12:
            continue
        ratio = cert.correction_distance / dstar
        worst = max(worst, ratio)
        assert ratio <= NORMALIZER_ORACLE_FACTOR
        checked += 1
    print(f"\nACCEPTANCE 3c: PASS normalizer correction within {NORMALIZER_ORACLE_FACTOR}x "
          f"of exhaustive nearest (worst ratio {worst:.3f}, {checked} trials)")


def test_criterion_4_stability_pipeline():
    started = time.perf_counter()
    comp1 = BlockComposition((2, 2, 2))
    pattern1 = nest_pattern(comp1)
    a2 = nest_pattern(comp1.scaled(2))
    medians = {}
    for ei, eps in enumerate((1e-2, 1e-3, 1e-4)):
        dists = []
        for trial in range(50):
            emb = random_near_identity_embedding(pattern1, 2, eps, (42, ei, trial))
            psi, report = stabilize_nest_inclusion(emb, a2)
            assert report.residual <= 1e-9
            assert report.pattern_exact
            dists.append(report.unit_distance_max)
        medians[eps] = float(np.median(dists))
        assert medians[eps] <= STABILITY_MEDIAN_THRESHOLDS[eps]
    assert medians[1e-4] < medians[1e-3] < medians[1e-2]
    elapsed = time.perf_counter() - started
    assert elapsed <= 300.0
    print(f"\nACCEPTANCE 4: PASS nest stability pipeline (2,2,2)x2: exact outputs, "
          f"medians {medians[1e-2]:.2e} > {medians[1e-3]:.2e} > {medians[1e-4]:.2e}, "
          f"runtime {elapsed:.1f}s")


def test_criterion_5_rank_stability():
    rng = np.random.default_rng(55)
    count = 0
    while count < 1000:
        n = int(rng.integers(2, 17))
        k = int(rng.integers(1, n + 1))
        v = random_partial_isometry(n, k, rng)
        u1 = small_rotation(n, float(rng.uniform(0.0, 0.4)), rng)
        u2 = small_rotation(n, float(rng.uniform(0.0, 0.4)), rng)
        w = u1 @ v @ u2
        if operator_norm(v - w) >= 1.0:
            continue
        assert check_rank_stability(v, w)
        count += 1
    print("\nACCEPTANCE 5: PASS rank stability on 1000 partial-isometry pairs "
          "at distance < 1")


def test_criterion_6_unitarity_preservation():
    rng = np.random.default_rng(66)
    count = 0
    while count < 200:
        n = int(rng.integers(4, 25))
        comp = _random_comp(n, rng)
        v = random_blockdiag_unitary(comp, rng) @ small_rotation(
            n, float(rng.uniform(0.001, 0.06)), rng)
        vhat, cert = block_triangularize(v, comp)
        if cert.correction_distance >= 1.0:
            continue
        assert operator_norm(vhat @ vhat.conj().T - np.eye(n)) <= DEFAULT_TOLS.struct_tol(n)
        assert operator_norm(vhat.conj().T @ vhat - np.eye(n)) <= DEFAULT_TOLS.struct_tol(n)
        count += 1
    print("\nACCEPTANCE 6: PASS unitarity preserved on 200 unitary inputs with "
          "correction distance < 1")


def test_criterion_7_ambient_independence():
    pattern = nest_pattern(BlockComposition((1, 1, 1)))
    medians = {}
    for mult in (2, 4):
        masa = MasaPartition.uniform(3, mult)
        dists = []
        for trial in range(50):
            emb = random_near_identity_embedding(pattern, mult, 1e-3, (77, mult, trial))
            _, report = regular_stabilize(emb, masa, pattern, masa)
            dists.append(report.unit_distance_max)
        medians[mult] = float(np.median(dists))
    ratio = max(medians[2], medians[4]) / min(medians[2], medians[4])
    assert ratio <= AMBIENT_INDEPENDENCE_FACTOR
    print(f"\nACCEPTANCE 7: PASS ambient independence: medians {medians[2]:.3e} (x2) vs "
          f"{medians[4]:.3e} (x4), ratio {ratio:.2f} <= {AMBIENT_INDEPENDENCE_FACTOR}")


def test_criterion_8_tower_recovery():
    base = nest_pattern(BlockComposition((1, 1)))
    pats = [base]
    for _ in range(3):
        pats.append(refine_pattern(pats[-1], 2))
    schedule = tuple(0.01 * 2.0 ** (-k) for k in range(1, 5))
    worst_ratio = 0.0
    for run in range(10):
        cfg = TowerConfig(depth=4, patterns=tuple(pats), multiplicities=(2, 2, 2, 2),
                          eps_schedule=schedule, seed=880 + run)
        tower = generate_tower(cfg)
        perturbed = perturb_tower(tower, cfg)
        _, chain = recover_chain(perturbed, cfg)
        n = cfg.ambient_dim
        for k, c in enumerate(chain.c_values):
            assert chain.residuals[k] <= DEFAULT_TOLS.struct_tol(n)
            assert chain.regular_flags[k]
            assert c <= CHAIN_RECOVERY_FACTOR * schedule[k]
            worst_ratio = max(worst_ratio, c / schedule[k])
        assert chain.partial_sums[-1] <= CHAIN_RECOVERY_FACTOR * sum(schedule)
    print(f"\nACCEPTANCE 8: PASS depth-4 tower recovery, c_k <= "
          f"{CHAIN_RECOVERY_FACTOR} * eps_k (worst ratio {worst_ratio:.2f}), sums bounded")


def test_criterion_9_determinism(tmp_path):
    from perturba.experiments import ExperimentConfig, run_experiment

    for name, cfg in {
        "stability": ExperimentConfig(experiment="stability", composition=(1, 1),
                                      multiplicity=2, epsilons=(1e-2,), trials=3, seed=5),
        "tower": ExperimentConfig(experiment="tower", pattern="t2", multiplicity=2,
                                  epsilons=(0.01,), trials=2, seed=5, depth=3),
    }.items():
        a_csv, a_man = tmp_path / f"{name}_a.csv", tmp_path / f"{name}_a.json"
        b_csv, b_man = tmp_path / f"{name}_b.csv", tmp_path / f"{name}_b.json"
        run_experiment(cfg, a_csv, a_man)
        run_experiment(cfg, b_csv, b_man)
        assert a_csv.read_bytes() == b_csv.read_bytes()
        assert a_man.read_bytes() == b_man.read_bytes()
    print("\nACCEPTANCE 9: PASS reruns with identical manifests are bit-identical")
