import csv
import io
import json
import math
from fractions import Fraction

import numpy as np
import pytest

from microcount.distributions import JointDistribution, conditional, marginals
from microcount.eprb import (
    Backend,
    EPRBScenario,
    allocation_error,
    best_n,
    chsh,
    condition_battery,
    correlation,
    correlation_bounds,
    correlation_signature,
    correlation_sweep,
    joint_distribution,
    local_chsh,
    marginal_bounds,
    photon_box_scenario,
    planar,
    product_completeness_demo,
    product_spin_state,
    singlet,
    spin_up,
    suggest_n,
    sweep_csv,
)
from microcount.errors import ScenarioError
from microcount.linalg import SubspaceProjector

import oracles

Z = planar(0.0)
CHSH_ANGLES = [0, 90, 45, 135]


def scenario(angles, **kw):
    kw.setdefault("ancilla_dims", (4, 4))
    return EPRBScenario.from_angles(angles, **kw)


def born_cells(sc, x, y):
    return oracles.born_joint(sc.spin_state.amplitudes, sc.direction(x), sc.direction(y))


class TestScenario:
    def test_singlet(self):
        psi = singlet()
        assert psi.norm == pytest.approx(1.0)
        assert np.allclose(psi.amplitudes, oracles.SINGLET)

    def test_full_state_layout(self):
        sc = scenario(CHSH_ANGLES, ancilla_dims=(2, 3))
        assert sc.dim == 4 * 2 * 3
        assert sc.state.norm == pytest.approx(1.0)

    def test_joint_projectors_partition_identity(self):
        sc = scenario(CHSH_ANGLES, ancilla_dims=(2, 2))
        total = sum(sc.joint_projector("a'", "b", s, t).matrix() for s in (1, -1) for t in (1, -1))
        assert np.allclose(total, np.eye(sc.dim), atol=1e-12)

    def test_validation(self):
        with pytest.raises(ScenarioError):
            scenario([0, 0, 0])
        with pytest.raises(ScenarioError):
            scenario([0, 0, math.nan, 0])
        with pytest.raises(ScenarioError):
            EPRBScenario(Z, Z, Z, [0, 0, 0], ancilla_dims=(2, 2))
        with pytest.raises(ScenarioError):
            scenario(CHSH_ANGLES, backend="counting")
        with pytest.raises(ScenarioError):
            scenario(CHSH_ANGLES, backend="counting", n=1000)
        with pytest.raises(ScenarioError):
            scenario(CHSH_ANGLES, backend="montecarlo", n=16, trials=10)
        with pytest.raises(ScenarioError):
            EPRBScenario(Z, Z, Z, Z, spin_state=np.ones(3), ancilla_dims=(1, 1))

    def test_bad_setting_name(self):
        with pytest.raises(ValueError):
            joint_distribution(scenario(CHSH_ANGLES), "b", "a")


class TestJointDistribution:
    def test_parallel_born(self):
        jd = joint_distribution(scenario([0, 0, 0, 0]), "a", "b")
        assert jd[(1, -1)] == pytest.approx(0.5, abs=1e-15)
        assert jd[(1, 1)] == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("theta", [0, 17.3, 60, 90, 123, 180])
    def test_born_matches_oracle(self, theta):
        sc = scenario([0, 0, theta, 0])
        jd = joint_distribution(sc, "a", "b")
        expected = oracles.singlet_cells(math.radians(theta))
        brute = born_cells(sc, "a", "b")
        for o in expected:
            assert jd[o] == pytest.approx(expected[o], abs=1e-12)
            assert jd[o] == pytest.approx(brute[o], abs=1e-12)

    def test_counting_sixty_degrees(self):
        jd = joint_distribution(scenario([0, 0, 60, 60], backend="counting", n=16), "a", "b")
        assert jd.exact and jd.cat_mass == 0
        assert dict(jd.cells) == {
            (1, 1): Fraction(2, 16), (1, -1): Fraction(6, 16), (-1, 1): Fraction(6, 16), (-1, -1): Fraction(2, 16)
        }
        for o, p in oracles.singlet_cells(math.radians(60)).items():
            assert float(jd[o]) == pytest.approx(p, abs=1e-12)

    def test_counting_intervals_contain_born(self):
        sc = scenario([0, 90, 45, 135], backend="counting", n=16)
        for x, y in [("a", "b"), ("a", "b'"), ("a'", "b"), ("a'", "b'")]:
            jd = joint_distribution(sc, x, y)
            brute = born_cells(sc, x, y)
            for o in brute:
                lo, hi = jd.bounds(o)
                assert lo <= Fraction(brute[o]) + Fraction(1, 10**12)
                assert hi >= Fraction(brute[o]) - Fraction(1, 10**12)
                assert hi - lo <= jd.cat_mass

    def test_monte_carlo_within_four_sigma(self):
        sc = scenario([0, 0, 60, 60], backend="montecarlo", n=16, trials=1_000_000, seed=11)
        jd = joint_distribution(sc, "a", "b")
        for o, p in oracles.singlet_cells(math.radians(60)).items():
            assert abs(jd[o] - p) <= 4 * max(jd.stderr[o], 1e-12)

    def test_invariants_checked(self):
        with pytest.raises(ValueError):
            JointDistribution({(1, 1): Fraction(1, 2), (1, -1): Fraction(1, 4), (-1, 1): 0, (-1, -1): 0}, "x")
        with pytest.raises(ValueError):
            JointDistribution({(1, 1): -0.5, (1, -1): 1.5, (-1, 1): 0, (-1, -1): 0}, "x")

    def test_json(self):
        jd = joint_distribution(scenario([0, 0, 60, 60], backend="counting", n=16), "a", "b")
        doc = json.loads(json.dumps(jd.to_json()))
        assert doc["cells"]["++"] == {"num": 1, "den": 8}


class TestMarginalsAndConditionals:
    def test_singlet_marginals(self):
        alice, bob = marginals(joint_distribution(scenario([10, 0, 77, 0]), "a", "b"))
        assert alice[1] == pytest.approx(0.5) and bob[-1] == pytest.approx(0.5)

    def test_product_marginal(self):
        jd = JointDistribution(
            {(1, 1): Fraction(1, 8), (1, -1): Fraction(1, 8), (-1, 1): Fraction(3, 8), (-1, -1): Fraction(3, 8)}, "x"
        )
        alice, _ = marginals(jd)
        assert alice == {1: Fraction(1, 4), -1: Fraction(3, 4)}
        assert conditional(jd, 1)[1] == alice[1]

    def test_degenerate(self):
        jd = JointDistribution({(1, 1): Fraction(1), (1, -1): Fraction(0), (-1, 1): Fraction(0), (-1, -1): Fraction(0)}, "x")
        assert marginals(jd) == ({1: 1, -1: 0}, {1: 1, -1: 0})
        flagged = conditional(jd, -1)
        assert flagged.undefined
        with pytest.raises(KeyError):
            flagged[1]

    def test_parallel_conditional(self):
        jd = joint_distribution(scenario([0, 0, 0, 0], backend="counting", n=8), "a", "b")
        c = conditional(jd, 1)
        assert (c[1], c[-1]) == (0, 1)

    def test_orthogonal_conditional(self):
        c = conditional(joint_distribution(scenario([0, 0, 90, 90]), "a", "b"), 1)
        assert c[1] == pytest.approx(0.5, abs=1e-12)

    def test_marginal_bounds_ignore_remote_setting(self):
        sc = scenario([0, 0, 45, 135], backend="counting", n=16)
        m1 = marginal_bounds(sc, "alice", "a")
        m2 = marginal_bounds(sc.with_(b=planar(1.3), b_prime=planar(2.9)), "alice", "a")
        assert m1 == m2 == {1: (Fraction(1, 2), Fraction(1, 2)), -1: (Fraction(1, 2), Fraction(1, 2))}


class TestConditionBattery:
    def test_singlet_parameter_independence(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            angles = list(rng.uniform(0, 360, 4))
            report = condition_battery(scenario(angles), Backend.BORN)
            assert report["ParameterIndependence"].deviation <= 1e-15

    def test_parallel_outcome_independence(self):
        report = condition_battery(scenario([0, 0, 0, 0], backend="counting", n=8))
        oi = report["OutcomeIndependence"]
        assert oi.deviation == Fraction(1, 2) and oi.holds == "no"
        assert report["ParameterIndependence"].deviation == 0
        assert report.chsh.value == 2

    def test_product_state_all_zero(self):
        state = product_spin_state(spin_up(planar(0.4)), spin_up(planar(2.0)))
        sc = scenario(CHSH_ANGLES, spin_state=state)
        report = condition_battery(sc, Backend.BORN)
        for name in ("ParameterIndependence", "OutcomeIndependence", "Completeness", "MeasurementIndependence"):
            assert report[name].deviation <= 1e-12
            assert report[name].holds == "yes"

    def test_monte_carlo_measurement_dependence(self):
        sc = scenario(CHSH_ANGLES, backend="montecarlo", n=16, trials=1000, seed=1)
        report = condition_battery(sc)
        assert report["MeasurementIndependence"].holds == "no"

    def test_json(self):
        doc = json.loads(json.dumps(condition_battery(scenario(CHSH_ANGLES)).to_json()))
        assert [c["name"] for c in doc["conditions"]] == [
            "ParameterIndependence", "OutcomeIndependence", "Completeness", "MeasurementIndependence"
        ]


class TestCorrelation:
    def test_examples(self):
        for theta, e in [(0, -1), (90, 0), (180, 1)]:
            assert correlation(scenario([0, 0, theta, 0]), "a", "b") == pytest.approx(e, abs=1e-12)

    def test_sweep_matches_cosine(self):
        sc = scenario([0, 0, 0, 0])
        rows = correlation_sweep(sc, np.linspace(0, 180, 181))
        for row in rows:
            assert row["E_born"] == pytest.approx(-math.cos(math.radians(row["theta_deg"])), abs=1e-12)

    def test_counting_bounds_contain_born(self):
        sc = scenario([0, 0, 45, 45], backend="counting", n=16)
        lo, hi = correlation_bounds(sc, "a", "b")
        assert lo <= -math.cos(math.pi / 4) <= hi

    def test_sweep_csv(self):
        sc = scenario([0, 0, 0, 0], n=16, trials=2000, seed=3)
        text = sweep_csv(correlation_sweep(sc, [0, 60]))
        rows = list(csv.DictReader(io.StringIO(text)))
        assert list(rows[0]) == ["theta_deg", "E_born", "E_counting_lo", "E_counting_hi", "E_mc", "stderr"]
        assert float(rows[1]["E_counting_lo"]) == pytest.approx(-0.5)

    def test_signature(self):
        sig = correlation_signature(np.linspace(0.01, 0.2, 20))
        assert sig["quantum"] == pytest.approx(2.0, abs=0.05)
        assert sig["local"] == pytest.approx(1.0, abs=0.05)


class TestCHSH:
    def test_born_optimum(self):
        sc = scenario(CHSH_ANGLES)
        assert chsh(sc).value == pytest.approx(2 * math.sqrt(2), abs=1e-9)
        dirs = [sc.direction(x) for x in ("a", "a'", "b", "b'")]
        assert chsh(sc).value == pytest.approx(oracles.born_chsh(oracles.SINGLET, *dirs), abs=1e-12)

    def test_local_baseline(self):
        assert local_chsh(scenario(CHSH_ANGLES)) == pytest.approx(2.0, abs=1e-12)

    def test_parallel_grid(self):
        assert chsh(scenario([0, 0, 0, 0])).value == pytest.approx(2.0, abs=1e-12)
        assert chsh(scenario([0, 0, 0, 0], backend="counting", n=8)).value == 2

    def test_counting_interval_contains_quantum_value(self):
        r = chsh(scenario(CHSH_ANGLES, ancilla_dims=(8, 8), backend="counting", n=84))
        assert r.lower <= 2 * math.sqrt(2) <= r.upper


class TestProductCompleteness:
    def test_quarter_times_half(self):
        phi = np.array([1, 1, 1, 1], dtype=float)
        chi = np.array([1, 1], dtype=float)
        r = product_completeness_demo(phi, chi, SubspaceProjector(np.eye(4)[:, :1]), SubspaceProjector(np.eye(2)[:, :1]), 4, 2)
        assert r.joint[(1, 1)] == Fraction(1, 8) == r.alice[1] * r.bob[1]
        assert r.holds and r.deviation == 0 and r.n == 8

    def test_phi_in_range(self):
        phi = np.array([1, 2, 0, 0], dtype=float)
        chi = np.array([1, 1, 1, 0], dtype=float)
        PA = SubspaceProjector(np.eye(4)[:, :2])
        PB = SubspaceProjector(np.eye(4)[:, :1])
        r = product_completeness_demo(phi, chi, PA, PB, 2, 3)
        assert r.alice[1] == 1
        assert r.joint[(1, 1)] == r.bob[1] == Fraction(1, 3)

    def test_cat_sides_rejected(self):
        phi = np.array([1, 1, 1], dtype=float)
        P = SubspaceProjector(np.eye(3)[:, :1])
        with pytest.raises(ScenarioError):
            product_completeness_demo(phi, phi, P, P, 2, 3)


class TestPhotonBox:
    def test_report(self):
        r = photon_box_scenario()
        assert r.extra["p(found_A)"] == Fraction(1, 2)
        assert r.extra["p(found_A|found_B)"] == 0
        assert r.extra["p(found_A|empty_B)"] == 1
        assert r["Completeness"].deviation == Fraction(1, 4)
        assert r["OutcomeIndependence"].holds == "no"
        assert r["ParameterIndependence"].holds == "yes"

    def test_born_agrees(self):
        r = photon_box_scenario(Backend.BORN)
        assert r.extra["p(found_A)"] == pytest.approx(0.5)
        assert r["Completeness"].deviation == pytest.approx(0.25)


class TestChoosingN:
    def test_suggest_n_rational(self):
        assert suggest_n(scenario([0, 0, 60, 60])) == 8
        assert suggest_n(scenario([0, 0, 0, 0])) == 2

    def test_suggest_n_irrational(self):
        assert suggest_n(scenario(CHSH_ANGLES)) is None

    def test_best_n(self):
        sc = scenario(CHSH_ANGLES, ancilla_dims=(8, 8))
        n = best_n(sc, max_n=128)
        assert allocation_error(sc, n) <= min(allocation_error(sc, m) for m in range(2, 129, 2))
        assert best_n(scenario([0, 0, 60, 60])) == 8
