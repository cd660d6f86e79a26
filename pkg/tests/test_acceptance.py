"""End-to-end acceptance checks over ten seeds of the bundled scenarios.

Each test records one PASS/FAIL line (see conftest) and then asserts.
"""
import functools
import random
import statistics

import pytest

from merkleguard.cli import locate_scenario
from merkleguard.merkle import fold_root
from merkleguard.metrics import export_csv
from merkleguard.scenario import parse_scenario, scenario_from_dict
from merkleguard.simulation import run_scenario
from merkleguard.verification import Outcome

from test_merkle import brute_force_root

SEEDS = range(1, 11)
ATTACKER = 4
COLLUDERS = (4, 5)
GRAY_NODE = 1
SOURCE = 0


@functools.lru_cache(maxsize=None)
def config(name):
    return parse_scenario(locate_scenario(name))


@functools.lru_cache(maxsize=None)
def run(name, seed):
    return run_scenario(config(name), seed)


def test_1_baseline_honesty(criterion):
    ratios = {s: run("baseline_nodefense", s).delivery_ratio() for s in SEEDS}
    blacklisted = sum(len(run("baseline_nodefense", s).blacklists) for s in SEEDS)
    ok = min(ratios.values()) >= 0.99 and blacklisted == 0
    criterion(1, ok, f"min delivery ratio {min(ratios.values()):.4f} (>= 0.99), "
                     f"blacklisted nodes {blacklisted}")
    assert ok, ratios


def test_2_black_hole_devastation(criterion):
    worst = 0.0
    for s in SEEDS:
        r = run("single-external_nodefense", s)
        t = r.first_insertion()
        assert t is not None, f"seed {s}: forged route never adopted"
        worst = max(worst, r.delivery_ratio(start=t))
    ok = worst <= 0.01
    criterion(2, ok, f"max post-insertion delivery ratio {worst:.4f} (<= 0.01)")
    assert ok


def detection_deadline(result, interval, timeout):
    """Send time of the packet closing the second round after insertion, plus the timeout."""
    t = result.first_insertion()
    after = sorted(p.created for p in result.packets.values() if p.created >= t)
    return after[2 * interval - 1] + timeout


def test_3_defense_recovery(criterion):
    d = config("single-external_defense").defense
    late, gaps = [], []
    for s in SEEDS:
        r = run("single-external_defense", s)
        detected = r.blacklists.get(SOURCE, {}).get(ATTACKER)
        deadline = detection_deadline(r, d.probe_interval, d.timeout)
        if detected is None or detected > deadline:
            late.append((s, detected, deadline))
            continue
        baseline = run("baseline_nodefense", s).delivery_ratio()
        gaps.append(abs(r.delivery_ratio(start=detected) - baseline))
    ok = not late and max(gaps) <= 0.05
    criterion(3, ok, f"late detections {late}, max post-detection gap to baseline "
                     f"{max(gaps, default=float('nan')):.4f} (<= 0.05)")
    assert ok


def test_4_cooperative_detection(criterion):
    single, coop, problems = [], [], []
    for s in SEEDS:
        r = run("cooperative-2_defense", s)
        times = [r.blacklists.get(SOURCE, {}).get(c) for c in COLLUDERS]
        route = r.final_routes.get((SOURCE, 3), ())
        if None in times or any(c in route for c in COLLUDERS):
            problems.append((s, times, route))
            continue
        coop.append(max(times))
        single.append(run("single-external_defense", s).blacklists[SOURCE][ATTACKER])
    ok = not problems and statistics.median(coop) > statistics.median(single)
    criterion(4, ok, f"median completion coop {statistics.median(coop):.2f} s vs single "
                     f"{statistics.median(single):.2f} s, unexcluded {problems}")
    assert ok


def test_5_overhead_ordering(criterion):
    bad = []
    for s in SEEDS:
        base = run("baseline_nodefense", s).metrics.mean_load_bps()
        undefended = run("single-external_nodefense", s).metrics.mean_load_bps()
        single = run("single-external_defense", s).metrics.mean_load_bps()
        coop = run("cooperative-2_defense", s).metrics.mean_load_bps()
        if not (max(base, undefended) < single <= coop):
            bad.append((s, base, undefended, single, coop))
    ok = not bad
    criterion(5, ok, f"load(no defense) < load(single) <= load(coop) on all seeds, violations {bad}")
    assert ok


def test_6_delay_stability(criterion):
    names = ("baseline_nodefense", "single-external_defense", "cooperative-2_defense")
    worst = 1.0
    for s in SEEDS:
        delays = [run(n, s).metrics.mean_delay(after=100.0) for n in names]
        worst = max(worst, max(delays) / min(delays))
    ok = worst <= 1.5
    criterion(6, ok, f"max steady-state delay ratio {worst:.4f} (<= 1.5)")
    assert ok


def test_7_merkle_oracle_equivalence(criterion):
    rng = random.Random(7)
    cases = mismatches = 0
    for _ in range(125):
        for n in range(1, 9):
            leaves = [rng.randbytes(20) for _ in range(n)]
            cases += 1
            mismatches += fold_root(leaves) != brute_force_root(leaves)
    ok = cases >= 1000 and mismatches == 0
    criterion(7, ok, f"{cases} random cases over lengths 1-8, {mismatches} mismatches")
    assert ok


def test_8_no_false_positives(criterion):
    suspected = 0
    rounds = 0
    for s in range(1, 101):
        rng = random.Random(f"acceptance:{s}")
        src, dst = rng.sample(range(10), 2)
        cfg = scenario_from_dict({"name": f"honest-{s}", "placement": "connected",
                                  "placement_seed": s, "defense": {"enabled": True},
                                  "flows": [{"source": src, "destination": dst}]})
        r = run_scenario(cfg, seed=s)
        rounds += sum(r.verdicts.values())
        suspected += r.verdicts[Outcome.BLACK_HOLE_SUSPECTED.value]
        suspected += r.verdicts[Outcome.GRAY_HOLE_SUSPECTED.value]
    ok = suspected == 0 and rounds > 0
    criterion(8, ok, f"100 honest runs, {rounds} rounds judged, {suspected} suspicions")
    assert ok


def test_9_gray_hole(criterion):
    slow = []
    for s in SEEDS:
        r = run("gray-0.5_defense", s)
        through = [v for _, src, v in r.verdict_log if src == SOURCE and GRAY_NODE in v.route]
        first = next((i for i, v in enumerate(through)
                      if v.outcome is Outcome.GRAY_HOLE_SUSPECTED), None)
        if first is None or first >= 3:
            slow.append((s, first))
    data = config("gray-0.5_defense").model_dump()
    data["attackers"][0]["gray_drop_fraction"] = 0.0
    honest_gray = scenario_from_dict(data)
    raised = sum(run_scenario(honest_gray, s).verdicts[Outcome.GRAY_HOLE_SUSPECTED.value]
                 for s in SEEDS)
    ok = not slow and raised == 0
    criterion(9, ok, f"fraction 0.5: late or missing {slow}; fraction 0.0: {raised} raised")
    assert ok


@pytest.mark.parametrize("name", ["baseline_defense", "single-external_defense",
                                  "cooperative-2_defense", "gray-0.5_defense"])
def test_10_determinism(name, tmp_path, criterion):
    a = export_csv(run_scenario(config(name), seed=3).metrics, tmp_path / "a.csv").read_bytes()
    b = export_csv(run_scenario(config(name), seed=3).metrics, tmp_path / "b.csv").read_bytes()
    ok = a == b
    criterion(10, ok, f"{name} seed 3: CSV byte-identical across two runs")
    assert ok
