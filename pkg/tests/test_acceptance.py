"""One test per acceptance criterion, each at its stated tolerance.

Every test prints a single ``[ACn] PASS|FAIL ...`` line; the lines are also
collected into a terminal-summary section. Running this file directly
(``python3 tests/test_acceptance.py``) prints the same lines without pytest.
"""

import time

import numpy as np
import pytest
from desk import config, quadratic_problem, synthetic_problem

from cqggadmm.compression import (
    CensorPolicy,
    QuantizedPayload,
    QuantizerState,
    deserialize,
    quantize,
    reconstruct,
    serialize,
    step_size,
)
from cqggadmm.config import parse_spec_text
from cqggadmm.engine import CQ_GGADMM, C_GGADMM, GGADMM, RunConfig, run
from cqggadmm.experiment import run_experiment
from cqggadmm.kernels import stochastic_round
from cqggadmm.metrics import (
    EnergyModel,
    fit_linear_rate,
    iterations_to_threshold,
    residuals,
    transmission_energy,
)
from cqggadmm.topology import generate_random_bipartite, incidence_set


class Criterion:
    def __init__(self, tag, title, budget_s=None):
        self.tag, self.title, self.budget_s = tag, title, budget_s
        self.details = []
        self.ok = True

    def check(self, cond, detail):
        self.details.append(detail)
        self.ok = self.ok and bool(cond)

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        elapsed = time.perf_counter() - self.t0
        if exc_type is not None:
            self.ok = False
            self.details.append(f"raised {exc_type.__name__}: {exc}")
        if self.budget_s is not None:
            self.check(elapsed < self.budget_s, f"{elapsed:.2f}s < {self.budget_s}s")
        else:
            self.details.append(f"{elapsed:.2f}s")
        self.line = f"[{self.tag}] {'PASS' if self.ok else 'FAIL'} {self.title}: " + "; ".join(
            self.details
        )
        print(self.line)
        return False


def _finish(crit, report):
    report.append(crit.line)
    assert crit.ok, crit.line


def test_ac01_topology_identities(acceptance_report):
    with Criterion("AC01", "incidence identities on 100 random graphs", 1.0) as c:
        rng = np.random.default_rng(2024)
        failures = 0
        for seed in range(100):
            nh = int(rng.integers(1, 7))
            nt = int(rng.integers(1, 13 - nh))
            topo = generate_random_bipartite(nh, nt, float(rng.uniform(0.1, 1.0)), seed)
            inc = incidence_set(topo)
            m, p = inc.m_signed, inc.m_unsigned
            D, A, C = inc.degree_matrix, inc.adjacency, inc.c_block
            ok = (
                topo.n_workers <= 12
                and m.dtype.kind == "i"
                and np.array_equal(2 * (D - A), m @ m.T)
                and np.array_equal(4 * D, m @ m.T + p @ p.T)
                and np.array_equal(A, C + C.T)
            )
            failures += not ok
        c.check(failures == 0, f"{100 - failures}/100 graphs exact")
    _finish(c, acceptance_report)


def test_ac02_quantizer_statistics(acceptance_report):
    with Criterion("AC02", "unbiasedness and variance ceiling, d=8", 10.0) as c:
        d, draws = 8, 100_000
        rng = np.random.default_rng(7)
        worst_mean, worst_var = 0.0, 0.0
        for _ in range(10):
            prev = rng.normal(size=d)
            prev_bits = int(rng.integers(1, 6))
            prev_range = float(rng.uniform(0.5, 2.0))
            state = QuantizerState(
                prev, prev_bits, 0.9, prev_range, step_size(prev_range, prev_bits)
            )
            theta = prev + rng.uniform(-1, 1, size=d) * prev_range
            payload, _, _ = quantize(theta, state, rng)
            delta, levels = payload.step, (1 << payload.bits) - 1
            c_vals = (theta - prev + payload.range) / delta
            u = rng.random((draws, d))
            codes = stochastic_round(np.tile(c_vals, draws), u.reshape(-1), levels).reshape(draws, d)
            recon = prev + delta * codes.astype(float) - payload.range
            err = recon - theta
            mean_ratio = np.max(np.abs(err.mean(axis=0))) / (4 * delta / np.sqrt(draws))
            var_ratio = np.mean(np.sum(err**2, axis=1)) / (d * delta**2)
            worst_mean, worst_var = max(worst_mean, mean_ratio), max(worst_var, var_ratio)
        c.check(worst_mean <= 1.0, f"max |mean err| = {worst_mean:.3f} x 4D/sqrt(n)")
        c.check(worst_var <= 1.0, f"E||e||^2 = {worst_var:.3f} x dD^2")
    _finish(c, acceptance_report)


def test_ac03_step_size_law(acceptance_report):
    with Criterion("AC03", "step law on CQ runs of >= 200 iterations") as c:
        omega = 0.97
        for name, (topo, objs), rho in (
            ("quadratic", quadratic_problem()[:2], 1.0),
            ("synthetic", synthetic_problem(), 5.0),
        ):
            # the engine raises InvariantViolation inline if the law breaks
            result = run(config(CQ_GGADMM, rho=rho, max_iters=300, omega=omega), topo, objs)
            steps = np.array([r.steps for r in result.records])
            stepwise = np.all(steps[1:] <= omega * steps[:-1])
            k = np.arange(steps.shape[0])[:, None]
            geometric = np.all(steps <= omega**k * steps[0] * (1 + 1e-12))
            ratios = steps[1:] / steps[:-1]
            c.check(
                len(result.records) >= 200 and stepwise and geometric,
                f"{name}: {len(result.records)} iters, max ratio {ratios.max():.6f}",
            )
    _finish(c, acceptance_report)


def test_ac04_censoring_residual(acceptance_report):
    with Criterion("AC04", "censoring residual <= tau0 xi^k") as c:
        cases = [
            ("quadratic", quadratic_problem()[:2], 1.0, CensorPolicy(1.0, 0.97)),
            ("synthetic", synthetic_problem(), 5.0, CensorPolicy(5.0, 0.97)),
        ]
        for name, (topo, objs), rho, policy in cases:
            for variant in (C_GGADMM, CQ_GGADMM):
                result = run(config(variant, rho=rho, max_iters=300, censor=policy), topo, objs)
                worst = max(
                    max(rec.censor_residual) / (policy.tau0 * policy.xi**rec.k)
                    for rec in result.records
                )
                censored = sum(len(r.transmitted) - r.n_transmitted for r in result.records)
                c.check(
                    worst <= 1.0 and censored > 0,
                    f"{name}/{variant}: worst ratio {worst:.3f}, {censored} censored",
                )
    _finish(c, acceptance_report)


def _max_distance(state, star):
    return float(np.max(np.linalg.norm(state.thetas() - star, axis=1)))


def test_ac05_exact_consensus(acceptance_report):
    with Criterion("AC05", "GGADMM reaches the closed-form optimum", 5.0) as c:
        topo, objs, star = quadratic_problem()
        dist = []
        result = run(
            RunConfig(GGADMM, rho=1.0, max_iters=2000),
            topo,
            objs,
            sinks=[lambda rec, row, state: dist.append(_max_distance(state, star))],
        )
        hit = next((i + 1 for i, v in enumerate(dist) if v <= 1e-6), None)
        last = result.rows[-1]
        r, s = residuals(result.state, result.records[-1].sent_prev)
        primal = max(np.linalg.norm(v) for v in r.values())
        dual = max(np.linalg.norm(v) for v in s.values())
        c.check(dist[-1] <= 1e-6, f"max error {dist[-1]:.2e} (<= 1e-6 from k={hit})")
        c.check(primal <= 1e-8 and last.primal_res <= 1e-8, f"primal {primal:.1e}")
        c.check(dual <= 1e-8 and last.dual_res <= 1e-8, f"dual {dual:.1e}")
    _finish(c, acceptance_report)


def test_ac06_compressed_convergence(acceptance_report):
    with Criterion("AC06", "CQ-GGADMM converges under compression", 30.0) as c:
        topo, objs, star = quadratic_problem()
        dist = []
        cfg = config(
            CQ_GGADMM, rho=1.0, max_iters=3000, censor=CensorPolicy(1.0, 0.97), omega=0.97, init_bits=2
        )
        result = run(
            cfg,
            topo,
            objs,
            sinks=[lambda rec, row, state: dist.append(_max_distance(state, star))],
            keep_records=False,
        )
        hit = next((i + 1 for i, v in enumerate(dist) if v <= 1e-3), None)
        rate = fit_linear_rate(dist)
        c.check(hit is not None, f"max error <= 1e-3 at k={hit}, final {dist[-1]:.1e}")
        c.check(rate < 1.0, f"rate {rate:.4f} over {len(dist)} iters ({result.stop_reason})")
    _finish(c, acceptance_report)


def test_ac07_communication_ordering(acceptance_report):
    with Criterion("AC07", "bits and energy to gap 1e-3: CQ < C < GG", 120.0) as c:
        spec = parse_spec_text(DESK_SPEC)
        summary = run_experiment(spec, output_dir=None)
        reached = {o.variant: o.reached[1e-3] for o in summary.outcomes}
        c.check(all(r is not None for r in reached.values()), "all variants reach 1e-3")
        bits = {v: r.bits_cum for v, r in reached.items() if r is not None}
        energy = {v: r.energy_cum for v, r in reached.items() if r is not None}
        if len(bits) == 3:
            c.check(bits[CQ_GGADMM] < bits[C_GGADMM] < bits[GGADMM], f"bits {bits}")
            c.check(
                energy[CQ_GGADMM] < energy[C_GGADMM] < energy[GGADMM],
                "energy " + ", ".join(f"{v}={e:.3g}J" for v, e in energy.items()),
            )
    _finish(c, acceptance_report)


DESK_SPEC = """
task = linear
seed = 0
stop_gap = 1e-5
thresholds = 1e-3
output_dir =
parallel_variants = true
[dataset]
samples = 1200
dim = 50
noise_std = 0.1
[topology]
kind = random
n_heads = 10
n_tails = 10
p = 0.4
[algo[0]]
variant = ggadmm
rho = 5
max_iters = 3000
[algo[1]]
variant = c_ggadmm
rho = 5
max_iters = 3000
[algo[2]]
variant = cq_ggadmm
rho = 5
max_iters = 3000
"""


def test_ac08_dual_conservation(acceptance_report):
    with Criterion("AC08", "sum of duals and column-space residual at every k") as c:
        cases = [("quadratic", quadratic_problem()[:2], 1.0), ("synthetic", synthetic_problem(), 5.0)]
        for name, (topo, objs), rho in cases:
            m = incidence_set(topo).m_signed.astype(float)
            proj = m @ np.linalg.pinv(m)
            for variant in (GGADMM, C_GGADMM, CQ_GGADMM):
                worst_sum, worst_col = 0.0, 0.0

                def sink(rec, row, state):
                    nonlocal worst_sum, worst_col
                    alpha = state.alphas()
                    worst_sum = max(worst_sum, float(np.max(np.abs(alpha.sum(axis=0)))))
                    norm = np.linalg.norm(alpha)
                    if norm > 0:
                        worst_col = max(worst_col, np.linalg.norm(alpha - proj @ alpha) / norm)

                run(config(variant, rho=rho, max_iters=300), topo, objs, sinks=[sink], keep_records=False)
                c.check(
                    worst_sum <= 1e-9 and worst_col <= 1e-8,
                    f"{name}/{variant}: |sum| {worst_sum:.1e}, col {worst_col:.1e}",
                )
    _finish(c, acceptance_report)


def test_ac09_codec_round_trip(acceptance_report):
    with Criterion("AC09", "1000 payloads round-trip, b in 1..32, d in 1..257") as c:
        rng = np.random.default_rng(99)
        bad = 0
        bits_seen, dims_seen = set(), set()
        for i in range(1000):
            bits = i % 32 + 1
            d = int(rng.integers(1, 258)) if i >= 2 else (1, 257)[i]
            codes = rng.integers(0, 1 << bits, size=d, dtype=np.uint64)
            range_ = float(np.float32(rng.uniform(1e-6, 1e3)))
            payload = QuantizedPayload(codes, range_, bits)
            back = deserialize(serialize(payload))
            prev = rng.normal(size=d)
            same = back == payload and np.array_equal(
                reconstruct(back, prev.copy()), reconstruct(payload, prev)
            )
            bad += not same
            bits_seen.add(bits)
            dims_seen.add(d)
        c.check(bad == 0, f"{1000 - bad}/1000 identical")
        c.check(bits_seen == set(range(1, 33)) and {1, 257} <= dims_seen, "coverage of b and d")
    _finish(c, acceptance_report)


def test_ac10_determinism(acceptance_report, tmp_path):
    with Criterion("AC10", "same seed gives byte-identical CSVs") as c:
        base = DESK_SPEC.replace("stop_gap = 1e-5", "stop_gap = 1e-3").replace(
            "parallel_variants = true", "parallel_variants = false"
        )
        serial = parse_spec_text(base.replace("max_iters = 3000", "max_iters = 150"))
        threaded = parse_spec_text(
            "threads = 4\n" + base.replace("max_iters = 3000", "max_iters = 150").replace(
                "parallel_variants = false", "parallel_variants = true"
            )
        )
        outputs = []
        for i, spec in enumerate((serial, serial, threaded)):
            run_experiment(spec, tmp_path / str(i))
            outputs.append(
                {p.name: p.read_bytes() for p in sorted((tmp_path / str(i)).glob("*.csv"))}
            )
        c.check(len(outputs[0]) >= 8, f"{len(outputs[0])} csv files")
        c.check(outputs[0] == outputs[1], "serial rerun identical")
        c.check(outputs[0] == outputs[2], "threaded run identical")
    _finish(c, acceptance_report)


def test_ac11_energy_spot_value(acceptance_report):
    with Criterion("AC11", "energy spot value 5.1e-5 J") as c:
        model = EnergyModel(noise_psd=1e-6, slot_time=1e-3, distance=1.0)
        e = transmission_energy(1600, model, 2e5)
        rel = abs(e - 5.1e-5) / 5.1e-5
        c.check(rel <= 1e-12, f"E = {e!r}, rel err {rel:.1e}")
    _finish(c, acceptance_report)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
