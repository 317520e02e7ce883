import os
import struct

import numpy as np
import pandas as pd
import pytest
import yaml

from hetres import energy
from hetres.dynamics import SpikeRaster, StateMatrix, simulate_lif
from hetres.errors import ConfigError, CorruptionError, UnsupportedVersionError
from hetres.harness import cli, container, pipeline, report
from hetres.harness.config import RunConfig, dump_config, from_dict, load_config, override
from hetres.stimgen import synthesize
from hetres.topology import NetworkSpec, build_network

TINY = dict(
    network=dict(N=10, h=[0.0, 10.0]),
    tasks=dict(k_set=[1, 2], d_set=[1, 2], delta_count=3),
    split=dict(warmup=100, train_factor=2.0, test_factor=5.0),
    similarity_window=2000,
    seed=3,
)


def tiny(**kw):
    d = {k: (dict(v) if isinstance(v, dict) else v) for k, v in TINY.items()}
    for k, v in kw.items():
        if isinstance(v, dict) and k in d:
            d[k].update(v)
        else:
            d[k] = v
    return from_dict(d)


@pytest.fixture(scope="module")
def tiny_df():
    return pipeline.run_benchmark(tiny())


class TestConfig:
    def test_defaults_mirror_baseline(self):
        c = RunConfig()
        assert c.network["h"] == [0.0, 0.1, 1.0, 10.0] and c.lam == 1e-6 and c.split.trials == 3
        specs = c.network_specs()
        assert len(specs) == 4 and all(s.N == 250 for s in specs)

    def test_baseline_cardinality(self):
        c = RunConfig()
        assert len(c.network_specs()) * len(pipeline.task_set(c)) == 4 * 882

    def test_yaml_round_trip(self, tmp_path):
        c = tiny()
        p = tmp_path / "c.yaml"
        p.write_text(dump_config(c))
        assert load_config(p) == c

    def test_unknown_keys(self):
        with pytest.raises(ConfigError):
            from_dict(dict(bogus=1))
        with pytest.raises(ConfigError):
            from_dict(dict(network=dict(Q=1)))
        with pytest.raises(ConfigError):
            from_dict(dict(split=dict(dtt=0.1)))
        with pytest.raises(ConfigError):
            from_dict(dict(model="HH"))

    def test_sweep_axes(self):
        c = tiny()
        s = c.with_axis("N", [50, 100, 250, 500]).network_specs()
        assert len(s) == 4 * 2
        with pytest.raises(ConfigError):
            c.with_axis("colour", [1])
        assert c.network["N"] == 10  # with_axis does not mutate

    def test_replicates_and_override(self):
        c = override(tiny(replicates=3), seed=9, workers=None)
        specs = c.network_specs()
        assert c.seed == 9 and len(specs) == 6 and {s.replicate for s in specs} == {0, 1, 2}


class TestContainer:
    def test_state_f64_bit_identical(self, tmp_path):
        X = np.random.default_rng(0).uniform(size=(7, 33))
        S = StateMatrix(X, 0.01, dict(model="LI"))
        container.persist_state(tmp_path / "s.hrsv", S)
        T = container.load_state(tmp_path / "s.hrsv")
        assert np.array_equal(T.X, X) and T.dt == 0.01 and T.meta["model"] == "LI"

    def test_state_f16_bound(self, tmp_path):
        X = np.random.default_rng(1).uniform(1e-3, 1, size=(5, 100))
        container.persist_state(tmp_path / "s.hrsv", StateMatrix(X, 0.01), precision="f16")
        T = container.load_state(tmp_path / "s.hrsv")
        assert np.max(np.abs(T.X - X)) <= 2.0 ** -11

    def test_raster_stimulus_network(self, tmp_path):
        net = build_network(NetworkSpec(N=20, h=1.0, seed=2))
        stim = synthesize("lorenz", 10.0, dt_sim=0.01, seed=0)
        r = simulate_lif(net, stim, L=300)
        for name, obj in dict(r=r, s=stim, n=net).items():
            container.persist_state(tmp_path / f"{name}.hrsv", obj)
        r2 = container.load_state(tmp_path / "r.hrsv")
        assert np.array_equal(r2.neurons, r.neurons) and np.array_equal(r2.steps, r.steps)
        s2 = container.load_state(tmp_path / "s.hrsv")
        assert np.array_equal(s2.components, stim.components) and s2.time_scale == stim.time_scale
        n2 = container.load_state(tmp_path / "n.hrsv")
        assert n2.spec == net.spec and np.array_equal(n2.W.toarray(), net.W.toarray())
        assert np.array_equal(n2.tau, net.tau) and np.array_equal(n2.is_exc, net.is_exc)

    def test_truncated(self, tmp_path):
        p = tmp_path / "s.hrsv"
        container.persist_state(p, StateMatrix(np.ones((3, 4)), 0.1))
        b = p.read_bytes()
        for cut in (3, 10, len(b) // 2, len(b) - 1):
            p.write_bytes(b[:cut])
            with pytest.raises(CorruptionError):
                container.load_state(p)

    def test_bit_flip(self, tmp_path):
        p = tmp_path / "s.hrsv"
        container.persist_state(p, StateMatrix(np.ones((3, 4)), 0.1))
        b = bytearray(p.read_bytes())
        b[-12] ^= 1
        p.write_bytes(bytes(b))
        with pytest.raises(CorruptionError):
            container.load_state(p)

    def test_version(self, tmp_path):
        p = tmp_path / "s.hrsv"
        container.persist_state(p, StateMatrix(np.ones((3, 4)), 0.1))
        b = bytearray(p.read_bytes())
        b[4:6] = struct.pack("<H", 99)
        body = bytes(b[:-8])
        p.write_bytes(body + container._digest(body))
        with pytest.raises(UnsupportedVersionError):
            container.load_state(p)

    def test_unsupported_type(self, tmp_path):
        with pytest.raises(TypeError):
            container.persist_state(tmp_path / "x", object())


class TestPipeline:
    def test_minimal_run(self):
        cfg = tiny(network=dict(h=0.0), tasks=dict(k_set=[1], d_set=[1], delta_count=1, delta_range=[0.5, 0.5]))
        df = pipeline.run_benchmark(cfg)
        assert len(df) == 1 and df["status"].iloc[0] == "ok"
        assert -1 < df["score_mean"].iloc[0] <= 1

    def test_table(self, tiny_df):
        df = tiny_df
        assert len(df) == 2 * 12 and (df["status"] == "ok").all()
        assert list(df.columns) == pipeline.ROW_COLUMNS + ["score_t0", "score_t1", "score_t2"]
        t = df[["score_t0", "score_t1", "score_t2"]].to_numpy()
        np.testing.assert_allclose(df["score_mean"], t.mean(axis=1), rtol=1e-12)
        assert (df["score_mean"] <= 1).all() and (df["overlap"] <= 1 + 1e-9).all()
        ident = df[(df["delta"] == 0) & (df["d"] == 1)]
        assert (ident["complexity"] == 0).all()

    def test_deterministic(self, tiny_df):
        again = pipeline.run_benchmark(tiny())
        pd.testing.assert_frame_equal(tiny_df, again, check_exact=True)

    def test_seed_changes_results(self, tiny_df):
        other = pipeline.run_benchmark(tiny(seed=4))
        assert not np.array_equal(other["score_mean"], tiny_df["score_mean"])

    def test_workers_and_resume(self, tmp_path):
        cfg = tiny()
        a = pipeline.run_benchmark(cfg, out=str(tmp_path / "a"), workers=1)
        b = pipeline.run_benchmark(cfg, out=str(tmp_path / "b"), workers=2)
        pd.testing.assert_frame_equal(a, b, check_exact=True)
        ra = (tmp_path / "a" / "results.csv").read_bytes()
        assert ra == (tmp_path / "b" / "results.csv").read_bytes()
        # crash-resume: drop one checkpoint and resume
        parts = sorted((tmp_path / "a" / "parts").iterdir())
        keep = parts[0].stat().st_mtime_ns
        parts[1].unlink()
        c = pipeline.run_benchmark(cfg, out=str(tmp_path / "a"), resume=True)
        assert parts[0].stat().st_mtime_ns == keep
        assert (tmp_path / "a" / "results.csv").read_bytes() == ra
        pd.testing.assert_frame_equal(a, c, check_exact=True)

    def test_results_file_carries_config(self, tmp_path):
        cfg = tiny(network=dict(h=0.0))
        pipeline.run_benchmark(cfg, out=str(tmp_path))
        head = [l[2:] for l in (tmp_path / "results.csv").read_text().splitlines() if l.startswith("# ")]
        meta = yaml.safe_load("\n".join(head))
        assert meta["seed"] == 3 and meta["network"]["N"] == 10
        tasks = pd.read_csv(tmp_path / "tasks.csv", comment="#")
        assert len(tasks) == 12 and set(tasks["tier"]) <= {"easy", "medium", "hard"}

    def test_error_rows_do_not_stop_sweep(self, monkeypatch):
        real = pipeline.evaluate_network

        def flaky(cfg, spec, ctx):
            if spec.h > 0:
                raise RuntimeError("boom")
            return real(cfg, spec, ctx)

        monkeypatch.setattr(pipeline, "evaluate_network", flaky)
        df = pipeline.run_benchmark(tiny())
        err = df[df["status"] == "error"]
        assert len(err) == 1 and "boom" in err["error"].iloc[0]
        assert (df[df["h"] == 0]["status"] == "ok").sum() == 12

    def test_sweep_J_with_zero(self):
        df = pipeline.sweep(tiny(network=dict(h=0.0)), "J", [0.0, 1.0])
        assert (df["status"] == "ok").all() and set(df["J"]) == {0.0, 1.0}

    def test_lif_rows_carry_atp(self):
        df = pipeline.run_benchmark(tiny(model="LIF", network=dict(h=1.0)))
        assert (df["status"] == "ok").all()
        assert (df["atp_total"] > 0).all() and (df["mean_rate"] > 0).all()
        r = df.iloc[0]
        c = energy.atp_cost(10, 0.1, r["mean_rate"], 1.0, pipeline.plan_for(tiny(), 10).total_steps * 0.01)
        assert r["atp_total"] == pytest.approx(c.total, rel=1e-12)

    def test_full_state_precision(self):
        df = pipeline.run_benchmark(tiny(state_precision="full", network=dict(h=0.0)))
        assert (df["status"] == "ok").all()


class TestReport:
    def test_kinds(self, tiny_df, tmp_path):
        for kind in report.KINDS:
            t = report.report(tiny_df, kind, str(tmp_path))
            assert {"x", "y", "group", "err"} <= set(t.columns)
            assert (tmp_path / f"{kind}.csv").exists()

    def test_scatter_layout(self, tiny_df):
        t = report.scatter(tiny_df)
        assert len(t) == 12 and set(t["group"]) == {"h=10,lognormal"}
        hom = tiny_df[tiny_df["h"] == 0].set_index(["k", "delta", "d"])["score_mean"]
        for _, r in t.iterrows():
            assert r["x"] == hom.loc[(r["k"], r["delta"], r["d"])]

    def test_tiers_aggregation(self, tiny_df):
        t = report.tiers(tiny_df, axis="N")
        for _, r in t.iterrows():
            h = float(r["h"])
            sel = tiny_df[(tiny_df["h"] == h) & (tiny_df["tier"] == r["tier"])]
            assert r["y"] == pytest.approx(sel["score_mean"].mean(), rel=1e-12)

    def test_frontier_pass_through(self, tiny_df):
        nc = report.network_costs(tiny_df)
        f = report.frontier(tiny_df)
        ref = energy.min_cost_frontier(zip(nc["score"], nc["cost"]), 20)
        assert np.array_equal(f["y"].to_numpy(), ref[:, 1])

    def test_errors(self, tiny_df):
        with pytest.raises(ValueError):
            report.report(tiny_df.iloc[:0], "profile")
        with pytest.raises(ValueError):
            report.report(tiny_df, "pie")


class TestCLI:
    def test_stim(self, tmp_path, capsys):
        assert cli.main(["stim", "--duration", "50", "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert '"compound_freq"' in out and (tmp_path / "stimulus_lorenz.hrsv").exists()

    def test_bench_report_analyze_energy(self, tmp_path, capsys):
        cfg = tmp_path / "c.yaml"
        cfg.write_text(dump_config(tiny(network=dict(N=10, h=[0.0, 10.0]))))
        out = tmp_path / "run"
        assert cli.main(["bench", "--config", str(cfg), "--out", str(out)]) == 0
        res = str(out / "results.csv")
        assert cli.main(["report", "--results", res, "--kind", "tiers", "--out", str(out)]) == 0
        assert (out / "tiers.csv").exists()
        assert cli.main(["analyze", "--results", res, "--out", str(out)]) == 0
        assert (out / "alignment.csv").exists()
        assert cli.main(["energy", "--results", res]) == 0
        assert cli.main(["energy", "--N", "100", "--nu", "5"]) == 0
        assert "atp" in capsys.readouterr().out
        # resume reuses the checkpoints
        assert cli.main(["bench", "--config", str(cfg), "--out", str(out), "--resume"]) == 0

    def test_sweep_and_seed(self, tmp_path):
        cfg = tmp_path / "c.yaml"
        cfg.write_text(dump_config(tiny(network=dict(N=10, h=0.0))))
        assert cli.main(["sweep", "--config", str(cfg), "--axis", "Jn", "--values", "0,0.1",
                         "--seed", "5", "--out", str(tmp_path / "s")]) == 0
        df = pipeline.read_results(tmp_path / "s" / "results.csv")
        assert set(df["Jn"]) == {0.0, 0.1}

    def test_bad_axis(self, tmp_path):
        with pytest.raises(ConfigError):
            cli.main(["sweep", "--axis", "nope", "--values", "1", "--out", str(tmp_path)])
