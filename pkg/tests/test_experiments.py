import numpy as np
import pytest

from npmlmix import (
    CensorMask,
    CensoringDesign,
    FitOptions,
    IdentityLocation,
    InvalidArgumentError,
    MixingMeasure,
    ModelSpec,
    TimeDesign,
)
from npmlmix.experiments import (
    CSV_HEADER,
    ExperimentConfig,
    ReportRow,
    gnuplot_script,
    read_report_csv,
    run_censoring_experiment,
    run_consistency_experiment,
    run_contrast_experiment,
    run_sieve_experiment,
    write_report_csv,
)

FAST = FitOptions(tol_rel_loglik=1e-12, max_em_iters=3000, refine_grid=17, max_refinements=6)


def location_config(kind, **kwargs):
    spec = ModelSpec(
        p=1,
        n=2,
        sigma=0.4,
        f=IdentityLocation(),
        time_design=TimeDesign(((0.0, 1.0), (1.0, 2.0))),
    )
    truth = MixingMeasure(np.array([[0.7], [1.8]]), [0.5, 0.5])
    base = dict(
        kind=kind,
        spec=spec,
        truth=truth,
        box=((0.0, 2.5),),
        initial_counts=(5,),
        n_schedule=(40,),
        seeds=(1, 2),
        options=FAST,
    )
    base.update(kwargs)
    return ExperimentConfig(**base)


class TestConfigValidation:
    def test_schedules_must_increase(self):
        with pytest.raises(InvalidArgumentError):
            location_config("consistency", n_schedule=(100, 50))

    def test_seeds_distinct(self):
        with pytest.raises(InvalidArgumentError):
            location_config("consistency", seeds=(1, 1))

    def test_sieve_needs_nested_schedule(self):
        with pytest.raises(InvalidArgumentError):
            location_config("sieve", m_schedule=(4, 6))
        location_config("sieve", m_schedule=(4, 8, 16))

    def test_unknown_kind(self):
        with pytest.raises(InvalidArgumentError):
            location_config("bootstrap")


class TestConsistency:
    def test_rows_shape_and_order(self):
        cfg = location_config("consistency", n_schedule=(20, 40), seeds=(1, 2, 3))
        rows = run_consistency_experiment(cfg)
        assert len(rows) == 6
        keys = [(r.N, r.seed) for r in rows]
        assert keys == sorted(keys)
        assert all(r.distance_to_truth >= 0 for r in rows)
        assert all(r.experiment == "consistency" for r in rows)

    def test_deterministic(self):
        cfg = location_config("consistency", n_schedule=(25,), seeds=(4,))
        a = run_consistency_experiment(cfg)
        b = run_consistency_experiment(cfg)
        assert a[0].final_loglik == b[0].final_loglik
        assert a[0].distance_to_truth == b[0].distance_to_truth


class TestSieve:
    def test_gap_structure(self):
        cfg = location_config(
            "sieve",
            n_schedule=(120,),
            seeds=(5,),
            m_schedule=(4, 8, 16),
            options=FitOptions(tol_rel_loglik=1e-13, max_em_iters=100000, refine_grid=17),
        )
        rows = run_sieve_experiment(cfg)
        ref = [r for r in rows if r.experiment == "sieve/npml"]
        sieve = sorted([r for r in rows if r.experiment == "sieve"], key=lambda r: r.m)
        assert len(ref) == 1 and len(sieve) == 3
        gaps = [ref[0].final_loglik - r.final_loglik for r in sieve]
        assert all(g >= -1e-9 for g in gaps)
        assert gaps[0] >= gaps[1] >= gaps[2] - 1e-12
        assert gaps[-1] <= gaps[0]


class TestCensoring:
    def test_three_fits_and_exact_full_mask(self):
        design = CensoringDesign(((CensorMask(2, (0,)), 0.5), (CensorMask.full(2), 0.5)))
        cfg = location_config("censoring", n_schedule=(40,), seeds=(6,), censoring=design)
        rows = run_censoring_experiment(cfg)
        kinds = sorted(r.experiment for r in rows)
        assert kinds == ["censoring/full-mask", "censoring/random", "censoring/uncensored"]
        assert all(r.distance_to_truth >= 0 for r in rows)

    def test_empty_mask_only_design_flat_likelihood(self):
        design = CensoringDesign(((CensorMask.empty(2), 1.0),))
        cfg = location_config("censoring", n_schedule=(10,), seeds=(7,), censoring=design)
        rows = run_censoring_experiment(cfg)
        random_row = next(r for r in rows if r.experiment == "censoring/random")
        # no information: every mixture gives density exp(0); the fit stays flat
        assert random_row.final_loglik == pytest.approx(0.0, abs=1e-12)


class TestContrast:
    def test_maxima_within_tolerance(self):
        cfg = location_config(
            "contrast",
            n_schedule=(60,),
            seeds=(8,),
            options=FitOptions(tol_rel_loglik=1e-15, max_em_iters=500000, prune_eps=1e-4, refine_grid=17),
            competitors=25,
        )
        rows, maxima = run_contrast_experiment(cfg)
        assert set(maxima) == {"log", "t-1", "1-1/t"}
        assert all(v <= cfg.options.refine_tol for v in maxima.values())
        assert len(rows) == 1


class TestReports:
    def test_csv_roundtrip(self, tmp_path):
        rows = [
            ReportRow("consistency", 100, None, 3, -1.25, 0.07, 4, 1.0000001, 12.5),
            ReportRow("sieve", 400, 8, 1, -1.5, 0.1, 9, 1.1, 80.0),
        ]
        path = tmp_path / "report.csv"
        write_report_csv(rows, path)
        again = read_report_csv(path)
        assert again == rows
        header = path.read_text().splitlines()[0]
        assert header == ",".join(CSV_HEADER)

    def test_byte_identical_apart_from_walltime(self, tmp_path):
        cfg = location_config("consistency", n_schedule=(15,), seeds=(9,))
        paths = []
        for name in ("r1.csv", "r2.csv"):
            rows = run_consistency_experiment(cfg)
            p = tmp_path / name
            write_report_csv(rows, p)
            paths.append(p)
        strip = lambda p: ["," .join(line.split(",")[:-1]) for line in p.read_text().splitlines()]
        assert strip(paths[0]) == strip(paths[1])

    def test_gnuplot_script_references_csv(self):
        text = gnuplot_script("out.csv", "consistency")
        assert "out.csv" in text and "plot" in text

    def test_report_row_requires_finite_fields(self):
        with pytest.raises(InvalidArgumentError):
            ReportRow("consistency", 10, None, 1, float("nan"), 0.0, 1, 1.0, 1.0)


class TestParallelExecution:
    def test_thread_cap_matches_serial(self, monkeypatch):
        cfg = location_config("consistency", n_schedule=(20, 40), seeds=(1, 2))
        serial = run_consistency_experiment(cfg)
        monkeypatch.setenv("NPML_THREADS", "2")
        parallel = run_consistency_experiment(cfg)
        for a, b in zip(serial, parallel):
            assert (a.N, a.seed, a.final_loglik, a.distance_to_truth, a.atom_count) == (
                b.N,
                b.seed,
                b.final_loglik,
                b.distance_to_truth,
                b.atom_count,
            )
