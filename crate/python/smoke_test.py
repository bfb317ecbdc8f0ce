"""Exercises every binding once. Run after `pip install --no-build-isolation -e crates/python`."""

import math
import tempfile

import ppgage


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    grid = ppgage.LabelGrid([40.0, 50.0, 60.0], [1.0, 2.0, 3.0])
    assert grid.allocate(6) == [1, 2, 3]
    assert grid.pseudo_labels(6) == [40.0, 50.0, 50.0, 60.0, 60.0, 60.0]

    est = ppgage.LabelGrid.estimate([50.0, 51.0, 51.0, 55.0], bandwidth=0.5)
    assert est.labels[0] == 50.0 and est.labels[-1] == 55.0
    assert close(sum(est.probs), 1.0)

    assert ppgage.soft_sort([3.0, 1.0, 2.0], epsilon=1e-6) == [1.0, 2.0, 3.0]
    assert ppgage.isotonic_regression([3.0, 1.0]) == [2.0, 2.0]
    g = ppgage.soft_sort_vjp([3.0, 1.0, 2.0], [1.0, 0.0, 0.0], epsilon=1e-6)
    assert g == [0.0, 1.0, 0.0]

    loss = ppgage.dist_loss(
        [41.0, 52.0, 48.0, 63.0, 58.0, 61.0],
        [40.0, 50.0, 50.0, 60.0, 60.0, 60.0],
        grid,
        epsilon=1e-6,
    )
    assert close(loss.distributional_mae, 11.0 / 6.0, 1e-12)
    assert len(loss.grad) == 6

    cohort = ppgage.synth_cohort(200, seed=3, serial_fraction=0.1)
    assert len({r["id"] for r in cohort}) == 200
    assert len(cohort) == 220
    assert len(cohort[0]["waveform"]) == 100

    model = ppgage.Model.init(seed=1, size="small")
    preds = model.predict([r["waveform"] for r in cohort[:5]])
    assert len(preds) == 5 and all(math.isfinite(p) for p in preds)
    sal = model.saliency(cohort[0]["waveform"])
    assert len(sal) == 100 and max(sal) == 1.0

    times = [r["event_time"] for r in cohort]
    events = [r["event"] for r in cohort]
    fit = ppgage.cox_fit(times, events, [[r["age"]] for r in cohort], ["age"])
    assert fit.converged and fit.hazard_ratios[0] > 0
    km = ppgage.kaplan_meier(times, events)
    assert all(a >= b for a, b in zip(km["survival"], km["survival"][1:]))
    stat, p = ppgage.log_rank(times, events, times, events)
    assert stat == 0.0 and p == 1.0

    assert ppgage.gap_stratum(10.0, 9.0) == "overestimation"
    assert ppgage.serial_group(10.0, 0.0, 9.0) == "G3"

    config = """
[cohort]
n_subjects = 200
[train]
epochs = 2
dist_warmup_epochs = 1
"""
    with tempfile.TemporaryDirectory() as out:
        missing = ppgage.run_pipeline(config, out_dir=out, seed=5)
        assert missing == []
        reloaded = ppgage.Model.load(f"{out}/checkpoint_dist.bin")
        assert reloaded.parameter_count == model.parameter_count

    try:
        ppgage.soft_sort([], 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("empty input should raise ValueError")
    print("python smoke test passed")


if __name__ == "__main__":
    main()
