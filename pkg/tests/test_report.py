import numpy as np

from oqcontrol.globalopt import TrialResult, write_trace_csv, write_trials_csv
from oqcontrol.krotov import KrotovConfig, run_method
from oqcontrol.model import case1_params
from oqcontrol.problem import OverlapProblem
from oqcontrol.report import render_directory

from conftest import RHO_MIXED, TARGET_GROUND

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def test_render_directory(tmp_path):
    problem = OverlapProblem(case1_params(), RHO_MIXED, TARGET_GROUND, 20.0, 200)
    res = run_method(problem, KrotovConfig(max_iters=3), (0.0, 0.0, 1.0))
    res.write_csv(tmp_path / "r_history.csv")
    res.process.grid.write_csv(tmp_path / "r_control.csv")
    res.process.rho.write_csv(tmp_path / "r_trajectory.csv", TARGET_GROUND)
    trials = [TrialResult(seed=s, best_x=np.zeros(3), best_f=1.0 + s, nfev=5, metric=0.1 * s,
                          trace=[(1, 2.0), (4, 1.0 + s)]) for s in range(2)]
    write_trials_csv(trials, tmp_path / "V1_trials.csv")
    write_trace_csv(trials[0], tmp_path / "V1_best_trace.csv")
    (tmp_path / "batch.csv").write_text(
        "index,theta,phi,I_initial,I,cauchy,iterations,status\n"
        "0,0,0,0.3,1e-4,3,1,target\n1,1,1,0.3,2e-4,5,2,target\n", encoding="utf-8")
    (tmp_path / "notes.csv").write_text("a,b\n1,2\n", encoding="utf-8")
    written = render_directory(tmp_path)
    names = sorted(p.rsplit("/", 1)[-1] for p in map(str, written))
    assert names == ["V1_best_trace.png", "V1_trials.png", "batch.png", "r_control.png",
                     "r_history.png", "r_trajectory.png"]
    for p in written:
        with open(p, "rb") as fh:
            assert fh.read(8) == PNG_MAGIC
