from tetopt import plotting
from tetopt.quality import mesh_stats


def test_figures_are_written(tmp_path, cube3):
    s = mesh_stats(cube3)
    plotting.dihedral_histogram([s, s], ["a", "b"], tmp_path / "h.png")
    plotting.q_history([10.0, 20.0, 31.0], tmp_path / "q.png", theta_lim=30.0)
    plotting.energy_trace([0.0, 1.0, 2.0], [3.0, 2.0, 1.5], tmp_path / "e.png")
    for name in ("h.png", "q.png", "e.png"):
        data = (tmp_path / name).read_bytes()
        assert data[:8] == b"\x89PNG\r\n\x1a\n"
