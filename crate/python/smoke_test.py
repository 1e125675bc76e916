"""Quick end-to-end check of the Python bindings.

Build and install the extension first:

    pip install --no-build-isolation ./crates/python
"""

import vkfem_py as vk


def main():
    mesh = vk.Mesh.square().refined(2)
    stats = mesh.statistics()
    assert stats["n_vertices"] == 41 and stats["n_triangles"] == 64, stats
    assert abs(mesh.h_max - 0.25) < 1e-12

    rows, cols, vals = mesh.stiffness()
    entries = {(r, c): v for r, c, v in zip(rows, cols, vals)}
    assert all(abs(v - entries[(c, r)]) < 1e-9 for (r, c), v in entries.items())

    problem = vk.Problem.preset("example1")
    sol = vk.solve(problem, 3)
    print(sol)
    assert sol.converged, sol.status
    assert sol.outer_iterations <= 4 and sol.final_change < 1e-9
    chi = [problem.obstacle(x, y) for x, y in sol.mesh.vertices]
    gap = min(u - c for u, c in zip(sol.u_vertices, chi))
    assert gap > -1e-8, gap
    contact = vk.coincidence_set(sol, problem, 1e-8)
    assert set(contact) <= set(range(len(chi)))
    assert sol.history()[-1]["phase"] == "von_karman"

    deep = vk.Problem.custom("square", "-1e6", "0")
    assert max(abs(x) for x in vk.solve(deep, 2).u) < 1e-12

    rates = vk.eoc([4.0, 1.0, 0.25])
    assert len(rates) == 2 and all(abs(r - 2.0) < 1e-12 for r in rates)

    report = vk.check_smallness(vk.Problem.preset("example3"), grid=201)
    assert report["violated"]
    assert abs(report["ratio_l2"] - 1 / 36) < 5e-4

    study = vk.refinement_study(problem, 4)
    print(study)
    assert study.all_converged and len(study.levels()) == 4

    try:
        vk.Problem.custom("square", "x +")
    except ValueError as err:
        print("parse error reported:", err)
    else:
        raise AssertionError("bad expression accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
