"""Smoke test for the fdlab extension module.

Build first:  pip install --no-build-isolation -e crates/python
"""

import math

import fdlab


def close(a, b, tol):
    assert abs(a - b) <= tol, (a, b, tol)


def main():
    ps = fdlab.ParamSet(3, 0.0, 0.0, p=2.0)
    close(ps.alpha, 1.0, 0.0)
    close(ps.n, 3.0, 0.0)
    assert ps.region() == "Symmetry"

    w = fdlab.ParamSet(3, -1.0, -2.0, p=2.0)
    close(w.alpha, 1.5, 1e-15)
    close(w.n, 10.0 / 3.0, 1e-12)

    try:
        fdlab.ParamSet(3, 1.0, -2.0, p=2.0)
    except ValueError as e:
        assert "inadmissible" in str(e)
    else:
        raise AssertionError("inadmissible parameters accepted")

    b = fdlab.profile("barenblatt_star", ps, [0.0, 1.0])
    close(b[0], 1.0, 1e-15)

    grid = fdlab.Grid(w, 20.0, 200)
    bar = fdlab.barenblatt(grid, w)
    e_rel, i_rel = fdlab.relative_entropy(grid, w, bar)
    assert abs(e_rel) < 1e-12 and abs(i_rel) < 1e-10

    u0 = fdlab.squeezed_datum(grid, w, 0.5)
    close(fdlab.mass(grid, u0), fdlab.mass(grid, bar), 1e-10 * fdlab.mass(grid, bar))
    rows = fdlab.run_flow(grid, w, u0, 2.0, samples=10)
    assert len(rows) == 11
    for a, c in zip(rows, rows[1:]):
        assert c["E_rel"] <= a["E_rel"]
        close(c["mass"], rows[0]["mass"], 1e-10 * rows[0]["mass"])

    u = fdlab.ParamSet(3, 0.0, 0.0, m=0.8)
    lam = fdlab.spectrum(u, 0, count=2)
    close(lam[0], 2.0 * u.mu, 1e-2 * u.mu)

    alpha, beta = fdlab.threshold(3, -1.0, 1.5)
    close(alpha, 2.0 - math.sqrt(2.0), 1e-3)

    cells = fdlab.region_map(3, 1.5, (-3.0, -0.1), (-3.0, 0.0), steps=10)
    assert len(cells) == 100
    assert {c[2] for c in cells} >= {"Symmetry", "SymmetryBreaking", "Inadmissible"}

    [(cid, passed, line)] = fdlab.acceptance(["A11"])
    assert cid == "A11" and passed, line
    print(line)
    print("smoke test passed")


if __name__ == "__main__":
    main()
