"""Smoke test for the blockspin_py extension module."""

import math

import blockspin_py as bs


def main():
    g = bs.Geometry(1, 3, 1, 2)
    assert g.num_sites == 9 and abs(g.spacing - 1 / 3) < 1e-15
    assert g.coarse(1).num_sites == 3
    assert sorted(p[0] for p in g.image_points([1], 1)) == [-2, 1, 16]

    try:
        bs.Geometry(1, 4, 1, 2)
    except ValueError:
        pass
    else:
        raise AssertionError("even L accepted")

    seq = bs.a_sequence(1.0, 3, 40)
    assert abs(seq[1] - 0.9) < 1e-15 and abs(seq[-1] - 8 / 9) < 1e-15

    p = bs.Params(1.0, 0.0, 3)
    kernel = bs.green_kernel(bs.Geometry(1, 3, 1, 1), p)
    assert all(v > 0 for row in kernel for v in row)

    g2 = bs.Geometry(1, 3, 2, 2)
    assert bs.rg_step(g2, p, 1) <= 1e-9
    assert bs.telescope(g2, p) <= 1e-9
    assert bs.c_expansion(g2, p, 1) <= 1e-10
    assert bs.positivity(g, p) > 0

    rows = bs.images_residuals(g, p, 4)
    assert rows[-1]["g_median"] < rows[0]["g_median"]
    assert math.isfinite(bs.strip_sup(1, 1, p))

    rate, _ = bs.fit(bs.profile(bs.Geometry(1, 3, 1, 3), p))
    assert rate > 0
    print("blockspin_py smoke test ok")


if __name__ == "__main__":
    main()
