"""Smoke test for the jamgame_py extension module."""

import json
import math

import jamgame_py as jg


def main():
    game = jg.Game(variance=2.0)
    assert abs(game.tail_second_moment(1.0) - 1.8378) < 1e-3

    eq = jg.solve_nonsensing(game)
    assert abs(eq.phi_star - 0.7887) < 1e-3, eq
    assert eq.xhat == (0.0, 0.0)
    assert json.loads(eq.to_json())["phi_star"] == eq.phi_star
    ok, _ = jg.verify_saddle(game, eq, points=41)
    assert ok

    assert jg.solve_nonsensing(jg.Game(variance=1.0)).phi_star == 0.0

    unit = jg.Game(variance=1.0)
    out = jg.solve_pga_ccp(unit)
    assert out.certificate.certified, out.certificate
    p = out.point
    assert abs(p.alpha - 0.0760) < 2e-2 and abs(p.beta - 0.3172) < 2e-2, p

    gda = jg.solve_gda(unit, init=jg.ReactivePoint(1.0, -1.0, 0.5, 0.5))
    assert gda.certificate.certified and out.iterations <= gda.iterations

    gx, gt = jg.gradients(unit, p)
    assert math.hypot(*gx) <= 1e-5
    assert jg.certify(unit, p.mirrored()).certified

    sim = jg.simulate_nonsensing(game, eq, n=200_000, seed=3)
    assert abs(sim.empirical_cost - eq.value) <= 4 * sim.std_error, (sim.empirical_cost, eq.value)
    again = jg.simulate_nonsensing(game, eq, n=200_000, seed=3)
    assert again.to_json() == sim.to_json()

    try:
        jg.Game(variance=-1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative variance accepted")

    print("jamgame_py smoke test passed")


if __name__ == "__main__":
    main()
